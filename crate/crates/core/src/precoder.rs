//! Quantization-aware transmit covariance design.
//!
//! The pipeline is: desired box beampattern `d`, a relaxed covariance fit
//! `min_{R ⪰ 0, diag R = 1, τ} L(R, τ)`, arcsine inversion
//! `R̂_x = csin(π/2 R*)`, nearest-PSD recovery and an eigen-factorization
//! `W° W°^H = R_x°`.
//!
//! The relaxed problem is solved by projected gradient descent on
//! `f(R) = min_τ L(R, τ)`. The optimal `τ` has a closed form, so by the
//! envelope theorem `∇f(R) = ∇_R L(R, τ*(R))`. Projection onto
//! `{PSD} ∩ {unit diagonal}` uses Dykstra's alternating projections.

use std::f64::consts::{FRAC_PI_2, PI};

use log::{debug, info};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::frontend::{arcsine_covariance, normalize_covariance};
use crate::linalg::{csin_elementwise, hermitian_eig, CMatrix, EigenDecomposition, HermitianMatrix};
use crate::scene::{ris_direction, steering_vector};

/// Full width of each box lobe in the desired pattern.
pub const BOX_WIDTH_DEG: f64 = 10.0;

/// Strictly increasing angles (radians) in `[-π/2, π/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    angles: Vec<f64>,
}

impl AngularGrid {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.len() < 2 {
            return Err(Error::Config("angular grid needs at least two angles".into()));
        }
        let fov = FRAC_PI_2 + 1e-12;
        if angles.iter().any(|a| !a.is_finite() || a.abs() > fov) {
            return Err(Error::Config("grid angles must lie in [-90°, 90°]".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid angles must be strictly increasing".into()));
        }
        Ok(Self { angles })
    }

    /// `points` equally spaced angles covering `[-90°, 90°]`.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config("angular grid needs at least two angles".into()));
        }
        let step = 180.0 / (points - 1) as f64;
        Self::new((0..points).map(|i| (-90.0 + step * i as f64).to_radians()).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    fn contains(&self, theta: f64) -> bool {
        theta >= self.angles[0] - 1e-12 && theta <= *self.angles.last().unwrap() + 1e-12
    }
}

/// Desired transmit pattern sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredBeampattern {
    pub grid: AngularGrid,
    pub values: Vec<f64>,
}

fn add_box(values: &mut [f64], grid: &AngularGrid, center: f64, height: f64) {
    let half = (BOX_WIDTH_DEG / 2.0).to_radians() + 1e-9;
    for (v, &theta) in values.iter_mut().zip(grid.angles()) {
        if (theta - center).abs() <= half {
            *v += height;
        }
    }
}

/// Boxes of height `(1-β)/P` at the `P` targets and `β` toward the RIS.
pub fn desired_beampattern(
    target_angles: &[f64],
    ris_angle: f64,
    beta: f64,
    grid: &AngularGrid,
) -> Result<DesiredBeampattern> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
    }
    if target_angles.is_empty() {
        return Err(Error::Config("at least one target is required".into()));
    }
    for &a in target_angles.iter().chain(std::iter::once(&ris_angle)) {
        if !grid.contains(a) {
            return Err(Error::Config(format!("angle {:.2}° outside grid span", a.to_degrees())));
        }
    }
    let mut values = vec![0.0; grid.len()];
    let per_target = (1.0 - beta) / target_angles.len() as f64;
    for &t in target_angles {
        add_box(&mut values, grid, t, per_target);
    }
    add_box(&mut values, grid, ris_angle, beta);
    finish(grid, values)
}

/// Target lobes only, equal heights.
pub fn radar_only_beampattern(target_angles: &[f64], grid: &AngularGrid) -> Result<DesiredBeampattern> {
    if target_angles.is_empty() {
        return Err(Error::Config("at least one target is required".into()));
    }
    let mut values = vec![0.0; grid.len()];
    for &t in target_angles {
        if !grid.contains(t) {
            return Err(Error::Config(format!("angle {:.2}° outside grid span", t.to_degrees())));
        }
        add_box(&mut values, grid, t, 1.0 / target_angles.len() as f64);
    }
    finish(grid, values)
}

fn finish(grid: &AngularGrid, values: Vec<f64>) -> Result<DesiredBeampattern> {
    if values.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("desired beampattern has no support on the grid".into()));
    }
    Ok(DesiredBeampattern {
        grid: grid.clone(),
        values,
    })
}

/// `J(θ) = a^H(θ) R a(θ)` on every grid angle.
pub fn beampattern(r: &HermitianMatrix, grid: &AngularGrid) -> Vec<f64> {
    grid.angles()
        .iter()
        .map(|&t| r.matrix().quad_form(&steering_vector(t, r.dim())).re)
        .collect()
}

/// `(1/D) Σ (J - τ d)^2`.
pub fn mismatch(j: &[f64], d: &[f64], tau: f64) -> f64 {
    j.iter().zip(d).map(|(j, d)| (j - tau * d).powi(2)).sum::<f64>() / j.len() as f64
}

/// Least-squares autoscale `Σ d J / Σ d²`.
pub fn optimal_tau(j: &[f64], d: &[f64]) -> Result<f64> {
    let dd: f64 = d.iter().map(|v| v * v).sum();
    if !(dd > 0.0) {
        return Err(Error::Domain("desired pattern is identically zero".into()));
    }
    Ok(j.iter().zip(d).map(|(j, d)| j * d).sum::<f64>() / dd)
}

/// Beampattern evaluation specialized to a ULA.
///
/// Because `conj(a_i) a_j = e^{jπ(i-j) sinθ}`, the pattern only depends on
/// the lag sums `c_k = Σ_{i-j=k} R_ij` and the gradient is Toeplitz. Both
/// cost `O(D M)` after the `O(M²)` lag reduction.
#[derive(Debug, Clone)]
pub struct BeampatternModel {
    m: usize,
    /// `phasors[ℓ][k] = e^{jπ k sinθ_ℓ}`, k = 0..M.
    phasors: Vec<Vec<Complex64>>,
}

impl BeampatternModel {
    pub fn new(grid: &AngularGrid, m: usize) -> Self {
        let phasors = grid
            .angles()
            .iter()
            .map(|t| {
                (0..m)
                    .map(|k| Complex64::from_polar(1.0, PI * k as f64 * t.sin()))
                    .collect()
            })
            .collect();
        Self { m, phasors }
    }

    pub fn num_antennas(&self) -> usize {
        self.m
    }

    pub fn pattern(&self, r: &HermitianMatrix) -> Vec<f64> {
        let m = self.m;
        let mut lag = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..m {
            for j in 0..m - k {
                lag[k] += r[(j + k, j)];
            }
        }
        self.phasors
            .iter()
            .map(|ph| {
                let tail: f64 = (1..m).map(|k| (lag[k] * ph[k]).re).sum();
                lag[0].re + 2.0 * tail
            })
            .collect()
    }

    /// Gradient of `L(R, τ)` with respect to Hermitian `R` under the real
    /// inner product `<X, Y> = Re tr(X^H Y)`:
    ///
    /// `∇L = (2/D) Σ_ℓ (J(θ_ℓ) - τ d(θ_ℓ)) a(θ_ℓ) a^H(θ_ℓ)`.
    pub fn gradient(&self, j: &[f64], d: &[f64], tau: f64) -> HermitianMatrix {
        let m = self.m;
        let scale = 2.0 / j.len() as f64;
        // [a a^H]_{i,j} = e^{-jπ(i-j) sinθ} = conj(phasor[i-j])
        let mut g = vec![Complex64::new(0.0, 0.0); m];
        for ((ph, &jl), &dl) in self.phasors.iter().zip(j).zip(d) {
            let e = (jl - tau * dl) * scale;
            for k in 0..m {
                g[k] += ph[k].conj() * e;
            }
        }
        let mat = CMatrix::from_fn(m, m, |i, jj| if i >= jj { g[i - jj] } else { g[jj - i].conj() });
        HermitianMatrix::symmetrize(mat)
    }

    /// `f(R) = min_τ L(R, τ)` together with the minimizing τ and pattern.
    pub fn profile(&self, r: &HermitianMatrix, d: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let j = self.pattern(r);
        let tau = optimal_tau(&j, d)?;
        Ok((mismatch(&j, d, tau), tau, j))
    }
}

/// Result of Dykstra's projection onto correlation matrices.
#[derive(Debug, Clone)]
pub struct CorrelationProjection {
    pub matrix: HermitianMatrix,
    pub iterations: usize,
    /// Frobenius distance between the last PSD iterate and the returned
    /// unit-diagonal matrix; bounds the PSD violation of the result.
    pub violation: f64,
}

/// Nearest matrix in `{PSD} ∩ {unit diagonal}` by Dykstra's algorithm.
///
/// Only the PSD step carries a correction term; the diagonal constraint
/// is affine.
pub fn project_correlation(x: &HermitianMatrix, tol: f64, max_iters: usize) -> Result<CorrelationProjection> {
    project_correlation_from(x, tol, max_iters, None).map(|(p, _)| p)
}

/// [`project_correlation`] with the eigensolver warm-started from `basis`.
/// Also returns the last eigenbasis for the next call.
fn project_correlation_from(
    x: &HermitianMatrix,
    tol: f64,
    max_iters: usize,
    mut basis: Option<CMatrix>,
) -> Result<(CorrelationProjection, Option<CMatrix>)> {
    let n = x.dim();
    let mut y = x.matrix().clone();
    let mut correction = CMatrix::zeros(n, n);
    let mut violation = f64::INFINITY;
    for it in 1..=max_iters {
        let r = &y - &correction;
        let r_h = HermitianMatrix::symmetrize(r.clone());
        let eig = eig_warm(&r_h, basis.as_ref())?;
        let all_nonneg = eig.eigenvalues.iter().all(|&l| l >= 0.0);
        let xp = if all_nonneg {
            r.clone()
        } else {
            eig.reconstruct_with(|l| l.max(0.0))
        };
        basis = Some(eig.eigenvectors);
        correction = &xp - &r;
        let mut next = xp.clone();
        for i in 0..n {
            next[(i, i)] = Complex64::new(1.0, 0.0);
        }
        violation = (&next - &xp).frobenius_norm();
        let step = (&next - &y).frobenius_norm();
        y = next;
        if violation <= tol && step <= 100.0 * tol {
            let proj = CorrelationProjection {
                matrix: HermitianMatrix::symmetrize(y),
                iterations: it,
                violation,
            };
            return Ok((proj, basis));
        }
    }
    let proj = CorrelationProjection {
        matrix: HermitianMatrix::symmetrize(y),
        iterations: max_iters,
        violation,
    };
    Ok((proj, basis))
}

/// Jacobi eigendecomposition started from a previous eigenbasis.
///
/// With `Q` close to the eigenvectors of `A`, `Q^H A Q` is nearly diagonal
/// and the Jacobi sweeps converge in one or two passes.
fn eig_warm(a: &HermitianMatrix, basis: Option<&CMatrix>) -> Result<EigenDecomposition> {
    match basis {
        None => hermitian_eig(a),
        Some(q) => {
            let b = HermitianMatrix::symmetrize(&(&q.adjoint() * a.matrix()) * q);
            let eig = hermitian_eig(&b)?;
            Ok(EigenDecomposition {
                eigenvalues: eig.eigenvalues,
                eigenvectors: q * &eig.eigenvectors,
            })
        }
    }
}

/// Knobs of the relaxed solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub dykstra_tol: f64,
    pub dykstra_max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-8,
            dykstra_tol: 1e-10,
            dykstra_max_iters: 2000,
        }
    }
}

/// Output of [`solve_relaxed_sdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub r_z: HermitianMatrix,
    pub tau: f64,
    pub objective: f64,
    /// Objective of every accepted iterate, starting with `R = I`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Solves `min L(R, τ)` over `R ⪰ 0` with unit diagonal and free `τ`.
///
/// Accelerated projected gradient (monotone FISTA) with a backtracking
/// step. From the extrapolated point `Y` a trial step `t` is accepted when
/// `f(Z) ≤ f(Y) + <∇f(Y), Z - Y> + ‖Z - Y‖² / (2t)`. The iterate moves to
/// `Z` only if that does not increase the objective, and the momentum is
/// reset otherwise, so the objective trace is non-increasing. The step
/// grows by 1.2x after every accepted iteration.
pub fn solve_relaxed_sdp(d: &DesiredBeampattern, m: usize, opts: &SolverOptions) -> Result<RelaxedSolution> {
    if m == 0 {
        return Err(Error::EmptyMatrix);
    }
    let model = BeampatternModel::new(&d.grid, m);
    let dv = &d.values;
    let mut r = HermitianMatrix::identity(m);
    let mut r_prev = r.clone();
    let (mut f, mut tau, mut j) = model.profile(&r, dv)?;
    let mut trace = vec![f];
    let f0 = f;
    // crude Lipschitz bound of ∇L: (2/D) Σ ‖a a^H‖_F² = 2 M²
    let mut step = 1.0 / (2.0 * (m * m) as f64);
    let mut momentum = 1.0f64;
    let mut basis = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let (y, f_y, tau_y, j_y) = if beta > 0.0 {
            let y = HermitianMatrix::symmetrize(r.matrix() + &(r.matrix() - r_prev.matrix()).scale(beta));
            let (f_y, tau_y, j_y) = model.profile(&y, dv)?;
            (y, f_y, tau_y, j_y)
        } else {
            (r.clone(), f, tau, j.clone())
        };
        let grad = model.gradient(&j_y, dv, tau_y);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = HermitianMatrix::symmetrize(y.matrix() - &grad.matrix().scale(step));
            let (proj, b) = project_correlation_from(&trial, opts.dykstra_tol, opts.dykstra_max_iters, basis.take())?;
            basis = b;
            let diff = proj.matrix.matrix() - y.matrix();
            let (f_new, tau_new, j_new) = model.profile(&proj.matrix, dv)?;
            let model_bound = f_y + grad.matrix().real_inner(&diff) + diff.frobenius_norm().powi(2) / (2.0 * step);
            if f_new <= model_bound + 1e-15 * f0 {
                accepted = Some((proj.matrix, f_new, tau_new, j_new));
                break;
            }
            step *= 0.5;
        }
        let Some((z, f_z, tau_z, j_z)) = accepted else {
            // no descent possible at machine precision: stationary
            converged = true;
            break;
        };
        step *= 1.2;
        if f_z > f {
            // the extrapolated step overshot: restart from a plain step
            momentum = 1.0;
            r_prev = r.clone();
            trace.push(f);
            continue;
        }
        let decrease = f - f_z;
        let plain = beta <= 0.0;
        r_prev = std::mem::replace(&mut r, z);
        f = f_z;
        tau = tau_z;
        j = j_z;
        momentum = next_momentum;
        trace.push(f);
        if it % 500 == 0 {
            debug!("relaxed SDP iter {it}: objective {f:.6e}, tau {tau:.4}, step {step:.3e}");
        }
        if f <= 1e-15 * f0 || (decrease <= opts.tol * f && (plain || decrease == 0.0)) {
            converged = true;
            break;
        }
        if decrease <= opts.tol * f {
            // confirm stationarity with a plain step before stopping
            momentum = 1.0;
        }
    }

    let solution = RelaxedSolution {
        r_z: r,
        tau,
        objective: f,
        objective_trace: trace,
        iterations,
    };
    if !converged {
        return Err(Error::Convergence {
            iterations,
            objective: f,
            last: Box::new(solution),
        });
    }
    info!("relaxed SDP converged in {iterations} iterations: objective {f:.6e}, tau {tau:.4}");
    Ok(solution)
}

/// Arcsine pre-image `csin(π/2 R)`. Hermitian with unit diagonal, not
/// necessarily PSD.
pub fn invert_arcsine(r_z: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix::symmetrize(csin_elementwise(&r_z.matrix().scale(FRAC_PI_2)))
}

/// Nearest-PSD recovery and its factor: `R° = Σ_{λ_k ≥ 0} λ_k q_k q_k^H`,
/// `W° = [√λ q_k for non-negative λ_k, then zero columns]`.
///
/// Eigenvalues in `(-1e-10, 0)` count as zero.
pub fn build_precoder(r_x_hat: &HermitianMatrix) -> Result<(HermitianMatrix, CMatrix)> {
    let eig = hermitian_eig(r_x_hat)?;
    let m = r_x_hat.dim();
    let clipped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l > -1e-10 { l.max(0.0) } else { -1.0 })
        .collect();
    let mut w = CMatrix::zeros(m, m);
    let mut col = 0;
    for (k, &l) in clipped.iter().enumerate() {
        if l < 0.0 {
            continue;
        }
        let q = eig.eigenvector(k);
        let s = l.sqrt();
        w.set_column(col, &q.iter().map(|z| z * s).collect::<Vec<_>>());
        col += 1;
    }
    let r_circ = HermitianMatrix::symmetrize(&w * &w.adjoint());
    Ok((r_circ, w))
}

/// Inputs of one design, resolved from an experiment configuration.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub num_antennas: usize,
    pub desired: DesiredBeampattern,
    pub solver: SolverOptions,
}

impl DesignSpec {
    /// ISAC pattern: target boxes plus the RIS box at the configured β.
    pub fn isac(config: &ExperimentConfig, beta: f64) -> Result<Self> {
        let grid = AngularGrid::uniform(config.grid_points)?;
        let targets: Vec<f64> = config.target_angles_deg.iter().map(|a| a.to_radians()).collect();
        let ris = ris_direction(config.bs_position, config.ris_position);
        Ok(Self {
            num_antennas: config.num_antennas,
            desired: desired_beampattern(&targets, ris, beta, &grid)?,
            solver: config.solver,
        })
    }

    /// Target boxes only.
    pub fn radar_only(config: &ExperimentConfig) -> Result<Self> {
        let grid = AngularGrid::uniform(config.grid_points)?;
        let targets: Vec<f64> = config.target_angles_deg.iter().map(|a| a.to_radians()).collect();
        Ok(Self {
            num_antennas: config.num_antennas,
            desired: radar_only_beampattern(&targets, &grid)?,
            solver: config.solver,
        })
    }
}

/// Everything produced by the design pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecoderDesign {
    pub desired: DesiredBeampattern,
    /// Relaxed optimum.
    pub r_z_star: HermitianMatrix,
    pub tau: f64,
    /// `csin(π/2 R_z*)`.
    pub r_x_hat: HermitianMatrix,
    /// Nearest PSD matrix to `R̂_x`.
    pub r_x_circ: HermitianMatrix,
    /// `R_x°` with its diagonal normalized to one.
    pub r_x_tilde_circ: HermitianMatrix,
    /// Covariance actually emitted by the 1-bit DACs, `(2/π) casin(R̃_x°)`.
    pub r_z_quantized: HermitianMatrix,
    pub w_circ: CMatrix,
    pub objective_trace: Vec<f64>,
}

impl PrecoderDesign {
    pub fn num_antennas(&self) -> usize {
        self.w_circ.rows()
    }

    /// Objective of the relaxed optimum.
    pub fn relaxed_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts non-empty")
    }

    /// `min_τ L` of the covariance the quantized transmitter really emits.
    pub fn quantized_objective(&self) -> Result<f64> {
        let model = BeampatternModel::new(&self.desired.grid, self.num_antennas());
        Ok(model.profile(&self.r_z_quantized, &self.desired.values)?.0)
    }

    /// Factor of the unquantized ISAC baseline, which uses `R_z*` directly.
    pub fn unquantized_precoder(&self) -> Result<CMatrix> {
        Ok(build_precoder(&self.r_z_star)?.1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Runs the full pipeline for one design.
pub fn design(spec: &DesignSpec) -> Result<PrecoderDesign> {
    let relaxed = solve_relaxed_sdp(&spec.desired, spec.num_antennas, &spec.solver)?;
    finish_design(spec, relaxed)
}

/// Pipeline tail from an already solved relaxation (also used to salvage
/// the last iterate of a non-converged solve).
pub fn finish_design(spec: &DesignSpec, relaxed: RelaxedSolution) -> Result<PrecoderDesign> {
    let r_x_hat = invert_arcsine(&relaxed.r_z);
    let (r_x_circ, w_circ) = build_precoder(&r_x_hat)?;
    let r_x_tilde_circ = normalize_covariance(&r_x_circ)?;
    let r_z_quantized = arcsine_covariance(&r_x_tilde_circ)?;
    Ok(PrecoderDesign {
        desired: spec.desired.clone(),
        r_z_star: relaxed.r_z,
        tau: relaxed.tau,
        r_x_hat,
        r_x_circ,
        r_x_tilde_circ,
        r_z_quantized,
        w_circ,
        objective_trace: relaxed.objective_trace,
    })
}

/// Proposed design at the configured β.
pub fn design_precoder(config: &ExperimentConfig) -> Result<PrecoderDesign> {
    design(&DesignSpec::isac(config, config.beta)?)
}
