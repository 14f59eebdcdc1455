//! Independent reference computations used to validate the library.
//!
//! Each oracle recomputes a quantity by a route that does not share code with
//! the routine under test: Monte-Carlo sampling, exhaustive search, brute
//! force grids or finite differences.

use std::f64::consts::{FRAC_2_PI, PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::comm::ml_detect;
use crate::error::Result;
use crate::frontend::gen_quantized_waveform;
use crate::linalg::{CMatrix, HermitianMatrix};
use crate::precoder::{
    beampattern, mismatch, solve_relaxed_sdp, AngularGrid, BeampatternModel, DesiredBeampattern, SolverOptions,
};
use crate::ris::{instantaneous_snr, modified_gain, optimal_phase, PhaseResolution, RisState};
use crate::rng::{child_rng, complex_normal, Lane};

/// Sub-stream tags separating the oracles on the `Oracle` lane.
mod tag {
    pub const ARCSINE: u64 = 1;
    pub const PHASE_SAMPLING: u64 = 2;
    pub const DISCRETE: u64 = 3;
    pub const SOLVER: u64 = 4;
    pub const DETECTOR: u64 = 5;
    pub const GRADIENT: u64 = 6;
    pub const REAL_GAIN: u64 = 7;
}

fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n).map(|_| complex_normal(rng)).collect()
}

fn random_unit_vec(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..TAU)))
        .collect()
}

/// Largest deviation, over the real and imaginary parts of every entry,
/// between the empirical output covariance of `samples` 1-bit samples drawn
/// through a random `m x m` precoder and the arcsine formula.
pub fn arcsine_monte_carlo(m: usize, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = child_rng(seed, Lane::Oracle, tag::ARCSINE, 0);
    let w = CMatrix::from_fn(m, m, |_, _| complex_normal(&mut rng));
    let r = &w * &w.adjoint();
    let predicted = CMatrix::from_fn(m, m, |i, j| {
        let c = r[(i, j)] / (r[(i, i)].re * r[(j, j)].re).sqrt();
        Complex64::new(c.re.clamp(-1.0, 1.0).asin(), c.im.clamp(-1.0, 1.0).asin()) * FRAC_2_PI
    });

    // accumulate in chunks on independent streams, then add in fixed order
    const CHUNK: usize = 100_000;
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Result<CMatrix>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(samples - c * CHUNK);
            let mut crng = child_rng(seed, Lane::Oracle, tag::ARCSINE, 1 + c as u64);
            let wf = gen_quantized_waveform(&w, len, m as f64, &mut crng)?;
            let mut acc = CMatrix::zeros(m, m);
            for n in 0..len {
                let z = wf.sample(n);
                for i in 0..m {
                    for j in 0..m {
                        acc[(i, j)] += z[i] * z[j].conj();
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut sum = CMatrix::zeros(m, m);
    for p in partial {
        sum = &sum + &p?;
    }
    let empirical = sum.scale(1.0 / samples as f64);
    let diff = &empirical - &predicted;
    Ok(diff
        .as_slice()
        .iter()
        .map(|d| d.re.abs().max(d.im.abs()))
        .fold(0.0, f64::max))
}

/// Outcome of the random-sampling optimality check of the closed-form phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingOptimality {
    /// Competitor draws that beat the closed-form phase.
    pub violations: usize,
    /// Smallest `γ(φ*) / max γ(φ_random)` over the instances.
    pub min_ratio: f64,
}

/// `instances` random cascades of length `n`, each against `competitors`
/// random unit-modulus phase vectors.
pub fn phase_sampling(instances: usize, n: usize, competitors: usize, seed: u64) -> Result<SamplingOptimality> {
    let per: Vec<Result<(usize, f64)>> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = child_rng(seed, Lane::Oracle, tag::PHASE_SAMPLING, k as u64);
            let h = random_vec(n, &mut rng);
            let best = instantaneous_snr(&optimal_phase(&h), &h, 1.0)?;
            let bound: f64 = h.iter().map(|v| v.norm()).sum::<f64>().powi(2);
            let mut violations = usize::from((best - bound).abs() > 1e-9 * bound);
            let mut top = 0.0f64;
            for _ in 0..competitors {
                let phi = random_unit_vec(n, &mut rng);
                let g: Complex64 = phi.iter().zip(&h).map(|(p, h)| p * h).sum();
                let snr = g.norm_sqr();
                violations += usize::from(snr > best);
                top = top.max(snr);
            }
            Ok((violations, best / top))
        })
        .collect();
    let mut out = SamplingOptimality {
        violations: 0,
        min_ratio: f64::INFINITY,
    };
    for r in per {
        let (v, ratio) = r?;
        out.violations += v;
        out.min_ratio = out.min_ratio.min(ratio);
    }
    Ok(out)
}

/// Exhaustive comparison of the projected phase against the best
/// configuration of the discrete alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteGap {
    pub bits: u32,
    /// Mean of `1 - γ(projected) / γ(exhaustive optimum)`.
    pub mean_gap: f64,
    /// Largest amount by which the projected SNR exceeds the optimum
    /// (positive only if the exhaustive search is wrong).
    pub max_excess: f64,
}

/// Exhaustive optimum of `|Σ ω_i h_i|²` over `ω ∈ F^n`. The first entry is
/// pinned to 1: rotating every entry by an alphabet element leaves the
/// magnitude unchanged.
fn exhaustive_discrete_snr(h: &[Complex64], levels: u64) -> f64 {
    let alphabet: Vec<Complex64> = (0..levels)
        .map(|k| Complex64::from_polar(1.0, TAU * k as f64 / levels as f64))
        .collect();
    let n = h.len();
    let free = (n - 1) as u32;
    let mut best = 0.0f64;
    for code in 0..levels.pow(free) {
        let mut c = code;
        let mut g = h[0];
        for hi in &h[1..] {
            g += alphabet[(c % levels) as usize] * hi;
            c /= levels;
        }
        best = best.max(g.norm_sqr());
    }
    best
}

/// `instances` cascades of length `n`, each modulated by a random 64-PSK
/// symbol and projected to `bits` bits.
pub fn discrete_gap(n: usize, bits: u32, instances: usize, seed: u64) -> Result<DiscreteGap> {
    let res = PhaseResolution::Bits(bits);
    let levels = 1u64 << bits;
    let per: Vec<Result<(f64, f64)>> = (0..instances)
        .into_par_iter()
        .map(|k| {
            // same cascade for every bit width so gaps are paired
            let mut rng = child_rng(seed, Lane::Oracle, tag::DISCRETE, k as u64);
            let h = random_vec(n, &mut rng);
            let s = Complex64::from_polar(1.0, TAU * rng.random_range(0..64) as f64 / 64.0);
            let state = RisState::for_symbol(&h, s, res)?;
            let projected = modified_gain(&state.omega_complex(), &h).norm_sqr();
            let opt = exhaustive_discrete_snr(&h, levels);
            Ok((1.0 - projected / opt, (projected - opt) / opt))
        })
        .collect();
    let mut sum = 0.0;
    let mut max_excess = f64::NEG_INFINITY;
    for r in per {
        let (gap, excess) = r?;
        sum += gap;
        max_excess = max_excess.max(excess);
    }
    Ok(DiscreteGap {
        bits,
        mean_gap: sum / instances as f64,
        max_excess,
    })
}

/// Largest `|Im α|` of the symbol-stripped gain `conj(s) ω^T h_c` over
/// `instances` random cascades of length `n` at infinite resolution.
pub fn purely_real_gain(instances: usize, n: usize, seed: u64) -> Result<f64> {
    let per: Vec<Result<f64>> = (0..instances)
        .into_par_iter()
        .with_min_len(1000)
        .map(|k| {
            let mut rng = child_rng(seed, Lane::Oracle, tag::REAL_GAIN, k as u64);
            let h = random_vec(n, &mut rng);
            let s = Complex64::from_polar(1.0, TAU * rng.random_range(0..64) as f64 / 64.0);
            let state = RisState::for_symbol(&h, s, PhaseResolution::Continuous)?;
            Ok((modified_gain(&state.omega_complex(), &h) * s.conj()).im.abs())
        })
        .collect();
    per.into_iter().try_fold(0.0f64, |a, r| Ok(a.max(r?)))
}

/// Mismatch of the 2-antenna correlation matrix `[[1, c], [c*, 1]]` at the
/// best `τ`, from the closed form `J(θ) = 2 + 2 Re(c e^{-jπ sin θ})`.
fn m2_objective(c: Complex64, angles: &[f64], d: &[f64]) -> f64 {
    let j: Vec<f64> = angles
        .iter()
        .map(|&t| 2.0 + 2.0 * (c * Complex64::from_polar(1.0, -PI * t.sin())).re)
        .collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let tau = d.iter().zip(&j).map(|(a, b)| a * b).sum::<f64>() / dd;
    j.iter().zip(d).map(|(jv, dv)| (jv - tau * dv).powi(2)).sum::<f64>() / d.len() as f64
}

/// Random pattern of one to three boxes with random widths and heights.
fn random_pattern(grid: &AngularGrid, rng: &mut impl Rng) -> DesiredBeampattern {
    let mut values = vec![0.0; grid.len()];
    let boxes = rng.random_range(1..=3);
    for _ in 0..boxes {
        let center: f64 = rng.random_range(-70.0f64..70.0).to_radians();
        let half: f64 = rng.random_range(3.0f64..20.0).to_radians();
        let height: f64 = rng.random_range(0.1..1.0);
        for (v, &t) in values.iter_mut().zip(grid.angles()) {
            if (t - center).abs() <= half {
                *v += height;
            }
        }
    }
    if values.iter().all(|&v| v == 0.0) {
        values[grid.len() / 2] = 1.0;
    }
    DesiredBeampattern {
        grid: grid.clone(),
        values,
    }
}

/// Per-pattern comparison of the 2-antenna solver against a brute-force grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridComparison {
    pub solver_objective: f64,
    pub grid_objective: f64,
}

impl GridComparison {
    /// Positive when the solver is worse than the grid.
    pub fn excess(&self) -> f64 {
        self.solver_objective - self.grid_objective
    }
}

/// `patterns` random desired patterns; the off-diagonal entry is searched on
/// a `grid_side x grid_side` lattice of `[-1, 1]²` restricted to `|c| ≤ 1`.
pub fn solver_grid_m2(patterns: usize, grid_side: usize, seed: u64) -> Result<Vec<GridComparison>> {
    let grid = AngularGrid::uniform(181)?;
    let opts = SolverOptions::default();
    (0..patterns)
        .into_par_iter()
        .map(|k| {
            let mut rng = child_rng(seed, Lane::Oracle, tag::SOLVER, k as u64);
            let d = random_pattern(&grid, &mut rng);
            let sol = solve_relaxed_sdp(&d, 2, &opts)?;
            let solver_objective = m2_objective(sol.r_z[(0, 1)], grid.angles(), &d.values);
            let mut grid_objective = f64::INFINITY;
            let step = 2.0 / (grid_side - 1) as f64;
            for a in 0..grid_side {
                for b in 0..grid_side {
                    let c = Complex64::new(-1.0 + a as f64 * step, -1.0 + b as f64 * step);
                    if c.norm() <= 1.0 {
                        grid_objective = grid_objective.min(m2_objective(c, grid.angles(), &d.values));
                    }
                }
            }
            Ok(GridComparison {
                solver_objective,
                grid_objective,
            })
        })
        .collect()
}

/// Number of disagreements between the nearest-phase detector and the full
/// search `argmax_k Re(y conj(s_k))` over `samples` random observations.
pub fn detector_full_search(samples: usize, order: usize, seed: u64) -> usize {
    let mut rng = child_rng(seed, Lane::Oracle, tag::DETECTOR, order as u64);
    let points: Vec<Complex64> = (0..order)
        .map(|k| Complex64::from_polar(1.0, TAU * k as f64 / order as f64))
        .collect();
    (0..samples)
        .filter(|_| {
            let y = complex_normal(&mut rng) * 4.0;
            let mut best = 0;
            for k in 1..order {
                if (y * points[k].conj()).re > (y * points[best].conj()).re {
                    best = k;
                }
            }
            ml_detect(y, order) != best
        })
        .count()
}

/// Largest relative error between the analytic directional derivative of
/// `L(R, τ)` and a central difference with step `h`, over `instances` random
/// `m x m` instances and one random Hermitian direction each.
pub fn gradient_finite_difference(instances: usize, m: usize, h: f64, seed: u64) -> Result<f64> {
    let grid = AngularGrid::uniform(181)?;
    let model = BeampatternModel::new(&grid, m);
    let mut worst = 0.0f64;
    for k in 0..instances {
        let mut rng = child_rng(seed, Lane::Oracle, tag::GRADIENT, k as u64);
        let a = CMatrix::from_fn(m, m, |_, _| complex_normal(&mut rng));
        let r = HermitianMatrix::symmetrize(&a * &a.adjoint());
        let e = CMatrix::from_fn(m, m, |_, _| complex_normal(&mut rng));
        let e = HermitianMatrix::symmetrize(&e + &e.adjoint());
        let d: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let tau: f64 = rng.random_range(0.5..5.0);

        let loss = |x: &CMatrix| mismatch(&beampattern(&HermitianMatrix::symmetrize(x.clone()), &grid), &d, tau);
        let plus = r.matrix() + &e.matrix().scale(h);
        let minus = r.matrix() - &e.matrix().scale(h);
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let j = beampattern(&r, &grid);
        let analytic = model.gradient(&j, &d, tau).matrix().real_inner(e.matrix());
        worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1e-12));
    }
    Ok(worst)
}

/// One oracle result line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl OracleOutcome {
    fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

/// All oracle outcomes of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub outcomes: Vec<OracleOutcome>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn status(&self) -> &'static str {
        if self.all_passed() {
            "pass"
        } else {
            "fail"
        }
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "oracle,measured,threshold,passed")?;
        for o in &self.outcomes {
            writeln!(w, "{},{:e},{:e},{}", o.name, o.measured, o.threshold, o.passed)?;
        }
        Ok(())
    }
}

/// Problem sizes for a full oracle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScale {
    pub arcsine_precoders: usize,
    pub arcsine_samples: usize,
    pub phase_instances: usize,
    pub phase_competitors: usize,
    pub discrete_instances: usize,
    pub real_gain_instances: usize,
    pub solver_patterns: usize,
    pub solver_grid_side: usize,
    pub detector_samples: usize,
    pub gradient_instances: usize,
}

impl OracleScale {
    pub fn standard() -> Self {
        Self {
            arcsine_precoders: 5,
            arcsine_samples: 1_000_000,
            phase_instances: 100,
            phase_competitors: 10_000,
            discrete_instances: 100,
            real_gain_instances: 100_000,
            solver_patterns: 10,
            solver_grid_side: 200,
            detector_samples: 10_000,
            gradient_instances: 20,
        }
    }

    pub fn quick() -> Self {
        Self {
            arcsine_precoders: 2,
            arcsine_samples: 200_000,
            phase_instances: 20,
            phase_competitors: 2_000,
            discrete_instances: 20,
            real_gain_instances: 10_000,
            solver_patterns: 3,
            solver_grid_side: 100,
            detector_samples: 10_000,
            gradient_instances: 5,
        }
    }
}

/// Arcsine deviation threshold at `samples` samples: 5e-3 at 10⁶, scaled by
/// the Monte-Carlo standard error at other sizes.
fn arcsine_tolerance(samples: usize) -> f64 {
    5e-3 * (1e6 / samples as f64).sqrt().max(1.0)
}

/// Runs every oracle at `scale`.
pub fn run_oracles(scale: &OracleScale, seed: u64) -> Result<OracleReport> {
    let mut outcomes = Vec::new();
    let s = scale;

    let mut arcsine = 0.0f64;
    for p in 0..s.arcsine_precoders {
        arcsine = arcsine.max(arcsine_monte_carlo(8, s.arcsine_samples, seed.wrapping_add(p as u64))?);
    }
    outcomes.push(OracleOutcome::at_most(
        "arcsine_law_max_deviation",
        arcsine,
        arcsine_tolerance(s.arcsine_samples),
    ));

    let th = phase_sampling(s.phase_instances, 16, s.phase_competitors, seed)?;
    outcomes.push(OracleOutcome::at_most(
        "closed_form_phase_violations",
        th.violations as f64,
        0.0,
    ));

    let gaps = (1..=5)
        .map(|b| discrete_gap(4, b, s.discrete_instances, seed))
        .collect::<Result<Vec<_>>>()?;
    let excess = gaps.iter().map(|g| g.max_excess).fold(f64::NEG_INFINITY, f64::max);
    outcomes.push(OracleOutcome::at_most(
        "discrete_projection_excess_over_exhaustive",
        excess,
        1e-12,
    ));
    outcomes.push(OracleOutcome::at_most("discrete_gap_b2", gaps[1].mean_gap, 1.0));
    let rises = gaps.windows(2).filter(|w| w[1].mean_gap > w[0].mean_gap).count();
    outcomes.push(OracleOutcome::at_most(
        "discrete_gap_increases_with_bits",
        rises as f64,
        0.0,
    ));

    let imag = purely_real_gain(s.real_gain_instances, 16, seed)?;
    outcomes.push(OracleOutcome::at_most("gain_imaginary_part", imag, 1e-12));

    let cmp = solver_grid_m2(s.solver_patterns, s.solver_grid_side, seed)?;
    let worst = cmp.iter().map(GridComparison::excess).fold(f64::NEG_INFINITY, f64::max);
    outcomes.push(OracleOutcome::at_most("solver_excess_over_grid_m2", worst, 1e-3));

    let miss: usize = [2, 4, 64]
        .iter()
        .map(|&o| detector_full_search(s.detector_samples, o, seed))
        .sum();
    outcomes.push(OracleOutcome::at_most(
        "detector_full_search_mismatches",
        miss as f64,
        0.0,
    ));

    let fd = gradient_finite_difference(s.gradient_instances, 4, 1e-6, seed)?;
    outcomes.push(OracleOutcome::at_most("gradient_finite_difference_rel_error", fd, 1e-4));

    Ok(OracleReport { outcomes })
}
