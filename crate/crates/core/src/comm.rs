//! Downlink communication: PSK mapping, the received-signal model, ML
//! detection, baseline precoders and the Monte-Carlo SEP estimator.
//!
//! Every scheme is evaluated on identical random draws: the scene, the
//! symbol indices and the unit-variance noise for trial `t` and user `k`
//! come from streams keyed by `(seed, lane, k, t)`. Comparisons between
//! schemes, powers and β values are therefore paired.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Scheme};
use crate::error::{Error, Result};
use crate::frontend::{gen_quantized_waveform, quantize_sample};
use crate::linalg::CMatrix;
use crate::ris::{cascade_channel, modified_gain, wrap_angle, PhaseResolution, RisState};
use crate::rng::{child_rng, complex_normal, Lane};
use crate::scene::{build_scene, db_to_linear, Scene};

/// Unit-modulus M-PSK alphabet `e^{j 2π k / M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PskConstellation {
    order: usize,
    points: Vec<Complex64>,
}

impl PskConstellation {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::Config(format!(
                "PSK order must be a power of two >= 2, got {order}"
            )));
        }
        let points = (0..order)
            .map(|k| Complex64::from_polar(1.0, TAU * k as f64 / order as f64))
            .collect();
        Ok(Self { order, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn map(&self, index: usize) -> Result<Complex64> {
        self.points
            .get(index)
            .copied()
            .ok_or_else(|| Error::Domain(format!("symbol index {index} out of range for {}-PSK", self.order)))
    }

    pub fn detect(&self, y: Complex64) -> usize {
        ml_detect(y, self.order)
    }
}

/// `e^{j 2π index / order}`.
pub fn psk_map(index: usize, order: usize) -> Result<Complex64> {
    if index >= order {
        return Err(Error::Domain(format!(
            "symbol index {index} out of range for {order}-PSK"
        )));
    }
    Ok(Complex64::from_polar(1.0, TAU * index as f64 / order as f64))
}

/// Nearest PSK phase. `y = 0` detects as index 0.
///
/// With a positive real channel gain this is the ML rule
/// `argmax_k Re(y conj(s_k))`.
pub fn ml_detect(y: Complex64, order: usize) -> usize {
    if y.norm_sqr() == 0.0 {
        return 0;
    }
    let step = TAU / order as f64;
    ((wrap_angle(y.arg()) / step).round() as usize) % order
}

/// `y = sqrt(ρ) h_ru^H diag(ω) H_br z + w` with `w ~ CN(0, σ²)`.
pub fn received_sample(
    omega: &[Complex64],
    h_ru: &[Complex64],
    h_br: &CMatrix,
    z: &[Complex64],
    rho: f64,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<Complex64> {
    if omega.len() != h_ru.len() {
        return Err(Error::Dimension(format!(
            "omega has {} entries, h_ru has {}",
            omega.len(),
            h_ru.len()
        )));
    }
    let h_c = cascade_channel(h_ru, h_br, z)?;
    Ok(noiseless_from_cascade(omega, &h_c, rho) + complex_normal(rng) * sigma2.sqrt())
}

fn noiseless_from_cascade(omega: &[Complex64], h_c: &[Complex64], rho: f64) -> Complex64 {
    modified_gain(omega, h_c) * rho.sqrt()
}

/// Effective MISO channel `h_eff` with `h_eff^H = h_ru^H diag(ω) H_br`.
pub fn effective_channel(h_ru: &[Complex64], omega: &[Complex64], h_br: &CMatrix) -> Vec<Complex64> {
    let m = h_br.cols();
    let mut row = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..h_br.rows() {
        let c = h_ru[i].conj() * omega[i];
        for (r, h) in row.iter_mut().zip(h_br.row(i)) {
            *r += c * h;
        }
    }
    row.into_iter().map(|v| v.conj()).collect()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Unit-norm maximal-ratio beamformer `h_eff / ‖h_eff‖`.
pub fn mrt_precoder(h_eff: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = norm(h_eff);
    if !(n > 0.0) {
        return Err(Error::Domain("MRT needs a non-zero channel".into()));
    }
    Ok(h_eff.iter().map(|h| h / n).collect())
}

/// 1-bit samples `Q(w s_n)` for every symbol of the stream, one column each.
pub fn qmrt_precoder(h_eff: &[Complex64], symbols: &[Complex64]) -> Result<CMatrix> {
    let w = mrt_precoder(h_eff)?;
    let mut out = CMatrix::zeros(w.len(), symbols.len());
    for (n, s) in symbols.iter().enumerate() {
        for (i, wi) in w.iter().enumerate() {
            out[(i, n)] = quantize_sample(wi * s);
        }
    }
    Ok(out)
}

/// Regularized zero-forcing `H^H (H H^H + εI)^{-1}`, `ε = 1e-8 tr(H H^H)/K`.
///
/// `h_users` is K x M with one effective channel row `h_eff,k^H` per user.
/// Columns are not power scaled.
pub fn zf_precoder(h_users: &CMatrix) -> Result<CMatrix> {
    let k = h_users.rows();
    if k == 0 || k > h_users.cols() {
        return Err(Error::Dimension(format!(
            "ZF needs 1 <= K <= M, got K = {k}, M = {}",
            h_users.cols()
        )));
    }
    let hh = h_users.adjoint();
    let gram = h_users * &hh;
    let eps = 1e-8 * gram.trace().re / k as f64;
    let reg = &gram + &CMatrix::identity(k).scale(eps);
    Ok(&hh * &reg.inverse()?)
}

/// Static RIS phases maximizing `‖h_ru^H diag(ω) H_br‖` by alternating
/// between the MRT direction and the co-phasing of the surface. Returns the
/// phases and the gain after every iterate (starting from `ω = 1`).
pub fn alternating_ris_phases(h_ru: &[Complex64], h_br: &CMatrix) -> (Vec<Complex64>, Vec<f64>) {
    let n = h_ru.len();
    let mut omega = vec![Complex64::new(1.0, 0.0); n];
    let mut gain = norm(&effective_channel(h_ru, &omega, h_br));
    let mut trace = vec![gain];
    for _ in 0..200 {
        let h_eff = effective_channel(h_ru, &omega, h_br);
        let Ok(v) = mrt_precoder(&h_eff) else { break };
        let u = h_br.mul_vec(&v);
        let next: Vec<Complex64> = h_ru
            .iter()
            .zip(&u)
            .map(|(h, u)| {
                let c = h.conj() * u;
                if c.norm_sqr() == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    (c / c.norm()).conj()
                }
            })
            .collect();
        let g = norm(&effective_channel(h_ru, &next, h_br));
        if g < gain {
            break;
        }
        let done = g - gain < 1e-8 * g;
        omega = next;
        gain = g;
        trace.push(g);
        if done {
            break;
        }
    }
    (omega, trace)
}

/// Phases used by the MRT/QMRT/ZF baselines for the whole coherence block.
pub fn ris_phases_for_baselines(h_ru: &[Complex64], h_br: &CMatrix) -> Vec<Complex64> {
    alternating_ris_phases(h_ru, h_br).0
}

/// Symbol error counts for one scheme at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SepEstimate {
    pub errors: u64,
    pub trials: u64,
    pub sep: f64,
    pub config_digest: String,
}

impl SepEstimate {
    pub fn standard_error(&self) -> f64 {
        (self.sep * (1.0 - self.sep) / self.trials.max(1) as f64).sqrt()
    }
}

/// Everything fixed across the trials of one SEP point.
#[derive(Debug, Clone)]
pub struct SepPoint<'a> {
    pub config: &'a ExperimentConfig,
    pub scheme: Scheme,
    /// Designed 1-bit precoder `W°`; used by RIST only.
    pub precoder: &'a CMatrix,
    /// Per-antenna transmit power `ρ = P/M` in dB.
    pub power_db: f64,
}

/// Monte-Carlo SEP over `realizations x symbols_per_realization` symbols per
/// served user, trials fanned out over `pool`.
pub fn simulate_sep(point: &SepPoint<'_>, pool: &rayon::ThreadPool) -> Result<SepEstimate> {
    let cfg = point.config;
    let psk = PskConstellation::new(cfg.psk_order)?;
    let results: Vec<Result<(u64, u64)>> = pool.install(|| {
        (0..cfg.realizations as u64)
            .into_par_iter()
            .map(|t| run_trial(point, &psk, t))
            .collect()
    });
    let (mut errors, mut trials) = (0u64, 0u64);
    for r in results {
        let (e, n) = r?;
        errors += e;
        trials += n;
    }
    Ok(SepEstimate {
        errors,
        trials,
        sep: errors as f64 / trials as f64,
        config_digest: cfg.digest(),
    })
}

/// Single-threaded variant of [`simulate_sep`].
pub fn simulate_sep_serial(point: &SepPoint<'_>) -> Result<SepEstimate> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Contract(e.to_string()))?;
    simulate_sep(point, &pool)
}

fn users_needed(cfg: &ExperimentConfig, scheme: Scheme) -> usize {
    match scheme {
        Scheme::Zf(k) => k,
        _ => cfg.num_users,
    }
}

fn run_trial(point: &SepPoint<'_>, psk: &PskConstellation, trial: u64) -> Result<(u64, u64)> {
    let cfg = point.config;
    let seed = cfg.master_seed;
    let users = users_needed(cfg, point.scheme);
    let scene = build_scene(cfg, users, &mut child_rng(seed, Lane::Scene, 0, trial))?;
    let rho = db_to_linear(point.power_db);
    let sigma = cfg.channel.noise_variance.sqrt();
    let s_count = cfg.symbols_per_realization;
    let mut errors = 0;
    let mut total = 0;

    let draw_symbols = |k: usize| -> Vec<usize> {
        let mut rng = child_rng(seed, Lane::Symbols, k as u64, trial);
        (0..s_count).map(|_| rng.random_range(0..psk.order())).collect()
    };

    match point.scheme {
        Scheme::Zf(k) => {
            let (e, n) = zf_slot(&scene, k, psk, rho, sigma, seed, trial, &draw_symbols)?;
            errors += e;
            total += n;
        }
        scheme => {
            for user in 0..users {
                let idx = draw_symbols(user);
                let mut noise = child_rng(seed, Lane::Noise, user as u64, trial);
                let h_ru = &scene.h_ru[user];
                let e = match scheme {
                    Scheme::Rist(res) => {
                        let mut wrng = child_rng(seed, Lane::Waveform, user as u64, trial);
                        rist_slot(
                            &scene,
                            h_ru,
                            point.precoder,
                            res,
                            &idx,
                            psk,
                            rho,
                            sigma,
                            &mut wrng,
                            &mut noise,
                        )?
                    }
                    Scheme::Mrt | Scheme::Qmrt => {
                        mrt_slot(&scene, h_ru, scheme == Scheme::Qmrt, &idx, psk, rho, sigma, &mut noise)?
                    }
                    Scheme::Zf(_) => unreachable!(),
                };
                errors += e;
                total += idx.len() as u64;
            }
        }
    }
    Ok((errors, total))
}

#[allow(clippy::too_many_arguments)]
fn rist_slot(
    scene: &Scene,
    h_ru: &[Complex64],
    w: &CMatrix,
    res: PhaseResolution,
    idx: &[usize],
    psk: &PskConstellation,
    rho: f64,
    sigma: f64,
    wrng: &mut impl Rng,
    noise: &mut impl Rng,
) -> Result<u64> {
    let m = scene.num_antennas();
    let wf = gen_quantized_waveform(w, idx.len(), rho * m as f64, wrng)?;
    let mut errors = 0;
    for (n, &k) in idx.iter().enumerate() {
        let z = wf.sample(n);
        let h_c = cascade_channel(h_ru, &scene.h_br, &z)?;
        let s = psk.map(k)?;
        let state = RisState::for_symbol(&h_c, s, res)?;
        let y = noiseless_from_cascade(&state.omega_complex(), &h_c, rho) + complex_normal(noise) * sigma;
        errors += (psk.detect(y) != k) as u64;
    }
    Ok(errors)
}

#[allow(clippy::too_many_arguments)]
fn mrt_slot(
    scene: &Scene,
    h_ru: &[Complex64],
    quantized: bool,
    idx: &[usize],
    psk: &PskConstellation,
    rho: f64,
    sigma: f64,
    noise: &mut impl Rng,
) -> Result<u64> {
    let m = scene.num_antennas();
    let omega = ris_phases_for_baselines(h_ru, &scene.h_br);
    let h_eff = effective_channel(h_ru, &omega, &scene.h_br);
    let w = mrt_precoder(&h_eff)?;
    let total_power = rho * m as f64;
    let mut errors = 0;
    for &k in idx {
        let s = psk.map(k)?;
        let rx = if quantized {
            let x: Vec<Complex64> = w.iter().map(|wi| quantize_sample(wi * s) * rho.sqrt()).collect();
            inner(&h_eff, &x)
        } else {
            inner(&h_eff, &w) * s * total_power.sqrt()
        };
        let y = rx + complex_normal(noise) * sigma;
        errors += (psk.detect(y) != k) as u64;
    }
    Ok(errors)
}

/// ZF serving users `0..k` together. The static RIS phases are aligned to the
/// aggregate user channel `Σ_k h_ru,k`.
#[allow(clippy::too_many_arguments)]
fn zf_slot(
    scene: &Scene,
    k: usize,
    psk: &PskConstellation,
    rho: f64,
    sigma: f64,
    seed: u64,
    trial: u64,
    draw_symbols: &dyn Fn(usize) -> Vec<usize>,
) -> Result<(u64, u64)> {
    let m = scene.num_antennas();
    let n = scene.num_ris();
    let mut h_sum = vec![Complex64::new(0.0, 0.0); n];
    for h in &scene.h_ru[..k] {
        for (a, b) in h_sum.iter_mut().zip(h) {
            *a += b;
        }
    }
    let omega = ris_phases_for_baselines(&h_sum, &scene.h_br);
    let rows: Vec<Vec<Complex64>> = scene.h_ru[..k]
        .iter()
        .map(|h| effective_channel(h, &omega, &scene.h_br))
        .collect();
    let h_users = CMatrix::from_fn(k, m, |i, j| rows[i][j].conj());
    let w = zf_precoder(&h_users)?;
    // one common scalar so that ‖W‖_F² = P and every user sees the same gain
    let w = w.scale((rho * m as f64).sqrt() / w.frobenius_norm());
    let idx: Vec<Vec<usize>> = (0..k).map(draw_symbols).collect();
    let mut noise: Vec<_> = (0..k).map(|u| child_rng(seed, Lane::Noise, u as u64, trial)).collect();
    let mut errors = 0;
    let slots = idx[0].len();
    for t in 0..slots {
        let s: Vec<Complex64> = (0..k).map(|u| psk.map(idx[u][t])).collect::<Result<_>>()?;
        let x = w.mul_vec(&s);
        for u in 0..k {
            let y = inner(&rows[u], &x) + complex_normal(&mut noise[u]) * sigma;
            errors += (psk.detect(y) != idx[u][t]) as u64;
        }
    }
    Ok((errors, (slots * k) as u64))
}
