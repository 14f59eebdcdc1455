//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use risac_core::comm::{simulate_sep, SepPoint};
use risac_core::experiment::{run_beampattern, run_oracles, run_sep};
use risac_core::frontend::gen_quantized_waveform;
use risac_core::oracles::{
    arcsine_monte_carlo, discrete_gap, gradient_finite_difference, phase_sampling, purely_real_gain, solver_grid_m2,
    OracleScale,
};
use risac_core::precoder::{beampattern, design, DesignSpec};
use risac_core::rng::{child_rng, complex_normal, Lane};
use risac_core::scene::{gen_target_channel_with, linear_to_db, ris_direction};
use risac_core::{CMatrix, Complex64, ExperimentConfig, PhaseResolution, PrecoderDesign, Scheme, SepEstimate};

const ARCSINE_TOL: f64 = 5e-3;
const ARCSINE_SAMPLES: usize = 1_000_000;
const DISCRETE_EXCESS_TOL: f64 = 1e-12;
const REAL_GAIN_TOL: f64 = 1e-12;
const GRID_TOL: f64 = 1e-3;
const PEAK_WINDOW_DEG: f64 = 2.0;
const SIDELOBE_EXCLUSION_DEG: f64 = 10.0;
const PEAK_MARGIN_DB: f64 = 6.0;
const ILLUMINATION_GAP_DB: f64 = 2.5;
const ILLUMINATION_SEEDS: u64 = 10;
const ILLUMINATION_SAMPLES: usize = 100_000;
const OPERATING_POWER_DB: f64 = 114.0;
const REALIZATIONS: usize = 2000;
const SYMBOLS: usize = 50;
const RIST4_RATIO: f64 = 1.2;
const SE_SLACK: f64 = 2.0;
const ZF_RATIO: f64 = 10.0;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-6;

struct Verdict {
    id: &'static str,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(v: &Verdict) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {} {}: {}", v.id, v.name, v.detail);
}

fn arcsine() -> Verdict {
    let start = Instant::now();
    let devs: Vec<f64> = (0..5)
        .map(|s| arcsine_monte_carlo(8, ARCSINE_SAMPLES, s).unwrap())
        .collect();
    let worst = devs.iter().copied().fold(0.0, f64::max);
    Verdict {
        id: "C1",
        name: "arcsine law",
        passed: worst <= ARCSINE_TOL,
        detail: format!(
            "max entrywise deviation {worst:.2e} over 5 precoders (tol {ARCSINE_TOL:e}, {:.1} s)",
            start.elapsed().as_secs_f64()
        ),
    }
}

fn closed_form_optimality() -> Verdict {
    let start = Instant::now();
    let sampling = phase_sampling(100, 16, 10_000, 0).unwrap();
    let gaps: Vec<_> = (1..=5).map(|b| discrete_gap(4, b, 100, 0).unwrap()).collect();
    let excess = gaps.iter().map(|g| g.max_excess).fold(f64::NEG_INFINITY, f64::max);
    let b2_ok = gaps[1].max_excess <= DISCRETE_EXCESS_TOL;
    let monotone = gaps.windows(2).all(|w| w[1].mean_gap <= w[0].mean_gap);
    let means: Vec<String> = gaps.iter().map(|g| format!("{:.3e}", g.mean_gap)).collect();
    Verdict {
        id: "C2",
        name: "closed-form phase optimality",
        passed: sampling.violations == 0 && b2_ok && excess <= DISCRETE_EXCESS_TOL && monotone,
        detail: format!(
            "{} violations (min ratio {:.4}); discrete max excess {excess:.1e}; mean gap b=1..5 [{}] ({:.1} s)",
            sampling.violations,
            sampling.min_ratio,
            means.join(", "),
            start.elapsed().as_secs_f64()
        ),
    }
}

fn real_gain(cfg: &ExperimentConfig) -> Verdict {
    let worst = purely_real_gain(100_000, cfg.num_ris, 0).unwrap();
    Verdict {
        id: "C3",
        name: "purely real gain",
        passed: worst < REAL_GAIN_TOL,
        detail: format!("max |Im alpha| {worst:.2e} over 1e5 instances (tol {REAL_GAIN_TOL:e})"),
    }
}

fn solver_grid() -> Verdict {
    let start = Instant::now();
    let cmp = solver_grid_m2(10, 200, 0).unwrap();
    let worst = cmp.iter().map(|c| c.excess()).fold(f64::NEG_INFINITY, f64::max);
    Verdict {
        id: "C4",
        name: "M=2 solver vs grid",
        passed: worst <= GRID_TOL,
        detail: format!(
            "max solver excess {worst:.2e} over 10 patterns (tol {GRID_TOL:e}, {:.1} s)",
            start.elapsed().as_secs_f64()
        ),
    }
}

fn beampattern_shape(cfg: &ExperimentConfig, d: &PrecoderDesign) -> Verdict {
    let grid = &d.desired.grid;
    let angles: Vec<f64> = grid.angles().iter().map(|a| a.to_degrees()).collect();
    let j_db: Vec<f64> = beampattern(&d.r_z_quantized, grid)
        .iter()
        .map(|&v| linear_to_db(v))
        .collect();
    let ris = ris_direction(cfg.bs_position, cfg.ris_position).to_degrees();
    let centers = [cfg.target_angles_deg.clone(), vec![ris]].concat();

    let mut side: Vec<f64> = angles
        .iter()
        .zip(&j_db)
        .filter(|(a, _)| centers.iter().all(|c| (*a - c).abs() > SIDELOBE_EXCLUSION_DEG))
        .map(|(_, v)| *v)
        .collect();
    side.sort_by(f64::total_cmp);
    let median = side[side.len() / 2];

    let mut ok = true;
    let mut parts = Vec::new();
    for &c in &centers {
        let peak = (1..angles.len() - 1)
            .filter(|&k| (angles[k] - c).abs() <= PEAK_WINDOW_DEG && j_db[k] > j_db[k - 1] && j_db[k] >= j_db[k + 1])
            .max_by(|&a, &b| j_db[a].total_cmp(&j_db[b]));
        match peak {
            Some(k) => {
                let margin = j_db[k] - median;
                ok &= margin >= PEAK_MARGIN_DB;
                parts.push(format!("{c:.1} deg: max at {:.0} deg, +{margin:.2} dB", angles[k]));
            }
            None => {
                ok = false;
                parts.push(format!("{c:.1} deg: no local maximum"));
            }
        }
    }
    Verdict {
        id: "C5",
        name: "beampattern shape",
        passed: ok,
        detail: format!(
            "median sidelobe {median:.2} dB; {} (need +{PEAK_MARGIN_DB} dB)",
            parts.join("; ")
        ),
    }
}

/// Worst-case sampled illumination `min_t mean |g_t^H x_n|²` at unit
/// per-antenna power.
fn sampled_worst_case(samples: &[Vec<Complex64>], channels: &[Vec<Complex64>]) -> f64 {
    channels
        .iter()
        .map(|g| {
            let acc: f64 = samples
                .iter()
                .map(|x| {
                    g.iter()
                        .zip(x)
                        .map(|(gi, xi)| gi.conj() * xi)
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum();
            acc / samples.len() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn illumination_gap(cfg: &ExperimentConfig, designs: &[(f64, PrecoderDesign)]) -> Verdict {
    let m = cfg.num_antennas;
    let channels: Vec<Vec<Complex64>> = cfg
        .target_angles_deg
        .iter()
        .map(|a| gen_target_channel_with(&cfg.channel, a.to_radians(), cfg.target_distance_m, m).unwrap())
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.2, 0.5] {
        let d = &designs.iter().find(|(b, _)| *b == beta).expect("beta designed").1;
        let wu = d.unquantized_precoder().unwrap();
        let gaps: Vec<f64> = (0..ILLUMINATION_SEEDS)
            .into_par_iter()
            .map(|seed| {
                let mut rng = child_rng(seed, Lane::Waveform, 0, 0);
                let wf = gen_quantized_waveform(&d.w_circ, ILLUMINATION_SAMPLES, m as f64, &mut rng).unwrap();
                let quantized: Vec<Vec<Complex64>> = (0..wf.num_samples()).map(|n| wf.sample(n)).collect();
                let mut rng = child_rng(seed, Lane::Waveform, 1, 0);
                let unquantized: Vec<Vec<Complex64>> = (0..ILLUMINATION_SAMPLES)
                    .map(|_| {
                        let t: Vec<Complex64> = (0..m).map(|_| complex_normal(&mut rng)).collect();
                        wu.mul_vec(&t)
                    })
                    .collect();
                linear_to_db(sampled_worst_case(&unquantized, &channels))
                    - linear_to_db(sampled_worst_case(&quantized, &channels))
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        ok &= mean <= ILLUMINATION_GAP_DB;
        parts.push(format!("beta {beta}: {mean:.3} dB"));
    }
    Verdict {
        id: "C6",
        name: "quantization loss",
        passed: ok,
        detail: format!(
            "mean worst-case gap over {ILLUMINATION_SEEDS} seeds: {} (tol {ILLUMINATION_GAP_DB} dB)",
            parts.join(", ")
        ),
    }
}

fn sep(cfg: &ExperimentConfig, scheme: Scheme, w: &CMatrix, power_db: f64, pool: &rayon::ThreadPool) -> SepEstimate {
    let p = SepPoint {
        config: cfg,
        scheme,
        precoder: w,
        power_db,
    };
    simulate_sep(&p, pool).unwrap()
}

/// Every consecutive pair non-increasing up to `SE_SLACK` combined
/// standard errors.
fn non_increasing(xs: &[SepEstimate]) -> bool {
    xs.windows(2).all(|w| {
        let slack = SE_SLACK * (w[0].standard_error().powi(2) + w[1].standard_error().powi(2)).sqrt();
        w[1].sep <= w[0].sep + slack
    })
}

fn fmt_seps(xs: &[SepEstimate]) -> String {
    xs.iter()
        .map(|e| format!("{:.3e}", e.sep))
        .collect::<Vec<_>>()
        .join(", ")
}

fn sep_criteria(cfg: &ExperimentConfig, designs: &[(f64, PrecoderDesign)], pool: &rayon::ThreadPool) -> [Verdict; 2] {
    let start = Instant::now();
    let w = &designs
        .iter()
        .find(|(b, _)| *b == cfg.beta)
        .expect("beta designed")
        .1
        .w_circ;
    let rist = Scheme::Rist(cfg.ris_bits);
    let rist2 = sep(cfg, Scheme::Rist(PhaseResolution::Bits(2)), w, OPERATING_POWER_DB, pool);
    let qmrt = sep(cfg, Scheme::Qmrt, w, OPERATING_POWER_DB, pool);
    let rist4 = sep(cfg, Scheme::Rist(PhaseResolution::Bits(4)), w, OPERATING_POWER_DB, pool);
    let rist_inf = sep(
        cfg,
        Scheme::Rist(PhaseResolution::Continuous),
        w,
        OPERATING_POWER_DB,
        pool,
    );
    let zf = sep(cfg, Scheme::Zf(2), w, OPERATING_POWER_DB, pool);
    let by_beta: Vec<SepEstimate> = designs
        .iter()
        .map(|(_, d)| sep(cfg, rist, &d.w_circ, OPERATING_POWER_DB, pool))
        .collect();
    let by_power: Vec<SepEstimate> = cfg.power_db_sweep.iter().map(|&p| sep(cfg, rist, w, p, pool)).collect();

    let order_ok = rist2.sep < qmrt.sep;
    let ratio4 = rist4.sep / rist_inf.sep;
    let ratio_ok = ratio4 <= RIST4_RATIO;
    let beta_ok = non_increasing(&by_beta);
    let power_ok = non_increasing(&by_power);
    let zf_ratio = zf.sep / rist_inf.sep;
    let elapsed = start.elapsed().as_secs_f64();
    [
        Verdict {
            id: "C7",
            name: "SEP orderings",
            passed: order_ok && ratio_ok && beta_ok && power_ok,
            detail: format!(
                "{OPERATING_POWER_DB} dB, beta {}, {} symbols: RIST-2 {:.4} vs QMRT {:.4} [{}]; RIST-4/RIST-inf {ratio4:.3} (tol {RIST4_RATIO}) [{}]; {rist} over beta [{}] [{}]; over power [{}] [{}] ({elapsed:.0} s)",
                cfg.beta,
                rist2.trials,
                rist2.sep,
                qmrt.sep,
                if order_ok { "ok" } else { "violated" },
                if ratio_ok { "ok" } else { "violated" },
                fmt_seps(&by_beta),
                if beta_ok { "ok" } else { "violated" },
                fmt_seps(&by_power),
                if power_ok { "ok" } else { "violated" },
            ),
        },
        Verdict {
            id: "C8",
            name: "ZF multi-user degradation",
            passed: zf_ratio >= ZF_RATIO,
            detail: format!("ZF-2 {:.4} vs RIST-inf {:.4}: ratio {zf_ratio:.1} (need {ZF_RATIO})", zf.sep, rist_inf.sep),
        },
    ]
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::default();
    cfg.num_antennas = 8;
    cfg.num_ris = 32;
    cfg.realizations = 40;
    cfg.symbols_per_realization = 20;
    cfg.beta_sweep = vec![0.2, 0.5];
    cfg.power_db_sweep = vec![110.0, 114.0];
    cfg.grid_points = 91;
    let runs: Vec<Vec<(String, Vec<u8>)>> = [1usize, 8, 8]
        .iter()
        .map(|&workers| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
            let dir = tempfile::tempdir().unwrap();
            run_beampattern(&cfg, dir.path(), &pool).unwrap();
            run_sep(&cfg, dir.path(), &pool).unwrap();
            run_oracles(&OracleScale::quick(), cfg.master_seed, dir.path(), &pool).unwrap();
            read_csvs(dir.path())
        })
        .collect();
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    Verdict {
        id: "C9",
        name: "determinism",
        passed: identical && names.len() == 6,
        detail: format!(
            "{} CSVs [{}] at workers 1, 8, 8: {}",
            names.len(),
            names.join(", "),
            if identical { "byte-identical" } else { "differ" }
        ),
    }
}

fn gradient() -> Verdict {
    let err = gradient_finite_difference(20, 4, GRADIENT_STEP, 0).unwrap();
    Verdict {
        id: "C10",
        name: "gradient check",
        passed: err <= GRADIENT_TOL,
        detail: format!("max relative error {err:.2e} over 20 instances (tol {GRADIENT_TOL:e})"),
    }
}

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.realizations = REALIZATIONS;
    cfg.symbols_per_realization = SYMBOLS;
    let pool = rayon::ThreadPoolBuilder::new().build().unwrap();

    let mut verdicts = vec![arcsine(), closed_form_optimality(), real_gain(&cfg), solver_grid()];
    for v in &verdicts {
        report(v);
    }
    let start = Instant::now();
    let designs: Vec<(f64, PrecoderDesign)> = pool.install(|| {
        cfg.beta_sweep
            .par_iter()
            .map(|&b| (b, design(&DesignSpec::isac(&cfg, b).unwrap()).unwrap()))
            .collect()
    });
    println!(
        "designed {} precoders in {:.1} s",
        designs.len(),
        start.elapsed().as_secs_f64()
    );
    let main_design = &designs.iter().find(|(b, _)| *b == cfg.beta).expect("beta in sweep").1;

    let later = vec![beampattern_shape(&cfg, main_design), illumination_gap(&cfg, &designs)];
    for v in &later {
        report(v);
    }
    verdicts.extend(later);
    for v in sep_criteria(&cfg, &designs, &pool) {
        report(&v);
        verdicts.push(v);
    }
    for v in [determinism(), gradient()] {
        report(&v);
        verdicts.push(v);
    }

    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
