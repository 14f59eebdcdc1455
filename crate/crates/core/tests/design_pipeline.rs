//! End-to-end checks of the covariance design pipeline.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risac_core::frontend::{gen_quantized_waveform, normalize_covariance};
use risac_core::linalg::hermitian_eig;
use risac_core::precoder::{beampattern, design, solve_relaxed_sdp, BeampatternModel, DesignSpec, BOX_WIDTH_DEG};
use risac_core::scene::{ris_direction, steering_vector};
use risac_core::{
    AngularGrid, CMatrix, Complex64, DesiredBeampattern, ExperimentConfig, HermitianMatrix, PrecoderDesign,
    SolverOptions,
};

fn default_design() -> &'static PrecoderDesign {
    static D: OnceLock<PrecoderDesign> = OnceLock::new();
    D.get_or_init(|| design(&DesignSpec::isac(&ExperimentConfig::default(), 0.2).unwrap()).unwrap())
}

fn check_correlation(r: &HermitianMatrix) {
    for (i, d) in r.real_diag().iter().enumerate() {
        assert!((d - 1.0).abs() <= 1e-6, "diag[{i}] = {d}");
    }
    assert!(r.min_eigenvalue().unwrap() >= -1e-8);
    for z in r.matrix().as_slice() {
        assert!(z.re.abs() <= 1.0 + 1e-9 && z.im.abs() <= 1.0 + 1e-9);
    }
}

#[test]
fn default_design_invariants() {
    let d = default_design();
    check_correlation(&d.r_z_star);
    let ww = &d.w_circ * &d.w_circ.adjoint();
    assert!((&ww - d.r_x_circ.matrix()).frobenius_norm() < 1e-8);
    assert!(d.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(d.tau > 0.0);
    // the emitted covariance cannot beat the relaxation
    assert!(d.quantized_objective().unwrap() >= d.relaxed_objective() - 1e-9);
    // the unquantized baseline reproduces R_z*
    let wu = d.unquantized_precoder().unwrap();
    assert!((&(&wu * &wu.adjoint()) - d.r_z_star.matrix()).frobenius_norm() < 1e-8);
}

#[test]
fn quantized_pattern_peaks_at_targets_and_ris() {
    let d = default_design();
    let grid = &d.desired.grid;
    let j = beampattern(&d.r_z_quantized, grid);
    let cfg = ExperimentConfig::default();
    let ris = ris_direction(cfg.bs_position, cfg.ris_position).to_degrees();
    for center in [-45.0, 0.0, ris] {
        let found = (1..grid.len() - 1).any(|k| {
            let a = grid.angles()[k].to_degrees();
            (a - center).abs() <= 2.0 && j[k] > j[k - 1] && j[k] >= j[k + 1]
        });
        assert!(found, "no local maximum within 2 degrees of {center}");
    }
}

#[test]
fn large_beta_favours_ris_lobe() {
    let cfg = ExperimentConfig::default();
    let d = design(&DesignSpec::isac(&cfg, 0.9).unwrap()).unwrap();
    let grid = &d.desired.grid;
    let j = beampattern(&d.r_z_quantized, grid);
    let peak_near = |c: f64| {
        grid.angles()
            .iter()
            .zip(&j)
            .filter(|(a, _)| (a.to_degrees() - c).abs() <= BOX_WIDTH_DEG / 2.0)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    };
    let ris = peak_near(ris_direction(cfg.bs_position, cfg.ris_position).to_degrees());
    assert!(ris > peak_near(-45.0) && ris > peak_near(0.0));
}

#[test]
fn designed_precoder_drives_the_waveform_generator() {
    let d = default_design();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let wf = gen_quantized_waveform(&d.w_circ, 64, 16.0, &mut rng).unwrap();
    assert_eq!((wf.num_antennas(), wf.num_samples()), (16, 64));
    assert!(wf.samples.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
}

#[test]
fn planted_solution_is_recovered() {
    let m = 4;
    let grid = AngularGrid::uniform(181).unwrap();
    let a = steering_vector(20f64.to_radians(), m);
    let raw = &CMatrix::outer(&a, &a) + &CMatrix::identity(m).scale(0.3);
    let planted = normalize_covariance(&HermitianMatrix::new(raw).unwrap()).unwrap();
    let tau = 2.0;
    let values: Vec<f64> = beampattern(&planted, &grid).iter().map(|j| j / tau).collect();
    let d = DesiredBeampattern { grid, values };
    let sol = solve_relaxed_sdp(&d, m, &SolverOptions::default()).unwrap();
    assert!(sol.objective <= 1e-4, "objective {}", sol.objective);
}

#[test]
fn radar_only_pattern_has_no_ris_box() {
    let cfg = ExperimentConfig::default();
    let spec = DesignSpec::radar_only(&cfg).unwrap();
    let ris = ris_direction(cfg.bs_position, cfg.ris_position);
    for (a, v) in spec.desired.grid.angles().iter().zip(&spec.desired.values) {
        if (a - ris).abs() < 5f64.to_radians() {
            assert_eq!(*v, 0.0);
        }
    }
}

fn random_pattern(seed: u64) -> DesiredBeampattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = AngularGrid::uniform(91).unwrap();
    let c: f64 = rng.random_range(-60.0f64..60.0);
    let values = grid
        .angles()
        .iter()
        .map(|t| if (t.to_degrees() - c).abs() <= 8.0 { 1.0 } else { 0.0 })
        .collect();
    DesiredBeampattern { grid, values }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_output_is_a_correlation_matrix(seed in any::<u64>(), m in 2usize..6) {
        let d = random_pattern(seed);
        let sol = solve_relaxed_sdp(&d, m, &SolverOptions::default()).unwrap();
        check_correlation(&sol.r_z);
        prop_assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        let model = BeampatternModel::new(&d.grid, m);
        let (f, _, _) = model.profile(&HermitianMatrix::identity(m), &d.values).unwrap();
        prop_assert!(sol.objective <= f);
    }

    #[test]
    fn lag_model_matches_quadratic_form(seed in any::<u64>(), m in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = CMatrix::from_fn(m, m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let r = HermitianMatrix::symmetrize(&b * &b.adjoint());
        let grid = AngularGrid::uniform(61).unwrap();
        let fast = BeampatternModel::new(&grid, m).pattern(&r);
        let slow = beampattern(&r, &grid);
        for (x, y) in fast.iter().zip(&slow) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            prop_assert!(*y >= -1e-9);
        }
        let e = hermitian_eig(&r).unwrap();
        prop_assert!(e.eigenvalues.iter().all(|&l| l >= -1e-9));
    }
}
