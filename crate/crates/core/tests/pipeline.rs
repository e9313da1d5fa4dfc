use std::f64::consts::PI;

use homodyne_ml::oracle::wigner_exact;
use homodyne_ml::pipeline::{
    compare_grids, oracle_grid, reconstruct_wigner_grid, reconstruct_wigner_grid_with_kernel,
    reconstruct_wigner_point, Cutoff, ReconstructionConfig,
};
use homodyne_ml::sampling::sample_homodyne;
use homodyne_ml::{make_state, BinGrid, EmParams, Error, HomodyneRecord, KernelMatrix, StateKind};
use num_complex::Complex64;

fn vacuum_record(eta: f64, seed: u64) -> HomodyneRecord {
    let vacuum = make_state(StateKind::Vacuum, 1).unwrap();
    sample_homodyne(&vacuum, 8, 12_500, eta, seed).unwrap()
}

fn small_config(eta: f64) -> ReconstructionConfig {
    ReconstructionConfig {
        eta,
        x_min: -8.0,
        x_max: 8.0,
        bin_count: 400,
        n_max: Cutoff::Explicit(10),
        max_iter: 500,
        plateau_tol: 0.0,
        q_min: -1.0,
        q_max: 1.0,
        q_steps: 3,
        p_min: -1.0,
        p_max: 1.0,
        p_steps: 3,
        ..ReconstructionConfig::default()
    }
}

#[test]
fn vacuum_origin_is_one_over_pi() {
    let record = vacuum_record(1.0, 3);
    let kernel = KernelMatrix::build(BinGrid::new(-8.0, 8.0, 800).unwrap(), 10, 1.0).unwrap();
    let point =
        reconstruct_wigner_point(&record, 0.0, 0.0, &kernel, &EmParams::fixed(2_000)).unwrap();
    assert!((point.w - 1.0 / PI).abs() < 0.01, "W = {}", point.w);
    assert_eq!(point.overflow_fraction, 0.0);
    assert!(point.tail_mass < 1e-3);
}

#[test]
fn coherent_center_is_one_over_pi() {
    let alpha = Complex64::new(0.6, -0.8);
    let state = make_state(StateKind::Coherent(alpha), 30).unwrap();
    let record = sample_homodyne(&state, 16, 20_000, 0.85, 9).unwrap();
    let kernel = KernelMatrix::build(BinGrid::new(-8.0, 8.0, 800).unwrap(), 12, 0.85).unwrap();
    let (q, p) = (2f64.sqrt() * alpha.re, 2f64.sqrt() * alpha.im);
    let point = reconstruct_wigner_point(&record, q, p, &kernel, &EmParams::fixed(2_000)).unwrap();
    assert!((point.w - 1.0 / PI).abs() < 0.02, "W = {}", point.w);
}

#[test]
fn large_cat_is_negative_at_the_origin() {
    let kind = StateKind::Cat {
        alpha: Complex64::new(0.0, 2.0),
        relative_phase: PI,
    };
    let state = make_state(kind, kind.suggested_dim()).unwrap();
    let record = sample_homodyne(&state, 64, 100_000, 0.9, 7).unwrap();
    // columns above n = 22 lose up to 0.19 of their mass outside [-8, 8]
    let kernel =
        KernelMatrix::build_with_limit(BinGrid::new(-8.0, 8.0, 16_000).unwrap(), 39, 0.9, 0.25)
            .unwrap();
    let point = reconstruct_wigner_point(&record, 0.0, 0.0, &kernel, &EmParams::default()).unwrap();
    assert!((point.w + 1.0 / PI).abs() < 0.05, "W = {}", point.w);
}

#[test]
fn single_point_grid_matches_point_reconstruction() {
    let record = vacuum_record(0.8, 4);
    let config = ReconstructionConfig {
        q_min: 0.5,
        q_max: 0.5,
        q_steps: 1,
        p_min: -0.3,
        p_max: -0.3,
        p_steps: 1,
        ..small_config(0.8)
    };
    let grid = reconstruct_wigner_grid(&record, &config).unwrap();
    let kernel = KernelMatrix::build(config.bin_grid().unwrap(), 10, 0.8).unwrap();
    let point = reconstruct_wigner_point(&record, 0.5, -0.3, &kernel, &config.em_params()).unwrap();
    assert_eq!(grid.points.len(), 1);
    assert_eq!(grid.points[0].w, point.w);
    assert_eq!(grid.points[0].iterations, point.em.iterations_run);
}

#[test]
fn grid_is_independent_of_thread_count() {
    let record = vacuum_record(0.9, 5);
    let config = small_config(0.9);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| reconstruct_wigner_grid(&record, &config).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one, many);
    let coords: Vec<(f64, f64)> = one.points.iter().map(|pt| (pt.q, pt.p)).collect();
    let expected: Vec<(f64, f64)> = [-1.0, 0.0, 1.0]
        .iter()
        .flat_map(|&q| [-1.0, 0.0, 1.0].iter().map(move |&p| (q, p)))
        .collect();
    assert_eq!(coords, expected);
}

#[test]
fn reconstructed_values_respect_the_parity_bound() {
    let cat = StateKind::Cat {
        alpha: Complex64::new(0.0, 1.0),
        relative_phase: PI,
    };
    let state = make_state(cat, cat.suggested_dim()).unwrap();
    let record = sample_homodyne(&state, 8, 5_000, 0.9, 6).unwrap();
    let config = ReconstructionConfig {
        n_max: Cutoff::Explicit(16),
        q_steps: 5,
        p_steps: 5,
        ..small_config(0.9)
    };
    let grid = reconstruct_wigner_grid(&record, &config).unwrap();
    assert_eq!(grid.failures(), 0);
    assert!(grid.values().all(|w| w.abs() <= (1.0 + 1e-6) / PI));
}

#[test]
fn reconstruction_tracks_the_oracle_on_a_small_grid() {
    let state = make_state(StateKind::Coherent(Complex64::new(0.5, 0.0)), 30).unwrap();
    let record = sample_homodyne(&state, 12, 20_000, 0.9, 8).unwrap();
    let config = ReconstructionConfig {
        n_max: Cutoff::Explicit(12),
        max_iter: 1_000,
        ..small_config(0.9)
    };
    let grid = reconstruct_wigner_grid(&record, &config).unwrap();
    let oracle = oracle_grid(&state, &config, "coherent").unwrap();
    let norms = compare_grids(&grid, &oracle, 0.05).unwrap();
    assert_eq!(norms.compared, 9);
    assert!(norms.max_abs < 0.03, "max deviation {}", norms.max_abs);
    assert_eq!(norms.sign_mismatches, 0);
    assert!((oracle.at(1, 1).w - wigner_exact(&state, 0.0, 0.0, 40).unwrap()).abs() < 1e-12);
}

#[test]
fn efficiency_mismatch_is_rejected() {
    let record = vacuum_record(0.8, 1);
    let err = reconstruct_wigner_grid(&record, &small_config(0.9)).unwrap_err();
    assert!(matches!(err, Error::EtaMismatch { .. }), "{err}");
    let kernel = KernelMatrix::build(BinGrid::new(-8.0, 8.0, 100).unwrap(), 4, 0.9).unwrap();
    let err =
        reconstruct_wigner_point(&record, 0.0, 0.0, &kernel, &EmParams::fixed(10)).unwrap_err();
    assert!(matches!(err, Error::EtaMismatch { .. }), "{err}");
}

#[test]
fn shifted_data_leaving_the_bin_range_is_an_overflow() {
    let record = vacuum_record(1.0, 2);
    let kernel = KernelMatrix::build(BinGrid::new(-5.0, 5.0, 100).unwrap(), 4, 1.0).unwrap();
    let err =
        reconstruct_wigner_point(&record, 4.5, 0.0, &kernel, &EmParams::fixed(10)).unwrap_err();
    assert!(matches!(err, Error::Overflow { .. }), "{err}");
}

#[test]
fn failing_points_do_not_stop_the_grid() {
    let record = vacuum_record(1.0, 2);
    let config = ReconstructionConfig {
        x_min: -5.0,
        x_max: 5.0,
        bin_count: 100,
        n_max: Cutoff::Explicit(4),
        max_iter: 50,
        q_min: 0.0,
        q_max: 8.0,
        q_steps: 2,
        p_min: 0.0,
        p_max: 0.0,
        p_steps: 1,
        ..small_config(1.0)
    };
    let grid = reconstruct_wigner_grid(&record, &config).unwrap();
    assert!(grid.points[0].is_ok());
    assert!(grid.points[1].w.is_nan());
    assert!(grid.points[1]
        .error
        .as_deref()
        .unwrap()
        .starts_with("range:"));
    assert_eq!(grid.failures(), 1);
}

#[test]
fn grid_fails_when_every_point_fails() {
    let record = vacuum_record(1.0, 2);
    let config = ReconstructionConfig {
        q_min: 20.0,
        q_max: 30.0,
        q_steps: 2,
        p_steps: 1,
        p_min: 0.0,
        p_max: 0.0,
        ..small_config(1.0)
    };
    let err = reconstruct_wigner_grid(&record, &config).unwrap_err();
    assert_eq!(err.category(), "range", "{err}");
}

#[test]
fn kernel_must_match_the_configuration() {
    let record = vacuum_record(0.9, 1);
    let config = small_config(0.9);
    let kernel = KernelMatrix::build(config.bin_grid().unwrap(), 8, 0.9).unwrap();
    let err = reconstruct_wigner_grid_with_kernel(&record, &config, &kernel).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch(_)), "{err}");
}
