//! Comparison-level behavior: degenerate scenarios, spatial
//! self-convergence, and the density transform identity on real runs.

use electrodiff::harness::config::{ExperimentConfig, ACCEPTANCE_CONFIG};
use electrodiff::harness::run_comparison;

fn reduced_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(ACCEPTANCE_CONFIG).unwrap();
    cfg.n = 32;
    cfg.t_final = 0.2;
    cfg.snapshots = 20;
    cfg
}

/// With no doping and fluid at rest both systems sit on the same constant
/// steady state, so every error metric vanishes.
#[test]
fn identical_steady_trajectories_give_zero_rows() {
    let mut cfg = reduced_config();
    cfg.doping.modes.clear();
    cfg.initial.vx_modes.clear();
    cfg.initial.vy_modes.clear();
    let comparison = run_comparison(&cfg, 0.1).unwrap();
    for row in &comparison.rows {
        assert!(row.theorem_sum <= 1e-10, "theorem_sum {}", row.theorem_sum);
        assert!(row.gamma <= 1e-10, "gamma {}", row.gamma);
        assert!(row.h1_error <= 1e-10);
    }
}

/// Metrics are finite and positive on the genuine scenario.
#[test]
fn acceptance_rows_are_finite_and_positive() {
    let comparison = run_comparison(&reduced_config(), 0.1).unwrap();
    for row in &comparison.rows {
        assert!(row.theorem_sum.is_finite() && row.theorem_sum > 0.0);
        assert!(row.gamma.is_finite() && row.gamma > 0.0);
        assert!(row.dissipation.is_finite());
        assert!(row.triple_norm_sq > 0.0);
    }
}

/// Halving the resolution moves the sup error by well under 5%: the fields
/// are smooth, so the measurement is spatially converged.
#[test]
fn sup_error_is_resolution_converged() {
    let lambda = 0.1;
    let mut coarse = reduced_config();
    coarse.n = 16;
    let mut fine = reduced_config();
    fine.n = 32;
    let sup = |cfg: &ExperimentConfig| {
        run_comparison(cfg, lambda)
            .unwrap()
            .rows
            .iter()
            .map(|r| r.h1_error)
            .fold(0.0f64, f64::max)
    };
    let (e_coarse, e_fine) = (sup(&coarse), sup(&fine));
    let rel = (e_coarse - e_fine).abs() / e_fine;
    assert!(rel < 0.05, "resolution sensitivity {rel:.4}");
}

/// The density transform identity ties the bundle to both Poisson
/// equations on an actual comparison run.
#[test]
fn transform_identity_holds_on_comparison() {
    let comparison = run_comparison(&reduced_config(), 0.1).unwrap();
    assert!(
        comparison.max_transform_residual <= 1e-8,
        "identity residual {}",
        comparison.max_transform_residual
    );
}

/// Bundling snapshots from different times is refused.
#[test]
fn misaligned_snapshots_are_rejected() {
    use electrodiff::diagnostics::{limit_e_time_derivatives, make_error_bundle, DiagnosticsError};
    use electrodiff::model::{DensityGuards, DopingProfile, LimitState, NpnsState, Params};
    use electrodiff::npns::StepControl;
    use electrodiff::spectral::{Grid, ScalarField, VectorField};

    let grid = Grid::new(2, 8).unwrap();
    let doping = DopingProfile::zero(grid.clone());
    let guards = DensityGuards::default();
    let ctl = StepControl {
        dt: 0.025,
        ..StepControl::default()
    };

    let npns0 = NpnsState::new(
        0.0,
        ScalarField::constant(grid.clone(), 1.0),
        ScalarField::constant(grid.clone(), 1.0),
        VectorField::zeros(grid.clone()),
    )
    .unwrap();
    let npns_traj = electrodiff::npns::run(
        &npns0,
        &doping,
        &Params::new(0.1, 1.0, 2).unwrap(),
        &ctl,
        &guards,
        0.0,
        &[0.0],
    )
    .unwrap();

    let limit0 = LimitState::new(
        0.0,
        ScalarField::constant(grid.clone(), 2.0),
        VectorField::zeros(grid),
        0.5,
    )
    .unwrap();
    let limit_traj = electrodiff::quasineutral::run_limit(
        &limit0,
        &doping,
        &Params::new(0.0, 1.0, 2).unwrap(),
        &ctl,
        &guards,
        0.1,
        &[0.0, 0.05, 0.1],
    )
    .unwrap();

    let e_rates = limit_e_time_derivatives(&limit_traj).unwrap();
    // t = 0 against t = 0.1: refused.
    let result = make_error_bundle(
        &npns_traj.snapshots[0],
        &limit_traj.snapshots[2],
        &e_rates[2],
        0.1,
    );
    assert!(matches!(
        result,
        Err(DiagnosticsError::MisalignedSnapshots { .. })
    ));
    // Aligned at t = 0: accepted.
    assert!(make_error_bundle(
        &npns_traj.snapshots[0],
        &limit_traj.snapshots[0],
        &e_rates[0],
        0.1
    )
    .is_ok());
}

/// Both trajectories share one step size, chosen to divide the snapshot
/// spacing.
#[test]
fn comparison_uses_common_aligned_dt() {
    let cfg = reduced_config();
    let comparison = run_comparison(&cfg, 0.2).unwrap();
    let spacing = cfg.t_final / cfg.snapshots as f64;
    let per_interval = spacing / comparison.dt;
    assert!((per_interval - per_interval.round()).abs() < 1e-9);
    // Rows cover exactly the interior snapshots.
    assert_eq!(comparison.rows.len(), cfg.snapshots - 1);
}
