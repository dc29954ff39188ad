//! Comparison runs and λ-sweeps.
//!
//! A comparison integrates the screened system from well-prepared data and
//! the limit system from the same limit data over identical snapshot times,
//! then reduces the trajectory differences to functional rows. Both runs
//! use one common step size (the smaller of the two stability bounds) so
//! the shared part of the temporal error cancels in the difference and the
//! λ-driven signal dominates down to the smallest Debye length.

use serde::Serialize;

use crate::diagnostics::{
    elliptic_regularity_checks, equivalence_ratio, error_bundles, theorem_error_norms,
    transform_identity_residual, ErrorBundle, FunctionalRow,
};
use crate::model::{validate_compatibility, well_prepared_initial};
use crate::npns::{self, StepControl, StepDiagnostics};
use crate::quasineutral;

use super::config::ExperimentConfig;
use super::ratefit::{fit_power_law, RateFit};
use super::HarnessError;

/// Everything produced by one screened-vs-limit comparison.
#[derive(Debug)]
pub struct ComparisonResult {
    pub lambda: f64,
    /// Common step size used by both trajectories.
    pub dt: f64,
    /// Functional rows at the interior snapshot times.
    pub rows: Vec<FunctionalRow>,
    /// The bundles behind those rows (same indexing).
    pub bundles: Vec<ErrorBundle>,
    pub npns_steps: Vec<StepDiagnostics>,
    pub limit_steps: Vec<StepDiagnostics>,
    /// All discrete elliptic-regularity inequalities held on every bundle.
    pub regularity_ok: bool,
    /// Observed range of `Γ / |||·|||²` over the bundles.
    pub ratio_range: Option<(f64, f64)>,
    /// Largest relative residual of the density transform identity.
    pub max_transform_residual: f64,
}

/// Runs one comparison at the given Debye length.
pub fn run_comparison(
    cfg: &ExperimentConfig,
    lambda: f64,
) -> Result<ComparisonResult, HarnessError> {
    let grid = cfg.build_grid()?;
    let doping = cfg.build_doping(&grid)?;
    let limit0 = cfg.build_limit_initial(&grid)?;
    let params = cfg.params(lambda)?;
    let params_limit = cfg.params(0.0)?;
    let guards = cfg.guards();

    let npns0 = well_prepared_initial(&limit0, &doping, &params)?;
    let compat = validate_compatibility(&npns0, &doping);
    if !compat.all_pass() {
        let failing: Vec<String> = compat
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| format!("{} = {:.3e}", e.name, e.residual))
            .collect();
        return Err(HarnessError::IncompatibleInitialData(failing.join(", ")));
    }

    let base_ctl = cfg.step_control();
    let dt_npns = npns::stable_dt(&npns0, &doping, &params, &base_ctl);
    let dt_limit = quasineutral::stable_dt_limit(&limit0, &doping, &base_ctl);
    let ctl = StepControl {
        dt: dt_npns.min(dt_limit),
        ..base_ctl
    };

    let times = cfg.snapshot_times();
    let limit_traj = quasineutral::run_limit(
        &limit0,
        &doping,
        &params_limit,
        &ctl,
        &guards,
        cfg.t_final,
        &times,
    )?;
    let npns_traj = npns::run(&npns0, &doping, &params, &ctl, &guards, cfg.t_final, &times)?;
    debug_assert_eq!(npns_traj.dt, limit_traj.dt);

    let all_bundles = error_bundles(&npns_traj, &limit_traj, lambda)?;
    // Interior snapshots only: the endpoint rates of the limit field come
    // from one-sided stencils and stay out of the fitted metrics.
    let interior: Vec<ErrorBundle> = all_bundles
        .into_iter()
        .skip(1)
        .take(times.len().saturating_sub(2))
        .collect();
    let rows: Vec<FunctionalRow> = interior.iter().map(theorem_error_norms).collect();

    let mut regularity_ok = true;
    let mut ratio_range: Option<(f64, f64)> = None;
    let mut max_transform_residual = 0.0f64;
    for bundle in &interior {
        if elliptic_regularity_checks(bundle).iter().any(|c| !c.pass) {
            regularity_ok = false;
        }
        if let Some(r) = equivalence_ratio(bundle) {
            ratio_range = Some(match ratio_range {
                None => (r, r),
                Some((lo, hi)) => (lo.min(r), hi.max(r)),
            });
        }
        max_transform_residual = max_transform_residual.max(transform_identity_residual(bundle));
    }

    Ok(ComparisonResult {
        lambda,
        dt: npns_traj.dt,
        rows,
        bundles: interior,
        npns_steps: npns_traj.steps,
        limit_steps: limit_traj.steps,
        regularity_ok,
        ratio_range,
        max_transform_residual,
    })
}

/// Sup over snapshot times of each fitted metric for one λ.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaSupRow {
    pub lambda: f64,
    pub sup_theorem_sum: f64,
    pub sup_gamma: f64,
    pub sup_h1_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub lambdas: Vec<f64>,
    pub sup_rows: Vec<LambdaSupRow>,
    /// Fit of `sup_t` of the theorem norm sum against λ.
    pub theorem_fit: RateFit,
    /// Fit of `sup_t Γ` against λ.
    pub gamma_fit: RateFit,
}

#[derive(Debug)]
pub struct SweepResult {
    /// Functional rows per λ, in the configured (decreasing) order.
    pub per_lambda: Vec<(f64, Vec<FunctionalRow>)>,
    pub summary: SweepSummary,
}

fn sup_metric(rows: &[FunctionalRow], pick: impl Fn(&FunctionalRow) -> f64) -> f64 {
    rows.iter().map(&pick).fold(0.0f64, f64::max)
}

/// Runs one comparison per configured λ and fits the observed rates.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    let mut per_lambda = Vec::with_capacity(cfg.lambdas.len());
    let mut sup_rows = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let comparison = run_comparison(cfg, lambda)?;
        sup_rows.push(LambdaSupRow {
            lambda,
            sup_theorem_sum: sup_metric(&comparison.rows, |r| r.theorem_sum),
            sup_gamma: sup_metric(&comparison.rows, |r| r.gamma),
            sup_h1_error: sup_metric(&comparison.rows, |r| r.h1_error),
        });
        per_lambda.push((lambda, comparison.rows));
    }
    let theorem_pairs: Vec<(f64, f64)> = sup_rows
        .iter()
        .map(|r| (r.lambda, r.sup_theorem_sum))
        .collect();
    let gamma_pairs: Vec<(f64, f64)> = sup_rows.iter().map(|r| (r.lambda, r.sup_gamma)).collect();
    let summary = SweepSummary {
        lambdas: cfg.lambdas.clone(),
        sup_rows,
        theorem_fit: fit_power_law(&theorem_pairs)?,
        gamma_fit: fit_power_law(&gamma_pairs)?,
    };
    Ok(SweepResult {
        per_lambda,
        summary,
    })
}
