//! Time integration of the screened electro-diffusion system.
//!
//! The semi-discrete form advanced here is
//!
//! ```text
//! n_t = Δn + div(nE − nv)
//! p_t = Δp − div(pE + pv)
//! λ²ΔΦ = n − p − D,  E = −∇Φ
//! v_t = P[−(v·∇)v − (n − p)E] + μΔv,   div v = 0
//! ```
//!
//! with `P` the Leray projection standing in for the pressure gradient.
//! Diffusion is implicit (exact mode-wise division), drift, advection, and
//! the electric force are explicit under the SBDF2 extrapolation, and every
//! pointwise product is dealiased by the 2/3 rule before re-entering
//! spectral space.

use std::sync::Arc;

use crate::model::{DensityGuards, DopingProfile, ModelError, NpnsState, Params};
use crate::spectral::{
    dealias, divergence, gradient, inverse_laplacian, l2_norm, l2_norm_vector, laplacian,
    laplacian_vector, leray_project, pointwise_product, zero_mean, Grid, ScalarField,
    SpectralError, VectorField,
};
use crate::stepping;

/// Field norms beyond this threshold abort a run as unstable.
const BLOWUP_NORM: f64 = 1e6;
/// Velocity scale floor in the advective time-step bound.
const VELOCITY_FLOOR: f64 = 1e-14;
/// Smallest admissible time step.
const DT_FLOOR: f64 = 1e-9;

/// Time-step policy.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// User step-size cap; the run never steps larger than this.
    pub dt: f64,
    /// Courant factor for drift and advection.
    pub cfl_advect: f64,
    /// Safety factor for the `λ²/(n+p)` charge-relaxation bound.
    pub cfl_relax: f64,
    /// 2/3-rule dealiasing of pointwise products.
    pub dealias: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt: 0.1,
            cfl_advect: 0.4,
            cfl_relax: 0.5,
            dealias: true,
        }
    }
}

/// Exact semi-discrete right-hand sides at one instant.
#[derive(Debug, Clone)]
pub struct NpnsTendency {
    pub dn_dt: ScalarField,
    pub dp_dt: ScalarField,
    /// Leray-projected velocity tendency.
    pub dv_dt: VectorField,
}

/// Externally prescribed source fields (manufactured-solution studies).
/// Density sources must be mean-free (mass is conserved structurally); the
/// runner zeroes any residual sampling mean.
#[derive(Debug, Clone)]
pub struct NpnsSourceFields {
    pub n: ScalarField,
    pub p: ScalarField,
    pub v: VectorField,
}

/// Time-dependent source term for forced runs.
pub trait NpnsSource {
    fn eval(&self, t: f64, grid: &Arc<Grid>) -> NpnsSourceFields;
}

impl<F> NpnsSource for F
where
    F: Fn(f64, &Arc<Grid>) -> NpnsSourceFields,
{
    fn eval(&self, t: f64, grid: &Arc<Grid>) -> NpnsSourceFields {
        self(t, grid)
    }
}

/// Per-step diagnostics row; the quasineutral solver emits the same format
/// with `n`, `p` recovered from `Z`.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub t: f64,
    pub norm_n: f64,
    pub norm_p: f64,
    pub norm_z: f64,
    pub norm_v: f64,
    pub mean_n: f64,
    pub mean_p: f64,
    pub min_n: f64,
    pub min_p: f64,
    pub min_z: f64,
    /// `‖div v‖ / ‖v‖` (zero for a fluid at rest).
    pub div_v_rel: f64,
    /// Relative residual of the field equation: the Poisson equation here,
    /// the variable-coefficient elliptic relation in the limit solver.
    pub residual_rel: f64,
    /// Correction iterations of the elliptic solve (zero for the exact
    /// spectral Poisson inversion).
    pub elliptic_iterations: usize,
}

/// State plus derived fields stored at a snapshot time.
#[derive(Debug, Clone)]
pub struct NpnsSnapshot {
    pub state: NpnsState,
    pub phi: ScalarField,
    pub e: VectorField,
    /// Exact semi-discrete tendencies at the snapshot.
    pub tendency: NpnsTendency,
    /// Electric-field rate from `λ²ΔΦ_t = n_t − p_t`.
    pub e_t: VectorField,
}

#[derive(Debug)]
pub struct NpnsTrajectory {
    pub snapshots: Vec<NpnsSnapshot>,
    pub steps: Vec<StepDiagnostics>,
    pub dt: f64,
}

/// Errors from the screened solver.
#[derive(Debug, thiserror::Error)]
pub enum NpnsError {
    #[error("the Poisson equation degenerates at lambda = 0; use the quasineutral solver")]
    LambdaZero,
    #[error(transparent)]
    NonZeroMean(#[from] SpectralError),
    #[error("field norm {norm:.3e} exceeded {BLOWUP_NORM:.1e} at t = {t:.6}; the run is unstable")]
    BlowUp { t: f64, norm: f64 },
    #[error("density fell to {min:.3e} at t = {t:.6}, beyond the negative-undershoot budget")]
    AbortOnNegativeDensity { t: f64, min: f64 },
    #[error("invalid snapshot schedule: {0}")]
    InvalidSnapshots(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Solves `λ²ΔΦ = n − p − D` in the mean-zero gauge and returns
/// `(Φ, E = −∇Φ)`.
pub fn solve_poisson(
    n: &ScalarField,
    p: &ScalarField,
    doping: &DopingProfile,
    lambda: f64,
) -> Result<(ScalarField, VectorField), NpnsError> {
    if lambda <= 0.0 {
        return Err(NpnsError::LambdaZero);
    }
    let rhs = n.sub(p).sub(doping.field());
    let scale = l2_norm(n) + l2_norm(p) + l2_norm(doping.field()) + 1.0;
    let mean = rhs.mean();
    if mean.abs() > 1e-10 * scale {
        return Err(NpnsError::NonZeroMean(SpectralError::NonZeroMean {
            mean: mean.abs(),
            norm: scale,
        }));
    }
    // The compatible part of the mean is round-off; drop it exactly so the
    // inversion is well posed.
    let rhs = zero_mean(&rhs).scale(1.0 / (lambda * lambda));
    let phi = inverse_laplacian(&rhs)?;
    let e = gradient(&phi).scale(-1.0);
    Ok((phi, e))
}

/// Electric-field rate: solves `λ²ΔΦ_t = n_t − p_t` (the doping is static).
pub fn solve_poisson_rate(
    dn_dt: &ScalarField,
    dp_dt: &ScalarField,
    lambda: f64,
) -> Result<(ScalarField, VectorField), NpnsError> {
    if lambda <= 0.0 {
        return Err(NpnsError::LambdaZero);
    }
    let rhs = zero_mean(&dn_dt.sub(dp_dt)).scale(1.0 / (lambda * lambda));
    let phi_t = inverse_laplacian(&rhs)?;
    let e_t = gradient(&phi_t).scale(-1.0);
    Ok((phi_t, e_t))
}

fn product(a: &ScalarField, b: &ScalarField, dealias_on: bool) -> ScalarField {
    let raw = pointwise_product(a, b);
    if dealias_on {
        dealias(&raw)
    } else {
        raw
    }
}

/// Explicit (non-diffusive) tendencies; the velocity part is returned
/// unprojected since projection commutes with the diagonal implicit solve.
fn explicit_tendency(
    state: &NpnsState,
    e: &VectorField,
    dealias_on: bool,
) -> (ScalarField, ScalarField, VectorField) {
    let v = state.v();
    let dim = v.dim();

    let drift_n = VectorField::new(
        (0..dim)
            .map(|a| product(state.n(), &e.component(a).sub(v.component(a)), dealias_on))
            .collect(),
    );
    let en = divergence(&drift_n);

    let drift_p = VectorField::new(
        (0..dim)
            .map(|a| {
                product(state.p(), &e.component(a).add(v.component(a)), dealias_on).scale(-1.0)
            })
            .collect(),
    );
    let ep = divergence(&drift_p);

    let n_minus_p = state.n().sub(state.p());
    let jacobian: Vec<VectorField> = (0..dim).map(|i| gradient(v.component(i))).collect();
    let ev = VectorField::new(
        (0..dim)
            .map(|i| {
                let mut acc = product(&n_minus_p, e.component(i), dealias_on).scale(-1.0);
                for j in 0..dim {
                    let adv = product(v.component(j), jacobian[i].component(j), dealias_on);
                    acc = acc.sub(&adv);
                }
                acc
            })
            .collect(),
    );
    (en, ep, ev)
}

/// Assembles the full semi-discrete right-hand side of the system at one
/// instant: diffusion plus drift, advection, and the Leray-projected
/// electric force.
pub fn npns_rhs(
    state: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
) -> Result<NpnsTendency, NpnsError> {
    npns_rhs_with(state, doping, params, true, None)
}

fn npns_rhs_with(
    state: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
    dealias_on: bool,
    source: Option<&NpnsSourceFields>,
) -> Result<NpnsTendency, NpnsError> {
    let (_phi, e) = solve_poisson(state.n(), state.p(), doping, params.lambda)?;
    let (mut en, mut ep, mut ev) = explicit_tendency(state, &e, dealias_on);
    if let Some(src) = source {
        en = en.add(&src.n);
        ep = ep.add(&src.p);
        ev = ev.add(&src.v);
    }
    let dn_dt = laplacian(state.n()).add(&en);
    let dp_dt = laplacian(state.p()).add(&ep);
    let dv_dt = leray_project(&ev.add(&laplacian_vector(state.v()).scale(params.mu)));
    Ok(NpnsTendency {
        dn_dt,
        dp_dt,
        dv_dt,
    })
}

/// Stable step size: the smaller of the advective bound
/// `cfl_advect · h / max(‖v‖_∞, ‖E‖_∞)` and the charge-relaxation bound
/// `cfl_relax · λ² / max(n+p)_∞`, capped by the user step. Total: falls back
/// to the velocity-only bound when the Poisson solve is unavailable.
pub fn stable_dt(
    state: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
    ctl: &StepControl,
) -> f64 {
    let h = state.grid().spacing();
    let e_max = solve_poisson(state.n(), state.p(), doping, params.lambda)
        .map(|(_, e)| e.max_abs())
        .unwrap_or(0.0);
    let speed = state.v().max_abs().max(e_max).max(VELOCITY_FLOOR);
    let advect = ctl.cfl_advect * h / speed;
    let z_max = state
        .n()
        .physical()
        .iter()
        .zip(state.p().physical())
        .fold(0.0f64, |m, (a, b)| m.max(a + b));
    let relax = if z_max > 0.0 {
        ctl.cfl_relax * params.lambda * params.lambda / z_max
    } else {
        f64::INFINITY
    };
    advect.min(relax).min(ctl.dt).max(DT_FLOOR)
}

/// One SBDF2 step from two consecutive states `dt` apart.
pub fn step_sbdf(
    state_prev: &NpnsState,
    state_curr: &NpnsState,
    dt: f64,
    doping: &DopingProfile,
    params: &Params,
    ctl: &StepControl,
) -> Result<NpnsState, NpnsError> {
    let (_phi_p, e_prev) = solve_poisson(state_prev.n(), state_prev.p(), doping, params.lambda)?;
    let (_phi_c, e_curr) = solve_poisson(state_curr.n(), state_curr.p(), doping, params.lambda)?;
    let prev = explicit_tendency(state_prev, &e_prev, ctl.dealias);
    let curr = explicit_tendency(state_curr, &e_curr, ctl.dealias);
    let next = advance_sbdf2(
        state_prev,
        state_curr,
        &prev,
        &curr,
        dt,
        state_curr.t() + dt,
        params,
    );
    check_blowup(&next)?;
    Ok(next)
}

type Explicit = (ScalarField, ScalarField, VectorField);

fn advance_sbdf2(
    state_prev: &NpnsState,
    state_curr: &NpnsState,
    tend_prev: &Explicit,
    tend_curr: &Explicit,
    dt: f64,
    new_t: f64,
    params: &Params,
) -> NpnsState {
    let n = stepping::sbdf2_scalar(
        state_prev.n(),
        state_curr.n(),
        &tend_prev.0,
        &tend_curr.0,
        dt,
        1.0,
    );
    let p = stepping::sbdf2_scalar(
        state_prev.p(),
        state_curr.p(),
        &tend_prev.1,
        &tend_curr.1,
        dt,
        1.0,
    );
    let v = leray_project(&stepping::sbdf2_vector(
        state_prev.v(),
        state_curr.v(),
        &tend_prev.2,
        &tend_curr.2,
        dt,
        params.mu,
    ));
    NpnsState::from_parts_unchecked(new_t, n, p, v)
}

fn advance_euler(
    state: &NpnsState,
    tend: &Explicit,
    dt: f64,
    new_t: f64,
    params: &Params,
) -> NpnsState {
    let n = stepping::euler_scalar(state.n(), &tend.0, dt, 1.0);
    let p = stepping::euler_scalar(state.p(), &tend.1, dt, 1.0);
    let v = leray_project(&stepping::euler_vector(state.v(), &tend.2, dt, params.mu));
    NpnsState::from_parts_unchecked(new_t, n, p, v)
}

fn check_blowup(state: &NpnsState) -> Result<(), NpnsError> {
    let norm = l2_norm(state.n())
        .max(l2_norm(state.p()))
        .max(l2_norm_vector(state.v()));
    if !norm.is_finite() || norm > BLOWUP_NORM {
        return Err(NpnsError::BlowUp { t: state.t(), norm });
    }
    Ok(())
}

fn check_density(state: &NpnsState, guards: &DensityGuards) -> Result<(), NpnsError> {
    let min = state.n().min_value().min(state.p().min_value());
    if min < guards.negative_abort {
        return Err(NpnsError::AbortOnNegativeDensity { t: state.t(), min });
    }
    Ok(())
}

fn diagnostics_row(
    state: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
) -> Result<StepDiagnostics, NpnsError> {
    let (phi, _e) = solve_poisson(state.n(), state.p(), doping, params.lambda)?;
    let rhs = state.n().sub(state.p()).sub(doping.field());
    let residual = laplacian(&phi)
        .scale(params.lambda * params.lambda)
        .sub(&rhs);
    let rhs_norm = l2_norm(&rhs);
    let residual_rel = if rhs_norm == 0.0 {
        0.0
    } else {
        l2_norm(&residual) / rhs_norm
    };
    let z = state.n().add(state.p());
    let norm_v = l2_norm_vector(state.v());
    let div_v_rel = if norm_v == 0.0 {
        0.0
    } else {
        l2_norm(&divergence(state.v())) / norm_v
    };
    Ok(StepDiagnostics {
        t: state.t(),
        norm_n: l2_norm(state.n()),
        norm_p: l2_norm(state.p()),
        norm_z: l2_norm(&z),
        norm_v,
        mean_n: state.n().mean(),
        mean_p: state.p().mean(),
        min_n: state.n().min_value(),
        min_p: state.p().min_value(),
        min_z: z.min_value(),
        div_v_rel,
        residual_rel,
        elliptic_iterations: 0,
    })
}

fn make_snapshot(
    state: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
) -> Result<NpnsSnapshot, NpnsError> {
    let (phi, e) = solve_poisson(state.n(), state.p(), doping, params.lambda)?;
    let tendency = npns_rhs(state, doping, params)?;
    let (_phi_t, e_t) = solve_poisson_rate(&tendency.dn_dt, &tendency.dp_dt, params.lambda)?;
    Ok(NpnsSnapshot {
        state: state.clone(),
        phi,
        e,
        tendency,
        e_t,
    })
}

/// Integrates the system to `t_final`, storing states at the snapshot times
/// and a diagnostics row at every step.
///
/// Snapshot times must be uniformly spaced from `0` to `t_final`; the step
/// is chosen from [`stable_dt`] at the initial state and rounded down so
/// every snapshot falls exactly on a step boundary.
pub fn run(
    initial: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
    ctl: &StepControl,
    guards: &DensityGuards,
    t_final: f64,
    snapshot_times: &[f64],
) -> Result<NpnsTrajectory, NpnsError> {
    run_impl(
        initial,
        doping,
        params,
        ctl,
        guards,
        t_final,
        snapshot_times,
        None,
    )
}

/// [`run`] with an external source term added to every explicit tendency.
#[allow(clippy::too_many_arguments)]
pub fn run_forced(
    initial: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
    ctl: &StepControl,
    guards: &DensityGuards,
    t_final: f64,
    snapshot_times: &[f64],
    source: &dyn NpnsSource,
) -> Result<NpnsTrajectory, NpnsError> {
    run_impl(
        initial,
        doping,
        params,
        ctl,
        guards,
        t_final,
        snapshot_times,
        Some(source),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_impl(
    initial: &NpnsState,
    doping: &DopingProfile,
    params: &Params,
    ctl: &StepControl,
    guards: &DensityGuards,
    t_final: f64,
    snapshot_times: &[f64],
    source: Option<&dyn NpnsSource>,
) -> Result<NpnsTrajectory, NpnsError> {
    let spacing =
        stepping::snapshot_spacing(snapshot_times, t_final).map_err(NpnsError::InvalidSnapshots)?;
    let grid = initial.grid().clone();

    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut steps = Vec::new();
    steps.push(diagnostics_row(initial, doping, params)?);
    snapshots.push(make_snapshot(initial, doping, params)?);

    let spacing = match spacing {
        None => {
            return Ok(NpnsTrajectory {
                snapshots,
                steps,
                dt: 0.0,
            })
        }
        Some(s) => s,
    };
    let per_interval =
        stepping::steps_per_interval(spacing, stable_dt(initial, doping, params, ctl));
    let dt = spacing / per_interval as f64;

    let eval = |state: &NpnsState| -> Result<Explicit, NpnsError> {
        let (_phi, e) = solve_poisson(state.n(), state.p(), doping, params.lambda)?;
        let (mut en, mut ep, mut ev) = explicit_tendency(state, &e, ctl.dealias);
        if let Some(src) = source {
            let fields = src.eval(state.t(), &grid);
            let fv = if ctl.dealias {
                crate::spectral::dealias_vector(&fields.v)
            } else {
                fields.v
            };
            let fn_ = zero_mean(&if ctl.dealias {
                dealias(&fields.n)
            } else {
                fields.n
            });
            let fp = zero_mean(&if ctl.dealias {
                dealias(&fields.p)
            } else {
                fields.p
            });
            en = en.add(&fn_);
            ep = ep.add(&fp);
            ev = ev.add(&fv);
        }
        Ok((en, ep, ev))
    };

    // Times come from the step index, so snapshots land on the requested
    // instants without accumulated rounding.
    let t0 = initial.t();
    let step_time = |i: usize| t0 + i as f64 * dt;
    let mut prev = initial.clone();
    let mut tend_prev = eval(&prev)?;
    let mut curr = advance_euler(&prev, &tend_prev, dt, step_time(1), params);
    check_blowup(&curr)?;
    check_density(&curr, guards)?;
    steps.push(diagnostics_row(&curr, doping, params)?);
    let mut tend_curr = eval(&curr)?;

    let total_steps = per_interval * (snapshot_times.len() - 1);
    let mut next_snapshot = per_interval;
    if 1 == next_snapshot {
        snapshots.push(make_snapshot(&curr, doping, params)?);
        next_snapshot += per_interval;
    }

    for step_idx in 2..=total_steps {
        let next = advance_sbdf2(
            &prev,
            &curr,
            &tend_prev,
            &tend_curr,
            dt,
            step_time(step_idx),
            params,
        );
        check_blowup(&next)?;
        check_density(&next, guards)?;
        prev = curr;
        curr = next;
        tend_prev = tend_curr;
        tend_curr = eval(&curr)?;
        steps.push(diagnostics_row(&curr, doping, params)?);
        if step_idx == next_snapshot {
            snapshots.push(make_snapshot(&curr, doping, params)?);
            next_snapshot += per_interval;
        }
    }

    Ok(NpnsTrajectory {
        snapshots,
        steps,
        dt,
    })
}
