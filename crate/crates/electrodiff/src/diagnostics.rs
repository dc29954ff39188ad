//! Error fields between the two trajectories and the λ-weighted functionals
//! evaluated on them.
//!
//! The error bundle collects the differences of the screened and limit
//! trajectories at one snapshot together with their time derivatives. Time
//! derivatives of evolved quantities come from the exact semi-discrete
//! right-hand sides; the rate of the screened electric field solves
//! `λ²ΔΦ_t = n_t − p_t`; only the limit field rate `𝓔_t` is approximated, by
//! second-order differences of the stored snapshots (one-sided at the ends).

use crate::npns::{NpnsSnapshot, NpnsTrajectory};
use crate::quasineutral::{LimitSnapshot, LimitTrajectory};
use crate::spectral::{
    divergence, grad_norm_sq, grad_norm_sq_vector, l2_norm, l2_norm_sq, l2_norm_sq_vector,
    laplacian_norm_sq, laplacian_norm_sq_vector, sobolev_norm_sq, sobolev_norm_sq_vector,
    ScalarField, VectorField,
};

/// Differences between time-aligned snapshots of the two systems.
#[derive(Debug, Clone)]
pub struct ErrorBundle {
    pub t: f64,
    pub lambda: f64,
    pub z_tilde: ScalarField,
    pub n_tilde: ScalarField,
    pub p_tilde: ScalarField,
    pub v_tilde: VectorField,
    pub e_tilde: VectorField,
    pub z_tilde_t: ScalarField,
    pub n_tilde_t: ScalarField,
    pub p_tilde_t: ScalarField,
    pub v_tilde_t: VectorField,
    pub e_tilde_t: VectorField,
    /// Divergence of the limit electric field, needed by the density
    /// transform identity.
    pub limit_e_div: ScalarField,
}

/// Scalar metrics of one snapshot comparison.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalRow {
    pub t: f64,
    /// λ-weighted Lyapunov functional.
    pub gamma: f64,
    /// Its dissipation counterpart.
    pub dissipation: f64,
    /// Squared λ-weighted Sobolev norm of the error triple.
    pub triple_norm_sq: f64,
    /// `‖(ñ, p̃, ṽ)‖_{H¹}`.
    pub h1_error: f64,
    /// `‖(ñ, p̃, Ẽ, ṽ)‖_{H¹}`.
    pub state_h1: f64,
    /// `‖(ñ_t, p̃_t, ṽ_t)‖_{L²}`.
    pub dstate_l2: f64,
    /// `λ ‖Ẽ‖_{H²}`.
    pub efield_h2_weighted: f64,
    /// `λ ‖Ẽ_t‖_{H¹}`.
    pub defield_h1_weighted: f64,
    /// Sum of the four theorem norms above.
    pub theorem_sum: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("snapshots are misaligned in time: {t_npns} vs {t_limit}")]
    MisalignedSnapshots { t_npns: f64, t_limit: f64 },
    #[error("trajectories disagree on snapshot count: {npns} vs {limit}")]
    SnapshotCountMismatch { npns: usize, limit: usize },
    #[error("time-derivative stencils need at least 3 snapshots, got {0}")]
    TooFewSnapshots(usize),
}

/// Builds the error bundle at one snapshot. `limit_e_t` is the externally
/// differenced rate of the limit electric field (see
/// [`limit_e_time_derivatives`]).
pub fn make_error_bundle(
    npns: &NpnsSnapshot,
    limit: &LimitSnapshot,
    limit_e_t: &VectorField,
    lambda: f64,
) -> Result<ErrorBundle, DiagnosticsError> {
    let (t_npns, t_limit) = (npns.state.t(), limit.state.t());
    if (t_npns - t_limit).abs() > 1e-9 * t_npns.abs().max(1.0) {
        return Err(DiagnosticsError::MisalignedSnapshots { t_npns, t_limit });
    }
    let n_tilde = npns.state.n().sub(&limit.n);
    let p_tilde = npns.state.p().sub(&limit.p);
    let z_tilde = n_tilde.add(&p_tilde);
    let v_tilde = npns.state.v().sub(limit.state.v());
    let e_tilde = npns.e.sub(&limit.e);

    // Limit density rates follow from Z_t since the doping is static.
    let n_limit_t = limit.z_t.scale(0.5);
    let n_tilde_t = npns.tendency.dn_dt.sub(&n_limit_t);
    let p_tilde_t = npns.tendency.dp_dt.sub(&n_limit_t);
    let z_tilde_t = n_tilde_t.add(&p_tilde_t);
    let v_tilde_t = npns.tendency.dv_dt.sub(&limit.v_t);
    let e_tilde_t = npns.e_t.sub(limit_e_t);

    Ok(ErrorBundle {
        t: t_npns,
        lambda,
        z_tilde,
        n_tilde,
        p_tilde,
        v_tilde,
        e_tilde,
        z_tilde_t,
        n_tilde_t,
        p_tilde_t,
        v_tilde_t,
        e_tilde_t,
        limit_e_div: divergence(&limit.e),
    })
}

/// Second-order finite differences of the stored limit electric field, one
/// per snapshot: centered in the interior, one-sided at the two ends.
pub fn limit_e_time_derivatives(
    traj: &LimitTrajectory,
) -> Result<Vec<VectorField>, DiagnosticsError> {
    let snaps = &traj.snapshots;
    let m = snaps.len();
    if m < 3 {
        return Err(DiagnosticsError::TooFewSnapshots(m));
    }
    let dt = snaps[1].state.t() - snaps[0].state.t();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let d = if i == 0 {
            snaps[0]
                .e
                .scale(-3.0)
                .add(&snaps[1].e.scale(4.0))
                .sub(&snaps[2].e)
                .scale(1.0 / (2.0 * dt))
        } else if i == m - 1 {
            snaps[m - 1]
                .e
                .scale(3.0)
                .sub(&snaps[m - 2].e.scale(4.0))
                .add(&snaps[m - 3].e)
                .scale(1.0 / (2.0 * dt))
        } else {
            snaps[i + 1].e.sub(&snaps[i - 1].e).scale(1.0 / (2.0 * dt))
        };
        out.push(d);
    }
    Ok(out)
}

/// Bundles for every snapshot of a time-aligned pair of trajectories.
pub fn error_bundles(
    npns: &NpnsTrajectory,
    limit: &LimitTrajectory,
    lambda: f64,
) -> Result<Vec<ErrorBundle>, DiagnosticsError> {
    if npns.snapshots.len() != limit.snapshots.len() {
        return Err(DiagnosticsError::SnapshotCountMismatch {
            npns: npns.snapshots.len(),
            limit: limit.snapshots.len(),
        });
    }
    let e_rates = limit_e_time_derivatives(limit)?;
    npns.snapshots
        .iter()
        .zip(&limit.snapshots)
        .zip(&e_rates)
        .map(|((ns, ls), et)| make_error_bundle(ns, ls, et, lambda))
        .collect()
}

/// λ-weighted Lyapunov functional:
/// `‖(z̃, ∇z̃, Δz̃, z̃_t, ∇z̃_t)‖² + ‖(ṽ, ∇ṽ, Δṽ, ṽ_t, ∇ṽ_t)‖²
///  + λ²‖(Ẽ, div Ẽ, ∇div Ẽ, Ẽ_t, div Ẽ_t)‖² + ‖(Ẽ, div Ẽ)‖²`.
pub fn gamma(bundle: &ErrorBundle) -> f64 {
    let lambda_sq = bundle.lambda * bundle.lambda;
    let div_e = divergence(&bundle.e_tilde);
    let div_e_t = divergence(&bundle.e_tilde_t);

    let z_part = l2_norm_sq(&bundle.z_tilde)
        + grad_norm_sq(&bundle.z_tilde)
        + laplacian_norm_sq(&bundle.z_tilde)
        + l2_norm_sq(&bundle.z_tilde_t)
        + grad_norm_sq(&bundle.z_tilde_t);
    let v_part = l2_norm_sq_vector(&bundle.v_tilde)
        + grad_norm_sq_vector(&bundle.v_tilde)
        + laplacian_norm_sq_vector(&bundle.v_tilde)
        + l2_norm_sq_vector(&bundle.v_tilde_t)
        + grad_norm_sq_vector(&bundle.v_tilde_t);
    let e_weighted = l2_norm_sq_vector(&bundle.e_tilde)
        + l2_norm_sq(&div_e)
        + grad_norm_sq(&div_e)
        + l2_norm_sq_vector(&bundle.e_tilde_t)
        + l2_norm_sq(&div_e_t);
    let e_unweighted = l2_norm_sq_vector(&bundle.e_tilde) + l2_norm_sq(&div_e);

    z_part + v_part + lambda_sq * e_weighted + e_unweighted
}

/// Dissipation functional:
/// `‖(Δz̃_t, Δṽ_t, Ẽ_t, div Ẽ_t)‖² + λ²‖∇div Ẽ_t‖²`.
pub fn g_dissipation(bundle: &ErrorBundle) -> f64 {
    let lambda_sq = bundle.lambda * bundle.lambda;
    let div_e_t = divergence(&bundle.e_tilde_t);
    laplacian_norm_sq(&bundle.z_tilde_t)
        + laplacian_norm_sq_vector(&bundle.v_tilde_t)
        + l2_norm_sq_vector(&bundle.e_tilde_t)
        + l2_norm_sq(&div_e_t)
        + lambda_sq * grad_norm_sq(&div_e_t)
}

/// Squared λ-weighted Sobolev norm:
/// `‖(z̃, λẼ, ṽ)‖²_{H²} + ‖(z̃_t, λẼ_t, ṽ_t)‖²_{H¹} + ‖Ẽ‖²_{H¹}`.
pub fn triple_norm_sq(bundle: &ErrorBundle) -> f64 {
    let lambda_sq = bundle.lambda * bundle.lambda;
    sobolev_norm_sq(&bundle.z_tilde, 2)
        + lambda_sq * sobolev_norm_sq_vector(&bundle.e_tilde, 2)
        + sobolev_norm_sq_vector(&bundle.v_tilde, 2)
        + sobolev_norm_sq(&bundle.z_tilde_t, 1)
        + lambda_sq * sobolev_norm_sq_vector(&bundle.e_tilde_t, 1)
        + sobolev_norm_sq_vector(&bundle.v_tilde_t, 1)
        + sobolev_norm_sq_vector(&bundle.e_tilde, 1)
}

/// The four summands of the theorem's error norm plus derived metrics.
pub fn theorem_error_norms(bundle: &ErrorBundle) -> FunctionalRow {
    let state_h1 = (sobolev_norm_sq(&bundle.n_tilde, 1)
        + sobolev_norm_sq(&bundle.p_tilde, 1)
        + sobolev_norm_sq_vector(&bundle.e_tilde, 1)
        + sobolev_norm_sq_vector(&bundle.v_tilde, 1))
    .sqrt();
    let dstate_l2 = (l2_norm_sq(&bundle.n_tilde_t)
        + l2_norm_sq(&bundle.p_tilde_t)
        + l2_norm_sq_vector(&bundle.v_tilde_t))
    .sqrt();
    let efield_h2_weighted = bundle.lambda * sobolev_norm_sq_vector(&bundle.e_tilde, 2).sqrt();
    let defield_h1_weighted = bundle.lambda * sobolev_norm_sq_vector(&bundle.e_tilde_t, 1).sqrt();
    let h1_error = (sobolev_norm_sq(&bundle.n_tilde, 1)
        + sobolev_norm_sq(&bundle.p_tilde, 1)
        + sobolev_norm_sq_vector(&bundle.v_tilde, 1))
    .sqrt();
    FunctionalRow {
        t: bundle.t,
        gamma: gamma(bundle),
        dissipation: g_dissipation(bundle),
        triple_norm_sq: triple_norm_sq(bundle),
        h1_error,
        state_h1,
        dstate_l2,
        efield_h2_weighted,
        defield_h1_weighted,
        theorem_sum: state_h1 + dstate_l2 + efield_h2_weighted + defield_h1_weighted,
    }
}

/// Relative residual of the density transform identity
/// `ñ = (z̃ − λ² div Ẽ − λ² div 𝓔)/2` (and its mirror for `p̃`), which ties
/// the bundle to the Poisson equations of both systems.
pub fn transform_identity_residual(bundle: &ErrorBundle) -> f64 {
    let lambda_sq = bundle.lambda * bundle.lambda;
    let div_sum = divergence(&bundle.e_tilde).add(&bundle.limit_e_div);
    let n_pred = bundle.z_tilde.linear_comb(0.5, &div_sum, -0.5 * lambda_sq);
    let p_pred = bundle.z_tilde.linear_comb(0.5, &div_sum, 0.5 * lambda_sq);
    let res = l2_norm(&bundle.n_tilde.sub(&n_pred)).max(l2_norm(&bundle.p_tilde.sub(&p_pred)));
    let scale = l2_norm(&bundle.n_tilde)
        .max(l2_norm(&bundle.p_tilde))
        .max(lambda_sq * l2_norm(&div_sum));
    if scale == 0.0 {
        res
    } else {
        res / scale
    }
}

/// One discrete inequality check.
#[derive(Debug, Clone)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Discrete elliptic-regularity chain with constant 2 on every bundle field:
/// `‖f‖²_{H²} ≤ 2(‖f‖² + ‖Δf‖²)` for the scalar and velocity errors and
/// `‖F‖²_{H^s} ≤ 2(‖F‖² + ‖div F‖²_{H^{s−1}})`, `s = 1, 2`, for the
/// curl-free electric-field errors.
pub fn elliptic_regularity_checks(bundle: &ErrorBundle) -> Vec<InequalityCheck> {
    let mut checks = Vec::new();
    let tol = 1.0 + 1e-12;

    let mut scalar = |name: &str, lhs: f64, rhs: f64| {
        checks.push(InequalityCheck {
            name: name.to_string(),
            lhs,
            rhs,
            pass: lhs <= rhs * tol,
        });
    };

    scalar(
        "H2(z_err) <= 2(L2 + lap)",
        sobolev_norm_sq(&bundle.z_tilde, 2),
        2.0 * (l2_norm_sq(&bundle.z_tilde) + laplacian_norm_sq(&bundle.z_tilde)),
    );
    scalar(
        "H2(dz_err) <= 2(L2 + lap)",
        sobolev_norm_sq(&bundle.z_tilde_t, 2),
        2.0 * (l2_norm_sq(&bundle.z_tilde_t) + laplacian_norm_sq(&bundle.z_tilde_t)),
    );
    scalar(
        "H2(v_err) <= 2(L2 + lap)",
        sobolev_norm_sq_vector(&bundle.v_tilde, 2),
        2.0 * (l2_norm_sq_vector(&bundle.v_tilde) + laplacian_norm_sq_vector(&bundle.v_tilde)),
    );
    scalar(
        "H2(dv_err) <= 2(L2 + lap)",
        sobolev_norm_sq_vector(&bundle.v_tilde_t, 2),
        2.0 * (l2_norm_sq_vector(&bundle.v_tilde_t) + laplacian_norm_sq_vector(&bundle.v_tilde_t)),
    );

    for (label, field) in [("e_err", &bundle.e_tilde), ("de_err", &bundle.e_tilde_t)] {
        let div = divergence(field);
        scalar(
            &format!("H1({label}) <= 2(L2 + div)"),
            sobolev_norm_sq_vector(field, 1),
            2.0 * (l2_norm_sq_vector(field) + l2_norm_sq(&div)),
        );
        scalar(
            &format!("H2({label}) <= 2(L2 + H1(div))"),
            sobolev_norm_sq_vector(field, 2),
            2.0 * (l2_norm_sq_vector(field) + sobolev_norm_sq(&div, 1)),
        );
    }
    checks
}

/// Norm-equivalence constants: `c₁ |||w̃|||² ≤ Γ ≤ c₂ |||w̃|||²` for bundles
/// with curl-free electric-field errors. Frozen from a brute-force scan over
/// random band-limited curl-free bundles plus concentrated single-mode
/// extremizers at N = 16, λ ∈ {1, 0.1} (observed range [0.75, 1.0]) with a
/// 10% margin.
pub const EQUIVALENCE_C1: f64 = 0.675;
pub const EQUIVALENCE_C2: f64 = 1.1;

/// `Γ / |||w̃|||²`, the norm-equivalence ratio; `None` on the zero bundle.
pub fn equivalence_ratio(bundle: &ErrorBundle) -> Option<f64> {
    let triple = triple_norm_sq(bundle);
    if triple == 0.0 {
        None
    } else {
        Some(gamma(bundle) / triple)
    }
}

/// Curl-free consistency of the electric-field error: `‖∇Ẽ‖ = ‖div Ẽ‖`.
pub fn curl_free_residual(field: &VectorField) -> f64 {
    let grad_sq = grad_norm_sq_vector(field);
    let div_sq = l2_norm_sq(&divergence(field));
    let scale = grad_sq.max(div_sq);
    if scale == 0.0 {
        0.0
    } else {
        (grad_sq - div_sq).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dealias, gradient, Grid, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid2(n: usize) -> Arc<Grid> {
        Grid::new(2, n).unwrap()
    }

    fn zero_bundle(grid: &Arc<Grid>, lambda: f64) -> ErrorBundle {
        ErrorBundle {
            t: 0.0,
            lambda,
            z_tilde: ScalarField::zeros(grid.clone()),
            n_tilde: ScalarField::zeros(grid.clone()),
            p_tilde: ScalarField::zeros(grid.clone()),
            v_tilde: VectorField::zeros(grid.clone()),
            e_tilde: VectorField::zeros(grid.clone()),
            z_tilde_t: ScalarField::zeros(grid.clone()),
            n_tilde_t: ScalarField::zeros(grid.clone()),
            p_tilde_t: ScalarField::zeros(grid.clone()),
            v_tilde_t: VectorField::zeros(grid.clone()),
            e_tilde_t: VectorField::zeros(grid.clone()),
            limit_e_div: ScalarField::zeros(grid.clone()),
        }
    }

    fn random_band_limited(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
        let values: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-amp..amp)).collect();
        dealias(&ScalarField::from_physical(grid.clone(), values))
    }

    /// Random bundle with curl-free electric-field errors; the scalar link
    /// between ñ, p̃, z̃ is kept exact.
    fn random_curl_free_bundle(grid: &Arc<Grid>, lambda: f64, seed: u64) -> ErrorBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_tilde = random_band_limited(grid, &mut rng, 1.0);
        let p_tilde = random_band_limited(grid, &mut rng, 1.0);
        let z_tilde = n_tilde.add(&p_tilde);
        let n_tilde_t = random_band_limited(grid, &mut rng, 1.0);
        let p_tilde_t = random_band_limited(grid, &mut rng, 1.0);
        let z_tilde_t = n_tilde_t.add(&p_tilde_t);
        let v = VectorField::new(vec![
            random_band_limited(grid, &mut rng, 1.0),
            random_band_limited(grid, &mut rng, 1.0),
        ]);
        let v_t = VectorField::new(vec![
            random_band_limited(grid, &mut rng, 1.0),
            random_band_limited(grid, &mut rng, 1.0),
        ]);
        let e_tilde = gradient(&random_band_limited(grid, &mut rng, 1.0));
        let e_tilde_t = gradient(&random_band_limited(grid, &mut rng, 1.0));
        ErrorBundle {
            t: 0.0,
            lambda,
            z_tilde,
            n_tilde,
            p_tilde,
            v_tilde: v,
            e_tilde,
            z_tilde_t,
            n_tilde_t,
            p_tilde_t,
            v_tilde_t: v_t,
            e_tilde_t,
            limit_e_div: ScalarField::zeros(grid.clone()),
        }
    }

    fn scale_bundle(b: &ErrorBundle, c: f64) -> ErrorBundle {
        ErrorBundle {
            t: b.t,
            lambda: b.lambda,
            z_tilde: b.z_tilde.scale(c),
            n_tilde: b.n_tilde.scale(c),
            p_tilde: b.p_tilde.scale(c),
            v_tilde: b.v_tilde.scale(c),
            e_tilde: b.e_tilde.scale(c),
            z_tilde_t: b.z_tilde_t.scale(c),
            n_tilde_t: b.n_tilde_t.scale(c),
            p_tilde_t: b.p_tilde_t.scale(c),
            v_tilde_t: b.v_tilde_t.scale(c),
            e_tilde_t: b.e_tilde_t.scale(c),
            limit_e_div: b.limit_e_div.scale(c),
        }
    }

    #[test]
    fn zero_bundle_gives_zero_functionals() {
        let g = grid2(16);
        let b = zero_bundle(&g, 0.1);
        assert_eq!(gamma(&b), 0.0);
        assert_eq!(g_dissipation(&b), 0.0);
        assert_eq!(triple_norm_sq(&b), 0.0);
        let row = theorem_error_norms(&b);
        assert_eq!(row.theorem_sum, 0.0);
        assert_eq!(row.h1_error, 0.0);
    }

    #[test]
    fn gamma_single_mode_arithmetic() {
        // Static bundle whose only content is Ẽ = (sin x₁, 0) at λ = 1:
        // ‖Ẽ‖² = ‖div Ẽ‖² = ‖∇div Ẽ‖² = 1/2, so the λ²-group contributes
        // 3/2 and the unweighted tail contributes 1.
        let g = grid2(16);
        let mut b = zero_bundle(&g, 1.0);
        b.e_tilde = VectorField::new(vec![
            ScalarField::from_fn(g.clone(), |x| x[0].sin()),
            ScalarField::zeros(g.clone()),
        ]);
        let got = gamma(&b);
        assert!((got - 2.5).abs() < 1e-13, "gamma = {got}");
        // Static bundle: no dissipation.
        assert_eq!(g_dissipation(&b), 0.0);
    }

    #[test]
    fn triple_norm_single_mode() {
        let g = grid2(16);
        let mut b = zero_bundle(&g, 0.3);
        b.z_tilde = ScalarField::from_fn(g, |x| x[0].sin());
        // ‖sin x₁‖²_{H²} = (1 + 1)² · 1/2 = 2.
        assert!((triple_norm_sq(&b) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn functionals_are_quadratic_forms() {
        let g = grid2(16);
        let b = random_curl_free_bundle(&g, 0.1, 17);
        let c = 3.7;
        let sb = scale_bundle(&b, c);
        assert!((gamma(&sb) - c * c * gamma(&b)).abs() <= 1e-10 * gamma(&sb));
        assert!(
            (g_dissipation(&sb) - c * c * g_dissipation(&b)).abs() <= 1e-10 * g_dissipation(&sb)
        );
        assert!(
            (triple_norm_sq(&sb) - c * c * triple_norm_sq(&b)).abs() <= 1e-10 * triple_norm_sq(&sb)
        );
        // The theorem norm is positively homogeneous of degree one.
        let r = theorem_error_norms(&b);
        let rs = theorem_error_norms(&sb);
        assert!((rs.theorem_sum - c * r.theorem_sum).abs() <= 1e-10 * rs.theorem_sum);
        assert!((rs.h1_error - c * r.h1_error).abs() <= 1e-10 * rs.h1_error);
    }

    #[test]
    fn dissipation_ignores_static_errors() {
        let g = grid2(16);
        let mut b = random_curl_free_bundle(&g, 0.5, 23);
        b.z_tilde_t = ScalarField::zeros(g.clone());
        b.v_tilde_t = VectorField::zeros(g.clone());
        b.e_tilde_t = VectorField::zeros(g.clone());
        assert_eq!(g_dissipation(&b), 0.0);
        assert!(gamma(&b) > 0.0);
    }

    #[test]
    fn regularity_chain_holds_on_random_bundles() {
        let g = grid2(16);
        for seed in 0..10u64 {
            let b = random_curl_free_bundle(&g, if seed % 2 == 0 { 1.0 } else { 0.1 }, seed);
            for check in elliptic_regularity_checks(&b) {
                assert!(
                    check.pass,
                    "{} failed: {} > {}",
                    check.name, check.lhs, check.rhs
                );
            }
            assert!(curl_free_residual(&b.e_tilde) <= 1e-10);
            assert!(curl_free_residual(&b.e_tilde_t) <= 1e-10);
        }
    }

    /// Norm-equivalence constants, frozen from a brute-force scan at N = 16,
    /// λ ∈ {1, 0.1} over 100 random band-limited curl-free bundles plus the
    /// concentrated single-field candidates that extremize the ratio
    /// (diffuse random bundles alone cluster near 0.97). Observed range
    /// [0.75, 1.0], frozen here with a 10% margin.
    #[test]
    fn equivalence_ratio_within_calibrated_bounds() {
        const C1: f64 = EQUIVALENCE_C1;
        const C2: f64 = EQUIVALENCE_C2;
        let g = grid2(16);
        let mut candidates: Vec<ErrorBundle> = Vec::new();
        for seed in 0..100u64 {
            let lambda = if seed % 2 == 0 { 1.0 } else { 0.1 };
            candidates.push(random_curl_free_bundle(&g, lambda, 1000 + seed));
        }
        // Concentrated bundles: all energy in one field at one mode.
        for lambda in [1.0, 0.1] {
            for k in 1..=4i64 {
                let mode = ScalarField::from_fn(g.clone(), move |x| (k as f64 * x[0]).sin());
                let mut b = zero_bundle(&g, lambda);
                b.z_tilde = mode.clone();
                candidates.push(b);
                let mut b = zero_bundle(&g, lambda);
                b.z_tilde_t = mode.clone();
                candidates.push(b);
                let mut b = zero_bundle(&g, lambda);
                b.v_tilde = VectorField::new(vec![ScalarField::zeros(g.clone()), mode.clone()]);
                candidates.push(b);
                let mut b = zero_bundle(&g, lambda);
                b.e_tilde = gradient(&mode);
                candidates.push(b);
                let mut b = zero_bundle(&g, lambda);
                b.e_tilde_t = gradient(&mode);
                candidates.push(b);
            }
        }
        let mut observed_min = f64::INFINITY;
        let mut observed_max = f64::NEG_INFINITY;
        for (i, b) in candidates.iter().enumerate() {
            let ratio = equivalence_ratio(b).expect("nonzero bundle");
            observed_min = observed_min.min(ratio);
            observed_max = observed_max.max(ratio);
            assert!(
                (C1..=C2).contains(&ratio),
                "ratio {ratio} escaped [{C1}, {C2}] at candidate {i}"
            );
        }
        // The scan must actually reach both extremes the margin was built
        // around.
        assert!(observed_min <= 0.7501, "min {observed_min}");
        assert!(observed_max >= 0.99, "max {observed_max}");
    }
}
