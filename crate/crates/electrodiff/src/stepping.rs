//! Semi-implicit multistep updates shared by both solvers.
//!
//! Diffusion is integrated implicitly with an exact mode-wise division in
//! spectral space; everything else enters through the explicit tendency with
//! second-order extrapolation (SBDF2). The first step is bootstrapped with a
//! single semi-implicit Euler step, whose O(dt²) local error leaves the
//! global second order intact.

use crate::spectral::{Complex64, ScalarField, VectorField};

/// One semi-implicit Euler step for `u_t = ν Δu + N(u)`.
pub(crate) fn euler_scalar(
    curr: &ScalarField,
    tend_curr: &ScalarField,
    dt: f64,
    nu: f64,
) -> ScalarField {
    let grid = curr.grid();
    let out = curr
        .spectral()
        .iter()
        .zip(tend_curr.spectral())
        .enumerate()
        .map(|(idx, (u, t))| (u + t * dt) / (1.0 + dt * nu * grid.k_squared(idx)))
        .collect::<Vec<Complex64>>();
    ScalarField::from_spectral(grid.clone(), out)
}

/// One SBDF2 step for `u_t = ν Δu + N(u)`:
/// `(3u⁺ − 4u + u⁻)/(2dt) = ν Δu⁺ + 2N(u) − N(u⁻)`.
pub(crate) fn sbdf2_scalar(
    prev: &ScalarField,
    curr: &ScalarField,
    tend_prev: &ScalarField,
    tend_curr: &ScalarField,
    dt: f64,
    nu: f64,
) -> ScalarField {
    let grid = curr.grid();
    let out = (0..grid.len())
        .map(|idx| {
            let num = (curr.spectral()[idx] * 2.0 - prev.spectral()[idx] * 0.5) / dt
                + tend_curr.spectral()[idx] * 2.0
                - tend_prev.spectral()[idx];
            num / (1.5 / dt + nu * grid.k_squared(idx))
        })
        .collect::<Vec<Complex64>>();
    ScalarField::from_spectral(grid.clone(), out)
}

pub(crate) fn euler_vector(
    curr: &VectorField,
    tend_curr: &VectorField,
    dt: f64,
    nu: f64,
) -> VectorField {
    VectorField::new(
        curr.components()
            .iter()
            .zip(tend_curr.components())
            .map(|(u, t)| euler_scalar(u, t, dt, nu))
            .collect(),
    )
}

pub(crate) fn sbdf2_vector(
    prev: &VectorField,
    curr: &VectorField,
    tend_prev: &VectorField,
    tend_curr: &VectorField,
    dt: f64,
    nu: f64,
) -> VectorField {
    VectorField::new(
        (0..curr.dim())
            .map(|a| {
                sbdf2_scalar(
                    prev.component(a),
                    curr.component(a),
                    tend_prev.component(a),
                    tend_curr.component(a),
                    dt,
                    nu,
                )
            })
            .collect(),
    )
}

/// Uniform snapshot schedule: validates the times and returns the spacing.
///
/// The times must be sorted, start at zero, end at `t_final`, and be evenly
/// spaced, so an integer number of steps lands exactly on every snapshot and
/// no temporal interpolation is ever needed.
pub(crate) fn snapshot_spacing(times: &[f64], t_final: f64) -> Result<Option<f64>, String> {
    if times.is_empty() {
        return Err("snapshot times must not be empty".to_string());
    }
    if times[0] != 0.0 {
        return Err("snapshot times must start at t = 0".to_string());
    }
    if t_final == 0.0 {
        if times.len() == 1 {
            return Ok(None);
        }
        return Err("a zero-length run admits only the t = 0 snapshot".to_string());
    }
    if times.len() < 2 {
        return Err("need at least the t = 0 and t = T snapshots".to_string());
    }
    let last = *times.last().unwrap();
    if (last - t_final).abs() > 1e-12 * t_final.max(1.0) {
        return Err(format!(
            "last snapshot {last} must coincide with the final time {t_final}"
        ));
    }
    let spacing = times[1] - times[0];
    if spacing <= 0.0 {
        return Err("snapshot times must be strictly increasing".to_string());
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - spacing).abs() > 1e-12 * spacing {
            return Err("snapshot times must be uniformly spaced".to_string());
        }
    }
    Ok(Some(spacing))
}

/// Steps per snapshot interval for a target step size: the interval is
/// subdivided so the actual step never exceeds the target.
pub(crate) fn steps_per_interval(spacing: f64, dt_target: f64) -> usize {
    ((spacing / dt_target) - 1e-9).ceil().max(1.0) as usize
}
