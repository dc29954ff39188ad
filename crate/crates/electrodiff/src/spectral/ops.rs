//! Differential operators, dealiasing, projection, and norms.
//!
//! Everything here acts mode-wise on the spectral representation. The
//! derivative wavenumbers come from [`Grid`], which treats the Nyquist mode
//! as zero, so `Δ = div ∘ grad` holds exactly in spectral arithmetic and the
//! discrete Sobolev weights `(1 + |k|²)^s` pair with the same `|k|²` the
//! Laplacian uses.

use super::field::{Complex64, ScalarField, VectorField};
use super::SpectralError;

/// Gradient: component `j` gets `i k_j f̂_k`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let coeffs = f.spectral();
    let components = (0..grid.dim())
        .map(|axis| {
            let out = coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| c * Complex64::new(0.0, grid.k_axis(axis, idx)))
                .collect();
            ScalarField::from_spectral(grid.clone(), out)
        })
        .collect();
    VectorField::new(components)
}

/// Divergence: `Σ_j i k_j F̂_{j,k}`.
pub fn divergence(field: &VectorField) -> ScalarField {
    let grid = field.grid();
    let mut out = vec![Complex64::default(); grid.len()];
    for (axis, comp) in field.components().iter().enumerate() {
        for (idx, c) in comp.spectral().iter().enumerate() {
            out[idx] += c * Complex64::new(0.0, grid.k_axis(axis, idx));
        }
    }
    ScalarField::from_spectral(grid.clone(), out)
}

/// Laplacian: multiplies by `-|k|²`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let out = f
        .spectral()
        .iter()
        .enumerate()
        .map(|(idx, c)| c * -grid.k_squared(idx))
        .collect();
    ScalarField::from_spectral(grid.clone(), out)
}

pub fn laplacian_vector(field: &VectorField) -> VectorField {
    field.map(laplacian)
}

/// Solves `Δu = f` on the torus in the mean-zero gauge.
///
/// Requires `|mean(f)| <= 1e-10 · ‖f‖`; a larger mean signals an
/// incompatible right-hand side. Modes with zero derivative symbol (the mean
/// and pure-Nyquist modes) are set to zero.
pub fn inverse_laplacian(f: &ScalarField) -> Result<ScalarField, SpectralError> {
    let grid = f.grid();
    let coeffs = f.spectral();
    let norm = l2_norm(f);
    let mean = coeffs[0].re.abs();
    if mean > 1e-10 * norm {
        return Err(SpectralError::NonZeroMean { mean, norm });
    }
    let out = coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let k2 = grid.k_squared(idx);
            if k2 == 0.0 {
                Complex64::default()
            } else {
                c / -k2
            }
        })
        .collect();
    Ok(ScalarField::from_spectral(grid.clone(), out))
}

/// Zeroes the mean exactly in spectral space (the additive gauge used by
/// the periodic Poisson solves).
pub fn zero_mean(f: &ScalarField) -> ScalarField {
    let mut coeffs = f.spectral().to_vec();
    coeffs[0] = Complex64::default();
    ScalarField::from_spectral(f.grid().clone(), coeffs)
}

/// 2/3-rule dealiasing: zeroes every mode with any `|k_j| > N/3`.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let out = f
        .spectral()
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            if grid.mode_in_band(idx) {
                *c
            } else {
                Complex64::default()
            }
        })
        .collect();
    ScalarField::from_spectral(grid.clone(), out)
}

pub fn dealias_vector(field: &VectorField) -> VectorField {
    field.map(dealias)
}

/// Pointwise product of two fields, dealiased before re-entering spectral
/// space. All nonlinearities in the models are quadratic, so the 2/3 rule
/// keeps every retained product mode alias-free.
pub fn dealiased_product(a: &ScalarField, b: &ScalarField) -> ScalarField {
    let values = a
        .physical()
        .iter()
        .zip(b.physical())
        .map(|(x, y)| x * y)
        .collect();
    dealias(&ScalarField::from_physical(a.grid().clone(), values))
}

/// Raw pointwise product without dealiasing.
pub fn pointwise_product(a: &ScalarField, b: &ScalarField) -> ScalarField {
    let values = a
        .physical()
        .iter()
        .zip(b.physical())
        .map(|(x, y)| x * y)
        .collect();
    ScalarField::from_physical(a.grid().clone(), values)
}

/// Leray projection onto divergence-free fields:
/// `F̂_k ← F̂_k − k (k·F̂_k) / |k|²` for `k ≠ 0`; the zero mode is unchanged.
pub fn leray_project(field: &VectorField) -> VectorField {
    let grid = field.grid();
    let dim = grid.dim();
    let spectra: Vec<&[Complex64]> = field.components().iter().map(|c| c.spectral()).collect();
    let mut out: Vec<Vec<Complex64>> = (0..dim).map(|a| spectra[a].to_vec()).collect();
    for idx in 0..grid.len() {
        let k2 = grid.k_squared(idx);
        if k2 == 0.0 {
            continue;
        }
        let mut k_dot = Complex64::default();
        for (a, spec_a) in spectra.iter().enumerate() {
            k_dot += spec_a[idx] * grid.k_axis(a, idx);
        }
        let factor = k_dot / k2;
        for (a, out_a) in out.iter_mut().enumerate() {
            out_a[idx] -= factor * grid.k_axis(a, idx);
        }
    }
    VectorField::new(
        out.into_iter()
            .map(|coeffs| ScalarField::from_spectral(grid.clone(), coeffs))
            .collect(),
    )
}

/// L² norm under the mean-square convention: `sqrt(Σ_k |f̂_k|²)`.
pub fn l2_norm(f: &ScalarField) -> f64 {
    l2_norm_sq(f).sqrt()
}

pub fn l2_norm_sq(f: &ScalarField) -> f64 {
    f.spectral().iter().map(|c| c.norm_sqr()).sum()
}

pub fn l2_norm_sq_vector(field: &VectorField) -> f64 {
    field.components().iter().map(l2_norm_sq).sum()
}

pub fn l2_norm_vector(field: &VectorField) -> f64 {
    l2_norm_sq_vector(field).sqrt()
}

/// `Σ_k |k|² |f̂_k|²`, the squared norm of the gradient.
pub fn grad_norm_sq(f: &ScalarField) -> f64 {
    let grid = f.grid();
    f.spectral()
        .iter()
        .enumerate()
        .map(|(idx, c)| grid.k_squared(idx) * c.norm_sqr())
        .sum()
}

pub fn grad_norm_sq_vector(field: &VectorField) -> f64 {
    field.components().iter().map(grad_norm_sq).sum()
}

/// `Σ_k |k|⁴ |f̂_k|²`, the squared norm of the Laplacian.
pub fn laplacian_norm_sq(f: &ScalarField) -> f64 {
    let grid = f.grid();
    f.spectral()
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let k2 = grid.k_squared(idx);
            k2 * k2 * c.norm_sqr()
        })
        .sum()
}

pub fn laplacian_norm_sq_vector(field: &VectorField) -> f64 {
    field.components().iter().map(laplacian_norm_sq).sum()
}

/// Squared Sobolev norm `Σ_k (1 + |k|²)^s |f̂_k|²` for integer `s >= 0`.
pub fn sobolev_norm_sq(f: &ScalarField, s: u32) -> f64 {
    let grid = f.grid();
    f.spectral()
        .iter()
        .enumerate()
        .map(|(idx, c)| (1.0 + grid.k_squared(idx)).powi(s as i32) * c.norm_sqr())
        .sum()
}

pub fn sobolev_norm(f: &ScalarField, s: u32) -> f64 {
    sobolev_norm_sq(f, s).sqrt()
}

pub fn sobolev_norm_sq_vector(field: &VectorField, s: u32) -> f64 {
    field
        .components()
        .iter()
        .map(|c| sobolev_norm_sq(c, s))
        .sum()
}

pub fn sobolev_norm_vector(field: &VectorField, s: u32) -> f64 {
    sobolev_norm_sq_vector(field, s).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2(n: usize) -> std::sync::Arc<Grid> {
        Grid::new(2, n).unwrap()
    }

    fn random_physical(grid: &std::sync::Arc<Grid>, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_physical(grid.clone(), values)
    }

    fn random_band_limited(grid: &std::sync::Arc<Grid>, seed: u64) -> ScalarField {
        dealias(&random_physical(grid, seed))
    }

    /// Direct O(N^{2d}) discrete Fourier sum, the transform oracle. At grid
    /// points the exponential only sees the index modulo N, so the raw axis
    /// index serves as the wavenumber.
    fn dft_oracle(f: &ScalarField) -> Vec<Complex64> {
        let grid = f.grid();
        let values = f.physical();
        let mut coeffs = vec![Complex64::default(); grid.len()];
        for (kidx, coeff) in coeffs.iter_mut().enumerate() {
            let mut acc = Complex64::default();
            for (jidx, &v) in values.iter().enumerate() {
                let x = grid.point(jidx);
                let mut phase = 0.0;
                for (a, &coord) in x.iter().enumerate().take(grid.dim()) {
                    phase += grid.axis_index(a, kidx) as f64 * coord;
                }
                acc += Complex64::new(0.0, -phase).exp() * v;
            }
            *coeff = acc / grid.len() as f64;
        }
        coeffs
    }

    #[test]
    fn forward_matches_direct_dft_sum() {
        let g = grid2(8);
        let f = random_physical(&g, 7);
        let oracle = dft_oracle(&f);
        let fast = f.spectral();
        let max_err = fast
            .iter()
            .zip(&oracle)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(max_err < 1e-13, "fft vs direct sum: {max_err}");
    }

    #[test]
    fn round_trip_on_random_field() {
        let g = grid2(8);
        let f = random_physical(&g, 3);
        let back = ScalarField::from_spectral(g, f.spectral().to_vec());
        let max_err = back
            .physical()
            .iter()
            .zip(f.physical())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_err < 1e-13);
    }

    #[test]
    fn parseval_holds() {
        for seed in 0..5u64 {
            let g = grid2(16);
            let f = random_physical(&g, seed);
            let phys_ms: f64 = f.physical().iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
            let spec_ms = l2_norm_sq(&f);
            assert!((phys_ms - spec_ms).abs() <= 1e-12 * spec_ms);
        }
    }

    #[test]
    fn gradient_of_cosine() {
        let g = grid2(16);
        let f = ScalarField::from_fn(g.clone(), |x| x[0].cos());
        let grad = gradient(&f);
        let expected = ScalarField::from_fn(g, |x| -x[0].sin());
        let err = l2_norm(&grad.component(0).sub(&expected));
        assert!(err < 1e-13);
        assert!(l2_norm(grad.component(1)) < 1e-14);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = grid2(8);
        let f = ScalarField::constant(g, 4.2);
        let grad = gradient(&f);
        assert!(l2_norm_sq_vector(&grad) < 1e-28);
    }

    #[test]
    fn laplacian_is_div_of_grad() {
        let g = grid2(16);
        let f = ScalarField::from_fn(g, |x| x[0].cos() * x[1].cos());
        let lap = laplacian(&f);
        let div_grad = divergence(&gradient(&f));
        let err = l2_norm(&lap.sub(&div_grad));
        assert!(err <= 1e-13 * l2_norm(&lap).max(1.0));
        // Δ(cos x1 cos x2) = -2 f.
        let err2 = l2_norm(&lap.sub(&f.scale(-2.0)));
        assert!(err2 <= 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let g = grid2(16);
        let f = VectorField::new(vec![
            ScalarField::from_fn(g.clone(), |x| x[1].sin()),
            ScalarField::zeros(g.clone()),
        ]);
        assert!(l2_norm(&divergence(&f)) < 1e-14);

        let grad = gradient(&ScalarField::from_fn(g.clone(), |x| x[0].cos()));
        let div = divergence(&grad);
        let expected = ScalarField::from_fn(g, |x| -x[0].cos());
        assert!(l2_norm(&div.sub(&expected)) < 1e-13);
    }

    /// Brute-force mode sum of `Σ_{ij} ‖∂_i F_j‖²` against `‖div F‖²` for
    /// curl-free fields.
    #[test]
    fn curl_free_gradient_norm_equals_divergence_norm() {
        let g = grid2(8);
        for seed in 0..3u64 {
            let phi = random_band_limited(&g, 40 + seed);
            let f = gradient(&phi);
            let mut grad_sq_direct = 0.0;
            for comp in f.components() {
                for (idx, c) in comp.spectral().iter().enumerate() {
                    grad_sq_direct += g.k_squared(idx) * c.norm_sqr();
                }
            }
            let div_sq = l2_norm_sq(&divergence(&f));
            assert!(
                (grad_sq_direct - div_sq).abs() <= 1e-12 * div_sq.max(1e-30),
                "{grad_sq_direct} vs {div_sq}"
            );
            assert!((grad_norm_sq_vector(&f) - div_sq).abs() <= 1e-12 * div_sq.max(1e-30));
        }
    }

    #[test]
    fn inverse_laplacian_of_cosine() {
        let g = grid2(16);
        let f = ScalarField::from_fn(g.clone(), |x| x[0].cos());
        let u = inverse_laplacian(&f).unwrap();
        let expected = ScalarField::from_fn(g, |x| -x[0].cos());
        assert!(l2_norm(&u.sub(&expected)) < 1e-13);
    }

    #[test]
    fn inverse_laplacian_projector_identity() {
        let g = grid2(16);
        let f = random_band_limited(&g, 11);
        let f0 = f.add_scalar(-f.mean());
        let u = inverse_laplacian(&f0).unwrap();
        let back = laplacian(&u);
        let err = l2_norm(&back.sub(&f0));
        assert!(err <= 1e-12 * l2_norm(&f0));
    }

    #[test]
    fn inverse_laplacian_rejects_nonzero_mean() {
        let g = grid2(8);
        let f = ScalarField::from_fn(g, |x| 0.5 + x[0].cos());
        match inverse_laplacian(&f) {
            Err(SpectralError::NonZeroMean { mean, .. }) => {
                assert!((mean - 0.5).abs() < 1e-12)
            }
            other => panic!("expected NonZeroMean, got {other:?}"),
        }
    }

    #[test]
    fn dealias_keeps_band_and_is_idempotent() {
        let g = grid2(16);
        let f = random_physical(&g, 5);
        let once = dealias(&f);
        let twice = dealias(&once);
        let err = l2_norm(&twice.sub(&once));
        assert!(err < 1e-15);

        let band_limited = ScalarField::from_fn(g, |x| (2.0 * x[0]).cos() + x[1].sin());
        let kept = dealias(&band_limited);
        assert!(l2_norm(&kept.sub(&band_limited)) < 1e-13);
    }

    #[test]
    fn dealiased_square_of_sine_matches_identity() {
        for n in [8usize, 16, 32] {
            let g = grid2(n);
            let s = ScalarField::from_fn(g.clone(), |x| x[0].sin());
            let prod = dealiased_product(&s, &s);
            // sin² x1 = (1 - cos 2x1) / 2.
            let expected = ScalarField::from_fn(g, |x| 0.5 * (1.0 - (2.0 * x[0]).cos()));
            assert!(l2_norm(&prod.sub(&expected)) <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn leray_annihilates_gradients() {
        let g = grid2(16);
        let phi = random_band_limited(&g, 21);
        let f = gradient(&phi);
        let projected = leray_project(&f);
        assert!(l2_norm_vector(&projected) <= 1e-13 * l2_norm_vector(&f).max(1.0));
    }

    #[test]
    fn leray_fixes_divergence_free_and_is_idempotent() {
        let g = grid2(16);
        let f = VectorField::new(vec![
            ScalarField::from_fn(g.clone(), |x| x[1].sin()),
            ScalarField::zeros(g.clone()),
        ]);
        let p = leray_project(&f);
        assert!(l2_norm_vector(&p.sub(&f)) < 1e-13);

        let mixed = VectorField::new(vec![
            random_band_limited(&g, 31),
            random_band_limited(&g, 32),
        ]);
        let once = leray_project(&mixed);
        let twice = leray_project(&once);
        assert!(l2_norm_vector(&twice.sub(&once)) <= 1e-13 * l2_norm_vector(&once).max(1.0));
        let div_rel = l2_norm(&divergence(&once)) / l2_norm_vector(&mixed).max(1e-30);
        assert!(div_rel <= 1e-12);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = grid2(16);
        let zero = ScalarField::zeros(g.clone());
        assert_eq!(sobolev_norm(&zero, 3), 0.0);

        let s = ScalarField::from_fn(g, |x| x[0].sin());
        assert!((l2_norm_sq(&s) - 0.5).abs() < 1e-13);
        assert!((sobolev_norm_sq(&s, 1) - 1.0).abs() < 1e-13);
    }

    /// Independent H¹ oracle: trapezoid quadrature (plain mean on a periodic
    /// uniform grid) of |f|² + |∇f|² with centered finite differences.
    #[test]
    fn sobolev_norm_matches_quadrature_oracle() {
        let g = Grid::new(2, 64).unwrap();
        let n = g.n();
        let h = g.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // Low modes only; the FD stencil is second order, so the band must
        // stay well below the grid cutoff for a 2% comparison.
        let mut modes = Vec::new();
        for kx in -2i64..=2 {
            for ky in -2i64..=2 {
                if (kx, ky) == (0, 0) {
                    continue;
                }
                modes.push((
                    kx,
                    ky,
                    rng.gen_range(-1.0..1.0f64),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                ));
            }
        }
        let f = ScalarField::from_fn(g.clone(), |x| {
            modes
                .iter()
                .map(|(kx, ky, a, p)| a * (*kx as f64 * x[0] + *ky as f64 * x[1] + p).cos())
                .sum()
        });
        let values = f.physical();
        let at = |i: usize, j: usize| values[(i % n) * n + (j % n)];
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = at(i, j);
                let dx = (at(i + 1, j) - at(i + n - 1, j)) / (2.0 * h);
                let dy = (at(i, j + 1) - at(i, j + n - 1)) / (2.0 * h);
                quad += v * v + dx * dx + dy * dy;
            }
        }
        quad /= (n * n) as f64;
        let spectral = sobolev_norm_sq(&f, 1);
        let rel = (quad - spectral).abs() / spectral;
        assert!(rel < 0.02, "H¹ oracle mismatch: {rel}");
    }

    /// Discrete elliptic regularity with constant 2 holds mode by mode.
    #[test]
    fn h2_bounded_by_l2_plus_laplacian() {
        let g = grid2(16);
        for seed in 0..5u64 {
            let f = random_band_limited(&g, 60 + seed);
            let lhs = sobolev_norm_sq(&f, 2);
            let rhs = 2.0 * (l2_norm_sq(&f) + laplacian_norm_sq(&f));
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_field() -> impl Strategy<Value = ScalarField> {
            prop::collection::vec(-1.0f64..1.0, 64)
                .prop_map(|values| ScalarField::from_physical(Grid::new(2, 8).unwrap(), values))
        }

        proptest! {
            #[test]
            fn parseval(f in arb_field()) {
                let phys: f64 = f.physical().iter().map(|v| v * v).sum::<f64>()
                    / f.grid().len() as f64;
                let spec = l2_norm_sq(&f);
                prop_assert!((phys - spec).abs() <= 1e-12 * spec.max(1e-30));
            }

            #[test]
            fn transform_round_trip(f in arb_field()) {
                let back =
                    ScalarField::from_spectral(f.grid().clone(), f.spectral().to_vec());
                let err = back
                    .physical()
                    .iter()
                    .zip(f.physical())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                prop_assert!(err <= 1e-13);
            }

            #[test]
            fn dealias_is_idempotent(f in arb_field()) {
                let once = dealias(&f);
                let twice = dealias(&once);
                prop_assert!(l2_norm(&twice.sub(&once)) <= 1e-14);
            }

            #[test]
            fn laplacian_factors_through_div_grad(f in arb_field()) {
                let lap = laplacian(&f);
                let dg = divergence(&gradient(&f));
                prop_assert!(l2_norm(&lap.sub(&dg)) <= 1e-13 * l2_norm(&lap).max(1.0));
            }

            #[test]
            fn leray_projects_idempotently(a in arb_field(), b in arb_field()) {
                let field = VectorField::new(vec![a, b]);
                let once = leray_project(&field);
                let twice = leray_project(&once);
                let scale = l2_norm_vector(&field).max(1e-30);
                prop_assert!(l2_norm_vector(&twice.sub(&once)) <= 1e-13 * scale);
                prop_assert!(l2_norm(&divergence(&once)) <= 1e-12 * scale);
            }

            #[test]
            fn h2_regularity_constant_two(f in arb_field()) {
                let band = dealias(&f);
                let lhs = sobolev_norm_sq(&band, 2);
                let rhs = 2.0 * (l2_norm_sq(&band) + laplacian_norm_sq(&band));
                prop_assert!(lhs <= rhs * (1.0 + 1e-12));
            }
        }
    }
}
