//! Collocated scalar and vector fields with paired spectral coefficients.
//!
//! A field owns at least one of the two representations; the other is filled
//! in lazily on first access and cached. Values are immutable after
//! construction, so fields can be shared freely across threads.
//!
//! Transform convention: `û_k = N^{-d} Σ_j u(x_j) e^{-i k·x_j}`, so the zero
//! mode is the mean and Parseval reads `mean(|u|²) = Σ_k |û_k|²`. With this
//! mean-square convention all norms are resolution independent.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;

use super::grid::Grid;

pub type Complex64 = Complex<f64>;

/// Real scalar field over a periodic grid.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    phys: OnceLock<Vec<f64>>,
    spec: OnceLock<Vec<Complex64>>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("has_physical", &self.has_physical())
            .field("has_spectral", &self.has_spectral())
            .finish()
    }
}

impl ScalarField {
    pub fn from_physical(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "physical data does not fit grid");
        let phys = OnceLock::new();
        phys.set(values).ok();
        ScalarField {
            grid,
            phys,
            spec: OnceLock::new(),
        }
    }

    pub fn from_spectral(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len(), "spectral data does not fit grid");
        let spec = OnceLock::new();
        spec.set(coeffs).ok();
        ScalarField {
            grid,
            phys: OnceLock::new(),
            spec,
        }
    }

    /// Evaluates `f` at every grid point.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let x = grid.point(idx);
                f(&x[..grid.dim()])
            })
            .collect();
        ScalarField::from_physical(grid, values)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let len = grid.len();
        let mut coeffs = vec![Complex64::default(); len];
        coeffs[0] = Complex64::new(value, 0.0);
        ScalarField::from_spectral(grid, coeffs)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn has_physical(&self) -> bool {
        self.phys.get().is_some()
    }

    pub fn has_spectral(&self) -> bool {
        self.spec.get().is_some()
    }

    /// Point values, computed from the coefficients on first use.
    pub fn physical(&self) -> &[f64] {
        self.phys.get_or_init(|| {
            let coeffs = self
                .spec
                .get()
                .expect("field holds at least one representation");
            let mut data = coeffs.clone();
            self.grid.fft_all_axes(&mut data, false);
            data.iter().map(|c| c.re).collect()
        })
    }

    /// Fourier coefficients, computed from the point values on first use.
    pub fn spectral(&self) -> &[Complex64] {
        self.spec.get_or_init(|| {
            let values = self
                .phys
                .get()
                .expect("field holds at least one representation");
            let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            self.grid.fft_all_axes(&mut data, true);
            let scale = 1.0 / self.grid.len() as f64;
            for c in &mut data {
                *c *= scale;
            }
            data
        })
    }

    /// Mean over the domain (the zero mode).
    pub fn mean(&self) -> f64 {
        if let Some(coeffs) = self.spec.get() {
            coeffs[0].re
        } else {
            let values = self.physical();
            values.iter().sum::<f64>() / values.len() as f64
        }
    }

    pub fn min_value(&self) -> f64 {
        self.physical()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.physical()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.physical().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise linear combination `a*self + b*other`.
    pub fn linear_comb(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        assert!(
            Grid::same_grid(&self.grid, &other.grid),
            "fields live on different grids"
        );
        if self.has_spectral() && other.has_spectral() {
            let coeffs = self
                .spectral()
                .iter()
                .zip(other.spectral())
                .map(|(x, y)| x * a + y * b)
                .collect();
            ScalarField::from_spectral(self.grid.clone(), coeffs)
        } else {
            let values = self
                .physical()
                .iter()
                .zip(other.physical())
                .map(|(x, y)| a * x + b * y)
                .collect();
            ScalarField::from_physical(self.grid.clone(), values)
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.linear_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.linear_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        if self.has_spectral() {
            let coeffs = self.spectral().iter().map(|c| c * a).collect();
            ScalarField::from_spectral(self.grid.clone(), coeffs)
        } else {
            let values = self.physical().iter().map(|v| a * v).collect();
            ScalarField::from_physical(self.grid.clone(), values)
        }
    }

    pub fn add_scalar(&self, c: f64) -> ScalarField {
        if self.has_spectral() {
            let mut coeffs = self.spectral().to_vec();
            coeffs[0] += Complex64::new(c, 0.0);
            ScalarField::from_spectral(self.grid.clone(), coeffs)
        } else {
            let values = self.physical().iter().map(|v| v + c).collect();
            ScalarField::from_physical(self.grid.clone(), values)
        }
    }
}

/// Pointwise evaluator used to build fields from closures.
pub type PointFn<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Vector field: `dim` scalar components on one shared grid.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Self {
        assert!(!components.is_empty());
        let grid = components[0].grid().clone();
        assert_eq!(components.len(), grid.dim(), "one component per axis");
        for c in &components {
            assert!(
                Grid::same_grid(c.grid(), &grid),
                "components live on different grids"
            );
        }
        VectorField { components }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let components = (0..grid.dim())
            .map(|_| ScalarField::zeros(grid.clone()))
            .collect();
        VectorField { components }
    }

    pub fn from_fns(grid: Arc<Grid>, fns: &[PointFn<'_>]) -> Self {
        assert_eq!(fns.len(), grid.dim());
        let components = fns
            .iter()
            .map(|f| ScalarField::from_fn(grid.clone(), f))
            .collect();
        VectorField::new(components)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn map(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField::new(self.components.iter().map(f).collect())
    }

    pub fn linear_comb(&self, a: f64, other: &VectorField, b: f64) -> VectorField {
        assert_eq!(self.dim(), other.dim());
        VectorField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(x, y)| x.linear_comb(a, y, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        self.linear_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.linear_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> VectorField {
        self.map(|c| c.scale(a))
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.max_abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_spectrum() {
        let g = Grid::new(2, 8).unwrap();
        let f = ScalarField::constant(g.clone(), 3.0);
        let spec = ScalarField::from_physical(g, vec![3.0; f.grid().len()]);
        let coeffs = spec.spectral();
        assert!((coeffs[0].re - 3.0).abs() < 1e-14);
        assert!(coeffs.iter().skip(1).all(|c| c.norm() < 1e-13));
        assert!((f.mean() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_mode_spectrum() {
        let g = Grid::new(2, 8).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| x[0].sin());
        let coeffs = f.spectral();
        let plus = g.mode_index(&[1, 0]);
        let minus = g.mode_index(&[-1, 0]);
        // sin(x1) = (e^{ix1} - e^{-ix1}) / 2i, so û_{±e1} = ∓i/2.
        assert!((coeffs[plus] - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((coeffs[minus] - Complex64::new(0.0, 0.5)).norm() < 1e-14);
        let energy: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        assert!((energy - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lazy_representations_round_trip() {
        let g = Grid::new(3, 8).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[1]).cos() + x[2].sin());
        assert!(f.has_physical() && !f.has_spectral());
        let back = ScalarField::from_spectral(f.grid().clone(), f.spectral().to_vec());
        assert!(!back.has_physical());
        let max_err = back
            .physical()
            .iter()
            .zip(f.physical())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_err < 1e-13, "round trip error {max_err}");
        assert!(back.has_physical() && back.has_spectral());
    }
}
