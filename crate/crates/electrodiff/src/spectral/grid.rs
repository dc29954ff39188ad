//! Periodic uniform grids with spectral transform metadata.
//!
//! The domain is fixed to `[0, 2π)^d` with the same power-of-two resolution
//! on every axis, so wavenumbers are integers in `[-N/2, N/2 - 1]`. The
//! Nyquist mode `-N/2` is not closed under negation; it is flagged here and
//! treated as zero by every differentiation operator so derivatives of real
//! fields stay real.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::SpectralError;

/// Domain length per axis.
pub const DOMAIN_LENGTH: f64 = 2.0 * std::f64::consts::PI;

/// Periodic uniform grid shared by all fields of a run.
pub struct Grid {
    dim: usize,
    n: usize,
    len: usize,
    /// Row-major strides, one per axis.
    strides: [usize; 3],
    /// Derivative wavenumber of axis `a` at each flat index (Nyquist zeroed).
    axis_k: Vec<Vec<f64>>,
    /// |k|^2 at each flat index, built from the derivative wavenumbers.
    k2: Vec<f64>,
    /// True where every |k_a| stays within the 2/3-rule band.
    in_band: Vec<bool>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl Grid {
    /// Builds a grid with `dim` axes (2 or 3) and `n` points per axis.
    ///
    /// `n` must be a power of two with `n >= 8`.
    pub fn new(dim: usize, n: usize) -> Result<Arc<Self>, SpectralError> {
        if !(dim == 2 || dim == 3) {
            return Err(SpectralError::InvalidGrid(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(SpectralError::InvalidGrid(format!(
                "resolution must be a power of two >= 8, got {n}"
            )));
        }
        let len = n.pow(dim as u32);
        let mut strides = [0usize; 3];
        for (a, stride) in strides.iter_mut().enumerate().take(dim) {
            *stride = n.pow((dim - 1 - a) as u32);
        }

        // Signed integer wavenumber for a 1-d index, Nyquist mapped to zero.
        let line_k: Vec<f64> = (0..n)
            .map(|i| {
                if i == n / 2 {
                    0.0
                } else if i < n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                }
            })
            .collect();
        let band = (n / 3) as f64;
        let line_in_band: Vec<bool> = (0..n)
            .map(|i| {
                let k = if i < n / 2 {
                    i as i64
                } else {
                    i as i64 - n as i64
                };
                (k.unsigned_abs() as f64) <= band
            })
            .collect();

        let mut axis_k = vec![vec![0.0; len]; dim];
        let mut k2 = vec![0.0; len];
        let mut in_band = vec![true; len];
        for idx in 0..len {
            let mut s = 0.0;
            for a in 0..dim {
                let ia = (idx / strides[a]) % n;
                let k = line_k[ia];
                axis_k[a][idx] = k;
                s += k * k;
                in_band[idx] &= line_in_band[ia];
            }
            k2[idx] = s;
        }

        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(n);
        let fft_inverse = planner.plan_fft_inverse(n);

        Ok(Arc::new(Grid {
            dim,
            n,
            len,
            strides,
            axis_k,
            k2,
            in_band,
            fft_forward,
            fft_inverse,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points (and spectral modes).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `2π / N`.
    pub fn spacing(&self) -> f64 {
        DOMAIN_LENGTH / self.n as f64
    }

    /// Largest wavenumber magnitude kept by the 2/3 rule.
    pub fn dealias_band(&self) -> usize {
        self.n / 3
    }

    /// Derivative wavenumber component of `axis` at flat index `idx`
    /// (Nyquist counted as zero).
    #[inline]
    pub fn k_axis(&self, axis: usize, idx: usize) -> f64 {
        self.axis_k[axis][idx]
    }

    /// |k|^2 at flat index `idx` under the derivative convention.
    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        self.k2[idx]
    }

    #[inline]
    pub fn k_squared_table(&self) -> &[f64] {
        &self.k2
    }

    /// Whether mode `idx` survives 2/3-rule dealiasing.
    #[inline]
    pub fn mode_in_band(&self, idx: usize) -> bool {
        self.in_band[idx]
    }

    /// Index along `axis` of the flat index `idx`.
    #[inline]
    pub fn axis_index(&self, axis: usize, idx: usize) -> usize {
        (idx / self.strides[axis]) % self.n
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let h = self.spacing();
        for (a, coord) in x.iter_mut().enumerate().take(self.dim) {
            *coord = ((idx / self.strides[a]) % self.n) as f64 * h;
        }
        x
    }

    /// Flat index of the spectral mode with integer wavevector `k`
    /// (components wrapped into `[-N/2, N/2 - 1]`).
    pub fn mode_index(&self, k: &[i64]) -> usize {
        assert_eq!(k.len(), self.dim);
        let n = self.n as i64;
        let mut idx = 0;
        for (a, &ka) in k.iter().enumerate() {
            let ia = ka.rem_euclid(n) as usize;
            idx += ia * self.strides[a];
        }
        idx
    }

    pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
        Arc::ptr_eq(a, b) || (a.dim == b.dim && a.n == b.n)
    }

    /// In-place multidimensional FFT, one 1-d transform per axis.
    pub(crate) fn fft_all_axes(
        &self,
        data: &mut [rustfft::num_complex::Complex<f64>],
        forward: bool,
    ) {
        debug_assert_eq!(data.len(), self.len);
        let fft = if forward {
            &self.fft_forward
        } else {
            &self.fft_inverse
        };
        let mut line = vec![rustfft::num_complex::Complex::default(); self.n];
        let mut scratch =
            vec![rustfft::num_complex::Complex::default(); fft.get_inplace_scratch_len()];
        for a in 0..self.dim {
            let stride = self.strides[a];
            for start in 0..self.len {
                // Visit each 1-d line once, at its first element.
                if !(start / stride).is_multiple_of(self.n) {
                    continue;
                }
                for j in 0..self.n {
                    line[j] = data[start + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for j in 0..self.n {
                    data[start + j * stride] = line[j];
                }
            }
        }
    }
}
