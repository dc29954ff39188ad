//! Model parameters, doping profiles, state containers, and construction of
//! compatible initial data.
//!
//! Initial data for both systems is always specified through the limit
//! variables `(Z₀, v₀)`: the charge densities follow from the doping profile
//! via [`recover_np`], so the quasineutral constraint `n − p = D` holds by
//! construction, and the screened system starts from the well-prepared
//! perturbation `p₀ + λ² div 𝓔(0)` that eliminates initial layers.

use std::sync::Arc;

use crate::quasineutral::{self, LimitError};
use crate::spectral::{self, divergence, l2_norm, Complex64, Grid, ScalarField, VectorField};

/// Physical parameters shared by a run.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    /// Scaled Debye length; zero is reserved for the limit system.
    pub lambda: f64,
    /// Dynamic viscosity.
    pub mu: f64,
    pub dim: usize,
}

impl Params {
    pub fn new(lambda: f64, mu: f64, dim: usize) -> Result<Self, ModelError> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "viscosity must be positive, got {mu}"
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "Debye length must be nonnegative, got {lambda}"
            )));
        }
        if !(dim == 2 || dim == 3) {
            return Err(ModelError::InvalidParams(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        Ok(Params { lambda, mu, dim })
    }
}

/// Run-time guard thresholds.
#[derive(Debug, Clone, Copy)]
pub struct DensityGuards {
    /// Positivity floor for the limit density `Z`; runs abort when `min Z`
    /// falls below half of it.
    pub kappa0: f64,
    /// Spectral undershoot of `n` or `p` below zero is tolerated down to
    /// this value; beyond it the run aborts.
    pub negative_abort: f64,
}

impl Default for DensityGuards {
    fn default() -> Self {
        DensityGuards {
            kappa0: 0.5,
            negative_abort: -1e-3,
        }
    }
}

/// Time-independent background charge; may change sign.
#[derive(Debug, Clone)]
pub struct DopingProfile {
    field: ScalarField,
}

impl DopingProfile {
    /// Wraps a field, requiring it to be band-limited so every drift product
    /// stays alias-free.
    pub fn new(field: ScalarField) -> Result<Self, ModelError> {
        let clipped = spectral::dealias(&field);
        let loss = l2_norm(&clipped.sub(&field));
        if loss > 1e-13 * l2_norm(&field).max(1.0) {
            return Err(ModelError::NotBandLimited { loss });
        }
        Ok(DopingProfile { field: clipped })
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        DopingProfile {
            field: ScalarField::zeros(grid),
        }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }
}

/// One trigonometric mode of a profile specification.
#[derive(Debug, Clone)]
pub struct ModeSpec {
    /// Integer wavevector, one component per axis.
    pub k: Vec<i64>,
    pub amplitude: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

/// Builds `offset + Σ a_m cos/sin(k_m · x)` directly in spectral space, so
/// the result is exactly band-limited.
pub fn build_profile(
    grid: &Arc<Grid>,
    offset: f64,
    modes: &[ModeSpec],
) -> Result<ScalarField, ModelError> {
    let band = grid.dealias_band() as i64;
    let mut coeffs = vec![Complex64::default(); grid.len()];
    coeffs[0] = Complex64::new(offset, 0.0);
    for mode in modes {
        if mode.k.len() != grid.dim() {
            return Err(ModelError::InvalidParams(format!(
                "mode {:?} has {} components on a {}-d grid",
                mode.k,
                mode.k.len(),
                grid.dim()
            )));
        }
        if mode.k.iter().any(|&k| k.abs() > band) {
            return Err(ModelError::ModeOutOfBand {
                k: mode.k.clone(),
                band: band as usize,
            });
        }
        let plus = grid.mode_index(&mode.k);
        let minus_k: Vec<i64> = mode.k.iter().map(|&k| -k).collect();
        let minus = grid.mode_index(&minus_k);
        let half = 0.5 * mode.amplitude;
        match mode.phase {
            Phase::Cos => {
                coeffs[plus] += Complex64::new(half, 0.0);
                coeffs[minus] += Complex64::new(half, 0.0);
            }
            Phase::Sin => {
                coeffs[plus] += Complex64::new(0.0, -half);
                coeffs[minus] += Complex64::new(0.0, half);
            }
        }
    }
    Ok(ScalarField::from_spectral(grid.clone(), coeffs))
}

/// Instantaneous state of the screened system: densities and velocity.
#[derive(Debug, Clone)]
pub struct NpnsState {
    t: f64,
    n: ScalarField,
    p: ScalarField,
    v: VectorField,
}

impl NpnsState {
    /// Validates that the velocity is (numerically) divergence free.
    pub fn new(t: f64, n: ScalarField, p: ScalarField, v: VectorField) -> Result<Self, ModelError> {
        let div_rel = relative_divergence(&v);
        if div_rel > 1e-10 {
            return Err(ModelError::NotDivergenceFree { div_rel });
        }
        Ok(NpnsState { t, n, p, v })
    }

    pub(crate) fn from_parts_unchecked(
        t: f64,
        n: ScalarField,
        p: ScalarField,
        v: VectorField,
    ) -> Self {
        NpnsState { t, n, p, v }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> &ScalarField {
        &self.n
    }

    pub fn p(&self) -> &ScalarField {
        &self.p
    }

    pub fn v(&self) -> &VectorField {
        &self.v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.n.grid()
    }
}

/// Instantaneous state of the quasineutral system in the `Z = n + p`
/// reduction.
#[derive(Debug, Clone)]
pub struct LimitState {
    t: f64,
    z: ScalarField,
    v: VectorField,
}

impl LimitState {
    /// Validates positivity `min Z >= kappa0 > 0` and incompressibility.
    pub fn new(t: f64, z: ScalarField, v: VectorField, kappa0: f64) -> Result<Self, ModelError> {
        if !kappa0.is_finite() || kappa0 <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "kappa0 must be positive, got {kappa0}"
            )));
        }
        let min_z = z.min_value();
        if min_z < kappa0 {
            return Err(ModelError::DensityBelowFloor {
                min_z,
                floor: kappa0,
            });
        }
        let div_rel = relative_divergence(&v);
        if div_rel > 1e-10 {
            return Err(ModelError::NotDivergenceFree { div_rel });
        }
        Ok(LimitState { t, z, v })
    }

    pub(crate) fn from_parts_unchecked(t: f64, z: ScalarField, v: VectorField) -> Self {
        LimitState { t, z, v }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn z(&self) -> &ScalarField {
        &self.z
    }

    pub fn v(&self) -> &VectorField {
        &self.v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.z.grid()
    }
}

fn relative_divergence(v: &VectorField) -> f64 {
    let norm = spectral::l2_norm_vector(v);
    if norm == 0.0 {
        return 0.0;
    }
    l2_norm(&divergence(v)) / norm
}

/// One integral constraint of the compatibility check.
#[derive(Debug, Clone)]
pub struct CompatibilityEntry {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Report of the initial-data integral constraints: the charge mean
/// `∫(n − p − D) = 0` and the velocity mean `∫v = 0`.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub entries: Vec<CompatibilityEntry>,
}

impl CompatibilityReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

const COMPATIBILITY_TOL: f64 = 1e-10;

/// Checks the integral constraints of valid initial data. Always returns a
/// report; it never fails.
pub fn validate_compatibility(state: &NpnsState, doping: &DopingProfile) -> CompatibilityReport {
    let mut entries = Vec::new();
    let charge = (state.n().mean() - state.p().mean() - doping.field().mean()).abs();
    entries.push(CompatibilityEntry {
        name: "mean(n - p - D)".to_string(),
        residual: charge,
        tolerance: COMPATIBILITY_TOL,
        pass: charge <= COMPATIBILITY_TOL,
    });
    for (axis, comp) in state.v().components().iter().enumerate() {
        let residual = comp.mean().abs();
        entries.push(CompatibilityEntry {
            name: format!("mean(v_{axis})"),
            residual,
            tolerance: COMPATIBILITY_TOL,
            pass: residual <= COMPATIBILITY_TOL,
        });
    }
    CompatibilityReport { entries }
}

/// Warning raised when a recovered density dips below zero.
#[derive(Debug, Clone, Copy)]
pub struct NegativeDensity {
    pub min_n: f64,
    pub min_p: f64,
}

/// Charge densities recovered from the reduction variables.
#[derive(Debug, Clone)]
pub struct RecoveredDensities {
    pub n: ScalarField,
    pub p: ScalarField,
    /// Present when `min(n) <= 0` or `min(p) <= 0`; small undershoot can be
    /// benign spectral ringing, so this is a warning rather than an error.
    pub warning: Option<NegativeDensity>,
}

/// Inverts `Z = n + p`, `n − p = D` pointwise: `n = (Z + D)/2`,
/// `p = (Z − D)/2`.
pub fn recover_np(z: &ScalarField, doping: &DopingProfile) -> RecoveredDensities {
    let n = z.linear_comb(0.5, doping.field(), 0.5);
    let p = z.linear_comb(0.5, doping.field(), -0.5);
    let (min_n, min_p) = (n.min_value(), p.min_value());
    let warning = if min_n <= 0.0 || min_p <= 0.0 {
        Some(NegativeDensity { min_n, min_p })
    } else {
        None
    };
    RecoveredDensities { n, p, warning }
}

/// Builds well-prepared initial data for the screened system from limit
/// data: `n₀` and `v₀` are carried over and the positive density receives
/// the `λ² div 𝓔(0)` correction computed from the limit elliptic solve.
pub fn well_prepared_initial(
    limit0: &LimitState,
    doping: &DopingProfile,
    params: &Params,
) -> Result<NpnsState, ModelError> {
    if params.lambda <= 0.0 {
        return Err(ModelError::InvalidParams(
            "well-prepared data needs lambda > 0; the limit system carries lambda = 0".to_string(),
        ));
    }
    let recovered = recover_np(limit0.z(), doping);
    let (_phi, e, _report) = quasineutral::solve_limit_potential(limit0.z(), doping, limit0.v())?;
    let div_e = divergence(&e);
    let lambda_sq = params.lambda * params.lambda;
    let p_corrected = recovered.p.linear_comb(1.0, &div_e, lambda_sq);
    NpnsState::new(limit0.t(), recovered.n, p_corrected, limit0.v().clone())
}

/// Errors from model construction and validation.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("mode {k:?} exceeds the dealias band |k| <= {band}")]
    ModeOutOfBand { k: Vec<i64>, band: usize },
    #[error("profile is not band-limited (clipped energy {loss:.3e})")]
    NotBandLimited { loss: f64 },
    #[error("velocity is not divergence free (relative divergence {div_rel:.3e})")]
    NotDivergenceFree { div_rel: f64 },
    #[error("density floor violated: min Z = {min_z:.6} < {floor:.6}")]
    DensityBelowFloor { min_z: f64, floor: f64 },
    #[error(transparent)]
    Elliptic(#[from] LimitError),
}
