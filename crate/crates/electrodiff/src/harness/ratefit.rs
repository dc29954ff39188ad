//! Least-squares power-law fits for the λ-sweep.

use serde::Serialize;

use super::HarnessError;

/// Result of fitting `log(metric) = slope · log(λ) + intercept`.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub slope: f64,
    /// Natural-log intercept: `metric ≈ e^intercept · λ^slope`.
    pub intercept: f64,
    pub r_squared: f64,
    /// The fitted `(λ, sup_t metric)` pairs, largest λ first.
    pub per_lambda: Vec<(f64, f64)>,
}

/// Fits `log(metric)` against `log(λ)` by least squares over at least three
/// strictly positive samples.
pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<RateFit, HarnessError> {
    if pairs.len() < 3 {
        return Err(HarnessError::InsufficientData(format!(
            "power-law fit needs at least 3 lambda values, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(l, m)| l <= 0.0 || m <= 0.0) {
        return Err(HarnessError::InsufficientData(
            "power-law fit needs positive lambdas and metrics".to_string(),
        ));
    }
    let xs: Vec<f64> = pairs.iter().map(|&(l, _)| l.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|&(_, m)| m.ln()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    if sxx == 0.0 {
        return Err(HarnessError::InsufficientData(
            "power-law fit needs distinct lambda values".to_string(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = slope * x + intercept;
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        per_lambda: pairs.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_power_law() {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&l| (l, l)).collect();
        let fit = fit_power_law(&pairs).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_quadratic_with_prefactor() {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&l| (l, 3.0 * l * l)).collect();
        let fit = fit_power_law(&pairs).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_insufficient_data() {
        assert!(matches!(
            fit_power_law(&[(0.1, 1.0), (0.05, 0.5)]),
            Err(HarnessError::InsufficientData(_))
        ));
        assert!(fit_power_law(&[(0.1, 1.0), (0.05, 0.5), (0.025, 0.0)]).is_err());
    }
}
