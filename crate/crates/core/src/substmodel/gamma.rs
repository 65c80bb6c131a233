use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::ModelError;

/// Parameterization of the gamma distribution behind the rate categories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaScaling {
    /// Shape `r`, rate `r`: the rates average to one.
    #[default]
    MeanOne,
    /// Shape `r`, scale `r`: the rates average to `r^2`.
    ShapeEqualsScale,
}

/// Among-site rate variation with equal-probability gamma categories.
///
/// Each scaler is the mean of the gamma distribution restricted to one of
/// `n` slices of equal probability mass.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGamma {
    shape: f64,
    scaling: GammaScaling,
    scalers: Vec<f64>,
}

impl DiscreteGamma {
    pub fn new(n_categories: usize, shape: f64) -> Result<Self, ModelError> {
        Self::with_scaling(n_categories, shape, GammaScaling::MeanOne)
    }

    pub fn with_scaling(
        n_categories: usize,
        shape: f64,
        scaling: GammaScaling,
    ) -> Result<Self, ModelError> {
        if n_categories == 0 {
            return Err(ModelError::Domain("at least one rate category is required".into()));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(ModelError::Domain(format!("gamma shape must be positive, got {shape}")));
        }
        let rate = match scaling {
            GammaScaling::MeanOne => shape,
            GammaScaling::ShapeEqualsScale => 1.0 / shape,
        };
        let mean = shape / rate;
        let n = n_categories as f64;
        if n_categories == 1 {
            return Ok(DiscreteGamma {
                shape,
                scaling,
                scalers: vec![mean],
            });
        }
        // Cut points on the rate-1 scale; the mass of x * density below a
        // cut y is mean * P(shape + 1, y).
        let cuts: Vec<f64> = (1..n_categories)
            .map(|m| standard_gamma_quantile(shape, m as f64 / n))
            .collect();
        let mut upper_mass = Vec::with_capacity(n_categories + 1);
        upper_mass.push(0.0);
        upper_mass.extend(cuts.iter().map(|&y| gamma_lr(shape + 1.0, y)));
        upper_mass.push(1.0);
        let scalers = upper_mass
            .windows(2)
            .map(|w| mean * n * (w[1] - w[0]))
            .collect();
        Ok(DiscreteGamma {
            shape,
            scaling,
            scalers,
        })
    }

    /// A single category with scaler 1 (no rate variation).
    pub fn uniform() -> Self {
        DiscreteGamma {
            shape: f64::INFINITY,
            scaling: GammaScaling::MeanOne,
            scalers: vec![1.0],
        }
    }

    pub fn n_categories(&self) -> usize {
        self.scalers.len()
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scaling(&self) -> GammaScaling {
        self.scaling
    }

    pub fn scalers(&self) -> &[f64] {
        &self.scalers
    }
}

/// Quantile of Gamma(shape, rate 1) by bisection on the regularized lower
/// incomplete gamma function.
fn standard_gamma_quantile(shape: f64, p: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = shape.max(1.0);
    while gamma_lr(shape, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gamma_lr(shape, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
