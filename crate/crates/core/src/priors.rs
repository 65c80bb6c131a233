//! Cluster-assignment prior with the Dirichlet weights integrated out, the
//! gamma hyperprior on the concentration, and the branch-length prior
//! settings behind the transition grids.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::likelihood::RegimeLabeling;
use crate::substmodel::BranchRegime;
use crate::tree::{ClusterAssignment, Topology};

/// Hyperparameters of the cluster-assignment prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPriorParams {
    /// Poisson rate on the number of clusters.
    pub lambda: f64,
    /// Symmetric Dirichlet concentration.
    pub alpha: f64,
    /// Gamma hyperprior shape for `alpha`.
    pub eta: f64,
    /// Gamma hyperprior scale for `alpha`.
    pub beta: f64,
}

impl ClusterPriorParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("beta", self.beta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        ClusterPriorParams { alpha, ..self }
    }
}

/// Unnormalized log prior of `c`: `-inf` unless every cluster is a clade of
/// `t`, otherwise [`log_partition_prior`] of the cluster sizes.
pub fn log_cluster_prior(c: &ClusterAssignment, t: &Topology, params: &ClusterPriorParams) -> f64 {
    if c.len() != t.n_tips() || !t.is_clade_partition(c) {
        return f64::NEG_INFINITY;
    }
    log_partition_prior(&c.sizes(), params.alpha, params.lambda)
}

/// `log[B(n + alpha) / B(alpha)] + log multinomial(n; n_1..n_k)
///  + k log(lambda) - lambda - log(k!)` with `alpha` repeated `k` times.
pub fn log_partition_prior(sizes: &[usize], alpha: f64, lambda: f64) -> f64 {
    if !(alpha > 0.0 && lambda > 0.0) {
        return f64::NEG_INFINITY;
    }
    let k = sizes.len() as f64;
    let n: usize = sizes.iter().sum();
    let n = n as f64;
    let mut dirichlet = ln_gamma(k * alpha) - ln_gamma(n + k * alpha) - k * ln_gamma(alpha);
    let mut multinomial = ln_gamma(n + 1.0);
    for &s in sizes {
        dirichlet += ln_gamma(s as f64 + alpha);
        multinomial -= ln_gamma(s as f64 + 1.0);
    }
    let poisson = k * lambda.ln() - lambda - ln_gamma(k + 1.0);
    dirichlet + multinomial + poisson
}

/// Gamma log density with shape `eta` and scale `beta`; `-inf` for
/// `alpha <= 0`.
pub fn log_alpha_prior(alpha: f64, eta: f64, beta: f64) -> f64 {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return f64::NEG_INFINITY;
    }
    match Gamma::new(eta, 1.0 / beta) {
        Ok(g) => g.ln_pdf(alpha),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Settings of the discrete mean grids standing in for the branch-length
/// priors: exponential within clusters, log-normal between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchLengthPriorConfig {
    /// Number of grid values per regime.
    pub grid_size: usize,
    /// Grid half-width as a fraction of its center.
    pub radius_fraction: f64,
    /// Monte Carlo draws per grid matrix.
    pub mc_samples: usize,
    /// Coefficient of variation of the between-cluster log-normal.
    pub coefficient_of_variation: f64,
    /// Centers used when the starting partition leaves a regime without
    /// positive-length edges.
    pub fallback_within_mean: f64,
    pub fallback_between_mean: f64,
}

impl Default for BranchLengthPriorConfig {
    fn default() -> Self {
        BranchLengthPriorConfig {
            grid_size: 20,
            radius_fraction: 0.08,
            mc_samples: 100_000,
            coefficient_of_variation: 1.0,
            fallback_within_mean: 0.003,
            fallback_between_mean: 0.008,
        }
    }
}

/// Average length of the edges in each regime under `c`, as
/// `(within, between)`. A regime without edges, or with a non-positive
/// average, gives `None`. Edges without a length are skipped.
pub fn regime_mean_lengths(t: &Topology, c: &ClusterAssignment) -> (Option<f64>, Option<f64>) {
    let Ok(labels) = RegimeLabeling::new(t, c) else {
        return (None, None);
    };
    let mean = |regime| {
        let lengths: Vec<f64> = labels
            .edges_in(regime)
            .into_iter()
            .filter_map(|v| t.length(v))
            .collect();
        let m = lengths.iter().sum::<f64>() / lengths.len() as f64;
        (!lengths.is_empty() && m > 0.0).then_some(m)
    };
    (mean(BranchRegime::Within), mean(BranchRegime::Between))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, lambda: f64) -> ClusterPriorParams {
        ClusterPriorParams {
            lambda,
            alpha,
            eta: 1000.0,
            beta: 0.1,
        }
    }

    #[test]
    fn cherry_ratio_matches_scalar_arithmetic() {
        let t = Topology::parse_newick("(a,b);").unwrap();
        let (alpha, lambda) = (1.7_f64, 3.0_f64);
        let p = params(alpha, lambda);
        let one = log_cluster_prior(&ClusterAssignment::single(2), &t, &p);
        let two = log_cluster_prior(&ClusterAssignment::singletons(2), &t, &p);
        // B((2)+a)/B(a) = G(2+a)/G(a) * G(a)/G(2+a) = 1, multinomial 1, Pois(1).
        let g = |x: f64| statrs::function::gamma::gamma(x);
        let one_expected = (lambda * (-lambda).exp()) * 1.0;
        // B((1,1)+(a,a))/B((a,a)) = G(1+a)^2 G(2a) / (G(2+2a) G(a)^2), multinomial 2.
        let b_ratio = g(1.0 + alpha).powi(2) * g(2.0 * alpha) / (g(2.0 + 2.0 * alpha) * g(alpha).powi(2));
        let two_expected = b_ratio * 2.0 * lambda.powi(2) * (-lambda).exp() / 2.0;
        assert!(((one - two) - (one_expected / two_expected).ln()).abs() < 1e-12);
    }

    #[test]
    fn non_clade_is_impossible() {
        let t = Topology::parse_newick("((a,b),(c,d));").unwrap();
        let c = ClusterAssignment::from_labels([1, 2, 1, 2]);
        assert_eq!(log_cluster_prior(&c, &t, &params(1.0, 2.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn extra_cluster_gains_with_lambda() {
        let t = Topology::parse_newick("((a,b),(c,d));").unwrap();
        let two = ClusterAssignment::from_labels([1, 1, 2, 2]);
        let three = ClusterAssignment::from_labels([1, 1, 2, 3]);
        let mut last = f64::NEG_INFINITY;
        for lambda in [0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
            let p = params(2.0, lambda);
            let diff = log_cluster_prior(&three, &t, &p) - log_cluster_prior(&two, &t, &p);
            assert!(diff > last);
            // The Poisson part of the difference is log(lambda) - log(3).
            let rest = log_partition_prior(&[2, 1, 1], 2.0, 1.0) - log_partition_prior(&[2, 2], 2.0, 1.0);
            assert!((diff - rest - lambda.ln()).abs() < 1e-10);
            last = diff;
        }
    }

    #[test]
    fn relabeling_and_swapping_equal_sizes() {
        let t = Topology::parse_newick("((a,b),((c,d),e));").unwrap();
        let p = params(3.0, 4.0);
        let x = log_cluster_prior(&ClusterAssignment::from_labels([5, 5, 2, 2, 9]), &t, &p);
        let y = log_cluster_prior(&ClusterAssignment::from_labels([1, 1, 2, 2, 3]), &t, &p);
        assert_eq!(x, y);
        assert_eq!(
            log_partition_prior(&[2, 2, 1], 3.0, 4.0),
            log_partition_prior(&[2, 1, 2], 3.0, 4.0)
        );
    }

    #[test]
    fn alpha_prior_shape() {
        let (eta, beta) = (5.0, 0.4);
        let mode = (eta - 1.0) * beta;
        let at = |a| log_alpha_prior(a, eta, beta);
        assert!(at(mode) >= at(mode - 0.1) && at(mode) >= at(mode + 0.1));
        assert!(log_alpha_prior(100.0, 1000.0, 0.1).is_finite());
        assert_eq!(log_alpha_prior(0.0, eta, beta), f64::NEG_INFINITY);
        assert_eq!(log_alpha_prior(-1.0, eta, beta), f64::NEG_INFINITY);
    }

    #[test]
    fn alpha_prior_integrates_to_one() {
        for (eta, beta) in [(5.0, 0.4), (1000.0, 0.1), (10.0, 0.1)] {
            let mean: f64 = eta * beta;
            let sd = eta.sqrt() * beta;
            let (lo, hi) = ((mean - 40.0 * sd).max(1e-12), mean + 40.0 * sd);
            let panels = 200_000;
            let h = (hi - lo) / panels as f64;
            let f = |x: f64| log_alpha_prior(x, eta, beta).exp();
            let mut s = f(lo) + f(hi);
            for i in 1..panels {
                s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-6, "{eta} {beta}: {integral}");
        }
    }

    #[test]
    fn regime_means() {
        let t = Topology::parse_newick("((a:1,b:3):10,(c:2,d:4):20);").unwrap();
        let c = ClusterAssignment::from_labels([1, 1, 2, 3]);
        let (w, b) = regime_mean_lengths(&t, &c);
        assert_eq!(w, Some(2.0));
        assert_eq!(b, Some((10.0 + 20.0 + 2.0 + 4.0) / 4.0));
        let (w, _) = regime_mean_lengths(&t, &ClusterAssignment::singletons(4));
        assert_eq!(w, None);
    }
}
