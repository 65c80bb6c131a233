use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiscreteGamma, Mat4, ModelError, RateMatrix};
use crate::rng;
use crate::seqdata::STATES;

/// Which part of the phylogeny an edge belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchRegime {
    /// Inside a cluster's clade: exponential branch lengths.
    Within,
    /// Between cluster ancestors: log-normal branch lengths.
    Between,
}

impl BranchRegime {
    fn code(self) -> u64 {
        match self {
            BranchRegime::Within => 0,
            BranchRegime::Between => 1,
        }
    }
}

/// Construction parameters of a [`MarginalTransitionGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub regime: BranchRegime,
    /// Mean branch length at the center of the grid.
    pub center_mean: f64,
    /// Half-width of the grid as a fraction of the center.
    pub radius_fraction: f64,
    pub grid_size: usize,
    /// Monte Carlo draws per grid point.
    pub mc_samples: usize,
    /// Coefficient of variation of the log-normal (between regime only).
    pub coefficient_of_variation: f64,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(regime: BranchRegime, center_mean: f64, seed: u64) -> Self {
        GridSpec {
            regime,
            center_mean,
            radius_fraction: 0.08,
            grid_size: 20,
            mc_samples: 100_000,
            coefficient_of_variation: 1.0,
            seed,
        }
    }
}

/// Equidistant means spanning `center * (1 -+ radius_fraction)`.
pub fn grid_means(
    center: f64,
    radius_fraction: f64,
    size: usize,
) -> Result<Vec<f64>, ModelError> {
    if !(center.is_finite() && center > 0.0) {
        return Err(ModelError::Domain(format!(
            "grid center must be positive, got {center}"
        )));
    }
    if size == 0 {
        return Err(ModelError::Domain("grid needs at least one point".into()));
    }
    if size == 1 {
        return Ok(vec![center]);
    }
    if !(radius_fraction > 0.0 && radius_fraction < 1.0) {
        return Err(ModelError::Domain(format!(
            "grid radius fraction must lie in (0, 1), got {radius_fraction}"
        )));
    }
    let lo = center * (1.0 - radius_fraction);
    let hi = center * (1.0 + radius_fraction);
    let step = (hi - lo) / (size - 1) as f64;
    Ok((0..size)
        .map(|i| if i + 1 == size { hi } else { lo + i as f64 * step })
        .collect())
}

/// Transition matrices averaged over a branch-length prior, for each grid
/// value of the prior mean and each rate category:
/// `P[g][r] = (1/K) sum_i exp(Q * xi_r * d_i)` with `d_i` drawn from the
/// regime's distribution at mean `means[g]`.
///
/// Both regimes are scale families, so the draws at grid mean `m` are
/// `m * u_i` for one shared set of unit-mean draws `u_i` per regime. The
/// same draws serve every rate category and every grid point, which keeps
/// the grid smooth in the mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTransitionGrid {
    regime: BranchRegime,
    means: Vec<f64>,
    n_categories: usize,
    mc_samples: usize,
    matrices: Vec<Mat4>,
    std_errors: Vec<Mat4>,
}

impl MarginalTransitionGrid {
    pub fn build(
        model: &RateMatrix,
        rates: &DiscreteGamma,
        spec: &GridSpec,
    ) -> Result<Self, ModelError> {
        let means = grid_means(spec.center_mean, spec.radius_fraction, spec.grid_size)?;
        if spec.mc_samples == 0 {
            return Err(ModelError::Domain("at least one Monte Carlo draw is required".into()));
        }
        let unit_draws = unit_draws(spec)?;
        let scalers = rates.scalers();
        let cells: Vec<(Mat4, Mat4)> = means
            .par_iter()
            .flat_map_iter(|&mean| {
                scalers
                    .iter()
                    .map(move |&xi| (mean, xi))
                    .collect::<Vec<_>>()
            })
            .map(|(mean, xi)| average_exponential(model, &unit_draws, mean * xi))
            .collect();
        let (matrices, std_errors) = cells.into_iter().unzip();
        Ok(MarginalTransitionGrid {
            regime: spec.regime,
            means,
            n_categories: scalers.len(),
            mc_samples: spec.mc_samples,
            matrices,
            std_errors,
        })
    }

    pub fn regime(&self) -> BranchRegime {
        self.regime
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn matrix(&self, grid_index: usize, category: usize) -> &Mat4 {
        &self.matrices[grid_index * self.n_categories + category]
    }

    /// Monte Carlo standard error of each entry of [`Self::matrix`].
    pub fn std_error(&self, grid_index: usize, category: usize) -> &Mat4 {
        &self.std_errors[grid_index * self.n_categories + category]
    }

    /// Serializes the grid behind a magic tag and a caller-supplied
    /// fingerprint of the configuration that produced it.
    pub fn to_bytes(&self, fingerprint: u64) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&fingerprint.to_le_bytes());
        out.push(self.regime.code() as u8);
        out.extend_from_slice(&(self.means.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_categories as u64).to_le_bytes());
        out.extend_from_slice(&(self.mc_samples as u64).to_le_bytes());
        let values = self
            .means
            .iter()
            .copied()
            .chain(self.matrices.iter().flatten().flatten().copied())
            .chain(self.std_errors.iter().flatten().flatten().copied());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Reads a grid written by [`Self::to_bytes`]. Returns `None` when the
    /// data is malformed or was produced under a different fingerprint.
    pub fn from_bytes(bytes: &[u8], fingerprint: u64) -> Option<Self> {
        let mut reader = ByteReader { bytes, pos: 0 };
        if reader.take(GRID_MAGIC.len())? != GRID_MAGIC || reader.u64()? != fingerprint {
            return None;
        }
        let regime = match reader.take(1)?[0] {
            0 => BranchRegime::Within,
            1 => BranchRegime::Between,
            _ => return None,
        };
        let size = reader.u64()? as usize;
        let n_categories = reader.u64()? as usize;
        let mc_samples = reader.u64()? as usize;
        let means = (0..size).map(|_| reader.f64()).collect::<Option<Vec<_>>>()?;
        let mut read_matrices = || {
            (0..size * n_categories)
                .map(|_| {
                    let mut m = [[0.0; STATES]; STATES];
                    for v in m.iter_mut().flatten() {
                        *v = reader.f64()?;
                    }
                    Some(m)
                })
                .collect::<Option<Vec<_>>>()
        };
        let matrices = read_matrices()?;
        let std_errors = read_matrices()?;
        (reader.pos == bytes.len()).then_some(MarginalTransitionGrid {
            regime,
            means,
            n_categories,
            mc_samples,
            matrices,
            std_errors,
        })
    }
}

const GRID_MAGIC: &[u8; 8] = b"PCGRID01";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let slice = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(slice)
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Unit-mean draws of the regime's branch-length distribution.
fn unit_draws(spec: &GridSpec) -> Result<Vec<f64>, ModelError> {
    let mut rng = rng::stream(spec.seed, rng::GRID_STREAM + spec.regime.code());
    match spec.regime {
        BranchRegime::Within => Ok((0..spec.mc_samples)
            .map(|_| Exp1.sample(&mut rng))
            .collect()),
        BranchRegime::Between => {
            let cv = spec.coefficient_of_variation;
            if !(cv.is_finite() && cv > 0.0) {
                return Err(ModelError::Domain(format!(
                    "coefficient of variation must be positive, got {cv}"
                )));
            }
            // Log-normal with mean 1 and sd cv.
            let sigma2 = (1.0 + cv * cv).ln();
            let sigma = sigma2.sqrt();
            Ok((0..spec.mc_samples)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (sigma * z - 0.5 * sigma2).exp()
                })
                .collect())
        }
    }
}

/// Mean and per-entry standard error of `exp(Q * scale * u_i)` over draws.
fn average_exponential(model: &RateMatrix, unit_draws: &[f64], scale: f64) -> (Mat4, Mat4) {
    let lambda = model.eigenvalues();
    // Deviations are taken from the value at the mean branch length so the
    // second moments do not cancel catastrophically.
    let reference = lambda.map(|l| (l * scale).exp());
    let mut sum = [0.0; STATES];
    let mut cross = [[0.0; STATES]; STATES];
    for &u in unit_draws {
        let d: [f64; STATES] = std::array::from_fn(|k| (lambda[k] * scale * u).exp() - reference[k]);
        for k in 0..STATES {
            sum[k] += d[k];
            for l in k..STATES {
                cross[k][l] += d[k] * d[l];
            }
        }
    }
    let n = unit_draws.len() as f64;
    let mean_exp: [f64; STATES] = std::array::from_fn(|k| reference[k] + sum[k] / n);
    let mean = model.combine(&mean_exp);

    let mut cov = [[0.0; STATES]; STATES];
    if unit_draws.len() > 1 {
        for k in 0..STATES {
            for l in k..STATES {
                let c = (cross[k][l] - sum[k] * sum[l] / n) / (n - 1.0);
                cov[k][l] = c;
                cov[l][k] = c;
            }
        }
    }
    let std_error = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let w = model.entry_weights(a, b);
            let mut var = 0.0;
            for k in 0..STATES {
                for l in 0..STATES {
                    var += w[k] * w[l] * cov[k][l];
                }
            }
            (var.max(0.0) / n).sqrt()
        })
    });
    (mean, std_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substmodel::{identity, remap_atcg_matrix, remap_atcg_vector};

    fn model() -> RateMatrix {
        let q = [
            [-0.83708096, 0.04319486, 0.12127074, 0.67261536],
            [0.07657272, -0.82554421, 0.66140131, 0.08757018],
            [0.27820934, 0.85593111, -1.18569748, 0.05155703],
            [1.19236359, 0.08757018, 0.03983952, -1.31977330],
        ];
        RateMatrix::new(
            remap_atcg_matrix(&q),
            remap_atcg_vector(&[0.39, 0.22, 0.17, 0.22]),
        )
        .unwrap()
    }

    fn spec(regime: BranchRegime, center: f64, k: usize, seed: u64) -> GridSpec {
        GridSpec {
            mc_samples: k,
            ..GridSpec::new(regime, center, seed)
        }
    }

    #[test]
    fn grid_means_span_the_radius() {
        let means = grid_means(0.008, 0.08, 20).unwrap();
        assert_eq!(means.len(), 20);
        assert!((means[0] - 0.00736).abs() < 1e-15);
        assert!((means[19] - 0.00864).abs() < 1e-15);
        let step = means[1] - means[0];
        assert!(means.windows(2).all(|w| (w[1] - w[0] - step).abs() < 1e-15));
    }

    #[test]
    fn non_positive_center_is_a_domain_error() {
        let m = model();
        let g = DiscreteGamma::new(2, 0.5).unwrap();
        assert!(MarginalTransitionGrid::build(&m, &g, &spec(BranchRegime::Within, 0.0, 10, 1)).is_err());
        assert!(MarginalTransitionGrid::build(&m, &g, &spec(BranchRegime::Within, -1.0, 10, 1)).is_err());
    }

    #[test]
    fn vanishing_mean_gives_identity() {
        let m = model();
        let g = DiscreteGamma::new(3, 0.7589).unwrap();
        for regime in [BranchRegime::Within, BranchRegime::Between] {
            let grid = MarginalTransitionGrid::build(&m, &g, &spec(regime, 1e-9, 1000, 3)).unwrap();
            for gi in 0..grid.len() {
                for r in 0..3 {
                    let p = grid.matrix(gi, r);
                    let id = identity();
                    for i in 0..4 {
                        for j in 0..4 {
                            assert!((p[i][j] - id[i][j]).abs() < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn matrices_are_row_stochastic() {
        let m = model();
        let g = DiscreteGamma::new(5, 0.7589).unwrap();
        for regime in [BranchRegime::Within, BranchRegime::Between] {
            let grid = MarginalTransitionGrid::build(&m, &g, &spec(regime, 0.05, 2000, 5)).unwrap();
            for gi in 0..grid.len() {
                for r in 0..5 {
                    for row in grid.matrix(gi, r) {
                        assert!(row.iter().all(|&v| v >= 0.0));
                        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn grid_is_seeded() {
        let m = model();
        let g = DiscreteGamma::new(2, 0.7589).unwrap();
        let s = spec(BranchRegime::Between, 0.01, 500, 17);
        assert_eq!(
            MarginalTransitionGrid::build(&m, &g, &s).unwrap(),
            MarginalTransitionGrid::build(&m, &g, &s).unwrap()
        );
    }

    #[test]
    fn diagonals_decrease_with_the_mean() {
        let m = model();
        let g = DiscreteGamma::new(3, 0.7589).unwrap();
        for (regime, center) in [(BranchRegime::Within, 0.003), (BranchRegime::Between, 0.008)] {
            let grid = MarginalTransitionGrid::build(&m, &g, &spec(regime, center, 20_000, 8)).unwrap();
            for r in 0..3 {
                for gi in 1..grid.len() {
                    for s in 0..4 {
                        assert!(grid.matrix(gi, r)[s][s] < grid.matrix(gi - 1, r)[s][s]);
                    }
                }
            }
        }
    }

    #[test]
    fn spread_shrinks_by_root_two_when_samples_double() {
        // The estimator is a sample mean: doubling K divides the spread of
        // replicate estimates by sqrt(2).
        let m = model();
        let g = DiscreteGamma::new(1, 1.0).unwrap();
        let spread = |k: usize| {
            let values: Vec<f64> = (0..400)
                .map(|seed| {
                    let s = GridSpec { grid_size: 1, ..spec(BranchRegime::Within, 0.05, k, seed) };
                    MarginalTransitionGrid::build(&m, &g, &s).unwrap().matrix(0, 0)[0][0]
                })
                .collect();
            let mean = values.iter().sum::<f64>() / 400.0;
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 399.0).sqrt()
        };
        // Each spread has a relative error near 1/sqrt(2 * 399), so the
        // ratio is within about 5% of sqrt(2); the bounds are ~3 sigma.
        let ratio = spread(2000) / spread(4000);
        assert!((1.2..=1.65).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn byte_round_trip_checks_fingerprint() {
        let m = model();
        let g = DiscreteGamma::new(2, 0.7589).unwrap();
        let grid = MarginalTransitionGrid::build(&m, &g, &spec(BranchRegime::Within, 0.003, 100, 2)).unwrap();
        let bytes = grid.to_bytes(77);
        assert_eq!(MarginalTransitionGrid::from_bytes(&bytes, 77), Some(grid));
        assert_eq!(MarginalTransitionGrid::from_bytes(&bytes, 78), None);
        assert_eq!(MarginalTransitionGrid::from_bytes(&bytes[..bytes.len() - 1], 77), None);
    }
}
