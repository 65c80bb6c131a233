use nalgebra::{Matrix4, SymmetricEigen};

use super::ModelError;
use crate::seqdata::STATES;

/// Dense 4x4 matrix, row-major, states in A, C, G, T order.
pub type Mat4 = [[f64; STATES]; STATES];

pub fn identity() -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
}

/// Inputs are accepted when their rounding error stays below this bound;
/// they are then projected onto an exactly reversible, exactly normalized
/// matrix. Published matrices are printed with 8 decimals.
const INPUT_TOLERANCE: f64 = 1e-6;
/// Maximum |pi_i q_ij - pi_j q_ji| and |(pi Q)_j| accepted on input. Some
/// published estimates carry only seven significant digits.
const BALANCE_TOLERANCE: f64 = 1e-6;

/// Position of each canonical state (A, C, G, T) in the A, T, C, G order.
const FROM_ATCG: [usize; STATES] = [0, 2, 3, 1];

/// Reorders a matrix given with states in A, T, C, G order.
pub fn remap_atcg_matrix(q: &Mat4) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| q[FROM_ATCG[i]][FROM_ATCG[j]]))
}

/// Reorders a vector given with states in A, T, C, G order.
pub fn remap_atcg_vector(v: &[f64; STATES]) -> [f64; STATES] {
    std::array::from_fn(|i| v[FROM_ATCG[i]])
}

/// Reversible (GTR) rate matrix with its stationary distribution.
///
/// Construction validates the input and stores the spectral decomposition
/// of the symmetrized matrix `diag(pi)^1/2 Q diag(pi)^-1/2`, so every
/// `exp(Q t)` costs four scalar exponentials.
#[derive(Clone, Debug)]
pub struct RateMatrix {
    q: Mat4,
    pi: [f64; STATES],
    eigenvalues: [f64; STATES],
    // exp(Qt)[a][b] = sum_k weights[a][b][k] * exp(eigenvalues[k] * t)
    weights: [[[f64; STATES]; STATES]; STATES],
}

impl RateMatrix {
    /// Validates `q` and `pi` (both in A, C, G, T order).
    ///
    /// Checks, in order: finiteness, non-negative off-diagonals, zero row
    /// sums, positive normalized frequencies, stationarity and detailed
    /// balance. Values within rounding of a valid GTR matrix are projected
    /// onto one: `pi` is renormalized, off-diagonals are symmetrized in the
    /// flux `pi_i q_ij` and the diagonal is recomputed.
    pub fn new(q: Mat4, pi: [f64; STATES]) -> Result<Self, ModelError> {
        if q.iter().flatten().chain(pi.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::validation("finite", "non-finite entry"));
        }
        for (i, row) in q.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(ModelError::validation(
                        "off-diagonal",
                        format!("q[{i}][{j}] = {v} is negative"),
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > INPUT_TOLERANCE {
                return Err(ModelError::validation(
                    "row sum",
                    format!("row {i} sums to {sum}"),
                ));
            }
        }
        if let Some(p) = pi.iter().find(|&&p| p <= 0.0) {
            return Err(ModelError::validation(
                "frequencies",
                format!("non-positive frequency {p}"),
            ));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > INPUT_TOLERANCE {
            return Err(ModelError::validation(
                "frequencies",
                format!("frequencies sum to {total}"),
            ));
        }
        let pi = pi.map(|p| p / total);

        for j in 0..STATES {
            let flow: f64 = (0..STATES).map(|i| pi[i] * q[i][j]).sum();
            if flow.abs() > BALANCE_TOLERANCE {
                return Err(ModelError::validation(
                    "stationarity",
                    format!("(pi Q)[{j}] = {flow:e}"),
                ));
            }
        }
        for i in 0..STATES {
            for j in i + 1..STATES {
                let gap = pi[i] * q[i][j] - pi[j] * q[j][i];
                if gap.abs() > BALANCE_TOLERANCE {
                    return Err(ModelError::validation(
                        "detailed balance",
                        format!("pi[{i}] q[{i}][{j}] - pi[{j}] q[{j}][{i}] = {gap:e}"),
                    ));
                }
            }
        }

        let mut flux = [[0.0; STATES]; STATES];
        for i in 0..STATES {
            for j in 0..STATES {
                if i != j {
                    flux[i][j] = 0.5 * (pi[i] * q[i][j] + pi[j] * q[j][i]);
                }
            }
        }
        let mut q = [[0.0; STATES]; STATES];
        for i in 0..STATES {
            for j in 0..STATES {
                if i != j {
                    q[i][j] = flux[i][j] / pi[i];
                }
            }
            q[i][i] = -(0..STATES).filter(|&j| j != i).map(|j| q[i][j]).sum::<f64>();
        }

        let symmetric = Matrix4::from_fn(|i, j| {
            if i == j {
                q[i][i]
            } else {
                flux[i][j] / (pi[i] * pi[j]).sqrt()
            }
        });
        let eigen = SymmetricEigen::new(symmetric);
        let eigenvalues = std::array::from_fn(|k| eigen.eigenvalues[k]);
        let v = eigen.eigenvectors;
        let weights = std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                let ratio = (pi[b] / pi[a]).sqrt();
                std::array::from_fn(|k| ratio * v[(a, k)] * v[(b, k)])
            })
        });
        Ok(RateMatrix {
            q,
            pi,
            eigenvalues,
            weights,
        })
    }

    pub fn q(&self) -> &Mat4 {
        &self.q
    }

    pub fn frequencies(&self) -> &[f64; STATES] {
        &self.pi
    }

    pub fn eigenvalues(&self) -> &[f64; STATES] {
        &self.eigenvalues
    }

    /// Expected number of substitutions per unit time, `-sum_i pi_i q_ii`.
    pub fn mean_rate(&self) -> f64 {
        -(0..STATES).map(|i| self.pi[i] * self.q[i][i]).sum::<f64>()
    }

    /// `exp(Q t)` for `t >= 0`.
    pub fn exp(&self, t: f64) -> Result<Mat4, ModelError> {
        if !t.is_finite() || t < 0.0 {
            return Err(ModelError::Domain(format!(
                "branch length must be finite and non-negative, got {t}"
            )));
        }
        Ok(self.exp_unchecked(t))
    }

    pub(crate) fn exp_unchecked(&self, t: f64) -> Mat4 {
        if t == 0.0 {
            return identity();
        }
        let e = self.eigenvalues.map(|l| (l * t).exp());
        self.combine(&e)
    }

    pub(crate) fn entry_weights(&self, a: usize, b: usize) -> &[f64; STATES] {
        &self.weights[a][b]
    }

    /// `sum_k weights[a][b][k] * e[k]`, clamped at zero. `e` holds
    /// `exp(lambda_k t)` or an average of such terms.
    pub(crate) fn combine(&self, e: &[f64; STATES]) -> Mat4 {
        std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                let w = &self.weights[a][b];
                (w[0] * e[0] + w[1] * e[1] + w[2] * e[2] + w[3] * e[3]).max(0.0)
            })
        })
    }
}

/// Empirical HIV-1 *pol* GTR estimate, states in A, T, C, G order.
pub const HIV_REFERENCE_Q_ATCG: Mat4 = [
    [-0.83708096, 0.04319486, 0.12127074, 0.67261536],
    [0.07657272, -0.82554421, 0.66140131, 0.08757018],
    [0.27820934, 0.85593111, -1.18569748, 0.05155703],
    [1.19236359, 0.08757018, 0.03983952, -1.31977330],
];
/// Stationary frequencies matching [`HIV_REFERENCE_Q_ATCG`], A, T, C, G order.
pub const HIV_REFERENCE_PI_ATCG: [f64; STATES] = [0.39, 0.22, 0.17, 0.22];

impl RateMatrix {
    /// The model built from [`HIV_REFERENCE_Q_ATCG`] and
    /// [`HIV_REFERENCE_PI_ATCG`].
    pub fn hiv_reference() -> RateMatrix {
        RateMatrix::new(
            remap_atcg_matrix(&HIV_REFERENCE_Q_ATCG),
            remap_atcg_vector(&HIV_REFERENCE_PI_ATCG),
        )
        .expect("reference model is valid")
    }
}
