//! Dense linear algebra and optimization kernel.
//!
//! Everything here is a pure function of its inputs. Matrices are
//! `nalgebra` dynamic matrices; the problem sizes in this crate never exceed
//! a few dozen rows, so no sparse storage or blocking is attempted.

mod expm;
mod jacobian;
mod lp;
mod ode;
mod qp;
mod riccati;
mod roots;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use expm::{discretize_zoh, expm};
pub use jacobian::jacobian_fd;
pub use lp::{feasible_point, lp_feasible, lp_maximize, ChebyshevBall, LpOutcome};
pub use ode::rk4_step;
pub use qp::{qp_solve, qp_solve_with, Qp, QpSolution};
pub use riccati::{dare_residual, solve_dare, solve_dare_with};
pub use roots::solve_nonlinear;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical tolerances shared by every solver in the crate.
///
/// Configuration files may override any subset of these fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Stopping threshold on successive Riccati iterates (max-abs).
    pub dare_step: f64,
    pub dare_max_iter: usize,
    /// Stationarity residual accepted from the active-set QP.
    pub qp_kkt: f64,
    /// Multipliers above `-qp_multiplier` count as nonnegative.
    pub qp_multiplier: f64,
    pub qp_max_iter: usize,
    /// Minimum Chebyshev radius for a critical region to be kept.
    pub region_radius: f64,
    /// Slack allowed when testing region membership.
    pub region_membership: f64,
    /// Slack used when deciding that a region constraint is redundant.
    pub redundancy: f64,
    /// Smallest admissible eigenvalue of a QP Hessian.
    pub min_hessian_eig: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            dare_step: 1e-12,
            dare_max_iter: 100_000,
            qp_kkt: 1e-8,
            qp_multiplier: 1e-9,
            qp_max_iter: 500,
            region_radius: 1e-7,
            region_membership: 1e-9,
            redundancy: 1e-9,
            min_hessian_eig: 1e-10,
        }
    }
}

/// Returns the index of the first non-finite entry, if any.
pub fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

pub(crate) fn check_finite(v: &[f64], context: &'static str) -> crate::Result<()> {
    match first_non_finite(v) {
        Some(index) => Err(crate::Error::NonFinite { context, index }),
        None => Ok(()),
    }
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Build a matrix from row vectors; used by configuration loaders and tests.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> crate::Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(crate::Error::dim("ragged matrix rows"));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Inverse of the rows-conversion above.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serde adapters storing matrices as row lists and vectors as plain lists.
pub mod serde_rows {
    pub mod matrix {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        use crate::numerics::{matrix_from_rows, matrix_to_rows, Matrix};

        pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
            matrix_to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            matrix_from_rows(&rows).map_err(serde::de::Error::custom)
        }
    }

    pub mod vector {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        use crate::numerics::Vector;

        pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
            Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
        }
    }
}

/// 64-bit FNV-1a, used for stable content fingerprints.
#[derive(Debug, Clone, Copy)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fingerprint {
    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        for &b in data {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self
    }

    pub fn f64s<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) -> &mut Self {
        for v in values {
            self.bytes(&v.to_bits().to_le_bytes());
        }
        self
    }

    pub fn usize(&mut self, v: usize) -> &mut Self {
        self.bytes(&(v as u64).to_le_bytes())
    }

    pub fn matrix(&mut self, m: &Matrix) -> &mut Self {
        self.usize(m.nrows()).usize(m.ncols()).f64s(m.as_slice())
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}
