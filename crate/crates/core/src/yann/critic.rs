use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ResidualSpec;
use crate::nets::{Gradients, Mlp, MlpCheckpoint};
use crate::numerics::serde_rows::matrix;
use crate::numerics::{symmetrize, Matrix, Vector};
use crate::{Error, Result};

/// `M = [[Q + γAᵀPA, γAᵀPB], [γBᵀPA, R + γBᵀPB]]`, so that
/// `[z; v]ᵀ M [z; v] = zᵀQz + vᵀRv + γ (Az + Bv)ᵀ P (Az + Bv)`.
pub fn critic_matrix(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix, gamma: f64) -> Result<Matrix> {
    let (n, m) = (a.nrows(), b.ncols());
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) || p.shape() != (n, n) {
        return Err(Error::dim("critic matrix blocks have inconsistent shapes"));
    }
    let mut mm = Matrix::zeros(n + m, n + m);
    let pa = p * a;
    let pb = p * b;
    mm.view_mut((0, 0), (n, n)).copy_from(&(q + a.transpose() * &pa * gamma));
    mm.view_mut((0, n), (n, m)).copy_from(&(a.transpose() * &pb * gamma));
    mm.view_mut((n, 0), (m, n)).copy_from(&(b.transpose() * &pa * gamma));
    mm.view_mut((n, n), (m, m)).copy_from(&(r + b.transpose() * &pb * gamma));
    Ok(symmetrize(&mm))
}

/// `Q(z, v) = [z; v]ᵀ M [z; v] + residual([z; v])`.
#[derive(Debug, Clone, PartialEq)]
pub struct YannCritic {
    pub m: Matrix,
    pub residual: Mlp,
    pub n_states: usize,
    pub n_inputs: usize,
}

pub fn build_yann_critic(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    p: &Matrix,
    gamma: f64,
    spec: &ResidualSpec,
) -> Result<YannCritic> {
    let m = critic_matrix(a, b, q, r, p, gamma)?;
    let (n_states, n_inputs) = (a.nrows(), b.ncols());
    let residual = Mlp::new(spec.mlp_spec(n_states + n_inputs, 1), spec.seed);
    Ok(YannCritic { m, residual, n_states, n_inputs })
}

impl YannCritic {
    fn stack(&self, z: &Vector, v: &Vector) -> Vector {
        let mut s = Vector::zeros(self.n_states + self.n_inputs);
        s.rows_mut(0, self.n_states).copy_from(z);
        s.rows_mut(self.n_states, self.n_inputs).copy_from(v);
        s
    }

    pub fn quadratic(&self, z: &Vector, v: &Vector) -> f64 {
        let s = self.stack(z, v);
        s.dot(&(&self.m * &s))
    }

    pub fn forward(&self, z: &Vector, v: &Vector) -> f64 {
        let s = self.stack(z, v);
        s.dot(&(&self.m * &s)) + self.residual.forward(&s)[0]
    }

    /// Residual-parameter gradient and `∂Q/∂v`, both scaled by `weight`.
    pub fn backward(&self, z: &Vector, v: &Vector, weight: f64) -> (Gradients, Vector) {
        let s = self.stack(z, v);
        let (g, gs) = self.residual.backward(&s, &Vector::from_element(1, weight));
        let quad = (&self.m * &s) * (2.0 * weight);
        let dv = quad.rows(self.n_states, self.n_inputs) + gs.rows(self.n_states, self.n_inputs);
        (g, dv)
    }

    /// `∂Q/∂v` only.
    pub fn action_gradient(&self, z: &Vector, v: &Vector) -> Vector {
        self.backward(z, v, 1.0).1
    }

    /// Minimizer of the quadratic part over unconstrained `v`.
    pub fn quadratic_argmin(&self, z: &Vector) -> Result<Vector> {
        let (n, m) = (self.n_states, self.n_inputs);
        let muu = self.m.view((n, n), (m, m)).into_owned();
        let mux = self.m.view((n, 0), (m, n)).into_owned();
        muu.lu().solve(&(-(mux * z))).ok_or_else(|| Error::dim("singular input block of the critic"))
    }

    pub fn checkpoint(&self) -> YannCriticCheckpoint {
        YannCriticCheckpoint { m: self.m.clone(), residual: self.residual.checkpoint(), n_states: self.n_states, n_inputs: self.n_inputs }
    }

    pub fn from_checkpoint(c: YannCriticCheckpoint) -> Result<Self> {
        Ok(Self { residual: Mlp::from_checkpoint(&c.residual)?, m: c.m, n_states: c.n_states, n_inputs: c.n_inputs })
    }
}

/// Self-contained critic file: quadratic matrix and residual network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YannCriticCheckpoint {
    #[serde(with = "matrix")]
    pub m: Matrix,
    pub residual: MlpCheckpoint,
    pub n_states: usize,
    pub n_inputs: usize,
}

impl YannCriticCheckpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
    }
}
