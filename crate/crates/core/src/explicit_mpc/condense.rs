use super::MpcFormulation;
use crate::numerics::{qp_solve_with, symmetrize, Matrix, Qp, Tolerances, Vector};
use crate::{Error, Result};

type RowVector = nalgebra::RowDVector<f64>;

/// Parametric QP `min_U ½UᵀHU + zᵀFU  s.t.  GU ≤ W + Sz`.
///
/// The full objective is `zᵀYz + zᵀFU + ½UᵀHU`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub h: Matrix,
    pub f: Matrix,
    pub y: Matrix,
    pub g: Matrix,
    pub w: Vector,
    pub s: Matrix,
    pub n_states: usize,
    pub n_inputs: usize,
    pub horizon: usize,
    pub tolerances: Tolerances,
}

impl CondensedQp {
    /// The QP instance at parameter `z`.
    pub fn at(&self, z: &Vector) -> Result<Qp> {
        if z.len() != self.n_states {
            return Err(Error::dim(format!("parameter has length {}, expected {}", z.len(), self.n_states)));
        }
        Qp::new(self.h.clone(), self.f.transpose() * z, self.g.clone(), &self.w + &self.s * z)
    }

    /// Full objective at `(z, U)`.
    pub fn objective(&self, z: &Vector, u: &Vector) -> f64 {
        z.dot(&(&self.y * z)) + z.dot(&(&self.f * u)) + 0.5 * u.dot(&(&self.h * u))
    }
}

/// Prediction matrices: stacked `z₁..z_N = Φ z₀ + Γ U`.
pub(crate) fn prediction(a: &Matrix, b: &Matrix, horizon: usize) -> (Matrix, Matrix) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut phi = Matrix::zeros(n * horizon, n);
    let mut gamma = Matrix::zeros(n * horizon, m * horizon);
    let mut power = Matrix::identity(n, n);
    // powers[k] = A^k B
    let mut powers = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        powers.push(&power * b);
        power = a * &power;
    }
    let mut a_t = Matrix::identity(n, n);
    for t in 0..horizon {
        a_t = a * &a_t;
        phi.view_mut((t * n, 0), (n, n)).copy_from(&a_t);
        for j in 0..=t {
            gamma.view_mut((t * n, j * m), (n, m)).copy_from(&powers[t - j]);
        }
    }
    (phi, gamma)
}

/// Eliminates the dynamics of `formulation`.
///
/// Constraint rows are ordered: input bounds stage by stage (upper then
/// lower per channel), then state bounds for stages 1..N-1 (upper then
/// lower), then the terminal set.
pub fn condense(formulation: &MpcFormulation) -> Result<CondensedQp> {
    let (n, m, horizon) = (formulation.n_states(), formulation.n_inputs(), formulation.horizon);
    let sys = &formulation.system;
    let (phi, gam) = prediction(&sys.a, &sys.b, horizon);

    let mut q_bar = Matrix::zeros(n * horizon, n * horizon);
    let mut r_bar = Matrix::zeros(m * horizon, m * horizon);
    let mut discount = 1.0;
    for t in 0..horizon {
        r_bar.view_mut((t * m, t * m), (m, m)).copy_from(&(&formulation.r * discount));
        discount *= formulation.gamma;
        let weight = if t + 1 == horizon { &formulation.p } else { &formulation.q_w };
        q_bar.view_mut((t * n, t * n), (n, n)).copy_from(&(weight * discount));
    }
    let h = symmetrize(&((gam.transpose() * &q_bar * &gam + &r_bar) * 2.0));
    let f = phi.transpose() * &q_bar * &gam * 2.0;
    let y = symmetrize(&(&formulation.q_w + phi.transpose() * &q_bar * &phi));

    let mut g_rows: Vec<RowVector> = Vec::new();
    let mut w_rows: Vec<f64> = Vec::new();
    let mut s_rows: Vec<RowVector> = Vec::new();
    let push = |g: RowVector, w: f64, s: RowVector, g_rows: &mut Vec<RowVector>, w_rows: &mut Vec<f64>, s_rows: &mut Vec<RowVector>| {
        g_rows.push(g);
        w_rows.push(w);
        s_rows.push(s);
    };
    let ubox = &formulation.input_box;
    for t in 0..horizon {
        for j in 0..m {
            let mut e = RowVector::zeros(m * horizon);
            e[t * m + j] = 1.0;
            push(e.clone(), ubox.upper[j], RowVector::zeros(n), &mut g_rows, &mut w_rows, &mut s_rows);
            push(-e, -ubox.lower[j], RowVector::zeros(n), &mut g_rows, &mut w_rows, &mut s_rows);
        }
    }
    if let Some(xbox) = &formulation.state_box {
        for t in 1..horizon {
            let gt = gam.rows((t - 1) * n, n);
            let pt = phi.rows((t - 1) * n, n);
            for i in 0..n {
                push(gt.row(i).into_owned(), xbox.upper[i], -pt.row(i).into_owned(), &mut g_rows, &mut w_rows, &mut s_rows);
                push(-gt.row(i).into_owned(), -xbox.lower[i], pt.row(i).into_owned(), &mut g_rows, &mut w_rows, &mut s_rows);
            }
        }
    }
    if let Some((hf, hv)) = &formulation.terminal_set {
        if hf.ncols() != n || hf.nrows() != hv.len() {
            return Err(Error::dim("terminal set does not match the state dimension"));
        }
        let g_n = hf * gam.rows((horizon - 1) * n, n);
        let s_n = -(hf * phi.rows((horizon - 1) * n, n));
        for i in 0..hf.nrows() {
            push(g_n.row(i).into_owned(), hv[i], s_n.row(i).into_owned(), &mut g_rows, &mut w_rows, &mut s_rows);
        }
    }
    let n_c = g_rows.len();
    let mut g = Matrix::zeros(n_c, m * horizon);
    let mut s = Matrix::zeros(n_c, n);
    for i in 0..n_c {
        g.row_mut(i).copy_from(&g_rows[i]);
        s.row_mut(i).copy_from(&s_rows[i]);
    }
    Ok(CondensedQp {
        h,
        f,
        y,
        g,
        w: Vector::from_vec(w_rows),
        s,
        n_states: n,
        n_inputs: m,
        horizon,
        tolerances: formulation.tolerances,
    })
}

/// Optimal input sequence at `z` by the online active-set QP.
pub fn online_mpc_sequence(cqp: &CondensedQp, z: &Vector) -> Result<Vector> {
    Ok(qp_solve_with(&cqp.at(z)?, &cqp.tolerances)?.u)
}

/// First move of the online MPC at `z`.
pub fn online_mpc(cqp: &CondensedQp, z: &Vector) -> Result<Vector> {
    Ok(online_mpc_sequence(cqp, z)?.rows(0, cqp.n_inputs).into_owned())
}
