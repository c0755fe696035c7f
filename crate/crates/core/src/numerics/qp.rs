use super::{check_finite, feasible_point, symmetrize, Matrix, Tolerances, Vector};
use crate::{Error, Result};

/// Strictly convex QP `min ½uᵀHu + fᵀu  s.t.  Gu ≤ w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Qp {
    pub h: Matrix,
    pub f: Vector,
    pub g: Matrix,
    pub w: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vector,
    /// Working set at the optimum, ascending.
    pub active_set: Vec<usize>,
    /// One multiplier per constraint row; zero off the active set.
    pub multipliers: Vector,
    pub iterations: usize,
    /// ‖Hu + f + Gᵀλ‖∞ at the returned point.
    pub kkt_residual: f64,
}

impl Qp {
    pub fn new(h: Matrix, f: Vector, g: Matrix, w: Vector) -> Result<Self> {
        let qp = Self { h, f, g, w };
        qp.validate()?;
        Ok(qp)
    }

    pub fn unconstrained(h: Matrix, f: Vector) -> Result<Self> {
        let n = f.len();
        Self::new(h, f, Matrix::zeros(0, n), Vector::zeros(0))
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.w.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.f.len();
        if self.h.shape() != (n, n) || self.g.ncols() != n || self.g.nrows() != self.w.len() {
            return Err(Error::dim(format!(
                "QP: H {:?}, f {}, G {:?}, w {}",
                self.h.shape(),
                n,
                self.g.shape(),
                self.w.len()
            )));
        }
        check_finite(self.h.as_slice(), "QP Hessian")?;
        check_finite(self.f.as_slice(), "QP linear term")?;
        check_finite(self.g.as_slice(), "QP constraints")?;
        check_finite(self.w.as_slice(), "QP offsets")?;
        Ok(())
    }

    /// Objective `½uᵀHu + fᵀu`.
    pub fn objective(&self, u: &Vector) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.f.dot(u)
    }
}

/// Solve with default tolerances.
pub fn qp_solve(qp: &Qp) -> Result<QpSolution> {
    qp_solve_with(qp, &Tolerances::default())
}

/// Solves the equality-constrained subproblem on the working set:
/// `[H G_Wᵀ; G_W 0] [p; λ] = [-g; 0]`.
fn solve_eqp(h: &Matrix, g: &Matrix, working: &[usize], grad: &Vector) -> Result<(Vector, Vector)> {
    let n = h.nrows();
    let k = working.len();
    let mut kkt = Matrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (r, &i) in working.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = g[(i, j)];
            kkt[(j, n + r)] = g[(i, j)];
        }
    }
    let mut rhs = Vector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("singular KKT system in active-set QP".into()))?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

/// Primal active-set method.
///
/// A feasible start comes from the origin when it is feasible and from an
/// LP otherwise. Ties in both the entering (blocking) and leaving
/// constraint choice go to the lowest index.
pub fn qp_solve_with(qp: &Qp, tol: &Tolerances) -> Result<QpSolution> {
    qp.validate()?;
    let h = symmetrize(&qp.h);
    let min_eig = h.clone().symmetric_eigen().eigenvalues.min();
    if qp.n_vars() > 0 && !(min_eig > tol.min_hessian_eig) {
        return Err(Error::Domain(format!("QP Hessian not positive definite (min eig {min_eig:e})")));
    }
    let (g, w, f) = (&qp.g, &qp.w, &qp.f);
    let n_c = qp.n_constraints();

    let mut u = if n_c == 0 || w.iter().all(|&v| v >= 0.0) {
        Vector::zeros(qp.n_vars())
    } else {
        feasible_point(g, w).ok_or(Error::Infeasible)?
    };

    let mut working: Vec<usize> = Vec::new();
    for iteration in 1..=tol.qp_max_iter {
        let grad = &h * &u + f;
        let (p, lambda) = solve_eqp(&h, g, &working, &grad)?;
        let scale = 1.0 + u.amax();
        if p.amax() <= 1e-12 * scale {
            let leaving = working
                .iter()
                .zip(lambda.iter())
                .filter(|(_, &l)| l < -tol.qp_multiplier)
                .map(|(&i, _)| i)
                .min();
            match leaving {
                Some(i) => working.retain(|&j| j != i),
                None => {
                    let mut multipliers = Vector::zeros(n_c);
                    for (&i, &l) in working.iter().zip(lambda.iter()) {
                        multipliers[i] = l;
                    }
                    let stationarity = &h * &u + f + g.transpose() * &multipliers;
                    let mut active_set = working.clone();
                    active_set.sort_unstable();
                    return Ok(QpSolution {
                        kkt_residual: stationarity.amax(),
                        u,
                        active_set,
                        multipliers,
                        iterations: iteration,
                    });
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..n_c {
            if working.contains(&i) {
                continue;
            }
            let gp = g.row(i).dot(&p.transpose());
            if gp > 1e-14 * (1.0 + g.row(i).amax()) {
                let slack = (w[i] - g.row(i).dot(&u.transpose())).max(0.0);
                let step = slack / gp;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        u += &p * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::Cycling(tol.qp_max_iter))
}
