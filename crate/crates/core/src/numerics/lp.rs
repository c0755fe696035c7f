use super::{Matrix, Vector};

/// Largest inscribed ball of `{x : Gx ≤ w}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevBall {
    pub center: Vector,
    pub radius: f64,
}

/// Result of a dense linear program.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vector, value: f64 },
    Unbounded,
    Infeasible,
}

// Radius cap keeps the Chebyshev LP bounded for unbounded polyhedra.
const RADIUS_CAP: f64 = 1e6;
const PIVOT_TOL: f64 = 1e-11;

/// Dense tableau for `max cᵀy  s.t.  Ay = b, y ≥ 0` with `b ≥ 0`.
struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        self.rhs[row] /= p;
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row];
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                self.rhs[i] -= factor * pivot_rhs;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs of `max cᵀy` for the current basis.
    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        (0..allowed)
            .map(|j| {
                let basic: f64 = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(i, &bj)| cost[bj] * self.rows[i][j])
                    .sum();
                cost[j] - basic
            })
            .collect()
    }

    /// Primal simplex with Bland's rule over columns `< allowed`.
    /// Returns `false` when the objective is unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        loop {
            let reduced = self.reduced_costs(cost, allowed);
            let Some(col) = (0..allowed).find(|&j| reduced[j] > PIVOT_TOL && !self.basis.contains(&j)) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    }
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return false,
            }
        }
    }
}

/// `max cᵀy  s.t.  A y ≤ b`, where `free[j]` marks unrestricted variables
/// and the rest are nonnegative.
fn simplex(c: &[f64], a: &Matrix, b: &Vector, free: &[bool]) -> LpOutcome {
    let (m, n) = a.shape();
    // Column layout: [y⁺ (n) | y⁻ for free vars | slacks (m) | artificials].
    let free_idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
    let n_struct = n + free_idx.len();
    let neg_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_cols = n_struct + m + neg_rows.len();

    let mut rows = vec![vec![0.0; n_cols]; m];
    let mut rhs = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[i][j] = sign * a[(i, j)];
        }
        for (k, &j) in free_idx.iter().enumerate() {
            rows[i][n + k] = -sign * a[(i, j)];
        }
        rows[i][n_struct + i] = sign;
        rhs[i] = sign * b[i];
        if sign < 0.0 {
            let col = n_struct + m + art;
            rows[i][col] = 1.0;
            basis[i] = col;
            art += 1;
        } else {
            basis[i] = n_struct + i;
        }
    }
    let mut t = Tableau { rows, rhs, basis };

    if !neg_rows.is_empty() {
        let mut phase1 = vec![0.0; n_cols];
        for v in phase1.iter_mut().skip(n_struct + m) {
            *v = -1.0;
        }
        t.optimize(&phase1, n_cols);
        let infeasibility: f64 = t
            .basis
            .iter()
            .zip(&t.rhs)
            .filter(|(&bj, _)| bj >= n_struct + m)
            .map(|(_, &r)| r)
            .sum();
        if infeasibility > 1e-9 * (1.0 + b.amax()) {
            return LpOutcome::Infeasible;
        }
        // Drive zero-level artificials out of the basis.
        for i in 0..m {
            if t.basis[i] >= n_struct + m {
                if let Some(col) = (0..n_struct + m).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    t.pivot(i, col);
                }
            }
        }
    }

    let mut cost = vec![0.0; n_cols];
    cost[..n].copy_from_slice(&c[..n]);
    for (k, &j) in free_idx.iter().enumerate() {
        cost[n + k] = -c[j];
    }
    if !t.optimize(&cost, n_struct + m) {
        return LpOutcome::Unbounded;
    }

    let mut y = vec![0.0; n_cols];
    for (i, &bj) in t.basis.iter().enumerate() {
        y[bj] = t.rhs[i];
    }
    let mut x = Vector::from_iterator(n, y[..n].iter().copied());
    for (k, &j) in free_idx.iter().enumerate() {
        x[j] -= y[n + k];
    }
    let value = (0..n).map(|j| c[j] * x[j]).sum();
    LpOutcome::Optimal { x, value }
}

/// Chebyshev-center test for `{x : Gx ≤ w}`.
///
/// Returns the center and radius when the polyhedron contains a ball of
/// radius greater than `strict_tol`, otherwise `None`.
pub fn lp_feasible(g: &Matrix, w: &Vector, strict_tol: f64) -> Option<ChebyshevBall> {
    assert_eq!(g.nrows(), w.len(), "constraint matrix and offsets disagree");
    let n = g.ncols();
    let mut rows: Vec<usize> = Vec::with_capacity(g.nrows());
    for i in 0..g.nrows() {
        if g.row(i).norm() == 0.0 {
            if w[i] < 0.0 {
                return None;
            }
        } else {
            rows.push(i);
        }
    }
    // Variables [x, r]; rows G x + ‖gᵢ‖ r ≤ wᵢ plus r ≤ cap.
    let mut a = Matrix::zeros(rows.len() + 1, n + 1);
    let mut b = Vector::zeros(rows.len() + 1);
    for (k, &i) in rows.iter().enumerate() {
        let row = g.row(i);
        a.view_mut((k, 0), (1, n)).copy_from(&row);
        a[(k, n)] = row.norm();
        b[k] = w[i];
    }
    a[(rows.len(), n)] = 1.0;
    b[rows.len()] = RADIUS_CAP;
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut free = vec![true; n + 1];
    free[n] = false;
    match simplex(&c, &a, &b, &free) {
        LpOutcome::Optimal { x, .. } if x[n] > strict_tol => Some(ChebyshevBall {
            center: x.rows(0, n).into_owned(),
            radius: x[n],
        }),
        _ => None,
    }
}

/// Maximize `cᵀx` subject to `Gx ≤ w` with `x` free.
pub fn lp_maximize(c: &Vector, g: &Matrix, w: &Vector) -> LpOutcome {
    simplex(c.as_slice(), g, w, &vec![true; g.ncols()])
}

/// Any point of `{x : Gx ≤ w}`, or `None` when the set is empty.
pub fn feasible_point(g: &Matrix, w: &Vector) -> Option<Vector> {
    match lp_maximize(&Vector::zeros(g.ncols()), g, w) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}
