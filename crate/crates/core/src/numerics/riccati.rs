use super::{max_abs, symmetrize, Matrix, Tolerances};
use crate::{Error, Result};

/// One application of the undiscounted Riccati map
/// `Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let at = a.transpose();
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let bt_pa = pb.transpose() * a;
    let gain = s
        .lu()
        .solve(&bt_pa)
        .ok_or_else(|| Error::Domain("R + BᵀPB is singular".into()))?;
    Ok(symmetrize(&(q + &at * p * a - (&at * pb) * gain)))
}

fn check_dims(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::dim(format!(
            "DARE: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// Discounted DARE `P = Q + γAᵀPA − γ²AᵀPB(R + γBᵀPB)⁻¹BᵀPA`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, gamma: f64) -> Result<Matrix> {
    solve_dare_with(a, b, q, r, gamma, &Tolerances::default())
}

/// [`solve_dare`] with explicit tolerances.
///
/// The discount folds into the system matrices (`√γ·A`, `√γ·B`) and the
/// undiscounted recursion is iterated from `P₀ = Q`.
pub fn solve_dare_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    gamma: f64,
    tol: &Tolerances,
) -> Result<Matrix> {
    check_dims(a, b, q, r)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("discount must lie in [0, 1], got {gamma}")));
    }
    let root = gamma.sqrt();
    let (sa, sb) = (a * root, b * root);
    let q = symmetrize(q);
    let r = symmetrize(r);

    let mut p = q.clone();
    let mut step = f64::INFINITY;
    for _ in 0..tol.dare_max_iter {
        let next = riccati_map(&sa, &sb, &q, &r, &p)?;
        step = max_abs(&(&next - &p));
        p = next;
        if !step.is_finite() {
            break;
        }
        // Absolute threshold, relaxed only once entries exceed unity so the
        // test stays meaningful in floating point.
        if step < tol.dare_step * max_abs(&p).max(1.0) {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence {
        what: "Riccati iteration",
        iterations: tol.dare_max_iter,
        residual: step,
    })
}

/// Max-abs residual of the discounted Riccati fixed point at `p`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, gamma: f64, p: &Matrix) -> Result<f64> {
    check_dims(a, b, q, r)?;
    let root = gamma.sqrt();
    let mapped = riccati_map(&(a * root), &(b * root), q, r, p)?;
    Ok(max_abs(&(mapped - p)))
}
