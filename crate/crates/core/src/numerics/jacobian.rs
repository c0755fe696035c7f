use super::{check_finite, Matrix, Vector};
use crate::{Error, Result};

/// Central-difference Jacobians `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
///
/// Coordinate `i` is perturbed by `eps * max(1, |v_i|)`.
pub fn jacobian_fd<F>(f: F, x: &Vector, u: &Vector, eps: f64) -> Result<(Matrix, Matrix)>
where
    F: Fn(&Vector, &Vector) -> Result<Vector>,
{
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("perturbation must be positive, got {eps}")));
    }
    let f0 = f(x, u)?;
    check_finite(f0.as_slice(), "jacobian base point")?;
    let n_out = f0.len();

    let mut jx = Matrix::zeros(n_out, x.len());
    for i in 0..x.len() {
        let h = eps * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let d = (f(&xp, u)? - f(&xm, u)?) / (xp[i] - xm[i]);
        check_finite(d.as_slice(), "jacobian column")?;
        jx.set_column(i, &d);
    }

    let mut ju = Matrix::zeros(n_out, u.len());
    for j in 0..u.len() {
        let h = eps * u[j].abs().max(1.0);
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        let d = (f(x, &up)? - f(x, &um)?) / (up[j] - um[j]);
        check_finite(d.as_slice(), "jacobian column")?;
        ju.set_column(j, &d);
    }
    Ok((jx, ju))
}
