use super::{check_finite, Matrix, Vector};
use crate::{Error, Result};

/// Damped Gauss-Newton for `r(z) = 0` with a forward-difference Jacobian.
///
/// Handles square and overdetermined systems; the step solves the normal
/// equations with a small Levenberg term.
pub fn solve_nonlinear<F>(residual: F, z0: &Vector, tol: f64, max_iter: usize) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut z = z0.clone();
    let mut r = residual(&z)?;
    check_finite(r.as_slice(), "root residual")?;
    let mut mu = 1e-12;
    for _ in 0..max_iter {
        if r.amax() < tol {
            return Ok(z);
        }
        let mut jac = Matrix::zeros(r.len(), z.len());
        for j in 0..z.len() {
            let h = 1e-7 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            zp[j] += h;
            let rp = residual(&zp)?;
            jac.set_column(j, &((rp - &r) / h));
        }
        let jt = jac.transpose();
        let mut accepted = false;
        for _ in 0..30 {
            let normal = &jt * &jac + Matrix::identity(z.len(), z.len()) * mu;
            let step = normal
                .lu()
                .solve(&(-&jt * &r))
                .ok_or_else(|| Error::Domain("singular Jacobian in root solve".into()))?;
            let trial = &z + step;
            if let Ok(rt) = residual(&trial) {
                if rt.iter().all(|v| v.is_finite()) && rt.norm() < r.norm() {
                    z = trial;
                    r = rt;
                    mu = (mu * 0.1).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() < tol {
        Ok(z)
    } else {
        Err(Error::NoConvergence {
            what: "steady-state root solve",
            iterations: max_iter,
            residual: r.amax(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn square_root_of_two() {
        let z = solve_nonlinear(|z| Ok(dvector![z[0] * z[0] - 2.0]), &dvector![1.0], 1e-14, 50).unwrap();
        assert!((z[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn consistent_overdetermined_system() {
        let f = |z: &Vector| Ok(dvector![z[0] + z[1] - 3.0, z[0] - z[1] + 1.0, 2.0 * z[0] - 2.0]);
        let z = solve_nonlinear(f, &dvector![0.0, 0.0], 1e-12, 50).unwrap();
        assert!((z - dvector![1.0, 2.0]).amax() < 1e-10);
    }
}
