use super::{check_finite, Vector};
use crate::{Error, Result};

/// One classic fourth-order Runge-Kutta step of `dx/dt = f(x, u)` with the
/// input held constant over the step.
pub fn rk4_step<F>(f: F, x: &Vector, u: &Vector, dt: f64) -> Result<Vector>
where
    F: Fn(&Vector, &Vector) -> Result<Vector>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let eval = |x: &Vector| -> Result<Vector> {
        let d = f(x, u)?;
        check_finite(d.as_slice(), "rk4 derivative")?;
        Ok(d)
    };
    let k1 = eval(x)?;
    let k2 = eval(&(x + &k1 * (0.5 * dt)))?;
    let k3 = eval(&(x + &k2 * (0.5 * dt)))?;
    let k4 = eval(&(x + &k3 * dt))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    check_finite(next.as_slice(), "rk4 state")?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let x = dvector![1.0, 2.0];
        let next = rk4_step(|x, _| Ok(Vector::zeros(x.len())), &x, &dvector![3.0], 0.1).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn exponential_decay_matches_analytic_solution() {
        let next = rk4_step(|x, _| Ok(-x), &dvector![1.0], &Vector::zeros(0), 0.01).unwrap();
        assert!((next[0] - (-0.01f64).exp()).abs() <= 1e-9);
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        let f = |x: &Vector, _: &Vector| Ok(dvector![x[1], -x[0]]);
        let mut x = dvector![1.0, 0.0];
        let u = Vector::zeros(0);
        for _ in 0..628 {
            x = rk4_step(f, &x, &u, 0.01).unwrap();
        }
        let energy = x[0] * x[0] + x[1] * x[1];
        assert!((energy - 1.0).abs() < 1e-6);
        // 628 steps of 0.01 stop 0.00318 short of 2π.
        let t = 628.0 * 0.01_f64;
        assert!((x[0] - t.cos()).abs() < 1e-8 && (x[1] + t.sin()).abs() < 1e-8);
    }

    #[test]
    fn local_error_is_fifth_order() {
        let lambda = -1.3_f64;
        let err = |dt: f64| {
            let x = rk4_step(|x, _| Ok(x * lambda), &dvector![1.0], &Vector::zeros(0), dt).unwrap();
            (x[0] - (lambda * dt).exp()).abs()
        };
        // Least-squares slope of log(err) against log(dt).
        let dts: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
        let pts: Vec<(f64, f64)> = dts.iter().map(|&h| (h.ln(), err(h).ln())).collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        // Halving dt must cut the error by at least 2^4 * 0.9.
        assert!(2f64.powf(slope) >= 16.0 * 0.9, "slope {slope}");
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let err = rk4_step(
            |_, _| Ok(dvector![0.0, f64::NAN]),
            &dvector![0.0, 0.0],
            &Vector::zeros(0),
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }
}
