use super::{check_finite, Matrix};
use crate::{Error, Result};

const TAYLOR_ORDER: usize = 12;

fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a degree-12 Taylor
/// polynomial. The scaling exponent keeps `‖M‖₁ / 2ˢ < 0.5`.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::dim("matrix exponential needs a square matrix"));
    }
    check_finite(m.as_slice(), "matrix exponential input")?;
    let n = m.nrows();
    let norm = norm1(m);
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) >= 0.5 {
        s += 1;
    }
    let scaled = m / 2f64.powi(s as i32);

    // Horner evaluation of Σ_k scaled^k / k!.
    let eye = Matrix::identity(n, n);
    let mut acc = eye.clone();
    for k in (1..=TAYLOR_ORDER).rev() {
        acc = &eye + (&scaled * acc) / k as f64;
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    Ok(acc)
}

/// Exact zero-order-hold discretization of `ẋ = A_c x + B_c u`:
/// `[A B; 0 I] = exp([A_c B_c; 0 0]·dt)`.
pub fn discretize_zoh(ac: &Matrix, bc: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("sample time must be positive, got {dt}")));
    }
    let n = ac.nrows();
    let m = bc.ncols();
    if !ac.is_square() || bc.nrows() != n {
        return Err(Error::dim(format!(
            "ZOH: A_c is {}x{}, B_c is {}x{}",
            ac.nrows(),
            ac.ncols(),
            bc.nrows(),
            bc.ncols()
        )));
    }
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    block.view_mut((0, n), (n, m)).copy_from(&(bc * dt));
    let e = expm(&block)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}
