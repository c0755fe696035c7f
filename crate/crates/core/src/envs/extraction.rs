use serde::{Deserialize, Serialize};

use crate::numerics::Vector;
use crate::{Error, Result};

pub const STAGES: usize = 5;

// Negative concentrations down to this value are treated as zero.
const CLAMP_TOL: f64 = 1e-6;

/// Five-stage countercurrent liquid/gas extraction column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    /// Liquid holdup per stage (m³).
    pub v_l: f64,
    /// Gas holdup per stage (m³).
    pub v_g: f64,
    /// Mass-transfer coefficient (1/min).
    pub k_la: f64,
    /// Equilibrium constant.
    pub m: f64,
    /// Equilibrium exponent.
    pub e: f64,
    /// Liquid feed concentration entering stage 1.
    pub c_x_feed: f64,
    /// Gas feed concentration entering stage 5.
    pub c_y_feed: f64,
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_l > 0.0 && self.v_g > 0.0 && self.k_la >= 0.0 && self.m > 0.0) {
            return Err(Error::Config("invalid extraction-column parameters".into()));
        }
        Ok(())
    }

    /// Interphase transfer `F_n` for one stage.
    pub fn transfer(&self, c_x: f64, c_y: f64) -> f64 {
        let c_x_eq = (c_y.max(0.0) / self.m).powf(self.e);
        self.k_la * (c_x - c_x_eq) * self.v_l
    }
}

fn checked(c: f64, what: &str, stage: usize) -> Result<f64> {
    if c < -CLAMP_TOL {
        return Err(Error::Domain(format!("negative {what} concentration {c} in stage {}", stage + 1)));
    }
    Ok(c.max(0.0))
}

/// Derivatives for state `[C_X1..C_X5, C_Y1..C_Y5]` and input `[L, G]`.
pub fn extraction_dynamics(x: &Vector, u: &Vector, p: &ExtractionParams) -> Result<Vector> {
    let (l, g) = (u[0], u[1]);
    let mut d = Vector::zeros(2 * STAGES);
    for n in 0..STAGES {
        let cx = checked(x[n], "liquid", n)?;
        let cy = checked(x[STAGES + n], "gas", n)?;
        let cx_in = if n == 0 { p.c_x_feed } else { x[n - 1] };
        let cy_in = if n + 1 == STAGES { p.c_y_feed } else { x[STAGES + n + 1] };
        let f = p.transfer(cx, cy);
        d[n] = (l * (cx_in - x[n]) - f) / p.v_l;
        d[STAGES + n] = (g * (cy_in - x[STAGES + n]) + f) / p.v_g;
    }
    Ok(d)
}

/// Net solute inflow through the boundary streams.
pub fn boundary_flux(x: &Vector, u: &Vector, p: &ExtractionParams) -> f64 {
    u[0] * (p.c_x_feed - x[STAGES - 1]) + u[1] * (p.c_y_feed - x[STAGES])
}
