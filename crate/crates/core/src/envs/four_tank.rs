use serde::{Deserialize, Serialize};

use crate::numerics::Vector;
use crate::{Error, Result};

/// Quadruple-tank process.
///
/// SI units with time in seconds; `time_scale` converts to the environment
/// time unit (seconds per unit, 60 for minutes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourTankParams {
    /// Outlet cross-sections a₁..a₄ (m²).
    pub outlet_area: [f64; 4],
    /// Tank cross-sections A₁..A₄ (m²).
    pub tank_area: [f64; 4],
    /// Gravitational acceleration (m/s²).
    pub g_a: f64,
    /// Valve splits γ₁, γ₂.
    pub valve_split: [f64; 2],
    /// Pump gains k₁, k₂ (m³/(s·V)).
    pub pump_gain: [f64; 2],
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
}

fn default_time_scale() -> f64 {
    60.0
}

impl FourTankParams {
    pub fn validate(&self) -> Result<()> {
        let areas_ok = self.outlet_area.iter().chain(&self.tank_area).all(|&a| a > 0.0);
        let splits_ok = self.valve_split.iter().all(|&g| g > 0.0 && g < 1.0);
        if !areas_ok || !splits_ok || !(self.g_a > 0.0) || !(self.time_scale > 0.0) {
            return Err(Error::Config("invalid four-tank parameters".into()));
        }
        Ok(())
    }
}

/// Level derivatives (m/s) for heights `[h₁..h₄]` and pump voltages `[v₁, v₂]`.
/// Heights are clamped at zero under the square roots.
pub fn fourtank_dynamics(x: &Vector, u: &Vector, p: &FourTankParams) -> Vector {
    let outflow = |i: usize| p.outlet_area[i] * (2.0 * p.g_a * x[i].max(0.0)).sqrt();
    let [a1, a2, a3, a4] = p.tank_area;
    let [g1, g2] = p.valve_split;
    let [k1, k2] = p.pump_gain;
    let (v1, v2) = (u[0], u[1]);
    Vector::from_vec(vec![
        (-outflow(0) + outflow(2) + g1 * k1 * v1) / a1,
        (-outflow(1) + outflow(3) + g2 * k2 * v2) / a2,
        (-outflow(2) + (1.0 - g2) * k2 * v2) / a3,
        (-outflow(3) + (1.0 - g1) * k1 * v1) / a4,
    ])
}
