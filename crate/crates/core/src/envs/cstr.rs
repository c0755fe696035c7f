use serde::{Deserialize, Serialize};

use crate::numerics::Vector;
use crate::{Error, Result};

/// Jacketed CSTR with one exothermic first-order reaction `A → B`.
///
/// Units: L, min, mol, K, J, g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstrParams {
    /// Volumetric flow (L/min).
    pub q: f64,
    /// Reactor volume (L).
    pub v: f64,
    /// Feed concentration of A (mol/L).
    pub c_af: f64,
    /// Feed temperature (K).
    pub t_f: f64,
    /// Density (g/L).
    pub rho: f64,
    /// Heat capacity (J/(g·K)).
    pub cp: f64,
    /// Heat of reaction (J/mol), negative for an exothermic reaction.
    pub dh_r: f64,
    /// Activation energy over the gas constant (K).
    pub e_over_r: f64,
    /// Pre-exponential factor (1/min).
    pub k0: f64,
    /// Heat-transfer coefficient times area (J/(min·K)).
    pub ua: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            q: 100.0,
            v: 100.0,
            c_af: 1.0,
            t_f: 350.0,
            rho: 1000.0,
            cp: 0.239,
            dh_r: -5.0e4,
            e_over_r: 8750.0,
            k0: 7.2e10,
            ua: 5.0e4,
        }
    }
}

impl CstrParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.q, self.v, self.c_af, self.t_f, self.rho, self.cp, self.e_over_r, self.k0, self.ua];
        if positive.iter().any(|&p| !(p > 0.0)) && self.k0 != 0.0 {
            return Err(Error::Config("CSTR parameters must be positive".into()));
        }
        if !(self.dh_r < 0.0) {
            return Err(Error::Config("CSTR reaction must be exothermic (dh_r < 0)".into()));
        }
        Ok(())
    }
}

/// Right-hand side for state `[C_A, T]` and input `[T_c]`.
pub fn cstr_dynamics(x: &Vector, u: &Vector, p: &CstrParams) -> Result<Vector> {
    let (ca, t, tc) = (x[0], x[1], u[0]);
    if !(t > 0.0) {
        return Err(Error::Domain(format!("reactor temperature must be positive, got {t} K")));
    }
    let rate = p.k0 * (-p.e_over_r / t).exp() * ca;
    let dilution = p.q / p.v;
    let heat_capacity = p.rho * p.cp;
    let dca = dilution * (p.c_af - ca) - rate;
    let dt = dilution * (p.t_f - t) - p.dh_r / heat_capacity * rate + p.ua / (heat_capacity * p.v) * (tc - t);
    Ok(Vector::from_vec(vec![dca, dt]))
}
