use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ResidualSpec;
use crate::envs::BoxSet;
use crate::explicit_mpc::{evaluate_nearest, PwaControlLaw};
use crate::nets::{Gradients, Mlp, MlpCheckpoint};
use crate::numerics::serde_rows::vector;
use crate::numerics::Vector;
use crate::{Error, Result};

/// `π(z) = clamp(pwa(z) + residual(z), 𝒰)` with the PWA part frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct YannActor {
    pub law: PwaControlLaw,
    pub residual: Mlp,
    pub input_box: BoxSet,
}

impl YannActor {
    pub fn new(law: PwaControlLaw, spec: &ResidualSpec, input_box: BoxSet) -> Result<Self> {
        if law.regions.is_empty() {
            return Err(Error::Config("explicit law has no regions".into()));
        }
        if input_box.dim() != law.n_inputs {
            return Err(Error::dim("input box does not match the law"));
        }
        let residual = Mlp::new(spec.mlp_spec(law.n_states, law.n_inputs), spec.seed);
        Ok(Self { law, residual, input_box })
    }

    /// Unsaturated output `pwa(z) + residual(z)`.
    pub fn raw(&self, z: &Vector) -> Vector {
        evaluate_nearest(&self.law, z) + self.residual.forward(z)
    }

    pub fn forward(&self, z: &Vector) -> Vector {
        self.input_box.clamp(&self.raw(z))
    }

    /// Residual-parameter gradients of `⟨cotangent, π(z)⟩`.
    pub fn backward(&self, z: &Vector, cotangent: &Vector) -> Gradients {
        let projected = project_clamp_cotangent(&self.raw(z), cotangent, &self.input_box);
        self.residual.backward(z, &projected).0
    }

    pub fn checkpoint(&self) -> YannActorCheckpoint {
        YannActorCheckpoint {
            law: self.law.clone(),
            residual: self.residual.checkpoint(),
            input_lower: self.input_box.lower.clone(),
            input_upper: self.input_box.upper.clone(),
        }
    }

    pub fn from_checkpoint(c: YannActorCheckpoint) -> Result<Self> {
        Ok(Self {
            residual: Mlp::from_checkpoint(&c.residual)?,
            input_box: BoxSet::new(c.input_lower, c.input_upper)?,
            law: c.law,
        })
    }
}

/// Cotangent pulled back through `clamp(·, box)` at pre-clamp value `raw`.
///
/// Components strictly inside pass through; components outside are cut.
/// On a bound a component passes only if descent moves it back inside.
pub fn project_clamp_cotangent(raw: &Vector, cotangent: &Vector, b: &BoxSet) -> Vector {
    Vector::from_fn(raw.len(), |i, _| {
        let (r, c, lo, hi) = (raw[i], cotangent[i], b.lower[i], b.upper[i]);
        let inside = lo < r && r < hi;
        let inward = (r == hi && c > 0.0) || (r == lo && c < 0.0);
        if inside || inward {
            c
        } else {
            0.0
        }
    })
}

/// Self-contained actor file: explicit law, residual network, input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YannActorCheckpoint {
    pub law: PwaControlLaw,
    pub residual: MlpCheckpoint,
    #[serde(with = "vector")]
    pub input_lower: Vector,
    #[serde(with = "vector")]
    pub input_upper: Vector,
}

impl YannActorCheckpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit_mpc::tests::scalar_integrator;
    use crate::explicit_mpc::{condense, evaluate_pwa, solve_mpqp};
    use crate::nets::{Adam, AdamConfig};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn actor(seed: u64) -> YannActor {
        let f = scalar_integrator(2, 1.0);
        let law = solve_mpqp(&condense(&f).unwrap(), &f.domain.0, &f.domain.1).unwrap();
        let spec = ResidualSpec { hidden: vec![16, 16], seed, ..Default::default() };
        YannActor::new(law, &spec, f.input_box.clone()).unwrap()
    }

    fn samples(n: usize) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        (0..n).map(|_| dvector![rng.random_range(-2.0..2.0)]).collect()
    }

    #[test]
    fn fresh_actor_is_exactly_the_law() {
        let a = actor(1);
        for z in samples(10_000) {
            assert_eq!(a.forward(&z), evaluate_pwa(&a.law, &z).unwrap());
        }
    }

    #[test]
    fn hidden_perturbation_keeps_exactness() {
        let mut a = actor(2);
        a.residual.layers[0].w.apply(|w| *w += 0.3);
        for z in samples(1000) {
            assert_eq!(a.forward(&z), evaluate_pwa(&a.law, &z).unwrap());
        }
    }

    #[test]
    fn trained_actor_stays_in_the_box() {
        let mut a = actor(3);
        let g = a.backward(&dvector![0.4], &dvector![1.0]);
        Adam::for_mlp(AdamConfig::with_lr(0.5), &a.residual).step(&mut a.residual, &g);
        let zs = samples(10_000);
        assert!(zs.iter().any(|z| a.forward(z) != evaluate_pwa(&a.law, z).unwrap()));
        assert!(zs.iter().all(|z| a.input_box.contains(&a.forward(z))));
    }

    #[test]
    fn clamp_projection_rules() {
        let b = BoxSet::new(dvector![-1.0], dvector![1.0]).unwrap();
        let c = dvector![1.0];
        assert_eq!(project_clamp_cotangent(&dvector![0.5], &c, &b)[0], 1.0);
        assert_eq!(project_clamp_cotangent(&dvector![1.5], &c, &b)[0], 0.0);
        // On the upper bound: a positive cotangent means descent moves inward.
        assert_eq!(project_clamp_cotangent(&dvector![1.0], &c, &b)[0], 1.0);
        assert_eq!(project_clamp_cotangent(&dvector![1.0], &-c.clone(), &b)[0], 0.0);
        assert_eq!(project_clamp_cotangent(&dvector![-1.0], &c, &b)[0], 0.0);
    }

    #[test]
    fn saturated_outward_gradient_gives_no_update() {
        let a = actor(4);
        // z = 2 saturates at u = -1; cotangent +1 pushes descent upward...
        // ...so the inward case flows, the outward case is cut.
        let z = dvector![2.0];
        assert_eq!(a.forward(&z)[0], -1.0);
        let outward = a.backward(&z, &dvector![1.0]).flatten();
        assert!(outward.iter().all(|g| *g == 0.0));
        let inward = a.backward(&z, &dvector![-1.0]).flatten();
        assert!(inward.iter().any(|g| *g != 0.0));
    }

    #[test]
    fn residual_can_fit_a_smooth_target() {
        let mut a = actor(5);
        let zs = samples(200);
        let target = |z: &Vector| evaluate_pwa(&a.law, z).unwrap()[0] * 0.5 + 0.2 * (2.0 * z[0]).sin();
        let targets: Vec<f64> = zs.iter().map(target).collect();
        let rmse = |a: &YannActor| {
            (zs.iter().zip(&targets).map(|(z, t)| (a.forward(z)[0] - t).powi(2)).sum::<f64>() / zs.len() as f64).sqrt()
        };
        let initial = rmse(&a);
        let mut opt = Adam::for_mlp(AdamConfig::with_lr(3e-3), &a.residual);
        for _ in 0..1500 {
            let mut g = Gradients::zeros_like(&a.residual);
            for (z, t) in zs.iter().zip(&targets) {
                let err = a.forward(z)[0] - t;
                g.add_assign(&a.backward(z, &dvector![2.0 * err]));
            }
            g.scale(1.0 / zs.len() as f64);
            opt.step(&mut a.residual, &g);
        }
        let fitted = rmse(&a);
        assert!(fitted * 10.0 < initial, "rmse {initial} -> {fitted}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = actor(6);
        let back = YannActor::from_checkpoint(a.checkpoint()).unwrap();
        assert_eq!(back, a);
    }
}
