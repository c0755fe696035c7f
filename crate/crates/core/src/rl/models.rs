use crate::envs::BoxSet;
use crate::nets::{Activation, Gradients, Mlp, MlpSpec};
use crate::numerics::Vector;
use crate::explicit_mpc::{MpcFormulation, PwaControlLaw};
use crate::yann::{build_yann_critic, ResidualSpec, YannActor, YannCritic};
use crate::Result;

/// Deterministic policy in normalized coordinates with one trainable
/// network.
pub trait ActorModel: Clone {
    fn act(&self, z: &Vector) -> Vector;
    /// Trainable-parameter gradients of `⟨cotangent, act(z)⟩`.
    fn param_gradient(&self, z: &Vector, cotangent: &Vector) -> Gradients;
    fn net(&self) -> &Mlp;
    fn net_mut(&mut self) -> &mut Mlp;
    fn checkpoint_json(&self) -> Result<String>;
}

/// State-action cost-to-go estimate with one trainable network.
pub trait CriticModel: Clone {
    fn value(&self, z: &Vector, v: &Vector) -> f64;
    /// Trainable-parameter gradient and `∂Q/∂v`, both scaled by `weight`.
    fn gradients(&self, z: &Vector, v: &Vector, weight: f64) -> (Gradients, Vector);
    fn net(&self) -> &Mlp;
    fn net_mut(&mut self) -> &mut Mlp;
    fn checkpoint_json(&self) -> Result<String>;
}

impl ActorModel for YannActor {
    fn act(&self, z: &Vector) -> Vector {
        self.forward(z)
    }

    fn param_gradient(&self, z: &Vector, cotangent: &Vector) -> Gradients {
        self.backward(z, cotangent)
    }

    fn net(&self) -> &Mlp {
        &self.residual
    }

    fn net_mut(&mut self) -> &mut Mlp {
        &mut self.residual
    }

    fn checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.checkpoint())?)
    }
}

impl CriticModel for YannCritic {
    fn value(&self, z: &Vector, v: &Vector) -> f64 {
        self.forward(z, v)
    }

    fn gradients(&self, z: &Vector, v: &Vector, weight: f64) -> (Gradients, Vector) {
        self.backward(z, v, weight)
    }

    fn net(&self) -> &Mlp {
        &self.residual
    }

    fn net_mut(&mut self) -> &mut Mlp {
        &mut self.residual
    }

    fn checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.checkpoint())?)
    }
}

/// YANN actor and critic for a formulation and its explicit law. The critic
/// quadratic uses the formulation's model, weights, terminal weight and
/// discount.
pub fn yann_models(
    form: &MpcFormulation,
    law: PwaControlLaw,
    actor_spec: &ResidualSpec,
    critic_spec: &ResidualSpec,
) -> Result<(YannActor, YannCritic)> {
    let actor = YannActor::new(law, actor_spec, form.input_box.clone())?;
    let critic = build_yann_critic(&form.system.a, &form.system.b, &form.q_w, &form.r, &form.p, form.gamma, critic_spec)?;
    Ok((actor, critic))
}

/// Half-width of the uniform final-layer initialization of baseline nets.
const FINAL_INIT: f64 = 3e-3;

/// Randomly initialized policy `v = center + half_width ⊙ tanh(mlp(z))`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaActor {
    pub mlp: Mlp,
    pub input_box: BoxSet,
}

impl VanillaActor {
    pub fn new(n_states: usize, hidden: &[usize], input_box: BoxSet, seed: u64) -> Self {
        let spec = MlpSpec::new(n_states, hidden, input_box.dim())
            .output_activation(Activation::Tanh)
            .output_init_scale(FINAL_INIT);
        Self { mlp: Mlp::new(spec, seed), input_box }
    }

    fn half_width(&self) -> Vector {
        self.input_box.width() * 0.5
    }
}

impl ActorModel for VanillaActor {
    fn act(&self, z: &Vector) -> Vector {
        self.input_box.center() + self.half_width().component_mul(&self.mlp.forward(z))
    }

    fn param_gradient(&self, z: &Vector, cotangent: &Vector) -> Gradients {
        self.mlp.backward(z, &cotangent.component_mul(&self.half_width())).0
    }

    fn net(&self) -> &Mlp {
        &self.mlp
    }

    fn net_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    fn checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.mlp.checkpoint())?)
    }
}

/// Randomly initialized critic `Q(z, v) = mlp([z; v])`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaCritic {
    pub mlp: Mlp,
    pub n_states: usize,
}

impl VanillaCritic {
    pub fn new(n_states: usize, n_inputs: usize, hidden: &[usize], seed: u64) -> Self {
        let spec = MlpSpec::new(n_states + n_inputs, hidden, 1).output_init_scale(FINAL_INIT);
        Self { mlp: Mlp::new(spec, seed), n_states }
    }

    fn stack(z: &Vector, v: &Vector) -> Vector {
        Vector::from_iterator(z.len() + v.len(), z.iter().chain(v.iter()).copied())
    }
}

impl CriticModel for VanillaCritic {
    fn value(&self, z: &Vector, v: &Vector) -> f64 {
        self.mlp.forward(&Self::stack(z, v))[0]
    }

    fn gradients(&self, z: &Vector, v: &Vector, weight: f64) -> (Gradients, Vector) {
        let (g, gs) = self.mlp.backward(&Self::stack(z, v), &Vector::from_element(1, weight));
        let dv = gs.rows(self.n_states, gs.len() - self.n_states).into_owned();
        (g, dv)
    }

    fn net(&self) -> &Mlp {
        &self.mlp
    }

    fn net_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    fn checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.mlp.checkpoint())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn vanilla_actor_stays_in_box_and_gradient_matches_fd() {
        let b = BoxSet::new(dvector![-0.2, 0.0], dvector![0.8, 3.0]).unwrap();
        let mut a = VanillaActor::new(3, &[8], b.clone(), 4);
        a.mlp.layers[1].w.fill(0.7);
        let z = dvector![0.3, -0.5, 0.9];
        assert!(b.contains(&a.act(&z)));
        let c = dvector![0.4, -1.1];
        let g = a.param_gradient(&z, &c).flatten();
        let theta = a.mlp.params();
        let h = 1e-6;
        for k in [0, 5, theta.len() - 1] {
            let mut t = theta.clone();
            t[k] += h;
            let mut plus = a.clone();
            plus.mlp.set_params(&t).unwrap();
            t[k] -= 2.0 * h;
            let mut minus = a.clone();
            minus.mlp.set_params(&t).unwrap();
            let fd = (plus.act(&z).dot(&c) - minus.act(&z).dot(&c)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn vanilla_critic_action_gradient_matches_fd() {
        let c = VanillaCritic::new(2, 2, &[6, 6], 9);
        let z = dvector![0.1, 0.2];
        let v = dvector![-0.3, 0.4];
        let (_, dv) = c.gradients(&z, &v, 1.0);
        for j in 0..2 {
            let h = 1e-6;
            let mut vp = v.clone();
            vp[j] += h;
            let mut vm = v.clone();
            vm[j] -= h;
            let fd = (c.value(&z, &vp) - c.value(&z, &vm)) / (2.0 * h);
            assert!((fd - dv[j]).abs() < 1e-8);
        }
    }
}
