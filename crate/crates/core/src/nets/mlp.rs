use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn slope(self, pre: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture and initialization of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Final layer starts exactly at zero.
    pub zero_output_init: bool,
    /// Half-width of the uniform final-layer init; fan-in scaling if absent.
    pub output_init_scale: Option<f64>,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            zero_output_init: false,
            output_init_scale: None,
        }
    }

    pub fn zero_output(mut self) -> Self {
        self.zero_output_init = true;
        self
    }

    pub fn hidden_activation(mut self, act: Activation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn output_init_scale(mut self, scale: f64) -> Self {
        self.output_init_scale = Some(scale);
        self
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.output);
        w
    }
}

/// One affine map followed by an activation: `y = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vector,
    pub activation: Activation,
}

/// Parameter-shaped gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vector)>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self { layers: mlp.layers.iter().map(|l| (Matrix::zeros(l.w.nrows(), l.w.ncols()), Vector::zeros(l.b.len()))).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            *w *= s;
            *b *= s;
        }
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.as_slice());
            out.extend(b.as_slice());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub spec: MlpSpec,
    pub seed: u64,
}

impl Mlp {
    /// Hidden layers use `U(−1/√fan_in, 1/√fan_in)` weights and biases drawn
    /// from a ChaCha8 stream seeded with `seed`.
    pub fn new(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = spec.widths();
        let count = widths.len() - 1;
        let mut layers = Vec::with_capacity(count);
        for k in 0..count {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let last = k + 1 == count;
            let bound = match (last, spec.output_init_scale) {
                (true, Some(s)) => s,
                _ => 1.0 / (fan_in.max(1) as f64).sqrt(),
            };
            let mut draw = || if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
            let w = Matrix::from_fn(fan_out, fan_in, |_, _| draw());
            let b = Vector::from_fn(fan_out, |_, _| draw());
            let activation = if last { spec.output_activation } else { spec.hidden_activation };
            let layer = if last && spec.zero_output_init {
                Layer { w: Matrix::zeros(fan_out, fan_in), b: Vector::zeros(fan_out), activation }
            } else {
                Layer { w, b, activation }
            };
            layers.push(layer);
        }
        Self { layers, spec, seed }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &Vector) -> Vector {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut h = x.clone();
        for l in &self.layers {
            let mut pre = &l.w * &h + &l.b;
            pre.apply(|v| *v = l.activation.apply(*v));
            h = pre;
        }
        h
    }

    /// Gradients of `⟨cotangent, forward(x)⟩` with respect to parameters and
    /// input.
    pub fn backward(&self, x: &Vector, cotangent: &Vector) -> (Gradients, Vector) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let pre = &l.w * &h + &l.b;
            let out = pre.map(|v| l.activation.apply(v));
            inputs.push(h);
            pres.push(pre);
            h = out.clone();
            outs.push(out);
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = cotangent.clone();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let act = l.activation;
            let d_pre = Vector::from_fn(delta.len(), |i, _| delta[i] * act.slope(pres[k][i], outs[k][i]));
            grads.push((&d_pre * inputs[k].transpose(), d_pre.clone()));
            delta = l.w.tr_mul(&d_pre);
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    /// Input gradient only.
    pub fn input_gradient(&self, x: &Vector, cotangent: &Vector) -> Vector {
        self.backward(x, cotangent).1
    }

    /// Parameters flattened layer by layer (weights column-major, then bias).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.as_slice());
            out.extend(l.b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::dim(format!("expected {} parameters, got {}", self.n_params(), params.len())));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// `θ ← τ θ_other + (1 − τ) θ`.
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&other.layers) {
            t.w.zip_apply(&o.w, |a, b| *a = tau * b + (1.0 - tau) * *a);
            t.b.zip_apply(&o.b, |a, b| *a = tau * b + (1.0 - tau) * *a);
        }
    }

    pub fn checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint { spec: self.spec.clone(), seed: self.seed, params: self.params() }
    }

    pub fn from_checkpoint(c: &MlpCheckpoint) -> Result<Self> {
        let mut mlp = Mlp::new(c.spec.clone(), c.seed);
        mlp.set_params(&c.params)?;
        Ok(mlp)
    }
}

/// Serialized network: architecture, seed of the initial weights, and the
/// flat parameter list of [`Mlp::params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub spec: MlpSpec,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl MlpCheckpoint {
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
    use nalgebra::{dmatrix, dvector};

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_output_init_gives_zero() {
        let mlp = Mlp::new(MlpSpec::new(3, &[8, 8], 2).zero_output(), 5);
        assert_eq!(mlp.forward(&dvector![0.3, -4.0, 2.0]), Vector::zeros(2));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut mlp = Mlp::new(MlpSpec::new(2, &[], 2), 0);
        mlp.layers[0].w = Matrix::identity(2, 2);
        mlp.layers[0].b = Vector::zeros(2);
        let x = dvector![0.7, -1.2];
        assert_eq!(mlp.forward(&x), x);
        let c = dvector![1.5, 2.5];
        assert_eq!(mlp.input_gradient(&x, &c), c);
    }

    #[test]
    fn hand_computed_two_layer_tanh() {
        let mut mlp = Mlp::new(MlpSpec::new(1, &[2], 1), 0);
        mlp.layers[0].w = dmatrix![1.0; -2.0];
        mlp.layers[0].b = dvector![0.5, 0.0];
        mlp.layers[1].w = dmatrix![3.0, 1.0];
        mlp.layers[1].b = dvector![-1.0];
        let expected = 3.0 * 1.0f64.tanh() + (-1.0f64).tanh() - 1.0;
        assert!((mlp.forward(&dvector![0.5])[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_parameter_gradient_is_outer_product() {
        let mlp = Mlp::new(MlpSpec::new(3, &[], 2), 9);
        let x = dvector![1.0, 2.0, 3.0];
        let c = dvector![-1.0, 0.5];
        let (g, _) = mlp.backward(&x, &c);
        assert_eq!(g.layers[0].0, &c * x.transpose());
        assert_eq!(g.layers[0].1, c);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let spec = MlpSpec::new(4, &[16, 16], 3);
        assert_eq!(Mlp::new(spec.clone(), 11), Mlp::new(spec.clone(), 11));
        assert_ne!(Mlp::new(spec.clone(), 11), Mlp::new(spec, 12));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for act in [Activation::Tanh, Activation::Relu, Activation::Identity] {
            for depth in 1..=4 {
                let hidden = vec![7; depth - 1];
                let spec = MlpSpec::new(3, &hidden, 2).hidden_activation(act).output_activation(act);
                let mlp = Mlp::new(spec, depth as u64);
                let x = random_vector(&mut rng, 3);
                let c = random_vector(&mut rng, 2);
                let objective = |m: &Mlp, x: &Vector| m.forward(x).dot(&c);
                let (g, gx) = mlp.backward(&x, &c);
                let flat = g.flatten();
                let theta = mlp.params();
                let h = 1e-5;
                for _ in 0..50 {
                    let k = rng.random_range(0..theta.len());
                    let mut plus = mlp.clone();
                    let mut minus = mlp.clone();
                    let mut t = theta.clone();
                    t[k] += h;
                    plus.set_params(&t).unwrap();
                    t[k] -= 2.0 * h;
                    minus.set_params(&t).unwrap();
                    let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                    let err = (fd - flat[k]).abs() / fd.abs().max(flat[k].abs()).max(1e-3);
                    assert!(err < 1e-5, "{act:?} depth {depth} coordinate {k}: fd {fd} vs {}", flat[k]);
                }
                for i in 0..3 {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let mut xm = x.clone();
                    xm[i] -= h;
                    let fd = (objective(&mlp, &xp) - objective(&mlp, &xm)) / (2.0 * h);
                    assert!((fd - gx[i]).abs() / fd.abs().max(1e-3) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn backward_does_not_mutate() {
        let mlp = Mlp::new(MlpSpec::new(2, &[4], 1), 3);
        let before = mlp.clone();
        let _ = mlp.backward(&dvector![0.1, 0.2], &dvector![1.0]);
        assert_eq!(mlp, before);
    }

    #[test]
    fn soft_update_arithmetic() {
        let spec = MlpSpec::new(1, &[], 1);
        let mut target = Mlp::new(spec.clone(), 0);
        target.set_params(&[0.0, 0.0]).unwrap();
        let mut online = Mlp::new(spec, 1);
        online.set_params(&[2.0, 2.0]).unwrap();
        let mut t = target.clone();
        t.soft_update_from(&online, 0.5);
        assert_eq!(t.params(), vec![1.0, 1.0]);
        let mut t = target.clone();
        t.soft_update_from(&online, 0.0);
        assert_eq!(t, target);
        let mut t = target.clone();
        t.soft_update_from(&online, 1.0);
        assert_eq!(t.params(), online.params());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let mlp = Mlp::new(MlpSpec::new(3, &[5], 2), 17);
        mlp.checkpoint().save(&path).unwrap();
        let back = Mlp::from_checkpoint(&MlpCheckpoint::load(&path).unwrap()).unwrap();
        assert_eq!(back, mlp);
    }
}
