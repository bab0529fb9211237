//! Minimal feed-forward network engine: dense layers, manual backprop
//! (including gradients with respect to the input), Adam, and BCE loss.

mod adam;
mod checkpoint;
mod loss;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_mlp, save_mlp};
pub use loss::bce_loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::rng::RandomStream;
use crate::scalar::Real;

/// Sigmoid outputs are clamped to `[SIGMOID_CLAMP, 1 - SIGMOID_CLAMP]` so that
/// `log D` is always finite.
pub const SIGMOID_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Sigmoid,
    Identity,
    /// `scale * tanh(z)`: bounded output head for generators.
    ScaledTanh { scale: f64 },
}

impl Activation {
    fn apply<F: Real>(self, z: F) -> F {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu { slope } => {
                if z >= F::zero() {
                    z
                } else {
                    F::from_f64_c(slope) * z
                }
            }
            Activation::Sigmoid => {
                let one = F::one();
                let s = one / (one + (-z).exp());
                let eps = F::from_f64_c(SIGMOID_CLAMP);
                num_traits::clamp(s, eps, one - eps)
            }
            Activation::ScaledTanh { scale } => F::from_f64_c(scale) * z.tanh(),
        }
    }

    /// Derivative expressed through pre-activation `z` and activation `a`.
    fn derivative<F: Real>(self, z: F, a: F) -> F {
        match self {
            Activation::Identity => F::one(),
            Activation::LeakyRelu { slope } => {
                if z >= F::zero() {
                    F::one()
                } else {
                    F::from_f64_c(slope)
                }
            }
            Activation::Sigmoid => a * (F::one() - a),
            Activation::ScaledTanh { scale } => {
                let s = F::from_f64_c(scale);
                let t = a / s;
                s * (F::one() - t * t)
            }
        }
    }
}

/// Dense layer `a = act(x · W + b)` with `W` of shape `(in_dim, out_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weight: Matrix2<F>,
    pub bias: Vec<F>,
    pub activation: Activation,
    pub grad_weight: Matrix2<F>,
    pub grad_bias: Vec<F>,
}

impl<F: Real> Layer<F> {
    /// He-style scaled-uniform init: `U(-s, s)` with `s = sqrt(6 / in_dim)`.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RandomStream) -> Self {
        let s = F::from_f64_c((6.0 / in_dim as f64).sqrt());
        let weight = Matrix2::from_fn(in_dim, out_dim, |_, _| rng.uniform(-s, s));
        Self {
            bias: vec![F::zero(); out_dim],
            grad_weight: Matrix2::zeros(in_dim, out_dim),
            grad_bias: vec![F::zero(); out_dim],
            weight,
            activation,
        }
    }

    pub fn from_parts(weight: Matrix2<F>, bias: Vec<F>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape("Layer::from_parts", weight.cols(), bias.len()));
        }
        Ok(Self {
            grad_weight: Matrix2::zeros(weight.rows(), weight.cols()),
            grad_bias: vec![F::zero(); bias.len()],
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn affine(&self, input: &Matrix2<F>) -> Result<Matrix2<F>> {
        let mut z = input.matmul(&self.weight)?;
        for i in 0..z.rows() {
            for (v, &b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }
}

#[derive(Debug, Clone)]
struct ForwardCache<F> {
    input: Matrix2<F>,
    /// Per layer: (pre-activation z, activation a).
    layers: Vec<(Matrix2<F>, Matrix2<F>)>,
}

/// Feed-forward network. `forward` caches intermediates for `backward`;
/// `eval` is the immutable, cache-free path for frozen-parameter use.
#[derive(Debug, Clone)]
pub struct Mlp<F> {
    layers: Vec<Layer<F>>,
    cache: Option<ForwardCache<F>>,
}

impl<F: Real> Mlp<F> {
    pub fn new(layers: Vec<Layer<F>>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::new (layer chaining)",
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        if layers.is_empty() {
            return Err(Error::Config("Mlp needs at least one layer".into()));
        }
        Ok(Self { layers, cache: None })
    }

    /// One-hidden-layer network `in → hidden (LeakyReLU) → out`.
    pub fn one_hidden(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        slope: f64,
        output: Activation,
        rng: &mut RandomStream,
    ) -> Self {
        let layers = vec![
            Layer::new(in_dim, hidden, Activation::LeakyRelu { slope }, rng),
            Layer::new(hidden, out_dim, output, rng),
        ];
        Self::new(layers).expect("one_hidden dimensions chain")
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    fn run(&self, batch: &Matrix2<F>) -> Result<Vec<(Matrix2<F>, Matrix2<F>)>> {
        if batch.cols() != self.in_dim() {
            return Err(Error::shape("Mlp::forward", self.in_dim(), batch.cols()));
        }
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let z = layer.affine(&current)?;
            let a = z.map(|v| layer.activation.apply(v));
            current = a.clone();
            acts.push((z, a));
        }
        Ok(acts)
    }

    /// Pure evaluation with frozen parameters; no cache is written.
    pub fn eval(&self, batch: &Matrix2<F>) -> Result<Matrix2<F>> {
        Ok(self.run(batch)?.pop().unwrap().1)
    }

    /// Forward pass that caches per-layer pre-activations for `backward`.
    pub fn forward(&mut self, batch: &Matrix2<F>) -> Result<Matrix2<F>> {
        let acts = self.run(batch)?;
        let out = acts.last().unwrap().1.clone();
        self.cache = Some(ForwardCache {
            input: batch.clone(),
            layers: acts,
        });
        Ok(out)
    }

    /// Backpropagates `upstream_grad` (d loss / d output), fills the per-layer
    /// parameter gradients and returns the gradient with respect to the
    /// network input.
    pub fn backward(&mut self, upstream_grad: &Matrix2<F>) -> Result<Matrix2<F>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let (last_z, _) = cache.layers.last().unwrap();
        if upstream_grad.rows() != last_z.rows() || upstream_grad.cols() != last_z.cols() {
            return Err(Error::shape(
                "Mlp::backward",
                format!("{}x{}", last_z.rows(), last_z.cols()),
                format!("{}x{}", upstream_grad.rows(), upstream_grad.cols()),
            ));
        }
        let mut grad = upstream_grad.clone();
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (z, a) = &cache.layers[idx];
            // dz = da ⊙ act'(z)
            let mut dz = grad;
            for i in 0..dz.rows() {
                for j in 0..dz.cols() {
                    let d = layer.activation.derivative(z.get(i, j), a.get(i, j));
                    dz.set(i, j, dz.get(i, j) * d);
                }
            }
            let prev_act = if idx == 0 {
                &cache.input
            } else {
                &cache.layers[idx - 1].1
            };
            let gw = prev_act.t_matmul(&dz)?;
            let mut gb = vec![F::zero(); layer.out_dim()];
            for i in 0..dz.rows() {
                for (g, &v) in gb.iter_mut().zip(dz.row(i)) {
                    *g += v;
                }
            }
            grad = dz.matmul_t(&layer.weight)?;
            layer_grads.push((idx, gw, gb));
        }
        for (idx, gw, gb) in layer_grads {
            self.layers[idx].grad_weight = gw;
            self.layers[idx].grad_bias = gb;
        }
        Ok(grad)
    }

    /// Flattened parameter snapshot, layer by layer (weights then bias).
    pub fn flat_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[F]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("Mlp::set_flat_params", self.param_count(), params.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&params[off..off + n]);
            off += n;
            let m = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + m]);
            off += m;
        }
        Ok(())
    }

    pub fn flat_grads(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.grad_weight.data());
            out.extend_from_slice(&l.grad_bias);
        }
        out
    }

    /// Applies one Adam update to all parameters from the stored gradients.
    pub fn apply_adam(&mut self, state: &mut AdamState<F>) -> Result<()> {
        let mut params = self.flat_params();
        let grads = self.flat_grads();
        adam_step(state, &mut params, &grads)?;
        self.set_flat_params(&params)
    }

    /// Applies one plain gradient-descent update from the stored gradients.
    pub fn apply_sgd(&mut self, lr: F) -> Result<()> {
        let mut params = self.flat_params();
        for (p, g) in params.iter_mut().zip(self.flat_grads()) {
            *p -= lr * g;
        }
        self.set_flat_params(&params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::central_diff_gradient;
    use approx::assert_relative_eq;

    fn identity_net(dim: usize) -> Mlp<f64> {
        let w = Matrix2::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 });
        let layer = Layer::from_parts(w, vec![0.0; dim], Activation::Identity).unwrap();
        Mlp::new(vec![layer]).unwrap()
    }

    #[test]
    fn identity_layer_passes_batch_through() {
        let mut net = identity_net(3);
        let batch = Matrix2::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.25]).unwrap();
        let out = net.forward(&batch).unwrap();
        assert_eq!(out, batch);
    }

    #[test]
    fn sigmoid_of_zero_preactivation_is_half() {
        let w = Matrix2::zeros(2, 4);
        let layer = Layer::from_parts(w, vec![0.0; 4], Activation::Sigmoid).unwrap();
        let mut net = Mlp::new(vec![layer]).unwrap();
        let out = net.forward(&Matrix2::from_vec(1, 2, vec![3.0, -7.0]).unwrap()).unwrap();
        for &v in out.data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn leaky_relu_negative_side() {
        assert_eq!(Activation::LeakyRelu { slope: 0.2 }.apply(-1.0_f64), -0.2);
        assert_eq!(Activation::LeakyRelu { slope: 0.2 }.apply(1.5_f64), 1.5);
    }

    #[test]
    fn forward_is_pure_given_parameters() {
        let mut rng = RandomStream::new(3);
        let net = Mlp::<f64>::one_hidden(2, 8, 1, 0.2, Activation::Sigmoid, &mut rng);
        let batch = Matrix2::from_fn(5, 2, |i, j| (i as f64) - 2.0 * (j as f64));
        let a = net.eval(&batch).unwrap();
        let b = net.eval(&batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut net = identity_net(2);
        let g = Matrix2::zeros(1, 2);
        assert!(matches!(net.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = RandomStream::new(11);
        let mut net = Mlp::<f64>::one_hidden(3, 5, 2, 0.2, Activation::Identity, &mut rng);
        let batch = Matrix2::from_fn(4, 3, |i, j| (i + j) as f64 * 0.3 - 1.0);
        net.forward(&batch).unwrap();
        let input_grad = net.backward(&Matrix2::zeros(4, 2)).unwrap();
        assert!(input_grad.data().iter().all(|&v| v == 0.0));
        assert!(net.flat_grads().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_input_grad_is_w_transpose_times_upstream() {
        let w = Matrix2::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let layer = Layer::from_parts(w.clone(), vec![0.0; 3], Activation::Identity).unwrap();
        let mut net = Mlp::new(vec![layer]).unwrap();
        let x = Matrix2::from_vec(1, 2, vec![0.7, -0.3]).unwrap();
        net.forward(&x).unwrap();
        let up = Matrix2::from_vec(1, 3, vec![1.0, -1.0, 2.0]).unwrap();
        let g = net.backward(&up).unwrap();
        // gᵢ = Σⱼ Wᵢⱼ · upⱼ
        assert_eq!(g.data(), &[1.0 - 2.0 + 6.0, 4.0 - 5.0 + 12.0]);
    }

    // Scalar loss L = sum of outputs; checks input gradient of a random
    // 2-4-1 net against central finite differences.
    #[test]
    fn input_grad_matches_finite_differences() {
        let mut rng = RandomStream::new(99);
        for trial in 0..20 {
            let mut net =
                Mlp::<f64>::one_hidden(2, 4, 1, 0.2, Activation::Sigmoid, &mut rng);
            let x: Vec<f64> = (0..2).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let batch = Matrix2::from_vec(1, 2, x.clone()).unwrap();
            net.forward(&batch).unwrap();
            let analytic = net.backward(&Matrix2::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
            let f = |p: &[f64]| {
                let b = Matrix2::from_vec(1, 2, p.to_vec()).unwrap();
                net.eval(&b).unwrap().get(0, 0)
            };
            let numeric = central_diff_gradient(&f, &x, 1e-5);
            for j in 0..2 {
                let a = analytic.get(0, j);
                let n = numeric[j];
                assert_relative_eq!(a, n, max_relative = 1e-4, epsilon = 1e-8);
            }
            let _ = trial;
        }
    }

    #[test]
    fn param_grads_match_finite_differences() {
        let mut rng = RandomStream::new(5);
        let mut net = Mlp::<f64>::one_hidden(2, 3, 1, 0.2, Activation::Sigmoid, &mut rng);
        let batch = Matrix2::from_vec(2, 2, vec![0.3, -0.8, 1.1, 0.2]).unwrap();
        net.forward(&batch).unwrap();
        let up = Matrix2::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        net.backward(&up).unwrap();
        let analytic = net.flat_grads();
        let theta = net.flat_params();
        let f = |p: &[f64]| {
            let mut n = net.clone();
            n.set_flat_params(p).unwrap();
            n.eval(&batch).unwrap().data().iter().sum::<f64>()
        };
        let numeric = central_diff_gradient(&f, &theta, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert_relative_eq!(a, n, max_relative = 1e-4, epsilon = 1e-8);
        }
    }

    #[test]
    fn scaled_tanh_value_and_input_grad() {
        let act = Activation::ScaledTanh { scale: 1.25 };
        assert_eq!(act.apply(0.0_f64), 0.0);
        assert!(act.apply(50.0_f64) <= 1.25 && act.apply(50.0_f64) > 1.2499);
        assert_relative_eq!(act.apply(0.7_f64), 1.25 * 0.7_f64.tanh(), max_relative = 1e-15);

        let mut rng = RandomStream::new(23);
        let mut net = Mlp::<f64>::one_hidden(2, 4, 2, 0.2, act, &mut rng);
        let x = vec![0.4, -1.3];
        let batch = Matrix2::from_vec(1, 2, x.clone()).unwrap();
        net.forward(&batch).unwrap();
        let analytic = net
            .backward(&Matrix2::from_vec(1, 2, vec![1.0, 1.0]).unwrap())
            .unwrap();
        let f = |p: &[f64]| {
            let b = Matrix2::from_vec(1, 2, p.to_vec()).unwrap();
            net.eval(&b).unwrap().data().iter().sum::<f64>()
        };
        let numeric = central_diff_gradient(&f, &x, 1e-5);
        for j in 0..2 {
            assert_relative_eq!(analytic.get(0, j), numeric[j], max_relative = 1e-4, epsilon = 1e-8);
        }
    }
}
