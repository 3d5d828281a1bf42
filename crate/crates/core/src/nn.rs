//! Small dense networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Self::Relu => z.mapv(|v| v.max(0.0)),
            Self::Tanh => z.mapv(f64::tanh),
            Self::Identity => z.clone(),
        }
    }

    /// Multiplies `grad` in place by the derivative at pre-activation `z`
    /// (with `out` the corresponding activation).
    fn backprop(self, z: &Array2<f64>, out: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Self::Relu => grad.zip_mut_with(z, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            }),
            Self::Tanh => grad.zip_mut_with(out, |g, &y| *g *= 1.0 - y * y),
            Self::Identity => {}
        }
    }
}

/// Fully connected layer `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Uniform initialization in `[-1/sqrt(in), 1/sqrt(in)]`, scaled by `gain`.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain / (inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..=bound));
        let bias = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..=bound));
        Self { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Multi-layer perceptron: hidden layers share one activation, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Linear>,
    activation: Activation,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| {
                [
                    w.as_slice().expect("standard layout"),
                    b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl Mlp {
    /// `sizes` lists layer widths from input to output, at least two entries.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 1 == n { output_gain } else { 1.0 };
                Linear::new(w[0], w[1], gain, rng)
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            z = layer.forward(&self.activation.apply(&z));
        }
        z
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(h);
            if i + 1 == n {
                return (z, MlpCache { inputs, pre });
            }
            h = self.activation.apply(&z);
            pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Gradients of a scalar loss given `grad_out = dL/d(output)`. Returns
    /// parameter gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            let x = &cache.inputs[i];
            let gw = x.t().dot(&g).as_standard_layout().into_owned();
            let gb = g.sum_axis(Axis(0));
            grads.push((gw, gb));
            g = g.dot(&self.layers[i].weight.t());
            if i > 0 {
                self.activation
                    .backprop(&cache.pre[i - 1], &cache.inputs[i], &mut g);
            }
        }
        grads.reverse();
        (MlpGrads { layers: grads }, g)
    }

    /// `dL/d(input)` only, skipping parameter gradients.
    pub fn backward_input(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> Array2<f64> {
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            g = g.dot(&self.layers[i].weight.t());
            if i > 0 {
                self.activation
                    .backprop(&cache.pre[i - 1], &cache.inputs[i], &mut g);
            }
        }
        g
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for s in self.param_slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Polyak averaging: `self <- (1 - tau) self + tau source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            dst.weight.zip_mut_with(&src.weight, |d, &s| *d = (1.0 - tau) * *d + tau * s);
            dst.bias.zip_mut_with(&src.bias, |d, &s| *d = (1.0 - tau) * *d + tau * s);
        }
    }

    /// Largest absolute parameter difference to another network of the same shape.
    pub fn max_abs_diff(&self, other: &Mlp) -> f64 {
        self.flat_params()
            .iter()
            .zip(other.flat_params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Adam optimizer over a fixed list of parameter slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn for_mlp(net: &Mlp, lr: f64) -> Self {
        let shapes: Vec<usize> = net
            .layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect();
        Self::new(&shapes, lr)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step on `params` using `grads` (same slice layout).
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.step(net.param_slices_mut(), &grads.slices());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (net.forward(x) * w).sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    fn check_case(activation: Activation, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.random_range(2..=4);
        let mut sizes = vec![rng.random_range(1..=6)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..=8));
        }
        let net = Mlp::new(&sizes, activation, 1.0, &mut rng).unwrap();
        let batch = rng.random_range(1..=5);
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-2.0..2.0));
        let w = Array2::from_shape_fn((batch, net.output_dim()), |_| rng.random_range(-1.0..1.0));
        let (_, cache) = net.forward_cached(&x);
        let (grads, gx) = net.backward(&cache, &w);
        let analytic = grads.flatten();
        let base = net.flat_params();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..base.len() {
            let mut plus = net.clone();
            let mut p = base.clone();
            p[i] += h;
            plus.set_flat_params(&p).unwrap();
            let mut minus = net.clone();
            p[i] -= 2.0 * h;
            minus.set_flat_params(&p).unwrap();
            let fd = (loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], fd));
        }
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            let fd = (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * h);
            worst = worst.max(rel_err(gx[[r, c]], fd));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for activation in [Activation::Identity, Activation::Relu, Activation::Tanh] {
            for seed in 0..10 {
                let err = check_case(activation, seed);
                assert!(err < 1e-4, "{activation:?} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn cached_forward_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 16, 16, 2], Activation::Relu, 1.0, &mut rng).unwrap();
        let x = Array2::from_shape_fn((7, 4), |_| rng.random_range(-1.0..1.0));
        assert_eq!(net.forward(&x), net.forward_cached(&x).0);
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, 1.0, &mut rng).unwrap();
        let mut other = Mlp::new(&[3, 5, 2], Activation::Tanh, 1.0, &mut rng).unwrap();
        other.set_flat_params(&net.flat_params()).unwrap();
        assert_eq!(net, other);
        assert!(other.set_flat_params(&[0.0; 3]).is_err());
        assert!(Mlp::new(&[3], Activation::Relu, 1.0, &mut rng).is_err());
    }

    #[test]
    fn soft_update_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = Mlp::new(&[3, 8, 1], Activation::Relu, 1.0, &mut rng).unwrap();
        let mut dst = Mlp::new(&[3, 8, 1], Activation::Relu, 1.0, &mut rng).unwrap();
        let before = dst.max_abs_diff(&src);
        dst.soft_update_from(&src, 0.1);
        let after = dst.max_abs_diff(&src);
        assert!((after - 0.9 * before).abs() < 1e-12);
        dst.soft_update_from(&src, 1.0);
        assert_eq!(dst.max_abs_diff(&src), 0.0);
    }

    #[test]
    fn adam_fits_linear_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Mlp::new(&[2, 1], Activation::Identity, 1.0, &mut rng).unwrap();
        let mut opt = Adam::for_mlp(&net, 0.05);
        let x = Array2::from_shape_fn((32, 2), |_| rng.random_range(-1.0..1.0));
        let y = x.column(0).mapv(|v| 2.0 * v) - x.column(1).mapv(|v| 0.5 * v) + 0.3;
        for _ in 0..2000 {
            let (out, cache) = net.forward_cached(&x);
            let diff = &out.column(0) - &y;
            let g = diff.mapv(|d| 2.0 * d / 32.0).insert_axis(Axis(1));
            let (grads, _) = net.backward(&cache, &g);
            opt.step_mlp(&mut net, &grads);
        }
        let l = &net.layers()[0];
        assert!((l.weight[[0, 0]] - 2.0).abs() < 1e-3);
        assert!((l.weight[[1, 0]] + 0.5).abs() < 1e-3);
        assert!((l.bias[0] - 0.3).abs() < 1e-3);
        assert_eq!(opt.steps(), 2000);
    }
}
