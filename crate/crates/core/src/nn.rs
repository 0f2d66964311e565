//! Small fully connected networks with hand-written backprop.
//!
//! Parameters live in one flat vector so that aggregation, optimisers and
//! checkpoints can treat a network as a plain parameter vector. Layer `l`
//! contributes its weight matrix (shape `out × in`, column-major) followed
//! by its bias. Hidden layers use `tanh`; the output layer is affine.

use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass. Column `b` of each matrix
/// is sample `b`.
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("at least the input")
    }
}

fn n_params_for(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl FeedforwardNet {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("layer sizes", format!("{sizes:?} needs ≥2 positive sizes")));
        }
        Ok(FeedforwardNet {
            sizes: sizes.to_vec(),
            params: vec![0.0; n_params_for(sizes)],
        })
    }

    /// Uniform `±1/√fan_in` initialisation; the output layer is further
    /// scaled by `output_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = sizes.len() - 1;
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l + 1 == n_layers { output_scale } else { 1.0 };
            for p in &mut net.params[off..off + fan_in * fan_out + fan_out] {
                *p = scale * rng.gen_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", net.params.len()),
                got: format!("{}", params.len()),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", self.params.len()),
                got: format!("{}", params.len()),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer(&self, l: usize) -> (DMatrixView<'_, f64>, DVectorView<'_, f64>) {
        let off: usize = n_params_for(&self.sizes[..=l]);
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = DMatrixView::from_slice(&self.params[off..off + fan_in * fan_out], fan_out, fan_in);
        let b = DVectorView::from_slice(&self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out], fan_out);
        (w, b)
    }

    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<ForwardCache> {
        if inputs.nrows() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input dim {}", self.input_dim()),
                got: format!("{}", inputs.nrows()),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(inputs.clone());
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let mut z = w * activations.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l + 1 < n_layers {
                z.apply(|x| *x = x.tanh());
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        Ok(self.forward_batch(&x)?.output().column(0).iter().copied().collect())
    }

    /// Gradient of `Σ_b ⟨grad_output[:, b], f(x_b)⟩` with respect to the
    /// flat parameter vector.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &DMatrix<f64>) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = grad_output.clone();
        for l in (0..n_layers).rev() {
            let input = &cache.activations[l];
            let off: usize = n_params_for(&self.sizes[..=l]);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let gw = &delta * input.transpose();
            grad[off..off + fan_in * fan_out].copy_from_slice(gw.as_slice());
            for (r, g) in grad[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].iter_mut().enumerate() {
                *g = delta.row(r).sum();
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut prev = w.transpose() * &delta;
                prev.zip_apply(input, |d, h| *d *= 1.0 - h * h);
                delta = prev;
            }
        }
        grad
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("net serialises")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let net: FeedforwardNet = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "network".into(),
            message: e.to_string(),
        })?;
        Self::from_params(&net.sizes, net.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient steps.
    #[default]
    Sgd,
    Adam,
}

/// First-order optimiser state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let n = if kind == OptimizerKind::Adam { n_params } else { 0 };
        Optimizer {
            kind,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descend along `grad` (pass a negated gradient to ascend).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = FeedforwardNet::zeros(&[4, 64, 64, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let net = FeedforwardNet::from_params(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = FeedforwardNet::zeros(&[4, 8, 1]).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sgd_and_adam_descend() {
        // minimise (p - 3)^2
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 0.1, 1);
            let mut p = [0.0];
            for _ in 0..500 {
                let g = [2.0 * (p[0] - 3.0)];
                opt.step(&mut p, &g);
            }
            assert!((p[0] - 3.0).abs() < 1e-3, "{kind:?} {p:?}");
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = FeedforwardNet::new(&[4, 5, 2], 0.01, &mut rng).unwrap();
        assert_eq!(FeedforwardNet::from_json_str(&net.to_json_string()).unwrap(), net);
    }
}
