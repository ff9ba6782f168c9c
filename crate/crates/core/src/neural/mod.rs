//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Parameters of a network live in one flat `Vec<f64>`; layer `l` stores its
//! `out x in` weight matrix row-major followed by its bias. Hidden layers use
//! `tanh`, the output layer is linear. Keeping everything flat lets the
//! optimizer and the finite-difference checker treat any network as a plain
//! parameter vector.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod policy;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    Checkpoint, CheckpointError, LayerRecord, NetworkRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use policy::{
    forward_value, gaussian_entropy, gaussian_log_prob, value_backward, FeatureScaler,
    GaussianPolicy, PolicyCache, SampledAction, ValueNet, LOG_2PI, LOG_STD_MAX, LOG_STD_MIN,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("non-finite network input at index {0}")]
    NonFiniteInput(usize),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid layer sizes {0:?}")]
    BadSizes(Vec<usize>),
}

/// Layer widths of a multilayer perceptron, input first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

/// Post-activation values of every layer for one input, input included.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least input layer")
    }
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>) -> Result<Self, NeuralError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NeuralError::BadSizes(sizes));
        }
        Ok(Self { sizes })
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

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offset of layer `l`'s weights and of its bias within the flat vector.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.sizes[..=l]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum();
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        (start, start + n_in * n_out)
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..self.n_layers() {
            a = self.layer(params, l, &a);
        }
        a
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> MlpCache {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let next = self.layer(params, l, acts.last().unwrap());
            acts.push(next);
        }
        MlpCache { acts }
    }

    fn layer(&self, params: &[f64], l: usize, input: &[f64]) -> Vec<f64> {
        let (w_off, b_off) = self.offsets(l);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let hidden = l + 1 < self.n_layers();
        (0..n_out)
            .map(|o| {
                let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
                let z = params[b_off + o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`,
    /// and returns `d loss / d input`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        d_out: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.n_params());
        let mut delta = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < self.n_layers() {
                // tanh'(z) = 1 - tanh(z)^2
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.acts[l];
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                grad[b_off + o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = w_off + o * n_in;
                for i in 0..n_in {
                    grad[row + i] += d * input[i];
                    d_in[i] += d * params[row + i];
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Orthogonal initialization: each weight matrix is a scaled (semi-)orthogonal
    /// matrix, biases start at zero. `output_gain` scales the last layer.
    pub fn init_orthogonal(
        &self,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut impl Rng,
    ) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params()];
        for l in 0..self.n_layers() {
            let (w_off, _) = self.offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == self.n_layers() {
                output_gain
            } else {
                hidden_gain
            };
            let q = orthogonal(n_out, n_in, rng);
            for o in 0..n_out {
                for i in 0..n_in {
                    params[w_off + o * n_in + i] = gain * q[(o, i)];
                }
            }
        }
        params
    }

    /// Weight matrix and bias of layer `l` as slices of `params`.
    pub fn layer_slices<'a>(&self, params: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let (w_off, b_off) = self.offsets(l);
        let n_out = self.sizes[l + 1];
        (&params[w_off..b_off], &params[b_off..b_off + n_out])
    }
}

fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the distribution uniform over orthogonal matrices.
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// A multilayer perceptron that owns its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(sizes: Vec<usize>) -> Result<Self, NeuralError> {
        let shape = MlpShape::new(sizes)?;
        let params = vec![0.0; shape.n_params()];
        Ok(Self { shape, params })
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self, NeuralError> {
        let shape = MlpShape::new(sizes)?;
        if params.len() != shape.n_params() {
            return Err(NeuralError::ShapeMismatch {
                expected: shape.n_params(),
                got: params.len(),
            });
        }
        Ok(Self { shape, params })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.shape.forward(&self.params, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // 2-2-1 network evaluated by hand.
    fn tiny() -> Mlp {
        // layer 0: W = [[0.1, -0.2], [0.3, 0.4]], b = [0.05, -0.05]
        // layer 1: W = [[0.7, -0.6]], b = [0.2]
        Mlp::from_params(
            vec![2, 2, 1],
            vec![0.1, -0.2, 0.3, 0.4, 0.05, -0.05, 0.7, -0.6, 0.2],
        )
        .unwrap()
    }

    #[test]
    fn hand_evaluated_two_two_one() {
        let x = [0.5, -1.5];
        let h0 = (0.1 * 0.5 + -0.2 * -1.5 + 0.05f64).tanh();
        let h1 = (0.3 * 0.5 + 0.4 * -1.5 - 0.05f64).tanh();
        let y = 0.7 * h0 - 0.6 * h1 + 0.2;
        assert!((tiny().forward(&x)[0] - y).abs() < 1e-12);
    }

    #[test]
    fn param_count_and_layout() {
        let s = MlpShape::new(vec![6, 64, 64, 5]).unwrap();
        assert_eq!(s.n_params(), 6 * 64 + 64 + 64 * 64 + 64 + 64 * 5 + 5);
        let m = tiny();
        let (w, b) = m.shape.layer_slices(&m.params, 1);
        assert_eq!(w, &[0.7, -0.6]);
        assert_eq!(b, &[0.2]);
        assert!(MlpShape::new(vec![3]).is_err());
        assert!(Mlp::from_params(vec![2, 1], vec![0.0; 2]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = MlpShape::new(vec![3, 5, 4, 2]).unwrap();
        let params = shape.init_orthogonal(1.0, 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let c = [0.9, -1.3];
        // loss = c . y
        let loss = |p: &[f64]| {
            shape
                .forward(p, &x)
                .iter()
                .zip(c)
                .map(|(y, c)| y * c)
                .sum::<f64>()
        };
        let cache = shape.forward_cached(&params, &x);
        let mut grad = vec![0.0; shape.n_params()];
        shape.backward(&params, &cache, &c, &mut grad);
        let fd = gradcheck::central_difference(loss, &params, 1e-5);
        assert!(gradcheck::max_relative_error(&grad, &fd) < 1e-6);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = orthogonal(4, 7, &mut rng);
        let g = &q * q.transpose();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12);
            }
        }
    }
}
