//! A small CPU training engine: dense tensors, layers with hand-written
//! backward passes, losses and Adam. Single-threaded and deterministic.

mod gemm;
pub mod layers;
pub mod loss;
mod net;
mod optim;

pub use gemm::{gemm, Op};
pub use layers::Layer;
pub use net::{LayerTrace, Network, Snapshot};
pub use optim::Adam;

use fitcap_core::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

/// Dense row-major tensor. The first axis is always the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} does not match {} values", data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Values per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "bad reshape to {shape:?}");
        self.shape = shape;
        self
    }

    pub fn item(&self, i: usize) -> &[f32] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-wise argmax of a `(batch, classes)` tensor; the first maximum wins.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.batch())
            .map(|i| {
                let row = self.item(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Trainable values and their accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(value: Vec<f32>) -> Self {
        let grad = vec![0.0; value.len()];
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Weight initialisation schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    FanIn,
    /// Weights `N(0, std)`, biases zero, batch-norm scales `N(1, std)`.
    Normal(f32),
}

impl Init {
    pub(crate) fn weights(self, n: usize, fan_in: usize, rng: &mut Rng) -> Vec<f32> {
        match self {
            Init::FanIn => {
                let b = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.random_range(-b..b)).collect()
            }
            Init::Normal(std) => normal(n, 0.0, std, rng),
        }
    }

    pub(crate) fn bias(self, n: usize, fan_in: usize, rng: &mut Rng) -> Vec<f32> {
        match self {
            Init::FanIn => self.weights(n, fan_in, rng),
            Init::Normal(_) => vec![0.0; n],
        }
    }

    pub(crate) fn bn_scale(self, n: usize, rng: &mut Rng) -> Vec<f32> {
        match self {
            Init::FanIn => vec![1.0; n],
            Init::Normal(std) => normal(n, 1.0, std, rng),
        }
    }
}

pub fn normal(n: usize, mean: f32, std: f32, rng: &mut Rng) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let z: f32 = StandardNormal.sample(rng);
            mean + std * z
        })
        .collect()
}

#[cfg(test)]
mod gradcheck;
