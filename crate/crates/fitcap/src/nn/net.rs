//! Sequential container.

use std::ops::Range;

use super::layers::Layer;
use super::{Param, Tensor};

pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Box<dyn Layer>>,
    input_grad: bool,
}

/// Output shape after one layer, for architecture checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTrace {
    pub layer: String,
    pub output_shape: Vec<usize>,
}

/// Copy of every parameter and buffer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub params: Vec<Vec<f32>>,
    pub buffers: Vec<Vec<f32>>,
}

impl Network {
    /// `input_shape` excludes the batch axis.
    pub fn new(input_shape: Vec<usize>) -> Self {
        Network { input_shape, layers: Vec::new(), input_grad: true }
    }

    /// Skip the gradient with respect to the network input (a data batch
    /// nobody differentiates through). `backward` then returns an empty
    /// tensor.
    pub fn without_input_grad(mut self) -> Self {
        self.input_grad = false;
        self
    }

    pub fn push(mut self, layer: impl Layer + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn forward(&mut self, x: Tensor, train: bool) -> Tensor {
        let n = self.layers.len();
        self.forward_range(x, 0..n, train)
    }

    pub fn forward_range(&mut self, mut x: Tensor, range: Range<usize>, train: bool) -> Tensor {
        for layer in &mut self.layers[range] {
            x = layer.forward(x, train);
        }
        x
    }

    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        let n = self.layers.len();
        self.backward_range(grad, 0..n)
    }

    pub fn backward_range(&mut self, mut grad: Tensor, range: Range<usize>) -> Tensor {
        let skip_first = range.start == 0 && !self.input_grad && !range.is_empty();
        let inner = if skip_first { 1..range.end } else { range };
        for layer in self.layers[inner].iter_mut().rev() {
            grad = layer.backward(grad);
        }
        if skip_first {
            self.layers[0].backward_params(grad);
            return Tensor::zeros(vec![0]);
        }
        grad
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.infer_prefix(x, self.layers.len())
    }

    /// Inference through the first `n` layers only.
    pub fn infer_prefix(&self, x: &Tensor, n: usize) -> Tensor {
        let mut out = x.clone();
        for layer in &self.layers[..n] {
            out = layer.infer(&out);
        }
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn grads_finite(&self) -> bool {
        self.params().iter().all(|p| p.grad.iter().all(|g| g.is_finite()))
    }

    pub fn params_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.iter().all(|g| g.is_finite()))
    }

    /// Clamps every parameter into `[-c, c]`.
    pub fn clip_params(&mut self, c: f32) {
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
    }

    pub fn trace(&self) -> Vec<LayerTrace> {
        let mut shape = self.input_shape.clone();
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(&shape);
                LayerTrace { layer: l.name(), output_shape: shape.clone() }
            })
            .collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            params: self.params().iter().map(|p| p.value.clone()).collect(),
            buffers: self.layers.iter().flat_map(|l| l.buffers()).cloned().collect(),
        }
    }

    /// Panics if the snapshot was taken from a different architecture;
    /// callers loading untrusted data check with [`Network::matches`] first.
    pub fn restore(&mut self, snap: &Snapshot) {
        assert!(self.matches(snap), "snapshot does not fit this network");
        for (p, v) in self.params_mut().into_iter().zip(&snap.params) {
            p.value.copy_from_slice(v);
        }
        let mut src = snap.buffers.iter();
        for layer in &mut self.layers {
            for b in layer.buffers_mut() {
                b.copy_from_slice(src.next().expect("buffer count checked"));
            }
        }
    }

    pub fn matches(&self, snap: &Snapshot) -> bool {
        let params = self.params();
        let buffers: Vec<&Vec<f32>> = self.layers.iter().flat_map(|l| l.buffers()).collect();
        params.len() == snap.params.len()
            && params.iter().zip(&snap.params).all(|(p, v)| p.value.len() == v.len())
            && buffers.len() == snap.buffers.len()
            && buffers.iter().zip(&snap.buffers).all(|(b, v)| b.len() == v.len())
    }
}
