//! The fixed proxy classifiers.

use fitcap_core::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::layers::{Activation, Conv2d, Dropout, Linear, LogSoftmax, MaxPool2d, Pointwise, Reshape};
use crate::nn::{Init, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureId {
    /// conv 5x5/10, conv 5x5/20, FC 320 -> 50 -> K
    MnistCnn,
    /// conv 5x5/16, conv 5x5/32, FC 512 -> K
    FashionCnn,
}

/// Number of leading layers whose output is the flattened post-layer-2
/// activation used for Fréchet distances.
pub const FEATURE_LAYERS: usize = 7;

impl ArchitectureId {
    pub fn feature_dim(self) -> usize {
        match self {
            ArchitectureId::MnistCnn => 320,
            ArchitectureId::FashionCnn => 512,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureId::MnistCnn => "mnist_cnn",
            ArchitectureId::FashionCnn => "fashion_cnn",
        }
    }

    /// Valid 5x5 convolutions: 28 -> 24 -> 12 -> 8 -> 4, so the flattened
    /// layer-2 output is `c2 * 16`.
    pub fn build(self, num_classes: usize, rng: &mut Rng, dropout_seed: u64) -> Network {
        let (c1, c2) = match self {
            ArchitectureId::MnistCnn => (10, 20),
            ArchitectureId::FashionCnn => (16, 32),
        };
        let flat = c2 * 16;
        let net = Network::new(vec![1, 28, 28])
            .push(Conv2d::new(1, c1, 5, 1, 0, Init::FanIn, rng))
            .push(MaxPool2d::new(2))
            .push(Pointwise::new(Activation::Relu))
            .push(Conv2d::new(c1, c2, 5, 1, 0, Init::FanIn, rng))
            .push(MaxPool2d::new(2))
            .push(Pointwise::new(Activation::Relu))
            .push(Reshape::new(vec![flat]))
            .push(Dropout::new(0.5, dropout_seed));
        match self {
            ArchitectureId::MnistCnn => net
                .push(Linear::new(flat, 50, Init::FanIn, rng))
                .push(Pointwise::new(Activation::Relu))
                .push(Linear::new(50, num_classes, Init::FanIn, rng))
                .push(LogSoftmax::new()),
            ArchitectureId::FashionCnn => net.push(Linear::new(flat, num_classes, Init::FanIn, rng)).push(LogSoftmax::new()),
        }
    }
}
