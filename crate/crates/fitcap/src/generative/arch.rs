//! Generator, discriminator and encoder networks.

use fitcap_core::Rng;

use crate::nn::layers::{Activation, BatchNorm, Conv2d, ConvTranspose2d, Linear, Pointwise, Reshape};
use crate::nn::{Init, Network};

/// Weight init shared by every generative network.
pub const GAN_INIT: Init = Init::Normal(0.02);

/// FC(in, 1024)+BN+ReLU, FC(1024, 128*7*7)+BN+ReLU,
/// ConvT(128, 64, 4, 2, 1)+BN+ReLU, ConvT(64, 1, 4, 2, 1)+Sigmoid.
/// `input` is the latent size plus the one-hot width when conditional.
pub fn generator(input: usize, rng: &mut Rng) -> Network {
    Network::new(vec![input])
        .push(Linear::new(input, 1024, GAN_INIT, rng))
        .push(BatchNorm::new(1024, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Relu))
        .push(Linear::new(1024, 128 * 7 * 7, GAN_INIT, rng))
        .push(BatchNorm::new(128 * 7 * 7, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Relu))
        .push(Reshape::new(vec![128, 7, 7]))
        .push(ConvTranspose2d::new(128, 64, 4, 2, 1, GAN_INIT, rng))
        .push(BatchNorm::new(64, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Relu))
        .push(ConvTranspose2d::new(64, 1, 4, 2, 1, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Sigmoid))
}

/// Discriminator / critic emitting one logit. `channels` is 1 plus the
/// number of broadcast one-hot label planes when conditional.
pub fn discriminator(channels: usize, rng: &mut Rng) -> Network {
    Network::new(vec![channels, 28, 28])
        .push(Conv2d::new(channels, 64, 4, 2, 1, GAN_INIT, rng))
        .push(Pointwise::new(Activation::LeakyRelu(0.2)))
        .push(Conv2d::new(64, 128, 4, 2, 1, GAN_INIT, rng))
        .push(BatchNorm::new(128, GAN_INIT, rng))
        .push(Pointwise::new(Activation::LeakyRelu(0.2)))
        .push(Reshape::new(vec![128 * 7 * 7]))
        .push(Linear::new(128 * 7 * 7, 1024, GAN_INIT, rng))
        .push(BatchNorm::new(1024, GAN_INIT, rng))
        .push(Pointwise::new(Activation::LeakyRelu(0.2)))
        .push(Linear::new(1024, 1, GAN_INIT, rng))
}

/// Auto-encoding discriminator: conv down to 14x14, a 32-wide code, and a
/// transposed conv back to pixels.
pub fn autoencoder_discriminator(rng: &mut Rng) -> Network {
    Network::new(vec![1, 28, 28])
        .push(Conv2d::new(1, 64, 4, 2, 1, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Relu))
        .push(Reshape::new(vec![64 * 14 * 14]))
        .push(Linear::new(64 * 14 * 14, 32, GAN_INIT, rng))
        .push(BatchNorm::new(32, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Relu))
        .push(Linear::new(32, 64 * 14 * 14, GAN_INIT, rng))
        .push(BatchNorm::new(64 * 14 * 14, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Relu))
        .push(Reshape::new(vec![64, 14, 14]))
        .push(ConvTranspose2d::new(64, 1, 4, 2, 1, GAN_INIT, rng))
        .push(Pointwise::new(Activation::Sigmoid))
}

/// Two fully connected layers to `(mu, logvar)`: FC(in, 1024)+BN+LeakyReLU,
/// FC(1024, 2 * latent). `input` is 784 plus the one-hot width when
/// conditional.
pub fn encoder(input: usize, latent: usize, rng: &mut Rng) -> Network {
    Network::new(vec![input])
        .push(Linear::new(input, 1024, GAN_INIT, rng))
        .push(BatchNorm::new(1024, GAN_INIT, rng))
        .push(Pointwise::new(Activation::LeakyRelu(0.2)))
        .push(Linear::new(1024, 2 * latent, GAN_INIT, rng))
}
