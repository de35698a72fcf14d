//! Finite-difference checks of every backward pass.

use fitcap_core::Rng;
use rand::{Rng as _, SeedableRng};

use super::layers::*;
use super::{loss, Init, Network, Tensor};

/// Loss = sum(out * w) for a fixed random `w`, so every output element
/// carries a distinct gradient.
fn probe_loss(net: &mut Network, x: &Tensor, w: &[f32], train: bool) -> f64 {
    let y = net.forward(x.clone(), train);
    y.data.iter().zip(w).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum()
}

fn check(mut net: Network, input_shape: Vec<usize>, train: bool, tol: f64) {
    let mut rng = Rng::seed_from_u64(1);
    let n: usize = input_shape.iter().product();
    let x = Tensor::new(input_shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    let out = net.forward(x.clone(), train);
    let w: Vec<f32> = (0..out.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.zero_grad();
    let dx = net.backward(Tensor::new(out.shape.clone(), w.clone()));

    let h = 1e-2f32;
    let mut worst = 0.0f64;
    for i in (0..n).step_by((n / 25).max(1)) {
        let mut xp = x.clone();
        xp.data[i] += h;
        let mut xm = x.clone();
        xm.data[i] -= h;
        let fd = (probe_loss(&mut net, &xp, &w, train) - probe_loss(&mut net, &xm, &w, train)) / (2.0 * f64::from(h));
        worst = worst.max((fd - f64::from(dx.data[i])).abs() / (1.0 + fd.abs()));
    }
    let grads: Vec<Vec<f32>> = net.params().iter().map(|p| p.grad.clone()).collect();
    for (pi, g) in grads.iter().enumerate() {
        for j in (0..g.len()).step_by((g.len() / 10).max(1)) {
            let orig = net.params()[pi].value[j];
            net.params_mut()[pi].value[j] = orig + h;
            let lp = probe_loss(&mut net, &x, &w, train);
            net.params_mut()[pi].value[j] = orig - h;
            let lm = probe_loss(&mut net, &x, &w, train);
            net.params_mut()[pi].value[j] = orig;
            let fd = (lp - lm) / (2.0 * f64::from(h));
            worst = worst.max((fd - f64::from(g[j])).abs() / (1.0 + fd.abs()));
        }
    }
    assert!(worst < tol, "relative gradient error {worst:e}");
}

fn rng() -> Rng {
    Rng::seed_from_u64(7)
}

#[test]
fn linear() {
    check(Network::new(vec![5]).push(Linear::new(5, 3, Init::FanIn, &mut rng())), vec![4, 5], true, 1e-3);
}

#[test]
fn conv2d_with_padding_and_stride() {
    let net = Network::new(vec![2, 6, 6]).push(Conv2d::new(2, 3, 4, 2, 1, Init::FanIn, &mut rng()));
    check(net, vec![2, 2, 6, 6], true, 1e-3);
}

#[test]
fn conv2d_valid() {
    let net = Network::new(vec![1, 7, 7]).push(Conv2d::new(1, 2, 5, 1, 0, Init::FanIn, &mut rng()));
    check(net, vec![3, 1, 7, 7], true, 1e-3);
}

#[test]
fn conv_transpose() {
    let net = Network::new(vec![3, 3, 3]).push(ConvTranspose2d::new(3, 2, 4, 2, 1, Init::FanIn, &mut rng()));
    check(net, vec![2, 3, 3, 3], true, 1e-3);
}

#[test]
fn batchnorm_train_and_eval() {
    let net = Network::new(vec![3, 2, 2]).push(BatchNorm::new(3, Init::Normal(0.3), &mut rng()));
    check(net, vec![4, 3, 2, 2], true, 2e-3);
    let net = Network::new(vec![3]).push(BatchNorm::new(3, Init::Normal(0.3), &mut rng()));
    check(net, vec![5, 3], false, 1e-3);
}

#[test]
fn activations_and_pooling() {
    // Tolerance is loose enough for the rare kink crossed by the step.
    let net = Network::new(vec![2, 4, 4])
        .push(Pointwise::new(Activation::LeakyRelu(0.2)))
        .push(MaxPool2d::new(2))
        .push(Reshape::new(vec![8]))
        .push(Pointwise::new(Activation::Sigmoid))
        .push(Linear::new(8, 4, Init::FanIn, &mut rng()))
        .push(Pointwise::new(Activation::Relu))
        .push(LogSoftmax::new());
    check(net, vec![3, 2, 4, 4], true, 2e-2);
}

#[test]
fn losses_match_finite_differences() {
    let logits = Tensor::new(vec![2, 3], vec![0.3, -1.2, 2.0, 0.0, 0.5, -0.7]);
    let targets = [1.0, 0.0, 0.3, 0.9, 0.2, 0.0];
    let h = 1e-3;
    let (_, g) = loss::bce_with_logits_per_item(&logits, &targets);
    let (_, g2) = loss::bce_with_logits(&logits, 1.0);
    let (_, g3) = loss::l1(&logits, &targets);
    for i in 0..6 {
        let bump = |d: f32| {
            let mut t = logits.clone();
            t.data[i] += d;
            t
        };
        let fd = (loss::bce_with_logits_per_item(&bump(h), &targets).0 - loss::bce_with_logits_per_item(&bump(-h), &targets).0) / (2.0 * h);
        assert!((fd - g.data[i]).abs() < 1e-3);
        let fd = (loss::bce_with_logits(&bump(h), 1.0).0 - loss::bce_with_logits(&bump(-h), 1.0).0) / (2.0 * h);
        assert!((fd - g2.data[i]).abs() < 1e-3);
        let fd = (loss::l1(&bump(h), &targets).0 - loss::l1(&bump(-h), &targets).0) / (2.0 * h);
        assert!((fd - g3.data[i]).abs() < 1e-3);
    }
    let lp = Tensor::new(vec![2, 3], super::layers::log_softmax_rows(&logits.data, 3));
    let (l, g) = loss::nll(&lp, &[2, 0]);
    assert!((l - (-(lp.data[2] + lp.data[3]) / 2.0)).abs() < 1e-6);
    assert_eq!(g.data, vec![0.0, 0.0, -0.5, -0.5, 0.0, 0.0]);
}

#[test]
fn gaussian_kl_gradient() {
    let mu = [0.5f32, -1.0];
    let lv = [0.2f32, -0.3];
    let (l, dmu, dlv) = loss::gaussian_kl(&mu, &lv, 1);
    // 0.5 * sum(mu^2 + e^lv - 1 - lv)
    let want: f32 = 0.5 * mu.iter().zip(&lv).map(|(m, v)| m * m + v.exp() - 1.0 - v).sum::<f32>();
    assert!((l - want).abs() < 1e-6);
    assert_eq!(dmu, vec![0.5, -1.0]);
    assert!((dlv[0] - 0.5 * (0.2f32.exp() - 1.0)).abs() < 1e-6);
}

#[test]
fn snapshot_round_trip() {
    let mut net = Network::new(vec![3]).push(Linear::new(3, 2, Init::FanIn, &mut rng())).push(BatchNorm::new(2, Init::FanIn, &mut rng()));
    let snap = net.snapshot();
    net.forward(Tensor::new(vec![2, 3], vec![1.0; 6]), true);
    for p in net.params_mut() {
        p.value.iter_mut().for_each(|v| *v += 1.0);
    }
    assert_ne!(net.snapshot(), snap);
    net.restore(&snap);
    assert_eq!(net.snapshot(), snap);
}
