//! Losses returning the scalar value and the gradient with respect to the
//! network output.

use super::layers::sigmoid;
use super::Tensor;

/// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
pub fn nll(log_probs: &Tensor, labels: &[usize]) -> (f32, Tensor) {
    let b = log_probs.batch();
    let k = log_probs.item_len();
    assert_eq!(labels.len(), b, "one label per row");
    let mut grad = Tensor::zeros(log_probs.shape.clone());
    let mut loss = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        assert!(y < k, "label {y} out of range for {k} classes");
        loss -= f64::from(log_probs.data[i * k + y]);
        grad.data[i * k + y] = -1.0 / b as f32;
    }
    ((loss / b as f64) as f32, grad)
}

fn bce_logit(l: f32, t: f32) -> f32 {
    l.max(0.0) - l * t + (-l.abs()).exp().ln_1p()
}

/// Binary cross-entropy on logits against a constant target, averaged over
/// all elements.
pub fn bce_with_logits(logits: &Tensor, target: f32) -> (f32, Tensor) {
    let n = logits.data.len() as f32;
    let loss: f64 = logits.data.iter().map(|&l| f64::from(bce_logit(l, target))).sum();
    let grad = logits.data.iter().map(|&l| (sigmoid(l) - target) / n).collect();
    ((loss / f64::from(n)) as f32, Tensor::new(logits.shape.clone(), grad))
}

/// Binary cross-entropy on logits against per-element targets, summed over
/// each item and averaged over the batch.
pub fn bce_with_logits_per_item(logits: &Tensor, targets: &[f32]) -> (f32, Tensor) {
    assert_eq!(logits.data.len(), targets.len());
    let b = logits.batch() as f32;
    let loss: f64 = logits.data.iter().zip(targets).map(|(&l, &t)| f64::from(bce_logit(l, t))).sum();
    let grad = logits.data.iter().zip(targets).map(|(&l, &t)| (sigmoid(l) - t) / b).collect();
    ((loss / f64::from(b)) as f32, Tensor::new(logits.shape.clone(), grad))
}

/// Mean absolute error and its (sub)gradient with respect to `pred`.
pub fn l1(pred: &Tensor, target: &[f32]) -> (f32, Tensor) {
    assert_eq!(pred.data.len(), target.len());
    let n = pred.data.len() as f32;
    let loss: f64 = pred.data.iter().zip(target).map(|(&p, &t)| f64::from((p - t).abs())).sum();
    let grad = pred
        .data
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    ((loss / f64::from(n)) as f32, Tensor::new(pred.shape.clone(), grad))
}

/// KL divergence of `N(mu, exp(logvar))` from `N(0, I)`, summed over latent
/// dimensions and averaged over the batch. Returns `(loss, dmu, dlogvar)`.
pub fn gaussian_kl(mu: &[f32], logvar: &[f32], batch: usize) -> (f32, Vec<f32>, Vec<f32>) {
    let b = batch as f32;
    let mut loss = 0.0f64;
    let mut dmu = Vec::with_capacity(mu.len());
    let mut dlv = Vec::with_capacity(mu.len());
    for (&m, &lv) in mu.iter().zip(logvar) {
        let e = lv.exp();
        loss += 0.5 * f64::from(m * m + e - 1.0 - lv);
        dmu.push(m / b);
        dlv.push(0.5 * (e - 1.0) / b);
    }
    ((loss / f64::from(b)) as f32, dmu, dlv)
}
