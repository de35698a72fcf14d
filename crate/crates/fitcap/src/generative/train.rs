//! Training loops. Every family is a [`Game`]: one optimisation step per
//! mini-batch, driven by a shared epoch loop that rolls back to the start of
//! the epoch and stops when a step goes non-finite.

use fitcap_core::{LabeledDataset, Rng};
use rand::seq::SliceRandom;

use super::{arch, concat_one_hot, gather, Family, FailureFlag, GeneratorConfig, TrainingReport};
use crate::nn::loss::{bce_with_logits, bce_with_logits_per_item, gaussian_kl, l1};
use crate::nn::{normal, Adam, Network, Snapshot, Tensor};

const PIXELS: usize = 28 * 28;

/// Result of one step: generator-side loss (absent on critic-only steps) and
/// the auxiliary loss. `None` means something went non-finite and no
/// parameters were updated.
type StepResult = Option<(Option<f64>, f64)>;

trait Game {
    fn step(&mut self, batch: &[usize], rng: &mut Rng) -> StepResult;
    fn snapshot(&self) -> Vec<Snapshot>;
    fn restore(&mut self, snaps: &[Snapshot]);
    fn into_generator(self) -> Network;
}

/// Trains the generator network of `cfg.family` on `data`. `classes` is
/// `Some(K)` for conditional families.
pub(super) fn train_network(data: &LabeledDataset, cfg: &GeneratorConfig, classes: Option<usize>, rng: &mut Rng) -> (Network, TrainingReport) {
    let latent = cfg.latent_dim;
    let g_input = latent + classes.unwrap_or(0);
    let d_channels = 1 + classes.unwrap_or(0);
    let lr = cfg.learning_rate as f32;
    let adam = || Adam::new(lr, cfg.param("beta1") as f32, cfg.param("beta2") as f32);
    match cfg.family {
        Family::Vae | Family::Cvae => {
            let dec = arch::generator(g_input, rng);
            let enc = arch::encoder(PIXELS + classes.unwrap_or(0), latent, rng).without_input_grad();
            let game = Vae { enc, dec, enc_opt: adam(), dec_opt: adam(), data, classes, latent };
            drive(game, data.len(), cfg, rng)
        }
        Family::Gan | Family::Cgan | Family::Wgan => {
            let g = arch::generator(g_input, rng);
            let d = arch::discriminator(d_channels, rng);
            let kind = if cfg.family == Family::Wgan {
                Objective::Wasserstein { clip: cfg.param("clip") as f32, critic_steps: cfg.param("critic_steps") as usize }
            } else {
                Objective::Standard
            };
            let game = Adversarial { g, d, g_opt: adam(), d_opt: adam(), data, classes, latent, kind, steps: 0 };
            drive(game, data.len(), cfg, rng)
        }
        Family::Began => {
            let g = arch::generator(g_input, rng);
            let d = arch::autoencoder_discriminator(rng);
            let game = Began {
                g,
                d,
                g_opt: adam(),
                d_opt: adam(),
                data,
                latent,
                gamma: cfg.param("gamma"),
                lambda_k: cfg.param("lambda_k"),
                k: 0.0,
            };
            drive(game, data.len(), cfg, rng)
        }
        f => unreachable!("{f} has no generator network"),
    }
}

/// Shuffled mini-batches of `0..n`. A trailing batch of one is folded away
/// unless it is the only batch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
    }
    batches
}

fn drive<G: Game>(mut game: G, n: usize, cfg: &GeneratorConfig, rng: &mut Rng) -> (Network, TrainingReport) {
    let mut report = TrainingReport::default();
    for epoch in 1..=cfg.epochs {
        let saved = game.snapshot();
        let (mut loss, mut loss_n, mut aux, mut aux_n) = (0.0, 0usize, 0.0, 0usize);
        let mut failed = false;
        for batch in epoch_batches(n, cfg.batch_size, rng) {
            match game.step(&batch, rng) {
                Some((g, a)) => {
                    if let Some(g) = g {
                        loss += g;
                        loss_n += 1;
                    }
                    aux += a;
                    aux_n += 1;
                }
                None => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            game.restore(&saved);
            report.flags.push(FailureFlag::NonFinite { epoch, class: None });
            break;
        }
        report.loss_trace.push(loss / loss_n.max(1) as f64);
        report.aux_trace.push(aux / aux_n.max(1) as f64);
    }
    (game.into_generator(), report)
}

fn finite(v: f32) -> Option<f64> {
    v.is_finite().then_some(f64::from(v))
}

fn image_batch(data: &LabeledDataset, batch: &[usize]) -> Tensor {
    Tensor::new(vec![batch.len(), 1, 28, 28], gather(data, batch))
}

fn labels_of(data: &LabeledDataset, batch: &[usize]) -> Vec<usize> {
    batch.iter().map(|&i| data.label(i)).collect()
}

/// Appends `classes` constant planes holding the one-hot label to each
/// single-channel image.
fn with_label_planes(x: &Tensor, labels: &[usize], classes: usize) -> Tensor {
    let b = x.batch();
    let mut out = Vec::with_capacity(b * (1 + classes) * PIXELS);
    for (i, &y) in labels.iter().enumerate() {
        out.extend_from_slice(x.item(i));
        for c in 0..classes {
            let v = if c == y { 1.0 } else { 0.0 };
            out.extend(std::iter::repeat_n(v, PIXELS));
        }
    }
    Tensor::new(vec![b, 1 + classes, 28, 28], out)
}

/// Gradient for the image channel only.
fn image_channel(grad: Tensor) -> Tensor {
    let b = grad.batch();
    let per = grad.item_len();
    if per == PIXELS {
        return grad.reshape(vec![b, 1, 28, 28]);
    }
    let data = grad.data.chunks_exact(per).flat_map(|item| item[..PIXELS].iter().copied()).collect();
    Tensor::new(vec![b, 1, 28, 28], data)
}

fn latent_input(latent: usize, labels: &[usize], classes: Option<usize>, rng: &mut Rng) -> Tensor {
    let b = labels.len();
    let z = normal(b * latent, 0.0, 1.0, rng);
    match classes {
        Some(k) => Tensor::new(vec![b, latent + k], concat_one_hot(&z, latent, labels, k)),
        None => Tensor::new(vec![b, latent], z),
    }
}

struct Vae<'a> {
    enc: Network,
    dec: Network,
    enc_opt: Adam,
    dec_opt: Adam,
    data: &'a LabeledDataset,
    classes: Option<usize>,
    latent: usize,
}

impl Game for Vae<'_> {
    fn step(&mut self, batch: &[usize], rng: &mut Rng) -> StepResult {
        let b = batch.len();
        let l = self.latent;
        let x = gather(self.data, batch);
        let labels = labels_of(self.data, batch);
        let enc_in = match self.classes {
            Some(k) => Tensor::new(vec![b, PIXELS + k], concat_one_hot(&x, PIXELS, &labels, k)),
            None => Tensor::new(vec![b, PIXELS], x.clone()),
        };
        let h = self.enc.forward(enc_in, true);
        let (mut mu, mut logvar) = (Vec::with_capacity(b * l), Vec::with_capacity(b * l));
        for row in h.data.chunks_exact(2 * l) {
            mu.extend_from_slice(&row[..l]);
            logvar.extend_from_slice(&row[l..]);
        }
        let eps = normal(b * l, 0.0, 1.0, rng);
        let std: Vec<f32> = logvar.iter().map(|v| (0.5 * v).exp()).collect();
        let z: Vec<f32> = mu.iter().zip(&std).zip(&eps).map(|((m, s), e)| m + s * e).collect();
        let dec_in = match self.classes {
            Some(k) => Tensor::new(vec![b, l + k], concat_one_hot(&z, l, &labels, k)),
            None => Tensor::new(vec![b, l], z),
        };
        // Everything but the final sigmoid: the reconstruction term works on logits.
        let body = 0..self.dec.len() - 1;
        let logits = self.dec.forward_range(dec_in, body.clone(), true);
        let (rec, g) = bce_with_logits_per_item(&logits, &x);
        let (kl, dmu, dlv) = gaussian_kl(&mu, &logvar, b);
        let loss = finite(rec + kl)?;
        self.enc.zero_grad();
        self.dec.zero_grad();
        let dz = self.dec.backward_range(g, body);
        let width = dz.item_len();
        let mut dh = Vec::with_capacity(b * 2 * l);
        for i in 0..b {
            let dzi = &dz.data[i * width..i * width + l];
            let r = i * l..(i + 1) * l;
            dh.extend(dzi.iter().zip(&dmu[r.clone()]).map(|(a, c)| a + c));
            dh.extend((0..l).map(|j| {
                let t = r.start + j;
                dzi[j] * eps[t] * 0.5 * std[t] + dlv[t]
            }));
        }
        self.enc.backward(Tensor::new(vec![b, 2 * l], dh));
        if !(self.enc.grads_finite() && self.dec.grads_finite()) {
            return None;
        }
        self.enc_opt.step(&mut self.enc);
        self.dec_opt.step(&mut self.dec);
        Some((Some(loss), f64::from(kl)))
    }

    fn snapshot(&self) -> Vec<Snapshot> {
        vec![self.enc.snapshot(), self.dec.snapshot()]
    }

    fn restore(&mut self, snaps: &[Snapshot]) {
        self.enc.restore(&snaps[0]);
        self.dec.restore(&snaps[1]);
    }

    fn into_generator(self) -> Network {
        self.dec
    }
}

enum Objective {
    /// Non-saturating binary cross-entropy game.
    Standard,
    /// Critic with weight clipping; the generator steps once per
    /// `critic_steps` critic steps.
    Wasserstein { clip: f32, critic_steps: usize },
}

struct Adversarial<'a> {
    g: Network,
    d: Network,
    g_opt: Adam,
    d_opt: Adam,
    data: &'a LabeledDataset,
    classes: Option<usize>,
    latent: usize,
    kind: Objective,
    steps: usize,
}

fn mean(t: &Tensor) -> f32 {
    t.data.iter().sum::<f32>() / t.data.len() as f32
}

impl Game for Adversarial<'_> {
    fn step(&mut self, batch: &[usize], rng: &mut Rng) -> StepResult {
        let b = batch.len();
        let labels = labels_of(self.data, batch);
        let real = image_batch(self.data, batch);
        let z = latent_input(self.latent, &labels, self.classes, rng);
        let fake = self.g.forward(z, true);
        let (real_in, fake_in) = match self.classes {
            Some(k) => (with_label_planes(&real, &labels, k), with_label_planes(&fake, &labels, k)),
            None => (real, fake.clone()),
        };

        self.d.zero_grad();
        let out_r = self.d.forward(real_in, true);
        let d_loss = match self.kind {
            Objective::Standard => {
                let (lr, gr) = bce_with_logits(&out_r, 1.0);
                self.d.backward(gr);
                let out_f = self.d.forward(fake_in.clone(), true);
                let (lf, gf) = bce_with_logits(&out_f, 0.0);
                self.d.backward(gf);
                lr + lf
            }
            Objective::Wasserstein { .. } => {
                let mr = mean(&out_r);
                self.d.backward(Tensor::new(out_r.shape.clone(), vec![-1.0 / b as f32; b]));
                let out_f = self.d.forward(fake_in.clone(), true);
                let mf = mean(&out_f);
                self.d.backward(Tensor::new(out_f.shape.clone(), vec![1.0 / b as f32; b]));
                mf - mr
            }
        };
        let d_loss = finite(d_loss)?;
        if !self.d.grads_finite() {
            return None;
        }
        self.d_opt.step(&mut self.d);
        if let Objective::Wasserstein { clip, .. } = self.kind {
            self.d.clip_params(clip);
        }

        self.steps += 1;
        let g_turn = match self.kind {
            Objective::Standard => true,
            Objective::Wasserstein { critic_steps, .. } => self.steps % critic_steps == 0,
        };
        if !g_turn {
            return Some((None, d_loss));
        }
        self.d.zero_grad();
        let out = self.d.forward(fake_in, true);
        let (g_loss, grad) = match self.kind {
            Objective::Standard => bce_with_logits(&out, 1.0),
            Objective::Wasserstein { .. } => (-mean(&out), Tensor::new(out.shape.clone(), vec![-1.0 / b as f32; b])),
        };
        let g_loss = finite(g_loss)?;
        let dx = image_channel(self.d.backward(grad));
        self.g.zero_grad();
        self.g.backward(dx);
        if !self.g.grads_finite() {
            return None;
        }
        self.g_opt.step(&mut self.g);
        Some((Some(g_loss), d_loss))
    }

    fn snapshot(&self) -> Vec<Snapshot> {
        vec![self.g.snapshot(), self.d.snapshot()]
    }

    fn restore(&mut self, snaps: &[Snapshot]) {
        self.g.restore(&snaps[0]);
        self.d.restore(&snaps[1]);
    }

    fn into_generator(self) -> Network {
        self.g
    }
}

/// Boundary-equilibrium game with an auto-encoding discriminator and the
/// proportional control variable `k`.
struct Began<'a> {
    g: Network,
    d: Network,
    g_opt: Adam,
    d_opt: Adam,
    data: &'a LabeledDataset,
    latent: usize,
    gamma: f64,
    lambda_k: f64,
    k: f64,
}

impl Game for Began<'_> {
    fn step(&mut self, batch: &[usize], rng: &mut Rng) -> StepResult {
        let real = image_batch(self.data, batch);
        let labels = labels_of(self.data, batch);
        let z = latent_input(self.latent, &labels, None, rng);
        let fake = self.g.forward(z, true);

        self.d.zero_grad();
        let out_r = self.d.forward(real.clone(), true);
        let (loss_real, gr) = l1(&out_r, &real.data);
        self.d.backward(gr);
        let out_f = self.d.forward(fake.clone(), true);
        let (loss_fake, mut gf) = l1(&out_f, &fake.data);
        let k = self.k as f32;
        gf.data.iter_mut().for_each(|g| *g *= -k);
        self.d.backward(gf);
        let d_loss = finite(loss_real - k * loss_fake)?;
        if !self.d.grads_finite() {
            return None;
        }
        self.d_opt.step(&mut self.d);

        // d/dv mean|D(v) - v| = J^T s - s with s = sign(D(v) - v) / N.
        self.d.zero_grad();
        let out = self.d.forward(fake.clone(), true);
        let (g_loss, s) = l1(&out, &fake.data);
        let g_loss = finite(g_loss)?;
        let mut dx = self.d.backward(s.clone());
        for (d, s) in dx.data.iter_mut().zip(&s.data) {
            *d -= s;
        }
        self.g.zero_grad();
        self.g.backward(dx);
        if !self.g.grads_finite() {
            return None;
        }
        self.g_opt.step(&mut self.g);
        self.k = (self.k + self.lambda_k * (self.gamma * f64::from(loss_real) - g_loss)).clamp(0.0, 1.0);
        Some((Some(g_loss), d_loss))
    }

    fn snapshot(&self) -> Vec<Snapshot> {
        vec![self.g.snapshot(), self.d.snapshot()]
    }

    fn restore(&mut self, snaps: &[Snapshot]) {
        self.g.restore(&snaps[0]);
        self.d.restore(&snaps[1]);
    }

    fn into_generator(self) -> Network {
        self.g
    }
}
