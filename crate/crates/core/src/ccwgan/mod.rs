//! Context-conditional WGAN with gradient penalty.
//!
//! The generator sees a noise-filled partial joint observation concatenated
//! with its binary mask and produces a full-length joint observation. Only the
//! masked entries of that output are used: `ô = m ⊙ o + (1 − m) ⊙ G(õ ∥ m)`.
//! The discriminator scores whole joint vectors, since any subset of agents
//! may be missing.
//!
//! Sign convention: the discriminator minimizes `mean[D(o) − D(ô)] + λ·GP`, so
//! it learns to score real vectors low. The generator therefore descends
//! `mean D(ô)`.

mod buffer;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::visibility::fill_masked;
use crate::env::JointLayout;
use crate::nn::{AdamConfig, Gradient, Mlp, MlpShape, NnError, OutputActivation};

pub use buffer::ObsReplayBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
    pub buffer_capacity: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            n_critic: 5,
            batch_size: 1024,
            hidden: 64,
            generator_adam: AdamConfig::with_lr(1e-4),
            discriminator_adam: AdamConfig::with_lr(1e-4),
            buffer_capacity: 1_000_000,
        }
    }
}

/// A joint observation with a random subset of agents hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    pub full: Vec<f64>,
    pub partial: Vec<f64>,
    pub mask: Vec<f64>,
    pub masked_agents: Vec<usize>,
}

/// Hides `x ~ U{1, …, n−1}` agents chosen without replacement.
pub fn mask_random<R: Rng + ?Sized>(o: &[f64], layout: &JointLayout, rng: &mut R) -> MaskedSample {
    let n = layout.n_agents();
    assert!(n >= 2, "random masking needs at least two agents");
    assert_eq!(o.len(), layout.total_len(), "observation length mismatch");
    let count = rng.random_range(1..n);
    let mut masked_agents = sample_indices(rng, n, count).into_vec();
    masked_agents.sort_unstable();
    let mut missing = vec![false; n];
    for &j in &masked_agents {
        missing[j] = true;
    }
    let mask = layout.mask_for_missing(&missing);
    let partial = fill_masked(o, &mask, rng);
    MaskedSample {
        full: o.to_vec(),
        partial,
        mask,
        masked_agents,
    }
}

/// `m ⊙ x + (1 − m) ⊙ g`.
pub fn combine(x: &[f64], mask: &[f64], generated: &[f64]) -> Vec<f64> {
    assert!(
        x.len() == mask.len() && x.len() == generated.len(),
        "combine length mismatch"
    );
    x.iter()
        .zip(mask)
        .zip(generated)
        .map(|((&x, &m), &g)| m * x + (1.0 - m) * g)
        .collect()
}

fn combine_batch(x: ArrayView2<f64>, mask: ArrayView2<f64>, generated: ArrayView2<f64>) -> Array2<f64> {
    let mut out = generated.to_owned();
    ndarray::Zip::from(&mut out)
        .and(x)
        .and(mask)
        .for_each(|g, &x, &m| *g = m * x + (1.0 - m) * *g);
    out
}

pub fn reconstruction_mse(o: &[f64], inferred: &[f64]) -> f64 {
    assert_eq!(o.len(), inferred.len(), "length mismatch");
    if o.is_empty() {
        return 0.0;
    }
    o.iter().zip(inferred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / o.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanNets {
    pub generator: Mlp,
    pub discriminator: Mlp,
}

/// Value and discriminator gradient of the critic objective.
#[derive(Debug, Clone)]
pub struct DLoss {
    pub total: f64,
    pub wasserstein: f64,
    pub penalty: f64,
    pub grad: Gradient,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GanMetrics {
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_updates: usize,
    pub g_updates: usize,
    pub skipped: bool,
}

impl GanNets {
    pub fn new<R: Rng + ?Sized>(obs_len: usize, hidden: usize, rng: &mut R) -> Self {
        let generator = Mlp::init(
            &MlpShape::three_layer(2 * obs_len, hidden, obs_len, OutputActivation::Linear),
            rng,
        );
        let discriminator = Mlp::init(
            &MlpShape::three_layer(obs_len, hidden, 1, OutputActivation::Linear),
            rng,
        );
        Self {
            generator,
            discriminator,
        }
    }

    pub fn obs_len(&self) -> usize {
        self.discriminator.input_len()
    }

    /// `G(õ ∥ m)`, full length.
    pub fn generate(&self, partial: &[f64], mask: &[f64]) -> Vec<f64> {
        assert_eq!(partial.len(), self.obs_len(), "partial observation length");
        assert_eq!(mask.len(), self.obs_len(), "mask length");
        let input = [partial, mask].concat();
        self.generator.predict(&input)
    }

    /// Fills the masked entries of `partial`; returns it untouched (and skips the
    /// generator) when nothing is masked.
    pub fn infer(&self, partial: &[f64], mask: &[f64]) -> (Vec<f64>, bool) {
        if mask.iter().all(|&m| m == 1.0) {
            return (partial.to_vec(), false);
        }
        let generated = self.generate(partial, mask);
        (combine(partial, mask, &generated), true)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.discriminator.predict(x)[0]
    }
}

fn mean_score(d: &Mlp, x: ArrayView2<f64>) -> f64 {
    d.forward(x).expect("discriminator input").output().mean().unwrap()
}

/// `mean[D(real) − D(fake)]`.
pub fn wasserstein_estimate(d: &Mlp, real: ArrayView2<f64>, fake: ArrayView2<f64>) -> f64 {
    mean_score(d, real) - mean_score(d, fake)
}

/// `mean (‖∇ₓD(x̂)‖ − 1)²` at `x̂ = ε real + (1 − ε) fake`, with one `ε` per row,
/// and its gradient with respect to the discriminator parameters.
pub fn gradient_penalty(
    d: &Mlp,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    eps: &[f64],
) -> Result<(f64, Gradient), NnError> {
    if real.dim() != fake.dim() || eps.len() != real.nrows() {
        return Err(NnError::Shape("gradient penalty operand shapes".into()));
    }
    let batch = real.nrows();
    let mut interp = fake.to_owned();
    for (r, (mut row, real_row)) in interp.outer_iter_mut().zip(real.outer_iter()).enumerate() {
        let e = eps[r];
        row.zip_mut_with(&real_row, |f, &x| *f = e * x + (1.0 - e) * *f);
    }
    let tape = d.forward(interp.view())?;
    let ones = Array2::ones((batch, 1));
    let (_, input_grad) = d.backward(&tape, ones.view())?;
    let mut value = 0.0;
    let mut gamma = Array2::zeros(input_grad.dim());
    for (r, g) in input_grad.outer_iter().enumerate() {
        let norm = g.dot(&g).sqrt();
        value += (norm - 1.0).powi(2);
        if norm > 0.0 {
            let coef = 2.0 * (norm - 1.0) / norm / batch as f64;
            gamma.row_mut(r).assign(&(&g * coef));
        }
    }
    value /= batch as f64;
    let grad = d.double_backward(&tape, ones.view(), gamma.view())?;
    Ok((value, grad))
}

pub fn sample_interpolation<R: Rng + ?Sized>(batch: usize, rng: &mut R) -> Vec<f64> {
    (0..batch).map(|_| rng.random::<f64>()).collect()
}

/// Discriminator objective `mean[D(o) − D(ô)] + λ·GP`; `fake` is treated as a
/// constant input.
pub fn d_loss(
    d: &Mlp,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    lambda_gp: f64,
    eps: &[f64],
) -> Result<DLoss, NnError> {
    let batch = real.nrows();
    if batch == 0 {
        return Err(NnError::Shape("empty discriminator batch".into()));
    }
    if real.dim() != fake.dim() {
        return Err(NnError::Shape("real and fake batches differ".into()));
    }
    let real_tape = d.forward(real)?;
    let fake_tape = d.forward(fake)?;
    let wasserstein = real_tape.output().mean().unwrap() - fake_tape.output().mean().unwrap();
    let weight = Array2::from_elem((batch, 1), 1.0 / batch as f64);
    let (mut grad, _) = d.backward(&real_tape, weight.view())?;
    let (mut fake_grad, _) = d.backward(&fake_tape, weight.view())?;
    fake_grad.scale(-1.0);
    grad.add_assign(&fake_grad);
    let mut penalty = 0.0;
    if lambda_gp != 0.0 {
        let (p, mut pg) = gradient_penalty(d, real, fake, eps)?;
        penalty = p;
        pg.scale(lambda_gp);
        grad.add_assign(&pg);
    }
    Ok(DLoss {
        total: wasserstein + lambda_gp * penalty,
        wasserstein,
        penalty,
        grad,
    })
}

/// Combined batch `m ⊙ o + (1 − m) ⊙ G(õ ∥ m)` together with the generator tape.
fn generate_batch(
    g: &Mlp,
    full: ArrayView2<f64>,
    partial: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> Result<(Array2<f64>, crate::nn::Tape), NnError> {
    let input = concatenate(Axis(1), &[partial, mask]).map_err(|e| NnError::Shape(e.to_string()))?;
    let tape = g.forward(input.view())?;
    let combined = combine_batch(full, mask, tape.output().view());
    Ok((combined, tape))
}

/// `mean D(ô)` and its gradient with respect to the generator parameters.
/// Gradient reaches the generator only through the `(1 − m) ⊙ o_G` term.
pub fn g_loss(
    nets: &GanNets,
    full: ArrayView2<f64>,
    partial: ArrayView2<f64>,
    mask: ArrayView2<f64>,
) -> Result<(f64, Gradient), NnError> {
    let batch = full.nrows();
    if batch == 0 {
        return Err(NnError::Shape("empty generator batch".into()));
    }
    let (combined, g_tape) = generate_batch(&nets.generator, full, partial, mask)?;
    let d_tape = nets.discriminator.forward(combined.view())?;
    let value = d_tape.output().mean().unwrap();
    let weight = Array2::from_elem((batch, 1), 1.0 / batch as f64);
    let (_, d_input) = nets.discriminator.backward(&d_tape, weight.view())?;
    let mut cot = d_input;
    cot.zip_mut_with(&mask, |c, &m| *c *= 1.0 - m);
    let (grad, _) = nets.generator.backward(&g_tape, cot.view())?;
    Ok((value, grad))
}

struct MaskedBatch {
    full: Array2<f64>,
    partial: Array2<f64>,
    mask: Array2<f64>,
}

fn masked_batch<R: Rng + ?Sized>(
    buffer: &ObsReplayBuffer,
    layout: &JointLayout,
    batch: usize,
    rng: &mut R,
) -> MaskedBatch {
    let len = layout.total_len();
    let mut full = Array2::zeros((batch, len));
    let mut partial = Array2::zeros((batch, len));
    let mut mask = Array2::zeros((batch, len));
    for r in 0..batch {
        let o = buffer.sample(rng);
        let s = mask_random(o, layout, rng);
        full.row_mut(r).assign(&ndarray::aview1(&s.full));
        partial.row_mut(r).assign(&ndarray::aview1(&s.partial));
        mask.row_mut(r).assign(&ndarray::aview1(&s.mask));
    }
    MaskedBatch { full, partial, mask }
}

/// `n_critic` discriminator updates followed by one generator update, each on
/// a freshly sampled and randomly masked batch.
pub fn train_step<R: Rng + ?Sized>(
    nets: &mut GanNets,
    buffer: &ObsReplayBuffer,
    layout: &JointLayout,
    cfg: &GanConfig,
    rng: &mut R,
) -> GanMetrics {
    if buffer.is_empty() {
        log::warn!("ccwgan train_step on empty buffer: skipped");
        return GanMetrics {
            skipped: true,
            ..Default::default()
        };
    }
    let mut metrics = GanMetrics::default();
    for _ in 0..cfg.n_critic {
        let b = masked_batch(buffer, layout, cfg.batch_size, rng);
        let (fake, _) =
            generate_batch(&nets.generator, b.full.view(), b.partial.view(), b.mask.view()).expect("generator shapes");
        let eps = sample_interpolation(cfg.batch_size, rng);
        let loss =
            d_loss(&nets.discriminator, b.full.view(), fake.view(), cfg.lambda_gp, &eps).expect("discriminator shapes");
        metrics.d_loss = loss.total;
        if nets
            .discriminator
            .adam_step(&loss.grad, &cfg.discriminator_adam)
            .is_ok()
        {
            metrics.d_updates += 1;
        }
    }
    let b = masked_batch(buffer, layout, cfg.batch_size, rng);
    let (value, grad) = g_loss(nets, b.full.view(), b.partial.view(), b.mask.view()).expect("generator shapes");
    metrics.g_loss = value;
    if nets.generator.adam_step(&grad, &cfg.generator_adam).is_ok() {
        metrics.g_updates += 1;
    }
    metrics
}
