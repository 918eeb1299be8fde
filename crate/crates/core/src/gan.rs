//! Conditional WGAN-GP oversampler.
//!
//! The critic maximizes E[D(x|y)] - E[D(x_g|y)] under a gradient penalty on
//! interpolated samples; the generator minimizes -E[D(x_g|y)]. One model is
//! trained per dataset, conditioned on the jamming label via one-hot
//! concatenation to the generator input and to the critic input channels.
//! Features travel in tanh space: [0,1] maps to [-1,1] on the way in and
//! back (clamped) on the way out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use jamdet_autodiff::graph::{Graph, Var};
use jamdet_autodiff::nn::{self, BatchNorm1d, Conv1d, Conv1dTranspose, Dense, Dropout};
use jamdet_autodiff::{AutodiffError, OptimKind, Optimizer, Parameter};

use crate::dataset::{Dataset, Origin, SsbObservation};
use crate::seed;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid GAN config: {0}")]
    BadConfig(String),
    #[error("training needs both classes present, got only label {0}")]
    SingleClass(u8),
    #[error("dataset must be normalized before GAN training")]
    NotNormalized,
    #[error("feature length {0} must be a positive multiple of 4")]
    BadFeatureLen(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty sample set")]
    EmptySamples,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GanError>;

/// Training configuration; defaults follow the reference hyperparameters
/// (latent 128, lambda 20, 7 critic steps, batch 64, 20 epochs,
/// Adam(1e-4, 0.5, 0.9)).
#[derive(Debug, Clone, Copy)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            latent_dim: 128,
            lambda_gp: 20.0,
            n_critic: 7,
            batch_size: 64,
            epochs: 20,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0
            || self.batch_size == 0
            || self.epochs == 0
            || self.lambda_gp <= 0.0
            || self.lr <= 0.0
        {
            return Err(GanError::BadConfig(
                "latent_dim, batch_size, epochs, lambda_gp and lr must be positive".into(),
            ));
        }
        if self.n_critic < 1 {
            return Err(GanError::BadConfig("n_critic must be >= 1".into()));
        }
        Ok(())
    }
}

fn one_hot(label: u8) -> [f64; 2] {
    if label == 0 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

/// Conditional generator: latent+label projected to a 128-channel map,
/// then two transposed conv layers (128 -> 64 -> 1) with batchnorm and
/// leaky-relu, tanh output of length q.
pub struct GeneratorNet {
    pub q: usize,
    pub latent_dim: usize,
    project: Dense,
    bn0: BatchNorm1d,
    up1: Conv1dTranspose,
    bn1: BatchNorm1d,
    up2: Conv1dTranspose,
}

impl GeneratorNet {
    pub fn new(q: usize, latent_dim: usize, net_seed: u64) -> Result<Self> {
        if q == 0 || q % 4 != 0 {
            return Err(GanError::BadFeatureLen(q));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(net_seed, "gan.generator.init"));
        let l0 = q / 4;
        Ok(GeneratorNet {
            q,
            latent_dim,
            project: Dense::new("generator.project", latent_dim + 2, 128 * l0, &mut rng),
            bn0: BatchNorm1d::new("generator.bn0", 128, 0.9, 1e-5),
            up1: Conv1dTranspose::new("generator.up1", 128, 64, 4, 2, 1, 0, &mut rng),
            bn1: BatchNorm1d::new("generator.bn1", 64, 0.9, 1e-5),
            up2: Conv1dTranspose::new("generator.up2", 64, 1, 4, 2, 1, 0, &mut rng),
        })
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut p = self.project.params();
        p.extend(self.bn0.params());
        p.extend(self.up1.params());
        p.extend(self.bn1.params());
        p.extend(self.up2.params());
        p
    }

    /// Tanh-space samples (B, q) from latent rows and one-hot labels.
    pub fn forward(&mut self, z: &Var, labels: &Var, train: bool) -> Result<Var> {
        let b = z.shape()[0];
        let l0 = self.q / 4;
        let zy = z.concat_cols(labels)?;
        let h = self.project.forward(&zy)?.reshape(&[b, 128, l0])?;
        let h = self.bn0.forward(&h, train)?.leaky_relu(0.2)?;
        let h = self.up1.forward(&h)?;
        let h = self.bn1.forward(&h, train)?.leaky_relu(0.2)?;
        let out = self.up2.forward(&h)?.tanh();
        Ok(out.reshape(&[b, self.q])?)
    }

    /// Generate `count` class-conditioned rows in [0,1] (eval mode: frozen
    /// batch statistics), clamped after the tanh-to-unit inverse map.
    pub fn sample(&mut self, count: usize, label: u8, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let g = Graph::new();
        let mut zdata = Vec::with_capacity(count * self.latent_dim);
        for _ in 0..count * self.latent_dim {
            let v: f64 = StandardNormal.sample(rng);
            zdata.push(v);
        }
        let z = g.constant(&[count, self.latent_dim], zdata);
        let mut ladata = Vec::with_capacity(count * 2);
        for _ in 0..count {
            ladata.extend_from_slice(&one_hot(label));
        }
        let labels = g.constant(&[count, 2], ladata);
        let out = self.forward(&z, &labels, false)?;
        let vals = out.value();
        Ok((0..count)
            .map(|i| {
                vals[i * self.q..(i + 1) * self.q]
                    .iter()
                    .map(|&v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
                    .collect()
            })
            .collect())
    }
}

/// Conditional critic: label channels concatenated to the input, five conv
/// layers spanning 32 to 512 channels (kernel 3, stride 2), leaky-relu and
/// dropout 0.5, no normalization layers, scalar head.
pub struct CriticNet {
    pub q: usize,
    convs: Vec<Conv1d>,
    drops: Vec<Dropout>,
    head: Dense,
    head_in: usize,
}

fn conv_chain_len(mut l: usize, layers: usize) -> usize {
    for _ in 0..layers {
        l = (l + 2 - 3) / 2 + 1;
    }
    l
}

impl CriticNet {
    pub fn new(q: usize, net_seed: u64) -> Result<Self> {
        if q == 0 {
            return Err(GanError::BadFeatureLen(q));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(net_seed, "gan.critic.init"));
        let chans = [3usize, 32, 64, 128, 256, 512];
        let convs: Vec<Conv1d> = (0..5)
            .map(|i| {
                Conv1d::new(
                    &format!("critic.conv{}", i + 1),
                    chans[i],
                    chans[i + 1],
                    3,
                    2,
                    1,
                    &mut rng,
                )
            })
            .collect();
        let drops = (0..5)
            .map(|i| {
                Dropout::new(
                    0.5,
                    ChaCha8Rng::seed_from_u64(seed::derive_n(net_seed, "gan.critic.dropout", i)),
                )
            })
            .collect();
        let head_in = 512 * conv_chain_len(q, 5);
        Ok(CriticNet {
            q,
            convs,
            drops,
            head: Dense::new("critic.head", head_in, 1, &mut rng),
            head_in,
        })
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut p: Vec<Parameter> = self.convs.iter().flat_map(|c| c.params()).collect();
        p.extend(self.head.params());
        p
    }

    /// Scores (B,1) for tanh-space rows (B, q) and one-hot labels (B, 2).
    pub fn forward(&mut self, x: &Var, labels: &Var, train: bool) -> Result<Var> {
        let s = x.shape();
        if s.len() != 2 || s[1] != self.q {
            return Err(GanError::Shape(format!(
                "critic expects (batch, {}), got {:?}",
                self.q, s
            )));
        }
        let b = s[0];
        let g = x.graph().clone();
        // broadcast each label component across the feature axis and join as
        // two extra channels: (B, q) + (B, 2q) -> (B, 3, q)
        let lv = labels.value();
        let mut lab = Vec::with_capacity(b * 2 * self.q);
        for row in 0..b {
            for c in 0..2 {
                lab.extend(std::iter::repeat(lv[row * 2 + c]).take(self.q));
            }
        }
        let lab = g.constant(&[b, 2 * self.q], lab);
        let mut h = x.concat_cols(&lab)?.reshape(&[b, 3, self.q])?;
        for (conv, drop) in self.convs.iter().zip(self.drops.iter_mut()) {
            h = conv.forward(&h)?.leaky_relu(0.2)?;
            h = drop.forward(&h, train)?;
        }
        let flat = h.reshape(&[b, self.head_in])?;
        Ok(self.head.forward(&flat)?)
    }
}

/// Row-wise convex combination eps*x_real + (1-eps)*x_fake.
pub fn interpolate(
    x_real: &[f64],
    x_fake: &[f64],
    eps: &[f64],
    rows: usize,
    cols: usize,
) -> Result<Vec<f64>> {
    if x_real.len() != rows * cols || x_fake.len() != rows * cols || eps.len() != rows {
        return Err(GanError::Shape(format!(
            "interpolate: real {} fake {} eps {} vs {}x{}",
            x_real.len(),
            x_fake.len(),
            eps.len(),
            rows,
            cols
        )));
    }
    if eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(GanError::Shape("eps components must lie in [0,1]".into()));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let e = eps[r];
        for c in 0..cols {
            out.push(e * x_real[r * cols + c] + (1.0 - e) * x_fake[r * cols + c]);
        }
    }
    Ok(out)
}

/// Critic objective: -mean(d_real) + mean(d_fake) + gp, where `gp` already
/// includes the lambda factor.
pub fn critic_loss(d_real: &[f64], d_fake: &[f64], gp: f64) -> f64 {
    let mr = d_real.iter().sum::<f64>() / d_real.len() as f64;
    let mf = d_fake.iter().sum::<f64>() / d_fake.len() as f64;
    -mr + mf + gp
}

/// Generator objective: -mean(d_fake).
pub fn generator_loss(d_fake: &[f64]) -> f64 {
    -d_fake.iter().sum::<f64>() / d_fake.len() as f64
}

/// lambda * mean((|grad_x D(x)|_2 - 1)^2) as a differentiable graph value;
/// `critic` receives the interpolated input leaf.
pub fn gradient_penalty<F>(g: &Graph, x_hat: &Var, lambda: f64, critic: F) -> Result<Var>
where
    F: FnOnce(&Var) -> Result<Var>,
{
    let out = critic(x_hat)?;
    let norms = nn::input_gradient_norms(&out, x_hat)?;
    let pen = nn::unit_norm_penalty(&norms)?;
    let _ = g;
    Ok(pen.scale(lambda))
}

/// One row of the training history (per generator step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanStep {
    pub step: usize,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub wasserstein: f64,
}

/// Write the loss history as `step,critic_loss,gen_loss,wasserstein_estimate`.
pub fn save_loss_history(history: &[GanStep], path: &std::path::Path) -> Result<()> {
    let mut out = String::from("step,critic_loss,gen_loss,wasserstein_estimate\n");
    for h in history {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            h.step, h.critic_loss, h.gen_loss, h.wasserstein
        ));
    }
    std::fs::write(path, out).map_err(|e| GanError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

struct BatchStream<'a> {
    features: Vec<&'a [f64]>,
    labels: Vec<u8>,
}

/// Alternating optimization: the critic consumes minibatches from the
/// shuffled epoch stream, and after every `n_critic` critic steps the
/// generator takes one step. Seed-deterministic.
pub fn train(config: &GanConfig, ds: &Dataset) -> Result<(GeneratorNet, CriticNet, Vec<GanStep>)> {
    config.validate()?;
    if !ds.normalized {
        return Err(GanError::NotNormalized);
    }
    let n0 = ds.count_label(0);
    let n1 = ds.count_label(1);
    if n0 == 0 {
        return Err(GanError::SingleClass(1));
    }
    if n1 == 0 {
        return Err(GanError::SingleClass(0));
    }
    let q = ds.q();
    let mut gen = GeneratorNet::new(q, config.latent_dim, seed::derive(config.seed, "gan.gen"))?;
    let mut critic = CriticNet::new(q, seed::derive(config.seed, "gan.critic"))?;
    let mut gen_opt = Optimizer::new(
        OptimKind::adam(config.lr, config.beta1, config.beta2),
        gen.params(),
    );
    let mut critic_opt = Optimizer::new(
        OptimKind::adam(config.lr, config.beta1, config.beta2),
        critic.params(),
    );

    // tanh-space copies of the data
    let rows: Vec<Vec<f64>> = ds
        .observations
        .iter()
        .map(|o| o.features.iter().map(|&v| v * 2.0 - 1.0).collect())
        .collect();
    let labels: Vec<u8> = ds.observations.iter().map(|o| o.label).collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "gan.shuffle"));
    let mut latent_rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "gan.latent"));
    let mut eps_rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "gan.eps"));
    let mut genlab_rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "gan.genlabels"));

    let mut history = Vec::new();
    let mut pending_critic: Vec<f64> = Vec::new();
    let mut pending_w: Vec<f64> = Vec::new();
    let mut gen_step = 0usize;
    let mut critic_since_gen = 0usize;

    let sample_z = |rng: &mut ChaCha8Rng, b: usize, dim: usize| -> Vec<f64> {
        (0..b * dim).map(|_| StandardNormal.sample(rng)).collect()
    };

    for _epoch in 0..config.epochs {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        for i in (1..idx.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        for chunk in idx.chunks(config.batch_size) {
            let b = chunk.len();
            let stream = BatchStream {
                features: chunk.iter().map(|&i| rows[i].as_slice()).collect(),
                labels: chunk.iter().map(|&i| labels[i]).collect(),
            };
            // ---- critic step on this minibatch ----
            let g = Graph::new();
            let mut real_flat = Vec::with_capacity(b * q);
            for f in &stream.features {
                real_flat.extend_from_slice(f);
            }
            let mut lab_flat = Vec::with_capacity(b * 2);
            for &l in &stream.labels {
                lab_flat.extend_from_slice(&one_hot(l));
            }
            let x_real = g.constant(&[b, q], real_flat.clone());
            let y = g.constant(&[b, 2], lab_flat);
            let z = g.constant(&[b, config.latent_dim], sample_z(&mut latent_rng, b, config.latent_dim));
            let x_fake_graph = gen.forward(&z, &y, true)?;
            let x_fake = g.constant(&[b, q], x_fake_graph.value()); // detached
            let d_real = critic.forward(&x_real, &y, true)?;
            let d_fake = critic.forward(&x_fake, &y, true)?;
            let eps: Vec<f64> = (0..b).map(|_| eps_rng.gen::<f64>()).collect();
            let x_hat_data = interpolate(&real_flat, &x_fake.value(), &eps, b, q)?;
            let x_hat = g.input(&[b, q], x_hat_data, true);
            let gp = gradient_penalty(&g, &x_hat, config.lambda_gp, |xh| {
                critic.forward(xh, &y, true)
            })?;
            let loss_c = d_real
                .mean_all()
                .neg()
                .add(&d_fake.mean_all())?
                .add(&gp)?;
            critic_opt.zero_grad();
            gen_opt.zero_grad();
            g.backward(&loss_c)?;
            critic_opt.step()?;
            let w_est = mean(&d_real.value()) - mean(&d_fake.value());
            pending_critic.push(loss_c.item());
            pending_w.push(w_est);
            critic_since_gen += 1;

            // ---- generator step every n_critic critic steps ----
            if critic_since_gen == config.n_critic {
                critic_since_gen = 0;
                let g = Graph::new();
                let gb = config.batch_size;
                let z = g.constant(&[gb, config.latent_dim], sample_z(&mut latent_rng, gb, config.latent_dim));
                let mut lab_flat = Vec::with_capacity(gb * 2);
                for _ in 0..gb {
                    lab_flat.extend_from_slice(&one_hot(u8::from(genlab_rng.gen::<bool>())));
                }
                let y = g.constant(&[gb, 2], lab_flat);
                let x_fake = gen.forward(&z, &y, true)?;
                let d_fake = critic.forward(&x_fake, &y, true)?;
                let loss_g = d_fake.mean_all().neg();
                critic_opt.zero_grad();
                gen_opt.zero_grad();
                g.backward(&loss_g)?;
                gen_opt.step()?;
                gen_step += 1;
                history.push(GanStep {
                    step: gen_step,
                    critic_loss: mean(&pending_critic),
                    gen_loss: loss_g.item(),
                    wasserstein: mean(&pending_w),
                });
                pending_critic.clear();
                pending_w.clear();
            }
        }
    }
    Ok((gen, critic, history))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Oversample both classes to `per_class` rows each: real rows are kept
/// unmodified, synthetic rows are drawn class-conditioned in rounds of 250
/// (the final round truncated to the exact need).
pub fn augment_to_balance(
    gen: &mut GeneratorNet,
    ds: &Dataset,
    per_class: usize,
    aug_seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(aug_seed, "gan.augment"));
    let mut observations = ds.observations.clone();
    for label in [0u8, 1u8] {
        let have = ds.count_label(label);
        if have >= per_class {
            continue;
        }
        let mut needed = per_class - have;
        while needed > 0 {
            let take = needed.min(250);
            for features in gen.sample(250, label, &mut rng)?.into_iter().take(take) {
                observations.push(SsbObservation {
                    features,
                    label,
                    origin: Origin::Synthetic,
                });
            }
            needed -= take;
        }
    }
    Ok(Dataset {
        observations,
        profile: ds.profile.clone(),
        normalized: ds.normalized,
        norm_stats: ds.norm_stats.clone(),
    })
}

/// Exact 1-D Wasserstein-1 distance between empirical samples via quantile
/// alignment; for equal sizes this is mean |sorted(a) - sorted(b)|.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GanError::EmptySamples);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let (n, m) = (sa.len(), sb.len());
    let mut total = 0.0;
    let mut q = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    while ia < n && ib < m {
        let qa = (ia + 1) as f64 / n as f64;
        let qb = (ib + 1) as f64 / m as f64;
        let q_next = qa.min(qb);
        total += (q_next - q) * (sa[ia] - sb[ib]).abs();
        q = q_next;
        if qa <= q_next + f64::EPSILON {
            ia += 1;
        }
        if qb <= q_next + f64::EPSILON {
            ib += 1;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::two_gaussian_dataset;

    #[test]
    fn interpolate_endpoints_and_betweenness() {
        let real = vec![1.0, 2.0, 3.0, 4.0];
        let fake = vec![0.0, 0.0, 10.0, 10.0];
        let at_one = interpolate(&real, &fake, &[1.0, 1.0], 2, 2).unwrap();
        assert_eq!(at_one, real);
        let at_zero = interpolate(&real, &fake, &[0.0, 0.0], 2, 2).unwrap();
        assert_eq!(at_zero, fake);
        let mid = interpolate(&real, &fake, &[0.25, 0.75], 2, 2).unwrap();
        for ((&m, &r), &f) in mid.iter().zip(&real).zip(&fake) {
            assert!(m >= r.min(f) - 1e-12 && m <= r.max(f) + 1e-12);
        }
        assert!(interpolate(&real, &fake, &[0.5], 2, 2).is_err());
        assert!(interpolate(&real, &fake, &[0.5, 1.5], 2, 2).is_err());
    }

    #[test]
    fn critic_loss_values() {
        assert!((critic_loss(&[2.0], &[1.0], 0.5) - (-0.5)).abs() < 1e-15);
        assert_eq!(critic_loss(&[1.0, 3.0], &[1.0, 3.0], 0.0), 0.0);
        // shift invariance
        let a = critic_loss(&[0.3, -0.2], &[1.1, 0.4], 0.7);
        let b = critic_loss(&[10.3, 9.8], &[11.1, 10.4], 0.7);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_values() {
        assert_eq!(generator_loss(&[1.0]), -1.0);
        assert_eq!(generator_loss(&[0.0, 2.0]), -1.0);
        assert!(generator_loss(&[0.0, 2.1]) < generator_loss(&[0.0, 2.0]));
    }

    #[test]
    fn gradient_penalty_linear_critic_analytic() {
        // D(x) = w.x: |w|=1 -> 0; |w|=3 with lambda 20 -> 80
        let g = Graph::new();
        let w1 = Parameter::new("w", &[4, 1], vec![0.5, 0.5, 0.5, 0.5]);
        let x = g.input(&[3, 4], vec![0.1; 12], true);
        let pen = gradient_penalty(&g, &x, 20.0, |xh| {
            Ok(xh.matmul(&g.param(&w1))?)
        })
        .unwrap();
        assert!(pen.item().abs() < 1e-9);

        let g = Graph::new();
        let w3 = Parameter::new("w", &[4, 1], vec![1.5, 1.5, 1.5, 1.5]);
        let x = g.input(&[3, 4], vec![-0.3; 12], true);
        let pen = gradient_penalty(&g, &x, 20.0, |xh| {
            Ok(xh.matmul(&g.param(&w3))?)
        })
        .unwrap();
        assert!((pen.item() - 80.0).abs() < 1e-9, "penalty {}", pen.item());
    }

    #[test]
    fn gradient_penalty_is_nonnegative() {
        let g = Graph::new();
        let w = Parameter::new("w", &[4, 1], vec![0.3, -0.9, 0.2, 0.7]);
        let x = g.input(&[2, 4], vec![0.5; 8], true);
        let pen = gradient_penalty(&g, &x, 20.0, |xh| {
            Ok(xh.matmul(&g.param(&w))?.tanh())
        })
        .unwrap();
        assert!(pen.item() >= 0.0);
    }

    #[test]
    fn wasserstein_1d_basics() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((wasserstein_1d(&[0.0], &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
        // unequal sizes: W1 between {0} and {0,1} is 0.5
        let w = wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap();
        assert!((w - 0.5).abs() < 1e-12, "w {w}");
    }

    #[test]
    fn wasserstein_matches_brute_force_assignment() {
        // sorted matching equals the minimum over all 4! assignments
        let a = [0.31, -0.7, 1.2, 0.05];
        let b = [0.9, 0.11, -0.4, 0.6];
        let sorted = wasserstein_1d(&a, &b).unwrap();
        let perms = [
            [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
            [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
            [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
        ];
        let brute = perms
            .iter()
            .map(|p| {
                a.iter()
                    .zip(p.iter())
                    .map(|(&av, &j)| (av - b[j]).abs())
                    .sum::<f64>()
                    / 4.0
            })
            .fold(f64::INFINITY, f64::min);
        assert!((sorted - brute).abs() < 1e-12, "sorted {sorted} brute {brute}");
    }

    #[test]
    fn generator_output_shape_and_range() {
        let mut gen = GeneratorNet::new(16, 8, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = gen.sample(5, 1, &mut rng).unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert_eq!(r.len(), 16);
            assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(GeneratorNet::new(15, 8, 3).is_err());
    }

    #[test]
    fn critic_output_shape() {
        let mut critic = CriticNet::new(16, 4).unwrap();
        let g = Graph::new();
        let x = g.constant(&[3, 16], vec![0.1; 48]);
        let y = g.constant(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let d = critic.forward(&x, &y, false).unwrap();
        assert_eq!(d.shape(), vec![3, 1]);
    }

    #[test]
    fn train_rejects_single_class_and_unnormalized() {
        let ds = two_gaussian_dataset(8, 6, 0.3, 0.05, 5);
        let mut single = ds.clone();
        single.observations.retain(|o| o.label == 1);
        let cfg = GanConfig {
            epochs: 1,
            batch_size: 4,
            n_critic: 1,
            latent_dim: 4,
            ..GanConfig::default()
        };
        assert!(matches!(
            train(&cfg, &single),
            Err(GanError::SingleClass(1))
        ));
        let mut raw = ds.clone();
        raw.normalized = false;
        assert!(matches!(train(&cfg, &raw), Err(GanError::NotNormalized)));
    }

    #[test]
    fn train_is_seed_deterministic() {
        let ds = two_gaussian_dataset(8, 12, 0.3, 0.05, 5);
        let cfg = GanConfig {
            epochs: 2,
            batch_size: 6,
            n_critic: 2,
            latent_dim: 4,
            seed: 11,
            ..GanConfig::default()
        };
        let (_, _, h1) = train(&cfg, &ds).unwrap();
        let (_, _, h2) = train(&cfg, &ds).unwrap();
        assert!(!h1.is_empty());
        assert_eq!(h1, h2);
    }

    #[test]
    fn augment_reaches_exact_balance_and_keeps_real_rows() {
        let ds = two_gaussian_dataset(8, 10, 0.3, 0.05, 5); // 10 per class
        let mut gen = GeneratorNet::new(8, 4, 21).unwrap();
        let out = augment_to_balance(&mut gen, &ds, 300, 9).unwrap();
        assert_eq!(out.count_label(0), 300);
        assert_eq!(out.count_label(1), 300);
        assert_eq!(out.count_origin(Origin::Real), 20);
        // the first rows are the untouched originals
        for (a, b) in ds.observations.iter().zip(&out.observations) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.features, b.features);
        }
        for o in &out.observations {
            if o.origin == Origin::Synthetic {
                assert!(o.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
