//! View augmentation, the InfoNCE objective on invariant embeddings, and a
//! deterministic trainer.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::encoder::{backward, encode_with_cache, EncoderParams};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::math;

pub use crate::canonicalize::normalize_coords;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    pub jitter_sigma: f64,
    pub dropout_frac: f64,
    pub insert_frac: f64,
    pub crop_frac: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            jitter_sigma: 0.1,
            dropout_frac: 0.1,
            insert_frac: 0.1,
            crop_frac: 0.1,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn none() -> Self {
        AugmentationConfig {
            jitter_sigma: 0.0,
            dropout_frac: 0.0,
            insert_frac: 0.0,
            crop_frac: 0.0,
            seed: 0,
        }
    }

    /// Jitter σ and a single fraction for dropout, insertion and cropping.
    pub fn uniform(sigma: f64, frac: f64) -> Self {
        AugmentationConfig {
            jitter_sigma: sigma,
            dropout_frac: frac,
            insert_frac: frac,
            crop_frac: frac,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::InvalidConfig("augment.jitter_sigma must be nonnegative"));
        }
        for f in [self.dropout_frac, self.insert_frac, self.crop_frac] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidConfig("augment fractions must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

fn count(frac: f64, n: usize) -> usize {
    math::floor(frac * n as f64) as usize
}

/// Size of the output of [`augment`] for an input of `n` points.
pub fn augmented_len(n: usize, cfg: &AugmentationConfig) -> usize {
    let n1 = n - count(cfg.dropout_frac, n);
    let n2 = n1 + count(cfg.insert_frac, n1);
    n2 - count(cfg.crop_frac, n2)
}

fn jitter<R: Rng + ?Sized>(p: Vec3, noise: Option<&Normal<f64>>, rng: &mut R) -> Vec3 {
    match noise {
        Some(d) => p + Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng)),
        None => p,
    }
}

/// Removes the ⌊frac·N⌋ points with the largest projection on `direction`
/// (ties remove the lower index first). Survivors keep their order.
pub fn crop_along(cloud: &PointCloud, frac: f64, direction: Vec3) -> Result<PointCloud> {
    let n = cloud.len();
    let remove = count(frac, n);
    if remove >= n {
        return Err(Error::TooFewPoints { needed: remove + 1, found: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let proj: Vec<f64> = cloud.points.iter().map(|p| p.dot(direction)).collect();
    order.sort_by(|&a, &b| proj[b].partial_cmp(&proj[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut keep = vec![true; n];
    for &i in &order[..remove] {
        keep[i] = false;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    Ok(cloud.select(&kept))
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if let Some(d) = v.try_normalize(1e-9) {
            return d;
        }
    }
}

/// Jitter → dropout → insertion → crop, all driven by `rng`.
pub fn augment<R: Rng + ?Sized>(cloud: &PointCloud, cfg: &AugmentationConfig, rng: &mut R) -> Result<PointCloud> {
    cfg.validate()?;
    if cloud.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, found: cloud.len() });
    }
    let noise = if cfg.jitter_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.jitter_sigma).map_err(|_| Error::InvalidConfig("augment.jitter_sigma"))?)
    } else {
        None
    };
    let mut out = cloud.map_points(|p| jitter(p, noise.as_ref(), rng));

    let drop = count(cfg.dropout_frac, out.len());
    if drop > 0 {
        if drop >= out.len() {
            return Err(Error::TooFewPoints { needed: drop + 1, found: out.len() });
        }
        let mut keep = vec![true; out.len()];
        for i in index::sample(rng, out.len(), drop) {
            keep[i] = false;
        }
        let kept: Vec<usize> = (0..out.len()).filter(|&i| keep[i]).collect();
        out = out.select(&kept);
    }

    let insert = count(cfg.insert_frac, out.len());
    if insert > 0 {
        let mut picks = index::sample(rng, out.len(), insert).into_vec();
        picks.sort_unstable();
        for i in picks {
            let p = jitter(out.points[i], noise.as_ref(), rng);
            out.points.push(p);
            if let Some(l) = out.labels.as_mut() {
                let tag = l[i];
                l.push(tag);
            }
        }
    }

    if count(cfg.crop_frac, out.len()) > 0 {
        let d = random_direction(rng);
        out = crop_along(&out, cfg.crop_frac, d)?;
    }
    Ok(out)
}

/// ⟨a,b⟩ / (‖a‖‖b‖).
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: a.len(), found: b.len() });
    }
    let na = math::sqrt(a.iter().map(|v| v * v).sum());
    let nb = math::sqrt(b.iter().map(|v| v * v).sum());
    if !(na > 1e-12) || !(nb > 1e-12) {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Matched anchor/positive embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
}

fn validate_batch(batch: &ContrastiveBatch, tau: f64) -> Result<usize> {
    let b = batch.anchors.len();
    if batch.positives.len() != b {
        return Err(Error::ShapeMismatch { expected: b, found: batch.positives.len() });
    }
    if b < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: b });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("tau must be positive"));
    }
    Ok(b)
}

/// Symmetrized InfoNCE: the mean over anchors of −log softmax of the positive
/// among all B candidates (positive included), averaged over both directions.
pub fn info_nce(batch: &ContrastiveBatch, tau: f64) -> Result<f64> {
    Ok(info_nce_with_grad(batch, tau)?.0)
}

/// Loss plus its gradient with respect to every anchor and positive embedding.
pub fn info_nce_with_grad(batch: &ContrastiveBatch, tau: f64) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let b = validate_batch(batch, tau)?;
    let mut sim = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            sim[i][j] = cosine_sim(&batch.anchors[i], &batch.positives[j])?;
        }
    }
    let logits: Vec<Vec<f64>> = sim.iter().map(|r| r.iter().map(|s| s / tau).collect()).collect();
    let row_lse: Vec<f64> = logits.iter().map(|r| math::log_sum_exp(r)).collect();
    let col_lse: Vec<f64> = (0..b)
        .map(|j| math::log_sum_exp(&(0..b).map(|i| logits[i][j]).collect::<Vec<_>>()))
        .collect();
    let mut l12 = 0.0;
    let mut l21 = 0.0;
    for i in 0..b {
        l12 += row_lse[i] - logits[i][i];
        l21 += col_lse[i] - logits[i][i];
    }
    let loss = 0.5 * (l12 + l21) / b as f64;

    // dL/dS_ij
    let scale = 1.0 / (2.0 * b as f64 * tau);
    let mut g_sim = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            let row = math::exp(logits[i][j] - row_lse[i]);
            let col = math::exp(logits[i][j] - col_lse[j]);
            let diag = if i == j { 2.0 } else { 0.0 };
            g_sim[i][j] = scale * (row + col - diag);
        }
    }
    let norm = |v: &[f64]| math::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    let na: Vec<f64> = batch.anchors.iter().map(|a| norm(a)).collect();
    let np: Vec<f64> = batch.positives.iter().map(|p| norm(p)).collect();
    let dim = batch.anchors[0].len();
    let mut g_a = vec![vec![0.0; dim]; b];
    let mut g_p = vec![vec![0.0; dim]; b];
    for i in 0..b {
        for j in 0..b {
            let g = g_sim[i][j];
            if g == 0.0 {
                continue;
            }
            let (a, p) = (&batch.anchors[i], &batch.positives[j]);
            let s = sim[i][j];
            let inv = 1.0 / (na[i] * np[j]);
            for d in 0..dim {
                g_a[i][d] += g * (p[d] * inv - s * a[d] / (na[i] * na[i]));
                g_p[j][d] += g * (a[d] * inv - s * p[d] / (np[j] * np[j]));
            }
        }
    }
    Ok((loss, g_a, g_p))
}

/// InfoNCE over the encoder's invariant embeddings of each view pair, with
/// the gradient for every weight (flat, in [`EncoderParams::to_flat`] order).
pub fn loss_and_grads(params: &EncoderParams, view_pairs: &[(PointCloud, PointCloud)], tau: f64) -> Result<(f64, Vec<f64>)> {
    if view_pairs.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: view_pairs.len() });
    }
    let mut anchors = Vec::with_capacity(view_pairs.len());
    let mut positives = Vec::with_capacity(view_pairs.len());
    let mut caches = Vec::with_capacity(view_pairs.len() * 2);
    for (a, p) in view_pairs {
        let (oa, ca) = encode_with_cache(params, a)?;
        let (op, cp) = encode_with_cache(params, p)?;
        anchors.push(oa.z);
        positives.push(op.z);
        caches.push((ca, cp));
    }
    let (loss, g_a, g_p) = info_nce_with_grad(&ContrastiveBatch { anchors, positives }, tau)?;
    let mut grad = vec![0.0; params.num_params()];
    for ((ca, cp), (ga, gp)) in caches.iter().zip(g_a.iter().zip(&g_p)) {
        for (cache, gz) in [(ca, ga), (cp, gp)] {
            for (acc, g) in grad.iter_mut().zip(backward(params, cache, gz, Vec3::ZERO, Vec3::ZERO)) {
                *acc += g;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    /// Adaptive moment estimation.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// Optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, lr: f64, len: usize) -> Self {
        OptimizerState {
            kind,
            lr,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - math::powi(beta1, self.step as i32);
                let c2 = 1.0 - math::powi(beta2, self.step as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.lr * mh / (math::sqrt(vh) + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.1,
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            optimizer: Optimizer::ADAM,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig("contrastive.tau must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("contrastive.lr must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("contrastive.batch_size must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

/// Splits `order` into chunks of `size`; a trailing singleton joins the previous chunk.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(|c| c.to_vec()).collect();
    if out.len() > 1 && out.last().is_some_and(|c| c.len() < 2) {
        let last = out.pop().unwrap_or_default();
        if let Some(prev) = out.last_mut() {
            prev.extend(last);
        }
    }
    out
}

/// Contrastive training on pairs of independently augmented views of each
/// instance. Instances are normalized first; both views go through the same
/// encoder. Deterministic for a given `train_cfg.seed`.
pub fn train(
    params: &EncoderParams,
    dataset: &[PointCloud],
    aug_cfg: &AugmentationConfig,
    train_cfg: &TrainConfig,
) -> Result<(EncoderParams, Vec<LossRecord>)> {
    train_cfg.validate()?;
    aug_cfg.validate()?;
    if dataset.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: dataset.len() });
    }
    let normalized: Vec<PointCloud> = dataset.iter().map(|c| normalize_coords(c).0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut current = params.clone();
    let mut flat = current.to_flat();
    let mut opt = OptimizerState::new(train_cfg.optimizer, train_cfg.lr, flat.len());
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..train_cfg.epochs {
        order.shuffle(&mut rng);
        for batch in batches(&order, train_cfg.batch_size) {
            let mut pairs = Vec::with_capacity(batch.len());
            for &i in &batch {
                let a = augment(&normalized[i], aug_cfg, &mut rng)?;
                let b = augment(&normalized[i], aug_cfg, &mut rng)?;
                pairs.push((normalize_coords(&a).0, normalize_coords(&b).0));
            }
            let (loss, grad) = loss_and_grads(&current, &pairs, train_cfg.tau)?;
            history.push(LossRecord {
                step: history.len(),
                epoch,
                loss,
            });
            opt.update(&mut flat, &grad);
            current.set_flat(&flat)?;
        }
    }
    Ok((current, history))
}

/// Mean pairwise cosine similarity within and across groups, skipping self-pairs.
pub fn cluster_similarity(embeddings: &[Vec<f64>], groups: &[usize]) -> Result<(f64, f64)> {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let s = cosine_sim(&embeddings[i], &embeddings[j])?;
            if groups[i] == groups[j] {
                intra += s;
                ni += 1;
            } else {
                inter += s;
                nx += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok((mean(intra, ni), mean(inter, nx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderArch, InvariantFeatures, Lift};
    use crate::geometry::random_rotation;

    fn blob(seed: u64, n: usize, stretch: Vec3) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0) * stretch.x, rng.random_range(-1.0..1.0) * stretch.y, rng.random_range(-1.0..1.0) * stretch.z))
                .collect(),
        );
        normalize_coords(&c).0
    }

    #[test]
    fn zero_config_is_identity() {
        let c = blob(1, 20, Vec3::new(1.0, 1.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&c, &AugmentationConfig::none(), &mut rng).unwrap(), c);
    }

    #[test]
    fn dropout_removes_one_of_ten() {
        let c = blob(2, 10, Vec3::new(1.0, 1.0, 1.0));
        let cfg = AugmentationConfig { dropout_frac: 0.1, ..AugmentationConfig::none() };
        let out = augment(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(out.len(), 9);
        assert!(out.points.iter().all(|p| c.points.contains(p)));
    }

    #[test]
    fn crop_keeps_the_low_half() {
        let line = PointCloud::new((0..4).map(|i| Vec3::new(0.0, 0.0, -1.0 + 2.0 * i as f64 / 3.0)).collect());
        let out = crop_along(&line, 0.5, Vec3::Z).unwrap();
        assert_eq!(out.points, line.points[..2].to_vec());
    }

    #[test]
    fn augment_sizes_follow_floor_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(4..200);
            let cfg = AugmentationConfig {
                jitter_sigma: rng.random_range(0.0..0.2),
                dropout_frac: rng.random_range(0.0..0.5),
                insert_frac: rng.random_range(0.0..0.5),
                crop_frac: rng.random_range(0.0..0.5),
                seed: 0,
            };
            let c = blob(n as u64, n, Vec3::new(1.0, 0.5, 0.2));
            let out = augment(&c, &cfg, &mut rng).unwrap();
            let d = (cfg.dropout_frac * n as f64).floor() as usize;
            let n1 = n - d;
            let n2 = n1 + (cfg.insert_frac * n1 as f64).floor() as usize;
            let expected = n2 - (cfg.crop_frac * n2 as f64).floor() as usize;
            assert_eq!(out.len(), expected);
            assert_eq!(augmented_len(n, &cfg), expected);
        }
    }

    #[test]
    fn augment_is_deterministic_and_checks_input() {
        let c = blob(3, 50, Vec3::new(1.0, 1.0, 1.0));
        let cfg = AugmentationConfig::default();
        let a = augment(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = augment(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(augment(&PointCloud::new(vec![Vec3::X; 3]), &cfg, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::TooFewPoints { .. })));
        let bad = AugmentationConfig { dropout_frac: 1.0, ..cfg };
        assert!(augment(&c, &bad, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn info_nce_closed_forms() {
        let z = vec![0.3, -0.2, 0.9];
        let batch = ContrastiveBatch { anchors: vec![z.clone(); 4], positives: vec![z.clone(); 4] };
        assert!((info_nce(&batch, 0.1).unwrap() - 4f64.ln()).abs() <= 1e-9);
        let batch = ContrastiveBatch {
            anchors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            positives: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let expected = (1.0 + (-10f64).exp()).ln();
        assert!((info_nce(&batch, 0.1).unwrap() - expected).abs() <= 1e-9);
    }

    #[test]
    fn info_nce_is_scale_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rv = || (0..5).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let batch = ContrastiveBatch { anchors: (0..4).map(|_| rv()).collect(), positives: (0..4).map(|_| rv()).collect() };
        let base = info_nce(&batch, 0.1).unwrap();
        assert!(base >= 0.0);
        let mut scaled = batch.clone();
        scaled.anchors[2].iter_mut().for_each(|v| *v *= 7.5);
        assert!((info_nce(&scaled, 0.1).unwrap() - base).abs() < 1e-12);
        let perm = [2, 0, 3, 1];
        let permuted = ContrastiveBatch {
            anchors: perm.iter().map(|&i| batch.anchors[i].clone()).collect(),
            positives: perm.iter().map(|&i| batch.positives[i].clone()).collect(),
        };
        assert!((info_nce(&permuted, 0.1).unwrap() - base).abs() < 1e-12);
        let single = ContrastiveBatch { anchors: vec![rv()], positives: vec![rv()] };
        assert!(info_nce(&single, 0.1).is_err());
    }

    #[test]
    fn info_nce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rv = || (0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let batch = ContrastiveBatch { anchors: (0..3).map(|_| rv()).collect(), positives: (0..3).map(|_| rv()).collect() };
        let (_, ga, gp) = info_nce_with_grad(&batch, 0.1).unwrap();
        let h = 1e-6;
        for which in 0..2 {
            for i in 0..3 {
                for d in 0..4 {
                    let bump = |delta: f64| {
                        let mut b = batch.clone();
                        if which == 0 {
                            b.anchors[i][d] += delta;
                        } else {
                            b.positives[i][d] += delta;
                        }
                        info_nce(&b, 0.1).unwrap()
                    };
                    let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                    let analytic = if which == 0 { ga[i][d] } else { gp[i][d] };
                    assert!((numeric - analytic).abs() < 1e-6 * numeric.abs().max(1.0), "{numeric} vs {analytic}");
                }
            }
        }
    }

    fn small_arch() -> EncoderArch {
        EncoderArch { lift: Lift::Edges { k: 4 }, channels: vec![4, 6], leak: 0.2, embed_dim: 4, invariants: InvariantFeatures::NormsAndAdjacentProducts }
    }

    #[test]
    fn rotating_both_views_leaves_loss_and_grads() {
        let params = init_params(3, &small_arch()).unwrap();
        let pairs: Vec<(PointCloud, PointCloud)> = (0..3)
            .map(|i| (blob(10 + i, 16, Vec3::new(1.0, 0.5, 0.3)), blob(20 + i, 16, Vec3::new(1.0, 0.4, 0.3))))
            .collect();
        let (l0, g0) = loss_and_grads(&params, &pairs, 0.1).unwrap();
        let rotated: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let r = random_rotation(i as u64);
                (a.map_points(|p| r * p), b.map_points(|p| r * p))
            })
            .collect();
        let (l1, g1) = loss_and_grads(&params, &rotated, 0.1).unwrap();
        assert!((l0 - l1).abs() < 1e-6);
        for (a, b) in g0.iter().zip(&g1) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(g0.iter().map(|g| g * g).sum::<f64>() > 0.0);
    }

    #[test]
    fn adam_takes_a_signed_lr_step_first() {
        let mut st = OptimizerState::new(Optimizer::ADAM, 0.01, 2);
        let mut p = [1.0, -1.0];
        st.update(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
        let mut st = OptimizerState::new(Optimizer::Sgd, 0.5, 1);
        let mut p = [1.0];
        st.update(&mut p, &[2.0]);
        assert_eq!(p, [0.0]);
    }

    #[test]
    fn batching_never_leaves_singletons() {
        assert_eq!(batches(&[0, 1, 2, 3, 4], 2), vec![vec![0, 1], vec![2, 3, 4]]);
        assert_eq!(batches(&[0, 1, 2, 3], 2), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(batches(&[0, 1, 2], 8), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn zero_epochs_leave_params() {
        let params = init_params(4, &small_arch()).unwrap();
        let data: Vec<_> = (0..3).map(|i| blob(i, 20, Vec3::new(1.0, 0.5, 0.2))).collect();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (out, hist) = train(&params, &data, &AugmentationConfig::default(), &cfg).unwrap();
        assert_eq!(out, params);
        assert!(hist.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let params = init_params(4, &small_arch()).unwrap();
        let data: Vec<_> = (0..4).map(|i| blob(i, 24, Vec3::new(1.0, 0.2 + 0.2 * i as f64, 0.2))).collect();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
        let (pa, ha) = train(&params, &data, &AugmentationConfig::default(), &cfg).unwrap();
        let (pb, hb) = train(&params, &data, &AugmentationConfig::default(), &cfg).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ha.len(), 3);
        assert!(ha.iter().zip(&hb).all(|(a, b)| a.loss.to_bits() == b.loss.to_bits()));
    }

    #[test]
    fn cluster_similarity_groups() {
        let e = vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0], vec![0.1, 1.0]];
        let (intra, inter) = cluster_similarity(&e, &[0, 0, 1, 1]).unwrap();
        assert!(intra > 0.99 && inter < 0.2);
    }
}
