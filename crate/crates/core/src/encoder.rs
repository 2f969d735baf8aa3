//! Rotation-equivariant encoder on vector-valued point features.
//!
//! Every hidden feature is a list of 3D vectors per point. Linear layers mix
//! channels with scalar weights and the nonlinearity only removes the
//! component along a learned per-point direction, so a rotation of the input
//! rotates every feature vector. Mean pooling yields a global set of vectors
//! from which two frame vectors (equivariant) and an embedding built from
//! norms and inner products (invariant) are read out.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::math;
use crate::neighborhood::KnnIndex;

/// Centroids farther than this from the origin are rejected by [`lift`].
pub const CENTER_TOL: f64 = 1e-6;
const NORM_EPS: f64 = 1e-12;

/// Per-point list of `channels` vectors, stored point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFeatureMap {
    points: usize,
    channels: usize,
    data: Vec<Vec3>,
}

impl VectorFeatureMap {
    pub fn zeros(points: usize, channels: usize) -> Self {
        VectorFeatureMap {
            points,
            channels,
            data: vec![Vec3::ZERO; points * channels],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Vec3>>) -> Result<Self> {
        let channels = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * channels);
        for r in &rows {
            if r.len() != channels {
                return Err(Error::ShapeMismatch { expected: channels, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(VectorFeatureMap { points: rows.len(), channels, data })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn point(&self, n: usize) -> &[Vec3] {
        &self.data[n * self.channels..(n + 1) * self.channels]
    }

    fn point_mut(&mut self, n: usize) -> &mut [Vec3] {
        &mut self.data[n * self.channels..(n + 1) * self.channels]
    }

    pub fn get(&self, n: usize, c: usize) -> Vec3 {
        self.data[n * self.channels + c]
    }

    /// Applies `f` to every vector (e.g. a rotation).
    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        VectorFeatureMap {
            points: self.points,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Dense row-major matrix of scalar weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Which invariants feed the embedding head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantFeatures {
    /// Channel norms only.
    Norms,
    /// Channel norms followed by inner products of adjacent channels.
    NormsAndAdjacentProducts,
}

impl InvariantFeatures {
    pub fn len(self, channels: usize) -> usize {
        match self {
            InvariantFeatures::Norms => channels,
            InvariantFeatures::NormsAndAdjacentProducts => channels + channels.saturating_sub(1),
        }
    }
}

/// How point coordinates become the first vector channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lift {
    /// The coordinate itself, one channel ([`lift`]).
    Coordinates,
    /// Coordinate plus global moment channels ([`lift_moments`]).
    Moments,
    /// Edge features over the `k` nearest neighbors ([`lift_edges`]).
    Edges { k: usize },
}

impl Lift {
    pub fn channels(self) -> usize {
        match self {
            Lift::Coordinates => 1,
            Lift::Moments => 5,
            Lift::Edges { .. } => 3,
        }
    }
}

/// Layer widths and readout sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderArch {
    pub lift: Lift,
    /// Output width of each linear layer; the first consumes the lifted channels.
    pub channels: Vec<usize>,
    pub leak: f64,
    pub embed_dim: usize,
    pub invariants: InvariantFeatures,
}

impl Default for EncoderArch {
    fn default() -> Self {
        EncoderArch {
            lift: Lift::Moments,
            channels: vec![16, 32, 32],
            leak: 0.2,
            embed_dim: 32,
            invariants: InvariantFeatures::NormsAndAdjacentProducts,
        }
    }
}

impl EncoderArch {
    pub fn lift_channels(&self) -> usize {
        self.lift.channels()
    }

    pub fn output_channels(&self) -> usize {
        *self.channels.last().unwrap_or(&self.lift_channels())
    }

    pub fn invariant_len(&self) -> usize {
        self.invariants.len(self.output_channels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidConfig("encoder.channels must be nonempty and positive"));
        }
        if !(0.0..1.0).contains(&self.leak) {
            return Err(Error::InvalidConfig("encoder.leak must lie in [0, 1)"));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("encoder.embed_dim must be positive"));
        }
        if self.lift == (Lift::Edges { k: 0 }) {
            return Err(Error::InvalidConfig("encoder.lift edge k must be positive"));
        }
        Ok(())
    }
}

/// Weights of the encoder; every tensor is finite and shapes chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub arch: EncoderArch,
    pub seed: u64,
    /// `channels[l] × channels[l-1]` mixing matrices.
    pub linears: Vec<Matrix>,
    /// One direction row per nonlinearity; a nonlinearity follows every linear layer but the last.
    pub relu_dirs: Vec<Vec<f64>>,
    /// 2 × C: rows produce the two frame vectors.
    pub frame_head: Matrix,
    /// D × F over the invariant features.
    pub invariant_head: Matrix,
}

impl EncoderParams {
    pub fn num_params(&self) -> usize {
        self.linears.iter().map(|m| m.data.len()).sum::<usize>()
            + self.relu_dirs.iter().map(Vec::len).sum::<usize>()
            + self.frame_head.data.len()
            + self.invariant_head.data.len()
    }

    /// All weights in storage order: linears, nonlinearity directions, frame head, invariant head.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for m in &self.linears {
            out.extend_from_slice(&m.data);
        }
        for r in &self.relu_dirs {
            out.extend_from_slice(r);
        }
        out.extend_from_slice(&self.frame_head.data);
        out.extend_from_slice(&self.invariant_head.data);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch { expected: self.num_params(), found: flat.len() });
        }
        let mut it = flat.iter().copied();
        for m in &mut self.linears {
            m.data.iter_mut().for_each(|v| *v = it.next().unwrap_or_default());
        }
        for r in &mut self.relu_dirs {
            r.iter_mut().for_each(|v| *v = it.next().unwrap_or_default());
        }
        self.frame_head.data.iter_mut().for_each(|v| *v = it.next().unwrap_or_default());
        self.invariant_head.data.iter_mut().for_each(|v| *v = it.next().unwrap_or_default());
        Ok(())
    }

    /// Shape check for weights loaded from elsewhere.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let mut c_in = self.arch.lift_channels();
        if self.linears.len() != self.arch.channels.len() || self.relu_dirs.len() != self.arch.channels.len() - 1 {
            return Err(Error::InvalidConfig("layer count does not match arch"));
        }
        for (l, (m, &c_out)) in self.linears.iter().zip(&self.arch.channels).enumerate() {
            if m.rows != c_out || m.cols != c_in || m.data.len() != c_out * c_in {
                return Err(Error::InvalidConfig("linear layer shape does not match arch"));
            }
            if l < self.relu_dirs.len() && self.relu_dirs[l].len() != c_out {
                return Err(Error::InvalidConfig("nonlinearity width does not match arch"));
            }
            c_in = c_out;
        }
        if self.frame_head.rows != 2 || self.frame_head.cols != c_in {
            return Err(Error::InvalidConfig("frame head shape does not match arch"));
        }
        if self.invariant_head.rows != self.arch.embed_dim || self.invariant_head.cols != self.arch.invariant_len() {
            return Err(Error::InvalidConfig("invariant head shape does not match arch"));
        }
        if !self.to_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite weight"));
        }
        Ok(())
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = 1.0 / math::sqrt(cols as f64);
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect(),
    }
}

/// Deterministic initialization, uniform in ±1/√fan-in.
pub fn init_params(seed: u64, arch: &EncoderArch) -> Result<EncoderParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_in = arch.lift_channels();
    let mut linears = Vec::new();
    let mut relu_dirs = Vec::new();
    for (l, &c_out) in arch.channels.iter().enumerate() {
        linears.push(uniform_matrix(&mut rng, c_out, c_in));
        if l + 1 < arch.channels.len() {
            relu_dirs.push(uniform_matrix(&mut rng, 1, c_out).data);
        }
        c_in = c_out;
    }
    let frame_head = uniform_matrix(&mut rng, 2, c_in);
    let invariant_head = uniform_matrix(&mut rng, arch.embed_dim, arch.invariant_len());
    Ok(EncoderParams {
        arch: arch.clone(),
        seed,
        linears,
        relu_dirs,
        frame_head,
        invariant_head,
    })
}

/// One channel per point holding its coordinate. The cloud must be centered.
pub fn lift(cloud: &PointCloud) -> Result<VectorFeatureMap> {
    check_centered(cloud)?;
    Ok(VectorFeatureMap {
        points: cloud.len(),
        channels: 1,
        data: cloud.points.clone(),
    })
}

/// Edge features for each point and each of its `k` nearest neighbors (self
/// included, `k` capped at the cloud size): `[xⱼ − xᵢ, xᵢ, xⱼ × xᵢ]`. Rows are
/// grouped by point, `k` consecutive rows per point.
pub fn lift_edges(cloud: &PointCloud, k: usize) -> Result<VectorFeatureMap> {
    check_centered(cloud)?;
    let index = KnnIndex::new(&cloud.points)?;
    let k = k.clamp(1, cloud.len());
    let mut data = Vec::with_capacity(cloud.len() * k * 3);
    for &p in &cloud.points {
        let nb = index.knn(p, k)?;
        for &j in &nb.indices {
            let q = cloud.points[j];
            data.push(q - p);
            data.push(p);
            data.push(q.cross(p));
        }
    }
    Ok(VectorFeatureMap { points: cloud.len() * k, channels: 3, data })
}

/// Global-moment channels `[x, (‖x‖/r̄)x, ĝ·r̄, x × ĝ, (x·ĝ/r̄)x]`, where r̄ is
/// the mean point radius and ĝ the unit direction of mean ‖x‖x (zero when that
/// mean vanishes). Every channel scales linearly with the cloud.
pub fn lift_moments(cloud: &PointCloud) -> Result<VectorFeatureMap> {
    check_centered(cloud)?;
    let n = cloud.len() as f64;
    let mut g = Vec3::ZERO;
    let mut r = 0.0;
    for &p in &cloud.points {
        let norm = p.norm();
        g += p * norm;
        r += norm;
    }
    let r = r / n;
    if r < NORM_EPS {
        return Ok(VectorFeatureMap::zeros(cloud.len(), 5));
    }
    let g = (g / n).try_normalize(NORM_EPS).unwrap_or(Vec3::ZERO);
    let mut data = Vec::with_capacity(cloud.len() * 5);
    for &p in &cloud.points {
        data.push(p);
        data.push(p * (p.norm() / r));
        data.push(g * r);
        data.push(p.cross(g));
        data.push(p * (p.dot(g) / r));
    }
    Ok(VectorFeatureMap { points: cloud.len(), channels: 5, data })
}

/// Mean over consecutive blocks of `group` rows.
pub fn group_mean(v: &VectorFeatureMap, group: usize) -> Result<VectorFeatureMap> {
    if group == 0 || !v.points.is_multiple_of(group) {
        return Err(Error::ShapeMismatch { expected: group, found: v.points });
    }
    let mut out = VectorFeatureMap::zeros(v.points / group, v.channels);
    let inv = 1.0 / group as f64;
    for n in 0..v.points {
        for (a, x) in out.point_mut(n / group).iter_mut().zip(v.point(n)) {
            *a += *x;
        }
    }
    out.data.iter_mut().for_each(|a| *a = *a * inv);
    Ok(out)
}

fn check_centered(cloud: &PointCloud) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let c = cloud.centroid().norm();
    if c > CENTER_TOL {
        return Err(Error::NotCentered(c));
    }
    Ok(())
}

/// Output channel o of each point is Σᵢ W[o,i]·V[i].
pub fn vn_linear(w: &Matrix, v: &VectorFeatureMap) -> Result<VectorFeatureMap> {
    if w.cols != v.channels {
        return Err(Error::ShapeMismatch { expected: w.cols, found: v.channels });
    }
    let mut out = VectorFeatureMap::zeros(v.points, w.rows);
    for n in 0..v.points {
        let src = v.point(n);
        let dst = out.point_mut(n);
        for (o, d) in dst.iter_mut().enumerate() {
            let row = w.row(o);
            let mut acc = Vec3::ZERO;
            for (wi, s) in row.iter().zip(src) {
                acc += *s * *wi;
            }
            *d = acc;
        }
    }
    Ok(out)
}

fn relu_point(dir_weights: &[f64], q: &[Vec3], leak: f64, out: &mut [Vec3]) {
    let mut s = Vec3::ZERO;
    for (k, v) in dir_weights.iter().zip(q) {
        s += *v * *k;
    }
    let ns = s.norm();
    if ns < NORM_EPS {
        out.copy_from_slice(q);
        return;
    }
    let d = s / ns;
    for (o, &v) in out.iter_mut().zip(q) {
        let t = v.dot(d);
        *o = if t >= 0.0 { v } else { v - d * ((1.0 - leak) * t) };
    }
}

/// Leaky projection nonlinearity: components pointing against the learned
/// direction d = normalize(Σ kᵢVᵢ) are scaled by `leak`.
pub fn vn_relu(dir_weights: &[f64], v: &VectorFeatureMap, leak: f64) -> Result<VectorFeatureMap> {
    if dir_weights.len() != v.channels {
        return Err(Error::ShapeMismatch { expected: v.channels, found: dir_weights.len() });
    }
    let mut out = VectorFeatureMap::zeros(v.points, v.channels);
    for n in 0..v.points {
        relu_point(dir_weights, v.point(n), leak, out.point_mut(n));
    }
    Ok(out)
}

/// Channel-wise mean over points.
pub fn mean_pool(v: &VectorFeatureMap) -> Result<Vec<Vec3>> {
    if v.points == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut acc = vec![Vec3::ZERO; v.channels];
    for n in 0..v.points {
        for (a, x) in acc.iter_mut().zip(v.point(n)) {
            *a += *x;
        }
    }
    let inv = v.points as f64;
    Ok(acc.into_iter().map(|a| a / inv).collect())
}

/// Rotation invariants of the pooled channels, in head input order.
pub fn invariant_features(pooled: &[Vec3], kind: InvariantFeatures) -> Vec<f64> {
    let mut f: Vec<f64> = pooled.iter().map(|p| p.norm()).collect();
    if kind == InvariantFeatures::NormsAndAdjacentProducts {
        f.extend(pooled.windows(2).map(|w| w[0].dot(w[1])));
    }
    f
}

/// z = Wz · invariants(pooled).
pub fn invariant_head(wz: &Matrix, pooled: &[Vec3], kind: InvariantFeatures) -> Result<Vec<f64>> {
    let f = invariant_features(pooled, kind);
    if wz.cols != f.len() {
        return Err(Error::ShapeMismatch { expected: f.len(), found: wz.cols });
    }
    Ok((0..wz.rows)
        .map(|d| wz.row(d).iter().zip(&f).map(|(w, x)| w * x).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub u1: Vec3,
    pub u2: Vec3,
    pub z: Vec<f64>,
    /// Centroid removed before encoding.
    pub centroid: Vec3,
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` feeds linear layer l.
    inputs: Vec<VectorFeatureMap>,
    /// `pre_act[l]` is the output of linear layer l.
    pre_act: Vec<VectorFeatureMap>,
    /// Rows per point in the lifted features.
    group: usize,
    points: usize,
    pooled: Vec<Vec3>,
    features: Vec<f64>,
}

/// Lifted features and the number of rows per point.
fn lift_for(arch: &EncoderArch, centered: &PointCloud) -> Result<(VectorFeatureMap, usize)> {
    match arch.lift {
        Lift::Coordinates => Ok((lift(centered)?, 1)),
        Lift::Moments => Ok((lift_moments(centered)?, 1)),
        Lift::Edges { k } => Ok((lift_edges(centered, k)?, k.clamp(1, centered.len()))),
    }
}

/// Centers the cloud, then runs the lifted features through the network.
pub fn encode(params: &EncoderParams, cloud: &PointCloud) -> Result<EncoderOutput> {
    Ok(encode_with_cache(params, cloud)?.0)
}

pub fn encode_with_cache(params: &EncoderParams, cloud: &PointCloud) -> Result<(EncoderOutput, ForwardCache)> {
    if cloud.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: cloud.len() });
    }
    let centroid = cloud.centroid();
    let centered = cloud.map_points(|p| p - centroid);
    let (lifted, group) = lift_for(&params.arch, &centered)?;
    let (mut out, cache) = forward_features(params, lifted, group)?;
    out.centroid = centroid;
    Ok((out, cache))
}

/// Network body and heads on already-lifted features with `group` rows per
/// point; rows are averaged per point after the first layer.
pub fn forward_features(params: &EncoderParams, lifted: VectorFeatureMap, group: usize) -> Result<(EncoderOutput, ForwardCache)> {
    let layers = params.linears.len();
    let mut inputs = Vec::with_capacity(layers);
    let mut pre_act = Vec::with_capacity(layers);
    let mut current = lifted;
    for l in 0..layers {
        let a = vn_linear(&params.linears[l], &current)?;
        inputs.push(current);
        current = if l < params.relu_dirs.len() {
            vn_relu(&params.relu_dirs[l], &a, params.arch.leak)?
        } else {
            a.clone()
        };
        pre_act.push(a);
        if l == 0 && group > 1 {
            current = group_mean(&current, group)?;
        }
    }
    let points = current.points;
    let pooled = mean_pool(&current)?;
    let fh = &params.frame_head;
    if fh.cols != pooled.len() || fh.rows != 2 {
        return Err(Error::ShapeMismatch { expected: pooled.len(), found: fh.cols });
    }
    let combine = |row: &[f64]| {
        let mut acc = Vec3::ZERO;
        for (w, p) in row.iter().zip(&pooled) {
            acc += *p * *w;
        }
        acc
    };
    let u1 = combine(fh.row(0));
    let u2 = combine(fh.row(1));
    let features = invariant_features(&pooled, params.arch.invariants);
    let z = invariant_head(&params.invariant_head, &pooled, params.arch.invariants)?;
    Ok((
        EncoderOutput { u1, u2, z, centroid: Vec3::ZERO },
        ForwardCache { inputs, pre_act, group, points, pooled, features },
    ))
}

/// Gradient of a scalar objective with respect to every weight, given the
/// objective's gradient with respect to the outputs. Laid out like
/// [`EncoderParams::to_flat`].
pub fn backward(params: &EncoderParams, cache: &ForwardCache, grad_z: &[f64], grad_u1: Vec3, grad_u2: Vec3) -> Vec<f64> {
    let layers = params.linears.len();
    let c_out = cache.pooled.len();
    let mut g_linears: Vec<Vec<f64>> = params.linears.iter().map(|m| vec![0.0; m.data.len()]).collect();
    let mut g_dirs: Vec<Vec<f64>> = params.relu_dirs.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut g_frame = vec![0.0; params.frame_head.data.len()];
    let mut g_inv = vec![0.0; params.invariant_head.data.len()];

    // Heads.
    let wz = &params.invariant_head;
    let mut g_feat = vec![0.0; cache.features.len()];
    for (d, &gz) in grad_z.iter().enumerate() {
        for (j, &f) in cache.features.iter().enumerate() {
            g_inv[d * wz.cols + j] += gz * f;
            g_feat[j] += wz.at(d, j) * gz;
        }
    }
    let mut g_pooled = vec![Vec3::ZERO; c_out];
    for c in 0..c_out {
        let p = cache.pooled[c];
        let n = p.norm();
        if n >= NORM_EPS {
            g_pooled[c] += p * (g_feat[c] / n);
        }
    }
    if params.arch.invariants == InvariantFeatures::NormsAndAdjacentProducts {
        for c in 0..c_out.saturating_sub(1) {
            let g = g_feat[c_out + c];
            g_pooled[c] += cache.pooled[c + 1] * g;
            g_pooled[c + 1] += cache.pooled[c] * g;
        }
    }
    let fh = &params.frame_head;
    for c in 0..c_out {
        g_frame[c] += cache.pooled[c].dot(grad_u1);
        g_frame[fh.cols + c] += cache.pooled[c].dot(grad_u2);
        g_pooled[c] += grad_u1 * fh.at(0, c) + grad_u2 * fh.at(1, c);
    }

    // Pooling.
    let points = cache.points;
    let inv_n = 1.0 / points as f64;
    let mut g_cur = VectorFeatureMap::zeros(points, c_out);
    for n in 0..points {
        for (g, gp) in g_cur.point_mut(n).iter_mut().zip(&g_pooled) {
            *g = *gp * inv_n;
        }
    }

    for l in (0..layers).rev() {
        if l == 0 && cache.group > 1 {
            let inv = 1.0 / cache.group as f64;
            let mut expanded = VectorFeatureMap::zeros(g_cur.points * cache.group, g_cur.channels);
            for n in 0..expanded.points {
                for (e, g) in expanded.point_mut(n).iter_mut().zip(g_cur.point(n / cache.group)) {
                    *e = *g * inv;
                }
            }
            g_cur = expanded;
        }
        let a = &cache.pre_act[l];
        // Nonlinearity.
        if l < params.relu_dirs.len() {
            let k = &params.relu_dirs[l];
            let beta = 1.0 - params.arch.leak;
            let mut g_a = VectorFeatureMap::zeros(a.points, a.channels);
            for n in 0..a.points {
                let q = a.point(n);
                let go = g_cur.point(n);
                let ga = g_a.point_mut(n);
                let mut s = Vec3::ZERO;
                for (kw, v) in k.iter().zip(q) {
                    s += *v * *kw;
                }
                let ns = s.norm();
                if ns < NORM_EPS {
                    ga.copy_from_slice(go);
                    continue;
                }
                let d = s / ns;
                let mut g_d = Vec3::ZERO;
                for c in 0..q.len() {
                    let t = q[c].dot(d);
                    if t >= 0.0 {
                        ga[c] = go[c];
                    } else {
                        let dg = d.dot(go[c]);
                        ga[c] = go[c] - d * (beta * dg);
                        g_d -= (q[c] * dg + go[c] * t) * beta;
                    }
                }
                let g_s = (g_d - d * d.dot(g_d)) / ns;
                for c in 0..q.len() {
                    ga[c] += g_s * k[c];
                    g_dirs[l][c] += q[c].dot(g_s);
                }
            }
            g_cur = g_a;
        }
        // Linear.
        let w = &params.linears[l];
        let input = &cache.inputs[l];
        let gw = &mut g_linears[l];
        let mut g_in = VectorFeatureMap::zeros(input.points, input.channels);
        for n in 0..input.points {
            let v = input.point(n);
            let ga = g_cur.point(n);
            let gi = g_in.point_mut(n);
            for o in 0..w.rows {
                let go = ga[o];
                let row = w.row(o);
                let grow = &mut gw[o * w.cols..(o + 1) * w.cols];
                for i in 0..w.cols {
                    grow[i] += go.dot(v[i]);
                    gi[i] += go * row[i];
                }
            }
        }
        g_cur = g_in;
    }

    let mut flat = Vec::with_capacity(params.num_params());
    for g in g_linears {
        flat.extend(g);
    }
    for g in g_dirs {
        flat.extend(g);
    }
    flat.extend(g_frame);
    flat.extend(g_inv);
    flat
}
