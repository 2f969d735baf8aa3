//! Exact k-nearest-neighbor search, local statistics and farthest point sampling.
//!
//! Every ordering decision is made on the pair (squared distance, point index),
//! so query answers are bit-identical to an exhaustive scan and exact ties
//! always resolve to the lower index.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::math;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// A k-d tree over an immutable snapshot of a cloud's coordinates.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// The k nearest points to a query, closest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Neighborhood {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[inline]
fn key_less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn cmp_axis(points: &[Vec3], axis: usize, a: usize, b: usize) -> Ordering {
    points[a][axis]
        .partial_cmp(&points[b][axis])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Builds the index; fails on an empty cloud.
pub fn build_index(x: &PointCloud) -> Result<KnnIndex> {
    KnnIndex::new(&x.points)
}

impl KnnIndex {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut index = KnnIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap_or(Ordering::Equal).then(b.cmp(&a)))
            .unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| cmp_axis(points, axis, a, b));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// The `k` nearest snapshot points to `query`; ties resolve to the lower index.
    pub fn knn(&self, query: Vec3, k: usize) -> Result<Neighborhood> {
        let n = self.points.len();
        if k == 0 || k > n {
            return Err(Error::BadK { k, n });
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(0, query, k, &mut best);
        Ok(Neighborhood {
            indices: best.iter().map(|&(_, i)| i).collect(),
            distances: best.iter().map(|&(d, _)| math::sqrt(d)).collect(),
        })
    }

    /// Squared distance to the nearest snapshot point.
    pub fn nearest_distance_squared(&self, query: Vec3) -> f64 {
        let mut best = Vec::with_capacity(2);
        self.search(0, query, 1, &mut best);
        best[0].0
    }

    fn search(&self, node: usize, q: Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (q.distance_squared(self.points[i]), i);
                    if best.len() < k || key_less(cand, best[best.len() - 1]) {
                        let pos = best.partition_point(|&e| key_less(e, cand));
                        best.insert(pos, cand);
                        if best.len() > k {
                            best.pop();
                        }
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                // Points across the plane are at least diff² away; equality must still be
                // visited since a lower-index tie may live there.
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Self-inclusive k-NN neighborhoods for every point of the snapshot.
pub fn all_neighborhoods(index: &KnnIndex, k: usize) -> Result<Vec<Neighborhood>> {
    index.points.iter().map(|&p| index.knn(p, k)).collect()
}

/// Arithmetic mean of the neighborhood's coordinates.
pub fn local_mean(cloud: &PointCloud, nb: &Neighborhood) -> Vec3 {
    mean_of(&cloud.points, &nb.indices)
}

pub(crate) fn mean_of(points: &[Vec3], indices: &[usize]) -> Vec3 {
    let mut s = Vec3::ZERO;
    for &i in indices {
        s += points[i];
    }
    s / indices.len() as f64
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order (ties keep axis order) and the
/// matching unit eigenvectors.
pub fn symmetric_eigen(a: [[f64; 3]; 3]) -> ([f64; 3], [Vec3; 3]) {
    let mut m = a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
        let diag = m[0][0] * m[0][0] + m[1][1] * m[1][1] + m[2][2] * m[2][2];
        if off <= 1e-36 * diag || off == 0.0 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = if theta >= 0.0 {
                1.0 / (theta + math::sqrt(1.0 + theta * theta))
            } else {
                -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
            };
            let c = 1.0 / math::sqrt(1.0 + t * t);
            let s = t * c;
            // m ← Jᵀ m J
            for r in 0..3 {
                let (mrp, mrq) = (m[r][p], m[r][q]);
                m[r][p] = c * mrp - s * mrq;
                m[r][q] = s * mrp + c * mrq;
            }
            for col in 0..3 {
                let (mpc, mqc) = (m[p][col], m[q][col]);
                m[p][col] = c * mpc - s * mqc;
                m[q][col] = s * mpc + c * mqc;
            }
            m[p][q] = 0.0;
            m[q][p] = 0.0;
            for row in &mut v {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| m[a][a].partial_cmp(&m[b][b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let vals = [m[order[0]][order[0]], m[order[1]][order[1]], m[order[2]][order[2]]];
    let vecs = order.map(|j| Vec3::new(v[0][j], v[1][j], v[2][j]));
    (vals, vecs)
}

/// Covariance (divided by the count) of the given points about their mean.
pub fn covariance(points: &[Vec3], indices: &[usize]) -> [[f64; 3]; 3] {
    let mean = mean_of(points, indices);
    let mut c = [[0.0; 3]; 3];
    for &i in indices {
        let d = points[i] - mean;
        for r in 0..3 {
            for s in 0..3 {
                c[r][s] += d[r] * d[s];
            }
        }
    }
    let n = indices.len() as f64;
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    c
}

/// Flips `n` so its largest-magnitude component is positive (first axis wins ties).
pub fn canonical_sign(n: Vec3) -> Vec3 {
    let mut best = 0;
    for a in 1..3 {
        if math::fabs(n[a]) > math::fabs(n[best]) {
            best = a;
        }
    }
    if n[best] < 0.0 {
        -n
    } else {
        n
    }
}

/// Smallest-eigenvalue direction of the neighborhood covariance.
pub fn pca_normal(cloud: &PointCloud, nb: &Neighborhood) -> Result<Vec3> {
    normal_of(&cloud.points, &nb.indices)
}

pub(crate) fn normal_of(points: &[Vec3], indices: &[usize]) -> Result<Vec3> {
    if indices.len() < 3 {
        return Err(Error::DegenerateNeighborhood);
    }
    let (vals, vecs) = symmetric_eigen(covariance(points, indices));
    if !(vals[2] > f64::MIN_POSITIVE) || vals[1] <= 1e-12 * vals[2] {
        return Err(Error::DegenerateNeighborhood);
    }
    let n = vecs[0].try_normalize(0.0).ok_or(Error::DegenerateNeighborhood)?;
    Ok(canonical_sign(n))
}

/// Sign-aligns every normal with `reference`, then averages and normalizes.
pub fn aggregate_normal(normals: &[Vec3], reference: Vec3) -> Result<Vec3> {
    if normals.is_empty() {
        return Err(Error::ZeroAggregate);
    }
    let mut s = Vec3::ZERO;
    for &n in normals {
        s += if n.dot(reference) < 0.0 { -n } else { n };
    }
    (s / normals.len() as f64)
        .try_normalize(1e-12)
        .ok_or(Error::ZeroAggregate)
}

/// Greedy farthest point sampling starting from a seeded random point.
pub fn fps(cloud: &PointCloud, m: usize, seed: u64) -> Result<PointCloud> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(Error::BadM { m, n });
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..n);
    fps_from(cloud, m, start)
}

/// Greedy farthest point sampling from a given start index.
///
/// Output is in selection order; ties in the max-min distance go to the lower index.
pub fn fps_from(cloud: &PointCloud, m: usize, start: usize) -> Result<PointCloud> {
    Ok(cloud.select(&fps_indices(&cloud.points, m, start)?))
}

pub fn fps_indices(points: &[Vec3], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::BadM { m, n });
    }
    if start >= n {
        return Err(Error::BadM { m: start, n });
    }
    let mut chosen = Vec::with_capacity(m);
    let mut min_d = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = start;
    loop {
        chosen.push(current);
        taken[current] = true;
        if chosen.len() == m {
            break;
        }
        let c = points[current];
        let mut next = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = c.distance_squared(points[i]);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best {
                best = min_d[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(chosen)
}
