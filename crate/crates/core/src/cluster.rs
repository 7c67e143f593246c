//! 2-D projection, density clustering and separation scores of address
//! vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::addr::{format_address, Ipv6Addr};
use crate::error::{Error, Result};

pub const CLUSTERS_FORMAT: &str = "veclm-clusters/1";
pub const DEFAULT_MIN_PTS: usize = 5;
pub const NOISE: i32 = -1;

const PCA_MAX_ITERS: usize = 10_000;
const PCA_TOL: f64 = 1e-13;

fn check_rows(vectors: &[Vec<f64>], min: usize) -> Result<usize> {
    if vectors.len() < min {
        return Err(Error::param(format!("need at least {min} vectors, got {}", vectors.len())));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::shape("vectors must share a positive dimension"));
    }
    Ok(d)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Leading eigenpairs of a symmetric PSD matrix by orthogonal iteration
/// with a final 2×2 Rayleigh-Ritz rotation.
fn top_two_eigenvectors(cov: &[f64], d: usize) -> [Vec<f64>; 2] {
    let mul = |v: &[f64]| -> Vec<f64> { (0..d).map(|i| dot(&cov[i * d..(i + 1) * d], v)).collect() };
    // deterministic, generic start: no coordinate axis is special
    let mut q1: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract()).collect();
    let mut q2: Vec<f64> = (0..d).map(|i| ((i as f64 + 0.5) * 1.324_717_957_24).fract() - 0.5).collect();
    let orthonormalize = |a: &mut Vec<f64>, b: &mut Vec<f64>| {
        normalize(a);
        let p = dot(a, b);
        b.iter_mut().zip(a.iter()).for_each(|(y, x)| *y -= p * x);
        normalize(b);
    };
    orthonormalize(&mut q1, &mut q2);
    for _ in 0..PCA_MAX_ITERS {
        let (mut a, mut b) = (mul(&q1), mul(&q2));
        if dot(&a, &a) == 0.0 {
            break;
        }
        orthonormalize(&mut a, &mut b);
        let change = 2.0 - dot(&a, &q1).abs() - dot(&b, &q2).abs();
        q1 = a;
        q2 = b;
        if change < PCA_TOL {
            break;
        }
    }
    // Rayleigh-Ritz on span(q1, q2)
    let (a1, a2) = (mul(&q1), mul(&q2));
    let (h11, h12, h22) = (dot(&q1, &a1), dot(&q1, &a2), dot(&q2, &a2));
    let theta = 0.5 * (2.0 * h12).atan2(h11 - h22);
    let (c, s) = (theta.cos(), theta.sin());
    let v1: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| c * x + s * y).collect();
    let v2: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| -s * x + c * y).collect();
    [v1, v2]
}

/// Signs fixed so the largest-magnitude loading is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Mean-centred coordinates on the first two principal components.
pub fn project_2d(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let d = check_rows(vectors, 2)?;
    let n = vectors.len() as f64;
    // offsets from the first point keep identical inputs exactly at the origin
    let origin = &vectors[0];
    let mut shift = vec![0.0; d];
    for v in vectors {
        shift.iter_mut().zip(v.iter().zip(origin)).for_each(|(m, (x, o))| *m += x - o);
    }
    let mean: Vec<f64> = shift.iter().zip(origin).map(|(s, o)| o + s / n).collect();
    let centred: Vec<Vec<f64>> = vectors.iter().map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![0.0; d * d];
    for v in &centred {
        for i in 0..d {
            if v[i] == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            row.iter_mut().zip(v).for_each(|(c, x)| *c += v[i] * x);
        }
    }
    cov.iter_mut().for_each(|c| *c /= n);
    let mut axes = if d == 1 {
        [vec![1.0], vec![0.0]]
    } else {
        top_two_eigenvectors(&cov, d)
    };
    axes.iter_mut().for_each(|a| fix_sign(a));
    Ok(centred.iter().map(|v| [dot(v, &axes[0]), dot(v, &axes[1])]).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`.
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::param(format!("unknown metric {other:?}"))),
        }
    }
}

/// Symmetric n × n distance matrix.
pub struct Distances {
    n: usize,
    d: Vec<f64>,
}

impl Distances {
    pub fn new(vectors: &[Vec<f64>], metric: Metric) -> Result<Self> {
        check_rows(vectors, 1)?;
        let n = vectors.len();
        let norms: Vec<f64> = vectors.iter().map(|v| dot(v, v).sqrt()).collect();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let x = match metric {
                    Metric::Euclidean => vectors[i]
                        .iter()
                        .zip(&vectors[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    Metric::Cosine => {
                        let denom = norms[i] * norms[j];
                        if denom > 0.0 {
                            (1.0 - dot(&vectors[i], &vectors[j]) / denom).max(0.0)
                        } else if norms[i] == norms[j] {
                            0.0
                        } else {
                            1.0
                        }
                    }
                };
                d[i * n + j] = x;
                d[j * n + i] = x;
            }
        }
        Ok(Distances { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

/// Distance to each point's k-th nearest other point, ascending.
pub fn k_distances(dist: &Distances, k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..dist.n)
        .map(|i| {
            let mut row: Vec<f64> = dist.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
            if row.is_empty() {
                return 0.0;
            }
            let kth = k.clamp(1, row.len()) - 1;
            *row.select_nth_unstable_by(kth, f64::total_cmp).1
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// The knee of the sorted k-distance curve: the point farthest from the
/// chord joining its ends, with both axes scaled to [0, 1].
pub fn elbow_eps(dist: &Distances, k: usize) -> f64 {
    let kd = k_distances(dist, k);
    let (lo, hi) = (kd[0], kd[kd.len() - 1]);
    if kd.len() < 3 || hi - lo <= 0.0 {
        return hi.max(f64::MIN_POSITIVE);
    }
    let last = (kd.len() - 1) as f64;
    let mut best = (0.0, hi);
    for (i, &y) in kd.iter().enumerate() {
        let (x, yn) = (i as f64 / last, (y - lo) / (hi - lo));
        // chord is y = x; distance up to a constant factor
        let gap = x - yn;
        if gap > best.0 {
            best = (gap, y);
        }
    }
    best.1.max(f64::MIN_POSITIVE)
}

/// Clusters are connected components of core points (at least `min_pts`
/// points, itself included, within `eps`). A border point joins the
/// cluster of its nearest core neighbour, ties going to the neighbour with
/// the lexicographically smallest vector, so the partition does not
/// depend on input order. Cluster ids follow first appearance.
pub fn dbscan_with(dist: &Distances, vectors: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Vec<i32>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::param("eps must be positive and min_pts at least 1"));
    }
    let n = dist.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist.get(i, j) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    let lex = |a: usize, b: usize| vectors[a].iter().zip(&vectors[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne());
    for p in 0..n {
        if core[p] {
            continue;
        }
        let mut best: Option<usize> = None;
        for &q in neighbours[p].iter().filter(|&&q| core[q]) {
            best = match best {
                None => Some(q),
                Some(b) => {
                    let (dq, db) = (dist.get(p, q), dist.get(p, b));
                    if dq < db || (dq == db && lex(q, b) == Some(std::cmp::Ordering::Less)) {
                        Some(q)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        if let Some(b) = best {
            labels[p] = labels[b];
        }
    }
    renumber(&mut labels);
    Ok(labels)
}

fn renumber(labels: &mut [i32]) {
    let mut map = std::collections::HashMap::new();
    for l in labels.iter_mut().filter(|l| **l != NOISE) {
        let k = map.len() as i32;
        *l = *map.entry(*l).or_insert(k);
    }
}

pub fn dbscan(vectors: &[Vec<f64>], eps: f64, min_pts: usize, metric: Metric) -> Result<Vec<i32>> {
    let dist = Distances::new(vectors, metric)?;
    dbscan_with(&dist, vectors, eps, min_pts)
}

/// Mean silhouette of the non-noise points under `dist`; `None` with fewer
/// than two clusters. Points alone in their cluster score 0.
pub fn silhouette(dist: &Distances, labels: &[i32]) -> Option<f64> {
    let k = labels.iter().copied().max().unwrap_or(NOISE);
    if k < 1 {
        return None;
    }
    let k = (k + 1) as usize;
    let mut size = vec![0usize; k];
    for &l in labels.iter().filter(|&&l| l != NOISE) {
        size[l as usize] += 1;
    }
    let (mut total, mut count) = (0.0, 0usize);
    let mut sums = vec![0.0; k];
    for i in 0..labels.len() {
        let li = labels[i];
        if li == NOISE {
            continue;
        }
        count += 1;
        if size[li as usize] < 2 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..labels.len() {
            if labels[j] != NOISE && j != i {
                sums[labels[j] as usize] += dist.get(i, j);
            }
        }
        let a = sums[li as usize] / (size[li as usize] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li as usize && size[c] > 0)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// `None` picks the k-distance elbow with k = min_pts.
    pub eps: Option<f64>,
    pub min_pts: usize,
    pub metric: Metric,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            eps: None,
            min_pts: DEFAULT_MIN_PTS,
            metric: Metric::Euclidean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<i32>,
    pub clusters: usize,
    pub noise: usize,
    pub eps: f64,
    /// Euclidean, on the original vectors.
    pub silhouette: Option<f64>,
}

pub fn cluster(vectors: &[Vec<f64>], config: &ClusterConfig) -> Result<ClusterResult> {
    check_rows(vectors, 2)?;
    let euclid = Distances::new(vectors, Metric::Euclidean)?;
    let other = match config.metric {
        Metric::Euclidean => None,
        Metric::Cosine => Some(Distances::new(vectors, Metric::Cosine)?),
    };
    let dist = other.as_ref().unwrap_or(&euclid);
    let eps = match config.eps {
        Some(e) => e,
        None => elbow_eps(dist, config.min_pts),
    };
    let labels = dbscan_with(dist, vectors, eps, config.min_pts)?;
    let clusters = labels.iter().copied().max().map_or(0, |m| (m + 1) as usize);
    Ok(ClusterResult {
        coords: project_2d(vectors)?,
        noise: labels.iter().filter(|&&l| l == NOISE).count(),
        silhouette: silhouette(&euclid, &labels),
        labels,
        clusters,
        eps,
    })
}

impl ClusterResult {
    /// clusters.tsv: `address<TAB>x<TAB>y<TAB>label`.
    pub fn to_tsv(&self, addresses: &[Ipv6Addr]) -> String {
        let mut out = format!("# {CLUSTERS_FORMAT}\n");
        for ((a, c), l) in addresses.iter().zip(&self.coords).zip(&self.labels) {
            out.push_str(&format!("{}\t{:.8e}\t{:.8e}\t{l}\n", format_address(*a), c[0], c[1]));
        }
        out
    }

    pub fn summary(&self) -> ClusterSummary {
        ClusterSummary {
            clusters: self.clusters,
            noise: self.noise,
            points: self.labels.len(),
            eps: self.eps,
            silhouette: self.silhouette,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub clusters: usize,
    pub noise: usize,
    pub points: usize,
    pub eps: f64,
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub format_version: String,
    pub config: ClusterConfig,
    pub embedding: ClusterSummary,
    pub one_hot: ClusterSummary,
    /// Embedding silhouette minus one-hot silhouette; an undefined score
    /// counts as −1.
    pub margin: f64,
}

impl BaselineReport {
    pub fn embedding_wins(&self) -> bool {
        self.margin > 0.0
    }
}

/// Clusters both representations of the same addresses with the same
/// settings and sets their silhouettes side by side.
pub fn compare_baseline(
    embed_vectors: &[Vec<f64>],
    onehot_vectors: &[Vec<f64>],
    config: &ClusterConfig,
) -> Result<(BaselineReport, ClusterResult, ClusterResult)> {
    if embed_vectors.len() != onehot_vectors.len() {
        return Err(Error::shape("embedding and one-hot sets differ in size"));
    }
    let e = cluster(embed_vectors, config)?;
    let o = cluster(onehot_vectors, config)?;
    let score = |r: &ClusterResult| r.silhouette.unwrap_or(-1.0);
    let report = BaselineReport {
        format_version: CLUSTERS_FORMAT.to_string(),
        config: config.clone(),
        embedding: e.summary(),
        one_hot: o.summary(),
        margin: score(&e) - score(&o),
    };
    Ok((report, e, o))
}

/// Whether two labelings induce the same partition, noise included.
pub fn same_partition(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        (x == NOISE) == (y == NOISE) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, centres: &[[f64; 3]], spread: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        centres
            .iter()
            .flat_map(|c| {
                (0..n)
                    .map(|_| c.iter().map(|x| x + spread * rng.gen_range(-1.0..1.0)).collect())
                    .collect::<Vec<Vec<f64>>>()
            })
            .collect()
    }

    /// Textbook DBSCAN: expand from each unvisited core point; border
    /// points take the first cluster that reaches them.
    fn reference_dbscan(v: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i32> {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let nb = |i: usize| (0..v.len()).filter(|&j| d(&v[i], &v[j]) <= eps).collect::<Vec<_>>();
        let mut labels = vec![NOISE; v.len()];
        let mut visited = vec![false; v.len()];
        let mut c = 0;
        for i in 0..v.len() {
            if visited[i] {
                continue;
            }
            visited[i] = true;
            let n = nb(i);
            if n.len() < min_pts {
                continue;
            }
            labels[i] = c;
            let mut queue = n;
            while let Some(q) = queue.pop() {
                if labels[q] == NOISE {
                    labels[q] = c;
                }
                if !visited[q] {
                    visited[q] = true;
                    let m = nb(q);
                    if m.len() >= min_pts {
                        queue.extend(m);
                    }
                }
            }
            c += 1;
        }
        labels
    }

    #[test]
    fn two_separated_blobs() {
        let v = blobs(40, &[[0.0; 3], [10.0, 0.0, 0.0]], 0.5, 1);
        let labels = dbscan(&v, 1.0, 5, Metric::Euclidean).unwrap();
        assert!(same_partition(&labels, &reference_dbscan(&v, 1.0, 5)));
        assert_eq!(labels.iter().copied().max(), Some(1));
        assert!(labels.iter().all(|&l| l != NOISE));
        let r = cluster(&v, &ClusterConfig::default()).unwrap();
        assert_eq!((r.clusters, r.noise), (2, 0));
        assert!(r.silhouette.unwrap() > 0.8);
    }

    #[test]
    fn identical_points_and_tiny_eps() {
        let v = vec![vec![1.0, 2.0]; 10];
        assert_eq!(dbscan(&v, 1e-9, 5, Metric::Euclidean).unwrap(), vec![0; 10]);
        let r = cluster(&v, &ClusterConfig::default()).unwrap();
        assert_eq!(r.clusters, 1);
        assert!(r.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));
        let spread = blobs(30, &[[0.0; 3]], 1.0, 2);
        assert!(dbscan(&spread, 1e-9, 2, Metric::Euclidean).unwrap().iter().all(|&l| l == NOISE));
        assert!(dbscan(&spread, 0.0, 2, Metric::Euclidean).is_err());
    }

    #[test]
    fn order_invariance() {
        let v = blobs(30, &[[0.0; 3], [3.0, 0.0, 0.0], [0.0, 3.0, 1.0]], 1.2, 3);
        let labels = dbscan(&v, 0.9, 5, Metric::Euclidean).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..v.len()).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| v[i].clone()).collect();
            let l2 = dbscan(&shuffled, 0.9, 5, Metric::Euclidean).unwrap();
            let mut back = vec![0; v.len()];
            for (k, &i) in perm.iter().enumerate() {
                back[i] = l2[k];
            }
            assert!(same_partition(&labels, &back));
        }
    }

    #[test]
    fn pca_properties() {
        let rot = |t: f64, p: [f64; 2]| vec![t.cos() * p[0] - t.sin() * p[1], t.sin() * p[0] + t.cos() * p[1]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<Vec<f64>> = (0..200).map(|_| rot(0.4, [3.0 * rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])).collect();
        let c = project_2d(&v).unwrap();
        let var = |k: usize| c.iter().map(|p| p[k] * p[k]).sum::<f64>();
        let mean: Vec<f64> = (0..2).map(|k| v.iter().map(|p| p[k]).sum::<f64>() / 200.0).collect();
        let total: f64 = v.iter().map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2)).sum();
        assert!((var(0) + var(1) - total).abs() < 1e-9 * total);
        assert!(var(0) >= var(1));
        // pairwise distances survive a rotation
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let e = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!((d(c[0], c[1]) - e(&v[0], &v[1])).abs() < 1e-9);
        assert!(project_2d(&v[..1]).is_err());
    }

    #[test]
    fn pca_recovers_axes_in_high_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..20).map(|j| rng.gen_range(-1.0..1.0) * if j == 7 { 10.0 } else if j == 3 { 5.0 } else { 0.1 }).collect())
            .collect();
        let c = project_2d(&v).unwrap();
        let mean7 = v.iter().map(|p| p[7]).sum::<f64>() / 300.0;
        let corr: f64 = c.iter().zip(&v).map(|(p, x)| p[0] * (x[7] - mean7)).sum::<f64>();
        assert!(corr > 0.0);
        let var = |k: usize| c.iter().map(|p| p[k] * p[k]).sum::<f64>() / 300.0;
        assert!((var(0) - 100.0 / 3.0).abs() < 5.0 && (var(1) - 25.0 / 3.0).abs() < 2.0);
    }

    #[test]
    fn silhouette_bounds_and_baseline_symmetry() {
        let v = blobs(20, &[[0.0; 3], [4.0, 0.0, 0.0]], 1.0, 7);
        let dist = Distances::new(&v, Metric::Euclidean).unwrap();
        let labels: Vec<i32> = (0..40).map(|i| (i / 20) as i32).collect();
        let s = silhouette(&dist, &labels).unwrap();
        assert!((-1.0..=1.0).contains(&s) && s > 0.5);
        assert_eq!(silhouette(&dist, &vec![0; 40]), None);
        let (r, _, _) = compare_baseline(&v, &v, &ClusterConfig::default()).unwrap();
        assert_eq!(r.embedding, r.one_hot);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn cosine_metric_ignores_scale() {
        let mut v = blobs(20, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 0.05, 8);
        for (i, x) in v.iter_mut().enumerate() {
            let s = 1.0 + (i % 5) as f64;
            x.iter_mut().for_each(|y| *y *= s);
        }
        let labels = dbscan(&v, 0.05, 5, Metric::Cosine).unwrap();
        let want: Vec<i32> = (0..40).map(|i| (i / 20) as i32).collect();
        assert!(same_partition(&labels, &want));
    }
}
