//! k-means and the two cluster-quality statistics used by ClassAMI and
//! ClassSS: adjusted mutual information and the silhouette score.

use std::collections::BTreeMap;

use rand::Rng;

use crate::kernels::Matrix;
use crate::seed::rng_for;

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("points must have at least one dimension")]
    NoDimensions,
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("silhouette needs at least two distinct clusters")]
    SingleCluster,
    #[error("empty input")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia improvement falls to this value.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid for every point (lowest index on ties) and the total
/// squared distance.
fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter_rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter_rows().enumerate() {
            let d = sq_dist(p, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    inertia
}

fn kmeans_plus_plus<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let d = points.cols();
    let mut centers = Vec::with_capacity(k * d);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(points.row(first));
    let mut closest: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(first))).collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &c) in closest.iter().enumerate() {
                if c <= 0.0 {
                    continue;
                }
                if target < c {
                    pick = Some(i);
                    break;
                }
                target -= c;
            }
            // Round-off can run past the end; fall back to the last candidate.
            pick.unwrap_or_else(|| closest.iter().rposition(|&c| c > 0.0).unwrap())
        } else {
            // Every remaining point coincides with a center.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let row = points.row(pick);
        centers.extend_from_slice(row);
        for (i, p) in points.iter_rows().enumerate() {
            closest[i] = closest[i].min(sq_dist(p, row));
        }
    }
    Matrix::new(k, d, centers)
}

/// Lloyd iterations from the given centroids. Returns the result and the
/// inertia after every assignment step.
pub(crate) fn lloyd(points: &Matrix, mut centroids: Matrix, config: &KMeansConfig) -> (ClusterAssignment, Vec<f64>) {
    let n = points.rows();
    let k = centroids.rows();
    let d = points.cols();
    let mut labels = vec![0; n];
    let mut inertia = assign(points, &centroids, &mut labels);
    let mut history = vec![inertia];
    let mut iterations = 0;
    let mut next_labels = labels.clone();
    while iterations < config.max_iter {
        iterations += 1;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter_rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centroids.row_mut(j).iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                    *c = s * inv;
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<(f64, usize)> = points
                .iter_rows()
                .zip(&labels)
                .enumerate()
                .map(|(i, (p, &l))| (sq_dist(p, centroids.row(l)), i))
                .collect();
            far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (&j, &(_, i)) in empty.iter().zip(&far) {
                let row = points.row(i).to_vec();
                centroids.row_mut(j).copy_from_slice(&row);
            }
        }
        let new_inertia = assign(points, &centroids, &mut next_labels);
        history.push(new_inertia);
        let unchanged = next_labels == labels;
        std::mem::swap(&mut labels, &mut next_labels);
        let improvement = inertia - new_inertia;
        inertia = new_inertia;
        if unchanged || improvement <= config.tol * inertia.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (
        ClusterAssignment {
            labels,
            centroids,
            inertia,
            iterations,
        },
        history,
    )
}

pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    kmeans_with(points, k, seed, &KMeansConfig::default())
}

/// Best-of-restarts k-means++ / Lloyd; the lowest inertia wins, earliest
/// restart on ties.
pub fn kmeans_with(
    points: &Matrix,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusterAssignment, ClusterError> {
    let n = points.rows();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if points.cols() == 0 {
        return Err(ClusterError::NoDimensions);
    }
    if k > n {
        return Err(ClusterError::TooFewPoints { k, n });
    }
    let mut best: Option<ClusterAssignment> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = rng_for(seed, &[0x6b6d, restart as u64]);
        let init = kmeans_plus_plus(points, k, &mut rng);
        let (result, _) = lloyd(points, init, config);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Maps arbitrary labels onto `0..k`, preserving their sorted order.
fn compact_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

struct Contingency {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    cells: Vec<usize>,
}

impl Contingency {
    fn new(a: &[usize], b: &[usize]) -> Self {
        let (a, ka) = compact_labels(a);
        let (b, kb) = compact_labels(b);
        let mut cells = vec![0; ka * kb];
        let mut rows = vec![0; ka];
        let mut cols = vec![0; kb];
        for (&i, &j) in a.iter().zip(&b) {
            cells[i * kb + j] += 1;
            rows[i] += 1;
            cols[j] += 1;
        }
        Self {
            n: a.len(),
            rows,
            cols,
            cells,
        }
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let kb = self.cols.len();
        let mut mi = 0.0;
        for (i, &ri) in self.rows.iter().enumerate() {
            for (j, &cj) in self.cols.iter().enumerate() {
                let nij = self.cells[i * kb + j];
                if nij == 0 {
                    continue;
                }
                let nij = nij as f64;
                mi += nij / n * ((n * nij).ln() - (ri as f64 * cj as f64).ln());
            }
        }
        mi.max(0.0)
    }
}

fn label_entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Expected mutual information between two labelings with the given
/// marginals under the hypergeometric (random permutation) model.
fn expected_mutual_information(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let mut log_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let start = (a + b).saturating_sub(n).max(1);
            let end = a.min(b);
            let fixed = log_fact[a] + log_fact[b] + log_fact[n - a] + log_fact[n - b] - log_fact[n];
            let log_ab = (a as f64 * b as f64).ln();
            for nij in start..=end {
                let log_p = fixed
                    - log_fact[nij]
                    - log_fact[a - nij]
                    - log_fact[b - nij]
                    - log_fact[n + nij - a - b];
                let nijf = nij as f64;
                emi += nijf / nf * ((nf * nijf).ln() - log_ab) * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
/// Returns 0 when the normalizer vanishes.
pub fn adjusted_mutual_information(a: &[usize], b: &[usize]) -> Result<f64, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(ClusterError::Empty);
    }
    let table = Contingency::new(a, b);
    let mi = table.mutual_information();
    let emi = expected_mutual_information(&table.rows, &table.cols, table.n);
    let ha = label_entropy(&table.rows, table.n);
    let hb = label_entropy(&table.cols, table.n);
    let denom = 0.5 * (ha + hb) - emi;
    if denom.abs() <= 1e-15 {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// Mean silhouette over all points with Euclidean distance. Singleton
/// clusters contribute 0, as do points with `a = b = 0`.
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = points.rows();
    if labels.len() != n {
        return Err(ClusterError::LengthMismatch(n, labels.len()));
    }
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    let (labels, k) = compact_labels(labels);
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut dist_sums = vec![0.0; k];
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        dist_sums.iter_mut().for_each(|s| *s = 0.0);
        let pi = points.row(i);
        for j in 0..n {
            if j != i {
                dist_sums[labels[j]] += sq_dist(pi, points.row(j)).sqrt();
            }
        }
        let a = dist_sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| dist_sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
