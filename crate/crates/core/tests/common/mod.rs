//! Independent reference implementations used as test oracles. None of these
//! call into the library's rank or linear-algebra code.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn dense_ranks(values: &[f64]) -> Vec<f64> {
    let mut uniq = values.to_vec();
    uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    uniq.dedup();
    values
        .iter()
        .map(|v| (uniq.iter().position(|u| u == v).unwrap() + 1) as f64)
        .collect()
}

fn weighted_rank_naive(values: &[f64], w: &[f64]) -> Vec<f64> {
    let r = dense_ranks(values);
    let n = values.len();
    (0..n)
        .map(|i| {
            let mut a = 0.0;
            let mut tie_sum = 0.0;
            let mut t = 0.0;
            for k in 0..n {
                if r[k] < r[i] {
                    a += w[k];
                }
                if r[k] == r[i] {
                    tie_sum += w[k];
                    t += 1.0;
                }
            }
            a + (t + 1.0) / 2.0 * (tie_sum / t)
        })
        .collect()
}

fn weighted_pearson_naive(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let xh = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let yh = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..x.len() {
        num += w[i] * (x[i] - xh) * (y[i] - yh);
        dx += w[i] * (x[i] - xh) * (x[i] - xh);
        dy += w[i] * (y[i] - yh) * (y[i] - yh);
    }
    num / (dx * dy).sqrt()
}

/// Weighted Spearman (×100) computed term by term from its defining
/// equations.
pub fn wsc_oracle(v: &[f64], a: &[f64]) -> f64 {
    let rv = dense_ranks(v);
    let ra = dense_ranks(a);
    let mv = rv.iter().cloned().fold(0.0, f64::max);
    let ma = ra.iter().cloned().fold(0.0, f64::max);
    let w: Vec<f64> = (0..v.len())
        .map(|i| {
            let m = (rv[i] / mv).max(ra[i] / ma);
            m * m
        })
        .collect();
    let x = weighted_rank_naive(v, &w);
    let y = weighted_rank_naive(a, &w);
    100.0 * weighted_pearson_naive(&x, &y, &w)
}

/// Average (fractional) ranks: 1 + #smaller + (#equal − 1) / 2.
pub fn average_ranks_oracle(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|u| *u < v).count() as f64;
            let equal = values.iter().filter(|u| *u == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Tie-corrected Spearman (×100): Pearson of average ranks.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let rx = average_ranks_oracle(x);
    let ry = average_ranks_oracle(y);
    100.0 * weighted_pearson_naive(&rx, &ry, &vec![1.0; x.len()])
}

/// Random series of length `n`; with `ties` the values are drawn from a
/// small grid so that repeats are common.
pub fn random_series(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if ties {
                f64::from(rng.random_range(0..(n as u32 / 3).max(2)))
            } else {
                rng.random::<f64>()
            }
        })
        .collect()
}

/// Singular values of a row-major `rows × cols` matrix by one-sided Jacobi
/// rotations on the columns (after transposing so that rows ≥ cols).
pub fn jacobi_singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    let mut cols_data: Vec<Vec<f64>> = if rows >= cols {
        (0..cols).map(|j| (0..rows).map(|i| data[i * cols + j]).collect()).collect()
    } else {
        (0..rows).map(|i| data[i * cols..(i + 1) * cols].to_vec()).collect()
    };
    let n = cols_data.len();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = cols_data[p]
                    .iter()
                    .zip(&cols_data[q])
                    .fold((0.0, 0.0, 0.0), |(a, b, g), (x, y)| (a + x * x, b + y * y, g + x * y));
                if gamma.abs() <= 1e-13 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols_data.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols_data
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

/// AATN by brute force: for every run find the first best-scoring
/// checkpoint, then take the n runs whose best score is highest (earlier
/// runs first on ties) and average their accuracies.
pub fn aatn_oracle(runs: &[(Vec<f64>, Vec<f64>)], n: usize) -> f64 {
    let mut best: Vec<(usize, f64, f64)> = Vec::new();
    for (r, (scores, accs)) in runs.iter().enumerate() {
        let mut idx = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[idx] {
                idx = i;
            }
        }
        best.push((r, scores[idx], accs[idx]));
    }
    let mut chosen = Vec::new();
    while chosen.len() < n {
        let mut pick: Option<(usize, f64, f64)> = None;
        for cand in &best {
            if chosen.iter().any(|c: &(usize, f64, f64)| c.0 == cand.0) {
                continue;
            }
            if pick.is_none_or(|p| cand.1 > p.1) {
                pick = Some(*cand);
            }
        }
        chosen.push(pick.unwrap());
    }
    chosen.iter().map(|c| c.2).sum::<f64>() / n as f64
}

/// Mean silhouette by the per-sample double loop; singleton clusters score 0.
pub fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..points.len() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..points.len() {
            if i != j {
                sums[labels[j]] += dist(&points[i], &points[j]);
                counts[labels[j]] += 1;
            }
        }
        if counts[labels[i]] == 0 {
            continue;
        }
        let a = sums[labels[i]] / counts[labels[i]] as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / points.len() as f64
}
