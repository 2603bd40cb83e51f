//! Numerical primitives shared by the validators.
//!
//! Storage on disk is `f32`; everything here accumulates in `f64`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::store::ArrayF32;

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum KernelError {
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("probability vector has negative entry {value} at {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("row {row} is not L2-normalized (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("NaN at position {0}")]
    NaN(usize),
}

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let data: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix::new(self.rows + other.rows, self.cols, data)
    }

    pub fn to_f32(&self) -> ArrayF32 {
        ArrayF32::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .expect("shape preserved")
    }
}

impl From<&ArrayF32> for Matrix {
    fn from(a: &ArrayF32) -> Self {
        Matrix::new(
            a.rows(),
            a.cols(),
            a.data().iter().map(|&v| f64::from(v)).collect(),
        )
    }
}

/// Row-stochastic matrix of prediction vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix(Matrix);

impl ProbMatrix {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.0.iter_rows()
    }

    /// Row-wise argmax, ties to the lowest column.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.iter_rows().map(argmax).collect()
    }

    pub fn vstack(&self, other: &ProbMatrix) -> ProbMatrix {
        ProbMatrix(self.0.vstack(&other.0))
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Softmax of one row at temperature `tau`, written into `out`.
pub fn softmax_row_into(row: &[f64], tau: f64, out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = ((v - max) / tau).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(matrix: &Matrix, temperature: f64) -> Result<ProbMatrix, KernelError> {
    if temperature.is_nan() || temperature <= 0.0 || temperature.is_infinite() {
        return Err(KernelError::BadTemperature(temperature));
    }
    let mut out = Matrix::new(matrix.rows, matrix.cols, vec![0.0; matrix.data.len()]);
    for i in 0..matrix.rows {
        softmax_row_into(matrix.row(i), temperature, out.row_mut(i));
    }
    Ok(ProbMatrix(out))
}

/// Entropy in nats with `0 log 0 = 0`. Does not check the sum.
pub fn shannon_entropy(p: &[f64]) -> Result<f64, KernelError> {
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(KernelError::NegativeProbability { index, value });
    }
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    // Rounding can leave -0.0 or a tiny negative for one-hot rows.
    h.max(0.0)
}

/// Normalizes each row in place to unit L2 norm; returns the zero rows,
/// which are left untouched.
pub fn l2_normalize_rows_in_place(matrix: &mut Matrix) -> Vec<usize> {
    let mut zero_rows = Vec::new();
    for i in 0..matrix.rows {
        let row = matrix.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
            continue;
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    zero_rows
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedRows {
    pub array: ArrayF32,
    pub zero_rows: Vec<usize>,
}

/// `f32` front end of [`l2_normalize_rows_in_place`].
pub fn l2_normalize_rows(matrix: &ArrayF32) -> NormalizedRows {
    let mut m = Matrix::from(matrix);
    let zero_rows = l2_normalize_rows_in_place(&mut m);
    NormalizedRows {
        array: m.to_f32(),
        zero_rows,
    }
}

/// Sum of singular values.
///
/// Uses the eigenvalues of the smaller Gram matrix (`AᵀA` when
/// `cols <= rows`, else `AAᵀ`); round-off negatives are clamped to zero.
pub fn nuclear_norm(matrix: &Matrix) -> f64 {
    let (n, c) = (matrix.rows, matrix.cols);
    if n == 0 || c == 0 {
        return 0.0;
    }
    let gram = if c <= n {
        let mut g = DMatrix::<f64>::zeros(c, c);
        for row in matrix.iter_rows() {
            for a in 0..c {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..c {
                    g[(a, b)] += ra * row[b];
                }
            }
        }
        symmetrize_upper(&mut g);
        g
    } else {
        let mut g = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            let ra = matrix.row(a);
            for b in a..n {
                g[(a, b)] = dot(ra, matrix.row(b));
            }
        }
        symmetrize_upper(&mut g);
        g
    };
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum()
}

fn symmetrize_upper(g: &mut DMatrix<f64>) {
    let k = g.nrows();
    for a in 0..k {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `N×N` cosine similarity of L2-normalized rows.
pub fn pairwise_similarity(rows: &Matrix) -> Result<Matrix, KernelError> {
    for (i, row) in rows.iter_rows().enumerate() {
        let norm = dot(row, row).sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(KernelError::NotNormalized { row: i, norm });
        }
    }
    let n = rows.rows;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let ri = rows.row(i);
        for j in i..n {
            let s = dot(ri, rows.row(j)).clamp(-1.0, 1.0);
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Ok(Matrix::new(n, n, out))
}

/// Dense ranks starting at 1; equal values (exact equality) share a rank.
pub fn dense_rank(values: &[f64]) -> Result<Vec<usize>, KernelError> {
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(KernelError::NaN(i));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut rank = 0;
    let mut prev = None;
    for &i in &order {
        // -0.0 and 0.0 compare equal, so use == rather than total_cmp here.
        if prev != Some(values[i]) {
            rank += 1;
            prev = Some(values[i]);
        }
        ranks[i] = rank;
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Matrix {
        Matrix::new(n, c, (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn softmax_fixtures() {
        let m = Matrix::from_rows(&[[0.0, 0.0]]);
        let p = softmax(&m, 1.0).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);

        // exp(2*(x-3)) for x = 1,2,3 -> e^-4, e^-2, 1, evaluated independently.
        let p = softmax(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]), 0.5).unwrap();
        let z = (-4.0f64).exp() + (-2.0f64).exp() + 1.0;
        let expected = [(-4.0f64).exp() / z, (-2.0f64).exp() / z, 1.0 / z];
        for (a, b) in p.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        // Frozen from mpmath at 50 digits.
        assert!((p.row(0)[2] - 0.866_813_332_197_334_9).abs() < 1e-15);

        assert_eq!(
            softmax(&m, 0.0).unwrap_err(),
            KernelError::BadTemperature(0.0)
        );
        assert!(softmax(&m, -1.0).is_err());
    }

    #[test]
    fn entropy_fixtures() {
        assert_eq!(shannon_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let h = shannon_entropy(&[0.7, 0.3]).unwrap();
        assert!((h - 0.610864).abs() < 1e-6, "{h}");
        assert!(shannon_entropy(&[1.1, -0.1]).is_err());
    }

    #[test]
    fn normalize_fixtures() {
        let a = ArrayF32::from_rows(&[[3.0f32, 4.0], [0.0, 0.0], [0.6, 0.8]]);
        let n = l2_normalize_rows(&a);
        assert_eq!(n.array.row(0), &[0.6, 0.8]);
        assert_eq!(n.array.row(1), &[0.0, 0.0]);
        assert_eq!(n.array.row(2), &[0.6, 0.8]);
        assert_eq!(n.zero_rows, vec![1]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_matrix(&mut rng, 5, 3).to_f32();
        let n = l2_normalize_rows(&r);
        for row in n.array.iter_rows() {
            let norm: f64 = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-7, "{norm}");
        }
    }

    #[test]
    fn nuclear_norm_fixtures() {
        let eye = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!((nuclear_norm(&eye) - 2.0).abs() < 1e-12);
        let rank1 = Matrix::from_rows(&[[1.0, 0.0]; 4]);
        assert!((nuclear_norm(&rank1) - 2.0).abs() < 1e-12);
        let balanced = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!((nuclear_norm(&balanced) - 8f64.sqrt()).abs() < 1e-9);
        // Wide matrix goes through the row Gram.
        let wide = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0]]);
        assert!((nuclear_norm(&wide) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_fixtures() {
        let same = Matrix::from_rows(&[[0.6, 0.8], [0.6, 0.8]]);
        let s = pairwise_similarity(&same).unwrap();
        assert!((s.get(0, 1) - 1.0).abs() < 1e-12);
        let orth = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(pairwise_similarity(&orth).unwrap().get(0, 1), 0.0);
        let bad = Matrix::from_rows(&[[1.0, 1.0]]);
        assert!(matches!(
            pairwise_similarity(&bad),
            Err(KernelError::NotNormalized { row: 0, .. })
        ));
    }

    #[test]
    fn similarity_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = random_matrix(&mut rng, 4, 3);
        l2_normalize_rows_in_place(&mut m);
        let s = pairwise_similarity(&m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut naive = 0.0;
                for k in 0..3 {
                    naive += m.get(i, k) * m.get(j, k);
                }
                assert!((s.get(i, j) - naive).abs() < 1e-12);
            }
            assert!((s.get(i, i) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_rank_fixtures() {
        assert_eq!(dense_rank(&[10.0, 20.0, 20.0, 30.0]).unwrap(), vec![1, 2, 2, 3]);
        assert_eq!(dense_rank(&[4.0; 5]).unwrap(), vec![1; 5]);
        assert_eq!(dense_rank(&[1.0, f64::NAN]).unwrap_err(), KernelError::NaN(1));
        assert_eq!(dense_rank(&[0.0, -0.0, 1.0]).unwrap(), vec![1, 1, 2]);
    }

    fn sort_unique_rank(values: &[f64]) -> Vec<usize> {
        let mut uniq: Vec<f64> = values.to_vec();
        uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        uniq.dedup();
        values
            .iter()
            .map(|v| uniq.iter().position(|u| u == v).unwrap() + 1)
            .collect()
    }

    proptest! {
        #[test]
        fn dense_rank_matches_sort_unique(values in prop::collection::vec(-5i32..5, 1..40)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            prop_assert_eq!(dense_rank(&values).unwrap(), sort_unique_rank(&values));
        }

        #[test]
        fn dense_rank_monotone_invariant(values in prop::collection::vec(-5i32..5, 1..40)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let transformed: Vec<f64> = values.iter().map(|v| (v / 3.0).exp() * 7.0 - 2.0).collect();
            prop_assert_eq!(dense_rank(&values).unwrap(), dense_rank(&transformed).unwrap());
        }

        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(
            row in prop::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
            tau in 0.05f64..5.0,
        ) {
            let a = softmax(&Matrix::from_rows(std::slice::from_ref(&row)), tau).unwrap();
            let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
            let b = softmax(&Matrix::from_rows(&[shifted]), tau).unwrap();
            let sum: f64 = a.row(0).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for (x, y) in a.row(0).iter().zip(b.row(0)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn entropy_bounded(raw in prop::collection::vec(0.0f64..1.0, 1..10)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let h = shannon_entropy(&p).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.len() as f64).ln() + 1e-9);
        }
    }

    #[test]
    fn nuclear_norm_bounds_and_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = rng.random_range(1..12);
            let c = rng.random_range(1..12);
            let a = random_matrix(&mut rng, n, c);
            let nuc = nuclear_norm(&a);
            let fro = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            let rank = n.min(c) as f64;
            assert!(nuc >= fro - 1e-6, "trial {trial}");
            assert!(nuc <= rank.sqrt() * fro + 1e-6, "trial {trial}");

            let u = random_orthogonal(&mut rng, n);
            let v = random_orthogonal(&mut rng, c);
            let am = DMatrix::from_row_slice(n, c, a.data());
            let rotated = &u * am * &v;
            let rotated = Matrix::new(n, c, rotated.transpose().as_slice().to_vec());
            assert!((nuclear_norm(&rotated) - nuc).abs() < 1e-6, "trial {trial}");
        }
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }
}
