//! The eight validator families, their 35 parameterizations, and scoring of
//! a checkpoint against any subset of them.
//!
//! Every score has a raw value and an oriented value. Oriented scores are
//! "higher predicts higher target accuracy": equal to raw for Accuracy, BNM,
//! SND, ClassAMI and ClassSS, negated for Entropy, DEV and DEVN.

use std::cell::OnceCell;
use std::fmt;

use crate::clustering::{adjusted_mutual_information, kmeans, silhouette_score, ClusterError};
use crate::discriminator::{
    density_ratio_weights, predict_target_prob, train_discriminator, DiscriminatorError, TrainConfig,
};
use crate::kernels::{
    argmax, entropy_unchecked, l2_normalize_rows_in_place, nuclear_norm, pairwise_similarity, softmax,
    softmax_row_into, KernelError, Matrix, ProbMatrix,
};
use crate::store::{CheckpointRecord, Split, SplitData};

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum ValidatorError {
    #[error("{0} split has no labels")]
    MissingLabels(Split),
    #[error("split has no labels")]
    NoLabels,
    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error("unknown validator variant {0:?}")]
    UnknownVariant(String),
    #[error("zero-norm rows {0:?} cannot be L2-normalized")]
    ZeroRows(Vec<usize>),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Discriminator(#[from] DiscriminatorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Accuracy,
    Bnm,
    ClassAmi,
    ClassSs,
    Dev,
    Devn,
    Entropy,
    Snd,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Accuracy,
        Family::Bnm,
        Family::ClassAmi,
        Family::ClassSs,
        Family::Dev,
        Family::Devn,
        Family::Entropy,
        Family::Snd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Accuracy => "Accuracy",
            Family::Bnm => "BNM",
            Family::ClassAmi => "ClassAMI",
            Family::ClassSs => "ClassSS",
            Family::Dev => "DEV",
            Family::Devn => "DEVN",
            Family::Entropy => "Entropy",
            Family::Snd => "SND",
        }
    }

    /// Whether larger raw values predict higher accuracy.
    pub fn ascending(self) -> bool {
        !matches!(self, Family::Entropy | Family::Dev | Family::Devn)
    }
}

/// Which data splits a variant reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitSelector {
    SourceTrain,
    SourceVal,
    Target,
    SourceTrainTarget,
    SourceValTarget,
    /// Source train concatenated with target.
    SourceTarget,
}

impl SplitSelector {
    pub fn name(self) -> &'static str {
        match self {
            SplitSelector::SourceTrain => "SourceTrain",
            SplitSelector::SourceVal => "SourceVal",
            SplitSelector::Target => "Target",
            SplitSelector::SourceTrainTarget => "SourceTrain+Target",
            SplitSelector::SourceValTarget => "SourceVal+Target",
            SplitSelector::SourceTarget => "Source+Target",
        }
    }

    /// Splits whose per-split scores are summed.
    fn summed_splits(self) -> &'static [Split] {
        match self {
            SplitSelector::SourceTrain => &[Split::SourceTrain],
            SplitSelector::SourceVal => &[Split::SourceVal],
            SplitSelector::Target => &[Split::Target],
            SplitSelector::SourceTrainTarget => &[Split::SourceTrain, Split::Target],
            SplitSelector::SourceValTarget => &[Split::SourceVal, Split::Target],
            SplitSelector::SourceTarget => &[Split::SourceTrain, Split::Target],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representation {
    Features,
    Logits,
    /// Softmax of the logits at temperature 1.
    Preds,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Features, Representation::Logits, Representation::Preds];

    pub fn name(self) -> &'static str {
        match self {
            Representation::Features => "features",
            Representation::Logits => "logits",
            Representation::Preds => "preds",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

pub const SND_TEMPERATURES: [f64; 3] = [0.05, 0.1, 0.5];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidatorVariant {
    pub family: Family,
    pub splits: Option<SplitSelector>,
    pub representation: Option<Representation>,
    pub temperature: Option<f64>,
}

impl ValidatorVariant {
    /// Canonical name, e.g. `BNM|SourceTrain+Target` or `SND|preds|tau=0.05`.
    pub fn name(&self) -> String {
        let mut s = self.family.name().to_string();
        if let Some(sel) = self.splits {
            s.push('|');
            s.push_str(sel.name());
        }
        if let Some(r) = self.representation {
            s.push('|');
            s.push_str(r.name());
        }
        if let Some(t) = self.temperature {
            s.push_str(&format!("|tau={t}"));
        }
        s
    }

    pub fn from_name(name: &str) -> Result<ValidatorVariant, ValidatorError> {
        all_variants()
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| ValidatorError::UnknownVariant(name.to_string()))
    }

    pub fn orient(&self, raw: f64) -> f64 {
        if self.family.ascending() {
            raw
        } else {
            -raw
        }
    }
}

impl fmt::Display for ValidatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// The 35 variants in a stable order.
pub fn all_variants() -> Vec<ValidatorVariant> {
    use SplitSelector::*;
    let v = |family, splits, representation, temperature| ValidatorVariant {
        family,
        splits,
        representation,
        temperature,
    };
    let mut out = Vec::with_capacity(35);
    for s in [SourceTrain, SourceVal] {
        out.push(v(Family::Accuracy, Some(s), None, None));
    }
    let five = [SourceTrain, SourceTrainTarget, SourceVal, SourceValTarget, Target];
    for s in five {
        out.push(v(Family::Bnm, Some(s), None, None));
    }
    for family in [Family::ClassAmi, Family::ClassSs] {
        for s in [SourceTarget, Target] {
            for r in [Representation::Features, Representation::Logits] {
                out.push(v(family, Some(s), Some(r), None));
            }
        }
    }
    for family in [Family::Dev, Family::Devn] {
        for r in Representation::ALL {
            out.push(v(family, None, Some(r), None));
        }
    }
    for s in five {
        out.push(v(Family::Entropy, Some(s), None, None));
    }
    for r in Representation::ALL {
        for t in SND_TEMPERATURES {
            out.push(v(Family::Snd, None, Some(r), Some(t)));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub raw: f64,
    pub oriented: f64,
    /// Set when DEV/DEVN hit the zero-variance branch (`η = 0`).
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreEntry {
    pub variant: ValidatorVariant,
    pub result: Result<Score, ValidatorError>,
}

/// Shared settings for a scoring pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoringConfig {
    /// Seeds k-means and the domain discriminator.
    pub seed: u64,
    pub discriminator: TrainConfig,
}

impl ScoringConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            discriminator: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        }
    }
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Per-record caches so that variants sharing inputs do not recompute them.
pub struct RecordView<'a> {
    record: &'a CheckpointRecord,
    config: ScoringConfig,
    preds: [OnceCell<ProbMatrix>; 3],
    dev_inputs: [OnceCell<Result<DevInputs, ValidatorError>>; 3],
}

#[derive(Clone, Debug, PartialEq)]
struct DevInputs {
    weights: Vec<f64>,
    losses: Vec<f64>,
}

fn split_slot(split: Split) -> usize {
    match split {
        Split::SourceTrain => 0,
        Split::SourceVal => 1,
        Split::Target => 2,
    }
}

impl<'a> RecordView<'a> {
    pub fn new(record: &'a CheckpointRecord, config: ScoringConfig) -> Self {
        Self {
            record,
            config,
            preds: Default::default(),
            dev_inputs: Default::default(),
        }
    }

    pub fn record(&self) -> &CheckpointRecord {
        self.record
    }

    fn data(&self, split: Split) -> &SplitData {
        self.record.split(split)
    }

    pub fn preds(&self, split: Split) -> &ProbMatrix {
        self.preds[split_slot(split)].get_or_init(|| {
            softmax(&Matrix::from(&self.data(split).logits), 1.0).expect("temperature 1 is valid")
        })
    }

    fn representation(&self, split: Split, repr: Representation) -> Matrix {
        match repr {
            Representation::Features => Matrix::from(&self.data(split).features),
            Representation::Logits => Matrix::from(&self.data(split).logits),
            Representation::Preds => self.preds(split).as_matrix().clone(),
        }
    }

    fn predicted_labels(&self, split: Split) -> Vec<usize> {
        self.data(split)
            .logits
            .iter_rows()
            .map(|r| argmax(&r.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()))
            .collect()
    }

    pub fn score(&self, variant: &ValidatorVariant) -> Result<Score, ValidatorError> {
        let sel = variant.splits;
        let repr = variant.representation;
        let mut degenerate = false;
        let raw = match variant.family {
            Family::Accuracy => accuracy_score(self.data(single_split(sel.expect("accuracy split"))))?,
            Family::Entropy => self.summed(sel.expect("entropy split"), |s| Ok(mean_entropy(self.preds(s))))?,
            Family::Bnm => self.summed(sel.expect("bnm split"), |s| Ok(normalized_bnm(self.preds(s))))?,
            Family::Snd => {
                let r = repr.expect("snd representation");
                snd(&self.representation(Split::Target, r), variant.temperature.expect("snd tau"))?
            }
            Family::ClassAmi => self.class_ami(sel.expect("classami split"), repr.expect("classami repr"))?,
            Family::ClassSs => self.class_ss(sel.expect("classss split"), repr.expect("classss repr"))?,
            Family::Dev | Family::Devn => {
                let inputs = self.dev_inputs(repr.expect("dev representation"))?;
                let weights = if variant.family == Family::Devn {
                    max_normalize_weights(&inputs.weights)
                } else {
                    inputs.weights.clone()
                };
                let weighted: Vec<f64> = weights.iter().zip(&inputs.losses).map(|(w, l)| w * l).collect();
                let dev = dev_from_losses(&weighted, &weights);
                degenerate = dev.degenerate;
                dev.score
            }
        };
        Ok(Score {
            raw,
            oriented: variant.orient(raw),
            degenerate,
        })
    }

    fn summed(
        &self,
        sel: SplitSelector,
        per_split: impl Fn(Split) -> Result<f64, ValidatorError>,
    ) -> Result<f64, ValidatorError> {
        sel.summed_splits().iter().map(|&s| per_split(s)).sum()
    }

    fn stacked(&self, sel: SplitSelector, repr: Representation) -> (Matrix, Vec<usize>) {
        let target = self.representation(Split::Target, repr);
        let labels = self.predicted_labels(Split::Target);
        match sel {
            SplitSelector::SourceTarget => {
                let source = self.representation(Split::SourceTrain, repr);
                let mut all = self.predicted_labels(Split::SourceTrain);
                all.extend(labels);
                (source.vstack(&target), all)
            }
            _ => (target, labels),
        }
    }

    fn class_ami(&self, sel: SplitSelector, repr: Representation) -> Result<f64, ValidatorError> {
        let (points, predicted) = self.stacked(sel, repr);
        let clusters = kmeans(&points, self.record.num_classes, self.config.seed)?;
        Ok(adjusted_mutual_information(&predicted, &clusters.labels)?)
    }

    fn class_ss(&self, sel: SplitSelector, repr: Representation) -> Result<f64, ValidatorError> {
        let (mut points, _) = self.stacked(sel, repr);
        l2_normalize_rows_in_place(&mut points);
        let clusters = kmeans(&points, self.record.num_classes, self.config.seed)?;
        Ok(silhouette_score(&points, &clusters.labels)?)
    }

    fn dev_inputs(&self, repr: Representation) -> Result<&DevInputs, ValidatorError> {
        self.dev_inputs[repr.index()]
            .get_or_init(|| {
                let labels = self
                    .data(Split::SourceVal)
                    .labels
                    .as_ref()
                    .ok_or(ValidatorError::MissingLabels(Split::SourceVal))?;
                let source = self.representation(Split::SourceTrain, repr);
                let target = self.representation(Split::Target, repr);
                let model = train_discriminator(&source, &target, &self.config.discriminator)?;
                let val = self.representation(Split::SourceVal, repr);
                let probs = predict_target_prob(&model, &val)?;
                let weights = density_ratio_weights(&probs, source.rows(), target.rows());
                let losses = cross_entropy_losses(&self.data(Split::SourceVal).logits, labels);
                Ok(DevInputs { weights, losses })
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn single_split(sel: SplitSelector) -> Split {
    match sel.summed_splits() {
        [s] => *s,
        _ => unreachable!("accuracy variants use a single split"),
    }
}

/// Fraction of rows whose logit argmax (lowest index on ties) equals the label.
pub fn accuracy_score(split: &SplitData) -> Result<f64, ValidatorError> {
    let labels = split.labels.as_ref().ok_or(ValidatorError::NoLabels)?;
    if labels.is_empty() {
        return Err(ValidatorError::TooFewSamples { needed: 1, have: 0 });
    }
    let correct = split
        .logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| {
            let row: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            argmax(&row) == y as usize
        })
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn mean_entropy(p: &ProbMatrix) -> f64 {
    if p.rows() == 0 {
        return 0.0;
    }
    p.iter_rows().map(entropy_unchecked).sum::<f64>() / p.rows() as f64
}

/// Nuclear norm of the prediction matrix over `sqrt(N * min(N, C))`, its
/// largest possible value; lies in (0, 1].
pub fn normalized_bnm(p: &ProbMatrix) -> f64 {
    let (n, c) = (p.rows(), p.cols());
    if n == 0 || c == 0 {
        return 0.0;
    }
    nuclear_norm(p.as_matrix()) / ((n * n.min(c)) as f64).sqrt()
}

/// Soft neighborhood density: mean entropy of the temperature-softmaxed
/// cosine similarities of each row to every other row.
pub fn snd(points: &Matrix, tau: f64) -> Result<f64, ValidatorError> {
    let n = points.rows();
    if n < 2 {
        return Err(ValidatorError::TooFewSamples { needed: 2, have: n });
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(KernelError::BadTemperature(tau).into());
    }
    let mut normalized = points.clone();
    let zero_rows = l2_normalize_rows_in_place(&mut normalized);
    if !zero_rows.is_empty() {
        return Err(ValidatorError::ZeroRows(zero_rows));
    }
    let sim = pairwise_similarity(&normalized)?;
    let mut off_diag = vec![0.0; n - 1];
    let mut probs = vec![0.0; n - 1];
    let mut total = 0.0;
    for i in 0..n {
        let row = sim.row(i);
        off_diag[..i].copy_from_slice(&row[..i]);
        off_diag[i..].copy_from_slice(&row[i + 1..]);
        softmax_row_into(&off_diag, tau, &mut probs);
        total += entropy_unchecked(&probs);
    }
    Ok(total / n as f64)
}

/// Per-sample cross-entropy `-log softmax(logits)[label]`.
pub fn cross_entropy_losses(logits: &crate::store::ArrayF32, labels: &[u32]) -> Vec<f64> {
    logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let lse = max + row.iter().map(|&v| (f64::from(v) - max).exp()).sum::<f64>().ln();
            lse - f64::from(row[y as usize])
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DevResult {
    pub score: f64,
    pub eta: f64,
    pub degenerate: bool,
}

/// Control-variate risk estimate `mean(L) + η·mean(W) − η` with
/// `η = Cov(L, W) / Var(W)` (population moments). When `Var(W) < 1e-12`
/// the control variate is dropped and the result is flagged.
pub fn dev_from_losses(weighted_losses: &[f64], weights: &[f64]) -> DevResult {
    let n = weights.len() as f64;
    let mean_l = weighted_losses.iter().sum::<f64>() / n;
    let mean_w = weights.iter().sum::<f64>() / n;
    let var_w = weights.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / n;
    if var_w < 1e-12 {
        return DevResult {
            score: mean_l,
            eta: 0.0,
            degenerate: true,
        };
    }
    let cov = weighted_losses
        .iter()
        .zip(weights)
        .map(|(l, w)| (l - mean_l) * (w - mean_w))
        .sum::<f64>()
        / n;
    let eta = cov / var_w;
    DevResult {
        score: mean_l + eta * mean_w - eta,
        eta,
        degenerate: false,
    }
}

/// Max-normalized weights `V − mean(V) + 1` with `V = W / max(W)`; their
/// mean is exactly 1.
pub fn max_normalize_weights(weights: &[f64]) -> Vec<f64> {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = weights.iter().map(|w| w / max).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean + 1.0).collect()
}

/// Scores one record against every requested variant. Failures are
/// reported per variant.
pub fn score_all(record: &CheckpointRecord, variants: &[ValidatorVariant], config: ScoringConfig) -> Vec<ScoreEntry> {
    let view = RecordView::new(record, config);
    variants
        .iter()
        .map(|v| ScoreEntry {
            variant: *v,
            result: view.score(v),
        })
        .collect()
}
