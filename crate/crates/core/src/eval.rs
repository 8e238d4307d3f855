//! Evaluation: BLEU-1..4, per-type accuracy, binary confusion matrix and
//! stratified fold splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::identify::Binary;
use crate::jsonl::{self, JsonlError};
use crate::label::{Label, ScreenType};

pub const MAX_BLEU_ORDER: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("candidate has no tokens")]
    EmptyCandidate,
    #[error("no non-empty reference")]
    EmptyReference,
    #[error("BLEU order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("need at least 2 folds, got {0}")]
    InvalidFoldCount(usize),
    #[error("{groups} groups cannot fill {folds} folds")]
    TooFewGroups { groups: usize, folds: usize },
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Smoothing {
    /// Zero precision at any order makes the score zero.
    #[default]
    None,
    /// Add one to numerator and denominator of precisions above unigrams.
    AddOne,
}

/// Sufficient statistics for BLEU: clipped matches and candidate n-gram
/// totals per order, candidate length and effective reference length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_BLEU_ORDER],
    pub totals: [usize; MAX_BLEU_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn from_pair(candidate: &str, references: &[&str]) -> Result<Self, EvalError> {
        let cand = tokenize(candidate);
        let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
        if refs.is_empty() || refs.iter().any(Vec::is_empty) {
            return Err(EvalError::EmptyReference);
        }
        let mut s = BleuStats {
            candidate_len: cand.len(),
            // Closest reference length, shorter wins ties.
            reference_len: refs
                .iter()
                .map(Vec::len)
                .min_by_key(|&l| (l.abs_diff(cand.len()), l))
                .expect("non-empty"),
            ..Default::default()
        };
        for n in 1..=MAX_BLEU_ORDER {
            let cand_counts = ngram_counts(&cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            s.totals[n - 1] = cand.len().saturating_sub(n - 1);
            s.matches[n - 1] = cand_counts
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
        }
        Ok(s)
    }

    pub fn add(&mut self, other: &BleuStats) {
        for i in 0..MAX_BLEU_ORDER {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let ratio = self.reference_len as f64 / self.candidate_len as f64;
        (1.0 - ratio).exp().min(1.0)
    }

    pub fn score(&self, n: usize, smoothing: Smoothing) -> Result<f64, EvalError> {
        if !(1..=MAX_BLEU_ORDER).contains(&n) {
            return Err(EvalError::InvalidOrder(n));
        }
        if self.candidate_len == 0 {
            return Err(EvalError::EmptyCandidate);
        }
        let mut log_sum = 0.0;
        for i in 0..n {
            let (m, t) = match smoothing {
                Smoothing::AddOne if i > 0 => (self.matches[i] + 1, self.totals[i] + 1),
                _ => (self.matches[i], self.totals[i]),
            };
            if m == 0 || t == 0 {
                return Ok(0.0);
            }
            log_sum += (m as f64 / t as f64).ln();
        }
        Ok(self.brevity_penalty() * (log_sum / n as f64).exp())
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-n of one candidate against its references, without smoothing.
pub fn bleu_n(candidate: &str, references: &[&str], n: usize) -> Result<f64, EvalError> {
    bleu_n_with(candidate, references, n, Smoothing::None)
}

pub fn bleu_n_with(candidate: &str, references: &[&str], n: usize, smoothing: Smoothing) -> Result<f64, EvalError> {
    if tokenize(candidate).is_empty() {
        return Err(EvalError::EmptyCandidate);
    }
    BleuStats::from_pair(candidate, references)?.score(n, smoothing)
}

/// Corpus BLEU-1..4 over (candidate, references) pairs.
pub fn corpus_bleu<S: AsRef<str>>(pairs: &[(S, Vec<S>)], smoothing: Smoothing) -> Result<[f64; 4], EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut total = BleuStats::default();
    for (c, refs) in pairs {
        let refs: Vec<&str> = refs.iter().map(AsRef::as_ref).collect();
        total.add(&BleuStats::from_pair(c.as_ref(), &refs)?);
    }
    let mut out = [0.0; 4];
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = total.score(n + 1, smoothing)?;
    }
    Ok(out)
}

/// Predicted × actual counts with Screen as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix2x2 {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix2x2 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix2x2 { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    /// tp / (tp + fn), a.k.a. recall.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn metrics(&self) -> BinaryMetrics {
        BinaryMetrics {
            matrix: *self,
            accuracy: self.accuracy(),
            sensitivity: self.sensitivity(),
            precision: self.precision(),
            specificity: self.specificity(),
        }
    }
}

/// Counts (predicted, actual) pairs into a confusion matrix.
pub fn confusion(pairs: &[(Binary, Binary)]) -> Result<ConfusionMatrix2x2, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut m = ConfusionMatrix2x2::default();
    for &(pred, actual) in pairs {
        match (pred, actual) {
            (Binary::Screen, Binary::Screen) => m.tp += 1,
            (Binary::Screen, Binary::NonScreen) => m.fp += 1,
            (Binary::NonScreen, Binary::Screen) => m.fn_ += 1,
            (Binary::NonScreen, Binary::NonScreen) => m.tn += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub matrix: ConfusionMatrix2x2,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
}

/// Fraction of groups of each actual screen type whose primary prediction is
/// that type. Types without samples are absent; non-screen actuals are skipped.
pub fn per_type_accuracy(pairs: &[(Label, Label)]) -> BTreeMap<ScreenType, f64> {
    let mut tally: BTreeMap<ScreenType, (usize, usize)> = BTreeMap::new();
    for &(pred, actual) in pairs {
        if let Some(t) = actual.screen_type() {
            let e = tally.entry(t).or_insert((0, 0));
            e.1 += 1;
            if pred == actual {
                e.0 += 1;
            }
        }
    }
    tally
        .into_iter()
        .map(|(t, (ok, n))| (t, ok as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldItem {
    pub group_id: String,
    pub label: Option<Label>,
}

/// Splits groups into `n_folds` disjoint folds whose sizes differ by at most one.
///
/// Groups are stratified by label: each stratum is shuffled with a seeded
/// ChaCha8 generator and the strata are dealt round-robin in label order.
/// Each fold is returned sorted by group id.
pub fn make_folds(items: &[FoldItem], n_folds: usize, seed: u64) -> Result<Vec<Vec<String>>, EvalError> {
    if n_folds < 2 {
        return Err(EvalError::InvalidFoldCount(n_folds));
    }
    if items.is_empty() || n_folds > items.len() {
        return Err(EvalError::TooFewGroups {
            groups: items.len(),
            folds: n_folds,
        });
    }
    let mut strata: BTreeMap<Option<Label>, Vec<&str>> = BTreeMap::new();
    for it in items {
        strata.entry(it.label).or_default().push(&it.group_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); n_folds];
    let mut slot = 0;
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            folds[slot % n_folds].push(id.to_string());
            slot += 1;
        }
    }
    for f in folds.iter_mut() {
        f.sort();
    }
    Ok(folds)
}

/// Everything known about one evaluated group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub group_id: String,
    /// Generated description, when available.
    pub candidate: Option<String>,
    /// Reference captions (member frame annotations).
    pub references: Vec<String>,
    pub predicted: Label,
    pub predicted_binary: Binary,
    pub actual: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold_id: Option<usize>,
    pub groups: usize,
    /// Corpus BLEU-1..4 over groups with both a description and references.
    pub bleu: Option<[f64; 4]>,
    pub per_type_accuracy: BTreeMap<ScreenType, f64>,
    pub binary: BinaryMetrics,
}

pub fn evaluate(records: &[EvalRecord], fold_id: Option<usize>, smoothing: Smoothing) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let pairs: Vec<(&str, Vec<&str>)> = records
        .iter()
        .filter_map(|r| {
            let c = r.candidate.as_deref()?;
            let refs: Vec<&str> = r
                .references
                .iter()
                .map(String::as_str)
                .filter(|s| !tokenize(s).is_empty())
                .collect();
            (!refs.is_empty()).then_some((c, refs))
        })
        .collect();
    let bleu = if pairs.is_empty() {
        None
    } else {
        match corpus_bleu(&pairs, smoothing) {
            Ok(b) => Some(b),
            Err(EvalError::EmptyCandidate) => Some([0.0; 4]),
            Err(e) => return Err(e),
        }
    };
    let type_pairs: Vec<(Label, Label)> = records.iter().map(|r| (r.predicted, r.actual)).collect();
    let bin_pairs: Vec<(Binary, Binary)> = records
        .iter()
        .map(|r| (r.predicted_binary, Binary::from(r.actual)))
        .collect();
    Ok(EvalReport {
        fold_id,
        groups: records.len(),
        bleu,
        per_type_accuracy: per_type_accuracy(&type_pairs),
        binary: confusion(&bin_pairs)?.metrics(),
    })
}

/// Per-fold reports (folds with no records are skipped) plus the aggregate.
pub fn cross_validate(
    records: &[EvalRecord],
    folds: &[Vec<String>],
    smoothing: Smoothing,
) -> Result<(Vec<EvalReport>, EvalReport), EvalError> {
    let mut reports = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let ids: HashSet<&str> = fold.iter().map(String::as_str).collect();
        let subset: Vec<EvalRecord> = records
            .iter()
            .filter(|r| ids.contains(r.group_id.as_str()))
            .cloned()
            .collect();
        if !subset.is_empty() {
            reports.push(evaluate(&subset, Some(i + 1), smoothing)?);
        }
    }
    Ok((reports, evaluate(records, None, smoothing)?))
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<(), EvalError> {
    Ok(jsonl::write(path, records)?)
}
