//! Scoring pipeline output against human annotations.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::GoldLabel;
use crate::taxonomy::{SourceClass, ThemeLabel, UnknownLabel};

pub use report::{
    evaluate, load_metrics, prevalence, write_prevalence_csv, write_report_csv, EvalReport,
    MetricsRow, PrevalenceRow, ThemeReport,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("case {0} has a gold label but no prediction")]
    MissingPrediction(String),
    #[error("case {0} has a prediction but no gold label")]
    MissingGold(String),
    #[error("{pred} predictions but {gold} gold labels")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("recall must be positive to adjust a fraction")]
    ZeroRecall,
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("no item has two or more annotations")]
    NoPairableValues,
    #[error("gold label for case {case_id}: {source}")]
    Label {
        case_id: String,
        source: UnknownLabel,
    },
    #[error("metrics file row {row}: {message}")]
    Metrics { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One annotator's labels for one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub case_id: String,
    pub annotator_id: Option<String>,
    pub themes: BTreeSet<ThemeLabel>,
    pub online_mentioned: bool,
    pub source: Option<SourceClass>,
}

impl TryFrom<&GoldLabel> for GoldAnnotation {
    type Error = EvalError;

    fn try_from(g: &GoldLabel) -> Result<Self, EvalError> {
        let label = |source| EvalError::Label {
            case_id: g.case_id.clone(),
            source,
        };
        let source = if g.source_of_info.trim().is_empty() {
            None
        } else {
            Some(g.source_class().map_err(label)?)
        };
        Ok(GoldAnnotation {
            case_id: g.case_id.clone(),
            annotator_id: g.annotator_id.clone(),
            themes: g.theme_set().map_err(label)?,
            online_mentioned: g.online_mentioned,
            source,
        })
    }
}

pub fn gold_annotations(labels: &[GoldLabel]) -> Result<Vec<GoldAnnotation>, EvalError> {
    labels.iter().map(GoldAnnotation::try_from).collect()
}

/// Consensus label of a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consensus {
    pub themes: BTreeSet<ThemeLabel>,
    pub online_mentioned: bool,
    pub source: Option<SourceClass>,
    pub n_annotators: usize,
}

/// Majority vote per case. A tied binary vote counts as positive. For the
/// source the most frequent class wins, ties going to the earlier class in
/// `SourceClass::ALL`.
pub fn consensus(annotations: &[GoldAnnotation]) -> BTreeMap<String, Consensus> {
    let mut by_case: BTreeMap<&str, Vec<&GoldAnnotation>> = BTreeMap::new();
    for a in annotations {
        by_case.entry(&a.case_id).or_default().push(a);
    }
    by_case
        .into_iter()
        .map(|(id, group)| {
            let n = group.len();
            let majority = |k: usize| 2 * k >= n;
            let themes = ThemeLabel::ALL
                .into_iter()
                .filter(|t| majority(group.iter().filter(|a| a.themes.contains(t)).count()))
                .collect();
            let online_mentioned = majority(group.iter().filter(|a| a.online_mentioned).count());
            let mut votes = [0usize; 5];
            for a in &group {
                if let Some(s) = a.source {
                    votes[s.index()] += 1;
                }
            }
            let best = votes.iter().copied().max().unwrap_or(0);
            let source = (best > 0)
                .then(|| SourceClass::ALL[votes.iter().position(|v| *v == best).unwrap()]);
            (
                id.to_string(),
                Consensus {
                    themes,
                    online_mentioned,
                    source,
                    n_annotators: n,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Tallies `(predicted, gold)` pairs.
    pub fn tally(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (p, g) in pairs {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn prf(&self) -> Prf {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        Prf::new(
            ratio(self.tp, self.tp + self.fp),
            ratio(self.tp, self.tp + self.fn_),
        )
    }
}

/// Precision, recall and F1. `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl Prf {
    pub fn new(precision: Option<f64>, recall: Option<f64>) -> Self {
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Per-theme counts over cases present in both maps.
pub fn theme_counts(
    pred: &BTreeMap<String, BTreeSet<ThemeLabel>>,
    gold: &BTreeMap<String, BTreeSet<ThemeLabel>>,
    theme: ThemeLabel,
) -> Result<ConfusionCounts, EvalError> {
    if let Some(id) = gold.keys().find(|k| !pred.contains_key(*k)) {
        return Err(EvalError::MissingPrediction(id.clone()));
    }
    if let Some(id) = pred.keys().find(|k| !gold.contains_key(*k)) {
        return Err(EvalError::MissingGold(id.clone()));
    }
    Ok(ConfusionCounts::tally(gold.iter().map(|(id, g)| {
        (pred[id].contains(&theme), g.contains(&theme))
    })))
}

pub fn prf(
    pred: &BTreeMap<String, BTreeSet<ThemeLabel>>,
    gold: &BTreeMap<String, BTreeSet<ThemeLabel>>,
    theme: ThemeLabel,
) -> Result<Prf, EvalError> {
    Ok(theme_counts(pred, gold, theme)?.prf())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Items with at least two values.
    pub n_items: usize,
    pub n_annotators_range: (usize, usize),
}

/// Nominal Krippendorff's alpha. Each item lists the values it received;
/// missing annotations are simply absent. Items with fewer than two values
/// cannot be paired and are ignored.
pub fn krippendorff_alpha<T: Ord + Clone>(items: &[Vec<T>]) -> Result<AlphaResult, EvalError> {
    let mut values: BTreeMap<T, usize> = BTreeMap::new();
    for v in items.iter().flatten() {
        let next = values.len();
        values.entry(v.clone()).or_insert(next);
    }
    let k = values.len();
    let mut o = vec![vec![0.0f64; k]; k];
    let mut n_items = 0;
    let (mut lo, mut hi) = (usize::MAX, 0);
    for item in items.iter().filter(|i| i.len() >= 2) {
        n_items += 1;
        lo = lo.min(item.len());
        hi = hi.max(item.len());
        let w = 1.0 / (item.len() - 1) as f64;
        for (i, a) in item.iter().enumerate() {
            for (j, b) in item.iter().enumerate() {
                if i != j {
                    o[values[a]][values[b]] += w;
                }
            }
        }
    }
    if n_items == 0 {
        return Err(EvalError::NoPairableValues);
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += o[c][d];
                expected += n_c[c] * n_c[d];
            }
        }
    }
    let alpha = if observed == 0.0 {
        1.0
    } else {
        1.0 - (n - 1.0) * observed / expected
    };
    Ok(AlphaResult {
        alpha,
        n_items,
        n_annotators_range: (lo, hi),
    })
}

/// Alpha on the presence of `theme`, over cases annotated more than once.
pub fn theme_alpha(
    annotations: &[GoldAnnotation],
    theme: ThemeLabel,
) -> Result<AlphaResult, EvalError> {
    let mut by_case: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for a in annotations {
        by_case
            .entry(&a.case_id)
            .or_default()
            .push(a.themes.contains(&theme));
    }
    let items: Vec<Vec<bool>> = by_case.into_values().collect();
    krippendorff_alpha(&items)
}

/// Rows are gold classes, columns predicted classes, both in
/// `SourceClass::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceConfusion {
    pub counts: [[u64; 5]; 5],
}

impl SourceConfusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (SourceClass, SourceClass)>) -> Self {
        let mut m = SourceConfusion::default();
        for (pred, gold) in pairs {
            m.counts[gold.index()][pred.index()] += 1;
        }
        m
    }

    pub fn gold_total(&self, class: SourceClass) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn predicted_total(&self, class: SourceClass) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }

    fn hit(&self, class: SourceClass) -> u64 {
        self.counts[class.index()][class.index()]
    }

    pub fn precision(&self, class: SourceClass) -> Option<f64> {
        let d = self.predicted_total(class);
        (d > 0).then(|| self.hit(class) as f64 / d as f64)
    }

    pub fn recall(&self, class: SourceClass) -> Option<f64> {
        let d = self.gold_total(class);
        (d > 0).then(|| self.hit(class) as f64 / d as f64)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let hits: u64 = SourceClass::ALL.iter().map(|c| self.hit(*c)).sum();
        let t = self.total();
        (t > 0).then(|| hits as f64 / t as f64)
    }
}

/// Confusion of aligned prediction and gold lists.
pub fn source_confusion(
    pred: &[SourceClass],
    gold: &[SourceClass],
) -> Result<SourceConfusion, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    Ok(SourceConfusion::from_pairs(
        pred.iter().copied().zip(gold.iter().copied()),
    ))
}

/// Raw fraction scaled by precision over recall: the expected true
/// fraction once false positives are removed and misses added back.
pub fn adjusted_fraction(fraction: f64, precision: f64, recall: f64) -> Result<f64, EvalError> {
    for (name, value) in [
        ("fraction", fraction),
        ("precision", precision),
        ("recall", recall),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(EvalError::OutOfRange { name, value });
        }
    }
    if recall == 0.0 {
        return Err(EvalError::ZeroRecall);
    }
    Ok(fraction * precision / recall)
}
