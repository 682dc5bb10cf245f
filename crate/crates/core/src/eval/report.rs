//! Evaluation and prevalence reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    adjusted_fraction, consensus, source_confusion, theme_alpha, ConfusionCounts, EvalError,
    GoldAnnotation, Prf, SourceConfusion,
};
use crate::pipeline::CaseResult;
use crate::taxonomy::{SourceClass, ThemeLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeReport {
    pub theme: ThemeLabel,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub alpha: Option<f64>,
    /// Share of all predicted cases carrying the theme.
    pub fraction: f64,
    pub fraction_adj: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceClassReport {
    pub class: SourceClass,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub matrix: SourceConfusion,
    pub per_class: Vec<SourceClassReport>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Cases in the results file.
    pub n_predicted: usize,
    /// Cases scored against gold.
    pub n_evaluated: usize,
    pub n_multiply_annotated: usize,
    pub online: Prf,
    pub themes: Vec<ThemeReport>,
    /// Over evaluated cases that mention online activity and carry a gold source.
    pub source: Option<SourceReport>,
}

/// Scores `results` against consensus gold. `subset`, when given, restricts
/// scoring to those case ids (for example a held-out split). Every scored
/// case must have a prediction.
pub fn evaluate(
    results: &[CaseResult],
    gold: &[GoldAnnotation],
    subset: Option<&BTreeSet<String>>,
) -> Result<EvalReport, EvalError> {
    let keep = |id: &str| subset.is_none_or(|s| s.contains(id));
    let gold: Vec<GoldAnnotation> = gold.iter().filter(|g| keep(&g.case_id)).cloned().collect();
    let cons = consensus(&gold);
    let pred: BTreeMap<&str, &CaseResult> =
        results.iter().map(|r| (r.case_id.as_str(), r)).collect();
    if let Some(id) = cons.keys().find(|id| !pred.contains_key(id.as_str())) {
        return Err(EvalError::MissingPrediction(id.clone()));
    }

    let n_predicted = results.len();
    let themes = ThemeLabel::ALL
        .into_iter()
        .map(|theme| {
            let c = ConfusionCounts::tally(cons.iter().map(|(id, g)| {
                (
                    pred[id.as_str()].themes.contains(&theme),
                    g.themes.contains(&theme),
                )
            }));
            let prf = c.prf();
            let fraction = if n_predicted == 0 {
                0.0
            } else {
                results.iter().filter(|r| r.themes.contains(&theme)).count() as f64
                    / n_predicted as f64
            };
            let fraction_adj = match (prf.precision, prf.recall) {
                (Some(p), Some(r)) if r > 0.0 => adjusted_fraction(fraction, p, r).ok(),
                _ => None,
            };
            ThemeReport {
                theme,
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                alpha: theme_alpha(&gold, theme).ok().map(|a| a.alpha),
                fraction,
                fraction_adj,
            }
        })
        .collect();

    let online = ConfusionCounts::tally(
        cons.iter()
            .map(|(id, g)| (pred[id.as_str()].online_mentioned, g.online_mentioned)),
    )
    .prf();

    let (sp, sg): (Vec<SourceClass>, Vec<SourceClass>) = cons
        .iter()
        .filter(|(_, g)| g.online_mentioned)
        .filter_map(|(id, g)| g.source.map(|s| (pred[id.as_str()].source_class(), s)))
        .unzip();
    let source = if sg.is_empty() {
        None
    } else {
        let matrix = source_confusion(&sp, &sg)?;
        Some(SourceReport {
            per_class: SourceClass::ALL
                .into_iter()
                .map(|class| SourceClassReport {
                    class,
                    precision: matrix.precision(class),
                    recall: matrix.recall(class),
                })
                .collect(),
            accuracy: matrix.accuracy(),
            matrix,
        })
    };

    Ok(EvalReport {
        n_predicted,
        n_evaluated: cons.len(),
        n_multiply_annotated: cons.values().filter(|c| c.n_annotators > 1).count(),
        online,
        themes,
        source,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_report_csv<W: Write>(out: W, report: &EvalReport) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theme",
        "tp",
        "fp",
        "fn",
        "P",
        "R",
        "F1",
        "alpha",
        "fraction",
        "fraction_adj",
    ])?;
    for t in &report.themes {
        w.write_record([
            t.theme.name().to_string(),
            t.tp.to_string(),
            t.fp.to_string(),
            t.fn_.to_string(),
            cell(t.precision),
            cell(t.recall),
            cell(t.f1),
            cell(t.alpha),
            cell(Some(t.fraction)),
            cell(t.fraction_adj),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Precision and recall of one theme, as measured on an annotated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub theme: ThemeLabel,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Deserialize)]
struct RawMetrics {
    theme: String,
    precision: f64,
    recall: f64,
}

/// Reads a CSV with at least `theme, precision, recall` columns; values are
/// proportions in [0, 1]. Extra columns are ignored.
pub fn load_metrics<R: Read>(input: R) -> Result<Vec<MetricsRow>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<RawMetrics>().enumerate() {
        let row = i + 1;
        let raw = rec.map_err(|e| EvalError::Metrics {
            row,
            message: e.to_string(),
        })?;
        let theme = raw
            .theme
            .parse()
            .map_err(|e: crate::taxonomy::UnknownLabel| EvalError::Metrics {
                row,
                message: e.to_string(),
            })?;
        for (name, v) in [("precision", raw.precision), ("recall", raw.recall)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvalError::Metrics {
                    row,
                    message: format!("{name} {v} is not a proportion in [0, 1]"),
                });
            }
        }
        rows.push(MetricsRow {
            theme,
            precision: raw.precision,
            recall: raw.recall,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub theme: ThemeLabel,
    pub count: usize,
    pub n: usize,
    pub fraction: f64,
    pub precision: f64,
    pub recall: f64,
    pub fraction_adj: f64,
}

/// Raw and adjusted theme prevalence over all results, one row per metrics row.
pub fn prevalence(
    results: &[CaseResult],
    metrics: &[MetricsRow],
) -> Result<Vec<PrevalenceRow>, EvalError> {
    let n = results.len();
    metrics
        .iter()
        .map(|m| {
            let count = results
                .iter()
                .filter(|r| r.themes.contains(&m.theme))
                .count();
            let fraction = if n == 0 { 0.0 } else { count as f64 / n as f64 };
            Ok(PrevalenceRow {
                theme: m.theme,
                count,
                n,
                fraction,
                precision: m.precision,
                recall: m.recall,
                fraction_adj: adjusted_fraction(fraction, m.precision, m.recall)?,
            })
        })
        .collect()
}

pub fn write_prevalence_csv<W: Write>(out: W, rows: &[PrevalenceRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theme",
        "count",
        "n",
        "fraction",
        "precision",
        "recall",
        "fraction_adj",
    ])?;
    for r in rows {
        w.write_record([
            r.theme.name().to_string(),
            r.count.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.fraction),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.fraction_adj),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{aggregate_case, CaseFlags, TechKindTable, UnitResult};
    use crate::taxonomy::SourceOfInformation;

    fn result(id: &str, themes: &[ThemeLabel], source: SourceOfInformation) -> CaseResult {
        let units = if themes.is_empty() && source == SourceOfInformation::Unknown {
            Vec::new()
        } else {
            vec![UnitResult {
                unit_id: format!("{id}-u0"),
                sentence_indices: vec![0],
                themes: themes.iter().copied().collect(),
                source,
                via_social_media: false,
                phrases: Vec::new(),
            }]
        };
        aggregate_case(id, units, &TechKindTable::default(), CaseFlags::default())
    }

    fn gold(
        id: &str,
        who: &str,
        themes: &[ThemeLabel],
        source: Option<SourceClass>,
    ) -> GoldAnnotation {
        GoldAnnotation {
            case_id: id.into(),
            annotator_id: Some(who.into()),
            themes: themes.iter().copied().collect(),
            online_mentioned: !themes.is_empty() || source.is_some(),
            source,
        }
    }

    #[test]
    fn report_counts_and_subset() {
        use ThemeLabel as T;
        let results = vec![
            result("a", &[T::Victim], SourceOfInformation::LeSearches),
            result("b", &[T::Victim], SourceOfInformation::Unknown),
            result("c", &[], SourceOfInformation::Unknown),
            result("d", &[T::Disclosure], SourceOfInformation::NokExplicit),
        ];
        let g = vec![
            gold("a", "x", &[T::Victim], Some(SourceClass::LeSearches)),
            gold("a", "y", &[T::Victim], Some(SourceClass::LeSearches)),
            gold("b", "x", &[], None),
            gold("c", "x", &[T::Victim], Some(SourceClass::Unknown)),
        ];
        let r = evaluate(&results, &g, None).unwrap();
        let v = &r.themes[T::Victim as usize];
        assert_eq!(v.theme, T::Victim);
        assert_eq!((v.tp, v.fp, v.fn_), (1, 1, 1));
        assert_eq!(v.fraction, 0.5);
        assert_eq!(v.fraction_adj, Some(0.5));
        assert_eq!(v.alpha, Some(1.0));
        assert_eq!(r.n_evaluated, 3);
        assert_eq!(r.n_multiply_annotated, 1);
        let s = r.source.as_ref().unwrap();
        assert_eq!(s.matrix.total(), 2);
        assert_eq!(s.accuracy, Some(1.0));

        let only_a: BTreeSet<String> = ["a".to_string()].into();
        let r = evaluate(&results, &g, Some(&only_a)).unwrap();
        assert_eq!(r.n_evaluated, 1);
        assert_eq!(r.themes[T::Victim as usize].fp, 0);

        let mut buf = Vec::new();
        write_report_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theme,tp,fp,fn,P,R,F1,alpha,fraction,fraction_adj\n"));
        assert_eq!(text.lines().count(), 13);
        // Disclosure: nothing scored positive, annotators agree on absence
        assert!(text.contains("\nDisclosure,0,0,0,,,,1.000000,0.250000,\n"));
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let g = vec![gold("z", "x", &[], None)];
        assert!(matches!(
            evaluate(&[], &g, None),
            Err(EvalError::MissingPrediction(_))
        ));
    }

    #[test]
    fn metrics_and_prevalence() {
        use ThemeLabel as T;
        let csv = "theme,precision,recall,f1\nDisclosure,0.904,0.759,0.825\nSelf-Harm Content,0.656,0.917,0.764\n";
        let m = load_metrics(csv.as_bytes()).unwrap();
        assert_eq!(m[1].theme, T::SelfHarmContent);
        let results: Vec<CaseResult> = (0..10)
            .map(|i| {
                let t: &[ThemeLabel] = if i < 4 { &[T::Disclosure] } else { &[] };
                result(&format!("c{i}"), t, SourceOfInformation::Unknown)
            })
            .collect();
        let p = prevalence(&results, &m).unwrap();
        assert_eq!(p[0].count, 4);
        assert!((p[0].fraction_adj - 0.4 * 0.904 / 0.759).abs() < 1e-12);
        assert_eq!(p[1].fraction_adj, 0.0);
        assert!(load_metrics("theme,precision,recall\nDisclosure,90.4,75.9\n".as_bytes()).is_err());
        assert!(load_metrics("theme,precision,recall\nNope,0.5,0.5\n".as_bytes()).is_err());
    }
}
