//! Per-theme regressions and their CSV exports.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    build_design, fit_logistic_irls, vif, DesignSpec, IrlsOptions, LogitFit, StatsError, Term,
    VifReport,
};
use crate::corpus::CaseRecord;
use crate::llm::parallel_map;
use crate::pipeline::CaseResult;
use crate::taxonomy::ThemeLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeFit {
    pub theme: ThemeLabel,
    pub n: usize,
    pub positives: usize,
    pub terms: Vec<Term>,
    pub fit: LogitFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub fits: Vec<ThemeFit>,
    /// Themes not fitted, with the reason.
    pub skipped: Vec<(ThemeLabel, String)>,
    pub vif: Option<VifReport>,
    pub family_size: usize,
    pub alpha: f64,
    pub reference_levels: BTreeMap<String, String>,
    pub dropped_columns: Vec<String>,
}

/// Fits one regression per theme on `cases`, taking outcomes and the
/// information source from the matching pipeline results.
///
/// The Bonferroni family defaults to displayed coefficients times fitted
/// themes.
pub fn run_regressions(
    cases: &[CaseRecord],
    results: &[CaseResult],
    themes: &[ThemeLabel],
    spec: &DesignSpec,
    irls: &IrlsOptions,
    family_size: Option<usize>,
    alpha: f64,
) -> Result<RegressionReport, StatsError> {
    let by_id: HashMap<&str, &CaseResult> =
        results.iter().map(|r| (r.case_id.as_str(), r)).collect();
    let mut rows = Vec::with_capacity(cases.len());
    let mut matched = Vec::with_capacity(cases.len());
    for c in cases {
        let r = by_id
            .get(c.case_id.as_str())
            .ok_or_else(|| StatsError::MissingResult(c.case_id.clone()))?;
        rows.push((c, r.source));
        matched.push(*r);
    }

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let outcomes = parallel_map(themes, workers, |&theme| {
        let y: Vec<bool> = matched.iter().map(|r| r.themes.contains(&theme)).collect();
        let (design, yv) = build_design(&rows, &y, spec)?;
        let fit = fit_logistic_irls(&design.x, &yv, irls)?;
        Ok::<_, StatsError>((theme, y.iter().filter(|v| **v).count(), design, fit))
    });

    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    let mut first_design = None;
    for (theme, outcome) in themes.iter().zip(outcomes) {
        match outcome {
            Ok((theme, positives, design, fit)) => {
                fits.push(ThemeFit {
                    theme,
                    n: rows.len(),
                    positives,
                    terms: design.terms.clone(),
                    fit,
                });
                first_design.get_or_insert(design);
            }
            Err(e @ (StatsError::SingleClass { .. } | StatsError::Singular)) => {
                log::warn!("skipping {theme}: {e}");
                skipped.push((*theme, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }

    let displayed = first_design.as_ref().map_or(0, |d| d.displayed());
    let m = family_size.unwrap_or((displayed * fits.len()).max(1));
    for f in &mut fits {
        f.fit.adjust(m, alpha)?;
    }
    let vif = match &first_design {
        Some(d) => {
            let names = d.column_names();
            match vif(&d.x, &names) {
                Ok(r) => Some(r),
                Err(StatsError::TooFewColumns(_)) => None,
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    Ok(RegressionReport {
        fits,
        skipped,
        vif,
        family_size: m,
        alpha,
        reference_levels: first_design
            .as_ref()
            .map(|d| d.reference_levels.clone())
            .unwrap_or_default(),
        dropped_columns: first_design.map(|d| d.dropped).unwrap_or_default(),
    })
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        v.to_string()
    }
}

/// Every estimated term of every theme.
pub fn write_regression_csv<W: Write>(out: W, report: &RegressionReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theme", "term", "coef", "se", "z", "p", "p_adj", "ci_low", "ci_high", "vif",
    ])?;
    for tf in &report.fits {
        let f = &tf.fit;
        for (j, term) in tf.terms.iter().enumerate() {
            let v = report.vif.as_ref().and_then(|r| r.get(&term.name));
            w.write_record([
                tf.theme.name().to_string(),
                term.name.clone(),
                num(f.coefficients[j]),
                num(f.standard_errors[j]),
                num(f.z_values[j]),
                num(f.p_values[j]),
                num(f.p_adjusted[j]),
                num(f.ci_low[j]),
                num(f.ci_high[j]),
                v.map(num).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long table of displayed coefficients: one row per theme and covariate,
/// ready to pivot into a theme-by-covariate heatmap.
pub fn write_heatmap_csv<W: Write>(out: W, report: &RegressionReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "category",
        "theme",
        "factor",
        "term",
        "coef",
        "ci_low",
        "ci_high",
        "p_adj",
        "significant",
    ])?;
    for tf in &report.fits {
        let f = &tf.fit;
        for (j, term) in tf.terms.iter().enumerate().filter(|(_, t)| !t.control) {
            w.write_record([
                format!("{:?}", tf.theme.category()),
                tf.theme.name().to_string(),
                term.factor.clone(),
                term.name.clone(),
                num(f.coefficients[j]),
                num(f.ci_low[j]),
                num(f.ci_high[j]),
                num(f.p_adjusted[j]),
                (f.p_adjusted[j] < report.alpha).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
