//! One-hot design matrices for the per-theme regressions.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::corpus::{AgeGroup, CaseRecord, Circumstances, Sex};
use crate::taxonomy::SourceOfInformation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Reference race; the other observed races get a column each.
    pub race_reference: String,
    pub circumstances: bool,
    pub state_effects: bool,
    pub year_effects: bool,
    pub source_effects: bool,
    pub narrative_length: bool,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            race_reference: "White".into(),
            circumstances: true,
            state_effects: true,
            year_effects: true,
            source_effects: true,
            narrative_length: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub factor: String,
    /// Control terms (intercept, state, year, source, length) that are
    /// estimated but not displayed or counted in the correction family.
    pub control: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub terms: Vec<Term>,
    pub x: DMatrix<f64>,
    pub case_ids: Vec<String>,
    pub reference_levels: BTreeMap<String, String>,
    /// Columns removed because they were constant (an empty level, or a
    /// level held by every row).
    pub dropped: Vec<String>,
}

impl DesignMatrix {
    pub fn column_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    pub fn displayed(&self) -> usize {
        self.terms.iter().filter(|t| !t.control).count()
    }
}

struct Builder {
    terms: Vec<Term>,
    cols: Vec<Vec<f64>>,
}

impl Builder {
    fn push(&mut self, name: String, factor: &str, control: bool, col: Vec<f64>) {
        self.terms.push(Term {
            name,
            factor: factor.to_string(),
            control,
        });
        self.cols.push(col);
    }

    fn flag(
        &mut self,
        name: &str,
        rows: &[(&CaseRecord, SourceOfInformation)],
        f: impl Fn(&CaseRecord) -> bool,
    ) {
        let col = rows.iter().map(|(c, _)| f(c) as u8 as f64).collect();
        self.push(name.to_string(), name, false, col);
    }

    fn levels<L: PartialEq>(
        &mut self,
        factor: &str,
        control: bool,
        levels: &[(String, L)],
        values: &[L],
    ) {
        for (name, level) in levels {
            let col = values.iter().map(|v| (v == level) as u8 as f64).collect();
            self.push(name.clone(), factor, control, col);
        }
    }
}

fn age_level(g: AgeGroup) -> u8 {
    match g {
        AgeGroup::Age10To14 => 0,
        AgeGroup::Age15To19 => 1,
        AgeGroup::Age20To24 => 2,
        AgeGroup::Other => 3,
    }
}

/// Builds the design for one theme regression. Each row pairs a case with
/// its pipeline-assigned information source.
///
/// References: age 20-24, male, non-firearm, January, day 1, the configured
/// reference race, the first state and year in sort order, unknown source.
/// Narrative length enters as ln(1 + characters).
pub fn build_design(
    rows: &[(&CaseRecord, SourceOfInformation)],
    outcome: &[bool],
    spec: &DesignSpec,
) -> Result<(DesignMatrix, Vec<f64>), StatsError> {
    if rows.is_empty() {
        return Err(StatsError::Empty);
    }
    if rows.len() != outcome.len() {
        return Err(StatsError::Shape {
            rows: rows.len(),
            outcomes: outcome.len(),
        });
    }
    let positives = outcome.iter().filter(|y| **y).count();
    if positives == 0 || positives == outcome.len() {
        return Err(StatsError::SingleClass {
            positives,
            n: outcome.len(),
        });
    }

    let mut refs = BTreeMap::new();
    let mut b = Builder {
        terms: Vec::new(),
        cols: Vec::new(),
    };
    b.push("intercept".into(), "intercept", true, vec![1.0; rows.len()]);

    let ages: Vec<u8> = rows.iter().map(|(c, _)| age_level(c.age_group())).collect();
    b.levels(
        "age",
        false,
        &[
            ("age10_14".into(), 0),
            ("age15_19".into(), 1),
            ("age_other".into(), 3),
        ],
        &ages,
    );
    refs.insert("age".into(), "20-24".into());

    b.flag("female", rows, |c| c.sex == Sex::Female);
    refs.insert("sex".into(), "male".into());
    b.flag("transgender", rows, |c| c.transgender);

    let races: BTreeSet<&str> = rows.iter().map(|(c, _)| c.race.as_str()).collect();
    let race_levels: Vec<(String, &str)> = races
        .iter()
        .filter(|r| **r != spec.race_reference)
        .map(|r| (format!("race_{}", slug(r)), *r))
        .collect();
    let race_values: Vec<&str> = rows.iter().map(|(c, _)| c.race.as_str()).collect();
    b.levels("race", false, &race_levels, &race_values);
    refs.insert("race".into(), spec.race_reference.clone());

    b.flag("military", rows, |c| c.military);

    let months: Vec<u32> = rows.iter().map(|(c, _)| c.month).collect();
    let month_levels: Vec<(String, u32)> = (2..=12).map(|m| (format!("month_{m:02}"), m)).collect();
    b.levels("month", false, &month_levels, &months);
    refs.insert("month".into(), "01".into());

    let dows: Vec<u32> = rows.iter().map(|(c, _)| c.day_of_week).collect();
    let dow_levels: Vec<(String, u32)> = (2..=7).map(|d| (format!("dow_{d}"), d)).collect();
    b.levels("day_of_week", false, &dow_levels, &dows);
    refs.insert("day_of_week".into(), "1".into());

    b.flag("location_home", rows, |c| c.location_home);
    b.flag("weapon_firearm", rows, |c| c.weapon_firearm);
    refs.insert("weapon".into(), "non-firearm".into());

    if spec.circumstances {
        for (i, name) in Circumstances::NAMES.iter().enumerate() {
            b.flag(name, rows, |c| c.circumstances.flags()[i]);
        }
    }

    if spec.state_effects {
        let states: BTreeSet<&str> = rows.iter().map(|(c, _)| c.state.as_str()).collect();
        let mut it = states.iter();
        if let Some(first) = it.next() {
            refs.insert("state".into(), first.to_string());
        }
        let levels: Vec<(String, &str)> = it.map(|s| (format!("state_{}", slug(s)), *s)).collect();
        let values: Vec<&str> = rows.iter().map(|(c, _)| c.state.as_str()).collect();
        b.levels("state", true, &levels, &values);
    }
    if spec.year_effects {
        let years: BTreeSet<i32> = rows.iter().map(|(c, _)| c.year).collect();
        let mut it = years.iter();
        if let Some(first) = it.next() {
            refs.insert("year".into(), first.to_string());
        }
        let levels: Vec<(String, i32)> = it.map(|y| (format!("year_{y}"), *y)).collect();
        let values: Vec<i32> = rows.iter().map(|(c, _)| c.year).collect();
        b.levels("year", true, &levels, &values);
    }
    if spec.source_effects {
        let levels: Vec<(String, SourceOfInformation)> = SourceOfInformation::ALL
            .into_iter()
            .filter(|s| *s != SourceOfInformation::Unknown)
            .map(|s| (format!("source_{}", slug(s.name())), s))
            .collect();
        let values: Vec<SourceOfInformation> = rows.iter().map(|(_, s)| *s).collect();
        b.levels("source", true, &levels, &values);
        refs.insert("source".into(), SourceOfInformation::Unknown.name().into());
    }
    if spec.narrative_length {
        let col = rows
            .iter()
            .map(|(c, _)| (1.0 + c.pipeline_text().chars().count() as f64).ln())
            .collect();
        b.push("log_length".into(), "narrative_length", true, col);
    }

    let mut keep_terms = Vec::new();
    let mut keep_cols = Vec::new();
    let mut dropped = Vec::new();
    for (i, (term, col)) in b.terms.into_iter().zip(b.cols).enumerate() {
        let constant = col.iter().all(|v| *v == col[0]);
        if i > 0 && constant {
            log::warn!("dropping constant design column {}", term.name);
            dropped.push(term.name);
        } else {
            keep_terms.push(term);
            keep_cols.push(col);
        }
    }
    let x = DMatrix::from_fn(rows.len(), keep_cols.len(), |r, c| keep_cols[c][r]);
    let y = outcome.iter().map(|v| *v as u8 as f64).collect();
    Ok((
        DesignMatrix {
            terms: keep_terms,
            x,
            case_ids: rows.iter().map(|(c, _)| c.case_id.clone()).collect(),
            reference_levels: refs,
            dropped,
        },
        y,
    ))
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}
