//! Case records, cohort selection and monthly aggregation.
//!
//! JSONL is the canonical on-disk form: one [`CaseRecord`] per line with the
//! circumstance flags nested under `circumstances`. CSV is accepted with the
//! same field names, the circumstance flags as top-level columns and
//! booleans written as `0`/`1`. Fields outside the schema are kept in
//! [`CaseRecord::extras`] and written back out unchanged.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{SourceClass, ThemeLabel};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: field `{field}`: {message}")]
    Malformed {
        row: usize,
        field: String,
        message: String,
    },
    #[error("duplicate case_id `{0}`")]
    DuplicateId(String),
    #[error("cannot aggregate an empty set of cases")]
    Empty,
    #[error("unsupported format `{0}` (expected jsonl or csv)")]
    Format(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            other => Err(format!("expected male or female, got `{other}`")),
        }
    }
}

/// Coded precipitating circumstances. A missing flag means "not coded",
/// which is read as `false`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Circumstances {
    pub school_problem: bool,
    pub mental_health_problem: bool,
    pub depressed_mood: bool,
    pub intimate_partner_problem: bool,
    pub family_problem: bool,
    pub other_relationship_problem: bool,
}

impl Circumstances {
    pub const NAMES: [&'static str; 6] = [
        "school_problem",
        "mental_health_problem",
        "depressed_mood",
        "intimate_partner_problem",
        "family_problem",
        "other_relationship_problem",
    ];

    pub fn flags(&self) -> [bool; 6] {
        [
            self.school_problem,
            self.mental_health_problem,
            self.depressed_mood,
            self.intimate_partner_problem,
            self.family_problem,
            self.other_relationship_problem,
        ]
    }

    fn set(&mut self, name: &str, value: bool) -> bool {
        let slot = match name {
            "school_problem" => &mut self.school_problem,
            "mental_health_problem" => &mut self.mental_health_problem,
            "depressed_mood" => &mut self.depressed_mood,
            "intimate_partner_problem" => &mut self.intimate_partner_problem,
            "family_problem" => &mut self.family_problem,
            "other_relationship_problem" => &mut self.other_relationship_problem,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Age bands used for reporting and regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    Age10To14,
    Age15To19,
    Age20To24,
    Other,
}

impl AgeGroup {
    pub fn of(age_years: u32) -> Self {
        match age_years {
            10..=14 => AgeGroup::Age10To14,
            15..=19 => AgeGroup::Age15To19,
            20..=24 => AgeGroup::Age20To24,
            _ => AgeGroup::Other,
        }
    }
}

/// One decedent incident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub state: String,
    pub year: i32,
    pub month: u32,
    pub day_of_week: u32,
    pub age_years: u32,
    pub sex: Sex,
    #[serde(default)]
    pub transgender: bool,
    #[serde(default = "unknown_race")]
    pub race: String,
    #[serde(default)]
    pub military: bool,
    #[serde(default)]
    pub student: bool,
    #[serde(default)]
    pub location_home: bool,
    #[serde(default)]
    pub weapon_firearm: bool,
    #[serde(default)]
    pub circumstances: Circumstances,
    #[serde(default)]
    pub narrative_le: String,
    #[serde(default)]
    pub narrative_cme: String,
    #[serde(flatten, default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

fn unknown_race() -> String {
    "Unknown".to_string()
}

impl CaseRecord {
    pub fn year_month(&self) -> YearMonth {
        YearMonth::new(self.year, self.month)
    }

    pub fn age_group(&self) -> AgeGroup {
        AgeGroup::of(self.age_years)
    }

    pub fn is_analyzable(&self) -> bool {
        !self.narrative_le.trim().is_empty() || !self.narrative_cme.trim().is_empty()
    }

    /// Text handed to the classification pipeline: the law-enforcement
    /// narrative followed by the medical-examiner narrative, separated by
    /// a blank line. Empty narratives are skipped.
    pub fn pipeline_text(&self) -> String {
        [self.narrative_le.trim(), self.narrative_cme.trim()]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(NARRATIVE_SEPARATOR)
    }

    fn validate(&self, row: usize) -> Result<(), CorpusError> {
        let bad = |field: &str, message: String| CorpusError::Malformed {
            row,
            field: field.to_string(),
            message,
        };
        if self.case_id.trim().is_empty() {
            return Err(bad("case_id", "empty identifier".into()));
        }
        if !(1..=12).contains(&self.month) {
            return Err(bad("month", format!("{} is outside 1..=12", self.month)));
        }
        if !(1..=7).contains(&self.day_of_week) {
            return Err(bad(
                "day_of_week",
                format!("{} is outside 1..=7", self.day_of_week),
            ));
        }
        Ok(())
    }
}

pub const NARRATIVE_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Jsonl,
    Csv,
}

impl CaseFormat {
    /// Picks the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CaseFormat::Csv,
            _ => CaseFormat::Jsonl,
        }
    }
}

impl FromStr for CaseFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CaseFormat::Jsonl),
            "csv" => Ok(CaseFormat::Csv),
            other => Err(CorpusError::Format(other.to_string())),
        }
    }
}

pub fn load_cases(path: &Path, format: CaseFormat) -> Result<Vec<CaseRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let cases = match format {
        CaseFormat::Jsonl => read_jsonl(BufReader::new(file), path)?,
        CaseFormat::Csv => read_csv(BufReader::new(file))?,
    };
    check_unique(&cases)?;
    Ok(cases)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<CaseRecord>, CorpusError> {
    let cases = read_jsonl(text.as_bytes(), Path::new("<memory>"))?;
    check_unique(&cases)?;
    Ok(cases)
}

fn check_unique(cases: &[CaseRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::with_capacity(cases.len());
    for case in cases {
        if !seen.insert(case.case_id.as_str()) {
            return Err(CorpusError::DuplicateId(case.case_id.clone()));
        }
    }
    Ok(())
}

fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<CaseRecord>, CorpusError> {
    let mut cases = Vec::new();
    let mut row = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let mut de = serde_json::Deserializer::from_str(&line);
        let case: CaseRecord =
            serde_path_to_error::deserialize(&mut de).map_err(|e| CorpusError::Malformed {
                row,
                field: field_of(&e),
                message: e.inner().to_string(),
            })?;
        case.validate(row)?;
        cases.push(case);
    }
    Ok(cases)
}

fn field_of(e: &serde_path_to_error::Error<serde_json::Error>) -> String {
    let path = e.path().to_string();
    if path != "." {
        return path;
    }
    // serde reports missing fields at the parent path; pull the name out of
    // the message instead.
    let msg = e.inner().to_string();
    msg.split('`').nth(1).unwrap_or("<record>").to_string()
}

const CSV_FIELDS: [&str; 15] = [
    "case_id",
    "state",
    "year",
    "month",
    "day_of_week",
    "age_years",
    "sex",
    "transgender",
    "race",
    "military",
    "student",
    "location_home",
    "weapon_firearm",
    "narrative_le",
    "narrative_cme",
];

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<CaseRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            row: 0,
            field: "<header>".into(),
            message: e.to_string(),
        })?
        .clone();
    let mut cases = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CorpusError::Malformed {
            row,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        let get = |name: &str| -> Option<&str> {
            header
                .iter()
                .position(|h| h == name)
                .and_then(|i| record.get(i))
                .filter(|v| !v.is_empty())
        };
        let bad = |field: &str, message: String| CorpusError::Malformed {
            row,
            field: field.to_string(),
            message,
        };
        let required = |name: &str| get(name).ok_or_else(|| bad(name, "missing field".into()));
        let int = |name: &str| -> Result<i64, CorpusError> {
            required(name)?
                .trim()
                .parse::<i64>()
                .map_err(|e| bad(name, e.to_string()))
        };
        let nonneg = |name: &str| -> Result<u32, CorpusError> {
            u32::try_from(int(name)?)
                .map_err(|_| bad(name, "must be a non-negative integer".into()))
        };
        let flag = |name: &str| -> Result<bool, CorpusError> {
            match get(name).map(str::trim) {
                None => Ok(false),
                Some("1") | Some("true") => Ok(true),
                Some("0") | Some("false") => Ok(false),
                Some(other) => Err(bad(name, format!("expected 0 or 1, got `{other}`"))),
            }
        };

        let mut circumstances = Circumstances::default();
        for name in Circumstances::NAMES {
            circumstances.set(name, flag(name)?);
        }
        let mut extras = BTreeMap::new();
        for (h, v) in header.iter().zip(record.iter()) {
            if !CSV_FIELDS.contains(&h) && !Circumstances::NAMES.contains(&h) {
                extras.insert(h.to_string(), serde_json::Value::String(v.to_string()));
            }
        }
        let case = CaseRecord {
            case_id: required("case_id")?.to_string(),
            state: required("state")?.to_string(),
            year: i32::try_from(int("year")?).map_err(|e| bad("year", e.to_string()))?,
            month: nonneg("month")?,
            day_of_week: nonneg("day_of_week")?,
            age_years: nonneg("age_years")?,
            sex: required("sex")?.parse().map_err(|e| bad("sex", e))?,
            transgender: flag("transgender")?,
            race: get("race").unwrap_or("Unknown").to_string(),
            military: flag("military")?,
            student: flag("student")?,
            location_home: flag("location_home")?,
            weapon_firearm: flag("weapon_firearm")?,
            circumstances,
            narrative_le: get("narrative_le").unwrap_or_default().to_string(),
            narrative_cme: get("narrative_cme").unwrap_or_default().to_string(),
            extras,
        };
        case.validate(row)?;
        cases.push(case);
    }
    Ok(cases)
}

pub fn save_cases(
    path: &Path,
    format: CaseFormat,
    cases: &[CaseRecord],
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        CaseFormat::Jsonl => {
            for case in cases {
                serde_json::to_writer(&mut out, case)
                    .map_err(|e| CorpusError::io(path, e.into()))?;
                out.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
            }
        }
        CaseFormat::Csv => write_csv(&mut out, cases).map_err(|e| CorpusError::io(path, e))?,
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

fn write_csv<W: Write>(out: W, cases: &[CaseRecord]) -> std::io::Result<()> {
    let extra_keys: BTreeSet<&str> = cases
        .iter()
        .flat_map(|c| c.extras.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_FIELDS.to_vec();
    header.extend(Circumstances::NAMES);
    header.extend(extra_keys.iter().copied());
    w.write_record(&header)?;
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    for c in cases {
        let mut row = vec![
            c.case_id.clone(),
            c.state.clone(),
            c.year.to_string(),
            c.month.to_string(),
            c.day_of_week.to_string(),
            c.age_years.to_string(),
            match c.sex {
                Sex::Male => "male".into(),
                Sex::Female => "female".into(),
            },
            b(c.transgender),
            c.race.clone(),
            b(c.military),
            b(c.student),
            b(c.location_home),
            b(c.weapon_firearm),
            c.narrative_le.clone(),
            c.narrative_cme.clone(),
        ];
        row.extend(c.circumstances.flags().map(b));
        for key in &extra_keys {
            row.push(match c.extras.get(*key) {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()
}

/// Age, year and state window defining the analytic cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortFilter {
    pub min_age: u32,
    pub max_age: u32,
    pub min_year: i32,
    pub max_year: i32,
    #[serde(default)]
    pub states: Option<BTreeSet<String>>,
}

impl CohortFilter {
    /// Youth ages 10–24 over 2013–2022.
    pub fn youth() -> Self {
        CohortFilter {
            min_age: 10,
            max_age: 24,
            min_year: 2013,
            max_year: 2022,
            states: None,
        }
    }

    pub fn accepts(&self, case: &CaseRecord) -> bool {
        (self.min_age..=self.max_age).contains(&case.age_years)
            && (self.min_year..=self.max_year).contains(&case.year)
            && self.states.as_ref().is_none_or(|s| s.contains(&case.state))
    }

    /// Narrowest filter accepted by both `self` and `other`.
    pub fn intersect(&self, other: &CohortFilter) -> CohortFilter {
        let states = match (&self.states, &other.states) {
            (None, s) | (s, None) => s.clone(),
            (Some(a), Some(b)) => Some(a.intersection(b).cloned().collect()),
        };
        CohortFilter {
            min_age: self.min_age.max(other.min_age),
            max_age: self.max_age.min(other.max_age),
            min_year: self.min_year.max(other.min_year),
            max_year: self.max_year.min(other.max_year),
            states,
        }
    }
}

pub fn filter_cohort(cases: &[CaseRecord], filter: &CohortFilter) -> Vec<CaseRecord> {
    cases
        .iter()
        .filter(|c| filter.accepts(c))
        .cloned()
        .collect()
}

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        YearMonth { year, month }
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        YearMonth {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn plus(self, months: i64) -> Self {
        YearMonth::from_ordinal(self.ordinal() + months)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Gap-free monthly counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub start: YearMonth,
    pub values: Vec<f64>,
}

impl MonthlySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn month_at(&self, index: usize) -> YearMonth {
        self.start.plus(index as i64)
    }
}

/// Counts predicate-matching cases per month over the span of `cases`.
///
/// The span runs from the earliest to the latest month present in the
/// input, regardless of the predicate, so series built from the same cohort
/// with different predicates stay aligned.
pub fn monthly_counts<F>(cases: &[CaseRecord], predicate: F) -> Result<MonthlySeries, CorpusError>
where
    F: Fn(&CaseRecord) -> bool,
{
    let first = cases
        .iter()
        .map(|c| c.year_month())
        .min()
        .ok_or(CorpusError::Empty)?;
    let last = cases
        .iter()
        .map(|c| c.year_month())
        .max()
        .ok_or(CorpusError::Empty)?;
    let mut values = vec![0.0; (last.ordinal() - first.ordinal() + 1) as usize];
    for case in cases.iter().filter(|c| predicate(c)) {
        values[(case.year_month().ordinal() - first.ordinal()) as usize] += 1.0;
    }
    Ok(MonthlySeries {
        start: first,
        values,
    })
}

/// One line of the gold-label sidecar. Several lines may share a `case_id`
/// when a case was labeled by more than one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    pub themes: Vec<String>,
    pub source_of_info: String,
    pub online_mentioned: bool,
}

impl GoldLabel {
    pub fn theme_set(&self) -> Result<BTreeSet<ThemeLabel>, crate::taxonomy::UnknownLabel> {
        self.themes.iter().map(|t| t.parse()).collect()
    }

    pub fn source_class(&self) -> Result<SourceClass, crate::taxonomy::UnknownLabel> {
        self.source_of_info.parse()
    }
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldLabel>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut labels = Vec::new();
    let mut row = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let mut de = serde_json::Deserializer::from_str(&line);
        let label: GoldLabel =
            serde_path_to_error::deserialize(&mut de).map_err(|e| CorpusError::Malformed {
                row,
                field: field_of(&e),
                message: e.inner().to_string(),
            })?;
        if let Err(e) = label.theme_set() {
            return Err(CorpusError::Malformed {
                row,
                field: "themes".into(),
                message: e.to_string(),
            });
        }
        labels.push(label);
    }
    Ok(labels)
}

pub fn save_gold(path: &Path, labels: &[GoldLabel]) -> Result<(), CorpusError> {
    write_jsonl(path, labels)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| CorpusError::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    pub(crate) fn case(id: &str, year: i32, month: u32, age: u32) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            state: "MI".into(),
            year,
            month,
            day_of_week: 3,
            age_years: age,
            sex: Sex::Female,
            transgender: false,
            race: "White".into(),
            military: false,
            student: true,
            location_home: true,
            weapon_firearm: false,
            circumstances: Circumstances::default(),
            narrative_le: "V was found at home.".into(),
            narrative_cme: String::new(),
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_file_loads_as_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_cases(&path, CaseFormat::Jsonl).unwrap().is_empty());
    }

    #[test]
    fn one_full_row_round_trips_exactly() {
        let line = r#"{"case_id":"c1","state":"OH","year":2019,"month":4,"day_of_week":6,"age_years":17,"sex":"male","transgender":false,"race":"Black","military":false,"student":true,"location_home":true,"weapon_firearm":true,"circumstances":{"school_problem":true,"mental_health_problem":false,"depressed_mood":true,"intimate_partner_problem":false,"family_problem":true,"other_relationship_problem":false},"narrative_le":"V texted a friend.","narrative_cme":"V was pronounced dead."}"#;
        let cases = parse_jsonl(line).unwrap();
        assert_eq!(cases.len(), 1);
        let c = &cases[0];
        assert_eq!(c.case_id, "c1");
        assert_eq!(c.year, 2019);
        assert_eq!(c.sex, Sex::Male);
        assert!(c.circumstances.school_problem && c.circumstances.family_problem);
        assert_eq!(serde_json::to_string(c).unwrap(), line);
    }

    #[test]
    fn duplicate_id_is_named() {
        let a = serde_json::to_string(&case("dup-7", 2020, 1, 15)).unwrap();
        let err = parse_jsonl(&format!("{a}\n{a}\n")).unwrap_err();
        match err {
            CorpusError::DuplicateId(id) => assert_eq!(id, "dup-7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_row_and_field() {
        let good = serde_json::to_string(&case("a", 2020, 1, 15)).unwrap();
        let bad = good.replace("\"year\":2020", "\"year\":\"twenty\"");
        let err = parse_jsonl(&format!("{good}\n{bad}\n")).unwrap_err();
        match err {
            CorpusError::Malformed { row, field, .. } => {
                assert_eq!(row, 2);
                assert_eq!(field, "year");
            }
            other => panic!("unexpected {other:?}"),
        }
        let missing = good.replace("\"state\":\"MI\",", "");
        match parse_jsonl(&missing).unwrap_err() {
            CorpusError::Malformed { field, .. } => assert_eq!(field, "state"),
            other => panic!("unexpected {other:?}"),
        }
        let month = good.replace("\"month\":1", "\"month\":13");
        match parse_jsonl(&month).unwrap_err() {
            CorpusError::Malformed { field, .. } => assert_eq!(field, "month"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_pass_through() {
        let mut c = case("x", 2020, 1, 15);
        c.extras
            .insert("county".into(), serde_json::Value::String("Wayne".into()));
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"county\":\"Wayne\""));
        assert_eq!(parse_jsonl(&text).unwrap()[0], c);
    }

    #[test]
    fn csv_round_trip_preserves_schema_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.csv");
        let mut a = case("a", 2020, 1, 15);
        a.circumstances.depressed_mood = true;
        a.narrative_le = "He said, \"bye\", then left.\nNew line.".into();
        let b = case("b", 2021, 12, 22);
        save_cases(&path, CaseFormat::Csv, &[a.clone(), b.clone()]).unwrap();
        let back = load_cases(&path, CaseFormat::Csv).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn csv_rejects_non_binary_flags() {
        let text = "case_id,state,year,month,day_of_week,age_years,sex,military\nq,MI,2020,1,1,15,male,yes\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        match err {
            CorpusError::Malformed { row, field, .. } => {
                assert_eq!(row, 1);
                assert_eq!(field, "military");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cohort_boundaries() {
        let f = CohortFilter::youth();
        assert!(f.accepts(&case("a", 2013, 1, 10)));
        assert!(f.accepts(&case("b", 2022, 12, 24)));
        assert!(!f.accepts(&case("c", 2020, 1, 25)));
        assert!(!f.accepts(&case("d", 2020, 1, 9)));
        assert!(!f.accepts(&case("e", 2012, 1, 15)));
    }

    #[test]
    fn full_state_set_is_identity_on_conforming_input() {
        let cases: Vec<_> = (0..10)
            .map(|i| case(&format!("c{i}"), 2013 + i, 1, 12 + i as u32))
            .collect();
        let mut f = CohortFilter::youth();
        f.states = Some(["MI".to_string()].into());
        assert_eq!(filter_cohort(&cases, &f), cases);
    }

    #[test]
    fn monthly_counts_fill_gaps() {
        let cases = vec![
            case("a", 2020, 5, 15),
            case("b", 2020, 5, 16),
            case("c", 2020, 5, 17),
        ];
        let s = monthly_counts(&cases, |_| true).unwrap();
        assert_eq!(s.start, YearMonth::new(2020, 5));
        assert_eq!(s.values, vec![3.0]);

        let cases = vec![case("a", 2020, 1, 15), case("b", 2020, 3, 15)];
        let s = monthly_counts(&cases, |_| true).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0, 1.0]);
        assert!(matches!(
            monthly_counts(&[], |_| true),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn monthly_counts_cross_year_boundary() {
        let cases = vec![case("a", 2019, 11, 15), case("b", 2020, 2, 15)];
        let s = monthly_counts(&cases, |c| c.case_id == "b").unwrap();
        assert_eq!(s.values, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.month_at(3), YearMonth::new(2020, 2));
    }

    #[test]
    fn monthly_counts_match_hash_map_tally() {
        let cases = synth::synthesize_corpus(11, 200, &synth::CorpusProfile::default()).cases;
        let pred = |c: &CaseRecord| c.circumstances.depressed_mood;
        let series = monthly_counts(&cases, pred).unwrap();
        let mut tally: HashMap<(i32, u32), f64> = HashMap::new();
        for c in cases.iter().filter(|c| pred(c)) {
            *tally.entry((c.year, c.month)).or_default() += 1.0;
        }
        let (mut y, mut m) = (series.start.year, series.start.month);
        for v in &series.values {
            assert_eq!(*v, tally.get(&(y, m)).copied().unwrap_or(0.0));
            m += 1;
            if m == 13 {
                m = 1;
                y += 1;
            }
        }
        let total: f64 = series.values.iter().sum();
        assert_eq!(total as usize, cases.iter().filter(|c| pred(c)).count());
    }

    #[test]
    fn age_groups() {
        assert_eq!(AgeGroup::of(12), AgeGroup::Age10To14);
        assert_eq!(AgeGroup::of(17), AgeGroup::Age15To19);
        assert_eq!(AgeGroup::of(22), AgeGroup::Age20To24);
        assert_eq!(AgeGroup::of(30), AgeGroup::Other);
    }

    #[test]
    fn pipeline_text_joins_both_narratives() {
        let mut c = case("a", 2020, 1, 15);
        c.narrative_cme = "V died of asphyxia.".into();
        assert_eq!(
            c.pipeline_text(),
            "V was found at home.\n\nV died of asphyxia."
        );
        c.narrative_le.clear();
        assert_eq!(c.pipeline_text(), "V died of asphyxia.");
    }
}
