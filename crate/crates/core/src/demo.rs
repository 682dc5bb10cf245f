//! End-to-end run on a synthetic corpus with a scripted model.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::synth::{
    scripted_bank, synthesize_corpus, CorpusProfile, OnlineAnswer, SourceAnswer, SplitStyle,
    SyntheticCorpus, LINKED_DISCLOSURE,
};
use crate::corpus::{monthly_counts, CaseRecord, YearMonth};
use crate::eval::{evaluate, gold_annotations, EvalError, EvalReport};
use crate::llm::{Fixture, FixtureRule, MatchMode, ScriptedLlm};
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineRun, PromptKind, PromptSet};
use crate::stats::{trend_table, StatsError, TrendRow};
use crate::taxonomy::ThemeLabel;

/// Clause spliced into corrupted splits; long enough to trip the
/// edit-distance check on any synthetic narrative.
pub const HALLUCINATED_CLAUSE: &str = " and the family was later notified by telephone";

fn tri(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "Yes",
        Some(false) => "No",
        None => "Unknown",
    }
}

pub fn online_answer_json(a: &OnlineAnswer) -> String {
    json!({
        "technology": tri(Some(a.technology)),
        "phrases": a.phrases,
        "internet": tri(Some(a.internet)),
        "participate": tri(a.participate),
    })
    .to_string()
}

pub fn source_answer_json(a: &SourceAnswer) -> String {
    json!({
        "sm": a.sm,
        "nok": a.nok,
        "source_known": a.source_known,
        "source": a.source.map(String::from).unwrap_or_default(),
    })
    .to_string()
}

fn split_answer(sentences: &[String], style: SplitStyle) -> String {
    match style {
        SplitStyle::JsonList => serde_json::to_string(sentences).expect("strings serialize"),
        SplitStyle::Numbered => sentences
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n"),
        SplitStyle::Corrupted => {
            let mut out = sentences.to_vec();
            if let Some(first) = out.first_mut() {
                let body = first.trim_end_matches('.');
                *first = format!("{body}{HALLUCINATED_CLAUSE}.");
            }
            serde_json::to_string(&out).expect("strings serialize")
        }
    }
}

/// Replay fixture answering every request the pipeline makes on `corpus`.
///
/// Sentences outside the scripted bank are answered as not online. Only
/// the planted linked pair is answered "Yes" by the linking prompt.
pub fn scripted_fixture(corpus: &SyntheticCorpus, prompts: &PromptSet) -> Fixture {
    let bank = scripted_bank();
    let by_text: BTreeMap<&str, _> = bank.iter().map(|s| (s.text, s)).collect();
    let mut exact: BTreeMap<String, String> = BTreeMap::new();

    let mut sentences: BTreeSet<&str> = BTreeSet::new();
    for (case, script) in corpus.cases.iter().zip(&corpus.scripts) {
        exact.insert(
            prompts.split_message(&case.pipeline_text()),
            split_answer(&script.sentences, script.split_style),
        );
        sentences.extend(script.sentences.iter().map(String::as_str));
    }
    for s in sentences {
        let answer = by_text.get(s).map_or(OnlineAnswer::NONE, |b| b.online);
        exact.insert(
            prompts.sentence_message(PromptKind::Online, s),
            online_answer_json(&answer),
        );
    }
    exact.insert(
        prompts.link_message(LINKED_DISCLOSURE[0].text, LINKED_DISCLOSURE[1].text),
        "Yes".into(),
    );
    let kinds = [
        PromptKind::Harm,
        PromptKind::Interpersonal,
        PromptKind::Activity,
    ];
    for entry in bank.iter().filter(|b| b.online.is_online()) {
        for (kind, letter) in kinds.iter().zip(entry.letters) {
            exact.insert(
                prompts.sentence_message(*kind, entry.text),
                letter.to_string(),
            );
        }
        exact.insert(
            prompts.sentence_message(PromptKind::Source, entry.text),
            source_answer_json(&entry.source),
        );
    }

    let mut rules: Vec<FixtureRule> = exact
        .into_iter()
        .map(|(needle, respond)| FixtureRule::new(MatchMode::Exact, needle, respond))
        .collect();
    let link_head = prompts
        .text(PromptKind::Link)
        .split("{first}")
        .next()
        .unwrap_or_default()
        .to_string();
    rules.push(FixtureRule::new(MatchMode::Substring, link_head, "No"));
    Fixture::new(rules)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub n: usize,
    pub profile: CorpusProfile,
    /// Share of cases treated as annotated; precision and recall are
    /// measured on these only.
    pub annotated_fraction: f64,
    pub model: String,
    pub max_parallel: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            seed: 20240601,
            n: 500,
            profile: CorpusProfile::default(),
            annotated_fraction: 0.7,
            model: "scripted-demo".into(),
            max_parallel: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeRecovery {
    pub theme: ThemeLabel,
    /// Share of all cases carrying the theme in gold.
    pub planted: f64,
    pub raw: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub adjusted: Option<f64>,
}

impl ThemeRecovery {
    /// Adjusted minus planted, in percentage points.
    pub fn error_pp(&self) -> Option<f64> {
        self.adjusted.map(|a| 100.0 * (a - self.planted))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPeak {
    pub theme: ThemeLabel,
    pub peak: YearMonth,
    pub peak_z: f64,
    pub window_start: YearMonth,
    pub window_end: YearMonth,
}

impl TrendPeak {
    pub fn in_window(&self) -> bool {
        self.window_start <= self.peak && self.peak <= self.window_end
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub corpus: SyntheticCorpus,
    /// Replay fixture as JSONL.
    pub fixture: String,
    pub run: PipelineRun,
    pub annotated: BTreeSet<String>,
    pub report: EvalReport,
    pub recovery: Vec<ThemeRecovery>,
    /// Monthly decomposition of predicted counts; themes whose trend has
    /// zero variance are left out.
    pub trends: Vec<(ThemeLabel, Vec<TrendRow>)>,
    /// Peaks of themes planted with a rate window.
    pub peaks: Vec<TrendPeak>,
    pub unmatched_requests: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("evaluate: {0}")]
    Eval(#[from] EvalError),
    #[error("trends: {0}")]
    Stats(#[from] StatsError),
    #[error("trends: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Seeded subset of case ids treated as annotated.
pub fn annotation_subset(cases: &[CaseRecord], fraction: f64, seed: u64) -> BTreeSet<String> {
    let k = ((fraction.clamp(0.0, 1.0) * cases.len() as f64).round() as usize).min(cases.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, cases.len(), k)
        .into_iter()
        .map(|i| cases[i].case_id.clone())
        .collect()
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoOutcome, DemoError> {
    let corpus = synthesize_corpus(cfg.seed, cfg.n, &cfg.profile);
    let prompts = PromptSet::builtin();
    let fixture = scripted_fixture(&corpus, &prompts).to_jsonl();
    let llm = ScriptedLlm::new(Fixture::parse(&fixture).expect("fixture round-trips"))
        .with_max_parallel(cfg.max_parallel);
    let mut pcfg = PipelineConfig::new(cfg.model.clone());
    pcfg.prompts = prompts;
    let run = run_pipeline(&corpus.cases, &llm, &pcfg);

    let gold = gold_annotations(&corpus.gold)?;
    let annotated = annotation_subset(
        &corpus.cases,
        cfg.annotated_fraction,
        cfg.seed.wrapping_add(1),
    );
    let report = evaluate(&run.results, &gold, Some(&annotated))?;

    let n = corpus.cases.len().max(1) as f64;
    let recovery = report
        .themes
        .iter()
        .map(|t| ThemeRecovery {
            theme: t.theme,
            planted: gold.iter().filter(|g| g.themes.contains(&t.theme)).count() as f64 / n,
            raw: t.fraction,
            precision: t.precision,
            recall: t.recall,
            adjusted: t.fraction_adj,
        })
        .collect();

    let predicted: BTreeMap<&str, &BTreeSet<ThemeLabel>> = run
        .results
        .iter()
        .map(|r| (r.case_id.as_str(), &r.themes))
        .collect();
    let mut trends = Vec::new();
    let mut peaks = Vec::new();
    if !corpus.cases.is_empty() {
        for theme in ThemeLabel::ALL {
            let series = monthly_counts(&corpus.cases, |c| {
                predicted[c.case_id.as_str()].contains(&theme)
            })?;
            let rows = match trend_table(&series, 12) {
                Ok(rows) => rows,
                Err(StatsError::ZeroVariance) => continue,
                Err(e) => return Err(e.into()),
            };
            let window = cfg
                .profile
                .themes
                .iter()
                .find(|p| p.theme == theme)
                .and_then(|p| p.window.clone());
            if let Some(w) = window {
                let (i, z) = rows
                    .iter()
                    .enumerate()
                    .filter_map(|(i, r)| r.trend_z.map(|z| (i, z)))
                    .fold((0, f64::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    });
                peaks.push(TrendPeak {
                    theme,
                    peak: YearMonth::new(rows[i].year, rows[i].month),
                    peak_z: z,
                    window_start: w.start,
                    window_end: w.end,
                });
            }
            trends.push((theme, rows));
        }
    }

    Ok(DemoOutcome {
        unmatched_requests: llm.unmatched(),
        corpus,
        fixture,
        run,
        annotated,
        report,
        recovery,
        trends,
        peaks,
    })
}
