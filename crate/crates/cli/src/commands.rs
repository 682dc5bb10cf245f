use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;
use thememiner::corpus::{
    filter_cohort, load_cases, load_gold, monthly_counts, save_cases, save_gold, CaseFormat,
};
use thememiner::demo::{run_demo, DemoConfig};
use thememiner::eval::{
    evaluate as score, gold_annotations, load_metrics, prevalence as adjust, write_prevalence_csv,
    write_report_csv,
};
use thememiner::keyphrase::{
    most_similar, parse_keyphrase_file, sample_annotation_set, train_embeddings,
    write_expansion_csv, EmbeddingConfig, Normalizer, DISCLOSED_KEYPHRASES, STARTER_PHRASES,
};
use thememiner::llm::mock::serve_mock_on;
use thememiner::llm::{EndpointConfig, Fixture, HttpClient, LlmClient, ScriptedLlm, ENV_ENDPOINT};
use thememiner::pipeline::{
    fallback_split, load_results, save_results, CaseResult, PipelineConfig, PromptSet,
};
use thememiner::stats::svg::line_chart;
use thememiner::stats::{
    run_regressions, trend_table, write_heatmap_csv, write_regression_csv, write_trend_csv,
    DesignSpec, IrlsOptions, StatsError, TrendRow,
};
use thememiner::{CaseRecord, CohortFilter, ThemeLabel};

use crate::manifest::Manifest;
use crate::{
    CliError, CohortArgs, DemoArgs, EvaluateArgs, ExpandArgs, MockServeArgs, PrevalenceArgs,
    RegressArgs, RunArgs, SampleArgs, TrendsArgs,
};

type CliResult = Result<(), CliError>;

fn read_cases(path: &Path) -> Result<Vec<CaseRecord>, CliError> {
    load_cases(path, CaseFormat::from_path(path)).map_err(CliError::stage("load cases"))
}

fn read_results(path: &Path) -> Result<Vec<CaseResult>, CliError> {
    load_results(path).map_err(CliError::stage("load results"))
}

fn make_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(CliError::at("create output directory", dir))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::at("create output", path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(CliError::stage("serialize"))?;
    fs::write(path, text + "\n").map_err(CliError::at("write output", path))
}

fn parse_themes(names: &[String]) -> Result<Vec<ThemeLabel>, CliError> {
    if names.is_empty() {
        return Ok(ThemeLabel::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse().map_err(CliError::stage("parse themes")))
        .collect()
}

fn cohort(args: &CohortArgs) -> CohortFilter {
    CohortFilter {
        min_age: args.min_age,
        max_age: args.max_age,
        min_year: args.min_year,
        max_year: args.max_year,
        states: (!args.states.is_empty()).then(|| args.states.iter().cloned().collect()),
    }
}

pub fn expand_keyphrases(a: &ExpandArgs, seed: u64) -> CliResult {
    let mut m = Manifest::new(
        "expand-keyphrases",
        seed,
        json!({ "k": a.k, "dimension": a.dimension, "window": a.window, "negatives": a.negatives, "epochs": a.epochs, "min_count": a.min_count }),
    );
    m.input(&a.cases)?;
    let cases = read_cases(&a.cases)?;
    let starter = match &a.starter {
        Some(p) => {
            m.input(p)?;
            fs::read_to_string(p).map_err(CliError::at("read starter phrases", p))?
        }
        None => STARTER_PHRASES.to_string(),
    };
    let phrases: Vec<&str> = starter
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .collect();

    let normalizer = Normalizer::default();
    let mut out = Vec::new();
    if !phrases.is_empty() {
        let sentences: Vec<Vec<String>> = cases
            .iter()
            .flat_map(|c| fallback_split(&c.pipeline_text()))
            .map(|s| normalizer.normalize(&s))
            .filter(|t| !t.is_empty())
            .collect();
        let config = EmbeddingConfig {
            dimension: a.dimension,
            window: a.window,
            negatives: a.negatives,
            epochs: a.epochs,
            min_count: a.min_count,
            seed,
            ..Default::default()
        };
        let embeddings =
            train_embeddings(&sentences, &config).map_err(CliError::stage("train embeddings"))?;
        for p in phrases {
            match most_similar(&embeddings, &normalizer, p, a.k) {
                Ok(c) => out.extend(c),
                Err(e) => log::warn!("skipping starter phrase {p:?}: {e}"),
            }
        }
    }
    write_expansion_csv(create(&a.out)?, &out).map_err(CliError::stage("write expansion"))?;
    m.output(&a.out);
    m.write_beside(&a.out)?;
    Ok(())
}

pub fn sample(a: &SampleArgs, seed: u64) -> CliResult {
    let filter = cohort(&a.cohort);
    let mut m = Manifest::new(
        "sample",
        seed,
        json!({ "n_with": a.n_with, "n_without": a.n_without, "cohort": filter }),
    );
    m.input(&a.cases)?;
    let text = match &a.keyphrases {
        Some(p) => {
            m.input(p)?;
            fs::read_to_string(p).map_err(CliError::at("read keyphrases", p))?
        }
        None => DISCLOSED_KEYPHRASES.to_string(),
    };
    let patterns = parse_keyphrase_file(&text).map_err(CliError::stage("parse keyphrases"))?;
    let cases = filter_cohort(&read_cases(&a.cases)?, &filter);
    let (with, without) = sample_annotation_set(&cases, &patterns, a.n_with, a.n_without, seed)
        .map_err(CliError::stage("sample"))?;
    make_dir(&a.out_dir)?;
    for (name, set) in [
        ("with_keyphrase.jsonl", &with),
        ("without_keyphrase.jsonl", &without),
    ] {
        let path = a.out_dir.join(name);
        save_cases(&path, CaseFormat::Jsonl, set).map_err(CliError::stage("write sample"))?;
        m.output(&path);
    }
    m.parameters["cohort_size"] = json!(cases.len());
    m.write_beside(&a.out_dir)?;
    println!(
        "{} with keyphrases, {} without, from {} cases",
        with.len(),
        without.len(),
        cases.len()
    );
    Ok(())
}

pub fn run_pipeline(a: &RunArgs, seed: u64) -> CliResult {
    let mut m = Manifest::new("run-pipeline", seed, json!({ "model": a.model }));
    m.input(&a.cases)?;
    let cases = read_cases(&a.cases)?;
    let mut cfg = PipelineConfig::new(a.model.clone());
    if let Some(dir) = &a.prompts {
        cfg.prompts = PromptSet::load_dir(dir).map_err(CliError::stage("load prompts"))?;
    }
    cfg.max_parallel = a.max_parallel;

    let (client, endpoint): (Box<dyn LlmClient>, Option<String>) = match &a.fixture {
        Some(path) => {
            m.input(path)?;
            let fixture = Fixture::load(path).map_err(CliError::stage("load fixture"))?;
            let llm = ScriptedLlm::new(fixture).with_max_parallel(a.max_parallel.unwrap_or(4));
            (Box::new(llm), None)
        }
        None => {
            let mut ec = EndpointConfig::new(String::new(), a.model.clone());
            ec.timeout_ms = a.timeout_ms;
            ec.apply_env()
                .map_err(CliError::stage("configure endpoint"))?;
            if let Some(url) = &a.endpoint {
                ec.base_url = url.clone();
            }
            if let Some(n) = a.max_parallel {
                ec.max_parallel = n;
            }
            if ec.base_url.is_empty() {
                return Err(CliError::new(
                    "configure endpoint",
                    format!("pass --endpoint, --fixture or set {ENV_ENDPOINT}"),
                ));
            }
            let url = ec.base_url.clone();
            (
                Box::new(HttpClient::new(ec).map_err(CliError::stage("configure endpoint"))?),
                Some(url),
            )
        }
    };
    let started = chrono::Utc::now().to_rfc3339();
    let mut run = thememiner::pipeline::run_pipeline(&cases, client.as_ref(), &cfg);
    run.manifest.endpoint = endpoint;
    run.manifest.started_at = Some(started);

    save_results(&a.out, &run.results).map_err(CliError::stage("write results"))?;
    m.output(&a.out);
    let run_path = a.out.with_extension("run.json");
    write_json(&run_path, &run.manifest)?;
    m.output(&run_path);
    m.write_beside(&a.out)?;
    let c = &run.manifest.counts;
    println!(
        "{} cases, {} online, {} flagged, {} split fallbacks",
        c.cases, c.online_cases, c.flagged_cases, c.split_fallbacks
    );
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, seed: u64) -> CliResult {
    let mut m = Manifest::new("evaluate", seed, json!({}));
    m.input(&a.results)?;
    m.input(&a.gold)?;
    let results = read_results(&a.results)?;
    let gold = gold_annotations(&load_gold(&a.gold).map_err(CliError::stage("load gold"))?)
        .map_err(CliError::stage("load gold"))?;
    let subset: Option<BTreeSet<String>> = match &a.subset {
        Some(p) => {
            m.input(p)?;
            let text = fs::read_to_string(p).map_err(CliError::at("read subset", p))?;
            Some(
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
            )
        }
        None => None,
    };
    let report = score(&results, &gold, subset.as_ref()).map_err(CliError::stage("evaluate"))?;
    make_dir(&a.out_dir)?;
    let json_path = a.out_dir.join("eval_report.json");
    write_json(&json_path, &report)?;
    let csv_path = a.out_dir.join("eval_report.csv");
    write_report_csv(create(&csv_path)?, &report).map_err(CliError::stage("write report"))?;
    m.output(&json_path);
    m.output(&csv_path);
    m.write_beside(&a.out_dir)?;
    println!("{} cases evaluated", report.n_evaluated);
    Ok(())
}

pub fn prevalence(a: &PrevalenceArgs, seed: u64) -> CliResult {
    let mut m = Manifest::new("prevalence", seed, json!({}));
    m.input(&a.results)?;
    m.input(&a.metrics)?;
    let results = read_results(&a.results)?;
    let metrics =
        load_metrics(File::open(&a.metrics).map_err(CliError::at("read metrics", &a.metrics))?)
            .map_err(CliError::stage("load metrics"))?;
    let rows = adjust(&results, &metrics).map_err(CliError::stage("prevalence"))?;
    write_prevalence_csv(create(&a.out)?, &rows).map_err(CliError::stage("write prevalence"))?;
    m.output(&a.out);
    m.write_beside(&a.out)?;
    Ok(())
}

/// Joins cases to their results; every case must have one.
fn predicted<'a>(
    cases: &[CaseRecord],
    results: &'a [CaseResult],
) -> Result<BTreeMap<String, &'a CaseResult>, CliError> {
    let by_id: BTreeMap<String, &CaseResult> =
        results.iter().map(|r| (r.case_id.clone(), r)).collect();
    if let Some(c) = cases.iter().find(|c| !by_id.contains_key(&c.case_id)) {
        return Err(CliError::new(
            "join results",
            format!("no result for case {}", c.case_id),
        ));
    }
    Ok(by_id)
}

fn chart(path: &Path, title: &str, series: &[(String, Vec<TrendRow>)]) -> CliResult {
    let Some((_, first)) = series.first() else {
        return Ok(());
    };
    let labels: Vec<String> = first
        .iter()
        .map(|r| format!("{}-{:02}", r.year, r.month))
        .collect();
    let lines: Vec<(String, Vec<Option<f64>>)> = series
        .iter()
        .map(|(n, rows)| (n.clone(), rows.iter().map(|r| r.trend_z).collect()))
        .collect();
    fs::write(path, line_chart(title, &labels, &lines)).map_err(CliError::at("write chart", path))
}

pub fn trends(a: &TrendsArgs, seed: u64) -> CliResult {
    let themes = parse_themes(&a.themes)?;
    let mut m = Manifest::new(
        "trends",
        seed,
        json!({ "period": a.period, "themes": themes, "skip_flat": a.skip_flat }),
    );
    m.input(&a.cases)?;
    m.input(&a.results)?;
    let cases = read_cases(&a.cases)?;
    let results = read_results(&a.results)?;
    let pred = predicted(&cases, &results)?;

    type Keep = Box<dyn Fn(&CaseResult) -> bool>;
    let mut series: Vec<(String, Keep)> = vec![(
        "AnyOnline".to_string(),
        Box::new(|r: &CaseResult| r.online_mentioned),
    )];
    for t in themes {
        series.push((
            t.name().to_string(),
            Box::new(move |r: &CaseResult| r.themes.contains(&t)),
        ));
    }
    make_dir(&a.out_dir)?;
    let mut written = Vec::new();
    for (name, keep) in &series {
        let counts = monthly_counts(&cases, |c| keep(pred[&c.case_id]))
            .map_err(CliError::stage("monthly counts"))?;
        let rows = match trend_table(&counts, a.period) {
            Ok(rows) => rows,
            Err(StatsError::ZeroVariance) if a.skip_flat => {
                log::warn!("{name}: trend has zero variance, skipped");
                continue;
            }
            Err(e) => return Err(CliError::new("trends", format!("{name}: {e}"))),
        };
        let path = a.out_dir.join(format!("{name}.csv"));
        write_trend_csv(create(&path)?, &rows).map_err(CliError::stage("write trends"))?;
        m.output(&path);
        written.push((name.clone(), rows));
    }
    if a.svg {
        let path = a.out_dir.join("trends.svg");
        chart(&path, "z-scored monthly trend", &written)?;
        m.output(&path);
    }
    m.write_beside(&a.out_dir)?;
    Ok(())
}

pub fn regress(a: &RegressArgs, seed: u64) -> CliResult {
    let themes = parse_themes(&a.themes)?;
    let spec = DesignSpec {
        race_reference: a.race_reference.clone(),
        circumstances: true,
        state_effects: !a.no_state_effects,
        year_effects: !a.no_year_effects,
        source_effects: !a.no_source_effects,
        narrative_length: !a.no_narrative_length,
    };
    let mut m = Manifest::new(
        "regress",
        seed,
        json!({ "alpha": a.alpha, "family_size": a.family_size, "themes": themes, "design": spec }),
    );
    m.input(&a.cases)?;
    m.input(&a.results)?;
    let cases = read_cases(&a.cases)?;
    let results = read_results(&a.results)?;
    let report = run_regressions(
        &cases,
        &results,
        &themes,
        &spec,
        &IrlsOptions::default(),
        a.family_size,
        a.alpha,
    )
    .map_err(CliError::stage("regress"))?;
    make_dir(&a.out_dir)?;
    let coef = a.out_dir.join("coefficients.csv");
    write_regression_csv(create(&coef)?, &report).map_err(CliError::stage("write coefficients"))?;
    let heat = a.out_dir.join("heatmap.csv");
    write_heatmap_csv(create(&heat)?, &report).map_err(CliError::stage("write heatmap"))?;
    let full = a.out_dir.join("regression.json");
    write_json(&full, &report)?;
    for p in [&coef, &heat, &full] {
        m.output(p);
    }
    m.parameters["family_size_used"] = json!(report.family_size);
    m.write_beside(&a.out_dir)?;
    for (t, why) in &report.skipped {
        println!("skipped {t}: {why}");
    }
    Ok(())
}

pub fn mock_serve(a: &MockServeArgs) -> CliResult {
    let fixture = Fixture::load(&a.fixture).map_err(CliError::stage("load fixture"))?;
    let server = serve_mock_on(fixture, &a.addr).map_err(CliError::stage("bind"))?;
    println!("serving {} at {}", a.fixture.display(), server.base_url());
    server.wait();
    Ok(())
}

pub fn demo(a: &DemoArgs, seed: u64) -> CliResult {
    let cfg = DemoConfig {
        seed,
        n: a.n,
        annotated_fraction: a.annotated_fraction,
        max_parallel: a.max_parallel,
        ..Default::default()
    };
    let mut m = Manifest::new(
        "demo",
        seed,
        json!({ "n": a.n, "annotated_fraction": a.annotated_fraction, "profile": cfg.profile }),
    );
    let out = run_demo(&cfg).map_err(CliError::stage("demo"))?;
    let dir = &a.out_dir;
    make_dir(dir)?;
    let mut outputs: Vec<PathBuf> = Vec::new();

    let p = dir.join("cases.jsonl");
    save_cases(&p, CaseFormat::Jsonl, &out.corpus.cases).map_err(CliError::stage("write cases"))?;
    outputs.push(p);
    let p = dir.join("gold.jsonl");
    save_gold(&p, &out.corpus.gold).map_err(CliError::stage("write gold"))?;
    outputs.push(p);
    let p = dir.join("fixture.jsonl");
    fs::write(&p, &out.fixture).map_err(CliError::at("write fixture", &p))?;
    outputs.push(p);
    let p = dir.join("results.jsonl");
    save_results(&p, &out.run.results).map_err(CliError::stage("write results"))?;
    outputs.push(p);
    let p = dir.join("results.run.json");
    write_json(&p, &out.run.manifest)?;
    outputs.push(p);
    let p = dir.join("annotated.txt");
    let ids: String = out.annotated.iter().map(|id| format!("{id}\n")).collect();
    fs::write(&p, ids).map_err(CliError::at("write annotated ids", &p))?;
    outputs.push(p);
    let p = dir.join("eval_report.json");
    write_json(&p, &out.report)?;
    outputs.push(p);
    let p = dir.join("eval_report.csv");
    write_report_csv(create(&p)?, &out.report).map_err(CliError::stage("write report"))?;
    outputs.push(p);

    let p = dir.join("recovery.csv");
    {
        let mut w = csv::Writer::from_writer(create(&p)?);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        w.write_record([
            "theme",
            "planted",
            "raw",
            "precision",
            "recall",
            "adjusted",
            "error_pp",
        ])
        .map_err(CliError::stage("write recovery"))?;
        for r in &out.recovery {
            w.write_record([
                r.theme.name().to_string(),
                format!("{:.6}", r.planted),
                format!("{:.6}", r.raw),
                opt(r.precision),
                opt(r.recall),
                opt(r.adjusted),
                opt(r.error_pp()),
            ])
            .map_err(CliError::stage("write recovery"))?;
        }
        w.flush().map_err(CliError::stage("write recovery"))?;
    }
    outputs.push(p);

    let tdir = dir.join("trends");
    make_dir(&tdir)?;
    let mut named = Vec::new();
    for (theme, rows) in &out.trends {
        let p = tdir.join(format!("{}.csv", theme.name()));
        write_trend_csv(create(&p)?, rows).map_err(CliError::stage("write trends"))?;
        outputs.push(p);
        named.push((theme.name().to_string(), rows.clone()));
    }
    if a.svg {
        let p = dir.join("trends.svg");
        let windowed: Vec<_> = named
            .iter()
            .filter(|(n, _)| out.peaks.iter().any(|pk| pk.theme.name() == n))
            .cloned()
            .collect();
        chart(&p, "z-scored monthly trend (windowed themes)", &windowed)?;
        outputs.push(p);
    }

    let worst = out
        .recovery
        .iter()
        .filter_map(|r| r.error_pp().map(|e| (r.theme, e)))
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()));
    let summary = json!({
        "n": out.corpus.cases.len(),
        "annotated": out.annotated.len(),
        "unmatched_requests": out.unmatched_requests,
        "max_abs_error_pp": worst.map(|w| w.1.abs()),
        "worst_theme": worst.map(|w| w.0),
        "peaks": out.peaks.iter().map(|p| json!({ "theme": p.theme, "peak": p.peak, "peak_z": p.peak_z, "in_window": p.in_window() })).collect::<Vec<_>>(),
    });
    let p = dir.join("summary.json");
    write_json(&p, &summary)?;
    outputs.push(p);
    for p in &outputs {
        m.output(p);
    }
    m.write_beside(dir)?;

    println!("theme                      planted   adjusted   err(pp)");
    for r in &out.recovery {
        let adj = r.adjusted.map_or("-".to_string(), |v| format!("{v:.4}"));
        let err = r.error_pp().map_or("-".to_string(), |v| format!("{v:+.2}"));
        println!(
            "{:<26} {:>7.4} {:>10} {:>9}",
            r.theme.name(),
            r.planted,
            adj,
            err
        );
    }
    for p in &out.peaks {
        println!(
            "{} trend peaks {}-{:02} (z={:.2}); window {}-{:02}..{}-{:02}",
            p.theme,
            p.peak.year,
            p.peak.month,
            p.peak_z,
            p.window_start.year,
            p.window_start.month,
            p.window_end.year,
            p.window_end.month
        );
    }
    Ok(())
}
