use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;
use ssrm_core::backend::{fit, load_snapshot};
use ssrm_core::eval::{
    calibration, confidence_histogram, evaluate, labeled_fraction_sweep, reliability_curve,
    CalibrationReport, EvalReport,
};
use ssrm_core::prefdata::{
    load_entries, randomize_order, split, write_labeled, write_triplets, Entry, LabeledExample,
    PreferenceDataset, PreferenceTriplet,
};
use ssrm_core::ssrm::{run_ssrm_with, IterationReport};
use ssrm_core::synth::{
    bayes_accuracy, generate, generate_range, labeled_examples, write_oracle, WorldSpec,
};
use ssrm_core::Snapshot;

use crate::artifacts::Artifacts;
use crate::config::{ExperimentConfig, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gen,
    Split,
    Srm,
    Ssrm,
    Eval,
    Calibrate,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Split => "split",
            Command::Srm => "srm",
            Command::Ssrm => "ssrm",
            Command::Eval => "eval",
            Command::Calibrate => "calibrate",
            Command::Sweep => "sweep",
        }
    }

    /// Files a successful run leaves in the output directory.
    pub fn expected_files(self, cfg: &ExperimentConfig) -> Vec<String> {
        let names: Vec<String> = match self {
            Command::Gen => {
                let mut v = vec!["data.jsonl", "oracle.jsonl", "bayes.json"];
                if cfg.data.synth.as_ref().is_some_and(|s| s.test_count > 0) {
                    v.extend(["test.jsonl", "test_oracle.jsonl"]);
                }
                v.into_iter().map(String::from).collect()
            }
            Command::Split => vec!["labeled.jsonl".into(), "unlabeled.jsonl".into()],
            Command::Srm => vec!["snapshot_srm.json".into(), "srm.json".into()],
            Command::Ssrm => {
                let mut v: Vec<String> = [
                    "reports.jsonl",
                    "summary.csv",
                    "summary.md",
                    "labeled.jsonl",
                    "unlabeled.jsonl",
                ]
                .map(String::from)
                .to_vec();
                for t in 0..cfg.ssrm.iterations {
                    v.push(format!("snapshot_t{t}.json"));
                    if cfg.output.dump_augmented {
                        v.push(format!("augmented_t{t}.jsonl"));
                    }
                }
                v
            }
            Command::Eval => vec!["eval.json".into(), "eval.csv".into()],
            Command::Calibrate => ["calibration.json", "calibration.csv", "reliability.csv"]
                .map(String::from)
                .to_vec(),
            Command::Sweep => vec!["sweep.json".into(), "sweep.csv".into()],
        };
        names
    }

    pub fn run(self, cfg: &ExperimentConfig, out: &Path, hash: &str) -> Result<Vec<String>> {
        // Validate inputs before creating anything on disk.
        let prepared = Prepared::load(self, cfg)?;
        let mut artifacts = Artifacts::create(out, hash, self.name())?;
        match self {
            Command::Gen => gen(cfg, &mut artifacts)?,
            Command::Split => {
                write_pools(cfg, prepared.data.as_ref().expect("loaded"), &mut artifacts)?
            }
            Command::Srm => srm(cfg, &prepared, &mut artifacts)?,
            Command::Ssrm => ssrm(cfg, &prepared, &mut artifacts)?,
            Command::Eval => eval(cfg, &prepared, &mut artifacts)?,
            Command::Calibrate => calibrate(cfg, &prepared, &mut artifacts)?,
            Command::Sweep => sweep(cfg, &prepared, &mut artifacts)?,
        }
        artifacts.finish(&self.expected_files(cfg))
    }
}

/// Inputs loaded up front so that bad configs fail before any output exists.
#[derive(Default)]
struct Prepared {
    data: Option<PreferenceDataset>,
    test: Option<Vec<LabeledExample>>,
    pre: Option<Snapshot>,
    model: Option<Snapshot>,
}

impl Prepared {
    fn load(cmd: Command, cfg: &ExperimentConfig) -> Result<Self> {
        let mut p = Prepared::default();
        match cmd {
            Command::Gen => {
                let synth = synth_config(cfg)?;
                if synth.count == 0 {
                    bail!("data.synth.count must be positive");
                }
                if synth.bayes_samples == 0 {
                    bail!("data.synth.bayes_samples must be positive");
                }
                WorldSpec::new(synth.world.clone())?;
            }
            Command::Split => {
                if cfg.split.is_none() {
                    bail!("split requires a [split] section");
                }
                p.data = Some(dataset(cfg)?);
            }
            Command::Srm | Command::Ssrm => {
                p.data = Some(dataset(cfg)?);
                p.test = test_set(cfg)?;
                p.pre = Some(pre_model(cfg)?);
            }
            Command::Eval | Command::Calibrate => {
                let path = cfg
                    .eval
                    .snapshot
                    .as_ref()
                    .context("eval.snapshot (or --snapshot) is required")?;
                p.model = Some(
                    load_snapshot(path)
                        .with_context(|| format!("loading snapshot {}", path.display()))?,
                );
                p.test =
                    Some(test_set(cfg)?.context(
                        "a test set is required (eval.test_path or data.synth.test_count)",
                    )?);
            }
            Command::Sweep => {
                p.data = Some(PreferenceDataset::new(load_labeled(cfg)?, Vec::new())?);
                p.test =
                    Some(test_set(cfg)?.context(
                        "a test set is required (eval.test_path or data.synth.test_count)",
                    )?);
                p.pre = Some(pre_model(cfg)?);
            }
        }
        Ok(p)
    }
}

fn synth_config(cfg: &ExperimentConfig) -> Result<&SynthConfig> {
    cfg.data
        .synth
        .as_ref()
        .context("this command needs a [data.synth] section")
}

/// All records from the configured source: labeled examples (order
/// randomized once if enabled) and any unlabeled triplets.
fn load_source(cfg: &ExperimentConfig) -> Result<(Vec<LabeledExample>, Vec<PreferenceTriplet>)> {
    let (labeled, unlabeled) = if let Some(path) = &cfg.data.path {
        let file = load_entries(path).with_context(|| format!("loading {}", path.display()))?;
        file.into_dataset()?.into_parts()
    } else if let Some(synth) = &cfg.data.synth {
        if synth.count == 0 {
            bail!("data.synth.count must be positive");
        }
        let world = WorldSpec::new(synth.world.clone())?;
        (
            labeled_examples(&generate(&world, synth.count)?),
            Vec::new(),
        )
    } else {
        bail!("no data source: set data.path or data.synth");
    };
    let labeled = if cfg.data.randomize_order {
        randomize_order(&labeled, cfg.seed)
    } else {
        labeled
    };
    Ok((labeled, unlabeled))
}

fn load_labeled(cfg: &ExperimentConfig) -> Result<Vec<LabeledExample>> {
    let (labeled, _) = load_source(cfg)?;
    if labeled.is_empty() {
        bail!("data source has no labeled records");
    }
    Ok(labeled)
}

/// `D_l` / `D_u`: the split of the labeled records if configured, with any
/// unlabeled records appended to `D_u`.
fn dataset(cfg: &ExperimentConfig) -> Result<PreferenceDataset> {
    let (labeled, unlabeled) = load_source(cfg)?;
    match &cfg.split {
        Some(spec) => {
            let (d_l, mut d_u) = split(&labeled, spec)?.into_parts();
            d_u.extend(unlabeled);
            Ok(PreferenceDataset::new(d_l, d_u)?)
        }
        None => Ok(PreferenceDataset::new(labeled, unlabeled)?),
    }
}

fn test_set(cfg: &ExperimentConfig) -> Result<Option<Vec<LabeledExample>>> {
    if let Some(path) = &cfg.eval.test_path {
        let file = load_entries(path).with_context(|| format!("loading {}", path.display()))?;
        let mut out = Vec::with_capacity(file.entries.len());
        for entry in file.entries {
            match entry {
                Entry::Labeled(e) => out.push(e),
                Entry::Unlabeled(t) => bail!("test record {} has no label", t.id),
            }
        }
        if out.is_empty() {
            bail!("test set {} is empty", path.display());
        }
        return Ok(Some(out));
    }
    match &cfg.data.synth {
        Some(s) if s.test_count > 0 => {
            let world = WorldSpec::new(s.world.clone())?;
            Ok(Some(labeled_examples(&generate_range(
                &world,
                s.count as u64,
                s.test_count,
            )?)))
        }
        _ => Ok(None),
    }
}

fn pre_model(cfg: &ExperimentConfig) -> Result<Snapshot> {
    match &cfg.pre_model {
        Some(path) => {
            let model: Snapshot =
                load_snapshot(path).with_context(|| format!("loading {}", path.display()))?;
            if *model.featurizer() != cfg.featurizer {
                bail!("pre_model featurizer differs from [featurizer]");
            }
            Ok(model)
        }
        None => Ok(Snapshot::zeros(cfg.featurizer.clone())?),
    }
}

fn gen(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<()> {
    let synth = synth_config(cfg)?;
    let world = WorldSpec::new(synth.world.clone())?;
    let train = generate(&world, synth.count)?;
    let meta = json!({ "count": synth.count, "first_index": 0 });
    out.write_jsonl("data.jsonl", meta.clone(), |w| {
        write_labeled(w, &labeled_examples(&train))
    })?;
    out.write_jsonl("oracle.jsonl", meta, |w| write_oracle(w, &train))?;
    if synth.test_count > 0 {
        let test = generate_range(&world, synth.count as u64, synth.test_count)?;
        let meta = json!({ "count": synth.test_count, "first_index": synth.count });
        out.write_jsonl("test.jsonl", meta.clone(), |w| {
            write_labeled(w, &labeled_examples(&test))
        })?;
        out.write_jsonl("test_oracle.jsonl", meta, |w| write_oracle(w, &test))?;
    }
    let bayes = bayes_accuracy(&world, synth.bayes_samples)?;
    out.write_json("bayes.json", &bayes)
}

fn split_header(cfg: &ExperimentConfig, data: &PreferenceDataset) -> serde_json::Value {
    json!({
        "split": cfg.split,
        "m": data.m(),
        "n": data.n(),
    })
}

fn write_pools(
    cfg: &ExperimentConfig,
    data: &PreferenceDataset,
    out: &mut Artifacts,
) -> Result<()> {
    let header = split_header(cfg, data);
    out.write_jsonl("labeled.jsonl", header.clone(), |w| {
        write_labeled(w, data.labeled())
    })?;
    out.write_jsonl("unlabeled.jsonl", header, |w| {
        write_triplets(w, data.unlabeled())
    })
}

fn srm(cfg: &ExperimentConfig, p: &Prepared, out: &mut Artifacts) -> Result<()> {
    let data = p.data.as_ref().expect("loaded");
    if data.m() == 0 {
        bail!("srm needs labeled data");
    }
    let mut model = fit(
        p.pre.as_ref().expect("loaded"),
        data.labeled(),
        &cfg.ssrm.train,
    )?;
    model.provenance.stage = "srm".into();
    out.write_snapshot("snapshot_srm.json", &model)?;
    let eval = p.test.as_ref().map(|t| evaluate(&model, t)).transpose()?;
    out.write_json(
        "srm.json",
        &json!({ "labeled_count": data.m(), "eval": eval }),
    )
}

fn ssrm(cfg: &ExperimentConfig, p: &Prepared, out: &mut Artifacts) -> Result<()> {
    let data = p.data.as_ref().expect("loaded");
    write_pools(cfg, data, out)?;
    let run = run_ssrm_with(
        p.pre.as_ref().expect("loaded"),
        data,
        &cfg.ssrm,
        p.test.as_deref(),
        |a| {
            let snapshot = format!("snapshot_t{}.json", a.t);
            out.write_snapshot(&snapshot, a.model)
                .map_err(|e| observer_error(out.path(&snapshot), e))?;
            if cfg.output.dump_augmented {
                let name = format!("augmented_t{}.jsonl", a.t);
                out.write_jsonl(
                    &name,
                    json!({ "t": a.t, "size": a.training_set.len() }),
                    |w| write_labeled(w, a.training_set),
                )
                .map_err(|e| observer_error(out.path(&name), e))?;
            }
            Ok(())
        },
    )?;
    out.write_jsonl(
        "reports.jsonl",
        json!({ "iterations": cfg.ssrm.iterations, "threshold": cfg.ssrm.threshold }),
        |w| {
            for r in &run.reports {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n").map_err(serde_json::Error::io)?;
            }
            Ok(())
        },
    )?;
    let table = SummaryTable::new(&run.reports);
    out.write_csv("summary.csv", &table.header_refs(), &table.rows)?;
    out.write_markdown("summary.md", &table.markdown())
}

fn observer_error(path: std::path::PathBuf, e: anyhow::Error) -> ssrm_core::Error {
    ssrm_core::Error::Io {
        path,
        source: std::io::Error::other(format!("{e:#}")),
    }
}

/// Per-iteration accuracy by category, average, and the data column.
pub struct SummaryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SummaryTable {
    pub fn new(reports: &[IterationReport]) -> Self {
        let categories: BTreeSet<&str> = reports
            .iter()
            .filter_map(|r| r.eval.as_ref())
            .flat_map(|e| e.per_category.keys().map(String::as_str))
            .collect();
        let with_eval = reports.iter().any(|r| r.eval.is_some());
        let mut header = vec!["Model".to_string()];
        if with_eval {
            header.extend(categories.iter().map(|c| c.to_string()));
            header.push("Average".into());
        }
        header.push("# Data (Pseudo-labeled portion)".into());
        let rows = reports
            .iter()
            .map(|r| {
                let mut row = vec![if r.t == 0 {
                    "SRM (t=0)".to_string()
                } else {
                    format!("SSRM (t={})", r.t)
                }];
                if with_eval {
                    let cell = |e: Option<&EvalReport>, c: Option<&str>| -> String {
                        let acc = match (e, c) {
                            (Some(e), Some(c)) => e.per_category.get(c).map(|a| a.accuracy),
                            (Some(e), None) => Some(e.overall_accuracy),
                            (None, _) => None,
                        };
                        acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into())
                    };
                    row.extend(categories.iter().map(|c| cell(r.eval.as_ref(), Some(c))));
                    row.push(cell(r.eval.as_ref(), None));
                }
                row.push(r.data_summary());
                row
            })
            .collect();
        SummaryTable { header, rows }
    }

    fn header_refs(&self) -> Vec<&str> {
        self.header.iter().map(String::as_str).collect()
    }

    pub fn markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        let mut s = line(&self.header);
        s.push_str(&line(&vec!["---".to_string(); self.header.len()]));
        for row in &self.rows {
            s.push_str(&line(row));
        }
        s
    }
}

fn eval(cfg: &ExperimentConfig, p: &Prepared, out: &mut Artifacts) -> Result<()> {
    let model = p.model.as_ref().expect("loaded");
    let report = evaluate(model, p.test.as_ref().expect("loaded"))?;
    out.write_json(
        "eval.json",
        &json!({ "snapshot": cfg.eval.snapshot, "report": report }),
    )?;
    let mut rows: Vec<Vec<String>> = report
        .per_category
        .iter()
        .map(|(c, a)| {
            vec![
                c.clone(),
                a.correct.to_string(),
                a.total.to_string(),
                format!("{:.4}", a.accuracy),
            ]
        })
        .collect();
    let correct: usize = report.per_category.values().map(|a| a.correct).sum();
    rows.push(vec![
        "overall".into(),
        correct.to_string(),
        report.n_examples.to_string(),
        format!("{:.4}", report.overall_accuracy),
    ]);
    out.write_csv(
        "eval.csv",
        &["category", "correct", "total", "accuracy"],
        &rows,
    )
}

fn bin_rows(report: &CalibrationReport) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    report
        .bins
        .iter()
        .map(|b| {
            vec![
                format!("{:.2}", b.lower),
                format!("{:.2}", b.upper),
                b.count.to_string(),
                opt(b.mean_confidence),
                opt(b.empirical_accuracy),
            ]
        })
        .collect()
}

fn calibrate(cfg: &ExperimentConfig, p: &Prepared, out: &mut Artifacts) -> Result<()> {
    let model = p.model.as_ref().expect("loaded");
    let test = p.test.as_ref().expect("loaded");
    let n_bins = cfg.eval.n_bins;
    let conf = calibration(model, test, n_bins)?;
    let rel = reliability_curve(model, test, n_bins)?;
    let triplets: Vec<PreferenceTriplet> = test.iter().map(|e| e.triplet.clone()).collect();
    let hist = confidence_histogram(model, &triplets, n_bins)?;
    out.write_json(
        "calibration.json",
        &json!({
            "snapshot": cfg.eval.snapshot,
            "calibration": conf,
            "reliability": rel,
            "confidence_histogram": hist,
        }),
    )?;
    let columns = ["lower", "upper", "count", "mean_score", "empirical"];
    out.write_csv("calibration.csv", &columns, &bin_rows(&conf))?;
    out.write_csv("reliability.csv", &columns, &bin_rows(&rel))
}

fn sweep(cfg: &ExperimentConfig, p: &Prepared, out: &mut Artifacts) -> Result<()> {
    let data = p.data.as_ref().expect("loaded");
    let points = labeled_fraction_sweep(
        p.pre.as_ref().expect("loaded"),
        data.labeled(),
        &cfg.sweep.parsed_fractions()?,
        cfg.sweep.split_seed,
        &cfg.ssrm,
        p.test.as_ref().expect("loaded"),
    )?;
    out.write_json("sweep.json", &json!({ "points": points }))?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            vec![
                pt.fraction.to_string(),
                pt.labeled_count.to_string(),
                format!("{:.4}", pt.srm_accuracy),
                format!("{:.4}", pt.accuracy),
            ]
        })
        .collect();
    out.write_csv(
        "sweep.csv",
        &["fraction", "labeled_count", "srm_accuracy", "ssrm_accuracy"],
        &rows,
    )
}
