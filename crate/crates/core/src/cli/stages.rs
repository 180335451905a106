//! Stage bodies behind the subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{CliError, Command, ModeArg, RunConfig, VERSION};
use crate::baseline::{summarize_dataset, train_logreg, LogisticModel, N_FEATURES};
use crate::evaluation::{
    apply_temperature, best_f1_threshold, ece, fit_temperature, write_pr_csv, write_reliability_csv, write_roc_csv,
    MetricsReport, ScoredSet, DEFAULT_BINS,
};
use crate::featurize::NormalizationStats;
use crate::ingest::{ingest_dir, OutcomeKind};
use crate::model::{Model, ModelError};
use crate::pipeline::{
    assemble, featurize_cohort, fit_train_normalizer, load_notes, read_cohort, read_features, split_features,
    write_cohort, write_grids, Prepared, DEFAULT_EMBEDDINGS, EXCLUSIONS_FILE, GRIDS_FILE, NORMALIZER_FILE,
    OUTCOMES_FILE, SPLIT_FILE, STAYS_FILE,
};
use crate::sampler::{Dataset, Split, SplitAssignment};
use crate::seed::derive_seed;
use crate::synth::{generate, verify_signal, MANIFEST_FILE};
use crate::training::{load_model, read_history, train_with, write_history, EpochRecord, TrainOutputs};

/// Suffix of the per-stage resolved configuration file.
pub const RESOLVED_SUFFIX: &str = ".config.txt";

const SUMMARY_FILE: &str = "cohort_summary.txt";
const SIGNAL_FILE: &str = "signal_report.txt";
const BEST_CKPT: &str = "best.ckpt";
const LAST_CKPT: &str = "last.ckpt";
const LOGREG_CKPT: &str = "model.ckpt";
const HISTORY_FILE: &str = "history.csv";
const TEMPERATURE_FILE: &str = "temperature.txt";
/// Oracle AUROC margin over chance below which synth warns.
const SIGNAL_MARGIN: f64 = 0.05;

/// Stage directories under the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
    pub bundle: PathBuf,
    pub cohort: PathBuf,
    pub features: PathBuf,
    pub samples: PathBuf,
}

pub fn layout(out: &Path) -> Layout {
    Layout {
        root: out.to_path_buf(),
        bundle: out.join("bundle"),
        cohort: out.join("cohort"),
        features: out.join("features"),
        samples: out.join("samples"),
    }
}

impl Layout {
    pub fn models(&self, mode: ModeArg) -> PathBuf {
        self.root.join("models").join(mode.as_str())
    }

    pub fn eval(&self, mode: ModeArg) -> PathBuf {
        self.root.join("eval").join(mode.as_str())
    }

    pub fn report(&self, mode: ModeArg) -> PathBuf {
        self.root.join("report").join(mode.as_str())
    }
}

fn scores_file(split: Split) -> String {
    format!("scores_{}.csv", split.as_str())
}

/// Refuses to touch existing outputs unless `force`; with `force` they are removed first.
fn guard(dir: &Path, outputs: &[String], force: bool) -> Result<(), CliError> {
    let existing: Vec<&String> = outputs.iter().filter(|f| dir.join(f).exists()).collect();
    if !existing.is_empty() {
        if !force {
            return Err(CliError::Config(format!(
                "{} already holds {}; pass --force to overwrite",
                dir.display(),
                existing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        for f in existing {
            std::fs::remove_file(dir.join(f))?;
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path))
    }
}

/// Writes `<stage>.config.txt`: tool version, stage inputs, then every config key.
fn write_resolved(dir: &Path, stage: &str, cfg: &RunConfig, inputs: &[(&str, String)]) -> Result<(), CliError> {
    let mut s = format!("tool.name=icu-deterioration\ntool.version={VERSION}\nstage={stage}\n");
    for (k, v) in inputs {
        let _ = writeln!(s, "input.{k}={v}");
    }
    s.push_str(&cfg.to_kv());
    let path = dir.join(format!("{stage}{RESOLVED_SUFFIX}"));
    std::fs::write(&path, &s)?;
    log::debug!("resolved config:\n{s}");
    log::info!("resolved config written to {}", path.display());
    Ok(())
}

fn read_resolved(dir: &Path, stage: &str) -> Result<BTreeMap<String, String>, CliError> {
    let path = require(dir.join(format!("{stage}{RESOLVED_SUFFIX}")))?;
    let text = std::fs::read_to_string(&path)?;
    Ok(super::parse_kv(&text, &path.display().to_string())?.into_iter().collect())
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Event-table directory recorded by ingest, else the synth bundle.
fn data_dir(l: &Layout, explicit: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(d) = explicit {
        return Ok(d.clone());
    }
    if let Ok(kv) = read_resolved(&l.cohort, "ingest") {
        if let Some(d) = kv.get("input.data") {
            return Ok(PathBuf::from(d));
        }
    }
    Ok(l.bundle.clone())
}

fn embeddings_path(l: &Layout, explicit: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    match explicit {
        Some(p) => Ok(p.clone()),
        None => Ok(data_dir(l, None)?.join(DEFAULT_EMBEDDINGS)),
    }
}

/// The normalizer is only valid for the split it was fit on.
fn check_split_matches_featurize(l: &Layout, cfg: &RunConfig) -> Result<(), CliError> {
    let kv = read_resolved(&l.features, "featurize")?;
    let current = cfg.data.to_kv();
    for line in current.lines() {
        let (k, v) = line.split_once('=').expect("key=value");
        if k == "data.embed_dim" {
            continue;
        }
        if kv.get(k).map(String::as_str) != Some(v) {
            return Err(CliError::Config(format!(
                "{k}={v} differs from the value the normalizer was fit with ({}); rerun featurize",
                kv.get(k).map_or("unset", String::as_str)
            )));
        }
    }
    Ok(())
}

fn load_prepared(l: &Layout, cfg: &RunConfig, embeddings: Option<&PathBuf>) -> Result<Prepared, CliError> {
    check_split_matches_featurize(l, cfg)?;
    let features = read_features(&l.cohort, &l.features.join(GRIDS_FILE))?;
    let stats = NormalizationStats::read_csv(&require(l.features.join(NORMALIZER_FILE))?)?;
    let split = SplitAssignment::read_manifest(
        &require(l.samples.join(SPLIT_FILE))?,
        cfg.data.ratios,
        cfg.data.split_seed,
    )?;
    let notes = load_notes(&embeddings_path(l, embeddings)?, cfg.data.embed_dim)?;
    Ok(assemble(features, notes, split, stats, cfg.data.embed_dim)?)
}

pub fn run_stage(cmd: &Command, cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let l = layout(&cfg.out);
    match cmd {
        Command::Synth { .. } => synth(&l, cfg, force),
        Command::Ingest { data } => ingest(&l, cfg, data.as_ref(), force),
        Command::Featurize { data } => featurize(&l, cfg, data.as_ref(), force),
        Command::Sample { embeddings } => sample(&l, cfg, embeddings.as_ref(), force),
        Command::Train {
            mode,
            embeddings,
            resume,
            stop_after_epoch,
        } => train(&l, cfg, *mode, embeddings.as_ref(), (*resume, *stop_after_epoch), force),
        Command::Evaluate { mode, split, embeddings } => {
            evaluate(&l, cfg, *mode, (*split).into(), embeddings.as_ref(), force)
        }
        Command::Calibrate { mode, split } => calibrate(&l, cfg, *mode, (*split).into(), force),
        Command::Report { mode, split } => report(&l, cfg, *mode, (*split).into(), force),
    }
}

fn synth(l: &Layout, cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let outputs: Vec<String> = [
        "patients.csv",
        "admissions.csv",
        "icustays.csv",
        "chartevents.csv",
        "labevents.csv",
        "inputevents.csv",
        "procedureevents.csv",
        crate::synth::NOTES_FILE,
        crate::synth::EMBEDDINGS_FILE,
        MANIFEST_FILE,
        crate::synth::CONFIG_FILE,
        SIGNAL_FILE,
        "synth.config.txt",
    ]
    .map(String::from)
    .to_vec();
    guard(&l.bundle, &outputs, force)?;
    let summary = generate(&cfg.synth, &l.bundle)?;
    log::info!(
        "{} patients, {} stays ({} probes), events mortality/vasopressor/ventilation {:?}, {} notes",
        summary.n_patients,
        summary.n_stays,
        summary.n_probe_stays,
        summary.n_events,
        summary.n_notes
    );
    let signal = verify_signal(&l.bundle, SIGNAL_MARGIN)?;
    std::fs::write(l.bundle.join(SIGNAL_FILE), signal.to_text())?;
    if !signal.structured_ok() {
        log::warn!("structured driver barely separates the classes (oracle AUROC {:.3})", signal.oracle_auroc);
    }
    write_resolved(&l.bundle, "synth", cfg, &[])
}

fn ingest(l: &Layout, cfg: &RunConfig, data: Option<&PathBuf>, force: bool) -> Result<(), CliError> {
    let data = require(data.cloned().unwrap_or_else(|| l.bundle.clone()))?;
    let outputs: Vec<String> = [STAYS_FILE, OUTCOMES_FILE, EXCLUSIONS_FILE, SUMMARY_FILE, "ingest.config.txt"]
        .map(String::from)
        .to_vec();
    guard(&l.cohort, &outputs, force)?;
    let (cohort, report) = ingest_dir(&data)?;
    write_cohort(&cohort, &l.cohort)?;

    let mut s = String::new();
    let _ = writeln!(s, "table                rows       malformed  unknown_items");
    for t in &report.tables {
        let name = t.file.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
        let _ = writeln!(s, "{name:<20} {:<10} {:<10} {}", t.rows, t.malformed, t.unknown_items);
        for ex in &t.examples {
            let _ = writeln!(s, "    {ex}");
        }
    }
    let _ = writeln!(s, "\npatients {}", cohort.n_patients());
    let _ = writeln!(s, "stays    {}", cohort.stays.len());
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &cohort.exclusion_log {
        *reasons.entry(e.reason.as_str()).or_default() += 1;
    }
    let _ = writeln!(s, "\nexcluded stays {}", cohort.exclusion_log.len());
    for (r, n) in &reasons {
        let _ = writeln!(s, "    {r:<22} {n}");
    }
    let _ = writeln!(s, "\nstays with an outcome {}", cohort.outcomes.values().filter(|v| !v.is_empty()).count());
    for kind in [OutcomeKind::Mortality, OutcomeKind::VasopressorStart, OutcomeKind::VentilationStart] {
        let n = cohort.outcomes.values().flatten().filter(|o| o.kind == kind).count();
        let _ = writeln!(s, "    {:<22} {n}", kind.as_str());
    }
    std::fs::write(l.cohort.join(SUMMARY_FILE), &s)?;
    log::info!(
        "kept {} stays of {} patients; excluded {}",
        cohort.stays.len(),
        cohort.n_patients(),
        cohort.exclusion_log.len()
    );
    write_resolved(&l.cohort, "ingest", cfg, &[("data", absolute(&data).display().to_string())])
}

fn featurize(l: &Layout, cfg: &RunConfig, data: Option<&PathBuf>, force: bool) -> Result<(), CliError> {
    let data = require(data_dir(l, data)?)?;
    let (stays, _) = read_cohort(&l.cohort)?;
    let outputs: Vec<String> = [GRIDS_FILE, NORMALIZER_FILE, "featurize.config.txt"].map(String::from).to_vec();
    guard(&l.features, &outputs, force)?;
    let (cohort, _) = ingest_dir(&data)?;
    if cohort.stays.len() != stays.len() || cohort.stays.iter().zip(&stays).any(|(a, b)| a.stay_id != b.stay_id) {
        return Err(CliError::Schema(format!(
            "event tables in {} no longer match the ingested cohort; rerun ingest",
            data.display()
        )));
    }
    let features = featurize_cohort(&cohort);
    drop(cohort);
    let split = split_features(&features, &cfg.data)?;
    let stats = fit_train_normalizer(&features, &split)?;
    write_grids(&l.features.join(GRIDS_FILE), &features.grids)?;
    stats.write_csv(&l.features.join(NORMALIZER_FILE))?;
    log::info!("{} grids cached; normalizer fit on {} training patients", features.grids.len(), split.counts()[0]);
    write_resolved(&l.features, "featurize", cfg, &[("data", absolute(&data).display().to_string())])
}

fn sample(l: &Layout, cfg: &RunConfig, embeddings: Option<&PathBuf>, force: bool) -> Result<(), CliError> {
    check_split_matches_featurize(l, cfg)?;
    let features = read_features(&l.cohort, &require(l.features.join(GRIDS_FILE))?)?;
    let stats = NormalizationStats::read_csv(&require(l.features.join(NORMALIZER_FILE))?)?;
    let mut outputs: Vec<String> = vec![SPLIT_FILE.into(), "sample.config.txt".into()];
    outputs.extend(Split::ALL.map(|s| format!("audit_{}.csv", s.as_str())));
    guard(&l.samples, &outputs, force)?;
    let split = split_features(&features, &cfg.data)?;
    split.write_manifest(&l.samples.join(SPLIT_FILE))?;
    let emb = embeddings_path(l, embeddings)?;
    let notes = load_notes(&emb, cfg.data.embed_dim)?;
    let prepared = assemble(features, notes, split, stats, cfg.data.embed_dim)?;
    for s in Split::ALL {
        let d = prepared.get(s);
        d.write_audit(&l.samples.join(format!("audit_{}.csv", s.as_str())))?;
        log::info!("{}: {} samples, prevalence {:.4}", s.as_str(), d.len(), d.prevalence());
    }
    write_resolved(&l.samples, "sample", cfg, &[("embeddings", emb.display().to_string())])
}

/// Logits of every sample, computed in parallel chunks; order matches the dataset.
fn predict(model: &Model<f32>, data: &Dataset, batch_size: usize) -> Result<Vec<f64>, ModelError> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = idx
        .par_chunks(batch_size.max(1) * 4)
        .map(|chunk| model.predict_logits(data, chunk, batch_size))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.concat())
}

fn scored(data: &Dataset, logits: Vec<f64>) -> ScoredSet {
    let mut set = ScoredSet::from_logits(logits, data.labels());
    set.stay_id = (0..data.len()).map(|i| data.stay_of(i).meta.stay_id).collect();
    set.t = data.index.iter().map(|r| r.t).collect();
    set.missing_frac = data.missing_fracs();
    set
}

fn train(
    l: &Layout,
    cfg: &RunConfig,
    mode: ModeArg,
    embeddings: Option<&PathBuf>,
    (resume, stop_after_epoch): (bool, Option<usize>),
    force: bool,
) -> Result<(), CliError> {
    let dir = l.models(mode);
    let prepared = load_prepared(l, cfg, embeddings)?;
    let Some(net_mode) = mode.network() else {
        guard(&dir, &[LOGREG_CKPT.into(), HISTORY_FILE.into(), "train.config.txt".into()], force)?;
        let started = std::time::Instant::now();
        let (x, y) = summarize_dataset(&prepared.train);
        let fit = train_logreg(&x, &y, N_FEATURES, &cfg.logreg)?;
        drop(x);
        let (xv, yv) = summarize_dataset(&prepared.val);
        let z = fit.model.logits(&xv);
        let (val_auroc, val_auprc) = (crate::evaluation::auroc(&z, &yv)?, crate::evaluation::auprc(&z, &yv)?);
        fit.model.save(&dir.join(LOGREG_CKPT))?;
        let record = EpochRecord {
            epoch: fit.iterations,
            train_loss: fit.loss,
            val_auroc,
            val_auprc,
            lr: 0.0,
            seconds: started.elapsed().as_secs_f64(),
        };
        write_history(&dir.join(HISTORY_FILE), &[record])?;
        log::info!(
            "logistic regression: {} iterations, loss {:.5}, val AUROC {val_auroc:.4}",
            fit.iterations,
            fit.loss
        );
        return write_resolved(&dir, "train", cfg, &[("mode", mode.as_str().into())]);
    };

    let model_cfg = cfg.model.clone().with_mode(net_mode);
    let outputs = TrainOutputs {
        best_checkpoint: Some(dir.join(BEST_CKPT)),
        last_checkpoint: Some(dir.join(LAST_CKPT)),
        history: Some(dir.join(HISTORY_FILE)),
        stop_after_epoch,
    };
    let (mut model, resume_from) = if resume {
        let (model, ck) = load_model(&require(dir.join(LAST_CKPT))?)?;
        if model.config != model_cfg {
            return Err(CliError::Config("model config differs from the checkpoint being resumed".into()));
        }
        log::info!("resuming after epoch {}", ck.state.epoch);
        (model, Some(ck))
    } else {
        let files = [BEST_CKPT, LAST_CKPT, HISTORY_FILE, "train.config.txt"].map(String::from);
        guard(&dir, &files, force)?;
        (Model::<f32>::new(model_cfg, derive_seed(cfg.train.seed, "init"))?, None)
    };
    std::fs::create_dir_all(&dir)?;
    write_resolved(&dir, "train", cfg, &[("mode", mode.as_str().into())])?;
    let bs = cfg.train.eval_batch_size;
    let outcome = train_with(&mut model, &prepared.train, &cfg.train, &outputs, resume_from.as_ref(), |m, _| {
        let z = predict(m, &prepared.val, bs)?;
        let y = prepared.val.labels();
        Ok((crate::evaluation::auroc(&z, &y)?, crate::evaluation::auprc(&z, &y)?))
    })?;
    log::info!(
        "best epoch {} (val AUROC {:.4}){}",
        outcome.best_epoch,
        outcome.best.state.best_val_auroc,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

/// Logits on `data` from the trained model of `mode`.
fn model_logits(l: &Layout, cfg: &RunConfig, mode: ModeArg, data: &Dataset) -> Result<Vec<f64>, CliError> {
    let dir = l.models(mode);
    match mode.network() {
        None => {
            let model = LogisticModel::load(&require(dir.join(LOGREG_CKPT))?)?;
            Ok(model.logits(&summarize_dataset(data).0))
        }
        Some(m) => {
            let (model, ck) = load_model(&require(dir.join(BEST_CKPT))?)?;
            if model.config.mode != m {
                return Err(CliError::Schema(format!("checkpoint holds a `{}` model, not `{}`", ck.kind, mode.as_str())));
            }
            Ok(predict(&model, data, cfg.train.eval_batch_size)?)
        }
    }
}

fn evaluate(
    l: &Layout,
    cfg: &RunConfig,
    mode: ModeArg,
    split: Split,
    embeddings: Option<&PathBuf>,
    force: bool,
) -> Result<(), CliError> {
    let dir = l.eval(mode);
    let stem = format!("metrics_{}", split.as_str());
    let mut outputs = vec![
        scores_file(Split::Val),
        scores_file(split),
        format!("{stem}.txt"),
        format!("{stem}.json"),
        "evaluate.config.txt".into(),
    ];
    outputs.dedup();
    guard(&dir, &outputs, force)?;
    let prepared = load_prepared(l, cfg, embeddings)?;
    let val = scored(&prepared.val, model_logits(l, cfg, mode, &prepared.val)?);
    val.write_csv(&dir.join(scores_file(Split::Val)))?;
    let threshold = best_f1_threshold(&val.score, &val.label)?.threshold;
    let set = if split == Split::Val {
        val
    } else {
        let d = prepared.get(split);
        let set = scored(d, model_logits(l, cfg, mode, d)?);
        set.write_csv(&dir.join(scores_file(split)))?;
        set
    };
    let report = MetricsReport::compute(&set, threshold)?;
    report.write(&dir, &stem)?;
    log::info!("{} {}: AUROC {:.4} AUPRC {:.4}", mode.as_str(), split.as_str(), report.auroc, report.auprc);
    write_resolved(&dir, "evaluate", cfg, &[("mode", mode.as_str().into()), ("split", split.as_str().into())])
}

fn calibrate(l: &Layout, cfg: &RunConfig, mode: ModeArg, split: Split, force: bool) -> Result<(), CliError> {
    let dir = l.eval(mode);
    let val = ScoredSet::read_csv(&require(dir.join(scores_file(Split::Val)))?)?;
    let set = ScoredSet::read_csv(&require(dir.join(scores_file(split)))?)?;
    let stem = format!("metrics_{}_calibrated", split.as_str());
    let cal_scores = format!("scores_{}_calibrated.csv", split.as_str());
    let outputs = vec![
        TEMPERATURE_FILE.into(),
        cal_scores.clone(),
        format!("{stem}.txt"),
        format!("{stem}.json"),
        "calibrate.config.txt".into(),
    ];
    guard(&dir, &outputs, force)?;
    let t = fit_temperature(&val)?;
    let cal_val = apply_temperature(&val, t);
    let threshold = best_f1_threshold(&cal_val.score, &cal_val.label)?.threshold;
    let cal = apply_temperature(&set, t);
    cal.write_csv(&dir.join(&cal_scores))?;
    let mut report = MetricsReport::compute(&cal, threshold)?;
    report.temperature = Some(t);
    report.write(&dir, &stem)?;
    let before = ece(&set.score, &set.label, DEFAULT_BINS)?.0;
    std::fs::write(
        dir.join(TEMPERATURE_FILE),
        format!("temperature={t}\nece_before={before}\nece_after={}\n", report.ece),
    )?;
    log::info!("temperature {t:.4}; {} ECE {before:.4} -> {:.4}", split.as_str(), report.ece);
    write_resolved(&dir, "calibrate", cfg, &[("mode", mode.as_str().into()), ("split", split.as_str().into())])
}

fn report(l: &Layout, cfg: &RunConfig, mode: ModeArg, split: Split, force: bool) -> Result<(), CliError> {
    let eval = l.eval(mode);
    let dir = l.report(mode);
    let set = ScoredSet::read_csv(&require(eval.join(scores_file(split)))?)?;
    let calibrated = eval.join(format!("scores_{}_calibrated.csv", split.as_str()));
    let history = l.models(mode).join(HISTORY_FILE);
    let outputs: Vec<String> = [
        "roc.csv",
        "pr.csv",
        "reliability.csv",
        "reliability_calibrated.csv",
        HISTORY_FILE,
        "report.config.txt",
    ]
    .map(String::from)
    .to_vec();
    guard(&dir, &outputs, force)?;
    write_roc_csv(&dir.join("roc.csv"), &set)?;
    write_pr_csv(&dir.join("pr.csv"), &set)?;
    write_reliability_csv(&dir.join("reliability.csv"), &ece(&set.score, &set.label, DEFAULT_BINS)?.1)?;
    if calibrated.exists() {
        let cal = ScoredSet::read_csv(&calibrated)?;
        write_reliability_csv(&dir.join("reliability_calibrated.csv"), &ece(&cal.score, &cal.label, DEFAULT_BINS)?.1)?;
    }
    if history.exists() {
        write_history(&dir.join(HISTORY_FILE), &read_history(&history)?)?;
    } else {
        log::warn!("no training history at {}", history.display());
    }
    log::info!("curves written to {}", dir.display());
    write_resolved(&dir, "report", cfg, &[("mode", mode.as_str().into()), ("split", split.as_str().into())])
}
