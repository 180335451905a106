//! Seeded generator of MIMIC-shaped cohorts with planted risk signal.
//!
//! A bundle directory holds the seven ingest tables, `notes.csv`, an
//! embedding file, `manifest.csv` (the ground truth) and the resolved
//! `synth_config.txt`. Every patient draws from two sub-seeds of the master
//! seed, one for the timeline and one for the measurements, so the same
//! config always produces the same bytes.
//!
//! The deterioration hazard of a stay is `h0 · exp(s·a + w·u)` per hour: `a`
//! is a standard normal structured driver that shows up as an HR slope and a
//! lactate level, `u` a text indicator that shows up only as a fixed direction
//! in the note embeddings. `h0` is calibrated so the expected positive rate
//! over prediction hours hits `event_rate`.

mod calibrate;
mod config;
mod plan;
mod render;
mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ids::{NoteId, StayId};
use crate::ingest::OutcomeKind;
use crate::sampler::{write_embeddings, NoteEmbedding, SamplerError};
use crate::seed::{derive_indexed, derive_seed};

pub use calibrate::{calibrate_base_hazard, expected_prevalence};
pub use config::SynthConfig;
pub use plan::{
    hazard, plan_patient, Drivers, PlannedEvent, PlannedPatient, PlannedStay, Probe, CARE_UNITS, KIND_SHARES,
};
pub use render::{prodrome, render_stay, StayRows, PRODROME_HOURS};
pub use verify::{verify_signal, SignalReport};

/// Size of the planted direction relative to unit-variance noise per coordinate.
const TEXT_SIGNAL: f32 = 1.0;
const TEXT_NOISE: f32 = 0.1;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const NOTES_FILE: &str = "notes.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const CONFIG_FILE: &str = "synth_config.txt";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("infeasible synth config: {0}")]
    Infeasible(String),
    #[error("{file}: {msg}")]
    Format { file: String, msg: String },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One manifest row: a stay with its drivers and planted event, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub stay_id: StayId,
    pub event: Option<(OutcomeKind, f64)>,
    pub drivers: Drivers,
    pub probe: Option<Probe>,
}

impl ManifestEntry {
    /// 1 iff the planted event falls in `(t, t + 24]` hours.
    pub fn label(&self, t: u32) -> u8 {
        let t = t as f64;
        self.event
            .is_some_and(|(_, h)| h > t && h <= t + crate::sampler::HORIZON_HOURS as f64) as u8
    }
}

/// What a generation run produced.
#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub dir: PathBuf,
    pub base_hazard: f64,
    pub expected_prevalence: f64,
    pub n_patients: usize,
    pub n_stays: usize,
    pub n_probe_stays: usize,
    pub n_events: [usize; 3],
    pub n_notes: usize,
}

/// Direction and center of the synthetic embedding space.
struct TextSpace {
    center: Vec<f32>,
    direction: Vec<f32>,
}

impl TextSpace {
    fn new(seed: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth.text"));
        let center: Vec<f32> = (0..dim).map(|_| 0.2 * rng.sample::<f32, _>(StandardNormal)).collect();
        let mut direction: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        let norm = direction.iter().map(|v| v * v).sum::<f32>().sqrt();
        direction.iter_mut().for_each(|v| *v /= norm);
        TextSpace { center, direction }
    }

    fn embed(&self, flagged: bool, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let shift = if flagged { TEXT_SIGNAL } else { 0.0 };
        self.center
            .iter()
            .zip(&self.direction)
            .map(|(c, d)| c + shift * d + TEXT_NOISE * rng.sample::<f32, _>(StandardNormal))
            .collect()
    }
}

/// Resolved baseline hazard: fixed, or calibrated against `event_rate`.
pub fn base_hazard(cfg: &SynthConfig) -> Result<f64, SynthError> {
    match cfg.base_hazard {
        Some(h) => Ok(h),
        None => calibrate_base_hazard(cfg),
    }
}

fn plan_rng(cfg: &SynthConfig, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(derive_seed(cfg.seed, "synth.plan"), &[i as u64]))
}

fn render_rng(cfg: &SynthConfig, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(derive_seed(cfg.seed, "synth.render"), &[i as u64]))
}

/// Timelines of every patient without rendering measurements.
pub fn plan_cohort(cfg: &SynthConfig, base: f64) -> Vec<PlannedPatient> {
    (0..cfg.n_patients)
        .map(|i| plan_patient(cfg, base, i, &mut plan_rng(cfg, i)))
        .collect()
}

struct Writers {
    patients: csv::Writer<File>,
    admissions: csv::Writer<File>,
    icustays: csv::Writer<File>,
    chart: csv::Writer<BufWriter<File>>,
    lab: csv::Writer<BufWriter<File>>,
    input: csv::Writer<File>,
    procedure: csv::Writer<File>,
    notes: csv::Writer<File>,
    manifest: csv::Writer<File>,
}

impl Writers {
    fn create(dir: &Path) -> Result<Self, SynthError> {
        let open = |name: &str, header: &[&str]| -> Result<csv::Writer<File>, SynthError> {
            let mut w = csv::Writer::from_path(dir.join(name))?;
            w.write_record(header)?;
            Ok(w)
        };
        let open_big = |name: &str, header: &[&str]| -> Result<csv::Writer<BufWriter<File>>, SynthError> {
            let file = BufWriter::with_capacity(1 << 20, File::create(dir.join(name))?);
            let mut w = csv::Writer::from_writer(file);
            w.write_record(header)?;
            Ok(w)
        };
        let events = ["subject_id", "stay_id", "charttime", "itemid", "valuenum"];
        let starts = ["subject_id", "stay_id", "starttime", "itemid"];
        Ok(Writers {
            patients: open("patients.csv", &["subject_id", "gender", "anchor_age"])?,
            admissions: open("admissions.csv", &["subject_id", "hadm_id", "stay_id", "deathtime"])?,
            icustays: open(
                "icustays.csv",
                &["subject_id", "hadm_id", "stay_id", "first_careunit", "intime", "outtime"],
            )?,
            chart: open_big("chartevents.csv", &events)?,
            lab: open_big("labevents.csv", &events)?,
            input: open("inputevents.csv", &starts)?,
            procedure: open("procedureevents.csv", &starts)?,
            notes: open(NOTES_FILE, &["note_id", "stay_id", "charttime"])?,
            manifest: open(MANIFEST_FILE, &["stay_id", "event_kind", "event_hour", "driver_values"])?,
        })
    }

    fn flush(&mut self) -> Result<(), SynthError> {
        self.patients.flush()?;
        self.admissions.flush()?;
        self.icustays.flush()?;
        self.chart.flush()?;
        self.lab.flush()?;
        self.input.flush()?;
        self.procedure.flush()?;
        self.notes.flush()?;
        self.manifest.flush()?;
        Ok(())
    }
}

fn driver_values(d: Drivers, probe: Option<Probe>) -> String {
    format!(
        "a={};u={};probe={}",
        d.a,
        d.u as u8,
        probe.map_or("none", Probe::as_str)
    )
}

/// Writes a bundle into `dir` (created if needed).
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<SynthSummary, SynthError> {
    cfg.validate()?;
    let base = base_hazard(cfg)?;
    std::fs::create_dir_all(dir)?;
    let mut w = Writers::create(dir)?;
    let text = TextSpace::new(cfg.seed, cfg.embed_dim);
    let mut embeddings = Vec::new();
    let mut summary = SynthSummary {
        dir: dir.to_path_buf(),
        base_hazard: base,
        expected_prevalence: expected_prevalence(cfg, base),
        n_patients: cfg.n_patients,
        n_stays: 0,
        n_probe_stays: 0,
        n_events: [0; 3],
        n_notes: 0,
    };

    for i in 0..cfg.n_patients {
        let patient = plan_patient(cfg, base, i, &mut plan_rng(cfg, i));
        let mut rng = render_rng(cfg, i);
        let subject = patient.subject_id.to_string();
        let gender = match patient.gender {
            crate::ingest::Gender::M => "M",
            crate::ingest::Gender::F => "F",
        };
        w.patients.write_record([&subject, gender, &patient.age.to_string()])?;

        for stay in &patient.stays {
            summary.n_stays += 1;
            summary.n_probe_stays += stay.probe.is_some() as usize;
            let sid = stay.stay_id.to_string();
            let hadm = stay.hadm_id.to_string();
            let death = stay.death_time().map_or(String::new(), |d| d.to_string());
            w.admissions.write_record([&subject, &hadm, &sid, &death])?;
            w.icustays.write_record([
                subject.as_str(),
                &hadm,
                &sid,
                stay.care_unit,
                &stay.intime.to_string(),
                &stay.outtime().to_string(),
            ])?;

            let rows = render_stay(cfg, stay, &mut rng);
            let at = |m: i64| (stay.intime + m * 60).to_string();
            for (m, code, v) in &rows.chart {
                w.chart.write_record([subject.as_str(), &sid, &at(*m), &code.to_string(), v])?;
            }
            for (m, code, v) in &rows.lab {
                w.lab.write_record([subject.as_str(), &sid, &at(*m), &code.to_string(), v])?;
            }
            for (m, code) in &rows.input {
                w.input.write_record([subject.as_str(), &sid, &at(*m), &code.to_string()])?;
            }
            for (m, code) in &rows.procedure {
                w.procedure.write_record([subject.as_str(), &sid, &at(*m), &code.to_string()])?;
            }
            for (k, &m) in rows.notes.iter().enumerate() {
                let note_id = NoteId(stay.stay_id.0 * 10 + k as u64);
                w.notes.write_record([note_id.to_string(), sid.clone(), at(m)])?;
                embeddings.push(NoteEmbedding {
                    note_id,
                    stay_id: stay.stay_id,
                    time: stay.intime + m * 60,
                    vector: text.embed(stay.drivers.u, &mut rng),
                });
            }
            summary.n_notes += rows.notes.len();

            let (kind, hour) = match stay.event {
                Some(e) => {
                    let k = OutcomeKind::ALL.iter().position(|&k| k == e.kind).expect("known kind");
                    summary.n_events[k] += 1;
                    (e.kind.as_str(), e.hour().to_string())
                }
                None => ("none", String::new()),
            };
            w.manifest
                .write_record([sid.as_str(), kind, &hour, &driver_values(stay.drivers, stay.probe)])?;
        }
    }
    w.flush()?;
    write_embeddings(&dir.join(EMBEDDINGS_FILE), cfg.embed_dim, &embeddings)?;
    let mut f = File::create(dir.join(CONFIG_FILE))?;
    write!(f, "{}synth.resolved_base_hazard={}\n", cfg.to_kv(), base)?;
    log::info!(
        "synth: {} patients, {} stays, {} events, {} notes into {}",
        summary.n_patients,
        summary.n_stays,
        summary.n_events.iter().sum::<usize>(),
        summary.n_notes,
        dir.display()
    );
    Ok(summary)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    let file = path.display().to_string();
    let fmt = |msg: String| SynthError::Format { file: file.clone(), msg };
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(["stay_id", "event_kind", "event_hour", "driver_values"]) {
        return Err(fmt(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| fmt(format!("line {line}: bad {what}"));
        let stay_id: StayId = rec[0].parse().map_err(|_| bad("stay_id"))?;
        let event = match &rec[1] {
            "none" => None,
            k => {
                let kind = OutcomeKind::parse(k).ok_or_else(|| bad("event_kind"))?;
                let hour: f64 = rec[2].parse().map_err(|_| bad("event_hour"))?;
                Some((kind, hour))
            }
        };
        let (mut a, mut u, mut probe) = (None, None, None);
        for part in rec[3].split(';') {
            match part.split_once('=') {
                Some(("a", v)) => a = v.parse::<f64>().ok(),
                Some(("u", v)) => u = v.parse::<u8>().ok().map(|x| x == 1),
                Some(("probe", "none")) => {}
                Some(("probe", v)) => probe = Some(Probe::parse(v).ok_or_else(|| bad("probe"))?),
                _ => return Err(bad("driver_values")),
            }
        }
        let (Some(a), Some(u)) = (a, u) else {
            return Err(bad("driver_values"));
        };
        out.push(ManifestEntry {
            stay_id,
            event,
            drivers: Drivers { a, u },
            probe,
        });
    }
    Ok(out)
}

/// Reads the config a bundle was generated with.
pub fn read_bundle_config(dir: &Path) -> Result<SynthConfig, SynthError> {
    SynthConfig::from_kv(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)
}
