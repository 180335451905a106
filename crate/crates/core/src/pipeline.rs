//! Glue from a directory of event tables to per-split datasets.
//!
//! [`prepare_dir`] runs everything in memory. The CLI runs the same steps one
//! at a time through the artifact readers and writers below: cohort tables,
//! a grid cache, the normalizer and the split manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::featurize::{build_grid, fit_normalizer, normalize, read_grid, write_grid, FeaturizeError, HourlyGrid, NormalizationStats};
use crate::ids::StayId;
use crate::ingest::{ingest_dir, CareUnit, Cohort, Gender, IngestError, OutcomeEvent, OutcomeKind, StayMeta};
use crate::sampler::{read_embeddings, split_by_patient, Dataset, NoteIndex, SamplerError, Split, SplitAssignment, StayData, DEFAULT_RATIOS, EMBED_DIM};

pub const STAYS_FILE: &str = "stays.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const EXCLUSIONS_FILE: &str = "exclusions.csv";
pub const GRIDS_FILE: &str = "grids.bin";
pub const NORMALIZER_FILE: &str = "normalizer.csv";
pub const SPLIT_FILE: &str = "split.csv";
pub const DEFAULT_EMBEDDINGS: &str = "embeddings.csv";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("invalid data config: {0}")]
    Config(String),
    #[error("{file}: {msg}")]
    Format { file: String, msg: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Split and embedding settings shared by every stage after ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub split_seed: u64,
    pub ratios: [f64; 3],
    pub embed_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            split_seed: 42,
            ratios: DEFAULT_RATIOS,
            embed_dim: EMBED_DIM,
        }
    }
}

impl DataConfig {
    pub fn to_kv(&self) -> String {
        format!(
            "data.split_seed={}\ndata.ratios={},{},{}\ndata.embed_dim={}\n",
            self.split_seed, self.ratios[0], self.ratios[1], self.ratios[2], self.embed_dim
        )
    }

    /// Applies one `data.*` key; returns false for keys outside the section.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, PipelineError> {
        let bad = || PipelineError::Config(format!("bad value `{value}` for {key}"));
        match key {
            "data.split_seed" => self.split_seed = value.parse().map_err(|_| bad())?,
            "data.embed_dim" => self.embed_dim = value.parse().map_err(|_| bad())?,
            "data.ratios" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                self.ratios = parts.try_into().map_err(|_| bad())?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Retained stays with their imputed grids, in stay order.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub stays: Vec<StayMeta>,
    pub outcomes: BTreeMap<StayId, Vec<OutcomeEvent>>,
    /// Imputed, unnormalized; aligned with `stays`.
    pub grids: Vec<HourlyGrid>,
}

/// Grids are built in parallel on the current rayon pool; order follows `cohort.stays`.
pub fn featurize_cohort(cohort: &Cohort) -> FeatureSet {
    let grids = cohort
        .stays
        .par_iter()
        .map(|s| build_grid(cohort.events.events(s.stay_id), s))
        .collect();
    FeatureSet {
        stays: cohort.stays.clone(),
        outcomes: cohort.outcomes.clone(),
        grids,
    }
}

/// The three datasets plus what produced them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: SplitAssignment,
    pub stats: NormalizationStats,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Prepared {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn split_features(features: &FeatureSet, cfg: &DataConfig) -> Result<SplitAssignment, PipelineError> {
    let subjects: Vec<_> = features.stays.iter().map(|s| s.subject_id).collect();
    let split = split_by_patient(&subjects, cfg.ratios, cfg.split_seed)?;
    split.check_leak_free(&features.stays)?;
    Ok(split)
}

/// Fits the normalizer on training-split grids.
pub fn fit_train_normalizer(features: &FeatureSet, split: &SplitAssignment) -> Result<NormalizationStats, PipelineError> {
    let train: Vec<&HourlyGrid> = features
        .stays
        .iter()
        .zip(&features.grids)
        .filter(|(s, _)| split.get(s.subject_id) == Some(Split::Train))
        .map(|(_, g)| g)
        .collect();
    Ok(fit_normalizer(&train)?)
}

/// Normalizes grids, attaches notes and builds one dataset per split.
pub fn assemble(
    features: FeatureSet,
    mut notes: NoteIndex,
    split: SplitAssignment,
    stats: NormalizationStats,
    embed_dim: usize,
) -> Result<Prepared, PipelineError> {
    let mut parts: [Vec<StayData>; 3] = Default::default();
    let FeatureSet {
        stays,
        mut outcomes,
        grids,
    } = features;
    for (meta, grid) in stays.into_iter().zip(grids) {
        let s = split.get(meta.subject_id).ok_or(SamplerError::Unassigned(meta.subject_id))?;
        let grid = normalize(&grid, &stats)?;
        parts[s as usize].push(StayData {
            notes: notes.take_stay(meta.stay_id),
            outcomes: outcomes.remove(&meta.stay_id).unwrap_or_default(),
            grid,
            split: Some(s),
            meta,
        });
    }
    let [train, val, test] = parts;
    Ok(Prepared {
        train: Dataset::build(train, embed_dim)?,
        val: Dataset::build(val, embed_dim)?,
        test: Dataset::build(test, embed_dim)?,
        split,
        stats,
    })
}

/// Reads embeddings if the file exists; a missing file means no notes.
pub fn load_notes(path: &Path, dim: usize) -> Result<NoteIndex, PipelineError> {
    if path.exists() {
        Ok(read_embeddings(path, dim)?)
    } else {
        log::warn!("no embedding file at {}; every sample gets an empty note slot", path.display());
        Ok(NoteIndex::new(dim, []))
    }
}

/// Ingest, featurize, split, normalize and sample in one pass.
///
/// `embeddings` defaults to `embeddings.csv` inside `dir`.
pub fn prepare_dir(dir: &Path, embeddings: Option<&Path>, cfg: &DataConfig) -> Result<Prepared, PipelineError> {
    let (cohort, report) = ingest_dir(dir)?;
    log::info!(
        "ingested {} rows ({} malformed), kept {} stays, excluded {}",
        report.rows(),
        report.malformed(),
        cohort.stays.len(),
        cohort.exclusion_log.len()
    );
    let features = featurize_cohort(&cohort);
    drop(cohort);
    let default_path = dir.join(DEFAULT_EMBEDDINGS);
    let notes = load_notes(embeddings.unwrap_or(&default_path), cfg.embed_dim)?;
    let split = split_features(&features, cfg)?;
    let stats = fit_train_normalizer(&features, &split)?;
    assemble(features, notes, split, stats, cfg.embed_dim)
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::M => "M",
        Gender::F => "F",
    }
}

/// Writes retained stays, outcomes and the exclusion log into `dir`.
pub fn write_cohort(cohort: &Cohort, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(STAYS_FILE))?;
    w.write_record(["stay_id", "subject_id", "intime", "outtime", "age", "gender", "death_time", "care_unit"])?;
    for s in &cohort.stays {
        w.write_record([
            s.stay_id.to_string(),
            s.subject_id.to_string(),
            s.intime.to_string(),
            s.outtime.to_string(),
            s.age.to_string(),
            gender_str(s.gender).to_string(),
            s.death_time.map_or(String::new(), |d| d.to_string()),
            s.care_unit.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(OUTCOMES_FILE))?;
    w.write_record(["stay_id", "kind", "time"])?;
    for o in cohort.outcomes.values().flatten() {
        w.write_record([o.stay_id.to_string(), o.kind.as_str().to_string(), o.time.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(EXCLUSIONS_FILE))?;
    w.write_record(["stay_id", "reason"])?;
    for e in &cohort.exclusion_log {
        w.write_record([e.stay_id.to_string(), e.reason.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput(path))
    }
}

/// Reads what [`write_cohort`] wrote: stays and their outcomes.
pub fn read_cohort(dir: &Path) -> Result<(Vec<StayMeta>, BTreeMap<StayId, Vec<OutcomeEvent>>), PipelineError> {
    let path = require(dir.join(STAYS_FILE))?;
    let file = path.display().to_string();
    let mut r = csv::Reader::from_path(&path)?;
    let mut stays = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| PipelineError::Format {
            file: file.clone(),
            msg: format!("line {line}: bad {what}"),
        };
        if rec.len() != 8 {
            return Err(bad("field count"));
        }
        stays.push(StayMeta {
            stay_id: rec[0].parse().map_err(|_| bad("stay_id"))?,
            subject_id: rec[1].parse().map_err(|_| bad("subject_id"))?,
            intime: rec[2].parse().map_err(|_| bad("intime"))?,
            outtime: rec[3].parse().map_err(|_| bad("outtime"))?,
            age: rec[4].parse().map_err(|_| bad("age"))?,
            gender: match &rec[5] {
                "M" => Gender::M,
                "F" => Gender::F,
                _ => return Err(bad("gender")),
            },
            death_time: match &rec[6] {
                "" => None,
                t => Some(t.parse().map_err(|_| bad("death_time"))?),
            },
            care_unit: CareUnit::from_label(&rec[7]),
        });
    }
    let path = require(dir.join(OUTCOMES_FILE))?;
    let file = path.display().to_string();
    let mut outcomes: BTreeMap<StayId, Vec<OutcomeEvent>> = stays.iter().map(|s| (s.stay_id, Vec::new())).collect();
    let mut r = csv::Reader::from_path(&path)?;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| PipelineError::Format {
            file: file.clone(),
            msg: format!("line {line}: bad {what}"),
        };
        let o = OutcomeEvent {
            stay_id: rec[0].parse().map_err(|_| bad("stay_id"))?,
            kind: OutcomeKind::parse(&rec[1]).ok_or_else(|| bad("kind"))?,
            time: rec[2].parse().map_err(|_| bad("time"))?,
        };
        outcomes.entry(o.stay_id).or_default().push(o);
    }
    Ok((stays, outcomes))
}

/// Grid cache: a u64 count followed by that many grid records.
pub fn write_grids(path: &Path, grids: &[HourlyGrid]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(grids.len() as u64).to_le_bytes())?;
    for g in grids {
        write_grid(&mut w, g)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grids(path: &Path) -> Result<Vec<HourlyGrid>, PipelineError> {
    let mut r = BufReader::new(File::open(require(path.to_path_buf())?)?);
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    (0..u64::from_le_bytes(n))
        .map(|_| read_grid(&mut r).map_err(PipelineError::from))
        .collect()
}

/// Loads a featurized run directory (cohort tables plus grid cache).
pub fn read_features(cohort_dir: &Path, grids_path: &Path) -> Result<FeatureSet, PipelineError> {
    let (stays, outcomes) = read_cohort(cohort_dir)?;
    let grids = read_grids(grids_path)?;
    if grids.len() != stays.len() || grids.iter().zip(&stays).any(|(g, s)| g.stay_id != s.stay_id) {
        return Err(PipelineError::Format {
            file: grids_path.display().to_string(),
            msg: "grid cache does not match the cohort stays".into(),
        });
    }
    Ok(FeatureSet { stays, outcomes, grids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn artifacts_rebuild_the_same_datasets() {
        let data = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_patients: 60,
            embed_dim: 8,
            ..SynthConfig::default()
        };
        generate(&cfg, data.path()).unwrap();
        let dcfg = DataConfig {
            embed_dim: 8,
            ..DataConfig::default()
        };
        let direct = prepare_dir(data.path(), None, &dcfg).unwrap();

        let run = tempfile::tempdir().unwrap();
        let (cohort, _) = ingest_dir(data.path()).unwrap();
        write_cohort(&cohort, run.path()).unwrap();
        let features = featurize_cohort(&cohort);
        write_grids(&run.path().join(GRIDS_FILE), &features.grids).unwrap();
        let split = split_features(&features, &dcfg).unwrap();
        split.write_manifest(&run.path().join(SPLIT_FILE)).unwrap();
        let stats = fit_train_normalizer(&features, &split).unwrap();
        stats.write_csv(&run.path().join(NORMALIZER_FILE)).unwrap();

        let features = read_features(run.path(), &run.path().join(GRIDS_FILE)).unwrap();
        let split = SplitAssignment::read_manifest(&run.path().join(SPLIT_FILE), dcfg.ratios, dcfg.split_seed).unwrap();
        let stats = NormalizationStats::read_csv(&run.path().join(NORMALIZER_FILE)).unwrap();
        let notes = load_notes(&data.path().join(DEFAULT_EMBEDDINGS), 8).unwrap();
        let staged = assemble(features, notes, split, stats, 8).unwrap();

        assert_eq!(direct.stats, staged.stats);
        for s in Split::ALL {
            let (a, b) = (direct.get(s), staged.get(s));
            assert_eq!(a.index, b.index);
            for (x, y) in a.stays.iter().zip(&b.stays) {
                assert_eq!(x.meta, y.meta);
                assert_eq!(x.grid, y.grid);
                assert_eq!(x.notes, y.notes);
                assert_eq!(x.outcomes, y.outcomes);
            }
        }
        assert!(direct.train.len() > direct.val.len());
    }

    #[test]
    fn missing_cohort_is_reported_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_cohort(dir.path()).unwrap_err();
        assert!(matches!(err, PipelineError::MissingInput(p) if p.ends_with(STAYS_FILE)));
    }
}
