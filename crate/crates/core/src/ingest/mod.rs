//! Event-table ingestion, cohort selection and outcome extraction.
//!
//! Input tables are MIMIC-shaped CSV files in which every event row carries
//! an explicit `stay_id`. Parsing groups events per stay in time order; cohort
//! selection then partitions the stays into retained and excluded sets, and
//! each retained stay gets its deterioration outcome events.

mod cohort;
mod outcomes;
mod tables;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ids::{ItemId, StayId, SubjectId};
use crate::time::Timestamp;

pub use cohort::{select_cohort, ExclusionReason, MIN_AGE_YEARS, MIN_STAY_HOURS, EARLY_WINDOW_HOURS};
pub use outcomes::{extract_outcomes, outcomes_from_events};
pub use tables::{
    load_stays, parse_event_table, parse_event_tables, EventTables, ParseReport, TableReport,
    MALFORMED_FATAL_FRACTION,
};

/// Loads every table in `dir` and applies cohort selection.
pub fn ingest_dir(dir: &Path) -> Result<(Cohort, ParseReport), IngestError> {
    let (records, mut report) = load_stays(dir)?;
    let (store, events) = parse_event_tables(&EventTables::in_dir(dir))?;
    report.tables.extend(events.tables);
    Ok((select_cohort(store, &records), report))
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: PathBuf, column: String },
    #[error("{file}: {bad} of {total} rows malformed (limit 1%); first: {first}")]
    TooManyMalformed {
        file: PathBuf,
        bad: usize,
        total: usize,
        first: String,
    },
    #[error("{file}: {source}")]
    Csv {
        file: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which table an event row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventSource {
    Chart,
    Lab,
    Input,
    Procedure,
}

impl EventSource {
    /// Interventions carry a start time and no measured value.
    pub fn has_value(self) -> bool {
        matches!(self, EventSource::Chart | EventSource::Lab)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub stay_id: StayId,
    pub item_id: ItemId,
    pub time: Timestamp,
    /// Measured value for chart/lab rows; `None` for intervention starts.
    pub value: Option<f64>,
    pub source: EventSource,
    /// False when the item code is not part of the feature or outcome catalog.
    pub known: bool,
}

impl RawEvent {
    fn sort_key(&self) -> (Timestamp, EventSource, ItemId, u64) {
        (
            self.time,
            self.source,
            self.item_id,
            self.value.map_or(0, f64::to_bits),
        )
    }
}

/// Parsed events grouped by stay, each group sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStore {
    by_stay: BTreeMap<StayId, Vec<RawEvent>>,
}

impl EventStore {
    pub fn from_events(events: impl IntoIterator<Item = RawEvent>) -> Self {
        let mut by_stay: BTreeMap<StayId, Vec<RawEvent>> = BTreeMap::new();
        for ev in events {
            by_stay.entry(ev.stay_id).or_default().push(ev);
        }
        for list in by_stay.values_mut() {
            list.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        }
        EventStore { by_stay }
    }

    pub fn events(&self, stay: StayId) -> &[RawEvent] {
        self.by_stay.get(&stay).map_or(&[], Vec::as_slice)
    }

    pub fn stay_ids(&self) -> impl Iterator<Item = StayId> + '_ {
        self.by_stay.keys().copied()
    }

    pub fn n_events(&self) -> usize {
        self.by_stay.values().map(Vec::len).sum()
    }

    pub fn n_unknown(&self) -> usize {
        self.by_stay
            .values()
            .flat_map(|v| v.iter())
            .filter(|e| !e.known)
            .count()
    }

    /// Keeps only the listed stays.
    pub fn retain_stays(&mut self, keep: impl Fn(StayId) -> bool) {
        self.by_stay.retain(|id, _| keep(*id));
    }

    pub fn merge(&mut self, other: EventStore) {
        for (stay, mut list) in other.by_stay {
            let slot = self.by_stay.entry(stay).or_default();
            slot.append(&mut list);
            slot.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CareUnit {
    Medical,
    Surgical,
    Cardiac,
}

impl CareUnit {
    /// Maps free-text unit names ("Medical Intensive Care Unit (MICU)", "cardiac", ...).
    pub fn from_label(label: &str) -> CareUnit {
        let l = label.to_ascii_lowercase();
        if l.contains("card") || l.contains("coronary") || l.contains("ccu") {
            CareUnit::Cardiac
        } else if l.contains("surg") || l.contains("trauma") || l.contains("sicu") {
            CareUnit::Surgical
        } else {
            CareUnit::Medical
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CareUnit::Medical => "medical",
            CareUnit::Surgical => "surgical",
            CareUnit::Cardiac => "cardiac",
        }
    }
}

/// A stay as read from the stay tables, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct StayRecord {
    pub stay_id: StayId,
    pub subject_id: SubjectId,
    pub intime: Option<Timestamp>,
    pub outtime: Option<Timestamp>,
    pub age: Option<f64>,
    pub gender: Option<Gender>,
    pub death_time: Option<Timestamp>,
    pub care_unit: CareUnit,
}

/// A validated stay: `outtime > intime`, demographics present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayMeta {
    pub stay_id: StayId,
    pub subject_id: SubjectId,
    pub intime: Timestamp,
    pub outtime: Timestamp,
    pub age: f64,
    pub gender: Gender,
    pub death_time: Option<Timestamp>,
    pub care_unit: CareUnit,
}

impl StayMeta {
    pub fn los_hours(&self) -> f64 {
        self.outtime.hours_since(self.intime)
    }

    /// Death inside `[intime, outtime]`.
    pub fn icu_death(&self) -> Option<Timestamp> {
        self.death_time
            .filter(|&d| d >= self.intime && d <= self.outtime)
    }

    pub fn to_record(&self) -> StayRecord {
        StayRecord {
            stay_id: self.stay_id,
            subject_id: self.subject_id,
            intime: Some(self.intime),
            outtime: Some(self.outtime),
            age: Some(self.age),
            gender: Some(self.gender),
            death_time: self.death_time,
            care_unit: self.care_unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Mortality,
    VasopressorStart,
    VentilationStart,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 3] = [
        OutcomeKind::Mortality,
        OutcomeKind::VasopressorStart,
        OutcomeKind::VentilationStart,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Mortality => "mortality",
            OutcomeKind::VasopressorStart => "vasopressor_start",
            OutcomeKind::VentilationStart => "ventilation_start",
        }
    }

    pub fn parse(s: &str) -> Option<OutcomeKind> {
        OutcomeKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeEvent {
    pub stay_id: StayId,
    pub kind: OutcomeKind,
    pub time: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub stay_id: StayId,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub stays: Vec<StayMeta>,
    pub events: EventStore,
    pub outcomes: BTreeMap<StayId, Vec<OutcomeEvent>>,
    pub exclusion_log: Vec<Exclusion>,
}

impl Cohort {
    pub fn outcomes_for(&self, stay: StayId) -> &[OutcomeEvent] {
        self.outcomes.get(&stay).map_or(&[], Vec::as_slice)
    }

    pub fn n_patients(&self) -> usize {
        let mut ids: Vec<SubjectId> = self.stays.iter().map(|s| s.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}
