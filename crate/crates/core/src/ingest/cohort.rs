use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{extract_outcomes, Cohort, EventStore, Exclusion, RawEvent, StayMeta, StayRecord};
use crate::catalog;


pub const MIN_STAY_HOURS: f64 = 24.0;
pub const MIN_AGE_YEARS: f64 = 18.0;
/// Vitals must appear, and death must not occur, within this many hours of intime.
pub const EARLY_WINDOW_HOURS: i64 = 6;

/// Why a stay was dropped. Checks run in declaration order; the first failure wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionReason {
    DuplicateStay,
    MissingTimes,
    InvalidTimes,
    MissingDemographics,
    ShortStay,
    Underage,
    EarlyDeath,
    NoMeasurements,
    NoEarlyVitals,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::DuplicateStay => "duplicate_stay",
            ExclusionReason::MissingTimes => "missing_times",
            ExclusionReason::InvalidTimes => "invalid_times",
            ExclusionReason::MissingDemographics => "missing_demographics",
            ExclusionReason::ShortStay => "short_stay",
            ExclusionReason::Underage => "underage",
            ExclusionReason::EarlyDeath => "early_death",
            ExclusionReason::NoMeasurements => "no_measurements",
            ExclusionReason::NoEarlyVitals => "no_early_vitals",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check(record: &StayRecord, events: &[RawEvent]) -> Result<StayMeta, ExclusionReason> {
    let (Some(intime), Some(outtime)) = (record.intime, record.outtime) else {
        return Err(ExclusionReason::MissingTimes);
    };
    if outtime <= intime {
        return Err(ExclusionReason::InvalidTimes);
    }
    let (Some(age), Some(gender)) = (record.age, record.gender) else {
        return Err(ExclusionReason::MissingDemographics);
    };
    let meta = StayMeta {
        stay_id: record.stay_id,
        subject_id: record.subject_id,
        intime,
        outtime,
        age,
        gender,
        death_time: record.death_time,
        care_unit: record.care_unit,
    };
    if meta.los_hours() < MIN_STAY_HOURS {
        return Err(ExclusionReason::ShortStay);
    }
    if age < MIN_AGE_YEARS {
        return Err(ExclusionReason::Underage);
    }
    let early_end = intime.plus_hours(EARLY_WINDOW_HOURS);
    if record.death_time.is_some_and(|d| d <= early_end) {
        return Err(ExclusionReason::EarlyDeath);
    }
    let measured = |e: &&RawEvent| {
        e.value.is_some() && e.time >= intime && e.time < outtime && catalog::channel_of(e.item_id).is_some()
    };
    let mut any = false;
    let mut early_vital = false;
    for e in events.iter().filter(measured) {
        any = true;
        if catalog::is_vital(e.item_id) && e.time < early_end {
            early_vital = true;
            break;
        }
    }
    if !any {
        return Err(ExclusionReason::NoMeasurements);
    }
    if !early_vital {
        return Err(ExclusionReason::NoEarlyVitals);
    }
    Ok(meta)
}

/// Applies the inclusion rules and extracts outcomes for retained stays.
///
/// Every input record ends up either in `stays` or in `exclusion_log`.
pub fn select_cohort(mut store: EventStore, records: &[StayRecord]) -> Cohort {
    let mut seen = BTreeSet::new();
    let mut stays = Vec::new();
    let mut exclusion_log = Vec::new();
    for record in records {
        let verdict = if seen.insert(record.stay_id) {
            check(record, store.events(record.stay_id))
        } else {
            Err(ExclusionReason::DuplicateStay)
        };
        match verdict {
            Ok(meta) => stays.push(meta),
            Err(reason) => exclusion_log.push(Exclusion {
                stay_id: record.stay_id,
                reason,
            }),
        }
    }
    stays.sort_by_key(|s| s.stay_id);
    let keep: BTreeSet<_> = stays.iter().map(|s| s.stay_id).collect();
    store.retain_stays(|id| keep.contains(&id));
    let outcomes: BTreeMap<_, _> = stays
        .iter()
        .map(|s| (s.stay_id, extract_outcomes(&store, s)))
        .collect();
    Cohort {
        stays,
        events: store,
        outcomes,
        exclusion_log,
    }
}
