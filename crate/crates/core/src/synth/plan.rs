//! Per-patient timelines: stays, latent drivers and the planted outcome.
//!
//! Planning draws from its own per-patient stream so that measurement
//! rendering never shifts event times.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SynthConfig;
use crate::ids::{StayId, SubjectId};
use crate::ingest::{CareUnit, Gender, OutcomeEvent, OutcomeKind, StayMeta, MIN_STAY_HOURS};
use crate::time::Timestamp;

/// Shares of the three outcome kinds among planted events.
pub const KIND_SHARES: [(OutcomeKind, f64); 3] = [
    (OutcomeKind::Mortality, 0.20),
    (OutcomeKind::VasopressorStart, 0.45),
    (OutcomeKind::VentilationStart, 0.35),
];

pub const CARE_UNITS: [&str; 5] = [
    "Medical Intensive Care Unit (MICU)",
    "Surgical Intensive Care Unit (SICU)",
    "Cardiac Vascular Intensive Care Unit (CVICU)",
    "Coronary Care Unit (CCU)",
    "Trauma SICU (TSICU)",
];

/// Chance that a patient's final stay is followed by a death on the ward.
const WARD_DEATH_PROB: f64 = 0.03;

/// Cohort rule a probe patient is built to break.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    ShortStay,
    Underage,
    EarlyDeath,
    NoEarlyVitals,
}

impl Probe {
    pub const ALL: [Probe; 4] = [Probe::ShortStay, Probe::Underage, Probe::EarlyDeath, Probe::NoEarlyVitals];

    pub fn as_str(self) -> &'static str {
        match self {
            Probe::ShortStay => "short_stay",
            Probe::Underage => "underage",
            Probe::EarlyDeath => "early_death",
            Probe::NoEarlyVitals => "no_early_vitals",
        }
    }

    pub fn parse(s: &str) -> Option<Probe> {
        Probe::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// Latent risk drivers of a stay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drivers {
    /// Structured driver, standard normal; sets HR slope and lactate level.
    pub a: f64,
    /// Text indicator; notes of flagged stays carry the risk direction.
    pub u: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedEvent {
    pub kind: OutcomeKind,
    /// Minutes after intime.
    pub minute: i64,
}

impl PlannedEvent {
    pub fn hour(&self) -> f64 {
        self.minute as f64 / 60.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedStay {
    pub stay_id: StayId,
    pub hadm_id: u64,
    pub intime: Timestamp,
    pub los_minutes: i64,
    pub care_unit: &'static str,
    pub drivers: Drivers,
    pub event: Option<PlannedEvent>,
    /// Death after ICU discharge, minutes after intime; never an ICU outcome.
    pub ward_death_minute: Option<i64>,
    pub probe: Option<Probe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPatient {
    pub subject_id: SubjectId,
    pub age: f64,
    pub gender: Gender,
    pub stays: Vec<PlannedStay>,
}

impl PlannedStay {
    pub fn outtime(&self) -> Timestamp {
        self.intime + self.los_minutes * 60
    }

    pub fn death_time(&self) -> Option<Timestamp> {
        match self.event {
            Some(PlannedEvent {
                kind: OutcomeKind::Mortality,
                minute,
            }) => Some(self.intime + minute * 60),
            _ => self.ward_death_minute.map(|m| self.intime + m * 60),
        }
    }

    /// Whether cohort selection keeps this stay.
    pub fn retained(&self) -> bool {
        self.probe.is_none() && self.los_minutes >= (MIN_STAY_HOURS * 60.0) as i64
    }

    pub fn meta(&self, patient: &PlannedPatient) -> StayMeta {
        StayMeta {
            stay_id: self.stay_id,
            subject_id: patient.subject_id,
            intime: self.intime,
            outtime: self.outtime(),
            age: patient.age,
            gender: patient.gender,
            death_time: self.death_time(),
            care_unit: CareUnit::from_label(self.care_unit),
        }
    }

    /// The planted outcome as the ingest layer should recover it.
    pub fn outcomes(&self) -> Vec<OutcomeEvent> {
        self.event
            .iter()
            .map(|e| OutcomeEvent {
                stay_id: self.stay_id,
                kind: e.kind,
                time: self.intime + e.minute * 60,
            })
            .collect()
    }
}

pub fn epoch_start() -> Timestamp {
    "2150-01-01 00:00:00".parse().expect("valid literal")
}

pub fn hazard(cfg: &SynthConfig, base: f64, d: Drivers) -> f64 {
    let u = if d.u { cfg.text_hazard_weight } else { 0.0 };
    base * (cfg.structured_strength * d.a + u).exp()
}

fn draw_los_hours(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let l = cfg.los_median_hours * (cfg.los_sigma * z).exp();
        if (cfg.los_min_hours..=cfg.los_max_hours).contains(&l) {
            return l;
        }
    }
}

fn draw_kind(rng: &mut ChaCha8Rng) -> OutcomeKind {
    let mut x: f64 = rng.gen();
    for (kind, share) in KIND_SHARES {
        if x < share {
            return kind;
        }
        x -= share;
    }
    KIND_SHARES[KIND_SHARES.len() - 1].0
}

/// Plans patient `index` with baseline hazard `base` per hour.
pub fn plan_patient(cfg: &SynthConfig, base: f64, index: usize, rng: &mut ChaCha8Rng) -> PlannedPatient {
    let subject_id = SubjectId(10_000_000 + index as u64);
    let probe = (rng.gen::<f64>() < cfg.probe_fraction).then(|| Probe::ALL[rng.gen_range(0..Probe::ALL.len())]);
    let gender = if rng.gen::<bool>() { Gender::M } else { Gender::F };
    let age = if probe == Some(Probe::Underage) {
        16.0
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (64.0 + 16.0 * z).clamp(18.0, 91.0).round()
    };
    let mut n_stays = 1;
    while n_stays < cfg.max_stays_per_patient && rng.gen::<f64>() < cfg.extra_stay_prob {
        n_stays += 1;
    }

    let mut stays = Vec::with_capacity(n_stays);
    let mut intime = epoch_start() + rng.gen_range(0..30 * 365 * 24 * 60) * 60;
    for j in 0..n_stays {
        let serial = index as u64 * 10 + j as u64;
        let los_hours = match probe {
            Some(Probe::ShortStay) => rng.gen_range(4.0..20.0),
            _ => draw_los_hours(cfg, rng),
        };
        let los_minutes = (los_hours * 60.0).round() as i64;
        let drivers = Drivers {
            a: rng.sample(StandardNormal),
            u: rng.gen::<f64>() < cfg.text_strength,
        };
        let care_unit = CARE_UNITS[rng.gen_range(0..CARE_UNITS.len())];
        // Both draws are always taken so the stream does not depend on the branch.
        let wait = -(1.0 - rng.gen::<f64>()).ln();
        let kind = draw_kind(rng);

        let mut stay = PlannedStay {
            stay_id: StayId(30_000_000 + serial),
            hadm_id: 20_000_000 + serial,
            intime,
            los_minutes,
            care_unit,
            drivers,
            event: None,
            ward_death_minute: None,
            probe,
        };
        match probe {
            Some(Probe::EarlyDeath) => {
                stay.event = Some(PlannedEvent {
                    kind: OutcomeKind::Mortality,
                    minute: rng.gen_range(60..330),
                });
            }
            Some(_) => {}
            None => {
                let rate = hazard(cfg, base, drivers);
                if rate > 0.0 {
                    let minute = ((wait / rate) * 60.0).ceil().max(1.0);
                    if minute <= los_minutes as f64 {
                        let minute = minute as i64;
                        stay.event = Some(PlannedEvent { kind, minute });
                        if kind == OutcomeKind::Mortality {
                            stay.los_minutes = minute;
                        }
                    }
                }
            }
        }
        let died = stay.death_time().is_some();
        intime = stay.outtime() + rng.gen_range(2 * 24 * 60..200 * 24 * 60) * 60;
        stays.push(stay);
        if died {
            break;
        }
    }
    let last = stays.last_mut().expect("at least one stay");
    if last.death_time().is_none() && rng.gen::<f64>() < WARD_DEATH_PROB {
        last.ward_death_minute = Some(last.los_minutes + rng.gen_range(120..240 * 60));
    }
    PlannedPatient {
        subject_id,
        age,
        gender,
        stays,
    }
}
