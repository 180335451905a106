//! Measurement, intervention and note rows for a planned stay.
//!
//! Each channel is a mean-reverting walk sampled hourly around a patient
//! baseline. Planted effects ride on top: an HR slope and a lactate level set
//! by the structured driver, a prodrome ramp before the planted event scaled
//! by the structured strength, and a treatment signature afterwards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::plan::{PlannedEvent, PlannedStay, Probe};
use super::SynthConfig;
use crate::catalog::{self, N_CHANNELS, TEMP_C_ITEM, TEMP_F_ITEM};
use crate::ingest::OutcomeKind;

/// Hours over which the prodrome ramps up to full strength.
pub const PRODROME_HOURS: f64 = 30.0;
/// Decay time of the prodrome after the event.
const RECOVERY_HOURS: f64 = 3.0;
const OU_REVERSION: f64 = 0.15;
const ARTERIAL_LINE_PROB: f64 = 0.45;
const MISSED_VITAL_PROB: f64 = 0.08;
const PRE_ICU_PRESSOR_PROB: f64 = 0.08;
const PRE_ICU_INTUBATION_PROB: f64 = 0.2;

/// Physiologic baseline of one channel.
struct Physio {
    mean: f64,
    between_sd: f64,
    walk_sd: f64,
    /// Measurement noise.
    noise_sd: f64,
    lo: f64,
    hi: f64,
    decimals: usize,
}

const fn ph(mean: f64, between_sd: f64, walk_sd: f64, noise_sd: f64, lo: f64, hi: f64, decimals: usize) -> Physio {
    Physio {
        mean,
        between_sd,
        walk_sd,
        noise_sd,
        lo,
        hi,
        decimals,
    }
}

/// Indexed like `catalog::CHANNELS`.
const PHYSIO: [Physio; N_CHANNELS] = [
    ph(85.0, 12.0, 6.0, 2.0, 30.0, 200.0, 0),
    ph(120.0, 15.0, 8.0, 3.0, 50.0, 230.0, 0),
    ph(120.0, 15.0, 9.0, 4.0, 50.0, 230.0, 0),
    ph(62.0, 8.0, 5.0, 2.0, 25.0, 130.0, 0),
    ph(64.0, 8.0, 6.0, 3.0, 25.0, 130.0, 0),
    ph(80.0, 9.0, 6.0, 2.0, 35.0, 160.0, 0),
    ph(82.0, 9.0, 7.0, 3.0, 35.0, 160.0, 0),
    ph(18.0, 3.0, 3.0, 1.0, 6.0, 45.0, 0),
    ph(96.5, 1.2, 1.2, 0.5, 75.0, 100.0, 0),
    ph(37.0, 0.4, 0.3, 0.1, 34.0, 41.5, 1),
    ph(1.3, 0.35, 0.3, 0.1, 0.3, 15.0, 1),
    ph(1.1, 0.4, 0.1, 0.05, 0.2, 8.0, 1),
    ph(20.0, 8.0, 2.0, 1.0, 3.0, 120.0, 0),
    ph(4.1, 0.35, 0.25, 0.1, 2.5, 6.5, 1),
    ph(139.0, 3.0, 1.5, 0.5, 120.0, 160.0, 0),
    ph(130.0, 25.0, 20.0, 5.0, 50.0, 400.0, 0),
    ph(10.0, 3.0, 1.2, 0.3, 0.5, 40.0, 1),
    ph(10.5, 1.5, 0.5, 0.2, 5.0, 17.0, 1),
    ph(31.5, 4.5, 1.5, 0.5, 15.0, 50.0, 1),
    ph(210.0, 60.0, 15.0, 5.0, 10.0, 700.0, 0),
    ph(0.9, 0.5, 0.1, 0.05, 0.1, 20.0, 1),
    ph(3.2, 0.5, 0.1, 0.05, 1.2, 5.0, 1),
    ph(7.39, 0.04, 0.03, 0.01, 6.9, 7.7, 2),
    ph(40.0, 5.0, 4.0, 1.0, 15.0, 90.0, 0),
    ph(95.0, 20.0, 15.0, 5.0, 40.0, 400.0, 0),
    ph(24.0, 3.0, 1.5, 0.5, 8.0, 40.0, 0),
];

const HR: usize = 0;
const SBP: [usize; 2] = [1, 2];
const DBP: [usize; 2] = [3, 4];
const MAP: [usize; 2] = [5, 6];
const RR: usize = 7;
const SPO2: usize = 8;
const TEMP: usize = 9;
const LACTATE: usize = 10;
const WBC: usize = 16;
const BILIRUBIN: usize = 20;
const ALBUMIN: usize = 21;
const GAS: [usize; 4] = [LACTATE, 22, 23, 24];
const PANEL: [usize; 10] = [11, 12, 13, 14, 15, WBC, 17, 18, 19, 25];

/// Prodrome ramp shift at full strength, per channel.
fn prodrome_shift(c: usize) -> f64 {
    match c {
        HR => 18.0,
        1 | 2 => -16.0,
        3 | 4 => -9.0,
        5 | 6 => -11.0,
        RR => 5.0,
        SPO2 => -2.5,
        TEMP => 0.5,
        LACTATE => 1.6,
        WBC => 3.0,
        22 => -0.05,
        25 => -3.0,
        _ => 0.0,
    }
}

/// Emitted rows of one stay, times in minutes after intime.
#[derive(Debug, Default)]
pub struct StayRows {
    pub chart: Vec<(i64, u32, String)>,
    pub lab: Vec<(i64, u32, String)>,
    pub input: Vec<(i64, u32)>,
    pub procedure: Vec<(i64, u32)>,
    /// Note times; every note of a stay shares its text indicator.
    pub notes: Vec<i64>,
}

struct Walks {
    /// `[hour × channel]` latent values.
    latent: Vec<f64>,
    n_hours: usize,
}

impl Walks {
    fn new(n_hours: usize, rng: &mut ChaCha8Rng) -> Self {
        let rho = (-OU_REVERSION).exp();
        let innov = (1.0 - rho * rho).sqrt();
        let mut latent = vec![0.0; n_hours * N_CHANNELS];
        for (c, p) in PHYSIO.iter().enumerate() {
            let base = p.mean + p.between_sd * rng.sample::<f64, _>(StandardNormal);
            let mut x = p.walk_sd * rng.sample::<f64, _>(StandardNormal);
            for h in 0..n_hours {
                latent[h * N_CHANNELS + c] = base + x;
                x = rho * x + innov * p.walk_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Walks { latent, n_hours }
    }

    fn at(&self, minute: i64, c: usize) -> f64 {
        let h = ((minute / 60) as usize).min(self.n_hours - 1);
        self.latent[h * N_CHANNELS + c]
    }
}

/// Prodrome level in [0, 1] at `hours` after intime.
pub fn prodrome(event: Option<&PlannedEvent>, hours: f64) -> f64 {
    let Some(e) = event else { return 0.0 };
    let at = e.hour();
    if hours < at {
        ((hours - (at - PRODROME_HOURS)) / PRODROME_HOURS).clamp(0.0, 1.0)
    } else {
        (-(hours - at) / RECOVERY_HOURS).exp()
    }
}

struct Ctx<'a> {
    cfg: &'a SynthConfig,
    stay: &'a PlannedStay,
    walks: Walks,
}

impl Ctx<'_> {
    fn value(&self, c: usize, minute: i64, rng: &mut ChaCha8Rng) -> f64 {
        let p = &PHYSIO[c];
        let hours = minute as f64 / 60.0;
        let a = self.stay.drivers.a;
        let event = self.stay.event.as_ref();
        let mut v = self.walks.at(minute, c);
        match c {
            HR => v += (0.25 * a * hours).clamp(-30.0, 30.0),
            LACTATE => v *= (0.3 * a).exp(),
            _ => {}
        }
        v += self.cfg.structured_strength * prodrome(event, hours) * prodrome_shift(c);
        if let Some(e) = event.filter(|e| minute >= e.minute) {
            match e.kind {
                OutcomeKind::VasopressorStart if SBP.contains(&c) => v += 8.0,
                OutcomeKind::VasopressorStart if DBP.contains(&c) || MAP.contains(&c) => v += 5.0,
                OutcomeKind::VentilationStart if c == RR => v -= 4.0,
                OutcomeKind::VentilationStart if c == SPO2 => v += 2.5,
                _ => {}
            }
        }
        v += p.noise_sd * rng.sample::<f64, _>(StandardNormal);
        v.clamp(p.lo, p.hi)
    }

    fn format(c: usize, v: f64) -> String {
        format!("{v:.prec$}", prec = PHYSIO[c].decimals)
    }
}

fn item(c: usize) -> u32 {
    catalog::CHANNELS[c].items[0]
}

/// Renders one planned stay.
pub fn render_stay(cfg: &SynthConfig, stay: &PlannedStay, rng: &mut ChaCha8Rng) -> StayRows {
    let los = stay.los_minutes;
    let n_hours = (los / 60 + 1) as usize;
    let ctx = Ctx {
        cfg,
        stay,
        walks: Walks::new(n_hours, rng),
    };
    let arterial = rng.gen::<f64>() < ARTERIAL_LINE_PROB;
    let fahrenheit = rng.gen::<bool>();
    let mut rows = StayRows::default();

    let first_vital_hour = if stay.probe == Some(Probe::NoEarlyVitals) { 7 } else { 0 };
    let chart = |rows: &mut StayRows, c: usize, m: i64, rng: &mut ChaCha8Rng| {
        let v = ctx.value(c, m, rng);
        rows.chart.push((m, item(c), Ctx::format(c, v)));
    };
    for h in first_vital_hour..n_hours as i64 {
        let minute = h * 60 + rng.gen_range(0..60);
        if minute >= los {
            break;
        }
        if h != first_vital_hour && rng.gen::<f64>() < MISSED_VITAL_PROB {
            continue;
        }
        for c in [HR, RR, SPO2] {
            chart(&mut rows, c, minute, rng);
        }
        // Arterial lines chart hourly with a cuff pressure every 4 h.
        let mut lines = Vec::with_capacity(2);
        if arterial {
            lines.push((0, minute));
            if h % 4 == 0 && minute + 5 < los {
                lines.push((1, minute + 5));
            }
        } else {
            lines.push((1, minute));
        }
        for (line, m) in lines {
            for c in [SBP[line], DBP[line], MAP[line]] {
                chart(&mut rows, c, m, rng);
            }
        }
        if h % 4 == 0 {
            let c = ctx.value(TEMP, minute, rng);
            let (code, v) = if fahrenheit {
                (TEMP_F_ITEM.0, format!("{:.1}", c * 9.0 / 5.0 + 32.0))
            } else {
                (TEMP_C_ITEM.0, Ctx::format(TEMP, c))
            };
            rows.chart.push((minute, code, v));
        }
    }

    let mut lab = |c: usize, m: i64, rng: &mut ChaCha8Rng| {
        let v = ctx.value(c, m, rng);
        rows.lab.push((m, item(c), Ctx::format(c, v)));
    };
    let liver = rng.gen::<bool>();
    let mut m = rng.gen_range(30..180);
    let mut k = 0;
    while m < los {
        for &c in &PANEL {
            lab(c, m, rng);
        }
        if liver && k % 2 == 0 {
            lab(BILIRUBIN, m, rng);
            lab(ALBUMIN, m, rng);
        }
        k += 1;
        m += 12 * 60 + rng.gen_range(-45..45);
    }
    let base_gap = if arterial { 6 * 60 } else { 12 * 60 };
    let mut m = rng.gen_range(20..150);
    while m < los {
        for &c in &GAS {
            lab(c, m, rng);
        }
        // Sicker patients get more frequent gases.
        let sick = prodrome(stay.event.as_ref(), m as f64 / 60.0) * cfg.structured_strength > 0.3;
        let gap = if sick { 3 * 60 } else { base_gap };
        m += gap + rng.gen_range(-30..30);
    }

    if rng.gen::<f64>() < PRE_ICU_PRESSOR_PROB {
        rows.input.push((-rng.gen_range(30..360), catalog::VASOPRESSOR_ITEMS[0].0));
    }
    if stay.care_unit.contains("Surg") || stay.care_unit.contains("Trauma") {
        if rng.gen::<f64>() < PRE_ICU_INTUBATION_PROB {
            rows.procedure.push((-rng.gen_range(60..240), catalog::VENTILATION_ITEMS[0].0));
        }
    }
    if let Some(e) = stay.event {
        match e.kind {
            OutcomeKind::VasopressorStart => {
                let items = catalog::VASOPRESSOR_ITEMS;
                rows.input.push((e.minute, items[rng.gen_range(0..items.len())].0));
                let mut m = e.minute;
                for _ in 0..rng.gen_range(0..4) {
                    m += rng.gen_range(30..480);
                    if m > los {
                        break;
                    }
                    rows.input.push((m, items[rng.gen_range(0..items.len())].0));
                }
            }
            OutcomeKind::VentilationStart => {
                let items = catalog::VENTILATION_ITEMS;
                rows.procedure.push((e.minute, items[rng.gen_range(0..items.len())].0));
            }
            OutcomeKind::Mortality => {}
        }
    }

    if rng.gen::<f64>() < cfg.note_coverage {
        let n = rng.gen_range(1..=4);
        rows.notes.push(rng.gen_range(0..(8 * 60).min(los)));
        for _ in 1..n {
            rows.notes.push(rng.gen_range(0..los));
        }
        rows.notes.sort_unstable();
    }

    rows.chart.sort_by_key(|r| (r.0, r.1));
    rows.lab.sort_by_key(|r| (r.0, r.1));
    rows.input.sort_unstable();
    rows.procedure.sort_unstable();
    rows
}
