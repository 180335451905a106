use super::SynthError;

/// Generator settings. Strengths are hazard log-weights; probabilities lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_patients: usize,
    /// Stays per patient: one, plus a chain of extra stays each taken with
    /// `extra_stay_prob`, capped here.
    pub max_stays_per_patient: usize,
    pub extra_stay_prob: f64,
    /// Truncated log-normal length of stay.
    pub los_median_hours: f64,
    pub los_sigma: f64,
    pub los_min_hours: f64,
    pub los_max_hours: f64,
    /// Target positive fraction over prediction hours of retained stays.
    pub event_rate: f64,
    /// Fixed baseline hazard per hour; skips calibration against `event_rate`.
    pub base_hazard: Option<f64>,
    /// Hazard weight on the structured driver (HR slope and lactate level).
    pub structured_strength: f64,
    /// Fraction of stays whose note embeddings carry the risk direction.
    pub text_strength: f64,
    /// Hazard log-weight of the text indicator.
    pub text_hazard_weight: f64,
    pub note_coverage: f64,
    pub embed_dim: usize,
    /// Fraction of patients built to fail one cohort rule.
    pub probe_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_patients: 2000,
            max_stays_per_patient: 3,
            extra_stay_prob: 0.15,
            los_median_hours: 52.0,
            los_sigma: 0.6,
            los_min_hours: 24.0,
            los_max_hours: 240.0,
            event_rate: 0.028,
            base_hazard: None,
            structured_strength: 1.0,
            text_strength: 0.3,
            text_hazard_weight: 4f64.ln(),
            note_coverage: 0.664,
            embed_dim: crate::sampler::EMBED_DIM,
            probe_fraction: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        for (name, p) in [
            ("extra_stay_prob", self.extra_stay_prob),
            ("text_strength", self.text_strength),
            ("note_coverage", self.note_coverage),
            ("probe_fraction", self.probe_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.event_rate > 0.0 && self.event_rate < 1.0) {
            return bad(format!("event_rate = {} must lie in (0, 1)", self.event_rate));
        }
        for (name, s) in [
            ("structured_strength", self.structured_strength),
            ("text_hazard_weight", self.text_hazard_weight),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} = {s} must be finite and non-negative"));
            }
        }
        if let Some(h) = self.base_hazard {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("base_hazard = {h} must be positive"));
            }
        }
        if self.n_patients == 0 || self.embed_dim == 0 {
            return bad("n_patients and embed_dim must be positive".into());
        }
        if !(1..=9).contains(&self.max_stays_per_patient) {
            return bad("max_stays_per_patient must be between 1 and 9".into());
        }
        if !(self.los_median_hours > 0.0 && self.los_sigma > 0.0) {
            return bad("LOS median and sigma must be positive".into());
        }
        if !(self.los_min_hours >= 24.0 && self.los_max_hours > self.los_min_hours) {
            return bad(format!(
                "LOS bounds [{}, {}] must satisfy 24 <= min < max",
                self.los_min_hours, self.los_max_hours
            ));
        }
        Ok(())
    }

    /// `key=value` lines with a `synth.` prefix.
    pub fn to_kv(&self) -> String {
        let hazard = self.base_hazard.map_or("auto".to_string(), |h| h.to_string());
        format!(
            "synth.seed={}\nsynth.n_patients={}\nsynth.max_stays_per_patient={}\nsynth.extra_stay_prob={}\n\
             synth.los_median_hours={}\nsynth.los_sigma={}\nsynth.los_min_hours={}\nsynth.los_max_hours={}\n\
             synth.event_rate={}\nsynth.base_hazard={}\nsynth.structured_strength={}\nsynth.text_strength={}\n\
             synth.text_hazard_weight={}\nsynth.note_coverage={}\nsynth.embed_dim={}\nsynth.probe_fraction={}\n",
            self.seed,
            self.n_patients,
            self.max_stays_per_patient,
            self.extra_stay_prob,
            self.los_median_hours,
            self.los_sigma,
            self.los_min_hours,
            self.los_max_hours,
            self.event_rate,
            hazard,
            self.structured_strength,
            self.text_strength,
            self.text_hazard_weight,
            self.note_coverage,
            self.embed_dim,
            self.probe_fraction,
        )
    }

    /// Applies one `synth.*` key; returns false for keys outside the section.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, SynthError> {
        let bad = || SynthError::Config(format!("bad value `{value}` for {key}"));
        let f = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let u = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match key {
            "synth.seed" => self.seed = value.parse().map_err(|_| bad())?,
            "synth.n_patients" => self.n_patients = u(value)?,
            "synth.max_stays_per_patient" => self.max_stays_per_patient = u(value)?,
            "synth.extra_stay_prob" => self.extra_stay_prob = f(value)?,
            "synth.los_median_hours" => self.los_median_hours = f(value)?,
            "synth.los_sigma" => self.los_sigma = f(value)?,
            "synth.los_min_hours" => self.los_min_hours = f(value)?,
            "synth.los_max_hours" => self.los_max_hours = f(value)?,
            "synth.event_rate" => self.event_rate = f(value)?,
            "synth.base_hazard" => {
                self.base_hazard = match value {
                    "auto" | "" => None,
                    v => Some(f(v)?),
                }
            }
            "synth.structured_strength" => self.structured_strength = f(value)?,
            "synth.text_strength" => self.text_strength = f(value)?,
            "synth.text_hazard_weight" => self.text_hazard_weight = f(value)?,
            "synth.note_coverage" => self.note_coverage = f(value)?,
            "synth.embed_dim" => self.embed_dim = u(value)?,
            "synth.probe_fraction" => self.probe_fraction = f(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(text: &str) -> Result<Self, SynthError> {
        let mut cfg = SynthConfig::default();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                cfg.set(k.trim(), v.trim())?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_and_validation() {
        let cfg = SynthConfig {
            seed: 99,
            base_hazard: Some(0.0025),
            text_strength: 0.5,
            ..Default::default()
        };
        assert_eq!(SynthConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        let mut bad = cfg.clone();
        bad.note_coverage = 1.5;
        assert!(bad.validate().is_err());
        bad = cfg.clone();
        bad.structured_strength = -0.1;
        assert!(bad.validate().is_err());
        bad = cfg;
        bad.event_rate = 0.0;
        assert!(bad.validate().is_err());
    }
}
