//! Resolved run configuration: flat `section.key=value` pairs.
//!
//! Sections are `synth.`, `model.`, `train.`, `data.` and `logreg.`.
//! Sources, lowest precedence first: built-in defaults, the `--config` file,
//! environment (output directory and worker count only), `--set` pairs, then
//! dedicated flags. A top-level `seed` key fans out to the per-stage seeds
//! before any explicit `synth.seed`, `data.split_seed` or `train.seed` is
//! applied:
//!
//! - `synth.seed = derive_seed(seed, "synth")`
//! - `data.split_seed = derive_seed(seed, "split")`
//! - `train.seed = seed` (training derives its init, shuffle and dropout streams)

use std::path::{Path, PathBuf};

use super::CliError;
use crate::baseline::LogregOptions;
use crate::model::ModelConfig;
use crate::pipeline::DataConfig;
use crate::seed::derive_seed;
use crate::synth::SynthConfig;
use crate::training::TrainConfig;

pub const ENV_OUT: &str = "ICU_DET_OUT";
pub const ENV_WORKERS: &str = "ICU_DET_WORKERS";
pub const DEFAULT_OUT: &str = "icu-run";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out: PathBuf,
    /// 0 lets the thread pool pick.
    pub workers: usize,
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub logreg: LogregOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from(DEFAULT_OUT),
            workers: 0,
            seed: None,
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            logreg: LogregOptions::default(),
        }
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key=value, found `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies pairs in order; the master seed is expanded first.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        for (k, v) in pairs {
            if k == "seed" {
                let s = v.parse().map_err(|_| CliError::Config(format!("bad value `{v}` for seed")))?;
                self.set_master_seed(s);
            }
        }
        for (k, v) in pairs {
            if k != "seed" {
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    pub fn set_master_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = derive_seed(seed, "synth");
        self.data.split_seed = derive_seed(seed, "split");
        self.train.seed = seed;
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let known = match key {
            "out" => {
                self.out = PathBuf::from(value);
                true
            }
            "workers" => {
                self.workers = value
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad value `{value}` for workers")))?;
                true
            }
            "logreg.l2" | "logreg.max_iter" | "logreg.tol" => {
                let bad = || CliError::Config(format!("bad value `{value}` for {key}"));
                match key {
                    "logreg.l2" => self.logreg.l2 = value.parse().map_err(|_| bad())?,
                    "logreg.max_iter" => self.logreg.max_iter = value.parse().map_err(|_| bad())?,
                    _ => self.logreg.tol = value.parse().map_err(|_| bad())?,
                }
                true
            }
            _ => {
                self.synth.set(key, value).map_err(|e| CliError::Config(e.to_string()))?
                    || self.model.set(key, value).map_err(|e| CliError::Config(e.to_string()))?
                    || self.train.set(key, value).map_err(|e| CliError::Config(e.to_string()))?
                    || self.data.set(key, value).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        if known {
            Ok(())
        } else {
            Err(CliError::Config(format!("unknown config key `{key}`")))
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        self.apply(&parse_kv(&text, &path.display().to_string())?)
    }

    /// Output directory and worker count from the environment.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        if let Some(v) = get(ENV_OUT) {
            self.out = PathBuf::from(v);
        }
        if let Some(v) = get(ENV_WORKERS) {
            self.set("workers", &v)?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!("out={}\nworkers={}\n", self.out.display(), self.workers);
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed={seed}\n"));
        }
        let l = &self.logreg;
        let logreg = format!("logreg.l2={}\nlogreg.max_iter={}\nlogreg.tol={}\n", l.l2, l.max_iter, l.tol);
        s + &self.synth.to_kv() + &self.model.to_kv() + &self.train.to_kv() + &self.data.to_kv() + &logreg
    }
}
