use serde::{Deserialize, Serialize};

use super::{FeaturizeError, GridStage, HourlyGrid};
use crate::catalog::{CHANNELS, N_CHANNELS};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel mean and population standard deviation over mask=1 cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: Vec<u64>,
}

impl NormalizationStats {
    pub fn identity() -> Self {
        NormalizationStats {
            mean: vec![0.0; N_CHANNELS],
            std: vec![1.0; N_CHANNELS],
            count: vec![0; N_CHANNELS],
        }
    }

    pub fn write_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["channel", "mean", "std", "count"])?;
        for (c, ch) in CHANNELS.iter().enumerate() {
            w.write_record([
                ch.name.to_string(),
                format!("{:e}", self.mean[c]),
                format!("{:e}", self.std[c]),
                self.count[c].to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self, FeaturizeError> {
        let bad = |m: String| FeaturizeError::Cache(format!("{}: {m}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut stats = NormalizationStats::identity();
        let mut seen = 0;
        for (c, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if c >= N_CHANNELS || rec.get(0) != Some(CHANNELS[c].name) {
                return Err(bad(format!("unexpected row {}", c + 1)));
            }
            let num = |i: usize| -> Result<f64, FeaturizeError> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(format!("bad number in row {}", c + 1)))
            };
            stats.mean[c] = num(1)?;
            stats.std[c] = num(2)?;
            stats.count[c] = num(3)? as u64;
            seen += 1;
        }
        if seen != N_CHANNELS {
            return Err(bad(format!("expected {N_CHANNELS} channels, found {seen}")));
        }
        Ok(stats)
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Fits z-score statistics on training grids.
///
/// Grids are visited in stay-id order with compensated two-pass sums, so the
/// result does not depend on the order of `grids`.
pub fn fit_normalizer(grids: &[&HourlyGrid]) -> Result<NormalizationStats, FeaturizeError> {
    if grids.is_empty() {
        return Err(FeaturizeError::EmptyTrainingSplit);
    }
    let mut ordered: Vec<&HourlyGrid> = grids.to_vec();
    ordered.sort_by_key(|g| g.stay_id);

    let mut sums: Vec<Neumaier> = (0..N_CHANNELS).map(|_| Neumaier::default()).collect();
    let mut count = vec![0u64; N_CHANNELS];
    for g in &ordered {
        for (i, (&v, &m)) in g.values.iter().zip(&g.mask).enumerate() {
            if m == 1 {
                let c = i % N_CHANNELS;
                sums[c].add(v);
                count[c] += 1;
            }
        }
    }
    let mean: Vec<f64> = (0..N_CHANNELS)
        .map(|c| if count[c] > 0 { sums[c].total() / count[c] as f64 } else { 0.0 })
        .collect();

    let mut sq: Vec<Neumaier> = (0..N_CHANNELS).map(|_| Neumaier::default()).collect();
    for g in &ordered {
        for (i, (&v, &m)) in g.values.iter().zip(&g.mask).enumerate() {
            if m == 1 {
                let c = i % N_CHANNELS;
                let d = v - mean[c];
                sq[c].add(d * d);
            }
        }
    }
    let mut std = vec![1.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        if count[c] == 0 {
            log::warn!("channel {} has no observations in the training split", CHANNELS[c].name);
        } else {
            std[c] = (sq[c].total() / count[c] as f64).sqrt().max(STD_FLOOR);
        }
    }
    Ok(NormalizationStats { mean, std, count })
}

/// Z-scores observed cells; missing cells become exactly 0.
pub fn normalize(grid: &HourlyGrid, stats: &NormalizationStats) -> Result<HourlyGrid, FeaturizeError> {
    if grid.stage == GridStage::Normalized {
        return Err(FeaturizeError::AlreadyNormalized(grid.stay_id));
    }
    let mut out = grid.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        let c = i % N_CHANNELS;
        *v = if grid.mask[i] == 1 {
            (grid.values[i] - stats.mean[c]) / stats.std[c]
        } else {
            0.0
        };
    }
    out.stage = GridStage::Normalized;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::StayId;
    use rand::{Rng, SeedableRng};

    fn grid_with(stay: u64, channel: usize, vals: &[f64]) -> HourlyGrid {
        let mut g = HourlyGrid::empty(StayId(stay), vals.len());
        for (h, &v) in vals.iter().enumerate() {
            g.values[HourlyGrid::idx(h, channel)] = v;
            g.mask[HourlyGrid::idx(h, channel)] = 1;
        }
        g.stage = GridStage::Imputed;
        g
    }

    fn random_grids(seed: u64, n: usize) -> Vec<HourlyGrid> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|s| {
                let t = rng.gen_range(24..80);
                let mut g = HourlyGrid::empty(StayId(s as u64 * 7 + 3), t);
                for i in 0..g.values.len() {
                    if rng.gen_bool(0.4) {
                        let c = i % N_CHANNELS;
                        g.values[i] = 50.0 * c as f64 + rng.gen_range(-1e3..1e3) * (1.0 + c as f64);
                        g.mask[i] = 1;
                    }
                }
                g.stage = GridStage::Imputed;
                g
            })
            .collect()
    }

    #[test]
    fn constant_channel_gets_floor() {
        let g = grid_with(1, 3, &[5.0; 10]);
        let s = fit_normalizer(&[&g]).unwrap();
        assert_eq!(s.mean[3], 5.0);
        assert_eq!(s.std[3], STD_FLOOR);
        assert_eq!((s.mean[0], s.std[0], s.count[0]), (0.0, 1.0, 0));
    }

    #[test]
    fn two_point_mean() {
        let g = grid_with(1, 0, &[0.0, 2.0]);
        let s = fit_normalizer(&[&g]).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.std[0], 1.0);
    }

    #[test]
    fn empty_split_is_fatal() {
        assert!(matches!(fit_normalizer(&[]), Err(FeaturizeError::EmptyTrainingSplit)));
    }

    #[test]
    fn matches_welford_oracle() {
        let grids = random_grids(11, 60);
        let refs: Vec<&HourlyGrid> = grids.iter().collect();
        let s = fit_normalizer(&refs).unwrap();
        // streaming oracle, independent of the two-pass implementation
        let mut n = [0f64; N_CHANNELS];
        let mut mean = [0f64; N_CHANNELS];
        let mut m2 = [0f64; N_CHANNELS];
        for g in &grids {
            for i in 0..g.values.len() {
                if g.mask[i] == 1 {
                    let c = i % N_CHANNELS;
                    n[c] += 1.0;
                    let d = g.values[i] - mean[c];
                    mean[c] += d / n[c];
                    m2[c] += d * (g.values[i] - mean[c]);
                }
            }
        }
        for c in 0..N_CHANNELS {
            let sd = (m2[c] / n[c]).sqrt();
            assert!((s.mean[c] - mean[c]).abs() <= 1e-10 * (1.0 + mean[c].abs()), "mean {c}");
            assert!((s.std[c] - sd).abs() <= 1e-10 * (1.0 + sd), "std {c}");
        }
    }

    #[test]
    fn order_independent_bitwise() {
        let grids = random_grids(5, 40);
        let a: Vec<&HourlyGrid> = grids.iter().collect();
        let b: Vec<&HourlyGrid> = grids.iter().rev().collect();
        assert_eq!(fit_normalizer(&a).unwrap(), fit_normalizer(&b).unwrap());
    }

    #[test]
    fn normalized_training_split_is_standard() {
        let grids = random_grids(8, 30);
        let refs: Vec<&HourlyGrid> = grids.iter().collect();
        let s = fit_normalizer(&refs).unwrap();
        let normed: Vec<HourlyGrid> = grids.iter().map(|g| normalize(g, &s).unwrap()).collect();
        for c in 0..N_CHANNELS {
            let vals: Vec<f64> = normed
                .iter()
                .flat_map(|g| (0..g.n_hours).filter_map(move |h| g.value(h, c)))
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            assert!(m.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6, "channel {c}: {m} {sd}");
        }
        for g in &normed {
            for i in 0..g.values.len() {
                if g.mask[i] == 0 {
                    assert_eq!(g.values[i].to_bits(), 0.0f64.to_bits());
                }
            }
        }
    }

    #[test]
    fn mean_cell_maps_to_zero_and_double_normalize_rejected() {
        let g = grid_with(1, 0, &[1.0, 3.0]);
        let s = fit_normalizer(&[&g]).unwrap();
        let mut probe = g.clone();
        probe.values[HourlyGrid::idx(0, 0)] = 2.0;
        let n = normalize(&probe, &s).unwrap();
        assert_eq!(n.value(0, 0), Some(0.0));
        assert!(matches!(normalize(&n, &s), Err(FeaturizeError::AlreadyNormalized(_))));
    }

    #[test]
    fn stats_csv_round_trip() {
        let grids = random_grids(2, 5);
        let refs: Vec<&HourlyGrid> = grids.iter().collect();
        let s = fit_normalizer(&refs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("norm.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(NormalizationStats::read_csv(&p).unwrap(), s);
    }
}
