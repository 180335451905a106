use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::ids::SubjectId;
use crate::ingest::StayMeta;

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub map: BTreeMap<SubjectId, Split>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

/// Seeded shuffle of the sorted patient ids, cut at `round(n·r₀)` and `round(n·(r₀+r₁))`.
pub fn split_by_patient(subjects: &[SubjectId], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, SamplerError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SamplerError::BadRatios(ratios));
    }
    let mut ids: Vec<SubjectId> = subjects.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len() as f64;
    let cut1 = (n * ratios[0]).round() as usize;
    let cut2 = ((n * (ratios[0] + ratios[1])).round() as usize).max(cut1);
    let map = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < cut1 {
                Split::Train
            } else if i < cut2 {
                Split::Val
            } else {
                Split::Test
            };
            (id, s)
        })
        .collect();
    Ok(SplitAssignment { map, ratios, seed })
}

impl SplitAssignment {
    pub fn get(&self, subject: SubjectId) -> Option<Split> {
        self.map.get(&subject).copied()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.map.values() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn subjects(&self, split: Split) -> BTreeSet<SubjectId> {
        self.map.iter().filter(|(_, s)| **s == split).map(|(id, _)| *id).collect()
    }

    /// Checks that split patient sets are disjoint and every stay's patient is assigned.
    pub fn check_leak_free(&self, stays: &[StayMeta]) -> Result<(), SamplerError> {
        let mut seen: BTreeMap<SubjectId, Split> = BTreeMap::new();
        let mut leaks = BTreeSet::new();
        for st in stays {
            let s = self.get(st.subject_id).ok_or(SamplerError::Unassigned(st.subject_id))?;
            if let Some(prev) = seen.insert(st.subject_id, s) {
                if prev != s {
                    leaks.insert(st.subject_id);
                }
            }
        }
        let sets: Vec<BTreeSet<SubjectId>> = Split::ALL.iter().map(|&s| self.subjects(s)).collect();
        for i in 0..3 {
            for j in i + 1..3 {
                leaks.extend(sets[i].intersection(&sets[j]).copied());
            }
        }
        if leaks.is_empty() {
            Ok(())
        } else {
            Err(SamplerError::Leak(leaks.into_iter().collect()))
        }
    }

    /// Writes `subject_id,split`.
    pub fn write_manifest(&self, path: &Path) -> Result<(), SamplerError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["subject_id", "split"])?;
        for (id, s) in &self.map {
            w.write_record([id.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_manifest(path: &Path, ratios: [f64; 3], seed: u64) -> Result<Self, SamplerError> {
        let mut r = csv::Reader::from_path(path)?;
        let mut map = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let bad = || SamplerError::Format {
                file: path.display().to_string(),
                msg: format!("bad row {:?}", rec),
            };
            let id: SubjectId = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let s = rec.get(1).and_then(Split::parse).ok_or_else(bad)?;
            if map.insert(id, s).is_some_and(|prev| prev != s) {
                return Err(SamplerError::Leak(vec![id]));
            }
        }
        Ok(SplitAssignment { map, ratios, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u64) -> Vec<SubjectId> {
        (0..n).map(|i| SubjectId(1000 + i * 3)).collect()
    }

    #[test]
    fn hundred_patients_split_70_15_15() {
        let a = split_by_patient(&ids(100), DEFAULT_RATIOS, 4).unwrap();
        assert_eq!(a.counts(), [70, 15, 15]);
    }

    #[test]
    fn same_seed_identical_other_seed_differs() {
        let a = split_by_patient(&ids(50), DEFAULT_RATIOS, 9).unwrap();
        let b = split_by_patient(&ids(50), DEFAULT_RATIOS, 9).unwrap();
        let c = split_by_patient(&ids(50), DEFAULT_RATIOS, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.map, c.map);
        let mut rev = ids(50);
        rev.reverse();
        assert_eq!(split_by_patient(&rev, DEFAULT_RATIOS, 9).unwrap(), a);
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(split_by_patient(&ids(5), [0.7, 0.2, 0.2], 1).is_err());
        assert!(split_by_patient(&ids(5), [0.7, 0.15, 0.15 + 1e-10], 1).is_ok());
    }

    #[test]
    fn manifest_round_trip() {
        let a = split_by_patient(&ids(20), DEFAULT_RATIOS, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.csv");
        a.write_manifest(&p).unwrap();
        assert_eq!(SplitAssignment::read_manifest(&p, DEFAULT_RATIOS, 2).unwrap(), a);
    }
}
