use std::path::Path;

use super::{
    age_norm, attach_note, enumerate_samples, extract_window, gender_flag, label_sample, window_hour, NoteEmbedding,
    Sample, SamplerError, Split, N_STATICS, WINDOW_HOURS,
};
use crate::catalog::N_CHANNELS;
use crate::featurize::HourlyGrid;
use crate::ingest::{OutcomeEvent, StayMeta};
use crate::numkernel::Real;

/// Everything needed to materialize the samples of one stay.
#[derive(Debug, Clone)]
pub struct StayData {
    pub meta: StayMeta,
    /// Normalized grid.
    pub grid: HourlyGrid,
    /// Sorted by time.
    pub notes: Vec<NoteEmbedding>,
    pub outcomes: Vec<OutcomeEvent>,
    pub split: Option<Split>,
}

/// Compact sample handle; windows are sliced from the grid on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRef {
    pub stay: u32,
    pub t: u32,
    pub label: u8,
    /// Index into the stay's notes of the attached note.
    pub note: Option<u32>,
    pub missing_frac: f64,
}

/// A lazily materialized sample stream over a set of stays.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub stays: Vec<StayData>,
    pub index: Vec<SampleRef>,
    pub embed_dim: usize,
}

/// Model inputs for a batch. The window is time-major `[48 × B × 26]`.
#[derive(Debug, Clone, Default)]
pub struct Batch<F: Real> {
    pub size: usize,
    pub window: Vec<F>,
    /// `[B × embed_dim]`, zero rows where no note is attached.
    pub text: Vec<F>,
    pub has_note: Vec<F>,
    /// `[B × 3]`: age_norm, gender_flag, has_note.
    pub statics: Vec<F>,
    pub labels: Vec<F>,
}

fn window_missing_frac(obs_per_hour: &[u32], t: u32) -> f64 {
    let observed: u32 = (0..WINDOW_HOURS)
        .filter_map(|r| window_hour(t, r))
        .filter_map(|h| obs_per_hour.get(h))
        .sum();
    1.0 - observed as f64 / (WINDOW_HOURS * N_CHANNELS) as f64
}

impl Dataset {
    /// Enumerates, labels and attaches notes for every stay.
    pub fn build(stays: Vec<StayData>, embed_dim: usize) -> Result<Self, SamplerError> {
        let mut index = Vec::new();
        for (si, st) in stays.iter().enumerate() {
            let obs: Vec<u32> = (0..st.grid.n_hours)
                .map(|h| st.grid.mask_row(h).iter().map(|&m| m as u32).sum())
                .collect();
            for t in enumerate_samples(&st.meta) {
                let note = attach_note(t, &st.notes, &st.meta, embed_dim)?.map(|n| {
                    st.notes.iter().position(|x| std::ptr::eq(x, n)).expect("note from this slice") as u32
                });
                index.push(SampleRef {
                    stay: si as u32,
                    t,
                    label: label_sample(t, &st.outcomes, &st.meta),
                    note,
                    missing_frac: window_missing_frac(&obs, t),
                });
            }
        }
        Ok(Dataset {
            stays,
            index,
            embed_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.index.iter().map(|s| s.label).collect()
    }

    pub fn n_positive(&self) -> usize {
        self.index.iter().filter(|s| s.label == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.n_positive() as f64 / self.len().max(1) as f64
    }

    pub fn missing_fracs(&self) -> Vec<f64> {
        self.index.iter().map(|s| s.missing_frac).collect()
    }

    pub fn stay_of(&self, i: usize) -> &StayData {
        &self.stays[self.index[i].stay as usize]
    }

    pub fn sample(&self, i: usize) -> Sample {
        let r = self.index[i];
        let st = &self.stays[r.stay as usize];
        let mut window = vec![0.0; WINDOW_HOURS * N_CHANNELS];
        let mut mask = vec![0u8; WINDOW_HOURS * N_CHANNELS];
        extract_window(&st.grid, r.t, &mut window, &mut mask);
        let note_embedding = match r.note {
            Some(k) => st.notes[k as usize].vector.clone(),
            None => vec![0.0; self.embed_dim],
        };
        Sample {
            stay_id: st.meta.stay_id,
            subject_id: st.meta.subject_id,
            t: r.t,
            window,
            mask,
            note_embedding,
            has_note: r.note.is_some() as u8,
            age_norm: age_norm(st.meta.age),
            gender_flag: gender_flag(st.meta.gender),
            label: r.label,
            missing_frac: r.missing_frac,
            split: st.split,
        }
    }

    /// Fills `batch` with the samples at `idx`.
    pub fn fill_batch<F: Real>(&self, idx: &[usize], batch: &mut Batch<F>) {
        let b = idx.len();
        let d = self.embed_dim;
        batch.size = b;
        batch.window.clear();
        batch.window.resize(WINDOW_HOURS * b * N_CHANNELS, F::zero());
        batch.text.clear();
        batch.text.resize(b * d, F::zero());
        batch.has_note.clear();
        batch.statics.clear();
        batch.labels.clear();
        for (bi, &i) in idx.iter().enumerate() {
            let r = self.index[i];
            let st = &self.stays[r.stay as usize];
            for row in 0..WINDOW_HOURS {
                let Some(h) = window_hour(r.t, row).filter(|&h| h < st.grid.n_hours) else {
                    continue;
                };
                let dst = &mut batch.window[(row * b + bi) * N_CHANNELS..(row * b + bi + 1) * N_CHANNELS];
                for (x, &v) in dst.iter_mut().zip(st.grid.row(h)) {
                    *x = F::from_f64(v);
                }
            }
            let has = match r.note {
                Some(k) => {
                    let v = &st.notes[k as usize].vector;
                    for (x, &e) in batch.text[bi * d..(bi + 1) * d].iter_mut().zip(v) {
                        *x = F::from_f64(e as f64);
                    }
                    F::one()
                }
                None => F::zero(),
            };
            batch.has_note.push(has);
            batch.statics.push(F::from_f64(age_norm(st.meta.age)));
            batch.statics.push(F::from_f64(gender_flag(st.meta.gender)));
            batch.statics.push(has);
            batch.labels.push(F::from_f64(r.label as f64));
        }
        debug_assert_eq!(batch.statics.len(), b * N_STATICS);
    }

    /// Writes `stay_id,t,label,has_note,missing_frac`.
    pub fn write_audit(&self, path: &Path) -> Result<(), SamplerError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["stay_id", "t", "label", "has_note", "missing_frac"])?;
        for r in &self.index {
            let st = &self.stays[r.stay as usize];
            w.write_record([
                st.meta.stay_id.to_string(),
                r.t.to_string(),
                r.label.to_string(),
                (r.note.is_some() as u8).to_string(),
                format!("{:.6}", r.missing_frac),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::GridStage;
    use crate::ids::{NoteId, StayId, SubjectId};
    use crate::ingest::{CareUnit, Gender, OutcomeKind};
    use crate::time::Timestamp;

    fn stay_data(los_h: i64) -> StayData {
        let meta = StayMeta {
            stay_id: StayId(3),
            subject_id: SubjectId(30),
            intime: Timestamp(0),
            outtime: Timestamp(los_h * 3600),
            age: 80.0,
            gender: Gender::M,
            death_time: None,
            care_unit: CareUnit::Surgical,
        };
        let mut grid = HourlyGrid::empty(meta.stay_id, los_h as usize);
        for h in 0..los_h as usize {
            for c in 0..13 {
                grid.values[HourlyGrid::idx(h, c)] = (h * 100 + c) as f64;
                grid.mask[HourlyGrid::idx(h, c)] = 1;
            }
        }
        for v in grid.values.iter_mut() {
            if v.is_nan() {
                *v = 0.0;
            }
        }
        grid.stage = GridStage::Normalized;
        StayData {
            meta,
            grid,
            notes: vec![NoteEmbedding {
                note_id: NoteId(1),
                stay_id: StayId(3),
                time: Timestamp(9 * 3600),
                vector: vec![0.5; 4],
            }],
            outcomes: vec![OutcomeEvent {
                stay_id: StayId(3),
                kind: OutcomeKind::VentilationStart,
                time: Timestamp(20 * 3600),
            }],
            split: Some(Split::Train),
        }
    }

    #[test]
    fn index_labels_notes_and_missingness() {
        let ds = Dataset::build(vec![stay_data(30)], 4).unwrap();
        assert_eq!(ds.len(), 25);
        let s6 = ds.sample(0);
        assert_eq!(s6.t, 6);
        assert_eq!(s6.label, 1);
        assert_eq!(s6.has_note, 0);
        assert!(s6.missing_frac >= 0.875);
        assert!((s6.missing_frac - (1.0 - 6.0 * 13.0 / 1248.0)).abs() < 1e-12);
        let s9 = ds.sample(3);
        assert_eq!((s9.t, s9.has_note), (9, 1));
        assert_eq!(s9.note_embedding, vec![0.5; 4]);
        let s20 = ds.sample(14);
        assert_eq!((s20.t, s20.label), (20, 0));
        assert_eq!(s6.age_norm, 1.0);
        assert_eq!(s6.gender_flag, 1.0);
    }

    #[test]
    fn batch_is_time_major_and_matches_samples() {
        let ds = Dataset::build(vec![stay_data(30)], 4).unwrap();
        let idx = [0usize, 10, 24];
        let mut batch = Batch::<f64>::default();
        ds.fill_batch(&idx, &mut batch);
        for (bi, &i) in idx.iter().enumerate() {
            let s = ds.sample(i);
            for row in 0..WINDOW_HOURS {
                for c in 0..N_CHANNELS {
                    assert_eq!(batch.window[(row * 3 + bi) * N_CHANNELS + c], s.window[row * N_CHANNELS + c]);
                }
            }
            assert_eq!(batch.labels[bi], s.label as f64);
            assert_eq!(batch.statics[bi * 3 + 2], s.has_note as f64);
        }
    }
}
