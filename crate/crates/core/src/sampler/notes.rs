use std::collections::BTreeMap;
use std::path::Path;

use super::SamplerError;
use crate::ids::{NoteId, StayId};
use crate::ingest::StayMeta;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct NoteEmbedding {
    pub note_id: NoteId,
    pub stay_id: StayId,
    pub time: Timestamp,
    pub vector: Vec<f32>,
}

/// Embeddings grouped by stay, each list sorted by time then note id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoteIndex {
    pub dim: usize,
    by_stay: BTreeMap<StayId, Vec<NoteEmbedding>>,
}

impl NoteIndex {
    pub fn new(dim: usize, notes: impl IntoIterator<Item = NoteEmbedding>) -> Self {
        let mut by_stay: BTreeMap<StayId, Vec<NoteEmbedding>> = BTreeMap::new();
        for n in notes {
            by_stay.entry(n.stay_id).or_default().push(n);
        }
        for list in by_stay.values_mut() {
            list.sort_by_key(|n| (n.time, n.note_id));
        }
        NoteIndex { dim, by_stay }
    }

    pub fn for_stay(&self, stay: StayId) -> &[NoteEmbedding] {
        self.by_stay.get(&stay).map_or(&[], Vec::as_slice)
    }

    pub fn take_stay(&mut self, stay: StayId) -> Vec<NoteEmbedding> {
        self.by_stay.remove(&stay).unwrap_or_default()
    }

    pub fn n_notes(&self) -> usize {
        self.by_stay.values().map(Vec::len).sum()
    }

    pub fn n_stays(&self) -> usize {
        self.by_stay.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NoteEmbedding> {
        self.by_stay.values().flatten()
    }
}

/// Latest note at or before `intime + t`, checking its dimension.
pub fn attach_note<'a>(
    t: u32,
    notes: &'a [NoteEmbedding],
    stay: &StayMeta,
    dim: usize,
) -> Result<Option<&'a NoteEmbedding>, SamplerError> {
    let cutoff = stay.intime.plus_hours(t as i64);
    let found = notes
        .iter()
        .filter(|n| n.stay_id == stay.stay_id && n.time <= cutoff)
        .max_by_key(|n| (n.time, n.note_id));
    if let Some(n) = found {
        if n.vector.len() != dim {
            return Err(SamplerError::EmbeddingDim {
                file: format!("note {}", n.note_id),
                found: n.vector.len(),
                expected: dim,
            });
        }
    }
    Ok(found)
}

/// Reads `note_id,stay_id,charttime,e0..e{dim-1}`.
pub fn read_embeddings(path: &Path, dim: usize) -> Result<NoteIndex, SamplerError> {
    let file = path.display().to_string();
    let fmt = |msg: String| SamplerError::Format { file: file.clone(), msg };
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let headers = r.headers()?.clone();
    let fixed = ["note_id", "stay_id", "charttime"];
    if headers.len() < 3 || headers.iter().take(3).ne(fixed.iter().copied()) {
        return Err(fmt("header must start with note_id,stay_id,charttime".into()));
    }
    let found = headers.len() - 3;
    if found != dim {
        return Err(SamplerError::EmbeddingDim {
            file,
            found,
            expected: dim,
        });
    }
    for (j, h) in headers.iter().skip(3).enumerate() {
        if h != format!("e{j}") {
            return Err(fmt(format!("column {} should be e{j}, found {h}", j + 3)));
        }
    }
    let mut notes = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 3 {
            return Err(SamplerError::EmbeddingDim {
                file,
                found: rec.len().saturating_sub(3),
                expected: dim,
            });
        }
        let note_id = rec[0].parse().map_err(|_| fmt(format!("line {line}: bad note_id")))?;
        let stay_id = rec[1].parse().map_err(|_| fmt(format!("line {line}: bad stay_id")))?;
        let time = rec[2].parse().map_err(|_| fmt(format!("line {line}: bad charttime")))?;
        let vector = rec
            .iter()
            .skip(3)
            .map(|s| s.trim().parse::<f32>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| fmt(format!("line {line}: non-numeric embedding value")))?;
        notes.push(NoteEmbedding {
            note_id,
            stay_id,
            time,
            vector,
        });
    }
    Ok(NoteIndex::new(dim, notes))
}

/// Writes embeddings ordered by `(stay_id, charttime)` with 9 significant digits.
pub fn write_embeddings<'a>(
    path: &Path,
    dim: usize,
    notes: impl IntoIterator<Item = &'a NoteEmbedding>,
) -> Result<(), SamplerError> {
    let mut rows: Vec<&NoteEmbedding> = notes.into_iter().collect();
    rows.sort_by_key(|n| (n.stay_id, n.time, n.note_id));
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["note_id".to_string(), "stay_id".into(), "charttime".into()];
    header.extend((0..dim).map(|j| format!("e{j}")));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(dim + 3);
    for n in rows {
        if n.vector.len() != dim {
            return Err(SamplerError::EmbeddingDim {
                file: path.display().to_string(),
                found: n.vector.len(),
                expected: dim,
            });
        }
        rec.clear();
        rec.push(n.note_id.to_string());
        rec.push(n.stay_id.to_string());
        rec.push(n.time.to_string());
        rec.extend(n.vector.iter().map(|v| format!("{v:.8e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::SubjectId;
    use crate::ingest::{CareUnit, Gender};

    fn stay() -> StayMeta {
        StayMeta {
            stay_id: StayId(5),
            subject_id: SubjectId(5),
            intime: Timestamp(0),
            outtime: Timestamp(100 * 3600),
            age: 60.0,
            gender: Gender::M,
            death_time: None,
            care_unit: CareUnit::Cardiac,
        }
    }

    fn note(id: u64, hour: i64, fill: f32, dim: usize) -> NoteEmbedding {
        NoteEmbedding {
            note_id: NoteId(id),
            stay_id: StayId(5),
            time: Timestamp(hour * 3600),
            vector: vec![fill; dim],
        }
    }

    #[test]
    fn latest_note_inclusive() {
        let notes = [note(1, 2, 0.2, 4), note(2, 10, 1.0, 4), note(3, 12, 1.2, 4)];
        assert_eq!(attach_note(11, &notes, &stay(), 4).unwrap().unwrap().note_id, NoteId(2));
        assert_eq!(attach_note(12, &notes, &stay(), 4).unwrap().unwrap().note_id, NoteId(3));
        assert!(attach_note(1, &notes, &stay(), 4).unwrap().is_none());
        assert!(attach_note(12, &[], &stay(), 4).unwrap().is_none());
    }

    #[test]
    fn wrong_dimension_is_fatal() {
        let notes = [note(1, 2, 0.2, 3)];
        assert!(matches!(
            attach_note(6, &notes, &stay(), 4),
            Err(SamplerError::EmbeddingDim { found: 3, expected: 4, .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.csv");
        let mut a = note(1, 2, 0.0, 8);
        a.vector = vec![1.0 / 3.0, -2.5e-7, 123456.79, f32::MIN_POSITIVE, -0.0, 7.0, 1e30, -1e-30];
        let b = note(2, 5, 0.1, 8);
        write_embeddings(&p, 8, [&b, &a]).unwrap();
        let idx = read_embeddings(&p, 8).unwrap();
        let back: Vec<&NoteEmbedding> = idx.iter().collect();
        assert_eq!(back, vec![&a, &b]);
        assert!(matches!(read_embeddings(&p, 768), Err(SamplerError::EmbeddingDim { found: 8, .. })));
    }
}
