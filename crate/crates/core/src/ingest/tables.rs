use std::collections::HashMap;
use std::path::{Path, PathBuf};

use csv::StringRecord;

use super::{CareUnit, EventSource, EventStore, Gender, IngestError, RawEvent, StayRecord};
use crate::catalog;
use crate::ids::{ItemId, StayId, SubjectId};
use crate::time::Timestamp;

/// Row-level failures above this fraction of a file are fatal.
pub const MALFORMED_FATAL_FRACTION: f64 = 0.01;

const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableReport {
    pub file: PathBuf,
    pub rows: usize,
    pub malformed: usize,
    pub unknown_items: usize,
    /// First few malformed rows as `line N: reason`.
    pub examples: Vec<String>,
}

impl TableReport {
    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.malformed += 1;
        if self.examples.len() < MAX_EXAMPLES {
            self.examples.push(format!("line {line}: {}", reason.into()));
        }
    }

    fn check_fatal(&self) -> Result<(), IngestError> {
        if self.malformed as f64 > MALFORMED_FATAL_FRACTION * self.rows as f64 {
            return Err(IngestError::TooManyMalformed {
                file: self.file.clone(),
                bad: self.malformed,
                total: self.rows,
                first: self.examples.first().cloned().unwrap_or_default(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport {
    pub tables: Vec<TableReport>,
}

impl ParseReport {
    pub fn malformed(&self) -> usize {
        self.tables.iter().map(|t| t.malformed).sum()
    }

    pub fn rows(&self) -> usize {
        self.tables.iter().map(|t| t.rows).sum()
    }
}

/// Paths of the four event tables.
#[derive(Debug, Clone)]
pub struct EventTables {
    pub chartevents: PathBuf,
    pub labevents: PathBuf,
    pub inputevents: PathBuf,
    pub procedureevents: PathBuf,
}

impl EventTables {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        EventTables {
            chartevents: dir.join("chartevents.csv"),
            labevents: dir.join("labevents.csv"),
            inputevents: dir.join("inputevents.csv"),
            procedureevents: dir.join("procedureevents.csv"),
        }
    }

    fn each(&self) -> [(&Path, EventSource); 4] {
        [
            (&self.chartevents, EventSource::Chart),
            (&self.labevents, EventSource::Lab),
            (&self.inputevents, EventSource::Input),
            (&self.procedureevents, EventSource::Procedure),
        ]
    }
}

struct Table {
    path: PathBuf,
    reader: csv::Reader<std::fs::File>,
    columns: HashMap<String, usize>,
}

impl Table {
    fn open(path: &Path) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|source| match source.kind() {
                csv::ErrorKind::Io(_) => IngestError::Io {
                    file: path.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, source.to_string()),
                },
                _ => IngestError::Csv {
                    file: path.to_path_buf(),
                    source,
                },
            })?;
        let headers = reader.headers().map_err(|source| IngestError::Csv {
            file: path.to_path_buf(),
            source,
        })?;
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_ascii_lowercase(), i))
            .collect();
        Ok(Table {
            path: path.to_path_buf(),
            reader,
            columns,
        })
    }

    fn require(&self, name: &str) -> Result<usize, IngestError> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn {
                file: self.path.clone(),
                column: name.to_string(),
            })
    }

    /// Calls `row` for each record; row-level errors land in the report.
    fn for_each(
        mut self,
        report: &mut TableReport,
        mut row: impl FnMut(&StringRecord) -> Result<(), String>,
    ) -> Result<(), IngestError> {
        let mut record = StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => break,
                Ok(true) => {
                    report.rows += 1;
                    let line = record.position().map_or(0, |p| p.line());
                    if let Err(reason) = row(&record) {
                        report.reject(line, reason);
                    }
                }
                Err(err) => {
                    if let csv::ErrorKind::Io(_) = err.kind() {
                        return Err(IngestError::Csv {
                            file: self.path,
                            source: err,
                        });
                    }
                    report.rows += 1;
                    let line = err.position().map_or(0, |p| p.line());
                    report.reject(line, err.to_string());
                }
            }
        }
        Ok(())
    }
}

fn field<'r>(record: &'r StringRecord, idx: usize, name: &str) -> Result<&'r str, String> {
    record
        .get(idx)
        .ok_or_else(|| format!("missing field `{name}`"))
}

fn parse_num<T: std::str::FromStr>(raw: &str, name: &str) -> Result<T, String> {
    raw.parse()
        .map_err(|_| format!("bad `{name}` value {raw:?}"))
}

fn parse_time(raw: &str, name: &str) -> Result<Timestamp, String> {
    raw.parse()
        .map_err(|_| format!("bad `{name}` timestamp {raw:?}"))
}

fn parse_optional_time(raw: &str, name: &str) -> Result<Option<Timestamp>, String> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_time(raw, name).map(Some)
    }
}

/// Parses one event table into `events`.
pub fn parse_event_table(
    path: &Path,
    source: EventSource,
    events: &mut Vec<RawEvent>,
) -> Result<TableReport, IngestError> {
    let table = Table::open(path)?;
    let time_col = if source.has_value() { "charttime" } else { "starttime" };
    let stay_idx = table.require("stay_id")?;
    let item_idx = table.require("itemid")?;
    let time_idx = table.require(time_col)?;
    let value_idx = if source.has_value() {
        Some(table.require("valuenum")?)
    } else {
        None
    };
    let mut report = TableReport {
        file: path.to_path_buf(),
        ..Default::default()
    };
    let mut unknown = 0usize;
    table.for_each(&mut report, |rec| {
        let stay_id: StayId = parse_num(field(rec, stay_idx, "stay_id")?, "stay_id")?;
        let item_id: ItemId = parse_num(field(rec, item_idx, "itemid")?, "itemid")?;
        let time = parse_time(field(rec, time_idx, time_col)?, time_col)?;
        let value = match value_idx {
            Some(idx) => {
                let raw = field(rec, idx, "valuenum")?;
                let v: f64 = parse_num(raw, "valuenum")?;
                if !v.is_finite() {
                    return Err(format!("non-finite `valuenum` {raw:?}"));
                }
                Some(v)
            }
            None => None,
        };
        let known = catalog::is_known(item_id);
        if !known {
            unknown += 1;
        }
        events.push(RawEvent {
            stay_id,
            item_id,
            time,
            value,
            source,
            known,
        });
        Ok(())
    })?;
    report.unknown_items = unknown;
    report.check_fatal()?;
    Ok(report)
}

/// Parses the four event tables into a time-ordered [`EventStore`].
pub fn parse_event_tables(tables: &EventTables) -> Result<(EventStore, ParseReport), IngestError> {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (path, source) in tables.each() {
        report
            .tables
            .push(parse_event_table(path, source, &mut events)?);
    }
    Ok((EventStore::from_events(events), report))
}

/// Joins `icustays.csv`, `patients.csv` and `admissions.csv` from `dir`.
pub fn load_stays(dir: &Path) -> Result<(Vec<StayRecord>, ParseReport), IngestError> {
    let mut report = ParseReport::default();

    let mut patients: HashMap<SubjectId, (Option<Gender>, Option<f64>)> = HashMap::new();
    let path = dir.join("patients.csv");
    let table = Table::open(&path)?;
    let (subj, gender, age) = (
        table.require("subject_id")?,
        table.require("gender")?,
        table.require("anchor_age")?,
    );
    let mut rep = TableReport {
        file: path.clone(),
        ..Default::default()
    };
    table.for_each(&mut rep, |rec| {
        let id: SubjectId = parse_num(field(rec, subj, "subject_id")?, "subject_id")?;
        let g = match field(rec, gender, "gender")? {
            "M" | "m" => Some(Gender::M),
            "F" | "f" => Some(Gender::F),
            "" => None,
            other => return Err(format!("bad `gender` value {other:?}")),
        };
        let a_raw = field(rec, age, "anchor_age")?;
        let a = if a_raw.is_empty() {
            None
        } else {
            let v: f64 = parse_num(a_raw, "anchor_age")?;
            if !v.is_finite() || v < 0.0 {
                return Err(format!("bad `anchor_age` value {a_raw:?}"));
            }
            Some(v)
        };
        patients.insert(id, (g, a));
        Ok(())
    })?;
    rep.check_fatal()?;
    report.tables.push(rep);

    let mut deaths: HashMap<StayId, Option<Timestamp>> = HashMap::new();
    let path = dir.join("admissions.csv");
    let table = Table::open(&path)?;
    let (stay, death) = (table.require("stay_id")?, table.require("deathtime")?);
    table.require("subject_id")?;
    let mut rep = TableReport {
        file: path.clone(),
        ..Default::default()
    };
    table.for_each(&mut rep, |rec| {
        let id: StayId = parse_num(field(rec, stay, "stay_id")?, "stay_id")?;
        let t = parse_optional_time(field(rec, death, "deathtime")?, "deathtime")?;
        deaths.insert(id, t);
        Ok(())
    })?;
    rep.check_fatal()?;
    report.tables.push(rep);

    let mut stays = Vec::new();
    let path = dir.join("icustays.csv");
    let table = Table::open(&path)?;
    let (subj, stay, intime, outtime, unit) = (
        table.require("subject_id")?,
        table.require("stay_id")?,
        table.require("intime")?,
        table.require("outtime")?,
        table.require("first_careunit")?,
    );
    let mut rep = TableReport {
        file: path.clone(),
        ..Default::default()
    };
    table.for_each(&mut rep, |rec| {
        let subject_id: SubjectId = parse_num(field(rec, subj, "subject_id")?, "subject_id")?;
        let stay_id: StayId = parse_num(field(rec, stay, "stay_id")?, "stay_id")?;
        let intime = parse_optional_time(field(rec, intime, "intime")?, "intime")?;
        let outtime = parse_optional_time(field(rec, outtime, "outtime")?, "outtime")?;
        let care_unit = CareUnit::from_label(field(rec, unit, "first_careunit")?);
        let (gender, age) = patients.get(&subject_id).copied().unwrap_or((None, None));
        stays.push(StayRecord {
            stay_id,
            subject_id,
            intime,
            outtime,
            age,
            gender,
            death_time: deaths.get(&stay_id).copied().flatten(),
            care_unit,
        });
        Ok(())
    })?;
    rep.check_fatal()?;
    report.tables.push(rep);

    stays.sort_by_key(|s| s.stay_id);
    Ok((stays, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn well_formed_chart_rows_are_time_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "chartevents.csv",
            "stay_id,itemid,charttime,valuenum\n\
             1,220045,2150-01-01 10:00:00,90\n\
             1,220045,2150-01-01 08:00:00,80\n\
             1,220045,2150-01-01 09:00:00,85\n",
        );
        let mut events = Vec::new();
        let rep = parse_event_table(&p, EventSource::Chart, &mut events).unwrap();
        assert_eq!(rep.rows, 3);
        assert_eq!(rep.malformed, 0);
        let store = EventStore::from_events(events);
        let vals: Vec<f64> = store
            .events(StayId(1))
            .iter()
            .map(|e| e.value.unwrap())
            .collect();
        assert_eq!(vals, vec![80.0, 85.0, 90.0]);
    }

    #[test]
    fn nan_value_is_counted_and_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("stay_id,itemid,charttime,valuenum\n");
        for i in 0..200 {
            body.push_str(&format!("1,220045,2150-01-01 08:{:02}:00,80\n", i % 60));
        }
        body.push_str("1,220045,2150-01-01 09:00:00,NaN\n");
        let p = write(dir.path(), "chartevents.csv", &body);
        let mut events = Vec::new();
        let rep = parse_event_table(&p, EventSource::Chart, &mut events).unwrap();
        assert_eq!(rep.malformed, 1);
        assert_eq!(events.len(), 200);
        assert!(rep.examples[0].contains("non-finite"));
    }

    #[test]
    fn missing_charttime_column_is_fatal_and_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "chartevents.csv",
            "stay_id,itemid,time,valuenum\n1,220045,2150-01-01 10:00:00,90\n",
        );
        let err = parse_event_table(&p, EventSource::Chart, &mut Vec::new()).unwrap_err();
        match &err {
            IngestError::MissingColumn { column, .. } => assert_eq!(column, "charttime"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("charttime"));
    }

    #[test]
    fn more_than_one_percent_malformed_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "labevents.csv",
            "stay_id,itemid,charttime,valuenum\n1,50813,2150-01-01 10:00:00,2.0\n1,50813,not-a-time,2.0\n",
        );
        let err = parse_event_table(&p, EventSource::Lab, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, IngestError::TooManyMalformed { bad: 1, total: 2, .. }));
    }

    #[test]
    fn unknown_items_are_kept_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "inputevents.csv",
            "stay_id,itemid,starttime\n1,221906,2150-01-01 10:00:00\n1,999999,2150-01-01 11:00:00\n",
        );
        let mut events = Vec::new();
        let rep = parse_event_table(&p, EventSource::Input, &mut events).unwrap();
        assert_eq!(rep.unknown_items, 1);
        assert_eq!(events.len(), 2);
        assert!(events.iter().any(|e| !e.known && e.item_id == ItemId(999999)));
        assert!(events.iter().all(|e| e.value.is_none()));
    }

    #[test]
    fn stays_join_demographics_and_deaths() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "icustays.csv",
            "subject_id,stay_id,intime,outtime,first_careunit\n\
             7,70,2150-01-01 00:00:00,2150-01-03 00:00:00,Medical Intensive Care Unit (MICU)\n\
             8,80,,2150-01-03 00:00:00,surgical\n",
        );
        write(dir.path(), "patients.csv", "subject_id,gender,anchor_age\n7,F,70\n8,M,40\n");
        write(
            dir.path(),
            "admissions.csv",
            "subject_id,stay_id,deathtime\n7,70,2150-01-02 00:00:00\n8,80,\n",
        );
        let (stays, rep) = load_stays(dir.path()).unwrap();
        assert_eq!(rep.malformed(), 0);
        assert_eq!(stays.len(), 2);
        assert_eq!(stays[0].gender, Some(Gender::F));
        assert_eq!(stays[0].care_unit, CareUnit::Medical);
        assert!(stays[0].death_time.is_some());
        assert_eq!(stays[1].intime, None);
        assert_eq!(stays[1].care_unit, CareUnit::Surgical);
    }
}
