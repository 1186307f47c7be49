//! JSONL serialization for offline datasets and test sets.
//!
//! The first line is a header record `{d_x, n_actions, T, tau,
//! schedule_descriptor, seed}`; each following line is one datapoint
//! `{x, winner, loser, t, label}` (or `{x, a1, a2, p_a1}` for test pairs).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{
    Action, Context, EnvConfig, EnvError, OfflineDataset, PreferenceDatapoint, TestPair,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetHeader {
    pub d_x: usize,
    pub n_actions: u32,
    #[serde(rename = "T")]
    pub horizon: u32,
    pub tau: f64,
    pub schedule_descriptor: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct TrainRecord {
    x: Vec<f64>,
    winner: u32,
    loser: u32,
    t: u32,
    label: u8,
}

#[derive(Serialize, Deserialize)]
struct TestRecord {
    x: Vec<f64>,
    a1: u32,
    a2: u32,
    p_a1: f64,
}

pub fn write_dataset<W: Write>(
    mut w: W,
    header: &DatasetHeader,
    dataset: &OfflineDataset,
) -> Result<(), EnvError> {
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    for p in dataset.points() {
        let rec = TrainRecord {
            x: p.context.coords().iter().cloned().collect(),
            winner: p.winner.0,
            loser: p.loser.0,
            t: p.t,
            label: p.label,
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<(DatasetHeader, OfflineDataset), EnvError> {
    let mut lines = BufReader::new(r).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| EnvError::MalformedDataset("empty file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    let env = EnvConfig::new(header.d_x, header.n_actions)?;
    let mut points = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrainRecord = serde_json::from_str(&line)?;
        let context = Context::new(rec.x)?;
        if context.dim() != header.d_x {
            return Err(EnvError::DimensionMismatch {
                got: context.dim(),
                expected: header.d_x,
            });
        }
        points.push(PreferenceDatapoint::new(
            context,
            env.check_action(Action(rec.winner))?,
            env.check_action(Action(rec.loser))?,
            rec.t,
            rec.label,
        )?);
    }
    let dataset = OfflineDataset::new(points, header.horizon)?;
    Ok((header, dataset))
}

pub fn write_test_set<W: Write>(
    mut w: W,
    header: &DatasetHeader,
    rows: &[TestPair],
) -> Result<(), EnvError> {
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    for row in rows {
        let rec = TestRecord {
            x: row.context.coords().iter().cloned().collect(),
            a1: row.a1.0,
            a2: row.a2.0,
            p_a1: row.p_a1,
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}

pub fn read_test_set<R: Read>(r: R) -> Result<(DatasetHeader, Vec<TestPair>), EnvError> {
    let mut lines = BufReader::new(r).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| EnvError::MalformedDataset("empty file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TestRecord = serde_json::from_str(&line)?;
        rows.push(TestPair {
            context: Context::new(rec.x)?,
            a1: Action(rec.a1),
            a2: Action(rec.a2),
            p_a1: rec.p_a1,
        });
    }
    Ok((header, rows))
}

pub fn write_dataset_file(
    path: &Path,
    header: &DatasetHeader,
    dataset: &OfflineDataset,
) -> Result<(), EnvError> {
    write_dataset(BufWriter::new(File::create(path)?), header, dataset)
}

pub fn read_dataset_file(path: &Path) -> Result<(DatasetHeader, OfflineDataset), EnvError> {
    read_dataset(File::open(path)?)
}

pub fn write_test_set_file(
    path: &Path,
    header: &DatasetHeader,
    rows: &[TestPair],
) -> Result<(), EnvError> {
    write_test_set(BufWriter::new(File::create(path)?), header, rows)
}

pub fn read_test_set_file(path: &Path) -> Result<(DatasetHeader, Vec<TestPair>), EnvError> {
    read_test_set(File::open(path)?)
}
