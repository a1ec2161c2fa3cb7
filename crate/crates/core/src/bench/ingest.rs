//! Discrete-arm replay ingestion: long-format sensor CSV in, normalized
//! replay matrix and empirical covariance kernel out. Normalization and the
//! covariance come from the training split only.

use std::io::{Read, Write};
use std::path::Path;

use crate::linalg::Matrix;
use crate::{Error, Result};

use super::output::fmt_sig9;

pub const ARMS_CSV_HEADER: [&str; 3] = ["arm_id", "time_index", "value"];

/// Replay dataset over discrete arms. Rows are time-major: `rows[i][a]` is
/// the z-scored reading of arm `a` at the i-th kept timestep of the split.
#[derive(Clone, Debug)]
pub struct ArmsReplayDataset {
    /// Distinct arm ids, ascending; column order of every matrix here.
    pub arm_ids: Vec<i64>,
    /// Kept timesteps of the training split, ascending.
    pub train_times: Vec<i64>,
    /// Kept timesteps of the test split, ascending.
    pub test_times: Vec<i64>,
    /// Per-arm mean of the raw training split.
    pub means: Vec<f64>,
    /// Per-arm population standard deviation of the raw training split.
    pub stds: Vec<f64>,
    pub train_rows: Vec<Vec<f64>>,
    pub test_rows: Vec<Vec<f64>>,
    /// Empirical covariance of the z-scored training rows.
    pub covariance: Matrix<f64>,
}

impl ArmsReplayDataset {
    pub fn n_arms(&self) -> usize {
        self.arm_ids.len()
    }
}

pub fn ingest_arms_csv(
    path: &Path,
    train_range: [i64; 2],
    test_range: [i64; 2],
) -> Result<ArmsReplayDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.display())))?;
    ingest_arms_reader(file, train_range, test_range)
}

pub fn ingest_arms_reader<R: Read>(
    reader: R,
    train_range: [i64; 2],
    test_range: [i64; 2],
) -> Result<ArmsReplayDataset> {
    for (name, r) in [("train", train_range), ("test", test_range)] {
        if r[0] > r[1] {
            return Err(Error::Ingest(format!("{name} range {r:?} is empty")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Ingest("empty file, expected arm_id,time_index,value".into()))??;
    if header.len() != 3 || header.iter().zip(ARMS_CSV_HEADER).any(|(got, want)| got != want) {
        return Err(Error::Ingest(format!(
            "bad header {:?}, expected arm_id,time_index,value",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    // (arm, time) -> value, with duplicates rejected.
    let mut cells: std::collections::BTreeMap<(i64, i64), f64> = std::collections::BTreeMap::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 3 {
            return Err(Error::Ingest(format!(
                "line {line}: expected 3 fields, got {}",
                record.len()
            )));
        }
        let arm: i64 = record[0]
            .parse()
            .map_err(|_| Error::Ingest(format!("line {line}: bad arm_id {:?}", &record[0])))?;
        let time: i64 = record[1]
            .parse()
            .map_err(|_| Error::Ingest(format!("line {line}: bad time_index {:?}", &record[1])))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| Error::Ingest(format!("line {line}: bad value {:?}", &record[2])))?;
        if !value.is_finite() {
            return Err(Error::Ingest(format!("line {line}: non-finite value")));
        }
        if cells.insert((arm, time), value).is_some() {
            return Err(Error::Ingest(format!(
                "line {line}: duplicate reading for arm {arm} at time {time}"
            )));
        }
    }
    if cells.is_empty() {
        return Err(Error::Ingest("no data rows".into()));
    }

    let mut arm_ids: Vec<i64> = cells.keys().map(|&(a, _)| a).collect();
    arm_ids.dedup();
    let mut times: Vec<i64> = cells.keys().map(|&(_, t)| t).collect();
    times.sort_unstable();
    times.dedup();

    // Forward-fill each arm across the global time axis; timesteps before
    // every arm has reported at least once are dropped.
    let n_arms = arm_ids.len();
    let mut filled: Vec<(i64, Vec<f64>)> = Vec::with_capacity(times.len());
    let mut last: Vec<Option<f64>> = vec![None; n_arms];
    for &t in &times {
        for (a, &arm) in arm_ids.iter().enumerate() {
            if let Some(&v) = cells.get(&(arm, t)) {
                last[a] = Some(v);
            }
        }
        if last.iter().all(|v| v.is_some()) {
            filled.push((t, last.iter().map(|v| v.unwrap()).collect()));
        }
    }
    if filled.is_empty() {
        return Err(Error::Ingest(
            "no timestep has readings for every arm, even after forward-filling".into(),
        ));
    }

    let split = |range: [i64; 2]| -> (Vec<i64>, Vec<Vec<f64>>) {
        filled
            .iter()
            .filter(|(t, _)| (range[0]..=range[1]).contains(t))
            .map(|(t, row)| (*t, row.clone()))
            .unzip()
    };
    let (train_times, train_raw) = split(train_range);
    let (test_times, test_raw) = split(test_range);
    if train_raw.is_empty() {
        return Err(Error::Ingest(format!(
            "training range {train_range:?} covers no kept timesteps"
        )));
    }
    if test_raw.is_empty() {
        return Err(Error::Ingest(format!(
            "test range {test_range:?} covers no kept timesteps"
        )));
    }

    let n_train = train_raw.len() as f64;
    let mut means = vec![0.0f64; n_arms];
    for row in &train_raw {
        for (a, v) in row.iter().enumerate() {
            means[a] += v;
        }
    }
    for m in &mut means {
        *m /= n_train;
    }
    let mut stds = vec![0.0f64; n_arms];
    for row in &train_raw {
        for (a, v) in row.iter().enumerate() {
            let d = v - means[a];
            stds[a] += d * d;
        }
    }
    for (a, s) in stds.iter_mut().enumerate() {
        *s = (*s / n_train).sqrt();
        if *s < 1e-12 {
            return Err(Error::Ingest(format!(
                "arm {} has zero variance on the training split",
                arm_ids[a]
            )));
        }
    }

    let zscore = |raw: &[Vec<f64>]| -> Vec<Vec<f64>> {
        raw.iter()
            .map(|row| {
                row.iter().enumerate().map(|(a, v)| (v - means[a]) / stds[a]).collect()
            })
            .collect()
    };
    let train_rows = zscore(&train_raw);
    let test_rows = zscore(&test_raw);

    let mut covariance = Matrix::zeros(n_arms, n_arms);
    for row in &train_rows {
        for i in 0..n_arms {
            for j in 0..=i {
                *covariance.at_mut(i, j) += row[i] * row[j];
            }
        }
    }
    for i in 0..n_arms {
        for j in 0..=i {
            let v = covariance.at(i, j) / n_train;
            *covariance.at_mut(i, j) = v;
            *covariance.at_mut(j, i) = v;
        }
    }

    Ok(ArmsReplayDataset {
        arm_ids,
        train_times,
        test_times,
        means,
        stds,
        train_rows,
        test_rows,
        covariance,
    })
}

/// Header-free square matrix CSV, loadable as an empirical kernel.
pub fn write_covariance_csv<W: Write>(writer: W, matrix: &Matrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..matrix.rows() {
        let row: Vec<String> = (0..matrix.cols()).map(|j| fmt_sig9(matrix.at(i, j))).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
