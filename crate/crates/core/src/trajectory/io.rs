//! Trajectory CSV with header `t,u1..um,x1..xn[,y1..ym]` and a JSON sidecar.
//!
//! The final row carries the terminal state only; its input cells are empty.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TrajectoryRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub h: f64,
    pub n: usize,
    pub m: usize,
    pub has_outputs: bool,
    pub meta: BTreeMap<String, String>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn header(n: usize, m: usize, outputs: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.extend((1..=n).map(|i| format!("x{i}")));
    if outputs {
        h.extend((1..=m).map(|i| format!("y{i}")));
    }
    h
}

pub fn write_csv(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    let (n, m) = (record.n(), record.m());
    let has_y = record.outputs.is_some();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header(n, m, has_y)).map_err(csv_err)?;
    for k in 0..record.states.ncols() {
        let mut row = vec![record.times[k].to_string()];
        for i in 0..m {
            row.push(if k < record.len() { record.inputs[(i, k)].to_string() } else { String::new() });
        }
        row.extend((0..n).map(|i| record.states[(i, k)].to_string()));
        if let Some(y) = &record.outputs {
            row.extend((0..m).map(|i| y[(i, k)].to_string()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    let side = Sidecar { h: record.h, n, m, has_outputs: has_y, meta: record.meta.clone() };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

/// Infers `(n, m, has_outputs)` from the header, reporting the first
/// missing column name.
fn layout_from_header(cols: &[String], side: Option<&Sidecar>) -> Result<(usize, usize, bool)> {
    let count = |p: char| {
        cols.iter()
            .filter_map(|c| c.strip_prefix(p).and_then(|r| r.parse::<usize>().ok()))
            .max()
            .unwrap_or(0)
    };
    let (n, m, has_y) = match side {
        Some(s) => (s.n, s.m, s.has_outputs),
        None => (count('x'), count('u').max(count('y')), count('y') > 0),
    };
    let expected = header(n, m, has_y);
    for name in &expected {
        if !cols.contains(name) {
            return Err(Error::Parse { line: 1, msg: format!("missing column '{name}'") });
        }
    }
    if cols.len() != expected.len() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected {} columns, found {}", expected.len(), cols.len()),
        });
    }
    if cols != expected.as_slice() {
        return Err(Error::Parse { line: 1, msg: format!("columns out of order; expected {}", expected.join(",")) });
    }
    Ok((n, m, has_y))
}

/// Reads a trajectory CSV; the sidecar, when present, fixes the dimensions
/// and sampling interval.
pub fn read_csv(path: &Path) -> Result<TrajectoryRecord> {
    let side: Option<Sidecar> = match fs::read_to_string(sidecar_path(path)) {
        Ok(s) => Some(serde_json::from_str(&s)?),
        Err(_) => None,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_err)?;
    let cols: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    let (n, m, has_y) = layout_from_header(&cols, side.as_ref())?;

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != cols.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields, found {}", cols.len(), rec.len()) });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let f = f.trim();
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Parse { line, msg: format!("column '{}': cannot parse '{f}'", cols[j]) })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    if rows.len() < 2 {
        return Err(Error::Parse { line: rows.len() + 1, msg: "need at least two samples".into() });
    }
    let total = rows.len();
    let get = |k: usize, j: usize, allow_empty: bool| -> Result<f64> {
        match rows[k][j] {
            Some(v) => Ok(v),
            None if allow_empty => Ok(0.0),
            None => Err(Error::Parse { line: k + 2, msg: format!("empty value in column '{}'", cols[j]) }),
        }
    };
    let mut inputs = DMatrix::zeros(m, total - 1);
    let mut states = DMatrix::zeros(n, total);
    let mut outputs = has_y.then(|| DMatrix::zeros(m, total));
    let mut times = Vec::with_capacity(total);
    for k in 0..total {
        times.push(get(k, 0, false)?);
        for i in 0..m {
            let v = get(k, 1 + i, k == total - 1)?;
            if k < total - 1 {
                inputs[(i, k)] = v;
            }
        }
        for i in 0..n {
            states[(i, k)] = get(k, 1 + m + i, false)?;
        }
        if let Some(y) = outputs.as_mut() {
            for i in 0..m {
                y[(i, k)] = get(k, 1 + m + n + i, false)?;
            }
        }
    }
    let h = match &side {
        Some(s) => s.h,
        None => times[1] - times[0],
    };
    for k in 1..total {
        let dt = times[k] - times[k - 1];
        if (dt - h).abs() > 1e-9 * h.abs().max(1.0) * k as f64 {
            return Err(Error::Parse { line: k + 2, msg: format!("non-uniform time step {dt} (h = {h})") });
        }
    }
    let mut rec = TrajectoryRecord::new(inputs, states, outputs, h, times[0])?;
    rec.times = times;
    if let Some(s) = side {
        rec.meta = s.meta;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryRecord {
        let mut r = TrajectoryRecord::new(
            DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, -1.0, 1e-17, 2.5]),
            DMatrix::from_row_slice(2, 4, &[0.0, 1.0 / 3.0, 0.5, 0.25, 1.0, 2.0, 3.0, 4.0]),
            Some(DMatrix::from_row_slice(2, 4, &[0.0, 1.0 / 3.0, 0.5, 0.25, 1.0, 2.0, 3.0, 4.0])),
            0.4,
            0.0,
        )
        .unwrap();
        r.meta.insert("device".into(), "cd".into());
        r
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let r = sample();
        write_csv(&r, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.inputs, r.inputs);
        assert_eq!(back.states, r.states);
        assert_eq!(back.outputs, r.outputs);
        assert_eq!(back.h, r.h);
        assert_eq!(back.meta, r.meta);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,u1,u2,x1,x2,y1,y2\n"));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        write_csv(&sample(), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let cut: String = text
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(4);
                f.join(",") + "\n"
            })
            .collect();
        fs::write(&p, cut).unwrap();
        match read_csv(&p) {
            Err(Error::Parse { line: 1, msg }) => assert!(msg.contains("'x2'"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        // without a sidecar, gaps in the numbering are still detected
        fs::remove_file(sidecar_path(&p)).unwrap();
        let cut: String = text
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(1);
                f.join(",") + "\n"
            })
            .collect();
        fs::write(&p, cut).unwrap();
        match read_csv(&p) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("'u1'"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "t,u1,x1\n0,1,0\n1,abc,1\n2,,2\n").unwrap();
        match read_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
