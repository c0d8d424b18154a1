//! Plain-text formats: long-format curve CSV, kernel matrices as CSV with a
//! JSON header, and basis descriptions as JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisJson, GridSamples, KernelMatrix};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Reads `t,series,u,<value_name>` rows into grid samples. Day and series
/// labels are integers, mapped to positions in sorted order; every
/// `(t, series)` pair must be observed on the same grid.
pub fn read_long_csv<R: Read>(reader: R, value_name: &str) -> Result<GridSamples<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["t", "series", "u", value_name];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "expected header `t,series,u,{value_name}`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<(i64, i64, f64, f64)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_err = |what: &str| Error::Schema(format!("row {}: cannot parse {what}", line + 2));
        if rec.len() != 4 {
            return Err(Error::Schema(format!("row {}: expected 4 fields, found {}", line + 2, rec.len())));
        }
        let t: i64 = rec[0].parse().map_err(|_| parse_err("t"))?;
        let s: i64 = rec[1].parse().map_err(|_| parse_err("series"))?;
        let u: f64 = rec[2].parse().map_err(|_| parse_err("u"))?;
        let v: f64 = rec[3].parse().map_err(|_| parse_err(value_name))?;
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::Schema(format!("row {}: non-finite value", line + 2)));
        }
        rows.push((t, s, u, v));
    }
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    let days: BTreeSet<i64> = rows.iter().map(|r| r.0).collect();
    let series: BTreeSet<i64> = rows.iter().map(|r| r.1).collect();
    let mut grid: Vec<f64> = rows.iter().map(|r| r.2).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let day_ix: BTreeMap<i64, usize> = days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let ser_ix: BTreeMap<i64, usize> = series.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let (n, p, g) = (days.len(), series.len(), grid.len());
    if rows.len() != n * p * g {
        return Err(Error::Schema(format!(
            "{} rows do not form a complete {n} days x {p} series x {g} grid points panel",
            rows.len()
        )));
    }
    let mut data = DMatrix::from_element(n, p * g, f64::NAN);
    for (t, s, u, v) in rows {
        let gi = grid.partition_point(|x| *x < u);
        let (ti, si) = (day_ix[&t], ser_ix[&s]);
        let slot = &mut data[(ti, si * g + gi)];
        if !slot.is_nan() {
            return Err(Error::Schema(format!("duplicate observation at t={t}, series={s}, u={u}")));
        }
        *slot = v;
    }
    if data.iter().any(|v| v.is_nan()) {
        return Err(Error::Schema("panel has missing observations".into()));
    }
    GridSamples::new(n, p, grid, data)
}

pub fn read_long_csv_path(path: &Path, value_name: &str) -> Result<GridSamples<f64>> {
    read_long_csv(File::open(path)?, value_name)
}

pub fn write_long_csv<W: Write>(writer: W, samples: &GridSamples<f64>, value_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "series", "u", value_name])?;
    for t in 0..samples.n() {
        for i in 0..samples.p() {
            for (gi, u) in samples.grid().iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), u.to_string(), samples.value(t, i, gi).to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a dense matrix as headerless CSV.
pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Schema(format!("row {} has {} columns", rows + 1, rec.len())));
        }
        for f in rec.iter() {
            values.push(f.parse::<f64>().map_err(|_| Error::Schema(format!("cannot parse `{f}` as a number")))?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

/// JSON header stored next to a kernel-matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelHeader {
    pub schema_version: u32,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub basis: BasisJson,
}

pub fn write_kernel(csv_path: &Path, json_path: &Path, m: &KernelMatrix<f64>, basis: &BasisJson) -> Result<()> {
    write_matrix_csv(File::create(csv_path)?, m.flat())?;
    let header = KernelHeader { schema_version: SCHEMA_VERSION, p: m.p_rows(), k: m.k(), basis: basis.clone() };
    write_json(json_path, &header)
}

pub fn read_kernel(csv_path: &Path, json_path: &Path) -> Result<(KernelMatrix<f64>, KernelHeader)> {
    let header: KernelHeader = read_json(json_path)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!("unsupported schema version {}", header.schema_version)));
    }
    let mat = read_matrix_csv(File::open(csv_path)?)?;
    let dim = header.p * header.k;
    if mat.shape() != (dim, dim) {
        return Err(Error::Schema(format!("kernel CSV is {:?}, header implies {dim}x{dim}", mat.shape())));
    }
    Ok((KernelMatrix::square(header.p, header.k, mat)?, header))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let f = File::open(path)?;
    serde_json::from_reader(f).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}
