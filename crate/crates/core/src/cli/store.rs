//! On-disk artifacts: the per-row curve CSV and one JSON sidecar per curve.
//!
//! CSV columns: `u, h_e, N, t, D_mean, D_stderr, E_mean, n_samples, master_seed`,
//! one row per recorded time. Floats are written with 17 significant digits so a
//! read reproduces every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{CurveKey, CurveStore, DiffusionCurve, EnsembleSpec};
use crate::model::ModelParams;
use crate::scaling::{ScalingDataset, ScalingPoint};
use crate::{Error, Result};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const CSV_HEADER: [&str; 9] = ["u", "h_e", "N", "t", "D_mean", "D_stderr", "E_mean", "n_samples", "master_seed"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub u: f64,
    pub h_e: f64,
    pub n: usize,
    pub t: u64,
    pub d_mean: f64,
    pub d_stderr: f64,
    pub e_mean: f64,
    pub n_samples: usize,
    pub master_seed: u64,
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn rows_for(u: f64, curve: &DiffusionCurve) -> Vec<CurveRow> {
    (0..curve.times.len())
        .map(|k| CurveRow {
            u,
            h_e: curve.params.h_e,
            n: curve.params.n_trunc,
            t: curve.times[k],
            d_mean: curve.d_mean[k],
            d_stderr: curve.d_stderr[k],
            e_mean: curve.e_mean[k],
            n_samples: curve.n_samples,
            master_seed: curve.master_seed,
        })
        .collect()
}

pub fn write_rows<W: Write>(w: W, rows: &[CurveRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            fmt_f64(r.u),
            fmt_f64(r.h_e),
            r.n.to_string(),
            r.t.to_string(),
            fmt_f64(r.d_mean),
            fmt_f64(r.d_stderr),
            fmt_f64(r.e_mean),
            r.n_samples.to_string(),
            r.master_seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_rows(fs::File::create(path)?, rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::InvalidParams(format!("line {line}: cannot parse column {} from {raw:?}", CSV_HEADER[idx])))
}

pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidParams(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        rows.push(CurveRow {
            u: field(&rec, 0, line)?,
            h_e: field(&rec, 1, line)?,
            n: field(&rec, 2, line)?,
            t: field(&rec, 3, line)?,
            d_mean: field(&rec, 4, line)?,
            d_stderr: field(&rec, 5, line)?,
            e_mean: field(&rec, 6, line)?,
            n_samples: field(&rec, 7, line)?,
            master_seed: field(&rec, 8, line)?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<CurveRow>> {
    read_rows(fs::File::open(path)?)
}

/// Control parameter the scaling fit is expressed in.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitVariable {
    /// `u = h_e⁻¹` (the convention of the reported critical point).
    #[default]
    #[serde(rename = "u")]
    U,
    #[serde(rename = "h_e")]
    H_e,
}

impl FitVariable {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "u" => Ok(FitVariable::U),
            "h_e" => Ok(FitVariable::H_e),
            other => Err(Error::InvalidParams(format!("--variable must be u or h_e, got {other:?}"))),
        }
    }

    pub fn of(self, row: &CurveRow) -> f64 {
        match self {
            FitVariable::U => row.u,
            FitVariable::H_e => row.h_e,
        }
    }
}

/// Rows at scaling argument `t/N² = x` whose fit variable lies in `[lo, hi]`.
pub fn dataset_from_rows(rows: &[CurveRow], x: f64, window: (f64, f64), variable: FitVariable) -> Result<ScalingDataset> {
    let points: Vec<ScalingPoint> = rows
        .iter()
        .filter(|r| {
            let n2 = (r.n as f64) * (r.n as f64);
            let v = variable.of(r);
            (r.t as f64 / n2 - x).abs() < 1e-12 && v >= window.0 && v <= window.1
        })
        .map(|r| ScalingPoint { u: variable.of(r), n: r.n as u32, d: r.d_mean, sigma: r.d_stderr })
        .collect();
    if points.is_empty() {
        return Err(Error::Unidentifiable(format!(
            "no rows with t/N^2 = {x} inside {variable:?} window [{}, {}]",
            window.0, window.1
        )));
    }
    ScalingDataset::new(points, x)
}

/// JSON sidecar for one completed curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub code_version: String,
    pub u: f64,
    pub spec: EnsembleSpec,
    pub curve: DiffusionCurve,
}

/// Directory-backed curve store: `<root>/curves/N<N>_u<u>.json`.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("curves"))?;
        Ok(DirStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CurveKey) -> PathBuf {
        self.root.join("curves").join(format!("N{}_u{:.6}.json", key.n_trunc, key.u))
    }

    pub fn read(&self, key: &CurveKey) -> Option<Sidecar> {
        let text = fs::read_to_string(self.path_for(key)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

impl CurveStore for DirStore {
    fn load(&self, key: &CurveKey, spec: &EnsembleSpec, params: &ModelParams) -> Option<DiffusionCurve> {
        let car = self.read(key)?;
        (car.u == key.u && &car.spec == spec && &car.curve.params == params).then_some(car.curve)
    }

    fn save(&self, key: &CurveKey, spec: &EnsembleSpec, curve: &DiffusionCurve) -> Result<()> {
        let car = Sidecar { code_version: CODE_VERSION.to_string(), u: key.u, spec: spec.clone(), curve: curve.clone() };
        let path = self.path_for(key);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&car)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(u: f64, n: usize, t: u64, d: f64) -> CurveRow {
        CurveRow { u, h_e: 1.0 / u, n, t, d_mean: d, d_stderr: 0.01, e_mean: d * t as f64 / (u * u), n_samples: 4, master_seed: 7 }
    }

    #[test]
    fn header_is_checked() {
        let bad = "a,b\n1,2\n";
        assert!(read_rows(bad.as_bytes()).is_err());
    }

    #[test]
    fn dataset_selects_final_time_and_window() {
        let rows = vec![row(2.1, 64, 1024, 0.3), row(2.1, 64, 512, 0.4), row(2.2, 64, 1024, 0.2), row(2.1, 128, 4096, 0.31)];
        let ds = dataset_from_rows(&rows, 0.25, (2.0, 2.15), FitVariable::U).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.points.iter().all(|p| p.u == 2.1));
        assert!(dataset_from_rows(&rows, 0.25, (3.0, 4.0), FitVariable::U).is_err());
        let ds = dataset_from_rows(&rows, 0.25, (0.46, 0.48), FitVariable::H_e).unwrap();
        assert_eq!(ds.points[0].u, 1.0 / 2.1);
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
