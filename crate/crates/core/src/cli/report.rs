//! Fit report and collapse export.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::{fmt_f64, FitVariable, CODE_VERSION};
use crate::scaling::{BootstrapSummary, CollapsePoint, KmaxSelection, ScalingFit};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub u_c: f64,
    pub nu: f64,
    pub sigma_star: f64,
    pub coeffs: Vec<f64>,
    pub chi2: f64,
    pub chi2_dof: f64,
    pub dof: usize,
    pub k_max: usize,
    /// `(k, χ²/dof)` for each order tried.
    pub k_scan: Vec<(usize, f64)>,
    pub parameter_names: Vec<String>,
    /// Gauss-approximation errors on `(u_c, ν, a_0, …)`.
    pub covariance_err: Vec<f64>,
    /// Bootstrap errors on the same vector.
    pub bootstrap_err: Vec<f64>,
    pub n_boot: usize,
    pub boot_failed: usize,
    pub n_points: usize,
    /// Fit variable the window and `u_c` refer to.
    pub variable: FitVariable,
    pub window: [f64; 2],
    /// Scaling argument `t/N²` of the fitted rows.
    pub x: f64,
    pub seed: u64,
    pub code_version: String,
}

impl FitReport {
    pub fn new(sel: &KmaxSelection, boot: &BootstrapSummary, variable: FitVariable, window: (f64, f64), x: f64) -> Self {
        let f: &ScalingFit = &sel.fit;
        FitReport {
            u_c: f.u_c,
            nu: f.nu,
            sigma_star: f.sigma_star,
            coeffs: f.coeffs.clone(),
            chi2: f.chi2,
            chi2_dof: f.chi2_dof,
            dof: f.dof,
            k_max: f.k_max,
            k_scan: sel.scanned.clone(),
            parameter_names: f.parameter_names(),
            covariance_err: f.param_err.clone(),
            bootstrap_err: boot.stddev.clone(),
            n_boot: boot.replicas + boot.failed,
            boot_failed: boot.failed,
            n_points: f.n_points,
            variable,
            window: [window.0, window.1],
            x,
            seed: boot.seed,
            code_version: CODE_VERSION.to_string(),
        }
    }

    /// The fit the report describes (for re-exporting a collapse).
    pub fn to_fit(&self) -> ScalingFit {
        ScalingFit {
            u_c: self.u_c,
            nu: self.nu,
            coeffs: self.coeffs.clone(),
            sigma_star: self.sigma_star,
            covariance: vec![],
            param_err: self.covariance_err.clone(),
            bootstrap_err: Some(self.bootstrap_err.clone()),
            chi2: self.chi2,
            chi2_dof: self.chi2_dof,
            dof: self.dof,
            k_max: self.k_max,
            n_points: self.n_points,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write_summary(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let err = |i: usize| self.bootstrap_err.get(i).copied().unwrap_or(f64::NAN);
        let cov = |i: usize| self.covariance_err.get(i).copied().unwrap_or(f64::NAN);
        writeln!(out, "window      {:?} in [{}, {}]  ({} points, k_max = {})", self.variable, self.window[0], self.window[1], self.n_points, self.k_max)?;
        writeln!(out, "critical    {:.6} ± {:.6} (boot)  ± {:.6} (cov)", self.u_c, err(0), cov(0))?;
        writeln!(out, "nu          {:.4} ± {:.4} (boot)  ± {:.4} (cov)", self.nu, err(1), cov(1))?;
        writeln!(out, "sigma*      {:.5} ± {:.5} (boot)  ± {:.5} (cov)", self.sigma_star, err(2), cov(2))?;
        writeln!(out, "chi2/dof    {:.4}  (dof = {})", self.chi2_dof, self.dof)?;
        writeln!(out, "bootstrap   {} replicas, {} failed, seed {}", self.n_boot, self.boot_failed, self.seed)
    }
}

pub fn write_collapse(path: &Path, points: &[CollapsePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y", "D", "sigma_D", "N", "u"])?;
    for p in points {
        w.write_record([fmt_f64(p.y), fmt_f64(p.d), fmt_f64(p.sigma), p.n.to_string(), fmt_f64(p.u)])?;
    }
    w.flush()?;
    Ok(())
}
