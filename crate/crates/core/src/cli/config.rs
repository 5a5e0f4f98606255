//! Run configuration: an optional flat JSON file whose keys are the long flag
//! names, overridden key by key by flags given on the command line.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ensemble::EnsembleSpec;
use crate::evolve::InitialKind;
use crate::model::ModelParams;
use crate::{Error, Result};

pub const OUT_ENV: &str = "QKR_OUT";
pub const DEFAULT_OUT: &str = "qkr-out";

/// Comma separated string or JSON array.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ListValue<T> {
    Items(Vec<T>),
    Text(String),
}

impl<T: std::str::FromStr + Clone> ListValue<T> {
    pub fn items(&self, key: &str) -> Result<Vec<T>> {
        match self {
            ListValue::Items(v) => Ok(v.clone()),
            ListValue::Text(s) => parse_list(s, key),
        }
    }
}

/// `"64, 128,256"` → `[64, 128, 256]`; the empty string gives an empty list.
pub fn parse_list<T: std::str::FromStr>(text: &str, key: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidParams(format!("--{key}: cannot parse {s:?}"))))
        .collect()
}

/// `"LO,HI"` with `LO <= HI`.
pub fn parse_pair<T: std::str::FromStr + PartialOrd + Copy>(text: &str, key: &str) -> Result<(T, T)> {
    match parse_list::<T>(text, key)?.as_slice() {
        &[lo, hi] if lo <= hi => Ok((lo, hi)),
        _ => Err(Error::InvalidParams(format!("--{key} expects LO,HI with LO <= HI, got {text:?}"))),
    }
}

/// Everything a config file may contain. Keys match the long flag names.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigFile {
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub u_step: Option<f64>,
    pub sizes: Option<ListValue<usize>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub mu: Option<f64>,
    pub omega: Option<f64>,
    pub dz_factor: Option<f64>,
    pub init: Option<String>,
    pub t_final: Option<u64>,
    pub window: Option<ListValue<f64>>,
    pub kmax_range: Option<ListValue<usize>>,
    pub boot: Option<usize>,
    pub variable: Option<String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParams(format!("config {}: {e}", path.display())))
    }
}

pub fn parse_init(name: &str) -> Result<InitialKind> {
    match name {
        "delta" => Ok(InitialKind::Delta),
        "gaussian" => Ok(InitialKind::GAUSSIAN_DEFAULT),
        other => Err(Error::InvalidParams(format!("--init must be delta or gaussian, got {other:?}"))),
    }
}

/// `u_min, u_min + step, …, u_max`, rounded to 1e-9 so decimal grids stay decimal.
pub fn u_grid(u_min: f64, u_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(u_min > 0.0 && u_max >= u_min && u_max.is_finite()) {
        return Err(Error::InvalidParams(format!("u grid needs 0 < u-min <= u-max, got [{u_min}, {u_max}]")));
    }
    if u_max == u_min {
        return Ok(vec![u_min]);
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("--u-step must be positive, got {step}")));
    }
    let count = ((u_max - u_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((u_min + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Fully resolved sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub u_grid: Vec<f64>,
    pub sizes: Vec<usize>,
    /// `h_e` and `n_trunc` are filled per sweep point.
    pub template: ModelParams,
    pub spec: EnsembleSpec,
    pub out_dir: PathBuf,
    pub workers: usize,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Output directory: flag, then config file, then `$QKR_OUT`, then `qkr-out`.
pub fn resolve_out(cli: Option<&PathBuf>, file: Option<&PathBuf>, env: Option<PathBuf>) -> PathBuf {
    cli.or(file).cloned().or(env).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn env_out() -> Option<PathBuf> {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

impl RunConfig {
    /// Merges `cli` over `file`.
    pub fn resolve(cli: &ConfigFile, file: &ConfigFile, env: Option<PathBuf>) -> Result<Self> {
        let u_min = cli.u_min.or(file.u_min).ok_or_else(|| Error::InvalidParams("--u-min is required".into()))?;
        let u_max = cli.u_max.or(file.u_max).unwrap_or(u_min);
        let step = cli.u_step.or(file.u_step).unwrap_or(0.0);
        let grid = u_grid(u_min, u_max, step)?;

        let sizes = match cli.sizes.as_ref().or(file.sizes.as_ref()) {
            Some(v) => v.items("sizes")?,
            None => vec![],
        };
        if sizes.is_empty() {
            return Err(Error::InvalidParams("--sizes must list at least one N".into()));
        }

        let mut template = ModelParams::new(1.0, sizes[0])?;
        if let Some(mu) = cli.mu.or(file.mu) {
            template.mu = mu;
        }
        if let Some(omega) = cli.omega.or(file.omega) {
            template.omega = omega;
        }
        if let Some(dz) = cli.dz_factor.or(file.dz_factor) {
            template.dz_factor = dz;
        }
        for &n in &sizes {
            ModelParams { n_trunc: n, ..template.clone() }.validate()?;
        }

        let init = parse_init(cli.init.as_deref().or(file.init.as_deref()).unwrap_or("delta"))?;
        let mut spec = EnsembleSpec::new(cli.samples.or(file.samples).unwrap_or(400), cli.seed.or(file.seed).unwrap_or(0), init);
        spec.t_final = cli.t_final.or(file.t_final);
        spec.validate()?;

        let workers = cli.workers.or(file.workers).unwrap_or_else(default_workers);
        if workers == 0 {
            return Err(Error::InvalidParams("--workers must be at least 1".into()));
        }
        Ok(RunConfig {
            u_grid: grid,
            sizes,
            template,
            spec,
            out_dir: resolve_out(cli.out.as_ref(), file.out.as_ref(), env),
            workers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_decimal() {
        let g = u_grid(2.10, 2.16, 0.005).unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g[2], 2.11);
        assert_eq!(*g.last().unwrap(), 2.16);
        assert_eq!(u_grid(1.5, 1.5, 0.0).unwrap(), vec![1.5]);
        assert!(u_grid(2.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile =
            serde_json::from_str(r#"{"u-min": 2.0, "u-max": 2.2, "u-step": 0.1, "sizes": [8, 16], "samples": 10, "seed": 5, "out": "from-file"}"#)
                .unwrap();
        let cli = ConfigFile { samples: Some(20), sizes: Some(ListValue::Text("32".into())), ..Default::default() };
        let cfg = RunConfig::resolve(&cli, &file, Some("from-env".into())).unwrap();
        assert_eq!(cfg.sizes, vec![32]);
        assert_eq!(cfg.spec.n_samples, 20);
        assert_eq!(cfg.spec.master_seed, 5);
        assert_eq!(cfg.u_grid, vec![2.0, 2.1, 2.2]);
        assert_eq!(cfg.out_dir, PathBuf::from("from-file"));
        let cfg = RunConfig::resolve(&cli, &ConfigFile { out: None, ..file }, Some("from-env".into())).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("from-env"));
    }

    #[test]
    fn empty_sizes_rejected() {
        let cli = ConfigFile { u_min: Some(2.0), sizes: Some(ListValue::Text(String::new())), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&cli, &ConfigFile::default(), None), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"sample": 3}"#).is_err());
    }
}
