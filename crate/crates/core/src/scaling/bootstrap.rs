use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, FitConfig, ScalingDataset, ScalingFit};
use crate::rng::stream;
use crate::summation::sample_std;
use crate::{Error, Result};

pub const MIN_BOOT: usize = 100;
pub const MIN_POINTS_PER_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Standard deviation of `(u_c, ν, a_0, …)` over the replicas.
    pub stddev: Vec<f64>,
    pub replicas: usize,
    pub failed: usize,
    pub seed: u64,
}

/// Resamples every size stratum with replacement, refits from the base optimum
/// and returns the spread of the refitted parameters.
pub fn bootstrap_errors(
    dataset: &ScalingDataset,
    base: &ScalingFit,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if n_boot < MIN_BOOT {
        return Err(Error::InvalidParams(format!("need at least {MIN_BOOT} bootstrap replicas, got {n_boot}")));
    }
    for (&n, &count) in &dataset.counts_by_size() {
        if count < MIN_POINTS_PER_SIZE {
            return Err(Error::TooFewPoints { n, count, min: MIN_POINTS_PER_SIZE });
        }
    }
    let strata: Vec<Vec<usize>> = dataset
        .counts_by_size()
        .keys()
        .map(|&n| (0..dataset.len()).filter(|&i| dataset.points[i].n == n).collect())
        .collect();
    let config = FitConfig::from_start(base.k_max, base.u_c, base.nu);

    let replicas: Vec<Option<Vec<f64>>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let points = strata
                .iter()
                .flat_map(|idx| (0..idx.len()).map(|_| dataset.points[idx[rng.gen_range(0..idx.len())]]).collect::<Vec<_>>())
                .collect();
            let sample = ScalingDataset { points, x: dataset.x };
            fit(&sample, &config).ok().map(|f| f.parameter_vector())
        })
        .collect();

    let ok: Vec<&Vec<f64>> = replicas.iter().flatten().collect();
    let failed = n_boot - ok.len();
    if ok.len() < 2 || failed * 2 > n_boot {
        return Err(Error::NoConvergence(format!("{failed} of {n_boot} bootstrap refits failed")));
    }
    let n_params = base.k_max + 3;
    let stddev = (0..n_params)
        .map(|i| sample_std(&ok.iter().map(|v| v[i]).collect::<Vec<_>>()))
        .collect();
    Ok(BootstrapSummary { stddev, replicas: ok.len(), failed, seed })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    #[test]
    fn noiseless_bootstrap_is_tight() {
        let truth = FitParams { u_c: 2.13, nu: 2.6, coeffs: vec![0.325, -0.2, 0.05] };
        let data = synthetic_dataset(&truth, &[64, 128, 256], &linspace(2.10, 2.16, 13), 0.0, 0).unwrap();
        let f = fit(&data, &FitConfig::for_dataset(&data, 2)).unwrap();
        let b = bootstrap_errors(&data, &f, 100, 9).unwrap();
        assert_eq!(b.failed, 0);
        assert!(b.stddev.iter().all(|s| *s < 1e-5), "{b:?}");
    }

    #[test]
    fn guards() {
        let truth = FitParams { u_c: 2.13, nu: 2.6, coeffs: vec![0.325, -0.2] };
        let data = synthetic_dataset(&truth, &[64, 128], &linspace(2.10, 2.16, 3), 0.0, 0).unwrap();
        let f = fit(&data, &FitConfig::for_dataset(&data, 1)).unwrap();
        assert!(matches!(bootstrap_errors(&data, &f, 100, 1), Err(Error::TooFewPoints { count: 3, .. })));
        assert!(matches!(bootstrap_errors(&data, &f, 99, 1), Err(Error::InvalidParams(_))));
    }
}
