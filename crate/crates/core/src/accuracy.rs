//! Accuracy of truncated sampling formulae against the exact sampling
//! distribution, tallied as the cumulative distribution of relative errors
//! over all fully observed samples that are dimorphic at both loci.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{first_order_series, pade_or_partial_sum, SeriesTable};
use crate::error::{Error, Result};
use crate::gaussian::GaussianSeriesEngine;
use crate::model::{compositions, validate_params, ModelParams, SampleConfig};
use crate::oracle::{relative_error, ExactCache, PimBlockSolver, SolveOptions};

/// Error thresholds, in percent, at which the cumulative distribution is read.
pub const THRESHOLDS: [f64; 3] = [1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumMethod {
    /// Partial sum of the true expansion (orders 0 and 1 only).
    True,
    /// Truncation of the Gaussian-model series.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyOptions {
    /// Sample size.
    pub n: u32,
    /// Biallelic model; its `rho` is replaced by each entry of `rhos`.
    pub base: ModelParams,
    pub rhos: Vec<f64>,
    pub lambdas: Vec<usize>,
    pub solve: SolveOptions,
}

impl AccuracyOptions {
    /// Symmetric biallelic PIM model with mutation rate `theta` at both loci.
    pub fn new(n: u32, theta: f64) -> Self {
        AccuracyOptions {
            n,
            base: ModelParams::symmetric(2, 2, theta, 1.0),
            rhos: vec![25.0, 50.0, 100.0, 200.0],
            lambdas: vec![0, 1, 2, 4, 6],
            solve: SolveOptions::default(),
        }
    }

    pub fn params(&self, rho: f64) -> ModelParams {
        self.base.with_rho(rho)
    }
}

/// Relative error of one approximation for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigError {
    pub config: String,
    pub rho: f64,
    pub lambda: usize,
    pub method: SumMethod,
    pub q_exact: f64,
    pub approx: f64,
    /// Percent relative error.
    pub error: f64,
    pub pade_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub rho: f64,
    pub lambda: usize,
    pub method: SumMethod,
    /// Number of configurations with error below each threshold.
    pub below: [usize; 3],
    pub total: usize,
    pub phi: [f64; 3],
    pub pade_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub n: u32,
    pub params: ModelParams,
    pub configs: usize,
    pub rows: Vec<Table1Row>,
    pub errors: Vec<ConfigError>,
}

impl Table1Report {
    pub fn row(&self, rho: f64, lambda: usize, method: SumMethod) -> Option<&Table1Row> {
        self.rows
            .iter()
            .find(|r| r.rho == rho && r.lambda == lambda && r.method == method)
    }
}

/// All `2 x 2` full configurations of size `n` with both alleles present at each locus.
pub fn dimorphic_configs(n: u32) -> Vec<SampleConfig> {
    compositions(n, 4)
        .into_iter()
        .map(|v| SampleConfig::full(vec![vec![v[0], v[1]], vec![v[2], v[3]]]).expect("2x2 shape"))
        .filter(|cfg| cfg.c_a().iter().all(|&x| x > 0) && cfg.c_b().iter().all(|&x| x > 0))
        .collect()
}

/// Exact sampling probabilities for `cfgs`, reusing and extending a cache when given.
pub fn exact_values(
    cfgs: &[SampleConfig],
    p: &ModelParams,
    opts: &SolveOptions,
    cache: Option<&mut ExactCache>,
) -> Result<Vec<f64>> {
    let mut values: Vec<Option<f64>> = match &cache {
        Some(c) => cfgs.iter().map(|cfg| c.get(p, cfg)).collect(),
        None => vec![None; cfgs.len()],
    };
    let missing: Vec<usize> = (0..cfgs.len()).filter(|&i| values[i].is_none()).collect();
    if !missing.is_empty() {
        let roots: Vec<SampleConfig> = missing.iter().map(|&i| cfgs[i].clone()).collect();
        let (solved, _) = PimBlockSolver::new(p, *opts)?.solve(&roots)?;
        for (&i, &v) in missing.iter().zip(&solved) {
            values[i] = Some(v);
        }
        if let Some(c) = cache {
            for (&i, &v) in missing.iter().zip(&solved) {
                c.insert(p, &cfgs[i], v)?;
            }
            c.flush()?;
        }
    }
    Ok(values
        .into_iter()
        .map(|v| v.expect("filled above"))
        .collect())
}

fn tally(rho: f64, lambda: usize, method: SumMethod, errs: &[&ConfigError]) -> Table1Row {
    let mut below = [0usize; 3];
    for e in errs {
        for (slot, &x) in below.iter_mut().zip(&THRESHOLDS) {
            if e.error < x {
                *slot += 1;
            }
        }
    }
    let total = errs.len();
    Table1Row {
        rho,
        lambda,
        method,
        below,
        total,
        phi: below.map(|b| b as f64 / total.max(1) as f64),
        pade_fallbacks: errs.iter().filter(|e| e.pade_fallback).count(),
    }
}

/// Relative errors and their cumulative distribution for every requested
/// `(rho, lambda, method)`. The true expansion is only available to first
/// order, so its rows are produced for `lambda` in `{0, 1}`.
pub fn run_table1(opts: &AccuracyOptions, cache_dir: Option<&Path>) -> Result<Table1Report> {
    if opts.n < 2 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 2".into(),
        ));
    }
    if (opts.base.k, opts.base.l) != (2, 2) {
        return Err(Error::InvalidShape(format!(
            "dimorphic enumeration needs K = L = 2, got K = {}, L = {}",
            opts.base.k, opts.base.l
        )));
    }
    validate_params(&opts.base)?;
    for &rho in &opts.rhos {
        if !(rho > 0.0) {
            return Err(Error::NonPositiveRate {
                name: "rho",
                value: rho,
            });
        }
    }
    let cfgs = dimorphic_configs(opts.n);
    let max_lambda = opts.lambdas.iter().copied().max().unwrap_or(0);
    let engine = GaussianSeriesEngine::new(2, 2, max_lambda)?;
    let mut cache = cache_dir.map(ExactCache::open).transpose()?;
    let mut errors = Vec::new();
    for &rho in &opts.rhos {
        let p = opts.params(rho);
        let exact = exact_values(&cfgs, &p, &opts.solve, cache.as_mut())?;
        let per_config: Result<Vec<Vec<ConfigError>>> = cfgs
            .par_iter()
            .zip(&exact)
            .map(|(cfg, &q)| {
                let mut out = Vec::new();
                let gauss = engine.series(cfg, &p, Some(max_lambda))?;
                let truth = first_order_series(cfg, &p)?;
                let mut push =
                    |method: SumMethod, lambda: usize, series: &SeriesTable| -> Result<()> {
                        let (approx, fell_back) =
                            pade_or_partial_sum(&series.truncated(lambda), rho);
                        out.push(ConfigError {
                            config: cfg.token(),
                            rho,
                            lambda,
                            method,
                            q_exact: q,
                            approx,
                            error: relative_error(approx, q)?,
                            pade_fallback: fell_back,
                        });
                        Ok(())
                    };
                for &lambda in &opts.lambdas {
                    if lambda <= 1 {
                        push(SumMethod::True, lambda, &truth)?;
                    }
                    push(SumMethod::Gaussian, lambda, &gauss)?;
                }
                Ok(out)
            })
            .collect();
        errors.extend(per_config?.into_iter().flatten());
    }
    let mut rows = Vec::new();
    for &rho in &opts.rhos {
        for &lambda in &opts.lambdas {
            for method in [SumMethod::True, SumMethod::Gaussian] {
                let errs: Vec<&ConfigError> = errors
                    .iter()
                    .filter(|e| e.rho == rho && e.lambda == lambda && e.method == method)
                    .collect();
                if !errs.is_empty() {
                    rows.push(tally(rho, lambda, method, &errs));
                }
            }
        }
    }
    Ok(Table1Report {
        n: opts.n,
        params: opts.base.clone(),
        configs: cfgs.len(),
        rows,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimorphic_enumeration() {
        // 35 compositions, 5 with each of the four lines empty, 4 with one row and one column empty.
        let cfgs = dimorphic_configs(4);
        let brute = compositions(4, 4)
            .into_iter()
            .filter(|v| v[0] + v[1] > 0 && v[2] + v[3] > 0 && v[0] + v[2] > 0 && v[1] + v[3] > 0)
            .count();
        assert_eq!(cfgs.len(), brute);
        assert_eq!(brute, 35 - 4 * 5 + 4);
    }

    #[test]
    fn low_order_rows_coincide() {
        let mut opts = AccuracyOptions::new(6, 0.1);
        opts.rhos = vec![25.0, 50.0];
        opts.lambdas = vec![0, 1, 2];
        let report = run_table1(&opts, None).unwrap();
        for &rho in &opts.rhos {
            for lambda in [0, 1] {
                let t = report.row(rho, lambda, SumMethod::True).unwrap();
                let g = report.row(rho, lambda, SumMethod::Gaussian).unwrap();
                assert_eq!(t.below, g.below);
            }
            for row in report.rows.iter() {
                assert!(row.below[0] <= row.below[1] && row.below[1] <= row.below[2]);
                assert_eq!(row.total, report.configs);
            }
        }
        assert!(report.row(25.0, 2, SumMethod::True).is_none());
    }
}
