//! Leading terms of the expansion of the sampling distribution in `1/rho`,
//! partial sums and staircase Padé resummation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{binom, one_locus_q, Locus, ModelParams, SampleConfig};

/// Condition estimates above this are treated as singular.
pub const PADE_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesOrigin {
    TrueModel,
    GaussianModel,
}

/// Coefficients `[s_0, ..., s_lambda]` of a series in `x = 1/rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub coeffs: Vec<f64>,
    pub origin: SeriesOrigin,
}

impl SeriesTable {
    pub fn new(coeffs: Vec<f64>, origin: SeriesOrigin) -> Self {
        assert!(
            !coeffs.is_empty(),
            "a series needs at least one coefficient"
        );
        SeriesTable { coeffs, origin }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The series cut after the term of order `lambda`.
    pub fn truncated(&self, lambda: usize) -> SeriesTable {
        let len = (lambda + 1).min(self.coeffs.len());
        SeriesTable {
            coeffs: self.coeffs[..len].to_vec(),
            origin: self.origin,
        }
    }
}

/// `q0 = q^A(a + c_A) q^B(b + c_B)`.
pub fn q0(cfg: &SampleConfig, p: &ModelParams) -> Result<f64> {
    cfg.check_against(p)?;
    Ok(one_locus_q(p, Locus::A, &cfg.marginal_a())? * one_locus_q(p, Locus::B, &cfg.marginal_b())?)
}

/// First-order coefficient `q1` of the expansion in `1/rho`.
pub fn q1(cfg: &SampleConfig, p: &ModelParams) -> Result<f64> {
    cfg.check_against(p)?;
    let alpha = cfg.marginal_a();
    let beta = cfg.marginal_b();
    let qa = one_locus_q(p, Locus::A, &alpha)?;
    let qb = one_locus_q(p, Locus::B, &beta)?;
    let qa_minus = minus_one_each(p, Locus::A, &alpha)?;
    let qb_minus = minus_one_each(p, Locus::B, &beta)?;

    let c_a = cfg.c_a();
    let c_b = cfg.c_b();
    let mut total = binom(cfg.c_total(), 2) * qa * qb;
    for (i, &ci) in c_a.iter().enumerate() {
        total -= qb * binom(ci, 2) * qa_minus[i];
    }
    for (j, &cj) in c_b.iter().enumerate() {
        total -= qa * binom(cj, 2) * qb_minus[j];
    }
    for (i, row) in cfg.c.iter().enumerate() {
        for (j, &cij) in row.iter().enumerate() {
            total += binom(cij, 2) * qa_minus[i] * qb_minus[j];
        }
    }
    Ok(total)
}

/// `q(counts - e_i)` for every allele `i` with a positive count (0 otherwise).
fn minus_one_each(p: &ModelParams, locus: Locus, counts: &[u32]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; counts.len()];
    let mut v = counts.to_vec();
    for i in 0..counts.len() {
        if counts[i] > 0 {
            v[i] -= 1;
            out[i] = one_locus_q(p, locus, &v)?;
            v[i] += 1;
        }
    }
    Ok(out)
}

/// `[q0, q1]` as a series table of the true model.
pub fn first_order_series(cfg: &SampleConfig, p: &ModelParams) -> Result<SeriesTable> {
    Ok(SeriesTable::new(
        vec![q0(cfg, p)?, q1(cfg, p)?],
        SeriesOrigin::TrueModel,
    ))
}

/// `sum_k s_k rho^{-k}`.
pub fn series_partial_sum(t: &SeriesTable, rho: f64) -> f64 {
    let x = 1.0 / rho;
    t.coeffs.iter().rev().fold(0.0, |acc, &s| acc * x + s)
}

/// Numerator and denominator coefficients of the staircase approximant.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeCoefficients {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl PadeCoefficients {
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let horner = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &s| acc * x + s);
        (horner(&self.numerator), horner(&self.denominator))
    }
}

/// Degrees `[m/n]` of the staircase approximant of order `lambda`.
pub fn staircase_degrees(lambda: usize) -> (usize, usize) {
    (lambda.div_ceil(2), lambda / 2)
}

/// Staircase `[ceil(lambda/2) / floor(lambda/2)]` Padé coefficients of a
/// power series, normalised so that the denominator has constant term 1.
pub fn pade_coefficients(coeffs: &[f64]) -> Result<PadeCoefficients> {
    assert!(
        !coeffs.is_empty(),
        "a series needs at least one coefficient"
    );
    let lambda = coeffs.len() - 1;
    let (m, n) = staircase_degrees(lambda);
    let s = |k: isize| if k < 0 { 0.0 } else { coeffs[k as usize] };
    let mut denominator = vec![1.0];
    if n > 0 {
        let a = DMatrix::from_fn(n, n, |row, col| {
            s((m + 1 + row) as isize - (col + 1) as isize)
        });
        let rhs = DVector::from_fn(n, |row, _| -s((m + 1 + row) as isize));
        let lu = a.clone().lu();
        let inv = lu
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularPade("denominator system is singular".into()))?;
        let cond = norm1(&a) * norm1(&inv);
        if !cond.is_finite() || cond > PADE_CONDITION_LIMIT {
            return Err(Error::SingularPade(format!("condition estimate {cond:e}")));
        }
        let b = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularPade("denominator system is singular".into()))?;
        denominator.extend(b.iter().copied());
    }
    let numerator = (0..=m)
        .map(|k| (0..=k.min(n)).map(|j| denominator[j] * coeffs[k - j]).sum())
        .collect();
    Ok(PadeCoefficients {
        numerator,
        denominator,
    })
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Staircase Padé approximant evaluated at `x = 1/rho`.
///
/// The coefficients are first rescaled to `s_k rho^{-k}` so that the
/// approximant is evaluated at 1; rational approximants commute with this
/// change of variable, and the rescaled linear system is better balanced.
pub fn pade_staircase(t: &SeriesTable, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRate {
            name: "rho",
            value: rho,
        });
    }
    if t.coeffs.len() <= 2 {
        return Ok(series_partial_sum(t, rho));
    }
    let x = 1.0 / rho;
    let scaled: Vec<f64> = t
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, &s)| s * x.powi(k as i32))
        .collect();
    let pade = pade_coefficients(&scaled)?;
    let (num, den) = pade.eval(1.0);
    let den_scale: f64 = pade.denominator.iter().map(|b| b.abs()).sum();
    if !den.is_finite() || den.abs() <= 1e-12 * den_scale {
        return Err(Error::SingularPade(
            "denominator vanishes at the evaluation point".into(),
        ));
    }
    Ok(num / den)
}

/// Padé value with fallback to the partial sum; the flag reports a fallback.
pub fn pade_or_partial_sum(t: &SeriesTable, rho: f64) -> (f64, bool) {
    match pade_staircase(t, rho) {
        Ok(v) => (v, false),
        Err(_) => (series_partial_sum(t, rho), true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::one_locus_q_pim;

    fn params() -> ModelParams {
        ModelParams::symmetric(2, 2, 1.0, 10.0)
    }

    #[test]
    fn q0_examples() {
        let p = params();
        let cfg = SampleConfig::full(vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert!((q0(&cfg, &p).unwrap() - 0.25).abs() < 1e-15);

        let cfg = SampleConfig::new(vec![2, 1], vec![0, 3], vec![vec![0, 0], vec![0, 0]]).unwrap();
        let w = [0.5, 0.5];
        let expect =
            one_locus_q_pim(1.0, &w, &[2, 1]).unwrap() * one_locus_q_pim(1.0, &w, &[0, 3]).unwrap();
        assert_eq!(q0(&cfg, &p).unwrap(), expect);
    }

    #[test]
    fn q1_examples() {
        let p = params();
        let cfg = SampleConfig::new(vec![1, 2], vec![0, 1], vec![vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(q1(&cfg, &p).unwrap(), 0.0);

        let cfg = SampleConfig::full(vec![vec![2, 0], vec![0, 0]]).unwrap();
        let w = [0.5, 0.5];
        let qa2 = one_locus_q_pim(1.0, &w, &[2, 0]).unwrap();
        let qa1 = one_locus_q_pim(1.0, &w, &[1, 0]).unwrap();
        let expect = qa2 * qa2 - qa2 * qa1 - qa2 * qa1 + qa1 * qa1;
        assert!((q1(&cfg, &p).unwrap() - expect).abs() < 1e-15);
        assert!((expect - (0.375 - 0.5) * (0.375 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn q1_relabel_invariance() {
        let p = ModelParams::pim(&[0.2, 0.8], &[0.6, 0.4], 0.7, 1.3, 1.0);
        let swapped = ModelParams::pim(&[0.8, 0.2], &[0.6, 0.4], 0.7, 1.3, 1.0);
        let cfg = SampleConfig::new(vec![1, 0], vec![2, 1], vec![vec![3, 1], vec![0, 2]]).unwrap();
        let mut flipped = cfg.clone();
        flipped.a.reverse();
        flipped.c.reverse();
        let x = q1(&cfg, &p).unwrap();
        let y = q1(&flipped, &swapped).unwrap();
        assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
    }

    #[test]
    fn partial_sums() {
        let t = SeriesTable::new(vec![0.3], SeriesOrigin::TrueModel);
        assert_eq!(series_partial_sum(&t, 7.0), 0.3);
        let t = SeriesTable::new(vec![1.0, 1.0], SeriesOrigin::TrueModel);
        assert_eq!(series_partial_sum(&t, 2.0), 1.5);
    }

    #[test]
    fn pade_low_orders_equal_partial_sums() {
        let t = SeriesTable::new(vec![0.2], SeriesOrigin::GaussianModel);
        assert_eq!(pade_staircase(&t, 3.0).unwrap(), 0.2);
        let t = SeriesTable::new(vec![0.2, -0.7], SeriesOrigin::GaussianModel);
        assert_eq!(
            pade_staircase(&t, 3.0).unwrap(),
            series_partial_sum(&t, 3.0)
        );
    }

    #[test]
    fn pade_resums_geometric_series() {
        for g in [0.5, -2.0, 3.0] {
            let c = pade_coefficients(&[1.0, -g, g * g]).unwrap();
            assert!((c.numerator[0] - 1.0).abs() < 1e-14);
            assert!((c.numerator[1]).abs() < 1e-14);
            assert!((c.denominator[1] - g).abs() < 1e-14);
            let t = SeriesTable::new(vec![1.0, -g, g * g], SeriesOrigin::GaussianModel);
            for rho in [5.0, 50.0] {
                let v = pade_staircase(&t, rho).unwrap();
                assert!((v - 1.0 / (1.0 + g / rho)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pade_singular_input() {
        let t = SeriesTable::new(vec![1.0, 0.0, 1.0], SeriesOrigin::GaussianModel);
        assert!(matches!(
            pade_staircase(&t, 4.0),
            Err(Error::SingularPade(_))
        ));
        let (v, fell_back) = pade_or_partial_sum(&t, 4.0);
        assert!(fell_back);
        assert_eq!(v, 1.0 + 1.0 / 16.0);
    }

    #[test]
    fn pade_reexpansion_matches_series() {
        let coeffs: Vec<f64> = (0..8)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / (k + 1) as f64)
            .collect();
        for lambda in 0..coeffs.len() {
            let c = pade_coefficients(&coeffs[..=lambda]).unwrap();
            // Taylor coefficients of num/den by long division.
            let mut e = vec![0.0; lambda + 1];
            for k in 0..=lambda {
                let num_k = c.numerator.get(k).copied().unwrap_or(0.0);
                let conv: f64 = (1..=k.min(c.denominator.len() - 1))
                    .map(|j| c.denominator[j] * e[k - j])
                    .sum();
                e[k] = num_k - conv;
            }
            for k in 0..=lambda {
                assert!(
                    (e[k] - coeffs[k]).abs() <= 1e-9,
                    "lambda {lambda}: {} vs {}",
                    e[k],
                    coeffs[k]
                );
            }
        }
    }
}
