//! Exact sampling distribution of the Gaussian diffusion approximation.
//!
//! The distribution is a polynomial in `1/rho`; coefficient `g_lambda` sums,
//! over multiplicity matrices `r` with `|r| = 2 lambda` and pair partitions
//! of the haplotype list realising `r`, a product of binomials and two signed
//! subset sums of one-locus probabilities. Two evaluation routes are provided:
//! a literal one that walks every pair partition, and [`GaussianSeriesEngine`]
//! which groups the pair partitions of each `r` by how many pairs are
//! homozygous for each allele at each locus.

use std::collections::HashMap;

use rayon::prelude::*;

use super::partitions::{enumerate_pair_partitions, enumerate_r, HaplotypeList};
use crate::asymptotics::{series_partial_sum, SeriesOrigin, SeriesTable};
use crate::error::{Error, Result};
use crate::model::{binom, compositions, one_locus_q, Locus, ModelParams, SampleConfig};

/// Memoised one-locus probabilities `q(base - i)`.
struct ReducedQ<'a> {
    p: &'a ModelParams,
    locus: Locus,
    base: Vec<u32>,
    memo: HashMap<Vec<u32>, f64>,
}

impl<'a> ReducedQ<'a> {
    fn new(p: &'a ModelParams, locus: Locus, base: Vec<u32>) -> Self {
        ReducedQ {
            p,
            locus,
            base,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, removed: &[u32]) -> Result<f64> {
        if let Some(&v) = self.memo.get(removed) {
            return Ok(v);
        }
        let counts: Vec<u32> = self.base.iter().zip(removed).map(|(b, r)| b - r).collect();
        let v = one_locus_q(self.p, self.locus, &counts)?;
        self.memo.insert(removed.to_vec(), v);
        Ok(v)
    }

    /// `sum_{i <= n} prod_k binom(n_k, i_k) (-1)^{|i|} q(base - i)`.
    fn signed_subset_sum(&mut self, n: &[u32]) -> Result<f64> {
        let mut total = 0.0;
        let mut i = vec![0u32; n.len()];
        loop {
            let weight: f64 = n.iter().zip(&i).map(|(&nk, &ik)| binom(nk, ik)).product();
            let sign = if i.iter().sum::<u32>() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            total += sign * weight * self.get(&i)?;
            let mut pos = 0;
            loop {
                if pos == n.len() {
                    return Ok(total);
                }
                if i[pos] < n[pos] {
                    i[pos] += 1;
                    break;
                }
                i[pos] = 0;
                pos += 1;
            }
        }
    }
}

fn check_gaussian_inputs(cfg: &SampleConfig, p: &ModelParams) -> Result<()> {
    cfg.check_against(p)?;
    if !p.pim {
        return Err(Error::UnsupportedMutationModel);
    }
    Ok(())
}

fn effective_lambda(cfg: &SampleConfig, lambda_max: Option<usize>) -> usize {
    let top = (cfg.c_total() / 2) as usize;
    lambda_max.map_or(top, |m| m.min(top))
}

/// Coefficients `[g_0, ..., g_lambda]` by direct enumeration of pair partitions.
///
/// `lambda_max = None` keeps every order up to `floor(c/2)`.
pub fn gaussian_series_literal(
    cfg: &SampleConfig,
    p: &ModelParams,
    lambda_max: Option<usize>,
) -> Result<SeriesTable> {
    literal_series_with_order(cfg, p, lambda_max, |_| {})
}

fn literal_series_with_order(
    cfg: &SampleConfig,
    p: &ModelParams,
    lambda_max: Option<usize>,
    reorder: fn(&mut HaplotypeList),
) -> Result<SeriesTable> {
    check_gaussian_inputs(cfg, p)?;
    let top = effective_lambda(cfg, lambda_max);
    let alpha = cfg.marginal_a();
    let beta = cfg.marginal_b();
    let mut coeffs = Vec::with_capacity(top + 1);
    for lambda in 0..=top {
        let partitions = enumerate_pair_partitions(lambda)?;
        let rs = enumerate_r(&cfg.c, lambda);
        let parts: Vec<f64> = rs
            .par_iter()
            .map(|r| -> Result<f64> {
                let mut qa = ReducedQ::new(p, Locus::A, alpha.clone());
                let mut qb = ReducedQ::new(p, Locus::B, beta.clone());
                let weight: f64 = cfg
                    .c
                    .iter()
                    .flatten()
                    .zip(r.r.iter().flatten())
                    .map(|(&cij, &rij)| binom(cij, rij))
                    .product();
                let mut h = HaplotypeList::from_r(r);
                reorder(&mut h);
                let (ha, hb) = (h.h_a(), h.h_b());
                let mut sum = 0.0;
                for xi in &partitions {
                    let bracket_a = pair_bracket(&ha, &xi.mu, &xi.nu, p.k, &mut qa)?;
                    if bracket_a == 0.0 {
                        continue;
                    }
                    let bracket_b = pair_bracket(&hb, &xi.mu, &xi.nu, p.l, &mut qb)?;
                    sum += bracket_a * bracket_b;
                }
                Ok(weight * sum)
            })
            .collect::<Result<Vec<f64>>>()?;
        coeffs.push(parts.iter().sum());
    }
    Ok(SeriesTable::new(coeffs, SeriesOrigin::GaussianModel))
}

/// Signed sum over subsets `I` of the pairs whose two alleles agree, of
/// `(-1)^{lambda - |I|} q(base - alleles of nu_I)`.
fn pair_bracket(
    alleles: &[usize],
    mu: &[usize],
    nu: &[usize],
    k: usize,
    q: &mut ReducedQ<'_>,
) -> Result<f64> {
    let lambda = mu.len();
    let admissible: Vec<usize> = (0..lambda)
        .filter(|&kk| alleles[mu[kk] - 1] == alleles[nu[kk] - 1])
        .map(|kk| alleles[nu[kk] - 1])
        .collect();
    let mut total = 0.0;
    let mut removed = vec![0u32; k];
    for mask in 0u32..(1 << admissible.len()) {
        removed.iter_mut().for_each(|x| *x = 0);
        for (bit, &allele) in admissible.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                removed[allele] += 1;
            }
        }
        let size = mask.count_ones() as usize;
        let sign = if (lambda - size).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += sign * q.get(&removed)?;
    }
    Ok(total)
}

/// `q_G` truncated after order `lambda_max` (all orders for `None`), at `p.rho`.
pub fn q_gauss(cfg: &SampleConfig, p: &ModelParams, lambda_max: Option<usize>) -> Result<f64> {
    if !(p.rho > 0.0) {
        return Err(Error::NonPositiveRate {
            name: "rho",
            value: p.rho,
        });
    }
    Ok(series_partial_sum(
        &gaussian_series_literal(cfg, p, lambda_max)?,
        p.rho,
    ))
}

/// Homozygous-pair statistics of a matching: per-allele pair counts at A then B.
type PairStats = Vec<u8>;

/// Precomputed matching counts for fast evaluation of the Gaussian series.
///
/// For a multiset `r` of haplotypes, `N_r(n_A, n_B)` counts the pair
/// partitions of its canonical list with `n_A[i]` pairs homozygous for allele
/// `i` at locus A and `n_B[j]` homozygous for `j` at locus B. Since each
/// bracket of the series depends on a partition only through these counts,
/// `g_lambda = sum_r binom(c, r) sum N_r(n_A, n_B) F_A(n_A) F_B(n_B)`.
pub struct GaussianSeriesEngine {
    k: usize,
    l: usize,
    max_lambda: usize,
    table: HashMap<Vec<u8>, Vec<(PairStats, f64)>>,
}

impl GaussianSeriesEngine {
    pub fn new(k: usize, l: usize, max_lambda: usize) -> Result<Self> {
        let types = k * l;
        let entries: usize = (0..=max_lambda)
            .map(|lam| binom(2 * lam as u32 + types as u32 - 1, types as u32 - 1) as usize)
            .sum();
        const ENTRY_CAP: usize = 2_000_000;
        if entries > ENTRY_CAP {
            return Err(Error::SizeLimit {
                what: "matching table entries",
                requested: entries,
                cap: ENTRY_CAP,
            });
        }
        let mut engine = GaussianSeriesEngine {
            k,
            l,
            max_lambda,
            table: HashMap::new(),
        };
        for lambda in 0..=max_lambda {
            for r in compositions(2 * lambda as u32, types) {
                let key: Vec<u8> = r.iter().map(|&x| x as u8).collect();
                engine.matchings(&key);
            }
        }
        Ok(engine)
    }

    pub fn max_lambda(&self) -> usize {
        self.max_lambda
    }

    fn matchings(&mut self, rem: &[u8]) -> Vec<(PairStats, f64)> {
        if let Some(v) = self.table.get(rem) {
            return v.clone();
        }
        let width = self.k + self.l;
        let result = match rem.iter().position(|&x| x > 0) {
            None => vec![(vec![0u8; width], 1.0)],
            Some(u) => {
                let mut acc: HashMap<PairStats, f64> = HashMap::new();
                let mut rest = rem.to_vec();
                rest[u] -= 1;
                for t in u..rest.len() {
                    if rest[t] == 0 {
                        continue;
                    }
                    let mult = rest[t] as f64;
                    let mut sub_key = rest.clone();
                    sub_key[t] -= 1;
                    let (ua, ub) = (u / self.l, u % self.l);
                    let (ta, tb) = (t / self.l, t % self.l);
                    for (stats, count) in self.matchings(&sub_key) {
                        let mut s = stats;
                        if ua == ta {
                            s[ua] += 1;
                        }
                        if ub == tb {
                            s[self.k + ub] += 1;
                        }
                        *acc.entry(s).or_insert(0.0) += mult * count;
                    }
                }
                let mut v: Vec<_> = acc.into_iter().collect();
                v.sort_by(|x, y| x.0.cmp(&y.0));
                v
            }
        };
        self.table.insert(rem.to_vec(), result.clone());
        result
    }

    /// Coefficients `[g_0, ..., g_top]` with `top = min(lambda_max, floor(c/2), engine max)`.
    pub fn series(
        &self,
        cfg: &SampleConfig,
        p: &ModelParams,
        lambda_max: Option<usize>,
    ) -> Result<SeriesTable> {
        check_gaussian_inputs(cfg, p)?;
        if cfg.k() != self.k || cfg.l() != self.l {
            return Err(Error::InvalidShape(
                "engine built for different allele counts".into(),
            ));
        }
        let top = effective_lambda(cfg, lambda_max);
        if top > self.max_lambda {
            return Err(Error::SizeLimit {
                what: "lambda",
                requested: top,
                cap: self.max_lambda,
            });
        }
        let mut qa = ReducedQ::new(p, Locus::A, cfg.marginal_a());
        let mut qb = ReducedQ::new(p, Locus::B, cfg.marginal_b());
        let mut fa: HashMap<Vec<u8>, f64> = HashMap::new();
        let mut fb: HashMap<Vec<u8>, f64> = HashMap::new();
        let c_flat = cfg.c_flat();
        let mut coeffs = Vec::with_capacity(top + 1);
        for lambda in 0..=top {
            let mut g = 0.0;
            for r in compositions(2 * lambda as u32, self.k * self.l) {
                if r.iter().zip(&c_flat).any(|(x, y)| x > y) {
                    continue;
                }
                let weight: f64 = c_flat.iter().zip(&r).map(|(&c, &x)| binom(c, x)).product();
                let key: Vec<u8> = r.iter().map(|&x| x as u8).collect();
                let mut inner = 0.0;
                for (stats, count) in &self.table[&key] {
                    let (sa, sb) = stats.split_at(self.k);
                    let va = match fa.get(sa) {
                        Some(&v) => v,
                        None => {
                            let n: Vec<u32> = sa.iter().map(|&x| x as u32).collect();
                            let v = qa.signed_subset_sum(&n)?;
                            fa.insert(sa.to_vec(), v);
                            v
                        }
                    };
                    let vb = match fb.get(sb) {
                        Some(&v) => v,
                        None => {
                            let n: Vec<u32> = sb.iter().map(|&x| x as u32).collect();
                            let v = qb.signed_subset_sum(&n)?;
                            fb.insert(sb.to_vec(), v);
                            v
                        }
                    };
                    inner += count * va * vb;
                }
                g += weight * inner;
            }
            coeffs.push(g);
        }
        Ok(SeriesTable::new(coeffs, SeriesOrigin::GaussianModel))
    }
}
