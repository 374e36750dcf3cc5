//! Parameters, sample configurations and the one-locus PIM sampling distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Above this many draws the ascending factorials are accumulated in log space.
const LOG_SPACE_THRESHOLD: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Locus {
    A,
    B,
}

/// Two-locus model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "thetaA")]
    pub theta_a: f64,
    #[serde(rename = "thetaB")]
    pub theta_b: f64,
    pub rho: f64,
    #[serde(rename = "PA")]
    pub pa: Vec<Vec<f64>>,
    #[serde(rename = "PB")]
    pub pb: Vec<Vec<f64>>,
    #[serde(default)]
    pub pim: bool,
}

impl ModelParams {
    /// PIM model whose mutation matrices have every row equal to the given weights.
    pub fn pim(weights_a: &[f64], weights_b: &[f64], theta_a: f64, theta_b: f64, rho: f64) -> Self {
        ModelParams {
            k: weights_a.len(),
            l: weights_b.len(),
            theta_a,
            theta_b,
            rho,
            pa: vec![weights_a.to_vec(); weights_a.len()],
            pb: vec![weights_b.to_vec(); weights_b.len()],
            pim: true,
        }
    }

    /// PIM model with uniform weights and a common mutation rate.
    pub fn symmetric(k: usize, l: usize, theta: f64, rho: f64) -> Self {
        Self::pim(
            &vec![1.0 / k as f64; k],
            &vec![1.0 / l as f64; l],
            theta,
            theta,
            rho,
        )
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        ModelParams {
            rho,
            ..self.clone()
        }
    }

    pub fn theta(&self, locus: Locus) -> f64 {
        match locus {
            Locus::A => self.theta_a,
            Locus::B => self.theta_b,
        }
    }

    pub fn matrix(&self, locus: Locus) -> &[Vec<f64>] {
        match locus {
            Locus::A => &self.pa,
            Locus::B => &self.pb,
        }
    }

    pub fn alleles(&self, locus: Locus) -> usize {
        match locus {
            Locus::A => self.k,
            Locus::B => self.l,
        }
    }

    /// The common row of a PIM mutation matrix.
    pub fn pim_weights(&self, locus: Locus) -> Result<&[f64]> {
        if !self.pim {
            return Err(Error::UnsupportedMutationModel);
        }
        Ok(&self.matrix(locus)[0])
    }

    /// Stationary distribution of the mutation chain at `locus`.
    ///
    /// For PIM this is the weight vector; otherwise it is found by power
    /// iteration on the lazy chain `(I + P) / 2`.
    pub fn stationary(&self, locus: Locus) -> Vec<f64> {
        let p = self.matrix(locus);
        if self.pim {
            return p[0].clone();
        }
        let k = p.len();
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..100_000 {
            let mut next = vec![0.0; k];
            for (i, row) in p.iter().enumerate() {
                for (j, &pij) in row.iter().enumerate() {
                    next[j] += 0.5 * pi[i] * pij;
                }
                next[i] += 0.5 * pi[i];
            }
            let delta: f64 = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }
}

/// Check every [`ModelParams`] invariant.
pub fn validate_params(p: &ModelParams) -> Result<()> {
    if p.k == 0 || p.l == 0 {
        return Err(Error::InvalidShape(
            "allele counts K and L must be at least 1".into(),
        ));
    }
    for (name, m, n) in [("PA", &p.pa, p.k), ("PB", &p.pb, p.l)] {
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidShape(format!("{name} must be {n}x{n}")));
        }
        for (row_idx, row) in m.iter().enumerate() {
            if let Some(&value) = row.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::EntryOutOfRange {
                    matrix: name,
                    value,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::NonStochasticRow {
                    matrix: name,
                    row: row_idx,
                    sum,
                });
            }
        }
        if p.pim && m.iter().any(|row| row != &m[0]) {
            return Err(Error::PimFlagMismatch { matrix: name });
        }
    }
    for (name, value) in [("thetaA", p.theta_a), ("thetaB", p.theta_b), ("rho", p.rho)] {
        if !(value >= 0.0) {
            return Err(Error::NegativeRate { name, value });
        }
    }
    Ok(())
}

/// Observed two-locus sample: A-only counts `a`, B-only counts `b`, and full
/// haplotype counts `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleConfig {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub c: Vec<Vec<u32>>,
}

impl SampleConfig {
    pub fn new(a: Vec<u32>, b: Vec<u32>, c: Vec<Vec<u32>>) -> Result<Self> {
        let cfg = SampleConfig { a, b, c };
        cfg.check_shape()?;
        Ok(cfg)
    }

    /// Sample with only fully observed haplotypes.
    pub fn full(c: Vec<Vec<u32>>) -> Result<Self> {
        let k = c.len();
        let l = c.first().map_or(0, |r| r.len());
        Self::new(vec![0; k], vec![0; l], c)
    }

    pub fn zeros(k: usize, l: usize) -> Self {
        SampleConfig {
            a: vec![0; k],
            b: vec![0; l],
            c: vec![vec![0; l]; k],
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        let (k, l) = (self.a.len(), self.b.len());
        if self.c.len() != k || self.c.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidShape(format!(
                "c must be {k}x{l} to match a and b"
            )));
        }
        Ok(())
    }

    /// Check the shape against the model dimensions.
    pub fn check_against(&self, p: &ModelParams) -> Result<()> {
        self.check_shape()?;
        if self.a.len() != p.k || self.b.len() != p.l {
            return Err(Error::InvalidShape(format!(
                "config is {}x{} but the model has K={} and L={}",
                self.a.len(),
                self.b.len(),
                p.k,
                p.l
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn l(&self) -> usize {
        self.b.len()
    }

    pub fn a_total(&self) -> u32 {
        self.a.iter().sum()
    }

    pub fn b_total(&self) -> u32 {
        self.b.iter().sum()
    }

    pub fn c_total(&self) -> u32 {
        self.c.iter().flatten().sum()
    }

    pub fn n(&self) -> u32 {
        self.a_total() + self.b_total() + self.c_total()
    }

    /// Row sums of `c`.
    pub fn c_a(&self) -> Vec<u32> {
        self.c.iter().map(|r| r.iter().sum()).collect()
    }

    /// Column sums of `c`.
    pub fn c_b(&self) -> Vec<u32> {
        (0..self.l())
            .map(|j| self.c.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// All alleles observed at locus A: `a + c_A`.
    pub fn marginal_a(&self) -> Vec<u32> {
        self.a.iter().zip(self.c_a()).map(|(x, y)| x + y).collect()
    }

    /// All alleles observed at locus B: `b + c_B`.
    pub fn marginal_b(&self) -> Vec<u32> {
        self.b.iter().zip(self.c_b()).map(|(x, y)| x + y).collect()
    }

    pub fn c_flat(&self) -> Vec<u32> {
        self.c.iter().flatten().copied().collect()
    }

    /// Number of distinct orderings of the sample within its observation
    /// pattern; multiplying an ordered probability by this gives the
    /// probability of the unordered configuration.
    pub fn multinomial(&self) -> f64 {
        multinomial(&self.a) * multinomial(&self.b) * multinomial(&self.c_flat())
    }

    /// Compact text form `a=1:0;b=0:0;c=1:0/0:0` used in CSV output.
    pub fn token(&self) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(":");
        let rows: Vec<String> = self.c.iter().map(|r| join(r)).collect();
        format!(
            "a={};b={};c={}",
            join(&self.a),
            join(&self.b),
            rows.join("/")
        )
    }

    /// Inverse of [`SampleConfig::token`].
    pub fn parse_token(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed config token {s:?}"));
        let nums = |t: &str| -> Result<Vec<u32>> {
            if t.is_empty() {
                return Ok(Vec::new());
            }
            t.split(':')
                .map(|x| x.parse::<u32>().map_err(|_| bad()))
                .collect()
        };
        let mut parts = s.split(';');
        let a = parts
            .next()
            .and_then(|t| t.strip_prefix("a="))
            .ok_or_else(bad)?;
        let b = parts
            .next()
            .and_then(|t| t.strip_prefix("b="))
            .ok_or_else(bad)?;
        let c = parts
            .next()
            .and_then(|t| t.strip_prefix("c="))
            .ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let c = c.split('/').map(nums).collect::<Result<Vec<_>>>()?;
        SampleConfig::new(nums(a)?, nums(b)?, c)
    }
}

/// `m! / prod(m_i!)` for the counts `m_i` summing to `m`.
pub fn multinomial(counts: &[u32]) -> f64 {
    let mut total = 0u32;
    let mut value = 1.0;
    for &x in counts {
        for j in 1..=x {
            total += 1;
            value *= total as f64 / j as f64;
        }
    }
    value
}

/// Binomial coefficient as a float.
pub fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Ascending factorial `(z)_n = z (z+1) ... (z+n-1)`.
pub fn ascending_factorial(z: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, k| acc * (z + k as f64))
}

/// `ln (z)_n`; `-inf` when `z = 0` and `n > 0`.
pub fn ln_ascending_factorial(z: f64, n: u32) -> f64 {
    (0..n).map(|k| (z + k as f64).ln()).sum()
}

/// Ordered one-locus sampling probability under parent-independent mutation:
/// the Dirichlet moment `E[prod X_i^{a_i}]` with `X ~ Dirichlet(theta * P)`.
pub fn one_locus_q_pim(theta: f64, weights: &[f64], counts: &[u32]) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::NegativeRate {
            name: "theta",
            value: theta,
        });
    }
    if weights.len() != counts.len() {
        return Err(Error::InvalidShape(format!(
            "{} counts for {} alleles",
            counts.len(),
            weights.len()
        )));
    }
    let m: u32 = counts.iter().sum();
    if m == 0 || weights.len() == 1 {
        return Ok(1.0);
    }
    if theta == 0.0 {
        let mut observed = counts.iter().enumerate().filter(|(_, &x)| x > 0);
        let (i, _) = observed.next().expect("m > 0");
        return Ok(if observed.next().is_some() {
            0.0
        } else {
            weights[i]
        });
    }
    if m <= LOG_SPACE_THRESHOLD {
        let num: f64 = counts
            .iter()
            .zip(weights)
            .map(|(&x, &w)| ascending_factorial(theta * w, x))
            .product();
        return Ok(num / ascending_factorial(theta, m));
    }
    let mut ln = -ln_ascending_factorial(theta, m);
    for (&x, &w) in counts.iter().zip(weights) {
        if x > 0 {
            if w == 0.0 {
                return Ok(0.0);
            }
            ln += ln_ascending_factorial(theta * w, x);
        }
    }
    Ok(ln.exp())
}

/// One-locus sampling probability at `locus`, dispatched on the mutation model.
pub fn one_locus_q(p: &ModelParams, locus: Locus, counts: &[u32]) -> Result<f64> {
    let weights = p.pim_weights(locus)?;
    one_locus_q_pim(p.theta(locus), weights, counts)
}

/// All count vectors of length `k` with total `m`, in lexicographic order.
pub fn compositions(m: u32, k: usize) -> Vec<Vec<u32>> {
    fn rec(m: u32, k: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for x in (0..=m).rev() {
            prefix.push(x);
            rec(m - x, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        if m == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(m, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// All typed configurations sharing the observation pattern `(a, b, c)` totals.
pub fn typed_configs(k: usize, l: usize, a: u32, b: u32, c: u32) -> Vec<SampleConfig> {
    let mut out = Vec::new();
    for av in compositions(a, k) {
        for bv in compositions(b, l) {
            for cv in compositions(c, k * l) {
                let rows = cv.chunks(l).map(|r| r.to_vec()).collect();
                out.push(SampleConfig {
                    a: av.clone(),
                    b: bv.clone(),
                    c: rows,
                });
            }
        }
    }
    out
}

/// All observation patterns `(a, b, c)` with `1 <= a + b + c <= n`.
pub fn patterns_up_to(n: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for total in 1..=n {
        for c in 0..=total {
            for a in 0..=total - c {
                out.push((a, total - c - a, c));
            }
        }
    }
    out
}
