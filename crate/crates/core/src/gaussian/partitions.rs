//! Pair partitions, multiplicity matrices and canonical haplotype lists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::compositions;

/// Largest `lambda` accepted by [`enumerate_pair_partitions`] by default.
pub const DEFAULT_PARTITION_CAP: usize = 8;

/// A partition of `{1, ..., 2 lambda}` into pairs `{mu_k, nu_k}`, normalised so
/// that `mu_k < nu_k` and `mu_1 < mu_2 < ...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairPartition {
    pub lambda: usize,
    pub mu: Vec<usize>,
    pub nu: Vec<usize>,
}

impl PairPartition {
    /// Blocks as 1-based pairs.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        self.mu
            .iter()
            .copied()
            .zip(self.nu.iter().copied())
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        let m = 2 * self.lambda;
        if self.mu.len() != self.lambda || self.nu.len() != self.lambda {
            return false;
        }
        let mut seen = vec![false; m + 1];
        for (&x, &y) in self.mu.iter().zip(&self.nu) {
            if x == 0 || y > m || x >= y || seen[x] || seen[y] {
                return false;
            }
            seen[x] = true;
            seen[y] = true;
        }
        self.mu.windows(2).all(|w| w[0] < w[1])
    }
}

/// `(2 lambda - 1)!!`, the number of pair partitions of `2 lambda` items.
pub fn double_factorial_odd(lambda: usize) -> u64 {
    (1..=lambda as u64).map(|k| 2 * k - 1).product()
}

/// All pair partitions of `[2 lambda]` in lexicographic order, with the default cap.
pub fn enumerate_pair_partitions(lambda: usize) -> Result<Vec<PairPartition>> {
    enumerate_pair_partitions_capped(lambda, DEFAULT_PARTITION_CAP)
}

pub fn enumerate_pair_partitions_capped(lambda: usize, cap: usize) -> Result<Vec<PairPartition>> {
    if lambda > cap {
        return Err(Error::SizeLimit {
            what: "lambda",
            requested: lambda,
            cap,
        });
    }
    fn rec(
        free: &mut Vec<usize>,
        mu: &mut Vec<usize>,
        nu: &mut Vec<usize>,
        out: &mut Vec<PairPartition>,
    ) {
        if free.is_empty() {
            out.push(PairPartition {
                lambda: mu.len(),
                mu: mu.clone(),
                nu: nu.clone(),
            });
            return;
        }
        let first = free.remove(0);
        for idx in 0..free.len() {
            let partner = free.remove(idx);
            mu.push(first);
            nu.push(partner);
            rec(free, mu, nu, out);
            mu.pop();
            nu.pop();
            free.insert(idx, partner);
        }
        free.insert(0, first);
    }
    let mut out = Vec::with_capacity(double_factorial_odd(lambda) as usize);
    let mut free: Vec<usize> = (1..=2 * lambda).collect();
    rec(&mut free, &mut Vec::new(), &mut Vec::new(), &mut out);
    Ok(out)
}

/// A `K x L` matrix of haplotype multiplicities.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiplicityMatrix {
    pub r: Vec<Vec<u32>>,
}

impl MultiplicityMatrix {
    pub fn total(&self) -> u32 {
        self.r.iter().flatten().sum()
    }
}

/// Every `r <= c` (componentwise) with entries summing to `2 lambda`, in
/// lexicographic order of the row-major flattening (largest first).
pub fn enumerate_r(c: &[Vec<u32>], lambda: usize) -> Vec<MultiplicityMatrix> {
    let l = c.first().map_or(0, |r| r.len());
    let flat: Vec<u32> = c.iter().flatten().copied().collect();
    let target = 2 * lambda as u32;
    if flat.iter().sum::<u32>() < target {
        return Vec::new();
    }
    compositions(target, flat.len())
        .into_iter()
        .filter(|v| v.iter().zip(&flat).all(|(x, y)| x <= y))
        .map(|v| MultiplicityMatrix {
            r: v.chunks(l.max(1)).map(|row| row.to_vec()).collect(),
        })
        .collect()
}

/// Haplotypes realising a multiplicity matrix, listed row-major with repeats adjacent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaplotypeList {
    pub h: Vec<(usize, usize)>,
}

impl HaplotypeList {
    pub fn from_r(r: &MultiplicityMatrix) -> Self {
        let mut h = Vec::with_capacity(r.total() as usize);
        for (i, row) in r.r.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                h.extend(std::iter::repeat_n((i, j), count as usize));
            }
        }
        HaplotypeList { h }
    }

    pub fn h_a(&self) -> Vec<usize> {
        self.h.iter().map(|&(i, _)| i).collect()
    }

    pub fn h_b(&self) -> Vec<usize> {
        self.h.iter().map(|&(_, j)| j).collect()
    }
}
