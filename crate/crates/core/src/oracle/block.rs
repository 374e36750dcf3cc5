//! Block-triangular solver for the PIM recursion.
//!
//! Under parent-independent mutation the mutation terms of the recursion can
//! be summed over the parental type: a mutation on an A-only lineage of type
//! `i` has the same effect as removing that lineage, weighted by `P_i`, and a
//! mutation at locus A on a full lineage `(i, j)` turns it into a B-only
//! lineage of type `j`. Every remaining transition either lowers the marginal
//! type counts `alpha = a + c_A`, `beta = b + c_B`, or keeps them fixed
//! (recombination, and the merging of an A-only with a B-only lineage). The
//! system is therefore block-triangular in `(alpha, beta)` and can be solved
//! level by level in `|alpha| + |beta|`, each block by Gauss-Seidel. A level
//! only depends on the two levels below it, so memory is bounded by three
//! levels.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::system::SolveOptions;
use crate::error::{Error, Result};
use crate::model::{ModelParams, SampleConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub blocks: usize,
    pub states: usize,
    pub peak_resident_states: usize,
    pub max_sweeps: usize,
    pub max_residual: f64,
}

/// Marginal counts `alpha ++ beta`.
type BlockKey = Vec<u8>;

/// Values of all states sharing one `(alpha, beta)`.
struct Block {
    /// Per-cell upper bounds `min(alpha_i, beta_j)` of `c`.
    bounds: Vec<u8>,
    strides: Vec<usize>,
    /// Mixed-radix slot of `c` to compact index, `u32::MAX` when invalid.
    slot: Vec<u32>,
    values: Vec<f64>,
}

impl Block {
    fn lookup(&self, c: &[u8]) -> f64 {
        let mut idx = 0;
        for ((&x, &bound), &stride) in c.iter().zip(&self.bounds).zip(&self.strides) {
            debug_assert!(x <= bound);
            idx += x as usize * stride;
        }
        let s = self.slot[idx];
        debug_assert!(s != u32::MAX, "state outside block");
        self.values[s as usize]
    }
}

struct Layout {
    bounds: Vec<u8>,
    strides: Vec<usize>,
    slot: Vec<u32>,
    /// Valid `c` matrices ordered by total then lexicographically.
    states: Vec<Vec<u8>>,
}

fn layout(alpha: &[u8], beta: &[u8]) -> Layout {
    let (k, l) = (alpha.len(), beta.len());
    let bounds: Vec<u8> = (0..k * l).map(|p| alpha[p / l].min(beta[p % l])).collect();
    let mut strides = vec![1usize; k * l];
    for p in (0..k * l).rev().skip(1) {
        strides[p] = strides[p + 1] * (bounds[p + 1] as usize + 1);
    }
    let size = if k * l == 0 {
        1
    } else {
        strides[0] * (bounds[0] as usize + 1)
    };
    let mut states = Vec::new();
    let mut c = vec![0u8; k * l];
    'outer: loop {
        let rows_ok =
            (0..k).all(|i| (0..l).map(|j| c[i * l + j] as u32).sum::<u32>() <= alpha[i] as u32);
        let cols_ok =
            (0..l).all(|j| (0..k).map(|i| c[i * l + j] as u32).sum::<u32>() <= beta[j] as u32);
        if rows_ok && cols_ok {
            states.push(c.clone());
        }
        let mut p = k * l;
        loop {
            if p == 0 {
                break 'outer;
            }
            p -= 1;
            if c[p] < bounds[p] {
                c[p] += 1;
                break;
            }
            c[p] = 0;
        }
    }
    states.sort_by_key(|c| (c.iter().map(|&x| x as u32).sum::<u32>(), c.clone()));
    let mut slot = vec![u32::MAX; size];
    for (s, c) in states.iter().enumerate() {
        let idx: usize = c
            .iter()
            .zip(&strides)
            .map(|(&x, &st)| x as usize * st)
            .sum();
        slot[idx] = s as u32;
    }
    Layout {
        bounds,
        strides,
        slot,
        states,
    }
}

/// Exact sampling probabilities for many roots that share model parameters.
pub struct PimBlockSolver<'a> {
    p: &'a ModelParams,
    opts: SolveOptions,
}

impl<'a> PimBlockSolver<'a> {
    pub fn new(p: &'a ModelParams, opts: SolveOptions) -> Result<Self> {
        if !p.pim {
            return Err(Error::UnsupportedMutationModel);
        }
        Ok(PimBlockSolver { p, opts })
    }

    /// Solve for every root; values are returned in input order.
    pub fn solve(&self, roots: &[SampleConfig]) -> Result<(Vec<f64>, BlockDiagnostics)> {
        let (k, l) = (self.p.k, self.p.l);
        let mut wanted: HashMap<BlockKey, Vec<(usize, Vec<u8>)>> = HashMap::new();
        let mut tops: Vec<BlockKey> = Vec::new();
        for (r, cfg) in roots.iter().enumerate() {
            cfg.check_against(self.p)?;
            if cfg.n() == 0 {
                return Err(Error::EmptySample);
            }
            if cfg.n() > u8::MAX as u32 {
                return Err(Error::SizeLimit {
                    what: "sample size",
                    requested: cfg.n() as usize,
                    cap: u8::MAX as usize,
                });
            }
            let key: BlockKey = cfg
                .marginal_a()
                .iter()
                .chain(&cfg.marginal_b())
                .map(|&x| x as u8)
                .collect();
            let c: Vec<u8> = cfg.c_flat().iter().map(|&x| x as u8).collect();
            wanted.entry(key.clone()).or_default().push((r, c));
            tops.push(key);
        }
        tops.sort();
        tops.dedup();
        let top_level = tops.iter().map(|t| level(t)).max().unwrap_or(0);

        // Blocks needed at each level: everything dominated by some root block.
        let mut per_level: Vec<Vec<BlockKey>> = vec![Vec::new(); top_level + 1];
        let mut seen: std::collections::HashSet<BlockKey> = std::collections::HashSet::new();
        for t in &tops {
            for_each_dominated(t, &mut |key| {
                if seen.insert(key.to_vec()) {
                    per_level[level(key)].push(key.to_vec());
                }
            });
        }
        drop(seen);
        for v in &mut per_level {
            v.sort();
        }

        let mut out = vec![f64::NAN; roots.len()];
        let mut diag = BlockDiagnostics::default();
        let mut window: [HashMap<BlockKey, Block>; 3] = Default::default();
        for (s, keys) in per_level.iter().enumerate() {
            let results: Vec<Result<(BlockKey, Block, usize, f64)>> = keys
                .par_iter()
                .map(|key| {
                    let (block, sweeps, residual) = self.solve_block(key, k, l, &window)?;
                    Ok((key.clone(), block, sweeps, residual))
                })
                .collect();
            let mut current = HashMap::with_capacity(keys.len());
            for res in results {
                let (key, block, sweeps, residual) = res?;
                diag.blocks += 1;
                diag.states += block.values.len();
                diag.max_sweeps = diag.max_sweeps.max(sweeps);
                diag.max_residual = diag.max_residual.max(residual);
                if let Some(list) = wanted.get(&key) {
                    for (r, c) in list {
                        out[*r] = block.lookup(c);
                    }
                }
                current.insert(key, block);
            }
            window.rotate_right(1);
            window[0] = current;
            let resident: usize = window
                .iter()
                .flat_map(|m| m.values())
                .map(|b| b.values.len())
                .sum();
            diag.peak_resident_states = diag.peak_resident_states.max(resident);
            if resident > self.opts.state_cap {
                return Err(Error::StateCap {
                    states: resident,
                    cap: self.opts.state_cap,
                });
            }
            let _ = s;
        }
        Ok((out, diag))
    }

    /// Solve one block; `window[0]` holds the level below, `window[1]` two below.
    fn solve_block(
        &self,
        key: &[u8],
        k: usize,
        l: usize,
        window: &[HashMap<BlockKey, Block>; 3],
    ) -> Result<(Block, usize, f64)> {
        let p = self.p;
        let (ta, tb, rho) = (p.theta_a, p.theta_b, p.rho);
        let (wa, wb) = (&p.pa[0], &p.pb[0]);
        let (alpha, beta) = key.split_at(k);
        let lay = layout(alpha, beta);
        let m = lay.states.len();
        let below = |delta_a: Option<usize>, delta_b: Option<usize>| -> &Block {
            let mut nk = key.to_vec();
            if let Some(i) = delta_a {
                nk[i] -= 1;
            }
            if let Some(j) = delta_b {
                nk[k + j] -= 1;
            }
            let depth = delta_a.is_some() as usize + delta_b.is_some() as usize - 1;
            &window[depth][&nk]
        };

        let mut diag = vec![1.0; m];
        let mut ext = vec![0.0; m];
        let mut fixed = vec![false; m];
        // Internal couplings: (target state, coefficient).
        let mut inner: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        let index_of = |c: &[u8]| -> u32 {
            let idx: usize = c
                .iter()
                .zip(&lay.strides)
                .map(|(&x, &st)| x as usize * st)
                .sum();
            lay.slot[idx]
        };

        for (s, c) in lay.states.iter().enumerate() {
            let c_row: Vec<u32> = (0..k)
                .map(|i| (0..l).map(|j| c[i * l + j] as u32).sum())
                .collect();
            let c_col: Vec<u32> = (0..l)
                .map(|j| (0..k).map(|i| c[i * l + j] as u32).sum())
                .collect();
            let a: Vec<u32> = (0..k).map(|i| alpha[i] as u32 - c_row[i]).collect();
            let b: Vec<u32> = (0..l).map(|j| beta[j] as u32 - c_col[j]).collect();
            let (a_tot, b_tot) = (a.iter().sum::<u32>(), b.iter().sum::<u32>());
            let c_tot: u32 = c_row.iter().sum();
            let n = a_tot + b_tot + c_tot;
            if n <= 1 {
                fixed[s] = true;
                ext[s] = if n == 0 {
                    1.0
                } else if a_tot == 1 {
                    wa[a.iter().position(|&x| x == 1).unwrap()]
                } else if b_tot == 1 {
                    wb[b.iter().position(|&x| x == 1).unwrap()]
                } else {
                    let pos = c.iter().position(|&x| x == 1).unwrap();
                    wa[pos / l] * wb[pos % l]
                };
                continue;
            }
            let nf = n as f64;
            diag[s] = nf * (nf - 1.0)
                + ta * (a_tot + c_tot) as f64
                + tb * (b_tot + c_tot) as f64
                + rho * c_tot as f64;
            let mut e = 0.0;
            for i in 0..k {
                if a[i] > 0 {
                    let coef = a[i] as f64 * ((a[i] - 1 + 2 * c_row[i]) as f64 + ta * wa[i]);
                    e += coef * below(Some(i), None).lookup(c);
                }
            }
            for j in 0..l {
                if b[j] > 0 {
                    let coef = b[j] as f64 * ((b[j] - 1 + 2 * c_col[j]) as f64 + tb * wb[j]);
                    e += coef * below(None, Some(j)).lookup(c);
                }
            }
            let mut cm = c.clone();
            for i in 0..k {
                for j in 0..l {
                    let pos = i * l + j;
                    let cij = c[pos] as f64;
                    if a[i] > 0 && b[j] > 0 {
                        cm[pos] += 1;
                        inner[s].push((index_of(&cm), 2.0 * (a[i] * b[j]) as f64));
                        cm[pos] -= 1;
                    }
                    if c[pos] == 0 {
                        continue;
                    }
                    cm[pos] -= 1;
                    if c[pos] >= 2 {
                        e += cij * (cij - 1.0) * below(Some(i), Some(j)).lookup(&cm);
                    }
                    if ta > 0.0 {
                        e += ta * cij * wa[i] * below(Some(i), None).lookup(&cm);
                    }
                    if tb > 0.0 {
                        e += tb * cij * wb[j] * below(None, Some(j)).lookup(&cm);
                    }
                    inner[s].push((index_of(&cm), rho * cij));
                    cm[pos] += 1;
                }
            }
            ext[s] = e;
        }

        let mut v: Vec<f64> = (0..m)
            .map(|s| if fixed[s] { ext[s] } else { ext[s] / diag[s] })
            .collect();
        let mut sweeps = 0;
        let needs_iteration = inner.iter().any(|t| !t.is_empty());
        if needs_iteration {
            loop {
                sweeps += 1;
                let mut change: f64 = 0.0;
                for s in 0..m {
                    if fixed[s] {
                        continue;
                    }
                    let mut acc = ext[s];
                    for &(t, coef) in &inner[s] {
                        acc += coef * v[t as usize];
                    }
                    let nv = acc / diag[s];
                    let scale = nv.abs().max(v[s].abs());
                    if scale > 0.0 {
                        change = change.max((nv - v[s]).abs() / scale);
                    }
                    v[s] = nv;
                }
                if change <= self.opts.tolerance || sweeps >= self.opts.max_sweeps {
                    break;
                }
            }
        }
        let mut residual: f64 = 0.0;
        for s in 0..m {
            if fixed[s] {
                continue;
            }
            let lhs = diag[s] * v[s];
            let mut rhs = ext[s];
            let mut scale = lhs.abs() + ext[s].abs();
            for &(t, coef) in &inner[s] {
                rhs += coef * v[t as usize];
                scale += (coef * v[t as usize]).abs();
            }
            if scale > 0.0 {
                residual = residual.max((lhs - rhs).abs() / scale);
            }
        }
        if residual > self.opts.residual_limit {
            return Err(Error::SolverDivergence {
                residual,
                iterations: sweeps,
            });
        }
        Ok((
            Block {
                bounds: lay.bounds,
                strides: lay.strides,
                slot: lay.slot,
                values: v,
            },
            sweeps,
            residual,
        ))
    }
}

fn level(key: &[u8]) -> usize {
    key.iter().map(|&x| x as usize).sum()
}

/// Calls `f` on every vector dominated componentwise by `top`.
fn for_each_dominated(top: &[u8], f: &mut dyn FnMut(&[u8])) {
    let mut v = vec![0u8; top.len()];
    loop {
        f(&v);
        let mut p = 0;
        loop {
            if p == top.len() {
                return;
            }
            if v[p] < top[p] {
                v[p] += 1;
                break;
            }
            v[p] = 0;
            p += 1;
        }
    }
}
