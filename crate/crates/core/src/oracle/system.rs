//! The typed two-locus recursion assembled as a sparse linear system.
//!
//! Each state is a configuration `(a, b, c)` of ancestral lineages with
//! allele types. Conditioning on the most recent event back in time
//! (coalescence, mutation with a PIM relabelling, recombination, or the
//! merging of an A-only with a B-only lineage) gives one linear equation
//! per state with `n >= 2` lineages; single-lineage states are fixed by
//! stationarity.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SampleConfig};

pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Solver settings shared by the oracle routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub state_cap: usize,
    pub max_sweeps: usize,
    /// Gauss-Seidel stops once the largest relative update falls below this.
    pub tolerance: f64,
    /// Largest admissible relative row residual.
    pub residual_limit: f64,
    /// Systems with at most this many unknowns fall back to a dense LU solve
    /// when Gauss-Seidel fails.
    pub dense_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            state_cap: DEFAULT_STATE_CAP,
            max_sweeps: 100_000,
            tolerance: 1e-15,
            residual_limit: 1e-9,
            dense_limit: 3_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    GaussSeidel,
    DenseLu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub states: usize,
    pub unknowns: usize,
    pub sweeps: usize,
    /// Largest row residual relative to the magnitude of the row's terms.
    pub max_residual: f64,
    pub method: SolveMethod,
}

/// Flattened state key: `a` (K entries), `b` (L entries), `c` row-major.
pub(crate) type Key = Vec<u8>;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Shape {
    pub k: usize,
    pub l: usize,
}

impl Shape {
    fn a(&self, key: &[u8], i: usize) -> u32 {
        key[i] as u32
    }
    fn b(&self, key: &[u8], j: usize) -> u32 {
        key[self.k + j] as u32
    }
    fn c_pos(&self, i: usize, j: usize) -> usize {
        self.k + self.l + i * self.l + j
    }
    fn c(&self, key: &[u8], i: usize, j: usize) -> u32 {
        key[self.c_pos(i, j)] as u32
    }
    fn n(&self, key: &[u8]) -> u32 {
        key.iter().map(|&x| x as u32).sum()
    }
}

pub(crate) fn encode(cfg: &SampleConfig) -> Result<Key> {
    if cfg.n() > u8::MAX as u32 {
        return Err(Error::SizeLimit {
            what: "sample size",
            requested: cfg.n() as usize,
            cap: u8::MAX as usize,
        });
    }
    let mut key: Key = cfg.a.iter().chain(&cfg.b).map(|&x| x as u8).collect();
    key.extend(cfg.c.iter().flatten().map(|&x| x as u8));
    Ok(key)
}

pub(crate) fn decode(key: &[u8], shape: Shape) -> SampleConfig {
    let a = key[..shape.k].iter().map(|&x| x as u32).collect();
    let b = key[shape.k..shape.k + shape.l]
        .iter()
        .map(|&x| x as u32)
        .collect();
    let c = key[shape.k + shape.l..]
        .chunks(shape.l)
        .map(|r| r.iter().map(|&x| x as u32).collect())
        .collect();
    SampleConfig { a, b, c }
}

/// Value of a state with at most one lineage.
pub(crate) fn boundary_value(key: &[u8], shape: Shape, p: &ModelParams) -> Option<f64> {
    let wa = &p.pa[0];
    let wb = &p.pb[0];
    match shape.n(key) {
        0 => Some(1.0),
        1 => {
            let pos = key.iter().position(|&x| x == 1).expect("one lineage");
            Some(if pos < shape.k {
                wa[pos]
            } else if pos < shape.k + shape.l {
                wb[pos - shape.k]
            } else {
                let idx = pos - shape.k - shape.l;
                wa[idx / shape.l] * wb[idx % shape.l]
            })
        }
        _ => None,
    }
}

/// One equation: `diag * q(state) = sum coef * q(target)`, self-loops folded into `diag`.
pub(crate) struct Row {
    pub diag: f64,
    pub terms: Vec<(Key, f64)>,
}

pub(crate) fn row(key: &[u8], shape: Shape, p: &ModelParams) -> Row {
    let Shape { k, l } = shape;
    let (ta, tb, rho) = (p.theta_a, p.theta_b, p.rho);
    let n = shape.n(key) as f64;
    let a_tot: u32 = (0..k).map(|i| shape.a(key, i)).sum();
    let b_tot: u32 = (0..l).map(|j| shape.b(key, j)).sum();
    let c_tot: u32 = key[k + l..].iter().map(|&x| x as u32).sum();
    let c_row: Vec<u32> = (0..k)
        .map(|i| (0..l).map(|j| shape.c(key, i, j)).sum())
        .collect();
    let c_col: Vec<u32> = (0..l)
        .map(|j| (0..k).map(|i| shape.c(key, i, j)).sum())
        .collect();
    let mut diag = n * (n - 1.0)
        + ta * (a_tot + c_tot) as f64
        + tb * (b_tot + c_tot) as f64
        + rho * c_tot as f64;
    let mut terms: Vec<(Key, f64)> = Vec::new();
    let push = |target: Key, coef: f64, terms: &mut Vec<(Key, f64)>, diag: &mut f64| {
        if coef == 0.0 {
            return;
        }
        if target.as_slice() == key {
            *diag -= coef;
        } else {
            terms.push((target, coef));
        }
    };

    for i in 0..k {
        let ai = shape.a(key, i);
        if ai == 0 {
            continue;
        }
        let mut t = key.to_vec();
        t[i] -= 1;
        push(
            t.clone(),
            (ai * (ai - 1 + 2 * c_row[i])) as f64,
            &mut terms,
            &mut diag,
        );
        for kk in 0..k {
            let mut m = t.clone();
            m[kk] += 1;
            push(m, ta * ai as f64 * p.pa[kk][i], &mut terms, &mut diag);
        }
    }
    for j in 0..l {
        let bj = shape.b(key, j);
        if bj == 0 {
            continue;
        }
        let mut t = key.to_vec();
        t[k + j] -= 1;
        push(
            t.clone(),
            (bj * (bj - 1 + 2 * c_col[j])) as f64,
            &mut terms,
            &mut diag,
        );
        for ll in 0..l {
            let mut m = t.clone();
            m[k + ll] += 1;
            push(m, tb * bj as f64 * p.pb[ll][j], &mut terms, &mut diag);
        }
    }
    for i in 0..k {
        for j in 0..l {
            let cij = shape.c(key, i, j);
            let pos = shape.c_pos(i, j);
            if cij >= 2 {
                let mut t = key.to_vec();
                t[pos] -= 1;
                push(t, (cij * (cij - 1)) as f64, &mut terms, &mut diag);
            }
            let (ai, bj) = (shape.a(key, i), shape.b(key, j));
            if ai > 0 && bj > 0 {
                let mut t = key.to_vec();
                t[i] -= 1;
                t[k + j] -= 1;
                t[pos] += 1;
                push(t, 2.0 * (ai * bj) as f64, &mut terms, &mut diag);
            }
            if cij == 0 {
                continue;
            }
            let mut base = key.to_vec();
            base[pos] -= 1;
            for kk in 0..k {
                let mut m = base.clone();
                m[shape.c_pos(kk, j)] += 1;
                push(m, ta * cij as f64 * p.pa[kk][i], &mut terms, &mut diag);
            }
            for ll in 0..l {
                let mut m = base.clone();
                m[shape.c_pos(i, ll)] += 1;
                push(m, tb * cij as f64 * p.pb[ll][j], &mut terms, &mut diag);
            }
            let mut m = base;
            m[i] += 1;
            m[k + j] += 1;
            push(m, rho * cij as f64, &mut terms, &mut diag);
        }
    }
    Row { diag, terms }
}

fn require_pim(root: &SampleConfig, p: &ModelParams) -> Result<Shape> {
    root.check_against(p)?;
    if !p.pim {
        return Err(Error::UnsupportedMutationModel);
    }
    if root.n() == 0 {
        return Err(Error::EmptySample);
    }
    Ok(Shape { k: p.k, l: p.l })
}

fn closure(root: &SampleConfig, p: &ModelParams, cap: usize) -> Result<(Shape, Vec<Key>)> {
    let shape = require_pim(root, p)?;
    let root_key = encode(root)?;
    let mut seen: HashMap<Key, ()> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(root_key.clone(), ());
    queue.push_back(root_key);
    while let Some(key) = queue.pop_front() {
        for (target, _) in row(&key, shape, p).terms {
            if !seen.contains_key(&target) {
                if seen.len() >= cap {
                    return Err(Error::StateCap {
                        states: seen.len() + 1,
                        cap,
                    });
                }
                seen.insert(target.clone(), ());
                queue.push_back(target);
            }
        }
    }
    let mut keys: Vec<Key> = seen.into_keys().collect();
    keys.sort_by(|x, y| shape.n(x).cmp(&shape.n(y)).then_with(|| x.cmp(y)));
    Ok((shape, keys))
}

/// Closure of `root` under the transitions of the recursion, in canonical
/// order (by lineage count, then lexicographically on the flattened key).
pub fn reachable_states(
    root: &SampleConfig,
    p: &ModelParams,
    cap: usize,
) -> Result<Vec<SampleConfig>> {
    let (shape, keys) = closure(root, p, cap)?;
    Ok(keys.iter().map(|k| decode(k, shape)).collect())
}

/// The assembled recursion for one root, with its solution once solved.
pub struct RecursionSystem {
    shape: Shape,
    keys: Vec<Key>,
    index: HashMap<Key, usize>,
    diag: Vec<f64>,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    coefs: Vec<f64>,
    fixed: Vec<Option<f64>>,
    root: usize,
}

impl RecursionSystem {
    pub fn build(root: &SampleConfig, p: &ModelParams, cap: usize) -> Result<Self> {
        let (shape, keys) = closure(root, p, cap)?;
        let index: HashMap<Key, usize> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        let mut diag = Vec::with_capacity(keys.len());
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut coefs = Vec::new();
        let mut fixed = Vec::with_capacity(keys.len());
        for key in &keys {
            let bv = boundary_value(key, shape, p);
            fixed.push(bv);
            if bv.is_none() {
                let r = row(key, shape, p);
                diag.push(r.diag);
                for (t, c) in r.terms {
                    cols.push(index[&t]);
                    coefs.push(c);
                }
            } else {
                diag.push(1.0);
            }
            row_start.push(cols.len());
        }
        let root = index[&encode(root)?];
        Ok(RecursionSystem {
            shape,
            keys,
            index,
            diag,
            row_start,
            cols,
            coefs,
            fixed,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn states(&self) -> Vec<SampleConfig> {
        self.keys.iter().map(|k| decode(k, self.shape)).collect()
    }

    pub fn index_of(&self, cfg: &SampleConfig) -> Option<usize> {
        encode(cfg).ok().and_then(|k| self.index.get(&k).copied())
    }

    fn terms(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_start[s]..self.row_start[s + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.coefs[range].iter().copied())
    }

    /// Relative residual of row `s`: `|diag q_s - sum coef q_t|` divided by
    /// the sum of the magnitudes of those terms.
    fn residual(&self, s: usize, q: &[f64]) -> f64 {
        let lhs = self.diag[s] * q[s];
        let (mut rhs, mut scale) = (0.0, lhs.abs());
        for (t, c) in self.terms(s) {
            rhs += c * q[t];
            scale += (c * q[t]).abs();
        }
        if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        }
    }

    pub fn max_residual(&self, q: &[f64]) -> f64 {
        (0..self.len())
            .filter(|&s| self.fixed[s].is_none())
            .map(|s| self.residual(s, q))
            .fold(0.0, f64::max)
    }

    /// Solve for every state; returns the full solution vector.
    pub fn solve(&self, opts: &SolveOptions) -> Result<(Vec<f64>, SolveDiagnostics)> {
        let unknowns = self.fixed.iter().filter(|f| f.is_none()).count();
        let (q, sweeps) = self.gauss_seidel(opts);
        let residual = self.max_residual(&q);
        if residual <= opts.residual_limit {
            return Ok((
                q,
                SolveDiagnostics {
                    states: self.len(),
                    unknowns,
                    sweeps,
                    max_residual: residual,
                    method: SolveMethod::GaussSeidel,
                },
            ));
        }
        if unknowns <= opts.dense_limit {
            let q = self.dense_solve()?;
            let residual = self.max_residual(&q);
            if residual <= opts.residual_limit {
                return Ok((
                    q,
                    SolveDiagnostics {
                        states: self.len(),
                        unknowns,
                        sweeps,
                        max_residual: residual,
                        method: SolveMethod::DenseLu,
                    },
                ));
            }
        }
        Err(Error::SolverDivergence {
            residual,
            iterations: sweeps,
        })
    }

    fn gauss_seidel(&self, opts: &SolveOptions) -> (Vec<f64>, usize) {
        let mut q: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for sweep in 1..=opts.max_sweeps {
            let mut change: f64 = 0.0;
            for s in 0..self.len() {
                if self.fixed[s].is_some() {
                    continue;
                }
                let v = self.terms(s).map(|(t, c)| c * q[t]).sum::<f64>() / self.diag[s];
                let scale = v.abs().max(q[s].abs());
                if scale > 0.0 {
                    change = change.max((v - q[s]).abs() / scale);
                }
                q[s] = v;
            }
            if change <= opts.tolerance {
                return (q, sweep);
            }
        }
        (q, opts.max_sweeps)
    }

    fn dense_solve(&self) -> Result<Vec<f64>> {
        let unknown: Vec<usize> = (0..self.len())
            .filter(|&s| self.fixed[s].is_none())
            .collect();
        let mut pos = vec![usize::MAX; self.len()];
        for (u, &s) in unknown.iter().enumerate() {
            pos[s] = u;
        }
        let m = unknown.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (u, &s) in unknown.iter().enumerate() {
            a[(u, u)] += self.diag[s];
            for (t, c) in self.terms(s) {
                match self.fixed[t] {
                    Some(v) => rhs[u] += c * v,
                    None => a[(u, pos[t])] -= c,
                }
            }
        }
        let x = a.lu().solve(&rhs).ok_or(Error::SolverDivergence {
            residual: f64::INFINITY,
            iterations: 0,
        })?;
        Ok((0..self.len())
            .map(|s| self.fixed[s].unwrap_or_else(|| x[pos[s]]))
            .collect())
    }

    /// Solve and return the root's probability.
    pub fn solve_root(&self, opts: &SolveOptions) -> Result<(f64, SolveDiagnostics)> {
        let (q, diag) = self.solve(opts)?;
        Ok((q[self.root], diag))
    }
}
