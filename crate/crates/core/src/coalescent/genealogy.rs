//! Per-locus coalescent trees, Kingman completion and the mutation overlay.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Locus, ModelParams, SampleConfig};

pub const NO_PARENT: u32 = u32::MAX;

/// Binary tree stored as parent pointers; leaves come first and every
/// internal node is created after its children, so the last node is the root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub time: Vec<f64>,
    pub parent: Vec<u32>,
    pub leaves: u32,
}

impl Tree {
    pub fn with_leaves(n: u32) -> Self {
        let mut t = Tree::default();
        t.reset(n);
        t
    }

    pub fn reset(&mut self, n: u32) {
        self.time.clear();
        self.parent.clear();
        self.time.resize(n as usize, 0.0);
        self.parent.resize(n as usize, NO_PARENT);
        self.leaves = n;
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Join nodes `x` and `y` under a new node at time `t`.
    pub fn merge(&mut self, x: u32, y: u32, t: f64) -> u32 {
        let id = self.time.len() as u32;
        self.parent[x as usize] = id;
        self.parent[y as usize] = id;
        self.time.push(t);
        self.parent.push(NO_PARENT);
        id
    }

    /// Number of merges so far.
    pub fn merges(&self) -> usize {
        self.len() - self.leaves as usize
    }

    /// True when every leaf has been joined into a single root.
    pub fn is_complete(&self) -> bool {
        !self.is_empty() && self.parent.iter().filter(|&&p| p == NO_PARENT).count() == 1
    }

    pub fn root(&self) -> Option<u32> {
        self.is_complete().then(|| self.len() as u32 - 1)
    }

    pub fn height(&self) -> f64 {
        self.time.last().copied().unwrap_or(0.0)
    }

    /// Sum of all branch lengths.
    pub fn total_length(&self) -> f64 {
        self.parent
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != NO_PARENT)
            .map(|(v, &p)| self.time[p as usize] - self.time[v])
            .sum()
    }

    /// Leaves below `node`, in increasing order.
    pub fn leaves_below(&self, node: u32) -> Vec<u32> {
        let mut out: Vec<u32> = (0..self.leaves)
            .filter(|&leaf| {
                let mut v = leaf;
                loop {
                    if v == node {
                        return true;
                    }
                    let p = self.parent[v as usize];
                    if p == NO_PARENT {
                        return false;
                    }
                    v = p;
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Genealogy of a sample with `a` A-only, `b` B-only and `c` fully observed
/// individuals. Individuals are numbered A-only first, then B-only, then full.
/// Locus A leaves are the A-only individuals followed by the full ones;
/// locus B leaves are the B-only individuals followed by the full ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genealogy {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub trees: [Tree; 2],
}

impl Genealogy {
    pub fn tree(&self, locus: Locus) -> &Tree {
        &self.trees[locus_index(locus)]
    }

    /// Individual carried by `leaf` of the tree at `locus`.
    pub fn individual(&self, locus: Locus, leaf: u32) -> usize {
        let (own, offset) = match locus {
            Locus::A => (self.a, 0),
            Locus::B => (self.b, self.a),
        };
        if leaf < own {
            (offset + leaf) as usize
        } else {
            (self.a + self.b + leaf - own) as usize
        }
    }

    /// Block of sample individuals ancestral to `node` at `locus`.
    pub fn block(&self, locus: Locus, node: u32) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .tree(locus)
            .leaves_below(node)
            .into_iter()
            .map(|leaf| self.individual(locus, leaf))
            .collect();
        ids.sort_unstable();
        ids
    }
}

pub(crate) fn locus_index(locus: Locus) -> usize {
    match locus {
        Locus::A => 0,
        Locus::B => 1,
    }
}

/// Uniform index in `0..n`.
pub(crate) fn pick<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    rng.random_range(0..n)
}

/// Uniform unordered pair `(lo, hi)` of distinct indices in `0..n`.
pub(crate) fn pick_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i.min(j), i.max(j))
}

pub(crate) fn exp_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Merge `lineages[lo]` and `lineages[hi]` in `tree`, keeping the parent at `lo`.
pub(crate) fn merge_in_place(
    tree: &mut Tree,
    lineages: &mut Vec<u32>,
    lo: usize,
    hi: usize,
    t: f64,
) -> [u32; 3] {
    let (x, y) = (lineages[lo], lineages[hi]);
    let id = tree.merge(x, y, t);
    lineages.swap_remove(hi);
    lineages[lo] = id;
    [x, y, id]
}

/// Complete `tree` by a Kingman coalescent on `lineages`, starting at `t0`.
/// Returns the time of the last merge (or `t0`).
pub fn kingman<R: Rng + ?Sized>(
    tree: &mut Tree,
    lineages: &mut Vec<u32>,
    t0: f64,
    rng: &mut R,
) -> f64 {
    let mut t = t0;
    while lineages.len() > 1 {
        let k = lineages.len() as f64;
        t += exp_time(k * (k - 1.0) / 2.0, rng);
        let (lo, hi) = pick_pair(lineages.len(), rng);
        merge_in_place(tree, lineages, lo, hi, t);
    }
    t
}

/// Single-locus Kingman tree over `n` leaves.
pub fn kingman_tree<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Tree {
    let mut tree = Tree::with_leaves(n);
    let mut lineages: Vec<u32> = (0..n).collect();
    kingman(&mut tree, &mut lineages, 0.0, rng);
    tree
}

/// Mutation process at one locus.
#[derive(Debug, Clone)]
pub(crate) struct MutationLaw {
    theta: f64,
    matrix: Vec<Vec<f64>>,
    root: Vec<f64>,
    pim: bool,
}

impl MutationLaw {
    pub(crate) fn new(p: &ModelParams, locus: Locus) -> Self {
        MutationLaw {
            theta: p.theta(locus),
            matrix: p.matrix(locus).to_vec(),
            root: p.stationary(locus),
            pim: p.pim,
        }
    }

    fn categorical<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> u8 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                return i as u8;
            }
        }
        (w.len() - 1) as u8
    }

    /// Allele types of every node, root drawn from the stationary law and
    /// mutations at rate `theta/2` per unit branch length.
    pub(crate) fn assign<R: Rng + ?Sized>(&self, tree: &Tree, types: &mut Vec<u8>, rng: &mut R) {
        let n = tree.len();
        types.clear();
        types.resize(n, 0);
        if n == 0 {
            return;
        }
        types[n - 1] = Self::categorical(&self.root, rng);
        for v in (0..n - 1).rev() {
            let parent = tree.parent[v] as usize;
            let len = tree.time[parent] - tree.time[v];
            let mut ty = types[parent];
            if self.theta > 0.0 && len > 0.0 {
                let mean = 0.5 * self.theta * len;
                if self.pim {
                    if rng.random::<f64>() >= (-mean).exp() {
                        ty = Self::categorical(&self.matrix[0], rng);
                    }
                } else {
                    let hits = Poisson::new(mean)
                        .map(|d| d.sample(rng) as u64)
                        .unwrap_or(0);
                    for _ in 0..hits {
                        ty = Self::categorical(&self.matrix[ty as usize], rng);
                    }
                }
            }
            types[v] = ty;
        }
    }
}

/// Mixed-radix key of the counts `(a, b, c)` in base `n + 1`.
pub(crate) struct KeyCoder {
    pub k: usize,
    pub l: usize,
    pub base: u64,
}

impl KeyCoder {
    pub(crate) fn new(k: usize, l: usize, n: u32) -> Result<Self> {
        let digits = (k + l + k * l) as u32;
        let base = n as u64 + 1;
        if (digits as f64) * (base as f64).log2() >= 63.0 || k > 255 || l > 255 {
            return Err(Error::SizeLimit {
                what: "typed outcome key digits",
                requested: digits as usize,
                cap: 63,
            });
        }
        Ok(KeyCoder { k, l, base })
    }

    pub(crate) fn encode(&self, cfg: &SampleConfig) -> u64 {
        let mut key = 0u64;
        let mut scale = 1u64;
        for &x in cfg.a.iter().chain(&cfg.b).chain(cfg.c.iter().flatten()) {
            key += x as u64 * scale;
            scale *= self.base;
        }
        key
    }

    /// Key of the typed sample read off the leaf types of a genealogy.
    pub(crate) fn encode_leaves(
        &self,
        a: u32,
        b: u32,
        c: u32,
        types_a: &[u8],
        types_b: &[u8],
    ) -> u64 {
        let (k, l) = (self.k as u64, self.l as u64);
        let mut key = 0u64;
        let digit = |pos: u64| self.base.pow(pos as u32);
        for i in 0..a as usize {
            key += digit(types_a[i] as u64);
        }
        for j in 0..b as usize {
            key += digit(k + types_b[j] as u64);
        }
        for m in 0..c as usize {
            let (i, j) = (
                types_a[a as usize + m] as u64,
                types_b[b as usize + m] as u64,
            );
            key += digit(k + l + i * l + j);
        }
        key
    }

    pub(crate) fn decode(&self, mut key: u64) -> SampleConfig {
        let mut next = || {
            let d = (key % self.base) as u32;
            key /= self.base;
            d
        };
        let a = (0..self.k).map(|_| next()).collect();
        let b = (0..self.l).map(|_| next()).collect();
        let c = (0..self.k)
            .map(|_| (0..self.l).map(|_| next()).collect())
            .collect();
        SampleConfig { a, b, c }
    }
}

/// Overlay mutations on both marginal trees and read off the typed sample.
pub fn drop_mutations<R: Rng + ?Sized>(
    g: &Genealogy,
    p: &ModelParams,
    rng: &mut R,
) -> Result<SampleConfig> {
    crate::model::validate_params(p)?;
    if p.k > 255 || p.l > 255 {
        return Err(Error::SizeLimit {
            what: "alleles per locus",
            requested: p.k.max(p.l),
            cap: 255,
        });
    }
    let mut types_a = Vec::new();
    let mut types_b = Vec::new();
    MutationLaw::new(p, Locus::A).assign(&g.trees[0], &mut types_a, rng);
    MutationLaw::new(p, Locus::B).assign(&g.trees[1], &mut types_b, rng);
    let mut cfg = SampleConfig::zeros(p.k, p.l);
    for i in 0..g.a as usize {
        cfg.a[types_a[i] as usize] += 1;
    }
    for j in 0..g.b as usize {
        cfg.b[types_b[j] as usize] += 1;
    }
    for m in 0..g.c as usize {
        cfg.c[types_a[g.a as usize + m] as usize][types_b[g.b as usize + m] as usize] += 1;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn kingman_tree_shape() {
        let mut rng = stream_rng(1, 0);
        let t = kingman_tree(5, &mut rng);
        assert_eq!(t.len(), 9);
        assert!(t.is_complete());
        assert_eq!(t.root(), Some(8));
        for v in 0..8 {
            assert!(t.time[t.parent[v] as usize] >= t.time[v]);
        }
        assert_eq!(t.leaves_below(8), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn kingman_mean_height() {
        // E[T_MRCA] = 2 (1 - 1/n).
        let mut rng = stream_rng(2, 0);
        let reps = 100_000;
        let hs: Vec<f64> = (0..reps)
            .map(|_| kingman_tree(4, &mut rng).height())
            .collect();
        let m = crate::stats::Moments::from_slice(&hs);
        assert!((m.mean - 1.5).abs() < 3.0 * m.se());
    }

    #[test]
    fn no_mutation_gives_monomorphic_sample() {
        let p = ModelParams::symmetric(2, 2, 0.0, 1.0);
        let mut rng = stream_rng(3, 0);
        let g = Genealogy {
            a: 1,
            b: 1,
            c: 2,
            trees: [kingman_tree(3, &mut rng), kingman_tree(3, &mut rng)],
        };
        for _ in 0..100 {
            let cfg = drop_mutations(&g, &p, &mut rng).unwrap();
            assert_eq!(cfg.marginal_a().iter().filter(|&&x| x > 0).count(), 1);
            assert_eq!(cfg.marginal_b().iter().filter(|&&x| x > 0).count(), 1);
        }
    }

    #[test]
    fn single_leaf_follows_weights() {
        let p = ModelParams::pim(&[0.2, 0.8], &[0.5, 0.5], 1.0, 1.0, 1.0);
        let g = Genealogy {
            a: 1,
            b: 0,
            c: 0,
            trees: [Tree::with_leaves(1), Tree::with_leaves(0)],
        };
        let mut rng = stream_rng(4, 0);
        let reps = 100_000u64;
        let hits = (0..reps)
            .filter(|_| drop_mutations(&g, &p, &mut rng).unwrap().a[0] == 1)
            .count();
        let (f, se) = crate::stats::proportion(hits as u64, reps);
        assert!((f - 0.2).abs() < 3.0 * se);
    }

    #[test]
    fn deep_star_tree_gives_independent_leaves() {
        // Four leaves joined just below a root far in the past, large theta.
        let p = ModelParams::pim(&[0.3, 0.7], &[0.5, 0.5], 50.0, 50.0, 1.0);
        let mut tree = Tree::with_leaves(4);
        let x = tree.merge(0, 1, 10.0);
        let y = tree.merge(2, 3, 10.0);
        tree.merge(x, y, 10.0);
        let g = Genealogy {
            a: 4,
            b: 0,
            c: 0,
            trees: [tree, Tree::with_leaves(0)],
        };
        let mut rng = stream_rng(5, 0);
        let reps = 100_000;
        let mut counts = [0u64; 5];
        for _ in 0..reps {
            counts[drop_mutations(&g, &p, &mut rng).unwrap().a[0] as usize] += 1;
        }
        // Chi-square against Binomial(4, 0.3), 4 degrees of freedom.
        let probs: Vec<f64> = (0..5)
            .map(|k| crate::model::binom(4, k) * 0.3f64.powi(k as i32) * 0.7f64.powi(4 - k as i32))
            .collect();
        let chi2: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&o, &q)| {
                let e = q * reps as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 18.47, "chi2 {chi2}");
    }

    #[test]
    fn key_round_trip() {
        let coder = KeyCoder::new(2, 3, 6).unwrap();
        let cfg = SampleConfig::new(
            vec![1, 0],
            vec![0, 2, 0],
            vec![vec![1, 0, 0], vec![0, 1, 1]],
        )
        .unwrap();
        assert_eq!(coder.decode(coder.encode(&cfg)), cfg);
    }

    #[test]
    fn individuals_and_blocks() {
        let mut ta = Tree::with_leaves(3);
        let v = ta.merge(0, 2, 1.0);
        ta.merge(v, 1, 2.0);
        let g = Genealogy {
            a: 1,
            b: 2,
            c: 2,
            trees: [ta, Tree::with_leaves(4)],
        };
        assert_eq!(g.individual(Locus::A, 0), 0);
        assert_eq!(g.individual(Locus::A, 2), 4);
        assert_eq!(g.individual(Locus::B, 1), 2);
        assert_eq!(g.individual(Locus::B, 3), 4);
        assert_eq!(g.block(Locus::A, 3), vec![0, 4]);
    }
}
