//! The two-locus ancestral process with recombination and its
//! artificial-recombination counterpart, tracked lineage by lineage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::genealogy::{exp_time, merge_in_place, pick, pick_pair, Genealogy, Tree};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Counts of lineages: A-only `a`, B-only `b`, left halves of full
/// fragments `c` and right halves `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AncState {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub d: u32,
}

impl AncState {
    pub fn new(a: u32, b: u32, c: u32, d: u32) -> Self {
        AncState { a, b, c, d }
    }

    /// Initial state `(a, b, c, c)` of a sample pattern.
    pub fn sample(a: u32, b: u32, c: u32) -> Self {
        AncState { a, b, c, d: c }
    }

    /// Both loci have reached a single lineage.
    pub fn absorbed(&self) -> bool {
        self.a + self.c <= 1 && self.b + self.d <= 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcessKind {
    /// Ancestral process with recombination rate `rho`.
    #[serde(rename = "C")]
    CRho,
    /// Artificial-recombination process at `rho = infinity`.
    #[serde(rename = "D")]
    DInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
}

impl EventType {
    pub const ALL: [EventType; 7] = [
        EventType::I,
        EventType::II,
        EventType::III,
        EventType::IV,
        EventType::V,
        EventType::VI,
        EventType::VII,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_recombination(self) -> bool {
        self == EventType::VII
    }
}

/// Which pair of lineage classes merged in a type IV or V event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubKind {
    AA,
    AC,
    BB,
    BD,
}

/// One transition: the merged or moved tree nodes at each locus (children
/// then parent for a merge) and the state afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub event: EventType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sub: Option<SubKind>,
    pub nodes_a: Vec<u32>,
    pub nodes_b: Vec<u32>,
    pub state: AncState,
}

pub(crate) const EV_I: usize = 0;
pub(crate) const EV_II: usize = 1;
pub(crate) const EV_III: usize = 2;
pub(crate) const EV_IV_AA: usize = 3;
pub(crate) const EV_IV_AC: usize = 4;
pub(crate) const EV_V_BB: usize = 5;
pub(crate) const EV_V_BD: usize = 6;
pub(crate) const EV_VI: usize = 7;
pub(crate) const EV_VII: usize = 8;
pub(crate) const N_EVENTS: usize = 9;

fn event_of(ev: usize) -> (EventType, Option<SubKind>) {
    match ev {
        EV_I => (EventType::I, None),
        EV_II => (EventType::II, None),
        EV_III => (EventType::III, None),
        EV_IV_AA => (EventType::IV, Some(SubKind::AA)),
        EV_IV_AC => (EventType::IV, Some(SubKind::AC)),
        EV_V_BB => (EventType::V, Some(SubKind::BB)),
        EV_V_BD => (EventType::V, Some(SubKind::BD)),
        EV_VI => (EventType::VI, None),
        _ => (EventType::VII, None),
    }
}

/// Rates of the fine-grained events at a state.
pub(crate) fn fine_rates(kind: ProcessKind, s: AncState, rho: f64) -> [f64; N_EVENTS] {
    let (a, b, c, d) = (s.a as f64, s.b as f64, s.c as f64, s.d as f64);
    let mut r = [0.0; N_EVENTS];
    match kind {
        ProcessKind::CRho => {
            r[EV_I] = c * (c - 1.0) / 2.0;
            r[EV_VII] = rho * c / 2.0;
        }
        ProcessKind::DInf => {
            r[EV_II] = c * (c - 1.0) / 2.0;
            r[EV_III] = d * (d - 1.0) / 2.0;
            r[EV_VII] = rho * c.max(d) / 2.0;
        }
    }
    r[EV_IV_AA] = a * (a - 1.0) / 2.0;
    r[EV_IV_AC] = a * c;
    r[EV_V_BB] = b * (b - 1.0) / 2.0;
    r[EV_V_BD] = b * d;
    r[EV_VI] = a * b;
    r
}

/// Transition rates of types I to VII at `s`.
pub fn event_rates(kind: ProcessKind, s: AncState, rho: f64) -> [f64; 7] {
    let f = fine_rates(kind, s, rho);
    [
        f[EV_I],
        f[EV_II],
        f[EV_III],
        f[EV_IV_AA] + f[EV_IV_AC],
        f[EV_V_BB] + f[EV_V_BD],
        f[EV_VI],
        f[EV_VII],
    ]
}

pub(crate) fn choose<R: Rng + ?Sized>(rates: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > 0.0 {
            if u < r {
                return i;
            }
            u -= r;
            last = i;
        }
    }
    last
}

/// Result of applying one fine event.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Applied {
    pub ev: usize,
    nodes_a: [u32; 3],
    len_a: u8,
    nodes_b: [u32; 3],
    len_b: u8,
}

impl Applied {
    fn new(ev: usize) -> Self {
        Applied {
            ev,
            nodes_a: [0; 3],
            len_a: 0,
            nodes_b: [0; 3],
            len_b: 0,
        }
    }

    fn a(mut self, nodes: &[u32]) -> Self {
        self.nodes_a[..nodes.len()].copy_from_slice(nodes);
        self.len_a = nodes.len() as u8;
        self
    }

    fn b(mut self, nodes: &[u32]) -> Self {
        self.nodes_b[..nodes.len()].copy_from_slice(nodes);
        self.len_b = nodes.len() as u8;
        self
    }

    pub(crate) fn record(&self, time: f64, state: AncState) -> EventRecord {
        let (event, sub) = event_of(self.ev);
        EventRecord {
            time,
            event,
            sub,
            nodes_a: self.nodes_a[..self.len_a as usize].to_vec(),
            nodes_b: self.nodes_b[..self.len_b as usize].to_vec(),
            state,
        }
    }
}

/// Lineage sets with the per-locus trees they index into. In the
/// recombination process `lc[i]` and `ld[i]` are the two halves of the same
/// full fragment.
#[derive(Debug, Clone, Default)]
pub(crate) struct Lineages {
    pub la: Vec<u32>,
    pub lb: Vec<u32>,
    pub lc: Vec<u32>,
    pub ld: Vec<u32>,
    pub trees: [Tree; 2],
    pub time: f64,
}

impl Lineages {
    pub(crate) fn reset(&mut self, s: AncState) {
        self.trees[0].reset(s.a + s.c);
        self.trees[1].reset(s.b + s.d);
        self.la.clear();
        self.la.extend(0..s.a);
        self.lc.clear();
        self.lc.extend(s.a..s.a + s.c);
        self.lb.clear();
        self.lb.extend(0..s.b);
        self.ld.clear();
        self.ld.extend(s.b..s.b + s.d);
        self.time = 0.0;
    }

    pub(crate) fn state(&self) -> AncState {
        AncState::new(
            self.la.len() as u32,
            self.lb.len() as u32,
            self.lc.len() as u32,
            self.ld.len() as u32,
        )
    }

    /// Apply a fine event. `paired` selects the recombination-process rule
    /// that a type VII event splits one full fragment `(lc[i], ld[i])`.
    pub(crate) fn apply<R: Rng + ?Sized>(
        &mut self,
        ev: usize,
        paired: bool,
        rng: &mut R,
    ) -> Applied {
        let t = self.time;
        let out = Applied::new(ev);
        match ev {
            EV_I => {
                let (lo, hi) = pick_pair(self.lc.len(), rng);
                let na = merge_in_place(&mut self.trees[0], &mut self.lc, lo, hi, t);
                let nb = merge_in_place(&mut self.trees[1], &mut self.ld, lo, hi, t);
                out.a(&na).b(&nb)
            }
            EV_II => {
                let (lo, hi) = pick_pair(self.lc.len(), rng);
                out.a(&merge_in_place(&mut self.trees[0], &mut self.lc, lo, hi, t))
            }
            EV_III => {
                let (lo, hi) = pick_pair(self.ld.len(), rng);
                out.b(&merge_in_place(&mut self.trees[1], &mut self.ld, lo, hi, t))
            }
            EV_IV_AA => {
                let (lo, hi) = pick_pair(self.la.len(), rng);
                out.a(&merge_in_place(&mut self.trees[0], &mut self.la, lo, hi, t))
            }
            EV_IV_AC => {
                let i = pick(self.la.len(), rng);
                let j = pick(self.lc.len(), rng);
                let (x, y) = (self.la.swap_remove(i), self.lc[j]);
                let id = self.trees[0].merge(x, y, t);
                self.lc[j] = id;
                out.a(&[x, y, id])
            }
            EV_V_BB => {
                let (lo, hi) = pick_pair(self.lb.len(), rng);
                out.b(&merge_in_place(&mut self.trees[1], &mut self.lb, lo, hi, t))
            }
            EV_V_BD => {
                let i = pick(self.lb.len(), rng);
                let j = pick(self.ld.len(), rng);
                let (x, y) = (self.lb.swap_remove(i), self.ld[j]);
                let id = self.trees[1].merge(x, y, t);
                self.ld[j] = id;
                out.b(&[x, y, id])
            }
            EV_VI => {
                let x = self.la.swap_remove(pick(self.la.len(), rng));
                let y = self.lb.swap_remove(pick(self.lb.len(), rng));
                self.lc.push(x);
                self.ld.push(y);
                out.a(&[x]).b(&[y])
            }
            _ => {
                if paired {
                    let i = pick(self.lc.len(), rng);
                    let (x, y) = (self.lc.swap_remove(i), self.ld.swap_remove(i));
                    self.la.push(x);
                    self.lb.push(y);
                    out.a(&[x]).b(&[y])
                } else {
                    let mut out = out;
                    if !self.lc.is_empty() {
                        let x = self.lc.swap_remove(pick(self.lc.len(), rng));
                        self.la.push(x);
                        out = out.a(&[x]);
                    }
                    if !self.ld.is_empty() {
                        let y = self.ld.swap_remove(pick(self.ld.len(), rng));
                        self.lb.push(y);
                        out = out.b(&[y]);
                    }
                    out
                }
            }
        }
    }

    pub(crate) fn genealogy(&self, a: u32, b: u32, c: u32) -> Genealogy {
        Genealogy {
            a,
            b,
            c,
            trees: self.trees.clone(),
        }
    }
}

/// A single ancestral process that can be stepped one transition at a time.
#[derive(Debug, Clone)]
pub struct AncestralProcess {
    kind: ProcessKind,
    rho: f64,
    init: AncState,
    lin: Lineages,
}

impl AncestralProcess {
    pub fn new(kind: ProcessKind, init: AncState, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::NegativeRate {
                name: "rho",
                value: rho,
            });
        }
        if kind == ProcessKind::CRho && init.c != init.d {
            return Err(Error::InvalidArgument(format!(
                "the recombination process needs c = d, got c = {} and d = {}",
                init.c, init.d
            )));
        }
        let mut lin = Lineages::default();
        lin.reset(init);
        Ok(AncestralProcess {
            kind,
            rho,
            init,
            lin,
        })
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn state(&self) -> AncState {
        self.lin.state()
    }

    pub fn time(&self) -> f64 {
        self.lin.time
    }

    pub fn rates(&self) -> [f64; 7] {
        event_rates(self.kind, self.state(), self.rho)
    }

    pub fn absorbed(&self) -> bool {
        self.state().absorbed()
    }

    /// Advance by one transition; `None` when no transition is possible.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<EventRecord> {
        let rates = fine_rates(self.kind, self.state(), self.rho);
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return None;
        }
        self.lin.time += exp_time(total, rng);
        let ev = choose(&rates, total, rng);
        let applied = self.lin.apply(ev, self.kind == ProcessKind::CRho, rng);
        Some(applied.record(self.lin.time, self.state()))
    }

    /// Genealogy of the initial sample, complete once the process is absorbed.
    pub fn genealogy(&self) -> Genealogy {
        self.lin.genealogy(self.init.a, self.init.b, self.init.c)
    }
}

/// Event log and genealogy of a run to absorption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessRun {
    pub log: Vec<EventRecord>,
    pub genealogy: Genealogy,
    pub absorption_time: f64,
}

fn run_to_absorption<R: Rng + ?Sized>(mut proc: AncestralProcess, rng: &mut R) -> ProcessRun {
    let mut log = Vec::new();
    while !proc.absorbed() {
        match proc.step(rng) {
            Some(rec) => log.push(rec),
            None => break,
        }
    }
    ProcessRun {
        log,
        genealogy: proc.genealogy(),
        absorption_time: proc.time(),
    }
}

/// Run the recombination process from `(a, b, c, c)` until both loci have
/// a single lineage.
pub fn sim_c_rho<R: Rng + ?Sized>(
    init: AncState,
    p: &ModelParams,
    rng: &mut R,
) -> Result<ProcessRun> {
    Ok(run_to_absorption(
        AncestralProcess::new(ProcessKind::CRho, init, p.rho)?,
        rng,
    ))
}

/// Run the artificial-recombination process until both loci have a single lineage.
pub fn sim_d_inf<R: Rng + ?Sized>(
    init: AncState,
    p: &ModelParams,
    rng: &mut R,
) -> Result<ProcessRun> {
    Ok(run_to_absorption(
        AncestralProcess::new(ProcessKind::DInf, init, p.rho)?,
        rng,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::stats::proportion;

    #[test]
    fn rate_examples() {
        let r = event_rates(ProcessKind::CRho, AncState::new(1, 1, 0, 0), 10.0);
        assert_eq!(r.iter().sum::<f64>(), 1.0);
        assert_eq!(r[EventType::VI.index()], 1.0);
        let r = event_rates(ProcessKind::CRho, AncState::new(0, 0, 2, 2), 7.0);
        assert_eq!(r, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0]);
        let r = event_rates(ProcessKind::DInf, AncState::new(0, 0, 2, 2), 7.0);
        assert_eq!(r, [0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 7.0]);
        let r = event_rates(ProcessKind::DInf, AncState::new(2, 1, 1, 3), 4.0);
        assert_eq!(r, [0.0, 0.0, 3.0, 3.0, 3.0, 2.0, 6.0]);
    }

    #[test]
    fn first_event_from_two_full_fragments() {
        let rho = 3.0;
        let mut rng = stream_rng(7, 0);
        let reps = 100_000u64;
        let mut hits = 0;
        for _ in 0..reps {
            let mut proc =
                AncestralProcess::new(ProcessKind::CRho, AncState::sample(0, 0, 2), rho).unwrap();
            if proc.step(&mut rng).unwrap().event == EventType::I {
                hits += 1;
            }
        }
        let (f, se) = proportion(hits, reps);
        assert!((f - 1.0 / (1.0 + rho)).abs() < 3.0 * se);
    }

    fn conformance(kind: ProcessKind, s: AncState, rho: f64, seed: u64) {
        let rates = event_rates(kind, s, rho);
        let total: f64 = rates.iter().sum();
        let reps = 100_000u64;
        let mut counts = [0u64; 7];
        let mut rng = stream_rng(seed, 0);
        for _ in 0..reps {
            let mut proc = AncestralProcess::new(kind, s, rho).unwrap();
            counts[proc.step(&mut rng).unwrap().event.index()] += 1;
        }
        for k in 0..7 {
            let (f, se) = proportion(counts[k], reps);
            let expect = rates[k] / total;
            assert!(
                (f - expect).abs() <= 3.0 * se.max(1e-12),
                "{kind:?} {s:?} type {k}: {f} vs {expect}"
            );
        }
    }

    #[test]
    fn rate_table_conformance() {
        conformance(ProcessKind::CRho, AncState::new(2, 1, 2, 2), 5.0, 1);
        conformance(ProcessKind::DInf, AncState::new(1, 2, 3, 1), 5.0, 2);
        conformance(ProcessKind::DInf, AncState::new(2, 2, 2, 2), 1.0, 3);
    }

    #[test]
    fn runs_reach_absorption_with_complete_trees() {
        let p = ModelParams::symmetric(2, 2, 1.0, 10.0);
        let mut rng = stream_rng(8, 0);
        for _ in 0..2000 {
            let run = sim_c_rho(AncState::sample(1, 2, 3), &p, &mut rng).unwrap();
            let g = &run.genealogy;
            assert!(g.trees[0].is_complete() && g.trees[1].is_complete());
            assert_eq!(g.trees[0].leaves, 4);
            assert_eq!(g.trees[1].leaves, 5);
            let merges_a = run.log.iter().filter(|r| r.nodes_a.len() == 3).count();
            let merges_b = run.log.iter().filter(|r| r.nodes_b.len() == 3).count();
            assert_eq!(merges_a, 3);
            assert_eq!(merges_b, 4);
            for rec in &run.log {
                assert_eq!(rec.state.c, rec.state.d);
            }
            let run = sim_d_inf(AncState::sample(1, 2, 3), &p, &mut rng).unwrap();
            assert!(run.genealogy.trees[0].is_complete() && run.genealogy.trees[1].is_complete());
        }
    }

    #[test]
    fn absorbed_start_has_empty_log() {
        let p = ModelParams::symmetric(2, 2, 1.0, 10.0);
        let run = sim_c_rho(AncState::sample(1, 1, 0), &p, &mut stream_rng(1, 1)).unwrap();
        assert!(run.log.is_empty());
        assert!(matches!(
            AncestralProcess::new(ProcessKind::CRho, AncState::new(0, 0, 2, 1), 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
