//! Coupled simulation of the recombination process and the
//! artificial-recombination process with failure detection.
//!
//! While the two processes agree, matched transitions (types IV to VII) are
//! driven by shared clocks and act on both with the same lineage choices.
//! Type I (recombination process only) and types II and III
//! (artificial-recombination process only) have their own clocks; the first
//! of these to fire decouples the processes, which then run independently.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::genealogy::exp_time;
use super::process::{
    choose, fine_rates, AncState, EventRecord, Lineages, ProcessKind, EV_I, EV_II, EV_III, EV_VII,
};
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub status: CouplingStatus,
    /// Kind (1, 2 or 3) of the unmatched event that decoupled the processes.
    pub failure_kind: Option<u8>,
    /// First times `T^(k)` of a type I event in the recombination process
    /// and of type II and III events in the artificial process.
    pub failure_times: [Option<f64>; 3],
    /// First time `U^(1)` the recombination process has no full fragment,
    /// and `U^(2) = U^(3)` the first time the artificial process has `c = d = 0`.
    pub u_times: [Option<f64>; 3],
    pub t_mrca: Option<f64>,
    /// Whether the jump chain of the process behind failure kind `k`, up to
    /// `U^(k)`, has at most one transition other than recombination.
    pub chain_in_s: [bool; 3],
    pub absorption_c: f64,
    pub absorption_d: f64,
    pub log_c: Vec<EventRecord>,
    pub log_d: Vec<EventRecord>,
}

impl CouplingOutcome {
    /// Number of distinct failure kinds whose clock fired.
    pub fn failures(&self) -> usize {
        self.failure_times.iter().filter(|t| t.is_some()).count()
    }

    /// `T^(k) < T^MRCA` for kind `k` in `1..=3`.
    pub fn failed(&self, k: usize) -> bool {
        self.failure_times[k - 1].is_some()
    }
}

/// Per-process bookkeeping for failure and hitting times.
#[derive(Debug, Clone)]
struct Track {
    lin: Lineages,
    first_unmatched: [Option<f64>; 3],
    u: Option<f64>,
    absorbed_at: Option<f64>,
    non_recomb_before_u: u32,
}

impl Track {
    fn observe(&mut self, ev: usize) {
        let t = self.lin.time;
        if self.u.is_none() && ev != EV_VII {
            self.non_recomb_before_u += 1;
        }
        if ev <= EV_III && self.first_unmatched[ev].is_none() {
            self.first_unmatched[ev] = Some(t);
        }
        self.settle();
    }

    fn settle(&mut self) {
        let s = self.lin.state();
        if self.u.is_none() && s.c == 0 && s.d == 0 {
            self.u = Some(self.lin.time);
        }
        if self.absorbed_at.is_none() && s.absorbed() {
            self.absorbed_at = Some(self.lin.time);
        }
    }

    fn finished(&self) -> bool {
        self.u.is_some() && self.absorbed_at.is_some()
    }

    /// Run alone until absorbed and past the first time with no full fragments.
    fn run_alone<R: Rng + ?Sized>(
        &mut self,
        kind: ProcessKind,
        rho: f64,
        log: &mut Option<Vec<EventRecord>>,
        rng: &mut R,
    ) {
        while !self.finished() {
            let rates = fine_rates(kind, self.lin.state(), rho);
            let total: f64 = rates.iter().sum();
            if total <= 0.0 {
                break;
            }
            self.lin.time += exp_time(total, rng);
            let ev = choose(&rates, total, rng);
            let applied = self.lin.apply(ev, kind == ProcessKind::CRho, rng);
            if let Some(log) = log.as_mut() {
                log.push(applied.record(self.lin.time, self.lin.state()));
            }
            self.observe(ev);
        }
    }
}

/// Coupled run from `(a, b, c, c)`, recording both event logs.
pub fn sim_coupled<R: Rng + ?Sized>(
    init: AncState,
    p: &ModelParams,
    rng: &mut R,
) -> Result<CouplingOutcome> {
    coupled(init, p.rho, true, rng)
}

pub(crate) fn coupled<R: Rng + ?Sized>(
    init: AncState,
    rho: f64,
    record: bool,
    rng: &mut R,
) -> Result<CouplingOutcome> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRate {
            name: "rho",
            value: rho,
        });
    }
    if init.c != init.d {
        return Err(Error::InvalidArgument(
            "the coupled processes start from c = d".into(),
        ));
    }
    let mut lin = Lineages::default();
    lin.reset(init);
    let mut shared = Track {
        lin,
        first_unmatched: [None; 3],
        u: None,
        absorbed_at: None,
        non_recomb_before_u: 0,
    };
    shared.settle();
    let mut log_c = record.then(Vec::new);
    let mut log_d = record.then(Vec::new);

    let mut failing = None;
    while !shared.finished() {
        let s = shared.lin.state();
        let mut rates = fine_rates(ProcessKind::CRho, s, rho);
        let pairs = rates[EV_I];
        rates[EV_II] = pairs;
        rates[EV_III] = pairs;
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        shared.lin.time += exp_time(total, rng);
        let ev = choose(&rates, total, rng);
        if ev <= EV_III {
            failing = Some(ev);
            break;
        }
        let applied = shared.lin.apply(ev, true, rng);
        for log in [&mut log_c, &mut log_d].into_iter().flatten() {
            log.push(applied.record(shared.lin.time, shared.lin.state()));
        }
        shared.observe(ev);
    }

    let Some(ev) = failing else {
        let t = shared.absorbed_at.unwrap_or(shared.lin.time);
        return Ok(CouplingOutcome {
            status: CouplingStatus::Success,
            failure_kind: None,
            failure_times: [None; 3],
            u_times: [shared.u; 3],
            t_mrca: Some(t),
            chain_in_s: [shared.non_recomb_before_u <= 1; 3],
            absorption_c: t,
            absorption_d: t,
            log_c: log_c.unwrap_or_default(),
            log_d: log_d.unwrap_or_default(),
        });
    };

    let mut c_proc = shared.clone();
    let mut d_proc = shared;
    let (target, kind, log) = if ev == EV_I {
        (&mut c_proc, ProcessKind::CRho, &mut log_c)
    } else {
        (&mut d_proc, ProcessKind::DInf, &mut log_d)
    };
    let applied = target.lin.apply(ev, kind == ProcessKind::CRho, rng);
    if let Some(log) = log.as_mut() {
        log.push(applied.record(target.lin.time, target.lin.state()));
    }
    target.observe(ev);
    c_proc.run_alone(ProcessKind::CRho, rho, &mut log_c, rng);
    d_proc.run_alone(ProcessKind::DInf, rho, &mut log_d, rng);

    let chain_c = c_proc.non_recomb_before_u <= 1;
    let chain_d = d_proc.non_recomb_before_u <= 1;
    Ok(CouplingOutcome {
        status: CouplingStatus::Failure,
        failure_kind: Some(ev as u8 + 1),
        failure_times: [
            c_proc.first_unmatched[EV_I],
            d_proc.first_unmatched[EV_II],
            d_proc.first_unmatched[EV_III],
        ],
        u_times: [c_proc.u, d_proc.u, d_proc.u],
        t_mrca: None,
        chain_in_s: [chain_c, chain_d, chain_d],
        absorption_c: c_proc.absorbed_at.unwrap_or(c_proc.lin.time),
        absorption_d: d_proc.absorbed_at.unwrap_or(d_proc.lin.time),
        log_c: log_c.unwrap_or_default(),
        log_d: log_d.unwrap_or_default(),
    })
}

/// Tallies over many coupled runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingTally {
    pub reps: u64,
    /// Replicates with `T^(k) < T^MRCA`, for `k = 1, 2, 3`.
    pub failed: [u64; 3],
    /// Replicates in which at least two failure kinds fired.
    pub double: u64,
    /// Replicates whose first failure was of kind `k`.
    pub first_kind: [u64; 3],
    /// Among replicates with `T^(k) < T^MRCA`, those whose jump chain up to
    /// `U^(k)` lies in the single-non-recombination set.
    pub chain_in_s: [u64; 3],
    pub success: u64,
}

impl CouplingTally {
    pub fn push(&mut self, o: &CouplingOutcome) {
        self.reps += 1;
        for k in 0..3 {
            if o.failure_times[k].is_some() {
                self.failed[k] += 1;
                if o.chain_in_s[k] {
                    self.chain_in_s[k] += 1;
                }
            }
        }
        if o.failures() >= 2 {
            self.double += 1;
        }
        match o.failure_kind {
            Some(k) => self.first_kind[k as usize - 1] += 1,
            None => self.success += 1,
        }
    }

    pub fn merge(&mut self, other: &CouplingTally) {
        self.reps += other.reps;
        self.double += other.double;
        self.success += other.success;
        for k in 0..3 {
            self.failed[k] += other.failed[k];
            self.first_kind[k] += other.first_kind[k];
            self.chain_in_s[k] += other.chain_in_s[k];
        }
    }
}

/// Failure statistics over `reps` coupled runs, chunked over RNG streams.
pub fn coupling_tally(init: AncState, rho: f64, reps: u64, seed: u64) -> Result<CouplingTally> {
    use rayon::prelude::*;
    let parts: Result<Vec<CouplingTally>> = crate::rng::chunks(reps)
        .into_par_iter()
        .map(|(stream, size)| {
            let mut rng = crate::rng::stream_rng(seed, stream);
            let mut tally = CouplingTally::default();
            for _ in 0..size {
                tally.push(&coupled(init, rho, false, &mut rng)?);
            }
            Ok(tally)
        })
        .collect();
    let mut total = CouplingTally::default();
    for part in parts? {
        total.merge(&part);
    }
    Ok(total)
}
