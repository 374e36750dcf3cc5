//! The loose-linkage coalescent: a mixture of one forced early coalescence
//! among full fragments and the artificial-recombination process with its
//! failure transitions banned, completed by independent Kingman trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::genealogy::{exp_time, kingman, pick};
use super::process::{
    choose, fine_rates, AncState, EventRecord, Lineages, ProcessKind, EV_I, EV_II, EV_III, EV_VII,
};
use crate::error::{Error, Result};
use crate::model::{binom, ModelParams};

use super::genealogy::Genealogy;

/// Which branch of the mixture produced a genealogy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LooseBranch {
    /// One coalescence of full fragments among recombinations.
    ForcedCoalescence,
    /// Artificial-recombination process with failures banned.
    NoFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooseRun {
    pub branch: LooseBranch,
    /// Jump chain up to the first state without full fragments.
    pub chain: Vec<AncState>,
    pub log: Vec<EventRecord>,
    pub genealogy: Genealogy,
}

/// Mixture weight `alpha = binom(c, 2) / rho`.
pub fn loose_alpha(c: u32, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRate {
            name: "rho",
            value: rho,
        });
    }
    let alpha = binom(c, 2) / rho;
    if alpha >= 1.0 {
        return Err(Error::AlphaOverflow { alpha });
    }
    Ok(alpha)
}

/// Number of admissible jump chains with a single coalescence among `c`
/// full fragments and `c - 1` recombinations: the coalescence must happen
/// while at least two full fragments remain.
pub fn admissible_chains(c: u32) -> usize {
    c.saturating_sub(1) as usize
}

/// Jump chain from `(a, b, c, c)` with the coalescence after `k` recombinations.
pub fn forced_chain(a: u32, b: u32, c: u32, k: usize) -> Vec<AncState> {
    assert!(
        k < admissible_chains(c),
        "coalescence position out of range"
    );
    let mut s = AncState::sample(a, b, c);
    let mut chain = vec![s];
    for m in 0..c as usize {
        if m == k {
            s.c -= 1;
            s.d -= 1;
        } else {
            s = AncState::new(s.a + 1, s.b + 1, s.c - 1, s.d - 1);
        }
        chain.push(s);
    }
    chain
}

/// Draw one loose-linkage genealogy for the pattern `(a, b, c)`.
pub fn sim_loose<R: Rng + ?Sized>(
    a: u32,
    b: u32,
    c: u32,
    p: &ModelParams,
    rng: &mut R,
) -> Result<LooseRun> {
    let mut lin = Lineages::default();
    let mut log = Vec::new();
    let mut chain = Vec::new();
    let branch = loose_into(
        &mut lin,
        AncState::sample(a, b, c),
        p.rho,
        Some((&mut log, &mut chain)),
        rng,
    )?;
    Ok(LooseRun {
        branch,
        chain,
        log,
        genealogy: lin.genealogy(a, b, c),
    })
}

type Recorder<'a> = Option<(&'a mut Vec<EventRecord>, &'a mut Vec<AncState>)>;

pub(crate) fn loose_into<R: Rng + ?Sized>(
    lin: &mut Lineages,
    init: AncState,
    rho: f64,
    mut rec: Recorder<'_>,
    rng: &mut R,
) -> Result<LooseBranch> {
    let alpha = loose_alpha(init.c, rho)?;
    lin.reset(init);
    if let Some((_, chain)) = rec.as_mut() {
        chain.push(init);
    }
    let branch = if alpha > 0.0 && rng.random::<f64>() < alpha {
        let k = pick(admissible_chains(init.c), rng);
        for m in 0..init.c as usize {
            let rates = fine_rates(ProcessKind::CRho, lin.state(), rho);
            lin.time += exp_time(rates.iter().sum(), rng);
            let ev = if m == k { EV_I } else { EV_VII };
            let applied = lin.apply(ev, true, rng);
            if let Some((log, chain)) = rec.as_mut() {
                log.push(applied.record(lin.time, lin.state()));
                chain.push(lin.state());
            }
        }
        LooseBranch::ForcedCoalescence
    } else {
        loop {
            let s = lin.state();
            if s.c == 0 && s.d == 0 {
                break;
            }
            let rates = fine_rates(ProcessKind::DInf, s, rho);
            let total: f64 = rates.iter().sum();
            lin.time += exp_time(total, rng);
            let ev = choose(&rates, total, rng);
            if ev == EV_II || ev == EV_III {
                continue;
            }
            let applied = lin.apply(ev, false, rng);
            if let Some((log, chain)) = rec.as_mut() {
                log.push(applied.record(lin.time, lin.state()));
                chain.push(lin.state());
            }
        }
        LooseBranch::NoFailure
    };
    let t0 = lin.time;
    let [tree_a, tree_b] = &mut lin.trees;
    kingman(tree_a, &mut lin.la, t0, rng);
    kingman(tree_b, &mut lin.lb, t0, rng);
    Ok(branch)
}
