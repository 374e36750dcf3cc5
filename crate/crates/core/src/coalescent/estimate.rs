//! Monte Carlo estimates of the ordered sampling distribution from simulated
//! genealogies with mutations dropped on the marginal trees.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::genealogy::exp_time;
use super::genealogy::{kingman, KeyCoder, MutationLaw};
use super::loose::loose_into;
use super::process::{choose, fine_rates, AncState, Lineages, ProcessKind};
use crate::error::{Error, Result};
use crate::model::{validate_params, Locus, ModelParams, SampleConfig};
use crate::rng::{chunks, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McModel {
    /// Ancestral recombination graph at the model's `rho`.
    Arg,
    /// Loose-linkage coalescent.
    Loose,
    /// Unlinked loci.
    Independent,
}

impl FromStr for McModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arg" => Ok(McModel::Arg),
            "loose" => Ok(McModel::Loose),
            "independent" => Ok(McModel::Independent),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model {s:?}, expected arg, loose or independent"
            ))),
        }
    }
}

impl McModel {
    pub fn name(self) -> &'static str {
        match self {
            McModel::Arg => "arg",
            McModel::Loose => "loose",
            McModel::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
    pub hits: u64,
    pub reps: u64,
}

/// Counts of typed outcomes for one observation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTally {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub reps: u64,
    coder_k: usize,
    coder_l: usize,
    counts: BTreeMap<u64, u64>,
}

impl PatternTally {
    fn coder(&self) -> KeyCoder {
        KeyCoder {
            k: self.coder_k,
            l: self.coder_l,
            base: (self.a + self.b + self.c) as u64 + 1,
        }
    }

    /// Ordered-sample estimate for `cfg`: the frequency of its unordered
    /// counts divided by the number of orderings.
    pub fn estimate(&self, cfg: &SampleConfig) -> Result<McEstimate> {
        if (cfg.a_total(), cfg.b_total(), cfg.c_total()) != (self.a, self.b, self.c)
            || cfg.k() != self.coder_k
            || cfg.l() != self.coder_l
        {
            return Err(Error::InvalidArgument(
                "configuration does not match the tallied pattern".into(),
            ));
        }
        let hits = self
            .counts
            .get(&self.coder().encode(cfg))
            .copied()
            .unwrap_or(0);
        let (f, se) = crate::stats::proportion(hits, self.reps);
        let m = cfg.multinomial();
        Ok(McEstimate {
            estimate: f / m,
            se: se / m,
            hits,
            reps: self.reps,
        })
    }

    /// Observed typed outcomes with their counts.
    pub fn outcomes(&self) -> Vec<(SampleConfig, u64)> {
        let coder = self.coder();
        self.counts
            .iter()
            .map(|(&k, &v)| (coder.decode(k), v))
            .collect()
    }
}

/// Reusable buffers for one worker.
#[derive(Default)]
struct Workspace {
    lin: Lineages,
    types_a: Vec<u8>,
    types_b: Vec<u8>,
}

fn simulate_trees<R: Rng + ?Sized>(
    ws: &mut Workspace,
    model: McModel,
    init: AncState,
    rho: f64,
    rng: &mut R,
) -> Result<()> {
    match model {
        McModel::Arg => {
            ws.lin.reset(init);
            let lin = &mut ws.lin;
            while !lin.state().absorbed() {
                let rates = fine_rates(ProcessKind::CRho, lin.state(), rho);
                let total: f64 = rates.iter().sum();
                lin.time += exp_time(total, rng);
                let ev = choose(&rates, total, rng);
                lin.apply(ev, true, rng);
            }
        }
        McModel::Loose => {
            loose_into(&mut ws.lin, init, rho, None, rng)?;
        }
        McModel::Independent => {
            ws.lin.reset(init);
            let lin = &mut ws.lin;
            let mut a_side: Vec<u32> = lin.la.drain(..).chain(lin.lc.drain(..)).collect();
            let mut b_side: Vec<u32> = lin.lb.drain(..).chain(lin.ld.drain(..)).collect();
            let [tree_a, tree_b] = &mut lin.trees;
            kingman(tree_a, &mut a_side, 0.0, rng);
            kingman(tree_b, &mut b_side, 0.0, rng);
        }
    }
    Ok(())
}

/// Simulate `reps` genealogies for the pattern `(a, b, c)` and tally the
/// typed samples. Work is split into fixed chunks with their own RNG
/// streams and merged by integer addition.
pub fn tally_pattern(
    a: u32,
    b: u32,
    c: u32,
    p: &ModelParams,
    model: McModel,
    reps: u64,
    seed: u64,
) -> Result<PatternTally> {
    validate_params(p)?;
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if a + b + c == 0 {
        return Err(Error::EmptySample);
    }
    let coder = KeyCoder::new(p.k, p.l, a + b + c)?;
    if model == McModel::Loose {
        super::loose::loose_alpha(c, p.rho)?;
    } else if !(p.rho >= 0.0) {
        return Err(Error::NegativeRate {
            name: "rho",
            value: p.rho,
        });
    }
    let law_a = MutationLaw::new(p, Locus::A);
    let law_b = MutationLaw::new(p, Locus::B);
    let init = AncState::sample(a, b, c);
    let parts: Result<Vec<BTreeMap<u64, u64>>> = chunks(reps)
        .into_par_iter()
        .map(|(stream, size)| {
            let mut rng = stream_rng(seed, stream);
            let mut ws = Workspace::default();
            let mut counts = BTreeMap::new();
            for _ in 0..size {
                simulate_trees(&mut ws, model, init, p.rho, &mut rng)?;
                law_a.assign(&ws.lin.trees[0], &mut ws.types_a, &mut rng);
                law_b.assign(&ws.lin.trees[1], &mut ws.types_b, &mut rng);
                *counts
                    .entry(coder.encode_leaves(a, b, c, &ws.types_a, &ws.types_b))
                    .or_insert(0) += 1;
            }
            Ok(counts)
        })
        .collect();
    let mut counts = BTreeMap::new();
    for part in parts? {
        for (k, v) in part {
            *counts.entry(k).or_insert(0) += v;
        }
    }
    Ok(PatternTally {
        a,
        b,
        c,
        reps,
        coder_k: p.k,
        coder_l: p.l,
        counts,
    })
}

/// Estimate of the ordered sampling probability of `cfg` with its standard error.
pub fn estimate_q_mc(
    cfg: &SampleConfig,
    p: &ModelParams,
    model: McModel,
    reps: u64,
    seed: u64,
) -> Result<McEstimate> {
    cfg.check_against(p)?;
    tally_pattern(
        cfg.a_total(),
        cfg.b_total(),
        cfg.c_total(),
        p,
        model,
        reps,
        seed,
    )?
    .estimate(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::q0;
    use crate::model::typed_configs;
    use crate::oracle::q_exact;

    #[test]
    fn independent_matches_q0() {
        let p = ModelParams::pim(&[0.3, 0.7], &[0.6, 0.4], 1.0, 0.5, 10.0);
        let tally = tally_pattern(1, 1, 2, &p, McModel::Independent, 200_000, 31).unwrap();
        for cfg in typed_configs(2, 2, 1, 1, 2) {
            let est = tally.estimate(&cfg).unwrap();
            let exact = q0(&cfg, &p).unwrap();
            assert!(
                (est.estimate - exact).abs() <= 3.5 * est.se.max(1e-9),
                "{}: {est:?} vs {exact}",
                cfg.token()
            );
        }
    }

    #[test]
    fn arg_matches_oracle_on_small_pattern() {
        let p = ModelParams::symmetric(2, 2, 1.0, 2.0);
        let tally = tally_pattern(0, 0, 2, &p, McModel::Arg, 200_000, 32).unwrap();
        for cfg in typed_configs(2, 2, 0, 0, 2) {
            let est = tally.estimate(&cfg).unwrap();
            let exact = q_exact(&cfg, &p).unwrap();
            assert!(
                (est.estimate - exact).abs() <= 3.5 * est.se,
                "{}: {est:?} vs {exact}",
                cfg.token()
            );
        }
    }

    #[test]
    fn outcomes_sum_to_reps_and_are_thread_independent() {
        let p = ModelParams::symmetric(2, 2, 1.0, 30.0);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let x = one.install(|| tally_pattern(1, 0, 2, &p, McModel::Loose, 40_000, 33).unwrap());
        let y = tally_pattern(1, 0, 2, &p, McModel::Loose, 40_000, 33).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.outcomes().iter().map(|(_, v)| v).sum::<u64>(), 40_000);
    }

    #[test]
    fn model_names_parse() {
        for m in [McModel::Arg, McModel::Loose, McModel::Independent] {
            assert_eq!(m.name().parse::<McModel>().unwrap(), m);
        }
        assert!("exact".parse::<McModel>().is_err());
    }
}
