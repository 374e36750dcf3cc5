//! Backward-in-time processes: the two-locus ancestral process, the
//! artificial-recombination process, their coupling, the loose-linkage
//! coalescent, mutation overlay and Monte Carlo sampling distributions.

mod coupling;
mod estimate;
mod genealogy;
mod loose;
mod process;

use std::io::Write;

pub use coupling::{coupling_tally, sim_coupled, CouplingOutcome, CouplingStatus, CouplingTally};
pub use estimate::{estimate_q_mc, tally_pattern, McEstimate, McModel, PatternTally};
pub use genealogy::{drop_mutations, kingman, kingman_tree, Genealogy, Tree, NO_PARENT};
pub use loose::{admissible_chains, forced_chain, loose_alpha, sim_loose, LooseBranch, LooseRun};
pub use process::{
    event_rates, sim_c_rho, sim_d_inf, AncState, AncestralProcess, EventRecord, EventType,
    ProcessKind, ProcessRun, SubKind,
};

use crate::error::Result;

/// Write an event log as JSON lines, one event per line.
pub fn write_event_log<W: Write>(mut out: W, log: &[EventRecord]) -> Result<()> {
    for rec in log {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
