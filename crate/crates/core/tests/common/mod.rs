//! Exact first-step analysis of the counting chains behind the coupled
//! ancestral processes, used as an oracle for simulated failure rates.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

/// `(a, b, c, d)` lineage counts.
pub type Counts = (u32, u32, u32, u32);

#[allow(clippy::upper_case_acronyms)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Label {
    I,
    II,
    III,
    Other,
}

pub fn absorbed((a, b, c, d): Counts) -> bool {
    a + c <= 1 && b + d <= 1
}

fn common((a, b, c, d): Counts) -> Vec<(f64, Label, Counts)> {
    let (af, bf, cf, df) = (a as f64, b as f64, c as f64, d as f64);
    let mut out = Vec::new();
    if a > 0 {
        out.push((
            af * (af - 1.0) / 2.0 + af * cf,
            Label::Other,
            (a - 1, b, c, d),
        ));
    }
    if b > 0 {
        out.push((
            bf * (bf - 1.0) / 2.0 + bf * df,
            Label::Other,
            (a, b - 1, c, d),
        ));
    }
    if a > 0 && b > 0 {
        out.push((af * bf, Label::Other, (a - 1, b - 1, c + 1, d + 1)));
    }
    out
}

/// Transitions of the process with recombination rate `rho` (`c = d`).
pub fn c_rho(s: Counts, rho: f64) -> Vec<(f64, Label, Counts)> {
    let (a, b, c, d) = s;
    let mut out = common(s);
    if c >= 2 {
        out.push((
            c as f64 * (c as f64 - 1.0) / 2.0,
            Label::I,
            (a, b, c - 1, d - 1),
        ));
    }
    if c >= 1 {
        out.push((
            rho * c as f64 / 2.0,
            Label::Other,
            (a + 1, b + 1, c - 1, d - 1),
        ));
    }
    out
}

/// Transitions of the artificial-recombination process.
pub fn d_inf(s: Counts, rho: f64) -> Vec<(f64, Label, Counts)> {
    let (a, b, c, d) = s;
    let mut out = common(s);
    if c >= 2 {
        out.push((
            c as f64 * (c as f64 - 1.0) / 2.0,
            Label::II,
            (a, b, c - 1, d),
        ));
    }
    if d >= 2 {
        out.push((
            d as f64 * (d as f64 - 1.0) / 2.0,
            Label::III,
            (a, b, c, d - 1),
        ));
    }
    if c.max(d) >= 1 {
        let (dc, dd) = ((c > 0) as u32, (d > 0) as u32);
        out.push((
            rho * c.max(d) as f64 / 2.0,
            Label::Other,
            (a + dc, b + dd, c - dc, d - dd),
        ));
    }
    out
}

/// Solve `h(s) = sum_t P(s, t) h(t) + P(s, target)` on the states reachable
/// from `start` without firing a target; `reward` gives the value collected
/// when a transition with a target label fires from a state.
pub fn first_step<T, R>(
    start: Counts,
    trans: T,
    is_target: impl Fn(Label) -> bool,
    reward: R,
) -> f64
where
    T: Fn(Counts) -> Vec<(f64, Label, Counts)>,
    R: Fn(Counts, Label, Counts) -> f64,
{
    let mut index: HashMap<Counts, usize> = HashMap::new();
    let mut order = Vec::new();
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        if index.contains_key(&s) {
            continue;
        }
        index.insert(s, order.len());
        order.push(s);
        if absorbed(s) {
            continue;
        }
        for (rate, label, t) in trans(s) {
            if rate > 0.0 && !is_target(label) {
                stack.push(t);
            }
        }
    }
    let n = order.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, &s) in order.iter().enumerate() {
        if absorbed(s) {
            continue;
        }
        let moves: Vec<_> = trans(s).into_iter().filter(|m| m.0 > 0.0).collect();
        let total: f64 = moves.iter().map(|m| m.0).sum();
        for (rate, label, t) in moves {
            if is_target(label) {
                rhs[i] += rate / total * reward(s, label, t);
            } else {
                m[(i, index[&t])] -= rate / total;
            }
        }
    }
    let h = m.lu().solve(&rhs).expect("absorbing chain is nonsingular");
    h[index[&start]]
}

/// Probability that a transition labelled in `targets` ever fires.
pub fn hit(
    start: Counts,
    trans: impl Fn(Counts) -> Vec<(f64, Label, Counts)>,
    targets: &[Label],
) -> f64 {
    first_step(start, trans, |l| targets.contains(&l), |_, _, _| 1.0)
}

/// Probability that process `C` ever fires a type I transition from `(0, 0, c, c)`.
pub fn failure_one(c: u32, rho: f64) -> f64 {
    hit((0, 0, c, c), |s| c_rho(s, rho), &[Label::I])
}

/// Transitions of the coupled chain while both processes agree: the shared
/// moves plus the three unmatched clocks at `c(c-1)/2`.
fn coupled(s: Counts, rho: f64) -> Vec<(f64, Label, Counts)> {
    let (a, b, c, d) = s;
    let mut out = common(s);
    if c >= 1 {
        out.push((
            rho * c as f64 / 2.0,
            Label::Other,
            (a + 1, b + 1, c - 1, d - 1),
        ));
    }
    if c >= 2 {
        let r = c as f64 * (c as f64 - 1.0) / 2.0;
        out.push((r, Label::I, s));
        out.push((r, Label::II, s));
        out.push((r, Label::III, s));
    }
    out
}

/// Probability that at least two distinct failure kinds occur, starting
/// coupled at `(0, 0, c, c)`. After the first failure the processes evolve
/// independently.
pub fn double_failure(c: u32, rho: f64) -> f64 {
    let after = |s: Counts, label: Label, _t: Counts| -> f64 {
        let (a, b, c, d) = s;
        let h_c = hit(s, |x| c_rho(x, rho), &[Label::I]);
        match label {
            Label::I => hit(s, |x| d_inf(x, rho), &[Label::II, Label::III]),
            Label::II => {
                1.0 - (1.0 - h_c) * (1.0 - hit((a, b, c - 1, d), |x| d_inf(x, rho), &[Label::III]))
            }
            Label::III => {
                1.0 - (1.0 - h_c) * (1.0 - hit((a, b, c, d - 1), |x| d_inf(x, rho), &[Label::II]))
            }
            Label::Other => unreachable!(),
        }
    };
    first_step(
        (0, 0, c, c),
        |s| coupled(s, rho),
        |l| l != Label::Other,
        after,
    )
}
