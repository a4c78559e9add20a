//! RB assignment as a many-to-one matching game with peer effects.
//!
//! F-APs propose to RBs in order of their solo utility. Each RB walks its
//! proposers from the highest solo utility down and holds one only if the RB's
//! total utility goes up, at most `z_max` of them, refusing any that would push
//! its RUE above the interference budget. Once no unmatched F-AP has an RB left
//! to try, pairs of F-APs on different RBs exchange RBs whenever the exchange
//! keeps both RUEs within budget and leaves neither F-AP nor either RB worse
//! off, with at least one strictly better. Each pair may exchange at most
//! twice. F-APs may also move into open slots when that raises the summed
//! utility of the RBs involved.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{pair_utility_with, Allocation};
use crate::scenario::Scenario;

/// Utility an F-AP obtains on an RB it shares with `others`.
pub trait PairUtility: Sync {
    fn pair_utility(&self, s: &Scenario, fap: usize, rb: usize, others: &[usize]) -> f64;
}

/// NOMA weighted pair rate under fixed power splits.
#[derive(Debug, Clone, Copy)]
pub struct NomaUtility<'a> {
    pub alpha: &'a [[f64; 2]],
}

impl PairUtility for NomaUtility<'_> {
    fn pair_utility(&self, s: &Scenario, fap: usize, rb: usize, others: &[usize]) -> f64 {
        pair_utility_with(s, fap, rb, self.alpha[fap], others)
    }
}

/// Utility of F-AP `fap` on `rb`, treating every other F-AP that `a` places on
/// `rb` as a co-channel interferer.
pub fn fap_utility(s: &Scenario, a: &Allocation, fap: usize, rb: usize) -> f64 {
    let others: Vec<usize> = a.occupants(rb).into_iter().filter(|&j| j != fap).collect();
    pair_utility_with(s, fap, rb, a.alpha[fap], &others)
}

/// Sum of the occupants' utilities on `rb`, including their mutual interference.
pub fn rb_utility(s: &Scenario, a: &Allocation, rb: usize, occupants: &[usize]) -> f64 {
    rb_utility_with(s, &NomaUtility { alpha: &a.alpha }, rb, occupants)
}

pub fn rb_utility_with<U: PairUtility + ?Sized>(s: &Scenario, u: &U, rb: usize, occupants: &[usize]) -> f64 {
    occupants
        .iter()
        .map(|&i| {
            let others: Vec<usize> = occupants.iter().copied().filter(|&j| j != i).collect();
            u.pair_utility(s, i, rb, &others)
        })
        .sum()
}

/// Current RB of every F-AP and the occupants of every RB.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    assignment: Vec<Option<usize>>,
    occupants: Vec<Vec<usize>>,
}

impl Matching {
    pub fn empty(n_faps: usize, n_rbs: usize) -> Self {
        Self {
            assignment: vec![None; n_faps],
            occupants: vec![Vec::new(); n_rbs],
        }
    }

    pub fn from_assignment(assignment: &[Option<usize>], n_rbs: usize) -> Self {
        let mut m = Self::empty(assignment.len(), n_rbs);
        for (i, rb) in assignment.iter().enumerate() {
            if let Some(rb) = *rb {
                m.assign(i, rb);
            }
        }
        m
    }

    pub fn n_faps(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_rbs(&self) -> usize {
        self.occupants.len()
    }

    pub fn rb_of(&self, fap: usize) -> Option<usize> {
        self.assignment[fap]
    }

    /// Occupants of `rb` in ascending F-AP order.
    pub fn occupants(&self, rb: usize) -> &[usize] {
        &self.occupants[rb]
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    fn assign(&mut self, fap: usize, rb: usize) {
        self.unassign(fap);
        self.assignment[fap] = Some(rb);
        let occ = &mut self.occupants[rb];
        let pos = occ.partition_point(|&j| j < fap);
        occ.insert(pos, fap);
    }

    fn unassign(&mut self, fap: usize) {
        if let Some(rb) = self.assignment[fap].take() {
            self.occupants[rb].retain(|&j| j != fap);
        }
    }

    /// Exchanges the RBs of two matched F-APs.
    fn swap(&mut self, i: usize, j: usize) {
        let (ri, rj) = (self.assignment[i].unwrap(), self.assignment[j].unwrap());
        self.assign(i, rj);
        self.assign(j, ri);
    }

    pub fn to_allocation(&self, alpha: Vec<[f64; 2]>) -> Allocation {
        Allocation::from_assignment(&self.assignment, self.n_rbs(), alpha)
    }

    pub fn from_allocation(a: &Allocation, n_rbs: usize) -> Self {
        Self::from_assignment(&a.assignment(), n_rbs)
    }

    /// RUE interference on `rb` from its occupants.
    pub fn rue_interference(&self, s: &Scenario, rb: usize) -> f64 {
        self.occupants[rb].iter().map(|&i| s.rue_leakage(i, rb)).sum()
    }

    /// `{"<fap>": rb | null}` plus the executed swaps and moves, in order.
    pub fn to_json(&self, trace: &SwapTrace) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .assignment
            .iter()
            .enumerate()
            .map(|(i, rb)| (i.to_string(), serde_json::json!(rb)))
            .collect();
        serde_json::json!({ "assignment": map, "swaps": trace.swaps, "moves": trace.moves })
    }
}

/// Preference lists and bookkeeping of one matching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceState {
    /// RBs each F-AP may propose to, most preferred first.
    pub fap_prefs: Vec<Vec<usize>>,
    /// F-APs each RB is willing to hold, most preferred first.
    pub rb_prefs: Vec<Vec<usize>>,
    pub unmatched: BTreeSet<usize>,
    /// RBs that turned each F-AP away.
    pub rejected: Vec<BTreeSet<usize>>,
    /// `swap_count[i][j]` counts exchanges initiated by the pair `(i, j)`, `i < j`.
    pub swap_count: Vec<Vec<u32>>,
    pub proposals: usize,
    /// Moves into open slots made by each F-AP.
    pub move_count: Vec<u32>,
}

impl PreferenceState {
    /// Empty lists and zeroed counters, for running the swap phase on its own.
    pub fn for_swaps(n_faps: usize, n_rbs: usize) -> Self {
        Self {
            fap_prefs: vec![Vec::new(); n_faps],
            rb_prefs: vec![Vec::new(); n_rbs],
            unmatched: BTreeSet::new(),
            rejected: vec![BTreeSet::new(); n_faps],
            swap_count: vec![vec![0; n_faps]; n_faps],
            proposals: 0,
            move_count: vec![0; n_faps],
        }
    }

    pub fn swaps_between(&self, i: usize, j: usize) -> u32 {
        self.swap_count[i][j] + self.swap_count[j][i]
    }
}

/// One executed exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub fap_i: usize,
    pub fap_j: usize,
    /// RB of `fap_i` before the exchange.
    pub rb_i: usize,
    /// RB of `fap_j` before the exchange.
    pub rb_j: usize,
    /// Utilities of `i`, `j`, `rb_i`, `rb_j` before and after.
    pub before: [f64; 4],
    pub after: [f64; 4],
}

/// One executed move of an F-AP into an open slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub fap: usize,
    /// RB left behind, `None` if the F-AP was unmatched.
    pub from: Option<usize>,
    pub to: usize,
    /// Summed utility of the RBs involved before and after.
    pub before: f64,
    pub after: f64,
}

/// Everything the swap phase executed, in order within each kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwapTrace {
    pub swaps: Vec<SwapRecord>,
    pub moves: Vec<MoveRecord>,
}

fn descending_by_score(mut items: Vec<(usize, f64)>) -> Vec<usize> {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    items.into_iter().map(|(k, _)| k).collect()
}

fn build_preferences<U: PairUtility + ?Sized>(s: &Scenario, u: &U) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let (n, m) = (s.n_faps(), s.n_rbs());
    let admissible = |i: usize, rb: usize| s.rue_leakage(i, rb) <= s.i_max(rb);
    let solo: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|rb| u.pair_utility(s, i, rb, &[])).collect()).collect();
    let fap_prefs = (0..n)
        .map(|i| descending_by_score((0..m).filter(|&rb| admissible(i, rb)).map(|rb| (rb, solo[i][rb])).collect()))
        .collect();
    let rb_prefs = (0..m)
        .map(|rb| descending_by_score((0..n).filter(|&i| admissible(i, rb)).map(|i| (i, solo[i][rb])).collect()))
        .collect();
    (fap_prefs, rb_prefs)
}

pub fn deferred_acceptance(s: &Scenario, a: &Allocation) -> (Matching, PreferenceState) {
    deferred_acceptance_with(s, &NomaUtility { alpha: &a.alpha })
}

/// Proposal phase. Every F-AP ends matched or refused by every RB it could use.
pub fn deferred_acceptance_with<U: PairUtility + ?Sized>(s: &Scenario, u: &U) -> (Matching, PreferenceState) {
    let (n, m) = (s.n_faps(), s.n_rbs());
    let (fap_prefs, rb_prefs) = build_preferences(s, u);
    let mut rank = vec![vec![usize::MAX; n]; m];
    for (rb, prefs) in rb_prefs.iter().enumerate() {
        for (pos, &i) in prefs.iter().enumerate() {
            rank[rb][i] = pos;
        }
    }

    let mut matching = Matching::empty(n, m);
    let mut next = vec![0usize; n];
    let mut rejected = vec![BTreeSet::new(); n];
    let mut proposals = 0;

    loop {
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); m];
        for i in 0..n {
            if matching.rb_of(i).is_none() && next[i] < fap_prefs[i].len() {
                incoming[fap_prefs[i][next[i]]].push(i);
                next[i] += 1;
                proposals += 1;
            }
        }
        if incoming.iter().all(Vec::is_empty) {
            break;
        }
        for (rb, new) in incoming.into_iter().enumerate() {
            if new.is_empty() {
                continue;
            }
            let mut candidates: Vec<usize> = matching.occupants(rb).iter().copied().chain(new).collect();
            candidates.sort_by_key(|&i| rank[rb][i]);
            let budget = s.i_max(rb);
            let mut load = 0.0;
            let mut held: Vec<usize> = Vec::new();
            let mut held_utility = 0.0;
            for i in candidates {
                let leak = s.rue_leakage(i, rb);
                let mut with = held.clone();
                with.push(i);
                let with_utility = rb_utility_with(s, u, rb, &with);
                if held.len() < s.z_max() && load + leak <= budget && with_utility > held_utility {
                    held_utility = with_utility;
                    load += leak;
                    held = with;
                    matching.assign(i, rb);
                } else {
                    matching.unassign(i);
                    rejected[i].insert(rb);
                }
            }
        }
    }

    let unmatched = (0..n).filter(|&i| matching.rb_of(i).is_none()).collect();
    let state = PreferenceState {
        fap_prefs,
        rb_prefs,
        unmatched,
        rejected,
        swap_count: vec![vec![0; n]; n],
        proposals,
        move_count: vec![0; n],
    };
    (matching, state)
}

/// Relative tolerance separating "equal" from "better" utilities.
const UTILITY_RTOL: f64 = 1e-12;

/// Utilities of `i`, `j`, `Φ(i)`, `Φ(j)` before and after exchanging `i` and `j`.
fn swap_utilities<U: PairUtility + ?Sized>(s: &Scenario, u: &U, m: &Matching, i: usize, j: usize) -> ([f64; 4], [f64; 4]) {
    let (ri, rj) = (m.rb_of(i).unwrap(), m.rb_of(j).unwrap());
    let without = |rb: usize, k: usize| -> Vec<usize> { m.occupants(rb).iter().copied().filter(|&x| x != k).collect() };
    let (rest_i, rest_j) = (without(ri, i), without(rj, j));
    let with = |rest: &[usize], k: usize| -> Vec<usize> {
        let mut v = rest.to_vec();
        v.push(k);
        v.sort_unstable();
        v
    };
    let before = [
        u.pair_utility(s, i, ri, &rest_i),
        u.pair_utility(s, j, rj, &rest_j),
        rb_utility_with(s, u, ri, m.occupants(ri)),
        rb_utility_with(s, u, rj, m.occupants(rj)),
    ];
    let after = [
        u.pair_utility(s, i, rj, &rest_j),
        u.pair_utility(s, j, ri, &rest_i),
        rb_utility_with(s, u, ri, &with(&rest_i, j)),
        rb_utility_with(s, u, rj, &with(&rest_j, i)),
    ];
    (before, after)
}

/// Whether `after` is a Pareto improvement on `before` with at least one strict gain.
pub(crate) fn pareto_improves(before: &[f64; 4], after: &[f64; 4]) -> bool {
    let mut strict = false;
    for (b, a) in before.iter().zip(after) {
        let tol = UTILITY_RTOL * b.abs().max(a.abs());
        if *a < b - tol {
            return false;
        }
        if *a > b + tol {
            strict = true;
        }
    }
    strict
}

fn interference_allows<U: PairUtility + ?Sized>(s: &Scenario, _u: &U, m: &Matching, i: usize, j: usize) -> bool {
    let (ri, rj) = (m.rb_of(i).unwrap(), m.rb_of(j).unwrap());
    let tol_i = s.i_max(ri) - m.rue_interference(s, ri);
    let tol_j = s.i_max(rj) - m.rue_interference(s, rj);
    tol_i + s.rue_leakage(i, ri) - s.rue_leakage(j, ri) >= 0.0 && tol_j + s.rue_leakage(j, rj) - s.rue_leakage(i, rj) >= 0.0
}

fn check_pair(m: &Matching, i: usize, j: usize) -> Result<()> {
    if i == j || i >= m.n_faps() || j >= m.n_faps() {
        return Err(Error::InvalidArgument(format!("swap candidates must be two distinct F-APs, got {i} and {j}")));
    }
    match (m.rb_of(i), m.rb_of(j)) {
        (Some(ri), Some(rj)) if ri != rj => Ok(()),
        (Some(_), Some(_)) => Err(Error::InvalidArgument(format!("F-APs {i} and {j} share an RB"))),
        _ => Err(Error::InvalidArgument(format!("F-APs {i} and {j} must both be matched"))),
    }
}

pub fn is_swap_pair(s: &Scenario, a: &Allocation, matching: &Matching, i: usize, j: usize) -> Result<bool> {
    is_swap_pair_with(s, &NomaUtility { alpha: &a.alpha }, matching, i, j)
}

/// Whether exchanging the RBs of `i` and `j` respects both RUE budgets and is
/// a Pareto improvement for `i`, `j` and their two RBs.
pub fn is_swap_pair_with<U: PairUtility + ?Sized>(s: &Scenario, u: &U, matching: &Matching, i: usize, j: usize) -> Result<bool> {
    check_pair(matching, i, j)?;
    if !interference_allows(s, u, matching, i, j) {
        return Ok(false);
    }
    let (before, after) = swap_utilities(s, u, matching, i, j);
    Ok(pareto_improves(&before, &after))
}

/// Pairs that currently form a swap-pair, optionally skipping pairs whose
/// counter is exhausted.
pub fn eligible_swap_pairs<U: PairUtility + ?Sized>(
    s: &Scenario,
    u: &U,
    matching: &Matching,
    state: Option<&PreferenceState>,
) -> Vec<(usize, usize)> {
    let n = matching.n_faps();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if check_pair(matching, i, j).is_err() {
                continue;
            }
            if state.is_some_and(|st| st.swaps_between(i, j) >= 2) {
                continue;
            }
            if is_swap_pair_with(s, u, matching, i, j).unwrap_or(false) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Welfare of `rb` before and after `fap` moves into it from `from`, or
/// `None` when the move breaks the quota or the RUE budget of `rb`.
fn move_utilities<U: PairUtility + ?Sized>(
    s: &Scenario,
    u: &U,
    m: &Matching,
    fap: usize,
    rb: usize,
) -> Option<(f64, f64)> {
    let from = m.rb_of(fap);
    if from == Some(rb) || m.occupants(rb).len() >= s.z_max() {
        return None;
    }
    if m.rue_interference(s, rb) + s.rue_leakage(fap, rb) > s.i_max(rb) {
        return None;
    }
    let mut joined = m.occupants(rb).to_vec();
    joined.push(fap);
    let mut before = rb_utility_with(s, u, rb, m.occupants(rb));
    let mut after = rb_utility_with(s, u, rb, &joined);
    if let Some(f) = from {
        let left: Vec<usize> = m.occupants(f).iter().copied().filter(|&k| k != fap).collect();
        before += rb_utility_with(s, u, f, m.occupants(f));
        after += rb_utility_with(s, u, f, &left);
    }
    Some((before, after))
}

/// Moves an F-AP may still make into open slots.
fn move_limit(m: &Matching) -> u32 {
    2 * m.n_rbs() as u32
}

/// Executes swap-pairs until none with an unexhausted counter remains.
///
/// Between rounds of exchanges, an F-AP may also move into an open slot of
/// another RB (or, if unmatched, take one) when that raises the summed
/// utility of the RBs involved.
pub fn swap_phase_with<U: PairUtility + ?Sized>(
    s: &Scenario,
    u: &U,
    matching: &mut Matching,
    state: &mut PreferenceState,
) -> SwapTrace {
    let n = matching.n_faps();
    let mut trace = SwapTrace::default();
    loop {
        let mut executed = false;
        for i in 0..n {
            for j in i + 1..n {
                if state.swaps_between(i, j) >= 2 || check_pair(matching, i, j).is_err() {
                    continue;
                }
                if !interference_allows(s, u, matching, i, j) {
                    continue;
                }
                let (before, after) = swap_utilities(s, u, matching, i, j);
                if !pareto_improves(&before, &after) {
                    continue;
                }
                let (rb_i, rb_j) = (matching.rb_of(i).unwrap(), matching.rb_of(j).unwrap());
                matching.swap(i, j);
                state.swap_count[i][j] += 1;
                trace.swaps.push(SwapRecord { fap_i: i, fap_j: j, rb_i, rb_j, before, after });
                executed = true;
            }
        }
        for i in 0..n {
            for rb in 0..matching.n_rbs() {
                if state.move_count[i] >= move_limit(matching) {
                    break;
                }
                let Some((before, after)) = move_utilities(s, u, matching, i, rb) else {
                    continue;
                };
                if after > before + UTILITY_RTOL * before.abs().max(after.abs()) {
                    let from = matching.rb_of(i);
                    matching.assign(i, rb);
                    state.move_count[i] += 1;
                    trace.moves.push(MoveRecord { fap: i, from, to: rb, before, after });
                    executed = true;
                }
            }
        }
        if !executed {
            return trace;
        }
    }
}

/// F-APs and RBs with an improving move still available.
pub fn eligible_moves<U: PairUtility + ?Sized>(
    s: &Scenario,
    u: &U,
    matching: &Matching,
    state: Option<&PreferenceState>,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..matching.n_faps() {
        if state.is_some_and(|st| st.move_count[i] >= move_limit(matching)) {
            continue;
        }
        for rb in 0..matching.n_rbs() {
            if let Some((before, after)) = move_utilities(s, u, matching, i, rb) {
                if after > before + UTILITY_RTOL * before.abs().max(after.abs()) {
                    out.push((i, rb));
                }
            }
        }
    }
    out
}

/// Full result of a matching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsemaOutcome {
    pub matching: Matching,
    /// Matching at the end of the proposal phase.
    pub proposal_matching: Matching,
    pub state: PreferenceState,
    pub swaps: Vec<SwapRecord>,
    pub moves: Vec<MoveRecord>,
}

pub fn msema(s: &Scenario, a: &Allocation) -> Matching {
    msema_with(s, &NomaUtility { alpha: &a.alpha }).matching
}

/// Proposal phase followed by the swap phase.
pub fn msema_with<U: PairUtility + ?Sized>(s: &Scenario, u: &U) -> MsemaOutcome {
    let (proposal_matching, mut state) = deferred_acceptance_with(s, u);
    let mut matching = proposal_matching.clone();
    let SwapTrace { swaps, moves } = swap_phase_with(s, u, &mut matching, &mut state);
    state.unmatched = (0..matching.n_faps()).filter(|&i| matching.rb_of(i).is_none()).collect();
    MsemaOutcome { matching, proposal_matching, state, swaps, moves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::tests::flat_scenario;
    use crate::rate::{check_feasibility, rue_interference, weighted_sum_rate};
    use crate::scenario::{generate_scenario, ScenarioParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ALPHA: [f64; 2] = [0.2, 0.8];

    fn alloc_for(m: &Matching) -> Allocation {
        m.to_allocation(vec![ALPHA; m.n_faps()])
    }

    #[test]
    fn empty_rb_utility_is_interference_free() {
        let s = flat_scenario(2, 1, 0.5, |_, _| {});
        let a = Allocation::unmatched(2, 1, ALPHA);
        let c = s.l_rrh(0, 0, 0) * s.rrh_power() + s.noise_power();
        let p = s.fap_power();
        let expect = s.bandwidth()
            * (0.9 * (1.0 + 0.5 * 0.2 * p / c).log2() + 1.1 * (1.0 + 0.5 * 0.8 * p / (0.5 * 0.2 * p + c)).log2());
        assert_relative_eq!(fap_utility(&s, &a, 0, 0), expect, max_relative = 1e-12);
        assert_eq!(rb_utility(&s, &a, 0, &[]), 0.0);
        assert_relative_eq!(rb_utility(&s, &a, 0, &[0]), expect, max_relative = 1e-12);

        let shared = Allocation::from_assignment(&[None, Some(0)], 1, vec![ALPHA; 2]);
        assert!(fap_utility(&s, &shared, 0, 0) < expect);
    }

    #[test]
    fn pair_utility_below_solo_sum() {
        let s = generate_scenario(&ScenarioParams { seed: 5, ..Default::default() }).unwrap();
        let a = Allocation::unmatched(6, 3, ALPHA);
        let pair = rb_utility(&s, &a, 1, &[0, 3]);
        let solo = rb_utility(&s, &a, 1, &[0]) + rb_utility(&s, &a, 1, &[3]);
        assert!(pair < solo);
    }

    #[test]
    fn single_fap_single_rb() {
        let s = flat_scenario(1, 1, 0.5, |_, p| p.z_max = 1);
        let a = Allocation::unmatched(1, 1, ALPHA);
        let (m, st) = deferred_acceptance(&s, &a);
        assert_eq!(m.rb_of(0), Some(0));
        assert!(st.unmatched.is_empty());
    }

    #[test]
    fn quota_holds_the_preferred_faps() {
        // own gains 0.3 < 0.5 < 0.9: F-APs 2 and 1 are preferred by the RB
        let s = flat_scenario(3, 1, 1e-6, |g, p| {
            p.z_max = 2;
            for (i, h) in [0.3, 0.5, 0.9].into_iter().enumerate() {
                g.h_own[i] = [vec![h], vec![h / 2.0]];
            }
        });
        let a = Allocation::unmatched(3, 1, ALPHA);
        let (m, st) = deferred_acceptance(&s, &a);
        assert_eq!(m.occupants(0), &[1, 2]);
        assert_eq!(st.unmatched, BTreeSet::from([0]));
        assert_eq!(st.rejected[0], BTreeSet::from([0]));
        assert_eq!(st.rb_prefs[0], vec![2, 1, 0]);
    }

    #[test]
    fn budget_refusals_leave_faps_unmatched() {
        // leakage 1 W * 0.01 each against a 15 mW budget: only one fits
        let s = flat_scenario(2, 1, 0.01, |_, p| {
            p.z_max = 2;
            p.i_max_dbm = 10.0 * 15f64.log10();
        });
        let a = Allocation::unmatched(2, 1, ALPHA);
        let (m, st) = deferred_acceptance(&s, &a);
        assert_eq!(m.occupants(0).len(), 1);
        assert_eq!(st.unmatched.len(), 1);
        assert!(check_feasibility(&s, &alloc_for(&m)).is_empty());
    }

    #[test]
    fn matching_json_shape() {
        let m = Matching::from_assignment(&[Some(1), None], 2);
        let v = m.to_json(&SwapTrace::default());
        assert_eq!(v["assignment"]["0"], 1);
        assert!(v["assignment"]["1"].is_null());
        assert_eq!(v["swaps"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn swap_pair_preconditions() {
        let s = flat_scenario(3, 2, 0.5, |_, _| {});
        let a = Allocation::unmatched(3, 2, ALPHA);
        let m = Matching::from_assignment(&[Some(0), Some(0), None], 2);
        assert!(is_swap_pair(&s, &a, &m, 0, 0).is_err());
        assert!(is_swap_pair(&s, &a, &m, 0, 1).is_err());
        assert!(is_swap_pair(&s, &a, &m, 0, 2).is_err());
    }

    #[test]
    fn symmetric_swap_is_not_an_improvement() {
        let s = flat_scenario(2, 2, 0.5, |_, _| {});
        let a = Allocation::unmatched(2, 2, ALPHA);
        let m = Matching::from_assignment(&[Some(0), Some(1)], 2);
        assert!(!is_swap_pair(&s, &a, &m, 0, 1).unwrap());
    }

    /// Two F-APs whose initial RBs are poor for them; crossing over is better
    /// for everyone. RB 1 budget decides whether the crossing is allowed.
    fn crossing_scenario(budget_dbm: f64) -> Scenario {
        flat_scenario(2, 2, 1e-6, |g, p| {
            p.z_max = 1;
            p.i_max_dbm = budget_dbm;
            // F-AP 0 is strong on RB 1, F-AP 1 strong on RB 0
            g.h_own[0] = [vec![1e-3, 1e-1], vec![5e-4, 5e-2]];
            g.h_own[1] = [vec![1e-1, 1e-3], vec![5e-2, 5e-4]];
            g.g_fap_rue[0] = vec![1e-9, 1e-2];
            g.g_fap_rue[1] = vec![1e-9, 1e-9];
        })
    }

    #[test]
    fn budget_gate_blocks_improving_swap() {
        // F-AP 0 leaks 10 mW into RUE 1; a 1 mW budget forbids moving it there
        let s = crossing_scenario(0.0);
        let a = Allocation::unmatched(2, 2, ALPHA);
        let m = Matching::from_assignment(&[Some(0), Some(1)], 2);
        assert!(!is_swap_pair(&s, &a, &m, 0, 1).unwrap());
        let roomy = crossing_scenario(30.0);
        assert!(is_swap_pair(&roomy, &a, &m, 0, 1).unwrap());
    }

    #[test]
    fn swap_phase_executes_dominating_exchange() {
        let s = crossing_scenario(30.0);
        let a = Allocation::unmatched(2, 2, ALPHA);
        let u = NomaUtility { alpha: &a.alpha };
        let mut m = Matching::from_assignment(&[Some(0), Some(1)], 2);
        let (_, mut st) = deferred_acceptance(&s, &a);
        let before = weighted_sum_rate(&s, &alloc_for(&m));
        let trace = swap_phase_with(&s, &u, &mut m, &mut st);
        assert_eq!(trace.swaps.len(), 1);
        assert!(trace.moves.is_empty());
        assert_eq!(m.assignment(), &[Some(1), Some(0)]);
        assert!(weighted_sum_rate(&s, &alloc_for(&m)) > before);
        // the proposal phase already finds this matching, so nothing changes
        let out = msema_with(&s, &u);
        assert!(out.swaps.is_empty());
        assert_eq!(out.matching, out.proposal_matching);
    }

    #[test]
    fn crowded_faps_spread_into_an_empty_rb() {
        let s = flat_scenario(2, 2, 0.5, |_, _| {});
        let a = Allocation::unmatched(2, 2, ALPHA);
        let u = NomaUtility { alpha: &a.alpha };
        let mut m = Matching::from_assignment(&[Some(0), Some(0)], 2);
        let before = weighted_sum_rate(&s, &alloc_for(&m));
        let trace = swap_phase_with(&s, &u, &mut m, &mut PreferenceState::for_swaps(2, 2));
        assert_eq!(trace.moves.len(), 1);
        assert_eq!(m.assignment(), &[Some(1), Some(0)]);
        assert!(weighted_sum_rate(&s, &alloc_for(&m)) > before);
        assert!(eligible_moves(&s, &u, &m, None).is_empty());
    }

    #[test]
    fn move_respects_budget() {
        let s = flat_scenario(2, 2, 0.5, |g, p| {
            p.i_max_dbm = 0.0;
            g.g_fap_rue[0] = vec![1e-9, 1e-2];
            g.g_fap_rue[1] = vec![1e-9, 1e-2];
        });
        let a = Allocation::unmatched(2, 2, ALPHA);
        let u = NomaUtility { alpha: &a.alpha };
        let m = Matching::from_assignment(&[Some(0), Some(0)], 2);
        assert!(eligible_moves(&s, &u, &m, None).is_empty());
    }

    #[test]
    fn rb_refuses_a_proposer_that_lowers_its_utility() {
        // strong solo links, co-tier gain equal to the own gain
        let s = flat_scenario(2, 1, 1.0, |g, _| g.l_rrh = vec![vec![[1e-12; 2]; 2]]);
        let a = Allocation::unmatched(2, 1, ALPHA);
        let (m, st) = deferred_acceptance(&s, &a);
        assert_eq!(m.occupants(0), &[0]);
        assert!(st.unmatched.contains(&1));
    }

    /// Brute-force restatement of the swap-pair test built on the rate model.
    fn swap_pair_oracle(s: &Scenario, alpha: &[[f64; 2]], m: &Matching, i: usize, j: usize) -> bool {
        let pre = m.to_allocation(alpha.to_vec());
        let mut assign = m.assignment().to_vec();
        assign.swap(i, j);
        let post = Allocation::from_assignment(&assign, m.n_rbs(), alpha.to_vec());
        let over_budget = rue_interference(s, &post)
            .iter()
            .enumerate()
            .any(|(rb, x)| *x > s.i_max(rb) && (rb == m.rb_of(i).unwrap() || rb == m.rb_of(j).unwrap()));
        if over_budget {
            return false;
        }
        let w = s.weights();
        let fap_u = |a: &Allocation, k: usize| {
            let r = crate::rate::user_rates(s, a, k);
            w[0] * r[0] + w[1] * r[1]
        };
        let rb_u = |a: &Allocation, rb: usize| a.occupants(rb).iter().map(|&k| fap_u(a, k)).sum::<f64>();
        let (ri, rj) = (m.rb_of(i).unwrap(), m.rb_of(j).unwrap());
        let before = [fap_u(&pre, i), fap_u(&pre, j), rb_u(&pre, ri), rb_u(&pre, rj)];
        let after = [fap_u(&post, i), fap_u(&post, j), rb_u(&post, ri), rb_u(&post, rj)];
        pareto_improves(&before, &after)
    }

    #[test]
    fn swap_pair_agrees_with_oracle_on_small_instances() {
        let mut positives = 0;
        for seed in 0..300 {
            let p = ScenarioParams { seed, n_faps: 3, n_rrhs: 3, z_max: 2, i_max_dbm: -75.0, ..Default::default() };
            let s = generate_scenario(&p).unwrap();
            let alpha = vec![[0.15, 0.85], [0.3, 0.7], [0.05, 0.95]];
            for assign in [[Some(0), Some(1), Some(2)], [Some(0), Some(0), Some(1)], [Some(2), Some(1), Some(2)]] {
                let m = Matching::from_assignment(&assign, 3);
                for i in 0..3 {
                    for j in i + 1..3 {
                        if m.rb_of(i) == m.rb_of(j) {
                            continue;
                        }
                        let a = m.to_allocation(alpha.clone());
                        let got = is_swap_pair(&s, &a, &m, i, j).unwrap();
                        assert_eq!(got, swap_pair_oracle(&s, &alpha, &m, i, j), "seed {seed} {assign:?} ({i},{j})");
                        positives += got as usize;
                    }
                }
            }
        }
        assert!(positives > 0);
    }

    proptest! {
        #[test]
        fn msema_output_is_feasible_stable_and_improving(seed in any::<u64>(), n in 2usize..9, z in 1usize..4) {
            let p = ScenarioParams { seed, n_faps: n, n_rrhs: 3, z_max: z, ..Default::default() };
            let s = generate_scenario(&p).unwrap();
            let a = Allocation::unmatched(n, 3, ALPHA);
            let u = NomaUtility { alpha: &a.alpha };
            let out = msema_with(&s, &u);
            prop_assert!(out.state.proposals <= n * 3);
            prop_assert!(out.swaps.len() <= n * (n - 1));
            let alloc = alloc_for(&out.matching);
            prop_assert!(check_feasibility(&s, &alloc).is_empty());
            prop_assert!(check_feasibility(&s, &alloc_for(&out.proposal_matching)).is_empty());
            for rec in &out.swaps {
                prop_assert!(pareto_improves(&rec.before, &rec.after));
            }
            for mv in &out.moves {
                prop_assert!(mv.after > mv.before);
            }
            prop_assert!(eligible_swap_pairs(&s, &u, &out.matching, Some(&out.state)).is_empty());
            prop_assert!(eligible_moves(&s, &u, &out.matching, Some(&out.state)).is_empty());
            let da = weighted_sum_rate(&s, &alloc_for(&out.proposal_matching));
            prop_assert!(weighted_sum_rate(&s, &alloc) >= da * (1.0 - 1e-12));
            // every unmatched F-AP was refused by every RB it could use
            for &i in &out.state.unmatched {
                prop_assert!(out.state.fap_prefs[i].iter().all(|rb| out.state.rejected[i].contains(rb)));
            }
        }
    }
}
