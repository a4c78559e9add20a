//! Reference allocators and brute-force oracles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{update_powers, JointResult};
use crate::matching::{msema_with, Matching, NomaUtility, PairUtility};
use crate::power::{is_feasible, sca_power_allocation, PowerContext, ScaConfig};
use crate::rate::{noise_plus_interference, Allocation, RateReport};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Exhaustive,
    Oma,
    FixedPower,
    RandomRb,
}

/// Largest number of candidate assignments exhaustive search will visit.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

/// Number of assignments with every F-AP on one RB or none, `(M + 1)^N`.
pub fn candidate_count(n_faps: usize, n_rbs: usize) -> u128 {
    (0..n_faps).fold(1u128, |acc, _| acc.saturating_mul(n_rbs as u128 + 1))
}

/// Decodes candidate `index`; F-AP 0 is the most significant digit and
/// digit 0 means unmatched, so candidates come in lexicographic order.
fn decode_candidate(mut index: u128, n_faps: usize, n_rbs: usize) -> Vec<Option<usize>> {
    let base = n_rbs as u128 + 1;
    let mut out = vec![None; n_faps];
    for slot in out.iter_mut().rev() {
        let digit = (index % base) as usize;
        index /= base;
        *slot = digit.checked_sub(1);
    }
    out
}

fn admissible(s: &Scenario, assignment: &[Option<usize>]) -> bool {
    let mut count = vec![0usize; s.n_rbs()];
    let mut load = vec![0.0; s.n_rbs()];
    for (i, rb) in assignment.iter().enumerate() {
        if let Some(rb) = *rb {
            count[rb] += 1;
            load[rb] += s.rue_leakage(i, rb);
        }
    }
    (0..s.n_rbs()).all(|rb| count[rb] <= s.z_max() && load[rb] <= s.i_max(rb))
}

/// Powers for a fixed assignment: each matched F-AP runs the SCA iteration
/// from the configured start; unmatched F-APs keep that start.
fn powers_for(s: &Scenario, assignment: &[Option<usize>], sca: &ScaConfig) -> Vec<[f64; 2]> {
    let matching = Matching::from_assignment(assignment, s.n_rbs());
    (0..s.n_faps())
        .map(|i| match assignment[i] {
            Some(rb) => {
                let ctx = PowerContext::for_placement(s, i, rb, matching.occupants(rb));
                sca_power_allocation(&ctx, sca).alpha
            }
            None => sca.alpha_init.draw(i),
        })
        .collect()
}

/// Enumerates every admissible assignment, allocates powers for each, and
/// keeps the best. Ties go to the lexicographically first assignment.
pub fn exhaustive_search(s: &Scenario, sca: &ScaConfig) -> Result<JointResult> {
    sca.validate()?;
    let (n, m) = (s.n_faps(), s.n_rbs());
    let candidates = candidate_count(n, m);
    if candidates > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge { candidates, limit: EXHAUSTIVE_LIMIT });
    }
    let best = (0..candidates as u64)
        .into_par_iter()
        .filter_map(|k| {
            let assignment = decode_candidate(k as u128, n, m);
            if !admissible(s, &assignment) {
                return None;
            }
            let alpha = powers_for(s, &assignment, sca);
            let rate = RateReport::evaluate(s, &Allocation::from_assignment(&assignment, m, alpha)).weighted_sum_rate;
            Some((k, rate))
        })
        .reduce_with(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        });
    // the all-unmatched assignment is always admissible
    let (k, rate) = best.expect("at least one admissible assignment");
    let assignment = decode_candidate(k as u128, n, m);
    let alpha = powers_for(s, &assignment, sca);
    Ok(JointResult::new(s, Allocation::from_assignment(&assignment, m, alpha), vec![rate]))
}

/// How transmission without superposition is modelled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmaMode {
    /// Only the strong user is served, with full power.
    #[default]
    StrongUserOnly,
    /// Each user gets half the time with full power.
    TimeSharing,
}

struct TimeSharingUtility;

impl TimeSharingUtility {
    fn rates(s: &Scenario, fap: usize, rb: usize, others: &[usize]) -> ([f64; 2], [f64; 2]) {
        let sinr = [0, 1].map(|u| {
            let c = noise_plus_interference(s, fap, u, rb, others.iter().copied());
            s.h_own(fap, u, rb) * s.fap_power() / c
        });
        (sinr, sinr.map(|x| 0.5 * s.bandwidth() * (1.0 + x).log2()))
    }
}

impl PairUtility for TimeSharingUtility {
    fn pair_utility(&self, s: &Scenario, fap: usize, rb: usize, others: &[usize]) -> f64 {
        let (_, r) = Self::rates(s, fap, rb, others);
        let w = s.weights();
        w[0] * r[0] + w[1] * r[1]
    }
}

/// Matching without NOMA: the same matching engine driven by single-user rates.
pub fn oma_baseline(s: &Scenario, mode: OmaMode) -> JointResult {
    let n = s.n_faps();
    match mode {
        OmaMode::StrongUserOnly => {
            let alpha = vec![[1.0, 0.0]; n];
            let matching = msema_with(s, &NomaUtility { alpha: &alpha }).matching;
            let allocation = matching.to_allocation(alpha);
            let rate = RateReport::evaluate(s, &allocation).weighted_sum_rate;
            JointResult::new(s, allocation, vec![rate])
        }
        OmaMode::TimeSharing => {
            let matching = msema_with(s, &TimeSharingUtility).matching;
            let allocation = matching.to_allocation(vec![[0.5, 0.5]; n]);
            let mut sinr = vec![[0.0; 2]; n];
            let mut rate = vec![[0.0; 2]; n];
            for i in 0..n {
                if let Some(rb) = matching.rb_of(i) {
                    let others: Vec<usize> = matching.occupants(rb).iter().copied().filter(|&j| j != i).collect();
                    (sinr[i], rate[i]) = TimeSharingUtility::rates(s, i, rb, &others);
                }
            }
            let w = s.weights();
            let total = rate.iter().map(|r| w[0] * r[0] + w[1] * r[1]).sum();
            let report = RateReport {
                sinr,
                rate,
                rue_interference: crate::rate::rue_interference(s, &allocation),
                weighted_sum_rate: total,
            };
            JointResult { allocation, report, outer_trace: vec![total], iterations_used: 1 }
        }
    }
}

/// Matching with every F-AP pinned to `alpha_fixed`; no power iteration.
pub fn fixed_power_baseline(s: &Scenario, alpha_fixed: [f64; 2]) -> Result<JointResult> {
    fixed_power_per_fap(s, &vec![alpha_fixed; s.n_faps()])
}

/// Matching with per-F-AP pinned power splits.
pub fn fixed_power_per_fap(s: &Scenario, alpha: &[[f64; 2]]) -> Result<JointResult> {
    if alpha.len() != s.n_faps() {
        return Err(Error::InvalidArgument(format!("expected {} power splits, got {}", s.n_faps(), alpha.len())));
    }
    if let Some(bad) = alpha.iter().find(|a| !is_feasible(**a)) {
        return Err(Error::InvalidArgument(format!("power split {bad:?} is infeasible")));
    }
    let matching = msema_with(s, &NomaUtility { alpha }).matching;
    let allocation = matching.to_allocation(alpha.to_vec());
    let rate = RateReport::evaluate(s, &allocation).weighted_sum_rate;
    Ok(JointResult::new(s, allocation, vec![rate]))
}

/// F-APs in random order each take a random RB with quota and budget to
/// spare; powers then come from the SCA iteration.
pub fn random_rb_baseline(s: &Scenario, sca: &ScaConfig, seed: u64) -> Result<JointResult> {
    sca.validate()?;
    let (n, m) = (s.n_faps(), s.n_rbs());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut count = vec![0usize; m];
    let mut load = vec![0.0; m];
    let mut assignment = vec![None; n];
    for i in order {
        let open: Vec<usize> = (0..m)
            .filter(|&rb| count[rb] < s.z_max() && load[rb] + s.rue_leakage(i, rb) <= s.i_max(rb))
            .collect();
        if open.is_empty() {
            continue;
        }
        let rb = open[rng.random_range(0..open.len())];
        count[rb] += 1;
        load[rb] += s.rue_leakage(i, rb);
        assignment[i] = Some(rb);
    }
    let matching = Matching::from_assignment(&assignment, m);
    let mut alpha: Vec<[f64; 2]> = (0..n).map(|i| sca.alpha_init.draw(i)).collect();
    update_powers(s, &matching, &mut alpha, sca);
    let allocation = matching.to_allocation(alpha);
    let rate = RateReport::evaluate(s, &allocation).weighted_sum_rate;
    Ok(JointResult::new(s, allocation, vec![rate]))
}

/// Brute-force maximiser of the weighted pair rate over the grid
/// `{(a/r, b/r) : a + b <= r}`. Ties keep the first point in row-major order.
pub fn grid_oracle_power(ctx: &PowerContext, resolution: usize) -> Result<[f64; 2]> {
    if resolution < 10 {
        return Err(Error::InvalidArgument(format!("grid resolution must be at least 10, got {resolution}")));
    }
    let r = resolution as f64;
    let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
    for a in 0..=resolution {
        for b in 0..=(resolution - a) {
            let alpha = [a as f64 / r, b as f64 / r];
            let v = ctx.weighted_rate(alpha);
            if v > best.1 {
                best = (alpha, v);
            }
        }
    }
    Ok(best.0)
}
