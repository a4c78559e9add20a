//! Alternating RB matching and per-F-AP power allocation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{msema_with, swap_phase_with, Matching, NomaUtility, PreferenceState};
use crate::power::{sca_from, PowerContext, ScaConfig};
use crate::rate::{check_feasibility, Allocation, RateReport};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    /// Cap on outer iterations.
    pub x_max: usize,
    pub sca: ScaConfig,
    /// Stop once the weighted sum rate moves by less than this, bit/s.
    pub outer_eps: f64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            x_max: 30,
            sca: ScaConfig::default(),
            outer_eps: 180.0,
            seed: 0,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x_max == 0 {
            return Err(Error::Config("x_max must be at least 1".into()));
        }
        if !(self.outer_eps > 0.0) {
            return Err(Error::Config("outer_eps must be positive".into()));
        }
        self.sca.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointResult {
    pub allocation: Allocation,
    pub report: RateReport,
    /// Weighted sum rate after each outer iteration.
    pub outer_trace: Vec<f64>,
    pub iterations_used: usize,
}

impl JointResult {
    /// Builds a result whose report is evaluated from `allocation`.
    pub fn new(s: &Scenario, allocation: Allocation, outer_trace: Vec<f64>) -> Self {
        let report = RateReport::evaluate(s, &allocation);
        let iterations_used = outer_trace.len();
        Self { allocation, report, outer_trace, iterations_used }
    }

    pub fn weighted_sum_rate(&self) -> f64 {
        self.report.weighted_sum_rate
    }

    /// Running maximum of the outer trace.
    pub fn best_seen_trace(&self) -> Vec<f64> {
        self.outer_trace
            .iter()
            .scan(f64::NEG_INFINITY, |best, &x| {
                *best = best.max(x);
                Some(*best)
            })
            .collect()
    }

    pub fn is_feasible(&self, s: &Scenario) -> bool {
        check_feasibility(s, &self.allocation).is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "assignment": self.allocation.assignment(),
            "alpha": self.allocation.alpha,
            "outer_trace": self.outer_trace,
            "iterations_used": self.iterations_used,
            "weighted_sum_rate": self.report.weighted_sum_rate,
            "report": self.report.summary_json(),
        })
    }
}

/// Re-solves the power split of every matched F-AP for the current
/// assignment, warm-starting from its present split.
pub fn update_powers(s: &Scenario, matching: &Matching, alpha: &mut [[f64; 2]], sca: &ScaConfig) {
    let updated: Vec<Option<[f64; 2]>> = (0..matching.n_faps())
        .into_par_iter()
        .map(|i| {
            let rb = matching.rb_of(i)?;
            let ctx = PowerContext::for_placement(s, i, rb, matching.occupants(rb));
            Some(sca_from(&ctx, sca, alpha[i]).alpha)
        })
        .collect();
    for (slot, new) in alpha.iter_mut().zip(updated) {
        if let Some(a) = new {
            *slot = a;
        }
    }
}

/// Alternates matching and power allocation until the weighted sum rate
/// settles, returning the best allocation seen.
///
/// The returned assignment is finally passed through the swap phase under its
/// own power splits, so no swap-pair remains with respect to the powers it is
/// reported with.
pub fn joint_allocate(s: &Scenario, cfg: &JointConfig) -> Result<JointResult> {
    cfg.validate()?;
    let n = s.n_faps();
    let mut alpha: Vec<[f64; 2]> = (0..n).map(|i| init_alpha(cfg, i)).collect();
    let mut trace = Vec::with_capacity(cfg.x_max);
    let mut best: Option<(f64, Matching, Vec<[f64; 2]>)> = None;

    for _ in 0..cfg.x_max {
        let matching = msema_with(s, &NomaUtility { alpha: &alpha }).matching;
        update_powers(s, &matching, &mut alpha, &cfg.sca);
        let rate = RateReport::evaluate(s, &matching.to_allocation(alpha.clone())).weighted_sum_rate;
        let converged = trace.last().is_some_and(|prev: &f64| (rate - prev).abs() < cfg.outer_eps);
        trace.push(rate);
        if best.as_ref().is_none_or(|(r, _, _)| rate > *r) {
            best = Some((rate, matching, alpha.clone()));
        }
        if converged {
            break;
        }
    }

    let (_, mut matching, alpha) = best.expect("x_max >= 1");
    let u = NomaUtility { alpha: &alpha };
    let mut state = PreferenceState::for_swaps(n, s.n_rbs());
    swap_phase_with(s, &u, &mut matching, &mut state);
    Ok(JointResult::new(s, matching.to_allocation(alpha.clone()), trace))
}

fn init_alpha(cfg: &JointConfig, fap: usize) -> [f64; 2] {
    cfg.sca.alpha_init.draw(fap)
}
