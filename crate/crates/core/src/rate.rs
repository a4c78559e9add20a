//! Interference, SINR and rate evaluation for a given allocation.

use serde::{Deserialize, Serialize};

use crate::fmt::sig6;
use crate::scenario::Scenario;

/// RB assignment plus per-F-AP power split.
///
/// `beta[i][m]` is set when F-AP `i` transmits on RB `m`; `alpha[i]` holds the
/// fractions of `P_i` given to the strong and weak user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub beta: Vec<Vec<bool>>,
    pub alpha: Vec<[f64; 2]>,
}

impl Allocation {
    /// No F-AP matched, every F-AP using `alpha`.
    pub fn unmatched(n_faps: usize, n_rbs: usize, alpha: [f64; 2]) -> Self {
        Self {
            beta: vec![vec![false; n_rbs]; n_faps],
            alpha: vec![alpha; n_faps],
        }
    }

    pub fn from_assignment(assignment: &[Option<usize>], n_rbs: usize, alpha: Vec<[f64; 2]>) -> Self {
        let beta = assignment
            .iter()
            .map(|rb| (0..n_rbs).map(|m| *rb == Some(m)).collect())
            .collect();
        Self { beta, alpha }
    }

    pub fn n_faps(&self) -> usize {
        self.beta.len()
    }

    /// First RB F-AP `fap` occupies, if any.
    pub fn rb_of(&self, fap: usize) -> Option<usize> {
        self.beta[fap].iter().position(|&b| b)
    }

    pub fn assignment(&self) -> Vec<Option<usize>> {
        (0..self.n_faps()).map(|i| self.rb_of(i)).collect()
    }

    /// F-APs transmitting on `rb`, ascending.
    pub fn occupants(&self, rb: usize) -> Vec<usize> {
        (0..self.n_faps()).filter(|&i| self.beta[i][rb]).collect()
    }
}

/// Sum of `c_n` terms seen by user `user` of F-AP `fap` on `rb` when the F-APs
/// in `others` share the RB: co-tier + cross-tier + noise.
pub(crate) fn noise_plus_interference(
    s: &Scenario,
    fap: usize,
    user: usize,
    rb: usize,
    others: impl IntoIterator<Item = usize>,
) -> f64 {
    let co: f64 = others
        .into_iter()
        .filter(|&j| j != fap)
        .map(|j| s.h_cross(j, fap, user, rb) * s.fap_power())
        .sum();
    co + s.l_rrh(rb, fap, user) * s.rrh_power() + s.noise_power()
}

/// SINRs of the NOMA pair given its interference-plus-noise terms `c`.
pub(crate) fn pair_sinr_with(s: &Scenario, fap: usize, rb: usize, alpha: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let p = s.fap_power();
    let (h1, h2) = (s.h_own(fap, 0, rb), s.h_own(fap, 1, rb));
    [h1 * alpha[0] * p / c[0], h2 * alpha[1] * p / (h2 * alpha[0] * p + c[1])]
}

/// Weighted pair rate of F-AP `fap` on `rb` with `others` sharing the RB.
pub(crate) fn pair_utility_with(
    s: &Scenario,
    fap: usize,
    rb: usize,
    alpha: [f64; 2],
    others: &[usize],
) -> f64 {
    let c = [0, 1].map(|u| noise_plus_interference(s, fap, u, rb, others.iter().copied()));
    let sinr = pair_sinr_with(s, fap, rb, alpha, c);
    let w = s.weights();
    let b = s.bandwidth();
    w[0] * b * (1.0 + sinr[0]).log2() + w[1] * b * (1.0 + sinr[1]).log2()
}

/// Interference at user `user` of F-AP `fap` from the other F-APs on `rb`.
pub fn co_tier_interference(s: &Scenario, a: &Allocation, fap: usize, user: usize, rb: usize) -> f64 {
    (0..a.n_faps())
        .filter(|&j| j != fap && a.beta[j][rb])
        .map(|j| s.h_cross(j, fap, user, rb) * s.fap_power())
        .sum()
}

/// Interference at user `user` of F-AP `fap` from the RRH that owns `rb`.
pub fn cross_tier_interference(s: &Scenario, _a: &Allocation, fap: usize, user: usize, rb: usize) -> f64 {
    s.l_rrh(rb, fap, user) * s.rrh_power()
}

/// SINRs of the strong and weak user of `fap` on `rb`. The strong user is
/// assumed to cancel the weak user's signal perfectly.
pub fn sinr_pair(s: &Scenario, a: &Allocation, fap: usize, rb: usize) -> [f64; 2] {
    let c = [0, 1].map(|u| {
        co_tier_interference(s, a, fap, u, rb) + cross_tier_interference(s, a, fap, u, rb) + s.noise_power()
    });
    pair_sinr_with(s, fap, rb, a.alpha[fap], c)
}

/// Rates of both users of `fap` in bit/s; zero when unmatched.
pub fn user_rates(s: &Scenario, a: &Allocation, fap: usize) -> [f64; 2] {
    match a.rb_of(fap) {
        Some(rb) => sinr_pair(s, a, fap, rb).map(|x| s.bandwidth() * (1.0 + x).log2()),
        None => [0.0, 0.0],
    }
}

pub fn weighted_sum_rate(s: &Scenario, a: &Allocation) -> f64 {
    let w = s.weights();
    (0..a.n_faps())
        .map(|i| {
            let r = user_rates(s, a, i);
            w[0] * r[0] + w[1] * r[1]
        })
        .sum()
}

/// Interference received by each RUE from the F-APs reusing its RB.
pub fn rue_interference(s: &Scenario, a: &Allocation) -> Vec<f64> {
    (0..s.n_rbs())
        .map(|rb| {
            (0..a.n_faps())
                .filter(|&i| a.beta[i][rb])
                .map(|i| s.rue_leakage(i, rb))
                .sum()
        })
        .collect()
}

/// Relative slack allowed when comparing RUE interference against its
/// budget; the swap test and this check sum the same terms in different orders.
pub const INTERFERENCE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    /// `beta` is not an `N x M` indicator matrix.
    BinaryAssignment,
    /// An F-AP occupies more than one RB.
    SingleRb { fap: usize, count: usize },
    /// More than `z_max` F-APs share one RB.
    RbQuota { rb: usize, count: usize },
    /// RUE interference above its budget.
    RueInterference { rb: usize, interference: f64, limit: f64 },
    /// A power fraction is negative or not finite.
    NonNegativePower { fap: usize, user: usize },
    /// Power fractions sum above one.
    PowerBudget { fap: usize, total: f64 },
}

/// Lists every violated allocation constraint; empty when feasible.
pub fn check_feasibility(s: &Scenario, a: &Allocation) -> Vec<Violation> {
    let (n, m) = (s.n_faps(), s.n_rbs());
    if a.beta.len() != n || a.beta.iter().any(|row| row.len() != m) || a.alpha.len() != n {
        return vec![Violation::BinaryAssignment];
    }
    let mut out = Vec::new();
    for (fap, row) in a.beta.iter().enumerate() {
        let count = row.iter().filter(|&&b| b).count();
        if count > 1 {
            out.push(Violation::SingleRb { fap, count });
        }
    }
    for rb in 0..m {
        let count = a.beta.iter().filter(|row| row[rb]).count();
        if count > s.z_max() {
            out.push(Violation::RbQuota { rb, count });
        }
    }
    for (rb, interference) in rue_interference(s, a).into_iter().enumerate() {
        let limit = s.i_max(rb);
        if interference > limit * (1.0 + INTERFERENCE_RTOL) {
            out.push(Violation::RueInterference { rb, interference, limit });
        }
    }
    for (fap, alpha) in a.alpha.iter().enumerate() {
        for (user, &x) in alpha.iter().enumerate() {
            if !(x >= 0.0 && x.is_finite()) {
                out.push(Violation::NonNegativePower { fap, user });
            }
        }
        let total = alpha[0] + alpha[1];
        if total > 1.0 + 1e-12 {
            out.push(Violation::PowerBudget { fap, total });
        }
    }
    out
}

/// Per-user SINRs and rates, RUE interference and the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sinr: Vec<[f64; 2]>,
    pub rate: Vec<[f64; 2]>,
    pub rue_interference: Vec<f64>,
    pub weighted_sum_rate: f64,
}

impl RateReport {
    pub fn evaluate(s: &Scenario, a: &Allocation) -> Self {
        let n = a.n_faps();
        let sinr: Vec<[f64; 2]> = (0..n)
            .map(|i| a.rb_of(i).map_or([0.0, 0.0], |rb| sinr_pair(s, a, i, rb)))
            .collect();
        let rate: Vec<[f64; 2]> = (0..n).map(|i| user_rates(s, a, i)).collect();
        let w = s.weights();
        let weighted_sum_rate = rate.iter().map(|r| w[0] * r[0] + w[1] * r[1]).sum();
        Self {
            sinr,
            rate,
            rue_interference: rue_interference(s, a),
            weighted_sum_rate,
        }
    }

    /// One row per F-AP user.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fap,user,sinr,rate_bps\n");
        for (i, (sinr, rate)) in self.sinr.iter().zip(&self.rate).enumerate() {
            for u in 0..2 {
                out.push_str(&format!("{i},{u},{},{}\n", sig6(sinr[u]), sig6(rate[u])));
            }
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "weighted_sum_rate": self.weighted_sum_rate,
            "matched_users": self.rate.iter().filter(|r| r[0] > 0.0 || r[1] > 0.0).count(),
            "rue_interference": self.rue_interference,
            "sinr": self.sinr,
            "rate": self.rate,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scenario::{ChannelGains, ScenarioParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Scenario whose every gain is `fill`, with the listed overrides applied.
    pub(crate) fn flat_scenario(n: usize, m: usize, fill: f64, tweak: impl FnOnce(&mut ChannelGains, &mut ScenarioParams)) -> Scenario {
        let mut params = ScenarioParams {
            n_faps: n,
            n_rrhs: m,
            z_max: n.max(1),
            fap_tx_power_dbm: 30.0,
            rrh_tx_power_dbm: 30.0,
            i_max_dbm: 100.0,
            ..Default::default()
        };
        let mut gains = ChannelGains {
            h_own: vec![[vec![fill; m], vec![fill; m]]; n],
            h_cross: vec![vec![[vec![fill; m], vec![fill; m]]; n]; n],
            l_rrh: vec![vec![[fill; 2]; n]; m],
            g_fap_rue: vec![vec![fill; m]; n],
        };
        tweak(&mut gains, &mut params);
        Scenario::from_gains(params, gains).unwrap()
    }

    #[test]
    fn co_tier_sums_active_interferers() {
        let s = flat_scenario(3, 1, 0.5, |g, _| {
            g.h_cross[1][0][0][0] = 0.1;
            g.h_cross[2][0][0][0] = 0.2;
        });
        let alone = Allocation::from_assignment(&[Some(0), None, None], 1, vec![[0.2, 0.8]; 3]);
        assert_eq!(co_tier_interference(&s, &alone, 0, 0, 0), 0.0);
        let all = Allocation::from_assignment(&[Some(0), Some(0), Some(0)], 1, vec![[0.2, 0.8]; 3]);
        assert_relative_eq!(co_tier_interference(&s, &all, 0, 0, 0), 0.3, max_relative = 1e-12);
    }

    #[test]
    fn cross_tier_is_a_single_product() {
        let s = flat_scenario(1, 1, 0.5, |g, p| {
            g.l_rrh[0][0][0] = 0.01;
            p.rrh_tx_power_dbm = 30.0 + 10.0 * 0.02f64.log10();
        });
        let a = Allocation::from_assignment(&[Some(0)], 1, vec![[0.2, 0.8]]);
        assert_relative_eq!(cross_tier_interference(&s, &a, 0, 0, 0), 2e-4, max_relative = 1e-12);
    }

    /// One F-AP, P = 1 W, cross-tier folded into sigma^2 = 0.1.
    fn sinr_fixture() -> Scenario {
        flat_scenario(1, 1, 1.0, |g, p| {
            g.h_own[0] = [vec![1.0], vec![0.5]];
            g.l_rrh[0][0] = [1e-30, 1e-30];
            // sigma^2 = 0.1 W over 1 Hz
            p.bandwidth_per_rb_hz = 1.0;
            p.noise_psd_dbm_hz = 20.0;
        })
    }

    #[test]
    fn sinr_direct_substitution() {
        let s = sinr_fixture();
        let a = Allocation::from_assignment(&[Some(0)], 1, vec![[0.2, 0.8]]);
        let [s1, s2] = sinr_pair(&s, &a, 0, 0);
        assert_relative_eq!(s1, 2.0, max_relative = 1e-12);
        assert_relative_eq!(s2, 2.0, max_relative = 1e-12);
        let zero = Allocation::from_assignment(&[Some(0)], 1, vec![[0.0, 0.0]]);
        assert_eq!(sinr_pair(&s, &zero, 0, 0), [0.0, 0.0]);
    }

    #[test]
    fn rates_and_weighted_sum() {
        let s = sinr_fixture();
        // sinr1 = 3 when alpha1 = 0.3
        let a = Allocation::from_assignment(&[Some(0)], 1, vec![[0.3, 0.7]]);
        assert_relative_eq!(user_rates(&s, &a, 0)[0], 2.0, max_relative = 1e-12);
        let un = Allocation::unmatched(1, 1, [0.3, 0.7]);
        assert_eq!(user_rates(&s, &un, 0), [0.0, 0.0]);
        assert_eq!(weighted_sum_rate(&s, &un), 0.0);
        let zero = Allocation::from_assignment(&[Some(0)], 1, vec![[0.0, 0.0]]);
        assert_eq!(user_rates(&s, &zero, 0), [0.0, 0.0]);
        // r = (2, r2), weighted 0.9*2 + 1.1*r2
        let r = user_rates(&s, &a, 0);
        assert_relative_eq!(weighted_sum_rate(&s, &a), 0.9 * r[0] + 1.1 * r[1], max_relative = 1e-12);
    }

    #[test]
    fn rue_interference_sums_leakage() {
        let s = flat_scenario(2, 2, 0.01, |_, p| {
            p.fap_tx_power_dbm = 30.0 + 10.0 * 0.2f64.log10();
        });
        let a = Allocation::from_assignment(&[Some(0), Some(0)], 2, vec![[0.2, 0.8]; 2]);
        let i = rue_interference(&s, &a);
        assert_relative_eq!(i[0], 0.004, max_relative = 1e-12);
        assert_eq!(i[1], 0.0);
    }

    #[test]
    fn feasibility_reports_each_constraint() {
        let s = flat_scenario(3, 2, 0.01, |_, p| {
            p.z_max = 1;
            p.i_max_dbm = 30.0;
        });
        let ok = Allocation::from_assignment(&[Some(0), Some(1), None], 2, vec![[0.2, 0.8]; 3]);
        assert!(check_feasibility(&s, &ok).is_empty());

        let mut two = ok.clone();
        two.beta[0][1] = true;
        let v = check_feasibility(&s, &two);
        assert!(v.contains(&Violation::SingleRb { fap: 0, count: 2 }));
        assert!(v.contains(&Violation::RbQuota { rb: 1, count: 2 }));

        let mut split = ok.clone();
        split.alpha[2] = [0.6, 0.6];
        assert!(matches!(check_feasibility(&s, &split)[..], [Violation::PowerBudget { fap: 2, .. }]));

        let mut neg = ok.clone();
        neg.alpha[1] = [-0.1, 0.5];
        assert_eq!(check_feasibility(&s, &neg), vec![Violation::NonNegativePower { fap: 1, user: 0 }]);

        // 1 W * 0.01 = 10 mW leakage against a 1 mW budget
        let loud = flat_scenario(1, 1, 0.01, |_, p| p.i_max_dbm = 0.0);
        let a = Allocation::from_assignment(&[Some(0)], 1, vec![[0.2, 0.8]]);
        assert!(matches!(check_feasibility(&loud, &a)[..], [Violation::RueInterference { rb: 0, .. }]));

        let wrong_shape = Allocation::unmatched(2, 2, [0.2, 0.8]);
        assert_eq!(check_feasibility(&s, &wrong_shape), vec![Violation::BinaryAssignment]);
    }

    #[test]
    fn report_csv_has_a_row_per_user() {
        let s = sinr_fixture();
        let a = Allocation::from_assignment(&[Some(0)], 1, vec![[0.2, 0.8]]);
        let rep = RateReport::evaluate(&s, &a);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("fap,user,sinr,rate_bps\n0,0,2.00000e0,"));
        assert_eq!(rep.summary_json()["matched_users"], 1);
    }

    fn random_case(seed: u64) -> (Scenario, Allocation) {
        let p = ScenarioParams { seed, n_faps: 5, n_rrhs: 2, i_max_dbm: 0.0, ..Default::default() };
        let s = crate::scenario::generate_scenario(&p).unwrap();
        let assign: Vec<Option<usize>> = (0..5).map(|i| if i == 4 { None } else { Some(i % 2) }).collect();
        let alpha = (0..5).map(|i| [0.1 + 0.05 * i as f64, 0.8 - 0.05 * i as f64]).collect();
        (s.clone(), Allocation::from_assignment(&assign, 2, alpha))
    }

    proptest! {
        #[test]
        fn co_tier_matches_manual_sum(seed in any::<u64>()) {
            let (s, a) = random_case(seed);
            for i in 0..4 {
                let rb = a.rb_of(i).unwrap();
                for u in 0..2 {
                    let mut manual = 0.0;
                    for j in 0..5 {
                        if j != i && a.assignment()[j] == Some(rb) {
                            manual += s.gains().h_cross[j][i][u][rb] * s.fap_power();
                        }
                    }
                    let got = co_tier_interference(&s, &a, i, u, rb);
                    prop_assert!((got - manual).abs() <= 1e-12 * manual.max(1e-300));
                }
            }
        }

        #[test]
        fn extra_interferer_never_helps(seed in any::<u64>()) {
            let (s, a) = random_case(seed);
            let before = sinr_pair(&s, &a, 0, 0);
            let mut more = a.clone();
            more.beta[4][0] = true;
            let after = sinr_pair(&s, &more, 0, 0);
            prop_assert!(after[0] <= before[0] && after[1] <= before[1]);
        }

        #[test]
        fn strong_user_below_interference_free_bound(seed in any::<u64>()) {
            let (s, a) = random_case(seed);
            for i in 0..4 {
                let rb = a.rb_of(i).unwrap();
                let bound = s.h_own(i, 0, rb) * a.alpha[i][0] * s.fap_power() / s.noise_power();
                prop_assert!(sinr_pair(&s, &a, i, rb)[0] <= bound);
            }
        }

        #[test]
        fn rue_interference_is_linear_in_power(seed in any::<u64>(), dbm in 0.0f64..30.0) {
            let (s, a) = random_case(seed);
            let base = rue_interference(&s, &a);
            let mut p = s.params().clone();
            p.fap_tx_power_dbm = dbm;
            let scaled = Scenario::from_gains(p, s.gains().clone()).unwrap();
            let ratio = scaled.fap_power() / s.fap_power();
            for (x, y) in base.iter().zip(rue_interference(&scaled, &a)) {
                prop_assert!((x * ratio - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }

        #[test]
        fn permuting_faps_preserves_objective(seed in any::<u64>()) {
            let (s, a) = random_case(seed);
            let perm = [3usize, 0, 4, 1, 2];
            let g = s.gains();
            let gains = ChannelGains {
                h_own: perm.iter().map(|&k| g.h_own[k].clone()).collect(),
                h_cross: perm.iter().map(|&j| perm.iter().map(|&i| g.h_cross[j][i].clone()).collect()).collect(),
                l_rrh: g.l_rrh.iter().map(|row| perm.iter().map(|&i| row[i]).collect()).collect(),
                g_fap_rue: perm.iter().map(|&i| g.g_fap_rue[i].clone()).collect(),
            };
            let ps = Scenario::from_gains(s.params().clone(), gains).unwrap();
            let pa = Allocation {
                beta: perm.iter().map(|&i| a.beta[i].clone()).collect(),
                alpha: perm.iter().map(|&i| a.alpha[i]).collect(),
            };
            let (x, y) = (weighted_sum_rate(&s, &a), weighted_sum_rate(&ps, &pa));
            prop_assert!((x - y).abs() <= 1e-9 * x);
        }
    }
}
