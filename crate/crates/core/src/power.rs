//! Power split of one NOMA pair by successive convex approximation.
//!
//! With the RB assignment fixed, F-AP `i` maximises its weighted pair rate
//!
//! ```text
//! w1 R1 + w2 R2 = F(a) - G(a)
//! F(a) = w1 B log2(c1 + h1 a1 P) + w2 B log2(h2 (a1 + a2) P + c2)
//! G(a) = w1 B log2(c1)           + w2 B log2(h2 a1 P + c2)
//! ```
//!
//! over `a1, a2 >= 0`, `a1 + a2 <= 1`. Each iteration replaces `G` by its
//! tangent `G_bar(., a~)` at the previous iterate and minimises the convex
//! surrogate `H = -F + G_bar`. Because `G` is concave in `a1` the tangent lies
//! above it, so `H >= -(F - G)` with equality at `a~`: every step is a
//! majorise-minimise step and the true objective never decreases.
//!
//! The surrogate minimum has a closed form. `dH/da2 < 0` everywhere, so the
//! budget is always active (`a1 + a2 = 1`), and the stationarity conditions give
//!
//! ```text
//! a1 = w1 (h2 a~1 P + c2) / (w2 h2 P) - c1 / (h1 P)
//! lambda = w2 B h2 P / (ln 2 (c2 + h2 P))
//! a2 = w2 B / (lambda ln 2) - a1 - c2 / (h2 P)     (= 1 - a1)
//! ```
//!
//! Raw `a1` outside `[ALPHA_MIN, 1 - ALPHA_MIN]` is clamped; on the active
//! line `H` is a convex function of `a1`, so the clamp is the exact
//! constrained minimiser.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{noise_plus_interference, Allocation};
use crate::scenario::Scenario;

/// Smallest share either user keeps after a closed-form step.
pub const ALPHA_MIN: f64 = 1e-12;

/// Residual above which the two routes to `a2` are reported.
pub const KKT_RESIDUAL_WARN: f64 = 1e-6;

/// Everything the per-F-AP subproblem depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerContext {
    pub h1_sq: f64,
    pub h2_sq: f64,
    /// F-AP transmit power, watts.
    pub p: f64,
    /// Interference plus noise at the strong user, watts.
    pub c1: f64,
    /// Interference plus noise at the weak user, watts.
    pub c2: f64,
    pub w1: f64,
    pub w2: f64,
    /// Bandwidth, hertz.
    pub b: f64,
}

impl PowerContext {
    pub fn new(h1_sq: f64, h2_sq: f64, p: f64, c1: f64, c2: f64, w1: f64, w2: f64, b: f64) -> Result<Self> {
        let ctx = Self { h1_sq, h2_sq, p, c1, c2, w1, w2, b };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.h1_sq, self.h2_sq, self.p, self.c1, self.c2, self.w1, self.w2, self.b];
        if fields.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument(format!("power context fields must be positive: {self:?}")));
        }
        if self.h1_sq < self.h2_sq {
            return Err(Error::InvalidArgument("power context requires h1_sq >= h2_sq".into()));
        }
        Ok(())
    }

    /// Context of F-AP `fap` on `rb` with `others` sharing the RB.
    pub fn for_placement(s: &Scenario, fap: usize, rb: usize, others: &[usize]) -> Self {
        let [c1, c2] = [0, 1].map(|u| noise_plus_interference(s, fap, u, rb, others.iter().copied()));
        let [w1, w2] = s.weights();
        Self {
            h1_sq: s.h_own(fap, 0, rb),
            h2_sq: s.h_own(fap, 1, rb),
            p: s.fap_power(),
            c1,
            c2,
            w1,
            w2,
            b: s.bandwidth(),
        }
    }

    /// Context of a matched F-AP under the current assignment; `None` if unmatched.
    pub fn from_allocation(s: &Scenario, a: &Allocation, fap: usize) -> Option<Self> {
        let rb = a.rb_of(fap)?;
        Some(Self::for_placement(s, fap, rb, &a.occupants(rb)))
    }

    /// The weighted pair rate `w1 R1 + w2 R2` evaluated from the SINRs directly.
    pub fn weighted_rate(&self, alpha: [f64; 2]) -> f64 {
        let sinr1 = self.h1_sq * alpha[0] * self.p / self.c1;
        let sinr2 = self.h2_sq * alpha[1] * self.p / (self.h2_sq * alpha[0] * self.p + self.c2);
        self.w1 * self.b * (1.0 + sinr1).log2() + self.w2 * self.b * (1.0 + sinr2).log2()
    }
}

pub fn is_feasible(alpha: [f64; 2]) -> bool {
    alpha.iter().all(|x| *x >= 0.0 && x.is_finite()) && alpha[0] + alpha[1] <= 1.0 + 1e-12
}

pub fn eval_f(ctx: &PowerContext, alpha: [f64; 2]) -> f64 {
    ctx.w1 * ctx.b * (ctx.c1 + ctx.h1_sq * alpha[0] * ctx.p).log2()
        + ctx.w2 * ctx.b * (ctx.h2_sq * (alpha[0] + alpha[1]) * ctx.p + ctx.c2).log2()
}

pub fn eval_g(ctx: &PowerContext, alpha: [f64; 2]) -> f64 {
    ctx.w1 * ctx.b * ctx.c1.log2() + ctx.w2 * ctx.b * (ctx.h2_sq * alpha[0] * ctx.p + ctx.c2).log2()
}

/// `dG/da1` at `alpha_tilde`; `G` does not depend on `a2`.
pub fn g_slope(ctx: &PowerContext, alpha_tilde: [f64; 2]) -> f64 {
    ctx.w2 * ctx.b * ctx.h2_sq * ctx.p / (LN_2 * (ctx.h2_sq * alpha_tilde[0] * ctx.p + ctx.c2))
}

/// Tangent of `G` at `alpha_tilde`, evaluated at `alpha`.
pub fn eval_g_bar(ctx: &PowerContext, alpha: [f64; 2], alpha_tilde: [f64; 2]) -> f64 {
    eval_g(ctx, alpha_tilde) + (alpha[0] - alpha_tilde[0]) * g_slope(ctx, alpha_tilde)
}

/// Convex surrogate of the negated pair rate, tangent at `alpha_tilde`.
pub fn eval_h(ctx: &PowerContext, alpha: [f64; 2], alpha_tilde: [f64; 2]) -> f64 {
    -eval_f(ctx, alpha) + eval_g_bar(ctx, alpha, alpha_tilde)
}

/// Intermediate quantities of one closed-form surrogate solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormStep {
    /// Unclamped stationary `a1`.
    pub raw_alpha1: f64,
    /// Budget multiplier.
    pub lambda: f64,
    /// `a2` recovered from the multiplier rather than from `1 - a1`.
    pub alpha2_from_lambda: f64,
    /// `|alpha2_from_lambda - (1 - raw_alpha1)|`.
    pub kkt_residual: f64,
    /// Whether `raw_alpha1` had to be clamped.
    pub projected: bool,
    pub alpha: [f64; 2],
}

/// Solves the surrogate tangent at `alpha_tilde` in closed form.
pub fn closed_form_step(ctx: &PowerContext, alpha_tilde: [f64; 2]) -> ClosedFormStep {
    let h2p = ctx.h2_sq * ctx.p;
    let h1p = ctx.h1_sq * ctx.p;
    let raw_alpha1 = ctx.w1 * (h2p * alpha_tilde[0] + ctx.c2) / (ctx.w2 * h2p) - ctx.c1 / h1p;
    let lambda = ctx.w2 * ctx.b * h2p / (LN_2 * (ctx.c2 + h2p));
    let alpha2_from_lambda = ctx.w2 * ctx.b / (lambda * LN_2) - ctx.w1 * (h2p * alpha_tilde[0] + ctx.c2) / (ctx.w2 * h2p)
        + ctx.c1 / h1p
        - ctx.c2 / h2p;
    let kkt_residual = (alpha2_from_lambda - (1.0 - raw_alpha1)).abs();
    if kkt_residual > KKT_RESIDUAL_WARN {
        log::warn!("closed-form power split: multiplier route disagrees with 1 - a1 by {kkt_residual:e}");
    }
    let alpha1 = raw_alpha1.clamp(ALPHA_MIN, 1.0 - ALPHA_MIN);
    ClosedFormStep {
        raw_alpha1,
        lambda,
        alpha2_from_lambda,
        kkt_residual,
        projected: alpha1 != raw_alpha1,
        alpha: [alpha1, 1.0 - alpha1],
    }
}

pub fn closed_form_alpha(ctx: &PowerContext, alpha_tilde: [f64; 2]) -> [f64; 2] {
    closed_form_step(ctx, alpha_tilde).alpha
}

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaInit {
    Fixed([f64; 2]),
    /// Uniform draw on the budget simplex.
    RandomWithSeed(u64),
}

impl AlphaInit {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaInit::Fixed(a) if !is_feasible(a) => {
                Err(Error::Config(format!("initial power split {a:?} is infeasible")))
            }
            _ => Ok(()),
        }
    }

    /// Starting split for F-AP `fap`.
    pub fn draw(&self, fap: usize) -> [f64; 2] {
        match *self {
            AlphaInit::Fixed(a) => a,
            AlphaInit::RandomWithSeed(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(fap as u64));
                random_simplex_point(&mut rng)
            }
        }
    }
}

/// Uniform point of `{a >= 0, a1 + a2 <= 1}`.
pub fn random_simplex_point<R: Rng>(rng: &mut R) -> [f64; 2] {
    let (u, v): (f64, f64) = (rng.random(), rng.random());
    if u + v > 1.0 {
        [1.0 - u, 1.0 - v]
    } else {
        [u, v]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaConfig {
    /// Stop once successive surrogate values differ by less than this, bit/s.
    pub eps_thr: f64,
    pub max_iters: usize,
    pub alpha_init: AlphaInit,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            eps_thr: 0.18,
            max_iters: 200,
            alpha_init: AlphaInit::Fixed([0.2, 0.8]),
        }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_thr > 0.0) {
            return Err(Error::Config("eps_thr must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        self.alpha_init.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaOutcome {
    pub alpha: [f64; 2],
    /// Surrogate value of each iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Runs the iteration from the configured starting point.
pub fn sca_power_allocation(ctx: &PowerContext, cfg: &ScaConfig) -> ScaOutcome {
    sca_from(ctx, cfg, cfg.alpha_init.draw(0))
}

/// Runs the iteration from `start`.
pub fn sca_from(ctx: &PowerContext, cfg: &ScaConfig, start: [f64; 2]) -> ScaOutcome {
    let mut alpha = start;
    let mut trace = vec![eval_h(ctx, alpha, alpha)];
    let mut j = 0;
    while j < cfg.max_iters && (j == 0 || (trace[j] - trace[j - 1]).abs() >= cfg.eps_thr) {
        j += 1;
        let tilde = alpha;
        alpha = closed_form_alpha(ctx, tilde);
        trace.push(eval_h(ctx, alpha, tilde));
    }
    ScaOutcome { alpha, trace, iterations: j }
}
