//! Network drops: node placement, channel gains and unit conversions.
//!
//! A [`Scenario`] is one immutable snapshot of the downlink: `N` F-APs, each
//! serving a NOMA pair, and `M` RRHs, each serving one RUE on its own RB.
//! F-APs reuse those `M` RBs. Every link gain is a linear power gain
//! `d^-eta * f` with `f ~ Exp(1)` (Rayleigh fading), drawn independently per
//! link and per RB.
//!
//! Users are indexed `0` (strong, decodes the weak user's signal first) and
//! `1` (weak). On every `(F-AP, RB)` the labels are arranged so that
//! `h_own(i, 0, m) >= h_own(i, 1, m)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a power in dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

/// Thermal noise power over `bandwidth_hz` for a flat spectral density.
pub fn noise_power(psd_dbm_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive and finite, got {bandwidth_hz}"
        )));
    }
    Ok(dbm_to_watt(psd_dbm_hz) * bandwidth_hz)
}

/// Parameters of a network drop. Field names carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_faps: usize,
    /// Number of RRHs; also the number of RBs and of RUEs.
    pub n_rrhs: usize,
    pub bandwidth_per_rb_hz: f64,
    pub fap_tx_power_dbm: f64,
    pub rrh_tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub path_loss_exponent: f64,
    /// Maximum number of F-APs sharing one RB.
    pub z_max: usize,
    /// Interference budget of each RUE, identical across RBs.
    pub i_max_dbm: f64,
    /// `(w_strong, w_weak)`, shared by every F-AP.
    pub weights: [f64; 2],
    pub area_side_m: f64,
    /// Distances are floored at this value before applying path loss.
    pub min_pair_distance_m: f64,
    /// FUEs are dropped uniformly in a disc of this radius around their F-AP.
    pub fue_radius_m: f64,
    /// RUEs are dropped uniformly in a disc of this radius around their RRH.
    pub rue_radius_m: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_faps: 6,
            n_rrhs: 3,
            bandwidth_per_rb_hz: 180e3,
            fap_tx_power_dbm: 23.0,
            rrh_tx_power_dbm: 13.0,
            noise_psd_dbm_hz: -174.0,
            path_loss_exponent: 4.0,
            z_max: 3,
            i_max_dbm: -50.0,
            weights: [0.9, 1.1],
            area_side_m: 500.0,
            min_pair_distance_m: 1.0,
            fue_radius_m: 10.0,
            rue_radius_m: 50.0,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_faps == 0 {
            return fail("n_faps must be at least 1".into());
        }
        if self.n_rrhs == 0 {
            return fail("n_rrhs must be at least 1".into());
        }
        if self.z_max == 0 {
            return fail("z_max must be at least 1".into());
        }
        if !(self.bandwidth_per_rb_hz > 0.0 && self.bandwidth_per_rb_hz.is_finite()) {
            return fail(format!("bandwidth_per_rb_hz must be positive, got {}", self.bandwidth_per_rb_hz));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return fail(format!("weights must be strictly positive, got {:?}", self.weights));
        }
        for (name, v) in [
            ("fap_tx_power_dbm", self.fap_tx_power_dbm),
            ("rrh_tx_power_dbm", self.rrh_tx_power_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("i_max_dbm", self.i_max_dbm),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        if !(self.path_loss_exponent > 0.0 && self.path_loss_exponent.is_finite()) {
            return fail("path_loss_exponent must be positive".into());
        }
        if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
            return fail("area_side_m must be positive".into());
        }
        if !(self.min_pair_distance_m > 0.0 && self.min_pair_distance_m.is_finite()) {
            return fail("min_pair_distance_m must be positive".into());
        }
        if !(self.fue_radius_m >= 0.0 && self.rue_radius_m >= 0.0) {
            return fail("drop radii must be non-negative".into());
        }
        Ok(())
    }

    /// Parses a TOML document holding the fields of this struct.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }
}

/// Linear power gains of a drop, with user labels already ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGains {
    /// `[i][n][m]`: F-AP `i` to its user `n` on RB `m`.
    pub h_own: Vec<[Vec<f64>; 2]>,
    /// `[j][i][n][m]`: F-AP `j` to user `n` of F-AP `i` on RB `m`. Diagonal unused.
    pub h_cross: Vec<Vec<[Vec<f64>; 2]>>,
    /// `[m][i][n]`: RRH `m` to user `n` of F-AP `i`.
    pub l_rrh: Vec<Vec<[f64; 2]>>,
    /// `[i][m]`: F-AP `i` to RUE `m`.
    pub g_fap_rue: Vec<Vec<f64>>,
}

/// An immutable network drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    params: ScenarioParams,
    gains: ChannelGains,
    fap_power_w: f64,
    rrh_power_w: f64,
    noise_power_w: f64,
    i_max_w: f64,
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl Scenario {
    /// Builds a scenario from explicit gains, checking shapes and invariants.
    pub fn from_gains(params: ScenarioParams, gains: ChannelGains) -> Result<Self> {
        params.validate()?;
        let (n, m) = (params.n_faps, params.n_rrhs);
        let shape_err = |what: &str| Err(Error::Config(format!("{what} has the wrong shape")));
        if gains.h_own.len() != n || gains.h_own.iter().any(|u| u.iter().any(|v| v.len() != m)) {
            return shape_err("h_own");
        }
        if gains.h_cross.len() != n
            || gains.h_cross.iter().any(|row| {
                row.len() != n || row.iter().any(|u| u.iter().any(|v| v.len() != m))
            })
        {
            return shape_err("h_cross");
        }
        if gains.l_rrh.len() != m || gains.l_rrh.iter().any(|row| row.len() != n) {
            return shape_err("l_rrh");
        }
        if gains.g_fap_rue.len() != n || gains.g_fap_rue.iter().any(|row| row.len() != m) {
            return shape_err("g_fap_rue");
        }

        for i in 0..n {
            for rb in 0..m {
                let (strong, weak) = (gains.h_own[i][0][rb], gains.h_own[i][1][rb]);
                if !positive(strong) || !positive(weak) {
                    return Err(Error::Config(format!("h_own[{i}][.][{rb}] must be positive and finite")));
                }
                if strong < weak {
                    return Err(Error::Config(format!(
                        "user 0 of F-AP {i} must be the strong user on RB {rb}"
                    )));
                }
                if !positive(gains.g_fap_rue[i][rb]) {
                    return Err(Error::Config(format!("g_fap_rue[{i}][{rb}] must be positive and finite")));
                }
                for u in 0..2 {
                    if !positive(gains.l_rrh[rb][i][u]) {
                        return Err(Error::Config(format!("l_rrh[{rb}][{i}][{u}] must be positive and finite")));
                    }
                    for j in (0..n).filter(|&j| j != i) {
                        if !positive(gains.h_cross[j][i][u][rb]) {
                            return Err(Error::Config(format!(
                                "h_cross[{j}][{i}][{u}][{rb}] must be positive and finite"
                            )));
                        }
                    }
                }
            }
        }

        Ok(Self {
            fap_power_w: dbm_to_watt(params.fap_tx_power_dbm),
            rrh_power_w: dbm_to_watt(params.rrh_tx_power_dbm),
            noise_power_w: noise_power(params.noise_psd_dbm_hz, params.bandwidth_per_rb_hz)?,
            i_max_w: dbm_to_watt(params.i_max_dbm),
            params,
            gains,
        })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn gains(&self) -> &ChannelGains {
        &self.gains
    }

    pub fn n_faps(&self) -> usize {
        self.params.n_faps
    }

    pub fn n_rbs(&self) -> usize {
        self.params.n_rrhs
    }

    pub fn z_max(&self) -> usize {
        self.params.z_max
    }

    pub fn bandwidth(&self) -> f64 {
        self.params.bandwidth_per_rb_hz
    }

    pub fn weights(&self) -> [f64; 2] {
        self.params.weights
    }

    pub fn fap_power(&self) -> f64 {
        self.fap_power_w
    }

    pub fn rrh_power(&self) -> f64 {
        self.rrh_power_w
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power_w
    }

    /// RUE interference budget on `rb`, in watts.
    pub fn i_max(&self, _rb: usize) -> f64 {
        self.i_max_w
    }

    pub fn h_own(&self, fap: usize, user: usize, rb: usize) -> f64 {
        self.gains.h_own[fap][user][rb]
    }

    pub fn h_cross(&self, from: usize, victim: usize, user: usize, rb: usize) -> f64 {
        self.gains.h_cross[from][victim][user][rb]
    }

    pub fn l_rrh(&self, rb: usize, fap: usize, user: usize) -> f64 {
        self.gains.l_rrh[rb][fap][user]
    }

    pub fn g_fap_rue(&self, fap: usize, rb: usize) -> f64 {
        self.gains.g_fap_rue[fap][rb]
    }

    /// Interference F-AP `fap` causes at RUE `rb` when transmitting on it.
    pub fn rue_leakage(&self, fap: usize, rb: usize) -> f64 {
        self.fap_power_w * self.g_fap_rue(fap, rb)
    }
}

type Point = (f64, f64);

fn uniform_in_square<R: Rng>(rng: &mut R, side: f64) -> Point {
    (rng.random::<f64>() * side, rng.random::<f64>() * side)
}

fn uniform_in_disc<R: Rng>(rng: &mut R, centre: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    (centre.0 + r * theta.cos(), centre.1 + r * theta.sin())
}

/// Draws a reproducible network drop from `params`.
pub fn generate_scenario(params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let (n, m) = (params.n_faps, params.n_rrhs);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let faps: Vec<Point> = (0..n).map(|_| uniform_in_square(&mut rng, params.area_side_m)).collect();
    let rrhs: Vec<Point> = (0..m).map(|_| uniform_in_square(&mut rng, params.area_side_m)).collect();
    let fues: Vec<[Point; 2]> = faps
        .iter()
        .map(|&c| {
            [
                uniform_in_disc(&mut rng, c, params.fue_radius_m),
                uniform_in_disc(&mut rng, c, params.fue_radius_m),
            ]
        })
        .collect();
    let rues: Vec<Point> = rrhs.iter().map(|&c| uniform_in_disc(&mut rng, c, params.rue_radius_m)).collect();

    let floor = params.min_pair_distance_m;
    let eta = params.path_loss_exponent;
    let path_gain = |a: Point, b: Point| {
        let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt().max(floor);
        d.powf(-eta)
    };
    let mut fade = || -> f64 {
        // Exp(1) can return exactly zero; gains must stay strictly positive.
        let f: f64 = rng.sample(Exp1);
        f.max(f64::MIN_POSITIVE)
    };

    let mut h_cross: Vec<Vec<[Vec<f64>; 2]>> = vec![vec![[vec![0.0; m], vec![0.0; m]]; n]; n];
    for (j, &tx) in faps.iter().enumerate() {
        for (i, pair) in fues.iter().enumerate() {
            for (u, &rx) in pair.iter().enumerate() {
                let pl = path_gain(tx, rx);
                for rb in 0..m {
                    h_cross[j][i][u][rb] = pl * fade();
                }
            }
        }
    }
    let mut h_own: Vec<[Vec<f64>; 2]> = (0..n).map(|i| h_cross[i][i].clone()).collect();
    let mut l_rrh = vec![vec![[0.0; 2]; n]; m];
    for (rb, &tx) in rrhs.iter().enumerate() {
        for (i, pair) in fues.iter().enumerate() {
            for (u, &rx) in pair.iter().enumerate() {
                l_rrh[rb][i][u] = path_gain(tx, rx) * fade();
            }
        }
    }
    let mut g_fap_rue = vec![vec![0.0; m]; n];
    for (i, &tx) in faps.iter().enumerate() {
        for (rb, &rx) in rues.iter().enumerate() {
            g_fap_rue[i][rb] = path_gain(tx, rx) * fade();
        }
    }

    // Every gain seen by user n on RB m carries the index m, so swapping the
    // two labels per (F-AP, RB) keeps the drop self-consistent.
    for i in 0..n {
        for rb in 0..m {
            if h_own[i][0][rb] < h_own[i][1][rb] {
                let own = &mut h_own[i];
                let (a, b) = (own[0][rb], own[1][rb]);
                own[0][rb] = b;
                own[1][rb] = a;
                for row in h_cross.iter_mut() {
                    let v = &mut row[i];
                    let (a, b) = (v[0][rb], v[1][rb]);
                    v[0][rb] = b;
                    v[1][rb] = a;
                }
                l_rrh[rb][i].swap(0, 1);
            }
        }
    }

    Scenario::from_gains(
        params.clone(),
        ChannelGains {
            h_own,
            h_cross,
            l_rrh,
            g_fap_rue,
        },
    )
}
