//! System parameters, node layout and path-loss models.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// (x, y) in metres.
pub type Position = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Proposed,
    Benchmark,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Proposed => "proposed",
            Protocol::Benchmark => "benchmark",
        }
    }
}

/// All scalar system parameters plus node positions.
///
/// Field names in the JSON form follow the usual symbols (`M`, `K`, `tau_S`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas.
    #[serde(rename = "M")]
    pub m: usize,
    /// Users.
    #[serde(rename = "K")]
    pub k: usize,
    /// IRSs.
    #[serde(rename = "L")]
    pub l: usize,
    /// Elements per IRS.
    #[serde(rename = "N")]
    pub n: usize,
    /// Training sub-phases.
    #[serde(rename = "S")]
    pub s: usize,
    /// Sub-phase duration (s).
    #[serde(rename = "tau_S")]
    pub tau_s: f64,
    /// Symbol duration (s).
    pub tilde_tau: f64,
    /// Pilot length in symbols.
    #[serde(rename = "T_S")]
    pub t_s: usize,
    /// Per-user transmit power (W).
    #[serde(rename = "P_C")]
    pub p_c: f64,
    /// Noise variance (W).
    pub sigma2: f64,
    pub f_c: f64,
    pub lambda_c: f64,
    #[serde(rename = "Delta_BS")]
    pub delta_bs: f64,
    #[serde(rename = "Delta_IRS")]
    pub delta_irs: f64,
    pub bs_position: Position,
    pub irs_positions: Vec<Position>,
    pub user_positions: Vec<Position>,
    pub eta_bs: f64,
    pub eta_irs: f64,
}

/// Partially specified configuration as read from JSON; missing fields fall
/// back to [`SystemConfig::reference`] (positions and `S` are re-derived
/// when `K`, `L`, `N` or `M` change).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "L")]
    l: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "S")]
    s: Option<usize>,
    #[serde(rename = "tau_S")]
    tau_s: Option<f64>,
    tilde_tau: Option<f64>,
    #[serde(rename = "T_S")]
    t_s: Option<usize>,
    #[serde(rename = "P_C")]
    p_c: Option<f64>,
    sigma2: Option<f64>,
    f_c: Option<f64>,
    lambda_c: Option<f64>,
    #[serde(rename = "Delta_BS")]
    delta_bs: Option<f64>,
    #[serde(rename = "Delta_IRS")]
    delta_irs: Option<f64>,
    bs_position: Option<Position>,
    irs_positions: Option<Vec<Position>>,
    user_positions: Option<Vec<Position>>,
    eta_bs: Option<f64>,
    eta_irs: Option<f64>,
}

/// The four IRS sites of the reference layout, used whenever `L = 4`.
const REFERENCE_IRS_SITES: [Position; 4] = [[0.0, 100.0], [100.0, 0.0], [-100.0, 0.0], [0.0, -100.0]];
pub const IRS_RING_RADIUS: f64 = 100.0;
pub const USER_RING_RADIUS: f64 = 30.0;

/// IRS sites: the reference four for `L = 4`, otherwise `L` points evenly
/// spaced on a 100 m ring starting at (0, 100).
pub fn default_irs_positions(l: usize) -> Vec<Position> {
    if l == 4 {
        return REFERENCE_IRS_SITES.to_vec();
    }
    (0..l)
        .map(|i| {
            let a = FRAC_PI_2 - 2.0 * PI * i as f64 / l as f64;
            [IRS_RING_RADIUS * a.cos(), IRS_RING_RADIUS * a.sin()]
        })
        .collect()
}

/// `K` users evenly spaced on a 30 m ring around the origin, offset by 45 degrees
/// so that no user sits on an IRS bearing.
pub fn default_user_positions(k: usize) -> Vec<Position> {
    (0..k)
        .map(|i| {
            let a = FRAC_PI_4 + 2.0 * PI * i as f64 / k as f64;
            [USER_RING_RADIUS * a.cos(), USER_RING_RADIUS * a.sin()]
        })
        .collect()
}

impl SystemConfig {
    /// Reference setup: N = 32, L = 4, M = 8, tau_S = 50 us, 2.5 GHz, S at its
    /// proposed-protocol minimum. K, P_C, sigma2 and user sites are local defaults.
    pub fn reference() -> Self {
        let (m, k, l, n) = (8, 4, 4, 32);
        let f_c = 2.5e9;
        SystemConfig {
            m,
            k,
            l,
            n,
            s: min_subphases(n, l, m, Protocol::Proposed),
            tau_s: 50e-6,
            tilde_tau: 1e-6,
            t_s: 50,
            p_c: 1.0,
            sigma2: 3e-22,
            f_c,
            lambda_c: SPEED_OF_LIGHT / f_c,
            delta_bs: 0.5,
            delta_irs: 0.5,
            bs_position: [0.0, 0.0],
            irs_positions: default_irs_positions(l),
            user_positions: default_user_positions(k),
            eta_bs: 0.0,
            eta_irs: 0.0,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ConfigDocument = serde_json::from_str(text)?;
        let base = Self::reference();
        let m = doc.m.unwrap_or(base.m);
        let k = doc.k.unwrap_or(base.k);
        let l = doc.l.unwrap_or(base.l);
        let n = doc.n.unwrap_or(base.n);
        let tau_s = doc.tau_s.unwrap_or(base.tau_s);
        let tilde_tau = doc.tilde_tau.unwrap_or(base.tilde_tau);
        let t_s = match doc.t_s {
            Some(t) => t,
            None => (tau_s / tilde_tau).round() as usize,
        };
        let f_c = doc.f_c.unwrap_or(base.f_c);
        let cfg = SystemConfig {
            m,
            k,
            l,
            n,
            s: doc.s.unwrap_or_else(|| min_subphases(n, l, m.max(1), Protocol::Proposed)),
            tau_s,
            tilde_tau,
            t_s,
            p_c: doc.p_c.unwrap_or(base.p_c),
            sigma2: doc.sigma2.unwrap_or(base.sigma2),
            f_c,
            lambda_c: doc.lambda_c.unwrap_or(SPEED_OF_LIGHT / f_c),
            delta_bs: doc.delta_bs.unwrap_or(base.delta_bs),
            delta_irs: doc.delta_irs.unwrap_or(base.delta_irs),
            bs_position: doc.bs_position.unwrap_or(base.bs_position),
            irs_positions: doc.irs_positions.unwrap_or_else(|| default_irs_positions(l)),
            user_positions: doc.user_positions.unwrap_or_else(|| default_user_positions(k)),
            eta_bs: doc.eta_bs.unwrap_or(base.eta_bs),
            eta_irs: doc.eta_irs.unwrap_or(base.eta_irs),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Structural checks. `S` must reach the proposed-protocol minimum.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("M", self.m), ("K", self.k), ("L", self.l), ("N", self.n), ("S", self.s)] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("tau_S", self.tau_s),
            ("tilde_tau", self.tilde_tau),
            ("P_C", self.p_c),
            ("f_c", self.f_c),
            ("lambda_c", self.lambda_c),
            ("Delta_BS", self.delta_bs),
            ("Delta_IRS", self.delta_irs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and positive, got {v}"));
            }
        }
        // sigma2 = 0 is kept legal for noiseless runs.
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return bad(format!("sigma2 must be finite and non-negative, got {}", self.sigma2));
        }
        if self.t_s < self.k {
            return bad(format!("T_S = {} cannot carry {} orthogonal pilots", self.t_s, self.k));
        }
        if !rel_close(self.t_s as f64 * self.tilde_tau, self.tau_s, 1e-9) {
            return bad(format!(
                "T_S * tilde_tau = {} differs from tau_S = {}",
                self.t_s as f64 * self.tilde_tau,
                self.tau_s
            ));
        }
        if !rel_close(self.lambda_c * self.f_c, SPEED_OF_LIGHT, 1e-9) {
            return bad(format!("lambda_c = {} inconsistent with f_c = {}", self.lambda_c, self.f_c));
        }
        for (name, eta) in [("eta_bs", self.eta_bs), ("eta_irs", self.eta_irs)] {
            if !(0.0..1.0).contains(&eta) {
                return bad(format!("{name} must lie in [0, 1), got {eta}"));
            }
        }
        if self.irs_positions.len() != self.l {
            return bad(format!("{} IRS positions for L = {}", self.irs_positions.len(), self.l));
        }
        if self.user_positions.len() != self.k {
            return bad(format!("{} user positions for K = {}", self.user_positions.len(), self.k));
        }
        let min = min_subphases(self.n, self.l, self.m, Protocol::Proposed);
        if self.s < min {
            return bad(format!("S = {} below the minimum {} (ceil(NL/M) + 1)", self.s, min));
        }
        Ok(())
    }

    /// NL, the number of IRS elements in total.
    pub fn total_elements(&self) -> usize {
        self.n * self.l
    }

    /// Copy with a different IRS count; IRS sites and `S` are re-derived.
    pub fn with_irs_count(&self, l: usize) -> Self {
        let mut cfg = self.clone();
        cfg.l = l;
        cfg.irs_positions = default_irs_positions(l);
        cfg.s = min_subphases(cfg.n, l, cfg.m, Protocol::Proposed);
        cfg
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Link distances and BS-IRS bearings for a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub d_bs_user: Vec<f64>,
    /// `[l][k]`
    pub d_irs_user: Vec<Vec<f64>>,
    pub d_bs_irs: Vec<f64>,
    /// Bearing of IRS l seen from the BS, in (-pi, pi].
    pub aod_azimuth: Vec<f64>,
    /// Bearing of the BS seen from IRS l, in (-pi, pi].
    pub aoa_azimuth: Vec<f64>,
}

fn distance(a: Position, b: Position) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn bearing(from: Position, to: Position) -> f64 {
    let a = (to[1] - from[1]).atan2(to[0] - from[0]);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

fn checked_distance(a: Position, b: Position, what: impl FnOnce() -> String) -> Result<f64> {
    let d = distance(a, b);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::ZeroDistance(what()))
    }
}

/// Distances and azimuths of a flat (2-D) layout.
pub fn build_geometry(cfg: &SystemConfig) -> Result<Geometry> {
    let bs = cfg.bs_position;
    let d_bs_user = cfg
        .user_positions
        .iter()
        .enumerate()
        .map(|(k, &u)| checked_distance(bs, u, || format!("BS-user {k}")))
        .collect::<Result<Vec<_>>>()?;
    let mut d_irs_user = Vec::with_capacity(cfg.l);
    let mut d_bs_irs = Vec::with_capacity(cfg.l);
    let mut aod = Vec::with_capacity(cfg.l);
    let mut aoa = Vec::with_capacity(cfg.l);
    for (l, &irs) in cfg.irs_positions.iter().enumerate() {
        d_bs_irs.push(checked_distance(bs, irs, || format!("BS-IRS {l}"))?);
        d_irs_user.push(
            cfg.user_positions
                .iter()
                .enumerate()
                .map(|(k, &u)| checked_distance(irs, u, || format!("IRS {l}-user {k}")))
                .collect::<Result<Vec<_>>>()?,
        );
        aod.push(bearing(bs, irs));
        aoa.push(bearing(irs, bs));
    }
    Ok(Geometry {
        d_bs_user,
        d_irs_user,
        d_bs_irs,
        aod_azimuth: aod,
        aoa_azimuth: aoa,
    })
}

/// UMi NLoS path loss at 2.5 GHz: `10^-2.8 / d^3.67`.
pub fn pathloss_nlos(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::ZeroDistance(format!("NLoS link of length {d}")));
    }
    Ok(10f64.powf(-2.8) * d.powf(-3.67))
}

/// UMi LoS path loss: `10^-2.6 / d^2.2`.
pub fn pathloss_los(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::ZeroDistance(format!("LoS link of length {d}")));
    }
    Ok(10f64.powf(-2.6) * d.powf(-2.2))
}

/// Linear path-loss factors of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLossSet {
    pub beta_d: Vec<f64>,
    /// `[l][k]`
    pub beta_2: Vec<Vec<f64>>,
    pub beta_1: Vec<f64>,
}

impl PathLossSet {
    pub fn from_geometry(geo: &Geometry) -> Result<Self> {
        let set = PathLossSet {
            beta_d: geo.d_bs_user.iter().map(|&d| pathloss_nlos(d)).collect::<Result<_>>()?,
            beta_2: geo
                .d_irs_user
                .iter()
                .map(|row| row.iter().map(|&d| pathloss_nlos(d)).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
            beta_1: geo.d_bs_irs.iter().map(|&d| pathloss_los(d)).collect::<Result<_>>()?,
        };
        set.validate()?;
        Ok(set)
    }

    /// Every factor must lie in (0, 1].
    pub fn validate(&self) -> Result<()> {
        let all = self
            .beta_d
            .iter()
            .chain(self.beta_2.iter().flatten())
            .chain(self.beta_1.iter());
        for &b in all {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::Config(format!("path loss factor {b} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Minimum sub-phase count: `ceil(NL/M) + 1` for the proposed protocol,
/// `NL + 1` for the benchmark.
pub fn min_subphases(n: usize, l: usize, m: usize, protocol: Protocol) -> usize {
    let nl = n * l;
    match protocol {
        Protocol::Proposed => nl.div_ceil(m) + 1,
        Protocol::Benchmark => nl + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nlos_reference_values() {
        assert!((pathloss_nlos(1.0).unwrap() - 1.584_893_192e-3).abs() < 1e-12);
        let v = pathloss_nlos(100.0).unwrap();
        assert!((v / 7.244_359_600_749_9e-11 - 1.0).abs() < 1e-9, "{v:e}");
        assert!(pathloss_nlos(10.0).unwrap() > pathloss_nlos(20.0).unwrap());
    }

    #[test]
    fn los_reference_values() {
        assert!((pathloss_los(100.0).unwrap() / 1e-7 - 1.0).abs() < 1e-12);
        assert!((pathloss_los(1.0).unwrap() - 2.511_886_431_5e-3).abs() < 1e-12);
        assert!(pathloss_los(100.0).unwrap() > pathloss_nlos(100.0).unwrap());
    }

    #[test]
    fn pathloss_rejects_nonpositive_distance() {
        assert!(matches!(pathloss_nlos(0.0), Err(Error::ZeroDistance(_))));
        assert!(matches!(pathloss_los(-1.0), Err(Error::ZeroDistance(_))));
    }

    #[test]
    fn subphase_minima() {
        assert_eq!(min_subphases(32, 4, 8, Protocol::Proposed), 17);
        assert_eq!(min_subphases(32, 4, 8, Protocol::Benchmark), 129);
        assert_eq!(min_subphases(1, 1, 1, Protocol::Proposed), 2);
        assert_eq!(min_subphases(3, 1, 2, Protocol::Proposed), 3);
    }

    #[test]
    fn geometry_reference_layout() {
        let cfg = SystemConfig::reference();
        let geo = build_geometry(&cfg).unwrap();
        assert_eq!(geo.d_bs_irs[0], 100.0);
        // IRS 1 sits at (100, 0).
        assert_eq!(geo.aod_azimuth[1], 0.0);
        assert!((geo.aoa_azimuth[1] - PI).abs() < 1e-15);
        for &a in geo.aod_azimuth.iter().chain(&geo.aoa_azimuth) {
            assert!(a > -PI && a <= PI);
        }
        for &d in &geo.d_bs_user {
            assert!((d - USER_RING_RADIUS).abs() < 1e-12);
        }
    }

    #[test]
    fn geometry_rejects_colocated_user() {
        let mut cfg = SystemConfig::reference();
        cfg.user_positions[0] = [0.0, 0.0];
        assert!(matches!(build_geometry(&cfg), Err(Error::ZeroDistance(_))));
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SystemConfig::reference();
        cfg.validate().unwrap();
        assert_eq!(cfg.s, 17);
        assert_eq!(cfg.irs_positions, REFERENCE_IRS_SITES.to_vec());
        let pl = PathLossSet::from_geometry(&build_geometry(&cfg).unwrap()).unwrap();
        assert!((pl.beta_1[0] - 1e-7).abs() < 1e-19);
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let cfg = SystemConfig::reference();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"tau_S\"") && text.contains("\"Delta_IRS\"") && text.contains("\"P_C\""));
        assert_eq!(SystemConfig::from_json_str(&text).unwrap(), cfg);

        let partial = SystemConfig::from_json_str(r#"{"L": 2, "sigma2": 1e-20}"#).unwrap();
        assert_eq!(partial.l, 2);
        assert_eq!(partial.s, 9);
        assert_eq!(partial.irs_positions.len(), 2);
        assert_eq!(partial.sigma2, 1e-20);
    }

    #[test]
    fn json_rejects_invalid_values() {
        for doc in [
            r#"{"eta_bs": 1.0}"#,
            r#"{"S": 16}"#,
            r#"{"K": 60}"#,
            r#"{"T_S": 49}"#,
            r#"{"P_C": 0}"#,
            r#"{"M": 0}"#,
            r#"{"L": 3, "irs_positions": [[0, 1]]}"#,
        ] {
            assert!(matches!(SystemConfig::from_json_str(doc), Err(Error::Config(_))), "{doc}");
        }
        assert!(matches!(SystemConfig::from_json_str(r#"{"bogus": 1}"#), Err(Error::Json(_))));
    }

    proptest! {
        #[test]
        fn pathloss_strictly_decreasing(d1 in 0.01f64..1e4, frac in 1.0001f64..10.0) {
            let d2 = d1 * frac;
            prop_assert!(pathloss_nlos(d1).unwrap() > pathloss_nlos(d2).unwrap());
            prop_assert!(pathloss_los(d1).unwrap() > pathloss_los(d2).unwrap());
        }

        #[test]
        fn proposed_never_needs_more_subphases(n in 1usize..64, l in 1usize..12, m in 1usize..64) {
            let p = min_subphases(n, l, m, Protocol::Proposed);
            let b = min_subphases(n, l, m, Protocol::Benchmark);
            prop_assert!(p <= b);
            prop_assert_eq!(p == b, m == 1 || n * l == 1);
        }

        #[test]
        fn distances_symmetric(ax in -500f64..500.0, ay in -500f64..500.0, bx in -500f64..500.0, by in -500f64..500.0) {
            prop_assert_eq!(distance([ax, ay], [bx, by]), distance([bx, by], [ax, ay]));
        }
    }
}
