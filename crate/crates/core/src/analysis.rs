//! Closed-form NMSE expressions, empirical NMSE and the figure of merit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Direct,
    IrsLink,
    Cascaded,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::Direct, ChannelKind::IrsLink, ChannelKind::Cascaded];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Direct => "direct",
            ChannelKind::IrsLink => "irs_link",
            ChannelKind::Cascaded => "cascaded",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "MMSE")]
    Mmse,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Ls, EstimatorKind::Mmse];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Ls => "LS",
            EstimatorKind::Mmse => "MMSE",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inputs of the uncorrelated closed forms. `beta` is `beta_d` for the direct
/// channel and `beta_2` for an IRS link, whose LoS factor goes in `beta_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormParams {
    pub beta: f64,
    pub beta_1: f64,
    pub s: usize,
    pub m: usize,
    pub p_c: f64,
    pub tau_s: f64,
    pub sigma2: f64,
}

impl ClosedFormParams {
    fn check(&self) -> Result<()> {
        let positive = [self.beta, self.p_c, self.tau_s].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.s == 0 || self.m == 0 || !(self.sigma2 >= 0.0) || !(self.beta_1 > 0.0) {
            return Err(Error::Config(format!("invalid closed-form parameters {self:?}")));
        }
        Ok(())
    }

    /// `sigma2 / (S P_C tau_S)`.
    pub fn g_direct(&self) -> f64 {
        self.sigma2 / (self.s as f64 * self.p_c * self.tau_s)
    }

    /// `sigma2 / (S M P_C tau_S)`.
    pub fn g_irs(&self) -> f64 {
        self.g_direct() / self.m as f64
    }
}

/// NMSE under identity correlation.
pub fn nmse_closed(channel: ChannelKind, estimator: EstimatorKind, p: &ClosedFormParams) -> Result<f64> {
    p.check()?;
    let (signal, g) = match channel {
        ChannelKind::Direct => (p.beta, p.g_direct()),
        ChannelKind::IrsLink => (p.beta * p.beta_1, p.g_irs()),
        ChannelKind::Cascaded => return Err(Error::UnsupportedKind),
    };
    Ok(match estimator {
        EstimatorKind::Ls => g / signal,
        EstimatorKind::Mmse => g / (signal + g),
    })
}

/// `sigma^4 / ((b S P tau)^2 + b S P tau sigma^2)`, the LS-MMSE NMSE gap for an
/// effective signal power `b`.
fn gap(b: f64, s: usize, p_c: f64, tau_s: f64, sigma2: f64) -> f64 {
    let x = b * s as f64 * p_c * tau_s;
    sigma2 * sigma2 / (x * x + x * sigma2)
}

/// NMSE(LS) - NMSE(MMSE) for the direct channel.
pub fn gap_direct(beta_d: f64, s: usize, p_c: f64, tau_s: f64, sigma2: f64) -> f64 {
    gap(beta_d, s, p_c, tau_s, sigma2)
}

/// NMSE(LS) - NMSE(MMSE) for an IRS-user link.
pub fn gap_irs(beta_2: f64, beta_1: f64, m: usize, s: usize, p_c: f64, tau_s: f64, sigma2: f64) -> f64 {
    gap(beta_2 * beta_1 * m as f64, s, p_c, tau_s, sigma2)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running `sum ||h_hat - h||^2 / sum ||h||^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NmseAccumulator {
    err: CompensatedSum,
    energy: CompensatedSum,
    pub trials: usize,
}

impl NmseAccumulator {
    pub fn add_raw(&mut self, err: f64, energy: f64) {
        self.err.add(err);
        self.energy.add(energy);
        self.trials += 1;
    }

    pub fn add(&mut self, estimate: &CVec, truth: &CVec) {
        self.add_raw((estimate - truth).norm_squared(), truth.norm_squared());
    }

    pub fn add_mat(&mut self, estimate: &CMat, truth: &CMat) {
        self.add_raw((estimate - truth).norm_squared(), truth.norm_squared());
    }

    pub fn merge(&mut self, other: &NmseAccumulator) {
        self.err.merge(&other.err);
        self.energy.merge(&other.energy);
        self.trials += other.trials;
    }

    pub fn value(&self) -> Result<f64> {
        if self.trials == 0 {
            return Err(Error::EmptyInput);
        }
        let err = self.err.value();
        let energy = self.energy.value();
        Ok(if err == 0.0 { 0.0 } else { err / energy })
    }
}

fn check_pairs(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::EmptyInput);
    }
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} estimates for {b} truths")));
    }
    Ok(())
}

/// Trace-ratio NMSE over a set of vector realizations.
pub fn empirical_nmse(estimates: &[CVec], truths: &[CVec]) -> Result<f64> {
    check_pairs(estimates.len(), truths.len())?;
    let mut acc = NmseAccumulator::default();
    for (e, t) in estimates.iter().zip(truths) {
        if e.len() != t.len() {
            return Err(Error::DimensionMismatch("estimate and truth lengths differ".into()));
        }
        acc.add(e, t);
    }
    acc.value()
}

/// Frobenius-form NMSE over a set of matrix realizations (cascaded channels).
pub fn empirical_nmse_mat(estimates: &[CMat], truths: &[CMat]) -> Result<f64> {
    check_pairs(estimates.len(), truths.len())?;
    let mut acc = NmseAccumulator::default();
    for (e, t) in estimates.iter().zip(truths) {
        if e.shape() != t.shape() {
            return Err(Error::DimensionMismatch("estimate and truth shapes differ".into()));
        }
        acc.add_mat(e, t);
    }
    acc.value()
}

/// Estimation accuracy per second of training, `1 / (NMSE S tau_S)`.
pub fn figure_of_merit(nmse: f64, s: usize, tau_s: f64) -> Result<f64> {
    if nmse == 0.0 {
        return Err(Error::ZeroNmse);
    }
    if !(nmse > 0.0) || s == 0 || !(tau_s > 0.0) {
        return Err(Error::Config(format!("invalid figure-of-merit inputs nmse = {nmse}, S = {s}, tau_S = {tau_s}")));
    }
    Ok(1.0 / (nmse * s as f64 * tau_s))
}

/// One aggregated NMSE measurement next to its closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmseRecord {
    pub channel_kind: ChannelKind,
    pub estimator_kind: EstimatorKind,
    pub closed_form: Option<f64>,
    pub empirical: f64,
    pub trials: usize,
    pub params: ClosedFormParams,
    pub eta: f64,
}
