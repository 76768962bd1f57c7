//! Seeded Monte-Carlo sweeps over the estimation pipeline and their CSV output.
//!
//! Trial `t` of every sweep point draws from `ChaCha8(master_seed)` on stream `t`,
//! so points and protocols see common random numbers and results do not depend
//! on the rayon thread count. Per-trial errors are reduced in trial order.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{figure_of_merit, nmse_closed, ChannelKind, ClosedFormParams, EstimatorKind, NmseAccumulator};
use crate::benchmark::{bm_estimate, bm_recover_h2, bm_synthesize_and_decorrelate};
use crate::channel::{ChannelModel, ChannelSet};
use crate::error::{Error, Result};
use crate::estimators::{cascaded_estimate, FilterBank};
use crate::linalg::{CMat, CVec};
use crate::sysconfig::{build_geometry, min_subphases, PathLossSet, Protocol, SystemConfig};
use crate::training::{decorrelate, synthesize_observations, TrainingDesign};

/// Swept parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "sigma2")]
    Sigma2,
    #[serde(rename = "beta_d")]
    BetaD,
    #[serde(rename = "beta_2")]
    Beta2,
    L,
    S,
    #[serde(rename = "eta")]
    Eta,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::Sigma2 => "sigma2",
            SweepVar::BetaD => "beta_d",
            SweepVar::Beta2 => "beta_2",
            SweepVar::L => "L",
            SweepVar::S => "S",
            SweepVar::Eta => "eta",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma2" => SweepVar::Sigma2,
            "beta_d" => SweepVar::BetaD,
            "beta_2" => SweepVar::Beta2,
            "L" => SweepVar::L,
            "S" => SweepVar::S,
            "eta" => SweepVar::Eta,
            other => return Err(Error::Config(format!("unknown sweep variable {other:?}"))),
        })
    }
}

/// How the sub-phase count of the proposed protocol is floored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SubphasePolicy {
    /// `ceil(NL/M) + 1`. DFT training is rank deficient there whenever `M > 1`
    /// and `NL > 1`, so such runs stop with `RankDeficient`.
    #[default]
    ProtocolMinimum,
    /// `NL + 1`, the smallest DFT design that identifies every channel.
    FullRank,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub protocols: Vec<Protocol>,
    pub subphases: SubphasePolicy,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(base: SystemConfig, sweep: SweepVar, values: Vec<f64>) -> Self {
        ExperimentSpec {
            base,
            sweep,
            values,
            trials: 1000,
            master_seed: 0,
            protocols: vec![Protocol::Proposed],
            subphases: SubphasePolicy::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep values must not be empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.protocols.is_empty() {
            return Err(Error::Config("no protocol selected".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite sweep value {v}")));
        }
        Ok(())
    }
}

/// One CSV line: a (sweep value, protocol, channel kind, estimator) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub protocol: Protocol,
    pub channel_kind: ChannelKind,
    pub estimator_kind: EstimatorKind,
    pub nmse_empirical: f64,
    pub nmse_closed: Option<f64>,
    pub fom: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Sub-phase count actually used.
    pub s: usize,
    /// Training time `S tau_S` in seconds.
    pub tau_c: f64,
    /// Correlation coefficient on the side of the estimated link.
    pub eta: f64,
}

pub const CSV_HEADER: [&str; 13] = [
    "sweep_variable",
    "sweep_value",
    "protocol",
    "channel_kind",
    "estimator_kind",
    "nmse_empirical",
    "nmse_closed",
    "fom",
    "trials",
    "seed",
    "s",
    "tau_c",
    "eta",
];

/// Random stream of one trial.
pub fn trial_rng(master_seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng
}

fn integral(v: f64, name: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{name} must be a positive integer, got {v}")))
    }
}

/// Configuration and path losses of one sweep point (before any S adjustment).
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub cfg: SystemConfig,
    pub pathloss: PathLossSet,
}

pub fn prepare_point(base: &SystemConfig, sweep: SweepVar, value: f64) -> Result<SweepPoint> {
    let mut cfg = base.clone();
    match sweep {
        SweepVar::Sigma2 => cfg.sigma2 = value,
        SweepVar::L => cfg = cfg.with_irs_count(integral(value, "L")?),
        SweepVar::S => cfg.s = integral(value, "S")?,
        SweepVar::Eta => {
            cfg.eta_bs = value;
            cfg.eta_irs = value;
        }
        SweepVar::BetaD | SweepVar::Beta2 => {}
    }
    let floor = min_subphases(cfg.n, cfg.l, cfg.m, Protocol::Proposed);
    if cfg.s < floor {
        info!("S = {} raised to the protocol minimum {floor}", cfg.s);
        cfg.s = floor;
    }
    cfg.validate()?;
    let mut pathloss = PathLossSet::from_geometry(&build_geometry(&cfg)?)?;
    match sweep {
        SweepVar::BetaD => pathloss.beta_d.iter_mut().for_each(|b| *b = value),
        SweepVar::Beta2 => pathloss.beta_2.iter_mut().flatten().for_each(|b| *b = value),
        _ => {}
    }
    pathloss.validate()?;
    Ok(SweepPoint { cfg, pathloss })
}

/// Sub-phase count a protocol runs with, raised to its floor if needed.
pub fn effective_subphases(cfg: &SystemConfig, protocol: Protocol, policy: SubphasePolicy) -> usize {
    let floor = match (protocol, policy) {
        (Protocol::Proposed, SubphasePolicy::ProtocolMinimum) => min_subphases(cfg.n, cfg.l, cfg.m, Protocol::Proposed),
        _ => cfg.total_elements() + 1,
    };
    if cfg.s < floor {
        info!("{}: S = {} raised to {floor}", protocol.as_str(), cfg.s);
        floor
    } else {
        cfg.s
    }
}

const SLOTS: usize = 6;

fn slot(kind: ChannelKind, est: EstimatorKind) -> usize {
    let k = match kind {
        ChannelKind::Direct => 0,
        ChannelKind::IrsLink => 1,
        ChannelKind::Cascaded => 2,
    };
    2 * k + usize::from(est == EstimatorKind::Mmse)
}

/// Squared error and truth energy per unit (user or IRS-user pair) of one trial.
type TrialErrors = [Vec<(f64, f64)>; SLOTS];

fn vec_pair(est: &CVec, truth: &CVec) -> (f64, f64) {
    ((est - truth).norm_squared(), truth.norm_squared())
}

fn mat_pair(est: &CMat, truth: &CMat) -> (f64, f64) {
    ((est - truth).norm_squared(), truth.norm_squared())
}

fn true_cascaded(ch: &ChannelSet, k: usize) -> Result<CMat> {
    let h2: Vec<CVec> = ch.h_2.iter().map(|v| v[k].clone()).collect();
    cascaded_estimate(&h2, &ch.h_1)
}

/// Per-slot NMSE, each averaged over its units.
fn reduce(trials: &[TrialErrors]) -> Result<[f64; SLOTS]> {
    let mut out = [0.0; SLOTS];
    for (i, o) in out.iter_mut().enumerate() {
        let units = trials[0][i].len();
        let mut accs = vec![NmseAccumulator::default(); units];
        for t in trials {
            for (acc, &(e, h)) in accs.iter_mut().zip(&t[i]) {
                acc.add_raw(e, h);
            }
        }
        let mut sum = 0.0;
        for acc in &accs {
            sum += acc.value()?;
        }
        *o = sum / units as f64;
    }
    Ok(out)
}

fn run_proposed(cfg: &SystemConfig, model: &ChannelModel, trials: usize, seed: u64) -> Result<[f64; SLOTS]> {
    let design = TrainingDesign::new(cfg.s, &model.h_1)?;
    design.ensure_identifiable()?;
    let gamma_l: Vec<f64> = (0..cfg.l).map(|l| design.gamma_l(cfg, l)).collect();
    let bank = FilterBank::new(&model.pathloss, &model.correlation, design.gamma_d(cfg), &gamma_l)?;
    let stats = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialErrors> {
            let mut rng = trial_rng(seed, t);
            let ch = model.draw(&mut rng);
            let obs = decorrelate(synthesize_observations(&ch, &design, cfg, &mut rng)?, &design, cfg)?;
            let dec = obs.decorrelated.ok_or(Error::EmptyInput)?;
            let (h_d_mmse, h_2_mmse) = bank.estimate(&dec);
            let mut e: TrialErrors = Default::default();
            for k in 0..cfg.k {
                e[slot(ChannelKind::Direct, EstimatorKind::Ls)].push(vec_pair(&dec.r0[k], &ch.h_d[k]));
                e[slot(ChannelKind::Direct, EstimatorKind::Mmse)].push(vec_pair(&h_d_mmse[k], &ch.h_d[k]));
            }
            for l in 0..cfg.l {
                for k in 0..cfg.k {
                    e[slot(ChannelKind::IrsLink, EstimatorKind::Ls)].push(vec_pair(&dec.r_l[l][k], &ch.h_2[l][k]));
                    e[slot(ChannelKind::IrsLink, EstimatorKind::Mmse)].push(vec_pair(&h_2_mmse[l][k], &ch.h_2[l][k]));
                }
            }
            for k in 0..cfg.k {
                let truth = true_cascaded(&ch, k)?;
                let ls: Vec<CVec> = dec.r_l.iter().map(|v| v[k].clone()).collect();
                let mmse: Vec<CVec> = h_2_mmse.iter().map(|v| v[k].clone()).collect();
                e[slot(ChannelKind::Cascaded, EstimatorKind::Ls)].push(mat_pair(&cascaded_estimate(&ls, &ch.h_1)?, &truth));
                e[slot(ChannelKind::Cascaded, EstimatorKind::Mmse)].push(mat_pair(&cascaded_estimate(&mmse, &ch.h_1)?, &truth));
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    reduce(&stats)
}

fn run_benchmark(cfg: &SystemConfig, model: &ChannelModel, trials: usize, seed: u64) -> Result<[f64; SLOTS]> {
    let stats = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialErrors> {
            let mut rng = trial_rng(seed, t);
            let ch = model.draw(&mut rng);
            let dec = bm_synthesize_and_decorrelate(&ch, cfg, &mut rng)?;
            let set = bm_estimate(&dec, &model.pathloss, &model.correlation, &ch.h_1, cfg)?;
            let mut e: TrialErrors = Default::default();
            for k in 0..cfg.k {
                e[slot(ChannelKind::Direct, EstimatorKind::Ls)].push(vec_pair(&dec.r0[k], &ch.h_d[k]));
                e[slot(ChannelKind::Direct, EstimatorKind::Mmse)].push(vec_pair(&set.h_d_bm[k], &ch.h_d[k]));
            }
            let ls_cols: Vec<Vec<Vec<CVec>>> = (0..cfg.k)
                .map(|k| dec.r_ln.iter().map(|l| l.iter().map(|n| n[k].clone()).collect()).collect())
                .collect();
            let mmse_cols: Vec<Vec<Vec<CVec>>> = (0..cfg.k)
                .map(|k| set.h0_bm.iter().map(|l| l.iter().map(|n| n[k].clone()).collect()).collect())
                .collect();
            let h2_ls = ls_cols.iter().map(|c| bm_recover_h2(c, &ch.h_1)).collect::<Result<Vec<_>>>()?;
            let h2_mmse = mmse_cols.iter().map(|c| bm_recover_h2(c, &ch.h_1)).collect::<Result<Vec<_>>>()?;
            for l in 0..cfg.l {
                for k in 0..cfg.k {
                    e[slot(ChannelKind::IrsLink, EstimatorKind::Ls)].push(vec_pair(&h2_ls[k][l], &ch.h_2[l][k]));
                    e[slot(ChannelKind::IrsLink, EstimatorKind::Mmse)].push(vec_pair(&h2_mmse[k][l], &ch.h_2[l][k]));
                }
            }
            for k in 0..cfg.k {
                let truth = true_cascaded(&ch, k)?;
                let ls = CMat::from_columns(&ls_cols[k].concat());
                e[slot(ChannelKind::Cascaded, EstimatorKind::Ls)].push(mat_pair(&ls, &truth));
                e[slot(ChannelKind::Cascaded, EstimatorKind::Mmse)].push(mat_pair(&set.cascaded(k), &truth));
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    reduce(&stats)
}

/// Closed form averaged over units; `None` where no closed form applies.
fn closed_form(cfg: &SystemConfig, pl: &PathLossSet, kind: ChannelKind, est: EstimatorKind) -> Result<Option<f64>> {
    let eta = match kind {
        ChannelKind::Direct => cfg.eta_bs,
        ChannelKind::IrsLink => cfg.eta_irs,
        ChannelKind::Cascaded => return Ok(None),
    };
    // The LS error does not depend on R (tr R = M); the MMSE form needs R = I.
    if est == EstimatorKind::Mmse && eta != 0.0 {
        return Ok(None);
    }
    let params = |beta, beta_1| ClosedFormParams {
        beta,
        beta_1,
        s: cfg.s,
        m: cfg.m,
        p_c: cfg.p_c,
        tau_s: cfg.tau_s,
        sigma2: cfg.sigma2,
    };
    let mut sum = 0.0;
    let mut count = 0;
    match kind {
        ChannelKind::Direct => {
            for &b in &pl.beta_d {
                sum += nmse_closed(kind, est, &params(b, 1.0))?;
                count += 1;
            }
        }
        _ => {
            for (betas, &b1) in pl.beta_2.iter().zip(&pl.beta_1) {
                for &b in betas {
                    sum += nmse_closed(kind, est, &params(b, b1))?;
                    count += 1;
                }
            }
        }
    }
    Ok(Some(sum / count as f64))
}

/// Run every sweep point for every protocol of `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        let point = prepare_point(&spec.base, spec.sweep, value)?;
        for &protocol in &spec.protocols {
            let mut cfg = point.cfg.clone();
            cfg.s = effective_subphases(&cfg, protocol, spec.subphases);
            let geo = build_geometry(&cfg)?;
            let model = ChannelModel::new(&cfg, &geo, point.pathloss.clone())?;
            debug!("{} = {value:e}, {}: S = {}, {} trials", spec.sweep, protocol.as_str(), cfg.s, spec.trials);
            let nmse = match protocol {
                Protocol::Proposed => run_proposed(&cfg, &model, spec.trials, spec.master_seed)?,
                Protocol::Benchmark => run_benchmark(&cfg, &model, spec.trials, spec.master_seed)?,
            };
            for kind in ChannelKind::ALL {
                for est in EstimatorKind::ALL {
                    let empirical = nmse[slot(kind, est)];
                    rows.push(ResultRow {
                        sweep_variable: spec.sweep.to_string(),
                        sweep_value: value,
                        protocol,
                        channel_kind: kind,
                        estimator_kind: est,
                        nmse_empirical: empirical,
                        nmse_closed: closed_form(&cfg, &point.pathloss, kind, est)?,
                        fom: figure_of_merit(empirical, cfg.s, cfg.tau_s).ok(),
                        trials: spec.trials,
                        seed: spec.master_seed,
                        s: cfg.s,
                        tau_c: cfg.s as f64 * cfg.tau_s,
                        eta: if kind == ChannelKind::Direct { cfg.eta_bs } else { cfg.eta_irs },
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Cascaded-channel MMSE summary of one IRS count.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolComparison {
    pub l: usize,
    pub s_proposed: usize,
    pub s_benchmark: usize,
    pub tau_c_proposed: f64,
    pub tau_c_benchmark: f64,
    pub nmse_proposed: f64,
    pub nmse_benchmark: f64,
    pub fom_proposed: Option<f64>,
    pub fom_benchmark: Option<f64>,
}

/// Both protocols over an IRS-count sweep; returns the full table and a
/// per-L summary of the cascaded MMSE rows.
pub fn compare_protocols(spec: &ExperimentSpec) -> Result<(Vec<ResultRow>, Vec<ProtocolComparison>)> {
    if spec.sweep != SweepVar::L {
        return Err(Error::Config("protocol comparison sweeps L".into()));
    }
    let mut spec = spec.clone();
    spec.protocols = vec![Protocol::Proposed, Protocol::Benchmark];
    let rows = run_experiment(&spec)?;
    let pick = |value: f64, protocol: Protocol| {
        rows.iter()
            .find(|r| {
                r.sweep_value == value
                    && r.protocol == protocol
                    && r.channel_kind == ChannelKind::Cascaded
                    && r.estimator_kind == EstimatorKind::Mmse
            })
            .ok_or(Error::EmptyInput)
    };
    let mut summary = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let (p, b) = (pick(value, Protocol::Proposed)?, pick(value, Protocol::Benchmark)?);
        summary.push(ProtocolComparison {
            l: value as usize,
            s_proposed: p.s,
            s_benchmark: b.s,
            tau_c_proposed: p.tau_c,
            tau_c_benchmark: b.tau_c,
            nmse_proposed: p.nmse_empirical,
            nmse_benchmark: b.nmse_empirical,
            fom_proposed: p.fom,
            fom_benchmark: b.fom,
        });
    }
    Ok((rows, summary))
}

/// `n` log-spaced points from `10^lo` to `10^hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
}

/// Named experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3,
    Table1,
    Custom,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig2a" => Preset::Fig2a,
            "fig2b" => Preset::Fig2b,
            "fig2c" => Preset::Fig2c,
            "fig3" => Preset::Fig3,
            "table1" => Preset::Table1,
            "custom" => Preset::Custom,
            other => return Err(Error::Config(format!("unknown experiment {other:?}"))),
        })
    }
}

/// Correlation level of the correlated overlay in the NMSE sweeps.
pub const OVERLAY_ETA: f64 = 0.95;

/// Specs making up a preset. The NMSE sweeps run once uncorrelated and once at
/// [`OVERLAY_ETA`]; the noise sweep spans both the IRS and the direct-link range; the path-loss sweeps fix sigma2 so the curves span the
/// interesting range, and the protocol comparison sweeps L over {2, 6, 8, 10}.
pub fn preset_specs(preset: Preset, base: &SystemConfig, trials: usize, seed: u64) -> Vec<ExperimentSpec> {
    let make = |cfg: SystemConfig, sweep, values, protocols: Vec<Protocol>| ExperimentSpec {
        trials,
        master_seed: seed,
        protocols,
        ..ExperimentSpec::new(cfg, sweep, values)
    };
    let with_eta = |eta: f64, sigma2: Option<f64>| {
        let mut cfg = base.clone();
        cfg.eta_bs = eta;
        cfg.eta_irs = eta;
        if let Some(s2) = sigma2 {
            cfg.sigma2 = s2;
        }
        cfg
    };
    let proposed = || vec![Protocol::Proposed];
    match preset {
        Preset::Fig2a => [0.0, OVERLAY_ETA]
            .iter()
            .map(|&eta| make(with_eta(eta, None), SweepVar::Sigma2, logspace(-22.0, -8.0, 15), proposed()))
            .collect(),
        Preset::Fig2b => [0.0, OVERLAY_ETA]
            .iter()
            .map(|&eta| make(with_eta(eta, Some(1e-13)), SweepVar::BetaD, logspace(-12.0, -6.0, 10), proposed()))
            .collect(),
        Preset::Fig2c => [0.0, OVERLAY_ETA]
            .iter()
            .map(|&eta| make(with_eta(eta, Some(1e-20)), SweepVar::Beta2, logspace(-14.0, -8.0, 10), proposed()))
            .collect(),
        Preset::Fig3 | Preset::Table1 => vec![make(
            base.clone(),
            SweepVar::L,
            vec![2.0, 6.0, 8.0, 10.0],
            vec![Protocol::Proposed, Protocol::Benchmark],
        )],
        Preset::Custom => vec![make(base.clone(), SweepVar::Sigma2, vec![base.sigma2], proposed())],
    }
}

/// Parse `name=v1,v2,...`.
pub fn parse_sweep(text: &str) -> Result<(SweepVar, Vec<f64>)> {
    let (name, values) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep {text:?} is not of the form name=v1,v2,...")))?;
    let var = name.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("sweep value {v:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    Ok((var, values))
}

pub fn write_csv_to<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_csv_to(std::fs::File::create(path)?, rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_base() -> SystemConfig {
        let mut cfg = SystemConfig::reference().with_irs_count(2);
        cfg.n = 4;
        cfg.m = 4;
        cfg.s = cfg.n * cfg.l + 1;
        cfg
    }

    #[test]
    fn sweep_names_round_trip() {
        for v in [SweepVar::Sigma2, SweepVar::BetaD, SweepVar::Beta2, SweepVar::L, SweepVar::S, SweepVar::Eta] {
            assert_eq!(v.as_str().parse::<SweepVar>().unwrap(), v);
        }
        assert!("gamma".parse::<SweepVar>().is_err());
        let (v, vals) = parse_sweep("sigma2=1e-20, 1e-19").unwrap();
        assert_eq!((v, vals), (SweepVar::Sigma2, vec![1e-20, 1e-19]));
        assert!(parse_sweep("sigma2").is_err());
        assert!(parse_sweep("L=2,x").is_err());
    }

    #[test]
    fn noiseless_single_trial_is_exact() {
        let mut spec = ExperimentSpec::new(small_base(), SweepVar::Sigma2, vec![0.0]);
        spec.trials = 1;
        spec.protocols = vec![Protocol::Proposed, Protocol::Benchmark];
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 12);
        for r in &rows {
            assert!(r.nmse_empirical < 1e-18, "{r:?}");
            assert!(r.fom.is_none() || r.nmse_empirical > 0.0);
        }
    }

    #[test]
    fn rows_carry_effective_subphases() {
        let mut base = small_base();
        base.s = 3;
        let mut spec = ExperimentSpec::new(base, SweepVar::Sigma2, vec![1e-20]);
        spec.trials = 2;
        spec.protocols = vec![Protocol::Benchmark];
        let rows = run_experiment(&spec).unwrap();
        assert!(rows.iter().all(|r| r.s == 9 && (r.tau_c - 9.0 * 50e-6).abs() < 1e-18));

        spec.protocols = vec![Protocol::Proposed];
        assert!(matches!(run_experiment(&spec), Err(Error::RankDeficient { .. })));
        spec.subphases = SubphasePolicy::FullRank;
        assert!(run_experiment(&spec).unwrap().iter().all(|r| r.s == 9));
    }

    #[test]
    fn closed_forms_only_where_defined() {
        let mut spec = ExperimentSpec::new(small_base(), SweepVar::Eta, vec![0.0, 0.5]);
        spec.trials = 2;
        let rows = run_experiment(&spec).unwrap();
        for r in rows {
            let expect = r.channel_kind != ChannelKind::Cascaded && (r.estimator_kind == EstimatorKind::Ls || r.eta == 0.0);
            assert_eq!(r.nmse_closed.is_some(), expect, "{r:?}");
        }
    }

    #[test]
    fn path_loss_sweeps_override_geometry() {
        let p = prepare_point(&small_base(), SweepVar::BetaD, 1e-9).unwrap();
        assert!(p.pathloss.beta_d.iter().all(|&b| b == 1e-9));
        let p = prepare_point(&small_base(), SweepVar::Beta2, 1e-12).unwrap();
        assert!(p.pathloss.beta_2.iter().flatten().all(|&b| b == 1e-12));
        assert!(prepare_point(&small_base(), SweepVar::BetaD, 2.0).is_err());
        assert!(prepare_point(&small_base(), SweepVar::L, 2.5).is_err());
        let p = prepare_point(&small_base(), SweepVar::L, 3.0).unwrap();
        assert_eq!((p.cfg.l, p.cfg.irs_positions.len()), (3, 3));
    }

    #[test]
    fn deterministic_output() {
        let mut spec = ExperimentSpec::new(small_base(), SweepVar::Sigma2, vec![1e-20, 1e-18]);
        spec.trials = 20;
        spec.master_seed = 7;
        spec.protocols = vec![Protocol::Proposed, Protocol::Benchmark];
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv_to(&mut a, &run_experiment(&spec).unwrap()).unwrap();
        write_csv_to(&mut b, &run_experiment(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let mut c = Vec::new();
        single.install(|| write_csv_to(&mut c, &run_experiment(&spec).unwrap())).unwrap();
        assert_eq!(text.as_bytes(), &c[..]);
    }

    #[test]
    fn presets_cover_named_experiments() {
        let base = SystemConfig::reference();
        assert_eq!(preset_specs(Preset::Fig2a, &base, 10, 1).len(), 2);
        let fig3 = preset_specs(Preset::Fig3, &base, 10, 1);
        assert_eq!(fig3[0].values, vec![2.0, 6.0, 8.0, 10.0]);
        assert_eq!(fig3[0].protocols.len(), 2);
        assert_eq!("table1".parse::<Preset>().unwrap(), Preset::Table1);
        assert!("fig9".parse::<Preset>().is_err());
        let ls = logspace(-22.0, -8.0, 15);
        assert_eq!(ls.len(), 15);
        assert!((ls[0] / 1e-22 - 1.0).abs() < 1e-12 && (ls[14] / 1e-8 - 1.0).abs() < 1e-12);
        assert!((ls[1] / 1e-21 - 1.0).abs() < 1e-12);
    }
}
