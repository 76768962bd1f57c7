//! Benchmark protocol: every cascaded column `h_{0,l,n,k} = h_{1,l,n} h_{2,l,k}[n]`
//! is estimated as an unknown, which needs `S >= NL + 1` sub-phases.

use nalgebra::Cholesky;
use rand::Rng;
use rustfft::FftPlanner;

use crate::channel::{ChannelSet, CorrelationModel};
use crate::error::{Error, Result};
use crate::linalg::{complex_normal_vec, CMat, CVec, C64};
use crate::sysconfig::{PathLossSet, SystemConfig};

/// Decorrelated benchmark observations of every user.
#[derive(Clone, Debug)]
pub struct BmDecorrelated {
    /// Full `M(NL+1)` vectors, one per user.
    pub r_tilde: Vec<CVec>,
    /// Direct-channel block per user.
    pub r0: Vec<CVec>,
    /// Cascaded-column blocks, `[l][n][k]`.
    pub r_ln: Vec<Vec<Vec<CVec>>>,
    /// Per-entry noise variance of every block, `sigma2 / (S P_C tau_S)`.
    pub gamma: f64,
    pub s: usize,
}

/// Noise variance of each decorrelated block.
pub fn bm_gamma(cfg: &SystemConfig) -> f64 {
    cfg.sigma2 / (cfg.s as f64 * cfg.p_c * cfg.tau_s)
}

/// Stack `[h_d, h_{0,1,1}, ..., h_{0,L,N}]` for user `k` as `NL + 1` M-vectors.
fn stacked_unknowns(ch: &ChannelSet, k: usize) -> Vec<CVec> {
    let mut out = vec![ch.h_d[k].clone()];
    for (h1, h2) in ch.h_1.iter().zip(&ch.h_2) {
        for (n, col) in h1.column_iter().enumerate() {
            out.push(col * h2[k][n]);
        }
    }
    out
}

/// Simulate the benchmark training phase with `S = cfg.s` and correlate each
/// sub-phase with the DFT code: `r~ = h_bar + (1/S) (V^H kron I) n`. Both the
/// code modulation and the correlation run as length-S FFTs per antenna.
pub fn bm_synthesize_and_decorrelate<R: Rng + ?Sized>(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<BmDecorrelated> {
    let (m, n, l, s) = (cfg.m, cfg.n, cfg.l, cfg.s);
    let cols = n * l + 1;
    if s < cols {
        return Err(Error::InsufficientSubphases { s, required: cols });
    }
    if ch.h_1.len() != l || ch.h_1.iter().any(|h| h.nrows() != m || h.ncols() != n) {
        return Err(Error::DimensionMismatch("channel set does not match configuration".into()));
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(s);
    let inverse = planner.plan_fft_inverse(s);
    let zero = C64::new(0.0, 0.0);
    let mut scratch = vec![zero; forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
    let noise_var = cfg.sigma2 / (cfg.p_c * cfg.tau_s);
    let inv_s = 1.0 / s as f64;

    let mut r_tilde = Vec::with_capacity(ch.users());
    for k in 0..ch.users() {
        let unknowns = stacked_unknowns(ch, k);
        // Noise of the received sequence, one column per sub-phase.
        let mut noise = CMat::zeros(m, s);
        for srow in 0..s {
            noise.set_column(srow, &complex_normal_vec(rng, m, noise_var));
        }
        let mut buf = vec![zero; s];
        let mut full = CVec::zeros(m * cols);
        for p in 0..m {
            buf.fill(zero);
            for (j, h) in unknowns.iter().enumerate() {
                buf[j] = h[p];
            }
            forward.process_with_scratch(&mut buf, &mut scratch);
            for (srow, v) in buf.iter_mut().enumerate() {
                *v += noise[(p, srow)];
            }
            inverse.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..cols {
                full[j * m + p] = buf[j] * inv_s;
            }
        }
        r_tilde.push(full);
    }

    let r0 = r_tilde.iter().map(|r| r.rows(0, m).into_owned()).collect();
    let r_ln = (0..l)
        .map(|li| {
            (0..n)
                .map(|ni| {
                    let off = m * (1 + li * n + ni);
                    r_tilde.iter().map(|r| r.rows(off, m).into_owned()).collect()
                })
                .collect()
        })
        .collect();
    Ok(BmDecorrelated {
        r_tilde,
        r0,
        r_ln,
        gamma: bm_gamma(cfg),
        s,
    })
}

/// `beta_d R Q_d r~_0` with `Q_d = (beta_d R + gamma I)^{-1}` applied by a Cholesky solve.
pub fn bm_mmse_direct(r0: &CVec, beta_d: f64, r_bs: &CMat, gamma: f64) -> Result<CVec> {
    let m = r_bs.nrows();
    if r0.len() != m || !r_bs.is_square() {
        return Err(Error::DimensionMismatch("direct observation does not match R_BS".into()));
    }
    let prior = r_bs * C64::new(beta_d, 0.0);
    let q_inv = &prior + CMat::identity(m, m) * C64::new(gamma, 0.0);
    let chol = Cholesky::new(q_inv).ok_or(Error::SingularFilter)?;
    Ok(prior * chol.solve(r0))
}

/// Rank-one-prior MMSE estimate of a cascaded column,
/// `a u u^H (a u u^H + gamma I)^{-1} r~` with `a = r_lnk beta_lk`, evaluated
/// through Sherman-Morrison as `a u (u^H r~) / (gamma + a ||u||^2)`.
pub fn bm_mmse_cascaded(r: &CVec, r_lnk: f64, beta_lk: f64, h_1ln: &CVec, gamma: f64) -> Result<CVec> {
    if r.len() != h_1ln.len() {
        return Err(Error::DimensionMismatch("cascaded observation does not match h_1 column".into()));
    }
    let a = r_lnk * beta_lk;
    let denom = gamma + a * h_1ln.norm_squared();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::SingularFilter);
    }
    Ok(h_1ln * (h_1ln.dotc(r) * (a / denom)))
}

/// Per-column least-squares recovery `h_2[n] = h_{1,l,n}^H h_0[n] / ||h_{1,l,n}||^2`.
/// `h0` is indexed `[l][n]` for one user.
pub fn bm_recover_h2(h0: &[Vec<CVec>], h_1: &[CMat]) -> Result<Vec<CVec>> {
    if h0.len() != h_1.len() {
        return Err(Error::DimensionMismatch(format!("{} IRS blocks for {} LoS matrices", h0.len(), h_1.len())));
    }
    h0.iter()
        .zip(h_1)
        .enumerate()
        .map(|(l, (cols, h1))| {
            if cols.len() != h1.ncols() {
                return Err(Error::DimensionMismatch(format!("IRS {l}: {} columns for N = {}", cols.len(), h1.ncols())));
            }
            let mut out = CVec::zeros(cols.len());
            for (n, (est, h)) in cols.iter().zip(h1.column_iter()).enumerate() {
                let e = h.norm_squared();
                if e == 0.0 {
                    return Err(Error::ZeroColumn { irs: l, element: n });
                }
                out[n] = h.dotc(est) / e;
            }
            Ok(out)
        })
        .collect()
}

/// Benchmark MMSE estimates for every user.
#[derive(Clone, Debug)]
pub struct BenchmarkEstimateSet {
    pub h_d_bm: Vec<CVec>,
    /// `[l][n][k]`
    pub h0_bm: Vec<Vec<Vec<CVec>>>,
    pub s_bm: usize,
    /// `S_bm tau_S` in seconds.
    pub tau_c_bm: f64,
}

impl BenchmarkEstimateSet {
    /// Cascaded estimate of user `k` as an `M x NL` matrix.
    pub fn cascaded(&self, k: usize) -> CMat {
        let cols: Vec<CVec> = self.h0_bm.iter().flat_map(|l| l.iter().map(|n| n[k].clone())).collect();
        CMat::from_columns(&cols)
    }
}

/// Apply the benchmark MMSE filters to decorrelated observations.
pub fn bm_estimate(
    dec: &BmDecorrelated,
    pl: &PathLossSet,
    corr: &CorrelationModel,
    h_1: &[CMat],
    cfg: &SystemConfig,
) -> Result<BenchmarkEstimateSet> {
    let h_d_bm = dec
        .r0
        .iter()
        .enumerate()
        .map(|(k, r)| bm_mmse_direct(r, pl.beta_d[k], &corr.r_bs[k], dec.gamma))
        .collect::<Result<Vec<_>>>()?;
    let mut h0_bm = Vec::with_capacity(h_1.len());
    for (l, (h1, blocks)) in h_1.iter().zip(&dec.r_ln).enumerate() {
        let beta_1 = h1[(0, 0)].norm_sqr();
        let scale = C64::new(beta_1.sqrt().recip(), 0.0);
        let mut per_n = Vec::with_capacity(blocks.len());
        for (n, users) in blocks.iter().enumerate() {
            let u = h1.column(n) * scale;
            let ests = users
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let r_lnk = corr.r_irs[l][k][(n, n)].re;
                    bm_mmse_cascaded(r, r_lnk, beta_1 * pl.beta_2[l][k], &u, dec.gamma)
                })
                .collect::<Result<Vec<_>>>()?;
            per_n.push(ests);
        }
        h0_bm.push(per_n);
    }
    Ok(BenchmarkEstimateSet {
        h_d_bm,
        h0_bm,
        s_bm: dec.s,
        tau_c_bm: dec.s as f64 * cfg.tau_s,
    })
}
