//! DFT training design, synthetic training observations and their decorrelation.
//!
//! Observations are simulated after pilot correlation: in sub-phase `s` user `k`
//! contributes `r_{s,k} = h_{d,k} + sum_l H_{1,l} diag(v_{l,s}) h_{2,l,k} + n_{s,k}`
//! with `n_{s,k} ~ CN(0, sigma2 / (P_C tau_S) I_M)`. The explicit pilot path in
//! [`pilots`] exists to check that shortcut.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{complex_normal_vec, CMat, CVec, C64};
use crate::sysconfig::SystemConfig;

/// Relative eigenvalue floor below which the effective Gram matrix counts as singular.
pub const RANK_TOL: f64 = 1e-10;
/// Largest accepted deviation of the effective Gram matrix from `S M Sigma`.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Leading `NL + 1` columns of the S-point DFT matrix: `[V]_{s,n} = w^{n s}`,
/// `w = exp(-j 2 pi / S)` (zero-based indices).
pub fn build_training_matrix(s: usize, n: usize, l: usize) -> Result<CMat> {
    if s == 0 {
        return Err(Error::InvalidSize("S must be at least 1".into()));
    }
    let cols = n * l + 1;
    Ok(CMat::from_fn(s, cols, |row, col| {
        // Reduce the exponent first so equal powers give bit-identical entries.
        let e = (row * col) % s;
        if e == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, -2.0 * PI * e as f64 / s as f64)
        }
    }))
}

/// Block-diagonal `diag(sqrt(M) I_M, h_{1,1,1}, ..., h_{1,L,N})`, stored by blocks.
#[derive(Clone, Debug)]
pub struct H1Bar {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    /// BS-IRS columns in stacking order (IRS outer, element inner).
    pub columns: Vec<CVec>,
    /// LoS path loss per IRS, read off the entry moduli.
    pub beta_1: Vec<f64>,
}

impl H1Bar {
    pub fn new(h_1: &[CMat], m: usize) -> Result<Self> {
        let first = h_1.first().ok_or_else(|| Error::InvalidSize("no IRS".into()))?;
        let n = first.ncols();
        let mut columns = Vec::with_capacity(n * h_1.len());
        let mut beta_1 = Vec::with_capacity(h_1.len());
        for (l, h) in h_1.iter().enumerate() {
            if h.nrows() != m || h.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "H_1[{l}] is {}x{}, expected {m}x{n}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            let beta = h[(0, 0)].norm_sqr();
            if !(beta > 0.0) {
                return Err(Error::InvalidLos(format!("H_1[{l}] has a zero entry")));
            }
            if h.iter().any(|z| (z.norm_sqr() - beta).abs() > 1e-9 * beta) {
                return Err(Error::InvalidLos(format!("H_1[{l}] entries do not share one modulus")));
            }
            beta_1.push(beta);
            columns.extend(h.column_iter().map(|c| c.into_owned()));
        }
        Ok(H1Bar {
            m,
            n,
            l: h_1.len(),
            columns,
            beta_1,
        })
    }

    /// Diagonal of `Sigma = diag(I_M, beta_{1,1} I_N, ..., beta_{1,L} I_N)`.
    pub fn sigma_diag(&self) -> Vec<f64> {
        let mut d = vec![1.0; self.m];
        for &b in &self.beta_1 {
            d.extend(std::iter::repeat_n(b, self.n));
        }
        d
    }

    /// Dense `M(NL+1) x (NL+M)` matrix.
    pub fn to_dense(&self) -> CMat {
        let nl = self.columns.len();
        let m = self.m;
        let mut out = CMat::zeros(m * (nl + 1), nl + m);
        let root_m = C64::new((m as f64).sqrt(), 0.0);
        for i in 0..m {
            out[(i, i)] = root_m;
        }
        for (j, h) in self.columns.iter().enumerate() {
            out.view_mut((m * (j + 1), m + j), (m, 1)).copy_from(h);
        }
        out
    }
}

/// Dense `(H1_bar, Sigma)` pair.
pub fn build_h1bar(h_1: &[CMat], m: usize) -> Result<(CMat, CMat)> {
    let bar = H1Bar::new(h_1, m)?;
    let sigma = CMat::from_diagonal(&CVec::from_iterator(
        bar.m + bar.columns.len(),
        bar.sigma_diag().into_iter().map(|v| C64::new(v, 0.0)),
    ));
    Ok((bar.to_dense(), sigma))
}

/// Rank and orthogonality of the effective training matrix `(V_tr kron I_M) H1_bar`.
#[derive(Clone, Debug, PartialEq)]
pub struct Identifiability {
    /// Numerical rank of the column-normalised Gram matrix.
    pub rank: usize,
    pub dim: usize,
    /// `||D G D - I||_F / ||I||_F` with `D = (S M Sigma)^{-1/2}`.
    pub structure_residual: f64,
}

impl Identifiability {
    pub fn full_rank(&self) -> bool {
        self.rank == self.dim
    }
}

/// Training matrix, per-IRS phase vectors and the known LoS structure.
#[derive(Clone, Debug)]
pub struct TrainingDesign {
    pub s: usize,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    /// `S x (NL+1)`.
    pub v_tr: CMat,
    pub h1bar: H1Bar,
    identifiability: Identifiability,
    plans: DftPlans,
}

/// Length-S transforms: the forward one maps code-domain unknowns to
/// sub-phases (`V_tr x`), the inverse one applies `V_tr^H`.
#[derive(Clone)]
struct DftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl DftPlans {
    fn new(s: usize) -> Self {
        let mut planner = FftPlanner::new();
        DftPlans {
            forward: planner.plan_fft_forward(s),
            inverse: planner.plan_fft_inverse(s),
        }
    }
}

impl fmt::Debug for DftPlans {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DftPlans({})", self.forward.len())
    }
}

impl TrainingDesign {
    pub fn new(s: usize, h_1: &[CMat]) -> Result<Self> {
        let first = h_1.first().ok_or_else(|| Error::InvalidSize("no IRS".into()))?;
        let (m, n, l) = (first.nrows(), first.ncols(), h_1.len());
        let v_tr = build_training_matrix(s, n, l)?;
        let h1bar = H1Bar::new(h_1, m)?;
        let mut design = TrainingDesign {
            s,
            m,
            n,
            l,
            v_tr,
            h1bar,
            identifiability: Identifiability {
                rank: 0,
                dim: 0,
                structure_residual: f64::NAN,
            },
            plans: DftPlans::new(s),
        };
        design.identifiability = design.assess();
        Ok(design)
    }

    pub fn identifiability(&self) -> &Identifiability {
        &self.identifiability
    }

    /// Fails unless the structured pseudo-inverse is exact for this design.
    pub fn ensure_identifiable(&self) -> Result<()> {
        let id = &self.identifiability;
        if !id.full_rank() {
            return Err(Error::RankDeficient {
                rank: id.rank,
                dim: id.dim,
                s: self.s,
                full_rank_s: self.n * self.l + 1,
            });
        }
        if id.structure_residual > STRUCTURE_TOL {
            return Err(Error::NonOrthogonalDesign(id.structure_residual));
        }
        Ok(())
    }

    /// Phase vector of IRS `l` in sub-phase `s` (the diagonal of `Theta_{l,s}`).
    pub fn v_ls(&self, l: usize, s: usize) -> CVec {
        let start = 1 + l * self.n;
        CVec::from_iterator(self.n, self.v_tr.view((s, start), (1, self.n)).iter().copied())
    }

    /// `zeta = (NL+1) / tr(V^H V)`, the common noise scaling of the design.
    pub fn zeta(&self) -> f64 {
        let trace: f64 = self.v_tr.iter().map(|z| z.norm_sqr()).sum();
        self.v_tr.ncols() as f64 / trace
    }

    /// Effective Gram `H1_bar^H (V^H V kron I_M) H1_bar`, assembled block-wise.
    pub fn effective_gram(&self) -> CMat {
        let m = self.m;
        let nl = self.h1bar.columns.len();
        let vhv = self.v_tr.adjoint() * &self.v_tr;
        let mut g = CMat::zeros(nl + m, nl + m);
        let mf = m as f64;
        for p in 0..m {
            g[(p, p)] = vhv[(0, 0)] * mf;
        }
        let root_m = mf.sqrt();
        for (j, hj) in self.h1bar.columns.iter().enumerate() {
            let c = vhv[(0, j + 1)] * root_m;
            for p in 0..m {
                g[(p, m + j)] = c * hj[p];
                g[(m + j, p)] = g[(p, m + j)].conj();
            }
            for (i, hi) in self.h1bar.columns.iter().enumerate() {
                g[(m + i, m + j)] = vhv[(i + 1, j + 1)] * hi.dotc(hj);
            }
        }
        g
    }

    /// Dense effective training matrix `(V_tr kron I_M) H1_bar`, `SM x (NL+M)`.
    pub fn effective_matrix(&self) -> CMat {
        let m = self.m;
        let nl = self.h1bar.columns.len();
        let root_m = (m as f64).sqrt();
        let mut out = CMat::zeros(self.s * m, nl + m);
        for s in 0..self.s {
            for p in 0..m {
                out[(s * m + p, p)] = self.v_tr[(s, 0)] * root_m;
            }
            for (j, h) in self.h1bar.columns.iter().enumerate() {
                let v = self.v_tr[(s, j + 1)];
                for p in 0..m {
                    out[(s * m + p, m + j)] = v * h[p];
                }
            }
        }
        out
    }

    fn assess(&self) -> Identifiability {
        let g = self.effective_gram();
        let dim = g.nrows();
        let sigma = self.h1bar.sigma_diag();
        let target_scale = (self.s * self.m) as f64;
        // Residual measured after whitening by (S M Sigma)^{-1/2}, so the
        // weak reflected blocks count as much as the direct block.
        let mut diff = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let (ti, tj) = (target_scale * sigma[i], target_scale * sigma[j]);
                let t = if i == j { ti } else { 0.0 };
                diff += (g[(i, j)] - t).norm_sqr() / (ti * tj);
            }
        }
        let norm = dim as f64;
        // Column scaling spans many orders of magnitude (sqrt(M) vs sqrt(beta_1)),
        // so rank is judged on the unit-diagonal Gram.
        let d: Vec<f64> = (0..dim).map(|i| g[(i, i)].re.max(f64::MIN_POSITIVE).sqrt().recip()).collect();
        let normalised = CMat::from_fn(dim, dim, |i, j| g[(i, j)] * (d[i] * d[j]));
        let ev = normalised.symmetric_eigenvalues();
        let top = ev.iter().copied().fold(0.0, f64::max);
        let rank = ev.iter().filter(|&&v| v > RANK_TOL * top).count();
        Identifiability {
            rank,
            dim,
            structure_residual: (diff / norm).sqrt(),
        }
    }

    /// Effective noise variance on the direct-channel block.
    pub fn gamma_d(&self, cfg: &SystemConfig) -> f64 {
        cfg.sigma2 / (self.s as f64 * cfg.p_c * cfg.tau_s)
    }

    /// Effective noise variance on the block of IRS `l`.
    pub fn gamma_l(&self, cfg: &SystemConfig, l: usize) -> f64 {
        cfg.sigma2 / (self.h1bar.beta_1[l] * (self.s * self.m) as f64 * cfg.p_c * cfg.tau_s)
    }
}

/// Observations after decorrelation, one entry per user.
#[derive(Clone, Debug)]
pub struct Decorrelated {
    /// `(NL+M)`-vectors.
    pub r_tilde: Vec<CVec>,
    /// Direct-channel block scaled by `sqrt(M)`.
    pub r0: Vec<CVec>,
    /// `[l][k]`.
    pub r_l: Vec<Vec<CVec>>,
    pub gamma_d: f64,
    pub gamma_l: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ObservationSet {
    /// Stacked post-correlation observations, `SM` per user.
    pub r_tr: Vec<CVec>,
    pub decorrelated: Option<Decorrelated>,
}

fn check_dims(ch: &ChannelSet, d: &TrainingDesign) -> Result<()> {
    let ok = ch.h_1.len() == d.l
        && ch.h_2.len() == d.l
        && ch.h_1.iter().all(|h| h.nrows() == d.m && h.ncols() == d.n)
        && ch.h_d.iter().all(|h| h.len() == d.m)
        && ch.h_2.iter().flatten().all(|h| h.len() == d.n);
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch("channel set does not match training design".into()))
    }
}

/// Noise-free received vector of one user in sub-phase `s`.
fn subphase_signal(ch: &ChannelSet, d: &TrainingDesign, k: usize, s: usize) -> CVec {
    let mut r = ch.h_d[k].clone();
    let mut reflected = CVec::zeros(d.n);
    for l in 0..d.l {
        let base = 1 + l * d.n;
        for n in 0..d.n {
            reflected[n] = d.v_tr[(s, base + n)] * ch.h_2[l][k][n];
        }
        r.gemv(C64::new(1.0, 0.0), &ch.h_1[l], &reflected, C64::new(1.0, 0.0));
    }
    r
}

/// Stacked training observations of every user. Each antenna's sub-phase
/// sequence is `V_tr x` with `x = [h_d, h_{1,l,n} h_{2,l,k}[n], ...]`, evaluated
/// by one length-S FFT (unknown `j` lands on bin `j mod S`).
/// Noise is drawn for every entry even when `sigma2 = 0`, so the random stream
/// does not depend on the noise level.
pub fn synthesize_observations<R: Rng + ?Sized>(
    ch: &ChannelSet,
    d: &TrainingDesign,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<ObservationSet> {
    check_dims(ch, d)?;
    let noise_var = cfg.sigma2 / (cfg.p_c * cfg.tau_s);
    let fft = &d.plans.forward;
    let mut buf = vec![C64::new(0.0, 0.0); d.s];
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let r_tr = (0..ch.users())
        .map(|k| {
            let mut stacked = CVec::zeros(d.s * d.m);
            for p in 0..d.m {
                buf.fill(C64::new(0.0, 0.0));
                buf[0] = ch.h_d[k][p];
                for l in 0..d.l {
                    for n in 0..d.n {
                        buf[(1 + l * d.n + n) % d.s] += ch.h_1[l][(p, n)] * ch.h_2[l][k][n];
                    }
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for (s, v) in buf.iter().enumerate() {
                    stacked[s * d.m + p] = *v;
                }
            }
            for s in 0..d.s {
                let mut rows = stacked.rows_mut(s * d.m, d.m);
                rows += complex_normal_vec(rng, d.m, noise_var);
            }
            stacked
        })
        .collect();
    Ok(ObservationSet {
        r_tr,
        decorrelated: None,
    })
}

/// Apply the structured pseudo-inverse `Sigma^{-1} / (SM) * Vtilde^H` to every
/// user's stacked observation and split the result into channel blocks.
pub fn decorrelate(obs: ObservationSet, d: &TrainingDesign, cfg: &SystemConfig) -> Result<ObservationSet> {
    d.ensure_identifiable()?;
    let (m, n) = (d.m, d.n);
    let nl = d.h1bar.columns.len();
    let sm = (d.s * m) as f64;
    let s_f = d.s as f64;
    let root_m = (m as f64).sqrt();

    let mut r_tilde = Vec::with_capacity(obs.r_tr.len());
    let mut r0 = Vec::with_capacity(obs.r_tr.len());
    let mut r_l: Vec<Vec<CVec>> = vec![Vec::with_capacity(obs.r_tr.len()); d.l];
    let mut buf = vec![C64::new(0.0, 0.0); d.s];
    let mut scratch = vec![C64::new(0.0, 0.0); d.plans.inverse.get_inplace_scratch_len()];
    for r in &obs.r_tr {
        if r.len() != d.s * m {
            return Err(Error::DimensionMismatch(format!("observation of length {} for SM = {}", r.len(), d.s * m)));
        }
        // Per antenna, sum_s conj(V[s, j]) r_s[p] for every code column j.
        let mut code = CMat::zeros(m, d.s);
        for p in 0..m {
            for (s, v) in buf.iter_mut().enumerate() {
                *v = r[s * m + p];
            }
            d.plans.inverse.process_with_scratch(&mut buf, &mut scratch);
            for (s, v) in buf.iter().enumerate() {
                code[(p, s)] = *v;
            }
        }
        let direct = code.column(0).into_owned();
        let irs: Vec<C64> = d.h1bar.columns.iter().enumerate().map(|(j, h)| h.dotc(&code.column(j + 1))).collect();
        let mut full = CVec::zeros(m + nl);
        full.rows_mut(0, m).copy_from(&(&direct * C64::new(root_m / sm, 0.0)));
        for (j, v) in irs.iter().enumerate() {
            full[m + j] = v / (sm * d.h1bar.beta_1[j / n]);
        }
        r0.push(direct / C64::new(s_f, 0.0));
        for (l, blocks) in r_l.iter_mut().enumerate() {
            blocks.push(full.rows(m + l * n, n).into_owned());
        }
        r_tilde.push(full);
    }
    Ok(ObservationSet {
        r_tr: obs.r_tr,
        decorrelated: Some(Decorrelated {
            r_tilde,
            r0,
            r_l,
            gamma_d: d.gamma_d(cfg),
            gamma_l: (0..d.l).map(|l| d.gamma_l(cfg, l)).collect(),
        }),
    })
}

/// Explicit pilot transmission, used to validate the post-correlation model.
pub mod pilots {
    use super::*;

    /// `K` mutually orthogonal pilots of `T_S` symbols with `x^H x = P_C tau_S`
    /// (scaled DFT columns).
    pub fn orthogonal_pilots(k: usize, t_s: usize, p_c: f64, tau_s: f64) -> Result<Vec<CVec>> {
        if t_s < k {
            return Err(Error::InvalidSize(format!("T_S = {t_s} < K = {k}")));
        }
        let amp = (p_c * tau_s / t_s as f64).sqrt();
        Ok((0..k)
            .map(|user| {
                CVec::from_fn(t_s, |t, _| {
                    C64::from_polar(amp, -2.0 * PI * ((user * t) % t_s) as f64 / t_s as f64)
                })
            })
            .collect())
    }

    /// Training observations produced by sending the pilots through
    /// `Y_s = sum_k g_{s,k} x_k^H + N_s` and correlating with each user's pilot.
    pub fn synthesize_with_pilots<R: Rng + ?Sized>(
        ch: &ChannelSet,
        d: &TrainingDesign,
        cfg: &SystemConfig,
        rng: &mut R,
    ) -> Result<ObservationSet> {
        check_dims(ch, d)?;
        let pilots = orthogonal_pilots(ch.users(), cfg.t_s, cfg.p_c, cfg.tau_s)?;
        let energy = cfg.p_c * cfg.tau_s;
        let mut r_tr = vec![CVec::zeros(d.s * d.m); ch.users()];
        for s in 0..d.s {
            let mut y = CMat::zeros(d.m, cfg.t_s);
            for t in 0..cfg.t_s {
                y.set_column(t, &complex_normal_vec(rng, d.m, cfg.sigma2));
            }
            for (k, x) in pilots.iter().enumerate() {
                y += subphase_signal(ch, d, k, s) * x.adjoint();
            }
            for (k, x) in pilots.iter().enumerate() {
                let r = &y * x / C64::new(energy, 0.0);
                r_tr[k].rows_mut(s * d.m, d.m).copy_from(&r);
            }
        }
        Ok(ObservationSet {
            r_tr,
            decorrelated: None,
        })
    }
}
