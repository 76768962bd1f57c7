//! LS and MMSE estimates of the direct and IRS-user channels.

use std::sync::Arc;

use nalgebra::Cholesky;

use crate::channel::CorrelationModel;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_asymmetry, CMat, CVec, C64, HERMITIAN_TOL};
use crate::sysconfig::PathLossSet;
use crate::training::Decorrelated;

/// Linear MMSE filter for `r = h + e`, `h ~ CN(0, beta R)`, `e ~ CN(0, gamma I)`.
///
/// The weights are obtained from a Cholesky solve against `beta R + gamma I`,
/// never an explicit inverse.
#[derive(Clone, Debug)]
pub struct MmseFilter {
    /// `beta R (beta R + gamma I)^{-1}`.
    pub weights: CMat,
    /// Covariance of the estimate.
    pub psi: CMat,
    /// Covariance of the estimation error, `beta R - psi`.
    pub psi_err: CMat,
}

impl MmseFilter {
    pub fn new(beta: f64, r: &CMat, gamma: f64) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::DimensionMismatch("correlation matrix must be square".into()));
        }
        let asym = hermitian_asymmetry(r);
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) || !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("invalid prior/noise level beta = {beta}, gamma = {gamma}")));
        }
        let n = r.nrows();
        let prior = r * C64::new(beta, 0.0);
        let system = &prior + CMat::identity(n, n) * C64::new(gamma, 0.0);
        let chol = Cholesky::new(system).ok_or(Error::SingularFilter)?;
        // x = (beta R + gamma I)^{-1} beta R, so the weights are x^H.
        let x = chol.solve(&prior);
        let psi = &prior * &x;
        let psi = (&psi + psi.adjoint()) * C64::new(0.5, 0.0);
        Ok(MmseFilter {
            weights: x.adjoint(),
            psi_err: &prior - &psi,
            psi,
        })
    }

    pub fn apply(&self, observation: &CVec) -> CVec {
        &self.weights * observation
    }
}

/// An estimate together with its covariance and error covariance.
#[derive(Clone, Debug)]
pub struct MmseEstimate {
    pub estimate: CVec,
    pub psi: CMat,
    pub psi_err: CMat,
}

fn estimate_with(filter: MmseFilter, obs: &CVec) -> Result<MmseEstimate> {
    if obs.len() != filter.weights.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} for a {}-dimensional prior",
            obs.len(),
            filter.weights.ncols()
        )));
    }
    Ok(MmseEstimate {
        estimate: filter.apply(obs),
        psi: filter.psi,
        psi_err: filter.psi_err,
    })
}

/// MMSE estimate of a direct channel from its LS observation `r0`.
pub fn mmse_direct(r0: &CVec, beta_d: f64, r_bs: &CMat, gamma_d: f64) -> Result<MmseEstimate> {
    estimate_with(MmseFilter::new(beta_d, r_bs, gamma_d)?, r0)
}

/// MMSE estimate of an IRS-user channel. `gamma_l` already carries the
/// `1 / beta_{1,l}` factor of the LoS link.
pub fn mmse_irs(r_l: &CVec, beta_2: f64, r_irs: &CMat, gamma_l: f64) -> Result<MmseEstimate> {
    estimate_with(MmseFilter::new(beta_2, r_irs, gamma_l)?, r_l)
}

/// LS estimates: the decorrelated blocks themselves.
#[derive(Clone, Debug)]
pub struct LsEstimates {
    pub h_d: Vec<CVec>,
    /// `[l][k]`
    pub h_2: Vec<Vec<CVec>>,
}

pub fn ls_estimates(dec: &Decorrelated) -> LsEstimates {
    LsEstimates {
        h_d: dec.r0.clone(),
        h_2: dec.r_l.clone(),
    }
}

/// MMSE filters for every user and IRS at fixed noise levels, shared read-only
/// across Monte-Carlo trials.
#[derive(Clone, Debug)]
pub struct FilterBank {
    /// `[k]`
    pub direct: Vec<MmseFilter>,
    /// `[l][k]`
    pub irs: Vec<Vec<MmseFilter>>,
}

impl FilterBank {
    pub fn new(pl: &PathLossSet, corr: &CorrelationModel, gamma_d: f64, gamma_l: &[f64]) -> Result<Self> {
        if gamma_l.len() != pl.beta_2.len() {
            return Err(Error::DimensionMismatch(format!("{} noise levels for {} IRSs", gamma_l.len(), pl.beta_2.len())));
        }
        let direct = pl
            .beta_d
            .iter()
            .zip(&corr.r_bs)
            .map(|(&b, r)| MmseFilter::new(b, r, gamma_d))
            .collect::<Result<_>>()?;
        let irs = pl
            .beta_2
            .iter()
            .zip(&corr.r_irs)
            .zip(gamma_l)
            .map(|((betas, rs), &g)| betas.iter().zip(rs).map(|(&b, r)| MmseFilter::new(b, r, g)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(FilterBank { direct, irs })
    }

    pub fn for_observations(pl: &PathLossSet, corr: &CorrelationModel, dec: &Decorrelated) -> Result<Self> {
        Self::new(pl, corr, dec.gamma_d, &dec.gamma_l)
    }

    /// MMSE estimates `(h_d, h_2[l][k])`.
    pub fn estimate(&self, dec: &Decorrelated) -> (Vec<CVec>, Vec<Vec<CVec>>) {
        let h_d = self.direct.iter().zip(&dec.r0).map(|(f, r)| f.apply(r)).collect();
        let h_2 = self
            .irs
            .iter()
            .zip(&dec.r_l)
            .map(|(fs, rs)| fs.iter().zip(rs).map(|(f, r)| f.apply(r)).collect())
            .collect();
        (h_d, h_2)
    }
}

/// LS and MMSE estimates of one realization plus the filter covariances.
#[derive(Clone, Debug)]
pub struct EstimateSet {
    pub h_d_ls: Vec<CVec>,
    pub h_d_mmse: Vec<CVec>,
    pub h_2_ls: Vec<Vec<CVec>>,
    pub h_2_mmse: Vec<Vec<CVec>>,
    pub filters: Arc<FilterBank>,
}

impl EstimateSet {
    pub fn new(dec: &Decorrelated, filters: Arc<FilterBank>) -> Self {
        let ls = ls_estimates(dec);
        let (h_d_mmse, h_2_mmse) = filters.estimate(dec);
        EstimateSet {
            h_d_ls: ls.h_d,
            h_d_mmse,
            h_2_ls: ls.h_2,
            h_2_mmse,
            filters,
        }
    }

    pub fn psi_d(&self, k: usize) -> &CMat {
        &self.filters.direct[k].psi
    }

    pub fn psi_d_err(&self, k: usize) -> &CMat {
        &self.filters.direct[k].psi_err
    }

    pub fn psi_2(&self, l: usize, k: usize) -> &CMat {
        &self.filters.irs[l][k].psi
    }

    pub fn psi_2_err(&self, l: usize, k: usize) -> &CMat {
        &self.filters.irs[l][k].psi_err
    }
}

/// `[H_{1,1} diag(h_{2,1}), ..., H_{1,L} diag(h_{2,L})]` for one user.
pub fn cascaded_estimate(h_2_hat: &[CVec], h_1: &[CMat]) -> Result<CMat> {
    if h_2_hat.len() != h_1.len() || h_1.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} IRS estimates for {} LoS blocks", h_2_hat.len(), h_1.len())));
    }
    let m = h_1[0].nrows();
    let total: usize = h_1.iter().map(|h| h.ncols()).sum();
    let mut out = CMat::zeros(m, total);
    let mut offset = 0;
    for (h2, h1) in h_2_hat.iter().zip(h_1) {
        if h1.nrows() != m || h1.ncols() != h2.len() {
            return Err(Error::DimensionMismatch("LoS block does not match estimate length".into()));
        }
        for (n, col) in h1.column_iter().enumerate() {
            out.column_mut(offset + n).copy_from(&(col * h2[n]));
        }
        offset += h1.ncols();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{exp_correlation, matrix_sqrt, sample_correlated_rayleigh};
    use crate::linalg::{complex_normal_vec, hermitian_eigenvalues, rel_diff_mat, rel_diff_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn white_prior_halves_observation() {
        let r = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-3.0, 0.5), C64::new(0.0, -1.0)]);
        let id = CMat::identity(3, 3);
        let est = mmse_direct(&r, 1.0, &id, 1.0).unwrap();
        assert!(rel_diff_vec(&est.estimate, &(&r * c(0.5))) < 1e-15);
        let est = mmse_irs(&r, 2.5e-11, &id, 2.5e-11).unwrap();
        assert!(rel_diff_vec(&est.estimate, &(&r * c(0.5))) < 1e-12);
    }

    #[test]
    fn noiseless_limit_and_zero_prior() {
        let r0 = CVec::from_vec(vec![C64::new(0.3, -0.1), C64::new(0.2, 0.7)]);
        let id = CMat::identity(2, 2);
        let est = mmse_direct(&r0, 1.0, &id, 1e-20).unwrap();
        assert!(rel_diff_vec(&est.estimate, &r0) < 1e-8);
        let est = mmse_irs(&r0, 0.0, &id, 1e-3).unwrap();
        assert!(est.estimate.iter().all(|z| *z == c(0.0)));
        assert!(matches!(MmseFilter::new(0.0, &id, 0.0), Err(Error::SingularFilter)));
    }

    #[test]
    fn white_prior_filter_is_scaled_identity() {
        let f = MmseFilter::new(3.0, &CMat::identity(4, 4), 1.0).unwrap();
        assert!(rel_diff_mat(&f.weights, &(CMat::identity(4, 4) * c(0.75))) < 1e-15);
    }

    #[test]
    fn error_covariance_is_psd() {
        for eta in [0.0, 0.5, 0.95] {
            let r = exp_correlation(16, eta).unwrap();
            for gamma in [1e-6, 1e-2, 1.0, 1e3] {
                let f = MmseFilter::new(1.0, &r, gamma).unwrap();
                assert!(hermitian_eigenvalues(&f.psi_err)[0] > -1e-10);
                assert!(hermitian_eigenvalues(&f.psi)[0] > -1e-10);
            }
        }
    }

    #[test]
    fn matches_generic_gaussian_bayes_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, eta, beta, gamma) in [(8, 0.95, 6e-9, 1e-9), (32, 0.95, 1e-10, 4e-11), (5, 0.3, 1.0, 0.2)] {
            let r = exp_correlation(n, eta).unwrap();
            // E[h r^H] = beta R and E[r r^H] = beta R + gamma I, inverted generically.
            let c_hr = &r * c(beta);
            let c_rr = &c_hr + CMat::identity(n, n) * c(gamma);
            let w = &c_hr * c_rr.clone().try_inverse().unwrap();
            let obs = complex_normal_vec(&mut rng, n, beta + gamma);
            let est = mmse_irs(&obs, beta, &r, gamma).unwrap();
            assert!(rel_diff_vec(&est.estimate, &(&w * &obs)) < 1e-9);
            let psi = &w * c_hr.adjoint();
            assert!(rel_diff_mat(&est.psi, &psi) < 1e-9);
        }
    }

    /// Monte-Carlo checks of estimate covariance, orthogonality and error covariance.
    #[test]
    fn monte_carlo_second_order_statistics() {
        let n = 4;
        let (beta, gamma) = (2.0, 0.7);
        let r = exp_correlation(n, 0.7).unwrap();
        let root = matrix_sqrt(&r).unwrap();
        let f = MmseFilter::new(beta, &r, gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 10_000;
        let mut est_cov = CMat::zeros(n, n);
        let mut cross = CMat::zeros(n, n);
        let mut err_cov = CMat::zeros(n, n);
        let (mut ls_err, mut mmse_err) = (0.0, 0.0);
        for _ in 0..trials {
            let h = sample_correlated_rayleigh(beta, &root, &mut rng);
            let obs = &h + complex_normal_vec(&mut rng, n, gamma);
            let est = f.apply(&obs);
            let e = &est - &h;
            est_cov += &est * est.adjoint();
            cross += &e * est.adjoint();
            err_cov += &e * e.adjoint();
            ls_err += (&obs - &h).norm_squared();
            mmse_err += e.norm_squared();
        }
        let t = c(trials as f64);
        assert!(rel_diff_mat(&(est_cov / t), &f.psi) < 0.05);
        assert!((cross / t).norm() < 0.05 * f.psi.norm());
        assert!(rel_diff_mat(&(err_cov / t), &f.psi_err) < 0.05);
        assert!(mmse_err < ls_err);
    }

    #[test]
    fn cascaded_estimate_structure() {
        let h1 = vec![
            CMat::from_fn(3, 2, |i, j| C64::from_polar(0.1, (i + 2 * j) as f64)),
            CMat::from_fn(3, 2, |i, j| C64::from_polar(0.2, (i * j) as f64)),
        ];
        let h2 = vec![
            CVec::from_vec(vec![C64::new(1.0, 1.0), C64::new(0.0, -2.0)]),
            CVec::from_vec(vec![C64::new(0.5, 0.0), C64::new(-1.0, 0.25)]),
        ];
        let cas = cascaded_estimate(&h2, &h1).unwrap();
        assert_eq!((cas.nrows(), cas.ncols()), (3, 4));
        for l in 0..2 {
            let want = &h1[l] * CMat::from_diagonal(&h2[l]);
            assert!(rel_diff_mat(&cas.columns(2 * l, 2).into_owned(), &want) < 1e-15);
            for n in 0..2 {
                assert_eq!(cas.column(2 * l + n), h1[l].column(n) * h2[l][n]);
            }
        }
        let zeros = vec![CVec::zeros(2), CVec::zeros(2)];
        assert!(cascaded_estimate(&zeros, &h1).unwrap().iter().all(|z| *z == c(0.0)));
        assert!(matches!(cascaded_estimate(&zeros[..1], &h1), Err(Error::DimensionMismatch(_))));
    }
}
