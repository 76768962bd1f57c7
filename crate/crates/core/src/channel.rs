//! Channel realizations: correlated Rayleigh user links and LoS BS-IRS matrices.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_asymmetry, standard_complex_normal, to_complex, CMat, CVec, C64, HERMITIAN_TOL};
use crate::sysconfig::{pathloss_los, Geometry, PathLossSet, SystemConfig};

/// Eigenvalues above this negative floor are treated as round-off and clipped.
pub const PSD_TOL: f64 = 1e-12;

/// `[R]_{ij} = eta^|i-j|`.
pub fn exp_correlation(n: usize, eta: f64) -> Result<CMat> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidCoefficient(eta));
    }
    let r = DMatrix::from_fn(n, n, |i, j| eta.powi(i.abs_diff(j) as i32));
    Ok(to_complex(&r))
}

/// Principal square root of a Hermitian PSD matrix via its eigen-decomposition.
pub fn matrix_sqrt(r: &CMat) -> Result<CMat> {
    if !r.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", r.nrows(), r.ncols())));
    }
    let asym = hermitian_asymmetry(r);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    let eig = r.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    let q = &eig.eigenvectors;
    let roots = eig.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0));
    let mut scaled = q.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    let s = &scaled * q.adjoint();
    // Symmetrise to remove round-off asymmetry.
    Ok((&s + s.adjoint()) * C64::new(0.5, 0.0))
}

/// `sqrt(beta) * R^{1/2} z` with `z ~ CN(0, I)`.
pub fn sample_correlated_rayleigh<R: Rng + ?Sized>(beta: f64, r_sqrt: &CMat, rng: &mut R) -> CVec {
    let z = CVec::from_fn(r_sqrt.ncols(), |_, _| standard_complex_normal(rng));
    r_sqrt * z * C64::new(beta.sqrt(), 0.0)
}

/// Spatial correlation of every fading link, with precomputed square roots.
#[derive(Clone, Debug)]
pub struct CorrelationModel {
    /// `[k]`, M x M.
    pub r_bs: Vec<CMat>,
    pub r_bs_sqrt: Vec<CMat>,
    /// `[l][k]`, N x N.
    pub r_irs: Vec<Vec<CMat>>,
    pub r_irs_sqrt: Vec<Vec<CMat>>,
}

impl CorrelationModel {
    /// Exponential model with one coefficient at the BS and one at every IRS.
    pub fn exponential(cfg: &SystemConfig) -> Result<Self> {
        let r_bs = exp_correlation(cfg.m, cfg.eta_bs)?;
        let r_bs_sqrt = matrix_sqrt(&r_bs)?;
        let r_irs = exp_correlation(cfg.n, cfg.eta_irs)?;
        let r_irs_sqrt = matrix_sqrt(&r_irs)?;
        Ok(CorrelationModel {
            r_bs: vec![r_bs; cfg.k],
            r_bs_sqrt: vec![r_bs_sqrt; cfg.k],
            r_irs: vec![vec![r_irs; cfg.k]; cfg.l],
            r_irs_sqrt: vec![vec![r_irs_sqrt; cfg.k]; cfg.l],
        })
    }
}

/// LoS channel from the BS to IRS `l` under the far-field ULA model: both
/// arrays lie along the x axis, elevation is zero, and a single bearing per
/// (BS, IRS) pair applies to every antenna/element, so the matrix is rank one.
pub fn build_los_matrix(cfg: &SystemConfig, geo: &Geometry, l: usize) -> Result<CMat> {
    let d = geo.d_bs_irs[l];
    let beta_1 = pathloss_los(d)?;
    let amp = beta_1.sqrt();
    let cos_aod = geo.aod_azimuth[l].cos();
    let cos_aoa = geo.aoa_azimuth[l].cos();
    let lambda = cfg.lambda_c;
    Ok(CMat::from_fn(cfg.m, cfg.n, |m, n| {
        let d_mn = d - n as f64 * cfg.delta_irs * lambda * cos_aoa - m as f64 * cfg.delta_bs * lambda * cos_aod;
        C64::from_polar(amp, -2.0 * PI * d_mn / lambda)
    }))
}

/// Deterministic parts of the channel model shared across realizations.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub pathloss: PathLossSet,
    pub correlation: CorrelationModel,
    /// `[l]`, M x N.
    pub h_1: Arc<[CMat]>,
}

impl ChannelModel {
    pub fn new(cfg: &SystemConfig, geo: &Geometry, pathloss: PathLossSet) -> Result<Self> {
        let h_1 = (0..cfg.l).map(|l| build_los_matrix(cfg, geo, l)).collect::<Result<Vec<_>>>()?;
        Ok(ChannelModel {
            pathloss,
            correlation: CorrelationModel::exponential(cfg)?,
            h_1: h_1.into(),
        })
    }

    /// One realization. Draw order: every direct link (k = 0..K), then every
    /// IRS-user link (l outer, k inner).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelSet {
        let h_d = self
            .pathloss
            .beta_d
            .iter()
            .zip(&self.correlation.r_bs_sqrt)
            .map(|(&b, r)| sample_correlated_rayleigh(b, r, rng))
            .collect();
        let h_2 = self
            .pathloss
            .beta_2
            .iter()
            .zip(&self.correlation.r_irs_sqrt)
            .map(|(betas, roots)| {
                betas
                    .iter()
                    .zip(roots)
                    .map(|(&b, r)| sample_correlated_rayleigh(b, r, rng))
                    .collect()
            })
            .collect();
        ChannelSet {
            h_d,
            h_2,
            h_1: Arc::clone(&self.h_1),
        }
    }
}

/// One realization of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// `[k]`, length M.
    pub h_d: Vec<CVec>,
    /// `[l][k]`, length N.
    pub h_2: Vec<Vec<CVec>>,
    /// `[l]`, M x N.
    pub h_1: Arc<[CMat]>,
}

impl ChannelSet {
    pub fn users(&self) -> usize {
        self.h_d.len()
    }

    /// `[h_{2,1,k}; ...; h_{2,L,k}]`.
    pub fn h_2_concat(&self, k: usize) -> CVec {
        let parts: Vec<&CVec> = self.h_2.iter().map(|per_user| &per_user[k]).collect();
        let len = parts.iter().map(|v| v.len()).sum();
        CVec::from_iterator(len, parts.into_iter().flat_map(|v| v.iter().copied()))
    }

    /// `[H_{1,1}, ..., H_{1,L}]`, column blocks in the same order as [`Self::h_2_concat`].
    pub fn h_1_concat(&self) -> CMat {
        let m = self.h_1[0].nrows();
        let total: usize = self.h_1.iter().map(|h| h.ncols()).sum();
        let mut out = CMat::zeros(m, total);
        let mut col = 0;
        for h in self.h_1.iter() {
            out.columns_mut(col, h.ncols()).copy_from(h);
            col += h.ncols();
        }
        out
    }

    /// Cascaded matrix `H_{1,l} diag(h_{2,l,k})`.
    pub fn cascaded(&self, l: usize, k: usize) -> CMat {
        let mut out = self.h_1[l].clone();
        for (n, mut col) in out.column_iter_mut().enumerate() {
            col *= self.h_2[l][k][n];
        }
        out
    }

    /// Write every link into `dir` as one CSV file per matrix/vector
    /// (`h_d_k{k}.csv`, `h_2_l{l}_k{k}.csv`, `H_1_l{l}.csv`).
    pub fn dump_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let save = |name: String, m: &CMat| -> Result<()> {
            let f = std::fs::File::create(dir.join(name))?;
            write_matrix_csv(std::io::BufWriter::new(f), m)
        };
        for (k, h) in self.h_d.iter().enumerate() {
            save(format!("h_d_k{k}.csv"), &column(h))?;
        }
        for (l, per_user) in self.h_2.iter().enumerate() {
            for (k, h) in per_user.iter().enumerate() {
                save(format!("h_2_l{l}_k{k}.csv"), &column(h))?;
            }
        }
        for (l, h) in self.h_1.iter().enumerate() {
            save(format!("H_1_l{l}.csv"), h)?;
        }
        Ok(())
    }
}

fn column(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

/// One matrix row per CSV record, each entry written as `re,im`. No header.
pub fn write_matrix_csv<W: Write>(w: W, m: &CMat) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)]).collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Inverse of [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(r: R) -> Result<CMat> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() % 2 != 0 {
            return Err(Error::DimensionMismatch("odd number of re/im fields".into()));
        }
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect());
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(CMat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
