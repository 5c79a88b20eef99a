//! Metrics: prediction error, transform NMSE, EZF precoding and spectral
//! efficiency, plus the seed statistics used to compare methods.

use serde::{Deserialize, Serialize};

use crate::channel::{synthesize_port, ArrayGeometry, ChannelSnapshot, DistanceModel, PathParams, ScenarioConfig};
use crate::error::{Result, WtmpError};
use crate::numerics::{solve, svd, CMatrix, C64};
use crate::transform::TransformMatrix;

/// Floor applied to dB values of a zero error.
pub const ERROR_FLOOR_DB: f64 = -200.0;

pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(ERROR_FLOOR_DB)
    } else {
        ERROR_FLOOR_DB
    }
}

/// `‖Ĥ − H‖²_F / ‖H‖²_F`.
pub fn relative_error(h_hat: &CMatrix, h: &CMatrix) -> Result<f64> {
    if h_hat.shape() != h.shape() {
        return Err(WtmpError::Dimension(format!("{:?} vs {:?}", h_hat.shape(), h.shape())));
    }
    let den = h.frobenius_norm().powi(2);
    if den == 0.0 {
        return Err(WtmpError::InvalidConfig("reference channel is zero".into()));
    }
    Ok((h_hat - h).frobenius_norm().powi(2) / den)
}

/// 10·log10 of the mean relative error over `(prediction, truth)` pairs.
pub fn prediction_error_db(pairs: &[(&CMatrix, &CMatrix)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(WtmpError::InvalidConfig("no channels to compare".into()));
    }
    let mut acc = 0.0;
    for (a, b) in pairs {
        acc += relative_error(a, b)?;
    }
    Ok(to_db(acc / pairs.len() as f64))
}

/// `(with, without)`: `‖𝓑H − H_plane‖²/‖H_plane‖²` and `‖H − H_plane‖²/‖H_plane‖²`.
pub fn transform_nmse(h: &CMatrix, h_plane: &CMatrix, bn: &TransformMatrix) -> Result<(f64, f64)> {
    Ok((relative_error(&bn.apply(h), h_plane)?, relative_error(h, h_plane)?))
}

/// Near-field channel and its plane-wave counterpart from the same paths.
pub fn near_and_plane(geom: &ArrayGeometry, cfg: &ScenarioConfig, paths: &[PathParams], t: f64) -> (CMatrix, CMatrix) {
    let near = synthesize_port(geom, cfg, paths, t, 0, DistanceModel::Fresnel);
    let far = synthesize_port(geom, cfg, paths, t, 0, DistanceModel::Far);
    (near.h, far.h)
}

/// Stack port snapshots at one subcarrier into a `ports × N_t` matrix.
pub fn port_stack(ports: &[ChannelSnapshot], n_f: usize) -> CMatrix {
    let n_t = ports[0].h.rows();
    CMatrix::from_fn(ports.len(), n_t, |p, m| ports[p].h[(m, n_f)])
}

/// `u₁ᴴH`: the channel seen through the dominant receive direction.
pub fn effective_row(h: &CMatrix) -> Result<Vec<C64>> {
    let d = svd(h)?;
    let u1 = d.u.col(0);
    Ok((0..h.cols())
        .map(|m| (0..h.rows()).map(|i| u1[i].conj() * h[(i, m)]).sum())
        .collect())
}

#[derive(Debug, Clone)]
pub struct Precoder {
    /// `N_t × N_UE`, unit-norm columns.
    pub w: CMatrix,
    /// Set when the effective channel was too ill-conditioned to invert.
    pub regularized: bool,
}

const EZF_COND_LIMIT: f64 = 1e10;

/// EZF from per-UE `ports × N_t` channels.
pub fn ezf_precode(channels: &[CMatrix]) -> Result<Precoder> {
    if channels.is_empty() {
        return Err(WtmpError::InvalidConfig("no UEs to precode".into()));
    }
    let rows = channels.iter().map(effective_row).collect::<Result<Vec<_>>>()?;
    let n_ue = rows.len();
    let n_t = rows[0].len();
    let h_eff = CMatrix::from_fn(n_ue, n_t, |u, m| rows[u][m]);
    let mut gram = &h_eff * &h_eff.adjoint();

    let s = svd(&gram)?.s;
    let smax = s[0];
    let smin = *s.last().unwrap();
    let mut regularized = false;
    if !(smax > 0.0) || smin * EZF_COND_LIMIT < smax {
        let delta = 1e-6 * smax.max(f64::MIN_POSITIVE) + f64::MIN_POSITIVE;
        for i in 0..n_ue {
            gram[(i, i)] += delta;
        }
        regularized = true;
    }
    // W = H_effᴴ · gram⁻¹
    let inv = solve(&gram, &CMatrix::identity(n_ue)).ok_or(WtmpError::RankCollapse)?;
    let raw = &h_eff.adjoint() * &inv;
    let mut w = CMatrix::zeros(n_t, n_ue);
    for v in 0..n_ue {
        let mut col = raw.col(v);
        let norm = crate::numerics::vec_norm(&col);
        if norm > 0.0 {
            for z in col.iter_mut() {
                *z /= norm;
            }
        }
        w.set_col(v, &col);
    }
    Ok(Precoder { w, regularized })
}

/// `Σ_u log2(1 + SINR_u)`, `SINR_u = ρ|h_u w_u|² / (1 + ρ Σ_{v≠u} |h_u w_v|²)`.
///
/// `ρ` is the per-UE transmit SNR after precoding.
pub fn spectral_efficiency(true_rows: &[Vec<C64>], w: &CMatrix, snr_db: f64) -> Result<f64> {
    if true_rows.len() != w.cols() {
        return Err(WtmpError::Dimension(format!(
            "{} UEs but {} precoder columns",
            true_rows.len(),
            w.cols()
        )));
    }
    let rho = 10f64.powf(snr_db / 10.0);
    let mut se = 0.0;
    for (u, h) in true_rows.iter().enumerate() {
        let mut signal = 0.0;
        let mut interference = 0.0;
        for v in 0..w.cols() {
            let g: C64 = h.iter().enumerate().map(|(m, z)| z * w[(m, v)]).sum();
            if u == v {
                signal = g.norm_sqr();
            } else {
                interference += g.norm_sqr();
            }
        }
        se += (1.0 + rho * signal / (1.0 + rho * interference)).log2();
    }
    Ok(se)
}

/// Sample mean and standard error (n−1 variance).
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Paired comparison `a − b` over matched seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedGap {
    pub mean: f64,
    pub stderr: f64,
}

impl PairedGap {
    /// Positive and at least two standard errors from zero.
    pub fn significant(&self) -> bool {
        self.mean > 2.0 * self.stderr
    }

    /// Not distinguishable from zero at two standard errors.
    pub fn indistinct(&self) -> bool {
        self.mean.abs() <= 2.0 * self.stderr
    }
}

pub fn paired_gap(a: &[f64], b: &[f64]) -> PairedGap {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, stderr) = mean_stderr(&d);
    PairedGap { mean, stderr }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    /// `samples[i]` holds one value per seed at axis point `i`.
    pub samples: Vec<Vec<f64>>,
}

impl Series {
    pub fn mean(&self, i: usize) -> f64 {
        mean_stderr(&self.samples[i]).0
    }

    pub fn stderr(&self, i: usize) -> f64 {
        mean_stderr(&self.samples[i]).1
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| self.mean(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub metric: String,
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub seeds: Vec<u64>,
    pub series: Vec<Series>,
}

/// One CSV row: series, axis value, mean, standard error, sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub series: String,
    pub axis: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl ExperimentResult {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for s in &self.series {
            for (i, &x) in self.axis.iter().enumerate() {
                let (mean, stderr) = mean_stderr(&s.samples[i]);
                out.push(SummaryRow {
                    series: s.name.clone(),
                    axis: x,
                    mean,
                    stderr,
                    n: s.samples[i].len(),
                });
            }
        }
        out
    }

    /// Seed-averaged gap `a − b` at axis point `i`.
    pub fn gap(&self, a: &str, b: &str, i: usize) -> Option<PairedGap> {
        Some(paired_gap(&self.series(a)?.samples[i], &self.series(b)?.samples[i]))
    }
}
