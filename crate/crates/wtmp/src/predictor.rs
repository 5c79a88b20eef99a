//! Angular-time-frequency projection, matrix-pencil Doppler estimation and
//! extrapolation, and channel reconstruction.
//!
//! Pencil bookkeeping: a support index `n` pairs an angular bin `a` with a
//! column `j` of the time-frequency block. Its per-subcarrier series is
//! `conj(D_k[n_f, j]) · y_a(k, n_f) / n_doppler`, where `y_a(k, n_f)` is the
//! angular-domain channel at sample `k`. The prefactor is a known
//! unit-modulus exponential in `k`, and the pencil (SVD, eigenvalues,
//! Vandermonde refit) is equivariant under such scalings, so extrapolating
//! `y_a(·, n_f)` once and re-applying the factor at the target time gives the
//! same prediction as running one pencil per `(n, n_f)`. The predictor does
//! the former; [`predict_constituent`] keeps the literal form for tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSnapshot;
use crate::error::{Result, WtmpError};
use crate::numerics::{dft_matrix, eig_general, pinv, pinv_rank, CMatrix, C64, ONE, ZERO};
use crate::tfproj::TFDictionary;
use crate::transform::TransformMatrix;

/// Relative singular-value cutoff for pencil rank decisions.
pub const PENCIL_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PencilVariant {
    #[default]
    Standard,
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PencilConfig {
    /// Pencil size; `None` picks floor(N_s/2) clamped into the admissible range.
    #[serde(default)]
    pub pencil_size: Option<usize>,
    pub n_predict: usize,
    #[serde(default)]
    pub variant: PencilVariant,
}

/// Admissible pencil sizes `(lo, hi)` inclusive for `n_s` samples and model order `p`.
///
/// Standard: `p < Q < N_s − p + 1`. Difference: additionally `Q < N_s − p`.
pub fn pencil_range(n_s: usize, p: usize, variant: PencilVariant) -> Option<(usize, usize)> {
    let lo = p + 1;
    let hi = match variant {
        PencilVariant::Standard => n_s.checked_sub(p)?,
        PencilVariant::Difference => n_s.checked_sub(p + 1)?,
    };
    (lo <= hi).then_some((lo, hi))
}

/// Largest model order that leaves at least one admissible pencil size.
pub fn max_model_order(n_s: usize, variant: PencilVariant) -> usize {
    (0..n_s).rev().find(|&p| pencil_range(n_s, p, variant).is_some()).unwrap_or(0)
}

fn check_bounds(n_s: usize, q: usize, p: usize, variant: PencilVariant) -> Result<()> {
    let ok = pencil_range(n_s, p, variant).is_some_and(|(lo, hi)| (lo..=hi).contains(&q));
    if ok {
        Ok(())
    } else {
        let hi = match variant {
            PencilVariant::Standard => n_s + 1 - p.min(n_s),
            PencilVariant::Difference => n_s.saturating_sub(p),
        };
        Err(WtmpError::PencilBounds { q, lo: p, hi, n_s })
    }
}

/// Resolve the pencil size: explicit value, else floor(N_s/2) clamped.
pub fn resolve_pencil_size(cfg: &PencilConfig, n_s: usize, p: usize) -> Result<usize> {
    match cfg.pencil_size {
        Some(q) => {
            check_bounds(n_s, q, p, cfg.variant)?;
            Ok(q)
        }
        None => {
            let (lo, hi) = pencil_range(n_s, p, cfg.variant).ok_or(WtmpError::PencilBounds {
                q: n_s / 2,
                lo: p,
                hi: n_s.saturating_sub(p),
                n_s,
            })?;
            Ok((n_s / 2).clamp(lo, hi))
        }
    }
}

/// Hankel matrix `q × cols`, entry `(i, l) = series[start + i + l]`.
pub fn hankel(series: &[C64], q: usize, start: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(q, cols, |i, l| series[start + i + l])
}

// Poles from a pencil pair (A, B) ~ (E1 Z R E2', E1 R E2'): the top-r
// eigenvalues of A·pinv_r(B), r = min(p, numerical rank of B).
fn poles_from_pair(a: &CMatrix, b: &CMatrix, p: usize) -> Result<Vec<C64>> {
    let (bp, r) = pinv_rank(b, p, PENCIL_RANK_TOL)?;
    if r == 0 {
        return Err(WtmpError::RankCollapse);
    }
    let mut ev = eig_general(&(a * &bp))?;
    ev.sort_by(|x, y| y.norm().partial_cmp(&x.norm()).unwrap());
    ev.truncate(r);
    Ok(ev)
}

/// Poles `ẑ` of a uniformly sampled series.
pub fn pencil_poles(series: &[C64], q: usize, p: usize, variant: PencilVariant) -> Result<Vec<C64>> {
    let n_s = series.len();
    check_bounds(n_s, q, p, variant)?;
    match variant {
        PencilVariant::Standard => {
            let d1 = hankel(series, q, 0, n_s - q + 1);
            let cols = d1.cols();
            poles_from_pair(&d1.cols_range(1, cols), &d1.cols_range(0, cols - 1), p)
        }
        PencilVariant::Difference => {
            // samples 1..N_s−1 and 2..N_s, each Q × (N_s − Q)
            let l = n_s - q;
            let d1 = hankel(series, q, 0, l);
            let d2 = hankel(series, q, 1, l);
            let dd = &d2 - &d1;
            poles_from_pair(&dd.cols_range(1, l), &dd.cols_range(0, l - 1), p)
        }
    }
}

/// Doppler (Hz) of a pole observed at subcarrier `f_n`.
pub fn pole_to_doppler(z: C64, f_c: f64, f_n: f64, t_sample: f64) -> f64 {
    z.arg() * f_c / (2.0 * std::f64::consts::PI * (f_c + f_n) * t_sample)
}

/// Subcarrier context for Doppler conversion.
#[derive(Debug, Clone, Copy)]
pub struct SeriesContext {
    pub f_c: f64,
    pub f_n: f64,
    pub t_sample: f64,
}

fn dopplers(poles: &[C64], ctx: SeriesContext) -> Vec<f64> {
    let mut w: Vec<f64> = poles.iter().map(|&z| pole_to_doppler(z, ctx.f_c, ctx.f_n, ctx.t_sample)).collect();
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    w
}

/// Standard-pencil Doppler estimates, sorted ascending.
pub fn mp_estimate(series: &[C64], cfg: &PencilConfig, p: usize, ctx: SeriesContext) -> Result<Vec<f64>> {
    let q = resolve_pencil_size(&PencilConfig { variant: PencilVariant::Standard, ..*cfg }, series.len(), p)?;
    Ok(dopplers(&pencil_poles(series, q, p, PencilVariant::Standard)?, ctx))
}

/// Difference-pencil Doppler estimates; blind to constant offsets.
pub fn mp_estimate_difference(series: &[C64], cfg: &PencilConfig, p: usize, ctx: SeriesContext) -> Result<Vec<f64>> {
    let q = resolve_pencil_size(&PencilConfig { variant: PencilVariant::Difference, ..*cfg }, series.len(), p)?;
    Ok(dopplers(&pencil_poles(series, q, p, PencilVariant::Difference)?, ctx))
}

/// `Ê₁`, `q × r`, entry `(i, k) = z_k^i`.
pub fn vandermonde_e1(z: &[C64], q: usize) -> CMatrix {
    CMatrix::from_fn(q, z.len(), |i, k| z[k].powu(i as u32))
}

/// `Ê₂`, `r × cols`, entry `(k, l) = z_k^l`.
pub fn vandermonde_e2(z: &[C64], cols: usize) -> CMatrix {
    CMatrix::from_fn(z.len(), cols, |k, l| z[k].powu(l as u32))
}

/// Repeated one-step shifts `D̂₂ = Ê₁ Ẑ Ê₁† D₁ Ê₂† Ê₂`, each new `D₁` being
/// the previous `D̂₂`. Returns the last entry after every step.
pub fn extrapolate(d1: &CMatrix, zhat: &[C64], e1: &CMatrix, e2: &CMatrix, n_steps: usize) -> Result<Vec<C64>> {
    let left = &(e1 * &CMatrix::from_diag(zhat)) * &pinv(e1, 1e-12)?;
    let right = &pinv(e2, 1e-12)? * e2;
    let (q, l) = d1.shape();
    let mut d = d1.clone();
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        d = &(&left * &d) * &right;
        out.push(d[(q - 1, l - 1)]);
    }
    Ok(out)
}

/// Predict `series` `n_steps` samples past its end. Returns the value at the
/// final step (the last sample itself when `n_steps == 0`).
///
/// Poles are projected onto the unit circle. With the difference variant
/// the constant pole `z = 1` is added before extrapolating, so a constant
/// offset on the series is carried forward.
pub fn predict_series(series: &[C64], q: usize, p: usize, variant: PencilVariant, n_steps: usize) -> Result<C64> {
    let n_s = series.len();
    if n_steps == 0 {
        return Ok(series[n_s - 1]);
    }
    // Poles are pure Doppler phases in this channel model; keeping only
    // their angle stops noisy estimates from growing or decaying over the
    // prediction horizon.
    let mut z: Vec<C64> = pencil_poles(series, q, p, variant)?
        .into_iter()
        .map(|z| if z.norm() > 0.0 { z / z.norm() } else { z })
        .collect();
    if variant == PencilVariant::Difference && z.iter().all(|&x| (x - ONE).norm() > 1e-9) {
        z.push(ONE);
    }
    let l = n_s - q + 1;
    let d1 = hankel(series, q, 0, l);
    let e1 = vandermonde_e1(&z, q);
    let e2 = vandermonde_e2(&z, l);
    let e1p = pinv(&e1, 1e-12)?;
    // With Ê₁†Ê₁ = I the n-fold shift is Ê₁ Ẑⁿ Ê₁† D₁ Ê₂† Ê₂; only its
    // last entry is needed.
    let gram = &e1p * &e1;
    if (&gram - &CMatrix::identity(z.len())).max_abs() > 1e-8 {
        return Ok(*extrapolate(&d1, &z, &e1, &e2, n_steps)?.last().unwrap());
    }
    let c = &(&e1p * &d1) * &pinv(&e2, 1e-12)?;
    let left: Vec<C64> = (0..z.len()).map(|k| e1[(q - 1, k)] * z[k].powu(n_steps as u32)).collect();
    let right: Vec<C64> = (0..z.len()).map(|k| e2[(k, l - 1)]).collect();
    Ok(left
        .iter()
        .enumerate()
        .map(|(k, a)| a * (0..z.len()).map(|j| c[(k, j)] * right[j]).sum::<C64>())
        .sum())
}

/// Predicts the constituent series `conj(D_k[n_f, j]) · y(k) / n_doppler`
/// of support column `j` directly; the reference path for the shared
/// per-angle pencils used by [`predict_channel`].
pub fn predict_constituent(
    y: &[C64],
    tf: &TFDictionary,
    j: usize,
    n_f: usize,
    q: usize,
    p: usize,
    variant: PencilVariant,
    n_steps: usize,
) -> Result<C64> {
    let nb = tf.n_doppler() as f64;
    let series: Vec<C64> = y
        .iter()
        .enumerate()
        .map(|(k, &v)| tf.d_block(k + 1)[(n_f, j)].conj() * v / nb)
        .collect();
    predict_series(&series, q, p, variant, n_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// Support threshold γ₁ in (0, 1].
    pub gamma1: f64,
    pub pencil: PencilConfig,
    /// Overrides the model order handed to every pencil.
    #[serde(default)]
    pub model_order: Option<usize>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            gamma1: 0.99,
            pencil: PencilConfig {
                pencil_size: None,
                n_predict: 8,
                variant: PencilVariant::Standard,
            },
            model_order: None,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma1 <= 1.0) {
            return Err(WtmpError::InvalidConfig(format!("gamma1 = {} must lie in (0, 1]", self.gamma1)));
        }
        Ok(())
    }
}

/// Projected record of one observation window.
#[derive(Debug, Clone)]
pub struct ProjectedSeries {
    /// Angular-domain channel per sample, `N_t × N_f`.
    pub angular: Vec<CMatrix>,
    /// Coefficients per sample, `N_t × (N_f · n_doppler)`; flat index `j·N_t + a`.
    pub coeffs: Vec<CMatrix>,
    /// Selected flat indices, strongest first.
    pub support: Vec<usize>,
    /// Window-aggregated magnitude per flat index.
    pub scores: Vec<f64>,
    pub gamma1: f64,
}

impl ProjectedSeries {
    pub fn support_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.scores.len()];
        for &n in &self.support {
            m[n] = true;
        }
        m
    }
}

/// Angular DFT pair for an `n_h × n_v` array.
#[derive(Debug, Clone)]
pub struct AngularBasis {
    n_h: usize,
    n_v: usize,
    w_h: CMatrix,
    w_v: CMatrix,
}

impl AngularBasis {
    pub fn new(n_h: usize, n_v: usize) -> Self {
        AngularBasis {
            n_h,
            n_v,
            w_h: dft_matrix(n_h),
            w_v: dft_matrix(n_v),
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_h * self.n_v
    }

    // (A ⊗ B) x  ==  A · X · Bᵀ with X the n_h × n_v reshape of x.
    fn apply_kron(&self, a: &CMatrix, b_t: &CMatrix, h: &CMatrix) -> CMatrix {
        let n_f = h.cols();
        let mut out = CMatrix::zeros(self.n_t(), n_f);
        for f in 0..n_f {
            let x = CMatrix::from_fn(self.n_h, self.n_v, |i, j| h[(i * self.n_v + j, f)]);
            let y = &(a * &x) * b_t;
            for i in 0..self.n_h {
                for j in 0..self.n_v {
                    out[(i * self.n_v + j, f)] = y[(i, j)];
                }
            }
        }
        out
    }

    /// `(W_hᴴ ⊗ W_vᴴ)` applied to each subcarrier column.
    pub fn forward(&self, h: &CMatrix) -> CMatrix {
        self.apply_kron(&self.w_h.adjoint(), &self.w_v.conj(), h)
    }

    /// `(W_h ⊗ W_v)` applied to each subcarrier column.
    pub fn inverse(&self, y: &CMatrix) -> CMatrix {
        self.apply_kron(&self.w_h, &self.w_v.transpose(), y)
    }
}

/// Select the smallest strongest-first prefix holding γ₁ of the total
/// magnitude. Ties keep the lower index first.
pub fn select_support(scores: &[f64], gamma1: f64) -> Vec<usize> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let target = gamma1 * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for n in order {
        if scores[n] == 0.0 {
            break;
        }
        acc += scores[n];
        out.push(n);
        if acc >= target {
            break;
        }
    }
    out
}

/// Transform, project every sample on its own time block, and choose the support.
pub fn project(
    samples: &[ChannelSnapshot],
    bn: &TransformMatrix,
    basis: &AngularBasis,
    tf: &TFDictionary,
    gamma1: f64,
) -> Result<ProjectedSeries> {
    if !(gamma1 > 0.0 && gamma1 <= 1.0) {
        return Err(WtmpError::InvalidConfig(format!("gamma1 = {gamma1} must lie in (0, 1]")));
    }
    if samples.is_empty() {
        return Err(WtmpError::InvalidConfig("no samples to project".into()));
    }
    let n_t = basis.n_t();
    for s in samples {
        if s.h.shape() != (n_t, tf.n_f) || bn.n_t() != n_t {
            return Err(WtmpError::Dimension(format!(
                "sample is {:?}, expected ({n_t}, {})",
                s.h.shape(),
                tf.n_f
            )));
        }
    }
    let inv = C64::new(1.0 / tf.n_doppler() as f64, 0.0);
    let (angular, coeffs): (Vec<CMatrix>, Vec<CMatrix>) = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let y = basis.forward(&bn.apply(&s.h));
            let c = (&y * &tf.d_block(k + 1).conj()).scale(inv);
            (y, c)
        })
        .unzip();

    let width = tf.block_width();
    let mut scores = vec![0.0; n_t * width];
    for c in &coeffs {
        for a in 0..n_t {
            for (j, z) in c.row(a).iter().enumerate() {
                scores[j * n_t + a] += z.norm();
            }
        }
    }
    let support = select_support(&scores, gamma1);
    Ok(ProjectedSeries {
        angular,
        coeffs,
        support,
        scores,
        gamma1,
    })
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub snapshot: ChannelSnapshot,
    pub support_size: usize,
    pub model_order: usize,
    pub pencil_size: usize,
    pub warning: Option<String>,
}

/// Full pipeline: predict the channel `n_predict` samples after the last
/// observation. `p_hat` is the estimated path count (the default model order).
pub fn predict_channel(
    samples: &[ChannelSnapshot],
    p_hat: usize,
    bn: &TransformMatrix,
    basis: &AngularBasis,
    tf: &TFDictionary,
    cfg: &PredictorConfig,
) -> Result<Prediction> {
    cfg.validate()?;
    let n_s = samples.len();
    if n_s != tf.n_s {
        return Err(WtmpError::Dimension(format!(
            "{n_s} samples but the dictionary was built for {}",
            tf.n_s
        )));
    }
    let t_next = samples[n_s - 1].t + cfg.pencil.n_predict as f64 * tf.t_sample;
    let n_t = basis.n_t();
    let n_f = tf.n_f;

    let variant = cfg.pencil.variant;
    let requested = cfg.model_order.unwrap_or(p_hat).max(1);
    let p = requested.min(max_model_order(n_s, variant));
    if p == 0 {
        return Err(WtmpError::PencilBounds { q: 0, lo: 0, hi: 0, n_s });
    }
    let q = resolve_pencil_size(&cfg.pencil, n_s, p)?;

    let proj = project(samples, bn, basis, tf, cfg.gamma1)?;
    if proj.support.is_empty() {
        return Ok(Prediction {
            snapshot: ChannelSnapshot {
                h: CMatrix::zeros(n_t, n_f),
                t: t_next,
            },
            support_size: 0,
            model_order: p,
            pencil_size: q,
            warning: Some("empty support: predicted the zero channel".into()),
        });
    }

    let mask = proj.support_mask();
    let rows: Vec<usize> = (0..n_t)
        .filter(|&a| (0..tf.block_width()).any(|j| mask[j * n_t + a]))
        .collect();

    // One pencil per (angle, subcarrier) on the angular series.
    let n_steps = cfg.pencil.n_predict;
    let predicted: Vec<Vec<C64>> = rows
        .par_iter()
        .map(|&a| {
            (0..n_f)
                .map(|f| {
                    let series: Vec<C64> = proj.angular.iter().map(|y| y[(a, f)]).collect();
                    if series.iter().all(|z| *z == ZERO) {
                        return Ok(ZERO);
                    }
                    match predict_series(&series, q, p, variant, n_steps) {
                        Err(WtmpError::RankCollapse) => Ok(ZERO),
                        other => other,
                    }
                })
                .collect::<Result<Vec<C64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // χ̂ at the target block, masked to the support, then back to antennas.
    let k_target = n_s + n_steps;
    let dk = tf.d_block(k_target);
    let inv = 1.0 / tf.n_doppler() as f64;
    let mut y_hat = CMatrix::zeros(n_t, n_f);
    for (&a, yhat_a) in rows.iter().zip(&predicted) {
        let mut chi = dk.adjoint_matvec(yhat_a);
        for (j, c) in chi.iter_mut().enumerate() {
            if mask[j * n_t + a] {
                *c *= inv;
            } else {
                *c = ZERO;
            }
        }
        let back = dk.matvec(&chi);
        y_hat.row_mut(a).copy_from_slice(&back);
    }
    let h = bn.apply_inverse(&basis.inverse(&y_hat));
    Ok(Prediction {
        snapshot: ChannelSnapshot { h, t: t_next },
        support_size: proj.support.len(),
        model_order: p,
        pencil_size: q,
        warning: None,
    })
}
