//! Delay/Doppler sampling intervals and the block time-frequency
//! projection dictionary.
//!
//! For sample time `n_t·T` the dictionary block is
//! `D_{n_t} = [W_1, …, W_{N_s}]`, each `W_s` an `N_f × N_f` matrix of
//! delay-and-Doppler columns. Every `W_s` is unitary, so
//! `D_{n_t} D_{n_t}ᴴ = N_s I` and the full `D_d = [D_1, …, D_{N_s}]` has
//! `D_d D_dᴴ = N_s² I`: the scaled adjoint is the exact pseudo-inverse.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioConfig;
use crate::error::{Result, WtmpError};
use crate::numerics::{pinv, CMatrix, C64, ZERO};

/// Delay grid spacing `1/(N_f Δf)`.
pub fn delay_interval(cfg: &ScenarioConfig) -> f64 {
    1.0 / (cfg.n_f as f64 * cfg.delta_f)
}

/// Doppler grid spacing `f_c / (N_s T (f_c + f_1))`.
pub fn doppler_interval(cfg: &ScenarioConfig, n_s: usize) -> f64 {
    cfg.f_c / (n_s as f64 * cfg.t_sample * (cfg.f_c + cfg.f_1))
}

/// Per-subcarrier Doppler spacing `f_c / (N_s T (f_c + f_n))`, `n` 0-based.
pub fn doppler_interval_exact(cfg: &ScenarioConfig, n_s: usize, n: usize) -> f64 {
    cfg.f_c / (n_s as f64 * cfg.t_sample * (cfg.f_c + cfg.subcarrier(n)))
}

/// Normalized coherence of two delay responses `dtau` apart.
pub fn delay_coherence(cfg: &ScenarioConfig, dtau: f64) -> f64 {
    let s: C64 = (0..cfg.n_f)
        // the common f_1 phase drops out of the magnitude
        .map(|n| C64::from_polar(1.0, 2.0 * PI * (n as f64 * cfg.delta_f * dtau).rem_euclid(1.0)))
        .sum();
    s.norm() / cfg.n_f as f64
}

/// Normalized coherence of two time-domain responses `domega` apart at
/// subcarrier `n`.
pub fn doppler_coherence(cfg: &ScenarioConfig, n_s: usize, domega: f64, n: usize) -> f64 {
    let scale = (cfg.f_c + cfg.subcarrier(n)) / cfg.f_c;
    let s: C64 = (1..=n_s)
        .map(|l| C64::from_polar(1.0, 2.0 * PI * (domega * scale * l as f64 * cfg.t_sample).rem_euclid(1.0)))
        .sum();
    s.norm() / n_s as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfVariant {
    /// `N_s` Doppler blocks per time index.
    #[default]
    Dynamic,
    /// Only the zero-Doppler DFT block.
    Static,
}

#[derive(Debug, Clone)]
pub struct TFDictionary {
    pub f_c: f64,
    pub f_1: f64,
    pub delta_f: f64,
    pub n_f: usize,
    pub t_sample: f64,
    pub n_s: usize,
    pub delta_tau: f64,
    pub delta_omega: f64,
    pub variant: TfVariant,
}

impl TFDictionary {
    pub fn new(cfg: &ScenarioConfig, n_s: usize, variant: TfVariant) -> Result<Self> {
        if n_s == 0 {
            return Err(WtmpError::InvalidConfig("dictionary needs at least one sample".into()));
        }
        Ok(TFDictionary {
            f_c: cfg.f_c,
            f_1: cfg.f_1,
            delta_f: cfg.delta_f,
            n_f: cfg.n_f,
            t_sample: cfg.t_sample,
            n_s,
            delta_tau: delay_interval(cfg),
            delta_omega: doppler_interval(cfg, n_s),
            variant,
        })
    }

    /// Doppler blocks per time index.
    pub fn n_doppler(&self) -> usize {
        match self.variant {
            TfVariant::Dynamic => self.n_s,
            TfVariant::Static => 1,
        }
    }

    /// Coefficients per time index, `N_f · n_doppler`.
    pub fn block_width(&self) -> usize {
        self.n_f * self.n_doppler()
    }

    /// `W_s` at time `n_t·T`; `s` is the 0-based Doppler index.
    ///
    /// Delay phases are referenced to the first subcarrier, which makes
    /// `W_0` exactly the unitary DFT.
    pub fn build_block(&self, s: usize, n_t: usize) -> CMatrix {
        let scale = 1.0 / (self.n_f as f64).sqrt();
        let omega_t = s as f64 * n_t as f64 * self.delta_omega * self.t_sample;
        CMatrix::from_fn(self.n_f, self.n_f, |n, d| {
            let f = self.f_1 + n as f64 * self.delta_f;
            let dop = ((1.0 + f / self.f_c) * omega_t).rem_euclid(1.0);
            // (f − f_1)·d·Δτ = n·d/N_f exactly
            let del = ((n * d) % self.n_f) as f64 / self.n_f as f64;
            C64::from_polar(scale, 2.0 * PI * (dop - del))
        })
    }

    /// `D_{n_t} = [W_0, …]`, column `s·N_f + d`.
    pub fn d_block(&self, n_t: usize) -> CMatrix {
        let nf = self.n_f;
        let mut out = CMatrix::zeros(nf, self.block_width());
        for s in 0..self.n_doppler() {
            let w = self.build_block(s, n_t);
            for i in 0..nf {
                out.row_mut(i)[s * nf..(s + 1) * nf].copy_from_slice(w.row(i));
            }
        }
        out
    }

    /// Coefficients of one sample against its own block: `D_{n_t}ᴴ x / n_doppler`.
    pub fn project_block(&self, x: &[C64], n_t: usize) -> Vec<C64> {
        let inv = 1.0 / self.n_doppler() as f64;
        self.d_block(n_t).adjoint_matvec(x).into_iter().map(|z| z * inv).collect()
    }

    pub fn reconstruct_block(&self, coeffs: &[C64], n_t: usize) -> Vec<C64> {
        self.d_block(n_t).matvec(coeffs)
    }

    /// Coefficients against the whole `D_d`, via the scaled adjoint
    /// `D_dᴴ / (N_s · n_doppler)`. Blocks are generated lazily.
    pub fn project_tf(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n_f);
        let inv = 1.0 / (self.n_s * self.n_doppler()) as f64;
        let mut out = Vec::with_capacity(self.n_f * self.n_s * self.n_doppler());
        for n_t in 1..=self.n_s {
            out.extend(self.d_block(n_t).adjoint_matvec(x).into_iter().map(|z| z * inv));
        }
        out
    }

    /// `D_d c`, lazily.
    pub fn reconstruct_tf(&self, coeffs: &[C64]) -> Vec<C64> {
        let w = self.block_width();
        assert_eq!(coeffs.len(), w * self.n_s);
        let mut out = vec![ZERO; self.n_f];
        for n_t in 1..=self.n_s {
            let part = self.d_block(n_t).matvec(&coeffs[(n_t - 1) * w..n_t * w]);
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        out
    }

    /// Dense `D_d`, refused above `cap` entries.
    pub fn materialize(&self, cap: usize) -> Result<CMatrix> {
        let cols = self.block_width() * self.n_s;
        if self.n_f * cols > cap {
            return Err(WtmpError::DictionaryTooLarge {
                atoms: cols,
                rows: self.n_f,
                cap,
            });
        }
        let mut out = CMatrix::zeros(self.n_f, cols);
        let w = self.block_width();
        for n_t in 1..=self.n_s {
            let b = self.d_block(n_t);
            for i in 0..self.n_f {
                out.row_mut(i)[(n_t - 1) * w..n_t * w].copy_from_slice(b.row(i));
            }
        }
        Ok(out)
    }

    /// SVD-based pseudo-inverse of the dense `D_d`, for comparison with the
    /// scaled adjoint.
    pub fn pinv_dense(&self, cap: usize) -> Result<CMatrix> {
        let d = self.materialize(cap)?;
        pinv(&d, 1e-12)
    }
}
