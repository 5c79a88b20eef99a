//! Wavefront transformation: a diagonal unit-modulus matrix that maps
//! spherical-wavefront steering phases toward plane-wave ones.

use crate::channel::{distance_response, far_steering, ArrayGeometry};
use crate::error::{Result, WtmpError};
use crate::estimation::PathEstimate;
use crate::numerics::{default_pinv_tol, kron, pinv, CMatrix, C64, ONE, ZERO};

/// Diagonal of the transform, one unit-modulus phase per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    pub diag_phases: Vec<C64>,
}

impl TransformMatrix {
    pub fn identity(n_t: usize) -> Self {
        TransformMatrix {
            diag_phases: vec![ONE; n_t],
        }
    }

    pub fn n_t(&self) -> usize {
        self.diag_phases.len()
    }

    /// Scale antenna rows of an `N_t × N_f` channel, i.e. `(I ⊗ 𝓑) vec(H)`.
    pub fn apply(&self, h: &CMatrix) -> CMatrix {
        assert_eq!(h.rows(), self.n_t());
        let mut out = h.clone();
        for (i, &d) in self.diag_phases.iter().enumerate() {
            for z in out.row_mut(i) {
                *z *= d;
            }
        }
        out
    }

    /// Inverse of [`apply`](Self::apply); conjugation since entries are unit modulus.
    pub fn apply_inverse(&self, h: &CMatrix) -> CMatrix {
        self.conj().apply(h)
    }

    /// Blockwise application to a vectorized channel (index `n_f·N_t + m`).
    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n_t();
        assert_eq!(v.len() % n, 0);
        v.iter()
            .enumerate()
            .map(|(k, z)| z * self.diag_phases[k % n])
            .collect()
    }

    pub fn conj(&self) -> Self {
        TransformMatrix {
            diag_phases: self.diag_phases.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Explicit `I_{N_f} ⊗ 𝓑`; for tests and small sizes only.
    pub fn kron_explicit(&self, n_f: usize) -> CMatrix {
        kron(&CMatrix::identity(n_f), &CMatrix::from_diag(&self.diag_phases))
    }

    /// `(antenna index, phase in radians)` rows for inspection.
    pub fn phase_table(&self) -> Vec<(usize, f64)> {
        self.diag_phases.iter().enumerate().map(|(i, z)| (i, z.arg())).collect()
    }
}

/// Normalized plane-wave steering vector of the strongest estimated path.
pub fn build_u1(est: &PathEstimate, geom: &ArrayGeometry) -> Result<Vec<C64>> {
    if est.p_hat == 0 {
        return Err(WtmpError::InvalidConfig("transform needs at least one path".into()));
    }
    let s = 1.0 / (geom.n_t() as f64).sqrt();
    Ok(far_steering(geom, est.theta_hat[0], est.phi_hat[0])
        .into_iter()
        .map(|z| z * s)
        .collect())
}

/// Concentrated diagonal entry `sqrt((N−1)/N)`.
pub fn g_diagonal(n_t: usize) -> f64 {
    ((n_t as f64 - 1.0) / n_t as f64).sqrt()
}

/// Row `n` (0-based) of the nonzero block of G: unit norm, orthogonal to
/// `u1`, with the largest achievable diagonal entry.
///
/// The correction entry sits at index 0, or index 1 for row 0.
pub fn build_g_row(u1: &[C64], n: usize) -> Result<Vec<C64>> {
    let nt = u1.len();
    if nt < 2 || n >= nt {
        return Err(WtmpError::Dimension(format!("row {n} of a {nt}-antenna transform")));
    }
    let c = if n == 0 { 1 } else { 0 };
    if u1[c].norm() == 0.0 {
        return Err(WtmpError::DegenerateU1);
    }
    let ntf = nt as f64;
    let root = (ntf * (ntf - 1.0)).sqrt();
    let eta = u1[n].re;
    let kappa = u1[n].im;
    let x1 = -eta / root;
    let y1 = kappa / root;
    let x2 = g_diagonal(nt);

    let mut g = vec![ZERO; nt];
    g[n] = C64::new(x2, 0.0);
    let off = C64::new(x1, y1);
    for q in 0..nt {
        if q != n && q != c {
            if u1[q].norm() == 0.0 {
                return Err(WtmpError::DegenerateU1);
            }
            g[q] = off / u1[q].conj();
        }
    }
    let m = (ntf - 2.0) * x1 + eta * x2;
    let k = (ntf - 2.0) * y1 - kappa * x2;
    g[c] = -C64::new(m, k) / u1[c].conj();
    Ok(g)
}

fn check_estimate(est: &PathEstimate, n_t: usize) -> Result<()> {
    if est.p_hat == 0 {
        return Err(WtmpError::InvalidConfig("transform needs at least one path".into()));
    }
    if est.r_hat.iter().take(est.p_hat).any(|&r| !(r > 0.0)) {
        return Err(WtmpError::InvalidConfig("estimated distances must be positive".into()));
    }
    if n_t < 2 {
        return Err(WtmpError::InvalidConfig("transform needs at least two antennas".into()));
    }
    Ok(())
}

fn normalize(raw: Vec<C64>) -> Result<TransformMatrix> {
    let mut out = Vec::with_capacity(raw.len());
    for (i, z) in raw.into_iter().enumerate() {
        let m = z.norm();
        if !(m > 0.0) || !m.is_finite() {
            return Err(WtmpError::ZeroTransformEntry { index: i });
        }
        out.push(z / m);
    }
    Ok(TransformMatrix { diag_phases: out })
}

/// Transform from path estimates.
///
/// With 𝒞 kept to its diagonal, `(G + ΣK)·A_r⁻¹·(ΣK)†` is itself diagonal:
/// entry n is `((g_nn + 1)·conj(a_n(r₁)) + Σ_{p≥2} conj(a_n(r_p))) / P`.
pub fn build_transform(est: &PathEstimate, geom: &ArrayGeometry) -> Result<TransformMatrix> {
    let nt = geom.n_t();
    check_estimate(est, nt)?;
    let p = est.p_hat;
    let gnn = g_diagonal(nt);
    let mut acc = vec![ZERO; nt];
    for k in 0..p {
        let a = distance_response(geom, est.theta_hat[k], est.phi_hat[k], est.r_hat[k]);
        let w = if k == 0 { gnn + 1.0 } else { 1.0 };
        for (s, z) in acc.iter_mut().zip(a) {
            *s += z.conj() * w;
        }
    }
    let inv_p = 1.0 / p as f64;
    normalize(acc.into_iter().map(|z| z * inv_p).collect())
}

/// Dense construction of the same transform. Forms ΣK, A_r and G
/// explicitly, takes the pseudo-inverse of ΣK numerically and checks it
/// against `(1/P)[I; …; I]`. Returns the transform and the largest
/// off-diagonal magnitude of the unnormalized product.
pub fn build_transform_dense(est: &PathEstimate, geom: &ArrayGeometry) -> Result<(TransformMatrix, f64)> {
    let nt = geom.n_t();
    check_estimate(est, nt)?;
    let p = est.p_hat;
    let sum_k = CMatrix::from_fn(nt, nt * p, |i, j| if j % nt == i { ONE } else { ZERO });
    let sum_k_pinv = pinv(&sum_k, default_pinv_tol(&sum_k))?;
    let analytic = CMatrix::from_fn(nt * p, nt, |i, j| {
        if i % nt == j {
            C64::new(1.0 / p as f64, 0.0)
        } else {
            ZERO
        }
    });
    let err = (&sum_k_pinv - &analytic).max_abs();
    if err > 1e-10 {
        return Err(WtmpError::Dimension(format!(
            "pseudo-inverse of the stacked identity is off by {err:e}"
        )));
    }

    let mut ar_inv = vec![ZERO; nt * p];
    for k in 0..p {
        let a = distance_response(geom, est.theta_hat[k], est.phi_hat[k], est.r_hat[k]);
        for (i, z) in a.into_iter().enumerate() {
            ar_inv[k * nt + i] = z.conj();
        }
    }
    let ar_inv = CMatrix::from_diag(&ar_inv);

    let u1 = build_u1(est, geom)?;
    let mut g = CMatrix::zeros(nt, nt * p);
    for n in 0..nt {
        // 𝒞 reduced to its diagonal; the full row is only used to read g_nn
        let row = build_g_row(&u1, n)?;
        g[(n, n)] = row[n];
    }
    let b = &(&(&g + &sum_k) * &ar_inv) * &sum_k_pinv;
    let mut off = 0.0f64;
    for i in 0..nt {
        for j in 0..nt {
            if i != j {
                off = off.max(b[(i, j)].norm());
            }
        }
    }
    Ok((normalize(b.diag())?, off))
}
