//! Dense complex linear algebra.
//!
//! Everything here is small and dense (a few hundred rows at most), so the
//! kernels favour simple, robust algorithms: one-sided Jacobi for the SVD and
//! Hessenberg reduction plus shifted QR for general eigenvalues.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Result, WtmpError};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    /// Checked constructor: length must match and every entry must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(WtmpError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(WtmpError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// Single column matrix.
    pub fn column(v: &[C64]) -> Self {
        CMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &z) in v.iter().enumerate() {
            self[(i, j)] = z;
        }
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Columns `start..end`.
    pub fn cols_range(&self, start: usize, end: usize) -> Self {
        Self::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    /// Rows `start..end`.
    pub fn rows_range(&self, start: usize, end: usize) -> Self {
        CMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ x` without forming the adjoint.
    pub fn adjoint_matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, x.len(), "adjoint matvec shape mismatch");
        let mut out = vec![ZERO; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * xi;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape());
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape());
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `aᴴ b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Thin SVD `m = U diag(s) Vᴴ`, `k = min(rows, cols)` columns in U and V.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

pub fn svd(m: &CMatrix) -> Result<Svd> {
    if m.rows < m.cols {
        let t = svd_tall(&m.adjoint())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(m)
}

// One-sided (Hestenes) Jacobi on the columns of a tall matrix.
fn svd_tall(m: &CMatrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    // Column-major working copies so each column is contiguous.
    let mut a: Vec<Vec<C64>> = (0..n).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            e
        })
        .collect();

    let eps = f64::EPSILON;
    // Columns at roundoff level relative to the whole matrix are left alone;
    // rotating them against each other never settles.
    let negligible = eps * eps * a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>();
    // Orthogonality threshold scaled by the column length; a bare eps lets
    // rounding in the complex rotations keep pairs just above it forever.
    let tol = eps * (rows as f64).max(4.0);
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(WtmpError::NoConvergence {
                routine: "jacobi svd",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        let mut rotated = false;
        // squared column norms, refreshed each sweep and updated per rotation
        let mut nsq: Vec<f64> = a.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = nsq[i];
                let beta = nsq[j];
                let gamma = inner(&a[i], &a[j]);
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let ph = gamma / g;
                rotate_pair(&mut a, i, j, c, s, ph);
                rotate_pair(&mut v, i, j, c, s, ph);
                nsq[i] = (alpha - t * g).max(0.0);
                nsq[j] = (beta + t * g).max(0.0);
            }
        }
        converged = !rotated;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = a.iter().map(|c| vec_norm(c)).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * eps * (rows.max(n) as f64);
    let mut u = CMatrix::zeros(rows, n);
    let mut vv = CMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        vv.set_col(k, &v[j]);
        if sigma > cutoff && sigma > 0.0 {
            let col: Vec<C64> = a[j].iter().map(|z| z / sigma).collect();
            u.set_col(k, &col);
        } else {
            missing.push(k);
        }
    }
    if !missing.is_empty() {
        complete_orthonormal(&mut u, &missing);
    }
    Ok(Svd { u, s, v: vv })
}

fn rotate_pair(cols: &mut [Vec<C64>], i: usize, j: usize, c: f64, s: f64, ph: C64) {
    // [a_i, a_j] <- [a_i, a_j] [[c, s e^{iφ}], [-s e^{-iφ}, c]]
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    let sp = ph * s;
    let sm = ph.conj() * s;
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = xi * c - sm * yj;
        *y = sp * xi + yj * c;
    }
}

// Fill the listed columns of `u` with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut CMatrix, missing: &[usize]) {
    let rows = u.rows();
    let mut basis_idx = 0;
    for &k in missing {
        u.set_col(k, &vec![ZERO; rows]);
        loop {
            assert!(basis_idx < rows, "cannot complete orthonormal basis");
            let mut cand = vec![ZERO; rows];
            cand[basis_idx] = ONE;
            basis_idx += 1;
            // Two Gram-Schmidt passes for stability.
            for _ in 0..2 {
                for j in 0..u.cols() {
                    let cj = u.col(j);
                    let p = inner(&cj, &cand);
                    for (x, y) in cand.iter_mut().zip(&cj) {
                        *x -= p * y;
                    }
                }
            }
            let nrm = vec_norm(&cand);
            if nrm > 1e-6 {
                let col: Vec<C64> = cand.iter().map(|z| z / nrm).collect();
                u.set_col(k, &col);
                break;
            }
        }
    }
}

/// Default relative cutoff for [`pinv`].
pub fn default_pinv_tol(m: &CMatrix) -> f64 {
    m.rows.max(m.cols) as f64 * f64::EPSILON
}

/// Moore-Penrose pseudo-inverse; singular values below `tol * s_max` are dropped.
pub fn pinv(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let d = svd(m)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    let keep = d.s.iter().take_while(|&&s| s > tol * smax && s > 0.0).count();
    Ok(pinv_from_svd(&d, keep, m.shape()))
}

/// Pseudo-inverse truncated to at most `rank` singular triplets (and never
/// past the numerical rank at relative tolerance `tol`).
pub fn pinv_rank(m: &CMatrix, rank: usize, tol: f64) -> Result<(CMatrix, usize)> {
    let d = svd(m)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    let numeric = d.s.iter().take_while(|&&s| s > tol * smax && s > 0.0).count();
    let keep = numeric.min(rank);
    Ok((pinv_from_svd(&d, keep, m.shape()), keep))
}

fn pinv_from_svd(d: &Svd, keep: usize, (rows, cols): (usize, usize)) -> CMatrix {
    let mut out = CMatrix::zeros(cols, rows);
    for k in 0..keep {
        let inv = 1.0 / d.s[k];
        for i in 0..cols {
            let vik = d.v[(i, k)] * inv;
            for j in 0..rows {
                out[(i, j)] += vik * d.u[(j, k)].conj();
            }
        }
    }
    out
}

/// Numerical rank with relative tolerance.
pub fn rank(m: &CMatrix, tol: f64) -> Result<usize> {
    let d = svd(m)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    Ok(d.s.iter().filter(|&&s| s > tol * smax && s > 0.0).count())
}

/// Unitary DFT, entry `(a, b) = exp(-2πi·ab/n)/√n`.
pub fn dft_matrix(n: usize) -> CMatrix {
    assert!(n >= 1);
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |a, b| {
        // reduce the product mod n first to keep the angle small
        let k = (a * b) % n;
        C64::from_polar(scale, -2.0 * std::f64::consts::PI * k as f64 / n as f64)
    })
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = b.shape();
    CMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

const QR_ITERS_PER_EIG: usize = 30;

/// All eigenvalues of a square matrix (unordered).
pub fn eig_general(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.rows;
    if n != m.cols {
        return Err(WtmpError::Dimension(format!(
            "eigenvalues of a non-square {}x{} matrix",
            m.rows, m.cols
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = hessenberg(m);
    let mut eigs = vec![ZERO; n];
    let eps = f64::EPSILON;
    let norm = m.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut hi = n - 1;
    let mut total_iter = 0;
    let mut since_deflation = 0;
    loop {
        // Deflate trailing 1x1 blocks.
        while hi > 0 && small_subdiag(&h, hi, eps, norm) {
            h[(hi, hi - 1)] = ZERO;
            eigs[hi] = h[(hi, hi)];
            hi -= 1;
            since_deflation = 0;
        }
        if hi == 0 {
            eigs[0] = h[(0, 0)];
            break;
        }
        let mut lo = hi - 1;
        while lo > 0 && !small_subdiag(&h, lo, eps, norm) {
            lo -= 1;
        }
        if lo > 0 {
            h[(lo, lo - 1)] = ZERO;
        }

        if total_iter >= QR_ITERS_PER_EIG * n {
            return Err(WtmpError::NoConvergence {
                routine: "hessenberg qr",
                iterations: total_iter,
            });
        }
        total_iter += 1;
        since_deflation += 1;

        let mu = if since_deflation % 11 == 0 {
            // exceptional shift to break cycles
            let sub = h[(hi, hi - 1)].norm() + if hi >= 2 { h[(hi - 1, hi - 2)].norm() } else { 0.0 };
            h[(hi, hi)] + C64::new(0.75 * sub, 0.25 * sub)
        } else {
            wilkinson_shift(&h, hi)
        };
        qr_step(&mut h, lo, hi, mu);
    }
    Ok(eigs)
}

// Relative to the neighbouring diagonal, with an absolute floor of eps·‖H‖
// so clusters of near-zero eigenvalues still deflate.
fn small_subdiag(h: &CMatrix, k: usize, eps: f64, norm: f64) -> bool {
    let s = h[(k, k)].norm() + h[(k - 1, k - 1)].norm();
    h[(k, k - 1)].norm() <= eps * s.max(norm)
}

// Eigenvalue of the trailing 2x2 block closest to the last diagonal entry.
fn wilkinson_shift(h: &CMatrix, hi: usize) -> C64 {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let c = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr * 0.25 - det).sqrt();
    let l1 = tr * 0.5 + disc;
    let l2 = tr * 0.5 - disc;
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

// Explicit single-shift QR sweep on the active window h[lo..=hi, lo..=hi].
// Only eigenvalues are needed, so the rest of the matrix is left untouched.
fn qr_step(h: &mut CMatrix, lo: usize, hi: usize, mu: C64) {
    for k in lo..=hi {
        h[(k, k)] -= mu;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let x = h[(k, k)];
        let y = h[(k + 1, k)];
        let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
        let (c, s) = if r == 0.0 { (ONE, ZERO) } else { (x / r, y / r) };
        for j in k..=hi {
            let a = h[(k, j)];
            let b = h[(k + 1, j)];
            h[(k, j)] = c.conj() * a + s.conj() * b;
            h[(k + 1, j)] = -s * a + c * b;
        }
        rots.push((c, s));
    }
    for (idx, &(c, s)) in rots.iter().enumerate() {
        let k = lo + idx;
        let top = (k + 2).min(hi);
        for i in lo..=top {
            let a = h[(i, k)];
            let b = h[(i, k + 1)];
            h[(i, k)] = a * c + b * s;
            h[(i, k + 1)] = -a * s.conj() + b * c.conj();
        }
    }
    for k in lo..=hi {
        h[(k, k)] += mu;
    }
}

/// Householder reduction to upper Hessenberg form (similarity transform).
pub fn hessenberg(m: &CMatrix) -> CMatrix {
    let n = m.rows;
    let mut a = m.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let xn = vec_norm(&x);
        if xn == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 { ONE } else { x[0] / x[0].norm() };
        let alpha = -phase * xn;
        let mut v = x.clone();
        v[0] -= alpha;
        let vn = vec_norm(&v);
        if vn == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vn;
        }
        // A <- (I - 2vvᴴ) A on rows k+1..n
        for j in 0..n {
            let dot: C64 = (0..v.len()).map(|i| v[i].conj() * a[(k + 1 + i, j)]).sum();
            for i in 0..v.len() {
                a[(k + 1 + i, j)] -= v[i] * dot * 2.0;
            }
        }
        // A <- A (I - 2vvᴴ) on columns k+1..n
        for i in 0..n {
            let dot: C64 = (0..v.len()).map(|j| a[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..v.len() {
                a[(i, k + 1 + j)] -= dot * v[j].conj() * 2.0;
            }
        }
    }
    a
}

/// Solve the square system `m x = b` by Gaussian elimination with partial
/// pivoting. Returns None when a pivot vanishes.
pub fn solve(m: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    let n = m.rows;
    assert_eq!(n, m.cols);
    assert_eq!(n, b.rows);
    let mut a = m.clone();
    let mut x = b.clone();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[(i, k)].norm().partial_cmp(&a[(j, k)].norm()).unwrap())
            .unwrap();
        if a[(p, k)].norm() <= 1e-14 * scale {
            return None;
        }
        if p != k {
            for j in 0..n {
                let t = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = t;
            }
            for j in 0..x.cols {
                let t = x[(k, j)];
                x[(k, j)] = x[(p, j)];
                x[(p, j)] = t;
            }
        }
        let piv = a[(k, k)];
        for i in k + 1..n {
            let f = a[(i, k)] / piv;
            if f == ZERO {
                continue;
            }
            for j in k..n {
                let t = a[(k, j)];
                a[(i, j)] -= f * t;
            }
            for j in 0..x.cols {
                let t = x[(k, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..x.cols {
            let mut acc = x[(k, j)];
            for i in k + 1..n {
                acc -= a[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = acc / a[(k, k)];
        }
    }
    Some(x)
}

/// Smallest singular value of `m - λI`; the eigen-residual used in tests.
pub fn eig_residual(m: &CMatrix, lambda: C64) -> Result<f64> {
    let n = m.rows;
    let shifted = CMatrix::from_fn(n, n, |i, j| if i == j { m[(i, j)] - lambda } else { m[(i, j)] });
    let d = svd(&shifted)?;
    Ok(d.s.last().copied().unwrap_or(0.0))
}
