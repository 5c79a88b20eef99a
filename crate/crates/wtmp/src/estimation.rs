//! Polar-grid dictionary and orthogonal matching pursuit for path angles and
//! distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{near_steering, ArrayGeometry};
use crate::error::{Result, WtmpError};
use crate::numerics::{inner, pinv, vec_norm, CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarGrid {
    pub theta_range: (f64, f64),
    pub phi_range: (f64, f64),
    pub r_range: (f64, f64),
    pub m_theta: usize,
    pub m_phi: usize,
    pub m_r: usize,
}

fn grid_point(range: (f64, f64), count: usize, i: usize) -> f64 {
    if count == 1 {
        range.0
    } else {
        range.0 + (range.1 - range.0) * i as f64 / (count - 1) as f64
    }
}

impl PolarGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), m) in [
            ("theta", self.theta_range, self.m_theta),
            ("phi", self.phi_range, self.m_phi),
            ("r", self.r_range, self.m_r),
        ] {
            if m == 0 {
                return Err(WtmpError::InvalidConfig(format!("grid count for {name} is zero")));
            }
            if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(WtmpError::InvalidConfig(format!("grid range for {name} is ({lo}, {hi})")));
            }
        }
        if self.r_range.0 <= 0.0 {
            return Err(WtmpError::InvalidConfig("grid distances must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.m_theta * self.m_phi * self.m_r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid spacings (Δθ, Δφ, Δr); zero along single-point axes.
    pub fn resolution(&self) -> (f64, f64, f64) {
        let step = |(lo, hi): (f64, f64), m: usize| if m > 1 { (hi - lo) / (m - 1) as f64 } else { 0.0 };
        (
            step(self.theta_range, self.m_theta),
            step(self.phi_range, self.m_phi),
            step(self.r_range, self.m_r),
        )
    }

    /// Linear index of `(i_θ, i_φ, i_r)`.
    pub fn index(&self, it: usize, ip: usize, ir: usize) -> usize {
        (it * self.m_phi + ip) * self.m_r + ir
    }

    pub fn point(&self, idx: usize) -> (f64, f64, f64) {
        let ir = idx % self.m_r;
        let ip = (idx / self.m_r) % self.m_phi;
        let it = idx / (self.m_r * self.m_phi);
        (
            grid_point(self.theta_range, self.m_theta, it),
            grid_point(self.phi_range, self.m_phi, ip),
            grid_point(self.r_range, self.m_r, ir),
        )
    }
}

/// Unit-norm near-field atoms, one per grid point.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub grid: PolarGrid,
    // atom j is row j (contiguous); logically this is the N_t × M matrix's adjoint layout
    atoms: CMatrix,
}

/// Default cap on dictionary entries (atoms × antennas).
pub const DEFAULT_DICTIONARY_CAP: usize = 1 << 26;

impl Dictionary {
    pub fn n_atoms(&self) -> usize {
        self.atoms.rows()
    }

    pub fn n_t(&self) -> usize {
        self.atoms.cols()
    }

    pub fn atom(&self, j: usize) -> &[C64] {
        self.atoms.row(j)
    }

    /// `|⟨atom_j, y⟩|` for every atom.
    pub fn correlations(&self, y: &[C64]) -> Vec<f64> {
        (0..self.n_atoms())
            .into_par_iter()
            .map(|j| inner(self.atom(j), y).norm())
            .collect()
    }
}

pub fn build_dictionary(geom: &ArrayGeometry, grid: &PolarGrid, cap: usize) -> Result<Dictionary> {
    grid.validate()?;
    let n_t = geom.n_t();
    let m = grid.len();
    if m == 0 {
        return Err(WtmpError::EmptyDictionary);
    }
    if m.saturating_mul(n_t) > cap {
        return Err(WtmpError::DictionaryTooLarge { atoms: m, rows: n_t, cap });
    }
    let scale = 1.0 / (n_t as f64).sqrt();
    let rows: Vec<Vec<C64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let (t, p, r) = grid.point(j);
            near_steering(geom, t, p, r).into_iter().map(|z| z * scale).collect()
        })
        .collect();
    let atoms = CMatrix::new(m, n_t, rows.concat())?;
    Ok(Dictionary { grid: grid.clone(), atoms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmpStop {
    pub max_paths: usize,
    /// Stop once ‖residual‖/‖y‖ falls to this value.
    pub residual_tol: f64,
}

impl Default for OmpStop {
    fn default() -> Self {
        OmpStop {
            max_paths: 8,
            residual_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub p_hat: usize,
    pub theta_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub residual_norm: f64,
    /// Selected atom indices in selection order.
    pub atoms: Vec<usize>,
    /// Least-squares amplitudes on the normalized atoms.
    pub amplitudes: Vec<C64>,
    /// Residual norm after each iteration (entry 0 is ‖y‖).
    pub residual_history: Vec<f64>,
}

impl PathEstimate {
    /// Estimate carrying given parameters directly (oracle ablations).
    pub fn from_params(params: &[(f64, f64, f64)]) -> Self {
        PathEstimate {
            p_hat: params.len(),
            theta_hat: params.iter().map(|p| p.0).collect(),
            phi_hat: params.iter().map(|p| p.1).collect(),
            r_hat: params.iter().map(|p| p.2).collect(),
            residual_norm: 0.0,
            atoms: Vec::new(),
            amplitudes: Vec::new(),
            residual_history: Vec::new(),
        }
    }
}

pub fn omp_estimate(y: &[C64], dict: &Dictionary, stop: OmpStop) -> Result<PathEstimate> {
    if dict.n_atoms() == 0 {
        return Err(WtmpError::EmptyDictionary);
    }
    if y.len() != dict.n_t() {
        return Err(WtmpError::Dimension(format!(
            "observation has {} entries, dictionary atoms have {}",
            y.len(),
            dict.n_t()
        )));
    }
    let y_norm = vec_norm(y);
    let mut est = PathEstimate::from_params(&[]);
    est.residual_history.push(y_norm);
    if y_norm == 0.0 {
        return Ok(est);
    }

    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::new();
    let mut amps: Vec<C64> = Vec::new();
    while support.len() < stop.max_paths && vec_norm(&residual) / y_norm > stop.residual_tol {
        let corr = dict.correlations(&residual);
        let mut best = 0;
        for (j, &c) in corr.iter().enumerate() {
            if c > corr[best] {
                best = j;
            }
        }
        if support.contains(&best) {
            break;
        }
        support.push(best);

        let a_s = CMatrix::from_fn(dict.n_t(), support.len(), |i, k| dict.atom(support[k])[i]);
        let x = pinv(&a_s, 1e-12)?.matvec(y);
        let fit = a_s.matvec(&x);
        residual = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
        amps = x;
        est.residual_history.push(vec_norm(&residual));
    }

    for &j in &support {
        let (t, p, r) = dict.grid.point(j);
        est.theta_hat.push(t);
        est.phi_hat.push(p);
        est.r_hat.push(r);
    }
    est.p_hat = support.len();
    est.residual_norm = vec_norm(&residual);
    est.atoms = support;
    est.amplitudes = amps;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ZERO;

    fn setup() -> (ArrayGeometry, PolarGrid) {
        let g = ArrayGeometry::half_wavelength(4, 16, 39e9).unwrap();
        let grid = PolarGrid {
            theta_range: (0.4, 2.7),
            phi_range: (-0.8, 0.8),
            r_range: (3.0, 30.0),
            m_theta: 12,
            m_phi: 5,
            m_r: 4,
        };
        (g, grid)
    }

    #[test]
    fn dictionary_shape_and_norms() {
        let (g, grid) = setup();
        let d = build_dictionary(&g, &grid, DEFAULT_DICTIONARY_CAP).unwrap();
        assert_eq!(d.n_atoms(), 12 * 5 * 4);
        for j in 0..d.n_atoms() {
            assert!((vec_norm(d.atom(j)) - 1.0).abs() < 1e-12);
        }
        let single = PolarGrid { m_theta: 1, m_phi: 1, m_r: 1, ..grid };
        let d = build_dictionary(&g, &single, DEFAULT_DICTIONARY_CAP).unwrap();
        let a = near_steering(&g, 0.4, -0.8, 3.0);
        for (x, y) in d.atom(0).iter().zip(&a) {
            assert!((x * 8.0 - y).norm() < 1e-12);
        }
        assert!(matches!(
            build_dictionary(&g, &grid, 100),
            Err(WtmpError::DictionaryTooLarge { .. })
        ));
    }

    #[test]
    fn single_atom_recovered_in_one_step() {
        let (g, grid) = setup();
        let d = build_dictionary(&g, &grid, DEFAULT_DICTIONARY_CAP).unwrap();
        let j = grid.index(5, 3, 2);
        let y: Vec<C64> = d.atom(j).iter().map(|z| z * C64::new(2.0, -1.0)).collect();
        let est = omp_estimate(&y, &d, OmpStop::default()).unwrap();
        assert_eq!(est.atoms, vec![j]);
        assert!(est.residual_norm < 1e-10);
    }

    #[test]
    fn zero_observation() {
        let (g, grid) = setup();
        let d = build_dictionary(&g, &grid, DEFAULT_DICTIONARY_CAP).unwrap();
        let est = omp_estimate(&vec![ZERO; g.n_t()], &d, OmpStop::default()).unwrap();
        assert_eq!(est.p_hat, 0);
        assert_eq!(est.residual_norm, 0.0);
    }

    #[test]
    fn residual_never_increases() {
        let (g, grid) = setup();
        let d = build_dictionary(&g, &grid, DEFAULT_DICTIONARY_CAP).unwrap();
        let y: Vec<C64> = (0..g.n_t()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos())).collect();
        let est = omp_estimate(&y, &d, OmpStop { max_paths: 10, residual_tol: 0.0 }).unwrap();
        assert!(est.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
