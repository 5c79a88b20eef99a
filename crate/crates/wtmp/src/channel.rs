//! Array geometry, steering vectors and the spherical-wavefront multipath
//! channel.
//!
//! The BS array lies in the yOz plane with its central element at the
//! origin. Antennas are vectorized with the vertical index fastest, i.e.
//! element `(s_h, s_v)` (1-based) sits at linear index `(s_h-1)·n_v + (s_v-1)`,
//! which matches `a_h ⊗ a_v`.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WtmpError};
use crate::numerics::{kron_vec, CMatrix, C64, ZERO};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
    pub d_h: f64,
    pub d_v: f64,
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(n_h: usize, n_v: usize, d_h: f64, d_v: f64, wavelength: f64) -> Result<Self> {
        let g = ArrayGeometry {
            n_h,
            n_v,
            d_h,
            d_v,
            wavelength,
        };
        g.validate()?;
        Ok(g)
    }

    /// Half-wavelength spaced array at carrier `f_c`.
    pub fn half_wavelength(n_h: usize, n_v: usize, f_c: f64) -> Result<Self> {
        let lambda = SPEED_OF_LIGHT / f_c;
        Self::new(n_h, n_v, lambda / 2.0, lambda / 2.0, lambda)
    }

    /// Vertical uniform linear array (1 × n).
    pub fn ula(n: usize, f_c: f64) -> Result<Self> {
        Self::half_wavelength(1, n, f_c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_h", self.n_h), ("n_v", self.n_v)] {
            if n == 0 || (n > 1 && n % 2 != 0) {
                return Err(WtmpError::InvalidConfig(format!(
                    "{name} = {n}: must be 1 or even"
                )));
            }
        }
        for (name, v) in [("d_h", self.d_h), ("d_v", self.d_v), ("wavelength", self.wavelength)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(WtmpError::InvalidConfig(format!("{name} = {v}: must be positive")));
            }
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        self.n_h * self.n_v
    }

    /// Horizontal aperture `n_h·d_h`, zero for a single column.
    pub fn aperture_h(&self) -> f64 {
        if self.n_h > 1 {
            self.n_h as f64 * self.d_h
        } else {
            0.0
        }
    }

    pub fn aperture_v(&self) -> f64 {
        if self.n_v > 1 {
            self.n_v as f64 * self.d_v
        } else {
            0.0
        }
    }

    /// Centered horizontal coordinate of column `s_h` (1-based).
    pub fn y_coord(&self, s_h: usize) -> f64 {
        centered(self.n_h, self.d_h, s_h)
    }

    /// Centered vertical coordinate of row `s_v` (1-based).
    pub fn z_coord(&self, s_v: usize) -> f64 {
        centered(self.n_v, self.d_v, s_v)
    }

    /// 1-based `(s_h, s_v)` of linear antenna index `m`.
    pub fn element_of(&self, m: usize) -> (usize, usize) {
        (m / self.n_v + 1, m % self.n_v + 1)
    }
}

fn centered(n: usize, d: f64, s: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        d * (s as f64 - n as f64 / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathParams {
    /// Elevation of departure, [0, π].
    pub theta: f64,
    /// Azimuth of departure, (−π, π].
    pub phi: f64,
    /// Distance from the array center to the scatterer, meters.
    pub r: f64,
    /// Delay at t = 0, seconds.
    pub tau0: f64,
    /// Doppler, Hz.
    pub doppler: f64,
    /// Complex gain per UE receive port.
    pub gains: Vec<C64>,
    #[serde(default)]
    pub theta_eoa: f64,
    #[serde(default)]
    pub phi_aoa: f64,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=PI).contains(&self.theta) {
            return Err(WtmpError::InvalidConfig(format!("theta {} outside [0, π]", self.theta)));
        }
        if !(self.phi > -PI - 1e-12 && self.phi <= PI + 1e-12) {
            return Err(WtmpError::InvalidConfig(format!("phi {} outside (−π, π]", self.phi)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(WtmpError::InvalidConfig(format!("distance {} must be positive", self.r)));
        }
        if self.gains.is_empty() {
            return Err(WtmpError::InvalidConfig("path has no port gains".into()));
        }
        Ok(())
    }

    /// Delay at time t: τ₀ − ω t / f_c.
    pub fn delay_at(&self, t: f64, f_c: f64) -> f64 {
        self.tau0 - self.doppler * t / f_c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub f_c: f64,
    /// First subcarrier, absolute RF frequency.
    pub f_1: f64,
    pub delta_f: f64,
    pub n_f: usize,
    /// Sample period, seconds.
    pub t_sample: f64,
    pub n_s: usize,
    #[serde(default)]
    pub ue_velocity: [f64; 3],
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// Desk defaults: 39 GHz carrier, 12 subcarriers at 30 kHz centred on f_c.
    pub fn desk() -> Self {
        let f_c = 39e9;
        let delta_f = 30e3;
        let n_f = 12;
        ScenarioConfig {
            f_c,
            f_1: f_c - n_f as f64 * delta_f / 2.0,
            delta_f,
            n_f,
            t_sample: 0.5e-3,
            n_s: 25,
            ue_velocity: [0.0; 3],
            noise_snr_db: None,
            seed: 0,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.n_f as f64 * self.delta_f
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Absolute frequency of subcarrier `n` (0-based).
    pub fn subcarrier(&self, n: usize) -> f64 {
        self.f_1 + n as f64 * self.delta_f
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0 && self.f_1 > 0.0 && self.delta_f > 0.0 && self.t_sample > 0.0) {
            return Err(WtmpError::InvalidConfig(
                "f_c, f_1, delta_f and t_sample must be positive".into(),
            ));
        }
        if self.n_f == 0 || self.n_s == 0 {
            return Err(WtmpError::InvalidConfig("n_f and n_s must be at least 1".into()));
        }
        // the narrowband-relative-to-carrier assumption; 1% is generous
        if self.bandwidth() > 0.01 * self.f_c.min(self.f_1) {
            return Err(WtmpError::InvalidConfig(format!(
                "bandwidth {} Hz is not small against min(f_c, f_1)",
                self.bandwidth()
            )));
        }
        Ok(())
    }
}

/// Which distance expansion drives the element phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceModel {
    #[default]
    Fresnel,
    Exact,
    Far,
}

/// One channel sample, antennas × subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub h: CMatrix,
    pub t: f64,
}

impl ChannelSnapshot {
    /// Column-stacked vector, index `n_f·N_t + m`.
    pub fn vectorize(&self) -> Vec<C64> {
        self.h.transpose().into_vec()
    }

    pub fn from_vectorized(v: &[C64], n_t: usize, n_f: usize, t: f64) -> Result<Self> {
        let ht = CMatrix::new(n_f, n_t, v.to_vec())?;
        Ok(ChannelSnapshot { h: ht.transpose(), t })
    }

    pub fn energy(&self) -> f64 {
        self.h.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn rx_unit_vector(theta_eoa: f64, phi_aoa: f64) -> [f64; 3] {
    [
        theta_eoa.sin() * phi_aoa.cos(),
        theta_eoa.sin() * phi_aoa.sin(),
        theta_eoa.cos(),
    ]
}

/// Doppler ω = r̂ᵀv/λ.
pub fn doppler_from_velocity(theta_eoa: f64, phi_aoa: f64, v: [f64; 3], wavelength: f64) -> f64 {
    let r = rx_unit_vector(theta_eoa, phi_aoa);
    (r[0] * v[0] + r[1] * v[1] + r[2] * v[2]) / wavelength
}

pub fn element_position(geom: &ArrayGeometry, s_h: usize, s_v: usize) -> [f64; 3] {
    [0.0, geom.y_coord(s_h), geom.z_coord(s_v)]
}

pub fn scatterer_position(theta: f64, phi: f64, r: f64) -> [f64; 3] {
    [
        r * theta.sin() * phi.cos(),
        r * theta.sin() * phi.sin(),
        r * theta.cos(),
    ]
}

pub fn psi(geom: &ArrayGeometry, theta: f64, phi: f64, s_h: usize, s_v: usize) -> f64 {
    theta.sin() * phi.sin() * geom.y_coord(s_h) + theta.cos() * geom.z_coord(s_v)
}

pub fn upsilon(geom: &ArrayGeometry, s_h: usize, s_v: usize) -> f64 {
    geom.y_coord(s_h).powi(2) + geom.z_coord(s_v).powi(2)
}

pub fn exact_distance(geom: &ArrayGeometry, path: &PathParams, s_h: usize, s_v: usize) -> f64 {
    let r = path.r;
    let ps = psi(geom, path.theta, path.phi, s_h, s_v);
    let up = upsilon(geom, s_h, s_v);
    r * (1.0 - 2.0 * ps / r + up / (r * r)).sqrt()
}

pub fn fresnel_distance(geom: &ArrayGeometry, path: &PathParams, s_h: usize, s_v: usize) -> f64 {
    let ps = psi(geom, path.theta, path.phi, s_h, s_v);
    let up = upsilon(geom, s_h, s_v);
    path.r - ps + (up - ps * ps) / (2.0 * path.r)
}

pub fn far_distance(geom: &ArrayGeometry, path: &PathParams, s_h: usize, s_v: usize) -> f64 {
    path.r - psi(geom, path.theta, path.phi, s_h, s_v)
}

pub fn third_order_distance(geom: &ArrayGeometry, path: &PathParams, s_h: usize, s_v: usize) -> f64 {
    let ps = psi(geom, path.theta, path.phi, s_h, s_v);
    let up = upsilon(geom, s_h, s_v);
    let r = path.r;
    r - ps + (up - ps * ps) / (2.0 * r) + (ps * up - ps.powi(3)) / (2.0 * r * r)
}

/// Phase gap between the exact and Fresnel wavefronts (third-order term).
pub fn delta_near(geom: &ArrayGeometry, path: &PathParams, s_h: usize, s_v: usize) -> f64 {
    let ps = psi(geom, path.theta, path.phi, s_h, s_v);
    let up = upsilon(geom, s_h, s_v);
    2.0 * PI / geom.wavelength * ((ps * up - ps.powi(3)) / (2.0 * path.r * path.r)).abs()
}

/// Phase gap between the Fresnel and plane wavefronts.
pub fn delta_far(geom: &ArrayGeometry, path: &PathParams, s_h: usize, s_v: usize) -> f64 {
    let ps = psi(geom, path.theta, path.phi, s_h, s_v);
    let up = upsilon(geom, s_h, s_v);
    2.0 * PI / geom.wavelength * ((up - ps * ps) / (2.0 * path.r)).abs()
}

fn xi(theta: f64, dh: f64, dv: f64) -> f64 {
    let a = theta.sin() * dh + theta.cos() * dv;
    let b = theta.cos() * dh - theta.sin() * dv;
    a * b * b
}

/// Range of distances where the Fresnel wavefront is both accurate and
/// distinguishable from a plane wave: `(sqrt(ξ_max/λ), 2(D_h²+D_v²)/λ)`.
pub fn approximation_region(geom: &ArrayGeometry) -> (f64, f64) {
    let dh = geom.aperture_h();
    let dv = geom.aperture_v();
    let lambda = geom.wavelength;
    let r_hi = 2.0 * (dh * dh + dv * dv) / lambda;

    let steps = 40_000usize; // π / 40000 < 1e-4 rad
    let h = PI / steps as f64;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=steps {
        let v = xi(k as f64 * h, dh, dv);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    // Refine the interior maximum by bisection on the sign of the slope.
    let slope = |t: f64| {
        let e = 1e-7;
        xi(t + e, dh, dv) - xi(t - e, dh, dv)
    };
    let mut lo = (best_k as f64 - 1.0).max(0.0) * h;
    let mut hi = (best_k as f64 + 1.0).min(steps as f64) * h;
    if slope(lo) > 0.0 && slope(hi) < 0.0 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.max(xi(0.5 * (lo + hi), dh, dv));
    }
    let r_lo = (best.max(0.0) / lambda).sqrt();
    (r_lo, r_hi)
}

/// Plane-wave steering vector `a_h ⊗ a_v`, phases referenced to the first element.
pub fn far_steering(geom: &ArrayGeometry, theta: f64, phi: f64) -> Vec<C64> {
    let k = 2.0 * PI / geom.wavelength;
    let uh = theta.sin() * phi.sin() * geom.d_h;
    let uv = theta.cos() * geom.d_v;
    let ah: Vec<C64> = (0..geom.n_h).map(|i| C64::from_polar(1.0, k * uh * i as f64)).collect();
    let av: Vec<C64> = (0..geom.n_v).map(|i| C64::from_polar(1.0, k * uv * i as f64)).collect();
    kron_vec(&ah, &av)
}

/// Fresnel distance response `exp(−j(2π/λ)(Υ − Ψ²)/(2r))`.
pub fn distance_response(geom: &ArrayGeometry, theta: f64, phi: f64, r: f64) -> Vec<C64> {
    let k = 2.0 * PI / geom.wavelength;
    (0..geom.n_t())
        .map(|m| {
            let (sh, sv) = geom.element_of(m);
            let ps = psi(geom, theta, phi, sh, sv);
            let up = upsilon(geom, sh, sv);
            C64::from_polar(1.0, -k * (up - ps * ps) / (2.0 * r))
        })
        .collect()
}

pub fn near_steering(geom: &ArrayGeometry, theta: f64, phi: f64, r: f64) -> Vec<C64> {
    let d = distance_response(geom, theta, phi, r);
    far_steering(geom, theta, phi)
        .into_iter()
        .zip(d)
        .map(|(a, b)| a * b)
        .collect()
}

/// Steering vector under a chosen distance expansion. The linear (plane)
/// part is shared with [`far_steering`]; only the residual phase changes.
pub fn steering(geom: &ArrayGeometry, path: &PathParams, model: DistanceModel) -> Vec<C64> {
    match model {
        DistanceModel::Fresnel => near_steering(geom, path.theta, path.phi, path.r),
        DistanceModel::Far => far_steering(geom, path.theta, path.phi),
        DistanceModel::Exact => {
            let k = 2.0 * PI / geom.wavelength;
            far_steering(geom, path.theta, path.phi)
                .into_iter()
                .enumerate()
                .map(|(m, a)| {
                    let (sh, sv) = geom.element_of(m);
                    let resid = exact_distance(geom, path, sh, sv) - path.r
                        + psi(geom, path.theta, path.phi, sh, sv);
                    a * C64::from_polar(1.0, -k * resid)
                })
                .collect()
        }
    }
}

/// Delay-and-Doppler vector, entry n: `exp(j2π((1 + f_n/f_c)ωt − f_n τ₀))`.
pub fn delay_doppler_vector(cfg: &ScenarioConfig, tau0: f64, doppler: f64, t: f64) -> Vec<C64> {
    (0..cfg.n_f)
        .map(|n| {
            let f = cfg.subcarrier(n);
            let ph = (1.0 + f / cfg.f_c) * doppler * t - f * tau0;
            C64::from_polar(1.0, 2.0 * PI * ph.rem_euclid(1.0))
        })
        .collect()
}

/// Channel seen by receive port `port`, built as `A C B(t)`.
pub fn synthesize_port(
    geom: &ArrayGeometry,
    cfg: &ScenarioConfig,
    paths: &[PathParams],
    t: f64,
    port: usize,
    model: DistanceModel,
) -> ChannelSnapshot {
    let n_t = geom.n_t();
    let mut h = CMatrix::zeros(n_t, cfg.n_f);
    for p in paths {
        let a = steering(geom, p, model);
        let b = delay_doppler_vector(cfg, p.tau0, p.doppler, t);
        let c = p.gains[port.min(p.gains.len() - 1)];
        for (m, am) in a.iter().enumerate() {
            let ca = c * am;
            for (n, bn) in b.iter().enumerate() {
                h[(m, n)] += ca * bn;
            }
        }
    }
    ChannelSnapshot { h, t }
}

/// Port 0, Fresnel wavefront.
pub fn synthesize_channel(
    geom: &ArrayGeometry,
    cfg: &ScenarioConfig,
    paths: &[PathParams],
    t: f64,
) -> ChannelSnapshot {
    synthesize_port(geom, cfg, paths, t, 0, DistanceModel::Fresnel)
}

/// Vectorized channel as `Σ_p c_p b_p ⊗ a_p`; an independent construction
/// used to cross-check [`synthesize_port`].
pub fn synthesize_vectorized(
    geom: &ArrayGeometry,
    cfg: &ScenarioConfig,
    paths: &[PathParams],
    t: f64,
    port: usize,
    model: DistanceModel,
) -> Vec<C64> {
    let mut out = vec![ZERO; geom.n_t() * cfg.n_f];
    for p in paths {
        let a = steering(geom, p, model);
        let b = delay_doppler_vector(cfg, p.tau0, p.doppler, t);
        let c = p.gains[port.min(p.gains.len() - 1)];
        for (o, v) in out.iter_mut().zip(kron_vec(&b, &a)) {
            *o += c * v;
        }
    }
    out
}

/// Add circular Gaussian noise at a per-entry SNR relative to the mean
/// entry power of `snap`.
pub fn observe<R: Rng>(snap: &ChannelSnapshot, snr_db: Option<f64>, rng: &mut R) -> ChannelSnapshot {
    let Some(snr) = snr_db else {
        return snap.clone();
    };
    let n = snap.h.as_slice().len().max(1);
    let p_sig = snap.energy() / n as f64;
    let sigma = (p_sig / 10f64.powf(snr / 10.0) / 2.0).sqrt();
    let mut h = snap.h.clone();
    for i in 0..h.rows() {
        for z in h.row_mut(i) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += C64::new(re * sigma, im * sigma);
        }
    }
    ChannelSnapshot { h, t: snap.t }
}

/// Knobs for the clustered path generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    pub distance_range: (f64, f64),
    /// Range for cluster-mean elevation of departure.
    #[serde(default = "default_theta_range")]
    pub theta_range: (f64, f64),
    /// Range for cluster-mean azimuth of departure.
    #[serde(default = "default_phi_range")]
    pub phi_range: (f64, f64),
    /// RMS ray spreads (radians) for EOD, AOD, EOA, AOA.
    #[serde(default)]
    pub angular_spreads: [f64; 4],
    /// UE speed, m/s. Direction is drawn uniformly in the horizontal plane.
    pub speed: f64,
    #[serde(default = "default_delay_max")]
    pub delay_max: f64,
    #[serde(default = "default_ports")]
    pub n_ports: usize,
    /// Adds a line-of-sight ray carrying `K/(K+1)` of each port's power.
    #[serde(default)]
    pub los_k_factor: Option<f64>,
}

fn default_theta_range() -> (f64, f64) {
    (PI / 6.0, 5.0 * PI / 6.0)
}
fn default_phi_range() -> (f64, f64) {
    (-PI / 3.0, PI / 3.0)
}
fn default_delay_max() -> f64 {
    1e-6
}
fn default_ports() -> usize {
    2
}

impl Default for GeneratorSpec {
    /// Desk scale: one five-ray cluster well inside the near field of a few
    /// hundred half-wavelength elements. Departure spreads are narrow and
    /// arrival spreads wide, so rays share a wavefront at the array but
    /// carry distinct Dopplers.
    fn default() -> Self {
        GeneratorSpec {
            n_clusters: 1,
            rays_per_cluster: 5,
            distance_range: (8.0, 12.0),
            theta_range: default_theta_range(),
            phi_range: default_phi_range(),
            angular_spreads: [0.03, 0.03, 0.5, 1.0],
            speed: 3.0,
            delay_max: default_delay_max(),
            n_ports: default_ports(),
            los_k_factor: None,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(WtmpError::InvalidConfig("generator needs at least one ray".into()));
        }
        let (lo, hi) = self.distance_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(WtmpError::InvalidConfig(format!("distance range ({lo}, {hi})")));
        }
        if self.n_ports == 0 {
            return Err(WtmpError::InvalidConfig("n_ports must be at least 1".into()));
        }
        if self.los_k_factor.is_some_and(|k| !(k >= 0.0 && k.is_finite())) {
            return Err(WtmpError::InvalidConfig("LoS K-factor must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn reflect_theta(t: f64) -> f64 {
    let mut t = t.rem_euclid(2.0 * PI);
    if t > PI {
        t = 2.0 * PI - t;
    }
    t
}

fn wrap_phi(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Clustered multipath draw. Returns the paths and the UE velocity used.
pub fn generate_scenario(seed: u64, spec: &GeneratorSpec, f_c: f64) -> Result<(Vec<PathParams>, [f64; 3])> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = SPEED_OF_LIGHT / f_c;
    let heading = rng.gen_range(-PI..PI);
    let v = [spec.speed * heading.cos(), spec.speed * heading.sin(), 0.0];
    let std = |s: f64| Normal::new(0.0, s.max(0.0)).expect("finite spread");
    let [s_eod, s_aod, s_eoa, s_aoa] = spec.angular_spreads;
    let mut paths = Vec::with_capacity(spec.n_clusters * spec.rays_per_cluster);
    for _ in 0..spec.n_clusters {
        let theta_c = rng.gen_range(spec.theta_range.0..=spec.theta_range.1);
        let phi_c = rng.gen_range(spec.phi_range.0..=spec.phi_range.1);
        let eoa_c = rng.gen_range(0.0..=PI);
        let aoa_c = rng.gen_range(-PI..PI);
        let tau_c = rng.gen_range(0.0..=spec.delay_max);
        for _ in 0..spec.rays_per_cluster {
            let theta = reflect_theta(theta_c + std(s_eod).sample(&mut rng));
            let phi = wrap_phi(phi_c + std(s_aod).sample(&mut rng));
            let theta_eoa = reflect_theta(eoa_c + std(s_eoa).sample(&mut rng));
            let phi_aoa = wrap_phi(aoa_c + std(s_aoa).sample(&mut rng));
            let r = rng.gen_range(spec.distance_range.0..=spec.distance_range.1);
            let tau0 = tau_c + rng.gen_range(0.0..=0.05 * spec.delay_max);
            let gains = (0..spec.n_ports)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im)
                })
                .collect();
            paths.push(PathParams {
                theta,
                phi,
                r,
                tau0,
                doppler: doppler_from_velocity(theta_eoa, phi_aoa, v, lambda),
                gains,
                theta_eoa,
                phi_aoa,
            });
        }
    }
    // Unit total power per port.
    for port in 0..spec.n_ports {
        let total: f64 = paths.iter().map(|p| p.gains[port].norm_sqr()).sum();
        let s = 1.0 / total.sqrt();
        for p in paths.iter_mut() {
            p.gains[port] *= s;
        }
    }
    if let Some(k) = spec.los_k_factor {
        let scatter = (1.0 / (k + 1.0)).sqrt();
        for p in paths.iter_mut() {
            for g in p.gains.iter_mut() {
                *g *= scatter;
            }
        }
        let theta = rng.gen_range(spec.theta_range.0..=spec.theta_range.1);
        let phi = rng.gen_range(spec.phi_range.0..=spec.phi_range.1);
        // seen from the UE the BS lies in the opposite direction
        let theta_eoa = PI - theta;
        let phi_aoa = wrap_phi(phi + PI);
        let amp = (k / (k + 1.0)).sqrt();
        let gains = (0..spec.n_ports)
            .map(|_| C64::from_polar(amp, rng.gen_range(-PI..PI)))
            .collect();
        paths.insert(
            0,
            PathParams {
                theta,
                phi,
                r: rng.gen_range(spec.distance_range.0..=spec.distance_range.1),
                tau0: 0.0,
                doppler: doppler_from_velocity(theta_eoa, phi_aoa, v, lambda),
                gains,
                theta_eoa,
                phi_aoa,
            },
        );
    }
    Ok((paths, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n_h: usize, n_v: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(n_h, n_v, 39e9).unwrap()
    }

    fn path(theta: f64, phi: f64, r: f64) -> PathParams {
        PathParams {
            theta,
            phi,
            r,
            tau0: 0.0,
            doppler: 0.0,
            gains: vec![C64::new(1.0, 0.0)],
            theta_eoa: 0.0,
            phi_aoa: 0.0,
        }
    }

    #[test]
    fn rx_unit_vector_cases() {
        let v = rx_unit_vector(PI / 2.0, 0.0);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
        let v = rx_unit_vector(0.0, 1.234);
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15 && (v[2] - 1.0).abs() < 1e-15);
        let v = rx_unit_vector(PI / 3.0, PI / 4.0);
        assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn element_positions_are_centered() {
        let g = geom(4, 8);
        let p = element_position(&g, 2, 4);
        assert_eq!(p, [0.0, 0.0, 0.0]);
        let g = geom(2, 4);
        // s_h = n_h/2, s_v = n_v/2 is the reference element
        assert_eq!(element_position(&g, 1, 2), [0.0, 0.0, 0.0]);
        let p = element_position(&g, 2, 1);
        assert!((p[1] - g.d_h).abs() < 1e-15 && (p[2] + g.d_v).abs() < 1e-15);
        for s in 1..=g.n_h {
            let y = g.y_coord(s);
            assert!(y >= -g.aperture_h() / 2.0 - g.d_h / 2.0 - 1e-15 && y <= g.aperture_h() / 2.0 + 1e-15);
        }
    }

    #[test]
    fn central_element_distances_equal_r() {
        let g = geom(4, 16);
        let p = path(1.1, 0.4, 25.0);
        let (sh, sv) = (2, 8);
        for d in [
            exact_distance(&g, &p, sh, sv),
            fresnel_distance(&g, &p, sh, sv),
            far_distance(&g, &p, sh, sv),
            third_order_distance(&g, &p, sh, sv),
        ] {
            assert_eq!(d, 25.0);
        }
    }

    #[test]
    fn exact_distance_is_euclidean() {
        let g = geom(4, 16);
        let p = path(1.1, -0.4, 3.0);
        let s = scatterer_position(p.theta, p.phi, p.r);
        for sh in 1..=4 {
            for sv in 1..=16 {
                let e = element_position(&g, sh, sv);
                let d = ((s[0] - e[0]).powi(2) + (s[1] - e[1]).powi(2) + (s[2] - e[2]).powi(2)).sqrt();
                assert!((exact_distance(&g, &p, sh, sv) - d).abs() < 1e-12 * d);
            }
        }
    }

    #[test]
    fn far_field_limit_of_exact_distance() {
        let g = geom(2, 2);
        let p = path(0.7, 0.3, 1000.0);
        for sh in 1..=2 {
            for sv in 1..=2 {
                let e = exact_distance(&g, &p, sh, sv);
                let f = far_distance(&g, &p, sh, sv);
                assert!((e - f).abs() / e < 1e-6);
            }
        }
    }

    #[test]
    fn phase_gaps_match_expansions() {
        let g = geom(2, 64);
        let p = path(0.9, 0.8, 4.0);
        let k = 2.0 * PI / g.wavelength;
        for m in 0..g.n_t() {
            let (sh, sv) = g.element_of(m);
            let dn = k * (third_order_distance(&g, &p, sh, sv) - fresnel_distance(&g, &p, sh, sv)).abs();
            assert!((delta_near(&g, &p, sh, sv) - dn).abs() < 1e-9);
            let df = k * (fresnel_distance(&g, &p, sh, sv) - far_distance(&g, &p, sh, sv)).abs();
            assert!((delta_far(&g, &p, sh, sv) - df).abs() < 1e-9);
        }
    }

    #[test]
    fn fresnel_beats_far_inside_region() {
        let g = geom(2, 32);
        let (lo, hi) = approximation_region(&g);
        for r in [lo * 1.01, (lo * hi).sqrt(), hi * 0.99] {
            for th in [0.3, 1.0, 1.9, 2.8] {
                let p = path(th, 1.2, r);
                for m in 0..g.n_t() {
                    let (sh, sv) = g.element_of(m);
                    let e = exact_distance(&g, &p, sh, sv);
                    assert!(
                        (e - fresnel_distance(&g, &p, sh, sv)).abs()
                            <= (e - far_distance(&g, &p, sh, sv)).abs() + 1e-15
                    );
                }
            }
        }
    }

    #[test]
    fn region_degenerate_and_square() {
        let g = ArrayGeometry::new(1, 1, 0.01, 0.01, 0.02).unwrap();
        assert_eq!(approximation_region(&g), (0.0, 0.0));
        let g = geom(16, 16);
        let d = g.aperture_h();
        let (_, hi) = approximation_region(&g);
        assert!((hi - 4.0 * d * d / g.wavelength).abs() < 1e-12 * hi);
    }

    #[test]
    fn steering_properties() {
        let g = geom(4, 8);
        let a = far_steering(&g, PI / 2.0, 0.0);
        // a_h ≡ 1 and cos θ = 0 so everything is one
        assert!(a.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-12));
        let n = near_steering(&g, 1.0, 0.5, 7.0);
        assert!(n.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let far = far_steering(&g, 1.0, 0.5);
        let near = near_steering(&g, 1.0, 0.5, 1e9);
        for (x, y) in far.iter().zip(&near) {
            assert!((x - y).norm() < 1e-6);
        }
    }

    #[test]
    fn exact_steering_tracks_fresnel_in_region() {
        let g = geom(1, 64);
        let (lo, _) = approximation_region(&g);
        let p = path(1.0, 0.0, 3.0 * lo.max(1.0));
        let e = steering(&g, &p, DistanceModel::Exact);
        let f = steering(&g, &p, DistanceModel::Fresnel);
        for (x, y) in e.iter().zip(&f) {
            assert!((x / y).arg().abs() <= PI / 8.0);
        }
    }

    #[test]
    fn delay_doppler_vector_cases() {
        let cfg = ScenarioConfig::desk();
        assert!(delay_doppler_vector(&cfg, 0.0, 0.0, 0.3).iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-12));
        let tau = 3.3e-7;
        let v = delay_doppler_vector(&cfg, tau, 250.0, 0.0);
        for (n, z) in v.iter().enumerate() {
            let expect = C64::from_polar(1.0, -2.0 * PI * cfg.subcarrier(n) * tau);
            assert!((z - expect).norm() < 1e-6);
        }
        // e^{j2πωt} e^{-j2πfτ(t)} with τ(t) = τ₀ − ωt/f_c
        let (w, t) = (180.0, 2.5e-3);
        let v = delay_doppler_vector(&cfg, tau, w, t);
        let p = PathParams { tau0: tau, doppler: w, ..path(1.0, 0.0, 10.0) };
        for n in [0, 5, 11] {
            let f = cfg.subcarrier(n);
            let expect = C64::from_polar(1.0, 2.0 * PI * (w * t - f * p.delay_at(t, cfg.f_c)));
            assert!((v[n] - expect).norm() < 1e-6, "{n}");
        }
    }

    #[test]
    fn time_varying_delay_rate() {
        let t = 0.5e-3;
        let fc = 39e9;
        let p = PathParams { tau0: 0.0, doppler: 300.0, ..path(1.0, 0.0, 10.0) };
        assert_eq!(p.delay_at(t, fc) - p.delay_at(0.0, fc), -p.doppler * t / fc);
        // with a nonzero start the difference is exact up to the subtraction's rounding
        let p = PathParams { tau0: 1e-7, ..p };
        let d = p.delay_at(t, fc) - p.delay_at(0.0, fc);
        assert!((d + p.doppler * t / fc).abs() <= 2.0 * f64::EPSILON * p.tau0);
    }

    #[test]
    fn generator_is_deterministic_and_sized() {
        let spec = GeneratorSpec {
            n_clusters: 9,
            rays_per_cluster: 20,
            distance_range: (10.0, 60.0),
            angular_spreads: [0.05; 4],
            speed: 0.0,
            ..GeneratorSpec::default()
        };
        let (a, _) = generate_scenario(7, &spec, 39e9).unwrap();
        let (b, _) = generate_scenario(7, &spec, 39e9).unwrap();
        assert_eq!(a.len(), 180);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.doppler == 0.0));
        for p in &a {
            p.validate().unwrap();
            assert!((10.0..=60.0).contains(&p.r));
        }
        let pw: f64 = a.iter().map(|p| p.gains[1].norm_sqr()).sum();
        assert!((pw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generator_los_ray() {
        let spec = GeneratorSpec {
            n_clusters: 7,
            rays_per_cluster: 20,
            los_k_factor: Some(3.0),
            ..GeneratorSpec::default()
        };
        let (a, v) = generate_scenario(11, &spec, 39e9).unwrap();
        assert_eq!(a.len(), 141);
        assert!((a[0].gains[0].norm_sqr() - 0.75).abs() < 1e-12);
        for port in 0..2 {
            let pw: f64 = a.iter().map(|p| p.gains[port].norm_sqr()).sum();
            assert!((pw - 1.0).abs() < 1e-12);
        }
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!(a[0].doppler.abs() <= speed * 39e9 / SPEED_OF_LIGHT + 1e-9);
        assert!(GeneratorSpec { los_k_factor: Some(-1.0), ..spec }.validate().is_err());
    }

    #[test]
    fn observe_noise_statistics() {
        let g = geom(1, 100);
        let mut cfg = ScenarioConfig::desk();
        cfg.n_f = 100;
        let snap = synthesize_channel(&g, &cfg, &[path(1.0, 0.0, 20.0)], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(observe(&snap, None, &mut rng), snap);
        let noisy = observe(&snap, Some(20.0), &mut rng);
        let np: f64 = (&noisy.h - &snap.h).as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e4;
        let target = snap.energy() / 1e4 / 100.0;
        assert!((np / target - 1.0).abs() < 0.05, "{np} vs {target}");
        let a = observe(&snap, Some(10.0), &mut ChaCha8Rng::seed_from_u64(9));
        let b = observe(&snap, Some(10.0), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
