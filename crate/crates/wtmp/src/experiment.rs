//! Monte-Carlo trials behind the figure sweeps and baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    generate_scenario, observe, synthesize_port, ArrayGeometry, ChannelSnapshot, DistanceModel, GeneratorSpec, PathParams,
    ScenarioConfig,
};
use crate::config::{ArraySpec, RunConfig};
use crate::error::{Result, WtmpError};
use crate::estimation::{build_dictionary, omp_estimate, Dictionary, PathEstimate, PolarGrid, DEFAULT_DICTIONARY_CAP};
use crate::evaluation::{
    effective_row, ezf_precode, near_and_plane, port_stack, relative_error, spectral_efficiency, transform_nmse,
    ExperimentResult, Series,
};
use crate::predictor::{predict_channel, AngularBasis, Prediction};
use crate::tfproj::{TFDictionary, TfVariant};
use crate::transform::{build_transform, TransformMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// True CSI at the transmission instant.
    Stationary,
    /// The last observed sample, outdated by the CSI delay.
    NoPrediction,
    Wtmp,
    WtmpNoTransform,
    WtmpStaticDict,
}

pub const ALL_BASELINES: [Baseline; 5] = [
    Baseline::Stationary,
    Baseline::NoPrediction,
    Baseline::Wtmp,
    Baseline::WtmpNoTransform,
    Baseline::WtmpStaticDict,
];

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Stationary => "stationary",
            Baseline::NoPrediction => "no_prediction",
            Baseline::Wtmp => "wtmp",
            Baseline::WtmpNoTransform => "wtmp_no_transform",
            Baseline::WtmpStaticDict => "wtmp_static_dict",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_BASELINES.into_iter().find(|b| b.name() == s)
    }
}

/// SplitMix64 step; decorrelates per-UE and per-port streams of one seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Paths of UE `u` for `seed`.
pub fn draw_ue(run: &RunConfig, seed: u64, u: usize) -> Result<Vec<PathParams>> {
    if let Some(p) = &run.paths {
        return Ok(p.clone());
    }
    let mut spec: GeneratorSpec = run
        .generator
        .clone()
        .ok_or_else(|| WtmpError::InvalidConfig("need either paths or a generator".into()))?;
    if let Some(s) = &run.experiment.ue_speeds {
        spec.speed = s[u];
    }
    Ok(generate_scenario(mix_seed(seed, u as u64), &spec, run.scenario.f_c)?.0)
}

pub fn n_ports(paths: &[PathParams]) -> usize {
    paths.iter().map(|p| p.gains.len()).min().unwrap_or(1)
}

/// Seed of the observation noise for UE `u`, port `port`.
pub fn noise_seed(seed: u64, u: usize, port: usize) -> u64 {
    mix_seed(seed, 1000 + (u * 16 + port) as u64)
}

/// Add observation noise to clean samples.
pub fn observe_samples(clean: &[ChannelSnapshot], snr_db: Option<f64>, noise_seed: u64) -> Vec<ChannelSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    clean.iter().map(|s| observe(s, snr_db, &mut rng)).collect()
}

/// Noisy samples at `k·T`, `k = 1..=n_s`.
pub fn observe_window(
    geom: &ArrayGeometry,
    cfg: &ScenarioConfig,
    paths: &[PathParams],
    port: usize,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Vec<ChannelSnapshot> {
    let clean: Vec<ChannelSnapshot> = (1..=cfg.n_s).map(|k| truth_at(geom, cfg, paths, port, k)).collect();
    observe_samples(&clean, snr_db, noise_seed)
}

/// Noise-free channel at sample index `k`.
pub fn truth_at(geom: &ArrayGeometry, cfg: &ScenarioConfig, paths: &[PathParams], port: usize, k: usize) -> ChannelSnapshot {
    synthesize_port(geom, cfg, paths, k as f64 * cfg.t_sample, port, DistanceModel::Fresnel)
}

/// True parameters ordered by power on `port`, strongest first.
pub fn oracle_estimate(paths: &[PathParams], port: usize) -> PathEstimate {
    let mut idx: Vec<usize> = (0..paths.len()).collect();
    idx.sort_by(|&a, &b| {
        paths[b].gains[port]
            .norm_sqr()
            .partial_cmp(&paths[a].gains[port].norm_sqr())
            .unwrap()
            .then(a.cmp(&b))
    });
    let params: Vec<(f64, f64, f64)> = idx.iter().map(|&i| (paths[i].theta, paths[i].phi, paths[i].r)).collect();
    PathEstimate::from_params(&params)
}

/// Everything one geometry needs to run the estimator and predictor.
pub struct Pipeline {
    pub geom: ArrayGeometry,
    pub scenario: ScenarioConfig,
    pub basis: AngularBasis,
    pub tf: TFDictionary,
    pub tf_static: TFDictionary,
    pub dict: Option<Dictionary>,
    pub run: RunConfig,
}

impl Pipeline {
    pub fn new(run: &RunConfig, geom: ArrayGeometry) -> Result<Self> {
        let sc = run.scenario.clone();
        let dict = if run.algorithm.oracle_transform {
            None
        } else {
            Some(build_dictionary(&geom, &run.algorithm.grid, DEFAULT_DICTIONARY_CAP)?)
        };
        Ok(Pipeline {
            basis: AngularBasis::new(geom.n_h, geom.n_v),
            tf: TFDictionary::new(&sc, sc.n_s, run.algorithm.tf_variant)?,
            tf_static: TFDictionary::new(&sc, sc.n_s, TfVariant::Static)?,
            geom,
            scenario: sc,
            dict,
            run: run.clone(),
        })
    }

    /// Path estimate from the first subcarrier of the newest sample, or the
    /// true parameters in oracle mode.
    pub fn estimate(&self, newest: &ChannelSnapshot, paths: &[PathParams]) -> Result<PathEstimate> {
        match &self.dict {
            None => Ok(oracle_estimate(paths, 0)),
            Some(d) => omp_estimate(&newest.h.col(0), d, self.run.algorithm.omp),
        }
    }

    pub fn transform(&self, est: &PathEstimate) -> Result<TransformMatrix> {
        if est.p_hat == 0 {
            return Ok(TransformMatrix::identity(self.geom.n_t()));
        }
        build_transform(est, &self.geom)
    }

    pub fn predict(&self, window: &[ChannelSnapshot], p_hat: usize, bn: &TransformMatrix, static_dict: bool) -> Result<Prediction> {
        let tf = if static_dict { &self.tf_static } else { &self.tf };
        predict_channel(window, p_hat, bn, &self.basis, tf, &self.run.algorithm.predictor)
    }

    fn target_index(&self) -> usize {
        self.scenario.n_s + self.run.algorithm.predictor.pencil.n_predict
    }
}

/// Per-port channels each baseline hands to the precoder for one UE, and
/// the truth at the transmission instant.
pub struct UeOutcome {
    pub truth: Vec<ChannelSnapshot>,
    pub used: Vec<Vec<ChannelSnapshot>>,
}

pub fn ue_trial(pl: &Pipeline, seed: u64, u: usize, baselines: &[Baseline]) -> Result<UeOutcome> {
    let run = &pl.run;
    let paths = draw_ue(run, seed, u)?;
    let ports = n_ports(&paths);
    let k = pl.target_index();
    let windows: Vec<Vec<ChannelSnapshot>> = (0..ports)
        .map(|p| {
            observe_window(
                &pl.geom,
                &pl.scenario,
                &paths,
                p,
                run.experiment.srs_snr_db,
                noise_seed(seed, u, p),
            )
        })
        .collect();
    let truth: Vec<ChannelSnapshot> = (0..ports).map(|p| truth_at(&pl.geom, &pl.scenario, &paths, p, k)).collect();

    let needs_est = baselines.iter().any(|b| matches!(b, Baseline::Wtmp | Baseline::WtmpNoTransform | Baseline::WtmpStaticDict));
    let (est, bn) = if needs_est {
        let est = pl.estimate(windows[0].last().unwrap(), &paths)?;
        let bn = pl.transform(&est)?;
        (Some(est), bn)
    } else {
        (None, TransformMatrix::identity(pl.geom.n_t()))
    };
    let p_hat = est.as_ref().map_or(1, |e| e.p_hat.max(1));
    let identity = TransformMatrix::identity(pl.geom.n_t());

    let mut used = Vec::with_capacity(baselines.len());
    for &b in baselines {
        let per_port = match b {
            Baseline::Stationary => truth.clone(),
            Baseline::NoPrediction => windows.iter().map(|w| w.last().unwrap().clone()).collect(),
            Baseline::Wtmp | Baseline::WtmpNoTransform | Baseline::WtmpStaticDict => {
                let t = if b == Baseline::WtmpNoTransform { &identity } else { &bn };
                let st = b == Baseline::WtmpStaticDict;
                windows
                    .iter()
                    .map(|w| pl.predict(w, p_hat, t, st).map(|p| p.snapshot))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        used.push(per_port);
    }
    Ok(UeOutcome { truth, used })
}

/// SE per SNR point for each baseline, one seed, averaged over subcarriers.
pub fn se_trial(pl: &Pipeline, seed: u64, baselines: &[Baseline]) -> Result<Vec<Vec<f64>>> {
    let n_ue = pl.run.experiment.n_ue;
    let outcomes = (0..n_ue)
        .map(|u| ue_trial(pl, seed, u, baselines))
        .collect::<Result<Vec<_>>>()?;
    let n_f = pl.scenario.n_f;
    let snrs = &pl.run.experiment.snr_axis;
    let mut out = vec![vec![0.0; snrs.len()]; baselines.len()];
    for f in 0..n_f {
        let rows = outcomes
            .iter()
            .map(|o| effective_row(&port_stack(&o.truth, f)))
            .collect::<Result<Vec<_>>>()?;
        for (bi, acc) in out.iter_mut().enumerate() {
            let chans: Vec<_> = outcomes.iter().map(|o| port_stack(&o.used[bi], f)).collect();
            let w = ezf_precode(&chans)?.w;
            for (si, &snr) in snrs.iter().enumerate() {
                acc[si] += spectral_efficiency(&rows, &w, snr)? / n_f as f64;
            }
        }
    }
    Ok(out)
}

fn collect_series(names: Vec<String>, n_axis: usize, per_seed: Vec<Vec<Vec<f64>>>) -> Vec<Series> {
    names
        .into_iter()
        .enumerate()
        .map(|(si, name)| Series {
            name,
            samples: (0..n_axis).map(|i| per_seed.iter().map(|s| s[si][i]).collect()).collect(),
        })
        .collect()
}

/// Sum SE versus SNR for the given baselines; seeds run in parallel.
pub fn run_se(run: &RunConfig, baselines: &[Baseline]) -> Result<ExperimentResult> {
    run.validate()?;
    let pl = Pipeline::new(run, run.geometry()?)?;
    let seeds = run.experiment.seeds();
    let per_seed = seeds
        .par_iter()
        .map(|&s| se_trial(&pl, s, baselines))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        metric: "sum_se_bps_hz".into(),
        axis_name: "snr_db".into(),
        axis: run.experiment.snr_axis.clone(),
        seeds,
        series: collect_series(
            baselines.iter().map(|b| b.name().to_string()).collect(),
            run.experiment.snr_axis.len(),
            per_seed,
        ),
    })
}

pub fn run_baseline(kind: Baseline, run: &RunConfig) -> Result<ExperimentResult> {
    run_se(run, &[kind])
}

/// Relative prediction error (linear) of port 0 versus the antenna count,
/// for the full method and without the transform.
pub fn run_error_vs_antennas(run: &RunConfig) -> Result<ExperimentResult> {
    run.validate()?;
    let seeds = run.experiment.seeds();
    let axis = run.experiment.n_t_axis.clone();
    let pipelines = axis
        .iter()
        .map(|&n| {
            let spec = ArraySpec { n_h: 1, n_v: n, spacing: run.array.spacing };
            Pipeline::new(run, spec.geometry(run.scenario.f_c)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let paths = draw_ue(run, seed, 0)?;
            let mut with = Vec::new();
            let mut without = Vec::new();
            for pl in &pipelines {
                let w = observe_window(&pl.geom, &pl.scenario, &paths, 0, run.experiment.srs_snr_db, noise_seed(seed, 0, 0));
                let truth = truth_at(&pl.geom, &pl.scenario, &paths, 0, pl.target_index());
                let est = pl.estimate(w.last().unwrap(), &paths)?;
                let p_hat = est.p_hat.max(1);
                let a = pl.predict(&w, p_hat, &pl.transform(&est)?, false)?;
                let b = pl.predict(&w, p_hat, &TransformMatrix::identity(pl.geom.n_t()), false)?;
                with.push(relative_error(&a.snapshot.h, &truth.h)?);
                without.push(relative_error(&b.snapshot.h, &truth.h)?);
            }
            Ok(vec![with, without])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        metric: "relative_prediction_error".into(),
        axis_name: "n_t".into(),
        axis: axis.iter().map(|&n| n as f64).collect(),
        seeds,
        series: collect_series(vec!["wtmp".into(), "wtmp_no_transform".into()], axis.len(), per_seed),
    })
}

/// Transform NMSE with and without the transform as every path is moved
/// to each distance on the axis. Uses the true path parameters.
pub fn run_nmse_vs_distance(run: &RunConfig) -> Result<ExperimentResult> {
    run.validate()?;
    let geom = run.geometry()?;
    let seeds = run.experiment.seeds();
    let axis = run.experiment.distance_axis.clone();
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let base = draw_ue(run, seed, 0)?;
            let mut with = Vec::new();
            let mut without = Vec::new();
            for &r in &axis {
                let paths: Vec<PathParams> = base.iter().map(|p| PathParams { r, ..p.clone() }).collect();
                let bn = build_transform(&oracle_estimate(&paths, 0), &geom)?;
                let (near, plane) = near_and_plane(&geom, &run.scenario, &paths, 0.0);
                let (w, wo) = transform_nmse(&near, &plane, &bn)?;
                with.push(w);
                without.push(wo);
            }
            Ok(vec![with, without])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        metric: "transform_nmse".into(),
        axis_name: "distance_m".into(),
        axis,
        seeds,
        series: collect_series(vec!["with".into(), "without".into()], run.experiment.distance_axis.len(), per_seed),
    })
}

/// Figure ids understood by [`run_figure`].
pub const FIGURE_IDS: [u32; 6] = [2, 3, 4, 5, 6, 7];

fn prefixed(mut r: ExperimentResult, prefix: &str) -> ExperimentResult {
    for s in r.series.iter_mut() {
        s.name = format!("{prefix}{}", s.name);
    }
    r
}

/// Desk-scale sweep behind each figure.
///
/// 2: SE vs SNR for every baseline. 3: prediction error vs antenna count.
/// 4: as 2 with UE speeds stepped from a quarter of the generator speed up
/// to the full speed. 5: as 2 on the configured array and on a square UPA
/// with the same element count. 6: transform NMSE vs distance. 7: as 2 on a
/// clustered model with a line-of-sight ray.
pub fn run_figure(id: u32, run: &RunConfig) -> Result<ExperimentResult> {
    match id {
        2 => run_se(run, &ALL_BASELINES),
        3 => run_error_vs_antennas(run),
        4 => {
            let mut r = run.clone();
            let v = r.generator.as_ref().map_or(0.0, |g| g.speed);
            let n = r.experiment.n_ue;
            r.experiment.ue_speeds = Some((0..n).map(|u| v * ((u % 4) + 1) as f64 / 4.0).collect());
            run_se(&r, &ALL_BASELINES)
        }
        5 => {
            let a = prefixed(run_se(run, &ALL_BASELINES)?, "ula/");
            let mut r = run.clone();
            let n_t = run.array.n_h * run.array.n_v;
            let side = (n_t as f64).sqrt().round() as usize;
            if side * side != n_t || !side.is_multiple_of(2) {
                return Err(WtmpError::InvalidConfig(format!("{n_t} elements do not form an even square array")));
            }
            r.array = ArraySpec { n_h: side, n_v: side, spacing: run.array.spacing };
            let phi = r.generator.as_ref().map_or((-1.0, 1.0), |g| g.phi_range);
            let g = &run.algorithm.grid;
            r.algorithm.grid = PolarGrid {
                theta_range: g.theta_range,
                phi_range: phi,
                m_theta: 3 * side,
                m_phi: 3 * side,
                m_r: g.m_r.min(12),
                r_range: g.r_range,
            };
            let b = prefixed(run_se(&r, &ALL_BASELINES)?, "upa/");
            let mut out = a;
            out.series.extend(b.series);
            Ok(out)
        }
        6 => run_nmse_vs_distance(run),
        7 => {
            let mut r = run.clone();
            let g = r.generator.clone().unwrap_or_default();
            r.paths = None;
            r.generator = Some(GeneratorSpec {
                n_clusters: 3,
                rays_per_cluster: 2,
                los_k_factor: Some(1.0),
                angular_spreads: [0.01; 4],
                ..g
            });
            run_se(&r, &ALL_BASELINES)
        }
        _ => Err(WtmpError::InvalidConfig(format!("unknown figure id {id}; expected one of {FIGURE_IDS:?}"))),
    }
}
