use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wtmp::config::{Preset, RunConfig};
use wtmp::error::ErrorKind;
use wtmp::evaluation::{near_and_plane, relative_error, to_db, transform_nmse};
use wtmp::experiment::{
    draw_ue, n_ports, noise_seed, observe_samples, observe_window, run_figure, run_se, truth_at, Baseline, Pipeline, ALL_BASELINES,
};
use wtmp::io::{git_revision, read_dump, sha256_hex, write_csv, write_dump, write_experiment_csv, write_json, write_manifest, ChannelDump, Manifest};
use wtmp::predictor::PencilVariant;
use wtmp::{Result, WtmpError};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "WTMP_THREADS";

#[derive(Parser)]
#[command(name = "wtmp", version, about = "Near-field channel prediction experiments")]
struct Cli {
    /// TOML run configuration; overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when no --config is given.
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Desk)]
    preset: PresetArg,
    /// Base seed; replaces the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; replaces the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Matrix-pencil variant.
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Difference,
}

#[derive(Subcommand)]
enum Command {
    /// Write noise-free channel dumps for every UE.
    Synth,
    /// Estimate path angles and distances from the newest observation.
    Estimate,
    /// Build the wavefront transform and report its NMSE.
    Transform,
    /// Predict each UE's channel after the CSI delay.
    Predict {
        /// Directory with dumps written by `synth`; synthesized afresh otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Spectral efficiency of the baselines versus SNR.
    Evaluate {
        /// Restrict to these baselines (repeatable).
        #[arg(long = "baseline", value_parser = parse_baseline)]
        baselines: Vec<Baseline>,
    },
    /// Data behind one figure trend.
    Figure {
        #[arg(value_parser = clap::value_parser!(u32).range(2..=7))]
        id: u32,
    },
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    Baseline::parse(s).ok_or_else(|| {
        let names: Vec<_> = ALL_BASELINES.iter().map(|b| b.name()).collect();
        format!("unknown baseline {s:?}; expected one of {}", names.join(", "))
    })
}

struct Ctx {
    run: RunConfig,
    config_text: String,
    out: PathBuf,
    outputs: Vec<String>,
    notes: Vec<String>,
}

impl Ctx {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(self, command: &str) -> Result<()> {
        let m = Manifest {
            command: command.to_string(),
            config_sha256: sha256_hex(self.config_text.as_bytes()),
            seeds: self.run.experiment.seeds(),
            git_revision: git_revision(),
            outputs: self.outputs,
            notes: self.notes,
        };
        write_manifest(&self.out.join(format!("manifest_{command}.json")), &m)
    }
}

fn load(cli: &Cli) -> Result<Ctx> {
    let mut run = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(match cli.preset {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }),
    };
    if let Some(s) = cli.seed {
        run.experiment.base_seed = s;
    }
    if let Some(v) = cli.variant {
        run.algorithm.predictor.pencil.variant = match v {
            VariantArg::Standard => PencilVariant::Standard,
            VariantArg::Difference => PencilVariant::Difference,
        };
    }
    if let Some(o) = &cli.out {
        run.experiment.output_dir = o.to_string_lossy().into_owned();
    }
    run.validate()?;
    let out = PathBuf::from(&run.experiment.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| WtmpError::io(&out, e))?;
    // hash the effective configuration, overrides included; where the
    // outputs land does not change them
    let mut hashed = run.clone();
    hashed.experiment.output_dir.clear();
    let config_text = hashed.to_toml();
    Ok(Ctx {
        run,
        config_text,
        out,
        outputs: Vec::new(),
        notes: Vec::new(),
    })
}

fn seed(ctx: &Ctx) -> u64 {
    ctx.run.experiment.base_seed
}

fn cmd_synth(mut ctx: Ctx) -> Result<()> {
    let run = ctx.run.clone();
    let geom = run.geometry()?;
    let total = run.scenario.n_s + run.algorithm.predictor.pencil.n_predict;
    for u in 0..run.experiment.n_ue {
        let paths = draw_ue(&run, seed(&ctx), u)?;
        let samples = (0..n_ports(&paths))
            .map(|p| (1..=total).map(|k| truth_at(&geom, &run.scenario, &paths, p, k)).collect())
            .collect();
        let dump = ChannelDump::new(samples, run.scenario.t_sample)?;
        write_dump(&ctx.path(&format!("channel_ue{u}.bin")), &dump)?;
        write_json(&ctx.path(&format!("paths_ue{u}.json")), &paths)?;
        ctx.notes.push(format!("ue {u}: {} paths, {} ports, {total} samples", paths.len(), n_ports(&paths)));
    }
    ctx.finish("synth")
}

#[derive(Serialize)]
struct EstimateRow {
    ue: usize,
    path: usize,
    theta: f64,
    phi: f64,
    r: f64,
}

fn cmd_estimate(mut ctx: Ctx) -> Result<()> {
    let run = ctx.run.clone();
    let pl = Pipeline::new(&run, run.geometry()?)?;
    let mut rows = Vec::new();
    for u in 0..run.experiment.n_ue {
        let paths = draw_ue(&run, seed(&ctx), u)?;
        let w = observe_window(&pl.geom, &pl.scenario, &paths, 0, run.experiment.srs_snr_db, noise_seed(seed(&ctx), u, 0));
        let est = pl.estimate(w.last().unwrap(), &paths)?;
        for k in 0..est.p_hat {
            rows.push(EstimateRow { ue: u, path: k, theta: est.theta_hat[k], phi: est.phi_hat[k], r: est.r_hat[k] });
        }
    }
    write_csv(&ctx.path("estimates.csv"), &rows)?;
    ctx.finish("estimate")
}

#[derive(Serialize)]
struct PhaseRow {
    ue: usize,
    antenna: usize,
    phase: f64,
}

#[derive(Serialize)]
struct NmseRow {
    ue: usize,
    with: f64,
    without: f64,
}

fn cmd_transform(mut ctx: Ctx) -> Result<()> {
    let run = ctx.run.clone();
    let pl = Pipeline::new(&run, run.geometry()?)?;
    let mut phases = Vec::new();
    let mut nmse = Vec::new();
    for u in 0..run.experiment.n_ue {
        let paths = draw_ue(&run, seed(&ctx), u)?;
        let w = observe_window(&pl.geom, &pl.scenario, &paths, 0, run.experiment.srs_snr_db, noise_seed(seed(&ctx), u, 0));
        let newest = w.last().unwrap();
        let bn = pl.transform(&pl.estimate(newest, &paths)?)?;
        phases.extend(bn.phase_table().into_iter().map(|(antenna, phase)| PhaseRow { ue: u, antenna, phase }));
        let (near, plane) = near_and_plane(&pl.geom, &pl.scenario, &paths, newest.t);
        let (with, without) = transform_nmse(&near, &plane, &bn)?;
        nmse.push(NmseRow { ue: u, with, without });
    }
    write_csv(&ctx.path("transform_phases.csv"), &phases)?;
    write_csv(&ctx.path("transform_nmse.csv"), &nmse)?;
    ctx.finish("transform")
}

#[derive(Serialize)]
struct PredictionRow {
    ue: usize,
    port: usize,
    antenna: usize,
    subcarrier: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    ue: usize,
    port: usize,
    relative_error: f64,
    error_db: f64,
    support_size: usize,
    model_order: usize,
    pencil_size: usize,
    warning: String,
}

fn cmd_predict(mut ctx: Ctx, input: Option<&Path>) -> Result<()> {
    let run = ctx.run.clone();
    let pl = Pipeline::new(&run, run.geometry()?)?;
    let n_s = run.scenario.n_s;
    let target = n_s + run.algorithm.predictor.pencil.n_predict;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for u in 0..run.experiment.n_ue {
        let paths = draw_ue(&run, seed(&ctx), u)?;
        let (windows, truths) = match input {
            Some(dir) => {
                let d = read_dump(&dir.join(format!("channel_ue{u}.bin")))?;
                if (d.header.n_samples as usize) < target || d.header.n_t as usize != pl.geom.n_t() || d.header.n_f as usize != run.scenario.n_f {
                    return Err(WtmpError::Format(format!(
                        "dump for UE {u} does not cover {target} samples of {}×{}",
                        pl.geom.n_t(),
                        run.scenario.n_f
                    )));
                }
                let mut ws = Vec::new();
                let mut ts = Vec::new();
                for (p, port) in d.samples.into_iter().enumerate() {
                    ws.push(observe_samples(&port[..n_s], run.experiment.srs_snr_db, noise_seed(seed(&ctx), u, p)));
                    ts.push(port[target - 1].clone());
                }
                (ws, ts)
            }
            None => {
                let ports = n_ports(&paths);
                let ws = (0..ports)
                    .map(|p| observe_window(&pl.geom, &pl.scenario, &paths, p, run.experiment.srs_snr_db, noise_seed(seed(&ctx), u, p)))
                    .collect::<Vec<_>>();
                let ts = (0..ports).map(|p| truth_at(&pl.geom, &pl.scenario, &paths, p, target)).collect::<Vec<_>>();
                (ws, ts)
            }
        };
        let est = pl.estimate(windows[0].last().unwrap(), &paths)?;
        let bn = pl.transform(&est)?;
        for (port, (w, truth)) in windows.iter().zip(&truths).enumerate() {
            let pred = pl.predict(w, est.p_hat.max(1), &bn, false)?;
            let e = relative_error(&pred.snapshot.h, &truth.h)?;
            summary.push(SummaryRow {
                ue: u,
                port,
                relative_error: e,
                error_db: to_db(e),
                support_size: pred.support_size,
                model_order: pred.model_order,
                pencil_size: pred.pencil_size,
                warning: pred.warning.clone().unwrap_or_default(),
            });
            let h = &pred.snapshot.h;
            for m in 0..h.rows() {
                for f in 0..h.cols() {
                    rows.push(PredictionRow { ue: u, port, antenna: m, subcarrier: f, re: h[(m, f)].re, im: h[(m, f)].im });
                }
            }
        }
    }
    write_csv(&ctx.path("prediction.csv"), &rows)?;
    write_csv(&ctx.path("prediction_summary.csv"), &summary)?;
    let mean = summary.iter().map(|s| s.relative_error).sum::<f64>() / summary.len() as f64;
    println!("mean relative prediction error {mean:.3e} ({:.2} dB)", to_db(mean));
    ctx.notes.push(format!("mean relative prediction error {mean:e}"));
    ctx.finish("predict")
}

fn cmd_evaluate(mut ctx: Ctx, baselines: &[Baseline]) -> Result<()> {
    let kinds = if baselines.is_empty() { ALL_BASELINES.to_vec() } else { baselines.to_vec() };
    let r = run_se(&ctx.run, &kinds)?;
    write_experiment_csv(&ctx.path("se.csv"), &r)?;
    ctx.finish("evaluate")
}

fn cmd_figure(mut ctx: Ctx, id: u32) -> Result<()> {
    let r = run_figure(id, &ctx.run)?;
    write_experiment_csv(&ctx.path(&format!("fig{id}.csv")), &r)?;
    ctx.finish(&format!("figure{id}"))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| WtmpError::InvalidConfig(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        wtmp::configure_threads(n)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let ctx = load(&cli)?;
    match &cli.cmd {
        Command::Synth => cmd_synth(ctx),
        Command::Estimate => cmd_estimate(ctx),
        Command::Transform => cmd_transform(ctx),
        Command::Predict { input } => cmd_predict(ctx, input.as_deref()),
        Command::Evaluate { baselines } => cmd_evaluate(ctx, baselines),
        Command::Figure { id } => cmd_figure(ctx, *id),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}
