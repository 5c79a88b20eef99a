//! Shared fixtures for the criterion benches.

use wtmp::channel::{ChannelSnapshot, PathParams};
use wtmp::config::{ArraySpec, RunConfig};
use wtmp::experiment::{draw_ue, observe_window, Pipeline};

pub struct Fixture {
    pub pipeline: Pipeline,
    pub paths: Vec<PathParams>,
    pub window: Vec<ChannelSnapshot>,
}

/// Desk scenario with an `n_v`-element vertical ULA and one drawn UE.
pub fn desk(n_v: usize, n_f: usize) -> Fixture {
    let mut run = RunConfig::desk();
    run.array = ArraySpec { n_h: 1, n_v, spacing: 0.5 };
    run.scenario.n_f = n_f;
    let pipeline = Pipeline::new(&run, run.geometry().expect("geometry")).expect("pipeline");
    let paths = draw_ue(&run, 7, 0).expect("draw");
    let window = observe_window(&pipeline.geom, &pipeline.scenario, &paths, 0, Some(20.0), 11);
    Fixture { pipeline, paths, window }
}
