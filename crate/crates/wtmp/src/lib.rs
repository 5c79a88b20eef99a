//! Near-field channel prediction for extremely large antenna arrays.

pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod numerics;
pub mod predictor;
pub mod tfproj;
pub mod transform;

pub use error::{Result, WtmpError};
pub use numerics::{CMatrix, C64};

/// Size rayon's global pool. Only the first call takes effect.
pub fn configure_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(WtmpError::InvalidConfig("thread count must be positive".into()));
    }
    // a second call fails because the pool already exists; that is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
