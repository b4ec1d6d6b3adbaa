//! Config-driven pipelines: memory experiments, error budgets and Lindblad sweeps.

mod budget;
mod config;
mod memory;
mod output;
mod sweep;

pub use budget::{run_budget, BudgetOutput, ClassTotal};
pub use config::{
    BitFlipConfig, BudgetConfig, BufferSweepConfig, CodeConfig, CxSweepConfig, DecoderConfig, DecoderVariant,
    ExperimentConfig, FitConfig, LindbladConfig, NoiseConfig, ProbSpec, SweepKind, WeightSource,
};
pub use memory::{
    eps_from_fit, point_seed, run_memory_experiment, CyclePoint, DetectionTable, GammaFit, MemoryOutput, PointResult, ShotDecoder,
    TotalError,
};
pub use output::{write_json, write_table, Header};
pub use sweep::{run_lindblad_sweep, SweepOutput, SweepRow};

use crate::error::{Error, Result};

/// Run `f` on a pool of `workers` threads, or on the global pool when `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Config("workers must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
