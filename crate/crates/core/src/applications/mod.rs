//! Uses of the solver beyond forward solves: equation discovery from an
//! analytic derivative dictionary, source recovery through a prefactored
//! forward map, learnable bandwidths and bandwidth sweeps.

pub mod adam;
pub mod bandwidth;
pub mod caching;
pub mod dictionary;
pub mod discovery;
pub mod inverse;
pub mod lasso;
pub mod sweep;

pub use adam::{Adam, AdamConfig};
pub use bandwidth::{optimize_bandwidth, BandwidthConfig, BandwidthOutcome, BandwidthParam, BandwidthState};
pub use caching::{cache_benchmark, CacheBenchConfig, CacheBenchReport};
pub use dictionary::{build_dictionary, build_dictionary_with_axes, Dictionary, Term};
pub use discovery::{run_oscillator, OscillatorConfig, OscillatorReport};
pub use inverse::{
    inverse_solve, run_source_demo, ForwardModel, ForwardSpec, InverseConfig, InverseOutcome, InverseProblem,
    SourceDemoConfig, SourceDemoReport,
};
pub use lasso::{discover, lasso_path, Discovery, DiscoveryConfig, LassoConfig, LassoPath};
pub use sweep::{sigma_sweep, summarize, SweepOptions, SweepPoint, SweepRecord, DEFAULT_SIGMA_GRID};
