//! Perfect L_p sampling (0 < p < 2) over turnstile streams with
//! polylogarithmic per-update work.
//!
//! A turnstile stream of signed integer updates implicitly defines a
//! vector x; a perfect L_p sampler returns index i with probability
//! |x_i|^p / ‖x‖_p^p (or the failure symbol ⊥), with no dependence of the
//! conditional law on the vector beyond those weights. The classic route
//! scales every coordinate by inverse exponentials and hunts the maximum;
//! making that *perfect* requires conceptually duplicating each
//! coordinate a polynomial number of times, which naive implementations
//! pay for with polynomial update time.
//!
//! This crate simulates the duplicated limit directly: per coordinate it
//! samples the top-τ order statistics of the limiting scaling process
//! (exponential arrival times of a Poisson point process) and the
//! aggregate squared tail from its exact limiting law via
//! characteristic-function inversion, then feeds both into a dense
//! Gaussian CountSketch. Per-update work is a fixed number of tape
//! derivations, polylogarithmic in the dimension.
//!
//! Modules follow the pipeline: [`tape`] (deterministic keyed
//! randomness), [`gamma`] (complex incomplete gamma), [`cf`] (limiting
//! characteristic function), [`cdf`] (quadrature CDF oracle),
//! [`samplers`] (head/tail simulation), [`sketch`] (dense Gaussian
//! CountSketch), [`pipeline`] (the full sampler), [`harness`]
//! (independent oracles and statistics), [`stream`] (the text stream
//! format) and [`suites`] (verification suites used by the CLI and the
//! acceptance tests).

pub mod cdf;
pub mod cf;
pub mod gamma;
pub mod harness;
pub mod pipeline;
pub mod samplers;
pub mod sketch;
pub mod stream;
pub mod suites;
pub mod tape;

pub use cdf::{evaluate_cdf, CdfEvaluator, QuadratureConfig};
pub use cf::{cf, gil_pelaez_integrand, log_cf, TailLawParams};
pub use gamma::{gamma_negative, h_function, upper_gamma};
pub use pipeline::{
    run_stream, statistical_test, PerfectLpSampler, SampleOutcome, SamplerConfig, SamplerError,
};
pub use samplers::{
    sample_head, sample_head_ppp_region, sample_tail_sum, HeadStatistics, TailAggregate,
};
pub use sketch::{SketchConfig, SketchState, VirtualIndex};
pub use stream::StreamFile;
pub use tape::RandomTape;
