//! Shared fixtures for the pipeline benchmarks.

use tiersense::{generate_trace, Trace, TraceSpec};

/// A generated trace of `minutes` minutes with the reference activity mix.
pub fn fixture_trace(minutes: f64, seed: u64) -> Trace {
    let spec = TraceSpec {
        duration_min: minutes,
        fall_count: (minutes / 30.0).ceil() as u32,
        ..TraceSpec::reference()
    };
    generate_trace(&spec, seed).expect("valid fixture spec")
}
