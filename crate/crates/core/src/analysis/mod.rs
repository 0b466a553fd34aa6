//! The analysis battery: memory coefficients, long-term-memory channel
//! identification, causal gate ablations, positional-accuracy evaluation,
//! and delta/kernel statistics on periodic inputs.

mod delta;
mod eval;
mod intervene;
mod ltm;

pub use delta::{
    autocorrelation, delta_period_scan, delta_stats_from_trace, kernel_profile, DeltaStats,
    PeriodDeltaStats,
};
pub use eval::{
    distractor_sweep, eval_recall_curve, wilson_interval, Condition, PositionalAccuracy,
};
pub use intervene::{
    intervene_forward, resolve_intervention, InterventionMode, InterventionSpec,
};
pub use ltm::{identify_ltm, LtmChannel, LtmReport, ProbeMode};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scan::GateTrace;

/// Retention measure of one channel: the elementwise product of its
/// discretized state gates over timesteps 2..=T. Values near 1 mean the
/// earliest input survives to the end of the context.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemoryCoefficient {
    pub layer: usize,
    pub channel: usize,
    /// One entry per state dimension, each in [0, 1].
    pub values: Vec<f64>,
    /// 1-based count of context timesteps the product covers.
    pub t_end: usize,
}

/// Memory coefficients for every (layer, channel) of a trace.
///
/// `t_end` is the 1-based final context timestep; the product starts at the
/// second timestep, so `t_end = 1` gives the empty product (all ones).
pub fn memory_coefficients(trace: &GateTrace, t_end: usize) -> Result<Vec<MemoryCoefficient>> {
    if trace.layers.is_empty() {
        return Err(Error::MissingTrace);
    }
    if t_end < 1 {
        return Err(Error::InvalidConfig {
            reason: alloc::format!("t_end must be >= 1"),
        });
    }
    if t_end > trace.len() {
        return Err(Error::TraceTooShort {
            requested: t_end,
            len: trace.len(),
        });
    }
    let mut out = Vec::new();
    for (layer, lt) in trace.layers.iter().enumerate() {
        let d = lt.h0.rows();
        let n = lt.h0.cols();
        for channel in 0..d {
            let mut values = vec![1.0; n];
            for step in &lt.steps[1..t_end] {
                let row = step.gates.a_bar.row(channel);
                for (v, &a) in values.iter_mut().zip(row) {
                    *v *= a;
                }
            }
            out.push(MemoryCoefficient {
                layer,
                channel,
                values,
                t_end,
            });
        }
    }
    Ok(out)
}
