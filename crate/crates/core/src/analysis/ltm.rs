//! Identification of long-term-memory channels.
//!
//! A channel's LTM probability is the fraction of its state dimensions
//! whose memory coefficient reaches the threshold `tau`; the channel
//! qualifies when that probability strictly exceeds the cut-off `p`.
//! With `tau = 1` nothing qualifies (gates are strictly below one).

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::memory_coefficients;
use crate::error::{Error, Result};
use crate::scan::GateTrace;

/// Which traces feed the identification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ProbeMode {
    /// Memory coefficients averaged elementwise over a probe set; the
    /// default, more stable than a single sample.
    Averaged,
    /// Use only the first trace.
    Single,
}

/// One qualifying channel.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LtmChannel {
    pub channel: usize,
    /// Fraction of state dimensions with memory coefficient >= tau.
    pub probability: f64,
}

/// Long-term-memory identification result.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LtmReport {
    pub tau: f64,
    pub p: f64,
    pub t_end: usize,
    pub probe_mode: ProbeMode,
    pub n_traces: usize,
    /// Qualifying channels per layer, sorted by probability descending
    /// (channel index breaks ties).
    pub per_layer: Vec<Vec<LtmChannel>>,
}

impl LtmReport {
    /// Number of qualifying channels in each layer.
    pub fn densities(&self) -> Vec<usize> {
        self.per_layer.iter().map(Vec::len).collect()
    }

    /// Layers ranked by density descending (layer index breaks ties),
    /// truncated to `n`.
    pub fn top_layers(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.per_layer.len()).collect();
        order.sort_by(|&a, &b| {
            self.per_layer[b]
                .len()
                .cmp(&self.per_layer[a].len())
                .then(a.cmp(&b))
        });
        order.truncate(n);
        order
    }

    /// All qualifying (layer, channel) pairs.
    pub fn selected_set(&self) -> BTreeSet<(usize, usize)> {
        self.per_layer
            .iter()
            .enumerate()
            .flat_map(|(l, chs)| chs.iter().map(move |c| (l, c.channel)))
            .collect()
    }

    /// Qualifying channels restricted to the `top_n` densest layers, in
    /// the `(layer, channels)` form interventions take.
    pub fn targets(&self, top_n: usize) -> Vec<(usize, Vec<usize>)> {
        self.top_layers(top_n)
            .into_iter()
            .map(|l| {
                let mut chs: Vec<usize> =
                    self.per_layer[l].iter().map(|c| c.channel).collect();
                chs.sort_unstable();
                (l, chs)
            })
            .collect()
    }

    /// Total number of qualifying channels across all layers.
    pub fn total_channels(&self) -> usize {
        self.per_layer.iter().map(Vec::len).sum()
    }
}

/// Identify channels whose memory coefficients mark them as long-term
/// memory, per layer.
///
/// All traces must cover at least `t_end` steps and share layer count and
/// shapes. `tau` and `p` must lie in [0, 1].
pub fn identify_ltm(
    traces: &[GateTrace],
    t_end: usize,
    tau: f64,
    p: f64,
    probe_mode: ProbeMode,
) -> Result<LtmReport> {
    if traces.is_empty() {
        return Err(Error::EmptyInput { what: "trace set" });
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidThreshold {
            name: "tau",
            value: tau,
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidThreshold { name: "p", value: p });
    }
    let probe: &[GateTrace] = match probe_mode {
        ProbeMode::Averaged => traces,
        ProbeMode::Single => &traces[..1],
    };

    let n_layers = probe[0].n_layers();
    let d = probe[0].layers[0].h0.rows();
    let n = probe[0].layers[0].h0.cols();

    // Elementwise average of memory coefficients over the probe set.
    let mut avg = vec![vec![vec![0.0f64; n]; d]; n_layers];
    for trace in probe {
        let coeffs = memory_coefficients(trace, t_end)?;
        for mc in coeffs {
            if mc.layer >= n_layers || mc.channel >= d || mc.values.len() != n {
                return Err(Error::ConditionMismatch {
                    reason: alloc::format!("traces disagree on model shape"),
                });
            }
            for (acc, &v) in avg[mc.layer][mc.channel].iter_mut().zip(&mc.values) {
                *acc += v;
            }
        }
    }
    let scale = 1.0 / probe.len() as f64;

    let mut per_layer = Vec::with_capacity(n_layers);
    for layer_avg in &avg {
        let mut selected: Vec<LtmChannel> = Vec::new();
        for (channel, values) in layer_avg.iter().enumerate() {
            let hits = values.iter().filter(|&&v| v * scale >= tau).count();
            let probability = hits as f64 / n as f64;
            if probability > p {
                selected.push(LtmChannel {
                    channel,
                    probability,
                });
            }
        }
        selected.sort_by(|a, b| {
            b.probability
                .partial_cmp(&a.probability)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.channel.cmp(&b.channel))
        });
        per_layer.push(selected);
    }

    Ok(LtmReport {
        tau,
        p,
        t_end,
        probe_mode,
        n_traces: probe.len(),
        per_layer,
    })
}
