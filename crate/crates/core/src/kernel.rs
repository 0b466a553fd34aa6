//! Unrolled-kernel view of the recurrence.
//!
//! With zero initial state, the output of a channel at time `t` decomposes
//! into one term per input position:
//!
//! ```text
//! y_t[i] - D[i] x_t[i] = sum_{j<=t}  c_t · (prod_{k=j+1..t} a_bar_k[i]) ⊙ b_bar_j[i]  * x_j[i]
//! ```
//!
//! The scalar multiplying `x_j[i]` is the kernel weight of position `j`;
//! with constant gates it decays geometrically, which is the mechanical
//! source of recency. A non-zero initial state adds one extra term carrying
//! `h0` through the full gate product.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mat::dot;
use crate::scan::GateTrace;

/// One input position's contribution to a channel output.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTerm {
    /// 0-based input position `j`.
    pub position: usize,
    /// Kernel weight `c_t · (prod a_bar) ⊙ b_bar_j` for this channel.
    pub weight: f64,
    /// The channel input `x_j[i]` the weight multiplies.
    pub input: f64,
}

impl KernelTerm {
    /// Signed contribution `weight * input`.
    pub fn contribution(&self) -> f64 {
        self.weight * self.input
    }

    /// `|weight * input|`.
    pub fn magnitude(&self) -> f64 {
        self.contribution().abs()
    }
}

/// Per-position decomposition of one channel's output at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDecomposition {
    pub layer: usize,
    pub channel: usize,
    /// 0-based timestep the output is taken at.
    pub t: usize,
    /// One term per input position 0..=t.
    pub terms: Vec<KernelTerm>,
    /// Contribution of the initial state: `c_t · (prod_{k=0..t} a_bar_k) ⊙ h0`.
    /// Zero whenever the scan started from a zero state.
    pub init_term: f64,
}

impl KernelDecomposition {
    /// Reconstruction of `y_t[i] - D[i] x_t[i]`, i.e. `c_t · h_t[i]`.
    pub fn reconstructed(&self) -> f64 {
        self.init_term + self.terms.iter().map(KernelTerm::contribution).sum::<f64>()
    }
}

/// Decompose channel `channel` of `layer` at timestep `t` (0-based) into
/// per-position kernel terms using the captured trace.
///
/// The product over an empty index range is 1, so the term at `j = t` is
/// just `c_t · b_bar_t[i]`.
pub fn unroll_kernel(
    trace: &GateTrace,
    layer: usize,
    channel: usize,
    t: usize,
) -> Result<KernelDecomposition> {
    if trace.layers.is_empty() {
        return Err(Error::MissingTrace);
    }
    if layer >= trace.n_layers() {
        return Err(Error::TraceTooShort {
            requested: layer + 1,
            len: trace.n_layers(),
        });
    }
    let lt = &trace.layers[layer];
    if t >= lt.steps.len() {
        return Err(Error::TraceTooShort {
            requested: t + 1,
            len: lt.steps.len(),
        });
    }
    let n = lt.h0.cols();
    let c_t = &lt.steps[t].gates.c;

    // Walk j from t down to 0, extending the suffix product as we go.
    let mut suffix = vec![1.0; n];
    let mut terms = vec![
        KernelTerm {
            position: 0,
            weight: 0.0,
            input: 0.0,
        };
        t + 1
    ];
    for j in (0..=t).rev() {
        let step = &lt.steps[j];
        let bb = step.gates.b_bar.row(channel);
        let mut w = 0.0;
        for k in 0..n {
            w += c_t[k] * suffix[k] * bb[k];
        }
        terms[j] = KernelTerm {
            position: j,
            weight: w,
            input: step.x[channel],
        };
        let ab = step.gates.a_bar.row(channel);
        for (s, &a) in suffix.iter_mut().zip(ab) {
            *s *= a;
        }
    }
    // suffix now holds prod_{k=0..t} a_bar_k for this channel.
    let h0 = lt.h0.row(channel);
    let init_term = (0..n).map(|k| c_t[k] * suffix[k] * h0[k]).sum();

    Ok(KernelDecomposition {
        layer,
        channel,
        t,
        terms,
        init_term,
    })
}

/// `c_t · h_t[channel]` read directly from the trace; the target the
/// decomposition must reconstruct.
pub fn traced_state_readout(trace: &GateTrace, layer: usize, channel: usize, t: usize) -> f64 {
    let step = &trace.layers[layer].steps[t];
    dot(&step.gates.c, step.h.row(channel))
}
