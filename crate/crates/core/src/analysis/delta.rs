//! Delta statistics and kernel profiles on periodic probe inputs.
//!
//! Feeding sequences with controlled repetition periods and recording the
//! step-size gate shows how memory allocation reacts to input regularity;
//! the kernel profile shows how much each input position still influences
//! the final token.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::kernel::unroll_kernel;
use crate::mat::Mat;
use crate::model::ModelParams;
use crate::scan::{forward_opts, ForwardOptions, GateTrace, HiddenInit};
use crate::task::{gen_periodic, Vocab, PERIODIC_LEN};

/// Delta statistics for one repetition period, averaged over probe seeds.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodDeltaStats {
    pub period: usize,
    /// Mean delta over all layers, timesteps, channels, and seeds.
    pub global_mean: f64,
    /// Mean delta per layer and timestep (over channels and seeds).
    /// n_layers x sequence length.
    pub per_layer_position: Mat,
    /// Autocorrelation of each layer's (seed-averaged) delta series,
    /// lags 0..=max_lag.
    pub autocorr: Vec<Vec<f64>>,
    /// Autocorrelation at the lag equal to the period (when in range).
    pub autocorr_at_period: Vec<f64>,
}

/// Delta statistics across all requested periods.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeltaStats {
    pub periods: Vec<PeriodDeltaStats>,
    pub seeds: Vec<u64>,
}

/// Sample autocorrelation of `series` at lags 0..=max_lag.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        if var == 0.0 {
            out.push(if lag == 0 { 1.0 } else { 0.0 });
            continue;
        }
        let cov: f64 = (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum();
        out.push(cov / var);
    }
    out
}

/// Two-pass route: recompute per-layer/per-step delta means and the global
/// mean from a stored trace. Used as the oracle for the streaming route.
pub fn delta_stats_from_trace(trace: &GateTrace) -> (Vec<Vec<f64>>, f64) {
    let mut per_layer = Vec::with_capacity(trace.n_layers());
    let mut sum = 0.0;
    let mut count = 0usize;
    for lt in &trace.layers {
        let mut series = Vec::with_capacity(lt.steps.len());
        for step in &lt.steps {
            let s: f64 = step.gates.delta.iter().sum();
            series.push(s / step.gates.delta.len() as f64);
            sum += s;
            count += step.gates.delta.len();
        }
        per_layer.push(series);
    }
    (per_layer, if count == 0 { 0.0 } else { sum / count as f64 })
}

const AUTOCORR_MAX_LAG: usize = 32;

/// Record delta statistics on periodic probe sequences, streaming (no full
/// trace is materialized).
pub fn delta_period_scan(
    params: &ModelParams,
    vocab: &Vocab,
    periods: &[usize],
    seeds: &[u64],
) -> Result<DeltaStats> {
    let n_layers = params.config.n_layers;
    let mut out = Vec::with_capacity(periods.len());
    for &period in periods {
        let mut acc = Mat::zeros(n_layers, PERIODIC_LEN);
        let mut global_sum = 0.0;
        let mut global_count = 0usize;
        for &seed in seeds {
            let seq = gen_periodic(vocab, period, seed)?;
            let fwd = forward_opts(
                params,
                &seq.tokens,
                &ForwardOptions {
                    init: HiddenInit::Zero,
                    capture: false,
                    ablation: None,
                    delta_stats: true,
                },
            )?;
            let dt = fwd.delta.expect("delta stats requested");
            for (l, series) in dt.per_layer_step_mean.iter().enumerate() {
                for (t, &v) in series.iter().enumerate() {
                    *acc.at_mut(l, t) += v;
                }
            }
            global_sum += dt.sum;
            global_count += dt.count;
        }
        let scale = 1.0 / seeds.len() as f64;
        for v in acc.data_mut() {
            *v *= scale;
        }
        let mut autocorr = Vec::with_capacity(n_layers);
        let mut at_period = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let series: Vec<f64> = acc.row(l).to_vec();
            let ac = autocorrelation(&series, AUTOCORR_MAX_LAG);
            at_period.push(if period <= AUTOCORR_MAX_LAG {
                ac[period]
            } else {
                0.0
            });
            autocorr.push(ac);
        }
        out.push(PeriodDeltaStats {
            period,
            global_mean: if global_count == 0 {
                0.0
            } else {
                global_sum / global_count as f64
            },
            per_layer_position: acc,
            autocorr,
            autocorr_at_period: at_period,
        });
    }
    Ok(DeltaStats {
        periods: out,
        seeds: seeds.to_vec(),
    })
}

/// Mean absolute kernel weight from each input position to the final
/// token, averaged over layers, channels, and seeds; one profile per
/// period.
pub fn kernel_profile(
    params: &ModelParams,
    vocab: &Vocab,
    periods: &[usize],
    seeds: &[u64],
) -> Result<Vec<(usize, Vec<f64>)>> {
    let n_layers = params.config.n_layers;
    let d = params.config.d_model;
    let mut out = Vec::with_capacity(periods.len());
    for &period in periods {
        let mut profile = vec![0.0f64; PERIODIC_LEN];
        for &seed in seeds {
            let seq = gen_periodic(vocab, period, seed)?;
            let fwd = forward_opts(
                params,
                &seq.tokens,
                &ForwardOptions {
                    init: HiddenInit::Zero,
                    capture: true,
                    ablation: None,
                    delta_stats: false,
                },
            )?;
            let trace = fwd.trace.expect("trace requested");
            let t_last = PERIODIC_LEN - 1;
            for layer in 0..n_layers {
                for channel in 0..d {
                    let dec = unroll_kernel(&trace, layer, channel, t_last)?;
                    for term in &dec.terms {
                        profile[term.position] += term.weight.abs();
                    }
                }
            }
        }
        let scale = 1.0 / (seeds.len() * n_layers * d) as f64;
        for v in profile.iter_mut() {
            *v *= scale;
        }
        out.push((period, profile));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::scan::forward;

    fn setup() -> (ModelParams, Vocab) {
        let vocab = Vocab::synthetic(6, 4, 6, 4);
        let cfg = ModelConfig {
            vocab_size: vocab.token_count(),
            d_model: 4,
            n_state: 3,
            n_layers: 2,
            delta_rank: 2,
            seed: 61,
        };
        (ModelParams::init(&cfg).unwrap(), vocab)
    }

    #[test]
    fn input_independent_delta_is_flat_across_periods() {
        let (mut params, vocab) = setup();
        for lp in params.layers.iter_mut() {
            lp.w_delta_down.fill(0.0);
            for b in lp.b_delta.iter_mut() {
                *b = 0.25;
            }
        }
        let stats =
            delta_period_scan(&params, &vocab, &[2, 8, 64], &[1, 2]).unwrap();
        let expect = crate::gates::softplus(0.25);
        for ps in &stats.periods {
            assert!(
                (ps.global_mean - expect).abs() < 1e-12,
                "period {}: {} vs {}",
                ps.period,
                ps.global_mean,
                expect
            );
        }
    }

    #[test]
    fn streaming_matches_trace_recomputation() {
        let (params, vocab) = setup();
        let seq = gen_periodic(&vocab, 8, 5).unwrap();
        let fwd = forward_opts(
            &params,
            &seq.tokens,
            &ForwardOptions {
                init: HiddenInit::Zero,
                capture: true,
                ablation: None,
                delta_stats: true,
            },
        )
        .unwrap();
        let streaming = fwd.delta.unwrap();
        let (per_layer, global) = delta_stats_from_trace(&fwd.trace.unwrap());
        assert!((streaming.global_mean() - global).abs() < 1e-12);
        for (a, b) in streaming.per_layer_step_mean.iter().zip(&per_layer) {
            for (&x, &y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn autocorrelation_of_alternating_series_peaks_at_even_lags() {
        let series: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ac = autocorrelation(&series, 4);
        assert!((ac[0] - 1.0).abs() < 1e-12);
        assert!(ac[2] > 0.8);
        assert!(ac[1] < -0.8);
    }

    #[test]
    fn kernel_profile_matches_per_term_decomposition() {
        let (params, vocab) = setup();
        let profiles = kernel_profile(&params, &vocab, &[8], &[3]).unwrap();
        let (period, profile) = &profiles[0];
        assert_eq!(*period, 8);
        assert_eq!(profile.len(), PERIODIC_LEN);

        // Independent recomputation straight from the trace products.
        let seq = gen_periodic(&vocab, 8, 3).unwrap();
        let (_, trace) = forward(&params, &seq.tokens, &HiddenInit::Zero, true).unwrap();
        let trace = trace.unwrap();
        let t_last = PERIODIC_LEN - 1;
        let n = params.config.n_state;
        for j in [0usize, 13, 40, t_last] {
            let mut acc = 0.0;
            for layer in 0..2 {
                let lt = &trace.layers[layer];
                let c_t = &lt.steps[t_last].gates.c;
                for channel in 0..4 {
                    let mut w = 0.0;
                    for dim in 0..n {
                        let mut prod = 1.0;
                        for step in &lt.steps[j + 1..=t_last] {
                            prod *= step.gates.a_bar.at(channel, dim);
                        }
                        w += c_t[dim] * prod * lt.steps[j].gates.b_bar.at(channel, dim);
                    }
                    acc += w.abs();
                }
            }
            let expect = acc / 8.0;
            assert!(
                (profile[j] - expect).abs() < 1e-10,
                "position {j}: {} vs {expect}",
                profile[j]
            );
        }
    }

    #[test]
    fn profile_final_position_is_undamped() {
        // At j = T the product is empty, so the weight is just |c · b_bar|.
        let (params, vocab) = setup();
        let seq = gen_periodic(&vocab, 4, 9).unwrap();
        let (_, trace) = forward(&params, &seq.tokens, &HiddenInit::Zero, true).unwrap();
        let trace = trace.unwrap();
        let t_last = PERIODIC_LEN - 1;
        let profiles = kernel_profile(&params, &vocab, &[4], &[9]).unwrap();
        let mut expect = 0.0;
        for layer in 0..2 {
            let step = &trace.layers[layer].steps[t_last];
            for channel in 0..4 {
                expect += crate::mat::dot(&step.gates.c, step.gates.b_bar.row(channel)).abs();
            }
        }
        expect /= 8.0;
        assert!((profiles[0].1[t_last] - expect).abs() < 1e-12);
    }
}
