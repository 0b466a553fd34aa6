//! `ssmlab selftest` — a quick battery of internal consistency checks.
//! Exit code 2 if any check fails.

use anyhow::anyhow;
use rand::Rng;

use ssmlab_core::analysis::memory_coefficients;
use ssmlab_core::kernel::{traced_state_readout, unroll_kernel};
use ssmlab_core::scan::{forward, HiddenInit};
use ssmlab_core::task::{gen_dataset, gen_periodic, RelationMode, Vocab};
use ssmlab_core::{rng, ModelConfig, ModelParams};

use crate::{CmdError, CmdResult};

fn check(name: &str, ok: bool, detail: String, all_ok: &mut bool) {
    println!("{} {name}{}", if ok { "PASS" } else { "FAIL" }, if detail.is_empty() {
        String::new()
    } else {
        format!(" — {detail}")
    });
    *all_ok &= ok;
}

pub fn run() -> CmdResult<()> {
    let mut all_ok = true;

    // Scan/kernel agreement on random configurations.
    {
        let mut worst = 0.0f64;
        for seed in 0..20u64 {
            let mut r = rng::seeded(seed);
            let d_model = r.gen_range(1..=8);
            let cfg = ModelConfig {
                vocab_size: 16,
                d_model,
                n_state: r.gen_range(1..=8),
                n_layers: r.gen_range(1..=3),
                delta_rank: 2.min(d_model),
                seed,
            };
            let params = ModelParams::init(&cfg).map_err(CmdError::from)?;
            let len = r.gen_range(2..=32);
            let tokens: Vec<u32> = (0..len).map(|_| r.gen_range(0..16)).collect();
            let (_, trace) =
                forward(&params, &tokens, &HiddenInit::Zero, true).map_err(CmdError::from)?;
            let trace = trace.expect("trace");
            for layer in 0..cfg.n_layers {
                for channel in 0..cfg.d_model {
                    let dec = unroll_kernel(&trace, layer, channel, len - 1)
                        .map_err(CmdError::from)?;
                    let target = traced_state_readout(&trace, layer, channel, len - 1);
                    worst = worst.max((dec.reconstructed() - target).abs());
                }
            }
        }
        check(
            "scan/kernel agreement (20 random configs)",
            worst < 1e-8,
            format!("max abs err {worst:.3e}"),
            &mut all_ok,
        );
    }

    // Gate ranges.
    {
        let cfg = ModelConfig {
            vocab_size: 16,
            d_model: 6,
            n_state: 5,
            n_layers: 2,
            delta_rank: 3,
            seed: 9,
        };
        let params = ModelParams::init(&cfg).map_err(CmdError::from)?;
        let tokens: Vec<u32> = (0..24).map(|i| (i * 7 % 16) as u32).collect();
        let (_, trace) =
            forward(&params, &tokens, &HiddenInit::Zero, true).map_err(CmdError::from)?;
        let trace = trace.expect("trace");
        let ok = trace.layers.iter().all(|lt| {
            lt.steps.iter().all(|s| {
                s.gates.delta.iter().all(|&d| d > 0.0)
                    && s.gates.a_bar.data().iter().all(|&a| a > 0.0 && a < 1.0)
            })
        });
        check("gate ranges (delta > 0, a_bar in (0,1))", ok, String::new(), &mut all_ok);

        // Memory-coefficient closed form on a constant-gate trace.
        let mut fixed = trace.clone();
        for lt in fixed.layers.iter_mut() {
            for step in lt.steps.iter_mut() {
                step.gates.a_bar.fill(0.9);
            }
        }
        let coeffs = memory_coefficients(&fixed, 11).map_err(CmdError::from)?;
        let ok = coeffs
            .iter()
            .all(|m| m.values.iter().all(|&v| (v - 0.3486784401f64).abs() < 1e-12));
        check(
            "memory coefficient closed form (0.9^10)",
            ok,
            String::new(),
            &mut all_ok,
        );
        let ones = memory_coefficients(&fixed, 1).map_err(CmdError::from)?;
        check(
            "empty-product convention (T=1 gives all ones)",
            ones.iter().all(|m| m.values.iter().all(|&v| v == 1.0)),
            String::new(),
            &mut all_ok,
        );

        // Determinism.
        let (a, _) = forward(&params, &tokens, &HiddenInit::Zero, false).map_err(CmdError::from)?;
        let (b, _) = forward(&params, &tokens, &HiddenInit::Zero, false).map_err(CmdError::from)?;
        check("forward determinism", a == b, String::new(), &mut all_ok);
    }

    // Task generator contracts.
    {
        let vocab = Vocab::synthetic(12, 10, 14, 8);
        let mut ok = true;
        let mut seen = std::collections::HashSet::new();
        for seed in 0..4u64 {
            let ds = gen_dataset(&vocab, &[8], 5, RelationMode::Repeated, seed)
                .map_err(CmdError::from)?;
            for inst in &ds {
                ok &= seen.insert(inst.tokens());
                let triples = inst.parse_triples(vocab.separator);
                ok &= triples[inst.target_position - 1].2 == inst.gold_object;
            }
        }
        check(
            "task generator uniqueness and gold consistency",
            ok,
            String::new(),
            &mut all_ok,
        );

        let mut ok = true;
        for &k in &[2usize, 8, 64] {
            let s = gen_periodic(&vocab, k, 3).map_err(CmdError::from)?;
            ok &= s.satisfies_period();
        }
        check("periodic sequences satisfy their period", ok, String::new(), &mut all_ok);
    }

    if all_ok {
        println!("selftest: all checks passed");
        Ok(())
    } else {
        Err(CmdError::Numeric(anyhow!("selftest found failing checks")))
    }
}
