//! Structured recall tasks and periodic probe sequences.
//!
//! An instance is a context of `L` subject–relation–object triples (each
//! closed by a separator token) followed by a query `s_k r_k`; the model
//! must produce `o_k`. Subjects and objects never repeat within one
//! context. Distractor tokens, when requested, sit between the context and
//! the query. The vocabulary is closed and every term is a single token by
//! construction.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub type TokenId = u32;

/// Length of every periodic probe sequence.
pub const PERIODIC_LEN: usize = 64;
/// Valid repetition periods; the maximum means "fully random".
pub const VALID_PERIODS: [usize; 6] = [2, 4, 8, 16, 32, 64];
/// Retry budget for uniqueness rejection sampling.
pub const UNIQUENESS_RETRY_CAP: usize = 1000;

/// Closed single-token vocabulary with disjoint pools.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vocab {
    pub subjects: Vec<TokenId>,
    pub relations: Vec<TokenId>,
    pub objects: Vec<TokenId>,
    pub separator: TokenId,
    pub distractor_pool: Vec<TokenId>,
    pub query_marker: Option<TokenId>,
}

impl Vocab {
    /// Contiguously numbered synthetic vocabulary:
    /// separator, subjects, relations, objects, distractors.
    pub fn synthetic(
        n_subjects: usize,
        n_relations: usize,
        n_objects: usize,
        n_distractors: usize,
    ) -> Vocab {
        let mut next = 0u32;
        let mut take = |n: usize| -> Vec<TokenId> {
            let ids = (next..next + n as u32).collect();
            next += n as u32;
            ids
        };
        let separator = {
            let s = take(1);
            s[0]
        };
        Vocab {
            separator,
            subjects: take(n_subjects),
            relations: take(n_relations),
            objects: take(n_objects),
            distractor_pool: take(n_distractors),
            query_marker: None,
        }
    }

    /// Smallest model vocabulary size that covers every id.
    pub fn token_count(&self) -> usize {
        let mut max = self.separator;
        for pool in [
            &self.subjects,
            &self.relations,
            &self.objects,
            &self.distractor_pool,
        ] {
            for &t in pool {
                max = max.max(t);
            }
        }
        if let Some(q) = self.query_marker {
            max = max.max(q);
        }
        max as usize + 1
    }

    /// Pools must be pairwise disjoint and disjoint from the separator and
    /// query marker.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeSet<TokenId> = BTreeSet::new();
        let mut insert = |t: TokenId| -> Result<()> {
            if !seen.insert(t) {
                return Err(Error::InvalidConfig {
                    reason: alloc::format!("token id {t} appears in more than one vocabulary pool"),
                });
            }
            Ok(())
        };
        insert(self.separator)?;
        if let Some(q) = self.query_marker {
            insert(q)?;
        }
        for pool in [
            &self.subjects,
            &self.relations,
            &self.objects,
            &self.distractor_pool,
        ] {
            for &t in pool {
                insert(t)?;
            }
        }
        Ok(())
    }

    /// Subjects, relations and objects together; the pool periodic probe
    /// sequences draw from.
    pub fn content_pool(&self) -> Vec<TokenId> {
        let mut pool = Vec::new();
        pool.extend_from_slice(&self.subjects);
        pool.extend_from_slice(&self.relations);
        pool.extend_from_slice(&self.objects);
        pool
    }
}

/// How relation tokens are chosen across the context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RelationMode {
    /// All triples share one relation token.
    Repeated,
    /// Each triple gets a distinct relation token.
    Random,
}

impl RelationMode {
    pub fn label(&self) -> &'static str {
        match self {
            RelationMode::Repeated => "repeated",
            RelationMode::Random => "random",
        }
    }
}

/// One recall problem: context triples, query, and gold answer.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecallInstance {
    pub context_tokens: Vec<TokenId>,
    /// Distractors (if any) followed by `s_k r_k`.
    pub query_tokens: Vec<TokenId>,
    pub gold_object: TokenId,
    /// 1-based position of the queried triple.
    pub target_position: usize,
    /// Number of triples in the context.
    pub depth: usize,
    pub relation_mode: RelationMode,
    pub n_distractors: usize,
    pub rng_seed: u64,
}

impl RecallInstance {
    /// Full input sequence fed to the model.
    pub fn tokens(&self) -> Vec<TokenId> {
        let mut t = self.context_tokens.clone();
        t.extend_from_slice(&self.query_tokens);
        t
    }

    /// 0-based index of the last input position; the logits there predict
    /// the answer.
    pub fn answer_index(&self) -> usize {
        self.context_tokens.len() + self.query_tokens.len() - 1
    }

    /// Number of context timesteps (prior to any distractor or query
    /// token); the `T` used for memory coefficients.
    pub fn context_len(&self) -> usize {
        self.context_tokens.len()
    }

    /// 0-based token span of the first triple including its separator.
    pub fn first_triple_span(&self) -> Vec<usize> {
        (0..4.min(self.context_tokens.len())).collect()
    }

    /// Re-parse the context into (subject, relation, object) triples.
    pub fn parse_triples(&self, separator: TokenId) -> Vec<(TokenId, TokenId, TokenId)> {
        self.context_tokens
            .split(|&t| t == separator)
            .filter(|chunk| chunk.len() == 3)
            .map(|chunk| (chunk[0], chunk[1], chunk[2]))
            .collect()
    }
}

/// Generate one instance. Deterministic under `seed`.
///
/// Subjects/objects, relations, and distractors draw from independent
/// derived streams: the two relation modes share identical triples for a
/// fixed seed, and changing `n_distractors` never changes the triples.
pub fn gen_instance(
    vocab: &Vocab,
    depth: usize,
    k: usize,
    mode: RelationMode,
    n_distractors: usize,
    seed: u64,
) -> Result<RecallInstance> {
    if depth == 0 {
        return Err(Error::InvalidConfig {
            reason: alloc::format!("depth must be >= 1"),
        });
    }
    if k < 1 || k > depth {
        return Err(Error::InvalidConfig {
            reason: alloc::format!("target position {k} outside [1, {depth}]"),
        });
    }
    if vocab.subjects.len() < depth {
        return Err(Error::VocabTooSmall {
            pool: "subjects",
            needed: depth,
            available: vocab.subjects.len(),
        });
    }
    if vocab.objects.len() < depth {
        return Err(Error::VocabTooSmall {
            pool: "objects",
            needed: depth,
            available: vocab.objects.len(),
        });
    }
    let needed_relations = match mode {
        RelationMode::Repeated => 1,
        RelationMode::Random => depth,
    };
    if vocab.relations.len() < needed_relations {
        return Err(Error::VocabTooSmall {
            pool: "relations",
            needed: needed_relations,
            available: vocab.relations.len(),
        });
    }
    if n_distractors > 0 && vocab.distractor_pool.is_empty() {
        return Err(Error::VocabTooSmall {
            pool: "distractor_pool",
            needed: 1,
            available: 0,
        });
    }

    let mut rng_triples = rng::stream_rng(seed, stream::TRIPLES);
    let subjects: Vec<TokenId> = sample(&mut rng_triples, vocab.subjects.len(), depth)
        .iter()
        .map(|i| vocab.subjects[i])
        .collect();
    let objects: Vec<TokenId> = sample(&mut rng_triples, vocab.objects.len(), depth)
        .iter()
        .map(|i| vocab.objects[i])
        .collect();

    let mut rng_rel = rng::stream_rng(seed, stream::RELATIONS);
    let relations: Vec<TokenId> = match mode {
        RelationMode::Repeated => {
            let r = vocab.relations[rng_rel.gen_range(0..vocab.relations.len())];
            alloc::vec![r; depth]
        }
        RelationMode::Random => sample(&mut rng_rel, vocab.relations.len(), depth)
            .iter()
            .map(|i| vocab.relations[i])
            .collect(),
    };

    let mut context_tokens = Vec::with_capacity(depth * 4);
    for j in 0..depth {
        context_tokens.push(subjects[j]);
        context_tokens.push(relations[j]);
        context_tokens.push(objects[j]);
        context_tokens.push(vocab.separator);
    }

    let mut rng_dist = rng::stream_rng(seed, stream::DISTRACTORS);
    let mut query_tokens = Vec::with_capacity(n_distractors + 3);
    for _ in 0..n_distractors {
        let idx = rng_dist.gen_range(0..vocab.distractor_pool.len());
        query_tokens.push(vocab.distractor_pool[idx]);
    }
    if let Some(q) = vocab.query_marker {
        query_tokens.push(q);
    }
    query_tokens.push(subjects[k - 1]);
    query_tokens.push(relations[k - 1]);

    Ok(RecallInstance {
        context_tokens,
        query_tokens,
        gold_object: objects[k - 1],
        target_position: k,
        depth,
        relation_mode: mode,
        n_distractors,
        rng_seed: seed,
    })
}

fn instance_seed(seed: u64, depth: usize, k: usize, sample_idx: usize, retry: usize) -> u64 {
    rng::mix_many(
        seed,
        &[
            stream::DATASET,
            depth as u64,
            k as u64,
            sample_idx as u64,
            retry as u64,
        ],
    )
}

/// Generate `samples_per_position` instances for every position of every
/// requested depth. All instances are unique as token sequences; rejection
/// sampling retries up to [`UNIQUENESS_RETRY_CAP`] times per slot.
pub fn gen_dataset(
    vocab: &Vocab,
    depths: &[usize],
    samples_per_position: usize,
    mode: RelationMode,
    seed: u64,
) -> Result<Vec<RecallInstance>> {
    gen_dataset_with_distractors(vocab, depths, samples_per_position, mode, 0, seed)
}

/// [`gen_dataset`] with a fixed distractor count per instance.
pub fn gen_dataset_with_distractors(
    vocab: &Vocab,
    depths: &[usize],
    samples_per_position: usize,
    mode: RelationMode,
    n_distractors: usize,
    seed: u64,
) -> Result<Vec<RecallInstance>> {
    if samples_per_position == 0 {
        return Err(Error::InvalidConfig {
            reason: alloc::format!("samples_per_position must be >= 1"),
        });
    }
    let mut seen: BTreeSet<Vec<TokenId>> = BTreeSet::new();
    let mut out = Vec::new();
    for &depth in depths {
        for k in 1..=depth {
            for s in 0..samples_per_position {
                let mut accepted = false;
                for retry in 0..UNIQUENESS_RETRY_CAP {
                    let inst = gen_instance(
                        vocab,
                        depth,
                        k,
                        mode,
                        n_distractors,
                        instance_seed(seed, depth, k, s, retry),
                    )?;
                    if seen.insert(inst.tokens()) {
                        out.push(inst);
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::UniquenessExhausted {
                        retries: UNIQUENESS_RETRY_CAP,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// A length-64 probe sequence where one token repeats every `period`
/// positions; the remaining slots are uniform draws from the content pool
/// excluding the repeated token. `period = 64` pins only position 0, i.e.
/// the sequence is fully random.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodicSequence {
    pub tokens: Vec<TokenId>,
    pub period: usize,
    pub rng_seed: u64,
}

impl PeriodicSequence {
    /// True when every forced slot carries the same token.
    pub fn satisfies_period(&self) -> bool {
        let repeated = self.tokens[0];
        self.tokens
            .iter()
            .step_by(self.period)
            .all(|&t| t == repeated)
    }
}

/// Generate a periodic probe sequence. Deterministic under `seed`.
pub fn gen_periodic(vocab: &Vocab, period: usize, seed: u64) -> Result<PeriodicSequence> {
    if !VALID_PERIODS.contains(&period) {
        return Err(Error::InvalidPeriod { period });
    }
    let pool = vocab.content_pool();
    if pool.len() < 2 {
        return Err(Error::VocabTooSmall {
            pool: "content",
            needed: 2,
            available: pool.len(),
        });
    }
    let mut r = rng::stream_rng(seed, stream::PERIODIC);
    let rep_idx = r.gen_range(0..pool.len());
    let repeated = pool[rep_idx];
    let mut tokens = Vec::with_capacity(PERIODIC_LEN);
    for t in 0..PERIODIC_LEN {
        if t % period == 0 {
            tokens.push(repeated);
        } else {
            // Skip-one remap keeps the draw count fixed while excluding
            // the repeated token.
            let mut idx = r.gen_range(0..pool.len() - 1);
            if idx >= rep_idx {
                idx += 1;
            }
            tokens.push(pool[idx]);
        }
    }
    Ok(PeriodicSequence {
        tokens,
        period,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::synthetic(8, 6, 8, 4)
    }

    #[test]
    fn synthetic_vocab_is_disjoint_and_contiguous() {
        let v = vocab();
        v.validate().unwrap();
        assert_eq!(v.token_count(), 1 + 8 + 6 + 8 + 4);
        assert_eq!(v.separator, 0);
    }

    #[test]
    fn repeated_mode_mirrors_the_expected_shape() {
        // L=2, k=1: context "s1 r o1 . s2 r o2 ." query "s1 r".
        let v = vocab();
        let inst = gen_instance(&v, 2, 1, RelationMode::Repeated, 0, 9).unwrap();
        assert_eq!(inst.context_tokens.len(), 8);
        assert_eq!(inst.query_tokens.len(), 2);
        let triples = inst.parse_triples(v.separator);
        assert_eq!(triples.len(), 2);
        assert_eq!(triples[0].1, triples[1].1, "relations must repeat");
        assert_eq!(inst.query_tokens[0], triples[0].0);
        assert_eq!(inst.query_tokens[1], triples[0].1);
        assert_eq!(inst.gold_object, triples[0].2);
    }

    #[test]
    fn no_distractors_means_query_follows_context() {
        let v = vocab();
        let inst = gen_instance(&v, 3, 2, RelationMode::Random, 0, 4).unwrap();
        assert_eq!(inst.tokens().len(), 3 * 4 + 2);
        assert_eq!(inst.answer_index(), 3 * 4 + 2 - 1);
    }

    #[test]
    fn modes_share_triples_and_differ_only_in_relations() {
        let v = vocab();
        for seed in [1u64, 7, 23] {
            let rep = gen_instance(&v, 4, 2, RelationMode::Repeated, 3, seed).unwrap();
            let rnd = gen_instance(&v, 4, 2, RelationMode::Random, 3, seed).unwrap();
            let rep_triples = rep.parse_triples(v.separator);
            let rnd_triples = rnd.parse_triples(v.separator);
            for (a, b) in rep_triples.iter().zip(&rnd_triples) {
                assert_eq!(a.0, b.0, "subjects must match across modes");
                assert_eq!(a.2, b.2, "objects must match across modes");
            }
            assert_eq!(rep.gold_object, rnd.gold_object);
            // Distractors live on their own stream.
            assert_eq!(
                rep.query_tokens[..3],
                rnd.query_tokens[..3],
                "distractors must match across modes"
            );
        }
    }

    #[test]
    fn subjects_and_objects_never_repeat_within_context() {
        let v = vocab();
        for seed in 0..20u64 {
            let inst = gen_instance(&v, 6, 3, RelationMode::Random, 0, seed).unwrap();
            let triples = inst.parse_triples(v.separator);
            let subs: BTreeSet<_> = triples.iter().map(|t| t.0).collect();
            let objs: BTreeSet<_> = triples.iter().map(|t| t.2).collect();
            assert_eq!(subs.len(), 6);
            assert_eq!(objs.len(), 6);
        }
    }

    #[test]
    fn distractors_come_from_their_own_pool() {
        let v = vocab();
        let inst = gen_instance(&v, 4, 4, RelationMode::Repeated, 16, 2).unwrap();
        for &t in &inst.query_tokens[..16] {
            assert!(v.distractor_pool.contains(&t));
        }
    }

    #[test]
    fn changing_distractor_count_preserves_triples() {
        let v = vocab();
        let a = gen_instance(&v, 4, 1, RelationMode::Repeated, 0, 5).unwrap();
        let b = gen_instance(&v, 4, 1, RelationMode::Repeated, 7, 5).unwrap();
        assert_eq!(a.context_tokens, b.context_tokens);
        assert_eq!(a.gold_object, b.gold_object);
        assert_eq!(b.query_tokens.len(), 7 + 2);
        assert_eq!(a.query_tokens[..], b.query_tokens[7..]);
    }

    #[test]
    fn dataset_has_expected_count_and_positions() {
        let v = vocab();
        let ds = gen_dataset(&v, &[2], 1, RelationMode::Repeated, 3).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].target_position, 1);
        assert_eq!(ds[1].target_position, 2);
    }

    #[test]
    fn vocab_too_small_is_reported() {
        let v = vocab();
        let err = gen_instance(&v, 9, 1, RelationMode::Repeated, 0, 0).unwrap_err();
        assert!(matches!(err, Error::VocabTooSmall { pool: "subjects", .. }));
        let err = gen_instance(&v, 7, 1, RelationMode::Random, 0, 0).unwrap_err();
        assert!(matches!(err, Error::VocabTooSmall { pool: "relations", .. }));
    }

    #[test]
    fn periodic_sequences_obey_their_period() {
        let v = vocab();
        for &k in &VALID_PERIODS {
            let s = gen_periodic(&v, k, 31).unwrap();
            assert_eq!(s.tokens.len(), PERIODIC_LEN);
            assert!(s.satisfies_period());
            if k < PERIODIC_LEN {
                // Off-slot tokens never equal the repeated token, so the
                // forced structure is exact.
                let rep = s.tokens[0];
                for (t, &tok) in s.tokens.iter().enumerate() {
                    assert_eq!(tok == rep, t % k == 0, "slot {t}");
                }
            }
        }
    }

    #[test]
    fn period_two_repeats_at_every_second_slot() {
        let v = vocab();
        let s = gen_periodic(&v, 2, 8).unwrap();
        let rep = s.tokens[0];
        for t in (0..PERIODIC_LEN).step_by(2) {
            assert_eq!(s.tokens[t], rep);
        }
    }

    #[test]
    fn different_seeds_differ_but_both_satisfy_predicate() {
        let v = vocab();
        let a = gen_periodic(&v, 8, 1).unwrap();
        let b = gen_periodic(&v, 8, 2).unwrap();
        assert_ne!(a.tokens, b.tokens);
        assert!(a.satisfies_period() && b.satisfies_period());
    }

    #[test]
    fn invalid_period_is_rejected() {
        let v = vocab();
        assert!(matches!(
            gen_periodic(&v, 3, 0),
            Err(Error::InvalidPeriod { period: 3 })
        ));
    }
}
