//! Synthetic models and constraint sets for timing one GIS iteration.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mdi::MdiProblem;
use crate::stats::{count_ngrams, estimate_backoff_lm, history_distribution, Constraint, CountTable};
use crate::synth::{word, Domain, DomainSpec};
use crate::{BackoffModel, ConstraintSet, Error, HistoryDistribution, Result, Vocabulary};

/// Refuse to build models larger than this many entries.
pub const MAX_BENCH_ENTRIES: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub order: usize,
    pub vocab_size: usize,
    pub discount: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            order: 3,
            vocab_size: 20_000,
            discount: 0.7,
            repeats: 3,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub entries: usize,
    pub constraints: usize,
    /// Mean wall time of one iteration.
    pub seconds: f64,
    /// Accumulator updates in one iteration.
    pub ops: u64,
    /// Suffix-graph nodes: model entries plus constraint n-grams and their
    /// closure.
    pub nodes: usize,
}

impl BenchRow {
    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{:.6}", self.entries, self.constraints, self.seconds)
    }
}

fn bench_vocab(size: usize) -> Vocabulary {
    let mut v = Vocabulary::with_boundaries();
    for i in 0..size {
        v.insert(&word(i));
    }
    v
}

fn bench_domain(opts: &BenchOptions, seed: u64) -> Result<Domain> {
    let spec = DomainSpec {
        vocab_size: opts.vocab_size,
        successors: 50,
        stickiness: 0.5,
        ..Default::default()
    };
    Domain::new(spec, seed)
}

fn distinct(counts: &CountTable) -> usize {
    (2..=counts.order()).map(|k| counts.iter_order(k).count()).sum()
}

/// Counts sentences from `domain` until the table holds at least `target`
/// distinct n-grams of order two and above.
fn grow_counts(domain: &Domain, vocab: &Vocabulary, order: usize, target: usize, seed: u64) -> Result<CountTable> {
    let mut sentences = domain.sentences(seed);
    let mut counts = CountTable::new(order, vocab.clone());
    let mut batch = 64;
    while distinct(&counts) < target {
        let chunk: Vec<String> = sentences.by_ref().take(batch).collect();
        counts.merge(&count_ngrams(&chunk, order, vocab)?)?;
        let missing = target - distinct(&counts).min(target);
        batch = (missing / 16).clamp(16, 4096);
    }
    Ok(counts)
}

/// A normalized backoff model with about `entries` entries, estimated from
/// a seeded power-law corpus.
pub fn synthetic_model(entries: usize, opts: &BenchOptions) -> Result<BackoffModel> {
    if entries > MAX_BENCH_ENTRIES {
        return Err(Error::GuardExceeded(format!("{entries} benchmark entries")));
    }
    let vocab = bench_vocab(opts.vocab_size);
    let target = entries.saturating_sub(vocab.len());
    let domain = bench_domain(opts, opts.seed)?;
    let counts = grow_counts(&domain, &vocab, opts.order, target, opts.seed)?;
    estimate_backoff_lm(&counts, opts.discount)
}

/// In-domain statistics for the benchmark: a second domain over the same
/// vocabulary, counted until at least `max_k` distinct n-grams exist.
pub struct BenchSource {
    counts: CountTable,
    history: HistoryDistribution,
    seed: u64,
}

impl BenchSource {
    pub fn new(max_k: usize, opts: &BenchOptions) -> Result<Self> {
        let vocab = bench_vocab(opts.vocab_size);
        let domain = bench_domain(opts, opts.seed.wrapping_add(1000))?;
        let counts = grow_counts(&domain, &vocab, opts.order, max_k, opts.seed.wrapping_add(1001))?;
        let history = history_distribution(&counts)?;
        Ok(BenchSource {
            counts,
            history,
            seed: opts.seed,
        })
    }

    pub fn history(&self) -> &HistoryDistribution {
        &self.history
    }

    /// `k` constraints drawn without replacement from all counted n-grams,
    /// with maximum-likelihood targets.
    pub fn constraints(&self, k: usize) -> Result<ConstraintSet> {
        let vocab = self.counts.vocab();
        let events = self.counts.events() as f64;
        let mut pool: Vec<Constraint> = (1..=self.counts.order())
            .flat_map(|order| self.counts.iter_order(order))
            .filter(|(g, _)| vocab.is_predictable(g.word().expect("non-empty")))
            .map(|(g, c)| Constraint {
                ngram: g.clone(),
                target: c as f64 / events,
                count: c,
            })
            .collect();
        if pool.len() < k {
            return Err(Error::invalid(format!("only {} candidate constraints for K = {k}", pool.len())));
        }
        pool.sort_by(|a, b| a.ngram.cmp(&b.ngram));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(k as u64));
        let (chosen, _) = pool.partial_shuffle(&mut rng, k);
        ConstraintSet::new(chosen.to_vec())
    }
}

/// Times `repeats` iterations (normalizers, marginals and update) after
/// one untimed warm-up and returns the mean together with the per-iteration
/// operation count.
pub fn time_iteration(problem: &MdiProblem, repeats: usize) -> Result<(f64, u64)> {
    let targets = problem.targets().to_vec();
    let mut lambdas = vec![0.0; problem.num_constraints()];
    let step = |lambdas: &mut Vec<f64>| -> Result<u64> {
        let eval = problem.evaluate(lambdas)?;
        for ((l, t), m) in lambdas.iter_mut().zip(&targets).zip(&eval.marginals) {
            *l += (t / m).ln();
        }
        Ok(eval.ops())
    };
    step(&mut lambdas)?;
    let repeats = repeats.max(1);
    let started = Instant::now();
    let mut ops = 0;
    for _ in 0..repeats {
        ops = step(&mut lambdas)?;
    }
    Ok((started.elapsed().as_secs_f64() / repeats as f64, ops))
}

/// One row per (size, K) pair.
pub fn run_bench(sizes: &[usize], ks: &[usize], opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let source = BenchSource::new(max_k, opts)?;
    let mut rows = Vec::new();
    for &size in sizes {
        let model = synthetic_model(size, opts)?;
        for &k in ks {
            let constraints = source.constraints(k)?;
            let problem = MdiProblem::new(&model, &constraints, source.history())?;
            let (seconds, ops) = time_iteration(&problem, opts.repeats)?;
            rows.push(BenchRow {
                entries: model.num_entries(),
                constraints: k,
                seconds,
                ops,
                nodes: problem.graph().num_nodes(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_model() {
        let opts = BenchOptions {
            vocab_size: 200,
            ..Default::default()
        };
        let a = synthetic_model(3000, &opts).unwrap();
        let b = synthetic_model(3000, &opts).unwrap();
        assert!(a.approx_eq(&b, 0.0));
        assert!(a.num_entries() >= 3000);
        assert!(crate::arpa::validate_model(&a).unwrap().max_deviation() < 1e-9);
    }
}
