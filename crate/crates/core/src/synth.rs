//! Seeded synthetic corpora with power-law word frequencies.
//!
//! A [`Domain`] emits sentences from a first-order chain: each next word is
//! drawn either from the domain's Zipf unigram distribution or from a short
//! Zipf-weighted successor list of the previous word. Two domains over the
//! same vocabulary with different rank orders and successor lists give an
//! out-of-domain / in-domain pair whose n-gram statistics differ in a
//! structured way.
//!
//! The `random_*` helpers build small random models and adaptation
//! problems for equivalence tests against the dense oracle.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arpa::{Entry, LOG_PROB_SENTINEL};
use crate::mdi::ScalingField;
use crate::stats::Constraint;
use crate::{BackoffModel, ConstraintSet, Error, HistoryDistribution, NGram, Result, TokenId, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub vocab_size: usize,
    /// Zipf exponent of the unigram distribution.
    pub exponent: f64,
    /// Successors kept per word.
    pub successors: usize,
    /// Probability of drawing from the successor list instead of the unigram.
    pub stickiness: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            vocab_size: 1000,
            exponent: 1.0,
            successors: 20,
            stickiness: 0.6,
            min_len: 4,
            max_len: 16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Domain {
    spec: DomainSpec,
    unigram: WeightedIndex<f64>,
    ranks: Vec<usize>,
    successors: Vec<Vec<usize>>,
    successor_dist: WeightedIndex<f64>,
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

/// Token string of word `i`.
pub fn word(i: usize) -> String {
    format!("w{i}")
}

impl Domain {
    pub fn new(spec: DomainSpec, seed: u64) -> Result<Self> {
        if spec.vocab_size < 2 || spec.successors == 0 || spec.successors > spec.vocab_size {
            return Err(Error::invalid("domain needs at least two words and 1..=|V| successors"));
        }
        if spec.min_len == 0 || spec.min_len > spec.max_len {
            return Err(Error::invalid("sentence length range is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ranks: Vec<usize> = (0..spec.vocab_size).collect();
        ranks.shuffle(&mut rng);
        let unigram = WeightedIndex::new(zipf_weights(spec.vocab_size, spec.exponent)).expect("positive weights");
        let successors = (0..spec.vocab_size)
            .map(|_| {
                (0..spec.successors)
                    .map(|_| rng.gen_range(0..spec.vocab_size))
                    .collect()
            })
            .collect();
        let successor_dist = WeightedIndex::new(zipf_weights(spec.successors, 1.0)).expect("positive weights");
        Ok(Domain {
            spec,
            unigram,
            ranks,
            successors,
            successor_dist,
        })
    }

    fn sentence<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let len = rng.gen_range(self.spec.min_len..=self.spec.max_len);
        let mut out: Vec<usize> = Vec::with_capacity(len);
        for _ in 0..len {
            let next = match out.last() {
                Some(&prev) if rng.gen_bool(self.spec.stickiness) => {
                    self.successors[prev][self.successor_dist.sample(rng)]
                }
                _ => self.ranks[self.unigram.sample(rng)],
            };
            out.push(next);
        }
        out
    }

    /// Sentences totalling at least `words` tokens.
    pub fn corpus(&self, words: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lines = Vec::new();
        let mut total = 0;
        while total < words {
            let s = self.sentence(&mut rng);
            total += s.len();
            lines.push(s.iter().map(|&i| word(i)).collect::<Vec<_>>().join(" "));
        }
        lines
    }

    /// An endless sentence stream.
    pub fn sentences(&self, seed: u64) -> impl Iterator<Item = String> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::iter::repeat_with(move || {
            self.sentence(&mut rng)
                .iter()
                .map(|&i| word(i))
                .collect::<Vec<_>>()
                .join(" ")
        })
    }
}

/// Out-of-domain training text, in-domain training text and in-domain
/// held-out text over one shared vocabulary.
#[derive(Clone, Debug)]
pub struct DomainPair {
    pub out_train: Vec<String>,
    pub in_train: Vec<String>,
    pub in_test: Vec<String>,
}

/// Two domains over `spec.vocab_size` words, `words` tokens of training
/// text each and a tenth of that as in-domain test text.
pub fn domain_pair(spec: &DomainSpec, words: usize, seed: u64) -> Result<DomainPair> {
    let out_domain = Domain::new(spec.clone(), seed)?;
    let in_domain = Domain::new(spec.clone(), seed.wrapping_add(1))?;
    Ok(DomainPair {
        out_train: out_domain.corpus(words, seed.wrapping_add(2)),
        in_train: in_domain.corpus(words, seed.wrapping_add(3)),
        in_test: in_domain.corpus(words / 10, seed.wrapping_add(4)),
    })
}

/// A random normalized backoff model over `vocab_size` tokens.
///
/// With `boundaries`, the first two tokens are `<s>` and `</s>` and `<s>` is
/// never predicted. Each order keeps a random subset of histories, each
/// with a random subset of continuations whose suffixes are stored; backoff
/// weights are then solved so every history sums to one.
pub fn random_model<R: Rng>(rng: &mut R, vocab_size: usize, order: usize, boundaries: bool) -> Result<BackoffModel> {
    let min_size = if boundaries { 3 } else { 2 };
    if vocab_size < min_size || order < 1 {
        return Err(Error::invalid("random model needs at least two predictable words"));
    }
    let mut vocab = if boundaries { Vocabulary::with_boundaries() } else { Vocabulary::new() };
    let mut i = 0;
    while vocab.len() < vocab_size {
        vocab.insert(&word(i));
        i += 1;
    }
    let bos = vocab.bos();
    let predictable: Vec<TokenId> = vocab.predictable_ids().collect();

    let mut probs: HashMap<NGram, f64> = HashMap::new();
    let weights: Vec<f64> = predictable.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for (&w, x) in predictable.iter().zip(&weights) {
        probs.insert(NGram::unigram(w), x / total);
    }
    let mut bows: HashMap<NGram, f64> = HashMap::new();
    let prob = |probs: &HashMap<NGram, f64>, bows: &HashMap<NGram, f64>, h: &NGram, w: TokenId| {
        let mut acc = 1.0;
        for start in 0..=h.len() {
            let ctx = NGram::new(&h.ids()[start..]);
            if let Some(p) = probs.get(&ctx.extend(w)) {
                return acc * p;
            }
            acc *= bows.get(&ctx).copied().unwrap_or(1.0);
        }
        0.0
    };

    for k in 2..=order {
        let mut candidates: Vec<NGram> = (0..vocab_size as TokenId)
            .map(NGram::unigram)
            .filter(|_| k == 2)
            .chain(probs.keys().filter(|g| g.len() == k - 1).cloned())
            .collect();
        candidates.sort();
        candidates.dedup();
        let mut new_probs = Vec::new();
        for h in candidates {
            if !rng.gen_bool(0.6) {
                continue;
            }
            let lower = h.backoff();
            let conts: Vec<TokenId> = predictable
                .iter()
                .copied()
                .filter(|&w| k == 2 || probs.contains_key(&lower.extend(w)))
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            if conts.is_empty() {
                continue;
            }
            let full = conts.len() == predictable.len();
            let mass = if full { 1.0 } else { rng.gen_range(0.2..0.9) };
            let raw: Vec<f64> = conts.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let raw_total: f64 = raw.iter().sum();
            let lower_seen: f64 = conts.iter().map(|&w| prob(&probs, &bows, &lower, w)).sum();
            for (&w, r) in conts.iter().zip(&raw) {
                new_probs.push((h.extend(w), mass * r / raw_total));
            }
            let bow = if full { 1.0 } else { (1.0 - mass) / (1.0 - lower_seen) };
            bows.insert(h, bow);
        }
        probs.extend(new_probs);
    }

    let mut entries: Vec<(NGram, Entry)> = Vec::new();
    let mut keys: Vec<NGram> = probs.keys().cloned().collect();
    if let Some(b) = bos {
        keys.push(NGram::unigram(b));
    }
    for g in keys {
        let logp = probs.get(&g).map(|p| p.log10()).unwrap_or(LOG_PROB_SENTINEL);
        let logbow = bows.get(&g).map(|b| b.log10());
        entries.push((g, Entry::new(logp, logbow)));
    }
    BackoffModel::from_entries(vocab, order, entries)
}

/// A random history distribution over histories of length n-1, plus a few
/// shorter sentence-initial ones when the vocabulary has `<s>`.
pub fn random_history<R: Rng>(rng: &mut R, model: &BackoffModel, support: usize) -> HistoryDistribution {
    let vocab = model.vocab();
    let v = vocab.len() as TokenId;
    let len = model.order() - 1;
    let mut weights: HashMap<NGram, f64> = HashMap::new();
    for _ in 0..support.max(1) {
        let h: NGram = match vocab.bos() {
            Some(bos) if len > 0 && rng.gen_bool(0.2) => {
                let short = rng.gen_range(1..=len);
                std::iter::once(bos).chain((1..short).map(|_| rng.gen_range(0..v))).collect()
            }
            _ => (0..len).map(|_| rng.gen_range(0..v)).collect(),
        };
        *weights.entry(h).or_insert(0.0) += rng.gen_range(0.1..1.0);
    }
    let mut pairs: Vec<(NGram, f64)> = weights.into_iter().collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    HistoryDistribution::from_weights(pairs).expect("positive weights")
}

/// Up to `count` distinct random n-grams of lengths 1..=n that never
/// predict `<s>`.
pub fn random_ngrams<R: Rng>(rng: &mut R, model: &BackoffModel, count: usize) -> Vec<NGram> {
    let vocab = model.vocab();
    let predictable: Vec<TokenId> = vocab.predictable_ids().collect();
    let mut out: Vec<NGram> = Vec::new();
    for _ in 0..count * 4 {
        if out.len() >= count {
            break;
        }
        let len = rng.gen_range(1..=model.order());
        let mut ids: Vec<TokenId> = (1..len).map(|_| rng.gen_range(0..vocab.len() as TokenId)).collect();
        ids.push(*predictable.choose(rng).expect("predictable words"));
        let g = NGram::from(ids);
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

/// A random adaptation problem with feasible targets.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub p_out: BackoffModel,
    pub history: HistoryDistribution,
    /// Random λ on random n-grams.
    pub field: ScalingField,
    /// Targets are the marginals of an independent random model, so the
    /// constraints are satisfiable by a strictly positive model.
    pub constraints: ConstraintSet,
    /// The model the targets were read from; it satisfies every constraint.
    pub truth: BackoffModel,
}

/// |V| in 2..=8 (with boundary symbols half the time when |V| >= 3),
/// n in {2, 3}, a history distribution drawn from 2·|V|^(n-1) samples and
/// at most |V| constraints.
pub fn random_instance<R: Rng>(rng: &mut R) -> Result<RandomInstance> {
    let v = rng.gen_range(2..=8);
    let n = rng.gen_range(2..=3);
    let boundaries = v >= 3 && rng.gen_bool(0.5);
    let p_out = random_model(rng, v, n, boundaries)?;
    let truth = random_model(rng, v, n, boundaries)?;
    let history = random_history(rng, &p_out, 2 * v.pow(n as u32 - 1));

    let field_size = rng.gen_range(0..=2 * v);
    let field_grams = random_ngrams(rng, &p_out, field_size);
    let field = ScalingField::from_pairs(field_grams.into_iter().map(|g| (g, rng.gen_range(-1.5..1.5))))?;

    let k = rng.gen_range(1..=v);
    let grams = random_ngrams(rng, &p_out, k);
    let dense = crate::oracle::expand_dense(&truth)?;
    let probe = ConstraintSet::new(
        grams
            .iter()
            .map(|g| Constraint {
                ngram: g.clone(),
                target: 1.0,
                count: 0,
            })
            .collect(),
    )?;
    let targets = crate::oracle::dense_marginals(&dense, &history, &probe);
    let constraints = ConstraintSet::new(
        grams
            .into_iter()
            .zip(targets)
            .filter(|(_, t)| *t > 0.0)
            .map(|(ngram, target)| Constraint {
                ngram,
                target,
                count: 0,
            })
            .collect(),
    )?;
    Ok(RandomInstance {
        p_out,
        history,
        field,
        constraints,
        truth,
    })
}
