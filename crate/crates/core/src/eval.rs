//! Perplexity, conditional KL divergence and the linear interpolation
//! baseline.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::arpa::{Entry, LOG_PROB_SENTINEL};
use crate::oracle::DenseModel;
use crate::stats::HistoryDistribution;
use crate::sum::Neumaier;
use crate::{BackoffModel, Error, NGram, Result, TokenId, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OovPolicy {
    /// Drop the token; the context restarts after it.
    Skip,
    /// Score the token as `<unk>`.
    Unk,
    Fail,
}

impl OovPolicy {
    /// `Unk` when the model has `<unk>`, otherwise `Skip`.
    pub fn default_for(model: &BackoffModel) -> Self {
        if model.vocab().unk().is_some() {
            OovPolicy::Unk
        } else {
            OovPolicy::Skip
        }
    }
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovPolicy::Skip => "skip",
            OovPolicy::Unk => "unk",
            OovPolicy::Fail => "fail",
        })
    }
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(OovPolicy::Skip),
            "unk" => Ok(OovPolicy::Unk),
            "fail" => Ok(OovPolicy::Fail),
            other => Err(Error::invalid(format!("unknown OOV policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerplexityReport {
    /// Total log10 probability.
    pub logprob: f64,
    /// Scored events, `</s>` included and `<s>` excluded.
    pub words: u64,
    pub ppl: f64,
    pub oov: u64,
    pub policy: OovPolicy,
}

impl PerplexityReport {
    pub fn tsv_header() -> &'static str {
        "logprob\twords\tppl\toov"
    }

    pub fn to_tsv(&self) -> String {
        format!("{:.6}\t{}\t{:.6}\t{}", self.logprob, self.words, self.ppl, self.oov)
    }
}

/// Scores every token and the sentence end of each line given the padded
/// history. Tokens outside the vocabulary are handled by `policy`.
pub fn perplexity<I, S>(model: &BackoffModel, lines: I, policy: OovPolicy) -> Result<PerplexityReport>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let vocab = model.vocab();
    let keep = model.order() - 1;
    let unk = match policy {
        OovPolicy::Unk => Some(
            vocab
                .unk()
                .ok_or_else(|| Error::invalid("OOV policy unk needs <unk> in the model"))?,
        ),
        _ => None,
    };
    let start: Vec<TokenId> = vocab.bos().into_iter().collect();
    let mut total = Neumaier::default();
    let mut words = 0u64;
    let mut oov = 0u64;
    let mut score = |history: &[TokenId], w: TokenId, total: &mut Neumaier| -> Result<()> {
        let ctx = &history[history.len().saturating_sub(keep)..];
        let lp = model.lookup_logprob(&NGram::new(ctx), w);
        if !lp.is_finite() || lp <= LOG_PROB_SENTINEL {
            return Err(Error::ZeroProbability(format!(
                "{} after {:?}",
                vocab.token(w).unwrap_or_default(),
                vocab.format(&NGram::new(ctx))
            )));
        }
        total.add(lp);
        words += 1;
        Ok(())
    };
    for line in lines {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        let mut history = start.clone();
        for tok in line.split_whitespace() {
            let id = match (vocab.get(tok), policy) {
                (Some(id), _) => id,
                (None, OovPolicy::Unk) => unk.expect("checked above"),
                (None, OovPolicy::Skip) => {
                    oov += 1;
                    history.clear();
                    continue;
                }
                (None, OovPolicy::Fail) => return Err(Error::OutOfVocabulary(tok.to_string())),
            };
            if policy == OovPolicy::Unk && Some(id) == unk && vocab.get(tok).is_none() {
                oov += 1;
            }
            score(&history, id, &mut total)?;
            history.push(id);
        }
        if let Some(eos) = vocab.eos() {
            score(&history, eos, &mut total)?;
        }
    }
    if policy == OovPolicy::Skip && oov > 0 {
        warn!("{oov} out-of-vocabulary tokens skipped; perplexity covers {words} events");
    }
    let logprob = total.total();
    let ppl = if words == 0 {
        f64::NAN
    } else {
        10f64.powf(-logprob / words as f64)
    };
    Ok(PerplexityReport {
        logprob,
        words,
        ppl,
        oov,
        policy,
    })
}

/// `Σ_h p̃(h) Σ_w p(w|h) ln(p(w|h) / q(w|h))` in nats.
pub fn conditional_kl(p: &DenseModel, q: &DenseModel, history: &HistoryDistribution) -> Result<f64> {
    if p.vocab_size() != q.vocab_size() || p.order() != q.order() {
        return Err(Error::invalid("models differ in vocabulary size or order"));
    }
    let mut total = Neumaier::default();
    for (h, ph) in history.iter() {
        for (w, (&a, &b)) in p.row(h.ids()).iter().zip(q.row(h.ids())).enumerate() {
            if a == 0.0 {
                continue;
            }
            if b == 0.0 {
                return Err(Error::ZeroProbability(format!("q is zero at word {w} after {h:?}")));
            }
            total.add(ph * a * (a / b).ln());
        }
    }
    Ok(total.total().max(0.0))
}

/// Maps `h` onto `vocab`, keeping only the part after its last unknown token.
fn map_context(from: &Vocabulary, to: &Vocabulary, h: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(h.len());
    for &id in h {
        match from.token(id).and_then(|t| to.get(t)) {
            Some(j) => out.push(j),
            None => out.clear(),
        }
    }
    out
}

fn component_prob(model: &BackoffModel, union: &Vocabulary, h: &[TokenId], w: TokenId) -> f64 {
    let Some(w) = union.token(w).and_then(|t| model.vocab().get(t)) else {
        return 0.0;
    };
    if !model.vocab().is_predictable(w) {
        return 0.0;
    }
    let ctx = map_context(union, model.vocab(), h);
    model.prob(&NGram::from(ctx), w)
}

/// `weight · a + (1 - weight) · b` as a backoff model over the union of
/// both vocabularies and entry sets.
///
/// Explicit entries carry the mixture exactly; backoff weights are
/// recomputed so every history normalizes against the output's own
/// lower-order distribution. A word unknown to one model gets zero
/// probability from that side.
pub fn linear_interpolate(a: &BackoffModel, b: &BackoffModel, weight: f64) -> Result<BackoffModel> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid(format!("interpolation weight {weight} outside [0, 1]")));
    }
    let mut union = a.vocab().clone();
    let shared = b.vocab().iter().filter(|(_, t)| a.vocab().get(t).is_some()).count();
    for (_, t) in b.vocab().iter() {
        union.insert(t);
    }
    let real_shared = b
        .vocab()
        .iter()
        .filter(|(_, t)| !matches!(*t, crate::BOS | crate::EOS) && a.vocab().get(t).is_some())
        .count();
    if real_shared == 0 && a.vocab().unk().is_none() && b.vocab().unk().is_none() {
        return Err(Error::invalid(format!(
            "vocabularies are disjoint ({shared} shared boundary tokens) and neither has <unk>"
        )));
    }
    let n = a.order().max(b.order());

    let mut keys: BTreeSet<NGram> = BTreeSet::new();
    for (model, vocab) in [(a, a.vocab()), (b, b.vocab())] {
        for (g, _) in model.all_entries() {
            let mapped: NGram = g
                .ids()
                .iter()
                .map(|&id| union.get(vocab.token(id).expect("model ids resolve")).expect("union covers both"))
                .collect();
            keys.insert(mapped);
        }
    }
    for id in 0..union.len() as TokenId {
        keys.insert(NGram::unigram(id));
    }
    let mut work: Vec<NGram> = keys.iter().cloned().collect();
    while let Some(g) = work.pop() {
        if g.len() >= 2 {
            for next in [g.history(), g.backoff()] {
                if keys.insert(next.clone()) {
                    work.push(next);
                }
            }
        }
    }

    let mix = |h: &[TokenId], w: TokenId| {
        weight * component_prob(a, &union, h, w) + (1.0 - weight) * component_prob(b, &union, h, w)
    };
    let mut probs: HashMap<NGram, f64> = HashMap::new();
    for g in &keys {
        let w = g.word().expect("non-empty");
        if !union.is_predictable(w) {
            continue;
        }
        let p = mix(&g.ids()[..g.len() - 1], w);
        if g.len() == 1 && !(p > 0.0) {
            return Err(Error::ZeroProbability(format!(
                "unigram {:?} has zero probability under the mixture",
                union.token(w).unwrap_or_default()
            )));
        }
        probs.insert(g.clone(), p);
    }

    let mut children: HashMap<NGram, Vec<TokenId>> = HashMap::new();
    for g in keys.iter().filter(|g| g.len() >= 2) {
        let w = g.word().expect("non-empty");
        if union.is_predictable(w) {
            children.entry(g.history()).or_default().push(w);
        }
    }
    let num_predictable = union.predictable_ids().count();
    let mut bows: HashMap<NGram, f64> = HashMap::new();
    let out_prob = |probs: &HashMap<NGram, f64>, bows: &HashMap<NGram, f64>, h: &NGram, w: TokenId| -> f64 {
        let mut acc = 1.0;
        for start in 0..=h.len() {
            let ctx = NGram::new(&h.ids()[start..]);
            if let Some(&p) = probs.get(&ctx.extend(w)) {
                return acc * p;
            }
            acc *= bows.get(&ctx).copied().unwrap_or(1.0);
        }
        0.0
    };
    let mut histories: Vec<&NGram> = children.keys().collect();
    histories.sort_by_key(|h| h.len());
    for h in histories {
        let ws = &children[h];
        if ws.len() >= num_predictable {
            bows.insert(h.clone(), 1.0);
            continue;
        }
        let lower = h.backoff();
        let mut seen = Neumaier::default();
        let mut seen_lower = Neumaier::default();
        for &w in ws {
            seen.add(probs[&h.extend(w)]);
            seen_lower.add(out_prob(&probs, &bows, &lower, w));
        }
        let num = 1.0 - seen.total();
        let den = 1.0 - seen_lower.total();
        let bow = if num <= 0.0 {
            0.0
        } else if den > 0.0 {
            num / den
        } else {
            return Err(Error::ZeroProbability(format!(
                "history {:?} has no lower-order mass left",
                union.format(h)
            )));
        };
        bows.insert(h.clone(), bow);
    }

    let bos = union.bos();
    let entries: Vec<(NGram, Entry)> = keys
        .into_iter()
        .map(|g| {
            let logp = match probs.get(&g) {
                Some(&p) if p > 0.0 => p.log10(),
                _ => LOG_PROB_SENTINEL,
            };
            let logbow = if g.len() < n {
                bows.get(&g).map(|&b| if b > 0.0 { b.log10() } else { LOG_PROB_SENTINEL })
            } else {
                None
            };
            debug_assert!(g.len() != 1 || Some(g.ids()[0]) == bos || logp > LOG_PROB_SENTINEL);
            (g, Entry::new(logp, logbow))
        })
        .collect();
    BackoffModel::from_entries(union, n, entries)
}
