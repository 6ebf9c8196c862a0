//! Corpus statistics: n-gram counts, constraint selection, the empirical
//! history distribution and a small absolute-discounting backoff estimator.
//!
//! Every sentence is padded with one `<s>` and one `</s>`. Each predicted
//! position (every real token and the final `</s>`) is one event; its
//! history is the up to n-1 preceding tokens, truncated at the sentence
//! start. All marginal targets and history probabilities are normalized by
//! the number of events, so targets of every order live on the same joint
//! space and nested targets are consistent by construction.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use log::warn;

use crate::arpa::{format_significant, BackoffModel, Entry, LOG_PROB_SENTINEL};
use crate::{Error, NGram, Result, TokenId, Vocabulary};

pub const CONSTRAINT_HEADER: &str = "#mdi-constraints v1";

#[derive(Clone, Debug)]
pub struct CountTable {
    order: usize,
    vocab: Vocabulary,
    counts: Vec<HashMap<NGram, u64>>,
    histories: HashMap<NGram, u64>,
    events: u64,
    oov: u64,
}

impl CountTable {
    pub fn new(order: usize, vocab: Vocabulary) -> Self {
        CountTable {
            order,
            vocab,
            counts: vec![HashMap::new(); order],
            histories: HashMap::new(),
            events: 0,
            oov: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn get(&self, g: &NGram) -> u64 {
        match g.len() {
            0 => self.events,
            k if k <= self.order => self.counts[k - 1].get(g).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Counts of order `k` (1-based).
    pub fn iter_order(&self, k: usize) -> impl Iterator<Item = (&NGram, u64)> {
        self.counts[k - 1].iter().map(|(g, &c)| (g, c))
    }

    /// Sum of all counts of order `k`.
    pub fn total(&self, k: usize) -> u64 {
        self.counts[k - 1].values().sum()
    }

    /// Number of predicted positions.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// Tokens skipped because they were out of vocabulary.
    pub fn oov_skipped(&self) -> u64 {
        self.oov
    }

    /// Occurrences of each (possibly truncated) history in front of an event.
    pub fn history_counts(&self) -> impl Iterator<Item = (&NGram, u64)> {
        self.histories.iter().map(|(g, &c)| (g, c))
    }

    fn add_sentence(&mut self, ids: &[TokenId]) {
        let bos = self.vocab.bos();
        for pos in 0..ids.len() {
            if Some(ids[pos]) == bos {
                continue;
            }
            self.events += 1;
            for k in 1..=self.order.min(pos + 1) {
                let g = NGram::new(&ids[pos + 1 - k..=pos]);
                *self.counts[k - 1].entry(g).or_insert(0) += 1;
            }
            let keep = pos.min(self.order - 1);
            let h = NGram::new(&ids[pos - keep..pos]);
            *self.histories.entry(h).or_insert(0) += 1;
        }
    }

    /// Adds `other` into `self`. Both tables must share order and vocabulary.
    pub fn merge(&mut self, other: &CountTable) -> Result<()> {
        if other.order != self.order || other.vocab != self.vocab {
            return Err(Error::invalid("cannot merge count tables with different order or vocabulary"));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (g, &c) in theirs {
                *mine.entry(g.clone()).or_insert(0) += c;
            }
        }
        for (h, &c) in &other.histories {
            *self.histories.entry(h.clone()).or_insert(0) += c;
        }
        self.events += other.events;
        self.oov += other.oov;
        Ok(())
    }

    /// TSV lines `order<TAB>ngram<TAB>count`, sorted by order then ids.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for k in 1..=self.order {
            let sorted: BTreeMap<&NGram, u64> = self.iter_order(k).collect();
            for (g, c) in sorted {
                writeln!(out, "{k}\t{}\t{c}", self.vocab.format(g))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Counts all k-grams (k <= n) ending at each predicted position.
///
/// Tokens outside `vocab` map to `<unk>` when the vocabulary has it;
/// otherwise they are skipped and no n-gram spans them.
pub fn count_ngrams<I, S>(lines: I, n: usize, vocab: &Vocabulary) -> Result<CountTable>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if n < 1 {
        return Err(Error::invalid("order must be at least 1"));
    }
    let (bos, eos) = match (vocab.bos(), vocab.eos()) {
        (Some(b), Some(e)) => (b, e),
        _ => return Err(Error::invalid("vocabulary lacks <s> or </s>")),
    };
    let mut table = CountTable::new(n, vocab.clone());
    let mut sentences = 0usize;
    for line in lines {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        sentences += 1;
        let mut segment = vec![bos];
        for tok in line.split_whitespace() {
            match vocab.get(tok).or(vocab.unk()) {
                Some(id) => segment.push(id),
                None => {
                    table.oov += 1;
                    table.add_sentence(&segment);
                    segment.clear();
                }
            }
        }
        segment.push(eos);
        table.add_sentence(&segment);
    }
    if sentences == 0 {
        return Err(Error::invalid("empty corpus"));
    }
    if table.oov > 0 {
        warn!("{} out-of-vocabulary tokens skipped while counting", table.oov);
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub ngram: NGram,
    /// Target marginal p̃(S) in (0, 1].
    pub target: f64,
    pub count: u64,
}

/// Duplicate-free list of n-gram marginal constraints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for c in &constraints {
            if c.ngram.is_empty() {
                return Err(Error::invalid("empty constraint n-gram"));
            }
            if !(c.target > 0.0 && c.target <= 1.0) {
                return Err(Error::invalid(format!(
                    "constraint target {} for {:?} is outside (0, 1]",
                    c.target, c.ngram
                )));
            }
            if !seen.insert(c.ngram.clone()) {
                return Err(Error::invalid(format!("duplicate constraint {:?}", c.ngram)));
            }
        }
        Ok(ConstraintSet { constraints })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Constraint> {
        self.constraints.iter()
    }

    pub fn as_slice(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn ngrams(&self) -> impl Iterator<Item = &NGram> {
        self.constraints.iter().map(|c| &c.ngram)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.target).collect()
    }

    /// Number of constraints per order, index 0 = unigrams.
    pub fn per_order(&self) -> Vec<usize> {
        let max = self.constraints.iter().map(|c| c.ngram.len()).max().unwrap_or(0);
        let mut out = vec![0; max];
        for c in &self.constraints {
            out[c.ngram.len() - 1] += 1;
        }
        out
    }

    /// Checks the necessary feasibility conditions: a constraint's target
    /// never exceeds that of a constrained suffix, and the targets of each
    /// order sum to at most one.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let targets: HashMap<&NGram, f64> = self.constraints.iter().map(|c| (&c.ngram, c.target)).collect();
        for c in &self.constraints {
            for k in 1..c.ngram.len() {
                let s = c.ngram.suffix(k);
                if let Some(&ts) = targets.get(&s) {
                    if c.target > ts + tol {
                        return Err(Error::invalid(format!(
                            "constraint {:?} has target {} above its suffix {:?} ({})",
                            c.ngram, c.target, s, ts
                        )));
                    }
                }
            }
        }
        let mut sums: Vec<f64> = vec![];
        for c in &self.constraints {
            let k = c.ngram.len();
            if sums.len() < k {
                sums.resize(k, 0.0);
            }
            sums[k - 1] += c.target;
        }
        if let Some((k, s)) = sums.iter().enumerate().find(|(_, &s)| s > 1.0 + tol) {
            return Err(Error::invalid(format!("order-{} targets sum to {s} > 1", k + 1)));
        }
        Ok(())
    }

    /// Re-maps constraints onto `target` vocabulary; constraints with
    /// tokens it lacks are dropped. Returns the number dropped.
    pub fn remap(&self, from: &Vocabulary, target: &Vocabulary) -> (ConstraintSet, usize) {
        let mut kept = Vec::new();
        let mut dropped = 0;
        for c in &self.constraints {
            match target.parse(&from.format(&c.ngram)) {
                Some(g) => kept.push(Constraint { ngram: g, ..c.clone() }),
                None => dropped += 1,
            }
        }
        (ConstraintSet { constraints: kept }, dropped)
    }

    /// Writes the constraint TSV with its version header.
    pub fn write_tsv<W: Write>(&self, vocab: &Vocabulary, mut out: W) -> Result<()> {
        writeln!(out, "{CONSTRAINT_HEADER}")?;
        for c in &self.constraints {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                c.ngram.len(),
                vocab.format(&c.ngram),
                format_significant(c.target, 12),
                c.count
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a constraint TSV against `vocab`. Constraints with unknown
    /// tokens are dropped and counted.
    pub fn read_tsv<R: BufRead>(reader: R, vocab: &Vocabulary) -> Result<(ConstraintSet, usize)> {
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == CONSTRAINT_HEADER => {}
            _ => return Err(Error::invalid(format!("constraint file must start with {CONSTRAINT_HEADER:?}"))),
        }
        let mut out = Vec::new();
        let mut dropped = 0;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::MalformedEntry {
                    line: lineno,
                    msg: format!("expected 4 tab-separated fields, got {line:?}"),
                });
            }
            let order: usize = fields[0].parse().map_err(|_| Error::MalformedEntry {
                line: lineno,
                msg: format!("bad order {:?}", fields[0]),
            })?;
            let target: f64 = fields[2].parse().map_err(|_| Error::InvalidFloat {
                line: lineno,
                text: fields[2].to_string(),
            })?;
            let count: u64 = fields[3].parse().map_err(|_| Error::MalformedEntry {
                line: lineno,
                msg: format!("bad count {:?}", fields[3]),
            })?;
            if fields[1].split_whitespace().count() != order {
                return Err(Error::MalformedEntry {
                    line: lineno,
                    msg: format!("order {order} does not match {:?}", fields[1]),
                });
            }
            match vocab.parse(fields[1]) {
                Some(ngram) => out.push(Constraint { ngram, target, count }),
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            warn!("{dropped} constraints dropped: tokens outside the model vocabulary");
        }
        Ok((ConstraintSet::new(out)?, dropped))
    }
}

/// A k-gram is selected when its count reaches the threshold of its order.
/// Targets are count / events. N-grams predicting `<s>` or with `</s>` in
/// the history are never selected.
pub fn select_constraints(counts: &CountTable, thresholds: &[u64]) -> Result<ConstraintSet> {
    if thresholds.len() != counts.order() {
        return Err(Error::invalid(format!(
            "expected {} thresholds, got {}",
            counts.order(),
            thresholds.len()
        )));
    }
    if thresholds.iter().any(|&t| t < 1) {
        return Err(Error::invalid("thresholds must be at least 1"));
    }
    let vocab = counts.vocab();
    let events = counts.events() as f64;
    let mut out = Vec::new();
    for k in 1..=counts.order() {
        let mut selected: Vec<(&NGram, u64)> = counts
            .iter_order(k)
            .filter(|&(g, c)| {
                c >= thresholds[k - 1]
                    && vocab.is_predictable(g.word().expect("non-empty"))
                    && !g.history().ids().iter().any(|&id| Some(id) == vocab.eos())
            })
            .collect();
        selected.sort_by(|a, b| a.0.cmp(b.0));
        out.extend(selected.into_iter().map(|(g, c)| Constraint {
            ngram: g.clone(),
            target: c as f64 / events,
            count: c,
        }));
    }
    ConstraintSet::new(out)
}

/// Sparse distribution over histories (length at most n-1).
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryDistribution {
    entries: Vec<(NGram, f64)>,
}

impl HistoryDistribution {
    /// Takes probabilities that already sum to one (within 1e-9).
    pub fn new(mut entries: Vec<(NGram, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate history"));
        }
        if entries.iter().any(|(_, p)| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("history probabilities must be positive"));
        }
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("history probabilities sum to {total}")));
        }
        Ok(HistoryDistribution { entries })
    }

    /// Normalizes positive weights into a distribution.
    pub fn from_weights(entries: Vec<(NGram, f64)>) -> Result<Self> {
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("history weights must have positive total"));
        }
        Self::new(entries.into_iter().map(|(h, w)| (h, w / total)).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, f64)> {
        self.entries.iter().map(|(h, p)| (h, *p))
    }

    pub fn get(&self, h: &NGram) -> f64 {
        self.entries
            .binary_search_by(|(g, _)| g.cmp(h))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }
}

/// Maximum-likelihood history distribution: occurrences of each history in
/// front of an event, divided by the number of events.
pub fn history_distribution(counts: &CountTable) -> Result<HistoryDistribution> {
    let events = counts.events() as f64;
    if events == 0.0 {
        return Err(Error::invalid("no events counted"));
    }
    HistoryDistribution::new(counts.history_counts().map(|(h, c)| (h.clone(), c as f64 / events)).collect())
}

/// Absolute-discounting backoff estimate from `counts`.
///
/// Unigrams: `p(w) = (c(w) - D)/T + D·seen/(T·|V|)` over the predictable
/// vocabulary. Higher orders: `p*(w|h) = (c(hw) - D)/c(h·)` for seen `hw`,
/// and `bow(h)` spreads the released mass `D·N1+(h·)/c(h·)` over the
/// lower-order probabilities of the unseen continuations. A history that
/// was followed by every word keeps its maximum-likelihood estimate.
pub fn estimate_backoff_lm(counts: &CountTable, discount: f64) -> Result<BackoffModel> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(format!("discount {discount} outside [0, 1)")));
    }
    let n = counts.order();
    let vocab = counts.vocab().clone();
    let bos = vocab.bos().ok_or_else(|| Error::invalid("vocabulary lacks <s>"))?;
    let total = counts.total(1) as f64;
    if total == 0.0 {
        return Err(Error::invalid("no unigram counts"));
    }
    let num_predictable = vocab.predictable_ids().count() as f64;

    // linear-space (p, bow) per n-gram, built order by order
    let mut probs: HashMap<NGram, f64> = HashMap::new();
    let mut bows: HashMap<NGram, f64> = HashMap::new();

    let seen = counts.iter_order(1).count() as f64;
    let spread = discount * seen / total / num_predictable;
    for w in vocab.predictable_ids() {
        let c = counts.get(&NGram::unigram(w)) as f64;
        let p = (c - discount).max(0.0) / total + spread;
        if !(p > 0.0) {
            return Err(Error::ZeroProbability(format!(
                "unigram {:?} gets no probability mass",
                vocab.token(w).unwrap_or_default()
            )));
        }
        probs.insert(NGram::unigram(w), p);
    }

    let lower_prob = |probs: &HashMap<NGram, f64>, bows: &HashMap<NGram, f64>, h: &NGram, w: TokenId| -> f64 {
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

    for k in 2..=n {
        let mut groups: BTreeMap<NGram, Vec<(TokenId, u64)>> = BTreeMap::new();
        for (g, c) in counts.iter_order(k) {
            groups.entry(g.history()).or_default().push((g.word().expect("non-empty"), c));
        }
        let mut new_probs = Vec::new();
        for (h, mut conts) in groups {
            conts.sort_unstable();
            let n_h: u64 = conts.iter().map(|&(_, c)| c).sum();
            let n_h = n_h as f64;
            let full = conts.len() as f64 >= num_predictable;
            let d = if full { 0.0 } else { discount };
            let released = d * conts.len() as f64 / n_h;
            let backoff_h = h.backoff();
            let mut lower_seen = 0.0;
            for &(w, c) in &conts {
                new_probs.push((h.extend(w), (c as f64 - d) / n_h));
                lower_seen += lower_prob(&probs, &bows, &backoff_h, w);
            }
            let bow = if full {
                1.0
            } else {
                let rest = 1.0 - lower_seen;
                if !(rest > 0.0) || !(released > 0.0) {
                    return Err(Error::ZeroProbability(format!(
                        "history {:?} leaves no mass for unseen continuations",
                        vocab.format(&h)
                    )));
                }
                released / rest
            };
            bows.insert(h, bow);
        }
        probs.extend(new_probs);
    }

    let mut entries: Vec<(NGram, Entry)> = Vec::with_capacity(probs.len() + 1);
    let bos_g = NGram::unigram(bos);
    entries.push((bos_g.clone(), Entry::new(LOG_PROB_SENTINEL, bows.get(&bos_g).map(|b| b.log10()))));
    for (g, p) in probs {
        let logbow = if g.len() < n { bows.get(&g).map(|b| b.log10()) } else { None };
        entries.push((g, Entry::new(p.log10(), logbow)));
    }
    BackoffModel::from_entries(vocab, n, entries)
}
