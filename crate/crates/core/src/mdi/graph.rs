//! Suffix-grouped node table over which normalizers and marginals are
//! computed in linear time.
//!
//! Nodes are the model entries plus any extra n-grams (constraints,
//! requested histories), closed under taking histories and backoff
//! suffixes. Node 0 is the empty context. Nodes of the same order are
//! contiguous and sorted by (suffix node, history node), so the
//! "extensions" of a node (the one-token-longer nodes sharing it as suffix)
//! form a group that can be summed without any per-query sorting.
//!
//! For a scaling field with per-node parameter λ(x), the scaling factor of
//! node x is `c(x) = c(suffix(x)) * exp(λ(x))`, and the normalizer of a
//! history node v is
//!
//! ```text
//! Z(v) = bow(v) Z(suffix(v))
//!      + Σ_{x child of v} [ p(x) c(x) - bow(v) p(suffix(x)) c(suffix(x)) ]
//! ```
//!
//! where `p(x)` is the full backoff conditional of the input model at x.
//! Marginals are right-aligned sums
//!
//! ```text
//! R(y) = G(hist(y)) q(y) + Σ_{x ⊋ y, x ends with y} δ(x) G(hist(x))
//! ```
//!
//! with `q` the adapted conditional at a node, `δ(x) = q(x) - bow_ad(hist(x)) q(suffix(x))`
//! and `G(v) = W(v) + Σ_{v' extension of v} bow_ad(v') G(v')` the history-weighted
//! backoff mass: `W(v)` is the history-distribution mass whose longest
//! node suffix is v. Both recursions touch every node a constant number of
//! times.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::arpa::BackoffModel;
use crate::stats::HistoryDistribution;
use crate::sum::Neumaier;
use crate::{Error, NGram, Result, TokenId};

const PAR_MIN_LEN: usize = 2048;

#[derive(Clone, Debug, Default)]
struct Csr {
    start: Vec<u32>,
    items: Vec<u32>,
}

impl Csr {
    fn from_parents(parents: &[u32], num_nodes: usize) -> Self {
        let mut start = vec![0u32; num_nodes + 1];
        for &p in parents.iter().skip(1) {
            start[p as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut items = vec![0u32; parents.len().saturating_sub(1)];
        for (x, &p) in parents.iter().enumerate().skip(1) {
            let slot = &mut fill[p as usize];
            items[*slot as usize] = x as u32;
            *slot += 1;
        }
        Csr { start, items }
    }

    fn of(&self, node: usize) -> &[u32] {
        &self.items[self.start[node] as usize..self.start[node + 1] as usize]
    }

    /// Number of items owned by the nodes in `range`.
    fn span(&self, range: std::ops::Range<usize>) -> u64 {
        (self.start[range.end] - self.start[range.start]) as u64
    }
}

/// Scaling factors and normalizers for one parameter vector.
#[derive(Clone, Debug)]
pub struct Normalized {
    /// c(x) per node; 1 at the root.
    pub scale: Vec<f64>,
    /// Z(v) per node below the top order; NaN at top-order nodes.
    pub z: Vec<f64>,
    /// Accumulator updates performed.
    pub ops: u64,
}

/// Right-aligned sums of the adapted model under the history distribution.
#[derive(Clone, Debug)]
pub struct RightSums {
    /// R(y) per node: Σ_h p̃(h) p(word(y) | h) over histories ending in hist(y).
    pub values: Vec<f64>,
    /// Adapted conditional q(x) per node.
    pub q: Vec<f64>,
    /// Adapted backoff weight per node below the top order.
    pub bow: Vec<f64>,
    pub ops: u64,
}

#[derive(Clone, Debug)]
pub struct SuffixGraph {
    order: usize,
    vocab_size: usize,
    ngrams: Vec<NGram>,
    level_start: Vec<usize>,
    index: HashMap<NGram, u32>,
    hist: Vec<u32>,
    backoff: Vec<u32>,
    in_model: Vec<bool>,
    explicit_bow: Vec<bool>,
    predictable: Vec<bool>,
    p_out: Vec<f64>,
    bow_out: Vec<f64>,
    children: Csr,
    extensions: Csr,
    history_mass: Vec<f64>,
    history_support: usize,
}

impl SuffixGraph {
    /// Builds the node table for `model` plus `extra` n-grams (closure
    /// completed). With a history distribution, each history is attached to
    /// its longest suffix that is a node.
    pub fn build<I>(model: &BackoffModel, extra: I, history: Option<&HistoryDistribution>) -> Result<Self>
    where
        I: IntoIterator<Item = NGram>,
    {
        let n = model.order();
        let vocab = model.vocab();
        let mut levels: Vec<HashSet<NGram>> = vec![HashSet::new(); n + 1];
        for (g, _) in model.all_entries() {
            levels[g.len()].insert(g.clone());
        }
        let mut work: Vec<NGram> = Vec::new();
        for g in extra {
            if g.len() > n {
                return Err(Error::invalid(format!(
                    "n-gram {} is longer than the model order {n}",
                    vocab.format(&g)
                )));
            }
            if let Some(&bad) = g.ids().iter().find(|&&id| !vocab.contains_id(id)) {
                return Err(Error::UnknownToken(bad));
            }
            work.push(g);
        }
        while let Some(g) = work.pop() {
            if g.is_empty() || !levels[g.len()].insert(g.clone()) {
                continue;
            }
            if g.len() >= 2 {
                work.push(g.history());
                work.push(g.backoff());
            }
        }

        let mut ngrams = vec![NGram::empty()];
        let mut index: HashMap<NGram, u32> = HashMap::new();
        index.insert(NGram::empty(), 0);
        let mut level_start = vec![0, 1];
        for level in levels.iter().skip(1) {
            let mut keyed: Vec<((u32, u32, TokenId), NGram)> = level
                .iter()
                .map(|g| {
                    let key = (index[&g.backoff()], index[&g.history()], g.ids()[0]);
                    (key, g.clone())
                })
                .collect();
            keyed.sort_unstable_by_key(|(k, _)| *k);
            for (_, g) in keyed {
                index.insert(g.clone(), ngrams.len() as u32);
                ngrams.push(g);
            }
            level_start.push(ngrams.len());
        }

        let num = ngrams.len();
        let mut hist = vec![0u32; num];
        let mut backoff = vec![0u32; num];
        let mut in_model = vec![false; num];
        let mut explicit_bow = vec![false; num];
        let mut predictable = vec![true; num];
        let mut p_out = vec![0.0; num];
        let mut bow_out = vec![1.0; num];
        for x in 1..num {
            let g = &ngrams[x];
            hist[x] = index[&g.history()];
            backoff[x] = index[&g.backoff()];
            predictable[x] = vocab.is_predictable(g.word().expect("non-root node"));
            if let Some(e) = model.get(g) {
                in_model[x] = true;
                if let Some(lb) = e.logbow {
                    explicit_bow[x] = true;
                    bow_out[x] = 10f64.powf(lb);
                }
            }
        }
        for x in 1..num {
            p_out[x] = if !predictable[x] {
                0.0
            } else if in_model[x] {
                10f64.powf(model.get(&ngrams[x]).expect("model entry").logp)
            } else {
                bow_out[hist[x] as usize] * p_out[backoff[x] as usize]
            };
        }

        let children = Csr::from_parents(&hist, num);
        let extensions = Csr::from_parents(&backoff, num);

        let mut history_mass = vec![0.0; num];
        let mut history_support = 0;
        if let Some(dist) = history {
            for (h, p) in dist.iter() {
                if h.len() + 1 > n {
                    return Err(Error::invalid(format!(
                        "history {} is longer than n-1 = {}",
                        vocab.format(h),
                        n - 1
                    )));
                }
                if let Some(&bad) = h.ids().iter().find(|&&id| !vocab.contains_id(id)) {
                    return Err(Error::UnknownToken(bad));
                }
                let node = (0..=h.len())
                    .find_map(|start| index.get(&NGram::new(&h.ids()[start..])))
                    .copied()
                    .unwrap_or(0);
                history_mass[node as usize] += p;
                history_support += 1;
            }
        }

        Ok(SuffixGraph {
            order: n,
            vocab_size: vocab.len(),
            ngrams,
            level_start,
            index,
            hist,
            backoff,
            in_model,
            explicit_bow,
            predictable,
            p_out,
            bow_out,
            children,
            extensions,
            history_mass,
            history_support,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_nodes(&self) -> usize {
        self.ngrams.len()
    }

    pub fn node(&self, g: &NGram) -> Option<usize> {
        self.index.get(g).map(|&i| i as usize)
    }

    pub fn ngram(&self, node: usize) -> &NGram {
        &self.ngrams[node]
    }

    pub fn level(&self, k: usize) -> std::ops::Range<usize> {
        self.level_start[k]..self.level_start[k + 1]
    }

    pub fn is_in_model(&self, node: usize) -> bool {
        self.in_model[node]
    }

    pub fn has_explicit_bow(&self, node: usize) -> bool {
        self.explicit_bow[node]
    }

    pub fn is_predictable(&self, node: usize) -> bool {
        self.predictable[node]
    }

    /// Node carries a backoff weight in its own right: it has continuations,
    /// or the input model gave it one.
    pub fn is_history(&self, node: usize) -> bool {
        node == 0
            || (self.ngrams[node].len() < self.order
                && (!self.children.of(node).is_empty() || self.explicit_bow[node]))
    }

    pub fn hist(&self, node: usize) -> usize {
        self.hist[node] as usize
    }

    pub fn suffix(&self, node: usize) -> usize {
        self.backoff[node] as usize
    }

    /// Full backoff conditional of the input model at the node.
    pub fn p_out(&self, node: usize) -> f64 {
        self.p_out[node]
    }

    pub fn bow_out(&self, node: usize) -> f64 {
        self.bow_out[node]
    }

    /// Number of histories in the attached distribution.
    pub fn history_support(&self) -> usize {
        self.history_support
    }

    /// Scaling factors and normalizers for per-node parameters `lambda`
    /// (zero for nodes without a constraint).
    pub fn normalizers(&self, lambda: &[f64]) -> Normalized {
        assert_eq!(lambda.len(), self.num_nodes());
        let num = self.num_nodes();
        let mut ops = 0u64;

        let mut scale = vec![1.0; num];
        for k in 1..=self.order {
            let range = self.level(k);
            let (lower, upper) = scale.split_at_mut(range.start);
            let lower = &*lower;
            upper[..range.len()]
                .par_iter_mut()
                .with_min_len(PAR_MIN_LEN)
                .enumerate()
                .for_each(|(i, c)| {
                    let x = range.start + i;
                    let l = lambda[x];
                    let base = lower[self.backoff[x] as usize];
                    *c = if l == 0.0 { base } else { base * l.exp() };
                });
            ops += range.len() as u64;
        }

        let mut z = vec![f64::NAN; num];
        let mut root = Neumaier::default();
        for x in self.level(1) {
            if self.predictable[x] {
                root.add(self.p_out[x] * scale[x]);
                ops += 1;
            }
        }
        z[0] = root.total();
        for k in 1..self.order {
            let range = self.level(k);
            let (lower, upper) = z.split_at_mut(range.start);
            let lower = &*lower;
            upper[..range.len()]
                .par_iter_mut()
                .with_min_len(PAR_MIN_LEN)
                .enumerate()
                .for_each(|(i, zv)| {
                    let v = range.start + i;
                    let bow = self.bow_out[v];
                    let mut acc = bow * lower[self.backoff[v] as usize];
                    for &x in self.children.of(v) {
                        let x = x as usize;
                        if !self.predictable[x] {
                            continue;
                        }
                        let b = self.backoff[x] as usize;
                        acc += self.p_out[x] * scale[x] - bow * self.p_out[b] * scale[b];
                    }
                    *zv = acc;
                });
            ops += range.len() as u64 + self.children.span(range);
        }
        Normalized { scale, z, ops }
    }

    /// Right-aligned sums R(y) for every node of the model `p_out * c / Z`
    /// described by `norm`, weighted by the attached history distribution.
    pub fn right_sums(&self, norm: &Normalized) -> RightSums {
        let num = self.num_nodes();
        let n = self.order;
        let z = &norm.z;
        let scale = &norm.scale;
        let mut ops = 0u64;

        let mut q = vec![0.0; num];
        q.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .skip(1)
            .for_each(|(x, qx)| {
                if self.predictable[x] {
                    *qx = self.p_out[x] * scale[x] / z[self.hist[x] as usize];
                }
            });
        let mut bow = vec![1.0; num];
        let below_top = self.level_start[1]..self.level_start[n];
        bow[below_top.clone()]
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(i, b)| {
                let v = below_top.start + i;
                *b = self.bow_out[v] * z[self.backoff[v] as usize] / z[v];
            });
        let mut delta = vec![0.0; num];
        delta
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .skip(1)
            .for_each(|(x, d)| {
                let h = self.hist[x] as usize;
                *d = if h == 0 {
                    q[x]
                } else {
                    q[x] - bow[h] * q[self.backoff[x] as usize]
                };
            });
        ops += 3 * (num as u64 - 1);

        // history-weighted backoff mass, top level down
        let mut g = vec![0.0; num];
        for k in (0..n).rev() {
            let range = self.level(k);
            let (lower, upper) = g.split_at_mut(range.end);
            let upper = &*upper;
            let offset = range.end;
            let cur = &mut lower[range.start..];
            let top = k + 1 == n;
            cur.par_iter_mut()
                .with_min_len(PAR_MIN_LEN)
                .enumerate()
                .for_each(|(i, gv)| {
                    let v = range.start + i;
                    let mut acc = self.history_mass[v];
                    if !top {
                        for &x in self.extensions.of(v) {
                            let x = x as usize;
                            acc += bow[x] * upper[x - offset];
                        }
                    }
                    *gv = acc;
                });
            ops += range.len() as u64;
            if !top {
                ops += self.extensions.span(range);
            }
        }

        // accumulated corrections from all longer nodes sharing the suffix
        let mut t = vec![0.0; num];
        for k in (0..n).rev() {
            let range = self.level(k);
            let (lower, upper) = t.split_at_mut(range.end);
            let upper = &*upper;
            let offset = range.end;
            let cur = &mut lower[range.start..];
            cur.par_iter_mut()
                .with_min_len(PAR_MIN_LEN)
                .enumerate()
                .for_each(|(i, tv)| {
                    let y = range.start + i;
                    let mut acc = 0.0;
                    for &x in self.extensions.of(y) {
                        let x = x as usize;
                        acc += delta[x] * g[self.hist[x] as usize] + upper[x - offset];
                    }
                    *tv = acc;
                });
            ops += self.extensions.span(range);
        }

        let mut values = vec![0.0; num];
        values
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .skip(1)
            .for_each(|(y, r)| {
                *r = g[self.hist[y] as usize] * q[y] + t[y];
            });
        ops += num as u64 - 1;
        RightSums { values, q, bow, ops }
    }

    /// Unweighted backoff-weight sums over all histories of full length
    /// n-1 ending in each node below order n-1: `G(v) = Σ_x bow(x v) G(x v)`
    /// with `G = 1` at length n-1. Histories that are not nodes contribute
    /// in closed form through powers of the vocabulary size.
    pub(crate) fn unweighted_bow_sums(&self, bow: &[f64]) -> Vec<f64> {
        let n = self.order;
        let v = self.vocab_size as f64;
        let mut g = vec![f64::NAN; self.num_nodes()];
        if n < 2 {
            return g;
        }
        for x in self.level(n - 1) {
            g[x] = 1.0;
        }
        for k in (0..n - 1).rev() {
            // each unstored one-token extension stands for V^(n-2-k) full histories
            let unstored = v.powi((n - 2 - k) as i32);
            for y in self.level(k) {
                let ext = self.extensions.of(y);
                let mut acc = Neumaier::default();
                for &x in ext {
                    acc.add(bow[x as usize] * g[x as usize]);
                }
                acc.add((v - ext.len() as f64) * unstored);
                g[y] = acc.total();
            }
        }
        g
    }

    /// History-weighted backoff-weight sums with the given weights.
    pub(crate) fn weighted_bow_sums(&self, bow: &[f64]) -> Vec<f64> {
        let n = self.order;
        let mut g = vec![0.0; self.num_nodes()];
        for k in (0..n).rev() {
            for y in self.level(k) {
                let mut acc = self.history_mass[y];
                if k + 1 < n {
                    for &x in self.extensions.of(y) {
                        acc += bow[x as usize] * g[x as usize];
                    }
                }
                g[y] = acc;
            }
        }
        g
    }
}
