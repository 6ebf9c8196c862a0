//! Brute-force reference implementations for small models.
//!
//! Everything here enumerates full conditional tables and shares no
//! numerical code with [`crate::mdi`]; it exists so that the linear-time
//! routines can be checked against a direct evaluation.

use crate::mdi::ScalingField;
use crate::stats::{ConstraintSet, HistoryDistribution};
use crate::{BackoffModel, Error, NGram, Result, TokenId};

/// Largest number of table cells [`expand_dense`] will allocate.
pub const DENSE_GUARD: usize = 10_000_000;

/// Full conditional tables `p(w | h)` for every history length 0..n-1.
///
/// Row `h` of length k lives at index `Σ h_i V^(k-1-i)` of table k.
/// The sentence-start column is always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseModel {
    vocab_size: usize,
    order: usize,
    bos: Option<TokenId>,
    tables: Vec<Vec<f64>>,
}

impl DenseModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bos(&self) -> Option<TokenId> {
        self.bos
    }

    fn row_index(&self, h: &[TokenId]) -> usize {
        h.iter().fold(0, |acc, &t| acc * self.vocab_size + t as usize)
    }

    fn context<'a>(&self, h: &'a [TokenId]) -> &'a [TokenId] {
        &h[h.len().saturating_sub(self.order - 1)..]
    }

    /// The conditional distribution after history `h` (truncated to n-1).
    pub fn row(&self, h: &[TokenId]) -> &[f64] {
        let h = self.context(h);
        let i = self.row_index(h) * self.vocab_size;
        &self.tables[h.len()][i..i + self.vocab_size]
    }

    pub fn prob(&self, h: &[TokenId], w: TokenId) -> f64 {
        self.row(h)[w as usize]
    }

    /// Every history of length `k` in row order.
    pub fn histories(&self, k: usize) -> impl Iterator<Item = NGram> + '_ {
        let v = self.vocab_size;
        (0..v.pow(k as u32)).map(move |mut i| {
            let mut ids = vec![0; k];
            for slot in ids.iter_mut().rev() {
                *slot = (i % v) as TokenId;
                i /= v;
            }
            NGram::from(ids)
        })
    }

    /// Largest |row sum - 1| over all rows.
    pub fn max_row_error(&self) -> f64 {
        let v = self.vocab_size;
        self.tables
            .iter()
            .flat_map(|t| t.chunks(v))
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute cell difference; `None` if the shapes differ.
    pub fn max_abs_diff(&self, other: &DenseModel) -> Option<f64> {
        if self.vocab_size != other.vocab_size || self.order != other.order {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.tables.iter().zip(&other.tables) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        Some(worst)
    }

    /// Cellwise `(1 - t) self + t other`; `None` if the shapes differ.
    pub fn mix(&self, other: &DenseModel, t: f64) -> Option<DenseModel> {
        if self.vocab_size != other.vocab_size || self.order != other.order {
            return None;
        }
        let tables = self
            .tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect())
            .collect();
        Some(DenseModel { tables, ..self.clone() })
    }
}

fn stored_prob(model: &BackoffModel, g: &[TokenId]) -> Option<f64> {
    model.get(&NGram::new(g)).map(|e| 10f64.powf(e.logp))
}

fn stored_bow(model: &BackoffModel, h: &[TokenId]) -> f64 {
    match model.get(&NGram::new(h)).and_then(|e| e.logbow) {
        Some(lb) => 10f64.powf(lb),
        None => 1.0,
    }
}

/// Expands every conditional of `model` by the backoff recursion.
pub fn expand_dense(model: &BackoffModel) -> Result<DenseModel> {
    let v = model.vocab().len();
    let n = model.order();
    let cells: usize = (1..=n).map(|k| v.checked_pow(k as u32).unwrap_or(usize::MAX)).fold(0usize, |a, b| a.saturating_add(b));
    if cells > DENSE_GUARD {
        return Err(Error::GuardExceeded(format!("{cells} dense cells for |V| = {v}, n = {n}")));
    }
    let bos = model.vocab().bos();
    let mut dense = DenseModel {
        vocab_size: v,
        order: n,
        bos,
        tables: Vec::with_capacity(n),
    };
    for k in 0..n {
        let mut table = vec![0.0; v.pow(k as u32) * v];
        let histories: Vec<NGram> = dense.histories(k).collect();
        for (r, h) in histories.iter().enumerate() {
            let h = h.ids();
            let lower = if k == 0 { 0 } else { r % v.pow(k as u32 - 1) };
            let bow = if k == 0 { 1.0 } else { stored_bow(model, h) };
            for w in 0..v as TokenId {
                if Some(w) == bos {
                    continue;
                }
                let mut g = h.to_vec();
                g.push(w);
                table[r * v + w as usize] = match stored_prob(model, &g) {
                    Some(p) => p,
                    None if k == 0 => 0.0,
                    None => bow * dense.tables[k - 1][lower * v + w as usize],
                };
            }
        }
        dense.tables.push(table);
    }
    Ok(dense)
}

fn scale(field: &ScalingField, h: &[TokenId], w: TokenId) -> f64 {
    let mut g = h.to_vec();
    g.push(w);
    let mut total = 0.0;
    for start in 0..g.len() {
        total += field.lambda(&NGram::new(&g[start..]));
    }
    total.exp()
}

/// `Σ_w p(w | h) c(h w)` by direct summation.
pub fn naive_normalizer(dense: &DenseModel, field: &ScalingField, h: &NGram) -> f64 {
    let h = dense.context(h.ids());
    dense
        .row(h)
        .iter()
        .enumerate()
        .map(|(w, &p)| p * scale(field, h, w as TokenId))
        .sum()
}

/// The dense table of `p(w | h) c(h w) / Z(h)`.
pub fn dense_scaled(dense: &DenseModel, field: &ScalingField) -> DenseModel {
    let mut out = dense.clone();
    let v = dense.vocab_size;
    for k in 0..dense.order {
        let histories: Vec<NGram> = dense.histories(k).collect();
        for (r, h) in histories.iter().enumerate() {
            let z = naive_normalizer(dense, field, h);
            for w in 0..v {
                let cell = &mut out.tables[k][r * v + w];
                *cell = *cell * scale(field, h.ids(), w as TokenId) / z;
            }
        }
    }
    out
}

/// `Σ_h p̃(h) Σ_w p(w | h) [h w ends with s]` for each constraint.
pub fn dense_marginals(dense: &DenseModel, history: &HistoryDistribution, constraints: &ConstraintSet) -> Vec<f64> {
    constraints
        .iter()
        .map(|c| {
            let s = c.ngram.ids();
            let mut total = 0.0;
            for (h, ph) in history.iter() {
                let h = dense.context(h.ids());
                for (w, &p) in dense.row(h).iter().enumerate() {
                    let mut g = h.to_vec();
                    g.push(w as TokenId);
                    if g.ends_with(s) {
                        total += ph * p;
                    }
                }
            }
            total
        })
        .collect()
}

/// Maximum-entropy normalizer: the prior factors are all dropped, so this is
/// the plain sum of scaling factors over the predictable words.
pub fn me_normalizer(vocab_size: usize, bos: Option<TokenId>, field: &ScalingField, h: &NGram) -> f64 {
    (0..vocab_size as TokenId)
        .filter(|&w| Some(w) != bos)
        .map(|w| scale(field, h.ids(), w))
        .sum()
}

/// Maximum-entropy marginals: `p(w | h) = c(h w) / Σ_w' c(h w')`.
pub fn me_marginals(
    vocab_size: usize,
    bos: Option<TokenId>,
    field: &ScalingField,
    history: &HistoryDistribution,
    constraints: &ConstraintSet,
) -> Vec<f64> {
    constraints
        .iter()
        .map(|c| {
            let mut total = 0.0;
            for (h, ph) in history.iter() {
                let z = me_normalizer(vocab_size, bos, field, h);
                for w in (0..vocab_size as TokenId).filter(|&w| Some(w) != bos) {
                    let mut g = h.ids().to_vec();
                    g.push(w);
                    if g.ends_with(c.ngram.ids()) {
                        total += ph * scale(field, h.ids(), w) / z;
                    }
                }
            }
            total
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct NaiveGisResult {
    pub lambdas: Vec<f64>,
    pub model: DenseModel,
    pub iters: usize,
    pub converged: bool,
}

/// Iterative scaling on dense tables with the same stopping rule as the
/// efficient path: stop when every |ln(target / marginal)| < `tol`, or
/// after `max_iters` updates.
pub fn naive_gis(
    dense: &DenseModel,
    constraints: &ConstraintSet,
    history: &HistoryDistribution,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<NaiveGisResult> {
    let mut field = ScalingField::from_pairs(constraints.ngrams().map(|g| (g.clone(), 0.0)))?;
    let mut iters = 0;
    loop {
        let model = dense_scaled(dense, &field);
        let marginals = dense_marginals(&model, history, constraints);
        let mut worst: f64 = 0.0;
        for (c, m) in constraints.iter().zip(&marginals) {
            let r = (c.target / m).ln().abs();
            if !r.is_finite() {
                return Err(Error::Diverged { iter: iters, value: r });
            }
            worst = worst.max(r);
        }
        let converged = worst < tol;
        if converged || iters >= max_iters {
            return Ok(NaiveGisResult {
                lambdas: field.lambdas(),
                model,
                iters,
                converged,
            });
        }
        for (c, m) in constraints.iter().zip(&marginals) {
            let l = field.lambda(&c.ngram);
            field.set(&c.ngram, l + gamma * (c.target / m).ln())?;
        }
        iters += 1;
    }
}
