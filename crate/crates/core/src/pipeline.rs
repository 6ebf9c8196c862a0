//! End-to-end adaptation drivers shared by the command-line tool and the
//! integration tests.

use log::{info, warn};

use crate::mdi::{self, compute_marginals, compute_normalizers, GisOptions, GisOutcome, ScalingField};
use crate::stats::{count_ngrams, history_distribution, select_constraints, Constraint};
use crate::{BackoffModel, ConstraintSet, Error, HistoryDistribution, NGram, Result, TokenId, Vocabulary};

/// Constraints and history distribution of an in-domain corpus, counted
/// against the vocabulary of the model to be adapted.
pub fn corpus_statistics<I, S>(
    model: &BackoffModel,
    lines: I,
    thresholds: &[u64],
) -> Result<(ConstraintSet, HistoryDistribution)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let counts = count_ngrams(lines, model.order(), model.vocab())?;
    let constraints = select_constraints(&counts, thresholds)?;
    let history = history_distribution(&counts)?;
    info!(
        "selected {} constraints per order {:?} over {} events",
        constraints.len(),
        constraints.per_order(),
        counts.events()
    );
    Ok((constraints, history))
}

/// In-domain history distribution for `model`.
pub fn corpus_history<I, S>(model: &BackoffModel, lines: I) -> Result<HistoryDistribution>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    history_distribution(&count_ngrams(lines, model.order(), model.vocab())?)
}

/// Adapts `p_out` to `constraints` under `history`.
pub fn adapt(
    p_out: &BackoffModel,
    constraints: &ConstraintSet,
    history: &HistoryDistribution,
    opts: GisOptions,
) -> Result<(BackoffModel, GisOutcome)> {
    constraints.check_consistency(1e-9)?;
    mdi::adapt(p_out, constraints, history, opts)
}

fn remap(from: &Vocabulary, to: &Vocabulary, ids: &[TokenId]) -> Option<NGram> {
    ids.iter()
        .map(|&id| from.token(id).and_then(|t| to.get(t)))
        .collect::<Option<Vec<_>>>()
        .map(NGram::from)
}

/// Constraints on every stored entry of `in_lm`, with targets equal to the
/// marginals of `reference` under `history`. Entries with tokens the
/// reference lacks are skipped; their number is returned.
pub fn first_pass_constraints(
    in_lm: &BackoffModel,
    reference: &BackoffModel,
    history: &HistoryDistribution,
) -> Result<(ConstraintSet, usize)> {
    let (iv, rv) = (in_lm.vocab(), reference.vocab());
    let mut ours = Vec::new();
    let mut theirs = Vec::new();
    let mut dropped = 0;
    let mut entries: Vec<&NGram> = in_lm.all_entries().map(|(g, _)| g).collect();
    entries.sort();
    for g in entries {
        if !iv.is_predictable(g.word().expect("entries are non-empty")) {
            continue;
        }
        if g.len() > reference.order() {
            return Err(Error::invalid("reference model has lower order than the in-domain model"));
        }
        match remap(iv, rv, g.ids()) {
            Some(r) => {
                ours.push(g.clone());
                theirs.push(Constraint {
                    ngram: r,
                    target: 1.0,
                    count: 0,
                });
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("{dropped} entries skipped: tokens missing from the reference model");
    }
    let mut ref_history = Vec::with_capacity(history.len());
    for (h, p) in history.iter() {
        // keep the part after the last token the reference does not know
        let mut ids: Vec<TokenId> = Vec::new();
        for &id in h.ids() {
            match iv.token(id).and_then(|t| rv.get(t)) {
                Some(j) => ids.push(j),
                None => ids.clear(),
            }
        }
        ids.drain(..ids.len().saturating_sub(reference.order() - 1));
        ref_history.push((NGram::from(ids), p));
    }
    ref_history.sort_by(|a, b| a.0.cmp(&b.0));
    ref_history.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    let ref_history = HistoryDistribution::from_weights(ref_history)?;
    let probe = ConstraintSet::new(theirs)?;
    let field = ScalingField::new();
    let norms = compute_normalizers(reference, &field, std::iter::empty())?;
    let targets = compute_marginals(reference, &field, &norms, &ref_history, &probe)?;
    let constraints = ours
        .into_iter()
        .zip(targets)
        .map(|(ngram, target)| Constraint {
            ngram,
            target: target.min(1.0),
            count: 0,
        })
        .collect();
    Ok((ConstraintSet::new(constraints)?, dropped))
}

/// Adapts the small in-domain model toward the marginals of `reference`
/// while keeping its entry set.
pub fn first_pass_adapt(
    in_lm: &BackoffModel,
    reference: &BackoffModel,
    history: &HistoryDistribution,
    opts: GisOptions,
) -> Result<(BackoffModel, GisOutcome)> {
    let (constraints, _) = first_pass_constraints(in_lm, reference, history)?;
    mdi::adapt(in_lm, &constraints, history, opts)
}
