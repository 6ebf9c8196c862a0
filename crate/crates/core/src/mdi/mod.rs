//! MDI adaptation by generalized iterative scaling.
//!
//! The adapted model has the exponential form `p_out(w|h) c(hw) / Z(h)`
//! where `c` multiplies `exp(λ)` over every constrained suffix of `hw`.
//! Because constraints are suffix indicator sets, `c` inherits the backoff
//! structure of `p_out` and so does the adapted model; all sums run over
//! the [`graph::SuffixGraph`] in time linear in entries plus constraints.

pub mod graph;

use std::collections::HashMap;
use std::time::Instant;

use log::{debug, info};

use crate::arpa::{BackoffModel, Entry, LOG_PROB_SENTINEL};
use crate::stats::{ConstraintSet, HistoryDistribution};
use crate::{Error, NGram, Result};

use graph::{Normalized, RightSums, SuffixGraph};

/// Per-constraint λ parameters; absent n-grams have λ = 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalingField {
    entries: Vec<(NGram, f64)>,
    index: HashMap<NGram, usize>,
}

impl ScalingField {
    pub fn new() -> Self {
        Self::default()
    }

    /// One zero λ per constraint, in constraint order.
    pub fn zeros(constraints: &ConstraintSet) -> Self {
        Self::from_pairs(constraints.ngrams().map(|g| (g.clone(), 0.0))).expect("constraints are duplicate-free")
    }

    pub fn from_pairs<I: IntoIterator<Item = (NGram, f64)>>(pairs: I) -> Result<Self> {
        let mut field = Self::new();
        for (g, l) in pairs {
            if g.is_empty() {
                return Err(Error::invalid("scaling field key must be non-empty"));
            }
            if field.index.contains_key(&g) {
                return Err(Error::invalid(format!("duplicate scaling field key {g:?}")));
            }
            field.index.insert(g.clone(), field.entries.len());
            field.entries.push((g, l));
        }
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lambda(&self, g: &NGram) -> f64 {
        self.index.get(g).map(|&i| self.entries[i].1).unwrap_or(0.0)
    }

    /// Sets λ for a key already in the field.
    pub fn set(&mut self, g: &NGram, lambda: f64) -> Result<()> {
        let i = *self
            .index
            .get(g)
            .ok_or_else(|| Error::invalid(format!("{g:?} is not a scaling field key")))?;
        self.entries[i].1 = lambda;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, f64)> {
        self.entries.iter().map(|(g, l)| (g, *l))
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, l)| *l).collect()
    }

    /// `exp` of the sum of λ over all suffixes of `ngram` present in the field.
    pub fn scaling_factor(&self, ngram: &NGram) -> f64 {
        let s: f64 = (1..=ngram.len()).map(|k| self.lambda(&ngram.suffix(k))).sum();
        s.exp()
    }
}

/// Normalizers Z(h), including Z(∅).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormalizerTable {
    values: HashMap<NGram, f64>,
}

impl NormalizerTable {
    pub fn get(&self, h: &NGram) -> Option<f64> {
        self.values.get(h).copied()
    }

    /// Z at `h`, or at its longest stored suffix. A history that is not a
    /// node has no own continuations or constraints, so it shares Z with
    /// its backoff history.
    pub fn lookup(&self, h: &NGram) -> Option<f64> {
        (0..=h.len()).find_map(|start| self.get(&NGram::new(&h.ids()[start..])))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, f64)> {
        self.values.iter().map(|(h, z)| (h, *z))
    }

    fn from_graph(graph: &SuffixGraph, z: &[f64]) -> Self {
        let below_top = 0..graph.level(graph.order()).start;
        let values = below_top.map(|v| (graph.ngram(v).clone(), z[v])).collect();
        NormalizerTable { values }
    }
}

/// Auxiliary backoff-weight sums keyed by suffix (lengths 0..=n-2).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GTable {
    values: HashMap<NGram, f64>,
    fallback: Vec<f64>,
}

impl GTable {
    /// g at `s`. Suffixes absent from the model have no stored extensions;
    /// their value depends only on length.
    pub fn get(&self, s: &NGram) -> Option<f64> {
        self.values
            .get(s)
            .copied()
            .or_else(|| self.fallback.get(s.len()).copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Backoff-weight sums over one-token-longer histories.
///
/// Unweighted, `g(s) = Σ_x bow(x s) g(x s)` over every token x with
/// `g = 1` at length n-1, so at length n-2 it is the plain sum of backoff
/// weights. Weighted, every history contributes its probability times the
/// backoff weights met on the way down to `s`.
pub fn compute_g(model: &BackoffModel, weights: Option<&HistoryDistribution>) -> Result<GTable> {
    let n = model.order();
    if n < 2 {
        return Err(Error::invalid("g sums need a model of order at least 2"));
    }
    let graph = SuffixGraph::build(model, std::iter::empty(), weights)?;
    let bow: Vec<f64> = (0..graph.num_nodes()).map(|v| graph.bow_out(v)).collect();
    let (g, fallback) = match weights {
        None => {
            let v = model.vocab().len() as f64;
            let fallback = (0..=n - 2).map(|k| v.powi((n - 1 - k) as i32)).collect();
            (graph.unweighted_bow_sums(&bow), fallback)
        }
        Some(_) => (graph.weighted_bow_sums(&bow), vec![0.0; n - 1]),
    };
    let values = (0..graph.level(n - 1).start).map(|v| (graph.ngram(v).clone(), g[v])).collect();
    Ok(GTable { values, fallback })
}

/// `p_out` plus a constraint set laid out on one suffix graph; evaluates
/// normalizers and marginals for any parameter vector.
#[derive(Clone, Debug)]
pub struct MdiProblem {
    graph: SuffixGraph,
    constraint_nodes: Vec<usize>,
    targets: Vec<f64>,
}

/// Normalizers, adapted quantities and constraint marginals for one λ.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub normalized: Normalized,
    pub sums: RightSums,
    pub marginals: Vec<f64>,
}

impl Evaluation {
    /// Accumulator updates performed.
    pub fn ops(&self) -> u64 {
        self.normalized.ops + self.sums.ops
    }
}

impl MdiProblem {
    pub fn new(p_out: &BackoffModel, constraints: &ConstraintSet, history: &HistoryDistribution) -> Result<Self> {
        let graph = SuffixGraph::build(p_out, constraints.ngrams().cloned(), Some(history))?;
        let mut constraint_nodes = Vec::with_capacity(constraints.len());
        for c in constraints.iter() {
            let node = graph.node(&c.ngram).expect("constraint n-grams are graph nodes");
            if !graph.is_predictable(node) {
                return Err(Error::invalid(format!(
                    "constraint {} predicts the sentence-start symbol",
                    p_out.vocab().format(&c.ngram)
                )));
            }
            constraint_nodes.push(node);
        }
        Ok(MdiProblem {
            graph,
            constraint_nodes,
            targets: constraints.targets(),
        })
    }

    pub fn graph(&self) -> &SuffixGraph {
        &self.graph
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_nodes.len()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Scatters per-constraint λ onto graph nodes.
    pub fn node_lambdas(&self, lambdas: &[f64]) -> Vec<f64> {
        assert_eq!(lambdas.len(), self.constraint_nodes.len());
        let mut out = vec![0.0; self.graph.num_nodes()];
        for (&node, &l) in self.constraint_nodes.iter().zip(lambdas) {
            out[node] = l;
        }
        out
    }

    pub fn normalizers(&self, lambdas: &[f64]) -> Result<Normalized> {
        let norm = self.graph.normalizers(&self.node_lambdas(lambdas));
        check_normalizers(&self.graph, &norm.z)?;
        Ok(norm)
    }

    pub fn evaluate(&self, lambdas: &[f64]) -> Result<Evaluation> {
        let normalized = self.normalizers(lambdas)?;
        let sums = self.graph.right_sums(&normalized);
        let marginals = self.constraint_nodes.iter().map(|&x| sums.values[x]).collect();
        Ok(Evaluation {
            normalized,
            sums,
            marginals,
        })
    }

    pub fn normalizer_table(&self, norm: &Normalized) -> NormalizerTable {
        NormalizerTable::from_graph(&self.graph, &norm.z)
    }
}

fn check_normalizers(graph: &SuffixGraph, z: &[f64]) -> Result<()> {
    for (v, &zv) in z.iter().enumerate().take(graph.level(graph.order()).start) {
        if !(zv > 0.0 && zv.is_finite()) {
            return Err(Error::NonPositiveNormalizer {
                history: graph.ngram(v).clone(),
                value: zv,
            });
        }
    }
    Ok(())
}

fn field_lambdas(graph: &SuffixGraph, field: &ScalingField) -> Vec<f64> {
    let mut out = vec![0.0; graph.num_nodes()];
    for (g, l) in field.iter() {
        out[graph.node(g).expect("field keys are graph nodes")] = l;
    }
    out
}

/// Normalizers for the model scaled by `field`, at every model history,
/// every field history and every requested history.
pub fn compute_normalizers<I>(model: &BackoffModel, field: &ScalingField, histories: I) -> Result<NormalizerTable>
where
    I: IntoIterator<Item = NGram>,
{
    let n = model.order();
    let mut extra: Vec<NGram> = field.iter().map(|(g, _)| g.clone()).collect();
    for h in histories {
        if h.len() >= n {
            return Err(Error::invalid(format!("history {h:?} is longer than n-1")));
        }
        extra.push(h);
    }
    let graph = SuffixGraph::build(model, extra, None)?;
    let norm = graph.normalizers(&field_lambdas(&graph, field));
    check_normalizers(&graph, &norm.z)?;
    Ok(NormalizerTable::from_graph(&graph, &norm.z))
}

/// Marginals of the model `p_out c / Z` under `history`, one per constraint.
pub fn compute_marginals(
    p_out: &BackoffModel,
    field: &ScalingField,
    normalizers: &NormalizerTable,
    history: &HistoryDistribution,
    constraints: &ConstraintSet,
) -> Result<Vec<f64>> {
    if constraints.is_empty() {
        return Ok(Vec::new());
    }
    let extra = field.iter().map(|(g, _)| g.clone()).chain(constraints.ngrams().cloned());
    let graph = SuffixGraph::build(p_out, extra.collect::<Vec<_>>(), Some(history))?;
    let mut norm = graph.normalizers(&field_lambdas(&graph, field));
    for v in 0..graph.level(graph.order()).start {
        norm.z[v] = normalizers
            .lookup(graph.ngram(v))
            .ok_or_else(|| Error::MissingNormalizer(graph.ngram(v).clone()))?;
    }
    check_normalizers(&graph, &norm.z)?;
    let sums = graph.right_sums(&norm);
    Ok(constraints
        .iter()
        .map(|c| sums.values[graph.node(&c.ngram).expect("constraint n-grams are graph nodes")])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GisOptions {
    /// Step size multiplying each log-ratio update.
    pub gamma: f64,
    /// Convergence threshold on the largest absolute log ratio.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GisOptions {
    fn default() -> Self {
        GisOptions {
            gamma: 1.0,
            tol: 1e-4,
            max_iters: 200,
        }
    }
}

impl GisOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma {} must be positive", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol {} must be positive", self.tol)));
        }
        Ok(())
    }
}

/// One evaluation of the current field. `iter` counts the updates applied
/// before the ratio was measured, so a run logs 0, 1, ..., final.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub max_abs_log_ratio: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GisStatus {
    Converged,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct GisState {
    /// Parameter updates applied so far.
    pub iter: usize,
    pub field: ScalingField,
    /// Normalizers for `field`; `None` right after an update.
    pub normalizers: Option<NormalizerTable>,
    /// Model marginals per constraint, for the field they were computed at.
    pub marginals: Vec<f64>,
    pub max_log_ratio: f64,
    pub log: Vec<IterationRecord>,
}

impl GisState {
    pub fn initial(constraints: &ConstraintSet) -> Self {
        GisState {
            iter: 0,
            field: ScalingField::zeros(constraints),
            normalizers: None,
            marginals: Vec::new(),
            max_log_ratio: f64::INFINITY,
            log: Vec::new(),
        }
    }
}

fn max_abs_log_ratio(targets: &[f64], marginals: &[f64]) -> f64 {
    targets
        .iter()
        .zip(marginals)
        .map(|(t, m)| (t / m).ln().abs())
        .fold(0.0, |acc: f64, r| if r.is_nan() { f64::NAN } else { acc.max(r) })
}

/// One parameter update `λ_j += γ ln(target_j / marginal_j)`.
pub fn gis_step(mut state: GisState, constraints: &ConstraintSet, gamma: f64) -> Result<GisState> {
    if state.marginals.len() != constraints.len() {
        return Err(Error::invalid("marginals are not current for this constraint set"));
    }
    let mut updates = Vec::with_capacity(constraints.len());
    for (c, &m) in constraints.iter().zip(&state.marginals) {
        let step = gamma * (c.target / m).ln();
        if !step.is_finite() {
            return Err(Error::Diverged {
                iter: state.iter,
                value: step.abs(),
            });
        }
        updates.push((c, step));
    }
    for (c, step) in updates {
        let l = state.field.lambda(&c.ngram);
        state.field.set(&c.ngram, l + step)?;
    }
    state.iter += 1;
    state.normalizers = None;
    Ok(state)
}

#[derive(Clone, Debug)]
pub struct GisOutcome {
    pub state: GisState,
    pub normalizers: NormalizerTable,
    pub status: GisStatus,
}

/// Generalized iterative scaling from λ = 0 until the largest absolute log
/// ratio drops below `tol` or `max_iters` updates have been made.
pub fn run_gis(
    p_out: &BackoffModel,
    constraints: &ConstraintSet,
    history: &HistoryDistribution,
    opts: GisOptions,
) -> Result<GisOutcome> {
    opts.validate()?;
    let problem = MdiProblem::new(p_out, constraints, history)?;
    let mut state = GisState::initial(constraints);
    let targets = problem.targets().to_vec();
    loop {
        let started = Instant::now();
        let eval = problem.evaluate(&state.field.lambdas())?;
        let ratio = max_abs_log_ratio(&targets, &eval.marginals);
        if !ratio.is_finite() {
            return Err(Error::Diverged {
                iter: state.iter,
                value: ratio,
            });
        }
        state.marginals = eval.marginals;
        state.max_log_ratio = ratio;
        let status = if ratio < opts.tol {
            Some(GisStatus::Converged)
        } else if state.iter >= opts.max_iters {
            Some(GisStatus::MaxIters)
        } else {
            None
        };
        if let Some(status) = status {
            state.log.push(IterationRecord {
                iter: state.iter,
                max_abs_log_ratio: ratio,
                wall_seconds: started.elapsed().as_secs_f64(),
            });
            let normalizers = problem.normalizer_table(&eval.normalized);
            state.normalizers = Some(normalizers.clone());
            info!("GIS stopped after {} updates: {:?}, max |log ratio| {:.3e}", state.iter, status, ratio);
            return Ok(GisOutcome {
                state,
                normalizers,
                status,
            });
        }
        let measured_at = state.iter;
        state = gis_step(state, constraints, opts.gamma)?;
        let record = IterationRecord {
            iter: measured_at,
            max_abs_log_ratio: ratio,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        debug!("iter {}\t{:.6e}\t{:.6}", record.iter, record.max_abs_log_ratio, record.wall_seconds);
        state.log.push(record);
    }
}

/// The adapted model `p_out c / Z` written back as a backoff model.
///
/// Entries are every `p_out` entry plus every field n-gram, closed under
/// histories and suffixes. Explicit probabilities are `p_out(x) c(x) /
/// Z(hist x)` and backoff weights `bow_out(v) Z(suffix v) / Z(v)`.
pub fn build_adapted_model(
    p_out: &BackoffModel,
    field: &ScalingField,
    normalizers: &NormalizerTable,
) -> Result<BackoffModel> {
    let graph = SuffixGraph::build(p_out, field.iter().map(|(g, _)| g.clone()).collect::<Vec<_>>(), None)?;
    let mut norm = graph.normalizers(&field_lambdas(&graph, field));
    for v in 0..graph.level(graph.order()).start {
        norm.z[v] = normalizers
            .lookup(graph.ngram(v))
            .ok_or_else(|| Error::MissingNormalizer(graph.ngram(v).clone()))?;
    }
    check_normalizers(&graph, &norm.z)?;
    Ok(adapted_from_graph(p_out, &graph, &norm))
}

fn adapted_from_graph(p_out: &BackoffModel, graph: &SuffixGraph, norm: &Normalized) -> BackoffModel {
    let n = graph.order();
    let entries = (1..graph.num_nodes()).map(|x| {
        let g = graph.ngram(x).clone();
        let logp = if graph.is_predictable(x) {
            let q = graph.p_out(x) * norm.scale[x] / norm.z[graph.hist(x)];
            if q > 0.0 {
                q.log10()
            } else {
                LOG_PROB_SENTINEL
            }
        } else {
            p_out.get(&g).map(|e| e.logp).unwrap_or(LOG_PROB_SENTINEL)
        };
        let logbow = (g.len() < n && (graph.is_history(x) || graph.has_explicit_bow(x)))
            .then(|| (graph.bow_out(x) * norm.z[graph.suffix(x)] / norm.z[x]).log10());
        (g, Entry::new(logp, logbow))
    });
    BackoffModel::from_entries(p_out.vocab().clone(), n, entries.collect::<Vec<_>>())
        .expect("suffix graph nodes are closed")
}

/// Runs GIS and builds the adapted model from the final parameters.
pub fn adapt(
    p_out: &BackoffModel,
    constraints: &ConstraintSet,
    history: &HistoryDistribution,
    opts: GisOptions,
) -> Result<(BackoffModel, GisOutcome)> {
    let outcome = run_gis(p_out, constraints, history, opts)?;
    let model = build_adapted_model(p_out, &outcome.state.field, &outcome.normalizers)?;
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arpa::tests::m1;
    use crate::stats::Constraint;

    fn ids(m: &BackoffModel, s: &str) -> NGram {
        m.vocab().parse(s).unwrap()
    }

    fn half_half(m: &BackoffModel) -> HistoryDistribution {
        HistoryDistribution::new(vec![(ids(m, "a"), 0.5), (ids(m, "b"), 0.5)]).unwrap()
    }

    fn field_a(m: &BackoffModel) -> ScalingField {
        ScalingField::from_pairs([(ids(m, "a"), 2f64.ln())]).unwrap()
    }

    #[test]
    fn scaling_factor_multiplies_suffixes() {
        let f = ScalingField::from_pairs([(NGram::new(&[3]), 2f64.ln()), (NGram::new(&[4, 3]), 3f64.ln())]).unwrap();
        assert!((f.scaling_factor(&NGram::new(&[1, 4, 3])) - 6.0).abs() < 1e-12);
        assert!((f.scaling_factor(&NGram::new(&[1, 2, 3])) - 2.0).abs() < 1e-12);
        assert_eq!(ScalingField::new().scaling_factor(&NGram::new(&[1, 2, 3])), 1.0);
    }

    #[test]
    fn m1_normalizers() {
        let m = m1();
        let z = compute_normalizers(&m, &field_a(&m), [ids(&m, "b")]).unwrap();
        assert!((z.get(&NGram::empty()).unwrap() - 1.6).abs() < 1e-12);
        assert!((z.get(&ids(&m, "a")).unwrap() - 1.3).abs() < 1e-12);
        assert!((z.get(&ids(&m, "b")).unwrap() - 1.6).abs() < 1e-12);

        let z = compute_normalizers(&m, &ScalingField::new(), []).unwrap();
        assert!(z.iter().all(|(_, v)| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn m1_g_sums() {
        let m = m1();
        let g = compute_g(&m, None).unwrap();
        assert!((g.get(&NGram::empty()).unwrap() - 1.5).abs() < 1e-12);
        let g = compute_g(&m, Some(&half_half(&m))).unwrap();
        assert!((g.get(&NGram::empty()).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn m1_marginal_without_scaling() {
        let m = m1();
        let cs = ConstraintSet::new(vec![Constraint {
            ngram: ids(&m, "a"),
            target: 0.6,
            count: 1,
        }])
        .unwrap();
        let z = compute_normalizers(&m, &ScalingField::new(), []).unwrap();
        let r = compute_marginals(&m, &ScalingField::new(), &z, &half_half(&m), &cs).unwrap();
        assert!((r[0] - 0.45).abs() < 1e-12);
        let none = compute_marginals(&m, &ScalingField::new(), &z, &half_half(&m), &ConstraintSet::empty()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn step_adds_scaled_log_ratio() {
        let m = m1();
        let cs = ConstraintSet::new(vec![Constraint {
            ngram: ids(&m, "a"),
            target: 0.6,
            count: 1,
        }])
        .unwrap();
        let mut state = GisState::initial(&cs);
        state.marginals = vec![0.45];
        let full = gis_step(state.clone(), &cs, 1.0).unwrap();
        assert!((full.field.lambdas()[0] - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        let half = gis_step(state.clone(), &cs, 0.5).unwrap();
        assert!((half.field.lambdas()[0] - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-15);
        state.marginals = vec![0.6];
        assert_eq!(gis_step(state.clone(), &cs, 1.0).unwrap().field.lambdas()[0], 0.0);
        state.marginals = vec![0.0];
        assert!(matches!(gis_step(state, &cs, 1.0), Err(Error::Diverged { .. })));
    }

    #[test]
    fn m1_adapted_model() {
        let m = m1();
        let f = field_a(&m);
        let z = compute_normalizers(&m, &f, []).unwrap();
        let ad = build_adapted_model(&m, &f, &z).unwrap();
        let (a, b) = (ids(&m, "a"), ids(&m, "b"));
        assert!((ad.prob(&NGram::empty(), a.ids()[0]) - 0.75).abs() < 1e-12);
        assert!((ad.prob(&NGram::empty(), b.ids()[0]) - 0.25).abs() < 1e-12);
        assert!((ad.prob(&a, b.ids()[0]) - 0.7 / 1.3).abs() < 1e-12);
        assert!((ad.bow(&a) - 1.6 / 1.3 * 0.5).abs() < 1e-12);
        assert_eq!(ad.num_entries(), m.num_entries());
    }

    #[test]
    fn empty_field_is_identity() {
        let m = m1();
        let f = ScalingField::new();
        let z = compute_normalizers(&m, &f, []).unwrap();
        assert!(build_adapted_model(&m, &f, &z).unwrap().approx_eq(&m, 1e-12));
    }

    #[test]
    fn m1_gis_matches_bisection() {
        let m = m1();
        let cs = ConstraintSet::new(vec![Constraint {
            ngram: ids(&m, "a"),
            target: 0.6,
            count: 1,
        }])
        .unwrap();
        let marginal = |l: f64| {
            let e = l.exp();
            0.5 * (0.3 * e / (0.3 * e + 0.7)) + 0.5 * (0.6 * e / (0.6 * e + 0.4))
        };
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if marginal(mid) < 0.6 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let opts = GisOptions {
            tol: 1e-12,
            max_iters: 10_000,
            ..Default::default()
        };
        let out = run_gis(&m, &cs, &half_half(&m), opts).unwrap();
        assert_eq!(out.status, GisStatus::Converged);
        assert!((out.state.field.lambdas()[0] - lo).abs() < 1e-9);
    }

    #[test]
    fn log_has_one_row_per_evaluation() {
        let m = m1();
        let cs = ConstraintSet::new(vec![Constraint {
            ngram: ids(&m, "a"),
            target: 0.6,
            count: 1,
        }])
        .unwrap();
        let out = run_gis(&m, &cs, &half_half(&m), GisOptions::default()).unwrap();
        let iters: Vec<usize> = out.state.log.iter().map(|r| r.iter).collect();
        assert_eq!(iters, (0..=out.state.iter).collect::<Vec<_>>());
        assert!(out.state.log.last().unwrap().max_abs_log_ratio < 1e-4);
        assert!(out.state.log[0].max_abs_log_ratio > 0.28);
    }

    #[test]
    fn no_constraints_returns_at_once() {
        let m = m1();
        let (ad, out) = adapt(&m, &ConstraintSet::empty(), &half_half(&m), GisOptions::default()).unwrap();
        assert_eq!(out.state.iter, 0);
        assert_eq!(out.status, GisStatus::Converged);
        assert!(ad.approx_eq(&m, 1e-12));
    }

    #[test]
    fn constrained_unigram_reaches_target() {
        let mut v = crate::Vocabulary::with_boundaries();
        v.insert("a");
        let a = v.get("a").unwrap();
        let eos = v.eos().unwrap();
        let bos = v.bos().unwrap();
        let half = 0.5f64.log10();
        let m = BackoffModel::from_entries(
            v,
            1,
            [
                (NGram::unigram(bos), Entry::new(LOG_PROB_SENTINEL, None)),
                (NGram::unigram(a), Entry::new(half, None)),
                (NGram::unigram(eos), Entry::new(half, None)),
            ],
        )
        .unwrap();
        let cs = ConstraintSet::new(vec![Constraint {
            ngram: NGram::unigram(a),
            target: 0.7,
            count: 7,
        }])
        .unwrap();
        let hd = HistoryDistribution::new(vec![(NGram::empty(), 1.0)]).unwrap();
        let (ad, out) = adapt(&m, &cs, &hd, GisOptions::default()).unwrap();
        assert_eq!(out.status, GisStatus::Converged);
        assert!((ad.prob(&NGram::empty(), a) - 0.7).abs() < 1e-4);
        assert!((ad.prob(&NGram::empty(), eos) - 0.3).abs() < 1e-4);
    }
}
