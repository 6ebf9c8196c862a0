//! Backoff n-gram models and the ARPA text format.
//!
//! Probabilities are stored as in the file (log10); the numerical code in
//! [`crate::mdi`] converts to linear space once when it builds its suffix
//! graph. Within each order, entries are kept grouped by suffix (the n-gram
//! without its first token) and, inside a suffix group, by history.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::mdi::graph::SuffixGraph;
use crate::{Error, NGram, Result, TokenId, Vocabulary};

/// Conventional log10 probability written for `<s>`, which is never predicted.
pub const LOG_PROB_SENTINEL: f64 = -99.0;

/// Histories whose probabilities sum further than this from one are flagged.
pub const VALIDATION_THRESHOLD: f64 = 1e-4;

/// One ARPA line: log10 discounted probability and optional log10 backoff weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub logp: f64,
    pub logbow: Option<f64>,
}

impl Entry {
    pub fn new(logp: f64, logbow: Option<f64>) -> Self {
        Entry { logp, logbow }
    }
}

#[derive(Clone, Debug, Default)]
struct OrderTable {
    entries: Vec<(NGram, Entry)>,
    index: HashMap<NGram, u32>,
}

impl OrderTable {
    fn build(mut entries: Vec<(NGram, Entry)>) -> Self {
        entries.sort_by(|(a, _), (b, _)| {
            let (a, b) = (a.ids(), b.ids());
            a[1..].cmp(&b[1..]).then(a[0].cmp(&b[0]))
        });
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (g.clone(), i as u32))
            .collect();
        OrderTable { entries, index }
    }
}

/// An order-n backoff language model.
#[derive(Clone, Debug)]
pub struct BackoffModel {
    vocab: Vocabulary,
    orders: Vec<OrderTable>,
}

impl BackoffModel {
    /// Builds a model, rejecting duplicates and closure violations.
    ///
    /// Every vocabulary token must have a unigram entry; every stored k-gram
    /// (k >= 2) must have its (k-1)-suffix and its history stored.
    pub fn from_entries<I>(vocab: Vocabulary, order: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NGram, Entry)>,
    {
        if order == 0 {
            return Err(Error::invalid("model order must be at least 1"));
        }
        let mut per_order: Vec<Vec<(NGram, Entry)>> = vec![Vec::new(); order];
        let mut seen: Vec<std::collections::HashSet<NGram>> = vec![Default::default(); order];
        for (g, e) in entries {
            let k = g.len();
            if k == 0 || k > order {
                return Err(Error::invalid(format!(
                    "n-gram {} has length {k} outside 1..={order}",
                    vocab.format(&g)
                )));
            }
            if let Some(&bad) = g.ids().iter().find(|&&id| !vocab.contains_id(id)) {
                return Err(Error::UnknownToken(bad));
            }
            if !seen[k - 1].insert(g.clone()) {
                return Err(Error::DuplicateNGram(vocab.format(&g)));
            }
            per_order[k - 1].push((g, e));
        }
        let model = BackoffModel {
            orders: per_order.into_iter().map(OrderTable::build).collect(),
            vocab,
        };
        model.check_closure()?;
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.orders.len()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn get(&self, g: &NGram) -> Option<&Entry> {
        let table = self.orders.get(g.len().checked_sub(1)?)?;
        table.index.get(g).map(|&i| &table.entries[i as usize].1)
    }

    pub fn contains(&self, g: &NGram) -> bool {
        self.get(g).is_some()
    }

    /// Entries of order `k` (1-based) in suffix-grouped order.
    pub fn entries(&self, k: usize) -> impl Iterator<Item = (&NGram, &Entry)> {
        self.orders[k - 1].entries.iter().map(|(g, e)| (g, e))
    }

    /// All entries, lowest order first.
    pub fn all_entries(&self) -> impl Iterator<Item = (&NGram, &Entry)> {
        self.orders.iter().flat_map(|t| t.entries.iter().map(|(g, e)| (g, e)))
    }

    pub fn count(&self, k: usize) -> usize {
        self.orders[k - 1].entries.len()
    }

    /// Total number of entries over all orders (the model size).
    pub fn num_entries(&self) -> usize {
        self.orders.iter().map(|t| t.entries.len()).sum()
    }

    /// Linear-space backoff weight; 1 when the history is unstored or has none.
    pub fn bow(&self, h: &NGram) -> f64 {
        match self.get(h).and_then(|e| e.logbow) {
            Some(lb) => 10f64.powf(lb),
            None => 1.0,
        }
    }

    /// log10 p(w | h) by the backoff recursion: the stored discounted
    /// probability if `h w` is stored, otherwise log bow(h) plus the lookup
    /// on the history shortened from the left. Histories longer than n-1
    /// are truncated.
    pub fn lookup_logprob(&self, h: &NGram, w: TokenId) -> f64 {
        assert!(self.vocab.contains_id(w), "token id {w} is not in the vocabulary");
        let ids = h.ids();
        let keep = ids.len().min(self.order() - 1);
        let ctx = &ids[ids.len() - keep..];
        let mut acc = 0.0;
        for start in 0..=ctx.len() {
            let c = &ctx[start..];
            let mut g: Vec<TokenId> = Vec::with_capacity(c.len() + 1);
            g.extend_from_slice(c);
            g.push(w);
            if let Some(e) = self.get(&NGram::from(g)) {
                return acc + e.logp;
            }
            if !c.is_empty() {
                if let Some(lb) = self.get(&NGram::new(c)).and_then(|e| e.logbow) {
                    acc += lb;
                }
            }
        }
        f64::NEG_INFINITY
    }

    /// Linear-space p(w | h).
    pub fn prob(&self, h: &NGram, w: TokenId) -> f64 {
        10f64.powf(self.lookup_logprob(h, w))
    }

    /// Stored histories: the empty context, every prefix of a stored entry,
    /// and every entry below the top order that carries a backoff weight.
    pub fn histories(&self) -> Vec<NGram> {
        let mut out = BTreeSet::new();
        out.insert(NGram::empty());
        for (k, table) in self.orders.iter().enumerate() {
            for (g, e) in &table.entries {
                if k >= 1 {
                    out.insert(g.history());
                }
                if e.logbow.is_some() && k + 1 < self.order() {
                    out.insert(g.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    /// Checks suffix and history closure and unigram coverage of the vocabulary.
    pub fn check_closure(&self) -> Result<()> {
        for id in 0..self.vocab.len() as TokenId {
            if !self.contains(&NGram::unigram(id)) {
                return Err(Error::Closure {
                    ngram: self.vocab.token(id).unwrap_or_default().to_string(),
                    missing: "unigram entry",
                });
            }
        }
        for table in self.orders.iter().skip(1) {
            for (g, _) in &table.entries {
                if !self.contains(&g.backoff()) {
                    return Err(Error::Closure {
                        ngram: self.vocab.format(g),
                        missing: "suffix",
                    });
                }
                if !self.contains(&g.history()) {
                    return Err(Error::Closure {
                        ngram: self.vocab.format(g),
                        missing: "history",
                    });
                }
            }
        }
        Ok(())
    }

    /// Entry-wise comparison in log10 space. A missing backoff weight
    /// compares equal to an explicit zero.
    pub fn approx_eq(&self, other: &BackoffModel, tol: f64) -> bool {
        if self.order() != other.order() || self.vocab.len() != other.vocab.len() {
            return false;
        }
        if self.vocab.iter().any(|(id, t)| other.vocab.get(t) != Some(id)) {
            return false;
        }
        (1..=self.order()).all(|k| {
            self.count(k) == other.count(k)
                && self.entries(k).all(|(g, e)| match other.get(g) {
                    Some(o) => {
                        (e.logp - o.logp).abs() <= tol
                            && (e.logbow.unwrap_or(0.0) - o.logbow.unwrap_or(0.0)).abs() <= tol
                    }
                    None => false,
                })
        })
    }
}

/// Formats `x` with `digits` significant digits, `%g` style.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == LOG_PROB_SENTINEL {
        return "-99".to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_float(text: &str, line: usize) -> Result<f64> {
    let v: f64 = text.parse().map_err(|_| Error::InvalidFloat {
        line,
        text: text.to_string(),
    })?;
    if v.is_nan() {
        return Err(Error::InvalidFloat {
            line,
            text: text.to_string(),
        });
    }
    Ok(v)
}

enum State {
    Preamble,
    Data,
    Section(usize),
    End,
}

/// Reads an ARPA model. Vocabulary ids follow the order of the unigram
/// section.
pub fn parse_arpa<R: BufRead>(reader: R) -> Result<BackoffModel> {
    let mut state = State::Preamble;
    let mut declared: Vec<(usize, usize)> = Vec::new();
    let mut sections: Vec<Vec<(NGram, Entry)>> = Vec::new();
    let mut vocab = Vocabulary::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let text = line.trim();
        match state {
            State::Preamble => {
                if text == "\\data\\" {
                    state = State::Data;
                }
            }
            State::Data => {
                if text.is_empty() {
                    continue;
                }
                if let Some(rest) = text.strip_prefix("ngram ") {
                    let (k, c) = rest.split_once('=').ok_or_else(|| Error::MalformedHeader {
                        line: lineno,
                        msg: format!("expected `ngram K=COUNT`, got {text:?}"),
                    })?;
                    let parse = |s: &str| {
                        s.trim().parse::<usize>().map_err(|_| Error::MalformedHeader {
                            line: lineno,
                            msg: format!("bad integer in {text:?}"),
                        })
                    };
                    let (k, c) = (parse(k)?, parse(c)?);
                    if k != declared.len() + 1 {
                        return Err(Error::MalformedHeader {
                            line: lineno,
                            msg: format!("orders must be declared as 1..n in sequence, got {k}"),
                        });
                    }
                    declared.push((k, c));
                } else if let Some(k) = section_header(text) {
                    state = enter_section(k, lineno, &declared, &mut sections)?;
                } else {
                    return Err(Error::MalformedHeader {
                        line: lineno,
                        msg: format!("unexpected line in \\data\\ section: {text:?}"),
                    });
                }
            }
            State::Section(k) => {
                if text.is_empty() {
                    continue;
                }
                if text == "\\end\\" {
                    state = State::End;
                    continue;
                }
                if let Some(next) = section_header(text) {
                    state = enter_section(next, lineno, &declared, &mut sections)?;
                    continue;
                }
                let entry = parse_entry(text, k, lineno, &mut vocab)?;
                sections[k - 1].push(entry);
            }
            State::End => {}
        }
    }

    if !matches!(state, State::End) {
        return Err(Error::MalformedHeader {
            line: 0,
            msg: "missing \\end\\ marker".to_string(),
        });
    }
    if declared.is_empty() {
        return Err(Error::MalformedHeader {
            line: 0,
            msg: "no n-gram orders declared".to_string(),
        });
    }
    sections.resize(declared.len(), Vec::new());
    for (&(k, count), found) in declared.iter().zip(&sections) {
        if count != found.len() {
            return Err(Error::CountMismatch {
                order: k,
                declared: count,
                found: found.len(),
            });
        }
    }
    let order = declared.len();
    BackoffModel::from_entries(vocab, order, sections.into_iter().flatten())
}

fn section_header(text: &str) -> Option<usize> {
    text.strip_prefix('\\')?.strip_suffix("-grams:")?.parse().ok()
}

fn enter_section(
    k: usize,
    line: usize,
    declared: &[(usize, usize)],
    sections: &mut Vec<Vec<(NGram, Entry)>>,
) -> Result<State> {
    if k == 0 || k > declared.len() {
        return Err(Error::MalformedHeader {
            line,
            msg: format!("section \\{k}-grams: was not declared in \\data\\"),
        });
    }
    if sections.len() >= k {
        return Err(Error::MalformedHeader {
            line,
            msg: format!("section \\{k}-grams: appears twice or out of order"),
        });
    }
    sections.resize(k, Vec::new());
    Ok(State::Section(k))
}

fn parse_entry(text: &str, k: usize, line: usize, vocab: &mut Vocabulary) -> Result<(NGram, Entry)> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != k + 1 && fields.len() != k + 2 {
        return Err(Error::MalformedEntry {
            line,
            msg: format!("expected {k} tokens with a log probability and optional backoff, got {text:?}"),
        });
    }
    let logp = parse_float(fields[0], line)?;
    let logbow = match fields.get(k + 1) {
        Some(s) => Some(parse_float(s, line)?),
        None => None,
    };
    let tokens = &fields[1..=k];
    let ids: Vec<TokenId> = if k == 1 {
        if vocab.get(tokens[0]).is_some() {
            return Err(Error::DuplicateNGram(tokens[0].to_string()));
        }
        vec![vocab.insert(tokens[0])]
    } else {
        tokens
            .iter()
            .map(|t| {
                vocab.get(t).ok_or_else(|| Error::Closure {
                    ngram: tokens.join(" "),
                    missing: "unigram entry",
                })
            })
            .collect::<Result<_>>()?
    };
    let g = NGram::from(ids);
    if logp > 0.0 {
        return Err(Error::MalformedEntry {
            line,
            msg: format!("positive log probability {logp} for {}", tokens.join(" ")),
        });
    }
    Ok((g, Entry::new(logp, logbow)))
}

/// Writes `model` as ARPA text, entries sorted by token ids within each
/// order, floats with 7 significant digits.
pub fn write_arpa<W: Write>(model: &BackoffModel, mut out: W) -> Result<()> {
    model.check_closure()?;
    let vocab = model.vocab();
    writeln!(out, "\\data\\")?;
    for k in 1..=model.order() {
        writeln!(out, "ngram {k}={}", model.count(k))?;
    }
    for k in 1..=model.order() {
        writeln!(out)?;
        writeln!(out, "\\{k}-grams:")?;
        let mut entries: Vec<_> = model.entries(k).collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (g, e) in entries {
            write!(out, "{}\t{}", format_significant(e.logp, 7), vocab.format(g))?;
            if let Some(lb) = e.logbow {
                write!(out, "\t{}", format_significant(lb, 7))?;
            }
            writeln!(out)?;
        }
    }
    writeln!(out)?;
    writeln!(out, "\\end\\")?;
    out.flush()?;
    Ok(())
}

/// Normalization report: |sum_w p(w|h) - 1| for every stored history.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub deviations: Vec<(NGram, f64)>,
    pub flagged: Vec<(NGram, f64)>,
}

impl ValidationReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|&(_, d)| d).fold(0.0, f64::max)
    }

    pub fn is_normalized(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Sums every stored history's conditional distribution through the
/// hierarchical normalizer recursion with all scaling factors equal to one,
/// so the cost is linear in the model size.
pub fn validate_model(model: &BackoffModel) -> Result<ValidationReport> {
    let graph = SuffixGraph::build(model, std::iter::empty(), None)?;
    let lambdas = vec![0.0; graph.num_nodes()];
    let eval = graph.normalizers(&lambdas);
    let mut deviations = Vec::new();
    for h in model.histories() {
        let node = graph.node(&h).expect("stored histories are graph nodes");
        deviations.push((h, (eval.z[node] - 1.0).abs()));
    }
    let flagged = deviations
        .iter()
        .filter(|(_, d)| !(*d <= VALIDATION_THRESHOLD))
        .cloned()
        .collect();
    Ok(ValidationReport { deviations, flagged })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const M1: &str = "\\data\\\nngram 1=2\nngram 2=1\n\n\\1-grams:\n-0.2218487\ta\t-0.30103\n-0.39794\tb\n\n\\2-grams:\n-0.154902\ta b\n\n\\end\\\n";

    pub(crate) fn m1() -> BackoffModel {
        let mut v = Vocabulary::new();
        let a = v.insert("a");
        let b = v.insert("b");
        BackoffModel::from_entries(
            v,
            2,
            [
                (NGram::unigram(a), Entry::new(0.6f64.log10(), Some(0.5f64.log10()))),
                (NGram::unigram(b), Entry::new(0.4f64.log10(), None)),
                (NGram::new(&[a, b]), Entry::new(0.7f64.log10(), None)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_uniform_unigram() {
        let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.30103\ta\n-0.30103\tb\n\n\\end\\\n";
        let m = parse_arpa(text.as_bytes()).unwrap();
        assert_eq!(m.order(), 1);
        let a = m.vocab().get("a").unwrap();
        assert!((m.prob(&NGram::empty(), a) - 0.5).abs() < 1e-5);
        let mut out = Vec::new();
        write_arpa(&m, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.contains("ngram 1=2"));
        assert!(s.contains("-0.30103\ta\n"));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let text = "\\data\\\nngram 1=2\nngram 2=5\n\n\\1-grams:\n-0.3\ta\t0\n-0.3\tb\t0\n\n\\2-grams:\n-0.3\ta b\n-0.3\tb a\n-0.3\ta a\n-0.3\tb b\n\n\\end\\\n";
        match parse_arpa(text.as_bytes()) {
            Err(Error::CountMismatch { order: 2, declared: 5, found: 4 }) => {}
            other => panic!("expected order-count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_missing_suffix_and_bad_floats() {
        let dup = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\ta\n-0.3\ta\n\n\\end\\\n";
        assert!(matches!(parse_arpa(dup.as_bytes()), Err(Error::DuplicateNGram(_))));

        let dup2 = "\\data\\\nngram 1=2\nngram 2=2\n\n\\1-grams:\n-0.3\ta\n-0.3\tb\n\n\\2-grams:\n-0.3\ta b\n-0.2\ta b\n\n\\end\\\n";
        assert!(matches!(parse_arpa(dup2.as_bytes()), Err(Error::DuplicateNGram(_))));

        let suffix = "\\data\\\nngram 1=3\nngram 2=1\nngram 3=1\n\n\\1-grams:\n-0.5\ta\n-0.5\tb\n-0.5\tc\n\n\\2-grams:\n-0.3\ta b\n\n\\3-grams:\n-0.1\ta b c\n\n\\end\\\n";
        assert!(matches!(
            parse_arpa(suffix.as_bytes()),
            Err(Error::Closure { missing: "suffix", .. })
        ));

        let float = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3x\ta\n\n\\end\\\n";
        assert!(matches!(parse_arpa(float.as_bytes()), Err(Error::InvalidFloat { .. })));

        let header = "\\data\\\nngram x=1\n\n\\1-grams:\n0\ta\n\n\\end\\\n";
        assert!(matches!(parse_arpa(header.as_bytes()), Err(Error::MalformedHeader { .. })));

        let no_end = "\\data\\\nngram 1=1\n\n\\1-grams:\n0\ta\n";
        assert!(matches!(parse_arpa(no_end.as_bytes()), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn backoff_lookup_on_m1() {
        let m = m1();
        let (a, b) = (0, 1);
        let ha = NGram::unigram(a);
        let hb = NGram::unigram(b);
        assert!((m.lookup_logprob(&ha, b) - 0.7f64.log10()).abs() < 1e-12);
        assert!((m.lookup_logprob(&ha, a) - 0.3f64.log10()).abs() < 1e-12);
        assert!((m.lookup_logprob(&hb, a) - 0.6f64.log10()).abs() < 1e-12);
        // histories longer than n-1 are truncated from the left
        assert!((m.lookup_logprob(&NGram::new(&[b, a]), b) - 0.7f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn writes_m1_and_reparses() {
        let m = m1();
        let mut out = Vec::new();
        write_arpa(&m, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.contains("ngram 1=2\nngram 2=1\n"));
        assert!(s.trim_end().ends_with("\\end\\"));
        let back = parse_arpa(s.as_bytes()).unwrap();
        assert!(back.approx_eq(&m, 1e-6));
        let fixture = parse_arpa(M1.as_bytes()).unwrap();
        assert!(fixture.approx_eq(&m, 1e-6));
    }

    #[test]
    fn write_rejects_closure_violation() {
        let mut v = Vocabulary::new();
        let a = v.insert("a");
        let b = v.insert("b");
        let broken = BackoffModel {
            orders: vec![
                OrderTable::build(vec![(NGram::unigram(a), Entry::new(-0.3, None))]),
                OrderTable::build(vec![(NGram::new(&[a, b]), Entry::new(-0.3, None))]),
            ],
            vocab: v,
        };
        assert!(write_arpa(&broken, Vec::new()).is_err());
    }

    #[test]
    fn validation_flags_perturbed_bow() {
        let m = m1();
        let report = validate_model(&m).unwrap();
        assert!(report.is_normalized());
        assert!(report.max_deviation() < 1e-12);

        let mut v = Vocabulary::new();
        let a = v.insert("a");
        let b = v.insert("b");
        let bad = BackoffModel::from_entries(
            v,
            2,
            [
                (NGram::unigram(a), Entry::new(0.6f64.log10(), Some(0.6f64.log10()))),
                (NGram::unigram(b), Entry::new(0.4f64.log10(), None)),
                (NGram::new(&[a, b]), Entry::new(0.7f64.log10(), None)),
            ],
        )
        .unwrap();
        let report = validate_model(&bad).unwrap();
        assert_eq!(report.flagged.len(), 1);
        assert_eq!(report.flagged[0].0, NGram::unigram(a));
        assert!((report.flagged[0].1 - 0.06).abs() < 1e-12);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(-0.25119, 7), "-0.25119");
        assert_eq!(format_significant(-0.251189995664, 7), "-0.25119");
        assert_eq!(format_significant(-1.2345678, 7), "-1.234568");
        assert_eq!(format_significant(-99.0, 7), "-99");
        assert_eq!(format_significant(0.0, 7), "0");
        assert_eq!(format_significant(-12.0, 7), "-12");
        assert_eq!(format_significant(1.5e-9, 7), "1.5e-9");
        assert_eq!(format_significant(1.0 / 3.0, 12), "0.333333333333");
    }

    #[test]
    fn sentinel_and_missing_bows_survive_round_trip() {
        let text = "\\data\\\nngram 1=4\nngram 2=3\n\n\\1-grams:\n-99\t<s>\t-0.2\n-0.5\ta\n-0.6\tb\t-0.1\n-0.7\t</s>\n\n\\2-grams:\n-0.2\t<s> a\n-0.4\tb a\n-0.3\tb </s>\n\n\\end\\\n";
        let m = parse_arpa(text.as_bytes()).unwrap();
        assert_eq!(m.get(&NGram::unigram(0)).unwrap().logp, LOG_PROB_SENTINEL);
        let mut out = Vec::new();
        write_arpa(&m, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.contains("-99\t<s>\t-0.2\n"));
        let back = parse_arpa(s.as_bytes()).unwrap();
        assert!(back.approx_eq(&m, 1e-6));
    }
}
