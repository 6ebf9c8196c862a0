use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use mdilm::arpa::validate_model;
use mdilm::bench::{run_bench, BenchOptions};
use mdilm::eval::{linear_interpolate, perplexity, OovPolicy, PerplexityReport};
use mdilm::mdi::{GisOutcome, GisStatus};
use mdilm::stats::{count_ngrams, history_distribution, select_constraints};
use mdilm::{parse_arpa, pipeline, write_arpa, BackoffModel, ConstraintSet, CountTable, Vocabulary};

use crate::args::{HistorySource, Settings};
use crate::UsageError;

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    Done,
    NotConverged,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<io::Result<Vec<_>>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn read_lm(path: &Path) -> Result<BackoffModel> {
    let model = parse_arpa(open(path)?).with_context(|| format!("parsing {}", path.display()))?;
    info!(
        "{}: order {}, {} entries, {} words",
        path.display(),
        model.order(),
        model.num_entries(),
        model.vocab().len()
    );
    Ok(model)
}

fn write_lm(model: &BackoffModel, out: Option<&PathBuf>) -> Result<()> {
    write_arpa(model, create(out)?)?;
    Ok(())
}

/// Rejects corpora with tokens outside `vocab` when the policy is `fail`.
fn check_oov(lines: &[String], vocab: &Vocabulary, policy: Option<OovPolicy>) -> Result<()> {
    if policy != Some(OovPolicy::Fail) {
        return Ok(());
    }
    for (i, line) in lines.iter().enumerate() {
        if let Some(tok) = line.split_whitespace().find(|t| vocab.get(t).is_none()) {
            bail!("line {}: out-of-vocabulary token {tok:?}", i + 1);
        }
    }
    Ok(())
}

fn count_corpus(lines: &[String], order: usize, vocab: &Vocabulary, s: &Settings) -> Result<CountTable> {
    check_oov(lines, vocab, s.oov)?;
    let counts = count_ngrams(lines, order, vocab)?;
    info!("{} events, {} OOV tokens skipped", counts.events(), counts.oov_skipped());
    Ok(counts)
}

fn thresholds_for(s: &Settings, order: usize) -> Result<&[u64]> {
    let t = s
        .thresholds
        .as_deref()
        .ok_or_else(|| UsageError("--thresholds is required".into()))?;
    if t.len() != order {
        return Err(UsageError(format!("--thresholds needs {order} values for an order-{order} model")).into());
    }
    Ok(t)
}

fn report_per_order(cs: &ConstraintSet) {
    let per: Vec<String> = cs
        .per_order()
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}-grams: {c}", i + 1))
        .collect();
    eprintln!("constraints: {} ({})", cs.len(), per.join(", "));
}

fn check_history_source(src: HistorySource) -> Result<()> {
    match src {
        HistorySource::Corpus => Ok(()),
        HistorySource::LmCounts => Err(UsageError("--history-from lm-counts is not implemented".into()).into()),
    }
}

fn write_log(outcome: &GisOutcome, path: Option<&PathBuf>) -> Result<()> {
    let Some(path) = path else {
        return Ok(());
    };
    let mut out = create(Some(path))?;
    writeln!(out, "iter\tmax_abs_log_ratio\twall_seconds")?;
    for r in &outcome.state.log {
        writeln!(out, "{}\t{:.6e}\t{:.6}", r.iter, r.max_abs_log_ratio, r.wall_seconds)?;
    }
    out.flush()?;
    Ok(())
}

fn finish(outcome: &GisOutcome) -> Finish {
    eprintln!(
        "GIS: {:?} after {} iterations, max |log ratio| {:.3e}",
        outcome.status, outcome.state.iter, outcome.state.max_log_ratio
    );
    match outcome.status {
        GisStatus::Converged => Finish::Done,
        GisStatus::MaxIters => Finish::NotConverged,
    }
}

pub fn count(corpus: &Path, out: Option<&PathBuf>, s: &Settings) -> Result<Finish> {
    let lines = read_lines(corpus)?;
    let vocab = Vocabulary::from_corpus(lines.iter().map(String::as_str));
    let counts = count_corpus(&lines, s.order, &vocab, s)?;
    counts.write_tsv(create(out)?)?;
    Ok(Finish::Done)
}

pub fn constraints(corpus: &Path, lm: Option<&PathBuf>, out: Option<&PathBuf>, s: &Settings) -> Result<Finish> {
    let lines = read_lines(corpus)?;
    let (vocab, order) = match lm {
        Some(p) => {
            let m = read_lm(p)?;
            (m.vocab().clone(), m.order())
        }
        None => (Vocabulary::from_corpus(lines.iter().map(String::as_str)), s.order),
    };
    let counts = count_corpus(&lines, order, &vocab, s)?;
    let cs = select_constraints(&counts, thresholds_for(s, order)?)?;
    report_per_order(&cs);
    cs.write_tsv(&vocab, create(out)?)?;
    Ok(Finish::Done)
}

pub fn adapt(
    lm: &Path,
    in_corpus: &Path,
    constraint_file: Option<&PathBuf>,
    history_from: HistorySource,
    out: Option<&PathBuf>,
    s: &Settings,
) -> Result<Finish> {
    check_history_source(history_from)?;
    if constraint_file.is_some() && s.thresholds.is_some() {
        return Err(UsageError("--constraints and --thresholds are mutually exclusive".into()).into());
    }
    let model = read_lm(lm)?;
    let lines = read_lines(in_corpus)?;
    let counts = count_corpus(&lines, model.order(), model.vocab(), s)?;
    let history = history_distribution(&counts)?;
    let cs = match constraint_file {
        Some(p) => {
            let (cs, dropped) = ConstraintSet::read_tsv(open(p)?, model.vocab())?;
            if dropped > 0 && s.oov == Some(OovPolicy::Fail) {
                bail!("{dropped} constraints use tokens outside the model vocabulary");
            }
            cs
        }
        None => select_constraints(&counts, thresholds_for(s, model.order())?)?,
    };
    report_per_order(&cs);
    let (adapted, outcome) = pipeline::adapt(&model, &cs, &history, s.gis)?;
    write_log(&outcome, s.log.as_ref())?;
    write_lm(&adapted, out)?;
    Ok(finish(&outcome))
}

pub fn first_pass_adapt(
    lm: &Path,
    reference: &Path,
    in_corpus: &Path,
    history_from: HistorySource,
    out: Option<&PathBuf>,
    s: &Settings,
) -> Result<Finish> {
    check_history_source(history_from)?;
    let model = read_lm(lm)?;
    let reference = read_lm(reference)?;
    let lines = read_lines(in_corpus)?;
    let counts = count_corpus(&lines, model.order(), model.vocab(), s)?;
    let history = history_distribution(&counts)?;
    let (cs, dropped) = pipeline::first_pass_constraints(&model, &reference, &history)?;
    if dropped > 0 && s.oov == Some(OovPolicy::Fail) {
        bail!("{dropped} entries use tokens unknown to the reference model");
    }
    report_per_order(&cs);
    let (adapted, outcome) = pipeline::adapt(&model, &cs, &history, s.gis)?;
    write_log(&outcome, s.log.as_ref())?;
    if adapted.num_entries() != model.num_entries() {
        warn!("entry count changed: {} -> {}", model.num_entries(), adapted.num_entries());
    }
    write_lm(&adapted, out)?;
    Ok(finish(&outcome))
}

pub fn interpolate(lm: &Path, other: &Path, weight: f64, out: Option<&PathBuf>) -> Result<Finish> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(UsageError(format!("--weight must lie in [0, 1], got {weight}")).into());
    }
    let mixed = linear_interpolate(&read_lm(lm)?, &read_lm(other)?, weight)?;
    write_lm(&mixed, out)?;
    Ok(Finish::Done)
}

pub fn ppl(lm: &Path, corpus: &Path, s: &Settings) -> Result<Finish> {
    let model = read_lm(lm)?;
    let lines = read_lines(corpus)?;
    let policy = s.oov.unwrap_or_else(|| OovPolicy::default_for(&model));
    let report = perplexity(&model, &lines, policy)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", PerplexityReport::tsv_header())?;
    writeln!(out, "{}", report.to_tsv())?;
    Ok(Finish::Done)
}

pub fn validate(lm: &Path) -> Result<Finish> {
    let model = read_lm(lm)?;
    let report = validate_model(&model)?;
    let mut out = io::stdout().lock();
    writeln!(out, "histories\t{}", report.deviations.len())?;
    writeln!(out, "max_deviation\t{:.3e}", report.max_deviation())?;
    for (h, dev) in &report.flagged {
        writeln!(out, "flagged\t{}\t{dev:.3e}", model.vocab().format(h))?;
    }
    if !report.is_normalized() {
        bail!("{} histories do not normalize", report.flagged.len());
    }
    Ok(Finish::Done)
}

pub struct BenchArgs<'a> {
    pub sizes: &'a [usize],
    pub ks: &'a [usize],
    pub repeats: usize,
    pub vocab_size: usize,
    pub ops: bool,
    pub out: Option<&'a PathBuf>,
}

pub fn bench(args: BenchArgs<'_>, s: &Settings) -> Result<Finish> {
    if args.repeats < 3 {
        return Err(UsageError("--repeats must be at least 3".into()).into());
    }
    let opts = BenchOptions {
        order: s.order,
        vocab_size: args.vocab_size,
        repeats: args.repeats,
        seed: s.seed,
        ..Default::default()
    };
    let rows = run_bench(args.sizes, args.ks, &opts)?;
    let mut out = create(args.out)?;
    if args.ops {
        writeln!(out, "entries\tK\tseconds\tops\tnodes")?;
    } else {
        writeln!(out, "entries\tK\tseconds")?;
    }
    for row in rows {
        if args.ops {
            writeln!(out, "{}\t{}\t{}", row.to_tsv(), row.ops, row.nodes)?;
        } else {
            writeln!(out, "{}", row.to_tsv())?;
        }
    }
    out.flush()?;
    Ok(Finish::Done)
}
