use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mdilm::oracle::{expand_dense, naive_gis};
use mdilm::stats::{count_ngrams, estimate_backoff_lm, history_distribution};
use mdilm::{parse_arpa, write_arpa, ConstraintSet, Vocabulary};
use tempfile::TempDir;

const TOY: &str = "a b a\nb b a a\na b\nb a b b a\n";

fn mdilm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdilm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

struct Toy {
    dir: TempDir,
}

impl Toy {
    /// A bigram model estimated from the toy corpus, plus the corpus itself.
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let lines: Vec<&str> = TOY.lines().collect();
        let vocab = Vocabulary::from_corpus(lines.iter().copied());
        let counts = count_ngrams(&lines, 2, &vocab).unwrap();
        let m = estimate_backoff_lm(&counts, 0.5).unwrap();
        write_arpa(&m, fs::File::create(dir.path().join("toy.arpa")).unwrap()).unwrap();
        fs::write(dir.path().join("corpus.txt"), TOY).unwrap();
        Toy { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }
}

#[test]
fn count_writes_one_line_per_ngram() {
    let toy = Toy::new();
    fs::write(toy.path("ab.txt"), "a b\n").unwrap();
    let out = mdilm(&["count", "--corpus", &toy.path("ab.txt"), "--order", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines.iter().filter(|l| l.starts_with("1\t")).count(), 3);
    assert!(lines.contains(&"2\t<s> a\t1"));

    let out = mdilm(&["count", "--corpus", &toy.path("ab.txt"), "--order", "1"]);
    assert!(stdout(&out).lines().all(|l| l.starts_with("1\t")));
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn missing_input_is_a_data_error() {
    let out = mdilm(&["count", "--corpus", "/nonexistent/corpus.txt"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("/nonexistent/corpus.txt"));
}

#[test]
fn usage_errors_exit_with_two() {
    let toy = Toy::new();
    let (lm, corpus) = (toy.path("toy.arpa"), toy.path("corpus.txt"));
    let cases: Vec<Vec<&str>> = vec![
        vec!["count", "--corpus", &corpus, "--no-such-flag"],
        vec!["adapt", "--lm", &lm, "--in-corpus", &corpus, "--history-from", "lm-counts", "--thresholds", "1,1"],
        vec!["adapt", "--lm", &lm, "--in-corpus", &corpus, "--constraints", &corpus, "--thresholds", "1,1"],
        vec!["adapt", "--lm", &lm, "--in-corpus", &corpus],
        vec!["adapt", "--lm", &lm, "--in-corpus", &corpus, "--thresholds", "1,1", "--gamma", "0"],
        vec!["interpolate", "--lm", &lm, "--other", &lm, "--weight", "1.5"],
        vec!["count", "--corpus", &corpus, "--oov", "maybe"],
    ];
    for args in cases {
        let out = mdilm(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let toy = Toy::new();
    fs::write(toy.path("cfg.toml"), "order = 1\nmax-iters = 5\n").unwrap();
    let corpus = toy.path("corpus.txt");
    let cfg = toy.path("cfg.toml");
    let out = mdilm(&["count", "--config", &cfg, "--corpus", &corpus]);
    assert!(stdout(&out).lines().all(|l| l.starts_with("1\t")));
    let out = mdilm(&["count", "--config", &cfg, "--corpus", &corpus, "--order", "2"]);
    assert!(stdout(&out).lines().any(|l| l.starts_with("2\t")));

    fs::write(toy.path("bad.toml"), "colour = 3\n").unwrap();
    let out = mdilm(&["count", "--config", &toy.path("bad.toml"), "--corpus", &corpus]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constraints_report_counts_per_order() {
    let toy = Toy::new();
    let out = mdilm(&[
        "constraints",
        "--corpus",
        &toy.path("corpus.txt"),
        "--lm",
        &toy.path("toy.arpa"),
        "--thresholds",
        "5,3",
        "--out",
        &toy.path("cs.tsv"),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // a and b occur 7 times each; a b, b a and a </s> reach 3
    assert!(stderr(&out).contains("1-grams: 2, 2-grams: 3"), "{}", stderr(&out));
    let text = fs::read_to_string(toy.path("cs.tsv")).unwrap();
    assert!(text.starts_with("#mdi-constraints v1\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn adapt_matches_naive_gis() {
    let toy = Toy::new();
    let (lm, corpus) = (toy.path("toy.arpa"), toy.path("corpus.txt"));
    let cs_path = toy.path("cs.tsv");
    fs::write(&cs_path, "#mdi-constraints v1\n1\ta\t0.3\t0\n2\tb a\t0.2\t0\n").unwrap();
    let out = mdilm(&[
        "adapt",
        "--lm",
        &lm,
        "--in-corpus",
        &corpus,
        "--constraints",
        &cs_path,
        "--tol",
        "1e-10",
        "--max-iters",
        "5000",
        "--log",
        &toy.path("log.tsv"),
        "--out",
        &toy.path("adapted.arpa"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let model = parse_arpa(fs::read_to_string(&lm).unwrap().as_bytes()).unwrap();
    let (cs, _) = ConstraintSet::read_tsv(fs::read_to_string(&cs_path).unwrap().as_bytes(), model.vocab()).unwrap();
    let lines: Vec<&str> = TOY.lines().collect();
    let hist = history_distribution(&count_ngrams(&lines, 2, model.vocab()).unwrap()).unwrap();
    let naive = naive_gis(&expand_dense(&model).unwrap(), &cs, &hist, 1.0, 1e-10, 5000).unwrap();
    assert!(naive.converged);
    let adapted = parse_arpa(fs::read_to_string(toy.path("adapted.arpa")).unwrap().as_bytes()).unwrap();
    // seven significant digits in the file
    let diff = expand_dense(&adapted).unwrap().max_abs_diff(&naive.model).unwrap();
    assert!(diff < 1e-6, "{diff}");

    let log = fs::read_to_string(toy.path("log.tsv")).unwrap();
    let mut rows = log.lines();
    assert_eq!(rows.next(), Some("iter\tmax_abs_log_ratio\twall_seconds"));
    let iters: Vec<usize> = rows.map(|r| r.split('\t').next().unwrap().parse().unwrap()).collect();
    assert_eq!(iters, (0..=naive.iters).collect::<Vec<_>>());
}

#[test]
fn running_out_of_iterations_exits_with_four() {
    let toy = Toy::new();
    let out = mdilm(&[
        "adapt",
        "--lm",
        &toy.path("toy.arpa"),
        "--in-corpus",
        &toy.path("corpus.txt"),
        "--thresholds",
        "1,1",
        "--max-iters",
        "1",
        "--out",
        &toy.path("adapted.arpa"),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(PathBuf::from(toy.path("adapted.arpa")).exists());
}

#[test]
fn thread_count_does_not_change_output() {
    let toy = Toy::new();
    let run = |threads: &str, name: &str| {
        let path = toy.path(name);
        let out = mdilm(&[
            "adapt",
            "--lm",
            &toy.path("toy.arpa"),
            "--in-corpus",
            &toy.path("corpus.txt"),
            "--thresholds",
            "1,1",
            "--threads",
            threads,
            "--out",
            &path,
        ]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(4));
        fs::read(path).unwrap()
    };
    assert_eq!(run("1", "one.arpa"), run("3", "three.arpa"));
}

#[test]
fn first_pass_keeps_the_entry_set() {
    let toy = Toy::new();
    let out = mdilm(&[
        "first-pass-adapt",
        "--lm",
        &toy.path("toy.arpa"),
        "--reference",
        &toy.path("toy.arpa"),
        "--in-corpus",
        &toy.path("corpus.txt"),
        "--out",
        &toy.path("fp.arpa"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // the rounded input is renormalized, so compare within print precision
    let read = |name: &str| parse_arpa(fs::read_to_string(toy.path(name)).unwrap().as_bytes()).unwrap();
    let (before, after) = (read("toy.arpa"), read("fp.arpa"));
    assert_eq!(before.num_entries(), after.num_entries());
    assert!(after.approx_eq(&before, 1e-6));
}

#[test]
fn validate_flags_unnormalized_models() {
    assert_eq!(mdilm(&["validate", "--lm", &fixture("m1.arpa")]).status.code(), Some(0));
    let out = mdilm(&["validate", "--lm", &fixture("sentinel.arpa")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("flagged"));
}

#[test]
fn ppl_and_interpolate() {
    let toy = Toy::new();
    let lm = toy.path("toy.arpa");
    let out = mdilm(&["ppl", "--lm", &lm, "--corpus", &toy.path("corpus.txt")]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("logprob\twords\tppl\toov"));
    let ppl: f64 = lines.next().unwrap().split('\t').nth(2).unwrap().parse().unwrap();
    assert!(ppl > 1.0 && ppl < 3.0);

    let mixed = toy.path("mixed.arpa");
    let out = mdilm(&["interpolate", "--lm", &lm, "--other", &lm, "--weight", "0.3", "--out", &mixed]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = mdilm(&["ppl", "--lm", &mixed, "--corpus", &toy.path("corpus.txt")]);
    assert_eq!(stdout(&out), text);
}

#[test]
fn oov_fail_rejects_unknown_tokens() {
    let toy = Toy::new();
    fs::write(toy.path("oov.txt"), "a zebra b\n").unwrap();
    let out = mdilm(&["ppl", "--lm", &toy.path("toy.arpa"), "--corpus", &toy.path("oov.txt"), "--oov", "fail"]);
    assert_eq!(out.status.code(), Some(3));
    let out = mdilm(&["ppl", "--lm", &toy.path("toy.arpa"), "--corpus", &toy.path("oov.txt"), "--oov", "skip"]);
    assert!(out.status.success());
    assert!(stdout(&out).trim_end().ends_with("\t1"));
}

#[test]
fn small_bench_grid() {
    let out = mdilm(&["bench", "--sizes", "3000", "--ks", "10,20", "--vocab-size", "200", "--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "entries\tK\tseconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].split('\t').nth(1) == Some("20"));
    let again = mdilm(&["bench", "--sizes", "3000", "--ks", "10,20", "--vocab-size", "200", "--seed", "4"]);
    let entries = |t: &str| t.lines().map(|l| l.split('\t').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(entries(&text), entries(&stdout(&again)));
}

#[test]
fn bench_rejects_too_few_repeats() {
    let out = mdilm(&["bench", "--sizes", "3000", "--ks", "10", "--repeats", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
