//! Linear-time sums against dense enumeration on random small instances.

use mdilm::arpa::validate_model;
use mdilm::mdi::{
    build_adapted_model, compute_g, compute_marginals, compute_normalizers, run_gis, GisOptions, GisStatus,
    ScalingField,
};
use mdilm::oracle::{
    dense_marginals, dense_scaled, expand_dense, me_marginals, me_normalizer, naive_gis, naive_normalizer,
};
use mdilm::stats::Constraint;
use mdilm::synth::{random_instance, random_model, random_ngrams, RandomInstance};
use mdilm::{BackoffModel, ConstraintSet, Entry, NGram, TokenId, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(seed: u64, count: usize) -> Vec<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(&mut rng).unwrap()).collect()
}

/// Relative error with an absolute floor for values that are exactly zero.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-6)
}

fn all_histories(m: &BackoffModel) -> Vec<NGram> {
    let v = m.vocab().len() as TokenId;
    let mut out = vec![NGram::empty()];
    for k in 1..m.order() {
        let prev: Vec<NGram> = out.iter().filter(|h| h.len() == k - 1).cloned().collect();
        for h in prev {
            for w in 0..v {
                out.push(h.extend(w));
            }
        }
    }
    out
}

#[test]
fn normalizers_match_dense_sums() {
    for inst in instances(1, 150) {
        let dense = expand_dense(&inst.p_out).unwrap();
        let z = compute_normalizers(&inst.p_out, &inst.field, all_histories(&inst.p_out)).unwrap();
        for h in all_histories(&inst.p_out) {
            let fast = z.get(&h).unwrap();
            let slow = naive_normalizer(&dense, &inst.field, &h);
            assert!(rel(fast, slow) < 1e-9, "Z({h:?}) = {fast} vs {slow}");
        }
    }
}

#[test]
fn normalizer_lookup_falls_back_to_suffix() {
    for inst in instances(2, 40) {
        let dense = expand_dense(&inst.p_out).unwrap();
        let z = compute_normalizers(&inst.p_out, &inst.field, std::iter::empty()).unwrap();
        for h in all_histories(&inst.p_out) {
            let fast = z.lookup(&h).unwrap();
            assert!(rel(fast, naive_normalizer(&dense, &inst.field, &h)) < 1e-9);
        }
    }
}

#[test]
fn marginals_match_dense_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for inst in instances(3, 150) {
        let probe: Vec<Constraint> = random_ngrams(&mut rng, &inst.p_out, 10)
            .into_iter()
            .map(|ngram| Constraint {
                ngram,
                target: 0.5,
                count: 0,
            })
            .collect();
        let probe = ConstraintSet::new(probe).unwrap();
        let z = compute_normalizers(&inst.p_out, &inst.field, std::iter::empty()).unwrap();
        let fast = compute_marginals(&inst.p_out, &inst.field, &z, &inst.history, &probe).unwrap();
        let scaled = dense_scaled(&expand_dense(&inst.p_out).unwrap(), &inst.field);
        let slow = dense_marginals(&scaled, &inst.history, &probe);
        for ((c, f), s) in probe.iter().zip(&fast).zip(&slow) {
            assert!(rel(*f, *s) < 1e-9, "marginal {:?}: {f} vs {s}", c.ngram);
        }
    }
}

#[test]
fn weighted_g_matches_direct_sum() {
    for inst in instances(4, 60) {
        let m = &inst.p_out;
        let g = compute_g(m, Some(&inst.history)).unwrap();
        // total p̃ mass times the product of backoff weights met on the way
        // from each history down to the empty context
        let direct: f64 = inst
            .history
            .iter()
            .map(|(h, p)| {
                let mut acc = p;
                for start in 0..h.len() {
                    acc *= m.bow(&NGram::new(&h.ids()[start..]));
                }
                acc
            })
            .sum();
        assert!(rel(g.get(&NGram::empty()).unwrap(), direct) < 1e-12);
    }
}

#[test]
fn unweighted_g_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let v = rng.gen_range(2..=6);
        let n = rng.gen_range(2..=3);
        let m = random_model(&mut rng, v, n, false).unwrap();
        let g = compute_g(&m, None).unwrap();
        let direct: f64 = all_histories(&m)
            .into_iter()
            .filter(|h| h.len() == n - 1)
            .map(|h| (0..h.len()).map(|s| m.bow(&NGram::new(&h.ids()[s..]))).product::<f64>())
            .sum();
        assert!(rel(g.get(&NGram::empty()).unwrap(), direct) < 1e-12);
    }
}

#[test]
fn adapted_model_has_the_exponential_form() {
    for inst in instances(6, 150) {
        let z = compute_normalizers(&inst.p_out, &inst.field, std::iter::empty()).unwrap();
        let adapted = build_adapted_model(&inst.p_out, &inst.field, &z).unwrap();
        let got = expand_dense(&adapted).unwrap();
        let want = dense_scaled(&expand_dense(&inst.p_out).unwrap(), &inst.field);
        assert!(got.max_abs_diff(&want).unwrap() < 1e-9);
        assert!(got.max_row_error() < 1e-9);
        assert!(validate_model(&adapted).unwrap().max_deviation() < 1e-9);
        let field_new = inst
            .field
            .iter()
            .filter(|(g, _)| !inst.p_out.contains(g))
            .count();
        assert!(adapted.num_entries() <= inst.p_out.num_entries() + field_new * inst.p_out.order());
    }
}

#[test]
fn maximum_entropy_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..60 {
        let v = rng.gen_range(2..=7);
        let n = rng.gen_range(2..=3);
        let vocab = {
            let mut voc = Vocabulary::new();
            for i in 0..v {
                voc.insert(&format!("w{i}"));
            }
            voc
        };
        let p = (1.0 / v as f64).log10();
        let uniform = BackoffModel::from_entries(
            vocab,
            n,
            (0..v as TokenId).map(|w| (NGram::unigram(w), Entry::new(p, None))).collect::<Vec<_>>(),
        )
        .unwrap();
        let grams = random_ngrams(&mut rng, &uniform, 8);
        let field = ScalingField::from_pairs(grams.iter().map(|g| (g.clone(), rng.gen_range(-1.0..1.0)))).unwrap();
        let history = mdilm::synth::random_history(&mut rng, &uniform, 10);
        let z = compute_normalizers(&uniform, &field, all_histories(&uniform)).unwrap();
        for h in all_histories(&uniform) {
            let me = me_normalizer(v, None, &field, &h) / v as f64;
            assert!(rel(z.get(&h).unwrap(), me) < 1e-9);
        }
        let probe = ConstraintSet::new(
            grams
                .iter()
                .map(|g| Constraint {
                    ngram: g.clone(),
                    target: 0.5,
                    count: 0,
                })
                .collect(),
        )
        .unwrap();
        let fast = compute_marginals(&uniform, &field, &z, &history, &probe).unwrap();
        let slow = me_marginals(v, None, &field, &history, &probe);
        for (f, s) in fast.iter().zip(&slow) {
            assert!(rel(*f, *s) < 1e-9);
        }
    }
}

#[test]
fn gis_matches_naive_gis() {
    for inst in instances(8, 40) {
        let opts = GisOptions {
            tol: 1e-10,
            max_iters: 5000,
            ..Default::default()
        };
        let out = run_gis(&inst.p_out, &inst.constraints, &inst.history, opts).unwrap();
        let dense = expand_dense(&inst.p_out).unwrap();
        let naive = naive_gis(&dense, &inst.constraints, &inst.history, opts.gamma, opts.tol, opts.max_iters).unwrap();
        assert_eq!(out.status == GisStatus::Converged, naive.converged);
        assert_eq!(out.state.iter, naive.iters);
        for (a, b) in out.state.field.lambdas().iter().zip(&naive.lambdas) {
            assert!((a - b).abs() < 1e-6, "λ {a} vs {b}");
        }
        let adapted = build_adapted_model(&inst.p_out, &out.state.field, &out.normalizers).unwrap();
        let diff = expand_dense(&adapted).unwrap().max_abs_diff(&naive.model).unwrap();
        assert!(diff < 1e-8, "dense difference {diff}");
    }
}

#[test]
fn self_marginals_are_a_fixed_point() {
    for inst in instances(9, 40) {
        let dense = expand_dense(&inst.p_out).unwrap();
        let targets = dense_marginals(&dense, &inst.history, &inst.constraints);
        let own = ConstraintSet::new(
            inst.constraints
                .iter()
                .zip(targets)
                .map(|(c, target)| Constraint { target, ..c.clone() })
                .collect(),
        )
        .unwrap();
        let out = run_gis(&inst.p_out, &own, &inst.history, GisOptions::default()).unwrap();
        assert_eq!(out.status, GisStatus::Converged);
        assert!(out.state.field.lambdas().iter().all(|l| l.abs() < 1e-6));
    }
}

#[test]
fn validation_agrees_with_dense_row_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..60 {
        let v = rng.gen_range(3..=8);
        let n = rng.gen_range(1..=3);
        let m = random_model(&mut rng, v, n, true).unwrap();
        let report = validate_model(&m).unwrap();
        let dense = expand_dense(&m).unwrap();
        for (h, dev) in &report.deviations {
            let sum: f64 = dense.row(h.ids()).iter().sum();
            assert!(((sum - 1.0).abs() - dev).abs() < 1e-10);
        }
    }
}
