//! Module results checked against independently coded reference computations.

mod common;

use ndarray::{Array1, Array2};
use rand::RngExt;

use supmix::corpus::{subsample, Dataset, TaggedSentence};
use supmix::crf::{crf_log_partition, crf_nll_grad, softmax_nll, softmax_nll_grad, viterbi, CrfScores};
use supmix::evaluation::span_f1;
use supmix::mixer::{concat_with_base, mixture_param_count, softmax_weights, MixParams};
use supmix::params::Parameters;
use supmix::rng;
use supmix::tagger::{DecoderKind, TaggerParams};
use supmix::training::{default_batch_size, grad_check, AdamState, Features, TargetParams};

/// `exp(a_i) / sum_j exp(a_j)` with a compensated sum and no max shift.
fn softmax_reference(a: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = a.iter().map(|x| x.exp()).collect();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in &e {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    let total = sum + comp;
    e.iter().map(|x| x / total).collect()
}

#[test]
fn softmax_matches_direct_formula() {
    let mut r = rng::seeded(41);
    for _ in 0..200 {
        let a: Vec<f64> = (0..5).map(|_| rng::symmetric(&mut r, 3.0)).collect();
        for (x, y) in softmax_weights(&a).iter().zip(softmax_reference(&a)) {
            assert!((x - y).abs() <= 1e-15, "{x} vs {y}");
        }
    }
}

#[test]
fn mixer_matches_double_loop() {
    let mut r = rng::seeded(42);
    let dims = [3, 5, 2];
    let (n, d) = (4, 6);
    let m = common::random_mixer(&mut r, &dims, d);
    let stack = common::random_stack(&mut r, n, &dims);
    let out = m.forward(&stack).unwrap();

    let z: f64 = m.logits.iter().map(|a| a.exp()).sum();
    for i in 0..n {
        for j in 0..d {
            let mut acc = 0.0;
            for (k, (_, h)) in stack.entries().iter().enumerate() {
                let mut g = 0.0;
                for c in 0..dims[k] {
                    g += h[[i, c]] * m.projections[k][[c, j]];
                }
                acc += m.logits[k].exp() / z * g;
            }
            let expected = m.gamma * acc;
            assert!((out[[i, j]] - expected).abs() <= 1e-12, "({i},{j}): {} vs {expected}", out[[i, j]]);
        }
    }
}

#[test]
fn mixer_gradients_match_finite_differences() {
    for seed in 0..10 {
        let rep = common::mixer_grad_check(seed, 1e-5);
        assert!(rep.max_rel_error < 1e-6, "seed {seed}: {rep:?}");
    }
}

#[test]
fn parameter_budget_and_widths() {
    assert_eq!(mixture_param_count(3), 4);
    assert_eq!(mixture_param_count(1), 2);
    let mixed = Array2::zeros((2, 300));
    let base = Array2::zeros((2, 100));
    assert_eq!(concat_with_base(mixed.view(), base.view()).unwrap().dim(), (2, 400));
}

fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    (0..l.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let j = code % l;
                    code /= l;
                    j
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

struct CrfCase {
    e: Array2<f64>,
    tr: Array2<f64>,
    start: Array1<f64>,
    stop: Array1<f64>,
}

impl CrfCase {
    fn random(seed: u64, n: usize, l: usize) -> Self {
        let mut r = rng::seeded(seed);
        CrfCase {
            e: common::uniform(&mut r, n, l, 2.0),
            tr: common::uniform(&mut r, l, l, 2.0),
            start: Array1::from_shape_fn(l, |_| rng::symmetric(&mut r, 2.0)),
            stop: Array1::from_shape_fn(l, |_| rng::symmetric(&mut r, 2.0)),
        }
    }

    fn scores(&self) -> CrfScores<'_> {
        CrfScores {
            transitions: self.tr.view(),
            start: self.start.view(),
            stop: self.stop.view(),
        }
    }

    fn score(&self, p: &[usize]) -> f64 {
        let mut s = self.start[p[0]] + self.stop[p[p.len() - 1]];
        for (t, &y) in p.iter().enumerate() {
            s += self.e[[t, y]];
            if t > 0 {
                s += self.tr[[p[t - 1], y]];
            }
        }
        s
    }
}

#[test]
fn crf_partition_and_viterbi_by_enumeration() {
    for seed in 0..20 {
        let case = CrfCase::random(seed, 5, 4);
        let paths = all_paths(5, 4);
        assert_eq!(paths.len(), 1024);
        let scores: Vec<f64> = paths.iter().map(|p| case.score(p)).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        assert!((crf_log_partition(case.e.view(), case.scores()) - z.ln()).abs() <= 1e-8);
        let best = (0..paths.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        assert_eq!(viterbi(case.e.view(), case.scores()), paths[best]);
    }
}

#[test]
fn viterbi_ties_prefer_low_labels_from_the_end() {
    let e = Array2::zeros((3, 3));
    let tr = Array2::zeros((3, 3));
    let z = Array1::zeros(3);
    let crf = CrfScores {
        transitions: tr.view(),
        start: z.view(),
        stop: z.view(),
    };
    assert_eq!(viterbi(e.view(), crf), vec![0, 0, 0]);
}

#[test]
fn crf_emission_gradient_is_marginals_minus_gold() {
    let case = CrfCase::random(7, 4, 3);
    let gold = [2, 0, 1, 1];
    let (_, grads) = crf_nll_grad(case.e.view(), case.scores(), &gold);
    let paths = all_paths(4, 3);
    let weights: Vec<f64> = paths.iter().map(|p| case.score(p).exp()).collect();
    let z: f64 = weights.iter().sum();
    for t in 0..4 {
        for j in 0..3 {
            let marginal: f64 = paths.iter().zip(&weights).filter(|(p, _)| p[t] == j).map(|(_, w)| w / z).sum();
            let expected = marginal - if gold[t] == j { 1.0 } else { 0.0 };
            assert!((grads.emissions[[t, j]] - expected).abs() <= 1e-12);
        }
    }
    let flat: Vec<f64> = case.e.iter().copied().collect();
    let rep = grad_check(
        |x| {
            let e = Array2::from_shape_vec((4, 3), x.to_vec()).unwrap();
            supmix::crf::crf_nll(e.view(), case.scores(), &gold)
        },
        &flat,
        &grads.emissions.iter().copied().collect::<Vec<_>>(),
        1e-5,
        None,
        0,
    );
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn softmax_decoder_gradient() {
    let mut r = rng::seeded(8);
    let e = common::uniform(&mut r, 5, 4, 2.0);
    let gold = [0, 3, 3, 1, 2];
    let (_, g) = softmax_nll_grad(e.view(), &gold);
    let rep = grad_check(
        |x| softmax_nll(Array2::from_shape_vec((5, 4), x.to_vec()).unwrap().view(), &gold),
        &e.iter().copied().collect::<Vec<_>>(),
        &g.iter().copied().collect::<Vec<_>>(),
        1e-5,
        None,
        0,
    );
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn recurrent_gradients_on_three_tokens() {
    let mut r = rng::seeded(9);
    let tagger = TaggerParams::init(4, 3, 1, 3, DecoderKind::Softmax, &mut r);
    let x = common::uniform(&mut r, 3, 4, 1.0);
    let gold = [1, 0, 2];
    let mut grads = tagger.zeros_like();
    tagger.loss_and_grad(x.view(), &gold, &mut grads);
    let mut probe = tagger.clone();
    let rep = grad_check(
        |p| {
            probe.assign_flat(p);
            let (em, _) = probe.forward(x.view());
            probe.nll(em.view(), &gold)
        },
        &tagger.flatten(),
        &grads.flatten(),
        1e-5,
        None,
        0,
    );
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

/// Mixer, one-layer tagger and CRF on a three-sentence corpus with the mean
/// sentence loss.
#[test]
fn full_pipeline_on_three_sentences() {
    let mut r = rng::seeded(10);
    let dims = [3, 2];
    let mixer = common::random_mixer(&mut r, &dims, 4);
    let tagger = TaggerParams::init(4 + 3, 3, 1, 3, DecoderKind::Crf, &mut r);
    let params = TargetParams {
        mixer: Some(mixer),
        tagger,
    };
    let corpus: Vec<(Features, Vec<usize>)> = [2, 4, 3]
        .iter()
        .map(|&n| {
            let f = Features {
                base: common::uniform(&mut r, n, 3, 1.0),
                stack: Some(common::random_stack(&mut r, n, &dims)),
            };
            let gold = (0..n).map(|_| r.random_range(0..3)).collect();
            (f, gold)
        })
        .collect();
    let mut grads = params.zeros_like();
    for (f, g) in &corpus {
        params.accumulate(f, g, &mut grads).unwrap();
    }
    grads.visit_mut(&mut |_, v| v.iter_mut().for_each(|x| *x /= 3.0));
    let mut probe = params.clone();
    let rep = grad_check(
        |x| {
            probe.assign_flat(x);
            corpus.iter().map(|(f, g)| probe.loss(f, g).unwrap()).sum::<f64>() / 3.0
        },
        &params.flatten(),
        &grads.flatten(),
        1e-5,
        None,
        0,
    );
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn adam_first_step_by_hand() {
    #[derive(Clone)]
    struct One(Vec<f64>);
    impl Parameters for One {
        fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
            f("x", &self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
            f("x", &mut self.0)
        }
    }
    let mut p = One(vec![1.0]);
    AdamState::new(0.001).step(&mut p, &One(vec![4.0])).unwrap();
    let m_hat = 0.1 * 4.0 / (1.0 - 0.9);
    let v_hat = 0.001 * 16.0 / (1.0 - 0.999);
    let expected = 1.0 - 0.001 * m_hat / (f64::sqrt(v_hat) + 1e-8);
    assert!((p.0[0] - expected).abs() <= 1e-12);
    assert!((p.0[0] - 0.999).abs() < 1e-9);
}

#[test]
fn batch_size_defaults() {
    assert_eq!(default_batch_size(1000, 1000), 8);
    assert_eq!(default_batch_size(5000, 1000), 16);
    assert_eq!(default_batch_size(100, 100), 8);
    assert_eq!(default_batch_size(500, 100), 16);
}

#[test]
fn subsample_takes_exactly_n() {
    let sentences: Vec<TaggedSentence> = (0..17_000)
        .map(|i| TaggedSentence::new(vec![format!("w{i}")], vec!["O".into()]).unwrap())
        .collect();
    let data = Dataset::new(sentences);
    let sub = subsample(&data, 1000, 1);
    assert_eq!(sub.len(), 1000);
    assert_eq!(sub, subsample(&data, 1000, 1));
    assert_ne!(sub, subsample(&data, 1000, 2));
}

#[test]
fn hand_counted_span_scores() {
    let gold = vec![vec!["B-PER", "I-PER", "O", "B-LOC"]];
    let pred = vec![vec!["B-PER", "O", "O", "B-LOC"]];
    let prf = span_f1(&gold, &pred).unwrap();
    assert_eq!((prf.precision, prf.recall, prf.f1), (0.5, 0.5, 0.5));
    assert_eq!(prf.to_string().split_whitespace().nth(5), Some("50.00"));
}

#[test]
fn mixer_is_independent_of_source_widths() {
    let mut r = rng::seeded(12);
    for dims in [vec![7], vec![2, 30], vec![1, 4, 9, 16, 25]] {
        let m = MixParams::init(&dims, 300, &mut r);
        let stack = common::random_stack(&mut r, 3, &dims);
        assert_eq!(m.forward(&stack).unwrap().dim(), (3, 300));
    }
}
