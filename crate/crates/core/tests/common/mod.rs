#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::RngExt;

use supmix::encoders::SourceStack;
use supmix::mixer::MixParams;
use supmix::params::Parameters;
use supmix::rng::{self, SeededRng};
use supmix::tagger::{DecoderKind, TaggerParams};
use supmix::training::{grad_check, Features, GradCheckReport, TargetParams};

pub fn uniform(r: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng::symmetric(r, scale))
}

pub fn random_stack(r: &mut SeededRng, n: usize, dims: &[usize]) -> SourceStack {
    SourceStack::new(
        dims.iter()
            .enumerate()
            .map(|(k, &d)| (format!("s{k}"), uniform(r, n, d, 1.0)))
            .collect(),
    )
    .unwrap()
}

pub fn random_mixer(r: &mut SeededRng, dims: &[usize], mix_dim: usize) -> MixParams {
    let mut m = MixParams::init(dims, mix_dim, r);
    m.logits = Array1::from_shape_fn(dims.len(), |_| rng::symmetric(r, 1.0));
    m.gamma = 0.5 + r.random::<f64>();
    m
}

/// A small random full-pipeline instance: sources, mixer, static rows,
/// tagger and gold labels.
pub struct PipelineCase {
    pub params: TargetParams,
    pub features: Features,
    pub gold: Vec<usize>,
}

pub fn pipeline_case(seed: u64, decoder: DecoderKind) -> PipelineCase {
    let mut r = rng::seeded(seed);
    let n = r.random_range(1..=4);
    let k = r.random_range(1..=3);
    let dims: Vec<usize> = (0..k).map(|_| r.random_range(1..=8)).collect();
    let mix_dim = r.random_range(1..=8);
    let static_dim = r.random_range(1..=8);
    let hidden = r.random_range(1..=4);
    let labels = r.random_range(2..=4);
    let mixer = random_mixer(&mut r, &dims, mix_dim);
    let mut tagger = TaggerParams::init(mix_dim + static_dim, hidden, 1, labels, decoder, &mut r);
    // Nonzero biases and transition scores so every group carries gradient.
    tagger.visit_mut(&mut |_, v| {
        for x in v.iter_mut() {
            if *x == 0.0 {
                *x = rng::symmetric(&mut r, 0.5);
            }
        }
    });
    let features = Features {
        base: uniform(&mut r, n, static_dim, 1.0),
        stack: Some(random_stack(&mut r, n, &dims)),
    };
    let gold = (0..n).map(|_| r.random_range(0..labels)).collect();
    PipelineCase {
        params: TargetParams {
            mixer: Some(mixer),
            tagger,
        },
        features,
        gold,
    }
}

pub fn pipeline_grad_check(case: &PipelineCase, step: f64) -> GradCheckReport {
    let mut grads = case.params.zeros_like();
    case.params.accumulate(&case.features, &case.gold, &mut grads).unwrap();
    let mut probe = case.params.clone();
    grad_check(
        |x| {
            probe.assign_flat(x);
            probe.loss(&case.features, &case.gold).unwrap()
        },
        &case.params.flatten(),
        &grads.flatten(),
        step,
        None,
        0,
    )
}

/// Mixer alone under `sum(U * O) + 0.5 * sum(O * O)`.
pub fn mixer_grad_check(seed: u64, step: f64) -> GradCheckReport {
    let mut r = rng::seeded(seed);
    let n = r.random_range(1..=4);
    let k = r.random_range(1..=3);
    let dims: Vec<usize> = (0..k).map(|_| r.random_range(1..=8)).collect();
    let mix_dim = r.random_range(1..=8);
    let mixer = random_mixer(&mut r, &dims, mix_dim);
    let stack = random_stack(&mut r, n, &dims);
    let u = uniform(&mut r, n, mix_dim, 1.0);
    let loss = |m: &MixParams| {
        let o = m.forward(&stack).unwrap();
        (&u * &o).sum() + 0.5 * (&o * &o).sum()
    };
    let o = mixer.forward(&stack).unwrap();
    let grads = mixer.backward(&stack, (&u + &o).view()).unwrap();
    let mut probe = mixer.clone();
    grad_check(
        |x| {
            probe.assign_flat(x);
            loss(&probe)
        },
        &mixer.flatten(),
        &grads.flatten(),
        step,
        None,
        0,
    )
}
