//! Synthetic transfer corpora.
//!
//! A hidden map `class(token)` over the vocabulary drives every task. Source
//! datasets are tagged from a class map (the first source shares the target's
//! map, the others draw independent maps) and the target labels maximal runs
//! of equal non-zero classes: token `n` gets `O` when `class = 0`, `B-T{c}`
//! when `class = c` differs from the previous token's class and `I-T{c}`
//! otherwise. The target is therefore a function of consecutive hidden
//! classes, cheap to read off a class-aware representation but hard to learn
//! from token identity alone when the target training set is tiny.

use ndarray::Array2;
use rand::RngExt;

use super::{repair_bio, Dataset, TaggedSentence};
use crate::embeddings::EmbeddingTable;
use crate::rng::{self, SeededRng};

/// Transfer structure between source and target corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    /// Sources solve different tasks (per-token class tagging) on the target's
    /// vocabulary distribution.
    CrossTask,
    /// Sources solve the target task on a shifted token distribution.
    CrossDomain,
    /// Sources solve the target task in another "language": target tokens are
    /// a renaming of source tokens.
    CrossLingual,
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::CrossTask => "cross_task",
            Setting::CrossDomain => "cross_domain",
            Setting::CrossLingual => "cross_lingual",
        }
    }

    pub fn from_name(s: &str) -> Option<Setting> {
        match s {
            "cross_task" => Some(Setting::CrossTask),
            "cross_domain" => Some(Setting::CrossDomain),
            "cross_lingual" => Some(Setting::CrossLingual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub n_classes: usize,
    /// Target sentences.
    pub n_sentences: usize,
    pub len_range: (usize, usize),
    pub seed: u64,
    /// Probability of replacing each target tag with a uniformly drawn one.
    pub noise_rate: f64,
    /// Number of sources; source 0 is the informative one.
    pub n_sources: usize,
    /// Sentences per source dataset.
    pub n_source_sentences: usize,
    pub setting: Setting,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 50,
            n_classes: 4,
            n_sentences: 100,
            len_range: (4, 12),
            seed: 7,
            noise_rate: 0.0,
            n_sources: 3,
            n_source_sentences: 5000,
            setting: Setting::CrossTask,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_classes < 2 {
            return Err("n_classes must be at least 2".into());
        }
        if self.vocab_size < self.n_classes {
            return Err("vocab_size must be at least n_classes".into());
        }
        if self.len_range.0 < 1 || self.len_range.0 > self.len_range.1 {
            return Err("len_range must satisfy 1 <= min <= max".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err("noise_rate must lie in [0, 1]".into());
        }
        if self.n_sources < 1 {
            return Err("at least one source is required".into());
        }
        Ok(())
    }

    /// Surface form of concept `i` in the source language.
    pub fn source_token(&self, i: usize) -> String {
        format!("w{i}")
    }

    /// Surface form of concept `i` in the target corpus.
    pub fn target_token(&self, i: usize) -> String {
        match self.setting {
            Setting::CrossLingual => format!("t{}", self.renaming()[i]),
            _ => self.source_token(i),
        }
    }

    /// The hidden class of every concept, shared by the target and source 0.
    pub fn class_map(&self) -> Vec<usize> {
        draw_class_map(self.vocab_size, self.n_classes, &mut rng::substream(self.seed, "class-map"))
    }

    /// The renaming bijection used by the cross-lingual target.
    pub fn renaming(&self) -> Vec<usize> {
        rng::permutation(self.vocab_size, &mut rng::substream(self.seed, "renaming"))
    }

    /// Reapplies the target labelling rule to a sequence of hidden classes.
    pub fn target_labels(classes: &[usize]) -> Vec<String> {
        let mut prev = 0;
        classes
            .iter()
            .enumerate()
            .map(|(n, &c)| {
                let label = if c == 0 {
                    "O".to_string()
                } else if n > 0 && prev == c {
                    format!("I-T{c}")
                } else {
                    format!("B-T{c}")
                };
                prev = c;
                label
            })
            .collect()
    }

    /// Every tag the target rule can emit, in a fixed order.
    pub fn target_tag_set(&self) -> Vec<String> {
        let mut tags = vec!["O".to_string()];
        for c in 1..self.n_classes {
            tags.push(format!("B-T{c}"));
            tags.push(format!("I-T{c}"));
        }
        tags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpora {
    pub sources: Vec<Dataset>,
    pub target: Dataset,
}

fn draw_class_map(vocab: usize, classes: usize, r: &mut SeededRng) -> Vec<usize> {
    let mut map: Vec<usize> = (0..vocab).map(|_| r.random_range(0..classes)).collect();
    // every class is inhabited
    let order = rng::permutation(vocab, r);
    for c in 0..classes {
        map[order[c]] = c;
    }
    map
}

#[derive(Clone, Copy)]
enum Draw {
    Uniform,
    /// Mostly from the first half of the (shuffled) vocabulary.
    InDomain,
}

fn draw_concepts(spec: &SynthSpec, draw: Draw, domain: &[usize], r: &mut SeededRng) -> Vec<usize> {
    let len = r.random_range(spec.len_range.0..=spec.len_range.1);
    let half = (spec.vocab_size / 2).max(1);
    (0..len)
        .map(|_| match draw {
            Draw::Uniform => r.random_range(0..spec.vocab_size),
            Draw::InDomain => {
                if r.random::<f64>() < 0.8 {
                    domain[r.random_range(0..half)]
                } else {
                    r.random_range(0..spec.vocab_size)
                }
            }
        })
        .collect()
}

fn source_task_labels(k: usize, classes: &[usize]) -> Vec<String> {
    classes.iter().map(|c| format!("B-S{k}x{c}")).collect()
}

/// Generates source corpora and the target corpus for `spec`. The output is a
/// pure function of `spec`.
pub fn gen_synthetic(spec: &SynthSpec) -> SyntheticCorpora {
    let shared = spec.class_map();
    let domain = rng::permutation(spec.vocab_size, &mut rng::substream(spec.seed, "domain"));

    let mut sources = Vec::with_capacity(spec.n_sources);
    for k in 0..spec.n_sources {
        let map = if k == 0 {
            shared.clone()
        } else {
            let mut r = rng::substream(rng::derive_seed(spec.seed, k as u64), "noise-map");
            draw_class_map(spec.vocab_size, spec.n_classes, &mut r)
        };
        let mut r = rng::substream(rng::derive_seed(spec.seed, k as u64), "source-sentences");
        let sentences = (0..spec.n_source_sentences)
            .map(|_| {
                let concepts = draw_concepts(spec, Draw::Uniform, &domain, &mut r);
                let classes: Vec<usize> = concepts.iter().map(|&i| map[i]).collect();
                let labels = match spec.setting {
                    Setting::CrossTask => source_task_labels(k, &classes),
                    _ => SynthSpec::target_labels(&classes),
                };
                let tokens = concepts.iter().map(|&i| spec.source_token(i)).collect();
                TaggedSentence::new(tokens, labels).expect("generated labels are valid BIO")
            })
            .collect();
        sources.push(Dataset::new(sentences));
    }

    let target_draw = match spec.setting {
        Setting::CrossDomain => Draw::InDomain,
        _ => Draw::Uniform,
    };
    let renaming = spec.renaming();
    let tag_set = spec.target_tag_set();
    let mut r = rng::substream(spec.seed, "target-sentences");
    let mut noise = rng::substream(spec.seed, "target-noise");
    let sentences = (0..spec.n_sentences)
        .map(|_| {
            let concepts = draw_concepts(spec, target_draw, &domain, &mut r);
            let classes: Vec<usize> = concepts.iter().map(|&i| shared[i]).collect();
            let mut labels = SynthSpec::target_labels(&classes);
            if spec.noise_rate > 0.0 {
                for l in labels.iter_mut() {
                    if noise.random::<f64>() < spec.noise_rate {
                        *l = tag_set[noise.random_range(0..tag_set.len())].clone();
                    }
                }
                repair_bio(&mut labels);
            }
            let tokens = concepts
                .iter()
                .map(|&i| match spec.setting {
                    Setting::CrossLingual => format!("t{}", renaming[i]),
                    _ => spec.source_token(i),
                })
                .collect();
            TaggedSentence::new(tokens, labels).expect("repaired labels are valid BIO")
        })
        .collect();

    SyntheticCorpora {
        sources,
        target: Dataset::new(sentences),
    }
}

/// Static word vectors for the synthetic vocabulary.
///
/// Each concept gets a uniform random vector in `[-1, 1]^dim`. In the
/// cross-lingual setting the table also holds the target-language surface
/// forms, whose vectors are their concept's vector plus small noise, and every
/// vector is passed through one shared random linear map; the result plays the
/// part of pre-aligned bilingual embeddings.
pub fn synth_static_table(spec: &SynthSpec, dim: usize) -> EmbeddingTable {
    let mut r = rng::substream(spec.seed, "static-vectors");
    let base: Vec<Vec<f64>> = (0..spec.vocab_size)
        .map(|_| (0..dim).map(|_| rng::symmetric(&mut r, 1.0)).collect())
        .collect();

    let mut tokens = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, v) in base.iter().enumerate() {
        tokens.push(spec.source_token(i));
        rows.push(v.clone());
    }
    if spec.setting == Setting::CrossLingual {
        let renaming = spec.renaming();
        let mut jitter = rng::substream(spec.seed, "alignment-noise");
        for (i, v) in base.iter().enumerate() {
            tokens.push(format!("t{}", renaming[i]));
            rows.push(v.iter().map(|x| x + rng::symmetric(&mut jitter, 0.1)).collect());
        }
        let mut mr = rng::substream(spec.seed, "alignment-map");
        let scale = (3.0 / dim as f64).sqrt();
        let map = Array2::from_shape_fn((dim, dim), |_| rng::symmetric(&mut mr, scale));
        for row in rows.iter_mut() {
            let v = ndarray::Array1::from(row.clone());
            *row = v.dot(&map).to_vec();
        }
    }
    let mut matrix = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            matrix[[i, j]] = x;
        }
    }
    EmbeddingTable::from_parts(tokens, matrix).expect("synthetic vocabulary is unique")
}
