//! Training-level behaviour on synthetic corpora.

use std::sync::Arc;

use supmix::corpus::{gen_synthetic, read_columns, synth_static_table, Setting, SynthSpec};
use supmix::encoders::{source_accuracy, train_source, Encoder, SourceTrainConfig, ToyEncoder};
use supmix::evaluation::span_f1;
use supmix::experiments::{run_experiment, write_report, Condition, ExperimentSpec, SubsetSize};
use supmix::tagger::DecoderKind;
use supmix::training::{train_target, FrozenInputs, TrainConfig};

fn small_world() -> SynthSpec {
    SynthSpec {
        vocab_size: 50,
        n_sentences: 100,
        n_source_sentences: 600,
        ..SynthSpec::default()
    }
}

#[test]
fn informative_source_learns_its_task() {
    let spec = SynthSpec {
        n_source_sentences: 5500,
        n_sources: 1,
        ..SynthSpec::default()
    };
    let corpora = gen_synthetic(&spec);
    let data = &corpora.sources[0];
    let train = data.slice(0..5000);
    let held_out = data.slice(5000..5500);
    let params = train_source(&train, &SourceTrainConfig::default(), None).unwrap();
    let acc = source_accuracy(&params, &held_out);
    assert!(acc >= 0.99, "held-out accuracy {acc}");
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn representations_cluster_by_hidden_class() {
    let spec = SynthSpec {
        n_source_sentences: 2200,
        n_sources: 1,
        ..SynthSpec::default()
    };
    let classes = spec.class_map();
    let corpora = gen_synthetic(&spec);
    let data = &corpora.sources[0];
    let params = train_source(&data.slice(0..2000), &SourceTrainConfig::default(), None).unwrap();

    let mut vectors: Vec<(usize, Vec<f64>)> = Vec::new();
    for s in data.slice(2000..2040).sentences() {
        let h = params.toy_extract(s.tokens());
        for (i, tok) in s.tokens().iter().enumerate() {
            let concept: usize = tok[1..].parse().unwrap();
            vectors.push((classes[concept], h.row(i).to_vec()));
        }
    }
    let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let c = cosine(&vectors[i].1, &vectors[j].1);
            if vectors[i].0 == vectors[j].0 {
                within += c;
                nw += 1;
            } else {
                across += c;
                na += 1;
            }
        }
    }
    let (within, across) = (within / nw as f64, across / na as f64);
    assert!(within > across, "within {within} across {across}");
}

struct Setup {
    frozen: FrozenInputs,
    sources: Vec<ToyEncoder>,
    train: supmix::corpus::Dataset,
    dev: supmix::corpus::Dataset,
    labels: Vec<String>,
}

fn setup() -> Setup {
    let mut spec = small_world();
    spec.n_sentences = 140;
    let corpora = gen_synthetic(&spec);
    let cfg = SourceTrainConfig {
        epochs: 2,
        ..SourceTrainConfig::default()
    };
    let sources: Vec<ToyEncoder> = corpora
        .sources
        .iter()
        .enumerate()
        .map(|(k, d)| ToyEncoder::new(format!("s{k}"), train_source(d, &cfg, None).unwrap()))
        .collect();
    let encoders: Vec<Encoder> = sources.iter().map(|s| Arc::new(s.clone()) as Encoder).collect();
    Setup {
        frozen: FrozenInputs::new(Arc::new(synth_static_table(&spec, 10)), encoders),
        sources,
        train: corpora.target.slice(0..100),
        dev: corpora.target.slice(100..140),
        labels: spec.target_tag_set(),
    }
}

fn quick_config() -> TrainConfig {
    let mut cfg = TrainConfig::new(DecoderKind::Crf);
    cfg.epochs = 5;
    cfg.hidden = 10;
    cfg.mix_dim = 20;
    cfg
}

#[test]
fn training_loss_falls_and_runs_repeat_exactly() {
    let s = setup();
    let cfg = quick_config();
    let run = || train_target(&cfg, &s.train, &s.dev, &s.frozen, cfg.init_model(s.labels.clone(), &s.frozen)).unwrap();
    let a = run();
    assert!(a.trace[0].train_loss > a.trace[4].train_loss, "{:?}", a.trace);
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn sources_stay_frozen() {
    let s = setup();
    let before: Vec<String> = s.sources.iter().map(|e| e.to_text()).collect();
    let cfg = quick_config();
    let model = cfg.init_model(s.labels.clone(), &s.frozen);
    let out = train_target(&cfg, &s.train, &s.dev, &s.frozen, model.clone()).unwrap();
    assert_ne!(out.model.params, model.params);
    let after: Vec<String> = s
        .frozen
        .encoders
        .iter()
        .zip(&s.sources)
        .map(|(e, toy)| {
            assert_eq!(e.extract(s.train.sentences()[0].tokens()).unwrap(), toy.params().toy_extract(s.train.sentences()[0].tokens()));
            toy.to_text()
        })
        .collect();
    assert_eq!(before, after);
}

#[test]
fn frozen_target_config_leaves_parameters_alone() {
    let s = setup();
    let mut cfg = quick_config();
    cfg.epochs = 2;
    cfg.train_mixer = false;
    let model = cfg.init_model(s.labels.clone(), &s.frozen);
    let out = train_target(&cfg, &s.train, &s.dev, &s.frozen, model.clone()).unwrap();
    assert_eq!(out.model.params.mixer, model.params.mixer);
    assert_ne!(out.model.params.tagger, model.params.tagger);
}

fn tiny_experiment(setting: Setting) -> ExperimentSpec {
    let mut spec = ExperimentSpec::default_for(setting);
    spec.world.vocab_size = 30;
    spec.world.n_sentences = 60;
    spec.world.n_source_sentences = 200;
    spec.dev_size = 20;
    spec.test_size = 20;
    spec.static_dim = 8;
    spec.subset_sizes = vec![SubsetSize::Count(20), SubsetSize::All];
    spec.source_train.epochs = 1;
    spec.target_train.epochs = 3;
    spec.target_train.hidden = 6;
    spec.target_train.mix_dim = 10;
    spec
}

#[test]
fn experiment_report_is_complete_and_matches_its_files() {
    let spec = tiny_experiment(Setting::CrossTask);
    let report = run_experiment(&spec).unwrap();
    assert_eq!(report.cells.len(), 4);
    for size in &spec.subset_sizes {
        for cond in [Condition::StaticOnly, Condition::StaticPlusMix] {
            let cell = report.cell(*size, cond).unwrap();
            match cond {
                Condition::StaticOnly => assert!(cell.weights.is_none() && cell.gamma.is_none()),
                Condition::StaticPlusMix => {
                    let sum: f64 = cell.weights.as_ref().unwrap().iter().map(|w| w.1).sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
    assert_eq!(report.cell(SubsetSize::All, Condition::StaticOnly).unwrap().train_sentences, 60);

    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let gold = read_columns(&std::fs::read_to_string(dir.path().join("predictions/test_gold.conll")).unwrap()).unwrap();
    let gold: Vec<Vec<String>> = gold.into_iter().map(|(_, t)| t).collect();
    for cell in &report.cells {
        let text = std::fs::read_to_string(dir.path().join(format!("predictions/{}.conll", cell.stem()))).unwrap();
        let pred: Vec<Vec<String>> = read_columns(&text).unwrap().into_iter().map(|(_, t)| t).collect();
        assert_eq!(span_f1(&gold, &pred).unwrap(), cell.test);
    }
    for name in ["table.md", "metrics.tsv", "weights.txt", "spec.txt"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn other_settings_run() {
    for setting in [Setting::CrossDomain, Setting::CrossLingual] {
        let mut spec = tiny_experiment(setting);
        spec.subset_sizes = vec![SubsetSize::Count(20)];
        let a = run_experiment(&spec).unwrap();
        assert_eq!(a.cells.len(), 2);
        assert_eq!(a, run_experiment(&spec).unwrap());
    }
}
