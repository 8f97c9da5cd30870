//! Seeded transfer experiments on synthetic corpora: static vectors alone
//! versus static vectors plus a learned mixture of frozen sources.

mod spec;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub use spec::{Condition, ExperimentSpec, SubsetSize};

use crate::corpus::{gen_synthetic, subsample, synth_static_table, write_conll, write_tagged, Dataset, Setting};
use crate::encoders::{source_accuracy, train_source, Encoder, ToyEncoder};
use crate::error::{Error, Result};
use crate::evaluation::{span_f1, Prf};
use crate::mixer::MixParams;
use crate::model::{model_to_text, ModelRefs};
use crate::rng;
use crate::training::{metrics_tsv, predict_dataset, train_target, EpochMetrics, FrozenInputs, TargetModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSummary {
    pub name: String,
    /// Token accuracy of the source classifier on its own training data.
    pub train_accuracy: f64,
    pub encoder: ToyEncoder,
}

/// One (subset size, condition) cell. Parameters, weights and scores are
/// those of the best-dev epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub size: SubsetSize,
    pub train_sentences: usize,
    pub condition: Condition,
    pub best_epoch: usize,
    pub dev: Prf,
    pub test: Prf,
    pub weights: Option<Vec<(String, f64)>>,
    pub gamma: Option<f64>,
    pub trace: Vec<EpochMetrics>,
    pub test_predictions: Vec<Vec<String>>,
    pub model: TargetModel,
}

impl CellResult {
    /// File-name stem, e.g. `n100_static_plus_mix`.
    pub fn stem(&self) -> String {
        format!("n{}_{}", self.size, self.condition.name())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub sources: Vec<SourceSummary>,
    pub static_table: Arc<crate::embeddings::EmbeddingTable>,
    pub test_gold: Dataset,
    pub cells: Vec<CellResult>,
    pub wall_time: Duration,
}

/// Wall time is not compared.
impl PartialEq for ExperimentReport {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.sources == other.sources
            && self.static_table == other.static_table
            && self.test_gold == other.test_gold
            && self.cells == other.cells
    }
}

impl ExperimentReport {
    pub fn cell(&self, size: SubsetSize, condition: Condition) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.size == size && c.condition == condition)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let started = Instant::now();

    let pool_size = spec.world.n_sentences;
    let mut world = spec.world.clone();
    world.n_sentences = pool_size + spec.dev_size + spec.test_size;
    let corpora = gen_synthetic(&world);
    let pool = corpora.target.slice(0..pool_size);
    let dev = corpora.target.slice(pool_size..pool_size + spec.dev_size);
    let test = corpora.target.slice(pool_size + spec.dev_size..world.n_sentences);
    let table = Arc::new(synth_static_table(&world, spec.static_dim));

    // Cross-lingual sources read the shared static space so that their
    // features carry over to the renamed target vocabulary.
    let frozen_input = (world.setting == Setting::CrossLingual).then(|| table.as_ref());
    let mut sources = Vec::with_capacity(spec.source_names.len());
    for (k, (name, data)) in spec.source_names.iter().zip(&corpora.sources).enumerate() {
        let mut cfg = spec.source_train.clone();
        cfg.seed = rng::derive_seed(cfg.seed, k as u64);
        let params = train_source(data, &cfg, frozen_input).map_err(|e| e.in_cell(format!("source `{name}`")))?;
        sources.push(SourceSummary {
            name: name.clone(),
            train_accuracy: source_accuracy(&params, data),
            encoder: ToyEncoder::new(name.clone(), params),
        });
    }
    let encoders: Vec<Encoder> = sources.iter().map(|s| Arc::new(s.encoder.clone()) as Encoder).collect();

    let labels = world.target_tag_set();
    let gold: Vec<&[String]> = test.sentences().iter().map(|s| s.labels()).collect();
    let mut cells = Vec::new();
    for &size in &spec.subset_sizes {
        let n = match size {
            SubsetSize::Count(n) => n,
            SubsetSize::All => pool.len(),
        };
        let train = subsample(&pool, n, rng::derive_seed(spec.seed, n as u64));
        for &condition in &spec.conditions {
            let cell_name = format!("cell n={size} {}", condition.name());
            let frozen = FrozenInputs::new(
                table.clone(),
                match condition {
                    Condition::StaticOnly => Vec::new(),
                    Condition::StaticPlusMix => encoders.clone(),
                },
            );
            let run = || -> Result<CellResult> {
                let cfg = &spec.target_train;
                let model = cfg.init_model(labels.clone(), &frozen);
                let outcome = train_target(cfg, &train, &dev, &frozen, model)?;
                let best = &outcome.trace[outcome.best_epoch - 1];
                let test_predictions = predict_dataset(&outcome.model, &frozen, &test)?;
                let test_prf = span_f1(&gold.iter().map(|g| g.to_vec()).collect::<Vec<_>>(), &test_predictions)?;
                Ok(CellResult {
                    size,
                    train_sentences: train.len(),
                    condition,
                    best_epoch: outcome.best_epoch,
                    dev: best.dev,
                    test: test_prf,
                    weights: outcome.model.mixture_weights(),
                    gamma: outcome.model.params.mixer.as_ref().map(|m| m.gamma),
                    trace: outcome.trace,
                    test_predictions,
                    model: outcome.model,
                })
            };
            cells.push(run().map_err(|e| e.in_cell(cell_name))?);
        }
    }

    Ok(ExperimentReport {
        spec: spec.clone(),
        sources,
        static_table: table,
        test_gold: test,
        cells,
        wall_time: started.elapsed(),
    })
}

/// Markdown table: one row per condition, a Dev and a Test column per subset
/// size, span F1 as percentages with two decimals.
pub fn emit_table(report: &ExperimentReport) -> String {
    let sizes = &report.spec.subset_sizes;
    let mut out = String::from("| Condition |");
    for s in sizes {
        let _ = write!(out, " n={s} Dev | n={s} Test |");
    }
    out.push_str("\n|---|");
    for _ in sizes {
        out.push_str("---:|---:|");
    }
    out.push('\n');
    for &c in &report.spec.conditions {
        let _ = write!(out, "| {} |", c.name());
        for &s in sizes {
            match report.cell(s, c) {
                Some(cell) => {
                    let _ = write!(out, " {:.2} | {:.2} |", 100.0 * cell.dev.f1, 100.0 * cell.test.f1);
                }
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Weight report: `name weight` pairs sorted by descending weight, then the
/// scale. A note is added when the rounded weights do not sum to 1.00.
pub fn inspect_mix(params: &MixParams, names: &[String]) -> Result<String> {
    if names.len() != params.sources() {
        return Err(Error::dimension("source names", params.sources(), names.len()));
    }
    let weights: Vec<(String, f64)> = names.iter().cloned().zip(params.weights()).collect();
    Ok(format_weights(&weights, params.gamma))
}

fn format_weights(weights: &[(String, f64)], gamma: f64) -> String {
    let mut sorted: Vec<&(String, f64)> = weights.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let line = sorted
        .iter()
        .map(|(n, w)| format!("{n} {w:.2}"))
        .collect::<Vec<_>>()
        .join(" / ");
    let mut out = format!("{line}\ngamma {gamma:.2}\n");
    let rounded: f64 = sorted.iter().map(|(_, w)| (w * 100.0).round() / 100.0).sum();
    if (rounded - 1.0).abs() > 1e-9 {
        let _ = writeln!(out, "note: rounded weights sum to {rounded:.2}; unrounded they sum to 1");
    }
    out
}

fn weights_report(report: &ExperimentReport) -> String {
    let mut out = String::from("# mixture weights at the best-dev epoch of each cell\n");
    for cell in &report.cells {
        if let (Some(w), Some(g)) = (&cell.weights, cell.gamma) {
            let _ = write!(
                out,
                "\n## n={} {} (best dev epoch {})\n{}",
                cell.size,
                cell.condition.name(),
                cell.best_epoch,
                format_weights(w, g)
            );
        }
    }
    out
}

fn metrics_report(report: &ExperimentReport) -> String {
    let mut out = String::from(
        "subset\ttrain_sentences\tcondition\tbest_epoch\tdev_p\tdev_r\tdev_f1\ttest_p\ttest_r\ttest_f1\n",
    );
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.size,
            c.train_sentences,
            c.condition.name(),
            c.best_epoch,
            c.dev.tsv(),
            c.test.tsv()
        );
    }
    out
}

fn sources_report(report: &ExperimentReport) -> String {
    let mut out = String::from("source\ttrain_accuracy\n");
    for s in &report.sources {
        let _ = writeln!(out, "{}\t{:.2}", s.name, 100.0 * s.train_accuracy);
    }
    out
}

/// Writes every artifact of `report` under `dir`:
///
/// ```text
/// table.md  metrics.tsv  weights.txt  sources.tsv  spec.txt  static.vec
/// predictions/test_gold.conll  predictions/<cell>.conll
/// traces/<cell>.tsv  sources/<name>.model  models/<cell>.model
/// ```
///
/// Models reference `static.vec` and `sources/` by absolute path, so they
/// load with `evaluate` as is. Returns the written paths.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    for sub in ["predictions", "traces", "sources", "models"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let dir = dir.canonicalize()?;
    let mut written = Vec::new();
    let mut put = |rel: String, text: String| -> Result<()> {
        let p = dir.join(rel);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("table.md".into(), emit_table(report))?;
    put("metrics.tsv".into(), metrics_report(report))?;
    put("weights.txt".into(), weights_report(report))?;
    put("sources.tsv".into(), sources_report(report))?;
    put("spec.txt".into(), report.spec.to_text())?;
    put("static.vec".into(), report.static_table.to_text())?;
    put("predictions/test_gold.conll".into(), write_conll(&report.test_gold))?;

    let mut source_paths = Vec::new();
    for s in &report.sources {
        let rel = format!("sources/{}.model", s.name);
        source_paths.push(dir.join(&rel));
        put(rel, s.encoder.to_text())?;
    }
    for cell in &report.cells {
        let stem = cell.stem();
        put(
            format!("predictions/{stem}.conll"),
            write_tagged(&report.test_gold, &cell.test_predictions)?,
        )?;
        put(format!("traces/{stem}.tsv"), metrics_tsv(&cell.trace))?;
        let refs = ModelRefs {
            static_emb: dir.join("static.vec"),
            sources: if cell.model.params.mixer.is_some() { source_paths.clone() } else { Vec::new() },
        };
        put(format!("models/{stem}.model"), model_to_text(&cell.model, &refs))?;
    }
    Ok(written)
}
