//! Commands behind the `hqcm` binary.

mod config;

pub use config::{RunConfig, DEFAULT_SEED, SEED_ENV};

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{generate_synthetic, load_dataset, to_u8, Dataset, GrayImage, Split};
use crate::eval::{
    binarize, check_threshold, compare_models, evaluate_split, export_embeddings, infer, jaccard_at, EmbeddingLayer,
    MetricsReport, DEFAULT_THRESHOLDS,
};
use crate::model::{HybridModel, Variant};
use crate::train::{train_with_progress, write_history_csv};

#[derive(Debug, Parser)]
#[command(name = "hqcm", version, about = "Hybrid quantum-classical attention CNN for tumor image classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic four-class dataset (PGM images, masks, manifest).
    GenData(GenDataArgs),
    /// Train a hybrid or classical model and write a checkpoint plus history CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and write a JSON metrics report.
    Eval(EvalArgs),
    /// Write input, mask, attention, thresholded and overlay PGMs per sample.
    AttnMaps(AttnMapsArgs),
    /// Compare the attention Jaccard of two checkpoints with a Wilcoxon test.
    Compare(CompareArgs),
    /// Export per-sample embeddings as CSV for external t-SNE.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Defaults to HQCM_SEED, then 42.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` configuration file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV path (default: checkpoint path with `.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Configuration override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct AttnMapsArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.99, value_parser = parse_tau)]
    pub tau: f64,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long = "ckpt-a")]
    pub ckpt_a: PathBuf,
    #[arg(long = "ckpt-b")]
    pub ckpt_b: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated thresholds in (0, 1).
    #[arg(long, value_delimiter = ',', value_parser = parse_tau, default_values_t = DEFAULT_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Also write the table as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// `quantum_out` or `pre_head`.
    #[arg(long, default_value = "quantum_out", value_parser = parse_layer)]
    pub layer: EmbeddingLayer,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_tau(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    check_threshold(v).map_err(|e| e.to_string())?;
    Ok(v)
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_layer(s: &str) -> Result<EmbeddingLayer, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::AttnMaps(a) => attn_maps(a),
        Command::Compare(a) => compare(a),
        Command::ExportEmbeddings(a) => export(a),
    }
}

fn seed_or_env(seed: Option<u64>) -> anyhow::Result<u64> {
    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    Ok(cfg.resolved_seed()?)
}

fn gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    let seed = seed_or_env(a.seed)?;
    let manifest = generate_synthetic(&a.out, a.n, a.size, seed)
        .with_context(|| format!("generating dataset in {}", a.out.display()))?;
    let counts = manifest.split_counts();
    println!("wrote {} samples ({}×{}, seed {seed}) to {}", manifest.rows.len(), a.size, a.size, a.out.display());
    println!("{:<12} {:>6} {:>6} {:>6}", "class", "train", "val", "test");
    for (c, name) in manifest.class_names.iter().enumerate() {
        println!("{:<12} {:>6} {:>6} {:>6}", name, counts[0][c], counts[1][c], counts[2][c]);
    }
    let totals: Vec<usize> = counts.iter().map(|s| s.iter().sum()).collect();
    println!("{:<12} {:>6} {:>6} {:>6}", "total", totals[0], totals[1], totals[2]);
    Ok(())
}

fn load_for_model(data: &Path, model: &HybridModel<f32>) -> anyhow::Result<Dataset> {
    let ds = load_dataset(data, Some(model.config().input_size))
        .with_context(|| format!("loading dataset {}", data.display()))?;
    if ds.num_classes() != model.config().num_classes {
        bail!(
            "checkpoint has {} classes but the dataset has {}",
            model.config().num_classes,
            ds.num_classes()
        );
    }
    Ok(ds)
}

fn load_model(path: &Path) -> anyhow::Result<HybridModel<f32>> {
    HybridModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&a.overrides)?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    let tc = cfg.train_config()?;
    let ds = load_dataset(&a.data, cfg.image_size).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let model_cfg = cfg.model_config(ds.size, ds.num_classes());
    let mut model = HybridModel::<f32>::new(model_cfg.clone(), tc.seed)?;
    let other = match cfg.variant {
        Variant::Hybrid => Variant::Classical,
        Variant::Classical => Variant::Hybrid,
    };
    let other_count = HybridModel::<f32>::new(model_cfg.with_variant(other), tc.seed)?.parameter_count();
    println!(
        "training {} model: {} parameters ({} counterpart: {}), {} train / {} val samples, seed {}",
        cfg.variant,
        model.parameter_count(),
        other,
        other_count,
        ds.indices(Split::Train).len(),
        ds.indices(Split::Val).len(),
        tc.seed
    );
    let quiet = a.quiet;
    let report = train_with_progress(&mut model, &ds, &tc, |r| {
        if !quiet {
            println!(
                "epoch {:>3}  train_loss {:.4}  train_acc {:.4}  val_loss {:.4}  val_acc {:.4}  lr {:.6}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr
            );
            let _ = std::io::stdout().flush();
        }
    })?;
    model.save(&a.out)?;
    let history = a.history.unwrap_or_else(|| a.out.with_extension("history.csv"));
    write_history_csv(&history, &report.history)?;
    let best = &report.history[report.best_epoch - 1];
    println!(
        "kept epoch {} (val_loss {:.4}); final val accuracy {:.4}{}",
        report.best_epoch,
        best.val_loss,
        best.val_acc,
        if report.stopped_early { " (stopped early)" } else { "" }
    );
    println!("checkpoint: {}\nhistory: {}", a.out.display(), history.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    split: Split,
    variant: Variant,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let model = load_model(&a.ckpt)?;
    let ds = load_for_model(&a.data, &model)?;
    let (report, _) = evaluate_split(&model, &ds, a.split)?;
    let out = EvalOutput {
        split: a.split,
        variant: model.config().variant,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&out)?;
    std::fs::write(&a.report, json + "\n").with_context(|| format!("writing {}", a.report.display()))?;
    println!("{} model on the {} split ({} samples)", model.config().variant, a.split, report.total);
    print!("{}", report.to_table());
    for f in &report.flags {
        println!("note: {f}");
    }
    println!("report: {}", a.report.display());
    Ok(())
}

fn write_plane(path: &Path, size: usize, values: impl Iterator<Item = u8>) -> anyhow::Result<()> {
    GrayImage::new(size, size, values.collect())?.write(path)?;
    Ok(())
}

fn attn_maps(a: AttnMapsArgs) -> anyhow::Result<()> {
    let model = load_model(&a.ckpt)?;
    let ds = load_for_model(&a.data, &model)?;
    let indices = ds.indices(a.split);
    if indices.is_empty() {
        bail!("{} split is empty", a.split);
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let inf = infer(&model, &ds, &indices)?;
    let s = ds.size;
    let csv_path = a.out.join("jaccard.csv");
    let mut csv = csv::Writer::from_path(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    csv.write_record(["sample_id", "index", "label", "predicted", "tau", "jaccard", "empty_union"])?;
    for (k, &i) in inf.indices.iter().enumerate() {
        let sample = &ds.samples[i];
        let att = &inf.attention[k];
        let stem = format!("s{i:05}");
        let mask = sample
            .mask
            .as_ref()
            .with_context(|| format!("sample `{}` has no mask", sample.id))?;
        write_plane(&a.out.join(format!("{stem}_input.pgm")), s, sample.image.iter().map(|&v| to_u8(v)))?;
        write_plane(&a.out.join(format!("{stem}_mask.pgm")), s, mask.iter().map(|&v| to_u8(v)))?;
        write_plane(&a.out.join(format!("{stem}_attention.pgm")), s, att.iter().map(|&v| to_u8(v)))?;
        write_plane(
            &a.out.join(format!("{stem}_binary.pgm")),
            s,
            binarize(att, a.tau).into_iter().map(|b| if b { 255 } else { 0 }),
        )?;
        write_plane(
            &a.out.join(format!("{stem}_overlay.pgm")),
            s,
            sample.image.iter().zip(att).map(|(&x, &v)| to_u8(x + 0.5 * v)),
        )?;
        let j = jaccard_at(att, mask, a.tau)?;
        csv.write_record([
            sample.id.clone(),
            i.to_string(),
            sample.label.to_string(),
            inf.predictions[k].to_string(),
            a.tau.to_string(),
            j.score.to_string(),
            j.empty_union.to_string(),
        ])?;
    }
    csv.flush()?;
    println!(
        "wrote 5 maps for each of {} {} samples and {}",
        inf.indices.len(),
        a.split,
        csv_path.display()
    );
    Ok(())
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let model_a = load_model(&a.ckpt_a)?;
    let model_b = load_model(&a.ckpt_b)?;
    if model_a.config().input_size != model_b.config().input_size {
        bail!(
            "checkpoints expect different image sizes ({} vs {})",
            model_a.config().input_size,
            model_b.config().input_size
        );
    }
    let ds = load_for_model(&a.data, &model_a)?;
    let table = compare_models(&model_a, &model_b, &ds, a.split, &a.thresholds)?;
    print!("{}", table.to_table());
    if let Some(p) = &a.json {
        std::fs::write(p, serde_json::to_string_pretty(&table)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn export(a: ExportArgs) -> anyhow::Result<()> {
    let model = load_model(&a.ckpt)?;
    let ds = load_for_model(&a.data, &model)?;
    let rows = export_embeddings(&model, &ds, a.layer, &a.out)?;
    println!("wrote {rows} rows to {}", a.out.display());
    Ok(())
}
