//! Classification report, attention Jaccard, paired model comparison and
//! embedding export.

mod jaccard;
mod metrics;
mod wilcoxon;

pub use jaccard::{binarize, check_threshold, jaccard_at, jaccard_many, jaccard_sets, JaccardResult, JaccardScore};
pub use metrics::{confusion_and_report, Averages, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use wilcoxon::{average_ranks, normal_p, wilcoxon_signed_rank, PMethod, WilcoxonResult, EXACT_MAX_N};

use std::path::Path;

use serde::Serialize;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::train::{argmax, for_each_batch};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.99, 0.90, 0.75];
const EVAL_BATCH: usize = 64;

/// Eval-mode outputs for a set of samples, in dataset order.
#[derive(Clone, Debug, Default)]
pub struct Inference {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    /// Upsampled attention maps, row-major `S × S`.
    pub attention: Vec<Vec<f32>>,
    pub quantum_out: Vec<Vec<f32>>,
    pub projection: Vec<Vec<f32>>,
    pub degenerate_embeddings: usize,
}

pub fn infer(model: &HybridModel<f32>, dataset: &Dataset, indices: &[usize]) -> Result<Inference> {
    if dataset.size != model.config().input_size {
        return Err(Error::Config(format!(
            "dataset images are {0}×{0} but the model expects {1}×{1}",
            dataset.size,
            model.config().input_size
        )));
    }
    if dataset.num_classes() != model.config().num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model has {}",
            dataset.num_classes(),
            model.config().num_classes
        )));
    }
    let mut inf = Inference::default();
    for_each_batch(model, dataset, indices, EVAL_BATCH, |chunk, batch, out| {
        for (n, &i) in chunk.iter().enumerate() {
            inf.indices.push(i);
            inf.labels.push(batch.labels[n]);
            inf.predictions.push(argmax(out.logits.batch_item(n)));
            inf.attention.push(out.attention.batch_item(n).to_vec());
            inf.quantum_out.push(out.quantum_out.batch_item(n).to_vec());
            inf.projection.push(out.projection.batch_item(n).to_vec());
        }
        inf.degenerate_embeddings += out.degenerate_embeddings;
        Ok(())
    })?;
    Ok(inf)
}

pub fn evaluate_split(model: &HybridModel<f32>, dataset: &Dataset, split: Split) -> Result<(MetricsReport, Inference)> {
    let indices = dataset.indices(split);
    if indices.is_empty() {
        return Err(Error::Data(format!("{split} split is empty")));
    }
    let inf = infer(model, dataset, &indices)?;
    let mut report = confusion_and_report(&inf.predictions, &inf.labels, &dataset.class_names)?;
    if inf.degenerate_embeddings > 0 {
        report
            .flags
            .push(format!("{} circuit inputs had near-zero norm and used |0…0⟩", inf.degenerate_embeddings));
    }
    if dataset.samples.iter().any(|s| s.constant_image) {
        report.flags.push("dataset contains constant images normalised to zero".into());
    }
    Ok((report, inf))
}

/// Tumor-bearing samples (non-empty mask) among `inf`, as (attention, mask) pairs.
pub fn tumor_pairs(dataset: &Dataset, inf: &Inference) -> Result<(Vec<Vec<f32>>, Vec<Vec<f32>>)> {
    let mut att = Vec::new();
    let mut masks = Vec::new();
    for (k, &i) in inf.indices.iter().enumerate() {
        let mask = dataset.samples[i]
            .mask
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sample `{}` has no mask", dataset.samples[i].id)))?;
        if mask.iter().any(|&v| v > 0.5) {
            att.push(inf.attention[k].clone());
            masks.push(mask.clone());
        }
    }
    if att.is_empty() {
        return Err(Error::Data("no tumor-bearing samples with masks".into()));
    }
    Ok((att, masks))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActivationSummary {
    pub healthy_mean: f64,
    pub tumor_mean: f64,
    pub healthy_count: usize,
    pub tumor_count: usize,
}

/// Mean attention value over images with empty masks vs non-empty masks.
pub fn attention_activation(dataset: &Dataset, inf: &Inference) -> Result<ActivationSummary> {
    let (mut h, mut t, mut hn, mut tn) = (0.0, 0.0, 0usize, 0usize);
    for (k, &i) in inf.indices.iter().enumerate() {
        let mask = dataset.samples[i]
            .mask
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sample `{}` has no mask", dataset.samples[i].id)))?;
        let a = &inf.attention[k];
        let mean = a.iter().map(|&v| v as f64).sum::<f64>() / a.len() as f64;
        if mask.iter().any(|&v| v > 0.5) {
            t += mean;
            tn += 1;
        } else {
            h += mean;
            hn += 1;
        }
    }
    if hn == 0 || tn == 0 {
        return Err(Error::Data("need both healthy and tumor-bearing samples".into()));
    }
    Ok(ActivationSummary {
        healthy_mean: h / hn as f64,
        tumor_mean: t / tn as f64,
        healthy_count: hn,
        tumor_count: tn,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub threshold: f64,
    pub jaccard_a: f64,
    pub jaccard_b: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub method: PMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub name_a: String,
    pub name_b: String,
    pub samples: usize,
    pub rows: Vec<ComparisonRow>,
    pub flags: Vec<String>,
}

impl ComparisonTable {
    pub const HEADER: [&'static str; 5] = ["Threshold (τ)", "Jaccard A", "Jaccard B", "Wilcoxon W", "p-value"];

    pub fn to_table(&self) -> String {
        let mut out = format!("A = {}, B = {}, tumor-bearing samples = {}\n", self.name_a, self.name_b, self.samples);
        out += &format!(
            "{:<14}  {:>10}  {:>10}  {:>11}  {:>10}\n",
            Self::HEADER[0],
            Self::HEADER[1],
            Self::HEADER[2],
            Self::HEADER[3],
            Self::HEADER[4]
        );
        for r in &self.rows {
            out += &format!(
                "{:<14.2}  {:>10.5}  {:>10.5}  {:>11.1}  {:>10.5}\n",
                r.threshold, r.jaccard_a, r.jaccard_b, r.statistic, r.p_value
            );
        }
        for f in &self.flags {
            out += &format!("note: {f}\n");
        }
        out
    }
}

/// Per-threshold mean Jaccard of two models on the tumor-bearing samples of
/// `split`, with a paired Wilcoxon test on the per-sample scores.
pub fn compare_models(
    model_a: &HybridModel<f32>,
    model_b: &HybridModel<f32>,
    dataset: &Dataset,
    split: Split,
    thresholds: &[f64],
) -> Result<ComparisonTable> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("no thresholds given".into()));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let indices = dataset.indices(split);
    if indices.is_empty() {
        return Err(Error::Data(format!("{split} split is empty")));
    }
    if dataset.samples.iter().any(|s| s.mask.is_none()) {
        return Err(Error::Data("comparison needs masks for every sample".into()));
    }
    let inf_a = infer(model_a, dataset, &indices)?;
    let inf_b = infer(model_b, dataset, &indices)?;
    let (att_a, masks) = tumor_pairs(dataset, &inf_a)?;
    let (att_b, _) = tumor_pairs(dataset, &inf_b)?;
    let mut flags = vec!["scores use tumor-bearing samples only; thresholds are relative to each map's maximum".into()];
    let mut rows = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let ja = jaccard_many(&att_a, &masks, tau)?;
        let jb = jaccard_many(&att_b, &masks, tau)?;
        let w = wilcoxon_signed_rank(&ja.scores, &jb.scores)?;
        if w.method == PMethod::Degenerate {
            flags.push(format!("τ = {tau}: all paired differences are zero; p set to 1"));
        }
        rows.push(ComparisonRow {
            threshold: tau,
            jaccard_a: ja.mean,
            jaccard_b: jb.mean,
            statistic: w.statistic,
            p_value: w.p_value,
            method: w.method,
        });
    }
    Ok(ComparisonTable {
        name_a: model_a.config().variant.to_string(),
        name_b: model_b.config().variant.to_string(),
        samples: masks.len(),
        rows,
        flags,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingLayer {
    /// Bottleneck output `[c·q]`.
    QuantumOut,
    /// Projection `z` `[c·2^q]` feeding the bottleneck.
    PreHead,
}

impl std::str::FromStr for EmbeddingLayer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum_out" => Ok(EmbeddingLayer::QuantumOut),
            "pre_head" => Ok(EmbeddingLayer::PreHead),
            other => Err(Error::InvalidArgument(format!(
                "unknown layer `{other}` (expected quantum_out or pre_head)"
            ))),
        }
    }
}

/// Writes `sample_id,label,v1..vm` for every sample of the dataset and
/// returns the number of rows.
pub fn export_embeddings(model: &HybridModel<f32>, dataset: &Dataset, layer: EmbeddingLayer, path: &Path) -> Result<usize> {
    let indices: Vec<usize> = (0..dataset.samples.len()).collect();
    let inf = infer(model, dataset, &indices)?;
    let vectors = match layer {
        EmbeddingLayer::QuantumOut => &inf.quantum_out,
        EmbeddingLayer::PreHead => &inf.projection,
    };
    let width = vectors.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend((1..=width).map(|j| format!("v{j}")));
    w.write_record(&header).map_err(|e| Error::format(path, e.to_string()))?;
    for (k, &i) in inf.indices.iter().enumerate() {
        let mut rec = vec![dataset.samples[i].id.clone(), inf.labels[k].to_string()];
        rec.extend(vectors[k].iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(inf.indices.len())
}
