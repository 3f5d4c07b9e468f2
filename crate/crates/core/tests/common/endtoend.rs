//! Drives the `hqcm` binary on a small generated dataset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hqcm::data::{load_dataset, Split};
use hqcm::model::HybridModel;
use serde_json::Value;
use tempfile::TempDir;

use super::binary_name;

pub fn hqcm(args: &[&str]) -> Output {
    Command::new(binary_name()).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub struct Fixture {
    pub dir: TempDir,
    pub data: PathBuf,
}

impl Fixture {
    /// 40 samples of 16×16.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        super::generate(&data, 40, 16, 5);
        Fixture { dir, data }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Two-epoch run with small layers; returns the checkpoint path.
    pub fn train(&self, name: &str, variant: &str, seed: u64) -> Result<PathBuf, String> {
        let ckpt = self.path(&format!("{name}.bin"));
        let history = self.path(&format!("{name}.csv"));
        let seed = seed.to_string();
        let out = hqcm(&[
            "train", "--data", s(&self.data), "--variant", variant, "--out", s(&ckpt), "--history", s(&history),
            "--seed", &seed, "--quiet", "--set", "epochs=2", "--set", "conv_channels=8,8,8", "--set", "batch_size=8",
        ]);
        if !out.status.success() {
            return Err(format!("train failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        Ok(ckpt)
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

/// Two runs with the same seed must write identical history files.
pub fn history_determinism(f: &Fixture) -> Result<(), String> {
    f.train("run1", "hybrid", 11)?;
    f.train("run2", "hybrid", 11)?;
    let a = std::fs::read(f.path("run1.csv")).map_err(|e| e.to_string())?;
    let b = std::fs::read(f.path("run2.csv")).map_err(|e| e.to_string())?;
    if a.is_empty() || a != b {
        return Err("history CSVs differ".into());
    }
    let ca = std::fs::read(f.path("run1.bin")).map_err(|e| e.to_string())?;
    let cb = std::fs::read(f.path("run2.bin")).map_err(|e| e.to_string())?;
    if ca != cb {
        return Err("checkpoints differ".into());
    }
    Ok(())
}

/// save → load → forward reproduces logits and attention bit for bit.
pub fn checkpoint_roundtrip(f: &Fixture, ckpt: &Path) -> Result<(), String> {
    let model = HybridModel::<f32>::load(ckpt).map_err(|e| e.to_string())?;
    let ds = load_dataset(&f.data, Some(model.config().input_size)).map_err(|e| e.to_string())?;
    let batch = ds.batch(&ds.indices(Split::Test), None).map_err(|e| e.to_string())?;
    let before = model.predict(&batch.images).map_err(|e| e.to_string())?;
    let copy = f.path("roundtrip.bin");
    model.save(&copy).map_err(|e| e.to_string())?;
    let reloaded = HybridModel::<f32>::load(&copy).map_err(|e| e.to_string())?;
    let after = reloaded.predict(&batch.images).map_err(|e| e.to_string())?;
    let bits = |t: &hqcm::Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    if bits(&before.logits) != bits(&after.logits) || bits(&before.attention) != bits(&after.attention) {
        return Err("forward pass changed after reload".into());
    }
    if std::fs::read(ckpt).ok() != std::fs::read(&copy).ok() {
        return Err("re-saved checkpoint differs".into());
    }
    Ok(())
}

fn compare_json(f: &Fixture, a: &Path, b: &Path, name: &str) -> Result<(String, Value), String> {
    let json = f.path(name);
    let out = hqcm(&["compare", "--ckpt-a", s(a), "--ckpt-b", s(b), "--data", s(&f.data), "--json", s(&json)]);
    if !out.status.success() {
        return Err(format!("compare failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let v = serde_json::from_slice(&std::fs::read(&json).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), v))
}

/// A model compared with itself: equal Jaccard columns, p = 1, flagged.
pub fn self_comparison(f: &Fixture, ckpt: &Path) -> Result<(), String> {
    let (_, v) = compare_json(f, ckpt, ckpt, "self.json")?;
    let rows = v["rows"].as_array().ok_or("no rows")?;
    for r in rows {
        if r["jaccard_a"] != r["jaccard_b"] || r["p_value"].as_f64() != Some(1.0) || r["method"] != "degenerate" {
            return Err(format!("bad self-comparison row {r}"));
        }
    }
    let flagged = v["flags"].as_array().ok_or("no flags")?.iter().filter(|f| f.as_str().is_some_and(|s| s.contains("p set to 1"))).count();
    if flagged != rows.len() {
        return Err(format!("{flagged} flags for {} rows", rows.len()));
    }
    Ok(())
}

/// The eval report carries per-class P/R/F1, accuracy and both averages.
pub fn eval_report_fields(f: &Fixture, ckpt: &Path) -> Result<(), String> {
    let report = f.path("eval.json");
    let out = hqcm(&["eval", "--ckpt", s(ckpt), "--data", s(&f.data), "--report", s(&report)]);
    if !out.status.success() {
        return Err(format!("eval failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let v: Value = serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let per_class = v["per_class"].as_array().ok_or("no per_class")?;
    if per_class.len() != 4 {
        return Err(format!("{} classes in report", per_class.len()));
    }
    for c in per_class {
        for key in ["class", "precision", "recall", "f1", "support"] {
            if c.get(key).is_none() {
                return Err(format!("class entry lacks {key}"));
            }
        }
    }
    if !v["overall_accuracy"].is_number() {
        return Err("no overall_accuracy".into());
    }
    for avg in ["macro_avg", "weighted_avg"] {
        for key in ["precision", "recall", "f1"] {
            if !v[avg][key].is_number() {
                return Err(format!("{avg}.{key} missing"));
            }
        }
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    for word in ["precision", "recall", "f1", "accuracy", "macro", "weighted"] {
        if !stdout.to_lowercase().contains(word) {
            return Err(format!("printed table lacks {word}"));
        }
    }
    Ok(())
}

/// Three threshold rows of five columns each, on stdout and in the JSON.
pub fn comparison_table_shape(f: &Fixture, a: &Path, b: &Path) -> Result<(), String> {
    let (stdout, v) = compare_json(f, a, b, "pair.json")?;
    let lines: Vec<&str> = stdout.lines().collect();
    let header = lines.iter().position(|l| l.starts_with("Threshold")).ok_or("no header")?;
    let cols = |l: &str| l.split("  ").map(str::trim).filter(|c| !c.is_empty()).count();
    if cols(lines[header]) != 5 {
        return Err(format!("header has {} columns", cols(lines[header])));
    }
    let rows: Vec<&&str> = lines[header + 1..].iter().take_while(|l| !l.starts_with("note")).collect();
    if rows.len() != 3 {
        return Err(format!("{} rows", rows.len()));
    }
    for r in rows {
        let fields: Vec<&str> = r.split_whitespace().collect();
        if fields.len() != 5 || fields.iter().any(|x| x.parse::<f64>().is_err()) {
            return Err(format!("bad row `{r}`"));
        }
    }
    let json_rows = v["rows"].as_array().ok_or("no rows")?;
    if json_rows.len() != 3 || json_rows.iter().any(|r| r.as_object().map_or(0, |o| o.len()) < 5) {
        return Err("JSON rows do not match the table".into());
    }
    Ok(())
}
