use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episodic::{EvalReport, SweepPoint};
use crate::error::{Error, Result};
use crate::semantic_evolution::SemanticSource;

/// One line of a results table. Column order is fixed by field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    /// What distinguishes this row from the others of its experiment.
    pub arm: String,
    pub dataset: String,
    pub setting: String,
    pub alignment_source: String,
    pub semantic_source: String,
    pub classifier: String,
    pub k: f64,
    pub mean_accuracy: f64,
    pub ci95: f64,
    pub episode_seed: u64,
}

impl ReportRow {
    pub fn from_report(
        experiment: &str,
        arm: impl Into<String>,
        dataset: &str,
        report: &EvalReport,
    ) -> Self {
        let c = &report.config;
        Self {
            experiment: experiment.into(),
            arm: arm.into(),
            dataset: dataset.into(),
            setting: c.episodes.setting(),
            alignment_source: c
                .alignment_source
                .map_or_else(|| "none".into(), |s| s.to_string()),
            semantic_source: c
                .semantic_source
                .map_or_else(|| "none".into(), |s| s.to_string()),
            classifier: c.classifier.short().into(),
            k: c.fusion_k,
            mean_accuracy: report.mean_accuracy,
            ci95: report.ci95,
            episode_seed: c.episodes.seed,
        }
    }
}

/// Accuracy of one (semantic source, text encoder) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub semantic_source: SemanticSource,
    pub encoder: String,
    pub mean_accuracy: f64,
    pub ci95: f64,
}

/// Per-episode count of classes whose reconstruction beats the support mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityEpisode {
    pub task_index: usize,
    pub closer: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityReport {
    /// Share of (episode, class) pairs with `|r - c| < |u - c|`.
    pub fraction: f64,
    pub closer: usize,
    pub pairs: usize,
    /// `ground_truth` or `split_mean`.
    pub center_source: String,
    pub episodes: Vec<ProximityEpisode>,
}

pub fn write_csv<R: Serialize>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<R: Serialize>(path: impl AsRef<Path>, value: &R) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated `k accuracy ci95` lines for gnuplot.
pub fn write_sweep_dat(path: impl AsRef<Path>, points: &[SweepPoint]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("# k mean_accuracy ci95\n");
    for p in points {
        text.push_str(&format!("{} {} {}\n", p.k, p.mean_accuracy, p.ci95));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
