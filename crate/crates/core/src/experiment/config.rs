use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticSpec;
use crate::alignment_net::TrainConfig;
use crate::episodic::{ClassifierKind, EpisodeSpec};
use crate::error::{Error, Result};
use crate::semantic_evolution::LlmConfig;

/// File locations. Relative paths resolve against the directory holding the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub cache: PathBuf,
    pub classes: Option<PathBuf>,
    /// Embedding sets, one per text encoder. The first feeds training and
    /// evaluation; all of them feed the semantic grid.
    pub embeddings: Vec<PathBuf>,
    pub periphery: Option<PathBuf>,
    /// Ground-truth centers for the proximity check, when known.
    pub centers: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
    pub definitions: Option<PathBuf>,
    pub corpus: PathBuf,
    pub paraphrase_cache: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            cache: "features.sfew".into(),
            classes: None,
            embeddings: vec![],
            periphery: None,
            centers: None,
            checkpoint: "checkpoints/alignment.sfck".into(),
            output_dir: "reports".into(),
            definitions: None,
            corpus: "corpus.json".into(),
            paraphrase_cache: "paraphrase_cache".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodesConfig {
    #[serde(flatten)]
    pub spec: EpisodeSpec,
    /// Probability that a class draws its supports from the periphery pool.
    /// Unset means uniform supports.
    pub periphery_bias: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// per-class mean of the base split
    Mean,
    /// center of the largest k-means cluster
    Cluster,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Mean => "mean",
            TargetKind::Cluster => "cluster",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetsConfig {
    pub kind: TargetKind,
    pub clusters_per_class: usize,
    pub seed: u64,
}

impl Default for TargetsConfig {
    fn default() -> Self {
        Self {
            kind: TargetKind::Mean,
            clusters_per_class: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Fusion factor: weight of the reconstructed prototype.
    pub k: f64,
    pub classifier: ClassifierKind,
    pub sweep_step: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 0.5,
            classifier: ClassifierKind::Cosine,
            sweep_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    Sources,
    Targets,
    Classifiers,
    Semantics,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Sources => "sources",
            Ablation::Targets => "targets",
            Ablation::Classifiers => "classifiers",
            Ablation::Semantics => "semantics",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Ablation::Sources,
            Ablation::Targets,
            Ablation::Classifiers,
            Ablation::Semantics,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::Argument(format!("unknown ablation `{s}`")))
    }
}

/// Everything a run reads, as stored in `experiment.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub train: TrainConfig,
    pub targets: TargetsConfig,
    pub episodes: EpisodesConfig,
    pub eval: EvalConfig,
    pub ablation: Option<Ablation>,
    pub llm: LlmConfig,
    /// Generator settings, kept for provenance when the data is synthetic.
    pub synthetic: Option<SyntheticSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.eval.k) {
            return Err(Error::Argument(format!(
                "fusion factor k = {} is outside [0, 1]",
                self.eval.k
            )));
        }
        if !(self.eval.sweep_step > 0.0 && self.eval.sweep_step <= 1.0) {
            return Err(Error::Argument(format!(
                "sweep_step {} must be in (0, 1]",
                self.eval.sweep_step
            )));
        }
        if let Some(bias) = self.episodes.periphery_bias {
            if !(0.0..=1.0).contains(&bias) {
                return Err(Error::Argument(format!("periphery_bias {bias} is outside [0, 1]")));
            }
        }
        if self.targets.clusters_per_class == 0 {
            return Err(Error::Argument("clusters_per_class must be at least 1".into()));
        }
        self.llm.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment_net::AlignmentSource;

    #[test]
    fn toml_round_trip() {
        let mut config = ExperimentConfig::default();
        config.episodes.periphery_bias = Some(1.0);
        config.episodes.spec.task_count = 10;
        config.train.alignment_source = AlignmentSource::Semantic;
        config.paths.embeddings = vec!["a.json".into(), "b.json".into()];
        config.ablation = Some(Ablation::Targets);
        config.synthetic = Some(SyntheticSpec::default());
        let text = config.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn sparse_file_takes_defaults() {
        let text = "[episodes]\ntask_count = 5\nperiphery_bias = 0.5\n\n[eval]\nk = 0.3\nclassifier = \"euclidean\"\n";
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(config.episodes.spec.task_count, 5);
        assert_eq!(config.episodes.spec.n_way, 5);
        assert_eq!(config.episodes.periphery_bias, Some(0.5));
        assert_eq!(config.eval.classifier, ClassifierKind::Euclidean);
        assert_eq!(config.train.hidden_dim, 4096);
        config.validate().unwrap();
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("experiment.toml");
        ExperimentConfig::default().save(&path).unwrap();
        let config = ExperimentConfig::load(&path).unwrap();
        assert_eq!(config.resolve(Path::new("x.sfew")), dir.path().join("x.sfew"));
        assert_eq!(config.resolve(Path::new("/abs")), PathBuf::from("/abs"));
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut config = ExperimentConfig::default();
        config.eval.k = 1.5;
        assert!(matches!(config.validate(), Err(Error::Argument(_))));
        let mut config = ExperimentConfig::default();
        config.episodes.periphery_bias = Some(-0.1);
        assert!(config.validate().is_err());
    }
}
