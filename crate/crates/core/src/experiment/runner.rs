use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{Ablation, ExperimentConfig, TargetKind};
use super::report::{
    write_csv, write_json, write_sweep_dat, GridRow, ProximityEpisode, ProximityReport, ReportRow,
};
use super::synthetic::{gen_synthetic, SyntheticData, SyntheticSpec};
use crate::alignment_net::{
    load_checkpoint, save_checkpoint, train, AlignmentNetwork, AlignmentSource, CheckpointHeader,
    TrainConfig, TrainOutcome,
};
use crate::episodic::{
    evaluate, reconstruct, support_mean, sweep_k, ClassifierKind, EpisodeSampler, EpisodeSpec,
    EvalReport, EvalSetup, PeripheryPools, SupportPolicy, SweepCurve,
};
use crate::error::{Error, Result};
use crate::feature_store::{
    class_centers, cluster_centers, read_cache, ClassCenterSet, ClassTable, FeatureCache,
    BASE_SPLIT,
};
use crate::scalar::Real;
use crate::semantic_evolution::{
    build_corpus, Corpus, DefinitionStore, HttpBackend, LlmConfig, NameTemplate,
    ParaphraseCache, Paraphraser, SemanticEmbeddingSet, SemanticSource,
};

/// A trained network together with the semantics it reads.
#[derive(Clone, Copy)]
pub struct TrainedNet<'a, T> {
    pub network: &'a AlignmentNetwork<T>,
    pub embeddings: Option<&'a SemanticEmbeddingSet>,
    pub semantic_source: SemanticSource,
}

/// Loaded inputs of one experiment. Drivers run their arms one after another;
/// every arm of a driver evaluates the same episodes.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub cache: FeatureCache,
    pub embeddings: Vec<SemanticEmbeddingSet>,
    pub periphery: Option<PeripheryPools>,
    pub ground_truth: Option<ClassCenterSet<f64>>,
}

fn required<'a>(what: &str, set: Option<&'a SemanticEmbeddingSet>) -> Result<&'a SemanticEmbeddingSet> {
    set.ok_or_else(|| Error::MissingSemantics(format!("{what} needs a semantic embedding set")))
}

/// Every row of a comparison must come from the same episodes.
fn check_shared_episodes(rows: &[ReportRow]) -> Result<()> {
    match rows.first() {
        Some(first) if rows.iter().any(|r| r.episode_seed != first.episode_seed) => Err(
            Error::Sampling("compared arms were evaluated on different episodes".into()),
        ),
        _ => Ok(()),
    }
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let cache = read_cache(config.resolve(&config.paths.cache))?;
        let embeddings = config
            .paths
            .embeddings
            .iter()
            .map(|p| SemanticEmbeddingSet::load(config.resolve(p)))
            .collect::<Result<_>>()?;
        let periphery = config
            .paths
            .periphery
            .as_ref()
            .map(|p| PeripheryPools::load(config.resolve(p)))
            .transpose()?;
        let ground_truth = config
            .paths
            .centers
            .as_ref()
            .map(|p| ClassCenterSet::load(config.resolve(p)))
            .transpose()?;
        Ok(Self {
            config,
            cache,
            embeddings,
            periphery,
            ground_truth,
        })
    }

    /// In-memory counterpart of `synth` followed by [`Experiment::load`].
    pub fn from_synthetic(config: ExperimentConfig, data: &SyntheticData) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            cache: data.cache.clone(),
            embeddings: vec![data.embeddings.clone()],
            periphery: Some(data.periphery.clone()),
            ground_truth: Some(data.centers.clone()),
        })
    }

    pub fn dataset(&self) -> &str {
        &self.cache.header().dataset_name
    }

    pub fn primary_embeddings(&self) -> Option<&SemanticEmbeddingSet> {
        self.embeddings.first()
    }

    pub fn sampler(&self, spec: EpisodeSpec) -> Result<EpisodeSampler> {
        let policy = match self.config.episodes.periphery_bias {
            None => None,
            Some(bias) => Some(SupportPolicy {
                pools: self.periphery.clone().ok_or_else(|| {
                    Error::Config("periphery_bias is set but no periphery pools are configured".into())
                })?,
                bias,
            }),
        };
        EpisodeSampler::new(&self.cache, spec, policy)
    }

    pub fn default_sampler(&self) -> Result<EpisodeSampler> {
        self.sampler(self.config.episodes.spec.clone())
    }

    pub fn targets<T: Real>(&self, kind: TargetKind) -> Result<ClassCenterSet<T>> {
        let t = &self.config.targets;
        match kind {
            TargetKind::Mean => class_centers(&self.cache, BASE_SPLIT),
            TargetKind::Cluster => {
                cluster_centers(&self.cache, BASE_SPLIT, t.clusters_per_class, t.seed)
            }
        }
    }

    /// Trains with `config`, reading semantics from `embeddings` when the
    /// alignment source needs them.
    pub fn train<T: Real>(
        &self,
        config: &TrainConfig,
        embeddings: Option<&SemanticEmbeddingSet>,
        targets: &ClassCenterSet<T>,
    ) -> Result<TrainOutcome<T>> {
        let embeddings = if config.alignment_source.uses_semantic() {
            Some(required("training", embeddings)?)
        } else {
            None
        };
        train(&self.cache, embeddings, targets, config)
    }

    /// Support-mean prototypes when `net` is `None`, fused ones otherwise.
    pub fn evaluate<T: Real>(
        &self,
        sampler: &EpisodeSampler,
        net: Option<TrainedNet<'_, T>>,
        classifier: ClassifierKind,
        k: f64,
    ) -> Result<EvalReport> {
        let table = match net {
            Some(n) if n.network.shape().source.uses_semantic() => {
                Some(required("evaluation", n.embeddings)?.table::<T>(n.semantic_source))
            }
            _ => None,
        };
        let mut setup = EvalSetup::new(&self.cache, sampler, classifier);
        if let Some(n) = net {
            setup = setup.with_network(n.network, table.as_ref());
        }
        evaluate(&setup, k)
    }

    pub fn sweep<T: Real>(&self, sampler: &EpisodeSampler, net: TrainedNet<'_, T>) -> Result<SweepCurve> {
        let table = if net.network.shape().source.uses_semantic() {
            Some(required("evaluation", net.embeddings)?.table::<T>(net.semantic_source))
        } else {
            None
        };
        let setup = EvalSetup::new(&self.cache, sampler, self.config.eval.classifier)
            .with_network(net.network, table.as_ref());
        sweep_k(&setup, self.config.eval.sweep_step)
    }

    fn row(&self, experiment: &str, arm: impl Into<String>, report: &EvalReport) -> ReportRow {
        ReportRow::from_report(experiment, arm, self.dataset(), report)
    }

    fn train_and_evaluate<T: Real>(
        &self,
        sampler: &EpisodeSampler,
        config: &TrainConfig,
        embeddings: Option<&SemanticEmbeddingSet>,
        targets: &ClassCenterSet<T>,
        classifier: ClassifierKind,
    ) -> Result<EvalReport> {
        let outcome = self.train(config, embeddings, targets)?;
        let net = TrainedNet {
            network: &outcome.network,
            embeddings,
            semantic_source: config.semantic_source,
        };
        self.evaluate(sampler, Some(net), classifier, self.config.eval.k)
    }

    /// Rows `V=>C`, `S=>C`, `V+S=>C`: identical except for the network input.
    pub fn ablation_sources<T: Real>(&self) -> Result<Vec<ReportRow>> {
        let sampler = self.default_sampler()?;
        let targets = self.targets::<T>(self.config.targets.kind)?;
        let mut rows = vec![];
        for source in [
            AlignmentSource::Visual,
            AlignmentSource::Semantic,
            AlignmentSource::VisualSemantic,
        ] {
            let config = TrainConfig {
                alignment_source: source,
                ..self.config.train.clone()
            };
            let embeddings = self.primary_embeddings().filter(|_| source.uses_semantic());
            let report = self.train_and_evaluate(
                &sampler,
                &config,
                embeddings,
                &targets,
                self.config.eval.classifier,
            )?;
            rows.push(self.row("alignment_source", source.label(), &report));
        }
        check_shared_episodes(&rows)?;
        Ok(rows)
    }

    /// Rows `mean` and `cluster`: identical except for the training targets.
    pub fn ablation_targets<T: Real>(&self) -> Result<Vec<ReportRow>> {
        let sampler = self.default_sampler()?;
        let mut rows = vec![];
        for kind in [TargetKind::Mean, TargetKind::Cluster] {
            let targets = self.targets::<T>(kind)?;
            let report = self.train_and_evaluate(
                &sampler,
                &self.config.train,
                self.primary_embeddings(),
                &targets,
                self.config.eval.classifier,
            )?;
            rows.push(self.row("prototype_target", kind.to_string(), &report));
        }
        check_shared_episodes(&rows)?;
        Ok(rows)
    }

    /// One network, scored by each classifier head.
    pub fn ablation_classifiers<T: Real>(&self) -> Result<Vec<ReportRow>> {
        let sampler = self.default_sampler()?;
        let targets = self.targets::<T>(self.config.targets.kind)?;
        let embeddings = self.primary_embeddings();
        let outcome = self.train(&self.config.train, embeddings, &targets)?;
        let net = TrainedNet {
            network: &outcome.network,
            embeddings,
            semantic_source: self.config.train.semantic_source,
        };
        let mut rows = vec![];
        for kind in ClassifierKind::ALL {
            let report = self.evaluate(&sampler, Some(net), kind, self.config.eval.k)?;
            rows.push(self.row("classifier", kind.short(), &report));
        }
        check_shared_episodes(&rows)?;
        Ok(rows)
    }

    /// Every semantic source of every embedding set, one network each.
    pub fn semantic_grid<T: Real>(&self) -> Result<Vec<GridRow>> {
        if !self.config.train.alignment_source.uses_semantic() {
            return Err(Error::Argument(
                "the semantic grid needs an alignment source with a semantic input".into(),
            ));
        }
        if self.embeddings.is_empty() {
            return Err(Error::MissingSemantics("no embedding sets are configured".into()));
        }
        let sampler = self.default_sampler()?;
        let targets = self.targets::<T>(self.config.targets.kind)?;
        let mut rows = vec![];
        for set in &self.embeddings {
            for source in SemanticSource::ALL {
                let config = TrainConfig {
                    semantic_source: source,
                    ..self.config.train.clone()
                };
                let report = self.train_and_evaluate(
                    &sampler,
                    &config,
                    Some(set),
                    &targets,
                    self.config.eval.classifier,
                )?;
                rows.push(GridRow {
                    semantic_source: source,
                    encoder: set.encoder_name().into(),
                    mean_accuracy: report.mean_accuracy,
                    ci95: report.ci95,
                });
            }
        }
        Ok(rows)
    }

    /// Over one-shot episodes, how often the reconstructed prototype lies
    /// strictly closer to the class center than the support sample.
    pub fn proximity<T: Real>(&self, net: TrainedNet<'_, T>) -> Result<ProximityReport> {
        let spec = EpisodeSpec {
            k_shot: 1,
            ..self.config.episodes.spec.clone()
        };
        let sampler = self.sampler(spec)?;
        let (centers, center_source) = match &self.ground_truth {
            Some(c) => (c.clone(), "ground_truth"),
            None => (class_centers::<f64>(&self.cache, &sampler.spec().split)?, "split_mean"),
        };
        let table = if net.network.shape().source.uses_semantic() {
            Some(required("the proximity check", net.embeddings)?.table::<T>(net.semantic_source))
        } else {
            None
        };
        let episodes = (0..sampler.spec().task_count)
            .into_par_iter()
            .map(|t| {
                let episode = sampler.sample(t);
                let u = support_mean::<f64>(&episode, &self.cache);
                let r = reconstruct(net.network, &episode, &self.cache, table.as_ref())?;
                let mut closer = 0;
                for ((class_id, u), r) in episode.class_ids.iter().zip(&u).zip(&r) {
                    let c = centers.get(*class_id).ok_or_else(|| {
                        Error::Argument(format!("no reference center for class {class_id}"))
                    })?;
                    let du: f64 = u.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    let dr: f64 = r
                        .iter()
                        .zip(c)
                        .map(|(a, b)| (a.as_f64() - b) * (a.as_f64() - b))
                        .sum();
                    if dr < du {
                        closer += 1;
                    }
                }
                Ok(ProximityEpisode {
                    task_index: t,
                    closer,
                    classes: episode.class_ids.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let closer: usize = episodes.iter().map(|e| e.closer).sum();
        let pairs: usize = episodes.iter().map(|e| e.classes).sum();
        Ok(ProximityReport {
            fraction: closer as f64 / pairs as f64,
            closer,
            pairs,
            center_source: center_source.into(),
            episodes,
        })
    }
}

/// Scalar type of the file-based pipeline; checkpoints store f32.
pub type PipelineScalar = f32;

fn output(config: &ExperimentConfig, name: &str) -> PathBuf {
    config.output_dir().join(name)
}

/// Writes a synthetic dataset and a matching `experiment.toml` into `out`.
pub fn run_synth(spec: &SyntheticSpec, out: &Path) -> Result<ExperimentConfig> {
    let data = gen_synthetic(spec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    data.cache.write(out.join("features.sfew"))?;
    data.classes.save(out.join("classes.json"))?;
    data.embeddings.save(out.join("embeddings.json"))?;
    data.centers.save(out.join("centers.json"))?;
    data.periphery.save(out.join("periphery.json"))?;

    let mut config = synthetic_config(spec);
    config.save(out.join("experiment.toml"))?;
    config.base_dir = out.to_path_buf();
    Ok(config)
}

/// Config for a dataset written by [`run_synth`], at desk-scale width.
pub fn synthetic_config(spec: &SyntheticSpec) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.paths.cache = "features.sfew".into();
    config.paths.classes = Some("classes.json".into());
    config.paths.embeddings = vec!["embeddings.json".into()];
    config.paths.periphery = Some("periphery.json".into());
    config.paths.centers = Some("centers.json".into());
    config.train.hidden_dim = 256;
    config.episodes.periphery_bias = Some(spec.periphery_bias);
    config.synthetic = Some(spec.clone());
    config
}

pub fn run_train(config: &ExperimentConfig) -> Result<TrainOutcome<PipelineScalar>> {
    let exp = Experiment::load(config.clone())?;
    let targets = exp.targets::<PipelineScalar>(config.targets.kind)?;
    let outcome = exp.train(&config.train, exp.primary_embeddings(), &targets)?;
    let path = config.resolve(&config.paths.checkpoint);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&outcome.network, &config.train, &path)?;
    #[derive(serde::Serialize)]
    struct LossRow {
        epoch: usize,
        mean_loss: f64,
    }
    let rows: Vec<LossRow> = outcome
        .loss_curve
        .iter()
        .enumerate()
        .map(|(i, &mean_loss)| LossRow {
            epoch: i + 1,
            mean_loss,
        })
        .collect();
    write_csv(output(config, "loss_curve.csv"), &rows)?;
    Ok(outcome)
}

pub fn load_network(
    config: &ExperimentConfig,
) -> Result<(AlignmentNetwork<PipelineScalar>, CheckpointHeader)> {
    load_checkpoint(config.resolve(&config.paths.checkpoint))
}

/// Evaluates at `eval.k`. At `k = 0` the checkpoint is not read.
pub fn run_eval(config: &ExperimentConfig) -> Result<EvalReport> {
    let exp = Experiment::load(config.clone())?;
    let sampler = exp.default_sampler()?;
    let loaded = if config.eval.k > 0.0 {
        Some(load_network(config)?.0)
    } else {
        None
    };
    let net = loaded.as_ref().map(|network| TrainedNet {
        network,
        embeddings: exp.primary_embeddings(),
        semantic_source: config.train.semantic_source,
    });
    let report = exp.evaluate(&sampler, net, config.eval.classifier, config.eval.k)?;
    write_json(output(config, "eval.json"), &report)?;
    write_csv(output(config, "eval.csv"), &[exp.row("eval", "eval", &report)])?;
    Ok(report)
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepCurve> {
    let exp = Experiment::load(config.clone())?;
    let sampler = exp.default_sampler()?;
    let (network, _) = load_network(config)?;
    let curve = exp.sweep(
        &sampler,
        TrainedNet {
            network: &network,
            embeddings: exp.primary_embeddings(),
            semantic_source: config.train.semantic_source,
        },
    )?;
    let points = curve.points();
    write_csv(output(config, "sweep.csv"), &points)?;
    write_sweep_dat(output(config, "sweep.dat"), &points)?;
    Ok(curve)
}

pub fn run_ablation_sources(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let rows = Experiment::load(config.clone())?.ablation_sources::<PipelineScalar>()?;
    write_csv(output(config, "ablation_sources.csv"), &rows)?;
    Ok(rows)
}

pub fn run_ablation_targets(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let rows = Experiment::load(config.clone())?.ablation_targets::<PipelineScalar>()?;
    write_csv(output(config, "ablation_targets.csv"), &rows)?;
    Ok(rows)
}

pub fn run_ablation_classifiers(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let rows = Experiment::load(config.clone())?.ablation_classifiers::<PipelineScalar>()?;
    write_csv(output(config, "ablation_classifiers.csv"), &rows)?;
    Ok(rows)
}

pub fn run_semantic_grid(config: &ExperimentConfig) -> Result<Vec<GridRow>> {
    let rows = Experiment::load(config.clone())?.semantic_grid::<PipelineScalar>()?;
    write_csv(output(config, "semantic_grid.csv"), &rows)?;
    Ok(rows)
}

/// Row count of the CSV a driver writes, for callers that only need a summary.
pub fn run_ablation(config: &ExperimentConfig, ablation: Ablation) -> Result<usize> {
    Ok(match ablation {
        Ablation::Sources => run_ablation_sources(config)?.len(),
        Ablation::Targets => run_ablation_targets(config)?.len(),
        Ablation::Classifiers => run_ablation_classifiers(config)?.len(),
        Ablation::Semantics => run_semantic_grid(config)?.len(),
    })
}

pub fn run_proximity_check(config: &ExperimentConfig) -> Result<ProximityReport> {
    let exp = Experiment::load(config.clone())?;
    let (network, _) = load_network(config)?;
    let report = exp.proximity(TrainedNet {
        network: &network,
        embeddings: exp.primary_embeddings(),
        semantic_source: config.train.semantic_source,
    })?;
    write_json(output(config, "proximity.json"), &report)?;
    write_csv(output(config, "proximity.csv"), &report.episodes)?;
    Ok(report)
}

pub struct SemevoOptions {
    pub definitions: PathBuf,
    pub classes: Option<PathBuf>,
    pub out: PathBuf,
    pub cache_dir: PathBuf,
    pub template: NameTemplate,
    /// Serve only cached paraphrases; never open a connection.
    pub offline: bool,
}

/// Builds the corpus from definitions and expands it through the LLM cache.
pub fn run_semevo(llm: &LlmConfig, options: &SemevoOptions) -> Result<Corpus> {
    let definitions = DefinitionStore::load(&options.definitions)?;
    let classes = options.classes.as_ref().map(ClassTable::load).transpose()?;
    let corpus = build_corpus(&definitions, classes.as_ref(), &options.template)?;
    let cache = ParaphraseCache::open(&options.cache_dir)?;
    let evolved = if options.offline {
        Paraphraser::offline(llm.clone(), cache).evolve(&corpus)?
    } else {
        let backend = HttpBackend::from_env(llm)?;
        let evolved = Paraphraser::new(llm.clone(), &backend, cache).evolve(&corpus)?;
        evolved
    };
    evolved.save(&options.out)?;
    Ok(evolved)
}
