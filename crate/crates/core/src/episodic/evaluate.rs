use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{ClassifierKind, EpisodeClassifier, LogisticConfig};
use super::episode::{EpisodeSampler, EpisodeSpec};
use super::prototypes::{reconstruct, support_mean, PrototypeSet};
use super::stats::{ci95, mean};
use crate::alignment_net::{AlignmentNetwork, AlignmentSource};
use crate::error::{Error, Result};
use crate::feature_store::FeatureCache;
use crate::scalar::{widen, Real};
use crate::semantic_evolution::{SemanticSource, SemanticTable};

/// Everything an evaluation run shares across tasks. All borrowed data is
/// read-only, so tasks run in parallel.
pub struct EvalSetup<'a, T> {
    pub cache: &'a FeatureCache,
    pub sampler: &'a EpisodeSampler,
    pub network: Option<&'a AlignmentNetwork<T>>,
    pub semantics: Option<&'a SemanticTable<T>>,
    pub classifier: ClassifierKind,
    pub logistic: LogisticConfig,
}

impl<'a, T: Real> EvalSetup<'a, T> {
    pub fn new(cache: &'a FeatureCache, sampler: &'a EpisodeSampler, classifier: ClassifierKind) -> Self {
        Self {
            cache,
            sampler,
            network: None,
            semantics: None,
            classifier,
            logistic: LogisticConfig::default(),
        }
    }

    pub fn with_network(
        mut self,
        network: &'a AlignmentNetwork<T>,
        semantics: Option<&'a SemanticTable<T>>,
    ) -> Self {
        self.network = Some(network);
        self.semantics = semantics;
        self
    }

    fn snapshot(&self, k: f64) -> EvalSnapshot {
        EvalSnapshot {
            episodes: self.sampler.spec().clone(),
            periphery_bias: self.sampler.policy().map(|p| p.bias),
            fusion_k: k,
            classifier: self.classifier,
            alignment_source: self.network.map(|n| n.shape().source),
            semantic_source: self
                .network
                .filter(|n| n.shape().source.uses_semantic())
                .and(self.semantics)
                .map(SemanticTable::source),
        }
    }
}

/// Configuration that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub episodes: EpisodeSpec,
    pub periphery_bias: Option<f64>,
    pub fusion_k: f64,
    pub classifier: ClassifierKind,
    pub alignment_source: Option<AlignmentSource>,
    pub semantic_source: Option<SemanticSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    pub ci95: f64,
    pub per_task_accuracy: Vec<f64>,
    pub config: EvalSnapshot,
}

impl EvalReport {
    fn from_accuracies(per_task_accuracy: Vec<f64>, config: EvalSnapshot) -> Self {
        Self {
            mean_accuracy: mean(&per_task_accuracy),
            ci95: ci95(&per_task_accuracy),
            per_task_accuracy,
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-task quantities that do not depend on the fusion factor.
struct TaskData<T> {
    support_mean: Vec<Vec<T>>,
    reconstructed: Option<Vec<Vec<T>>>,
    support: Vec<Vec<Vec<T>>>,
    queries: Vec<(Vec<T>, usize)>,
}

fn prepare<T: Real>(setup: &EvalSetup<'_, T>, task_index: usize) -> Result<TaskData<T>> {
    let episode = setup.sampler.sample(task_index);
    let cache = setup.cache;
    let u = support_mean(&episode, cache);
    let r = setup
        .network
        .map(|net| reconstruct(net, &episode, cache, setup.semantics))
        .transpose()?;
    let support = episode
        .support
        .iter()
        .map(|rows| rows.iter().map(|&i| widen(cache.vector(i))).collect())
        .collect();
    let queries = episode
        .query
        .iter()
        .enumerate()
        .flat_map(|(label, rows)| rows.iter().map(move |&i| (widen(cache.vector(i)), label)))
        .collect();
    Ok(TaskData {
        support_mean: u,
        reconstructed: r,
        support,
        queries,
    })
}

fn accuracy<T: Real>(setup: &EvalSetup<'_, T>, task: &TaskData<T>, k: f64) -> Result<f64> {
    let prototypes = PrototypeSet::build(task.support_mean.clone(), task.reconstructed.clone(), k)?;
    let clf = EpisodeClassifier::fit(
        setup.classifier,
        &prototypes.fused,
        &task.support,
        &setup.logistic,
    )?;
    let mut correct = 0usize;
    for (q, label) in &task.queries {
        if clf.predict(q)?.predicted == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / task.queries.len() as f64)
}

fn prepare_all<T: Real>(setup: &EvalSetup<'_, T>) -> Result<Vec<TaskData<T>>> {
    (0..setup.sampler.spec().task_count)
        .into_par_iter()
        .map(|t| prepare(setup, t))
        .collect()
}

fn check_k(setup: &EvalSetup<'_, impl Real>, k: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::Argument(format!("fusion factor {k} is outside [0, 1]")));
    }
    // without a network only the support mean exists
    Ok(if setup.network.is_none() { 0.0 } else { k })
}

fn report_at<T: Real>(setup: &EvalSetup<'_, T>, tasks: &[TaskData<T>], k: f64) -> Result<EvalReport> {
    let per_task = tasks
        .par_iter()
        .map(|t| accuracy(setup, t, k))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::from_accuracies(per_task, setup.snapshot(k)))
}

/// Accuracy over `task_count` episodes with prototypes fused at `k`.
///
/// Results are collected in task order, so they do not depend on scheduling.
pub fn evaluate<T: Real>(setup: &EvalSetup<'_, T>, k: f64) -> Result<EvalReport> {
    let k = check_k(setup, k)?;
    let tasks = prepare_all(setup)?;
    report_at(setup, &tasks, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: f64,
    pub mean_accuracy: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub reports: Vec<EvalReport>,
}

impl SweepCurve {
    pub fn points(&self) -> Vec<SweepPoint> {
        self.reports
            .iter()
            .map(|r| SweepPoint {
                k: r.config.fusion_k,
                mean_accuracy: r.mean_accuracy,
                ci95: r.ci95,
            })
            .collect()
    }

    /// The k = 0 report (support means only).
    pub fn baseline(&self) -> &EvalReport {
        &self.reports[0]
    }

    /// Highest mean accuracy; the smallest k wins ties.
    pub fn best(&self) -> &EvalReport {
        let mut best = &self.reports[0];
        for r in &self.reports {
            if r.mean_accuracy > best.mean_accuracy {
                best = r;
            }
        }
        best
    }
}

/// Evaluates `k = 0, step, 2 step, ..., 1` on one shared set of episodes.
pub fn sweep_k<T: Real>(setup: &EvalSetup<'_, T>, step: f64) -> Result<SweepCurve> {
    if setup.network.is_none() {
        return Err(Error::Argument("a fusion sweep needs a trained network".into()));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Argument(format!("sweep step {step} must be in (0, 1]")));
    }
    let intervals = (1.0 / step).round();
    if (intervals * step - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("sweep step {step} does not divide 1")));
    }
    let intervals = intervals as usize;
    let tasks = prepare_all(setup)?;
    let reports = (0..=intervals)
        .map(|i| report_at(setup, &tasks, i as f64 / intervals as f64))
        .collect::<Result<_>>()?;
    Ok(SweepCurve { reports })
}
