use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{backward, AlignmentNetwork, AlignmentSource, NetworkShape, TrainingBatch};
use crate::error::{Error, Result};
use crate::feature_store::{ClassCenterSet, FeatureCache, BASE_SPLIT};
use crate::scalar::{widen, Real};
use crate::semantic_evolution::{SemanticEmbeddingSet, SemanticSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub alignment_source: AlignmentSource,
    pub semantic_source: SemanticSource,
    pub leaky_slope: f64,
    pub use_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-4,
            hidden_dim: 4096,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            alignment_source: AlignmentSource::VisualSemantic,
            semantic_source: SemanticSource::Paraphrase,
            leaky_slope: 0.01,
            use_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::Argument(
                "epochs, batch_size and hidden_dim must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument("learning_rate must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Argument(format!("{name} = {b} is outside (0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Argument("adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub network: AlignmentNetwork<T>,
    /// Sample-weighted mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Assembles mini-batches from base-split records only.
struct BaseBatches<'a, T> {
    cache: &'a FeatureCache,
    base: &'a BTreeSet<u32>,
    semantic: &'a HashMap<u32, Vec<T>>,
    centers: &'a HashMap<u32, Vec<T>>,
    text_dim: usize,
}

impl<T: Real> BaseBatches<'_, T> {
    fn build(&self, records: &[usize]) -> TrainingBatch<T> {
        let n = records.len();
        let dim = self.cache.dim();
        let mut visual = Array2::zeros((n, dim));
        let mut semantic = Array2::zeros((n, self.text_dim));
        let mut target = Array2::zeros((n, dim));
        for (row, &i) in records.iter().enumerate() {
            let class_id = self.cache.class_id(i);
            assert!(
                self.base.contains(&class_id),
                "training touched record {i} of non-base class {class_id}"
            );
            for (dst, &v) in visual.row_mut(row).iter_mut().zip(self.cache.vector(i)) {
                *dst = T::from_f32_lossless(v);
            }
            if let Some(s) = self.semantic.get(&class_id) {
                semantic.row_mut(row).assign(&ndarray::ArrayView1::from(s.as_slice()));
            }
            target
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(self.centers[&class_id].as_slice()));
        }
        TrainingBatch {
            visual,
            semantic,
            target,
        }
    }
}

/// Fits an alignment network on every base-split record.
///
/// Each sample pairs a record's feature with its class-level semantic vector
/// and its class center. Initialization uses ChaCha8 stream 0 of `seed`;
/// epoch shuffles use stream 1.
pub fn train<T: Real>(
    cache: &FeatureCache,
    semantics: Option<&SemanticEmbeddingSet>,
    centers: &ClassCenterSet<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let source = config.alignment_source;
    let base: BTreeSet<u32> = cache.split_classes(BASE_SPLIT)?.iter().copied().collect();

    let mut semantic = HashMap::new();
    let mut text_dim = semantics.map_or(0, SemanticEmbeddingSet::text_dim);
    if source.uses_semantic() {
        let set = semantics.ok_or_else(|| {
            Error::MissingSemantics("alignment source needs semantic embeddings".into())
        })?;
        for &c in &base {
            let v = set.get(c, config.semantic_source).ok_or_else(|| {
                Error::MissingSemantics(format!(
                    "base class {c} has no {} embedding",
                    config.semantic_source
                ))
            })?;
            semantic.insert(c, widen::<T>(v));
        }
    } else {
        text_dim = 0;
    }

    let mut center_rows = HashMap::new();
    for &c in &base {
        let center = centers
            .get(c)
            .ok_or_else(|| Error::Argument(format!("no center for base class {c}")))?;
        if center.len() != cache.dim() {
            return Err(Error::Dimension(format!(
                "center of class {c} has length {}, expected {}",
                center.len(),
                cache.dim()
            )));
        }
        center_rows.insert(c, center.to_vec());
    }

    let records: Vec<usize> = (0..cache.len())
        .filter(|&i| base.contains(&cache.class_id(i)))
        .collect();
    if records.is_empty() {
        return Err(Error::Argument("base split has no records".into()));
    }

    let shape = NetworkShape {
        visual_dim: cache.dim(),
        text_dim,
        hidden_dim: config.hidden_dim,
        source,
        leaky_slope: config.leaky_slope,
        use_bias: config.use_bias,
    };
    let mut network = AlignmentNetwork::<T>::init(shape, config.seed)?;
    let mut state = AdamState::new(&shape);
    let adam = config.adam();
    let batches = BaseBatches {
        cache,
        base: &base,
        semantic: &semantic,
        centers: &center_rows,
        text_dim,
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut order = records;
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = batches.build(chunk);
            let (loss, grads) = backward(&network, &batch)?;
            total += loss.as_f64() * chunk.len() as f64;
            adam_step(&mut network, &grads, &mut state, &adam)?;
        }
        loss_curve.push(total / order.len() as f64);
    }
    Ok(TrainOutcome {
        network,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{class_centers, FeatureCacheHeader, FeatureRecord};
    use rand::Rng;

    fn toy() -> (FeatureCache, SemanticEmbeddingSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut records = vec![];
        for class_id in 0..4u32 {
            let center: Vec<f32> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            for _ in 0..10 {
                records.push(FeatureRecord {
                    class_id,
                    vector: center.iter().map(|c| c + rng.random_range(-0.3..0.3)).collect(),
                });
            }
        }
        let header = FeatureCacheHeader::new("toy", 3)
            .with_split("base", vec![0, 1, 2])
            .with_split("novel", vec![3]);
        let cache = FeatureCache::new(header, &records).unwrap();
        let mut set = SemanticEmbeddingSet::new("toy", 2).unwrap();
        for c in 0..3 {
            set.insert(c, SemanticSource::Paraphrase, vec![c as f32, 1.0]).unwrap();
        }
        (cache, set)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 8,
            hidden_dim: 6,
            learning_rate: 1e-2,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (cache, set) = toy();
        let centers = class_centers::<f64>(&cache, "base").unwrap();
        let a = train(&cache, Some(&set), &centers, &config()).unwrap();
        let b = train(&cache, Some(&set), &centers, &config()).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_curve.len(), 5);
    }

    #[test]
    fn visual_only_needs_no_semantics() {
        let (cache, _) = toy();
        let centers = class_centers::<f64>(&cache, "base").unwrap();
        let cfg = TrainConfig {
            alignment_source: AlignmentSource::Visual,
            ..config()
        };
        let out = train(&cache, None, &centers, &cfg).unwrap();
        assert_eq!(out.network.shape().input_dim(), 3);
    }

    #[test]
    fn missing_semantics_reported() {
        let (cache, _) = toy();
        let centers = class_centers::<f64>(&cache, "base").unwrap();
        let mut partial = SemanticEmbeddingSet::new("toy", 2).unwrap();
        partial.insert(0, SemanticSource::Paraphrase, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            train(&cache, Some(&partial), &centers, &config()),
            Err(Error::MissingSemantics(_))
        ));
        assert!(matches!(
            train(&cache, None, &centers, &config()),
            Err(Error::MissingSemantics(_))
        ));
    }

    #[test]
    fn loss_goes_down() {
        let (cache, set) = toy();
        let centers = class_centers::<f64>(&cache, "base").unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            ..config()
        };
        let out = train(&cache, Some(&set), &centers, &cfg).unwrap();
        assert!(out.loss_curve[39] < 0.5 * out.loss_curve[0], "{:?}", out.loss_curve);
    }

    #[test]
    fn invalid_config_rejected() {
        let (cache, set) = toy();
        let centers = class_centers::<f64>(&cache, "base").unwrap();
        for bad in [
            TrainConfig { epochs: 0, ..config() },
            TrainConfig { batch_size: 0, ..config() },
            TrainConfig { learning_rate: 0.0, ..config() },
            TrainConfig { adam_beta1: 1.0, ..config() },
        ] {
            assert!(train(&cache, Some(&set), &centers, &bad).is_err());
        }
    }

    #[test]
    #[should_panic(expected = "non-base class")]
    fn batch_builder_refuses_novel_records() {
        let (cache, set) = toy();
        let centers = class_centers::<f64>(&cache, "base").unwrap();
        let base: BTreeSet<u32> = [0, 1, 2].into();
        let semantic: HashMap<u32, Vec<f64>> = (0..3)
            .map(|c| (c, widen(set.get(c, SemanticSource::Paraphrase).unwrap())))
            .collect();
        let center_rows: HashMap<u32, Vec<f64>> =
            centers.iter().map(|(c, v)| (c, v.to_vec())).collect();
        let b = BaseBatches {
            cache: &cache,
            base: &base,
            semantic: &semantic,
            centers: &center_rows,
            text_dim: 2,
        };
        let novel_record = cache.records_of(3)[0];
        b.build(&[0, novel_record]);
    }
}
