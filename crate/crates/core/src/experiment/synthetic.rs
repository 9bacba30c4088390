use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::episodic::PeripheryPools;
use crate::error::{Error, Result};
use crate::feature_store::{
    ClassCenterSet, ClassEntry, ClassTable, FeatureCache, FeatureCacheHeader, FeatureRecord,
    BASE_SPLIT, NOVEL_SPLIT,
};
use crate::semantic_evolution::{SemanticEmbeddingSet, SemanticSource};

/// Name recorded as the encoder of generated semantic vectors.
pub const SYNTHETIC_ENCODER: &str = "linear-map";

/// Gaussian class clusters with semantics that are a fixed linear image of
/// the class centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub base_classes: usize,
    pub novel_classes: usize,
    pub samples_per_class: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub semantic_map_seed: u64,
    /// Seeds centers, samples and semantic noise.
    pub seed: u64,
    pub periphery_bias: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            base_classes: 20,
            novel_classes: 5,
            samples_per_class: 200,
            visual_dim: 64,
            text_dim: 32,
            center_scale: 1.0,
            noise_sigma: 2.0,
            semantic_map_seed: 0,
            seed: 0,
            periphery_bias: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.visual_dim == 0 || self.text_dim == 0 {
            return Err(Error::Argument("synthetic dims must be positive".into()));
        }
        if self.base_classes == 0 || self.novel_classes == 0 || self.samples_per_class == 0 {
            return Err(Error::Argument(
                "synthetic class and sample counts must be positive".into(),
            ));
        }
        if !(self.center_scale > 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Argument(
                "center_scale must be positive and noise_sigma non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.periphery_bias) {
            return Err(Error::Argument("periphery_bias must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Standard deviation of the semantic noise per source, relative to
    /// `noise_sigma`. Paraphrases are the cleanest.
    pub fn semantic_noise(&self, source: SemanticSource) -> f64 {
        let factor = match source {
            SemanticSource::Paraphrase => 0.1,
            SemanticSource::Definition => 0.5,
            SemanticSource::NameTemplate => 1.0,
        };
        factor * self.noise_sigma
    }

    pub fn class_count(&self) -> usize {
        self.base_classes + self.novel_classes
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub cache: FeatureCache,
    pub embeddings: SemanticEmbeddingSet,
    /// True centers, rounded to f32 like the stored samples.
    pub centers: ClassCenterSet<f64>,
    /// Top quartile of each class by distance to its true center.
    pub periphery: PeripheryPools,
    pub classes: ClassTable,
}

fn gaussian_row(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Generates a dataset whose class ids `0..base_classes` form the base split
/// and the next `novel_classes` ids the novel split.
///
/// Centers and samples use ChaCha8 stream 0 of `seed`, semantic noise stream
/// 1; the `text_dim x visual_dim` map has entries `N(0, 1/visual_dim)` drawn
/// from `semantic_map_seed`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (dv, dt) = (spec.visual_dim, spec.text_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    let mut map_rng = ChaCha8Rng::seed_from_u64(spec.semantic_map_seed);
    let map_entry = Normal::new(0.0, (1.0 / dv as f64).sqrt()).expect("positive variance");
    let map: Vec<Vec<f64>> = (0..dt)
        .map(|_| (0..dv).map(|_| map_entry.sample(&mut map_rng)).collect())
        .collect();

    let mut records = Vec::with_capacity(spec.class_count() * spec.samples_per_class);
    let mut centers = BTreeMap::new();
    let mut periphery = BTreeMap::new();
    let mut embeddings = SemanticEmbeddingSet::new(SYNTHETIC_ENCODER, dt)?;
    let mut classes = ClassTable::new();
    for class in 0..spec.class_count() {
        let class_id = class as u32;
        let center: Vec<f64> = gaussian_row(&mut rng, dv, spec.center_scale)
            .into_iter()
            .map(|x| f64::from(x as f32))
            .collect();
        let start = records.len();
        for _ in 0..spec.samples_per_class {
            let noise = gaussian_row(&mut rng, dv, spec.noise_sigma);
            let vector = center.iter().zip(noise).map(|(c, n)| (c + n) as f32).collect();
            records.push(FeatureRecord { class_id, vector });
        }

        let mut by_distance: Vec<(f64, usize)> = (start..records.len())
            .map(|i| {
                let d = records[i]
                    .vector
                    .iter()
                    .zip(&center)
                    .map(|(&x, c)| (f64::from(x) - c).powi(2))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        by_distance.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let quartile = spec.samples_per_class.div_ceil(4);
        let mut pool: Vec<usize> = by_distance[..quartile].iter().map(|&(_, i)| i).collect();
        pool.sort_unstable();
        periphery.insert(class_id, pool);

        let projected: Vec<f64> = map
            .iter()
            .map(|row| row.iter().zip(&center).map(|(t, c)| t * c).sum())
            .collect();
        for source in SemanticSource::ALL {
            let noise = gaussian_row(&mut noise_rng, dt, spec.semantic_noise(source));
            let v = projected.iter().zip(noise).map(|(p, n)| (p + n) as f32).collect();
            embeddings.insert(class_id, source, v)?;
        }
        classes.insert(
            class_id,
            ClassEntry {
                name: format!("class_{class_id:03}"),
                wordnet_key: None,
            },
        )?;
        centers.insert(class_id, center);
    }

    let base = (0..spec.base_classes as u32).collect();
    let novel = (spec.base_classes as u32..spec.class_count() as u32).collect();
    let header = FeatureCacheHeader::new("synthetic", dv)
        .with_split(BASE_SPLIT, base)
        .with_split(NOVEL_SPLIT, novel);
    Ok(SyntheticData {
        cache: FeatureCache::new(header, &records)?,
        embeddings,
        centers: ClassCenterSet::from_map(centers),
        periphery: PeripheryPools { pools: periphery },
        classes,
    })
}
