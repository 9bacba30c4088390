use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{FeatureCache, NOVEL_SPLIT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
    pub task_count: usize,
    pub split: String,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            n_way: 5,
            k_shot: 1,
            m_query: 15,
            task_count: 600,
            split: NOVEL_SPLIT.into(),
            seed: 0,
        }
    }
}

impl EpisodeSpec {
    pub fn setting(&self) -> String {
        format!("{}-way {}-shot", self.n_way, self.k_shot)
    }
}

/// Per-class record indices eligible as "hard" support samples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeripheryPools {
    pub pools: BTreeMap<u32, Vec<usize>>,
}

impl PeripheryPools {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// With probability `bias`, a class's support records come from its pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPolicy {
    pub pools: PeripheryPools,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub task_index: usize,
    pub class_ids: Vec<u32>,
    /// `support[c]` holds the K record indices of class `class_ids[c]`
    pub support: Vec<Vec<usize>>,
    pub query: Vec<Vec<usize>>,
}

/// Draws reproducible episodes from one split of a cache.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    spec: EpisodeSpec,
    classes: Vec<u32>,
    records: BTreeMap<u32, Vec<usize>>,
    policy: Option<SupportPolicy>,
}

impl EpisodeSampler {
    pub fn new(cache: &FeatureCache, spec: EpisodeSpec, policy: Option<SupportPolicy>) -> Result<Self> {
        if spec.n_way < 2 || spec.k_shot < 1 || spec.m_query < 1 {
            return Err(Error::Argument(format!(
                "invalid episode shape: n_way={} k_shot={} m_query={}",
                spec.n_way, spec.k_shot, spec.m_query
            )));
        }
        if spec.task_count == 0 {
            return Err(Error::Argument("task_count must be at least 1".into()));
        }
        let classes = cache.split_classes(&spec.split)?.to_vec();
        if classes.len() < spec.n_way {
            return Err(Error::Sampling(format!(
                "split `{}` has {} classes, fewer than n_way={}",
                spec.split,
                classes.len(),
                spec.n_way
            )));
        }
        let mut by_class = cache.records_by_class();
        let mut records = BTreeMap::new();
        let need = spec.k_shot + spec.m_query;
        for &c in &classes {
            let rs = by_class.remove(&c).unwrap_or_default();
            if rs.len() < need {
                return Err(Error::Sampling(format!(
                    "class {c} has {} records, needs k_shot + m_query = {need}",
                    rs.len()
                )));
            }
            records.insert(c, rs);
        }
        if let Some(policy) = &policy {
            if !(0.0..=1.0).contains(&policy.bias) {
                return Err(Error::Argument(format!(
                    "periphery bias {} is outside [0, 1]",
                    policy.bias
                )));
            }
            for &c in &classes {
                let pool = policy.pools.pools.get(&c).map_or(&[][..], Vec::as_slice);
                if pool.len() < spec.k_shot {
                    return Err(Error::Sampling(format!(
                        "periphery pool of class {c} has {} records, needs {}",
                        pool.len(),
                        spec.k_shot
                    )));
                }
                if pool.iter().any(|&i| cache.class_id(i) != c) {
                    return Err(Error::Sampling(format!(
                        "periphery pool of class {c} holds foreign records"
                    )));
                }
            }
        }
        Ok(Self {
            spec,
            classes,
            records,
            policy,
        })
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn policy(&self) -> Option<&SupportPolicy> {
        self.policy.as_ref()
    }

    /// ChaCha8 seeded with `spec.seed` on stream `task_index`.
    fn rng(&self, task_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(task_index as u64);
        rng
    }

    pub fn sample(&self, task_index: usize) -> Episode {
        let mut rng = self.rng(task_index);
        let (k, m) = (self.spec.k_shot, self.spec.m_query);
        let picked = sample(&mut rng, self.classes.len(), self.spec.n_way).into_vec();
        let mut class_ids = Vec::with_capacity(picked.len());
        let mut support = Vec::with_capacity(picked.len());
        let mut query = Vec::with_capacity(picked.len());
        for p in picked {
            let c = self.classes[p];
            let records = &self.records[&c];
            let pool = self
                .policy
                .as_ref()
                .filter(|policy| rng.random::<f64>() < policy.bias)
                .map(|policy| policy.pools.pools[&c].as_slice());
            match pool {
                Some(pool) => {
                    let s: Vec<usize> = sample(&mut rng, pool.len(), k)
                        .into_iter()
                        .map(|i| pool[i])
                        .collect();
                    let taken: HashSet<usize> = s.iter().copied().collect();
                    let rest: Vec<usize> =
                        records.iter().copied().filter(|i| !taken.contains(i)).collect();
                    let q = sample(&mut rng, rest.len(), m)
                        .into_iter()
                        .map(|i| rest[i])
                        .collect();
                    support.push(s);
                    query.push(q);
                }
                None => {
                    let drawn: Vec<usize> = sample(&mut rng, records.len(), k + m)
                        .into_iter()
                        .map(|i| records[i])
                        .collect();
                    support.push(drawn[..k].to_vec());
                    query.push(drawn[k..].to_vec());
                }
            }
            class_ids.push(c);
        }
        Episode {
            task_index,
            class_ids,
            support,
            query,
        }
    }
}
