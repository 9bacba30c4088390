use super::episode::Episode;
use crate::alignment_net::AlignmentNetwork;
use crate::error::{Error, Result};
use crate::feature_store::FeatureCache;
use crate::scalar::Real;
use crate::semantic_evolution::SemanticTable;

/// Prototypes of one episode, in `episode.class_ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    pub support_mean: Vec<Vec<T>>,
    pub reconstructed: Option<Vec<Vec<T>>>,
    pub fused: Vec<Vec<T>>,
}

fn average<T: Real>(rows: impl Iterator<Item = Vec<T>>, dim: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); dim];
    let mut n = 0usize;
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a = *a + v;
        }
        n += 1;
    }
    let n = T::from_usize(n).expect("count fits");
    acc.into_iter().map(|a| a / n).collect()
}

/// Mean support feature of each class.
pub fn support_mean<T: Real>(episode: &Episode, cache: &FeatureCache) -> Vec<Vec<T>> {
    episode
        .support
        .iter()
        .map(|records| {
            average(
                records
                    .iter()
                    .map(|&i| cache.vector(i).iter().map(|&v| T::from_f32_lossless(v)).collect()),
                cache.dim(),
            )
        })
        .collect()
}

/// Network output averaged over each class's support records, every record
/// paired with its class-level semantic vector. Forward first, then average.
pub fn reconstruct<T: Real>(
    net: &AlignmentNetwork<T>,
    episode: &Episode,
    cache: &FeatureCache,
    semantics: Option<&SemanticTable<T>>,
) -> Result<Vec<Vec<T>>> {
    let uses_semantic = net.shape().source.uses_semantic();
    episode
        .class_ids
        .iter()
        .zip(&episode.support)
        .map(|(&class_id, records)| {
            let semantic: &[T] = if uses_semantic {
                semantics
                    .ok_or_else(|| {
                        Error::MissingSemantics("network needs semantic embeddings".into())
                    })?
                    .get(class_id)?
            } else {
                &[]
            };
            let outputs = records
                .iter()
                .map(|&i| {
                    let visual: Vec<T> =
                        cache.vector(i).iter().map(|&v| T::from_f32_lossless(v)).collect();
                    net.forward(&visual, semantic)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(average(outputs.into_iter(), net.shape().visual_dim))
        })
        .collect()
}

/// Convex blend `k * reconstructed + (1 - k) * mean`.
pub fn fuse<T: Real>(reconstructed: &[T], mean: &[T], k: f64) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::Argument(format!("fusion factor {k} is outside [0, 1]")));
    }
    if reconstructed.len() != mean.len() {
        return Err(Error::Dimension(format!(
            "cannot fuse vectors of length {} and {}",
            reconstructed.len(),
            mean.len()
        )));
    }
    let k = T::lit(k);
    let rest = T::one() - k;
    Ok(reconstructed
        .iter()
        .zip(mean)
        .map(|(&r, &u)| k * r + rest * u)
        .collect())
}

impl<T: Real> PrototypeSet<T> {
    /// Fuses every class; without a reconstruction `k` must be zero.
    pub fn build(
        support_mean: Vec<Vec<T>>,
        reconstructed: Option<Vec<Vec<T>>>,
        k: f64,
    ) -> Result<Self> {
        let fused = match &reconstructed {
            Some(r) => r
                .iter()
                .zip(&support_mean)
                .map(|(r, u)| fuse(r, u, k))
                .collect::<Result<_>>()?,
            None if k == 0.0 => support_mean.clone(),
            None => {
                return Err(Error::Argument(
                    "fusion factor must be 0 without a reconstruction".into(),
                ))
            }
        };
        Ok(Self {
            support_mean,
            reconstructed,
            fused,
        })
    }
}
