use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{kmeans, mean_of, KMeansConfig};
use super::FeatureCache;
use crate::error::{Error, Result};
use crate::scalar::{widen, Real};

/// One target vector per class, living in the visual embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenterSet<T> {
    centers: BTreeMap<u32, Vec<T>>,
}

impl<T: Real> ClassCenterSet<T> {
    pub fn from_map(centers: BTreeMap<u32, Vec<T>>) -> Self {
        Self { centers }
    }

    pub fn get(&self, class_id: u32) -> Option<&[T]> {
        self.centers.get(&class_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[T])> {
        self.centers.iter().map(|(&c, v)| (c, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn cast<U: Real>(&self) -> ClassCenterSet<U> {
        ClassCenterSet {
            centers: self
                .centers
                .iter()
                .map(|(&c, v)| (c, v.iter().map(|&x| U::lit(x.as_f64())).collect()))
                .collect(),
        }
    }

    /// Stored as a JSON object `class_id -> [f64; dim]`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let plain: BTreeMap<u32, Vec<f64>> = self
            .centers
            .iter()
            .map(|(&c, v)| (c, v.iter().map(|x| x.as_f64()).collect()))
            .collect();
        let text = serde_json::to_string(&plain)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plain: BTreeMap<u32, Vec<f64>> = serde_json::from_str(&text)?;
        if plain.values().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("center file holds a non-finite value".into()));
        }
        Ok(Self {
            centers: plain
                .into_iter()
                .map(|(c, v)| (c, v.into_iter().map(T::lit).collect()))
                .collect(),
        })
    }
}

fn class_points<T: Real>(cache: &FeatureCache, class_id: u32) -> Result<Vec<Vec<T>>> {
    let points: Vec<Vec<T>> = cache
        .records_of(class_id)
        .into_iter()
        .map(|i| widen(cache.vector(i)))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyClass(class_id));
    }
    Ok(points)
}

/// Mean feature vector of every class in `split`, summed in file order.
pub fn class_centers<T: Real>(cache: &FeatureCache, split: &str) -> Result<ClassCenterSet<T>> {
    let dim = cache.dim();
    let mut centers = BTreeMap::new();
    for &class_id in cache.split_classes(split)? {
        let points = class_points::<T>(cache, class_id)?;
        let members: Vec<usize> = (0..points.len()).collect();
        centers.insert(class_id, mean_of(&points, &members, dim));
    }
    Ok(ClassCenterSet { centers })
}

/// Per-class k-means; each class is represented by the center of its most
/// populated cluster (lowest cluster index on ties).
///
/// The RNG for class `c` is ChaCha8 seeded with `seed` on stream `c`, so a
/// class's result does not depend on which other classes are in the split.
pub fn cluster_centers<T: Real>(
    cache: &FeatureCache,
    split: &str,
    clusters_per_class: usize,
    seed: u64,
) -> Result<ClassCenterSet<T>> {
    if clusters_per_class == 0 {
        return Err(Error::Argument("clusters_per_class must be at least 1".into()));
    }
    let mut centers = BTreeMap::new();
    for &class_id in cache.split_classes(split)? {
        let points = class_points::<T>(cache, class_id)?;
        if points.len() < clusters_per_class {
            return Err(Error::Cluster(format!(
                "class {class_id} has {} record(s), fewer than {clusters_per_class} clusters",
                points.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(class_id));
        let clustering = kmeans(&points, KMeansConfig::new(clusters_per_class), &mut rng)?;
        let best = clustering.largest();
        centers.insert(class_id, clustering.centers[best].clone());
    }
    Ok(ClassCenterSet { centers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{FeatureCacheHeader, FeatureRecord};
    use rand::Rng;

    fn cache_of(records: Vec<(u32, Vec<f32>)>, base: Vec<u32>) -> FeatureCache {
        let dim = records[0].1.len();
        let header = FeatureCacheHeader::new("t", dim).with_split("base", base);
        let recs: Vec<FeatureRecord> = records
            .into_iter()
            .map(|(class_id, vector)| FeatureRecord { class_id, vector })
            .collect();
        FeatureCache::new(header, &recs).unwrap()
    }

    #[test]
    fn mean_of_two_unit_vectors() {
        let cache = cache_of(vec![(0, vec![1.0, 0.0]), (0, vec![0.0, 1.0])], vec![0]);
        let c = class_centers::<f64>(&cache, "base").unwrap();
        assert_eq!(c.get(0).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn single_record_center_is_itself() {
        let cache = cache_of(vec![(4, vec![3.0, 4.0])], vec![4]);
        let c = class_centers::<f32>(&cache, "base").unwrap();
        assert_eq!(c.get(4).unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn matches_naive_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let records: Vec<(u32, Vec<f32>)> = (0..5)
            .map(|_| (1, (0..7).map(|_| rng.random_range(-5.0f32..5.0)).collect()))
            .collect();
        // oracle: plain indexed loops in f64
        let mut oracle = [0.0f64; 7];
        for (_, v) in &records {
            for d in 0..7 {
                oracle[d] += v[d] as f64;
            }
        }
        for o in &mut oracle {
            *o /= 5.0;
        }
        let cache = cache_of(records, vec![1]);
        let c = class_centers::<f64>(&cache, "base").unwrap();
        for (a, b) in c.get(1).unwrap().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_class_is_an_error() {
        let cache = cache_of(vec![(0, vec![1.0])], vec![0, 9]);
        assert!(matches!(
            class_centers::<f64>(&cache, "base"),
            Err(Error::EmptyClass(9))
        ));
    }

    #[test]
    fn missing_split_is_an_error() {
        let cache = cache_of(vec![(0, vec![1.0])], vec![0]);
        assert!(class_centers::<f64>(&cache, "novel").is_err());
    }

    #[test]
    fn single_cluster_equals_mean_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<(u32, Vec<f32>)> = (0..40)
            .map(|i| (i % 3, (0..5).map(|_| rng.random_range(-1.0f32..1.0)).collect()))
            .collect();
        let cache = cache_of(records, vec![0, 1, 2]);
        let mean = class_centers::<f64>(&cache, "base").unwrap();
        for seed in 0..4 {
            let clustered = cluster_centers::<f64>(&cache, "base", 1, seed).unwrap();
            assert_eq!(clustered, mean);
        }
    }

    /// Exhaustive search over all two-way partitions of the points; returns
    /// the mean of the larger side of the minimum-SSE partition.
    fn best_partition_larger_mean(points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len();
        let mean = |idx: &[usize]| -> Vec<f64> {
            let mut m = vec![0.0; points[0].len()];
            for &i in idx {
                for (a, v) in m.iter_mut().zip(&points[i]) {
                    *a += v;
                }
            }
            m.iter().map(|v| v / idx.len() as f64).collect()
        };
        let sse = |idx: &[usize]| -> f64 {
            let m = mean(idx);
            idx.iter()
                .map(|&i| points[i].iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum()
        };
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let a: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let b: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            let total = sse(&a) + sse(&b);
            if total < best.0 {
                let larger = if a.len() >= b.len() { a } else { b };
                best = (total, mean(&larger));
            }
        }
        best.1
    }

    #[test]
    fn two_blobs_pick_the_larger_one() {
        let raw: Vec<Vec<f32>> = vec![
            vec![0.0, 0.0],
            vec![0.5, 0.2],
            vec![-0.3, 0.4],
            vec![0.1, -0.5],
            vec![20.0, 20.0],
            vec![20.4, 19.7],
        ];
        let oracle =
            best_partition_larger_mean(&raw.iter().map(|v| widen::<f64>(v)).collect::<Vec<_>>());
        let cache = cache_of(raw.into_iter().map(|v| (5, v)).collect(), vec![5]);
        for seed in 0..10 {
            let c = cluster_centers::<f64>(&cache, "base", 2, seed).unwrap();
            let got = c.get(5).unwrap();
            for (a, b) in got.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "seed {seed}: {got:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn fewer_records_than_clusters() {
        let cache = cache_of(vec![(0, vec![1.0, 2.0])], vec![0]);
        assert!(matches!(
            cluster_centers::<f64>(&cache, "base", 2, 0),
            Err(Error::Cluster(_))
        ));
    }

    #[test]
    fn center_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("centers.json");
        let set = ClassCenterSet::<f64>::from_map(BTreeMap::from([(2, vec![0.25, -1.5])]));
        set.save(&path).unwrap();
        assert_eq!(ClassCenterSet::<f64>::load(&path).unwrap(), set);
    }
}
