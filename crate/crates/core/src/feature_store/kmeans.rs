//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub max_iterations: usize,
    /// Stop once no center moves farther than this (euclidean).
    pub tolerance: f64,
}

impl KMeansConfig {
    pub fn new(clusters: usize) -> Self {
        Self {
            clusters,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    pub centers: Vec<Vec<T>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

impl<T: Real> Clustering<T> {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Index of the most populated cluster; ties go to the lowest index.
    pub fn largest(&self) -> usize {
        let sizes = self.sizes();
        let mut best = 0;
        for (i, &s) in sizes.iter().enumerate() {
            if s > sizes[best] {
                best = i;
            }
        }
        best
    }
}

pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
}

/// Arithmetic mean of `points[i]` for `i` in `members`, summed in the given order.
pub(crate) fn mean_of<T: Real>(points: &[Vec<T>], members: &[usize], dim: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); dim];
    for &i in members {
        for (a, &v) in acc.iter_mut().zip(&points[i]) {
            *a = *a + v;
        }
    }
    let n = T::from_usize(members.len()).expect("count fits in Real");
    acc.into_iter().map(|a| a / n).collect()
}

fn nearest<T: Real>(point: &[T], centers: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(point, &centers[0]);
    for (c, center) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(point, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn seed_plus_plus<T: Real, R: Rng + ?Sized>(
    points: &[Vec<T>],
    k: usize,
    rng: &mut R,
) -> Vec<Vec<T>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c).as_f64())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
    }
    centers
}

pub fn kmeans<T: Real, R: Rng + ?Sized>(
    points: &[Vec<T>],
    config: KMeansConfig,
    rng: &mut R,
) -> Result<Clustering<T>> {
    let k = config.clusters;
    if k == 0 {
        return Err(Error::Cluster("cluster count must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Cluster(format!(
            "{} point(s) cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points of unequal length".into()));
    }

    let mut centers = seed_plus_plus(points, k, rng);
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;
    let tol = T::lit(config.tolerance);
    while iterations < config.max_iterations {
        iterations += 1;
        for (a, p) in assignments.iter_mut().zip(points) {
            *a = nearest(p, &centers);
        }
        let mut shift = T::zero();
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = assignments
                .iter()
                .enumerate()
                .filter_map(|(i, &a)| (a == c).then_some(i))
                .collect();
            // empty clusters keep their previous center
            if members.is_empty() {
                continue;
            }
            let updated = mean_of(points, &members, dim);
            shift = shift.max(sq_dist(center, &updated).sqrt());
            *center = updated;
        }
        if shift <= tol {
            break;
        }
    }
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = nearest(p, &centers);
    }
    Ok(Clustering {
        centers,
        assignments,
        iterations,
    })
}
