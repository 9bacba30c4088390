//! Central-difference verification of [`backward`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::l1_loss;
use super::network::{backward, AlignmentNetwork, Parameters, TrainingBatch};
use crate::error::Result;
use crate::scalar::Real;

/// Position of one scalar parameter: tensor in `w1, b1, w2, b2` order, then
/// row-major offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCoord {
    pub tensor: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<ParamCoord>,
    pub checked: usize,
    /// Coordinates whose perturbation flipped an activation or residual sign.
    pub skipped_at_kinks: usize,
}

const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Loss plus the sign pattern of every pre-activation and residual.
fn loss_and_pattern<T: Real>(
    net: &AlignmentNetwork<T>,
    batch: &TrainingBatch<T>,
) -> Result<(f64, Vec<i8>)> {
    let x = batch.inputs(net.shape())?;
    let trace = net.forward_batch(x.view())?;
    let loss = l1_loss(trace.output.view(), batch.target.view())?.as_f64();
    let sign = |v: T| -> i8 {
        if v > T::zero() {
            1
        } else if v < T::zero() {
            -1
        } else {
            0
        }
    };
    let pattern = trace
        .pre_activation
        .iter()
        .map(|&z| sign(z))
        .chain(
            trace
                .output
                .iter()
                .zip(batch.target.iter())
                .map(|(&o, &t)| sign(o - t)),
        )
        .collect();
    Ok((loss, pattern))
}

fn all_coords<T: Real>(params: &Parameters<T>) -> Vec<ParamCoord> {
    params
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(tensor, t)| (0..t.len()).map(move |index| ParamCoord { tensor, index }))
        .collect()
}

/// Seeded choice of `count` distinct coordinates (all of them if fewer exist).
pub fn sample_coords<T: Real>(
    net: &AlignmentNetwork<T>,
    count: usize,
    seed: u64,
) -> Vec<ParamCoord> {
    let all = all_coords(net.params());
    if count >= all.len() {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, all.len(), count).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

/// Compares `grads` against central differences at `coords`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-12)`. Coordinates whose
/// `+step` or `-step` perturbation changes the activation/residual sign
/// pattern straddle a kink and are skipped.
pub fn compare_gradients<T: Real>(
    net: &AlignmentNetwork<T>,
    batch: &TrainingBatch<T>,
    grads: &Parameters<T>,
    step: f64,
    coords: &[ParamCoord],
) -> Result<GradCheckReport> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, base_pattern) = loss_and_pattern(net, batch)?;
    let h = T::lit(step);
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
        skipped_at_kinks: 0,
    };
    for &c in coords {
        let original = net.params().tensors()[c.tensor][c.index];
        probe.params_mut().tensors_mut()[c.tensor][c.index] = original + h;
        let (up, up_pattern) = loss_and_pattern(&probe, batch)?;
        probe.params_mut().tensors_mut()[c.tensor][c.index] = original - h;
        let (down, down_pattern) = loss_and_pattern(&probe, batch)?;
        probe.params_mut().tensors_mut()[c.tensor][c.index] = original;
        if up_pattern != base_pattern || down_pattern != base_pattern {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.tensors()[c.tensor][c.index].as_f64();
        let denom = analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(rel);
            report.worst = Some(c);
        }
    }
    Ok(report)
}

/// Runs [`backward`] and checks it on `samples` seeded coordinates.
pub fn grad_check<T: Real>(
    net: &AlignmentNetwork<T>,
    batch: &TrainingBatch<T>,
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = backward(net, batch)?;
    let coords = sample_coords(net, samples, seed);
    compare_gradients(net, batch, &grads, step, &coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment_net::{AlignmentSource, NetworkShape};
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn setup(seed: u64) -> (AlignmentNetwork<f64>, TrainingBatch<f64>) {
        let shape = NetworkShape {
            visual_dim: 5,
            text_dim: 4,
            hidden_dim: 8,
            source: AlignmentSource::VisualSemantic,
            leaky_slope: 0.01,
            use_bias: true,
        };
        let mut net = AlignmentNetwork::init(shape, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for b in net.params_mut().b1.iter_mut() {
            *b = 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
        let mut m = |c| Array2::from_shape_fn((5, c), |_| -> f64 { StandardNormal.sample(&mut rng) });
        let batch = TrainingBatch {
            visual: m(5),
            semantic: m(4),
            target: m(5),
        };
        (net, batch)
    }

    #[test]
    fn healthy_gradients_pass() {
        let (net, batch) = setup(1);
        let r = grad_check(&net, &batch, 1e-5, 256, 0).unwrap();
        assert!(r.checked >= 100, "{r:?}");
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn corrupted_entry_is_caught() {
        let (net, batch) = setup(2);
        let (_, mut grads) = backward(&net, &batch).unwrap();
        let coords = sample_coords(&net, usize::MAX, 0);
        // pick a coordinate with a clearly non-zero gradient
        let target = *coords
            .iter()
            .find(|c| grads.tensors()[c.tensor][c.index].abs() > 1e-3)
            .unwrap();
        grads.tensors_mut()[target.tensor][target.index] *= 2.0;
        let r = compare_gradients(&net, &batch, &grads, 1e-5, &coords).unwrap();
        assert!(r.max_relative_error > 1e-2, "{r:?}");
        assert_eq!(r.worst, Some(target));
    }

    #[test]
    fn zero_input_batch_stays_finite() {
        let (net, mut batch) = setup(3);
        batch.visual.fill(0.0);
        batch.semantic.fill(0.0);
        let r = grad_check(&net, &batch, 1e-5, 256, 1).unwrap();
        assert!(r.max_relative_error.is_finite());
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn sampling_is_seeded_and_bounded() {
        let (net, _) = setup(4);
        let a = sample_coords(&net, 50, 7);
        assert_eq!(a.len(), 50);
        assert!(a.windows(2).all(|w| w[0] != w[1]));
        assert_eq!(a, sample_coords(&net, 50, 7));
        assert_ne!(a, sample_coords(&net, 50, 8));
        assert_eq!(sample_coords(&net, 10_000, 7).len(), net.params().len());
    }
}
