use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sum of absolute errors over dimensions, averaged over rows.
pub fn l1_loss<T: Real>(predicted: ArrayView2<T>, target: ArrayView2<T>) -> Result<T> {
    if predicted.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} differs from target shape {:?}",
            predicted.dim(),
            target.dim()
        )));
    }
    let rows = predicted.nrows();
    if rows == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let total = predicted
        .iter()
        .zip(target.iter())
        .fold(T::zero(), |acc, (&p, &t)| acc + (p - t).abs());
    Ok(total / T::from_usize(rows).expect("row count fits"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_zero() {
        let a = array![[1.0, -2.0], [3.0, 4.0]];
        assert_eq!(l1_loss(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn sums_dimensions() {
        let p = array![[1.0, 2.0]];
        let t = array![[0.0, 0.0]];
        assert_eq!(l1_loss(p.view(), t.view()).unwrap(), 3.0);
    }

    #[test]
    fn shape_mismatch() {
        let p = array![[1.0, 2.0]];
        let t = array![[0.0, 0.0, 0.0]];
        assert!(matches!(l1_loss(p.view(), t.view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, d) = (7, 5);
        let p = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0f64..3.0));
        let t = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0f64..3.0));
        let mut oracle = 0.0f64;
        for i in 0..n {
            let mut row = 0.0f64;
            for j in 0..d {
                row += (p[[i, j]] - t[[i, j]]).abs();
            }
            oracle += row;
        }
        oracle /= n as f64;
        assert!((l1_loss(p.view(), t.view()).unwrap() - oracle).abs() <= 1e-12);
    }
}
