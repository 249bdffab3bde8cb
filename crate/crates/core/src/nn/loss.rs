use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Mean absolute error over every element.
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// d MAE / d pred, with the subgradient of |r| at r = 0 taken as 0.
pub fn mae_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(pred, target)?;
    let n = pred.len() as f64;
    Ok(Tensor::from_fn(pred.shape(), |i| {
        let r = pred[i] - target[i];
        if r > 0.0 {
            1.0 / n
        } else if r < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    }))
}

fn check(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(shape_err(
            "mae_loss",
            format!(
                "prediction {:?} vs target {:?}",
                pred.shape(),
                target.shape()
            ),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_zero_and_offset_is_half() {
        let t = Tensor::from_fn(&[23, 23, 3], |i| (i % 7) as f64 / 7.0);
        assert_eq!(mae_loss(&t, &t).unwrap(), 0.0);
        let p = t.map(|v| v + 0.5);
        assert!((mae_loss(&p, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(mae_loss(&p, &Tensor::zeros(&[23, 23, 2])).is_err());
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::from_fn(&[23, 23, 3], |_| rng.random());
        let b = Tensor::from_fn(&[23, 23, 3], |_| rng.random());
        let mut acc = 0.0;
        for y in 0..23 {
            for x in 0..23 {
                for c in 0..3 {
                    acc += (a.at(&[y, x, c]) - b.at(&[y, x, c])).abs();
                }
            }
        }
        let want = acc / (23.0 * 23.0 * 3.0);
        assert!((mae_loss(&a, &b).unwrap() - want).abs() <= 1e-15);
    }
}
