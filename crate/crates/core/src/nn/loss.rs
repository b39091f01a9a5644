//! Soft Dice loss with additive smoothing.

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Smoothing term added to numerator and denominator.
pub const DICE_EPSILON: f64 = 1.0;

fn check<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> Result<()> {
    if p.dims() != y.dims() {
        return Err(Error::mismatch("dice operands", p.dims(), y.dims()));
    }
    Ok(())
}

/// Returns (Σpy, Σp + Σy) over every element.
fn sums<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> (f64, f64) {
    let mut inter = 0.0;
    let mut total = 0.0;
    for (&a, &b) in p.data().iter().zip(y.data()) {
        let (a, b) = (a.as_f64(), b.as_f64());
        inter += a * b;
        total += a + b;
    }
    (inter, total)
}

/// `1 − (2Σpy + ε) / (Σp + Σy + ε)`, with the sums taken over the whole tensor.
pub fn dice_loss<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    check(p, y)?;
    let (inter, total) = sums(p, y);
    Ok(1.0 - (2.0 * inter + DICE_EPSILON) / (total + DICE_EPSILON))
}

/// ∂loss/∂p for [`dice_loss`].
pub fn dice_loss_grad<T: Scalar>(p: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    check(p, y)?;
    let (inter, total) = sums(p, y);
    let num = 2.0 * inter + DICE_EPSILON;
    let den = total + DICE_EPSILON;
    let data = y
        .data()
        .iter()
        .map(|&yi| T::from_f64((num - 2.0 * yi.as_f64() * den) / (den * den)))
        .collect();
    Ok(Tensor::from_parts(p.dims(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(v: alloc::vec::Vec<f64>) -> Tensor<f64> {
        Tensor::new([1, 1, 1, v.len()], v).unwrap()
    }

    #[test]
    fn perfect_overlap_is_zero() {
        let y = t((0..400).map(|i| f64::from(u8::from(i < 100))).collect());
        assert_eq!(dice_loss(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn half_probability_on_full_label() {
        let n = 100_000;
        let l = dice_loss(&t(vec![0.5; n]), &t(vec![1.0; n])).unwrap();
        let closed = 1.0 - (n as f64 + 1.0) / (1.5 * n as f64 + 1.0);
        assert!((l - closed).abs() < 1e-12);
        assert!((l - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn disjoint_masks() {
        let n = 50;
        let p = t((0..2 * n).map(|i| f64::from(u8::from(i < n))).collect());
        let y = t((0..2 * n).map(|i| f64::from(u8::from(i >= n))).collect());
        let l = dice_loss(&p, &y).unwrap();
        assert!((l - (1.0 - 1.0 / (2.0 * n as f64 + 1.0))).abs() < 1e-12);
    }

    #[test]
    fn all_zero_gradient_is_inverse_epsilon() {
        let z = t(vec![0.0; 16]);
        let g = dice_loss_grad(&z, &z).unwrap();
        assert!(g.data().iter().all(|&v| v == 1.0 / DICE_EPSILON));
    }

    #[test]
    fn foreground_gradient_is_negative() {
        let p = t(vec![0.3, 0.8, 0.1]);
        let y = t(vec![1.0, 1.0, 0.0]);
        let g = dice_loss_grad(&p, &y).unwrap();
        assert!(g.data()[0] < 0.0 && g.data()[1] < 0.0 && g.data()[2] > 0.0);
    }

    #[test]
    fn mismatched_dims_rejected() {
        assert!(dice_loss(&t(vec![0.0; 3]), &t(vec![0.0; 4])).is_err());
        assert!(dice_loss_grad(&t(vec![0.0; 3]), &t(vec![0.0; 4])).is_err());
    }
}
