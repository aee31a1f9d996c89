use super::OptimError;
use crate::scalar::{mean_and_popstd, Scalar};

/// A group can be normalized iff its rewards are not all equal.
pub fn is_valid_group<F: Scalar>(rewards: &[F]) -> Result<bool, OptimError> {
    if rewards.len() < 2 {
        return Err(OptimError::GroupTooSmall(rewards.len()));
    }
    Ok(rewards.iter().any(|&r| r != rewards[0]))
}

/// Z-scores within the group, using the population standard deviation.
pub fn group_advantages<F: Scalar>(rewards: &[F]) -> Result<Vec<F>, OptimError> {
    if !is_valid_group(rewards)? {
        return Err(OptimError::ZeroStd);
    }
    let (mean, std) = mean_and_popstd(rewards);
    if std <= F::zero() || !std.is_finite() {
        return Err(OptimError::ZeroStd);
    }
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(group_advantages(&[1.0f64, 0.0]).unwrap(), vec![1.0, -1.0]);
        let a = group_advantages(&[2.0f64, 0.0, 1.0]).unwrap();
        let s = (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(a[0], 1.0 / s, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], -1.0 / s, epsilon = 1e-12);
        assert_eq!(a[2], 0.0);
        assert_eq!(group_advantages(&[1.0f64, 1.0, 1.0]), Err(OptimError::ZeroStd));
    }

    #[test]
    fn validity() {
        assert_eq!(is_valid_group(&[0.0f64, 0.0]), Ok(false));
        assert_eq!(is_valid_group(&[0.0f64, 1e-12]), Ok(true));
        assert_eq!(is_valid_group(&[5.0f64]), Err(OptimError::GroupTooSmall(1)));
        // 0.1 * 3 / 3 != 0.1 in floating point, yet the group is degenerate.
        assert_eq!(is_valid_group(&[0.1f64, 0.1, 0.1]), Ok(false));
    }

    #[test]
    fn f32_path() {
        assert_eq!(group_advantages(&[1.0f32, 0.0]).unwrap(), vec![1.0f32, -1.0]);
    }

    proptest! {
        #[test]
        fn standardized(rewards in prop::collection::vec(-2.0f64..1.0, 2..16)) {
            prop_assume!(is_valid_group(&rewards).unwrap());
            let spread = rewards.iter().cloned().fold(f64::MIN, f64::max) - rewards.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 1e-6);
            let a = group_advantages(&rewards).unwrap();
            let (m, s) = mean_and_popstd(&a);
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
