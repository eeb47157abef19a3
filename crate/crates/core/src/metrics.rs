//! Relative estimation error in squared Frobenius norm.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{FcmError, Result};

/// How [`relative_error`] normalizes the squared error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorMode {
    /// `||A_true - A_est||_F^2 / ||A_true||_F^2`.
    SquaredFrobenius,
    /// `||A_true - A_est||_F^2 / denominator`, where the caller supplies
    /// `max_tau ||A_tau||_F^2` over a whole online run.
    Online { denominator: f64 },
}

pub fn relative_error<T>(estimate: &DMatrix<T>, truth: &DMatrix<T>, mode: ErrorMode) -> Result<f64>
where
    T: ComplexField<RealField = f64>,
{
    if estimate.shape() != truth.shape() {
        return Err(FcmError::DimensionMismatch {
            what: "relative_error operands",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let num = (truth - estimate).norm_squared();
    let den = match mode {
        ErrorMode::SquaredFrobenius => truth.norm_squared(),
        ErrorMode::Online { denominator } => denominator,
    };
    if den <= 0.0 || !den.is_finite() {
        return Err(FcmError::ZeroDenominator);
    }
    Ok(num / den)
}

/// `||a - b|| / ||reference||` in the Euclidean norm, used for current errors.
pub fn relative_vector_error(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>, reference: &nalgebra::DVector<f64>) -> f64 {
    (a - b).norm() / reference.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn exact_estimate_has_zero_error() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(relative_error(&a, &a, ErrorMode::SquaredFrobenius).unwrap(), 0.0);
    }

    #[test]
    fn zero_estimate_has_unit_error() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let z = DMatrix::zeros(2, 2);
        assert!((relative_error(&z, &a, ErrorMode::SquaredFrobenius).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_value() {
        let truth = DMatrix::<f64>::identity(2, 2);
        let est = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.9]));
        let e = relative_error(&est, &truth, ErrorMode::SquaredFrobenius).unwrap();
        assert!((e - 0.005).abs() < 1e-15);
    }

    #[test]
    fn online_mode_uses_supplied_denominator() {
        let truth = DMatrix::<f64>::identity(2, 2);
        let est = DMatrix::zeros(2, 2);
        let e = relative_error(&est, &truth, ErrorMode::Online { denominator: 8.0 }).unwrap();
        assert_eq!(e, 0.25);
    }

    #[test]
    fn zero_reference_is_an_error() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            relative_error(&z, &z, ErrorMode::SquaredFrobenius),
            Err(FcmError::ZeroDenominator)
        ));
        assert!(relative_error(&z, &z, ErrorMode::Online { denominator: 0.0 }).is_err());
    }

    #[test]
    fn complex_matrices_supported() {
        let t = DMatrix::from_element(1, 1, Complex64::new(0.0, 2.0));
        let e = DMatrix::from_element(1, 1, Complex64::new(0.0, 1.0));
        assert!((relative_error(&e, &t, ErrorMode::SquaredFrobenius).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::<f64>::zeros(2, 3);
        assert!(relative_error(&a, &b, ErrorMode::SquaredFrobenius).is_err());
    }
}
