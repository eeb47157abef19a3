use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FcmError, Result};
use crate::harmonic::HarmonicConfig;

/// Zero-mean Gaussian measurement noise, scaled by a reference magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation as a fraction of the reference (0.001 = 0.1%).
    pub relative_std: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(relative_std: f64, seed: u64) -> Result<Self> {
        if !(relative_std >= 0.0) || !relative_std.is_finite() {
            return Err(FcmError::Invalid(format!("noise level must be >= 0, got {relative_std}")));
        }
        Ok(Self { relative_std, seed })
    }
}

/// Mean modulus of the `3 (K + 1)` phasors of a real harmonic vector.
///
/// A trailing dc slot, if present, is ignored.
pub fn mean_phasor_magnitude(cfg: HarmonicConfig, v: &DVector<f64>) -> f64 {
    let n = cfg.p() / 2;
    (0..n).map(|i| v[2 * i].hypot(v[2 * i + 1])).sum::<f64>() / n as f64
}

/// Mean modulus of a complex vector.
pub fn mean_complex_magnitude(v: &DVector<Complex64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|z| z.norm()).sum::<f64>() / v.len() as f64
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite, non-negative std")
}

/// Adds i.i.d. `N(0, (relative_std * reference)^2)` to every entry, in place.
pub fn perturb<R: Rng + ?Sized>(data: &mut DMatrix<f64>, relative_std: f64, reference: f64, rng: &mut R) {
    let std = relative_std * reference;
    if std == 0.0 {
        return;
    }
    let d = normal(std);
    data.iter_mut().for_each(|x| *x += d.sample(rng));
}

/// Complex version of [`perturb`]: real and imaginary parts each get the full std.
pub fn perturb_complex<R: Rng + ?Sized>(data: &mut DMatrix<Complex64>, relative_std: f64, reference: f64, rng: &mut R) {
    let std = relative_std * reference;
    if std == 0.0 {
        return;
    }
    let d = normal(std);
    data.iter_mut().for_each(|z| *z += Complex64::new(d.sample(rng), d.sample(rng)));
}

/// Noisy copy of `data`, deterministic in `model.seed`.
pub fn add_measurement_noise(data: &DMatrix<f64>, model: &NoiseModel, reference: f64) -> DMatrix<f64> {
    let mut out = data.clone();
    perturb(&mut out, model.relative_std, reference, &mut ChaCha8Rng::seed_from_u64(model.seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64);
        assert_eq!(add_measurement_noise(&m, &NoiseModel::new(0.0, 1).unwrap(), 5.0), m);
    }

    #[test]
    fn sample_std_matches() {
        let m = DMatrix::zeros(1000, 1000);
        let out = add_measurement_noise(&m, &NoiseModel::new(0.01, 2).unwrap(), 1.0);
        let n = out.len() as f64;
        let mean = out.sum() / n;
        let std = (out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.01).abs() / 0.01 < 0.01, "{std}");
    }

    #[test]
    fn deterministic_under_seed() {
        let m = DMatrix::zeros(5, 5);
        let model = NoiseModel::new(0.1, 9).unwrap();
        assert_eq!(add_measurement_noise(&m, &model, 1.0), add_measurement_noise(&m, &model, 1.0));
    }

    #[test]
    fn negative_level_rejected() {
        assert!(NoiseModel::new(-0.1, 0).is_err());
        assert!(NoiseModel::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn phasor_magnitude_reference() {
        let cfg = HarmonicConfig::new(0);
        let v = DVector::from_vec(vec![3.0, 4.0, 0.0, 0.0, 1.0, 0.0, 123.0]);
        assert!((mean_phasor_magnitude(cfg, &v) - 2.0).abs() < 1e-15);
    }
}
