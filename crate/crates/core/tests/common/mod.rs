#![allow(dead_code)]

use fcm_core::{ComplexHarmonicMatrix, ComplexSpectrum, HarmonicConfig};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub fn uniform(rng: &mut impl Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng))
}

pub fn random_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng))
}

/// Conjugate-symmetric spectrum with real order-0 phasors.
pub fn random_spectrum(cfg: HarmonicConfig, rng: &mut impl Rng) -> ComplexSpectrum {
    ComplexSpectrum::from_nonnegative(cfg, |_, k| {
        let im = if k == 0 { 0.0 } else { uniform(rng) };
        Complex64::new(uniform(rng), im)
    })
}

/// Random map with `A[-k,-m] = conj(A[k,m])`, built as `(B + conj(B) flipped) / 2`.
pub fn random_symmetric_matrix(cfg: HarmonicConfig, with_dc: bool, rng: &mut impl Rng) -> ComplexHarmonicMatrix {
    let n = cfg.complex_len();
    let b = DMatrix::from_fn(n, n, |_, _| Complex64::new(uniform(rng), uniform(rng)));
    let kk = cfg.max_order() as i64;
    let flip: Vec<usize> = (0..n)
        .map(|i| {
            let ph = i / (2 * kk as usize + 1);
            let k = (i % (2 * kk as usize + 1)) as i64 - kk;
            cfg.complex_index(ph, -k)
        })
        .collect();
    // the flip above assumes the phase-major, ascending-order layout
    for (i, &f) in flip.iter().enumerate() {
        let ph = i / (2 * kk as usize + 1);
        let k = (i % (2 * kk as usize + 1)) as i64 - kk;
        assert_eq!(cfg.complex_index(ph, k), i);
        assert_eq!(cfg.complex_index(ph, -k), f);
    }
    let a = DMatrix::from_fn(n, n, |i, j| (b[(i, j)] + b[(flip[i], flip[j])].conj()) * 0.5);
    let dc = with_dc.then(|| random_spectrum(cfg, rng).values().clone());
    ComplexHarmonicMatrix::new(cfg, a, dc).unwrap()
}
