use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FcmError, Result};
use crate::harmonic::HarmonicConfig;
use crate::network::BusLayout;

/// Bus voltage distribution for admittance experiments.
///
/// At harmonic `k >= 1` the mean is the fundamental mean divided by
/// `decay^(k-1)`, so `k = 1` reproduces the fundamental exactly; at `k = 0`
/// it is the real part of the fundamental mean. Each
/// real component has standard deviation `base_std / decay^k`. The imaginary
/// part of the `k = 0` phasor is always zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageSamplingSpec {
    /// Fundamental mean per node and phase.
    pub fundamental: Vec<[Complex64; 3]>,
    pub decay: f64,
    pub base_std: f64,
}

impl VoltageSamplingSpec {
    /// Three-node means used in the admittance experiments.
    pub fn three_node() -> Self {
        let c = Complex64::new;
        Self {
            fundamental: vec![
                [c(1.25, 0.625), c(1.0, 0.5), c(0.75, 0.375)],
                [c(2.5, 0.125), c(2.0, 0.1), c(1.5, 0.075)],
                [c(0.625, 1.25), c(0.5, 1.0), c(0.375, 0.75)],
            ],
            decay: 1.1,
            base_std: 0.005,
        }
    }

    pub fn nodes(&self) -> usize {
        self.fundamental.len()
    }

    pub fn mean(&self, node: usize, phase: usize, k: usize) -> Complex64 {
        let m = self.fundamental[node][phase];
        if k == 0 {
            Complex64::new(m.re, 0.0)
        } else {
            m / self.decay.powi(k as i32 - 1)
        }
    }

    pub fn std(&self, k: usize) -> f64 {
        self.base_std / self.decay.powi(k as i32)
    }

    /// Mean bus vector in [`BusLayout`] order.
    pub fn mean_vector(&self, cfg: HarmonicConfig) -> DVector<Complex64> {
        let layout = BusLayout::new(cfg, self.nodes());
        let mut v = DVector::zeros(layout.len());
        for k in 0..=cfg.max_order() {
            for ph in 0..3 {
                for n in 0..self.nodes() {
                    v[layout.index(k, ph, n)] = self.mean(n, ph, k);
                }
            }
        }
        v
    }
}

/// `T` independent bus voltage samples (`u x T`).
pub fn sample_bus_voltages<R: Rng + ?Sized>(
    spec: &VoltageSamplingSpec,
    cfg: HarmonicConfig,
    samples: usize,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    if !(spec.base_std >= 0.0) || !(spec.decay > 0.0) {
        return Err(FcmError::Invalid("voltage spec needs std >= 0 and decay > 0".into()));
    }
    let layout = BusLayout::new(cfg, spec.nodes());
    let mean = spec.mean_vector(cfg);
    let mut v = DMatrix::zeros(layout.len(), samples);
    for t in 0..samples {
        for k in 0..=cfg.max_order() {
            let d = Normal::new(0.0, spec.std(k)).expect("finite std");
            for ph in 0..3 {
                for n in 0..spec.nodes() {
                    let i = layout.index(k, ph, n);
                    let re = d.sample(rng);
                    let im = if k == 0 { 0.0 } else { d.sample(rng) };
                    v[(i, t)] = mean[i] + Complex64::new(re, im);
                }
            }
        }
    }
    Ok(v)
}

/// Voltage-plus-dc distribution at a single converter.
///
/// The mean holds a few balanced harmonics; harmonic `k` of phase `p` has
/// phasor `a_k exp(-j k p 2 pi / 3)`. Every real component, including the dc
/// current, gets independent Gaussian spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverterVoltageSpec {
    /// `(k, a_k)` pairs; unlisted harmonics have zero mean.
    pub amplitudes: Vec<(usize, f64)>,
    pub std: f64,
    pub dc_mean: f64,
    pub dc_std: f64,
}

impl Default for ConverterVoltageSpec {
    fn default() -> Self {
        Self {
            amplitudes: vec![(1, 1.0), (5, 0.04), (7, 0.03), (11, 0.02), (13, 0.015)],
            std: 0.005,
            dc_mean: 0.005,
            dc_std: 0.005,
        }
    }
}

impl ConverterVoltageSpec {
    /// Length-`q` mean vector.
    pub fn mean_vector(&self, cfg: HarmonicConfig) -> DVector<f64> {
        let mut v = DVector::zeros(cfg.q());
        for &(k, a) in &self.amplitudes {
            if k > cfg.max_order() {
                continue;
            }
            for ph in 0..3 {
                let z = Complex64::from_polar(a, -(k as f64) * ph as f64 * TAU / 3.0);
                v[cfg.real_index(ph, k, false)] = z.re;
                v[cfg.real_index(ph, k, true)] = z.im;
            }
        }
        v[cfg.dc_index()] = self.dc_mean;
        v
    }

    /// Length-`q` mean with the dc slot replaced.
    pub fn mean_with_dc(&self, cfg: HarmonicConfig, dc: f64) -> DVector<f64> {
        let mut v = self.mean_vector(cfg);
        v[cfg.dc_index()] = dc;
        v
    }

    /// `T` samples around `mean` (`q x T`).
    pub fn sample_around<R: Rng + ?Sized>(&self, cfg: HarmonicConfig, mean: &DVector<f64>, samples: usize, rng: &mut R) -> DMatrix<f64> {
        let d = Normal::new(0.0, self.std).expect("finite std");
        let ddc = Normal::new(0.0, self.dc_std).expect("finite std");
        let p = cfg.p();
        DMatrix::from_fn(cfg.q(), samples, |i, _| {
            mean[i] + if i == p { ddc.sample(rng) } else { d.sample(rng) }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, cfg: HarmonicConfig, samples: usize, rng: &mut R) -> DMatrix<f64> {
        self.sample_around(cfg, &self.mean_vector(cfg), samples, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_means() {
        let s = VoltageSamplingSpec::three_node();
        assert_eq!(s.mean(0, 0, 1), Complex64::new(1.25, 0.625));
        assert_eq!(s.mean(0, 0, 0), Complex64::new(1.25, 0.0));
        assert!((s.mean(1, 2, 2) - Complex64::new(1.5, 0.075) / 1.1).norm() < 1e-15);
        assert!((s.mean(2, 1, 3) - Complex64::new(0.5, 1.0) / 1.21).norm() < 1e-15);
        assert!((s.std(3) - 0.005 / 1.331).abs() < 1e-15);
    }

    #[test]
    fn zero_std_gives_mean() {
        let mut s = VoltageSamplingSpec::three_node();
        s.base_std = 0.0;
        let cfg = HarmonicConfig::new(2);
        let v = sample_bus_voltages(&s, cfg, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let m = s.mean_vector(cfg);
        for c in v.column_iter() {
            assert_eq!(c, m.column(0));
        }
    }

    #[test]
    fn dc_imaginary_part_is_zero() {
        let s = VoltageSamplingSpec::three_node();
        let cfg = HarmonicConfig::new(1);
        let v = sample_bus_voltages(&s, cfg, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let layout = BusLayout::new(cfg, 3);
        for n in 0..3 {
            assert!(v.row(layout.index(0, 1, n)).iter().all(|z| z.im == 0.0));
        }
    }

    #[test]
    fn converter_mean_is_balanced() {
        let cfg = HarmonicConfig::new(13);
        let m = ConverterVoltageSpec::default().mean_vector(cfg);
        assert_eq!(m[cfg.real_index(0, 1, false)], 1.0);
        // fifth harmonic: phase b leads by 120 degrees (negative sequence)
        let b5 = Complex64::new(m[cfg.real_index(1, 5, false)], m[cfg.real_index(1, 5, true)]);
        assert!((b5 - Complex64::from_polar(0.04, TAU / 3.0)).norm() < 1e-12);
        assert_eq!(m[cfg.dc_index()], 0.005);
    }
}
