//! Synthetic converter FCMs.
//!
//! Each phase leg is modelled as an ac inductor `r + j k x` feeding a switch
//! with switching function `s_p(t)`, sharing a dc link with admittance
//! `g_dc + j h b_c`. Mixing through the switching functions couples every
//! harmonic pair, which yields dense, conjugate-symmetric FCMs.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harmonic::{ComplexHarmonicMatrix, Fcm, HarmonicConfig};

/// Switching function shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Switching {
    /// `events` uniformly random switching instants per period, each
    /// followed by an on/off state drawn with probability one half.
    Random { events: usize },
    /// Switch permanently closed: no frequency coupling.
    ConstantOn,
}

/// Parameters of the synthetic converter model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConverterSpec {
    pub r: f64,
    pub x: f64,
    pub g_dc: f64,
    pub b_c: f64,
    pub coupling: f64,
    pub switching: Switching,
    /// Rescale so that `||F_bar||_F^2 = p`.
    pub normalize: bool,
}

impl Default for SyntheticConverterSpec {
    fn default() -> Self {
        Self {
            r: 0.05,
            x: 0.3,
            g_dc: 1.0,
            b_c: 0.2,
            coupling: 0.5,
            switching: Switching::Random { events: 8 },
            normalize: true,
        }
    }
}

/// Fourier coefficients `S^h`, `h = -n..=n`, of a 0/1 function that is on
/// over the given `[a, b)` intervals of `[0, 2 pi)` (b may exceed 2 pi).
fn switching_spectrum(on: &[(f64, f64)], n: usize) -> Vec<Complex64> {
    let n = n as i64;
    (-n..=n)
        .map(|h| {
            on.iter()
                .map(|&(a, b)| {
                    if h == 0 {
                        Complex64::new((b - a) / TAU, 0.0)
                    } else {
                        let hf = h as f64;
                        let ea = Complex64::from_polar(1.0, -hf * a);
                        let eb = Complex64::from_polar(1.0, -hf * b);
                        (ea - eb) / Complex64::new(0.0, hf * TAU)
                    }
                })
                .sum()
        })
        .collect()
}

fn on_intervals<R: Rng + ?Sized>(switching: Switching, rng: &mut R) -> Vec<(f64, f64)> {
    match switching {
        Switching::ConstantOn => vec![(0.0, TAU)],
        Switching::Random { events } => {
            let events = events.max(1);
            let mut t: Vec<f64> = (0..events).map(|_| rng.random_range(0.0..TAU)).collect();
            t.sort_by(f64::total_cmp);
            let mut out = Vec::new();
            for j in 0..events {
                if rng.random_bool(0.5) {
                    let b = if j + 1 == events { t[0] + TAU } else { t[j + 1] };
                    out.push((t[j], b));
                }
            }
            out
        }
    }
}

/// Complex FCM (with dc column) of one synthetic converter.
pub fn synth_converter_complex<R: Rng + ?Sized>(
    cfg: HarmonicConfig,
    spec: &SyntheticConverterSpec,
    rng: &mut R,
) -> Result<ComplexHarmonicMatrix> {
    let kk = cfg.max_order();
    let n = cfg.orders_per_phase();
    // index i <-> order i - K; spectra cover -2K..=2K at index h + 2K
    let spectra: Vec<Vec<Complex64>> = (0..3)
        .map(|_| switching_spectrum(&on_intervals(spec.switching, rng), 2 * kk))
        .collect();
    let s = |ph: usize, h: i64| spectra[ph][(h + 2 * kk as i64) as usize];
    let order = |i: usize| i as i64 - kk as i64;
    let y = DVector::from_fn(n, |i, _| Complex64::new(spec.r, order(i) as f64 * spec.x).inv());
    let zdc = DVector::from_fn(n, |i, _| Complex64::new(spec.g_dc, order(i) as f64 * spec.b_c).inv());

    let mut a = DMatrix::zeros(3 * n, 3 * n);
    let mut f = DVector::zeros(3 * n);
    for p1 in 0..3 {
        // left[k, h] = S_p1^{k-h} z_dc^h
        let left = DMatrix::from_fn(n, n, |k, h| s(p1, order(k) - order(h)) * zdc[h]);
        for k in 0..n {
            f[p1 * n + k] = -y[k] * s(p1, order(k)) * zdc[kk];
        }
        for p2 in 0..3 {
            let right = DMatrix::from_fn(n, n, |h, m| s(p2, order(h) - order(m)));
            let mut blk = left.clone() * right * Complex64::new(spec.coupling, 0.0);
            if p1 == p2 {
                for i in 0..n {
                    blk[(i, i)] += Complex64::new(1.0, 0.0);
                }
            }
            for (k, mut row) in blk.row_iter_mut().enumerate() {
                row *= y[k];
            }
            a.view_mut((p1 * n, p2 * n), (n, n)).copy_from(&blk);
        }
    }
    ComplexHarmonicMatrix::new(cfg, a, Some(f))
}

/// Real FCM of one synthetic converter.
pub fn synth_converter_fcm<R: Rng + ?Sized>(
    cfg: HarmonicConfig,
    spec: &SyntheticConverterSpec,
    rng: &mut R,
) -> Result<Fcm> {
    let fcm = Fcm::from_complex(&synth_converter_complex(cfg, spec, rng)?)?;
    if !spec.normalize {
        return Ok(fcm);
    }
    let scale = (cfg.p() as f64).sqrt() / fcm.f_bar().norm();
    Fcm::new(cfg, fcm.into_matrix() * scale)
}

/// Passive load: `F_bar = diag(1 / (r + j k x))`, `f = 0`.
pub fn load_fcm(cfg: HarmonicConfig, r: f64, x: f64) -> Result<Fcm> {
    let y = ComplexHarmonicMatrix::diagonal(cfg, |_, k| Complex64::new(r, k as f64 * x).inv());
    let y = ComplexHarmonicMatrix::new(cfg, y.matrix().clone(), Some(DVector::zeros(cfg.complex_len())))?;
    Fcm::from_complex(&y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectrum_of_half_duty_square_wave() {
        // on over [0, pi): S^0 = 1/2, S^1 = 1/(j pi), S^2 = 0
        let s = switching_spectrum(&[(0.0, std::f64::consts::PI)], 2);
        assert!((s[2] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((s[3] - Complex64::new(0.0, -1.0 / std::f64::consts::PI)).norm() < 1e-15);
        assert!(s[4].norm() < 1e-15);
        assert!((s[1] - s[3].conj()).norm() < 1e-15);
    }

    #[test]
    fn generated_fcm_is_symmetric_and_normalized() {
        let cfg = HarmonicConfig::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = synth_converter_complex(cfg, &SyntheticConverterSpec::default(), &mut rng).unwrap();
        assert!(c.symmetry_deviation() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = synth_converter_fcm(cfg, &SyntheticConverterSpec::default(), &mut rng).unwrap();
        assert!((f.f_bar().norm_squared() - cfg.p() as f64).abs() < 1e-9);
        assert!(f.f().norm() > 0.0);
    }

    #[test]
    fn constant_switch_gives_diagonal_blocks() {
        // s = 1: only S^0 = 1, so A = y (1 + g z_dc^{k-m}...) reduces to a
        // diagonal at k = m with value y^k (1 + g z_dc^k)
        let cfg = HarmonicConfig::new(2);
        let spec = SyntheticConverterSpec {
            switching: Switching::ConstantOn,
            normalize: false,
            ..Default::default()
        };
        let c = synth_converter_complex(cfg, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let y1 = Complex64::new(spec.r, spec.x).inv();
        let z1 = Complex64::new(spec.g_dc, spec.b_c).inv();
        assert!((c.get(0, 1, 0, 1) - y1 * (1.0 + spec.coupling * z1)).norm() < 1e-12);
        assert!((c.get(0, 1, 1, 1) - y1 * spec.coupling * z1).norm() < 1e-12);
        assert!(c.get(0, 1, 0, 2).norm() < 1e-12);
    }

    #[test]
    fn load_is_block_diagonal() {
        let cfg = HarmonicConfig::new(2);
        let f = load_fcm(cfg, 1.0, 0.5).unwrap();
        assert_eq!(f.f().norm(), 0.0);
        let y = Complex64::new(1.0, 1.0).inv();
        let i = cfg.real_index(1, 2, false);
        assert!((f.matrix()[(i, i)] - y.re).abs() < 1e-15);
        assert!((f.matrix()[(i + 1, i)] - y.im).abs() < 1e-15);
    }
}
