//! Harmonic bookkeeping and the complex/real phasor transforms.
//!
//! Every real-valued harmonic vector in this crate uses one layout:
//! phase-major (a, b, c), harmonic order ascending `0..=K` inside a phase,
//! real part before imaginary part inside a harmonic. A vector that also
//! carries the dc-side current (length `q = p + 1`) stores it last.
//!
//! Complex spectra cover orders `-K..=K` per phase and must be
//! conjugate-symmetric: `x[-k] = conj(x[k])`.

use nalgebra::{DMatrix, DVector, DVectorView, DMatrixView};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FcmError, Result};

/// Phase labels in storage order.
pub const PHASES: [char; 3] = ['a', 'b', 'c'];

/// Tolerance used when validating conjugate symmetry of user input.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Maximum harmonic order and the dimensions derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HarmonicConfig {
    max_order: usize,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_MAX_ORDER)
    }
}

impl HarmonicConfig {
    pub const DEFAULT_MAX_ORDER: usize = 50;

    pub const fn new(max_order: usize) -> Self {
        Self { max_order }
    }

    /// `K`.
    pub const fn max_order(&self) -> usize {
        self.max_order
    }

    /// Length of a real current vector, `6 (K + 1)`.
    pub const fn p(&self) -> usize {
        6 * (self.max_order + 1)
    }

    /// Length of a real voltage-plus-dc vector, `p + 1`.
    pub const fn q(&self) -> usize {
        self.p() + 1
    }

    /// Real entries per phase, `2 (K + 1)`.
    pub const fn phase_block(&self) -> usize {
        2 * (self.max_order + 1)
    }

    /// Complex orders per phase, `2K + 1`.
    pub const fn orders_per_phase(&self) -> usize {
        2 * self.max_order + 1
    }

    /// Length of a full complex spectrum over the three phases.
    pub const fn complex_len(&self) -> usize {
        3 * self.orders_per_phase()
    }

    /// Index of `Re` (`imag == false`) or `Im` of harmonic `k` of `phase`.
    pub fn real_index(&self, phase: usize, k: usize, imag: bool) -> usize {
        debug_assert!(phase < 3 && k <= self.max_order);
        phase * self.phase_block() + 2 * k + usize::from(imag)
    }

    /// Index of order `k` (may be negative) of `phase` in a complex spectrum.
    pub fn complex_index(&self, phase: usize, k: i64) -> usize {
        let kk = self.max_order as i64;
        debug_assert!(phase < 3 && (-kk..=kk).contains(&k));
        phase * self.orders_per_phase() + (k + kk) as usize
    }

    /// Index of the dc-current slot in a length-`q` vector.
    pub const fn dc_index(&self) -> usize {
        self.p()
    }
}

/// Complex harmonic phasors of the three phases over orders `-K..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    cfg: HarmonicConfig,
    values: DVector<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(cfg: HarmonicConfig, values: DVector<Complex64>) -> Result<Self> {
        if values.len() != cfg.complex_len() {
            return Err(FcmError::DimensionMismatch {
                what: "complex spectrum",
                expected: cfg.complex_len(),
                found: values.len(),
            });
        }
        Ok(Self { cfg, values })
    }

    pub fn zeros(cfg: HarmonicConfig) -> Self {
        Self {
            cfg,
            values: DVector::zeros(cfg.complex_len()),
        }
    }

    /// Builds a symmetric spectrum from the non-negative orders of each phase.
    ///
    /// `phasor(phase, k)` is queried for `k = 0..=K`; `x[0]` is taken as given
    /// and the negative orders are filled with conjugates.
    pub fn from_nonnegative(cfg: HarmonicConfig, mut phasor: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut s = Self::zeros(cfg);
        for ph in 0..3 {
            for k in 0..=cfg.max_order() {
                let x = phasor(ph, k);
                s.values[cfg.complex_index(ph, k as i64)] = x;
                if k > 0 {
                    s.values[cfg.complex_index(ph, -(k as i64))] = x.conj();
                }
            }
        }
        s
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn get(&self, phase: usize, k: i64) -> Complex64 {
        self.values[self.cfg.complex_index(phase, k)]
    }

    pub fn set(&mut self, phase: usize, k: i64, value: Complex64) {
        let i = self.cfg.complex_index(phase, k);
        self.values[i] = value;
    }

    pub fn values(&self) -> &DVector<Complex64> {
        &self.values
    }

    /// Largest `|x[-k] - conj(x[k])|` over phases and orders.
    pub fn symmetry_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for ph in 0..3 {
            for k in 0..=self.cfg.max_order() as i64 {
                let d = (self.get(ph, -k) - self.get(ph, k).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Real harmonic vector in canonical layout, of length `p` or `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealHarmonicVector {
    cfg: HarmonicConfig,
    data: DVector<f64>,
}

impl RealHarmonicVector {
    pub fn new(cfg: HarmonicConfig, data: DVector<f64>) -> Result<Self> {
        if data.len() != cfg.p() && data.len() != cfg.q() {
            return Err(FcmError::DimensionMismatch {
                what: "real harmonic vector",
                expected: cfg.p(),
                found: data.len(),
            });
        }
        Ok(Self { cfg, data })
    }

    pub fn zeros(cfg: HarmonicConfig, with_dc: bool) -> Self {
        let n = if with_dc { cfg.q() } else { cfg.p() };
        Self {
            cfg,
            data: DVector::zeros(n),
        }
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The dc-current slot, if this is a length-`q` vector.
    pub fn dc(&self) -> Option<f64> {
        (self.data.len() == self.cfg.q()).then(|| self.data[self.cfg.dc_index()])
    }

    /// The leading `p` harmonic entries.
    pub fn harmonics(&self) -> DVectorView<'_, f64> {
        self.data.rows(0, self.cfg.p())
    }

    /// Extends (or overwrites) the dc slot.
    pub fn with_dc(&self, i_dc: f64) -> Self {
        let p = self.cfg.p();
        let mut data = DVector::zeros(p + 1);
        data.rows_mut(0, p).copy_from(&self.data.rows(0, p));
        data[p] = i_dc;
        Self { cfg: self.cfg, data }
    }

    /// Drops the dc slot if present.
    pub fn without_dc(&self) -> Self {
        Self {
            cfg: self.cfg,
            data: self.harmonics().into_owned(),
        }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }
}

/// Packs a conjugate-symmetric spectrum into the canonical real layout (length `p`).
pub fn real_from_complex_vector(x: &ComplexSpectrum) -> Result<RealHarmonicVector> {
    let dev = x.symmetry_deviation();
    if dev > SYMMETRY_TOLERANCE {
        return Err(FcmError::NotConjugateSymmetric { max_deviation: dev });
    }
    let cfg = x.config();
    let mut data = DVector::zeros(cfg.p());
    for ph in 0..3 {
        for k in 0..=cfg.max_order() {
            let z = x.get(ph, k as i64);
            data[cfg.real_index(ph, k, false)] = z.re;
            data[cfg.real_index(ph, k, true)] = z.im;
        }
    }
    Ok(RealHarmonicVector { cfg, data })
}

/// Inverse of [`real_from_complex_vector`]; a dc slot, if present, is ignored.
pub fn complex_from_real_vector(v: &RealHarmonicVector) -> ComplexSpectrum {
    let cfg = v.config();
    let d = v.as_vector();
    ComplexSpectrum::from_nonnegative(cfg, |ph, k| {
        Complex64::new(d[cfg.real_index(ph, k, false)], d[cfg.real_index(ph, k, true)])
    })
}

/// Complex linear map between harmonic spectra, optionally with a dc column.
///
/// Rows and columns are indexed by [`HarmonicConfig::complex_index`]. The dc
/// column, when present, gives the response to a unit real dc-side current.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexHarmonicMatrix {
    cfg: HarmonicConfig,
    matrix: DMatrix<Complex64>,
    dc_column: Option<DVector<Complex64>>,
}

impl ComplexHarmonicMatrix {
    pub fn new(
        cfg: HarmonicConfig,
        matrix: DMatrix<Complex64>,
        dc_column: Option<DVector<Complex64>>,
    ) -> Result<Self> {
        let n = cfg.complex_len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(FcmError::DimensionMismatch {
                what: "complex harmonic matrix",
                expected: n,
                found: if matrix.nrows() != n { matrix.nrows() } else { matrix.ncols() },
            });
        }
        if let Some(c) = &dc_column {
            if c.len() != n {
                return Err(FcmError::DimensionMismatch {
                    what: "complex dc column",
                    expected: n,
                    found: c.len(),
                });
            }
        }
        Ok(Self { cfg, matrix, dc_column })
    }

    pub fn identity(cfg: HarmonicConfig) -> Self {
        let n = cfg.complex_len();
        Self {
            cfg,
            matrix: DMatrix::identity(n, n),
            dc_column: None,
        }
    }

    /// Diagonal map with entry `entry(phase, k)` at every order `k` (negative included).
    pub fn diagonal(cfg: HarmonicConfig, mut entry: impl FnMut(usize, i64) -> Complex64) -> Self {
        let mut m = Self::identity(cfg);
        let kk = cfg.max_order() as i64;
        for ph in 0..3 {
            for k in -kk..=kk {
                let i = cfg.complex_index(ph, k);
                m.matrix[(i, i)] = entry(ph, k);
            }
        }
        m
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dc_column(&self) -> Option<&DVector<Complex64>> {
        self.dc_column.as_ref()
    }

    /// Entry `(phase_out, k) <- (phase_in, m)`.
    pub fn get(&self, phase_out: usize, k: i64, phase_in: usize, m: i64) -> Complex64 {
        self.matrix[(self.cfg.complex_index(phase_out, k), self.cfg.complex_index(phase_in, m))]
    }

    /// Largest violation of `A[-k,-m] = conj(A[k,m])` (and the dc analogue).
    pub fn symmetry_deviation(&self) -> f64 {
        let kk = self.cfg.max_order() as i64;
        let mut worst = 0.0f64;
        for po in 0..3 {
            for k in -kk..=kk {
                for pi in 0..3 {
                    for m in -kk..=kk {
                        let d = (self.get(po, -k, pi, -m) - self.get(po, k, pi, m).conj()).norm();
                        worst = worst.max(d);
                    }
                }
                if let Some(c) = &self.dc_column {
                    let d = (c[self.cfg.complex_index(po, -k)] - c[self.cfg.complex_index(po, k)].conj()).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    /// Complex matrix-vector product on a spectrum (dc column not applied).
    pub fn apply(&self, x: &ComplexSpectrum) -> Result<ComplexSpectrum> {
        if x.config() != self.cfg {
            return Err(FcmError::DimensionMismatch {
                what: "spectrum harmonic order",
                expected: self.cfg.max_order(),
                found: x.config().max_order(),
            });
        }
        ComplexSpectrum::new(self.cfg, &self.matrix * x.values())
    }

    /// Matrix product `self * rhs`; the dc column becomes `self * rhs.dc + ...`.
    pub fn compose(&self, rhs: &Self) -> Self {
        let dc_column = rhs.dc_column.as_ref().map(|c| &self.matrix * c);
        Self {
            cfg: self.cfg,
            matrix: &self.matrix * &rhs.matrix,
            dc_column,
        }
    }
}

/// Real representation of a symmetry-preserving complex map.
///
/// For every conjugate-symmetric `v`,
/// `real_from_complex_vector(A v) = R * real_from_complex_vector(v)`.
/// Returns a `p x p` matrix, or `p x q` when `a` carries a dc column.
///
/// Block for output order `k >= 0` and input order `m`:
/// - `m = 0`: `[[Re A, -Im A], [Im A, Re A]]` with `A = A[k,0]`;
/// - `m >= 1`: with `S = A[k,m] + A[k,-m]` and `D = A[k,m] - A[k,-m]`,
///   `[[Re S, -Im D], [Im S, Re D]]`.
pub fn real_from_complex_matrix(a: &ComplexHarmonicMatrix) -> Result<DMatrix<f64>> {
    let dev = a.symmetry_deviation();
    if dev > SYMMETRY_TOLERANCE {
        return Err(FcmError::NotConjugateSymmetric { max_deviation: dev });
    }
    Ok(real_from_complex_matrix_unchecked(a))
}

pub(crate) fn real_from_complex_matrix_unchecked(a: &ComplexHarmonicMatrix) -> DMatrix<f64> {
    let cfg = a.config();
    let kk = cfg.max_order();
    let p = cfg.p();
    let ncols = if a.dc_column.is_some() { p + 1 } else { p };
    let mut r = DMatrix::zeros(p, ncols);
    for po in 0..3 {
        for k in 0..=kk {
            let row = cfg.real_index(po, k, false);
            for pi in 0..3 {
                let a0 = a.get(po, k as i64, pi, 0);
                let col = cfg.real_index(pi, 0, false);
                r[(row, col)] = a0.re;
                r[(row, col + 1)] = -a0.im;
                r[(row + 1, col)] = a0.im;
                r[(row + 1, col + 1)] = a0.re;
                for m in 1..=kk {
                    let pos = a.get(po, k as i64, pi, m as i64);
                    let neg = a.get(po, k as i64, pi, -(m as i64));
                    let s = pos + neg;
                    let d = pos - neg;
                    let col = cfg.real_index(pi, m, false);
                    r[(row, col)] = s.re;
                    r[(row, col + 1)] = -d.im;
                    r[(row + 1, col)] = s.im;
                    r[(row + 1, col + 1)] = d.re;
                }
            }
            if let Some(c) = &a.dc_column {
                let z = c[cfg.complex_index(po, k as i64)];
                r[(row, p)] = z.re;
                r[(row + 1, p)] = z.im;
            }
        }
    }
    r
}

/// Real-valued frequency coupling matrix `F = [F_bar | f]`, `p x q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fcm {
    cfg: HarmonicConfig,
    matrix: DMatrix<f64>,
}

impl Fcm {
    pub fn new(cfg: HarmonicConfig, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != cfg.p() {
            return Err(FcmError::DimensionMismatch {
                what: "FCM rows",
                expected: cfg.p(),
                found: matrix.nrows(),
            });
        }
        if matrix.ncols() != cfg.q() {
            return Err(FcmError::DimensionMismatch {
                what: "FCM columns",
                expected: cfg.q(),
                found: matrix.ncols(),
            });
        }
        Ok(Self { cfg, matrix })
    }

    /// Concatenates `F_bar` (`p x p`) and `f` (`p`).
    pub fn from_parts(cfg: HarmonicConfig, f_bar: &DMatrix<f64>, f: &DVector<f64>) -> Result<Self> {
        let p = cfg.p();
        if f_bar.nrows() != p || f_bar.ncols() != p {
            return Err(FcmError::DimensionMismatch {
                what: "F_bar",
                expected: p,
                found: if f_bar.nrows() != p { f_bar.nrows() } else { f_bar.ncols() },
            });
        }
        if f.len() != p {
            return Err(FcmError::DimensionMismatch {
                what: "f column",
                expected: p,
                found: f.len(),
            });
        }
        let mut matrix = DMatrix::zeros(p, p + 1);
        matrix.view_mut((0, 0), (p, p)).copy_from(f_bar);
        matrix.column_mut(p).copy_from(f);
        Ok(Self { cfg, matrix })
    }

    /// Real form of a complex FCM; `a` must carry its dc column.
    pub fn from_complex(a: &ComplexHarmonicMatrix) -> Result<Self> {
        if a.dc_column().is_none() {
            return Err(FcmError::Invalid("complex FCM needs a dc column".into()));
        }
        Self::new(a.config(), real_from_complex_matrix(a)?)
    }

    pub fn zeros(cfg: HarmonicConfig) -> Self {
        Self {
            cfg,
            matrix: DMatrix::zeros(cfg.p(), cfg.q()),
        }
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Leading `p x p` block acting on the harmonic voltages.
    pub fn f_bar(&self) -> DMatrixView<'_, f64> {
        let p = self.cfg.p();
        self.matrix.view((0, 0), (p, p))
    }

    /// Last column, the response to the dc-side current.
    pub fn f(&self) -> DVectorView<'_, f64> {
        self.matrix.column(self.cfg.p())
    }

    /// `F v` for a length-`q` vector `v = (v_bar, i_dc)`.
    pub fn apply(&self, v: &RealHarmonicVector) -> Result<RealHarmonicVector> {
        let dc = v.dc().ok_or(FcmError::DimensionMismatch {
            what: "FCM input vector",
            expected: self.cfg.q(),
            found: v.len(),
        })?;
        if v.config() != self.cfg {
            return Err(FcmError::DimensionMismatch {
                what: "FCM input harmonic order",
                expected: self.cfg.max_order(),
                found: v.config().max_order(),
            });
        }
        let out = self.f_bar() * v.harmonics() + self.f() * dc;
        RealHarmonicVector::new(self.cfg, out)
    }
}

/// Free-function form of [`Fcm::apply`].
pub fn apply_fcm(f: &Fcm, v: &RealHarmonicVector) -> Result<RealHarmonicVector> {
    f.apply(v)
}

/// Series impedance of a three-phase line: resistance and fundamental reactance per phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineImpedance {
    pub r: [f64; 3],
    pub x: [f64; 3],
}

impl LineImpedance {
    pub fn new(r: [f64; 3], x: [f64; 3]) -> Self {
        Self { r, x }
    }

    /// `z^k = r + j k x`; at `k = 0` this is `r`.
    pub fn z(&self, phase: usize, k: usize) -> Complex64 {
        Complex64::new(self.r[phase], k as f64 * self.x[phase])
    }

    /// Real `p x p` block-diagonal impedance matrix.
    pub fn real_matrix(&self, cfg: HarmonicConfig) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(cfg.p(), cfg.p());
        for ph in 0..3 {
            for k in 0..=cfg.max_order() {
                let zk = self.z(ph, k);
                let i = cfg.real_index(ph, k, false);
                z[(i, i)] = zk.re;
                z[(i, i + 1)] = -zk.im;
                z[(i + 1, i)] = zk.im;
                z[(i + 1, i + 1)] = zk.re;
            }
        }
        z
    }

    /// Complex diagonal impedance over orders `-K..=K`.
    pub fn complex_matrix(&self, cfg: HarmonicConfig) -> ComplexHarmonicMatrix {
        ComplexHarmonicMatrix::diagonal(cfg, |ph, k| {
            let z = self.z(ph, k.unsigned_abs() as usize);
            if k < 0 {
                z.conj()
            } else {
                z
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spectrum(cfg: HarmonicConfig, rng: &mut impl Rng) -> ComplexSpectrum {
        ComplexSpectrum::from_nonnegative(cfg, |_, k| {
            let re = rng.random_range(-1.0..1.0);
            let im = if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
            Complex64::new(re, im)
        })
    }

    fn random_symmetric_matrix(cfg: HarmonicConfig, rng: &mut impl Rng, with_dc: bool) -> ComplexHarmonicMatrix {
        let n = cfg.complex_len();
        let kk = cfg.max_order() as i64;
        let mut m = DMatrix::zeros(n, n);
        for po in 0..3 {
            for k in -kk..=kk {
                for pi in 0..3 {
                    for mm in -kk..=kk {
                        let i = cfg.complex_index(po, k);
                        let j = cfg.complex_index(pi, mm);
                        let (ci, cj) = (cfg.complex_index(po, -k), cfg.complex_index(pi, -mm));
                        if (i, j) > (ci, cj) {
                            continue;
                        }
                        let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        if (i, j) == (ci, cj) {
                            m[(i, j)] = Complex64::new(z.re, 0.0);
                        } else {
                            m[(i, j)] = z;
                            m[(ci, cj)] = z.conj();
                        }
                    }
                }
            }
        }
        let dc = with_dc.then(|| {
            let s = random_spectrum(cfg, rng);
            s.values().clone()
        });
        ComplexHarmonicMatrix::new(cfg, m, dc).unwrap()
    }

    #[test]
    fn dims_follow_max_order() {
        let cfg = HarmonicConfig::default();
        assert_eq!(cfg.max_order(), 50);
        assert_eq!(cfg.p(), 306);
        assert_eq!(cfg.q(), 307);
        assert_eq!(cfg.phase_block(), 102);
    }

    #[test]
    fn layout_of_phase_a_prefix() {
        let cfg = HarmonicConfig::new(1);
        let x = ComplexSpectrum::from_nonnegative(cfg, |ph, k| match (ph, k) {
            (0, 0) => Complex64::new(2.0, 0.0),
            (0, 1) => Complex64::new(1.0, 0.5),
            _ => Complex64::new(0.0, 0.0),
        });
        let v = real_from_complex_vector(&x).unwrap();
        assert_eq!(v.len(), 12);
        assert_eq!(v.as_vector().rows(0, 4).as_slice(), &[2.0, 0.0, 1.0, 0.5]);
        assert!(v.as_vector().rows(4, 8).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn zero_spectrum_maps_to_zero() {
        let cfg = HarmonicConfig::new(3);
        let v = real_from_complex_vector(&ComplexSpectrum::zeros(cfg)).unwrap();
        assert_eq!(v.len(), cfg.p());
        assert!(v.as_vector().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn rejects_asymmetric_spectrum() {
        let cfg = HarmonicConfig::new(2);
        let mut x = ComplexSpectrum::zeros(cfg);
        x.set(1, 2, Complex64::new(1.0, 1.0));
        assert!(matches!(
            real_from_complex_vector(&x),
            Err(FcmError::NotConjugateSymmetric { .. })
        ));
    }

    #[test]
    fn vector_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = HarmonicConfig::new(6);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x = random_spectrum(cfg, &mut rng);
            let v = real_from_complex_vector(&x).unwrap();
            let back = real_from_complex_vector(&complex_from_real_vector(&v)).unwrap();
            worst = worst.max((back.as_vector() - v.as_vector()).amax());
            assert!((complex_from_real_vector(&v).values() - x.values()).camax() < 1e-13);
        }
        assert!(worst < 1e-13);
    }

    #[test]
    fn identity_maps_to_identity() {
        let cfg = HarmonicConfig::new(4);
        let r = real_from_complex_matrix(&ComplexHarmonicMatrix::identity(cfg)).unwrap();
        assert_eq!(r, DMatrix::identity(cfg.p(), cfg.p()));
    }

    #[test]
    fn impedance_diagonal_maps_to_rotation_blocks() {
        let cfg = HarmonicConfig::new(5);
        let line = LineImpedance::new([0.05, 0.06, 0.04], [0.1, 0.95, 0.15]);
        let r = real_from_complex_matrix(&line.complex_matrix(cfg)).unwrap();
        assert!((&r - line.real_matrix(cfg)).amax() < 1e-15);
        // k = 0 blocks are purely resistive
        for ph in 0..3 {
            let i = cfg.real_index(ph, 0, false);
            assert_eq!(r[(i, i + 1)], 0.0);
            assert_eq!(r[(i + 1, i)], 0.0);
            assert_eq!(r[(i, i)], line.r[ph]);
        }
        let i = cfg.real_index(1, 3, false);
        assert_eq!(r[(i, i + 1)], -3.0 * 0.95);
        assert_eq!(r[(i + 1, i)], 3.0 * 0.95);
    }

    #[test]
    fn action_equivalence_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = HarmonicConfig::new(3);
        for _ in 0..200 {
            let a = random_symmetric_matrix(cfg, &mut rng, false);
            let v = random_spectrum(cfg, &mut rng);
            let lhs = real_from_complex_vector(&a.apply(&v).unwrap()).unwrap();
            let rhs = real_from_complex_matrix(&a).unwrap() * real_from_complex_vector(&v).unwrap().as_vector();
            assert!((lhs.as_vector() - rhs).amax() < 1e-11);
        }
    }

    #[test]
    fn composition_on_symmetric_subspace() {
        // R(AB) and R(A) R(B) agree on every vector with Im(x^0) = 0, which is
        // every real image of a symmetric spectrum.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = HarmonicConfig::new(2);
        for _ in 0..50 {
            let a = random_symmetric_matrix(cfg, &mut rng, false);
            let b = random_symmetric_matrix(cfg, &mut rng, false);
            let rab = real_from_complex_matrix(&a.compose(&b)).unwrap();
            let ra_rb = real_from_complex_matrix(&a).unwrap() * real_from_complex_matrix(&b).unwrap();
            for ph in 0..3 {
                for k in 0..=cfg.max_order() {
                    for imag in [false, true] {
                        if k == 0 && imag {
                            continue;
                        }
                        let j = cfg.real_index(ph, k, imag);
                        assert!((rab.column(j) - ra_rb.column(j)).amax() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let cfg = HarmonicConfig::new(1);
        let mut m = DMatrix::identity(cfg.complex_len(), cfg.complex_len());
        m[(0, 1)] = Complex64::new(0.3, 0.2);
        let a = ComplexHarmonicMatrix::new(cfg, m, None).unwrap();
        assert!(real_from_complex_matrix(&a).is_err());
    }

    #[test]
    fn dc_column_lands_in_last_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = HarmonicConfig::new(2);
        let a = random_symmetric_matrix(cfg, &mut rng, true);
        let f = Fcm::from_complex(&a).unwrap();
        let v = random_spectrum(cfg, &mut rng);
        let i_dc = 0.3;
        let mut expect = a.apply(&v).unwrap().values().clone();
        expect += a.dc_column().unwrap() * Complex64::new(i_dc, 0.0);
        let expect = real_from_complex_vector(&ComplexSpectrum::new(cfg, expect).unwrap()).unwrap();
        let got = f.apply(&real_from_complex_vector(&v).unwrap().with_dc(i_dc)).unwrap();
        assert!((got.as_vector() - expect.as_vector()).amax() < 1e-12);
    }

    #[test]
    fn apply_fcm_identity_and_dc_only() {
        let cfg = HarmonicConfig::new(2);
        let p = cfg.p();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v_bar = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        let v = RealHarmonicVector::new(cfg, v_bar.clone()).unwrap().with_dc(0.7);

        let ident = Fcm::from_parts(cfg, &DMatrix::identity(p, p), &DVector::zeros(p)).unwrap();
        assert_eq!(apply_fcm(&ident, &v).unwrap().as_vector(), &v_bar);

        let f = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        let dc_only = Fcm::from_parts(cfg, &DMatrix::zeros(p, p), &f).unwrap();
        let v = v.with_dc(0.05);
        let out = apply_fcm(&dc_only, &v).unwrap();
        assert!((out.as_vector() - &f * 0.05).amax() < 1e-15);
    }

    #[test]
    fn apply_fcm_matches_naive_loop() {
        let cfg = HarmonicConfig::new(3);
        let (p, q) = (cfg.p(), cfg.q());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
        let f = Fcm::new(cfg, m.clone()).unwrap();
        let v = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
        let out = f.apply(&RealHarmonicVector::new(cfg, v.clone()).unwrap()).unwrap();
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..q {
                acc += m[(i, j)] * v[j];
            }
            assert!((out.as_vector()[i] - acc).abs() < 1e-14);
        }
    }

    #[test]
    fn apply_fcm_needs_dc_slot() {
        let cfg = HarmonicConfig::new(1);
        let f = Fcm::zeros(cfg);
        let v = RealHarmonicVector::zeros(cfg, false);
        assert!(matches!(f.apply(&v), Err(FcmError::DimensionMismatch { .. })));
    }

    #[test]
    fn fcm_partition_is_exact() {
        let cfg = HarmonicConfig::new(1);
        let (p, q) = (cfg.p(), cfg.q());
        let m = DMatrix::from_fn(p, q, |i, j| (i * q + j) as f64);
        let f = Fcm::new(cfg, m.clone()).unwrap();
        let rebuilt = Fcm::from_parts(cfg, &f.f_bar().into_owned(), &f.f().into_owned()).unwrap();
        assert_eq!(rebuilt.matrix(), &m);
    }
}
