use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::HarmonicNetwork;
use crate::error::{FcmError, Result};
use crate::harmonic::{HarmonicConfig, PHASES};

/// Ordering of bus-level complex vectors of length `u = 3 N (K + 1)`.
///
/// Entries are grouped by harmonic order first, then phase, then node:
/// `index = k * 3N + phase * N + node`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BusLayout {
    pub cfg: HarmonicConfig,
    pub nodes: usize,
}

impl BusLayout {
    pub fn new(cfg: HarmonicConfig, nodes: usize) -> Self {
        Self { cfg, nodes }
    }

    /// `u`.
    pub fn len(&self) -> usize {
        3 * self.nodes * (self.cfg.max_order() + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, k: usize, phase: usize, node: usize) -> usize {
        k * 3 * self.nodes + phase * self.nodes + node
    }

    /// Number of `(k, phase)` blocks.
    pub fn blocks(&self) -> usize {
        3 * (self.cfg.max_order() + 1)
    }

    /// `(k, phase)` of block `b`.
    pub fn block_key(&self, b: usize) -> (usize, usize) {
        (b / 3, b % 3)
    }

    /// Bus vector from one real harmonic vector per node (`k >= 0` phasors).
    pub fn phasors(&self, per_node: &[DVector<f64>]) -> Result<DVector<Complex64>> {
        if per_node.len() != self.nodes {
            return Err(FcmError::DimensionMismatch {
                what: "bus vector node count",
                expected: self.nodes,
                found: per_node.len(),
            });
        }
        let cfg = self.cfg;
        let mut out = DVector::zeros(self.len());
        for (n, v) in per_node.iter().enumerate() {
            if v.len() < cfg.p() {
                return Err(FcmError::DimensionMismatch {
                    what: "node harmonic vector",
                    expected: cfg.p(),
                    found: v.len(),
                });
            }
            for k in 0..=cfg.max_order() {
                for ph in 0..3 {
                    out[self.index(k, ph, n)] =
                        Complex64::new(v[cfg.real_index(ph, k, false)], v[cfg.real_index(ph, k, true)]);
                }
            }
        }
        Ok(out)
    }
}

/// Block-diagonal harmonic admittance matrix `Y_H`.
///
/// Stored as one `N x N` complex block per `(k, phase)`; cross-frequency and
/// cross-phase entries are structurally zero.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicAdmittance {
    layout: BusLayout,
    blocks: Vec<DMatrix<Complex64>>,
}

impl HarmonicAdmittance {
    pub fn zeros(layout: BusLayout) -> Self {
        Self {
            layout,
            blocks: vec![DMatrix::zeros(layout.nodes, layout.nodes); layout.blocks()],
        }
    }

    pub fn from_blocks(layout: BusLayout, blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if blocks.len() != layout.blocks() {
            return Err(FcmError::DimensionMismatch {
                what: "admittance block count",
                expected: layout.blocks(),
                found: blocks.len(),
            });
        }
        if let Some(b) = blocks.iter().find(|b| b.nrows() != layout.nodes || b.ncols() != layout.nodes) {
            return Err(FcmError::DimensionMismatch {
                what: "admittance block size",
                expected: layout.nodes,
                found: b.nrows(),
            });
        }
        Ok(Self { layout, blocks })
    }

    pub fn layout(&self) -> BusLayout {
        self.layout
    }

    pub fn block(&self, k: usize, phase: usize) -> &DMatrix<Complex64> {
        &self.blocks[3 * k + phase]
    }

    pub fn block_mut(&mut self, k: usize, phase: usize) -> &mut DMatrix<Complex64> {
        &mut self.blocks[3 * k + phase]
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    /// Dense `u x u` matrix in [`BusLayout`] order.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let u = self.layout.len();
        let n = self.layout.nodes;
        let mut y = DMatrix::zeros(u, u);
        for (b, blk) in self.blocks.iter().enumerate() {
            let (k, ph) = self.layout.block_key(b);
            let o = self.layout.index(k, ph, 0);
            y.view_mut((o, o), (n, n)).copy_from(blk);
        }
        y
    }

    /// `Y_H v` for a bus-ordered vector.
    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.layout.nodes;
        let mut out = DVector::zeros(self.layout.len());
        for (b, blk) in self.blocks.iter().enumerate() {
            let (k, ph) = self.layout.block_key(b);
            let o = self.layout.index(k, ph, 0);
            let r = blk * v.rows(o, n);
            out.rows_mut(o, n).copy_from(&r);
        }
        out
    }

    /// `Y_H V` for bus-ordered sample columns.
    pub fn apply_columns(&self, v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.layout.nodes;
        let mut out = DMatrix::zeros(self.layout.len(), v.ncols());
        for (b, blk) in self.blocks.iter().enumerate() {
            let (k, ph) = self.layout.block_key(b);
            let o = self.layout.index(k, ph, 0);
            let r = blk * v.rows(o, n);
            out.rows_mut(o, n).copy_from(&r);
        }
        out
    }

    /// Squared Frobenius norm, equal to that of [`Self::to_dense`].
    pub fn norm_squared(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    /// `||Y_true - Y_est||_F^2 / ||Y_true||_F^2` with `self` as the truth.
    pub fn relative_error_of(&self, estimate: &HarmonicAdmittance) -> Result<f64> {
        if estimate.layout != self.layout {
            return Err(FcmError::DimensionMismatch {
                what: "admittance layout",
                expected: self.layout.len(),
                found: estimate.layout.len(),
            });
        }
        let den = self.norm_squared();
        if den == 0.0 {
            return Err(FcmError::ZeroDenominator);
        }
        let num: f64 = self
            .blocks
            .iter()
            .zip(&estimate.blocks)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        Ok(num / den)
    }

    /// Largest `|Y[n,m] - Y[m,n]|` over all blocks.
    pub fn symmetry_deviation(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b - b.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

/// Bus admittance matrix of the network's lines, per harmonic order and phase.
///
/// Diagonal entries sum the incident line admittances `1 / z^k`; off-diagonal
/// entries are `-1 / z^k`. Converters are not included.
pub fn assemble_harmonic_admittance(net: &HarmonicNetwork) -> Result<HarmonicAdmittance> {
    let cfg = net.config();
    let layout = BusLayout::new(cfg, net.node_count());
    let mut y = HarmonicAdmittance::zeros(layout);
    for (line, (a, b)) in net.lines().iter().zip(net.line_index_pairs()) {
        for k in 0..=cfg.max_order() {
            for ph in 0..3 {
                let z = line.impedance.z(ph, k);
                if z.norm() == 0.0 {
                    return Err(FcmError::SingularLine {
                        from: line.from,
                        to: line.to,
                        harmonic: k,
                        phase: PHASES[ph],
                    });
                }
                let yl = z.inv();
                let blk = y.block_mut(k, ph);
                blk[(a, a)] += yl;
                blk[(b, b)] += yl;
                blk[(a, b)] -= yl;
                blk[(b, a)] -= yl;
            }
        }
    }
    Ok(y)
}
