//! Least-squares estimation of the harmonic bus admittance matrix.
//!
//! With the topology known, each `(k, phase)` block of `Y_H` is a symmetric
//! `N x N` matrix whose only free entries are the diagonal and the entries of
//! connected bus pairs. Blocks do not interact, so every block is an
//! independent complex least-squares problem in `N + L` unknowns.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FcmError, Result};
use crate::network::{BusLayout, HarmonicAdmittance, HarmonicNetwork};

/// Bus-level complex samples, `u x T` each, in [`BusLayout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkMeasurementBatch {
    layout: BusLayout,
    currents: DMatrix<Complex64>,
    voltages: DMatrix<Complex64>,
}

impl NetworkMeasurementBatch {
    pub fn new(layout: BusLayout, currents: DMatrix<Complex64>, voltages: DMatrix<Complex64>) -> Result<Self> {
        for (what, m) in [("bus current rows", &currents), ("bus voltage rows", &voltages)] {
            if m.nrows() != layout.len() {
                return Err(FcmError::DimensionMismatch {
                    what,
                    expected: layout.len(),
                    found: m.nrows(),
                });
            }
        }
        if currents.ncols() != voltages.ncols() {
            return Err(FcmError::DimensionMismatch {
                what: "bus sample count",
                expected: currents.ncols(),
                found: voltages.ncols(),
            });
        }
        Ok(Self {
            layout,
            currents,
            voltages,
        })
    }

    pub fn layout(&self) -> BusLayout {
        self.layout
    }

    pub fn currents(&self) -> &DMatrix<Complex64> {
        &self.currents
    }

    pub fn voltages(&self) -> &DMatrix<Complex64> {
        &self.voltages
    }

    pub fn len(&self) -> usize {
        self.currents.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of block `(k, phase)`: `N x T` currents and voltages.
    fn block(&self, k: usize, phase: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let o = self.layout.index(k, phase, 0);
        let n = self.layout.nodes;
        (
            self.currents.rows(o, n).into_owned(),
            self.voltages.rows(o, n).into_owned(),
        )
    }
}

/// Known line set over bus indices `0..nodes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    nodes: usize,
    lines: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(nodes: usize, lines: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(a, b) in &lines {
            if a >= nodes || b >= nodes {
                return Err(FcmError::Topology(format!("line ({a}, {b}) references a bus outside 0..{nodes}")));
            }
            if a == b {
                return Err(FcmError::Topology(format!("line ({a}, {b}) is a self loop")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(FcmError::Topology(format!("duplicated line between {a} and {b}")));
            }
        }
        Ok(Self { nodes, lines })
    }

    pub fn of_network(net: &HarmonicNetwork) -> Self {
        Self {
            nodes: net.node_count(),
            lines: net.line_index_pairs(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn lines(&self) -> &[(usize, usize)] {
        &self.lines
    }

    /// Unknowns per `(k, phase)` block: `N + L`.
    pub fn unknowns_per_block(&self) -> usize {
        self.nodes + self.lines.len()
    }
}

#[derive(Clone, Debug)]
pub struct AdmittanceEstimate {
    pub admittance: HarmonicAdmittance,
    /// `(k, phase)` of every block whose regression was rank deficient.
    pub rank_deficient_blocks: Vec<(usize, usize)>,
}

impl AdmittanceEstimate {
    pub fn rank_deficient(&self) -> bool {
        !self.rank_deficient_blocks.is_empty()
    }
}

/// Design matrix of one block: row `t * N + n` is bus `n` at sample `t`.
fn block_design(v: &DMatrix<Complex64>, topo: &Topology) -> DMatrix<Complex64> {
    let n = topo.nodes;
    let t = v.ncols();
    let mut a = DMatrix::zeros(n * t, topo.unknowns_per_block());
    for s in 0..t {
        for i in 0..n {
            a[(s * n + i, i)] = v[(i, s)];
        }
        for (l, &(x, y)) in topo.lines.iter().enumerate() {
            a[(s * n + x, n + l)] = v[(y, s)];
            a[(s * n + y, n + l)] = v[(x, s)];
        }
    }
    a
}

/// Minimum-norm least squares by SVD; returns the solution and its rank.
fn lstsq(a: DMatrix<Complex64>, b: &DVector<Complex64>) -> (DVector<Complex64>, usize) {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return (DVector::zeros(cols), 0);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * rows.max(cols) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd.solve(b, eps).expect("SVD computed with both factors");
    (x, rank)
}

fn fill_block(blk: &mut DMatrix<Complex64>, x: &DVector<Complex64>, topo: &Topology) {
    let n = topo.nodes;
    for i in 0..n {
        blk[(i, i)] = x[i];
    }
    for (l, &(a, b)) in topo.lines.iter().enumerate() {
        blk[(a, b)] = x[n + l];
        blk[(b, a)] = x[n + l];
    }
}

/// Estimates `Y_H` block by block. Entries outside the topology are exact
/// zeros and every block is symmetric by construction.
pub fn estimate_admittance(batch: &NetworkMeasurementBatch, topology: &Topology) -> Result<AdmittanceEstimate> {
    let layout = batch.layout();
    if layout.nodes != topology.nodes {
        return Err(FcmError::DimensionMismatch {
            what: "topology bus count",
            expected: layout.nodes,
            found: topology.nodes,
        });
    }
    let n = layout.nodes;
    let solved: Vec<(DMatrix<Complex64>, bool)> = (0..layout.blocks())
        .into_par_iter()
        .map(|b| {
            let (k, ph) = layout.block_key(b);
            let (i, v) = batch.block(k, ph);
            let a = block_design(&v, topology);
            // column-major over (n, t) matches the row order of the design
            let rhs = DVector::from_column_slice(i.as_slice());
            let (x, rank) = lstsq(a, &rhs);
            let mut blk = DMatrix::zeros(n, n);
            fill_block(&mut blk, &x, topology);
            (blk, rank < topology.unknowns_per_block())
        })
        .collect();
    let rank_deficient_blocks = solved
        .iter()
        .enumerate()
        .filter(|(_, (_, d))| *d)
        .map(|(b, _)| layout.block_key(b))
        .collect();
    let blocks = solved.into_iter().map(|(b, _)| b).collect();
    Ok(AdmittanceEstimate {
        admittance: HarmonicAdmittance::from_blocks(layout, blocks)?,
        rank_deficient_blocks,
    })
}

/// Largest problem accepted by [`estimate_admittance_kronecker`].
pub const KRONECKER_MAX_ORDER: usize = 2;
pub const KRONECKER_MAX_NODES: usize = 3;

/// Index of `(r, c)`, `r <= c`, in the column-major upper triangle of a `u x u` matrix.
fn upper_index(r: usize, c: usize) -> usize {
    c * (c + 1) / 2 + r
}

/// `Q`: `u^2 x u(u+1)/2`, maps the upper triangle to `vec(Y)` of a symmetric `Y`.
pub fn symmetric_selection(u: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(u * u, u * (u + 1) / 2);
    for c in 0..u {
        for r in 0..u {
            q[(c * u + r, upper_index(r.min(c), r.max(c)))] = 1.0;
        }
    }
    q
}

/// `T`: `u(u+1)/2 x s`, places the free parameters of every block into the
/// upper triangle. Parameters are ordered by block, then `[diagonal, lines]`.
pub fn sparsity_selection(layout: BusLayout, topology: &Topology) -> DMatrix<f64> {
    let u = layout.len();
    let per = topology.unknowns_per_block();
    let mut t = DMatrix::zeros(u * (u + 1) / 2, layout.blocks() * per);
    for b in 0..layout.blocks() {
        let (k, ph) = layout.block_key(b);
        let at = |node| layout.index(k, ph, node);
        for i in 0..topology.nodes {
            t[(upper_index(at(i), at(i)), b * per + i)] = 1.0;
        }
        for (l, &(x, y)) in topology.lines.iter().enumerate() {
            let (r, c) = (at(x).min(at(y)), at(x).max(at(y)));
            t[(upper_index(r, c), b * per + topology.nodes + l)] = 1.0;
        }
    }
    t
}

/// Literal vectorized solution `y = (X^H X)^-1 X^H vec(I)` with
/// `X = (V^T (x) I_u) Q T`. Only for small problems; used to cross-check
/// [`estimate_admittance`].
pub fn estimate_admittance_kronecker(batch: &NetworkMeasurementBatch, topology: &Topology) -> Result<HarmonicAdmittance> {
    let layout = batch.layout();
    if layout.cfg.max_order() > KRONECKER_MAX_ORDER || layout.nodes > KRONECKER_MAX_NODES {
        return Err(FcmError::Invalid(format!(
            "Kronecker reference limited to K <= {KRONECKER_MAX_ORDER} and N <= {KRONECKER_MAX_NODES}"
        )));
    }
    if layout.nodes != topology.nodes {
        return Err(FcmError::DimensionMismatch {
            what: "topology bus count",
            expected: layout.nodes,
            found: topology.nodes,
        });
    }
    let u = layout.len();
    let qt = symmetric_selection(u) * sparsity_selection(layout, topology);
    let qt = qt.map(|x| Complex64::new(x, 0.0));
    let kron = batch.voltages.transpose().kronecker(&DMatrix::<Complex64>::identity(u, u));
    let x = kron * qt;
    let xh = x.adjoint();
    let normal = &xh * &x;
    let rhs = &xh * DVector::from_column_slice(batch.currents.as_slice());
    let y = match normal.clone().lu().solve(&rhs) {
        Some(y) if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => y,
        _ => lstsq(normal, &rhs).0,
    };
    let per = topology.unknowns_per_block();
    let mut out = HarmonicAdmittance::zeros(layout);
    for b in 0..layout.blocks() {
        let (k, ph) = layout.block_key(b);
        fill_block(out.block_mut(k, ph), &y.rows(b * per, per).into_owned(), topology);
    }
    Ok(out)
}
