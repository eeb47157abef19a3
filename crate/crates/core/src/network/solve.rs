//! Exact steady-state solution of a radial harmonic network.
//!
//! With the root voltage fixed, the unknowns are every converter current,
//! every line current (oriented away from the root) and every non-root bus
//! voltage. One block equation is written per converter (FCM relation), per
//! line (Ohm's law) and per non-root bus (KCL), giving a square block system
//! that is solved densely with partial pivoting.

use nalgebra::{DMatrix, DVector};

use super::HarmonicNetwork;
use crate::error::{FcmError, Result};
use crate::harmonic::{HarmonicConfig, RealHarmonicVector};
use crate::linalg::DenseLu;

/// Systems whose condition estimate exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Factored block system of a network, reusable across root voltages.
pub struct NetworkSolver<'a> {
    net: &'a HarmonicNetwork,
    lu: DenseLu,
    condition: f64,
    // block index of each non-root node's voltage, by node index
    voltage_block: Vec<Option<usize>>,
    n_conv: usize,
    n_lines: usize,
}

/// Currents and voltages of a solved network, all as length-`p` real vectors.
#[derive(Clone, Debug)]
pub struct NetworkSolution {
    pub cfg: HarmonicConfig,
    /// Bus voltages by node index (root included).
    pub node_voltages: Vec<DVector<f64>>,
    /// Currents drawn by each converter, in network converter order.
    pub converter_currents: Vec<DVector<f64>>,
    /// Line currents in network line order, flowing from the upstream bus
    /// (closer to the root) to the downstream bus.
    pub line_currents: Vec<DVector<f64>>,
    /// `(upstream, downstream)` node indices of each line.
    pub line_orientation: Vec<(usize, usize)>,
    /// Total current drawn from the root bus by everything behind it.
    pub root_current: DVector<f64>,
}

/// Worst relative residual of each equation family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    pub kcl: f64,
    pub ohm: f64,
    pub fcm: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.kcl.max(self.ohm).max(self.fcm)
    }
}

impl<'a> NetworkSolver<'a> {
    pub fn new(net: &'a HarmonicNetwork) -> Result<Self> {
        let p = net.config().p();
        let n_nodes = net.node_count();
        let root = net.root_index();
        let n_conv = net.converters().len();
        let n_lines = net.lines().len();

        let mut voltage_block = vec![None; n_nodes];
        let mut next = n_conv + n_lines;
        for (i, slot) in voltage_block.iter_mut().enumerate() {
            if i != root {
                *slot = Some(next);
                next += 1;
            }
        }
        let n_blocks = next;
        let mut a = DMatrix::zeros(n_blocks * p, n_blocks * p);
        let eye = DMatrix::<f64>::identity(p, p);
        let put = |a: &mut DMatrix<f64>, row: usize, col: usize, m: &DMatrix<f64>, sign: f64| {
            let mut v = a.view_mut((row * p, col * p), (p, p));
            v.zip_apply(m, |x, y| *x += sign * y);
        };

        // FCM relation: i_c - F_bar v_n = f i_dc
        for (ci, conv) in net.converters().iter().enumerate() {
            put(&mut a, ci, ci, &eye, 1.0);
            let n = net.node_index(conv.node).expect("validated");
            if let Some(vb) = voltage_block[n] {
                put(&mut a, ci, vb, &conv.fcm.f_bar().into_owned(), -1.0);
            }
        }
        // Ohm: v_up - v_down - Z i_l = 0
        for (li, line) in net.lines().iter().enumerate() {
            let row = n_conv + li;
            let (up, down) = orientation(net, li);
            put(&mut a, row, n_conv + li, &line.impedance.real_matrix(net.config()), -1.0);
            if let Some(vb) = voltage_block[up] {
                put(&mut a, row, vb, &eye, 1.0);
            }
            put(&mut a, row, voltage_block[down].expect("downstream bus is never the root"), &eye, -1.0);
        }
        // KCL at non-root buses: i_in - sum(converters) - sum(child lines) = 0
        for n in 0..n_nodes {
            let Some(row) = voltage_block[n] else { continue };
            let (_, parent_line) = net.parent_of(n).expect("non-root bus has a parent");
            put(&mut a, row, n_conv + parent_line, &eye, 1.0);
            for &(_, li) in net.children_of(n) {
                put(&mut a, row, n_conv + li, &eye, -1.0);
            }
            for (ci, conv) in net.converters().iter().enumerate() {
                if net.node_index(conv.node) == Some(n) {
                    put(&mut a, row, ci, &eye, -1.0);
                }
            }
        }

        let lu = DenseLu::new(&a);
        let condition = if a.nrows() == 0 { 1.0 } else { lu.condition_estimate() };
        let solver = Self {
            net,
            lu,
            condition,
            voltage_block,
            n_conv,
            n_lines,
        };
        if !(condition <= CONDITION_LIMIT) {
            let (row, _) = solver.lu.weakest_pivot();
            return Err(FcmError::Infeasible {
                block: solver.describe_block(row / p),
                condition,
            });
        }
        Ok(solver)
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    fn describe_block(&self, b: usize) -> String {
        let net = self.net;
        if b < self.n_conv {
            format!("FCM equation of converter {} at node {}", b, net.converters()[b].node)
        } else if b < self.n_conv + self.n_lines {
            let l = &net.lines()[b - self.n_conv];
            format!("Ohm equation of line ({}, {})", l.from, l.to)
        } else {
            let n = self
                .voltage_block
                .iter()
                .position(|&v| v == Some(b))
                .expect("block index in range");
            format!("KCL equation at node {}", net.node_ids()[n])
        }
    }

    /// Right-hand sides for the given root voltages (columns, `p` rows each).
    fn rhs(&self, v_roots: &DMatrix<f64>) -> DMatrix<f64> {
        let net = self.net;
        let p = net.config().p();
        let root = net.root_index();
        let t = v_roots.ncols();
        let mut b = DMatrix::zeros(self.lu.dim(), t);
        for (ci, conv) in net.converters().iter().enumerate() {
            let mut blk = b.view_mut((ci * p, 0), (p, t));
            let f = conv.fcm.f() * conv.i_dc;
            for mut col in blk.column_iter_mut() {
                col += &f;
            }
            if net.node_index(conv.node) == Some(root) {
                blk += conv.fcm.f_bar() * v_roots;
            }
        }
        for li in 0..self.n_lines {
            let (up, _) = orientation(net, li);
            if up == root {
                let mut blk = b.view_mut(((self.n_conv + li) * p, 0), (p, t));
                blk -= v_roots;
            }
        }
        b
    }

    fn check_root(&self, v: &DVector<f64>) -> Result<()> {
        let p = self.net.config().p();
        if v.len() != p {
            return Err(FcmError::DimensionMismatch {
                what: "root voltage",
                expected: p,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Full solution for one root voltage (a dc slot, if present, is ignored).
    pub fn solve(&self, v_root: &RealHarmonicVector) -> Result<NetworkSolution> {
        let net = self.net;
        let cfg = net.config();
        let p = cfg.p();
        let v_root = v_root.harmonics().into_owned();
        self.check_root(&v_root)?;
        let x = self.lu.solve(&self.rhs(&DMatrix::from_column_slice(p, 1, v_root.as_slice())));
        let block = |b: usize| x.view((b * p, 0), (p, 1)).column(0).into_owned();

        let root = net.root_index();
        let node_voltages = (0..net.node_count())
            .map(|n| match self.voltage_block[n] {
                Some(b) => block(b),
                None => v_root.clone(),
            })
            .collect();
        let converter_currents: Vec<_> = (0..self.n_conv).map(block).collect();
        let line_currents: Vec<_> = (0..self.n_lines).map(|l| block(self.n_conv + l)).collect();
        let line_orientation: Vec<_> = (0..self.n_lines).map(|l| orientation(net, l)).collect();

        let mut root_current = DVector::zeros(p);
        for (ci, conv) in net.converters().iter().enumerate() {
            if net.node_index(conv.node) == Some(root) {
                root_current += &converter_currents[ci];
            }
        }
        for &(_, li) in net.children_of(root) {
            root_current += &line_currents[li];
        }

        Ok(NetworkSolution {
            cfg,
            node_voltages,
            converter_currents,
            line_currents,
            line_orientation,
            root_current,
        })
    }

    /// Root currents for many root voltages at once (`p x T` in, `p x T` out).
    pub fn root_currents(&self, v_roots: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let net = self.net;
        let p = net.config().p();
        if v_roots.nrows() != p {
            return Err(FcmError::DimensionMismatch {
                what: "root voltage rows",
                expected: p,
                found: v_roots.nrows(),
            });
        }
        let x = self.lu.solve(&self.rhs(v_roots));
        let root = net.root_index();
        let t = v_roots.ncols();
        let mut out = DMatrix::zeros(p, t);
        for (ci, conv) in net.converters().iter().enumerate() {
            if net.node_index(conv.node) == Some(root) {
                out += x.view((ci * p, 0), (p, t));
            }
        }
        for &(_, li) in net.children_of(root) {
            out += x.view(((self.n_conv + li) * p, 0), (p, t));
        }
        Ok(out)
    }
}

fn orientation(net: &HarmonicNetwork, li: usize) -> (usize, usize) {
    let line = &net.lines()[li];
    let a = net.node_index(line.from).expect("validated");
    let b = net.node_index(line.to).expect("validated");
    if net.parent_of(b).map(|(_, l)| l) == Some(li) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Factors and solves the network for a single root voltage.
pub fn solve_harmonic_network(net: &HarmonicNetwork, v_root: &RealHarmonicVector) -> Result<NetworkSolution> {
    NetworkSolver::new(net)?.solve(v_root)
}

fn rel(residual: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        residual
    } else {
        residual / scale
    }
}

impl NetworkSolution {
    /// Worst relative KCL, Ohm and FCM residuals against `net`.
    ///
    /// KCL residuals are scaled by the largest current anywhere in the
    /// network, since a branch without converters legitimately carries zero,
    /// and by `|v| / |Z|` when the whole network carries none.
    pub fn residuals(&self, net: &HarmonicNetwork) -> Residuals {
        let root = net.root_index();
        let v_max = self.node_voltages.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let z_max = net
            .lines()
            .iter()
            .map(|l| l.impedance.real_matrix(self.cfg).norm())
            .fold(0.0, f64::max);
        let natural = if z_max > 0.0 { v_max / z_max } else { 0.0 };
        let current_scale = self
            .converter_currents
            .iter()
            .chain(&self.line_currents)
            .map(|c| c.norm())
            .fold(self.root_current.norm().max(natural), f64::max);
        let mut kcl = 0.0f64;
        for n in 0..net.node_count() {
            let mut balance = if n == root {
                self.root_current.clone()
            } else {
                let (_, pl) = net.parent_of(n).expect("non-root");
                self.line_currents[pl].clone()
            };
            for (ci, conv) in net.converters().iter().enumerate() {
                if net.node_index(conv.node) == Some(n) {
                    balance -= &self.converter_currents[ci];
                }
            }
            for &(_, li) in net.children_of(n) {
                balance -= &self.line_currents[li];
            }
            kcl = kcl.max(rel(balance.norm(), current_scale));
        }

        let mut ohm = 0.0f64;
        for (li, line) in net.lines().iter().enumerate() {
            let (up, down) = self.line_orientation[li];
            let drop = line.impedance.real_matrix(self.cfg) * &self.line_currents[li];
            let r = &self.node_voltages[up] - &self.node_voltages[down] - &drop;
            let scale = self.node_voltages[up].norm().max(self.node_voltages[down].norm()).max(drop.norm());
            ohm = ohm.max(rel(r.norm(), scale));
        }

        let mut fcm = 0.0f64;
        for (ci, conv) in net.converters().iter().enumerate() {
            let n = net.node_index(conv.node).expect("validated");
            let expect = conv.fcm.f_bar() * &self.node_voltages[n] + conv.fcm.f() * conv.i_dc;
            let r = &self.converter_currents[ci] - &expect;
            fcm = fcm.max(rel(r.norm(), expect.norm().max(self.converter_currents[ci].norm())));
        }
        Residuals { kcl, ohm, fcm }
    }

    /// Current injected from each bus into the line network (by node index).
    pub fn bus_injections(&self) -> Vec<DVector<f64>> {
        let p = self.cfg.p();
        let mut out = vec![DVector::zeros(p); self.node_voltages.len()];
        for (li, &(up, down)) in self.line_orientation.iter().enumerate() {
            out[up] += &self.line_currents[li];
            out[down] -= &self.line_currents[li];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{Fcm, LineImpedance};
    use crate::network::{Converter, HarmonicNetwork, Line};

    /// K = 0 keeps the real layout at (Re, Im) per phase, so scalar FCMs can
    /// be written as `g * I`.
    fn scalar_fcm(cfg: HarmonicConfig, g: f64, f: f64) -> Fcm {
        let p = cfg.p();
        Fcm::from_parts(cfg, &(DMatrix::identity(p, p) * g), &DVector::from_element(p, f)).unwrap()
    }

    #[test]
    fn single_converter_at_root() {
        let cfg = HarmonicConfig::new(1);
        let p = cfg.p();
        let m = DMatrix::from_fn(p, p + 1, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let fcm = Fcm::new(cfg, m).unwrap();
        let net = HarmonicNetwork::new(
            cfg,
            vec![1],
            1,
            vec![],
            vec![Converter {
                node: 1,
                fcm: fcm.clone(),
                i_dc: 0.4,
            }],
        )
        .unwrap();
        let v = RealHarmonicVector::new(cfg, DVector::from_fn(p, |i, _| i as f64 * 0.1)).unwrap();
        let sol = solve_harmonic_network(&net, &v).unwrap();
        let expect = fcm.apply(&v.with_dc(0.4)).unwrap();
        assert!((&sol.root_current - expect.as_vector()).amax() < 1e-14);
    }

    #[test]
    fn two_node_chain_matches_hand_algebra() {
        // K = 0: the real layout is (Re, Im) per phase. Take a resistive line r,
        // a downstream converter i = g v + f i_dc, root voltage v_s.
        // Ohm: v_s - v_2 = r i, FCM: i = g v_2 + f i_dc
        // => i = (g v_s + f i_dc) / (1 + r g)
        let cfg = HarmonicConfig::new(0);
        let (r, g, f, i_dc) = (0.3, 2.0, 0.7, 0.25);
        let net = HarmonicNetwork::new(
            cfg,
            vec![1, 2],
            1,
            vec![Line {
                from: 1,
                to: 2,
                impedance: LineImpedance::new([r; 3], [0.0; 3]),
            }],
            vec![Converter {
                node: 2,
                fcm: scalar_fcm(cfg, g, f),
                i_dc,
            }],
        )
        .unwrap();
        let v_s = 1.5;
        let mut v = DVector::zeros(cfg.p());
        v[0] = v_s;
        let sol = solve_harmonic_network(&net, &RealHarmonicVector::new(cfg, v).unwrap()).unwrap();
        let i = (g * v_s + f * i_dc) / (1.0 + r * g);
        let v2 = v_s - r * i;
        assert!((sol.root_current[0] - i).abs() < 1e-12);
        assert!((sol.node_voltages[1][0] - v2).abs() < 1e-12);
        // the Im slot sees only the dc term: i_im = f i_dc / (1 + r g)
        assert!((sol.root_current[1] - f * i_dc / (1.0 + r * g)).abs() < 1e-12);
    }

    #[test]
    fn multi_rhs_matches_single_solves() {
        let cfg = HarmonicConfig::new(1);
        let p = cfg.p();
        let fcm = |s: f64| {
            Fcm::new(cfg, DMatrix::from_fn(p, p + 1, |i, j| if i == j { 1.0 } else { s * ((i + 2 * j) % 5) as f64 * 0.01 })).unwrap()
        };
        let net = HarmonicNetwork::new(
            cfg,
            vec![1, 2, 3],
            1,
            vec![
                Line { from: 2, to: 1, impedance: LineImpedance::new([0.1; 3], [0.2; 3]) },
                Line { from: 2, to: 3, impedance: LineImpedance::new([0.2; 3], [0.1; 3]) },
            ],
            vec![
                Converter { node: 3, fcm: fcm(1.0), i_dc: 0.1 },
                Converter { node: 1, fcm: fcm(-1.0), i_dc: 0.2 },
            ],
        )
        .unwrap();
        let solver = NetworkSolver::new(&net).unwrap();
        let vs = DMatrix::from_fn(p, 3, |i, j| (i + j) as f64 * 0.1 - 0.5);
        let many = solver.root_currents(&vs).unwrap();
        for j in 0..3 {
            let v = RealHarmonicVector::new(cfg, vs.column(j).into_owned()).unwrap();
            let sol = solver.solve(&v).unwrap();
            assert!((&sol.root_current - many.column(j)).amax() < 1e-13);
            assert!(sol.residuals(&net).max() < 1e-12);
        }
    }

    #[test]
    fn singular_system_names_block() {
        // F_bar = -I/r makes M = Z F_bar + I = 0 on the resistive K = 0 line.
        let cfg = HarmonicConfig::new(0);
        let r = 0.5;
        let net = HarmonicNetwork::new(
            cfg,
            vec![1, 2],
            1,
            vec![Line { from: 1, to: 2, impedance: LineImpedance::new([r; 3], [0.0; 3]) }],
            vec![Converter { node: 2, fcm: scalar_fcm(cfg, -1.0 / r, 0.0), i_dc: 0.0 }],
        )
        .unwrap();
        match NetworkSolver::new(&net) {
            Err(FcmError::Infeasible { block, condition }) => {
                assert!(condition > CONDITION_LIMIT);
                assert!(!block.is_empty());
            }
            other => panic!("expected infeasible, got {:?}", other.map(|_| ())),
        }
    }
}
