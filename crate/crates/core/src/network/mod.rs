//! Radial three-phase harmonic networks.
//!
//! A network is a tree of buses joined by series line impedances. Each bus
//! may host any number of converters, each described by an [`Fcm`] and its
//! dc-side current. Loads without switching behave like converters whose
//! FCM is the load admittance and whose `f` column is zero.

mod admittance;
mod schema;
mod solve;

pub use admittance::{assemble_harmonic_admittance, BusLayout, HarmonicAdmittance};
pub use schema::{build_network, ConverterDocument, FcmSource, LineDocument, NetworkDocument};
pub use solve::{solve_harmonic_network, NetworkSolution, NetworkSolver};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{FcmError, Result};
use crate::harmonic::{Fcm, HarmonicConfig, LineImpedance};

/// Series line between two buses (external node ids).
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub impedance: LineImpedance,
}

/// A converter (or passive load) connected at a bus.
#[derive(Clone, Debug, PartialEq)]
pub struct Converter {
    pub node: usize,
    pub fcm: Fcm,
    pub i_dc: f64,
}

/// Validated radial network.
#[derive(Clone, Debug)]
pub struct HarmonicNetwork {
    cfg: HarmonicConfig,
    nodes: Vec<usize>,
    index: BTreeMap<usize, usize>,
    root: usize,
    lines: Vec<Line>,
    converters: Vec<Converter>,
    // per node index: (parent index, line index) toward the root
    parent: Vec<Option<(usize, usize)>>,
    children: Vec<Vec<(usize, usize)>>,
}

impl HarmonicNetwork {
    pub fn new(
        cfg: HarmonicConfig,
        nodes: Vec<usize>,
        root: usize,
        lines: Vec<Line>,
        converters: Vec<Converter>,
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, &id) in nodes.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(FcmError::Topology(format!("duplicated node id {id}")));
            }
        }
        if !index.contains_key(&root) {
            return Err(FcmError::Topology(format!("root {root} is not a node")));
        }
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (li, line) in lines.iter().enumerate() {
            let (Some(&a), Some(&b)) = (index.get(&line.from), index.get(&line.to)) else {
                return Err(FcmError::Topology(format!(
                    "line ({}, {}) references an unknown node",
                    line.from, line.to
                )));
            };
            if a == b {
                return Err(FcmError::Topology(format!("line ({}, {}) is a self loop", line.from, line.to)));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(FcmError::Topology(format!(
                    "duplicated line between {} and {}",
                    line.from, line.to
                )));
            }
            let imp = &line.impedance;
            if imp.r.iter().chain(imp.x.iter()).any(|v| !v.is_finite()) {
                return Err(FcmError::Invalid(format!(
                    "line ({}, {}) has a non-finite impedance",
                    line.from, line.to
                )));
            }
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }
        for c in &converters {
            if !index.contains_key(&c.node) {
                return Err(FcmError::Topology(format!("converter at unknown node {}", c.node)));
            }
            if c.fcm.config() != cfg {
                return Err(FcmError::DimensionMismatch {
                    what: "converter FCM harmonic order",
                    expected: cfg.max_order(),
                    found: c.fcm.config().max_order(),
                });
            }
        }

        // Orient from the root; a tree has N - 1 lines and reaches every node.
        let n = nodes.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut visited = vec![false; n];
        let r = index[&root];
        visited[r] = true;
        let mut queue = VecDeque::from([r]);
        while let Some(u) = queue.pop_front() {
            for &(v, li) in &adjacency[u] {
                if Some(v) == parent[u].map(|(p, _)| p) && parent[u].map(|(_, l)| l) == Some(li) {
                    continue;
                }
                if visited[v] {
                    return Err(FcmError::Topology("cycle detected: lines do not form a tree".into()));
                }
                visited[v] = true;
                parent[v] = Some((u, li));
                children[u].push((v, li));
                queue.push_back(v);
            }
        }
        if let Some(i) = visited.iter().position(|&v| !v) {
            return Err(FcmError::Topology(format!(
                "node {} is not connected to the root",
                nodes[i]
            )));
        }

        Ok(Self {
            cfg,
            nodes,
            index,
            root,
            lines,
            converters,
            parent,
            children,
        })
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    /// External node ids in insertion order.
    pub fn node_ids(&self) -> &[usize] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub(crate) fn root_index(&self) -> usize {
        self.index[&self.root]
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn converters(&self) -> &[Converter] {
        &self.converters
    }

    /// Position of node `id` in [`Self::node_ids`].
    pub fn node_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn converters_at(&self, id: usize) -> impl Iterator<Item = &Converter> {
        self.converters.iter().filter(move |c| c.node == id)
    }

    /// Parent node index and connecting line index.
    pub(crate) fn parent_of(&self, idx: usize) -> Option<(usize, usize)> {
        self.parent[idx]
    }

    /// Child node indices with connecting line indices.
    pub(crate) fn children_of(&self, idx: usize) -> &[(usize, usize)] {
        &self.children[idx]
    }

    /// Longest root-to-leaf path length in lines.
    pub fn depth(&self) -> usize {
        (0..self.nodes.len())
            .map(|mut i| {
                let mut d = 0;
                while let Some((p, _)) = self.parent[i] {
                    i = p;
                    d += 1;
                }
                d
            })
            .max()
            .unwrap_or(0)
    }

    /// Copy with every converter dc current multiplied by `factor`.
    pub fn with_scaled_dc(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.converters {
            c.i_dc *= factor;
        }
        out
    }

    /// Unordered line list as 0-based node index pairs.
    pub fn line_index_pairs(&self) -> Vec<(usize, usize)> {
        self.lines
            .iter()
            .map(|l| (self.index[&l.from], self.index[&l.to]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: usize, b: usize) -> Line {
        Line {
            from: a,
            to: b,
            impedance: LineImpedance::new([0.1; 3], [0.2; 3]),
        }
    }

    #[test]
    fn builds_chain() {
        let cfg = HarmonicConfig::new(1);
        let net = HarmonicNetwork::new(cfg, vec![1, 2, 3], 1, vec![line(1, 2), line(2, 3)], vec![]).unwrap();
        assert_eq!(net.depth(), 2);
        assert_eq!(net.children_of(0), &[(1, 0)]);
        assert_eq!(net.parent_of(2), Some((1, 1)));
    }

    #[test]
    fn rejects_cycle() {
        let cfg = HarmonicConfig::new(1);
        let err = HarmonicNetwork::new(
            cfg,
            vec![1, 2, 3],
            1,
            vec![line(1, 2), line(2, 3), line(3, 1)],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn rejects_reversed_duplicate_line() {
        let cfg = HarmonicConfig::new(1);
        let err = HarmonicNetwork::new(cfg, vec![1, 2], 1, vec![line(1, 2), line(2, 1)], vec![]).unwrap_err();
        assert!(err.to_string().contains("duplicated line"), "{err}");
    }

    #[test]
    fn rejects_duplicate_node_and_disconnected() {
        let cfg = HarmonicConfig::new(1);
        assert!(HarmonicNetwork::new(cfg, vec![1, 1], 1, vec![], vec![]).is_err());
        let err = HarmonicNetwork::new(cfg, vec![1, 2], 1, vec![], vec![]).unwrap_err();
        assert!(err.to_string().contains("not connected"));
    }

    #[test]
    fn rejects_mismatched_fcm() {
        let cfg = HarmonicConfig::new(1);
        let c = Converter {
            node: 1,
            fcm: Fcm::zeros(HarmonicConfig::new(2)),
            i_dc: 0.0,
        };
        assert!(HarmonicNetwork::new(cfg, vec![1], 1, vec![], vec![c]).is_err());
    }
}
