//! Reduction of radial subtrees to a single virtual FCM.
//!
//! Converters sharing a bus add up. A bus whose children are all leaves
//! absorbs them: with `M = Z F_bar_n + I` for the line to leaf `n`,
//!
//! ```text
//! F_bar_S = sum_p F_bar_p + sum_n F_bar_n M^-1
//! f_S     = sum_p f_p i_dc,p + sum_n (f_n - F_bar_n M^-1 Z f_n) i_dc,n
//! ```
//!
//! The resulting FCM takes the constant 1 in its dc slot. Repeating both
//! steps from the leaves up collapses any tree into its root.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FcmError, Result};
use crate::harmonic::{Fcm, HarmonicConfig};
use crate::linalg::DenseLu;
use crate::network::HarmonicNetwork;

/// Largest accepted condition estimate of `M`.
pub const INVERTIBILITY_LIMIT: f64 = 1e12;

/// A leaf hanging off the bus being reduced.
#[derive(Clone, Debug)]
pub struct Leaf {
    /// Node id, used in error messages and reports.
    pub id: usize,
    /// Real `p x p` line impedance between the bus and the leaf.
    pub impedance: DMatrix<f64>,
    pub fcm: Fcm,
    pub i_dc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeafCondition {
    pub leaf: usize,
    pub parent: usize,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ReductionStep {
    /// Converters at `node` merged into one.
    MergeParallel { node: usize, count: usize },
    /// `leaves` folded into their parent `node`.
    ReduceDepthOne { node: usize, leaves: Vec<usize> },
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    #[serde(skip)]
    pub fcm: Fcm,
    pub leaf_conditions: Vec<LeafCondition>,
    pub trace: Vec<ReductionStep>,
}

/// Processing order of candidate subtrees, leaves and converters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReductionOrder {
    #[default]
    Forward,
    Reverse,
}

impl ReductionOrder {
    fn arrange<T>(self, mut v: Vec<T>) -> Vec<T> {
        if self == ReductionOrder::Reverse {
            v.reverse();
        }
        v
    }
}

fn check_config(cfg: HarmonicConfig, fcm: &Fcm) -> Result<()> {
    if fcm.config() != cfg {
        return Err(FcmError::DimensionMismatch {
            what: "FCM harmonic order",
            expected: cfg.max_order(),
            found: fcm.config().max_order(),
        });
    }
    Ok(())
}

/// Sums parallel converters: `(sum F_bar_p | sum f_p i_dc,p)`, driven by a dc slot of 1.
pub fn merge_parallel_converters(converters: &[(Fcm, f64)]) -> Result<Fcm> {
    let Some((first, _)) = converters.first() else {
        return Err(FcmError::Invalid("cannot merge an empty converter list".into()));
    };
    let cfg = first.config();
    let p = cfg.p();
    let mut m = DMatrix::zeros(p, cfg.q());
    for (fcm, i_dc) in converters {
        check_config(cfg, fcm)?;
        let mut fb = m.view_mut((0, 0), (p, p));
        fb += fcm.f_bar();
        m.column_mut(p).axpy(*i_dc, &fcm.f(), 1.0);
    }
    Fcm::new(cfg, m)
}

/// Contribution `(F_bar_n M^-1, (f_n - F_bar_n M^-1 Z f_n) i_dc)` of one leaf.
fn leaf_terms(leaf: &Leaf, parent: usize) -> Result<(DMatrix<f64>, nalgebra::DVector<f64>, LeafCondition)> {
    let p = leaf.fcm.config().p();
    if leaf.impedance.shape() != (p, p) {
        return Err(FcmError::DimensionMismatch {
            what: "leaf impedance",
            expected: p,
            found: leaf.impedance.nrows(),
        });
    }
    let f_bar = leaf.fcm.f_bar();
    let m = &leaf.impedance * f_bar + DMatrix::identity(p, p);
    let lu = DenseLu::new(&m);
    let condition = lu.condition_estimate();
    if !(condition < INVERTIBILITY_LIMIT) {
        return Err(FcmError::NotInvertible {
            leaf: leaf.id,
            condition,
        });
    }
    // X M = F_bar  <=>  M^T X^T = F_bar^T
    let x = lu.solve_transpose(&f_bar.transpose()).transpose();
    let f = leaf.fcm.f();
    let dc = (f - &x * (&leaf.impedance * f)) * leaf.i_dc;
    Ok((
        x,
        dc,
        LeafCondition {
            leaf: leaf.id,
            parent,
            condition,
        },
    ))
}

/// Folds a bus with its leaf children and local converters into one FCM.
pub fn reduce_depth_one(
    cfg: HarmonicConfig,
    root: usize,
    leaves: &[Leaf],
    root_converters: &[(Fcm, f64)],
) -> Result<ReductionReport> {
    for (fcm, _) in root_converters {
        check_config(cfg, fcm)?;
    }
    for l in leaves {
        check_config(cfg, &l.fcm)?;
    }
    let mut m = if root_converters.is_empty() {
        Fcm::zeros(cfg)
    } else {
        merge_parallel_converters(root_converters)?
    }
    .into_matrix();
    let terms = leaves
        .par_iter()
        .map(|l| leaf_terms(l, root))
        .collect::<Result<Vec<_>>>()?;
    let p = cfg.p();
    let mut leaf_conditions = Vec::with_capacity(terms.len());
    for (x, dc, cond) in terms {
        let mut fb = m.view_mut((0, 0), (p, p));
        fb += &x;
        let mut fc = m.column_mut(p);
        fc += &dc;
        leaf_conditions.push(cond);
    }
    Ok(ReductionReport {
        fcm: Fcm::new(cfg, m)?,
        leaf_conditions,
        trace: vec![ReductionStep::ReduceDepthOne {
            node: root,
            leaves: leaves.iter().map(|l| l.id).collect(),
        }],
    })
}

/// Reduces the whole tree to a virtual FCM seen from the root.
pub fn reduce_tree(net: &HarmonicNetwork) -> Result<ReductionReport> {
    reduce_tree_ordered(net, ReductionOrder::Forward)
}

/// [`reduce_tree`] with an explicit processing order.
pub fn reduce_tree_ordered(net: &HarmonicNetwork, order: ReductionOrder) -> Result<ReductionReport> {
    let cfg = net.config();
    let n = net.node_count();
    let ids = net.node_ids();
    let mut trace = Vec::new();
    let mut leaf_conditions = Vec::new();

    // Step 1: one merged FCM (dc slot 1) per bus.
    let mut node_fcm: Vec<Fcm> = Vec::with_capacity(n);
    for &id in ids {
        let local: Vec<(Fcm, f64)> = net.converters_at(id).map(|c| (c.fcm.clone(), c.i_dc)).collect();
        let local = order.arrange(local);
        if local.is_empty() {
            node_fcm.push(Fcm::zeros(cfg));
        } else {
            if local.len() > 1 {
                trace.push(ReductionStep::MergeParallel {
                    node: id,
                    count: local.len(),
                });
            }
            node_fcm.push(merge_parallel_converters(&local)?);
        }
    }

    let mut children: Vec<Vec<(usize, usize)>> = (0..n).map(|i| net.children_of(i).to_vec()).collect();
    let root = net.root_index();
    while !children[root].is_empty() {
        // Step 2: every bus whose children are all leaves.
        let ready: Vec<usize> = (0..n)
            .filter(|&i| !children[i].is_empty() && children[i].iter().all(|&(c, _)| children[c].is_empty()))
            .collect();
        for i in order.arrange(ready) {
            let leaves: Vec<Leaf> = order
                .arrange(children[i].clone())
                .into_iter()
                .map(|(c, li)| Leaf {
                    id: ids[c],
                    impedance: net.lines()[li].impedance.real_matrix(cfg),
                    fcm: node_fcm[c].clone(),
                    i_dc: 1.0,
                })
                .collect();
            let local = [(node_fcm[i].clone(), 1.0)];
            let report = reduce_depth_one(cfg, ids[i], &leaves, &local)?;
            node_fcm[i] = report.fcm;
            leaf_conditions.extend(report.leaf_conditions);
            trace.extend(report.trace);
            // Step 3: the absorbed leaves disappear.
            children[i].clear();
        }
    }
    Ok(ReductionReport {
        fcm: node_fcm.swap_remove(root),
        leaf_conditions,
        trace,
    })
}
