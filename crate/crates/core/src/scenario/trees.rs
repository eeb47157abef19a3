use rand::Rng;

use super::synth::{synth_converter_fcm, SyntheticConverterSpec};
use crate::error::Result;
use crate::harmonic::{HarmonicConfig, LineImpedance};
use crate::network::{Converter, HarmonicNetwork, Line};

/// Random radial network with synthetic converters.
///
/// Node `1` is the root. Every other node attaches to a uniformly chosen
/// earlier node whose depth is below `max_depth`. Each node gets zero to two
/// converters; lines draw `r` in `[0.02, 0.1]` and `x` in `[0.05, 0.3]`.
pub fn random_tree_network<R: Rng + ?Sized>(
    cfg: HarmonicConfig,
    max_nodes: usize,
    max_depth: usize,
    spec: &SyntheticConverterSpec,
    rng: &mut R,
) -> Result<HarmonicNetwork> {
    let n = rng.random_range(1..=max_nodes.max(1));
    let mut depth = vec![0usize];
    let mut lines = Vec::new();
    for id in 1..n {
        let candidates: Vec<usize> = (0..id).filter(|&i| depth[i] < max_depth).collect();
        let parent = candidates[rng.random_range(0..candidates.len())];
        depth.push(depth[parent] + 1);
        let imp = LineImpedance::new(
            [0.0; 3].map(|_| rng.random_range(0.02..0.1)),
            [0.0; 3].map(|_| rng.random_range(0.05..0.3)),
        );
        lines.push(Line {
            from: parent + 1,
            to: id + 1,
            impedance: imp,
        });
    }
    let mut converters = Vec::new();
    for id in 0..n {
        for _ in 0..rng.random_range(0..=2) {
            converters.push(Converter {
                node: id + 1,
                fcm: synth_converter_fcm(cfg, spec, rng)?,
                i_dc: rng.random_range(0.0..0.1),
            });
        }
    }
    HarmonicNetwork::new(cfg, (1..=n).collect(), 1, lines, converters)
}
