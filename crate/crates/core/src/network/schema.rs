//! JSON network documents.
//!
//! ```json
//! {
//!   "harmonics": 50,
//!   "root": 1,
//!   "nodes": [1, 2],
//!   "lines": [{ "from": 1, "to": 2, "r": [0.05, 0.06, 0.04], "x": [0.1, 0.95, 0.15] }],
//!   "converters": [
//!     { "node": 2, "i_dc": 0.025, "fcm": { "kind": "synthetic", "seed": 3 } },
//!     { "node": 1, "i_dc": 0.0, "fcm": { "kind": "file", "path": "f1.csv" } },
//!     { "node": 1, "i_dc": 0.0, "fcm": { "kind": "load", "r": 10.0, "x": 1.0 } }
//!   ]
//! }
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Converter, HarmonicNetwork, Line};
use crate::error::{FcmError, Result};
use crate::harmonic::{HarmonicConfig, LineImpedance};
use crate::io::read_fcm_file;
use crate::scenario::synth::{load_fcm, synth_converter_fcm, SyntheticConverterSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    /// Maximum harmonic order; callers may override it.
    #[serde(default)]
    pub harmonics: Option<usize>,
    pub root: usize,
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub lines: Vec<LineDocument>,
    #[serde(default)]
    pub converters: Vec<ConverterDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDocument {
    pub from: usize,
    pub to: usize,
    pub r: Option<[f64; 3]>,
    pub x: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterDocument {
    pub node: usize,
    pub i_dc: f64,
    pub fcm: FcmSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FcmSource {
    /// Matrix file, relative paths resolved against the document directory.
    File { path: PathBuf },
    /// Synthetic converter drawn with the given seed.
    Synthetic {
        seed: u64,
        #[serde(default)]
        spec: SyntheticConverterSpec,
    },
    /// Passive series r-x load.
    Load { r: f64, x: f64 },
}

impl NetworkDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Harmonic order from the document, else `fallback`.
    pub fn config_or(&self, fallback: HarmonicConfig) -> HarmonicConfig {
        self.harmonics.map(HarmonicConfig::new).unwrap_or(fallback)
    }
}

/// Materializes a network; `base_dir` resolves relative FCM file paths.
pub fn build_network(doc: &NetworkDocument, cfg: HarmonicConfig, base_dir: &Path) -> Result<HarmonicNetwork> {
    let lines = doc
        .lines
        .iter()
        .map(|l| {
            let (Some(r), Some(x)) = (l.r, l.x) else {
                return Err(FcmError::Invalid(format!("line ({}, {}) is missing its impedance", l.from, l.to)));
            };
            Ok(Line {
                from: l.from,
                to: l.to,
                impedance: LineImpedance::new(r, x),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let converters = doc
        .converters
        .iter()
        .map(|c| {
            let fcm = match &c.fcm {
                FcmSource::File { path } => {
                    let fcm = read_fcm_file(&base_dir.join(path))?;
                    if fcm.config() != cfg {
                        return Err(FcmError::DimensionMismatch {
                            what: "FCM file harmonic order",
                            expected: cfg.max_order(),
                            found: fcm.config().max_order(),
                        });
                    }
                    fcm
                }
                FcmSource::Synthetic { seed, spec } => synth_converter_fcm(cfg, spec, &mut ChaCha8Rng::seed_from_u64(*seed))?,
                FcmSource::Load { r, x } => load_fcm(cfg, *r, *x)?,
            };
            Ok(Converter {
                node: c.node,
                fcm,
                i_dc: c.i_dc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    HarmonicNetwork::new(cfg, doc.nodes.clone(), doc.root, lines, converters)
}
