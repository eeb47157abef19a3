use nalgebra::DMatrix;

use crate::error::{FcmError, Result};
use crate::harmonic::{Fcm, HarmonicConfig};
use crate::linalg::{numerical_rank, pseudo_inverse, DenseLu};

/// Gram matrices above this condition estimate are inverted by pseudo-inverse.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Paired samples: currents `p x T` and voltages-plus-dc `q x T`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBatch {
    cfg: HarmonicConfig,
    currents: DMatrix<f64>,
    voltages: DMatrix<f64>,
    timestamps: Vec<f64>,
}

impl MeasurementBatch {
    /// Timestamps default to `0, 1, 2, ...`.
    pub fn new(cfg: HarmonicConfig, currents: DMatrix<f64>, voltages: DMatrix<f64>) -> Result<Self> {
        let t = currents.ncols();
        Self::with_timestamps(cfg, currents, voltages, (0..t).map(|i| i as f64).collect())
    }

    pub fn with_timestamps(
        cfg: HarmonicConfig,
        currents: DMatrix<f64>,
        voltages: DMatrix<f64>,
        timestamps: Vec<f64>,
    ) -> Result<Self> {
        if currents.nrows() != cfg.p() {
            return Err(FcmError::DimensionMismatch {
                what: "current rows",
                expected: cfg.p(),
                found: currents.nrows(),
            });
        }
        if voltages.nrows() != cfg.q() {
            return Err(FcmError::DimensionMismatch {
                what: "voltage rows",
                expected: cfg.q(),
                found: voltages.nrows(),
            });
        }
        if voltages.ncols() != currents.ncols() || timestamps.len() != currents.ncols() {
            return Err(FcmError::DimensionMismatch {
                what: "sample count",
                expected: currents.ncols(),
                found: if voltages.ncols() != currents.ncols() {
                    voltages.ncols()
                } else {
                    timestamps.len()
                },
            });
        }
        Ok(Self {
            cfg,
            currents,
            voltages,
            timestamps,
        })
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn currents(&self) -> &DMatrix<f64> {
        &self.currents
    }

    pub fn voltages(&self) -> &DMatrix<f64> {
        &self.voltages
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.currents.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Least-squares FCM with diagnostics.
#[derive(Clone, Debug)]
pub struct BatchEstimate {
    pub fcm: Fcm,
    /// Set when `V V^T` was too ill-conditioned and the pseudo-inverse was used.
    pub rank_deficient: bool,
    pub rank: usize,
    pub gram_condition: f64,
}

/// Running sums `G = V V^T` and `C = I V^T`, so that long measurement
/// records can be streamed in chunks.
#[derive(Clone, Debug)]
pub struct GramAccumulator {
    cfg: HarmonicConfig,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    samples: usize,
}

impl GramAccumulator {
    pub fn new(cfg: HarmonicConfig) -> Self {
        Self {
            cfg,
            gram: DMatrix::zeros(cfg.q(), cfg.q()),
            cross: DMatrix::zeros(cfg.p(), cfg.q()),
            samples: 0,
        }
    }

    /// Adds a chunk of columns.
    pub fn add(&mut self, currents: &DMatrix<f64>, voltages: &DMatrix<f64>) -> Result<()> {
        if currents.nrows() != self.cfg.p() || voltages.nrows() != self.cfg.q() || currents.ncols() != voltages.ncols() {
            return Err(FcmError::DimensionMismatch {
                what: "measurement chunk",
                expected: self.cfg.q(),
                found: voltages.nrows(),
            });
        }
        self.gram.gemm(1.0, voltages, &voltages.transpose(), 1.0);
        self.cross.gemm(1.0, currents, &voltages.transpose(), 1.0);
        self.samples += currents.ncols();
        Ok(())
    }

    pub fn add_batch(&mut self, batch: &MeasurementBatch) -> Result<()> {
        self.add(&batch.currents, &batch.voltages)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// Solves `F G = C`.
    pub fn finish(&self) -> Result<BatchEstimate> {
        let q = self.cfg.q();
        let lu = DenseLu::new(&self.gram);
        let gram_condition = lu.condition_estimate();
        let (f, rank_deficient, rank) = if gram_condition <= GRAM_CONDITION_LIMIT {
            // G is symmetric: F^T = G^-1 C^T
            (lu.solve(&self.cross.transpose()).transpose(), false, q)
        } else {
            (&self.cross * pseudo_inverse(&self.gram), true, numerical_rank(&self.gram))
        };
        Ok(BatchEstimate {
            fcm: Fcm::new(self.cfg, f)?,
            rank_deficient,
            rank,
            gram_condition,
        })
    }
}

/// `F = I V^T (V V^T)^-1`, falling back to the pseudo-inverse when `V` is
/// (numerically) rank deficient.
pub fn estimate_fcm_batch(batch: &MeasurementBatch) -> Result<BatchEstimate> {
    let mut acc = GramAccumulator::new(batch.cfg);
    acc.add_batch(batch)?;
    acc.finish()
}
