use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::batch::{MeasurementBatch, GRAM_CONDITION_LIMIT};
use crate::error::{FcmError, Result};
use crate::harmonic::{Fcm, HarmonicConfig};
use crate::linalg::refined_gram_inverse;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineSettings {
    /// Steps between full recomputations of `(V V^T)^-1`.
    pub refresh_interval: usize,
    /// A downdate with `|1 - c^T Vc c|` below this forces a refactor.
    pub downdate_tolerance: f64,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        Self {
            refresh_interval: 1000,
            downdate_tolerance: 1e-12,
        }
    }
}

/// Sliding-window least-squares FCM estimator.
///
/// Keeps the last `T` samples, `Vc = (V V^T)^-1` and `C = I V^T`. Each step
/// removes the oldest sample and adds the new one with two rank-one
/// Sherman-Morrison corrections, then sets `F = C Vc`.
#[derive(Clone, Debug)]
pub struct OnlineEstimator {
    cfg: HarmonicConfig,
    settings: OnlineSettings,
    currents: DMatrix<f64>,
    voltages: DMatrix<f64>,
    // column holding the oldest sample
    head: usize,
    vc: DMatrix<f64>,
    cross: DMatrix<f64>,
    fcm: DMatrix<f64>,
    steps: usize,
    since_refresh: usize,
    refreshes: usize,
    forced_refactors: usize,
}

fn invert_gram(voltages: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (inv, condition) = refined_gram_inverse(voltages);
    if !(condition <= GRAM_CONDITION_LIMIT) {
        return Err(FcmError::SingularGram { condition });
    }
    Ok(inv)
}

impl OnlineEstimator {
    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn settings(&self) -> OnlineSettings {
        self.settings
    }

    /// Window length `T`.
    pub fn window_len(&self) -> usize {
        self.currents.ncols()
    }

    /// Current estimate `F_t`.
    pub fn fcm(&self) -> Fcm {
        Fcm::new(self.cfg, self.fcm.clone()).expect("shape fixed at construction")
    }

    pub fn fcm_matrix(&self) -> &DMatrix<f64> {
        &self.fcm
    }

    /// Maintained `(V V^T)^-1`.
    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.vc
    }

    /// Window columns, oldest first.
    pub fn window(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.window_len();
        let order: Vec<usize> = (0..t).map(|j| (self.head + j) % t).collect();
        (self.currents.select_columns(&order), self.voltages.select_columns(&order))
    }

    /// `V V^T` recomputed from the stored window.
    pub fn window_gram(&self) -> DMatrix<f64> {
        &self.voltages * self.voltages.transpose()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn steps_since_refresh(&self) -> usize {
        self.since_refresh
    }

    /// Scheduled refreshes performed so far.
    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    /// Refactors triggered by a vanishing downdate denominator.
    pub fn forced_refactors(&self) -> usize {
        self.forced_refactors
    }

    fn refactor(&mut self) -> Result<()> {
        self.vc = invert_gram(&self.voltages)?;
        self.cross = &self.currents * self.voltages.transpose();
        self.since_refresh = 0;
        Ok(())
    }

    /// Slides the window by one sample and updates `F`.
    pub fn step(&mut self, current: &DVector<f64>, voltage: &DVector<f64>) -> Result<()> {
        if current.len() != self.cfg.p() || voltage.len() != self.cfg.q() {
            return Err(FcmError::DimensionMismatch {
                what: "online sample",
                expected: self.cfg.q(),
                found: voltage.len(),
            });
        }
        let h = self.head;
        let c = self.voltages.column(h).into_owned();
        let ci = self.currents.column(h).into_owned();

        // factor out the oldest sample
        let u = &self.vc * &c;
        let den = 1.0 - c.dot(&u);
        let mut needs_refactor = den.abs() < self.settings.downdate_tolerance;
        if !needs_refactor {
            self.vc.ger(1.0 / den, &u, &u, 1.0);
            // factor in the new one
            let w = &self.vc * voltage;
            let den = 1.0 + voltage.dot(&w);
            self.vc.ger(-1.0 / den, &w, &w, 1.0);
            self.cross.ger(-1.0, &ci, &c, 1.0);
            self.cross.ger(1.0, current, voltage, 1.0);
        }

        self.voltages.set_column(h, voltage);
        self.currents.set_column(h, current);
        self.head = (h + 1) % self.window_len();
        self.steps += 1;
        self.since_refresh += 1;

        if needs_refactor {
            self.forced_refactors += 1;
        } else if self.since_refresh >= self.settings.refresh_interval {
            self.refreshes += 1;
            needs_refactor = true;
        }
        if needs_refactor {
            self.refactor()?;
        }
        self.fcm.gemm(1.0, &self.cross, &self.vc, 0.0);
        Ok(())
    }
}

/// Starts the estimator from a preliminary batch, which fixes `T`.
pub fn online_init(preliminary: &MeasurementBatch, settings: OnlineSettings) -> Result<OnlineEstimator> {
    let cfg = preliminary.config();
    if preliminary.len() < cfg.q() {
        return Err(FcmError::Invalid(format!(
            "online estimation needs at least q = {} preliminary samples, got {}",
            cfg.q(),
            preliminary.len()
        )));
    }
    if settings.refresh_interval == 0 {
        return Err(FcmError::Invalid("refresh interval must be positive".into()));
    }
    let voltages = preliminary.voltages().clone();
    let currents = preliminary.currents().clone();
    let vc = invert_gram(&voltages)?;
    let cross = &currents * voltages.transpose();
    let fcm = &cross * &vc;
    Ok(OnlineEstimator {
        cfg,
        settings,
        currents,
        voltages,
        head: 0,
        vc,
        cross,
        fcm,
        steps: 0,
        since_refresh: 0,
        refreshes: 0,
        forced_refactors: 0,
    })
}
