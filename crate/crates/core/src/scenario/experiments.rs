//! Monte-Carlo experiments: admittance sweeps, batch and online FCM
//! estimation, and reduction validation on the three-node network.
//!
//! Every run draws from its own ChaCha stream derived from the master seed,
//! the experiment and the run index, so results do not depend on thread
//! scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{mean_complex_magnitude, mean_phasor_magnitude, perturb, perturb_complex};
use super::synth::{synth_converter_fcm, SyntheticConverterSpec};
use super::voltage::{sample_bus_voltages, ConverterVoltageSpec, VoltageSamplingSpec};
use crate::error::{FcmError, Result};
use crate::estimation::{
    estimate_admittance, estimate_fcm_batch, online_init, GramAccumulator, MeasurementBatch, NetworkMeasurementBatch,
    OnlineSettings, Topology,
};
use crate::harmonic::{Fcm, HarmonicConfig, LineImpedance};
use crate::linalg::refined_gram_inverse;
use crate::metrics::{relative_error, relative_vector_error, ErrorMode};
use crate::network::{assemble_harmonic_admittance, BusLayout, Converter, HarmonicNetwork, Line, NetworkSolver};
use crate::reduction::reduce_tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    AdmittanceSweep,
    FcmBatchSweep,
    FcmOnline,
    ReductionValidation,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 4] = [
        ExperimentName::AdmittanceSweep,
        ExperimentName::FcmBatchSweep,
        ExperimentName::FcmOnline,
        ExperimentName::ReductionValidation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::AdmittanceSweep => "admittance_sweep",
            ExperimentName::FcmBatchSweep => "fcm_batch_sweep",
            ExperimentName::FcmOnline => "fcm_online",
            ExperimentName::ReductionValidation => "reduction_validation",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ExperimentName::AdmittanceSweep => 1,
            ExperimentName::FcmBatchSweep => 2,
            ExperimentName::FcmOnline => 3,
            ExperimentName::ReductionValidation => 4,
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = FcmError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s.replace('-', "_"))
            .ok_or_else(|| FcmError::UnknownExperiment(s.to_string()))
    }
}

/// Independent stream for `(experiment, point, run)`.
fn run_rng(seed: u64, experiment: ExperimentName, point: u64, run: u64) -> ChaCha8Rng {
    let mixed = seed ^ experiment.tag().wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ point.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(run);
    rng
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Lines of the three-node network.
pub fn three_node_lines() -> Vec<Line> {
    vec![
        Line {
            from: 1,
            to: 2,
            impedance: LineImpedance::new([0.05, 0.06, 0.04], [0.1, 0.95, 0.15]),
        },
        Line {
            from: 1,
            to: 3,
            impedance: LineImpedance::new([0.075, 0.08, 0.07], [0.15, 0.145, 0.155]),
        },
    ]
}

/// Converter placement `(node, i_dc)` of the three-node network.
pub const THREE_NODE_CONVERTERS: [(usize, f64); 4] = [(1, 0.05), (2, 0.025), (3, 0.075), (1, 0.06)];

// ---------------------------------------------------------------------------
// admittance sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmittanceSweepConfig {
    pub runs: usize,
    /// Noise levels swept at `noise_samples` samples.
    pub noise_levels: Vec<f64>,
    pub noise_samples: usize,
    /// Sample counts swept at `sample_noise`.
    pub sample_sizes: Vec<usize>,
    pub sample_noise: f64,
    pub voltage: VoltageSamplingSpec,
}

impl Default for AdmittanceSweepConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            noise_levels: vec![0.001, 0.005, 0.01, 0.02],
            noise_samples: 10,
            sample_sizes: vec![10, 100, 1000],
            sample_noise: 0.01,
            voltage: VoltageSamplingSpec::three_node(),
        }
    }
}

/// Converter-free three-node network.
pub fn three_node_line_network(cfg: HarmonicConfig) -> Result<HarmonicNetwork> {
    HarmonicNetwork::new(cfg, vec![1, 2, 3], 1, three_node_lines(), vec![])
}

/// Relative error of one admittance estimate on the three-node network.
pub fn admittance_trial(
    cfg: HarmonicConfig,
    voltage: &VoltageSamplingSpec,
    samples: usize,
    relative_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let net = three_node_line_network(cfg)?;
    let truth = assemble_harmonic_admittance(&net)?;
    let layout = BusLayout::new(cfg, net.node_count());
    let mean_v = voltage.mean_vector(cfg);
    let ref_v = mean_complex_magnitude(&mean_v);
    let ref_i = mean_complex_magnitude(&truth.apply(&mean_v));
    let mut v = sample_bus_voltages(voltage, cfg, samples, rng)?;
    let mut i = truth.apply_columns(&v);
    perturb_complex(&mut i, relative_std, ref_i, rng);
    perturb_complex(&mut v, relative_std, ref_v, rng);
    let batch = NetworkMeasurementBatch::new(layout, i, v)?;
    let est = estimate_admittance(&batch, &Topology::of_network(&net))?;
    truth.relative_error_of(&est.admittance)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub noise: f64,
    pub samples: usize,
    pub mean_error: f64,
    pub errors: Vec<f64>,
}

fn admittance_point(
    seed: u64,
    cfg: HarmonicConfig,
    c: &AdmittanceSweepConfig,
    point: u64,
    samples: usize,
    noise: f64,
) -> Result<SweepPoint> {
    let errors = (0..c.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, ExperimentName::AdmittanceSweep, point, run as u64);
            admittance_trial(cfg, &c.voltage, samples, noise, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepPoint {
        noise,
        samples,
        mean_error: mean(&errors),
        errors,
    })
}

/// `(error vs noise at fixed T, error vs T at fixed noise)`.
pub fn admittance_sweep(
    seed: u64,
    cfg: HarmonicConfig,
    c: &AdmittanceSweepConfig,
) -> Result<(Vec<SweepPoint>, Vec<SweepPoint>)> {
    let by_noise = c
        .noise_levels
        .iter()
        .enumerate()
        .map(|(j, &s)| admittance_point(seed, cfg, c, j as u64, c.noise_samples, s))
        .collect::<Result<Vec<_>>>()?;
    let by_samples = c
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(j, &t)| admittance_point(seed, cfg, c, 1000 + j as u64, t, c.sample_noise))
        .collect::<Result<Vec<_>>>()?;
    Ok((by_noise, by_samples))
}

// ---------------------------------------------------------------------------
// batch FCM estimation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchSweepConfig {
    pub runs: usize,
    pub noise_levels: Vec<f64>,
    /// Sample counts; defaults to `q + 1, 2q, 3q, 4q, 5q`.
    pub samples: Option<Vec<usize>>,
    pub converter: SyntheticConverterSpec,
    pub voltage: ConverterVoltageSpec,
    /// Columns generated at a time for long records.
    pub chunk: usize,
}

impl Default for BatchSweepConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            noise_levels: vec![0.0, 0.001, 0.01],
            samples: None,
            converter: SyntheticConverterSpec::default(),
            voltage: ConverterVoltageSpec::default(),
            chunk: 4096,
        }
    }
}

impl BatchSweepConfig {
    pub fn sample_grid(&self, cfg: HarmonicConfig) -> Vec<usize> {
        let q = cfg.q();
        self.samples.clone().unwrap_or_else(|| vec![q + 1, 2 * q, 3 * q, 4 * q, 5 * q])
    }
}

/// Noisy measurements of `truth` (`p x T`, `q x T`) streamed into a Gram accumulator.
#[allow(clippy::too_many_arguments)]
fn accumulate_converter_samples(
    acc: &mut GramAccumulator,
    truth: &Fcm,
    voltage: &ConverterVoltageSpec,
    mean_v: &DVector<f64>,
    samples: usize,
    relative_std: f64,
    chunk: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let cfg = truth.config();
    let ref_v = mean_phasor_magnitude(cfg, mean_v);
    let ref_i = mean_phasor_magnitude(cfg, &(truth.matrix() * mean_v));
    let mut left = samples;
    while left > 0 {
        let n = left.min(chunk.max(1));
        let mut v = voltage.sample_around(cfg, mean_v, n, rng);
        let mut i = truth.matrix() * &v;
        perturb(&mut i, relative_std, ref_i, rng);
        perturb(&mut v, relative_std, ref_v, rng);
        acc.add(&i, &v)?;
        left -= n;
    }
    Ok(())
}

/// Relative error of one batch estimate of a fresh synthetic converter.
pub fn batch_trial(
    cfg: HarmonicConfig,
    c: &BatchSweepConfig,
    samples: usize,
    relative_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let truth = synth_converter_fcm(cfg, &c.converter, rng)?;
    let mean_v = c.voltage.mean_vector(cfg);
    let mut acc = GramAccumulator::new(cfg);
    accumulate_converter_samples(&mut acc, &truth, &c.voltage, &mean_v, samples, relative_std, c.chunk, rng)?;
    relative_error(acc.finish()?.fcm.matrix(), truth.matrix(), ErrorMode::SquaredFrobenius)
}

/// Mean error at one `(noise, T)` point.
pub fn batch_point(seed: u64, cfg: HarmonicConfig, c: &BatchSweepConfig, samples: usize, noise: f64) -> Result<SweepPoint> {
    // the point id depends on the values so that sub-sweeps reuse streams
    let point = (samples as u64) << 20 ^ (noise * 1e9).round() as u64;
    let errors = (0..c.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, ExperimentName::FcmBatchSweep, point, run as u64);
            batch_trial(cfg, c, samples, noise, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepPoint {
        noise,
        samples,
        mean_error: mean(&errors),
        errors,
    })
}

pub fn batch_sweep(seed: u64, cfg: HarmonicConfig, c: &BatchSweepConfig) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &noise in &c.noise_levels {
        for t in c.sample_grid(cfg) {
            out.push(batch_point(seed, cfg, c, t, noise)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// online FCM estimation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineExperimentConfig {
    pub steps: usize,
    pub configurations: usize,
    /// Window length as a multiple of `q`.
    pub window_factor: usize,
    pub noise: f64,
    pub settings: OnlineSettings,
    /// Steps between checks of the maintained inverse against a fresh one.
    pub checkpoint_every: usize,
    pub converter: SyntheticConverterSpec,
    pub voltage: ConverterVoltageSpec,
}

impl Default for OnlineExperimentConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            configurations: 4,
            window_factor: 2,
            noise: 0.001,
            settings: OnlineSettings::default(),
            checkpoint_every: 100,
            converter: SyntheticConverterSpec::default(),
            voltage: ConverterVoltageSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnlineTrace {
    pub window: usize,
    /// Step at which each configuration becomes active.
    pub change_steps: Vec<usize>,
    pub configuration: Vec<usize>,
    pub error: Vec<f64>,
    /// `(step, max |Vc - (V V^T)^-1|, max |Vc|)` at each checkpoint.
    pub checkpoints: Vec<(usize, f64, f64)>,
    pub refreshes: usize,
    pub forced_refactors: usize,
}

impl OnlineTrace {
    /// Largest error over steps at least `window` steps after the latest change.
    pub fn settled_max_error(&self) -> f64 {
        self.error
            .iter()
            .enumerate()
            .filter(|&(t, _)| {
                let last = self.change_steps.iter().rev().find(|&&c| c <= t).copied().unwrap_or(0);
                last == 0 || t >= last + self.window
            })
            .map(|(_, &e)| e)
            .fold(0.0, f64::max)
    }

    pub fn max_checkpoint_deviation(&self) -> f64 {
        self.checkpoints.iter().map(|&(_, d, _)| d).fold(0.0, f64::max)
    }
}

pub fn online_run(seed: u64, cfg: HarmonicConfig, c: &OnlineExperimentConfig) -> Result<OnlineTrace> {
    if c.configurations == 0 || c.steps == 0 || c.window_factor == 0 {
        return Err(FcmError::Invalid("online experiment needs steps, configurations and window > 0".into()));
    }
    let mut rng = run_rng(seed, ExperimentName::FcmOnline, 0, 0);
    let truths = (0..c.configurations)
        .map(|_| synth_converter_fcm(cfg, &c.converter, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let denominator = truths.iter().map(|f| f.matrix().norm_squared()).fold(0.0, f64::max);
    let mean_v = c.voltage.mean_vector(cfg);
    let ref_v = mean_phasor_magnitude(cfg, &mean_v);
    let refs_i: Vec<f64> = truths.iter().map(|f| mean_phasor_magnitude(cfg, &(f.matrix() * &mean_v))).collect();
    let window = c.window_factor * cfg.q();
    let config_at = |t: usize| (t * c.configurations / c.steps).min(c.configurations - 1);
    let change_steps: Vec<usize> = (0..c.configurations).map(|j| (j * c.steps).div_ceil(c.configurations)).collect();

    let draw = |k: usize, n: usize, rng: &mut ChaCha8Rng| {
        let mut v = c.voltage.sample_around(cfg, &mean_v, n, rng);
        let mut i = truths[k].matrix() * &v;
        perturb(&mut i, c.noise, refs_i[k], rng);
        perturb(&mut v, c.noise, ref_v, rng);
        (i, v)
    };
    let (i0, v0) = draw(0, window, &mut rng);
    let mut est = online_init(&MeasurementBatch::new(cfg, i0, v0)?, c.settings)?;

    let mut configuration = Vec::with_capacity(c.steps);
    let mut error = Vec::with_capacity(c.steps);
    let mut checkpoints = Vec::new();
    for t in 0..c.steps {
        let k = config_at(t);
        let (i, v) = draw(k, 1, &mut rng);
        est.step(&i.column(0).into_owned(), &v.column(0).into_owned())?;
        configuration.push(k);
        error.push(relative_error(
            est.fcm_matrix(),
            truths[k].matrix(),
            ErrorMode::Online { denominator },
        )?);
        if c.checkpoint_every > 0 && (t + 1) % c.checkpoint_every == 0 {
            let (_, v) = est.window();
            let (fresh, _) = refined_gram_inverse(&v);
            checkpoints.push((t + 1, (est.gram_inverse() - &fresh).amax(), fresh.amax()));
        }
    }
    Ok(OnlineTrace {
        window,
        change_steps,
        configuration,
        error,
        checkpoints,
        refreshes: est.refreshes(),
        forced_refactors: est.forced_refactors(),
    })
}

// ---------------------------------------------------------------------------
// reduction validation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionValidationConfig {
    pub runs: usize,
    /// Estimation samples as a multiple of `q`.
    pub estimation_factor: usize,
    pub dc_jitter: f64,
    pub resistance_jitter: f64,
    /// Jitter on the line reactance parameters `x`.
    pub reactance_jitter: f64,
    pub voltage_jitter: f64,
    /// Spread of the estimation samples around the root voltage.
    pub sample_std: f64,
    pub converter: SyntheticConverterSpec,
    pub voltage: ConverterVoltageSpec,
}

impl Default for ReductionValidationConfig {
    fn default() -> Self {
        Self {
            runs: 250,
            estimation_factor: 2,
            dc_jitter: 0.005,
            resistance_jitter: 0.01,
            reactance_jitter: 0.01,
            voltage_jitter: 0.005,
            sample_std: 0.005,
            converter: SyntheticConverterSpec::default(),
            voltage: ConverterVoltageSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReductionMetrics {
    pub eps_reduction: f64,
    pub eps_estimated: f64,
    pub eps_comparison: f64,
    pub fcm_error: f64,
}

/// Three-node network with jittered parameters and fresh synthetic converters.
pub fn jittered_three_node_network(
    cfg: HarmonicConfig,
    c: &ReductionValidationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<HarmonicNetwork> {
    let jitter = |s: f64| Normal::new(0.0, s).map_err(|e| FcmError::Invalid(e.to_string()));
    let (jr, jx, jdc) = (jitter(c.resistance_jitter)?, jitter(c.reactance_jitter)?, jitter(c.dc_jitter)?);
    let mut lines = three_node_lines();
    for l in &mut lines {
        for ph in 0..3 {
            l.impedance.r[ph] += jr.sample(rng);
            l.impedance.x[ph] += jx.sample(rng);
        }
    }
    let converters = THREE_NODE_CONVERTERS
        .iter()
        .map(|&(node, i_dc)| {
            Ok(Converter {
                node,
                fcm: synth_converter_fcm(cfg, &c.converter, rng)?,
                i_dc: i_dc + jdc.sample(rng),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    HarmonicNetwork::new(cfg, vec![1, 2, 3], 1, lines, converters)
}

pub fn reduction_trial(cfg: HarmonicConfig, c: &ReductionValidationConfig, rng: &mut ChaCha8Rng) -> Result<ReductionMetrics> {
    let p = cfg.p();
    let net = jittered_three_node_network(cfg, c, rng)?;
    let jv = Normal::new(0.0, c.voltage_jitter).map_err(|e| FcmError::Invalid(e.to_string()))?;
    let mean = c.voltage.mean_vector(cfg);
    // harmonic part only: the dc slot of the reduced model is 1
    let v_s = DVector::from_fn(p, |i, _| mean[i] + jv.sample(rng));

    let reduced = reduce_tree(&net)?.fcm;

    // estimation samples around v_S, then v_S itself, in one multi-RHS solve
    let t = c.estimation_factor * cfg.q();
    let ds = Normal::new(0.0, c.sample_std).map_err(|e| FcmError::Invalid(e.to_string()))?;
    let mut roots = DMatrix::from_fn(p, t + 1, |i, _| v_s[i] + ds.sample(rng));
    roots.set_column(t, &v_s);
    let currents = NetworkSolver::new(&net)?.root_currents(&roots)?;
    let i_s = currents.column(t).into_owned();

    let mut v = DMatrix::from_element(cfg.q(), t, 1.0);
    v.view_mut((0, 0), (p, t)).copy_from(&roots.columns(0, t));
    let batch = MeasurementBatch::new(cfg, currents.columns(0, t).into_owned(), v)?;
    let estimated = estimate_fcm_batch(&batch)?.fcm;

    let i_red = reduced.f_bar() * &v_s + reduced.f();
    let i_est = estimated.f_bar() * &v_s + estimated.f();
    Ok(ReductionMetrics {
        eps_reduction: relative_vector_error(&i_s, &i_red, &i_s),
        eps_estimated: relative_vector_error(&i_s, &i_est, &i_s),
        eps_comparison: relative_vector_error(&i_red, &i_est, &i_est),
        fcm_error: relative_error(estimated.matrix(), reduced.matrix(), ErrorMode::SquaredFrobenius)?,
    })
}

pub fn reduction_validation(seed: u64, cfg: HarmonicConfig, c: &ReductionValidationConfig) -> Result<Vec<ReductionMetrics>> {
    (0..c.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, ExperimentName::ReductionValidation, 0, run as u64);
            reduction_trial(cfg, c, &mut rng)
        })
        .collect()
}

pub fn mean_metrics(all: &[ReductionMetrics]) -> ReductionMetrics {
    let m = |f: fn(&ReductionMetrics) -> f64| mean(&all.iter().map(f).collect::<Vec<_>>());
    ReductionMetrics {
        eps_reduction: m(|x| x.eps_reduction),
        eps_estimated: m(|x| x.eps_estimated),
        eps_comparison: m(|x| x.eps_comparison),
        fcm_error: m(|x| x.fcm_error),
    }
}

// ---------------------------------------------------------------------------
// orchestration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub max_order: usize,
    pub seed: u64,
    /// Overrides the per-experiment run count.
    pub runs: Option<usize>,
    pub admittance: AdmittanceSweepConfig,
    pub batch: BatchSweepConfig,
    pub online: OnlineExperimentConfig,
    pub reduction: ReductionValidationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            max_order: HarmonicConfig::DEFAULT_MAX_ORDER,
            seed: 1,
            runs: None,
            admittance: AdmittanceSweepConfig::default(),
            batch: BatchSweepConfig::default(),
            online: OnlineExperimentConfig::default(),
            reduction: ReductionValidationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn harmonic_config(&self) -> HarmonicConfig {
        HarmonicConfig::new(self.max_order)
    }

    /// Copy with the run override pushed into every section.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(r) = self.runs {
            c.admittance.runs = r;
            c.batch.runs = r;
            c.reduction.runs = r;
        }
        c
    }
}

/// Named CSV table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.columns)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub name: ExperimentName,
    pub tables: Vec<ResultTable>,
    pub summary: BTreeMap<String, f64>,
}

impl ExperimentResult {
    /// Writes `<name>_<table>.csv` per table and `<name>.json` holding the
    /// config and summary. Returns the written paths.
    pub fn write_to_dir(&self, dir: &Path, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("{}_{}.csv", self.name, t.name));
            t.write_csv(std::fs::File::create(&path)?)?;
            paths.push(path);
        }
        let sidecar = serde_json::json!({
            "experiment": self.name,
            "config": config,
            "summary": self.summary,
        });
        let path = dir.join(format!("{}.json", self.name));
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
        paths.push(path);
        Ok(paths)
    }
}

fn sweep_table(name: &str, points: &[SweepPoint], q: Option<usize>) -> ResultTable {
    let mut t = ResultTable::new(name, &["noise", "samples", "samples_over_q", "mean_error", "max_error"]);
    for p in points {
        let over_q = q.map(|q| p.samples as f64 / q as f64).unwrap_or(f64::NAN);
        t.push(vec![
            p.noise,
            p.samples as f64,
            over_q,
            p.mean_error,
            p.errors.iter().copied().fold(0.0, f64::max),
        ]);
    }
    t
}

pub fn run_experiment(name: ExperimentName, config: &ExperimentConfig) -> Result<ExperimentResult> {
    let c = config.resolved();
    let cfg = c.harmonic_config();
    let mut summary = BTreeMap::new();
    let tables = match name {
        ExperimentName::AdmittanceSweep => {
            let (by_noise, by_samples) = admittance_sweep(c.seed, cfg, &c.admittance)?;
            for p in &by_noise {
                summary.insert(format!("mean_error_noise_{}", p.noise), p.mean_error);
            }
            for p in &by_samples {
                summary.insert(format!("mean_error_samples_{}", p.samples), p.mean_error);
            }
            vec![sweep_table("noise", &by_noise, None), sweep_table("samples", &by_samples, None)]
        }
        ExperimentName::FcmBatchSweep => {
            let points = batch_sweep(c.seed, cfg, &c.batch)?;
            for p in &points {
                summary.insert(format!("mean_error_noise_{}_samples_{}", p.noise, p.samples), p.mean_error);
            }
            vec![sweep_table("sweep", &points, Some(cfg.q()))]
        }
        ExperimentName::FcmOnline => {
            let trace = online_run(c.seed, cfg, &c.online)?;
            let mut steps = ResultTable::new("steps", &["step", "configuration", "error"]);
            for (t, (&k, &e)) in trace.configuration.iter().zip(&trace.error).enumerate() {
                steps.push(vec![t as f64, k as f64, e]);
            }
            let mut checks = ResultTable::new("checkpoints", &["step", "max_inverse_deviation", "max_inverse_entry"]);
            for &(t, d, m) in &trace.checkpoints {
                checks.push(vec![t as f64, d, m]);
            }
            summary.insert("settled_max_error".into(), trace.settled_max_error());
            summary.insert("max_inverse_deviation".into(), trace.max_checkpoint_deviation());
            summary.insert("refreshes".into(), trace.refreshes as f64);
            summary.insert("forced_refactors".into(), trace.forced_refactors as f64);
            vec![steps, checks]
        }
        ExperimentName::ReductionValidation => {
            let all = reduction_validation(c.seed, cfg, &c.reduction)?;
            let mut runs = ResultTable::new("runs", &["run", "eps_reduction", "eps_estimated", "eps_comparison", "fcm_error"]);
            for (j, m) in all.iter().enumerate() {
                runs.push(vec![j as f64, m.eps_reduction, m.eps_estimated, m.eps_comparison, m.fcm_error]);
            }
            let m = mean_metrics(&all);
            let mut means = ResultTable::new("means", &["eps_reduction", "eps_estimated", "eps_comparison", "fcm_error"]);
            means.push(vec![m.eps_reduction, m.eps_estimated, m.eps_comparison, m.fcm_error]);
            summary.insert("mean_eps_reduction".into(), m.eps_reduction);
            summary.insert("mean_eps_estimated".into(), m.eps_estimated);
            summary.insert("mean_eps_comparison".into(), m.eps_comparison);
            summary.insert("mean_fcm_error".into(), m.fcm_error);
            vec![runs, means]
        }
    };
    Ok(ExperimentResult { name, tables, summary })
}
