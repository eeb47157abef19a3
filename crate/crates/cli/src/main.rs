//! `fcm`: simulate harmonic networks, estimate FCMs and admittances, reduce
//! trees and run the Monte-Carlo experiments.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fcm_core::estimation::GramAccumulator;
use fcm_core::io::{
    bus_table, complex_to_interleaved, interleaved_to_complex, read_fcm_file, read_measurement_file, real_column_names, write_admittance,
    write_fcm_file, write_measurement_file, MeasurementTable,
};
use fcm_core::scenario::{add_measurement_noise, mean_phasor_magnitude, ConverterVoltageSpec, NoiseModel};
use fcm_core::{
    build_network, estimate_admittance, online_init, reduce_tree, relative_error, run_experiment, BusLayout,
    ErrorMode, ExperimentConfig, ExperimentName, FcmError, HarmonicConfig, HarmonicNetwork, MeasurementBatch,
    NetworkDocument, NetworkMeasurementBatch, NetworkSolver, OnlineSettings, RealHarmonicVector, Topology,
};
use fcm_core::scenario::noise::mean_complex_magnitude;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "fcm", version, about = "Frequency coupling matrix toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master random seed
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Maximum harmonic order
    #[arg(long = "K", global = true, default_value_t = HarmonicConfig::DEFAULT_MAX_ORDER)]
    k: usize,
    /// Sample count or window length
    #[arg(long = "T", global = true)]
    t: Option<usize>,
    /// Relative measurement noise (0.001 = 0.1 %)
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Monte-Carlo runs per point
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a network for random root voltages and write measurement CSVs
    Simulate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Batch least-squares FCM from a current/voltage CSV pair
    EstimateFcm {
        #[arg(long)]
        currents: PathBuf,
        #[arg(long)]
        voltages: PathBuf,
    },
    /// Sliding-window FCM estimation over a CSV stream
    EstimateFcmOnline {
        #[arg(long)]
        currents: PathBuf,
        #[arg(long)]
        voltages: PathBuf,
        /// FCM file to measure the per-step error against
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        refresh: usize,
    },
    /// Harmonic admittance from bus CSVs and the network topology
    EstimateAdmittance {
        #[arg(long)]
        currents: PathBuf,
        #[arg(long)]
        voltages: PathBuf,
        /// Network document providing the line set
        #[arg(long)]
        network: PathBuf,
    },
    /// Reduce a network to a single virtual FCM at its root
    Reduce {
        #[arg(long)]
        network: PathBuf,
    },
    /// Run a named experiment
    Experiment {
        name: String,
        /// JSON experiment config; defaults are used for missing fields
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_network(path: &Path, common: &Common) -> anyhow::Result<HarmonicNetwork> {
    let doc = NetworkDocument::from_path(path)?;
    let cfg = doc.config_or(HarmonicConfig::new(common.k));
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(build_network(&doc, cfg, base)?)
}

fn out_path(common: &Common, name: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
    Ok(common.out_dir.join(name))
}

fn real_table(cfg: HarmonicConfig, data: DMatrix<f64>, with_dc: bool) -> MeasurementTable {
    MeasurementTable {
        cfg,
        nodes: 1,
        timestamps: (0..data.ncols()).map(|t| t as f64).collect(),
        columns: real_column_names(cfg, with_dc),
        data,
    }
}

fn read_pair(currents: &Path, voltages: &Path) -> anyhow::Result<MeasurementBatch> {
    let i = read_measurement_file(currents).with_context(|| format!("reading {}", currents.display()))?;
    let v = read_measurement_file(voltages).with_context(|| format!("reading {}", voltages.display()))?;
    if i.cfg != v.cfg {
        bail!(FcmError::Invalid(format!(
            "current file has K={}, voltage file has K={}",
            i.cfg.max_order(),
            v.cfg.max_order()
        )));
    }
    Ok(MeasurementBatch::with_timestamps(i.cfg, i.data, v.data, v.timestamps)?)
}

fn noisy_bus(m: &DMatrix<Complex64>, noise: f64, seed: u64) -> anyhow::Result<DMatrix<Complex64>> {
    let reference = mean_complex_magnitude(&m.column_mean());
    let noisy = add_measurement_noise(&complex_to_interleaved(m), &NoiseModel::new(noise, seed)?, reference);
    Ok(interleaved_to_complex(&noisy)?)
}

fn simulate(common: &Common, network: &Path) -> anyhow::Result<()> {
    let net = load_network(network, common)?;
    let cfg = net.config();
    let p = cfg.p();
    let t = common.t.unwrap_or(2 * cfg.q());
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let spec = ConverterVoltageSpec::default();
    let roots = spec.sample(cfg, t, &mut rng).rows(0, p).into_owned();

    let solver = NetworkSolver::new(&net)?;
    let layout = BusLayout::new(cfg, net.node_count());
    let mut root_currents = DMatrix::zeros(p, t);
    let mut bus_v = DMatrix::zeros(layout.len(), t);
    let mut bus_i = DMatrix::zeros(layout.len(), t);
    for j in 0..t {
        let sol = solver.solve(&RealHarmonicVector::new(cfg, roots.column(j).into_owned())?)?;
        root_currents.set_column(j, &sol.root_current);
        bus_v.set_column(j, &layout.phasors(&sol.node_voltages)?);
        bus_i.set_column(j, &layout.phasors(&sol.bus_injections())?);
    }

    let noise = common.noise.unwrap_or(0.0);
    let model = NoiseModel::new(noise, common.seed.wrapping_add(1))?;
    let mean_v = roots.column_mean();
    let mean_i = root_currents.column_mean();
    let roots = add_measurement_noise(&roots, &model, mean_phasor_magnitude(cfg, &mean_v));
    let root_currents = add_measurement_noise(&root_currents, &NoiseModel::new(noise, common.seed.wrapping_add(2))?, mean_phasor_magnitude(cfg, &mean_i));
    // the virtual FCM sees a constant unit dc slot
    let mut v = DMatrix::from_element(cfg.q(), t, 1.0);
    v.rows_mut(0, p).copy_from(&roots);

    let bus_v = noisy_bus(&bus_v, noise, common.seed.wrapping_add(3))?;
    let bus_i = noisy_bus(&bus_i, noise, common.seed.wrapping_add(4))?;

    let files = [
        ("root_voltages.csv", real_table(cfg, v, true)),
        ("root_currents.csv", real_table(cfg, root_currents, false)),
        ("bus_voltages.csv", bus_table(layout, &bus_v)),
        ("bus_currents.csv", bus_table(layout, &bus_i)),
    ];
    for (name, table) in &files {
        let path = out_path(common, name)?;
        write_measurement_file(&path, table)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn estimate_fcm(common: &Common, currents: &Path, voltages: &Path) -> anyhow::Result<()> {
    let batch = read_pair(currents, voltages)?;
    let mut acc = GramAccumulator::new(batch.config());
    acc.add_batch(&batch)?;
    let est = acc.finish()?;
    let path = out_path(common, "fcm.csv")?;
    write_fcm_file(&path, &est.fcm)?;
    let summary = serde_json::json!({
        "fcm": path,
        "samples": batch.len(),
        "rank": est.rank,
        "rank_deficient": est.rank_deficient,
        "gram_condition": est.gram_condition,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn estimate_fcm_online(
    common: &Common,
    currents: &Path,
    voltages: &Path,
    truth: Option<&Path>,
    refresh: usize,
) -> anyhow::Result<()> {
    let batch = read_pair(currents, voltages)?;
    let cfg = batch.config();
    let window = common.t.unwrap_or(2 * cfg.q());
    if batch.len() < window {
        bail!(FcmError::Invalid(format!(
            "stream has {} samples, fewer than the window T = {window}",
            batch.len()
        )));
    }
    let truth = truth.map(read_fcm_file).transpose()?;
    let first = MeasurementBatch::new(
        cfg,
        batch.currents().columns(0, window).into_owned(),
        batch.voltages().columns(0, window).into_owned(),
    )?;
    let settings = OnlineSettings {
        refresh_interval: refresh,
        ..Default::default()
    };
    let mut est = online_init(&first, settings)?;
    let path = out_path(common, "online_steps.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["step", "t", "relative_error", "fcm_norm"])?;
    for j in window..batch.len() {
        est.step(&batch.currents().column(j).into_owned(), &batch.voltages().column(j).into_owned())?;
        let err = match &truth {
            Some(f) => relative_error(est.fcm_matrix(), f.matrix(), ErrorMode::SquaredFrobenius)?,
            None => f64::NAN,
        };
        w.write_record([
            (j - window).to_string(),
            batch.timestamps()[j].to_string(),
            format!("{err:e}"),
            format!("{:e}", est.fcm_matrix().norm()),
        ])?;
    }
    w.flush()?;
    let fcm_path = out_path(common, "fcm_online_final.csv")?;
    write_fcm_file(&fcm_path, &est.fcm())?;
    println!("{}\n{}", path.display(), fcm_path.display());
    Ok(())
}

fn estimate_admittance_cmd(common: &Common, currents: &Path, voltages: &Path, network: &Path) -> anyhow::Result<()> {
    let net = load_network(network, common)?;
    let i = read_measurement_file(currents)?;
    let v = read_measurement_file(voltages)?;
    let layout = BusLayout::new(i.cfg, i.nodes);
    if v.cfg != i.cfg || v.nodes != i.nodes || i.nodes != net.node_count() {
        bail!(FcmError::Invalid(format!(
            "bus files and network disagree: K={}/{} N={}/{} network N={}",
            i.cfg.max_order(),
            v.cfg.max_order(),
            i.nodes,
            v.nodes,
            net.node_count()
        )));
    }
    let batch = NetworkMeasurementBatch::new(layout, interleaved_to_complex(&i.data)?, interleaved_to_complex(&v.data)?)?;
    let est = estimate_admittance(&batch, &Topology::of_network(&net))?;
    let path = out_path(common, "admittance.csv")?;
    write_admittance(File::create(&path)?, &est.admittance)?;
    if est.rank_deficient() {
        eprintln!(
            "warning: {} rank-deficient blocks, pseudo-inverse used",
            est.rank_deficient_blocks.len()
        );
    }
    println!("{}", path.display());
    Ok(())
}

fn reduce(common: &Common, network: &Path) -> anyhow::Result<()> {
    let net = load_network(network, common)?;
    let report = reduce_tree(&net)?;
    let fcm_path = out_path(common, "virtual_fcm.csv")?;
    write_fcm_file(&fcm_path, &report.fcm)?;
    let report_path = out_path(common, "reduction_report.json")?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!("{}\n{}", fcm_path.display(), report_path.display());
    Ok(())
}

fn experiment(common: &Common, name: &str, config: Option<&Path>) -> anyhow::Result<()> {
    let name: ExperimentName = name.parse()?;
    let mut cfg: ExperimentConfig = match config {
        Some(p) => serde_json::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)
            .map_err(FcmError::from)?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = common.seed;
    cfg.max_order = common.k;
    if common.runs.is_some() {
        cfg.runs = common.runs;
    }
    if let Some(noise) = common.noise {
        cfg.online.noise = noise;
        cfg.batch.noise_levels = vec![noise];
        cfg.admittance.sample_noise = noise;
    }
    if let Some(t) = common.t {
        cfg.batch.samples = Some(vec![t]);
        cfg.admittance.noise_samples = t;
    }
    let result = run_experiment(name, &cfg)?;
    for path in result.write_to_dir(&common.out_dir, &cfg)? {
        println!("{}", path.display());
    }
    for (k, v) in &result.summary {
        eprintln!("{k} = {v:e}");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Simulate { network } => simulate(c, network),
        Command::EstimateFcm { currents, voltages } => estimate_fcm(c, currents, voltages),
        Command::EstimateFcmOnline {
            currents,
            voltages,
            truth,
            refresh,
        } => estimate_fcm_online(c, currents, voltages, truth.as_deref(), *refresh),
        Command::EstimateAdmittance {
            currents,
            voltages,
            network,
        } => estimate_admittance_cmd(c, currents, voltages, network),
        Command::Reduce { network } => reduce(c, network),
        Command::Experiment { name, config } => experiment(c, name, config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<FcmError>().is_some_and(FcmError::is_numerical));
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}
