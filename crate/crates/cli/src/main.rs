//! Command-line driver: one subcommand per experiment, results written as
//! CSV/VTK/SVG under the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use cardiac_si::calibration::{
    calibrate, measure_cv, sigma_vector, with_sigma, Axis, CalibrationError, CvObjective, CvProtocol,
};
use cardiac_si::chi::{compute_chi, mesh_chi};
use cardiac_si::config::{parse_config, BuildError, ConfigError, RunConfig, TissueConfig};
use cardiac_si::fem::mtx::write_matrix_market;
use cardiac_si::geometry::{build_emi_mesh, BoxSpec, EmiCellLayout, GeometryError};
use cardiac_si::io::{
    curve_gaps, normalized_points, read_si_curve, si_plot_svg, write_calibration_history, write_csv, write_si_curve,
    write_traces, write_vtk_output, IoError,
};
use cardiac_si::protocol::{Experiment, ProtocolError, S1S2Protocol, SiCurve, SiPoint};
use cardiac_si::stepping::{run, Model, RunOptions, StepError, Stimulus};
use cardiac_si::verify;

/// Environment variable that overrides the configured output directory.
const OUT_DIR_ENV: &str = "CARDIAC_SI_OUT_DIR";

#[derive(Parser)]
#[command(name = "cardiac-si", version, about = "Bidomain and EMI strength-interval experiments")]
struct Cli {
    /// Output directory (overrides the config and CARDIAC_SI_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One stimulated run: probe traces CSV plus a VTK frame series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Stimulus amplitude (µA/µF); defaults to protocol.s1_amplitude.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Also write the implicit system matrix in Matrix Market format.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Smallest S1 amplitude that propagates from rest.
    RestingThreshold {
        #[arg(long)]
        config: PathBuf,
    },
    /// S2 threshold and mechanism at each S1-S2 interval.
    SiCurve {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for the per-interval searches.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fit bidomain conductivities to the target conduction velocities.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Conduction velocity along one axis (or both).
    MeasureCv {
        #[arg(long)]
        config: PathBuf,
        /// x (longitudinal) or y (transverse); both when omitted.
        #[arg(long)]
        direction: Option<Axis>,
    },
    /// Surface-to-volume ratio from the cell layout.
    DeriveChi {
        /// EMI config; the default layout is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Round down to a multiple of this value (1/mm).
        #[arg(long, default_value_t = 10.0)]
        rounding: f64,
        /// Also mesh the layout and report the meshed membrane area.
        #[arg(long)]
        mesh: bool,
    },
    /// Overlay normalized SI curves; SVG plot plus a table of pointwise gaps.
    Compare {
        /// SI CSV files; the first is the reference.
        #[arg(required = true, num_args = 2..)]
        curves: Vec<PathBuf>,
        /// Plot file name inside the output directory.
        #[arg(long, default_value = "compare.svg")]
        plot: String,
    },
    /// Run the built-in property checks.
    Verify,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Output(#[from] IoError),
    #[error("{0}")]
    Usage(String),
    #[error("{0} check(s) failed")]
    Verify(usize),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Read { .. } => "read",
            CliError::Build(_) | CliError::Geometry(_) => "build",
            CliError::Step(_) => "simulation",
            CliError::Protocol(_) => "protocol",
            CliError::Calibration(_) => "calibration",
            CliError::Output(_) => "output",
            CliError::Usage(_) => "usage",
            CliError::Verify(_) => "verify",
        }
    }

    fn line(&self) -> Option<usize> {
        match self {
            CliError::Config { source, .. } => Some(source.line),
            _ => None,
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    parse_config(&text).map_err(|source| CliError::Config { path: path.into(), source })
}

fn out_dir(cli_out: &Option<PathBuf>, config: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let dir = cli_out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.map_or_else(|| PathBuf::from("out"), |c| PathBuf::from(&c.output.dir)));
    fs::create_dir_all(&dir).map_err(|source| CliError::Read { path: dir.clone(), source })?;
    Ok(dir)
}

fn model_of(cfg: &RunConfig) -> Result<Model, CliError> {
    let t = Instant::now();
    let model = cfg.build_model()?;
    info!("{} model with {} sites ready in {:.1?}", cfg.tissue.kind(), model.n_sites(), t.elapsed());
    Ok(model)
}

fn simulate(cfg: &RunConfig, dir: &Path, amplitude: Option<f64>, dump_matrix: bool) -> Result<(), CliError> {
    let amplitude = amplitude
        .or(cfg.protocol.s1_amplitude)
        .ok_or_else(|| CliError::Usage("set protocol.s1_amplitude or pass --amplitude".into()))?;
    let model = model_of(cfg)?;
    if dump_matrix {
        let path = dir.join("system.mtx");
        let matrix = match &model {
            Model::Bidomain(m) => m.disc.system.matrix(),
            Model::Emi(m) => m.disc.system.matrix(),
        };
        let file = fs::File::create(&path).map_err(|source| CliError::Read { path: path.clone(), source })?;
        write_matrix_market(matrix, std::io::BufWriter::new(file)).map_err(|source| CliError::Read { path, source })?;
    }
    let sites = model.sites_in(&cfg.protocol.electrode);
    if sites.is_empty() {
        return Err(ProtocolError::EmptyElectrode(cfg.protocol.electrode).into());
    }
    let schedule = [Stimulus { sites, amplitude, onset: cfg.stepping.t0, duration: cfg.protocol.duration }];
    let opts = RunOptions {
        snapshot_every: if cfg.output.vtk { cfg.output.snapshot_every } else { None },
        watch_from: Some(cfg.stepping.t0),
        ..Default::default()
    };
    let t = Instant::now();
    let record = run(&model, &schedule, &cfg.stepping, &cfg.probes(), opts)?;
    info!("simulated {} ms in {:.1?}", cfg.stepping.t_end - cfg.stepping.t0, t.elapsed());
    let hash = cfg.hash();
    write_traces(&dir.join("traces.csv"), &hash, &record)?;
    if cfg.output.vtk {
        write_vtk_output(&dir.join("vtk"), &model, &record)?;
    }
    let tracker = record.tracker.as_ref().expect("tracking was requested");
    println!("amplitude = {amplitude} uA/uF");
    println!("depolarized_fraction = {:.4}", tracker.fraction_above(0.0));
    for (k, s) in record.probe_sites.iter().enumerate() {
        println!("probe{}_peak = {:.3} mV", k + 1, tracker.peak[*s]);
    }
    println!("gate_clamps = {}", record.final_state.gate_clamps);
    Ok(())
}

fn resting_threshold(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let model = model_of(cfg)?;
    let exp = cfg.experiment(&model)?;
    let search = exp.find_resting_threshold(cfg.protocol.resolution)?;
    let rows: Vec<Vec<String>> = search.trials.iter().map(|(a, p)| vec![format!("{a:?}"), p.to_string()]).collect();
    write_csv(&dir.join("resting_threshold.csv"), &cfg.hash(), &["amplitude_uA_per_uF", "propagated"], &rows)?;
    println!("resting_threshold = {} uA/uF", search.threshold);
    if search.non_monotone {
        println!("warning: non-monotone response observed during the search");
    }
    Ok(())
}

fn si_curve(cfg: &RunConfig, dir: &Path, jobs: usize) -> Result<(), CliError> {
    let model = model_of(cfg)?;
    let exp = cfg.experiment(&model)?;
    let s1 = match cfg.protocol.s1_amplitude {
        Some(a) => a,
        None => {
            let t = exp.find_resting_threshold(cfg.protocol.resolution)?.threshold;
            info!("resting threshold {t} uA/uF");
            t
        }
    };
    let protocol = cfg.protocol.s1s2(s1);
    let curve = run_si_curve(&exp, &protocol, jobs)?;
    write_si_curve(&dir.join("si_curve.csv"), &cfg.hash(), &curve)?;
    let norm = curve.normalize();
    println!("resting_threshold = {s1} uA/uF");
    println!("interval_ms threshold normalized mechanism");
    for (p, n) in curve.points.iter().zip(&norm.points) {
        println!("{} {} {:.4} {}", p.interval, p.threshold, n.1, p.mechanism.as_str());
    }
    Ok(())
}

/// One S1 run for all checkpoints, then the per-interval searches on up to
/// `jobs` threads. Results are independent of `jobs`.
fn run_si_curve(exp: &Experiment, protocol: &S1S2Protocol, jobs: usize) -> Result<SiCurve, CliError> {
    protocol.validate()?;
    let t = Instant::now();
    let states = exp.s1_checkpoints(protocol.s1_amplitude, &protocol.intervals)?;
    info!("S1 checkpoints ready in {:.1?}", t.elapsed());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let points: Vec<SiPoint> = pool.install(|| {
        protocol
            .intervals
            .par_iter()
            .zip(states.par_iter())
            .map(|(&interval, state)| {
                let t = Instant::now();
                let p = exp.find_s2_threshold(state, protocol, interval);
                if let Ok(p) = &p {
                    info!("interval {interval} ms: {} uA/uF ({}) in {:.1?}", p.threshold, p.mechanism.as_str(), t.elapsed());
                }
                p
            })
            .collect::<Result<_, _>>()
    })?;
    Ok(SiCurve { resting_threshold: protocol.s1_amplitude, points })
}

fn bidomain_objective(cfg: &RunConfig) -> Result<CvObjective, CliError> {
    let TissueConfig::Bidomain { bounds, h, params } = &cfg.tissue else {
        return Err(CliError::Usage("calibration needs a bidomain config".into()));
    };
    let mut objective = CvObjective::new(*bounds, *h, *params, cfg.stepping, cfg.calibration.targets)?;
    objective.cell = cfg.cell_model();
    objective.amplitude = cfg.calibration.cv_amplitude;
    objective.horizon = cfg.calibration.cv_horizon;
    Ok(objective)
}

fn calibrate_cmd(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let objective = bidomain_objective(cfg)?;
    let c = &cfg.calibration;
    let result = calibrate(&objective, c.lower, c.upper, c.budget, c.seed)?;
    let hash = cfg.hash();
    write_calibration_history(&dir.join("calibration_history.csv"), &hash, &result.history)?;
    let best = result
        .history
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("calibration returns a non-empty history");
    let mut tuned = cfg.clone();
    if let TissueConfig::Bidomain { params, .. } = &mut tuned.tissue {
        *params = with_sigma(params, &best.sigma);
    }
    fs::write(dir.join("calibrated.cfg"), tuned.to_text())
        .map_err(|source| CliError::Read { path: dir.join("calibrated.cfg"), source })?;
    let s = sigma_vector(&result.params);
    println!("evaluations = {}", result.evaluations);
    println!("sigma_i = {:.6} {:.6} mS/mm", s[0], s[1]);
    println!("sigma_e = {:.6} {:.6} mS/mm", s[2], s[3]);
    println!("cv_x = {} cm/s", best.cv[0].map_or("none".into(), |v| format!("{v:.2}")));
    println!("cv_y = {} cm/s", best.cv[1].map_or("none".into(), |v| format!("{v:.2}")));
    println!("objective = {:.6e}", result.objective);
    Ok(())
}

fn measure_cv_cmd(cfg: &RunConfig, dir: &Path, direction: Option<Axis>) -> Result<(), CliError> {
    let model = model_of(cfg)?;
    let axes = direction.map_or_else(|| vec![Axis::Longitudinal, Axis::Transverse], |a| vec![a]);
    let mut rows = Vec::new();
    for axis in axes {
        let base = match &cfg.tissue {
            TissueConfig::Bidomain { bounds, .. } => CvProtocol::bidomain(bounds, axis),
            TissueConfig::Emi { layout, .. } => CvProtocol::emi(layout, axis)?,
        };
        let protocol = CvProtocol { amplitude: cfg.calibration.cv_amplitude, horizon: cfg.calibration.cv_horizon, ..base };
        let m = measure_cv(&model, &protocol, &cfg.stepping)?;
        for (p, t) in m.sample_positions.iter().zip(&m.activation_times) {
            rows.push(vec![axis.as_str().to_string(), format!("{:?}", p[0]), format!("{:?}", p[1]), format!("{:?}", p[2]), format!("{t:?}")]);
        }
        println!("cv_{} = {:.2} cm/s", axis.as_str(), m.cv);
    }
    write_csv(&dir.join("cv_samples.csv"), &cfg.hash(), &["axis", "x_mm", "y_mm", "z_mm", "activation_ms"], &rows)?;
    Ok(())
}

fn derive_chi(config: Option<&RunConfig>, rounding: f64, with_mesh: bool) -> Result<(), CliError> {
    let (layout, h) = match config.map(|c| &c.tissue) {
        Some(TissueConfig::Emi { layout, h, .. }) => (*layout, *h),
        Some(_) => return Err(CliError::Usage("derive-chi needs an EMI config".into())),
        None => (EmiCellLayout::default(), 0.005),
    };
    if rounding.is_nan() || rounding <= 0.0 {
        return Err(CliError::Usage(format!("rounding must be positive, got {rounding}")));
    }
    let domain: BoxSpec = layout.bounds();
    let r = compute_chi(&layout, &domain, rounding);
    println!("single_cell_area = {:.6} mm2", r.single_cell_area);
    println!("total_area = {:.6} mm2", r.total_area);
    println!("domain_volume = {:.6} mm3", r.domain_volume);
    println!("chi_raw = {:.4} 1/mm", r.chi_raw);
    println!("chi_rounded = {} 1/mm", r.chi_rounded);
    if with_mesh {
        let mesh = build_emi_mesh(layout, h)?;
        println!("chi_mesh = {:.4} 1/mm", mesh_chi(&mesh, &domain));
    }
    Ok(())
}

fn compare(curves: &[PathBuf], dir: &Path, plot: &str) -> Result<(), CliError> {
    let mut series = Vec::new();
    for path in curves {
        let rows = read_si_curve(path)?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        series.push((name, normalized_points(&rows)));
    }
    fs::write(dir.join(plot), si_plot_svg(&series)).map_err(|source| CliError::Read { path: dir.join(plot), source })?;
    let (ref_name, reference) = &series[0];
    let mut rows = Vec::new();
    for (name, points) in &series[1..] {
        println!("# {name} vs {ref_name}");
        println!("interval_ms reference other gap");
        let gaps = curve_gaps(reference, points);
        for g in &gaps {
            println!("{} {:.4} {:.4} {:.4}", g.interval, g.a, g.b, g.gap);
            rows.push(vec![name.clone(), format!("{:?}", g.interval), format!("{:?}", g.a), format!("{:?}", g.b), format!("{:?}", g.gap)]);
        }
        let worst = gaps.iter().map(|g| g.gap.abs()).fold(0.0, f64::max);
        println!("max_abs_gap = {worst:.4}");
    }
    write_csv(&dir.join("compare_gaps.csv"), "none", &["curve", "interval_ms", "reference", "other", "gap"], &rows)?;
    Ok(())
}

fn verify_cmd() -> Result<(), CliError> {
    let results = verify::run_all();
    for r in &results {
        println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        n => Err(CliError::Verify(n)),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, amplitude, dump_matrix } => {
            let cfg = load(&config)?;
            simulate(&cfg, &out_dir(&cli.out, Some(&cfg))?, amplitude, dump_matrix)
        }
        Command::RestingThreshold { config } => {
            let cfg = load(&config)?;
            resting_threshold(&cfg, &out_dir(&cli.out, Some(&cfg))?)
        }
        Command::SiCurve { config, jobs } => {
            let cfg = load(&config)?;
            si_curve(&cfg, &out_dir(&cli.out, Some(&cfg))?, jobs)
        }
        Command::Calibrate { config } => {
            let cfg = load(&config)?;
            calibrate_cmd(&cfg, &out_dir(&cli.out, Some(&cfg))?)
        }
        Command::MeasureCv { config, direction } => {
            let cfg = load(&config)?;
            measure_cv_cmd(&cfg, &out_dir(&cli.out, Some(&cfg))?, direction)
        }
        Command::DeriveChi { config, rounding, mesh } => {
            let cfg = config.as_deref().map(load).transpose()?;
            derive_chi(cfg.as_ref(), rounding, mesh)
        }
        Command::Compare { curves, plot } => compare(&curves, &out_dir(&cli.out, None)?, &plot),
        Command::Verify => verify_cmd(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "error": { "kind": e.kind(), "message": e.to_string(), "line": e.line() } });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
