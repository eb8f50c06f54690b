//! `ccsi`: phantoms, synthetic data, inversions, cost landscapes and the
//! oracle self-check from one JSON configuration.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccsi::analysis::{self, LandscapeEvaluator, SolutionPoint};
use ccsi::csi::{self, ForwardModel, InversionInput, InversionState, Variant};
use ccsi::geometry::ContrastMap;
use ccsi::scenario::{self, MeasurementSet};
use clap::{Args, Parser, Subcommand};
use log::info;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ccsi", version, about = "2-D TM microwave inverse scattering workbench")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the configured phantom on the inversion domain.
    Phantom(Common),
    /// Simulate (and add noise to) the measurements.
    Simulate(Common),
    /// Invert measurements.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV (default: <out>/measurements.csv).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample the cost between two reconstructions and the true solution.
    Landscape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// State written by `invert --variant cc`.
        #[arg(long)]
        cc: PathBuf,
        /// State of the competing reconstruction.
        #[arg(long)]
        mr: PathBuf,
        /// True solution; computed from the configured phantom if omitted.
        #[arg(long)]
        act: Option<PathBuf>,
    },
    /// Run the Mie, adjoint and gradient checks.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        overwrite: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Signal-to-noise ratio in dB; `inf` for noise-free data.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
}

enum Failure {
    Config(Vec<String>),
    Core(ccsi::Error),
    Exists(PathBuf),
    Checks(usize),
}

impl From<ccsi::Error> for Failure {
    fn from(e: ccsi::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use ccsi::Error as E;
        match self {
            Failure::Config(_) => 2,
            Failure::Core(E::Config(_) | E::Argument(_)) => 2,
            Failure::Core(E::Numerical(_) | E::Degenerate(_)) | Failure::Checks(_) => 3,
            Failure::Core(E::Io { .. } | E::Parse { .. }) | Failure::Exists(_) => 4,
        }
    }

    fn report(&self) {
        match self {
            Failure::Config(problems) => {
                eprintln!("error: invalid configuration:");
                for p in problems {
                    eprintln!("  - {p}");
                }
            }
            Failure::Core(e) => eprintln!("error: {e}"),
            Failure::Exists(p) => eprintln!("error: {} exists; pass --overwrite to replace it", p.display()),
            Failure::Checks(n) => eprintln!("error: {n} check(s) failed"),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Phantom(c) => setup(&c).and_then(|(cfg, out)| cmd_phantom(&cfg, &out, c.overwrite)),
        Command::Simulate(c) => setup(&c).and_then(|(cfg, out)| cmd_simulate(&cfg, &out, c.overwrite)),
        Command::Invert { common, data } => setup(&common).and_then(|(cfg, out)| {
            let data = data.unwrap_or_else(|| out.join("measurements.csv"));
            cmd_invert(&cfg, &out, &data, common.overwrite)
        }),
        Command::Landscape { common, data, cc, mr, act } => setup(&common).and_then(|(cfg, out)| {
            let data = data.unwrap_or_else(|| out.join("measurements.csv"));
            cmd_landscape(&cfg, &out, &data, [&cc, &mr], act.as_deref(), common.overwrite)
        }),
        Command::Validate { out, seed, overwrite } => cmd_validate(out.as_deref(), seed, overwrite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.exit_code())
        }
    }
}

/// Loads the configuration, applies flag overrides and prepares the
/// output directory.
fn setup(c: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.variant {
        cfg.variant = v;
    }
    if let Some(n) = c.iterations {
        cfg.max_iterations = n;
    }
    if let Some(s) = c.snr_db {
        cfg.snr_db = if s == f64::INFINITY { None } else { Some(s) };
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Failure::Config(problems));
    }
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| ccsi::Error::io(&out, e))?;
    Ok((cfg, out))
}

/// Refuses to replace existing files unless `overwrite` is set.
fn claim(out: &Path, names: &[String], overwrite: bool) -> Result<Vec<PathBuf>, Failure> {
    let paths: Vec<PathBuf> = names.iter().map(|n| out.join(n)).collect();
    if !overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Failure::Exists(p.clone()));
        }
    }
    Ok(paths)
}

fn map_files(stem: &str, fields: &[&str]) -> Vec<String> {
    let mut v = vec![format!("{stem}.csv")];
    for f in fields {
        v.push(format!("{stem}_{f}.pgm"));
        v.push(format!("{stem}_{f}.pgm.txt"));
    }
    v
}

fn write_config(cfg: &RunConfig, path: &Path) -> Outcome {
    std::fs::write(path, cfg.to_json()).map_err(|e| ccsi::Error::io(path, e).into())
}

fn cmd_phantom(cfg: &RunConfig, out: &Path, overwrite: bool) -> Outcome {
    let mut names = map_files("phantom", &["delta_eps", "delta_sigma"]);
    names.push("config.json".into());
    claim(out, &names, overwrite)?;
    let grid = cfg.inversion_grid()?;
    let domain = cfg.domain(&grid)?;
    let truth: ContrastMap<f64> = cfg.phantom().rasterize(&grid, &domain)?;
    analysis::export_contrast(&out.join("phantom"), &grid, &domain, &truth)?;
    write_config(cfg, &out.join("config.json"))?;
    info!("phantom: {} domain cells, {} inside the object", domain.len(), truth.delta_eps.iter().filter(|v| **v > 0.0).count());
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path, overwrite: bool) -> Outcome {
    let paths = claim(out, &["measurements.csv".into(), "config.json".into()], overwrite)?;
    let syn = cfg.synthesis_grid()?;
    let inv = cfg.inversion_grid()?;
    info!("synthesis grid {} x {} cells of {} m", syn.nx, syn.ny, syn.dx);
    let clean: MeasurementSet<f64> = scenario::synthesize(&cfg.measurement, &cfg.phantom(), &syn, &inv)?;
    let mut ms = match cfg.snr_db {
        Some(snr) => scenario::add_noise(&clean, snr, cfg.seed)?,
        None => clean,
    };
    ms.provenance.inversion_grid = Some(inv);
    ms.write_csv(&paths[0])?;
    write_config(cfg, &paths[1])?;
    info!("wrote {}", paths[0].display());
    Ok(())
}

struct Problem {
    model: ForwardModel<f64>,
    input: InversionInput<f64>,
    truth: Option<ContrastMap<f64>>,
}

fn problem(cfg: &RunConfig, data: &Path) -> Result<Problem, Failure> {
    let ms = MeasurementSet::<f64>::read_csv(data)?;
    let grid = cfg.inversion_grid()?;
    let domain = cfg.domain(&grid)?;
    info!("inversion grid {} x {}, {} unknowns per frequency", grid.nx, grid.ny, domain.len());
    let model = ForwardModel::for_config(&grid, &domain, &cfg.measurement)?;
    let input = InversionInput::from_measurements(&cfg.measurement, &ms, &grid, &domain)?;
    let truth: ContrastMap<f64> = cfg.phantom().rasterize(&grid, &domain)?;
    let truth = if truth.is_zero() { None } else { Some(truth) };
    Ok(Problem { model, input, truth })
}

fn omega_max(cfg: &RunConfig) -> f64 {
    cfg.measurement.omegas().last().copied().unwrap_or(0.0)
}

fn cmd_invert(cfg: &RunConfig, out: &Path, data: &Path, overwrite: bool) -> Outcome {
    let mut names = vec!["log.csv".to_string(), "state.json".into(), "config.json".into()];
    names.extend(map_files("contrast", &["delta_eps", "delta_sigma"]));
    let paths = claim(out, &names, overwrite)?;
    let pb = problem(cfg, data)?;
    let wmax = omega_max(cfg);
    let truth = pb.truth.as_ref().map(|t| (t, wmax));
    let outcome = csi::run_with(&pb.model, &pb.input, cfg.variant, cfg.max_iterations, truth, |_, r| {
        if r.iteration % 64 == 0 {
            info!("iteration {}: cost {:.4e}, err {:.4}", r.iteration, r.cost_full, r.err);
        }
    })?;
    analysis::export_curves(&outcome.log, &paths[0])?;
    let state = match outcome.state {
        Some(s) => s,
        None => InversionState {
            n_sources: pb.model.n_sources(),
            n_frequencies: pb.model.n_frequencies(),
            variant: cfg.variant,
            slots: Vec::new(),
            master: outcome.master.clone(),
            chi: Vec::new(),
            eta_s: Vec::new(),
            eta_d: Vec::new(),
            g_chi_prev: Vec::new(),
            nu_chi_prev: Vec::new(),
            iteration: 0,
        },
    };
    state.write_json(&paths[1])?;
    write_config(cfg, &paths[2])?;
    analysis::export_contrast(&out.join("contrast"), pb.model.grid(), pb.model.domain(), &outcome.master)?;
    if let Some(last) = outcome.log.last() {
        info!("finished after {} iterations, err {:.4}", last.iteration, last.err);
    }
    Ok(())
}

fn load_point(path: &Path) -> Result<SolutionPoint<f64>, Failure> {
    match InversionState::<f64>::read_json(path) {
        Ok(s) if !s.slots.is_empty() => Ok(SolutionPoint::from_state(&s)),
        Ok(_) => Err(ccsi::Error::parse(path, "state holds no fields (the inversion stopped before its first iteration)").into()),
        Err(_) => Ok(SolutionPoint::read_json(path)?),
    }
}

fn cmd_landscape(cfg: &RunConfig, out: &Path, data: &Path, points: [&PathBuf; 2], act: Option<&Path>, overwrite: bool) -> Outcome {
    let paths = claim(out, &["landscape.csv".into(), "config.json".into()], overwrite)?;
    let pb = problem(cfg, data)?;
    let x_cc = load_point(points[0])?;
    let x_mr = load_point(points[1])?;
    let x_act = match act {
        Some(p) => load_point(p)?,
        None => {
            let truth = pb.truth.as_ref().ok_or_else(|| {
                Failure::Config(vec!["the configured phantom has zero contrast; pass --act".into()])
            })?;
            SolutionPoint::actual(&pb.model, &pb.input, truth)?
        }
    };
    let ev = LandscapeEvaluator::new(&pb.model, &pb.input, &x_cc, &x_mr, &x_act)?;
    let axis = analysis::default_axis(cfg.landscape_samples);
    let l = ev.landscape(&axis, &axis);
    l.write_csv(&paths[0])?;
    write_config(cfg, &paths[1])?;
    if let Some((r, c)) = l.argmin() {
        info!("minimum log10 cost {:.3} at beta1 = {}, beta2 = {}", l.value(r, c), l.beta1[r], l.beta2[c]);
    }
    Ok(())
}

fn cmd_validate(out: Option<&Path>, seed: u64, overwrite: bool) -> Outcome {
    let target = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| ccsi::Error::io(dir, e))?;
            Some(claim(dir, &["validate.txt".into()], overwrite)?.remove(0))
        }
        None => None,
    };
    let checks = ccsi::validation::run_all(seed)?;
    let report: String = checks.iter().map(|c| format!("{c}\n")).collect();
    print!("{report}");
    if let Some(p) = target {
        std::fs::write(&p, &report).map_err(|e| ccsi::Error::io(&p, e))?;
    }
    match checks.iter().filter(|c| !c.passed()).count() {
        0 => Ok(()),
        n => Err(Failure::Checks(n)),
    }
}
