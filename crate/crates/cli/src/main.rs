use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use tunable_magnet::characterization::{
    estimate_bh_trajectory, extract_major_branch, extract_recoil_lines, fit_recoil_permeability,
    simulate_sweep, MeasurementLog,
};
use tunable_magnet::config::{RunConfig, Setup};
use tunable_magnet::plant::Sensor;
use tunable_magnet::tuning::{run_campaign, tune, write_campaign_csv, CampaignSpec, Execution};

const DEFAULT_SET_POINTS: [f64; 8] = [0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175];

#[derive(Parser)]
#[command(name = "tmag", version, about = "Tunable-magnet tuning simulator")]
struct Cli {
    /// Run configuration (JSON). Defaults to the bundled nominal config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One tuning cycle: trajectory.csv and summary.json.
    Tune {
        /// Gap flux set-point, T.
        #[arg(long)]
        set_point: f64,
        /// Air gap, m. Defaults to the config's l_g.
        #[arg(long)]
        gap: Option<f64>,
        /// Start from a thermally demagnetized magnet instead of a
        /// magnetized one.
        #[arg(long)]
        demagnetized: bool,
    },
    /// Repeated cycles over a set-point x gap grid: campaign.csv.
    Campaign {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SET_POINTS)]
        set_points: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0e-3, 1.2e-3])]
        gaps: Vec<f64>,
        /// Cycles per cell.
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Worker threads; defaults to the number of cells capped at the
        /// available parallelism.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recoil fit and major branch from a measurement log.
    Characterize {
        #[arg(long)]
        log: PathBuf,
    },
    /// Simulated major-loop sweep with recoil excursions: sweep_log.csv.
    Sweep,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let loaded = load_config(&cli);
    let out = match (&cli.out, &loaded) {
        (Some(out), _) => out.clone(),
        (None, Ok((config, _))) => PathBuf::from(&config.output_dir),
        (None, Err(_)) => PathBuf::from("out"),
    };
    let result = loaded.and_then(|(config, base)| run(&cli.command, config, base, &out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Err(w) = write_error(&out, &e) {
                eprintln!("could not write error report: {w:#}");
            }
            ExitCode::FAILURE
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<tunable_magnet::Error>() {
            return core.kind();
        }
        if cause.is::<CampaignFailed>() {
            return "campaign_failed";
        }
    }
    "cli"
}

fn write_error(out: &Path, e: &anyhow::Error) -> Result<()> {
    let report = json!({ "kind": error_kind(e), "message": format!("{e:#}") });
    write_json(out, "error.json", serde_json::to_string_pretty(&report)?)
}

#[derive(Debug)]
struct CampaignFailed;

impl std::fmt::Display for CampaignFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("every campaign cell failed")
    }
}

impl std::error::Error for CampaignFailed {}

fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let (mut config, base) = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (RunConfig::from_json(&text)?, base)
        }
        None => (RunConfig::nominal(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok((config, base))
}

fn run(command: &Command, config: RunConfig, base: PathBuf, out: &Path) -> Result<()> {
    let setup = Setup::from_config(config, base)?;
    match command {
        Command::Tune {
            set_point,
            gap,
            demagnetized,
        } => cmd_tune(&setup, out, *set_point, *gap, *demagnetized),
        Command::Campaign {
            set_points,
            gaps,
            n,
            workers,
        } => cmd_campaign(&setup, out, set_points, gaps, *n, *workers),
        Command::Characterize { log } => cmd_characterize(&setup, out, log),
        Command::Sweep => cmd_sweep(&setup, out),
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(out: &Path, name: &str, text: String) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), text + "\n")?;
    Ok(())
}

fn cmd_tune(
    setup: &Setup,
    out: &Path,
    b_set: f64,
    gap: Option<f64>,
    demagnetized: bool,
) -> Result<()> {
    let l_g = gap.unwrap_or(setup.config.circuit.l_g);
    let sc = setup.scenario(l_g)?;
    let start = if demagnetized {
        sc.plant.demagnetized()?
    } else {
        sc.plant.magnetized()?
    };
    let mut sensor = Sensor::new(&sc.sensor)?;
    let r = tune(b_set, start, &sc, &mut sensor)?;

    r.trajectory.write_csv(create(out, "trajectory.csv")?)?;
    write_json(
        out,
        "summary.json",
        serde_json::to_string_pretty(&r.summary())?,
    )?;
    log::info!(
        "tuned to {} T with error {:.3e} T in {:.3} s",
        b_set,
        r.error,
        r.duration
    );
    println!(
        "final B_g {:.6} T, error {:+.4} mT, duration {:.3} s, saturated {}",
        r.final_b_g,
        r.error * 1e3,
        r.duration,
        r.saturated
    );
    Ok(())
}

fn cmd_campaign(
    setup: &Setup,
    out: &Path,
    set_points: &[f64],
    gaps: &[f64],
    n: usize,
    workers: Option<usize>,
) -> Result<()> {
    if set_points.is_empty() || gaps.is_empty() {
        bail!("campaign needs at least one set-point and one gap");
    }
    let spec = CampaignSpec {
        set_points: set_points.to_vec(),
        gaps: gaps.to_vec(),
        n,
        seed: setup.config.seed,
    };
    let rows = run_campaign(
        &spec,
        |g| setup.scenario(g),
        execution(set_points.len() * gaps.len(), workers),
    )?;
    if rows.iter().all(|r| r.stats.is_none()) {
        let first = rows
            .iter()
            .flat_map(|r| r.failures())
            .next()
            .cloned()
            .unwrap_or_default();
        return Err(anyhow::Error::new(CampaignFailed).context(first));
    }
    for r in rows.iter().filter(|r| r.failures().next().is_some()) {
        log::warn!(
            "cell {} T / {} m: {} failed cycles",
            r.b_g_set,
            r.l_g,
            r.failures().count()
        );
    }
    write_campaign_csv(&rows, create(out, "campaign.csv")?)?;
    println!(
        "{} cells written to {}",
        rows.len(),
        out.join("campaign.csv").display()
    );
    Ok(())
}

#[cfg(feature = "parallel")]
fn execution(cells: usize, workers: Option<usize>) -> Execution {
    let cap = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    Execution::Parallel {
        workers: Some(workers.unwrap_or(cells.min(cap)).max(1)),
    }
}

#[cfg(not(feature = "parallel"))]
fn execution(_cells: usize, workers: Option<usize>) -> Execution {
    if workers.is_some_and(|w| w > 1) {
        log::warn!("built without the parallel feature; running sequentially");
    }
    Execution::Sequential
}

fn cmd_characterize(setup: &Setup, out: &Path, log_path: &Path) -> Result<()> {
    let log = MeasurementLog::from_csv_path(log_path)?;
    let hints = setup.hints();
    let traj = estimate_bh_trajectory(&log, &setup.config.circuit);
    let report = fit_recoil_permeability(&extract_recoil_lines(&traj, &hints))?;
    let major = match extract_major_branch(&traj, &hints) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("major branch not extracted: {e}");
            None
        }
    };

    write_json(
        out,
        "fit_report.json",
        serde_json::to_string_pretty(&report)?,
    )?;
    report.write_points_csv(create(out, "recoil_points.csv")?)?;
    if let Some(m) = &major {
        m.write_csv(create(out, "major_branch.csv")?)?;
    }
    println!(
        "mu_rec = {:.6} * B_r' + {:.6} from {} excursions (rms {:.2e})",
        report.slope, report.intercept, report.n, report.residual_rms
    );
    Ok(())
}

fn cmd_sweep(setup: &Setup, out: &Path) -> Result<()> {
    let plant = setup.plant_for_gap(setup.config.circuit.l_g)?;
    let mut sensor = Sensor::new(&setup.sensor(setup.config.seed))?;
    let sweep = simulate_sweep(
        &plant,
        plant.demagnetized()?,
        &setup.config.sweep,
        &mut sensor,
    )?;
    sweep.log.write_csv(create(out, "sweep_log.csv")?)?;
    println!(
        "{} samples written to {}",
        sweep.log.len(),
        out.join("sweep_log.csv").display()
    );
    Ok(())
}
