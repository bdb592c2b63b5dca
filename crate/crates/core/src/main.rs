use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use swarmsim::io::{export_csv, export_geojson, load_scenario, LoadedScenario};
use swarmsim::pipeline::{plan_routes, run_mission};
use swarmsim::routing::RoutingError;

#[derive(Parser)]
#[command(
    name = "swarmsim",
    version,
    about = "Deterministic multi-drone flight simulator"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan routes, fly the swarm and export the trajectory.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Geojson)]
        format: Format,
        /// Also write tracking metrics as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Plan routes only and write the plan as JSON.
    PlanRoute {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also run the exhaustive planner and compare.
        #[arg(long)]
        oracle: bool,
    },
    /// Load and check a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Geojson,
    Csv,
}

enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn load(path: &Path) -> Result<LoadedScenario, Failure> {
    load_scenario(path)
        .map_err(|e| Failure::Input(format!("{} [{}] {e}", path.display(), e.code())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn simulate(
    scenario: &Path,
    out: &Path,
    format: Format,
    metrics: Option<&Path>,
) -> Result<(), Failure> {
    let l = load(scenario)?;
    let run = run_mission(&l).map_err(|e| Failure::Runtime(e.to_string()))?;
    match format {
        Format::Geojson => export_geojson(&run.trajectory, &l.scenario.inertial_frame, out),
        Format::Csv => export_csv(&run.trajectory, out),
    }
    .map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(p) = metrics {
        write(p, &run.metrics.to_json())?;
    }
    let end = run
        .trajectory
        .tracks
        .iter()
        .filter_map(|t| t.samples.last())
        .map(|s| s.t)
        .fold(0.0, f64::max);
    println!(
        "simulated {} drone(s) to t = {end:.3} s",
        run.trajectory.tracks.len()
    );
    for (kind, n) in run.trajectory.event_counts() {
        println!("  {:<22}{n}", kind.as_str());
    }
    for d in &run.metrics.drones {
        println!(
            "  {}: rmse {:.4} m, flown {:.3} m",
            d.drone_id, d.rmse, d.flown_length
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn plan_route(scenario: &Path, out: &Path, oracle: bool) -> Result<(), Failure> {
    let l = load(scenario)?;
    let routing_failure = |e: RoutingError| match e {
        RoutingError::TooLarge { .. } => Failure::Input(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    };
    let plan = plan_routes(&l, false).map_err(routing_failure)?;
    println!(
        "heuristic total length {:.6} m (feasible: {})",
        plan.total_length, plan.feasible
    );
    for v in &plan.violations {
        println!("  violation: {v}");
    }
    let mut doc = json!({
        "drone_ids": l.swarm.drones().iter().map(|d| d.id.as_str()).collect::<Vec<_>>(),
        "plan": plan,
    });
    if oracle {
        let exact = plan_routes(&l, !l.pinned_routes).map_err(routing_failure)?;
        let gap = if exact.total_length > 0.0 {
            100.0 * (plan.total_length - exact.total_length) / exact.total_length
        } else {
            0.0
        };
        println!(
            "oracle total length {:.6} m (heuristic gap {gap:.3}%)",
            exact.total_length
        );
        doc["oracle"] = json!(exact);
    }
    write(
        out,
        &serde_json::to_string_pretty(&doc).expect("plan serializes"),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}

fn validate(scenario: &Path) -> Result<(), Failure> {
    let l = load(scenario)?;
    println!(
        "{}: ok ({} drone(s), {} waypoint(s), {} obstacle(s), tick {} s, dt {} s)",
        scenario.display(),
        l.swarm.drones().len(),
        l.mission.waypoints.len(),
        l.scenario.conditions.obstacles.len(),
        l.scenario.reference_time_step,
        l.scenario.integration_step,
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = match &cli.command {
        Command::Simulate {
            scenario,
            out,
            format,
            metrics,
        } => simulate(scenario, out, *format, metrics.as_deref()),
        Command::PlanRoute {
            scenario,
            out,
            oracle,
        } => plan_route(scenario, out, *oracle),
        Command::Validate { scenario } => validate(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
