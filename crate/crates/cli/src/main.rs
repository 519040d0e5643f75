use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deltashell_cli::{parse_config, run, Overrides, Task};

#[derive(Parser)]
#[command(name = "deltashell", version, about = "Bound states and resolvent-difference decay for δ and δ′ shell interactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the config's task list (bound states by default)
    Solve(Common),
    /// Singular values and decay slopes of resolvent differences
    Schatten(Common),
    /// Identity and consistency suite; exits 0 iff every check passes
    Verify(Common),
    /// Node-count refinement study on a curve
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// circle, ellipse, kite or sphere
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    /// constant δ strength
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// constant δ′ strength
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// quadrature nodes N
    #[arg(long)]
    grid_n: Option<usize>,
    /// task to run; repeatable (solve only)
    #[arg(long, value_parser = parse_task)]
    task: Vec<Task>,
    /// output directory
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown task `{s}`"))
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SOLVER_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("SOLVER_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("SOLVER_THREADS must be a positive integer, got `0`".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, fixed) = match cli.command {
        Command::Solve(c) => (c, None),
        Command::Schatten(c) => (c, Some(Task::Schatten)),
        Command::Verify(c) => (c, Some(Task::Verify)),
        Command::Convergence(c) => (c, Some(Task::Convergence)),
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let mut tasks = common.task;
    if let Some(t) = fixed {
        if !tasks.is_empty() {
            eprintln!("error: --task is only accepted by `solve`");
            return ExitCode::from(2);
        }
        tasks = vec![t];
    }
    let overrides = Overrides {
        geometry: common.geometry,
        radius: common.radius,
        alpha: common.alpha,
        beta: common.beta,
        grid_n: common.grid_n,
        tasks,
        output: common.output,
    };
    let config = match parse_config(common.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&config) {
        Ok(reports) if reports.iter().all(|r| r.ok) => ExitCode::SUCCESS,
        Ok(reports) => {
            for r in reports.iter().filter(|r| !r.ok) {
                eprintln!("{} failed: {}", r.task.name(), r.error.as_deref().unwrap_or(""));
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
