//! Batch driver: runs the tasks of a [`RunConfig`] and writes CSV/JSON
//! artifacts into its output directory.

pub mod config;
pub mod verify;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use deltashell_core::boundary_ops::Geometry;
use deltashell_core::bs_solver::{bs_eigenvalues, default_bracket, find_bound_states, BoundState, SearchOptions};
use deltashell_core::kernels::SpectralPoint;
use deltashell_core::krein_schatten::{
    low_rank_profile, mode_profile, power_difference_factors, DifferenceKind, FitRange, SingularValueProfile, VolumeGrid,
};
use serde::Serialize;

pub use config::{parse_config, parse_config_str, ConfigError, Overrides, RunConfig, Task};

pub const FAILURE_MARKER: &str = "FAILED";

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn backend_name(g: &Geometry) -> &'static str {
    match g {
        Geometry::Curve { .. } => "nystrom",
        Geometry::CircleModes { .. } => "circle_modes",
        Geometry::SphereModes { .. } => "sphere_modes",
    }
}

pub fn bound_states_csv(states: &[BoundState], backend: &str) -> String {
    let mut out = String::from("lambda,multiplicity,residual,mode,backend\n");
    for s in states {
        let mode = s.mode.map(|m| m.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{mode},{backend}", fmt_num(s.lambda), s.multiplicity, fmt_num(s.residual)).unwrap();
    }
    out
}

pub fn singular_values_csv(profiles: &[SingularValueProfile]) -> String {
    let mut out = String::from("tag,k,s_k\n");
    for p in profiles {
        for (k, s) in p.values.iter().enumerate() {
            writeln!(out, "{},{},{}", p.tag, k + 1, fmt_num(*s)).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEntry {
    pub slope: Option<f64>,
    pub fit: [usize; 2],
    pub expected: Option<f64>,
    pub flagged: bool,
}

pub fn slopes_json(profiles: &[SingularValueProfile]) -> String {
    let map: BTreeMap<&str, SlopeEntry> = profiles
        .iter()
        .map(|p| {
            let entry = SlopeEntry { slope: p.slope, fit: [p.fit.lo, p.fit.hi], expected: p.expected_slope, flagged: p.flagged };
            (p.tag.as_str(), entry)
        })
        .collect();
    serde_json::to_string_pretty(&map).expect("slopes serialize") + "\n"
}

pub fn solve_bound_states(config: &RunConfig) -> deltashell_core::Result<(Vec<BoundState>, &'static str)> {
    let spec = config.interaction.spec();
    let geometry = config.geometry();
    let bracket = match config.solver.bracket {
        Some([lo, hi]) => (lo, hi),
        None => default_bracket(&spec, &geometry)?,
    };
    let states = find_bound_states(&spec, &geometry, bracket, config.solver.tol, SearchOptions::default())?;
    Ok((states, backend_name(&geometry)))
}

/// Volume profiles for each configured resolvent power, plus the exact
/// mode-basis profile on circles and spheres.
pub fn schatten_profiles(config: &RunConfig) -> deltashell_core::Result<Vec<SingularValueProfile>> {
    let spec = config.interaction.spec();
    let geometry = config.geometry();
    let point = SpectralPoint::from_lambda(config.schatten.lambda)?;
    let kind = DifferenceKind::for_spec(&spec);
    let mut out = Vec::new();
    if let Some(curve) = config.geometry.curve() {
        let v = &config.volume;
        let volume = if v.tube > 0.0 {
            VolumeGrid::with_tube(v.half_width, v.m, &curve, v.tube)?
        } else {
            VolumeGrid::new(v.half_width, v.m)?
        };
        for &power in &config.schatten.powers {
            let factors = power_difference_factors(power, point, &spec, &geometry, &volume)?;
            let fit = FitRange::default_for(power, config.solver.n);
            let tag = format!("{}_l{power}", kind.tag());
            out.push(low_rank_profile(&factors, fit, tag, Some(kind.expected_slope(power, 2)))?);
        }
    }
    let modes = match config.geometry {
        config::GeometryConfig::Circle { radius } => Some(Geometry::CircleModes { radius, max_order: config.solver.l_max }),
        config::GeometryConfig::Sphere { radius } => Some(Geometry::SphereModes { radius, max_order: config.solver.l_max }),
        _ => None,
    };
    if let Some(g) = modes {
        let unknowns = 2 * config.solver.l_max as usize + 1;
        out.push(mode_profile(kind, point, &spec, &g, FitRange::modes(unknowns))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub nodes: usize,
    pub observable: f64,
    pub observed_order: Option<f64>,
}

/// Largest Birman–Schwinger eigenvalue at a fixed `λ` on a ladder of node
/// counts `N/2^levels, ..., N`, with observed orders from successive
/// differences.
pub fn convergence_study(config: &RunConfig) -> deltashell_core::Result<Vec<ConvergenceRow>> {
    let spec = config.interaction.spec();
    let curve = config
        .geometry
        .curve()
        .ok_or_else(|| deltashell_core::Error::Unsupported("convergence needs a curve geometry".into()))?;
    let point = SpectralPoint::from_lambda(config.convergence.lambda)?;
    let ladder: Vec<usize> = (0..=config.convergence.levels).rev().map(|k| config.solver.n >> k).collect();
    let values = ladder
        .iter()
        .map(|&nodes| Ok(bs_eigenvalues(point, &spec, &Geometry::Curve { curve, nodes })?[0].value))
        .collect::<deltashell_core::Result<Vec<f64>>>()?;
    Ok(ladder
        .iter()
        .enumerate()
        .map(|(i, &nodes)| {
            let observed_order = (i + 2 < values.len()).then(|| {
                let (d0, d1) = ((values[i + 1] - values[i]).abs(), (values[i + 2] - values[i + 1]).abs());
                (d0 / d1).log2()
            });
            ConvergenceRow { nodes, observable: values[i], observed_order: observed_order.filter(|p| p.is_finite()) }
        })
        .collect())
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("N,observable,observed_order\n");
    for r in rows {
        let order = r.observed_order.map(fmt_num).unwrap_or_default();
        writeln!(out, "{},{},{order}", r.nodes, fmt_num(r.observable)).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub task: Task,
    pub ok: bool,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    seed: u64,
    threads: usize,
    config: &'a RunConfig,
    tasks: &'a [TaskReport],
}

fn run_task(task: Task, config: &RunConfig, dir: &Path) -> Result<(), String> {
    let write = |name: &str, body: String| fs::write(dir.join(name), body).map_err(|e| format!("writing {name}: {e}"));
    match task {
        Task::BoundStates => {
            let (states, backend) = solve_bound_states(config).map_err(|e| e.to_string())?;
            log::info!("{} bound states", states.len());
            write("bound_states.csv", bound_states_csv(&states, backend))
        }
        Task::Schatten => {
            let profiles = schatten_profiles(config).map_err(|e| e.to_string())?;
            write("singular_values.csv", singular_values_csv(&profiles))?;
            write("slopes.json", slopes_json(&profiles))
        }
        Task::Convergence => {
            let rows = convergence_study(config).map_err(|e| e.to_string())?;
            write("convergence.csv", convergence_csv(&rows))
        }
        Task::Verify => {
            let checks = verify::run_suite(config.seed).map_err(|e| e.to_string())?;
            write("verify.json", serde_json::to_string_pretty(&checks).expect("checks serialize") + "\n")?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(format!("checks failed: {}", failed.join(", ")))
            }
        }
    }
}

/// Runs the tasks in order. Artifacts of completed tasks are kept when a
/// later task fails; a failure writes [`FAILURE_MARKER`] into the output
/// directory.
pub fn run(config: &RunConfig) -> io::Result<Vec<TaskReport>> {
    let dir = &config.output;
    fs::create_dir_all(dir)?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let mut reports = Vec::new();
    for &task in &config.tasks {
        let start = Instant::now();
        log::info!("running {}", task.name());
        let result = run_task(task, config, dir);
        let seconds = start.elapsed().as_secs_f64();
        if let Err(e) = &result {
            log::error!("{} failed: {e}", task.name());
        }
        reports.push(TaskReport { task, ok: result.is_ok(), seconds, error: result.err() });
    }
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        config,
        tasks: &reports,
    };
    fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")?;
    let failures: Vec<String> =
        reports.iter().filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}\n", r.task.name()))).collect();
    if !failures.is_empty() {
        fs::write(marker, failures.concat())?;
    }
    Ok(reports)
}
