//! Subcommand definitions and their file outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use sensoralloc::outer::{grid_oracle, Algorithm, RunReport};
use sensoralloc::plume::forward_matrix;
use sensoralloc::sampling::{draw_sample, BatchStreams};
use sensoralloc::validate::ValidationReport;
use sensoralloc::{QpInstance, Scenario, SensorLayout, WindModel, WindVector};

use crate::config::RunConfig;
use crate::output::{column, layout_rows, num, parse_f64, parse_usize, read_layout, read_table, CsvSink};
use crate::pipeline;
use crate::scenario::ScenarioFile;
use crate::svg::{render, Frame};
use crate::CliError;

/// Run index of `simulate` draws, distinct from optimizer runs.
const SIMULATE_RUN: u64 = u64::MAX - 16;

#[derive(Parser, Debug)]
#[command(name = "sensoralloc", version, about = "Sensor placement for emission-rate estimation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Scenario file, or a preset name (example1, example2, validation20).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Optimizer settings; defaults to the preset matching the scenario name.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Rsaa,
    Sba,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw synthetic emissions, winds and observations at a layout.
    Simulate {
        /// Layout CSV (sensor_index, x, y); defaults to the configured start.
        #[arg(long)]
        layout: Option<PathBuf>,
    },
    /// Estimate emissions from one set of observations.
    SolveInverse {
        /// CSV with sensor_index, x, y, value (and optionally sample).
        #[arg(long)]
        observations: PathBuf,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Wind vector components.
        #[arg(long, allow_hyphen_values = true)]
        wind_x: f64,
        #[arg(long, allow_hyphen_values = true)]
        wind_y: f64,
    },
    /// Layout minimizing the linear-Gaussian Bayes risk.
    InitAopt,
    /// Bilevel layout optimization.
    Optimize {
        #[arg(value_enum)]
        algorithm: AlgorithmArg,
        /// Starting layout CSV; overrides the configured start.
        #[arg(long)]
        init_layout: Option<PathBuf>,
    },
    /// Exhaustive objective sweep over one or two coordinates.
    GridOracle {
        /// Layout whose remaining coordinates stay fixed.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Compare designs by emission-recovery error.
    Validate {
        /// `name=layout.csv`; repeat for each design. Without any, compares
        /// random, A-optimal and bilevel designs.
        #[arg(long = "design")]
        designs: Vec<String>,
    },
    /// Re-render the trajectory plot from iterates.csv.
    Report {
        /// Directory holding iterates.csv; defaults to --out-dir.
        #[arg(long)]
        in_dir: Option<PathBuf>,
    },
}

struct Context {
    scenario: Scenario,
    wind: WindModel,
    config: RunConfig,
    sink: CsvSink,
    seed: u64,
}

fn load(global: &GlobalArgs) -> Result<Context, CliError> {
    let path = global.scenario.as_ref().ok_or_else(|| CliError::Input("--scenario is required".into()))?;
    let (file, _) = ScenarioFile::load(path)?;
    let (scenario, wind) = file.to_domain()?;
    let config = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::for_scenario(path).unwrap_or_default(),
    };
    let sink = CsvSink::new(&global.out_dir, global.seed, file.hash())?;
    Ok(Context { scenario, wind, config, sink, seed: global.seed })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Command::Report { in_dir } = &cli.command {
        return report(&cli.global, in_dir.as_deref());
    }
    let ctx = load(&cli.global)?;
    match &cli.command {
        Command::Simulate { layout } => simulate(&ctx, layout.as_deref()),
        Command::SolveInverse { observations, sample, wind_x, wind_y } => solve_inverse(&ctx, observations, *sample, [*wind_x, *wind_y]),
        Command::InitAopt => init_aopt(&ctx),
        Command::Optimize { algorithm, init_layout } => {
            let algorithm = match algorithm {
                AlgorithmArg::Rsaa => Algorithm::Rsaa,
                AlgorithmArg::Sba => Algorithm::Sba,
            };
            optimize(&ctx, algorithm, init_layout.as_deref())
        }
        Command::GridOracle { template } => grid(&ctx, template.as_deref()),
        Command::Validate { designs } => validate(&ctx, designs),
        Command::Report { .. } => unreachable!(),
    }
}

fn layout_or_start(ctx: &Context, path: Option<&Path>) -> Result<SensorLayout, CliError> {
    let layout = match path {
        Some(p) => read_layout(p)?,
        None => pipeline::initial_layout(&ctx.scenario, &ctx.wind, &ctx.config, ctx.seed)?,
    };
    ctx.scenario.check_layout(&layout).map_err(|e| CliError::Input(format!("layout: {e}")))?;
    Ok(layout)
}

fn simulate(ctx: &Context, layout: Option<&Path>) -> Result<(), CliError> {
    let layout = layout_or_start(ctx, layout)?;
    let streams = BatchStreams::new(ctx.seed, SIMULATE_RUN, 0);
    let mut obs = Vec::new();
    let mut truth = Vec::new();
    let mut winds = Vec::new();
    for k in 0..ctx.config.simulate_count.max(1) {
        let t = draw_sample(&ctx.scenario, &ctx.wind, &layout, streams, k)?;
        for (i, (p, v)) in layout.positions.iter().zip(&t.phi).enumerate() {
            obs.push(vec![k.to_string(), i.to_string(), num(p[0]), num(p[1]), num(*v)]);
        }
        for (j, th) in t.theta.iter().enumerate() {
            truth.push(vec![k.to_string(), j.to_string(), num(*th)]);
        }
        let b = t.beta.beta();
        winds.push(vec![k.to_string(), num(b[0]), num(b[1])]);
    }
    ctx.sink.write("observations.csv", &["sample", "sensor_index", "x", "y", "value"], obs)?;
    ctx.sink.write("truth.csv", &["sample", "source_index", "theta"], truth)?;
    ctx.sink.write("wind.csv", &["sample", "wind_x", "wind_y"], winds)?;
    ctx.sink.write_layout("layout.csv", &layout)?;
    Ok(())
}

fn solve_inverse(ctx: &Context, path: &Path, sample: usize, beta: [f64; 2]) -> Result<(), CliError> {
    let (header, rows) = read_table(path)?;
    let (ci, cx, cy, cv) =
        (column(&header, "sensor_index", path)?, column(&header, "x", path)?, column(&header, "y", path)?, column(&header, "value", path)?);
    let cs = header.iter().position(|h| h == "sample");
    let mut points = Vec::new();
    for (line, row) in rows.iter().enumerate() {
        if let Some(cs) = cs {
            if parse_usize(&row[cs], path, line + 1)? != sample {
                continue;
            }
        }
        let idx = parse_usize(&row[ci], path, line + 1)?;
        let p = [parse_f64(&row[cx], path, line + 1)?, parse_f64(&row[cy], path, line + 1)?];
        points.push((idx, p, parse_f64(&row[cv], path, line + 1)?));
    }
    if points.is_empty() {
        return Err(CliError::Input(format!("{}: no observations for sample {sample}", path.display())));
    }
    points.sort_by_key(|p| p.0);
    let layout = SensorLayout::new(points.iter().map(|p| p.1).collect())?;
    let phi: Vec<f64> = points.iter().map(|p| p.2).collect();
    let wind = WindVector::new(beta)?;
    let f = forward_matrix(&ctx.scenario, &wind, &layout)?;
    let qp = QpInstance::from_forward(&ctx.scenario, &f, &phi)?;
    let sol = ctx.config.evaluation.build().solve(&qp, None)?;
    let rows = (0..qp.dim()).map(|j| {
        [j.to_string(), num(sol.theta_hat[j]), num(sol.eta_hat[j]), sol.active_set.contains(&j).to_string()]
    });
    ctx.sink.write("estimate.csv", &["source_index", "theta_hat", "eta_hat", "active"], rows)?;
    ctx.sink.write_report(
        "run_report.csv",
        &[
            ("sample".into(), sample.to_string()),
            ("sensors".into(), layout.len().to_string()),
            ("kkt_residual".into(), num(sol.kkt_residual)),
            ("iterations".into(), sol.iterations_used.to_string()),
            ("converged".into(), sol.converged.to_string()),
        ],
    )?;
    Ok(())
}

fn init_aopt(ctx: &Context) -> Result<(), CliError> {
    let res = pipeline::aopt_layout(&ctx.scenario, &ctx.wind, &ctx.config, ctx.seed)?;
    ctx.sink.write_layout("layout_aopt.csv", &res.layout)?;
    ctx.sink.write("anneal_trace.csv", &["step", "best_risk"], res.trace.iter().enumerate().map(|(k, r)| [k.to_string(), num(*r)]))?;
    let mut entries = vec![
        ("sensors".to_string(), res.layout.len().to_string()),
        ("risk".to_string(), num(res.risk)),
        ("best_restart".to_string(), res.restart.to_string()),
    ];
    for (r, v) in res.start_risks.iter().enumerate() {
        entries.push((format!("start_risk_{r}"), num(*v)));
    }
    ctx.sink.write_report("run_report.csv", &entries)?;
    Ok(())
}

fn sources(scenario: &Scenario) -> Vec<[f64; 2]> {
    scenario.sources.iter().map(|s| s.location).collect()
}

fn write_trajectory(sink: &CsvSink, frame: &Frame, sources: &[[f64; 2]], iterates: &[SensorLayout]) -> Result<(), CliError> {
    sink.write_text("trajectory.svg", &render(frame, sources, iterates))?;
    Ok(())
}

pub fn run_report_entries(report: &RunReport<f64>, config: &RunConfig, seed: u64) -> Vec<(String, String)> {
    let mut e: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| e.push((k.to_string(), v));
    put("algorithm", format!("{:?}", report.algorithm).to_lowercase());
    put("seed", seed.to_string());
    put("iterations", config.outer.iterations.to_string());
    put("batch_size", config.outer.batch_size.to_string());
    put("runs", report.runs.len().to_string());
    put("sensors", report.combined.len().to_string());
    let trace = report.objective_trace();
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        put("psi_initial", num(first.psi_hat));
        put("psi_initial_std_err", num(first.std_err));
        put("psi_final", num(last.psi_hat));
        put("psi_final_std_err", num(last.std_err));
        put("eval_n", last.eval_n.to_string());
    }
    if let Some(g) = &report.gap {
        put("gap_upper", num(g.upper));
        put("gap_lower", num(g.lower));
        put("gap_delta", num(g.delta));
        put("gap_z_alpha", num(g.z_alpha));
        put("gap_t_alpha", num(g.t_alpha));
        put("gap_runs_used", g.runs_used.to_string());
        put("gap_psi_eval", num(g.psi_eval));
        put("gap_psi_eval_std_err", num(g.psi_eval_std_err));
        put("gap_run_mean", num(g.run_mean));
        put("gap_run_std_err", num(g.run_std_err));
    }
    if let Some(m) = report.runs[0].selected_iterate {
        put("selected_iterate", m.to_string());
    }
    let d = &report.diagnostics;
    put("clamped_steps", d.clamped_steps.to_string());
    put("degenerate_jacobians", d.degenerate_jacobians.to_string());
    put("diverged_inner", d.diverged_inner.to_string());
    put("failed_runs", d.failed_runs.to_string());
    for (k, w) in d.warnings.iter().enumerate() {
        put(&format!("warning_{k}"), w.clone());
    }
    e
}

fn optimize(ctx: &Context, algorithm: Algorithm, init: Option<&Path>) -> Result<(), CliError> {
    let init = layout_or_start(ctx, init)?;
    let report = pipeline::optimize(&ctx.scenario, &ctx.wind, &ctx.config, algorithm, &init, ctx.seed)?;
    let sink = &ctx.sink;
    sink.write_report("run_report.csv", &run_report_entries(&report, &ctx.config, ctx.seed))?;
    let iterates = report.iterates();
    let rows = iterates
        .iter()
        .enumerate()
        .flat_map(|(m, l)| layout_rows(l).map(move |[i, x, y]| [m.to_string(), i, x, y]));
    sink.write("iterates.csv", &["m", "sensor_index", "x", "y"], rows)?;
    let trace = report.objective_trace().iter().map(|t| [t.m.to_string(), num(t.psi_hat), num(t.std_err), t.eval_n.to_string()]);
    sink.write("objective_trace.csv", &["m", "psi_hat", "std_err", "eval_N"], trace)?;
    sink.write_layout("layout_init.csv", &init)?;
    sink.write_layout("layout_final.csv", &report.combined)?;
    if algorithm == Algorithm::Rsaa {
        let rows = report.runs.iter().flat_map(|r| {
            let value = r.batch_objective.map_or_else(String::new, num);
            let status = r.aborted.clone().unwrap_or_else(|| "ok".into());
            layout_rows(&r.final_layout)
                .map(move |[i, x, y]| [r.run.to_string(), value.clone(), status.clone(), i, x, y])
                .collect::<Vec<_>>()
        });
        sink.write("per_run.csv", &["run", "batch_psi_hat", "status", "sensor_index", "x", "y"], rows)?;
    }
    let frame = Frame { lo: ctx.scenario.domain_lo, hi: ctx.scenario.domain_hi };
    write_trajectory(sink, &frame, &sources(&ctx.scenario), iterates)
}

fn grid(ctx: &Context, template: Option<&Path>) -> Result<(), CliError> {
    let g = &ctx.config.grid;
    if g.axes.is_empty() {
        return Err(CliError::Input("config has no [[grid.axes]]".into()));
    }
    let template = layout_or_start(ctx, template)?;
    let eval_n = g.eval_n.unwrap_or(ctx.config.outer.eval_n);
    let res = grid_oracle(
        &ctx.scenario,
        &ctx.wind,
        &template,
        &g.coordinates(),
        &g.grid_axes(),
        eval_n,
        ctx.seed,
        &ctx.config.evaluation.build(),
    )?;
    let header: Vec<String> = if g.axes.len() == 1 {
        vec!["coordinate".into(), "psi_hat".into(), "std_err".into()]
    } else {
        vec!["coordinate_0".into(), "coordinate_1".into(), "psi_hat".into(), "std_err".into()]
    };
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = res.curve.iter().map(|p| {
        let mut r: Vec<String> = p.coords.iter().map(|&c| num(c)).collect();
        r.push(num(p.psi_hat));
        r.push(num(p.std_err));
        r
    });
    ctx.sink.write("curve.csv", &header, rows)?;
    let best = &res.curve[res.best_index];
    let mut entries = vec![
        ("best_index".to_string(), res.best_index.to_string()),
        ("best_psi_hat".to_string(), num(best.psi_hat)),
        ("best_std_err".to_string(), num(best.std_err)),
        ("eval_n".to_string(), eval_n.to_string()),
    ];
    for (k, c) in best.coords.iter().enumerate() {
        entries.push((format!("best_coordinate_{k}"), num(*c)));
    }
    ctx.sink.write_report("run_report.csv", &entries)?;
    ctx.sink.write_layout("layout_best.csv", &res.best_layout)?;
    Ok(())
}

fn write_validation(sink: &CsvSink, designs: &[(String, SensorLayout)], report: &ValidationReport<f64>) -> Result<(), CliError> {
    sink.write("mape.csv", &["design", "mape_percent"], report.designs.iter().map(|d| [d.name.clone(), num(d.mape)]))?;
    let mut q = Vec::new();
    for d in &report.designs {
        for (kind, table) in [("estimate", &d.estimate_quartiles), ("truth", &d.truth_quartiles)] {
            for (j, v) in table.iter().enumerate() {
                let mut row = vec![d.name.clone(), j.to_string(), kind.to_string()];
                row.extend(v.iter().map(|&x| num(x)));
                q.push(row);
            }
        }
    }
    sink.write("quartiles.csv", &["design", "source_index", "kind", "min", "q1", "median", "q3", "max"], q)?;
    let sweep = report.sweep.iter().map(|c| {
        [designs[c.design].0.clone(), num(c.noise_sigma), num(c.prior_sigma), num(c.mean_error)]
    });
    sink.write("sweep.csv", &["design", "noise_sigma", "prior_sigma", "mean_error"], sweep)?;
    let trials = report.records.iter().flat_map(|r| {
        let name = designs[r.design].0.clone();
        (0..r.truth.len())
            .map(|j| [name.clone(), r.trial.to_string(), j.to_string(), num(r.truth[j]), num(r.estimate[j])])
            .collect::<Vec<_>>()
    });
    sink.write("trials.csv", &["design", "trial", "source_index", "truth", "estimate"], trials)?;
    let layouts = designs
        .iter()
        .flat_map(|(name, l)| layout_rows(l).map(move |[i, x, y]| [name.clone(), i, x, y]));
    sink.write("designs.csv", &["design", "sensor_index", "x", "y"], layouts)?;
    Ok(())
}

fn validate(ctx: &Context, specs: &[String]) -> Result<(), CliError> {
    if specs.is_empty() {
        let cmp = pipeline::compare_designs(&ctx.scenario, &ctx.wind, &ctx.config, ctx.seed)?;
        if let Some(b) = &cmp.bilevel {
            ctx.sink.write_report("run_report.csv", &run_report_entries(b, &ctx.config, ctx.seed))?;
        }
        return write_validation(&ctx.sink, &cmp.designs, &cmp.report);
    }
    let mut designs = Vec::with_capacity(specs.len());
    for entry in specs {
        let (name, path) = entry.split_once('=').ok_or_else(|| CliError::Input(format!("--design `{entry}` is not name=path")))?;
        let layout = read_layout(Path::new(path))?;
        ctx.scenario.check_layout(&layout).map_err(|e| CliError::Input(format!("design {name}: {e}")))?;
        designs.push((name.to_string(), layout));
    }
    let report = pipeline::validate_with(&ctx.scenario, &ctx.wind, &ctx.config, &designs, ctx.seed)?;
    write_validation(&ctx.sink, &designs, &report)
}

fn report(global: &GlobalArgs, in_dir: Option<&Path>) -> Result<(), CliError> {
    let dir = in_dir.unwrap_or(&global.out_dir);
    let path = dir.join("iterates.csv");
    let (header, rows) = read_table(&path)?;
    let (cm, ci, cx, cy) =
        (column(&header, "m", &path)?, column(&header, "sensor_index", &path)?, column(&header, "x", &path)?, column(&header, "y", &path)?);
    let mut steps: Vec<Vec<(usize, [f64; 2])>> = Vec::new();
    for (line, row) in rows.iter().enumerate() {
        let m = parse_usize(&row[cm], &path, line + 1)?;
        if steps.len() <= m {
            steps.resize(m + 1, Vec::new());
        }
        steps[m].push((parse_usize(&row[ci], &path, line + 1)?, [parse_f64(&row[cx], &path, line + 1)?, parse_f64(&row[cy], &path, line + 1)?]));
    }
    let mut iterates = Vec::with_capacity(steps.len());
    for mut s in steps.into_iter().filter(|s| !s.is_empty()) {
        s.sort_by_key(|p| p.0);
        iterates.push(SensorLayout::new(s.into_iter().map(|p| p.1).collect())?);
    }
    let (src, frame, hash) = match &global.scenario {
        Some(p) => {
            let (file, _) = ScenarioFile::load(p)?;
            let (scenario, _) = file.to_domain()?;
            (sources(&scenario), Frame { lo: scenario.domain_lo, hi: scenario.domain_hi }, file.hash())
        }
        None => (Vec::new(), Frame::around(iterates.iter().flat_map(|l| l.positions.iter())), "none".to_string()),
    };
    let sink = CsvSink::new(&global.out_dir, global.seed, hash)?;
    write_trajectory(&sink, &frame, &src, &iterates)
}
