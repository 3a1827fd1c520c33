//! `phg`: command-line front end for the expansion pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use phg_core::error::exit_code;
use phg_core::formal::formal_expansion;
use phg_core::harness::report::emit_report;
use phg_core::harness::{
    load_model, options_from_config, problem_from_config, run_pipeline, scenarios, solve_problem, HarnessError,
    RunConfig, Scenario, ScenarioContext,
};
use phg_core::indices::{build_index_set, characteristic_roots};
use phg_core::modeode::fit::Comparison;
use phg_core::modeode::{ExpansionReport, Grid};
use phg_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "phg",
    version,
    about = "Polyhomogeneous cusp expansions and their numerical cross-checks"
)]
struct Cli {
    /// TOML run configuration; its keys override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomised property draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts.
    #[arg(long, global = true, env = "PHG_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Indicial roots m̄, m̲ of an eigenvalue, as JSON.
    Roots {
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
    },
    /// Index set up to a cutoff, with resonance marks, as CSV.
    Indexset {
        #[arg(long)]
        model: String,
        #[arg(long, allow_hyphen_values = true)]
        cutoff: f64,
    },
    /// Formal expansion to a given order.
    Expand(ProblemArgs),
    /// Picard oracle on a grid.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// e.g. "x0=0.1,xmin=1e-6,n=512"
        #[arg(long)]
        grid: Option<String>,
        /// Picard stopping tolerance (sup-norm change).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Full pipeline with checks; exit status 1 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    /// Model JSON file or built-in name (point, circle:MODES[:R], torus:N:CUTOFF[:R]).
    #[arg(long)]
    model: Option<String>,
    /// Series JSON for the expansion of f; omitted means f ≡ −c0.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    order: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c0: Option<f64>,
    /// log1p, expm1, identity or taylor:a0,a1,...
    #[arg(long)]
    germ: Option<String>,
    /// Comma-separated v(x₀) per mode.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    boundary: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Run one bundled scenario.
    #[arg(long, conflicts_with = "all")]
    scenario: Option<String>,
    /// Run every bundled scenario.
    #[arg(long)]
    all: bool,
    /// List the bundled scenarios and exit.
    #[arg(long)]
    list: bool,
}

const DEFAULT_OUTPUT_DIR: &str = "phg-output";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Roots { lambda } => roots(*lambda),
        Command::Indexset { model, cutoff } => {
            let model = load_model(model)?;
            print!("{}", build_index_set(&model, *cutoff)?.to_csv()?);
            Ok(exit_code::PASS)
        }
        Command::Expand(args) => {
            let cfg = config(&cli, args, None, None)?;
            expand(&cfg)
        }
        Command::Solve { problem, grid, tol } => {
            let cfg = config(&cli, problem, grid.as_deref(), *tol)?;
            solve(&cfg)
        }
        Command::Verify(v) => verify(&cli, v),
    }
}

/// Flags first, then the keys of `--config` on top.
fn config(cli: &Cli, p: &ProblemArgs, grid: Option<&str>, tol: Option<f64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(m) = &p.model {
        cfg.model_file = Some(m.clone());
    }
    if let Some(s) = &p.source {
        cfg.source_file = Some(s.clone());
    }
    if let Some(k) = p.order {
        cfg.order = k;
    }
    if let Some(c0) = p.c0 {
        cfg.c0 = c0;
    }
    if let Some(g) = &p.germ {
        cfg.germ = g.clone();
    }
    if let Some(b) = &p.boundary {
        cfg.boundary = Some(b.clone());
    }
    if let Some(g) = grid {
        cfg.grid = Grid::parse(g)?.into();
    }
    if let Some(t) = tol {
        cfg.tolerances.picard = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = Some(d.clone());
    }
    if let Some(path) = &cli.config {
        cfg = cfg.overlay_file(path)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| io_error(path, e))?;
    Ok(())
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

fn to_json(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn roots(lambda: f64) -> Result<i32> {
    let r = characteristic_roots(lambda)?;
    let exact = r
        .exact
        .map(|(a, b)| json!({ "m_bar": a.to_string(), "m_under": b.to_string() }));
    print!(
        "{}",
        to_json(&json!({ "lambda": lambda, "m_bar": r.m_bar, "m_under": r.m_under, "exact": exact }))
    );
    Ok(exit_code::PASS)
}

fn expand(cfg: &RunConfig) -> Result<i32> {
    let p = problem_from_config(cfg)?;
    let sol = formal_expansion(&p, cfg.order)?;
    let coefficients: Vec<_> = sol
        .psi
        .terms()
        .flat_map(|(k, c)| {
            c.as_slice()
                .iter()
                .enumerate()
                .map(move |(l, &v)| json!({ "i": k.exponent, "j": k.log_power, "mode": l, "value": v }))
        })
        .collect();
    let free: Vec<_> = sol
        .free_components
        .iter()
        .map(|f| json!({ "i": f.exponent, "modes": f.modes, "value": f.value.as_slice() }))
        .collect();
    let doc = json!({
        "order": sol.order,
        "coefficients": coefficients,
        "log_bounds": sol.log_bounds,
        "free_components": free,
        "residual_leading": sol.residual_leading,
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "mode", "value"])
        .map_err(HarnessError::from)?;
    for (k, c) in sol.psi.terms() {
        for (l, v) in c.as_slice().iter().enumerate() {
            w.write_record([
                k.exponent.to_string(),
                k.log_power.to_string(),
                l.to_string(),
                v.to_string(),
            ])
            .map_err(HarnessError::from)?;
        }
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| HarnessError::Input(e.to_string()))?)
        .expect("csv output is utf-8");
    let dir = output_dir(cfg);
    write(&dir.join("formal.json"), &to_json(&doc))?;
    write(&dir.join("coefficients.csv"), &table)?;
    print!("{table}");
    Ok(exit_code::PASS)
}

fn solve(cfg: &RunConfig) -> Result<i32> {
    let p = problem_from_config(cfg)?;
    let options = options_from_config(cfg)?;
    let (_, picard) = solve_problem(&p, cfg.order, &options)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "mode", "value"]).map_err(HarnessError::from)?;
    for s in &picard.solutions {
        for (k, v) in s.values.iter().enumerate() {
            w.write_record([options.grid.x(k).to_string(), s.mode.to_string(), v.to_string()])
                .map_err(HarnessError::from)?;
        }
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| HarnessError::Input(e.to_string()))?)
        .expect("csv output is utf-8");
    let doc = serde_json::to_value(&picard.solutions).map_err(HarnessError::from)?;
    let dir = output_dir(cfg);
    write(&dir.join("solutions.json"), &to_json(&doc))?;
    write(&dir.join("solutions.csv"), &table)?;
    println!(
        "picard converged in {} sweeps (last change {:e}); wrote {}",
        picard.iterations,
        picard.defect,
        dir.display()
    );
    Ok(exit_code::PASS)
}

fn verify(cli: &Cli, v: &VerifyArgs) -> Result<i32> {
    if v.list {
        for s in scenarios() {
            println!("{:<20} {}", s.name, s.summary);
        }
        return Ok(exit_code::PASS);
    }
    let cfg = config(cli, &v.problem, v.grid.as_deref(), v.tol)?;
    let dir = output_dir(&cfg);
    let ctx = ScenarioContext {
        seed: cfg.seed,
        order: v.problem.order,
    };
    let selected: Vec<&Scenario> = if v.all {
        scenarios().iter().collect()
    } else if let Some(name) = v.scenario.as_ref().or(cfg.scenario.as_ref()) {
        vec![phg_core::harness::find_scenario(name).ok_or_else(|| HarnessError::UnknownScenario(name.clone()))?]
    } else {
        let report = run_pipeline(&cfg)?;
        emit_report(&report, &dir)?;
        print_report("pipeline", &report);
        return Ok(status(report.passed()));
    };
    let mut passed = true;
    for s in selected {
        let report = s.run(&ctx)?;
        emit_report(&report, &dir.join(s.name))?;
        print_report(s.name, &report);
        passed &= report.passed();
    }
    Ok(status(passed))
}

fn status(passed: bool) -> i32 {
    if passed {
        exit_code::PASS
    } else {
        exit_code::CHECK_FAILURE
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_report(name: &str, r: &ExpansionReport) {
    for c in &r.checks {
        let target = match c.comparison {
            Comparison::Relative => format!("expected {:e} ± {:e} relative", c.expected, c.tolerance),
            Comparison::Absolute => format!("expected {:e} ± {:e}", c.expected, c.tolerance),
            Comparison::Below => format!("bound {:e}", c.expected),
        };
        println!(
            "{} {name}: {}: observed {:e}, {target} [{}]",
            verdict(c.pass),
            c.name,
            c.observed,
            c.provenance
        );
    }
    for s in &r.remainder_slopes {
        let slope = s.slope.map_or("-".to_string(), |v| format!("{v:.4}"));
        let note = s.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
        println!(
            "{} {name}: remainder slope k={:.4} {slope} vs {:.4}{note}",
            verdict(s.pass),
            s.k,
            s.expected
        );
    }
}
