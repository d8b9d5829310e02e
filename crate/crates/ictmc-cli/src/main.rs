//! Command-line interface: ergodicity checks, lower expectations, long-run
//! limits, reachability graphs and the property selftest, all driven by one
//! JSON model file.
//!
//! Exit codes are a stable contract: 0 success (ergodic / converged), 1
//! negative verdict or property violation, 2 input error, 3 non-convergence.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ictmc::ergodic::{build_graph, decide_ergodic, limit_lower_expectation, ErgodicityWitness};
use ictmc::gamble::Gamble;
use ictmc::modelfile::parse_model;
use ictmc::rates::LowerRateModel;
use ictmc::report::{dot_graph, model_digest, RunReport};
use ictmc::semigroup::TransitionSolver;
use ictmc::StateSpace;

const EXIT_OK: i32 = 0;
const EXIT_NEGATIVE: i32 = 1;
const EXIT_INPUT: i32 = 2;
const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "ictmc",
    version,
    about = "Lower transition operators and ergodicity of imprecise continuous-time Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide ergodicity of the model's rate operator, with certificate.
    Check {
        /// Model file (JSON).
        model: PathBuf,
    },
    /// Compute the lower and upper expectations T_t f and T̄_t f.
    Evaluate {
        model: PathBuf,
        /// Gamble values, one per state.
        #[arg(long = "f", num_args = 1.., required = true, allow_negative_numbers = true)]
        f: Vec<f64>,
        /// Time horizon.
        #[arg(long)]
        t: f64,
        /// Solver tolerance (Richardson stopping rule).
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Iterate T_t f to its long-run limit.
    Limit {
        model: PathBuf,
        #[arg(long = "f", num_args = 1.., required = true, allow_negative_numbers = true)]
        f: Vec<f64>,
        /// Stop once max - min of the iterate is below this.
        #[arg(long = "span-tol", default_value_t = 1e-6)]
        span_tol: f64,
        /// Give up past this time horizon.
        #[arg(long = "t-cap", default_value_t = 1e6)]
        t_cap: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Emit the upper-reachability graph.
    Graph {
        model: PathBuf,
        /// Output format (only "dot").
        #[arg(long, default_value = "dot")]
        format: String,
    },
    /// Run the property battery on seeded random models.
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        trials: usize,
        /// Negative control: inject a corrupted operator and expect the
        /// battery to notice.
        #[arg(long, hide = true)]
        inject_defect: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    let code = match dispatch(cli, started) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli, started: Instant) -> Result<i32, ictmc::Error> {
    match cli.command {
        Command::Check { model } => cmd_check(&model, started),
        Command::Evaluate { model, f, t, tol } => cmd_evaluate(&model, &f, t, tol, started),
        Command::Limit { model, f, span_tol, t_cap, tol } => {
            cmd_limit(&model, &f, span_tol, t_cap, tol, started)
        }
        Command::Graph { model, format } => cmd_graph(&model, &format),
        Command::Selftest { seed, trials, inject_defect } => {
            cmd_selftest(seed, trials, inject_defect, started)
        }
    }
}

fn load_model(path: &PathBuf) -> Result<(String, LowerRateModel), ictmc::Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ictmc::Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let (_, model) = parse_model(&text)?;
    Ok((text, model))
}

fn header(report: &mut RunReport, path: &PathBuf, text: &str, model: &LowerRateModel) {
    report.field("model", path.display());
    report.field("digest", model_digest(text));
    report.field("states", model.n());
}

fn labels(space: &StateSpace, states: &[usize]) -> String {
    if states.is_empty() {
        return "-".into();
    }
    states.iter().map(|&i| space.label(i)).collect::<Vec<_>>().join(" ")
}

fn finish(report: &mut RunReport, started: Instant, code: i32) -> i32 {
    report.line("wall_ms", started.elapsed().as_millis());
    print!("{}", report.render());
    code
}

fn cmd_check(path: &PathBuf, started: Instant) -> Result<i32, ictmc::Error> {
    let (text, model) = load_model(path)?;
    let space = model.space().clone();
    let outcome = decide_ergodic(&model);

    let mut report = RunReport::new("check");
    header(&mut report, path, &text, &model);
    report.field("verdict", if outcome.verdict { "ergodic" } else { "not-ergodic" });
    report.field("top_class", labels(&space, &outcome.top_class));
    match &outcome.witness {
        ErgodicityWitness::Ergodic { paths, absorption } => {
            for (state, path) in paths.iter().enumerate() {
                report.line(
                    &format!("path[{}]", space.label(state)),
                    path.iter().map(|&i| space.label(i)).collect::<Vec<_>>().join(" -> "),
                );
            }
            for (k, set) in absorption.sets.iter().enumerate() {
                report.line(&format!("absorption[{k}]"), labels(&space, set));
            }
        }
        ErgodicityWitness::EmptyTopClass { from, to } => {
            report.field(
                "reason",
                format!(
                    "top class is empty: no path from {} to {}",
                    space.label(*from),
                    space.label(*to)
                ),
            );
        }
        ErgodicityWitness::NotAbsorbed { state, trace } => {
            report.field(
                "reason",
                format!("state {} never lower-reaches the top class", space.label(*state)),
            );
            for (k, set) in trace.sets.iter().enumerate() {
                report.line(&format!("absorption[{k}]"), labels(&space, set));
            }
        }
    }
    report.machine("top_class_indices", serde_json::json!(outcome.top_class));
    report.machine("ergodic", serde_json::json!(outcome.verdict));
    let code = if outcome.verdict { EXIT_OK } else { EXIT_NEGATIVE };
    Ok(finish(&mut report, started, code))
}

fn gamble_from_args(model: &LowerRateModel, f: &[f64]) -> Result<Gamble, ictmc::Error> {
    if f.len() != model.n() {
        return Err(ictmc::Error::DimensionMismatch { expected: model.n(), got: f.len() });
    }
    Gamble::new(f.to_vec())
}

fn cmd_evaluate(
    path: &PathBuf,
    f: &[f64],
    t: f64,
    tol: f64,
    started: Instant,
) -> Result<i32, ictmc::Error> {
    let (text, model) = load_model(path)?;
    let gamble = gamble_from_args(&model, f)?;
    let space = model.space().clone();
    let solver = TransitionSolver::new(model, tol, 40)?;

    let lower = solver.evolve(&gamble, t)?;
    let upper_run = solver.evolve(&gamble.neg(), t)?;
    let upper = upper_run.value.neg();

    let mut report = RunReport::new("evaluate");
    header(&mut report, path, &text, solver.model());
    report.field("t", t);
    report.field("tolerance", format!("{tol:e}"));
    report.field("f", f.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
    for (i, v) in lower.value.values().iter().enumerate() {
        report.line(&format!("lower[{}]", space.label(i)), format!("{v:.9}"));
    }
    for (i, v) in upper.values().iter().enumerate() {
        report.line(&format!("upper[{}]", space.label(i)), format!("{v:.9}"));
    }
    report.field("steps_used", lower.steps_used + upper_run.steps_used);
    report.field("est_error", format!("{:.3e}", lower.est_error.max(upper_run.est_error)));
    let converged = lower.converged && upper_run.converged;
    report.field("converged", converged);
    report.machine("lower", serde_json::json!(lower.value.values()));
    report.machine("upper", serde_json::json!(upper.values()));
    let code = if converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
    Ok(finish(&mut report, started, code))
}

fn cmd_limit(
    path: &PathBuf,
    f: &[f64],
    span_tol: f64,
    t_cap: f64,
    tol: f64,
    started: Instant,
) -> Result<i32, ictmc::Error> {
    let (text, model) = load_model(path)?;
    let gamble = gamble_from_args(&model, f)?;
    let space = model.space().clone();
    let solver = TransitionSolver::new(model, tol, 40)?;
    let outcome = limit_lower_expectation(&solver, &gamble, span_tol, t_cap)?;

    let mut report = RunReport::new("limit");
    header(&mut report, path, &text, solver.model());
    report.field("span_tol", format!("{span_tol:e}"));
    report.field("t_cap", t_cap);
    report.field("converged", outcome.converged);
    match outcome.value {
        Some(v) => {
            report.field("value", format!("{v:.9}"));
            report.field("half_span", format!("{:.3e}", outcome.half_span));
        }
        None => {
            for (i, v) in outcome.gamble.values().iter().enumerate() {
                report.line(&format!("value[{}]", space.label(i)), format!("{v:.9}"));
            }
        }
    }
    report.field("t_final", outcome.t_final);
    report.field("est_error", format!("{:.3e}", outcome.est_error));
    report.machine("gamble", serde_json::json!(outcome.gamble.values()));
    let code = if outcome.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
    Ok(finish(&mut report, started, code))
}

fn cmd_graph(path: &PathBuf, format: &str) -> Result<i32, ictmc::Error> {
    if format != "dot" {
        return Err(ictmc::Error::InvalidInput(format!(
            "unsupported graph format {format:?} (only \"dot\")"
        )));
    }
    let (_, model) = load_model(path)?;
    let graph = build_graph(&model);
    let outcome = decide_ergodic(&model);
    print!("{}", dot_graph(model.space(), &graph, &outcome.top_class));
    Ok(EXIT_OK)
}

fn cmd_selftest(
    seed: u64,
    trials: usize,
    inject_defect: bool,
    started: Instant,
) -> Result<i32, ictmc::Error> {
    let outcome = ictmc::selftest::run(seed, trials, inject_defect)?;
    let mut report = RunReport::new("selftest");
    report.field("seed", seed);
    report.field("trials", trials);
    for check in &outcome.checks {
        report.line(
            &format!("check[{}]", check.name),
            format!("{} {}", if check.passed { "pass" } else { "FAIL" }, check.detail),
        );
    }
    let passed = outcome.passed();
    report.field("result", if passed { "pass" } else { "fail" });
    report.machine(
        "failures",
        serde_json::json!(outcome.failures().map(|c| c.name.clone()).collect::<Vec<_>>()),
    );
    let code = if passed { EXIT_OK } else { EXIT_NEGATIVE };
    Ok(finish(&mut report, started, code))
}
