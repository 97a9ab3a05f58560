use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use specind::dynamics::{block_kernel, glauber_kernel, mixing_report, shattering_check, simulate_glauber};
use specind::gibbs::{parse_rational, rational_to_f64};
use specind::influence::spectral_independence;
use specind::levels::WeightedComplex;
use specind::matroid::{parse_probability, probability_to_f64, reliability, simulate_bases_exchange, MatroidSpec};
use specind::numerics::{gap, reversible_spectrum};
use specind::verify::{run_matroid_suite, run_spin_suite, sweep, SweepConfig};
use specind::{Caps, Error, Graph, SpinSystem};

/// Exact spectral-independence and matroid walk analysis on small instances.
///
/// Exit codes: 0 success, 1 a check failed, 2 input error, 3 enumeration cap exceeded.
#[derive(Parser, Debug)]
#[command(name = "specind", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
#[command(next_help_heading = "Global options")]
struct Global {
    /// Largest state space enumerated exhaustively
    #[arg(long, global = true, env = "SPECIND_MAX_STATES", default_value_t = 1 << 20)]
    max_states: u128,
    /// Largest number of pinnings swept
    #[arg(long, global = true, env = "SPECIND_MAX_PINNINGS", default_value_t = 1_000_000)]
    max_pinnings: u128,
    /// Largest number of matroid bases listed
    #[arg(long, global = true, env = "SPECIND_MAX_BASES", default_value_t = 100_000)]
    max_bases: u128,
    /// Worker threads for parallel sweeps; results do not depend on it
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Write the output here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Influence, level gaps, Glauber/block gaps and mixing times of a hard-core model
    Analyze {
        /// Graph JSON: {"n": 3, "edges": [[0, 1], [1, 2]]}
        graph: PathBuf,
        /// Activity, decimal or fraction
        #[arg(long, default_value = "1")]
        lambda: String,
        /// Mixing-time accuracy; repeat for several
        #[arg(long, default_values_t = [0.25])]
        eps: Vec<f64>,
        /// Block fraction for the shattering report (0 disables it)
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Monte Carlo draws when shattering cannot be enumerated
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// RNG seed for Monte Carlo shattering
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the check suite on a hard-core model or a matroid
    Verify {
        /// Graph JSON for a hard-core model
        #[arg(long, value_name = "GRAPH", conflicts_with = "matroid", required_unless_present = "matroid")]
        spin: Option<PathBuf>,
        /// Activity for --spin, decimal or fraction
        #[arg(long, default_value = "1")]
        lambda: String,
        /// Matroid spec JSON
        #[arg(long, value_name = "SPEC")]
        matroid: Option<PathBuf>,
        /// RNG seed for the random probes
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate the bases-exchange walk or hard-core Glauber dynamics
    Sample {
        /// Matroid spec JSON
        #[arg(long, value_name = "SPEC", conflicts_with = "hardcore", required_unless_present = "hardcore")]
        matroid: Option<PathBuf>,
        /// Graph JSON for hard-core Glauber dynamics
        #[arg(long, value_name = "GRAPH")]
        hardcore: Option<PathBuf>,
        /// Activity for --hardcore, decimal or fraction
        #[arg(long, default_value = "1")]
        lambda: String,
        /// Walk steps after the initial state
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail (exit 1) when the empirical TV to the exact law exceeds this [default: off]
        #[arg(long)]
        tolerance: Option<f64>,
        /// Emit the trajectory (hard-core) or visit counts (matroid) as CSV
        #[arg(long, default_value_t = false)]
        csv: bool,
    },
    /// Reliability polynomial at p by the dual formula and by direct enumeration
    Reliability {
        /// Matroid spec JSON
        #[arg(long, value_name = "SPEC")]
        matroid: PathBuf,
        /// Edge survival probability, decimal or fraction
        #[arg(long, default_value = "1/2")]
        p: String,
    },
    /// Run the check suites over a grid of graphs, activities and matroids
    Sweep {
        /// Sweep config JSON
        config: PathBuf,
    },
}

enum Failure {
    Input(String),
    Cap(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::CapExceeded { .. } => Failure::Cap(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

struct Output {
    text: String,
    failed: Option<String>,
}

impl Output {
    fn json(v: &Value) -> Self {
        Self { text: serde_json::to_string_pretty(v).expect("json serializes"), failed: None }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<Graph, Failure> {
    Graph::from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_matroid(path: &Path) -> Result<MatroidSpec, Failure> {
    MatroidSpec::from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn analyze(graph: &Graph, lambda: &str, eps: &[f64], alpha: f64, samples: u64, seed: u64, g: &Global, caps: &Caps) -> Result<Output, Failure> {
    let activity = parse_rational(lambda)?;
    let system = SpinSystem::build_hardcore(graph, &activity, caps)?;
    let n = system.n();
    let si = spectral_independence(&system, caps)?;
    let complex = WeightedComplex::from_spin_system(&system, caps)?;
    let levels = complex.local_gaps()?;
    let glauber = glauber_kernel(&system)?;
    let glauber_gap = gap(&reversible_spectrum(&glauber)?);
    let mut blocks = Vec::new();
    for m in 1..=n {
        let gm = gap(&reversible_spectrum(&block_kernel(&system, m)?)?);
        blocks.push(json!({"block_size": m, "gamma": gm.gamma, "absolute_gap": gm.absolute_gap}));
    }
    let mixing = if n > 0 { Some(to_value(&mixing_report(&glauber, n, eps)?)) } else { None };
    let mut report = json!({
        "n": n,
        "lambda": lambda,
        "states": system.len(),
        "eta": si.eta,
        "b": si.b,
        "per_level_max_eigenvalue": si.per_level_max,
        "level_gaps": to_value(&levels),
        "glauber": {"gamma": glauber_gap.gamma, "absolute_gap": glauber_gap.absolute_gap, "lambda_star": glauber_gap.lambda_star},
        "block": blocks,
        "mixing": mixing,
    });
    if alpha > 0.0 {
        let m = ((alpha * n as f64).round() as usize).clamp(1, n.max(1));
        report["shattering"] = to_value(&shattering_check(graph, m, samples, seed, g.threads as u64)?);
    }
    Ok(Output::json(&report))
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    let g = &cli.global;
    let caps = Caps { max_configs: g.max_states, max_pinnings: g.max_pinnings, max_bases: g.max_bases };
    match &cli.command {
        Command::Analyze { graph, lambda, eps, alpha, samples, seed } => {
            if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                return Err(Failure::Input("--eps values must lie in (0, 1)".into()));
            }
            if !(0.0..=1.0).contains(alpha) {
                return Err(Failure::Input(format!("--alpha must lie in [0, 1], got {alpha}")));
            }
            analyze(&load_graph(graph)?, lambda, eps, *alpha, *samples, *seed, g, &caps)
        }
        Command::Verify { spin, lambda, matroid, seed } => {
            let report = match (spin, matroid) {
                (Some(path), None) => {
                    let graph = load_graph(path)?;
                    let system = SpinSystem::build_hardcore(&graph, &parse_rational(lambda)?, &caps)?;
                    run_spin_suite(&system, *seed, &caps)?
                }
                (None, Some(path)) => run_matroid_suite(&load_matroid(path)?.build()?, *seed, &caps)?,
                _ => return Err(Failure::Input("give exactly one of --spin or --matroid".into())),
            };
            let failed = (!report.pass).then(|| {
                let lines: Vec<String> = report
                    .failures()
                    .map(|c| format!("{} [{}]: {}", c.name, c.instance, c.notes.as_deref().unwrap_or("")))
                    .collect();
                format!("{} check(s) failed\n{}", report.failed, lines.join("\n"))
            });
            Ok(Output { text: report.to_json(), failed })
        }
        Command::Sample { matroid, hardcore, lambda, steps, seed, tolerance, csv } => {
            let (out, tv) = match (matroid, hardcore) {
                (Some(path), None) => {
                    let m = load_matroid(path)?.build()?;
                    let traj = simulate_bases_exchange(&m, *steps, *seed);
                    let tv = m.bases(&caps).ok().map(|b| traj.tv_to_uniform(&b));
                    let out = if *csv {
                        let total = (traj.steps + 1) as f64;
                        let mut s = String::from("basis,count,frequency\n");
                        for (&b, &c) in &traj.counts {
                            let elems: Vec<String> = (0..64).filter(|i| b >> i & 1 == 1).map(|i: usize| i.to_string()).collect();
                            s.push_str(&format!("{},{c},{}\n", elems.join(" "), c as f64 / total));
                        }
                        Output { text: s, failed: None }
                    } else {
                        Output::json(&json!({
                            "seed": traj.seed,
                            "steps": traj.steps,
                            "initial": traj.initial,
                            "final": traj.final_basis,
                            "distinct_bases_visited": traj.counts.len(),
                            "tv_to_uniform": tv,
                        }))
                    };
                    (out, tv)
                }
                (None, Some(path)) => {
                    let graph = load_graph(path)?;
                    let activity = parse_rational(lambda)?;
                    let traj = simulate_glauber(&graph, rational_to_f64(&activity), *steps, *seed, *csv)?;
                    let tv = SpinSystem::build_hardcore(&graph, &activity, &caps).ok().map(|s| traj.tv_to(&s));
                    let out = if *csv {
                        Output { text: traj.to_csv(), failed: None }
                    } else {
                        Output::json(&json!({
                            "seed": traj.seed,
                            "steps": traj.steps,
                            "final": traj.final_state.to_bitstring(traj.n),
                            "mean_occupancy": traj.mean_occupancy,
                            "distinct_states_visited": traj.empirical_counts.len(),
                            "tv_to_exact": tv,
                        }))
                    };
                    (out, tv)
                }
                _ => return Err(Failure::Input("give exactly one of --matroid or --hardcore".into())),
            };
            match (tolerance, tv) {
                (Some(t), Some(tv)) if tv > *t => {
                    Ok(Output { failed: Some(format!("empirical TV {tv} exceeds tolerance {t}")), ..out })
                }
                _ => Ok(out),
            }
        }
        Command::Reliability { matroid, p } => {
            let m = load_matroid(matroid)?.build()?;
            let p = probability_to_f64(&parse_probability(p)?);
            Ok(Output::json(&to_value(&reliability(&m, p, &caps)?)))
        }
        Command::Sweep { config } => {
            let config = SweepConfig::from_json(&read(config)?)?;
            let outcome = sweep(&config, &caps)?;
            let failed = (outcome.failed > 0).then(|| format!("{} of {} instances failed", outcome.failed, outcome.instances));
            Ok(Output { text: serde_json::to_string_pretty(&outcome).expect("json serializes"), failed })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads.max(1)).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    let (out, code) = match run(&cli) {
        Ok(out) => {
            let code = if let Some(msg) = &out.failed {
                eprintln!("FAIL: {msg}");
                1
            } else {
                0
            };
            (Some(out.text), code)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            (None, 2)
        }
        Err(Failure::Cap(msg)) => {
            eprintln!("error: {msg}; raise the cap with --max-states/--max-pinnings/--max-bases or the SPECIND_MAX_* variables");
            (None, 3)
        }
    };
    if let Some(mut text) = out {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &cli.global.out {
            Some(path) => {
                if let Err(e) = std::fs::write(path, text) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            None => {
                use std::io::Write;
                // a closed pipe (e.g. `| head`) is not an error worth reporting
                let _ = std::io::stdout().lock().write_all(text.as_bytes());
            }
        }
    }
    ExitCode::from(code)
}
