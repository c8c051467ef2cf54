//! `plainwalk`: drift, entropy and boundary computations for random walks on
//! plain groups, driven by a JSON configuration or a named preset.
//!
//! Exit codes: 0 success, 1 invariant violation in `verify`, 2 malformed
//! input, 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use plainwalk::boundary;
use plainwalk::config::{RunConfig, WalkConfig, WalkSpec};
use plainwalk::drift_entropy::{self, EntropyOptions};
use plainwalk::group::PlainGroup;
use plainwalk::linalg;
use plainwalk::linearize::{self, Construction};
use plainwalk::pipeline::{self, Analysis, PipelineOptions};
use plainwalk::presets::{self, ApplicationParams};
use plainwalk::simulator::{self, CurveOptions, WalkRef};
use plainwalk::Error;

#[derive(Parser, Debug)]
#[command(name = "plainwalk", version, about = "Random walks on plain groups: linearization, harmonic measure, drift and entropy")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use a named preset instead of a configuration file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solver tolerance override.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the group and walk.
    Validate,
    /// Linearize a scalar walk into a nearest-neighbor colored walk.
    Linearize,
    /// Solve the hitting and traffic equations.
    SolveBoundary,
    /// Exact drift.
    Drift,
    /// Entropy by Monte Carlo over the boundary, plus the closed form for one color.
    Entropy,
    /// Simulate trajectories: empirical drift, entropy and curves.
    Simulate,
    /// Run the invariant suite; exits with 1 on any violation.
    Verify,
    /// Run a named preset end to end.
    Preset {
        name: String,
        /// Preset parameters such as `L=3 k1=2 k2=2`.
        params: Vec<String>,
    },
}

enum Failure {
    Input(String),
    Numerical(String),
    Violation(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_schema() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

struct Run {
    cfg: RunConfig,
    group: PlainGroup,
    walk: WalkSpec,
    preset: Option<(String, Vec<String>)>,
}

fn load(cli: &Cli) -> Result<Run, Failure> {
    let preset = match (&cli.command, &cli.preset) {
        (Command::Preset { name, params }, _) => Some((name.clone(), params.clone())),
        (_, Some(name)) => Some((name.clone(), Vec::new())),
        _ => None,
    };
    let mut cfg = match (&preset, &cli.config) {
        (Some(_), Some(_)) => return Err(Failure::Input("--config and a preset are mutually exclusive".into())),
        (Some((name, params)), None) => presets::config(name, params)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        (None, None) => return Err(Failure::Input("pass --config PATH or --preset NAME".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(Failure::Input("--tol must be positive".into()));
        }
        cfg.solver.tol = tol;
    }
    let (group, walk) = cfg.build()?;
    Ok(Run { cfg, group, walk, preset })
}

fn pipeline_options(cfg: &RunConfig, with_entropy: bool) -> PipelineOptions {
    PipelineOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        construction: cfg.solver.construction,
        entropy: with_entropy.then(|| EntropyOptions { samples: cfg.mc.nu_samples, seed: cfg.mc.seed, depth: cfg.mc.nu_depth, ..Default::default() }),
    }
}

fn to_json<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn matrices(group: &PlainGroup, ms: &[linalg::Mat]) -> Value {
    let mut map = serde_json::Map::new();
    for g in group.generators() {
        map.insert(group.name(g).to_string(), json!(linalg::to_rows(&ms[g.index()])));
    }
    Value::Object(map)
}

fn validate(run: &Run) -> Value {
    let g = &run.group;
    let walk = match &run.walk {
        WalkSpec::Scalar(w) => json!({
            "kind": "scalar",
            "support": w.support_size(),
            "max_length": w.max_len(),
            "nearest_neighbor": w.is_nearest_neighbor(),
            "symmetric": w.is_symmetric(g, 1e-12),
            "identity_mass": w.identity_mass(),
            "generates": w.generates(g),
            "mean_length": w.mean_length(),
        }),
        WalkSpec::Colored(k) => json!({ "kind": "colored", "validation": to_json(&k.validate(g)) }),
    };
    json!({
        "group": { "free_rank": g.free_rank(), "finite_orders": g.finite_factors().iter().map(|f| f.order()).collect::<Vec<_>>(), "alphabet": g.alphabet_size(), "nonamenable": g.is_nonamenable() },
        "walk": walk,
    })
}

fn linearize_cmd(run: &Run) -> Result<Value, Failure> {
    let WalkSpec::Scalar(w) = &run.walk else {
        return Err(Failure::Input("linearize needs a scalar walk".into()));
    };
    let mut out = Vec::new();
    for construction in [Construction::General, Construction::Reversible] {
        if construction == Construction::Reversible && !w.is_symmetric(&run.group, 1e-12) {
            continue;
        }
        let lin = pipeline::linearize_with(&run.group, w, construction)?;
        let fr = linearize::verify_first_return(&run.group, &lin, w).ok();
        out.push(json!({
            "construction": construction,
            "colors": lin.kernel.colors(),
            "labels": lin.labels.iter().map(|l| l.describe(&run.group)).collect::<Vec<_>>(),
            "expected_tau": lin.expected_tau,
            "first_return": fr.map(|f| json!({ "law_error": f.law_error, "tau_error": f.tau_error, "transient_states": f.transient_states })),
            "kernel": to_json(&WalkConfig::from_kernel(&run.group, &lin.kernel)),
        }));
    }
    Ok(json!({ "color_counts": to_json(&linearize::color_counts(w)), "linearizations": out }))
}

fn solve_cmd(run: &Run, a: &Analysis) -> Value {
    let g = &run.group;
    let z = boundary::z_consistency_check(g, &a.kernel, &a.hit);
    let lalley = boundary::find_lalley_parameters(g, &a.hit, 4, 4);
    json!({
        "colors": a.kernel.colors(),
        "hitting": { "iterations": a.hit.iterations, "residual": a.hit.residual, "monotone": a.hit.monotone, "q": matrices(g, &a.hit.q) },
        "traffic": {
            "path": to_json(&a.traffic.path),
            "iterations": a.traffic.iterations,
            "residual": a.traffic.traffic_residual,
            "cross_check": a.traffic.cross_check,
            "stochastic_residual": a.traffic.stochastic_residual,
            "pi": a.traffic.pi.iter().copied().collect::<Vec<_>>(),
            "mu": matrices(g, &a.traffic.mu),
        },
        "stationarity_residual": boundary::stationarity_residual(g, &a.kernel, &a.hit, &a.traffic),
        "z_relation": to_json(&z),
        "product_condition": lalley.map(|l| json!({ "k": l.k, "m": l.m, "words_checked": l.words_checked })),
    })
}

fn drift_cmd(run: &Run, a: &Analysis) -> Result<Value, Failure> {
    let mut out = json!({
        "drift": a.drift(),
        "colored": to_json(&a.drift_colored),
        "scale": a.scale,
        "expected_tau": a.linearization.as_ref().map(|l| l.expected_tau),
    });
    if let Some((name, params)) = &run.preset {
        if name == "application-sec6" {
            let p = ApplicationParams::parse(params)?;
            let oracle = drift_entropy::application_drift_oracle(&p.profile())?;
            out["application_oracle"] = json!({
                "L": p.max_len, "k1": p.k1, "k2": p.k2,
                "oracle": oracle,
                "pipeline": a.drift(),
                "difference": (oracle - a.drift()).abs(),
                "agrees": (oracle - a.drift()).abs() <= 1e-8,
            });
        }
    }
    Ok(out)
}

fn entropy_cmd(a: &Analysis) -> Value {
    let s = a.summary();
    json!({ "entropy": to_json(&a.entropy()), "monte_carlo": to_json(&s.entropy), "closed_form": to_json(&s.entropy_closed_form) })
}

fn simulate_cmd(run: &Run, a: Option<&Analysis>, out: Option<&Path>) -> Result<Value, Failure> {
    let (g, mc) = (&run.group, &run.cfg.mc);
    let mut report = serde_json::Map::new();
    match &run.walk {
        WalkSpec::Scalar(w) => {
            let d = simulator::empirical_drift(g, WalkRef::Scalar(w), mc.n_paths, mc.horizon, mc.seed)?;
            report.insert("drift".into(), to_json(&d));
        }
        WalkSpec::Colored(k) => {
            let by_color = (0..k.colors())
                .map(|u| simulator::empirical_drift(g, WalkRef::Colored(k, u), mc.n_paths, mc.horizon, mc.seed).map(|d| to_json(&d)))
                .collect::<Result<Vec<_>, _>>()?;
            report.insert("drift_by_start_color".into(), Value::Array(by_color));
        }
    }
    if mc.entropy_horizon > 0 {
        let walk = match &run.walk {
            WalkSpec::Scalar(w) => WalkRef::Scalar(w),
            WalkSpec::Colored(k) => WalkRef::Colored(k, 0),
        };
        let e = simulator::empirical_entropy_logp(g, walk, mc.n_paths, mc.entropy_horizon, mc.seed, simulator::DEFAULT_STATE_CAP)?;
        let corrected = e.increment - 0.5 * (e.horizon as f64 / (e.horizon - 1).max(1) as f64).ln();
        report.insert("entropy_logp".into(), to_json(&e));
        report.insert("entropy_increment_corrected".into(), json!(corrected));
    }
    if let (WalkSpec::Scalar(w), Some(a), true) = (&run.walk, a, mc.action_horizon > 0 && g.finite_factors().is_empty()) {
        let h = a.entropy().map(|r| r.value).unwrap_or(f64::NAN);
        let opts = CurveOptions {
            n_paths: mc.n_paths,
            horizon: mc.horizon,
            action_size: mc.action_size,
            action_horizon: mc.action_horizon,
            saturation_margin: 3.0,
            seed: mc.seed,
        };
        let c = simulator::curves(g, w, a.drift(), h, &opts)?;
        report.insert("curves".into(), to_json(&c));
        if let Some(dir) = out {
            if run.cfg.output.formats.iter().any(|f| f == "csv") {
                let mut writer = csv::Writer::from_path(dir.join("curves.csv")).map_err(|e| Failure::Numerical(e.to_string()))?;
                for row in &c.rows {
                    writer.serialize(row).map_err(|e| Failure::Numerical(e.to_string()))?;
                }
                writer.flush().map_err(|e| Failure::Numerical(e.to_string()))?;
            }
        }
    }
    Ok(Value::Object(report))
}

fn execute(cli: &Cli) -> Result<(String, Value), Failure> {
    let run = load(cli)?;
    let out = cli.out.as_deref().or(run.cfg.output.dir.as_deref().map(Path::new));
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    let analysis = |entropy: bool| pipeline::analyze(&run.group, &run.walk, &pipeline_options(&run.cfg, entropy));
    let (name, value) = match &cli.command {
        Command::Validate => {
            let v = validate(&run);
            if let WalkSpec::Colored(k) = &run.walk {
                if !k.validate(&run.group).is_valid() {
                    return Err(Failure::Input(format!("kernel is not valid: {}", v["walk"]["validation"])));
                }
            }
            ("validate", v)
        }
        Command::Linearize => ("linearize", linearize_cmd(&run)?),
        Command::SolveBoundary => ("solve-boundary", solve_cmd(&run, &analysis(false)?)),
        Command::Drift => ("drift", drift_cmd(&run, &analysis(false)?)?),
        Command::Entropy => ("entropy", entropy_cmd(&analysis(true)?)),
        Command::Simulate => {
            let a = analysis(true)?;
            ("simulate", simulate_cmd(&run, Some(&a), out)?)
        }
        Command::Verify | Command::Preset { .. } => {
            let opts = pipeline_options(&run.cfg, true);
            let a = pipeline::analyze(&run.group, &run.walk, &opts)?;
            let v = pipeline::verify(&run.group, &run.walk, &a, &opts)?;
            let mut report = json!({ "summary": to_json(&a.summary()), "verify": to_json(&v) });
            if let Command::Preset { name, .. } = &cli.command {
                report["preset"] = json!(name);
                report["drift"] = drift_cmd(&run, &a)?;
                report["simulate"] = simulate_cmd(&run, Some(&a), out)?;
            }
            let name = if matches!(cli.command, Command::Verify) { "verify" } else { "preset" };
            let oracle_ok = report["drift"]["application_oracle"]["agrees"].as_bool().unwrap_or(true);
            if !v.passed || !oracle_ok {
                write_artifact(out, name, &report)?;
                return Err(Failure::Violation(report));
            }
            (name, report)
        }
    };
    write_artifact(out, name, &value)?;
    Ok((name.to_string(), value))
}

fn write_artifact(out: Option<&Path>, name: &str, value: &Value) -> Result<(), Failure> {
    if let Some(dir) = out {
        let text = serde_json::to_string_pretty(value).expect("json") + "\n";
        fs::write(dir.join(format!("{name}.json")), text).map_err(|e| Failure::Numerical(e.to_string()))?;
    }
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("PLAINWALK_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn print_json(value: &Value) {
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("json"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match execute(&cli) {
        Ok((_, value)) => {
            print_json(&value);
            ExitCode::SUCCESS
        }
        Err(Failure::Violation(report)) => {
            print_json(&report);
            eprintln!("error: invariant violation");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
