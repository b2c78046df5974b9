//! `mzi` — command-line front end for the nested-MZI weak-measurement
//! simulator.
//!
//! Subcommands: `run` (full report), `sweep` (CSV over a parameter grid),
//! `weak-values` (CSV weak-value table), `scenario` (emit a canonical `.mzc`
//! file), `validate` (parse and check a circuit file).
//!
//! Exit codes: 0 success; 1 usage error; 2 parse/validation error
//! (diagnostics on stderr, one per line, `line:col: message`); 3 physics
//! error (impossible post-selection, zero overlap).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mzi_sim::circuitfile::{parse_detailed, serialize, Parsed, SourceSpan};
use mzi_sim::engine::{
    dark_port_magnitude, detector_probability, evolve, post_select, sweep, DarkPortSpec,
};
use mzi_sim::model::{bind_params, validate_circuit, Circuit, Subsystem};
use mzi_sim::scenarios::{build_scenario, dark_port, ScenarioKind, ScenarioOptions};
use mzi_sim::tsvf::{first_order_response_check, weak_value_report};
use mzi_sim::Error as SimError;

const EXIT_USAGE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_PHYSICS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mzi",
    about = "Nested Mach-Zehnder interferometer simulator with a weak-measurement probe",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a circuit and print the full post-selected report.
    Run(RunArgs),
    /// Sweep one parameter over a linear grid and print CSV rows.
    Sweep(SweepArgs),
    /// Print the weak-value table at a cut as CSV.
    #[command(name = "weak-values")]
    WeakValues(WeakValuesArgs),
    /// Emit the canonical circuit file of a named scenario.
    Scenario(ScenarioArgs),
    /// Parse and validate a circuit file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Scenario name: nominal, blocked_b, blocked_c, detuned, single_arm_b,
    /// single_arm_c, outer_arms.
    #[arg(long, conflicts_with = "circuit")]
    scenario: Option<String>,
    /// Path of an .mzc circuit file.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Parameter override NAME=VALUE (repeatable). For scenarios, EPS sets
    /// the coupling (default 0.1), DELTA the detuning (detuned only) and
    /// EPS_A the outer-arm coupling (outer_arms only).
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Also place cuts `entrance` and `exit` on the inner boundary legs
    /// (scenarios only).
    #[arg(long)]
    boundary_cuts: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Detector to post-select on.
    #[arg(long)]
    select: String,
    /// Output path (written atomically); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Parameter to sweep.
    #[arg(long)]
    param: String,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    select: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeakValuesArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Cut label to evaluate at.
    #[arg(long)]
    cut: String,
    /// Post-selection detector.
    #[arg(long)]
    select: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    boundary_cuts: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    circuit: PathBuf,
}

struct Failure {
    code: u8,
    messages: Vec<String>,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, messages: vec![msg.into()] }
    }

    fn parse(messages: Vec<String>) -> Failure {
        Failure { code: EXIT_PARSE, messages }
    }

    fn physics(msg: impl Into<String>) -> Failure {
        Failure { code: EXIT_PHYSICS, messages: vec![msg.into()] }
    }
}

/// Name-resolution failures are usage errors; impossible physics is not.
fn classify(err: SimError) -> Failure {
    match err {
        SimError::PostSelectionImpossible { .. } | SimError::ZeroOverlap { .. } => {
            Failure::physics(err.to_string())
        }
        _ => Failure::usage(err.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::WeakValues(args) => cmd_weak_values(args),
        Command::Scenario(args) => cmd_scenario(args),
        Command::Validate(args) => cmd_validate(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            for msg in &failure.messages {
                eprintln!("{msg}");
            }
            ExitCode::from(failure.code)
        }
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_set_args(pairs: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut map = BTreeMap::new();
    for pair in pairs {
        let Some((name, value)) = pair.split_once('=') else {
            return Err(Failure::usage(format!("--set `{pair}`: expected NAME=VALUE")));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| Failure::usage(format!("--set `{pair}`: malformed value")))?;
        if map.insert(name.to_string(), value).is_some() {
            return Err(Failure::usage(format!("--set `{name}` given twice")));
        }
    }
    Ok(map)
}

fn parse_scenario_kind(name: &str, delta: Option<f64>) -> Result<ScenarioKind, Failure> {
    let kind = ScenarioKind::from_name(name, delta.unwrap_or(0.0)).ok_or_else(|| {
        Failure::usage(format!(
            "unknown scenario `{name}`; expected one of: nominal, blocked_b, blocked_c, \
             detuned, single_arm_b, single_arm_c, outer_arms"
        ))
    })?;
    if delta.is_some() && !matches!(kind, ScenarioKind::Detuned { .. }) {
        return Err(Failure::usage(format!("--set DELTA=... applies only to detuned, not {name}")));
    }
    Ok(kind)
}

/// A loaded circuit plus what the loader knows about it.
struct Loaded {
    circuit: Circuit,
    kind: Option<ScenarioKind>,
    dark_port: Option<DarkPortSpec>,
    /// Overrides remaining after scenario construction consumed its knobs.
    overrides: BTreeMap<String, f64>,
}

fn build_scenario_source(
    name: &str,
    sets: &[String],
    boundary_cuts: bool,
) -> Result<Loaded, Failure> {
    let mut sets = parse_set_args(sets)?;
    let delta = sets.remove("DELTA");
    let kind = parse_scenario_kind(name, delta)?;
    let eps = sets.get("EPS").copied().unwrap_or(0.1);
    let eps_a = sets.remove("EPS_A");
    if eps_a.is_some() && !matches!(kind, ScenarioKind::OuterArms) {
        return Err(Failure::usage(format!(
            "--set EPS_A=... applies only to outer_arms, not {name}"
        )));
    }
    let options = ScenarioOptions { eps_a, boundary_cuts, ..Default::default() };
    let circuit = build_scenario(kind, eps, &options).map_err(classify)?;
    let dark = dark_port(&circuit);
    Ok(Loaded { circuit, kind: Some(kind), dark_port: dark, overrides: sets })
}

fn load_circuit_file(path: &Path, sets: &[String]) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::parse(vec![format!("{}: {e}", path.display())]))?;
    let Parsed { circuit, stage_spans, detector_spans } = parse_detailed(&text)
        .map_err(|errors| Failure::parse(errors.iter().map(|e| e.to_string()).collect()))?;
    let report = validate_circuit(&circuit);
    if !report.ok() {
        // Map stage-indexed diagnostics back to source lines; circuit-level
        // findings fall back to the matching detector line or the file head.
        let messages = report
            .issues
            .iter()
            .map(|issue| {
                let span = issue
                    .stage
                    .and_then(|i| stage_spans.get(i))
                    .or_else(|| {
                        detector_spans
                            .iter()
                            .zip(&circuit.detectors)
                            .find(|(_, d)| issue.message.contains(d.name.as_str()))
                            .map(|(s, _)| s)
                    })
                    .copied()
                    .unwrap_or(SourceSpan { line: 1, col_start: 1, col_end: 1 });
                format!("{}:{}: {} ({})", span.line, span.col_start, issue.message, issue.rule)
            })
            .collect();
        return Err(Failure::parse(messages));
    }
    Ok(Loaded { circuit, kind: None, dark_port: None, overrides: parse_set_args(sets)? })
}

fn load(source: &SourceArgs) -> Result<Loaded, Failure> {
    match (&source.scenario, &source.circuit) {
        (Some(name), None) => build_scenario_source(name, &source.set, source.boundary_cuts),
        (None, Some(path)) => {
            if source.boundary_cuts {
                return Err(Failure::usage("--boundary-cuts applies only to scenarios"));
            }
            load_circuit_file(path, &source.set)
        }
        _ => Err(Failure::usage("exactly one of --scenario or --circuit is required")),
    }
}

/// Writes atomically when a path is given (temp file + rename), else stdout.
fn emit(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            tmp.write_all(content.as_bytes())
                .and_then(|_| tmp.persist(path).map(|_| ()).map_err(|e| e.error))
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let loaded = load(&args.source)?;
    let circuit = &loaded.circuit;
    let bindings = bind_params(circuit, &loaded.overrides).map_err(classify)?;
    let select_subsystem = circuit.detector(&args.select).map_err(classify)?.rail.subsystem;

    let trace = evolve(circuit, &bindings).map_err(classify)?;
    let p_select = detector_probability(&trace, &args.select).map_err(classify)?;
    let stats = post_select(&trace, select_subsystem, &args.select).map_err(classify)?;

    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    if let Some(kind) = loaded.kind {
        push("scenario", kind.name().into());
    }
    push("select", args.select.clone());
    for (name, value) in &bindings {
        push(&format!("binding.{name}"), fmt17(*value));
    }
    push("p_select", fmt17(p_select));
    if let Some(spec) = &loaded.dark_port {
        let mag = dark_port_magnitude(&trace, spec).map_err(classify)?;
        push("dark_mag", fmt17(mag));
    }
    for (name, p) in &stats.conditionals {
        push(&format!("cond.{name}"), fmt17(*p));
    }
    push("cond.sink", fmt17(stats.sink_prob));
    push("s_imbalance", fmt17(stats.imbalance));

    if circuit.cut_index("inner").is_ok() && select_subsystem == Subsystem::System {
        let weak = weak_value_report(circuit, "inner", &args.select).map_err(classify)?;
        push("overlap.re", fmt17(weak.overlap.re));
        push("overlap.im", fmt17(weak.overlap.im));
        for (rail, w) in &weak.weak_values {
            push(&format!("wv.{rail}.re"), fmt17(w.re));
            push(&format!("wv.{rail}.im"), fmt17(w.im));
        }
    }
    if let Some(kind) = loaded.kind {
        let coupled: Option<&[&str]> = match kind {
            ScenarioKind::Nominal => Some(&["B", "C"]),
            ScenarioKind::SingleArmB => Some(&["B"]),
            ScenarioKind::SingleArmC => Some(&["C"]),
            _ => None,
        };
        if let (Some(rails), Subsystem::System) = (coupled, select_subsystem) {
            let record =
                first_order_response_check(circuit, rails, &args.select, 1e-4).map_err(classify)?;
            push("response.weak_value_sum.re", fmt17(record.weak_value_sum.re));
            push("response.weak_value_sum.im", fmt17(record.weak_value_sum.im));
            push("response.full_dS_deps", fmt17(record.full_derivative));
            push("response.effective_dS_deps", fmt17(record.effective_derivative));
            push("response.difference", fmt17(record.difference));
        }
    }

    emit(args.out.as_deref(), &out)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if args.steps < 1 {
        return Err(Failure::usage("--steps must be at least 1"));
    }
    if args.from > args.to {
        return Err(Failure::usage(format!(
            "--from {} must not exceed --to {}",
            args.from, args.to
        )));
    }
    let loaded = load(&args.source)?;
    let mut circuit = loaded.circuit;
    if !loaded.overrides.is_empty() {
        circuit.params = bind_params(&circuit, &loaded.overrides).map_err(classify)?;
    }

    let values: Vec<f64> = if args.steps == 1 {
        vec![args.from]
    } else {
        (0..args.steps)
            .map(|i| args.from + (args.to - args.from) * i as f64 / (args.steps - 1) as f64)
            .collect()
    };
    let result = sweep(&circuit, &args.param, &values, &args.select, loaded.dark_port.as_ref())
        .map_err(classify)?;
    for row in &result.rows {
        if let Err(msg) = &row.outcome {
            eprintln!("row {}: {msg}", row.value);
        }
    }
    emit(args.out.as_deref(), &result.to_csv())
}

fn cmd_weak_values(args: WeakValuesArgs) -> Result<(), Failure> {
    let loaded = load(&args.source)?;
    let mut circuit = loaded.circuit;
    if !loaded.overrides.is_empty() {
        circuit.params = bind_params(&circuit, &loaded.overrides).map_err(classify)?;
    }
    let report = weak_value_report(&circuit, &args.cut, &args.select).map_err(classify)?;
    emit(args.out.as_deref(), &report.to_csv())
}

fn cmd_scenario(args: ScenarioArgs) -> Result<(), Failure> {
    let loaded = build_scenario_source(&args.scenario, &args.set, args.boundary_cuts)?;
    let mut circuit = loaded.circuit;
    if !loaded.overrides.is_empty() {
        circuit.params = bind_params(&circuit, &loaded.overrides).map_err(classify)?;
    }
    emit(args.out.as_deref(), &serialize(&circuit))
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    load_circuit_file(&args.circuit, &[])?;
    println!("ok");
    Ok(())
}
