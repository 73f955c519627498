//! Command-line front end: `validate`, `plan` and `sensitivity`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dsl::{
    lint_domain, parse_domain_with_spans, parse_evidence, Location, ParsedDomain, Severity, Subject,
};
use crate::evidence::EvidenceError;
use crate::merge::MergeError;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineOutput};
use crate::planner::{PlanError, ReviewPolicy};
use crate::sensitivity::{distinguishable, fmt_sig6, sensitivity_grid, ErrorBoundedEF};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "uplan",
    version,
    about = "Hierarchical planning over uncertain possible worlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and lint a domain file.
    Validate { domain: PathBuf },
    /// Plan for every possible world and merge the plans into a super-plan.
    Plan(PlanArgs),
    /// Write the EF ratio threshold grid, or compare two error-bounded EFs.
    Sensitivity(SensitivityArgs),
}

/// Run configuration of the `plan` subcommand.
#[derive(Args, Debug)]
struct PlanArgs {
    domain: PathBuf,
    evidence: PathBuf,
    /// Super-plan JSON output (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write each world's search trace (to OUT.trace, or standard error).
    #[arg(long)]
    trace: bool,
    /// Review offset per abstraction level; `inf` disables review.
    #[arg(long)]
    rho: Option<f64>,
    /// Maximum number of plan nodes per world.
    #[arg(long)]
    budget: Option<usize>,
    /// Coverage threshold as `support,plausibility`.
    #[arg(long, value_parser = parse_pair)]
    threshold: Option<(f64, f64)>,
    /// Also write each world's plan next to OUT.
    #[arg(long)]
    per_world: bool,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    /// Probability error range `lo:hi`.
    #[arg(long, value_parser = parse_range, default_value = "0:0.5")]
    gamma: (f64, f64),
    /// Fulfilment error range `lo:hi`.
    #[arg(long, value_parser = parse_range, default_value = "0:0.5")]
    delta: (f64, f64),
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Grid CSV output (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Contour CSV output.
    #[arg(long)]
    contours: Option<PathBuf>,
    /// Compare two actions: P_A F_A P_ERR_A F_ERR_A P_B F_B P_ERR_B F_ERR_B.
    #[arg(long, num_args = 8, value_names = ["P_A", "F_A", "PE_A", "FE_A", "P_B", "F_B", "PE_B", "FE_B"], allow_negative_numbers = true)]
    check: Option<Vec<f64>>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `support,plausibility`, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected `lo:hi`, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

/// Runs the command line `args` (including the program name) and returns
/// the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Validate { domain } => validate(&domain, stderr),
        Command::Plan(args) => plan(&args, stdout, stderr),
        Command::Sensitivity(args) => sensitivity(&args, stdout, stderr),
    }
}

fn read(path: &Path, stderr: &mut dyn Write) -> Option<String> {
    match std::fs::read_to_string(path) {
        Ok(t) => Some(t),
        Err(e) => {
            let _ = writeln!(stderr, "{}: cannot read: {e}", path.display());
            None
        }
    }
}

fn write_file(path: &Path, text: &str, stderr: &mut dyn Write) -> bool {
    match std::fs::write(path, text) {
        Ok(()) => true,
        Err(e) => {
            let _ = writeln!(stderr, "{}: cannot write: {e}", path.display());
            false
        }
    }
}

/// Parses and lints a domain, printing diagnostics. `None` on any error.
fn load_domain(path: &Path, text: &str, stderr: &mut dyn Write) -> Option<ParsedDomain> {
    let file = path.display().to_string();
    let parsed = match parse_domain_with_spans(text) {
        Ok(p) => p,
        Err(errs) => {
            for e in errs {
                let _ = writeln!(stderr, "{}", e.with_file(&file));
            }
            return None;
        }
    };
    let mut failed = false;
    for d in lint_domain(&parsed.spec) {
        let loc = match &d.subject {
            Subject::Operator(name) => parsed.spans.operators.get(name),
            Subject::Rule(name) => parsed.spans.rules.get(name),
            Subject::Domain => parsed.spans.goal.as_ref(),
        }
        .copied()
        .unwrap_or(Location { line: 1, column: 1 });
        let _ = writeln!(stderr, "{file}:{}:{}: {d}", loc.line, loc.column);
        failed |= d.severity == Severity::Error;
    }
    (!failed).then_some(parsed)
}

fn validate(path: &Path, stderr: &mut dyn Write) -> i32 {
    let Some(text) = read(path, stderr) else {
        return EXIT_USAGE;
    };
    match load_domain(path, &text, stderr) {
        Some(_) => EXIT_OK,
        None => EXIT_FAILURE,
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn plan(args: &PlanArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if let Some(r) = args.rho {
        if r.is_nan() || r < 0.0 {
            let _ = writeln!(stderr, "--rho must be a non-negative number or `inf`");
            return EXIT_USAGE;
        }
    }
    if args.budget == Some(0) {
        let _ = writeln!(stderr, "--budget must be at least 1");
        return EXIT_USAGE;
    }
    if let Some((s, p)) = args.threshold {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&p) {
            let _ = writeln!(stderr, "--threshold values must lie in [0,1]");
            return EXIT_USAGE;
        }
    }
    if args.per_world && args.out.is_none() {
        let _ = writeln!(stderr, "--per-world needs --out");
        return EXIT_USAGE;
    }
    let (Some(dtext), Some(etext)) = (read(&args.domain, stderr), read(&args.evidence, stderr))
    else {
        return EXIT_USAGE;
    };
    let Some(parsed) = load_domain(&args.domain, &dtext, stderr) else {
        return EXIT_FAILURE;
    };
    let evidence = match parse_evidence(&etext) {
        Ok(ev) => ev,
        Err(errs) => {
            let file = args.evidence.display().to_string();
            for e in errs {
                let _ = writeln!(stderr, "{}", e.with_file(&file));
            }
            return EXIT_FAILURE;
        }
    };
    let spec = parsed.spec;
    let mut config = PipelineConfig::for_spec(&spec);
    config.planner.trace = args.trace;
    if let Some(r) = args.rho {
        config.planner.review = ReviewPolicy::new(r);
    }
    if let Some(b) = args.budget {
        config.planner.node_budget = b;
    }
    config.threshold = args.threshold;

    let out = match run_pipeline(&spec, &evidence, &config) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return match e {
                PipelineError::Plan(PlanError::Budget { .. }) => EXIT_BUDGET,
                PipelineError::Evidence(EvidenceError::NoPossibleWorld)
                | PipelineError::Merge(MergeError::Uncovered(_))
                | PipelineError::Plan(_)
                | PipelineError::Evidence(_) => EXIT_FAILURE,
            };
        }
    };
    if emit(args, &out, stdout, stderr) {
        EXIT_OK
    } else {
        EXIT_USAGE
    }
}

fn emit(
    args: &PlanArgs,
    out: &PipelineOutput,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> bool {
    let json = out.superplan.to_json() + "\n";
    match &args.out {
        Some(path) => {
            if !write_file(path, &json, stderr) {
                return false;
            }
        }
        None => {
            let _ = stdout.write_all(json.as_bytes());
        }
    }
    if args.trace {
        let mut text = String::new();
        for wp in &out.plans {
            text.push_str(&format!("# world {}\n", wp.world));
            text.push_str(&wp.trace.to_text());
        }
        match &args.out {
            Some(path) => {
                if !write_file(&with_suffix(path, ".trace"), &text, stderr) {
                    return false;
                }
            }
            None => {
                let _ = stderr.write_all(text.as_bytes());
            }
        }
    }
    if let (true, Some(path)) = (args.per_world, &args.out) {
        for wp in &out.plans {
            let doc =
                serde_json::to_string_pretty(&wp.plan.to_document()).expect("plan serializes");
            let p = with_suffix(path, &format!(".{}.json", sanitize(&wp.world)));
            if !write_file(&p, &(doc + "\n"), stderr) {
                return false;
            }
        }
    }
    true
}

fn sensitivity(args: &SensitivityArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if let Some(v) = &args.check {
        if v.iter().any(|x| !x.is_finite()) {
            let _ = writeln!(stderr, "--check values must be finite");
            return EXIT_USAGE;
        }
        let a = ErrorBoundedEF::new(v[0], v[1], v[2], v[3]);
        let b = ErrorBoundedEF::new(v[4], v[5], v[6], v[7]);
        let (ok, margin) = distinguishable(&a, &b);
        let verdict = if ok {
            "distinguishable"
        } else {
            "not distinguishable"
        };
        let _ = writeln!(stdout, "{verdict}, margin {}", fmt_sig6(margin));
        return EXIT_OK;
    }
    let grid = match sensitivity_grid(args.gamma, args.delta, args.step) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match &args.out {
        Some(p) => {
            if !write_file(p, &grid.grid_csv(), stderr) {
                return EXIT_USAGE;
            }
        }
        None => {
            let _ = stdout.write_all(grid.grid_csv().as_bytes());
        }
    }
    if let Some(p) = &args.contours {
        if !write_file(p, &grid.contours_csv(), stderr) {
            return EXIT_USAGE;
        }
    }
    EXIT_OK
}
