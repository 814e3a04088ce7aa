//! `acmut` command-line front end.
//!
//! Exit status: 0 on success, 1 when the analysis found something
//! (violations, surviving mutants, hidden findings, blocked deltas), 2 on
//! usage or input errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use acmut::analysis::{detect_hidden_with, evolve_policy, DetectionOptions};
use acmut::io::{parse_deltas, parse_policy, policy_hash};
use acmut::mutation::{
    census, classify_mutants, export_mutants, generate_mutants, load_mutants, OperatorKind, Sampling,
};
use acmut::pdp::{decide, derive_concrete_rules};
use acmut::policy::validate_policy;
use acmut::report::to_sorted_json;
use acmut::sim::load_system;
use acmut::testgen::{generate_suite, score_suite, suite_from_json, suite_to_json, Criterion};
use acmut::{EntityKind, Execution, Policy, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    Findings,
    Usage,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Findings => 1,
            ExitStatus::Usage => 2,
        }
    }

    fn findings_if(found: bool) -> Self {
        if found {
            ExitStatus::Findings
        } else {
            ExitStatus::Success
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "acmut", version, about = "Mutation analysis for access-control policies")]
struct Cli {
    /// Report format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Print nothing on stdout; only the exit status reports the outcome.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a policy file for syntax and structural errors.
    Validate { policy: PathBuf },
    /// Decide one request.
    Decide {
        policy: PathBuf,
        #[arg(long)]
        role: String,
        #[arg(long)]
        action: String,
        #[arg(long)]
        context: String,
    },
    /// List the concrete rules derived from each primary rule.
    Derive { policy: PathBuf },
    /// Generate mutants.
    Mutate(MutateArgs),
    /// Generate a test suite.
    GenTests {
        policy: PathBuf,
        #[arg(long, value_parser = parse_criterion)]
        criterion: Criterion,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a suite against exported mutants.
    Score {
        policy: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        mutants: PathBuf,
        /// Count equivalent mutants in the total.
        #[arg(long)]
        keep_equivalents: bool,
    },
    /// Look for hidden access control in a simulated system.
    Detect {
        system: PathBuf,
        /// Probe every permitted mutant test, not only rule-flip footprints.
        #[arg(long)]
        full_universe: bool,
    },
    /// Apply micro-evolutions to a system's visible policy.
    Evolve {
        system: PathBuf,
        #[arg(long)]
        deltas: PathBuf,
    },
}

#[derive(Debug, Args)]
struct MutateArgs {
    policy: PathBuf,
    /// Comma-separated operators, e.g. ppr,prp,rrd. Defaults to the six basic ones.
    #[arg(long, value_delimiter = ',', value_parser = parse_operator)]
    ops: Vec<OperatorKind>,
    /// Directory for mutant policies and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mutants kept from each of the RRD and CRD enumerations.
    #[arg(long, requires = "seed")]
    sample: Option<usize>,
    #[arg(long, requires = "sample")]
    seed: Option<u64>,
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|_| format!("unknown criterion `{s}` (primary, concrete, default, combined)"))
}

fn parse_operator(s: &str) -> Result<OperatorKind, String> {
    s.parse().map_err(|_| format!("unknown operator `{s}`"))
}

struct Output<'a> {
    out: &'a mut dyn Write,
    format: Format,
    quiet: bool,
}

impl Output<'_> {
    /// Prints `text` or the key-sorted JSON of `value`.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> anyhow::Result<()> {
        if self.quiet {
            return Ok(());
        }
        match self.format {
            Format::Json => self.out.write_all(to_sorted_json(value)?.as_bytes())?,
            Format::Text => writeln!(self.out, "{}", text())?,
        }
        Ok(())
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = write!(stdout, "{}", e.render());
                return ExitStatus::Success;
            }
            let rendered = e.render().to_string();
            let _ = write!(stderr, "{rendered}");
            if !rendered.contains("Usage:") {
                let _ = write!(stderr, "\n{}", Cli::command().render_usage());
            }
            return ExitStatus::Usage;
        }
    };
    let mut out = Output {
        out: stdout,
        format: cli.format,
        quiet: cli.quiet,
    };
    match execute(cli.command, &mut out) {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            ExitStatus::Usage
        }
    }
}

fn load_policy(path: &Path) -> anyhow::Result<Policy> {
    acmut::io::read_policy(path).with_context(|| format!("cannot load policy {}", path.display()))
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn execute(command: Command, out: &mut Output<'_>) -> anyhow::Result<ExitStatus> {
    match command {
        Command::Validate { policy } => validate(&policy, out),
        Command::Decide { policy, role, action, context } => {
            let p = load_policy(&policy)?;
            let req = Request::new(role, action, context);
            let d = decide(&p, &req)?;
            out.emit(&json!({ "request": req, "decision": d }), || d.to_string())?;
            Ok(ExitStatus::Success)
        }
        Command::Derive { policy } => {
            let p = load_policy(&policy)?;
            let concrete: Vec<_> = derive_concrete_rules(&p).into_iter().collect();
            out.emit(&concrete, || {
                concrete
                    .iter()
                    .map(|c| format!("{} {}({}, {}, {})", c.origin, c.modality, c.role, c.action, c.context))
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
            Ok(ExitStatus::Success)
        }
        Command::Mutate(args) => mutate(args, out),
        Command::GenTests { policy, criterion, out: file } => {
            let p = load_policy(&policy)?;
            let suite = generate_suite(&p, criterion)?;
            let body = suite_to_json(&suite)?;
            match file {
                Some(path) => {
                    std::fs::write(&path, &body).with_context(|| format!("cannot write {}", path.display()))?;
                    let summary = json!({ "criterion": criterion, "tests": suite.len(), "out": path });
                    out.emit(&summary, || format!("{} tests written to {}", suite.len(), path.display()))?;
                }
                None if out.quiet => {}
                None if out.format == Format::Json => out.out.write_all(body.as_bytes())?,
                None => {
                    for c in &suite.cases {
                        writeln!(out.out, "{} -> {}  # {}", c.request, c.expect, c.intention)?;
                    }
                }
            }
            Ok(ExitStatus::Success)
        }
        Command::Score { policy, suite, mutants, keep_equivalents } => {
            let p = load_policy(&policy)?;
            let suite = suite_from_json(&read(&suite)?, Some(&p))
                .with_context(|| format!("cannot load suite {}", suite.display()))?;
            let (manifest, ms) = load_mutants(&mutants)
                .with_context(|| format!("cannot load mutants from {}", mutants.display()))?;
            if manifest.policy_hash != policy_hash(&p)? {
                bail!("mutants in {} were generated from a different policy", mutants.display());
            }
            let report = score_suite(&p, &suite, &ms, keep_equivalents, Execution::default())?;
            out.emit(&report, || report.to_string())?;
            Ok(ExitStatus::findings_if(!report.score.is_complete()))
        }
        Command::Detect { system, full_universe } => {
            let sys = load_system(&system).with_context(|| format!("cannot load system {}", system.display()))?;
            let report = detect_hidden_with(&sys, DetectionOptions { full_universe }, Execution::default())?;
            out.emit(&report, || report.to_string())?;
            Ok(ExitStatus::findings_if(report.has_findings()))
        }
        Command::Evolve { system, deltas } => {
            let sys = load_system(&system).with_context(|| format!("cannot load system {}", system.display()))?;
            let ds = parse_deltas(&read(&deltas)?, sys.visible_policy())
                .map_err(acmut::Error::Parse)
                .with_context(|| format!("cannot parse deltas {}", deltas.display()))?;
            let report = evolve_policy(&sys, &ds)?;
            out.emit(&report, || report.to_string())?;
            Ok(ExitStatus::findings_if(report.has_blocked()))
        }
    }
}

/// Parse errors and structural violations both count as findings.
fn validate(path: &Path, out: &mut Output<'_>) -> anyhow::Result<ExitStatus> {
    let text = read(path)?;
    let (policy, errors) = match parse_policy(&text) {
        Ok(p) => (Some(p), Vec::new()),
        Err(errors) => (None, errors),
    };
    let violations = policy.as_ref().map(validate_policy).map(|r| r.violations).unwrap_or_default();
    let valid = errors.is_empty() && violations.is_empty();
    let summary = policy.as_ref().map(|p| {
        json!({
            "name": p.name,
            "roles": p.names(EntityKind::Role).count(),
            "actions": p.names(EntityKind::Action).count(),
            "leaf_actions": p.leaf_actions().len(),
            "contexts": p.names(EntityKind::Context).count(),
            "rules": p.rules.len(),
        })
    });
    let value = json!({
        "valid": valid,
        "parse_errors": errors,
        "violations": violations,
        "policy": summary,
    });
    out.emit(&value, || {
        let mut lines: Vec<String> = errors.iter().map(|e| format!("{}: {e}", path.display())).collect();
        lines.extend(violations.iter().map(|v| format!("{}: {}: {}", path.display(), v.subject, v.reason)));
        if let Some(p) = &policy {
            if valid {
                lines.push(format!(
                    "valid: {} ({} roles, {} actions, {} contexts, {} rules)",
                    p.name,
                    p.names(EntityKind::Role).count(),
                    p.names(EntityKind::Action).count(),
                    p.names(EntityKind::Context).count(),
                    p.rules.len()
                ));
            }
        }
        lines.join("\n")
    })?;
    Ok(ExitStatus::findings_if(!valid))
}

fn mutate(args: MutateArgs, out: &mut Output<'_>) -> anyhow::Result<ExitStatus> {
    let p = load_policy(&args.policy)?;
    let ops = if args.ops.is_empty() {
        OperatorKind::BASIC.to_vec()
    } else {
        args.ops
    };
    let sampling = match (args.sample, args.seed) {
        (Some(k), Some(seed)) => Some(Sampling { k, seed }),
        (None, None) => None,
        _ => return Err(anyhow!("--sample and --seed go together")),
    };
    let mutants = generate_mutants(&p, &ops, sampling);
    let equivalent = classify_mutants(&p, &mutants, Execution::default())?;
    let manifest = match &args.out {
        Some(dir) => export_mutants(dir, &p, &mutants, &equivalent)
            .with_context(|| format!("cannot export mutants to {}", dir.display()))?,
        None => acmut::mutation::build_manifest(&p, &mutants, &equivalent)?,
    };
    let counts = census(&mutants);
    out.emit(&manifest, || {
        let mut lines: Vec<String> = manifest
            .mutants
            .iter()
            .map(|e| {
                let mut line = format!("#{} {}", e.index, e.description);
                if e.equivalent {
                    line.push_str(" [equivalent]");
                }
                if let Some(d) = e.duplicate_of {
                    line.push_str(&format!(" [duplicate of #{d}]"));
                }
                line
            })
            .collect();
        let per_op: Vec<String> = counts.iter().map(|(op, n)| format!("{op} {n}")).collect();
        lines.push(format!("{} mutants ({})", mutants.len(), per_op.join(", ")));
        lines.join("\n")
    })?;
    Ok(ExitStatus::Success)
}
