//! Batch front-end. Each subcommand loads its inputs, runs one
//! pipeline, writes CSV/JSON artifacts under the output directory and
//! prints an audit summary; the summary is also saved as `audit.txt`.
//! Outputs are deterministic: the same inputs produce byte-identical
//! artifacts.
//!
//! Exit status: 0 success, 2 parse/input errors, 3 precondition
//! failures (the data refused the construction), 4 invariant
//! violations (internal audits failed; a bug, not data).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::decanter::{
    audit_ml_test, build_ml_test, decanter_run, level_report, select_stages, v_test_index,
    DecanterError,
};
use crate::io::{self, IoError};
use crate::machine::{
    adjoin_audit, adjoin_universal, decomposition_audit, kc_audit, kraft_chaitin_build,
    MachineError, Pi01Error,
};
use crate::rational::Rat;
use crate::solovay::{audit_test, build_solovay_test, SolovayError};
use crate::stream::{ApproxStream, Stage, StreamError, StreamKind};
use crate::transition::{
    diagnose_case, left_ce_extract, linearity_check, ratio_sequence, right_ce_extract,
    ExtractionOutcome, TransitionError,
};
use crate::DEFAULT_SETTLE_WINDOW;

// ---------------------------------------------------------------------------
// Error classification
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input. Exit 2.
    Input(String),
    /// Valid input refusing a construction's precondition. Exit 3.
    Precondition(String),
    /// A checked invariant failed; implementation bug. Exit 4.
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Precondition(m) => write!(f, "precondition failed: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MachineError> for CliError {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::BadProgram { .. }
            | MachineError::DuplicateProgram { .. }
            | MachineError::NotPrefixFree { .. }
            | MachineError::EmptyMachineList => CliError::Input(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<Pi01Error> for CliError {
    fn from(e: Pi01Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

impl From<TransitionError> for CliError {
    fn from(e: TransitionError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

impl From<SolovayError> for CliError {
    fn from(e: SolovayError) -> Self {
        CliError::Precondition(e.to_string())
    }
}

impl From<DecanterError> for CliError {
    fn from(e: DecanterError) -> Self {
        match e {
            DecanterError::ConservationViolation { .. }
            | DecanterError::BoundViolation { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

/// Exact-rational experiments over staged prefix-free machines and
/// approximation streams. Set CELE_LOG=debug for verbose progress.
#[derive(Debug, Parser)]
#[command(name = "cele", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Output directory for artifacts.
    #[arg(long, default_value = "cele-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-stage halting probabilities, optionally restricted to a
    /// shrinking set, with the exact decomposition audit.
    Omega {
        /// Machine table (TSV: program, output, appears_at).
        #[arg(long)]
        machine: String,
        /// Shrinking-set spec (header `universe N`, then stage/element).
        #[arg(long)]
        pi01: Option<String>,
        #[arg(long)]
        horizon: Stage,
        #[command(flatten)]
        out: OutDir,
    },
    /// Build a prefix-free machine from weight requests.
    Kcbuild {
        /// Request file (lines `num/den TAB output`).
        #[arg(long)]
        requests: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Combine machines into one universal-by-adjunction table.
    Adjoin {
        /// Machine tables, in index order.
        #[arg(long, num_args = 1.., required = true)]
        machines: Vec<String>,
        /// Horizon for the simulation-identity audit.
        #[arg(long, default_value_t = 20)]
        horizon: Stage,
        #[command(flatten)]
        out: OutDir,
    },
    /// Left-c.e. extraction chain from two increasing streams.
    ExtractLeft {
        /// Scalar p > 1, as num/den.
        #[arg(long)]
        p: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0)]
        start: Stage,
        #[arg(long)]
        horizon: Stage,
        #[command(flatten)]
        out: OutDir,
    },
    /// Right-c.e. extraction chain from two increasing streams.
    ExtractRight {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0)]
        start: Stage,
        #[arg(long)]
        horizon: Stage,
        #[command(flatten)]
        out: OutDir,
    },
    /// Tail-ratio sequence with point estimate and window spread.
    Destimate {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Exact limit of a (defaults to the stream's declared limit).
        #[arg(long)]
        limit_a: Option<String>,
        #[arg(long)]
        limit_b: Option<String>,
        #[arg(long)]
        horizon: Stage,
        #[arg(long, default_value_t = DEFAULT_SETTLE_WINDOW)]
        window: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Exact additivity/scaling/reciprocal identities of tail ratios.
    Linearity {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: String,
        #[arg(long)]
        limit_a: Option<String>,
        #[arg(long)]
        limit_b: Option<String>,
        #[arg(long)]
        limit_c: Option<String>,
        /// Positive scalar q, as num/den.
        #[arg(long)]
        q: String,
        #[arg(long)]
        horizon: Stage,
        #[arg(long, default_value_t = DEFAULT_SETTLE_WINDOW)]
        window: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the marker construction and audit the resulting interval
    /// test.
    Solovay {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Scalar p > 1, as num/den.
        #[arg(long)]
        p: String,
        #[arg(long)]
        horizon: Stage,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the decanter over selected stages; optionally build
    /// interval tests from its log.
    Decanter {
        #[arg(long)]
        machine: String,
        #[arg(long)]
        pi01: String,
        #[arg(long)]
        horizon: Stage,
        /// Minimum number of strict omega decreases required.
        #[arg(long, default_value_t = 1)]
        min_decreases: usize,
        /// Test indices to build from the event log.
        #[arg(long = "mltest", num_args = 0..)]
        mltest: Vec<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Build one interval test from a fresh decanter run.
    Mltest {
        #[arg(long)]
        machine: String,
        #[arg(long)]
        pi01: String,
        #[arg(long)]
        horizon: Stage,
        #[arg(long, default_value_t = 1)]
        min_decreases: usize,
        /// Test index i (builds U_i).
        #[arg(long)]
        index: u64,
        /// Interpret --index as i of the shrinking family (build
        /// U_{2^{i+1}}).
        #[arg(long, default_value_t = false)]
        v: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run many invocations from a jobs file, one output dir per line.
    Grid {
        /// Jobs file: one whitespace-separated cele invocation per
        /// line (without the binary name and without --out).
        #[arg(long)]
        jobs: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Render a stage/num/den CSV artifact as an SVG polyline.
    Plot {
        #[arg(long)]
        csv: String,
        /// Column holding the x values.
        #[arg(long, default_value = "stage")]
        x: String,
        /// Columns holding the numerator and denominator.
        #[arg(long, default_value = "num")]
        num: String,
        #[arg(long, default_value = "den")]
        den: String,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long)]
        out_file: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn parse_rat(s: &str, what: &str) -> Result<Rat, CliError> {
    s.parse()
        .map_err(|e| CliError::Input(format!("{what}: {e}")))
}

/// Loads a stream spec; when the pipeline requires a monotone stream,
/// table streams are re-declared increasing and the lazy check
/// enforces the claim.
fn load_stream(spec: &str, require_increasing: bool) -> Result<ApproxStream, CliError> {
    let s = io::parse_stream_spec(spec)?;
    if require_increasing && s.kind() != StreamKind::Increasing {
        Ok(s.with_kind(StreamKind::Increasing))
    } else {
        Ok(s)
    }
}

fn resolve_limit(
    stream: &ApproxStream,
    explicit: Option<&str>,
    which: &str,
) -> Result<Rat, CliError> {
    match explicit {
        Some(s) => parse_rat(s, which),
        None => stream.declared_limit().cloned().ok_or_else(|| {
            CliError::Input(format!(
                "{which}: stream {} declares no limit; pass it explicitly",
                stream.name()
            ))
        }),
    }
}

struct Audit {
    lines: Vec<String>,
    failed: bool,
}

impl Audit {
    fn new() -> Self {
        Audit {
            lines: Vec::new(),
            failed: false,
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        self.failed |= !ok;
        self.lines.push(format!("{name}: {verdict} ({})", detail.as_ref()));
    }

    fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    fn finish(self, dir: &Path) -> Result<(), CliError> {
        let text = self.lines.join("\n") + "\n";
        io::write_artifact(dir, "audit.txt", &text)?;
        print!("{text}");
        if self.failed {
            Err(CliError::Invariant("audit reported FAIL lines".into()))
        } else {
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Omega { machine, pi01, horizon, out } => {
            let m = io::parse_machine_tsv(&machine, &io::read_file(&machine)?)?;
            let x = match &pi01 {
                Some(p) => Some(io::parse_pi01_tsv(p, &io::read_file(p)?)?),
                None => None,
            };
            info!("omega over {} stages", horizon + 1);
            let csv = io::omega_csv(&m, x.as_ref(), horizon)?;
            io::write_artifact(&out.out, "omega.csv", &csv)?;
            let mut audit = Audit::new();
            audit.note(format!("machine {} with {} entries", m.name(), m.entries().len()));
            if let Some(x) = &x {
                let d = decomposition_audit(&m, x, horizon)?;
                let worst = d
                    .residuals
                    .iter()
                    .find(|(_, r)| !r.is_zero())
                    .map(|(s, r)| format!("first nonzero residual {r} at stage {s}"))
                    .unwrap_or_else(|| "all residuals exactly 0".into());
                audit.check("restricted-decomposition", d.pass, worst);
            }
            audit.check(
                "omega-monotone",
                (1..=horizon).all(|s| m.omega_at(s - 1) <= m.omega_at(s)),
                "omega_at nondecreasing",
            );
            audit.finish(&out.out)
        }

        Command::Kcbuild { requests, out } => {
            let reqs = io::parse_kc_requests(&io::read_file(&requests)?)?;
            let m = kraft_chaitin_build(&reqs)?;
            io::write_artifact(&out.out, "machine.tsv", &io::write_machine_tsv(&m))?;
            let a = kc_audit(&m, &reqs);
            let mut audit = Audit::new();
            audit.check("prefix-free", a.prefix_free, "domain is an antichain");
            audit.check(
                "measure-roundtrip",
                a.requested_total == a.machine_measure,
                format!("requested {} built {}", a.requested_total, a.machine_measure),
            );
            audit.check("per-output-measures", a.per_output_exact, "exact per output");
            audit.finish(&out.out)
        }

        Command::Adjoin { machines, horizon, out } => {
            let mut parts = Vec::new();
            for path in &machines {
                parts.push(io::parse_machine_tsv(path, &io::read_file(path)?)?);
            }
            let u = adjoin_universal(&parts)?;
            io::write_artifact(&out.out, "machine.tsv", &io::write_machine_tsv(&u))?;
            let a = adjoin_audit(&u, &parts, horizon);
            let mut audit = Audit::new();
            audit.check("simulation-identity", a.simulation_ok, "all entries, all stages");
            audit.check(
                "omega-coded-sum",
                a.omega_combined == a.omega_coded_sum,
                format!("combined {} coded sum {}", a.omega_combined, a.omega_coded_sum),
            );
            audit.finish(&out.out)
        }

        Command::ExtractLeft { p, a, b, start, horizon, out } => {
            let p = parse_rat(&p, "--p")?;
            let sa = load_stream(&a, true)?;
            let sb = load_stream(&b, true)?;
            let outcome = left_ce_extract(&p, &sa, &sb, start, horizon)?;
            write_extraction(&out.out, outcome, true)
        }

        Command::ExtractRight { a, b, start, horizon, out } => {
            let sa = load_stream(&a, true)?;
            let sb = load_stream(&b, true)?;
            let outcome = right_ce_extract(&sa, &sb, start, horizon)?;
            write_extraction(&out.out, outcome, false)
        }

        Command::Destimate { a, b, limit_a, limit_b, horizon, window, out } => {
            let sa = load_stream(&a, true)?;
            let sb = load_stream(&b, true)?;
            let la = resolve_limit(&sa, limit_a.as_deref(), "--limit-a")?;
            let lb = resolve_limit(&sb, limit_b.as_deref(), "--limit-b")?;
            let est = ratio_sequence(&sa, &sb, &la, &lb, horizon, window)?;
            io::write_artifact(&out.out, "ratios.csv", &io::stage_value_csv(&est.ratios))?;
            let mut audit = Audit::new();
            audit.note(format!("point estimate {}", est.point_estimate));
            audit.note(format!("window spread {}", est.window_spread));
            audit.check(
                "ratios-positive",
                est.ratios.iter().all(|(_, r)| r.is_positive()),
                "tails positive on both sides",
            );
            audit.finish(&out.out)
        }

        Command::Linearity {
            a, b, c, limit_a, limit_b, limit_c, q, horizon, window, out,
        } => {
            let q = parse_rat(&q, "--q")?;
            let sa = load_stream(&a, true)?;
            let sb = load_stream(&b, true)?;
            let sc = load_stream(&c, true)?;
            let la = resolve_limit(&sa, limit_a.as_deref(), "--limit-a")?;
            let lb = resolve_limit(&sb, limit_b.as_deref(), "--limit-b")?;
            let lc = resolve_limit(&sc, limit_c.as_deref(), "--limit-c")?;
            let rep = linearity_check(&sa, &sb, &sc, &la, &lb, &lc, &q, horizon, window)?;
            let mut csv = String::from(
                "stage,add_num,add_den,scale_left_num,scale_left_den,\
                 scale_right_num,scale_right_den,recip_num,recip_den\n",
            );
            for row in &rep.rows {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    row.stage,
                    row.residual_additivity.numer(),
                    row.residual_additivity.denom(),
                    row.residual_scale_left.numer(),
                    row.residual_scale_left.denom(),
                    row.residual_scale_right.numer(),
                    row.residual_scale_right.denom(),
                    row.residual_reciprocal.numer(),
                    row.residual_reciprocal.denom(),
                )
                .unwrap();
            }
            io::write_artifact(&out.out, "residuals.csv", &csv)?;
            let mut audit = Audit::new();
            audit.check(
                "per-stage-identities",
                rep.all_residuals_zero,
                "additivity, scaling, reciprocal residuals all exactly 0",
            );
            audit.note(format!(
                "estimate sum {} vs parts {}",
                rep.estimate_sum_vs_parts.0, rep.estimate_sum_vs_parts.1
            ));
            audit.note(format!(
                "estimate scaled {} vs q*estimate {}",
                rep.estimate_scaled_vs_q_times.0, rep.estimate_scaled_vs_q_times.1
            ));
            audit.note(format!(
                "reciprocal product {}",
                rep.estimate_reciprocal_product
            ));
            audit.finish(&out.out)
        }

        Command::Solovay { a, b, p, horizon, out } => {
            let p = parse_rat(&p, "--p")?;
            let sa = load_stream(&a, true)?;
            let sb = load_stream(&b, true)?;
            let trace = build_solovay_test(&sa, &sb, &p, horizon)?;
            io::write_artifact(&out.out, "trace.json", &io::solovay_trace_json(&trace))?;
            io::write_artifact(&out.out, "intervals.csv", &io::solovay_intervals_csv(&trace))?;
            // target: the scaled limit when known, else the horizon
            // surrogate
            let (target, target_note) = match sa.declared_limit() {
                Some(la) => ((&p - &Rat::one()) * la, "target (p-1)*limit_a"),
                None => (
                    (&p - &Rat::one()) * sa.value_at(horizon)?,
                    "target (p-1)*a(horizon) surrogate",
                ),
            };
            let bound = trace.b_at_horizon.clone();
            let audit_report = audit_test(&trace, &target, &bound);
            let mut audit = Audit::new();
            audit.note(format!("{target_note} = {target}"));
            for w in &trace.warnings {
                audit.note(format!("warning: {w}"));
            }
            audit.check(
                "measure-bound",
                audit_report.measure_within_bound,
                format!(
                    "total {} <= b(horizon) {}",
                    audit_report.total_measure, audit_report.beta_bound
                ),
            );
            audit.check(
                "split-equations",
                audit_report.split_equations_exact,
                format!("{} split events, defect + r*step = 0", audit_report.split_event_count),
            );
            audit.check("permanence", audit_report.permanence_ok, "survivors re-verified");
            for t in &audit_report.tilings {
                audit.check(
                    &format!("tiling-x{}", t.x_index),
                    t.contiguous && t.covers_exactly,
                    format!("[{}, {}] chained exactly", t.target_lo, t.target_hi),
                );
            }
            audit.note(format!(
                "target containment count {}",
                audit_report.containment_count
            ));
            audit.finish(&out.out)
        }

        Command::Decanter { machine, pi01, horizon, min_decreases, mltest, out } => {
            let m = io::parse_machine_tsv(&machine, &io::read_file(&machine)?)?;
            let x = io::parse_pi01_tsv(&pi01, &io::read_file(&pi01)?)?;
            let stages = select_stages(&m, &x, horizon, min_decreases)?;
            let state = decanter_run(&m, &x, &stages)?;
            io::write_artifact(&out.out, "events.jsonl", &io::decanter_events_jsonl(&state))?;
            io::write_artifact(&out.out, "state.json", &io::decanter_state_json(&state))?;
            let report = level_report(&state)?;
            io::write_artifact(&out.out, "levels.tsv", &io::level_report_text(&report))?;
            let mut audit = Audit::new();
            audit.note(format!(
                "selected {} stages, omega {} -> {}",
                stages.len(),
                state.omega_values.first().unwrap(),
                state.omega_values.last().unwrap()
            ));
            audit.check("flow-conservation", true, "exact at every step (checked in run)");
            for l in &report.levels {
                audit.check(
                    &format!("level-{}-bound", l.level),
                    l.throughput < l.bound,
                    format!("throughput {} < {}", l.throughput, l.bound),
                );
            }
            for index in mltest {
                let trace = build_ml_test(&state, index);
                io::write_artifact(
                    &out.out,
                    &format!("mltest_{index}.csv"),
                    &io::ml_intervals_csv(&trace),
                )?;
                let a = audit_ml_test(&trace, &state);
                audit.check(
                    &format!("mltest-{index}"),
                    a.pass,
                    format!(
                        "audited measure {} <= {}, injuries {}",
                        a.audited_measure,
                        a.measure_bound,
                        trace.injuries.len()
                    ),
                );
            }
            audit.finish(&out.out)
        }

        Command::Mltest { machine, pi01, horizon, min_decreases, index, v, out } => {
            let m = io::parse_machine_tsv(&machine, &io::read_file(&machine)?)?;
            let x = io::parse_pi01_tsv(&pi01, &io::read_file(&pi01)?)?;
            let stages = select_stages(&m, &x, horizon, min_decreases)?;
            let state = decanter_run(&m, &x, &stages)?;
            let effective = if v {
                v_test_index(u32::try_from(index).map_err(|_| {
                    CliError::Input("--index too large for --v".into())
                })?)
            } else {
                index
            };
            let trace = build_ml_test(&state, effective);
            io::write_artifact(
                &out.out,
                &format!("mltest_{effective}.csv"),
                &io::ml_intervals_csv(&trace),
            )?;
            let a = audit_ml_test(&trace, &state);
            let mut audit = Audit::new();
            if v {
                audit.note(format!("family index {index} -> test index {effective}"));
            }
            audit.check("delta-schedule", a.delta_schedule_ok, "2^{-i-k-2} per cycle");
            audit.check("interval-lengths", a.interval_lengths_ok, "length = cycle delta");
            audit.check(
                "injuries-match-evictions",
                a.injuries_match_evictions,
                format!("{} injuries", trace.injuries.len()),
            );
            audit.check(
                "measure-bound",
                a.measure_within_bound,
                format!("audited {} <= {}", a.audited_measure, a.measure_bound),
            );
            if let Some(captured) = a.final_omega_captured {
                audit.check("final-omega-captured", captured, "last interval of last cycle");
            }
            audit.finish(&out.out)
        }

        Command::Grid { jobs, out } => run_grid(&jobs, &out.out),

        Command::Plot { csv, x, num, den, title, out_file } => {
            let text = io::read_file(&csv)?;
            let svg = render_svg(&text, &x, &num, &den, &title)?;
            if let Some(parent) = out_file.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| CliError::Input(e.to_string()))?;
                }
            }
            std::fs::write(&out_file, svg).map_err(|e| CliError::Input(e.to_string()))?;
            println!("wrote {}", out_file.display());
            Ok(())
        }
    }
}

fn write_extraction(
    dir: &Path,
    outcome: ExtractionOutcome,
    left: bool,
) -> Result<(), CliError> {
    let mut audit = Audit::new();
    match outcome {
        ExtractionOutcome::Chain(chain) => {
            io::write_artifact(dir, "chain.csv", &io::extraction_csv(&chain))?;
            let strict = chain.extracted_values.windows(2).all(|w| {
                if left {
                    w[0] < w[1]
                } else {
                    w[0] > w[1]
                }
            });
            audit.check(
                "chain-strictly-monotone",
                strict,
                format!(
                    "{} values, {}",
                    chain.extracted_values.len(),
                    if left { "increasing" } else { "decreasing" }
                ),
            );
            audit.note(format!(
                "final stage {} value {}",
                chain.selected_stages.last().unwrap(),
                chain.extracted_values.last().unwrap()
            ));
        }
        ExtractionOutcome::RationalCollapse { stage, value } => {
            io::write_artifact(dir, "chain.csv", &io::stage_value_csv(&[]))?;
            audit.note(format!(
                "RATIONAL_COLLAPSE at stage {stage}: the scaled difference equals {value} exactly"
            ));
        }
    }
    audit.finish(dir)
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Runs one invocation per jobs-file line, each into its own
/// `run-NNN` directory, in parallel. Lines are whitespace-split;
/// paths with spaces are not supported in jobs files.
fn run_grid(jobs_path: &str, out: &Path) -> Result<(), CliError> {
    let text = io::read_file(jobs_path)?;
    let jobs: Vec<(usize, Vec<String>)> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .enumerate()
        .map(|(i, l)| (i, l.split_whitespace().map(str::to_string).collect()))
        .collect();
    if jobs.is_empty() {
        return Err(CliError::Input("jobs file has no runs".into()));
    }
    let results: Vec<(usize, String, Result<(), CliError>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, args) in &jobs {
            let run_dir = out.join(format!("run-{i:03}"));
            let args = args.clone();
            let i = *i;
            handles.push(scope.spawn(move || {
                let mut argv = vec!["cele".to_string()];
                argv.extend(args.iter().cloned());
                argv.push("--out".into());
                argv.push(run_dir.display().to_string());
                let line = args.join(" ");
                let result = match Cli::try_parse_from(&argv) {
                    Ok(cli) => run(cli),
                    Err(e) => Err(CliError::Input(e.to_string())),
                };
                (i, line, result)
            }));
        }
        let mut results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        results.sort_by_key(|(i, _, _)| *i);
        results
    });
    let mut summary = String::new();
    let mut failed = 0usize;
    for (i, line, result) in &results {
        match result {
            Ok(()) => writeln!(summary, "run-{i:03} OK   {line}").unwrap(),
            Err(e) => {
                failed += 1;
                writeln!(summary, "run-{i:03} FAIL {line}: {e}").unwrap();
            }
        }
    }
    io::write_artifact(out, "summary.txt", &summary)?;
    print!("{summary}");
    if failed > 0 {
        Err(CliError::Precondition(format!("{failed} grid runs failed")))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Plot
// ---------------------------------------------------------------------------

/// Minimal deterministic SVG polyline over a ratio/omega CSV. This is
/// the single place exact values are rounded; the CSV stays exact.
fn render_svg(
    csv: &str,
    x_col: &str,
    num_col: &str,
    den_col: &str,
    title: &str,
) -> Result<String, CliError> {
    let mut lines = csv.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Input("empty csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Input(format!("csv column {name:?} not found")))
    };
    let (xi, ni, di) = (find(x_col)?, find(num_col)?, find(den_col)?);
    let mut points = Vec::new();
    for (lineno, l) in lines.enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        let get = |i: usize| {
            fields.get(i).copied().ok_or_else(|| {
                CliError::Input(format!("row {}: missing column {i}", lineno + 2))
            })
        };
        let x: f64 = get(xi)?
            .parse()
            .map_err(|_| CliError::Input(format!("row {}: bad x", lineno + 2)))?;
        let num: f64 = get(ni)?
            .parse()
            .map_err(|_| CliError::Input(format!("row {}: bad numerator", lineno + 2)))?;
        let den: f64 = get(di)?
            .parse()
            .map_err(|_| CliError::Input(format!("row {}: bad denominator", lineno + 2)))?;
        points.push((x, num / den));
    }
    if points.is_empty() {
        return Err(CliError::Input("csv has no data rows".into()));
    }
    let (w, h, margin) = (640.0, 400.0, 40.0);
    let (xmin, xmax) = points
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    let (ymin, ymax) = points
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), (_, y)| (a.min(*y), b.max(*y)));
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let yspan = if ymax > ymin { ymax - ymin } else { 1.0 };
    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let px = margin + (x - xmin) / xspan * (w - 2.0 * margin);
        let py = h - margin - (y - ymin) / yspan * (h - 2.0 * margin);
        let cmd = if i == 0 { 'M' } else { 'L' };
        write!(path, "{cmd}{px:.3},{py:.3} ").unwrap();
    }
    Ok(format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-family=\"monospace\" ",
            "font-size=\"14\">{title}</text>\n",
            "<path d=\"{path}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            "<text x=\"{tx}\" y=\"{by}\" text-anchor=\"middle\" font-family=\"monospace\" ",
            "font-size=\"11\">[{xmin:.4}, {xmax:.4}] x [{ymin:.4}, {ymax:.4}]</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        tx = w / 2.0,
        by = h - 8.0,
        title = title,
        path = path.trim_end(),
        xmin = xmin,
        xmax = xmax,
        ymin = ymin,
        ymax = ymax,
    ))
}

// ---------------------------------------------------------------------------
// Case diagnostic helper exposed for users of the library surface
// ---------------------------------------------------------------------------

/// Convenience wrapper: classify which extraction recipe a pair of
/// spec strings calls for.
pub fn diagnose_pair(
    a_spec: &str,
    b_spec: &str,
    p: &Rat,
    settle_window: u64,
    horizon: Stage,
) -> Result<crate::transition::CaseDiagnostic, CliError> {
    let a = load_stream(a_spec, true)?;
    let b = load_stream(b_spec, true)?;
    let la = a
        .declared_limit()
        .cloned()
        .ok_or_else(|| CliError::Input("a declares no limit".into()))?;
    let lb = b
        .declared_limit()
        .cloned()
        .ok_or_else(|| CliError::Input("b declares no limit".into()))?;
    Ok(diagnose_case(p, &a, &b, &la, &lb, settle_window, horizon)?)
}
