//! File formats. Rationals cross every boundary as `num/den` strings;
//! nothing here ever parses or emits a decimal.
//!
//! - machine table: TSV lines `program TAB output TAB appears_at`
//!   (the empty program is an empty first field)
//! - shrinking-set spec: header `universe N`, then `stage TAB element`
//! - weight requests: lines `num/den TAB output`
//! - stream specs: `geo:b`, `const:p/q`, `table:FILE` where the table
//!   file holds `stage TAB num/den` lines
//! - CSV/JSONL emitters for every trace the pipelines produce

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::decanter::{DecanterEvent, DecanterState, LevelReport, MlTestTrace};
use crate::machine::{
    MachineEntry, MachineError, Pi01Error, Pi01Spec, StagedMachine, WeightRequest,
};
use crate::rational::Rat;
use crate::solovay::{Association, SolovayTestTrace};
use crate::stream::{ApproxStream, Stage, StreamKind};
use crate::transition::ExtractionResult;

#[derive(Debug)]
pub enum IoError {
    Syntax { line: usize, message: String },
    BadStreamSpec { spec: String, message: String },
    File { path: String, message: String },
    Machine(MachineError),
    Pi01(Pi01Error),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Syntax { line, message } => write!(f, "line {line}: {message}"),
            IoError::BadStreamSpec { spec, message } => {
                write!(f, "bad stream spec {spec:?}: {message}")
            }
            IoError::File { path, message } => write!(f, "{path}: {message}"),
            IoError::Machine(e) => write!(f, "{e}"),
            IoError::Pi01(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<MachineError> for IoError {
    fn from(e: MachineError) -> Self {
        IoError::Machine(e)
    }
}

impl From<Pi01Error> for IoError {
    fn from(e: Pi01Error) -> Self {
        IoError::Pi01(e)
    }
}

fn syntax(line: usize, message: impl Into<String>) -> IoError {
    IoError::Syntax {
        line,
        message: message.into(),
    }
}

/// Data lines of a text file: skips blanks and `#` comments, keeps
/// 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

// ---------------------------------------------------------------------------
// Machine tables
// ---------------------------------------------------------------------------

pub fn parse_machine_tsv(name: &str, text: &str) -> Result<StagedMachine, IoError> {
    let mut entries = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(syntax(line, format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let output: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("bad output {:?}", fields[1])))?;
        let appears_at: Stage = fields[2]
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("bad stage {:?}", fields[2])))?;
        entries.push(MachineEntry {
            program: fields[0].trim().to_string(),
            output,
            appears_at,
        });
    }
    Ok(StagedMachine::new(name, entries)?)
}

pub fn write_machine_tsv(machine: &StagedMachine) -> String {
    let mut out = String::new();
    for e in machine.entries() {
        writeln!(out, "{}\t{}\t{}", e.program, e.output, e.appears_at).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Shrinking-set specs
// ---------------------------------------------------------------------------

pub fn parse_pi01_tsv(name: &str, text: &str) -> Result<Pi01Spec, IoError> {
    let mut lines = data_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| syntax(0, "empty spec: expected `universe N` header"))?;
    let universe_size = header
        .trim()
        .strip_prefix("universe")
        .map(str::trim)
        .and_then(|n| n.parse::<u64>().ok())
        .ok_or_else(|| syntax(hline, format!("expected `universe N` header, got {header:?}")))?;
    let mut removals = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 2 {
            return Err(syntax(line, "expected `stage TAB element`"));
        }
        let stage: Stage = fields[0]
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("bad stage {:?}", fields[0])))?;
        let element: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("bad element {:?}", fields[1])))?;
        removals.push((stage, element));
    }
    Ok(Pi01Spec::new(name, universe_size, removals)?)
}

pub fn write_pi01_tsv(spec: &Pi01Spec) -> String {
    let mut out = format!("universe {}\n", spec.universe_size());
    let mut removals: Vec<(Stage, u64)> =
        spec.removals().map(|(e, s)| (s, e)).collect();
    removals.sort_unstable();
    for (stage, element) in removals {
        writeln!(out, "{stage}\t{element}").unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Weight requests
// ---------------------------------------------------------------------------

pub fn parse_kc_requests(text: &str) -> Result<Vec<WeightRequest>, IoError> {
    let mut requests = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 2 {
            return Err(syntax(line, "expected `num/den TAB output`"));
        }
        let weight: Rat = fields[0]
            .trim()
            .parse()
            .map_err(|e| syntax(line, format!("{e}")))?;
        let output: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("bad output {:?}", fields[1])))?;
        requests.push(WeightRequest { weight, output });
    }
    Ok(requests)
}

// ---------------------------------------------------------------------------
// Stream specs
// ---------------------------------------------------------------------------

/// Parses `geo:b`, `const:p/q` or `table:FILE`. Table streams read
/// `stage TAB num/den` lines (stage 0 required, later stages extend as
/// a step function) and come back as `General`; callers that need a
/// monotone stream re-declare the kind and let the lazy check police
/// it.
pub fn parse_stream_spec(spec: &str) -> Result<ApproxStream, IoError> {
    let bad = |message: &str| IoError::BadStreamSpec {
        spec: spec.to_string(),
        message: message.to_string(),
    };
    let (head, rest) = spec.split_once(':').ok_or_else(|| bad("expected kind:arg"))?;
    match head {
        "geo" => {
            let base: u32 = rest.parse().map_err(|_| bad("geo base must be an integer >= 2"))?;
            if base < 2 {
                return Err(bad("geo base must be >= 2"));
            }
            Ok(ApproxStream::geometric(base))
        }
        "const" => {
            let value: Rat = rest.parse().map_err(|_| bad("const value must be num/den"))?;
            Ok(ApproxStream::constant(value))
        }
        "table" => {
            let text = std::fs::read_to_string(rest).map_err(|e| IoError::File {
                path: rest.to_string(),
                message: e.to_string(),
            })?;
            parse_table_stream(rest, &text)
        }
        _ => Err(bad("unknown stream kind (geo, const, table)")),
    }
}

pub fn parse_table_stream(name: &str, text: &str) -> Result<ApproxStream, IoError> {
    let mut points = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 2 {
            return Err(syntax(line, "expected `stage TAB num/den`"));
        }
        let stage: Stage = fields[0]
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("bad stage {:?}", fields[0])))?;
        let value: Rat = fields[1]
            .trim()
            .parse()
            .map_err(|e| syntax(line, format!("{e}")))?;
        points.push((stage, value));
    }
    if points.is_empty() {
        return Err(syntax(0, "empty table stream"));
    }
    if !points.iter().any(|(s, _)| *s == 0) {
        return Err(syntax(0, "table stream must define stage 0"));
    }
    Ok(ApproxStream::from_table(
        &format!("table:{name}"),
        StreamKind::General,
        None,
        points,
    ))
}

// ---------------------------------------------------------------------------
// CSV emitters
// ---------------------------------------------------------------------------

/// `stage,num,den` rows.
pub fn stage_value_csv(rows: &[(Stage, Rat)]) -> String {
    let mut out = String::from("stage,num,den\n");
    for (s, v) in rows {
        writeln!(out, "{s},{},{}", v.numer(), v.denom()).unwrap();
    }
    out
}

pub fn extraction_csv(result: &ExtractionResult) -> String {
    let rows: Vec<(Stage, Rat)> = result
        .selected_stages
        .iter()
        .copied()
        .zip(result.extracted_values.iter().cloned())
        .collect();
    stage_value_csv(&rows)
}

/// Per-stage halting probabilities; restricted and complement columns
/// appear when a spec is given.
pub fn omega_csv(
    machine: &StagedMachine,
    x: Option<&Pi01Spec>,
    horizon: Stage,
) -> Result<String, MachineError> {
    let mut out = String::new();
    match x {
        None => {
            out.push_str("stage,omega_num,omega_den\n");
            for s in 0..=horizon {
                let v = machine.omega_at(s);
                writeln!(out, "{s},{},{}", v.numer(), v.denom()).unwrap();
            }
        }
        Some(x) => {
            out.push_str(
                "stage,omega_num,omega_den,in_num,in_den,out_num,out_den\n",
            );
            for s in 0..=horizon {
                let v = machine.omega_at(s);
                let r = machine.omega_restricted_at(x, s)?;
                let c = machine.omega_complement_at(x, s)?;
                writeln!(
                    out,
                    "{s},{},{},{},{},{},{}",
                    v.numer(),
                    v.denom(),
                    r.numer(),
                    r.denom(),
                    c.numer(),
                    c.denom()
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

/// `lo_num,lo_den,hi_num,hi_den,marker,stage` rows; the marker column
/// holds `x<i>` for intervals still associated at the horizon and
/// `EXPIRED` otherwise.
pub fn solovay_intervals_csv(trace: &SolovayTestTrace) -> String {
    let mut out = String::from("lo_num,lo_den,hi_num,hi_den,marker,stage\n");
    for iv in &trace.enumerated {
        let marker = match &iv.associated_to {
            Association::Marker { x_index } => format!("x{x_index}"),
            Association::Expired => "EXPIRED".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            iv.lo.numer(),
            iv.lo.denom(),
            iv.hi.numer(),
            iv.hi.denom(),
            marker,
            iv.enumerated_at
        )
        .unwrap();
    }
    out
}

pub fn solovay_trace_json(trace: &SolovayTestTrace) -> String {
    serde_json::to_string_pretty(trace).expect("trace serializes")
}

/// One record per place/flow/purge/evict event:
/// `{step, kind, label, weight_num, weight_den, from_level, to_level}`.
/// The parcel-bookkeeping records stay in the typed event log.
pub fn decanter_events_jsonl(state: &DecanterState) -> String {
    #[derive(serde::Serialize)]
    struct Record<'a> {
        step: usize,
        kind: &'a str,
        label: u64,
        weight_num: String,
        weight_den: String,
        from_level: Option<u64>,
        to_level: Option<u64>,
    }
    let mut out = String::new();
    for e in &state.events {
        let record = match e {
            DecanterEvent::Place { step, label, weight, level, .. } => Record {
                step: *step,
                kind: "place",
                label: *label,
                weight_num: weight.numer().to_string(),
                weight_den: weight.denom().to_string(),
                from_level: None,
                to_level: Some(*level),
            },
            DecanterEvent::Purge { step, label, weight, level, .. } => Record {
                step: *step,
                kind: "purge",
                label: *label,
                weight_num: weight.numer().to_string(),
                weight_den: weight.denom().to_string(),
                from_level: Some(*level),
                to_level: None,
            },
            DecanterEvent::Flow { step, label, weight, from_level, to_level, .. } => Record {
                step: *step,
                kind: "flow",
                label: *label,
                weight_num: weight.numer().to_string(),
                weight_den: weight.denom().to_string(),
                from_level: Some(*from_level),
                to_level: Some(*to_level),
            },
            DecanterEvent::Evict { step, label, weight, level, .. } => Record {
                step: *step,
                kind: "evict",
                label: *label,
                weight_num: weight.numer().to_string(),
                weight_den: weight.denom().to_string(),
                from_level: Some(*level),
                to_level: None,
            },
            DecanterEvent::FlowStep { .. } => continue,
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("record serializes"))
            .unwrap();
    }
    out
}

pub fn decanter_state_json(state: &DecanterState) -> String {
    serde_json::to_string_pretty(state).expect("state serializes")
}

pub fn level_report_text(report: &LevelReport) -> String {
    let mut out = String::from("level\tthroughput\tresident\tquanta\tbound\n");
    for l in &report.levels {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            l.level, l.throughput, l.resident, l.quanta_ever, l.bound
        )
        .unwrap();
    }
    out
}

/// `cycle,delta_num,delta_den,lo_num,lo_den,hi_num,hi_den,stage` rows.
pub fn ml_intervals_csv(trace: &MlTestTrace) -> String {
    let mut out = String::from("cycle,delta_num,delta_den,lo_num,lo_den,hi_num,hi_den,stage\n");
    for (k, cycle) in trace.cycles.iter().enumerate() {
        for iv in &cycle.intervals {
            writeln!(
                out,
                "{k},{},{},{},{},{},{},{}",
                cycle.delta.numer(),
                cycle.delta.denom(),
                iv.lo.numer(),
                iv.lo.denom(),
                iv.hi.numer(),
                iv.hi.denom(),
                iv.stage
            )
            .unwrap();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Artifact writing
// ---------------------------------------------------------------------------

pub fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::File {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| IoError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_file(path: &str) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::File {
        path: path.to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn machine_tsv_roundtrip() {
        let text = "0\t1\t2\n10\t2\t5\n";
        let m = parse_machine_tsv("m", text).unwrap();
        assert_eq!(m.entries().len(), 2);
        assert_eq!(write_machine_tsv(&m), text);
    }

    #[test]
    fn machine_tsv_empty_program() {
        let m = parse_machine_tsv("m", "\t9\t0\n").unwrap();
        assert_eq!(m.entries()[0].program, "");
        assert_eq!(m.run("", 0), Some(9));
    }

    #[test]
    fn machine_tsv_rejects_garbage() {
        assert!(parse_machine_tsv("m", "01\tx\t0\n").is_err());
        assert!(parse_machine_tsv("m", "01 1 0\n").is_err());
        assert!(matches!(
            parse_machine_tsv("m", "0\t1\t0\n01\t2\t0\n"),
            Err(IoError::Machine(MachineError::NotPrefixFree { .. }))
        ));
    }

    #[test]
    fn pi01_tsv_roundtrip() {
        let text = "universe 4\n2\t1\n5\t3\n";
        let x = parse_pi01_tsv("x", text).unwrap();
        assert_eq!(x.universe_size(), 4);
        assert!(!x.is_live(1, 2));
        assert!(x.is_live(3, 4));
        assert_eq!(write_pi01_tsv(&x), text);
    }

    #[test]
    fn kc_requests_parse() {
        let reqs = parse_kc_requests("1/2\t3\n# comment\n1/4\t1\n").unwrap();
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[0].weight, Rat::new(1, 2));
        assert_eq!(reqs[1].output, 1);
        assert!(parse_kc_requests("0.5\t3\n").is_err());
    }

    #[test]
    fn stream_specs() {
        let g = parse_stream_spec("geo:2").unwrap();
        assert_eq!(g.value_at(3).unwrap(), Rat::new(7, 8));
        let c = parse_stream_spec("const:3/7").unwrap();
        assert_eq!(c.value_at(10).unwrap(), Rat::new(3, 7));
        assert!(parse_stream_spec("geo:1").is_err());
        assert!(parse_stream_spec("wavelet:9").is_err());
        assert!(parse_stream_spec("const:0.5").is_err());
    }

    #[test]
    fn table_stream_step_function() {
        let s = parse_table_stream("t", "0\t0/1\n2\t1/2\n5\t3/4\n").unwrap();
        assert_eq!(s.value_at(0).unwrap(), Rat::zero());
        assert_eq!(s.value_at(1).unwrap(), Rat::zero());
        assert_eq!(s.value_at(2).unwrap(), Rat::new(1, 2));
        assert_eq!(s.value_at(4).unwrap(), Rat::new(1, 2));
        assert_eq!(s.value_at(99).unwrap(), Rat::new(3, 4));
        assert!(parse_table_stream("t", "1\t1/2\n").is_err());
    }

    #[test]
    fn csv_shapes() {
        let csv = stage_value_csv(&[(0, Rat::new(1, 2)), (1, Rat::new(-3, 4))]);
        assert_eq!(csv, "stage,num,den\n0,1,2\n1,-3,4\n");
    }
}
