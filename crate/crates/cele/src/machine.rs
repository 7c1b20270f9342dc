//! Staged prefix-free machines and shrinking-set approximations.
//!
//! A machine here is a finite table of convergent computations: each
//! entry is a binary program, an output, and the stage at which the
//! computation first appears. That is all the constructions need —
//! no step semantics are simulated. Halting probabilities are exact
//! sums of `2^{-|program|}` over the entries visible at a stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;

use crate::rational::Rat;
use crate::stream::{ApproxStream, Stage, StreamKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachineError {
    BadProgram { program: String },
    DuplicateProgram { program: String },
    NotPrefixFree { shorter: String, longer: String },
    EmptyMachineList,
    WeightOverflow { total: Rat },
    NonDyadicWeight { weight: Rat },
    NonpositiveWeight { weight: Rat },
    OutputOutOfUniverse { output: u64, universe_size: u64 },
}

impl fmt::Display for MachineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachineError::BadProgram { program } => {
                write!(f, "BAD_PROGRAM: not a binary string: {program:?}")
            }
            MachineError::DuplicateProgram { program } => {
                write!(f, "DUPLICATE_PROGRAM: {program:?}")
            }
            MachineError::NotPrefixFree { shorter, longer } => {
                write!(f, "NOT_PREFIX_FREE: {shorter:?} is a prefix of {longer:?}")
            }
            MachineError::EmptyMachineList => write!(f, "EMPTY_MACHINE_LIST"),
            MachineError::WeightOverflow { total } => {
                write!(f, "WEIGHT_OVERFLOW: total requested weight {total} > 1")
            }
            MachineError::NonDyadicWeight { weight } => {
                write!(f, "NON_DYADIC: weight {weight} is not of the form m/2^k")
            }
            MachineError::NonpositiveWeight { weight } => {
                write!(f, "NONPOSITIVE_WEIGHT: {weight}")
            }
            MachineError::OutputOutOfUniverse { output, universe_size } => {
                write!(
                    f,
                    "OUTPUT_OUT_OF_UNIVERSE: output {output} >= universe size {universe_size}"
                )
            }
        }
    }
}

impl std::error::Error for MachineError {}

// ---------------------------------------------------------------------------
// Prefix-freeness
// ---------------------------------------------------------------------------

/// True iff no string is a proper prefix of another and there are no
/// duplicates. The empty set and the singleton `{""}` are prefix-free.
pub fn is_prefix_free<S: AsRef<str>>(programs: &[S]) -> bool {
    let mut sorted: Vec<&str> = programs.iter().map(|s| s.as_ref()).collect();
    sorted.sort_unstable();
    // in lexicographic order a prefix is adjacent to some extension of it
    sorted.windows(2).all(|w| !w[1].starts_with(w[0]))
}

fn validate_program(program: &str) -> Result<(), MachineError> {
    if program.bytes().all(|b| b == b'0' || b == b'1') {
        Ok(())
    } else {
        Err(MachineError::BadProgram {
            program: program.to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// StagedMachine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MachineEntry {
    pub program: String,
    pub output: u64,
    pub appears_at: Stage,
}

/// A finite prefix-free program table with per-program appearance
/// stages.
#[derive(Debug, Clone, Serialize)]
pub struct StagedMachine {
    name: String,
    entries: Vec<MachineEntry>,
}

impl StagedMachine {
    pub fn new(name: &str, entries: Vec<MachineEntry>) -> Result<Self, MachineError> {
        for e in &entries {
            validate_program(&e.program)?;
        }
        let mut programs: Vec<&str> = entries.iter().map(|e| e.program.as_str()).collect();
        programs.sort_unstable();
        for w in programs.windows(2) {
            if w[0] == w[1] {
                return Err(MachineError::DuplicateProgram {
                    program: w[0].to_string(),
                });
            }
            if w[1].starts_with(w[0]) {
                return Err(MachineError::NotPrefixFree {
                    shorter: w[0].to_string(),
                    longer: w[1].to_string(),
                });
            }
        }
        Ok(StagedMachine {
            name: name.to_string(),
            entries,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[MachineEntry] {
        &self.entries
    }

    /// Runs the machine: the output if an entry with exactly this
    /// program has appeared by stage `s`, otherwise divergence (`None`).
    pub fn run(&self, program: &str, s: Stage) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| e.program == program && e.appears_at <= s)
            .map(|e| e.output)
    }

    fn weight(entry: &MachineEntry) -> Rat {
        Rat::pow2(-(entry.program.len() as i64))
    }

    /// Stage-`s` halting probability: the measure of the programs that
    /// have appeared by stage `s`. Nondecreasing in `s`, at most 1.
    pub fn omega_at(&self, s: Stage) -> Rat {
        let mut total = Rat::zero();
        for e in self.entries.iter().filter(|e| e.appears_at <= s) {
            total += &Self::weight(e);
        }
        total
    }

    /// Measure of the whole table (the limit of `omega_at`).
    pub fn total_measure(&self) -> Rat {
        let mut total = Rat::zero();
        for e in &self.entries {
            total += &Self::weight(e);
        }
        total
    }

    /// Stage of the last appearance (0 for an empty table).
    pub fn last_appearance(&self) -> Stage {
        self.entries.iter().map(|e| e.appears_at).max().unwrap_or(0)
    }

    fn check_outputs(&self, universe_size: u64) -> Result<(), MachineError> {
        for e in &self.entries {
            if e.output >= universe_size {
                return Err(MachineError::OutputOutOfUniverse {
                    output: e.output,
                    universe_size,
                });
            }
        }
        Ok(())
    }

    /// Stage-`s` halting probability restricted to the live part of the
    /// shrinking set: programs that have appeared by `s` with output in
    /// `X_s`.
    pub fn omega_restricted_at(&self, x: &Pi01Spec, s: Stage) -> Result<Rat, MachineError> {
        self.check_outputs(x.universe_size())?;
        let mut total = Rat::zero();
        for e in &self.entries {
            if e.appears_at <= s && x.is_live(e.output, s) {
                total += &Self::weight(e);
            }
        }
        Ok(total)
    }

    /// Complement at stage `s`: programs that have appeared by `s`
    /// whose output has been removed by stage `s`. Together with
    /// `omega_restricted_at` this decomposes `omega_at` exactly.
    pub fn omega_complement_at(&self, x: &Pi01Spec, s: Stage) -> Result<Rat, MachineError> {
        self.check_outputs(x.universe_size())?;
        let mut total = Rat::zero();
        for e in &self.entries {
            if e.appears_at <= s && !x.is_live(e.output, s) {
                total += &Self::weight(e);
            }
        }
        Ok(total)
    }

    /// `Omega({n})[s]`: measure of appeared programs with output `n`.
    pub fn omega_label_at(&self, label: u64, s: Stage) -> Rat {
        let mut total = Rat::zero();
        for e in &self.entries {
            if e.appears_at <= s && e.output == label {
                total += &Self::weight(e);
            }
        }
        total
    }

    /// Weight appearing strictly inside `(s0, s1]`, grouped by output.
    pub fn new_weight_by_label(&self, s0: Stage, s1: Stage) -> BTreeMap<u64, Rat> {
        let mut out: BTreeMap<u64, Rat> = BTreeMap::new();
        for e in &self.entries {
            if e.appears_at > s0 && e.appears_at <= s1 {
                let w = Self::weight(e);
                out.entry(e.output)
                    .and_modify(|v| *v += &w)
                    .or_insert(w);
            }
        }
        out
    }

    /// The restricted halting probability as an approximation stream
    /// (kind `General`: against a shrinking set it need not be
    /// monotone).
    pub fn omega_restricted_stream(&self, x: &Pi01Spec) -> Result<ApproxStream, MachineError> {
        self.check_outputs(x.universe_size())?;
        let m = self.clone();
        let xx = x.clone();
        let name = format!("omega({},{})", self.name, x.name());
        Ok(ApproxStream::from_fn(&name, StreamKind::General, None, move |s| {
            m.omega_restricted_at(&xx, s).expect("outputs validated")
        }))
    }

    /// The unrestricted halting probability as an increasing stream.
    pub fn omega_stream(&self) -> ApproxStream {
        let m = self.clone();
        let name = format!("omega({})", self.name);
        ApproxStream::from_fn(&name, StreamKind::Increasing, Some(self.total_measure()), move |s| {
            m.omega_at(s)
        })
    }
}

// ---------------------------------------------------------------------------
// Pi01Spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pi01Error {
    ZeroUniverse,
    RemovalAtStageZero { element: u64 },
    RemovalOutOfUniverse { element: u64, universe_size: u64 },
    DuplicateRemoval { element: u64 },
}

impl fmt::Display for Pi01Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pi01Error::ZeroUniverse => write!(f, "ZERO_UNIVERSE"),
            Pi01Error::RemovalAtStageZero { element } => {
                write!(f, "REMOVAL_AT_STAGE_ZERO: element {element}")
            }
            Pi01Error::RemovalOutOfUniverse { element, universe_size } => {
                write!(
                    f,
                    "REMOVAL_OUT_OF_UNIVERSE: element {element} >= universe size {universe_size}"
                )
            }
            Pi01Error::DuplicateRemoval { element } => {
                write!(f, "DUPLICATE_REMOVAL: element {element}")
            }
        }
    }
}

impl std::error::Error for Pi01Error {}

/// Finite-universe shrinking-set approximation: `X_s` is the universe
/// minus every element removed at a stage `<= s`. Removals happen at
/// positive stages, so `X_0` is always the full universe.
#[derive(Debug, Clone, Serialize)]
pub struct Pi01Spec {
    name: String,
    universe_size: u64,
    /// element -> removal stage
    removals: BTreeMap<u64, Stage>,
}

impl Pi01Spec {
    pub fn new(
        name: &str,
        universe_size: u64,
        removals: Vec<(Stage, u64)>,
    ) -> Result<Self, Pi01Error> {
        if universe_size == 0 {
            return Err(Pi01Error::ZeroUniverse);
        }
        let mut map = BTreeMap::new();
        for (stage, element) in removals {
            if stage == 0 {
                return Err(Pi01Error::RemovalAtStageZero { element });
            }
            if element >= universe_size {
                return Err(Pi01Error::RemovalOutOfUniverse {
                    element,
                    universe_size,
                });
            }
            if map.insert(element, stage).is_some() {
                return Err(Pi01Error::DuplicateRemoval { element });
            }
        }
        Ok(Pi01Spec {
            name: name.to_string(),
            universe_size,
            removals: map,
        })
    }

    /// The full universe with no removals.
    pub fn full(name: &str, universe_size: u64) -> Self {
        Pi01Spec::new(name, universe_size, Vec::new()).expect("no removals to validate")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn universe_size(&self) -> u64 {
        self.universe_size
    }

    pub fn removals(&self) -> impl Iterator<Item = (u64, Stage)> + '_ {
        self.removals.iter().map(|(&e, &s)| (e, s))
    }

    pub fn is_live(&self, element: u64, s: Stage) -> bool {
        element < self.universe_size
            && self.removals.get(&element).map_or(true, |&at| at > s)
    }

    /// `X_s` as an explicit set.
    pub fn stage_set(&self, s: Stage) -> BTreeSet<u64> {
        (0..self.universe_size)
            .filter(|&e| self.is_live(e, s))
            .collect()
    }

    /// Elements leaving the set strictly inside `(s0, s1]`, in
    /// removal-stage order (ties by element).
    pub fn removed_between(&self, s0: Stage, s1: Stage) -> Vec<u64> {
        let mut gone: Vec<(Stage, u64)> = self
            .removals
            .iter()
            .filter(|(_, &at)| at > s0 && at <= s1)
            .map(|(&e, &at)| (at, e))
            .collect();
        gone.sort_unstable();
        gone.into_iter().map(|(_, e)| e).collect()
    }
}

// ---------------------------------------------------------------------------
// Omega traces
// ---------------------------------------------------------------------------

/// Per-stage halting-probability values together with the programs
/// contributing at each stage; the value is always the exact sum of
/// `2^{-|program|}` over its contributors.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaTrace {
    pub values: BTreeMap<Stage, Rat>,
    pub contributors: BTreeMap<Stage, Vec<(String, u64)>>,
}

impl OmegaTrace {
    pub fn unrestricted(machine: &StagedMachine, horizon: Stage) -> Self {
        Self::build(machine, None, horizon).expect("no universe to violate")
    }

    pub fn restricted(
        machine: &StagedMachine,
        x: &Pi01Spec,
        horizon: Stage,
    ) -> Result<Self, MachineError> {
        Self::build(machine, Some(x), horizon)
    }

    fn build(
        machine: &StagedMachine,
        x: Option<&Pi01Spec>,
        horizon: Stage,
    ) -> Result<Self, MachineError> {
        if let Some(x) = x {
            machine.check_outputs(x.universe_size())?;
        }
        let mut values = BTreeMap::new();
        let mut contributors = BTreeMap::new();
        for s in 0..=horizon {
            let mut row = Vec::new();
            let mut total = Rat::zero();
            for e in machine.entries() {
                let live = x.map_or(true, |x| x.is_live(e.output, s));
                if e.appears_at <= s && live {
                    total += &Rat::pow2(-(e.program.len() as i64));
                    row.push((e.program.clone(), e.output));
                }
            }
            row.sort();
            values.insert(s, total);
            contributors.insert(s, row);
        }
        Ok(OmegaTrace {
            values,
            contributors,
        })
    }
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

/// Exact per-stage check that restricted plus complement weight equals
/// the unrestricted weight.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionAudit {
    /// `(stage, restricted + complement - omega)`; every residual must
    /// be exactly zero.
    pub residuals: Vec<(Stage, Rat)>,
    pub pass: bool,
}

pub fn decomposition_audit(
    machine: &StagedMachine,
    x: &Pi01Spec,
    horizon: Stage,
) -> Result<DecompositionAudit, MachineError> {
    let mut residuals = Vec::with_capacity(horizon as usize + 1);
    let mut pass = true;
    for s in 0..=horizon {
        let r = machine.omega_restricted_at(x, s)?
            + machine.omega_complement_at(x, s)?
            - machine.omega_at(s);
        pass = pass && r.is_zero();
        residuals.push((s, r));
    }
    Ok(DecompositionAudit { residuals, pass })
}

/// Round-trip check for a built weight-request machine: domain
/// prefix-free, total measure exactly the requested total, and each
/// output carrying exactly its requested weight.
#[derive(Debug, Clone, Serialize)]
pub struct KcAudit {
    pub prefix_free: bool,
    pub requested_total: Rat,
    pub machine_measure: Rat,
    pub per_output_exact: bool,
    pub pass: bool,
}

pub fn kc_audit(machine: &StagedMachine, requests: &[WeightRequest]) -> KcAudit {
    let programs: Vec<&str> = machine.entries().iter().map(|e| e.program.as_str()).collect();
    let prefix_free = is_prefix_free(&programs);
    let mut requested_total = Rat::zero();
    let mut per_output: BTreeMap<u64, Rat> = BTreeMap::new();
    for r in requests {
        requested_total += &r.weight;
        per_output
            .entry(r.output)
            .and_modify(|w| *w += &r.weight)
            .or_insert_with(|| r.weight.clone());
    }
    let machine_measure = machine.total_measure();
    let mut built: BTreeMap<u64, Rat> = BTreeMap::new();
    for e in machine.entries() {
        let w = Rat::pow2(-(e.program.len() as i64));
        built.entry(e.output).and_modify(|v| *v += &w).or_insert(w);
    }
    let per_output_exact = per_output == built;
    let pass = prefix_free && requested_total == machine_measure && per_output_exact;
    KcAudit {
        prefix_free,
        requested_total,
        machine_measure,
        per_output_exact,
        pass,
    }
}

/// Executable form of the adjunction contract: the combined machine
/// simulates every component on every entry at every stage up to the
/// horizon, and its measure is the coded sum of component measures.
#[derive(Debug, Clone, Serialize)]
pub struct AdjoinAudit {
    pub simulation_ok: bool,
    pub omega_combined: Rat,
    pub omega_coded_sum: Rat,
    pub pass: bool,
}

pub fn adjoin_audit(
    combined: &StagedMachine,
    machines: &[StagedMachine],
    horizon: Stage,
) -> AdjoinAudit {
    let mut simulation_ok = true;
    for (e, m) in machines.iter().enumerate() {
        let prefix = coding_prefix(e);
        for entry in m.entries() {
            let coded = format!("{prefix}{}", entry.program);
            for s in 0..=horizon {
                if combined.run(&coded, s) != m.run(&entry.program, s) {
                    simulation_ok = false;
                }
            }
        }
    }
    let omega_combined = combined.total_measure();
    let mut omega_coded_sum = Rat::zero();
    for (e, m) in machines.iter().enumerate() {
        omega_coded_sum += &(Rat::pow2(-(coding_prefix(e).len() as i64)) * m.total_measure());
    }
    let pass = simulation_ok && omega_combined == omega_coded_sum;
    AdjoinAudit {
        simulation_ok,
        omega_combined,
        omega_coded_sum,
        pass,
    }
}

// ---------------------------------------------------------------------------
// Kraft–Chaitin construction
// ---------------------------------------------------------------------------

/// One weight request: assign programs of total measure `weight` (a
/// positive dyadic rational) to `output`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightRequest {
    pub weight: Rat,
    pub output: u64,
}

/// Builds a prefix-free machine realizing the requested weights.
///
/// The free space is kept as a set of dyadic cylinders with pairwise
/// distinct lengths (so it reads like the binary expansion of the free
/// measure). Each request is split into its binary expansion; each
/// component `2^{-j}` is served from the longest free cylinder of
/// length `<= j`, extending with zeros and freeing the siblings along
/// the split path. This is fully deterministic. The programs of the
/// `i`-th request appear at stage `i`.
pub fn kraft_chaitin_build(requests: &[WeightRequest]) -> Result<StagedMachine, MachineError> {
    let mut total = Rat::zero();
    for r in requests {
        if !r.weight.is_positive() {
            return Err(MachineError::NonpositiveWeight {
                weight: r.weight.clone(),
            });
        }
        if r.weight.dyadic_parts().is_none() {
            return Err(MachineError::NonDyadicWeight {
                weight: r.weight.clone(),
            });
        }
        total += &r.weight;
    }
    if total > Rat::one() {
        return Err(MachineError::WeightOverflow { total });
    }

    // free cylinders, keyed by length; at most one per length
    let mut free: BTreeMap<u64, String> = BTreeMap::new();
    free.insert(0, String::new());
    let mut entries = Vec::new();

    for (index, request) in requests.iter().enumerate() {
        let (m, k) = request.weight.dyadic_parts().expect("validated dyadic");
        // component lengths from the binary expansion of m/2^k,
        // largest weight (shortest program) first
        let mut lengths: Vec<u64> = (0..m.bits())
            .filter(|&b| bit(&m, b))
            .map(|b| k - b)
            .collect();
        lengths.sort_unstable();
        for j in lengths {
            let (len, cyl) = free
                .range(..=j)
                .next_back()
                .map(|(&l, c)| (l, c.clone()))
                .expect("total weight <= 1 guarantees a fitting cylinder");
            free.remove(&len);
            let mut program = cyl;
            for _ in len..j {
                // free the sibling of each zero-extension step
                let mut sibling = program.clone();
                sibling.push('1');
                free.insert(sibling.len() as u64, sibling);
                program.push('0');
            }
            entries.push(MachineEntry {
                program,
                output: request.output,
                appears_at: index as Stage,
            });
        }
    }

    StagedMachine::new("kc", entries)
}

fn bit(n: &BigUint, b: u64) -> bool {
    !((n >> b) & BigUint::from(1u32)).is_zero()
}

// ---------------------------------------------------------------------------
// Universal machine by adjunction
// ---------------------------------------------------------------------------

/// Self-delimiting coding prefix for machine index `e`: `1^e 0`.
pub fn coding_prefix(e: usize) -> String {
    let mut p = "1".repeat(e);
    p.push('0');
    p
}

/// The machine `U` with `U(coding_prefix(e) + tau) = M_e(tau)` for
/// every entry of every listed machine, appearance stages preserved.
pub fn adjoin_universal(machines: &[StagedMachine]) -> Result<StagedMachine, MachineError> {
    if machines.is_empty() {
        return Err(MachineError::EmptyMachineList);
    }
    let mut entries = Vec::new();
    for (e, m) in machines.iter().enumerate() {
        let prefix = coding_prefix(e);
        for entry in m.entries() {
            entries.push(MachineEntry {
                program: format!("{prefix}{}", entry.program),
                output: entry.output,
                appears_at: entry.appears_at,
            });
        }
    }
    let name = format!(
        "adjoin({})",
        machines.iter().map(StagedMachine::name).collect::<Vec<_>>().join(",")
    );
    StagedMachine::new(&name, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(program: &str, output: u64, appears_at: Stage) -> MachineEntry {
        MachineEntry {
            program: program.to_string(),
            output,
            appears_at,
        }
    }

    #[test]
    fn prefix_free_checks() {
        assert!(is_prefix_free(&["0", "10", "110"]));
        assert!(!is_prefix_free(&["0", "01"]));
        assert!(is_prefix_free::<&str>(&[]));
        assert!(!is_prefix_free(&["10", "10"]));
        assert!(is_prefix_free(&[""]));
        assert!(!is_prefix_free(&["", "0"]));
    }

    #[test]
    fn constructor_rejects_bad_tables() {
        assert!(matches!(
            StagedMachine::new("m", vec![entry("0", 1, 0), entry("01", 2, 0)]),
            Err(MachineError::NotPrefixFree { .. })
        ));
        assert!(matches!(
            StagedMachine::new("m", vec![entry("0", 1, 0), entry("0", 2, 0)]),
            Err(MachineError::DuplicateProgram { .. })
        ));
        assert!(matches!(
            StagedMachine::new("m", vec![entry("02", 1, 0)]),
            Err(MachineError::BadProgram { .. })
        ));
    }

    #[test]
    fn run_examples() {
        let m = StagedMachine::new("m", vec![entry("0", 5, 2)]).unwrap();
        assert_eq!(m.run("0", 3), Some(5));
        assert_eq!(m.run("0", 1), None);
        assert_eq!(m.run("00", 9), None);
    }

    #[test]
    fn omega_stage_examples() {
        let m =
            StagedMachine::new("m", vec![entry("0", 1, 2), entry("10", 2, 5)]).unwrap();
        assert_eq!(m.omega_at(3), Rat::new(1, 2));
        assert_eq!(m.omega_at(5), Rat::new(3, 4));
        assert_eq!(m.omega_at(0), Rat::zero());
    }

    #[test]
    fn pi01_stage_examples() {
        let x = Pi01Spec::new("x", 4, vec![(2, 1)]).unwrap();
        assert_eq!(x.stage_set(1), BTreeSet::from([0, 1, 2, 3]));
        assert_eq!(x.stage_set(2), BTreeSet::from([0, 2, 3]));
        let full = Pi01Spec::full("full", 4);
        for s in 0..6 {
            assert_eq!(full.stage_set(s).len(), 4);
        }
    }

    #[test]
    fn pi01_rejects_bad_specs() {
        assert!(matches!(
            Pi01Spec::new("x", 4, vec![(0, 1)]),
            Err(Pi01Error::RemovalAtStageZero { .. })
        ));
        assert!(matches!(
            Pi01Spec::new("x", 4, vec![(1, 7)]),
            Err(Pi01Error::RemovalOutOfUniverse { .. })
        ));
        assert!(matches!(
            Pi01Spec::new("x", 4, vec![(1, 2), (3, 2)]),
            Err(Pi01Error::DuplicateRemoval { .. })
        ));
    }

    #[test]
    fn omega_restricted_examples() {
        let m =
            StagedMachine::new("m", vec![entry("0", 1, 2), entry("10", 2, 2)]).unwrap();
        let x = Pi01Spec::new("x", 4, vec![(4, 1)]).unwrap();
        assert_eq!(m.omega_restricted_at(&x, 3).unwrap(), Rat::new(3, 4));
        assert_eq!(m.omega_restricted_at(&x, 4).unwrap(), Rat::new(1, 4));
        // no removals: coincides with omega_at
        let full = Pi01Spec::full("full", 4);
        for s in 0..6 {
            assert_eq!(m.omega_restricted_at(&full, s).unwrap(), m.omega_at(s));
        }
        // decomposition at every stage
        for s in 0..8 {
            let lhs = m.omega_restricted_at(&x, s).unwrap()
                + m.omega_complement_at(&x, s).unwrap();
            assert_eq!(lhs, m.omega_at(s));
        }
    }

    #[test]
    fn omega_restricted_rejects_output_outside_universe() {
        let m = StagedMachine::new("m", vec![entry("0", 9, 0)]).unwrap();
        let x = Pi01Spec::full("x", 4);
        assert!(matches!(
            m.omega_restricted_at(&x, 0),
            Err(MachineError::OutputOutOfUniverse { .. })
        ));
    }

    #[test]
    fn kraft_chaitin_single_request() {
        let m = kraft_chaitin_build(&[WeightRequest {
            weight: Rat::new(1, 2),
            output: 3,
        }])
        .unwrap();
        assert_eq!(m.entries().len(), 1);
        assert_eq!(m.entries()[0].program.len(), 1);
        assert_eq!(m.entries()[0].output, 3);
        assert_eq!(m.total_measure(), Rat::new(1, 2));
    }

    #[test]
    fn kraft_chaitin_fills_exactly() {
        let m = kraft_chaitin_build(&[
            WeightRequest { weight: Rat::new(1, 4), output: 1 },
            WeightRequest { weight: Rat::new(1, 4), output: 2 },
            WeightRequest { weight: Rat::new(1, 2), output: 3 },
        ])
        .unwrap();
        assert_eq!(m.total_measure(), Rat::one());
        let programs: Vec<&str> = m.entries().iter().map(|e| e.program.as_str()).collect();
        assert!(is_prefix_free(&programs));
        // per-output measures are exactly as requested
        for (output, want) in [(1, Rat::new(1, 4)), (2, Rat::new(1, 4)), (3, Rat::new(1, 2))] {
            let mut got = Rat::zero();
            for e in m.entries().iter().filter(|e| e.output == output) {
                got += &Rat::pow2(-(e.program.len() as i64));
            }
            assert_eq!(got, want);
        }
        // i-th request appears at stage i
        for (i, want_output) in [(0u64, 1u64), (1, 2), (2, 3)] {
            assert!(m
                .entries()
                .iter()
                .filter(|e| e.appears_at == i)
                .all(|e| e.output == want_output));
        }
    }

    #[test]
    fn kraft_chaitin_overflow_and_bad_weights() {
        assert!(matches!(
            kraft_chaitin_build(&[
                WeightRequest { weight: Rat::new(3, 4), output: 0 },
                WeightRequest { weight: Rat::new(1, 2), output: 1 },
            ]),
            Err(MachineError::WeightOverflow { .. })
        ));
        assert!(matches!(
            kraft_chaitin_build(&[WeightRequest { weight: Rat::new(1, 3), output: 0 }]),
            Err(MachineError::NonDyadicWeight { .. })
        ));
        assert!(matches!(
            kraft_chaitin_build(&[WeightRequest { weight: Rat::zero(), output: 0 }]),
            Err(MachineError::NonpositiveWeight { .. })
        ));
    }

    #[test]
    fn kraft_chaitin_non_power_weight() {
        // 3/8 = 1/4 + 1/8: two programs, lengths 2 and 3
        let m = kraft_chaitin_build(&[WeightRequest { weight: Rat::new(3, 8), output: 7 }])
            .unwrap();
        let mut lengths: Vec<usize> =
            m.entries().iter().map(|e| e.program.len()).collect();
        lengths.sort_unstable();
        assert_eq!(lengths, vec![2, 3]);
        assert_eq!(m.total_measure(), Rat::new(3, 8));
    }

    #[test]
    fn adjoin_examples() {
        let m0 = StagedMachine::new("m0", vec![entry("0", 7, 0)]).unwrap();
        let u = adjoin_universal(std::slice::from_ref(&m0)).unwrap();
        assert_eq!(u.entries().len(), 1);
        assert_eq!(u.entries()[0].program, "00");
        assert_eq!(u.run("00", 0), Some(7));
        assert_eq!(u.total_measure(), Rat::new(1, 4));

        let m1 = StagedMachine::new("m1", vec![entry("", 9, 0)]).unwrap();
        let u = adjoin_universal(&[m0, m1]).unwrap();
        assert!(u.entries().iter().any(|e| e.program == "10" && e.output == 9));
        assert!(matches!(
            adjoin_universal(&[]),
            Err(MachineError::EmptyMachineList)
        ));
    }

    #[test]
    fn adjoin_simulation_identity() {
        let m0 = StagedMachine::new(
            "m0",
            vec![entry("0", 7, 1), entry("10", 3, 4)],
        )
        .unwrap();
        let m1 = StagedMachine::new("m1", vec![entry("", 9, 2)]).unwrap();
        let machines = [m0, m1];
        let u = adjoin_universal(&machines).unwrap();
        for (e, m) in machines.iter().enumerate() {
            let prefix = coding_prefix(e);
            for ent in m.entries() {
                for s in 0..6 {
                    assert_eq!(
                        u.run(&format!("{prefix}{}", ent.program), s),
                        m.run(&ent.program, s)
                    );
                }
            }
        }
    }

    #[test]
    fn omega_trace_contributors_sum_to_value() {
        let m =
            StagedMachine::new("m", vec![entry("0", 1, 2), entry("10", 2, 2)]).unwrap();
        let x = Pi01Spec::new("x", 4, vec![(4, 1)]).unwrap();
        let trace = OmegaTrace::restricted(&m, &x, 6).unwrap();
        for (s, contributors) in &trace.contributors {
            let mut sum = Rat::zero();
            for (p, _) in contributors {
                sum += &Rat::pow2(-(p.len() as i64));
            }
            assert_eq!(&sum, trace.values.get(s).unwrap());
        }
    }
}
