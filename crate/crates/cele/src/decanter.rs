//! The decanter: labeled parcels of halting-probability weight flowing
//! down levels as a shrinking set evicts outputs, plus the interval
//! test driven by its event log.
//!
//! A run selects stages where the restricted halting probability
//! strictly decreases, places the initial weight as level-0 quanta,
//! and then per transition purges the quanta whose labels left the
//! set, re-places the incoming weight one level below the quanta it
//! consumes (exact prefix-sum bookkeeping), and evicts the remainder.
//! Everything is conserved exactly and audited: weight in equals
//! weight placed, placed plus evicted equals purged, and the omega
//! drop equals out minus in at every step.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::machine::{MachineError, Pi01Spec, StagedMachine};
use crate::rational::Rat;
use crate::stream::Stage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecanterError {
    /// Fewer strict decreases of the restricted omega than required.
    NotRightTail { decreases_found: usize, required: usize },
    /// The level bound only holds when the machine's domain measure is
    /// strictly below 1; a full-measure table is rejected up front.
    DomainMeasureNotSubUnit { total: Rat },
    /// Stage list not produced by selection (not strictly decreasing).
    InvalidStages { reason: String },
    /// Incoming weight exceeded purged weight. Cannot happen for
    /// selected stages; kept as an internal soundness check.
    ConservationViolation { step: usize, detail: String },
    /// A level breached its throughput bound; an implementation bug,
    /// never valid data.
    BoundViolation { level: u64, throughput: Rat, bound: Rat },
    Machine(MachineError),
}

impl fmt::Display for DecanterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecanterError::NotRightTail { decreases_found, required } => write!(
                f,
                "NOT_RIGHT_TAIL: {decreases_found} strict decreases found, {required} required"
            ),
            DecanterError::DomainMeasureNotSubUnit { total } => {
                write!(f, "DOMAIN_MEASURE_NOT_SUBUNIT: machine measure {total} >= 1")
            }
            DecanterError::InvalidStages { reason } => write!(f, "INVALID_STAGES: {reason}"),
            DecanterError::ConservationViolation { step, detail } => {
                write!(f, "CONSERVATION_VIOLATION at step {step}: {detail}")
            }
            DecanterError::BoundViolation { level, throughput, bound } => write!(
                f,
                "BOUND_VIOLATION: level {level} throughput {throughput} >= {bound}"
            ),
            DecanterError::Machine(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DecanterError {}

impl From<MachineError> for DecanterError {
    fn from(e: MachineError) -> Self {
        DecanterError::Machine(e)
    }
}

// ---------------------------------------------------------------------------
// Stage selection
// ---------------------------------------------------------------------------

/// Selects the stage sequence the decanter runs on: the first stage
/// attaining the maximum of the restricted omega over `[0, horizon]`,
/// then greedily every stage where the value strictly decreases below
/// the last selected value. The selected omegas are strictly
/// decreasing; `NOT_RIGHT_TAIL` if fewer than `min_decreases` strict
/// drops exist.
pub fn select_stages(
    machine: &StagedMachine,
    x: &Pi01Spec,
    horizon: Stage,
    min_decreases: usize,
) -> Result<Vec<Stage>, DecanterError> {
    let mut values = Vec::with_capacity(horizon as usize + 1);
    for s in 0..=horizon {
        values.push(machine.omega_restricted_at(x, s)?);
    }
    let max = values.iter().max().expect("horizon >= 0").clone();
    let start = values.iter().position(|v| *v == max).expect("max exists") as Stage;
    let mut selected = vec![start];
    let mut last = max;
    for s in start + 1..=horizon {
        let v = &values[s as usize];
        if *v < last {
            selected.push(s);
            last = v.clone();
        }
    }
    let decreases = selected.len() - 1;
    if decreases < min_decreases {
        return Err(DecanterError::NotRightTail {
            decreases_found: decreases,
            required: min_decreases,
        });
    }
    Ok(selected)
}

// ---------------------------------------------------------------------------
// Quanta and run state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QuantumStatus {
    /// Sitting at its level.
    Resident,
    /// Mid-step: selected for purging, fate not yet decided.
    Purged,
    /// Fully used up creating flows.
    Consumed,
    /// Some positive part of it left the decanter for good.
    Evicted,
}

/// A labeled parcel of weight at a level. For purged quanta the
/// consumed/evicted split is recorded exactly.
#[derive(Debug, Clone, Serialize)]
pub struct Quantum {
    pub id: usize,
    pub label: u64,
    pub weight: Rat,
    pub level: u64,
    pub status: QuantumStatus,
    pub created_at_step: usize,
    /// Id of the purged quantum this one flows from, if any.
    pub flows_from: Option<usize>,
    pub consumed_weight: Rat,
    pub evicted_weight: Rat,
}

/// Per-step event. `step` indexes the selected-stage list; initial
/// placements carry step 0, the transition into `stages[i+1]` carries
/// step `i+1`.
#[derive(Debug, Clone, Serialize)]
pub enum DecanterEvent {
    Place { step: usize, quantum: usize, label: u64, weight: Rat, level: u64 },
    Purge { step: usize, quantum: usize, label: u64, weight: Rat, level: u64 },
    /// One parcel of incoming weight with its exact consumption
    /// bookkeeping: cursor (index into the purged list) and
    /// used-so-far weight, entering and leaving the step.
    FlowStep {
        step: usize,
        parcel: usize,
        label: u64,
        delta: Rat,
        cursor_entering: usize,
        used_entering: Rat,
        cursor_leaving: usize,
        used_leaving: Rat,
    },
    Flow {
        step: usize,
        quantum: usize,
        flows_from: usize,
        label: u64,
        weight: Rat,
        from_level: u64,
        to_level: u64,
    },
    Evict { step: usize, quantum: usize, label: u64, weight: Rat, level: u64 },
}

/// Exact conservation numbers of one transition.
#[derive(Debug, Clone, Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub stage: Stage,
    pub weight_in: Rat,
    pub weight_out: Rat,
    pub weight_placed: Rat,
    pub weight_evicted: Rat,
    pub omega_drop: Rat,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecanterState {
    pub machine_name: String,
    pub spec_name: String,
    pub selected_stages: Vec<Stage>,
    /// Strictly decreasing omega values at the selected stages.
    pub omega_values: Vec<Rat>,
    pub quanta: Vec<Quantum>,
    pub events: Vec<DecanterEvent>,
    pub steps: Vec<StepSummary>,
}

impl DecanterState {
    /// Resident quanta per level at the end of the run.
    pub fn levels(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for q in &self.quanta {
            if q.status == QuantumStatus::Resident {
                map.entry(q.level).or_default().push(q.id);
            }
        }
        map
    }

    /// Evicted weight at levels `>= level` over the whole run.
    pub fn evicted_weight_at_or_below(&self, level: u64) -> Rat {
        let mut total = Rat::zero();
        for q in &self.quanta {
            if q.level >= level {
                total += &q.evicted_weight;
            }
        }
        total
    }

    /// Steps at which some quantum at a level `< level` was evicted.
    pub fn eviction_steps_above(&self, level: u64) -> Vec<usize> {
        let mut steps: Vec<usize> = self
            .events
            .iter()
            .filter_map(|e| match e {
                DecanterEvent::Evict { step, level: l, .. } if *l < level => Some(*step),
                _ => None,
            })
            .collect();
        steps.dedup();
        steps
    }

    /// Count of individual eviction events at levels `< level`.
    pub fn eviction_event_count_above(&self, level: u64) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, DecanterEvent::Evict { level: l, .. } if *l < level))
            .count()
    }
}

// ---------------------------------------------------------------------------
// The run
// ---------------------------------------------------------------------------

struct Arena {
    quanta: Vec<Quantum>,
    events: Vec<DecanterEvent>,
}

impl Arena {
    fn create(
        &mut self,
        label: u64,
        weight: Rat,
        level: u64,
        step: usize,
        flows_from: Option<usize>,
    ) -> usize {
        assert!(weight.is_positive(), "quanta carry positive weight");
        let id = self.quanta.len();
        self.quanta.push(Quantum {
            id,
            label,
            weight: weight.clone(),
            level,
            status: QuantumStatus::Resident,
            created_at_step: step,
            flows_from,
            consumed_weight: Rat::zero(),
            evicted_weight: Rat::zero(),
        });
        match flows_from {
            None => self.events.push(DecanterEvent::Place {
                step,
                quantum: id,
                label,
                weight,
                level,
            }),
            Some(src) => {
                let from_level = self.quanta[src].level;
                self.events.push(DecanterEvent::Flow {
                    step,
                    quantum: id,
                    flows_from: src,
                    label,
                    weight,
                    from_level,
                    to_level: level,
                });
            }
        }
        id
    }
}

/// Executes the decanter over stages produced by [`select_stages`].
pub fn decanter_run(
    machine: &StagedMachine,
    x: &Pi01Spec,
    stages: &[Stage],
) -> Result<DecanterState, DecanterError> {
    let total = machine.total_measure();
    if total >= Rat::one() {
        return Err(DecanterError::DomainMeasureNotSubUnit { total });
    }
    if stages.is_empty() {
        return Err(DecanterError::InvalidStages {
            reason: "empty stage list".into(),
        });
    }
    let mut omega_values = Vec::with_capacity(stages.len());
    for &s in stages {
        omega_values.push(machine.omega_restricted_at(x, s)?);
    }
    for (i, w) in stages.windows(2).enumerate() {
        if w[0] >= w[1] {
            return Err(DecanterError::InvalidStages {
                reason: format!("stages not increasing at index {i}"),
            });
        }
        if omega_values[i] <= omega_values[i + 1] {
            return Err(DecanterError::InvalidStages {
                reason: format!("omega not strictly decreasing at index {i}"),
            });
        }
    }

    let mut arena = Arena {
        quanta: Vec::new(),
        events: Vec::new(),
    };
    let mut steps = Vec::new();

    // initial placement: one level-0 quantum per live label with weight
    let s0 = stages[0];
    for n in x.stage_set(s0) {
        let w = machine.omega_label_at(n, s0);
        if w.is_positive() {
            arena.create(n, w, 0, 0, None);
        }
    }

    for i in 0..stages.len() - 1 {
        let step = i + 1;
        let (si, sj) = (stages[i], stages[i + 1]);

        // purge residents whose labels leave the set, in (level,
        // creation-time) order
        let removed = x.removed_between(si, sj);
        let mut purged: Vec<usize> = arena
            .quanta
            .iter()
            .filter(|q| q.status == QuantumStatus::Resident && removed.contains(&q.label))
            .map(|q| q.id)
            .collect();
        purged.sort_by_key(|&id| (arena.quanta[id].level, id));
        let mut weight_out = Rat::zero();
        for &id in &purged {
            arena.quanta[id].status = QuantumStatus::Purged;
            let (label, weight, level) = {
                let q = &arena.quanta[id];
                (q.label, q.weight.clone(), q.level)
            };
            weight_out += &weight;
            arena.events.push(DecanterEvent::Purge {
                step,
                quantum: id,
                label,
                weight,
                level,
            });
        }

        // incoming parcels: new weight per label still live at the
        // later stage, label-ascending
        let parcels: Vec<(u64, Rat)> = machine
            .new_weight_by_label(si, sj)
            .into_iter()
            .filter(|(n, _)| x.is_live(*n, sj))
            .collect();
        let weight_in: Rat = {
            let mut t = Rat::zero();
            for (_, d) in &parcels {
                t += d;
            }
            t
        };
        if weight_in > weight_out {
            return Err(DecanterError::ConservationViolation {
                step,
                detail: format!("weight in {weight_in} exceeds weight out {weight_out}"),
            });
        }

        // consumption loop: remaining weights of the purged list, a
        // cursor, and the used-so-far amount persist across parcels
        let mut remaining: Vec<Rat> = purged
            .iter()
            .map(|&id| arena.quanta[id].weight.clone())
            .collect();
        let mut cursor: usize = 0;
        let mut used = Rat::zero();
        let mut weight_placed = Rat::zero();
        for (t, (label, delta)) in parcels.iter().enumerate() {
            let cursor_entering = cursor;
            let used_entering = used.clone();
            remaining[cursor] = &remaining[cursor] - &used;
            // least end with sum(remaining[cursor..=end]) >= delta
            let mut acc = Rat::zero();
            let mut end = None;
            for (j, r) in remaining.iter().enumerate().skip(cursor) {
                acc += r;
                if acc >= *delta {
                    end = Some(j);
                    break;
                }
            }
            let end = end.ok_or_else(|| DecanterError::ConservationViolation {
                step,
                detail: format!("parcel ({label}, {delta}) exceeds available purged weight"),
            })?;
            let mut head = Rat::zero();
            for j in cursor..end {
                head += &remaining[j];
            }
            let tail_used = delta - &head;
            // full consumption of everything strictly before `end`
            for j in cursor..end {
                if remaining[j].is_positive() {
                    let src = purged[j];
                    let to_level = arena.quanta[src].level + 1;
                    let w = remaining[j].clone();
                    arena.quanta[src].consumed_weight =
                        &arena.quanta[src].consumed_weight + &w;
                    weight_placed += &w;
                    arena.create(*label, w, to_level, step, Some(src));
                }
            }
            // partial consumption of `end`
            if tail_used.is_positive() {
                let src = purged[end];
                let to_level = arena.quanta[src].level + 1;
                arena.quanta[src].consumed_weight =
                    &arena.quanta[src].consumed_weight + &tail_used;
                weight_placed += &tail_used;
                arena.create(*label, tail_used.clone(), to_level, step, Some(src));
            }
            cursor = end;
            used = tail_used;
            arena.events.push(DecanterEvent::FlowStep {
                step,
                parcel: t + 1,
                label: *label,
                delta: delta.clone(),
                cursor_entering,
                used_entering,
                cursor_leaving: cursor,
                used_leaving: used.clone(),
            });
        }

        // eviction of the unconsumed remainder
        let mut weight_evicted = Rat::zero();
        if !purged.is_empty() {
            let from = if parcels.is_empty() { 0 } else { cursor };
            for j in from..purged.len() {
                let mut left = remaining[j].clone();
                if j == cursor && !parcels.is_empty() {
                    left = &left - &used;
                }
                if left.is_positive() {
                    let id = purged[j];
                    arena.quanta[id].evicted_weight = left.clone();
                    weight_evicted += &left;
                    let (label, level) = (arena.quanta[id].label, arena.quanta[id].level);
                    arena.events.push(DecanterEvent::Evict {
                        step,
                        quantum: id,
                        label,
                        weight: left,
                        level,
                    });
                }
            }
        }
        // finalize statuses of this step's purged quanta
        for &id in &purged {
            let q = &mut arena.quanta[id];
            q.status = if q.evicted_weight.is_positive() {
                QuantumStatus::Evicted
            } else {
                QuantumStatus::Consumed
            };
        }

        // exact conservation checks
        let omega_drop = &omega_values[i] - &omega_values[i + 1];
        if weight_placed != weight_in {
            return Err(DecanterError::ConservationViolation {
                step,
                detail: format!("placed {weight_placed} != in {weight_in}"),
            });
        }
        if &weight_placed + &weight_evicted != weight_out {
            return Err(DecanterError::ConservationViolation {
                step,
                detail: format!(
                    "placed {weight_placed} + evicted {weight_evicted} != out {weight_out}"
                ),
            });
        }
        if omega_drop != &weight_out - &weight_in {
            return Err(DecanterError::ConservationViolation {
                step,
                detail: format!("omega drop {omega_drop} != out - in"),
            });
        }
        steps.push(StepSummary {
            step,
            stage: sj,
            weight_in,
            weight_out,
            weight_placed,
            weight_evicted,
            omega_drop,
        });
    }

    Ok(DecanterState {
        machine_name: machine.name().to_string(),
        spec_name: x.name().to_string(),
        selected_stages: stages.to_vec(),
        omega_values,
        quanta: arena.quanta,
        events: arena.events,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Level report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LevelStats {
    pub level: u64,
    /// Total weight of every quantum ever created at this level,
    /// including ones later purged or evicted.
    pub throughput: Rat,
    pub resident: Rat,
    pub quanta_ever: usize,
    /// `1/(level+1)`, the strict throughput bound.
    pub bound: Rat,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub levels: Vec<LevelStats>,
}

/// Per-level throughput and residency; errors with `BOUND_VIOLATION`
/// if any level reaches its `1/(level+1)` bound.
pub fn level_report(state: &DecanterState) -> Result<LevelReport, DecanterError> {
    let mut map: BTreeMap<u64, (Rat, Rat, usize)> = BTreeMap::new();
    for q in &state.quanta {
        let entry = map.entry(q.level).or_insert((Rat::zero(), Rat::zero(), 0));
        entry.0 += &q.weight;
        entry.2 += 1;
        if q.status == QuantumStatus::Resident {
            entry.1 += &q.weight;
        }
    }
    let mut levels = Vec::new();
    for (level, (throughput, resident, quanta_ever)) in map {
        let bound = Rat::from_big(1.into(), (level + 1).into());
        if throughput >= bound {
            return Err(DecanterError::BoundViolation {
                level,
                throughput,
                bound,
            });
        }
        levels.push(LevelStats {
            level,
            throughput,
            resident,
            quanta_ever,
            bound,
        });
    }
    Ok(LevelReport { levels })
}

// ---------------------------------------------------------------------------
// The interval test over the event log
// ---------------------------------------------------------------------------

/// One enumerated interval, stored half-open `(lo, hi]` so the right
/// endpoint (the current omega value) is included; the measure is
/// unaffected by this representation choice.
#[derive(Debug, Clone, Serialize)]
pub struct MlInterval {
    pub lo: Rat,
    pub hi: Rat,
    pub stage: Stage,
}

#[derive(Debug, Clone, Serialize)]
pub struct MlCycle {
    pub delta: Rat,
    pub intervals: Vec<MlInterval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MlTestTrace {
    pub index: u64,
    pub cycles: Vec<MlCycle>,
    /// Stages at which the test was injured (an eviction occurred at a
    /// level below `index`).
    pub injuries: Vec<Stage>,
}

impl MlTestTrace {
    pub fn intervals(&self) -> impl Iterator<Item = &MlInterval> {
        self.cycles.iter().flat_map(|c| c.intervals.iter())
    }
}

fn cycle_delta(index: u64, k: u64) -> Rat {
    Rat::pow2(-(index as i64) - (k as i64) - 2)
}

/// Walks the selected stages of a completed run. At each valid stage
/// the interval `(omega - delta, omega]` joins the current cycle; an
/// eviction below `index` injures the test: the stage enumerates
/// nothing, the cycle closes, and delta halves.
pub fn build_ml_test(state: &DecanterState, index: u64) -> MlTestTrace {
    let mut cycles = vec![MlCycle {
        delta: cycle_delta(index, 0),
        intervals: Vec::new(),
    }];
    let mut injuries = Vec::new();
    let injury_steps = state.eviction_steps_above(index);
    for (step, stage) in state.selected_stages.iter().enumerate() {
        let injured = injury_steps.contains(&step);
        if injured {
            injuries.push(*stage);
            let k = cycles.len() as u64;
            cycles.push(MlCycle {
                delta: cycle_delta(index, k),
                intervals: Vec::new(),
            });
        } else {
            let omega = state.omega_values[step].clone();
            let delta = cycles.last().expect("one cycle always open").delta.clone();
            cycles.last_mut().unwrap().intervals.push(MlInterval {
                lo: &omega - &delta,
                hi: omega,
                stage: *stage,
            });
        }
    }
    MlTestTrace {
        index,
        cycles,
        injuries,
    }
}

/// Index transformation giving the uniformly-shrinking family:
/// the `i`-th member is the test of index `2^{i+1}`.
pub fn v_test_index(i: u32) -> u64 {
    2u64.pow(i + 1)
}

// ---------------------------------------------------------------------------
// Test audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MlAudit {
    pub index: u64,
    /// Every cycle's delta equals its schedule value exactly.
    pub delta_schedule_ok: bool,
    /// Every interval's length equals its cycle's delta exactly.
    pub interval_lengths_ok: bool,
    /// Injuries happened exactly at the stages with evictions below
    /// the index.
    pub injuries_match_evictions: bool,
    /// Injury count bounded by the eviction-event count below the
    /// index.
    pub injury_count_bounded: bool,
    /// Final omega lies in the last interval of the final nonempty
    /// cycle (when one exists).
    pub final_omega_captured: Option<bool>,
    /// Sum of deltas over nonempty cycles plus all weight evicted at
    /// levels at or beyond the index.
    pub audited_measure: Rat,
    /// `2/(index+1)`.
    pub measure_bound: Rat,
    pub measure_within_bound: bool,
    /// Exact measure of the union of all enumerated intervals.
    pub union_measure: Rat,
    pub pass: bool,
}

pub fn audit_ml_test(trace: &MlTestTrace, state: &DecanterState) -> MlAudit {
    let index = trace.index;
    let mut delta_schedule_ok = true;
    let mut interval_lengths_ok = true;
    for (k, cycle) in trace.cycles.iter().enumerate() {
        if cycle.delta != cycle_delta(index, k as u64) {
            delta_schedule_ok = false;
        }
        for iv in &cycle.intervals {
            if &iv.hi - &iv.lo != cycle.delta {
                interval_lengths_ok = false;
            }
        }
    }

    let expected_injuries: Vec<Stage> = state
        .eviction_steps_above(index)
        .into_iter()
        .map(|step| state.selected_stages[step])
        .collect();
    let injuries_match_evictions = trace.injuries == expected_injuries;
    let injury_count_bounded =
        trace.injuries.len() <= state.eviction_event_count_above(index);

    // only meaningful when the final cycle enumerated anything: an
    // injury at the last stage leaves nothing to contain omega yet
    let final_omega_captured = trace
        .cycles
        .last()
        .filter(|c| !c.intervals.is_empty())
        .map(|c| {
            let last = c.intervals.last().expect("nonempty");
            let omega = state.omega_values.last().expect("run nonempty");
            last.lo < *omega && *omega <= last.hi
        });

    let mut audited_measure = Rat::zero();
    for c in &trace.cycles {
        if !c.intervals.is_empty() {
            audited_measure += &c.delta;
        }
    }
    audited_measure += &state.evicted_weight_at_or_below(index);
    let measure_bound = Rat::from_big(2.into(), (index + 1).into());
    let measure_within_bound = audited_measure <= measure_bound;

    // exact union measure of the (lo, hi] intervals
    let mut spans: Vec<(Rat, Rat)> = trace
        .intervals()
        .map(|iv| (iv.lo.clone(), iv.hi.clone()))
        .collect();
    spans.sort();
    let mut union_measure = Rat::zero();
    let mut current: Option<(Rat, Rat)> = None;
    for (lo, hi) in spans {
        match current.take() {
            None => current = Some((lo, hi)),
            Some((clo, chi)) => {
                if lo <= chi {
                    current = Some((clo, if hi > chi { hi } else { chi }));
                } else {
                    union_measure += &(&chi - &clo);
                    current = Some((lo, hi));
                }
            }
        }
    }
    if let Some((clo, chi)) = current {
        union_measure += &(&chi - &clo);
    }

    let pass = delta_schedule_ok
        && interval_lengths_ok
        && injuries_match_evictions
        && injury_count_bounded
        && final_omega_captured.unwrap_or(true)
        && measure_within_bound;

    MlAudit {
        index,
        delta_schedule_ok,
        interval_lengths_ok,
        injuries_match_evictions,
        injury_count_bounded,
        final_omega_captured,
        audited_measure,
        measure_bound,
        measure_within_bound,
        union_measure,
        pass,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineEntry;

    fn entry(program: &str, output: u64, appears_at: Stage) -> MachineEntry {
        MachineEntry {
            program: program.to_string(),
            output,
            appears_at,
        }
    }

    /// Universe {0,1,2,3}; programs "0"->1 @2, "10"->2 @2, "110"->2 @4;
    /// element 1 removed at stage 4.
    fn hand_instance() -> (StagedMachine, Pi01Spec) {
        let m = StagedMachine::new(
            "hand",
            vec![entry("0", 1, 2), entry("10", 2, 2), entry("110", 2, 4)],
        )
        .unwrap();
        let x = Pi01Spec::new("hand-x", 4, vec![(4, 1)]).unwrap();
        (m, x)
    }

    #[test]
    fn select_stages_scan() {
        // staged values 3/4, 3/4, 3/8, 3/8, 1/4 -> selected 0, 2, 4
        let m = StagedMachine::new(
            "m",
            vec![
                entry("01", 1, 0),
                entry("001", 2, 0),
                entry("10", 3, 0),
                entry("000", 4, 0),
            ],
        )
        .unwrap();
        let x = Pi01Spec::new("x", 5, vec![(2, 3), (2, 4), (4, 2)]).unwrap();
        let stages = select_stages(&m, &x, 4, 2).unwrap();
        assert_eq!(stages, vec![0, 2, 4]);
        let vals: Vec<Rat> = stages
            .iter()
            .map(|&s| m.omega_restricted_at(&x, s).unwrap())
            .collect();
        assert_eq!(vals, vec![Rat::new(3, 4), Rat::new(3, 8), Rat::new(1, 4)]);
    }

    #[test]
    fn select_stages_not_right_tail() {
        let m = StagedMachine::new("m", vec![entry("0", 1, 0), entry("10", 2, 3)]).unwrap();
        let x = Pi01Spec::full("x", 4);
        let err = select_stages(&m, &x, 10, 1).unwrap_err();
        assert!(matches!(
            err,
            DecanterError::NotRightTail { decreases_found: 0, required: 1 }
        ));
    }

    #[test]
    fn select_stages_hand_instance() {
        let (m, x) = hand_instance();
        let stages = select_stages(&m, &x, 6, 1).unwrap();
        assert_eq!(stages, vec![2, 4]);
        assert_eq!(m.omega_restricted_at(&x, 2).unwrap(), Rat::new(3, 4));
        assert_eq!(m.omega_restricted_at(&x, 4).unwrap(), Rat::new(3, 8));
    }

    #[test]
    fn hand_instance_run_matches_replay() {
        let (m, x) = hand_instance();
        let stages = select_stages(&m, &x, 6, 1).unwrap();
        let state = decanter_run(&m, &x, &stages).unwrap();

        assert_eq!(state.omega_values, vec![Rat::new(3, 4), Rat::new(3, 8)]);
        // initial: (1, 1/2) and (2, 1/4) at level 0
        assert_eq!(state.quanta[0].label, 1);
        assert_eq!(state.quanta[0].weight, Rat::new(1, 2));
        assert_eq!(state.quanta[1].label, 2);
        assert_eq!(state.quanta[1].weight, Rat::new(1, 4));
        // flow: (2, 1/8) at level 1 from the purged (1, 1/2)
        let flowed = &state.quanta[2];
        assert_eq!(flowed.label, 2);
        assert_eq!(flowed.weight, Rat::new(1, 8));
        assert_eq!(flowed.level, 1);
        assert_eq!(flowed.flows_from, Some(0));
        // remainder (1, 3/8) evicted
        assert_eq!(state.quanta[0].status, QuantumStatus::Evicted);
        assert_eq!(state.quanta[0].evicted_weight, Rat::new(3, 8));
        assert_eq!(state.quanta[0].consumed_weight, Rat::new(1, 8));
        // conservation summary
        let step = &state.steps[0];
        assert_eq!(step.weight_in, Rat::new(1, 8));
        assert_eq!(step.weight_out, Rat::new(1, 2));
        assert_eq!(step.omega_drop, Rat::new(3, 8));
    }

    #[test]
    fn no_removals_no_events() {
        let m = StagedMachine::new("m", vec![entry("0", 1, 0)]).unwrap();
        let x = Pi01Spec::full("x", 4);
        let state = decanter_run(&m, &x, &[0]).unwrap();
        assert_eq!(state.quanta.len(), 1);
        assert_eq!(state.steps.len(), 0);
        assert!(state
            .events
            .iter()
            .all(|e| matches!(e, DecanterEvent::Place { .. })));
    }

    #[test]
    fn split_across_two_purged_quanta() {
        // one parcel (3, 3/8) spans all of (1, 1/4) and part of (2, 1/4)
        let m = StagedMachine::new(
            "split",
            vec![
                entry("00", 1, 0),
                entry("01", 2, 0),
                entry("10", 3, 1),
                entry("110", 3, 1),
            ],
        )
        .unwrap();
        let x = Pi01Spec::new("split-x", 4, vec![(1, 1), (1, 2)]).unwrap();
        let stages = select_stages(&m, &x, 2, 1).unwrap();
        assert_eq!(stages, vec![0, 1]);
        let state = decanter_run(&m, &x, &stages).unwrap();

        // two placed quanta with label 3 at level 1
        let placed: Vec<&Quantum> = state
            .quanta
            .iter()
            .filter(|q| q.flows_from.is_some())
            .collect();
        assert_eq!(placed.len(), 2);
        assert_eq!(
            (placed[0].label, placed[0].weight.clone(), placed[0].level),
            (3, Rat::new(1, 4), 1)
        );
        assert_eq!(
            (placed[1].label, placed[1].weight.clone(), placed[1].level),
            (3, Rat::new(1, 8), 1)
        );
        // the flow-step bookkeeping left cursor on the second quantum
        // with 1/8 of it used
        let flow_step = state
            .events
            .iter()
            .find_map(|e| match e {
                DecanterEvent::FlowStep {
                    cursor_leaving,
                    used_leaving,
                    ..
                } => Some((*cursor_leaving, used_leaving.clone())),
                _ => None,
            })
            .unwrap();
        assert_eq!(flow_step, (1, Rat::new(1, 8)));
        // evicted remainder 1/8 of the second purged quantum
        let evicted: Vec<&Quantum> = state
            .quanta
            .iter()
            .filter(|q| q.evicted_weight.is_positive())
            .collect();
        assert_eq!(evicted.len(), 1);
        assert_eq!(evicted[0].label, 2);
        assert_eq!(evicted[0].evicted_weight, Rat::new(1, 8));
    }

    #[test]
    fn level_report_hand_instance() {
        let (m, x) = hand_instance();
        let stages = select_stages(&m, &x, 6, 1).unwrap();
        let state = decanter_run(&m, &x, &stages).unwrap();
        let report = level_report(&state).unwrap();
        assert_eq!(report.levels.len(), 2);
        assert_eq!(report.levels[0].throughput, Rat::new(3, 4));
        assert_eq!(report.levels[0].bound, Rat::one());
        assert_eq!(report.levels[1].throughput, Rat::new(1, 8));
        assert_eq!(report.levels[1].bound, Rat::new(1, 2));
    }

    #[test]
    fn full_measure_machine_rejected() {
        let m = StagedMachine::new("full", vec![entry("", 0, 0)]).unwrap();
        let x = Pi01Spec::full("x", 4);
        assert!(matches!(
            decanter_run(&m, &x, &[0]),
            Err(DecanterError::DomainMeasureNotSubUnit { .. })
        ));
    }

    #[test]
    fn ml_test_index_zero_never_injured() {
        let (m, x) = hand_instance();
        let stages = select_stages(&m, &x, 6, 1).unwrap();
        let state = decanter_run(&m, &x, &stages).unwrap();
        let trace = build_ml_test(&state, 0);
        assert!(trace.injuries.is_empty());
        assert_eq!(trace.cycles.len(), 1);
        assert_eq!(trace.cycles[0].delta, Rat::new(1, 4));
        assert_eq!(trace.cycles[0].intervals.len(), 2);
        let audit = audit_ml_test(&trace, &state);
        assert!(audit.pass);
        assert_eq!(audit.final_omega_captured, Some(true));
    }

    #[test]
    fn ml_test_injury_at_eviction_below_index() {
        let (m, x) = hand_instance();
        let stages = select_stages(&m, &x, 6, 1).unwrap();
        let state = decanter_run(&m, &x, &stages).unwrap();
        // the eviction at stage 4 sits at level 0 < 1: U_1 is injured
        let trace = build_ml_test(&state, 1);
        assert_eq!(trace.injuries, vec![4]);
        assert_eq!(trace.cycles.len(), 2);
        assert_eq!(trace.cycles[0].delta, Rat::new(1, 8));
        assert_eq!(trace.cycles[0].intervals.len(), 1);
        assert_eq!(trace.cycles[0].intervals[0].stage, 2);
        assert_eq!(trace.cycles[1].delta, Rat::new(1, 16));
        assert!(trace.cycles[1].intervals.is_empty());
        let audit = audit_ml_test(&trace, &state);
        assert!(audit.delta_schedule_ok);
        assert!(audit.injuries_match_evictions);
        // final cycle is empty: nothing to contain omega yet, so the
        // capture check does not apply
        assert_eq!(audit.final_omega_captured, None);
        assert!(audit.pass);
    }

    #[test]
    fn v_transform_is_an_index_map() {
        assert_eq!(v_test_index(0), 2);
        assert_eq!(v_test_index(3), 16);
    }
}
