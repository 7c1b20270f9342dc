//! Tail-ratio estimation of the left/right transition constant and the
//! two extraction recipes that certify a scaled difference of
//! increasing streams as left-c.e. or right-c.e. at a finite horizon.

use std::fmt;

use serde::Serialize;

use crate::rational::Rat;
use crate::stream::{tail_classify, ApproxStream, Stage, StreamError, StreamKind, TailReport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransitionError {
    /// Extraction scalars must exceed 1 (left) or be positive (scaling).
    InvalidScalar { q: Rat, needs: &'static str },
    /// The recipes only apply to increasing approximations.
    NotIncreasing { stream: String },
    /// A reference tail hit zero or went negative within the horizon.
    TailNotPositive { stream: String, stage: Stage, tail: Rat },
    /// No qualifying stage beyond the start exists within the horizon.
    NoProgress,
    Stream(StreamError),
}

impl fmt::Display for TransitionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionError::InvalidScalar { q, needs } => {
                write!(f, "INVALID_SCALAR: q={q}, needs {needs}")
            }
            TransitionError::NotIncreasing { stream } => {
                write!(f, "NOT_INCREASING: stream {stream}")
            }
            TransitionError::TailNotPositive { stream, stage, tail } => {
                write!(
                    f,
                    "TAIL_NOT_POSITIVE: stream {stream} has tail {tail} at stage {stage}"
                )
            }
            TransitionError::NoProgress => write!(f, "NO_PROGRESS"),
            TransitionError::Stream(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TransitionError {}

impl From<StreamError> for TransitionError {
    fn from(e: StreamError) -> Self {
        TransitionError::Stream(e)
    }
}

fn require_increasing(stream: &ApproxStream) -> Result<(), TransitionError> {
    if stream.kind() == StreamKind::Increasing {
        Ok(())
    } else {
        Err(TransitionError::NotIncreasing {
            stream: stream.name().to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// Ratio sequences
// ---------------------------------------------------------------------------

/// Per-stage tail ratios `(limit_a - a(s)) / (limit_b - b(s))` with a
/// final-window summary. The point estimate is the exact mean over the
/// final window; the spread is max minus min over the same window.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionEstimate {
    pub ratios: Vec<(Stage, Rat)>,
    pub point_estimate: Rat,
    pub window_spread: Rat,
    pub settle_window: u64,
}

pub fn ratio_sequence(
    a: &ApproxStream,
    b: &ApproxStream,
    limit_a: &Rat,
    limit_b: &Rat,
    horizon: Stage,
    settle_window: u64,
) -> Result<TransitionEstimate, TransitionError> {
    assert!(settle_window >= 1 && horizon >= settle_window);
    require_increasing(a)?;
    require_increasing(b)?;
    let mut ratios = Vec::with_capacity(horizon as usize + 1);
    for s in 0..=horizon {
        let tail_a = limit_a - &a.value_at(s)?;
        let tail_b = limit_b - &b.value_at(s)?;
        for (tail, stream) in [(&tail_a, a), (&tail_b, b)] {
            if !tail.is_positive() {
                return Err(TransitionError::TailNotPositive {
                    stream: stream.name().to_string(),
                    stage: s,
                    tail: (*tail).clone(),
                });
            }
        }
        ratios.push((s, tail_a / tail_b));
    }
    let window = &ratios[ratios.len() - settle_window as usize..];
    let mut sum = Rat::zero();
    let mut min = window[0].1.clone();
    let mut max = window[0].1.clone();
    for (_, r) in window {
        sum += r;
        if *r < min {
            min = r.clone();
        }
        if *r > max {
            max = r.clone();
        }
    }
    let point_estimate = sum / Rat::from_int(settle_window as i64);
    Ok(TransitionEstimate {
        ratios,
        point_estimate,
        window_spread: max - min,
        settle_window,
    })
}

// ---------------------------------------------------------------------------
// Extractions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    LeftCe,
    RightCe,
}

/// A chain of selected stages with the values extracted at them;
/// left-c.e. chains are strictly increasing, right-c.e. strictly
/// decreasing.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionResult {
    pub selected_stages: Vec<Stage>,
    pub extracted_values: Vec<Rat>,
    pub direction: Direction,
}

/// Outcome of an extraction: either a chain, or the exact-equality
/// short circuit (a stage where the scaled tails coincide, making the
/// scaled difference rational on the spot).
#[derive(Debug, Clone, Serialize)]
pub enum ExtractionOutcome {
    Chain(ExtractionResult),
    RationalCollapse { stage: Stage, value: Rat },
}

fn collapse_scan(
    scale_a: &Rat,
    a: &ApproxStream,
    b: &ApproxStream,
    start: Stage,
    horizon: Stage,
) -> Result<Option<Stage>, TransitionError> {
    let (limit_a, limit_b) = match (a.declared_limit(), b.declared_limit()) {
        (Some(la), Some(lb)) => (la.clone(), lb.clone()),
        _ => return Ok(None),
    };
    for s in start..=horizon {
        let lhs = scale_a * &(&limit_a - &a.value_at(s)?);
        let rhs = &limit_b - &b.value_at(s)?;
        if lhs == rhs {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Left-c.e. extraction: starting at `start`, greedily selects the
/// least `s' <= horizon` with `p*(a(s') - a(s)) > b(s') - b(s)` and
/// emits `p*a(s') - b(s')`; the emitted chain is strictly increasing.
/// When both streams declare exact limits, the equality
/// `p*(limit_a - a(s)) = limit_b - b(s)` is checked first and reported
/// as a rational collapse.
pub fn left_ce_extract(
    p: &Rat,
    a: &ApproxStream,
    b: &ApproxStream,
    start: Stage,
    horizon: Stage,
) -> Result<ExtractionOutcome, TransitionError> {
    if *p <= Rat::one() {
        return Err(TransitionError::InvalidScalar { q: p.clone(), needs: "> 1" });
    }
    require_increasing(a)?;
    require_increasing(b)?;
    if let Some(stage) = collapse_scan(p, a, b, start, horizon)? {
        let value = p * a.declared_limit().expect("limits checked")
            - b.declared_limit().expect("limits checked");
        return Ok(ExtractionOutcome::RationalCollapse { stage, value });
    }
    let emit = |s: Stage| -> Result<Rat, TransitionError> {
        Ok(p * &a.value_at(s)? - b.value_at(s)?)
    };
    let qualifies = |s: Stage, sp: Stage| -> Result<bool, TransitionError> {
        Ok(p * &a.delta(s, sp)? > b.delta(s, sp)?)
    };
    extract_chain(start, horizon, Direction::LeftCe, emit, qualifies)
}

/// Right-c.e. extraction: dual recipe, selecting stages with
/// `a(s') - a(s) < b(s') - b(s)` and emitting `a(s') - b(s')`; the
/// chain is strictly decreasing.
pub fn right_ce_extract(
    a: &ApproxStream,
    b: &ApproxStream,
    start: Stage,
    horizon: Stage,
) -> Result<ExtractionOutcome, TransitionError> {
    require_increasing(a)?;
    require_increasing(b)?;
    if let Some(stage) = collapse_scan(&Rat::one(), a, b, start, horizon)? {
        let value = a.declared_limit().expect("limits checked")
            - b.declared_limit().expect("limits checked");
        return Ok(ExtractionOutcome::RationalCollapse { stage, value });
    }
    let emit = |s: Stage| -> Result<Rat, TransitionError> {
        Ok(a.value_at(s)? - b.value_at(s)?)
    };
    let qualifies = |s: Stage, sp: Stage| -> Result<bool, TransitionError> {
        Ok(a.delta(s, sp)? < b.delta(s, sp)?)
    };
    extract_chain(start, horizon, Direction::RightCe, emit, qualifies)
}

fn extract_chain(
    start: Stage,
    horizon: Stage,
    direction: Direction,
    emit: impl Fn(Stage) -> Result<Rat, TransitionError>,
    qualifies: impl Fn(Stage, Stage) -> Result<bool, TransitionError>,
) -> Result<ExtractionOutcome, TransitionError> {
    let mut selected_stages = vec![start];
    let mut extracted_values = vec![emit(start)?];
    let mut current = start;
    loop {
        let mut next = None;
        for sp in current + 1..=horizon {
            if qualifies(current, sp)? {
                next = Some(sp);
                break;
            }
        }
        match next {
            Some(sp) => {
                selected_stages.push(sp);
                extracted_values.push(emit(sp)?);
                current = sp;
            }
            None => break,
        }
    }
    if selected_stages.len() == 1 {
        return Err(TransitionError::NoProgress);
    }
    Ok(ExtractionOutcome::Chain(ExtractionResult {
        selected_stages,
        extracted_values,
        direction,
    }))
}

// ---------------------------------------------------------------------------
// Case diagnostic
// ---------------------------------------------------------------------------

/// Which extraction recipe a pair calls for, read off the tails of the
/// two difference streams against their exact limits. Kept separate
/// from the extractors so each branch stays independently testable.
#[derive(Debug, Clone, Serialize)]
pub struct CaseDiagnostic {
    /// Tail of `p*a - b` against its limit; `LeftTail` marks the
    /// left-c.e. recipe applicable.
    pub scaled_difference: TailReport,
    /// Tail of `a - b` against its limit; `RightTail` marks the
    /// right-c.e. recipe applicable.
    pub unit_difference: TailReport,
    pub suggested: Option<Direction>,
}

pub fn diagnose_case(
    p: &Rat,
    a: &ApproxStream,
    b: &ApproxStream,
    limit_a: &Rat,
    limit_b: &Rat,
    settle_window: u64,
    horizon: Stage,
) -> Result<CaseDiagnostic, TransitionError> {
    if *p <= Rat::one() {
        return Err(TransitionError::InvalidScalar { q: p.clone(), needs: "> 1" });
    }
    let scaled = ApproxStream::scale_subtract(p, a, b)?;
    let unit = ApproxStream::scale_subtract(&Rat::one(), a, b)?;
    let scaled_ref = p * limit_a - limit_b;
    let unit_ref = limit_a - limit_b;
    let scaled_report = tail_classify(&scaled, &scaled_ref, settle_window, horizon)?;
    let unit_report = tail_classify(&unit, &unit_ref, settle_window, horizon)?;
    let suggested = match (scaled_report.classification, unit_report.classification) {
        (crate::stream::TailClass::LeftTail, _) => Some(Direction::LeftCe),
        (_, crate::stream::TailClass::RightTail) => Some(Direction::RightCe),
        _ => None,
    };
    Ok(CaseDiagnostic {
        scaled_difference: scaled_report,
        unit_difference: unit_report,
        suggested,
    })
}

// ---------------------------------------------------------------------------
// Linearity report
// ---------------------------------------------------------------------------

/// Exact per-stage residuals for the additivity, scaling and
/// reciprocal identities of tail ratios, plus the final-window
/// estimates they compare.
#[derive(Debug, Clone, Serialize)]
pub struct LinearityReport {
    pub rows: Vec<LinearityRow>,
    pub estimate_sum_vs_parts: (Rat, Rat),
    pub estimate_scaled_vs_q_times: (Rat, Rat),
    pub estimate_reciprocal_product: Rat,
    pub all_residuals_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearityRow {
    pub stage: Stage,
    pub residual_additivity: Rat,
    pub residual_scale_left: Rat,
    pub residual_scale_right: Rat,
    pub residual_reciprocal: Rat,
}

#[allow(clippy::too_many_arguments)]
pub fn linearity_check(
    a: &ApproxStream,
    b: &ApproxStream,
    c: &ApproxStream,
    limit_a: &Rat,
    limit_b: &Rat,
    limit_c: &Rat,
    q: &Rat,
    horizon: Stage,
    settle_window: u64,
) -> Result<LinearityReport, TransitionError> {
    if !q.is_positive() {
        return Err(TransitionError::InvalidScalar { q: q.clone(), needs: "> 0" });
    }
    let a_plus_b = ApproxStream::add(a, b);
    let qa = ApproxStream::scale(q, a)?;
    let qb = ApproxStream::scale(q, b)?;
    let limit_ab = limit_a + limit_b;
    let limit_qa = q * limit_a;
    let limit_qb = q * limit_b;

    let r_ab_c = ratio_sequence(&a_plus_b, c, &limit_ab, limit_c, horizon, settle_window)?;
    let r_a_c = ratio_sequence(a, c, limit_a, limit_c, horizon, settle_window)?;
    let r_b_c = ratio_sequence(b, c, limit_b, limit_c, horizon, settle_window)?;
    let r_qa_b = ratio_sequence(&qa, b, &limit_qa, limit_b, horizon, settle_window)?;
    let r_a_qb = ratio_sequence(a, &qb, limit_a, &limit_qb, horizon, settle_window)?;
    let r_a_b = ratio_sequence(a, b, limit_a, limit_b, horizon, settle_window)?;
    let r_b_a = ratio_sequence(b, a, limit_b, limit_a, horizon, settle_window)?;

    let mut rows = Vec::with_capacity(horizon as usize + 1);
    let mut all_zero = true;
    for s in 0..=horizon as usize {
        let stage = s as Stage;
        let residual_additivity =
            &r_ab_c.ratios[s].1 - &(&r_a_c.ratios[s].1 + &r_b_c.ratios[s].1);
        let residual_scale_left = &r_qa_b.ratios[s].1 - &(q * &r_a_b.ratios[s].1);
        let residual_scale_right = &r_a_qb.ratios[s].1 - &(&r_a_b.ratios[s].1 / q);
        let residual_reciprocal = &r_a_b.ratios[s].1 * &r_b_a.ratios[s].1 - Rat::one();
        all_zero = all_zero
            && residual_additivity.is_zero()
            && residual_scale_left.is_zero()
            && residual_scale_right.is_zero()
            && residual_reciprocal.is_zero();
        rows.push(LinearityRow {
            stage,
            residual_additivity,
            residual_scale_left,
            residual_scale_right,
            residual_reciprocal,
        });
    }
    Ok(LinearityReport {
        rows,
        estimate_sum_vs_parts: (
            r_ab_c.point_estimate.clone(),
            &r_a_c.point_estimate + &r_b_c.point_estimate,
        ),
        estimate_scaled_vs_q_times: (
            r_qa_b.point_estimate.clone(),
            q * &r_a_b.point_estimate,
        ),
        estimate_reciprocal_product: &r_a_b.point_estimate * &r_b_a.point_estimate,
        all_residuals_zero: all_zero,
    })
}

// ---------------------------------------------------------------------------
// Critical stages for the test constructions
// ---------------------------------------------------------------------------

/// Which quantified tail condition to search for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StarMode {
    /// For all `s' > s` up to the horizon: `p*(a(s')-a(s)) < b(s')-b(s)`.
    Star1,
    /// For all `s' > s` up to the horizon: `b(s')-b(s) < a(s')-a(s)`.
    Star2,
}

/// Least `s` in `[from, horizon)` whose quantified condition holds for
/// every `s'` in `(s, horizon]`. Candidates stop short of the horizon
/// so the quantifier is never vacuous. `p` is only consulted for
/// `Star1`.
pub fn find_critical_stage(
    a: &ApproxStream,
    b: &ApproxStream,
    p: &Rat,
    mode: StarMode,
    from: Stage,
    horizon: Stage,
) -> Result<Option<Stage>, TransitionError> {
    if mode == StarMode::Star1 && *p <= Rat::one() {
        return Err(TransitionError::InvalidScalar { q: p.clone(), needs: "> 1" });
    }
    require_increasing(a)?;
    require_increasing(b)?;
    'candidates: for s in from..horizon {
        for sp in s + 1..=horizon {
            let da = a.delta(s, sp)?;
            let db = b.delta(s, sp)?;
            let holds = match mode {
                StarMode::Star1 => p * &da < db,
                StarMode::Star2 => db < da,
            };
            if !holds {
                continue 'candidates;
            }
        }
        return Ok(Some(s));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo2() -> ApproxStream {
        ApproxStream::geometric(2)
    }

    fn geo4() -> ApproxStream {
        ApproxStream::geometric(4)
    }

    /// limit stripped, for exercising the chain path of a pair that
    /// would otherwise collapse
    fn no_limit(s: &ApproxStream) -> ApproxStream {
        s.with_limit(None)
    }

    #[test]
    fn ratio_constant_two() {
        let b = ApproxStream::from_fn("half-geo", StreamKind::Increasing, Some(Rat::one()), |s| {
            Rat::one() - Rat::pow2(-(s as i64) - 1)
        });
        let est = ratio_sequence(&geo2(), &b, &Rat::one(), &Rat::one(), 30, 8).unwrap();
        for (_, r) in &est.ratios {
            assert_eq!(*r, Rat::from_int(2));
        }
        assert_eq!(est.point_estimate, Rat::from_int(2));
        assert_eq!(est.window_spread, Rat::zero());
    }

    #[test]
    fn ratio_identity_pair() {
        let est = ratio_sequence(&geo2(), &geo2(), &Rat::one(), &Rat::one(), 20, 8).unwrap();
        assert_eq!(est.point_estimate, Rat::one());
        assert_eq!(est.window_spread, Rat::zero());
    }

    #[test]
    fn ratio_engineered_third() {
        // b = 3*a + gamma with gamma_s = 1 - 8^{-s}; limits 1 and 4
        let a = geo2();
        let gamma = ApproxStream::from_fn("geo8", StreamKind::Increasing, Some(Rat::one()), |s| {
            Rat::one() - Rat::from_big(1.into(), num_bigint::BigInt::from(8).pow(s as u32))
        });
        let b = ApproxStream::add(&ApproxStream::scale(&Rat::from_int(3), &a).unwrap(), &gamma);
        let est = ratio_sequence(&a, &b, &Rat::one(), &Rat::from_int(4), 30, 8).unwrap();
        // closed-form oracle for each stage: 2^{-s} / (3*2^{-s} + 8^{-s})
        for (s, r) in &est.ratios {
            let t2 = Rat::pow2(-(*s as i64));
            let t8 = Rat::from_big(1.into(), num_bigint::BigInt::from(8).pow(*s as u32));
            let denom = Rat::from_int(3) * t2.clone() + t8;
            assert_eq!(*r, &t2 / &denom);
        }
        let err = (est.point_estimate - Rat::new(1, 3)).abs();
        assert!(err < Rat::pow2(-20), "estimate off by {err}");
    }

    #[test]
    fn ratio_detects_dead_tail() {
        let a = ApproxStream::constant(Rat::one());
        assert!(matches!(
            ratio_sequence(&a, &geo2(), &Rat::one(), &Rat::one(), 10, 4),
            Err(TransitionError::TailNotPositive { .. })
        ));
    }

    #[test]
    fn left_extract_identity_pair() {
        let out = left_ce_extract(&Rat::from_int(2), &geo2(), &geo2(), 0, 12).unwrap();
        let chain = match out {
            ExtractionOutcome::Chain(c) => c,
            other => panic!("expected chain, got {other:?}"),
        };
        assert_eq!(chain.direction, Direction::LeftCe);
        assert_eq!(chain.selected_stages, (0..=12).collect::<Vec<_>>());
        for (i, v) in chain.extracted_values.iter().enumerate() {
            assert_eq!(*v, Rat::one() - Rat::pow2(-(i as i64)));
        }
    }

    #[test]
    fn left_extract_maximal_chain_frozen_by_oracle() {
        // limits stripped so the chain path runs; the exhaustive-scan
        // oracle below fixes the chain [0, 1, 2], values [0, 1, 9/8]
        let a = no_limit(&geo4());
        let b = no_limit(&geo2());
        let out = left_ce_extract(&Rat::from_int(2), &a, &b, 0, 20).unwrap();
        let chain = match out {
            ExtractionOutcome::Chain(c) => c,
            other => panic!("expected chain, got {other:?}"),
        };
        assert_eq!(chain.selected_stages, vec![0, 1, 2]);
        assert_eq!(
            chain.extracted_values,
            vec![Rat::zero(), Rat::one(), Rat::new(9, 8)]
        );
        for w in chain.extracted_values.windows(2) {
            assert!(w[0] < w[1]);
        }
        // oracle: re-derive greedily from raw values
        let p = Rat::from_int(2);
        let mut stages = vec![0u64];
        let mut s = 0u64;
        while let Some(sp) = (s + 1..=20).find(|&sp| {
            &p * &(geo4().value_at(sp).unwrap() - geo4().value_at(s).unwrap())
                > geo2().value_at(sp).unwrap() - geo2().value_at(s).unwrap()
        }) {
            stages.push(sp);
            s = sp;
        }
        assert_eq!(chain.selected_stages, stages);
    }

    #[test]
    fn left_extract_rational_collapse_with_limits() {
        // with declared limits the same pair collapses: at stage 1,
        // 2*(1 - geo4(1)) = 1/2 = 1 - geo2(1)
        let out = left_ce_extract(&Rat::from_int(2), &geo4(), &geo2(), 0, 20).unwrap();
        match out {
            ExtractionOutcome::RationalCollapse { stage, value } => {
                assert_eq!(stage, 1);
                assert_eq!(value, Rat::one());
            }
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn left_extract_no_progress() {
        let zero = ApproxStream::constant(Rat::zero()).with_limit(None);
        let out = left_ce_extract(&Rat::from_int(2), &zero, &geo2().with_limit(None), 0, 20);
        assert!(matches!(out, Err(TransitionError::NoProgress)));
    }

    #[test]
    fn right_extract_geo_pair() {
        let out = right_ce_extract(&geo4(), &geo2(), 1, 20).unwrap();
        let chain = match out {
            ExtractionOutcome::Chain(c) => c,
            other => panic!("expected chain, got {other:?}"),
        };
        assert_eq!(chain.direction, Direction::RightCe);
        assert_eq!(chain.selected_stages[..4], [1, 2, 3, 4]);
        assert_eq!(
            chain.extracted_values[..3],
            [Rat::new(1, 4), Rat::new(3, 16), Rat::new(7, 64)]
        );
        for w in chain.extracted_values.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn right_extract_equal_streams_no_progress() {
        // increments are never strictly smaller; strip limits so the
        // limit-equality collapse does not fire first
        let a = no_limit(&geo2());
        let out = right_ce_extract(&a, &a, 0, 15);
        assert!(matches!(out, Err(TransitionError::NoProgress)));
    }

    #[test]
    fn right_extract_scaled_pair() {
        let b = ApproxStream::scale(&Rat::from_int(2), &geo2()).unwrap();
        let out = right_ce_extract(&geo2(), &b, 0, 15).unwrap();
        let chain = match out {
            ExtractionOutcome::Chain(c) => c,
            other => panic!("expected chain, got {other:?}"),
        };
        for (i, v) in chain.extracted_values.iter().enumerate() {
            assert_eq!(*v, -(Rat::one() - Rat::pow2(-(i as i64))));
        }
    }

    #[test]
    fn linearity_exact_identities() {
        let a = geo2();
        let rep = linearity_check(
            &a,
            &a,
            &a,
            &Rat::one(),
            &Rat::one(),
            &Rat::one(),
            &Rat::from_int(3),
            20,
            8,
        )
        .unwrap();
        assert!(rep.all_residuals_zero);
        assert_eq!(rep.estimate_sum_vs_parts.0, Rat::from_int(2));
        assert_eq!(rep.estimate_sum_vs_parts.1, Rat::from_int(2));
        assert_eq!(rep.estimate_scaled_vs_q_times.0, Rat::from_int(3));
        assert_eq!(rep.estimate_reciprocal_product, Rat::one());
    }

    #[test]
    fn linearity_reciprocal_pair() {
        let a = geo2();
        let b = ApproxStream::from_fn("half-geo", StreamKind::Increasing, Some(Rat::one()), |s| {
            Rat::one() - Rat::pow2(-(s as i64) - 1)
        });
        let rep = linearity_check(
            &a,
            &b,
            &a,
            &Rat::one(),
            &Rat::one(),
            &Rat::one(),
            &Rat::new(1, 2),
            20,
            8,
        )
        .unwrap();
        assert!(rep.all_residuals_zero);
        assert_eq!(rep.estimate_reciprocal_product, Rat::one());
    }

    #[test]
    fn critical_stage_frozen_by_oracle() {
        // exhaustive check of all (s, s') pairs to horizon 40:
        // s=0 and s=1 fail at s'=s+1, s=2 already passes every s'
        let got = find_critical_stage(&geo4(), &geo2(), &Rat::from_int(2), StarMode::Star1, 0, 40)
            .unwrap();
        assert_eq!(got, Some(2));
        // independent exhaustive oracle over the same exact values
        let brute = (0..40u64).find(|&s| {
            (s + 1..=40).all(|sp| {
                Rat::from_int(2) * geo4().delta(s, sp).unwrap() < geo2().delta(s, sp).unwrap()
            })
        });
        assert_eq!(got, brute);
    }

    #[test]
    fn critical_stage_star2() {
        let got = find_critical_stage(&geo2(), &geo4(), &Rat::from_int(2), StarMode::Star2, 0, 40)
            .unwrap();
        assert_eq!(got, Some(1));
    }

    #[test]
    fn critical_stage_absent() {
        let got = find_critical_stage(&geo2(), &geo2(), &Rat::from_int(2), StarMode::Star1, 0, 40)
            .unwrap();
        assert_eq!(got, None);
    }

    #[test]
    fn diagnose_cases() {
        // a - b eventually above its limit: right recipe
        let d = diagnose_case(
            &Rat::from_int(2),
            &geo4(),
            &geo2(),
            &Rat::one(),
            &Rat::one(),
            4,
            30,
        )
        .unwrap();
        assert_eq!(d.suggested, Some(Direction::RightCe));
        // p*a - b below its limit where b's tail shrinks faster
        let d = diagnose_case(
            &Rat::from_int(2),
            &geo2(),
            &geo4(),
            &Rat::one(),
            &Rat::one(),
            4,
            30,
        )
        .unwrap();
        assert_eq!(d.suggested, Some(Direction::LeftCe));
    }
}
