//! Approximation streams: total maps `stage -> Rat` with monotonicity
//! metadata, memoized so that raising a horizon never recomputes a
//! prefix. Streams are immutable and cheaply clonable (shared state
//! behind an `Arc`); the memo table is internally synchronized so one
//! stream may serve parallel runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::rational::Rat;

pub type Stage = u64;

/// Declared monotonicity of a stream. `Increasing`/`Decreasing` are
/// non-strict and are enforced lazily: every evaluation is compared
/// against the highest stage queried so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StreamKind {
    Increasing,
    Decreasing,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamError {
    /// A declared-monotone stream produced values out of order.
    MonotonicityViolation {
        kind: StreamKind,
        stage_a: Stage,
        value_a: Rat,
        stage_b: Stage,
        value_b: Rat,
    },
    /// `delta` was asked for a reversed stage range.
    InvalidRange { s0: Stage, s1: Stage },
    /// `scale_subtract` (and friends) require a positive scalar.
    NonpositiveScalar { q: Rat },
}

impl fmt::Display for StreamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamError::MonotonicityViolation {
                kind,
                stage_a,
                value_a,
                stage_b,
                value_b,
            } => write!(
                f,
                "MONOTONICITY_VIOLATION: {kind:?} stream has value {value_a} at stage {stage_a} \
                 but {value_b} at stage {stage_b}"
            ),
            StreamError::InvalidRange { s0, s1 } => {
                write!(f, "INVALID_RANGE: s0={s0} > s1={s1}")
            }
            StreamError::NonpositiveScalar { q } => {
                write!(f, "NONPOSITIVE_SCALAR: q={q}")
            }
        }
    }
}

impl std::error::Error for StreamError {}

struct Inner {
    name: String,
    kind: StreamKind,
    declared_limit: Option<Rat>,
    eval: Box<dyn Fn(Stage) -> Rat + Send + Sync>,
    // memo table plus the monotonicity watermark (highest stage checked)
    state: Mutex<MemoState>,
}

#[derive(Default)]
struct MemoState {
    cache: BTreeMap<Stage, Rat>,
    watermark: Option<(Stage, Rat)>,
}

/// A computable approximation `(alpha_s)` over exact rationals.
#[derive(Clone)]
pub struct ApproxStream {
    inner: Arc<Inner>,
}

impl fmt::Debug for ApproxStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ApproxStream({}, {:?})", self.inner.name, self.inner.kind)
    }
}

impl ApproxStream {
    pub fn from_fn<F>(name: &str, kind: StreamKind, declared_limit: Option<Rat>, eval: F) -> Self
    where
        F: Fn(Stage) -> Rat + Send + Sync + 'static,
    {
        ApproxStream {
            inner: Arc::new(Inner {
                name: name.to_string(),
                kind,
                declared_limit,
                eval: Box::new(eval),
                state: Mutex::new(MemoState::default()),
            }),
        }
    }

    /// `alpha_s = 1 - base^{-s}`, increasing to limit 1.
    pub fn geometric(base: u32) -> Self {
        assert!(base >= 2, "geometric base must be >= 2");
        let name = format!("geo:{base}");
        ApproxStream::from_fn(&name, StreamKind::Increasing, Some(Rat::one()), move |s| {
            let pow = num_bigint::BigInt::from(base).pow(u32::try_from(s).expect("stage too large"));
            Rat::one() - Rat::from_big(num_bigint::BigInt::from(1), pow)
        })
    }

    /// Constant stream; trivially increasing with itself as limit.
    pub fn constant(value: Rat) -> Self {
        let name = format!("const:{value}");
        let limit = value.clone();
        ApproxStream::from_fn(&name, StreamKind::Increasing, Some(limit), move |_| value.clone())
    }

    /// Step function through explicit `(stage, value)` points; the value
    /// at `s` is the entry with the greatest stage `<= s`, and the last
    /// entry extends to every later stage (tables must start at stage 0
    /// so the map is total).
    pub fn from_table(
        name: &str,
        kind: StreamKind,
        declared_limit: Option<Rat>,
        points: Vec<(Stage, Rat)>,
    ) -> Self {
        assert!(!points.is_empty(), "table stream needs at least one point");
        let table: BTreeMap<Stage, Rat> = points.into_iter().collect();
        assert!(
            table.contains_key(&0),
            "table stream must define stage 0"
        );
        ApproxStream::from_fn(name, kind, declared_limit, move |s| {
            table
                .range(..=s)
                .next_back()
                .map(|(_, v)| v.clone())
                .expect("stage 0 present")
        })
    }

    /// Same values viewed under a different kind declaration (used when
    /// a table stream is known to be monotone; the lazy check still
    /// polices the claim).
    pub fn with_kind(&self, kind: StreamKind) -> Self {
        let base = self.clone();
        ApproxStream::from_fn(
            &self.inner.name,
            kind,
            self.inner.declared_limit.clone(),
            move |s| base.value_unchecked(s),
        )
    }

    pub fn with_limit(&self, declared_limit: Option<Rat>) -> Self {
        let base = self.clone();
        ApproxStream::from_fn(&self.inner.name, self.inner.kind, declared_limit, move |s| {
            base.value_unchecked(s)
        })
    }

    /// The suffix stream `s -> self(offset + s)`; kind and limit carry over.
    pub fn shift(&self, offset: Stage) -> Self {
        let base = self.clone();
        let name = format!("{}[{}..]", self.inner.name, offset);
        ApproxStream::from_fn(
            &name,
            self.inner.kind,
            self.inner.declared_limit.clone(),
            move |s| base.value_unchecked(offset + s),
        )
    }

    /// `s -> q*a(s) - b(s)`, the difference form of a d.c.e.
    /// approximation. The result is declared `General`: nothing is
    /// assumed about which side dominates.
    pub fn scale_subtract(q: &Rat, a: &ApproxStream, b: &ApproxStream) -> Result<Self, StreamError> {
        if !q.is_positive() {
            return Err(StreamError::NonpositiveScalar { q: q.clone() });
        }
        let name = format!("{}*{} - {}", q, a.inner.name, b.inner.name);
        let limit = match (a.declared_limit(), b.declared_limit()) {
            (Some(la), Some(lb)) => Some(q * la - lb),
            _ => None,
        };
        let (qq, aa, bb) = (q.clone(), a.clone(), b.clone());
        Ok(ApproxStream::from_fn(
            &name,
            StreamKind::General,
            limit,
            move |s| &qq * &aa.value_unchecked(s) - bb.value_unchecked(s),
        ))
    }

    /// Pointwise sum; increasing if both are, limit known if both are.
    pub fn add(a: &ApproxStream, b: &ApproxStream) -> Self {
        let kind = if a.kind() == StreamKind::Increasing && b.kind() == StreamKind::Increasing {
            StreamKind::Increasing
        } else {
            StreamKind::General
        };
        let limit = match (a.declared_limit(), b.declared_limit()) {
            (Some(la), Some(lb)) => Some(la + lb),
            _ => None,
        };
        let name = format!("{} + {}", a.inner.name, b.inner.name);
        let (aa, bb) = (a.clone(), b.clone());
        ApproxStream::from_fn(&name, kind, limit, move |s| {
            aa.value_unchecked(s) + bb.value_unchecked(s)
        })
    }

    /// Pointwise positive scaling; preserves kind.
    pub fn scale(q: &Rat, a: &ApproxStream) -> Result<Self, StreamError> {
        if !q.is_positive() {
            return Err(StreamError::NonpositiveScalar { q: q.clone() });
        }
        let name = format!("{}*{}", q, a.inner.name);
        let limit = a.declared_limit().map(|l| q * l);
        let (qq, aa) = (q.clone(), a.clone());
        Ok(ApproxStream::from_fn(&name, a.kind(), limit, move |s| {
            &qq * &aa.value_unchecked(s)
        }))
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn kind(&self) -> StreamKind {
        self.inner.kind
    }

    pub fn declared_limit(&self) -> Option<&Rat> {
        self.inner.declared_limit.as_ref()
    }

    fn value_unchecked(&self, s: Stage) -> Rat {
        let mut state = self.inner.state.lock().unwrap();
        if let Some(v) = state.cache.get(&s) {
            return v.clone();
        }
        let v = (self.inner.eval)(s);
        state.cache.insert(s, v.clone());
        v
    }

    /// Value at stage `s`, enforcing the declared kind against the
    /// highest stage queried so far.
    pub fn value_at(&self, s: Stage) -> Result<Rat, StreamError> {
        let mut state = self.inner.state.lock().unwrap();
        let v = match state.cache.get(&s) {
            Some(v) => v.clone(),
            None => {
                let v = (self.inner.eval)(s);
                state.cache.insert(s, v.clone());
                v
            }
        };
        let violation = |lo_s: Stage, lo_v: &Rat, hi_s: Stage, hi_v: &Rat| {
            let bad = match self.inner.kind {
                StreamKind::Increasing => lo_v > hi_v,
                StreamKind::Decreasing => lo_v < hi_v,
                StreamKind::General => false,
            };
            bad.then(|| StreamError::MonotonicityViolation {
                kind: self.inner.kind,
                stage_a: lo_s,
                value_a: lo_v.clone(),
                stage_b: hi_s,
                value_b: hi_v.clone(),
            })
        };
        match &state.watermark {
            Some((ws, wv)) => {
                let err = if s >= *ws {
                    violation(*ws, wv, s, &v)
                } else {
                    violation(s, &v, *ws, wv)
                };
                if let Some(e) = err {
                    return Err(e);
                }
                if s > *ws {
                    state.watermark = Some((s, v.clone()));
                }
            }
            None => state.watermark = Some((s, v.clone())),
        }
        Ok(v)
    }

    /// Increment `values(s1) - values(s0)`.
    pub fn delta(&self, s0: Stage, s1: Stage) -> Result<Rat, StreamError> {
        if s0 > s1 {
            return Err(StreamError::InvalidRange { s0, s1 });
        }
        let v0 = self.value_at(s0)?;
        let v1 = self.value_at(s1)?;
        Ok(v1 - v0)
    }

    /// Single-step increment `values(s) - values(s-1)` for `s > 0`.
    pub fn step(&self, s: Stage) -> Result<Rat, StreamError> {
        assert!(s > 0, "step requires s > 0");
        self.delta(s - 1, s)
    }
}

// ---------------------------------------------------------------------------
// Tail classification
// ---------------------------------------------------------------------------

/// Where a stream sits relative to a reference value over the final
/// window of the scanned range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailClass {
    LeftTail,
    RightTail,
    Oscillating,
    EventuallyConstant,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub classification: TailClass,
    /// Least stage from which the sign of `value - reference` never
    /// changes through the end of the scan. For `Oscillating` this is
    /// `scan_end + 1` (the side never settles within the scan).
    pub first_settled_stage: Stage,
    /// Stages witnessing the claimed side(s), all within the scan.
    pub witness_stages: Vec<Stage>,
    /// Last stage actually scanned (equals the horizon unless the
    /// caller excluded a self-comparison window).
    pub scan_end: Stage,
    pub reference: Rat,
}

/// Classify the tail of `stream` against `reference` over `[0, horizon]`.
///
/// The verdict is read off the final `settle_window` stages: all
/// strictly below the reference is `LeftTail`, all strictly above is
/// `RightTail`, all equal is `EventuallyConstant`, and anything else
/// (both strict sides present, or a mix of equality and one side)
/// counts as `Oscillating` — the window has not settled strictly on a
/// side.
pub fn tail_classify(
    stream: &ApproxStream,
    reference: &Rat,
    settle_window: u64,
    horizon: Stage,
) -> Result<TailReport, StreamError> {
    assert!(settle_window >= 1, "settle_window must be >= 1");
    assert!(horizon >= settle_window, "horizon must be >= settle_window");
    let signs: Vec<i32> = (0..=horizon)
        .map(|s| Ok((stream.value_at(s)? - reference).signum()))
        .collect::<Result<_, StreamError>>()?;

    let window_start = (horizon + 1 - settle_window) as usize;
    let window = &signs[window_start..];
    let neg = window.iter().any(|&g| g < 0);
    let pos = window.iter().any(|&g| g > 0);
    let zero = window.iter().any(|&g| g == 0);

    let classification = match (neg, pos, zero) {
        (true, false, false) => TailClass::LeftTail,
        (false, true, false) => TailClass::RightTail,
        (false, false, true) => TailClass::EventuallyConstant,
        _ => TailClass::Oscillating,
    };

    let (first_settled_stage, witness_stages) = match classification {
        TailClass::Oscillating => {
            let last_neg = (0..signs.len()).rev().find(|&i| signs[i] < 0);
            let last_pos = (0..signs.len()).rev().find(|&i| signs[i] > 0);
            let witnesses = [last_neg, last_pos]
                .into_iter()
                .flatten()
                .map(|i| i as Stage)
                .collect();
            (horizon + 1, witnesses)
        }
        _ => {
            let final_sign = *window.last().expect("window nonempty");
            let mut settled = horizon as usize;
            while settled > 0 && signs[settled - 1] == final_sign {
                settled -= 1;
            }
            let witnesses = (window_start..=horizon as usize).map(|i| i as Stage).collect();
            (settled as Stage, witnesses)
        }
    };

    Ok(TailReport {
        classification,
        first_settled_stage,
        witness_stages,
        scan_end: horizon,
        reference: reference.clone(),
    })
}

/// Tail classification for a stream with no declared limit: the
/// reference is the stream's own horizon value, and the final
/// `settle_window` stages are excluded from the scan so the value is
/// never compared against itself.
pub fn tail_classify_against_horizon(
    stream: &ApproxStream,
    settle_window: u64,
    horizon: Stage,
) -> Result<TailReport, StreamError> {
    assert!(
        horizon >= 2 * settle_window,
        "horizon must leave room for the excluded window"
    );
    let reference = stream.value_at(horizon)?;
    tail_classify(stream, &reference, settle_window, horizon - settle_window)
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

    #[test]
    fn eval_geometric() {
        assert_eq!(geo2().value_at(3).unwrap(), Rat::new(7, 8));
        assert_eq!(geo2().value_at(0).unwrap(), Rat::zero());
        assert_eq!(geo4().value_at(2).unwrap(), Rat::new(15, 16));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(geo2().delta(2, 4).unwrap(), Rat::new(3, 16));
        assert_eq!(geo2().delta(5, 5).unwrap(), Rat::zero());
        assert_eq!(geo4().delta(1, 3).unwrap(), Rat::new(15, 64));
        assert_eq!(
            geo2().delta(4, 2),
            Err(StreamError::InvalidRange { s0: 4, s1: 2 })
        );
    }

    #[test]
    fn delta_additivity() {
        let a = geo4();
        for (s0, s1, s2) in [(0, 3, 7), (2, 2, 9), (1, 4, 4)] {
            let whole = a.delta(s0, s2).unwrap();
            let split = a.delta(s0, s1).unwrap() + a.delta(s1, s2).unwrap();
            assert_eq!(whole, split);
        }
    }

    #[test]
    fn scale_subtract_examples() {
        let s = ApproxStream::scale_subtract(&Rat::from_int(2), &geo2(), &geo2()).unwrap();
        assert_eq!(s.value_at(3).unwrap(), Rat::new(7, 8));
        let z = ApproxStream::scale_subtract(&Rat::one(), &geo2(), &geo2()).unwrap();
        for stage in [0, 1, 5, 17] {
            assert_eq!(z.value_at(stage).unwrap(), Rat::zero());
        }
        let m = ApproxStream::scale_subtract(&Rat::from_int(2), &geo4(), &geo2()).unwrap();
        assert_eq!(m.value_at(2).unwrap(), Rat::new(9, 8));
        assert!(matches!(
            ApproxStream::scale_subtract(&Rat::zero(), &geo2(), &geo2()),
            Err(StreamError::NonpositiveScalar { .. })
        ));
    }

    #[test]
    fn monotonicity_enforced_lazily() {
        // claims increasing, is not
        let bad = ApproxStream::from_fn("bad", StreamKind::Increasing, None, |s| {
            if s == 5 {
                Rat::from_int(-1)
            } else {
                Rat::from_int(s as i64)
            }
        });
        assert!(bad.value_at(3).is_ok());
        assert!(matches!(
            bad.value_at(5),
            Err(StreamError::MonotonicityViolation { .. })
        ));
        // also caught when the later stage was queried first
        let bad2 = ApproxStream::from_fn("bad2", StreamKind::Increasing, None, |s| {
            if s == 5 {
                Rat::from_int(-1)
            } else {
                Rat::from_int(s as i64)
            }
        });
        assert!(bad2.value_at(5).is_ok());
        assert!(matches!(
            bad2.value_at(3),
            Err(StreamError::MonotonicityViolation { .. })
        ));
    }

    #[test]
    fn determinism_of_memoized_values() {
        let a = geo4();
        let first = a.value_at(9).unwrap();
        let second = a.value_at(9).unwrap();
        assert_eq!(first, second);
        // recomputing from a fresh stream gives bitwise-identical rationals
        let b = geo4();
        assert_eq!(b.value_at(9).unwrap(), first);
    }

    #[test]
    fn tail_classify_examples() {
        let r = tail_classify(&geo2(), &Rat::one(), 4, 40).unwrap();
        assert_eq!(r.classification, TailClass::LeftTail);
        assert_eq!(r.first_settled_stage, 0);

        let dec = ApproxStream::from_fn("2^-s", StreamKind::Decreasing, Some(Rat::zero()), |s| {
            Rat::pow2(-(s as i64))
        });
        let r = tail_classify(&dec, &Rat::zero(), 4, 40).unwrap();
        assert_eq!(r.classification, TailClass::RightTail);

        let osc = ApproxStream::from_fn("osc", StreamKind::General, Some(Rat::zero()), |s| {
            let v = Rat::pow2(-(s as i64));
            if s % 2 == 0 {
                v
            } else {
                -v
            }
        });
        let r = tail_classify(&osc, &Rat::zero(), 4, 40).unwrap();
        assert_eq!(r.classification, TailClass::Oscillating);
        assert_eq!(r.first_settled_stage, 41);
        assert_eq!(r.witness_stages.len(), 2);
    }

    #[test]
    fn tail_classify_eventually_constant_needs_exact_hit() {
        // reaches its limit exactly at stage 3
        let hit = ApproxStream::from_table(
            "hits",
            StreamKind::Increasing,
            Some(Rat::one()),
            vec![(0, Rat::zero()), (1, Rat::new(1, 2)), (3, Rat::one())],
        );
        let r = tail_classify(&hit, &Rat::one(), 3, 20).unwrap();
        assert_eq!(r.classification, TailClass::EventuallyConstant);
        assert_eq!(r.first_settled_stage, 3);
        // never reaches: always LeftTail, never EventuallyConstant
        let r = tail_classify(&geo2(), &Rat::one(), 3, 20).unwrap();
        assert_ne!(r.classification, TailClass::EventuallyConstant);
    }

    #[test]
    fn against_horizon_excludes_self_window() {
        // strictly increasing all the way: every scanned value sits
        // below the horizon value
        let r = tail_classify_against_horizon(&geo2(), 4, 40).unwrap();
        assert_eq!(r.classification, TailClass::LeftTail);
        assert_eq!(r.scan_end, 36);

        // settles early: the scan region ends on values equal to the
        // reference, so the verdict is EventuallyConstant
        let settled = ApproxStream::from_table(
            "settst",
            StreamKind::Increasing,
            None,
            vec![(0, Rat::zero()), (2, Rat::new(1, 2))],
        );
        let r = tail_classify_against_horizon(&settled, 4, 40).unwrap();
        assert_eq!(r.classification, TailClass::EventuallyConstant);
    }

    #[test]
    fn shift_preserves_values() {
        let s = geo4().shift(3);
        assert_eq!(s.value_at(0).unwrap(), Rat::new(63, 64));
        assert_eq!(s.value_at(2).unwrap(), geo4().value_at(5).unwrap());
        assert_eq!(s.declared_limit(), Some(&Rat::one()));
    }

    #[test]
    fn add_and_scale_combinators() {
        let sum = ApproxStream::add(&geo2(), &geo4());
        assert_eq!(sum.value_at(2).unwrap(), Rat::new(3, 4) + Rat::new(15, 16));
        assert_eq!(sum.kind(), StreamKind::Increasing);
        assert_eq!(sum.declared_limit(), Some(&Rat::from_int(2)));
        let tripled = ApproxStream::scale(&Rat::from_int(3), &geo2()).unwrap();
        assert_eq!(tripled.value_at(1).unwrap(), Rat::new(3, 2));
        assert_eq!(tripled.declared_limit(), Some(&Rat::from_int(3)));
    }
}
