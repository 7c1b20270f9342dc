//! Desk-scale laboratory for differences of halting probabilities.
//!
//! Everything here computes over exact rationals: staged prefix-free
//! machines and their (restricted) halting probabilities, approximation
//! streams and their tail behaviour, the left/right-c.e. extraction
//! recipes, a marker-based Solovay-test builder, and a decanter that
//! drives a Martin-Löf test. No floating point enters any computation;
//! plotting is the only place values are rounded, and it reads back the
//! exact CSV artifacts.

pub mod cli;
pub mod decanter;
pub mod io;
pub mod machine;
pub mod rational;
pub mod solovay;
pub mod stream;
pub mod transition;

pub use rational::Rat;
pub use stream::{ApproxStream, StreamKind, TailClass, TailReport};

/// Default width of the "final window" used wherever a cofinite
/// quantifier is rendered as "for all stages in the last window".
pub const DEFAULT_SETTLE_WINDOW: u64 = 8;
