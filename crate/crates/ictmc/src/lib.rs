//! Lower transition operators of imprecise continuous-time Markov chains.
//!
//! Given a lower transition rate operator Q — the lower envelope of a set of
//! intensity matrices with separately specified rows — this crate computes
//! the lower transition operator T_t f (the tightest lower bound on
//! E(f(X_t) | X_0 = x) over the chains compatible with Q), and decides
//! whether Q is ergodic (T_t f converges to a constant for every f) exactly,
//! through a qualitative reachability analysis that never integrates the
//! dynamics.
//!
//! The crate is organised as:
//!
//! * [`gamble`] — state spaces, gambles, norms and the operator contract;
//! * [`rates`] — concrete rate models and the envelope evaluations Q f, Q̄ f;
//! * [`semigroup`] — the Euler-product solver for T_t f and discrete-time
//!   lower transition operator utilities;
//! * [`ergodic`] — reachability graphs, the exact ergodicity decision and
//!   long-run lower expectations;
//! * [`oracle`] — independent brute-force references used by the tests;
//! * [`modelfile`] — the JSON model document format;
//! * [`report`] — stable text reports and DOT output;
//! * [`sampling`] — seeded random models for property testing;
//! * [`selftest`] — the self-contained property battery behind the CLI's
//!   `selftest` command.

pub mod error;
pub mod gamble;
pub mod modelfile;
pub mod oracle;
pub mod rates;
pub mod report;
pub mod sampling;
pub mod selftest;
pub mod semigroup;
pub mod ergodic;

pub use error::{Error, Result};
pub use gamble::{max_norm, operator_norm_estimate, Gamble, OperatorEvaluation, StateSpace};
pub use rates::{rate_from_transition, IntensityMatrix, LowerRateModel, RateNormBound};
