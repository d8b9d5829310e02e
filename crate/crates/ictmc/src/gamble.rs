//! Finite state spaces, gambles and the operator evaluation contract.
//!
//! A gamble is a real-valued function on the finite state space, stored as a
//! dense vector indexed by state. Every operator in this crate maps gambles
//! to gambles; [`OperatorEvaluation`] packages such a map together with the
//! non-negative-homogeneity flag required for the induced operator norm
//!
//! ```text
//! ‖A‖ = sup { ‖A f‖ : ‖f‖ = 1 }
//! ```
//!
//! where ‖·‖ is the maximum norm.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// An ordered finite set of distinct state labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    /// Builds a state space from distinct labels. Requires at least one state.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidInput("state space must be nonempty".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InvalidInput(format!("duplicate state label {a:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// State space with labels `s0, s1, …`.
    pub fn with_default_labels(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("s{i}")))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Index of a label, if present.
    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A real-valued function on the state space. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Gamble {
    values: Vec<f64>,
}

impl Gamble {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("gamble must be nonempty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("gamble entry {v} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, mu: f64) -> Result<Self> {
        Self::new(vec![mu; n])
    }

    /// Indicator of a single state.
    pub fn indicator(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::InvalidInput(format!("state {state} out of range for n={n}")));
        }
        let mut v = vec![0.0; n];
        v[state] = 1.0;
        Self::new(v)
    }

    /// Indicator of a set of states.
    pub fn indicator_of(n: usize, states: &[usize]) -> Result<Self> {
        let mut v = vec![0.0; n];
        for &s in states {
            if s >= n {
                return Err(Error::InvalidInput(format!("state {s} out of range for n={n}")));
            }
            v[s] = 1.0;
        }
        Self::new(v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Maximum norm ‖f‖ = max |f(x)|.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// max f − min f, the convergence-to-constant diagnostic.
    pub fn span(&self) -> f64 {
        self.max() - self.min()
    }

    /// ‖f − g‖ in the maximum norm.
    pub fn dist(&self, other: &Gamble) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn add(&self, other: &Gamble) -> Result<Gamble> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        Gamble::new(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, lambda: f64) -> Gamble {
        Gamble { values: self.values.iter().map(|v| lambda * v).collect() }
    }

    pub fn shift(&self, mu: f64) -> Gamble {
        Gamble { values: self.values.iter().map(|v| v + mu).collect() }
    }

    pub fn neg(&self) -> Gamble {
        Gamble { values: self.values.iter().map(|v| -v).collect() }
    }

    /// Componentwise `self >= other - slack`.
    pub fn dominates(&self, other: &Gamble, slack: f64) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| *a >= *b - slack)
    }
}

/// Maximum norm of a gamble, as a free function.
pub fn max_norm(f: &Gamble) -> f64 {
    f.max_norm()
}

type EvalFn = dyn Fn(&Gamble) -> Gamble + Send + Sync;

/// A callable map from gambles to gambles together with the flag that states
/// whether it is non-negatively homogeneous (A(λf) = λAf for λ ≥ 0). Only
/// homogeneous evaluations have an induced operator norm.
#[derive(Clone)]
pub struct OperatorEvaluation {
    dim: usize,
    nonneg_homogeneous: bool,
    func: Arc<EvalFn>,
}

impl std::fmt::Debug for OperatorEvaluation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorEvaluation")
            .field("dim", &self.dim)
            .field("nonneg_homogeneous", &self.nonneg_homogeneous)
            .finish()
    }
}

impl OperatorEvaluation {
    pub fn new<F>(dim: usize, nonneg_homogeneous: bool, func: F) -> Self
    where
        F: Fn(&Gamble) -> Gamble + Send + Sync + 'static,
    {
        Self { dim, nonneg_homogeneous, func: Arc::new(func) }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, true, |f: &Gamble| f.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_nonneg_homogeneous(&self) -> bool {
        self.nonneg_homogeneous
    }

    /// Applies the evaluation. The output always lives on the same state
    /// space as the input.
    pub fn apply(&self, f: &Gamble) -> Result<Gamble> {
        if f.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: f.len() });
        }
        let out = (self.func)(f);
        debug_assert_eq!(out.len(), self.dim);
        Ok(out)
    }

    /// Conjugate evaluation f ↦ −A(−f).
    pub fn conjugate(&self) -> OperatorEvaluation {
        let func = Arc::clone(&self.func);
        OperatorEvaluation::new(self.dim, self.nonneg_homogeneous, move |f: &Gamble| {
            (func)(&f.neg()).neg()
        })
    }
}

/// Deterministic probe set: all ±indicators, the constants ±1 and `random`
/// seeded unit-norm gambles.
pub(crate) fn probe_battery(n: usize, random: usize, seed: u64) -> Vec<Gamble> {
    let mut probes = Vec::with_capacity(2 * n + 2 + random);
    for x in 0..n {
        let ind = Gamble::indicator(n, x).expect("indicator");
        probes.push(ind.neg());
        probes.push(ind);
    }
    probes.push(Gamble::constant(n, 1.0).expect("constant"));
    probes.push(Gamble::constant(n, -1.0).expect("constant"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        probes.push(random_unit_gamble(&mut rng, n));
    }
    probes
}

pub(crate) fn random_unit_gamble(rng: &mut ChaCha8Rng, n: usize) -> Gamble {
    loop {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let g = Gamble::new(values).expect("finite");
        let norm = g.max_norm();
        if norm > 1e-6 {
            return g.scale(1.0 / norm);
        }
    }
}

/// Sampled lower bound on the induced operator norm of a non-negatively
/// homogeneous evaluation: the maximum of ‖A g‖ over the probe battery plus
/// `samples` seeded pseudo-random unit-norm gambles. Deterministic for a
/// fixed seed.
pub fn operator_norm_estimate(a: &OperatorEvaluation, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be positive".into()));
    }
    if !a.is_nonneg_homogeneous() {
        return Err(Error::InvalidInput(
            "operator norm is only defined for non-negatively homogeneous evaluations".into(),
        ));
    }
    let mut best: f64 = 0.0;
    for probe in probe_battery(a.dim(), samples, seed) {
        best = best.max(a.apply(&probe)?.max_norm());
    }
    Ok(best)
}
