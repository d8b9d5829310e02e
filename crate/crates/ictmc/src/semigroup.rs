//! The lower transition operator T_t and discrete-time utilities.
//!
//! T_t f is the unique solution of d/dt T_t f = Q T_t f with T_0 f = f, and
//! equals the limit of the Euler products (I + (t/n)Q)^n f. The solver
//! computes these products at step counts n, 2n, 4n, … starting from the
//! admissibility floor n0 = max(1, ⌈t·‖Q‖⌉) (which makes every factor a
//! lower transition operator) and stops when the Richardson difference
//! ‖g_{2n} − g_n‖ falls below the tolerance. Times above one are split into
//! unit-length segments composed through the semigroup property, so the
//! ladder never restarts from a huge floor and intermediate iterates stay
//! inside [min f, max f].
//!
//! `est_error` is the sum of the per-segment Richardson differences of the
//! accepted iterates. It is an a-posteriori estimate, not a certified bound.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gamble::{probe_battery, random_unit_gamble, Gamble, OperatorEvaluation};
use crate::rates::{LowerRateModel, RateModelKind};

/// Default Richardson tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Default doubling budget per segment.
pub const DEFAULT_MAX_DOUBLINGS: u32 = 30;
/// Violations below this magnitude are classified as numerical noise;
/// anything larger is structural.
pub const STRUCTURAL_THRESHOLD: f64 = 1e-9;

/// Result of a single T_t f computation.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub value: Gamble,
    /// Total Euler steps of the accepted iterate across all segments.
    pub steps_used: u64,
    /// Sum of the accepted per-segment Richardson differences.
    pub est_error: f64,
    /// False when some segment exhausted its doubling budget; the value is
    /// then the last iterate and the caller decides.
    pub converged: bool,
}

/// Computes T_t f for one rate model with a fixed accuracy policy.
///
/// For precise (linear) models the solver keeps per-segment-length ladders
/// of Euler-product matrices. A segment length evolved more than once is
/// served from its ladder: the rung matrices are shared, while the
/// Richardson acceptance still runs per gamble, so every result satisfies
/// the same stopping contract as direct stepping.
pub struct TransitionSolver {
    model: Arc<LowerRateModel>,
    tolerance: f64,
    max_doublings: u32,
    cache: Mutex<HashMap<u64, MatrixLadder>>,
}

/// Euler-product matrices for one segment length of a precise model.
/// `rungs[k]` is (I + (len/(n0·2^k))Q)^{n0·2^k}, row-major.
struct MatrixLadder {
    n0: u64,
    calls: u32,
    rungs: Vec<Arc<Vec<f64>>>,
    /// First k with ‖rungs[k+1] − rungs[k]‖ ≤ tolerance in the max-row-sum
    /// norm, once known; used by `evolve_operator`.
    op_accepted: Option<usize>,
}

impl TransitionSolver {
    pub fn new(model: LowerRateModel, tolerance: f64, max_doublings: u32) -> Result<Self> {
        if !(tolerance > 0.0) || !tolerance.is_finite() {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {tolerance}")));
        }
        if max_doublings == 0 {
            return Err(Error::InvalidInput("max_doublings must be at least 1".into()));
        }
        Ok(Self {
            model: Arc::new(model),
            tolerance,
            max_doublings,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_defaults(model: LowerRateModel) -> Self {
        Self::new(model, DEFAULT_TOLERANCE, DEFAULT_MAX_DOUBLINGS).expect("default config is valid")
    }

    pub fn model(&self) -> &LowerRateModel {
        &self.model
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn max_doublings(&self) -> u32 {
        self.max_doublings
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("t must be finite and >= 0, got {t}")));
        }
        if t > 1e12 {
            return Err(Error::BudgetExceeded(format!("t = {t} is beyond the solver's range")));
        }
        Ok(())
    }

    /// T_t f by the doubling Euler product.
    pub fn evolve(&self, f: &Gamble, t: f64) -> Result<SolverResult> {
        self.check_time(t)?;
        let n = self.model.n();
        if f.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: f.len() });
        }
        let bound = self.model.norm_bound().value;
        if t == 0.0 || bound == 0.0 {
            // T_0 = I; and Q = 0 forces T_t = I for every t.
            return Ok(SolverResult {
                value: f.clone(),
                steps_used: 1,
                est_error: 0.0,
                converged: true,
            });
        }

        let precise = self.model.is_precise();
        let mut g = f.values().to_vec();
        let mut total_steps = 0u64;
        let mut est_error = 0.0;
        let mut converged = true;
        for len in segment_lengths(t) {
            // A segment length seen repeatedly is worth a shared matrix
            // ladder (building one costs n column evolutions); one-off
            // lengths step the gamble directly.
            let seg = if precise && self.bump_segment_calls(len, bound) >= 2 {
                self.evolve_segment_via_ladder(&g, len)?
            } else {
                self.evolve_segment(&g, len, bound)
            };
            g = seg.value;
            total_steps += seg.steps;
            est_error += seg.diff;
            converged &= seg.converged;
        }
        Ok(SolverResult { value: Gamble::new(g)?, steps_used: total_steps, est_error, converged })
    }

    /// Minimum step count for a segment: admissible and at least n − 1, so
    /// the product's strict-positivity pattern saturates the reachability
    /// closure of the graph.
    fn segment_floor(&self, len: f64, bound: f64) -> u64 {
        admissible_floor(len, bound).max(self.model.n() as u64 - 1).max(1)
    }

    fn bump_segment_calls(&self, len: f64, bound: f64) -> u32 {
        let mut cache = self.cache.lock().expect("solver cache poisoned");
        let ladder = cache.entry(len.to_bits()).or_insert_with(|| MatrixLadder {
            n0: self.segment_floor(len, bound),
            calls: 0,
            rungs: Vec::new(),
            op_accepted: None,
        });
        ladder.calls = ladder.calls.saturating_add(1);
        ladder.calls
    }

    fn evolve_segment(&self, g0: &[f64], len: f64, bound: f64) -> SegmentResult {
        let n0 = self.segment_floor(len, bound);
        let mut scratch = vec![0.0; g0.len()];
        let mut prev = euler_product(&self.model, g0, len, n0, &mut scratch);
        let mut steps = n0;
        let mut diff = f64::INFINITY;
        for k in 0..=self.max_doublings {
            let next_steps = n0 << (k + 1);
            let next = euler_product(&self.model, g0, len, next_steps, &mut scratch);
            diff = max_dist(&next, &prev);
            steps = next_steps;
            prev = next;
            if diff <= self.tolerance {
                return SegmentResult { value: prev, steps, diff, converged: true };
            }
        }
        SegmentResult { value: prev, steps, diff, converged: false }
    }

    /// Same acceptance rule as `evolve_segment`, with the Euler products
    /// taken from the shared rung matrices of a precise model.
    fn evolve_segment_via_ladder(&self, g0: &[f64], len: f64) -> Result<SegmentResult> {
        let n = self.model.n();
        let mut cache = self.cache.lock().expect("solver cache poisoned");
        let ladder = cache.get_mut(&len.to_bits()).expect("ladder registered by bump");
        let mut prev = {
            ensure_rung(&self.model, ladder, 0, len, n);
            matvec(&ladder.rungs[0], g0)
        };
        let mut steps = ladder.n0;
        let mut diff = f64::INFINITY;
        for k in 0..=self.max_doublings {
            ensure_rung(&self.model, ladder, k as usize + 1, len, n);
            let next = matvec(&ladder.rungs[k as usize + 1], g0);
            diff = max_dist(&next, &prev);
            steps = ladder.n0 << (k + 1);
            prev = next;
            if diff <= self.tolerance {
                return Ok(SegmentResult { value: prev, steps, diff, converged: true });
            }
        }
        Ok(SegmentResult { value: prev, steps, diff, converged: false })
    }

    /// T_t as a certified discrete-time lower transition operator with a
    /// frozen step schedule. Freezing matters: the fixed Euler product is
    /// exactly superadditive and homogeneous, whereas per-call adaptive
    /// stepping would violate L2 at the tolerance scale.
    pub fn evolve_operator(&self, t: f64) -> Result<DiscreteLto> {
        self.check_time(t)?;
        let n = self.model.n();
        let bound = self.model.norm_bound().value;
        if t == 0.0 || bound == 0.0 {
            let mut op = DiscreteLto::identity(n);
            op.from_rate_semigroup = true;
            return Ok(op);
        }
        if self.model.is_precise() {
            self.precise_operator(t, bound)
        } else {
            self.imprecise_operator(t, bound)
        }
    }

    /// Precise models: ladder on the operator matrices themselves. The
    /// max-row-sum norm of the rung difference bounds the per-gamble
    /// Richardson difference for every ‖f‖ ≤ 1.
    fn precise_operator(&self, t: f64, bound: f64) -> Result<DiscreteLto> {
        let n = self.model.n();
        let mut segment_matrices: Vec<Arc<Vec<f64>>> = Vec::new();
        let mut cache = self.cache.lock().expect("solver cache poisoned");
        for len in segment_lengths(t) {
            let ladder = cache.entry(len.to_bits()).or_insert_with(|| MatrixLadder {
                n0: self.segment_floor(len, bound),
                calls: 0,
                rungs: Vec::new(),
                op_accepted: None,
            });
            let accepted = match ladder.op_accepted {
                Some(k) => k,
                None => {
                    let mut k = 0usize;
                    loop {
                        ensure_rung(&self.model, ladder, k + 1, len, n);
                        let diff = matrix_inf_dist(&ladder.rungs[k], &ladder.rungs[k + 1], n);
                        if diff <= self.tolerance {
                            ladder.op_accepted = Some(k);
                            break k;
                        }
                        if k as u32 >= self.max_doublings {
                            return Err(Error::BudgetExceeded(format!(
                                "operator ladder for segment length {len} did not reach \
                                 tolerance {} within {} doublings (last difference {diff})",
                                self.tolerance, self.max_doublings
                            )));
                        }
                        k += 1;
                    }
                }
            };
            segment_matrices.push(Arc::clone(&ladder.rungs[accepted + 1]));
        }
        drop(cache);

        // The chain applies the first segment first, so it composes as the
        // reverse matrix product.
        let mut total = (*segment_matrices[0]).clone();
        for m in &segment_matrices[1..] {
            total = matmul(m, &total, n);
        }
        let matrix = Arc::new(total);
        let eval_matrix = Arc::clone(&matrix);
        let eval = OperatorEvaluation::new(n, true, move |f: &Gamble| {
            Gamble::new(matvec(&eval_matrix, f.values())).expect("finite")
        });
        let mut op = DiscreteLto::certify(eval)?;
        op.matrix = Some(matrix);
        op.from_rate_semigroup = true;
        Ok(op)
    }

    /// Imprecise models: resolve a frozen per-segment step schedule by
    /// laddering the whole probe battery, then wrap the fixed product.
    fn imprecise_operator(&self, t: f64, bound: f64) -> Result<DiscreteLto> {
        let n = self.model.n();
        let mut battery: Vec<Vec<f64>> = probe_battery(n, 16, OPERATOR_PROBE_SEED)
            .into_iter()
            .map(Gamble::into_values)
            .collect();
        let mut schedule: Vec<(f64, u64)> = Vec::new();
        let mut qg = vec![0.0; n];
        for len in segment_lengths(t) {
            let n0 = self.segment_floor(len, bound);
            let mut prev: Vec<Vec<f64>> =
                battery.iter().map(|g| euler_product(&self.model, g, len, n0, &mut qg)).collect();
            let mut resolved = None;
            for k in 0..=self.max_doublings {
                let steps = n0 << (k + 1);
                let next: Vec<Vec<f64>> = battery
                    .iter()
                    .map(|g| euler_product(&self.model, g, len, steps, &mut qg))
                    .collect();
                let diff = prev
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| max_dist(a, b))
                    .fold(0.0, f64::max);
                prev = next;
                if diff <= self.tolerance {
                    resolved = Some(steps);
                    break;
                }
            }
            let steps = resolved.ok_or_else(|| {
                Error::BudgetExceeded(format!(
                    "operator ladder for segment length {len} did not converge on the probe battery"
                ))
            })?;
            schedule.push((len, steps));
            battery = prev;
        }

        let model = Arc::clone(&self.model);
        let schedule = Arc::new(schedule);
        let eval_schedule = Arc::clone(&schedule);
        let eval = OperatorEvaluation::new(n, true, move |f: &Gamble| {
            let mut g = f.values().to_vec();
            let mut qg = vec![0.0; g.len()];
            for &(len, steps) in eval_schedule.iter() {
                euler_in_place(&model, &mut g, &mut qg, len, steps);
            }
            Gamble::new(g).expect("finite")
        });
        let mut op = DiscreteLto::certify(eval)?;
        op.from_rate_semigroup = true;
        Ok(op)
    }

    /// Test statistic for the backward equation: the residual
    /// ‖(T_{t+h}f − T_{t−h}f)/(2h) − Q T_t f‖ (forward variant at the
    /// boundary). T_{t±h} are reached from T_{t−h}f through the semigroup,
    /// which cancels most of the shared solver error in the difference
    /// quotient.
    pub fn derivative_check(&self, f: &Gamble, t: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
        }
        self.check_time(t)?;
        let (quotient, at);
        if t == 0.0 || t <= h {
            // Forward difference from t.
            let base = if t == 0.0 { f.clone() } else { self.evolve(f, t)?.value };
            let ahead = self.evolve(&base, h)?.value;
            quotient = ahead
                .values()
                .iter()
                .zip(base.values())
                .map(|(a, b)| (a - b) / h)
                .collect::<Vec<_>>();
            at = base;
        } else {
            let behind = self.evolve(f, t - h)?.value;
            let mid = self.evolve(&behind, h)?.value;
            let ahead = self.evolve(&mid, h)?.value;
            quotient = ahead
                .values()
                .iter()
                .zip(behind.values())
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>();
            at = mid;
        }
        let qtf = self.model.lower_apply(&at)?;
        let residual = quotient
            .iter()
            .zip(qtf.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(residual)
    }
}

struct SegmentResult {
    value: Vec<f64>,
    steps: u64,
    diff: f64,
    converged: bool,
}

const OPERATOR_PROBE_SEED: u64 = 0x1C73_C5EE;

/// Unit-length segments covering [0, t], remainder last.
fn segment_lengths(t: f64) -> impl Iterator<Item = f64> {
    let full = t.floor() as u64;
    let rem = t - full as f64;
    (0..full).map(|_| 1.0).chain((rem > 0.0).then_some(rem))
}

/// Smallest admissible step count: n with (len/n)·bound ≤ 1, at least 1.
fn admissible_floor(len: f64, bound: f64) -> u64 {
    let mut n = (len * bound).ceil().max(1.0) as u64;
    while (len / n as f64) * bound > 1.0 {
        n += 1;
    }
    n
}

fn euler_product(
    model: &LowerRateModel,
    g0: &[f64],
    len: f64,
    steps: u64,
    scratch: &mut Vec<f64>,
) -> Vec<f64> {
    let mut g = g0.to_vec();
    euler_in_place(model, &mut g, scratch, len, steps);
    g
}

fn euler_in_place(
    model: &LowerRateModel,
    g: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    len: f64,
    steps: u64,
) {
    let delta = len / steps as f64;
    model.euler_steps(g, scratch, delta, steps);
}

/// Extends a ladder until rung `k` exists. A rung is the full matrix power
/// (I + ΔQ)^steps, accumulated as repeated products with the non-negative
/// one-step weight matrix W = I + ΔQ; structural zeros survive because no
/// cancellation can occur.
fn ensure_rung(model: &LowerRateModel, ladder: &mut MatrixLadder, k: usize, len: f64, n: usize) {
    let q = match model.kind() {
        RateModelKind::Precise(m) => m,
        _ => unreachable!("matrix ladders exist only for precise models"),
    };
    while ladder.rungs.len() <= k {
        let rung = ladder.rungs.len();
        let steps = ladder.n0 << rung;
        let delta = len / steps as f64;
        let mut w = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                w[x * n + y] =
                    if x == y { 1.0 + delta * q.entry(x, x) } else { delta * q.entry(x, y) };
            }
        }
        ladder.rungs.push(Arc::new(matrix_power(&w, n, steps)));
    }
}

/// W^steps by repeated multiplication, monomorphised over small dimensions.
fn matrix_power(w: &[f64], n: usize, steps: u64) -> Vec<f64> {
    macro_rules! dispatch {
        ($($dim:literal),*) => {
            match n {
                $($dim => return matrix_power_fixed::<$dim>(w, steps),)*
                _ => {}
            }
        };
    }
    dispatch!(1, 2, 3, 4, 5, 6);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    for _ in 0..steps {
        m = matmul(w, &m, n);
    }
    m
}

fn matrix_power_fixed<const N: usize>(w: &[f64], steps: u64) -> Vec<f64> {
    let w = &w[..N * N];
    let mut m = [0.0f64; 36];
    let m = &mut m[..N * N];
    for i in 0..N {
        m[i * N + i] = 1.0;
    }
    for _ in 0..steps {
        let mut next = [0.0f64; 36];
        let next = &mut next[..N * N];
        for x in 0..N {
            for y in 0..N {
                let wxy = w[x * N + y];
                for c in 0..N {
                    next[x * N + c] += wxy * m[y * N + c];
                }
            }
        }
        m.copy_from_slice(next);
    }
    m.to_vec()
}

/// Row-major matrix product.
fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let v = a[i * n + k];
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += v * b[k * n + j];
            }
        }
    }
    out
}

/// Row-major matrix application.
fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Max-row-sum distance between two row-major matrices: the induced ∞-norm
/// of their difference.
fn matrix_inf_dist(a: &[f64], b: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            a[i * n..(i + 1) * n]
                .iter()
                .zip(&b[i * n..(i + 1) * n])
                .map(|(x, y)| (x - y).abs())
                .sum()
        })
        .fold(0.0, f64::max)
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A discrete-time lower transition operator: an evaluation certified to
/// satisfy L1–L3 on the probe set, optionally backed by a stochastic matrix
/// when linear.
#[derive(Clone)]
pub struct DiscreteLto {
    eval: OperatorEvaluation,
    matrix: Option<Arc<Vec<f64>>>,
    from_rate_semigroup: bool,
}

impl std::fmt::Debug for DiscreteLto {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteLto")
            .field("dim", &self.eval.dim())
            .field("linear", &self.matrix.is_some())
            .field("from_rate_semigroup", &self.from_rate_semigroup)
            .finish()
    }
}

impl DiscreteLto {
    /// Certifies L1–L3 on the probe battery (all indicators, pairwise
    /// indicator sums, the constants ±1 and seeded random gambles).
    /// Violations above [`STRUCTURAL_THRESHOLD`] reject the operator.
    pub fn certify(eval: OperatorEvaluation) -> Result<Self> {
        let n = eval.dim();
        let battery = probe_battery(n, 16, OPERATOR_PROBE_SEED);
        let images: Vec<Gamble> = battery.iter().map(|g| eval.apply(g)).collect::<Result<_>>()?;

        // L1 on every probe.
        for (g, tg) in battery.iter().zip(&images) {
            let deficit = g.min() - tg.min();
            if deficit > STRUCTURAL_THRESHOLD {
                return Err(Error::CertificationFailed(format!(
                    "L1 violated by {deficit:.3e} on probe {:?}",
                    g.values()
                )));
            }
        }
        // L2 on indicator pairs, whose sums are evaluated directly.
        for i in 0..n {
            for j in (i + 1)..n {
                let sum = Gamble::indicator(n, i)?.add(&Gamble::indicator(n, j)?)?;
                let t_sum = eval.apply(&sum)?;
                let ti = &images[2 * i + 1];
                let tj = &images[2 * j + 1];
                let rhs = ti.add(tj)?;
                let deficit = rhs
                    .values()
                    .iter()
                    .zip(t_sum.values())
                    .fold(0.0f64, |m, (r, s)| m.max(r - s));
                if deficit > STRUCTURAL_THRESHOLD {
                    return Err(Error::CertificationFailed(format!(
                        "L2 violated by {deficit:.3e} on indicators ({i},{j})"
                    )));
                }
            }
        }
        // L3 with lambda = 2 on a spread of probes.
        for g in battery.iter().step_by(3) {
            let doubled = eval.apply(&g.scale(2.0))?;
            let direct = eval.apply(g)?.scale(2.0);
            let gap = doubled.dist(&direct);
            if gap > STRUCTURAL_THRESHOLD {
                return Err(Error::CertificationFailed(format!(
                    "L3 violated by {gap:.3e} on probe {:?}",
                    g.values()
                )));
            }
        }

        Ok(Self { eval, matrix: None, from_rate_semigroup: false })
    }

    /// Wraps an evaluation without certification. Intended for diagnostics
    /// and negative controls; `check_lto_axioms` will report the damage.
    pub fn new_unchecked(eval: OperatorEvaluation) -> Self {
        Self { eval, matrix: None, from_rate_semigroup: false }
    }

    pub fn identity(n: usize) -> Self {
        let mut op = Self::new_unchecked(OperatorEvaluation::identity(n));
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        op.matrix = Some(Arc::new(m));
        op
    }

    /// A row-stochastic matrix as a (linear) lower transition operator.
    pub fn from_stochastic_matrix(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        for (x, row) in entries.chunks(n).enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidModel(format!(
                    "row {x} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!("row {x} sums to {sum}, not 1")));
            }
        }
        let matrix = Arc::new(entries);
        let eval_matrix = Arc::clone(&matrix);
        let eval = OperatorEvaluation::new(n, true, move |f: &Gamble| {
            Gamble::new(matvec(&eval_matrix, f.values())).expect("finite")
        });
        let mut op = Self::certify(eval)?;
        op.matrix = Some(matrix);
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.eval.dim()
    }

    pub fn apply(&self, f: &Gamble) -> Result<Gamble> {
        self.eval.apply(f)
    }

    /// Conjugate application T̄ f = −T(−f).
    pub fn upper_apply(&self, f: &Gamble) -> Result<Gamble> {
        Ok(self.eval.apply(&f.neg())?.neg())
    }

    pub fn evaluation(&self) -> &OperatorEvaluation {
        &self.eval
    }

    /// The stochastic matrix, when the operator is linear.
    pub fn matrix(&self) -> Option<&[f64]> {
        self.matrix.as_deref().map(|m| m.as_slice())
    }

    /// True for operators produced by `evolve_operator`, for which being
    /// regularly absorbing and 1-step absorbing coincide.
    pub fn is_from_rate_semigroup(&self) -> bool {
        self.from_rate_semigroup
    }
}

/// Composition a ∘ b (b is applied first). Closure of L1–L3 under
/// composition keeps the result certifiable; certification is re-run on the
/// probe set.
pub fn compose(a: &DiscreteLto, b: &DiscreteLto) -> Result<DiscreteLto> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let (ea, eb) = (a.eval.clone(), b.eval.clone());
    let eval = OperatorEvaluation::new(a.dim(), true, move |f: &Gamble| {
        let inner = eb.apply(f).expect("dimension checked");
        ea.apply(&inner).expect("dimension checked")
    });
    let mut op = DiscreteLto::certify(eval)?;
    if let (Some(ma), Some(mb)) = (a.matrix.as_deref(), b.matrix.as_deref()) {
        op.matrix = Some(Arc::new(matmul(ma, mb, a.dim())));
    }
    Ok(op)
}

/// One axiom violation found by [`check_lto_axioms`].
#[derive(Debug, Clone)]
pub struct AxiomViolation {
    pub axiom: &'static str,
    pub magnitude: f64,
    pub witness: String,
}

impl AxiomViolation {
    pub fn is_structural(&self) -> bool {
        self.magnitude > STRUCTURAL_THRESHOLD
    }
}

/// Report of the randomized axiom verification.
#[derive(Debug, Clone, Default)]
pub struct AxiomReport {
    pub violations: Vec<AxiomViolation>,
    pub trials: usize,
}

impl AxiomReport {
    pub fn structural(&self) -> impl Iterator<Item = &AxiomViolation> {
        self.violations.iter().filter(|v| v.is_structural())
    }

    pub fn passed(&self) -> bool {
        self.structural().next().is_none()
    }

    /// Largest violation magnitude seen, structural or numerical.
    pub fn worst(&self) -> f64 {
        self.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max)
    }
}

/// Randomized verification of L1–L8 and L10 on `trials` seeded gamble pairs.
/// Violations below [`STRUCTURAL_THRESHOLD`] are flagged as numerical,
/// larger ones as structural.
pub fn check_lto_axioms(t: &DiscreteLto, trials: usize, seed: u64) -> Result<AxiomReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let n = t.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AxiomReport { violations: Vec::new(), trials };
    let mut record = |axiom: &'static str, magnitude: f64, witness: String| {
        if magnitude > 0.0 {
            report.violations.push(AxiomViolation { axiom, magnitude, witness });
        }
    };

    for trial in 0..trials {
        let scale = rng.gen_range(0.5..3.0);
        let f = random_unit_gamble(&mut rng, n).scale(scale);
        let g = random_unit_gamble(&mut rng, n).scale(scale);
        let lambda: f64 = rng.gen_range(0.0..3.0);
        let mu: f64 = rng.gen_range(-2.0..2.0);
        let wit = |what: String| format!("trial {trial}: {what}");

        let tf = t.apply(&f)?;
        let tg = t.apply(&g)?;
        let upper_f = t.upper_apply(&f)?;

        // L1: Tf >= min f.
        record("L1", f.min() - tf.min(), wit(format!("f={:?}", f.values())));

        // L2: T(f+g) >= Tf + Tg.
        let t_sum = t.apply(&f.add(&g)?)?;
        let deficit = tf
            .add(&tg)?
            .values()
            .iter()
            .zip(t_sum.values())
            .fold(0.0f64, |m, (r, s)| m.max(r - s));
        record("L2", deficit, wit(format!("f={:?} g={:?}", f.values(), g.values())));

        // L3: T(λf) = λTf.
        let t_scaled = t.apply(&f.scale(lambda))?;
        record(
            "L3",
            t_scaled.dist(&tf.scale(lambda)),
            wit(format!("lambda={lambda} f={:?}", f.values())),
        );

        // L4: min f <= Tf <= T̄f <= max f.
        let l4a = tf
            .values()
            .iter()
            .zip(upper_f.values())
            .fold(0.0f64, |m, (lo, hi)| m.max(lo - hi));
        record("L4", l4a.max(upper_f.max() - f.max()), wit(format!("f={:?}", f.values())));

        // L5: T(f+μ) = Tf + μ.
        let t_shift = t.apply(&f.shift(mu))?;
        record("L5", t_shift.dist(&tf.shift(mu)), wit(format!("mu={mu} f={:?}", f.values())));

        // L6: f >= g implies Tf >= Tg, tested on g' = f − |f − g| <= f.
        let below = Gamble::new(
            f.values().iter().zip(g.values()).map(|(a, b)| a - (a - b).abs()).collect(),
        )?;
        let t_below = t.apply(&below)?;
        let mono = t_below
            .values()
            .iter()
            .zip(tf.values())
            .fold(0.0f64, |m, (lo, hi)| m.max(lo - hi));
        record("L6", mono, wit(format!("f={:?} g'={:?}", f.values(), below.values())));

        // L7: |Tf − Tg| <= T̄(|f−g|).
        let absdiff = Gamble::new(
            f.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).collect(),
        )?;
        let t_absdiff = t.upper_apply(&absdiff)?;
        let l7 = tf
            .values()
            .iter()
            .zip(tg.values())
            .zip(t_absdiff.values())
            .fold(0.0f64, |m, ((a, b), c)| m.max((a - b).abs() - c));
        record("L7", l7, wit(format!("f={:?} g={:?}", f.values(), g.values())));

        // L10: ‖Tf − Tg‖ <= ‖f − g‖, and L8 (continuity) via a shrinking
        // perturbation.
        record(
            "L10",
            tf.dist(&tg) - f.dist(&g),
            wit(format!("f={:?} g={:?}", f.values(), g.values())),
        );
        let eps = 10f64.powi(-(trial as i32 % 6) - 3);
        let nudged = t.apply(&f.shift(eps))?;
        record("L8", nudged.dist(&tf) - eps, wit(format!("eps={eps} f={:?}", f.values())));
    }
    Ok(report)
}
