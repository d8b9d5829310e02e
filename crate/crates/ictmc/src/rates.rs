//! Lower transition rate operators.
//!
//! A lower transition rate operator Q is a superadditive, non-negatively
//! homogeneous map that vanishes on constants and has non-negative
//! off-diagonal indicator images; it generalises an intensity matrix and is
//! the lower envelope of a set of intensity matrices with separately
//! specified rows. This module provides three concrete representations
//! (a single matrix, interval-valued rows, and finite candidate-row sets),
//! the envelope evaluations Q f and Q̄ f, and the certified norm bound
//! ‖Q‖ ≤ 2 max |Q(1_x)(x)|.
//!
//! Evaluation uses the centered form
//!
//! ```text
//! (Q f)(x) = min over candidate rows q of Σ_{y≠x} q(y) · (f(y) − f(x))
//! ```
//!
//! which is identical to the row·f form when rows sum to zero, vanishes on
//! constant gambles exactly (also in floating point), and makes the interval
//! minimiser explicit: take the lower rate when f(y) ≥ f(x) and the upper
//! rate otherwise.

use crate::error::{Error, Result};
use crate::gamble::{Gamble, OperatorEvaluation, StateSpace};

/// Tolerance on row sums for float-constructed matrices. Models parsed from
/// documents are validated in exact rational arithmetic instead.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A square matrix with non-negative off-diagonal entries and rows that sum
/// to zero (within [`ROW_SUM_TOLERANCE`] for float input).
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix {
    n: usize,
    /// Row-major entries. The stored diagonal is the negated off-diagonal
    /// row sum, so rows sum to zero by construction.
    entries: Vec<f64>,
}

impl IntensityMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("matrix must have at least one state".into()));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        for (x, row) in entries.chunks(n).enumerate() {
            let mut sum = 0.0;
            for (y, &q) in row.iter().enumerate() {
                if !q.is_finite() {
                    return Err(Error::InvalidModel(format!("entry ({x},{y}) is not finite")));
                }
                if y != x && q < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "off-diagonal entry ({x},{y}) = {q} is negative"
                    )));
                }
                sum += q;
            }
            if sum.abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!("row {x} sums to {sum}, not 0")));
            }
        }
        // Canonicalise the diagonal so each row sums to zero exactly.
        let mut entries = entries;
        for x in 0..n {
            let off: f64 = (0..n).filter(|&y| y != x).map(|y| entries[x * n + y]).sum();
            entries[x * n + x] = -off;
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            entries.extend_from_slice(row);
        }
        Self::new(n, entries)
    }

    /// Builds from off-diagonal rates alone; diagonals are derived, so rows
    /// sum to zero by construction and no row-sum tolerance is involved.
    /// Diagonal cells of the input grid must be zero.
    pub fn from_off_diagonal(n: usize, grid: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("matrix must have at least one state".into()));
        }
        if grid.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: grid.len() });
        }
        let mut entries = grid;
        for x in 0..n {
            if entries[x * n + x] != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "diagonal cell ({x},{x}) must be 0; it is derived from the row"
                )));
            }
            let mut sum = 0.0;
            for y in 0..n {
                let q = entries[x * n + y];
                if !q.is_finite() || (y != x && q < 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "off-diagonal entry ({x},{y}) = {q} is invalid"
                    )));
                }
                sum += q;
            }
            entries[x * n + x] = -sum;
        }
        Ok(Self { n, entries })
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.n + y]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.n..(x + 1) * self.n]
    }
}

/// Representation of the candidate rows of a lower transition rate operator.
#[derive(Debug, Clone, PartialEq)]
pub enum RateModelKind {
    /// A single intensity matrix; the envelope is the matrix itself.
    Precise(IntensityMatrix),
    /// Per-state interval bounds on the off-diagonal rates, `0 ≤ lo ≤ hi`.
    /// Diagonals are implied by row-sum-zero and stored as zero.
    IntervalRows { lo: Vec<f64>, hi: Vec<f64> },
    /// For each state, a nonempty finite list of candidate intensity rows.
    FiniteRowSets { rows: Vec<Vec<Vec<f64>>> },
}

/// A lower transition rate operator over a concrete state space.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerRateModel {
    space: StateSpace,
    kind: RateModelKind,
}

/// Certified upper bound on the induced operator norm of Q, from
/// ‖Q‖ ≤ 2 max_x |Q(1_x)(x)|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateNormBound {
    pub value: f64,
}

impl LowerRateModel {
    pub fn precise(space: StateSpace, matrix: IntensityMatrix) -> Result<Self> {
        if matrix.n() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), got: matrix.n() });
        }
        Ok(Self { space, kind: RateModelKind::Precise(matrix) })
    }

    /// Interval model from full `n × n` bound matrices; diagonal cells must
    /// be zero (the diagonal is derived, never user-supplied).
    pub fn interval(space: StateSpace, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = space.len();
        if lo.len() != n * n || hi.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: lo.len().max(hi.len()) });
        }
        for x in 0..n {
            for y in 0..n {
                let (l, h) = (lo[x * n + y], hi[x * n + y]);
                if !l.is_finite() || !h.is_finite() {
                    return Err(Error::InvalidModel(format!("bound ({x},{y}) is not finite")));
                }
                if x == y {
                    if l != 0.0 || h != 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "diagonal bound ({x},{x}) must be 0; it is derived from the row"
                        )));
                    }
                    continue;
                }
                if l < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "lower bound ({x},{y}) = {l} is negative"
                    )));
                }
                if l > h {
                    return Err(Error::InvalidModel(format!(
                        "bounds ({x},{y}) are inverted: lo {l} > hi {h}"
                    )));
                }
            }
        }
        Ok(Self { space, kind: RateModelKind::IntervalRows { lo, hi } })
    }

    /// Row-set model: `rows[x]` is the nonempty list of candidate intensity
    /// rows for state x (full rows including the diagonal).
    pub fn row_sets(space: StateSpace, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = space.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rows.len() });
        }
        for (x, candidates) in rows.iter().enumerate() {
            if candidates.is_empty() {
                return Err(Error::InvalidModel(format!("state {x} has no candidate rows")));
            }
            for (k, row) in candidates.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: row.len() });
                }
                let mut sum = 0.0;
                for (y, &q) in row.iter().enumerate() {
                    if !q.is_finite() {
                        return Err(Error::InvalidModel(format!(
                            "candidate {k} for state {x}: entry {y} is not finite"
                        )));
                    }
                    if y != x && q < 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "candidate {k} for state {x}: off-diagonal entry {y} = {q} is negative"
                        )));
                    }
                    sum += q;
                }
                if sum.abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "candidate {k} for state {x} sums to {sum}, not 0"
                    )));
                }
            }
        }
        Ok(Self { space, kind: RateModelKind::FiniteRowSets { rows } })
    }

    /// Row-set model from off-diagonal candidate grids; diagonals are
    /// derived. Used by the document path, where row sums were already
    /// validated in exact rational arithmetic.
    pub fn row_sets_from_off_diagonal(
        space: StateSpace,
        candidates: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = space.len();
        if candidates.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: candidates.len() });
        }
        let mut rows = Vec::with_capacity(n);
        for (x, set) in candidates.into_iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidModel(format!("state {x} has no candidate rows")));
            }
            let mut out = Vec::with_capacity(set.len());
            for (k, mut row) in set.into_iter().enumerate() {
                if row.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: row.len() });
                }
                let mut sum = 0.0;
                for (y, &q) in row.iter().enumerate() {
                    if y == x {
                        if q != 0.0 {
                            return Err(Error::InvalidModel(format!(
                                "candidate {k} for state {x}: diagonal cell must be 0"
                            )));
                        }
                        continue;
                    }
                    if !q.is_finite() || q < 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "candidate {k} for state {x}: entry {y} = {q} is invalid"
                        )));
                    }
                    sum += q;
                }
                row[x] = -sum;
                out.push(row);
            }
            rows.push(out);
        }
        Ok(Self { space, kind: RateModelKind::FiniteRowSets { rows } })
    }

    /// The zero operator (degenerate precise model).
    pub fn zero(space: StateSpace) -> Self {
        let n = space.len();
        let matrix = IntensityMatrix::zero(n).expect("zero matrix is valid");
        Self { space, kind: RateModelKind::Precise(matrix) }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.space.len()
    }

    pub fn kind(&self) -> &RateModelKind {
        &self.kind
    }

    pub fn is_precise(&self) -> bool {
        matches!(self.kind, RateModelKind::Precise(_))
    }

    fn check_dim(&self, f: &Gamble) -> Result<()> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: f.len() });
        }
        Ok(())
    }

    /// (Q f)(x): the row-wise lower envelope evaluation.
    pub fn lower_apply(&self, f: &Gamble) -> Result<Gamble> {
        self.check_dim(f)?;
        let mut out = vec![0.0; self.n()];
        self.lower_apply_into(f.values(), &mut out);
        Gamble::new(out)
    }

    /// (Q̄ f)(x) = −(Q(−f))(x): the row-wise upper envelope.
    pub fn upper_apply(&self, f: &Gamble) -> Result<Gamble> {
        Ok(self.lower_apply(&f.neg())?.neg())
    }

    /// Hot kernel shared by the solver: centered envelope evaluation without
    /// allocation. `f` and `out` must have length `n`.
    ///
    /// Diagonal coefficients always multiply (f(x) − f(x)) = 0, so full rows
    /// are used without branching on y == x.
    pub(crate) fn lower_apply_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n();
        match &self.kind {
            RateModelKind::Precise(m) => {
                for x in 0..n {
                    out[x] = envelope_row(m.row(x), f, f[x]);
                }
            }
            RateModelKind::IntervalRows { lo, hi } => {
                for x in 0..n {
                    out[x] =
                        interval_row(&lo[x * n..(x + 1) * n], &hi[x * n..(x + 1) * n], f, f[x]);
                }
            }
            RateModelKind::FiniteRowSets { rows } => {
                for x in 0..n {
                    out[x] = rowset_min(&rows[x], f, f[x]);
                }
            }
        }
    }

    /// Fused Euler stepping g ← g + Δ·Q g, `steps` times, with the variant
    /// dispatch hoisted out of the loop and small state counts monomorphised
    /// so the inner loops unroll. `g` and `scratch` are both length n and
    /// may be swapped on return.
    pub(crate) fn euler_steps(
        &self,
        g: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
        delta: f64,
        steps: u64,
    ) {
        let n = self.n();
        debug_assert_eq!(g.len(), n);
        debug_assert_eq!(scratch.len(), n);
        macro_rules! dispatch {
            ($kernel:ident $(, $arg:expr)*) => {
                match n {
                    1 => $kernel::<1>($($arg,)* g, delta, steps),
                    2 => $kernel::<2>($($arg,)* g, delta, steps),
                    3 => $kernel::<3>($($arg,)* g, delta, steps),
                    4 => $kernel::<4>($($arg,)* g, delta, steps),
                    5 => $kernel::<5>($($arg,)* g, delta, steps),
                    6 => $kernel::<6>($($arg,)* g, delta, steps),
                    _ => return self.euler_steps_generic(g, scratch, delta, steps),
                }
            };
        }
        match &self.kind {
            RateModelKind::Precise(m) => dispatch!(euler_envelope_fixed, m.entries()),
            RateModelKind::IntervalRows { lo, hi } => dispatch!(euler_interval_fixed, lo, hi),
            RateModelKind::FiniteRowSets { rows } => {
                // Flatten the candidate rows once per call; the kernels then
                // run on contiguous memory.
                let counts: Vec<usize> = rows.iter().map(Vec::len).collect();
                let flat: Vec<f64> =
                    rows.iter().flat_map(|c| c.iter().flatten().copied()).collect();
                dispatch!(euler_rowsets_fixed, &flat, &counts)
            }
        }
    }

    fn euler_steps_generic(
        &self,
        g: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
        delta: f64,
        steps: u64,
    ) {
        let n = self.n();
        match &self.kind {
            RateModelKind::Precise(m) => {
                for _ in 0..steps {
                    for (x, out) in scratch.iter_mut().enumerate() {
                        let fx = g[x];
                        *out = fx + delta * envelope_row(m.row(x), g, fx);
                    }
                    std::mem::swap(g, scratch);
                }
            }
            RateModelKind::IntervalRows { lo, hi } => {
                for _ in 0..steps {
                    for (x, out) in scratch.iter_mut().enumerate() {
                        let fx = g[x];
                        let acc =
                            interval_row(&lo[x * n..(x + 1) * n], &hi[x * n..(x + 1) * n], g, fx);
                        *out = fx + delta * acc;
                    }
                    std::mem::swap(g, scratch);
                }
            }
            RateModelKind::FiniteRowSets { rows } => {
                for _ in 0..steps {
                    for (x, out) in scratch.iter_mut().enumerate() {
                        let fx = g[x];
                        *out = fx + delta * rowset_min(&rows[x], g, fx);
                    }
                    std::mem::swap(g, scratch);
                }
            }
        }
    }

    /// Certified norm bound 2·max_x |Q(1_x)(x)|. For the envelope this is
    /// twice the largest total off-diagonal outflow over all candidate rows.
    pub fn norm_bound(&self) -> RateNormBound {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            let outflow = match &self.kind {
                RateModelKind::Precise(m) => {
                    (0..n).filter(|&y| y != x).map(|y| m.entry(x, y)).sum::<f64>()
                }
                RateModelKind::IntervalRows { hi, .. } => {
                    (0..n).filter(|&y| y != x).map(|y| hi[x * n + y]).sum::<f64>()
                }
                RateModelKind::FiniteRowSets { rows } => rows[x]
                    .iter()
                    .map(|row| {
                        (0..n).filter(|&y| y != x).map(|y| row[y]).sum::<f64>()
                    })
                    .fold(0.0, f64::max),
            };
            worst = worst.max(outflow);
        }
        RateNormBound { value: 2.0 * worst }
    }

    /// The one-step evaluation f ↦ f + Δ·Q f, a lower transition operator
    /// whenever Δ‖Q‖ ≤ 1 (checked against the certified bound).
    pub fn induced_transition_step(&self, delta: f64) -> Result<OperatorEvaluation> {
        let bound = self.norm_bound().value;
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("delta must be finite and >= 0, got {delta}")));
        }
        if delta * bound > 1.0 {
            return Err(Error::InadmissibleStep { delta, bound });
        }
        let model = self.clone();
        Ok(OperatorEvaluation::new(self.n(), true, move |f: &Gamble| {
            let mut qf = vec![0.0; f.len()];
            model.lower_apply_into(f.values(), &mut qf);
            let values = f.values().iter().zip(&qf).map(|(v, q)| v + delta * q).collect();
            Gamble::new(values).expect("finite step")
        }))
    }

    /// Exact sign of Q̄(1_x)(y) for y ≠ x: positive iff some candidate row at
    /// y has a strictly positive rate towards x. This only inspects signs of
    /// non-negative entries, so float comparison against 0 is exact.
    pub(crate) fn upper_edge_positive(&self, y: usize, x: usize) -> bool {
        debug_assert_ne!(y, x);
        let n = self.n();
        match &self.kind {
            RateModelKind::Precise(m) => m.entry(y, x) > 0.0,
            RateModelKind::IntervalRows { hi, .. } => hi[y * n + x] > 0.0,
            RateModelKind::FiniteRowSets { rows } => rows[y].iter().any(|row| row[x] > 0.0),
        }
    }

    /// Exact sign of Q(1_A)(y) for y ∉ A: positive iff every candidate row at
    /// y carries a strictly positive rate into A.
    pub(crate) fn lower_escape_positive(&self, in_set: &[bool], y: usize) -> bool {
        debug_assert!(!in_set[y]);
        let n = self.n();
        match &self.kind {
            RateModelKind::Precise(m) => {
                (0..n).any(|z| z != y && in_set[z] && m.entry(y, z) > 0.0)
            }
            RateModelKind::IntervalRows { lo, .. } => {
                (0..n).any(|z| z != y && in_set[z] && lo[y * n + z] > 0.0)
            }
            RateModelKind::FiniteRowSets { rows } => rows[y]
                .iter()
                .all(|row| (0..n).any(|z| z != y && in_set[z] && row[z] > 0.0)),
        }
    }

    /// All extreme candidate rows at state x, as full rows (diagonal set to
    /// the negated off-diagonal sum). Interval rows expand to the corner
    /// selections, which suffice because the per-row objective is linear.
    pub fn extreme_rows(&self, x: usize) -> Vec<Vec<f64>> {
        let n = self.n();
        match &self.kind {
            RateModelKind::Precise(m) => vec![m.row(x).to_vec()],
            RateModelKind::FiniteRowSets { rows } => rows[x].clone(),
            RateModelKind::IntervalRows { lo, hi } => {
                let free: Vec<usize> = (0..n)
                    .filter(|&y| y != x && lo[x * n + y] < hi[x * n + y])
                    .collect();
                let mut out = Vec::with_capacity(1 << free.len());
                for mask in 0..(1u64 << free.len()) {
                    let mut row = vec![0.0; n];
                    for y in 0..n {
                        if y == x {
                            continue;
                        }
                        row[y] = lo[x * n + y];
                    }
                    for (bit, &y) in free.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            row[y] = hi[x * n + y];
                        }
                    }
                    row[x] = -(0..n).filter(|&y| y != x).map(|y| row[y]).sum::<f64>();
                    out.push(row);
                }
                out
            }
        }
    }
}

#[inline(always)]
fn centered_dot<const N: usize>(row: &[f64], a: &[f64; N], fx: f64) -> f64 {
    // Split accumulators shorten the FMA dependency chain.
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    let mut y = 0;
    while y + 1 < N {
        acc0 += row[y] * (a[y] - fx);
        acc1 += row[y + 1] * (a[y + 1] - fx);
        y += 2;
    }
    if y < N {
        acc0 += row[y] * (a[y] - fx);
    }
    acc0 + acc1
}

fn euler_envelope_fixed<const N: usize>(q: &[f64], g: &mut [f64], delta: f64, steps: u64) {
    let q = &q[..N * N];
    let mut a = [0.0f64; N];
    a.copy_from_slice(&g[..N]);
    for _ in 0..steps {
        let mut b = [0.0f64; N];
        for x in 0..N {
            let fx = a[x];
            b[x] = fx + delta * centered_dot::<N>(&q[x * N..(x + 1) * N], &a, fx);
        }
        a = b;
    }
    g[..N].copy_from_slice(&a);
}

fn euler_interval_fixed<const N: usize>(
    lo: &[f64],
    hi: &[f64],
    g: &mut [f64],
    delta: f64,
    steps: u64,
) {
    let lo = &lo[..N * N];
    let hi = &hi[..N * N];
    let mut a = [0.0f64; N];
    a.copy_from_slice(&g[..N]);
    for _ in 0..steps {
        let mut b = [0.0f64; N];
        for x in 0..N {
            let fx = a[x];
            let mut acc0 = 0.0;
            let mut acc1 = 0.0;
            // lo <= hi makes the minimising term min(lo·d, hi·d), branch-free.
            let mut y = 0;
            while y + 1 < N {
                let d0 = a[y] - fx;
                let d1 = a[y + 1] - fx;
                acc0 += (lo[x * N + y] * d0).min(hi[x * N + y] * d0);
                acc1 += (lo[x * N + y + 1] * d1).min(hi[x * N + y + 1] * d1);
                y += 2;
            }
            if y < N {
                let d = a[y] - fx;
                acc0 += (lo[x * N + y] * d).min(hi[x * N + y] * d);
            }
            b[x] = fx + delta * (acc0 + acc1);
        }
        a = b;
    }
    g[..N].copy_from_slice(&a);
}

fn euler_rowsets_fixed<const N: usize>(
    flat: &[f64],
    counts: &[usize],
    g: &mut [f64],
    delta: f64,
    steps: u64,
) {
    // Row offsets per state into the flattened candidate block.
    let mut offsets = [0usize; N];
    let mut off = 0;
    for x in 0..N {
        offsets[x] = off;
        off += counts[x] * N;
    }
    let mut a = [0.0f64; N];
    a.copy_from_slice(&g[..N]);
    for _ in 0..steps {
        let mut b = [0.0f64; N];
        for x in 0..N {
            let fx = a[x];
            let mut best = f64::INFINITY;
            let block = &flat[offsets[x]..offsets[x] + counts[x] * N];
            for row in block.chunks_exact(N) {
                best = best.min(centered_dot::<N>(row, &a, fx));
            }
            b[x] = fx + delta * best;
        }
        a = b;
    }
    g[..N].copy_from_slice(&a);
}

#[inline(always)]
fn envelope_row(row: &[f64], f: &[f64], fx: f64) -> f64 {
    let mut acc = 0.0;
    for (&q, &fy) in row.iter().zip(f) {
        acc += q * (fy - fx);
    }
    acc
}

#[inline(always)]
fn interval_row(lo: &[f64], hi: &[f64], f: &[f64], fx: f64) -> f64 {
    let mut acc = 0.0;
    for ((&l, &h), &fy) in lo.iter().zip(hi).zip(f) {
        let d = fy - fx;
        acc += (l * d).min(h * d);
    }
    acc
}

#[inline(always)]
fn rowset_min(rows: &[Vec<f64>], f: &[f64], fx: f64) -> f64 {
    let mut best = f64::INFINITY;
    for row in rows {
        best = best.min(envelope_row(row, f, fx));
    }
    best
}

/// Recovers a rate evaluation from a lower transition operator:
/// f ↦ (T f − f) / Δ. The caller certifies that T satisfies L1–L3.
pub fn rate_from_transition(t: &OperatorEvaluation, delta: f64) -> Result<OperatorEvaluation> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("delta must be finite and > 0, got {delta}")));
    }
    let t = t.clone();
    Ok(OperatorEvaluation::new(t.dim(), true, move |f: &Gamble| {
        let tf = t.apply(f).expect("dimension checked by caller");
        let values = tf.values().iter().zip(f.values()).map(|(a, b)| (a - b) / delta).collect();
        Gamble::new(values).expect("finite")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state_interval() -> LowerRateModel {
        // rate(0→1) ∈ [1,2], rate(1→0) ∈ [1,3]
        let space = StateSpace::with_default_labels(2).unwrap();
        LowerRateModel::interval(
            space,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 2.0, 3.0, 0.0],
        )
        .unwrap()
    }

    fn symmetric_precise() -> LowerRateModel {
        let space = StateSpace::with_default_labels(2).unwrap();
        let m = IntensityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        LowerRateModel::precise(space, m).unwrap()
    }

    /// Brute-force envelope over explicit extreme matrices, evaluated with
    /// plain row·f dot products. Independent of the centered kernel.
    fn envelope_by_enumeration(model: &LowerRateModel, f: &Gamble) -> Vec<f64> {
        let n = model.n();
        (0..n)
            .map(|x| {
                model
                    .extreme_rows(x)
                    .iter()
                    .map(|row| row.iter().zip(f.values()).map(|(q, v)| q * v).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn intensity_matrix_validation() {
        assert!(IntensityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).is_ok());
        // negative off-diagonal
        assert!(IntensityMatrix::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]).is_err());
        // row sum off
        assert!(IntensityMatrix::from_rows(&[vec![-1.0, 1.1], vec![1.0, -1.0]]).is_err());
        assert!(IntensityMatrix::new(2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn interval_validation() {
        let space = StateSpace::with_default_labels(2).unwrap();
        // lo > hi
        assert!(LowerRateModel::interval(
            space.clone(),
            vec![0.0, 2.0, 1.0, 0.0],
            vec![0.0, 1.0, 3.0, 0.0]
        )
        .is_err());
        // negative lower bound
        assert!(LowerRateModel::interval(
            space.clone(),
            vec![0.0, -0.5, 1.0, 0.0],
            vec![0.0, 1.0, 3.0, 0.0]
        )
        .is_err());
        // nonzero diagonal cell
        assert!(LowerRateModel::interval(
            space,
            vec![1.0, 1.0, 1.0, 0.0],
            vec![1.0, 2.0, 3.0, 0.0]
        )
        .is_err());
    }

    #[test]
    fn row_sets_validation() {
        let space = StateSpace::with_default_labels(2).unwrap();
        assert!(LowerRateModel::row_sets(space.clone(), vec![vec![], vec![vec![1.0, -1.0]]]).is_err());
        // candidate row sums to 0.1
        assert!(LowerRateModel::row_sets(
            space,
            vec![vec![vec![-1.0, 1.1]], vec![vec![1.0, -1.0]]]
        )
        .is_err());
    }

    #[test]
    fn precise_lower_apply_is_matrix_vector_product() {
        let model = symmetric_precise();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(model.lower_apply(&f).unwrap().values(), &[1.0, -1.0]);
    }

    #[test]
    fn constants_map_to_zero_exactly() {
        for model in [symmetric_precise(), two_state_interval()] {
            for mu in [0.0, 1.0, -3.5, 0.1 + 0.2] {
                let f = Gamble::constant(model.n(), mu).unwrap();
                assert_eq!(model.lower_apply(&f).unwrap().values(), &[0.0, 0.0]);
                assert_eq!(model.upper_apply(&f).unwrap().values(), &[0.0, 0.0]);
            }
        }
    }

    #[test]
    fn interval_envelope_matches_bruteforce_example() {
        let model = two_state_interval();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        // Oracle: enumerate the four extreme matrices.
        let oracle = envelope_by_enumeration(&model, &f);
        assert_eq!(oracle, vec![1.0, -3.0]);
        assert_eq!(model.lower_apply(&f).unwrap().values(), &oracle[..]);
        // Conjugate evaluation.
        assert_eq!(model.upper_apply(&f).unwrap().values()[0], 2.0);
    }

    #[test]
    fn precise_upper_equals_lower() {
        let model = symmetric_precise();
        let f = Gamble::new(vec![0.3, -1.7]).unwrap();
        assert_eq!(
            model.lower_apply(&f).unwrap().values(),
            model.upper_apply(&f).unwrap().values()
        );
    }

    #[test]
    fn norm_bound_examples() {
        let model = symmetric_precise();
        assert_eq!(model.norm_bound().value, 2.0);

        let space = StateSpace::with_default_labels(3).unwrap();
        let zero = LowerRateModel::zero(space);
        assert_eq!(zero.norm_bound().value, 0.0);

        assert_eq!(two_state_interval().norm_bound().value, 6.0);
    }

    #[test]
    fn norm_bound_is_twice_worst_diagonal() {
        // |Q(1_x)(x)| computed through the envelope must equal half the bound
        // at the worst state.
        let model = two_state_interval();
        let mut worst: f64 = 0.0;
        for x in 0..model.n() {
            let ind = Gamble::indicator(model.n(), x).unwrap();
            worst = worst.max(model.lower_apply(&ind).unwrap().values()[x].abs());
        }
        assert_eq!(model.norm_bound().value, 2.0 * worst);
    }

    #[test]
    fn induced_step_examples() {
        let model = symmetric_precise();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();

        let id = model.induced_transition_step(0.0).unwrap();
        assert_eq!(id.apply(&f).unwrap(), f);

        let half = model.induced_transition_step(0.5).unwrap();
        assert_eq!(half.apply(&f).unwrap().values(), &[0.5, 0.5]);

        // Inadmissible step: delta * bound = 1.2 > 1.
        assert!(model.induced_transition_step(0.6).is_err());

        let interval = two_state_interval();
        let step = interval.induced_transition_step(1.0 / 6.0).unwrap();
        let out = step.apply(&f).unwrap();
        assert!((out.values()[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((out.values()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rate_from_transition_examples() {
        let id = OperatorEvaluation::identity(2);
        let q = rate_from_transition(&id, 0.7).unwrap();
        let f = Gamble::new(vec![2.0, -1.0]).unwrap();
        assert_eq!(q.apply(&f).unwrap().values(), &[0.0, 0.0]);

        assert!(rate_from_transition(&id, 0.0).is_err());
        assert!(rate_from_transition(&id, -1.0).is_err());

        // Stochastic matrix [[1,0],[0.5,0.5]] as an evaluation, delta = 1.
        let t = OperatorEvaluation::new(2, true, |f: &Gamble| {
            let v = f.values();
            Gamble::new(vec![v[0], 0.5 * v[0] + 0.5 * v[1]]).unwrap()
        });
        let q = rate_from_transition(&t, 1.0).unwrap();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(q.apply(&f).unwrap().values(), &[0.0, -0.5]);
    }

    #[test]
    fn rate_roundtrip_is_exact_on_dyadic_rates() {
        // Dyadic rates and a dyadic step make the algebraic inverse exact in
        // floating point as well.
        let space = StateSpace::with_default_labels(3).unwrap();
        let m = IntensityMatrix::from_rows(&[
            vec![-0.75, 0.5, 0.25],
            vec![0.5, -1.5, 1.0],
            vec![0.0, 0.25, -0.25],
        ])
        .unwrap();
        let model = LowerRateModel::precise(space, m).unwrap();
        let delta = 0.25;
        let step = model.induced_transition_step(delta).unwrap();
        let recovered = rate_from_transition(&step, delta).unwrap();
        for x in 0..3 {
            let ind = Gamble::indicator(3, x).unwrap();
            assert_eq!(
                recovered.apply(&ind).unwrap().values(),
                model.lower_apply(&ind).unwrap().values()
            );
        }
    }

    #[test]
    fn five_state_interval_corners_match_selection_rule() {
        // The per-row extreme-selection rule against brute force over all
        // 2^(n-1) corner selections per row.
        let space = StateSpace::with_default_labels(5).unwrap();
        let n = 5;
        let mut lo = vec![0.0; n * n];
        let mut hi = vec![0.0; n * n];
        let mut seed: f64 = 0.17;
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    seed = (seed * 97.31).fract();
                    lo[x * n + y] = seed;
                    seed = (seed * 83.17).fract();
                    hi[x * n + y] = lo[x * n + y] + seed;
                }
            }
        }
        let model = LowerRateModel::interval(space, lo, hi).unwrap();
        let f = Gamble::new(vec![0.3, -1.2, 0.8, 0.0, 2.1]).unwrap();
        let got = model.lower_apply(&f).unwrap();
        let brute = envelope_by_enumeration(&model, &f);
        for x in 0..n {
            assert!((got.values()[x] - brute[x]).abs() <= 1e-12, "state {x}");
        }
    }

    #[test]
    fn degenerate_single_state_model() {
        let space = StateSpace::new(["only"]).unwrap();
        let model = LowerRateModel::zero(space);
        let f = Gamble::new(vec![4.2]).unwrap();
        assert_eq!(model.lower_apply(&f).unwrap().values(), &[0.0]);
        assert_eq!(model.norm_bound().value, 0.0);
    }

    fn arb_model() -> impl Strategy<Value = LowerRateModel> {
        (2usize..=4).prop_flat_map(|n| {
            let variant = 0usize..3;
            let rates = proptest::collection::vec(0.0f64..2.0, n * n);
            let rates2 = proptest::collection::vec(0.0f64..2.0, n * n);
            (variant, rates, rates2).prop_map(move |(variant, a, b)| {
                let space = StateSpace::with_default_labels(n).unwrap();
                match variant {
                    0 => {
                        let mut rows = vec![vec![0.0; n]; n];
                        for x in 0..n {
                            let mut sum = 0.0;
                            for y in 0..n {
                                if y != x {
                                    rows[x][y] = a[x * n + y];
                                    sum += a[x * n + y];
                                }
                            }
                            rows[x][x] = -sum;
                        }
                        let m = IntensityMatrix::from_rows(&rows).unwrap();
                        LowerRateModel::precise(space, m).unwrap()
                    }
                    1 => {
                        let mut lo = vec![0.0; n * n];
                        let mut hi = vec![0.0; n * n];
                        for x in 0..n {
                            for y in 0..n {
                                if y != x {
                                    let (p, q) = (a[x * n + y], b[x * n + y]);
                                    lo[x * n + y] = p.min(q);
                                    hi[x * n + y] = p.max(q);
                                }
                            }
                        }
                        LowerRateModel::interval(space, lo, hi).unwrap()
                    }
                    _ => {
                        let mut rows = Vec::with_capacity(n);
                        for x in 0..n {
                            let mut candidates = Vec::new();
                            for src in [&a, &b] {
                                let mut row = vec![0.0; n];
                                let mut sum = 0.0;
                                for y in 0..n {
                                    if y != x {
                                        row[y] = src[x * n + y];
                                        sum += src[x * n + y];
                                    }
                                }
                                row[x] = -sum;
                                candidates.push(row);
                            }
                            rows.push(candidates);
                        }
                        LowerRateModel::row_sets(space, rows).unwrap()
                    }
                }
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // R1-R4 on randomized models and gambles, plus the derived R5-R8.
        #[test]
        fn rate_axioms_hold(
            model in arb_model(),
            fv in proptest::collection::vec(-2.0f64..2.0, 4),
            gv in proptest::collection::vec(-2.0f64..2.0, 4),
            lambda in 0.0f64..3.0,
            mu in -2.0f64..2.0,
        ) {
            let n = model.n();
            let f = Gamble::new(fv[..n].to_vec()).unwrap();
            let g = Gamble::new(gv[..n].to_vec()).unwrap();
            let tol = 1e-10;

            // R1: constants vanish (exactly, by the centered form).
            let qmu = model.lower_apply(&Gamble::constant(n, mu).unwrap()).unwrap();
            prop_assert!(qmu.values().iter().all(|v| *v == 0.0));

            // R2: superadditivity.
            let qf = model.lower_apply(&f).unwrap();
            let qg = model.lower_apply(&g).unwrap();
            let qfg = model.lower_apply(&f.add(&g).unwrap()).unwrap();
            prop_assert!(qfg.dominates(&qf.add(&qg).unwrap(), tol));

            // R3: non-negative homogeneity.
            let qlf = model.lower_apply(&f.scale(lambda)).unwrap();
            prop_assert!(qlf.dist(&qf.scale(lambda)) <= tol * (1.0 + lambda));

            // R4: off-diagonal indicator images are non-negative.
            for y in 0..n {
                let qi = model.lower_apply(&Gamble::indicator(n, y).unwrap()).unwrap();
                for x in 0..n {
                    if x != y {
                        prop_assert!(qi.values()[x] >= 0.0);
                    }
                }
            }

            // R5: Qf <= Q̄f.
            let upper = model.upper_apply(&f).unwrap();
            prop_assert!(upper.dominates(&qf, tol));

            // R6: Q(f + mu) = Q(f).
            let shifted = model.lower_apply(&f.shift(mu)).unwrap();
            prop_assert!(shifted.dist(&qf) <= 1e-9);

            // R7: Q̄(1_x)(x) <= 0.
            for x in 0..n {
                let qi = model.upper_apply(&Gamble::indicator(n, x).unwrap()).unwrap();
                prop_assert!(qi.values()[x] <= 0.0);
            }

            // R8: 2‖f‖·Q(1_x)(x) <= (f(x) − min f)·Q(1_x)(x) <= Q(f)(x).
            let fmin = f.min();
            for x in 0..n {
                let qxx = model.lower_apply(&Gamble::indicator(n, x).unwrap()).unwrap().values()[x];
                let mid = (f.values()[x] - fmin) * qxx;
                prop_assert!(2.0 * f.max_norm() * qxx <= mid + tol);
                prop_assert!(mid <= qf.values()[x] + tol);
            }

            // R9 + N1: ‖Qf‖ <= bound·‖f‖ for the certified bound.
            let bound = model.norm_bound().value;
            prop_assert!(qf.max_norm() <= bound * f.max_norm() + tol);
        }

        // Envelope correctness: the kernel agrees with explicit enumeration
        // of extreme matrices evaluated by plain dot products.
        #[test]
        fn envelope_matches_extreme_enumeration(
            model in arb_model(),
            fv in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let n = model.n();
            let f = Gamble::new(fv[..n].to_vec()).unwrap();
            let expected = envelope_by_enumeration(&model, &f);
            let got = model.lower_apply(&f).unwrap();
            for x in 0..n {
                prop_assert!((got.values()[x] - expected[x]).abs() <= 1e-10);
            }
        }
    }
}
