//! Independent brute-force references used by the test suites.
//!
//! The oracle deliberately uses a different discretisation family from the
//! solver: exact per-slice matrix exponentials composed over
//! piecewise-constant extreme-matrix schedules, instead of the solver's
//! Euler products. Agreement between the two is therefore evidence, not a
//! tautology. Budgets are small by design; this is a test fixture, not a
//! product feature.

use crate::error::{Error, Result};
use crate::gamble::Gamble;
use crate::rates::LowerRateModel;

/// Dense row-major square matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entry is not finite".into()));
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
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

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        DenseMatrix { n, entries: out }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.entries[i * n..(i + 1) * n];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Maximum absolute row sum (the operator norm induced by ‖·‖_∞).
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.entries[i * self.n..(i + 1) * self.n].iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix { n: self.n, entries: self.entries.iter().map(|v| s * v).collect() }
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n);
        DenseMatrix {
            n: self.n,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Largest ‖Qt‖_∞ accepted by [`expm`]; the scaling-and-squaring kernel is
/// accurate to ~1e-10 relative inside this envelope.
pub const EXPM_NORM_ENVELOPE: f64 = 50.0;

/// e^{Qt} by scaling and squaring with a fixed-order Taylor kernel: scale so
/// the norm is at most 1/2, sum the series to order 24, then square back.
pub fn expm(q: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be finite and >= 0, got {t}")));
    }
    let a = q.scale(t);
    let norm = a.inf_norm();
    if norm > EXPM_NORM_ENVELOPE {
        return Err(Error::BudgetExceeded(format!(
            "‖Qt‖ = {norm} exceeds the expm accuracy envelope {EXPM_NORM_ENVELOPE}"
        )));
    }
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let small = a.scale(scale);

    // Taylor series: with ‖small‖ <= 1/2 the order-24 remainder is below
    // 0.5^25 / 25! ~ 1e-33.
    let mut sum = DenseMatrix::identity(q.n());
    let mut term = DenseMatrix::identity(q.n());
    for k in 1..=24 {
        term = term.matmul(&small).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    let mut result = sum;
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

/// Maximum number of extreme matrices [`envelope_bruteforce`] will enumerate.
pub const BRUTEFORCE_MATRIX_BUDGET: usize = 8;
/// Maximum number of time slices per schedule.
pub const BRUTEFORCE_GRID_BUDGET: usize = 6;

/// Componentwise minimum of e^{M_1 Δ} ⋯ e^{M_g Δ} f over all assignments of
/// extreme matrices M_i to the `grid` time slices of length Δ = t/grid.
///
/// Every schedule is an admissible piecewise-constant selection, so the
/// result is a certified upper bound on T_t f that converges to it under
/// grid refinement.
pub fn envelope_bruteforce(
    model: &LowerRateModel,
    f: &Gamble,
    t: f64,
    grid: usize,
) -> Result<Gamble> {
    let n = model.n();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be finite and >= 0, got {t}")));
    }
    if grid == 0 || grid > BRUTEFORCE_GRID_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "grid {grid} outside 1..={BRUTEFORCE_GRID_BUDGET}"
        )));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }

    let matrices = extreme_matrices(model)?;
    let delta = t / grid as f64;
    let slices: Vec<DenseMatrix> = matrices
        .iter()
        .map(|m| expm(m, delta))
        .collect::<Result<_>>()?;

    // Depth-first over schedules, applying slice exponentials to f and
    // taking the componentwise minimum at the leaves. Prefixes are shared
    // across schedules by the recursion.
    let mut best = vec![f64::INFINITY; n];
    fn recurse(slices: &[DenseMatrix], depth: usize, v: &[f64], best: &mut [f64]) {
        if depth == 0 {
            for (b, x) in best.iter_mut().zip(v) {
                *b = b.min(*x);
            }
            return;
        }
        for e in slices {
            let next = e.matvec(v);
            recurse(slices, depth - 1, &next, best);
        }
    }
    recurse(&slices, grid, f.values(), &mut best);
    Gamble::new(best)
}

/// All extreme matrices of the model (one candidate row per state, all
/// combinations), subject to [`BRUTEFORCE_MATRIX_BUDGET`].
pub fn extreme_matrices(model: &LowerRateModel) -> Result<Vec<DenseMatrix>> {
    let n = model.n();
    let per_state: Vec<Vec<Vec<f64>>> = (0..n).map(|x| model.extreme_rows(x)).collect();
    let total: usize = per_state.iter().map(Vec::len).product();
    if total == 0 || total > BRUTEFORCE_MATRIX_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "{total} extreme matrices exceed the budget of {BRUTEFORCE_MATRIX_BUDGET}"
        )));
    }
    let mut out = Vec::with_capacity(total);
    let mut choice = vec![0usize; n];
    loop {
        let mut entries = Vec::with_capacity(n * n);
        for x in 0..n {
            entries.extend_from_slice(&per_state[x][choice[x]]);
        }
        out.push(DenseMatrix::new(n, entries)?);
        // Odometer increment.
        let mut x = 0;
        loop {
            if x == n {
                return Ok(out);
            }
            choice[x] += 1;
            if choice[x] < per_state[x].len() {
                break;
            }
            choice[x] = 0;
            x += 1;
        }
    }
}

/// Sign pattern of T^k for a non-negative matrix T, via boolean matrix
/// powers. Exact for linear operators: no cancellation can occur.
pub fn discrete_power_positivity(t: &DenseMatrix, k: usize) -> Result<Vec<Vec<bool>>> {
    if k == 0 {
        return Err(Error::InvalidInput("power must be >= 1".into()));
    }
    let n = t.n();
    let base: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| t.entry(i, j) > 0.0).collect()).collect();
    let mut acc = base.clone();
    for _ in 1..k {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for l in 0..n {
                if acc[i][l] {
                    for j in 0..n {
                        if base[l][j] {
                            next[i][j] = true;
                        }
                    }
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamble::StateSpace;
    use crate::rates::IntensityMatrix;

    fn symmetric_matrix() -> DenseMatrix {
        DenseMatrix::new(2, vec![-1.0, 1.0, 1.0, -1.0]).unwrap()
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DenseMatrix::new(3, vec![0.0; 9]).unwrap();
        let e = expm(&z, 5.0).unwrap();
        assert_eq!(e, DenseMatrix::identity(3));
    }

    #[test]
    fn expm_matches_two_state_closed_form() {
        // Eigenvalues 0 and -2: e^{Qt} = [[(1+e^{-2t})/2, (1-e^{-2t})/2], ...].
        let q = symmetric_matrix();
        let e = expm(&q, 1.0).unwrap();
        let decay = (-2.0f64).exp();
        let expect = [
            (1.0 + decay) / 2.0,
            (1.0 - decay) / 2.0,
            (1.0 - decay) / 2.0,
            (1.0 + decay) / 2.0,
        ];
        for (got, want) in e.entries().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn expm_of_intensity_matrix_is_stochastic() {
        let q = DenseMatrix::new(
            3,
            vec![-2.0, 1.5, 0.5, 0.3, -0.3, 0.0, 1.0, 1.0, -2.0],
        )
        .unwrap();
        let e = expm(&q, 2.5).unwrap();
        for i in 0..3 {
            let row_sum: f64 = (0..3).map(|j| e.entry(i, j)).sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert!(e.entry(i, j) >= -1e-12);
            }
        }
    }

    #[test]
    fn expm_rejects_norm_outside_envelope() {
        let q = symmetric_matrix();
        assert!(expm(&q, 100.0).is_err());
        assert!(expm(&q, -1.0).is_err());
    }

    #[test]
    fn expm_semigroup_property() {
        let q = DenseMatrix::new(
            3,
            vec![-1.0, 0.4, 0.6, 0.2, -0.2, 0.0, 0.7, 0.3, -1.0],
        )
        .unwrap();
        let a = expm(&q, 1.3).unwrap();
        let b = expm(&q, 0.9).unwrap();
        let ab = a.matmul(&b);
        let direct = expm(&q, 2.2).unwrap();
        for (x, y) in ab.entries().iter().zip(direct.entries()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    fn two_state_interval() -> LowerRateModel {
        let space = StateSpace::with_default_labels(2).unwrap();
        LowerRateModel::interval(
            space,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 2.0, 3.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn bruteforce_on_precise_model_equals_expm() {
        let space = StateSpace::with_default_labels(2).unwrap();
        let m = IntensityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let model = LowerRateModel::precise(space, m).unwrap();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        let brute = envelope_bruteforce(&model, &f, 1.0, 4).unwrap();
        let e = expm(&symmetric_matrix(), 1.0).unwrap();
        let direct = e.matvec(f.values());
        for (a, b) in brute.values().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bruteforce_at_time_zero_returns_f() {
        let model = two_state_interval();
        let f = Gamble::new(vec![0.25, -1.5]).unwrap();
        assert_eq!(envelope_bruteforce(&model, &f, 0.0, 3).unwrap(), f);
    }

    #[test]
    fn bruteforce_grid_refinement_agrees() {
        let model = two_state_interval();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        let coarse = envelope_bruteforce(&model, &f, 5.0, 4).unwrap();
        let fine = envelope_bruteforce(&model, &f, 5.0, 6).unwrap();
        assert!(coarse.dist(&fine) < 5e-3);
        // Refinement can only lower the upper bound.
        assert!(coarse.dominates(&fine, 1e-12));
    }

    #[test]
    fn bruteforce_rejects_budget_violations() {
        let model = two_state_interval();
        let f = Gamble::new(vec![0.0, 1.0]).unwrap();
        assert!(envelope_bruteforce(&model, &f, 1.0, 7).is_err());
        assert!(envelope_bruteforce(&model, &f, 1.0, 0).is_err());

        // 3-state interval model with all bounds free: 4 corners per row,
        // 64 extreme matrices > 8.
        let space = StateSpace::with_default_labels(3).unwrap();
        let mut lo = vec![0.0; 9];
        let mut hi = vec![0.0; 9];
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    lo[x * 3 + y] = 0.5;
                    hi[x * 3 + y] = 1.5;
                }
            }
        }
        let big = LowerRateModel::interval(space, lo, hi).unwrap();
        assert!(envelope_bruteforce(&big, &f.shift(0.0), 1.0, 2).is_err());
    }

    #[test]
    fn positivity_pattern_examples() {
        let id = DenseMatrix::identity(3);
        let p = discrete_power_positivity(&id, 4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p[i][j], i == j);
            }
        }

        // Irreducible aperiodic 2-state chain: all positive at k = 2.
        let t = DenseMatrix::new(2, vec![0.5, 0.5, 1.0, 0.0]).unwrap();
        let p = discrete_power_positivity(&t, 2).unwrap();
        assert!(p.iter().flatten().all(|&b| b));

        // 2-cycle permutation has period 2: identity pattern at k = 2.
        let perm = DenseMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let p = discrete_power_positivity(&perm, 2).unwrap();
        assert_eq!(p, vec![vec![true, false], vec![false, true]]);
    }
}
