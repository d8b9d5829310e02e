//! Seeded random models and gambles for property tests, the selftest
//! battery and the acceptance suite. Everything is deterministic in the
//! seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gamble::{Gamble, StateSpace};
use crate::rates::{IntensityMatrix, LowerRateModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform gamble with entries in [-amplitude, amplitude].
pub fn random_gamble(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> Gamble {
    Gamble::new((0..n).map(|_| rng.gen_range(-amplitude..=amplitude)).collect()).expect("finite")
}

/// Random gamble normalised to unit maximum norm.
pub fn random_unit_gamble(rng: &mut ChaCha8Rng, n: usize) -> Gamble {
    crate::gamble::random_unit_gamble(rng, n)
}

/// Off-diagonal rates: zero with probability `sparsity`, otherwise uniform
/// in [min_rate, max_rate). Sparse zeros make the reachability structure
/// interesting; a positive floor keeps mixing rates commensurate with the
/// norm bound, which behavioural tests rely on.
fn random_rate(rng: &mut ChaCha8Rng, min_rate: f64, max_rate: f64, sparsity: f64) -> f64 {
    if sparsity > 0.0 && rng.gen_range(0.0..1.0) < sparsity {
        0.0
    } else {
        rng.gen_range(min_rate..max_rate)
    }
}

pub fn random_intensity_matrix(
    rng: &mut ChaCha8Rng,
    n: usize,
    max_rate: f64,
    sparsity: f64,
) -> IntensityMatrix {
    random_intensity_matrix_in(rng, n, 0.0, max_rate, sparsity)
}

pub fn random_intensity_matrix_in(
    rng: &mut ChaCha8Rng,
    n: usize,
    min_rate: f64,
    max_rate: f64,
    sparsity: f64,
) -> IntensityMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for x in 0..n {
        let mut sum = 0.0;
        for y in 0..n {
            if y != x {
                let r = random_rate(rng, min_rate, max_rate, sparsity);
                rows[x][y] = r;
                sum += r;
            }
        }
        rows[x][x] = -sum;
    }
    IntensityMatrix::from_rows(&rows).expect("constructed rows are valid")
}

pub fn random_precise(
    rng: &mut ChaCha8Rng,
    n: usize,
    max_rate: f64,
    sparsity: f64,
) -> LowerRateModel {
    random_precise_in(rng, n, 0.0, max_rate, sparsity)
}

pub fn random_precise_in(
    rng: &mut ChaCha8Rng,
    n: usize,
    min_rate: f64,
    max_rate: f64,
    sparsity: f64,
) -> LowerRateModel {
    let space = StateSpace::with_default_labels(n).expect("n >= 1");
    let m = random_intensity_matrix_in(rng, n, min_rate, max_rate, sparsity);
    LowerRateModel::precise(space, m).expect("dimensions agree")
}

pub fn random_interval(
    rng: &mut ChaCha8Rng,
    n: usize,
    max_rate: f64,
    sparsity: f64,
) -> LowerRateModel {
    random_interval_in(rng, n, 0.0, max_rate, sparsity)
}

pub fn random_interval_in(
    rng: &mut ChaCha8Rng,
    n: usize,
    min_rate: f64,
    max_rate: f64,
    sparsity: f64,
) -> LowerRateModel {
    let space = StateSpace::with_default_labels(n).expect("n >= 1");
    let mut lo = vec![0.0; n * n];
    let mut hi = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            if y == x {
                continue;
            }
            let a = random_rate(rng, min_rate, max_rate, sparsity);
            let b = random_rate(rng, min_rate, max_rate, sparsity);
            lo[x * n + y] = a.min(b);
            hi[x * n + y] = a.max(b);
        }
    }
    LowerRateModel::interval(space, lo, hi).expect("bounds are ordered")
}

pub fn random_row_sets(
    rng: &mut ChaCha8Rng,
    n: usize,
    max_rate: f64,
    sparsity: f64,
    candidates: usize,
) -> LowerRateModel {
    random_row_sets_in(rng, n, 0.0, max_rate, sparsity, candidates)
}

pub fn random_row_sets_in(
    rng: &mut ChaCha8Rng,
    n: usize,
    min_rate: f64,
    max_rate: f64,
    sparsity: f64,
    candidates: usize,
) -> LowerRateModel {
    let space = StateSpace::with_default_labels(n).expect("n >= 1");
    let mut rows = Vec::with_capacity(n);
    for x in 0..n {
        let count = rng.gen_range(1..=candidates.max(1));
        let mut set = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = vec![0.0; n];
            let mut sum = 0.0;
            for (y, slot) in row.iter_mut().enumerate() {
                if y != x {
                    let r = random_rate(rng, min_rate, max_rate, sparsity);
                    *slot = r;
                    sum += r;
                }
            }
            row[x] = -sum;
            set.push(row);
        }
        rows.push(set);
    }
    LowerRateModel::row_sets(space, rows).expect("constructed rows are valid")
}

/// One of the three representations, uniformly at random.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    n: usize,
    max_rate: f64,
    sparsity: f64,
) -> LowerRateModel {
    random_model_in(rng, n, 0.0, max_rate, sparsity)
}

/// `random_model` with a positive floor on the nonzero rates.
pub fn random_model_in(
    rng: &mut ChaCha8Rng,
    n: usize,
    min_rate: f64,
    max_rate: f64,
    sparsity: f64,
) -> LowerRateModel {
    match rng.gen_range(0..3) {
        0 => random_precise_in(rng, n, min_rate, max_rate, sparsity),
        1 => random_interval_in(rng, n, min_rate, max_rate, sparsity),
        _ => random_row_sets_in(rng, n, min_rate, max_rate, sparsity, 3),
    }
}
