use ictmc::gamble::{Gamble, StateSpace};
use ictmc::rates::LowerRateModel;
use ictmc::semigroup::TransitionSolver;
use std::time::Instant;

fn main() {
    let space = StateSpace::with_default_labels(2).unwrap();
    let model = LowerRateModel::interval(
        space,
        vec![0.0, 1.0, 1.0, 0.0],
        vec![0.0, 2.0, 3.0, 0.0],
    )
    .unwrap();
    let f = Gamble::new(vec![0.0, 1.0]).unwrap();

    for tol in [1e-6, 1e-8, 1e-9] {
        let solver = TransitionSolver::new(model.clone(), tol, 40).unwrap();
        let start = Instant::now();
        let r = solver.evolve(&f, 1.0).unwrap();
        let dt = start.elapsed();
        println!(
            "tol {tol:>8.0e}: steps {:>12} est {:.3e} time {dt:?}  ({:.1} ns/step incl ladder)",
            r.steps_used,
            r.est_error,
            dt.as_nanos() as f64 / (2 * r.steps_used) as f64,
        );
    }

    // 4-state precise model raw throughput.
    let space = StateSpace::with_default_labels(4).unwrap();
    let mut rows = vec![vec![0.0; 4]; 4];
    let rates = [
        [0.0, 1.3, 0.2, 0.7],
        [0.5, 0.0, 1.9, 0.1],
        [0.0, 0.8, 0.0, 1.1],
        [1.4, 0.3, 0.6, 0.0],
    ];
    for x in 0..4 {
        let mut s = 0.0;
        for y in 0..4 {
            if y != x {
                rows[x][y] = rates[x][y];
                s += rates[x][y];
            }
        }
        rows[x][x] = -s;
    }
    let m = ictmc::rates::IntensityMatrix::from_rows(&rows).unwrap();
    let model4 = LowerRateModel::precise(space, m).unwrap();
    let f4 = Gamble::new(vec![0.1, -0.9, 0.4, 1.0]).unwrap();
    for tol in [1e-7, 1e-9] {
        let solver = TransitionSolver::new(model4.clone(), tol, 40).unwrap();
        let start = Instant::now();
        let r = solver.evolve(&f4, 1.0).unwrap();
        let dt = start.elapsed();
        println!(
            "4-state tol {tol:>8.0e}: steps {:>12} est {:.3e} time {dt:?} ({:.1} ns/step)",
            r.steps_used,
            r.est_error,
            dt.as_nanos() as f64 / (2 * r.steps_used) as f64,
        );
    }
}
