// probe: objective depth vs iterations on a perfect-donor instance
use mosc_core::solver::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    for seed in [10u64, 11, 12, 13, 14] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = 8; let cols = 4;
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5));
        let b = a.column(2).into_owned();
        for (tol, mi) in [(1e-10, 100000usize), (1e-16, 100000), (0.0_f64.max(1e-300), 100000)] {
            let w = solve_simplex_ls(&a, &b, tol, mi).unwrap();
            let rmspe = (w.objective / rows as f64).sqrt();
            println!("seed {seed} tol {tol:.0e}: obj {:.3e} rmspe {:.3e} iters {} conv {} w2 {:.9}",
                w.objective, rmspe, w.iterations, w.converged, w.weights[2]);
        }
    }
}
