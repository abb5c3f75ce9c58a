mod common;

use addsvm::oracle::{enumeration_train, PrimalProblem};
use addsvm::{train, TrainOptions};
use common::{kernels, losses, random_measure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn train_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let loss = losses()[case % 4];
        let kernel = &kernels()[(case / 4) % 3];
        let atoms = rng.random_range(1..=5);
        let distinct = rng.random_range(1..=atoms);
        let p = random_measure(&mut rng, &loss, atoms, distinct, 2);
        let lambda = [0.01, 0.1, 1.0][case % 3];
        let (model, rep) = train(kernel, &loss, &p, lambda, &TrainOptions::default()).unwrap();
        let prob = PrimalProblem::new(kernel, &loss, &p, lambda).unwrap();
        let exact = enumeration_train(kernel, &loss, &p, lambda).unwrap();
        let ov = prob.objective(&exact);
        let tv = prob.objective(model.alpha());
        worst = worst.max((tv - ov).abs());
        assert!((tv - ov).abs() <= 1e-8, "case {case}: train {tv} oracle {ov} {rep:?}");
        assert!(rep.converged, "case {case}: {rep:?}");
        assert!(rep.kkt_residual <= 1e-6);
    }
    eprintln!("worst objective gap {worst:e}");
}
