#![allow(dead_code)]

use addsvm::kernel::CoordRange;
use addsvm::{DiscreteMeasure, KernelSpec, LossSpec};
use rand::Rng;

pub fn losses() -> Vec<LossSpec> {
    vec![
        LossSpec::pinball(0.5).unwrap(),
        LossSpec::pinball(0.8).unwrap(),
        LossSpec::eps_insensitive(0.1).unwrap(),
        LossSpec::Hinge,
    ]
}

/// Gaussian, additive (sum of a polynomial and a Gaussian), and dot kernels
/// on [0,1]².
pub fn kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::gaussian(2, 1.0).unwrap(),
        KernelSpec::sum(vec![
            (CoordRange::single(0), KernelSpec::polynomial(1, 2, 1.0).unwrap()),
            (CoordRange::single(1), KernelSpec::gaussian(1, 2.0).unwrap()),
        ])
        .unwrap(),
        KernelSpec::dot(2).unwrap(),
    ]
}

/// Random measure on [0,1]² with `atoms` atoms over at most `distinct_x`
/// inputs. Hinge targets are ±1, other targets lie in [-3, 3].
pub fn random_measure<R: Rng>(rng: &mut R, loss: &LossSpec, atoms: usize, distinct_x: usize, dim: usize) -> DiscreteMeasure {
    let xs: Vec<Vec<f64>> = (0..distinct_x)
        .map(|_| (0..dim).map(|_| (rng.random::<f64>() * 100.0).round() / 100.0).collect())
        .collect();
    let pts: Vec<(Vec<f64>, f64)> = (0..atoms)
        .map(|m| {
            let x = xs[if m < distinct_x { m } else { rng.random_range(0..distinct_x) }].clone();
            let y = if *loss == LossSpec::Hinge {
                if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                ((rng.random::<f64>() * 6.0 - 3.0) * 100.0).round() / 100.0
            };
            (x, y)
        })
        .collect();
    let w: Vec<f64> = (0..atoms).map(|_| 0.2 + rng.random::<f64>()).collect();
    DiscreteMeasure::from_points(&pts, Some(&w)).unwrap()
}

pub struct BifInstance {
    pub kernel: KernelSpec,
    pub tau: f64,
    pub lambda: f64,
    pub p: DiscreteMeasure,
    pub q: DiscreteMeasure,
}

/// Smooth-proxy measures with known SVM plus a point-mass contamination
/// whose target sits far from the fit.
pub fn bif_instances() -> Vec<BifInstance> {
    use addsvm::robustness::smooth_proxy;
    let g2 = KernelSpec::gaussian(2, 1.0).unwrap();
    let additive = KernelSpec::sum(vec![
        (CoordRange::single(0), KernelSpec::gaussian(1, 1.0).unwrap()),
        (CoordRange::single(1), KernelSpec::gaussian(1, 1.0).unwrap()),
    ])
    .unwrap();
    let narrow = KernelSpec::gaussian(2, 0.5).unwrap();
    // (kernel, tau, lambda, inputs, alpha, q_input, q_shift)
    type Setup = (KernelSpec, f64, f64, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64);
    let setups: Vec<Setup> = vec![
        (
            g2,
            0.5,
            0.1,
            vec![vec![0.1, 0.2], vec![0.7, 0.3], vec![0.4, 0.8], vec![0.9, 0.9], vec![0.2, 0.6]],
            vec![0.2, -0.1, 0.3, 0.05, -0.2],
            vec![0.5, 0.5],
            4.0,
        ),
        (
            additive,
            0.3,
            0.2,
            vec![vec![0.0, 0.1], vec![0.3, 0.9], vec![0.5, 0.4], vec![0.8, 0.2], vec![1.0, 0.7], vec![0.6, 0.6]],
            vec![0.05, -0.1, 0.08, 0.0, -0.05, 0.1],
            vec![0.3, 0.3],
            -4.0,
        ),
        (
            narrow,
            0.7,
            0.05,
            vec![vec![0.2, 0.2], vec![0.8, 0.2], vec![0.5, 0.7], vec![0.1, 0.9]],
            vec![0.5, 0.3, -0.4, 0.2],
            vec![0.8, 0.2],
            5.0,
        ),
    ];
    setups
        .into_iter()
        .map(|(kernel, tau, lambda, inputs, alpha, qx, qshift)| {
            let p = smooth_proxy(&kernel, tau, lambda, &inputs, &alpha, 100, 1.0).unwrap();
            let f: f64 = inputs.iter().zip(&alpha).map(|(u, a)| a * kernel.eval(u, &qx).unwrap()).sum();
            let q = DiscreteMeasure::dirac(qx, f + qshift).unwrap();
            BifInstance { kernel, tau, lambda, p, q }
        })
        .collect()
}

/// Random `(P, Q)` pair on a 0.1-grid of `[0,1]²` with at most `max_atoms`
/// atoms each. `Q` shares some atoms with `P` and adds gross outliers.
pub fn random_pair<R: Rng>(rng: &mut R, loss: &LossSpec, max_atoms: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let grid = |rng: &mut R| (rng.random_range(0..=10) as f64) / 10.0;
    let target = |rng: &mut R, scale: f64| {
        if *loss == LossSpec::Hinge {
            if rng.random::<bool>() { 1.0 } else { -1.0 }
        } else {
            ((rng.random::<f64>() * 2.0 - 1.0) * scale * 100.0).round() / 100.0
        }
    };
    let np = rng.random_range(1..=max_atoms);
    let p_pts: Vec<(Vec<f64>, f64)> = (0..np).map(|_| (vec![grid(rng), grid(rng)], target(rng, 3.0))).collect();
    let nq = rng.random_range(1..=max_atoms);
    let q_pts: Vec<(Vec<f64>, f64)> = (0..nq)
        .map(|_| {
            if rng.random::<f64>() < 0.3 {
                p_pts[rng.random_range(0..np)].clone()
            } else {
                (vec![grid(rng), grid(rng)], target(rng, 50.0))
            }
        })
        .collect();
    let wp: Vec<f64> = (0..np).map(|_| 0.1 + rng.random::<f64>()).collect();
    let wq: Vec<f64> = (0..nq).map(|_| 0.1 + rng.random::<f64>()).collect();
    (
        DiscreteMeasure::from_points(&p_pts, Some(&wp)).unwrap(),
        DiscreteMeasure::from_points(&q_pts, Some(&wq)).unwrap(),
    )
}
