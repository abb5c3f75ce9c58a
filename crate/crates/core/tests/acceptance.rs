//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines are printed under `cargo test`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use addsvm::kernel::CoordRange;
use addsvm::oracle::{enumeration_train, subgradient_solve, PrimalProblem};
use addsvm::robustness::{bias_check, bif_compare, BiasOptions};
use addsvm::simlab::{lambda_schedule, run_consistency, SimSpec, Variant};
use addsvm::{train, DiscreteMeasure, KernelSpec, LossSpec, SvmModel, TrainOptions};
use common::{bif_instances, random_measure, random_pair};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Median d₀ at n = 3200 must stay below this. Frozen after the first run,
/// which gave 0.5532; the margin only absorbs cross-platform rounding.
const D0_THRESHOLD_3200: f64 = 0.56;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn three_losses() -> [LossSpec; 3] {
    [LossSpec::pinball(0.5).unwrap(), LossSpec::eps_insensitive(0.1).unwrap(), LossSpec::Hinge]
}

/// Gaussian, polynomial and additive (sum) kernels on [0,1]².
fn three_families() -> [KernelSpec; 3] {
    [
        KernelSpec::gaussian(2, 1.0).unwrap(),
        KernelSpec::polynomial(2, 2, 1.0).unwrap(),
        KernelSpec::sum(vec![
            (CoordRange::single(0), KernelSpec::polynomial(1, 2, 1.0).unwrap()),
            (CoordRange::single(1), KernelSpec::gaussian(1, 2.0).unwrap()),
        ])
        .unwrap(),
    ]
}

fn solver_correctness(models: &mut Vec<(SvmModel, DiscreteMeasure)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut exact_gap, mut sub_excess, mut sub_gap, mut kkt): (f64, f64, f64, f64) = (0.0, f64::MIN, 0.0, 0.0);
    let mut ok = true;
    for case in 0..30 {
        let loss = three_losses()[case % 3];
        let kernel = &three_families()[(case / 3) % 3];
        let lambda = [0.01, 0.1, 1.0][(case / 9) % 3];
        let atoms = rng.random_range(1..=6);
        let distinct = rng.random_range(1..=atoms.min(5));
        let p = random_measure(&mut rng, &loss, atoms, distinct, 2);
        let (m, rep) = train(kernel, &loss, &p, lambda, &TrainOptions::default()).unwrap();
        let prob = PrimalProblem::new(kernel, &loss, &p, lambda).unwrap();
        let ours = prob.objective(m.alpha());
        let exact = prob.objective(&enumeration_train(kernel, &loss, &p, lambda).unwrap());
        let sub = prob.objective(&subgradient_solve(&prob, 1_000_000));
        exact_gap = exact_gap.max((ours - exact).abs());
        sub_excess = sub_excess.max(ours - sub);
        sub_gap = sub_gap.max((ours - sub).abs());
        kkt = kkt.max(rep.kkt_residual);
        ok &= (ours - exact).abs() <= 1e-8 && ours <= sub + 1e-8 && rep.kkt_residual <= 1e-6 && rep.converged;
        models.push((m, p));
    }
    outcome(
        ok,
        format!(
            "30 instances; |obj - exact oracle| max {exact_gap:.1e} (tol 1e-8); obj - subgradient oracle max {sub_excess:.1e} \
             (must be <= 1e-8; |diff| max {sub_gap:.1e}); kkt max {kkt:.1e} (tol 1e-6)"
        ),
    )
}

fn closed_form_fit() -> Outcome {
    let k = KernelSpec::gaussian(1, 1.0).unwrap();
    let y = 1.0;
    let p = DiscreteMeasure::dirac(vec![0.3], y).unwrap();
    let mut worst: f64 = 0.0;
    for tau in [0.2, 0.5, 0.8] {
        for lambda in [0.1, 0.5, 2.0] {
            let (m, _) = train(&k, &LossSpec::pinball(tau).unwrap(), &p, lambda, &TrainOptions::default()).unwrap();
            let t = m.predict(&[0.3]).unwrap();
            worst = worst.max((t - f64::min(y, tau / (2.0 * lambda))).abs());
        }
    }
    outcome(worst <= 1e-6, format!("3x3 (tau, lambda) grid; max |t - min(y, tau/(2 lambda))| {worst:.1e} (tol 1e-6)"))
}

fn shifted_coincidence(models: &mut Vec<(SvmModel, DiscreteMeasure)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut pred, mut off): (f64, f64) = (0.0, 0.0);
    for case in 0..10 {
        let loss = three_losses()[case % 3];
        let kernel = &three_families()[case % 3];
        let atoms = rng.random_range(2..=20);
        let distinct = rng.random_range(1..=atoms);
        let p = random_measure(&mut rng, &loss, atoms, distinct, 2);
        let (a, ra) = train(kernel, &loss, &p, 0.05, &TrainOptions::default()).unwrap();
        let unshifted = TrainOptions {
            shifted: false,
            ..TrainOptions::default()
        };
        let (b, rb) = train(kernel, &loss, &p, 0.05, &unshifted).unwrap();
        for x in a.support() {
            pred = pred.max((a.predict(x).unwrap() - b.predict(x).unwrap()).abs());
        }
        let expect: f64 = p.atoms().iter().map(|m| m.w * loss.eval(m.y, 0.0).unwrap()).sum();
        off = off.max((rb.final_objective - ra.final_objective - expect).abs());
        models.push((a, p.clone()));
        models.push((b, p));
    }
    outcome(
        pred <= 1e-6 && off <= 1e-10,
        format!("10 instances; prediction diff max {pred:.1e} (tol 1e-6); objective offset error max {off:.1e} (tol 1e-10)"),
    )
}

fn additive_structure(models: &[(SvmModel, DiscreteMeasure)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut comp, mut norm, mut count): (f64, f64, usize) = (0.0, 0.0, 0);
    for (m, _) in models.iter().filter(|(m, _)| m.kernel().sum_blocks().is_some()) {
        count += 1;
        for _ in 0..100 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            let parts: f64 = m.additive_components(&x).unwrap().iter().sum();
            comp = comp.max((parts - m.predict(&x).unwrap()).abs());
        }
        let split: f64 = m.block_norms_sq().unwrap().iter().sum();
        norm = norm.max((split - m.rkhs_norm_sq()).abs());
    }
    outcome(
        count > 0 && comp <= 1e-12 && norm <= 1e-10,
        format!("{count} additive models; component sum error max {comp:.1e} (tol 1e-12); block norm error max {norm:.1e} (tol 1e-10)"),
    )
}

fn bias_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let opts = BiasOptions::default();
    let (mut rows, mut passed, mut worst_ratio): (usize, usize, f64) = (0, 0, 0.0);
    for pair in 0..20 {
        let kernel = &three_families()[pair % 3];
        let lambda = [0.02, 0.2, 2.0][(pair / 3) % 3];
        for loss in three_losses() {
            let (p, q) = random_pair(&mut rng, &loss, 20);
            let curve = bias_check(kernel, &loss, lambda, &p, &q, &[0.05, 0.1, 0.2, 0.4], &opts).unwrap();
            for r in &curve.rows {
                rows += 1;
                passed += r.pass as usize;
                if r.bound_h > 0.0 {
                    worst_ratio = worst_ratio.max(r.h_norm_diff / r.bound_h).max(r.sup_norm_diff_estimate / r.bound_sup);
                }
            }
        }
    }
    outcome(
        passed == rows,
        format!("{passed}/{rows} rows within both bounds (slack 1e-6*(1+bound)); largest value/bound {worst_ratio:.3}"),
    )
}

fn bif_validation() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for b in bif_instances() {
        let levels = b.p.atoms().len() / b.p.x_marginal().len();
        let r = bif_compare(&b.kernel, b.tau, b.lambda, &b.p, &b.q, &[0.1, 0.03, 0.01], &TrainOptions::default()).unwrap();
        let d: Vec<f64> = r.rows.iter().map(|r| r.distance).collect();
        ok &= levels >= 200 && r.pass() && d[2] < 0.5 * d[0];
        parts.push(format!("[{:.3e} {:.3e} {:.3e}] flags {}", d[0], d[1], d[2], r.flagged.len()));
    }
    outcome(ok, format!("distances at eps 0.1/0.03/0.01: {}", parts.join(", ")))
}

fn consistency_trend() -> Outcome {
    let spec = SimSpec {
        n_grid: vec![200, 800, 3200],
        seeds: (1..=10).collect(),
        variants: vec![Variant::preset("additive-grbf").unwrap()],
        ..SimSpec::default()
    };
    let report = run_consistency(&spec).unwrap();
    let med: Vec<f64> = report.summary.iter().map(|s| s.median_d0).collect();
    let failures = report.failures().count();
    let decreasing = med.windows(2).all(|w| w[1] < w[0]);
    outcome(
        failures == 0 && decreasing && med[2] < D0_THRESHOLD_3200,
        format!(
            "median d0 at n=200/800/3200: {:.4} {:.4} {:.4}; strictly decreasing {decreasing}; threshold {D0_THRESHOLD_3200}; failed cells {failures}",
            med[0], med[1], med[2]
        ),
    )
}

fn schedule_anchor() -> Outcome {
    let v = lambda_schedule(3082, 0.05, 0.45);
    outcome((v - 0.00135).abs() <= 5e-6, format!("lambda(3082) = {v:.7} (target 0.00135 +- 5e-6)"))
}

fn invariant_suites(models: &[(SvmModel, DiscreteMeasure)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut min_eig: f64 = f64::INFINITY;
    for k in three_families().iter().chain(&[KernelSpec::dot(2).unwrap()]) {
        for _ in 0..20 {
            let n = rng.random_range(1..=50);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let g = k.gram(&xs).unwrap();
            let e = DMatrix::from_fn(n, n, |i, j| g.get(i, j)).symmetric_eigenvalues().min();
            min_eig = min_eig.min(e / g.max_abs().max(f64::MIN_POSITIVE));
        }
    }
    let (mut lip, mut sub): (f64, f64) = (f64::MIN, f64::MIN);
    for _ in 0..100_000 {
        let loss = three_losses()[rng.random_range(0..3)];
        let y = if loss == LossSpec::Hinge { [-1.0, 1.0][rng.random_range(0..2)] } else { rng.random_range(-5.0..5.0) };
        let (t, t2) = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
        let (a, b) = (loss.eval(y, t).unwrap(), loss.eval(y, t2).unwrap());
        lip = lip.max((a - b).abs() - loss.lipschitz() * (t - t2).abs());
        let t = if rng.random::<bool>() { loss.kinks(y)[0] } else { t };
        let iv = loss.subgrad_interval(y, t).unwrap();
        let g = iv.lo + rng.random::<f64>() * (iv.hi - iv.lo);
        sub = sub.max(loss.eval(y, t).unwrap() + g * (t2 - t) - loss.eval(y, t2).unwrap());
    }
    let mut wk1a: f64 = f64::MIN;
    let bx = [(0.0, 1.0), (0.0, 1.0)];
    for (m, _) in models {
        let bound = m.kernel().sup_norm_bound(Some(&bx)).unwrap().sup_norm * m.rkhs_norm();
        for _ in 0..1000 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            wk1a = wk1a.max(m.predict(&x).unwrap().abs() - bound);
        }
    }
    outcome(
        min_eig >= -1e-8 && lip <= 1e-12 && sub <= 1e-12 && wk1a <= 1e-9,
        format!(
            "min eigenvalue/max|G| {min_eig:.1e} (>= -1e-8); Lipschitz excess {lip:.1e} (<= 1e-12); \
             subgradient excess {sub:.1e} (<= 1e-12); |f(x)| - ||k|| ||f|| max {wk1a:.1e} over {} models (<= 1e-9)",
            models.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut models = Vec::new();
    let mut all = true;
    let mut run = |id: u32, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(l) = limit {
            o.pass &= took < l;
            o.detail.push_str(&format!("; runtime {:.1}s (limit {}s)", took.as_secs_f64(), l.as_secs()));
        }
        all &= o.pass;
        println!("{} criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let secs = |s| Some(Duration::from_secs(s));
    run(1, "solver correctness", secs(120), &mut || solver_correctness(&mut models));
    run(2, "closed-form fit", secs(10), &mut closed_form_fit);
    run(3, "shifted/unshifted coincidence", None, &mut || shifted_coincidence(&mut models));
    run(4, "additive structure", None, &mut || additive_structure(&models));
    run(5, "bias bound certification", secs(300), &mut bias_certification);
    run(6, "influence function validation", secs(300), &mut bif_validation);
    run(7, "consistency trend", secs(900), &mut consistency_trend);
    run(8, "lambda schedule anchor", None, &mut schedule_anchor);
    run(9, "kernel/loss invariant suites", None, &mut || invariant_suites(&models));
    println!("SKIP criterion 10 rent-standard estimates: dataset unavailable, out of scope");
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
