//! Independent reference solvers for tiny training problems.
//!
//! These exist to check [`crate::svm::train`] and share nothing with it
//! beyond kernel evaluation and the loss definitions. Both work directly
//! on the primal objective in `α`:
//!
//! - [`subgradient_train`]: projected subgradient descent with step
//!   `c/√t` for 10⁶ iterations, followed by coordinate-wise grid
//!   refinement. Slow and only approximately optimal; it gives an upper
//!   bound the exact solver must not exceed.
//! - [`enumeration_train`]: exact minimization by enumerating which linear
//!   piece (or kink) of its loss every atom sits on and solving the
//!   resulting equality-constrained quadratic program. Exponential in the
//!   number of atoms, exact up to linear-algebra rounding.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SymMatrix};
use crate::loss::LossSpec;
use crate::measure::{vec_key, DiscreteMeasure};

/// Largest number of atoms [`enumeration_train`] accepts.
pub const MAX_ENUMERATION_ATOMS: usize = 6;

/// Primal problem data: support Gram matrix plus per-atom terms.
pub struct PrimalProblem {
    pub gram: SymMatrix,
    pub atom_x: Vec<usize>,
    pub ys: Vec<f64>,
    pub ws: Vec<f64>,
    pub loss: LossSpec,
    pub lambda: f64,
}

impl PrimalProblem {
    pub fn new(kernel: &KernelSpec, loss: &LossSpec, p: &DiscreteMeasure, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::input("lambda must be positive"));
        }
        let support: Vec<Vec<f64>> = p.x_marginal().into_iter().map(|(x, _)| x).collect();
        let index: HashMap<Vec<u64>, usize> =
            support.iter().enumerate().map(|(i, x)| (vec_key(x), i)).collect();
        let gram = kernel.gram(&support)?;
        let mut atom_x = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for a in p.atoms() {
            loss.check_target(a.y)?;
            atom_x.push(index[&vec_key(&a.x)]);
            ys.push(a.y);
            ws.push(a.w);
        }
        Ok(PrimalProblem {
            gram,
            atom_x,
            ys,
            ws,
            loss: *loss,
            lambda,
        })
    }

    /// `Σ_m w_m L*(y_m, (Gα)_m) + λ αᵀGα`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let f = self.gram.mat_vec(alpha);
        let risk: f64 = self
            .atom_x
            .iter()
            .zip(self.ys.iter().zip(&self.ws))
            .map(|(&i, (&y, &w))| w * (self.loss.eval_unchecked(y, f[i]) - self.loss.eval_unchecked(y, 0.0)))
            .sum();
        let reg: f64 = alpha.iter().zip(&f).map(|(a, b)| a * b).sum();
        risk + self.lambda * reg
    }

    fn h_norm(&self, v: &[f64]) -> f64 {
        self.gram.quad_form(v).max(0.0).sqrt()
    }
}

/// Projected subgradient descent followed by grid refinement; returns the
/// best coefficient vector seen.
pub fn subgradient_train(
    kernel: &KernelSpec,
    loss: &LossSpec,
    p: &DiscreteMeasure,
    lambda: f64,
) -> Result<Vec<f64>> {
    let prob = PrimalProblem::new(kernel, loss, p, lambda)?;
    Ok(subgradient_solve(&prob, 1_000_000))
}

pub fn subgradient_solve(prob: &PrimalProblem, iterations: usize) -> Vec<f64> {
    let n = prob.gram.dim();
    let kmax = (0..n).map(|i| prob.gram.get(i, i)).fold(0.0f64, f64::max).sqrt();
    // λ‖f‖² ≤ −R_{L*}(f) ≤ |L|₁·max_i|f(u_i)| ≤ |L|₁·kmax·‖f‖, so the
    // minimizer lies in the H-ball of this radius.
    let radius = prob.loss.lipschitz() * kmax / prob.lambda;
    let mut alpha = vec![0.0; n];
    let mut best = alpha.clone();
    let mut best_val = prob.objective(&alpha);
    if radius == 0.0 {
        return best;
    }
    let c = 0.5 * radius;
    for t in 1..=iterations {
        let f = prob.gram.mat_vec(&alpha);
        // H-gradient coefficients: Σ_m w_m g_m e_{i(m)} + 2λα.
        let mut r: Vec<f64> = alpha.iter().map(|a| 2.0 * prob.lambda * a).collect();
        for (m, &i) in prob.atom_x.iter().enumerate() {
            let g = prob.loss.subgrad_with_tol(prob.ys[m], f[i], 0.0);
            r[i] += prob.ws[m] * 0.5 * (g.lo + g.hi);
        }
        let rn = prob.h_norm(&r);
        if rn == 0.0 {
            break;
        }
        let step = c / (t as f64).sqrt() / rn;
        alpha.iter_mut().zip(&r).for_each(|(a, g)| *a -= step * g);
        let an = prob.h_norm(&alpha);
        if an > radius {
            let s = radius / an;
            alpha.iter_mut().for_each(|a| *a *= s);
        }
        let val = prob.objective(&alpha);
        if val < best_val {
            best_val = val;
            best.copy_from_slice(&alpha);
        }
    }
    refine(prob, &mut best, &mut best_val, 1e-3 * radius.max(1e-12));
    best
}

/// Coordinate-wise search on a grid that shrinks by 10 each round.
fn refine(prob: &PrimalProblem, alpha: &mut [f64], val: &mut f64, start: f64) {
    let mut h = start;
    for _ in 0..3 {
        for _pass in 0..200 {
            let mut improved = false;
            for i in 0..alpha.len() {
                let base = alpha[i];
                let mut best_k = 0i32;
                for k in (-10i32..=10).filter(|k| *k != 0) {
                    alpha[i] = base + k as f64 * h;
                    let v = prob.objective(alpha);
                    if v < *val {
                        *val = v;
                        best_k = k;
                    }
                }
                alpha[i] = base + best_k as f64 * h;
                improved |= best_k != 0;
            }
            if !improved {
                break;
            }
        }
        h /= 10.0;
    }
}

/// Exact minimizer for problems with at most [`MAX_ENUMERATION_ATOMS`]
/// atoms.
///
/// For every assignment of atoms to an open linear segment or a kink of
/// their loss, the objective restricted to that region is a convex
/// quadratic `λαᵀGα + cᵀGα` with equality constraints `(Gα)_i = kink`.
/// Its KKT system is solved by SVD pseudo-inverse and the true objective
/// is evaluated at the solution. The true minimizer's own assignment yields
/// a point with the same `f = Gα`, so the best candidate is optimal.
pub fn enumeration_train(
    kernel: &KernelSpec,
    loss: &LossSpec,
    p: &DiscreteMeasure,
    lambda: f64,
) -> Result<Vec<f64>> {
    let prob = PrimalProblem::new(kernel, loss, p, lambda)?;
    enumeration_solve(&prob)
}

pub fn enumeration_solve(prob: &PrimalProblem) -> Result<Vec<f64>> {
    let atoms = prob.ys.len();
    if atoms > MAX_ENUMERATION_ATOMS {
        return Err(Error::input(format!(
            "enumeration oracle handles at most {MAX_ENUMERATION_ATOMS} atoms, got {atoms}"
        )));
    }
    let n = prob.gram.dim();
    let kinks: Vec<Vec<f64>> = prob.ys.iter().map(|&y| prob.loss.kinks(y)).collect();
    let slopes: Vec<Vec<f64>> = prob.ys.iter().map(|&y| prob.loss.slopes(y)).collect();
    // Choice j for atom m: even j = 2s is open segment s, odd j = 2k+1 is kink k.
    let choices: Vec<usize> = kinks.iter().map(|k| 2 * k.len() + 1).collect();
    let g = DMatrix::from_fn(n, n, |i, j| prob.gram.get(i, j));

    let mut best = vec![0.0; n];
    let mut best_val = prob.objective(&best);
    let mut pattern = vec![0usize; atoms];
    loop {
        let mut c = DVector::zeros(n);
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for m in 0..atoms {
            let j = pattern[m];
            let i = prob.atom_x[m];
            if j.is_multiple_of(2) {
                c[i] += prob.ws[m] * slopes[m][j / 2];
            } else {
                rows.push((i, kinks[m][j / 2]));
            }
        }
        let r = rows.len();
        let mut kkt = DMatrix::zeros(n + r, n + r);
        let mut rhs = DVector::zeros(n + r);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(&g * (2.0 * prob.lambda)));
        let gc = &g * &c;
        for i in 0..n {
            rhs[i] = -gc[i];
        }
        for (k, &(i, b)) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + k, j)] = g[(i, j)];
                kkt[(j, n + k)] = g[(i, j)];
            }
            rhs[n + k] = b;
        }
        let svd = kkt.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1e-300);
        if let Ok(sol) = svd.solve(&rhs, tol) {
            let alpha: Vec<f64> = (0..n).map(|i| sol[i]).collect();
            if alpha.iter().all(|a| a.is_finite()) {
                let v = prob.objective(&alpha);
                if v < best_val {
                    best_val = v;
                    best = alpha;
                }
            }
        }
        // Next pattern (mixed-radix counter).
        let mut m = 0;
        loop {
            if m == atoms {
                return Ok(best);
            }
            pattern[m] += 1;
            if pattern[m] < choices[m] {
                break;
            }
            pattern[m] = 0;
            m += 1;
        }
    }
}
