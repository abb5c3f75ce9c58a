//! Training and evaluation of the regularized shifted-risk minimizer
//!
//! ```text
//! f_{L,P,λ} = argmin_{f ∈ H}  Σ_m w_m·L*(y_m, f(x_m)) + λ‖f‖²_H
//! ```
//!
//! over a [`DiscreteMeasure`] `P = Σ_m w_m δ_(x_m, y_m)`.
//!
//! The minimizer lies in the span of `k(·, u_i)` over the distinct inputs
//! `u_1, …, u_n` of `P`, so the model is the coefficient vector `α` with
//! `f = Σ_i α_i k(·, u_i)`. Atoms sharing an input but with different
//! targets share one coefficient and contribute separate loss terms.
//!
//! # Solver
//!
//! Each loss is written as `L(y,t) = max_{s ∈ B(y)} s·(t − y) − ε|s|`
//! (see [`crate::loss`]). Exchanging min and max gives the dual problem in
//! one variable `s_m` per atom,
//!
//! ```text
//! max_s  −Σ_m w_m (s_m y_m + ε|s_m|) − λ·αᵀGα,    α_i = −(1/2λ) Σ_{m: x_m = u_i} w_m s_m,
//! ```
//!
//! a concave quadratic with box constraints and a separable `|s|` term.
//! [`DualSolver`] runs cyclic coordinate ascent on it; every coordinate
//! step maximizes a one-dimensional concave piecewise quadratic exactly
//! (breakpoints at the box ends and at `s = 0`). Unlike coordinate descent
//! on `α` directly, this cannot stall at nonsmooth points, and the duality
//! gap is an exact optimality certificate for the primal `α`.
//!
//! If `G_ii ≤ 1e-15`, the feature vector of `u_i` is the zero element of
//! `H`; its coefficient is pinned to `α_i = 0`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SymMatrix};
use crate::loss::{Interval, LossSpec};
use crate::measure::{vec_key, DiscreteMeasure};

/// Gram diagonal below which a coordinate is treated as the zero feature.
pub const PINNED_DIAGONAL: f64 = 1e-15;

/// Kinks within `KINK_TOL·(1 + |kink|)` of a fitted value count as hit
/// when certifying optimality.
pub const KINK_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Relative duality-gap tolerance: stop once
    /// `gap ≤ tol·(1 + |objective|)`.
    pub tol: f64,
    /// Optimality certificate threshold for `converged`.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Report the shifted (`L*`) objective; otherwise the plain `L` one.
    /// The minimizer is the same either way.
    pub shifted: bool,
    /// Starting dual variables, one per atom (clipped to their boxes).
    pub init_dual: Option<Vec<f64>>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            tol: 1e-10,
            kkt_tol: 1e-6,
            max_sweeps: 100_000,
            shifted: true,
            init_dual: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub sweeps: usize,
    pub final_objective: f64,
    pub kkt_residual: f64,
    pub duality_gap: f64,
    pub converged: bool,
}

/// A trained machine `f = Σ_i α_i k(·, support_i)`.
#[derive(Clone, Debug)]
pub struct SvmModel {
    support: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    kernel: KernelSpec,
    loss: LossSpec,
    lambda: f64,
    objective: f64,
    gram: SymMatrix,
    features: Option<Vec<String>>,
}

/// Atom-level view of a training problem.
struct Problem {
    support: Vec<Vec<f64>>,
    atom_x: Vec<usize>,
    ys: Vec<f64>,
    ws: Vec<f64>,
}

impl Problem {
    fn new(kernel: &KernelSpec, loss: &LossSpec, p: &DiscreteMeasure) -> Result<Self> {
        if kernel.input_dim() != p.input_dim() {
            return Err(Error::input(format!(
                "kernel input dimension {} does not match data dimension {}",
                kernel.input_dim(),
                p.input_dim()
            )));
        }
        let support: Vec<Vec<f64>> = p.x_marginal().into_iter().map(|(x, _)| x).collect();
        let index: HashMap<Vec<u64>, usize> = support
            .iter()
            .enumerate()
            .map(|(i, x)| (vec_key(x), i))
            .collect();
        let mut atom_x = Vec::with_capacity(p.len());
        let mut ys = Vec::with_capacity(p.len());
        let mut ws = Vec::with_capacity(p.len());
        for a in p.atoms() {
            loss.check_target(a.y)?;
            atom_x.push(index[&vec_key(&a.x)]);
            ys.push(a.y);
            ws.push(a.w);
        }
        Ok(Problem {
            support,
            atom_x,
            ys,
            ws,
        })
    }
}

/// Cyclic exact coordinate ascent on the dual problem.
pub struct DualSolver<'g> {
    gram: &'g SymMatrix,
    loss: LossSpec,
    lambda: f64,
    atom_x: Vec<usize>,
    ys: Vec<f64>,
    ws: Vec<f64>,
    s: Vec<f64>,
    alpha: Vec<f64>,
    fitted: Vec<f64>,
    pinned: Vec<bool>,
}

impl<'g> DualSolver<'g> {
    /// `atom_x[m]` is the support index of atom `m`.
    pub fn new(
        gram: &'g SymMatrix,
        loss: LossSpec,
        lambda: f64,
        atom_x: Vec<usize>,
        ys: Vec<f64>,
        ws: Vec<f64>,
        init: Option<&[f64]>,
    ) -> Result<Self> {
        let n = gram.dim();
        if atom_x.len() != ys.len() || ys.len() != ws.len() {
            return Err(Error::input("atom arrays have different lengths"));
        }
        if atom_x.iter().any(|&i| i >= n) {
            return Err(Error::input("atom refers to a support point outside the gram matrix"));
        }
        let s: Vec<f64> = match init {
            Some(v) => {
                if v.len() != ys.len() {
                    return Err(Error::input(format!(
                        "initial dual vector has length {} but there are {} atoms",
                        v.len(),
                        ys.len()
                    )));
                }
                v.iter()
                    .zip(&ys)
                    .map(|(s, y)| {
                        let b = loss.dual_box(*y);
                        s.clamp(b.lo, b.hi)
                    })
                    .collect()
            }
            None => vec![0.0; ys.len()],
        };
        let pinned = (0..n).map(|i| gram.get(i, i) <= PINNED_DIAGONAL).collect();
        let mut solver = DualSolver {
            gram,
            loss,
            lambda,
            atom_x,
            ys,
            ws,
            s,
            alpha: vec![0.0; n],
            fitted: vec![0.0; n],
            pinned,
        };
        solver.rebuild();
        Ok(solver)
    }

    /// Recomputes `α` from the dual variables and `f = Gα` from scratch.
    fn rebuild(&mut self) {
        let scale = -1.0 / (2.0 * self.lambda);
        self.alpha.iter_mut().for_each(|a| *a = 0.0);
        for m in 0..self.s.len() {
            let i = self.atom_x[m];
            if !self.pinned[i] {
                self.alpha[i] += scale * self.ws[m] * self.s[m];
            }
        }
        self.refresh_fitted();
    }

    fn refresh_fitted(&mut self) {
        self.fitted = self.gram.mat_vec(&self.alpha);
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dual(&self) -> &[f64] {
        &self.s
    }

    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    /// Exactly maximizes the dual over coordinate `m`; returns the step.
    pub fn update_coordinate(&mut self, m: usize) -> f64 {
        let i = self.atom_x[m];
        let w = self.ws[m];
        let y = self.ys[m];
        let b = self.loss.dual_box(y);
        let e = self.loss.dual_abs_penalty();
        let s_old = self.s[m];
        // Per-unit-weight objective in the new value z:
        //   (z − s)·c − (q/2)(z − s)² − e|z|,   c = f_i − y,  q = w·G_ii/(2λ).
        let c = self.fitted[i] - y;
        let s_new = if self.pinned[i] {
            // Linear in z: best of the breakpoints, ties to the closest.
            let mut best = s_old;
            let mut best_val = -e * s_old.abs();
            for z in [b.lo, 0.0, b.hi] {
                let val = (z - s_old) * c - e * z.abs();
                if val > best_val || (val == best_val && (z - s_old).abs() < (best - s_old).abs()) {
                    best = z;
                    best_val = val;
                }
            }
            best
        } else {
            let q = w * self.gram.get(i, i) / (2.0 * self.lambda);
            let up = s_old + (c - e) / q;
            let down = s_old + (c + e) / q;
            let z = if up > 0.0 {
                up
            } else if down < 0.0 {
                down
            } else {
                0.0
            };
            z.clamp(b.lo, b.hi)
        };
        let delta = s_new - s_old;
        if delta != 0.0 {
            self.s[m] = s_new;
            if !self.pinned[i] {
                let da = -w * delta / (2.0 * self.lambda);
                self.alpha[i] += da;
                for (f, g) in self.fitted.iter_mut().zip(self.gram.row(i)) {
                    *f += da * g;
                }
            }
        }
        delta
    }

    /// Distance from one-dimensional optimality at coordinate `m`: how far
    /// 0 is from the superdifferential of the dual restricted to `s_m`,
    /// after accounting for active box bounds. Zero right after
    /// [`update_coordinate`](Self::update_coordinate), up to rounding.
    pub fn coordinate_residual(&self, m: usize) -> f64 {
        let i = self.atom_x[m];
        let s = self.s[m];
        let b = self.loss.dual_box(self.ys[m]);
        let e = self.loss.dual_abs_penalty();
        let c = self.fitted[i] - self.ys[m];
        let g = if s > 0.0 {
            Interval::point(c - e)
        } else if s < 0.0 {
            Interval::point(c + e)
        } else {
            Interval { lo: c - e, hi: c + e }
        };
        let at_hi = s >= b.hi;
        let at_lo = s <= b.lo;
        match (at_lo, at_hi) {
            (true, true) => 0.0,
            (false, true) => (-g.hi).max(0.0),
            (true, false) => g.lo.max(0.0),
            (false, false) => g.distance(0.0),
        }
    }

    /// One cyclic pass over all atoms; returns the largest `|step|`.
    pub fn sweep(&mut self) -> f64 {
        (0..self.s.len()).fold(0.0, |acc, m| acc.max(self.update_coordinate(m).abs()))
    }

    /// Primal objective (`shifted` selects `L*`), using the current `f`.
    pub fn primal(&self, shifted: bool) -> f64 {
        let risk: f64 = (0..self.s.len())
            .map(|m| {
                let (y, t) = (self.ys[m], self.fitted[self.atom_x[m]]);
                let l = if shifted {
                    self.loss.shifted_unchecked(y, t)
                } else {
                    self.loss.eval_unchecked(y, t)
                };
                self.ws[m] * l
            })
            .sum();
        risk + self.lambda * dot(&self.alpha, &self.fitted)
    }

    /// Primal minus dual objective, as a sum of nonnegative per-atom
    /// Fenchel–Young gaps.
    pub fn duality_gap(&self) -> f64 {
        let e = self.loss.dual_abs_penalty();
        (0..self.s.len())
            .map(|m| {
                let (y, t, s) = (self.ys[m], self.fitted[self.atom_x[m]], self.s[m]);
                let fy = self.loss.eval_unchecked(y, t) - (s * (t - y) - e * s.abs());
                self.ws[m] * fy.max(0.0)
            })
            .sum()
    }

    /// Largest coordinate-wise KKT violation at the current iterate; see
    /// [`SvmModel::kkt_residual`].
    pub fn kkt_residual(&self) -> f64 {
        kkt_residual(self.gram, &self.loss, self.lambda, &self.atom_x, &self.ys, &self.ws, &self.fitted)
    }

    /// Sweeps until the relative duality gap drops below `opts.tol`, then
    /// keeps tightening the gap target by 100× until the KKT residual is
    /// below `opts.kkt_tol` (an atom can sit within rounding distance of a
    /// kink while the gap is already tiny). Returns `(sweeps, gap)`.
    pub fn run(&mut self, opts: &TrainOptions) -> (usize, f64) {
        let mut tol = opts.tol;
        let (mut sweeps, mut gap) = self.run_to(tol, opts.max_sweeps);
        while sweeps < opts.max_sweeps && tol > 1e-18 && self.kkt_residual() > opts.kkt_tol {
            tol *= 1e-2;
            let (s, g) = self.run_to(tol, opts.max_sweeps - sweeps);
            sweeps += s;
            gap = g;
        }
        (sweeps, gap)
    }

    fn run_to(&mut self, tol: f64, max_sweeps: usize) -> (usize, f64) {
        let mut sweeps = 0;
        let mut gap = self.duality_gap();
        while sweeps < max_sweeps {
            if gap <= tol * (1.0 + self.primal(true).abs()) {
                self.refresh_fitted();
                gap = self.duality_gap();
                if gap <= tol * (1.0 + self.primal(true).abs()) {
                    break;
                }
            }
            let step = self.sweep();
            sweeps += 1;
            if sweeps % 16 == 0 {
                self.refresh_fitted();
            }
            gap = self.duality_gap();
            if step == 0.0 {
                break;
            }
        }
        self.refresh_fitted();
        (sweeps, self.duality_gap())
    }
}

/// Coordinate-wise distance of 0 from the subdifferential of the objective
/// in `α`, maximized over coordinates.
fn kkt_residual(
    gram: &SymMatrix,
    loss: &LossSpec,
    lambda: f64,
    atom_x: &[usize],
    ys: &[f64],
    ws: &[f64],
    fitted: &[f64],
) -> f64 {
    let grads: Vec<(usize, f64, Interval)> = atom_x
        .iter()
        .zip(ys.iter().zip(ws))
        .map(|(&i, (&y, &w))| {
            let tol = y.abs().max(1.0).max(fitted[i].abs()) * KINK_TOL;
            (i, w, loss.subgrad_with_tol(y, fitted[i], tol))
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (j, &fj) in fitted.iter().enumerate().take(gram.dim()) {
        let mut iv = Interval::point(2.0 * lambda * fj);
        let row = gram.row(j);
        for &(i, w, g) in &grads {
            iv = iv.add(g.scale(w * row[i]));
        }
        worst = worst.max(iv.distance(0.0));
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains `f_{L,P,λ}` on `p`.
///
/// Non-convergence is not an error: the model is returned and the report
/// says `converged = false`.
pub fn train(
    kernel: &KernelSpec,
    loss: &LossSpec,
    p: &DiscreteMeasure,
    lambda: f64,
    opts: &TrainOptions,
) -> Result<(SvmModel, TrainReport)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::input(format!("lambda must be positive, got {lambda}")));
    }
    let prob = Problem::new(kernel, loss, p)?;
    let gram = kernel.gram(&prob.support)?;
    let mut solver = DualSolver::new(
        &gram,
        *loss,
        lambda,
        prob.atom_x.clone(),
        prob.ys.clone(),
        prob.ws.clone(),
        opts.init_dual.as_deref(),
    )?;
    let (sweeps, gap) = solver.run(opts);
    let shifted_obj = solver.primal(true);
    let final_objective = if opts.shifted {
        shifted_obj
    } else {
        solver.primal(false)
    };
    if !final_objective.is_finite() {
        return Err(Error::numeric("training produced a non-finite objective"));
    }
    let alpha = solver.alpha().to_vec();
    let model = SvmModel {
        support: prob.support,
        alpha,
        kernel: kernel.clone(),
        loss: *loss,
        lambda,
        objective: shifted_obj,
        gram,
        features: None,
    };
    let kkt = model.kkt_residual(p)?;
    let converged =
        gap <= opts.tol * (1.0 + shifted_obj.abs()) && kkt <= opts.kkt_tol;
    Ok((
        model,
        TrainReport {
            sweeps,
            final_objective,
            kkt_residual: kkt,
            duality_gap: gap,
            converged,
        },
    ))
}

impl SvmModel {
    /// Assembles a model from explicit coefficients. The objective field is
    /// left as NaN; use [`objective_on`](Self::objective_on) to evaluate it.
    pub fn from_parts(
        kernel: KernelSpec,
        loss: LossSpec,
        lambda: f64,
        support: Vec<Vec<f64>>,
        alpha: Vec<f64>,
    ) -> Result<Self> {
        if support.len() != alpha.len() {
            return Err(Error::input(format!(
                "{} support points but {} coefficients",
                support.len(),
                alpha.len()
            )));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::input(format!("lambda must be positive, got {lambda}")));
        }
        let gram = kernel.gram(&support)?;
        Ok(SvmModel {
            support,
            alpha,
            kernel,
            loss,
            lambda,
            objective: f64::NAN,
            gram,
            features: None,
        })
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Shifted regularized objective reached on the training measure.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Input column names, if known.
    pub fn features(&self) -> Option<&[String]> {
        self.features.as_deref()
    }

    /// Attaches input column names (stored in the model file).
    pub fn with_features(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.kernel.input_dim() {
            return Err(Error::input(format!(
                "{} feature names for a kernel of dimension {}",
                names.len(),
                self.kernel.input_dim()
            )));
        }
        self.features = Some(names);
        Ok(self)
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.kernel.sum_blocks() {
            Some(_) => self.components_unchecked(x).iter().sum(),
            None => self
                .support
                .iter()
                .zip(&self.alpha)
                .map(|(u, a)| a * self.kernel.eval_unchecked(x, u))
                .sum(),
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        for x in xs {
            self.kernel.check_point(x)?;
        }
        Ok(xs.par_iter().map(|x| self.predict_unchecked(x)).collect())
    }

    /// `f_j(x_j) = Σ_i α_i k_j(x|block_j, u_i|block_j)` for each block of a
    /// sum kernel. For sum kernels [`predict`](Self::predict) is defined as
    /// the sum of this list.
    pub fn additive_components(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.kernel.sum_blocks().is_none() {
            return Err(Error::input("additive components need a sum kernel"));
        }
        self.kernel.check_point(x)?;
        Ok(self.components_unchecked(x))
    }

    fn components_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let blocks = self.kernel.sum_blocks().expect("sum kernel");
        blocks
            .iter()
            .map(|b| {
                let xb = b.range.slice(x);
                self.support
                    .iter()
                    .zip(&self.alpha)
                    .map(|(u, a)| a * b.kernel.eval_unchecked(xb, b.range.slice(u)))
                    .sum()
            })
            .collect()
    }

    /// `‖f‖²_H = αᵀGα`, clipped at zero.
    pub fn rkhs_norm_sq(&self) -> f64 {
        self.gram.quad_form(&self.alpha).max(0.0)
    }

    pub fn rkhs_norm(&self) -> f64 {
        self.rkhs_norm_sq().sqrt()
    }

    /// `αᵀG_jα` for each block `j` of a sum kernel, where `G_j` is the Gram
    /// matrix of block kernel `k_j`. These sum to `αᵀGα`.
    pub fn block_norms_sq(&self) -> Result<Vec<f64>> {
        let blocks = self
            .kernel
            .sum_blocks()
            .ok_or_else(|| Error::input("block norms need a sum kernel"))?;
        blocks
            .iter()
            .map(|b| {
                let pts: Vec<Vec<f64>> =
                    self.support.iter().map(|u| b.range.slice(u).to_vec()).collect();
                Ok(b.kernel.gram(&pts)?.quad_form(&self.alpha))
            })
            .collect()
    }

    /// Values `(Gα)_i` at the support points.
    pub fn fitted_values(&self) -> Vec<f64> {
        self.gram.mat_vec(&self.alpha)
    }

    /// Regularized objective of this model's coefficients on `p`, with the
    /// shifted or plain loss.
    pub fn objective_on(&self, p: &DiscreteMeasure, shifted: bool) -> Result<f64> {
        let fitted = self.fitted_values();
        let idx = self.support_index(p)?;
        let risk: f64 = p
            .atoms()
            .iter()
            .zip(&idx)
            .map(|(a, &i)| {
                let l = if shifted {
                    self.loss.shifted_unchecked(a.y, fitted[i])
                } else {
                    self.loss.eval_unchecked(a.y, fitted[i])
                };
                a.w * l
            })
            .sum();
        Ok(risk + self.lambda * dot(&self.alpha, &fitted))
    }

    fn support_index(&self, p: &DiscreteMeasure) -> Result<Vec<usize>> {
        let index: HashMap<Vec<u64>, usize> = self
            .support
            .iter()
            .enumerate()
            .map(|(i, x)| (vec_key(x), i))
            .collect();
        p.atoms()
            .iter()
            .map(|a| {
                self.loss.check_target(a.y)?;
                index.get(&vec_key(&a.x)).copied().ok_or_else(|| {
                    Error::input(format!("atom x = {:?} is not a support point of the model", a.x))
                })
            })
            .collect()
    }

    /// Largest coordinate-wise distance of 0 from the subdifferential of
    /// the objective in `α`:
    ///
    /// ```text
    /// ∂_i O(α) = Σ_m w_m·G_{m,i}·∂_t L(y_m, (Gα)_m) + 2λ(Gα)_i
    /// ```
    ///
    /// with interval arithmetic on the subgradient intervals. Kinks within
    /// [`KINK_TOL`] of a fitted value count as hit.
    pub fn kkt_residual(&self, p: &DiscreteMeasure) -> Result<f64> {
        let idx = self.support_index(p)?;
        let ys: Vec<f64> = p.atoms().iter().map(|a| a.y).collect();
        let ws: Vec<f64> = p.atoms().iter().map(|a| a.w).collect();
        let fitted = self.fitted_values();
        Ok(kkt_residual(&self.gram, &self.loss, self.lambda, &idx, &ys, &ws, &fitted))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            kernel: self.kernel.clone(),
            loss: self.loss,
            lambda: self.lambda,
            objective: if self.objective.is_finite() { Some(self.objective) } else { None },
            support: self.support.clone(),
            alpha: self.alpha.clone(),
            features: self.features.clone(),
        };
        serde_json::to_string_pretty(&file)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::numeric(format!("cannot serialize model: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Parses a model file; errors name the offending field.
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| format!("malformed model file: {e}"))?;
        let obj = value
            .as_object()
            .ok_or_else(|| "model file must be a JSON object".to_string())?;
        for key in obj.keys() {
            if !MODEL_FIELDS.contains(&key.as_str()) {
                return Err(format!("unknown field `{key}`"));
            }
        }
        fn field<T: serde::de::DeserializeOwned>(
            obj: &serde_json::Map<String, serde_json::Value>,
            name: &str,
        ) -> std::result::Result<T, String> {
            let v = obj
                .get(name)
                .ok_or_else(|| format!("missing field `{name}`"))?;
            serde_json::from_value(v.clone()).map_err(|e| format!("field `{name}`: {e}"))
        }
        let format: String = field(obj, "format")?;
        if format != MODEL_FORMAT {
            return Err(format!("field `format`: expected `{MODEL_FORMAT}`, got `{format}`"));
        }
        let version: u32 = field(obj, "version")?;
        if version != MODEL_VERSION {
            return Err(format!("field `version`: unsupported version {version}"));
        }
        let kernel: KernelSpec = field(obj, "kernel")?;
        let loss: LossSpec = field(obj, "loss")?;
        let lambda: f64 = field(obj, "lambda")?;
        let support: Vec<Vec<f64>> = field(obj, "support")?;
        let alpha: Vec<f64> = field(obj, "alpha")?;
        let objective: Option<f64> = match obj.get("objective") {
            Some(_) => field(obj, "objective")?,
            None => None,
        };
        if let Some(bad) = support.iter().find(|u| u.len() != kernel.input_dim()) {
            return Err(format!(
                "field `support`: point of dimension {} for a kernel of dimension {}",
                bad.len(),
                kernel.input_dim()
            ));
        }
        if support.len() != alpha.len() {
            return Err(format!(
                "field `alpha`: {} coefficients for {} support points",
                alpha.len(),
                support.len()
            ));
        }
        let mut model = SvmModel::from_parts(kernel, loss, lambda, support, alpha)
            .map_err(|e| format!("field `lambda` or `support`: {e}"))?;
        model.objective = objective.unwrap_or(f64::NAN);
        if obj.contains_key("features") {
            let names: Vec<String> = field(obj, "features")?;
            model = model.with_features(names).map_err(|e| format!("field `features`: {e}"))?;
        }
        Ok(model)
    }
}

const MODEL_FORMAT: &str = "addsvm-model";
const MODEL_VERSION: u32 = 1;
const MODEL_FIELDS: &[&str] = &[
    "format", "version", "kernel", "loss", "lambda", "objective", "support", "alpha", "features",
];

/// On-disk layout of a model file (JSON).
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernel: KernelSpec,
    loss: LossSpec,
    lambda: f64,
    objective: Option<f64>,
    support: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Vec<String>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CoordRange;

    fn single_atom(y: f64) -> DiscreteMeasure {
        DiscreteMeasure::dirac(vec![0.3], y).unwrap()
    }

    fn grbf1(gamma: f64) -> KernelSpec {
        KernelSpec::gaussian(1, gamma).unwrap()
    }

    #[test]
    fn single_atom_pinball_closed_form() {
        // minimize L*(y,t) + λt² with k(x,x) = 1: t* = min(y, τ/(2λ)).
        for (tau, lambda, expect) in [(0.5, 0.1, 1.0), (0.5, 2.0, 0.125)] {
            let loss = LossSpec::pinball(tau).unwrap();
            let (m, rep) = train(&grbf1(1.0), &loss, &single_atom(1.0), lambda, &TrainOptions::default()).unwrap();
            assert!(rep.converged, "{rep:?}");
            assert!((m.predict(&[0.3]).unwrap() - expect).abs() < 1e-12);
            assert!(rep.kkt_residual < 1e-9);
        }
    }

    #[test]
    fn perturbed_optimum_has_large_residual() {
        let loss = LossSpec::pinball(0.5).unwrap();
        let p = single_atom(1.0);
        let (m, _) = train(&grbf1(1.0), &loss, &p, 0.1, &TrainOptions::default()).unwrap();
        let bumped = SvmModel::from_parts(
            m.kernel().clone(),
            loss,
            0.1,
            m.support().to_vec(),
            vec![m.alpha()[0] + 0.1],
        )
        .unwrap();
        assert!(bumped.kkt_residual(&p).unwrap() > 1e-3);
    }

    #[test]
    fn zero_model_predicts_zero() {
        let k = KernelSpec::sum(vec![(CoordRange::single(0), grbf1(1.0)), (CoordRange::single(1), grbf1(2.0))]).unwrap();
        let m = SvmModel::from_parts(k, LossSpec::Hinge, 1.0, vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(m.predict(&[0.4, 0.2]).unwrap(), 0.0);
        assert_eq!(m.additive_components(&[0.4, 0.2]).unwrap(), vec![0.0, 0.0]);
        assert!(m.predict(&[0.4]).is_err());
    }

    #[test]
    fn non_sum_kernel_has_no_components() {
        let m = SvmModel::from_parts(grbf1(1.0), LossSpec::Hinge, 1.0, vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(matches!(m.additive_components(&[0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn dot_kernel_origin_is_pinned() {
        let p = DiscreteMeasure::from_points(&[(vec![0.0], 3.0), (vec![1.0], 2.0)], None).unwrap();
        let (m, rep) = train(&KernelSpec::dot(1).unwrap(), &LossSpec::pinball(0.5).unwrap(), &p, 0.1, &TrainOptions::default()).unwrap();
        assert_eq!(m.alpha()[0], 0.0);
        assert!(rep.converged, "{rep:?}");
    }

    #[test]
    fn input_validation() {
        let p = single_atom(1.0);
        let loss = LossSpec::pinball(0.5).unwrap();
        assert!(train(&grbf1(1.0), &loss, &p, 0.0, &TrainOptions::default()).is_err());
        assert!(train(&KernelSpec::gaussian(2, 1.0).unwrap(), &loss, &p, 1.0, &TrainOptions::default()).is_err());
        assert!(train(&grbf1(1.0), &LossSpec::Hinge, &single_atom(0.5), 1.0, &TrainOptions::default()).is_err());
    }

    #[test]
    fn model_file_round_trip_and_errors() {
        let p = DiscreteMeasure::from_points(
            &[(vec![0.1, 0.2], 1.0), (vec![0.7, 0.3], -2.0), (vec![0.4, 0.9], 0.5)],
            None,
        )
        .unwrap();
        let k = KernelSpec::sum(vec![(CoordRange::single(0), KernelSpec::polynomial(1, 2, 1.0).unwrap()), (CoordRange::single(1), grbf1(2.0))]).unwrap();
        let (m, _) = train(&k, &LossSpec::pinball(0.3).unwrap(), &p, 0.01, &TrainOptions::default()).unwrap();
        let text = m.to_json().unwrap();
        let back = SvmModel::from_json(&text).unwrap();
        assert_eq!(back.alpha(), m.alpha());
        assert_eq!(back.support(), m.support());
        assert_eq!(back.kernel(), m.kernel());
        assert_eq!(back.loss(), m.loss());
        assert_eq!(back.lambda().to_bits(), m.lambda().to_bits());
        for i in 0..100 {
            let x = [i as f64 / 99.0, 1.0 - i as f64 / 137.0];
            assert_eq!(back.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());
        }

        let truncated = &text[..text.len() / 2];
        assert!(SvmModel::from_json(truncated).is_err());
        let bad_tag = text.replace("\"polynomial\"", "\"laplace\"");
        let err = SvmModel::from_json(&bad_tag).unwrap_err();
        assert!(err.contains("laplace") && err.contains("kernel"), "{err}");
        let bad_loss = text.replace("pinball:0.3", "huber:1");
        let err = SvmModel::from_json(&bad_loss).unwrap_err();
        assert!(err.contains("loss") && err.contains("huber"), "{err}");
    }
}
