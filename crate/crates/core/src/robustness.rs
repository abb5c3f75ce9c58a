//! Bias bounds and the Bouligand influence function of the SVM map
//! `T: P ↦ f_{L,P,λ}`.
//!
//! For a bounded kernel and a Lipschitz loss, gross-error contamination
//! moves the SVM at most linearly:
//!
//! ```text
//! ‖T((1−ε)P + εQ) − T(P)‖∞ ≤ ε·λ⁻¹‖k‖∞²|L|₁·‖P − Q‖_M
//! ‖T((1−ε)P + εQ) − T(P)‖_H ≤ ε·λ⁻¹‖k‖∞ |L|₁·‖P − Q‖_M
//! ```
//!
//! [`bias_check`] evaluates both sides on concrete measures. For the
//! pinball loss, [`bif_pinball_closed`] builds the closed-form influence
//!
//! ```text
//! (1/2λ) ∫ (P((−∞, f(x)] | x) − τ) Φ(x) P_X(dx) − (1/2λ) ∫ (Q((−∞, f(x)] | x) − τ) Φ(x) Q_X(dx)
//! ```
//!
//! with `f = T(P)`, and [`bif_finite_diff`] the difference quotient it
//! should approximate. The closed form is only valid where the conditional
//! distributions put (asymptotically) no mass near `f(x)`; atoms that sit
//! on the fitted value are flagged rather than trusted.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::loss::LossSpec;
use crate::measure::{vec_key, DiscreteMeasure};
use crate::rng::halton;
use crate::svm::{train, SvmModel, TrainOptions};
use crate::table::{fmt_f64, Table};

/// Distance below which a target atom counts as sitting on the fitted value.
pub const ATOM_COLLISION_TOL: f64 = 1e-9;

/// A finite kernel expansion `Σ_i c_i k(·, p_i)`, i.e. an element of `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct HElement {
    pub points: Vec<Vec<f64>>,
    pub coeffs: Vec<f64>,
    pub kernel: KernelSpec,
}

impl HElement {
    pub fn zero(kernel: KernelSpec) -> Self {
        HElement {
            points: Vec::new(),
            coeffs: Vec::new(),
            kernel,
        }
    }

    pub fn from_model(m: &SvmModel) -> Self {
        HElement {
            points: m.support().to_vec(),
            coeffs: m.alpha().to_vec(),
            kernel: m.kernel().clone(),
        }
    }

    /// `a·self + b·other` on the union of both point sets (`self`'s points
    /// first). Coefficients at shared points are added.
    pub fn combine(&self, a: f64, other: &HElement, b: f64) -> Result<HElement> {
        if self.kernel != other.kernel {
            return Err(Error::input("cannot combine elements of different kernels"));
        }
        let mut index = std::collections::HashMap::new();
        let mut points = Vec::new();
        let mut coeffs: Vec<f64> = Vec::new();
        for (el, s) in [(self, a), (other, b)] {
            for (p, c) in el.points.iter().zip(&el.coeffs) {
                let i = *index.entry(vec_key(p)).or_insert_with(|| {
                    points.push(p.clone());
                    coeffs.push(0.0);
                    points.len() - 1
                });
                coeffs[i] += s * c;
            }
        }
        Ok(HElement {
            points,
            coeffs,
            kernel: self.kernel.clone(),
        })
    }

    pub fn sub(&self, other: &HElement) -> Result<HElement> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scale(&self, s: f64) -> HElement {
        HElement {
            points: self.points.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            kernel: self.kernel.clone(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        Ok(self
            .points
            .iter()
            .zip(&self.coeffs)
            .map(|(p, c)| c * self.kernel.eval_unchecked(x, p))
            .sum())
    }

    /// `‖·‖²_H = cᵀ K c`, clipped at zero.
    pub fn norm_sq(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let g = self.kernel.gram(&self.points).expect("points match kernel");
        g.quad_form(&self.coeffs).max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `max |f(x)|` over the probes and the element's own points.
    pub fn sup_norm_estimate(&self, probes: &[Vec<f64>]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for x in probes.iter().chain(&self.points) {
            m = m.max(self.eval(x)?.abs());
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct BiasOptions {
    pub train: TrainOptions,
    /// Number of quasi-random probe points for the sup-norm estimate.
    pub probes: usize,
    /// Rows pass if `value ≤ bound + slack·(1 + bound)`.
    pub slack: f64,
    /// Domain box for probes and for bounding polynomial kernels. Defaults
    /// to the bounding box of the union of both supports.
    pub domain: Option<Vec<(f64, f64)>>,
}

impl Default for BiasOptions {
    fn default() -> Self {
        BiasOptions {
            train: TrainOptions::default(),
            probes: 10_000,
            slack: 1e-6,
            domain: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasRow {
    pub eps: f64,
    pub h_norm_diff: f64,
    pub sup_norm_diff_estimate: f64,
    pub bound_h: f64,
    pub bound_sup: f64,
    pub converged: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasCurve {
    pub rows: Vec<BiasRow>,
    pub tv_norm: f64,
    pub kernel_bound: f64,
    pub lipschitz: f64,
    pub lambda: f64,
}

impl BiasCurve {
    /// True iff every row converged and satisfies both bounds.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["eps", "h_norm", "sup_norm_est", "bound_h", "bound_sup", "pass"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.eps),
                fmt_f64(r.h_norm_diff),
                fmt_f64(r.sup_norm_diff_estimate),
                fmt_f64(r.bound_h),
                fmt_f64(r.bound_sup),
                if r.pass { "true" } else if r.converged { "false" } else { "not-converged" }.to_string(),
            ]);
        }
        t
    }
}

fn domain_box(p: &DiscreteMeasure, q: &DiscreteMeasure, given: &Option<Vec<(f64, f64)>>) -> Vec<(f64, f64)> {
    match given {
        Some(b) => b.clone(),
        None => p
            .bounding_box()
            .into_iter()
            .zip(q.bounding_box())
            .map(|(a, b)| (a.0.min(b.0), a.1.max(b.1)))
            .collect(),
    }
}

fn probe_points(domain: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    (0..count as u64)
        .map(|i| {
            halton(i, domain.len())
                .into_iter()
                .zip(domain)
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect()
        })
        .collect()
}

fn kernel_bound(kernel: &KernelSpec, domain: &[(f64, f64)]) -> Result<f64> {
    let cert = kernel.sup_norm_bound(Some(domain))?;
    if !cert.is_bounded() {
        return Err(Error::input("bias bounds need a bounded kernel"));
    }
    Ok(cert.sup_norm)
}

/// Checks the gross-error bias bounds for each `ε` in `eps_grid`.
pub fn bias_check(
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda: f64,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    eps_grid: &[f64],
    opts: &BiasOptions,
) -> Result<BiasCurve> {
    let domain = domain_box(p, q, &opts.domain);
    let kb = kernel_bound(kernel, &domain)?;
    let tv = p.tv_norm_diff(q)?;
    let lip = loss.lipschitz();
    let probes = probe_points(&domain, opts.probes);
    let (base, base_rep) = train(kernel, loss, p, lambda, &opts.train)?;
    let base_el = HElement::from_model(&base);

    let rows = eps_grid
        .par_iter()
        .map(|&eps| -> Result<BiasRow> {
            let mixed = p.mix(q, eps)?;
            let (m, rep) = train(kernel, loss, &mixed, lambda, &opts.train)?;
            let diff = HElement::from_model(&m).sub(&base_el)?;
            let h = diff.norm();
            let sup = diff.sup_norm_estimate(&probes)?;
            let bound_h = eps * kb * lip * tv / lambda;
            let bound_sup = eps * kb * kb * lip * tv / lambda;
            let converged = rep.converged && base_rep.converged;
            let pass = converged
                && h <= bound_h + opts.slack * (1.0 + bound_h)
                && sup <= bound_sup + opts.slack * (1.0 + bound_sup);
            Ok(BiasRow {
                eps,
                h_norm_diff: h,
                sup_norm_diff_estimate: sup,
                bound_h,
                bound_sup,
                converged,
                pass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasCurve {
        rows,
        tv_norm: tv,
        kernel_bound: kb,
        lipschitz: lip,
        lambda,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoMeasureBias {
    pub h_norm_diff: f64,
    pub sup_norm_diff_estimate: f64,
    /// `λ⁻¹‖k‖∞|L|₁·‖P − Q‖_M`.
    pub bound_h: f64,
    /// `λ⁻¹‖k‖∞²|L|₁·‖P − Q‖_M`.
    pub bound_sup: f64,
    pub converged: bool,
}

impl TwoMeasureBias {
    pub fn pass(&self, slack: f64) -> bool {
        self.converged
            && self.h_norm_diff <= self.bound_h + slack * (1.0 + self.bound_h)
            && self.sup_norm_diff_estimate <= self.bound_sup + slack * (1.0 + self.bound_sup)
    }
}

/// Compares `T(Q)` with `T(P)` directly.
pub fn two_measure_bias_check(
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda: f64,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    opts: &BiasOptions,
) -> Result<TwoMeasureBias> {
    let domain = domain_box(p, q, &opts.domain);
    let kb = kernel_bound(kernel, &domain)?;
    let tv = p.tv_norm_diff(q)?;
    let lip = loss.lipschitz();
    let (mp, rp) = train(kernel, loss, p, lambda, &opts.train)?;
    let (mq, rq) = train(kernel, loss, q, lambda, &opts.train)?;
    let diff = HElement::from_model(&mq).sub(&HElement::from_model(&mp))?;
    let probes = probe_points(&domain, opts.probes);
    Ok(TwoMeasureBias {
        h_norm_diff: diff.norm(),
        sup_norm_diff_estimate: diff.sup_norm_estimate(&probes)?,
        bound_h: kb * lip * tv / lambda,
        bound_sup: kb * kb * lip * tv / lambda,
        converged: rp.converged && rq.converged,
    })
}

/// Closed-form pinball influence plus the inputs where it is unreliable.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedBif {
    pub element: HElement,
    /// Inputs `u` where some target atom lies within
    /// [`ATOM_COLLISION_TOL`] of `f(u)`.
    pub flagged: Vec<Vec<f64>>,
}

/// Closed-form Bouligand influence function of the pinball SVM at `P` in
/// direction `Q`, as an element of `H` supported on the inputs of `P` and
/// `Q`.
pub fn bif_pinball_closed(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    model_p: &SvmModel,
    tau: f64,
    lambda: f64,
) -> Result<ClosedBif> {
    match model_p.loss() {
        LossSpec::Pinball { tau: t } if *t == tau => {}
        other => {
            return Err(Error::input(format!(
                "closed-form influence needs a pinball({tau}) model, got {other}"
            )))
        }
    }
    if model_p.lambda() != lambda {
        return Err(Error::input(format!(
            "model was trained with lambda {} but {lambda} was given",
            model_p.lambda()
        )));
    }
    if p.input_dim() != model_p.kernel().input_dim() || q.input_dim() != p.input_dim() {
        return Err(Error::input("measure and model dimensions differ"));
    }
    let scale = 1.0 / (2.0 * lambda);
    let mut flagged = Vec::new();
    let mut part = |m: &DiscreteMeasure, sign: f64| -> Result<HElement> {
        let mut el = HElement::zero(model_p.kernel().clone());
        for (u, w) in m.x_marginal() {
            let fu = model_p.predict(&u)?;
            let key = vec_key(&u);
            let collides = m
                .atoms()
                .iter()
                .any(|a| vec_key(&a.x) == key && (a.y - fu).abs() <= ATOM_COLLISION_TOL);
            if collides && !flagged.contains(&u) {
                flagged.push(u.clone());
            }
            let cdf = m.cond_cdf(&u, fu)?;
            el.points.push(u);
            el.coeffs.push(sign * scale * w * (cdf - tau));
        }
        Ok(el)
    };
    let from_p = part(p, 1.0)?;
    let from_q = part(q, -1.0)?;
    Ok(ClosedBif {
        element: from_p.combine(1.0, &from_q, 1.0)?,
        flagged,
    })
}

/// `(T((1−ε)P + εQ) − T(P)) / ε` with `T(P)` given.
pub fn bif_finite_diff_from(
    base: &SvmModel,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    eps: f64,
    opts: &TrainOptions,
) -> Result<HElement> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::input(format!("eps must lie in (0,1), got {eps}")));
    }
    let mixed = p.mix(q, eps)?;
    let (m, rep) = train(base.kernel(), base.loss(), &mixed, base.lambda(), opts)?;
    if !rep.converged {
        return Err(Error::numeric(format!(
            "training on the mixture with eps = {eps} did not converge (gap {:e}, kkt {:e})",
            rep.duality_gap, rep.kkt_residual
        )));
    }
    Ok(HElement::from_model(&m)
        .sub(&HElement::from_model(base))?
        .scale(1.0 / eps))
}

/// `(T((1−ε)P + εQ) − T(P)) / ε`.
pub fn bif_finite_diff(
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda: f64,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    eps: f64,
    opts: &TrainOptions,
) -> Result<HElement> {
    let (base, rep) = train(kernel, loss, p, lambda, opts)?;
    if !rep.converged {
        return Err(Error::numeric("training on P did not converge"));
    }
    bif_finite_diff_from(&base, p, q, eps, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifRow {
    pub eps: f64,
    /// `‖finite difference(ε) − closed form‖_H`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifReport {
    pub rows: Vec<BifRow>,
    pub closed_norm: f64,
    pub flagged: Vec<Vec<f64>>,
}

impl BifReport {
    /// No atom collisions and distances nonincreasing as `ε` decreases
    /// (rows are expected in decreasing `ε` order).
    pub fn pass(&self) -> bool {
        self.flagged.is_empty() && self.rows.windows(2).all(|w| w[1].distance <= w[0].distance)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["eps", "fd_vs_closed_h_norm", "atom_flags"]);
        for r in &self.rows {
            t.push(vec![fmt_f64(r.eps), fmt_f64(r.distance), self.flagged.len().to_string()]);
        }
        t
    }
}

/// Compares finite-difference quotients with the closed-form pinball
/// influence over `eps_list`.
pub fn bif_compare(
    kernel: &KernelSpec,
    tau: f64,
    lambda: f64,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    eps_list: &[f64],
    opts: &TrainOptions,
) -> Result<BifReport> {
    let loss = LossSpec::pinball(tau)?;
    let (base, rep) = train(kernel, &loss, p, lambda, opts)?;
    if !rep.converged {
        return Err(Error::numeric("training on P did not converge"));
    }
    let closed = bif_pinball_closed(p, q, &base, tau, lambda)?;
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let fd = bif_finite_diff_from(&base, p, q, eps, opts)?;
            Ok(BifRow {
                eps,
                distance: fd.sub(&closed.element)?.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BifReport {
        rows,
        closed_norm: closed.element.norm(),
        flagged: closed.flagged,
    })
}

/// Builds a "smooth proxy" measure whose pinball SVM is known exactly.
///
/// Each input `u_i` gets weight `1/n` and a conditional distribution on
/// `2·half_levels` target levels around `f*(u_i) = (Gα*)_i`, spaced `spread /
/// half_levels` apart (none on `f*` itself). Level weights follow the
/// density `d²·exp(−(2d/spread)²)` in the distance `d` to `f*`, which
/// vanishes at the fitted value, and are scaled so that the mass below
/// `f*(u_i)` equals `τ − 2λα*_i·n`. With that mass the optimality
/// condition of the SVM holds at `α*`, so `T(P) = Σ α*_i k(·, u_i)`.
pub fn smooth_proxy(
    kernel: &KernelSpec,
    tau: f64,
    lambda: f64,
    inputs: &[Vec<f64>],
    target_alpha: &[f64],
    half_levels: usize,
    spread: f64,
) -> Result<DiscreteMeasure> {
    if inputs.len() != target_alpha.len() || inputs.is_empty() {
        return Err(Error::input("need one target coefficient per input"));
    }
    if half_levels == 0 || !(spread > 0.0) {
        return Err(Error::input("need at least one level and a positive spread"));
    }
    let g = kernel.gram(inputs)?;
    let fitted = g.mat_vec(target_alpha);
    let n = inputs.len() as f64;
    let dens = |d: f64| d * d * (-(2.0 * d / spread).powi(2)).exp();
    let offsets: Vec<f64> = (1..=half_levels)
        .map(|j| spread * (j as f64 - 0.5) / half_levels as f64)
        .collect();
    let raw: Vec<f64> = offsets.iter().map(|&d| dens(d)).collect();
    let raw_total: f64 = raw.iter().sum();
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (i, u) in inputs.iter().enumerate() {
        let below = tau - 2.0 * lambda * target_alpha[i] * n;
        if !(below > 0.0 && below < 1.0) {
            return Err(Error::input(format!(
                "target coefficient {} at input {i} needs conditional mass {below} below the fit",
                target_alpha[i]
            )));
        }
        for (d, r) in offsets.iter().zip(&raw) {
            pts.push((u.clone(), fitted[i] - d));
            ws.push(below * r / raw_total / n);
            pts.push((u.clone(), fitted[i] + d));
            ws.push((1.0 - below) * r / raw_total / n);
        }
    }
    DiscreteMeasure::from_points(&pts, Some(&ws))
}
