//! Simulated consistency study on `[0,1]²` with Cauchy noise.
//!
//! Data follow `y = 7 + 5x₁² + sin(5x₂)cos(17x₂) + s·C` with `x ~ U[0,1]²`
//! and `C` standard Cauchy, so `y` has no mean and only the shifted risk is
//! finite. Each machine is trained with `λₙ = a·n^(−b)` and scored by the
//! `d₀` distance `∫ min{1, |f − g|} dP_X` to the true median function and
//! by held-out pinball risk.
//!
//! Random streams are ChaCha8 keyed by `(seed, purpose)`: training data,
//! test data and Monte-Carlo points each have their own stream. Training
//! sets for the same seed are nested across sample sizes and shared across
//! variants, so trends over `n` are not blurred by fresh draws.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{CoordRange, KernelSpec};
use crate::loss::LossSpec;
use crate::measure::Dataset;
use crate::rng::{stream, Rng};
use crate::svm::{train, SvmModel, TrainOptions};
use crate::table::{fmt_f64, Table};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const MC_STREAM: u64 = 3;

/// Median function of the simulated model.
pub fn true_f(x1: f64, x2: f64) -> f64 {
    7.0 + 5.0 * x1 * x1 + (5.0 * x2).sin() * (17.0 * x2).cos()
}

fn uniform_points(rng: &mut Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
}

fn sample(rng: &mut Rng, n: usize, noise_scale: f64) -> Dataset {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random();
        let x2: f64 = rng.random();
        let u: f64 = rng.random();
        let c = (PI * (u - 0.5)).tan();
        ys.push(true_f(x1, x2) + noise_scale * c);
        xs.push(vec![x1, x2]);
    }
    Dataset {
        feature_names: vec!["x1".into(), "x2".into()],
        target_name: "y".into(),
        xs,
        ys,
    }
}

/// `n` draws of the simulated model. Deterministic in `seed`; for a fixed
/// seed, smaller `n` gives a prefix of larger `n`.
pub fn gen_sim(n: usize, seed: u64, noise_scale: f64) -> Dataset {
    sample(&mut stream(seed, &[TRAIN_STREAM]), n, noise_scale)
}

/// Held-out sample from a stream independent of [`gen_sim`]'s.
pub fn gen_sim_test(n: usize, seed: u64, noise_scale: f64) -> Dataset {
    sample(&mut stream(seed, &[TEST_STREAM]), n, noise_scale)
}

/// `a·n^(−b)`.
pub fn lambda_schedule(n: usize, a: f64, b: f64) -> f64 {
    a * (n as f64).powf(-b)
}

/// Monte-Carlo points `X ~ U[0,1]²` used by [`d0_estimate`].
pub fn mc_points(mc_size: usize, seed: u64) -> Vec<Vec<f64>> {
    uniform_points(&mut stream(seed, &[MC_STREAM]), mc_size)
}

/// `mean(min{1, |f(X) − g(X)|})` over `mc_size` uniform draws.
pub fn d0_estimate(f: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64, mc_size: usize, seed: u64) -> f64 {
    let pts = mc_points(mc_size, seed);
    let fv: Vec<f64> = pts.iter().map(|x| f(x)).collect();
    let gv: Vec<f64> = pts.iter().map(|x| g(x)).collect();
    d0_from_values(&fv, &gv)
}

/// `d₀` from predictions at common points.
pub fn d0_from_values(f: &[f64], g: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    f.iter().zip(g).map(|(a, b)| (a - b).abs().min(1.0)).sum::<f64>() / f.len() as f64
}

/// Mean unshifted loss of `m` on `test`.
pub fn risk_estimate(m: &SvmModel, loss: &LossSpec, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::input("test set is empty"));
    }
    let pred = m.predict_many(&test.xs)?;
    let mut s = 0.0;
    for (y, t) in test.ys.iter().zip(&pred) {
        s += loss.eval(*y, *t)?;
    }
    Ok(s / test.len() as f64)
}

/// A named kernel for the study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VariantRepr", into = "VariantRepr")]
pub struct Variant {
    pub name: String,
    pub kernel: KernelSpec,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum VariantRepr {
    Preset(String),
    Custom { name: String, kernel: KernelSpec },
}

impl TryFrom<VariantRepr> for Variant {
    type Error = String;
    fn try_from(r: VariantRepr) -> std::result::Result<Self, String> {
        match r {
            VariantRepr::Preset(tag) => Variant::preset(&tag).map_err(|e| e.to_string()),
            VariantRepr::Custom { name, kernel } => Ok(Variant { name, kernel }),
        }
    }
}

impl From<Variant> for VariantRepr {
    fn from(v: Variant) -> Self {
        match Variant::preset(&v.name) {
            Ok(p) if p == v => VariantRepr::Preset(v.name),
            _ => VariantRepr::Custom {
                name: v.name,
                kernel: v.kernel,
            },
        }
    }
}

impl Variant {
    pub const PRESETS: [&'static str; 3] = ["grbf", "additive-grbf", "semiparametric"];

    /// `grbf`: Gaussian(γ=2) on ℝ². `additive-grbf`: Gaussian(2) + Gaussian(2)
    /// on the two coordinates. `semiparametric`: Polynomial(2, c=1) on x₁ +
    /// Gaussian(2) on x₂.
    pub fn preset(tag: &str) -> Result<Self> {
        let g1 = || KernelSpec::gaussian(1, 2.0);
        let kernel = match tag {
            "grbf" => KernelSpec::gaussian(2, 2.0)?,
            "additive-grbf" => KernelSpec::sum(vec![(CoordRange::single(0), g1()?), (CoordRange::single(1), g1()?)])?,
            "semiparametric" => KernelSpec::sum(vec![
                (CoordRange::single(0), KernelSpec::polynomial(1, 2, 1.0)?),
                (CoordRange::single(1), g1()?),
            ])?,
            other => {
                return Err(Error::input(format!(
                    "unknown variant `{other}` (expected one of {})",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        Ok(Variant {
            name: tag.to_string(),
            kernel,
        })
    }
}

fn default_n_grid() -> Vec<usize> {
    vec![200, 800, 3200]
}
fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}
fn default_variants() -> Vec<Variant> {
    Variant::PRESETS.iter().map(|t| Variant::preset(t).expect("preset")).collect()
}
fn default_tau() -> f64 {
    0.5
}
fn default_a() -> f64 {
    0.05
}
fn default_b() -> f64 {
    0.45
}
fn default_one() -> f64 {
    1.0
}
fn default_size() -> usize {
    10_000
}
fn default_grid() -> usize {
    41
}
fn default_tol() -> f64 {
    1e-10
}

/// Full description of a consistency run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_a")]
    pub lambda_a: f64,
    #[serde(default = "default_b")]
    pub lambda_b: f64,
    #[serde(default = "default_one")]
    pub noise_scale: f64,
    #[serde(default = "default_size")]
    pub test_size: usize,
    #[serde(default = "default_size")]
    pub mc_size: usize,
    /// Points per axis of the prediction grid.
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Relative duality-gap tolerance for training.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_grid: default_n_grid(),
            seeds: default_seeds(),
            variants: default_variants(),
            tau: default_tau(),
            lambda_a: default_a(),
            lambda_b: default_b(),
            noise_scale: default_one(),
            test_size: default_size(),
            mc_size: default_size(),
            grid_size: default_grid(),
            tol: default_tol(),
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::input(format!("`{field}`: {msg}")));
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid", "needs at least one positive sample size".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "needs at least one seed".into());
        }
        if self.variants.is_empty() {
            return bad("variants", "needs at least one variant".into());
        }
        for v in &self.variants {
            if v.kernel.input_dim() != 2 {
                return bad("variants", format!("kernel of `{}` must have input dimension 2", v.name));
            }
        }
        if let Err(e) = LossSpec::pinball(self.tau) {
            return bad("tau", e.to_string());
        }
        if !(self.lambda_a.is_finite() && self.lambda_a > 0.0) {
            return bad("lambda_a", format!("must be positive, got {}", self.lambda_a));
        }
        if !self.lambda_b.is_finite() {
            return bad("lambda_b", "must be finite".into());
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad("noise_scale", format!("must be nonnegative, got {}", self.noise_scale));
        }
        if self.test_size == 0 || self.mc_size == 0 {
            return bad("test_size/mc_size", "must be positive".into());
        }
        if self.grid_size < 2 {
            return bad("grid_size", "must be at least 2".into());
        }
        if !(self.tol > 0.0) {
            return bad("tol", "must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SimSpec = toml::from_str(text).map_err(|e| Error::input(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn lambda(&self, n: usize) -> f64 {
        lambda_schedule(n, self.lambda_a, self.lambda_b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendRow {
    pub variant: String,
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub d0: f64,
    pub test_risk: f64,
    pub sweeps: usize,
    /// `ok`, `not-converged`, or `error: …`.
    pub status: String,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub n: usize,
    pub median_d0: f64,
    pub median_test_risk: f64,
    pub ok_runs: usize,
    pub runs: usize,
}

/// Predictions of one variant's machine on the evaluation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionGrid {
    pub variant: String,
    pub n: usize,
    pub seed: u64,
    /// Rows `(x1, x2, prediction, true_f, components…)`.
    pub rows: Vec<Vec<f64>>,
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub rows: Vec<TrendRow>,
    pub summary: Vec<SummaryRow>,
    pub grids: Vec<PredictionGrid>,
}

impl ConsistencyReport {
    pub fn trend_table(&self) -> Table {
        let mut t = Table::new(["variant", "n", "seed", "lambda", "d0", "test_risk", "sweeps", "status"]);
        for r in &self.rows {
            t.push(vec![
                r.variant.clone(),
                r.n.to_string(),
                r.seed.to_string(),
                fmt_f64(r.lambda),
                fmt_f64(r.d0),
                fmt_f64(r.test_risk),
                r.sweeps.to_string(),
                r.status.clone(),
            ]);
        }
        t
    }

    pub fn timings_table(&self) -> Table {
        let mut t = Table::new(["variant", "n", "seed", "train_seconds"]);
        for r in &self.rows {
            t.push(vec![r.variant.clone(), r.n.to_string(), r.seed.to_string(), format!("{:.3}", r.train_seconds)]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["variant", "n", "median_d0", "median_test_risk", "ok_runs", "runs"]);
        for s in &self.summary {
            t.push(vec![
                s.variant.clone(),
                s.n.to_string(),
                fmt_f64(s.median_d0),
                fmt_f64(s.median_test_risk),
                s.ok_runs.to_string(),
                s.runs.to_string(),
            ]);
        }
        t
    }

    pub fn grid_table(g: &PredictionGrid) -> Table {
        let mut header = vec!["x1".to_string(), "x2".into(), "prediction".into(), "true_f".into()];
        header.extend((1..=g.components).map(|j| format!("component_{j}")));
        let mut t = Table::new(header);
        for r in &g.rows {
            t.push(r.iter().map(|v| fmt_f64(*v)).collect());
        }
        t
    }

    /// Writes `trend.csv`, `summary.csv`, `timings.csv` and
    /// `grid_<variant>.csv` into `dir`. All but the timings are
    /// byte-identical across reruns.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.trend_table().write(dir.join("trend.csv"))?;
        self.summary_table().write(dir.join("summary.csv"))?;
        self.timings_table().write(dir.join("timings.csv"))?;
        for g in &self.grids {
            Self::grid_table(g).write(dir.join(format!("grid_{}.csv", g.variant)))?;
        }
        Ok(())
    }

    /// Rows that did not train cleanly.
    pub fn failures(&self) -> impl Iterator<Item = &TrendRow> {
        self.rows.iter().filter(|r| r.status != "ok")
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn grid_points(size: usize) -> Vec<Vec<f64>> {
    let step = 1.0 / (size - 1) as f64;
    let mut pts = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            pts.push(vec![i as f64 * step, j as f64 * step]);
        }
    }
    pts
}

struct Cell {
    row: TrendRow,
    model: Option<SvmModel>,
}

fn run_cell(spec: &SimSpec, variant: &Variant, n: usize, seed: u64, keep: bool) -> Cell {
    let lambda = spec.lambda(n);
    let loss = LossSpec::Pinball { tau: spec.tau };
    let mut row = TrendRow {
        variant: variant.name.clone(),
        n,
        seed,
        lambda,
        d0: f64::NAN,
        test_risk: f64::NAN,
        sweeps: 0,
        status: "ok".into(),
        train_seconds: 0.0,
    };
    let opts = TrainOptions {
        tol: spec.tol,
        ..TrainOptions::default()
    };
    let outcome = (|| -> Result<SvmModel> {
        let p = gen_sim(n, seed, spec.noise_scale).to_measure()?;
        let start = Instant::now();
        let (m, rep) = train(&variant.kernel, &loss, &p, lambda, &opts)?;
        row.train_seconds = start.elapsed().as_secs_f64();
        row.sweeps = rep.sweeps;
        if !rep.converged {
            row.status = "not-converged".into();
        }
        let pts = mc_points(spec.mc_size, seed);
        let pred = m.predict_many(&pts)?;
        let truth: Vec<f64> = pts.iter().map(|x| true_f(x[0], x[1])).collect();
        row.d0 = d0_from_values(&pred, &truth);
        row.test_risk = risk_estimate(&m, &loss, &gen_sim_test(spec.test_size, seed, spec.noise_scale))?;
        Ok(m)
    })();
    match outcome {
        Ok(m) => Cell {
            row,
            model: keep.then_some(m),
        },
        Err(e) => {
            row.status = format!("error: {e}");
            Cell { row, model: None }
        }
    }
}

/// Runs every `(variant, n, seed)` cell, in parallel, and assembles the
/// tables in spec order. Training failures are recorded in the row status.
pub fn run_consistency(spec: &SimSpec) -> Result<ConsistencyReport> {
    spec.validate()?;
    let n_max = *spec.n_grid.iter().max().expect("validated");
    let first_seed = spec.seeds[0];
    let jobs: Vec<(&Variant, usize, u64)> = spec
        .variants
        .iter()
        .flat_map(|v| spec.n_grid.iter().flat_map(move |&n| spec.seeds.iter().map(move |&s| (v, n, s))))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(v, n, s)| run_cell(spec, v, n, s, n == n_max && s == first_seed))
        .collect();

    let mut summary = Vec::new();
    for v in &spec.variants {
        let mut by_n: BTreeMap<usize, Vec<&TrendRow>> = BTreeMap::new();
        for c in cells.iter().filter(|c| c.row.variant == v.name) {
            by_n.entry(c.row.n).or_default().push(&c.row);
        }
        for &n in &spec.n_grid {
            let Some(rows) = by_n.remove(&n) else { continue };
            let ok: Vec<&&TrendRow> = rows.iter().filter(|r| r.status == "ok").collect();
            summary.push(SummaryRow {
                variant: v.name.clone(),
                n,
                median_d0: median(&ok.iter().map(|r| r.d0).collect::<Vec<_>>()),
                median_test_risk: median(&ok.iter().map(|r| r.test_risk).collect::<Vec<_>>()),
                ok_runs: ok.len(),
                runs: rows.len(),
            });
        }
    }

    let pts = grid_points(spec.grid_size);
    let mut grids = Vec::new();
    for c in &cells {
        let Some(m) = &c.model else { continue };
        let pred = m.predict_many(&pts)?;
        let components = m.kernel().sum_blocks().map_or(0, |b| b.len());
        let rows = pts
            .iter()
            .zip(&pred)
            .map(|(x, f)| {
                let mut r = vec![x[0], x[1], *f, true_f(x[0], x[1])];
                if components > 0 {
                    r.extend(m.additive_components(x)?);
                }
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        grids.push(PredictionGrid {
            variant: c.row.variant.clone(),
            n: c.row.n,
            seed: c.row.seed,
            rows,
            components,
        });
    }

    Ok(ConsistencyReport {
        rows: cells.into_iter().map(|c| c.row).collect(),
        summary,
        grids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_function_values() {
        assert_eq!(true_f(0.0, 0.0), 7.0);
        assert_eq!(true_f(1.0, 0.0), 12.0);
        for i in 0..=1000 {
            let x2 = i as f64 / 100.0 - 5.0;
            assert!((true_f(0.3, x2) - true_f(0.3, 0.0)).abs() <= 1.0);
        }
    }

    #[test]
    fn generator_is_deterministic_and_nested() {
        let a = gen_sim(50, 7, 1.0);
        assert_eq!(a, gen_sim(50, 7, 1.0));
        let b = gen_sim(80, 7, 1.0);
        assert_eq!(a.xs[..], b.xs[..50]);
        assert_ne!(a, gen_sim(50, 8, 1.0));
        let clean = gen_sim(100, 3, 0.0);
        for (x, y) in clean.xs.iter().zip(&clean.ys) {
            assert_eq!(*y, true_f(x[0], x[1]));
            assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn cauchy_noise_has_zero_median() {
        let d = gen_sim(100_000, 11, 1.0);
        let r: Vec<f64> = d.xs.iter().zip(&d.ys).map(|(x, y)| y - true_f(x[0], x[1])).collect();
        assert!(median(&r).abs() < 0.02, "{}", median(&r));
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lambda_schedule(1, 0.05, 0.45), 0.05);
        assert!((lambda_schedule(3082, 0.05, 0.45) - 0.00135).abs() < 5e-6);
        let v: Vec<f64> = [500, 2000, 10000]
            .iter()
            .map(|&n| lambda_schedule(n, 0.05, 0.45).powi(2) * n as f64)
            .collect();
        assert!(v[0] < v[1] && v[1] < v[2]);
    }

    #[test]
    fn d0_examples() {
        let g = |x: &[f64]| x[0] + 2.0 * x[1];
        assert_eq!(d0_estimate(g, g, 1000, 1), 0.0);
        assert_eq!(d0_estimate(|x| g(x) + 5.0, g, 1000, 1), 1.0);
        assert!((d0_estimate(|x| g(x) + 0.5, g, 1000, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn presets_and_spec_parsing() {
        for t in Variant::PRESETS {
            assert_eq!(Variant::preset(t).unwrap().kernel.input_dim(), 2);
        }
        assert!(Variant::preset("cubic").is_err());
        let s = SimSpec::from_toml("n_grid = [100]\nseeds = [1]\nvariants = [\"additive-grbf\"]\n").unwrap();
        assert_eq!(s.variants[0], Variant::preset("additive-grbf").unwrap());
        assert_eq!(s.tau, 0.5);
        let custom = "variants = [{ name = \"g1\", kernel = { type = \"gaussian\", gamma = 1.0, input_dim = 2 } }]";
        let s = SimSpec::from_toml(custom).unwrap();
        assert_eq!(s.variants[0].kernel, KernelSpec::gaussian(2, 1.0).unwrap());
        let back = toml::to_string(&s).unwrap();
        assert_eq!(SimSpec::from_toml(&back).unwrap(), s);
        assert!(SimSpec::from_toml("n_grid = [0]").is_err());
        assert!(SimSpec::from_toml("tau = 1.5").is_err());
        assert!(SimSpec::from_toml("bogus = 1").is_err());
    }
}
