//! Kernel functions on `ℝ^d` and their block-wise compositions.
//!
//! A [`KernelSpec`] is an immutable, validated description of a kernel.
//! Composite kernels split the input vector into contiguous coordinate
//! blocks `X = X₁ × … × X_s` and combine one kernel per block, either by
//! summation (the additive-model construction, whose RKHS consists of
//! functions `f₁(x₁) + … + f_s(x_s)`) or by multiplication.
//!
//! # Serialized form
//!
//! Kernels serialize as tagged objects (JSON in model files, TOML in
//! configuration files):
//!
//! ```json
//! {"type": "gaussian", "gamma": 2.0, "input_dim": 1}
//! {"type": "polynomial", "degree": 2, "offset": 1.0, "input_dim": 1}
//! {"type": "dot", "input_dim": 3}
//! {"type": "sum", "blocks": [
//!     {"range": [0, 0], "kernel": {"type": "polynomial", "degree": 2, "offset": 1.0, "input_dim": 1}},
//!     {"range": [1, 1], "kernel": {"type": "gaussian", "gamma": 2.0, "input_dim": 1}}
//! ]}
//! ```
//!
//! `range` is an inclusive pair of coordinate indices. `product` uses the
//! same shape as `sum`. The input dimension of a composite is implied by
//! its blocks, which must be disjoint and cover `0..input_dim`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive range of coordinate indices `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoordRange {
    pub start: usize,
    pub end: usize,
}

impl CoordRange {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end < start {
            return Err(Error::input(format!(
                "coordinate range [{start},{end}] is empty"
            )));
        }
        Ok(CoordRange { start, end })
    }

    pub fn single(index: usize) -> Self {
        CoordRange {
            start: index,
            end: index,
        }
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn slice<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.start..=self.end]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub range: CoordRange,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    /// `exp(-‖x - x'‖² / γ²)`.
    Gaussian { gamma: f64 },
    /// `(⟨x, x'⟩ + c)^m` with integer `m ≥ 1` and `c ≥ 0`.
    Polynomial { degree: u32, offset: f64 },
    /// `⟨x, x'⟩`.
    Dot,
    Sum(Vec<Block>),
    Product(Vec<Block>),
}

/// Validated kernel description. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct KernelSpec {
    kind: KernelKind,
    input_dim: usize,
}

impl KernelSpec {
    pub fn gaussian(input_dim: usize, gamma: f64) -> Result<Self> {
        check_dim(input_dim)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!(
                "gaussian gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(KernelSpec {
            kind: KernelKind::Gaussian { gamma },
            input_dim,
        })
    }

    pub fn polynomial(input_dim: usize, degree: u32, offset: f64) -> Result<Self> {
        check_dim(input_dim)?;
        if degree < 1 {
            return Err(Error::input("polynomial degree must be at least 1"));
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(Error::input(format!(
                "polynomial offset must be nonnegative and finite, got {offset}"
            )));
        }
        Ok(KernelSpec {
            kind: KernelKind::Polynomial { degree, offset },
            input_dim,
        })
    }

    pub fn dot(input_dim: usize) -> Result<Self> {
        check_dim(input_dim)?;
        Ok(KernelSpec {
            kind: KernelKind::Dot,
            input_dim,
        })
    }

    /// Sum kernel `k(x,x') = Σⱼ kⱼ(x|blockⱼ, x'|blockⱼ)`.
    pub fn sum(blocks: Vec<(CoordRange, KernelSpec)>) -> Result<Self> {
        let (blocks, input_dim) = check_blocks(blocks)?;
        Ok(KernelSpec {
            kind: KernelKind::Sum(blocks),
            input_dim,
        })
    }

    /// Product kernel `k(x,x') = Πⱼ kⱼ(x|blockⱼ, x'|blockⱼ)`.
    pub fn product(blocks: Vec<(CoordRange, KernelSpec)>) -> Result<Self> {
        let (blocks, input_dim) = check_blocks(blocks)?;
        Ok(KernelSpec {
            kind: KernelKind::Product(blocks),
            input_dim,
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Blocks of a sum kernel, `None` for every other variant.
    pub fn sum_blocks(&self) -> Option<&[Block]> {
        match &self.kind {
            KernelKind::Sum(blocks) => Some(blocks),
            _ => None,
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::input(format!(
                "point has dimension {} but kernel expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x2)?;
        Ok(self.eval_unchecked(x, x2))
    }

    /// Evaluation without dimension checks; callers guarantee both slices
    /// have length `input_dim`.
    pub fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::Gaussian { gamma } => {
                let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (gamma * gamma)).exp()
            }
            KernelKind::Polynomial { degree, offset } => {
                (inner(x, x2) + offset).powi(*degree as i32)
            }
            KernelKind::Dot => inner(x, x2),
            KernelKind::Sum(blocks) => blocks
                .iter()
                .map(|b| b.kernel.eval_unchecked(b.range.slice(x), b.range.slice(x2)))
                .sum(),
            KernelKind::Product(blocks) => blocks
                .iter()
                .map(|b| b.kernel.eval_unchecked(b.range.slice(x), b.range.slice(x2)))
                .product(),
        }
    }

    /// Gram matrix over `points`. Entries are computed independently on the
    /// upper triangle and mirrored, so the result is exactly symmetric and
    /// does not depend on thread scheduling.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<SymMatrix> {
        if points.is_empty() {
            return Err(Error::input("gram matrix needs at least one point"));
        }
        for p in points {
            self.check_point(p)?;
        }
        let n = points.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                (i..n)
                    .map(|j| self.eval_unchecked(&points[i], &points[j]))
                    .collect()
            })
            .collect();
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        let m = SymMatrix { n, data };
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("gram matrix has non-finite entries"));
        }
        Ok(m)
    }

    /// Upper bound on `‖k‖∞ = sup_x sqrt(k(x,x))` over `domain`.
    ///
    /// The Gaussian kernel is bounded by 1 everywhere. Polynomial and dot
    /// kernels are only bounded on bounded sets; without a box the
    /// certificate is unbounded (`sup_norm == +∞`).
    pub fn sup_norm_bound(&self, domain: Option<&[(f64, f64)]>) -> Result<BoundCertificate> {
        if let Some(b) = domain {
            if b.len() != self.input_dim {
                return Err(Error::input(format!(
                    "box has {} coordinates but kernel expects {}",
                    b.len(),
                    self.input_dim
                )));
            }
            if b.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
                return Err(Error::input("box bounds must be finite with lo <= hi"));
            }
        }
        Ok(BoundCertificate {
            sup_norm: self.sup_norm_inner(domain),
            domain_box: domain.map(|b| b.to_vec()),
        })
    }

    fn sup_norm_inner(&self, domain: Option<&[(f64, f64)]>) -> f64 {
        let radius_sq = |b: &[(f64, f64)]| -> f64 {
            b.iter()
                .map(|(lo, hi)| (lo * lo).max(hi * hi))
                .sum::<f64>()
        };
        match &self.kind {
            KernelKind::Gaussian { .. } => 1.0,
            KernelKind::Polynomial { degree, offset } => match domain {
                Some(b) => (radius_sq(b) + offset).powi(*degree as i32).sqrt(),
                None => f64::INFINITY,
            },
            KernelKind::Dot => match domain {
                Some(b) => radius_sq(b).sqrt(),
                None => f64::INFINITY,
            },
            KernelKind::Sum(blocks) => blocks
                .iter()
                .map(|blk| {
                    let sub = domain.map(|d| &d[blk.range.start..=blk.range.end]);
                    let b = blk.kernel.sup_norm_inner(sub);
                    b * b
                })
                .sum::<f64>()
                .sqrt(),
            KernelKind::Product(blocks) => blocks
                .iter()
                .map(|blk| {
                    let sub = domain.map(|d| &d[blk.range.start..=blk.range.end]);
                    blk.kernel.sup_norm_inner(sub)
                })
                .product(),
        }
    }

    /// One-line human readable description, used by `kernel-info`.
    pub fn describe(&self) -> String {
        match &self.kind {
            KernelKind::Gaussian { gamma } => format!("gaussian(gamma={gamma}, dim={})", self.input_dim),
            KernelKind::Polynomial { degree, offset } => {
                format!("polynomial(degree={degree}, offset={offset}, dim={})", self.input_dim)
            }
            KernelKind::Dot => format!("dot(dim={})", self.input_dim),
            KernelKind::Sum(blocks) | KernelKind::Product(blocks) => {
                let op = if matches!(self.kind, KernelKind::Sum(_)) { "sum" } else { "product" };
                let parts: Vec<String> = blocks
                    .iter()
                    .map(|b| format!("[{},{}] {}", b.range.start, b.range.end, b.kernel.describe()))
                    .collect();
                format!("{op}{{{}}}", parts.join("; "))
            }
        }
    }
}

fn inner(x: &[f64], x2: &[f64]) -> f64 {
    x.iter().zip(x2).map(|(a, b)| a * b).sum()
}

fn check_dim(input_dim: usize) -> Result<()> {
    if input_dim == 0 {
        return Err(Error::input("kernel input dimension must be positive"));
    }
    Ok(())
}

fn check_blocks(mut blocks: Vec<(CoordRange, KernelSpec)>) -> Result<(Vec<Block>, usize)> {
    if blocks.is_empty() {
        return Err(Error::input("composite kernel needs at least one block"));
    }
    for (range, k) in &blocks {
        if range.end < range.start {
            return Err(Error::input(format!(
                "coordinate range [{},{}] is empty",
                range.start, range.end
            )));
        }
        if range.len() != k.input_dim {
            return Err(Error::input(format!(
                "block [{},{}] has {} coordinates but its kernel expects {}",
                range.start,
                range.end,
                range.len(),
                k.input_dim
            )));
        }
    }
    // Blocks keep their given order for evaluation; coverage is checked on a
    // sorted copy of the ranges.
    let mut ranges: Vec<CoordRange> = blocks.iter().map(|(r, _)| *r).collect();
    ranges.sort_by_key(|r| r.start);
    let mut next = 0usize;
    for r in &ranges {
        if r.start < next {
            return Err(Error::input(format!(
                "block ranges overlap at coordinate {}",
                r.start
            )));
        }
        if r.start > next {
            return Err(Error::input(format!(
                "block ranges do not cover coordinate {next}"
            )));
        }
        next = r.end + 1;
    }
    let input_dim = next;
    let blocks = blocks
        .drain(..)
        .map(|(range, kernel)| Block { range, kernel })
        .collect();
    Ok((blocks, input_dim))
}

/// Certified upper bound on `sup_x sqrt(k(x,x))`, possibly `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub sup_norm: f64,
    pub domain_box: Option<Vec<(f64, f64)>>,
}

impl BoundCertificate {
    pub fn is_bounded(&self) -> bool {
        self.sup_norm.is_finite()
    }
}

/// Dense symmetric matrix in row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.mat_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum KernelRepr {
    Gaussian {
        gamma: f64,
        input_dim: usize,
    },
    Polynomial {
        degree: u32,
        offset: f64,
        input_dim: usize,
    },
    Dot {
        input_dim: usize,
    },
    Sum {
        blocks: Vec<BlockRepr>,
    },
    Product {
        blocks: Vec<BlockRepr>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRepr {
    range: [usize; 2],
    kernel: KernelSpec,
}

impl TryFrom<KernelRepr> for KernelSpec {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        let blocks = |bs: Vec<BlockRepr>| -> Result<Vec<(CoordRange, KernelSpec)>> {
            bs.into_iter()
                .map(|b| Ok((CoordRange::new(b.range[0], b.range[1])?, b.kernel)))
                .collect()
        };
        match r {
            KernelRepr::Gaussian { gamma, input_dim } => KernelSpec::gaussian(input_dim, gamma),
            KernelRepr::Polynomial {
                degree,
                offset,
                input_dim,
            } => KernelSpec::polynomial(input_dim, degree, offset),
            KernelRepr::Dot { input_dim } => KernelSpec::dot(input_dim),
            KernelRepr::Sum { blocks: bs } => KernelSpec::sum(blocks(bs)?),
            KernelRepr::Product { blocks: bs } => KernelSpec::product(blocks(bs)?),
        }
    }
}

impl From<KernelSpec> for KernelRepr {
    fn from(k: KernelSpec) -> Self {
        let blocks = |bs: Vec<Block>| -> Vec<BlockRepr> {
            bs.into_iter()
                .map(|b| BlockRepr {
                    range: [b.range.start, b.range.end],
                    kernel: b.kernel,
                })
                .collect()
        };
        match k.kind {
            KernelKind::Gaussian { gamma } => KernelRepr::Gaussian {
                gamma,
                input_dim: k.input_dim,
            },
            KernelKind::Polynomial { degree, offset } => KernelRepr::Polynomial {
                degree,
                offset,
                input_dim: k.input_dim,
            },
            KernelKind::Dot => KernelRepr::Dot {
                input_dim: k.input_dim,
            },
            KernelKind::Sum(bs) => KernelRepr::Sum { blocks: blocks(bs) },
            KernelKind::Product(bs) => KernelRepr::Product { blocks: blocks(bs) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grbf(gamma: f64) -> KernelSpec {
        KernelSpec::gaussian(1, gamma).unwrap()
    }

    #[test]
    fn gaussian_values() {
        let k = grbf(2.0);
        assert_eq!(k.eval(&[0.3], &[0.3]).unwrap(), 1.0);
        let v = k.eval(&[0.0], &[2.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn sum_of_gaussian_and_dot() {
        let k = KernelSpec::sum(vec![
            (CoordRange::single(0), grbf(1.0)),
            (CoordRange::single(1), KernelSpec::dot(1).unwrap()),
        ])
        .unwrap();
        assert_eq!(k.input_dim(), 2);
        assert_eq!(k.eval(&[0.0, 3.0], &[0.0, 2.0]).unwrap(), 7.0);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let k = grbf(1.0);
        assert!(matches!(k.eval(&[0.0, 1.0], &[0.0]), Err(Error::Input(_))));
        assert!(matches!(k.gram(&[vec![0.0], vec![1.0, 2.0]]), Err(Error::Input(_))));
        assert!(k.gram(&[]).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let g = grbf(1.0).gram(&[vec![0.4]]).unwrap();
        assert_eq!(g.to_rows(), vec![vec![1.0]]);
        let g = KernelSpec::dot(2)
            .unwrap()
            .gram(&[vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap();
        assert_eq!(g.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn sup_norm_certificates() {
        assert_eq!(KernelSpec::gaussian(3, 0.5).unwrap().sup_norm_bound(None).unwrap().sup_norm, 1.0);
        let dot = KernelSpec::dot(2).unwrap();
        let c = dot.sup_norm_bound(Some(&[(0.0, 1.0), (0.0, 1.0)])).unwrap();
        assert!((c.sup_norm - 2f64.sqrt()).abs() < 1e-15);
        assert!(!dot.sup_norm_bound(None).unwrap().is_bounded());
        let s = KernelSpec::sum(vec![
            (CoordRange::single(0), grbf(1.0)),
            (CoordRange::single(1), grbf(3.0)),
        ])
        .unwrap();
        assert!((s.sup_norm_bound(None).unwrap().sup_norm - 2f64.sqrt()).abs() < 1e-15);
        let p = KernelSpec::polynomial(1, 2, 1.0).unwrap();
        // (1 + 1)^2 = 4 at the corner x = ±1.
        let c = p.sup_norm_bound(Some(&[(-1.0, 0.5)])).unwrap();
        assert_eq!(c.sup_norm, 2.0);
    }

    #[test]
    fn block_validation() {
        let ok = KernelSpec::sum(vec![
            (CoordRange::single(0), KernelSpec::polynomial(1, 2, 1.0).unwrap()),
            (CoordRange::single(1), grbf(2.0)),
        ]);
        assert!(ok.is_ok());
        let overlap = KernelSpec::sum(vec![
            (CoordRange::new(0, 1).unwrap(), KernelSpec::gaussian(2, 1.0).unwrap()),
            (CoordRange::single(1), grbf(2.0)),
        ]);
        assert!(matches!(overlap, Err(Error::Input(_))));
        let gap = KernelSpec::sum(vec![
            (CoordRange::single(0), grbf(2.0)),
            (CoordRange::single(2), grbf(2.0)),
        ]);
        assert!(gap.is_err());
        let wrong_dim = KernelSpec::sum(vec![(CoordRange::new(0, 1).unwrap(), grbf(2.0))]);
        assert!(wrong_dim.is_err());
        assert!(KernelSpec::gaussian(1, 0.0).is_err());
        assert!(KernelSpec::polynomial(1, 0, 1.0).is_err());
        assert!(KernelSpec::polynomial(1, 2, -1.0).is_err());
    }

    #[test]
    fn product_kernel_multiplies_blocks() {
        let k = KernelSpec::product(vec![
            (CoordRange::single(0), KernelSpec::dot(1).unwrap()),
            (CoordRange::single(1), KernelSpec::polynomial(1, 2, 1.0).unwrap()),
        ])
        .unwrap();
        // 2*3 * (1*1 + 1)^2
        assert_eq!(k.eval(&[2.0, 1.0], &[3.0, 1.0]).unwrap(), 24.0);
    }

    #[test]
    fn serde_round_trip_and_errors() {
        let k = KernelSpec::sum(vec![
            (CoordRange::single(0), KernelSpec::polynomial(1, 2, 1.0).unwrap()),
            (CoordRange::single(1), grbf(2.0)),
        ])
        .unwrap();
        let s = serde_json::to_string(&k).unwrap();
        let back: KernelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);

        let err = serde_json::from_str::<KernelSpec>(r#"{"type":"laplace","input_dim":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("laplace"), "{err}");
        let bad = r#"{"type":"sum","blocks":[{"range":[0,1],"kernel":{"type":"dot","input_dim":2}},
                    {"range":[1,1],"kernel":{"type":"dot","input_dim":1}}]}"#;
        assert!(serde_json::from_str::<KernelSpec>(bad).is_err());
    }
}
