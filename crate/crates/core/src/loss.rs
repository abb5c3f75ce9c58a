//! Lipschitz-continuous convex losses `L(y, t)`.
//!
//! All three losses ignore the input `x`, so they are written as functions
//! of the target `y` and the prediction `t` only. Each loss is also
//! available in shifted form `L*(y, t) = L(y, t) - L(y, 0)`, which keeps
//! risks finite under heavy-tailed `y` without moving the minimizer.
//!
//! Every loss here admits the conjugate representation
//!
//! ```text
//! L(y, t) = max_{s ∈ [lo(y), hi(y)]}  s·(t - y) - ε·|s|
//! ```
//!
//! (with `ε = 0` except for the ε-insensitive loss, and `y² = 1` for the
//! hinge loss). The solver works on this form; see [`LossSpec::dual_box`].
//!
//! Serialized as a tagged string: `pinball:0.5`, `eps-insensitive:0.1`,
//! `hinge`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossSpec {
    Pinball { tau: f64 },
    EpsInsensitive { eps: f64 },
    Hinge,
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Distance of `v` from the interval, zero inside.
    pub fn distance(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }

    pub fn scale(&self, a: f64) -> Interval {
        let (p, q) = (self.lo * a, self.hi * a);
        Interval {
            lo: p.min(q),
            hi: p.max(q),
        }
    }

    pub fn add(&self, other: Interval) -> Interval {
        Interval {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }
}

impl LossSpec {
    pub fn pinball(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::input(format!("pinball tau must lie in (0,1), got {tau}")));
        }
        Ok(LossSpec::Pinball { tau })
    }

    pub fn eps_insensitive(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::input(format!(
                "epsilon-insensitive eps must be positive, got {eps}"
            )));
        }
        Ok(LossSpec::EpsInsensitive { eps })
    }

    pub fn hinge() -> Self {
        LossSpec::Hinge
    }

    /// Rejects targets outside the loss's domain (hinge needs `y = ±1`).
    pub fn check_target(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::input(format!("target {y} is not finite")));
        }
        if matches!(self, LossSpec::Hinge) && y != 1.0 && y != -1.0 {
            return Err(Error::input(format!(
                "hinge loss needs labels in {{-1, +1}}, got {y}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, y: f64, t: f64) -> Result<f64> {
        self.check_target(y)?;
        Ok(self.eval_unchecked(y, t))
    }

    pub fn eval_unchecked(&self, y: f64, t: f64) -> f64 {
        match *self {
            LossSpec::Pinball { tau } => {
                let r = y - t;
                if r < 0.0 {
                    (tau - 1.0) * r
                } else {
                    tau * r
                }
            }
            LossSpec::EpsInsensitive { eps } => ((y - t).abs() - eps).max(0.0),
            LossSpec::Hinge => (1.0 - y * t).max(0.0),
        }
    }

    /// `L(y,t) - L(y,0)`; may be negative.
    pub fn shifted(&self, y: f64, t: f64) -> Result<f64> {
        self.check_target(y)?;
        Ok(self.shifted_unchecked(y, t))
    }

    pub fn shifted_unchecked(&self, y: f64, t: f64) -> f64 {
        self.eval_unchecked(y, t) - self.eval_unchecked(y, 0.0)
    }

    /// Smallest `|L|₁` with `|L(y,t) - L(y,t')| ≤ |L|₁·|t - t'|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            LossSpec::Pinball { tau } => tau.max(1.0 - tau),
            LossSpec::EpsInsensitive { .. } | LossSpec::Hinge => 1.0,
        }
    }

    /// Kinks of `t ↦ L(y,t)` in increasing order.
    pub fn kinks(&self, y: f64) -> Vec<f64> {
        match *self {
            LossSpec::Pinball { .. } => vec![y],
            LossSpec::EpsInsensitive { eps } => vec![y - eps, y + eps],
            LossSpec::Hinge => vec![y],
        }
    }

    /// Slopes of `t ↦ L(y,t)` on the open segments between kinks, one more
    /// than the number of kinks.
    pub fn slopes(&self, y: f64) -> Vec<f64> {
        match *self {
            LossSpec::Pinball { tau } => vec![-tau, 1.0 - tau],
            LossSpec::EpsInsensitive { .. } => vec![-1.0, 0.0, 1.0],
            LossSpec::Hinge => {
                if y > 0.0 {
                    vec![-y, 0.0]
                } else {
                    vec![0.0, -y]
                }
            }
        }
    }

    /// Subdifferential of `t ↦ L(y,t)` (equal to that of `L*`). Kink
    /// membership is decided by exact comparison.
    pub fn subgrad_interval(&self, y: f64, t: f64) -> Result<Interval> {
        self.check_target(y)?;
        Ok(self.subgrad_with_tol(y, t, 0.0))
    }

    /// As [`subgrad_interval`](Self::subgrad_interval), but any kink within
    /// `tol` of `t` counts as hit.
    pub fn subgrad_with_tol(&self, y: f64, t: f64, tol: f64) -> Interval {
        let kinks = self.kinks(y);
        let slopes = self.slopes(y);
        let mut lo = None;
        let mut hi = None;
        for (j, &k) in kinks.iter().enumerate() {
            if (t - k).abs() <= tol {
                lo.get_or_insert(slopes[j]);
                hi = Some(slopes[j + 1]);
            }
        }
        if let (Some(lo), Some(hi)) = (lo, hi) {
            return Interval { lo, hi };
        }
        let seg = kinks.iter().filter(|&&k| k < t).count();
        Interval::point(slopes[seg])
    }

    /// Feasible range of the conjugate variable `s` for target `y`.
    pub fn dual_box(&self, y: f64) -> Interval {
        match *self {
            LossSpec::Pinball { tau } => Interval {
                lo: -tau,
                hi: 1.0 - tau,
            },
            LossSpec::EpsInsensitive { .. } => Interval { lo: -1.0, hi: 1.0 },
            LossSpec::Hinge => Interval {
                lo: (-y).min(0.0),
                hi: (-y).max(0.0),
            },
        }
    }

    /// Weight of the `|s|` term in the conjugate representation.
    pub fn dual_abs_penalty(&self) -> f64 {
        match *self {
            LossSpec::EpsInsensitive { eps } => eps,
            _ => 0.0,
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Pinball { tau } => write!(f, "pinball:{tau}"),
            LossSpec::EpsInsensitive { eps } => write!(f, "eps-insensitive:{eps}"),
            LossSpec::Hinge => write!(f, "hinge"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (tag, arg) = match s.split_once(':') {
            Some((t, a)) => (t.trim(), Some(a.trim())),
            None => (s, None),
        };
        let param = |name: &str| -> Result<f64> {
            let a = arg.ok_or_else(|| Error::input(format!("loss `{tag}` needs a parameter ({name})")))?;
            a.parse::<f64>()
                .map_err(|_| Error::input(format!("loss `{tag}`: `{a}` is not a number")))
        };
        match tag {
            "pinball" => LossSpec::pinball(param("tau")?),
            "eps-insensitive" | "epsilon-insensitive" => LossSpec::eps_insensitive(param("eps")?),
            "hinge" if arg.is_none() => Ok(LossSpec::Hinge),
            "hinge" => Err(Error::input("hinge loss takes no parameter")),
            other => Err(Error::input(format!("unknown loss tag `{other}`"))),
        }
    }
}

impl TryFrom<String> for LossSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LossSpec> for String {
    fn from(l: LossSpec) -> String {
        l.to_string()
    }
}
