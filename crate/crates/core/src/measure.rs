//! Finitely supported probability measures on `X × Y`.
//!
//! Atoms are deduplicated on construction: two atoms with identical `x`
//! (exact floating equality, `-0.0 == 0.0`) and identical `y` are merged and
//! their weights added. Atoms with zero weight are dropped. The order of
//! first occurrence is kept and defines the canonical atom order.
//!
//! # CSV input
//!
//! [`load_csv`] reads comma-separated UTF-8 text with one header row. One
//! column (named by the caller) is the target `y`; the feature columns are
//! either named explicitly or taken to be every other column in file order.
//! Cells must parse as decimal numbers with `.` as separator.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub x: Vec<f64>,
    pub y: f64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
    input_dim: usize,
}

/// Exact-equality key for a vector of floats.
pub(crate) fn vec_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| float_key(*v)).collect()
}

fn float_key(v: f64) -> u64 {
    // Fold -0.0 onto 0.0 so that bit equality matches `==`.
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

type AtomKey = (Vec<u64>, u64);

fn atom_key(x: &[f64], y: f64) -> AtomKey {
    (vec_key(x), float_key(y))
}

impl DiscreteMeasure {
    /// Empirical measure of `points`, uniform unless `weights` are given.
    pub fn from_points(points: &[(Vec<f64>, f64)], weights: Option<&[f64]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("measure needs at least one point"));
        }
        let input_dim = points[0].0.len();
        if input_dim == 0 {
            return Err(Error::input("points must have at least one coordinate"));
        }
        let raw_w: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != points.len() {
                    return Err(Error::input(format!(
                        "{} weights given for {} points",
                        w.len(),
                        points.len()
                    )));
                }
                if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::input(format!("weight {bad} is negative or not finite")));
                }
                w.to_vec()
            }
            None => vec![1.0; points.len()],
        };
        let total: f64 = raw_w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::input("weights must not all be zero"));
        }
        let atoms = points
            .iter()
            .zip(&raw_w)
            .map(|((x, y), w)| Atom {
                x: x.clone(),
                y: *y,
                w: w / total,
            })
            .collect();
        Self::from_atoms(atoms, input_dim)
    }

    /// Builds a measure from already-normalized atoms, merging duplicates.
    fn from_atoms(atoms: Vec<Atom>, input_dim: usize) -> Result<Self> {
        let mut index: HashMap<AtomKey, usize> = HashMap::new();
        let mut merged: Vec<Atom> = Vec::new();
        for a in atoms {
            if a.x.len() != input_dim {
                return Err(Error::input(format!(
                    "atom has dimension {} but measure has {input_dim}",
                    a.x.len()
                )));
            }
            if !a.y.is_finite() || a.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("atom coordinates must be finite"));
            }
            if a.w == 0.0 {
                continue;
            }
            match index.entry(atom_key(&a.x, a.y)) {
                std::collections::hash_map::Entry::Occupied(e) => merged[*e.get()].w += a.w,
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(merged.len());
                    merged.push(a);
                }
            }
        }
        if merged.is_empty() {
            return Err(Error::input("measure has no atom with positive weight"));
        }
        Ok(DiscreteMeasure {
            atoms: merged,
            input_dim,
        })
    }

    /// Point mass at `(x, y)`.
    pub fn dirac(x: Vec<f64>, y: f64) -> Result<Self> {
        Self::from_points(&[(x, y)], None)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// Gross-error mixture `(1 - eps)·P + eps·Q` on the union support
    /// (`P`'s atoms first, then atoms new in `Q`).
    pub fn mix(&self, q: &DiscreteMeasure, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::input(format!("mixing proportion {eps} outside [0,1]")));
        }
        if self.input_dim != q.input_dim {
            return Err(Error::input("measures have different input dimensions"));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        if eps == 1.0 {
            return Ok(q.clone());
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                w: (1.0 - eps) * a.w,
                ..a.clone()
            })
            .chain(q.atoms.iter().map(|a| Atom {
                w: eps * a.w,
                ..a.clone()
            }))
            .collect();
        Self::from_atoms(atoms, self.input_dim)
    }

    /// Total-variation norm `Σ |w_P - w_Q|` of the signed measure `P - Q`
    /// (twice the total-variation distance).
    pub fn tv_norm_diff(&self, q: &DiscreteMeasure) -> Result<f64> {
        if self.input_dim != q.input_dim {
            return Err(Error::input("measures have different input dimensions"));
        }
        let mut diff: BTreeMap<AtomKey, f64> = BTreeMap::new();
        for (a, sign) in self
            .atoms
            .iter()
            .map(|a| (a, 1.0))
            .chain(q.atoms.iter().map(|a| (a, -1.0)))
        {
            *diff.entry(atom_key(&a.x, a.y)).or_insert(0.0) += sign * a.w;
        }
        // Key order makes the sum independent of argument order.
        Ok(diff.values().map(|d| d.abs()).sum())
    }

    /// Distinct `x` values in canonical order with their marginal weights.
    pub fn x_marginal(&self) -> Vec<(Vec<f64>, f64)> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        for a in &self.atoms {
            match index.entry(vec_key(&a.x)) {
                std::collections::hash_map::Entry::Occupied(e) => out[*e.get()].1 += a.w,
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(out.len());
                    out.push((a.x.clone(), a.w));
                }
            }
        }
        out
    }

    /// `P((-∞, t] | x)` for an `x` in the support of the `X`-marginal.
    pub fn cond_cdf(&self, x: &[f64], t: f64) -> Result<f64> {
        let key = vec_key(x);
        let mut below = 0.0;
        let mut total = 0.0;
        for a in &self.atoms {
            if a.x.len() == x.len() && vec_key(&a.x) == key {
                total += a.w;
                if a.y <= t {
                    below += a.w;
                }
            }
        }
        if total == 0.0 {
            return Err(Error::input(format!(
                "x = {x:?} is not in the support of the measure"
            )));
        }
        Ok(below / total)
    }

    /// Per-coordinate `[min, max]` of the `x` support.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.input_dim];
        for a in &self.atoms {
            for (bi, v) in b.iter_mut().zip(&a.x) {
                bi.0 = bi.0.min(*v);
                bi.1 = bi.1.max(*v);
            }
        }
        b
    }
}

/// Rows of a CSV file, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        let pts: Vec<(Vec<f64>, f64)> = self
            .xs
            .iter()
            .cloned()
            .zip(self.ys.iter().copied())
            .collect();
        DiscreteMeasure::from_points(&pts, None)
    }
}

/// Reads a dataset with a header row. `features = None` uses every column
/// except `target`, in file order.
pub fn load_csv(
    path: impl AsRef<Path>,
    target: &str,
    features: Option<&[String]>,
) -> Result<(DiscreteMeasure, Dataset)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let data = read_csv(file, path, target, features, true)?;
    let measure = data.to_measure()?;
    Ok((measure, data))
}

/// Reads feature rows only (no target column), e.g. for prediction.
pub fn load_features_csv(path: impl AsRef<Path>, features: Option<&[String]>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, "", features, false)
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

fn read_csv<R: std::io::Read>(
    reader: R,
    path: &Path,
    target: &str,
    features: Option<&[String]>,
    with_target: bool,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(path, "file is empty (no header row)".into()));
    }
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, format!("missing column `{name}`")))
    };
    let target_idx = if with_target { Some(col(target)?) } else { None };
    let feature_idx: Vec<usize> = match features {
        Some(names) => names.iter().map(|n| col(n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|i| Some(*i) != target_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(parse_err(path, "no feature columns".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| parse_err(path, format!("row {row}: {e}")))?;
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).ok_or_else(|| {
                parse_err(path, format!("row {row}: missing value for column `{}`", headers[i]))
            })?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(
                    path,
                    format!("row {row}, column `{}`: `{raw}` is not a finite number", headers[i]),
                )),
            }
        };
        xs.push(feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        if let Some(t) = target_idx {
            ys.push(cell(t)?);
        }
    }
    if xs.is_empty() {
        return Err(parse_err(path, "file has a header but no data rows".into()));
    }
    Ok(Dataset {
        feature_names: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
        target_name: target.to_string(),
        xs,
        ys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn pts(v: &[(f64, f64)]) -> Vec<(Vec<f64>, f64)> {
        v.iter().map(|(x, y)| (vec![*x], *y)).collect()
    }

    #[test]
    fn uniform_and_merged_weights() {
        let m = DiscreteMeasure::from_points(&pts(&[(0.0, 1.0), (1.0, 1.0), (2.0, 0.0), (3.0, 0.0)]), None).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.atoms().iter().all(|a| a.w == 0.25));

        let m = DiscreteMeasure::from_points(&pts(&[(0.0, 1.0), (1.0, 1.0), (0.0, 1.0), (3.0, 0.0)]), None).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.atoms()[0].w, 0.5);

        let m = DiscreteMeasure::from_points(&pts(&[(0.0, 1.0), (1.0, 1.0)]), Some(&[2.0, 2.0])).unwrap();
        assert_eq!(m.atoms()[0].w, 0.5);
        assert_eq!(m.atoms()[1].w, 0.5);

        let neg_zero = DiscreteMeasure::from_points(&pts(&[(0.0, 1.0), (-0.0, 1.0)]), None).unwrap();
        assert_eq!(neg_zero.len(), 1);
    }

    #[test]
    fn constructor_errors() {
        assert!(DiscreteMeasure::from_points(&[], None).is_err());
        assert!(DiscreteMeasure::from_points(&pts(&[(0.0, 1.0)]), Some(&[-1.0])).is_err());
        assert!(DiscreteMeasure::from_points(&pts(&[(0.0, 1.0)]), Some(&[0.0])).is_err());
        assert!(DiscreteMeasure::from_points(&pts(&[(0.0, f64::NAN)]), None).is_err());
    }

    #[test]
    fn mixtures() {
        let p = DiscreteMeasure::dirac(vec![0.0], 0.0).unwrap();
        let q = DiscreteMeasure::dirac(vec![1.0], 5.0).unwrap();
        assert_eq!(p.mix(&q, 0.0).unwrap(), p);
        assert_eq!(p.mix(&q, 1.0).unwrap(), q);
        let m = p.mix(&q, 0.25).unwrap();
        assert_eq!(m.atoms()[0].w, 0.75);
        assert_eq!(m.atoms()[1].w, 0.25);
        assert!(p.mix(&q, 1.5).is_err());
        assert_eq!(p.tv_norm_diff(&p).unwrap(), 0.0);
        assert_eq!(p.tv_norm_diff(&q).unwrap(), 2.0);
    }

    #[test]
    fn conditional_cdf() {
        let m = DiscreteMeasure::dirac(vec![0.5], 2.0).unwrap();
        assert_eq!(m.cond_cdf(&[0.5], 2.0).unwrap(), 1.0);
        assert_eq!(m.cond_cdf(&[0.5], 1.0).unwrap(), 0.0);
        assert!(m.cond_cdf(&[0.25], 1.0).is_err());
        let m = DiscreteMeasure::from_points(&pts(&[(0.5, 0.0), (0.5, 1.0), (0.7, -3.0)]), None).unwrap();
        assert_eq!(m.cond_cdf(&[0.5], 0.5).unwrap(), 0.5);
        assert_eq!(m.cond_cdf(&[0.5], 1.0).unwrap(), 1.0);
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_loading() {
        let f = write_tmp("x1,x2,y\n0,1,2\n0.5,0.25,1\n1,1,-3\n");
        let (m, d) = load_csv(f.path(), "y", None).unwrap();
        assert_eq!(m.len(), 3);
        assert!(m.atoms().iter().all(|a| (a.w - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(d.feature_names, vec!["x1", "x2"]);
        assert_eq!(d.xs[1], vec![0.5, 0.25]);

        let f = write_tmp("x,y\n0,1\nabc,2\n");
        let err = load_csv(f.path(), "y", None).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");

        let f = write_tmp("x,y\n0,1\n0,1\n2,2\n");
        let (m, _) = load_csv(f.path(), "y", None).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.atoms()[0].w - 2.0 / 3.0).abs() < 1e-15);

        let f = write_tmp("x,z\n0,1\n");
        assert!(load_csv(f.path(), "y", None).unwrap_err().to_string().contains("`y`"));
        let f = write_tmp("");
        assert!(load_csv(f.path(), "y", None).is_err());
    }
}
