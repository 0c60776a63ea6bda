use serde::{Deserialize, Serialize};

use super::FitError;
use crate::data::{PairedDataset, StackedRow};

fn default_degree() -> usize {
    3
}

fn default_knots() -> usize {
    5
}

/// One model term. Terms reference stacked-row columns by name: shared
/// covariates by their own name, the index twin's covariates by name, the
/// co-twin's copies with a `co_` prefix, plus the roles `a_own`, `a_cotwin`,
/// `a_bar` (pair mean exposure), and `y_own`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// The raw column.
    Linear(String),
    /// Product of raw columns; repeat a name for a power.
    Interaction(Vec<String>),
    /// B-spline expansion with interior knots at quantiles of the fitting
    /// data.
    Spline {
        name: String,
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default = "default_knots")]
        knots: usize,
    },
    /// Tensor-product smooth: products of the two marginal spline bases.
    Tensor {
        a: String,
        b: String,
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default = "default_knots")]
        knots: usize,
    },
    /// One-hot dummies for the distinct observed values of the column, the
    /// smallest value being the reference.
    Categorical(String),
}

impl Term {
    pub fn linear(name: &str) -> Self {
        Term::Linear(name.to_string())
    }

    pub fn interaction(names: &[&str]) -> Self {
        Term::Interaction(names.iter().map(|s| s.to_string()).collect())
    }

    pub fn spline(name: &str) -> Self {
        Term::Spline {
            name: name.to_string(),
            degree: default_degree(),
            knots: default_knots(),
        }
    }

    pub fn tensor(a: &str, b: &str) -> Self {
        Term::Tensor {
            a: a.to_string(),
            b: b.to_string(),
            degree: default_degree(),
            knots: default_knots(),
        }
    }

    fn references(&self) -> Vec<&str> {
        match self {
            Term::Linear(n) | Term::Categorical(n) => vec![n],
            Term::Interaction(ns) => ns.iter().map(String::as_str).collect(),
            Term::Spline { name, .. } => vec![name],
            Term::Tensor { a, b, .. } => vec![a, b],
        }
    }
}

/// A model basis: an implicit intercept plus the listed terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub terms: Vec<Term>,
}

impl BasisSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    /// Intercept-only basis.
    pub fn empty() -> Self {
        Self { terms: Vec::new() }
    }

    /// All column names the basis reads.
    pub fn references(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.terms.iter().flat_map(|t| t.references()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }
}

/// Where a named column lives in a stacked row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Source {
    AOwn,
    ACotwin,
    ABar,
    YOwn,
    Shared(usize),
    Own(usize),
    Cotwin(usize),
}

/// Exposure overrides applied during prediction, e.g. to evaluate the
/// outcome model at a counterfactual exposure pattern.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExposureOverride {
    pub a_own: Option<f64>,
    pub a_cotwin: Option<f64>,
}

impl ExposureOverride {
    pub fn pattern(a: u8, b: u8) -> Self {
        Self {
            a_own: Some(f64::from(a)),
            a_cotwin: Some(f64::from(b)),
        }
    }
}

impl Source {
    pub(crate) fn value(self, row: &StackedRow, ov: ExposureOverride) -> f64 {
        match self {
            Source::AOwn => ov.a_own.unwrap_or(f64::from(row.a_own)),
            Source::ACotwin => ov.a_cotwin.unwrap_or(f64::from(row.a_cotwin)),
            Source::ABar => {
                (Source::AOwn.value(row, ov) + Source::ACotwin.value(row, ov)) / 2.0
            }
            Source::YOwn => row.y_own,
            Source::Shared(i) => row.c[i],
            Source::Own(i) => row.x_own[i],
            Source::Cotwin(i) => row.x_cotwin[i],
        }
    }
}

/// Stacked rows together with the column names needed to resolve terms.
#[derive(Debug, Clone)]
pub struct StackedData {
    pub c_names: Vec<String>,
    pub x_names: Vec<String>,
    pub rows: Vec<StackedRow>,
}

impl StackedData {
    pub fn from_dataset(ds: &PairedDataset) -> Self {
        Self {
            c_names: ds.c_names().to_vec(),
            x_names: ds.x_names().to_vec(),
            rows: crate::data::stack(ds),
        }
    }

    pub(crate) fn resolve(&self, name: &str) -> Result<Source, FitError> {
        match name {
            "a_own" => return Ok(Source::AOwn),
            "a_cotwin" => return Ok(Source::ACotwin),
            "a_bar" => return Ok(Source::ABar),
            "y_own" => return Ok(Source::YOwn),
            _ => {}
        }
        if let Some(i) = self.c_names.iter().position(|n| n == name) {
            return Ok(Source::Shared(i));
        }
        if let Some(i) = self.x_names.iter().position(|n| n == name) {
            return Ok(Source::Own(i));
        }
        if let Some(base) = name.strip_prefix("co_") {
            if let Some(i) = self.x_names.iter().position(|n| n == base) {
                return Ok(Source::Cotwin(i));
            }
        }
        Err(FitError::UnknownColumn(name.to_string()))
    }

    pub(crate) fn values(&self, source: Source) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| source.value(r, ExposureOverride::default()))
            .collect()
    }
}

/// A spline's frozen evaluation recipe: clamped knot vector plus degree.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SplineDef {
    pub source: Source,
    pub degree: usize,
    /// Full clamped knot vector (boundary knots repeated degree+1 times).
    pub knots: Vec<f64>,
}

impl SplineDef {
    /// Number of basis functions.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Evaluates all basis functions at `x` (clamped to the knot range).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let d = self.degree;
        let t = &self.knots;
        let lo = t[d];
        let hi = t[t.len() - 1 - d];
        let x = x.clamp(lo, hi);
        let n = self.n_basis();
        // Cox-de Boor, degree by degree. Degree-0 spans are half-open except
        // that x == hi lands in the last non-degenerate span.
        let mut b = vec![0.0; t.len() - 1];
        for (i, slot) in b.iter_mut().enumerate() {
            let active = if x < hi {
                t[i] <= x && x < t[i + 1]
            } else {
                t[i] < t[i + 1] && t[i + 1] >= hi
            };
            *slot = if active { 1.0 } else { 0.0 };
        }
        for k in 1..=d {
            for i in 0..(t.len() - k - 1) {
                let left = if t[i + k] > t[i] {
                    (x - t[i]) / (t[i + k] - t[i]) * b[i]
                } else {
                    0.0
                };
                let right = if t[i + k + 1] > t[i + 1] {
                    (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * b[i + 1]
                } else {
                    0.0
                };
                b[i] = left + right;
            }
        }
        b.truncate(n);
        b
    }
}

/// Type-7 (linear interpolation) quantile of already sorted values.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = p * (m as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn spline_def(
    data: &StackedData,
    source: Source,
    degree: usize,
    interior: usize,
) -> Result<SplineDef, FitError> {
    let mut values = data.values(source);
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (min, max) = (values[0], values[values.len() - 1]);
    if min == max {
        return Err(FitError::DegenerateSpline {
            column: format!("{source:?}"),
        });
    }
    let mut knots = vec![min; degree + 1];
    let mut last = min;
    for i in 1..=interior {
        let q = quantile_sorted(&values, i as f64 / (interior as f64 + 1.0));
        if q > last && q < max {
            knots.push(q);
            last = q;
        }
    }
    knots.extend(std::iter::repeat(max).take(degree + 1));
    Ok(SplineDef {
        source,
        degree,
        knots,
    })
}

/// One resolved term: knots frozen, categorical levels frozen, names mapped
/// to row sources. Resolution happens once at fit time; prediction reuses
/// the frozen state, so refitting identical data reproduces the basis
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ResolvedTerm {
    Intercept,
    Product(Vec<Source>),
    Spline(SplineDef),
    Tensor(SplineDef, SplineDef),
    Categorical { source: Source, levels: Vec<f64> },
}

impl ResolvedTerm {
    fn eval_into(&self, row: &StackedRow, ov: ExposureOverride, out: &mut Vec<f64>) {
        match self {
            ResolvedTerm::Intercept => out.push(1.0),
            ResolvedTerm::Product(sources) => {
                out.push(sources.iter().map(|s| s.value(row, ov)).product())
            }
            ResolvedTerm::Spline(def) => {
                let b = def.eval(def.source.value(row, ov));
                out.extend_from_slice(&b[1..]);
            }
            ResolvedTerm::Tensor(da, db) => {
                let ba = da.eval(da.source.value(row, ov));
                let bb = db.eval(db.source.value(row, ov));
                for va in &ba[1..] {
                    for vb in &bb[1..] {
                        out.push(va * vb);
                    }
                }
            }
            ResolvedTerm::Categorical { source, levels } => {
                let v = source.value(row, ov);
                for level in &levels[1..] {
                    out.push(if v == *level { 1.0 } else { 0.0 });
                }
            }
        }
    }
}

/// A basis bound to data: every term resolved, with one label per design
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedBasis {
    pub(crate) terms: Vec<ResolvedTerm>,
    pub(crate) labels: Vec<String>,
}

impl ResolvedBasis {
    pub fn n_columns(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub(crate) fn row_into(&self, row: &StackedRow, ov: ExposureOverride, out: &mut Vec<f64>) {
        out.clear();
        for term in &self.terms {
            term.eval_into(row, ov, out);
        }
    }
}

pub fn resolve_basis(
    spec: &BasisSpec,
    data: &StackedData,
) -> Result<ResolvedBasis, FitError> {
    let mut terms = vec![ResolvedTerm::Intercept];
    let mut labels = vec!["(intercept)".to_string()];
    for term in &spec.terms {
        let resolved = match term {
            Term::Linear(name) => {
                labels.push(name.clone());
                ResolvedTerm::Product(vec![data.resolve(name)?])
            }
            Term::Interaction(names) => {
                if names.is_empty() {
                    return Err(FitError::EmptyTerm);
                }
                labels.push(names.join("*"));
                ResolvedTerm::Product(
                    names
                        .iter()
                        .map(|n| data.resolve(n))
                        .collect::<Result<_, _>>()?,
                )
            }
            Term::Spline {
                name,
                degree,
                knots,
            } => {
                let def = spline_def(data, data.resolve(name)?, *degree, *knots)?;
                for i in 1..def.n_basis() {
                    labels.push(format!("s({name})[{i}]"));
                }
                ResolvedTerm::Spline(def)
            }
            Term::Tensor {
                a,
                b,
                degree,
                knots,
            } => {
                let da = spline_def(data, data.resolve(a)?, *degree, *knots)?;
                let db = spline_def(data, data.resolve(b)?, *degree, *knots)?;
                for i in 1..da.n_basis() {
                    for j in 1..db.n_basis() {
                        labels.push(format!("t({a},{b})[{i},{j}]"));
                    }
                }
                ResolvedTerm::Tensor(da, db)
            }
            Term::Categorical(name) => {
                let source = data.resolve(name)?;
                let mut levels = data.values(source);
                levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
                levels.dedup();
                if levels.len() < 2 {
                    return Err(FitError::DegenerateSpline {
                        column: name.clone(),
                    });
                }
                for level in &levels[1..] {
                    labels.push(format!("{name}={level}"));
                }
                ResolvedTerm::Categorical { source, levels }
            }
        };
        terms.push(resolved);
    }
    Ok(ResolvedBasis { terms, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_data(values: &[f64]) -> StackedData {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| StackedRow {
                pair_index: i,
                pair_id: format!("p{i}"),
                own: 1,
                c: vec![],
                x_own: vec![v],
                x_cotwin: vec![v],
                a_own: 0,
                a_cotwin: 0,
                y_own: 0.0,
            })
            .collect();
        StackedData {
            c_names: vec![],
            x_names: vec!["v".into()],
            rows,
        }
    }

    #[test]
    fn spline_basis_is_a_partition_of_unity() {
        let values: Vec<f64> = (0..200).map(|i| (i as f64) / 20.0 - 5.0).collect();
        let data = grid_data(&values);
        let def = spline_def(&data, Source::Own(0), 3, 5).unwrap();
        for &x in &[-5.0, -4.99, -1.3, 0.0, 2.7, 4.2, 5.0] {
            let b = def.eval(x);
            let sum: f64 = b.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum at {x} was {sum}");
            assert!(b.iter().all(|&v| v >= -1e-14));
        }
    }

    #[test]
    fn spline_reproduces_cubics_inside_the_range() {
        // Clamped cubic B-splines reproduce polynomials up to degree 3 on
        // the knot range: least squares on x^3 - 2x must interpolate.
        let values: Vec<f64> = (0..100).map(|i| (i as f64) / 10.0).collect();
        let data = grid_data(&values);
        let def = spline_def(&data, Source::Own(0), 3, 5).unwrap();
        let n = def.n_basis();
        let m = values.len();
        let mut x = nalgebra::DMatrix::zeros(m, n);
        let mut y = nalgebra::DVector::zeros(m);
        for (i, &v) in values.iter().enumerate() {
            for (j, b) in def.eval(v).into_iter().enumerate() {
                x[(i, j)] = b;
            }
            y[i] = v.powi(3) - 2.0 * v;
        }
        let beta = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * &y));
        let fitted = x * beta;
        for i in 0..m {
            assert!((fitted[i] - y[i]).abs() < 1e-8, "residual at row {i}");
        }
    }

    #[test]
    fn quantile_knots_are_deterministic() {
        let values: Vec<f64> = (0..57).map(|i| ((i * 37) % 57) as f64).collect();
        let data = grid_data(&values);
        let a = spline_def(&data, Source::Own(0), 3, 5).unwrap();
        let b = spline_def(&data, Source::Own(0), 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exposure_overrides_apply_to_products_and_a_bar() {
        let row = StackedRow {
            pair_index: 0,
            pair_id: "p".into(),
            own: 1,
            c: vec![2.0],
            x_own: vec![3.0],
            x_cotwin: vec![5.0],
            a_own: 1,
            a_cotwin: 0,
            y_own: 7.0,
        };
        let ov = ExposureOverride::pattern(0, 1);
        assert_eq!(Source::AOwn.value(&row, ov), 0.0);
        assert_eq!(Source::ACotwin.value(&row, ov), 1.0);
        assert_eq!(Source::ABar.value(&row, ov), 0.5);
        assert_eq!(Source::ABar.value(&row, ExposureOverride::default()), 0.5);
        assert_eq!(Source::Cotwin(0).value(&row, ov), 5.0);
    }

    #[test]
    fn term_json_shapes() {
        let spec = BasisSpec::new(vec![
            Term::linear("sex"),
            Term::interaction(&["a_own", "par_alcohol"]),
            Term::spline("age"),
        ]);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"linear\":\"sex\""));
        assert!(json.contains("\"interaction\":[\"a_own\",\"par_alcohol\"]"));
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let partial: Term = serde_json::from_str(r#"{"spline":{"name":"age"}}"#).unwrap();
        assert_eq!(partial, Term::spline("age"));
    }

    #[test]
    fn unknown_column_is_reported() {
        let data = grid_data(&[1.0, 2.0]);
        let err = resolve_basis(&BasisSpec::new(vec![Term::linear("nope")]), &data).unwrap_err();
        assert!(matches!(err, FitError::UnknownColumn(n) if n == "nope"));
    }
}
