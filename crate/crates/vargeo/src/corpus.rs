//! Corpus loading: named instances pairing maps or functions with reference
//! points and expected diagnostic outcomes.
//!
//! The on-disk format is JSON with explicit variant tags. Numeric entries
//! accept either JSON literals or strings like `"1/2"`, so polyhedral data
//! stays exact. Loading validates everything up front: graphs are
//! constructed (which runs the piecewise-linear continuity check and the
//! prox-regularity sampling), reference points must lie on the graph,
//! expectation keys must belong to the vocabulary of their suite, and
//! supplied cone bundles must satisfy the bundle laws.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::cones::ConeBundle;
use crate::linalg::{dist, Mat};
use crate::maps::{GraphChart, MapBody, PlCell, SetValuedMap, SmoothMap};
use crate::poly::{ConeUnion, ConvexCone, ConvexPolyhedron};
use crate::prox::{self, ProxRegularFunction};
use crate::scalar::{fl, Scalar, Tol};
use crate::subspace::{SplitDims, Subspace};
use crate::{Result, VarError};

/// What an instance exercises.
#[derive(Clone, Debug)]
pub enum InstancePayload<S> {
    /// A set-valued map analyzed by the cone and derivative engines.
    Map(SetValuedMap<S>),
    /// A smooth-plus-set-valued sum, kept in parts for the sum calculus and
    /// assembled into one graph for direct analysis.
    Sum { smooth: SmoothMap<S>, inner: SetValuedMap<S>, assembled: SetValuedMap<S> },
    /// A prox-regular function for the proximal suite.
    Prox(ProxRegularFunction<S>),
}

/// Externally supplied cone bundle for graphs the exact engine cannot reduce.
#[derive(Clone, Debug)]
pub struct SuppliedCones<S> {
    pub bundle: ConeBundle<S>,
    /// Tangent subspaces of the smooth strata through the point.
    pub strata: Vec<Subspace<S>>,
}

/// Expected outcome of one criterion, with a note on how it was derived.
#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    pub value: ExpectedValue,
    pub basis: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExpectedValue {
    Bool(bool),
    Dim(usize),
    Real(f64),
    /// Row-major matrix; also used for lists of directions.
    Matrix(Vec<Vec<f64>>),
}

impl std::fmt::Display for ExpectedValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpectedValue::Bool(b) => write!(f, "{b}"),
            ExpectedValue::Dim(d) => write!(f, "{d}"),
            ExpectedValue::Real(r) => write!(f, "{r}"),
            ExpectedValue::Matrix(rows) => {
                let body: Vec<String> = rows
                    .iter()
                    .map(|r| {
                        let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
                        format!("[{}]", cells.join(", "))
                    })
                    .collect();
                write!(f, "[{}]", body.join(", "))
            }
        }
    }
}

/// A reference point on the instance graph.
#[derive(Clone, Debug)]
pub struct ReferencePoint<S> {
    pub z: Vec<S>,
    /// Dimension of a Lipschitz chart of the graph near the point, when one
    /// is known to exist.
    pub chart_dim: Option<usize>,
    pub expect: BTreeMap<String, Expectation>,
    pub supplied: Option<SuppliedCones<S>>,
}

#[derive(Clone, Debug)]
pub struct CorpusInstance<S> {
    pub id: String,
    pub payload: InstancePayload<S>,
    pub points: Vec<ReferencePoint<S>>,
}

impl<S: Scalar> CorpusInstance<S> {
    pub fn kind_name(&self) -> &'static str {
        match self.payload {
            InstancePayload::Map(_) => "map",
            InstancePayload::Sum { .. } => "sum",
            InstancePayload::Prox(_) => "prox",
        }
    }
}

/// Expectation keys understood by the map suites.
pub const MAP_CRITERIA: &[&str] = &[
    "strictly_smooth",
    "strict_proto",
    "semismooth_star",
    "smsr",
    "mr",
    "smr",
    "strict_derivative_dim",
    "coderivative_dim",
    "paratingent_dim",
    "inverse_slope",
    "tangent_dirs",
];

/// Expectation keys understood by the sum suite.
pub const SUM_CRITERIA: &[&str] = &["smsr", "mr", "smr", "inverse_slope"];

/// Expectation keys understood by the prox suite.
pub const PROX_CRITERIA: &[&str] = &[
    "strict_proto_subgrad",
    "one_point_decays",
    "two_point_decays",
    "two_point_shell_max",
];

/// Parse and validate a corpus file. An empty or whitespace-only file is an
/// empty corpus.
pub fn load_corpus<S: Scalar>(path: &Path) -> Result<Vec<CorpusInstance<S>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VarError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_corpus(&text)
}

/// Parse and validate corpus text; see [`load_corpus`]. Instances come back
/// sorted by id.
pub fn parse_corpus<S: Scalar>(text: &str) -> Result<Vec<CorpusInstance<S>>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let raw: RawCorpus =
        serde_json::from_str(text).map_err(|e| VarError::Parse(e.to_string()))?;
    if raw.schema_version != 1 {
        return Err(VarError::Validation(format!(
            "unsupported corpus schema version {}, this build reads version 1",
            raw.schema_version
        )));
    }
    let mut seen = BTreeSet::new();
    let mut instances = Vec::with_capacity(raw.instances.len());
    for raw_inst in &raw.instances {
        if raw_inst.id.trim().is_empty() {
            return Err(VarError::Validation("an instance has an empty id".into()));
        }
        if !seen.insert(raw_inst.id.clone()) {
            return Err(VarError::Validation(format!("duplicate instance id '{}'", raw_inst.id)));
        }
        instances.push(resolve_instance(raw_inst)?);
    }
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(instances)
}

/// Text of the corpus shipped with the crate.
pub fn builtin_corpus_text() -> &'static str {
    include_str!("../corpus/builtin.json")
}

/// The corpus shipped with the crate.
pub fn builtin<S: Scalar>() -> Vec<CorpusInstance<S>> {
    parse_corpus(builtin_corpus_text()).expect("the built-in corpus is valid")
}

#[derive(Deserialize)]
struct RawCorpus {
    schema_version: u32,
    #[serde(default)]
    instances: Vec<RawInstance>,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    #[serde(flatten)]
    payload: RawPayload,
    #[serde(default)]
    points: Vec<RawPoint>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawPayload {
    Map { map: RawMap },
    Sum { smooth: RawSmooth, inner: RawMap },
    Prox { function: RawProx },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawMap {
    PolyUnion {
        n: usize,
        m: usize,
        pieces: Vec<RawPolyhedron>,
    },
    PlSingle {
        n: usize,
        m: usize,
        cells: Vec<RawCell>,
    },
    Smooth {
        function: RawSmooth,
    },
    SmoothUnion {
        branches: Vec<RawSmooth>,
    },
    Charted {
        n: usize,
        m: usize,
        forward: Vec<Vec<RawNum>>,
        #[serde(default)]
        offset: Vec<RawNum>,
        inner: Box<RawMap>,
    },
}

/// Constraint rows are written `[c_1, .., c_d, rhs]`.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawPolyhedron {
    leq: Vec<Vec<RawNum>>,
    eq: Vec<Vec<RawNum>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    region: RawPolyhedron,
    linear: Vec<Vec<RawNum>>,
    #[serde(default)]
    offset: Vec<RawNum>,
}

#[derive(Deserialize, Clone)]
#[serde(tag = "family", rename_all = "snake_case")]
enum RawSmooth {
    /// `x -> A x + b`.
    Linear {
        matrix: Vec<Vec<RawNum>>,
        #[serde(default)]
        offset: Vec<RawNum>,
    },
    /// Single-variable polynomial with coefficients in increasing degree.
    Poly1 { coeffs: Vec<RawNum> },
}

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum RawProx {
    Abs { at: Vec<RawNum> },
    Quadratic { curvature: RawNum, at: RawNum },
    Zero,
    IndicatorHalfline,
    StepJump,
    Quartic,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    z: Vec<RawNum>,
    #[serde(default)]
    chart_dim: Option<usize>,
    #[serde(default)]
    expect: BTreeMap<String, RawExpectation>,
    #[serde(default)]
    cones: Option<RawCones>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpectation {
    value: serde_json::Value,
    basis: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCones {
    tangent: Vec<RawCone>,
    clarke: RawCone,
    paratingent: Vec<RawCone>,
    regular_normal: RawCone,
    limiting_normal: Vec<RawCone>,
    #[serde(default)]
    strata: Vec<Vec<Vec<RawNum>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawCone {
    gen: Vec<Vec<RawNum>>,
    lin: Vec<Vec<RawNum>>,
}

#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum RawNum {
    Number(f64),
    Text(String),
}

impl RawNum {
    fn value(&self, place: &str) -> Result<f64> {
        let v = match self {
            RawNum::Number(x) => *x,
            RawNum::Text(s) => parse_num_text(s, place)?,
        };
        if !v.is_finite() {
            return Err(VarError::Validation(format!("{place}: number is not finite")));
        }
        Ok(v)
    }
}

fn parse_num_text(s: &str, place: &str) -> Result<f64> {
    let s = s.trim();
    let parsed = match s.split_once('/') {
        Some((p, q)) => {
            let num: f64 = p.trim().parse().ok().ok_or_else(|| bad_number(s, place))?;
            let den: f64 = q.trim().parse().ok().ok_or_else(|| bad_number(s, place))?;
            if den == 0.0 {
                return Err(VarError::Validation(format!("{place}: zero denominator in '{s}'")));
            }
            num / den
        }
        None => s.parse().map_err(|_| bad_number(s, place))?,
    };
    Ok(parsed)
}

fn bad_number(s: &str, place: &str) -> VarError {
    VarError::Validation(format!("{place}: cannot parse '{s}' as a number or fraction"))
}

fn nums<S: Scalar>(raw: &[RawNum], place: &str) -> Result<Vec<S>> {
    raw.iter().map(|r| Ok(fl(r.value(place)?))).collect()
}

fn num_matrix<S: Scalar>(raw: &[Vec<RawNum>], cols: usize, place: &str) -> Result<Mat<S>> {
    let mut rows = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        if r.len() != cols {
            return Err(VarError::Validation(format!(
                "{place}: row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
        rows.push(nums(r, place)?);
    }
    Ok(Mat::from_rows(&rows))
}

/// Split `[c_1, .., c_d, rhs]` rows into the constraint form the polyhedron
/// types take.
fn constraints<S: Scalar>(
    raw: &[Vec<RawNum>],
    dim: usize,
    place: &str,
) -> Result<Vec<(Vec<S>, S)>> {
    let mut out = Vec::with_capacity(raw.len());
    for (i, row) in raw.iter().enumerate() {
        if row.len() != dim + 1 {
            return Err(VarError::Validation(format!(
                "{place}: constraint {i} has {} entries, expected {} coefficients plus a right-hand side",
                row.len(),
                dim
            )));
        }
        let vals = nums::<S>(row, place)?;
        let (coeffs, rhs) = vals.split_at(dim);
        out.push((coeffs.to_vec(), rhs[0]));
    }
    Ok(out)
}

fn resolve_polyhedron<S: Scalar>(
    raw: &RawPolyhedron,
    dim: usize,
    place: &str,
) -> Result<ConvexPolyhedron<S>> {
    Ok(ConvexPolyhedron::new(
        dim,
        constraints(&raw.leq, dim, place)?,
        constraints(&raw.eq, dim, place)?,
    ))
}

fn resolve_smooth<S: Scalar>(label: &str, raw: &RawSmooth) -> Result<SmoothMap<S>> {
    match raw {
        RawSmooth::Linear { matrix, offset } => {
            if matrix.is_empty() || matrix[0].is_empty() {
                return Err(VarError::Validation(format!("'{label}': linear matrix is empty")));
            }
            let (m, n) = (matrix.len(), matrix[0].len());
            let a = num_matrix::<S>(matrix, n, &format!("'{label}' matrix"))?;
            let b = if offset.is_empty() {
                vec![S::zero(); m]
            } else {
                nums(offset, &format!("'{label}' offset"))?
            };
            if b.len() != m {
                return Err(VarError::Validation(format!(
                    "'{label}': offset has {} entries, the matrix has {m} rows",
                    b.len()
                )));
            }
            let a_jac = a.clone();
            Ok(SmoothMap::new(
                label.to_string(),
                n,
                m,
                move |x: &[S]| {
                    let mut y = a.mulvec(x);
                    for (yi, bi) in y.iter_mut().zip(&b) {
                        *yi = *yi + *bi;
                    }
                    y
                },
                move |_: &[S]| a_jac.clone(),
            ))
        }
        RawSmooth::Poly1 { coeffs } => {
            if coeffs.is_empty() {
                return Err(VarError::Validation(format!("'{label}': empty coefficient list")));
            }
            let c: Vec<S> = nums(coeffs, &format!("'{label}' coeffs"))?;
            let c_jac = c.clone();
            Ok(SmoothMap::new(
                label.to_string(),
                1,
                1,
                move |x: &[S]| {
                    let mut acc = S::zero();
                    for &ck in c.iter().rev() {
                        acc = acc * x[0] + ck;
                    }
                    vec![acc]
                },
                move |x: &[S]| {
                    let mut acc = S::zero();
                    for (k, &ck) in c_jac.iter().enumerate().skip(1).rev() {
                        acc = acc * x[0] + ck * fl(k as f64);
                    }
                    Mat::from_rows(&[vec![acc]])
                },
            ))
        }
    }
}

fn resolve_map<S: Scalar>(id: &str, raw: &RawMap) -> Result<SetValuedMap<S>> {
    match raw {
        RawMap::PolyUnion { n, m, pieces } => {
            let dims = SplitDims::new(*n, *m);
            let resolved: Result<Vec<_>> = pieces
                .iter()
                .enumerate()
                .map(|(i, p)| resolve_polyhedron(p, dims.total(), &format!("'{id}' piece {i}")))
                .collect();
            SetValuedMap::poly_union(id, dims, resolved?)
        }
        RawMap::PlSingle { n, m, cells } => {
            let dims = SplitDims::new(*n, *m);
            let mut resolved = Vec::with_capacity(cells.len());
            for (i, cell) in cells.iter().enumerate() {
                let place = format!("'{id}' cell {i}");
                let region = resolve_polyhedron(&cell.region, *n, &place)?;
                let linear = num_matrix::<S>(&cell.linear, *n, &place)?;
                let offset = if cell.offset.is_empty() {
                    vec![S::zero(); *m]
                } else {
                    nums(&cell.offset, &place)?
                };
                resolved.push(PlCell { region, linear, offset });
            }
            SetValuedMap::pl_single(id, dims, resolved)
        }
        RawMap::Smooth { function } => Ok(SetValuedMap::smooth(resolve_smooth(id, function)?)),
        RawMap::SmoothUnion { branches } => {
            let resolved: Result<Vec<_>> = branches
                .iter()
                .enumerate()
                .map(|(i, b)| resolve_smooth(&format!("{id}/branch{i}"), b))
                .collect();
            SetValuedMap::smooth_union(id, resolved?)
        }
        RawMap::Charted { n, m, forward, offset, inner } => {
            let dims = SplitDims::new(*n, *m);
            let total = dims.total();
            let fwd = num_matrix::<S>(forward, total, &format!("'{id}' chart"))?;
            if fwd.rows() != total {
                return Err(VarError::Validation(format!(
                    "'{id}': chart matrix must be {total} x {total}"
                )));
            }
            let off = if offset.is_empty() {
                vec![S::zero(); total]
            } else {
                nums(offset, &format!("'{id}' chart offset"))?
            };
            let chart = GraphChart::new(fwd, off)?;
            let inner = resolve_map(&format!("{id}/inner"), inner)?;
            SetValuedMap::charted(id, dims, chart, inner)
        }
    }
}

fn resolve_prox<S: Scalar>(id: &str, raw: &RawProx) -> Result<ProxRegularFunction<S>> {
    match raw {
        RawProx::Abs { at } => {
            if at.len() != 2 {
                return Err(VarError::Validation(format!(
                    "'{id}': the abs family takes a reference pair [x, x*]"
                )));
            }
            let xbar = at[0].value(&format!("'{id}' at"))?;
            let xsbar = at[1].value(&format!("'{id}' at"))?;
            if xsbar.abs() > 1.0 || (xbar != 0.0 && xsbar != xbar.signum()) {
                return Err(VarError::Validation(format!(
                    "'{id}': ({xbar}, {xsbar}) is not on the abs subgradient graph"
                )));
            }
            Ok(prox::abs_prox(xbar, xsbar))
        }
        RawProx::Quadratic { curvature, at } => {
            let a = curvature.value(&format!("'{id}' curvature"))?;
            let xbar = at.value(&format!("'{id}' at"))?;
            Ok(prox::quadratic_prox(a, xbar))
        }
        RawProx::Zero => Ok(prox::zero_prox()),
        RawProx::IndicatorHalfline => Ok(prox::indicator_halfline_prox()),
        RawProx::StepJump => Ok(prox::step_jump_prox()),
        RawProx::Quartic => Ok(prox::quartic_prox()),
    }
}

fn resolve_cone<S: Scalar>(raw: &RawCone, ambient: usize, place: &str) -> Result<ConvexCone<S>> {
    let gens = num_matrix::<S>(&raw.gen, ambient, place)?;
    let lins = num_matrix::<S>(&raw.lin, ambient, place)?;
    Ok(ConvexCone::new(
        ambient,
        (0..gens.rows()).map(|i| gens.row(i).to_vec()).collect(),
        (0..lins.rows()).map(|i| lins.row(i).to_vec()).collect(),
    ))
}

fn resolve_cone_union<S: Scalar>(
    raw: &[RawCone],
    ambient: usize,
    place: &str,
) -> Result<ConeUnion<S>> {
    if raw.is_empty() {
        return Err(VarError::Validation(format!("{place}: a cone union needs at least one piece")));
    }
    let pieces: Result<Vec<_>> = raw.iter().map(|c| resolve_cone(c, ambient, place)).collect();
    Ok(ConeUnion::new(ambient, pieces?))
}

fn resolve_cones<S: Scalar>(id: &str, ambient: usize, raw: &RawCones) -> Result<SuppliedCones<S>> {
    let place = format!("'{id}' supplied cones");
    let bundle = ConeBundle {
        tangent: resolve_cone_union(&raw.tangent, ambient, &place)?,
        clarke: resolve_cone(&raw.clarke, ambient, &place)?,
        paratingent: resolve_cone_union(&raw.paratingent, ambient, &place)?,
        regular_normal: resolve_cone(&raw.regular_normal, ambient, &place)?,
        limiting_normal: resolve_cone_union(&raw.limiting_normal, ambient, &place)?,
    };
    let violations = bundle.verify(Tol::standard().eq);
    if !violations.is_empty() {
        return Err(VarError::Validation(format!(
            "{place}: bundle laws violated: {}",
            violations.join("; ")
        )));
    }
    let mut strata = Vec::with_capacity(raw.strata.len());
    for (i, basis) in raw.strata.iter().enumerate() {
        let cols = num_matrix::<S>(basis, ambient, &format!("{place} stratum {i}"))?;
        let col_vecs: Vec<Vec<S>> = (0..cols.rows()).map(|r| cols.row(r).to_vec()).collect();
        strata.push(Subspace::from_cols(ambient, &col_vecs));
    }
    Ok(SuppliedCones { bundle, strata })
}

fn expected_value_kind(key: &str) -> &'static str {
    if key.ends_with("_dim") {
        "dim"
    } else if key == "inverse_slope" || key == "tangent_dirs" {
        "matrix"
    } else if key == "two_point_shell_max" {
        "real"
    } else {
        "bool"
    }
}

fn json_to_f64(v: &serde_json::Value, place: &str) -> Result<f64> {
    match v {
        serde_json::Value::Number(x) => x
            .as_f64()
            .filter(|f| f.is_finite())
            .ok_or_else(|| VarError::Validation(format!("{place}: number is not finite"))),
        serde_json::Value::String(s) => parse_num_text(s, place),
        _ => Err(VarError::Validation(format!("{place}: expected a number or fraction string"))),
    }
}

fn resolve_expectation(
    id: &str,
    vocab: &[&str],
    key: &str,
    raw: &RawExpectation,
) -> Result<Expectation> {
    let place = format!("'{id}' expectation '{key}'");
    if !vocab.contains(&key) {
        return Err(VarError::Validation(format!(
            "{place}: unknown criterion; this suite knows {}",
            vocab.join(", ")
        )));
    }
    if raw.basis.trim().is_empty() {
        return Err(VarError::Validation(format!("{place}: missing derivation note")));
    }
    let value = match expected_value_kind(key) {
        "dim" => match raw.value.as_u64() {
            Some(d) => ExpectedValue::Dim(d as usize),
            None => {
                return Err(VarError::Validation(format!(
                    "{place}: dimensions must be non-negative integers"
                )))
            }
        },
        "matrix" => {
            let rows = raw.value.as_array().ok_or_else(|| {
                VarError::Validation(format!("{place}: expected an array of rows"))
            })?;
            let mut out = Vec::with_capacity(rows.len());
            for row in rows {
                let cells = row.as_array().ok_or_else(|| {
                    VarError::Validation(format!("{place}: expected an array of rows"))
                })?;
                let parsed: Result<Vec<f64>> =
                    cells.iter().map(|c| json_to_f64(c, &place)).collect();
                out.push(parsed?);
            }
            if out.is_empty() || out.iter().any(|r| r.len() != out[0].len()) {
                return Err(VarError::Validation(format!("{place}: matrix rows must be non-empty and rectangular")));
            }
            ExpectedValue::Matrix(out)
        }
        "real" => ExpectedValue::Real(json_to_f64(&raw.value, &place)?),
        _ => match raw.value.as_bool() {
            Some(b) => ExpectedValue::Bool(b),
            None => {
                return Err(VarError::Validation(format!("{place}: expected true or false")))
            }
        },
    };
    Ok(Expectation { value, basis: raw.basis.clone() })
}

fn resolve_instance<S: Scalar>(raw: &RawInstance) -> Result<CorpusInstance<S>> {
    let id = raw.id.clone();
    let payload = match &raw.payload {
        RawPayload::Map { map } => InstancePayload::Map(resolve_map(&id, map)?),
        RawPayload::Sum { smooth, inner } => {
            let inner_map = resolve_map(&format!("{id}/inner"), inner)?;
            let smooth_map = resolve_smooth(&format!("{id}/smooth"), smooth)?;
            let assembled = SetValuedMap::sum(&id, smooth_map.clone(), inner_map.clone())?;
            InstancePayload::Sum { smooth: smooth_map, inner: inner_map, assembled }
        }
        RawPayload::Prox { function } => InstancePayload::Prox(resolve_prox(&id, function)?),
    };

    let vocab = match &payload {
        InstancePayload::Map(_) => MAP_CRITERIA,
        InstancePayload::Sum { .. } => SUM_CRITERIA,
        InstancePayload::Prox(_) => PROX_CRITERIA,
    };
    if raw.points.is_empty() {
        return Err(VarError::Validation(format!(
            "instance '{id}' has no reference points"
        )));
    }
    if matches!(payload, InstancePayload::Prox(_)) && raw.points.len() != 1 {
        return Err(VarError::Validation(format!(
            "instance '{id}': a prox instance carries exactly one reference point, the one its function is anchored at"
        )));
    }

    let mut points = Vec::with_capacity(raw.points.len());
    for (pi, raw_pt) in raw.points.iter().enumerate() {
        let place = format!("instance '{id}' point {pi}");
        let z: Vec<S> = nums(&raw_pt.z, &place)?;
        validate_point_on_graph(&payload, &z, &place)?;
        if let Some(cd) = raw_pt.chart_dim {
            if cd > z.len() {
                return Err(VarError::Validation(format!(
                    "{place}: chart dimension {cd} exceeds the graph dimension {}",
                    z.len()
                )));
            }
        }
        let supplied = match &raw_pt.cones {
            Some(c) => {
                if !matches!(payload, InstancePayload::Map(_)) {
                    return Err(VarError::Validation(format!(
                        "{place}: supplied cones are only meaningful for map instances"
                    )));
                }
                Some(resolve_cones(&id, z.len(), c)?)
            }
            None => None,
        };
        if supplied.is_none() {
            if let InstancePayload::Map(m) = &payload {
                if matches!(m.body(), MapBody::SmoothUnion(_)) {
                    return Err(VarError::Validation(format!(
                        "{place}: smooth union graphs need supplied cones at every reference point"
                    )));
                }
            }
        }
        let mut expect = BTreeMap::new();
        for (key, raw_exp) in &raw_pt.expect {
            expect.insert(key.clone(), resolve_expectation(&id, vocab, key, raw_exp)?);
        }
        points.push(ReferencePoint { z, chart_dim: raw_pt.chart_dim, expect, supplied });
    }

    Ok(CorpusInstance { id, payload, points })
}

fn validate_point_on_graph<S: Scalar>(
    payload: &InstancePayload<S>,
    z: &[S],
    place: &str,
) -> Result<()> {
    match payload {
        InstancePayload::Map(map) | InstancePayload::Sum { assembled: map, .. } => {
            let total = map.dims().total();
            if z.len() != total {
                return Err(VarError::Validation(format!(
                    "{place}: point has {} coordinates, the graph lives in R^{total}",
                    z.len()
                )));
            }
            if !map.contains(z) {
                return Err(VarError::Validation(format!(
                    "{place}: point is not on the graph (residual {:.3e})",
                    map.graph_residual(z).to_f64().unwrap_or(f64::NAN)
                )));
            }
        }
        InstancePayload::Prox(phi) => {
            if z.len() != 2 * phi.dim() {
                return Err(VarError::Validation(format!(
                    "{place}: point has {} coordinates, expected {}",
                    z.len(),
                    2 * phi.dim()
                )));
            }
            let gap = dist(z, phi.reference());
            if gap > fl(1e-9) {
                return Err(VarError::Validation(format!(
                    "{place}: point must equal the function's anchored reference (distance {:.3e})",
                    gap.to_f64().unwrap_or(f64::NAN)
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_corpus_loads_sorted_with_enough_coverage() {
        let corpus = builtin::<f64>();
        assert!(corpus.len() >= 12, "got {} instances", corpus.len());
        let ids: Vec<&str> = corpus.iter().map(|c| c.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(ids, sorted, "instances must come back sorted by unique id");
        let points: usize = corpus.iter().map(|c| c.points.len()).sum();
        assert!(points >= 30, "got {points} reference points");
    }

    #[test]
    fn empty_text_is_an_empty_corpus() {
        assert!(parse_corpus::<f64>("").unwrap().is_empty());
        assert!(parse_corpus::<f64>("  \n\t ").unwrap().is_empty());
    }

    #[test]
    fn rational_strings_parse_exactly() {
        let text = r#"{
            "schema_version": 1,
            "instances": [{
                "id": "halved",
                "kind": "map",
                "map": {"type": "smooth", "function": {"family": "linear", "matrix": [["1/2"]]}},
                "points": [{"z": [1, "1/2"]}]
            }]
        }"#;
        let corpus = parse_corpus::<f64>(text).unwrap();
        let InstancePayload::Map(map) = &corpus[0].payload else { panic!("expected a map") };
        assert_eq!(map.evaluate(&[3.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn discontinuous_cells_are_rejected_naming_the_face() {
        let text = r#"{
            "schema_version": 1,
            "instances": [{
                "id": "broken_pl",
                "kind": "map",
                "map": {"type": "pl_single", "n": 1, "m": 1, "cells": [
                    {"region": {"leq": [[1, 0]]}, "linear": [[1]]},
                    {"region": {"leq": [[-1, 0]]}, "linear": [[1]], "offset": [1]}
                ]},
                "points": [{"z": [0, 0]}]
            }]
        }"#;
        let err = parse_corpus::<f64>(text).unwrap_err();
        assert!(err.to_string().contains("shared face"), "{err}");
    }

    #[test]
    fn off_graph_points_and_unknown_criteria_are_rejected() {
        let base = r#"{
            "schema_version": 1,
            "instances": [{
                "id": "probe",
                "kind": "map",
                "map": {"type": "smooth", "function": {"family": "poly1", "coeffs": [0, 0, 0, 1]}},
                "points": [{"z": POINT, "expect": EXPECT}]
            }]
        }"#;
        let off = base.replace("POINT", "[1, 2]").replace("EXPECT", "{}");
        let err = parse_corpus::<f64>(&off).unwrap_err();
        assert!(err.to_string().contains("not on the graph"), "{err}");

        let unknown = base.replace("POINT", "[1, 1]").replace(
            "EXPECT",
            r#"{"frobnicates": {"value": true, "basis": "no"}}"#,
        );
        let err = parse_corpus::<f64>(&unknown).unwrap_err();
        assert!(err.to_string().contains("unknown criterion"), "{err}");
    }

    #[test]
    fn duplicate_ids_and_bad_versions_are_rejected() {
        let dup = r#"{
            "schema_version": 1,
            "instances": [
                {"id": "a", "kind": "prox", "function": {"family": "zero"}, "points": [{"z": [0, 0]}]},
                {"id": "a", "kind": "prox", "function": {"family": "zero"}, "points": [{"z": [0, 0]}]}
            ]
        }"#;
        assert!(parse_corpus::<f64>(dup).unwrap_err().to_string().contains("duplicate"));
        let vers = r#"{"schema_version": 7, "instances": []}"#;
        assert!(parse_corpus::<f64>(vers).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn malformed_json_reports_the_position() {
        let err = parse_corpus::<f64>("{\n  \"schema_version\": 1,\n  nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
        assert!(matches!(err, VarError::Parse(_)));
    }

    #[test]
    fn supplied_cones_must_satisfy_the_bundle_laws() {
        let text = r#"{
            "schema_version": 1,
            "instances": [{
                "id": "bad_bundle",
                "kind": "map",
                "map": {"type": "smooth_union", "branches": [
                    {"family": "poly1", "coeffs": [0, 0, 1]},
                    {"family": "poly1", "coeffs": [0, 0, -1]}
                ]},
                "points": [{"z": [0, 0], "cones": {
                    "tangent": [{"lin": [[1, 0]]}],
                    "clarke": {"lin": [[0, 1]]},
                    "paratingent": [{"lin": [[1, 0], [0, 1]]}],
                    "regular_normal": {"lin": [[0, 1]]},
                    "limiting_normal": [{"lin": [[0, 1]]}]
                }}]
            }]
        }"#;
        let err = parse_corpus::<f64>(text).unwrap_err();
        assert!(err.to_string().contains("bundle laws"), "{err}");
    }

    #[test]
    fn prox_points_must_match_the_anchored_reference() {
        let text = r#"{
            "schema_version": 1,
            "instances": [{
                "id": "misanchored",
                "kind": "prox",
                "function": {"family": "abs", "at": [0, 1]},
                "points": [{"z": [0, 0]}]
            }]
        }"#;
        let err = parse_corpus::<f64>(text).unwrap_err();
        assert!(err.to_string().contains("anchored reference"), "{err}");
    }
}
