//! Set-valued maps `F : R^n => R^m` represented through their graphs.
//!
//! Every analysis in this crate works on the graph `gph F` as a subset of
//! `R^(n+m)`. The map bodies cover the shapes the corpus needs:
//!
//! * [`MapBody::PolyUnion`]: the graph is a finite union of convex polyhedra,
//!   the representation with a fully exact cone calculus;
//! * [`MapBody::PlSingle`]: a continuous piecewise linear function given by
//!   cells, convertible to a polyhedral union of graph pieces;
//! * [`MapBody::Smooth`]: a single continuously differentiable function;
//! * [`MapBody::SmoothUnion`]: a union of smooth graphs, which is generally
//!   not the graph of a function and gets sampled rather than handled exactly;
//! * [`MapBody::Charted`]: the image of another graph under an invertible
//!   affine change of graph coordinates;
//! * [`MapBody::Sum`]: `F = g + G` with `g` smooth and single-valued.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, dist, norm, Mat};
use crate::poly::{ConvexPolyhedron, Face};
use crate::scalar::{fl, Scalar, Tol};
use crate::subspace::SplitDims;
use crate::{Result, VarError};

/// A continuously differentiable map with a closed-form Jacobian.
#[derive(Clone)]
pub struct SmoothMap<S> {
    label: String,
    n: usize,
    m: usize,
    value: Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>,
    jacobian: Arc<dyn Fn(&[S]) -> Mat<S> + Send + Sync>,
}

impl<S: Scalar> SmoothMap<S> {
    pub fn new(
        label: impl Into<String>,
        n: usize,
        m: usize,
        value: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
        jacobian: impl Fn(&[S]) -> Mat<S> + Send + Sync + 'static,
    ) -> Self {
        SmoothMap { label: label.into(), n, m, value: Arc::new(value), jacobian: Arc::new(jacobian) }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain_dim(&self) -> usize {
        self.n
    }

    pub fn range_dim(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n, "smooth map argument dimension");
        let y = (self.value)(x);
        assert_eq!(y.len(), self.m, "smooth map value dimension");
        y
    }

    pub fn jac(&self, x: &[S]) -> Mat<S> {
        let j = (self.jacobian)(x);
        assert_eq!((j.rows(), j.cols()), (self.m, self.n), "smooth map Jacobian shape");
        j
    }
}

impl<S> std::fmt::Debug for SmoothMap<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SmoothMap({}: R^{} -> R^{})", self.label, self.n, self.m)
    }
}

/// One cell of a piecewise linear function: `f(x) = A x + b` on `region`.
#[derive(Clone, Debug)]
pub struct PlCell<S> {
    pub region: ConvexPolyhedron<S>,
    pub linear: Mat<S>,
    pub offset: Vec<S>,
}

/// An invertible affine change of graph coordinates `z -> M z + c`.
#[derive(Clone, Debug)]
pub struct GraphChart<S> {
    forward: Mat<S>,
    inverse: Mat<S>,
    offset: Vec<S>,
}

impl<S: Scalar> GraphChart<S> {
    pub fn new(forward: Mat<S>, offset: Vec<S>) -> Result<Self> {
        if forward.rows() != forward.cols() || forward.rows() != offset.len() {
            return Err(VarError::Validation("graph chart must be square and match its offset".into()));
        }
        let inverse = linalg::inverse(&forward)
            .ok_or_else(|| VarError::Validation("graph chart matrix is singular".into()))?;
        Ok(GraphChart { forward, inverse, offset })
    }

    /// The chart that swaps the two graph blocks, turning `gph F` into
    /// `gph F^{-1}`.
    pub fn swap(dims: SplitDims) -> Self {
        let t = dims.total();
        let mut m = Mat::zeros(t, t);
        for i in 0..dims.m {
            m[(i, dims.n + i)] = S::one();
        }
        for j in 0..dims.n {
            m[(dims.m + j, j)] = S::one();
        }
        GraphChart { inverse: linalg::inverse(&m).expect("permutations are invertible"), forward: m, offset: vec![S::zero(); t] }
    }

    pub fn forward_mat(&self) -> &Mat<S> {
        &self.forward
    }

    pub fn inverse_mat(&self) -> &Mat<S> {
        &self.inverse
    }

    pub fn offset(&self) -> &[S] {
        &self.offset
    }

    pub fn apply(&self, z: &[S]) -> Vec<S> {
        linalg::add_vec(&self.forward.mulvec(z), &self.offset)
    }

    pub fn invert(&self, w: &[S]) -> Vec<S> {
        self.inverse.mulvec(&linalg::sub_vec(w, &self.offset))
    }
}

#[derive(Clone, Debug)]
pub enum MapBody<S> {
    PolyUnion(Vec<ConvexPolyhedron<S>>),
    PlSingle(Vec<PlCell<S>>),
    Smooth(SmoothMap<S>),
    SmoothUnion(Vec<SmoothMap<S>>),
    Charted { chart: GraphChart<S>, inner: Box<SetValuedMap<S>> },
    Sum { smooth: SmoothMap<S>, inner: Box<SetValuedMap<S>> },
}

/// A set-valued map, named for error messages and reports.
#[derive(Clone, Debug)]
pub struct SetValuedMap<S> {
    label: String,
    dims: SplitDims,
    body: MapBody<S>,
}

impl<S: Scalar> SetValuedMap<S> {
    /// Graph given directly as a union of convex polyhedra in `R^(n+m)`.
    pub fn poly_union(
        label: impl Into<String>,
        dims: SplitDims,
        pieces: Vec<ConvexPolyhedron<S>>,
    ) -> Result<Self> {
        let label = label.into();
        if dims.total() > 6 {
            return Err(VarError::Validation(format!(
                "'{label}': polyhedral graphs support total dimension at most 6, got {}",
                dims.total()
            )));
        }
        if pieces.is_empty() || pieces.len() > 8 {
            return Err(VarError::Validation(format!(
                "'{label}': expected between 1 and 8 graph pieces, got {}",
                pieces.len()
            )));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.dim() != dims.total() {
                return Err(VarError::Validation(format!(
                    "'{label}': piece {i} lives in R^{}, the graph space is R^{}",
                    p.dim(),
                    dims.total()
                )));
            }
            if p.is_empty() {
                return Err(VarError::Validation(format!("'{label}': piece {i} is empty")));
            }
        }
        Ok(SetValuedMap { label, dims, body: MapBody::PolyUnion(pieces) })
    }

    /// Continuous piecewise linear function. Construction verifies that the
    /// cell formulas agree wherever two cells meet.
    pub fn pl_single(label: impl Into<String>, dims: SplitDims, cells: Vec<PlCell<S>>) -> Result<Self> {
        let label = label.into();
        if dims.total() > 6 {
            return Err(VarError::Validation(format!(
                "'{label}': polyhedral graphs support total dimension at most 6, got {}",
                dims.total()
            )));
        }
        if cells.is_empty() || cells.len() > 8 {
            return Err(VarError::Validation(format!(
                "'{label}': expected between 1 and 8 cells, got {}",
                cells.len()
            )));
        }
        for (i, cell) in cells.iter().enumerate() {
            if cell.region.dim() != dims.n
                || cell.linear.rows() != dims.m
                || cell.linear.cols() != dims.n
                || cell.offset.len() != dims.m
            {
                return Err(VarError::Validation(format!("'{label}': cell {i} has mismatched shapes")));
            }
            if cell.region.is_empty() {
                return Err(VarError::Validation(format!("'{label}': cell {i} has an empty region")));
            }
        }
        check_pl_continuity(&label, &cells)?;
        Ok(SetValuedMap { label, dims, body: MapBody::PlSingle(cells) })
    }

    pub fn smooth(map: SmoothMap<S>) -> Self {
        let dims = SplitDims::new(map.domain_dim(), map.range_dim());
        SetValuedMap { label: map.label().to_string(), dims, body: MapBody::Smooth(map) }
    }

    /// Union of smooth graphs over a common domain and range.
    pub fn smooth_union(label: impl Into<String>, branches: Vec<SmoothMap<S>>) -> Result<Self> {
        let label = label.into();
        if branches.is_empty() || branches.len() > 4 {
            return Err(VarError::Validation(format!(
                "'{label}': expected between 1 and 4 branches, got {}",
                branches.len()
            )));
        }
        let dims = SplitDims::new(branches[0].domain_dim(), branches[0].range_dim());
        if branches.iter().any(|b| b.domain_dim() != dims.n || b.range_dim() != dims.m) {
            return Err(VarError::Validation(format!("'{label}': branches disagree on dimensions")));
        }
        Ok(SetValuedMap { label, dims, body: MapBody::SmoothUnion(branches) })
    }

    /// The map whose graph is `chart(gph inner)`. The caller chooses how the
    /// transformed coordinates split into arguments and values.
    pub fn charted(
        label: impl Into<String>,
        dims: SplitDims,
        chart: GraphChart<S>,
        inner: SetValuedMap<S>,
    ) -> Result<Self> {
        let label = label.into();
        if dims.total() != inner.dims.total() || chart.forward.rows() != dims.total() {
            return Err(VarError::Validation(format!(
                "'{label}': chart must act on the inner graph space R^{}",
                inner.dims.total()
            )));
        }
        Ok(SetValuedMap { label, dims, body: MapBody::Charted { chart, inner: Box::new(inner) } })
    }

    /// `F = g + G` pointwise: `F(x) = g(x) + G(x)`.
    pub fn sum(label: impl Into<String>, smooth: SmoothMap<S>, inner: SetValuedMap<S>) -> Result<Self> {
        let label = label.into();
        let dims = inner.dims;
        if smooth.domain_dim() != dims.n || smooth.range_dim() != dims.m {
            return Err(VarError::Validation(format!(
                "'{label}': smooth part must map R^{} to R^{}",
                dims.n, dims.m
            )));
        }
        Ok(SetValuedMap { label, dims, body: MapBody::Sum { smooth, inner: Box::new(inner) } })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dims(&self) -> SplitDims {
        self.dims
    }

    pub fn body(&self) -> &MapBody<S> {
        &self.body
    }

    /// Membership tolerance for graph points: exact-arithmetic bodies admit a
    /// tight tolerance, smooth bodies a looser one.
    pub fn graph_tol(&self) -> S {
        let t = Tol::standard();
        match &self.body {
            MapBody::PolyUnion(_) | MapBody::PlSingle(_) => t.graph_exact,
            MapBody::Smooth(_) | MapBody::SmoothUnion(_) => t.graph_smooth,
            MapBody::Charted { inner, .. } => inner.graph_tol(),
            MapBody::Sum { inner, .. } => inner.graph_tol().max(t.graph_smooth),
        }
    }

    /// Distance from `z` to some graph point (zero exactly on the graph, an
    /// upper bound on the true distance elsewhere).
    pub fn graph_residual(&self, z: &[S]) -> S {
        dist(z, &self.project_graph(z))
    }

    pub fn contains(&self, z: &[S]) -> bool {
        self.contains_within(z, self.graph_tol())
    }

    pub fn contains_within(&self, z: &[S], tol: S) -> bool {
        self.graph_residual(z) <= tol * (S::one() + norm(z))
    }

    /// A graph point near `z`: the true nearest point for polyhedral bodies, a
    /// vertical retraction for smooth ones.
    pub fn project_graph(&self, z: &[S]) -> Vec<S> {
        assert_eq!(z.len(), self.dims.total(), "graph point dimension");
        match &self.body {
            MapBody::PolyUnion(pieces) => pieces
                .iter()
                .filter_map(|p| p.project(z))
                .min_by(|a, b| dist(a, z).partial_cmp(&dist(b, z)).unwrap())
                .expect("validated pieces are nonempty"),
            MapBody::PlSingle(cells) => self.pl_graph_pieces(cells)
                .iter()
                .filter_map(|p| p.project(z))
                .min_by(|a, b| dist(a, z).partial_cmp(&dist(b, z)).unwrap())
                .expect("validated cells are nonempty"),
            MapBody::Smooth(f) => {
                let (x, _) = self.dims.split(z);
                let mut out = x.to_vec();
                out.extend(f.eval(x));
                out
            }
            MapBody::SmoothUnion(branches) => {
                let (x, _) = self.dims.split(z);
                branches
                    .iter()
                    .map(|f| {
                        let mut out = x.to_vec();
                        out.extend(f.eval(x));
                        out
                    })
                    .min_by(|a, b| dist(a, z).partial_cmp(&dist(b, z)).unwrap())
                    .expect("validated branch list is nonempty")
            }
            MapBody::Charted { chart, inner } => chart.apply(&inner.project_graph(&chart.invert(z))),
            MapBody::Sum { smooth, inner } => {
                let (x, y) = self.dims.split(z);
                let mut w = x.to_vec();
                w.extend(linalg::sub_vec(y, &smooth.eval(x)));
                let p = inner.project_graph(&w);
                let (px, pv) = inner.dims.split(&p);
                let mut out = px.to_vec();
                out.extend(linalg::add_vec(&smooth.eval(px), pv));
                out
            }
        }
    }

    /// Value of a single-valued body at `x`.
    pub fn evaluate(&self, x: &[S]) -> Result<Vec<S>> {
        assert_eq!(x.len(), self.dims.n, "argument dimension");
        let tol = Tol::standard().member;
        match &self.body {
            MapBody::PlSingle(cells) => cells
                .iter()
                .find(|c| c.region.member(x, tol))
                .map(|c| linalg::add_vec(&c.linear.mulvec(x), &c.offset))
                .ok_or_else(|| VarError::Precondition(format!(
                    "'{}' has no cell containing the evaluation point",
                    self.label
                ))),
            MapBody::Smooth(f) => Ok(f.eval(x)),
            MapBody::PolyUnion(pieces) => {
                let (n, total) = (self.dims.n, self.dims.total());
                let mut value: Option<Vec<S>> = None;
                for piece in pieces {
                    let mut eqs = piece.equalities().to_vec();
                    for i in 0..n {
                        let mut row = vec![S::zero(); total];
                        row[i] = S::one();
                        eqs.push((row, x[i]));
                    }
                    let slice =
                        ConvexPolyhedron::new(total, piece.inequalities().to_vec(), eqs);
                    let mut probe = x.to_vec();
                    probe.extend(vec![S::zero(); self.dims.m]);
                    let Some(z) = slice.project(&probe) else { continue };
                    if slice.tangent_cone(&z, tol)?.span().dim() > 0 {
                        return Err(VarError::Unsupported(format!(
                            "'{}' is not single-valued at the evaluation point",
                            self.label
                        )));
                    }
                    let y = z[n..].to_vec();
                    match &value {
                        None => value = Some(y),
                        Some(v) if dist(v, &y) <= tol * (S::one() + norm(v)) => {}
                        Some(_) => {
                            return Err(VarError::Unsupported(format!(
                                "'{}' is not single-valued at the evaluation point",
                                self.label
                            )))
                        }
                    }
                }
                value.ok_or_else(|| {
                    VarError::Precondition(format!(
                        "'{}' has no graph piece over the evaluation point",
                        self.label
                    ))
                })
            }
            MapBody::Sum { smooth, inner } => {
                Ok(linalg::add_vec(&smooth.eval(x), &inner.evaluate(x)?))
            }
            _ => Err(VarError::Unsupported(format!("'{}' is not single-valued", self.label))),
        }
    }

    /// Jacobians of the cells or branches that meet `x`; for a piecewise
    /// linear function this is the set of limiting Jacobians at `x` once the
    /// lower-dimensional cells are discarded.
    pub fn local_jacobians(&self, x: &[S]) -> Result<Vec<Mat<S>>> {
        let tol = Tol::standard().member;
        match &self.body {
            MapBody::PlSingle(cells) => {
                let mut out: Vec<Mat<S>> = Vec::new();
                for c in cells {
                    if !c.region.member(x, tol) {
                        continue;
                    }
                    let t = c.region.tangent_cone(x, tol)?;
                    if t.span().dim() < self.dims.n {
                        continue;
                    }
                    if !out.iter().any(|a| a.sub(&c.linear).max_abs() <= fl(1e-9)) {
                        out.push(c.linear.clone());
                    }
                }
                if out.is_empty() {
                    return Err(VarError::Precondition(format!(
                        "'{}' has no full-dimensional cell at the base point",
                        self.label
                    )));
                }
                Ok(out)
            }
            MapBody::Smooth(f) => Ok(vec![f.jac(x)]),
            MapBody::Sum { smooth, inner } => {
                let js = inner.local_jacobians(x)?;
                let g = smooth.jac(x);
                Ok(js.into_iter().map(|j| j.add(&g)).collect())
            }
            _ => Err(VarError::Unsupported(format!(
                "'{}' does not expose limiting Jacobians",
                self.label
            ))),
        }
    }

    /// The graph of a piecewise linear function as polyhedral pieces in
    /// `R^(n+m)`: each cell contributes its lifted region constraints plus the
    /// rows `y = A x + b`.
    pub fn pl_graph_pieces(&self, cells: &[PlCell<S>]) -> Vec<ConvexPolyhedron<S>> {
        let (n, m) = (self.dims.n, self.dims.m);
        cells
            .iter()
            .map(|cell| {
                let mut ineqs = Vec::new();
                for (c, d) in cell.region.inequalities() {
                    let mut row = c.clone();
                    row.extend(std::iter::repeat(S::zero()).take(m));
                    ineqs.push((row, *d));
                }
                let mut eqs = Vec::new();
                for (e, f) in cell.region.equalities() {
                    let mut row = e.clone();
                    row.extend(std::iter::repeat(S::zero()).take(m));
                    eqs.push((row, *f));
                }
                for k in 0..m {
                    let mut row = vec![S::zero(); n + m];
                    for j in 0..n {
                        row[j] = -cell.linear[(k, j)];
                    }
                    row[n + k] = S::one();
                    eqs.push((row, cell.offset[k]));
                }
                ConvexPolyhedron::new(n + m, ineqs, eqs)
            })
            .collect()
    }

    /// The polyhedral pieces of the graph, for the bodies that have them.
    pub fn polyhedral_pieces(&self) -> Option<Vec<ConvexPolyhedron<S>>> {
        match &self.body {
            MapBody::PolyUnion(pieces) => Some(pieces.clone()),
            MapBody::PlSingle(cells) => Some(self.pl_graph_pieces(cells)),
            _ => None,
        }
    }

    /// Graph points within `radius` of the graph point `center`, stratified so
    /// that every face of every polyhedral piece through the center (and every
    /// smooth branch through it) contributes.
    pub fn sample_graph_near<R: Rng>(
        &self,
        center: &[S],
        radius: S,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<S>>> {
        if !self.contains(center) {
            return Err(VarError::OffGraph {
                residual: self.graph_residual(center).to_f64().unwrap_or(f64::NAN),
                tol: self.graph_tol().to_f64().unwrap_or(f64::NAN),
            });
        }
        let mut out: Vec<Vec<S>> = vec![center.to_vec()];
        match &self.body {
            MapBody::PolyUnion(_) | MapBody::PlSingle(_) => {
                let pieces = self.polyhedral_pieces().expect("polyhedral body");
                let tol = self.graph_tol();
                let local: Vec<&ConvexPolyhedron<S>> =
                    pieces.iter().filter(|p| p.member(center, tol)).collect();
                for piece in &local {
                    for k in 0..4 {
                        let r = radius * fl::<S>(0.5).powi(k);
                        for face in piece.faces_through(center, r, tol)? {
                            push_unique(&mut out, face.representative);
                        }
                    }
                }
                let mut i = 0;
                while out.len() < count + 1 && i < 8 * count {
                    let piece = local[i % local.len()];
                    let probe = linalg::axpy(center, radius, &gauss_dir(self.dims.total(), rng));
                    if let Some(p) = piece.project(&probe) {
                        if dist(&p, center) <= radius {
                            push_unique(&mut out, p);
                        }
                    }
                    i += 1;
                }
            }
            MapBody::Smooth(f) => {
                self.sample_smooth_branch(f, center, radius, count, rng, &mut out);
            }
            MapBody::SmoothUnion(branches) => {
                let (x, y) = self.dims.split(center);
                let tol = self.graph_tol() * (S::one() + norm(center));
                for f in branches {
                    if dist(&f.eval(x), y) <= tol {
                        self.sample_smooth_branch(f, center, radius, count, rng, &mut out);
                    }
                }
            }
            MapBody::Charted { chart, inner } => {
                let inner_center = chart.invert(center);
                let shrink = S::one() + linalg::spectral_norm(chart.forward_mat());
                let inner_samples =
                    inner.sample_graph_near(&inner_center, radius / shrink, count, rng)?;
                for s in inner_samples {
                    let w = chart.apply(&s);
                    if dist(&w, center) <= radius {
                        push_unique(&mut out, w);
                    }
                }
            }
            MapBody::Sum { smooth, inner } => {
                let (x, y) = self.dims.split(center);
                let mut inner_center = x.to_vec();
                inner_center.extend(linalg::sub_vec(y, &smooth.eval(x)));
                let shrink = S::one() + linalg::spectral_norm(&smooth.jac(x));
                let inner_samples =
                    inner.sample_graph_near(&inner_center, radius / shrink, count, rng)?;
                for s in inner_samples {
                    let (sx, sv) = inner.dims.split(&s);
                    let mut w = sx.to_vec();
                    w.extend(linalg::add_vec(&smooth.eval(sx), sv));
                    if dist(&w, center) <= radius {
                        push_unique(&mut out, w);
                    }
                }
            }
        }
        Ok(out)
    }

    fn sample_smooth_branch<R: Rng>(
        &self,
        f: &SmoothMap<S>,
        center: &[S],
        radius: S,
        count: usize,
        rng: &mut R,
        out: &mut Vec<Vec<S>>,
    ) {
        let (x, _) = self.dims.split(center);
        let shrink = S::one() + linalg::spectral_norm(&f.jac(x));
        let mut tries = 0;
        let mut kept = 0;
        while kept < count && tries < 8 * count {
            let step = gauss_dir(self.dims.n, rng);
            let scale: S = fl::<S>(rng.gen_range(0.05..1.0f64));
            let xs = linalg::axpy(x, radius * scale / shrink, &step);
            let mut w = xs.clone();
            w.extend(f.eval(&xs));
            if dist(&w, center) <= radius {
                push_unique(out, w);
                kept += 1;
            }
            tries += 1;
        }
    }

    /// Faces of all polyhedral pieces through a graph point, paired with the
    /// index of their piece.
    pub fn faces_at(&self, center: &[S], radius: S) -> Result<Vec<(usize, Face<S>)>> {
        let pieces = self.polyhedral_pieces().ok_or_else(|| {
            VarError::Unsupported(format!("'{}' has no polyhedral graph pieces", self.label))
        })?;
        let tol = self.graph_tol();
        let mut out = Vec::new();
        for (i, piece) in pieces.iter().enumerate() {
            if !piece.member(center, tol) {
                continue;
            }
            for face in piece.faces_through(center, radius, tol)? {
                out.push((i, face));
            }
        }
        if out.is_empty() {
            return Err(VarError::OffGraph {
                residual: self.graph_residual(center).to_f64().unwrap_or(f64::NAN),
                tol: tol.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(out)
    }
}

/// Standard normal direction of unit length.
pub(crate) fn gauss_dir<S: Scalar, R: Rng>(dim: usize, rng: &mut R) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..dim).map(|_| fl(rng.sample::<f64, _>(StandardNormal))).collect();
        let n = norm(&v);
        if n > fl(1e-6) {
            return linalg::scale_vec(&v, S::one() / n);
        }
    }
}

fn push_unique<S: Scalar>(out: &mut Vec<Vec<S>>, candidate: Vec<S>) {
    if !out.iter().any(|p| dist(p, &candidate) <= fl(1e-12)) {
        out.push(candidate);
    }
}

/// Sample shared cell boundaries and verify the formulas agree there.
fn check_pl_continuity<S: Scalar>(label: &str, cells: &[PlCell<S>]) -> Result<()> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC0117);
    let tol = fl::<S>(1e-9);
    for i in 0..cells.len() {
        for j in (i + 1)..cells.len() {
            let mut ineqs = cells[i].region.inequalities().to_vec();
            ineqs.extend(cells[j].region.inequalities().iter().cloned());
            let mut eqs = cells[i].region.equalities().to_vec();
            eqs.extend(cells[j].region.equalities().iter().cloned());
            let shared = ConvexPolyhedron::new(cells[i].region.dim(), ineqs, eqs);
            let n = shared.dim();
            let Some(anchor) = shared.project(&vec![S::zero(); n]) else { continue };
            for k in 0..16 {
                let probe = if k == 0 {
                    anchor.clone()
                } else {
                    let step = gauss_dir(n, &mut rng);
                    let scaled = linalg::axpy(&anchor, S::one() + norm(&anchor), &step);
                    match shared.project(&scaled) {
                        Some(p) => p,
                        None => continue,
                    }
                };
                let fi = linalg::add_vec(&cells[i].linear.mulvec(&probe), &cells[i].offset);
                let fj = linalg::add_vec(&cells[j].linear.mulvec(&probe), &cells[j].offset);
                let gap = dist(&fi, &fj);
                if gap > tol * (S::one() + norm(&probe)) {
                    return Err(VarError::Validation(format!(
                        "'{label}': cells {i} and {j} disagree on their shared face near x = {:?} (gap {:.3e})",
                        probe.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>(),
                        gap.to_f64().unwrap_or(f64::NAN),
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `gph |.|` built from two linear cells, as a reusable fixture shape.
pub fn abs_value_map<S: Scalar>() -> SetValuedMap<S> {
    let left = PlCell {
        region: ConvexPolyhedron::new(1, vec![(vec![S::one()], S::zero())], vec![]),
        linear: Mat::from_rows(&[vec![-S::one()]]),
        offset: vec![S::zero()],
    };
    let right = PlCell {
        region: ConvexPolyhedron::new(1, vec![(vec![-S::one()], S::zero())], vec![]),
        linear: Mat::from_rows(&[vec![S::one()]]),
        offset: vec![S::zero()],
    };
    SetValuedMap::pl_single("abs", SplitDims::new(1, 1), vec![left, right]).expect("fixture is continuous")
}

/// `gph` of the subgradient map of the absolute value: the vertical segment
/// at the origin joins the two horizontal branches.
pub fn abs_subgradient_map<S: Scalar>() -> SetValuedMap<S> {
    let one = S::one;
    let left = ConvexPolyhedron::new(
        2,
        vec![(vec![one(), S::zero()], S::zero())],
        vec![(vec![S::zero(), one()], -one())],
    );
    let right = ConvexPolyhedron::new(
        2,
        vec![(vec![-one(), S::zero()], S::zero())],
        vec![(vec![S::zero(), one()], one())],
    );
    let segment = ConvexPolyhedron::new(
        2,
        vec![(vec![S::zero(), one()], one()), (vec![S::zero(), -one()], one())],
        vec![(vec![one(), S::zero()], S::zero())],
    );
    SetValuedMap::poly_union("abs_subgradient", SplitDims::new(1, 1), vec![left, segment, right])
        .expect("fixture pieces are nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn abs_graph_membership_and_residual() {
        let f = abs_value_map::<f64>();
        assert!(f.contains(&[2.0, 2.0]));
        assert!(f.contains(&[-3.0, 3.0]));
        assert!(f.contains(&[0.0, 0.0]));
        assert!(!f.contains(&[1.0, 0.5]));
        let r = f.graph_residual(&[1.0, 0.5]);
        assert!((r - (0.125f64).sqrt()).abs() < 1e-12, "distance to the line y = x, got {r}");
    }

    #[test]
    fn discontinuous_cells_are_rejected() {
        let step_lo = PlCell {
            region: ConvexPolyhedron::new(1, vec![(vec![1.0], 0.0)], vec![]),
            linear: Mat::from_rows(&[vec![0.0]]),
            offset: vec![0.0],
        };
        let step_hi = PlCell {
            region: ConvexPolyhedron::new(1, vec![(vec![-1.0], 0.0)], vec![]),
            linear: Mat::from_rows(&[vec![0.0]]),
            offset: vec![1.0],
        };
        let err = SetValuedMap::pl_single("step", SplitDims::new(1, 1), vec![step_lo, step_hi]).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("cells 0 and 1"), "unexpected message: {msg}");
    }

    #[test]
    fn smooth_square_graph() {
        let f = SetValuedMap::smooth(SmoothMap::new(
            "square",
            1,
            1,
            |x: &[f64]| vec![x[0] * x[0]],
            |x: &[f64]| Mat::from_rows(&[vec![2.0 * x[0]]]),
        ));
        assert!(f.contains(&[2.0, 4.0]));
        assert!(!f.contains(&[2.0, 5.0]));
        assert_eq!(f.evaluate(&[3.0]).unwrap(), vec![9.0]);
    }

    #[test]
    fn smooth_union_holds_both_branches() {
        let up = SmoothMap::new("up", 1, 1, |x: &[f64]| vec![x[0] * x[0]], |x: &[f64]| {
            Mat::from_rows(&[vec![2.0 * x[0]]])
        });
        let down = SmoothMap::new("down", 1, 1, |x: &[f64]| vec![-x[0] * x[0]], |x: &[f64]| {
            Mat::from_rows(&[vec![-2.0 * x[0]]])
        });
        let f = SetValuedMap::smooth_union("pm_square", vec![up, down]).unwrap();
        assert!(f.contains(&[1.0, 1.0]) && f.contains(&[1.0, -1.0]));
        assert!(!f.contains(&[1.0, 0.2]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = f.sample_graph_near(&[0.0, 0.0], 0.25, 40, &mut rng).unwrap();
        let ups = samples.iter().filter(|z| z[1] > 1e-9).count();
        let downs = samples.iter().filter(|z| z[1] < -1e-9).count();
        assert!(ups >= 5 && downs >= 5, "both branches sampled: {ups} up, {downs} down");
        for z in &samples {
            assert!(f.contains(z), "sample off the graph: {z:?}");
        }
    }

    #[test]
    fn swap_chart_builds_the_inverse_graph() {
        let dims = SplitDims::new(1, 1);
        let inv = SetValuedMap::charted(
            "abs_inverse",
            dims.swapped(),
            GraphChart::swap(dims),
            abs_value_map::<f64>(),
        )
        .unwrap();
        assert!(inv.contains(&[2.0, 2.0]));
        assert!(inv.contains(&[2.0, -2.0]));
        assert!(!inv.contains(&[-1.0, 1.0]), "negative values are never taken by abs");
    }

    #[test]
    fn sum_of_linear_and_subgradient() {
        let g = SmoothMap::new("double", 1, 1, |x: &[f64]| vec![2.0 * x[0]], |_: &[f64]| {
            Mat::from_rows(&[vec![2.0]])
        });
        let f = SetValuedMap::sum("shifted", g, abs_subgradient_map::<f64>()).unwrap();
        assert!(f.contains(&[0.0, 0.5]), "0.5 is in [-1,1] + 0");
        assert!(f.contains(&[1.0, 3.0]), "2 + 1");
        assert!(!f.contains(&[1.0, 2.0]));
    }

    #[test]
    fn poly_union_sampling_covers_the_strata() {
        let f = abs_subgradient_map::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = f.sample_graph_near(&[0.0, 1.0], 0.5, 30, &mut rng).unwrap();
        for z in &samples {
            assert!(f.contains(z), "sample off the graph: {z:?}");
        }
        let on_branch = samples.iter().filter(|z| z[0] > 1e-9).count();
        let on_segment = samples.iter().filter(|z| z[0].abs() < 1e-12 && z[1] < 1.0 - 1e-9).count();
        assert!(on_branch >= 1, "the horizontal branch near (0,1) must appear");
        assert!(on_segment >= 1, "the vertical segment below (0,1) must appear");
    }

    #[test]
    fn local_jacobians_of_abs() {
        let f = abs_value_map::<f64>();
        let at_kink = f.local_jacobians(&[0.0]).unwrap();
        assert_eq!(at_kink.len(), 2);
        let at_right = f.local_jacobians(&[1.5]).unwrap();
        assert_eq!(at_right.len(), 1);
        assert_eq!(at_right[0][(0, 0)], 1.0);
    }

    #[test]
    fn evaluate_piecewise() {
        let f = abs_value_map::<f64>();
        assert_eq!(f.evaluate(&[-2.0]).unwrap(), vec![2.0]);
        assert_eq!(f.evaluate(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn off_graph_sampling_is_an_error() {
        let f = abs_value_map::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(f.sample_graph_near(&[1.0, 0.0], 0.1, 5, &mut rng).is_err());
    }
}
