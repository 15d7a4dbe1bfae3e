//! Tangent and normal cone computation for graphs of set-valued maps.
//!
//! The exact path works on polyhedral graph unions. Near a base point the
//! union decomposes into finitely many face strata, and every cone of
//! interest is assembled from the per-stratum tangent cones:
//!
//! * tangent cone: union over the pieces through the point of their tangent
//!   cones;
//! * regular normal cone: polar of the tangent cone;
//! * Clarke tangent cone: intersection over all adjacent strata of the
//!   stratum tangent values (the inner limit of nearby tangent cones);
//! * limiting normal cone: union over all adjacent strata of the stratum
//!   regular normals;
//! * paratingent cone: union over ordered pairs of adjacent faces of the
//!   difference cone between their entry cones, since a secant between two
//!   nearby graph points decomposes as a direction into one face minus a
//!   direction into the other.
//!
//! Smooth graphs get their manifold cones directly; charted and sum bodies
//! push the inner bundle through the derivative of the graph change of
//! coordinates (tangent-type cones by the derivative itself, normal-type
//! cones by its inverse transpose).

use rand::Rng;

use crate::linalg::{self, dist, norm, Mat};
use crate::maps::{MapBody, SetValuedMap};
use crate::poly::{ConeUnion, ConvexCone, Face};
use crate::scalar::{fl, Scalar};
use crate::subspace::Subspace;
use crate::{Result, VarError};

/// The five cones of variational geometry at one graph point.
#[derive(Clone, Debug)]
pub struct ConeBundle<S> {
    pub tangent: ConeUnion<S>,
    pub clarke: ConvexCone<S>,
    pub paratingent: ConeUnion<S>,
    pub regular_normal: ConvexCone<S>,
    pub limiting_normal: ConeUnion<S>,
}

impl<S: Scalar> ConeBundle<S> {
    pub fn ambient(&self) -> usize {
        self.tangent.ambient()
    }

    /// Build the bundle of a linear subspace graph: every tangent-type cone is
    /// the subspace, every normal-type cone its orthogonal complement.
    pub fn from_subspace(t: &Subspace<S>) -> Self {
        let tan = ConvexCone::from_subspace(t);
        let nor = ConvexCone::from_subspace(&t.orthogonal_complement());
        ConeBundle {
            tangent: ConeUnion::from_cone(tan.clone()),
            clarke: tan.clone(),
            paratingent: ConeUnion::from_cone(tan),
            regular_normal: nor.clone(),
            limiting_normal: ConeUnion::from_cone(nor),
        }
    }

    /// Push the bundle through an invertible linear change of graph
    /// coordinates with matrix `m`.
    pub fn transform(&self, m: &Mat<S>) -> ConeBundle<S> {
        let m_norm = linalg::inverse(m).expect("cone transform must be invertible").transpose();
        ConeBundle {
            tangent: self.tangent.linear_image(m),
            clarke: self.clarke.linear_image(m),
            paratingent: self.paratingent.linear_image(m),
            regular_normal: self.regular_normal.linear_image(&m_norm),
            limiting_normal: self.limiting_normal.linear_image(&m_norm),
        }
    }

    /// Structural laws every bundle must satisfy; returns human-readable
    /// violations, empty when all hold.
    pub fn verify(&self, tol: S) -> Vec<String> {
        let mut bad = Vec::new();
        if !self.tangent.contains_cone(&self.clarke, tol) {
            bad.push("clarke tangent escapes the tangent cone".into());
        }
        if !self.paratingent.contains_union(&self.tangent, tol) {
            bad.push("tangent cone escapes the paratingent cone".into());
        }
        let polar_t = self.tangent.polar();
        if !(polar_t.contains_cone(&self.regular_normal, tol)
            && self.regular_normal.contains_cone(&polar_t, tol))
        {
            bad.push("regular normal cone is not the polar of the tangent cone".into());
        }
        if !self.limiting_normal.contains_cone(&self.regular_normal, tol) {
            bad.push("regular normal cone escapes the limiting normal cone".into());
        }
        let polar_n = self.limiting_normal.polar();
        if !(polar_n.contains_cone(&self.clarke, tol) && self.clarke.contains_cone(&polar_n, tol)) {
            bad.push("clarke tangent cone is not the polar of the limiting normal cone".into());
        }
        if !self.paratingent.is_symmetric(tol) {
            bad.push("paratingent cone is not symmetric".into());
        }
        bad
    }
}

/// Exact cone bundle of `gph F` at a graph point.
pub fn cones_at<S: Scalar>(map: &SetValuedMap<S>, center: &[S]) -> Result<ConeBundle<S>> {
    assert_eq!(center.len(), map.dims().total(), "graph point dimension");
    match map.body() {
        MapBody::PolyUnion(_) | MapBody::PlSingle(_) => poly_bundle(map, center),
        MapBody::Smooth(f) => {
            let (x, y) = map.dims().split(center);
            if dist(&f.eval(x), y) > map.graph_tol() * (S::one() + norm(center)) {
                return Err(off_graph(map, center));
            }
            let j = f.jac(x);
            Ok(ConeBundle::from_subspace(&graph_subspace(&j)))
        }
        MapBody::SmoothUnion(_) => Err(VarError::Unsupported(format!(
            "'{}' is a union of smooth graphs; use sampled estimates or a supplied bundle",
            map.label()
        ))),
        MapBody::Charted { chart, inner } => {
            let inner_bundle = cones_at(inner, &chart.invert(center))?;
            Ok(inner_bundle.transform(chart.forward_mat()))
        }
        MapBody::Sum { smooth, inner } => {
            let (x, y) = map.dims().split(center);
            let mut inner_center = x.to_vec();
            inner_center.extend(linalg::sub_vec(y, &smooth.eval(x)));
            let inner_bundle = cones_at(inner, &inner_center)?;
            Ok(inner_bundle.transform(&sum_graph_derivative(&smooth.jac(x))))
        }
    }
}

/// `rge (I, J)`: the tangent subspace of the graph of a differentiable map.
pub fn graph_subspace<S: Scalar>(j: &Mat<S>) -> Subspace<S> {
    Subspace::from_range(&Mat::identity(j.cols()), j)
}

/// Derivative of the graph map `(x, v) -> (x, g(x) + v)` of a smooth
/// perturbation, evaluated where `grad g = j`.
pub fn sum_graph_derivative<S: Scalar>(j: &Mat<S>) -> Mat<S> {
    let (m, n) = (j.rows(), j.cols());
    let mut out = Mat::identity(n + m);
    for r in 0..m {
        for c in 0..n {
            out[(n + r, c)] = j[(r, c)];
        }
    }
    out
}

fn off_graph<S: Scalar>(map: &SetValuedMap<S>, center: &[S]) -> VarError {
    VarError::OffGraph {
        residual: map.graph_residual(center).to_f64().unwrap_or(f64::NAN),
        tol: map.graph_tol().to_f64().unwrap_or(f64::NAN),
    }
}

/// The face strata of a polyhedral graph union around a base point.
pub(crate) struct PolyLocalGeometry<S> {
    /// Faces of every piece through the point.
    pub faces: Vec<Face<S>>,
    /// Tangent cone of the union at a representative of each distinct
    /// stratum, including the stratum of the base point itself.
    pub strata_values: Vec<ConeUnion<S>>,
}

pub(crate) fn poly_local_geometry<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
) -> Result<PolyLocalGeometry<S>> {
    let pieces = map.polyhedral_pieces().expect("polyhedral body");
    let tol = map.graph_tol();
    let d = map.dims().total();
    let local: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].member(center, tol)).collect();
    if local.is_empty() {
        return Err(off_graph(map, center));
    }

    let radius = S::one() + norm(center);
    let mut faces = Vec::new();
    for &i in &local {
        faces.extend(pieces[i].faces_through(center, radius, tol)?);
    }

    // one stratum per distinct local activity pattern of the representatives
    let mut signatures: Vec<Vec<Option<Vec<usize>>>> = Vec::new();
    let mut strata_values = Vec::new();
    for face in &faces {
        let rep = &face.representative;
        let signature: Vec<Option<Vec<usize>>> = pieces
            .iter()
            .map(|p| {
                if p.member(rep, tol) {
                    Some(
                        (0..p.inequalities().len())
                            .filter(|&k| {
                                let (c, dd) = &p.inequalities()[k];
                                (linalg::dot(c, rep) - *dd).abs()
                                    <= tol * (S::one() + norm(rep)) * (S::one() + norm(c))
                            })
                            .collect(),
                    )
                } else {
                    None
                }
            })
            .collect();
        if signatures.contains(&signature) {
            continue;
        }
        let value = ConeUnion::new(
            d,
            pieces
                .iter()
                .filter(|p| p.member(rep, tol))
                .map(|p| p.tangent_cone(rep, tol))
                .collect::<Result<Vec<_>>>()?,
        );
        signatures.push(signature);
        strata_values.push(value);
    }
    Ok(PolyLocalGeometry { faces, strata_values })
}

fn poly_bundle<S: Scalar>(map: &SetValuedMap<S>, center: &[S]) -> Result<ConeBundle<S>> {
    let pieces = map.polyhedral_pieces().expect("polyhedral body");
    let tol = map.graph_tol();
    let d = map.dims().total();
    let local: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].member(center, tol)).collect();
    if local.is_empty() {
        return Err(off_graph(map, center));
    }

    let tangent = ConeUnion::new(
        d,
        local.iter().map(|&i| pieces[i].tangent_cone(center, tol)).collect::<Result<Vec<_>>>()?,
    );
    let regular_normal = tangent.polar();

    let geom = poly_local_geometry(map, center)?;

    let mut clarke_union: Option<ConeUnion<S>> = None;
    for value in &geom.strata_values {
        clarke_union = Some(match clarke_union {
            None => value.clone(),
            Some(acc) => intersect_unions(&acc, value)?,
        });
    }
    let clarke = collapse_to_convex(clarke_union.expect("at least the base stratum exists"), tol)?;

    let limiting_normal = {
        let polars: Vec<ConvexCone<S>> = geom.strata_values.iter().map(|v| v.polar()).collect();
        ConeUnion::new(d, polars)
    };

    let mut secant_pieces = Vec::new();
    for fa in &geom.faces {
        for fb in &geom.faces {
            secant_pieces.push(fa.entry_cone.minkowski_diff(&fb.entry_cone));
        }
    }
    let paratingent = ConeUnion::new(d, secant_pieces);

    Ok(ConeBundle { tangent, clarke, paratingent, regular_normal, limiting_normal })
}

fn intersect_unions<S: Scalar>(a: &ConeUnion<S>, b: &ConeUnion<S>) -> Result<ConeUnion<S>> {
    let mut pieces = Vec::new();
    for pa in a.pieces() {
        for pb in b.pieces() {
            pieces.push(pa.intersect(pb));
        }
    }
    if pieces.len() > 64 {
        return Err(VarError::Unsupported(format!(
            "stratum intersection grew to {} pieces; the graph is too degenerate",
            pieces.len()
        )));
    }
    Ok(ConeUnion::new(a.ambient(), pieces))
}

/// The inner limit of tangent cones is convex; recover that convex cone from
/// its distributed-intersection pieces.
fn collapse_to_convex<S: Scalar>(u: ConeUnion<S>, tol: S) -> Result<ConvexCone<S>> {
    if u.pieces().len() == 1 {
        return Ok(u.pieces()[0].clone());
    }
    let hull = ConvexCone::new(u.ambient(), u.spanning_dirs(), vec![]);
    if u.contains_cone(&hull, tol) {
        return Ok(hull);
    }
    Err(VarError::Precondition(
        "inner tangent limit did not collapse to a convex cone".into(),
    ))
}

/// Tuning for the sampling estimators.
#[derive(Clone, Debug)]
pub struct EstimatorOptions<S> {
    /// Largest sampling radius; the levels shrink dyadically below it.
    pub base_radius: S,
    pub levels: usize,
    pub samples_per_level: usize,
    /// Directions closer than this angle merge into one cluster.
    pub cluster_angle_deg: f64,
}

impl<S: Scalar> Default for EstimatorOptions<S> {
    fn default() -> Self {
        EstimatorOptions { base_radius: fl(0.5), levels: 4, samples_per_level: 24, cluster_angle_deg: 1.0 }
    }
}

/// Unit secant directions from the base point into the graph, clustered.
pub fn estimate_tangent_dirs<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    center: &[S],
    opts: &EstimatorOptions<S>,
    rng: &mut R,
) -> Result<Vec<Vec<S>>> {
    let mut dirs = Vec::new();
    for k in 0..opts.levels {
        let r = opts.base_radius * fl::<S>(0.5).powi(k as i32);
        for s in map.sample_graph_near(center, r, opts.samples_per_level, rng)? {
            let d = linalg::sub_vec(&s, center);
            if let Some(u) = linalg::normalized(&d, fl::<S>(1e-4) * r) {
                dirs.push(u);
            }
        }
    }
    Ok(cluster_dirs(dirs, opts.cluster_angle_deg))
}

/// Unit secant directions between pairs of nearby graph points, clustered.
/// The output is symmetric: both signs of every secant appear.
pub fn estimate_paratingent_dirs<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    center: &[S],
    opts: &EstimatorOptions<S>,
    rng: &mut R,
) -> Result<Vec<Vec<S>>> {
    let mut dirs = Vec::new();
    for k in 0..opts.levels {
        let r = opts.base_radius * fl::<S>(0.5).powi(k as i32);
        let samples = map.sample_graph_near(center, r, opts.samples_per_level, rng)?;
        for i in 0..samples.len() {
            for j in (i + 1)..samples.len() {
                let d = linalg::sub_vec(&samples[i], &samples[j]);
                if let Some(u) = linalg::normalized(&d, fl::<S>(1e-4) * r) {
                    dirs.push(u.clone());
                    dirs.push(linalg::scale_vec(&u, -S::one()));
                }
            }
        }
    }
    Ok(cluster_dirs(dirs, opts.cluster_angle_deg))
}

/// Directions that remain tangent from every sampled base point: candidate
/// directions survive only if stepping along them from each nearby graph
/// point stays close to the graph, which singles out the inner limit.
pub fn estimate_clarke_dirs<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    center: &[S],
    opts: &EstimatorOptions<S>,
    rng: &mut R,
) -> Result<Vec<Vec<S>>> {
    let candidates = estimate_tangent_dirs(map, center, opts, rng)?;
    let mut bases = Vec::new();
    for k in 0..opts.levels {
        let r = opts.base_radius * fl::<S>(0.5).powi(k as i32);
        bases.extend(map.sample_graph_near(center, r, opts.samples_per_level / 2, rng)?);
    }
    let survivors = candidates
        .into_iter()
        .filter(|v| {
            bases.iter().all(|b| {
                let t = (dist(b, center) * fl(0.5)).max(opts.base_radius * fl(1e-3));
                let probe = linalg::axpy(b, t, v);
                map.graph_residual(&probe) <= fl::<S>(0.2) * t
            })
        })
        .collect();
    Ok(survivors)
}

fn cluster_dirs<S: Scalar>(dirs: Vec<Vec<S>>, angle_deg: f64) -> Vec<Vec<S>> {
    let cos_merge = fl::<S>(angle_deg.to_radians().cos());
    let mut kept: Vec<Vec<S>> = Vec::new();
    for d in dirs {
        if !kept.iter().any(|k| linalg::dot(k, &d) >= cos_merge) {
            kept.push(d);
        }
    }
    kept
}

/// Largest angle by which a sampled direction leaves the cone union, in
/// degrees. Zero when every direction is a member.
pub fn max_angle_outside<S: Scalar>(dirs: &[Vec<S>], cone: &ConeUnion<S>) -> S {
    let mut worst = S::zero();
    for d in dirs {
        let gap = cone.distance(d).min(S::one());
        worst = worst.max(gap.asin());
    }
    worst * fl(180.0 / std::f64::consts::PI)
}

/// Largest angle by which a spanning direction of the cone union misses the
/// sampled direction set, in degrees. Measures estimator coverage.
pub fn max_coverage_gap<S: Scalar>(cone: &ConeUnion<S>, dirs: &[Vec<S>]) -> S {
    let mut worst = S::zero();
    for g in cone.spanning_dirs() {
        let gn = match linalg::normalized(&g, fl(1e-12)) {
            Some(u) => u,
            None => continue,
        };
        let mut best = S::one();
        for d in dirs {
            best = best.min(dist(&gn, d).min(dist(&linalg::scale_vec(&gn, -S::one()), d)));
        }
        worst = worst.max((best * fl(0.5)).min(S::one()).asin() * fl(2.0));
    }
    worst * fl(180.0 / std::f64::consts::PI)
}
