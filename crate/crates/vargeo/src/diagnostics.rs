//! Regularity diagnostics: each property is decided by a battery of
//! criteria that are equivalent in theory, so disagreement between applicable
//! criteria signals a computation bug rather than a mathematical edge case.
//!
//! Some criteria are only equivalent to the property when the graph is known
//! to be a Lipschitz manifold of a certain dimension (it has a chart). Those
//! criteria carry an applicability guard and abstain when no chart dimension
//! is supplied: a union of two crossing parabolas, for example, has a
//! singleton SC derivative even though it is not strictly proto-smooth, and
//! only the chart hypothesis rules such graphs out.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::cones::{self, ConeBundle};
use crate::deriv::{self, DerivativeBundle};
use crate::linalg::{self, dist, dot, norm, Mat};
use crate::maps::{MapBody, SetValuedMap};
use crate::scalar::{fl, Scalar, Tol};
use crate::subspace::Subspace;
use crate::{Result, VarError};

/// One criterion's opinion about a property.
#[derive(Clone, Debug)]
pub struct CriterionVote {
    pub name: &'static str,
    pub applicable: bool,
    pub holds: bool,
    pub detail: String,
}

impl CriterionVote {
    pub fn cast(name: &'static str, holds: bool, detail: impl Into<String>) -> Self {
        CriterionVote { name, applicable: true, holds, detail: detail.into() }
    }

    pub fn abstain(name: &'static str, detail: impl Into<String>) -> Self {
        CriterionVote { name, applicable: false, holds: false, detail: detail.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Consensus {
    Holds,
    Fails,
    /// Applicable criteria disagree; this should never happen.
    Inconsistent,
    /// No criterion was applicable.
    Undetermined,
}

#[derive(Clone, Debug)]
pub struct DiagnosticVerdict {
    pub property: &'static str,
    pub votes: Vec<CriterionVote>,
    pub consensus: Consensus,
    /// Dimensions observed along the way (subspace dimensions and the like).
    pub observed_dims: Vec<(&'static str, usize)>,
}

impl DiagnosticVerdict {
    /// Assemble a verdict, deriving the consensus from the applicable votes.
    pub fn from_votes(
        property: &'static str,
        votes: Vec<CriterionVote>,
        observed_dims: Vec<(&'static str, usize)>,
    ) -> DiagnosticVerdict {
        let applicable: Vec<&CriterionVote> = votes.iter().filter(|v| v.applicable).collect();
        let consensus = if applicable.is_empty() {
            Consensus::Undetermined
        } else if applicable.iter().all(|v| v.holds) {
            Consensus::Holds
        } else if applicable.iter().all(|v| !v.holds) {
            Consensus::Fails
        } else {
            Consensus::Inconsistent
        };
        DiagnosticVerdict { property, votes, consensus, observed_dims }
    }
}

fn conclude(
    property: &'static str,
    votes: Vec<CriterionVote>,
    observed_dims: Vec<(&'static str, usize)>,
) -> DiagnosticVerdict {
    DiagnosticVerdict::from_votes(property, votes, observed_dims)
}

/// Is the graph strictly smooth at the base point: do the regular tangent
/// cone and the paratingent cone coincide?
pub fn check_strictly_smooth<S: Scalar>(
    bundle: &ConeBundle<S>,
    chart_dim: Option<usize>,
    tol: S,
) -> DiagnosticVerdict {
    if let Some(d) = chart_dim {
        assert!(d <= bundle.ambient(), "chart dimension exceeds the ambient dimension");
    }
    let mut votes = Vec::new();
    let mut dims = Vec::new();

    let paratingent_subspace = bundle.paratingent.is_subspace(tol);
    let normal_subspace = bundle.limiting_normal.is_subspace(tol);
    if let Some(l) = &paratingent_subspace {
        dims.push(("paratingent", l.dim()));
    }
    if let Some(l) = &normal_subspace {
        dims.push(("limiting_normal", l.dim()));
    }

    // the paratingent collapses onto the inner tangent limit
    let vote_collapse = match &paratingent_subspace {
        Some(l) => {
            let covered = l
                .basis()
                .col_iter()
                .all(|b| bundle.clarke.member(&b, tol) && bundle.clarke.member(&linalg::scale_vec(&b, -S::one()), tol));
            CriterionVote::cast(
                "paratingent_equals_clarke_tangent",
                covered,
                if covered { "both cones are the same subspace".to_string() } else { "the clarke tangent cone is strictly smaller".to_string() },
            )
        }
        None => CriterionVote::cast(
            "paratingent_equals_clarke_tangent",
            false,
            "the paratingent cone is not a subspace",
        ),
    };
    votes.push(vote_collapse);

    // subspace pairing: paratingent and limiting normal are orthogonal complements
    let vote_pairing = match (&paratingent_subspace, &normal_subspace) {
        (Some(tp), Some(nl)) => {
            let ok = tp.orthogonal_complement().is_equal_within(nl, tol);
            CriterionVote::cast(
                "normal_is_orthogonal_complement_of_paratingent",
                ok,
                format!("dim {} against dim {}", tp.dim(), nl.dim()),
            )
        }
        _ => CriterionVote::cast(
            "normal_is_orthogonal_complement_of_paratingent",
            false,
            "paratingent or limiting normal cone is not a subspace",
        ),
    };
    votes.push(vote_pairing);

    // regularity route: normals agree and the tangent cone is already symmetric
    let normals_agree = bundle.limiting_normal.contains_cone(&bundle.regular_normal, tol)
        && bundle
            .limiting_normal
            .pieces()
            .iter()
            .all(|p| bundle.regular_normal.contains_cone(p, tol));
    let tangent_symmetric = bundle.paratingent.contains_union(&bundle.tangent, tol)
        && bundle.tangent.contains_union(&bundle.paratingent, tol);
    votes.push(CriterionVote::cast(
        "normally_regular_with_symmetric_tangent",
        normals_agree && tangent_symmetric,
        format!("normals agree: {normals_agree}, tangent equals paratingent: {tangent_symmetric}"),
    ));

    match chart_dim {
        Some(d) => {
            let ok = paratingent_subspace.as_ref().map_or(false, |l| l.dim() == d)
                && normal_subspace.as_ref().map_or(false, |l| l.dim() == bundle.ambient() - d);
            votes.push(CriterionVote::cast(
                "subspace_dimensions_match_the_chart",
                ok,
                format!("chart dimension {d} in ambient dimension {}", bundle.ambient()),
            ));
        }
        None => votes.push(CriterionVote::abstain(
            "subspace_dimensions_match_the_chart",
            "no chart dimension is certified for this graph",
        )),
    }

    conclude("strictly_smooth", votes, dims)
}

/// Is the map strictly proto-differentiable at the base point: is the strict
/// graphical derivative a subspace that the ordinary graphical derivative
/// already fills?
pub fn check_strict_proto<S: Scalar>(
    d: &DerivativeBundle<S>,
    chart_dim: Option<usize>,
    tol: S,
) -> DiagnosticVerdict {
    let mut votes = Vec::new();
    let mut dims = Vec::new();
    let total = d.dims.total();
    if let Some(dd) = chart_dim {
        assert!(dd <= total, "chart dimension exceeds the graph dimension");
    }

    let strict_subspace = d.strict.is_subspace(tol);
    let coderiv_subspace = d.coderivative.is_subspace(tol);
    if let Some(l) = &strict_subspace {
        dims.push(("strict_derivative", l.dim()));
    }
    if let Some(l) = &coderiv_subspace {
        dims.push(("coderivative", l.dim()));
    }

    let vote_primary = if strict_subspace.is_some() {
        let filled = d.graphical.contains_union(&d.strict, tol)
            && d.strict.contains_union(&d.graphical, tol);
        CriterionVote::cast(
            "graphical_derivative_equals_strict_derivative_subspace",
            filled,
            if filled {
                "tangent and paratingent graphs agree"
            } else {
                "the graphical derivative is strictly smaller"
            },
        )
    } else {
        CriterionVote::cast(
            "graphical_derivative_equals_strict_derivative_subspace",
            false,
            "the strict derivative graph is not a subspace",
        )
    };
    votes.push(vote_primary);

    // adjoint pairing: the coderivative graph is the subspace adjoint of the
    // strict derivative graph
    let vote_adjoint = match &strict_subspace {
        Some(l) => {
            let adj = l.adjoint(d.dims);
            match &coderiv_subspace {
                Some(c) => CriterionVote::cast(
                    "coderivative_is_the_adjoint_of_the_strict_derivative",
                    adj.is_equal_within(c, tol),
                    format!("adjoint dim {} against coderivative dim {}", adj.dim(), c.dim()),
                ),
                None => CriterionVote::cast(
                    "coderivative_is_the_adjoint_of_the_strict_derivative",
                    false,
                    "the coderivative graph is not a subspace",
                ),
            }
        }
        None => CriterionVote::cast(
            "coderivative_is_the_adjoint_of_the_strict_derivative",
            false,
            "the strict derivative graph is not a subspace",
        ),
    };
    votes.push(vote_adjoint);

    match chart_dim {
        Some(dd) => {
            votes.push(CriterionVote::cast(
                "coderivative_graph_is_a_subspace",
                coderiv_subspace.is_some(),
                "under the chart hypothesis this alone decides the property",
            ));
            votes.push(CriterionVote::cast(
                "generalized_sc_derivative_is_a_singleton",
                d.generalized_sc.len() == 1,
                format!("{} affine strata", d.generalized_sc.len()),
            ));
            let dims_ok = strict_subspace.as_ref().map_or(false, |l| l.dim() == dd)
                && coderiv_subspace.as_ref().map_or(false, |l| l.dim() == total - dd);
            votes.push(CriterionVote::cast(
                "subspace_dimensions_match_the_chart",
                dims_ok,
                format!("chart dimension {dd} in graph dimension {total}"),
            ));
        }
        None => {
            votes.push(CriterionVote::abstain(
                "coderivative_graph_is_a_subspace",
                "without a chart a subspace coderivative does not decide the property",
            ));
            votes.push(CriterionVote::abstain(
                "generalized_sc_derivative_is_a_singleton",
                "without a chart a singleton SC family does not decide the property",
            ));
            votes.push(CriterionVote::abstain(
                "subspace_dimensions_match_the_chart",
                "no chart dimension is certified for this graph",
            ));
        }
    }

    conclude("strictly_proto_differentiable", votes, dims)
}

/// Is a single-valued map strictly differentiable at `x`?
pub fn check_strict_differentiability<S: Scalar>(
    map: &SetValuedMap<S>,
    x: &[S],
    tol: S,
) -> Result<DiagnosticVerdict> {
    let y = map.evaluate(x)?;
    let mut center = x.to_vec();
    center.extend(y);
    let d = deriv::derivative_bundle(map, &center)?;
    let mut votes = Vec::new();
    let mut dims = Vec::new();

    match map.local_jacobians(x) {
        Ok(jacs) => {
            dims.push(("limiting_jacobians", jacs.len()));
            votes.push(CriterionVote::cast(
                "limiting_jacobian_is_a_singleton",
                jacs.len() == 1,
                format!("{} limiting Jacobians at the point", jacs.len()),
            ));
        }
        Err(_) => votes.push(CriterionVote::abstain(
            "limiting_jacobian_is_a_singleton",
            "the body does not expose limiting Jacobians",
        )),
    }

    let strict_subspace = d.strict.is_subspace(tol);
    let is_linear_graph = strict_subspace
        .as_ref()
        .map_or(false, |l| deriv::is_function_graph(l, d.dims));
    votes.push(CriterionVote::cast(
        "strict_derivative_is_a_linear_function_graph",
        is_linear_graph
            && d.graphical.contains_union(&d.strict, tol)
            && d.strict.contains_union(&d.graphical, tol),
        match &strict_subspace {
            Some(l) => format!("strict graph dimension {}", l.dim()),
            None => "the strict derivative graph is not a subspace".to_string(),
        },
    ));

    let coderiv_subspace = d.coderivative.is_subspace(tol);
    votes.push(CriterionVote::cast(
        "coderivative_graph_is_a_subspace_of_range_dimension",
        coderiv_subspace.as_ref().map_or(false, |l| l.dim() == d.dims.m),
        format!(
            "coderivative dim {:?}, expected {}",
            coderiv_subspace.as_ref().map(|l| l.dim()),
            d.dims.m
        ),
    ));

    votes.push(CriterionVote::cast(
        "sc_derivative_is_a_singleton",
        d.sc.len() == 1 && d.generalized_sc.len() == 1,
        format!("{} function-graph strata, {} affine strata", d.sc.len(), d.generalized_sc.len()),
    ));

    Ok(conclude("strictly_differentiable", votes, dims))
}

/// Is a single-valued map Frechet differentiable at `x`? Combines the exact
/// tangent shape with a vanishing difference quotient along shrinking radii.
pub fn check_frechet<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    x: &[S],
    tol: S,
    rng: &mut R,
) -> Result<DiagnosticVerdict> {
    let y = map.evaluate(x)?;
    let mut center = x.to_vec();
    center.extend(y.clone());
    let bundle = cones::cones_at(map, &center)?;
    let mut votes = Vec::new();
    let mut dims = Vec::new();

    let tangent_subspace = bundle.tangent.is_subspace(tol);
    let slope = tangent_subspace.as_ref().and_then(|l| deriv::function_matrix(l, map.dims()));
    if let Some(l) = &tangent_subspace {
        dims.push(("tangent", l.dim()));
    }
    votes.push(CriterionVote::cast(
        "tangent_cone_is_a_linear_function_graph",
        slope.is_some(),
        match &tangent_subspace {
            Some(l) => format!("tangent subspace dimension {}", l.dim()),
            None => "the tangent cone is not a subspace".to_string(),
        },
    ));

    match slope {
        Some(a) => {
            let mut ratios = Vec::new();
            for k in 0..=12 {
                let r = fl::<S>(0.1) * fl::<S>(0.5).powi(k);
                let mut worst = S::zero();
                for _ in 0..8 {
                    let u = crate::maps::gauss_dir(map.dims().n, rng);
                    let xs = linalg::axpy(x, r, &u);
                    let fy = map.evaluate(&xs)?;
                    let lin = linalg::add_vec(&y, &a.mulvec(&linalg::sub_vec(&xs, x)));
                    worst = worst.max(dist(&fy, &lin) / r);
                }
                ratios.push(worst);
            }
            let first = ratios[0];
            let last = ratios[ratios.len() - 1];
            let floor = fl::<S>(1e-7) * (S::one() + norm(&y));
            let ok = last <= floor || last <= fl::<S>(0.02) * first.max(floor);
            votes.push(CriterionVote::cast(
                "difference_quotient_vanishes",
                ok,
                format!(
                    "residual ratio {:.3e} at the largest radius, {:.3e} at the smallest",
                    first.to_f64().unwrap_or(f64::NAN),
                    last.to_f64().unwrap_or(f64::NAN)
                ),
            ));
        }
        None => votes.push(CriterionVote::abstain(
            "difference_quotient_vanishes",
            "no candidate derivative to test against",
        )),
    }

    Ok(conclude("frechet_differentiable", votes, dims))
}

/// Tuning for the semismoothness test.
#[derive(Clone, Debug)]
pub struct SemismoothOptions<S> {
    pub base_delta: S,
    pub shells: usize,
    pub samples_per_shell: usize,
    /// The scaled inner products must fall below this on the final shells.
    pub threshold: S,
}

impl<S: Scalar> Default for SemismoothOptions<S> {
    fn default() -> Self {
        SemismoothOptions { base_delta: fl(0.25), shells: 8, samples_per_shell: 16, threshold: fl(0.05) }
    }
}

/// Is the map semismooth* at the graph point: do normals at nearby graph
/// points become orthogonal to the offset from the base point?
pub fn check_semismooth_star<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    center: &[S],
    opts: &SemismoothOptions<S>,
    rng: &mut R,
) -> Result<DiagnosticVerdict> {
    let mut votes = Vec::new();

    // graph route: scaled pairing of limiting normals with the offset
    let mut shell_maxima = Vec::new();
    let mut usable = true;
    for k in 0..opts.shells {
        let delta = opts.base_delta * fl::<S>(0.5).powi(k as i32);
        let samples = map.sample_graph_near(center, delta, opts.samples_per_shell, rng)?;
        let mut worst = S::zero();
        for z in &samples {
            let offset = linalg::sub_vec(z, center);
            let r = norm(&offset);
            if r < delta * fl(0.25) {
                continue;
            }
            let normals = match sample_normal_dirs(map, z) {
                Ok(n) => n,
                Err(VarError::Unsupported(_)) => {
                    usable = false;
                    break;
                }
                Err(e) => return Err(e),
            };
            for w in &normals {
                worst = worst.max(dot(w, &offset).abs() / r);
            }
        }
        if !usable {
            break;
        }
        shell_maxima.push(worst);
    }
    if usable && !shell_maxima.is_empty() {
        let tail = &shell_maxima[shell_maxima.len().saturating_sub(2)..];
        let ok = tail.iter().all(|&v| v < opts.threshold);
        votes.push(CriterionVote::cast(
            "normals_decouple_from_the_offset",
            ok,
            format!(
                "shell maxima {:?}",
                shell_maxima.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>()
            ),
        ));
    } else {
        votes.push(CriterionVote::abstain(
            "normals_decouple_from_the_offset",
            "no exact normals available at sample points",
        ));
    }

    // single-valued route: the best limiting Jacobian explains the increment
    let (x, y) = map.dims().split(center);
    let single_valued = map.evaluate(x).is_ok() && map.local_jacobians(x).is_ok();
    if single_valued {
        let mut maxima = Vec::new();
        for k in 0..opts.shells {
            let delta = opts.base_delta * fl::<S>(0.5).powi(k as i32);
            let mut worst = S::zero();
            for _ in 0..opts.samples_per_shell {
                let u = crate::maps::gauss_dir(map.dims().n, rng);
                let xs = linalg::axpy(x, delta, &u);
                let fy = map.evaluate(&xs)?;
                let jacs = map.local_jacobians(&xs)?;
                let dx = linalg::sub_vec(&xs, x);
                let dy = linalg::sub_vec(&fy, y);
                let best = jacs
                    .iter()
                    .map(|a| dist(&a.mulvec(&dx), &dy))
                    .fold(S::infinity(), |acc, v| acc.min(v));
                worst = worst.max(best / delta);
            }
            maxima.push(worst);
        }
        let tail = &maxima[maxima.len().saturating_sub(2)..];
        let ok = tail.iter().all(|&v| v < opts.threshold);
        votes.push(CriterionVote::cast(
            "limiting_jacobians_explain_the_increment",
            ok,
            format!(
                "shell maxima {:?}",
                maxima.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>()
            ),
        ));
    } else {
        votes.push(CriterionVote::abstain(
            "limiting_jacobians_explain_the_increment",
            "the map is not single-valued with limiting Jacobians",
        ));
    }

    Ok(conclude("semismooth_star", votes, vec![]))
}

/// Unit spanning directions of the limiting normal cone at a graph point,
/// branch normals for unions of smooth graphs.
fn sample_normal_dirs<S: Scalar>(map: &SetValuedMap<S>, z: &[S]) -> Result<Vec<Vec<S>>> {
    if let MapBody::SmoothUnion(branches) = map.body() {
        let (x, y) = map.dims().split(z);
        let tol = map.graph_tol() * (S::one() + norm(z));
        let mut dirs = Vec::new();
        for f in branches {
            if dist(&f.eval(x), y) <= tol {
                let normal = cones::graph_subspace(&f.jac(x)).orthogonal_complement();
                for c in normal.basis().col_iter() {
                    dirs.push(c);
                }
            }
        }
        return Ok(dirs);
    }
    let bundle = cones::cones_at(map, z)?;
    let mut dirs = Vec::new();
    for g in bundle.limiting_normal.spanning_dirs() {
        if let Some(u) = linalg::normalized(&g, fl(1e-12)) {
            dirs.push(u);
        }
    }
    Ok(dirs)
}

/// A verified local description of the graph as a function of a subset of the
/// ambient coordinates.
#[derive(Clone, Debug)]
pub struct ChartCertificate<S> {
    /// Dimension of the graph manifold at the point.
    pub dim: usize,
    /// The ambient coordinates the graph is parameterized by.
    pub coords: Vec<usize>,
    /// Derivative of the remaining coordinates with respect to the selected
    /// ones.
    pub slope: Mat<S>,
    /// Largest relative linearization error seen during verification.
    pub residual: S,
}

impl<S: Scalar> ChartCertificate<S> {
    pub fn complement_coords(&self, total: usize) -> Vec<usize> {
        (0..total).filter(|i| !self.coords.contains(i)).collect()
    }
}

/// Build a chart from the strict derivative subspace: pick coordinate rows of
/// its basis greedily by pivot size until they span, preferring domain
/// coordinates (graph points are retrieved by projection, and the retraction
/// for smooth bodies only moves the range block), then express the rest of
/// the coordinates linearly and verify against sampled graph points.
pub fn extract_chart<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
    strict: &Subspace<S>,
) -> Result<ChartCertificate<S>> {
    let d = strict.dim();
    let total = strict.ambient();
    if d == 0 || d >= total {
        return Err(VarError::Precondition(format!(
            "chart extraction needs a proper subspace, got dimension {d} of {total}"
        )));
    }
    let rows: Vec<Vec<S>> = (0..total).map(|i| strict.basis().row(i).to_vec()).collect();
    let mut work = rows.clone();
    let mut coords: Vec<usize> = Vec::new();
    let select = |coords: &mut Vec<usize>, work: &mut Vec<Vec<S>>, pool: &[usize], floor: S| {
        while coords.len() < d {
            let best = match pool
                .iter()
                .copied()
                .filter(|i| !coords.contains(i) && norm(&work[*i]) > floor)
                .max_by(|&a, &b| norm(&work[a]).partial_cmp(&norm(&work[b])).unwrap())
            {
                Some(i) => i,
                None => return,
            };
            let pivot = linalg::scale_vec(&work[best], S::one() / norm(&work[best]));
            for i in 0..total {
                if i != best {
                    let c = dot(&work[i], &pivot);
                    work[i] = linalg::axpy(&work[i], -c, &pivot);
                }
            }
            coords.push(best);
        }
    };
    let domain: Vec<usize> = (0..map.dims().n).collect();
    let range: Vec<usize> = (map.dims().n..total).collect();
    select(&mut coords, &mut work, &domain, fl(1e-6));
    select(&mut coords, &mut work, &range, fl(1e-9));
    if coords.len() < d {
        return Err(VarError::Precondition(
            "the strict derivative subspace does not project onto any coordinate block".into(),
        ));
    }
    coords.sort_unstable();
    let rest = (0..total).filter(|i| !coords.contains(i)).collect::<Vec<_>>();
    let b = Mat::from_rows(&coords.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
    let a = Mat::from_rows(&rest.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
    let b_inv = linalg::inverse(&b)
        .ok_or_else(|| VarError::Precondition("selected coordinate block is singular".into()))?;
    let slope = a.mul(&b_inv);

    let mut rng = ChaCha8Rng::seed_from_u64(0xCAB);
    let radius = fl::<S>(1e-3) * (S::one() + norm(center));
    let samples = map.sample_graph_near(center, radius, 16, &mut rng)?;
    let mut residual = S::zero();
    for z in &samples {
        let offset = linalg::sub_vec(z, center);
        let r = norm(&offset);
        if r <= radius * fl(1e-6) {
            continue;
        }
        let base: Vec<S> = coords.iter().map(|&i| offset[i]).collect();
        let others: Vec<S> = rest.iter().map(|&i| offset[i]).collect();
        residual = residual.max(dist(&others, &slope.mulvec(&base)) / r);
    }
    // curvature contributes an error proportional to the sampling radius, so
    // the bound only has to reject blocks that fail to parameterize at all
    if residual > fl(0.05) {
        return Err(VarError::Precondition(format!(
            "graph samples deviate from the chart linearization by {:.3e}",
            residual.to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(ChartCertificate { dim: d, coords, slope, residual })
}

/// The graph point whose selected chart coordinates take the given values,
/// found by damped alternating projection between the graph and the
/// coordinate slice.
pub fn chart_point<S: Scalar>(
    map: &SetValuedMap<S>,
    cert: &ChartCertificate<S>,
    center: &[S],
    base: &[S],
) -> Result<Vec<S>> {
    assert_eq!(base.len(), cert.dim, "chart coordinate count");
    let total = center.len();
    let rest = cert.complement_coords(total);
    let tol = fl::<S>(1e-10) * (S::one() + norm(center));

    let delta: Vec<S> = (0..cert.dim).map(|i| base[i] - center[cert.coords[i]]).collect();
    let mut z = center.to_vec();
    for (i, &c) in cert.coords.iter().enumerate() {
        z[c] = base[i];
    }
    let warm = cert.slope.mulvec(&delta);
    for (j, &r) in rest.iter().enumerate() {
        z[r] = z[r] + warm[j];
    }

    for _ in 0..100 {
        let w = map.project_graph(&z);
        let gap = cert
            .coords
            .iter()
            .enumerate()
            .map(|(i, &c)| (w[c] - base[i]).abs())
            .fold(S::zero(), |a, b| a.max(b));
        if gap <= tol {
            return Ok(w);
        }
        z = w.clone();
        for (i, &c) in cert.coords.iter().enumerate() {
            z[c] = w[c] + fl::<S>(0.7) * (base[i] - w[c]);
        }
    }
    Err(VarError::NoConvergence {
        residual: f64::NAN,
        tol: tol.to_f64().unwrap_or(f64::NAN),
        iters: 100,
    })
}

/// Where strict proto-differentiability holds among sampled graph points.
#[derive(Clone, Debug)]
pub struct SurveyReport<S> {
    pub evaluated: usize,
    pub holding: usize,
    /// Sample points where the property failed, capped at eight.
    pub exceptions: Vec<Vec<S>>,
}

/// Sample graph points near the center and test strict proto-differentiability
/// at each, summarizing how generic the property is along the graph.
pub fn ae_strict_proto_survey<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    center: &[S],
    radius: S,
    count: usize,
    rng: &mut R,
) -> Result<SurveyReport<S>> {
    let tol = Tol::standard().eq;
    let samples = map.sample_graph_near(center, radius, count, rng)?;
    let mut holding = 0;
    let mut exceptions = Vec::new();
    for z in &samples {
        let d = deriv::derivative_bundle(map, z)?;
        let verdict = check_strict_proto(&d, None, tol);
        match verdict.consensus {
            Consensus::Holds => holding += 1,
            _ => {
                if exceptions.len() < 8 {
                    exceptions.push(z.clone());
                }
            }
        }
    }
    Ok(SurveyReport { evaluated: samples.len(), holding, exceptions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::derivative_bundle;
    use crate::maps::{abs_subgradient_map, abs_value_map, SetValuedMap, SmoothMap};
    use crate::poly::{ConeUnion, ConvexCone};

    const TOL: f64 = 1e-8;

    fn square_map() -> SetValuedMap<f64> {
        SetValuedMap::smooth(SmoothMap::new(
            "square",
            1,
            1,
            |x: &[f64]| vec![x[0] * x[0]],
            |x: &[f64]| Mat::from_rows(&[vec![2.0 * x[0]]]),
        ))
    }

    /// Cone bundle of the union of the graphs of `x^2` and `-x^2` at the
    /// origin, written down analytically.
    fn crossing_parabolas_bundle() -> ConeBundle<f64> {
        let x_axis = ConvexCone::new(2, vec![], vec![vec![1.0, 0.0]]);
        let y_axis = ConvexCone::new(2, vec![], vec![vec![0.0, 1.0]]);
        ConeBundle {
            tangent: ConeUnion::from_cone(x_axis.clone()),
            clarke: x_axis,
            paratingent: ConeUnion::from_cone(ConvexCone::full(2)),
            regular_normal: y_axis.clone(),
            limiting_normal: ConeUnion::from_cone(y_axis),
        }
    }

    #[test]
    fn strictly_smooth_inside_the_segment() {
        let f = abs_subgradient_map::<f64>();
        let b = cones::cones_at(&f, &[0.0, 0.0]).unwrap();
        let v = check_strictly_smooth(&b, Some(1), TOL);
        assert_eq!(v.consensus, Consensus::Holds, "{:#?}", v.votes);
        assert!(v.observed_dims.contains(&("paratingent", 1)));
        assert!(v.observed_dims.contains(&("limiting_normal", 1)));
    }

    #[test]
    fn strictly_smooth_fails_at_the_kink_without_disagreement() {
        let f = abs_value_map::<f64>();
        let b = cones::cones_at(&f, &[0.0, 0.0]).unwrap();
        let v = check_strictly_smooth(&b, Some(1), TOL);
        assert_eq!(v.consensus, Consensus::Fails, "{:#?}", v.votes);
    }

    #[test]
    fn crossing_parabolas_fail_consistently_without_a_chart() {
        let b = crossing_parabolas_bundle();
        let v = check_strictly_smooth(&b, None, TOL);
        assert_eq!(v.consensus, Consensus::Fails, "{:#?}", v.votes);
        let d = deriv::derivative_bundle_from_cones(
            crate::subspace::SplitDims::new(1, 1),
            &b,
            vec![Subspace::from_cols(2, &[vec![1.0, 0.0]])],
        );
        let vp = check_strict_proto(&d, None, TOL);
        assert_eq!(vp.consensus, Consensus::Fails, "{:#?}", vp.votes);
        let singleton_vote = vp
            .votes
            .iter()
            .find(|v| v.name == "generalized_sc_derivative_is_a_singleton")
            .unwrap();
        assert!(
            !singleton_vote.applicable,
            "the singleton criterion must abstain without a chart, or it would disagree"
        );
    }

    #[test]
    fn strict_proto_holds_inside_the_segment_and_fails_at_the_corner() {
        let f = abs_subgradient_map::<f64>();
        let inside = derivative_bundle(&f, &[0.0, 0.0]).unwrap();
        let v = check_strict_proto(&inside, Some(1), TOL);
        assert_eq!(v.consensus, Consensus::Holds, "{:#?}", v.votes);
        assert!(v.observed_dims.contains(&("strict_derivative", 1)));
        assert!(v.observed_dims.contains(&("coderivative", 1)));

        let corner = derivative_bundle(&f, &[0.0, 1.0]).unwrap();
        let v = check_strict_proto(&corner, Some(1), TOL);
        assert_eq!(v.consensus, Consensus::Fails, "{:#?}", v.votes);
    }

    #[test]
    fn strict_differentiability_battery_on_abs() {
        let f = abs_value_map::<f64>();
        let at_kink = check_strict_differentiability(&f, &[0.0], TOL).unwrap();
        assert_eq!(at_kink.consensus, Consensus::Fails, "{:#?}", at_kink.votes);
        let off_kink = check_strict_differentiability(&f, &[1.0], TOL).unwrap();
        assert_eq!(off_kink.consensus, Consensus::Holds, "{:#?}", off_kink.votes);
        let smooth = check_strict_differentiability(&square_map(), &[0.5], TOL).unwrap();
        assert_eq!(smooth.consensus, Consensus::Holds, "{:#?}", smooth.votes);
    }

    #[test]
    fn frechet_battery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let smooth = check_frechet(&square_map(), &[0.0], TOL, &mut rng).unwrap();
        assert_eq!(smooth.consensus, Consensus::Holds, "{:#?}", smooth.votes);
        let kink = check_frechet(&abs_value_map::<f64>(), &[0.0], TOL, &mut rng).unwrap();
        assert_eq!(kink.consensus, Consensus::Fails, "{:#?}", kink.votes);
    }

    #[test]
    fn semismooth_star_holds_for_polyhedral_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = SemismoothOptions::default();
        let at_kink =
            check_semismooth_star(&abs_value_map::<f64>(), &[0.0, 0.0], &opts, &mut rng).unwrap();
        assert_eq!(at_kink.consensus, Consensus::Holds, "{:#?}", at_kink.votes);
        let at_corner =
            check_semismooth_star(&abs_subgradient_map::<f64>(), &[0.0, 1.0], &opts, &mut rng).unwrap();
        assert_eq!(at_corner.consensus, Consensus::Holds, "{:#?}", at_corner.votes);
    }

    #[test]
    fn chart_of_the_abs_branch() {
        let f = abs_value_map::<f64>();
        let d = derivative_bundle(&f, &[1.0, 1.0]).unwrap();
        let strict = d.strict.is_subspace(TOL).unwrap();
        let cert = extract_chart(&f, &[1.0, 1.0], &strict).unwrap();
        assert_eq!(cert.dim, 1);
        assert!(cert.residual < 1e-8);
        let p = chart_point(&f, &cert, &[1.0, 1.0], &[1.25]).unwrap();
        assert!(f.contains(&p));
        assert!((p[cert.coords[0]] - 1.25).abs() < 1e-9);
    }

    #[test]
    fn chart_of_the_vertical_segment_uses_the_second_coordinate() {
        let f = abs_subgradient_map::<f64>();
        let d = derivative_bundle(&f, &[0.0, 0.0]).unwrap();
        let strict = d.strict.is_subspace(TOL).unwrap();
        let cert = extract_chart(&f, &[0.0, 0.0], &strict).unwrap();
        assert_eq!(cert.coords, vec![1], "the graph is vertical, so y parameterizes it");
        let p = chart_point(&f, &cert, &[0.0, 0.0], &[0.5]).unwrap();
        assert!(f.contains(&p));
        assert!(p[0].abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn survey_flags_the_kink_and_nothing_else() {
        let f = abs_value_map::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let report = ae_strict_proto_survey(&f, &[0.0, 0.0], 0.5, 24, &mut rng).unwrap();
        assert!(report.evaluated > 10);
        assert_eq!(
            report.evaluated - report.holding,
            report.exceptions.len(),
            "every failure is reported"
        );
        for z in &report.exceptions {
            assert!(linalg::norm(z) < 1e-9, "only the kink itself fails, got {z:?}");
        }
        assert!(report.holding >= report.evaluated - 1);
    }
}
