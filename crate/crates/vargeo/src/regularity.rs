//! Point-based regularity classification. Strong metric subregularity,
//! metric regularity, and strong metric regularity are each decided by an
//! exact kernel condition on a derivative graph, and when the map is strictly
//! proto-differentiable with a chart of the range dimension all three
//! collapse into the nonsingularity of one block of the coderivative basis.

use crate::deriv::{self, DerivativeBundle};
use crate::diagnostics::{self, Consensus};
use crate::linalg::{self, Mat};
use crate::maps::{SetValuedMap, SmoothMap};
use crate::poly::{ConeUnion, ConvexCone};
use crate::scalar::{fl, Scalar, Tol};
use crate::subspace::Subspace;
use crate::{Result, VarError};

/// Outcome of the regularity tests at one graph point.
#[derive(Clone, Debug)]
pub struct RegularityVerdict<S> {
    /// No nonzero `u` with `(u, 0)` in the graphical derivative graph.
    pub strongly_subregular: bool,
    /// Unit direction violating the subregularity kernel condition.
    pub subregularity_witness: Option<Vec<S>>,
    /// No nonzero `y*` with `(y*, 0)` in the coderivative graph.
    pub metrically_regular: bool,
    /// Unit covector violating the regularity kernel condition.
    pub regularity_witness: Option<Vec<S>>,
    /// Metrically regular and no nonzero `u` with `(u, 0)` in the strict
    /// derivative graph.
    pub strongly_regular: bool,
    /// Whether the point qualified for the equivalence theorem (strict
    /// proto-differentiability with a chart of the range dimension), making
    /// the three properties provably identical.
    pub equivalence_applicable: bool,
    /// Slope of the single-valued inverse localization when it exists: the
    /// graphical derivative graph is the range of `(C, I)` and the
    /// coderivative graph is the range of `(Cᵀ, I)`.
    pub inverse_slope: Option<Mat<S>>,
}

/// Directions `u` with `(u, 0)` in the union, where the trailing `tail`
/// coordinates form the zero block. Exact per piece: the slice constraints
/// join the H-representation and the result returns to generators.
pub fn zero_slice<S: Scalar>(union: &ConeUnion<S>, tail: usize) -> ConeUnion<S> {
    let total = union.ambient();
    assert!(tail <= total, "slice width exceeds the ambient dimension");
    let head = total - tail;
    let mut proj = Mat::zeros(head, total);
    for i in 0..head {
        proj[(i, i)] = S::one();
    }
    let mut pieces = Vec::new();
    for piece in union.pieces() {
        let (leq, mut eq) = piece.hrep();
        for j in 0..tail {
            let mut row = vec![S::zero(); total];
            row[head + j] = S::one();
            eq.push(row);
        }
        let sliced = ConvexCone::from_hrep(total, &leq, &eq);
        pieces.push(sliced.linear_image(&proj));
    }
    ConeUnion::new(head, pieces)
}

/// First unit direction spanning the union, if any.
fn kernel_witness<S: Scalar>(union: &ConeUnion<S>) -> Option<Vec<S>> {
    union
        .spanning_dirs()
        .into_iter()
        .find_map(|d| linalg::normalized(&d, fl(1e-9)))
}

/// Strong metric subregularity via the graphical derivative kernel: the
/// verdict is true when `0` in `DF(u)` forces `u = 0`.
pub fn levy_rockafellar<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
) -> Result<(bool, Option<Vec<S>>)> {
    let d = deriv::derivative_bundle(map, center)?;
    Ok(subregularity_kernel(&d))
}

/// Metric regularity via the coderivative kernel: the verdict is true when
/// `0` in `D*F(y*)` forces `y* = 0`.
pub fn mordukhovich<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
) -> Result<(bool, Option<Vec<S>>)> {
    let d = deriv::derivative_bundle(map, center)?;
    Ok(regularity_kernel(&d))
}

/// Strong metric regularity: metric regularity plus a trivial kernel of the
/// strict graphical derivative, which rules out multivalued inverse
/// localizations.
pub fn strong_metric_regular<S: Scalar>(map: &SetValuedMap<S>, center: &[S]) -> Result<bool> {
    let d = deriv::derivative_bundle(map, center)?;
    Ok(regularity_kernel(&d).0 && strict_kernel_trivial(&d))
}

fn subregularity_kernel<S: Scalar>(d: &DerivativeBundle<S>) -> (bool, Option<Vec<S>>) {
    let witness = kernel_witness(&zero_slice(&d.graphical, d.dims.m));
    (witness.is_none(), witness)
}

fn regularity_kernel<S: Scalar>(d: &DerivativeBundle<S>) -> (bool, Option<Vec<S>>) {
    let witness = kernel_witness(&zero_slice(&d.coderivative, d.dims.n));
    (witness.is_none(), witness)
}

fn strict_kernel_trivial<S: Scalar>(d: &DerivativeBundle<S>) -> bool {
    kernel_witness(&zero_slice(&d.strict, d.dims.m)).is_none()
}

/// The three kernel tests on an already computed derivative bundle. Used
/// directly when the bundle is supplied analytically rather than computed
/// from a represented graph.
pub fn regularity_from_derivatives<S: Scalar>(d: &DerivativeBundle<S>) -> RegularityVerdict<S> {
    let (smsr, u) = subregularity_kernel(d);
    let (mr, ystar) = regularity_kernel(d);
    let smr = mr && strict_kernel_trivial(d);
    RegularityVerdict {
        strongly_subregular: smsr,
        subregularity_witness: u,
        metrically_regular: mr,
        regularity_witness: ystar,
        strongly_regular: smr,
        equivalence_applicable: false,
        inverse_slope: None,
    }
}

fn nonsingular<S: Scalar>(m: &Mat<S>) -> bool {
    let sv = linalg::singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&largest), Some(&smallest)) => smallest > fl::<S>(1e-8) * largest,
        _ => false,
    }
}

/// Split a basis into its leading `head` rows and the remainder.
fn split_rows<S: Scalar>(basis: &Mat<S>, head: usize) -> (Mat<S>, Mat<S>) {
    (basis.row_block(0, head), basis.row_block(head, basis.rows()))
}

/// Classify regularity, routing through the equivalence theorem when the map
/// is strictly proto-differentiable at the point with a chart of the range
/// dimension. The theorem reduces everything to one invertibility question
/// and yields the slope of the inverse localization; the independent kernel
/// tests are still run and must agree.
pub fn classify_under_strict_proto<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
) -> Result<RegularityVerdict<S>> {
    let d = deriv::derivative_bundle(map, center)?;
    classify_from_bundle(map, center, &d)
}

fn classify_from_bundle<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
    d: &DerivativeBundle<S>,
) -> Result<RegularityVerdict<S>> {
    let tol = Tol::standard().eq;
    let mut verdict = regularity_from_derivatives(d);

    let strict_sub = match d.strict.is_subspace(tol) {
        Some(l) if l.dim() == d.dims.m => l,
        _ => return Ok(verdict),
    };
    if diagnostics::check_strict_proto(d, Some(d.dims.m), tol).consensus != Consensus::Holds {
        return Ok(verdict);
    }
    if diagnostics::extract_chart(map, center, &strict_sub).is_err() {
        return Ok(verdict);
    }

    let cod = match d.coderivative.is_subspace(tol) {
        Some(l) => l,
        None => return Ok(verdict),
    };
    verdict.equivalence_applicable = true;

    let (a, b) = split_rows(cod.basis(), d.dims.m);
    if !nonsingular(&b) {
        if !(!verdict.strongly_subregular
            && !verdict.metrically_regular
            && !verdict.strongly_regular)
        {
            return Err(VarError::Precondition(
                "singular coderivative block but a kernel test passed; derivative data is inconsistent"
                    .into(),
            ));
        }
        return Ok(verdict);
    }

    let b_inv = linalg::inverse(&b)
        .ok_or_else(|| VarError::Precondition("coderivative block inversion failed".into()))?;
    let c = a.mul(&b_inv).transpose();

    let expected_graphical = Subspace::from_range(&c, &Mat::identity(d.dims.m));
    let graphical_matches = d
        .graphical
        .set_equal(&ConeUnion::from_cone(ConvexCone::from_subspace(&expected_graphical)), tol);
    let expected_cod = Subspace::from_range(&c.transpose(), &Mat::identity(d.dims.n));
    let cod_matches = cod.is_equal_within(&expected_cod, tol);
    let all_true =
        verdict.strongly_subregular && verdict.metrically_regular && verdict.strongly_regular;
    if !(graphical_matches && cod_matches && all_true) {
        return Err(VarError::Precondition(
            "equivalence theorem and kernel tests disagree; derivative data is inconsistent".into(),
        ));
    }
    verdict.inverse_slope = Some(c);
    Ok(verdict)
}

/// Classify the regularity of `x -> g(x) + G(x)` at a point of its graph via
/// the strict derivative of `G` alone: with the strict graph of `G` spanned
/// by stacked blocks `(A, B)`, every regularity property of the sum is
/// equivalent to invertibility of `∇g·A + B`. The same question is asked of
/// the coderivative blocks and of the assembled sum graph as cross-checks.
pub fn classify_sum<S: Scalar>(
    g: &SmoothMap<S>,
    inner: &SetValuedMap<S>,
    center: &[S],
) -> Result<RegularityVerdict<S>> {
    let dims = inner.dims();
    if g.domain_dim() != dims.n || g.range_dim() != dims.m {
        return Err(VarError::Precondition(format!(
            "smooth part maps R^{} to R^{}, the inner map needs R^{} to R^{}",
            g.domain_dim(),
            g.range_dim(),
            dims.n,
            dims.m
        )));
    }
    let (x, y) = dims.split(center);
    let mut inner_center = x.to_vec();
    inner_center.extend(linalg::sub_vec(y, &g.eval(x)));
    let dg = deriv::derivative_bundle(inner, &inner_center)?;
    let tol = Tol::standard().eq;

    let strict = dg.strict.is_subspace(tol).filter(|l| l.dim() == dims.m).ok_or_else(|| {
        VarError::Precondition(
            "the inner map is not strictly proto-differentiable with a chart of the range dimension at the shifted point"
                .into(),
        )
    })?;
    if diagnostics::check_strict_proto(&dg, Some(dims.m), tol).consensus != Consensus::Holds {
        return Err(VarError::Precondition(
            "the inner map is not strictly proto-differentiable at the shifted point".into(),
        ));
    }

    let j = g.jac(x);
    let (a, b) = split_rows(strict.basis(), dims.n);
    let regular = nonsingular(&j.mul(&a).add(&b));

    let cod = dg.coderivative.is_subspace(tol).ok_or_else(|| {
        VarError::Precondition("the inner coderivative graph is not a subspace".into())
    })?;
    let (a_star, b_star) = split_rows(cod.basis(), dims.m);
    let regular_star = nonsingular(&j.transpose().mul(&a_star).add(&b_star));
    if regular != regular_star {
        return Err(VarError::Precondition(
            "derivative and coderivative invertibility criteria disagree for the sum".into(),
        ));
    }

    let assembled = SetValuedMap::sum("sum_classification", g.clone(), inner.clone())?;
    let direct = classify_from_bundle(&assembled, center, &deriv::derivative_bundle(&assembled, center)?)?;
    if direct.strongly_regular != regular
        || direct.metrically_regular != regular
        || direct.strongly_subregular != regular
    {
        return Err(VarError::Precondition(
            "sum criterion disagrees with the direct classification of the assembled graph".into(),
        ));
    }

    Ok(RegularityVerdict {
        strongly_subregular: regular,
        subregularity_witness: direct.subregularity_witness,
        metrically_regular: regular,
        regularity_witness: direct.regularity_witness,
        strongly_regular: regular,
        equivalence_applicable: true,
        inverse_slope: direct.inverse_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::derivative_bundle_from_cones;
    use crate::maps::{abs_subgradient_map, abs_value_map};
    use crate::poly::ConvexPolyhedron;
    use crate::subspace::SplitDims;

    fn linear_map(slope: f64) -> SetValuedMap<f64> {
        SetValuedMap::smooth(SmoothMap::new(
            "linear",
            1,
            1,
            move |x: &[f64]| vec![slope * x[0]],
            move |_: &[f64]| Mat::from_rows(&[vec![slope]]),
        ))
    }

    fn cubic_map() -> SetValuedMap<f64> {
        SetValuedMap::smooth(SmoothMap::new(
            "cubic",
            1,
            1,
            |x: &[f64]| vec![x[0] * x[0] * x[0]],
            |x: &[f64]| Mat::from_rows(&[vec![3.0 * x[0] * x[0]]]),
        ))
    }

    /// Graph of the normal-cone map of the half-line `x >= 0`: the union of
    /// the negative `y` axis and the positive `x` axis.
    fn halfline_normal_map() -> SetValuedMap<f64> {
        let down = ConvexPolyhedron::new(
            2,
            vec![(vec![0.0, 1.0], 0.0)],
            vec![(vec![1.0, 0.0], 0.0)],
        );
        let right = ConvexPolyhedron::new(
            2,
            vec![(vec![-1.0, 0.0], 0.0)],
            vec![(vec![0.0, 1.0], 0.0)],
        );
        SetValuedMap::poly_union("halfline_normals", SplitDims::new(1, 1), vec![down, right])
            .unwrap()
    }

    #[test]
    fn subregularity_kernel_on_smooth_maps() {
        let (ok, w) = levy_rockafellar(&linear_map(2.0), &[0.0, 0.0]).unwrap();
        assert!(ok && w.is_none());

        let (ok, w) = levy_rockafellar(&cubic_map(), &[0.0, 0.0]).unwrap();
        assert!(!ok);
        let w = w.unwrap();
        assert!((w[0].abs() - 1.0).abs() < 1e-9, "unit witness, got {w:?}");

        let (ok, _) = levy_rockafellar(&abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap();
        assert!(ok, "the vertical strict graph meets the zero slice only at 0");
    }

    #[test]
    fn regularity_kernel_on_smooth_maps() {
        let (ok, w) = mordukhovich(&linear_map(0.0), &[0.0, 0.0]).unwrap();
        assert!(!ok, "a constant map is not metrically regular");
        assert!((w.unwrap()[0].abs() - 1.0).abs() < 1e-9);

        let (ok, _) = mordukhovich(&linear_map(2.0), &[0.0, 0.0]).unwrap();
        assert!(ok);
        let (ok, _) = mordukhovich(&abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap();
        assert!(ok);
    }

    #[test]
    fn strong_regularity_distinguishes_the_crossing_parabolas() {
        assert!(strong_metric_regular(&abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap());
        assert!(strong_metric_regular(&linear_map(2.0), &[0.0, 0.0]).unwrap());

        let x_axis = ConvexCone::new(2, vec![], vec![vec![1.0, 0.0]]);
        let y_axis = ConvexCone::new(2, vec![], vec![vec![0.0, 1.0]]);
        let bundle = crate::cones::ConeBundle {
            tangent: ConeUnion::from_cone(x_axis.clone()),
            clarke: x_axis.clone(),
            paratingent: ConeUnion::from_cone(ConvexCone::full(2)),
            regular_normal: y_axis.clone(),
            limiting_normal: ConeUnion::from_cone(y_axis),
        };
        let d = derivative_bundle_from_cones(
            SplitDims::new(1, 1),
            &bundle,
            vec![Subspace::from_cols(2, &[vec![1.0, 0.0]])],
        );
        let verdict = regularity_from_derivatives(&d);
        assert!(!verdict.strongly_regular);
        assert!(!verdict.metrically_regular, "coderivative kernel contains every covector");
        assert!(!verdict.strongly_subregular, "tangent kernel contains the whole axis");
        assert!(verdict.regularity_witness.is_some());
    }

    #[test]
    fn classification_recovers_the_inverse_slope() {
        let v = classify_under_strict_proto(&abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap();
        assert!(v.equivalence_applicable);
        assert!(v.strongly_regular && v.metrically_regular && v.strongly_subregular);
        let c = v.inverse_slope.unwrap();
        assert!(c[(0, 0)].abs() < 1e-9, "the inverse localization is constant");

        let v = classify_under_strict_proto(&linear_map(2.0), &[0.0, 0.0]).unwrap();
        let c = v.inverse_slope.unwrap();
        assert!((c[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn corner_graph_falls_back_to_the_independent_tests() {
        let v = classify_under_strict_proto(&halfline_normal_map(), &[0.0, 0.0]).unwrap();
        assert!(!v.equivalence_applicable);
        assert!(v.inverse_slope.is_none());
        assert!(!v.strongly_subregular, "the positive x axis sits in the zero slice");
        assert!(!v.strongly_regular || v.metrically_regular, "hierarchy");
    }

    #[test]
    fn sum_criterion_matches_the_assembled_graph() {
        let g = SmoothMap::new(
            "identity",
            1,
            1,
            |x: &[f64]| vec![x[0]],
            |_: &[f64]| Mat::from_rows(&[vec![1.0]]),
        );
        let v = classify_sum(&g, &abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap();
        assert!(v.equivalence_applicable && v.strongly_regular);

        let neg = SmoothMap::new(
            "negation",
            1,
            1,
            |x: &[f64]| vec![-x[0]],
            |_: &[f64]| Mat::from_rows(&[vec![-1.0]]),
        );
        let identity_graph = SetValuedMap::poly_union(
            "identity_graph",
            SplitDims::new(1, 1),
            vec![ConvexPolyhedron::new(2, vec![], vec![(vec![1.0, -1.0], 0.0)])],
        )
        .unwrap();
        let v = classify_sum(&neg, &identity_graph, &[0.0, 0.0]).unwrap();
        assert!(!v.strongly_regular && !v.metrically_regular && !v.strongly_subregular);
    }

    #[test]
    fn verdict_hierarchy_on_a_spread_of_points() {
        let maps: Vec<(SetValuedMap<f64>, Vec<f64>)> = vec![
            (abs_value_map(), vec![0.0, 0.0]),
            (abs_value_map(), vec![1.0, 1.0]),
            (abs_subgradient_map(), vec![0.0, 1.0]),
            (halfline_normal_map(), vec![0.0, -1.0]),
            (cubic_map(), vec![1.0, 1.0]),
        ];
        for (map, p) in &maps {
            let v = classify_under_strict_proto(map, p).unwrap();
            assert!(!v.strongly_regular || v.metrically_regular, "{}", map.label());
            assert!(!v.strongly_regular || v.strongly_subregular, "{}", map.label());
        }
    }
}
