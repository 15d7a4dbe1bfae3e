//! Generalized derivatives of set-valued maps, read off the cone bundle of
//! the graph.
//!
//! With `z = (x, y)` and the base point fixed, the objects are:
//!
//! * graphical derivative `DF`: its graph is the tangent cone of `gph F`;
//! * strict graphical derivative: its graph is the paratingent cone;
//! * coderivative `D*F`: its graph is the image of the limiting normal cone
//!   under the block swap `(a, b) -> (-b, a)`, which reorders `R^(n+m)` into
//!   `R^(m+n)`; the regular coderivative uses the regular normal cone;
//! * SC derivative: the tangent subspaces of the strata on which the graph is
//!   an affine manifold that is also a function graph over the domain;
//! * generalized SC derivative: the tangent subspaces of all affine-manifold
//!   strata, vertical ones included;
//! * the adjoint SC families: the subspace adjoints `L* = S (L^perp)` of the
//!   above, living in the swapped graph space.

use crate::cones::{self, ConeBundle};
use crate::linalg::{self, Mat};
use crate::maps::{MapBody, SetValuedMap};
use crate::poly::ConeUnion;
use crate::scalar::{Scalar, Tol};
use crate::subspace::{SplitDims, Subspace};
use crate::{Result, VarError};

/// Every generalized derivative of one map at one graph point.
#[derive(Clone, Debug)]
pub struct DerivativeBundle<S> {
    pub dims: SplitDims,
    /// Graph of `DF`, a cone in `R^(n+m)`.
    pub graphical: ConeUnion<S>,
    /// Graph of the strict graphical derivative, a cone in `R^(n+m)`.
    pub strict: ConeUnion<S>,
    /// Graph of the regular coderivative, a cone in `R^(m+n)`.
    pub regular_coderivative: ConeUnion<S>,
    /// Graph of the limiting coderivative, a cone in `R^(m+n)`.
    pub coderivative: ConeUnion<S>,
    /// SC derivative: function-graph strata subspaces in `R^(n+m)`.
    pub sc: Vec<Subspace<S>>,
    /// Generalized SC derivative: all affine strata subspaces.
    pub generalized_sc: Vec<Subspace<S>>,
    /// Adjoints of `sc` in `R^(m+n)`.
    pub sc_adjoint: Vec<Subspace<S>>,
    /// Adjoints of `generalized_sc` in `R^(m+n)`.
    pub generalized_sc_adjoint: Vec<Subspace<S>>,
}

/// The block swap `(a, b) -> (-b, a)` from `R^(n+m)` to `R^(m+n)` as a
/// matrix, the graph-space form of passing from normals to coderivatives.
pub fn swap_matrix<S: Scalar>(dims: SplitDims) -> Mat<S> {
    let (n, m) = (dims.n, dims.m);
    let mut out = Mat::zeros(n + m, n + m);
    for i in 0..m {
        out[(i, n + i)] = -S::one();
    }
    for j in 0..n {
        out[(m + j, j)] = S::one();
    }
    out
}

/// All generalized derivatives of `map` at the graph point `center`.
pub fn derivative_bundle<S: Scalar>(map: &SetValuedMap<S>, center: &[S]) -> Result<DerivativeBundle<S>> {
    let bundle = cones::cones_at(map, center)?;
    let (sc, generalized_sc) = sc_families(map, center)?;
    Ok(assemble(map.dims(), &bundle, sc, generalized_sc))
}

/// Build the derivative bundle from an externally supplied cone bundle, for
/// graphs the exact engine does not handle. The SC families are the supplied
/// subspaces, function-graph ones first.
pub fn derivative_bundle_from_cones<S: Scalar>(
    dims: SplitDims,
    bundle: &ConeBundle<S>,
    smooth_strata: Vec<Subspace<S>>,
) -> DerivativeBundle<S> {
    let sc = smooth_strata
        .iter()
        .filter(|l| is_function_graph(l, dims))
        .cloned()
        .collect();
    assemble(dims, bundle, sc, smooth_strata)
}

fn assemble<S: Scalar>(
    dims: SplitDims,
    bundle: &ConeBundle<S>,
    sc: Vec<Subspace<S>>,
    generalized_sc: Vec<Subspace<S>>,
) -> DerivativeBundle<S> {
    let swap = swap_matrix::<S>(dims);
    let sc_adjoint = sc.iter().map(|l| l.adjoint(dims)).collect();
    let generalized_sc_adjoint = generalized_sc.iter().map(|l| l.adjoint(dims)).collect();
    DerivativeBundle {
        dims,
        graphical: bundle.tangent.clone(),
        strict: bundle.paratingent.clone(),
        regular_coderivative: ConeUnion::from_cone(bundle.regular_normal.clone()).linear_image(&swap),
        coderivative: bundle.limiting_normal.linear_image(&swap),
        sc,
        generalized_sc,
        sc_adjoint,
        generalized_sc_adjoint,
    }
}

/// Is the subspace the graph of a linear function of the first block? True
/// exactly when it has dimension `n` and projects onto the domain with full
/// rank.
pub fn is_function_graph<S: Scalar>(l: &Subspace<S>, dims: SplitDims) -> bool {
    if l.dim() != dims.n {
        return false;
    }
    let top = l.basis().row_block(0, dims.n);
    linalg::rank(&top) == dims.n
}

/// For a function-graph subspace, the matrix `A` with `L = rge (I, A)`.
pub fn function_matrix<S: Scalar>(l: &Subspace<S>, dims: SplitDims) -> Option<Mat<S>> {
    if !is_function_graph(l, dims) {
        return None;
    }
    let top = l.basis().row_block(0, dims.n);
    let bottom = l.basis().row_block(dims.n, dims.n + dims.m);
    let top_inv = linalg::inverse(&top)?;
    Some(bottom.mul(&top_inv))
}

/// SC derivative families of the map: function-graph strata subspaces, then
/// all affine strata subspaces.
fn sc_families<S: Scalar>(
    map: &SetValuedMap<S>,
    center: &[S],
) -> Result<(Vec<Subspace<S>>, Vec<Subspace<S>>)> {
    let dims = map.dims();
    let tol = Tol::standard().eq;
    match map.body() {
        MapBody::PolyUnion(_) | MapBody::PlSingle(_) => {
            let geom = cones::poly_local_geometry(map, center)?;
            let mut all: Vec<Subspace<S>> = Vec::new();
            for value in &geom.strata_values {
                if let Some(l) = value.is_subspace(Tol::standard().member) {
                    if !all.iter().any(|k| k.is_equal_within(&l, tol)) {
                        all.push(l);
                    }
                }
            }
            let smooth = all.iter().filter(|l| is_function_graph(l, dims)).cloned().collect();
            Ok((smooth, all))
        }
        MapBody::Smooth(f) => {
            let (x, _) = dims.split(center);
            let l = cones::graph_subspace(&f.jac(x));
            Ok((vec![l.clone()], vec![l]))
        }
        MapBody::SmoothUnion(_) => Err(VarError::Unsupported(format!(
            "'{}' needs a supplied bundle for its SC families",
            map.label()
        ))),
        MapBody::Charted { chart, inner } => {
            let (_, gen_in) = sc_families(inner, &chart.invert(center))?;
            let m = chart.forward_mat();
            let gen_out: Vec<Subspace<S>> = gen_in.iter().map(|l| push_subspace(l, m)).collect();
            let sc_out =
                gen_out.iter().filter(|l| is_function_graph(l, dims)).cloned().collect();
            Ok((sc_out, gen_out))
        }
        MapBody::Sum { smooth, inner } => {
            let (x, y) = dims.split(center);
            let mut inner_center = x.to_vec();
            inner_center.extend(linalg::sub_vec(y, &smooth.eval(x)));
            let (_, gen_in) = sc_families(inner, &inner_center)?;
            let m = cones::sum_graph_derivative(&smooth.jac(x));
            let gen_out: Vec<Subspace<S>> = gen_in.iter().map(|l| push_subspace(l, &m)).collect();
            let sc_out =
                gen_out.iter().filter(|l| is_function_graph(l, dims)).cloned().collect();
            Ok((sc_out, gen_out))
        }
    }
}

fn push_subspace<S: Scalar>(l: &Subspace<S>, m: &Mat<S>) -> Subspace<S> {
    let cols: Vec<Vec<S>> = l.basis().col_iter().map(|c| m.mulvec(&c)).collect();
    Subspace::from_cols(m.rows(), &cols)
}

/// Do two finite subspace families describe the same set of subspaces?
/// Matched greedily by the projection distance.
pub fn subspace_sets_equal<S: Scalar>(a: &[Subspace<S>], b: &[Subspace<S>], tol: S) -> bool {
    let mut used = vec![false; b.len()];
    for l in a {
        let mut found = false;
        for (j, k) in b.iter().enumerate() {
            if !used[j] && l.is_equal_within(k, tol) {
                used[j] = true;
                found = true;
                break;
            }
        }
        if !found {
            return false;
        }
    }
    used.iter().all(|&u| u)
}
