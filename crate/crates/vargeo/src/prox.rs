//! Prox-regular functions and their subgradient geometry: proximal mappings,
//! Moreau envelopes, attentive localizations of the subgradient graph via the
//! prox parametrization, a strict proto-differentiability battery for
//! subgradient maps, and trapezoidal-rule decay reports.
//!
//! All sampling near the reference point routes through `u -> (P(u),
//! (u-P(u))/lambda)`. That parametrization only produces graph points whose
//! function values stay near the reference value, which is exactly the
//! attentiveness the subgradient graph needs when plain metric closeness
//! admits value jumps.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cones::{self, ConeBundle};
use crate::deriv::{self, DerivativeBundle};
use crate::diagnostics::{self, Consensus, CriterionVote, DiagnosticVerdict, SemismoothOptions};
use crate::linalg::{self, dist, dot, norm, Mat};
use crate::maps::{GraphChart, MapBody, SetValuedMap, SmoothMap};
use crate::poly::ConvexPolyhedron;
use crate::scalar::{fl, Scalar, Tol};
use crate::subspace::SplitDims;
use crate::{Result, VarError};

/// A function given by a value oracle together with a structured
/// representation of its subgradient graph and a certified reference point on
/// that graph. `prox_r` is the prox-regularity parameter, `prox_eps` the
/// attentiveness margin, and `window_radius` the radius around the reference
/// inside which proximal computations are certified.
#[derive(Clone)]
pub struct ProxRegularFunction<S> {
    label: String,
    n: usize,
    evaluate: Arc<dyn Fn(&[S]) -> S + Send + Sync>,
    subgrad_graph: SetValuedMap<S>,
    prox_r: S,
    prox_eps: S,
    reference: Vec<S>,
    window_radius: S,
    closed_form_prox: Option<Arc<dyn Fn(S, &[S]) -> Vec<S> + Send + Sync>>,
}

impl<S: std::fmt::Debug> std::fmt::Debug for ProxRegularFunction<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ProxRegularFunction({}: R^{}, r = {:?}, eps = {:?}, reference {:?})",
            self.label, self.n, self.prox_r, self.prox_eps, self.reference
        )
    }
}

impl<S: Scalar> ProxRegularFunction<S> {
    pub fn new(
        label: impl Into<String>,
        n: usize,
        evaluate: impl Fn(&[S]) -> S + Send + Sync + 'static,
        subgrad_graph: SetValuedMap<S>,
        prox_r: S,
        prox_eps: S,
        reference: Vec<S>,
        window_radius: S,
        closed_form_prox: Option<Arc<dyn Fn(S, &[S]) -> Vec<S> + Send + Sync>>,
    ) -> Result<Self> {
        let label = label.into();
        let dims = subgrad_graph.dims();
        if dims.n != n || dims.m != n {
            return Err(VarError::Validation(format!(
                "'{label}': the subgradient graph must live in R^{n} x R^{n}"
            )));
        }
        if reference.len() != 2 * n {
            return Err(VarError::Validation(format!(
                "'{label}': the reference point must pair a point with a subgradient"
            )));
        }
        if !(prox_r >= S::zero() && prox_eps > S::zero() && window_radius > S::zero()) {
            return Err(VarError::Validation(format!(
                "'{label}': prox parameters must satisfy r >= 0, eps > 0, window > 0"
            )));
        }
        if !subgrad_graph.contains(&reference) {
            return Err(VarError::Validation(format!(
                "'{label}': the reference point is not on the subgradient graph"
            )));
        }
        let out = ProxRegularFunction {
            label,
            n,
            evaluate: Arc::new(evaluate),
            subgrad_graph,
            prox_r,
            prox_eps,
            reference,
            window_radius,
            closed_form_prox,
        };
        out.validate_prox_inequality()?;
        Ok(out)
    }

    /// Spot-check the defining inequality of prox-regularity on attentive
    /// graph samples against nearby trial points.
    fn validate_prox_inequality(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11E);
        let (xbar, _) = self.dims().split(&self.reference);
        let fbar = self.value(xbar);
        let scale = fl::<S>(1e-9) * (S::one() + fbar.abs());
        let radius = self.window_radius.min(S::one());

        let samples = self.attentive_samples(radius, 12, &mut rng)?;
        for z in &samples {
            let (x, xstar) = self.dims().split(z);
            if self.value(x) >= fbar + self.prox_eps {
                continue;
            }
            for _ in 0..6 {
                let step = crate::maps::gauss_dir(self.n, &mut rng);
                let xp = linalg::axpy(xbar, radius * fl(0.5), &step);
                let fxp = self.value(&xp);
                if !fxp.is_finite() {
                    continue;
                }
                let d = dist(&xp, x);
                let lower = self.value(x) + dot(xstar, &linalg::sub_vec(&xp, x))
                    - self.prox_r * fl::<S>(0.5) * d * d;
                if fxp < lower - scale {
                    return Err(VarError::Validation(format!(
                        "'{}': prox-regularity inequality fails at sampled x={:?}, x'={:?}",
                        self.label, x, xp
                    )));
                }
            }
        }
        Ok(())
    }

    /// Attentive graph samples near the reference: through the prox
    /// parametrization when a closed form is available, otherwise by direct
    /// graph sampling filtered by the attentiveness bound.
    fn attentive_samples<R: Rng>(
        &self,
        radius: S,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<S>>> {
        if self.closed_form_prox.is_some() {
            let lambda = self.default_lambda();
            let ubar = self.prox_center(lambda);
            let mut out = vec![self.reference.clone()];
            for _ in 0..count {
                let u = linalg::axpy(&ubar, radius, &crate::maps::gauss_dir(self.n, rng));
                if let Ok(z) = self.prox_graph_point(lambda, &u) {
                    out.push(z);
                }
            }
            return Ok(out);
        }
        let (xbar, _) = self.dims().split(&self.reference);
        let bound = self.value(xbar) + self.prox_eps;
        let raw = self.subgrad_graph.sample_graph_near(&self.reference, radius, count, rng)?;
        Ok(raw
            .into_iter()
            .filter(|z| {
                let (x, _) = self.dims().split(z);
                self.value(x) < bound
            })
            .collect())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn dims(&self) -> SplitDims {
        self.subgrad_graph.dims()
    }

    pub fn value(&self, x: &[S]) -> S {
        (self.evaluate)(x)
    }

    pub fn subgrad_graph(&self) -> &SetValuedMap<S> {
        &self.subgrad_graph
    }

    pub fn reference(&self) -> &[S] {
        &self.reference
    }

    pub fn prox_r(&self) -> S {
        self.prox_r
    }

    pub fn prox_eps(&self) -> S {
        self.prox_eps
    }

    pub fn window_radius(&self) -> S {
        self.window_radius
    }

    /// Conservative default step: well inside `(0, 1/r)` and never above 1/2.
    pub fn default_lambda(&self) -> S {
        fl::<S>(0.5).min(fl::<S>(0.9) / self.prox_r.max(S::one()))
    }

    /// The prox-space image of the reference point, `x̄ + λx̄*`.
    pub fn prox_center(&self, lambda: S) -> Vec<S> {
        let (x, xstar) = self.dims().split(&self.reference);
        linalg::axpy(x, lambda, xstar)
    }

    /// The graph point reached through the prox parametrization at `u`.
    fn prox_graph_point(&self, lambda: S, u: &[S]) -> Result<Vec<S>> {
        let p = prox_map(self, lambda, u)?;
        let mut z = p.clone();
        z.extend(linalg::scale_vec(&linalg::sub_vec(u, &p), S::one() / lambda));
        Ok(z)
    }
}

fn assert_lambda<S: Scalar>(phi: &ProxRegularFunction<S>, lambda: S) {
    assert!(lambda > S::zero(), "prox step must be positive");
    assert!(
        lambda * phi.prox_r < S::one(),
        "prox step must stay below the reciprocal prox-regularity parameter"
    );
}

/// The proximal point `argmin φ(x) + ‖x-u‖²/(2λ)` within the certified
/// window, via the closed form when supplied, otherwise by stationarity
/// solves started from every piece of the subgradient graph, or Newton for a
/// smooth subgradient. The result is verified to solve the stationarity
/// inclusion.
pub fn prox_map<S: Scalar>(phi: &ProxRegularFunction<S>, lambda: S, u: &[S]) -> Result<Vec<S>> {
    assert_lambda(phi, lambda);
    assert_eq!(u.len(), phi.n, "prox query dimension");
    let ubar = phi.prox_center(lambda);
    if dist(u, &ubar) > phi.window_radius {
        return Err(VarError::Precondition(format!(
            "'{}': prox query {:.3e} from the window center exceeds the certified radius {:.3e}",
            phi.label,
            dist(u, &ubar).to_f64().unwrap_or(f64::NAN),
            phi.window_radius.to_f64().unwrap_or(f64::NAN)
        )));
    }

    let candidates: Vec<Vec<S>> = if let Some(cf) = &phi.closed_form_prox {
        vec![cf(lambda, u)]
    } else if let Some(pieces) = phi.subgrad_graph.polyhedral_pieces() {
        let mut found = Vec::new();
        for piece in &pieces {
            if let Some(x) = stationary_point_on_piece(piece, phi.n, lambda, u, &phi.reference) {
                found.push(x);
            }
        }
        if found.is_empty() {
            return Err(VarError::NoConvergence { residual: f64::NAN, tol: 1e-9, iters: 0 });
        }
        found
    } else if let MapBody::Smooth(g) = phi.subgrad_graph.body() {
        let (xbar, _) = phi.dims().split(&phi.reference);
        vec![newton_prox(g, lambda, u, xbar)?]
    } else {
        return Err(VarError::Unsupported(
            "proximal solve needs a closed form, a polyhedral graph, or a smooth subgradient"
                .into(),
        ));
    };

    let best = candidates
        .into_iter()
        .min_by(|a, b| {
            prox_objective(phi, lambda, u, a)
                .partial_cmp(&prox_objective(phi, lambda, u, b))
                .unwrap()
        })
        .expect("candidate list is nonempty");

    let mut z = best.clone();
    z.extend(linalg::scale_vec(&linalg::sub_vec(u, &best), S::one() / lambda));
    let residual = phi.subgrad_graph.graph_residual(&z);
    let tol = fl::<S>(1e-9) * (S::one() + norm(&z));
    if residual > tol {
        return Err(VarError::NoConvergence {
            residual: residual.to_f64().unwrap_or(f64::NAN),
            tol: tol.to_f64().unwrap_or(f64::NAN),
            iters: 1,
        });
    }
    Ok(best)
}

fn prox_objective<S: Scalar>(phi: &ProxRegularFunction<S>, lambda: S, u: &[S], x: &[S]) -> S {
    let d = dist(x, u);
    phi.value(x) + d * d / (fl::<S>(2.0) * lambda)
}

/// Solve the stationarity condition `(x, (u-x)/λ) ∈ piece` by adding the
/// linear prox equations to the piece and projecting the reference onto the
/// resulting slice.
fn stationary_point_on_piece<S: Scalar>(
    piece: &ConvexPolyhedron<S>,
    n: usize,
    lambda: S,
    u: &[S],
    reference: &[S],
) -> Option<Vec<S>> {
    let mut eqs: Vec<(Vec<S>, S)> = piece.equalities().to_vec();
    for i in 0..n {
        let mut row = vec![S::zero(); 2 * n];
        row[i] = S::one();
        row[n + i] = lambda;
        eqs.push((row, u[i]));
    }
    let sliced = ConvexPolyhedron::new(2 * n, piece.inequalities().to_vec(), eqs);
    let z = sliced.project(reference)?;
    Some(z[..n].to_vec())
}

fn newton_prox<S: Scalar>(g: &SmoothMap<S>, lambda: S, u: &[S], start: &[S]) -> Result<Vec<S>> {
    let n = u.len();
    let mut x = start.to_vec();
    let tol = fl::<S>(1e-12) * (S::one() + norm(u));
    for _ in 0..50 {
        let r = linalg::sub_vec(&linalg::axpy(&x, lambda, &g.eval(&x)), u);
        if norm(&r) <= tol {
            return Ok(x);
        }
        let j = Mat::identity(n).add(&g.jac(&x).scale(lambda));
        let step = linalg::solve(&j, &r).ok_or(VarError::NoConvergence {
            residual: norm(&r).to_f64().unwrap_or(f64::NAN),
            tol: tol.to_f64().unwrap_or(f64::NAN),
            iters: 50,
        })?;
        x = linalg::sub_vec(&x, &step);
    }
    let r = linalg::sub_vec(&linalg::axpy(&x, lambda, &g.eval(&x)), u);
    if norm(&r) <= tol {
        Ok(x)
    } else {
        Err(VarError::NoConvergence {
            residual: norm(&r).to_f64().unwrap_or(f64::NAN),
            tol: tol.to_f64().unwrap_or(f64::NAN),
            iters: 50,
        })
    }
}

/// `e_λ(u) = φ(P_λ(u)) + ‖P_λ(u)-u‖²/(2λ)`.
pub fn moreau_envelope<S: Scalar>(phi: &ProxRegularFunction<S>, lambda: S, u: &[S]) -> Result<S> {
    let p = prox_map(phi, lambda, u)?;
    Ok(prox_objective(phi, lambda, u, &p))
}

/// `∇e_λ(u) = (u - P_λ(u))/λ`.
pub fn envelope_gradient<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
    u: &[S],
) -> Result<Vec<S>> {
    let p = prox_map(phi, lambda, u)?;
    Ok(linalg::scale_vec(&linalg::sub_vec(u, &p), S::one() / lambda))
}

/// The attentive localization of the subgradient graph at the reference: a
/// charted map whose inner graph is the proximal mapping, with a window
/// radius on which every retained graph point obeys the attentiveness bound.
#[derive(Clone)]
pub struct AttentiveLocalization<S> {
    pub lambda: S,
    /// Graph-coordinate map whose graph is the localized subgradient graph.
    pub as_map: SetValuedMap<S>,
    /// Validated radius around the reference point.
    pub window_radius: S,
    /// The reference point `(x̄, x̄*)`.
    pub center: Vec<S>,
}

impl<S: Scalar> AttentiveLocalization<S> {
    /// The single-valued inner map `u -> P_λ(u)`.
    pub fn prox_view(&self) -> &SetValuedMap<S> {
        match self.as_map.body() {
            MapBody::Charted { inner, .. } => inner,
            _ => unreachable!("localizations are built as charted maps"),
        }
    }

    /// The prox-space image of the reference point.
    pub fn prox_center(&self) -> Vec<S> {
        let n = self.center.len() / 2;
        let (x, xstar) = SplitDims::new(n, n).split(&self.center);
        linalg::axpy(x, self.lambda, xstar)
    }
}

/// The chart `(u, p) -> (p, (u-p)/λ)` sending the proximal graph back to the
/// subgradient graph.
fn prox_chart<S: Scalar>(n: usize, lambda: S) -> GraphChart<S> {
    let mut m = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = S::one();
        m[(n + i, i)] = S::one() / lambda;
        m[(n + i, n + i)] = -(S::one() / lambda);
    }
    GraphChart::new(m, vec![S::zero(); 2 * n]).expect("the prox chart is invertible")
}

/// The forward map `Φ(x, x*) = (x + λx*, x)` as a matrix.
fn prox_forward<S: Scalar>(n: usize, lambda: S) -> Mat<S> {
    let mut m = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = S::one();
        m[(i, n + i)] = lambda;
        m[(n + i, i)] = S::one();
    }
    m
}

/// Build the attentive localization: retain only graph pieces whose in-window
/// points obey the value bound `φ(x) < φ(x̄) + ε`, halving the window when a
/// piece straddles the bound.
pub fn attentive_localization<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
) -> Result<AttentiveLocalization<S>> {
    assert_lambda(phi, lambda);
    assert!(
        lambda <= fl::<S>(0.9) / phi.prox_r.max(fl(1e-12)),
        "prox step needs margin below the reciprocal prox-regularity parameter"
    );
    let n = phi.n;
    let dims = phi.dims();
    let reference = phi.reference.clone();
    let (xbar, _) = dims.split(&reference);
    let bound = phi.value(xbar) + phi.prox_eps;
    let tol = phi.subgrad_graph.graph_tol();

    let inner = match phi.subgrad_graph.body() {
        MapBody::PolyUnion(_) | MapBody::PlSingle(_) => {
            let pieces = phi.subgrad_graph.polyhedral_pieces().expect("polyhedral body");
            let mut window = phi.window_radius;
            let mut kept: Vec<ConvexPolyhedron<S>> = Vec::new();
            let mut settled = false;
            for _ in 0..=8 {
                kept.clear();
                let mut straddles = false;
                for piece in &pieces {
                    match piece_attentiveness(piece, phi, &reference, window, bound, tol)? {
                        PieceStatus::Attentive => kept.push(piece.clone()),
                        PieceStatus::Outside | PieceStatus::Violating => {}
                        PieceStatus::Straddling => {
                            straddles = true;
                            break;
                        }
                    }
                }
                if !straddles {
                    settled = true;
                    break;
                }
                window = window * fl(0.5);
            }
            if !settled || kept.is_empty() {
                return Err(VarError::Precondition(format!(
                    "'{}': no window radius separates attentive graph pieces from value jumps",
                    phi.label
                )));
            }
            let forward = prox_forward(n, lambda);
            let zero = vec![S::zero(); 2 * n];
            let images: Vec<ConvexPolyhedron<S>> =
                kept.iter().map(|p| p.affine_image(&forward, &zero)).collect();
            let inner = SetValuedMap::poly_union(
                format!("{}_prox", phi.label),
                SplitDims::new(n, n),
                images,
            )?;
            return finish_localization(phi, lambda, inner, window);
        }
        MapBody::Smooth(g) => {
            let g_val = g.clone();
            let g_jac = g.clone();
            let lam = lambda;
            let start = xbar.to_vec();
            let start2 = xbar.to_vec();
            SetValuedMap::smooth(SmoothMap::new(
                format!("{}_prox", phi.label),
                n,
                n,
                move |u: &[S]| {
                    newton_prox(&g_val, lam, u, &start).expect("prox solve inside the window")
                },
                move |u: &[S]| {
                    let p = newton_prox(&g_jac, lam, u, &start2)
                        .expect("prox solve inside the window");
                    linalg::inverse(&Mat::identity(n).add(&g_jac.jac(&p).scale(lam)))
                        .expect("the prox Jacobian is invertible below the curvature bound")
                },
            ))
        }
        _ => {
            return Err(VarError::Unsupported(
                "attentive localization needs a polyhedral or smooth subgradient graph".into(),
            ))
        }
    };

    // smooth route: validate the value bound directly, halving on violation
    let mut window = phi.window_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(0x10CA);
    for _ in 0..=8 {
        let samples = phi.subgrad_graph.sample_graph_near(&reference, window, 16, &mut rng)?;
        let ok = samples.iter().all(|z| {
            let (x, _) = dims.split(z);
            phi.value(x) < bound
        });
        if ok {
            return finish_localization(phi, lambda, inner, window);
        }
        window = window * fl(0.5);
    }
    Err(VarError::Precondition(format!(
        "'{}': the attentiveness bound fails even after shrinking the window eight times",
        phi.label
    )))
}

enum PieceStatus {
    Attentive,
    Violating,
    Outside,
    Straddling,
}

/// Probe a graph piece inside the window and report whether its sampled
/// points all satisfy, all violate, or straddle the attentiveness bound.
fn piece_attentiveness<S: Scalar>(
    piece: &ConvexPolyhedron<S>,
    phi: &ProxRegularFunction<S>,
    reference: &[S],
    window: S,
    bound: S,
    tol: S,
) -> Result<PieceStatus> {
    let dims = phi.dims();
    let mut probes: Vec<Vec<S>> = Vec::new();
    if let Some(p) = piece.project(reference) {
        if dist(&p, reference) <= window {
            probes.push(p);
        }
    }
    if probes.is_empty() {
        return Ok(PieceStatus::Outside);
    }
    for i in 0..reference.len() {
        for sign in [S::one(), -S::one()] {
            let mut q = reference.to_vec();
            q[i] = q[i] + sign * window * fl(0.7);
            if let Some(p) = piece.project(&q) {
                if dist(&p, reference) <= window {
                    probes.push(p);
                }
            }
        }
    }
    if piece.member(reference, tol) {
        for face in piece.faces_through(reference, window * fl(0.5), tol)? {
            if dist(&face.representative, reference) <= window {
                probes.push(face.representative);
            }
        }
    }
    let mut attentive = 0usize;
    let mut violating = 0usize;
    for p in &probes {
        let (x, _) = dims.split(p);
        if phi.value(x) < bound {
            attentive += 1;
        } else {
            violating += 1;
        }
    }
    Ok(match (attentive, violating) {
        (_, 0) => PieceStatus::Attentive,
        (0, _) => PieceStatus::Violating,
        _ => PieceStatus::Straddling,
    })
}

fn finish_localization<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
    inner: SetValuedMap<S>,
    window: S,
) -> Result<AttentiveLocalization<S>> {
    let n = phi.n;
    let as_map = SetValuedMap::charted(
        format!("{}_localized", phi.label),
        SplitDims::new(n, n),
        prox_chart(n, lambda),
        inner,
    )?;
    if !as_map.contains(&phi.reference) {
        return Err(VarError::Precondition(format!(
            "'{}': the localization lost the reference point",
            phi.label
        )));
    }
    Ok(AttentiveLocalization {
        lambda,
        as_map,
        window_radius: window,
        center: phi.reference.clone(),
    })
}

/// Cones and derivatives of the localized subgradient graph at a point on it.
/// By the localization identities these are the attentive variational objects
/// of the subgradient map itself.
pub fn attentive_derivatives<S: Scalar>(
    loc: &AttentiveLocalization<S>,
    z: &[S],
) -> Result<(ConeBundle<S>, DerivativeBundle<S>)> {
    if !loc.as_map.contains(z) {
        return Err(VarError::OffGraph {
            residual: loc.as_map.graph_residual(z).to_f64().unwrap_or(f64::NAN),
            tol: loc.as_map.graph_tol().to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok((cones::cones_at(&loc.as_map, z)?, deriv::derivative_bundle(&loc.as_map, z)?))
}

/// Battery deciding strict proto-differentiability of the subgradient map at
/// the reference point. The prox parametrization certifies the graph as a
/// Lipschitz manifold of the domain dimension, so every criterion applies.
pub fn check_strict_proto_subgrad<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
) -> Result<DiagnosticVerdict> {
    let loc = attentive_localization(phi, lambda)?;
    let tol = Tol::standard().eq;
    let d = deriv::derivative_bundle(&loc.as_map, &loc.center)?;
    let bundle = cones::cones_at(&loc.as_map, &loc.center)?;
    let mut votes = Vec::new();
    let mut dims = Vec::new();

    let proto = diagnostics::check_strict_proto(&d, Some(phi.n), tol);
    for (name, value) in proto.observed_dims {
        dims.push((name, value));
    }
    votes.push(CriterionVote::cast(
        "localization_is_strictly_proto_differentiable",
        proto.consensus == Consensus::Holds,
        format!("strict proto battery consensus {:?}", proto.consensus),
    ));

    let ubar = loc.prox_center();
    let prox_verdict = diagnostics::check_strict_differentiability(loc.prox_view(), &ubar, tol)?;
    votes.push(CriterionVote::cast(
        "prox_mapping_is_strictly_differentiable",
        prox_verdict.consensus == Consensus::Holds,
        format!("strict differentiability consensus {:?} at the prox center", prox_verdict.consensus),
    ));

    let cod_sub = d.coderivative.is_subspace(tol);
    votes.push(CriterionVote::cast(
        "attentive_coderivative_graph_is_a_subspace",
        cod_sub.is_some(),
        format!("{} coderivative pieces", d.coderivative.pieces().len()),
    ));

    let normals_regular = crate::poly::ConeUnion::from_cone(bundle.regular_normal.clone())
        .set_equal(&bundle.limiting_normal, tol);
    votes.push(CriterionVote::cast(
        "attentive_normal_cones_agree",
        normals_regular,
        "regular attentive normals compared with the limiting ones",
    ));

    votes.push(CriterionVote::cast(
        "attentive_sc_family_is_a_singleton",
        d.generalized_sc.len() == 1,
        format!("{} affine strata", d.generalized_sc.len()),
    ));

    let collapse = if d.generalized_sc.len() == 1 {
        let l = &d.generalized_sc[0];
        let graphical_is_l = d
            .graphical
            .set_equal(&crate::poly::ConeUnion::from_cone(crate::poly::ConvexCone::from_subspace(l)), tol);
        let adjoint_is_cod = cod_sub
            .as_ref()
            .map_or(false, |c| d.generalized_sc_adjoint[0].is_equal_within(c, tol));
        graphical_is_l && adjoint_is_cod
    } else {
        false
    };
    votes.push(CriterionVote::cast(
        "sc_family_collapses_onto_the_derivative_graphs",
        collapse,
        "singleton stratum compared against the derivative and coderivative graphs",
    ));

    Ok(DiagnosticVerdict::from_votes("strictly_proto_differentiable_subgradient", votes, dims))
}

/// Dyadic shell schedule for the trapezoid reports.
#[derive(Clone, Debug)]
pub struct TrapezoidSchedule<S> {
    /// Outermost shell radius in prox space; defaults to half the validated
    /// window.
    pub base_radius: Option<S>,
    pub shells: usize,
    pub samples_per_shell: usize,
}

impl<S> Default for TrapezoidSchedule<S> {
    fn default() -> Self {
        TrapezoidSchedule { base_radius: None, shells: 6, samples_per_shell: 24 }
    }
}

/// Shell maxima of a scaled residual along shrinking radii, with the fitted
/// log-log decay slope.
#[derive(Clone, Debug)]
pub struct DecayReport<S> {
    pub shell_radii: Vec<S>,
    pub shell_maxima: Vec<S>,
    /// Least-squares slope of `log(max)` against `log(radius)`; infinite when
    /// every shell maximum vanishes.
    pub slope: S,
    /// Whether the maxima decay: vanishing throughout, or slope above 1/2
    /// with the final shell two orders below the first and no doubling along
    /// the way.
    pub decays: bool,
    pub hypothesis_verified: bool,
}

fn decay_verdict<S: Scalar>(radii: &[S], maxima: &[S], floor: S) -> (S, bool) {
    let usable: Vec<(f64, f64)> = radii
        .iter()
        .zip(maxima)
        .filter(|(_, &m)| m > floor)
        .map(|(&r, &m)| (r.to_f64().unwrap().ln(), m.to_f64().unwrap().ln()))
        .collect();
    if maxima.iter().all(|&m| m <= floor) {
        return (S::infinity(), true);
    }
    if usable.len() < 2 {
        return (S::zero(), false);
    }
    let k = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let first = maxima[0].max(floor);
    let last = *maxima.last().unwrap();
    let monotone = maxima.windows(2).all(|w| w[1] <= fl::<S>(2.0) * w[0] + floor);
    let decays = slope > 0.5 && last < fl::<S>(0.02) * first && monotone;
    (fl(slope), decays)
}

/// The one-point trapezoid residual of a graph point against the reference:
/// `[φ(x) - φ(x̄) - ⟨x*+x̄*, x-x̄⟩/2] / ‖z-z̄‖²`.
pub fn one_point_ratio<S: Scalar>(phi: &ProxRegularFunction<S>, z: &[S]) -> S {
    let dims = phi.dims();
    let (x, xstar) = dims.split(z);
    let (xbar, xsbar) = dims.split(&phi.reference);
    let d = dist(z, &phi.reference);
    let num = phi.value(x)
        - phi.value(xbar)
        - fl::<S>(0.5) * dot(&linalg::add_vec(xstar, xsbar), &linalg::sub_vec(x, xbar));
    num / (d * d)
}

/// The two-point trapezoid residual of a pair of graph points:
/// `[φ(y) - φ(x) - ⟨y*+x*, y-x⟩/2] / ‖w-z‖²`.
pub fn two_point_ratio<S: Scalar>(phi: &ProxRegularFunction<S>, z: &[S], w: &[S]) -> S {
    let dims = phi.dims();
    let (x, xstar) = dims.split(z);
    let (y, ystar) = dims.split(w);
    let d = dist(w, z);
    let num = phi.value(y)
        - phi.value(x)
        - fl::<S>(0.5) * dot(&linalg::add_vec(ystar, xstar), &linalg::sub_vec(y, x));
    num / (d * d)
}

fn shell_schedule<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    loc: &AttentiveLocalization<S>,
    schedule: &TrapezoidSchedule<S>,
) -> S {
    let default = loc.window_radius * fl(0.5);
    schedule.base_radius.unwrap_or(default).min(phi.window_radius * fl(0.9))
}

/// A uniformly random unit direction, so every shell sample sits at the exact
/// shell radius.
fn unit_dir<S: Scalar, R: Rng>(dim: usize, rng: &mut R) -> Vec<S> {
    loop {
        let d = crate::maps::gauss_dir(dim, rng);
        let len = norm(&d);
        if len > fl(1e-6) {
            return linalg::scale_vec(&d, S::one() / len);
        }
    }
}

fn hypothesis_one_point<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    loc: &AttentiveLocalization<S>,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    // polyhedral and smooth graphs are proto-differentiable outright
    if matches!(
        phi.subgrad_graph.body(),
        MapBody::PolyUnion(_) | MapBody::PlSingle(_) | MapBody::Smooth(_)
    ) {
        return Ok(true);
    }
    let verdict = diagnostics::check_semismooth_star(
        &loc.as_map,
        &loc.center,
        &SemismoothOptions::default(),
        rng,
    )?;
    Ok(verdict.consensus == Consensus::Holds)
}

/// Shell decay of the one-point trapezoid residual over attentive samples.
pub fn trapezoid_one_point<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
    schedule: &TrapezoidSchedule<S>,
    seed: u64,
) -> Result<DecayReport<S>> {
    let loc = attentive_localization(phi, lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hypothesis_verified = hypothesis_one_point(phi, &loc, &mut rng)?;
    let ubar = loc.prox_center();
    let base = shell_schedule(phi, &loc, schedule);
    let (xbar, _) = phi.dims().split(&phi.reference);
    let floor = fl::<S>(1e-12) * (S::one() + phi.value(xbar).abs());

    let mut radii = Vec::new();
    let mut maxima = Vec::new();
    for k in 0..schedule.shells {
        let delta = base * fl::<S>(0.5).powi(k as i32);
        let mut worst = S::zero();
        let mut dirs: Vec<Vec<S>> = Vec::new();
        for i in 0..phi.n {
            let mut e = vec![S::zero(); phi.n];
            e[i] = S::one();
            dirs.push(e.clone());
            e[i] = -S::one();
            dirs.push(e);
        }
        for _ in 0..schedule.samples_per_shell {
            dirs.push(unit_dir(phi.n, &mut rng));
        }
        for dir in &dirs {
            let u = linalg::axpy(&ubar, delta, dir);
            let z = phi.prox_graph_point(lambda, &u)?;
            if dist(&z, &phi.reference) <= fl::<S>(1e-3) * delta {
                continue;
            }
            worst = worst.max(one_point_ratio(phi, &z).abs());
        }
        radii.push(delta);
        maxima.push(worst);
    }
    let (slope, decays) = decay_verdict(&radii, &maxima, floor);
    Ok(DecayReport { shell_radii: radii, shell_maxima: maxima, slope, decays, hypothesis_verified })
}

/// Shell decay of the two-point trapezoid residual over attentive pairs.
pub fn trapezoid_two_point<S: Scalar>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
    schedule: &TrapezoidSchedule<S>,
    seed: u64,
) -> Result<DecayReport<S>> {
    let loc = attentive_localization(phi, lambda)?;
    let hypothesis_verified =
        check_strict_proto_subgrad(phi, lambda)?.consensus == Consensus::Holds;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2B);
    let ubar = loc.prox_center();
    let base = shell_schedule(phi, &loc, schedule);
    let (xbar, _) = phi.dims().split(&phi.reference);
    let floor = fl::<S>(1e-12) * (S::one() + phi.value(xbar).abs());

    let mut radii = Vec::new();
    let mut maxima = Vec::new();
    for k in 0..schedule.shells {
        let delta = base * fl::<S>(0.5).powi(k as i32);
        let mut worst = S::zero();
        let mut pairs: Vec<(Vec<S>, Vec<S>)> = Vec::new();
        for i in 0..phi.n {
            let mut plus = vec![S::zero(); phi.n];
            plus[i] = S::one();
            let minus = linalg::scale_vec(&plus, -S::one());
            pairs.push((plus.clone(), minus.clone()));
            pairs.push((plus, linalg::scale_vec(&minus, fl(0.5))));
        }
        for _ in 0..schedule.samples_per_shell {
            pairs.push((unit_dir(phi.n, &mut rng), unit_dir(phi.n, &mut rng)));
        }
        for (d1, d2) in &pairs {
            let u1 = linalg::axpy(&ubar, delta, d1);
            let u2 = linalg::axpy(&ubar, delta, d2);
            let z = phi.prox_graph_point(lambda, &u1)?;
            let w = phi.prox_graph_point(lambda, &u2)?;
            if dist(&w, &z) <= fl::<S>(0.05) * delta {
                continue;
            }
            worst = worst.max(two_point_ratio(phi, &z, &w).abs());
        }
        radii.push(delta);
        maxima.push(worst);
    }
    let (slope, decays) = decay_verdict(&radii, &maxima, floor);
    Ok(DecayReport { shell_radii: radii, shell_maxima: maxima, slope, decays, hypothesis_verified })
}

/// `φ(x) = |x|` with reference point `(x̄, x̄*)` on the subgradient graph.
pub fn abs_prox<S: Scalar>(xbar: f64, xsbar: f64) -> ProxRegularFunction<S> {
    let soft = |lambda: S, u: &[S]| -> Vec<S> {
        let mag = (u[0].abs() - lambda).max(S::zero());
        vec![mag * u[0].signum()]
    };
    ProxRegularFunction::new(
        "abs",
        1,
        |x: &[S]| x[0].abs(),
        crate::maps::abs_subgradient_map(),
        S::zero(),
        fl(0.5),
        vec![fl(xbar), fl(xsbar)],
        fl(4.0),
        Some(Arc::new(soft)),
    )
    .expect("the abs fixture is valid")
}

/// `φ(x) = (a/2)x²` at reference `x̄`; prox-regular with `r = max(0, -a)`.
pub fn quadratic_prox<S: Scalar>(a: f64, xbar: f64) -> ProxRegularFunction<S> {
    let line = ConvexPolyhedron::new(2, vec![], vec![(vec![fl::<S>(a), -S::one()], S::zero())]);
    let graph =
        SetValuedMap::poly_union("quadratic_subgradient", SplitDims::new(1, 1), vec![line])
            .expect("a line is a valid graph");
    let af: S = fl(a);
    ProxRegularFunction::new(
        format!("quadratic_{a}"),
        1,
        move |x: &[S]| fl::<S>(0.5) * af * x[0] * x[0],
        graph,
        fl((-a).max(0.0)),
        S::one(),
        vec![fl(xbar), fl(a * xbar)],
        fl(2.0),
        Some(Arc::new(move |lambda: S, u: &[S]| vec![u[0] / (S::one() + lambda * af)])),
    )
    .expect("the quadratic fixture is valid")
}

/// `φ ≡ 0`: the subgradient graph is the horizontal axis and the prox is the
/// identity.
pub fn zero_prox<S: Scalar>() -> ProxRegularFunction<S> {
    let line = ConvexPolyhedron::new(2, vec![], vec![(vec![S::zero(), S::one()], S::zero())]);
    let graph = SetValuedMap::poly_union("zero_subgradient", SplitDims::new(1, 1), vec![line])
        .expect("a line is a valid graph");
    ProxRegularFunction::new(
        "zero",
        1,
        |_: &[S]| S::zero(),
        graph,
        S::zero(),
        S::one(),
        vec![S::zero(), S::zero()],
        fl(4.0),
        Some(Arc::new(|_: S, u: &[S]| u.to_vec())),
    )
    .expect("the zero fixture is valid")
}

/// Indicator of the half-line `x <= 0`: the subgradient graph is the normal
/// cone map and the prox is the projection.
pub fn indicator_halfline_prox<S: Scalar>() -> ProxRegularFunction<S> {
    let flat = ConvexPolyhedron::new(
        2,
        vec![(vec![S::one(), S::zero()], S::zero())],
        vec![(vec![S::zero(), S::one()], S::zero())],
    );
    let up = ConvexPolyhedron::new(
        2,
        vec![(vec![-S::one(), S::zero()], S::zero()), (vec![S::zero(), -S::one()], S::zero())],
        vec![(vec![S::one(), S::zero()], S::zero())],
    );
    let graph =
        SetValuedMap::poly_union("halfline_normal_cone", SplitDims::new(1, 1), vec![flat, up])
            .expect("the normal cone graph is valid");
    ProxRegularFunction::new(
        "indicator_halfline",
        1,
        |x: &[S]| if x[0] <= fl(1e-12) { S::zero() } else { S::infinity() },
        graph,
        S::zero(),
        fl(0.5),
        vec![S::zero(), S::zero()],
        S::one(),
        Some(Arc::new(|_: S, u: &[S]| vec![u[0].min(S::zero())])),
    )
    .expect("the indicator fixture is valid")
}

/// A value jump on the subgradient graph: `φ(x) = 0` for `x <= 0` and
/// `1 + x` beyond. The branch at height one is metrically close to the
/// reference but not attentive, so the localization must exclude it.
pub fn step_jump_prox<S: Scalar>() -> ProxRegularFunction<S> {
    let flat = ConvexPolyhedron::new(
        2,
        vec![(vec![S::one(), S::zero()], S::zero())],
        vec![(vec![S::zero(), S::one()], S::zero())],
    );
    let up = ConvexPolyhedron::new(
        2,
        vec![(vec![-S::one(), S::zero()], S::zero()), (vec![S::zero(), -S::one()], S::zero())],
        vec![(vec![S::one(), S::zero()], S::zero())],
    );
    let jump = ConvexPolyhedron::new(
        2,
        vec![(vec![-S::one(), S::zero()], S::zero())],
        vec![(vec![S::zero(), S::one()], S::one())],
    );
    let graph = SetValuedMap::poly_union(
        "step_jump_subgradient",
        SplitDims::new(1, 1),
        vec![flat, up, jump],
    )
    .expect("the step graph is valid");
    ProxRegularFunction::new(
        "step_jump",
        1,
        |x: &[S]| if x[0] <= fl(1e-12) { S::zero() } else { S::one() + x[0] },
        graph,
        S::zero(),
        fl(0.5),
        vec![S::zero(), S::zero()],
        fl(0.4),
        Some(Arc::new(|_: S, u: &[S]| vec![u[0].min(S::zero())])),
    )
    .expect("the step fixture is valid")
}

/// `φ(x) = x⁴/4` with a smooth cubic subgradient, exercising the Newton prox
/// solve.
pub fn quartic_prox<S: Scalar>() -> ProxRegularFunction<S> {
    let graph = SetValuedMap::smooth(SmoothMap::new(
        "cubic_subgradient",
        1,
        1,
        |x: &[S]| vec![x[0] * x[0] * x[0]],
        |x: &[S]| Mat::from_rows(&[vec![fl::<S>(3.0) * x[0] * x[0]]]),
    ));
    ProxRegularFunction::new(
        "quartic",
        1,
        |x: &[S]| x[0] * x[0] * x[0] * x[0] / fl(4.0),
        graph,
        S::zero(),
        S::one(),
        vec![S::zero(), S::zero()],
        S::one(),
        None,
    )
    .expect("the quartic fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prox_of_abs_is_the_soft_threshold() {
        let phi = abs_prox::<f64>(0.0, 0.0);
        assert_eq!(prox_map(&phi, 1.0, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(prox_map(&phi, 1.0, &[0.5]).unwrap(), vec![0.0]);
        let zero = zero_prox::<f64>();
        assert_eq!(prox_map(&zero, 0.5, &[0.3]).unwrap(), vec![0.3]);
    }

    #[test]
    fn prox_without_a_closed_form_solves_on_pieces() {
        let phi = ProxRegularFunction::new(
            "abs_no_closed_form",
            1,
            |x: &[f64]| x[0].abs(),
            crate::maps::abs_subgradient_map(),
            0.0,
            0.5,
            vec![0.0, 0.0],
            4.0,
            None,
        )
        .unwrap();
        assert!((prox_map(&phi, 1.0, &[2.0]).unwrap()[0] - 1.0).abs() < 1e-9);
        assert!(prox_map(&phi, 1.0, &[0.5]).unwrap()[0].abs() < 1e-9);
        assert!((prox_map(&phi, 1.0, &[-3.0]).unwrap()[0] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn newton_prox_on_the_quartic() {
        let phi = quartic_prox::<f64>();
        let p = prox_map(&phi, 0.5, &[0.1]).unwrap();
        let x = p[0];
        assert!((x + 0.5 * x * x * x - 0.1).abs() < 1e-10);
    }

    #[test]
    fn envelope_values_and_gradient() {
        let phi = abs_prox::<f64>(0.0, 0.0);
        assert!((moreau_envelope(&phi, 1.0, &[2.0]).unwrap() - 1.5).abs() < 1e-12);
        assert!((moreau_envelope(&phi, 1.0, &[0.5]).unwrap() - 0.125).abs() < 1e-12);
        assert!((envelope_gradient(&phi, 1.0, &[2.0]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((envelope_gradient(&phi, 1.0, &[0.5]).unwrap()[0] - 0.5).abs() < 1e-12);

        for &u in &[1.7f64, 0.3, -0.6] {
            let h = 1e-5 * (1.0 + u.abs());
            let fd = (moreau_envelope(&phi, 1.0, &[u + h]).unwrap()
                - moreau_envelope(&phi, 1.0, &[u - h]).unwrap())
                / (2.0 * h);
            let g = envelope_gradient(&phi, 1.0, &[u]).unwrap()[0];
            assert!((fd - g).abs() <= 1e-5 * (1.0 + g.abs()), "u={u}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn prox_query_outside_the_window_is_rejected() {
        let phi = indicator_halfline_prox::<f64>();
        assert!(matches!(prox_map(&phi, 0.5, &[5.0]), Err(VarError::Precondition(_))));
    }

    #[test]
    fn localization_graph_matches_the_subgradient_graph_for_abs() {
        let phi = abs_prox::<f64>(0.0, 0.0);
        let loc = attentive_localization(&phi, 0.5).unwrap();
        assert!(loc.as_map.contains(&[0.0, 0.3]), "vertical segment point");
        assert!(loc.as_map.contains(&[0.1, 1.0]), "right branch point");
        let inner = loc.prox_view();
        assert!((inner.evaluate(&[0.2]).unwrap()[0] - 0.0).abs() < 1e-12, "inside the threshold");
        assert!((inner.evaluate(&[0.8]).unwrap()[0] - 0.3).abs() < 1e-12, "past the threshold");
    }

    #[test]
    fn localization_of_the_quadratic_contracts_by_the_prox_factor() {
        let phi = quadratic_prox::<f64>(2.0, 0.0);
        let loc = attentive_localization(&phi, 1.0).unwrap();
        let inner = loc.prox_view();
        assert!((inner.evaluate(&[0.9]).unwrap()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn localization_drops_the_jump_branch() {
        let phi = step_jump_prox::<f64>();
        assert!(phi.subgrad_graph().contains(&[0.3, 1.0]), "the raw graph has the jump branch");
        let loc = attentive_localization(&phi, 0.25).unwrap();
        assert!(!loc.as_map.contains(&[0.3, 1.0]), "the localization must not");
        assert!(loc.as_map.contains(&[-0.2, 0.0]));
        assert!(loc.as_map.contains(&[0.0, 0.2]));
    }

    #[test]
    fn attentive_derivatives_match_direct_computation() {
        let phi = abs_prox::<f64>(0.0, 0.0);
        let loc = attentive_localization(&phi, 0.5).unwrap();
        let (bundle, d) = attentive_derivatives(&loc, &[0.0, 0.0]).unwrap();
        let direct = cones::cones_at(&crate::maps::abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap();
        assert!(bundle.tangent.set_equal(&direct.tangent, 1e-8));
        assert!(bundle.limiting_normal.set_equal(&direct.limiting_normal, 1e-8));
        let ddirect = deriv::derivative_bundle(&crate::maps::abs_subgradient_map::<f64>(), &[0.0, 0.0]).unwrap();
        assert_eq!(d.sc.len(), ddirect.sc.len());
        assert_eq!(d.generalized_sc.len(), 1);
        assert_eq!(ddirect.generalized_sc.len(), 1);

        let quad = quadratic_prox::<f64>(2.0, 0.0);
        let qloc = attentive_localization(&quad, 0.25).unwrap();
        let (qbundle, _) = attentive_derivatives(&qloc, &[0.0, 0.0]).unwrap();
        let line = crate::poly::ConvexCone::new(2, vec![], vec![vec![1.0, 2.0]]);
        assert!(qbundle.tangent.set_equal(&crate::poly::ConeUnion::from_cone(line), 1e-8));
    }

    #[test]
    fn subgradient_battery_distinguishes_segment_from_corner() {
        let inside = check_strict_proto_subgrad(&abs_prox::<f64>(0.0, 0.0), 0.5).unwrap();
        assert_eq!(inside.consensus, Consensus::Holds, "{:#?}", inside.votes);

        let corner = check_strict_proto_subgrad(&abs_prox::<f64>(0.0, 1.0), 0.5).unwrap();
        assert_eq!(corner.consensus, Consensus::Fails, "{:#?}", corner.votes);

        let quad = check_strict_proto_subgrad(&quadratic_prox::<f64>(2.0, 0.0), 0.25).unwrap();
        assert_eq!(quad.consensus, Consensus::Holds, "{:#?}", quad.votes);
    }

    #[test]
    fn trapezoid_is_exact_for_quadratics() {
        for a in [2.0, -1.0] {
            let phi = quadratic_prox::<f64>(a, 0.0);
            let lambda = phi.default_lambda();
            let report =
                trapezoid_one_point(&phi, lambda, &TrapezoidSchedule::default(), 5).unwrap();
            assert!(report.hypothesis_verified);
            assert!(report.decays);
            assert!(
                report.shell_maxima.iter().all(|&m| m <= 1e-12),
                "a={a}: {:?}",
                report.shell_maxima
            );
            assert!(report.slope.is_infinite());

            let two = trapezoid_two_point(&phi, lambda, &TrapezoidSchedule::default(), 5).unwrap();
            assert!(two.decays && two.shell_maxima.iter().all(|&m| m <= 1e-12), "a={a}");
        }
    }

    #[test]
    fn trapezoid_one_point_at_the_abs_kink_matches_the_dense_oracle() {
        let phi = abs_prox::<f64>(0.0, 0.0);
        let lambda = 0.5;
        let report = trapezoid_one_point(&phi, lambda, &TrapezoidSchedule::default(), 7).unwrap();

        // independent dense grid through the prox parametrization
        let mut oracle_worst: f64 = 0.0;
        for k in 0..6 {
            let delta = report.shell_radii[k];
            for i in 1..=50 {
                for sign in [-1.0, 1.0] {
                    let u = sign * delta * (i as f64) / 50.0;
                    let p = prox_map(&phi, lambda, &[u]).unwrap();
                    let z = vec![p[0], (u - p[0]) / lambda];
                    if (z[0] * z[0] + z[1] * z[1]).sqrt() > 1e-12 {
                        oracle_worst = oracle_worst.max(one_point_ratio(&phi, &z).abs());
                    }
                }
            }
        }
        assert!(oracle_worst <= 1e-12, "dense oracle sees {oracle_worst}");
        assert!(report.shell_maxima.iter().all(|&m| m <= 1e-12), "{:?}", report.shell_maxima);
        assert!(report.decays);
    }

    #[test]
    fn trapezoid_two_point_detects_the_corner() {
        let phi = abs_prox::<f64>(0.0, 1.0);
        let one = trapezoid_one_point(&phi, 0.5, &TrapezoidSchedule::default(), 11).unwrap();
        assert!(one.decays, "one-point maxima {:?}", one.shell_maxima);

        let two = trapezoid_two_point(&phi, 0.5, &TrapezoidSchedule::default(), 11).unwrap();
        assert!(!two.hypothesis_verified);
        assert!(!two.decays, "two-point maxima {:?}", two.shell_maxima);
        assert!(two.shell_maxima.iter().all(|&m| m > 0.1), "{:?}", two.shell_maxima);

        // the witness pair family along the two faces gives exactly -1/4
        for &t in &[1e-2, 1e-4, 1e-6] {
            let z = vec![t, 1.0];
            let w = vec![0.0, 1.0 - t];
            assert!((two_point_ratio(&phi, &z, &w) + 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn prox_parametrization_inverts_the_graph() {
        let phi = abs_prox::<f64>(0.0, 0.0);
        let lambda = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = phi
            .subgrad_graph()
            .sample_graph_near(&[0.0, 0.0], 0.4, 12, &mut rng)
            .unwrap();
        for z in samples {
            let u = z[0] + lambda * z[1];
            let p = prox_map(&phi, lambda, &[u]).unwrap();
            assert!((p[0] - z[0]).abs() < 1e-9, "graph point {z:?} round-trips");
        }
    }

    #[test]
    fn construction_rejects_an_off_graph_reference() {
        let err = ProxRegularFunction::<f64>::new(
            "bad_ref",
            1,
            |x: &[f64]| x[0].abs(),
            crate::maps::abs_subgradient_map(),
            0.0,
            0.5,
            vec![1.0, -1.0],
            1.0,
            None,
        );
        assert!(matches!(err, Err(VarError::Validation(_))));
    }
}
