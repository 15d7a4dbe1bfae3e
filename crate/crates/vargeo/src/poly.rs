//! Convex polyhedra, polyhedral cones, and finite unions of cones.
//!
//! Representations:
//! * [`ConvexPolyhedron`]: inequality rows `<c, z> <= d` plus equality rows
//!   `<e, z> = f`;
//! * [`ConvexCone`]: generator rays plus a lineality space, kept canonical
//!   (generators unit length, off the lineality span, free of redundancy,
//!   opposite ray pairs absorbed into the lineality, deterministic order);
//! * [`ConeUnion`]: finite union of convex cones, the closed non-convex cones
//!   the tangent and normal constructions produce.
//!
//! Conversions between halfspace and generator form run by active-set
//! enumeration in the pointed quotient: every extreme ray of a pointed cone in
//! `R^q` is cut out by `q-1` independent tight constraints, and the corpus
//! scale (ambient dimension at most 6, at most a dozen rows) makes exhausting
//! those subsets cheap and immune to the degeneracy bookkeeping an incremental
//! method would need.

use crate::linalg::{self, dot, norm, normalized, scale_vec, Mat};
use crate::scalar::{fl, Scalar, Tol};
use crate::subspace::Subspace;
use crate::{Result, VarError};

/// `{ z : C z <= d, E z = f }` with nonempty feasible set.
#[derive(Clone, Debug)]
pub struct ConvexPolyhedron<S> {
    dim: usize,
    inequalities: Vec<(Vec<S>, S)>,
    equalities: Vec<(Vec<S>, S)>,
}

/// `cone(generators) + span(lineality)`, canonicalized.
#[derive(Clone, Debug)]
pub struct ConvexCone<S> {
    dim: usize,
    generators: Vec<Vec<S>>,
    lineality: Mat<S>,
}

/// Finite union of convex cones with a common apex at the origin.
#[derive(Clone, Debug)]
pub struct ConeUnion<S> {
    ambient: usize,
    pieces: Vec<ConvexCone<S>>,
}

/// One face of a polyhedron adjacent to a base point, as produced by
/// [`ConvexPolyhedron::faces_through`].
#[derive(Clone, Debug)]
pub struct Face<S> {
    /// Indices of the inequality rows active on the face.
    pub active: Vec<usize>,
    /// A relative-interior point of the face near the base point.
    pub representative: Vec<S>,
    /// Tangent cone of the polyhedron at relative-interior points of the face.
    pub tangent: ConvexCone<S>,
    /// Tangent cone of the closed face at the base point itself; the cone of
    /// directions leading from the base point into the face.
    pub entry_cone: ConvexCone<S>,
}

impl<S: Scalar> ConvexPolyhedron<S> {
    pub fn new(dim: usize, inequalities: Vec<(Vec<S>, S)>, equalities: Vec<(Vec<S>, S)>) -> Self {
        assert!(inequalities.iter().all(|(c, _)| c.len() == dim), "inequality row length");
        assert!(equalities.iter().all(|(e, _)| e.len() == dim), "equality row length");
        ConvexPolyhedron { dim, inequalities, equalities }
    }

    /// The whole space.
    pub fn full(dim: usize) -> Self {
        ConvexPolyhedron::new(dim, vec![], vec![])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inequalities(&self) -> &[(Vec<S>, S)] {
        &self.inequalities
    }

    pub fn equalities(&self) -> &[(Vec<S>, S)] {
        &self.equalities
    }

    pub fn member(&self, z: &[S], tol: S) -> bool {
        assert_eq!(z.len(), self.dim, "point dimension");
        let scale = S::one() + norm(z);
        self.inequalities.iter().all(|(c, d)| dot(c, z) - *d <= tol * scale * (S::one() + norm(c)))
            && self.equalities.iter().all(|(e, f)| (dot(e, z) - *f).abs() <= tol * scale * (S::one() + norm(e)))
    }

    fn active_set(&self, z: &[S], tol: S) -> Vec<usize> {
        let scale = S::one() + norm(z);
        (0..self.inequalities.len())
            .filter(|&i| {
                let (c, d) = &self.inequalities[i];
                (dot(c, z) - *d).abs() <= tol * scale * (S::one() + norm(c))
            })
            .collect()
    }

    /// Tangent cone at a member point: active inequalities relaxed to
    /// homogeneous halfspaces, equalities kept.
    pub fn tangent_cone(&self, z: &[S], tol: S) -> Result<ConvexCone<S>> {
        if !self.member(z, tol) {
            return Err(self.not_member_error(z, tol));
        }
        let leq: Vec<Vec<S>> = self.active_set(z, tol).iter().map(|&i| self.inequalities[i].0.clone()).collect();
        let eq: Vec<Vec<S>> = self.equalities.iter().map(|(e, _)| e.clone()).collect();
        Ok(ConvexCone::from_hrep(self.dim, &leq, &eq))
    }

    fn not_member_error(&self, z: &[S], tol: S) -> VarError {
        let mut worst = S::zero();
        for (c, d) in &self.inequalities {
            worst = worst.max(dot(c, z) - *d);
        }
        for (e, f) in &self.equalities {
            worst = worst.max((dot(e, z) - *f).abs());
        }
        VarError::NotMember { residual: worst.to_f64().unwrap_or(f64::NAN), tol: tol.to_f64().unwrap_or(f64::NAN) }
    }

    /// Faces of the polyhedron whose closure contains `z`, each with a
    /// relative-interior representative placed within `radius` of `z`.
    ///
    /// A subset `A` of the constraints active at `z` describes an adjacent
    /// face exactly when some direction keeps `A` tight and leaves the rest of
    /// the active constraints strictly; the sum of the extreme rays of that
    /// direction cone is a relative-interior witness whenever one exists.
    pub fn faces_through(&self, z: &[S], radius: S, tol: S) -> Result<Vec<Face<S>>> {
        if !self.member(z, tol) {
            return Err(self.not_member_error(z, tol));
        }
        let active = self.active_set(z, tol);
        if active.len() > 6 {
            return Err(VarError::Unsupported(format!(
                "face enumeration supports at most 6 active inequalities, found {}",
                active.len()
            )));
        }
        let eq_rows: Vec<Vec<S>> = self.equalities.iter().map(|(e, _)| e.clone()).collect();
        let mut faces = Vec::new();
        for mask in 0..(1u32 << active.len()) {
            let tight: Vec<usize> = (0..active.len()).filter(|&k| mask & (1 << k) != 0).map(|k| active[k]).collect();
            let strict: Vec<usize> = (0..active.len()).filter(|&k| mask & (1 << k) == 0).map(|k| active[k]).collect();
            let mut eqs = eq_rows.clone();
            eqs.extend(tight.iter().map(|&i| self.inequalities[i].0.clone()));
            let leq: Vec<Vec<S>> = strict.iter().map(|&i| self.inequalities[i].0.clone()).collect();
            let entry = ConvexCone::from_hrep(self.dim, &leq, &eqs);
            let witness = entry.generators.iter().fold(vec![S::zero(); self.dim], |acc, g| linalg::add_vec(&acc, g));
            let strictly_enters = strict.iter().all(|&i| {
                let c = &self.inequalities[i].0;
                dot(c, &witness) < -fl::<S>(1e-9) * (S::one() + norm(c))
            });
            if !strictly_enters {
                continue;
            }
            let representative = self.place_representative(z, &witness, radius);
            let tangent = ConvexCone::from_hrep(
                self.dim,
                &tight.iter().map(|&i| self.inequalities[i].0.clone()).collect::<Vec<_>>(),
                &eq_rows,
            );
            faces.push(Face { active: tight, representative, tangent, entry_cone: entry });
        }
        Ok(faces)
    }

    /// Step from `z` along `w` far enough to leave the strict constraints but
    /// never past `radius` or into an inactive constraint.
    fn place_representative(&self, z: &[S], w: &[S], radius: S) -> Vec<S> {
        let wn = norm(w);
        if wn == S::zero() {
            return z.to_vec();
        }
        let mut t = radius / (fl::<S>(2.0) * wn);
        for (c, d) in &self.inequalities {
            let slack = *d - dot(c, z);
            let speed = dot(c, w);
            if slack > S::zero() && speed > S::zero() {
                t = t.min(slack / (fl::<S>(2.0) * speed));
            }
        }
        linalg::axpy(z, t, w)
    }

    /// Nearest point of the polyhedron, or `None` when the polyhedron is
    /// empty. Exact active-set enumeration.
    pub fn project(&self, z: &[S]) -> Option<Vec<S>> {
        assert_eq!(z.len(), self.dim, "point dimension");
        let k = self.inequalities.len();
        assert!(k <= 16, "projection enumeration supports at most 16 inequalities");
        let tol = Tol::standard().member;
        let mut best: Option<(S, Vec<S>)> = None;
        for mask in 0..(1u32 << k) {
            let mut rows: Vec<Vec<S>> = self.equalities.iter().map(|(e, _)| e.clone()).collect();
            let mut rhs: Vec<S> = self.equalities.iter().map(|(_, f)| *f).collect();
            for (i, (c, d)) in self.inequalities.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    rows.push(c.clone());
                    rhs.push(*d);
                }
            }
            let m = if rows.is_empty() { Mat::zeros(0, self.dim) } else { Mat::from_rows(&rows) };
            let Some(p) = linalg::project_affine(z, &m, &rhs, tol) else { continue };
            if !self.member(&p, tol) {
                continue;
            }
            let d = linalg::dist(&p, z);
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, p));
            }
        }
        best.map(|(_, p)| p)
    }

    pub fn is_empty(&self) -> bool {
        self.project(&vec![S::zero(); self.dim]).is_none()
    }

    /// Apply an invertible affine map `z -> M z + c` to the feasible set.
    ///
    /// A row `<r, z> <= d` pulls back through `z = M^{-1}(w - c)` to the row
    /// `<M^{-T} r, w> <= d + <M^{-T} r, c>`.
    pub fn affine_image(&self, m: &Mat<S>, c: &[S]) -> ConvexPolyhedron<S> {
        let minv = linalg::inverse(m).expect("affine_image needs an invertible matrix");
        let ineqs = self
            .inequalities
            .iter()
            .map(|(row, d)| {
                let new_row = minv.transpose().mulvec(row);
                let new_d = *d + dot(&new_row, c);
                (new_row, new_d)
            })
            .collect();
        let eqs = self
            .equalities
            .iter()
            .map(|(row, f)| {
                let new_row = minv.transpose().mulvec(row);
                let new_f = *f + dot(&new_row, c);
                (new_row, new_f)
            })
            .collect();
        ConvexPolyhedron::new(m.rows(), ineqs, eqs)
    }
}

impl<S: Scalar> ConvexCone<S> {
    /// Canonicalize raw generator and lineality data.
    pub fn new(dim: usize, generators: Vec<Vec<S>>, lineality: Vec<Vec<S>>) -> Self {
        assert!(generators.iter().chain(lineality.iter()).all(|v| v.len() == dim), "cone vector length");
        let drop_tol = fl::<S>(1e-9);
        let mut lin_cols = lineality;
        let gens = generators;
        loop {
            let lin = if lin_cols.is_empty() {
                Mat::empty(dim)
            } else {
                linalg::orthonormal_range(&Mat::from_cols(&lin_cols))
            };
            // project generators off the lineality span and normalize
            let mut reduced: Vec<Vec<S>> = Vec::new();
            for g in &gens {
                let mut r = g.clone();
                for col in lin.col_iter() {
                    let c = dot(&r, &col);
                    r = linalg::axpy(&r, -c, &col);
                }
                if let Some(u) = normalized(&r, drop_tol * (S::one() + norm(g))) {
                    if !reduced.iter().any(|h| linalg::dist(h, &u) <= drop_tol) {
                        reduced.push(u);
                    }
                }
            }
            // opposite pairs span a line: absorb into the lineality and redo
            let mut opposite: Option<Vec<S>> = None;
            'outer: for i in 0..reduced.len() {
                for j in (i + 1)..reduced.len() {
                    if linalg::dist(&reduced[i], &scale_vec(&reduced[j], -S::one())) <= drop_tol {
                        opposite = Some(reduced[i].clone());
                        break 'outer;
                    }
                }
            }
            if let Some(line) = opposite {
                lin_cols = lin.col_iter().collect();
                lin_cols.push(line);
                continue;
            }
            // drop generators that are conic combinations of the others
            let mut keep = reduced.clone();
            let mut i = 0;
            while i < keep.len() {
                let others: Vec<Vec<S>> = keep.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.clone()).collect();
                if !others.is_empty() {
                    let (_, res) = linalg::nnls(&Mat::from_cols(&others), &keep[i]);
                    if res <= drop_tol {
                        keep.remove(i);
                        continue;
                    }
                }
                i += 1;
            }
            keep.sort_by(|a, b| canon_key(a).cmp(&canon_key(b)));
            return ConvexCone { dim, generators: keep, lineality: lin };
        }
    }

    pub fn zero(dim: usize) -> Self {
        ConvexCone { dim, generators: vec![], lineality: Mat::empty(dim) }
    }

    pub fn full(dim: usize) -> Self {
        ConvexCone { dim, generators: vec![], lineality: Mat::identity(dim) }
    }

    pub fn from_subspace(s: &Subspace<S>) -> Self {
        ConvexCone { dim: s.ambient(), generators: vec![], lineality: s.basis().clone() }
    }

    /// Generator form of `{ w : <l, w> <= 0 for rows l of leq, <e, w> = 0 for
    /// rows e of eq }` by extreme-ray enumeration in the pointed quotient.
    pub fn from_hrep(dim: usize, leq: &[Vec<S>], eq: &[Vec<S>]) -> Self {
        let all_rows: Vec<Vec<S>> = leq.iter().chain(eq.iter()).cloned().collect();
        let lin = if all_rows.is_empty() {
            Mat::identity(dim)
        } else {
            linalg::nullspace(&Mat::from_rows(&all_rows))
        };
        let ambient_basis = if eq.is_empty() {
            Mat::identity(dim)
        } else {
            linalg::nullspace(&Mat::from_rows(&eq.to_vec()))
        };
        // quotient directions: inside the equality kernel, orthogonal to the lineality
        let w = quotient_basis(&ambient_basis, &lin);
        let q = w.cols();
        if q == 0 {
            return ConvexCone { dim, generators: vec![], lineality: lin };
        }
        let reduced: Vec<Vec<S>> = leq.iter().map(|row| w.transpose().mulvec(row)).collect();
        let mut rays: Vec<Vec<S>> = Vec::new();
        let push_candidate = |xi: &[S], rays: &mut Vec<Vec<S>>| {
            let feasible = reduced.iter().all(|r| dot(r, xi) <= fl::<S>(1e-9) * (S::one() + norm(r)));
            if feasible {
                let g = w.mulvec(xi);
                if !rays.iter().any(|h| linalg::dist(h, &g) <= fl(1e-9)) {
                    rays.push(g);
                }
            }
        };
        if q == 1 {
            push_candidate(&[S::one()], &mut rays);
            push_candidate(&[-S::one()], &mut rays);
        } else {
            let rows = reduced.len();
            assert!(rows <= 24, "extreme-ray enumeration supports at most 24 rows");
            for mask in 0..(1u64 << rows) {
                if (mask.count_ones() as usize) != q - 1 {
                    continue;
                }
                let subset: Vec<Vec<S>> =
                    (0..rows).filter(|&i| mask & (1 << i) != 0).map(|i| reduced[i].clone()).collect();
                let null = linalg::nullspace(&Mat::from_rows(&subset));
                if null.cols() != 1 {
                    continue;
                }
                let xi = null.col(0);
                push_candidate(&xi, &mut rays);
                push_candidate(&scale_vec(&xi, -S::one()), &mut rays);
            }
        }
        ConvexCone::new(dim, rays, lin.col_iter().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<S>] {
        &self.generators
    }

    pub fn lineality(&self) -> &Mat<S> {
        &self.lineality
    }

    /// All spanning directions: generators plus a basis of the lineality.
    pub fn spanning_dirs(&self) -> Vec<Vec<S>> {
        let mut dirs = self.generators.clone();
        dirs.extend(self.lineality.col_iter());
        dirs
    }

    pub fn is_zero(&self) -> bool {
        self.generators.is_empty() && self.lineality.cols() == 0
    }

    /// Distance from `v` to the cone: lineality components are free, the rest
    /// is a nonnegative least-squares fit over the generators.
    pub fn distance(&self, v: &[S]) -> S {
        assert_eq!(v.len(), self.dim, "point dimension");
        let mut r = v.to_vec();
        for col in self.lineality.col_iter() {
            let c = dot(&r, &col);
            r = linalg::axpy(&r, -c, &col);
        }
        if self.generators.is_empty() {
            return norm(&r);
        }
        let g = Mat::from_cols(&self.generators);
        let (_, res) = linalg::nnls(&g, &r);
        res
    }

    pub fn member(&self, v: &[S], tol: S) -> bool {
        self.distance(v) <= tol * (S::one() + norm(v))
    }

    /// Polar cone `{ w : <w, v> <= 0 for all v in the cone }`.
    pub fn polar(&self) -> ConvexCone<S> {
        let leq: Vec<Vec<S>> = self.generators.clone();
        let eq: Vec<Vec<S>> = self.lineality.col_iter().collect();
        ConvexCone::from_hrep(self.dim, &leq, &eq)
    }

    /// Halfspace form via the polar: rows for `<=` and rows for `=`.
    pub fn hrep(&self) -> (Vec<Vec<S>>, Vec<Vec<S>>) {
        let p = self.polar();
        (p.generators.clone(), p.lineality.col_iter().collect())
    }

    pub fn intersect(&self, other: &ConvexCone<S>) -> ConvexCone<S> {
        assert_eq!(self.dim, other.dim, "cone ambient dimension");
        let (mut leq, mut eq) = self.hrep();
        let (l2, e2) = other.hrep();
        leq.extend(l2);
        eq.extend(e2);
        ConvexCone::from_hrep(self.dim, &leq, &eq)
    }

    /// Does this cone contain `other`? Sound because `self` is convex.
    pub fn contains_cone(&self, other: &ConvexCone<S>, tol: S) -> bool {
        other.generators.iter().all(|g| self.member(g, tol))
            && other.lineality.col_iter().all(|l| {
                self.member(&l, tol) && self.member(&scale_vec(&l, -S::one()), tol)
            })
    }

    pub fn negated(&self) -> ConvexCone<S> {
        ConvexCone {
            dim: self.dim,
            generators: {
                let mut g: Vec<Vec<S>> = self.generators.iter().map(|v| scale_vec(v, -S::one())).collect();
                g.sort_by(|a, b| canon_key(a).cmp(&canon_key(b)));
                g
            },
            lineality: self.lineality.clone(),
        }
    }

    /// Minkowski difference `self - other = { a - b : a in self, b in other }`.
    pub fn minkowski_diff(&self, other: &ConvexCone<S>) -> ConvexCone<S> {
        assert_eq!(self.dim, other.dim, "cone ambient dimension");
        let mut gens = self.generators.clone();
        gens.extend(other.generators.iter().map(|g| scale_vec(g, -S::one())));
        let mut lin: Vec<Vec<S>> = self.lineality.col_iter().collect();
        lin.extend(other.lineality.col_iter());
        ConvexCone::new(self.dim, gens, lin)
    }

    /// Image under an invertible linear map.
    pub fn linear_image(&self, m: &Mat<S>) -> ConvexCone<S> {
        assert_eq!(m.cols(), self.dim, "map domain must match cone ambient");
        ConvexCone::new(
            m.rows(),
            self.generators.iter().map(|g| m.mulvec(g)).collect(),
            self.lineality.col_iter().map(|l| m.mulvec(&l)).collect(),
        )
    }

    /// Span of the cone as a subspace.
    pub fn span(&self) -> Subspace<S> {
        Subspace::from_cols(self.dim, &self.spanning_dirs())
    }

    /// The cone as a subspace, when it is one.
    pub fn as_subspace(&self, tol: S) -> Option<Subspace<S>> {
        ConeUnion::new(self.dim, vec![self.clone()]).is_subspace(tol)
    }
}

impl<S: Scalar> ConeUnion<S> {
    pub fn new(ambient: usize, pieces: Vec<ConvexCone<S>>) -> Self {
        assert!(pieces.iter().all(|p| p.dim() == ambient), "piece ambient dimension");
        let tol = Tol::standard().member;
        let mut kept: Vec<ConvexCone<S>> = Vec::new();
        let mut nonzero: Vec<ConvexCone<S>> = pieces.into_iter().filter(|p| !p.is_zero()).collect();
        nonzero.sort_by(piece_order);
        for p in nonzero {
            if kept.iter().any(|q| q.contains_cone(&p, tol)) {
                continue;
            }
            kept.retain(|q| !p.contains_cone(q, tol));
            kept.push(p);
        }
        if kept.is_empty() {
            kept.push(ConvexCone::zero(ambient));
        }
        kept.sort_by(piece_order);
        ConeUnion { ambient, pieces: kept }
    }

    pub fn from_cone(c: ConvexCone<S>) -> Self {
        let ambient = c.dim();
        ConeUnion::new(ambient, vec![c])
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn pieces(&self) -> &[ConvexCone<S>] {
        &self.pieces
    }

    pub fn member(&self, v: &[S], tol: S) -> bool {
        self.pieces.iter().any(|p| p.member(v, tol))
    }

    pub fn distance(&self, v: &[S]) -> S {
        self.pieces.iter().map(|p| p.distance(v)).fold(S::infinity(), |a, b| a.min(b))
    }

    /// Polar of the union: the intersection of the piece polars.
    pub fn polar(&self) -> ConvexCone<S> {
        let mut leq = Vec::new();
        let mut eq = Vec::new();
        for p in &self.pieces {
            leq.extend(p.generators().iter().cloned());
            eq.extend(p.lineality().col_iter());
        }
        ConvexCone::from_hrep(self.ambient, &leq, &eq)
    }

    /// When the union, as a set, is a linear subspace, return it.
    ///
    /// The span of all spanning directions is the only candidate; membership
    /// of the signed basis vectors and of the signed pairwise basis sums rules
    /// out unions that merely span the candidate without covering it.
    pub fn is_subspace(&self, tol: S) -> Option<Subspace<S>> {
        let mut dirs = Vec::new();
        for p in &self.pieces {
            dirs.extend(p.spanning_dirs());
        }
        let candidate = Subspace::from_cols(self.ambient, &dirs);
        let basis: Vec<Vec<S>> = candidate.basis().col_iter().collect();
        let mut probes: Vec<Vec<S>> = Vec::new();
        for b in &basis {
            probes.push(b.clone());
        }
        for i in 0..basis.len() {
            for j in (i + 1)..basis.len() {
                let s = linalg::add_vec(&basis[i], &basis[j]);
                probes.push(scale_vec(&s, S::one() / norm(&s)));
            }
        }
        for p in probes {
            if !self.member(&p, tol) || !self.member(&scale_vec(&p, -S::one()), tol) {
                return None;
            }
        }
        Some(candidate)
    }

    /// Is the union symmetric under negation?
    pub fn is_symmetric(&self, tol: S) -> bool {
        self.pieces.iter().all(|p| {
            let n = p.negated();
            n.generators().iter().all(|g| self.member(g, tol))
                && n.lineality().col_iter().all(|l| self.member(&l, tol))
        })
    }

    /// Does the union contain the convex cone `c`?
    ///
    /// First tries piecewise containment, then falls back to a deterministic
    /// battery of conic combinations of the generators of `c`.
    pub fn contains_cone(&self, c: &ConvexCone<S>, tol: S) -> bool {
        if self.pieces.iter().any(|p| p.contains_cone(c, tol)) {
            return true;
        }
        combination_probes(c).iter().all(|v| self.member(v, tol))
    }

    pub fn contains_union(&self, other: &ConeUnion<S>, tol: S) -> bool {
        other.pieces.iter().all(|p| self.contains_cone(p, tol))
    }

    pub fn set_equal(&self, other: &ConeUnion<S>, tol: S) -> bool {
        self.contains_union(other, tol) && other.contains_union(self, tol)
    }

    pub fn linear_image(&self, m: &Mat<S>) -> ConeUnion<S> {
        ConeUnion::new(m.rows(), self.pieces.iter().map(|p| p.linear_image(m)).collect())
    }

    /// Intersect with a convex cone, piece by piece.
    pub fn intersect_cone(&self, c: &ConvexCone<S>) -> ConeUnion<S> {
        ConeUnion::new(self.ambient, self.pieces.iter().map(|p| p.intersect(c)).collect())
    }

    /// All spanning directions of all pieces.
    pub fn spanning_dirs(&self) -> Vec<Vec<S>> {
        self.pieces.iter().flat_map(|p| p.spanning_dirs()).collect()
    }
}

/// Deterministic probe points inside a convex cone: generators, pairwise and
/// global sums, and lineality mixes.
fn combination_probes<S: Scalar>(c: &ConvexCone<S>) -> Vec<Vec<S>> {
    let gens = c.generators();
    let lins: Vec<Vec<S>> = c.lineality().col_iter().collect();
    let mut probes: Vec<Vec<S>> = Vec::new();
    for g in gens {
        probes.push(g.clone());
    }
    for l in &lins {
        probes.push(l.clone());
        probes.push(scale_vec(l, -S::one()));
    }
    for i in 0..gens.len() {
        for j in (i + 1)..gens.len() {
            probes.push(linalg::add_vec(&gens[i], &gens[j]));
            probes.push(linalg::axpy(&gens[i], fl(0.37), &gens[j]));
        }
    }
    if gens.len() > 2 {
        let total = gens.iter().fold(vec![S::zero(); c.dim()], |acc, g| linalg::add_vec(&acc, g));
        probes.push(total);
    }
    for g in gens {
        for l in &lins {
            probes.push(linalg::axpy(g, fl(0.61), l));
            probes.push(linalg::axpy(g, fl(-0.61), l));
        }
    }
    probes
}

/// Stable ordering for canonical unions: ascending piece size, then the
/// rounded generator data.
fn piece_order<S: Scalar>(a: &ConvexCone<S>, b: &ConvexCone<S>) -> std::cmp::Ordering {
    let ka = (a.lineality().cols(), a.generators().len(), a.generators().iter().map(|g| canon_key(g)).collect::<Vec<_>>());
    let kb = (b.lineality().cols(), b.generators().len(), b.generators().iter().map(|g| canon_key(g)).collect::<Vec<_>>());
    ka.cmp(&kb)
}

fn canon_key<S: Scalar>(v: &[S]) -> Vec<i64> {
    v.iter()
        .map(|&x| {
            let scaled = (x.to_f64().unwrap_or(0.0) * 1e9).round();
            if scaled == 0.0 {
                0
            } else {
                scaled as i64
            }
        })
        .collect()
}

/// Basis of `range(ambient) ∩ lineality^perp`.
fn quotient_basis<S: Scalar>(ambient_basis: &Mat<S>, lin: &Mat<S>) -> Mat<S> {
    let cols: Vec<Vec<S>> = ambient_basis.col_iter().collect();
    let mut kept: Vec<Vec<S>> = Vec::new();
    for c in cols {
        let mut r = c;
        for pass in 0..2 {
            let _ = pass;
            for l in lin.col_iter() {
                let t = dot(&r, &l);
                r = linalg::axpy(&r, -t, &l);
            }
            for k in &kept {
                let t = dot(&r, k);
                r = linalg::axpy(&r, -t, k);
            }
        }
        if let Some(u) = normalized(&r, fl(1e-9)) {
            kept.push(u);
        }
    }
    if kept.is_empty() {
        Mat::empty(ambient_basis.rows())
    } else {
        Mat::from_cols(&kept)
    }
}
