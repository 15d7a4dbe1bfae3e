//! Linear subspaces of `R^k` under the projection metric, together with the
//! swap and adjoint operations on graph spaces.
//!
//! A subspace is stored through an orthonormal basis `B`, so its orthogonal
//! projector is `B Bᵀ` and the distance between two subspaces is the spectral
//! norm of the projector difference. On a product space `R^n x R^m` the swap
//! isometry `(x, y) -> (-y, x)` turns orthogonal complements into adjoints:
//! `L✶ = swap(L^perp)`, an involution once the factors are exchanged.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Mat};
use crate::scalar::{fl, Scalar, Tol};

/// Domain/codomain split of a product space `R^n x R^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitDims {
    pub n: usize,
    pub m: usize,
}

impl SplitDims {
    pub fn new(n: usize, m: usize) -> Self {
        SplitDims { n, m }
    }

    pub fn total(self) -> usize {
        self.n + self.m
    }

    /// The split of the swapped product `R^m x R^n`.
    pub fn swapped(self) -> Self {
        SplitDims { n: self.m, m: self.n }
    }

    /// Split a point of the product into its two factors.
    pub fn split<'a, S>(self, z: &'a [S]) -> (&'a [S], &'a [S]) {
        assert_eq!(z.len(), self.total(), "point length must match the split");
        z.split_at(self.n)
    }
}

/// Linear subspace of `R^k`, held as an orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace<S> {
    ambient: usize,
    basis: Mat<S>,
}

impl<S: Scalar> Subspace<S> {
    /// Span of the given vectors; dependent and zero vectors are dropped by a
    /// rank decision on the singular values.
    pub fn from_cols(ambient: usize, cols: &[Vec<S>]) -> Self {
        assert!(cols.iter().all(|c| c.len() == ambient), "column length must match ambient");
        if cols.is_empty() {
            return Subspace { ambient, basis: Mat::empty(ambient) };
        }
        let basis = linalg::orthonormal_range(&Mat::from_cols(cols));
        Subspace { ambient, basis }
    }

    /// Subspace `{ (A u, B u) : u }` of `R^{n+m}` from the stacked matrix
    /// `(A; B)` with `A` of size `n x d` and `B` of size `m x d`.
    pub fn from_range(a: &Mat<S>, b: &Mat<S>) -> Self {
        assert_eq!(a.cols(), b.cols(), "A and B must have the same number of columns");
        let stacked = a.vcat(b);
        Subspace { ambient: stacked.rows(), basis: linalg::orthonormal_range(&stacked) }
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace { ambient, basis: Mat::empty(ambient) }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { ambient, basis: Mat::identity(ambient) }
    }

    /// Random subspace spanned by `dim` standard Gaussian vectors.
    pub fn random<R: Rng>(ambient: usize, dim: usize, rng: &mut R) -> Self {
        let cols: Vec<Vec<S>> = (0..dim)
            .map(|_| (0..ambient).map(|_| fl(rng.sample::<f64, _>(StandardNormal))).collect())
            .collect();
        Subspace::from_cols(ambient, &cols)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Mat<S> {
        &self.basis
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projection(&self) -> Mat<S> {
        if self.basis.is_empty() {
            return Mat::zeros(self.ambient, self.ambient);
        }
        self.basis.mul(&self.basis.transpose())
    }

    /// Spectral norm of the projector difference; the metric on the space of
    /// subspaces of a fixed ambient dimension.
    pub fn distance(&self, other: &Subspace<S>) -> S {
        assert_eq!(self.ambient, other.ambient, "subspace distance needs a common ambient space");
        linalg::spectral_norm(&self.projection().sub(&other.projection()))
    }

    pub fn is_equal_within(&self, other: &Subspace<S>, tol: S) -> bool {
        self.distance(other) <= tol
    }

    pub fn is_equal(&self, other: &Subspace<S>) -> bool {
        self.is_equal_within(other, Tol::standard().eq)
    }

    pub fn contains_vec(&self, v: &[S], tol: S) -> bool {
        assert_eq!(v.len(), self.ambient);
        let p = self.projection().mulvec(v);
        linalg::dist(&p, v) <= tol * (S::one() + linalg::norm(v))
    }

    pub fn orthogonal_complement(&self) -> Subspace<S> {
        Subspace { ambient: self.ambient, basis: linalg::complement(&self.basis) }
    }

    /// Image under the swap isometry `(x, y) -> (-y, x)` of `R^n x R^m` onto
    /// `R^m x R^n`.
    pub fn swap_apply(&self, dims: SplitDims) -> Subspace<S> {
        assert_eq!(self.ambient, dims.total(), "split must match the ambient space");
        let cols: Vec<Vec<S>> = self.basis.col_iter().map(|c| swap_vec(&c, dims)).collect();
        if cols.is_empty() {
            return Subspace::zero(self.ambient);
        }
        // the swap is orthogonal, so the basis stays orthonormal
        Subspace { ambient: self.ambient, basis: Mat::from_cols(&cols) }
    }

    /// Adjoint subspace `L✶ = swap(L^perp)`, living on the swapped split.
    pub fn adjoint(&self, dims: SplitDims) -> Subspace<S> {
        self.orthogonal_complement().swap_apply(dims)
    }
}

/// Apply `(x, y) -> (-y, x)` to a single vector of the product space.
pub fn swap_vec<S: Scalar>(z: &[S], dims: SplitDims) -> Vec<S> {
    let (x, y) = dims.split(z);
    let mut out = Vec::with_capacity(z.len());
    out.extend(y.iter().map(|&v| -v));
    out.extend_from_slice(x);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist, norm};

    fn span(cols: &[&[f64]]) -> Subspace<f64> {
        let ambient = cols[0].len();
        Subspace::from_cols(ambient, &cols.iter().map(|c| c.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn from_range_of_integer_stack() {
        let a = Mat::from_rows(&[vec![1.0f64]]);
        let b = Mat::from_rows(&[vec![2.0f64]]);
        let l = Subspace::from_range(&a, &b);
        assert_eq!(l.dim(), 1);
        let p = l.projection();
        // projector of span{(1,2)} is [[1,2],[2,4]]/5
        assert!((p[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((p[(0, 1)] - 0.4).abs() < 1e-12);
        assert!((p[(1, 1)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn from_range_detects_rank_deficiency() {
        // columns (1,2) and (2,4) span a line; elimination on the integer
        // stack leaves a single pivot
        let a = Mat::from_rows(&[vec![1.0f64, 2.0]]);
        let b = Mat::from_rows(&[vec![2.0f64, 4.0]]);
        let l = Subspace::from_range(&a, &b);
        assert_eq!(l.dim(), 1);
        assert!(l.contains_vec(&[1.0, 2.0], 1e-10));
    }

    #[test]
    fn zero_stack_gives_zero_subspace() {
        let a = Mat::<f64>::zeros(2, 2);
        let b = Mat::<f64>::zeros(1, 2);
        assert_eq!(Subspace::from_range(&a, &b).dim(), 0);
    }

    #[test]
    fn projection_examples() {
        let ex = span(&[&[1.0, 0.0]]).projection();
        assert!((ex[(0, 0)] - 1.0).abs() < 1e-12 && ex[(1, 1)].abs() < 1e-12);
        let diag = span(&[&[1.0, 1.0]]).projection();
        for (i, j, want) in [(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)] {
            assert!((diag[(i, j)] - want).abs() < 1e-12);
        }
        let full = Subspace::<f64>::full(2).projection();
        assert!(full.sub(&Mat::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn distance_of_axis_and_diagonal_is_sqrt_half() {
        // eigenvalues of the projector difference are +-sqrt(1/2)
        let d = span(&[&[1.0, 0.0]]).distance(&span(&[&[1.0, 1.0]]));
        assert!((d - 0.7071067811865476).abs() < 1e-12);
    }

    #[test]
    fn distance_extremes() {
        let x = span(&[&[1.0, 0.0]]);
        let y = span(&[&[0.0, 1.0]]);
        assert!(x.distance(&x) < 1e-14);
        assert!((x.distance(&y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_examples() {
        let c = span(&[&[1.0, 0.0]]).orthogonal_complement();
        assert_eq!(c.dim(), 1);
        assert!(c.contains_vec(&[0.0, 1.0], 1e-10));
        assert_eq!(Subspace::<f64>::zero(3).orthogonal_complement().dim(), 3);
        assert_eq!(Subspace::<f64>::full(3).orthogonal_complement().dim(), 0);
    }

    #[test]
    fn swap_rotates_axis_to_axis() {
        let dims = SplitDims::new(1, 1);
        let sw = span(&[&[1.0, 0.0]]).swap_apply(dims);
        assert!(sw.contains_vec(&[0.0, 1.0], 1e-12));
        let back = sw.swap_apply(dims.swapped());
        assert!(back.contains_vec(&[1.0, 0.0], 1e-12));
    }

    #[test]
    fn diagonal_line_is_self_adjoint() {
        // L = span{(1,1)}: complement span{(1,-1)}, swapped back onto span{(1,1)}
        let dims = SplitDims::new(1, 1);
        let l = span(&[&[1.0, 1.0]]);
        let adj = l.adjoint(dims);
        assert!(l.is_equal(&adj));
        let l2 = span(&[&[1.0, 2.0]]);
        assert!(l2.is_equal(&l2.adjoint(dims)));
    }

    #[test]
    fn adjoint_involution_and_dimension_law() {
        let dims = SplitDims::new(2, 1);
        let l = span(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, -1.0]]);
        let adj = l.adjoint(dims);
        assert_eq!(adj.dim(), 3 - l.dim());
        let back = adj.adjoint(dims.swapped());
        assert!(back.is_equal_within(&l, 1e-10));
    }

    #[test]
    fn adjoint_is_isometric() {
        let dims = SplitDims::new(2, 2);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        for _ in 0..50 {
            let l1 = Subspace::<f64>::random(4, 2, &mut rng);
            let l2 = Subspace::<f64>::random(4, 3, &mut rng);
            let lhs = l1.distance(&l2);
            let rhs = l1.adjoint(dims).distance(&l2.adjoint(dims));
            assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn swap_vec_signs() {
        let dims = SplitDims::new(2, 1);
        assert_eq!(swap_vec(&[1.0, 2.0, 3.0], dims), vec![-3.0, 1.0, 2.0]);
        let v = [0.3f64, -0.4, 0.5];
        assert!((norm(&swap_vec(&v, dims)) - norm(&v)).abs() < 1e-15);
    }

    #[test]
    fn basis_stays_orthonormal() {
        let l = span(&[&[1.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, -1.0]]);
        assert_eq!(l.dim(), 2, "third vector is dependent");
        let b = l.basis();
        let defect = b.transpose().mul(b).sub(&Mat::identity(2)).max_abs();
        assert!(defect <= 1e-12);
        let x = [1.0, 1.0, 0.0];
        let px = l.projection().mulvec(&x);
        assert!(dist(&px, &x) < 1e-12);
    }
}
