//! Small dense matrices and the factorizations the cone calculus needs.
//!
//! Ambient dimensions stay in the single digits throughout the crate, so the
//! implementations favor determinism and accuracy over asymptotics: cyclic
//! Jacobi for symmetric eigenproblems, Gram-matrix singular values with a
//! two-pass modified Gram-Schmidt polish for orthonormal bases, partial-pivot
//! elimination for square solves, and a Lawson-Hanson active set for
//! nonnegative least squares.

use crate::scalar::{fl, Scalar};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Mat { rows: r, cols: c, data: rows.concat() }
    }

    pub fn from_cols(cols: &[Vec<S>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        assert!(cols.iter().all(|col| col.len() == r), "ragged columns");
        let mut m = Mat::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `rows x 0` matrix; the natural basis of the zero subspace of `R^rows`.
    pub fn empty(rows: usize) -> Self {
        Mat::zeros(rows, 0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn col_iter(&self) -> impl Iterator<Item = Vec<S>> + '_ {
        (0..self.cols).map(|j| self.col(j))
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "inner dimensions must match");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mulvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "vector length must match columns");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, s: S) -> Mat<S> {
        let mut out = self.clone();
        for x in &mut out.data {
            *x = *x * s;
        }
        out
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x = *x - *y;
        }
        out
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x = *x + *y;
        }
        out
    }

    /// Stack `self` on top of `other`.
    pub fn vcat(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.cols, "column counts must match");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Place `other` to the right of `self`.
    pub fn hcat(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.rows, other.rows, "row counts must match");
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)];
            }
            for j in 0..other.cols {
                out[(i, self.cols + j)] = other[(i, j)];
            }
        }
        out
    }

    /// Rows `lo..hi` as a new matrix.
    pub fn row_block(&self, lo: usize, hi: usize) -> Mat<S> {
        assert!(lo <= hi && hi <= self.rows);
        Mat { rows: hi - lo, cols: self.cols, data: self.data[lo * self.cols..hi * self.cols].to_vec() }
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.cols == 0 || self.rows == 0
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl<S: std::fmt::Debug> std::fmt::Debug for Mat<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

// ---------------------------------------------------------------------------
// vector helpers

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

pub fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    norm(&sub_vec(a, b))
}

pub fn add_vec<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn sub_vec<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn scale_vec<S: Scalar>(a: &[S], s: S) -> Vec<S> {
    a.iter().map(|&x| x * s).collect()
}

/// `a + s * b`.
pub fn axpy<S: Scalar>(a: &[S], s: S, b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

/// Unit vector along `a`, or `None` when `a` is numerically zero.
pub fn normalized<S: Scalar>(a: &[S], zero_tol: S) -> Option<Vec<S>> {
    let n = norm(a);
    if n <= zero_tol {
        None
    } else {
        Some(scale_vec(a, S::one() / n))
    }
}

/// Angle between two nonzero vectors, in radians.
pub fn angle_between<S: Scalar>(a: &[S], b: &[S]) -> S {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.min(S::one()).max(-S::one()).acos()
}

// ---------------------------------------------------------------------------
// factorizations

/// Eigenvalues (descending) and matching orthonormal eigenvector columns of a
/// symmetric matrix, by cyclic Jacobi rotations.
pub fn sym_eig<S: Scalar>(a: &Mat<S>) -> (Vec<S>, Mat<S>) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "sym_eig needs a square matrix");
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return (m.col(0).first().map_or(vec![], |&x| vec![x]), v);
    }
    let frob = m.frobenius();
    let stop = frob * S::epsilon() * fl(0.5);
    for _sweep in 0..30 {
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= stop * fl(1e-3) {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (fl::<S>(2.0) * apq);
                let t = {
                    let s = if theta >= S::zero() { S::one() } else { -S::one() };
                    s / (theta.abs() + (S::one() + theta * theta).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).expect("eigenvalues are finite"));
    let vals: Vec<S> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (jj, &i) in order.iter().enumerate() {
        let mut col = v.col(i);
        fix_sign(&mut col);
        for k in 0..n {
            vecs[(k, jj)] = col[k];
        }
    }
    (vals, vecs)
}

/// Flip a vector so its largest-magnitude component is positive; keeps
/// eigenvector output deterministic.
fn fix_sign<S: Scalar>(v: &mut [S]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < S::zero() {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Singular values of `a`, descending.
pub fn singular_values<S: Scalar>(a: &Mat<S>) -> Vec<S> {
    if a.is_empty() {
        return vec![];
    }
    let gram = if a.rows() >= a.cols() { a.transpose().mul(a) } else { a.mul(&a.transpose()) };
    let (vals, _) = sym_eig(&gram);
    vals.into_iter().map(|l| l.max(S::zero()).sqrt()).collect()
}

pub fn spectral_norm<S: Scalar>(a: &Mat<S>) -> S {
    singular_values(a).first().copied().unwrap_or_else(S::zero)
}

/// Threshold below which eigenvalues of a Gram or other symmetric matrix
/// count as zero for rank decisions.
///
/// Rank decisions happen on the eigenvalue scale of `A^T A`, not on the
/// singular-value scale: forming the Gram matrix squares the conditioning, so
/// an exactly-zero singular value resurfaces as an eigenvalue of order
/// `eps * lambda_max`, which is `sqrt(eps) * sigma_max` after the square root.
pub fn rank_cutoff<S: Scalar>(lambda_max: S, rows: usize, cols: usize) -> S {
    fl::<S>(64.0) * S::epsilon() * lambda_max * fl(rows.max(cols).max(1) as f64)
}

pub fn rank<S: Scalar>(a: &Mat<S>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let gram = if a.rows() >= a.cols() { a.transpose().mul(a) } else { a.mul(&a.transpose()) };
    let (vals, _) = sym_eig(&gram);
    let cutoff = rank_cutoff(vals.first().copied().unwrap_or_else(S::zero), a.rows(), a.cols());
    vals.iter().filter(|&&l| l > cutoff).count()
}

/// Orthonormal basis of the column space of `a`.
///
/// Rank comes from the singular values of the Gram matrix; the kept left
/// singular directions are then re-orthonormalized with two passes of modified
/// Gram-Schmidt to push the orthonormality defect toward machine precision.
pub fn orthonormal_range<S: Scalar>(a: &Mat<S>) -> Mat<S> {
    if a.is_empty() {
        return Mat::empty(a.rows());
    }
    let gram = a.transpose().mul(a);
    let (vals, vecs) = sym_eig(&gram);
    let cutoff = rank_cutoff(vals.first().copied().unwrap_or_else(S::zero), a.rows(), a.cols());
    let mut cols = Vec::new();
    for (j, &l) in vals.iter().enumerate() {
        if l > cutoff {
            let u = a.mulvec(&vecs.col(j));
            cols.push(scale_vec(&u, S::one() / l.sqrt()));
        }
    }
    mgs(&cols, None)
}

/// Orthonormal basis of the right nullspace of `a`.
pub fn nullspace<S: Scalar>(a: &Mat<S>) -> Mat<S> {
    if a.rows() == 0 {
        return Mat::identity(a.cols());
    }
    if a.cols() == 0 {
        return Mat::empty(0);
    }
    let gram = a.transpose().mul(a);
    let (vals, vecs) = sym_eig(&gram);
    let cutoff = rank_cutoff(vals.first().copied().unwrap_or_else(S::zero), a.rows(), a.cols());
    let mut cols = Vec::new();
    for (j, &l) in vals.iter().enumerate() {
        if l <= cutoff {
            cols.push(vecs.col(j));
        }
    }
    mgs(&cols, None)
}

/// Orthonormal basis of the orthogonal complement of the (orthonormal) columns
/// of `basis` inside the full ambient space.
///
/// Uses pivoted Gram-Schmidt over the coordinate directions, so the output is
/// deterministic and, for axis-aligned inputs, axis-aligned.
pub fn complement<S: Scalar>(basis: &Mat<S>) -> Mat<S> {
    let n = basis.rows();
    let want = n - basis.cols();
    let mut accepted: Vec<Vec<S>> = Vec::with_capacity(want);
    while accepted.len() < want {
        let mut best: Option<(S, Vec<S>)> = None;
        for i in 0..n {
            let mut e = vec![S::zero(); n];
            e[i] = S::one();
            let r = residual_against(&e, basis, &accepted);
            let rn = norm(&r);
            if best.as_ref().map_or(true, |(bn, _)| rn > *bn) {
                best = Some((rn, r));
            }
        }
        let (rn, r) = best.expect("ambient dimension exceeds basis rank");
        assert!(rn > fl(0.1), "complement search lost rank; basis columns are not orthonormal");
        accepted.push(scale_vec(&r, S::one() / rn));
    }
    // second orthogonalization pass to polish
    mgs(&accepted, Some(basis))
}

fn residual_against<S: Scalar>(v: &[S], basis: &Mat<S>, accepted: &[Vec<S>]) -> Vec<S> {
    let mut r = v.to_vec();
    for pass in 0..2 {
        let _ = pass;
        for col in basis.col_iter() {
            let c = dot(&r, &col);
            r = axpy(&r, -c, &col);
        }
        for col in accepted {
            let c = dot(&r, col);
            r = axpy(&r, -c, col);
        }
    }
    r
}

/// Two-pass modified Gram-Schmidt over the given columns, optionally keeping
/// everything orthogonal to `against` as well. Columns that lose essentially
/// all their mass are dropped, so feed this full-rank input when the count
/// matters.
fn mgs<S: Scalar>(cols: &[Vec<S>], against: Option<&Mat<S>>) -> Mat<S> {
    let n = against.map_or_else(|| cols.first().map_or(0, Vec::len), Mat::rows);
    let mut out: Vec<Vec<S>> = Vec::with_capacity(cols.len());
    for c in cols {
        let mut r = c.clone();
        for pass in 0..2 {
            let _ = pass;
            if let Some(b) = against {
                for col in b.col_iter() {
                    let t = dot(&r, &col);
                    r = axpy(&r, -t, &col);
                }
            }
            for col in &out {
                let t = dot(&r, col);
                r = axpy(&r, -t, col);
            }
        }
        let rn = norm(&r);
        if rn > fl::<S>(64.0) * S::epsilon() * fl((n.max(1)) as f64) {
            out.push(scale_vec(&r, S::one() / rn));
        }
    }
    if out.is_empty() {
        Mat::empty(n)
    } else {
        Mat::from_cols(&out)
    }
}

/// Solve `a x = b` for square `a` by partial-pivot elimination. `None` when a
/// pivot falls below the singularity threshold.
pub fn solve<S: Scalar>(a: &Mat<S>, b: &[S]) -> Option<Vec<S>> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "solve needs a square matrix");
    assert_eq!(n, b.len());
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs();
    if scale == S::zero() {
        return if n == 0 { Some(vec![]) } else { None };
    }
    let pivot_tol = scale * S::epsilon() * fl(64.0 * n as f64);
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if m[(i, k)].abs() > m[(p, k)].abs() {
                p = i;
            }
        }
        if m[(p, k)].abs() <= pivot_tol {
            return None;
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == S::zero() {
                continue;
            }
            for j in k..n {
                m[(i, j)] = m[(i, j)] - f * m[(k, j)];
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in (k + 1)..n {
            s = s - m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Some(x)
}

pub fn solve_mat<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Option<Mat<S>> {
    let cols: Option<Vec<Vec<S>>> = b.col_iter().map(|c| solve(a, &c)).collect();
    cols.map(|c| Mat::from_cols(&c))
}

pub fn inverse<S: Scalar>(a: &Mat<S>) -> Option<Mat<S>> {
    solve_mat(a, &Mat::identity(a.rows()))
}

/// Apply the pseudo-inverse of a symmetric matrix to `b`.
fn pinv_sym_apply<S: Scalar>(m: &Mat<S>, b: &[S]) -> Vec<S> {
    let (vals, vecs) = sym_eig(m);
    let cutoff = rank_cutoff(vals.iter().fold(S::zero(), |a, &v| a.max(v.abs())), m.rows(), m.cols());
    let mut out = vec![S::zero(); m.rows()];
    for (j, &l) in vals.iter().enumerate() {
        if l.abs() > cutoff {
            let v = vecs.col(j);
            let c = dot(&v, b) / l;
            out = axpy(&out, c, &v);
        }
    }
    out
}

/// Closest point to `z` on the affine set `{ p : m p = rhs }`.
///
/// Redundant rows are fine; `None` means the constraints are inconsistent at
/// tolerance `feas_tol` (scaled by the data magnitude).
pub fn project_affine<S: Scalar>(z: &[S], m: &Mat<S>, rhs: &[S], feas_tol: S) -> Option<Vec<S>> {
    if m.rows() == 0 {
        return Some(z.to_vec());
    }
    let mmt = m.mul(&m.transpose());
    let defect = sub_vec(&m.mulvec(z), rhs);
    let y = pinv_sym_apply(&mmt, &defect);
    let p = sub_vec(z, &m.transpose().mulvec(&y));
    let res = norm(&sub_vec(&m.mulvec(&p), rhs));
    let scale = S::one() + norm(rhs) + m.max_abs() * norm(&p);
    if res <= feas_tol * scale {
        Some(p)
    } else {
        None
    }
}

/// Lawson-Hanson nonnegative least squares: minimize `|g x - v|` over `x >= 0`.
/// Returns the coefficients and the residual norm.
pub fn nnls<S: Scalar>(g: &Mat<S>, v: &[S]) -> (Vec<S>, S) {
    let n = g.cols();
    let mut x = vec![S::zero(); n];
    if n == 0 {
        return (x, norm(v));
    }
    let mut passive = vec![false; n];
    let grad_tol = S::epsilon() * fl::<S>(1e4) * (S::one() + norm(v)) * (S::one() + g.max_abs());
    let max_outer = 6 * n + 12;
    for _ in 0..max_outer {
        let r = sub_vec(v, &g.mulvec(&x));
        let w = g.transpose().mulvec(&r);
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !passive[j] && w[j] > grad_tol && best.map_or(true, |b| w[j] > w[b]) {
                best = Some(j);
            }
        }
        let Some(j_new) = best else { break };
        passive[j_new] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let gp = Mat::from_cols(&idx.iter().map(|&j| g.col(j)).collect::<Vec<_>>());
            let z = pinv_sym_apply(&gp.transpose().mul(&gp), &gp.transpose().mulvec(v));
            if z.iter().all(|&zi| zi > S::zero()) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            let mut alpha = S::one();
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= S::zero() {
                    let step = x[j] / (x[j] - z[k]);
                    alpha = alpha.min(step);
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] = x[j] + alpha * (z[k] - x[j]);
                if x[j] <= grad_tol {
                    x[j] = S::zero();
                    passive[j] = false;
                }
            }
        }
    }
    let r = sub_vec(v, &g.mulvec(&x));
    (x, norm(&r))
}
