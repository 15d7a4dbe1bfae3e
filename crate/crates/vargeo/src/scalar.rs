//! Scalar abstraction used across the crate.
//!
//! All geometry code is generic over [`Scalar`]; `f64` is the lane the built-in
//! corpus and the command-line harness run on, `f32` instantiates with wider
//! default tolerances. Concrete `f64` aliases for the main types live at the
//! crate root.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the toolkit can compute with.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Default + Sum + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for pulling an `f64` literal into the scalar type.
///
/// Panics only if the target type cannot represent any finite value of the
/// source, which does not happen for the float types implementing [`Scalar`].
pub fn fl<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("finite f64 literal must convert into the scalar type")
}

/// Default tolerances, pinned for `f64` and widened with machine epsilon so the
/// same code stays meaningful under `f32`.
#[derive(Clone, Copy, Debug)]
pub struct Tol<S> {
    /// Subspace and cone set-equality tolerance (spectral projection distance).
    pub eq: S,
    /// Orthonormality defect allowed in a basis after re-orthonormalization.
    pub orth: S,
    /// Graph membership tolerance for exactly-represented (polyhedral) graphs.
    pub graph_exact: S,
    /// Graph membership tolerance for smooth-oracle graphs.
    pub graph_smooth: S,
    /// Relative residual below which a point counts as a member of a cone or
    /// polyhedron.
    pub member: S,
}

impl<S: Scalar> Tol<S> {
    pub fn standard() -> Self {
        let eps = S::epsilon();
        Tol {
            eq: Float::max(fl(1e-8), eps * fl(1024.0)),
            orth: Float::max(fl(1e-12), eps * fl(256.0)),
            graph_exact: Float::max(fl(1e-9), eps * fl(512.0)),
            graph_smooth: Float::max(fl(1e-7), eps * fl(4096.0)),
            member: Float::max(fl(1e-9), eps * fl(512.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_defaults_are_the_pinned_values() {
        let tol = Tol::<f64>::standard();
        assert_eq!(tol.eq, 1e-8);
        assert_eq!(tol.orth, 1e-12);
        assert_eq!(tol.graph_exact, 1e-9);
        assert_eq!(tol.graph_smooth, 1e-7);
    }

    #[test]
    fn f32_defaults_scale_with_epsilon() {
        let tol = Tol::<f32>::standard();
        assert!(tol.orth > 1e-12);
        assert!(tol.orth < 1e-3);
        assert!(tol.eq >= tol.orth);
    }
}
