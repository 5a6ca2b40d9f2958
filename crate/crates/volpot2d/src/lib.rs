//! High-order volume potentials on multiply connected planar domains.
//!
//! The volume (Newton) potential of a source density is split into a
//! target-independent smooth quadrature, summed by a fast method, and sparse
//! local corrections. The corrections come from reducing each cell integral
//! to integrals along rays from a star point, which handles the logarithmic
//! kernel singularity with one-dimensional rules. Combined with a Nyström
//! double-layer solver this gives Dirichlet solvers for the Poisson and
//! modified Helmholtz equations.

pub mod basis;
pub mod bie;
pub mod geometry;
pub mod kernel;
pub mod mesh;
pub mod par;
pub mod potential;
pub mod problems;
pub mod quad1d;
pub mod singular;
pub mod summation;
mod tables;

use thiserror::Error;

/// A point or vector in the plane.
pub type Point = [f64; 2];

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub(crate) fn scale(s: f64, a: Point) -> Point {
    [s * a[0], s * a[1]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Crate-level error wrapping the per-module errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] kernel::KernelError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Basis(#[from] basis::BasisError),
    #[error(transparent)]
    Quad(#[from] quad1d::QuadError),
    #[error(transparent)]
    Singular(#[from] singular::SingularError),
    #[error(transparent)]
    Summation(#[from] summation::SummationError),
    #[error(transparent)]
    Potential(#[from] potential::PotentialError),
    #[error(transparent)]
    Bie(#[from] bie::BieError),
    #[error(transparent)]
    Problem(#[from] problems::ProblemError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
