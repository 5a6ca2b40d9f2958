//! Built-in test problems with known solutions.

use thiserror::Error;

use crate::kernel::{KernelError, KernelKind};
use crate::Point;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem id {0:?}; expected poisson-mfg1, const-rhs-disk or modhelm-mfg1")]
    UnknownId(String),
    #[error("modhelm-mfg1 needs a positive lambda")]
    MissingLambda,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// A Dirichlet problem `L u = f` in Ω, `u = g` on Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    /// `−Δu = f` with the manufactured solution [`mfg_u`].
    PoissonMfg1,
    /// `−Δu = 1` with `u = 0` on the circle of the given centre and radius.
    ConstRhsDisk { center: Point, radius: f64 },
    /// `−Δu + λ²u = f` with the manufactured solution [`mfg_u`].
    ModHelmMfg1 { lambda: f64 },
}

/// Manufactured solution shared by the Poisson and modified Helmholtz
/// problems.
pub fn mfg_u(x: Point) -> f64 {
    let [x, y] = x;
    (6.0 * x).sin() / 6.0
        + (8.0 * (y + 0.1)).cos() / 8.0
        + (4.0 * x * y).sin() / 4.0
        + (3.0 * x).cos() * (3.0 * y).sin() / 6.0
}

/// `−Δ` of [`mfg_u`].
pub fn mfg_f(x: Point) -> f64 {
    let [x, y] = x;
    6.0 * (6.0 * x).sin()
        + 8.0 * (8.0 * (y + 0.1)).cos()
        + 4.0 * (x * x + y * y) * (4.0 * x * y).sin()
        + 3.0 * (3.0 * x).cos() * (3.0 * y).sin()
}

impl Problem {
    /// Look up a problem by id. `lambda` is required for `modhelm-mfg1`;
    /// `const-rhs-disk` uses the unit disk at the origin.
    pub fn from_id(id: &str, lambda: Option<f64>) -> Result<Self, ProblemError> {
        match id {
            "poisson-mfg1" => Ok(Problem::PoissonMfg1),
            "const-rhs-disk" => Ok(Problem::ConstRhsDisk { center: [0.0, 0.0], radius: 1.0 }),
            "modhelm-mfg1" => match lambda {
                Some(l) if l > 0.0 && l.is_finite() => Ok(Problem::ModHelmMfg1 { lambda: l }),
                _ => Err(ProblemError::MissingLambda),
            },
            other => Err(ProblemError::UnknownId(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Problem::PoissonMfg1 => "poisson-mfg1",
            Problem::ConstRhsDisk { .. } => "const-rhs-disk",
            Problem::ModHelmMfg1 { .. } => "modhelm-mfg1",
        }
    }

    pub fn kernel(&self) -> Result<KernelKind, ProblemError> {
        Ok(match self {
            Problem::ModHelmMfg1 { lambda } => KernelKind::modified_helmholtz(*lambda)?,
            _ => KernelKind::Laplace,
        })
    }

    /// Right-hand side.
    pub fn f(&self, x: Point) -> f64 {
        match self {
            Problem::PoissonMfg1 => mfg_f(x),
            Problem::ConstRhsDisk { .. } => 1.0,
            Problem::ModHelmMfg1 { lambda } => mfg_f(x) + lambda * lambda * mfg_u(x),
        }
    }

    /// Dirichlet data.
    pub fn g(&self, x: Point) -> f64 {
        match self {
            Problem::ConstRhsDisk { .. } => 0.0,
            _ => mfg_u(x),
        }
    }

    /// Exact solution, when known.
    pub fn exact(&self, x: Point) -> Option<f64> {
        match self {
            Problem::ConstRhsDisk { center, radius } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                Some((radius * radius - r2) / 4.0)
            }
            _ => Some(mfg_u(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(u: impl Fn(Point) -> f64, x: Point, h: f64) -> f64 {
        (u([x[0] + h, x[1]]) + u([x[0] - h, x[1]]) + u([x[0], x[1] + h]) + u([x[0], x[1] - h]) - 4.0 * u(x)) / (h * h)
    }

    #[test]
    fn manufactured_pair_is_consistent() {
        for x in [[0.1, 0.2], [-0.7, 0.3], [0.5, -0.5], [0.0, 0.0]] {
            let r = -laplacian(mfg_u, x, 1e-3) - mfg_f(x);
            assert!(r.abs() < 1e-3, "{x:?}: {r}");
        }
    }

    #[test]
    fn modified_helmholtz_rhs() {
        let p = Problem::from_id("modhelm-mfg1", Some(10.0)).unwrap();
        let x = [0.3, -0.2];
        let r = -laplacian(mfg_u, x, 1e-3) + 100.0 * mfg_u(x) - p.f(x);
        assert!(r.abs() < 1e-3);
        assert_eq!(p.kernel().unwrap(), KernelKind::ModifiedHelmholtz { lambda: 10.0 });
    }

    #[test]
    fn constant_rhs_solution() {
        let p = Problem::from_id("const-rhs-disk", None).unwrap();
        assert_eq!(p.exact([0.0, 0.0]), Some(0.25));
        assert_eq!(p.exact([1.0, 0.0]), Some(0.0));
        assert!((-laplacian(|x| p.exact(x).unwrap(), [0.2, 0.1], 1e-3) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ids_round_trip_and_errors() {
        for id in ["poisson-mfg1", "const-rhs-disk"] {
            assert_eq!(Problem::from_id(id, None).unwrap().id(), id);
        }
        assert_eq!(Problem::from_id("modhelm-mfg1", None), Err(ProblemError::MissingLambda));
        assert!(matches!(Problem::from_id("nope", None), Err(ProblemError::UnknownId(_))));
    }
}
