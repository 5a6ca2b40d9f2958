//! Free-space Green functions for the Laplace and modified Helmholtz
//! operators, plus the modified Bessel functions they need.

use std::f64::consts::PI;

use thiserror::Error;

use crate::Point;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const INV_2PI: f64 = 1.0 / (2.0 * PI);

/// Largest argument for which `K_n(x)` is representable; beyond it the
/// value underflows to zero.
pub const BESSEL_UNDERFLOW_X: f64 = 705.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel evaluated at coincident points ({x}, {y})")]
    Coincident { x: f64, y: f64 },
    #[error("Bessel function argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("unsupported Bessel order {0}")]
    UnsupportedOrder(u32),
    #[error("modified Helmholtz parameter must be positive and finite, got {0}")]
    BadLambda(f64),
}

/// Which operator the Green function belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `-Δu = f`, G = -(1/2π) log r.
    Laplace,
    /// `(-Δ + λ²) u = f`, G = (1/2π) K0(λ r).
    ModifiedHelmholtz { lambda: f64 },
}

impl KernelKind {
    pub fn modified_helmholtz(lambda: f64) -> Result<Self, KernelError> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(KernelKind::ModifiedHelmholtz { lambda })
        } else {
            Err(KernelError::BadLambda(lambda))
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            KernelKind::Laplace => None,
            KernelKind::ModifiedHelmholtz { lambda } => Some(lambda),
        }
    }

    /// Green function as a function of the distance `r > 0`. No checks.
    #[inline]
    pub fn green(&self, r: f64) -> f64 {
        match *self {
            KernelKind::Laplace => -INV_2PI * r.ln(),
            KernelKind::ModifiedHelmholtz { lambda } => INV_2PI * k0_unchecked(lambda * r),
        }
    }

    /// Radial derivative dG/dr.
    #[inline]
    pub fn green_dr(&self, r: f64) -> f64 {
        match *self {
            KernelKind::Laplace => -INV_2PI / r,
            KernelKind::ModifiedHelmholtz { lambda } => -INV_2PI * lambda * k1_unchecked(lambda * r),
        }
    }

    /// Double-layer kernel ∂G(x, y)/∂ν_y for a source at `y` with unit normal `nu`.
    #[inline]
    pub fn double_layer(&self, x: Point, y: Point, nu: Point) -> f64 {
        let dx = y[0] - x[0];
        let dy = y[1] - x[1];
        let r = dx.hypot(dy);
        self.green_dr(r) * (dx * nu[0] + dy * nu[1]) / r
    }
}

/// Endpoint behaviour of the ray integrands produced by a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityKind {
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularityClass {
    pub class: SingularityKind,
    /// Small-t form of the kernel along a ray through the target.
    pub description: &'static str,
}

pub fn singularity_of(_kind: KernelKind) -> SingularityClass {
    // K0(z) = -log(z/2) I0(z) + smooth, so both kernels share the class.
    SingularityClass { class: SingularityKind::Logarithmic, description: "G ~ s(t) phi(t) + psi(t) with s(t) = log t" }
}

pub fn eval_kernel(kind: KernelKind, r: Point, r0: Point) -> Result<f64, KernelError> {
    let d = (r[0] - r0[0]).hypot(r[1] - r0[1]);
    if d == 0.0 {
        return Err(KernelError::Coincident { x: r[0], y: r[1] });
    }
    Ok(kind.green(d))
}

/// Value of `K_n(x)` together with a flag raised when the result underflowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselValue {
    pub value: f64,
    pub underflow: bool,
}

/// Modified Bessel function of the second kind, orders 0 and 1.
pub fn bessel_k(order: u32, x: f64) -> Result<BesselValue, KernelError> {
    if order > 1 {
        return Err(KernelError::UnsupportedOrder(order));
    }
    if !(x > 0.0) {
        return Err(KernelError::NonPositiveArgument(x));
    }
    if x > BESSEL_UNDERFLOW_X {
        return Ok(BesselValue { value: 0.0, underflow: true });
    }
    let value = if order == 0 { k0_unchecked(x) } else { k1_unchecked(x) };
    Ok(BesselValue { value, underflow: value == 0.0 })
}

#[inline]
pub fn k0_unchecked(x: f64) -> f64 {
    if x <= 2.0 {
        k01_series(x).0
    } else if x > BESSEL_UNDERFLOW_X {
        0.0
    } else {
        let (k0e, _) = k01_scaled_cf(x);
        k0e * (-x).exp()
    }
}

#[inline]
pub fn k1_unchecked(x: f64) -> f64 {
    if x <= 2.0 {
        k01_series(x).1
    } else if x > BESSEL_UNDERFLOW_X {
        0.0
    } else {
        let (_, k1e) = k01_scaled_cf(x);
        k1e * (-x).exp()
    }
}

/// Ascending series for K0 and K1, accurate for 0 < x ≤ 2.
fn k01_series(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let lg = (0.5 * x).ln();
    // term_k = y^k / (k!)^2 ; k1 terms use y^k / (k! (k+1)!)
    let mut t = 1.0;
    let mut i0 = 1.0;
    let mut harm = 0.0;
    let mut s0 = 0.0;
    // psi(k+1) + psi(k+2) = -2γ + 2 H_k + 1/(k+1)
    let mut u = 1.0;
    let mut i1h = 1.0; // sum of y^k/(k!(k+1)!)
    let mut s1 = -2.0 * EULER_GAMMA + 1.0;
    for k in 1..40 {
        let kf = k as f64;
        t *= y / (kf * kf);
        u *= y / (kf * (kf + 1.0));
        harm += 1.0 / kf;
        i0 += t;
        s0 += t * harm;
        i1h += u;
        s1 += u * (-2.0 * EULER_GAMMA + 2.0 * harm + 1.0 / (kf + 1.0));
        if t < 1e-18 * i0 && u < 1e-18 * i1h {
            break;
        }
    }
    let k0 = -(lg + EULER_GAMMA) * i0 + s0;
    let i1 = 0.5 * x * i1h;
    let k1 = 1.0 / x + lg * i1 - 0.25 * x * s1;
    (k0, k1)
}

/// Steed's continued fraction for e^x K0(x) and e^x K1(x), x > 2.
fn k01_scaled_cf(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..20_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    let k0e = (PI / (2.0 * x)).sqrt() / s;
    let k1e = k0e * (x + 0.5 - a1 * h) / x;
    (k0e, k1e)
}

/// Modified Bessel functions of the first kind I0 and I1 (x ≥ 0).
pub fn bessel_i01(x: f64) -> (f64, f64) {
    let ax = x.abs();
    if ax <= 30.0 {
        let y = 0.25 * x * x;
        let mut t = 1.0;
        let mut u = 1.0;
        let mut i0 = 1.0;
        let mut i1h = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            t *= y / (kf * kf);
            u *= y / (kf * (kf + 1.0));
            i0 += t;
            i1h += u;
            if t < 1e-18 * i0 && u < 1e-18 * i1h {
                break;
            }
        }
        (i0, 0.5 * x * i1h)
    } else {
        // Hankel asymptotic series; terms shrink fast for x > 30.
        let mut s0 = 1.0;
        let mut s1 = 1.0;
        let mut t0 = 1.0;
        let mut t1 = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            let m = 2.0 * kf - 1.0;
            t0 *= m * m / (8.0 * kf * ax);
            t1 *= (m * m - 4.0) / (8.0 * kf * ax);
            s0 += t0;
            s1 += t1;
            if t0.abs() < 1e-17 && t1.abs() < 1e-17 {
                break;
            }
        }
        let pre = ax.exp() / (2.0 * PI * ax).sqrt();
        (pre * s0, pre * s1 * x.signum())
    }
}
