//! Reference integrators shared by the integration tests. They are written
//! independently of the library's quadrature code.

#![allow(dead_code)]

pub type P = [f64; 2];

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_64, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Gauss–Kronrod 7/15 on [a, b] for a vector integrand: (Kronrod, error).
fn gk15(f: &dyn Fn(f64) -> Vec<f64>, a: f64, b: f64) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let n = fc.len();
    let mut k: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut g: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let f1 = f(c - h * XGK[j]);
        let f2 = f(c + h * XGK[j]);
        for i in 0..n {
            let s = f1[i] + f2[i];
            k[i] += WGK[j] * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..n {
        k[i] *= h;
        g[i] *= h;
        err = err.max((k[i] - g[i]).abs());
    }
    (k, err)
}

/// Adaptive vector quadrature to absolute tolerance `tol` (max norm); a
/// panel is also accepted once its error estimate reaches roundoff.
pub fn adapt(f: &dyn Fn(f64) -> Vec<f64>, a: f64, b: f64, tol: f64) -> Vec<f64> {
    fn rec(f: &dyn Fn(f64) -> Vec<f64>, a: f64, b: f64, tol: f64, depth: u32, out: &mut Vec<f64>) {
        let (k, err) = gk15(f, a, b);
        let mag = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= tol || err <= 1e-15 * mag || depth >= 50 {
            if out.is_empty() {
                out.resize(k.len(), 0.0);
            }
            for (o, v) in out.iter_mut().zip(&k) {
                *o += v;
            }
            return;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1, out);
        rec(f, m, b, 0.5 * tol, depth + 1, out);
    }
    let mut out = Vec::new();
    rec(f, a, b, tol, 0, &mut out);
    out
}

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: P, b: P) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// `∫ G(|r − r0|) f(r) dA` over the counterclockwise convex polygon `v`
/// containing `r0`, in polar coordinates about `r0`, one sector per edge.
pub fn polar_oracle(v: &[P], r0: P, g: &dyn Fn(f64) -> f64, f: &dyn Fn(P) -> Vec<f64>, tol: f64) -> Vec<f64> {
    let mut total: Vec<f64> = Vec::new();
    let nv = v.len();
    for e in 0..nv {
        let a = v[e];
        let b = v[(e + 1) % nv];
        let da = sub(a, r0);
        let db = sub(b, r0);
        let ab = sub(b, a);
        // distance from r0 to the edge line; skip sectors of zero width
        let h = cross(ab, sub(r0, a)).abs() / ab[0].hypot(ab[1]);
        if h < 1e-15 {
            continue;
        }
        let th0 = da[1].atan2(da[0]);
        let mut th1 = db[1].atan2(db[0]);
        while th1 < th0 {
            th1 += 2.0 * std::f64::consts::PI;
        }
        let sector = |th: f64| -> Vec<f64> {
            let dir = [th.cos(), th.sin()];
            // ray r0 + ρ dir hits the edge line at ρmax
            let rmax = cross(da, ab) / cross(dir, ab);
            let inner = |u: f64| -> Vec<f64> {
                let rho = rmax * u * u;
                let r = [r0[0] + rho * dir[0], r0[1] + rho * dir[1]];
                let w = g(rho) * rho * 2.0 * rmax * u;
                f(r).into_iter().map(|x| x * w).collect()
            };
            adapt(&inner, 0.0, 1.0, tol)
        };
        let s = adapt(&sector, th0, th1, tol);
        if total.is_empty() {
            total = s;
        } else {
            for (t, x) in total.iter_mut().zip(&s) {
                *t += x;
            }
        }
    }
    total
}

/// `∫_T G(|r − r0|) f(r) dA` by nested adaptive integration in x then y;
/// suited to targets outside the triangle.
pub fn cartesian_oracle(v: [P; 3], r0: P, g: &dyn Fn(f64) -> f64, f: &dyn Fn(P) -> Vec<f64>, tol: f64) -> Vec<f64> {
    let mut xs = [v[0][0], v[1][0], v[2][0]];
    xs.sort_by(f64::total_cmp);
    let ylim = |x: f64| -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in 0..3 {
            let a = v[e];
            let b = v[(e + 1) % 3];
            let (x0, x1) = (a[0].min(b[0]), a[0].max(b[0]));
            if x < x0 - 1e-15 || x > x1 + 1e-15 || (b[0] - a[0]).abs() < 1e-300 {
                continue;
            }
            let t = ((x - a[0]) / (b[0] - a[0])).clamp(0.0, 1.0);
            let y = a[1] + t * (b[1] - a[1]);
            lo = lo.min(y);
            hi = hi.max(y);
        }
        (lo, hi)
    };
    let col = |x: f64| -> Vec<f64> {
        let (lo, hi) = ylim(x);
        let inner = |y: f64| -> Vec<f64> {
            let r = [x, y];
            let w = g((x - r0[0]).hypot(y - r0[1]));
            f(r).into_iter().map(|z| z * w).collect()
        };
        // split at the target's height when it lies inside the column
        if r0[1] > lo && r0[1] < hi {
            let mut a = adapt(&inner, lo, r0[1], tol);
            let b = adapt(&inner, r0[1], hi, tol);
            a.iter_mut().zip(&b).for_each(|(s, t)| *s += t);
            a
        } else {
            adapt(&inner, lo, hi, tol)
        }
    };
    let mut cuts = vec![xs[0], xs[1], xs[2]];
    if r0[0] > xs[0] && r0[0] < xs[2] {
        cuts.push(r0[0]);
    }
    cuts.sort_by(f64::total_cmp);
    let mut total: Vec<f64> = Vec::new();
    for w in cuts.windows(2) {
        if w[1] - w[0] < 1e-15 {
            continue;
        }
        let s = adapt(&col, w[0], w[1], tol);
        if total.is_empty() {
            total = s;
        } else {
            total.iter_mut().zip(&s).for_each(|(t, x)| *t += x);
        }
    }
    total
}

/// Orthonormal Koornwinder values on the simplex from the explicit
/// Jacobi-polynomial formula, ordered by (n, m) with 0 ≤ m ≤ n < p.
pub fn koornwinder_naive(p: usize, z: P) -> Vec<f64> {
    fn jacobi(n: usize, a: f64, b: f64, x: f64) -> f64 {
        // explicit sum: P_n^{(a,b)}(x) = Σ_s C(n+a, n-s) C(n+b, s) ((x-1)/2)^s ((x+1)/2)^(n-s)
        fn binom(x: f64, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (x - i as f64) / (i as f64 + 1.0))
        }
        let nf = n as f64;
        (0..=n)
            .map(|s| {
                binom(nf + a, n - s)
                    * binom(nf + b, s)
                    * ((x - 1.0) / 2.0).powi(s as i32)
                    * ((x + 1.0) / 2.0).powi((n - s) as i32)
            })
            .sum()
    }
    let (xi, eta) = (z[0], z[1]);
    let mut out = Vec::new();
    for n in 0..p {
        for m in 0..=n {
            let s = 1.0 - eta;
            let q = if s.abs() < 1e-300 {
                if m == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                s.powi(m as i32) * jacobi(m, 0.0, 0.0, (2.0 * xi - s) / s)
            };
            let pj = jacobi(n - m, 0.0, 2.0 * m as f64 + 1.0, 1.0 - 2.0 * eta);
            let gamma = (2.0 * (2.0 * m as f64 + 1.0) * (n as f64 + 1.0)).sqrt();
            out.push(gamma * q * pj);
        }
    }
    out
}

/// Inverse of the affine map of a triangle.
pub fn affine_inverse(v: [P; 3], r: P) -> P {
    let a = sub(v[1], v[0]);
    let b = sub(v[2], v[0]);
    let d = sub(r, v[0]);
    let det = cross(a, b);
    [cross(d, b) / det, cross(a, d) / det]
}
