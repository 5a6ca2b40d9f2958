//! Polynomial bases on the two reference cells.
//!
//! The simplex is `{ξ, η ≥ 0, ξ + η ≤ 1}` with the orthonormal Koornwinder
//! basis; the box is `[-1, 1]²` with tensor Chebyshev polynomials. Each
//! table carries nodes, interpolatory weights, the coefficients-to-values
//! matrix `V` and its inverse `C`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::quad1d::gl01;
use crate::Point;

/// Largest order for which triangle interpolation tables are offered.
pub const MAX_TRIANGLE_ORDER: usize = 12;
/// Largest order of a triangle node set used as an oversampling target.
pub const MAX_TRIANGLE_OVERSAMPLE: usize = 26;
pub const MAX_BOX_ORDER: usize = 16;
pub const MAX_BOX_OVERSAMPLE: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("unsupported order {p} for {shape:?} cells")]
    UnsupportedOrder { p: usize, shape: CellShape },
    #[error("point ({0}, {1}) lies outside the reference simplex")]
    OutsideSimplex(f64, f64),
    #[error("oversampling order {q} is below interpolation order {p}")]
    BadOversample { p: usize, q: usize },
    #[error("Vandermonde matrix of order {0} is singular")]
    Singular(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellShape {
    Triangle,
    Box,
}

impl CellShape {
    pub fn reference_area(self) -> f64 {
        match self {
            CellShape::Triangle => 0.5,
            CellShape::Box => 4.0,
        }
    }

    /// Counterclockwise reference vertices.
    pub fn vertices(self) -> &'static [Point] {
        const SIMPLEX: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        const SQUARE: [Point; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        match self {
            CellShape::Triangle => &SIMPLEX,
            CellShape::Box => &SQUARE,
        }
    }

    pub fn basis_len(self, p: usize) -> usize {
        match self {
            CellShape::Triangle => p * (p + 1) / 2,
            CellShape::Box => p * p,
        }
    }
}

/// Jacobi polynomials P_k^{(a,b)}(x), k = 0..n-1, by the three-term recurrence.
pub fn jacobi_all(n: usize, a: f64, b: f64, x: f64, out: &mut [f64]) {
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    out[1] = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
    for k in 2..n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
        let a3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let ki = k as usize;
        out[ki] = (a2 * out[ki - 1] - a3 * out[ki - 2]) / a1;
    }
}

/// Index of K_nm in the flat ordering (n outer, m ≤ n inner).
#[inline]
pub fn koornwinder_index(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// Orthonormal Koornwinder values K_nm(ζ), 0 ≤ m ≤ n < p, written to `out`
/// (length p(p+1)/2). No domain check.
pub fn koornwinder_into(p: usize, z: Point, out: &mut [f64]) {
    let rc = recurrence_table();
    let (xi, eta) = (z[0], z[1]);
    let s = 1.0 - eta;
    let x = 2.0 * xi - s;
    let s2 = s * s;
    // Q_m = s^m P_m(x/s), homogeneous so the apex η = 1 needs no division.
    let mut q = [0.0f64; KT];
    q[0] = 1.0;
    if p > 1 {
        q[1] = x;
    }
    for m in 2..p {
        q[m] = rc.leg[m][0] * x * q[m - 1] - rc.leg[m][1] * s2 * q[m - 2];
    }
    let y = 1.0 - 2.0 * eta;
    for m in 0..p {
        let jm = &rc.jac[m];
        let g = &rc.gamma[m];
        let len = p - m;
        let mut j0 = 1.0;
        out[koornwinder_index(m, m)] = g[0] * q[m];
        if len > 1 {
            let mut j1 = jm[1][0] * y + jm[1][1];
            out[koornwinder_index(m + 1, m)] = g[1] * j1 * q[m];
            for k in 2..len {
                let j2 = (jm[k][0] * y + jm[k][1]) * j1 - jm[k][2] * j0;
                j0 = j1;
                j1 = j2;
                out[koornwinder_index(m + k, m)] = g[k] * j2 * q[m];
            }
        }
    }
}

const KT: usize = MAX_TRIANGLE_OVERSAMPLE + 1;

/// Precomputed recurrence coefficients for [`koornwinder_into`].
struct Recurrence {
    /// Legendre: `[(2m−1)/m, (m−1)/m]`.
    leg: [[f64; 2]; KT],
    /// `P_k^{(0, 2m+1)}(y) = (A y + B) P_{k−1} − C P_{k−2}`; entry 1 holds
    /// `P_1 = A y + B`.
    jac: Vec<[[f64; 3]; KT]>,
    /// Normalization `√(2 (2m+1)(n+1))` indexed `[m][n − m]`.
    gamma: Vec<[f64; KT]>,
}

fn recurrence_table() -> &'static Recurrence {
    static TABLE: OnceLock<Recurrence> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut leg = [[0.0; 2]; KT];
        for (m, l) in leg.iter_mut().enumerate().skip(2) {
            let mf = m as f64;
            *l = [(2.0 * mf - 1.0) / mf, (mf - 1.0) / mf];
        }
        let mut jac = vec![[[0.0; 3]; KT]; KT];
        let mut gamma = vec![[0.0; KT]; KT];
        for m in 0..KT {
            let b = 2.0 * m as f64 + 1.0;
            jac[m][1] = [0.5 * (b + 2.0), 1.0 - 0.5 * (b + 2.0), 0.0];
            for k in 2..KT {
                let kf = k as f64;
                let c = 2.0 * kf + b;
                let a1 = 2.0 * kf * (kf + b) * (c - 2.0);
                let a3 = 2.0 * (kf - 1.0) * (kf + b - 1.0) * c;
                jac[m][k] = [(c - 1.0) * c * (c - 2.0) / a1, -(c - 1.0) * b * b / a1, a3 / a1];
            }
            for k in 0..KT - m {
                let n = (m + k) as f64;
                gamma[m][k] = (2.0 * b * (n + 1.0)).sqrt();
            }
        }
        Recurrence { leg, jac, gamma }
    })
}

/// Checked Koornwinder evaluation.
pub fn koornwinder_eval(p: usize, z: Point) -> Result<Vec<f64>, BasisError> {
    if p == 0 || p > MAX_TRIANGLE_OVERSAMPLE {
        return Err(BasisError::UnsupportedOrder { p, shape: CellShape::Triangle });
    }
    let tol = 1e-10;
    if z[0] < -tol || z[1] < -tol || z[0] + z[1] > 1.0 + tol {
        return Err(BasisError::OutsideSimplex(z[0], z[1]));
    }
    let mut out = vec![0.0; p * (p + 1) / 2];
    koornwinder_into(p, z, &mut out);
    Ok(out)
}

/// Chebyshev values T_0..T_{p-1}(x).
#[inline]
pub fn chebyshev_into(p: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if p > 1 {
        out[1] = x;
    }
    for k in 2..p {
        out[k] = 2.0 * x * out[k - 1] - out[k - 2];
    }
}

/// Tensor Chebyshev values, index `ny * p + nx` ↦ T_nx(ξ) T_ny(η).
pub fn tensor_chebyshev_into(p: usize, z: Point, out: &mut [f64]) {
    let mut tx = [0.0f64; MAX_BOX_OVERSAMPLE + 1];
    let mut ty = [0.0f64; MAX_BOX_OVERSAMPLE + 1];
    chebyshev_into(p, z[0], &mut tx);
    chebyshev_into(p, z[1], &mut ty);
    for ny in 0..p {
        for nx in 0..p {
            out[ny * p + nx] = tx[nx] * ty[ny];
        }
    }
}

/// Roots of T_p in ascending order.
pub fn chebyshev_roots(p: usize) -> Vec<f64> {
    (0..p).rev().map(|i| ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * p) as f64).cos()).collect()
}

/// Fejér first-rule weights at the Chebyshev roots (ascending order),
/// exact for polynomials of degree ≤ p - 1.
pub fn fejer_weights(p: usize) -> Vec<f64> {
    (0..p)
        .rev()
        .map(|i| {
            let th = (2 * i + 1) as f64 * std::f64::consts::PI / (2 * p) as f64;
            let mut s = 0.0;
            for k in 1..=p / 2 {
                let kf = k as f64;
                s += (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
            2.0 / p as f64 * (1.0 - 2.0 * s)
        })
        .collect()
}

/// Triangle node family: p rows at Gauss–Legendre heights; row i carries
/// p - i Gauss–Legendre points across the simplex. Points are interior,
/// weights positive for every order up to 26 (negative from 27 on).
pub fn triangle_node_set(p: usize) -> Vec<Point> {
    let (heights, _) = gl01(p);
    let mut nodes = Vec::with_capacity(p * (p + 1) / 2);
    for (i, &eta) in heights.iter().enumerate() {
        let (xs, _) = gl01(p - i);
        for x in xs {
            nodes.push([(1.0 - eta) * x, eta]);
        }
    }
    nodes
}

/// Nodes, interpolatory weights and Vandermonde data for one reference cell.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub shape: CellShape,
    pub p: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Coefficients to values: `V[(i, j)] = φ_j(node_i)`.
    pub vandermonde: DMatrix<f64>,
    /// Values to coefficients, `C = V⁻¹`.
    pub coef: DMatrix<f64>,
    /// 2-norm condition number of `V`.
    pub cond: f64,
}

pub type TriangleBasisTable = BasisTable;
pub type BoxBasisTable = BasisTable;

impl BasisTable {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Basis values at `z` (no domain check).
    #[inline]
    pub fn eval_into(&self, z: Point, out: &mut [f64]) {
        eval_basis(self.shape, self.p, z, out)
    }

    /// Expansion coefficients from nodal values.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut c = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for (i, v) in values.iter().enumerate() {
                s += self.coef[(j, i)] * v;
            }
            c[j] = s;
        }
        c
    }

    /// Evaluate the interpolant of nodal `values` at `z`.
    pub fn interpolate(&self, values: &[f64], z: Point) -> f64 {
        let c = self.coefficients(values);
        let mut phi = vec![0.0; self.len()];
        self.eval_into(z, &mut phi);
        c.iter().zip(&phi).map(|(a, b)| a * b).sum()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

#[inline]
pub fn eval_basis(shape: CellShape, p: usize, z: Point, out: &mut [f64]) {
    match shape {
        CellShape::Triangle => koornwinder_into(p, z, out),
        CellShape::Box => tensor_chebyshev_into(p, z, out),
    }
}

fn build_table(shape: CellShape, p: usize) -> Result<BasisTable, BasisError> {
    let nodes: Vec<Point> = match shape {
        CellShape::Triangle => triangle_node_set(p),
        CellShape::Box => {
            let x = chebyshev_roots(p);
            let mut v = Vec::with_capacity(p * p);
            for iy in 0..p {
                for ix in 0..p {
                    v.push([x[ix], x[iy]]);
                }
            }
            v
        }
    };
    let n = nodes.len();
    let mut vand = DMatrix::<f64>::zeros(n, n);
    let mut row = vec![0.0; n];
    for (i, z) in nodes.iter().enumerate() {
        eval_basis(shape, p, *z, &mut row);
        for j in 0..n {
            vand[(i, j)] = row[j];
        }
    }
    let sv = vand.clone().singular_values();
    let cond = sv.max() / sv.min();
    let (coef, weights) = match shape {
        CellShape::Triangle => {
            let coef = vand.clone().try_inverse().ok_or(BasisError::Singular(p))?;
            // Moments of the orthonormal basis: only K_00 = √2 integrates to
            // a nonzero value, 1/√2.
            let m0 = std::f64::consts::FRAC_1_SQRT_2;
            let weights = (0..n).map(|i| coef[(0, i)] * m0).collect();
            (coef, weights)
        }
        CellShape::Box => {
            let x = chebyshev_roots(p);
            let mut c1 = DMatrix::<f64>::zeros(p, p);
            let mut t = vec![0.0; p];
            for (i, &xi) in x.iter().enumerate() {
                chebyshev_into(p, xi, &mut t);
                for k in 0..p {
                    let f = if k == 0 { 1.0 } else { 2.0 };
                    c1[(k, i)] = f * t[k] / p as f64;
                }
            }
            let coef = c1.kronecker(&c1);
            let w1 = fejer_weights(p);
            let mut weights = Vec::with_capacity(n);
            for iy in 0..p {
                for ix in 0..p {
                    weights.push(w1[ix] * w1[iy]);
                }
            }
            (coef, weights)
        }
    };
    Ok(BasisTable { shape, p, nodes, weights, vandermonde: vand, coef, cond })
}

fn cached_table(shape: CellShape, p: usize) -> Result<Arc<BasisTable>, BasisError> {
    static CACHE: OnceLock<Mutex<HashMap<(CellShape, usize), Arc<BasisTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("basis cache poisoned").get(&(shape, p)) {
        return Ok(t.clone());
    }
    let t = Arc::new(build_table(shape, p)?);
    cache.lock().expect("basis cache poisoned").insert((shape, p), t.clone());
    Ok(t)
}

/// Interpolation table on the simplex, 1 ≤ p ≤ 12.
pub fn triangle_nodes(p: usize) -> Result<Arc<BasisTable>, BasisError> {
    if p == 0 || p > MAX_TRIANGLE_ORDER {
        return Err(BasisError::UnsupportedOrder { p, shape: CellShape::Triangle });
    }
    cached_table(CellShape::Triangle, p)
}

/// Tensor Chebyshev table on the box, 1 ≤ p ≤ 16.
pub fn box_nodes(p: usize) -> Result<Arc<BasisTable>, BasisError> {
    if p == 0 || p > MAX_BOX_ORDER {
        return Err(BasisError::UnsupportedOrder { p, shape: CellShape::Box });
    }
    cached_table(CellShape::Box, p)
}

/// Node table used as an oversampling target; accepts larger orders than
/// the interpolation tables.
pub fn oversample_nodes(shape: CellShape, q: usize) -> Result<Arc<BasisTable>, BasisError> {
    let max = match shape {
        CellShape::Triangle => MAX_TRIANGLE_OVERSAMPLE,
        CellShape::Box => MAX_BOX_OVERSAMPLE,
    };
    if q == 0 || q > max {
        return Err(BasisError::UnsupportedOrder { p: q, shape });
    }
    cached_table(shape, q)
}

pub fn basis_table(shape: CellShape, p: usize) -> Result<Arc<BasisTable>, BasisError> {
    match shape {
        CellShape::Triangle => triangle_nodes(p),
        CellShape::Box => box_nodes(p),
    }
}

/// Resampling map from order-p nodal values to the order-q node set, with
/// the order-q smooth quadrature weights attached.
#[derive(Debug, Clone)]
pub struct OversampleMap {
    pub shape: CellShape,
    pub p: usize,
    pub q: usize,
    /// `N_q × N_p`.
    pub matrix: DMatrix<f64>,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

pub fn oversample(p: usize, q: usize, shape: CellShape) -> Result<OversampleMap, BasisError> {
    if q < p {
        return Err(BasisError::BadOversample { p, q });
    }
    let tp = basis_table(shape, p)?;
    let tq = oversample_nodes(shape, q)?;
    let np = tp.len();
    let mut vq = DMatrix::<f64>::zeros(tq.len(), np);
    let mut row = vec![0.0; np];
    for (i, z) in tq.nodes.iter().enumerate() {
        eval_basis(shape, p, *z, &mut row);
        for j in 0..np {
            vq[(i, j)] = row[j];
        }
    }
    let matrix = vq * &tp.coef;
    Ok(OversampleMap { shape, p, q, matrix, nodes: tq.nodes.clone(), weights: tq.weights.clone() })
}
