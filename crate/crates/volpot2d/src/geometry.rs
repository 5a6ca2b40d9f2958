//! Analytic boundary curves and the reference-to-physical cell maps.
//!
//! Reference simplex: `(0,0), (1,0), (0,1)` with edges numbered
//! `e0: η = 0`, `e1: ξ + η = 1`, `e2: ξ = 0`, all traversed counterclockwise.
//! Reference box: `[-1, 1]²`, edges bottom, right, top, left.
//! A curved triangle's exact curved side is the image of `e0`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::quad1d::{adaptive, gl01};
use crate::{add, cross, dist, dot, norm, scale, sub, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate cell (signed area {0:e})")]
    Degenerate(f64),
    #[error("map inversion did not converge; best iterate ({0}, {1}) with residual {2:e}")]
    NoConvergence(f64, f64, f64),
    #[error("invalid curve parameters: {0}")]
    BadCurve(String),
    #[error("cell Jacobian is not positive (min {0:e}); refine h")]
    InvertedJacobian(f64),
}

/// Which side of the curve the computational domain lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Ω is enclosed by the curve (outer boundary).
    Inside,
    /// Ω lies outside the curve (inclusion).
    Outside,
}

/// Built-in closed curves, all parametrized counterclockwise on [0, 2π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveShape {
    Circle {
        center: Point,
        radius: f64,
    },
    /// Semi-axes `a`, `b`, rotated by `angle`.
    Ellipse {
        center: Point,
        a: f64,
        b: f64,
        angle: f64,
    },
    /// r(θ) = R (1 + amp·cos(kθ)).
    Star {
        center: Point,
        radius: f64,
        amp: f64,
        k: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricCurve {
    pub shape: CurveShape,
    pub side: Side,
}

/// Pointwise curve data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub point: Point,
    pub tangent: Point,
    /// Unit normal pointing into Ω.
    pub normal: Point,
    /// Signed curvature, positive for a counterclockwise convex arc.
    pub curvature: f64,
    pub speed: f64,
}

impl ParametricCurve {
    pub fn new(shape: CurveShape, side: Side) -> Result<Self, GeometryError> {
        let ok = match shape {
            CurveShape::Circle { radius, .. } => radius > 0.0,
            CurveShape::Ellipse { a, b, .. } => a > 0.0 && b > 0.0,
            CurveShape::Star { radius, amp, k, .. } => {
                // |γ'| > 0 needs the radius to stay positive.
                radius > 0.0 && amp.abs() < 1.0 && k >= 1
            }
        };
        if ok {
            Ok(Self { shape, side })
        } else {
            Err(GeometryError::BadCurve(format!("{shape:?}")))
        }
    }

    pub fn circle(center: Point, radius: f64, side: Side) -> Result<Self, GeometryError> {
        Self::new(CurveShape::Circle { center, radius }, side)
    }

    pub fn ellipse(center: Point, a: f64, b: f64, angle: f64, side: Side) -> Result<Self, GeometryError> {
        Self::new(CurveShape::Ellipse { center, a, b, angle }, side)
    }

    pub fn star(center: Point, radius: f64, amp: f64, k: u32, side: Side) -> Result<Self, GeometryError> {
        Self::new(CurveShape::Star { center, radius, amp, k }, side)
    }

    /// γ and its first three derivatives at `t`.
    pub fn derivatives(&self, t: f64) -> [Point; 4] {
        match self.shape {
            CurveShape::Circle { center, radius } => ellipse_derivs(center, radius, radius, 0.0, t),
            CurveShape::Ellipse { center, a, b, angle } => ellipse_derivs(center, a, b, angle, t),
            CurveShape::Star { center, radius, amp, k } => {
                let kf = k as f64;
                let (s, c) = t.sin_cos();
                let (sk, ck) = (kf * t).sin_cos();
                let r = radius * (1.0 + amp * ck);
                let r1 = -radius * amp * kf * sk;
                let r2 = -radius * amp * kf * kf * ck;
                let r3 = radius * amp * kf * kf * kf * sk;
                let u = [c, s];
                let v = [-s, c];
                let comb = |a: f64, b: f64| [a * u[0] + b * v[0], a * u[1] + b * v[1]];
                [add(center, scale(r, u)), comb(r1, r), comb(r2 - r, 2.0 * r1), comb(r3 - 3.0 * r1, 3.0 * r2 - r)]
            }
        }
    }

    #[inline]
    pub fn point(&self, t: f64) -> Point {
        self.derivatives(t)[0]
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> Point {
        self.derivatives(t)[1]
    }

    pub fn eval(&self, t: f64) -> CurvePoint {
        let t = t.rem_euclid(2.0 * PI);
        let [p, d1, d2, _] = self.derivatives(t);
        let speed = norm(d1);
        let tangent = scale(1.0 / speed, d1);
        let left = [-tangent[1], tangent[0]];
        let normal = match self.side {
            Side::Inside => left,
            Side::Outside => scale(-1.0, left),
        };
        let curvature = cross(d1, d2) / (speed * speed * speed);
        CurvePoint { point: p, tangent, normal, curvature, speed }
    }

    /// Unit normal pointing out of the region the curve encloses.
    pub fn outward_normal(&self, t: f64) -> Point {
        let d1 = self.deriv(t);
        let s = norm(d1);
        [d1[1] / s, -d1[0] / s]
    }

    pub fn arclength(&self, t0: f64, t1: f64) -> f64 {
        adaptive(&|t| norm(self.deriv(t)), t0, t1, 1e-13)
    }

    pub fn total_length(&self) -> f64 {
        self.arclength(0.0, 2.0 * PI)
    }

    /// A point strictly inside the enclosed region (used for charge
    /// locations and inside tests).
    pub fn center(&self) -> Point {
        match self.shape {
            CurveShape::Circle { center, .. }
            | CurveShape::Ellipse { center, .. }
            | CurveShape::Star { center, .. } => center,
        }
    }

    /// Whether `x` is enclosed by the curve (winding-number free test for
    /// the star-shaped built-ins: compare radii along the ray from center).
    pub fn encloses(&self, x: Point) -> bool {
        self.radial_excess(x) < 0.0
    }

    /// |x - c| minus the curve radius in the direction of x (negative inside).
    pub fn radial_excess(&self, x: Point) -> f64 {
        match self.shape {
            CurveShape::Circle { center, radius } => dist(x, center) - radius,
            CurveShape::Ellipse { center, a, b, angle } => {
                let d = sub(x, center);
                let (s, c) = angle.sin_cos();
                let u = c * d[0] + s * d[1];
                let v = -s * d[0] + c * d[1];
                let rho = u.hypot(v);
                if rho == 0.0 {
                    return -a.min(b);
                }
                let th = v.atan2(u);
                let r = 1.0 / ((th.cos() / a).powi(2) + (th.sin() / b).powi(2)).sqrt();
                rho - r
            }
            CurveShape::Star { center, radius, amp, k } => {
                let d = sub(x, center);
                let th = d[1].atan2(d[0]);
                norm(d) - radius * (1.0 + amp * (k as f64 * th).cos())
            }
        }
    }

    /// Whether `x` is on the Ω side of this curve.
    pub fn on_domain_side(&self, x: Point) -> bool {
        match self.side {
            Side::Inside => self.encloses(x),
            Side::Outside => !self.encloses(x),
        }
    }

    /// Area enclosed by the curve, ½∮ x dy - y dx.
    pub fn enclosed_area(&self) -> f64 {
        let (x, w) = gl01(64);
        let mut s = 0.0;
        let panels = 32;
        for k in 0..panels {
            let a = 2.0 * PI * k as f64 / panels as f64;
            let len = 2.0 * PI / panels as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let [p, d, _, _] = self.derivatives(a + len * xi);
                s += wi * len * 0.5 * cross(p, d);
            }
        }
        s
    }
}

fn ellipse_derivs(center: Point, a: f64, b: f64, angle: f64, t: f64) -> [Point; 4] {
    let (s, c) = t.sin_cos();
    let (sa, ca) = angle.sin_cos();
    let rot = |p: Point| [ca * p[0] - sa * p[1], sa * p[0] + ca * p[1]];
    [add(center, rot([a * c, b * s])), rot([-a * s, b * c]), rot([-a * c, -b * s]), rot([a * s, -b * c])]
}

/// Curved edge data of a blended triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvedEdge {
    pub curve: ParametricCurve,
    pub curve_id: usize,
    /// Curve parameters at the reference vertices (0,0) and (1,0).
    pub t0: f64,
    pub t1: f64,
}

impl CurvedEdge {
    /// c(s) = γ(t0 + s (t1 - t0)) and its s-derivatives.
    #[inline]
    fn derivs(&self, s: f64) -> [Point; 4] {
        let dt = self.t1 - self.t0;
        let [p, d1, d2, d3] = self.curve.derivatives(self.t0 + s * dt);
        [p, scale(dt, d1), scale(dt * dt, d2), scale(dt * dt * dt, d3)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshCell {
    StraightTriangle { v: [Point; 3] },
    CurvedTriangle { v: [Point; 3], edge: CurvedEdge },
    Box { center: Point, h: f64 },
}

/// Result of a star-point search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarPoint {
    pub zeta: Point,
    pub r: Point,
    pub d: f64,
    /// Reference edge containing ζ*, if it lies on the boundary.
    pub edge: Option<usize>,
}

const SIMPLEX_VERTS: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
const BOX_VERTS: [Point; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

impl MeshCell {
    pub fn straight(v: [Point; 3]) -> Result<Self, GeometryError> {
        let a = 0.5 * cross(sub(v[1], v[0]), sub(v[2], v[0]));
        if a <= 1e-300 {
            return Err(GeometryError::Degenerate(a));
        }
        Ok(MeshCell::StraightTriangle { v })
    }

    /// Blended triangle whose `e0` follows the curve from `t0` to `t1` and
    /// whose third vertex is `apex`. Fails if the Jacobian is not positive.
    pub fn curved(
        curve: ParametricCurve,
        curve_id: usize,
        t0: f64,
        t1: f64,
        apex: Point,
    ) -> Result<Self, GeometryError> {
        let v = [curve.point(t0), curve.point(t1), apex];
        let a = 0.5 * cross(sub(v[1], v[0]), sub(v[2], v[0]));
        if a <= 0.0 {
            return Err(GeometryError::Degenerate(a));
        }
        let cell = MeshCell::CurvedTriangle { v, edge: CurvedEdge { curve, curve_id, t0, t1 } };
        let jmin = cell.min_jacobian(30);
        if jmin <= 0.0 {
            return Err(GeometryError::InvertedJacobian(jmin));
        }
        Ok(cell)
    }

    pub fn square(center: Point, h: f64) -> Result<Self, GeometryError> {
        if h <= 0.0 {
            return Err(GeometryError::Degenerate(h));
        }
        Ok(MeshCell::Box { center, h })
    }

    pub fn is_box(&self) -> bool {
        matches!(self, MeshCell::Box { .. })
    }

    pub fn shape(&self) -> crate::basis::CellShape {
        match self {
            MeshCell::Box { .. } => crate::basis::CellShape::Box,
            _ => crate::basis::CellShape::Triangle,
        }
    }

    pub fn reference_vertices(&self) -> &'static [Point] {
        match self {
            MeshCell::Box { .. } => &BOX_VERTS,
            _ => &SIMPLEX_VERTS,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.reference_vertices().len()
    }

    /// Physical vertices (triangles: 3, boxes: 4), counterclockwise.
    pub fn vertices(&self) -> Vec<Point> {
        match *self {
            MeshCell::StraightTriangle { v } | MeshCell::CurvedTriangle { v, .. } => v.to_vec(),
            MeshCell::Box { center, h } => BOX_VERTS.iter().map(|z| add(center, scale(0.5 * h, *z))).collect(),
        }
    }

    /// Map and Jacobian determinant at ζ.
    #[inline]
    pub fn map(&self, z: Point) -> (Point, f64) {
        let (p, d) = self.map_with_derivative(z);
        (p, d[0][0] * d[1][1] - d[0][1] * d[1][0])
    }

    #[inline]
    pub fn point(&self, z: Point) -> Point {
        match *self {
            MeshCell::StraightTriangle { v } => affine(v, z),
            MeshCell::Box { center, h } => add(center, scale(0.5 * h, z)),
            MeshCell::CurvedTriangle { v, edge } => {
                let (g, _) = blend_g(&edge, v, z[0]);
                add(affine(v, z), scale(1.0 - z[0] - z[1], g))
            }
        }
    }

    /// Physical point and Jacobian matrix `[[∂x/∂ξ, ∂x/∂η], [∂y/∂ξ, ∂y/∂η]]`.
    pub fn map_with_derivative(&self, z: Point) -> (Point, [[f64; 2]; 2]) {
        match *self {
            MeshCell::StraightTriangle { v } => {
                let a = sub(v[1], v[0]);
                let b = sub(v[2], v[0]);
                (affine(v, z), [[a[0], b[0]], [a[1], b[1]]])
            }
            MeshCell::Box { center, h } => (add(center, scale(0.5 * h, z)), [[0.5 * h, 0.0], [0.0, 0.5 * h]]),
            MeshCell::CurvedTriangle { v, edge } => {
                let (g, dg) = blend_g(&edge, v, z[0]);
                let w = 1.0 - z[0] - z[1];
                let a = sub(v[1], v[0]);
                let b = sub(v[2], v[0]);
                let rx = [a[0] - g[0] + w * dg[0], a[1] - g[1] + w * dg[1]];
                let ry = [b[0] - g[0], b[1] - g[1]];
                (add(affine(v, z), scale(w, g)), [[rx[0], ry[0]], [rx[1], ry[1]]])
            }
        }
    }

    /// Jacobian determinant at ζ.
    #[inline]
    pub fn jacobian(&self, z: Point) -> f64 {
        match *self {
            MeshCell::StraightTriangle { v } => cross(sub(v[1], v[0]), sub(v[2], v[0])),
            MeshCell::Box { h, .. } => 0.25 * h * h,
            MeshCell::CurvedTriangle { .. } => self.map(z).1,
        }
    }

    /// Minimum Jacobian over an n×n reference sample (closed cell).
    pub fn min_jacobian(&self, n: usize) -> f64 {
        let mut jmin = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let a = i as f64 / n as f64;
                let b = j as f64 / n as f64;
                let z = match self {
                    MeshCell::Box { .. } => [2.0 * a - 1.0, 2.0 * b - 1.0],
                    _ => {
                        if i + j > n {
                            continue;
                        }
                        [a, b]
                    }
                };
                jmin = jmin.min(self.jacobian(z));
            }
        }
        jmin
    }

    /// Cell area by tensor Gauss quadrature of J (exact for straight cells).
    pub fn area(&self) -> f64 {
        match *self {
            MeshCell::StraightTriangle { v } => 0.5 * cross(sub(v[1], v[0]), sub(v[2], v[0])),
            MeshCell::Box { h, .. } => h * h,
            MeshCell::CurvedTriangle { .. } => {
                let (x, w) = gl01(24);
                let mut s = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        let (u, v) = (x[i], x[j]);
                        let z = [u * (1.0 - v), v];
                        s += w[i] * w[j] * (1.0 - v) * self.jacobian(z);
                    }
                }
                s
            }
        }
    }

    /// Bounding box `[xmin, ymin, xmax, ymax]` of the physical cell.
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let mut push = |p: Point| {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        };
        for p in self.vertices() {
            push(p);
        }
        if let MeshCell::CurvedTriangle { .. } = self {
            for k in 1..32 {
                push(self.point([k as f64 / 32.0, 0.0]));
            }
            // sampled arc: pad by the chord sagitta bound
            let d = self.diameter();
            b[0] -= 1e-3 * d;
            b[1] -= 1e-3 * d;
            b[2] += 1e-3 * d;
            b[3] += 1e-3 * d;
        }
        b
    }

    pub fn diameter(&self) -> f64 {
        let v = self.vertices();
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max(dist(v[i], v[j]));
            }
        }
        if let MeshCell::CurvedTriangle { .. } = self {
            for k in 1..16 {
                let p = self.point([k as f64 / 16.0, 0.0]);
                for q in &v {
                    d = d.max(dist(p, *q));
                }
            }
        }
        d
    }

    /// Whether ζ lies in the closed reference cell up to `tol`.
    pub fn reference_contains(&self, z: Point, tol: f64) -> bool {
        match self {
            MeshCell::Box { .. } => z[0].abs() <= 1.0 + tol && z[1].abs() <= 1.0 + tol,
            _ => z[0] >= -tol && z[1] >= -tol && z[0] + z[1] <= 1.0 + tol,
        }
    }

    fn clamp_reference(&self, z: Point) -> Point {
        match self {
            MeshCell::Box { .. } => [z[0].clamp(-1.0, 1.0), z[1].clamp(-1.0, 1.0)],
            _ => {
                let mut x = z[0].max(0.0);
                let mut y = z[1].max(0.0);
                let s = x + y;
                if s > 1.0 {
                    x /= s;
                    y /= s;
                }
                [x, y]
            }
        }
    }

    /// Inverse map. Exact for affine cells; damped Newton otherwise.
    pub fn invert(&self, r: Point) -> Result<Point, GeometryError> {
        match *self {
            MeshCell::StraightTriangle { v } => Ok(affine_inverse(v, r)),
            MeshCell::Box { center, h } => Ok(scale(2.0 / h, sub(r, center))),
            MeshCell::CurvedTriangle { v, .. } => {
                let diam = self.diameter();
                let mut z = affine_inverse(v, r);
                let mut best = (z, f64::INFINITY);
                for _ in 0..50 {
                    // keep the iterate where the blending map is defined
                    z = [z[0].clamp(-0.5, 1.0 - 1e-12), z[1].clamp(-0.5, 1.5)];
                    let (p, d) = self.map_with_derivative(z);
                    let res = sub(p, r);
                    let rn = norm(res);
                    if rn < best.1 {
                        best = (z, rn);
                    }
                    if rn <= 1e-14 * diam {
                        return Ok(z);
                    }
                    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
                    if det.abs() < 1e-300 {
                        break;
                    }
                    let dz =
                        [(d[1][1] * res[0] - d[0][1] * res[1]) / det, (-d[1][0] * res[0] + d[0][0] * res[1]) / det];
                    // backtrack until the residual decreases
                    let mut lam = 1.0;
                    loop {
                        let zn = [z[0] - lam * dz[0], z[1] - lam * dz[1]];
                        let zn = [zn[0].clamp(-0.5, 1.0 - 1e-12), zn[1].clamp(-0.5, 1.5)];
                        if norm(sub(self.point(zn), r)) < rn || lam < 1e-3 {
                            z = zn;
                            break;
                        }
                        lam *= 0.5;
                    }
                }
                if best.1 <= 1e-13 * diam {
                    Ok(best.0)
                } else {
                    Err(GeometryError::NoConvergence(best.0[0], best.0[1], best.1))
                }
            }
        }
    }

    /// Whether the physical point lies in the closed cell.
    pub fn contains(&self, r: Point, tol: f64) -> Option<Point> {
        let b = self.bbox();
        let pad = tol.max(1e-12) * self.diameter();
        if r[0] < b[0] - pad || r[0] > b[2] + pad || r[1] < b[1] - pad || r[1] > b[3] + pad {
            return None;
        }
        match self.invert(r) {
            Ok(z) if self.reference_contains(z, tol) => Some(z),
            _ => None,
        }
    }

    /// Point ζ of a reference edge at parameter s ∈ [0, 1].
    #[inline]
    pub fn edge_point(&self, e: usize, s: f64) -> Point {
        let v = self.reference_vertices();
        let a = v[e];
        let b = v[(e + 1) % v.len()];
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }

    /// Move ζ onto a vertex or edge it is within roundoff of, so that no
    /// ray panel is built at a distance that only reflects rounding.
    fn snap_reference(&self, z: Point) -> Point {
        const SNAP: f64 = 1e-12;
        let mut z = self.clamp_reference(z);
        match self {
            MeshCell::Box { .. } => {
                for c in z.iter_mut() {
                    if (c.abs() - 1.0).abs() <= SNAP {
                        *c = c.signum();
                    }
                }
            }
            _ => {
                for c in z.iter_mut() {
                    if *c <= SNAP {
                        *c = 0.0;
                    }
                }
                if 1.0 - z[0] - z[1] <= SNAP {
                    let s = z[0] + z[1];
                    z = if z[0] >= 1.0 - SNAP {
                        [1.0, 0.0]
                    } else if z[1] >= 1.0 - SNAP {
                        [0.0, 1.0]
                    } else {
                        [z[0] / s, 1.0 - z[0] / s]
                    };
                }
            }
        }
        z
    }

    /// Closest point of the closed cell to `r0`.
    pub fn star_point(&self, r0: Point) -> StarPoint {
        if let Some(z) = self.contains(r0, 1e-12) {
            let z = self.snap_reference(z);
            let edge = self.edge_of(z, 1e-14);
            return StarPoint { zeta: z, r: r0, d: 0.0, edge };
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let scale_len = self.diameter();
        for e in 0..self.n_edges() {
            let (s, dd) = self.closest_on_edge(e, r0);
            let better = match best {
                None => true,
                Some((bd, _, _)) => dd < bd - 1e-14 * scale_len,
            };
            if better {
                best = Some((dd, e, s));
            }
        }
        let (d, e, s) = best.expect("cell has edges");
        let zeta = self.snap_reference(self.edge_point(e, s));
        let edge = self.edge_of(zeta, 1e-14).or(Some(e));
        StarPoint { zeta, r: self.point(zeta), d, edge }
    }

    /// Edge containing reference point z (lowest index), if any.
    pub fn edge_of(&self, z: Point, tol: f64) -> Option<usize> {
        match self {
            MeshCell::Box { .. } => {
                if (z[1] + 1.0).abs() <= tol {
                    Some(0)
                } else if (z[0] - 1.0).abs() <= tol {
                    Some(1)
                } else if (z[1] - 1.0).abs() <= tol {
                    Some(2)
                } else if (z[0] + 1.0).abs() <= tol {
                    Some(3)
                } else {
                    None
                }
            }
            _ => {
                if z[1].abs() <= tol {
                    Some(0)
                } else if (z[0] + z[1] - 1.0).abs() <= tol {
                    Some(1)
                } else if z[0].abs() <= tol {
                    Some(2)
                } else {
                    None
                }
            }
        }
    }

    /// Minimize |R(edge(s)) - r0| over s ∈ [0, 1]; returns (s, distance).
    fn closest_on_edge(&self, e: usize, r0: Point) -> (f64, f64) {
        let curved = matches!(self, MeshCell::CurvedTriangle { .. }) && e == 0;
        if !curved {
            let a = self.point(self.edge_point(e, 0.0));
            let b = self.point(self.edge_point(e, 1.0));
            let ab = sub(b, a);
            let s = (dot(sub(r0, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
            let p = add(a, scale(s, ab));
            return (s, dist(p, r0));
        }
        let f = |s: f64| dist(self.point([s, 0.0]), r0);
        // coarse scan brackets the global minimum, golden section and
        // Newton polish it
        let n = 32;
        let mut kbest = 0;
        let mut fbest = f64::INFINITY;
        for k in 0..=n {
            let v = f(k as f64 / n as f64);
            if v < fbest {
                fbest = v;
                kbest = k;
            }
        }
        let mut lo = (kbest as f64 - 1.0).max(0.0) / n as f64;
        let mut hi = (kbest as f64 + 1.0).min(n as f64) / n as f64;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..40 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let mut s = 0.5 * (lo + hi);
        if let MeshCell::CurvedTriangle { edge, .. } = self {
            for _ in 0..8 {
                let [p, d1, d2, _] = edge.derivs(s);
                let w = sub(p, r0);
                let g1 = dot(w, d1);
                let g2 = dot(d1, d1) + dot(w, d2);
                if g2 <= 0.0 {
                    break;
                }
                let sn = (s - g1 / g2).clamp(0.0, 1.0);
                if f(sn) > f(s) {
                    break;
                }
                s = sn;
            }
        }
        let mut out = (s, f(s));
        for end in [0.0, 1.0] {
            let v = f(end);
            if v < out.1 {
                out = (end, v);
            }
        }
        out
    }
}

#[inline]
fn affine(v: [Point; 3], z: Point) -> Point {
    [
        v[0][0] + z[0] * (v[1][0] - v[0][0]) + z[1] * (v[2][0] - v[0][0]),
        v[0][1] + z[0] * (v[1][1] - v[0][1]) + z[1] * (v[2][1] - v[0][1]),
    ]
}

fn affine_inverse(v: [Point; 3], r: Point) -> Point {
    let a = sub(v[1], v[0]);
    let b = sub(v[2], v[0]);
    let w = sub(r, v[0]);
    let det = cross(a, b);
    [cross(w, b) / det, cross(a, w) / det]
}

/// g(ξ) = e(ξ)/(1-ξ) and g'(ξ), where e is the deviation of the curved edge
/// from its chord. A Taylor expansion about ξ = 1 avoids cancellation.
#[inline]
fn blend_g(edge: &CurvedEdge, v: [Point; 3], xi: f64) -> (Point, Point) {
    let u = 1.0 - xi;
    let chord = sub(v[1], v[0]);
    if u > 1e-3 {
        let [c, c1, _, _] = edge.derivs(xi);
        let e = [c[0] - v[0][0] - xi * chord[0], c[1] - v[0][1] - xi * chord[1]];
        let de = sub(c1, chord);
        let g = scale(1.0 / u, e);
        let dg = [(de[0] * u + e[0]) / (u * u), (de[1] * u + e[1]) / (u * u)];
        (g, dg)
    } else {
        // e(1) = 0, e' = c' - chord, e'' = c'', e''' = c'''
        let [_, c1, c2, c3] = edge.derivs(1.0);
        let e1 = sub(c1, chord);
        let g = [-e1[0] + 0.5 * c2[0] * u - c3[0] * u * u / 6.0, -e1[1] + 0.5 * c2[1] * u - c3[1] * u * u / 6.0];
        let dg = [-0.5 * c2[0] + c3[0] * u / 3.0, -0.5 * c2[1] + c3[1] * u / 3.0];
        (g, dg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_circle() -> ParametricCurve {
        ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap()
    }

    fn curved_cell(h: f64) -> MeshCell {
        let c = unit_circle();
        let (t0, t1) = (0.3, 0.3 + h);
        let m = 0.5 * (t0 + t1);
        let cp = c.eval(m);
        let apex = add(cp.point, scale(h, cp.normal));
        MeshCell::curved(c, 0, t0, t1, apex).unwrap()
    }

    fn rand_simplex(rng: &mut impl Rng) -> Point {
        let a: f64 = rng.gen();
        let b: f64 = rng.gen();
        if a + b < 1.0 {
            [a, b]
        } else {
            [1.0 - a, 1.0 - b]
        }
    }

    #[test]
    fn circle_frame() {
        let c = unit_circle();
        let e = c.eval(0.0);
        assert!((e.point[0] - 1.0).abs() < 1e-15 && e.point[1].abs() < 1e-15);
        assert!((e.normal[0] + 1.0).abs() < 1e-15 && e.normal[1].abs() < 1e-15);
        for k in 0..10 {
            assert!((c.eval(0.7 * k as f64).curvature - 1.0).abs() < 1e-14);
        }
        let inc = ParametricCurve::circle([0.0, 0.0], 1.0, Side::Outside).unwrap();
        assert!((inc.eval(0.0).normal[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ellipse_curvature_matches_finite_differences() {
        let c = ParametricCurve::ellipse([0.0, 0.0], 2.0, 1.0, 0.0, Side::Inside).unwrap();
        let t = PI / 2.0;
        let e = c.eval(t);
        assert!(e.point[0].abs() < 1e-15 && (e.point[1] - 1.0).abs() < 1e-15);
        // κ = dθ/ds of the unit tangent
        let hh = 1e-5;
        let ta = c.eval(t - hh).tangent;
        let tb = c.eval(t + hh).tangent;
        let dth = cross(ta, tb).asin();
        let ds = c.arclength(t - hh, t + hh);
        assert!((dth / ds - e.curvature).abs() < 1e-6);
        assert!((e.curvature - 0.25).abs() < 1e-12);
    }

    #[test]
    fn higher_derivatives_match_finite_differences() {
        let curves = [
            ParametricCurve::star([0.1, -0.2], 1.0, 0.3, 5, Side::Inside).unwrap(),
            ParametricCurve::ellipse([0.3, 0.0], 0.4, 0.2, 0.7, Side::Outside).unwrap(),
        ];
        for c in curves {
            for &t in &[0.1, 1.3, 4.0] {
                let d = c.derivatives(t);
                let e = 1e-5;
                for k in 0..3 {
                    let fp = c.derivatives(t + e)[k];
                    let fm = c.derivatives(t - e)[k];
                    for i in 0..2 {
                        let fd = (fp[i] - fm[i]) / (2.0 * e);
                        assert!((fd - d[k + 1][i]).abs() < 1e-7 * (1.0 + d[k + 1][i].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn arclengths() {
        let c = unit_circle();
        assert!((c.arclength(0.0, 2.0 * PI) - 2.0 * PI).abs() < 1e-12);
        assert!((c.arclength(0.0, PI / 2.0) - PI / 2.0).abs() < 1e-12);
        let e = ParametricCurve::ellipse([0.0, 0.0], 2.0, 1.0, 0.0, Side::Inside).unwrap();
        // composite Simpson with many intervals as an independent oracle
        let n = 200_000;
        let hstep = 2.0 * PI / n as f64;
        let f = |t: f64| norm(e.deriv(t));
        let mut s = f(0.0) + f(2.0 * PI);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * hstep);
        }
        let simpson = s * hstep / 3.0;
        assert!((e.total_length() - simpson).abs() < 1e-10);
    }

    #[test]
    fn straight_identity_map() {
        let c = MeshCell::straight([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (p, j) = c.map([0.3, 0.2]);
        assert_eq!(p, [0.3, 0.2]);
        assert_eq!(j, 1.0);
        let z = c.invert([0.25, 0.25]).unwrap();
        assert!((z[0] - 0.25).abs() < 1e-16 && (z[1] - 0.25).abs() < 1e-16);
        assert!(MeshCell::straight([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
    }

    #[test]
    fn box_map_and_inverse() {
        let b = MeshCell::square([0.5, -0.25], 0.2).unwrap();
        let z = b.invert([0.5, -0.25]).unwrap();
        assert_eq!(z, [0.0, 0.0]);
        let (p, j) = b.map([1.0, 1.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] + 0.15).abs() < 1e-15);
        assert!((j - 0.01).abs() < 1e-17);
    }

    #[test]
    fn straight_curved_edge_reduces_to_affine() {
        // An arc of radius 1e6 over a 0.1 chord deviates from the chord by
        // its sagitta, 1.25e-9; the blended map must agree to that order.
        let c = ParametricCurve::circle([0.0, 0.0], 1e6, Side::Inside).unwrap();
        let (t0, t1) = (0.0, 1e-7);
        let v0 = c.point(t0);
        let v1 = c.point(t1);
        let apex = add(scale(0.5, add(v0, v1)), [-0.1, 0.0]);
        let cell = MeshCell::curved(c, 0, t0, t1, apex).unwrap();
        let aff = MeshCell::straight([v0, v1, apex]).unwrap();
        for z in [[0.2, 0.3], [0.5, 0.0], [0.0, 0.9], [0.999, 0.0]] {
            let a = cell.point(z);
            let b = aff.point(z);
            // sagitta of a 0.1-long chord on radius 1e6 is 1.25e-9
            assert!(dist(a, b) < 2e-9);
        }
    }

    #[test]
    fn curved_cell_jacobian_area_and_roundtrip() {
        let cell = curved_cell(0.2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(cell.jacobian(rand_simplex(&mut rng)) > 0.0);
        }
        assert!(cell.min_jacobian(30) > 0.0);
        // area oracle: polygon area of a finely sampled boundary
        let mut poly = Vec::new();
        let n = 20_000;
        for k in 0..n {
            poly.push(cell.point([k as f64 / n as f64, 0.0]));
        }
        for k in 0..n {
            poly.push(cell.point([1.0 - k as f64 / n as f64, k as f64 / n as f64]));
        }
        for k in 0..n {
            poly.push(cell.point([0.0, 1.0 - k as f64 / n as f64]));
        }
        let mut a = 0.0;
        for i in 0..poly.len() {
            a += 0.5 * cross(poly[i], poly[(i + 1) % poly.len()]);
        }
        // polygon error O(n^-2) on the arc only, with Richardson-level care
        let arc_corr = {
            // exact circular segment area correction for the sampled arc
            let dt = 0.2 / n as f64;
            n as f64 * 0.5 * (dt - dt.sin())
        };
        assert!((cell.area() - (a + arc_corr)).abs() < 1e-10, "{} vs {}", cell.area(), a + arc_corr);
        for _ in 0..50 {
            let z = rand_simplex(&mut rng);
            let back = cell.invert(cell.point(z)).unwrap();
            assert!(dist(back, z) < 1e-12);
        }
    }

    #[test]
    fn star_point_examples() {
        let c = MeshCell::straight([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = c.star_point([1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(s.d, 0.0);
        assert!(dist(s.zeta, [1.0 / 3.0, 1.0 / 3.0]) < 1e-15);
        let s = c.star_point([-0.1, 0.5]);
        assert!((s.d - 0.1).abs() < 1e-15);
        assert!(dist(s.r, [0.0, 0.5]) < 1e-15);
        assert_eq!(s.edge, Some(2));
    }

    #[test]
    fn curved_star_point_matches_grid_search() {
        let cell = curved_cell(0.2);
        // exterior points on both sides of the cell
        let targets = [[1.05, 0.35], [0.8, 0.1], [0.95, 0.55], [0.7, 0.45]];
        let n = 2000;
        for r0 in targets {
            let s = cell.star_point(r0);
            assert!(s.d > 0.0);
            let mut best = f64::INFINITY;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let z = [i as f64 / n as f64, j as f64 / n as f64];
                    best = best.min(dist(cell.point(z), r0));
                }
            }
            assert!((s.d - best).abs() < 1e-6, "{r0:?}: {} vs {best}", s.d);
            assert!(s.d <= best + 1e-15);
        }
    }
}
