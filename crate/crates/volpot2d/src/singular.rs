//! Ray reduction of singular cell integrals.
//!
//! For a cell star-shaped with respect to ζ*, the integral of `F` over the
//! reference cell equals the boundary integral
//! `∮ ((ζ − ζ*) × τ) ∫₀¹ F(ζ* + t(ζ − ζ*)) t dt ds`. Placing ζ* at the
//! target (or at the closest point of the cell to it) moves the log
//! singularity of the Green function to the ray endpoint t = 0, where the
//! one-dimensional rules of [`crate::quad1d`] handle it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::basis::{self, eval_basis, BasisError, CellShape};
use crate::geometry::{MeshCell, StarPoint};
use crate::kernel::KernelKind;
use crate::quad1d::{self, decade_bucket, gl01_cached, Rule1D, SingularProvider};
use crate::{cross, dist, dot, norm, sub, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("target node {0} is out of range for this table")]
    NoSuchNode(usize),
}

/// Parameters of the boundary and ray rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOptions {
    /// Uniform base panels per reference edge.
    pub panels_per_edge: usize,
    /// Gauss–Legendre points per boundary panel.
    pub order: usize,
    /// Ratio of the geometric grading toward the point nearest ζ*.
    pub grading: f64,
    /// Minimum number of graded levels.
    pub levels: usize,
    pub provider: SingularProvider,
    /// Star points per edge in the near-singular lookup grid.
    pub near_grid: usize,
}

impl Default for RayOptions {
    fn default() -> Self {
        RayOptions {
            panels_per_edge: 4,
            order: 12,
            grading: 0.25,
            levels: 5,
            provider: SingularProvider::LogGauss,
            near_grid: 64,
        }
    }
}

/// Panels of the reference boundary, per edge, in the edge parameter
/// `s ∈ [0, 1]`. Edges through ζ* carry no panels.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDiscretization {
    pub shape: CellShape,
    pub star: Point,
    pub order: usize,
    /// Sorted breakpoints per edge; empty when the edge is dropped.
    pub breaks: Vec<Vec<f64>>,
}

impl BoundaryDiscretization {
    pub fn n_panels(&self) -> usize {
        self.breaks.iter().map(|b| b.len().saturating_sub(1)).sum()
    }

    pub fn dropped_edges(&self) -> Vec<usize> {
        (0..self.breaks.len()).filter(|&e| self.breaks[e].is_empty()).collect()
    }

    /// Shortest panel, in edge parameter units.
    pub fn smallest_panel(&self) -> f64 {
        self.breaks.iter().flat_map(|b| b.windows(2).map(|w| w[1] - w[0])).fold(f64::INFINITY, f64::min)
    }
}

/// Distance below which ζ* counts as lying on an edge.
const ON_EDGE: f64 = 1e-12;

pub fn boundary_discretization(shape: CellShape, star: Point, opts: &RayOptions) -> BoundaryDiscretization {
    let verts = shape.vertices();
    let n = verts.len();
    let m0 = opts.panels_per_edge.max(1);
    let base_len = 1.0 / m0 as f64;
    let mut breaks = Vec::with_capacity(n);
    for e in 0..n {
        let a = verts[e];
        let tau = sub(verts[(e + 1) % n], a);
        let tlen = norm(tau);
        let s1 = (dot(sub(star, a), tau) / (tlen * tlen)).clamp(0.0, 1.0);
        let foot = [a[0] + s1 * tau[0], a[1] + s1 * tau[1]];
        let delta = dist(foot, star);
        if delta < ON_EDGE {
            breaks.push(Vec::new());
            continue;
        }
        let mut b: Vec<f64> = (0..=m0).map(|k| k as f64 / m0 as f64).collect();
        if delta < base_len * tlen {
            // enough levels for the smallest panel to reach the distance
            let need = ((delta / (base_len * tlen)).ln() / opts.grading.ln()).ceil();
            let levels = (need.max(0.0) as usize).max(opts.levels).min(60);
            if s1 > 0.0 && s1 < 1.0 {
                b.push(s1);
            }
            let mut r = 1.0;
            for _ in 0..levels {
                r *= opts.grading;
                for s in [s1 - base_len * r, s1 + base_len * r] {
                    if s > 0.0 && s < 1.0 {
                        b.push(s);
                    }
                }
            }
            b.sort_by(f64::total_cmp);
            b.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        }
        breaks.push(b);
    }
    BoundaryDiscretization { shape, star, order: opts.order, breaks }
}

/// Tensor rule made of boundary nodes and a ray rule: node
/// `χ = ζ* + t_l (ζ_j − ζ*)` with weight `t_l v_l W_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayQuadrature {
    pub shape: CellShape,
    pub star: Point,
    /// Reference position of the target when it lies in the closed cell.
    pub target: Option<Point>,
    /// Boundary nodes ζ_j with `W_j = ((ζ_j − ζ*) × τ_j) w_j`.
    pub outer: Vec<(Point, f64)>,
    pub inner: Arc<Rule1D>,
}

impl RayQuadrature {
    /// Total node count N^Q.
    pub fn len(&self) -> usize {
        self.outer.len() * self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat list of `(χ_i, ω_i)`.
    pub fn nodes(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        let star = self.star;
        self.outer.iter().flat_map(move |&(z, w)| {
            let d = sub(z, star);
            self.inner
                .nodes
                .iter()
                .zip(&self.inner.weights)
                .map(move |(&t, &v)| ([star[0] + t * d[0], star[1] + t * d[1]], t * v * w))
        })
    }

    /// Sum of |ω_i|, used as an audit checksum.
    pub fn checksum(&self) -> f64 {
        self.nodes().map(|(_, w)| w.abs()).sum()
    }

    /// `Σ ω_i g(R(χ_i)) J(χ_i) φ_k(χ_i)` for every basis function of order
    /// `p`, written to `out`.
    ///
    /// Each basis function restricted to a ray is a polynomial in `t`, so
    /// the inner sums are collapsed onto a few Gauss points per ray before
    /// the basis is evaluated.
    pub fn integrate_basis(&self, cell: &MeshCell, p: usize, g: impl Fn(Point) -> f64, out: &mut [f64]) {
        let np = self.shape.basis_len(p);
        out[..np].iter_mut().for_each(|v| *v = 0.0);
        let inner = &*self.inner;
        let deg = match self.shape {
            CellShape::Triangle => p,
            CellShape::Box => 2 * p - 1,
        };
        let collapse = deg < inner.len();
        let (tau, lag) = if collapse { lagrange_matrix(&inner.nodes, deg) } else { (Vec::new(), Vec::new()) };
        let mut phi = vec![0.0; np];
        let mut acc = vec![0.0; deg];
        let star = self.star;
        for &(z, wj) in &self.outer {
            let d = sub(z, star);
            if collapse {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (l, (&t, &v)) in inner.nodes.iter().zip(&inner.weights).enumerate() {
                    let chi = [star[0] + t * d[0], star[1] + t * d[1]];
                    let (r, jac) = cell.map(chi);
                    let c = g(r) * jac * t * v * wj;
                    let row = &lag[l * deg..(l + 1) * deg];
                    for (a, &lv) in acc.iter_mut().zip(row) {
                        *a += c * lv;
                    }
                }
                for (m, &a) in acc.iter().enumerate() {
                    let chi = [star[0] + tau[m] * d[0], star[1] + tau[m] * d[1]];
                    eval_basis(self.shape, p, chi, &mut phi);
                    for (o, &f) in out.iter_mut().zip(&phi) {
                        *o += a * f;
                    }
                }
            } else {
                for (&t, &v) in inner.nodes.iter().zip(&inner.weights) {
                    let chi = [star[0] + t * d[0], star[1] + t * d[1]];
                    let (r, jac) = cell.map(chi);
                    let c = g(r) * jac * t * v * wj;
                    eval_basis(self.shape, p, chi, &mut phi);
                    for (o, &f) in out.iter_mut().zip(&phi) {
                        *o += c * f;
                    }
                }
            }
        }
    }
}

/// Gauss points `τ` on [0, 1] of size `m` and the row-major matrix
/// `ℓ_m(t_l)` of their Lagrange polynomials at the rule nodes.
fn lagrange_matrix(t: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let base = gl01_cached(m);
    let tau = base.0.clone();
    // barycentric weights
    let bw: Vec<f64> =
        (0..m).map(|j| 1.0 / (0..m).filter(|&k| k != j).map(|k| tau[j] - tau[k]).product::<f64>()).collect();
    let mut lag = vec![0.0; t.len() * m];
    for (l, &x) in t.iter().enumerate() {
        let row = &mut lag[l * m..(l + 1) * m];
        if let Some(j) = tau.iter().position(|&s| s == x) {
            row[j] = 1.0;
            continue;
        }
        let terms: Vec<f64> = (0..m).map(|j| bw[j] / (x - tau[j])).collect();
        let s: f64 = terms.iter().sum();
        for j in 0..m {
            row[j] = terms[j] / s;
        }
    }
    (tau, lag)
}

/// Compose the boundary rule around `star` with the inner ray rule.
pub fn rays_from(shape: CellShape, star: Point, inner: Arc<Rule1D>, opts: &RayOptions) -> RayQuadrature {
    let bd = boundary_discretization(shape, star, opts);
    let verts = shape.vertices();
    let n = verts.len();
    let gl = gl01_cached(opts.order);
    let mut outer = Vec::with_capacity(bd.n_panels() * opts.order);
    for (e, b) in bd.breaks.iter().enumerate() {
        let a = verts[e];
        let tau = sub(verts[(e + 1) % n], a);
        for w in b.windows(2) {
            let len = w[1] - w[0];
            for (x, wx) in gl.0.iter().zip(&gl.1) {
                let s = w[0] + len * x;
                let z = [a[0] + s * tau[0], a[1] + s * tau[1]];
                let c = cross(sub(z, star), tau);
                outer.push((z, c * wx * len));
            }
        }
    }
    RayQuadrature { shape, star, target: None, outer, inner }
}

fn singular_inner(opts: &RayOptions) -> Arc<Rule1D> {
    quad1d::singular_rule_for(opts.provider)
}

/// Ray rule for one cell and target, from the target's star point.
/// Targets inside the cell (d = 0) get the singular inner rule at ζ* = ζ0;
/// outside targets get the near-singular rule for `d / diam`.
pub fn reduce_to_rays(cell: &MeshCell, star: &StarPoint, opts: &RayOptions) -> RayQuadrature {
    let diam = cell.diameter();
    if star.d <= ON_EDGE * diam {
        let mut rq = rays_from(cell.shape(), star.zeta, singular_inner(opts), opts);
        rq.target = Some(star.zeta);
        rq
    } else {
        let q = decade_bucket(star.d / diam);
        rays_from(cell.shape(), star.zeta, quad1d::near_rule_cached(q), opts)
    }
}

/// Reference potentials `V̂[φ_k](r0)` of all order-`p` basis functions on
/// `cell`, using the fixed-node rule when `node` names the target's
/// interpolation node in this cell.
pub fn cell_correction_row(
    cell: &MeshCell,
    r0: Point,
    node: Option<usize>,
    tables: &ReferenceTables,
    kernel: KernelKind,
) -> Result<Vec<f64>, SingularError> {
    let rq = match node {
        Some(i) => tables.self_rule(i)?.clone(),
        None => tables.rule_for(cell, r0, &cell.star_point(r0)),
    };
    let mut out = vec![0.0; tables.shape.basis_len(tables.p)];
    integrate_kernel(&rq, cell, r0, kernel, tables.p, &mut out);
    Ok(out)
}

/// [`RayQuadrature::integrate_basis`] with the Green function centred at `r0`.
pub fn integrate_kernel(rq: &RayQuadrature, cell: &MeshCell, r0: Point, kernel: KernelKind, p: usize, out: &mut [f64]) {
    match kernel {
        KernelKind::Laplace => {
            let c = -1.0 / (4.0 * std::f64::consts::PI);
            rq.integrate_basis(
                cell,
                p,
                |r| {
                    let dx = r[0] - r0[0];
                    let dy = r[1] - r0[1];
                    c * (dx * dx + dy * dy).ln()
                },
                out,
            )
        }
        _ => rq.integrate_basis(cell, p, |r| kernel.green(dist(r, r0)), out),
    }
}

/// Per-shape ray rules reused across cells: one per interpolation node for
/// self targets, and a lazily filled cache of near-singular rules for star
/// points on a fixed boundary grid.
#[derive(Debug)]
pub struct ReferenceTables {
    pub shape: CellShape,
    pub p: usize,
    pub opts: RayOptions,
    self_rules: Vec<Arc<RayQuadrature>>,
    near: Mutex<HashMap<(usize, usize, i32), Arc<RayQuadrature>>>,
}

pub fn build_reference_tables(shape: CellShape, p: usize, opts: &RayOptions) -> Result<ReferenceTables, SingularError> {
    let table = basis::basis_table(shape, p)?;
    let self_rules = crate::par::map(table.len(), |i| {
        let z = table.nodes[i];
        let mut rq = rays_from(shape, z, singular_inner(opts), opts);
        rq.target = Some(z);
        Arc::new(rq)
    });
    Ok(ReferenceTables { shape, p, opts: *opts, self_rules, near: Mutex::new(HashMap::new()) })
}

impl ReferenceTables {
    pub fn self_rule(&self, node: usize) -> Result<&Arc<RayQuadrature>, SingularError> {
        self.self_rules.get(node).ok_or(SingularError::NoSuchNode(node))
    }

    pub fn n_self(&self) -> usize {
        self.self_rules.len()
    }

    pub fn n_near_cached(&self) -> usize {
        self.near.lock().expect("near table poisoned").len()
    }

    /// Rule for a target at `r0` whose star point in `cell` is `star`.
    pub fn rule_for(&self, cell: &MeshCell, r0: Point, star: &StarPoint) -> Arc<RayQuadrature> {
        let diam = cell.diameter();
        if star.d <= ON_EDGE * diam {
            return Arc::new(reduce_to_rays(cell, star, &self.opts));
        }
        if let Some(rq) = self.near_lookup(cell, r0, star) {
            return rq;
        }
        Arc::new(reduce_to_rays(cell, star, &self.opts))
    }

    /// Snap ζ* to the boundary grid if that moves it by at most a quarter
    /// of the target distance.
    fn near_lookup(&self, cell: &MeshCell, r0: Point, star: &StarPoint) -> Option<Arc<RayQuadrature>> {
        let e = star.edge?;
        let verts = self.shape.vertices();
        let n = verts.len();
        let a = verts[e];
        let tau = sub(verts[(e + 1) % n], a);
        let s = dot(sub(star.zeta, a), tau) / dot(tau, tau);
        let g = self.opts.near_grid;
        let mut k = (s * g as f64).round() as usize;
        let mut edge = e;
        if k >= g {
            k = 0;
            edge = (e + 1) % n;
        }
        let zg = {
            let a = verts[edge];
            let tau = sub(verts[(edge + 1) % n], a);
            let s = k as f64 / g as f64;
            [a[0] + s * tau[0], a[1] + s * tau[1]]
        };
        let rg = cell.point(zg);
        if dist(rg, star.r) > 0.25 * star.d {
            return None;
        }
        let dg = dist(rg, r0);
        let q = decade_bucket(dg / cell.diameter());
        let mut cache = self.near.lock().expect("near table poisoned");
        let rq = cache
            .entry((edge, k, q))
            .or_insert_with(|| Arc::new(rays_from(self.shape, zg, quad1d::near_rule_cached(q), &self.opts)));
        Some(rq.clone())
    }

    /// Text audit of the tables: kind, target, star point, node count and
    /// weight checksum per entry.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# shape {:?} p {}", self.shape, self.p);
        let _ = writeln!(s, "# kind target_x target_y star_x star_y nodes checksum");
        for rq in &self.self_rules {
            let t = rq.target.unwrap_or([f64::NAN; 2]);
            let _ = writeln!(
                s,
                "self {:.17e} {:.17e} {:.17e} {:.17e} {} {:.17e}",
                t[0],
                t[1],
                rq.star[0],
                rq.star[1],
                rq.len(),
                rq.checksum()
            );
        }
        let cache = self.near.lock().expect("near table poisoned");
        let mut keys: Vec<_> = cache.keys().copied().collect();
        keys.sort();
        for key in keys {
            let rq = &cache[&key];
            let _ = writeln!(
                s,
                "near edge={} k={} bucket={} {:.17e} {:.17e} {} {:.17e}",
                key.0,
                key.1,
                key.2,
                rq.star[0],
                rq.star[1],
                rq.len(),
                rq.checksum()
            );
        }
        s
    }
}

/// Reference potentials of box basis functions at the interpolation nodes
/// of neighbouring boxes. The box map is a translation plus scaling, so the
/// table serves every box of the lattice.
#[derive(Debug, Clone)]
pub struct BoxTable {
    pub p: usize,
    pub h: f64,
    /// Offsets covered: `max(|dx|, |dy|) ≤ reach`.
    pub reach: i64,
    /// Per offset, `p² × p²` row-major: target node, basis function.
    entries: HashMap<(i64, i64), Vec<f64>>,
}

impl BoxTable {
    pub fn get(&self, offset: (i64, i64), target: usize) -> Option<&[f64]> {
        let n = self.p * self.p;
        self.entries.get(&offset).map(|v| &v[target * n..(target + 1) * n])
    }

    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let mut v: Vec<_> = self.entries.keys().copied().collect();
        v.sort();
        v
    }
}

/// Box table for lattice spacing `h`. Target node `i` of the box at offset
/// `(dx, dy)` sits at `(dx h, dy h) + (h/2) ζ_i` relative to the source box.
pub fn build_box_table(
    kernel: KernelKind,
    h: f64,
    reach: i64,
    tables: &ReferenceTables,
) -> Result<BoxTable, SingularError> {
    let p = tables.p;
    let nodes = &basis::box_nodes(p)?.nodes;
    let cell = MeshCell::Box { center: [0.0, 0.0], h };
    let n = p * p;
    let mut keys = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            keys.push((dx, dy));
        }
    }
    let jobs: Vec<((i64, i64), usize)> = keys.iter().flat_map(|&k| (0..n).map(move |i| (k, i))).collect();
    let rows = crate::par::map(jobs.len(), |j| {
        let ((dx, dy), i) = jobs[j];
        let z = nodes[i];
        let r0 = [dx as f64 * h + 0.5 * h * z[0], dy as f64 * h + 0.5 * h * z[1]];
        let node = if dx == 0 && dy == 0 { Some(i) } else { None };
        cell_correction_row(&cell, r0, node, tables, kernel)
    });
    let mut entries: HashMap<(i64, i64), Vec<f64>> = HashMap::new();
    for (j, row) in rows.into_iter().enumerate() {
        entries.entry(jobs[j].0).or_insert_with(|| Vec::with_capacity(n * n)).extend(row?);
    }
    Ok(BoxTable { p, h, reach, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> MeshCell {
        MeshCell::straight([[-0.618, -0.312], [-0.825, -0.311], [-0.802, -0.516]]).unwrap()
    }

    #[test]
    fn centroid_discretization() {
        let o = RayOptions::default();
        let bd = boundary_discretization(CellShape::Triangle, [1.0 / 3.0, 1.0 / 3.0], &o);
        // closest points: midpoints of edges 0 and 2 at distance 1/3 > 1/4,
        // and the hypotenuse midpoint at distance √2/6 < √2/4
        assert_eq!(bd.breaks[0].len(), 5);
        assert_eq!(bd.breaks[2].len(), 5);
        // 4 base panels + 10 graded endpoints (s1 = 1/2 is a base breakpoint)
        assert_eq!(bd.breaks[1].len(), 5 + 10);
        assert!(bd.dropped_edges().is_empty());
    }

    #[test]
    fn vertex_star_drops_incident_edges() {
        let o = RayOptions::default();
        let bd = boundary_discretization(CellShape::Triangle, [0.0, 0.0], &o);
        assert_eq!(bd.dropped_edges(), vec![0, 2]);
        let bd = boundary_discretization(CellShape::Box, [0.3, 1.0], &o);
        assert_eq!(bd.dropped_edges(), vec![2]);
    }

    #[test]
    fn grading_reaches_small_distances() {
        let o = RayOptions::default();
        let bd = boundary_discretization(CellShape::Triangle, [0.5, 1e-3], &o);
        let expect = 0.25 * 0.25f64.powi(5);
        assert!((bd.smallest_panel() - expect).abs() < 1e-15);
        let bd = boundary_discretization(CellShape::Triangle, [0.5, 1e-9], &o);
        assert!(bd.smallest_panel() <= 1e-9);
    }

    #[test]
    fn weights_reproduce_area_and_moment() {
        let o = RayOptions::default();
        for star in [[0.2, 0.3], [0.0, 0.0], [0.5, 0.0], [0.01, 0.98], [0.45, 0.45]] {
            let rq = rays_from(CellShape::Triangle, star, singular_inner(&o), &o);
            let a: f64 = rq.nodes().map(|(_, w)| w).sum();
            let m: f64 = rq.nodes().map(|(z, w)| w * z[0]).sum();
            assert!((a - 0.5).abs() < 1e-13, "{star:?} {a}");
            assert!((m - 1.0 / 6.0).abs() < 1e-13);
        }
        for star in [[0.0, 0.0], [1.0, -1.0], [0.3, -0.9], [-1.0, 0.2]] {
            let rq = rays_from(CellShape::Box, star, quad1d::near_rule_cached(2), &o);
            let a: f64 = rq.nodes().map(|(_, w)| w).sum();
            assert!((a - 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn nodes_stay_inside_and_avoid_target() {
        let o = RayOptions::default();
        let t = basis::triangle_nodes(6).unwrap();
        for &z in &t.nodes {
            let rq = rays_from(CellShape::Triangle, z, singular_inner(&o), &o);
            for (chi, _) in rq.nodes() {
                assert!(chi[0] >= -1e-15 && chi[1] >= -1e-15 && chi[0] + chi[1] <= 1.0 + 1e-15);
                assert!(chi != z);
            }
        }
    }

    #[test]
    fn collapsed_sum_matches_direct_sum() {
        let cell = tri();
        let o = RayOptions::default();
        let r0 = cell.point([0.3, 0.2]);
        let rq = reduce_to_rays(&cell, &cell.star_point(r0), &o);
        let p = 6;
        let mut fast = vec![0.0; 21];
        integrate_kernel(&rq, &cell, r0, KernelKind::Laplace, p, &mut fast);
        let mut slow = [0.0; 21];
        let mut phi = vec![0.0; 21];
        for (chi, w) in rq.nodes() {
            let (r, j) = cell.map(chi);
            eval_basis(CellShape::Triangle, p, chi, &mut phi);
            let g = KernelKind::Laplace.green(dist(r, r0));
            for k in 0..21 {
                slow[k] += w * g * j * phi[k];
            }
        }
        for k in 0..21 {
            assert!((fast[k] - slow[k]).abs() < 1e-14, "{k}: {} {}", fast[k], slow[k]);
        }
    }

    #[test]
    fn self_table_matches_direct_construction() {
        let o = RayOptions::default();
        let tables = build_reference_tables(CellShape::Triangle, 5, &o).unwrap();
        let cell = tri();
        let nodes = &basis::triangle_nodes(5).unwrap().nodes;
        for (i, &z) in nodes.iter().enumerate() {
            let r0 = cell.point(z);
            let a = cell_correction_row(&cell, r0, Some(i), &tables, KernelKind::Laplace).unwrap();
            let star = StarPoint { zeta: z, r: r0, d: 0.0, edge: None };
            let rq = reduce_to_rays(&cell, &star, &o);
            let mut b = vec![0.0; a.len()];
            integrate_kernel(&rq, &cell, r0, KernelKind::Laplace, 5, &mut b);
            assert_eq!(a, b);
        }
        assert!(tables.self_rule(99).is_err());
    }

    #[test]
    fn near_lookup_on_grid_point_equals_direct() {
        let o = RayOptions::default();
        let tables = build_reference_tables(CellShape::Triangle, 4, &o).unwrap();
        let cell = tri();
        // target straight below the grid point s = 20/64 of edge 0
        let v = cell.vertices();
        let a = v[0];
        let b = v[1];
        let foot = [a[0] + 0.3125 * (b[0] - a[0]), a[1] + 0.3125 * (b[1] - a[1])];
        let t = sub(b, a);
        let nrm = [t[1] / norm(t), -t[0] / norm(t)];
        let r0 = [foot[0] + 0.01 * nrm[0], foot[1] + 0.01 * nrm[1]];
        let star = cell.star_point(r0);
        assert!(star.d > 0.0);
        let looked = tables.rule_for(&cell, r0, &star);
        assert_eq!(tables.n_near_cached(), 1);
        let direct = reduce_to_rays(&cell, &star, &o);
        assert_eq!(looked.outer.len(), direct.outer.len());
        for (x, y) in looked.outer.iter().zip(&direct.outer) {
            assert!(dist(x.0, y.0) < 1e-15 && (x.1 - y.1).abs() < 1e-15);
        }
        assert!(tables.dump().contains("near edge=0 k=20"));
    }

    #[test]
    fn translated_cells_give_identical_rows() {
        let o = RayOptions::default();
        let tables = build_reference_tables(CellShape::Triangle, 4, &o).unwrap();
        let v = [[0.0, 0.0], [0.1, 0.02], [0.03, 0.09]];
        let shift = [0.25, -0.5];
        let w = v.map(|x| [x[0] + shift[0], x[1] + shift[1]]);
        let c1 = MeshCell::straight(v).unwrap();
        let c2 = MeshCell::straight(w).unwrap();
        for i in 0..tables.n_self() {
            let z = basis::triangle_nodes(4).unwrap().nodes[i];
            let a = cell_correction_row(&c1, c1.point(z), Some(i), &tables, KernelKind::Laplace).unwrap();
            let b = cell_correction_row(&c2, c2.point(z), Some(i), &tables, KernelKind::Laplace).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn box_table_has_stencil() {
        let o = RayOptions::default();
        let tables = build_reference_tables(CellShape::Box, 3, &o).unwrap();
        let bt = build_box_table(KernelKind::Laplace, 0.1, 1, &tables).unwrap();
        assert_eq!(bt.offsets().len(), 9);
        assert_eq!(bt.get((1, -1), 8).unwrap().len(), 9);
        assert!(bt.get((2, 0), 0).is_none());
    }
}
