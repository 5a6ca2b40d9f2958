//! The assembled volume-potential operator: a target-independent smooth sum
//! over oversampled nodes plus sparse local corrections.
//!
//! Every cell carries `N_p` source samples (its order-`p` interpolation
//! nodes). The smooth part resamples them onto the order-`q` nodes and
//! sums `G · f · J · w` with the fast summation backend. For each target and
//! each cell in its self/near set, a correction row replaces that cell's
//! smooth contribution by the singular-quadrature value. Rows are stored in
//! value space, so applying them is a sparse product with the samples.
//! Box-to-box corrections depend only on the lattice offset and are applied
//! from a shared stencil instead of being stored per target.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::basis::{self, BasisError, BasisTable, CellShape, OversampleMap};
use crate::geometry::MeshCell;
use crate::kernel::KernelKind;
use crate::mesh::{HybridMesh, MeshError};
use crate::singular::{self, BoxTable, RayOptions, ReferenceTables, SingularError};
use crate::summation::{FmmPlan, SummationError};
use crate::{dist, Point};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("target ({0}, {1}) lies outside the mesh")]
    OutsideDomain(f64, f64),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("oversampling order q = {q} must satisfy p = {p} <= q")]
    BadOrders { p: usize, q: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Singular(#[from] SingularError),
    #[error(transparent)]
    Summation(#[from] SummationError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Build parameters of the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOptions {
    /// Interpolation order.
    pub p: usize,
    /// Oversampling order of the smooth rule; `None` means `3p`, capped at
    /// the largest tabulated order.
    pub q: Option<usize>,
    /// Tolerance of the fast summation.
    pub eps: f64,
    pub ray: RayOptions,
    /// Register every interpolation node as a target, ahead of the
    /// explicit targets.
    pub dof_targets: bool,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        PotentialOptions { p: 6, q: None, eps: 1e-12, ray: RayOptions::default(), dof_targets: false }
    }
}

impl PotentialOptions {
    pub fn oversampling(&self) -> usize {
        self.q.unwrap_or((3 * self.p).min(basis::MAX_TRIANGLE_OVERSAMPLE))
    }
}

/// Degrees of freedom `p(p+1)/2 · N_t + p² · N_b`.
pub fn ndofs(n_triangles: usize, n_boxes: usize, p: usize) -> usize {
    n_triangles * p * (p + 1) / 2 + n_boxes * p * p
}

/// Smooth summation points `q(q+1)/2 · N_t + q² · N_b`.
pub fn nsrcs(n_triangles: usize, n_boxes: usize, q: usize) -> usize {
    ndofs(n_triangles, n_boxes, q)
}

/// Where a registered target sits in the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetInfo {
    pub point: Point,
    pub cell: usize,
    pub zeta: Point,
    /// Interpolation node index when the target is a node of `cell`.
    pub node: Option<usize>,
}

/// Wall-clock split of one application.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ApplyTiming {
    pub smooth_seconds: f64,
    pub correction_seconds: f64,
}

/// Sizes and timings of an operator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorStats {
    pub n_triangles: usize,
    pub n_boxes: usize,
    pub p: usize,
    pub q: usize,
    pub ndofs: usize,
    pub nsrcs: usize,
    pub ntargets: usize,
    /// Stored correction entries plus stencil entries actually applied.
    pub nnz: usize,
    pub build_seconds: f64,
    pub timing: Option<ApplyTiming>,
}

impl OperatorStats {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_triangles {}", self.n_triangles);
        let _ = writeln!(s, "n_boxes {}", self.n_boxes);
        let _ = writeln!(s, "p {}", self.p);
        let _ = writeln!(s, "q {}", self.q);
        let _ = writeln!(s, "ndofs {}", self.ndofs);
        let _ = writeln!(s, "nsrcs {}", self.nsrcs);
        let _ = writeln!(s, "ntargets {}", self.ntargets);
        let _ = writeln!(s, "nnz {}", self.nnz);
        let _ = writeln!(s, "build_seconds {:.6}", self.build_seconds);
        if let Some(t) = self.timing {
            let _ = writeln!(s, "smooth_seconds {:.6}", t.smooth_seconds);
            let _ = writeln!(s, "correction_seconds {:.6}", t.correction_seconds);
            let frac = if t.smooth_seconds > 0.0 { t.correction_seconds / t.smooth_seconds } else { 0.0 };
            let _ = writeln!(s, "correction_fraction {:.6}", frac);
        }
        s
    }
}

/// Value-space correction rows of one box node against the boxes around
/// it, keyed by lattice offset (target box minus source box).
#[derive(Debug, Clone)]
struct BoxStencil {
    /// Per node: `(offset, row)` for every offset whose box is self or near.
    rows: Vec<Vec<((i64, i64), Vec<f64>)>>,
    lattice: HashMap<(i64, i64), usize>,
}

/// Per-cell data shared by build and apply.
#[derive(Debug)]
struct Layout {
    dof_offsets: Vec<usize>,
    src_offsets: Vec<usize>,
    src_points: Vec<Point>,
    /// `J · w` at each smooth point.
    src_jw: Vec<f64>,
}

#[derive(Debug)]
pub struct VolumePotentialOperator {
    pub mesh: Arc<HybridMesh>,
    pub kernel: KernelKind,
    pub p: usize,
    pub q: usize,
    targets: Vec<TargetInfo>,
    layout: Layout,
    tri_over: Arc<OversampleMap>,
    box_over: Arc<OversampleMap>,
    plan: FmmPlan,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    stencil: Option<BoxStencil>,
    /// `(target, box cell, node)` for targets served by the stencil.
    box_targets: Vec<(usize, usize, usize)>,
    stencil_nnz: usize,
    tri_tables: Arc<ReferenceTables>,
    box_tables: Arc<ReferenceTables>,
    opts: PotentialOptions,
    build_seconds: f64,
}

fn shape_table(shape: CellShape, p: usize) -> Result<Arc<BasisTable>, BasisError> {
    basis::basis_table(shape, p)
}

fn build_layout(mesh: &HybridMesh, p: usize, tri: &OversampleMap, bx: &OversampleMap) -> Layout {
    let mut dof_offsets = Vec::with_capacity(mesh.cells.len() + 1);
    let mut src_offsets = Vec::with_capacity(mesh.cells.len() + 1);
    dof_offsets.push(0);
    src_offsets.push(0);
    for c in &mesh.cells {
        let shape = c.shape();
        let over = if shape == CellShape::Triangle { tri } else { bx };
        dof_offsets.push(dof_offsets.last().unwrap() + shape.basis_len(p));
        src_offsets.push(src_offsets.last().unwrap() + over.nodes.len());
    }
    let per_cell = crate::par::map(mesh.cells.len(), |k| {
        let c = &mesh.cells[k];
        let over = if c.shape() == CellShape::Triangle { tri } else { bx };
        over.nodes
            .iter()
            .zip(&over.weights)
            .map(|(z, w)| {
                let (r, j) = c.map(*z);
                (r, j * w)
            })
            .collect::<Vec<_>>()
    });
    let mut src_points = Vec::with_capacity(*src_offsets.last().unwrap());
    let mut src_jw = Vec::with_capacity(src_points.capacity());
    for v in per_cell {
        for (r, jw) in v {
            src_points.push(r);
            src_jw.push(jw);
        }
    }
    Layout { dof_offsets, src_offsets, src_points, src_jw }
}

/// `V̂ᵀ C_p − s O` where `s_j = G(|r0 − r_j|) (J w)_j` over the cell's smooth
/// points; coincident points are skipped, as in the summation backend.
fn value_row(
    vhat: &[f64],
    coef: &DMatrix<f64>,
    over: &OversampleMap,
    pts: &[Point],
    jw: &[f64],
    r0: Point,
    kernel: KernelKind,
) -> Vec<f64> {
    let np = vhat.len();
    let mut row = vec![0.0; np];
    for (i, v) in vhat.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        for (j, r) in row.iter_mut().enumerate() {
            *r += v * coef[(i, j)];
        }
    }
    for (m, (r, w)) in pts.iter().zip(jw).enumerate() {
        let d = dist(*r, r0);
        if d == 0.0 {
            continue;
        }
        let s = kernel.green(d) * w;
        for (j, o) in row.iter_mut().enumerate() {
            *o -= s * over.matrix[(m, j)];
        }
    }
    row
}

/// Distance from a point to the axis-aligned square of side `h` at the origin.
fn box_distance(x: Point, h: f64) -> f64 {
    let dx = (x[0].abs() - 0.5 * h).max(0.0);
    let dy = (x[1].abs() - 0.5 * h).max(0.0);
    dx.hypot(dy)
}

fn build_stencil(
    mesh: &HybridMesh,
    kernel: KernelKind,
    p: usize,
    table: &BoxTable,
    over: &OversampleMap,
) -> Result<BoxStencil, PotentialError> {
    let h = mesh.h;
    let bt = shape_table(CellShape::Box, p)?;
    let cell = MeshCell::Box { center: [0.0, 0.0], h };
    let pts: Vec<Point> = over.nodes.iter().map(|z| cell.point(*z)).collect();
    let jw: Vec<f64> = over.weights.iter().map(|w| w * 0.25 * h * h).collect();
    let lim = mesh.near_factor * h;
    let rows = crate::par::map(bt.len(), |i| {
        let z = bt.nodes[i];
        let mut out = Vec::new();
        for off in table.offsets() {
            let r0 = [off.0 as f64 * h + 0.5 * h * z[0], off.1 as f64 * h + 0.5 * h * z[1]];
            if off != (0, 0) && box_distance(r0, h) >= lim {
                continue;
            }
            let vhat = table.get(off, i).expect("offset in table");
            out.push((off, value_row(vhat, &bt.coef, over, &pts, &jw, r0, kernel)));
        }
        out
    });
    let lattice = (mesh.n_triangles..mesh.cells.len()).filter_map(|k| mesh.box_index(k).map(|ix| (ix, k))).collect();
    Ok(BoxStencil { rows, lattice })
}

/// Build the operator for the given targets (plus all interpolation nodes
/// first when `opts.dof_targets` is set).
pub fn build_operator(
    mesh: Arc<HybridMesh>,
    kernel: KernelKind,
    opts: &PotentialOptions,
    targets: &[Point],
) -> Result<VolumePotentialOperator, PotentialError> {
    let start = Instant::now();
    let p = opts.p;
    let q = opts.oversampling();
    if q < p {
        return Err(PotentialError::BadOrders { p, q });
    }
    let tri_over = Arc::new(basis::oversample(p, q, CellShape::Triangle)?);
    let box_over = Arc::new(basis::oversample(p, q, CellShape::Box)?);
    let layout = build_layout(&mesh, p, &tri_over, &box_over);
    let tri_tables = Arc::new(singular::build_reference_tables(CellShape::Triangle, p, &opts.ray)?);
    let box_tables = Arc::new(singular::build_reference_tables(CellShape::Box, p, &opts.ray)?);

    let mut infos = Vec::new();
    if opts.dof_targets {
        for (k, c) in mesh.cells.iter().enumerate() {
            let t = shape_table(c.shape(), p)?;
            for (i, z) in t.nodes.iter().enumerate() {
                infos.push(TargetInfo { point: c.point(*z), cell: k, zeta: *z, node: Some(i) });
            }
        }
    }
    for &r in targets {
        let (cell, zeta) = mesh.locate(r).ok_or(PotentialError::OutsideDomain(r[0], r[1]))?;
        infos.push(TargetInfo { point: r, cell, zeta, node: None });
    }

    let (stencil, box_targets) = if opts.dof_targets && mesh.n_boxes() > 0 {
        let reach = mesh.near_factor.ceil() as i64;
        let table = singular::build_box_table(kernel, mesh.h, reach, &box_tables)?;
        let st = build_stencil(&mesh, kernel, p, &table, &box_over)?;
        let bt: Vec<(usize, usize, usize)> = infos
            .iter()
            .enumerate()
            .filter(|(_, t)| t.node.is_some() && mesh.cells[t.cell].is_box())
            .map(|(i, t)| (i, t.cell, t.node.unwrap()))
            .collect();
        (Some(st), bt)
    } else {
        (None, Vec::new())
    };
    let stencil_nnz = match &stencil {
        Some(st) => box_targets
            .iter()
            .map(|&(_, k, i)| {
                let (bx, by) = mesh.box_index(k).expect("box cell");
                st.rows[i]
                    .iter()
                    .filter(|(o, _)| st.lattice.contains_key(&(bx - o.0, by - o.1)))
                    .map(|(_, r)| r.len())
                    .sum::<usize>()
            })
            .sum(),
        None => 0,
    };

    let ctx = RowContext {
        mesh: &mesh,
        kernel,
        p,
        layout: &layout,
        tri_over: &tri_over,
        box_over: &box_over,
        tri_tables: &tri_tables,
        box_tables: &box_tables,
        stencil_served: stencil.is_some(),
    };
    let (row_ptr, cols, vals) = ctx.rows(&infos)?;
    let tpts: Vec<Point> = infos.iter().map(|t| t.point).collect();
    let plan = FmmPlan::new(kernel, &layout.src_points, &tpts, opts.eps)?;
    Ok(VolumePotentialOperator {
        mesh,
        kernel,
        p,
        q,
        targets: infos,
        layout,
        tri_over,
        box_over,
        plan,
        row_ptr,
        cols,
        vals,
        stencil,
        box_targets,
        stencil_nnz,
        tri_tables,
        box_tables,
        opts: opts.clone(),
        build_seconds: start.elapsed().as_secs_f64(),
    })
}

struct RowContext<'a> {
    mesh: &'a HybridMesh,
    kernel: KernelKind,
    p: usize,
    layout: &'a Layout,
    tri_over: &'a OversampleMap,
    box_over: &'a OversampleMap,
    tri_tables: &'a ReferenceTables,
    box_tables: &'a ReferenceTables,
    /// Box-node targets get their box-box rows from the stencil.
    stencil_served: bool,
}

type Csr = (Vec<usize>, Vec<u32>, Vec<f64>);

impl RowContext<'_> {
    fn pair_row(&self, t: &TargetInfo, k: usize) -> Result<Vec<f64>, PotentialError> {
        let cell = &self.mesh.cells[k];
        let shape = cell.shape();
        let (tables, over) = match shape {
            CellShape::Triangle => (self.tri_tables, self.tri_over),
            CellShape::Box => (self.box_tables, self.box_over),
        };
        let node = if k == t.cell { t.node } else { None };
        let vhat = singular::cell_correction_row(cell, t.point, node, tables, self.kernel)?;
        let coef = &shape_table(shape, self.p)?.coef;
        let (s0, s1) = (self.layout.src_offsets[k], self.layout.src_offsets[k + 1]);
        Ok(value_row(
            &vhat,
            coef,
            over,
            &self.layout.src_points[s0..s1],
            &self.layout.src_jw[s0..s1],
            t.point,
            self.kernel,
        ))
    }

    fn target_rows(&self, t: &TargetInfo) -> Result<Vec<(u32, f64)>, PotentialError> {
        let class = self.mesh.classify(t.point)?;
        let mut cells = vec![t.cell];
        if let Some(c) = class.self_cell {
            cells.push(c);
        }
        cells.extend(class.near_cells);
        cells.sort_unstable();
        cells.dedup();
        let from_stencil = self.stencil_served && t.node.is_some() && self.mesh.cells[t.cell].is_box();
        let mut out = Vec::new();
        for k in cells {
            if from_stencil && self.mesh.cells[k].is_box() {
                continue;
            }
            let row = self.pair_row(t, k)?;
            let d0 = self.layout.dof_offsets[k];
            out.extend(row.into_iter().enumerate().map(|(j, v)| ((d0 + j) as u32, v)));
        }
        Ok(out)
    }

    fn rows(&self, infos: &[TargetInfo]) -> Result<Csr, PotentialError> {
        let rows = crate::par::map(infos.len(), |i| self.target_rows(&infos[i]));
        let mut row_ptr = Vec::with_capacity(infos.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (c, v) in r? {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok((row_ptr, cols, vals))
    }
}

impl VolumePotentialOperator {
    /// Text dump of the triangle and box ray tables, including every
    /// near-singular rule generated while building the corrections.
    pub fn dump_tables(&self) -> String {
        let mut s = self.tri_tables.dump();
        s.push_str(&self.box_tables.dump());
        s
    }

    pub fn ndofs(&self) -> usize {
        *self.layout.dof_offsets.last().unwrap()
    }

    pub fn nsrcs(&self) -> usize {
        self.layout.src_points.len()
    }

    pub fn ntargets(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[TargetInfo] {
        &self.targets
    }

    pub fn target_points(&self) -> Vec<Point> {
        self.targets.iter().map(|t| t.point).collect()
    }

    /// Index range of cell `k` in the sample vector.
    pub fn cell_dofs(&self, k: usize) -> std::ops::Range<usize> {
        self.layout.dof_offsets[k]..self.layout.dof_offsets[k + 1]
    }

    /// Physical positions of the interpolation nodes, in sample order.
    pub fn dof_points(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.ndofs());
        for c in &self.mesh.cells {
            let t = shape_table(c.shape(), self.p).expect("order validated at build");
            out.extend(t.nodes.iter().map(|z| c.point(*z)));
        }
        out
    }

    /// Samples of `f` at the interpolation nodes.
    pub fn sample(&self, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        let pts = self.dof_points();
        crate::par::map(pts.len(), |i| f(pts[i]))
    }

    /// Stored correction entries plus applied stencil entries.
    pub fn nnz(&self) -> usize {
        self.vals.len() + self.stencil_nnz
    }

    pub fn stats(&self, timing: Option<ApplyTiming>) -> OperatorStats {
        OperatorStats {
            n_triangles: self.mesh.n_triangles,
            n_boxes: self.mesh.n_boxes(),
            p: self.p,
            q: self.q,
            ndofs: self.ndofs(),
            nsrcs: self.nsrcs(),
            ntargets: self.ntargets(),
            nnz: self.nnz(),
            build_seconds: self.build_seconds,
            timing,
        }
    }

    /// Oversampled source charges `J w (O f)` for the smooth sum.
    pub fn charges(&self, f: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let per_cell = crate::par::map(self.mesh.cells.len(), |k| {
            let over = if self.mesh.cells[k].is_box() { &self.box_over } else { &self.tri_over };
            let fk = &f[l.dof_offsets[k]..l.dof_offsets[k + 1]];
            let (s0, s1) = (l.src_offsets[k], l.src_offsets[k + 1]);
            (s0..s1)
                .map(|m| {
                    let row = over.matrix.row(m - s0);
                    let v: f64 = row.iter().zip(fk).map(|(a, b)| a * b).sum();
                    v * l.src_jw[m]
                })
                .collect::<Vec<f64>>()
        });
        per_cell.concat()
    }

    /// Potential at the registered targets.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>, PotentialError> {
        self.apply_timed(f).map(|(u, _)| u)
    }

    pub fn apply_timed(&self, f: &[f64]) -> Result<(Vec<f64>, ApplyTiming), PotentialError> {
        if f.len() != self.ndofs() {
            return Err(PotentialError::LengthMismatch { expected: self.ndofs(), got: f.len() });
        }
        let t0 = Instant::now();
        let q = self.charges(f);
        let mut u = self.plan.evaluate(&q)?;
        let t1 = Instant::now();
        let corr = self.correct(f);
        for (a, b) in u.iter_mut().zip(corr) {
            *a += b;
        }
        let timing =
            ApplyTiming { smooth_seconds: (t1 - t0).as_secs_f64(), correction_seconds: t1.elapsed().as_secs_f64() };
        Ok((u, timing))
    }

    /// The correction part alone: `Π f`.
    pub fn correct(&self, f: &[f64]) -> Vec<f64> {
        let mut out = crate::par::map(self.targets.len(), |i| {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, v)| v * f[c as usize]).sum::<f64>()
        });
        if let Some(st) = &self.stencil {
            let add = crate::par::map(self.box_targets.len(), |j| {
                let (_, k, i) = self.box_targets[j];
                let (bx, by) = self.mesh.box_index(k).expect("box cell");
                let mut s = 0.0;
                for (o, row) in &st.rows[i] {
                    if let Some(&src) = st.lattice.get(&(bx - o.0, by - o.1)) {
                        let fk = &f[self.cell_dofs(src)];
                        s += row.iter().zip(fk).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                s
            });
            for (j, v) in add.into_iter().enumerate() {
                out[self.box_targets[j].0] += v;
            }
        }
        out
    }

    /// Potential at points that were not registered at build time. Builds
    /// the corrections and a summation plan for these points on the fly.
    pub fn potential_at(&self, f: &[f64], points: &[Point]) -> Result<Vec<f64>, PotentialError> {
        if f.len() != self.ndofs() {
            return Err(PotentialError::LengthMismatch { expected: self.ndofs(), got: f.len() });
        }
        let mut infos = Vec::with_capacity(points.len());
        for &r in points {
            let (cell, zeta) = self.mesh.locate(r).ok_or(PotentialError::OutsideDomain(r[0], r[1]))?;
            infos.push(TargetInfo { point: r, cell, zeta, node: None });
        }
        let ctx = RowContext {
            mesh: &self.mesh,
            kernel: self.kernel,
            p: self.p,
            layout: &self.layout,
            tri_over: &self.tri_over,
            box_over: &self.box_over,
            tri_tables: &self.tri_tables,
            box_tables: &self.box_tables,
            stencil_served: false,
        };
        let (row_ptr, cols, vals) = ctx.rows(&infos)?;
        let plan = FmmPlan::new(self.kernel, &self.layout.src_points, points, self.opts.eps)?;
        let mut u = plan.evaluate(&self.charges(f))?;
        for (i, ui) in u.iter_mut().enumerate() {
            let (a, b) = (row_ptr[i], row_ptr[i + 1]);
            *ui += cols[a..b].iter().zip(&vals[a..b]).map(|(&c, v)| v * f[c as usize]).sum::<f64>();
        }
        Ok(u)
    }

    /// Interpolate per-node values to arbitrary points of the mesh.
    pub fn interpolate_solution(&self, values: &[f64], points: &[Point]) -> Result<Vec<f64>, PotentialError> {
        interpolate_solution(&self.mesh, self.p, values, points)
    }
}

/// Evaluate the order-`p` interpolant of per-node `values` (sample order of
/// [`VolumePotentialOperator`]) at `points`.
pub fn interpolate_solution(
    mesh: &HybridMesh,
    p: usize,
    values: &[f64],
    points: &[Point],
) -> Result<Vec<f64>, PotentialError> {
    let tt = shape_table(CellShape::Triangle, p)?;
    let bt = shape_table(CellShape::Box, p)?;
    let mut offsets = Vec::with_capacity(mesh.cells.len() + 1);
    offsets.push(0usize);
    for c in &mesh.cells {
        offsets.push(offsets.last().unwrap() + c.shape().basis_len(p));
    }
    let expected = *offsets.last().unwrap();
    if values.len() != expected {
        return Err(PotentialError::LengthMismatch { expected, got: values.len() });
    }
    let out = crate::par::map(points.len(), |i| {
        let r = points[i];
        let (k, z) = mesh.locate(r).ok_or(PotentialError::OutsideDomain(r[0], r[1]))?;
        let t = if mesh.cells[k].is_box() { &bt } else { &tt };
        Ok(t.interpolate(&values[offsets[k]..offsets[k + 1]], z))
    });
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ParametricCurve, Side};
    use crate::mesh::{Domain, MeshOptions};

    fn disk(h: f64) -> Arc<HybridMesh> {
        let c = ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap();
        let d = Domain::new(vec![c], None).unwrap();
        Arc::new(HybridMesh::build(&d, h, &MeshOptions::default()).unwrap())
    }

    #[test]
    fn dof_counts() {
        assert_eq!(ndofs(828, 286, 5), 19_570);
        assert_eq!(nsrcs(828, 286, 10), 74_140);
    }

    #[test]
    fn constant_density_on_disk() {
        let mesh = disk(0.25);
        let opts = PotentialOptions { p: 6, ..Default::default() };
        let op = build_operator(mesh, KernelKind::Laplace, &opts, &[[0.0, 0.0], [0.3, -0.4]]).unwrap();
        let f = vec![1.0; op.ndofs()];
        let u = op.apply(&f).unwrap();
        assert!((u[0] - 0.25).abs() < 1e-9, "{}", u[0] - 0.25);
        assert!((u[1] - (1.0 - 0.25) / 4.0).abs() < 1e-9);
        let z = op.apply(&vec![0.0; op.ndofs()]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stencil_and_direct_rows_agree() {
        let mesh = disk(0.3);
        let opts = PotentialOptions { p: 4, dof_targets: true, ..Default::default() };
        let op = build_operator(mesh.clone(), KernelKind::Laplace, &opts, &[]).unwrap();
        let f = op.sample(|r| (r[0] * 2.0).sin() + r[1] * r[1]);
        let u = op.apply(&f).unwrap();
        let pts = op.dof_points();
        let sel: Vec<usize> = (0..pts.len()).step_by(37).collect();
        let sub: Vec<Point> = sel.iter().map(|&i| pts[i]).collect();
        let v = op.potential_at(&f, &sub).unwrap();
        for (j, &i) in sel.iter().enumerate() {
            assert!((u[i] - v[j]).abs() < 1e-10, "node {i}: {} vs {}", u[i], v[j]);
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let mesh = disk(0.3);
        let p = 5;
        let opts = PotentialOptions { p, ..Default::default() };
        let op = build_operator(mesh, KernelKind::Laplace, &opts, &[]).unwrap();
        let g = |r: Point| 1.0 + r[0] - 2.0 * r[1] + r[0] * r[1] * r[1] - 0.5 * r[0].powi(4);
        let vals = op.sample(g);
        let pts = [[0.1, 0.2], [-0.7, 0.3], [0.05, -0.93], [0.6, 0.6]];
        let got = op.interpolate_solution(&vals, &pts).unwrap();
        for (r, v) in pts.iter().zip(got) {
            // curved cells interpolate in reference space, exact on straight cells only
            assert!((v - g(*r)).abs() < 1e-6, "{r:?}");
        }
        assert!(op.interpolate_solution(&vals, &[[2.0, 0.0]]).is_err());
    }

    #[test]
    fn outside_target_rejected() {
        let mesh = disk(0.3);
        let r = build_operator(mesh, KernelKind::Laplace, &PotentialOptions::default(), &[[1.5, 0.0]]);
        assert!(matches!(r, Err(PotentialError::OutsideDomain(..))));
    }
}
