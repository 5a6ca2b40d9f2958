//! Hybrid tessellation: curved boundary triangles, triangulated buffer
//! zones and a uniform box bulk; plus target classification.
//!
//! Cells are stored in one vector: curved triangles first, then buffer
//! triangles, then boxes. Boxes are aligned to the lattice `hℤ²`.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};
use thiserror::Error;

use crate::geometry::{GeometryError, MeshCell, ParametricCurve, Side};
use crate::{add, cross, dist, dot, norm, scale, sub, Point};

/// Buffer-zone clearance factor δ.
pub const DEFAULT_DELTA: f64 = 0.8;
/// Near-field dilation factor D.
pub const DEFAULT_NEAR: f64 = 0.4;
/// Samples of a curved edge used for proximity tests.
const CURVE_SAMPLES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("gridsize {h} too large for curve of length {length} (need h < length/4)")]
    GridTooCoarse { h: f64, length: f64 },
    #[error("invalid domain: {0}")]
    BadDomain(String),
    #[error("curved cell {index} on curve {curve} is inverted (min J {jmin:e}); refine h")]
    InvertedCell { curve: usize, index: usize, jmin: f64 },
    #[error("buffer triangulation failed: {0}")]
    Triangulation(String),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The computational domain: curves with their sides, plus a bounding box
/// for domains without an enclosing curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub curves: Vec<ParametricCurve>,
    /// `[xmin, ymin, xmax, ymax]`; required when no curve encloses Ω.
    pub bbox: Option<[f64; 4]>,
}

impl Domain {
    pub fn new(curves: Vec<ParametricCurve>, bbox: Option<[f64; 4]>) -> Result<Self, MeshError> {
        let outer = curves.iter().filter(|c| c.side == Side::Inside).count();
        if curves.is_empty() && bbox.is_none() {
            return Err(MeshError::BadDomain("no curves and no bounding box".into()));
        }
        if outer > 1 {
            return Err(MeshError::BadDomain("more than one enclosing curve".into()));
        }
        if outer == 0 && bbox.is_none() {
            return Err(MeshError::BadDomain("unbounded domain needs a bounding box".into()));
        }
        if let Some(b) = bbox {
            if !(b[2] > b[0] && b[3] > b[1]) {
                return Err(MeshError::BadDomain(format!("empty bounding box {b:?}")));
            }
        }
        Ok(Self { curves, bbox })
    }

    pub fn outer_curve(&self) -> Option<usize> {
        self.curves.iter().position(|c| c.side == Side::Inside)
    }

    /// Whether Ω is bounded by curves only (the BVP setting).
    pub fn is_curve_bounded(&self) -> bool {
        self.outer_curve().is_some() && self.bbox.is_none()
    }

    pub fn contains(&self, x: Point) -> bool {
        if let Some(b) = self.bbox {
            if x[0] < b[0] || x[0] > b[2] || x[1] < b[1] || x[1] > b[3] {
                return false;
            }
        }
        self.curves.iter().all(|c| c.on_domain_side(x))
    }

    pub fn area(&self) -> f64 {
        let mut a = match (self.outer_curve(), self.bbox) {
            (Some(i), None) => self.curves[i].enclosed_area(),
            (_, Some(b)) => (b[2] - b[0]) * (b[3] - b[1]),
            (None, None) => 0.0,
        };
        for c in &self.curves {
            if c.side == Side::Outside {
                a -= c.enclosed_area();
            }
        }
        a
    }
}

/// Knot parameters at equal arclength ℓ/N with N = round(ℓ/h); the first
/// knot sits at arclength ℓ/(2N), keeping knots away from the seam t = 2π.
pub fn place_knots(c: &ParametricCurve, h: f64) -> Result<Vec<f64>, MeshError> {
    let length = c.total_length();
    if !(h > 0.0) || h >= length / 4.0 {
        return Err(MeshError::GridTooCoarse { h, length });
    }
    let n = (length / h).round() as usize;
    let step = length / n as f64;
    let mut knots = Vec::with_capacity(n);
    let mut prev = 0.0;
    let mut prev_s = 0.0;
    for j in 0..n {
        let target = (j as f64 + 0.5) * step - prev_s;
        // Newton on s(t) = arclength(prev, t) starting from the
        // constant-speed guess
        let mut t = prev + target / norm(c.deriv(prev));
        for _ in 0..30 {
            let f = c.arclength(prev, t) - target;
            let dt = f / norm(c.deriv(t));
            t -= dt;
            if dt.abs() <= 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        knots.push(t);
        prev_s += target;
        prev = t;
    }
    Ok(knots)
}

/// One blended triangle per knot interval, apex at γ(m) + h n(m).
pub fn build_boundary_cells(
    c: &ParametricCurve,
    curve_id: usize,
    knots: &[f64],
    h: f64,
) -> Result<Vec<MeshCell>, MeshError> {
    let n = knots.len();
    let mut cells = Vec::with_capacity(n);
    for j in 0..n {
        let a = knots[j];
        let b = if j + 1 < n { knots[j + 1] } else { knots[0] + 2.0 * PI };
        let m = 0.5 * (a + b);
        let cp = c.eval(m);
        let apex = add(cp.point, scale(h, cp.normal));
        // counterclockwise orientation: reverse the arc on inclusions
        let (t0, t1) = match c.side {
            Side::Inside => (a, b),
            Side::Outside => (b, a),
        };
        match MeshCell::curved(*c, curve_id, t0, t1, apex) {
            Ok(cell) => cells.push(cell),
            Err(GeometryError::InvertedJacobian(jmin)) | Err(GeometryError::Degenerate(jmin)) => {
                return Err(MeshError::InvertedCell { curve: curve_id, index: j, jmin })
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(cells)
}

/// Closed zigzag polygon `knot_0, apex_0, knot_1, apex_1, ...` of a curve's
/// boundary cells, in cell order.
pub fn zigzag(cells: &[MeshCell]) -> Vec<Point> {
    let mut out = Vec::with_capacity(2 * cells.len());
    for c in cells {
        if let MeshCell::CurvedTriangle { v, edge } = c {
            // v[0] is γ(t0); on inclusions that is the later knot
            let first = if edge.t0 < edge.t1 { v[0] } else { v[1] };
            out.push(first);
            out.push(v[2]);
        }
    }
    out
}

/// Build options.
#[derive(Debug, Clone)]
pub struct MeshOptions {
    pub delta: f64,
    pub near_factor: f64,
    /// Minimum angle for buffer triangles, degrees.
    pub min_angle: f64,
    /// Externally produced buffer triangles, used instead of the built-in
    /// triangulator after validation.
    pub buffer: Option<Vec<[Point; 3]>>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA, near_factor: DEFAULT_NEAR, min_angle: 20.0, buffer: None }
    }
}

type Cell2 = (i64, i64);

/// Bulk boxes and buffer groups before triangulation.
#[derive(Debug, Clone)]
pub struct BulkLayout {
    /// Lattice indices of retained boxes (lower-left corner `(i h, j h)`).
    pub boxes: Vec<Cell2>,
    /// One entry per merged buffer component.
    pub groups: Vec<BufferGroup>,
}

#[derive(Debug, Clone)]
pub struct BufferGroup {
    pub curves: Vec<usize>,
    /// Lattice cells covered by the component (sorted).
    pub cells: Vec<Cell2>,
    /// Lattice edges bounding the buffer region on the box side.
    pub frontier: Vec<(Cell2, Cell2)>,
}

fn lattice_range(domain: &Domain, h: f64) -> [i64; 4] {
    if let Some(b) = domain.bbox {
        return [
            (b[0] / h).floor() as i64,
            (b[1] / h).floor() as i64,
            (b[2] / h).ceil() as i64,
            (b[3] / h).ceil() as i64,
        ];
    }
    let c = &domain.curves[domain.outer_curve().expect("bounded domain")];
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for k in 0..1024 {
        let p = c.point(2.0 * PI * k as f64 / 1024.0);
        b = [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])];
    }
    [
        (b[0] / h).floor() as i64 - 2,
        (b[1] / h).floor() as i64 - 2,
        (b[2] / h).ceil() as i64 + 2,
        (b[3] / h).ceil() as i64 + 2,
    ]
}

/// Outline of a cell as a closed polygon (curved edge sampled).
fn outline(cell: &MeshCell) -> Vec<Point> {
    match cell {
        MeshCell::CurvedTriangle { v, .. } => {
            let mut p: Vec<Point> =
                (0..=CURVE_SAMPLES).map(|k| cell.point([k as f64 / CURVE_SAMPLES as f64, 0.0])).collect();
            p.push(v[2]);
            p
        }
        _ => cell.vertices(),
    }
}

fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    let s = if l2 > 0.0 { (dot(sub(p, a), ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, add(a, scale(s, ab)))
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = cross(sub(b, a), sub(c, a));
    let o2 = cross(sub(b, a), sub(d, a));
    let o3 = cross(sub(d, c), sub(a, c));
    let o4 = cross(sub(d, c), sub(b, c));
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0 && (o1 != 0.0 || o2 != 0.0 || o3 != 0.0 || o4 != 0.0)
}

fn segment_dist(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_cross(a, b, c, d) {
        return 0.0;
    }
    point_segment_dist(a, c, d)
        .min(point_segment_dist(b, c, d))
        .min(point_segment_dist(c, a, b))
        .min(point_segment_dist(d, a, b))
}

/// Crossing-number point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance between two closed polygons (0 if they overlap).
pub fn polygon_dist(a: &[Point], b: &[Point]) -> f64 {
    if point_in_polygon(a[0], b) || point_in_polygon(b[0], a) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for i in 0..a.len() {
        let (p, q) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            d = d.min(segment_dist(p, q, b[j], b[(j + 1) % b.len()]));
            if d == 0.0 {
                return 0.0;
            }
        }
    }
    d
}

fn square_outline(c: Cell2, h: f64) -> Vec<Point> {
    let (x, y) = (c.0 as f64 * h, c.1 as f64 * h);
    vec![[x, y], [x + h, y], [x + h, y + h], [x, y + h]]
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Select bulk boxes and merge per-curve buffer zones.
///
/// A lattice cell is retained as a box if its center lies in Ω and it is
/// farther than δh from every boundary triangle. Non-retained cells within
/// δh of curve i form B_i; zones sharing or touching a cell are merged.
pub fn build_bulk_and_buffer(domain: &Domain, boundary: &[Vec<MeshCell>], h: f64, delta: f64) -> BulkLayout {
    let range = lattice_range(domain, h);
    let mut near: HashMap<Cell2, Vec<usize>> = HashMap::new();
    for (ci, cells) in boundary.iter().enumerate() {
        for cell in cells {
            let poly = outline(cell);
            let b = cell.bbox();
            let pad = delta * h;
            let i0 = (((b[0] - pad) / h).floor() as i64).max(range[0]);
            let j0 = (((b[1] - pad) / h).floor() as i64).max(range[1]);
            let i1 = (((b[2] + pad) / h).floor() as i64).min(range[2] - 1);
            let j1 = (((b[3] + pad) / h).floor() as i64).min(range[3] - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    let e = near.entry((i, j)).or_default();
                    if e.contains(&ci) {
                        continue;
                    }
                    if polygon_dist(&square_outline((i, j), h), &poly) <= delta * h {
                        e.push(ci);
                    }
                }
            }
        }
    }
    near.retain(|_, v| !v.is_empty());

    let mut boxes = Vec::new();
    for i in range[0]..range[2] {
        for j in range[1]..range[3] {
            if near.contains_key(&(i, j)) {
                continue;
            }
            let c = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            if domain.contains(c) {
                boxes.push((i, j));
            }
        }
    }

    // union zones that share a cell or touch across an edge or corner
    let nc = boundary.len();
    let mut parent: Vec<usize> = (0..nc).collect();
    for (&(i, j), cs) in &near {
        for w in cs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(other) = near.get(&(i + di, j + dj)) {
                    for &o in other {
                        let (a, b) = (find(&mut parent, cs[0]), find(&mut parent, o));
                        parent[a] = b;
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..nc).map(|i| find(&mut parent, i)).collect();
    let mut ids: Vec<usize> = roots.clone();
    ids.sort_unstable();
    ids.dedup();
    for r in roots.iter_mut() {
        *r = ids.binary_search(r).expect("root listed");
    }
    let box_set: HashSet<Cell2> = boxes.iter().copied().collect();
    let mut groups: Vec<BufferGroup> =
        ids.iter().map(|_| BufferGroup { curves: Vec::new(), cells: Vec::new(), frontier: Vec::new() }).collect();
    for (ci, &g) in roots.iter().enumerate() {
        groups[g].curves.push(ci);
    }
    for (&cell, cs) in &near {
        groups[roots[cs[0]]].cells.push(cell);
    }
    for g in groups.iter_mut() {
        g.cells.sort_unstable();
        let own: HashSet<Cell2> = g.cells.iter().copied().collect();
        for &(i, j) in &g.cells {
            // sides as lattice-point pairs, counterclockwise around the cell
            let sides = [
                ((i, j - 1), (i, j), (i + 1, j)),
                ((i + 1, j), (i + 1, j), (i + 1, j + 1)),
                ((i, j + 1), (i + 1, j + 1), (i, j + 1)),
                ((i - 1, j), (i, j + 1), (i, j)),
            ];
            for (nb, a, b) in sides {
                if own.contains(&nb) {
                    continue;
                }
                let outside_range = nb.0 < range[0] || nb.0 >= range[2] || nb.1 < range[1] || nb.1 >= range[3];
                if box_set.contains(&nb) || (outside_range && domain.bbox.is_some()) {
                    g.frontier.push((a, b));
                }
            }
        }
        g.frontier.sort_unstable();
    }
    groups.sort_by_key(|g| g.curves[0]);
    boxes.sort_unstable();
    BulkLayout { boxes, groups }
}

/// Constrained Delaunay triangulation with refinement of one buffer
/// component, bounded by the zigzags of its curves and its lattice frontier.
pub fn triangulate_buffer(
    zigzags: &[&[Point]],
    frontier: &[(Cell2, Cell2)],
    h: f64,
    min_angle: f64,
) -> Result<Vec<[Point; 3]>, MeshError> {
    use spade::handles::FixedVertexHandle;
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let ins = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>, p: Point| {
        cdt.insert(Point2::new(p[0], p[1]))
            .map_err(|e| MeshError::Triangulation(format!("vertex ({}, {}): {e:?}", p[0], p[1])))
    };
    let mut edges: Vec<(FixedVertexHandle, FixedVertexHandle, Point, Point)> = Vec::new();
    for z in zigzags {
        let hs: Vec<FixedVertexHandle> = z.iter().map(|&p| ins(&mut cdt, p)).collect::<Result<_, _>>()?;
        for k in 0..z.len() {
            let k1 = (k + 1) % z.len();
            edges.push((hs[k], hs[k1], z[k], z[k1]));
        }
    }
    let mut lattice: HashMap<Cell2, FixedVertexHandle> = HashMap::new();
    for &(a, b) in frontier {
        let mut handle = |q: Cell2, cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>| {
            if let Some(v) = lattice.get(&q) {
                return Ok(*v);
            }
            let v = ins(cdt, [q.0 as f64 * h, q.1 as f64 * h])?;
            lattice.insert(q, v);
            Ok::<_, MeshError>(v)
        };
        let va = handle(a, &mut cdt)?;
        let vb = handle(b, &mut cdt)?;
        let pa = [a.0 as f64 * h, a.1 as f64 * h];
        let pb = [b.0 as f64 * h, b.1 as f64 * h];
        edges.push((va, vb, pa, pb));
    }
    for (va, vb, pa, pb) in edges {
        if !cdt.can_add_constraint(va, vb) {
            return Err(MeshError::Triangulation(format!(
                "boundary segment ({}, {})-({}, {}) crosses another; refine h",
                pa[0], pa[1], pb[0], pb[1]
            )));
        }
        cdt.add_constraint(va, vb);
    }
    // Refine on angle first with a loose area cap; tighten the cap only if
    // some triangle breaks the 2h diameter bound.
    let base = cdt.clone();
    for area in [0.9 * h * h, 0.3 * h * h] {
        let mut cdt = base.clone();
        let n0 = cdt.num_vertices();
        let params = RefinementParameters::<f64>::new()
            .with_angle_limit(AngleLimit::from_deg(min_angle))
            .with_max_allowed_area(area)
            .with_max_additional_vertices(50 * n0 + 1000)
            .exclude_outer_faces(true);
        let res = cdt.refine(params);
        if !res.refinement_complete {
            return Err(MeshError::Triangulation(format!(
                "refinement incomplete after {} vertices",
                cdt.num_vertices()
            )));
        }
        let excluded: HashSet<_> = res.excluded_faces.into_iter().collect();
        let mut tris = Vec::new();
        let mut diam: f64 = 0.0;
        for f in cdt.inner_faces() {
            if excluded.contains(&f.fix()) {
                continue;
            }
            let p = f.positions();
            let t = [[p[0].x, p[0].y], [p[1].x, p[1].y], [p[2].x, p[2].y]];
            diam = diam.max(dist(t[0], t[1])).max(dist(t[1], t[2])).max(dist(t[2], t[0]));
            tris.push(t);
        }
        if diam <= 2.0 * h {
            return Ok(tris);
        }
    }
    Err(MeshError::Triangulation("buffer triangles exceed diameter 2h".into()))
}

/// Self/near classification of a target point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetClassification {
    pub self_cell: Option<usize>,
    /// Reference coordinates of the target in the self cell.
    pub self_zeta: Option<Point>,
    pub near_cells: Vec<usize>,
}

/// The hybrid mesh.
#[derive(Debug, Clone)]
pub struct HybridMesh {
    pub domain: Domain,
    pub h: f64,
    /// Curved, then buffer triangles, then boxes.
    pub cells: Vec<MeshCell>,
    pub n_curved: usize,
    pub n_triangles: usize,
    /// Knot parameters per curve (empty for imported meshes).
    pub knots: Vec<Vec<f64>>,
    /// Curve ids of each merged buffer component.
    pub buffer_groups: Vec<Vec<usize>>,
    pub near_factor: f64,
    bins: Bins,
}

#[derive(Debug, Clone)]
struct Bins {
    origin: Point,
    size: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl Bins {
    fn build(cells: &[MeshCell], size: f64, pad: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in cells {
            let b = c.bbox();
            lo = [lo[0].min(b[0]), lo[1].min(b[1])];
            hi = [hi[0].max(b[2]), hi[1].max(b[3])];
        }
        let origin = [lo[0] - pad - size, lo[1] - pad - size];
        let nx = (((hi[0] + pad + size - origin[0]) / size).ceil() as usize).max(1);
        let ny = (((hi[1] + pad + size - origin[1]) / size).ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        for (k, c) in cells.iter().enumerate() {
            let b = c.bbox();
            let i0 = ((b[0] - pad - origin[0]) / size).floor().max(0.0) as usize;
            let j0 = ((b[1] - pad - origin[1]) / size).floor().max(0.0) as usize;
            let i1 = (((b[2] + pad - origin[0]) / size).floor() as usize).min(nx - 1);
            let j1 = (((b[3] + pad - origin[1]) / size).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(k as u32);
                }
            }
        }
        Self { origin, size, nx, ny, cells: bins }
    }

    fn candidates(&self, p: Point) -> &[u32] {
        let i = ((p[0] - self.origin[0]) / self.size).floor();
        let j = ((p[1] - self.origin[1]) / self.size).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.nx || j as usize >= self.ny {
            return &[];
        }
        &self.cells[j as usize * self.nx + i as usize]
    }
}

impl HybridMesh {
    /// Build the tessellation for gridsize `h`.
    pub fn build(domain: &Domain, h: f64, opts: &MeshOptions) -> Result<Self, MeshError> {
        let mut domain = domain.clone();
        if let Some(b) = domain.bbox {
            domain.bbox =
                Some([(b[0] / h).floor() * h, (b[1] / h).floor() * h, (b[2] / h).ceil() * h, (b[3] / h).ceil() * h]);
        }
        let mut knots = Vec::new();
        let mut boundary = Vec::new();
        for (i, c) in domain.curves.iter().enumerate() {
            let k = place_knots(c, h)?;
            boundary.push(build_boundary_cells(c, i, &k, h)?);
            knots.push(k);
        }
        let layout = build_bulk_and_buffer(&domain, &boundary, h, opts.delta);
        let zigzags: Vec<Vec<Point>> = boundary.iter().map(|b| zigzag(b)).collect();
        let buffer = match &opts.buffer {
            Some(t) => t.clone(),
            None => {
                let mut all = Vec::new();
                for g in &layout.groups {
                    let z: Vec<&[Point]> = g.curves.iter().map(|&c| zigzags[c].as_slice()).collect();
                    all.extend(triangulate_buffer(&z, &g.frontier, h, opts.min_angle)?);
                }
                all
            }
        };
        let mut cells: Vec<MeshCell> = boundary.into_iter().flatten().collect();
        let n_curved = cells.len();
        for t in &buffer {
            cells.push(MeshCell::straight(*t)?);
        }
        let n_triangles = cells.len();
        for &(i, j) in &layout.boxes {
            cells.push(MeshCell::square([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h], h)?);
        }
        let buffer_groups = layout.groups.iter().map(|g| g.curves.clone()).collect();
        let mesh = Self::assemble(domain, h, cells, n_curved, n_triangles, knots, buffer_groups, opts.near_factor);
        if opts.buffer.is_some() {
            let rep = mesh.validate();
            if rep.relative_area_defect > 1e-8 {
                return Err(MeshError::Triangulation(format!(
                    "imported buffer does not close the tessellation (area defect {:e})",
                    rep.area_defect
                )));
            }
        }
        Ok(mesh)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        domain: Domain,
        h: f64,
        cells: Vec<MeshCell>,
        n_curved: usize,
        n_triangles: usize,
        knots: Vec<Vec<f64>>,
        buffer_groups: Vec<Vec<usize>>,
        near_factor: f64,
    ) -> Self {
        let bins = Bins::build(&cells, h, near_factor * h);
        Self { domain, h, cells, n_curved, n_triangles, knots, buffer_groups, near_factor, bins }
    }

    pub fn n_boxes(&self) -> usize {
        self.cells.len() - self.n_triangles
    }

    pub fn triangles(&self) -> &[MeshCell] {
        &self.cells[..self.n_triangles]
    }

    pub fn boxes(&self) -> &[MeshCell] {
        &self.cells[self.n_triangles..]
    }

    /// Lattice index of a box cell.
    pub fn box_index(&self, k: usize) -> Option<(i64, i64)> {
        match self.cells.get(k)? {
            MeshCell::Box { center, .. } => {
                Some(((center[0] / self.h - 0.5).round() as i64, (center[1] / self.h - 0.5).round() as i64))
            }
            _ => None,
        }
    }

    /// Lowest-index cell containing `r`, with reference coordinates.
    pub fn locate(&self, r: Point) -> Option<(usize, Point)> {
        let mut best: Option<(usize, Point)> = None;
        for &k in self.bins.candidates(r) {
            let k = k as usize;
            if best.is_some_and(|(b, _)| b < k) {
                continue;
            }
            if let Some(z) = self.cells[k].contains(r, 1e-10) {
                best = Some((k, z));
            }
        }
        best
    }

    /// Self cell and near set of `r0` with dilation D·h.
    pub fn classify(&self, r0: Point) -> Result<TargetClassification, MeshError> {
        let (k, z) = self.locate(r0).ok_or(MeshError::OutsideDomain(r0[0], r0[1]))?;
        let lim = self.near_factor * self.h;
        let mut near = Vec::new();
        for &c in self.bins.candidates(r0) {
            let c = c as usize;
            if c == k {
                continue;
            }
            let cell = &self.cells[c];
            let b = cell.bbox();
            if r0[0] < b[0] - lim || r0[0] > b[2] + lim || r0[1] < b[1] - lim || r0[1] > b[3] + lim {
                continue;
            }
            if cell.star_point(r0).d < lim {
                near.push(c);
            }
        }
        near.sort_unstable();
        Ok(TargetClassification { self_cell: Some(k), self_zeta: Some(z), near_cells: near })
    }

    pub fn validate(&self) -> MeshReport {
        let total: f64 = self.cells.iter().map(|c| c.area()).sum();
        let exact = self.domain.area();
        let min_jacobian = self
            .cells
            .iter()
            .map(|c| match c {
                MeshCell::CurvedTriangle { .. } => c.min_jacobian(20),
                _ => c.jacobian([0.0, 0.0]),
            })
            .fold(f64::INFINITY, f64::min);
        let mut min_angle = 180.0f64;
        let mut max_diam = 0.0f64;
        for c in &self.cells[self.n_curved..self.n_triangles] {
            if let MeshCell::StraightTriangle { v } = c {
                for i in 0..3 {
                    let a = sub(v[(i + 1) % 3], v[i]);
                    let b = sub(v[(i + 2) % 3], v[i]);
                    let ang = cross(a, b).abs().atan2(dot(a, b)).to_degrees();
                    min_angle = min_angle.min(ang);
                }
                max_diam = max_diam.max(c.diameter());
            }
        }
        let nt = self.n_triangles;
        let nb = self.n_boxes();
        MeshReport {
            area: total,
            area_defect: (total - exact).abs(),
            relative_area_defect: (total - exact).abs() / exact,
            min_jacobian,
            min_angle,
            max_buffer_diameter: max_diam,
            n_triangles: nt,
            n_boxes: nb,
            n_curved: self.n_curved,
            h_nt: self.h * nt as f64,
            h2_nb: self.h * self.h * nb as f64,
        }
    }

    /// Line-oriented text export.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:?} {} {}", self.h, self.n_triangles, self.n_boxes());
        for c in &self.cells {
            let _ = match c {
                MeshCell::StraightTriangle { v } => {
                    writeln!(s, "T {:?} {:?} {:?} {:?} {:?} {:?}", v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1])
                }
                MeshCell::CurvedTriangle { v, edge } => {
                    writeln!(s, "C {} {:?} {:?} {:?} {:?}", edge.curve_id, edge.t0, edge.t1, v[2][0], v[2][1])
                }
                MeshCell::Box { center, .. } => writeln!(s, "B {:?} {:?}", center[0], center[1]),
            };
        }
        s
    }

    /// Parse a mesh written by [`HybridMesh::to_text`]. Curved records
    /// refer to the curves of `domain`.
    pub fn from_text(text: &str, domain: &Domain) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or(MeshError::Parse { line: 1, msg: "empty file".into() })?;
        let hv = parse_fields(head, 0)?;
        if hv.len() != 3 {
            return Err(MeshError::Parse { line: 1, msg: "header must be `h N_t N_b`".into() });
        }
        let h = hv[0];
        let (nt, nb) = (hv[1] as usize, hv[2] as usize);
        let mut curved = Vec::new();
        let mut straight = Vec::new();
        let mut boxes = Vec::new();
        for (ln, l) in lines {
            let l = l.trim();
            let (tag, rest) = l.split_at(1);
            let f = parse_fields(rest, ln)?;
            let bad = |n: usize| MeshError::Parse { line: ln + 1, msg: format!("expected {n} numbers") };
            match tag {
                "T" => {
                    if f.len() != 6 {
                        return Err(bad(6));
                    }
                    straight.push(MeshCell::straight([[f[0], f[1]], [f[2], f[3]], [f[4], f[5]]])?);
                }
                "C" => {
                    if f.len() != 5 {
                        return Err(bad(5));
                    }
                    let id = f[0] as usize;
                    let c = domain
                        .curves
                        .get(id)
                        .ok_or(MeshError::Parse { line: ln + 1, msg: format!("unknown curve {id}") })?;
                    curved.push(MeshCell::curved(*c, id, f[1], f[2], [f[3], f[4]])?);
                }
                "B" => {
                    if f.len() != 2 {
                        return Err(bad(2));
                    }
                    boxes.push(MeshCell::square([f[0], f[1]], h)?);
                }
                _ => return Err(MeshError::Parse { line: ln + 1, msg: format!("unknown record `{tag}`") }),
            }
        }
        if curved.len() + straight.len() != nt || boxes.len() != nb {
            return Err(MeshError::Parse { line: 1, msg: "cell counts do not match header".into() });
        }
        let n_curved = curved.len();
        let mut cells = curved;
        cells.extend(straight);
        cells.extend(boxes);
        let mut dom = domain.clone();
        if let Some(b) = dom.bbox {
            dom.bbox =
                Some([(b[0] / h).floor() * h, (b[1] / h).floor() * h, (b[2] / h).ceil() * h, (b[3] / h).ceil() * h]);
        }
        Ok(Self::assemble(dom, h, cells, n_curved, nt, Vec::new(), Vec::new(), DEFAULT_NEAR))
    }
}

/// Parse the `T` records of a buffer triangulation file.
pub fn parse_buffer(text: &str) -> Result<Vec<[Point; 3]>, MeshError> {
    let mut out = Vec::new();
    for (ln, l) in text.lines().enumerate() {
        let l = l.trim();
        if let Some(rest) = l.strip_prefix('T') {
            let f = parse_fields(rest, ln)?;
            if f.len() != 6 {
                return Err(MeshError::Parse { line: ln + 1, msg: "expected 6 numbers".into() });
            }
            out.push([[f[0], f[1]], [f[2], f[3]], [f[4], f[5]]]);
        }
    }
    Ok(out)
}

fn parse_fields(s: &str, ln: usize) -> Result<Vec<f64>, MeshError> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| MeshError::Parse { line: ln + 1, msg: format!("`{t}`: {e}") }))
        .collect()
}

/// Mesh quality and size summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub area: f64,
    pub area_defect: f64,
    pub relative_area_defect: f64,
    pub min_jacobian: f64,
    /// Smallest buffer-triangle angle in degrees.
    pub min_angle: f64,
    pub max_buffer_diameter: f64,
    pub n_triangles: usize,
    pub n_boxes: usize,
    pub n_curved: usize,
    pub h_nt: f64,
    pub h2_nb: f64,
}
