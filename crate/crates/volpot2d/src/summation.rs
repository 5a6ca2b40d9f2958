//! Smooth-quadrature summation `u(t_i) = Σ_j G(|t_i − s_j|) q_j`.
//!
//! [`direct_sum`] is the O(NM) reference. [`FmmPlan`] builds a quadtree once
//! for fixed sources and targets and then evaluates any charge vector in
//! near-linear time: the Laplace kernel uses complex multipole and local
//! expansions, the modified Helmholtz kernel uses tensor Chebyshev
//! interpolation of the kernel on each box. In both, a source coinciding
//! with a target contributes nothing to it.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::kernel::KernelKind;
use crate::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummationError {
    #[error("source {source_index} coincides with target {target_index}")]
    Coincident { source_index: usize, target_index: usize },
    #[error("{points} source points but {charges} charges")]
    LengthMismatch { points: usize, charges: usize },
    #[error("tolerance {0} outside [1e-12, 1e-3]")]
    BadTolerance(f64),
    #[error("non-finite coordinate or charge at index {0}")]
    NonFinite(usize),
}

/// Source points with their charges (function value × Jacobian × weight).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceSet {
    pub points: Vec<Point>,
    pub charges: Vec<f64>,
}

impl SourceSet {
    pub fn new(points: Vec<Point>, charges: Vec<f64>) -> Result<Self, SummationError> {
        if points.len() != charges.len() {
            return Err(SummationError::LengthMismatch { points: points.len(), charges: charges.len() });
        }
        for (i, (p, q)) in points.iter().zip(&charges).enumerate() {
            if !(p[0].is_finite() && p[1].is_finite() && q.is_finite()) {
                return Err(SummationError::NonFinite(i));
            }
        }
        Ok(SourceSet { points, charges })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const INV_2PI: f64 = 1.0 / (2.0 * PI);

/// Exact pairwise sum. Fails if a target coincides with a source.
pub fn direct_sum(kernel: KernelKind, sources: &SourceSet, targets: &[Point]) -> Result<Vec<f64>, SummationError> {
    let out = crate::par::map(targets.len(), |i| {
        let t = targets[i];
        let mut s = 0.0;
        for (j, (p, q)) in sources.points.iter().zip(&sources.charges).enumerate() {
            let r = (t[0] - p[0]).hypot(t[1] - p[1]);
            if r == 0.0 {
                return Err(SummationError::Coincident { source_index: j, target_index: i });
            }
            s += kernel.green(r) * q;
        }
        Ok(s)
    });
    out.into_iter().collect()
}

/// Tree-accelerated sum with relative accuracy about `eps`.
pub fn accelerated_sum(
    kernel: KernelKind,
    sources: &SourceSet,
    targets: &[Point],
    eps: f64,
) -> Result<Vec<f64>, SummationError> {
    FmmPlan::new(kernel, &sources.points, targets, eps)?.evaluate(&sources.charges)
}

const KEY_BITS: u32 = 16;

#[inline]
fn spread(mut v: u64) -> u64 {
    v &= 0xffff;
    v = (v | (v << 8)) & 0x00ff_00ff;
    v = (v | (v << 4)) & 0x0f0f_0f0f;
    v = (v | (v << 2)) & 0x3333_3333;
    v = (v | (v << 1)) & 0x5555_5555;
    v
}

#[inline]
fn compact(mut v: u64) -> u64 {
    v &= 0x5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333;
    v = (v | (v >> 2)) & 0x0f0f_0f0f;
    v = (v | (v >> 4)) & 0x00ff_00ff;
    v = (v | (v >> 8)) & 0x0000_ffff;
    v
}

#[inline]
fn morton(ix: u64, iy: u64) -> u64 {
    spread(ix) | (spread(iy) << 1)
}

#[inline]
fn demorton(k: u64) -> (i64, i64) {
    (compact(k) as i64, compact(k >> 1) as i64)
}

/// Boxes of one tree level, sorted by Morton key.
#[derive(Debug, Clone)]
struct Level {
    keys: Vec<u64>,
    src: Vec<(usize, usize)>,
    tgt: Vec<(usize, usize)>,
}

impl Level {
    fn find(&self, ix: i64, iy: i64, n: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= n || iy >= n {
            return None;
        }
        self.keys.binary_search(&morton(ix as u64, iy as u64)).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Backend {
    /// Complex expansions with `p` terms.
    Laplace { p: usize },
    /// Tensor Chebyshev interpolation with `n` points per direction.
    Chebyshev { n: usize },
}

/// Fixed-geometry fast summation: build once, evaluate many charge vectors.
#[derive(Debug)]
pub struct FmmPlan {
    kernel: KernelKind,
    backend: Backend,
    /// Lower-left corner and side of the root square.
    origin: Point,
    side: f64,
    depth: u32,
    /// Sources and targets sorted by leaf key, with original indices.
    src_pts: Vec<Point>,
    src_perm: Vec<usize>,
    tgt_pts: Vec<Point>,
    tgt_perm: Vec<usize>,
    levels: Vec<Level>,
    cheb: Option<ChebData>,
}

/// Precomputed interpolation operators for the Chebyshev backend.
#[derive(Debug)]
struct ChebData {
    n: usize,
    nodes: Vec<f64>,
    /// Child-to-parent transfer per child quadrant, `n² × n²` row-major
    /// (parent node, child node).
    m2m: [Vec<f64>; 4],
    /// Compressed M2L operators indexed by level (absent above level 2).
    m2l: Vec<Option<LevelM2L>>,
}

/// Low-rank form of all M2L matrices of one level: `K_o ≈ U C_o Vᵀ`, with
/// `U`, `V` from the SVDs of the horizontally and vertically stacked `K_o`.
#[derive(Debug)]
struct LevelM2L {
    rank: usize,
    /// `n² × rank`, row-major.
    u: Vec<f64>,
    /// `rank × n²`, row-major.
    vt: Vec<f64>,
    /// `rank × rank` per offset `(dx, dy)` in box widths.
    c: HashMap<(i64, i64), Vec<f64>>,
}

impl LevelM2L {
    fn build(kernel: KernelKind, nodes: &[f64], half: f64, tol: f64) -> Self {
        let n = nodes.len();
        let n2 = n * n;
        let offsets: Vec<(i64, i64)> = (-3..=3i64)
            .flat_map(|dy| (-3..=3i64).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx.abs() > 1 || dy.abs() > 1)
            .collect();
        // the eight symmetries of the square map every offset onto one with
        // 0 ≤ dy ≤ dx, so only those kernel matrices are evaluated
        let kmat = |dx: i64, dy: i64| {
            let off = [2.0 * half * dx as f64, 2.0 * half * dy as f64];
            DMatrix::from_fn(n2, n2, |i, j| {
                let t = [half * nodes[i % n], half * nodes[i / n]];
                let s = [off[0] + half * nodes[j % n], off[1] + half * nodes[j / n]];
                kernel.green((t[0] - s[0]).hypot(t[1] - s[1]))
            })
        };
        let canon: HashMap<(i64, i64), DMatrix<f64>> =
            offsets.iter().filter(|&&(dx, dy)| 0 <= dy && dy <= dx).map(|&(dx, dy)| ((dx, dy), kmat(dx, dy))).collect();
        let mats: Vec<DMatrix<f64>> = offsets
            .iter()
            .map(|&(dx, dy)| {
                let (a, b) = (dx.abs(), dy.abs());
                let base = &canon[&(a.max(b), a.min(b))];
                DMatrix::from_fn(n2, n2, |i, j| {
                    let (mut tx, mut ty, mut sx, mut sy) = (i % n, i / n, j % n, j / n);
                    if dx < 0 {
                        tx = n - 1 - tx;
                        sx = n - 1 - sx;
                    }
                    if dy < 0 {
                        ty = n - 1 - ty;
                        sy = n - 1 - sy;
                    }
                    if a < b {
                        std::mem::swap(&mut tx, &mut ty);
                        std::mem::swap(&mut sx, &mut sy);
                    }
                    base[(ty * n + tx, sy * n + sx)]
                })
            })
            .collect();
        let m = mats.len();
        let mut thin = DMatrix::zeros(n2 * m, n2);
        let mut thin_t = DMatrix::zeros(n2 * m, n2);
        for (k, mat) in mats.iter().enumerate() {
            thin.view_mut((k * n2, 0), (n2, n2)).copy_from(mat);
            thin_t.view_mut((k * n2, 0), (n2, n2)).copy_from(&mat.transpose());
        }
        // tall stacks reduce to n² × n² triangles before the SVD
        let sv = thin.qr().r().svd(false, true);
        let su = thin_t.qr().r().svd(false, true);
        let rank_of = |sv: &nalgebra::DVector<f64>| {
            let top = sv.max();
            sv.iter().filter(|&&x| x > tol * top).count().max(1)
        };
        let rank = rank_of(&su.singular_values).max(rank_of(&sv.singular_values));
        let u = sorted_columns(&su.v_t.as_ref().expect("left vectors").transpose(), &su.singular_values, rank);
        let v = sorted_columns(&sv.v_t.as_ref().expect("right vectors").transpose(), &sv.singular_values, rank);
        let c = offsets
            .iter()
            .zip(&mats)
            .map(|(&o, k)| {
                let ck = u.transpose() * k * &v;
                (o, row_major(&ck))
            })
            .collect();
        LevelM2L { rank, u: row_major(&u), vt: row_major(&v.transpose()), c }
    }

    fn compress(&self, w: &[f64]) -> Vec<f64> {
        let n2 = w.len();
        (0..self.rank).map(|i| self.vt[i * n2..(i + 1) * n2].iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }
}

/// The `rank` columns of `m` belonging to the largest singular values.
fn sorted_columns(m: &DMatrix<f64>, sv: &nalgebra::DVector<f64>, rank: usize) -> DMatrix<f64> {
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    DMatrix::from_fn(m.nrows(), rank, |i, j| m[(i, idx[j])])
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

/// Target mean number of sources per nonempty leaf.
pub const LEAF_SIZE: usize = 32;

impl FmmPlan {
    pub fn new(kernel: KernelKind, sources: &[Point], targets: &[Point], eps: f64) -> Result<Self, SummationError> {
        if !(1e-12..=1e-3).contains(&eps) {
            return Err(SummationError::BadTolerance(eps));
        }
        for (i, p) in sources.iter().chain(targets).enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(SummationError::NonFinite(i));
            }
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in sources.iter().chain(targets) {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if sources.is_empty() && targets.is_empty() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let mut side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        if side <= 0.0 {
            side = 1.0;
        }
        side *= 1.0 + 1e-10;
        let origin = lo;
        let cells = (1u64 << KEY_BITS) as f64;
        let key = |p: &Point| -> u64 {
            let ix = (((p[0] - origin[0]) / side) * cells).floor().clamp(0.0, cells - 1.0) as u64;
            let iy = (((p[1] - origin[1]) / side) * cells).floor().clamp(0.0, cells - 1.0) as u64;
            morton(ix, iy)
        };
        let mut sk: Vec<(u64, usize)> = sources.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        let mut tk: Vec<(u64, usize)> = targets.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        sk.sort_unstable();
        tk.sort_unstable();
        // depth: smallest level whose nonempty leaves hold ≤ LEAF_SIZE sources on average
        let mut depth = 0;
        while depth < 12 {
            let shift = 2 * (KEY_BITS - depth);
            let mut boxes = 0usize;
            let mut last = u64::MAX;
            for &(k, _) in &sk {
                if k >> shift != last {
                    boxes += 1;
                    last = k >> shift;
                }
            }
            if boxes == 0 || sources.len() <= LEAF_SIZE * boxes {
                break;
            }
            depth += 1;
        }
        let mut levels = Vec::with_capacity(depth as usize + 1);
        for l in 0..=depth {
            let shift = 2 * (KEY_BITS - l);
            let mut keys: Vec<u64> = sk.iter().chain(&tk).map(|&(k, _)| k >> shift).collect();
            keys.sort_unstable();
            keys.dedup();
            let range = |v: &[(u64, usize)], b: u64| -> (usize, usize) {
                let a = v.partition_point(|&(k, _)| (k >> shift) < b);
                let e = v.partition_point(|&(k, _)| (k >> shift) <= b);
                (a, e)
            };
            let src = keys.iter().map(|&b| range(&sk, b)).collect();
            let tgt = keys.iter().map(|&b| range(&tk, b)).collect();
            levels.push(Level { keys, src, tgt });
        }
        let backend = match kernel {
            KernelKind::Laplace => {
                // well-separated boxes converge like 0.55^p
                let p = ((eps / 4.0).ln() / 0.55f64.ln()).ceil() as usize;
                Backend::Laplace { p: p.clamp(4, 60) }
            }
            KernelKind::ModifiedHelmholtz { .. } => {
                let n = (1.1 * (-eps.log10()) + 3.0).ceil() as usize;
                Backend::Chebyshev { n: n.clamp(4, 18) }
            }
        };
        let cheb = match backend {
            Backend::Chebyshev { n } => {
                let mut cd = ChebData::new(n);
                let levels: Vec<u32> = (2..=depth).collect();
                let built = crate::par::map(levels.len(), |i| {
                    let half = 0.5 * side / (1u64 << levels[i]) as f64;
                    LevelM2L::build(kernel, &cd.nodes, half, 0.05 * eps)
                });
                cd.m2l = (0..2).map(|_| None).chain(built.into_iter().map(Some)).collect();
                Some(cd)
            }
            _ => None,
        };
        Ok(FmmPlan {
            kernel,
            backend,
            origin,
            side,
            depth,
            src_pts: sk.iter().map(|&(_, i)| sources[i]).collect(),
            src_perm: sk.iter().map(|&(_, i)| i).collect(),
            tgt_pts: tk.iter().map(|&(_, i)| targets[i]).collect(),
            tgt_perm: tk.iter().map(|&(_, i)| i).collect(),
            levels,
            cheb,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.src_pts.len()
    }

    pub fn n_targets(&self) -> usize {
        self.tgt_pts.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    fn box_side(&self, l: u32) -> f64 {
        self.side / (1u64 << l) as f64
    }

    fn box_center(&self, l: u32, key: u64) -> Point {
        let (ix, iy) = demorton(key);
        let s = self.box_side(l);
        [self.origin[0] + (ix as f64 + 0.5) * s, self.origin[1] + (iy as f64 + 0.5) * s]
    }

    /// Potentials at the targets (original order) for the given charges.
    pub fn evaluate(&self, charges: &[f64]) -> Result<Vec<f64>, SummationError> {
        if charges.len() != self.src_pts.len() {
            return Err(SummationError::LengthMismatch { points: self.src_pts.len(), charges: charges.len() });
        }
        if let Some(i) = charges.iter().position(|q| !q.is_finite()) {
            return Err(SummationError::NonFinite(i));
        }
        let q: Vec<f64> = self.src_perm.iter().map(|&i| charges[i]).collect();
        let sorted = match self.backend {
            Backend::Laplace { p } => self.run_laplace(&q, p),
            Backend::Chebyshev { n } => self.run_chebyshev(&q, n),
        };
        let mut out = vec![0.0; sorted.len()];
        for (k, &i) in self.tgt_perm.iter().enumerate() {
            out[i] = sorted[k];
        }
        Ok(out)
    }

    /// Leaf-level near field: targets of each leaf against sources of the
    /// leaf and its eight neighbours.
    fn near_field(&self, q: &[f64], out: &mut [f64]) {
        let l = self.depth;
        let lev = &self.levels[l as usize];
        let n = 1i64 << l;
        let kernel = self.kernel;
        let res = crate::par::map(lev.keys.len(), |b| {
            let (t0, t1) = lev.tgt[b];
            let mut vals = vec![0.0; t1 - t0];
            if t1 == t0 {
                return vals;
            }
            let (bx, by) = demorton(lev.keys[b]);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(nb) = lev.find(bx + dx, by + dy, n) else { continue };
                    let (s0, s1) = lev.src[nb];
                    for (k, t) in self.tgt_pts[t0..t1].iter().enumerate() {
                        let mut acc = 0.0;
                        match kernel {
                            KernelKind::Laplace => {
                                for j in s0..s1 {
                                    let s = self.src_pts[j];
                                    let r2 = (t[0] - s[0]).powi(2) + (t[1] - s[1]).powi(2);
                                    if r2 > 0.0 {
                                        acc += q[j] * r2.ln();
                                    }
                                }
                                acc *= -0.5 * INV_2PI;
                            }
                            _ => {
                                for j in s0..s1 {
                                    let s = self.src_pts[j];
                                    let r = (t[0] - s[0]).hypot(t[1] - s[1]);
                                    if r > 0.0 {
                                        acc += q[j] * kernel.green(r);
                                    }
                                }
                            }
                        }
                        vals[k] += acc;
                    }
                }
            }
            vals
        });
        for (b, vals) in res.into_iter().enumerate() {
            let (t0, _) = lev.tgt[b];
            for (k, v) in vals.into_iter().enumerate() {
                out[t0 + k] += v;
            }
        }
    }

    /// Interaction list of box `b` at level `l`: children of the parent's
    /// neighbours that are not adjacent to `b` and hold sources.
    fn interaction_list(&self, l: u32, b: usize) -> Vec<(usize, i64, i64)> {
        let lev = &self.levels[l as usize];
        let n = 1i64 << l;
        let (bx, by) = demorton(lev.keys[b]);
        let (px, py) = (bx >> 1, by >> 1);
        let mut list = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                for cy in 0..2 {
                    for cx in 0..2 {
                        let ix = 2 * (px + dx) + cx;
                        let iy = 2 * (py + dy) + cy;
                        if (ix - bx).abs() <= 1 && (iy - by).abs() <= 1 {
                            continue;
                        }
                        if let Some(s) = lev.find(ix, iy, n) {
                            if lev.src[s].1 > lev.src[s].0 {
                                list.push((s, ix - bx, iy - by));
                            }
                        }
                    }
                }
            }
        }
        list
    }

    fn children(&self, l: u32, b: usize) -> Vec<(usize, usize)> {
        let child = &self.levels[l as usize + 1];
        let k = self.levels[l as usize].keys[b];
        (0..4u64).filter_map(|c| child.keys.binary_search(&((k << 2) | c)).ok().map(|i| (i, c as usize))).collect()
    }

    fn run_laplace(&self, q: &[f64], p: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.tgt_pts.len()];
        self.near_field(q, &mut out);
        if self.depth < 2 {
            return out;
        }
        let binom = binomials(2 * p + 2);
        let nl = self.levels.len();
        // upward pass
        let mut mpole: Vec<Vec<Vec<C64>>> = vec![Vec::new(); nl];
        let leaf = self.depth;
        {
            let lev = &self.levels[leaf as usize];
            mpole[leaf as usize] = crate::par::map(lev.keys.len(), |b| {
                let c = self.box_center(leaf, lev.keys[b]);
                let (s0, s1) = lev.src[b];
                let mut a = vec![C64::new(0.0, 0.0); p + 1];
                for j in s0..s1 {
                    let z = C64::new(self.src_pts[j][0] - c[0], self.src_pts[j][1] - c[1]);
                    a[0] += q[j];
                    let mut zk = C64::new(1.0, 0.0);
                    for (k, ak) in a.iter_mut().enumerate().skip(1) {
                        zk *= z;
                        *ak -= zk * (q[j] / k as f64);
                    }
                }
                a
            });
        }
        for l in (2..leaf).rev() {
            let lev = &self.levels[l as usize];
            let below = &mpole[l as usize + 1];
            let m = crate::par::map(lev.keys.len(), |b| {
                let c = self.box_center(l, lev.keys[b]);
                let mut a = vec![C64::new(0.0, 0.0); p + 1];
                if lev.src[b].1 == lev.src[b].0 {
                    return a;
                }
                for (ci, _) in self.children(l, b) {
                    let cc = self.box_center(l + 1, self.levels[l as usize + 1].keys[ci]);
                    let z0 = C64::new(cc[0] - c[0], cc[1] - c[1]);
                    m2m_laplace(&below[ci], z0, &binom, &mut a);
                }
                a
            });
            mpole[l as usize] = m;
        }
        // downward pass
        let mut local: Vec<Vec<C64>> = Vec::new();
        for l in 2..=leaf {
            let lev = &self.levels[l as usize];
            let parent_local = std::mem::take(&mut local);
            let parent_level = &self.levels[l as usize - 1];
            let mp = &mpole[l as usize];
            local = crate::par::map(lev.keys.len(), |b| {
                let mut loc = vec![C64::new(0.0, 0.0); p + 1];
                if lev.tgt[b].1 == lev.tgt[b].0 {
                    return loc;
                }
                let c = self.box_center(l, lev.keys[b]);
                if l > 2 {
                    let pk = lev.keys[b] >> 2;
                    if let Ok(pi) = parent_level.keys.binary_search(&pk) {
                        let pc = self.box_center(l - 1, pk);
                        let delta = C64::new(c[0] - pc[0], c[1] - pc[1]);
                        l2l_laplace(&parent_local[pi], delta, &binom, &mut loc);
                    }
                }
                for (s, _, _) in self.interaction_list(l, b) {
                    let sc = self.box_center(l, lev.keys[s]);
                    let z0 = C64::new(sc[0] - c[0], sc[1] - c[1]);
                    m2l_laplace(&mp[s], z0, &binom, &mut loc);
                }
                loc
            });
        }
        let lev = &self.levels[leaf as usize];
        for b in 0..lev.keys.len() {
            let (t0, t1) = lev.tgt[b];
            if t1 == t0 {
                continue;
            }
            let c = self.box_center(leaf, lev.keys[b]);
            for k in t0..t1 {
                let z = C64::new(self.tgt_pts[k][0] - c[0], self.tgt_pts[k][1] - c[1]);
                let mut s = C64::new(0.0, 0.0);
                for coef in local[b].iter().rev() {
                    s = s * z + coef;
                }
                out[k] += -INV_2PI * s.re;
            }
        }
        out
    }

    fn run_chebyshev(&self, q: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.tgt_pts.len()];
        self.near_field(q, &mut out);
        if self.depth < 2 {
            return out;
        }
        let cd = self.cheb.as_ref().expect("chebyshev data");
        let n2 = n * n;
        let nl = self.levels.len();
        let leaf = self.depth;
        let mut weights: Vec<Vec<Vec<f64>>> = vec![Vec::new(); nl];
        {
            let lev = &self.levels[leaf as usize];
            let half = 0.5 * self.box_side(leaf);
            weights[leaf as usize] = crate::par::map(lev.keys.len(), |b| {
                let c = self.box_center(leaf, lev.keys[b]);
                let (s0, s1) = lev.src[b];
                let mut w = vec![0.0; n2];
                let mut sx = vec![0.0; n];
                let mut sy = vec![0.0; n];
                for j in s0..s1 {
                    cd.s_row((self.src_pts[j][0] - c[0]) / half, &mut sx);
                    cd.s_row((self.src_pts[j][1] - c[1]) / half, &mut sy);
                    for iy in 0..n {
                        let f = q[j] * sy[iy];
                        for ix in 0..n {
                            w[iy * n + ix] += f * sx[ix];
                        }
                    }
                }
                w
            });
        }
        for l in (2..leaf).rev() {
            let lev = &self.levels[l as usize];
            let below = &weights[l as usize + 1];
            let m = crate::par::map(lev.keys.len(), |b| {
                let mut w = vec![0.0; n2];
                if lev.src[b].1 == lev.src[b].0 {
                    return w;
                }
                for (ci, quad) in self.children(l, b) {
                    let t = &cd.m2m[quad];
                    let wc = &below[ci];
                    for (i, wi) in w.iter_mut().enumerate() {
                        let row = &t[i * n2..(i + 1) * n2];
                        *wi += row.iter().zip(wc).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                w
            });
            weights[l as usize] = m;
        }
        let mut local: Vec<Vec<f64>> = Vec::new();
        for l in 2..=leaf {
            let lev = &self.levels[l as usize];
            let parent_local = std::mem::take(&mut local);
            let parent_level = &self.levels[l as usize - 1];
            let wl: Vec<Vec<f64>> = match cd.m2l.get(l as usize).and_then(|m| m.as_ref()) {
                Some(ml) => crate::par::map(lev.keys.len(), |b| {
                    if lev.src[b].1 == lev.src[b].0 {
                        Vec::new()
                    } else {
                        ml.compress(&weights[l as usize][b])
                    }
                }),
                None => Vec::new(),
            };
            local = crate::par::map(lev.keys.len(), |b| {
                let mut loc = vec![0.0; n2];
                if lev.tgt[b].1 == lev.tgt[b].0 {
                    return loc;
                }
                if l > 2 {
                    let pk = lev.keys[b] >> 2;
                    if let Ok(pi) = parent_level.keys.binary_search(&pk) {
                        let t = &cd.m2m[(lev.keys[b] & 3) as usize];
                        let pl = &parent_local[pi];
                        // transpose of the child-to-parent transfer
                        for (i, &v) in pl.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            let row = &t[i * n2..(i + 1) * n2];
                            for (o, a) in loc.iter_mut().zip(row) {
                                *o += v * a;
                            }
                        }
                    }
                }
                if let Some(ml) = cd.m2l.get(l as usize).and_then(|m| m.as_ref()) {
                    let r = ml.rank;
                    let mut g = vec![0.0; r];
                    for (s, dx, dy) in self.interaction_list(l, b) {
                        let c = &ml.c[&(dx, dy)];
                        let ws = &wl[s];
                        for (i, gi) in g.iter_mut().enumerate() {
                            let row = &c[i * r..(i + 1) * r];
                            *gi += row.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    for (i, o) in loc.iter_mut().enumerate() {
                        let row = &ml.u[i * r..(i + 1) * r];
                        *o += row.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                loc
            });
        }
        let lev = &self.levels[leaf as usize];
        let half = 0.5 * self.box_side(leaf);
        let mut sx = vec![0.0; n];
        let mut sy = vec![0.0; n];
        for b in 0..lev.keys.len() {
            let (t0, t1) = lev.tgt[b];
            let c = self.box_center(leaf, lev.keys[b]);
            for k in t0..t1 {
                cd.s_row((self.tgt_pts[k][0] - c[0]) / half, &mut sx);
                cd.s_row((self.tgt_pts[k][1] - c[1]) / half, &mut sy);
                let mut s = 0.0;
                for iy in 0..n {
                    let mut r = 0.0;
                    for ix in 0..n {
                        r += local[b][iy * n + ix] * sx[ix];
                    }
                    s += r * sy[iy];
                }
                out[k] += s;
            }
        }
        out
    }
}

impl ChebData {
    fn new(n: usize) -> Self {
        let nodes: Vec<f64> = (0..n).map(|k| ((2 * k + 1) as f64 * PI / (2 * n) as f64).cos()).collect();
        let mut cd = ChebData { n, nodes, m2m: Default::default(), m2l: Vec::new() };
        let n2 = n * n;
        let mut sx = vec![0.0; n];
        let mut sy = vec![0.0; n];
        for quad in 0..4 {
            let ox = if quad & 1 == 1 { 0.5 } else { -0.5 };
            let oy = if quad & 2 == 2 { 0.5 } else { -0.5 };
            let mut t = vec![0.0; n2 * n2];
            // child node i in parent coordinates: offset + node / 2
            for cy in 0..n {
                for cx in 0..n {
                    cd.s_row(ox + 0.5 * cd.nodes[cx], &mut sx);
                    cd.s_row(oy + 0.5 * cd.nodes[cy], &mut sy);
                    for py in 0..n {
                        for px in 0..n {
                            t[(py * n + px) * n2 + cy * n + cx] = sx[px] * sy[py];
                        }
                    }
                }
            }
            cd.m2m[quad] = t;
        }
        cd
    }

    /// `S_n(x_k, x) = 1/n + (2/n) Σ_{m≥1} T_m(x_k) T_m(x)` for all nodes `x_k`.
    fn s_row(&self, x: f64, out: &mut [f64]) {
        let n = self.n;
        let mut t = vec![0.0; n];
        crate::basis::chebyshev_into(n, x.clamp(-1.0, 1.0), &mut t);
        for (k, o) in out.iter_mut().enumerate() {
            let th = (2 * k + 1) as f64 * PI / (2 * n) as f64;
            let mut s = 0.5;
            for (m, tm) in t.iter().enumerate().skip(1) {
                s += (m as f64 * th).cos() * tm;
            }
            *o = 2.0 * s / n as f64;
        }
    }
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1.0;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j < i { c[i - 1][j] } else { 0.0 };
        }
    }
    c
}

/// Shift a multipole expansion about a child centre (offset `z0` from the
/// parent centre) and add it to `out`.
fn m2m_laplace(a: &[C64], z0: C64, binom: &[Vec<f64>], out: &mut [C64]) {
    let p = a.len() - 1;
    out[0] += a[0];
    let mut zp = vec![C64::new(1.0, 0.0); p + 1];
    for k in 1..=p {
        zp[k] = zp[k - 1] * z0;
    }
    for l in 1..=p {
        let mut s = -a[0] * zp[l] / l as f64;
        for k in 1..=l {
            s += a[k] * zp[l - k] * binom[l - 1][k - 1];
        }
        out[l] += s;
    }
}

/// Convert a multipole expansion centred at offset `z0` from the local
/// centre into a local expansion, added to `out`.
fn m2l_laplace(a: &[C64], z0: C64, binom: &[Vec<f64>], out: &mut [C64]) {
    let p = a.len() - 1;
    let inv = 1.0 / z0;
    // c_k = (-1)^k a_k / z0^k
    let mut c = vec![C64::new(0.0, 0.0); p + 1];
    let mut ip = C64::new(1.0, 0.0);
    for k in 1..=p {
        ip *= -inv;
        c[k] = a[k] * ip;
    }
    let mut b0 = a[0] * (-z0).ln();
    for ck in c.iter().skip(1) {
        b0 += ck;
    }
    out[0] += b0;
    let mut il = C64::new(1.0, 0.0);
    for l in 1..=p {
        il *= inv;
        let mut s = -a[0] / l as f64;
        for k in 1..=p {
            s += c[k] * binom[l + k - 1][k - 1];
        }
        out[l] += s * il;
    }
}

/// Re-centre a local expansion at offset `delta` from its centre.
fn l2l_laplace(b: &[C64], delta: C64, binom: &[Vec<f64>], out: &mut [C64]) {
    let p = b.len() - 1;
    let mut dp = vec![C64::new(1.0, 0.0); p + 1];
    for k in 1..=p {
        dp[k] = dp[k - 1] * delta;
    }
    for l in 0..=p {
        let mut s = C64::new(0.0, 0.0);
        for k in l..=p {
            s += b[k] * dp[k - l] * binom[k][l];
        }
        out[l] += s;
    }
}
