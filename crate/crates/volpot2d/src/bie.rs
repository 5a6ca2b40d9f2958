//! Homogeneous Dirichlet solver: a Nyström discretization of the
//! second-kind double-layer equation on the boundary curves, its solution,
//! and evaluation of the resulting layer potential.
//!
//! With `ν` the normal pointing out of the region a curve encloses, the
//! interior limit of the double layer is `(−½ + D)φ` and the exterior limit
//! is `(+½ + D)φ`. Ω lies inside the enclosing curve and outside each
//! inclusion, which fixes the sign per curve. For the Laplace kernel each
//! inclusion also carries a point charge at its centre, with a zero-mean
//! constraint on its density, which removes the nullspace of the
//! multiply connected problem.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::geometry::{ParametricCurve, Side};
use crate::kernel::{bessel_i01, KernelKind};
use crate::mesh::HybridMesh;
use crate::potential::{
    build_operator, ApplyTiming, OperatorStats, PotentialError, PotentialOptions, VolumePotentialOperator,
};
use crate::{dist, Point};

#[derive(Debug, Error)]
pub enum BieError {
    #[error("boundary node count {0} must be even and at least 16")]
    BadNodeCount(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("the boundary value problem needs an enclosing curve")]
    NoEnclosingCurve,
    #[error("GMRES did not reach {tol:e} in {} iterations (last residual {:e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { tol: f64, history: Vec<f64> },
    #[error("dense solve failed: singular system")]
    Singular,
    #[error("target ({x}, {y}) is {dist:e} from the boundary, closer than {d_min:e}; refine or move it")]
    TooClose { x: f64, y: f64, dist: f64, d_min: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Fraction of a curve's diameter below which layer-potential evaluation
/// is refused.
pub const D_MIN_FRACTION: f64 = 0.005;
/// Targets within this many node spacings of a curve use an upsampled rule.
pub const NEAR_SPACINGS: f64 = 5.0;
/// Minimum upsampling factor of the density for close targets.
pub const UPSAMPLE: usize = 8;
/// Systems up to this size are solved by dense LU.
pub const DENSE_LIMIT: usize = 1024;
pub const MAX_GMRES_ITERATIONS: usize = 500;

/// One collocation node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub curve: usize,
    pub t: f64,
    pub point: Point,
    /// Unit normal pointing out of the region the curve encloses.
    pub normal: Point,
    /// `|γ'(t)|`.
    pub speed: f64,
    /// Signed curvature of the counterclockwise parametrization.
    pub curvature: f64,
}

/// The discretized second-kind system.
#[derive(Debug, Clone)]
pub struct BoundarySystem {
    pub kernel: KernelKind,
    pub curves: Vec<ParametricCurve>,
    pub n_per_curve: Vec<usize>,
    pub nodes: Vec<BoundaryNode>,
    /// Start of each curve's block in `nodes`.
    pub offsets: Vec<usize>,
    /// Curves carrying an auxiliary point charge, with its location.
    pub charges: Vec<(usize, Point)>,
    /// Square matrix over densities then charges.
    pub matrix: DMatrix<f64>,
    diameters: Vec<f64>,
}

/// Solution of the boundary system.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub phi: Vec<f64>,
    pub charges: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn curve_nodes(c: &ParametricCurve, id: usize, n: usize) -> Vec<BoundaryNode> {
    (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            let [p, d1, d2, _] = c.derivatives(t);
            let speed = d1[0].hypot(d1[1]);
            BoundaryNode {
                curve: id,
                t,
                point: p,
                normal: [d1[1] / speed, -d1[0] / speed],
                speed,
                curvature: (d1[0] * d2[1] - d1[1] * d2[0]) / speed.powi(3),
            }
        })
        .collect()
}

/// `∂G(x, y)/∂ν_y |γ'(s)|` for target `x` and source node `y`.
#[inline]
fn dl_kernel(kernel: KernelKind, x: Point, y: &BoundaryNode) -> f64 {
    kernel.double_layer(x, y.point, y.normal) * y.speed
}

/// Window on the log-split part of the modified Helmholtz kernel: flat at
/// `λr = 0`, zero for `λr ≥ 12`, C^∞ in between. Splitting with the bare
/// `I1(λr)` far from the diagonal subtracts two nearly equal terms of size
/// `I1(λ·diam)` and loses most digits once that is large.
fn split_window(rho: f64) -> f64 {
    const WIDTH: f64 = 12.0;
    if rho >= WIDTH {
        return 0.0;
    }
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let x = 1.0 - rho / WIDTH;
    f(x) / (f(x) + f(1.0 - x))
}

/// Kress weights `R_j` for the log-periodic part, by index difference.
fn kress_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (0..n)
        .map(|j| {
            let d = 2.0 * PI * j as f64 / n as f64;
            let mut s = 0.0;
            for m in 1..half {
                s += (m as f64 * d).cos() / m as f64;
            }
            -4.0 * PI / n as f64 * s - 4.0 * PI / (n * n) as f64 * (half as f64 * d).cos()
        })
        .collect()
}

/// Assemble `(∓½ I + D)` with the Laplace charge augmentation.
pub fn assemble_nystrom(
    curves: &[ParametricCurve],
    kernel: KernelKind,
    n_per_curve: &[usize],
) -> Result<BoundarySystem, BieError> {
    if n_per_curve.len() != curves.len() {
        return Err(BieError::LengthMismatch { expected: curves.len(), got: n_per_curve.len() });
    }
    if let Some(&n) = n_per_curve.iter().find(|&&n| n < 16 || n % 2 == 1) {
        return Err(BieError::BadNodeCount(n));
    }
    let mut nodes = Vec::new();
    let mut offsets = vec![0];
    for (i, (c, &n)) in curves.iter().zip(n_per_curve).enumerate() {
        nodes.extend(curve_nodes(c, i, n));
        offsets.push(nodes.len());
    }
    let charges: Vec<(usize, Point)> = match kernel {
        KernelKind::Laplace => {
            curves.iter().enumerate().filter(|(_, c)| c.side == Side::Outside).map(|(i, c)| (i, c.center())).collect()
        }
        _ => Vec::new(),
    };
    let nn = nodes.len();
    let size = nn + charges.len();
    let kress: Vec<Vec<f64>> = n_per_curve.iter().map(|&n| kress_weights(n)).collect();
    let rows = crate::par::map(nn, |i| {
        let xi = &nodes[i];
        let ci = xi.curve;
        let mut row = vec![0.0; size];
        for (j, yj) in nodes.iter().enumerate() {
            let cj = yj.curve;
            let n = n_per_curve[cj];
            let w = 2.0 * PI / n as f64;
            if ci != cj {
                row[j] = w * dl_kernel(kernel, xi.point, yj);
                continue;
            }
            // the diagonal limit is shared by both kernels
            let diag = -xi.curvature * xi.speed / (4.0 * PI);
            match kernel {
                KernelKind::Laplace => {
                    row[j] = w * if i == j { diag } else { dl_kernel(kernel, xi.point, yj) };
                }
                KernelKind::ModifiedHelmholtz { lambda } => {
                    let (li, lj) = (i - offsets[ci], j - offsets[cj]);
                    let rw = kress[cj][(li + n - lj) % n];
                    if i == j {
                        row[j] = w * diag;
                    } else {
                        let d = [yj.point[0] - xi.point[0], yj.point[1] - xi.point[1]];
                        let r = d[0].hypot(d[1]);
                        let proj = (d[0] * yj.normal[0] + d[1] * yj.normal[1]) * yj.speed / r;
                        let k = kernel.green_dr(r) * proj;
                        let k1 = -lambda * bessel_i01(lambda * r).1 * proj / (4.0 * PI) * split_window(lambda * r);
                        let s = ((xi.t - yj.t) * 0.5).sin();
                        let k2 = k - k1 * (4.0 * s * s).ln();
                        row[j] = rw * k1 + w * k2;
                    }
                }
            }
        }
        row[i] += match curves[ci].side {
            Side::Inside => -0.5,
            Side::Outside => 0.5,
        };
        for (a, &(_, z)) in charges.iter().enumerate() {
            row[nn + a] = kernel.green(dist(xi.point, z));
        }
        row
    });
    let mut matrix = DMatrix::zeros(size, size);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            matrix[(i, j)] = *v;
        }
    }
    // zero-mean density on each charged curve
    for (a, &(c, _)) in charges.iter().enumerate() {
        let w = 2.0 * PI / n_per_curve[c] as f64;
        for j in offsets[c]..offsets[c + 1] {
            matrix[(nn + a, j)] = w * nodes[j].speed;
        }
    }
    let diameters = (0..curves.len())
        .map(|c| {
            let pts = &nodes[offsets[c]..offsets[c + 1]];
            let mut m: f64 = 0.0;
            for a in pts {
                for b in pts.iter().step_by((pts.len() / 64).max(1)) {
                    m = m.max(dist(a.point, b.point));
                }
            }
            m
        })
        .collect();
    Ok(BoundarySystem {
        kernel,
        curves: curves.to_vec(),
        n_per_curve: n_per_curve.to_vec(),
        nodes,
        offsets,
        charges,
        matrix,
        diameters,
    })
}

impl BoundarySystem {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn node_points(&self) -> Vec<Point> {
        self.nodes.iter().map(|n| n.point).collect()
    }

    /// Closest approach of each curve's node set, used for the near test.
    pub fn diameter(&self, curve: usize) -> f64 {
        self.diameters[curve]
    }
}

/// Solve the system for boundary data `rhs` at the nodes.
pub fn solve_density(system: &BoundarySystem, rhs: &[f64], tol: f64) -> Result<Density, BieError> {
    let nn = system.n_nodes();
    if rhs.len() != nn {
        return Err(BieError::LengthMismatch { expected: nn, got: rhs.len() });
    }
    let mut b = DVector::zeros(system.size());
    for (i, v) in rhs.iter().enumerate() {
        b[i] = *v;
    }
    let bnorm = b.norm();
    let (x, iterations) = if bnorm == 0.0 {
        (DVector::zeros(system.size()), 0)
    } else if system.size() <= DENSE_LIMIT {
        let x = system.matrix.clone().lu().solve(&b).ok_or(BieError::Singular)?;
        (x, 0)
    } else {
        gmres(&system.matrix, &b, tol, MAX_GMRES_ITERATIONS)?
    };
    let residual = if bnorm == 0.0 { 0.0 } else { (&system.matrix * &x - &b).norm() / bnorm };
    Ok(Density {
        phi: x.rows(0, nn).iter().copied().collect(),
        charges: x.rows(nn, system.charges.len()).iter().copied().collect(),
        iterations,
        residual,
    })
}

/// Unrestarted GMRES from a zero initial guess.
fn gmres(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(DVector<f64>, usize), BieError> {
    let n = b.len();
    let beta = b.norm();
    let mut v: Vec<DVector<f64>> = vec![b / beta];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut history = Vec::new();
    for k in 0..max_iter.min(n) {
        let mut w = a * &v[k];
        let mut col = vec![0.0; k + 2];
        for (i, vi) in v.iter().enumerate() {
            col[i] = w.dot(vi);
            w.axpy(-col[i], vi, 1.0);
        }
        // second pass keeps the basis orthogonal at tight tolerances
        for (i, vi) in v.iter().enumerate() {
            let c = w.dot(vi);
            col[i] += c;
            w.axpy(-c, vi, 1.0);
        }
        col[k + 1] = w.norm();
        for i in 0..k {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let r = col[k].hypot(col[k + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (col[k] / r, col[k + 1] / r) };
        col[k] = r;
        col[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[k]);
        g[k] *= c;
        h.push(col);
        let res = g[k + 1].abs() / beta;
        history.push(res);
        let hn = w.norm();
        if res <= tol || hn == 0.0 || k + 1 == n {
            let m = k + 1;
            let mut y = vec![0.0; m];
            for i in (0..m).rev() {
                let mut s = g[i];
                for j in i + 1..m {
                    s -= h[j][i] * y[j];
                }
                y[i] = s / h[i][i];
            }
            let mut x = DVector::zeros(n);
            for (yi, vi) in y.iter().zip(&v) {
                x.axpy(*yi, vi, 1.0);
            }
            return Ok((x, m));
        }
        v.push(w / hn);
    }
    Err(BieError::NoConvergence { tol, history })
}

/// Trigonometric interpolation of periodic samples onto `m` times as many
/// equispaced points.
fn upsample(values: &[f64], m: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = values.len();
    let big = n * m;
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut pad = vec![Complex::new(0.0, 0.0); big];
    let half = n / 2;
    pad[..half].copy_from_slice(&buf[..half]);
    for k in half + 1..n {
        pad[big - (n - k)] = buf[k];
    }
    pad[half] = buf[half] * 0.5;
    pad[big - half] = buf[half] * 0.5;
    planner.plan_fft_inverse(big).process(&mut pad);
    pad.iter().map(|c| c.re / n as f64).collect()
}

/// `u_H` at interior targets.
pub fn eval_layer_potential(
    system: &BoundarySystem,
    density: &Density,
    targets: &[Point],
) -> Result<Vec<f64>, BieError> {
    if density.phi.len() != system.n_nodes() {
        return Err(BieError::LengthMismatch { expected: system.n_nodes(), got: density.phi.len() });
    }
    let kernel = system.kernel;
    let ncurves = system.curves.len();
    // per target and curve: distance and local node spacing at the closest node
    let near: Vec<Vec<(f64, f64)>> = crate::par::map(targets.len(), |i| {
        (0..ncurves)
            .map(|c| {
                let nodes = &system.nodes[system.offsets[c]..system.offsets[c + 1]];
                let h = 2.0 * PI / nodes.len() as f64;
                let mut best = (f64::INFINITY, 0.0);
                for nd in nodes {
                    let d = dist(nd.point, targets[i]);
                    if d < best.0 {
                        best = (d, nd.speed * h);
                    }
                }
                best
            })
            .collect()
    });
    for (i, row) in near.iter().enumerate() {
        for (c, &(d, _)) in row.iter().enumerate() {
            let d_min = D_MIN_FRACTION * system.diameters[c];
            if d < d_min {
                return Err(BieError::TooClose { x: targets[i][0], y: targets[i][1], dist: d, d_min });
            }
        }
    }
    // upsampled node sets per (curve, factor), built on demand
    let mut factors: Vec<Vec<usize>> = vec![Vec::new(); ncurves];
    let factor_of = |d: f64, hg: f64| -> usize {
        if d >= NEAR_SPACINGS * hg {
            1
        } else {
            let m = ((NEAR_SPACINGS * hg / d).ceil() as usize).max(UPSAMPLE);
            m.next_power_of_two().min(256)
        }
    };
    for row in &near {
        for (c, &(d, hg)) in row.iter().enumerate() {
            let m = factor_of(d, hg);
            if m > 1 && !factors[c].contains(&m) {
                factors[c].push(m);
            }
        }
    }
    let mut planner = FftPlanner::new();
    let mut fine: Vec<Vec<(usize, Vec<BoundaryNode>, Vec<f64>)>> = vec![Vec::new(); ncurves];
    for c in 0..ncurves {
        let phi = &density.phi[system.offsets[c]..system.offsets[c + 1]];
        for &m in &factors[c] {
            let nodes = curve_nodes(&system.curves[c], c, phi.len() * m);
            fine[c].push((m, nodes, upsample(phi, m, &mut planner)));
        }
    }
    let out = crate::par::map(targets.len(), |i| {
        let x = targets[i];
        let mut u = 0.0;
        for c in 0..ncurves {
            let (d, hg) = near[i][c];
            let m = factor_of(d, hg);
            let (nodes, phi): (&[BoundaryNode], &[f64]) = if m == 1 {
                (
                    &system.nodes[system.offsets[c]..system.offsets[c + 1]],
                    &density.phi[system.offsets[c]..system.offsets[c + 1]],
                )
            } else {
                let f = fine[c].iter().find(|f| f.0 == m).expect("upsampled set");
                (&f.1, &f.2)
            };
            let w = 2.0 * PI / nodes.len() as f64;
            let mut s = 0.0;
            for (nd, ph) in nodes.iter().zip(phi) {
                s += dl_kernel(kernel, x, nd) * ph;
            }
            u += w * s;
        }
        for (a, &(_, z)) in system.charges.iter().enumerate() {
            u += density.charges[a] * kernel.green(dist(x, z));
        }
        u
    });
    Ok(out)
}

/// Parameters of the combined volume + boundary solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpOptions {
    pub potential: PotentialOptions,
    /// Boundary nodes per curve; `None` uses [`default_nodes`].
    pub n_per_curve: Option<usize>,
    pub tol: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { potential: PotentialOptions::default(), n_per_curve: None, tol: 1e-14 }
    }
}

/// Result of [`solve_bvp`].
#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub u: Vec<f64>,
    pub u_p: Vec<f64>,
    pub u_h: Vec<f64>,
    pub density: Density,
    pub stats: OperatorStats,
    pub timing: ApplyTiming,
    pub n_boundary: usize,
    /// The volume operator, kept for table dumps and reuse.
    pub operator: Arc<VolumePotentialOperator>,
}

/// Boundary nodes per curve used by [`solve_bvp`] by default: four per
/// mesh spacing, and ten per unit of `λ·length` so that the `1/λ` kernel
/// scale is resolved.
pub fn default_nodes(curve: &ParametricCurve, h: f64, kernel: KernelKind) -> usize {
    let len = curve.total_length();
    let mut n = (4.0 * len / h).ceil() as usize;
    if let KernelKind::ModifiedHelmholtz { lambda } = kernel {
        n = n.max((10.0 * lambda * len).ceil() as usize);
    }
    n.max(64).div_ceil(2) * 2
}

/// Solve `L u = f` in Ω with `u = g` on Γ and return `u` at `targets`.
pub fn solve_bvp(
    mesh: Arc<HybridMesh>,
    kernel: KernelKind,
    opts: &BvpOptions,
    f: impl Fn(Point) -> f64 + Sync,
    g: impl Fn(Point) -> f64,
    targets: &[Point],
) -> Result<BvpSolution, BieError> {
    let curves = mesh.domain.curves.clone();
    if !mesh.domain.is_curve_bounded() {
        return Err(BieError::NoEnclosingCurve);
    }
    let n_per: Vec<usize> =
        curves.iter().map(|c| opts.n_per_curve.unwrap_or_else(|| default_nodes(c, mesh.h, kernel))).collect();
    let system = assemble_nystrom(&curves, kernel, &n_per)?;
    let bpts = system.node_points();
    let nb = bpts.len();
    let mut all = bpts.clone();
    all.extend_from_slice(targets);
    let op = build_operator(mesh, kernel, &opts.potential, &all)?;
    let fs = op.sample(f);
    let (up, timing) = op.apply_timed(&fs)?;
    let rhs: Vec<f64> = bpts.iter().zip(&up).map(|(x, v)| g(*x) - v).collect();
    let density = solve_density(&system, &rhs, opts.tol)?;
    let u_h = eval_layer_potential(&system, &density, targets)?;
    let u_p = up[nb..].to_vec();
    let u = u_p.iter().zip(&u_h).map(|(a, b)| a + b).collect();
    Ok(BvpSolution {
        u,
        u_p,
        u_h,
        density,
        stats: op.stats(Some(timing)),
        timing,
        n_boundary: nb,
        operator: Arc::new(op),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_circle() -> ParametricCurve {
        ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap()
    }

    fn point_source(x: Point) -> f64 {
        -(dist(x, [2.0, 0.0])).ln() / (2.0 * PI)
    }

    #[test]
    fn circle_rows_annihilate_constants() {
        let sys = assemble_nystrom(&[unit_circle()], KernelKind::Laplace, &[64]).unwrap();
        for i in 0..64 {
            let s: f64 = sys.matrix.row(i).iter().sum();
            // (−½ + D)[1] = −1 on the boundary from inside
            assert!((s + 1.0).abs() < 1e-12, "row {i}: {s}");
            let w = 2.0 * PI / 64.0;
            assert!((sys.matrix[(i, i)] + 0.5 + w / (4.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn gauss_identity_inside() {
        let sys = assemble_nystrom(&[unit_circle()], KernelKind::Laplace, &[64]).unwrap();
        let d = Density { phi: vec![1.0; 64], charges: vec![], iterations: 0, residual: 0.0 };
        let u = eval_layer_potential(&sys, &d, &[[0.0, 0.0], [0.5, 0.3], [0.9, 0.0]]).unwrap();
        for v in u {
            assert!((v + 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn point_source_data_is_recovered() {
        let sys = assemble_nystrom(&[unit_circle()], KernelKind::Laplace, &[128]).unwrap();
        let rhs: Vec<f64> = sys.node_points().iter().map(|x| point_source(*x)).collect();
        let d = solve_density(&sys, &rhs, 1e-14).unwrap();
        let t = [[0.3, 0.1], [0.0, 0.0], [-0.5, 0.7]];
        let u = eval_layer_potential(&sys, &d, &t).unwrap();
        for (x, v) in t.iter().zip(u) {
            assert!((v - point_source(*x)).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_polynomial_is_recovered() {
        let sys = assemble_nystrom(&[unit_circle()], KernelKind::Laplace, &[64]).unwrap();
        let g = |x: Point| x[0] * x[0] - x[1] * x[1];
        let rhs: Vec<f64> = sys.node_points().iter().map(|x| g(*x)).collect();
        let d = solve_density(&sys, &rhs, 1e-14).unwrap();
        let t = [[0.2, -0.4], [0.95, 0.0], [0.0, 0.97]];
        let u = eval_layer_potential(&sys, &d, &t).unwrap();
        for (x, v) in t.iter().zip(u) {
            assert!((v - g(*x)).abs() < 1e-10, "{x:?}: {}", v - g(*x));
        }
    }

    #[test]
    fn modified_helmholtz_constant_data() {
        // u = I0(λr)/I0(λ) solves the problem with g ≡ 1; with λ = 10 the
        // unwindowed log split loses about eight digits here
        let lam = 10.0;
        let k = KernelKind::modified_helmholtz(lam).unwrap();
        let sys = assemble_nystrom(&[unit_circle()], k, &[512]).unwrap();
        let d = solve_density(&sys, &[1.0; 512], 1e-14).unwrap();
        let t: Vec<Point> = [0.0, 0.5, 0.9, 0.97].iter().map(|r| [r * 0.6, r * 0.8]).collect();
        let u = eval_layer_potential(&sys, &d, &t).unwrap();
        for (x, v) in t.iter().zip(u) {
            let r = x[0].hypot(x[1]);
            let want = bessel_i01(lam * r).0 / bessel_i01(lam).0;
            assert!((v - want).abs() < 1e-12, "r = {r}: {}", v - want);
        }
    }

    #[test]
    fn inclusion_point_source_laplace() {
        // source inside the inclusion: not representable by the double layer
        // alone, so the log charge must pick it up
        let curves = [unit_circle(), ParametricCurve::ellipse([0.2, 0.1], 0.3, 0.2, 0.5, Side::Outside).unwrap()];
        let z = [0.25, 0.12];
        let g = |x: Point| -(dist(x, z)).ln() / (2.0 * PI);
        let sys = assemble_nystrom(&curves, KernelKind::Laplace, &[128, 128]).unwrap();
        let rhs: Vec<f64> = sys.node_points().iter().map(|x| g(*x)).collect();
        let d = solve_density(&sys, &rhs, 1e-14).unwrap();
        let t = [[-0.5, -0.3], [0.0, 0.7], [0.6, -0.5]];
        let u = eval_layer_potential(&sys, &d, &t).unwrap();
        for (x, v) in t.iter().zip(u) {
            assert!((v - g(*x)).abs() < 1e-12, "{x:?}: {}", v - g(*x));
        }
        assert!((d.charges[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ellipse_modified_helmholtz_converges_spectrally() {
        let e = ParametricCurve::ellipse([0.0, 0.0], 1.0, 0.6, 0.3, Side::Inside).unwrap();
        let k = KernelKind::modified_helmholtz(3.0).unwrap();
        let src = [1.4, 0.5];
        let g = |x: Point| k.green(dist(x, src));
        let t = [[0.2, 0.1], [-0.6, -0.2]];
        let err = |n: usize| {
            let sys = assemble_nystrom(&[e], k, &[n]).unwrap();
            let rhs: Vec<f64> = sys.node_points().iter().map(|x| g(*x)).collect();
            let d = solve_density(&sys, &rhs, 1e-14).unwrap();
            let u = eval_layer_potential(&sys, &d, &t).unwrap();
            t.iter().zip(u).map(|(x, v)| (v - g(*x)).abs()).fold(0.0, f64::max)
        };
        let (e32, e64, e128) = (err(32), err(64), err(128));
        assert!(e64 < 0.1 * e32 || e64 < 1e-13, "{e32:e} {e64:e}");
        assert!(e128 < 1e-12, "{e128:e}");
    }

    #[test]
    fn zero_rhs_gives_zero_density() {
        let sys = assemble_nystrom(&[unit_circle()], KernelKind::Laplace, &[32]).unwrap();
        let d = solve_density(&sys, &[0.0; 32], 1e-14).unwrap();
        assert!(d.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_matches_lu() {
        let curves = [unit_circle(), ParametricCurve::ellipse([0.3, 0.1], 0.3, 0.15, 0.4, Side::Outside).unwrap()];
        let sys = assemble_nystrom(&curves, KernelKind::Laplace, &[96, 64]).unwrap();
        let rhs: Vec<f64> = sys.node_points().iter().map(|x| point_source(*x)).collect();
        let mut b = DVector::zeros(sys.size());
        for (i, v) in rhs.iter().enumerate() {
            b[i] = *v;
        }
        let lu = sys.matrix.clone().lu().solve(&b).unwrap();
        let (x, it) = gmres(&sys.matrix, &b, 1e-14, 500).unwrap();
        assert!(it < 100);
        assert!((x - lu).amax() < 1e-11);
    }

    #[test]
    fn too_close_targets_rejected() {
        let sys = assemble_nystrom(&[unit_circle()], KernelKind::Laplace, &[64]).unwrap();
        let d = Density { phi: vec![1.0; 64], charges: vec![], iterations: 0, residual: 0.0 };
        assert!(matches!(eval_layer_potential(&sys, &d, &[[0.999, 0.0]]), Err(BieError::TooClose { .. })));
    }

    #[test]
    fn upsampling_is_exact_for_trigonometric_data() {
        let n = 16;
        let v: Vec<f64> = (0..n).map(|j| (3.0 * 2.0 * PI * j as f64 / n as f64).cos() + 0.5).collect();
        let up = upsample(&v, 4, &mut FftPlanner::new());
        for (j, u) in up.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / (4 * n) as f64;
            assert!((u - (3.0 * t).cos() - 0.5).abs() < 1e-14);
        }
    }
}
