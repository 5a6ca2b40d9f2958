//! Randomized checks of structural invariants across the modules.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use volpot2d::basis::CellShape;
use volpot2d::bie::{assemble_nystrom, eval_layer_potential, Density};
use volpot2d::geometry::{MeshCell, ParametricCurve, Side};
use volpot2d::kernel::{eval_kernel, k0_unchecked, k1_unchecked, KernelKind};
use volpot2d::mesh::{Domain, HybridMesh, MeshOptions};
use volpot2d::potential::{build_operator, PotentialOptions};
use volpot2d::singular::{reduce_to_rays, RayOptions};
use volpot2d::summation::{accelerated_sum, direct_sum, SourceSet};
use volpot2d::Point;

fn kernels() -> impl Strategy<Value = KernelKind> {
    prop_oneof![Just(KernelKind::Laplace), (0.1..20.0f64).prop_map(|l| KernelKind::modified_helmholtz(l).unwrap())]
}

fn point(r: f64) -> impl Strategy<Value = Point> {
    [-r..r, -r..r]
}

fn disk_with_inclusion() -> Domain {
    Domain::new(
        vec![
            ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap(),
            ParametricCurve::ellipse([0.2, -0.1], 0.3, 0.2, 0.4, Side::Outside).unwrap(),
        ],
        None,
    )
    .unwrap()
}

fn shared_mesh() -> Arc<HybridMesh> {
    static MESH: OnceLock<Arc<HybridMesh>> = OnceLock::new();
    MESH.get_or_init(|| Arc::new(HybridMesh::build(&disk_with_inclusion(), 0.12, &MeshOptions::default()).unwrap()))
        .clone()
}

/// Uniform point of the reference cell from two unit samples.
fn reference_sample(shape: CellShape, a: f64, b: f64) -> Point {
    match shape {
        CellShape::Triangle if a + b > 1.0 => [1.0 - a, 1.0 - b],
        CellShape::Triangle => [a, b],
        CellShape::Box => [2.0 * a - 1.0, 2.0 * b - 1.0],
    }
}

fn in_closed_reference(shape: CellShape, z: Point, tol: f64) -> bool {
    match shape {
        CellShape::Triangle => z[0] >= -tol && z[1] >= -tol && z[0] + z[1] <= 1.0 + tol,
        CellShape::Box => z[0].abs() <= 1.0 + tol && z[1].abs() <= 1.0 + tol,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kernel_is_symmetric(k in kernels(), a in point(3.0), b in point(3.0)) {
        prop_assume!(a != b);
        prop_assert_eq!(eval_kernel(k, a, b).unwrap(), eval_kernel(k, b, a).unwrap());
    }

    #[test]
    fn kernel_is_translation_invariant(k in kernels(), a in point(3.0), b in point(3.0), v in point(10.0)) {
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        prop_assume!(d > 1e-3);
        let g = eval_kernel(k, a, b).unwrap();
        let gs = eval_kernel(k, [a[0] + v[0], a[1] + v[1]], [b[0] + v[0], b[1] + v[1]]).unwrap();
        // The shifted distance carries roundoff of order |v|·ε.
        let slope = k.green_dr(d).abs() * 1e-14 * 20.0;
        prop_assert!((g - gs).abs() <= slope + 1e-14 * g.abs(), "{} vs {}", g, gs);
    }

    #[test]
    fn k0_derivative_is_minus_k1(x in 0.05..30.0f64) {
        let h = 1e-4 * x.min(1.0);
        let d = (k0_unchecked(x + h) - k0_unchecked(x - h)) / (2.0 * h);
        prop_assert!((d + k1_unchecked(x)).abs() <= 1e-8 * k1_unchecked(x).max(1e-300), "x = {}", x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cell_map_round_trips(k in 0usize..10_000, a in 0.01..0.99f64, b in 0.01..0.99f64) {
        let mesh = shared_mesh();
        let cell = &mesh.cells[k % mesh.cells.len()];
        let z = reference_sample(cell.shape(), a, b);
        let r = cell.point(z);
        let back = cell.point(cell.invert(r).unwrap());
        let err = (back[0] - r[0]).hypot(back[1] - r[1]);
        prop_assert!(err <= 1e-12 * cell.diameter(), "cell {}: {}", k % mesh.cells.len(), err);
        prop_assert!(cell.jacobian(z) > 0.0);
    }

    #[test]
    fn star_point_is_the_closest_point(k in 0usize..10_000, t in point(0.6), seed in any::<u64>()) {
        let mesh = shared_mesh();
        let cell = &mesh.cells[k % mesh.n_triangles.max(1)];
        let c = cell.point(reference_sample(cell.shape(), 1.0 / 3.0, 1.0 / 3.0));
        let r0 = [c[0] + t[0] * cell.diameter(), c[1] + t[1] * cell.diameter()];
        let star = cell.star_point(r0);
        let mut s = seed;
        for _ in 0..2000 {
            // xorshift: cheap deterministic samples inside one proptest case
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            let a = (s >> 11) as f64 / (1u64 << 53) as f64;
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            let b = (s >> 11) as f64 / (1u64 << 53) as f64;
            let r = cell.point(reference_sample(cell.shape(), a, b));
            let d = (r[0] - r0[0]).hypot(r[1] - r0[1]);
            prop_assert!(star.d <= d + 1e-12, "{} > {}", star.d, d);
        }
    }

    #[test]
    fn ray_nodes_stay_in_the_reference_cell(k in 0usize..10_000, t in point(1.0)) {
        let mesh = shared_mesh();
        let cell: &MeshCell = &mesh.cells[k % mesh.cells.len()];
        let c = cell.point(reference_sample(cell.shape(), 0.3, 0.3));
        let r0 = [c[0] + t[0] * cell.diameter(), c[1] + t[1] * cell.diameter()];
        let star = cell.star_point(r0);
        let rq = reduce_to_rays(cell, &star, &RayOptions::default());
        prop_assert!(!rq.is_empty());
        for (z, _) in rq.nodes() {
            prop_assert!(in_closed_reference(cell.shape(), z, 1e-13), "{:?}", z);
        }
    }

    #[test]
    fn near_sets_are_bounded(t in point(1.0)) {
        let mesh = shared_mesh();
        prop_assume!(mesh.domain.contains(t));
        let c = mesh.classify(t).unwrap();
        prop_assert!(c.near_cells.len() <= 30, "{} near cells", c.near_cells.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tessellation_closes_with_random_inclusions(
        c in point(0.35), a in 0.15..0.3f64, ratio in 0.5..1.0f64, angle in 0.0..3.1f64, h in 0.06..0.12f64,
    ) {
        let dom = Domain::new(
            vec![
                ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap(),
                ParametricCurve::ellipse(c, a, a * ratio, angle, Side::Outside).unwrap(),
            ],
            None,
        )
        .unwrap();
        let mesh = HybridMesh::build(&dom, h, &MeshOptions::default()).unwrap();
        let rep = mesh.validate();
        prop_assert!(rep.relative_area_defect <= 1e-8, "defect {}", rep.relative_area_defect);
        prop_assert!(rep.min_jacobian > 0.0);
    }

    #[test]
    fn gauss_identity_on_random_curves(
        c in point(0.3), a in 0.5..1.5f64, ratio in 0.5..1.0f64, angle in 0.0..3.1f64,
        amp in 0.0..0.15f64, arms in 2u32..6, which in 0usize..2, t in 0.0..std::f64::consts::TAU, s in 0.0..0.5f64,
    ) {
        let curve = if which == 0 {
            ParametricCurve::ellipse(c, a, a * ratio, angle, Side::Inside).unwrap()
        } else {
            ParametricCurve::star(c, a, amp, arms, Side::Inside).unwrap()
        };
        let sys = assemble_nystrom(&[curve], KernelKind::Laplace, &[256]).unwrap();
        let d = Density { phi: vec![1.0; 256], charges: vec![], iterations: 0, residual: 0.0 };
        // A target on the segment from the centre, at most half way out.
        let e = curve.point(t);
        let x = [c[0] + s * (e[0] - c[0]), c[1] + s * (e[1] - c[1])];
        let u = eval_layer_potential(&sys, &d, &[x]).unwrap()[0];
        prop_assert!((u + 1.0).abs() <= 1e-11, "{}", u);
    }
}

fn sources(n: usize, seed: u64) -> Vec<Point> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accelerated_sum_is_linear(seed in any::<u64>(), k in kernels(), eps in prop_oneof![Just(1e-6), Just(1e-10)]) {
        let pts = sources(2000, seed);
        let targets = sources(300, seed ^ 1);
        let q1: Vec<f64> = sources(2000, seed ^ 2).iter().map(|p| p[0] - 0.5).collect();
        let q2: Vec<f64> = sources(2000, seed ^ 3).iter().map(|p| p[1] - 0.5).collect();
        let sum: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| a + b).collect();
        let run = |q: &[f64]| accelerated_sum(k, &SourceSet::new(pts.clone(), q.to_vec()).unwrap(), &targets, eps).unwrap();
        let (a, b, ab) = (run(&q1), run(&q2), run(&sum));
        let combined: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let scale = ab.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in ab.iter().zip(&combined) {
            prop_assert!((x - y).abs() <= 10.0 * eps * scale, "{} vs {}", x, y);
        }
    }

    #[test]
    fn accuracy_does_not_depend_on_charge_signs(seed in any::<u64>(), k in kernels()) {
        let pts = sources(3000, seed);
        let targets = sources(300, seed ^ 5);
        let mut s = seed | 1;
        let q: Vec<f64> = (0..pts.len())
            .map(|_| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                if s & 1 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let src = SourceSet::new(pts, q).unwrap();
        let fast = accelerated_sum(k, &src, &targets, 1e-10).unwrap();
        let exact = direct_sum(k, &src, &targets).unwrap();
        prop_assert!(rel_l2(&fast, &exact) <= 1e-9, "{}", rel_l2(&fast, &exact));
    }
}

#[test]
fn direct_sum_matches_a_plain_loop_bit_for_bit() {
    for k in [KernelKind::Laplace, KernelKind::modified_helmholtz(3.0).unwrap()] {
        let pts = sources(100, 11);
        let targets = sources(100, 12);
        let q: Vec<f64> = sources(100, 13).iter().map(|p| p[0] - p[1]).collect();
        let got = direct_sum(k, &SourceSet::new(pts.clone(), q.clone()).unwrap(), &targets).unwrap();
        for (i, t) in targets.iter().enumerate() {
            let mut s = 0.0;
            for (p, c) in pts.iter().zip(&q) {
                s += k.green((t[0] - p[0]).hypot(t[1] - p[1])) * c;
            }
            assert_eq!(got[i].to_bits(), s.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Sources outside the self and near cells of a target do not enter its
    /// correction.
    #[test]
    fn corrections_are_local(t in point(0.9), seed in any::<u64>()) {
        let mesh = shared_mesh();
        prop_assume!(mesh.domain.contains(t));
        let o = PotentialOptions { p: 3, ..Default::default() };
        let op = build_operator(mesh.clone(), KernelKind::Laplace, &o, &[t]).unwrap();
        let f: Vec<f64> = sources(op.ndofs(), seed).iter().map(|p| p[0] - 0.3 * p[1]).collect();
        let class = mesh.classify(t).unwrap();
        let mut keep = vec![false; mesh.cells.len()];
        for k in class.near_cells.iter().copied().chain(class.self_cell) {
            keep[k] = true;
        }
        let mut g = f.clone();
        for (k, &kept) in keep.iter().enumerate() {
            if !kept {
                for i in op.cell_dofs(k) {
                    g[i] = 0.0;
                }
            }
        }
        prop_assert_eq!(op.correct(&f)[0].to_bits(), op.correct(&g)[0].to_bits());
    }
}

/// A target sliding across near/far boundaries sees no jump: the constant
/// density potential on the unit disk stays at its closed form throughout.
#[test]
fn potential_is_continuous_across_the_near_boundary() {
    let dom = Domain::new(vec![ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap()], None).unwrap();
    let mesh = Arc::new(HybridMesh::build(&dom, 0.15, &MeshOptions::default()).unwrap());
    let o = PotentialOptions { p: 4, ..Default::default() };
    let op = build_operator(mesh, KernelKind::Laplace, &o, &[]).unwrap();
    let f = op.sample(|_| 1.0);
    let line: Vec<Point> = (0..800).map(|i| [-0.9 + 1.8 * i as f64 / 799.0, 0.137]).collect();
    let u = op.potential_at(&f, &line).unwrap();
    for (x, v) in line.iter().zip(&u) {
        let exact = (1.0 - x[0] * x[0] - x[1] * x[1]) / 4.0;
        assert!((v - exact).abs() <= 1e-9, "{x:?}: {v} vs {exact}");
    }
}
