mod common;

use common::{affine_inverse, cartesian_oracle, koornwinder_naive, polar_oracle, P};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volpot2d::basis::{self, CellShape};
use volpot2d::geometry::MeshCell;
use volpot2d::kernel::KernelKind;
use volpot2d::singular::{build_reference_tables, cell_correction_row, integrate_kernel, reduce_to_rays, RayOptions};

const TRI: [P; 3] = [[-0.618, -0.312], [-0.825, -0.311], [-0.802, -0.516]];

fn laplace(r: f64) -> f64 {
    -r.ln() / (2.0 * std::f64::consts::PI)
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_cell_rule_matches_polar_oracle_p4() {
    let p = 4;
    let cell = MeshCell::straight(TRI).unwrap();
    let tables = build_reference_tables(CellShape::Triangle, p, &RayOptions::default()).unwrap();
    let nodes = basis::triangle_nodes(p).unwrap().nodes.clone();
    let mut worst: f64 = 0.0;
    for (i, z) in nodes.iter().enumerate() {
        let r0 = cell.point(*z);
        let got = cell_correction_row(&cell, r0, Some(i), &tables, KernelKind::Laplace).unwrap();
        let f = |r: P| koornwinder_naive(p, affine_inverse(TRI, r));
        let want = polar_oracle(&TRI, r0, &laplace, &f, 1e-14);
        worst = worst.max(max_err(&got, &want));
    }
    eprintln!("table max error {worst:e}");
    assert!(worst <= 5e-13, "max error {worst:e}");
}

#[test]
fn log_kernel_at_random_star_points() {
    // identity triangle: physical and reference coordinates coincide
    let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let cell = MeshCell::straight(v).unwrap();
    let o = RayOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = |r: f64| r.ln();
    for _ in 0..10 {
        let (a, b): (f64, f64) = (rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
        let z0 = if a + b < 1.0 { [a, b] } else { [1.0 - a, 1.0 - b] };
        let rq = reduce_to_rays(&cell, &cell.star_point(z0), &o);
        let rho = |z: P| 1.0 + z[0] - 2.0 * z[1] * z[1] + 3.0 * z[0] * z[1];
        let got: f64 = rq
            .nodes()
            .map(|(chi, w)| w * g(((chi[0] - z0[0]).powi(2) + (chi[1] - z0[1]).powi(2)).sqrt()) * rho(chi))
            .sum();
        let want = polar_oracle(&v, z0, &g, &|r| vec![rho(r)], 1e-14)[0];
        assert!((got - want).abs() <= 1e-10, "{z0:?}: {got} vs {want}");
    }
}

#[test]
fn near_singular_accuracy_holds_as_distance_shrinks() {
    let p = 5;
    let cell = MeshCell::straight(TRI).unwrap();
    let tables = build_reference_tables(CellShape::Triangle, p, &RayOptions::default()).unwrap();
    // outward normal of the edge v0 -> v1, foot at 40% along it
    let t = [TRI[1][0] - TRI[0][0], TRI[1][1] - TRI[0][1]];
    let len = t[0].hypot(t[1]);
    let n = [t[1] / len, -t[0] / len];
    let foot = [TRI[0][0] + 0.4 * t[0], TRI[0][1] + 0.4 * t[1]];
    let f = |r: P| koornwinder_naive(p, affine_inverse(TRI, r));
    for k in 1..=8 {
        let d = 10f64.powi(-k);
        let r0 = [foot[0] + d * n[0], foot[1] + d * n[1]];
        let got = cell_correction_row(&cell, r0, None, &tables, KernelKind::Laplace).unwrap();
        let want = cartesian_oracle(TRI, r0, &laplace, &f, 1e-14);
        let e = max_err(&got, &want);
        eprintln!("d = {d:e}: error {e:e}");
        assert!(e <= 1e-10, "d = {d:e}: error {e:e}");
    }
}

#[test]
fn snapping_to_the_star_grid_is_harmless() {
    let p = 6;
    let cell = MeshCell::straight(TRI).unwrap();
    let o = RayOptions::default();
    let tables = build_reference_tables(CellShape::Triangle, p, &o).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let verts = cell.vertices();
    let mut snapped = 0;
    for _ in 0..40 {
        let e = rng.gen_range(0..3);
        let s: f64 = rng.gen_range(0.02..0.98);
        let a = verts[e];
        let b = verts[(e + 1) % 3];
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = t[0].hypot(t[1]);
        let n = [t[1] / len, -t[0] / len];
        let d = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let r0 = [a[0] + s * t[0] + d * n[0], a[1] + s * t[1] + d * n[1]];
        let star = cell.star_point(r0);
        let before = tables.n_near_cached();
        let looked = tables.rule_for(&cell, r0, &star);
        if tables.n_near_cached() > before || looked.star != star.zeta {
            snapped += 1;
        }
        let mut a1 = vec![0.0; p * (p + 1) / 2];
        integrate_kernel(&looked, &cell, r0, KernelKind::Laplace, p, &mut a1);
        let direct = reduce_to_rays(&cell, &star, &o);
        let mut a2 = vec![0.0; a1.len()];
        integrate_kernel(&direct, &cell, r0, KernelKind::Laplace, p, &mut a2);
        assert!(max_err(&a1, &a2) <= 1e-9);
    }
    assert!(snapped > 0);
}

#[test]
fn box_self_entry_matches_oracle() {
    // with h = 2 the box is the reference square
    let p = 4;
    let tables = build_reference_tables(CellShape::Box, p, &RayOptions::default()).unwrap();
    let bt = volpot2d::singular::build_box_table(KernelKind::Laplace, 2.0, 1, &tables).unwrap();
    let nodes = basis::box_nodes(p).unwrap().nodes.clone();
    for (i, z0) in nodes.iter().enumerate() {
        let got = bt.get((0, 0), i).unwrap()[0];
        let sq = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        let want = polar_oracle(&sq, *z0, &laplace, &|_| vec![1.0], 1e-14)[0];
        assert!((got - want).abs() <= 1e-12, "node {i}: {got} vs {want}");
    }
}
