//! Solve the manufactured Poisson problem on a disk with an elliptical hole
//! and print the maximum error on a grid.
//!
//! `cargo run --release --example disk_with_hole -- [h] [p]`

use std::sync::Arc;

use volpot2d::bie::{solve_bvp, BvpOptions};
use volpot2d::geometry::{ParametricCurve, Side};
use volpot2d::mesh::{Domain, HybridMesh, MeshOptions};
use volpot2d::problems::Problem;

fn main() -> Result<(), volpot2d::Error> {
    let mut args = std::env::args().skip(1);
    let h: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let p: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(6);

    let domain = Domain::new(
        vec![
            ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside)?,
            ParametricCurve::ellipse([-0.3, 0.35], 0.3, 0.18, 0.5, Side::Outside)?,
        ],
        None,
    )?;
    let mesh = Arc::new(HybridMesh::build(&domain, h, &MeshOptions::default())?);
    println!("h = {h}, p = {p}: {} triangles, {} boxes", mesh.n_triangles, mesh.n_boxes());

    let targets: Vec<_> = (0..40)
        .flat_map(|i| (0..40).map(move |j| [-0.95 + 1.9 * i as f64 / 39.0, -0.95 + 1.9 * j as f64 / 39.0]))
        .filter(|x| domain.contains(*x) && x[0].hypot(x[1]) < 0.97)
        .filter(|x| {
            let c = &domain.curves[1];
            (0..400).all(|k| {
                let q = c.point(k as f64 * std::f64::consts::TAU / 400.0);
                (q[0] - x[0]).hypot(q[1] - x[1]) > 0.03
            })
        })
        .collect();

    let prob = Problem::from_id("poisson-mfg1", None)?;
    let mut opts = BvpOptions::default();
    opts.potential.p = p;
    let sol = solve_bvp(mesh, prob.kernel()?, &opts, |x| prob.f(x), |x| prob.g(x), &targets)?;
    let err = targets.iter().zip(&sol.u).map(|(x, u)| (u - prob.exact(*x).unwrap()).abs()).fold(0.0, f64::max);
    println!("max error over {} points: {err:.3e}", targets.len());
    print!("{}", sol.stats.to_text());
    Ok(())
}
