//! Wall-clock comparison of the rayon paths against the sequential
//! fallback, on direct summation, correction assembly and operator apply.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volpot2d::geometry::{ParametricCurve, Side};
use volpot2d::kernel::KernelKind;
use volpot2d::mesh::{Domain, HybridMesh, MeshOptions};
use volpot2d::par;
use volpot2d::potential::{build_operator, PotentialOptions};
use volpot2d::problems::mfg_f;
use volpot2d::summation::{direct_sum, SourceSet};

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn disk_mesh(h: f64) -> Arc<HybridMesh> {
    let dom = Domain::new(vec![ParametricCurve::circle([0.0, 0.0], 1.0, Side::Inside).unwrap()], None).unwrap();
    Arc::new(HybridMesh::build(&dom, h, &MeshOptions::default()).unwrap())
}

fn bench_direct_sum(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<_> = (0..4000).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let q: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let targets: Vec<_> = (0..1000).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let src = SourceSet::new(pts, q).unwrap();
    let mut g = c.benchmark_group("direct_sum");
    for (name, seq) in MODES {
        g.bench_function(BenchmarkId::new(name, "4000x1000"), |b| {
            par::set_sequential(seq);
            b.iter(|| direct_sum(KernelKind::Laplace, &src, &targets).unwrap());
        });
    }
    par::set_sequential(false);
    g.finish();
}

fn bench_operator(c: &mut Criterion) {
    let mesh = disk_mesh(0.1);
    let opts = PotentialOptions { p: 4, dof_targets: true, ..Default::default() };
    let mut g = c.benchmark_group("operator");
    g.sample_size(10);
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::new("build", name), |b| {
            b.iter(|| build_operator(mesh.clone(), KernelKind::Laplace, &opts, &[]).unwrap());
        });
        let op = build_operator(mesh.clone(), KernelKind::Laplace, &opts, &[]).unwrap();
        let f = op.sample(mfg_f);
        g.bench_function(BenchmarkId::new("correct", name), |b| b.iter(|| op.correct(&f)));
        g.bench_function(BenchmarkId::new("apply", name), |b| b.iter(|| op.apply(&f).unwrap()));
    }
    par::set_sequential(false);
    g.finish();
}

criterion_group!(benches, bench_direct_sum, bench_operator);
criterion_main!(benches);
