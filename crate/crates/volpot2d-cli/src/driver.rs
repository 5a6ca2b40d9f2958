//! Solves, studies and the files they produce.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use volpot2d::bie::{solve_bvp, BvpOptions};
use volpot2d::kernel::KernelKind;
use volpot2d::mesh::{Domain, HybridMesh, MeshOptions, MeshReport};
use volpot2d::potential::{build_operator, OperatorStats, PotentialOptions, VolumePotentialOperator};
use volpot2d::Point;

use crate::config::{RunConfig, Source, Targets};
use crate::output::write_atomic;
use crate::CliError;

/// Settings resolved from the config and the command line.
#[derive(Debug, Clone)]
pub struct Settings {
    pub epsilon: f64,
    pub dump_mesh: bool,
    pub dump_tables: bool,
}

/// One solve at a single gridsize.
pub struct Solve {
    pub h: f64,
    pub mesh: Arc<HybridMesh>,
    pub u: Vec<f64>,
    pub stats: OperatorStats,
    pub operator: Arc<VolumePotentialOperator>,
    pub n_boundary: usize,
    pub gmres_iterations: usize,
    pub seconds: f64,
}

struct Problem {
    domain: Domain,
    kernel: KernelKind,
    source: Source,
    targets: Targets,
}

fn setup(cfg: &RunConfig) -> Result<Problem, CliError> {
    let domain = cfg.domain()?;
    let kernel = cfg.kernel()?;
    let source = cfg.source(&domain)?;
    let targets = cfg.targets(&domain)?;
    Ok(Problem { domain, kernel, source, targets })
}

fn solve_at(cfg: &RunConfig, set: &Settings, prob: &Problem, h: f64) -> Result<Solve, CliError> {
    let start = Instant::now();
    let mesh = Arc::new(
        HybridMesh::build(&prob.domain, h, &MeshOptions::default()).map_err(|e| CliError::Numerical(e.to_string()))?,
    );
    let potential = PotentialOptions { p: cfg.p, q: cfg.q, eps: set.epsilon, ..Default::default() };
    let source = &prob.source;
    let pts = &prob.targets.points;
    if prob.domain.is_curve_bounded() {
        let opts = BvpOptions { potential, n_per_curve: cfg.boundary_nodes, ..Default::default() };
        let sol = solve_bvp(mesh.clone(), prob.kernel, &opts, |x| source.f(x), |x| source.g(x), pts)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Solve {
            h,
            mesh,
            u: sol.u,
            stats: sol.stats,
            operator: sol.operator,
            n_boundary: sol.n_boundary,
            gmres_iterations: sol.density.iterations,
            seconds: start.elapsed().as_secs_f64(),
        })
    } else {
        // No enclosing curve: report the volume potential itself.
        let op = build_operator(mesh.clone(), prob.kernel, &potential, pts)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let f = op.sample(|x| source.f(x));
        let (u, timing) = op.apply_timed(&f).map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Solve {
            h,
            mesh,
            u,
            stats: op.stats(Some(timing)),
            operator: Arc::new(op),
            n_boundary: 0,
            gmres_iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
    .and_then(|s: Solve| {
        if s.u.iter().all(|v| v.is_finite()) {
            Ok(s)
        } else {
            Err(CliError::Numerical("solution contains non-finite values".into()))
        }
    })
}

/// Maximum and area-weighted ℓ² error against the exact solution, if known.
fn errors(source: &Source, targets: &Targets, u: &[f64]) -> Option<(f64, f64)> {
    let mut linf: f64 = 0.0;
    let mut l2 = 0.0;
    for (x, v) in targets.points.iter().zip(u) {
        let e = (v - source.exact(*x)?).abs();
        linf = linf.max(e);
        l2 += e * e * targets.weight;
    }
    Some((linf, l2.sqrt()))
}

fn fmt_num(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn solution_csv(source: &Source, points: &[Point], u: &[f64]) -> String {
    let mut s = String::from("x,y,u,u_exact,abs_err\n");
    for (x, v) in points.iter().zip(u) {
        let (ex, err) = match source.exact(*x) {
            Some(e) => (fmt_num(e), fmt_num((v - e).abs())),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(s, "{},{},{},{ex},{err}", fmt_num(x[0]), fmt_num(x[1]), fmt_num(*v));
    }
    s
}

fn mesh_text(r: &MeshReport, h: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "h {h}");
    let _ = writeln!(s, "n_triangles {}", r.n_triangles);
    let _ = writeln!(s, "n_curved {}", r.n_curved);
    let _ = writeln!(s, "n_boxes {}", r.n_boxes);
    let _ = writeln!(s, "area {:.15}", r.area);
    let _ = writeln!(s, "relative_area_defect {:.3e}", r.relative_area_defect);
    let _ = writeln!(s, "min_jacobian {:.6e}", r.min_jacobian);
    let _ = writeln!(s, "min_angle_degrees {:.3}", r.min_angle);
    let _ = writeln!(s, "h_nt {:.6}", r.h_nt);
    let _ = writeln!(s, "h2_nb {:.6}", r.h2_nb);
    s
}

fn operator_text(s: &Solve, set: &Settings) -> String {
    let mut t = s.stats.to_text();
    let _ = writeln!(t, "epsilon {:e}", set.epsilon);
    let _ = writeln!(t, "boundary_nodes {}", s.n_boundary);
    let _ = writeln!(t, "gmres_iterations {}", s.gmres_iterations);
    let _ = writeln!(t, "total_seconds {:.6}", s.seconds);
    t
}

/// Everything a run writes, keyed by file name. Files are produced only
/// after every solve succeeded.
pub type Artifacts = Vec<(String, String)>;

pub fn run(cfg: &RunConfig, set: &Settings) -> Result<(Artifacts, String), CliError> {
    let prob = setup(cfg)?;
    let s = solve_at(cfg, set, &prob, cfg.h.values()[0])?;
    let mut files = vec![
        ("solution.csv".to_string(), solution_csv(&prob.source, &prob.targets.points, &s.u)),
        ("mesh_stats.txt".to_string(), mesh_text(&s.mesh.validate(), s.h)),
        ("operator_stats.txt".to_string(), operator_text(&s, set)),
    ];
    if set.dump_mesh {
        files.push(("mesh.txt".into(), s.mesh.to_text()));
    }
    if set.dump_tables {
        files.push(("tables.txt".into(), s.operator.dump_tables()));
    }
    let mut summary = format!(
        "h {} p {} ndofs {} targets {} time {:.2}s",
        s.h,
        cfg.p,
        s.stats.ndofs,
        prob.targets.points.len(),
        s.seconds
    );
    if let Some((linf, l2)) = errors(&prob.source, &prob.targets, &s.u) {
        let _ = write!(summary, " linf {linf:.3e} l2 {l2:.3e}");
    }
    Ok((files, summary))
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn study(cfg: &RunConfig, set: &Settings) -> Result<(Artifacts, String), CliError> {
    let prob = setup(cfg)?;
    if prob.targets.points.iter().any(|x| prob.source.exact(*x).is_none()) {
        return Err(CliError::Config("a convergence study needs a problem with a known solution".into()));
    }
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for (i, &h) in cfg.h.values().iter().enumerate() {
        let s = solve_at(cfg, set, &prob, h)?;
        let (linf, l2) = errors(&prob.source, &prob.targets, &s.u).expect("exact solution checked above");
        files.push((format!("solution_{i}.csv"), solution_csv(&prob.source, &prob.targets.points, &s.u)));
        files.push((format!("operator_stats_{i}.txt"), operator_text(&s, set)));
        if set.dump_mesh {
            files.push((format!("mesh_{i}.txt"), s.mesh.to_text()));
        }
        if set.dump_tables {
            files.push((format!("tables_{i}.txt"), s.operator.dump_tables()));
        }
        rows.push((s, linf, l2));
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.0.h).collect();
    let linf: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mut csv = String::from("h,n_triangles,n_boxes,h_nt,h2_nb,ndofs,linf,l2,seconds\n");
    let mut table = format!(
        "{:>10} {:>8} {:>8} {:>9} {:>9} {:>10} {:>12} {:>12}\n",
        "h", "N_t", "N_b", "h*N_t", "h^2*N_b", "ndofs", "linf", "l2"
    );
    for (s, li, l) in &rows {
        let (nt, nb) = (s.mesh.n_triangles, s.mesh.n_boxes());
        let (a, b) = (s.h * nt as f64, s.h * s.h * nb as f64);
        let _ = writeln!(
            csv,
            "{},{nt},{nb},{a:.6},{b:.6},{},{},{},{:.3}",
            s.h,
            s.stats.ndofs,
            fmt_num(*li),
            fmt_num(*l),
            s.seconds
        );
        let _ = writeln!(
            table,
            "{:>10} {nt:>8} {nb:>8} {a:>9.3} {b:>9.3} {:>10} {li:>12.3e} {l:>12.3e}",
            s.h, s.stats.ndofs
        );
    }
    let (oi, o2) = (fitted_order(&hs, &linf), fitted_order(&hs, &l2));
    let _ = writeln!(csv, "# fitted_order_linf {oi:.4}");
    let _ = writeln!(csv, "# fitted_order_l2 {o2:.4}");
    let _ = writeln!(table, "fitted order (least squares): linf {oi:.2}, l2 {o2:.2}");
    files.push(("convergence.csv".into(), csv));
    files.push(("convergence.txt".into(), table.clone()));
    Ok((files, table))
}

/// Write every artifact under `dir`, each through a temporary file.
pub fn write_all(dir: &Path, files: &Artifacts) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, text) in files {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_order_of_power_law() {
        let h = [0.2f64, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|h| 3.0 * h.powi(4)).collect();
        assert!((fitted_order(&h, &e) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn csv_leaves_unknown_exact_empty() {
        let s = Source::Constant { f: 1.0, g: 0.0 };
        let csv = solution_csv(&s, &[[0.0, 0.5]], &[0.25]);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.ends_with(",,"), "{line}");
        assert_eq!(line.split(',').count(), 5);
    }
}
