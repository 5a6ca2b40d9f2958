//! JSON run configuration and its translation into library objects.

use std::path::{Path, PathBuf};

use exmex::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use volpot2d::geometry::{CurveShape, ParametricCurve, Side};
use volpot2d::kernel::KernelKind;
use volpot2d::mesh::Domain;
use volpot2d::problems::Problem;
use volpot2d::Point;

use crate::CliError;

/// Largest interpolation order accepted from a config.
pub const MAX_ORDER: usize = 12;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to the unit disk.
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default)]
    pub q: Option<usize>,
    pub h: HSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Boundary nodes per curve; the library default scales with `1/h`.
    #[serde(default)]
    pub boundary_nodes: Option<usize>,
}

fn default_p() -> usize {
    6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SideSpec {
    /// The domain is enclosed by the curve.
    #[default]
    Inside,
    /// The curve bounds an inclusion.
    Outside,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        center: Point,
        radius: f64,
        #[serde(default)]
        side: SideSpec,
    },
    Ellipse {
        center: Point,
        a: f64,
        b: f64,
        #[serde(default)]
        angle: f64,
        #[serde(default)]
        side: SideSpec,
    },
    Star {
        center: Point,
        radius: f64,
        amplitude: f64,
        arms: u32,
        #[serde(default)]
        side: SideSpec,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    Laplace,
    ModifiedHelmholtz {
        lambda: f64,
    },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum HSpec {
    One(f64),
    Many(Vec<f64>),
}

impl HSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            HSpec::One(h) => vec![*h],
            HSpec::Many(v) => v.clone(),
        }
    }
}

/// Either a built-in id, a constant source, or expressions in `x` and `y`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Id(String),
    Named {
        id: String,
    },
    Constant {
        constant: f64,
        #[serde(default)]
        boundary: f64,
    },
    Expression {
        f: String,
        #[serde(default)]
        g: Option<String>,
        #[serde(default)]
        exact: Option<String>,
    },
}

/// Evaluation points: an `n × n` grid over `bbox`, or `random` uniform
/// points drawn with the config seed, restricted to Ω minus a collar.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_n")]
    pub n: usize,
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
    #[serde(default = "default_collar")]
    pub collar: f64,
    #[serde(default)]
    pub random: Option<usize>,
}

fn default_grid_n() -> usize {
    50
}

fn default_collar() -> f64 {
    0.02
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: default_grid_n(), bbox: None, collar: default_collar(), random: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks that do not need any geometry. `study` additionally requires
    /// at least three strictly decreasing gridsizes.
    pub fn validate(&self, study: bool) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.p == 0 || self.p > MAX_ORDER {
            return bad(format!("p = {} must lie in 1..={MAX_ORDER}", self.p));
        }
        if let Some(q) = self.q {
            if q < self.p {
                return bad(format!("q = {q} must be at least p = {}", self.p));
            }
        }
        let hs = self.h.values();
        if hs.is_empty() || hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return bad(format!("gridsizes must be positive, got {hs:?}"));
        }
        if study {
            if hs.len() < 3 {
                return bad(format!("a study needs at least 3 gridsizes, got {}", hs.len()));
            }
            if hs.windows(2).any(|w| w[1] >= w[0]) {
                return bad(format!("study gridsizes must be strictly decreasing, got {hs:?}"));
            }
        } else if hs.len() != 1 {
            return bad("run takes a single gridsize; use study for a list".into());
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("epsilon = {e} must lie in (0, 1)"));
            }
        }
        if self.grid.n < 2 {
            return bad("grid.n must be at least 2".into());
        }
        if !(self.grid.collar >= 0.0) {
            return bad("grid.collar must be non-negative".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        let spec = self.domain.clone().unwrap_or(DomainSpec {
            curves: vec![CurveSpec::Circle { center: [0.0, 0.0], radius: 1.0, side: SideSpec::Inside }],
            bbox: None,
        });
        let mut curves = Vec::new();
        for c in &spec.curves {
            let side = |s: SideSpec| if s == SideSpec::Inside { Side::Inside } else { Side::Outside };
            let curve = match *c {
                CurveSpec::Circle { center, radius, side: s } => ParametricCurve::circle(center, radius, side(s)),
                CurveSpec::Ellipse { center, a, b, angle, side: s } => {
                    ParametricCurve::ellipse(center, a, b, angle, side(s))
                }
                CurveSpec::Star { center, radius, amplitude, arms, side: s } => {
                    ParametricCurve::star(center, radius, amplitude, arms, side(s))
                }
            };
            curves.push(curve.map_err(|e| CliError::Config(format!("curve {c:?}: {e}")))?);
        }
        Domain::new(curves, spec.bbox).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn kernel(&self) -> Result<KernelKind, CliError> {
        match self.kernel {
            KernelSpec::Laplace => Ok(KernelKind::Laplace),
            KernelSpec::ModifiedHelmholtz { lambda } => {
                KernelKind::modified_helmholtz(lambda).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    pub fn source(&self, domain: &Domain) -> Result<Source, CliError> {
        let kernel = self.kernel()?;
        let lambda = match kernel {
            KernelKind::ModifiedHelmholtz { lambda } => Some(lambda),
            _ => None,
        };
        let named = |id: &str| -> Result<Source, CliError> {
            let mut prob = Problem::from_id(id, lambda).map_err(|e| CliError::Config(e.to_string()))?;
            if prob.kernel().ok() != Some(kernel) {
                return Err(CliError::Config(format!("problem {id} does not match kernel {kernel:?}")));
            }
            if let Problem::ConstRhsDisk { .. } = prob {
                match domain.curves.as_slice() {
                    [c] if domain.bbox.is_none() => match c.shape {
                        CurveShape::Circle { center, radius } if c.side == Side::Inside => {
                            prob = Problem::ConstRhsDisk { center, radius };
                        }
                        _ => return Err(CliError::Config("const-rhs-disk needs a single disk".into())),
                    },
                    _ => return Err(CliError::Config("const-rhs-disk needs a single disk".into())),
                }
            }
            Ok(Source::Builtin(prob))
        };
        match &self.problem {
            ProblemSpec::Id(id) | ProblemSpec::Named { id } => named(id),
            ProblemSpec::Constant { constant, boundary } => Ok(Source::Constant { f: *constant, g: *boundary }),
            ProblemSpec::Expression { f, g, exact } => {
                let exact = exact.as_deref().map(Expr::parse).transpose()?;
                let g = match g {
                    Some(g) => Some(Expr::parse(g)?),
                    None => exact.clone(),
                };
                Ok(Source::Expression { f: Expr::parse(f)?, g, exact })
            }
        }
    }

    /// Evaluation points inside Ω at least `collar` from every curve.
    pub fn targets(&self, domain: &Domain) -> Result<Targets, CliError> {
        let bbox = match self.grid.bbox.or(domain.bbox) {
            Some(b) => b,
            None => curve_bbox(domain),
        };
        let keep = |x: Point| domain.contains(x) && boundary_distance(domain, x) >= self.grid.collar;
        let area = (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]);
        let (points, weight) = match self.grid.random {
            Some(count) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut pts = Vec::with_capacity(count);
                let mut tries = 0usize;
                while pts.len() < count {
                    tries += 1;
                    if tries > 1000 * count.max(1) {
                        return Err(CliError::Config("grid rejects nearly every random point".into()));
                    }
                    let x = [rng.gen_range(bbox[0]..bbox[2]), rng.gen_range(bbox[1]..bbox[3])];
                    if keep(x) {
                        pts.push(x);
                    }
                }
                let w = area * count as f64 / tries as f64 / count.max(1) as f64;
                (pts, w)
            }
            None => {
                let n = self.grid.n;
                let dx = (bbox[2] - bbox[0]) / (n - 1) as f64;
                let dy = (bbox[3] - bbox[1]) / (n - 1) as f64;
                let mut pts = Vec::new();
                for j in 0..n {
                    for i in 0..n {
                        let x = [bbox[0] + i as f64 * dx, bbox[1] + j as f64 * dy];
                        if keep(x) {
                            pts.push(x);
                        }
                    }
                }
                (pts, dx * dy)
            }
        };
        if points.is_empty() {
            return Err(CliError::Config("the evaluation grid has no points inside the domain".into()));
        }
        Ok(Targets { points, weight })
    }
}

/// Evaluation points and the area weight per point used by the discrete ℓ²
/// norm.
#[derive(Debug, Clone)]
pub struct Targets {
    pub points: Vec<Point>,
    pub weight: f64,
}

fn curve_bbox(domain: &Domain) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let outer = domain.outer_curve().map(|i| &domain.curves[i..=i]).unwrap_or(&domain.curves[..]);
    for c in outer {
        for k in 0..2048 {
            let x = c.point(k as f64 * std::f64::consts::TAU / 2048.0);
            b = [b[0].min(x[0]), b[1].min(x[1]), b[2].max(x[0]), b[3].max(x[1])];
        }
    }
    b
}

/// Distance to the nearest curve: a dense scan followed by a few Newton
/// steps on the squared distance.
pub fn boundary_distance(domain: &Domain, x: Point) -> f64 {
    const SCAN: usize = 512;
    let mut best = f64::INFINITY;
    for c in &domain.curves {
        let d2 = |t: f64| {
            let p = c.point(t);
            (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
        };
        let mut t = (0..SCAN)
            .map(|k| k as f64 * std::f64::consts::TAU / SCAN as f64)
            .min_by(|a, b| d2(*a).total_cmp(&d2(*b)))
            .unwrap_or(0.0);
        for _ in 0..8 {
            let [p, d1, dd, _] = c.derivatives(t);
            let r = [p[0] - x[0], p[1] - x[1]];
            let g = r[0] * d1[0] + r[1] * d1[1];
            let hs = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * dd[0] + r[1] * dd[1];
            if hs <= 0.0 {
                break;
            }
            t -= g / hs;
        }
        best = best.min(d2(t).sqrt());
    }
    best
}

/// A parsed expression in the variables `x` and `y`.
#[derive(Debug, Clone)]
pub struct Expr {
    flat: FlatEx<f64>,
    slots: Vec<usize>,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let flat = exmex::parse::<f64>(text).map_err(|e| CliError::Config(format!("expression {text:?}: {e}")))?;
        let slots = flat
            .var_names()
            .iter()
            .map(|v| match v.as_str() {
                "x" => Ok(0),
                "y" => Ok(1),
                other => Err(CliError::Config(format!("expression {text:?}: unknown variable {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Expr { flat, slots })
    }

    pub fn eval(&self, x: Point) -> f64 {
        let vars: Vec<f64> = self.slots.iter().map(|&s| x[s]).collect();
        self.flat.eval(&vars).unwrap_or(f64::NAN)
    }
}

/// Right-hand side, Dirichlet data and optional exact solution.
#[derive(Debug, Clone)]
pub enum Source {
    Builtin(Problem),
    Constant { f: f64, g: f64 },
    Expression { f: Expr, g: Option<Expr>, exact: Option<Expr> },
}

impl Source {
    pub fn f(&self, x: Point) -> f64 {
        match self {
            Source::Builtin(p) => p.f(x),
            Source::Constant { f, .. } => *f,
            Source::Expression { f, .. } => f.eval(x),
        }
    }

    pub fn g(&self, x: Point) -> f64 {
        match self {
            Source::Builtin(p) => p.g(x),
            Source::Constant { g, .. } => *g,
            Source::Expression { g, .. } => g.as_ref().map_or(0.0, |g| g.eval(x)),
        }
    }

    pub fn exact(&self, x: Point) -> Option<f64> {
        match self {
            Source::Builtin(p) => p.exact(x),
            Source::Constant { .. } => None,
            Source::Expression { exact, .. } => exact.as_ref().map(|e| e.eval(x)),
        }
    }
}
