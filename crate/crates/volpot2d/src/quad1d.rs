//! One-dimensional quadrature: Gauss–Legendre, rules for `log t` endpoint
//! singularities on (0, 1], and rules for `log(t + d)` near-singularities.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("Gauss-Legendre order must be in 1..=64, got {0}")]
    BadOrder(usize),
    #[error("near-singular rule needs d > 0 (got {0}); use the singular rule")]
    NonPositiveDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleClass {
    Smooth,
    SingularLog,
    /// Built for the worst case `d` of its decade bucket.
    NearSingularLog(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub class: RuleClass,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

/// Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<Rule1D, QuadError> {
    if n == 0 || n > 64 {
        return Err(QuadError::BadOrder(n));
    }
    let (nodes, weights) = gl_nodes(n);
    Ok(Rule1D { nodes, weights, class: RuleClass::Smooth })
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton on the three-term
/// recurrence; any `n ≥ 1`.
pub fn gl_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_and_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [0, 1].
pub fn gl01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gl_nodes(n);
    (x.iter().map(|v| 0.5 * (v + 1.0)).collect(), w.iter().map(|v| 0.5 * v).collect())
}

pub(crate) fn gl01_cached(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(gl01(n))).clone()
}

/// Append an `n`-point Gauss rule on [a, b].
pub fn push_panel(nodes: &mut Vec<f64>, weights: &mut Vec<f64>, a: f64, b: f64, n: usize) {
    let base = gl01_cached(n);
    let len = b - a;
    for (x, w) in base.0.iter().zip(&base.1) {
        nodes.push(a + len * x);
        weights.push(len * w);
    }
}

/// Points per panel in the composite rules.
pub const PANEL_ORDER: usize = 16;
/// Geometric grading ratio of the composite singular rules.
pub const GRADING: f64 = 0.25;
/// Points per panel of the near-singular ray rules.
pub const NEAR_ORDER: usize = 12;
/// Grading ratio of the near-singular rules. Each panel then sees the
/// singularity at Bernstein parameter ≥ 2 + √3.
pub const NEAR_GRADING: f64 = 1.0 / 3.0;

/// Which backend produces the `log t` endpoint rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularProvider {
    /// Composite Gauss–Legendre on panels {σᴺ, …, σ, 1}.
    GradedPanels,
    /// Generalized Gaussian rule exact for {tʲ, tʲ log t}, j < 20.
    #[default]
    LogGauss,
}

/// Rule for `φ(t) log t + ψ(t)` on (0, 1] from the default graded panels.
pub fn singular_rule(p: usize) -> Rule1D {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let depth = (1e-14f64.ln() / GRADING.ln()).ceil() as i32;
    let mut lo = 0.0;
    for k in (0..=depth).rev() {
        let hi = GRADING.powi(k);
        push_panel(&mut nodes, &mut weights, lo, hi, p);
        lo = hi;
    }
    Rule1D { nodes, weights, class: RuleClass::SingularLog }
}

/// Shared copy of the singular rule for the given backend.
pub fn singular_rule_for(provider: SingularProvider) -> Arc<Rule1D> {
    static GRADED: OnceLock<Arc<Rule1D>> = OnceLock::new();
    static LOGGAUSS: OnceLock<Arc<Rule1D>> = OnceLock::new();
    match provider {
        SingularProvider::GradedPanels => GRADED.get_or_init(|| Arc::new(singular_rule(PANEL_ORDER))).clone(),
        SingularProvider::LogGauss => LOGGAUSS
            .get_or_init(|| {
                let (nodes, weights) = crate::tables::LOG_GAUSS_20.iter().copied().unzip();
                Arc::new(Rule1D { nodes, weights, class: RuleClass::SingularLog })
            })
            .clone(),
    }
}

/// Decade bucket index `q` with `d ∈ [10^(-q-1), 10^(-q))`, clamped at d ≥ 1.
pub fn decade_bucket(d: f64) -> i32 {
    if d >= 1.0 {
        -1
    } else {
        (-d.log10()).floor() as i32
    }
}

/// Build the composite rule for `log(t + d)` on [0, 1] for all d ≥ `d_lo`:
/// panels geometric in `s = t + d_lo` with ratio 1/NEAR_GRADING.
fn near_rule_for_bucket(d_lo: f64) -> Rule1D {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut s = d_lo;
    let mut lo = 0.0;
    while lo < 1.0 {
        s /= NEAR_GRADING;
        let mut hi = s - d_lo;
        // Avoid a sliver at the end of the interval.
        if hi > 1.0 || (1.0 - hi) < 0.25 * (hi - lo) {
            hi = 1.0;
        }
        push_panel(&mut nodes, &mut weights, lo, hi, NEAR_ORDER);
        lo = hi;
    }
    Rule1D { nodes, weights, class: RuleClass::NearSingularLog(d_lo) }
}

/// Rule for `k₁(t) + k₂(t) log(t + d)` on [0, 1]; cached per decade bucket.
pub fn near_singular_rule(d: f64) -> Result<Arc<Rule1D>, QuadError> {
    if !(d > 0.0) {
        return Err(QuadError::NonPositiveDistance(d));
    }
    Ok(near_rule_cached(decade_bucket(d)))
}

pub(crate) fn near_rule_cached(q: i32) -> Arc<Rule1D> {
    static CACHE: OnceLock<Mutex<HashMap<i32, Arc<Rule1D>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry(q).or_insert_with(|| Arc::new(near_rule_for_bucket(10f64.powi(-q - 1)))).clone()
}

/// Adaptive Gauss–Legendre on [a, b]: bisect until a 12-point rule agrees
/// with the sum over both halves to `tol` (absolute).
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let base = gl01_cached(12);
    let rule = |lo: f64, hi: f64| -> f64 {
        let len = hi - lo;
        base.0.iter().zip(&base.1).map(|(x, w)| w * f(lo + len * x)).sum::<f64>() * len
    };
    fn rec(rule: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let l = rule(lo, mid);
        let r = rule(mid, hi);
        if (l + r - whole).abs() <= tol || depth > 50 {
            l + r
        } else {
            rec(rule, lo, mid, l, 0.5 * tol, depth + 1) + rec(rule, mid, hi, r, 0.5 * tol, depth + 1)
        }
    }
    let whole = rule(a, b);
    rec(&rule, a, b, whole, tol, 0)
}
