//! Gauss–Legendre and Gauss–Hermite rules, composite panels and tensor grids.
//!
//! Hermite rules are stored with the Gaussian weight folded into the
//! weights, so `Σ w_i f(x_i)` approximates `∫ f(x) dx` over the real line
//! for integrands decaying like `e^{-x²}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Node count used for the first pass of every adaptive integration.
pub const DEFAULT_NODES: usize = 64;

/// Successive estimates closer than this stop the refinement.
pub const CONVERGED_CHANGE: f64 = 1e-10;

/// A final refinement step still changing the estimate by more than this is a failure.
pub const FAILED_CHANGE: f64 = 1e-6;

/// A one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affinely maps a rule defined on `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|&t| mid + half * t).collect(),
            weights: self.weights.iter().map(|&w| w * half).collect(),
        }
    }

    /// Stretches a rule on the real line by `scale` (`x = scale·y`).
    pub fn stretched(&self, scale: f64) -> Rule {
        Rule {
            nodes: self.nodes.iter().map(|&y| scale * y).collect(),
            weights: self.weights.iter().map(|&w| scale * w).collect(),
        }
    }
}

type RuleCache = Mutex<HashMap<(bool, usize), Arc<Rule>>>;

fn cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached(hermite: bool, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
    map.entry((hermite, n))
        .or_insert_with(|| Arc::new(build(n)))
        .clone()
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "quadrature needs at least one node");
    cached(false, n, build_gauss_legendre)
}

/// `n`-point Gauss–Hermite rule with the weight `e^{-x²}` folded in.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    assert!(n >= 1, "quadrature needs at least one node");
    cached(true, n, build_gauss_hermite)
}

fn build_gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            deriv = dp;
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        if dp != 0.0 {
            deriv = dp;
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Unnormalized Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Normalized Hermite functions `ψ_{n-1}(x)`, `ψ_n(x)`.
fn hermite_function_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    for j in 1..=n {
        let jf = j as f64;
        let next = x * (2.0 / jf).sqrt() * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

fn build_gauss_hermite(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    let mut found: Vec<f64> = Vec::with_capacity(half);
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * found[0],
            3 => 1.91 * z - 0.91 * found[1],
            _ => 2.0 * z - found[i - 2],
        };
        // The ratio ψ_n/ψ_n' is unaffected by the Gaussian factor, so Newton
        // steps on Hermite functions stay finite where polynomials overflow.
        for _ in 0..100 {
            let (pm1, p) = hermite_function_pair(n, z);
            let dp = (2.0 * nf).sqrt() * pm1 - z * p;
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        found.push(z);
        let (pm1, _) = hermite_function_pair(n, z);
        let w = 1.0 / (nf * pm1 * pm1);
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes.reverse();
    weights.reverse();
    Rule { nodes, weights }
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels of `order` nodes.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        let r = base.mapped(lo, hi);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    Rule { nodes, weights }
}

/// Visits every point of the tensor grid built from `rules`, in row-major order.
pub fn for_each_tensor_point(rules: &[&Rule], mut visit: impl FnMut(&[f64], f64)) {
    let dim = rules.len();
    if dim == 0 || rules.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; dim];
    let mut point: Vec<f64> = rules.iter().map(|r| r.nodes[0]).collect();
    loop {
        let w: f64 = rules.iter().zip(&idx).map(|(r, &i)| r.weights[i]).product();
        visit(&point, w);
        let mut d = dim;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                point[d] = rules[d].nodes[idx[d]];
                break;
            }
            idx[d] = 0;
            point[d] = rules[d].nodes[0];
        }
    }
}

/// Repeats `estimate(nodes)` with doubling node counts until successive
/// results agree to [`CONVERGED_CHANGE`] (max-norm), or `max_nodes` is hit.
///
/// Hitting the cap is accepted when the last change stays below
/// [`FAILED_CHANGE`]; otherwise the integration is reported as divergent.
pub fn refine<T>(
    what: &str,
    start: usize,
    max_nodes: usize,
    mut estimate: impl FnMut(usize) -> Result<T>,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<T> {
    let mut nodes = start;
    let mut prev = estimate(nodes)?;
    let mut change = f64::INFINITY;
    while nodes * 2 <= max_nodes {
        nodes *= 2;
        let next = estimate(nodes)?;
        change = distance(&prev, &next);
        prev = next;
        if change < CONVERGED_CHANGE {
            return Ok(prev);
        }
    }
    if change <= FAILED_CHANGE {
        Ok(prev)
    } else {
        Err(Error::QuadratureNonConvergence {
            what: what.to_string(),
            change,
        })
    }
}

pub(crate) fn scalar_distance(a: &f64, b: &f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}
