//! Orthonormal function families and their geometry.
//!
//! A [`BasisFamily`] is an immutable, cheaply clonable list of real functions
//! on a hyperrectangle or on the whole space. Besides values it provides
//! second derivatives along each axis, the integrals `F_i = ∫ f_i`, and the
//! Gram matrix of pairwise inner products with unit weight.
//!
//! Built-in one-dimensional families:
//!
//! | family   | functions on `[-1, 1]`                          | `F_i`                     |
//! |----------|-------------------------------------------------|---------------------------|
//! | Legendre | `√((2n+1)/2) P_n(t)`                            | `√v` for `n = 0`, else 0  |
//! | Fourier  | `1/√2`, `sin(jπt)`, `cos(jπt)`                  | `√v` for the constant     |
//! | Hermite  | `H_n(x) e^{-x²/2} / √(2ⁿ n! √π)` on the real line | 0 for odd `n`           |
//!
//! Families on `[a, b]` use `t = (2x − a − b)/(b − a)` and an extra factor
//! `√(2/(b − a))`. Multivariate families are tensor products of these,
//! ordered by total degree and then by descending per-axis index tuple.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, for_each_tensor_point, Rule};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Largest per-dimension node count used by adaptive Gram quadrature.
const MAX_NODES_PER_DIM: usize = 1024;

/// Cap on the total number of tensor-grid points for multivariate quadrature.
const MAX_GRID_POINTS: usize = 1 << 21;

/// Pivot norms below this fraction of the initial norm mark a dependent function.
pub const DEPENDENCE_TOLERANCE: f64 = 1e-10;

/// Axis-aligned box `∏ [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RegionRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RegionRepr> for Region {
    type Error = Error;
    fn try_from(r: RegionRepr) -> Result<Self> {
        Region::new(r.lower, r.upper)
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        RegionRepr {
            lower: r.lower,
            upper: r.upper,
        }
    }
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("region needs at least one dimension"));
        }
        for (dim, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::DegenerateRegion {
                    dim,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        let region = Region { lower, upper };
        let v = region.volume();
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("region volume {v} is not finite and positive")));
        }
        Ok(region)
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Region::new(vec![lower], vec![upper])
    }

    /// The cube `[lower, upper]^dim`.
    pub fn cube(lower: f64, upper: f64, dim: usize) -> Result<Self> {
        Region::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    /// Closed-box membership test.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// The one-dimensional region along axis `d`.
    pub fn axis(&self, d: usize) -> Region {
        Region {
            lower: vec![self.lower[d]],
            upper: vec![self.upper[d]],
        }
    }
}

/// Where a family lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Bounded(Region),
    Unbounded { dim: usize },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Bounded(r) => r.dim(),
            Domain::Unbounded { dim } => *dim,
        }
    }

    pub fn region(&self) -> Option<&Region> {
        match self {
            Domain::Bounded(r) => Some(r),
            Domain::Unbounded { .. } => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Bounded(r) => r.contains(x),
            Domain::Unbounded { dim } => x.len() == *dim && x.iter().all(|v| v.is_finite()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    Legendre,
    Fourier,
    Hermite,
    Product,
    Custom,
}

impl FamilyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyTag::Legendre => "legendre",
            FamilyTag::Fourier => "fourier",
            FamilyTag::Hermite => "hermite",
            FamilyTag::Product => "product",
            FamilyTag::Custom => "custom",
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies a basis function: its family plus one index per axis.
///
/// For Fourier axes index 0 is the constant, `2j − 1` is `sin(jπt)` and
/// `2j` is `cos(jπt)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisFunctionId {
    pub family: FamilyTag,
    pub indices: Vec<usize>,
}

impl fmt::Display for BasisFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family)?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str(")")
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type SecondFn = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

/// A user-supplied function for raw or Gram–Schmidt families.
#[derive(Clone)]
pub enum RawFunction {
    /// `coef · ∏ x_d^{exponents[d]}`; serializable.
    Monomial { coef: f64, exponents: Vec<u32> },
    /// Arbitrary closure with an optional `∂²/∂x_d²`.
    Closure {
        eval: Arc<EvalFn>,
        second: Option<Arc<SecondFn>>,
    },
}

impl fmt::Debug for RawFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawFunction::Monomial { coef, exponents } => f
                .debug_struct("Monomial")
                .field("coef", coef)
                .field("exponents", exponents)
                .finish(),
            RawFunction::Closure { second, .. } => f
                .debug_struct("Closure")
                .field("has_second_derivative", &second.is_some())
                .finish(),
        }
    }
}

impl RawFunction {
    pub fn monomial(coef: f64, exponents: Vec<u32>) -> Self {
        RawFunction::Monomial { coef, exponents }
    }

    pub fn closure(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        RawFunction::Closure {
            eval: Arc::new(eval),
            second: None,
        }
    }

    pub fn closure_with_second(
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        second: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        RawFunction::Closure {
            eval: Arc::new(eval),
            second: Some(Arc::new(second)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RawFunction::Monomial { coef, exponents } => {
                coef * exponents
                    .iter()
                    .zip(x)
                    .map(|(&e, &v)| v.powi(e as i32))
                    .product::<f64>()
            }
            RawFunction::Closure { eval, .. } => eval(x),
        }
    }

    pub fn second_derivative(&self, x: &[f64], dim: usize) -> Option<f64> {
        match self {
            RawFunction::Monomial { coef, exponents } => {
                let e = exponents.get(dim).copied().unwrap_or(0);
                if e < 2 {
                    return Some(0.0);
                }
                let mut v = coef * (e as f64) * (e as f64 - 1.0);
                for (d, (&ed, &xd)) in exponents.iter().zip(x).enumerate() {
                    let p = if d == dim { ed - 2 } else { ed };
                    v *= xd.powi(p as i32);
                }
                Some(v)
            }
            RawFunction::Closure { second, .. } => second.as_ref().map(|s| s(x, dim)),
        }
    }

    fn has_second_derivative(&self) -> bool {
        match self {
            RawFunction::Monomial { .. } => true,
            RawFunction::Closure { second, .. } => second.is_some(),
        }
    }

    fn degree(&self) -> usize {
        match self {
            RawFunction::Monomial { exponents, .. } => exponents.iter().map(|&e| e as usize).sum(),
            RawFunction::Closure { .. } => 0,
        }
    }
}

/// One scaled monomial term of a serialized custom family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

/// Serialized form of a family, as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub family: FamilyTag,
    pub order: usize,
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<FamilyDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<MonomialTerm>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub orthonormalize: bool,
}

#[derive(Debug)]
enum Kind {
    Legendre { order: usize, lo: f64, hi: f64 },
    Fourier { freq: usize, lo: f64, hi: f64 },
    Hermite { order: usize },
    Product { factors: Vec<BasisFamily>, index: Vec<Vec<usize>> },
    Custom { raw: Vec<RawFunction>, combination: Option<DMatrix<f64>>, quad_points: usize },
}

#[derive(Debug)]
struct Inner {
    kind: Kind,
    domain: Domain,
    ids: Vec<BasisFunctionId>,
    degrees: Vec<usize>,
    integrals: Vec<f64>,
    orthonormal: bool,
    boundary_vanishing: Vec<bool>,
    has_second: bool,
}

/// An ordered family of basis functions.
#[derive(Debug, Clone)]
pub struct BasisFamily {
    inner: Arc<Inner>,
}

/// Borrowed view of one member of a family.
#[derive(Debug, Clone, Copy)]
pub struct BasisFunction<'a> {
    family: &'a BasisFamily,
    index: usize,
}

impl BasisFunction<'_> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn id(&self) -> &BasisFunctionId {
        &self.family.inner.ids[self.index]
    }

    pub fn integral(&self) -> f64 {
        self.family.inner.integrals[self.index]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.family.size()];
        self.family.eval_into(x, &mut buf);
        buf[self.index]
    }

    pub fn second_derivative(&self, x: &[f64], dim: usize) -> Result<f64> {
        let mut buf = vec![0.0; self.family.size()];
        self.family.second_derivative_into(x, dim, &mut buf)?;
        Ok(buf[self.index])
    }

    pub fn vanishes_on_boundary(&self) -> bool {
        self.family.inner.boundary_vanishing[self.index]
    }
}

fn check_interval(range: &Region) -> Result<(f64, f64)> {
    if range.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: range.dim(),
        });
    }
    Ok((range.lower[0], range.upper[0]))
}

/// Orthonormal Legendre polynomials of degree `0..=max_order` rescaled to `range`.
pub fn legendre_family(max_order: usize, range: &Region) -> Result<BasisFamily> {
    let (lo, hi) = check_interval(range)?;
    let m = max_order + 1;
    let mut integrals = vec![0.0; m];
    integrals[0] = (hi - lo).sqrt();
    Ok(BasisFamily::from_inner(Inner {
        kind: Kind::Legendre { order: max_order, lo, hi },
        domain: Domain::Bounded(range.clone()),
        ids: (0..m)
            .map(|i| BasisFunctionId { family: FamilyTag::Legendre, indices: vec![i] })
            .collect(),
        degrees: (0..m).collect(),
        integrals,
        orthonormal: true,
        boundary_vanishing: vec![false; m],
        has_second: true,
    }))
}

/// Constant plus `sin(jπt)`, `cos(jπt)` for `j = 1..=max_freq`, rescaled to `range`.
pub fn fourier_family(max_freq: usize, range: &Region) -> Result<BasisFamily> {
    let (lo, hi) = check_interval(range)?;
    let m = 2 * max_freq + 1;
    let mut integrals = vec![0.0; m];
    integrals[0] = (hi - lo).sqrt();
    Ok(BasisFamily::from_inner(Inner {
        kind: Kind::Fourier { freq: max_freq, lo, hi },
        domain: Domain::Bounded(range.clone()),
        ids: (0..m)
            .map(|i| BasisFunctionId { family: FamilyTag::Fourier, indices: vec![i] })
            .collect(),
        degrees: (0..m).map(|k| k.div_ceil(2)).collect(),
        integrals,
        orthonormal: true,
        boundary_vanishing: (0..m).map(|k| k % 2 == 1).collect(),
        has_second: true,
    }))
}

/// Hermite functions of order `0..=max_order` on the real line.
pub fn hermite_function_family(max_order: usize) -> BasisFamily {
    let m = max_order + 1;
    BasisFamily::from_inner(Inner {
        kind: Kind::Hermite { order: max_order },
        domain: Domain::Unbounded { dim: 1 },
        ids: (0..m)
            .map(|i| BasisFunctionId { family: FamilyTag::Hermite, indices: vec![i] })
            .collect(),
        degrees: (0..m).collect(),
        integrals: hermite_integrals(m),
        orthonormal: true,
        boundary_vanishing: vec![false; m],
        has_second: true,
    })
}

/// `∫ψ_n` from `ψ_n' = √(n/2)ψ_{n-1} − √((n+1)/2)ψ_{n+1}` integrated over the line.
fn hermite_integrals(m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    if m == 0 {
        return out;
    }
    out[0] = std::f64::consts::SQRT_2 * std::f64::consts::PI.powf(0.25);
    for n in (2..m).step_by(2) {
        out[n] = out[n - 2] * ((n as f64 - 1.0) / n as f64).sqrt();
    }
    out
}

/// All cross-axis products of one-dimensional families.
pub fn tensor_product(families: &[BasisFamily]) -> Result<BasisFamily> {
    if families.is_empty() {
        return Err(Error::invalid("tensor product of an empty family list"));
    }
    for f in families {
        if f.dim() != 1 {
            return Err(Error::invalid(format!(
                "tensor product factors must be one-dimensional, got dimension {}",
                f.dim()
            )));
        }
    }
    let bounded = families.iter().filter(|f| f.domain().region().is_some()).count();
    let domain = if bounded == families.len() {
        let lower = families.iter().map(|f| f.domain().region().unwrap().lower[0]).collect();
        let upper = families.iter().map(|f| f.domain().region().unwrap().upper[0]).collect();
        Domain::Bounded(Region::new(lower, upper)?)
    } else if bounded == 0 {
        Domain::Unbounded { dim: families.len() }
    } else {
        return Err(Error::invalid("cannot mix bounded and unbounded factors in a tensor product"));
    };

    let mut index: Vec<Vec<usize>> = vec![vec![]];
    for f in families {
        let mut next = Vec::with_capacity(index.len() * f.size());
        for prefix in &index {
            for i in 0..f.size() {
                let mut t = prefix.clone();
                t.push(i);
                next.push(t);
            }
        }
        index = next;
    }
    let degree_of = |t: &[usize]| -> usize {
        t.iter().zip(families).map(|(&i, f)| f.inner.degrees[i]).sum()
    };
    index.sort_by(|a, b| degree_of(a).cmp(&degree_of(b)).then_with(|| b.cmp(a)));

    let degrees = index.iter().map(|t| degree_of(t)).collect();
    let integrals = index
        .iter()
        .map(|t| t.iter().zip(families).map(|(&i, f)| f.inner.integrals[i]).product())
        .collect();
    let boundary_vanishing = index
        .iter()
        .map(|t| t.iter().zip(families).any(|(&i, f)| f.inner.boundary_vanishing[i]))
        .collect();
    let ids = index
        .iter()
        .map(|t| BasisFunctionId { family: FamilyTag::Product, indices: t.clone() })
        .collect();
    Ok(BasisFamily::from_inner(Inner {
        orthonormal: families.iter().all(|f| f.is_orthonormal()),
        has_second: families.iter().all(|f| f.inner.has_second),
        kind: Kind::Product { factors: families.to_vec(), index },
        domain,
        ids,
        degrees,
        integrals,
        boundary_vanishing,
    }))
}

/// A non-orthonormal family made of user functions on `region`.
pub fn raw_family(raw: Vec<RawFunction>, region: &Region) -> Result<BasisFamily> {
    custom_family(raw, region, None, quadrature::DEFAULT_NODES)
}

/// Orthonormalizes `raw` on `region` by modified Gram–Schmidt under quadrature inner products.
///
/// Each pass is repeated once (re-orthogonalization), which keeps the result
/// orthonormal to rounding level even for badly scaled inputs.
pub fn gram_schmidt(raw: Vec<RawFunction>, region: &Region, quad_points: usize) -> Result<BasisFamily> {
    if raw.is_empty() {
        return Err(Error::invalid("Gram-Schmidt needs at least one function"));
    }
    let quad_points = quad_points.max(1);
    let raw_gram = tensor_gram(&raw, region, quad_points)?;
    let m = raw.len();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(m);
    let inner = |u: &nalgebra::DVector<f64>, v: &nalgebra::DVector<f64>| u.dot(&(&raw_gram * v));
    for j in 0..m {
        let mut v = nalgebra::DVector::zeros(m);
        v[j] = 1.0;
        let initial = raw_gram[(j, j)].max(0.0).sqrt();
        for _ in 0..2 {
            for u in &basis {
                let c = inner(u, &v);
                v -= u * c;
            }
        }
        let residual = inner(&v, &v).max(0.0).sqrt();
        if !(residual >= DEPENDENCE_TOLERANCE * initial) || initial == 0.0 {
            return Err(Error::LinearDependence { index: j, residual, initial });
        }
        basis.push(v / residual);
    }
    let mut combination = DMatrix::zeros(m, m);
    for (j, u) in basis.iter().enumerate() {
        combination.set_row(j, &u.transpose());
    }
    custom_family(raw, region, Some(combination), quad_points)
}

fn custom_family(
    raw: Vec<RawFunction>,
    region: &Region,
    combination: Option<DMatrix<f64>>,
    quad_points: usize,
) -> Result<BasisFamily> {
    if raw.is_empty() {
        return Err(Error::invalid("custom family needs at least one function"));
    }
    let m = raw.len();
    let raw_integrals = tensor_integrals(&raw, region, quad_points)?;
    let integrals = match &combination {
        Some(c) => (c * nalgebra::DVector::from_vec(raw_integrals)).as_slice().to_vec(),
        None => raw_integrals,
    };
    let degrees = match &combination {
        Some(_) => (0..m).map(|j| raw[..=j].iter().map(RawFunction::degree).max().unwrap_or(0)).collect(),
        None => raw.iter().map(RawFunction::degree).collect(),
    };
    Ok(BasisFamily::from_inner(Inner {
        orthonormal: combination.is_some(),
        has_second: raw.iter().all(RawFunction::has_second_derivative),
        ids: (0..m)
            .map(|i| BasisFunctionId { family: FamilyTag::Custom, indices: vec![i] })
            .collect(),
        kind: Kind::Custom { raw, combination, quad_points },
        domain: Domain::Bounded(region.clone()),
        degrees,
        integrals,
        boundary_vanishing: vec![false; m],
    }))
}

fn region_rules(region: &Region, n: usize) -> Vec<Rule> {
    let base = quadrature::gauss_legendre(n);
    (0..region.dim())
        .map(|d| base.mapped(region.lower[d], region.upper[d]))
        .collect()
}

fn max_nodes_for_dim(dim: usize) -> usize {
    let mut n = MAX_NODES_PER_DIM;
    while n > quadrature::DEFAULT_NODES && n.pow(dim as u32) > MAX_GRID_POINTS {
        n /= 2;
    }
    n
}

fn matrix_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn vec_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tensor_gram(raw: &[RawFunction], region: &Region, start: usize) -> Result<DMatrix<f64>> {
    let m = raw.len();
    let dim = region.dim();
    quadrature::refine(
        "Gram matrix of custom functions",
        start,
        max_nodes_for_dim(dim).max(start),
        |n| {
            let rules = region_rules(region, n);
            let refs: Vec<&Rule> = rules.iter().collect();
            let mut g = DMatrix::zeros(m, m);
            let mut vals = vec![0.0; m];
            for_each_tensor_point(&refs, |x, w| {
                for (v, f) in vals.iter_mut().zip(raw) {
                    *v = f.eval(x);
                }
                for i in 0..m {
                    let wi = w * vals[i];
                    for j in i..m {
                        g[(i, j)] += wi * vals[j];
                    }
                }
            });
            for i in 0..m {
                for j in 0..i {
                    g[(i, j)] = g[(j, i)];
                }
            }
            Ok(g)
        },
        matrix_distance,
    )
}

fn tensor_integrals(raw: &[RawFunction], region: &Region, start: usize) -> Result<Vec<f64>> {
    let dim = region.dim();
    quadrature::refine(
        "integrals of custom functions",
        start,
        max_nodes_for_dim(dim).max(start),
        |n| {
            let rules = region_rules(region, n);
            let refs: Vec<&Rule> = rules.iter().collect();
            let mut out = vec![0.0; raw.len()];
            for_each_tensor_point(&refs, |x, w| {
                for (o, f) in out.iter_mut().zip(raw) {
                    *o += w * f.eval(x);
                }
            });
            Ok(out)
        },
        |a: &Vec<f64>, b: &Vec<f64>| vec_distance(a, b),
    )
}

/// Normalized Legendre values, first and second `t`-derivatives for degrees `0..out.len()`.
fn legendre_values(t: f64, vals: &mut [f64], d1: Option<&mut [f64]>, d2: Option<&mut [f64]>) {
    let m = vals.len();
    let mut p = vec![0.0; m];
    let mut dp = vec![0.0; m];
    let mut ddp = vec![0.0; m];
    p[0] = 1.0;
    if m > 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for n in 1..m.saturating_sub(1) {
        let nf = n as f64;
        p[n + 1] = ((2.0 * nf + 1.0) * t * p[n] - nf * p[n - 1]) / (nf + 1.0);
        dp[n + 1] = dp[n - 1] + (2.0 * nf + 1.0) * p[n];
        ddp[n + 1] = ddp[n - 1] + (2.0 * nf + 1.0) * dp[n];
    }
    let norm = |n: usize| ((2.0 * n as f64 + 1.0) / 2.0).sqrt();
    for n in 0..m {
        vals[n] = norm(n) * p[n];
    }
    if let Some(d1) = d1 {
        for n in 0..m {
            d1[n] = norm(n) * dp[n];
        }
    }
    if let Some(d2) = d2 {
        for n in 0..m {
            d2[n] = norm(n) * ddp[n];
        }
    }
}

fn fourier_values(t: f64, vals: &mut [f64], d2: Option<&mut [f64]>) {
    let m = vals.len();
    vals[0] = FRAC_1_SQRT_2;
    for k in 1..m {
        let j = k.div_ceil(2) as f64;
        let arg = j * std::f64::consts::PI * t;
        vals[k] = if k % 2 == 1 { arg.sin() } else { arg.cos() };
    }
    if let Some(d2) = d2 {
        d2[0] = 0.0;
        for k in 1..m {
            let j = k.div_ceil(2) as f64 * std::f64::consts::PI;
            d2[k] = -j * j * vals[k];
        }
    }
}

/// Normalized Hermite functions by the three-term recurrence.
fn hermite_values(x: f64, vals: &mut [f64], d2: Option<&mut [f64]>) {
    let m = vals.len();
    vals[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if m > 1 {
        vals[1] = std::f64::consts::SQRT_2 * x * vals[0];
    }
    for n in 1..m.saturating_sub(1) {
        let nf = n as f64;
        vals[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * vals[n] - (nf / (nf + 1.0)).sqrt() * vals[n - 1];
    }
    if let Some(d2) = d2 {
        for n in 0..m {
            d2[n] = (x * x - 2.0 * n as f64 - 1.0) * vals[n];
        }
    }
}

impl BasisFamily {
    fn from_inner(inner: Inner) -> Self {
        BasisFamily { inner: Arc::new(inner) }
    }

    pub fn size(&self) -> usize {
        self.inner.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.inner.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.inner.domain
    }

    pub fn is_orthonormal(&self) -> bool {
        self.inner.orthonormal
    }

    pub fn has_second_derivatives(&self) -> bool {
        self.inner.has_second
    }

    pub fn tag(&self) -> FamilyTag {
        match &self.inner.kind {
            Kind::Legendre { .. } => FamilyTag::Legendre,
            Kind::Fourier { .. } => FamilyTag::Fourier,
            Kind::Hermite { .. } => FamilyTag::Hermite,
            Kind::Product { .. } => FamilyTag::Product,
            Kind::Custom { .. } => FamilyTag::Custom,
        }
    }

    /// `F_i = ∫ f_i` over the domain, in family order.
    pub fn integrals(&self) -> &[f64] {
        &self.inner.integrals
    }

    pub fn ids(&self) -> &[BasisFunctionId] {
        &self.inner.ids
    }

    /// Total degree (or frequency) of each member.
    pub fn degrees(&self) -> &[usize] {
        &self.inner.degrees
    }

    pub fn function(&self, index: usize) -> BasisFunction<'_> {
        assert!(index < self.size(), "basis index {index} out of range");
        BasisFunction { family: self, index }
    }

    pub fn functions(&self) -> impl Iterator<Item = BasisFunction<'_>> {
        (0..self.size()).map(move |index| BasisFunction { family: self, index })
    }

    /// Evaluates every member at `x`. Points outside a bounded domain are
    /// evaluated by the same formulas; callers decide whether that is meaningful.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.size());
        match &self.inner.kind {
            Kind::Legendre { lo, hi, .. } => {
                let (t, scale) = affine(x[0], *lo, *hi);
                legendre_values(t, out, None, None);
                out.iter_mut().for_each(|v| *v *= scale);
            }
            Kind::Fourier { lo, hi, .. } => {
                let (t, scale) = affine(x[0], *lo, *hi);
                fourier_values(t, out, None);
                out.iter_mut().for_each(|v| *v *= scale);
            }
            Kind::Hermite { .. } => hermite_values(x[0], out, None),
            Kind::Product { factors, index } => {
                let bufs: Vec<Vec<f64>> = factors
                    .iter()
                    .zip(x)
                    .map(|(f, &xd)| {
                        let mut b = vec![0.0; f.size()];
                        f.eval_into(&[xd], &mut b);
                        b
                    })
                    .collect();
                for (o, t) in out.iter_mut().zip(index) {
                    *o = t.iter().zip(&bufs).map(|(&i, b)| b[i]).product();
                }
            }
            Kind::Custom { raw, combination, .. } => {
                let vals: Vec<f64> = raw.iter().map(|f| f.eval(x)).collect();
                combine(combination.as_ref(), &vals, out);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out);
        out
    }

    /// `∂²f_i/∂x_dim²` for every member at `x`.
    pub fn second_derivative_into(&self, x: &[f64], dim: usize, out: &mut [f64]) -> Result<()> {
        if dim >= self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: dim + 1 });
        }
        match &self.inner.kind {
            Kind::Legendre { lo, hi, .. } => {
                let (t, scale) = affine(x[0], *lo, *hi);
                let mut vals = vec![0.0; out.len()];
                legendre_values(t, &mut vals, None, Some(out));
                let chain = 2.0 / (hi - lo);
                out.iter_mut().for_each(|v| *v *= scale * chain * chain);
            }
            Kind::Fourier { lo, hi, .. } => {
                let (t, scale) = affine(x[0], *lo, *hi);
                let mut vals = vec![0.0; out.len()];
                fourier_values(t, &mut vals, Some(out));
                let chain = 2.0 / (hi - lo);
                out.iter_mut().for_each(|v| *v *= scale * chain * chain);
            }
            Kind::Hermite { .. } => {
                let mut vals = vec![0.0; out.len()];
                hermite_values(x[0], &mut vals, Some(out));
            }
            Kind::Product { factors, index } => {
                let mut bufs = Vec::with_capacity(factors.len());
                for (d, (f, &xd)) in factors.iter().zip(x).enumerate() {
                    let mut b = vec![0.0; f.size()];
                    if d == dim {
                        f.second_derivative_into(&[xd], 0, &mut b)?;
                    } else {
                        f.eval_into(&[xd], &mut b);
                    }
                    bufs.push(b);
                }
                for (o, t) in out.iter_mut().zip(index) {
                    *o = t.iter().zip(&bufs).map(|(&i, b)| b[i]).product();
                }
            }
            Kind::Custom { raw, combination, .. } => {
                let vals = raw
                    .iter()
                    .map(|f| f.second_derivative(x, dim))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| Error::MissingDerivatives("closure-defined functions".into()))?;
                combine(combination.as_ref(), &vals, out);
            }
        }
        Ok(())
    }

    /// Pairwise inner products `⟨f_i, f_j⟩` by adaptive quadrature.
    ///
    /// Gauss–Legendre on bounded axes, Gauss–Hermite on unbounded ones;
    /// the node count starts at 64 and doubles until entries settle to 1e-10.
    pub fn gram_matrix(&self) -> Result<DMatrix<f64>> {
        match &self.inner.kind {
            Kind::Legendre { .. } | Kind::Fourier { .. } => {
                let region = self.inner.domain.region().unwrap().clone();
                self.gram_1d(move |n| region_rules(&region, n).remove(0))
            }
            Kind::Hermite { .. } => self.gram_1d(|n| (*quadrature::gauss_hermite(n)).clone()),
            Kind::Product { factors, index } => {
                // Tensor-grid quadrature of separable integrands factorizes exactly.
                let grams = factors.iter().map(|f| f.gram_matrix()).collect::<Result<Vec<_>>>()?;
                let m = index.len();
                let mut g = DMatrix::zeros(m, m);
                for i in 0..m {
                    for j in i..m {
                        let v: f64 = index[i]
                            .iter()
                            .zip(&index[j])
                            .zip(&grams)
                            .map(|((&a, &b), gd)| gd[(a, b)])
                            .product();
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
                Ok(g)
            }
            Kind::Custom { raw, combination, quad_points } => {
                let region = self.inner.domain.region().unwrap();
                let rg = tensor_gram(raw, region, *quad_points)?;
                Ok(match combination {
                    Some(c) => c * rg * c.transpose(),
                    None => rg,
                })
            }
        }
    }

    fn gram_1d(&self, rule_for: impl Fn(usize) -> Rule) -> Result<DMatrix<f64>> {
        let m = self.size();
        quadrature::refine(
            &format!("Gram matrix of the {} family", self.tag()),
            quadrature::DEFAULT_NODES,
            MAX_NODES_PER_DIM,
            |n| {
                let rule = rule_for(n);
                let mut g = DMatrix::zeros(m, m);
                let mut vals = vec![0.0; m];
                for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                    self.eval_into(&[x], &mut vals);
                    for i in 0..m {
                        let wi = w * vals[i];
                        for j in i..m {
                            g[(i, j)] += wi * vals[j];
                        }
                    }
                }
                for i in 0..m {
                    for j in 0..i {
                        g[(i, j)] = g[(j, i)];
                    }
                }
                Ok(g)
            },
            matrix_distance,
        )
    }

    /// `∫ f` over the family domain by adaptive quadrature.
    ///
    /// Unbounded axes use Gauss–Hermite nodes stretched by √2, which is exact
    /// for polynomials times `e^{-x²/2}`.
    pub fn integrate_over_domain(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        integrate_domain(self.domain(), f)
    }

    pub fn descriptor(&self) -> Result<FamilyDescriptor> {
        Ok(match &self.inner.kind {
            Kind::Legendre { order, .. } => FamilyDescriptor {
                family: FamilyTag::Legendre,
                order: *order,
                region: self.domain().region().cloned(),
                factors: vec![],
                terms: vec![],
                orthonormalize: false,
            },
            Kind::Fourier { freq, .. } => FamilyDescriptor {
                family: FamilyTag::Fourier,
                order: *freq,
                region: self.domain().region().cloned(),
                factors: vec![],
                terms: vec![],
                orthonormalize: false,
            },
            Kind::Hermite { order } => FamilyDescriptor {
                family: FamilyTag::Hermite,
                order: *order,
                region: None,
                factors: vec![],
                terms: vec![],
                orthonormalize: false,
            },
            Kind::Product { factors, .. } => {
                let factors = factors.iter().map(|f| f.descriptor()).collect::<Result<Vec<_>>>()?;
                FamilyDescriptor {
                    family: FamilyTag::Product,
                    order: factors.iter().map(|f| f.order).max().unwrap_or(0),
                    region: self.domain().region().cloned(),
                    factors,
                    terms: vec![],
                    orthonormalize: false,
                }
            }
            Kind::Custom { raw, combination, .. } => {
                let terms = raw
                    .iter()
                    .map(|f| match f {
                        RawFunction::Monomial { coef, exponents } => Ok(MonomialTerm {
                            coef: *coef,
                            exponents: exponents.clone(),
                        }),
                        RawFunction::Closure { .. } => Err(Error::invalid(
                            "closure-defined families cannot be serialized",
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                FamilyDescriptor {
                    family: FamilyTag::Custom,
                    order: self.inner.degrees.iter().copied().max().unwrap_or(0),
                    region: self.domain().region().cloned(),
                    factors: vec![],
                    terms,
                    orthonormalize: combination.is_some(),
                }
            }
        })
    }

    /// Rebuilds a family from its serialized descriptor.
    pub fn from_descriptor(d: &FamilyDescriptor) -> Result<Self> {
        let region = || {
            d.region
                .clone()
                .ok_or_else(|| Error::invalid(format!("{} family requires a region", d.family)))
        };
        match d.family {
            FamilyTag::Legendre => legendre_family(d.order, &region()?),
            FamilyTag::Fourier => fourier_family(d.order, &region()?),
            FamilyTag::Hermite => Ok(hermite_function_family(d.order)),
            FamilyTag::Product => {
                let factors = d.factors.iter().map(Self::from_descriptor).collect::<Result<Vec<_>>>()?;
                tensor_product(&factors)
            }
            FamilyTag::Custom => {
                let region = region()?;
                if d.terms.is_empty() {
                    return Err(Error::invalid("custom family descriptor lists no terms"));
                }
                let raw = d
                    .terms
                    .iter()
                    .map(|t| {
                        if t.exponents.len() != region.dim() {
                            return Err(Error::DimensionMismatch {
                                expected: region.dim(),
                                got: t.exponents.len(),
                            });
                        }
                        Ok(RawFunction::monomial(t.coef, t.exponents.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if d.orthonormalize {
                    gram_schmidt(raw, &region, quadrature::DEFAULT_NODES)
                } else {
                    raw_family(raw, &region)
                }
            }
        }
    }

    /// Builds the `dim`-fold tensor power of a one-dimensional family (`dim = 1` returns it unchanged).
    pub fn power(&self, dim: usize) -> Result<Self> {
        match dim {
            0 => Err(Error::invalid("dimension must be positive")),
            1 => Ok(self.clone()),
            _ => tensor_product(&vec![self.clone(); dim]),
        }
    }
}

fn affine(x: f64, lo: f64, hi: f64) -> (f64, f64) {
    ((2.0 * x - lo - hi) / (hi - lo), (2.0 / (hi - lo)).sqrt())
}

fn combine(combination: Option<&DMatrix<f64>>, vals: &[f64], out: &mut [f64]) {
    match combination {
        Some(c) => {
            for (j, o) in out.iter_mut().enumerate() {
                *o = c.row(j).iter().zip(vals).map(|(a, b)| a * b).sum();
            }
        }
        None => out.copy_from_slice(vals),
    }
}

/// Adaptive tensor quadrature of `f` over a domain.
pub fn integrate_domain(domain: &Domain, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let dim = domain.dim();
    quadrature::refine(
        "domain integral",
        quadrature::DEFAULT_NODES,
        max_nodes_for_dim(dim),
        |n| {
            let rules: Vec<Rule> = match domain {
                Domain::Bounded(r) => region_rules(r, n),
                Domain::Unbounded { dim } => {
                    let r = quadrature::gauss_hermite(n).stretched(std::f64::consts::SQRT_2);
                    vec![r; *dim]
                }
            };
            let refs: Vec<&Rule> = rules.iter().collect();
            let mut total = 0.0;
            for_each_tensor_point(&refs, |x, w| total += w * f(x));
            Ok(total)
        },
        quadrature::scalar_distance,
    )
}

/// Parses a comma-separated list of scaled monomials such as `1, x, 2*x^2*y`.
///
/// Variables are `x`, `y`, `z` or `x1 … xD`; each item is a product of
/// numbers and powers, optionally with a leading minus sign.
pub fn parse_monomials(text: &str, dim: usize) -> Result<Vec<RawFunction>> {
    let bad = |item: &str, why: &str| Error::invalid(format!("cannot parse function `{item}`: {why}"));
    text.split(',')
        .map(|item| {
            let item = item.trim();
            if item.is_empty() {
                return Err(bad(item, "empty term"));
            }
            let (mut coef, body) = match item.strip_prefix('-') {
                Some(rest) => (-1.0, rest.trim()),
                None => (1.0, item),
            };
            let mut exponents = vec![0u32; dim];
            for factor in body.split('*').map(str::trim) {
                if let Ok(v) = factor.parse::<f64>() {
                    coef *= v;
                    continue;
                }
                let (name, power) = match factor.split_once('^') {
                    Some((n, p)) => (n.trim(), p.trim().parse::<u32>().map_err(|_| bad(item, "bad exponent"))?),
                    None => (factor, 1),
                };
                let axis = match name {
                    "x" => 0,
                    "y" => 1,
                    "z" => 2,
                    _ => match name.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
                        Some(k) if k >= 1 => k - 1,
                        _ => return Err(bad(item, "unknown factor")),
                    },
                };
                if axis >= dim {
                    return Err(bad(item, "variable exceeds the dimension"));
                }
                exponents[axis] += power;
            }
            if !coef.is_finite() {
                return Err(bad(item, "non-finite coefficient"));
            }
            Ok(RawFunction::monomial(coef, exponents))
        })
        .collect()
}
