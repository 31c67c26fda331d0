//! Weighted point samples, continuous knowledge sources and whitening.
//!
//! Everything that can be averaged over implements [`AveragingSource`]: a
//! discrete [`WeightedSample`], a [`ContinuousSource`] integrated along a
//! curve, or a [`MergedSource`] mixing both. Sums over points use a fixed
//! pairwise reduction tree, so results do not depend on the thread count.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::basis::{BasisFamily, Region};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::quadrature;
use crate::values::{Coefficients, WeightKind};

/// Points per sequential leaf of the reduction tree.
const LEAF: usize = 256;
/// Ranges larger than this are split across threads.
const PARALLEL_SPLIT: usize = 8192;

/// Per-point weights `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Weights {
    pub fn len(&self) -> usize {
        match self {
            Weights::Real(w) => w.len(),
            Weights::Complex(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> WeightKind {
        match self {
            Weights::Real(_) => WeightKind::Real,
            Weights::Complex(_) => WeightKind::Complex,
        }
    }
}

/// How trailing CSV columns map to weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// No weight column; `W = 1`.
    #[default]
    None,
    /// One trailing real weight column.
    Real,
    /// Two trailing columns holding the real and imaginary part.
    Complex,
}

impl WeightMode {
    fn columns(self) -> usize {
        match self {
            WeightMode::None => 0,
            WeightMode::Real => 1,
            WeightMode::Complex => 2,
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightMode::None),
            "real" => Ok(WeightMode::Real),
            "complex" => Ok(WeightMode::Complex),
            other => Err(Error::invalid(format!("unknown weight mode `{other}` (expected none|real|complex)"))),
        }
    }
}

/// `n` points in `R^D` with one weight each.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    dim: usize,
    points: Vec<f64>,
    weights: Weights,
    region_filter: Option<Region>,
}

impl WeightedSample {
    /// Builds a sample from row-major `points` (`n·dim` values).
    pub fn new(dim: usize, points: Vec<f64>, weights: Weights) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sample dimension must be positive"));
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} coordinates do not split into points of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite coordinates"));
        }
        let finite = match &weights {
            Weights::Real(w) => w.iter().all(|v| v.is_finite()),
            Weights::Complex(w) => w.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        };
        if !finite {
            return Err(Error::invalid("sample contains non-finite weights"));
        }
        Ok(WeightedSample { dim, points, weights, region_filter: None })
    }

    /// Unit-weight sample.
    pub fn unweighted(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len().checked_div(dim).unwrap_or(0);
        Self::new(dim, points, Weights::Real(vec![1.0; n]))
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Weights) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptySample)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Self::new(dim, rows.concat(), weights)
    }

    /// Restricts averaging to points inside `region` (`w = 1` inside, 0 outside).
    pub fn with_region_filter(mut self, region: Region) -> Result<Self> {
        if region.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: region.dim() });
        }
        self.region_filter = Some(region);
        Ok(self)
    }

    pub fn region_filter(&self) -> Option<&Region> {
        self.region_filter.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn weight_kind(&self) -> WeightKind {
        self.weights.kind()
    }

    /// Same points with every weight multiplied by `factor`.
    pub fn scaled_weights(&self, factor: f64) -> Self {
        let weights = match &self.weights {
            Weights::Real(w) => Weights::Real(w.iter().map(|v| v * factor).collect()),
            Weights::Complex(w) => Weights::Complex(w.iter().map(|v| v * factor).collect()),
        };
        WeightedSample { weights, ..self.clone() }
    }

    fn inside(&self, x: &[f64], filter: Option<&Region>) -> bool {
        self.region_filter.as_ref().is_none_or(|r| r.contains(x)) && filter.is_none_or(|r| r.contains(x))
    }

    /// Number of points that pass both the sample filter and `filter`.
    pub fn count_inside(&self, filter: Option<&Region>) -> usize {
        self.points().filter(|x| self.inside(x, filter)).count()
    }

    fn weighted_sums<W: WeightScalar>(
        &self,
        weights: &[W],
        m: usize,
        filter: Option<&Region>,
        eval: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Vec<W> {
        pairwise(0, self.len(), m, &|lo, hi, acc: &mut [W]| {
            let mut buf = vec![0.0; m];
            for i in lo..hi {
                let x = self.point(i);
                if !self.inside(x, filter) {
                    continue;
                }
                eval(x, &mut buf);
                let w = weights[i];
                for (a, &v) in acc.iter_mut().zip(&buf) {
                    *a += w.scale(v);
                }
            }
        })
    }
}

/// Scalar types a weight can take.
pub(crate) trait WeightScalar: Copy + Send + Sync + std::ops::AddAssign {
    fn zero() -> Self;
    fn scale(self, s: f64) -> Self;
}

impl WeightScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl WeightScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Fixed-shape pairwise reduction over `[lo, hi)`; the tree depends only on the range.
fn pairwise<W: WeightScalar>(
    lo: usize,
    hi: usize,
    m: usize,
    leaf: &(dyn Fn(usize, usize, &mut [W]) + Sync),
) -> Vec<W> {
    if hi - lo <= LEAF {
        let mut acc = vec![W::zero(); m];
        leaf(lo, hi, &mut acc);
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let (mut a, b) = if hi - lo > PARALLEL_SPLIT {
        rayon::join(|| pairwise(lo, mid, m, leaf), || pairwise(mid, hi, m, leaf))
    } else {
        (pairwise(lo, mid, m, leaf), pairwise(mid, hi, m, leaf))
    };
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Anything the estimator can average basis functions over.
pub trait AveragingSource: Sync {
    fn dim(&self) -> usize;

    fn weight_kind(&self) -> WeightKind;

    /// The averages `[g_k]` of the `m` outputs of `eval`, restricted to `filter`.
    fn average_vector(
        &self,
        m: usize,
        filter: Option<&Region>,
        eval: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Result<Coefficients>;

    /// The average `[f]` of a single function.
    fn average(&self, filter: Option<&Region>, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<crate::values::Scalar> {
        let v = self.average_vector(1, filter, &|x, out| out[0] = f(x))?;
        Ok(v.get(0))
    }

    /// Averages of every member of `family`, with the family region as indicator weight.
    fn basis_averages(&self, family: &BasisFamily) -> Result<Coefficients> {
        if family.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: family.dim(), got: self.dim() });
        }
        self.average_vector(family.size(), family.domain().region(), &|x, out| family.eval_into(x, out))
    }
}

impl AveragingSource for WeightedSample {
    fn dim(&self) -> usize {
        self.dim
    }

    fn weight_kind(&self) -> WeightKind {
        self.weights.kind()
    }

    /// `(1/n_in) Σ W(x) g(x)` over the `n_in` points inside the filters.
    fn average_vector(
        &self,
        m: usize,
        filter: Option<&Region>,
        eval: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Result<Coefficients> {
        let n_in = self.count_inside(filter);
        if n_in == 0 {
            return Err(Error::EmptySample);
        }
        let inv = 1.0 / n_in as f64;
        Ok(match &self.weights {
            Weights::Real(w) => {
                Coefficients::Real(self.weighted_sums(w, m, filter, eval).into_iter().map(|v| v * inv).collect())
            }
            Weights::Complex(w) => {
                Coefficients::Complex(self.weighted_sums(w, m, filter, eval).into_iter().map(|v| v * inv).collect())
            }
        })
    }
}

fn parse_err(path: Option<&Path>, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.map(Path::to_path_buf), line, message: message.into() }
}

/// Reads a headerless CSV sample: `D` coordinates then the weight columns of `mode`.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn load_csv(path: impl AsRef<Path>, mode: WeightMode) -> Result<WeightedSample> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, mode, Some(path))
}

pub fn read_csv(reader: impl Read, mode: WeightMode, path: Option<&Path>) -> Result<WeightedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut dim = None;
    let mut coords = Vec::new();
    let mut real_w = Vec::new();
    let mut complex_w = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let values = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("column {}: cannot parse `{field}` as a number", col + 1)))?;
                if !v.is_finite() {
                    return Err(parse_err(path, line, format!("column {}: non-finite value `{field}`", col + 1)));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        let wcols = mode.columns();
        if values.len() <= wcols {
            return Err(parse_err(
                path,
                line,
                format!("expected at least {} columns, found {}", wcols + 1, values.len()),
            ));
        }
        let d = values.len() - wcols;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(parse_err(
                    path,
                    line,
                    format!("row has {} columns, earlier rows have {}", values.len(), prev + wcols),
                ))
            }
            _ => {}
        }
        coords.extend_from_slice(&values[..d]);
        match mode {
            WeightMode::None => real_w.push(1.0),
            WeightMode::Real => real_w.push(values[d]),
            WeightMode::Complex => complex_w.push(Complex64::new(values[d], values[d + 1])),
        }
    }
    let dim = dim.ok_or_else(|| parse_err(path, 0, "file contains no data rows"))?;
    let weights = match mode {
        WeightMode::Complex => Weights::Complex(complex_w),
        _ => Weights::Real(real_w),
    };
    WeightedSample::new(dim, coords, weights)
}

/// Writes a sample in the format read by [`load_csv`], with weights unless they are all 1.
pub fn write_csv(sample: &WeightedSample, mut out: impl Write, mode: WeightMode) -> Result<()> {
    let io = |e| Error::io("<output>", e);
    for (i, x) in sample.points().enumerate() {
        let mut fields: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        match (mode, &sample.weights) {
            (WeightMode::None, _) => {}
            (WeightMode::Real, Weights::Real(w)) => fields.push(fmt_f64(w[i])),
            (WeightMode::Complex, Weights::Complex(w)) => {
                fields.push(fmt_f64(w[i].re));
                fields.push(fmt_f64(w[i].im));
            }
            (WeightMode::Complex, Weights::Real(w)) => {
                fields.push(fmt_f64(w[i]));
                fields.push(fmt_f64(0.0));
            }
            (WeightMode::Real, Weights::Complex(_)) => {
                return Err(Error::WeightKindMismatch { expected: "real", found: "complex" })
            }
        }
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    Ok(())
}

pub fn save_csv(sample: &WeightedSample, path: impl AsRef<Path>, mode: WeightMode) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(sample, &mut w, mode)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// `x ↦ matrix·(x − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    mean: Vec<f64>,
    matrix: DMatrix<f64>,
    jacobian_abs_det: f64,
}

impl AffineTransform {
    pub fn new(mean: Vec<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: matrix.nrows() });
        }
        let det = matrix.clone().lu().determinant().abs();
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::invalid("affine transform matrix is not invertible"));
        }
        Ok(AffineTransform { mean, matrix, jacobian_abs_det: det })
    }

    pub fn identity(dim: usize) -> Self {
        AffineTransform { mean: vec![0.0; dim], matrix: DMatrix::identity(dim, dim), jacobian_abs_det: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn jacobian_abs_det(&self) -> f64 {
        self.jacobian_abs_det
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)] * (x[j] - self.mean[j])).sum())
            .collect()
    }

    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        let rhs = nalgebra::DVector::from_column_slice(y);
        let sol = self
            .matrix
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::invalid("affine transform matrix is singular"))?;
        Ok(sol.iter().zip(&self.mean).map(|(a, m)| a + m).collect())
    }
}

/// Eigenvalues at or below this make the covariance singular.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

/// Centers the sample and rescales its principal axes to unit variance.
///
/// Uses the population covariance (divisor `n`) and ignores weights. Eigen
/// directions are sorted by decreasing eigenvalue; each eigenvector is signed
/// so its first nonzero component is positive.
pub fn whiten(sample: &WeightedSample) -> Result<(WeightedSample, AffineTransform)> {
    let (n, d) = (sample.len(), sample.dim());
    if n <= d {
        return Err(Error::invalid(format!("whitening needs more points ({n}) than dimensions ({d})")));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for x in sample.points() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in sample.points() {
        for i in 0..d {
            let xi = x[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += xi * (x[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= nf;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| f64::total_cmp(&eig.eigenvalues[b], &eig.eigenvalues[a]));
    let mut matrix = DMatrix::zeros(d, d);
    for (row, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        let mut vec: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if let Some(first) = vec.iter().find(|v| v.abs() > 1e-14) {
            if *first < 0.0 {
                vec.iter_mut().for_each(|v| *v = -*v);
            }
        }
        if !(lambda > SINGULAR_EIGENVALUE) {
            return Err(Error::SingularCovariance { eigenvalue: lambda, eigenvector: vec });
        }
        let s = 1.0 / lambda.sqrt();
        for (j, v) in vec.iter().enumerate() {
            matrix[(row, j)] = s * v;
        }
    }
    let transform = AffineTransform::new(mean, matrix)?;
    let mut out = Vec::with_capacity(n * d);
    for x in sample.points() {
        out.extend(transform.apply(x));
    }
    let whitened = WeightedSample::new(d, out, sample.weights.clone())?;
    Ok((whitened, transform))
}

/// A parametrized curve `[0, 1] → R^D`.
pub trait Curve: Send + Sync {
    fn dim(&self) -> usize;

    fn point(&self, t: f64, out: &mut [f64]);

    /// `|dγ/dt|`; the default uses a central difference.
    fn speed(&self, t: f64) -> f64 {
        let h = 1e-6;
        let d = self.dim();
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let (t0, t1) = ((t - h).max(0.0), (t + h).min(1.0));
        self.point(t0, &mut a);
        self.point(t1, &mut b);
        a.iter().zip(&b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt() / (t1 - t0)
    }
}

/// A curve that stays at one point (a point mass under the parameter measure).
#[derive(Debug, Clone)]
pub struct FixedPoint(pub Vec<f64>);

impl Curve for FixedPoint {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn point(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn speed(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Straight segment from `start` to `end`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl Curve for Segment {
    fn dim(&self) -> usize {
        self.start.len()
    }
    fn point(&self, t: f64, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(&self.start).zip(&self.end) {
            *o = a + t * (b - a);
        }
    }
    fn speed(&self, _t: f64) -> f64 {
        self.start.iter().zip(&self.end).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }
}

/// Circle of `radius` around `center` in the plane.
#[derive(Debug, Clone)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Curve for Circle {
    fn dim(&self) -> usize {
        2
    }
    fn point(&self, t: f64, out: &mut [f64]) {
        let a = std::f64::consts::TAU * t;
        out[0] = self.center[0] + self.radius * a.cos();
        out[1] = self.center[1] + self.radius * a.sin();
    }
    fn speed(&self, _t: f64) -> f64 {
        std::f64::consts::TAU * self.radius
    }
}

/// Archimedean spiral `r(s) = r0 + c·s`, `s ∈ [0, s_max]`, rotated by `rotation`.
#[derive(Debug, Clone)]
pub struct ArchimedeanSpiral {
    pub r0: f64,
    pub c: f64,
    pub s_max: f64,
    pub rotation: f64,
}

impl ArchimedeanSpiral {
    /// Two full turns (`s ∈ [0, 4π]`).
    pub fn two_turns(r0: f64, c: f64, rotation: f64) -> Self {
        ArchimedeanSpiral { r0, c, s_max: 4.0 * std::f64::consts::PI, rotation }
    }
}

impl Curve for ArchimedeanSpiral {
    fn dim(&self) -> usize {
        2
    }
    fn point(&self, t: f64, out: &mut [f64]) {
        let s = t * self.s_max;
        let r = self.r0 + self.c * s;
        let a = s + self.rotation;
        out[0] = r * a.cos();
        out[1] = r * a.sin();
    }
    fn speed(&self, t: f64) -> f64 {
        let r = self.r0 + self.c * t * self.s_max;
        self.s_max * (self.c * self.c + r * r).sqrt()
    }
}

/// Weight carried by a continuous source.
#[derive(Clone)]
pub enum SourceWeight {
    Real(f64),
    Complex(Complex64),
    RealFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    ComplexFn(Arc<dyn Fn(f64) -> Complex64 + Send + Sync>),
}

impl std::fmt::Debug for SourceWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceWeight::Real(v) => write!(f, "Real({v})"),
            SourceWeight::Complex(v) => write!(f, "Complex({v})"),
            SourceWeight::RealFn(_) => f.write_str("RealFn(..)"),
            SourceWeight::ComplexFn(_) => f.write_str("ComplexFn(..)"),
        }
    }
}

impl SourceWeight {
    pub fn kind(&self) -> WeightKind {
        match self {
            SourceWeight::Real(_) | SourceWeight::RealFn(_) => WeightKind::Real,
            _ => WeightKind::Complex,
        }
    }

    fn at(&self, t: f64) -> Complex64 {
        match self {
            SourceWeight::Real(v) => Complex64::new(*v, 0.0),
            SourceWeight::Complex(v) => *v,
            SourceWeight::RealFn(f) => Complex64::new(f(t), 0.0),
            SourceWeight::ComplexFn(f) => f(t),
        }
    }
}

/// Measure along the curve parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// `dμ = dt`.
    Parameter,
    /// `dμ = |γ'(t)| dt`.
    ArcLength,
}

/// Continuous knowledge: a weighted curve averaged by integration.
#[derive(Clone)]
pub struct ContinuousSource {
    pub curve: Arc<dyn Curve>,
    pub weight: SourceWeight,
    pub measure: Measure,
    /// Initial number of quadrature nodes along the curve.
    pub quad_points: usize,
    /// Normalization constant `C` dividing the integral.
    pub normalization: f64,
}

impl std::fmt::Debug for ContinuousSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContinuousSource")
            .field("dim", &self.curve.dim())
            .field("weight", &self.weight)
            .field("measure", &self.measure)
            .field("quad_points", &self.quad_points)
            .field("normalization", &self.normalization)
            .finish()
    }
}

/// Nodes per composite panel along a curve.
const CURVE_PANEL_ORDER: usize = 16;
/// Node budget for curve integration.
pub const MAX_CURVE_NODES: usize = 1 << 14;

impl ContinuousSource {
    pub fn new(curve: impl Curve + 'static, weight: SourceWeight) -> Self {
        ContinuousSource {
            curve: Arc::new(curve),
            weight,
            measure: Measure::ArcLength,
            quad_points: 256,
            normalization: 1.0,
        }
    }

    pub fn with_measure(mut self, measure: Measure) -> Self {
        self.measure = measure;
        self
    }

    pub fn with_normalization(mut self, c: f64) -> Self {
        self.normalization = c;
        self
    }

    pub fn with_quad_points(mut self, n: usize) -> Self {
        self.quad_points = n;
        self
    }

    /// Points at the evenly spaced parameters `t_k = (k + offset)/count`.
    pub fn points(&self, count: usize, offset: f64) -> Vec<Vec<f64>> {
        let d = self.curve.dim();
        (0..count)
            .map(|k| {
                let mut p = vec![0.0; d];
                self.curve.point((k as f64 + offset) / count as f64, &mut p);
                p
            })
            .collect()
    }

    fn integrate_with(&self, panels: usize, m: usize, filter: Option<&Region>, eval: &(dyn Fn(&[f64], &mut [f64]) + Sync)) -> Vec<Complex64> {
        let rule = quadrature::composite_gauss_legendre(0.0, 1.0, panels, CURVE_PANEL_ORDER);
        let d = self.curve.dim();
        let mut x = vec![0.0; d];
        let mut buf = vec![0.0; m];
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            self.curve.point(t, &mut x);
            if filter.is_some_and(|r| !r.contains(&x)) {
                continue;
            }
            let dmu = match self.measure {
                Measure::Parameter => 1.0,
                Measure::ArcLength => self.curve.speed(t),
            };
            let wt = self.weight.at(t) * (w * dmu);
            eval(&x, &mut buf);
            for (a, &v) in acc.iter_mut().zip(&buf) {
                *a += wt * v;
            }
        }
        let inv = 1.0 / self.normalization;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }
}

impl AveragingSource for ContinuousSource {
    fn dim(&self) -> usize {
        self.curve.dim()
    }

    fn weight_kind(&self) -> WeightKind {
        self.weight.kind()
    }

    /// `(1/C) ∫ W(t) g(γ(t)) dμ(t)` by composite Gauss–Legendre along `t`.
    fn average_vector(
        &self,
        m: usize,
        filter: Option<&Region>,
        eval: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Result<Coefficients> {
        if !(self.normalization.is_finite() && self.normalization != 0.0) {
            return Err(Error::invalid("continuous source normalization must be finite and nonzero"));
        }
        let start_panels = self.quad_points.div_ceil(CURVE_PANEL_ORDER).max(1);
        let max_panels = (MAX_CURVE_NODES / CURVE_PANEL_ORDER).max(start_panels);
        let acc = quadrature::refine(
            "curve average",
            start_panels,
            max_panels,
            |panels| Ok(self.integrate_with(panels, m, filter, eval)),
            |a: &Vec<Complex64>, b: &Vec<Complex64>| {
                let scale = a.iter().map(|v| v.norm()).fold(1.0, f64::max);
                a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
            },
        )?;
        Ok(match self.weight.kind() {
            WeightKind::Real => Coefficients::Real(acc.iter().map(|c| c.re).collect()),
            WeightKind::Complex => Coefficients::Complex(acc),
        })
    }
}

/// Averages of `family` along a continuous source.
pub fn curve_average(source: &ContinuousSource, family: &BasisFamily) -> Result<Coefficients> {
    source.basis_averages(family)
}

/// Convex mixture of a discrete sample and continuous sources.
#[derive(Debug, Clone)]
pub struct MergedSource {
    discrete: Option<WeightedSample>,
    continuous: Vec<ContinuousSource>,
    mix: Vec<f64>,
    dim: usize,
    kind: WeightKind,
}

/// Mixture weights must sum to 1 within this tolerance.
const MIX_SUM_TOLERANCE: f64 = 1e-12;

/// Builds `[f] = mix_0·[f]_discrete + Σ_k mix_{k+1}·[f]_k`.
///
/// `mix` has one entry for the discrete part (first) plus one per continuous source.
pub fn merge_sources(
    discrete: Option<WeightedSample>,
    continuous: Vec<ContinuousSource>,
    mix: Vec<f64>,
) -> Result<MergedSource> {
    if mix.len() != continuous.len() + 1 {
        return Err(Error::DimensionMismatch { expected: continuous.len() + 1, got: mix.len() });
    }
    if mix.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid("mixture weights must be nonnegative"));
    }
    if (mix.iter().sum::<f64>() - 1.0).abs() > MIX_SUM_TOLERANCE {
        return Err(Error::invalid("mixture weights must sum to 1"));
    }
    if discrete.is_none() && mix[0] != 0.0 {
        return Err(Error::invalid("mixture gives weight to a missing discrete sample"));
    }
    let active_continuous = continuous.iter().zip(&mix[1..]).any(|(_, &w)| w > 0.0);
    if !active_continuous && (discrete.is_none() || mix[0] == 0.0) {
        return Err(Error::invalid("mixture has no source with positive weight"));
    }
    let mut dims = discrete.iter().map(|d| (d.dim(), d.weight_kind())).chain(continuous.iter().map(|c| (c.dim(), c.weight_kind())));
    let (dim, kind) = dims.next().ok_or_else(|| Error::invalid("no sources to merge"))?;
    for (d, k) in dims {
        if d != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: d });
        }
        if k != kind {
            return Err(Error::WeightKindMismatch { expected: kind.as_str(), found: k.as_str() });
        }
    }
    Ok(MergedSource { discrete, continuous, mix, dim, kind })
}

impl AveragingSource for MergedSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn weight_kind(&self) -> WeightKind {
        self.kind
    }

    fn average_vector(
        &self,
        m: usize,
        filter: Option<&Region>,
        eval: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Result<Coefficients> {
        let mut total = Coefficients::zeros(self.kind, m);
        if let (Some(d), w) = (&self.discrete, self.mix[0]) {
            if w > 0.0 {
                total = total.axpy(w, &d.average_vector(m, filter, eval)?)?;
            }
        }
        for (c, &w) in self.continuous.iter().zip(&self.mix[1..]) {
            if w > 0.0 {
                total = total.axpy(w, &c.average_vector(m, filter, eval)?)?;
            }
        }
        Ok(total)
    }
}
