//! Fitted densities `ρ(x) = Σ a_i f_i(x)` and the decision rules built on them.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, Domain, FamilyDescriptor, Region};
use crate::error::{Error, Result};
use crate::sample::AffineTransform;
use crate::values::{Coefficients, Scalar, WeightKind};

/// `|ρ|` below this is treated as a decision boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Half-width of the scan box used for unbounded (Hermite) families.
pub const UNBOUNDED_SCAN_HALF_WIDTH: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct FittedDensity {
    pub family: BasisFamily,
    pub coefficients: Coefficients,
    pub transform: Option<AffineTransform>,
}

/// Result of [`FittedDensity::classify_sign`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignLabel {
    Positive,
    Negative,
    Boundary,
}

impl SignLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SignLabel::Positive => "+1",
            SignLabel::Negative => "-1",
            SignLabel::Boundary => "boundary",
        }
    }
}

/// Result of [`FittedDensity::classify_argument`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgumentLabel {
    Class(usize),
    Undecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityReport {
    pub min_value: f64,
    pub argmin: Vec<f64>,
    /// Fraction of grid points with `ρ < 0`.
    pub negative_fraction: f64,
    pub grid_points: usize,
}

impl FittedDensity {
    pub fn new(family: BasisFamily, coefficients: Coefficients) -> Result<Self> {
        if coefficients.len() != family.size() {
            return Err(Error::DimensionMismatch { expected: family.size(), got: coefficients.len() });
        }
        Ok(FittedDensity { family, coefficients, transform: None })
    }

    pub fn with_transform(mut self, transform: AffineTransform) -> Result<Self> {
        if transform.dim() != self.family.dim() {
            return Err(Error::DimensionMismatch { expected: self.family.dim(), got: transform.dim() });
        }
        self.transform = Some(transform);
        Ok(self)
    }

    pub fn with_coefficients(&self, coefficients: Coefficients) -> Result<Self> {
        let mut d = FittedDensity::new(self.family.clone(), coefficients)?;
        d.transform = self.transform.clone();
        Ok(d)
    }

    pub fn weight_kind(&self) -> WeightKind {
        self.coefficients.kind()
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    fn to_family_coords(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let (y, jac) = match &self.transform {
            Some(t) => (t.apply(x), t.jacobian_abs_det()),
            None => (x.to_vec(), 1.0),
        };
        if !self.family.domain().contains(&y) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok((y, jac))
    }

    /// `Σ a_i f_i(x)`, pulled back through the affine transform when present.
    pub fn evaluate(&self, x: &[f64]) -> Result<Scalar> {
        let (y, jac) = self.to_family_coords(x)?;
        Ok(self.evaluate_family_coords(&y, jac))
    }

    fn evaluate_family_coords(&self, y: &[f64], jac: f64) -> Scalar {
        let vals = self.family.eval(y);
        match self.coefficients.dot(&vals) {
            Scalar::Real(v) => Scalar::Real(v * jac),
            Scalar::Complex(c) => Scalar::Complex(c * jac),
        }
    }

    /// `∫ρ = Σ a_i F_i`; unchanged by the affine transform.
    pub fn integrate(&self) -> Scalar {
        self.coefficients.dot(self.family.integrals())
    }

    /// `∫ρ` by quadrature over the family domain (real part for complex densities).
    pub fn integrate_by_quadrature(&self) -> Result<f64> {
        self.family.integrate_over_domain(|y| self.evaluate_family_coords(y, 1.0).re())
    }

    /// The box scanned by [`Self::negativity_report`], in family coordinates.
    pub fn scan_box(&self) -> Region {
        match self.family.domain() {
            Domain::Bounded(r) => r.clone(),
            Domain::Unbounded { dim } => {
                Region::cube(-UNBOUNDED_SCAN_HALF_WIDTH, UNBOUNDED_SCAN_HALF_WIDTH, *dim).expect("valid scan box")
            }
        }
    }

    /// Grid scan of the real part over the domain (or the `[-8, 8]^D` box).
    ///
    /// `grid` points per axis, endpoints included; `argmin` is reported in
    /// original coordinates.
    pub fn negativity_report(&self, grid: usize) -> Result<NegativityReport> {
        let grid = grid.max(2);
        let bx = self.scan_box();
        let d = bx.dim();
        let total = grid.checked_pow(d as u32).ok_or_else(|| Error::invalid("scan grid too large"))?;
        let jac = self.transform.as_ref().map_or(1.0, |t| t.jacobian_abs_det());
        let mut min_value = f64::INFINITY;
        let mut argmin = vec![0.0; d];
        let mut negative = 0usize;
        let mut y = vec![0.0; d];
        let mut vals = vec![0.0; self.family.size()];
        for k in 0..total {
            let mut rem = k;
            for axis in (0..d).rev() {
                let i = rem % grid;
                rem /= grid;
                let (lo, hi) = (bx.lower()[axis], bx.upper()[axis]);
                y[axis] = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            }
            self.family.eval_into(&y, &mut vals);
            let v = self.coefficients.dot(&vals).re() * jac;
            if v < 0.0 {
                negative += 1;
            }
            if v < min_value {
                min_value = v;
                argmin.copy_from_slice(&y);
            }
        }
        if let Some(t) = &self.transform {
            argmin = t.invert(&argmin)?;
        }
        Ok(NegativityReport {
            min_value,
            argmin,
            negative_fraction: negative as f64 / total as f64,
            grid_points: total,
        })
    }

    /// Sign of `ρ(x)` for real-weighted fits.
    pub fn classify_sign(&self, x: &[f64]) -> Result<SignLabel> {
        let v = self.evaluate(x)?.as_real()?;
        Ok(if v.abs() < BOUNDARY_TOLERANCE {
            SignLabel::Boundary
        } else if v > 0.0 {
            SignLabel::Positive
        } else {
            SignLabel::Negative
        })
    }

    /// `⌊classes·arg ρ(x)/2π⌋` with `arg` taken in `[0, 2π)`; four classes give `⌊(2/π)arg ρ⌋`.
    pub fn classify_argument(&self, x: &[f64], classes: usize) -> Result<ArgumentLabel> {
        if classes < 2 {
            return Err(Error::invalid("argument rule needs at least two classes"));
        }
        let v = match self.evaluate(x)? {
            Scalar::Complex(c) => c,
            Scalar::Real(_) => return Err(Error::WeightKindMismatch { expected: "complex", found: "real" }),
        };
        Ok(argument_class(v, classes))
    }

    /// Zeroes coefficients with `|a_i| ≤ threshold`; returns the survivor count.
    pub fn sparsify(&self, threshold: f64) -> Result<(FittedDensity, usize)> {
        if !(threshold >= 0.0) {
            return Err(Error::invalid("sparsify threshold must be nonnegative"));
        }
        let keep: Vec<bool> = self.coefficients.magnitudes().iter().map(|&m| m > threshold).collect();
        let survivors = keep.iter().filter(|&&k| k).count();
        let coefficients = match &self.coefficients {
            Coefficients::Real(a) => Coefficients::Real(a.iter().zip(&keep).map(|(&x, &k)| if k { x } else { 0.0 }).collect()),
            Coefficients::Complex(a) => Coefficients::Complex(
                a.iter().zip(&keep).map(|(&x, &k)| if k { x } else { Complex64::new(0.0, 0.0) }).collect(),
            ),
        };
        Ok((self.with_coefficients(coefficients)?, survivors))
    }

    pub fn to_model(&self) -> Result<ModelFile> {
        Ok(ModelFile {
            basis: self.family.descriptor()?,
            coefficients: match &self.coefficients {
                Coefficients::Real(a) => CoefficientsRepr::Real(a.clone()),
                Coefficients::Complex(a) => CoefficientsRepr::Complex {
                    re: a.iter().map(|c| c.re).collect(),
                    im: a.iter().map(|c| c.im).collect(),
                },
            },
            transform: self.transform.as_ref().map(|t| TransformRepr {
                mean: t.mean().to_vec(),
                matrix: t.matrix().row_iter().map(|r| r.iter().copied().collect()).collect(),
            }),
            weight_kind: self.weight_kind(),
            config: None,
        })
    }

    pub fn from_model(model: &ModelFile) -> Result<Self> {
        let family = BasisFamily::from_descriptor(&model.basis)?;
        let coefficients = match (&model.coefficients, model.weight_kind) {
            (CoefficientsRepr::Real(a), WeightKind::Real) => Coefficients::Real(a.clone()),
            (CoefficientsRepr::Complex { re, im }, WeightKind::Complex) => {
                if re.len() != im.len() {
                    return Err(Error::DimensionMismatch { expected: re.len(), got: im.len() });
                }
                Coefficients::Complex(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
            }
            (_, kind) => {
                return Err(Error::invalid(format!("coefficient layout does not match weight_kind `{kind}`")))
            }
        };
        let mut density = FittedDensity::new(family, coefficients)?;
        if let Some(t) = &model.transform {
            let d = t.mean.len();
            if t.matrix.len() != d || t.matrix.iter().any(|r| r.len() != d) {
                return Err(Error::invalid("transform matrix must be square and match the mean"));
            }
            let matrix = DMatrix::from_row_iterator(d, d, t.matrix.iter().flatten().copied());
            density = density.with_transform(AffineTransform::new(t.mean.clone(), matrix)?)?;
        }
        Ok(density)
    }

    pub fn save(&self, path: impl AsRef<Path>, config: Option<serde_json::Value>) -> Result<()> {
        let mut model = self.to_model()?;
        model.config = config;
        model.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model(&ModelFile::load(path)?)
    }
}

/// Quadrant-style class of a complex value, or undecided near zero.
pub fn argument_class(v: Complex64, classes: usize) -> ArgumentLabel {
    if v.norm() < BOUNDARY_TOLERANCE {
        return ArgumentLabel::Undecided;
    }
    let mut arg = v.arg();
    if arg < 0.0 {
        arg += std::f64::consts::TAU;
    }
    let k = (classes as f64 * arg / std::f64::consts::TAU).floor() as usize;
    ArgumentLabel::Class(k % classes)
}

/// On-disk model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub basis: FamilyDescriptor,
    pub coefficients: CoefficientsRepr,
    pub transform: Option<TransformRepr>,
    pub weight_kind: WeightKind,
    /// Resolved settings of the run that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientsRepr {
    Real(Vec<f64>),
    Complex { re: Vec<f64>, im: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRepr {
    pub mean: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
