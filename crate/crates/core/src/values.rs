//! Real or complex scalars and coefficient vectors.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Real,
    Complex,
}

impl WeightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::Real => "real",
            WeightKind::Complex => "complex",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A density value or an average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Real(f64),
    Complex(Complex64),
}

impl Scalar {
    pub fn kind(&self) -> WeightKind {
        match self {
            Scalar::Real(_) => WeightKind::Real,
            Scalar::Complex(_) => WeightKind::Complex,
        }
    }

    pub fn re(&self) -> f64 {
        match self {
            Scalar::Real(v) => *v,
            Scalar::Complex(c) => c.re,
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        match self {
            Scalar::Real(v) => Complex64::new(*v, 0.0),
            Scalar::Complex(c) => *c,
        }
    }

    pub fn abs(&self) -> f64 {
        match self {
            Scalar::Real(v) => v.abs(),
            Scalar::Complex(c) => c.norm(),
        }
    }

    pub fn as_real(&self) -> Result<f64> {
        match self {
            Scalar::Real(v) => Ok(*v),
            Scalar::Complex(_) => Err(Error::WeightKindMismatch {
                expected: "real",
                found: "complex",
            }),
        }
    }
}

/// Coefficient vector in basis order, homogeneously real or complex.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Coefficients {
    pub fn zeros(kind: WeightKind, len: usize) -> Self {
        match kind {
            WeightKind::Real => Coefficients::Real(vec![0.0; len]),
            WeightKind::Complex => Coefficients::Complex(vec![Complex64::new(0.0, 0.0); len]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Coefficients::Real(v) => v.len(),
            Coefficients::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> WeightKind {
        match self {
            Coefficients::Real(_) => WeightKind::Real,
            Coefficients::Complex(_) => WeightKind::Complex,
        }
    }

    pub fn get(&self, i: usize) -> Scalar {
        match self {
            Coefficients::Real(v) => Scalar::Real(v[i]),
            Coefficients::Complex(v) => Scalar::Complex(v[i]),
        }
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match self {
            Coefficients::Real(v) => Ok(v),
            Coefficients::Complex(_) => Err(Error::WeightKindMismatch {
                expected: "real",
                found: "complex",
            }),
        }
    }

    pub fn as_complex(&self) -> Result<&[Complex64]> {
        match self {
            Coefficients::Complex(v) => Ok(v),
            Coefficients::Real(_) => Err(Error::WeightKindMismatch {
                expected: "complex",
                found: "real",
            }),
        }
    }

    /// Applies a real-linear map to the real vector, or separately to the
    /// real and imaginary parts of a complex one.
    pub fn map_parts(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Coefficients {
        match self {
            Coefficients::Real(v) => Coefficients::Real(f(v)),
            Coefficients::Complex(v) => {
                let re: Vec<f64> = v.iter().map(|c| c.re).collect();
                let im: Vec<f64> = v.iter().map(|c| c.im).collect();
                let (re, im) = (f(&re), f(&im));
                Coefficients::Complex(re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect())
            }
        }
    }

    pub fn scale(&self, s: f64) -> Coefficients {
        self.map_parts(|v| v.iter().map(|x| x * s).collect())
    }

    /// `Σ a_i v_i`.
    pub fn dot(&self, v: &[f64]) -> Scalar {
        match self {
            Coefficients::Real(a) => Scalar::Real(a.iter().zip(v).map(|(x, y)| x * y).sum()),
            Coefficients::Complex(a) => Scalar::Complex(a.iter().zip(v).map(|(x, y)| x * y).sum()),
        }
    }

    /// `self + s·other` (kinds must agree).
    pub fn axpy(&self, s: f64, other: &Coefficients) -> Result<Coefficients> {
        Ok(match (self, other) {
            (Coefficients::Real(a), Coefficients::Real(b)) => {
                Coefficients::Real(a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            }
            (Coefficients::Complex(a), Coefficients::Complex(b)) => {
                Coefficients::Complex(a.iter().zip(b).map(|(x, y)| x + y * s).collect())
            }
            (a, b) => {
                return Err(Error::WeightKindMismatch {
                    expected: a.kind().as_str(),
                    found: b.kind().as_str(),
                })
            }
        })
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i).abs()).collect()
    }
}
