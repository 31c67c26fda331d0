//! Density estimation by averaging basis functions over weighted samples.

pub mod basis;
pub mod bench;
pub mod datasets;
pub mod density;
pub mod error;
pub mod estimator;
pub mod oracle;
pub mod quadrature;
pub mod sample;
pub mod values;

pub use basis::{BasisFamily, Domain, FamilyDescriptor, FamilyTag, Region};
pub use density::{ArgumentLabel, FittedDensity, ModelFile, NegativityReport, SignLabel};
pub use error::{Error, ErrorClass, Result};
pub use estimator::{EstimationOptions, GramMode, KernelSpec, Normalization};
pub use sample::{AffineTransform, AveragingSource, ContinuousSource, WeightMode, WeightedSample};
pub use values::{Coefficients, Scalar, WeightKind};

/// Round-trip formatting for floats written to text outputs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
