//! Coefficient estimation from averaging functionals.
//!
//! For an orthonormal family the mean-square optimal coefficients are the
//! plain averages `a_i = [f_i]`. Other families solve `G a = [f]` with the
//! Gram matrix `G`. A normalization constraint `Σ a_i F_i = C` is imposed by
//! a Lagrange multiplier, and a finite-width smoothing kernel is accounted
//! for by the second-order correction `a_i = [f_i + v f_i'']`.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::density::FittedDensity;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::sample::{whiten, AveragingSource, WeightedSample};
use crate::values::{Coefficients, Scalar};

/// Gram matrices at or above this condition estimate are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Tolerance on `∫k = 1` for kernels.
pub const KERNEL_NORMALIZATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// Constrained minimization with `Σ a_i F_i = c`.
    Lagrange { c: f64 },
    /// Divide every coefficient by `∫ρ` after fitting.
    PosthocRescale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramMode {
    #[default]
    AssumeOrthonormal,
    Solve,
}

#[derive(Debug, Clone, Default)]
pub struct EstimationOptions {
    pub normalization: Normalization,
    pub kernel_correction: Option<KernelSpec>,
    pub gram_mode: GramMode,
}

/// Where a kernel lives, for numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSupport {
    /// Zero outside `[-a, a]`.
    Compact(f64),
    /// Decays on the length `scale`; integrated over `±30·scale`.
    Decay(f64),
}

impl KernelSupport {
    fn half_width(self) -> f64 {
        match self {
            KernelSupport::Compact(a) => a,
            KernelSupport::Decay(s) => 30.0 * s,
        }
    }
}

/// Symmetric smoothing kernel with its correction constant `v = ½∫h²k(h)dh`.
#[derive(Clone)]
pub struct KernelSpec {
    kernel: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: KernelSupport,
    v: f64,
}

impl std::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelSpec").field("support", &self.support).field("v", &self.v).finish()
    }
}

impl KernelSpec {
    pub fn new(kernel: impl Fn(f64) -> f64 + Send + Sync + 'static, support: KernelSupport) -> Result<Self> {
        let v = kernel_variance(&kernel, support)?;
        Ok(KernelSpec { kernel: Arc::new(kernel), support, v })
    }

    /// Normal density with standard deviation `eps`.
    pub fn gaussian(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("kernel width must be positive, got {eps}")));
        }
        let norm = 1.0 / (eps * (2.0 * std::f64::consts::PI).sqrt());
        Self::new(move |h| norm * (-0.5 * (h / eps).powi(2)).exp(), KernelSupport::Decay(eps))
    }

    /// Box kernel of height `1/2a` on `[-a, a]`.
    pub fn uniform(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("kernel half-width must be positive, got {a}")));
        }
        Self::new(move |h| if h.abs() <= a { 0.5 / a } else { 0.0 }, KernelSupport::Compact(a))
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn support(&self) -> KernelSupport {
        self.support
    }

    pub fn eval(&self, h: f64) -> f64 {
        (self.kernel)(h)
    }
}

/// `v = ½∫h²k(h)dh` by adaptive composite Gauss–Legendre quadrature.
///
/// Rejects kernels whose integral differs from 1 by more than 1e-8 and
/// kernels with `k(h) ≠ k(−h)` at sampled points.
pub fn kernel_variance(kernel: &dyn Fn(f64) -> f64, support: KernelSupport) -> Result<f64> {
    let l = support.half_width();
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid("kernel support must be positive and finite"));
    }
    for j in 1..=16 {
        let h = l * j as f64 / 17.0;
        let (left, right) = (kernel(h), kernel(-h));
        if (left - right).abs() > 1e-12 * left.abs().max(right.abs()) {
            return Err(Error::KernelAsymmetric { h, left, right });
        }
    }
    let (mass, second) = quadrature::refine(
        "kernel moments",
        8,
        4096,
        |panels| {
            let rule = quadrature::composite_gauss_legendre(-l, l, panels, 16);
            let mut mass = 0.0;
            let mut second = 0.0;
            for (&h, &w) in rule.nodes.iter().zip(&rule.weights) {
                let k = kernel(h);
                mass += w * k;
                second += w * h * h * k;
            }
            Ok((mass, second))
        },
        |a: &(f64, f64), b: &(f64, f64)| (a.0 - b.0).abs().max((a.1 - b.1).abs() / a.1.abs().max(1e-300)),
    )?;
    if (mass - 1.0).abs() > KERNEL_NORMALIZATION_TOLERANCE {
        return Err(Error::KernelNotNormalized { integral: mass });
    }
    Ok(0.5 * second)
}

/// `[f]`, the weighted mean of `f` over the source.
pub fn average_functional(source: &dyn AveragingSource, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Scalar> {
    source.average(None, f)
}

fn require_orthonormal(family: &BasisFamily) -> Result<()> {
    if family.is_orthonormal() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "the {} family is not orthonormal; use the Gram solve",
            family.tag()
        )))
    }
}

/// `a_i = [f_i]` for an orthonormal family.
pub fn fit_orthonormal(source: &dyn AveragingSource, family: &BasisFamily) -> Result<FittedDensity> {
    require_orthonormal(family)?;
    FittedDensity::new(family.clone(), source.basis_averages(family)?)
}

/// Solves `G a = [f]` with the quadrature Gram matrix `G`.
pub fn fit_general(source: &dyn AveragingSource, family: &BasisFamily) -> Result<FittedDensity> {
    let averages = source.basis_averages(family)?;
    let solver = GramSolver::new(&family.gram_matrix()?)?;
    FittedDensity::new(family.clone(), averages.map_parts(|b| solver.solve(b)))
}

/// Lagrange-constrained fit satisfying `Σ a_i F_i = c`.
pub fn fit_normalized(source: &dyn AveragingSource, family: &BasisFamily, c: f64) -> Result<FittedDensity> {
    require_orthonormal(family)?;
    let averages = source.basis_averages(family)?;
    let coefficients = lagrange_adjust(&averages, family.integrals(), c)?;
    FittedDensity::new(family.clone(), coefficients)
}

/// `a_i = [f_i] + λF_i` with `λ = (c − Σ[f_j]F_j)/Σ F_j²`.
pub fn lagrange_adjust(averages: &Coefficients, integrals: &[f64], c: f64) -> Result<Coefficients> {
    let norm2: f64 = integrals.iter().map(|f| f * f).sum();
    if norm2 == 0.0 {
        return Err(Error::UnsatisfiableConstraint);
    }
    Ok(match averages {
        Coefficients::Real(a) => {
            let dot: f64 = a.iter().zip(integrals).map(|(x, f)| x * f).sum();
            let lambda = (c - dot) / norm2;
            Coefficients::Real(a.iter().zip(integrals).map(|(x, f)| x + lambda * f).collect())
        }
        Coefficients::Complex(a) => {
            let dot: num_complex::Complex64 = a.iter().zip(integrals).map(|(x, f)| x * f).sum();
            let lambda = (num_complex::Complex64::new(c, 0.0) - dot) / norm2;
            Coefficients::Complex(a.iter().zip(integrals).map(|(x, f)| x + lambda * f).collect())
        }
    })
}

/// `a_i = [f_i + v f_i'']` for one-dimensional orthonormal families.
pub fn fit_kernel_corrected(source: &dyn AveragingSource, family: &BasisFamily, kernel: &KernelSpec) -> Result<FittedDensity> {
    require_orthonormal(family)?;
    FittedDensity::new(family.clone(), corrected_averages(source, family, kernel.v())?)
}

fn corrected_averages(source: &dyn AveragingSource, family: &BasisFamily, v: f64) -> Result<Coefficients> {
    if family.dim() != 1 || source.dim() != 1 {
        return Err(Error::invalid("kernel correction is only defined for one-dimensional data"));
    }
    if !family.has_second_derivatives() {
        return Err(Error::MissingDerivatives(format!("the {} family", family.tag())));
    }
    if v == 0.0 {
        return source.basis_averages(family);
    }
    let m = family.size();
    source.average_vector(m, family.domain().region(), &|x, out| {
        family.eval_into(x, out);
        let mut d2 = vec![0.0; m];
        family
            .second_derivative_into(x, 0, &mut d2)
            .expect("second derivatives checked above");
        for (o, s) in out.iter_mut().zip(d2) {
            *o += v * s;
        }
    })
}

/// Divides the density by its integral `Σ a_i F_i`.
pub fn posthoc_rescale(density: &FittedDensity) -> Result<FittedDensity> {
    let total = density.integrate();
    let t = total.abs();
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::UnsatisfiableConstraint);
    }
    let coefficients = match (&density.coefficients, total) {
        (Coefficients::Real(a), Scalar::Real(s)) => Coefficients::Real(a.iter().map(|x| x / s).collect()),
        (c, s) => {
            let s = s.to_complex();
            Coefficients::Complex((0..c.len()).map(|i| c.get(i).to_complex() / s).collect())
        }
    };
    density.with_coefficients(coefficients)
}

/// General entry point combining kernel correction, Gram handling and normalization.
pub fn fit(source: &dyn AveragingSource, family: &BasisFamily, opts: &EstimationOptions) -> Result<FittedDensity> {
    if family.dim() != source.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), got: source.dim() });
    }
    let averages = match &opts.kernel_correction {
        Some(k) => corrected_averages(source, family, k.v())?,
        None => source.basis_averages(family)?,
    };
    let solver = match opts.gram_mode {
        GramMode::AssumeOrthonormal => {
            require_orthonormal(family)?;
            None
        }
        GramMode::Solve => Some(GramSolver::new(&family.gram_matrix()?)?),
    };
    let solve = |b: &[f64]| match &solver {
        Some(s) => s.solve(b),
        None => b.to_vec(),
    };
    let base = averages.map_parts(solve);
    let coefficients = match opts.normalization {
        Normalization::Lagrange { c } => {
            // a = G⁻¹(b + λF), λ = (c − F·G⁻¹b)/(F·G⁻¹F); reduces to the plain formula when G = I.
            let integrals = family.integrals();
            let u = solve(integrals);
            let denom: f64 = integrals.iter().zip(&u).map(|(f, x)| f * x).sum();
            if denom == 0.0 {
                return Err(Error::UnsatisfiableConstraint);
            }
            let dot = base.dot(integrals);
            match &base {
                Coefficients::Real(a) => {
                    let lambda = (c - dot.re()) / denom;
                    Coefficients::Real(a.iter().zip(&u).map(|(x, y)| x + lambda * y).collect())
                }
                Coefficients::Complex(a) => {
                    let lambda = (num_complex::Complex64::new(c, 0.0) - dot.to_complex()) / denom;
                    Coefficients::Complex(a.iter().zip(&u).map(|(x, y)| x + lambda * y).collect())
                }
            }
        }
        _ => base,
    };
    let density = FittedDensity::new(family.clone(), coefficients)?;
    match opts.normalization {
        Normalization::PosthocRescale => posthoc_rescale(&density),
        _ => Ok(density),
    }
}

/// Whitens the sample, fits in whitened coordinates and records the transform.
pub fn fit_whitened(sample: &WeightedSample, family: &BasisFamily, opts: &EstimationOptions) -> Result<FittedDensity> {
    let (white, transform) = whiten(sample)?;
    fit(&white, family, opts)?.with_transform(transform)
}

/// Factorized Gram matrix.
struct GramSolver {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    svd: Option<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl GramSolver {
    fn new(gram: &DMatrix<f64>) -> Result<Self> {
        let sv = gram.singular_values();
        let max = sv.max();
        let min = sv.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition < MAX_GRAM_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        match gram.clone().cholesky() {
            Some(chol) => Ok(GramSolver { chol: Some(chol), svd: None }),
            None => {
                warn!("Gram matrix is not positive definite; falling back to a least-squares solve");
                Ok(GramSolver { chol: None, svd: Some(gram.clone().svd(true, true)) })
            }
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(b);
        let x = match (&self.chol, &self.svd) {
            (Some(c), _) => c.solve(&rhs),
            (None, Some(s)) => s.solve(&rhs, 1e-14).expect("SVD computed with both factors"),
            (None, None) => unreachable!("solver without a factorization"),
        };
        x.as_slice().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{legendre_family, raw_family, RawFunction, Region};
    use crate::sample::Weights;
    use approx::assert_abs_diff_eq;

    fn unit() -> Region {
        Region::interval(-1.0, 1.0).unwrap()
    }

    fn sample(points: &[f64]) -> WeightedSample {
        WeightedSample::unweighted(1, points.to_vec()).unwrap()
    }

    #[test]
    fn average_functional_examples() {
        let s = sample(&[-1.0, 0.0, 1.0]);
        assert_eq!(average_functional(&s, &|x| x[0]).unwrap().re(), 0.0);
        assert_abs_diff_eq!(average_functional(&s, &|x| x[0] * x[0]).unwrap().re(), 2.0 / 3.0, epsilon = 1e-15);
        let cancel = WeightedSample::new(1, vec![0.5, 0.5], Weights::Real(vec![1.0, -1.0])).unwrap();
        assert_eq!(average_functional(&cancel, &|_| 1.0).unwrap().re(), 0.0);
    }

    #[test]
    fn single_point_at_origin() {
        let fam = legendre_family(2, &unit()).unwrap();
        let d = fit_orthonormal(&sample(&[0.0]), &fam).unwrap();
        let a = d.coefficients.as_real().unwrap();
        assert_abs_diff_eq!(a[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[2], -(5.0f64 / 8.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.evaluate(&[0.0]).unwrap().re(), 9.0 / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_sample_has_no_odd_terms() {
        let fam = legendre_family(5, &unit()).unwrap();
        let d = fit_orthonormal(&sample(&[-0.37, 0.37]), &fam).unwrap();
        let a = d.coefficients.as_real().unwrap();
        for k in (1..6).step_by(2) {
            assert_eq!(a[k], 0.0);
        }
    }

    #[test]
    fn non_orthonormal_family_needs_gram_solve() {
        let fam = raw_family(vec![RawFunction::monomial(1.0, vec![0])], &unit()).unwrap();
        assert!(fit_orthonormal(&sample(&[0.0]), &fam).is_err());
    }

    #[test]
    fn duplicated_function_is_ill_conditioned() {
        let fam = raw_family(
            vec![RawFunction::monomial(1.0, vec![1]), RawFunction::monomial(1.0, vec![1])],
            &unit(),
        )
        .unwrap();
        assert!(matches!(fit_general(&sample(&[0.2]), &fam), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn lagrange_constraint_cases() {
        let avgs = Coefficients::Real(vec![0.5, 0.1, 0.2]);
        // already satisfied: 0.5·2 = 1
        let same = lagrange_adjust(&avgs, &[2.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(same, avgs);
        let fixed = lagrange_adjust(&avgs, &[4.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(fixed.as_real().unwrap(), &[0.25, 0.1, 0.2]);
        assert!(matches!(lagrange_adjust(&avgs, &[0.0; 3], 1.0), Err(Error::UnsatisfiableConstraint)));
    }

    #[test]
    fn kernel_variances() {
        let g = KernelSpec::gaussian(0.1).unwrap();
        assert_abs_diff_eq!(g.v(), 0.005, epsilon = 1e-12);
        let u = KernelSpec::uniform(0.3).unwrap();
        assert_abs_diff_eq!(u.v(), 0.09 / 6.0, epsilon = 1e-12);
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let v = KernelSpec::gaussian(eps).unwrap().v();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn bad_kernels_are_rejected() {
        assert!(matches!(
            kernel_variance(&|h: f64| if h.abs() <= 1.0 { 1.0 } else { 0.0 }, KernelSupport::Compact(1.0)),
            Err(Error::KernelNotNormalized { .. })
        ));
        assert!(matches!(
            kernel_variance(&|h: f64| if (0.0..=1.0).contains(&h) { 1.0 } else { 0.0 }, KernelSupport::Compact(1.0)),
            Err(Error::KernelAsymmetric { .. })
        ));
    }

    #[test]
    fn kernel_correction_special_cases() {
        let fam = legendre_family(3, &unit()).unwrap();
        let s = sample(&[-0.3, 0.1, 0.5]);
        let plain = fit_orthonormal(&s, &fam).unwrap();
        let zero = FittedDensity::new(fam.clone(), corrected_averages(&s, &fam, 0.0).unwrap()).unwrap();
        assert_eq!(plain.coefficients, zero.coefficients);
        let k = KernelSpec::gaussian(0.2).unwrap();
        let corrected = fit_kernel_corrected(&s, &fam, &k).unwrap();
        assert_eq!(corrected.coefficients.get(0), plain.coefficients.get(0));
        // f_2'' = 3√(5/8)·2 is constant
        let want = plain.coefficients.get(2).re() + k.v() * 6.0 * (5.0f64 / 8.0).sqrt();
        assert_abs_diff_eq!(corrected.coefficients.get(2).re(), want, epsilon = 1e-13);
        let two_d = WeightedSample::unweighted(2, vec![0.0, 0.0]).unwrap();
        let fam2 = fam.power(2).unwrap();
        assert!(fit_kernel_corrected(&two_d, &fam2, &k).is_err());
    }

    #[test]
    fn posthoc_rescale_normalizes() {
        let fam = crate::basis::hermite_function_family(4);
        let s = sample(&[-0.5, 0.2, 1.1, 0.3]);
        let opts = EstimationOptions { normalization: Normalization::PosthocRescale, ..Default::default() };
        let d = fit(&s, &fam, &opts).unwrap();
        assert_abs_diff_eq!(d.integrate().re(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn general_lagrange_matches_orthonormal_formula() {
        let fam = crate::basis::hermite_function_family(4);
        let s = sample(&[-0.5, 0.2, 1.1, 0.3]);
        let direct = fit_normalized(&s, &fam, 1.0).unwrap();
        let opts = EstimationOptions {
            normalization: Normalization::Lagrange { c: 1.0 },
            gram_mode: GramMode::Solve,
            ..Default::default()
        };
        let via_gram = fit(&s, &fam, &opts).unwrap();
        for (a, b) in direct.coefficients.as_real().unwrap().iter().zip(via_gram.coefficients.as_real().unwrap()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
