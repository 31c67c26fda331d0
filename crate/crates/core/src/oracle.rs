//! Reference computations used to validate the estimator: KDE smoothing,
//! fine-grid least-squares fits, a rejection sampler and CLT predictions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::{integrate_domain, BasisFamily, Domain, Region};
use crate::density::FittedDensity;
use crate::error::{Error, Result};
use crate::sample::{WeightedSample, Weights};
use crate::values::{Coefficients, Scalar};

/// Uniform grid points per axis for one-dimensional oracle fits.
pub const GRID_POINTS_1D: usize = 4096;
/// Uniform grid points per axis for two-dimensional oracle fits.
pub const GRID_POINTS_2D: usize = 512;
/// Rejection sampling gives up below this acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Standard deviation of the Gaussian proposal for unbounded families.
pub const GAUSSIAN_PROPOSAL_STD: f64 = 1.5;

/// Generator for `(seed, stream)`; distinct streams give independent sequences.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian_kernel(h: f64, eps: f64) -> f64 {
    (-0.5 * (h / eps).powi(2)).exp() / (eps * (2.0 * std::f64::consts::PI).sqrt())
}

/// `g_ε(x) = (1/n) Σ W(y) k_ε(x − y)` with the product Gaussian kernel.
pub fn kde_smooth(sample: &WeightedSample, eps: f64, x: &[f64]) -> Result<Scalar> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("kernel width must be positive"));
    }
    if x.len() != sample.dim() {
        return Err(Error::DimensionMismatch { expected: sample.dim(), got: x.len() });
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = |y: &[f64]| y.iter().zip(x).map(|(a, b)| gaussian_kernel(b - a, eps)).product::<f64>();
    let n = sample.len() as f64;
    Ok(match sample.weights() {
        Weights::Real(w) => Scalar::Real(sample.points().zip(w).map(|(y, w)| w * k(y)).sum::<f64>() / n),
        Weights::Complex(w) => Scalar::Complex(sample.points().zip(w).map(|(y, w)| w * k(y)).sum::<num_complex::Complex64>() / n),
    })
}

/// Coefficients of a discrete least-squares fit on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridFit {
    pub points_per_axis: usize,
    pub spacing: f64,
    pub epsilon: Option<f64>,
    pub coefficients: Vec<f64>,
}

fn grid_size_for(dim: usize) -> Result<usize> {
    match dim {
        1 => Ok(GRID_POINTS_1D),
        2 => Ok(GRID_POINTS_2D),
        _ => Err(Error::invalid("oracle grid fits support one or two dimensions")),
    }
}

/// Minimizes the trapezoid-rule L² distance between `Σ a_i f_i` and `target` over the family region.
pub fn grid_least_squares_fit_function(
    family: &BasisFamily,
    points_per_axis: usize,
    target: impl Fn(&[f64]) -> f64,
) -> Result<GridFit> {
    let region = match family.domain() {
        Domain::Bounded(r) => r.clone(),
        Domain::Unbounded { .. } => return Err(Error::invalid("oracle grid fits need a finite region")),
    };
    let d = region.dim();
    if d > 2 {
        return Err(Error::invalid("oracle grid fits support one or two dimensions"));
    }
    if points_per_axis < 2 {
        return Err(Error::invalid("oracle grid needs at least two points per axis"));
    }
    let m = family.size();
    let axes: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|a| {
            let (lo, hi) = (region.lower()[a], region.upper()[a]);
            let h = (hi - lo) / (points_per_axis - 1) as f64;
            (0..points_per_axis)
                .map(|i| {
                    let w = if i == 0 || i == points_per_axis - 1 { 0.5 * h } else { h };
                    (lo + h * i as f64, w)
                })
                .collect()
        })
        .collect();
    let spacing = (0..d)
        .map(|a| (region.upper()[a] - region.lower()[a]) / (points_per_axis - 1) as f64)
        .fold(0.0, f64::max);
    let mut normal = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut phi = vec![0.0; m];
    let mut x = vec![0.0; d];
    let total = points_per_axis.pow(d as u32);
    for k in 0..total {
        let mut rem = k;
        let mut w = 1.0;
        for axis in (0..d).rev() {
            let (xi, wi) = axes[axis][rem % points_per_axis];
            rem /= points_per_axis;
            x[axis] = xi;
            w *= wi;
        }
        family.eval_into(&x, &mut phi);
        let g = target(&x);
        for i in 0..m {
            let wi = w * phi[i];
            rhs[i] += wi * g;
            for j in i..m {
                normal[(i, j)] += wi * phi[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            normal[(i, j)] = normal[(j, i)];
        }
    }
    let solution = normal
        .cholesky()
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })?
        .solve(&rhs);
    Ok(GridFit { points_per_axis, spacing, epsilon: None, coefficients: solution.iter().copied().collect() })
}

/// Least-squares fit of the family to the KDE-smoothed sample `g_ε`.
///
/// Rejects grids whose spacing exceeds `ε/4`.
pub fn grid_least_squares_fit(sample: &WeightedSample, family: &BasisFamily, eps: f64) -> Result<GridFit> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("kernel width must be positive"));
    }
    if sample.dim() != family.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), got: sample.dim() });
    }
    let n = grid_size_for(family.dim())?;
    if let Domain::Bounded(r) = family.domain() {
        let spacing = (0..r.dim()).map(|a| (r.upper()[a] - r.lower()[a]) / (n - 1) as f64).fold(0.0, f64::max);
        if spacing > eps / 4.0 {
            return Err(Error::UnderResolvedGrid { spacing, limit: eps / 4.0 });
        }
    }
    if let Weights::Complex(_) = sample.weights() {
        return Err(Error::WeightKindMismatch { expected: "real", found: "complex" });
    }
    let mut fit = grid_least_squares_fit_function(family, n, |x| kde_smooth(sample, eps, x).map_or(f64::NAN, |v| v.re()))?;
    fit.epsilon = Some(eps);
    Ok(fit)
}

/// Rejection sampler for a nonnegative fitted density.
///
/// Proposals are uniform on a bounded region and `N(0, 1.5²)` per axis on
/// unbounded domains; the envelope comes from a grid scan with a safety factor.
#[derive(Debug, Clone)]
pub struct DensitySampler {
    density: FittedDensity,
    bound: f64,
    region: Option<Region>,
}

/// Envelope safety factor over the scanned maximum.
const ENVELOPE_MARGIN: f64 = 1.25;

fn scan_points_per_axis(dim: usize) -> usize {
    match dim {
        1 => 2001,
        2 => 201,
        3 => 41,
        _ => 11,
    }
}

impl DensitySampler {
    pub fn new(density: &FittedDensity) -> Result<Self> {
        let density = density.clone();
        if density.coefficients.as_real().is_err() {
            return Err(Error::WeightKindMismatch { expected: "real", found: "complex" });
        }
        let d = density.dim();
        let family_only = FittedDensity::new(density.family.clone(), density.coefficients.clone())?;
        let report = family_only.negativity_report(scan_points_per_axis(d))?;
        if report.min_value < 0.0 {
            return Err(Error::NegativeDensity { value: report.min_value, point: report.argmin });
        }
        let region = family_only.family.domain().region().cloned();
        let bx = family_only.scan_box();
        let n = scan_points_per_axis(d);
        let mut max_ratio: f64 = 0.0;
        let mut y = vec![0.0; d];
        for k in 0..n.pow(d as u32) {
            let mut rem = k;
            for axis in (0..d).rev() {
                let (lo, hi) = (bx.lower()[axis], bx.upper()[axis]);
                y[axis] = lo + (hi - lo) * (rem % n) as f64 / (n - 1) as f64;
                rem /= n;
            }
            let v = family_only.evaluate(&y)?.re();
            let q = match &region {
                Some(_) => 1.0,
                None => gaussian_proposal_density(&y),
            };
            max_ratio = max_ratio.max(v / q);
        }
        if !(max_ratio > 0.0 && max_ratio.is_finite()) {
            return Err(Error::invalid("density vanishes on its scan grid"));
        }
        let bound = max_ratio * ENVELOPE_MARGIN;
        let sampler = DensitySampler { density, bound, region };
        let rate = sampler.expected_acceptance();
        if rate < MIN_ACCEPTANCE {
            return Err(Error::LowAcceptance { rate });
        }
        Ok(sampler)
    }

    /// `∫ρ / (M · ∫q)` for the proposal `q` and envelope constant `M`.
    pub fn expected_acceptance(&self) -> f64 {
        let mass = FittedDensity::new(self.density.family.clone(), self.density.coefficients.clone())
            .map(|d| d.integrate().re())
            .unwrap_or(0.0);
        match &self.region {
            Some(r) => mass / (self.bound * r.volume()),
            None => mass / self.bound,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<WeightedSample> {
        let d = self.density.dim();
        let family_only = FittedDensity::new(self.density.family.clone(), self.density.coefficients.clone())?;
        let normal = Normal::new(0.0, GAUSSIAN_PROPOSAL_STD).expect("valid proposal");
        let mut coords = Vec::with_capacity(n * d);
        let mut y = vec![0.0; d];
        let (mut proposed, mut accepted) = (0usize, 0usize);
        while accepted < n {
            proposed += 1;
            let q = match &self.region {
                Some(r) => {
                    for (a, v) in y.iter_mut().enumerate() {
                        *v = rng.random_range(r.lower()[a]..=r.upper()[a]);
                    }
                    1.0
                }
                None => {
                    y.iter_mut().for_each(|v| *v = normal.sample(rng));
                    gaussian_proposal_density(&y)
                }
            };
            let u: f64 = rng.random();
            let v = family_only.evaluate(&y)?.re();
            if u * self.bound * q < v {
                accepted += 1;
                match &self.density.transform {
                    Some(t) => coords.extend(t.invert(&y)?),
                    None => coords.extend_from_slice(&y),
                }
            }
            if proposed >= 100_000 && (accepted as f64) < MIN_ACCEPTANCE * proposed as f64 {
                return Err(Error::LowAcceptance { rate: accepted as f64 / proposed as f64 });
            }
        }
        WeightedSample::unweighted(d, coords)
    }
}

fn gaussian_proposal_density(y: &[f64]) -> f64 {
    y.iter().map(|&v| gaussian_kernel(v, GAUSSIAN_PROPOSAL_STD)).product()
}

/// `n` i.i.d. points from `density`, deterministic in `seed`.
pub fn sample_from_density(density: &FittedDensity, n: usize, seed: u64) -> Result<WeightedSample> {
    DensitySampler::new(density)?.sample(n, &mut rng(seed, 0))
}

/// `∫ g ρ` over the density's domain, in the family's coordinates.
fn expectation(density: &FittedDensity, g: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let family = &density.family;
    let a = density.coefficients.as_real()?;
    integrate_domain(family.domain(), |x| {
        let rho: f64 = family.eval(x).iter().zip(a).map(|(f, c)| f * c).sum();
        rho * g(x)
    })
}

/// `√(∫(f − a)²ρ) / √n`, the asymptotic standard deviation of `[f]`.
pub fn clt_predicted_std(density: &FittedDensity, f: impl Fn(&[f64]) -> f64, a: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let var = expectation(density, |x| (f(x) - a).powi(2))?;
    Ok(var.max(0.0).sqrt() / (n as f64).sqrt())
}

/// `a_i* = ∫ f_i ρ` for each member of `family` (which must live on the density's domain).
pub fn true_coefficients(density: &FittedDensity, family: &BasisFamily) -> Result<Vec<f64>> {
    if family.domain() != density.family.domain() {
        return Err(Error::invalid("projection family must share the density's domain"));
    }
    (0..family.size())
        .map(|i| {
            let f = family.function(i);
            expectation(density, |x| f.eval(x))
        })
        .collect()
}

/// `fit − truth` componentwise for a real fit.
pub fn coefficient_error(fit: &Coefficients, truth: &[f64]) -> Result<Vec<f64>> {
    let a = fit.as_real()?;
    if a.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: a.len() });
    }
    Ok(a.iter().zip(truth).map(|(x, y)| x - y).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{hermite_function_family, legendre_family};
    use crate::estimator::fit_orthonormal;
    use approx::assert_abs_diff_eq;

    fn unit() -> Region {
        Region::interval(-1.0, 1.0).unwrap()
    }

    fn uniform_density() -> FittedDensity {
        let fam = legendre_family(2, &unit()).unwrap();
        FittedDensity::new(fam, Coefficients::Real(vec![std::f64::consts::FRAC_1_SQRT_2, 0.0, 0.0])).unwrap()
    }

    #[test]
    fn kde_peak_and_symmetry() {
        let s = WeightedSample::unweighted(1, vec![0.0]).unwrap();
        let v = kde_smooth(&s, 1.0, &[0.0]).unwrap().re();
        assert_abs_diff_eq!(v, 1.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        let pair = WeightedSample::unweighted(1, vec![-0.3, 0.3]).unwrap();
        let one = WeightedSample::unweighted(1, vec![0.3]).unwrap();
        let a = kde_smooth(&pair, 0.2, &[0.0]).unwrap().re();
        let b = kde_smooth(&one, 0.2, &[0.0]).unwrap().re();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        assert!(kde_smooth(&s, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn kde_integrates_to_weight_mean() {
        let s = WeightedSample::new(1, vec![-0.2, 0.1, 0.4], Weights::Real(vec![1.0, 2.0, -0.5])).unwrap();
        let total = crate::basis::integrate_domain(&Domain::Unbounded { dim: 1 }, |x| {
            kde_smooth(&s, 0.7, x).unwrap().re()
        });
        assert_abs_diff_eq!(total.unwrap(), 2.5 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn flat_smoothing_limit() {
        let region = Region::interval(-1.0, 3.0).unwrap();
        let fam = legendre_family(2, &region).unwrap();
        let fit = grid_least_squares_fit_function(&fam, GRID_POINTS_1D, |_| 0.25).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn basis_self_fit_recovers_unit_vector() {
        let fam = legendre_family(3, &unit()).unwrap();
        let f2 = fam.function(2);
        let fit = grid_least_squares_fit_function(&fam, GRID_POINTS_1D, |x| f2.eval(x)).unwrap();
        for (i, c) in fit.coefficients.iter().enumerate() {
            assert_abs_diff_eq!(*c, if i == 2 { 1.0 } else { 0.0 }, epsilon = 1e-6);
        }
    }

    #[test]
    fn grid_fit_rejects_small_eps() {
        let fam = legendre_family(3, &unit()).unwrap();
        let s = WeightedSample::unweighted(1, vec![0.0]).unwrap();
        assert!(matches!(grid_least_squares_fit(&s, &fam, 0.001), Err(Error::UnderResolvedGrid { .. })));
    }

    #[test]
    fn grid_fit_approaches_averages() {
        let fam = legendre_family(3, &unit()).unwrap();
        let s = WeightedSample::unweighted(1, vec![-0.2, 0.05, 0.3]).unwrap();
        let exact = fit_orthonormal(&s, &fam).unwrap();
        let exact = exact.coefficients.as_real().unwrap();
        let err = |eps: f64| {
            let g = grid_least_squares_fit(&s, &fam, eps).unwrap();
            g.coefficients.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn sampler_mean_and_determinism() {
        let d = uniform_density();
        let a = sample_from_density(&d, 100_000, 3).unwrap();
        let mean = a.coordinates().iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 3.0 * (1.0f64 / 3.0).sqrt() / 1e5f64.sqrt());
        let b = sample_from_density(&d, 100_000, 3).unwrap();
        assert_eq!(a.coordinates(), b.coordinates());
    }

    #[test]
    fn sampler_rejects_negative_density() {
        let fam = legendre_family(2, &unit()).unwrap();
        let d = FittedDensity::new(fam, Coefficients::Real(vec![std::f64::consts::FRAC_1_SQRT_2, 0.0, -(5.0f64 / 8.0).sqrt()]))
            .unwrap();
        assert!(matches!(sample_from_density(&d, 10, 1), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn sampler_on_hermite_ground_state() {
        let fam = hermite_function_family(2);
        let f0 = fam.integrals()[0];
        let d = FittedDensity::new(fam, Coefficients::Real(vec![1.0 / f0, 0.0, 0.0])).unwrap();
        let s = sample_from_density(&d, 50_000, 11).unwrap();
        let var = s.coordinates().iter().map(|x| x * x).sum::<f64>() / 5e4;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn clt_examples() {
        let d = uniform_density();
        let f1 = |x: &[f64]| (1.5f64).sqrt() * x[0];
        let s = clt_predicted_std(&d, f1, 0.0, 100).unwrap();
        assert_abs_diff_eq!(s, (0.5f64).sqrt() / 10.0, epsilon = 1e-12);
        let s4 = clt_predicted_std(&d, f1, 0.0, 400).unwrap();
        assert_abs_diff_eq!(s / s4, 2.0, epsilon = 1e-12);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(clt_predicted_std(&d, |_| c, c, 100).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_recovers_coefficients() {
        let fam = legendre_family(3, &unit()).unwrap();
        let a = vec![std::f64::consts::FRAC_1_SQRT_2, 0.2, -0.1, 0.05];
        let d = FittedDensity::new(fam.clone(), Coefficients::Real(a.clone())).unwrap();
        let t = true_coefficients(&d, &fam).unwrap();
        for (x, y) in t.iter().zip(&a) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
