//! Shipped classification datasets: the XOR corners and interleaved spirals.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::basis::{legendre_family, tensor_product, BasisFamily, Region};
use crate::error::Result;
use crate::sample::{merge_sources, ArchimedeanSpiral, ContinuousSource, MergedSource, SourceWeight, WeightedSample, Weights};

/// The four corners of `[-1, 1]²` weighted `+1` when `xy > 0` and `−1` otherwise.
pub fn xor_corners() -> WeightedSample {
    let pts = [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
    let coords = pts.iter().flatten().copied().collect();
    WeightedSample::new(2, coords, Weights::Real(vec![1.0, 1.0, -1.0, -1.0])).expect("valid corner sample")
}

/// Geometry shared by the spiral datasets: `r(s) = r0 + c·s` for `s ∈ [0, 2π·turns]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralShape {
    pub r0: f64,
    pub c: f64,
    pub turns: f64,
}

impl SpiralShape {
    pub const TWO_ARMS: SpiralShape = SpiralShape { r0: 0.15, c: 0.75 / (3.0 * PI), turns: 1.5 };
    pub const FOUR_ARMS: SpiralShape = SpiralShape { r0: 0.2, c: 0.7 / (2.0 * PI), turns: 1.0 };

    fn arm(&self, rotation: f64) -> ArchimedeanSpiral {
        ArchimedeanSpiral { r0: self.r0, c: self.c, s_max: 2.0 * PI * self.turns, rotation }
    }
}

/// A labelled family of weighted curves.
#[derive(Debug, Clone)]
pub struct SpiralSet {
    pub sources: Vec<ContinuousSource>,
    pub labels: Vec<i64>,
}

impl SpiralSet {
    /// Two arms related by `x → −x`, weighted `+1` and `−1`.
    pub fn two_arms(shape: SpiralShape) -> Self {
        let sources = vec![
            ContinuousSource::new(shape.arm(0.0), SourceWeight::Real(1.0)),
            ContinuousSource::new(shape.arm(PI), SourceWeight::Real(-1.0)),
        ];
        SpiralSet { sources, labels: vec![1, -1] }
    }

    /// Four arms rotated by quarter turns; arm `k` carries `(1 + i)·i^k` so `arg W` lies in quadrant `k`.
    pub fn four_arms(shape: SpiralShape) -> Self {
        let sources = (0..4)
            .map(|k| {
                let w = Complex64::new(1.0, 1.0) * Complex64::i().powu(k as u32);
                ContinuousSource::new(shape.arm(FRAC_PI_2 * k as f64), SourceWeight::Complex(w))
            })
            .collect();
        SpiralSet { sources, labels: vec![0, 1, 2, 3] }
    }

    /// Equal-weight mixture of all arms.
    pub fn merged(&self) -> Result<MergedSource> {
        let k = self.sources.len();
        let mut mix = vec![0.0];
        mix.extend(std::iter::repeat_n(1.0 / k as f64, k));
        merge_sources(None, self.sources.clone(), mix)
    }

    /// `count` points per arm at parameters `(j + offset)/count`, with their labels.
    pub fn labelled_points(&self, count: usize, offset: f64) -> Vec<(Vec<f64>, i64)> {
        self.sources
            .iter()
            .zip(&self.labels)
            .flat_map(|(s, &l)| s.points(count, offset).into_iter().map(move |p| (p, l)))
            .collect()
    }

    /// Discrete sample of `count` points per arm, carrying each arm's weight.
    pub fn discrete_sample(&self, count: usize, offset: f64) -> Result<WeightedSample> {
        let mut coords = Vec::new();
        let mut real = Vec::new();
        let mut complex = Vec::new();
        for s in &self.sources {
            for p in s.points(count, offset) {
                coords.extend(p);
                match s.weight {
                    SourceWeight::Real(w) => real.push(w),
                    SourceWeight::Complex(w) => complex.push(w),
                    _ => unreachable!("spiral arms carry constant weights"),
                }
            }
        }
        let weights = if complex.is_empty() { Weights::Real(real) } else { Weights::Complex(complex) };
        WeightedSample::new(2, coords, weights)
    }
}

/// Tensor-product Legendre family of the given order on `[-1, 1]²`.
pub fn square_legendre(order: usize) -> Result<BasisFamily> {
    let l = legendre_family(order, &Region::interval(-1.0, 1.0)?)?;
    tensor_product(&[l.clone(), l])
}
