//! Acceptance run: one PASS/FAIL line per criterion, each with its runtime limit.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use momentfit::basis::{
    fourier_family, hermite_function_family, legendre_family, raw_family, tensor_product, BasisFamily, RawFunction, Region,
};
use momentfit::bench::{
    chacha_values, clt_variance_check, duplicated_values, error_scaling_experiment, hermite_testbed, legendre_testbed,
    prng_uniformity_test,
};
use momentfit::datasets::{square_legendre, xor_corners, SpiralSet, SpiralShape};
use momentfit::density::{ArgumentLabel, SignLabel};
use momentfit::estimator::{fit, fit_kernel_corrected, fit_orthonormal, EstimationOptions, GramMode, KernelSpec, Normalization};
use momentfit::oracle::{grid_least_squares_fit, rng};
use momentfit::quadrature::{for_each_tensor_point, gauss_hermite, gauss_legendre};
use momentfit::sample::WeightedSample;

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn unit() -> Region {
    Region::interval(-1.0, 1.0).unwrap()
}

fn grid101() -> Vec<f64> {
    (0..101).map(|i| -1.0 + 0.02 * i as f64).collect()
}

fn random_sample(seed: u64, stream: u64, lo: f64, hi: f64, max_n: usize) -> WeightedSample {
    let mut r = rng(seed, stream);
    let n = r.random_range(1..=max_n);
    let pts = (0..n).map(|_| r.random_range(lo..hi)).collect();
    WeightedSample::unweighted(1, pts).unwrap()
}

fn moment(s: &WeightedSample, k: i32) -> f64 {
    s.coordinates().iter().map(|x| x.powi(k)).sum::<f64>() / s.len() as f64
}

fn identity_deviation(family: &BasisFamily) -> f64 {
    let g = family.gram_matrix().unwrap();
    let m = family.size();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Gram matrix of a 2D family by direct evaluation on a product rule.
fn direct_gram_deviation(family: &BasisFamily, rules: [&momentfit::quadrature::Rule; 2]) -> f64 {
    let m = family.size();
    let mut g = vec![0.0; m * m];
    let mut v = vec![0.0; m];
    for_each_tensor_point(&rules, |x, w| {
        family.eval_into(x, &mut v);
        for i in 0..m {
            for j in 0..m {
                g[i * m + j] += w * v[i] * v[j];
            }
        }
    });
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            worst = worst.max((g[i * m + j] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let regions = [(-1.0, 1.0), (0.0, 4.0), (-2.0, 5.0), (10.0, 10.5), (-1e3, 1e3)];
    for order in 0..=10 {
        for &(lo, hi) in &regions {
            let r = Region::interval(lo, hi).unwrap();
            worst = worst.max(identity_deviation(&legendre_family(order, &r).unwrap()));
            worst = worst.max(identity_deviation(&fourier_family(order, &r).unwrap()));
        }
        worst = worst.max(identity_deviation(&hermite_function_family(order)));
    }
    let l = legendre_family(10, &Region::interval(-2.0, 3.0).unwrap()).unwrap();
    let f = fourier_family(10, &unit()).unwrap();
    let h = hermite_function_family(10);
    for pair in [[&l, &l], [&f, &f], [&h, &h], [&f, &l]] {
        let t = tensor_product(&[pair[0].clone(), pair[1].clone()]).unwrap();
        worst = worst.max(identity_deviation(&t));
    }
    let ll = tensor_product(&[l.clone(), l.clone()]).unwrap();
    let gl = gauss_legendre(32).mapped(-2.0, 3.0);
    let hh = tensor_product(&[h.clone(), h.clone()]).unwrap();
    let gh = gauss_hermite(32);
    let direct = direct_gram_deviation(&ll, [&gl, &gl]).max(direct_gram_deviation(&hh, [&gh, &gh]));
    worst = worst.max(direct);
    outcome(worst < 1e-8, format!("max |G - I| = {worst:.2e} (direct product-grid check {direct:.2e})"))
}

fn criterion_2() -> Outcome {
    let fam = legendre_family(2, &unit()).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let s = random_sample(2, trial, -1.0, 1.0, 60);
        let d = fit_orthonormal(&s, &fam).unwrap();
        let (m1, m2) = (moment(&s, 1), moment(&s, 2));
        for x in grid101() {
            let expected = 0.5 + 1.5 * m1 * x + 0.625 * (3.0 * m2 - 1.0) * (3.0 * x * x - 1.0);
            worst = worst.max((d.evaluate(&[x]).unwrap().re() - expected).abs());
        }
    }
    outcome(worst < 1e-12, format!("max pointwise difference {worst:.2e} over 20 samples x 101 points"))
}

/// Exact `∫_{-1}^{1} Σ c_k x^k dx`.
fn integrate_poly(c: &[f64]) -> f64 {
    c.iter().enumerate().map(|(k, v)| if k % 2 == 0 { 2.0 * v / (k as f64 + 1.0) } else { 0.0 }).sum()
}

fn criterion_3() -> Outcome {
    let fam = legendre_family(3, &unit()).unwrap();
    let mut worst: f64 = 0.0;
    let mut literal_integral: f64 = 0.0;
    let mut corrected_integral: f64 = 0.0;
    for trial in 0..20 {
        let s = random_sample(3, trial, -1.0, 1.0, 60);
        let d = fit_orthonormal(&s, &fam).unwrap();
        let (m1, m2, m3) = (moment(&s, 1), moment(&s, 2), moment(&s, 3));
        // Polynomial coefficients in x^0..x^3 of the grouped-moment form.
        let moments_part = [
            -0.625 * 3.0 * m2,
            0.625 * (15.0 * m1 - 21.0 * m3),
            0.625 * 9.0 * m2,
            0.625 * (35.0 * m3 - 21.0 * m1),
        ];
        let literal: Vec<f64> = [0.625, 0.0, -1.875, 0.0].iter().zip(&moments_part).map(|(a, b)| a + b).collect();
        let corrected: Vec<f64> = [1.125, 0.0, -1.875, 0.0].iter().zip(&moments_part).map(|(a, b)| a + b).collect();
        for x in grid101() {
            let p: f64 = corrected.iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum();
            worst = worst.max((d.evaluate(&[x]).unwrap().re() - p).abs());
        }
        literal_integral = literal_integral.max(integrate_poly(&literal).abs());
        corrected_integral = corrected_integral.max((integrate_poly(&corrected) - 1.0).abs());
    }
    let pass = worst < 1e-12 && literal_integral < 1e-12 && corrected_integral < 1e-12;
    outcome(
        pass,
        format!(
            "corrected formula max difference {worst:.2e}; the 5/8-constant formula integrates to {literal_integral:.1e} (0 expected), corrected to 1 within {corrected_integral:.1e}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, d) in [("legendre", legendre_testbed()), ("hermite", hermite_testbed())] {
        let r = error_scaling_experiment(&d, &d.family, &[25, 100, 400], 200, 7).unwrap();
        for c in &r.ratios {
            let ok = (1.7..=2.3).contains(&c.ratio);
            pass &= ok;
            parts.push(format!("{name} {}/{} = {:.3}", c.n_small, c.n_large, c.ratio));
        }
    }
    outcome(pass, format!("RMS ratios {} (band [1.7, 2.3])", parts.join(", ")))
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for d in [legendre_testbed(), hermite_testbed()] {
        let r = clt_variance_check(&d, &d.family, 400, 500, 11).unwrap();
        for row in &r.rows {
            pass &= (0.8..=1.25).contains(&row.ratio);
            lo = lo.min(row.ratio);
            hi = hi.max(row.ratio);
        }
    }
    outcome(pass, format!("empirical/predicted std ratios in [{lo:.3}, {hi:.3}] (band [0.8, 1.25])"))
}

fn criterion_6() -> Outcome {
    let fam = legendre_family(3, &unit()).unwrap();
    let mut r = rng(2024, 0);
    let pts: Vec<f64> = (0..30).map(|_| r.random_range(-0.3..0.3)).collect();
    let s = WeightedSample::unweighted(1, pts).unwrap();
    let averaged = fit_orthonormal(&s, &fam).unwrap();
    let averaged = averaged.coefficients.as_real().unwrap().to_vec();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let mut errors = Vec::new();
    let mut reduction = 0.0;
    for &e in &eps {
        let oracle = grid_least_squares_fit(&s, &fam, e).unwrap().coefficients;
        errors.push(dist(&oracle, &averaged));
        if e == 0.05 {
            let corrected = fit_kernel_corrected(&s, &fam, &KernelSpec::gaussian(e).unwrap()).unwrap();
            reduction = dist(&oracle, &averaged) / dist(&oracle, corrected.coefficients.as_real().unwrap());
        }
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let pass = (1.8..=2.2).contains(&slope) && reduction >= 5.0;
    outcome(pass, format!("log-log slope {slope:.3} (band [1.8, 2.2]); kernel correction reduces the eps=0.05 error {reduction:.1e}x (need >= 5)"))
}

fn criterion_7() -> Outcome {
    let mut worst_lagrange: f64 = 0.0;
    for trial in 0..100u64 {
        let mut r = rng(7, trial);
        let order = r.random_range(1..=8);
        let c = if trial % 2 == 0 { 1.0 } else { r.random_range(0.5..2.0) };
        let n = r.random_range(1..=200);
        let pts: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let s = WeightedSample::unweighted(1, pts).unwrap();
        let opts = EstimationOptions { normalization: Normalization::Lagrange { c }, ..Default::default() };
        let d = fit(&s, &hermite_function_family(order), &opts).unwrap();
        worst_lagrange = worst_lagrange.max((d.integrate().re() - c).abs());
    }
    let mut worst_bounded: f64 = 0.0;
    for trial in 0..100u64 {
        let mut r = rng(8, trial);
        let lo = r.random_range(-5.0..5.0);
        let hi = lo + r.random_range(0.1..10.0);
        let region = Region::interval(lo, hi).unwrap();
        let s = random_sample(9, trial, lo, hi, 200);
        let order = r.random_range(0..=10);
        for fam in [legendre_family(order, &region).unwrap(), fourier_family(order, &region).unwrap()] {
            let d = fit_orthonormal(&s, &fam).unwrap();
            worst_bounded = worst_bounded.max((d.integrate().re() - 1.0).abs());
        }
    }
    let pass = worst_lagrange < 1e-10 && worst_bounded < 1e-12;
    outcome(pass, format!("Lagrange |sum a_i F_i - C| <= {worst_lagrange:.1e} over 100 Hermite trials; Legendre/Fourier |integral - 1| <= {worst_bounded:.1e}"))
}

fn criterion_8() -> Outcome {
    let xor = xor_corners();
    let fam = square_legendre(1).unwrap();
    let d = fit_orthonormal(&xor, &fam).unwrap();
    let a = d.coefficients.as_real().unwrap().to_vec();
    let xy = fam.ids().iter().position(|id| id.indices == [1, 1]).unwrap();
    let mut coefficient_ok = (a[xy] - 1.5).abs() < 1e-12;
    for (i, v) in a.iter().enumerate() {
        if i != xy {
            coefficient_ok &= v.abs() < 1e-12;
        }
    }
    let w = [1.0, 1.0, -1.0, -1.0];
    let xor_ok = (0..4).all(|k| {
        let expect = if w[k] > 0.0 { SignLabel::Positive } else { SignLabel::Negative };
        d.classify_sign(xor.point(k)).unwrap() == expect
    });

    let fam = square_legendre(12).unwrap();
    let two = SpiralSet::two_arms(SpiralShape::TWO_ARMS);
    let d2 = fit(&two.merged().unwrap(), &fam, &EstimationOptions::default()).unwrap();
    let held = two.labelled_points(500, 0.5);
    let hits = held
        .iter()
        .filter(|(p, l)| {
            let s = d2.classify_sign(p).unwrap();
            (s == SignLabel::Positive && *l == 1) || (s == SignLabel::Negative && *l == -1)
        })
        .count();
    let acc2 = hits as f64 / held.len() as f64;

    let four = SpiralSet::four_arms(SpiralShape::FOUR_ARMS);
    let d4 = fit(&four.merged().unwrap(), &fam, &EstimationOptions::default()).unwrap();
    let held = four.labelled_points(500, 0.5);
    let hits = held
        .iter()
        .filter(|(p, l)| d4.classify_argument(p, 4).unwrap() == ArgumentLabel::Class(*l as usize))
        .count();
    let acc4 = hits as f64 / held.len() as f64;
    let pass = coefficient_ok && xor_ok && acc2 >= 0.95 && acc4 >= 0.95;
    outcome(
        pass,
        format!("XOR xy coefficient {:.15} (others zero: {coefficient_ok}), corners correct: {xor_ok}; two-spiral accuracy {acc2:.4}, four-spiral accuracy {acc4:.4}", a[xy]),
    )
}

fn criterion_9() -> Outcome {
    let solve = EstimationOptions { gram_mode: GramMode::Solve, ..Default::default() };
    let mut worst_raw: f64 = 0.0;
    for (lo, hi) in [(-1.0, 1.0), (0.0, 2.0), (-3.0, 0.5)] {
        let region = Region::interval(lo, hi).unwrap();
        let raw: Vec<RawFunction> = (0..4).map(|k| RawFunction::monomial(1.0, vec![k])).collect();
        let raw = raw_family(raw, &region).unwrap();
        let leg = legendre_family(3, &region).unwrap();
        for trial in 0..10 {
            let s = random_sample(10, trial, lo, hi, 100);
            let a = fit(&s, &raw, &solve).unwrap();
            let b = fit_orthonormal(&s, &leg).unwrap();
            for i in 0..=200 {
                let x = [lo + (hi - lo) * i as f64 / 200.0];
                worst_raw = worst_raw.max((a.evaluate(&x).unwrap().re() - b.evaluate(&x).unwrap().re()).abs());
            }
        }
    }
    let mut worst_ortho: f64 = 0.0;
    let families = [
        legendre_family(5, &Region::interval(-2.0, 3.0).unwrap()).unwrap(),
        fourier_family(4, &unit()).unwrap(),
        hermite_function_family(6),
    ];
    for fam in &families {
        let (lo, hi) = match fam.domain().region() {
            Some(r) => (r.lower()[0], r.upper()[0]),
            None => (-3.0, 3.0),
        };
        for trial in 0..10 {
            let s = random_sample(11, trial, lo, hi, 100);
            let a = fit(&s, fam, &solve).unwrap();
            let b = fit_orthonormal(&s, fam).unwrap();
            for (x, y) in a.coefficients.as_real().unwrap().iter().zip(b.coefficients.as_real().unwrap()) {
                worst_ortho = worst_ortho.max((x - y).abs());
            }
        }
    }
    let pass = worst_raw < 1e-8 && worst_ortho < 1e-12;
    outcome(pass, format!("raw monomials vs Legendre max difference {worst_raw:.2e}; orthonormal Gram solve vs averaging {worst_ortho:.2e}"))
}

fn criterion_10() -> Outcome {
    let n = 100_000;
    let adversarial = prng_uniformity_test(&duplicated_values(1, 2 * n), 2, n).unwrap();
    let good = (0..100u64)
        .filter(|&seed| prng_uniformity_test(&chacha_values(seed, 2 * n), 2, n).unwrap().z.abs() < 4.0)
        .count();
    let pass = adversarial.z.abs() > 10.0 && good >= 99;
    outcome(pass, format!("duplicated stream z = {:.1}; ChaCha8 |z| < 4 on {good}/100 seeds", adversarial.z))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("orthonormality", criterion_1, Some(Duration::from_secs(10))),
        ("order-2 identity", criterion_2, Some(Duration::from_secs(1))),
        ("order-3 identity", criterion_3, Some(Duration::from_secs(1))),
        ("1/sqrt(n) scaling", criterion_4, Some(Duration::from_secs(60))),
        ("CLT variance", criterion_5, Some(Duration::from_secs(60))),
        ("spike-limit convergence", criterion_6, Some(Duration::from_secs(30))),
        ("normalization", criterion_7, None),
        ("classification", criterion_8, Some(Duration::from_secs(30))),
        ("Gram-solve equivalence", criterion_9, None),
        ("PRNG test", criterion_10, None),
    ];
    let mut failures = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = out.pass && in_time;
        if !pass {
            failures += 1;
        }
        let limit_text = limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        let time_note = if in_time { "" } else { " RUNTIME EXCEEDED" };
        println!(
            "criterion {:>2} {name}: {} | {} | {:.2}s{limit_text}{time_note}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
