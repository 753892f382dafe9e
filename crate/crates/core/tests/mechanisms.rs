mod common;

use common::moments;
use dpinfer::mechanisms::*;
use dpinfer::rng;

const DRAWS: usize = 1_000_000;

#[test]
fn laplace_moments() {
    let b = 2.5;
    let mut s = rng::stream(11);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_laplace(b, &mut s)).collect();
    let (mean, var) = moments(&xs);
    let abs_mean = xs.iter().map(|x| x.abs()).sum::<f64>() / DRAWS as f64;
    assert!(mean.abs() < 0.03 * b, "mean {mean}");
    assert!((var / (2.0 * b * b) - 1.0).abs() < 0.03, "var {var}");
    assert!((abs_mean / b - 1.0).abs() < 0.03, "E|X| {abs_mean}");
}

#[test]
fn gaussian_moments() {
    let sigma = 0.7;
    let mut s = rng::stream(12);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_gaussian(sigma, &mut s)).collect();
    let (mean, var) = moments(&xs);
    let abs_mean = xs.iter().map(|x| x.abs()).sum::<f64>() / DRAWS as f64;
    let kurt = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / DRAWS as f64 / (var * var);
    assert!(mean.abs() < 0.03 * sigma);
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.03);
    let expected_abs = sigma * (2.0 / std::f64::consts::PI).sqrt();
    assert!((abs_mean / expected_abs - 1.0).abs() < 0.03);
    assert!((kurt / 3.0 - 1.0).abs() < 0.03, "kurtosis {kurt}");
}

#[test]
fn zero_scale_gives_zero_noise() {
    let mut s = rng::stream(1);
    assert_eq!(sample_laplace(0.0, &mut s), 0.0);
    assert_eq!(sample_gaussian(0.0, &mut s), 0.0);
}

#[test]
fn exponential_mechanism_frequencies() {
    let cases: [(&[f64], f64, f64); 3] = [
        (&[0.7, 0.2, 0.1], 1.0, 0.4538),
        (&[0.25, 0.25, 0.5], 5.0, 1.0),
        (&[0.9, 0.05, 0.03, 0.02], 10.0, 0.4918),
    ];
    let n = 200_000;
    for (case, (p, eps, dp)) in cases.into_iter().enumerate() {
        // closed form written out independently of the library
        let raw: Vec<f64> = p.iter().map(|pi| (eps * pi / (2.0 * dp)).exp()).collect();
        let total: f64 = raw.iter().sum();
        let expected: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let lib = exp_mechanism_weights(p, dp, eps).unwrap();
        for (a, b) in lib.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut s = rng::stream(100 + case as u64);
        let mut counts = vec![0usize; p.len()];
        for _ in 0..n {
            counts[exp_mechanism_sample(p, dp, eps, &mut s).unwrap()] += 1;
        }
        for (c, w) in counts.iter().zip(&expected) {
            let mean = n as f64 * w;
            let sd = (n as f64 * w * (1.0 - w)).sqrt();
            assert!(
                (*c as f64 - mean).abs() <= 3.0 * sd,
                "case {case}: count {c} vs {mean} +- {sd}"
            );
        }
    }
}

#[test]
fn zero_epsilon_selection_is_uniform() {
    let w = exp_mechanism_weights(&[0.9, 0.1, 0.0], 0.5, 0.0).unwrap();
    assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn delta_of_epsilon_matches_high_precision_oracle() {
    // 40-digit evaluation of Phi(-1 + e/2) - exp(e) Phi(-1 - e/2)
    let oracle = [
        (0.0, 0.0),
        (1.0, 0.126_936_737_506_643_945_800_829_624_757_766_880_4),
        (2.0, 0.331_897_998_776_829_393_572_850_885_970_916_301_6),
    ];
    for (eps, want) in oracle {
        let got = delta_of_epsilon(eps);
        assert!((got - want).abs() < 1e-5, "delta({eps}) = {got}, want {want}");
    }
}

#[test]
fn budget_split_examples() {
    let s = split_budget(1.0, 10, Mechanism::Laplace);
    assert_eq!(s.neuron, 1.0 / 21.0);
    assert_eq!(s.sampling, 1.0 / 21.0);
    let g = split_budget(1.0, 2, Mechanism::Gaussian);
    assert!((g.neuron - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(per_query_budget(1.0, 4, Mechanism::Gaussian), 0.5);
    assert_eq!(per_query_budget(1.0, 4, Mechanism::Laplace), 0.25);
    assert!((gdp_compose(&[0.5; 4]).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn gaussian_budget_reports_delta() {
    let b = PrivacyBudget::new(1.0, 10, 2, Mechanism::Gaussian)
        .unwrap()
        .with_training_size(10_000);
    assert_eq!(b.delta, Some(1e-5));
    let l = PrivacyBudget::new(1.0, 10, 2, Mechanism::Laplace)
        .unwrap()
        .with_training_size(10_000);
    assert_eq!(l.delta, None);
}
