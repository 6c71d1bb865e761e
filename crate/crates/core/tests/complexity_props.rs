mod common;

use common::*;
use mflab::complexity::*;
use mflab::{Matrix, Net};
use rand::Rng;

fn sample_set(seed: u64, n: usize, d: usize) -> SampleSet {
    let mut r = rng(seed);
    let pts: Vec<f64> = (0..n).flat_map(|_| cube_point(&mut r, d, 1.0)).collect();
    SampleSet::new(Matrix::from_vec(n, d, pts)).unwrap()
}

/// Enumerate all sign patterns; the ℓ1-ball supremum is the ℓ∞ norm of `Σ ξ_i (x_i, 1)`.
fn brute_affine(s: &SampleSet) -> f64 {
    let (n, d) = (s.len(), s.dim());
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let mut v = vec![0.0; d + 1];
        for i in 0..n {
            let e = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
            for k in 0..d {
                v[k] += e * s.points().get(i, k);
            }
            v[d] += e;
        }
        total += v.iter().map(|x: &f64| x.abs()).fold(0.0, f64::max) / n as f64;
    }
    total / (1u64 << n) as f64
}

fn brute_constants(n: usize) -> f64 {
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let ones = mask.count_ones() as f64;
        total += (2.0 * ones - n as f64).abs();
    }
    total / (1u64 << n) as f64 / n as f64
}

#[test]
fn two_point_instance_is_one() {
    let s = SampleSet::new(Matrix::from_vec(2, 1, vec![1.0, -1.0])).unwrap();
    let est = rademacher_affine_exact(&s, 1, 0).unwrap();
    assert!(est.exhaustive);
    assert_eq!(est.draws, 4);
    assert!((est.value - 1.0).abs() <= 1e-15);
}

#[test]
fn exhaustive_matches_enumeration_oracle() {
    for (seed, n, d) in [(1, 5, 1), (2, 10, 3), (3, 14, 2)] {
        let s = sample_set(seed, n, d);
        let est = rademacher_affine_exact(&s, 1, 0).unwrap();
        assert!(close(est.value, brute_affine(&s), 1e-12));
    }
}

#[test]
fn exhaustive_and_monte_carlo_agree() {
    for (seed, n, d) in [(4, 8, 2), (5, 16, 3), (6, 20, 1)] {
        let s = sample_set(seed, n, d);
        let ex = rademacher_affine(&s, 1.0, true, 0, 0).unwrap();
        let mc = rademacher_affine(&s, 1.0, false, 4000, seed).unwrap();
        assert!(mc.std_error > 0.0);
        assert!(
            (ex.value - mc.value).abs() <= 3.0 * mc.std_error,
            "{} vs {} ± {}",
            ex.value,
            mc.value,
            mc.std_error
        );
    }
}

#[test]
fn monte_carlo_respects_affine_bound() {
    let mut r = rng(7);
    for k in 0..20 {
        let n = r.random_range(20..=500);
        let d = r.random_range(1..=8);
        let s = sample_set(100 + k, n, d);
        let est = rademacher_affine(&s, 1.0, false, 300, k).unwrap();
        assert!(est.value <= affine_bound(d, n) + 3.0 * est.std_error);
    }
}

#[test]
fn radius_scaling_is_exact() {
    let s = sample_set(8, 40, 3);
    let a = rademacher_affine(&s, 1.0, false, 100, 2).unwrap();
    let b = rademacher_affine(&s, 3.0, false, 100, 2).unwrap();
    assert!(close(b.value, 3.0 * a.value, 1e-14));
    let s = sample_set(9, 10, 2);
    let a = rademacher_affine(&s, 1.0, true, 0, 0).unwrap();
    let b = rademacher_affine(&s, 0.25, true, 0, 0).unwrap();
    assert!(close(b.value, 0.25 * a.value, 1e-14));
}

#[test]
fn bias_only_sample_reduces_to_constants() {
    let s = SampleSet::new(Matrix::zeros(9, 3)).unwrap();
    let est = rademacher_affine_exact(&s, 1, 0).unwrap();
    assert!(close(est.value, rademacher_constants(9), 1e-14));
}

#[test]
fn constants_match_enumeration_and_asymptote() {
    for n in 1..=16 {
        assert!(close(rademacher_constants(n), brute_constants(n), 1e-13));
    }
    assert_eq!(rademacher_constants(1), 1.0);
    assert!(close(rademacher_constants(2), 0.5, 1e-15));
    assert!((rademacher_constants(30) / constants_asymptote(30) - 1.0).abs() <= 0.05);
}

#[test]
fn deep_lower_below_analytic_bound() {
    let s = sample_set(10, 200, 2);
    let cfg = AscentConfig {
        draws: 8,
        iterations: 30,
        ..AscentConfig::default()
    };
    let est = rademacher_deep_lower(&s, 1, 3, 11, &cfg).unwrap();
    assert!((est.upper_bound - 0.268).abs() < 1e-3);
    assert!(est.respects_upper());
    assert!(est.monotone_in_budget());
    assert_eq!(est.by_budget.len(), 4);
    assert_eq!(est.by_budget[0], 0.0);
    assert!(est.value > 0.0);
    assert_eq!(est.per_draw.len(), 8);
}

#[test]
fn deep_lower_zero_budget_is_vacuous() {
    let s = sample_set(12, 30, 2);
    let est = rademacher_deep_lower(&s, 2, 0, 0, &AscentConfig::default()).unwrap();
    assert_eq!(est.value, 0.0);
}

#[test]
fn deep_lower_on_degenerate_sample() {
    // every point equal: (1/N) Σ ξ_i h(x) = h(x) Σ ξ_i / N with |h(x)| ≤ 1 on the unit ball
    let n = 25;
    let x = [0.3, -0.6];
    let pts: Vec<f64> = (0..n).flat_map(|_| x).collect();
    let s = SampleSet::new(Matrix::from_vec(n, 2, pts)).unwrap();
    let cfg = AscentConfig {
        draws: 30,
        iterations: 40,
        ..AscentConfig::default()
    };
    let seed = 13;
    let est = rademacher_deep_lower(&s, 2, 2, seed, &cfg).unwrap();
    let draws = sign_draws(n, cfg.draws, seed);
    let mut ratios = Vec::new();
    for (xi, &best) in draws.iter().zip(&est.per_draw) {
        let c = xi.iter().sum::<f64>().abs() / n as f64;
        assert!(best <= c * (1.0 + 1e-9) + 1e-15);
        if c > 0.0 {
            ratios.push(best / c);
        }
    }
    // the ascent finds a near-extremal |h(x)|
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean_ratio > 0.5, "{mean_ratio}");
    // the draw average of |Σξ|/N estimates the constants class
    let cs: Vec<f64> = draws.iter().map(|xi| xi.iter().sum::<f64>().abs() / n as f64).collect();
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let sd = (cs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (cs.len() - 1) as f64).sqrt();
    assert!((mean - rademacher_constants(n)).abs() <= 3.0 * sd / (cs.len() as f64).sqrt());
    assert!(est.value <= mean * (1.0 + 1e-9));
}

#[test]
fn risk_bound_terms() {
    let b = RiskBound::new(2, 2, 1.5, 32, 2000, loss_cap(1.0, 1.5), 0.1);
    assert_eq!(b.approx, 18.0 * 4.0 * 1.5 * 1.5 / 32.0);
    assert!(close(
        b.rademacher,
        2f64.powf(3.5) * 1.5 * (2.0 * 6f64.ln() / 2000.0).sqrt(),
        1e-14
    ));
    assert!(close(
        b.confidence,
        16.0 * 2.25 * (2.0 * 20f64.ln() / 2000.0).sqrt(),
        1e-14
    ));
    assert!(close(b.total(), b.approx + b.rademacher + b.confidence, 1e-15));
}

#[test]
fn zero_target_experiment_is_trivial() {
    let f = Net::zeros(2, &[4, 4]).unwrap();
    let rep = generalization_gap_experiment(&f, &GenGapConfig::new(100, 8, vec![1, 2])).unwrap();
    assert_eq!(rep.bound_hold_count(), 2);
    assert!(rep.rows.iter().all(|r| r.test_risk == 0.0));
}

#[test]
fn small_experiment_report() {
    let f = mflab::datagen::random_net::<f64>(&[4, 4], 2, 1.0, mflab::datagen::WeightLaw::Uniform, 3).unwrap();
    let cfg = GenGapConfig {
        n_test: 2000,
        steps: 200,
        ..GenGapConfig::new(200, 8, vec![5])
    };
    let rep = generalization_gap_experiment(&f, &cfg).unwrap();
    let row = &rep.rows[0];
    assert!(close(row.target_proxy, 1.0, 1e-12));
    assert!(row.test_risk.is_finite() && row.train_risk.is_finite());
    assert!(close(row.bound.approx, 18.0 * 4.0 / 8.0, 1e-12));
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), GenGapRow::CSV_HEADER);
    assert_eq!(text.lines().count(), 2);
}
