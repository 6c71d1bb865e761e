//! Acceptance run: one pass/fail line per criterion, nonzero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use mflab::approx::rate_sweep;
use mflab::calculus::*;
use mflab::complexity::*;
use mflab::datagen::{label, random_net as target_net, stream, DataDistribution, Provenance, WeightLaw};
use mflab::netcore::{forward_net, forward_tree};
use mflab::norms::{hilbert_complexity, path_norm_proxy, path_norm_proxy_tree};
use mflab::train::*;
use mflab::{net_to_tree, EvalPoint, Matrix, Net};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(n: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = o.pass && in_time;
    println!(
        "[{}] criterion {n}: {title}: {}; {:.1} s (limit {} s{})",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
    pass
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn c1_net_tree_equivalence() -> Outcome {
    let seed = 101;
    let mut r = rng(seed);
    let (mut worst_f, mut worst_p) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let net = random_net(&mut r, 3, 8, 4);
        let tree = net_to_tree(&net);
        for _ in 0..50 {
            let x = EvalPoint::new(cube_point(&mut r, net.input_dim(), 1.0)).unwrap();
            let a = forward_net(&net, &x).unwrap();
            let b = forward_tree(&tree, &x).unwrap();
            worst_f = worst_f.max(rel(b, a));
        }
        worst_p = worst_p.max(rel(path_norm_proxy_tree(&tree), path_norm_proxy(&net)));
    }
    outcome(
        worst_f <= 1e-12 && worst_p <= 1e-12,
        format!("seed {seed}, 100 nets x 50 points, worst forward rel {worst_f:.2e}, worst proxy rel {worst_p:.2e}"),
    )
}

fn c2_dp_vs_brute_force() -> Outcome {
    let seed = 202;
    let mut r = rng(seed);
    let (mut worst, mut checked, mut largest) = (0.0f64, 0, 0);
    while checked < 50 {
        let net = random_net(&mut r, 3, 30, 4);
        let paths = path_count(&net);
        if paths > 100_000 {
            continue;
        }
        largest = largest.max(paths);
        worst = worst.max(rel(path_norm_proxy(&net), brute_force_proxy(&net)));
        checked += 1;
    }
    outcome(
        worst <= 1e-12,
        format!("seed {seed}, 50 nets (largest {largest} paths), worst rel {worst:.2e}"),
    )
}

fn c3_cauchy_schwarz() -> Outcome {
    let seed = 303;
    let mut r = rng(seed);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..1000 {
        let net = random_net(&mut r, 3, 8, 4);
        let rep = hilbert_complexity(&net);
        if rep.proxy > rep.hilbert_q * (1.0 + 1e-9) {
            violations += 1;
        }
        tightest = tightest.min(rep.hilbert_q - rep.proxy);
    }
    let mut worst_eq = 0.0f64;
    for _ in 0..50 {
        let (d, widths) = random_shape(&mut r, 3, 8, 4);
        let c = r.random_range(0.1..2.0);
        let mut net = Net::zeros(d, &widths).unwrap();
        for l in 0..=net.depth() {
            net.layer_mut(l).iter_mut().for_each(|v| *v = c);
        }
        let rep = hilbert_complexity(&net);
        worst_eq = worst_eq.max((rep.proxy - rep.hilbert_q).abs() / rep.hilbert_q);
    }
    outcome(
        violations == 0 && worst_eq <= 1e-10,
        format!(
            "seed {seed}, 1000 nets, {violations} violations, min gap {tightest:.2e}; 50 constant nets, worst rel gap {worst_eq:.2e}"
        ),
    )
}

fn c4_maurey_rate() -> Outcome {
    let seed = 404;
    let dist = DataDistribution::uniform_cube(2, 1.0);
    let shallow = target_net::<f64>(&[256], 2, 1.0, WeightLaw::Gaussian, seed).unwrap();
    let p1 = path_norm_proxy(&shallow);
    let sweep1 = rate_sweep(&shallow, &[4, 16, 64, 256], &dist, 200, 4000, seed).unwrap();
    let variance_ok = sweep1
        .rows
        .iter()
        .all(|row| row.mean_sq_error() <= p1 * p1 / row.m as f64);
    let slope_ok = (-0.65..=-0.35).contains(&sweep1.slope);
    let mse: Vec<String> = sweep1
        .rows
        .iter()
        .map(|row| {
            format!(
                "m={} {:.2e}<={:.2e}",
                row.m,
                row.mean_sq_error(),
                p1 * p1 / row.m as f64
            )
        })
        .collect();

    let deep = target_net::<f64>(&[64, 64], 2, 1.0, WeightLaw::Gaussian, seed + 1).unwrap();
    let sweep2 = rate_sweep(&deep, &[4, 16, 64], &dist, 50, 4000, seed + 1).unwrap();
    let freqs: Vec<f64> = sweep2
        .rows
        .iter()
        .map(|row| row.errors.iter().filter(|&&e| e <= row.bound).count() as f64 / row.errors.len() as f64)
        .collect();
    let freq_ok = freqs.iter().all(|&f| f >= 0.9);
    outcome(
        variance_ok && slope_ok && freq_ok,
        format!(
            "seeds {seed}/{}: L=1 mse [{}], slope {:.3}; L=2 within-bound frequencies {:?}",
            seed + 1,
            mse.join(", "),
            sweep1.slope,
            freqs
        ),
    )
}

/// Normwise relative error and worst entrywise excess over all weights of one net.
fn fd_check(net: &Net, data: &mflab::Dataset) -> (f64, f64) {
    let (risk, g) = gradients(net, data, Loss::Squared, SigmaPrime::Zero);
    let eps = 1e-6;
    let mut fd = Vec::new();
    for l in 0..=net.depth() {
        for k in 0..net.layer(l).len() {
            let mut plus = net.clone();
            plus.layer_mut(l)[k] += eps;
            let mut minus = net.clone();
            minus.layer_mut(l)[k] -= eps;
            fd.push(
                (empirical_risk(&plus, data, Loss::Squared) - empirical_risk(&minus, data, Loss::Squared))
                    / (2.0 * eps),
            );
        }
    }
    let flat: Vec<f64> = g.layers.concat();
    fd_compare(&fd, &flat, risk, eps, 1e-5)
}

fn dataset_from(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> mflab::Dataset {
    let d = xs[0].len();
    let prov = Provenance {
        distribution: "uniform_cube".into(),
        target: "random".into(),
        seed: 0,
    };
    mflab::Dataset::new(
        Matrix::from_vec(ys.len(), d, xs.into_iter().flatten().collect()),
        ys,
        prov,
    )
    .unwrap()
}

fn c5_gradient_check() -> Outcome {
    let seed = 505;
    let mut r = rng(seed);
    let (mut worst, mut excess) = (0.0f64, f64::NEG_INFINITY);
    let mut nets = 0;
    while nets < 20 {
        let net = random_net(&mut r, 3, 8, 4);
        let d = net.input_dim();
        let mut xs = Vec::new();
        for _ in 0..500 {
            let x = cube_point(&mut r, d, 1.0);
            if min_abs_preactivation(&net, &x) > 1e-3 {
                xs.push(x);
                if xs.len() == 5 {
                    break;
                }
            }
        }
        if xs.len() < 5 {
            continue;
        }
        let ys = (0..xs.len()).map(|_| gaussian(&mut r)).collect();
        let (w, e) = fd_check(&net, &dataset_from(xs, ys));
        worst = worst.max(w);
        excess = excess.max(e);
        nets += 1;
    }
    outcome(
        worst <= 1e-5 && excess <= 0.0,
        format!(
            "seed {seed}, 20 nets x 5 kink-free points, worst normwise rel error {worst:.2e}, entrywise excess over 1e-5 + rounding {excess:.2e}"
        ),
    )
}

fn training_problem(seed: u64) -> (Net, mflab::Dataset) {
    let dist = DataDistribution::uniform_cube(2, 1.0);
    let target = target_net::<f64>(&[4, 4], 2, 1.0, WeightLaw::Uniform, seed).unwrap();
    let pts = dist.sample_with(256, &mut stream(seed, 10));
    let prov = Provenance {
        distribution: dist.to_string(),
        target: "random_net(4,4)".into(),
        seed,
    };
    let data = label(&target, pts, prov).unwrap();
    let student = target_net::<f64>(&[16, 16], 2, 1.0, WeightLaw::Uniform, seed ^ 0xabc).unwrap();
    (student, data)
}

fn c6_norm_growth() -> Outcome {
    let seeds = [601u64, 602, 603, 604, 605];
    let mut all_ok = true;
    let mut parts = Vec::new();
    for &seed in &seeds {
        let (mut net, data) = training_problem(seed);
        let config = TrainConfig {
            step_size: 1e-3,
            steps: 10_000,
            seed,
            checkpoint_every: 100,
            ..TrainConfig::default()
        };
        match train(&mut net, &RiskSpec::squared(data), &config) {
            Ok(log) => {
                let ok = log.growth_bounds_hold(1.05) && log.is_well_formed();
                all_ok &= ok;
                parts.push(format!(
                    "{seed}: moment {:.3} proxy {:.3} risk {:.2e}->{:.2e}",
                    log.worst_moment_slack(),
                    log.worst_proxy_slack(),
                    log.meta.risk0,
                    log.last().unwrap().risk
                ));
            }
            Err(e) => {
                all_ok = false;
                parts.push(format!("{seed}: {e}"));
            }
        }
    }
    outcome(all_ok, format!("worst ratios per seed [{}]", parts.join("; ")))
}

/// Largest `h ≤ 1e-3` (by halving) whose trial step changes no activation on the data.
fn smooth_step(net: &Net, data: &mflab::Dataset) -> f64 {
    let (_, g) = gradients(net, data, Loss::Squared, SigmaPrime::Zero);
    let before: Vec<Vec<bool>> = (0..data.len()).map(|i| activation_pattern(net, data.x(i))).collect();
    let mut h = 1e-3;
    loop {
        let mut trial = net.clone();
        apply_step(&mut trial, &g, h);
        if (0..data.len()).all(|i| activation_pattern(&trial, data.x(i)) == before[i]) {
            return h;
        }
        h *= 0.5;
    }
}

fn c7_energy_dissipation() -> Outcome {
    let mut ratios = Vec::new();
    let mut ok = true;
    for seed in 701u64..706 {
        let (net, data) = training_problem(seed);
        let h0 = smooth_step(&net, &data);
        let res: Vec<f64> = [h0, h0 / 2.0, h0 / 4.0]
            .iter()
            .map(|&h| dissipation_residual(&net, &data, Loss::Squared, 0.0, SigmaPrime::Zero, h))
            .collect();
        let (r1, r2) = (res[0] / res[1], res[1] / res[2]);
        ok &= r1 >= 1.8 && r2 >= 1.8;
        ratios.push(format!("h0={h0:.2e}: {r1:.3}/{r2:.3}"));
    }
    outcome(ok, format!("seeds 701-705, halving ratios [{}]", ratios.join(", ")))
}

fn c8_rademacher() -> Outcome {
    let two = SampleSet::new(Matrix::from_vec(2, 1, vec![1.0, -1.0])).unwrap();
    let a = rademacher_affine_exact(&two, 1, 0).unwrap().value;
    let a_ok = (a - 1.0).abs() <= 1e-15;

    let seed = 808;
    let mut r = rng(seed);
    let mut b_ok = true;
    let mut worst_b = f64::NEG_INFINITY;
    for k in 0..20 {
        let n = r.random_range(10..=500);
        let d = r.random_range(1..=8);
        let s = SampleSet::uniform(n, d, seed + k).unwrap();
        let est = rademacher_affine(&s, 1.0, false, 500, seed + 100 + k).unwrap();
        let margin = est.value - affine_bound(d, n) - 3.0 * est.std_error;
        worst_b = worst_b.max(margin);
        b_ok &= margin <= 0.0;
    }

    let c = rademacher_constants(30) / constants_asymptote(30);
    let c_ok = (c - 1.0).abs() <= 0.05;

    let mut d_ok = true;
    let mut deep = Vec::new();
    for depth in 1..=3 {
        let s = SampleSet::uniform(100, 2, seed + 1000 + depth as u64).unwrap();
        let est = rademacher_deep_lower(&s, depth, 3, seed + depth as u64, &AscentConfig::default()).unwrap();
        d_ok &= est.respects_upper() && est.monotone_in_budget();
        deep.push(format!("L={depth} {:.3}<={:.3}", est.value, est.upper_bound));
    }
    outcome(
        a_ok && b_ok && c_ok && d_ok,
        format!(
            "seed {seed}: (a) {a}; (b) worst margin {worst_b:.3e}; (c) ratio {c:.4}; (d) [{}]",
            deep.join(", ")
        ),
    )
}

fn c9_calculus() -> Outcome {
    let seed = 909;
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut check = |got: f64, want: f64, scale: f64| {
        worst = worst.max((got - want).abs() / (1.0 + scale));
    };
    for _ in 0..5 {
        let f = gaussian_net(&mut r, 2, &[4, 3]);
        let g = gaussian_net(&mut r, 2, &[3, 5]);
        let h = gaussian_net(&mut r, 2, &[3]);
        let ab = abs_of(&f).unwrap();
        let mx = max_of(&f, &g).unwrap();
        let mn = min_of(&f, &g).unwrap();
        let cp = compose(&h, &[f.clone(), g.clone()]).unwrap();
        for _ in 0..100 {
            let x = cube_point(&mut r, 2, 1.0);
            let (a, b) = (f.forward(&x).unwrap(), g.forward(&x).unwrap());
            let s = a.abs() + b.abs();
            check(ab.forward(&x).unwrap(), a.abs(), s);
            check(mx.forward(&x).unwrap(), a.max(b), s);
            check(mn.forward(&x).unwrap(), a.min(b), s);
            let hv = h.forward(&[a, b]).unwrap();
            check(cp.forward(&x).unwrap(), hv, s + hv.abs());
        }
    }
    let exact_ok = worst <= 1e-12;

    let (m, n) = (1.0, 64);
    let sq = square_barron::<f64>(m, n).unwrap();
    let sq_err = (0..1000)
        .map(|k| {
            let z = -m + 2.0 * m * k as f64 / 999.0;
            (sq.forward(&[z]).unwrap() - z.max(0.0).powi(2)).abs()
        })
        .fold(0.0f64, f64::max);
    let sq_ok = sq_err <= m * m / (4.0 * n as f64);

    let f = gaussian_net(&mut r, 2, &[3]);
    let g = gaussian_net(&mut r, 2, &[4]);
    let grid: Vec<Vec<f64>> = (0..1000).map(|_| cube_point(&mut r, 2, 1.0)).collect();
    let bound = grid
        .iter()
        .map(|x| f.forward(x).unwrap().abs().max(g.forward(x).unwrap().abs()))
        .fold(0.0f64, f64::max)
        * 1.01;
    let q = 64;
    let p = product_of(&f, &g, bound, q).unwrap();
    let prod_err = grid
        .iter()
        .map(|x| (p.forward(x).unwrap() - f.forward(x).unwrap() * g.forward(x).unwrap()).abs())
        .fold(0.0f64, f64::max);
    let prod_bound = product_error_bound(bound, q);
    let prod_ok = prod_err <= prod_bound && prod_bound <= 2.0 * (2.0 * bound).powi(2) / (4.0 * q as f64);
    outcome(
        exact_ok && sq_ok && prod_ok,
        format!(
            "seed {seed}: abs/max/min/compose worst {worst:.2e}; square sup error {sq_err:.2e} <= {:.2e}; product error {prod_err:.2e} <= {prod_bound:.2e}",
            m * m / (4.0 * n as f64)
        ),
    )
}

fn c10_generalization() -> Outcome {
    let f_seed = 1010;
    let f_star = target_net::<f64>(&[4, 4], 2, 1.0, WeightLaw::Uniform, f_seed).unwrap();
    let seeds: Vec<u64> = (1..=10).collect();
    let cfg = GenGapConfig::new(2000, 32, seeds.clone());
    match generalization_gap_experiment(&f_star, &cfg) {
        Ok(rep) => {
            let (b, p) = (rep.bound_hold_count(), rep.proxy_hold_count());
            let worst_risk = rep.rows.iter().map(|r| r.test_risk).fold(0.0f64, f64::max);
            let worst_proxy = rep.rows.iter().map(|r| r.proxy).fold(0.0f64, f64::max);
            outcome(
                b >= 9 && p >= 8,
                format!(
                    "f* seed {f_seed}, student seeds {seeds:?}: bound holds {b}/10 (max test risk {worst_risk:.3e} vs bound {:.3}), proxy holds {p}/10 (max proxy {worst_proxy:.3})",
                    rep.rows[0].bound.total()
                ),
            )
        }
        Err(e) => outcome(false, format!("experiment failed: {e}")),
    }
}

use rand::Rng;

fn main() {
    println!(
        "acceptance criteria (gradient reduction {REDUCTION}, threads {})",
        rayon::current_num_threads()
    );
    let secs = Duration::from_secs;
    let results = [
        run(1, "net/tree equivalence", secs(10), c1_net_tree_equivalence),
        run(2, "path-norm DP vs brute force", secs(30), c2_dp_vs_brute_force),
        run(3, "Cauchy-Schwarz bound", secs(10), c3_cauchy_schwarz),
        run(4, "Maurey rate", secs(300), c4_maurey_rate),
        run(5, "gradient check", secs(30), c5_gradient_check),
        run(6, "norm growth", secs(300), c6_norm_growth),
        run(7, "energy dissipation", secs(60), c7_energy_dissipation),
        run(8, "Rademacher", secs(120), c8_rademacher),
        run(9, "calculus semantics", secs(60), c9_calculus),
        run(10, "generalization experiment", secs(600), c10_generalization),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
