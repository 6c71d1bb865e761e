//! Empirical Rademacher complexity estimators and the generalization-gap
//! experiment.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::datagen::{label, random_net, stream, DataDistribution, Dataset, Provenance, WeightLaw};
use crate::netcore::MeanFieldNet;
use crate::norms::path_norm_proxy;
use crate::train::{
    apply_step, empirical_risk, output_gradient, regularization_lambda, train_regularized, Grads, Loss, RiskData,
    RiskSpec, SigmaPrime, TrainConfig,
};
use crate::{Error, Matrix, Result};

/// Sample points `x_1 … x_N` in `[−1, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Matrix<f64>,
}

impl SampleSet {
    pub fn new(points: Matrix<f64>) -> Result<Self> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::InvalidArgument("sample set must be nonempty".into()));
        }
        if points.as_slice().iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidArgument("sample points must lie in [-1, 1]^d".into()));
        }
        Ok(Self { points })
    }

    pub fn uniform(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self::new(DataDistribution::uniform_cube(d, 1.0).sample(n, seed))
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix<f64> {
        &self.points
    }
}

/// A Rademacher estimate with its Monte-Carlo standard error (0 when exact).
#[derive(Clone, Debug, PartialEq)]
pub struct RadEstimate {
    pub value: f64,
    pub std_error: f64,
    pub exhaustive: bool,
    pub draws: usize,
}

/// `√(2 log(2d+2) / N)`: the affine-class bound.
pub fn affine_bound(d: usize, n: usize) -> f64 {
    (2.0 * ((2 * d + 2) as f64).ln() / n as f64).sqrt()
}

/// Sign vectors used by the Monte-Carlo estimators: draw `k` comes from
/// stream `k` of `seed`.
pub fn sign_draws(n: usize, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..draws)
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
        })
        .collect()
}

/// `max_j |(1/N) Σ_i ξ_i x̃_ij|`: the supremum over the ℓ1 unit ball of affine maps.
fn affine_sup(s: &SampleSet, xi: &[f64]) -> f64 {
    let (n, d) = (s.len(), s.dim());
    let mut sums = vec![0.0; d + 1];
    for (i, &e) in xi.iter().enumerate() {
        for (k, &x) in s.points.row(i).iter().enumerate() {
            sums[k] += e * x;
        }
        sums[d] += e;
    }
    sums.iter().map(|v| v.abs()).fold(0.0, f64::max) / n as f64
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest `N` for which sign patterns are enumerated exhaustively.
pub const EXHAUSTIVE_MAX: usize = 20;

/// Rademacher complexity of `{x ↦ w · (x, 1) : ‖w‖_1 ≤ radius}` on `s`.
///
/// Exhaustive over all `2^N` sign patterns when `exhaustive` is set (requires
/// `N ≤ 20`), otherwise the mean over `n_draws` sign draws.
pub fn rademacher_affine(
    s: &SampleSet,
    radius: f64,
    exhaustive: bool,
    n_draws: usize,
    seed: u64,
) -> Result<RadEstimate> {
    let n = s.len();
    if exhaustive {
        if n > EXHAUSTIVE_MAX {
            return Err(Error::InvalidArgument(format!(
                "exhaustive enumeration needs N ≤ {EXHAUSTIVE_MAX}"
            )));
        }
        let total: f64 = (0u64..1 << n)
            .into_par_iter()
            .map(|mask| {
                let xi: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                affine_sup(s, &xi)
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        return Ok(RadEstimate {
            value: radius * total / (1u64 << n) as f64,
            std_error: 0.0,
            exhaustive: true,
            draws: 1 << n,
        });
    }
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be positive".into()));
    }
    let vals: Vec<f64> = sign_draws(n, n_draws, seed)
        .par_iter()
        .map(|xi| radius * affine_sup(s, xi))
        .collect();
    let (value, std_error) = mean_and_se(&vals);
    Ok(RadEstimate {
        value,
        std_error,
        exhaustive: false,
        draws: n_draws,
    })
}

/// Unit-radius affine estimate; exhaustive when `N ≤ 20`.
pub fn rademacher_affine_exact(s: &SampleSet, n_draws: usize, seed: u64) -> Result<RadEstimate> {
    rademacher_affine(s, 1.0, s.len() <= EXHAUSTIVE_MAX, n_draws, seed)
}

/// `E|Σ_i ξ_i| / N` for the two-function class `{−1, +1}`, from the exact
/// binomial distribution (log-space weights, valid for every `N`).
pub fn rademacher_constants(n: usize) -> f64 {
    assert!(n >= 1, "N must be positive");
    let nf = n as f64;
    let ln2 = std::f64::consts::LN_2;
    let mut log_c = 0.0; // ln C(N, k)
    let mut acc = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_c += ((n - k + 1) as f64 / k as f64).ln();
        }
        let dev = (2.0 * k as f64 - nf).abs();
        if dev > 0.0 {
            acc += (log_c - nf * ln2).exp() * dev;
        }
    }
    acc / nf
}

/// `√(2 / (π N))`, the large-`N` asymptote of [`rademacher_constants`].
pub fn constants_asymptote(n: usize) -> f64 {
    (2.0 / (std::f64::consts::PI * n as f64)).sqrt()
}

/// Lower estimate of the Rademacher complexity of the unit proxy ball of depth-`L` networks.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepLowerEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `value` using only the first `b` restarts, `b = 0..=budget`.
    pub by_budget: Vec<f64>,
    /// Per-draw maxima with the full budget.
    pub per_draw: Vec<f64>,
    /// `2^L √(2 log(2d+2)/N)`.
    pub upper_bound: f64,
}

impl DeepLowerEstimate {
    /// `value ≤ upper_bound + 3 SE`.
    pub fn respects_upper(&self) -> bool {
        self.value <= self.upper_bound + 3.0 * self.std_error
    }

    pub fn monotone_in_budget(&self) -> bool {
        self.by_budget.windows(2).all(|w| w[0] <= w[1])
    }

    pub const CSV_HEADER: &'static str = "draw,max_correlation";
}

/// Settings for [`rademacher_deep_lower`].
#[derive(Clone, Debug, PartialEq)]
pub struct AscentConfig {
    pub width: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub draws: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            width: 8,
            iterations: 60,
            step_size: 0.5,
            draws: 20,
        }
    }
}

fn project_unit_proxy(net: &mut MeanFieldNet<f64>) {
    let p = path_norm_proxy(net);
    if p > 0.0 {
        net.scale_layer(net.depth(), 1.0 / p);
    }
}

fn correlation(net: &MeanFieldNet<f64>, s: &SampleSet, xi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &e) in xi.iter().enumerate() {
        acc += e * net.forward_unchecked(s.points.row(i));
    }
    acc / s.len() as f64
}

/// Best `|(1/N) Σ ξ_i h(x_i)|` found by projected ascent from one random start.
fn ascend(s: &SampleSet, xi: &[f64], depth: usize, cfg: &AscentConfig, seed: u64) -> f64 {
    let widths = vec![cfg.width; depth];
    let mut net = random_net::<f64>(&widths, s.dim(), 1.0, WeightLaw::Gaussian, seed).expect("positive target");
    let start = correlation(&net, s, xi);
    let sign = if start < 0.0 { -1.0 } else { 1.0 };
    let mut best = start.abs();
    for it in 0..cfg.iterations {
        let mut g = Grads::zeros_like(&net);
        let inv_n = 1.0 / s.len() as f64;
        for (i, &e) in xi.iter().enumerate() {
            let (_, gi) = output_gradient(&net, s.points.row(i), SigmaPrime::Zero);
            for (a, b) in g.layers.iter_mut().zip(&gi.layers) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += sign * e * inv_n * y;
                }
            }
        }
        let norm = g.scaled_norm_sq(&net).sqrt();
        if !(norm > 0.0) {
            break;
        }
        let h = cfg.step_size / (norm * (1.0 + it as f64).sqrt());
        // ascent: step along +g
        apply_step(&mut net, &g, -h);
        project_unit_proxy(&mut net);
        best = best.max(correlation(&net, s, xi).abs());
    }
    best
}

/// Mean over sign draws of the best correlation found by `budget` restarts of
/// projected gradient ascent over width-`cfg.width` networks of depth `depth`
/// whose proxy is rescaled to 1 through the outer layer. Every evaluated
/// network lies in the unit proxy ball, so the result is a lower estimate.
pub fn rademacher_deep_lower(
    s: &SampleSet,
    depth: usize,
    budget: usize,
    seed: u64,
    cfg: &AscentConfig,
) -> Result<DeepLowerEstimate> {
    if depth == 0 || cfg.draws == 0 || cfg.width == 0 {
        return Err(Error::InvalidArgument("depth, draws and width must be positive".into()));
    }
    let upper_bound = 2f64.powi(depth as i32) * affine_bound(s.dim(), s.len());
    let draws = sign_draws(s.len(), cfg.draws, seed);
    // prefix[k][b]: best over the first b restarts for draw k
    let prefix: Vec<Vec<f64>> = draws
        .par_iter()
        .enumerate()
        .map(|(k, xi)| {
            let mut best = 0.0f64;
            let mut row = vec![0.0];
            for r in 0..budget {
                let start_seed = seed ^ ((k as u64) << 32 | r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                best = best.max(ascend(s, xi, depth, cfg, start_seed));
                row.push(best);
            }
            row
        })
        .collect();
    let by_budget: Vec<f64> = (0..=budget)
        .map(|b| prefix.iter().map(|row| row[b]).sum::<f64>() / prefix.len() as f64)
        .collect();
    let per_draw: Vec<f64> = prefix.iter().map(|row| row[budget]).collect();
    let (value, std_error) = mean_and_se(&per_draw);
    Ok(DeepLowerEstimate {
        value,
        std_error,
        by_budget,
        per_draw,
        upper_bound,
    })
}

/// Settings for [`generalization_gap_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct GenGapConfig {
    pub n_train: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub n_test: usize,
    pub radius: f64,
    pub delta: f64,
    pub step_size: f64,
    pub steps: usize,
    pub grad_tol: Option<f64>,
}

impl GenGapConfig {
    pub fn new(n_train: usize, m: usize, seeds: Vec<u64>) -> Self {
        Self {
            n_train,
            m,
            seeds,
            n_test: 100_000,
            radius: 1.0,
            delta: 0.1,
            step_size: 0.05,
            steps: 2000,
            grad_tol: Some(1e-4),
        }
    }
}

/// The three terms of the a priori risk bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskBound {
    /// `18 L² P² / m`.
    pub approx: f64,
    /// `2^{L+3/2} P √(2 log(2d+2)/N)`.
    pub rademacher: f64,
    /// `c̄ √(2 log(2/δ)/N)`.
    pub confidence: f64,
}

impl RiskBound {
    pub fn new(depth: usize, d: usize, proxy: f64, m: usize, n: usize, cap: f64, delta: f64) -> Self {
        let l = depth as f64;
        Self {
            approx: 18.0 * l * l * proxy * proxy / m as f64,
            rademacher: 2f64.powf(l + 1.5) * proxy * affine_bound(d, n),
            confidence: cap * (2.0 * (2.0 / delta).ln() / n as f64).sqrt(),
        }
    }

    pub fn total(&self) -> f64 {
        self.approx + self.rademacher + self.confidence
    }
}

/// `c̄ = 4 (1 + R)² P²`.
pub fn loss_cap(radius: f64, proxy: f64) -> f64 {
    4.0 * (1.0 + radius).powi(2) * proxy * proxy
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenGapRow {
    pub seed: u64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub proxy: f64,
    pub target_proxy: f64,
    pub bound: RiskBound,
    pub converged: bool,
}

impl GenGapRow {
    pub const CSV_HEADER: &'static str = "seed,train_risk,test_risk,proxy,target_proxy,term_approx,term_rademacher,term_confidence,bound,bound_holds,proxy_holds,converged";

    pub fn bound_holds(&self) -> bool {
        self.test_risk <= self.bound.total()
    }

    /// `proxy ≤ 1.5 √2 · target_proxy`.
    pub fn proxy_holds(&self) -> bool {
        self.proxy <= 1.5 * std::f64::consts::SQRT_2 * self.target_proxy * (1.0 + 1e-12)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.train_risk,
            self.test_risk,
            self.proxy,
            self.target_proxy,
            self.bound.approx,
            self.bound.rademacher,
            self.bound.confidence,
            self.bound.total(),
            self.bound_holds(),
            self.proxy_holds(),
            self.converged
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenGapReport {
    pub rows: Vec<GenGapRow>,
}

impl GenGapReport {
    pub fn bound_hold_count(&self) -> usize {
        self.rows.iter().filter(|r| r.bound_holds()).count()
    }

    pub fn proxy_hold_count(&self) -> usize {
        self.rows.iter().filter(|r| r.proxy_holds()).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", GenGapRow::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{}", r.to_csv())?;
        }
        Ok(())
    }
}

/// For each seed: draw `N` uniform samples labelled by `f_star`, train a
/// width-`(m, …, m)` student on the clipped risk with penalty `(9L²/m) proxy²`,
/// and compare its clipped test risk on `n_test` fresh points with the
/// three-term bound.
pub fn generalization_gap_experiment(f_star: &MeanFieldNet<f64>, cfg: &GenGapConfig) -> Result<GenGapReport> {
    if cfg.n_train == 0 || cfg.m == 0 || cfg.n_test == 0 || cfg.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "n_train, m, n_test and seeds must be nonempty".into(),
        ));
    }
    let depth = f_star.depth();
    let d = f_star.input_dim();
    let dist = DataDistribution::new(crate::datagen::DistKind::UniformCube, d, cfg.radius)?;
    let target_proxy = path_norm_proxy(f_star);
    let cap = loss_cap(cfg.radius, target_proxy);
    let bound = RiskBound::new(depth, d, target_proxy, cfg.m, cfg.n_train, cap, cfg.delta);
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        if target_proxy == 0.0 {
            // The zero network minimizes both the risk and the penalty.
            rows.push(GenGapRow {
                seed,
                train_risk: 0.0,
                test_risk: 0.0,
                proxy: 0.0,
                target_proxy,
                bound,
                converged: true,
            });
            continue;
        }
        let prov = |what: &str| Provenance {
            distribution: dist.to_string(),
            target: what.into(),
            seed,
        };
        let mut rng = stream(seed, 0);
        let train_set = label(f_star, dist.sample_with(cfg.n_train, &mut rng), prov("f_star"))?;
        let mut rng = stream(seed, 1);
        let test_set: Dataset<f64> = label(f_star, dist.sample_with(cfg.n_test, &mut rng), prov("f_star"))?;
        let loss = Loss::ClippedSquared { cap };
        let spec = RiskSpec::new(loss, RiskData::Sample(train_set.clone()))?;
        let mut student = random_net::<f64>(&vec![cfg.m; depth], d, 1.0, WeightLaw::Uniform, seed)?;
        let config = TrainConfig {
            step_size: cfg.step_size,
            steps: cfg.steps,
            lambda: regularization_lambda(depth, cfg.m),
            sigma_prime_at_zero: SigmaPrime::Zero,
            seed,
            checkpoint_every: cfg.steps.max(1),
            grad_tol: cfg.grad_tol,
            track_dissipation: false,
        };
        let log = train_regularized(&mut student, &spec, &config)?;
        rows.push(GenGapRow {
            seed,
            train_risk: empirical_risk(&student, &train_set, loss),
            test_risk: empirical_risk(&student, &test_set, loss),
            proxy: path_norm_proxy(&student),
            target_proxy,
            bound,
            converged: log.converged,
        });
    }
    Ok(GenGapReport { rows })
}
