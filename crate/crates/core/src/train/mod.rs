//! Layer-scaled explicit Euler training.
//!
//! One step updates `a^ℓ ← a^ℓ − h s_ℓ ∂R/∂a^ℓ` with `s_ℓ = m_{ℓ+1} m_ℓ`
//! (`m_0 = d+1`, `m_{L+1} = 1`). Viewing the weights as step functions on
//! probability spaces, this is an Euler step of the `L²` gradient flow, and
//! `dR/dt = −Σ s_ℓ ‖∂R/∂a^ℓ‖²`. The moment bound
//! `‖a^ℓ(t)‖ ≤ ‖a^ℓ(0)‖ + √(R(0) t)` and the proxy bound
//! `proxy(t) ≤ (C₀ + √(R(0) t))^{L+1}` are monitored at each checkpoint.

mod grad;
mod log;

pub use grad::{
    empirical_risk, gradients, lr_factors, min_abs_preactivation, output_gradient, penalty_gradient, Grads, CHUNK,
    REDUCTION,
};
pub use log::{Checkpoint, LogMeta, TrajectoryLog};

use crate::datagen::{label, stream, DataDistribution, Dataset, Provenance};
use crate::netcore::MeanFieldNet;
use crate::norms::{layer_norms, path_norm_proxy};
use crate::{Error, Result, Scalar};

/// Per-point loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    /// `(f − y)²`.
    Squared,
    /// `min{cap, (f − y)²}`; zero gradient where the cap is active.
    ClippedSquared { cap: f64 },
}

/// Value used for `σ'(0)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SigmaPrime {
    #[default]
    Zero,
    One,
}

impl SigmaPrime {
    pub fn as_u8(self) -> u8 {
        match self {
            SigmaPrime::Zero => 0,
            SigmaPrime::One => 1,
        }
    }
}

/// Where the risk is measured.
#[derive(Clone, Debug)]
pub enum RiskData<T> {
    /// Empirical risk of a fixed sample.
    Sample(Dataset<T>),
    /// Population risk of a target network, approximated by fresh minibatches.
    Population {
        dist: DataDistribution,
        target: MeanFieldNet<T>,
        batch: usize,
    },
}

#[derive(Clone, Debug)]
pub struct RiskSpec<T> {
    pub loss: Loss,
    pub data: RiskData<T>,
}

impl<T: Scalar> RiskSpec<T> {
    pub fn new(loss: Loss, data: RiskData<T>) -> Result<Self> {
        if let Loss::ClippedSquared { cap } = loss {
            if !(cap > 0.0) {
                return Err(Error::InvalidArgument(format!("loss cap must be positive, got {cap}")));
            }
        }
        if let RiskData::Population { batch, dist, target } = &data {
            if *batch == 0 {
                return Err(Error::InvalidArgument("batch size must be positive".into()));
            }
            if dist.dim != target.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: target.input_dim(),
                    got: dist.dim,
                });
            }
        }
        Ok(Self { loss, data })
    }

    pub fn squared(data: Dataset<T>) -> Self {
        Self {
            loss: Loss::Squared,
            data: RiskData::Sample(data),
        }
    }
}

/// Points in the held-out evaluation set of population mode.
pub const POPULATION_EVAL_POINTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub step_size: f64,
    pub steps: usize,
    /// Weight of the penalty `λ · proxy²`; 0 disables it.
    pub lambda: f64,
    pub sigma_prime_at_zero: SigmaPrime,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Stop once `√(Σ s_ℓ ‖∂R/∂a^ℓ‖²)` falls below this value.
    pub grad_tol: Option<f64>,
    /// Compute the dissipation residual at checkpoints (one extra gradient each).
    pub track_dissipation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            steps: 1000,
            lambda: 0.0,
            sigma_prime_at_zero: SigmaPrime::Zero,
            seed: 0,
            checkpoint_every: 100,
            grad_tol: None,
            track_dissipation: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// The regularization weight `9 L² / m`.
pub fn regularization_lambda(depth: usize, m: usize) -> f64 {
    9.0 * (depth * depth) as f64 / m as f64
}

/// Objective `R + λ proxy²` and its gradient on a fixed sample.
pub fn objective_gradients<T: Scalar>(
    net: &MeanFieldNet<T>,
    data: &Dataset<T>,
    loss: Loss,
    lambda: T,
    at_zero: SigmaPrime,
) -> (T, Grads<T>) {
    let (risk, mut g) = gradients(net, data, loss, at_zero);
    if lambda > T::zero() {
        let (pen, pg) = penalty_gradient(net, lambda);
        g.add_assign(&pg);
        (risk + pen, g)
    } else {
        (risk, g)
    }
}

pub fn objective<T: Scalar>(net: &MeanFieldNet<T>, data: &Dataset<T>, loss: Loss, lambda: T) -> T {
    let p = path_norm_proxy(net);
    empirical_risk(net, data, loss) + lambda * p * p
}

/// `a^ℓ ← a^ℓ − h s_ℓ g^ℓ`.
pub fn apply_step<T: Scalar>(net: &mut MeanFieldNet<T>, grads: &Grads<T>, h: T) {
    let s = lr_factors(net);
    for (l, (g, &sl)) in grads.layers.iter().zip(&s).enumerate() {
        let c = h * sl;
        for (w, &gv) in net.layer_mut(l).iter_mut().zip(g) {
            *w -= c * gv;
        }
    }
}

/// One full-batch scaled Euler step on a fixed sample.
pub fn gd_step<T: Scalar>(
    net: &MeanFieldNet<T>,
    data: &Dataset<T>,
    loss: Loss,
    config: &TrainConfig,
) -> MeanFieldNet<T> {
    let (_, g) = objective_gradients(net, data, loss, T::lit(config.lambda), config.sigma_prime_at_zero);
    let mut next = net.clone();
    apply_step(&mut next, &g, T::lit(config.step_size));
    next
}

/// `|ΔR/h + Σ s_ℓ ‖∂R/∂a^ℓ‖²|` for one trial step of size `h` from `net`.
///
/// Vanishes to first order in `h` along smooth directions.
pub fn dissipation_residual<T: Scalar>(
    net: &MeanFieldNet<T>,
    data: &Dataset<T>,
    loss: Loss,
    lambda: f64,
    at_zero: SigmaPrime,
    h: f64,
) -> f64 {
    let lambda = T::lit(lambda);
    let (r0, g) = objective_gradients(net, data, loss, lambda, at_zero);
    let mut trial = net.clone();
    apply_step(&mut trial, &g, T::lit(h));
    let r1 = objective(&trial, data, loss, lambda);
    ((r1 - r0).as_f64() / h + g.scaled_norm_sq(net).as_f64()).abs()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

struct Monitor<'a, T> {
    data: &'a Dataset<T>,
    loss: Loss,
    config: &'a TrainConfig,
    norms0: Vec<f64>,
    c0: f64,
    risk0: f64,
}

impl<T: Scalar> Monitor<'_, T> {
    fn checkpoint(&self, net: &MeanFieldNet<T>, step: usize) -> Checkpoint {
        let lambda = T::lit(self.config.lambda);
        let t = step as f64 * self.config.step_size;
        let norms: Vec<f64> = layer_norms(net).into_iter().map(Scalar::as_f64).collect();
        let proxy = path_norm_proxy(net).as_f64();
        let q = norms.iter().product();
        let grow = (self.risk0 * t).sqrt();
        let moment_slack = norms
            .iter()
            .zip(&self.norms0)
            .map(|(&n, &n0)| ratio(n, n0 + grow))
            .fold(0.0, f64::max);
        let proxy_slack = ratio(proxy, (self.c0 + grow).powi(norms.len() as i32));
        let dissipation_residual = if self.config.track_dissipation {
            dissipation_residual(
                net,
                self.data,
                self.loss,
                self.config.lambda,
                self.config.sigma_prime_at_zero,
                self.config.step_size,
            )
        } else {
            0.0
        };
        Checkpoint {
            step,
            t,
            risk: objective(net, self.data, self.loss, lambda).as_f64(),
            norms,
            proxy,
            q,
            dissipation_residual,
            moment_slack,
            proxy_slack,
        }
    }
}

/// Train `net` in place for `config.steps` steps.
///
/// In sample mode every step is full-batch and the monitors use the training
/// sample. In population mode each step draws a fresh minibatch and the
/// monitors use a held-out set of [`POPULATION_EVAL_POINTS`] points.
/// Aborts with [`Error::Diverged`] once the objective exceeds `10⁶` times its
/// initial value or becomes non-finite; `net` then holds the last state.
pub fn train<T: Scalar>(net: &mut MeanFieldNet<T>, spec: &RiskSpec<T>, config: &TrainConfig) -> Result<TrajectoryLog> {
    config.validate()?;
    let lambda = T::lit(config.lambda);
    let h = T::lit(config.step_size);
    let eval_set;
    let monitor_data = match &spec.data {
        RiskData::Sample(ds) => {
            if ds.is_empty() {
                return Err(Error::InvalidArgument("training sample is empty".into()));
            }
            if ds.dim() != net.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: net.input_dim(),
                    got: ds.dim(),
                });
            }
            ds
        }
        RiskData::Population { dist, target, .. } => {
            let mut rng = stream(config.seed, 1);
            let pts = dist.sample_with(POPULATION_EVAL_POINTS, &mut rng);
            eval_set = label(target, pts, provenance(dist, config.seed))?;
            &eval_set
        }
    };
    let norms0: Vec<f64> = layer_norms(net).into_iter().map(Scalar::as_f64).collect();
    let risk0 = objective(net, monitor_data, spec.loss, lambda).as_f64();
    let monitor = Monitor {
        data: monitor_data,
        loss: spec.loss,
        config,
        c0: norms0.iter().copied().fold(0.0, f64::max),
        norms0,
        risk0,
    };
    let mut log = TrajectoryLog {
        meta: LogMeta {
            sigma_prime_at_zero: config.sigma_prime_at_zero.as_u8(),
            reduction: REDUCTION.into(),
            seed: config.seed,
            step_size: config.step_size,
            lambda: config.lambda,
            depth: net.depth(),
            risk0,
        },
        checkpoints: vec![monitor.checkpoint(net, 0)],
        monotone_violations: 0,
        converged: false,
        final_step: 0,
    };
    let limit = 1e6 * risk0.max(f64::MIN_POSITIVE);
    let mut batch_rng = stream(config.seed, 2);
    let mut prev = f64::INFINITY;

    for step in 1..=config.steps {
        let batch;
        let data = match &spec.data {
            RiskData::Sample(ds) => ds,
            RiskData::Population { dist, target, batch: b } => {
                let pts = dist.sample_with(*b, &mut batch_rng);
                batch = label(target, pts, provenance(dist, config.seed))?;
                &batch
            }
        };
        let (obj, g) = objective_gradients(net, data, spec.loss, lambda, config.sigma_prime_at_zero);
        let obj = obj.as_f64();
        if !obj.is_finite() || obj > limit || !g.is_finite() {
            log.final_step = step - 1;
            return Err(Error::Diverged {
                step: step - 1,
                risk: obj,
                log: Box::new(log),
            });
        }
        if matches!(spec.data, RiskData::Sample(_)) {
            if obj > prev * (1.0 + 1e-12) {
                log.monotone_violations += 1;
            }
            prev = obj;
        }
        if let Some(tol) = config.grad_tol {
            if g.scaled_norm_sq(net).as_f64().sqrt() < tol {
                log.converged = true;
                log.final_step = step - 1;
                if log.checkpoints.last().map(|c| c.step) != Some(step - 1) {
                    log.checkpoints.push(monitor.checkpoint(net, step - 1));
                }
                return Ok(log);
            }
        }
        apply_step(net, &g, h);
        if step % config.checkpoint_every == 0 || step == config.steps {
            let c = monitor.checkpoint(net, step);
            if !c.risk.is_finite() || c.risk > limit {
                log.final_step = step;
                let risk = c.risk;
                log.checkpoints.push(c);
                return Err(Error::Diverged {
                    step,
                    risk,
                    log: Box::new(log),
                });
            }
            log.checkpoints.push(c);
        }
    }
    log.final_step = config.steps;
    Ok(log)
}

fn provenance(dist: &DataDistribution, seed: u64) -> Provenance {
    Provenance {
        distribution: dist.to_string(),
        target: "population".into(),
        seed,
    }
}

/// [`train`] with the penalty `λ · proxy²`, stopping early once the scaled
/// gradient norm drops below `config.grad_tol`.
pub fn train_regularized<T: Scalar>(
    net: &mut MeanFieldNet<T>,
    spec: &RiskSpec<T>,
    config: &TrainConfig,
) -> Result<TrajectoryLog> {
    train(net, spec, config)
}

/// Largest step size (within `[h/2^30, 16 h]`) for which `epoch` full-batch
/// steps decrease the objective monotonically: halve until one epoch is
/// monotone, or double while it stays monotone.
pub fn probe_step_size<T: Scalar>(
    net: &MeanFieldNet<T>,
    data: &Dataset<T>,
    loss: Loss,
    config: &TrainConfig,
    epoch: usize,
) -> f64 {
    let monotone = |h: f64| {
        let mut trial = net.clone();
        let lambda = T::lit(config.lambda);
        let mut prev = f64::INFINITY;
        for _ in 0..epoch {
            let (obj, g) = objective_gradients(&trial, data, loss, lambda, config.sigma_prime_at_zero);
            let obj = obj.as_f64();
            if !obj.is_finite() || obj > prev * (1.0 + 1e-12) {
                return false;
            }
            prev = obj;
            apply_step(&mut trial, &g, T::lit(h));
        }
        objective(&trial, data, loss, lambda).as_f64() <= prev * (1.0 + 1e-12)
    };
    let mut h = config.step_size;
    if monotone(h) {
        for _ in 0..4 {
            if !monotone(2.0 * h) {
                break;
            }
            h *= 2.0;
        }
        return h;
    }
    for _ in 0..30 {
        h *= 0.5;
        if monotone(h) {
            return h;
        }
    }
    h
}
