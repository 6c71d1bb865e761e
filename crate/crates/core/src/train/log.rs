use std::io::Write;

use crate::Result;

/// Monitors recorded at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    /// Flow time `step · h`.
    pub t: f64,
    /// Objective (risk plus penalty) on the monitoring sample.
    pub risk: f64,
    /// Probability-normalized layer norms `‖a^0‖ … ‖a^L‖`.
    pub norms: Vec<f64>,
    pub proxy: f64,
    pub q: f64,
    /// `|ΔR/h + Σ s_ℓ ‖∂R/∂a^ℓ‖²|` for one trial step of size `h`.
    pub dissipation_residual: f64,
    /// `max_ℓ ‖a^ℓ(t)‖ / (‖a^ℓ(0)‖ + √(R(0) t))`.
    pub moment_slack: f64,
    /// `proxy(t) / (C₀ + √(R(0) t))^{L+1}` with `C₀ = max_ℓ ‖a^ℓ(0)‖`.
    pub proxy_slack: f64,
}

/// Run parameters echoed into the CSV header.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMeta {
    pub sigma_prime_at_zero: u8,
    pub reduction: String,
    pub seed: u64,
    pub step_size: f64,
    pub lambda: f64,
    pub depth: usize,
    /// Objective at `t = 0` on the monitoring sample, used by the growth bounds.
    pub risk0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub meta: LogMeta,
    pub checkpoints: Vec<Checkpoint>,
    /// Steps whose full-batch objective rose above the previous one.
    pub monotone_violations: usize,
    /// Whether the run stopped on the gradient tolerance.
    pub converged: bool,
    pub final_step: usize,
}

impl TrajectoryLog {
    pub fn csv_header(depth: usize) -> String {
        let mut h = String::from("step,t,risk");
        for l in 0..=depth {
            h.push_str(&format!(",norm_l{l}"));
        }
        h.push_str(",proxy,Q,dissipation_residual,moment_slack,proxy_slack");
        h
    }

    /// Both growth ratios at most `factor` at every checkpoint.
    pub fn growth_bounds_hold(&self, factor: f64) -> bool {
        self.checkpoints
            .iter()
            .all(|c| c.moment_slack <= factor && c.proxy_slack <= factor)
    }

    pub fn worst_moment_slack(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.moment_slack).fold(0.0, f64::max)
    }

    pub fn worst_proxy_slack(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.proxy_slack).fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// Flow time strictly increasing and every entry finite.
    pub fn is_well_formed(&self) -> bool {
        let times = self.checkpoints.windows(2).all(|w| w[0].t < w[1].t);
        let finite = self.checkpoints.iter().all(|c| {
            [
                c.t,
                c.risk,
                c.proxy,
                c.q,
                c.dissipation_residual,
                c.moment_slack,
                c.proxy_slack,
            ]
            .iter()
            .chain(&c.norms)
            .all(|v| v.is_finite())
        });
        times && finite
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.meta;
        writeln!(
            w,
            "# sigma_prime_at_zero={} reduction={} seed={} h={} lambda={} risk0={}",
            m.sigma_prime_at_zero, m.reduction, m.seed, m.step_size, m.lambda, m.risk0
        )?;
        writeln!(w, "{}", Self::csv_header(m.depth))?;
        for c in &self.checkpoints {
            write!(w, "{},{},{}", c.step, c.t, c.risk)?;
            for n in &c.norms {
                write!(w, ",{n}")?;
            }
            writeln!(
                w,
                ",{},{},{},{},{}",
                c.proxy, c.q, c.dissipation_residual, c.moment_slack, c.proxy_slack
            )?;
        }
        Ok(())
    }
}
