//! Group-structured input denoiser.
//!
//! All coefficients `(c, m, r)` of event `m`, across every value `r` and
//! every edge node `c`, hang off one discrete state `xi_m`. Under the
//! hypothesis `xi_m = v` the value-`v` coefficient at each node carries the
//! coherent sum of the group's fades, `CN(0, |K_m| sigma_h^2)`, and the rest
//! of the block is zero. Given GAMP's pseudo-data this admits an exact
//! enumeration over the `R + 1` hypotheses of each event.

use num_complex::Complex64;
use serde::Serialize;

use crate::config::{derive_prior, DeviceAssignment, EventPrior, SystemConfig};
use crate::gamp::Denoiser;

/// Clamp applied to every LLR, in nats.
pub const LLR_MAX: f64 = 50.0;

/// Prior of the stacked coefficient vector over `num_nodes` edge nodes.
#[derive(Debug, Clone)]
pub struct GroupPrior {
    pub event_prior: EventPrior,
    /// `gamma[m] = |K_m| sigma_h^2`.
    pub gamma: Vec<f64>,
    /// Variance that devices outside `K_m` put on coefficient `(m, 0)` when
    /// every device always transmits; zero under transmit-on-active.
    pub background: Vec<f64>,
    pub num_values: usize,
    pub num_nodes: usize,
    pub transmit_on_active: bool,
    pub variance_floor: f64,
}

impl GroupPrior {
    pub fn new(cfg: &SystemConfig, assign: &DeviceAssignment, num_nodes: usize) -> Self {
        let sizes = assign.group_sizes(cfg.num_events);
        let gamma = sizes.iter().map(|&k| k as f64 * cfg.sigma_h_sq).collect();
        let background = sizes
            .iter()
            .map(|&k| {
                if cfg.transmit_on_active {
                    0.0
                } else {
                    (assign.num_devices() - k) as f64 * cfg.sigma_h_sq
                }
            })
            .collect();
        Self {
            event_prior: derive_prior(cfg),
            gamma,
            background,
            num_values: cfg.num_values,
            num_nodes,
            transmit_on_active: cfg.transmit_on_active,
            variance_floor: 1e-12,
        }
    }

    pub fn num_events(&self) -> usize {
        self.gamma.len()
    }

    pub fn block_len(&self) -> usize {
        self.num_events() * (self.num_values + 1)
    }

    pub fn len(&self) -> usize {
        self.num_nodes * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Event owning stacked coefficient `j`.
    pub fn group_index(&self, j: usize) -> usize {
        (j % self.block_len()) / (self.num_values + 1)
    }

    /// Stacked index of coefficient `(node, event, value)`.
    pub fn index(&self, node: usize, event: usize, value: usize) -> usize {
        node * self.block_len() + event * (self.num_values + 1) + value
    }

    /// Variance of coefficient `(m, value)` under hypothesis `xi_m = hyp`.
    pub fn hypothesis_variance(&self, event: usize, value: usize, hyp: usize) -> f64 {
        let mut v = 0.0;
        if value == hyp && (hyp > 0 || !self.transmit_on_active) {
            v += self.gamma[event];
        }
        if value == 0 {
            v += self.background[event];
        }
        v
    }

    /// Prior marginal variance of each stacked coefficient.
    pub fn marginal_variance(&self) -> Vec<f64> {
        let probs = self.event_prior.probs();
        (0..self.len())
            .map(|j| {
                let m = self.group_index(j);
                let value = j % (self.num_values + 1);
                (0..=self.num_values)
                    .map(|hyp| probs[hyp] * self.hypothesis_variance(m, value, hyp))
                    .sum()
            })
            .collect()
    }
}

/// Posterior over every event's state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventPosterior {
    /// `probs[m][v] = P(xi_m = v | data)`.
    pub probs: Vec<Vec<f64>>,
    /// Natural logs of `probs`, kept so LLRs survive underflow.
    pub log_probs: Vec<Vec<f64>>,
}

/// `l[m][r] = ln P(xi_m = r) - ln P(xi_m = 0)` for `r = 1..=R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlrMatrix {
    pub num_events: usize,
    pub num_values: usize,
    /// Row-major `M x R`; column `r - 1` holds value `r`.
    pub values: Vec<f64>,
}

impl LlrMatrix {
    pub fn zeros(num_events: usize, num_values: usize) -> Self {
        Self { num_events, num_values, values: vec![0.0; num_events * num_values] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let num_values = rows.first().map_or(0, Vec::len);
        Self {
            num_events: rows.len(),
            num_values,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn row(&self, event: usize) -> &[f64] {
        &self.values[event * self.num_values..(event + 1) * self.num_values]
    }

    pub fn row_mut(&mut self, event: usize) -> &mut [f64] {
        &mut self.values[event * self.num_values..(event + 1) * self.num_values]
    }

    /// LLR of value `r` (1-based) for `event`.
    pub fn get(&self, event: usize, value: usize) -> f64 {
        self.values[event * self.num_values + value - 1]
    }

    pub fn same_shape(&self, other: &LlrMatrix) -> bool {
        self.num_events == other.num_events && self.num_values == other.num_values
    }
}

fn log_cn_gain(r_abs2: f64, tau: f64, g: f64) -> f64 {
    // ln CN(r; 0, tau + g) - ln CN(r; 0, tau)
    -(g / tau).ln_1p() + r_abs2 * g / (tau * (tau + g))
}

/// Normalised log posterior of event `m` over its `R + 1` hypotheses.
fn event_log_posterior(
    r_vals: &[Complex64],
    tau_r: &[f64],
    prior: &GroupPrior,
    log_prior: &[f64],
    m: usize,
    out: &mut [f64],
) {
    for (hyp, (ll, &lp)) in out.iter_mut().zip(log_prior).enumerate() {
        *ll = lp;
        if *ll == f64::NEG_INFINITY {
            continue;
        }
        // only coefficients (m, 0) and (m, hyp) can carry variance
        let values: &[usize] = if hyp == 0 { &[0] } else { &[0, hyp] };
        for c in 0..prior.num_nodes {
            for &value in values {
                let g = prior.hypothesis_variance(m, value, hyp);
                if g > 0.0 {
                    let j = prior.index(c, m, value);
                    let tau = tau_r[j].max(prior.variance_floor);
                    *ll += log_cn_gain(r_vals[j].norm_sqr(), tau, g);
                }
            }
        }
    }
    let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = top + out.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    for l in out.iter_mut() {
        *l -= norm;
    }
}

pub fn block_posterior(r_vals: &[Complex64], tau_r: &[f64], prior: &GroupPrior) -> EventPosterior {
    let log_prior: Vec<f64> = prior.event_prior.probs().iter().map(|p| p.ln()).collect();
    let mut probs = Vec::with_capacity(prior.num_events());
    let mut log_probs = Vec::with_capacity(prior.num_events());
    for m in 0..prior.num_events() {
        let mut lp = vec![0.0; prior.num_values + 1];
        event_log_posterior(r_vals, tau_r, prior, &log_prior, m, &mut lp);
        probs.push(lp.iter().map(|l| l.exp()).collect());
        log_probs.push(lp);
    }
    EventPosterior { probs, log_probs }
}

/// Posterior mean and variance of every coefficient under the event
/// posterior: a mixture over hypotheses of Gaussian shrinkage estimates.
pub fn coefficient_moments(
    r_vals: &[Complex64],
    tau_r: &[f64],
    posterior: &EventPosterior,
    prior: &GroupPrior,
    x_hat: &mut [Complex64],
    tau_x: &mut [f64],
) {
    moments_with(r_vals, tau_r, |m| &posterior.probs[m], prior, x_hat, tau_x);
}

fn moments_with<'a>(
    r_vals: &[Complex64],
    tau_r: &[f64],
    probs_of: impl Fn(usize) -> &'a [f64],
    prior: &GroupPrior,
    x_hat: &mut [Complex64],
    tau_x: &mut [f64],
) {
    let hyps = prior.num_values + 1;
    for j in 0..prior.len() {
        let m = prior.group_index(j);
        let value = j % hyps;
        let tau = tau_r[j].max(prior.variance_floor);
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        let probs = probs_of(m);
        // a nonzero value only has variance under its own hypothesis
        let support = if value == 0 { 0..probs.len() } else { value..value + 1 };
        for hyp in support {
            let w = probs[hyp];
            let g = prior.hypothesis_variance(m, value, hyp);
            if g > 0.0 && w > 0.0 {
                let shrink = g / (g + tau);
                let mu = r_vals[j] * shrink;
                mean += mu * w;
                second += w * (mu.norm_sqr() + shrink * tau);
            }
        }
        x_hat[j] = mean;
        tau_x[j] = (second - mean.norm_sqr()).max(prior.variance_floor);
    }
}

pub fn compute_llrs(posterior: &EventPosterior) -> LlrMatrix {
    let num_events = posterior.log_probs.len();
    let num_values = posterior.log_probs.first().map_or(0, |r| r.len() - 1);
    let mut out = LlrMatrix::zeros(num_events, num_values);
    for (m, lp) in posterior.log_probs.iter().enumerate() {
        for (slot, &l) in out.row_mut(m).iter_mut().zip(&lp[1..]) {
            let d = l - lp[0];
            *slot = if d.is_nan() { 0.0 } else { d.clamp(-LLR_MAX, LLR_MAX) };
        }
    }
    out
}

/// The denoiser GAMP calls; couples coefficients through [`GroupPrior`].
#[derive(Debug, Clone, Copy)]
pub struct GroupDenoiser<'a> {
    pub prior: &'a GroupPrior,
}

impl Denoiser for GroupDenoiser<'_> {
    fn prior_variance(&self) -> Vec<f64> {
        self.prior.marginal_variance()
    }

    fn denoise(&self, r: &[Complex64], tau_r: &[f64], x_hat: &mut [Complex64], tau_x: &mut [f64]) {
        let hyps = self.prior.num_values + 1;
        let log_prior: Vec<f64> = self.prior.event_prior.probs().iter().map(|p| p.ln()).collect();
        let mut probs = vec![0.0; self.prior.num_events() * hyps];
        for (m, lp) in probs.chunks_exact_mut(hyps).enumerate() {
            event_log_posterior(r, tau_r, self.prior, &log_prior, m, lp);
            for l in lp.iter_mut() {
                *l = l.exp();
            }
        }
        moments_with(r, tau_r, |m| &probs[m * hyps..(m + 1) * hyps], self.prior, x_hat, tau_x);
    }
}
