//! Configuration and shared domain types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    /// Non-orthogonal signatures with i.i.d. CN(0, 1/N) entries.
    Gaussian,
    /// Orthonormal signatures (conventional TBMA). Needs `N >= M(R+1)`.
    Orthogonal,
}

/// System dimensions and radio parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of events `M`.
    #[serde(rename = "m")]
    pub num_events: usize,
    /// Number of active values per event `R`.
    #[serde(rename = "r")]
    pub num_values: usize,
    /// Number of devices `K`.
    #[serde(rename = "k")]
    pub num_devices: usize,
    /// Number of edge nodes `L`.
    #[serde(rename = "l")]
    pub num_edge_nodes: usize,
    /// Codeword length `N` in complex samples.
    #[serde(rename = "n")]
    pub codeword_len: usize,
    pub rho: f64,
    #[serde(default = "one")]
    pub sigma_h_sq: f64,
    pub snr_db: f64,
    #[serde(default = "yes")]
    pub transmit_on_active: bool,
    #[serde(default = "gaussian")]
    pub codebook_kind: CodebookKind,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn gaussian() -> CodebookKind {
    CodebookKind::Gaussian
}

impl SystemConfig {
    /// The default experimental setup: 80 devices, 8 events with 4 values,
    /// 4 edge nodes and length-16 signatures.
    pub fn reference() -> Self {
        Self {
            num_events: 8,
            num_values: 4,
            num_devices: 80,
            num_edge_nodes: 4,
            codeword_len: 16,
            rho: 0.1,
            sigma_h_sq: 1.0,
            snr_db: 0.0,
            transmit_on_active: true,
            codebook_kind: CodebookKind::Gaussian,
        }
    }

    /// Coefficients per edge node, `M(R+1)`.
    pub fn block_len(&self) -> usize {
        self.num_events * (self.num_values + 1)
    }

    /// Position of coefficient `(m, r)` inside one node's block.
    pub fn coeff_index(&self, event: usize, value: usize) -> usize {
        event * (self.num_values + 1) + value
    }

    /// Receiver noise variance `10^(-snr_db/10)`.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { snr_db, ..self.clone() }
    }

    pub fn with_codeword_len(&self, n: usize) -> Self {
        Self { codeword_len: n, ..self.clone() }
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [
            ("m", self.num_events),
            ("r", self.num_values),
            ("k", self.num_devices),
            ("l", self.num_edge_nodes),
            ("n", self.codeword_len),
        ] {
            if val == 0 {
                v.push(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            v.push(format!("rho = {} outside [0, 1]", self.rho));
        }
        if !(self.sigma_h_sq > 0.0 && self.sigma_h_sq.is_finite()) {
            v.push(format!("sigma_h_sq = {} must be positive", self.sigma_h_sq));
        }
        if self.snr_db.is_nan() {
            v.push("snr_db is NaN".into());
        }
        if self.codebook_kind == CodebookKind::Orthogonal && self.codeword_len < self.block_len() {
            v.push(format!(
                "orthogonal codebook needs n >= m(r+1) = {}, got n = {}",
                self.block_len(),
                self.codeword_len
            ));
        }
        v
    }
}

/// Which events each device monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceAssignment {
    /// `monitored[k]` is the set of (zero-based) events device `k` observes.
    pub monitored: Vec<Vec<usize>>,
}

impl DeviceAssignment {
    /// Non-overlapping groups of (near) equal size: device `k` monitors event
    /// `k * M / K`.
    pub fn disjoint(num_devices: usize, num_events: usize) -> Self {
        let monitored = (0..num_devices)
            .map(|k| vec![k * num_events / num_devices.max(1)])
            .collect();
        Self { monitored }
    }

    pub fn num_devices(&self) -> usize {
        self.monitored.len()
    }

    /// Inverse map: devices monitoring each event.
    pub fn groups(&self, num_events: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); num_events];
        for (k, events) in self.monitored.iter().enumerate() {
            for &m in events {
                if m < num_events {
                    groups[m].push(k);
                }
            }
        }
        groups
    }

    pub fn group_sizes(&self, num_events: usize) -> Vec<usize> {
        self.groups(num_events).iter().map(Vec::len).collect()
    }

    fn violations(&self, cfg: &SystemConfig) -> Vec<String> {
        let mut v = Vec::new();
        if self.monitored.len() != cfg.num_devices {
            v.push(format!(
                "assignment lists {} devices but k = {}",
                self.monitored.len(),
                cfg.num_devices
            ));
        }
        for (k, events) in self.monitored.iter().enumerate() {
            if events.is_empty() {
                v.push(format!("device {k} monitors no event"));
            }
            for &m in events {
                if m >= cfg.num_events {
                    v.push(format!("device {k} monitors event {m} but m = {}", cfg.num_events));
                }
            }
            let mut sorted = events.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != events.len() {
                v.push(format!("device {k} lists an event twice"));
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FronthaulScheme {
    /// Quantize-and-forward, Gaussian test-channel model.
    QfTestChannel,
    /// Quantize-and-forward with a uniform scalar quantizer.
    QfUniform,
    /// Detect-and-forward with quantized local LLRs.
    Dtf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerEstimateMode {
    /// Per-block mean `|y_i|^2`.
    Empirical,
    /// Analytic `E|y_i|^2` from the prior.
    Nominal,
}

/// How DtF LLR bits are distributed over events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtfAllocation {
    /// Fixed `floor(B/M)` bits per event: one activity bit plus an even
    /// split of the rest over the R LLRs.
    PerEvent,
    /// `M` activity bits, then the remaining `B - M` bits shared evenly by
    /// the LLRs of locally active events.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FronthaulConfig {
    /// Bits per fronthaul use (one codeword interval) per edge node.
    #[serde(rename = "b")]
    pub budget_bits: u32,
    #[serde(default = "qf_tc")]
    pub scheme: FronthaulScheme,
    /// DtF LLR clipping magnitude in nats.
    #[serde(default = "twenty")]
    pub llr_clip: f64,
    #[serde(default = "empirical")]
    pub power_estimate_mode: PowerEstimateMode,
    /// Uniform QF clip level, in standard deviations per real dimension.
    #[serde(default = "four")]
    pub qf_clip_sigmas: f64,
    #[serde(default = "pooled")]
    pub dtf_allocation: DtfAllocation,
    /// Local LLR threshold at which an edge node flags an event active.
    #[serde(default)]
    pub dtf_local_threshold: f64,
}

fn qf_tc() -> FronthaulScheme {
    FronthaulScheme::QfTestChannel
}
fn twenty() -> f64 {
    20.0
}
fn four() -> f64 {
    4.0
}
fn empirical() -> PowerEstimateMode {
    PowerEstimateMode::Empirical
}
fn pooled() -> DtfAllocation {
    DtfAllocation::Pooled
}

impl FronthaulConfig {
    pub fn new(budget_bits: u32, scheme: FronthaulScheme) -> Self {
        Self {
            budget_bits,
            scheme,
            llr_clip: 20.0,
            power_estimate_mode: PowerEstimateMode::Empirical,
            qf_clip_sigmas: 4.0,
            dtf_allocation: DtfAllocation::Pooled,
            dtf_local_threshold: 0.0,
        }
    }

    /// Per-node budgets; every node currently gets the same `B`.
    pub fn node_budgets(&self, num_edge_nodes: usize) -> Vec<u32> {
        vec![self.budget_bits; num_edge_nodes]
    }

    /// Fronthaul rate in bits per complex sample.
    pub fn rate(&self, codeword_len: usize) -> f64 {
        self.budget_bits as f64 / codeword_len as f64
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.budget_bits == 0 {
            v.push("fronthaul budget b must be positive".into());
        }
        if !(self.llr_clip > 0.0 && self.llr_clip.is_finite()) {
            v.push(format!("llr_clip = {} must be positive", self.llr_clip));
        }
        if !(self.qf_clip_sigmas > 0.0 && self.qf_clip_sigmas.is_finite()) {
            v.push(format!("qf_clip_sigmas = {} must be positive", self.qf_clip_sigmas));
        }
        if !self.dtf_local_threshold.is_finite() {
            v.push("dtf_local_threshold must be finite".into());
        }
        v
    }
}

/// Statistics of the local estimates: a monitoring device reports the true
/// value with probability `1 - epsilon`, otherwise a uniformly drawn
/// different value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationModel {
    #[serde(default)]
    pub epsilon: f64,
}

impl ObservationModel {
    pub fn perfect() -> Self {
        Self { epsilon: 0.0 }
    }

    fn violations(&self) -> Vec<String> {
        if (0.0..1.0).contains(&self.epsilon) {
            Vec::new()
        } else {
            vec![format!("epsilon = {} outside [0, 1)", self.epsilon)]
        }
    }
}

/// Prior over one event's state `{0, 1, ..., R}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPrior(pub Vec<f64>);

impl EventPrior {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn inactive(&self) -> f64 {
        self.0[0]
    }
}

/// `P(0) = 1 - rho`, `P(r) = rho / R` for each active value.
pub fn derive_prior(cfg: &SystemConfig) -> EventPrior {
    let r = cfg.num_values;
    let mut p = Vec::with_capacity(r + 1);
    p.push(1.0 - cfg.rho);
    p.extend(std::iter::repeat_n(cfg.rho / r as f64, r));
    EventPrior(p)
}

/// Violated invariants; empty when everything checks out.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Config(self.violations.join("; ")))
        }
    }
}

pub fn validate(
    cfg: &SystemConfig,
    assign: &DeviceAssignment,
    fh: &FronthaulConfig,
) -> ValidationReport {
    let mut violations = cfg.violations();
    violations.extend(assign.violations(cfg));
    violations.extend(fh.violations());
    ValidationReport { violations }
}

pub fn validate_observation(obs: &ObservationModel) -> ValidationReport {
    ValidationReport { violations: obs.violations() }
}
