//! Monte Carlo campaigns: SNR sweeps, required-SNR search and threshold
//! trade-off curves, with CSV output.
//!
//! Randomness is keyed per trial (see [`crate::rng`]), so a campaign is a
//! pure function of its spec and seed. Threshold calibration uses the odd
//! (calibration) streams and evaluation the even ones. The same trial index
//! sees the same events, fades and unit noise at every SNR, budget and
//! scheme, which pairs the comparisons.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    validate, validate_observation, DeviceAssignment, FronthaulConfig, FronthaulScheme,
    ObservationModel, SystemConfig,
};
use crate::denoiser::{GroupPrior, LlrMatrix};
use crate::detection::{
    decide, decide_event, dtf_local_detect, fuse_llrs, optimize_threshold, qf_detect,
    threshold_grid, ThresholdPolicy,
};
use crate::error::{Error, Result};
use crate::fronthaul::{
    qf_test_channel_with_noise, qf_uniform_quantize, quantizer_input_power, DtfCodec,
    QuantizedBlock,
};
use crate::gamp::{GampOptions, TraceRow};
use crate::metrics::{Accumulator, MetricsReport};
use crate::rng::{standard_complex_normals, Phase, RandomSource, Role};
use crate::scenario::{campaign_codebook, Codebook, Trial};

/// Detection chain evaluated in a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    QfTestChannel,
    QfUniform,
    Dtf,
    /// Cloud detection on the raw blocks; the no-fronthaul-limit baseline.
    QfUnquantized,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::QfTestChannel => "qf_test_channel",
            Scheme::QfUniform => "qf_uniform",
            Scheme::Dtf => "dtf",
            Scheme::QfUnquantized => "qf_unquantized",
        }
    }

    pub fn uses_budget(self) -> bool {
        self != Scheme::QfUnquantized
    }
}

impl From<FronthaulScheme> for Scheme {
    fn from(s: FronthaulScheme) -> Self {
        match s {
            FronthaulScheme::QfTestChannel => Scheme::QfTestChannel,
            FronthaulScheme::QfUniform => Scheme::QfUniform,
            FronthaulScheme::Dtf => Scheme::Dtf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { start: -20.0, stop: 20.0, step: 0.1 }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        threshold_grid(self.start, self.stop, self.step)
    }
}

fn default_target_pe() -> f64 {
    1e-2
}
fn default_snr_min() -> f64 {
    -10.0
}
fn default_snr_max() -> f64 {
    30.0
}
fn default_resolution() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    SnrSweep {
        snr_db: Vec<f64>,
        /// Budgets to evaluate; defaults to the fronthaul budget.
        #[serde(default)]
        budgets: Option<Vec<u32>>,
    },
    BudgetGrid {
        budgets: Vec<u32>,
        codeword_lens: Vec<usize>,
        #[serde(default = "default_target_pe")]
        target_pe: f64,
        #[serde(default = "default_snr_min")]
        snr_min_db: f64,
        #[serde(default = "default_snr_max")]
        snr_max_db: f64,
        #[serde(default = "default_resolution")]
        resolution_db: f64,
    },
    Roc {
        /// Defaults to `system.snr_db`.
        #[serde(default)]
        snr_db: Option<f64>,
        #[serde(default)]
        budgets: Option<Vec<u32>>,
        #[serde(default)]
        threshold_grid: GridSpec,
    },
}

fn default_trials() -> usize {
    2000
}
fn default_calibration() -> usize {
    500
}

/// A campaign as read from the `--config` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    /// Defaults to disjoint equal-size groups.
    #[serde(default)]
    pub assignment: Option<DeviceAssignment>,
    #[serde(default)]
    pub observation: ObservationModel,
    pub fronthaul: FronthaulConfig,
    #[serde(default)]
    pub gamp: GampOptions,
    pub sweep: Sweep,
    /// Defaults depend on the sweep; see [`ExperimentSpec::resolved_schemes`].
    #[serde(default)]
    pub schemes: Option<Vec<Scheme>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_calibration")]
    pub calibration_trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Calibration grid for the decision threshold.
    #[serde(default)]
    pub threshold_grid: GridSpec,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn assignment(&self) -> DeviceAssignment {
        self.assignment
            .clone()
            .unwrap_or_else(|| DeviceAssignment::disjoint(self.system.num_devices, self.system.num_events))
    }

    /// The configured QF flavour, then DtF, then (SNR sweeps only) the
    /// unquantized baseline.
    pub fn resolved_schemes(&self) -> Vec<Scheme> {
        if let Some(s) = &self.schemes {
            return s.clone();
        }
        let qf = match self.fronthaul.scheme {
            FronthaulScheme::QfUniform => Scheme::QfUniform,
            _ => Scheme::QfTestChannel,
        };
        match self.sweep {
            Sweep::SnrSweep { .. } => vec![qf, Scheme::Dtf, Scheme::QfUnquantized],
            _ => vec![qf, Scheme::Dtf],
        }
    }

    pub fn validation_report(&self) -> crate::config::ValidationReport {
        let mut report = validate(&self.system, &self.assignment(), &self.fronthaul);
        report.violations.extend(validate_observation(&self.observation).violations);
        if let Err(e) = self.gamp.validate() {
            report.violations.push(e.to_string());
        }
        if self.trials == 0 {
            report.violations.push("trials must be at least 1".into());
        }
        if self.calibration_trials == 0 {
            report.violations.push("calibration_trials must be at least 1".into());
        }
        if self.schemes.as_ref().is_some_and(Vec::is_empty) {
            report.violations.push("schemes list is empty".into());
        }
        match &self.sweep {
            Sweep::SnrSweep { snr_db, budgets } => {
                if snr_db.is_empty() {
                    report.violations.push("snr_sweep.snr_db is empty".into());
                }
                if budgets.as_ref().is_some_and(|b| b.is_empty() || b.contains(&0)) {
                    report.violations.push("snr_sweep.budgets must be nonempty and positive".into());
                }
            }
            Sweep::BudgetGrid { budgets, codeword_lens, target_pe, snr_min_db, snr_max_db, resolution_db } => {
                if budgets.is_empty() || codeword_lens.is_empty() {
                    report.violations.push("budget_grid lists must be nonempty".into());
                }
                if budgets.contains(&0) || codeword_lens.contains(&0) {
                    report.violations.push("budget_grid entries must be positive".into());
                }
                if !(*target_pe > 0.0 && *target_pe < 1.0) {
                    report.violations.push("budget_grid.target_pe must lie in (0, 1)".into());
                }
                if !(snr_min_db < snr_max_db) || !(*resolution_db > 0.0) {
                    report.violations.push("budget_grid SNR bracket or resolution invalid".into());
                }
                for &n in codeword_lens {
                    let r = validate(&self.system.with_codeword_len(n), &self.assignment(), &self.fronthaul);
                    report.violations.extend(r.violations.into_iter().map(|v| format!("n = {n}: {v}")));
                }
            }
            Sweep::Roc { budgets, threshold_grid, .. } => {
                if budgets.as_ref().is_some_and(|b| b.is_empty() || b.contains(&0)) {
                    report.violations.push("roc.budgets must be nonempty and positive".into());
                }
                if !(threshold_grid.step > 0.0) || threshold_grid.stop < threshold_grid.start {
                    report.violations.push("roc.threshold_grid is empty".into());
                }
            }
        }
        report.violations.sort();
        report.violations.dedup();
        report
    }

    pub fn check(&self) -> Result<()> {
        self.validation_report().into_result()
    }
}

/// A configured system at one operating point, ready to run trials.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: SystemConfig,
    pub assign: DeviceAssignment,
    pub obs: ObservationModel,
    pub fronthaul: FronthaulConfig,
    pub gamp: GampOptions,
    pub codebook: Codebook,
    pub cloud_prior: GroupPrior,
    pub edge_prior: GroupPrior,
    pub master_seed: u64,
}

/// LLRs a scheme delivers to the final decision for one trial.
#[derive(Debug, Clone)]
pub struct SchemeOutput {
    pub llrs: LlrMatrix,
    /// Serialized fronthaul bytes per edge node (DtF only).
    pub fronthaul_bytes: Vec<usize>,
    pub trace: Vec<TraceRow>,
}

impl Simulator {
    pub fn new(
        cfg: SystemConfig,
        assign: DeviceAssignment,
        obs: ObservationModel,
        fronthaul: FronthaulConfig,
        gamp: GampOptions,
        master_seed: u64,
    ) -> Result<Self> {
        validate(&cfg, &assign, &fronthaul).into_result()?;
        validate_observation(&obs).into_result()?;
        gamp.validate()?;
        let codebook = campaign_codebook(&cfg, master_seed)?;
        let cloud_prior = GroupPrior::new(&cfg, &assign, cfg.num_edge_nodes);
        let edge_prior = GroupPrior::new(&cfg, &assign, 1);
        Ok(Self { cfg, assign, obs, fronthaul, gamp, codebook, cloud_prior, edge_prior, master_seed })
    }

    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self> {
        Self::new(
            spec.system.clone(),
            spec.assignment(),
            spec.observation,
            spec.fronthaul.clone(),
            spec.gamp,
            spec.master_seed,
        )
    }

    /// Same system at another SNR; the codebook is kept.
    pub fn at_snr(&self, snr_db: f64) -> Self {
        Self { cfg: self.cfg.with_snr_db(snr_db), ..self.clone() }
    }

    /// Same system with another signature length (new codebook).
    pub fn with_codeword_len(&self, n: usize) -> Result<Self> {
        Self::new(
            self.cfg.with_codeword_len(n),
            self.assign.clone(),
            self.obs,
            self.fronthaul.clone(),
            self.gamp,
            self.master_seed,
        )
    }

    pub fn trial(&self, phase: Phase, index: u64) -> Trial {
        Trial::generate(&self.cfg, &self.assign, &self.obs, &self.codebook, self.master_seed, phase, index)
    }

    pub fn trials(&self, phase: Phase, count: usize) -> Vec<Trial> {
        (0..count as u64).into_par_iter().map(|i| self.trial(phase, i)).collect()
    }

    fn forward_qf(&self, trial: &Trial, scheme: Scheme, budget: u32) -> Result<Vec<QuantizedBlock>> {
        let sigma_v_sq = trial.received.sigma_v_sq;
        match scheme {
            Scheme::QfUnquantized => Ok(trial.received.y.iter().map(QuantizedBlock::lossless).collect()),
            Scheme::QfTestChannel => {
                let mut rng = RandomSource::for_trial(self.master_seed, trial.phase, trial.index, Role::QuantizationNoise).rng();
                Ok(trial
                    .received
                    .y
                    .iter()
                    .map(|y| {
                        let noise = standard_complex_normals(&mut rng, y.len());
                        let p = quantizer_input_power(y, self.fronthaul.power_estimate_mode, &self.edge_prior, sigma_v_sq);
                        qf_test_channel_with_noise(y, budget, p, &noise)
                    })
                    .collect())
            }
            Scheme::QfUniform => trial
                .received
                .y
                .iter()
                .map(|y| {
                    let p = quantizer_input_power(y, self.fronthaul.power_estimate_mode, &self.edge_prior, sigma_v_sq);
                    let clip = self.fronthaul.qf_clip_sigmas * (p / 2.0).sqrt();
                    qf_uniform_quantize(y, budget, clip.max(f64::MIN_POSITIVE))
                })
                .collect(),
            Scheme::Dtf => unreachable!("DtF does not forward blocks"),
        }
    }

    pub fn dtf_codec(&self, budget: u32) -> Result<DtfCodec> {
        DtfCodec::new(
            self.cfg.num_events,
            self.cfg.num_values,
            budget,
            self.fronthaul.llr_clip,
            self.fronthaul.dtf_allocation,
        )
    }

    /// Checks that `scheme` can run at `budget` without drawing any trial.
    pub fn check_budget(&self, scheme: Scheme, budget: u32) -> Result<()> {
        match scheme {
            Scheme::Dtf => self.dtf_codec(budget).map(|_| ()),
            Scheme::QfUniform if (budget as usize) < 2 * self.cfg.codeword_len => Err(Error::BudgetTooSmall(
                format!("uniform QF needs at least 2N = {} bits, got {budget}", 2 * self.cfg.codeword_len),
            )),
            _ => Ok(()),
        }
    }

    /// Runs one trial through a scheme's fronthaul and detector.
    pub fn run_scheme(&self, trial: &Trial, scheme: Scheme, budget: u32) -> Result<SchemeOutput> {
        let sigma_v_sq = trial.received.sigma_v_sq;
        if scheme != Scheme::Dtf {
            let blocks = self.forward_qf(trial, scheme, budget)?;
            let det = qf_detect(&blocks, &self.codebook, &self.cloud_prior, sigma_v_sq, &self.gamp)?;
            return Ok(SchemeOutput { llrs: det.llrs, fronthaul_bytes: Vec::new(), trace: det.diagnostics.trace });
        }
        let codec = self.dtf_codec(budget)?;
        let mut received = Vec::with_capacity(trial.received.y.len());
        let mut bytes = Vec::with_capacity(trial.received.y.len());
        let mut trace = Vec::new();
        for (c, y) in trial.received.y.iter().enumerate() {
            let det = dtf_local_detect(y, &self.codebook, &self.edge_prior, sigma_v_sq, &self.gamp)?;
            if c == 0 {
                trace = det.diagnostics.trace;
            }
            let flags: Vec<bool> = (0..self.cfg.num_events)
                .map(|m| decide_event(det.llrs.row(m), self.fronthaul.dtf_local_threshold) != 0)
                .collect();
            let payload = codec.quantize(&det.llrs, &flags)?;
            let wire = codec.serialize(&payload);
            bytes.push(wire.len());
            received.push(codec.dequantize(&codec.deserialize(&wire)?));
        }
        Ok(SchemeOutput { llrs: fuse_llrs(&received)?, fronthaul_bytes: bytes, trace })
    }

    /// LLRs for every trial; `None` marks a trial whose detector diverged.
    pub fn collect_llrs(&self, trials: &[Trial], scheme: Scheme, budget: u32) -> Result<Vec<Option<LlrMatrix>>> {
        trials
            .par_iter()
            .map(|t| match self.run_scheme(t, scheme, budget) {
                Ok(out) => Ok(Some(out.llrs)),
                Err(Error::NonFinite { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// Calibrates the threshold on `calibration`, then scores `evaluation`.
    pub fn evaluate(
        &self,
        scheme: Scheme,
        budget: u32,
        calibration: &[Trial],
        evaluation: &[Trial],
        grid: &[f64],
    ) -> Result<PointEvaluation> {
        let cal_llrs = self.collect_llrs(calibration, scheme, budget)?;
        let samples: Vec<(LlrMatrix, crate::scenario::EventStateVector)> = cal_llrs
            .into_iter()
            .zip(calibration)
            .filter_map(|(l, t)| l.map(|l| (l, t.xi.clone())))
            .collect();
        let fit = optimize_threshold(&samples, grid)?;
        let policy = ThresholdPolicy { threshold: fit.threshold };
        let eval_llrs = self.collect_llrs(evaluation, scheme, budget)?;
        let mut acc = Accumulator::default();
        let mut diverged = 0;
        for (l, t) in eval_llrs.iter().zip(evaluation) {
            match l {
                Some(l) => acc.accumulate(&t.xi, &decide(l, &policy))?,
                None => diverged += 1,
            }
        }
        Ok(PointEvaluation { threshold: fit.threshold, report: acc.finalize()?, diverged })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEvaluation {
    pub threshold: f64,
    pub report: MetricsReport,
    pub diverged: usize,
}

/// Extra knobs from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the GAMP iteration trace of the first evaluation trial per point.
    pub debug_trace: bool,
    /// Keep a JSON-lines dump of the evaluation trials.
    pub dump_trials: bool,
}

/// GAMP trace of one point.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub scheme: Scheme,
    pub budget: Option<u32>,
    pub codeword_len: usize,
    pub snr_db: f64,
    pub rows: Vec<TraceRow>,
}

fn trace_for(sim: &Simulator, trials: &[Trial], scheme: Scheme, budget: u32, opts: &RunOptions) -> Option<TraceRecord> {
    if !opts.debug_trace {
        return None;
    }
    let out = sim.run_scheme(trials.first()?, scheme, budget).ok()?;
    Some(TraceRecord {
        scheme,
        budget: scheme.uses_budget().then_some(budget),
        codeword_len: sim.cfg.codeword_len,
        snr_db: sim.cfg.snr_db,
        rows: out.trace,
    })
}

fn dump_lines(sim: &Simulator, trials: &[Trial], out: &mut Vec<String>) {
    for t in trials {
        let y: Vec<Vec<[f64; 2]>> = t
            .received
            .y
            .iter()
            .map(|yc| yc.iter().map(|v| [v.re, v.im]).collect())
            .collect();
        let rec = serde_json::json!({
            "snr_db": sim.cfg.snr_db,
            "n": sim.cfg.codeword_len,
            "trial": t.index,
            "xi": t.xi.0,
            "phi": t.phi.phi,
            "y": y,
        });
        out.push(rec.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrRow {
    pub scheme: Scheme,
    /// `None` for the unquantized baseline.
    pub budget: Option<u32>,
    pub codeword_len: usize,
    pub snr_db: f64,
    pub evaluation: PointEvaluation,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOutput<R> {
    pub rows: Vec<R>,
    pub traces: Vec<TraceRecord>,
    pub dump: Vec<String>,
}

pub fn run_snr_sweep(spec: &ExperimentSpec, opts: &RunOptions) -> Result<CampaignOutput<SnrRow>> {
    spec.check()?;
    let Sweep::SnrSweep { snr_db, budgets } = &spec.sweep else {
        return Err(Error::Config("snr-sweep needs a snr_sweep section".into()));
    };
    let budgets = budgets.clone().unwrap_or_else(|| vec![spec.fronthaul.budget_bits]);
    let base = Simulator::from_spec(spec)?;
    let grid = spec.threshold_grid.points();
    let schemes = spec.resolved_schemes();
    let mut out = CampaignOutput { rows: Vec::new(), traces: Vec::new(), dump: Vec::new() };
    for &snr in snr_db {
        let sim = base.at_snr(snr);
        let cal = sim.trials(Phase::Calibration, spec.calibration_trials);
        let eval = sim.trials(Phase::Evaluation, spec.trials);
        if opts.dump_trials {
            dump_lines(&sim, &eval, &mut out.dump);
        }
        for &scheme in &schemes {
            let point_budgets: Vec<Option<u32>> = if scheme.uses_budget() {
                budgets.iter().map(|&b| Some(b)).collect()
            } else {
                vec![None]
            };
            for budget in point_budgets {
                let b = budget.unwrap_or(u32::MAX);
                sim.check_budget(scheme, b)?;
                let evaluation = sim.evaluate(scheme, b, &cal, &eval, &grid)?;
                out.traces.extend(trace_for(&sim, &eval, scheme, b, opts));
                out.rows.push(SnrRow {
                    scheme,
                    budget,
                    codeword_len: sim.cfg.codeword_len,
                    snr_db: snr,
                    evaluation,
                    trials: spec.trials,
                    seed: spec.master_seed,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequiredSnrRow {
    pub scheme: Scheme,
    pub budget: u32,
    pub codeword_len: usize,
    /// `None` when the target is not met anywhere in the search bracket.
    pub required_snr_db: Option<f64>,
}

/// Smallest SNR (to the bisection resolution) whose error rate meets the
/// target, assuming the error rate falls with SNR.
fn bisect_required_snr(
    sim: &Simulator,
    spec: &ExperimentSpec,
    scheme: Scheme,
    budget: u32,
    target: f64,
    (lo, hi, resolution): (f64, f64, f64),
    grid: &[f64],
) -> Result<Option<f64>> {
    let meets = |snr: f64| -> Result<bool> {
        let at = sim.at_snr(snr);
        let cal = at.trials(Phase::Calibration, spec.calibration_trials);
        let eval = at.trials(Phase::Evaluation, spec.trials);
        let p = at.evaluate(scheme, budget, &cal, &eval, grid)?;
        Ok(p.report.pe.value <= target)
    };
    if !meets(hi)? {
        return Ok(None);
    }
    if meets(lo)? {
        return Ok(Some(lo));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

pub fn run_required_snr(spec: &ExperimentSpec, _opts: &RunOptions) -> Result<CampaignOutput<RequiredSnrRow>> {
    spec.check()?;
    let Sweep::BudgetGrid { budgets, codeword_lens, target_pe, snr_min_db, snr_max_db, resolution_db } = &spec.sweep
    else {
        return Err(Error::Config("required-snr needs a budget_grid section".into()));
    };
    let base = Simulator::from_spec(spec)?;
    let grid = spec.threshold_grid.points();
    let mut rows = Vec::new();
    for &n in codeword_lens {
        let sim = base.with_codeword_len(n)?;
        for &budget in budgets {
            for scheme in spec.resolved_schemes() {
                let required_snr_db = match sim.check_budget(scheme, budget) {
                    Err(Error::BudgetTooSmall(_)) => None,
                    Err(e) => return Err(e),
                    Ok(()) => bisect_required_snr(
                        &sim,
                        spec,
                        scheme,
                        budget,
                        *target_pe,
                        (*snr_min_db, *snr_max_db, *resolution_db),
                        &grid,
                    )?,
                };
                rows.push(RequiredSnrRow { scheme, budget, codeword_len: n, required_snr_db });
            }
        }
    }
    Ok(CampaignOutput { rows, traces: Vec::new(), dump: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocRow {
    pub scheme: Scheme,
    pub threshold: f64,
    pub report: MetricsReport,
    pub budget: Option<u32>,
}

pub fn run_roc(spec: &ExperimentSpec, opts: &RunOptions) -> Result<CampaignOutput<RocRow>> {
    spec.check()?;
    let Sweep::Roc { snr_db, budgets, threshold_grid } = &spec.sweep else {
        return Err(Error::Config("roc needs a roc section".into()));
    };
    let budgets = budgets.clone().unwrap_or_else(|| vec![spec.fronthaul.budget_bits]);
    let sim = Simulator::from_spec(spec)?.at_snr(snr_db.unwrap_or(spec.system.snr_db));
    let grid = threshold_grid.points();
    let eval = sim.trials(Phase::Evaluation, spec.trials);
    let mut out = CampaignOutput { rows: Vec::new(), traces: Vec::new(), dump: Vec::new() };
    if opts.dump_trials {
        dump_lines(&sim, &eval, &mut out.dump);
    }
    for scheme in spec.resolved_schemes() {
        let point_budgets: Vec<Option<u32>> =
            if scheme.uses_budget() { budgets.iter().map(|&b| Some(b)).collect() } else { vec![None] };
        for budget in point_budgets {
            let b = budget.unwrap_or(u32::MAX);
            sim.check_budget(scheme, b)?;
            // LLRs are computed once and the thresholds replayed on them.
            let llrs = sim.collect_llrs(&eval, scheme, b)?;
            out.traces.extend(trace_for(&sim, &eval, scheme, b, opts));
            for &th in &grid {
                let policy = ThresholdPolicy { threshold: th };
                let mut acc = Accumulator::default();
                for (l, t) in llrs.iter().zip(&eval) {
                    if let Some(l) = l {
                        acc.accumulate(&t.xi, &decide(l, &policy))?;
                    }
                }
                out.rows.push(RocRow { scheme, threshold: th, report: acc.finalize()?, budget });
            }
        }
    }
    Ok(out)
}

fn fmt_budget(b: Option<u32>) -> String {
    b.map_or_else(|| "inf".to_string(), |b| b.to_string())
}

pub const SNR_HEADER: &str = "scheme,b,n,snr_db,pe,p_fp,p_fn,ci,trials,seed,threshold,diverged";
pub const REQUIRED_SNR_HEADER: &str = "scheme,b,n,required_snr_db";
pub const ROC_HEADER: &str = "scheme,threshold,p_fp,p_fn,b,p_fp_ci,p_fn_ci";

pub fn snr_csv(rows: &[SnrRow]) -> String {
    let mut s = format!("{SNR_HEADER}\n");
    for r in rows {
        let m = &r.evaluation.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            fmt_budget(r.budget),
            r.codeword_len,
            r.snr_db,
            m.pe.value,
            m.p_fp.value,
            m.p_fn.value,
            m.pe.half_width(),
            r.trials,
            r.seed,
            r.evaluation.threshold,
            r.evaluation.diverged
        );
    }
    s
}

pub fn required_snr_csv(rows: &[RequiredSnrRow]) -> String {
    let mut s = format!("{REQUIRED_SNR_HEADER}\n");
    for r in rows {
        let snr = r.required_snr_db.map_or_else(|| "unreachable".to_string(), |v| v.to_string());
        let _ = writeln!(s, "{},{},{},{}", r.scheme.name(), r.budget, r.codeword_len, snr);
    }
    s
}

pub fn roc_csv(rows: &[RocRow]) -> String {
    let mut s = format!("{ROC_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.scheme.name(),
            r.threshold,
            r.report.p_fp.value,
            r.report.p_fn.value,
            fmt_budget(r.budget),
            r.report.p_fp.half_width(),
            r.report.p_fn.half_width()
        );
    }
    s
}

pub fn trace_csv(traces: &[TraceRecord]) -> String {
    let mut s = String::from("scheme,b,n,snr_db,iteration,residual,mean_tau_x\n");
    for t in traces {
        for row in &t.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.scheme.name(),
                fmt_budget(t.budget),
                t.codeword_len,
                t.snr_db,
                row.iteration,
                row.residual,
                row.mean_tau_x
            );
        }
    }
    s
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn write_output(path: Option<&std::path::Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(sweep: Sweep) -> ExperimentSpec {
        ExperimentSpec {
            system: SystemConfig {
                num_events: 4,
                num_values: 2,
                num_devices: 16,
                num_edge_nodes: 2,
                codeword_len: 12,
                rho: 0.2,
                sigma_h_sq: 1.0,
                snr_db: 5.0,
                transmit_on_active: true,
                codebook_kind: crate::config::CodebookKind::Gaussian,
            },
            assignment: None,
            observation: ObservationModel::perfect(),
            fronthaul: FronthaulConfig::new(48, FronthaulScheme::QfTestChannel),
            gamp: GampOptions::default(),
            sweep,
            schemes: None,
            trials: 60,
            calibration_trials: 30,
            master_seed: 17,
            threshold_grid: GridSpec::default(),
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = small_spec(Sweep::SnrSweep { snr_db: vec![0.0, 5.0], budgets: Some(vec![32]) });
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
        let bad = text.replacen("\"trials\"", "\"trails\"", 1);
        assert!(matches!(ExperimentSpec::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn default_schemes_per_sweep() {
        let s = small_spec(Sweep::SnrSweep { snr_db: vec![0.0], budgets: None });
        assert_eq!(s.resolved_schemes(), vec![Scheme::QfTestChannel, Scheme::Dtf, Scheme::QfUnquantized]);
        let r = small_spec(Sweep::Roc { snr_db: None, budgets: None, threshold_grid: GridSpec::default() });
        assert_eq!(r.resolved_schemes(), vec![Scheme::QfTestChannel, Scheme::Dtf]);
    }

    #[test]
    fn sweep_is_deterministic_and_csv_shaped() {
        let spec = small_spec(Sweep::SnrSweep { snr_db: vec![0.0, 10.0], budgets: None });
        let a = snr_csv(&run_snr_sweep(&spec, &RunOptions::default()).unwrap().rows);
        let b = snr_csv(&run_snr_sweep(&spec, &RunOptions::default()).unwrap().rows);
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], SNR_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 12));
    }

    #[test]
    fn wrong_sweep_kind_is_a_config_error() {
        let spec = small_spec(Sweep::SnrSweep { snr_db: vec![0.0], budgets: None });
        assert!(matches!(run_roc(&spec, &RunOptions::default()), Err(Error::Config(_))));
        assert!(matches!(run_required_snr(&spec, &RunOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn roc_endpoints_and_monotonicity() {
        let spec = small_spec(Sweep::Roc {
            snr_db: Some(0.0),
            budgets: Some(vec![48]),
            threshold_grid: GridSpec { start: -60.0, stop: 60.0, step: 1.0 },
        });
        let out = run_roc(&spec, &RunOptions::default()).unwrap();
        for scheme in [Scheme::QfTestChannel, Scheme::Dtf] {
            let rows: Vec<&RocRow> = out.rows.iter().filter(|r| r.scheme == scheme).collect();
            for w in rows.windows(2) {
                assert!(w[1].report.p_fp.value <= w[0].report.p_fp.value);
                assert!(w[1].report.p_fn.value >= w[0].report.p_fn.value);
            }
            let (first, last) = (rows[0], rows[rows.len() - 1]);
            assert_eq!(first.report.p_fp.value, 1.0);
            assert_eq!(last.report.p_fp.value, 0.0);
            assert_eq!(last.report.p_fn.value, 1.0);
        }
    }

    #[test]
    fn uniform_qf_below_two_bits_per_sample_is_unreachable() {
        let mut spec = small_spec(Sweep::BudgetGrid {
            budgets: vec![16],
            codeword_lens: vec![12],
            target_pe: 0.5,
            snr_min_db: -10.0,
            snr_max_db: 30.0,
            resolution_db: 0.25,
        });
        spec.schemes = Some(vec![Scheme::QfUniform]);
        let out = run_required_snr(&spec, &RunOptions::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].required_snr_db, None);
        assert!(required_snr_csv(&out.rows).contains("qf_uniform,16,12,unreachable"));
    }

    #[test]
    fn trace_and_dump_are_collected_on_request() {
        let mut spec = small_spec(Sweep::SnrSweep { snr_db: vec![3.0], budgets: None });
        spec.schemes = Some(vec![Scheme::QfUnquantized]);
        spec.trials = 5;
        let out = run_snr_sweep(&spec, &RunOptions { debug_trace: true, dump_trials: true }).unwrap();
        assert_eq!(out.dump.len(), 5);
        assert_eq!(out.traces.len(), 1);
        assert!(!out.traces[0].rows.is_empty());
        let first: serde_json::Value = serde_json::from_str(&out.dump[0]).unwrap();
        assert_eq!(first["xi"].as_array().unwrap().len(), 4);
        assert!(trace_csv(&out.traces).starts_with("scheme,b,n,snr_db,iteration"));
    }
}
