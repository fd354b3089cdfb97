//! Cloud (QF) and edge (DtF) detectors, LLR fusion and the threshold rule.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::denoiser::{block_posterior, compute_llrs, EventPosterior, GroupDenoiser, GroupPrior, LlrMatrix};
use crate::error::{Error, Result};
use crate::fronthaul::QuantizedBlock;
use crate::gamp::{run_gamp, GampOptions, GampProblem, TraceRow};
use crate::scenario::{Codebook, EventStateVector};

/// Decided event states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionVector(pub Vec<usize>);

/// One threshold shared by every `(m, r)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub threshold: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GampDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Damping finally used; smaller than requested after a divergence retry.
    pub damping: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub llrs: LlrMatrix,
    pub posterior: EventPosterior,
    pub diagnostics: GampDiagnostics,
}

/// How many times a diverging run is retried with halved damping.
const DIVERGENCE_RETRIES: usize = 3;

fn detect(
    y: &[DVector<Complex64>],
    noise_var: &[f64],
    codebook: &Codebook,
    prior: &GroupPrior,
    opts: &GampOptions,
) -> Result<Detection> {
    if prior.num_nodes != y.len() {
        return Err(Error::Dimension(format!(
            "prior spans {} nodes, got {} blocks",
            prior.num_nodes,
            y.len()
        )));
    }
    if prior.block_len() != codebook.s.ncols() {
        return Err(Error::Dimension("codebook width does not match the prior".into()));
    }
    let denoiser = GroupDenoiser { prior };
    let problem = GampProblem { s: &codebook.s, y, noise_var, denoiser: &denoiser };
    let mut run_opts = *opts;
    let mut attempt = 0;
    let result = loop {
        match run_gamp(&problem, &run_opts) {
            Ok(res) => break res,
            Err(Error::NonFinite { .. }) if attempt < DIVERGENCE_RETRIES => {
                attempt += 1;
                run_opts.damping *= 0.5;
            }
            Err(e) => return Err(e),
        }
    };
    let posterior = block_posterior(&result.r, &result.tau_r, prior);
    Ok(Detection {
        llrs: compute_llrs(&posterior),
        posterior,
        diagnostics: GampDiagnostics {
            iterations: result.iterations,
            converged: result.converged,
            damping: run_opts.damping,
            trace: result.trace,
        },
    })
}

/// Joint detection at the central processor from all forwarded blocks.
/// `prior` must span all `L` nodes.
pub fn qf_detect(
    blocks: &[QuantizedBlock],
    codebook: &Codebook,
    prior: &GroupPrior,
    sigma_v_sq: f64,
    opts: &GampOptions,
) -> Result<Detection> {
    let y: Vec<DVector<Complex64>> = blocks.iter().map(|b| b.y_tilde.clone()).collect();
    let noise: Vec<f64> = blocks.iter().map(|b| sigma_v_sq + b.sigma_q_sq).collect();
    detect(&y, &noise, codebook, prior, opts)
}

/// Local detection at one edge node. `prior` must span a single node.
pub fn dtf_local_detect(
    y_c: &DVector<Complex64>,
    codebook: &Codebook,
    prior: &GroupPrior,
    sigma_v_sq: f64,
    opts: &GampOptions,
) -> Result<Detection> {
    detect(std::slice::from_ref(y_c), &[sigma_v_sq], codebook, prior, opts)
}

/// Additive fusion of per-node LLRs.
pub fn fuse_llrs(llr_list: &[LlrMatrix]) -> Result<LlrMatrix> {
    let first = llr_list.first().ok_or_else(|| Error::Dimension("no LLRs to fuse".into()))?;
    let mut out = first.clone();
    for l in &llr_list[1..] {
        if !l.same_shape(first) {
            return Err(Error::Dimension("LLR matrices differ in shape".into()));
        }
        for (a, b) in out.values.iter_mut().zip(&l.values) {
            *a += b;
        }
    }
    Ok(out)
}

/// State decided for one event: inactive when every LLR is strictly below
/// the threshold, otherwise the first maximising value.
pub fn decide_event(row: &[f64], threshold: f64) -> usize {
    let mut best = 0;
    let mut best_l = f64::NEG_INFINITY;
    for (i, &l) in row.iter().enumerate() {
        if l > best_l {
            best_l = l;
            best = i;
        }
    }
    if best_l < threshold || row.is_empty() {
        0
    } else {
        best + 1
    }
}

pub fn decide(llrs: &LlrMatrix, policy: &ThresholdPolicy) -> DecisionVector {
    DecisionVector((0..llrs.num_events).map(|m| decide_event(llrs.row(m), policy.threshold)).collect())
}

/// `start, start + step, ..., stop` (inclusive, up to rounding).
pub fn threshold_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return vec![start];
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
}

/// Default calibration grid, -20 to 20 nats in steps of 0.1.
pub fn default_threshold_grid() -> Vec<f64> {
    threshold_grid(-20.0, 20.0, 0.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub pe: f64,
    /// `(threshold, pe)` for every grid point, ascending.
    pub curve: Vec<(f64, f64)>,
}

/// Grid point with the lowest empirical per-event error rate; ties go to
/// the smallest threshold.
pub fn optimize_threshold(samples: &[(LlrMatrix, EventStateVector)], grid: &[f64]) -> Result<ThresholdFit> {
    let slots: usize = samples.iter().map(|(l, _)| l.num_events).sum();
    if samples.is_empty() || slots == 0 || grid.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    // Per event: the largest LLR (decides activity) and whether the argmax
    // value matches the truth.
    let summary: Vec<(f64, bool, bool)> = samples
        .iter()
        .flat_map(|(l, truth)| {
            (0..l.num_events).map(move |m| {
                let top = l.row(m).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let arg = decide_event(l.row(m), f64::NEG_INFINITY);
                (top, truth.0[m] == 0, arg == truth.0[m])
            })
        })
        .collect();
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let curve: Vec<(f64, f64)> = sorted
        .iter()
        .map(|&th| {
            let errors = summary
                .iter()
                .filter(|&&(top, inactive, arg_ok)| {
                    let active = top >= th;
                    if inactive {
                        active
                    } else {
                        !active || !arg_ok
                    }
                })
                .count();
            (th, errors as f64 / slots as f64)
        })
        .collect();
    let (threshold, pe) = curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, (th, pe)| if pe < best.1 { (th, pe) } else { best });
    Ok(ThresholdFit { threshold, pe, curve })
}
