//! Ground truth and physical-layer observations for one trial.
//!
//! A trial draws the event states, each device's local estimates, the
//! fading matrix and the receiver noise, then forms the superposition
//! `y^c = S x^c + v^c` received at every edge node.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::config::{
    derive_prior, CodebookKind, DeviceAssignment, ObservationModel, SystemConfig,
};
use crate::error::{Error, Result};
use crate::rng::{standard_complex_normal, standard_complex_normals, Phase, RandomSource, Role};

/// True event states, one entry in `{0, ..., R}` per event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventStateVector(pub Vec<usize>);

impl EventStateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Local estimates. `phi[k][i]` is device `k`'s estimate of event
/// `assign.monitored[k][i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EstimateMatrix {
    pub phi: Vec<Vec<usize>>,
}

/// Shared signature matrix `S` of shape `N x M(R+1)`; block `m` holds the
/// `R+1` codewords of event `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub s: DMatrix<Complex64>,
    pub kind: CodebookKind,
    pub num_events: usize,
    pub num_values: usize,
}

impl Codebook {
    pub fn codeword_len(&self) -> usize {
        self.s.nrows()
    }

    pub fn codeword(&self, event: usize, value: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.s.column(event * (self.num_values + 1) + value)
    }
}

/// Fading coefficients; `h[(c, k)]` links device `k` to edge node `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DMatrix<Complex64>,
}

/// Effective sparse input `x^c` of every edge node, each of length `M(R+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub x: Vec<DVector<Complex64>>,
}

/// Received blocks `y^c` together with the noiseless part `S x^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    pub y: Vec<DVector<Complex64>>,
    pub noiseless: Vec<DVector<Complex64>>,
    pub sigma_v_sq: f64,
}

pub fn sample_events<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> EventStateVector {
    let prior = derive_prior(cfg);
    let p0 = prior.inactive();
    let xi = (0..cfg.num_events)
        .map(|_| {
            let u: f64 = rng.random();
            if u < p0 {
                0
            } else {
                rng.random_range(1..=cfg.num_values)
            }
        })
        .collect();
    EventStateVector(xi)
}

pub fn sample_estimates<R: Rng + ?Sized>(
    xi: &EventStateVector,
    assign: &DeviceAssignment,
    obs: &ObservationModel,
    num_values: usize,
    rng: &mut R,
) -> EstimateMatrix {
    let phi = assign
        .monitored
        .iter()
        .map(|events| {
            events
                .iter()
                .map(|&m| {
                    let truth = xi.0[m];
                    if obs.epsilon > 0.0 && rng.random::<f64>() < obs.epsilon {
                        // uniform over the R values other than the truth
                        let pick = rng.random_range(0..num_values);
                        if pick >= truth {
                            pick + 1
                        } else {
                            pick
                        }
                    } else {
                        truth
                    }
                })
                .collect()
        })
        .collect();
    EstimateMatrix { phi }
}

pub fn generate_codebook<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<Codebook> {
    let (n, d) = (cfg.codeword_len, cfg.block_len());
    let scale = (1.0 / n as f64).sqrt();
    let s = match cfg.codebook_kind {
        CodebookKind::Gaussian => {
            DMatrix::from_fn(n, d, |_, _| standard_complex_normal(rng) * scale)
        }
        CodebookKind::Orthogonal => {
            if n < d {
                return Err(Error::Dimension(format!(
                    "orthogonal codebook needs n >= {d}, got {n}"
                )));
            }
            let g = DMatrix::from_fn(n, d, |_, _| standard_complex_normal(rng));
            g.qr().q()
        }
    };
    Ok(Codebook { s, kind: cfg.codebook_kind, num_events: cfg.num_events, num_values: cfg.num_values })
}

/// One-hot measurement vector `c_k` of one device.
///
/// Block `m` is `e_{phi}` for monitored events and `e_0` otherwise. With
/// `transmit_on_active` every block whose entry would be `e_0` is zeroed,
/// so a device whose estimates are all zero stays silent.
pub fn encode_measurement(
    phi_k: &[usize],
    monitored_k: &[usize],
    cfg: &SystemConfig,
) -> Vec<u8> {
    let mut c = vec![0u8; cfg.block_len()];
    let mut value = vec![0usize; cfg.num_events];
    for (&m, &v) in monitored_k.iter().zip(phi_k) {
        value[m] = v;
    }
    for (m, &v) in value.iter().enumerate() {
        if v == 0 && cfg.transmit_on_active {
            continue;
        }
        c[cfg.coeff_index(m, v)] = 1;
    }
    c
}

/// `x^c = sum_k h[c][k] c_k`, accumulated without forming the one-hot
/// vectors.
pub fn build_sparse_signal(
    phi: &EstimateMatrix,
    assign: &DeviceAssignment,
    h_row_c: &[Complex64],
    cfg: &SystemConfig,
) -> DVector<Complex64> {
    let mut x = DVector::zeros(cfg.block_len());
    let mut silent_sum = Complex64::new(0.0, 0.0);
    for (k, (events, estimates)) in assign.monitored.iter().zip(&phi.phi).enumerate() {
        let h = h_row_c[k];
        for (&m, &v) in events.iter().zip(estimates) {
            if v == 0 && cfg.transmit_on_active {
                continue;
            }
            x[cfg.coeff_index(m, v)] += h;
        }
        if !cfg.transmit_on_active {
            silent_sum += h;
            // undo for the events this device does monitor
            for &m in events {
                x[cfg.coeff_index(m, 0)] -= h;
            }
        }
    }
    if !cfg.transmit_on_active {
        // every device contributes e_0 on the events it does not monitor
        for m in 0..cfg.num_events {
            x[cfg.coeff_index(m, 0)] += silent_sum;
        }
    }
    x
}

pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let sd = cfg.sigma_h_sq.sqrt();
    let h = DMatrix::from_fn(cfg.num_edge_nodes, cfg.num_devices, |_, _| {
        standard_complex_normal(rng) * sd
    });
    ChannelRealization { h }
}

pub fn build_all_sparse_signals(
    phi: &EstimateMatrix,
    assign: &DeviceAssignment,
    channel: &ChannelRealization,
    cfg: &SystemConfig,
) -> SparseSignal {
    let x = (0..cfg.num_edge_nodes)
        .map(|c| {
            let row: Vec<Complex64> = channel.h.row(c).iter().copied().collect();
            build_sparse_signal(phi, assign, &row, cfg)
        })
        .collect();
    SparseSignal { x }
}

/// `y^c = S x^c + sigma_v w^c` for pre-drawn unit-variance noise `w^c`.
pub fn transmit_with_noise(
    x: &SparseSignal,
    codebook: &Codebook,
    sigma_v_sq: f64,
    unit_noise: &[Vec<Complex64>],
) -> ReceivedBlock {
    let sd = sigma_v_sq.sqrt();
    let noiseless: Vec<DVector<Complex64>> = x.x.iter().map(|xc| &codebook.s * xc).collect();
    let y = noiseless
        .iter()
        .zip(unit_noise)
        .map(|(clean, w)| {
            DVector::from_iterator(
                clean.len(),
                clean.iter().zip(w).map(|(s, n)| s + n * sd),
            )
        })
        .collect();
    ReceivedBlock { y, noiseless, sigma_v_sq }
}

pub fn transmit<R: Rng + ?Sized>(
    x: &SparseSignal,
    codebook: &Codebook,
    cfg: &SystemConfig,
    rng: &mut R,
) -> ReceivedBlock {
    let noise: Vec<Vec<Complex64>> = (0..x.x.len())
        .map(|_| standard_complex_normals(rng, codebook.codeword_len()))
        .collect();
    transmit_with_noise(x, codebook, cfg.noise_variance(), &noise)
}

/// Everything drawn for one trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub phase: Phase,
    pub index: u64,
    pub xi: EventStateVector,
    pub phi: EstimateMatrix,
    pub channel: ChannelRealization,
    pub signal: SparseSignal,
    pub received: ReceivedBlock,
}

impl Trial {
    /// Draws a trial from the streams keyed by `(master_seed, phase, index)`.
    /// Event, estimate, channel and unit-noise draws do not depend on the
    /// SNR, so sweeps over SNR share their random numbers.
    pub fn generate(
        cfg: &SystemConfig,
        assign: &DeviceAssignment,
        obs: &ObservationModel,
        codebook: &Codebook,
        master_seed: u64,
        phase: Phase,
        index: u64,
    ) -> Self {
        let stream = |role| RandomSource::for_trial(master_seed, phase, index, role).rng();
        let xi = sample_events(cfg, &mut stream(Role::Events));
        let phi = sample_estimates(&xi, assign, obs, cfg.num_values, &mut stream(Role::Estimates));
        let channel = sample_channel(cfg, &mut stream(Role::Channel));
        let signal = build_all_sparse_signals(&phi, assign, &channel, cfg);
        let mut noise_rng = stream(Role::ReceiverNoise);
        let noise: Vec<Vec<Complex64>> = (0..cfg.num_edge_nodes)
            .map(|_| standard_complex_normals(&mut noise_rng, cfg.codeword_len))
            .collect();
        let received = transmit_with_noise(&signal, codebook, cfg.noise_variance(), &noise);
        Self { phase, index, xi, phi, channel, signal, received }
    }
}

/// Codebook for a campaign; the stream depends only on the seed and `N`.
pub fn campaign_codebook(cfg: &SystemConfig, master_seed: u64) -> Result<Codebook> {
    let src = RandomSource::for_trial(
        master_seed,
        Phase::Evaluation,
        cfg.codeword_len as u64,
        Role::Codebook,
    );
    generate_codebook(cfg, &mut src.rng())
}
