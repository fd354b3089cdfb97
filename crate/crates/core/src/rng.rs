//! Seeded, counter-based random streams.
//!
//! Every draw in a campaign comes from a ChaCha stream addressed by a
//! `(master_seed, stream_id)` pair. Stream ids are built from the trial
//! index, the role of the draw and the campaign phase, so any single trial
//! can be replayed in isolation and trials may run in any order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// What a stream is used for inside a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Events = 0,
    Estimates = 1,
    Channel = 2,
    ReceiverNoise = 3,
    QuantizationNoise = 4,
    Codebook = 5,
}

/// Calibration trials live on odd stream ids, evaluation trials on even ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Evaluation = 0,
    Calibration = 1,
}

/// A reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RandomSource {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Stream for one role of one trial. `index` is the trial index for
    /// per-trial roles; the codebook uses it for the signature length.
    pub fn for_trial(master_seed: u64, phase: Phase, index: u64, role: Role) -> Self {
        let stream_id = (index << 8) | ((role as u64) << 1) | phase as u64;
        Self::new(master_seed, stream_id)
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// One circularly-symmetric complex normal draw with unit variance.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `len` i.i.d. CN(0, 1) draws.
pub fn standard_complex_normals<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| standard_complex_normal(rng)).collect()
}
