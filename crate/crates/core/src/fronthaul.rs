//! Capacity-limited edge-to-cloud links.
//!
//! Quantize-and-forward ships a compressed copy of the received block,
//! either through the Gaussian test-channel abstraction or a concrete
//! uniform scalar quantizer. Detect-and-forward ships quantized local LLRs
//! of the events an edge node believes active.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::config::{DtfAllocation, PowerEstimateMode};
use crate::denoiser::{GroupPrior, LlrMatrix};
use crate::error::{Error, Result};
use crate::rng::standard_complex_normals;

/// Upper bound on bits spent on a single quantized value.
pub const MAX_BITS_PER_VALUE: u32 = 24;

/// A block as seen by the central processor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub y_tilde: DVector<Complex64>,
    /// Quantization-noise variance handed to the detector.
    pub sigma_q_sq: f64,
    pub bits_used: u64,
}

impl QuantizedBlock {
    /// Forwarded without compression.
    pub fn lossless(y: &DVector<Complex64>) -> Self {
        Self { y_tilde: y.clone(), sigma_q_sq: 0.0, bits_used: 0 }
    }
}

/// Distortion of the Gaussian test channel at `rate` bits per complex
/// sample: `P / (2^rate - 1)`.
pub fn test_channel_variance(power: f64, rate: f64) -> f64 {
    power / (rate.exp2() - 1.0)
}

/// Signal power entering the quantizer.
pub fn quantizer_input_power(
    y: &DVector<Complex64>,
    mode: PowerEstimateMode,
    prior: &GroupPrior,
    sigma_v_sq: f64,
) -> f64 {
    match mode {
        PowerEstimateMode::Empirical => y.norm_squared() / y.len() as f64,
        PowerEstimateMode::Nominal => nominal_power(prior, sigma_v_sq, y.len()),
    }
}

/// `E|y_i|^2 = sigma_v^2 + (sum of prior coefficient variances) / N`, using
/// unit expected codeword energy. `prior` describes a single node.
pub fn nominal_power(prior: &GroupPrior, sigma_v_sq: f64, codeword_len: usize) -> f64 {
    let per_node: f64 = prior.marginal_variance()[..prior.block_len()].iter().sum();
    sigma_v_sq + per_node / codeword_len as f64
}

/// Test-channel QF with pre-drawn unit-variance noise.
pub fn qf_test_channel_with_noise(
    y: &DVector<Complex64>,
    budget_bits: u32,
    power: f64,
    unit_noise: &[Complex64],
) -> QuantizedBlock {
    let rate = budget_bits as f64 / y.len() as f64;
    let sigma_q_sq = test_channel_variance(power, rate);
    let sd = sigma_q_sq.sqrt();
    let y_tilde = DVector::from_iterator(y.len(), y.iter().zip(unit_noise).map(|(a, w)| a + w * sd));
    QuantizedBlock { y_tilde, sigma_q_sq, bits_used: budget_bits as u64 }
}

pub fn qf_test_channel<R: Rng + ?Sized>(
    y: &DVector<Complex64>,
    budget_bits: u32,
    power: f64,
    rng: &mut R,
) -> QuantizedBlock {
    let noise = standard_complex_normals(rng, y.len());
    qf_test_channel_with_noise(y, budget_bits, power, &noise)
}

/// Uniform mid-rise scalar quantizer over `[-clip, clip]` with `2^bits`
/// cells; values outside saturate at the outer levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformQuantizer {
    pub bits: u32,
    pub clip: f64,
}

impl UniformQuantizer {
    pub fn new(bits: u32, clip: f64) -> Self {
        Self { bits: bits.min(MAX_BITS_PER_VALUE), clip }
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 * self.clip / self.levels() as f64
    }

    pub fn encode(&self, x: f64) -> u32 {
        let cell = ((x + self.clip) / self.step()).floor();
        cell.clamp(0.0, (self.levels() - 1) as f64) as u32
    }

    pub fn decode(&self, code: u32) -> f64 {
        -self.clip + (code as f64 + 0.5) * self.step()
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.decode(self.encode(x))
    }
}

/// QF with a uniform quantizer per real dimension, `floor(B / 2N)` bits each.
pub fn qf_uniform_quantize(y: &DVector<Complex64>, budget_bits: u32, clip: f64) -> Result<QuantizedBlock> {
    let n = y.len();
    let bits = budget_bits as usize / (2 * n);
    if bits < 1 {
        return Err(Error::BudgetTooSmall(format!(
            "uniform QF needs at least 2N = {} bits, got {budget_bits}",
            2 * n
        )));
    }
    let q = UniformQuantizer::new(bits as u32, clip);
    let y_tilde = y.map(|v| Complex64::new(q.quantize(v.re), q.quantize(v.im)));
    let sigma_q_sq = (&y_tilde - y).norm_squared() / n as f64;
    Ok(QuantizedBlock { y_tilde, sigma_q_sq, bits_used: (2 * n as u64) * q.bits as u64 })
}

/// What one edge node sends under DtF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtfPayload {
    /// Local activity flag per event.
    pub active: Vec<bool>,
    pub bits_per_llr: u32,
    /// Quantizer indices of the flagged events' LLRs, event-major, values
    /// `1..=R` within an event.
    pub codes: Vec<u32>,
}

impl DtfPayload {
    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Bit layout and quantizer for DtF payloads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtfCodec {
    pub num_events: usize,
    pub num_values: usize,
    pub budget_bits: u32,
    pub clip: f64,
    pub allocation: DtfAllocation,
}

impl DtfCodec {
    pub fn new(
        num_events: usize,
        num_values: usize,
        budget_bits: u32,
        clip: f64,
        allocation: DtfAllocation,
    ) -> Result<Self> {
        let codec = Self { num_events, num_values, budget_bits, clip, allocation };
        let (b, m, r) = (budget_bits as usize, num_events, num_values);
        let fits = match allocation {
            DtfAllocation::PerEvent => (b / m).saturating_sub(1) >= r && b / m >= 1,
            DtfAllocation::Pooled => b >= m + r,
        };
        if !fits {
            return Err(Error::BudgetTooSmall(format!(
                "{b} bits cannot carry {m} activity flags and {r} one-bit LLRs per flagged event ({allocation:?})"
            )));
        }
        Ok(codec)
    }

    /// Most events that may be flagged at once.
    pub fn max_active(&self) -> usize {
        match self.allocation {
            DtfAllocation::PerEvent => self.num_events,
            DtfAllocation::Pooled => {
                ((self.budget_bits as usize - self.num_events) / self.num_values).min(self.num_events)
            }
        }
    }

    /// Bits per LLR given how many events are flagged.
    pub fn bits_per_llr(&self, num_active: usize) -> u32 {
        let (b, m, r) = (self.budget_bits as usize, self.num_events, self.num_values);
        let bits = match self.allocation {
            DtfAllocation::PerEvent => (b / m - 1) / r,
            DtfAllocation::Pooled if num_active == 0 => 0,
            DtfAllocation::Pooled => (b - m) / (num_active * r),
        };
        (bits as u32).min(MAX_BITS_PER_VALUE)
    }

    fn quantizer(&self, num_active: usize) -> UniformQuantizer {
        UniformQuantizer::new(self.bits_per_llr(num_active), self.clip)
    }

    /// Total payload bits for a given number of flagged events.
    pub fn payload_bits(&self, num_active: usize) -> usize {
        self.num_events + num_active * self.num_values * self.bits_per_llr(num_active) as usize
    }

    /// Quantizes the LLRs of flagged events. When more events are flagged
    /// than the budget can carry, the weakest (smallest maximum LLR) are
    /// dropped first.
    pub fn quantize(&self, llrs: &LlrMatrix, local_active: &[bool]) -> Result<DtfPayload> {
        if llrs.num_events != self.num_events
            || llrs.num_values != self.num_values
            || local_active.len() != self.num_events
        {
            return Err(Error::Dimension("DtF payload shape does not match codec".into()));
        }
        let mut active = local_active.to_vec();
        let mut flagged: Vec<usize> = (0..self.num_events).filter(|&m| active[m]).collect();
        if flagged.len() > self.max_active() {
            let strength = |m: usize| llrs.row(m).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            flagged.sort_by(|&a, &b| strength(b).total_cmp(&strength(a)).then(a.cmp(&b)));
            for &m in &flagged[self.max_active()..] {
                active[m] = false;
            }
        }
        let num_active = active.iter().filter(|&&a| a).count();
        let q = self.quantizer(num_active);
        let codes = (0..self.num_events)
            .filter(|&m| active[m])
            .flat_map(|m| llrs.row(m).iter().map(move |&l| q.encode(l)))
            .collect();
        Ok(DtfPayload { active, bits_per_llr: q.bits, codes })
    }

    /// Rebuilds an LLR matrix; unflagged events come back as all-zero rows.
    pub fn dequantize(&self, payload: &DtfPayload) -> LlrMatrix {
        let q = UniformQuantizer::new(payload.bits_per_llr, self.clip);
        let mut out = LlrMatrix::zeros(self.num_events, self.num_values);
        let mut codes = payload.codes.iter();
        for m in (0..self.num_events).filter(|&m| payload.active[m]) {
            for slot in out.row_mut(m) {
                *slot = q.decode(*codes.next().unwrap_or(&0));
            }
        }
        out
    }

    /// Big-endian bit packing: `M` activity bits, then each flagged event's
    /// `R` codewords in event order. Trailing pad bits are zero.
    pub fn serialize(&self, payload: &DtfPayload) -> Vec<u8> {
        let mut w = BitWriter::default();
        for &a in &payload.active {
            w.push(a as u32, 1);
        }
        for &code in &payload.codes {
            w.push(code, payload.bits_per_llr);
        }
        w.finish()
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<DtfPayload> {
        let mut r = BitReader::new(bytes);
        let active: Vec<bool> = (0..self.num_events)
            .map(|_| r.pull(1).map(|b| b == 1))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Payload("truncated activity flags".into()))?;
        let num_active = active.iter().filter(|&&a| a).count();
        let bits = self.bits_per_llr(num_active);
        let codes = (0..num_active * self.num_values)
            .map(|_| r.pull(bits))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Payload("truncated LLR codewords".into()))?;
        let expected = self.payload_bits(num_active).div_ceil(8);
        if bytes.len() != expected {
            return Err(Error::Payload(format!("expected {expected} bytes, got {}", bytes.len())));
        }
        Ok(DtfPayload { active, bits_per_llr: bits, codes })
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn push(&mut self, value: u32, bits: u32) {
        for i in (0..bits).rev() {
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            let bit = ((value >> i) & 1) as u8;
            let last = self.bytes.last_mut().expect("byte pushed above");
            *last |= bit << (7 - self.used % 8);
            self.used += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn pull(&mut self, bits: u32) -> Option<u32> {
        let mut v = 0u32;
        for _ in 0..bits {
            let byte = *self.bytes.get(self.pos / 8)?;
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u32;
            self.pos += 1;
        }
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn test_channel_formula() {
        assert_eq!(test_channel_variance(1.0, 1.0), 1.0);
        assert!((test_channel_variance(2.0, 4.0) - 2.0 / 15.0).abs() < 1e-15);
        assert_eq!(test_channel_variance(1.0, 4096.0), 0.0);
        let y = DVector::from_element(16, Complex64::new(0.3, -0.2));
        let big = qf_test_channel(&y, 1 << 20, 1.0, &mut RandomSource::new(1, 1).rng());
        assert_eq!(big.y_tilde, y);
        assert_eq!(big.sigma_q_sq, 0.0);
    }

    #[test]
    fn test_channel_noise_variance_and_independence() {
        let n = 100_000;
        let mut rng = RandomSource::new(2, 2).rng();
        let y = DVector::from_vec(standard_complex_normals(&mut rng, n));
        // B/N = 4 as in B = 64, N = 16
        let q = qf_test_channel(&y, 4 * n as u32, 2.0, &mut rng);
        let diff = &q.y_tilde - &y;
        let var = diff.norm_squared() / n as f64;
        assert!((var / (2.0 / 15.0) - 1.0).abs() < 0.03, "{var}");
        let corr = y.iter().zip(diff.iter()).map(|(a, d)| (a.conj() * d).re).sum::<f64>()
            / (y.norm() * diff.norm());
        assert!(corr.abs() < 0.01, "correlation {corr}");
    }

    #[test]
    fn uniform_levels_and_saturation() {
        let q = UniformQuantizer::new(3, 4.0);
        for code in 0..8 {
            let level = q.decode(code);
            assert_eq!(q.encode(level), code);
            assert_eq!(q.quantize(level), level);
        }
        assert_eq!(q.quantize(100.0), q.decode(7));
        assert_eq!(q.quantize(-100.0), q.decode(0));
        assert_eq!(q.decode(7), 3.5);
    }

    #[test]
    fn uniform_qf_budget_and_accounting() {
        let y = DVector::from_element(16, Complex64::new(0.1, 0.2));
        assert!(matches!(qf_uniform_quantize(&y, 31, 1.0), Err(Error::BudgetTooSmall(_))));
        let q = qf_uniform_quantize(&y, 100, 1.0).unwrap();
        assert_eq!(q.bits_used, 96);
        assert!(q.bits_used <= 100);
    }

    #[test]
    fn uniform_qf_distortion_matches_granular_noise() {
        let n = 50_000;
        let mut rng = RandomSource::new(4, 4).rng();
        let y = DVector::from_vec(standard_complex_normals(&mut rng, n));
        let sigma = (0.5f64).sqrt(); // per real dimension
        let clip = 4.0 * sigma;
        let q = qf_uniform_quantize(&y, 16 * n as u32, clip).unwrap();
        // 8 bits per real dimension: step^2 / 12 per dimension, overload negligible
        let step = 2.0 * clip / 256.0;
        let granular = 2.0 * step * step / 12.0;
        assert!((q.sigma_q_sq / granular - 1.0).abs() < 0.05, "{} vs {granular}", q.sigma_q_sq);
        // a fixed-rate scalar quantizer cannot beat the test channel
        assert!(q.sigma_q_sq > test_channel_variance(1.0, 16.0));
    }

    fn llrs_from(rows: &[[f64; 4]]) -> LlrMatrix {
        LlrMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn per_event_budget_examples() {
        assert!(matches!(
            DtfCodec::new(8, 4, 32, 20.0, DtfAllocation::PerEvent),
            Err(Error::BudgetTooSmall(_))
        ));
        let codec = DtfCodec::new(8, 4, 41, 20.0, DtfAllocation::PerEvent).unwrap();
        assert_eq!(codec.bits_per_llr(3), 1);
        // the 1-bit quantizer has levels -clip/2 and clip/2; in-range error
        // peaks at the cell edges, where it is clip/2
        let q = UniformQuantizer::new(1, 20.0);
        assert_eq!((q.decode(0), q.decode(1)), (-10.0, 10.0));
        let worst = [-20.0, -10.0, 0.0 - 1e-12, 0.0, 10.0, 20.0]
            .iter()
            .map(|&l| (q.quantize(l) - l).abs())
            .fold(0.0, f64::max);
        assert!((worst - 10.0).abs() < 1e-9);
    }

    #[test]
    fn inactive_events_cost_one_bit() {
        let codec = DtfCodec::new(2, 4, 64, 20.0, DtfAllocation::PerEvent).unwrap();
        let llrs = llrs_from(&[[3.0, -1.0, 2.0, 0.5], [9.0, 9.0, 9.0, 9.0]]);
        let p = codec.quantize(&llrs, &[true, false]).unwrap();
        let back = codec.dequantize(&p);
        assert_eq!(back.row(1), &[0.0; 4]);
        assert_eq!(codec.payload_bits(1), 2 + 4 * 7);
        let none = codec.quantize(&llrs, &[false, false]).unwrap();
        assert_eq!(codec.serialize(&none), vec![0u8]);
        assert_eq!(codec.payload_bits(0), 2);
    }

    #[test]
    fn pooled_allocation_shares_leftover_bits() {
        let codec = DtfCodec::new(8, 4, 32, 20.0, DtfAllocation::Pooled).unwrap();
        assert_eq!(codec.bits_per_llr(1), 6);
        assert_eq!(codec.bits_per_llr(2), 3);
        assert_eq!(codec.max_active(), 6);
        let rows: Vec<Vec<f64>> = (0..8).map(|m| vec![m as f64; 4]).collect();
        let llrs = LlrMatrix::from_rows(&rows);
        let p = codec.quantize(&llrs, &[true; 8]).unwrap();
        // the two weakest events are dropped
        assert_eq!(p.active, vec![false, false, true, true, true, true, true, true]);
        assert!(codec.serialize(&p).len() <= 4);
    }

    #[test]
    fn serialization_is_msb_first() {
        let codec = DtfCodec::new(2, 1, 10, 4.0, DtfAllocation::PerEvent).unwrap();
        // 5 bits per event: 1 flag + 4 bits for the single LLR
        let p = DtfPayload { active: vec![true, false], bits_per_llr: 4, codes: vec![0b1011] };
        let bytes = codec.serialize(&p);
        assert_eq!(bytes, vec![0b1010_1100]);
        assert_eq!(codec.deserialize(&bytes).unwrap(), p);
        assert!(codec.deserialize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn dtf_round_trip(seed in 0u64..1000, budget in 12u32..400, pooled in any::<bool>()) {
            let alloc = if pooled { DtfAllocation::Pooled } else { DtfAllocation::PerEvent };
            let Ok(codec) = DtfCodec::new(8, 4, budget, 20.0, alloc) else { return Ok(()); };
            let mut rng = RandomSource::new(seed, 0).rng();
            let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(-25.0..25.0)).collect()).collect();
            let llrs = LlrMatrix::from_rows(&rows);
            let flags: Vec<bool> = (0..8).map(|_| rng.random_bool(0.4)).collect();
            let p = codec.quantize(&llrs, &flags).unwrap();
            let bytes = codec.serialize(&p);
            prop_assert!(bytes.len() <= (budget as usize).div_ceil(8));
            prop_assert!(codec.payload_bits(p.num_active()) <= budget as usize);
            let back = codec.deserialize(&bytes).unwrap();
            prop_assert_eq!(&back, &p);
            let rec = codec.dequantize(&back);
            let step_bound = 20.0 / (1u64 << p.bits_per_llr) as f64;
            for m in 0..8 {
                for r in 0..4 {
                    let (l, lt) = (llrs.row(m)[r], rec.row(m)[r]);
                    if p.active[m] && l.abs() <= 20.0 {
                        prop_assert!((l - lt).abs() <= step_bound + 1e-12);
                    }
                    if !p.active[m] {
                        prop_assert_eq!(lt, 0.0);
                    }
                }
            }
        }

        #[test]
        fn uniform_quantizer_is_monotone_and_idempotent(a in -30.0f64..30.0, b in -30.0f64..30.0, bits in 1u32..10) {
            let q = UniformQuantizer::new(bits, 20.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.quantize(lo) <= q.quantize(hi));
            prop_assert_eq!(q.quantize(q.quantize(a)), q.quantize(a));
        }
    }
}
