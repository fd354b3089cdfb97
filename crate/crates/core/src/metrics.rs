//! Error-rate bookkeeping.
//!
//! `pe` counts every event slot with a wrong decision. `p_fp` is conditioned
//! on inactive events, `p_fn` on active ones. A wrong active value counts
//! towards `pe` only and is reported separately as `p_wv`.

use serde::Serialize;

use crate::detection::DecisionVector;
use crate::error::{Error, Result};
use crate::scenario::EventStateVector;

const Z95: f64 = 1.959_963_984_540_054;

/// Mergeable counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Accumulator {
    pub trials: u64,
    pub event_slots: u64,
    pub errors: u64,
    pub inactive: u64,
    pub false_pos: u64,
    pub active: u64,
    pub false_neg: u64,
    pub wrong_value: u64,
}

impl Accumulator {
    pub fn accumulate(&mut self, truth: &EventStateVector, decision: &DecisionVector) -> Result<()> {
        if truth.0.len() != decision.0.len() {
            return Err(Error::Dimension(format!(
                "truth has {} events, decision {}",
                truth.0.len(),
                decision.0.len()
            )));
        }
        self.trials += 1;
        for (&t, &d) in truth.0.iter().zip(&decision.0) {
            self.event_slots += 1;
            if t != d {
                self.errors += 1;
            }
            if t == 0 {
                self.inactive += 1;
                if d != 0 {
                    self.false_pos += 1;
                }
            } else {
                self.active += 1;
                if d == 0 {
                    self.false_neg += 1;
                } else if d != t {
                    self.wrong_value += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.trials += other.trials;
        self.event_slots += other.event_slots;
        self.errors += other.errors;
        self.inactive += other.inactive;
        self.false_pos += other.false_pos;
        self.active += other.active;
        self.false_neg += other.false_neg;
        self.wrong_value += other.wrong_value;
    }

    pub fn finalize(&self) -> Result<MetricsReport> {
        if self.trials == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let rate = |k: u64, n: u64| Rate::new(k, n);
        Ok(MetricsReport {
            pe: rate(self.errors, self.event_slots),
            p_fp: rate(self.false_pos, self.inactive),
            p_fn: rate(self.false_neg, self.active),
            p_wv: rate(self.wrong_value, self.active),
            trial_count: self.trials,
        })
    }
}

/// A proportion with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Rate {
    pub fn new(count: u64, total: u64) -> Self {
        let value = if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let (lower, upper) = wilson_interval(count, total);
        Self { count, total, value, lower, upper }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    /// Whether the two intervals are disjoint.
    pub fn separated_from(&self, other: &Rate) -> bool {
        self.upper < other.lower || other.upper < self.lower
    }
}

/// Wilson score interval at 95% confidence. An empty sample gives `[0, 1]`.
pub fn wilson_interval(count: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = count as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if count == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if count == total { 1.0 } else { (centre + half).min(1.0) };
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub pe: Rate,
    pub p_fp: Rate,
    pub p_fn: Rate,
    pub p_wv: Rate,
    pub trial_count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc_of(pairs: &[(&[usize], &[usize])]) -> Accumulator {
        let mut acc = Accumulator::default();
        for (t, d) in pairs {
            acc.accumulate(&EventStateVector(t.to_vec()), &DecisionVector(d.to_vec())).unwrap();
        }
        acc
    }

    #[test]
    fn hand_counted_examples() {
        let acc = acc_of(&[(&[1, 2], &[1, 2])]);
        assert_eq!(acc.errors, 0);

        let acc = acc_of(&[(&[0, 0], &[1, 0])]);
        assert_eq!((acc.false_pos, acc.inactive), (1, 2));

        let acc = acc_of(&[(&[2, 0, 1], &[1, 0, 1])]);
        assert_eq!((acc.errors, acc.event_slots), (1, 3));
        assert_eq!((acc.false_pos, acc.inactive), (0, 1));
        assert_eq!((acc.false_neg, acc.active), (0, 2));
        assert_eq!(acc.wrong_value, 1);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut acc = Accumulator::default();
        assert!(acc.accumulate(&EventStateVector(vec![0]), &DecisionVector(vec![0, 1])).is_err());
        assert!(matches!(acc.finalize(), Err(Error::EmptyAccumulator)));
    }

    #[test]
    fn wilson_zero_errors() {
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        // z^2 / (n + z^2)
        let z2 = Z95 * Z95;
        assert!((hi - z2 / (1000.0 + z2)).abs() < 1e-12);
        assert!((hi - 0.0038).abs() < 1e-4);
    }

    #[test]
    fn finalize_rates() {
        let mut acc = Accumulator { trials: 1, event_slots: 100, errors: 10, ..Default::default() };
        assert_eq!(acc.finalize().unwrap().pe.value, 0.1);
        acc.errors = 100;
        assert_eq!(acc.finalize().unwrap().pe.value, 1.0);
    }

    #[test]
    fn decomposition_and_order_invariance() {
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..60)
            .map(|i| {
                let t = vec![i % 3, (i / 3) % 3, 0, (i * 7) % 3];
                let d = vec![(i / 2) % 3, (i / 3) % 3, i % 2, (i * 5) % 3];
                (t, d)
            })
            .collect();
        let mut fwd = Accumulator::default();
        for (t, d) in &pairs {
            fwd.accumulate(&EventStateVector(t.clone()), &DecisionVector(d.clone())).unwrap();
        }
        assert_eq!(fwd.errors, fwd.false_pos + fwd.false_neg + fwd.wrong_value);

        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        for (i, (t, d)) in pairs.iter().rev().enumerate() {
            let target = if i % 2 == 0 { &mut a } else { &mut b };
            target.accumulate(&EventStateVector(t.clone()), &DecisionVector(d.clone())).unwrap();
        }
        b.merge(&a);
        assert_eq!(b, fwd);
    }
}
