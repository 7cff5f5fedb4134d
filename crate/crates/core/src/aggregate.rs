//! Sampling and score aggregation used by the evaluation protocol.
//!
//! All randomness in the crate flows through [`RandomStream`], a
//! `(base_seed, stream_id)` pair backed by a ChaCha8 generator whose stream
//! word is set to `stream_id`. Two streams with the same pair produce the
//! same sequence on every machine and thread schedule.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pareto::WeightVector;

/// Name and version of the generator behind [`RandomStream`], echoed in reports.
pub const RNG_NAME: &str = "rand_chacha::ChaCha8Rng (rand_chacha 0.3, seed_from_u64 + set_stream)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("score sample is empty")]
    EmptySample,
    #[error("score sample contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("simplex dimension must be at least 1")]
    ZeroDimension,
}

/// Identifies a reproducible random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self {
            base_seed,
            stream_id,
        }
    }

    /// A child stream for a labelled purpose. The mixing is a fixed
    /// splitmix64 round so children of different parents rarely collide.
    pub fn derive(&self, label: u64) -> Self {
        Self {
            base_seed: self.base_seed,
            stream_id: splitmix64(
                self.stream_id ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)),
            ),
        }
    }

    /// Instantiates the generator. Each call restarts the sequence.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a weight vector uniformly from the (k-1)-simplex with the sorted
/// uniform spacings construction.
pub fn sample_simplex_with<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
) -> Result<WeightVector, AggregateError> {
    if k == 0 {
        return Err(AggregateError::ZeroDimension);
    }
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(k);
    let mut prev = 0.0;
    for &c in &cuts {
        weights.push(c - prev);
        prev = c;
    }
    weights.push(1.0 - prev);
    // spacings already sum to 1 up to rounding; renormalize to machine precision
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(WeightVector::from_normalized(weights))
}

/// One simplex draw from a fresh generator for `stream`.
pub fn sample_simplex(stream: RandomStream, k: usize) -> Result<WeightVector, AggregateError> {
    sample_simplex_with(&mut stream.rng(), k)
}

/// `count` consecutive simplex draws from `stream`.
pub fn sample_simplex_many(
    stream: RandomStream,
    k: usize,
    count: usize,
) -> Result<Vec<WeightVector>, AggregateError> {
    let mut rng = stream.rng();
    (0..count)
        .map(|_| sample_simplex_with(&mut rng, k))
        .collect()
}

/// A nonempty list of finite scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample(Vec<f64>);

impl ScoreSample {
    pub fn new(scores: Vec<f64>) -> Result<Self, AggregateError> {
        if scores.is_empty() {
            return Err(AggregateError::EmptySample);
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(AggregateError::NonFinite(i));
        }
        Ok(Self(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }
}

/// Interquartile mean: drop `floor(n/4)` scores from each end of the sorted
/// sample and average the rest.
pub fn iqm(sample: &ScoreSample) -> f64 {
    let mut sorted = sample.0.clone();
    sorted.sort_by(f64::total_cmp);
    let trim = sorted.len() / 4;
    let middle = &sorted[trim..sorted.len() - trim];
    middle.iter().sum::<f64>() / middle.len() as f64
}

/// Mean shortfall below `target`; scores above the target count as zero.
pub fn optimality_gap(sample: &ScoreSample, target: f64) -> f64 {
    let n = sample.0.len() as f64;
    sample.0.iter().map(|&s| (target - s).max(0.0)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> ScoreSample {
        ScoreSample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn iqm_examples() {
        assert_eq!(iqm(&sample(&[1.0, 2.0, 3.0, 4.0])), 2.5);
        assert_eq!(iqm(&sample(&[0.0, 0.0, 0.0, 0.0, 10.0])), 0.0);
        assert_eq!(iqm(&sample(&[0.7; 9])), 0.7);
        assert_eq!(iqm(&sample(&[3.0])), 3.0);
    }

    #[test]
    fn gap_examples() {
        assert_eq!(optimality_gap(&sample(&[1.0, 1.0]), 1.0), 0.0);
        assert_eq!(optimality_gap(&sample(&[0.5, 1.2]), 1.0), 0.25);
        assert_eq!(optimality_gap(&sample(&[0.0]), 1.0), 1.0);
    }

    #[test]
    fn empty_and_nonfinite_samples_rejected() {
        assert_eq!(ScoreSample::new(vec![]), Err(AggregateError::EmptySample));
        assert_eq!(
            ScoreSample::new(vec![1.0, f64::NAN]),
            Err(AggregateError::NonFinite(1))
        );
    }

    #[test]
    fn simplex_k1_is_one() {
        for id in 0..10 {
            let w = sample_simplex(RandomStream::new(3, id), 1).unwrap();
            assert_eq!(w.as_slice(), &[1.0]);
        }
        assert_eq!(
            sample_simplex(RandomStream::new(0, 0), 0),
            Err(AggregateError::ZeroDimension)
        );
    }

    #[test]
    fn simplex_k3_on_simplex() {
        let ws = sample_simplex_many(RandomStream::new(11, 2), 3, 1000).unwrap();
        for w in ws {
            assert!(w.as_slice().iter().all(|&x| x >= 0.0));
            assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_k2_mean_half() {
        let ws = sample_simplex_many(RandomStream::new(5, 9), 2, 1_000_000).unwrap();
        let mean = ws.iter().map(|w| w.as_slice()[0]).sum::<f64>() / ws.len() as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn streams_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = RandomStream::new(1, 7).rng();
            (0..8).map(|_| r.gen()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RandomStream::new(1, 7).rng();
            (0..8).map(|_| r.gen()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RandomStream::new(1, 8).rng();
            (0..8).map(|_| r.gen()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        let s = RandomStream::new(1, 7);
        assert_eq!(s.derive(3), s.derive(3));
        assert_ne!(s.derive(3), s.derive(4));
    }
}
