//! Seeded source and agent simulation.
//!
//! ChaCha20 (rand_chacha 0.3) seeded from the 64-bit master seed; stream 0
//! drives the source and stream `i + 1` drives agent `i`, so adding an agent
//! never perturbs the others.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{UnreliabilityVector, VerdictVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamSample {
    pub t: u64,
    /// Hidden source label.
    pub s: i8,
    pub r: VerdictVector,
}

/// Infinite stream of samples `t = 1, 2, ...`.
#[derive(Debug, Clone)]
pub struct StreamSimulator {
    pi: Vec<f64>,
    source: ChaCha20Rng,
    agents: Vec<ChaCha20Rng>,
    t: u64,
}

impl StreamSimulator {
    pub fn new(pi: &UnreliabilityVector, seed: u64) -> Result<Self> {
        pi.require_interior()?;
        let stream = |k: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Ok(Self {
            pi: pi.values().to_vec(),
            source: stream(0),
            agents: (1..=pi.len() as u64).map(stream).collect(),
            t: 0,
        })
    }
}

impl Iterator for StreamSimulator {
    type Item = StreamSample;

    fn next(&mut self) -> Option<StreamSample> {
        self.t += 1;
        let s: i8 = if self.source.gen::<bool>() { 1 } else { -1 };
        let r = self
            .pi
            .iter()
            .zip(&mut self.agents)
            .map(|(&p, rng)| if rng.gen::<f64>() < p { -s } else { s })
            .collect();
        Some(StreamSample {
            t: self.t,
            s,
            r: VerdictVector::new(r).expect("entries are ±1"),
        })
    }
}

/// The first `horizon` samples of the stream for `(π, seed)`.
pub fn simulate_stream(pi: &UnreliabilityVector, horizon: u64, seed: u64) -> Result<impl Iterator<Item = StreamSample>> {
    Ok(StreamSimulator::new(pi, seed)?.take(horizon as usize))
}

/// One round `(s, r)` drawn from a caller-supplied generator.
pub fn sample_round<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> (i8, VerdictVector) {
    let s: i8 = if rng.gen::<bool>() { 1 } else { -1 };
    let r = pi.iter().map(|&p| if rng.gen::<f64>() < p { -s } else { s }).collect();
    (s, VerdictVector::new(r).expect("entries are ±1"))
}

/// CSV `t,s,r_1..r_n`.
pub fn write_stream_csv<W: Write>(mut w: W, n: usize, samples: impl Iterator<Item = StreamSample>) -> io::Result<()> {
    let mut header = vec!["t".to_string(), "s".to_string()];
    header.extend((1..=n).map(|i| format!("r_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for sample in samples {
        write!(w, "{},{}", sample.t, sample.s)?;
        for v in sample.r.as_slice() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
