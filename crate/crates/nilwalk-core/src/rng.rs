//! Counter-based pseudo-random numbers.
//!
//! Every draw is a pure function of (master seed, stream, counter), so Monte
//! Carlo results are bit-identical regardless of execution order or thread
//! schedule.  The mixer is the SplitMix64 finalizer applied to a keyed
//! combination of the inputs; statistical quality is more than enough for
//! ensemble averages at desk scale.

#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
    counter: u64,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl CounterRng {
    /// Stream ids are hashed together, so (trial, step) pairs get
    /// independent streams.
    pub fn new(seed: u64, stream_parts: &[u64]) -> Self {
        let mut stream = 0x9e3779b97f4a7c15u64;
        for &p in stream_parts {
            stream = mix(stream ^ p.wrapping_mul(0xd1342543de82ef95));
        }
        CounterRng { seed, stream, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.seed ^ mix(self.stream.wrapping_add(self.counter.wrapping_mul(0xa0761d6478bd642f))));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in 0..n.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // rejection-free scaling is fine at desk scale
        (self.next_f64() * n as f64) as usize % n
    }

    /// Sample an index from a cumulative weight table (weights sum to 1).
    pub fn sample_cumulative(&mut self, cumulative: &[f64]) -> usize {
        let u = self.next_f64();
        match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(i) => (i + 1).min(cumulative.len() - 1),
            Err(i) => i.min(cumulative.len() - 1),
        }
    }
}
