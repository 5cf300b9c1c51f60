//! Noise sources and the replica seed-splitting rule.
//!
//! Every replica owns a `ChaCha8Rng` seeded with
//! `replica_seed(master, replica) = splitmix64(master ^ splitmix64(replica + 1))`.
//! The mapping depends only on the pair (master, replica), so parallel and
//! serial schedules consume identical streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type ReplicaRng = ChaCha8Rng;

/// One round of the SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replica `replica` under master seed `master`.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    splitmix64(master ^ splitmix64(replica.wrapping_add(1)))
}

pub fn replica_rng(master: u64, replica: u64) -> ReplicaRng {
    ChaCha8Rng::seed_from_u64(replica_seed(master, replica))
}

/// A stream of independent standard normal draws.
///
/// The Fournier and environmental steps request exactly one block per step,
/// which lets wrappers such as [`Coarsened`] remap blocks between time
/// resolutions. The FGM step requests one block per particle row.
pub trait NoiseSource {
    fn fill_normal(&mut self, out: &mut [f64]);
}

impl<R: Rng> NoiseSource for R {
    fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.sample(StandardNormal);
        }
    }
}

/// Always returns zeros: drift-only integration.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill_normal(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Replays a fixed sequence of draws, cycling when exhausted.
#[derive(Debug, Clone)]
pub struct Replay {
    draws: Vec<f64>,
    pos: usize,
}

impl Replay {
    pub fn new(draws: Vec<f64>) -> Self {
        assert!(!draws.is_empty(), "replay needs at least one draw");
        Replay { draws, pos: 0 }
    }
}

impl NoiseSource for Replay {
    fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.draws[self.pos];
            self.pos = (self.pos + 1) % self.draws.len();
        }
    }
}

/// Brownian increments of a coarse step built from `factor` fine blocks.
///
/// Each requested block is the normalized sum of `factor` consecutive
/// blocks of the inner source, so a run with step `factor * dt` sees the
/// same Brownian path as a run with step `dt` on the inner source.
#[derive(Debug, Clone)]
pub struct Coarsened<S> {
    inner: S,
    factor: usize,
    buf: Vec<f64>,
}

impl<S: NoiseSource> Coarsened<S> {
    pub fn new(inner: S, factor: usize) -> Self {
        assert!(factor >= 1);
        Coarsened { inner, factor, buf: Vec::new() }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: NoiseSource> NoiseSource for Coarsened<S> {
    fn fill_normal(&mut self, out: &mut [f64]) {
        if self.factor == 1 {
            self.inner.fill_normal(out);
            return;
        }
        out.fill(0.0);
        self.buf.resize(out.len(), 0.0);
        for _ in 0..self.factor {
            self.inner.fill_normal(&mut self.buf);
            for (o, b) in out.iter_mut().zip(&self.buf) {
                *o += b;
            }
        }
        let norm = 1.0 / (self.factor as f64).sqrt();
        for o in out.iter_mut() {
            *o *= norm;
        }
    }
}
