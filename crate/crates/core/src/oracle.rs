//! Seeded sampling and the stochastic, possibly stale, gradient oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::ProblemSpec;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream owned by `worker` under `master`.
pub fn stream_seed(master: u64, worker: u64) -> u64 {
    mix64(master ^ worker.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Source of samples `Z ∈ R^d`.
pub trait Sampler: Send {
    fn sample_into(&mut self, out: &mut [f64]);
}

/// Independent `N(z̄_i, σ² I)` draws on a ChaCha8 stream.
///
/// Normal variates use the ziggurat sampler of `rand_distr::StandardNormal`.
#[derive(Debug, Clone)]
pub struct SampleStream {
    seed: u64,
    worker: usize,
    mean: Vec<f64>,
    sd: f64,
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(master_seed: u64, worker: usize, mean: Vec<f64>, sd: f64) -> Self {
        let seed = stream_seed(master_seed, worker as u64);
        Self {
            seed,
            worker,
            mean,
            sd,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Streams for every worker of `spec`.
    pub fn for_spec(spec: &ProblemSpec, master_seed: u64) -> Vec<Self> {
        spec.means()
            .iter()
            .enumerate()
            .map(|(i, z)| Self::new(master_seed, i, z.clone(), spec.noise_sd()))
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn worker(&self) -> usize {
        self.worker
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

impl Sampler for SampleStream {
    fn sample_into(&mut self, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.mean) {
            let e: f64 = self.rng.sample(StandardNormal);
            *o = m + self.sd * e;
        }
    }
}

/// Next scalar draw of the first coordinate's distribution.
pub fn sample(stream: &mut SampleStream) -> f64 {
    let mut out = vec![0.0; stream.dim()];
    stream.sample_into(&mut out);
    out[0]
}

pub fn sample_vector(stream: &mut impl Sampler, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    stream.sample_into(&mut out);
    out
}

/// `∇ℓ_i(θ_i; z) = 2(θ_i − z)`.
pub fn stoch_grad_loss(theta_i: &[f64], z: &[f64]) -> Vec<f64> {
    theta_i.iter().zip(z).map(|(t, s)| 2.0 * (t - s)).collect()
}

/// Broadcast dual correction held in a worker inbox.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedDualTerm {
    /// `s (J g(b̄)) λ`.
    pub payload: Vec<f64>,
    /// Iteration index of the `λ` the payload was formed from; `None` for the
    /// initial zero term.
    pub issued_at: Option<u64>,
    /// Tick the payload reached the inbox.
    pub deliver_at: u64,
}

impl DelayedDualTerm {
    /// Zero payload held before the first broadcast arrives.
    pub fn initial(d: usize) -> Self {
        Self {
            payload: vec![0.0; d],
            issued_at: None,
            deliver_at: 0,
        }
    }
}

/// `∇ℓ_i(θ_i; z) + payload`.
pub fn delayed_primal_gradient(theta_i: &[f64], z: &[f64], inbox: &DelayedDualTerm) -> Vec<f64> {
    let mut g = stoch_grad_loss(theta_i, z);
    g.iter_mut().zip(&inbox.payload).for_each(|(v, p)| *v += p);
    g
}

/// `g(b̄) − υλ` over the server buffer.
pub fn dual_gradient(spec: &ProblemSpec, buffer: &[Vec<f64>], lambda: &[f64]) -> Vec<f64> {
    let mut g = spec.constraint_value(&spec.average(buffer));
    g.iter_mut()
        .zip(lambda)
        .for_each(|(v, l)| *v -= spec.upsilon() * l);
    g
}
