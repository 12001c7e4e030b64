//! Reproducible Brownian paths with dyadic coarse-graining.
//!
//! A path is a pure function of `(seed, sample_index, horizon, fine_steps)`.
//! The sampler is `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `sample_index`, so every sample owns an independent counter-based stream
//! and samples can be generated in any order or in parallel. Standard
//! normals are drawn with the ziggurat method of `rand_distr::StandardNormal`
//! and scaled by `sqrt(horizon / fine_steps)`.
//!
//! Coarse increments are built by pairwise tree summation: level `r + 1` is
//! `level_r[2n] + level_r[2n + 1]`. Coarsening through any intermediate
//! dyadic level therefore performs the exact same floating-point additions,
//! which is what couples every step size to the same path bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    horizon: f64,
    seed: u64,
    sample_index: u64,
    increments: Vec<f64>,
}

impl BrownianPath {
    pub fn generate(seed: u64, sample_index: u64, horizon: f64, fine_steps: usize) -> Result<Self> {
        if fine_steps == 0 || !fine_steps.is_power_of_two() {
            return Err(Error::config(format!(
                "number of fine steps must be a power of two, got {fine_steps}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample_index);
        let scale = (horizon / fine_steps as f64).sqrt();
        let increments = (0..fine_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Ok(BrownianPath {
            horizon,
            seed,
            sample_index,
            increments,
        })
    }

    /// Wraps externally supplied increments (e.g. a replayed path dump).
    pub fn from_increments(seed: u64, sample_index: u64, horizon: f64, increments: Vec<f64>) -> Result<Self> {
        if increments.is_empty() || !increments.len().is_power_of_two() {
            return Err(Error::config(format!(
                "number of fine steps must be a power of two, got {}",
                increments.len()
            )));
        }
        Ok(BrownianPath {
            horizon,
            seed,
            sample_index,
            increments,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn fine_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn fine_step(&self) -> f64 {
        self.horizon / self.increments.len() as f64
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increments over `coarse_steps` equal intervals, by tree summation.
    pub fn coarse_increments(&self, coarse_steps: usize) -> Result<Vec<f64>> {
        coarsen(&self.increments, coarse_steps)
    }

    /// `β(T) - β(0)`, the single-interval coarse increment.
    pub fn terminal_value(&self) -> f64 {
        coarsen(&self.increments, 1).expect("one interval always divides")[0]
    }
}

/// Pairwise-sums `increments` down to `coarse_steps` entries.
pub fn coarsen(increments: &[f64], coarse_steps: usize) -> Result<Vec<f64>> {
    let fine = increments.len();
    if coarse_steps == 0
        || !coarse_steps.is_power_of_two()
        || !fine.is_power_of_two()
        || coarse_steps > fine
    {
        return Err(Error::config(format!(
            "{coarse_steps} coarse steps do not dyadically divide {fine} fine steps"
        )));
    }
    let mut level = increments.to_vec();
    while level.len() > coarse_steps {
        level = level.chunks_exact(2).map(|p| p[0] + p[1]).collect();
    }
    Ok(level)
}

/// `χ_n = Δβ_n / √τ`, the increment normalized to unit variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedIncrement(pub f64);

impl NormalizedIncrement {
    pub fn from_increment(dbeta: f64, tau: f64) -> Self {
        NormalizedIncrement(dbeta / tau.sqrt())
    }

    pub fn increment(self, tau: f64) -> f64 {
        self.0 * tau.sqrt()
    }
}
