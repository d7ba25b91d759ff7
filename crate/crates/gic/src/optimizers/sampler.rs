use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Draws single-feature perturbations: a uniformly chosen direct feature `q`
/// and a zero-mean normal step scaled by that feature's training standard
/// deviation.
///
/// The sampler owns the run's random stream; every other random decision of
/// an optimizer run (shuffles, crossover points, selection) draws from it too.
#[derive(Clone, Debug)]
pub struct PerturbationSampler {
    rng: ChaCha8Rng,
    scales: Vec<f64>,
}

impl PerturbationSampler {
    /// Scales below `floor` are raised to it.
    pub fn new(scales: &[f64], floor: f64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scales: scales.iter().map(|s| s.max(floor)).collect(),
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn sample(&mut self) -> (usize, f64) {
        let q = self.rng.random_range(0..self.scales.len());
        let b: f64 = self.rng.sample(StandardNormal);
        (q, b * self.scales[q])
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
