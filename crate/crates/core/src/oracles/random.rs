//! Seeded random instances for property runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::simplex::{ScoreVector, SimplexPoint, Temperature};

pub const DIMENSIONS: [usize; 5] = [2, 3, 8, 64, 1000];
pub const SCORE_RANGE: f64 = 3.0;
pub const TEMPERATURE_RANGE: (f64, f64) = (0.25, 4.0);

#[derive(Debug, Clone)]
pub struct InstanceGenerator {
    seed: u64,
    rng: ChaCha8Rng,
}

impl InstanceGenerator {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&mut self) -> usize {
        *DIMENSIONS.choose(&mut self.rng).expect("nonempty")
    }

    pub fn dimension_from(&mut self, choices: &[usize]) -> usize {
        *choices.choose(&mut self.rng).expect("nonempty choice list")
    }

    /// I.i.d. uniform on `[−3, 3]`.
    pub fn scores(&mut self, dim: usize) -> ScoreVector {
        let v = (0..dim)
            .map(|_| self.rng.gen_range(-SCORE_RANGE..=SCORE_RANGE))
            .collect();
        ScoreVector::new(v).expect("finite scores")
    }

    /// Log-uniform on `[0.25, 4]`.
    pub fn temperature(&mut self) -> Temperature {
        let (lo, hi) = TEMPERATURE_RANGE;
        let v = self.rng.gen_range(lo.ln()..=hi.ln()).exp();
        Temperature::new(v).expect("positive")
    }

    /// Uniform on the simplex (flat Dirichlet), strictly interior.
    pub fn interior_point(&mut self, dim: usize) -> SimplexPoint {
        let w: Vec<f64> = (0..dim)
            .map(|_| -(1.0 - self.rng.gen::<f64>()).ln() + 1e-12)
            .collect();
        let total: f64 = w.iter().sum();
        SimplexPoint::new(w.into_iter().map(|x| x / total).collect()).expect("normalized")
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..=hi)
    }

    pub fn index(&mut self, bound: usize) -> usize {
        self.rng.gen_range(0..bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instances() {
        let mut a = InstanceGenerator::new(9);
        let mut b = InstanceGenerator::new(9);
        for _ in 0..5 {
            let v = a.dimension();
            assert_eq!(v, b.dimension());
            assert_eq!(a.scores(v), b.scores(v));
            assert_eq!(a.interior_point(v), b.interior_point(v));
            assert_eq!(a.temperature(), b.temperature());
        }
    }

    #[test]
    fn instances_respect_ranges() {
        let mut g = InstanceGenerator::new(1);
        for _ in 0..50 {
            let s = g.scores(8);
            assert!(s.values().iter().all(|v| v.abs() <= SCORE_RANGE));
            let t = g.temperature().value();
            assert!((0.25..=4.0).contains(&t));
            assert!(g.interior_point(8).is_interior());
        }
    }
}
