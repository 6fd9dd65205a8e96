//! Seeded randomness. Every random quantity of a run derives from one of these.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{ComplexMatrix, ComplexScalar};

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform point on the unit circle.
    pub fn unit_circle(&mut self) -> ComplexScalar {
        ComplexScalar::from_polar(1.0, TAU * self.uniform())
    }

    /// Complex standard Gaussian (independent real and imaginary parts).
    pub fn complex_gaussian(&mut self) -> ComplexScalar {
        ComplexScalar::new(self.normal(), self.normal())
    }

    pub fn gaussian_vector(&mut self, n: usize) -> Vec<ComplexScalar> {
        (0..n).map(|_| self.complex_gaussian()).collect()
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        let data = self.gaussian_vector(rows * cols);
        ComplexMatrix::from_vec(rows, cols, data).expect("sized data")
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}
