#![allow(dead_code)]

use gsvgd::linalg::{random_spd, GaussianParams, Mat, RngSeed, SimRng, SpdMatrix, SymMatrix, Vector};
use gsvgd::targets::GaussianTarget;
use rand::Rng;

pub fn spectrum(d: usize, lo: f64, hi: f64, rng: &mut SimRng) -> Vec<f64> {
    (0..d).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
}

pub fn spd(d: usize, rng: &mut SimRng) -> SpdMatrix {
    let vals = spectrum(d, 0.2, 3.0, rng);
    random_spd(&vals, rng).unwrap()
}

pub fn vector(d: usize, scale: f64, rng: &mut SimRng) -> Vector {
    Vector::from_fn(d, |_, _| scale * (2.0 * rng.gen::<f64>() - 1.0))
}

pub fn sym(d: usize, rng: &mut SimRng) -> SymMatrix {
    SymMatrix::symmetrized(&Mat::from_fn(d, d, |_, _| 2.0 * rng.gen::<f64>() - 1.0))
}

pub fn theta(d: usize, rng: &mut SimRng) -> GaussianParams {
    GaussianParams::new(vector(d, 1.0, rng), spd(d, rng)).unwrap()
}

pub fn gaussian_target(d: usize, rng: &mut SimRng) -> GaussianTarget {
    GaussianTarget::new(vector(d, 1.0, rng), spd(d, rng)).unwrap()
}

pub fn rng(seed: u64) -> SimRng {
    RngSeed(seed).rng()
}

pub fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
