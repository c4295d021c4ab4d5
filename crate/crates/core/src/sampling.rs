//! Seeded random draws: complex Gaussians, Haar-uniform unit vectors,
//! random low-rank PSD matrices and uniform noise in a Euclidean ball.
//!
//! Every trial gets its own ChaCha stream keyed by `(seed, n, trial)`, so
//! results do not depend on the order in which trials are executed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::hermitian::{HermitianMatrix, C64};

/// Independent stream for trial `trial` at dimension `n`.
pub fn trial_rng(seed: u64, n: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | (trial as u64 & 0xffff_ffff));
    rng
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard complex Gaussian, `E|z|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(h * gaussian(rng), h * gaussian(rng))
}

pub fn vector_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Uniform on the complex unit sphere of `C^n`.
pub fn haar_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        let s = vector_norm(&v);
        if s > 0.0 {
            return v.into_iter().map(|z| z / s).collect();
        }
    }
}

/// `VV*` with `V` an `n × rank` standard complex Gaussian matrix, optionally
/// scaled to unit trace.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rank: usize, normalize_trace: bool, rng: &mut R) -> HermitianMatrix {
    let mut x = HermitianMatrix::zeros(n);
    for _ in 0..rank {
        let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        x.axpy(1.0, &HermitianMatrix::outer(&v));
    }
    let t = x.trace();
    if normalize_trace && t > 0.0 {
        x = x.scale(1.0 / t);
    }
    x
}

/// Uniform point in the closed unit ball of `R^m`: Gaussian direction with
/// radius `U^{1/m}`.
pub fn unit_ball_point<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let dir: Vec<f64> = loop {
        let d: Vec<f64> = (0..m).map(|_| gaussian(rng)).collect();
        if d.iter().any(|x| *x != 0.0) {
            break d;
        }
    };
    let s = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let radius = rng.random::<f64>().powf(1.0 / m as f64);
    dir.into_iter().map(|x| x * radius / s).collect()
}

/// Uniform point in the ball of radius `eps`.
pub fn ball_noise<R: Rng + ?Sized>(m: usize, eps: f64, rng: &mut R) -> Vec<f64> {
    unit_ball_point(m, rng).into_iter().map(|x| x * eps).collect()
}
