//! Stationary Gaussian fields on a periodic lattice by circulant embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::Grid;

/// In-place multidimensional FFT of a row-major `n^d` array.
fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        for start in 0..total {
            if (start / stride) % n != 0 {
                continue;
            }
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = data[start + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[start + i * stride] = *v;
            }
        }
    }
}

/// Unit-variance Gaussian field with covariance `exp(-|x - y|^2 / (2 l^2))`
/// (distance taken on the torus) on the half-step lattice of `grid`: `2n`
/// points per axis at spacing `h / 2`, starting at the grid origin. Returned
/// in row-major order.
pub fn sample_half_step_field(grid: &Grid, correlation_length: f64, seed: u64) -> Vec<f64> {
    let d = grid.dim();
    let n = 2 * grid.n();
    let step = 0.5 * grid.h();
    let side = grid.side();
    let total = n.pow(d as u32);

    let mut cov = vec![Complex64::new(0.0, 0.0); total];
    for (idx, c) in cov.iter_mut().enumerate() {
        let mut rem = idx;
        let mut r2 = 0.0;
        for _ in 0..d {
            let i = rem % n;
            rem /= n;
            let x = i as f64 * step;
            let x = x.min(side - x);
            r2 += x * x;
        }
        *c = Complex64::new((-r2 / (2.0 * correlation_length * correlation_length)).exp(), 0.0);
    }
    fft_nd(&mut cov, n, d, false);
    let negative = cov.iter().map(|c| c.re).fold(0.0f64, f64::min);
    if negative < -1e-8 * cov[0].re.abs() {
        log::warn!("circulant embedding has negative eigenvalue {negative:.3e}; clipped to zero");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<Complex64> = cov
        .iter()
        .map(|lam| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * (lam.re.max(0.0) / total as f64).sqrt()
        })
        .collect();
    fft_nd(&mut z, n, d, false);
    z.into_iter().map(|c| c.re).collect()
}
