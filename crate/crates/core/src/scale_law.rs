//! Ridge curvature of low-passed `1/f^beta` line processes as a function of scale.
//!
//! The matching model treats each image line as a 1-D random process. For a line spectrum
//! `S(f) = C f^-beta` low-passed at `f0 = 1/sigma`, the curvature of the autocorrelation at
//! the origin, measured in `tau/sigma` units, scales as `sigma^(beta - 1)`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, fft_rows};
use crate::num::Real;
use crate::spectral::{ls_slope, row_power, standardize, NoisePatch, SpectrumSpec};
use crate::stats::{mean, sample_variance, student_t_quantile};

/// Default line length and line count used by [`curvature_scale_law`].
pub const SCALE_LAW_SIZE: usize = 256;

/// Square grid of independent 1-D `1/f^beta` rows, standardized as a whole.
pub fn generate_lines<T: Real>(spec: &SpectrumSpec) -> Result<NoisePatch<T>> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gain = spec.amplitude.sqrt();
    let mut spectrum = Array2::from_shape_fn((n, n), |(_, kx)| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let f = bin_frequency(kx, n).abs();
        let shape = if f == 0.0 {
            0.0
        } else {
            gain * f.powf(-spec.beta / 2.0)
        };
        Complex::new(T::lit(re * shape), T::lit(im * shape))
    });
    fft_rows(&mut spectrum, FftDirection::Inverse);
    let values = standardize(spectrum.mapv(|z| z.re))?;
    Ok(NoisePatch {
        values,
        spec: *spec,
    })
}

/// Per-row low-pass: zeroes horizontal frequencies above `1/sigma`.
pub fn lowpass_rows<T: Real>(grid: &Array2<T>, cutoff_sigma: f64) -> Array2<T> {
    let w = grid.ncols();
    let f0 = 1.0 / cutoff_sigma;
    let mut z = grid.mapv(|v| Complex::new(v, T::zero()));
    fft_rows(&mut z, FftDirection::Forward);
    for ((_, kx), bin) in z.indexed_iter_mut() {
        if bin_frequency(kx, w).abs() > f0 {
            *bin = Complex::new(T::zero(), T::zero());
        }
    }
    fft_rows(&mut z, FftDirection::Inverse);
    let scale = T::of_usize(w);
    z.mapv(|c| c.re / scale)
}

/// Second derivative of the scale-normalized autocorrelation at the origin.
///
/// The line process is low-passed at `1/sigma` and `R(tau)` is evaluated from the mean row
/// spectrum, so non-integer lags are exact. The central difference uses a unit step in
/// `tau/sigma`, i.e. a lag of `sigma` pixels: `R(sigma) - 2 R(0) + R(-sigma)`.
pub fn normalized_curvature<T: Real>(lines: &Array2<T>, sigma: f64) -> f64 {
    let filtered = lowpass_rows(lines, sigma);
    let power = row_power(&filtered);
    let n = power.len();
    let r = |lag: f64| -> f64 {
        power
            .iter()
            .enumerate()
            .map(|(k, p)| {
                p.as_f64() * (2.0 * std::f64::consts::PI * bin_frequency(k, n) * lag).cos()
            })
            .sum::<f64>()
    };
    2.0 * (r(sigma) - r(0.0))
}

/// Result of fitting `|R''_sigma(0)| ~ sigma^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLawFit {
    pub beta: f64,
    pub sigmas: Vec<f64>,
    /// Seed-averaged `|R''_sigma(0)|` per sigma.
    pub curvatures: Vec<f64>,
    /// Least-squares exponent of the seed-averaged curvatures.
    pub exponent: f64,
    pub per_seed_exponents: Vec<f64>,
    /// 95% t-interval of the per-seed exponents (needs two or more seeds).
    pub ci95: Option<(f64, f64)>,
    /// Predicted exponent `beta - 1`.
    pub predicted: f64,
}

/// Fits the scale exponent of the autocorrelation curvature for `beta` over `sigmas`,
/// averaging over one `256 x 256` line ensemble per seed.
pub fn curvature_scale_law<T: Real>(
    beta: f64,
    sigmas: &[f64],
    seeds: &[u64],
) -> Result<ScaleLawFit> {
    curvature_scale_law_sized::<T>(beta, sigmas, seeds, SCALE_LAW_SIZE)
}

pub fn curvature_scale_law_sized<T: Real>(
    beta: f64,
    sigmas: &[f64],
    seeds: &[u64],
    size: usize,
) -> Result<ScaleLawFit> {
    let mut distinct = sigmas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::param(format!(
            "need at least 3 distinct sigmas, got {}",
            distinct.len()
        )));
    }
    if distinct
        .iter()
        .any(|&s| !s.is_finite() || s < 1.0 || s > size as f64)
    {
        return Err(Error::param(format!("sigmas must lie in [1, {size}]")));
    }
    if seeds.is_empty() {
        return Err(Error::param("need at least one seed"));
    }
    if beta == 3.0 {
        return Err(Error::param("the scale law is undefined at beta = 3"));
    }
    let log_sigmas: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let mut per_seed_curv = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let lines = generate_lines::<T>(&SpectrumSpec::new(beta, size, seed))?;
        let curv: Vec<f64> = sigmas
            .iter()
            .map(|&s| normalized_curvature(&lines.values, s).abs())
            .collect();
        per_seed_curv.push(curv);
    }
    let per_seed_exponents: Vec<f64> = per_seed_curv
        .iter()
        .map(|c| ls_slope(&log_sigmas, &c.iter().map(|v| v.ln()).collect::<Vec<_>>()))
        .collect();
    let curvatures: Vec<f64> = (0..sigmas.len())
        .map(|i| per_seed_curv.iter().map(|c| c[i]).sum::<f64>() / seeds.len() as f64)
        .collect();
    let exponent = ls_slope(
        &log_sigmas,
        &curvatures.iter().map(|v| v.ln()).collect::<Vec<_>>(),
    );
    let ci95 = (seeds.len() >= 2).then(|| {
        let m = mean(&per_seed_exponents);
        let se = (sample_variance(&per_seed_exponents) / seeds.len() as f64).sqrt();
        let q = student_t_quantile(0.975, (seeds.len() - 1) as f64);
        (m - q * se, m + q * se)
    });
    Ok(ScaleLawFit {
        beta,
        sigmas: sigmas.to_vec(),
        curvatures,
        exponent,
        per_seed_exponents,
        ci95,
        predicted: beta - 1.0,
    })
}
