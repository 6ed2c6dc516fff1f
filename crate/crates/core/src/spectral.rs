//! Synthesis and analysis of 2-D noise with power spectrum `C / f^beta`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, fft2, fft_rows, to_complex};
use crate::num::Real;

/// Parameters of a square `1/f^beta` noise patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub beta: f64,
    /// Spectral constant `C`; irrelevant after unit-variance normalization but kept for provenance.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub size: usize,
    pub seed: u64,
}

fn default_amplitude() -> f64 {
    1.0
}

impl SpectrumSpec {
    pub const DEFAULT_SIZE: usize = 128;

    pub fn new(beta: f64, size: usize, seed: u64) -> Self {
        Self {
            beta,
            amplitude: 1.0,
            size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || !(0.0..3.0).contains(&self.beta) {
            return Err(Error::param(format!(
                "beta must lie in [0, 3), got {}",
                self.beta
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::param(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if self.size < 8 || !self.size.is_power_of_two() {
            return Err(Error::param(format!(
                "patch size must be a power of two >= 8, got {}",
                self.size
            )));
        }
        Ok(())
    }
}

/// A synthesized noise patch: zero mean, unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePatch<T> {
    pub values: Array2<T>,
    pub spec: SpectrumSpec,
}

impl<T: Real> NoisePatch<T> {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

/// Horizontal autocorrelation of a low-passed patch, averaged over rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrelationProfile<T> {
    pub lags: Vec<i64>,
    pub values: Vec<T>,
    pub cutoff_sigma: f64,
}

impl<T: Real> AutocorrelationProfile<T> {
    pub fn at(&self, lag: i64) -> Option<T> {
        let first = *self.lags.first()?;
        let idx = lag.checked_sub(first)?;
        self.values.get(usize::try_from(idx).ok()?).copied()
    }
}

/// Generates a patch whose power spectrum falls off as `f^-beta`.
///
/// A complex Gaussian spectrum is shaped by `f^(-beta/2)` over radial frequency with the DC
/// bin zeroed; the real part of the inverse transform is rescaled to zero mean and unit
/// variance. The result depends only on `spec`.
pub fn generate_patch<T: Real>(spec: &SpectrumSpec) -> Result<NoisePatch<T>> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gain = spec.amplitude.sqrt();
    let mut spectrum = Array2::from_shape_fn((n, n), |_| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex::new(T::lit(re), T::lit(im))
    });
    for ((ky, kx), bin) in spectrum.indexed_iter_mut() {
        let f = bin_frequency(kx, n).hypot(bin_frequency(ky, n));
        let shape = if f == 0.0 {
            0.0
        } else {
            gain * f.powf(-spec.beta / 2.0)
        };
        *bin = *bin * T::lit(shape);
    }
    fft2(&mut spectrum, FftDirection::Inverse);
    let values = standardize(spectrum.mapv(|z| z.re))?;
    Ok(NoisePatch {
        values,
        spec: *spec,
    })
}

/// Rescales a grid to zero mean and unit (population) variance.
pub(crate) fn standardize<T: Real>(mut grid: Array2<T>) -> Result<Array2<T>> {
    let (mean, var) = mean_var(&grid);
    if !(var > T::zero()) {
        return Err(Error::Degenerate("grid has zero variance".into()));
    }
    let sd = var.sqrt();
    grid.mapv_inplace(|v| (v - mean) / sd);
    // second pass removes the residual rounding in the mean
    let (mean, _) = mean_var(&grid);
    grid.mapv_inplace(|v| v - mean);
    Ok(grid)
}

pub(crate) fn mean_var<T: Real>(grid: &Array2<T>) -> (T, T) {
    let n = T::of_usize(grid.len().max(1));
    let mean = grid.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = grid
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
        / n;
    (mean, var)
}

/// Squared magnitude of the unnormalized 2-D DFT.
pub fn power_spectrum<T: Real>(grid: &Array2<T>) -> Array2<T> {
    let mut z = to_complex(grid);
    fft2(&mut z, FftDirection::Forward);
    z.mapv(|c| c.norm_sqr())
}

/// One ring of the radially averaged periodogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBin {
    /// Integer ring index (radius rounded to the nearest integer).
    pub ring: usize,
    /// Mean radius of the frequency bins in the ring, in cycles per patch.
    pub radius: f64,
    pub power: f64,
}

/// Radially averaged periodogram over rings `1..=max_radius`.
pub fn radial_periodogram<T: Real>(grid: &Array2<T>, max_radius: usize) -> Vec<RadialBin> {
    let (h, w) = grid.dim();
    let (mean, _) = mean_var(grid);
    let centered = grid.mapv(|v| v - mean);
    let power = power_spectrum(&centered);
    let mut sums = vec![0.0f64; max_radius + 1];
    let mut radii = vec![0.0f64; max_radius + 1];
    let mut counts = vec![0usize; max_radius + 1];
    for ((ky, kx), p) in power.indexed_iter() {
        let fx = bin_frequency(kx, w) * w as f64;
        let fy = bin_frequency(ky, h) * h as f64;
        let rho = fx.hypot(fy);
        let r = rho.round() as usize;
        if (1..=max_radius).contains(&r) {
            sums[r] += p.as_f64();
            radii[r] += rho;
            counts[r] += 1;
        }
    }
    (1..=max_radius)
        .filter(|&r| counts[r] > 0)
        .map(|r| RadialBin {
            ring: r,
            radius: radii[r] / counts[r] as f64,
            power: sums[r] / counts[r] as f64,
        })
        .collect()
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Estimates the spectral exponent of a patch.
///
/// Negated least-squares slope of log radially averaged periodogram against log mean ring
/// radius, using rings `1..=n/4` (DC and the highest octave are excluded).
pub fn estimate_beta<T: Real>(patch: &NoisePatch<T>) -> Result<f64> {
    estimate_beta_grid(&patch.values)
}

pub fn estimate_beta_grid<T: Real>(grid: &Array2<T>) -> Result<f64> {
    let (h, w) = grid.dim();
    if h != w || w < 32 {
        return Err(Error::param(format!(
            "beta estimation needs a square patch >= 32, got {w}x{h}"
        )));
    }
    let (_, var) = mean_var(grid);
    if !(var > T::zero()) {
        return Err(Error::Degenerate("constant patch has no spectrum".into()));
    }
    let bins = radial_periodogram(grid, w / 4);
    if bins.iter().any(|b| !(b.power > 0.0)) {
        return Err(Error::Degenerate("empty periodogram bin".into()));
    }
    let xs: Vec<f64> = bins.iter().map(|b| b.radius.ln()).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.power.ln()).collect();
    Ok(-ls_slope(&xs, &ys))
}

/// Nearest-neighbor 2x upsampling: each value becomes a 2x2 block.
pub fn upsample2<T: Real>(grid: &Array2<T>) -> Array2<T> {
    let (h, w) = grid.dim();
    Array2::from_shape_fn((2 * h, 2 * w), |(r, c)| grid[[r / 2, c / 2]])
}

/// Mean over non-overlapping 2x2 blocks; inverse of [`upsample2`].
pub fn block_mean2<T: Real>(grid: &Array2<T>) -> Array2<T> {
    let (h, w) = grid.dim();
    let quarter = T::lit(0.25);
    Array2::from_shape_fn((h / 2, w / 2), |(r, c)| {
        (grid[[2 * r, 2 * c]]
            + grid[[2 * r, 2 * c + 1]]
            + grid[[2 * r + 1, 2 * c]]
            + grid[[2 * r + 1, 2 * c + 1]])
            * quarter
    })
}

/// Zeroes every 2-D frequency bin with radial frequency above `1/sigma` cycles per pixel.
pub fn lowpass_radial<T: Real>(grid: &Array2<T>, cutoff_sigma: f64) -> Array2<T> {
    let (h, w) = grid.dim();
    let f0 = 1.0 / cutoff_sigma;
    let mut z = to_complex(grid);
    fft2(&mut z, FftDirection::Forward);
    for ((ky, kx), bin) in z.indexed_iter_mut() {
        if bin_frequency(kx, w).hypot(bin_frequency(ky, h)) > f0 {
            *bin = Complex::new(T::zero(), T::zero());
        }
    }
    fft2(&mut z, FftDirection::Inverse);
    let scale = T::of_usize(h * w);
    z.mapv(|c| c.re / scale)
}

/// Mean horizontal power spectrum per row: `mean_rows |G(k)|^2 / n^2` for `k in 0..n`.
pub(crate) fn row_power<T: Real>(grid: &Array2<T>) -> Vec<T> {
    let (h, w) = grid.dim();
    let mut z = to_complex(grid);
    fft_rows(&mut z, FftDirection::Forward);
    let norm = T::of_usize(h) * T::of_usize(w) * T::of_usize(w);
    (0..w)
        .map(|k| z.column(k).iter().fold(T::zero(), |a, c| a + c.norm_sqr()) / norm)
        .collect()
}

/// Circular horizontal autocorrelation averaged over rows, `R(tau)` for `tau in 0..n`.
/// Computed through the row power spectrum (Wiener-Khinchin).
pub(crate) fn row_autocorrelation<T: Real>(grid: &Array2<T>) -> Vec<T> {
    let power = row_power(grid);
    let mut z: Vec<Complex<T>> = power.iter().map(|&p| Complex::new(p, T::zero())).collect();
    let mut planner = rustfft::FftPlanner::new();
    planner
        .plan_fft(z.len(), FftDirection::Inverse)
        .process(&mut z);
    z.into_iter().map(|c| c.re).collect()
}

/// Autocorrelation profile of `patch` after a hard radial low-pass at `f0 = 1/cutoff_sigma`.
///
/// The filtered signal is centered, so `R(0)` is its variance. Lags run over `-n/2..=n/2`
/// with circular wrap, which makes the profile exactly even.
pub fn autocorrelation<T: Real>(
    patch: &NoisePatch<T>,
    cutoff_sigma: f64,
) -> Result<AutocorrelationProfile<T>> {
    let n = patch.size();
    if !cutoff_sigma.is_finite() || cutoff_sigma < 1.0 {
        return Err(Error::param(format!(
            "cutoff sigma must be >= 1 pixel, got {cutoff_sigma}"
        )));
    }
    if cutoff_sigma > n as f64 {
        return Err(Error::param(format!(
            "cutoff sigma {cutoff_sigma} exceeds the patch extent {n}"
        )));
    }
    let filtered = lowpass_radial(&patch.values, cutoff_sigma);
    let (mean, _) = mean_var(&filtered);
    let centered = filtered.mapv(|v| v - mean);
    let circ = row_autocorrelation(&centered);
    let half = (n / 2) as i64;
    let lags: Vec<i64> = (-half..=half).collect();
    let values = lags
        .iter()
        .map(|&l| {
            let i = l.rem_euclid(n as i64) as usize;
            // average the two estimates of an even function
            let j = (n - i) % n;
            (circ[i] + circ[j]) * T::lit(0.5)
        })
        .collect();
    Ok(AutocorrelationProfile {
        lags,
        values,
        cutoff_sigma,
    })
}
