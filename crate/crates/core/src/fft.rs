//! Small 2-D / row-wise FFT helpers over `ndarray` grids.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::num::Real;

/// Transforms every row of `grid` in place. Unnormalized in both directions.
pub(crate) fn fft_rows<T: Real>(grid: &mut Array2<Complex<T>>, direction: FftDirection) {
    let width = grid.ncols();
    if width == 0 {
        return;
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft(width, direction);
    if !grid.is_standard_layout() {
        *grid = grid.as_standard_layout().to_owned();
    }
    let buf = grid.as_slice_mut().expect("standard layout");
    fft.process(buf);
}

/// Full 2-D transform in place. Unnormalized in both directions.
pub(crate) fn fft2<T: Real>(grid: &mut Array2<Complex<T>>, direction: FftDirection) {
    fft_rows(grid, direction);
    let mut t = grid.t().as_standard_layout().to_owned();
    fft_rows(&mut t, direction);
    *grid = t.t().as_standard_layout().to_owned();
}

pub(crate) fn to_complex<T: Real>(grid: &Array2<T>) -> Array2<Complex<T>> {
    grid.mapv(|v| Complex::new(v, T::zero()))
}

/// Signed frequency index of DFT bin `k` for length `n`, in cycles per sample.
pub(crate) fn bin_frequency(k: usize, n: usize) -> f64 {
    let signed = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    signed / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let g = Array2::from_shape_fn((4, 8), |(r, c)| (r * 8 + c) as f64 * 0.5 - 3.0);
        let mut z = to_complex(&g);
        fft2(&mut z, FftDirection::Forward);
        fft2(&mut z, FftDirection::Inverse);
        for (a, b) in z.iter().zip(g.iter()) {
            assert!((a.re / 32.0 - b).abs() < 1e-12);
            assert!(a.im.abs() < 1e-9);
        }
    }

    #[test]
    fn bin_frequencies_are_signed() {
        assert_eq!(bin_frequency(0, 8), 0.0);
        assert_eq!(bin_frequency(4, 8), 0.5);
        assert_eq!(bin_frequency(5, 8), -0.375);
    }
}
