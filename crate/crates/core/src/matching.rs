//! Matching function `Lambda(x, x~) = f(E[(I(x) - I(x~))^2])` with `f(z) = 1 / (1 + lambda z)`,
//! its basins of attraction, and the Laplacian ridge-sharpness statistic.

use std::ops::Range;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::render::Stimulus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchKernel {
    pub lambda: f64,
}

impl Default for MatchKernel {
    fn default() -> Self {
        Self { lambda: 0.001 }
    }
}

impl MatchKernel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn apply<T: Real>(&self, z: T) -> T {
        T::one() / (T::one() + T::lit(self.lambda) * z)
    }

    /// `f'(0) = -lambda`.
    pub fn slope_at_zero(&self) -> f64 {
        -self.lambda
    }
}

/// Contiguous block of image columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnWindow {
    pub start: usize,
    pub len: usize,
}

impl ColumnWindow {
    pub const DEFAULT_LEN: usize = 512;

    pub fn centered(width: usize, len: usize) -> Self {
        let len = len.min(width);
        Self {
            start: (width - len) / 2,
            len,
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSource {
    pub stimulus_id: String,
    pub rows: (usize, usize),
}

/// `Lambda` over `window x window`; `grid[[i, j]] = Lambda(start + i, start + j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSurface<T> {
    pub grid: Array2<T>,
    pub window: ColumnWindow,
    pub sources: Vec<MatchSource>,
    pub kernel: MatchKernel,
}

/// Averages squared gray differences over `rows` of every stimulus and maps them through `f`.
///
/// All stimuli must share depth map, noise exponent and geometry.
pub fn match_surface<T: Real>(
    stimuli: &[&Stimulus],
    rows: Range<usize>,
    window: ColumnWindow,
    kernel: MatchKernel,
) -> Result<MatchSurface<T>> {
    let first = stimuli
        .first()
        .ok_or_else(|| Error::param("no stimuli to match"))?;
    if rows.is_empty() {
        return Err(Error::param("empty row range"));
    }
    for s in stimuli {
        let (a, b) = (&s.provenance, &first.provenance);
        if a.depth != b.depth || a.spectrum.beta != b.spectrum.beta || a.geometry != b.geometry {
            return Err(Error::param(format!(
                "stimuli {} and {} differ in depth map, noise or geometry",
                b.id, a.id
            )));
        }
        if s.image.dim() != first.image.dim() {
            return Err(Error::param("stimuli differ in size"));
        }
        if rows.end > s.height() {
            return Err(Error::param(format!(
                "rows {rows:?} exceed image height {}",
                s.height()
            )));
        }
    }
    if rows.len() * stimuli.len() < 8 {
        return Err(Error::param("matching needs at least 8 rows in total"));
    }
    if window.len == 0 || window.end() > first.width() {
        return Err(Error::param(format!(
            "column window {window:?} outside image width {}",
            first.width()
        )));
    }

    // every averaged line, restricted to the window, on a [0, 1] gray scale
    let scale = T::lit(1.0 / 255.0);
    let lines: Vec<Vec<T>> = stimuli
        .iter()
        .flat_map(|s| {
            rows.clone().map(move |y| {
                s.image
                    .row(y)
                    .iter()
                    .skip(window.start)
                    .take(window.len)
                    .map(|&g| T::of_usize(g as usize) * scale)
                    .collect()
            })
        })
        .collect();
    let count = T::of_usize(lines.len());
    let n = window.len;
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    let msd = lines.iter().fold(T::zero(), |acc, l| {
                        let d = l[i] - l[j];
                        acc + d * d
                    }) / count;
                    kernel.apply(msd)
                })
                .collect()
        })
        .collect();
    let mut grid = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            grid[[i, i + k]] = v;
            grid[[i + k, i]] = v;
        }
    }
    let sources = stimuli
        .iter()
        .map(|s| MatchSource {
            stimulus_id: s.provenance.id.clone(),
            rows: (rows.start, rows.end),
        })
        .collect();
    Ok(MatchSurface {
        grid,
        window,
        sources,
        kernel,
    })
}

/// `Lambda` along the counter-diagonal, indexed by displacement `x~ - x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinSlice<T> {
    pub displacements: Vec<i64>,
    pub values: Vec<T>,
}

impl<T: Real> BasinSlice<T> {
    pub fn at(&self, d: i64) -> Option<T> {
        let i = self.displacements.binary_search(&d).ok()?;
        Some(self.values[i])
    }
}

/// Samples the surface across the main diagonal through its center.
///
/// Even displacements lie on the anti-diagonal `i + j = n`, odd ones on `i + j = n - 1`,
/// so every integer displacement is present.
pub fn basin_slice<T: Real>(surface: &MatchSurface<T>) -> Result<BasinSlice<T>> {
    let (rows, cols) = surface.grid.dim();
    if rows != cols {
        return Err(Error::param("basin slice needs a square surface"));
    }
    let n = rows as i64;
    let mut displacements = Vec::new();
    let mut values = Vec::new();
    for d in -(n - 1)..=(n - 1) {
        let sum = if (n - d).rem_euclid(2) == 0 { n } else { n - 1 };
        let (i, j) = ((sum - d) / 2, (sum + d) / 2);
        if (0..n).contains(&i) && (0..n).contains(&j) {
            displacements.push(d);
            values.push(surface.grid[[i as usize, j as usize]]);
        }
    }
    Ok(BasinSlice {
        displacements,
        values,
    })
}

/// Half-width at half-height of the planar basin around displacement 0.
///
/// The half-height level sits midway between the peak at 0 and the slice median; each side's
/// first crossing is linearly interpolated and the two sides are averaged.
pub fn basin_half_width<T: Real>(slice: &BasinSlice<T>) -> Option<f64> {
    let vals: Vec<f64> = slice.values.iter().map(|v| v.as_f64()).collect();
    let zero = slice.displacements.binary_search(&0).ok()?;
    let peak = vals[zero];
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let level = 0.5 * (peak + median);
    if !(peak > level) {
        return None;
    }
    let side = |step: isize| -> f64 {
        let mut prev = peak;
        let mut k = zero as isize;
        let mut dist = 0.0;
        loop {
            k += step;
            if k < 0 || k as usize >= vals.len() {
                return dist;
            }
            dist += 1.0;
            let v = vals[k as usize];
            if v < level {
                return dist - 1.0 + (prev - level) / (prev - v);
            }
            prev = v;
        }
    };
    Some(0.5 * (side(1) + side(-1)))
}

/// Laplacian ridge sharpness `2 |f'(0)| [(dI/dx)^2 + (dI/dx~)^2]` averaged over every recorded
/// link, with central differences on `[0, 1]` gray levels.
pub fn ridge_sharpness(stim: &Stimulus, kernel: MatchKernel) -> f64 {
    let width = stim.width();
    let grad = |y: usize, x: usize| -> f64 {
        (stim.image[[y, x + 1]] as f64 - stim.image[[y, x - 1]] as f64) / (2.0 * 255.0)
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for (y, pairs) in stim.links.rows.iter().enumerate() {
        for &(l, r) in pairs {
            let (l, r) = (l as usize, r as usize);
            if l == 0 || r + 1 >= width {
                continue;
            }
            let (gl, gr) = (grad(y, l), grad(y, r));
            sum += gl * gl + gr * gr;
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    2.0 * kernel.slope_at_zero().abs() * sum / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::{make_surface, SurfaceKind};
    use crate::render::{render, ViewGeometry};
    use crate::spectral::{generate_patch, SpectrumSpec};

    fn geom() -> ViewGeometry {
        ViewGeometry {
            eye_separation_px: 32.0,
            viewing_distance_px: 200.0,
            max_depth_px: 50.0,
            strip_width_px: 32,
            replications: 4,
        }
    }

    fn flat(beta: f64, seed: u64) -> Stimulus {
        let depth = make_surface::<f64>(SurfaceKind::Flat, 128, 64).unwrap();
        let patch = generate_patch::<f64>(&SpectrumSpec::new(beta, 16, seed)).unwrap();
        render(&depth, &patch, &geom(), format!("s{seed}")).unwrap()
    }

    #[test]
    fn kernel_properties() {
        let k = MatchKernel::default();
        assert_eq!(k.apply(0.0f64), 1.0);
        assert_eq!(k.slope_at_zero(), -0.001);
        assert!(k.apply(2.0f64) < k.apply(1.0f64));
        assert!(MatchKernel::new(0.0).is_err());
    }

    #[test]
    fn self_match_diagonal_and_period() {
        let s = flat(0.0, 1);
        let surf = match_surface::<f64>(
            &[&s],
            0..16,
            ColumnWindow { start: 0, len: 128 },
            MatchKernel::default(),
        )
        .unwrap();
        for i in 0..128 {
            assert!((surf.grid[[i, i]] - 1.0).abs() < 1e-12);
            if i + 32 < 128 {
                assert_eq!(surf.grid[[i, i + 32]], 1.0);
            }
        }
        assert!(surf.grid.iter().all(|&v| v > 0.0 && v <= 1.0));
        let slice = basin_slice(&surf).unwrap();
        assert_eq!(slice.at(0), Some(1.0));
        assert_eq!(slice.at(32), Some(1.0));
        assert_eq!(slice.displacements.len(), 2 * 127 + 1);
    }

    #[test]
    fn rejects_mixed_sources_and_empty_rows() {
        let a = flat(0.0, 1);
        let b = flat(1.0, 2);
        let w = ColumnWindow { start: 0, len: 64 };
        assert!(matches!(
            match_surface::<f64>(&[&a, &b], 0..16, w, MatchKernel::default()),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            match_surface::<f64>(&[&a], 4..4, w, MatchKernel::default()),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            match_surface::<f64>(&[&a], 0..4, w, MatchKernel::default()),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            match_surface::<f64>(&[], 0..16, w, MatchKernel::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn constant_stimulus_has_no_sharpness() {
        let mut s = flat(1.0, 3);
        s.image.fill(77);
        assert_eq!(ridge_sharpness(&s, MatchKernel::default()), 0.0);
    }

    #[test]
    fn sharpness_is_linear_in_lambda() {
        let s = flat(1.0, 3);
        let a = ridge_sharpness(&s, MatchKernel::new(0.001).unwrap());
        let b = ridge_sharpness(&s, MatchKernel::new(0.002).unwrap());
        assert!(a > 0.0);
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn half_width_of_a_triangle() {
        // peak 1, median 0: level 0.5 crossed at distance 2 on a slope of 1/4 per pixel
        let displacements: Vec<i64> = (-20..=20).collect();
        let values: Vec<f64> = displacements
            .iter()
            .map(|d| (1.0 - d.abs() as f64 / 4.0).max(0.0))
            .collect();
        let hw = basin_half_width(&BasinSlice {
            displacements,
            values,
        })
        .unwrap();
        assert!((hw - 2.0).abs() < 1e-12);
    }
}
