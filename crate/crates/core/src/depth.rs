//! Depth maps: smooth background surfaces, letter glyphs and the 5x5 smoothing pass.
//!
//! Depth is normalized: 0 is the image plane and 1 the nearest encodable depth. Background
//! surfaces occupy `[0, 0.6]`; letters sit on a plateau above the background peak.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Peak of every normalized background surface.
pub const BACKGROUND_PEAK: f64 = 0.6;
/// Largest horizontal glyph displacement from the center, in pixels.
pub const MAX_GLYPH_OFFSET: i32 = 400;
/// Edge of the hand-authored master letter bitmaps.
pub const MASTER_GRID: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    EggCrate,
    DiagonalSine,
    Ellipsoid,
    MexicanHat,
    Flat,
}

impl SurfaceKind {
    /// The four surfaces shown to subjects in the surface-recognition experiment.
    pub const EXPERIMENT: [SurfaceKind; 4] = [
        SurfaceKind::EggCrate,
        SurfaceKind::DiagonalSine,
        SurfaceKind::Ellipsoid,
        SurfaceKind::MexicanHat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::EggCrate => "egg_crate",
            SurfaceKind::DiagonalSine => "diagonal_sine",
            SurfaceKind::Ellipsoid => "ellipsoid",
            SurfaceKind::MexicanHat => "mexican_hat",
            SurfaceKind::Flat => "flat",
        }
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SurfaceKind::EggCrate,
            SurfaceKind::DiagonalSine,
            SurfaceKind::Ellipsoid,
            SurfaceKind::MexicanHat,
            SurfaceKind::Flat,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::param(format!("unknown surface kind {s:?}")))
    }
}

/// Letter drawn into a depth map; `None` is the no-letter control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    S,
    X,
    L,
    T,
    P,
    B,
    #[serde(rename = "NONE")]
    None,
}

impl Letter {
    pub fn name(self) -> &'static str {
        match self {
            Letter::S => "S",
            Letter::X => "X",
            Letter::L => "L",
            Letter::T => "T",
            Letter::P => "P",
            Letter::B => "B",
            Letter::None => "NONE",
        }
    }

    fn master(self) -> Option<&'static [&'static str; MASTER_GRID]> {
        Some(match self {
            Letter::S => &[
                ".######", "#......", "#......", ".#####.", "......#", "......#", "######.",
            ],
            Letter::X => &[
                "#.....#", ".#...#.", "..#.#..", "...#...", "..#.#..", ".#...#.", "#.....#",
            ],
            Letter::L => &[
                "#......", "#......", "#......", "#......", "#......", "#......", "#######",
            ],
            Letter::T => &[
                "#######", "...#...", "...#...", "...#...", "...#...", "...#...", "...#...",
            ],
            Letter::P => &[
                "######.", "#.....#", "#.....#", "######.", "#......", "#......", "#......",
            ],
            Letter::B => &[
                "######.", "#.....#", "#.....#", "######.", "#.....#", "#.....#", "######.",
            ],
            Letter::None => return None,
        })
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Letter::S,
            Letter::X,
            Letter::L,
            Letter::T,
            Letter::P,
            Letter::B,
            Letter::None,
        ]
        .into_iter()
        .find(|l| l.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::param(format!("unsupported letter {s:?}")))
    }
}

/// A letter placed at the vertical middle of a depth map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpec {
    pub letter: Letter,
    /// Edge of the square bounding box, pixels.
    pub size: usize,
    /// Fraction by which the plateau exceeds the background peak (1/5, 1/6, 1/7 in the presets).
    pub depth_ratio: f64,
    /// Horizontal displacement of the box center from the field center, pixels.
    pub horizontal_offset: i32,
}

impl GlyphSpec {
    pub fn plateau(&self) -> f64 {
        BACKGROUND_PEAK * (1.0 + self.depth_ratio)
    }
}

/// Where a depth field came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthProvenance {
    pub surface: SurfaceKind,
    pub glyph: Option<GlyphSpec>,
    pub smoothed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthField<T> {
    /// `height x width`, values in `[0, 1]`.
    pub values: Array2<T>,
    pub provenance: DepthProvenance,
}

impl<T: Real> DepthField<T> {
    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn at(&self, x: usize, y: usize) -> T {
        self.values[[y, x]]
    }

    /// Wraps an externally produced map (for example a decoded 16-bit PNG).
    pub fn from_values(values: Array2<T>, provenance: DepthProvenance) -> Result<Self> {
        if values.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::param("depth values must lie in [0, 1]"));
        }
        Ok(Self { values, provenance })
    }
}

/// Free constants of the analytic background surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    pub egg_crate_periods: f64,
    pub diagonal_periods: f64,
    /// Ellipsoid semi-axes as fractions of width and height.
    pub ellipsoid_axes: (f64, f64),
    /// Mexican hat scale as a fraction of `min(width, height)`.
    pub mexican_hat_scale: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            egg_crate_periods: 2.0,
            diagonal_periods: 2.0,
            ellipsoid_axes: (0.45, 0.45),
            mexican_hat_scale: 0.25,
        }
    }
}

pub fn make_surface<T: Real>(
    kind: SurfaceKind,
    width: usize,
    height: usize,
) -> Result<DepthField<T>> {
    make_surface_with(kind, width, height, &SurfaceParams::default())
}

/// Builds a background surface normalized to `[0, 0.6]` (`Flat` is all zeros).
pub fn make_surface_with<T: Real>(
    kind: SurfaceKind,
    width: usize,
    height: usize,
    params: &SurfaceParams,
) -> Result<DepthField<T>> {
    if width < 64 || height < 64 {
        return Err(Error::param(format!(
            "surface must be at least 64x64, got {width}x{height}"
        )));
    }
    let tau = std::f64::consts::TAU;
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = ((width / 2) as f64, (height / 2) as f64);
    let raw = Array2::from_shape_fn((height, width), |(y, x)| {
        let (xf, yf) = (x as f64, y as f64);
        match kind {
            SurfaceKind::Flat => 0.0,
            SurfaceKind::EggCrate => {
                let k = params.egg_crate_periods;
                (tau * k * xf / w).sin() * (tau * k * yf / h).sin()
            }
            SurfaceKind::DiagonalSine => (tau * params.diagonal_periods * (xf / w + yf / h)).sin(),
            SurfaceKind::Ellipsoid => {
                let (a, b) = (params.ellipsoid_axes.0 * w, params.ellipsoid_axes.1 * h);
                let q = ((xf - cx) / a).powi(2) + ((yf - cy) / b).powi(2);
                (1.0 - q).max(0.0).sqrt()
            }
            SurfaceKind::MexicanHat => {
                let s = params.mexican_hat_scale * w.min(h);
                let r2 = ((xf - cx).powi(2) + (yf - cy).powi(2)) / (s * s);
                (1.0 - r2) * (-r2 / 2.0).exp()
            }
        }
    });
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = raw.mapv(|v| {
        if span > 0.0 {
            T::lit((v - lo) / span * BACKGROUND_PEAK)
        } else {
            T::zero()
        }
    });
    Ok(DepthField {
        values,
        provenance: DepthProvenance {
            surface: kind,
            glyph: None,
            smoothed: false,
        },
    })
}

/// Binary `size x size` mask of a letter, scaled from its 7x7 master by center sampling.
pub fn rasterize_letter(letter: Letter, size: usize) -> Result<Array2<bool>> {
    if size < 10 {
        return Err(Error::param(format!(
            "letter size must be >= 10, got {size}"
        )));
    }
    let master = letter
        .master()
        .ok_or_else(|| Error::param("NONE has no glyph"))?;
    // sampling at pixel centers keeps mirror-symmetric masters symmetric at every size
    let src = |i: usize| ((2 * i + 1) * MASTER_GRID) / (2 * size);
    Ok(Array2::from_shape_fn((size, size), |(r, c)| {
        master[src(r)].as_bytes()[src(c)] == b'#'
    }))
}

/// Top-left corner of the glyph box inside a `width x height` field.
pub fn glyph_origin(glyph: &GlyphSpec, width: usize, height: usize) -> Result<(usize, usize)> {
    if glyph.horizontal_offset.abs() > MAX_GLYPH_OFFSET {
        return Err(Error::param(format!(
            "glyph offset {} exceeds +/-{MAX_GLYPH_OFFSET} pixels",
            glyph.horizontal_offset
        )));
    }
    let left = (width as i64 - glyph.size as i64) / 2 + glyph.horizontal_offset as i64;
    let top = (height as i64 - glyph.size as i64) / 2;
    if left < 0
        || top < 0
        || left as usize + glyph.size > width
        || top as usize + glyph.size > height
    {
        return Err(Error::param("glyph box falls outside the depth field"));
    }
    Ok((left as usize, top as usize))
}

/// Sets the glyph pixels to the plateau `0.6 * (1 + depth_ratio)`. `NONE` returns `base`.
pub fn embed_glyph<T: Real>(base: &DepthField<T>, glyph: &GlyphSpec) -> Result<DepthField<T>> {
    if !(glyph.depth_ratio > 0.0) {
        return Err(Error::param("depth ratio must be positive"));
    }
    if glyph.horizontal_offset.abs() > MAX_GLYPH_OFFSET {
        return Err(Error::param(format!(
            "glyph offset {} exceeds +/-{MAX_GLYPH_OFFSET} pixels",
            glyph.horizontal_offset
        )));
    }
    if glyph.letter == Letter::None {
        return Ok(base.clone());
    }
    let plateau = glyph.plateau();
    if plateau > 1.0 {
        return Err(Error::param(format!(
            "plateau {plateau} exceeds the encodable depth"
        )));
    }
    let (left, top) = glyph_origin(glyph, base.width(), base.height())?;
    let mask = rasterize_letter(glyph.letter, glyph.size)?;
    let mut out = base.clone();
    let plateau = T::lit(plateau);
    for ((r, c), &on) in mask.indexed_iter() {
        if on {
            out.values[[top + r, left + c]] = plateau;
        }
    }
    out.provenance.glyph = Some(*glyph);
    Ok(out)
}

/// Normalized 5x5 binomial kernel (outer product of `[1, 4, 6, 4, 1] / 16`).
pub fn binomial5() -> [[f64; 5]; 5] {
    const TAPS: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut k = [[0.0; 5]; 5];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = TAPS[i] * TAPS[j] / 256.0;
        }
    }
    k
}

/// 5x5 binomial low-pass with clamped borders; output clipped to `[0, 1]`.
///
/// Applied as two 1-D passes, which is exact for a separable kernel with per-axis clamping.
pub fn smooth5<T: Real>(field: &DepthField<T>) -> DepthField<T> {
    const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let taps = TAPS.map(T::lit);
    let (h, w) = field.values.dim();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = Array2::zeros((h, w));
    for (src, mut dst) in field.values.rows().into_iter().zip(rows.rows_mut()) {
        for x in 0..w {
            dst[x] = (0..5).fold(T::zero(), |acc, k| {
                acc + taps[k] * src[clamp(x as isize + k as isize - 2, w)]
            });
        }
    }
    let mut values = Array2::zeros((h, w));
    for y in 0..h {
        let src: [_; 5] = std::array::from_fn(|k| rows.row(clamp(y as isize + k as isize - 2, h)));
        let mut dst = values.row_mut(y);
        for x in 0..w {
            let acc = (0..5).fold(T::zero(), |acc, k| acc + taps[k] * src[k][x]);
            dst[x] = acc.max(T::zero()).min(T::one());
        }
    }
    let mut provenance = field.provenance;
    provenance.smoothed = true;
    DepthField { values, provenance }
}
