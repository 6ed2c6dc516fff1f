//! Autostereogram rendering by left-to-right strip propagation.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthField, DepthProvenance};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::spectral::{upsample2, NoisePatch, SpectrumSpec};

/// Viewing geometry in screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub eye_separation_px: f64,
    pub viewing_distance_px: f64,
    /// Physical depth behind the screen that corresponds to `phi = 1`.
    pub max_depth_px: f64,
    pub strip_width_px: usize,
    pub replications: usize,
}

impl Default for ViewGeometry {
    /// `s(0) = 256`, `s(1) = 216`: at most 40 px of disparity.
    fn default() -> Self {
        Self {
            eye_separation_px: 256.0,
            viewing_distance_px: 1080.0,
            max_depth_px: 200.0,
            strip_width_px: 256,
            replications: 6,
        }
    }
}

impl ViewGeometry {
    pub fn image_width(&self) -> usize {
        self.strip_width_px * self.replications
    }

    pub fn validate(&self) -> Result<()> {
        let g = self;
        if !(g.eye_separation_px.is_finite() && g.eye_separation_px > 0.0) {
            return Err(Error::Geometry("eye separation must be positive".into()));
        }
        if !(g.viewing_distance_px.is_finite() && g.viewing_distance_px > 0.0) {
            return Err(Error::Geometry("viewing distance must be positive".into()));
        }
        if !(g.max_depth_px.is_finite() && g.max_depth_px >= 0.0) {
            return Err(Error::Geometry("max depth must be non-negative".into()));
        }
        if g.strip_width_px == 0 || g.replications == 0 {
            return Err(Error::Geometry(
                "strip width and replication count must be positive".into(),
            ));
        }
        // s(phi) decreases with phi, so the extremes are s(0) = E and s(1)
        let widest = self.separation_px(0.0);
        let narrowest = self.separation_px(1.0);
        if widest > g.strip_width_px || narrowest == 0 {
            return Err(Error::Geometry(format!(
                "separations span {narrowest}..={widest} px, must lie in 1..={}",
                g.strip_width_px
            )));
        }
        Ok(())
    }

    /// Unrounded separation `E * D / (z + D)` at normalized depth `phi`.
    pub fn separation(&self, phi: f64) -> f64 {
        let z = phi * self.max_depth_px;
        self.eye_separation_px * self.viewing_distance_px / (z + self.viewing_distance_px)
    }

    /// Separation rounded half-up to whole pixels.
    pub fn separation_px(&self, phi: f64) -> usize {
        (self.separation(phi) + 0.5).floor().max(0.0) as usize
    }
}

/// Disparity `E * z / (z + D)` with `z = phi * max_depth_px`.
pub fn disparity(phi: f64, geom: &ViewGeometry) -> f64 {
    let z = phi * geom.max_depth_px;
    geom.eye_separation_px * z / (z + geom.viewing_distance_px)
}

/// Pixel pair constrained to equal gray values: `(x_left, x_right)`.
pub type LinkPair = (u32, u32);

/// Equality constraints per image row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Links {
    pub rows: Vec<Vec<LinkPair>>,
}

impl Links {
    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Separation recorded at `(x, row)`, i.e. `x - x_left` of the link ending at `x`.
    pub fn separation_at(&self, row: usize, x: usize) -> Option<usize> {
        let pairs = self.rows.get(row)?;
        let i = pairs.binary_search_by_key(&(x as u32), |p| p.1).ok()?;
        Some((pairs[i].1 - pairs[i].0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusProvenance {
    pub id: String,
    pub spectrum: SpectrumSpec,
    pub depth: DepthProvenance,
    pub geometry: ViewGeometry,
}

/// A rendered 8-bit autostereogram with its constraint structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    /// `height x width` gray levels.
    pub image: Array2<u8>,
    pub links: Links,
    pub geometry: ViewGeometry,
    pub provenance: StimulusProvenance,
}

impl Stimulus {
    pub fn width(&self) -> usize {
        self.image.ncols()
    }

    pub fn height(&self) -> usize {
        self.image.nrows()
    }

    /// Gray levels mapped to `[0, 1]`.
    pub fn normalized<T: Real>(&self) -> Array2<T> {
        let scale = T::lit(1.0 / 255.0);
        self.image.mapv(|g| T::of_usize(g as usize) * scale)
    }
}

/// Maps a grid affinely onto 0..=255 (min to 0, max to 255).
pub fn quantize<T: Real>(grid: &Array2<T>) -> Array2<u8> {
    let lo = grid.iter().copied().fold(T::infinity(), T::min);
    let hi = grid.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    grid.mapv(|v| {
        if span > T::zero() {
            ((v - lo) / span * T::lit(255.0))
                .round()
                .to_u8()
                .unwrap_or(u8::MAX)
        } else {
            128
        }
    })
}

/// Renders an autostereogram.
///
/// The noise patch is upsampled 2x and tiled vertically to seed each row. Scanning left to
/// right, a pixel at `x >= s(x)` copies `I(x - s(x))` and records the link; earlier pixels
/// take the pattern value. `s(x)` is the rounded separation at the depth under `x`.
pub fn render<T: Real>(
    depth: &DepthField<T>,
    patch: &NoisePatch<T>,
    geom: &ViewGeometry,
    id: impl Into<String>,
) -> Result<Stimulus> {
    geom.validate()?;
    let width = geom.image_width();
    if depth.width() != width {
        return Err(Error::param(format!(
            "depth width {} does not match strip width x replications = {width}",
            depth.width()
        )));
    }
    if 2 * patch.size() != geom.strip_width_px {
        return Err(Error::param(format!(
            "upsampled patch width {} does not tile the {} px strip",
            2 * patch.size(),
            geom.strip_width_px
        )));
    }
    let pattern = quantize(&upsample2(&patch.values));
    let period = pattern.nrows();
    let height = depth.height();

    let rows: Vec<(Vec<u8>, Vec<LinkPair>)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let seed_row = pattern.row(y % period);
            let mut line = vec![0u8; width];
            let mut pairs = Vec::with_capacity(width);
            for x in 0..width {
                let s = geom.separation_px(depth.at(x, y).as_f64());
                if s == 0 || s > geom.strip_width_px {
                    return Err(Error::Geometry(format!(
                        "separation {s} px at ({x}, {y}) out of range"
                    )));
                }
                if x < s {
                    line[x] = seed_row[x];
                } else {
                    line[x] = line[x - s];
                    pairs.push(((x - s) as u32, x as u32));
                }
            }
            Ok((line, pairs))
        })
        .collect::<Result<_>>()?;

    let mut image = Array2::zeros((height, width));
    let mut links = Links {
        rows: Vec::with_capacity(height),
    };
    for (y, (line, pairs)) in rows.into_iter().enumerate() {
        image.row_mut(y).assign(&ndarray::ArrayView1::from(&line));
        links.rows.push(pairs);
    }
    Ok(Stimulus {
        image,
        links,
        geometry: *geom,
        provenance: StimulusProvenance {
            id: id.into(),
            spectrum: patch.spec,
            depth: depth.provenance,
            geometry: *geom,
        },
    })
}

/// Outcome of checking every recorded link.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinkReport {
    pub ok: bool,
    pub checked: usize,
    /// `(row, x_left, x_right)` of each link whose pixels differ.
    pub violations: Vec<(usize, u32, u32)>,
}

pub fn verify_links(stim: &Stimulus) -> LinkReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for (y, pairs) in stim.links.rows.iter().enumerate() {
        for &(l, r) in pairs {
            checked += 1;
            let ok = match (
                stim.image.get([y, l as usize]),
                stim.image.get([y, r as usize]),
            ) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            if !ok {
                violations.push((y, l, r));
            }
        }
    }
    LinkReport {
        ok: violations.is_empty(),
        checked,
        violations,
    }
}
