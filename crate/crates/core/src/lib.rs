//! Autostereograms from `1/f^beta` noise: synthesis, rendering, matching-function analysis and
//! scoring of recognition experiments.
//!
//! Numeric modules are generic over [`Real`] (`f32` or `f64`); the `*F64` / `*F32` aliases
//! below name the common instantiations.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod experiment;
mod fft;
pub mod io;
pub mod matching;
pub mod num;
pub mod render;
pub mod report;
pub mod scale_law;
pub mod session;
pub mod spectral;
pub mod stats;

pub use depth::{DepthField, GlyphSpec, Letter, SurfaceKind};
pub use error::{Error, Result};
pub use experiment::{Experiment, Label, SessionManifest, StatsReport, TrialRecord};
pub use matching::{BasinSlice, ColumnWindow, MatchKernel, MatchSurface};
pub use num::Real;
pub use render::{Stimulus, ViewGeometry};
pub use spectral::{AutocorrelationProfile, NoisePatch, RadialBin, SpectrumSpec};

pub type NoisePatchF64 = spectral::NoisePatch<f64>;
pub type NoisePatchF32 = spectral::NoisePatch<f32>;
pub type DepthFieldF64 = depth::DepthField<f64>;
pub type DepthFieldF32 = depth::DepthField<f32>;
pub type MatchSurfaceF64 = matching::MatchSurface<f64>;
pub type MatchSurfaceF32 = matching::MatchSurface<f32>;
pub type BasinSliceF64 = matching::BasinSlice<f64>;
pub type AutocorrelationF64 = spectral::AutocorrelationProfile<f64>;
pub type TTestF64 = stats::TTest<f64>;
