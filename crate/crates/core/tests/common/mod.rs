#![allow(dead_code)]

use sirds_core::depth::{make_surface, SurfaceKind};
use sirds_core::render::{render, Stimulus, ViewGeometry};
use sirds_core::spectral::{generate_patch, SpectrumSpec};

/// Full-size stimulus (1536 x 1024, default geometry) over a background surface.
pub fn stimulus(kind: SurfaceKind, beta: f64, seed: u64) -> Stimulus {
    let geom = ViewGeometry::default();
    let depth = make_surface::<f64>(kind, geom.image_width(), 1024).unwrap();
    let patch = generate_patch::<f64>(&SpectrumSpec::new(beta, 128, seed)).unwrap();
    render(&depth, &patch, &geom, format!("{kind}-{beta}-{seed}")).unwrap()
}
