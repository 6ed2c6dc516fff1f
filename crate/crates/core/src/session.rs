//! On-disk session directories: manifest, rendered stimuli and the response log.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::experiment::{plan_inventory, render_plan, Experiment, SessionManifest, StimulusPlan};
use crate::io::{write_manifest, write_stimulus};
use crate::render::ViewGeometry;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STIMULI_DIR: &str = "stimuli";
pub const RESPONSES_FILE: &str = "responses.jsonl";

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

pub fn stimulus_stem(dir: &Path, id: &str) -> PathBuf {
    dir.join(STIMULI_DIR).join(id)
}

pub fn responses_path(dir: &Path) -> PathBuf {
    dir.join(RESPONSES_FILE)
}

/// Renders and stores a whole experiment inventory under `dir`, returning its manifest.
///
/// Link sidecars are large (about 10 MB per stimulus) and are only written on request.
pub fn build_inventory(
    experiment: Experiment,
    master_seed: u64,
    geometry: ViewGeometry,
    dir: &Path,
    with_links: bool,
) -> Result<SessionManifest> {
    geometry.validate()?;
    let (plans, manifest) = plan_inventory(experiment, master_seed, geometry);
    std::fs::create_dir_all(dir.join(STIMULI_DIR))?;
    plans
        .par_iter()
        .try_for_each(|plan: &StimulusPlan| -> Result<()> {
            let stim = render_plan::<f64>(plan, &geometry)?;
            write_stimulus(&stimulus_stem(dir, &plan.id), &stim, with_links)
        })?;
    write_manifest(&manifest_path(dir), &manifest)?;
    Ok(manifest)
}
