use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sirds_core::depth::{GlyphSpec, Letter, SurfaceKind};
use sirds_core::experiment::{
    plan_depth, score, Condition, Experiment, Label, ScoreOptions, StimulusPlan,
    DETAIL_LETTER_SIZE, DETAIL_RATIO, SCHEMA_VERSION,
};
use sirds_core::io::{
    read_manifest, read_records, read_stimulus, write_basin_csv, write_depth, write_match_surface,
    write_patch, write_stimulus,
};
use sirds_core::matching::{basin_half_width, basin_slice, match_surface, ridge_sharpness};
use sirds_core::render::render;
use sirds_core::scale_law::curvature_scale_law;
use sirds_core::session::{build_inventory, manifest_path, responses_path};
use sirds_core::spectral::generate_patch;
use sirds_core::stats::VarianceModel;
use sirds_core::{ColumnWindow, MatchKernel, SpectrumSpec, ViewGeometry};

use crate::args::{parse_beta, GenArgs, MatchArgs, ScaleLawArgs, ScoreArgs};
use crate::CliError;

/// Geometry fields that may be overridden; the rest keep their defaults.
#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryOverride {
    pub eye_separation_px: Option<f64>,
    pub viewing_distance_px: Option<f64>,
    pub max_depth_px: Option<f64>,
    pub strip_width_px: Option<usize>,
    pub replications: Option<usize>,
}

impl GeometryOverride {
    pub fn apply(&self, mut g: ViewGeometry) -> ViewGeometry {
        if let Some(v) = self.eye_separation_px {
            g.eye_separation_px = v;
        }
        if let Some(v) = self.viewing_distance_px {
            g.viewing_distance_px = v;
        }
        if let Some(v) = self.max_depth_px {
            g.max_depth_px = v;
        }
        if let Some(v) = self.strip_width_px {
            g.strip_width_px = v;
        }
        if let Some(v) = self.replications {
            g.replications = v;
        }
        g
    }
}

/// Contents of a `--config` file for `gen`.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub experiment: Option<u8>,
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub surface: Option<SurfaceKind>,
    pub letter: Option<Letter>,
    pub letter_size: Option<usize>,
    pub depth_ratio: Option<f64>,
    pub offset: Option<i32>,
    pub geometry: Option<GeometryOverride>,
    pub with_links: Option<bool>,
    pub out: Option<PathBuf>,
}

/// Resolved `gen` parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum GenPlan {
    Inventory {
        experiment: Experiment,
        seed: u64,
        geometry: ViewGeometry,
        with_links: bool,
        out: PathBuf,
    },
    Single {
        plan: StimulusPlan,
        geometry: ViewGeometry,
        out: PathBuf,
    },
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `--geometry` as inline JSON, falling back to reading it as a file path.
pub fn parse_geometry(arg: &str) -> Result<GeometryOverride, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| usage(format!("--geometry {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| usage(format!("--geometry: {e}")))
}

pub fn resolve_gen(args: &GenArgs) -> Result<GenPlan, CliError> {
    let config: GenConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("--config {}: {e}", path.display())))?
        }
        None => GenConfig::default(),
    };
    let geometry_override = match &args.geometry {
        Some(g) => parse_geometry(g)?,
        None => config.geometry.unwrap_or_default(),
    };
    let geometry = geometry_override.apply(ViewGeometry::default());
    geometry.validate()?;
    let seed = args.seed.or(config.seed).unwrap_or(0);

    let experiment = match (args.experiment, config.experiment) {
        (Some(e), _) => Some(e),
        (None, Some(id)) if args.beta.is_none() => {
            Some(Experiment::try_from(id).map_err(|e| usage(e.to_string()))?)
        }
        _ => None,
    };
    if let Some(experiment) = experiment {
        let out = args
            .out
            .clone()
            .or(config.out)
            .unwrap_or_else(|| PathBuf::from("session"));
        let with_links = args.with_links || config.with_links.unwrap_or(false);
        return Ok(GenPlan::Inventory {
            experiment,
            seed,
            geometry,
            with_links,
            out,
        });
    }

    let beta = match (args.beta, config.beta) {
        (Some(b), _) => b,
        (None, Some(b)) => parse_beta(&b.to_string()).map_err(usage)?,
        (None, None) => return Err(usage("gen needs --experiment or --beta")),
    };
    let surface = args
        .surface
        .or(config.surface)
        .unwrap_or(SurfaceKind::Ellipsoid);
    let letter = args.letter.or(config.letter).unwrap_or(Letter::None);
    let glyph = (letter != Letter::None).then(|| GlyphSpec {
        letter,
        size: args
            .letter_size
            .or(config.letter_size)
            .unwrap_or(DETAIL_LETTER_SIZE),
        depth_ratio: args
            .depth_ratio
            .or(config.depth_ratio)
            .unwrap_or(DETAIL_RATIO),
        horizontal_offset: args.offset.or(config.offset).unwrap_or(0),
    });
    let truth = if glyph.is_some() {
        Label::Letter(letter)
    } else {
        Label::Surface(surface)
    };
    let spectrum = SpectrumSpec::new(beta, geometry.strip_width_px / 2, seed);
    let plan = StimulusPlan {
        id: format!("b{beta}-{surface}-{}-s{seed}", letter.name().to_lowercase()),
        spectrum,
        condition: Condition {
            beta,
            surface,
            glyph,
        },
        truth,
    };
    let out = args
        .out
        .clone()
        .or(config.out)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(GenPlan::Single {
        plan,
        geometry,
        out,
    })
}

pub fn cmd_gen(args: &GenArgs) -> Result<serde_json::Value, CliError> {
    match resolve_gen(args)? {
        GenPlan::Inventory {
            experiment,
            seed,
            geometry,
            with_links,
            out,
        } => {
            let manifest = build_inventory(experiment, seed, geometry, &out, with_links)?;
            Ok(json!({
                "schema_version": SCHEMA_VERSION,
                "experiment_id": experiment.id(),
                "master_seed": seed,
                "geometry": geometry,
                "stimuli": manifest.trials.len(),
                "training_ids": manifest.training_ids.len(),
                "with_links": with_links,
                "manifest": manifest_path(&out),
            }))
        }
        GenPlan::Single {
            plan,
            geometry,
            out,
        } => {
            fs::create_dir_all(&out).map_err(sirds_core::Error::from)?;
            let depth = plan_depth::<f64>(&plan, &geometry)?;
            let patch = generate_patch::<f64>(&plan.spectrum)?;
            let stim = render(&depth, &patch, &geometry, plan.id.clone())?;
            write_patch(&out.join("patch"), &patch)?;
            write_depth(&out.join("depth"), &depth, Some(plan.spectrum.seed))?;
            write_stimulus(&out.join("stimulus"), &stim, true)?;
            Ok(json!({
                "schema_version": SCHEMA_VERSION,
                "provenance": stim.provenance,
                "truth": plan.truth,
                "links": stim.links.len(),
                "stimulus": out.join("stimulus.png"),
            }))
        }
    }
}

fn stem_of(path: &Path) -> PathBuf {
    match path.extension() {
        Some(ext) if ext == "png" || ext == "json" || ext == "links" => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

pub fn cmd_match(args: &MatchArgs) -> Result<serde_json::Value, CliError> {
    let kernel = MatchKernel::new(args.lambda)?;
    let stimuli = args
        .stimuli
        .iter()
        .map(|p| read_stimulus(&stem_of(p)))
        .collect::<sirds_core::Result<Vec<_>>>()?;
    let width = stimuli[0].width();
    let window = match args.window_start {
        Some(start) => ColumnWindow {
            start,
            len: args.window,
        },
        None => ColumnWindow::centered(width, args.window),
    };
    let refs: Vec<_> = stimuli.iter().collect();
    let surface = match_surface::<f64>(&refs, args.rows.clone(), window, kernel)?;
    let slice = basin_slice(&surface)?;
    let half_width = basin_half_width(&slice);
    let sharpness: Vec<f64> = stimuli.iter().map(|s| ridge_sharpness(s, kernel)).collect();
    let mean_sharpness = sharpness.iter().sum::<f64>() / sharpness.len() as f64;

    fs::create_dir_all(&args.out).map_err(sirds_core::Error::from)?;
    write_match_surface(&args.out.join("match_surface.png"), &surface)?;
    write_basin_csv(&args.out.join("basin.csv"), &slice)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "stimuli": stimuli.iter().map(|s| s.provenance.id.clone()).collect::<Vec<_>>(),
        "beta": stimuli[0].provenance.spectrum.beta,
        "rows": [args.rows.start, args.rows.end],
        "window": window,
        "lambda": kernel.lambda,
        "basin_half_width": half_width,
        "ridge_sharpness": mean_sharpness,
        "ridge_sharpness_per_stimulus": sharpness,
    });
    write_json(&args.out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn cmd_scale_law(args: &ScaleLawArgs) -> Result<serde_json::Value, CliError> {
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let fit = curvature_scale_law::<f64>(args.beta, &args.sigmas, &seeds)?;
    let value = json!({ "schema_version": SCHEMA_VERSION, "seeds": seeds, "fit": fit });
    if let Some(out) = &args.out {
        write_json(out, &value)?;
    }
    Ok(value)
}

pub fn cmd_score(args: &ScoreArgs) -> Result<serde_json::Value, CliError> {
    let manifest = read_manifest(&manifest_path(&args.session))?;
    let log = args
        .responses
        .clone()
        .unwrap_or_else(|| responses_path(&args.session));
    if !log.is_file() {
        return Err(
            sirds_core::Error::Data(format!("response log {} not found", log.display())).into(),
        );
    }
    let records = read_records(&log)?;
    let options = ScoreOptions {
        rt_cutoff_ms: args.rt_cutoff_ms,
        variance: if args.pooled {
            VarianceModel::Pooled
        } else {
            VarianceModel::Welch
        },
    };
    let report = score(&manifest, &records, options)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.session.join("report"));
    let files = sirds_core::report::write_report(&report, &out)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "experiment_id": manifest.experiment_id.id(),
        "records": report.records,
        "training_records_ignored": report.training_records_ignored,
        "outliers_excluded": report.outliers_excluded,
        "files": files,
    }))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(sirds_core::Error::from)?;
    bytes.push(b'\n');
    sirds_core::io::write_atomic(path, &bytes)?;
    Ok(())
}
