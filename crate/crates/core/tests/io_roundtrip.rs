use sirds_core::depth::{embed_glyph, make_surface, GlyphSpec, Letter, SurfaceKind};
use sirds_core::experiment::{plan_inventory, Experiment, Label, TrialRecord};
use sirds_core::io::{
    append_record, decode_links, encode_links, read_depth, read_manifest, read_patch, read_records,
    read_stimulus, write_depth, write_manifest, write_patch, write_stimulus,
};
use sirds_core::render::{render, ViewGeometry};
use sirds_core::session::build_inventory;
use sirds_core::spectral::{generate_patch, SpectrumSpec};
use sirds_core::Error;

#[test]
fn patch_and_depth_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let patch = generate_patch::<f64>(&SpectrumSpec::new(0.5, 64, 3)).unwrap();
    let stem = dir.path().join("patch");
    write_patch(&stem, &patch).unwrap();
    let back = read_patch(&stem).unwrap();
    assert_eq!(back.values, patch.values);
    assert_eq!(back.spec, patch.spec);

    let base = make_surface::<f64>(SurfaceKind::MexicanHat, 256, 128).unwrap();
    let glyph = GlyphSpec {
        letter: Letter::T,
        size: 60,
        depth_ratio: 1.0 / 6.0,
        horizontal_offset: -20,
    };
    let depth = embed_glyph(&base, &glyph).unwrap();
    let stem = dir.path().join("depth");
    write_depth(&stem, &depth, Some(3)).unwrap();
    let back = read_depth(&stem).unwrap();
    assert_eq!(back.provenance, depth.provenance);
    for (a, b) in back.values.iter().zip(depth.values.iter()) {
        assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
    }
}

#[test]
fn stimulus_and_links_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = ViewGeometry::default();
    let depth = make_surface::<f64>(SurfaceKind::DiagonalSine, g.image_width(), 96).unwrap();
    let patch = generate_patch::<f64>(&SpectrumSpec::new(2.0, 128, 12)).unwrap();
    let stim = render(&depth, &patch, &g, "x").unwrap();
    let (links, width) = decode_links(&encode_links(&stim.links, stim.width())).unwrap();
    assert_eq!(width, stim.width());
    assert_eq!(links, stim.links);
    assert!(decode_links(b"SLNK").is_err());

    let stem = dir.path().join("x");
    write_stimulus(&stem, &stim, true).unwrap();
    let back = read_stimulus(&stem).unwrap();
    assert_eq!(back.image, stim.image);
    assert_eq!(back.links, stim.links);
    assert_eq!(back.provenance, stim.provenance);

    let missing = dir.path().join("nothing");
    assert!(matches!(read_stimulus(&missing), Err(Error::Data(_))));
}

#[test]
fn session_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = plan_inventory(
        Experiment::IdentificationLimits,
        11,
        ViewGeometry::default(),
    );
    let path = dir.path().join("manifest.json");
    write_manifest(&path, &m).unwrap();
    assert_eq!(read_manifest(&path).unwrap(), m);

    let log = dir.path().join("responses.jsonl");
    let recs: Vec<TrialRecord> = (0..5)
        .map(|i| {
            let t = &m.trials[i];
            TrialRecord::evaluate(&m, "s", i, &t.stimulus_id, Label::Undefinable, 900.0, false)
                .unwrap()
        })
        .collect();
    for r in &recs {
        append_record(&log, r).unwrap();
    }
    assert_eq!(read_records(&log).unwrap(), recs);
}

#[test]
fn inventory_directory_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_inventory(
        Experiment::SurfaceRecognition,
        4,
        ViewGeometry::default(),
        dir.path(),
        false,
    )
    .unwrap();
    let pngs = std::fs::read_dir(dir.path().join("stimuli"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png")
        })
        .count();
    assert_eq!(pngs, 140);
    assert_eq!(read_manifest(&dir.path().join("manifest.json")).unwrap(), m);
}
