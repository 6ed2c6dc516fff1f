//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use sirds_cli::server::{router, Session};
use sirds_core::depth::{make_surface, SurfaceKind};
use sirds_core::experiment::{plan_depth, plan_inventory, render_plan, Experiment};
use sirds_core::matching::{
    basin_half_width, basin_slice, match_surface, ColumnWindow, MatchKernel,
};
use sirds_core::render::{disparity, render, verify_links, Stimulus, ViewGeometry};
use sirds_core::scale_law::curvature_scale_law;
use sirds_core::spectral::{estimate_beta, generate_patch, SpectrumSpec};
use sirds_core::stats::{t_test_one_tailed, Tail, VarianceModel};
use statrs::distribution::{ContinuousCDF, StudentsT};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spectral_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for beta in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let est: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|s| {
                estimate_beta(&generate_patch::<f64>(&SpectrumSpec::new(beta, 128, s)).unwrap())
                    .unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        worst = worst.max((mean - beta).abs());
        parts.push(format!("{beta}->{mean:.3}"));
    }
    let elapsed = start.elapsed();
    check(
        worst <= 0.15 && elapsed < Duration::from_secs(30),
        format!(
            "mean estimates {} (worst error {worst:.3}, limit 0.15) in {elapsed:.2?} (limit 30s)",
            parts.join(" ")
        ),
    )
}

fn constraint_exactness() -> Outcome {
    let start = Instant::now();
    let geom = ViewGeometry::default();
    let (plans, _) = plan_inventory(Experiment::SurfaceRecognition, 2024, geom);
    let results: Vec<(String, usize, usize, (usize, usize))> = plans
        .par_iter()
        .map(|p| {
            let stim = render_plan::<f64>(p, &geom).unwrap();
            let r = verify_links(&stim);
            (
                p.id.clone(),
                r.checked,
                r.violations.len(),
                (stim.width(), stim.height()),
            )
        })
        .collect();
    let elapsed = start.elapsed();
    let checked: usize = results.iter().map(|r| r.1).sum();
    let violations: usize = results.iter().map(|r| r.2).sum();
    let sized = results.iter().all(|r| r.3 == (1536, 1024));
    check(
        results.len() == 140 && violations == 0 && sized && checked > 0 && elapsed < Duration::from_secs(300),
        format!(
            "{} stimuli at 1536x1024, {checked} links checked, {violations} violations, {elapsed:.2?} (limit 5 min)",
            results.len()
        ),
    )
}

fn disparity_round_trip() -> Outcome {
    let geom = ViewGeometry::default();
    // letters over every background, so both smooth and stepped depth are covered
    let (plans, _) = plan_inventory(Experiment::DetailDiscrimination, 77, geom);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut missing = 0usize;
    for plan in plans.iter().step_by(12).take(10) {
        let depth = plan_depth::<f64>(plan, &geom).unwrap();
        let stim = render_plan::<f64>(plan, &geom).unwrap();
        for y in 0..stim.height() {
            for x in 0..stim.width() {
                let phi = depth.at(x, y);
                let expected_s = geom.separation_px(phi);
                match stim.links.separation_at(y, x) {
                    Some(s) => {
                        let err = (geom.eye_separation_px - s as f64 - disparity(phi, &geom)).abs();
                        worst = worst.max(err);
                        checked += 1;
                        if s != expected_s {
                            missing += 1;
                        }
                    }
                    // only the leading strip may lack a constraint
                    None if x < expected_s => {}
                    None => missing += 1,
                }
            }
        }
    }
    check(
        worst <= 0.5 && missing == 0 && checked > 0,
        format!("10 stimuli, {checked} constrained pixels, max |E - s - disparity| = {worst:.4} px (limit 0.5), {missing} unconstrained"),
    )
}

fn batch(kind: SurfaceKind, beta: f64, seeds: impl Iterator<Item = u64>) -> Vec<Stimulus> {
    let geom = ViewGeometry::default();
    let depth = make_surface::<f64>(kind, geom.image_width(), 1024).unwrap();
    seeds
        .map(|s| {
            let patch = generate_patch::<f64>(&SpectrumSpec::new(beta, 128, s)).unwrap();
            render(&depth, &patch, &geom, format!("{kind}-{beta}-{s}")).unwrap()
        })
        .collect()
}

fn ridge_recovery() -> Outcome {
    let stims = batch(SurfaceKind::Ellipsoid, 1.0, 300..305);
    let refs: Vec<&Stimulus> = stims.iter().collect();
    let (rows, mid) = (496..528, 512);
    // the full width keeps both ends of every constraint inside the window
    let window = ColumnWindow {
        start: 0,
        len: 1536,
    };
    let surf = match_surface::<f64>(&refs, rows, window, MatchKernel::default()).unwrap();
    let depth = make_surface::<f64>(SurfaceKind::Ellipsoid, 1536, 1024).unwrap();
    let (mut eligible, mut hits) = (0usize, 0usize);
    for x in 0..1536 {
        if depth.at(x, mid) < 0.2 {
            continue;
        }
        let Some(s) = stims[0].links.separation_at(mid, x) else {
            continue;
        };
        eligible += 1;
        // search left partners beyond the planar basin and short of the second-order ridge
        let lo = x.saturating_sub(384);
        let hi = x.saturating_sub(33);
        let best = (lo..=hi)
            .max_by(|&a, &b| surf.grid[[x, a]].total_cmp(&surf.grid[[x, b]]))
            .unwrap();
        if ((x - best) as i64 - s as i64).abs() <= 2 {
            hits += 1;
        }
    }
    let frac = hits as f64 / eligible as f64;
    check(
        eligible > 0 && frac >= 0.9,
        format!("{hits}/{eligible} columns with phi >= 0.2 ({:.1}%, limit 90%) peak within 2 px of the recorded separation", 100.0 * frac),
    )
}

fn scale_law() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let sigmas = [2.0, 4.0, 8.0, 16.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.0, 1.0, 2.0] {
        let fit = curvature_scale_law::<f64>(beta, &sigmas, &seeds).unwrap();
        let err = (fit.exponent - (beta - 1.0)).abs();
        ok &= err <= 0.15;
        let ci = fit.ci95.unwrap();
        if beta == 1.0 {
            ok &= ci.0 <= 0.0 && 0.0 <= ci.1;
        }
        parts.push(format!(
            "beta {beta}: {:.3} (want {:.0}, 95% CI [{:.3}, {:.3}])",
            fit.exponent,
            beta - 1.0,
            ci.0,
            ci.1
        ));
    }
    check(
        ok,
        format!("{} over sigma 2,4,8,16 and 10 seeds", parts.join("; ")),
    )
}

fn basin_ordering() -> Outcome {
    let window = ColumnWindow::centered(1536, ColumnWindow::DEFAULT_LEN);
    let width = |beta: f64, b: u64| {
        let stims = batch(SurfaceKind::Ellipsoid, beta, 500 + 5 * b..505 + 5 * b);
        let refs: Vec<&Stimulus> = stims.iter().collect();
        let surf = match_surface::<f64>(&refs, 496..528, window, MatchKernel::default()).unwrap();
        basin_half_width(&basin_slice(&surf).unwrap()).unwrap_or(f64::NAN)
    };
    let results: Vec<(f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|b| (width(0.0, b), width(1.0, b), width(2.0, b)))
        .collect();
    let ordered = results.iter().filter(|(w, p, b)| w < p && p < b).count();
    let mean =
        |f: fn(&(f64, f64, f64)) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    check(
        ordered == results.len(),
        format!(
            "{ordered}/10 batches ordered white < pink < brown; mean half-widths {:.2} / {:.2} / {:.2} px",
            mean(|r| r.0),
            mean(|r| r.1),
            mean(|r| r.2)
        ),
    )
}

fn statistics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let na = rng.random_range(2..60);
        let nb = rng.random_range(2..60);
        let shift: f64 = rng.random_range(-2.0..2.0);
        let a: Vec<f64> = (0..na)
            .map(|_| 1000.0 + 300.0 * rng.random::<f64>() + 100.0 * shift)
            .collect();
        let b: Vec<f64> = (0..nb)
            .map(|_| 1000.0 + 500.0 * rng.random::<f64>())
            .collect();
        let r = t_test_one_tailed(&a, &b, Tail::AGreater, VarianceModel::Welch).unwrap();
        let oracle = StudentsT::new(0.0, 1.0, r.df).unwrap().sf(r.t);
        worst = worst.max((r.p - oracle).abs());
    }
    let zero = t_test_one_tailed(
        &[1.0, 2.0, 3.0],
        &[3.0, 1.0, 2.0],
        Tail::AGreater,
        VarianceModel::Welch,
    )
    .unwrap();
    check(
        worst <= 1e-9 && zero.t == 0.0 && zero.p == 0.5,
        format!(
            "max |p - reference| over 100 Welch pairs = {worst:.2e} (limit 1e-9); t=0 gives p={}",
            zero.p
        ),
    )
}

fn sirds(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sirds"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "sirds {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

async fn bot_run(dir: &Path) -> Result<(usize, usize), String> {
    let session = Arc::new(Session::open(dir).map_err(|e| e.to_string())?);
    let manifest = session.manifest.clone();
    let app = router(session, None);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // 8 of the 2100 scored responses are slow outliers
    let mut slow = std::collections::HashSet::new();
    while slow.len() < 8 {
        slow.insert(rng.random_range(0..2100usize));
    }
    let (mut posted, mut rejected) = (0, 0);
    for subject in 0..15 {
        let name = format!("bot{subject:02}");
        let mut training = 0;
        loop {
            let uri = format!("/api/progress?subject={name}");
            let res = app
                .clone()
                .oneshot(Request::get(uri).body(Body::empty()).unwrap())
                .await
                .unwrap();
            let p: serde_json::Value =
                serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes())
                    .unwrap();
            let next = &p["next"];
            if next["phase"] == "done" {
                break;
            }
            let index = next["trial_index"].as_u64().unwrap() as usize;
            let id = next["stimulus_id"].as_str().unwrap().to_string();
            let is_training = next["phase"] == "training";
            let serial = subject * 140 + index;
            let rt = if !is_training && slow.contains(&serial) {
                12_000.0 + serial as f64
            } else {
                1800.0 + (serial % 97) as f64 * 25.0
            };
            let body = json!({
                "schema_version": 1,
                "subject": name,
                "trial_index": index,
                "stimulus_id": id,
                "perceived_time_ms": rt,
                "choice": manifest.truth_of(&id).unwrap(),
                "training": is_training,
            });
            let req = Request::post("/api/response")
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap();
            let res = app.clone().oneshot(req).await.unwrap();
            if res.status() != StatusCode::OK {
                rejected += 1;
                break;
            }
            if is_training {
                training += 1;
            } else {
                posted += 1;
            }
        }
        if training != 10 {
            return Err(format!("{name} answered {training} training trials"));
        }
    }
    Ok((posted, rejected))
}

fn csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("# schema_version: 1") {
        return Err(format!("{} lacks the schema line", path.display()));
    }
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let session = tmp.path().join("session");
    let s = session.to_str().unwrap();
    sirds(&["gen", "--experiment", "1", "--seed", "31", "--out", s])?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (posted, rejected) = rt.block_on(bot_run(&session))?;
    let report = tmp.path().join("report");
    let out = sirds(&["score", "--session", s, "--out", report.to_str().unwrap()])?;
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let excluded = summary["outliers_excluded"].as_u64().unwrap_or(u64::MAX);

    let (acc_h, acc) = csv_rows(&report.join("accuracy_by_beta.csv"))?;
    let (rt_h, rts) = csv_rows(&report.join("rt_by_beta.csv"))?;
    let (tt_h, tts) = csv_rows(&report.join("ttests.csv"))?;
    let betas: Vec<&str> = acc.iter().map(|r| r[0].as_str()).collect();
    let shaped = acc_h == ["beta", "correct_rate", "mistakes", "undefinables", "trials"]
        && betas == ["0", "0.5", "1", "1.5", "2"]
        && acc.iter().all(|r| r[1] == "100.00" && r[4] == "420")
        && rt_h[..3] == ["beta", "rt_mean_ms", "rt_std_ms"]
        && rts.len() == 5
        && tt_h[..3] == ["hypothesis", "significant", "p_value"]
        && tts.len() == 10;
    let outliers_in_rt: u64 = rts.iter().map(|r| r[5].parse::<u64>().unwrap_or(0)).sum();
    check(
        posted == 2100 && rejected == 0 && excluded == 8 && outliers_in_rt == 8 && shaped,
        format!(
            "{posted} responses from 15 subjects via the HTTP API ({rejected} rejected), {excluded} outliers excluded (want 8), \
             tables: {} beta rows, {} rt rows, {} t-tests",
            acc.len(),
            rts.len(),
            tts.len()
        ),
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        sirds(&[
            "gen",
            "--experiment",
            "2",
            "--seed",
            "1234",
            "--out",
            d.to_str().unwrap(),
        ])?;
    }
    let (fa, fb) = (files_under(&a), files_under(&b));
    let pngs = fa
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .count();
    let differing = fa.iter().filter(|(k, v)| fb.get(*k) != Some(v)).count();
    check(
        fa.len() == fb.len() && differing == 0 && pngs == 125,
        format!(
            "{} files ({pngs} stimulus PNGs) per run, {differing} differ",
            fa.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("spectral fidelity", spectral_fidelity),
        ("constraint exactness", constraint_exactness),
        ("disparity round-trip", disparity_round_trip),
        ("ridge recovery", ridge_recovery),
        ("scale-invariance law", scale_law),
        ("basin ordering", basin_ordering),
        ("statistics oracle", statistics_oracle),
        ("end-to-end pipeline", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".to_string()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} [{}] {name}: {detail} [{:.1?}]",
            i + 1,
            start.elapsed()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
