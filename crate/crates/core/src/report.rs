//! CSV tables for a scored session.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{ConditionStats, Experiment, StatsReport, SCHEMA_VERSION};
use crate::io::{tmp_path, write_atomic};

pub const ACCURACY_FILE: &str = "accuracy_by_beta.csv";
pub const RT_FILE: &str = "rt_by_beta.csv";
pub const TTEST_FILE: &str = "ttests.csv";
pub const SIZE_FILE: &str = "accuracy_by_size.csv";
pub const RATIO_FILE: &str = "accuracy_by_ratio.csv";
pub const CELL_FILE: &str = "accuracy_by_cell.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

/// CSV bytes preceded by a `# schema_version: 1` comment line.
fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w =
        csv::Writer::from_writer(format!("# schema_version: {SCHEMA_VERSION}\n").into_bytes());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn accuracy_rows(stats: &[ConditionStats]) -> Vec<Vec<String>> {
    stats
        .iter()
        .map(|c| {
            vec![
                c.level.clone(),
                pct(c.correct_rate),
                c.mistakes.to_string(),
                c.undefinables.to_string(),
                c.trials.to_string(),
            ]
        })
        .collect()
}

fn rt_rows(stats: &[ConditionStats]) -> Vec<Vec<String>> {
    stats
        .iter()
        .map(|c| {
            let sem = c
                .rt_std_ms
                .filter(|_| c.rt_n > 0)
                .map(|s| s / (c.rt_n as f64).sqrt());
            vec![
                c.level.clone(),
                opt(c.rt_mean_ms),
                opt(c.rt_std_ms),
                opt(sem),
                c.rt_n.to_string(),
                c.outliers_excluded.to_string(),
                c.low_power.to_string(),
            ]
        })
        .collect()
}

/// Renders every table for `stats` as `(file name, bytes)` without touching the disk.
pub fn render_tables(stats: &StatsReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    if stats.records == 0 || stats.by_beta.is_empty() {
        return Err(Error::data("report has no scored responses"));
    }
    let mut files = vec![
        (
            ACCURACY_FILE,
            table(
                &["beta", "correct_rate", "mistakes", "undefinables", "trials"],
                accuracy_rows(&stats.by_beta),
            )?,
        ),
        (
            RT_FILE,
            table(
                &[
                    "beta",
                    "rt_mean_ms",
                    "rt_std_ms",
                    "rt_sem_ms",
                    "n",
                    "outliers_excluded",
                    "low_power",
                ],
                rt_rows(&stats.by_beta),
            )?,
        ),
        (
            TTEST_FILE,
            table(
                &[
                    "hypothesis",
                    "significant",
                    "p_value",
                    "t",
                    "df",
                    "n_a",
                    "n_b",
                ],
                stats.t_tests.iter().map(|t| {
                    vec![
                        t.hypothesis.clone(),
                        if t.significant { "yes" } else { "no" }.to_string(),
                        format!("{:.4e}", t.p),
                        format!("{:.4}", t.t),
                        format!("{:.2}", t.df),
                        t.n_a.to_string(),
                        t.n_b.to_string(),
                    ]
                }),
            )?,
        ),
    ];
    if stats.experiment_id == Experiment::IdentificationLimits {
        let size_rows = stats
            .by_size
            .iter()
            .zip(rt_rows(&stats.by_size))
            .map(|(c, rt)| {
                let mut row = vec![
                    c.level.clone(),
                    pct(c.correct_rate),
                    pct(c.mistake_rate),
                    pct(c.undefinable_rate),
                ];
                row.extend(rt.into_iter().skip(1));
                row
            });
        files.push((
            SIZE_FILE,
            table(
                &[
                    "size",
                    "correct_rate",
                    "mistake_rate",
                    "undefinable_rate",
                    "rt_mean_ms",
                    "rt_std_ms",
                    "rt_sem_ms",
                    "n",
                    "outliers_excluded",
                    "low_power",
                ],
                size_rows,
            )?,
        ));
        files.push((
            RATIO_FILE,
            table(
                &[
                    "depth_ratio",
                    "correct_rate",
                    "mistakes",
                    "undefinables",
                    "trials",
                ],
                accuracy_rows(&stats.by_ratio),
            )?,
        ));
        let cell_rows = stats.by_cell.iter().map(|c| {
            let mut row: Vec<String> = c.level.split('/').map(str::to_string).collect();
            // level is beta/ratio/size with ratio written as 1/k
            let size = row.pop().unwrap_or_default();
            let beta = row.remove(0);
            let ratio = row.join("/");
            vec![
                beta,
                ratio,
                size,
                pct(c.undefinable_rate),
                pct(c.mistake_rate),
                pct(c.correct_rate),
                c.trials.to_string(),
            ]
        });
        files.push((
            CELL_FILE,
            table(
                &[
                    "beta",
                    "depth_ratio",
                    "size",
                    "undefinable_pct",
                    "mistake_pct",
                    "correct_pct",
                    "trials",
                ],
                cell_rows,
            )?,
        ));
    }
    let mut summary = serde_json::to_vec_pretty(stats)?;
    summary.push(b'\n');
    files.push((SUMMARY_FILE, summary));
    Ok(files)
}

/// Writes all tables into `out_dir`. Nothing is renamed into place unless every file was
/// written, so a failure leaves no partial report.
pub fn write_report(stats: &StatsReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let files = render_tables(stats)?;
    std::fs::create_dir_all(out_dir)?;
    let mut staged = Vec::new();
    for (name, bytes) in &files {
        let target = out_dir.join(name);
        let tmp = tmp_path(&target);
        if let Err(e) = std::fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(e.into());
        }
        staged.push((tmp, target));
    }
    let mut written = Vec::new();
    for (tmp, target) in staged {
        std::fs::rename(&tmp, &target)?;
        written.push(target);
    }
    Ok(written)
}

/// Writes a single table atomically; used for ad-hoc exports.
pub fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_atomic(path, &table(header, rows)?)
}
