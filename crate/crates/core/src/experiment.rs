//! Stimulus inventories, session manifests, response records and scoring for the three
//! experiments: surface recognition, detail discrimination, and fine-detail limits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{
    embed_glyph, make_surface, smooth5, GlyphSpec, Letter, SurfaceKind, MAX_GLYPH_OFFSET,
};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::render::{render, Stimulus, ViewGeometry};
use crate::spectral::{generate_patch, SpectrumSpec};
use crate::stats::{mean, sample_variance, t_test_one_tailed, Tail, VarianceModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const STIMULUS_HEIGHT: usize = 1024;
pub const TRAINING_TRIALS: usize = 10;
pub const DEFAULT_RT_CUTOFF_MS: f64 = 10_000.0;
/// Correct responses per cell below which RT statistics are flagged as low power.
pub const LOW_POWER_CORRECT: usize = 5;

pub const EXPERIMENT_BETAS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];
pub const LIMIT_BETAS: [f64; 3] = [0.0, 0.5, 1.0];
pub const LIMIT_SIZES: [usize; 5] = [20, 40, 60, 80, 100];
pub const LIMIT_RATIOS: [f64; 3] = [1.0 / 5.0, 1.0 / 6.0, 1.0 / 7.0];
pub const DETAIL_LETTER_SIZE: usize = 240;
pub const DETAIL_RATIO: f64 = 1.0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Experiment {
    SurfaceRecognition = 1,
    DetailDiscrimination = 2,
    IdentificationLimits = 3,
}

impl Experiment {
    pub fn id(self) -> u8 {
        self as u8
    }

    /// Subject-facing options, `UNDEFINABLE` last.
    pub fn choice_set(self) -> Vec<Label> {
        let mut labels: Vec<Label> = match self {
            Experiment::SurfaceRecognition => SurfaceKind::EXPERIMENT
                .iter()
                .map(|&k| Label::Surface(k))
                .collect(),
            Experiment::DetailDiscrimination => {
                [Letter::S, Letter::X, Letter::L, Letter::T, Letter::None]
                    .map(Label::Letter)
                    .to_vec()
            }
            Experiment::IdentificationLimits => {
                vec![Label::Letter(Letter::P), Label::Letter(Letter::B)]
            }
        };
        labels.push(Label::Undefinable);
        labels
    }
}

impl TryFrom<u8> for Experiment {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Experiment::SurfaceRecognition),
            2 => Ok(Experiment::DetailDiscrimination),
            3 => Ok(Experiment::IdentificationLimits),
            _ => Err(Error::param(format!(
                "experiment id must be 1, 2 or 3, got {v}"
            ))),
        }
    }
}

impl From<Experiment> for u8 {
    fn from(e: Experiment) -> u8 {
        e.id()
    }
}

/// Truth label or subject choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Surface(SurfaceKind),
    Letter(Letter),
    Undefinable,
}

impl Label {
    pub fn name(&self) -> &'static str {
        match self {
            Label::Surface(k) => k.name(),
            Label::Letter(l) => l.name(),
            Label::Undefinable => "UNDEFINABLE",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "UNDEFINABLE" {
            return Ok(Label::Undefinable);
        }
        if let Ok(k) = s.parse::<SurfaceKind>() {
            return Ok(Label::Surface(k));
        }
        match s {
            "S" | "X" | "L" | "T" | "P" | "B" | "NONE" => s.parse().map(Label::Letter),
            _ => Err(Error::data(format!("unknown label {s:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Factors that produced a stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub beta: f64,
    pub surface: SurfaceKind,
    pub glyph: Option<GlyphSpec>,
}

/// Everything needed to render one stimulus deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPlan {
    pub id: String,
    pub spectrum: SpectrumSpec,
    pub condition: Condition,
    pub truth: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub stimulus_id: String,
    pub truth: Label,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub schema_version: u32,
    pub experiment_id: Experiment,
    pub master_seed: u64,
    pub geometry: ViewGeometry,
    pub trials: Vec<Trial>,
    pub training_ids: Vec<String>,
    pub choice_set: Vec<Label>,
}

impl SessionManifest {
    pub fn trial(&self, index: usize) -> Option<&Trial> {
        self.trials.get(index)
    }

    /// Truth of a pool stimulus by id.
    pub fn truth_of(&self, stimulus_id: &str) -> Option<Label> {
        self.trials
            .iter()
            .find(|t| t.stimulus_id == stimulus_id)
            .map(|t| t.truth)
    }

    pub fn check_schema(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::data(format!(
                "manifest schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(())
    }
}

/// Plans every stimulus of an experiment and a seeded session order.
///
/// Each stimulus gets a fresh noise seed drawn from `master_seed`; trial order is a seeded
/// permutation and 10 training stimuli are drawn from the same pool.
pub fn plan_inventory(
    experiment: Experiment,
    master_seed: u64,
    geometry: ViewGeometry,
) -> (Vec<StimulusPlan>, SessionManifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(experiment.id() as u64);
    let mut conditions: Vec<(Condition, Label)> = Vec::new();
    let offset = |rng: &mut ChaCha8Rng| rng.random_range(-MAX_GLYPH_OFFSET..=MAX_GLYPH_OFFSET);
    match experiment {
        Experiment::SurfaceRecognition => {
            for surface in SurfaceKind::EXPERIMENT {
                for beta in EXPERIMENT_BETAS {
                    for _ in 0..7 {
                        conditions.push((
                            Condition {
                                beta,
                                surface,
                                glyph: None,
                            },
                            Label::Surface(surface),
                        ));
                    }
                }
            }
        }
        Experiment::DetailDiscrimination => {
            for letter in [Letter::S, Letter::X, Letter::L, Letter::T, Letter::None] {
                for beta in EXPERIMENT_BETAS {
                    for _ in 0..5 {
                        let glyph = GlyphSpec {
                            letter,
                            size: DETAIL_LETTER_SIZE,
                            depth_ratio: DETAIL_RATIO,
                            horizontal_offset: if letter == Letter::None {
                                0
                            } else {
                                offset(&mut rng)
                            },
                        };
                        let c = Condition {
                            beta,
                            surface: SurfaceKind::Ellipsoid,
                            glyph: Some(glyph),
                        };
                        conditions.push((c, Label::Letter(letter)));
                    }
                }
            }
        }
        Experiment::IdentificationLimits => {
            for letter in [Letter::P, Letter::B] {
                for size in LIMIT_SIZES {
                    for depth_ratio in LIMIT_RATIOS {
                        for beta in LIMIT_BETAS {
                            for _ in 0..2 {
                                let glyph = GlyphSpec {
                                    letter,
                                    size,
                                    depth_ratio,
                                    horizontal_offset: offset(&mut rng),
                                };
                                let c = Condition {
                                    beta,
                                    surface: SurfaceKind::Ellipsoid,
                                    glyph: Some(glyph),
                                };
                                conditions.push((c, Label::Letter(letter)));
                            }
                        }
                    }
                }
            }
        }
    }
    let plans: Vec<StimulusPlan> = conditions
        .into_iter()
        .enumerate()
        .map(|(i, (condition, truth))| StimulusPlan {
            id: format!("e{}-{:03}", experiment.id(), i),
            spectrum: SpectrumSpec::new(condition.beta, SpectrumSpec::DEFAULT_SIZE, rng.random()),
            condition,
            truth,
        })
        .collect();

    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.shuffle(&mut rng);
    let trials = order
        .iter()
        .enumerate()
        .map(|(index, &p)| Trial {
            index,
            stimulus_id: plans[p].id.clone(),
            truth: plans[p].truth,
            condition: plans[p].condition,
        })
        .collect();
    let training_ids = plans
        .choose_multiple(&mut rng, TRAINING_TRIALS)
        .map(|p| p.id.clone())
        .collect();
    let manifest = SessionManifest {
        schema_version: SCHEMA_VERSION,
        experiment_id: experiment,
        master_seed,
        geometry,
        trials,
        training_ids,
        choice_set: experiment.choice_set(),
    };
    (plans, manifest)
}

/// Builds the depth map of a plan: surface, then glyph and 5x5 smoothing when a glyph is set.
pub fn plan_depth<T: Real>(
    plan: &StimulusPlan,
    geometry: &ViewGeometry,
) -> Result<crate::depth::DepthField<T>> {
    let base = make_surface::<T>(
        plan.condition.surface,
        geometry.image_width(),
        STIMULUS_HEIGHT,
    )?;
    match &plan.condition.glyph {
        Some(glyph) => Ok(smooth5(&embed_glyph(&base, glyph)?)),
        None => Ok(base),
    }
}

pub fn render_plan<T: Real>(plan: &StimulusPlan, geometry: &ViewGeometry) -> Result<Stimulus> {
    let depth = plan_depth::<T>(plan, geometry)?;
    let patch = generate_patch::<T>(&plan.spectrum)?;
    render(&depth, &patch, geometry, plan.id.clone())
}

/// One subject response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    #[serde(default = "default_subject")]
    pub subject: String,
    /// Index into the manifest trials, or into `training_ids` when `training` is set.
    pub trial_index: usize,
    pub stimulus_id: String,
    pub perceived_time_ms: f64,
    pub choice: Label,
    pub correct: bool,
    pub undefinable: bool,
    #[serde(default)]
    pub training: bool,
}

fn default_subject() -> String {
    "anonymous".to_string()
}

impl TrialRecord {
    /// Builds a record whose correctness flags are derived from the manifest truth.
    pub fn evaluate(
        manifest: &SessionManifest,
        subject: impl Into<String>,
        trial_index: usize,
        stimulus_id: &str,
        choice: Label,
        perceived_time_ms: f64,
        training: bool,
    ) -> Result<Self> {
        let truth = expected_truth(manifest, trial_index, stimulus_id, training)?;
        if !manifest.choice_set.contains(&choice) {
            return Err(Error::data(format!(
                "choice {choice} is not offered in this experiment"
            )));
        }
        if !(perceived_time_ms.is_finite() && perceived_time_ms > 0.0) {
            return Err(Error::data(format!(
                "perceived time must be positive, got {perceived_time_ms}"
            )));
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            subject: subject.into(),
            trial_index,
            stimulus_id: stimulus_id.to_string(),
            perceived_time_ms,
            choice,
            correct: choice == truth,
            undefinable: choice == Label::Undefinable,
            training,
        })
    }
}

fn expected_truth(
    manifest: &SessionManifest,
    index: usize,
    stimulus_id: &str,
    training: bool,
) -> Result<Label> {
    let id = if training {
        manifest.training_ids.get(index).map(String::as_str)
    } else {
        manifest.trial(index).map(|t| t.stimulus_id.as_str())
    };
    match id {
        Some(id) if id == stimulus_id => manifest
            .truth_of(id)
            .ok_or_else(|| Error::data(format!("stimulus {id} missing from the pool"))),
        Some(id) => Err(Error::data(format!(
            "trial {index} shows {id}, not {stimulus_id}"
        ))),
        None => Err(Error::data(format!(
            "unknown {} trial {index}",
            if training { "training" } else { "test" }
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub rt_cutoff_ms: f64,
    pub variance: VarianceModel,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            rt_cutoff_ms: DEFAULT_RT_CUTOFF_MS,
            variance: VarianceModel::Welch,
        }
    }
}

/// Accuracy and response-time summary for one level of one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub factor: String,
    pub level: String,
    pub trials: usize,
    pub correct: usize,
    pub mistakes: usize,
    pub undefinables: usize,
    /// Percent correct; undefinable selections count in the denominator.
    pub correct_rate: f64,
    pub mistake_rate: f64,
    pub undefinable_rate: f64,
    /// Correct responses within the RT cutoff.
    pub rt_n: usize,
    pub rt_mean_ms: Option<f64>,
    pub rt_std_ms: Option<f64>,
    pub outliers_excluded: usize,
    pub low_power: bool,
    #[serde(skip)]
    rts: Vec<f64>,
}

impl ConditionStats {
    fn new(factor: &str, level: String) -> Self {
        Self {
            factor: factor.to_string(),
            level,
            trials: 0,
            correct: 0,
            mistakes: 0,
            undefinables: 0,
            correct_rate: 0.0,
            mistake_rate: 0.0,
            undefinable_rate: 0.0,
            rt_n: 0,
            rt_mean_ms: None,
            rt_std_ms: None,
            outliers_excluded: 0,
            low_power: false,
            rts: Vec::new(),
        }
    }

    fn add(&mut self, record: &TrialRecord, cutoff: f64) {
        self.trials += 1;
        if record.correct {
            self.correct += 1;
            if record.perceived_time_ms > cutoff {
                self.outliers_excluded += 1;
            } else {
                self.rts.push(record.perceived_time_ms);
            }
        } else if record.undefinable {
            self.undefinables += 1;
        } else {
            self.mistakes += 1;
        }
    }

    fn finish(&mut self) {
        let pct = |k: usize| 100.0 * k as f64 / self.trials as f64;
        self.correct_rate = pct(self.correct);
        self.mistake_rate = pct(self.mistakes);
        self.undefinable_rate = pct(self.undefinables);
        self.rt_n = self.rts.len();
        self.rt_mean_ms = (!self.rts.is_empty()).then(|| mean(&self.rts));
        self.rt_std_ms = match self.rts.len() {
            0 => None,
            1 => Some(0.0),
            _ => Some(sample_variance(&self.rts).sqrt()),
        };
        self.low_power = self.correct < LOW_POWER_CORRECT;
    }

    /// Response times that entered the mean.
    pub fn response_times(&self) -> &[f64] {
        &self.rts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub beta_a: f64,
    pub beta_b: f64,
    pub tail: Tail,
    pub hypothesis: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub experiment_id: Experiment,
    pub options: ScoreOptions,
    pub records: usize,
    pub training_records_ignored: usize,
    pub outliers_excluded: usize,
    pub by_beta: Vec<ConditionStats>,
    /// Experiment 3 only.
    pub by_size: Vec<ConditionStats>,
    /// Experiment 3 only.
    pub by_ratio: Vec<ConditionStats>,
    /// Experiment 3 only: level is `beta/ratio/size`.
    pub by_cell: Vec<ConditionStats>,
    pub t_tests: Vec<TTestRow>,
}

pub fn format_beta(beta: f64) -> String {
    format!("{beta}")
}

/// `1/5`-style label for the preset depth ratios, decimal otherwise.
pub fn format_ratio(ratio: f64) -> String {
    for d in 2..=20u32 {
        if (ratio - 1.0 / d as f64).abs() < 1e-12 {
            return format!("1/{d}");
        }
    }
    format!("{ratio}")
}

/// Scores test responses; training records are ignored.
pub fn score(
    manifest: &SessionManifest,
    records: &[TrialRecord],
    options: ScoreOptions,
) -> Result<StatsReport> {
    manifest.check_schema()?;
    let mut seen = HashSet::new();
    let mut scored = Vec::new();
    let mut training = 0;
    for r in records {
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::data(format!(
                "record schema version {} (expected {SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        if r.training {
            training += 1;
            continue;
        }
        let expected = TrialRecord::evaluate(
            manifest,
            r.subject.clone(),
            r.trial_index,
            &r.stimulus_id,
            r.choice,
            r.perceived_time_ms,
            false,
        )?;
        if expected.correct != r.correct || expected.undefinable != r.undefinable {
            return Err(Error::data(format!(
                "trial {} carries inconsistent correctness flags",
                r.trial_index
            )));
        }
        if !seen.insert((r.subject.as_str(), r.trial_index)) {
            return Err(Error::data(format!(
                "duplicate response for trial {} of {}",
                r.trial_index, r.subject
            )));
        }
        scored.push(r);
    }
    if scored.is_empty() {
        return Err(Error::data("no scored responses"));
    }

    let cutoff = options.rt_cutoff_ms;
    let mut by_beta: BTreeMap<OrdF64, ConditionStats> = BTreeMap::new();
    let mut by_size: BTreeMap<usize, ConditionStats> = BTreeMap::new();
    let mut by_ratio: BTreeMap<std::cmp::Reverse<OrdF64>, ConditionStats> = BTreeMap::new();
    let mut by_cell: BTreeMap<(OrdF64, std::cmp::Reverse<OrdF64>, usize), ConditionStats> =
        BTreeMap::new();
    let limits = manifest.experiment_id == Experiment::IdentificationLimits;
    for r in &scored {
        let cond = manifest.trials[r.trial_index].condition;
        let beta = OrdF64(cond.beta);
        by_beta
            .entry(beta)
            .or_insert_with(|| ConditionStats::new("beta", format_beta(cond.beta)))
            .add(r, cutoff);
        if let (true, Some(g)) = (limits, cond.glyph) {
            by_size
                .entry(g.size)
                .or_insert_with(|| ConditionStats::new("size", g.size.to_string()))
                .add(r, cutoff);
            let ratio = std::cmp::Reverse(OrdF64(g.depth_ratio));
            by_ratio
                .entry(ratio)
                .or_insert_with(|| ConditionStats::new("depth_ratio", format_ratio(g.depth_ratio)))
                .add(r, cutoff);
            by_cell
                .entry((beta, ratio, g.size))
                .or_insert_with(|| {
                    let level = format!(
                        "{}/{}/{}",
                        format_beta(cond.beta),
                        format_ratio(g.depth_ratio),
                        g.size
                    );
                    ConditionStats::new("beta/depth_ratio/size", level)
                })
                .add(r, cutoff);
        }
    }
    let finish = |m: Vec<ConditionStats>| -> Vec<ConditionStats> {
        m.into_iter()
            .map(|mut c| {
                c.finish();
                c
            })
            .collect()
    };
    let by_beta = finish(by_beta.into_values().collect());
    let t_tests = pairwise_t_tests(&by_beta, options.variance);
    Ok(StatsReport {
        schema_version: SCHEMA_VERSION,
        experiment_id: manifest.experiment_id,
        options,
        records: scored.len(),
        training_records_ignored: training,
        outliers_excluded: by_beta.iter().map(|c| c.outliers_excluded).sum(),
        by_size: finish(by_size.into_values().collect()),
        by_ratio: finish(by_ratio.into_values().collect()),
        by_cell: finish(by_cell.into_values().collect()),
        by_beta,
        t_tests,
    })
}

/// One-tailed test for every pair of noise levels, in the direction of the observed difference.
fn pairwise_t_tests(by_beta: &[ConditionStats], variance: VarianceModel) -> Vec<TTestRow> {
    let mut rows = Vec::new();
    for (i, a) in by_beta.iter().enumerate() {
        for b in &by_beta[i + 1..] {
            let (ra, rb) = (a.response_times(), b.response_times());
            if ra.len() < 2 || rb.len() < 2 {
                continue;
            }
            let tail = if mean(ra) >= mean(rb) {
                Tail::AGreater
            } else {
                Tail::ALess
            };
            let Ok(test) = t_test_one_tailed(ra, rb, tail, variance) else {
                continue;
            };
            let op = if tail == Tail::AGreater { ">" } else { "<" };
            rows.push(TTestRow {
                beta_a: a.level.parse().unwrap_or(f64::NAN),
                beta_b: b.level.parse().unwrap_or(f64::NAN),
                tail,
                hypothesis: format!("RT(beta={}) {op} RT(beta={})", a.level, b.level),
                t: test.t,
                df: test.df,
                p: test.p,
                significant: test.significant,
                n_a: ra.len(),
                n_b: rb.len(),
            });
        }
    }
    rows
}

/// Total order over finite floats for grouping keys.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
