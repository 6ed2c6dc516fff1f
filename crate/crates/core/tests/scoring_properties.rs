use proptest::prelude::*;
use sirds_core::experiment::{
    plan_inventory, score, Experiment, Label, ScoreOptions, SessionManifest, StatsReport,
    TrialRecord,
};
use sirds_core::render::ViewGeometry;

fn manifest(e: Experiment, seed: u64) -> SessionManifest {
    plan_inventory(e, seed, ViewGeometry::default()).1
}

/// `picks[i]` selects a choice index for trial i; RTs are drawn alongside.
fn records(m: &SessionManifest, subject: &str, picks: &[(usize, f64)]) -> Vec<TrialRecord> {
    m.trials
        .iter()
        .zip(picks)
        .map(|(t, &(c, rt))| {
            let choice = m.choice_set[c % m.choice_set.len()];
            TrialRecord::evaluate(m, subject, t.index, &t.stimulus_id, choice, rt, false).unwrap()
        })
        .collect()
}

fn assert_same(a: &StatsReport, b: &StatsReport) {
    assert_eq!(a.records, b.records);
    assert_eq!(a.outliers_excluded, b.outliers_excluded);
    for (x, y) in a
        .by_beta
        .iter()
        .zip(&b.by_beta)
        .chain(a.by_cell.iter().zip(&b.by_cell))
    {
        assert_eq!(
            (x.trials, x.correct, x.mistakes, x.undefinables, x.rt_n),
            (y.trials, y.correct, y.mistakes, y.undefinables, y.rt_n)
        );
        match (x.rt_mean_ms, y.rt_mean_ms) {
            (Some(p), Some(q)) => assert!((p - q).abs() < 1e-9 * p.abs().max(1.0)),
            (p, q) => assert_eq!(p, q),
        }
    }
    assert_eq!(a.t_tests.len(), b.t_tests.len());
    for (x, y) in a.t_tests.iter().zip(&b.t_tests) {
        assert_eq!(x.tail, y.tail);
        assert!((x.p - y.p).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scoring_ignores_record_order(
        exp in prop::sample::select(vec![Experiment::SurfaceRecognition, Experiment::DetailDiscrimination, Experiment::IdentificationLimits]),
        picks in prop::collection::vec((0usize..8, 200.0f64..15_000.0), 180),
        shuffle_seed in any::<u64>(),
    ) {
        let m = manifest(exp, 5);
        let recs = records(&m, "a", &picks);
        let mut shuffled = recs.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(shuffle_seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = score(&m, &recs, ScoreOptions::default()).unwrap();
        let b = score(&m, &shuffled, ScoreOptions::default()).unwrap();
        assert_same(&a, &b);
    }

    #[test]
    fn counts_are_conserved(
        picks in prop::collection::vec((0usize..8, 200.0f64..15_000.0), 140),
        cutoff in 1000.0f64..20_000.0,
    ) {
        let m = manifest(Experiment::SurfaceRecognition, 9);
        let recs = records(&m, "a", &picks);
        let r = score(&m, &recs, ScoreOptions { rt_cutoff_ms: cutoff, ..Default::default() }).unwrap();
        let expected_outliers = recs.iter().filter(|r| r.correct && r.perceived_time_ms > cutoff).count();
        prop_assert_eq!(r.outliers_excluded, expected_outliers);
        prop_assert_eq!(r.by_beta.iter().map(|c| c.trials).sum::<usize>(), 140);
        for c in &r.by_beta {
            prop_assert_eq!(c.correct + c.mistakes + c.undefinables, c.trials);
            prop_assert_eq!(c.rt_n + c.outliers_excluded, c.correct);
            prop_assert!((c.correct_rate + c.mistake_rate + c.undefinable_rate - 100.0).abs() < 1e-9);
            prop_assert_eq!(c.low_power, c.correct < 5);
        }
    }
}

#[test]
fn subjects_are_scored_together() {
    let m = manifest(Experiment::SurfaceRecognition, 1);
    let picks: Vec<(usize, f64)> = (0..140).map(|i| (i, 1000.0 + i as f64)).collect();
    let mut all = records(&m, "a", &picks);
    all.extend(records(&m, "b", &picks));
    let r = score(&m, &all, ScoreOptions::default()).unwrap();
    assert_eq!(r.records, 280);
    // the same subject answering twice is a data error
    let mut dup = records(&m, "a", &picks);
    dup.push(dup[0].clone());
    assert!(score(&m, &dup, ScoreOptions::default()).is_err());
}

#[test]
fn forged_correctness_is_rejected() {
    let m = manifest(Experiment::DetailDiscrimination, 1);
    let picks: Vec<(usize, f64)> = (0..125).map(|i| (i, 1500.0)).collect();
    let mut recs = records(&m, "a", &picks);
    let wrong = recs
        .iter()
        .position(|r| !r.correct && !r.undefinable)
        .unwrap();
    recs[wrong].correct = true;
    assert!(score(&m, &recs, ScoreOptions::default()).is_err());
    recs[wrong].correct = false;
    recs[wrong].choice = Label::Undefinable;
    assert!(score(&m, &recs, ScoreOptions::default()).is_err());
}
