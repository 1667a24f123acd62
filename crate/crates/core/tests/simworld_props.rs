use proptest::prelude::*;
use rand::Rng;

use prism_core::simworld::copula::{
    bivariate_normal_cdf, feasible_range, joint_success, latent_correlation, normal_quantile,
};
use prism_core::simworld::{
    sample_candidate, sample_review, AgentPopulation, JointTable, ReviewerModel, TaskModel, WorldError, WorldSeed,
};

proptest! {
    #[test]
    fn latent_correlation_reproduces_the_joint(p1 in 0.05f64..0.95, p2 in 0.05f64..0.95, t in 0.05f64..0.95) {
        let (lo, hi) = feasible_range(p1, p2);
        let rho = lo + t * (hi - lo);
        let r = latent_correlation(p1, p2, rho, 1e-12);
        let joint = bivariate_normal_cdf(normal_quantile(p1), normal_quantile(p2), r);
        prop_assert!((joint - joint_success(p1, p2, rho)).abs() < 1e-7);
    }

    #[test]
    fn streams_are_reproducible_and_distinct(root in any::<u64>(), idx in 0u64..1000) {
        let seed = WorldSeed::new(root);
        let a: u64 = seed.stream("x", idx).random();
        prop_assert_eq!(a, seed.stream("x", idx).random::<u64>());
        prop_assert_ne!(a, seed.stream("x", idx + 1).random::<u64>());
        prop_assert_ne!(a, seed.stream("y", idx).random::<u64>());
    }
}

#[test]
fn exchangeable_marginals_hold_in_samples() {
    let pop = AgentPopulation::exchangeable(4, 0.35, 0.2).unwrap();
    let mut rng = WorldSeed::new(41).stream("marginals", 0);
    let n = 100_000;
    let mut ones = [0u32; 4];
    for _ in 0..n {
        for (i, s) in pop.sample(&mut rng).into_iter().enumerate() {
            ones[i] += u32::from(s);
        }
    }
    let se = (0.35f64 * 0.65 / f64::from(n)).sqrt();
    for c in ones {
        assert!((f64::from(c) / f64::from(n) - 0.35).abs() < 4.0 * se);
    }
}

#[test]
fn infeasible_pair_is_named() {
    match AgentPopulation::new(vec![0.9, 0.9], vec![vec![1.0, -0.5], vec![-0.5, 1.0]]) {
        Err(WorldError::InfeasibleCorrelation { i: 0, j: 1, min, .. }) => assert!((min + 1.0 / 9.0).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pop = AgentPopulation::new(
        vec![0.7, 0.76, 0.8],
        vec![
            vec![1.0, -0.15, -0.18],
            vec![-0.15, 1.0, -0.12],
            vec![-0.18, -0.12, 1.0],
        ],
    )
    .unwrap();
    let (m, c) = (dir.path().join("marginals.csv"), dir.path().join("corr.csv"));
    std::fs::write(&m, pop.marginals_csv().unwrap()).unwrap();
    std::fs::write(&c, pop.correlation_csv().unwrap()).unwrap();
    let back = AgentPopulation::from_csv(
        &std::fs::read_to_string(&m).unwrap(),
        &std::fs::read_to_string(&c).unwrap(),
    )
    .unwrap();
    assert_eq!(back.marginals(), pop.marginals());
    assert_eq!(back.corr(), pop.corr());
    assert!((back.rho_bar() + 0.15).abs() < 1e-12);
}

#[test]
fn joint_tables_are_sampled_by_mass() {
    let table = JointTable::new(vec![(vec![true, false], 0.25), (vec![false, true], 0.75)]).unwrap();
    let pop = AgentPopulation::from_joint_table(table).unwrap();
    assert_eq!(pop.marginals(), &[0.25, 0.75]);
    let mut rng = WorldSeed::new(42).stream("table", 0);
    let n = 40_000;
    let first = (0..n).filter(|_| pop.sample(&mut rng)[0]).count() as f64 / f64::from(n);
    assert!((first - 0.25).abs() < 0.01);
    assert!(JointTable::new(vec![(vec![true], 0.5)]).is_err());
}

#[test]
fn fragmented_answers_stay_on_their_side() {
    let task = TaskModel::new(0.4, 3, 5).unwrap();
    let mut rng = WorldSeed::new(43).stream("answers", 0);
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..2_000 {
        let c = sample_candidate(&task, i % 2 == 0, &mut rng);
        assert_eq!(task.is_correct_id(c.answer_id), c.quality);
        seen.insert(c.answer_id);
    }
    assert_eq!(seen.len(), 8);
}

#[test]
fn reviewer_flips_at_its_error_rate() {
    let model = ReviewerModel::new(0.2, 1).unwrap();
    let mut rng = WorldSeed::new(44).stream("reviews", 0);
    let n = 100_000;
    let flips = (0..n).filter(|_| !sample_review(&model, true, &mut rng)).count() as f64 / f64::from(n);
    assert!((flips - 0.2).abs() < 4.0 * (0.16f64 / f64::from(n)).sqrt());
    assert!(ReviewerModel::new(0.5, 1).is_err());
    let perfect = ReviewerModel::new(0.0, 1).unwrap();
    assert!((0..1000).all(|_| !sample_review(&perfect, false, &mut rng)));
}
