mod common;

use common::*;
use grasp_voa::belief::Belief;
use grasp_voa::grasp::GraspScoreTable;
use grasp_voa::similarity::SimilarityMetric;
use grasp_voa::voa::{compute_voa, precompute, select_config, ScoreKey, SensorConfigSet, VoaInputs};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn metrics() -> [SimilarityMetric; 3] {
    [
        SimilarityMetric::MarginDeterministic { margin: 0.008 },
        SimilarityMetric::ExpNegNorm,
        SimilarityMetric::GaussianLikelihood { sigma: 0.2 },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_brute_force(seed in any::<u64>(), m in 0usize..3) {
        let inst = random_instance(seed, 12, 6, 5);
        let metric = metrics()[m].clone();
        let belief = inst.belief();
        let table = inst.table();
        let pred = inst.predictor();
        let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
        for (k, c) in inst.configs.iter().enumerate() {
            let got = compute_voa(&inputs, c, None).unwrap();
            let want = brute_force_voa(&inst.weights, &inst.gamma, &inst.obs[k], |a, b| reference_similarity(&metric, a, b));
            prop_assert!((got - want).abs() <= 1e-12, "config {}: {} vs {}", c.id, got, want);
        }
    }

    #[test]
    fn cache_is_transparent(seed in any::<u64>(), m in 0usize..3) {
        let inst = random_instance(seed, 12, 6, 5);
        let metric = metrics()[m].clone();
        let belief = inst.belief();
        let table = inst.table();
        let pred = inst.predictor();
        let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
        let set = SensorConfigSet::new(inst.configs.clone()).unwrap();
        let cold = select_config(&inputs, &set, None).unwrap();
        let with_matrix = precompute(&inst.poses, &inst.configs, &pred, Some(&metric)).unwrap();
        let observations_only = precompute(&inst.poses, &inst.configs, &pred, None).unwrap();
        for cache in [&with_matrix, &observations_only] {
            let warm = select_config(&inputs, &set, Some(cache)).unwrap();
            prop_assert_eq!(&cold.selected, &warm.selected);
            for (a, b) in cold.configs.iter().zip(&warm.configs) {
                prop_assert_eq!(a.voa.to_bits(), b.voa.to_bits());
                prop_assert_eq!(&a.per_pose, &b.per_pose);
            }
        }
    }

    #[test]
    fn perfect_sensor_gain_is_closed_form_and_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=12);
        let g = rng.random_range(1..=6);
        let poses = plain_poses(n);
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let gamma: Vec<Vec<f64>> = (0..g).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        // Pairwise gaps of at least 0.1 m against a 0.008 m margin.
        let obs: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0 + 0.1 * i as f64; 360]).collect();
        let belief = Belief::new(poses.clone(), w.clone()).unwrap();
        let table = GraspScoreTable::new(
            (0..g).map(|k| format!("g{k}")).collect(),
            poses.iter().map(|p| p.id.clone()).collect(),
            gamma.clone(),
        ).unwrap();
        let pred = StoredPredictor::new(
            poses.iter().zip(&obs).map(|(p, o)| ((p.id.clone(), "c0".to_string()), scan(o))).collect(),
        );
        let metric = SimilarityMetric::MarginDeterministic { margin: 0.008 };
        let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
        let v = compute_voa(&inputs, &lidar_config("c0"), None).unwrap();
        prop_assert!((v - perfect_information_gain(&w, &gamma)).abs() <= 1e-12);
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn refining_the_partition_never_lowers_voa(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=12);
        let g = rng.random_range(1..=6);
        let poses = plain_poses(n);
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let gamma: Vec<Vec<f64>> = (0..g).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let classes = rng.random_range(1..n);
        let mut coarse: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
        coarse.sort();
        // Split off part of some class with at least two members.
        let mut fine = coarse.clone();
        let splittable: Vec<usize> = (0..classes).filter(|k| coarse.iter().filter(|c| *c == k).count() >= 2).collect();
        let k = splittable[rng.random_range(0..splittable.len())];
        let members: Vec<usize> = (0..n).filter(|&i| coarse[i] == k).collect();
        let cut = rng.random_range(1..members.len());
        for &i in &members[cut..] {
            fine[i] = classes;
        }

        let belief = Belief::new(poses.clone(), w).unwrap();
        let table = GraspScoreTable::new(
            (0..g).map(|k| format!("g{k}")).collect(),
            poses.iter().map(|p| p.id.clone()).collect(),
            gamma,
        ).unwrap();
        let metric = SimilarityMetric::MarginDeterministic { margin: 1e-9 };
        let mut map = std::collections::HashMap::new();
        for (i, p) in poses.iter().enumerate() {
            map.insert((p.id.clone(), "coarse".to_string()), scan(&[coarse[i] as f64; 360]));
            map.insert((p.id.clone(), "fine".to_string()), scan(&[fine[i] as f64; 360]));
        }
        let pred = StoredPredictor::new(map);
        let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
        let vc = compute_voa(&inputs, &lidar_config("coarse"), None).unwrap();
        let vf = compute_voa(&inputs, &lidar_config("fine"), None).unwrap();
        prop_assert!(vf >= vc - 1e-12, "fine {} < coarse {}", vf, vc);
    }
}

#[test]
fn constant_observations_give_zero_for_every_lidar_metric() {
    for seed in 0..20 {
        let mut inst = random_instance(seed, 12, 6, 1);
        let same = inst.obs[0][0].clone();
        inst.obs[0].iter_mut().for_each(|o| *o = same.clone());
        let belief = inst.belief();
        let table = inst.table();
        let pred = inst.predictor();
        for metric in metrics() {
            let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
            assert_eq!(compute_voa(&inputs, &inst.configs[0], None).unwrap(), 0.0);
        }
    }
}

#[test]
fn precompute_calls_predictor_once_per_pair() {
    let inst = random_instance(3, 12, 6, 5);
    let pred = inst.predictor();
    let cache = precompute(&inst.poses, &inst.configs, &pred, Some(&SimilarityMetric::ExpNegNorm)).unwrap();
    assert_eq!(pred.calls(), inst.poses.len() * inst.configs.len());
    assert_eq!(cache.len(), inst.poses.len() * inst.configs.len());
    let empty = precompute(&inst.poses, &[], &pred, None).unwrap();
    assert!(empty.is_empty());
}

#[test]
fn cached_path_never_calls_predictor() {
    let inst = random_instance(11, 8, 4, 3);
    let belief = inst.belief();
    let table = inst.table();
    let source = inst.predictor();
    let cache = precompute(&inst.poses, &inst.configs, &source, Some(&SimilarityMetric::ExpNegNorm)).unwrap();
    let idle = inst.predictor();
    let metric = SimilarityMetric::ExpNegNorm;
    let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &idle).unwrap();
    select_config(&inputs, &SensorConfigSet::new(inst.configs.clone()).unwrap(), Some(&cache)).unwrap();
    assert_eq!(idle.calls(), 0);
}

#[test]
fn cache_file_round_trips_bit_exactly() {
    let inst = random_instance(5, 10, 3, 4);
    let pred = inst.predictor();
    let cache = precompute(&inst.poses, &inst.configs, &pred, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.json");
    cache.save(&path).unwrap();
    let back = grasp_voa::voa::PrecomputedObservations::load(&path).unwrap();
    for p in &inst.poses {
        for c in &inst.configs {
            let (a, b) = (cache.get(&p.id, &c.id).unwrap(), back.get(&p.id, &c.id).unwrap());
            let bits = |o: &grasp_voa::sensors::Observation| o.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }
}

#[test]
fn result_is_independent_of_thread_count() {
    let inst = random_instance(17, 12, 6, 5);
    let belief = inst.belief();
    let table = inst.table();
    let pred = inst.predictor();
    let metric = SimilarityMetric::ExpNegNorm;
    let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
    let set = SensorConfigSet::new(inst.configs.clone()).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| select_config(&inputs, &set, None).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn selected_config_attains_max() {
    for seed in 0..30 {
        let inst = random_instance(seed, 12, 6, 5);
        let belief = inst.belief();
        let table = inst.table();
        let pred = inst.predictor();
        let metric = SimilarityMetric::GaussianLikelihood { sigma: 0.2 };
        let inputs = VoaInputs::new(&belief, &belief, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
        let r = select_config(&inputs, &SensorConfigSet::new(inst.configs.clone()).unwrap(), None).unwrap();
        let best = r.configs.iter().map(|c| c.voa).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.voa_of(&r.selected), Some(best));
        let first_max = r.configs.iter().filter(|c| c.voa == best).map(|c| &c.config_id).min().unwrap();
        assert_eq!(&r.selected, first_max);
    }
}

#[test]
fn distinct_beliefs_weight_by_helper() {
    // The actor is unsure; the helper knows the object is at p01.
    let poses = plain_poses(2);
    let actor = Belief::new(poses.clone(), vec![0.6, 0.4]).unwrap();
    let helper = Belief::new(poses.clone(), vec![0.0, 1.0]).unwrap();
    let table = GraspScoreTable::new(
        vec!["g0".into(), "g1".into()],
        poses.iter().map(|p| p.id.clone()).collect(),
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    )
    .unwrap();
    let pred = StoredPredictor::new(
        [("p00", 1.0), ("p01", 2.0)]
            .iter()
            .map(|(p, v)| ((p.to_string(), "c0".to_string()), scan(&[*v; 360])))
            .collect(),
    );
    let metric = SimilarityMetric::MarginDeterministic { margin: 0.008 };
    let inputs = VoaInputs::new(&actor, &helper, &table, ScoreKey::PoseId, &metric, &pred).unwrap();
    let r = grasp_voa::voa::assess_config(&inputs, &lidar_config("c0"), None).unwrap();
    assert_eq!(r.voa, 1.0);
    assert_eq!(r.per_pose[0].grasp_id, None);
    assert_eq!(r.per_pose[1].grasp_id.as_deref(), Some("g1"));
}
