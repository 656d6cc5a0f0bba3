use gendiag::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_set(chains: &[Vec<f64>]) -> ChainSet {
    build_chain_set(
        chains
            .iter()
            .enumerate()
            .map(|(c, v)| Chain::new(c, v.iter().map(|&x| DrawState::scalar(x)).collect()))
            .collect(),
    )
    .unwrap()
}

#[test]
fn pairwise_matrix_agrees_with_direct_evaluation_on_fifty_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let states: Vec<DrawState> = (0..50)
        .map(|_| DrawState::RealVector((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()))
        .collect();
    let m = pairwise_matrix(&states, &DistanceSpec::Euclidean).unwrap();
    for i in 0..50 {
        for j in 0..50 {
            let (DrawState::RealVector(a), DrawState::RealVector(b)) = (&states[i], &states[j]) else {
                unreachable!()
            };
            let want = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            assert!((m.get(i, j) - want).abs() <= 1e-12 * want.max(1.0), "({i},{j})");
        }
    }
}

#[test]
fn binary_matrix_pairwise_uses_hamming() {
    let spec = SyntheticSpec {
        kind: SyntheticKind::BinaryMatrix {
            rows: 4,
            cols: 5,
            flip_rate: 0.2,
        },
        chains: 2,
        n_iter: 30,
        seed: 3,
        trapped: false,
    };
    let cs = synthetic_discrete_chains(&spec).unwrap();
    let m = pairwise_matrix(cs.pool(), &DistanceSpec::Hamming).unwrap();
    for i in 0..cs.n_unique() {
        for j in 0..cs.n_unique() {
            let (DrawState::BinaryMatrix(a), DrawState::BinaryMatrix(b)) = (&cs.pool()[i], &cs.pool()[j]) else {
                unreachable!()
            };
            let want = a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count() as f64;
            assert_eq!(m.get(i, j), want);
        }
    }
}

#[test]
fn partition_lanfear_against_singletons_reaches_n_squared_minus_n() {
    let n = 9;
    let chains = vec![
        Chain::new(0, vec![DrawState::Partition(vec![0; n]); 4]),
        Chain::new(
            1,
            (0..4)
                .map(|i| DrawState::Partition((0..n as u32).map(|o| (o + i) % 3).collect()))
                .collect(),
        ),
    ];
    let cs = build_chain_set(chains).unwrap();
    let reference = DrawState::Partition((0..n as u32).collect());
    let pm = lanfear_map(&cs, &DistanceSpec::Hamming, &reference).unwrap();
    let lumped = cs.pool_index_of(&DrawState::Partition(vec![0; n])).unwrap();
    assert_eq!(pm.values[lumped], (n * n - n) as f64);
    for (i, &v) in pm.values.iter().enumerate() {
        if i != lumped {
            assert!(v < (n * n - n) as f64);
        }
    }
}

#[test]
fn trapped_partition_chain_sits_in_its_own_band() {
    let spec = SyntheticSpec {
        kind: SyntheticKind::Partition {
            n_obs: 12,
            n_clusters: 3,
            resample_rate: 0.1,
        },
        chains: 4,
        n_iter: 300,
        seed: 5,
        trapped: true,
    };
    let cs = synthetic_discrete_chains(&spec).unwrap();
    let report = run_generalized_diagnostic(
        &cs,
        &DistanceSpec::Hamming,
        &MapChoice::Lanfear {
            reference: DrawState::Partition((0..12).collect()),
        },
        DiagnosticOptions::default(),
    )
    .unwrap();
    assert_eq!(band_overlap(&report.mapped.chains, 0), 0.0);
    assert!(report.psrf.unwrap() >= 1.5);
    assert!(report.flags.contains(&"zero_variance:chain=0".to_string()));
}

#[test]
fn separated_modes_give_disjoint_bands_under_the_nn_map() {
    let spec = ScenarioSpec::builtin("m3", 2).unwrap();
    let cs = mh_run(&spec).unwrap();
    let report = run_generalized_diagnostic(
        &cs,
        &DistanceSpec::Euclidean,
        &MapChoice::NearestNeighbor {
            start: TourStart::Index(0),
        },
        DiagnosticOptions::default(),
    )
    .unwrap();
    let raw = cs.scalar_chains().unwrap();
    let left: Vec<usize> = (0..raw.len()).filter(|&c| raw[c].iter().all(|&x| x < 0.0)).collect();
    let right: Vec<usize> = (0..raw.len()).filter(|&c| raw[c].iter().all(|&x| x > 0.0)).collect();
    assert!(!left.is_empty() && !right.is_empty());
    let span = |ids: &[usize]| {
        ids.iter()
            .flat_map(|&c| report.mapped.chains[c].iter().cloned())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (a, b) = (span(&left), span(&right));
    assert!(a.1 < b.0 || b.1 < a.0, "bands {a:?} and {b:?} overlap");
}

#[test]
fn nn_map_on_sorted_line_is_affine_in_the_raw_values() {
    let draws: Vec<Vec<f64>> = vec![vec![0.0, 0.5, 1.5, 0.5], vec![3.0, 2.0, 3.0, 1.5]];
    let cs = scalar_set(&draws);
    let pm = nn_map(&cs, &DistanceSpec::Euclidean, TourStart::Index(0)).unwrap();
    let mapped = apply_map(&cs, &pm).unwrap();
    for (raw, m) in draws.iter().zip(&mapped.chains) {
        for (x, y) in raw.iter().zip(m) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn burn_in_is_dropped_before_pooling() {
    let c = Chain::new(
        0,
        vec![DrawState::scalar(9.0), DrawState::scalar(1.0), DrawState::scalar(2.0)],
    )
    .without_burn_in(1);
    let cs = build_chain_set(vec![c]).unwrap();
    assert_eq!(cs.n_unique(), 2);
    assert!(cs.pool_index_of(&DrawState::scalar(9.0)).is_none());
}

#[test]
fn ndjson_round_trip_preserves_the_chain_set() {
    let spec = ScenarioSpec::builtin("m4", 9).unwrap();
    let cs = mh_run(&spec).unwrap();
    let mut buf = Vec::new();
    gendiag::io::write_ndjson(&mut buf, cs.chains()).unwrap();
    let back = gendiag::io::read_ndjson(&buf[..]).unwrap();
    assert_eq!(back, cs.chains());
}

#[test]
fn case_study_orderings_hold_for_the_fixed_seed() {
    let run = |name: &str| {
        let raw = mh_run(&ScenarioSpec::builtin(name, 2).unwrap())
            .unwrap()
            .scalar_chains()
            .unwrap();
        (ess(&raw).unwrap().total, psrf(&raw).unwrap().value())
    };
    let (m1_ess, m1_psrf) = run("m1");
    let (m2_ess, _) = run("m2");
    let (_, m3_psrf) = run("m3");
    assert!(m1_psrf > 1.2);
    assert!(m2_ess > 10.0 * m1_ess);
    assert!(m3_psrf > 2.0);
}
