mod common;

use std::sync::Arc;

use common::*;
use edgecut::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec_from(seed: u64) -> ModelSpec {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed), 40)
}

fn profiles(seed: u64) -> (HardwareProfile, HardwareProfile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (random_profile(&mut rng), random_profile(&mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn load_is_additive(seed: u64, frac in 0.0..=1.0f64) {
        let spec = spec_from(seed);
        let n = spec.len();
        let cut = (frac * n as f64) as usize;
        let edge = spec.segment_load(0..cut).unwrap();
        let cloud = spec.segment_load(cut..n).unwrap();
        prop_assert_eq!(edge + cloud, spec.total_load());
    }

    #[test]
    fn transfer_depends_only_on_the_layer_before_the_cut(seed: u64, a: usize, b: usize, c: usize) {
        let mut spec = spec_from(seed);
        for l in &mut spec.layers {
            l.repeat_count = 1;
        }
        let n = spec.len();
        let cut = 1 + c % (n - 1);
        let before = spec.cut_transfer_bytes(cut).unwrap();
        let (i, j) = (a % n, b % n);
        prop_assume!(i != cut - 1 && j != cut - 1);
        spec.layers.swap(i, j);
        prop_assert_eq!(spec.cut_transfer_bytes(cut).unwrap(), before);
    }

    #[test]
    fn sweep_matches_segment_latency(seed: u64) {
        let spec = spec_from(seed);
        let (edge, cloud) = profiles(seed);
        let table = CostTable::default();
        let dep = Deployment::new(&spec, &edge, &cloud, &table);
        let n = spec.len();
        for plan in sweep_splits(&dep, mb_per_sec(5.0)).unwrap() {
            prop_assert_eq!(plan.t_edge, segment_latency(&spec, 0..plan.cut, &edge, &table).unwrap());
            prop_assert_eq!(plan.t_cloud, segment_latency(&spec, plan.cut..n, &cloud, &table).unwrap());
            prop_assert_eq!(plan.t_total, plan.t_edge + plan.t_net + plan.t_cloud);
        }
    }

    #[test]
    fn more_budget_never_hurts(seed: u64, f1 in 0.0..=1.2f64, f2 in 0.0..=1.2f64) {
        let spec = spec_from(seed);
        let (edge, cloud) = profiles(seed);
        let table = CostTable::default();
        let dep = Deployment::new(&spec, &edge, &cloud, &table);
        let total = spec.total_load() as f64;
        let (lo, hi) = ((f1.min(f2) * total) as u64, (f1.max(f2) * total) as u64);
        let bw = mb_per_sec(3.0);
        let a = find_optimal_split(&dep, bw, lo).unwrap();
        let b = find_optimal_split(&dep, bw, hi).unwrap();
        prop_assert!(b.t_total <= a.t_total);
        prop_assert!(a.cloud_load <= lo && b.cloud_load <= hi);
    }

    #[test]
    fn more_bandwidth_never_hurts(seed: u64, m1 in 0.05..50.0f64, m2 in 0.05..50.0f64) {
        let spec = spec_from(seed);
        let (edge, cloud) = profiles(seed);
        let table = CostTable::default();
        let dep = Deployment::new(&spec, &edge, &cloud, &table);
        let budget = spec.total_load() / 2;
        let slow = find_optimal_split(&dep, mb_per_sec(m1.min(m2)), budget).unwrap();
        let fast = find_optimal_split(&dep, mb_per_sec(m1.max(m2)), budget).unwrap();
        prop_assert!(fast.t_total <= slow.t_total);
    }

    #[test]
    fn adjust_matches_exhaustive_scan(seed: u64, pick: usize, span in 1usize..4, delta in -3.0..3.0f64) {
        let spec = spec_from(seed);
        let n = spec.len();
        let cut = 1 + pick % (n - 1);
        let pool = build_share_pool(&spec, cut, span).unwrap();
        let policy = AdjustmentPolicy::new(-1.0, 1.0, 0.0).unwrap();
        let current = pool.cut_candidates[pick % pool.cut_candidates.len()].0;
        let got = adjust_cut(&pool, current, delta, &policy).unwrap();

        let want = if delta.abs() <= 1.0 {
            current
        } else {
            let pool_bytes: Vec<u64> = pool.cut_candidates.iter().map(|c| c.1).collect();
            let target = if delta > 1.0 {
                *pool_bytes.iter().max().unwrap()
            } else {
                *pool_bytes.iter().min().unwrap()
            };
            pool.cut_candidates
                .iter()
                .filter(|c| c.1 == target)
                .map(|c| c.0)
                .min_by_key(|&c| (c.abs_diff(current), std::cmp::Reverse(c)))
                .unwrap()
        };
        prop_assert_eq!(got.cut, want);
        prop_assert_eq!(got.moved, want != current);
        // a second identical signal does not move again
        let again = adjust_cut(&pool, got.cut, delta, &policy).unwrap();
        prop_assert_eq!(again.cut, got.cut);
        prop_assert!(!again.moved);
    }

    #[test]
    fn wider_pools_cost_more(seed: u64, pick: usize) {
        let spec = spec_from(seed);
        let cut = 1 + pick % (spec.len() - 1);
        let mut last = 0.0;
        for span in 1..6 {
            let pool = build_share_pool(&spec, cut, span).unwrap();
            prop_assert!(pool.pool_fraction >= last);
            prop_assert!(pool.contains(cut));
            last = pool.pool_fraction;
        }
    }

    #[test]
    fn episodes_are_deterministic_and_close(seed: u64) {
        let spec = square_wave_fixture();
        let (edge, cloud) = (builtin_profile("orin").unwrap(), builtin_profile("a100").unwrap());
        let table = CostTable::default();
        let dep = Deployment::new(&spec, &edge, &cloud, &table);
        let trace = SyntheticTrace {
            pattern: TracePattern::Sine,
            mean: mb_per_sec(5.0),
            amplitude: mb_per_sec(4.0),
            period: 0.004,
            duration: 0.01,
            interval: 0.0001,
            noise: 0.1,
            seed,
        }
        .generate()
        .unwrap();
        let setup = AdaptiveSetup {
            base_cut: 6,
            pool: build_share_pool(&spec, 6, 2).unwrap(),
            policy: AdjustmentPolicy::new(-mb_per_sec(0.5), mb_per_sec(0.5), 0.0107).unwrap(),
            forecaster: Arc::new(Predictor::fit(PredictorConfig::ewma(4, 0.5), &trace).unwrap()),
        };
        let policy = PolicyKind::Adaptive(setup);
        let span = EpisodeSpan { warmup: 4, steps: 80 };
        let a = run_episode(&dep, &trace, &policy, span).unwrap();
        let b = run_episode(&dep, &trace, &policy, span).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.to_csv_string(), b.to_csv_string());
        for r in &a.records {
            prop_assert_eq!(r.t_step, r.t_edge + r.t_net + r.t_cloud + r.t_adjust);
        }
        let again = EpisodeReport::from_records(a.policy.clone(), a.records.clone(), a.edge_load, a.cloud_load);
        prop_assert_eq!(again, a);
    }
}

#[test]
fn oracle_adaptive_never_transfers_more_than_fixed() {
    let spec = square_wave_fixture();
    let (edge, cloud) = (builtin_profile("orin").unwrap(), builtin_profile("a100").unwrap());
    let table = CostTable::default();
    let dep = Deployment::new(&spec, &edge, &cloud, &table);
    for (h, lead) in [(1, 1), (2, 3), (3, 2), (7, 1), (12, 5)] {
        let samples = square_wave(mb_per_sec(10.0), mb_per_sec(1.0), h, 5, lead);
        let trace = BandwidthTrace::new("square", 1e-4, samples).unwrap();
        let setup = AdaptiveSetup {
            base_cut: 6,
            pool: build_share_pool(&spec, 6, 1).unwrap(),
            policy: AdjustmentPolicy::new(-mb_per_sec(1.0), mb_per_sec(1.0), 0.0107).unwrap(),
            forecaster: Arc::new(OracleForecaster { window: 1 }),
        };
        let report = compare_policies(
            &dep,
            &trace,
            &[PolicyKind::FixedSplit(6), PolicyKind::Adaptive(setup)],
            10 * h,
        )
        .unwrap();
        let (fixed, adaptive) = (&report.episodes[0], &report.episodes[1]);
        assert!(adaptive.mean_t_net <= fixed.mean_t_net, "h={h} lead={lead}");
    }
}
