use proptest::prelude::*;
use romberg::analytic::norm_cdf;
use romberg::noise::{
    covariance_audit, overlap_covariance, sample_independent_block, BlockSource, IncrementSchedule, RandomSource,
    ScheduleKind,
};

fn kind_strategy() -> impl Strategy<Value = ScheduleKind> {
    prop_oneof![Just(ScheduleKind::Lazy), Just(ScheduleKind::Sparing)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_block_is_level_consistent(order in 1usize..=8, kind in kind_strategy(), seed in any::<u64>(), stream in any::<u64>(), dim in 1usize..=3) {
        let schedule = IncrementSchedule::new(order, kind).unwrap();
        let mut rng = RandomSource::new(seed, stream);
        for _ in 0..20 {
            let block = schedule.sample_block(&mut rng, dim);
            prop_assert!(block.consistency_gap() <= 1e-12);
        }
    }

    #[test]
    fn equal_addresses_give_equal_blocks(order in 1usize..=6, kind in kind_strategy(), seed in any::<u64>(), stream in any::<u64>()) {
        let schedule = IncrementSchedule::new(order, kind).unwrap();
        let a = schedule.sample_block(&mut RandomSource::new(seed, stream), 2);
        let b = schedule.sample_block(&mut RandomSource::new(seed, stream), 2);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn independent_blocks_are_uncorrelated() {
    let audit = covariance_audit(4, BlockSource::Independent, 100_000, 21).unwrap();
    let m = audit.labels.len();
    // family-wise 3σ over the m(m+1)/2 distinct entries
    let p = 2.0 * norm_cdf(-3.0) / (m * (m + 1) / 2) as f64;
    let threshold = (0..10_000).map(|i| i as f64 * 0.001).find(|z| 2.0 * norm_cdf(-z) < p).unwrap();
    assert!(audit.max_z() < threshold, "max z {} vs {threshold}", audit.max_z());
    for i in 0..m {
        for j in 0..m {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_eq!(audit.oracle[i * m + j], want);
        }
    }
}

#[test]
fn lazy_and_sparing_agree_in_covariance() {
    let lazy = covariance_audit(4, BlockSource::Consistent(ScheduleKind::Lazy), 50_000, 5).unwrap();
    let sparing = covariance_audit(4, BlockSource::Consistent(ScheduleKind::Sparing), 50_000, 6).unwrap();
    assert_eq!(lazy.oracle, sparing.oracle);
    for i in 0..lazy.empirical.len() {
        let se = 2f64.sqrt() * lazy.std_err(i);
        assert!((lazy.empirical[i] - sparing.empirical[i]).abs() < 4.5 * se);
    }
}

#[test]
fn oracle_matches_named_overlaps() {
    assert!((overlap_covariance(1, 1, 2, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!((overlap_covariance(2, 1, 3, 2) - (1.0 / 6.0) * 6f64.sqrt()).abs() < 1e-15);
    assert_eq!(overlap_covariance(3, 1, 3, 2), 0.0);
    assert_eq!(overlap_covariance(4, 4, 4, 4), 1.0);
}

#[test]
fn independent_block_shape() {
    let b = sample_independent_block(5, &mut RandomSource::new(1, 1), 2);
    assert!(!b.is_coupled());
    assert!(b.atoms().is_empty());
    assert_eq!(b.level(5).len(), 10);
}
