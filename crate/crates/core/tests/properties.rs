mod common;

use proptest::prelude::*;
use tkp_core::mub::{mub_state, SUPPORTED_PRIMES};
use tkp_core::numerics::Subsystem;
use tkp_core::protocol::{
    analytic_reliability, decode, king_channel, king_channel_on, run_trials, BSchedule, DecodeResult, NoiseModel,
    Scenario, TrialPlan,
};
use tkp_core::{BasisLabel, BellState, EntangledLabel, Outcome, PrimeDim};

fn dim() -> impl Strategy<Value = PrimeDim> {
    prop::sample::select(vec![2u32, 3, 5]).prop_map(|d| PrimeDim::new(d).unwrap())
}

fn basis(d: PrimeDim) -> impl Strategy<Value = BasisLabel> {
    prop::sample::select(d.basis_labels())
}

fn state_entries(d: PrimeDim) -> impl Strategy<Value = Vec<f64>> {
    let n = d.as_usize() * d.as_usize();
    prop::collection::vec(-1.0f64..1.0, 2 * n * n)
}

fn dim_basis_state() -> impl Strategy<Value = (PrimeDim, BasisLabel, Vec<f64>)> {
    dim().prop_flat_map(|d| (Just(d), basis(d), state_entries(d)))
}

fn label(d: PrimeDim) -> impl Strategy<Value = EntangledLabel> {
    let n = d.get();
    (0..n, 0..n, 0..n).prop_map(move |(c, r, s)| EntangledLabel { c, r, s })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn king_channel_is_a_lawful_state_map((d, b, entries) in dim_basis_state()) {
        let n = d.as_usize() * d.as_usize();
        let rho = common::density_from_entries(n, &entries);
        let out = king_channel(&rho, b, d).unwrap();
        prop_assert!((out.trace() - 1.0).abs() < 1e-12);
        prop_assert!(out.matrix().hermiticity_defect() < 1e-12);
        prop_assert!(out.min_eigenvalue() >= -1e-9);
        let twice = king_channel(&out, b, d).unwrap();
        prop_assert!(twice.matrix().max_abs_diff(out.matrix()) < 1e-10);
    }

    #[test]
    fn measured_factor_is_left_diagonal_in_b((d, b, entries) in dim_basis_state(), second in any::<bool>()) {
        let n = d.as_usize();
        let rho = common::density_from_entries(n * n, &entries);
        let which = if second { Subsystem::Second } else { Subsystem::First };
        let out = king_channel_on(&rho, b, d, which).unwrap();
        let reduced = tkp_core::numerics::partial_trace(&out, which).unwrap();
        // coherences between distinct |m; b> vanish on the measured factor
        for m in 0..n as u32 {
            for k in 0..n as u32 {
                if m == k {
                    continue;
                }
                let u = mub_state(d, b, m).unwrap();
                let v = mub_state(d, b, k).unwrap();
                let rv = reduced.matrix().apply(v.amplitudes());
                let coherence: tkp_core::C64 = u.amplitudes().iter().zip(&rv).map(|(a, x)| a.conj() * x).sum();
                prop_assert!(coherence.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn decoder_is_single_valued(d in prop::sample::select(SUPPORTED_PRIMES.to_vec()), seed in any::<u64>()) {
        let d = PrimeDim::new(d).unwrap();
        let n = d.get();
        let pick = |k: u64| ((seed >> (8 * k)) % n as u64) as u32;
        let initial = EntangledLabel { c: pick(0), r: pick(1), s: pick(2) };
        let outcome = Outcome { c: pick(3), r: pick(4) };
        let first = decode(initial, outcome, d).unwrap();
        prop_assert_eq!(first, decode(initial, outcome, d).unwrap());
        prop_assert_eq!(first == DecodeResult::Inconclusive, outcome == initial.outcome());
    }

    #[test]
    fn identical_scenarios_give_identical_stats(d in dim(), seed in any::<u64>(), shots in 1u64..400) {
        let scenario = Scenario { d, initial: EntangledLabel { c: 0, r: 0, s: 0 }, noise: vec![NoiseModel::OutcomeWhiteNoise(0.3)], shots, seed };
        let a = run_trials(&scenario, &BSchedule::UniformRandom).unwrap();
        let b = run_trials(&scenario, &BSchedule::UniformRandom).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn counts_sum_to_the_scheduled_events(d in dim(), seed in any::<u64>(), shots in 1u64..300) {
        let scenario = Scenario { d, initial: EntangledLabel { c: 0, r: 0, s: 0 }, noise: vec![], shots, seed };
        let stats = run_trials(&scenario, &BSchedule::all_bases(d)).unwrap();
        let total: u64 = stats.counts.iter().map(|e| e.count).sum();
        prop_assert_eq!(total, shots * (d.get() as u64 + 1));
        prop_assert_eq!(stats.reliability_conclusive_accuracy, if stats.conclusive_rate > 0.0 { 1.0 } else { 0.0 });
        prop_assert_eq!(stats.reliability_expected_mass, 1.0);
    }

    #[test]
    fn ideal_allowed_mass_is_one(d in prop::sample::select(vec![2u32, 3]).prop_map(|d| PrimeDim::new(d).unwrap()).prop_flat_map(|d| (Just(d), label(d)))) {
        let (d, initial) = d;
        let r = analytic_reliability(d, initial, &[]).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reliability_is_monotone_over_an_eleven_point_grid() {
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    for d in [2u32, 3, 5] {
        let d = PrimeDim::new(d).unwrap();
        let initial = EntangledLabel { c: 0, r: 0, s: 0 };
        let white: Vec<f64> = grid
            .iter()
            .map(|&p| analytic_reliability(d, initial, &[NoiseModel::OutcomeWhiteNoise(p)]).unwrap())
            .collect();
        let werner: Vec<f64> = grid
            .iter()
            .map(|&l| analytic_reliability(d, initial, &[NoiseModel::WernerShared(l)]).unwrap())
            .collect();
        assert!(white.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{white:?}");
        assert!(werner.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{werner:?}");
        // uniform floor: allowed cells cover 1/d of the outcomes plus the inconclusive cell
        let floor = 1.0 / d.get() as f64;
        assert!((white[10] - floor).abs() < 1e-12);
        assert!((werner[0] - floor).abs() < 1e-12);
    }
    let optics: Vec<f64> = grid
        .iter()
        .map(|&m| analytic_reliability(PrimeDim::QUBIT, BellState::PhiPlus.label(), &[NoiseModel::OpticsBackend(m)]).unwrap())
        .collect();
    assert!(optics.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{optics:?}");
    assert!((optics[10] - 1.0).abs() < 1e-9);
}

#[test]
fn werner_noise_matches_white_noise_on_outcomes() {
    for d in [2u32, 3, 5] {
        let d = PrimeDim::new(d).unwrap();
        let initial = EntangledLabel { c: 1, r: 0, s: 1 % d.get() };
        for lambda in [0.0, 0.3, 0.626, 1.0] {
            let a = analytic_reliability(d, initial, &[NoiseModel::WernerShared(lambda)]).unwrap();
            let b = analytic_reliability(d, initial, &[NoiseModel::OutcomeWhiteNoise(1.0 - lambda)]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn empirical_frequencies_sit_within_five_sigma() {
    let shots = 100_000;
    for d in [2u32, 3] {
        let d = PrimeDim::new(d).unwrap();
        for noise in [vec![], vec![NoiseModel::OutcomeWhiteNoise(0.374)]] {
            let scenario = Scenario { d, initial: EntangledLabel { c: 0, r: 0, s: 0 }, noise, shots, seed: 7 };
            let plan = TrialPlan::new(scenario.clone(), BSchedule::all_bases(d)).unwrap();
            let stats = run_trials(&scenario, &BSchedule::all_bases(d)).unwrap();
            for e in &stats.counts {
                let p = plan.distribution(e.b_true).get(e.outcome);
                let sigma = (shots as f64 * p * (1.0 - p)).sqrt();
                let dev = (e.count as f64 - shots as f64 * p).abs();
                assert!(dev <= 5.0 * sigma.max(1e-12), "{e:?} expected p {p}");
            }
        }
    }
}

#[test]
fn sharded_runs_merge_in_any_order() {
    let scenario = Scenario { d: PrimeDim::QUBIT, initial: BellState::PsiMinus.label(), noise: vec![], shots: 200_000, seed: 99 };
    let plan = TrialPlan::new(scenario.clone(), BSchedule::UniformRandom).unwrap();
    let shards = plan.shards();
    assert!(shards.len() > 1);
    let forward: Vec<_> = shards.iter().map(|s| (s.ordinal, plan.run_shard(s))).collect();
    let mut backward = forward.clone();
    backward.reverse();
    assert_eq!(plan.finish(forward), plan.finish(backward));
    assert_eq!(plan.finish(shards.iter().map(|s| (s.ordinal, plan.run_shard(s)))), run_trials(&scenario, &BSchedule::UniformRandom).unwrap());
}
