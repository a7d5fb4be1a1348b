//! Exhaustive checks of the decoder against the analytic table.

use tkp_core::mub::SUPPORTED_PRIMES;
use tkp_core::protocol::{decode, theoretical_table, DecodeResult};
use tkp_core::{EntangledLabel, Outcome, PrimeDim};

#[test]
fn every_allowed_cell_decodes_to_the_kings_basis() {
    for d in [2, 3, 5, 7] {
        let d = PrimeDim::new(d).unwrap();
        let n = d.get();
        for s in 0..n {
            for c in 0..n {
                for r in 0..n {
                    let initial = EntangledLabel::new(d, c, r, s).unwrap();
                    let table = theoretical_table(d, initial).unwrap();
                    for (b, row) in &table.rows {
                        for (outcome, p) in row.iter() {
                            if p <= 1e-12 {
                                continue;
                            }
                            let verdict = decode(initial, outcome, d).unwrap();
                            if outcome == initial.outcome() {
                                assert_eq!(verdict, DecodeResult::Inconclusive);
                            } else {
                                assert_eq!(verdict, DecodeResult::Conclusive(*b), "d={n} {initial:?} b={b:?} {outcome:?}");
                            }
                        }
                        let inconclusive = row.get(initial.outcome());
                        assert!((inconclusive - 1.0 / n as f64).abs() < 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn decoder_is_total_and_never_ambiguous() {
    for d in SUPPORTED_PRIMES {
        let d = PrimeDim::new(d).unwrap();
        let n = d.get();
        for s in 0..n {
            let initial = EntangledLabel::new(d, 1 % n, 0, s).unwrap();
            let mut per_basis = vec![0usize; n as usize + 1];
            for outcome in Outcome::all(d) {
                match decode(initial, outcome, d).unwrap() {
                    DecodeResult::Conclusive(b) => per_basis[b.ordinal()] += 1,
                    DecodeResult::Inconclusive => assert_eq!(outcome, initial.outcome()),
                }
            }
            // the d^2 - 1 conclusive cells split evenly over the d + 1 bases
            assert!(per_basis.iter().all(|&k| k == (n - 1) as usize));
        }
    }
}
