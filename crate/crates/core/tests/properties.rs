//! Invariants checked against small independent oracles.

use fairpart::arrival::{check_transcript, Transcript, TiePolicy};
use fairpart::dynamic::{all_pos_val, bounded_prop, stage_of, RrVariant};
use fairpart::lowerbound::{columns_orthogonal, sylvester_hadamard};
use fairpart::masterlist::{adjacent_swap_distance, bubble_decomposition, is_linearly_separable, transposition_distance};
use fairpart::model::{ceil_log2, codec_roundtrip, Instance, Rational};
use fairpart::roundrobin::{modified_round_robin, round_robin};
use fairpart::structured::bounded_indifference;
use num_bigint::BigInt;
use proptest::prelude::*;

fn grid_instance(rows: Vec<Vec<u32>>) -> Instance {
    let values = rows
        .into_iter()
        .map(|r| r.into_iter().map(|q| Rational::new(BigInt::from(q), BigInt::from(16))).collect())
        .collect();
    Instance::new(values).unwrap()
}

fn instance(max_n: usize, max_m: usize, lo: u32) -> impl Strategy<Value = Instance> {
    (1..=max_n, 1..=max_m).prop_flat_map(move |(n, m)| {
        prop::collection::vec(prop::collection::vec(lo..=16u32, m), n).prop_map(grid_instance)
    })
}

/// Textbook Round-Robin: pickers in turn take their best remaining item,
/// lowest id on ties.
fn naive_round_robin(inst: &Instance) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..inst.m()).collect();
    let mut parts = vec![Vec::new(); inst.n()];
    let mut turn = 0;
    while !left.is_empty() {
        let a = turn % inst.n();
        let mut best = 0;
        for (at, &g) in left.iter().enumerate() {
            if inst.value(a, g) > inst.value(a, left[best]) {
                best = at;
            }
        }
        parts[a].push(left.remove(best));
        turn += 1;
    }
    parts
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn inversions(sigma: &[usize]) -> u64 {
    let mut count = 0;
    for i in 0..sigma.len() {
        for j in i + 1..sigma.len() {
            count += u64::from(sigma[i] > sigma[j]);
        }
    }
    count
}

/// Every item appears exactly once across chosen parts and leftovers.
fn conserves(t: &Transcript, m: usize) -> bool {
    let mut seen = vec![0; m];
    for g in t.records.iter().flat_map(|r| r.items.iter()).chain(t.leftover.iter()) {
        seen[*g] += 1;
    }
    seen.iter().all(|&c| c == 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_robin_matches_textbook(inst in instance(6, 30, 0)) {
        let rows: Vec<_> = inst.rows().iter().collect();
        let (part, _) = round_robin(&inst.items(), &rows);
        let expected = naive_round_robin(&inst);
        for (got, want) in part.parts.iter().zip(expected) {
            prop_assert_eq!(sorted(got.clone()), sorted(want));
        }
    }

    #[test]
    fn modified_round_robin_covers_every_item(inst in instance(6, 30, 0)) {
        let rows: Vec<_> = inst.rows().iter().collect();
        let out = modified_round_robin(&inst.items(), &rows);
        let all: Vec<usize> = out.partition.parts.iter().flatten().copied().collect();
        prop_assert_eq!(sorted(all), inst.items());
        for g in &out.leftovers {
            prop_assert!(out.partition.parts[0].contains(g));
        }
    }

    #[test]
    fn codec_roundtrip_is_exact(inst in instance(5, 12, 0)) {
        prop_assert_eq!(codec_roundtrip(&inst).unwrap(), inst);
    }

    #[test]
    fn stage_index_is_logarithmic(n in 1usize..=1 << 14, frac in 0.0f64..1.0) {
        let i = 1 + ((n - 1) as f64 * frac) as usize;
        prop_assert!(stage_of(i, n).unwrap() as u64 <= ceil_log2(i as u64) + 1);
    }

    #[test]
    fn all_pos_conserves_items(inst in instance(9, 40, 1), highest in any::<bool>()) {
        let policy = if highest { TiePolicy::HighestPartIndex } else { TiePolicy::LowestPartIndex };
        let order: Vec<usize> = (0..inst.n()).collect();
        let run = all_pos_val(&inst, &order, policy).unwrap();
        prop_assert!(check_transcript(&inst, &run.transcript).is_empty());
        prop_assert!(conserves(&run.transcript, inst.m()));
    }

    #[test]
    fn bounded_prop_conserves_items(inst in instance(9, 60, 0), modified in any::<bool>()) {
        let variant = if modified { RrVariant::Modified } else { RrVariant::Plain };
        let order: Vec<usize> = (0..inst.n()).rev().collect();
        let run = bounded_prop(&inst, &order, TiePolicy::HighestPartIndex, variant).unwrap();
        prop_assert!(check_transcript(&inst, &run.transcript).is_empty());
        prop_assert!(conserves(&run.transcript, inst.m()));
    }

    #[test]
    fn indifference_conserves_items(inst in instance(6, 40, 0)) {
        let order: Vec<usize> = (0..inst.n()).collect();
        let run = bounded_indifference(&inst, &order, TiePolicy::HighestPartIndex).unwrap();
        prop_assert!(check_transcript(&inst, &run.transcript).is_empty());
        prop_assert!(conserves(&run.transcript, inst.m()));
    }

    #[test]
    fn swap_distances_match_counting(sigma in Just((0..9).collect::<Vec<usize>>()).prop_shuffle()) {
        let id: Vec<usize> = (0..sigma.len()).collect();
        prop_assert_eq!(adjacent_swap_distance(&sigma, &id).unwrap(), inversions(&sigma));
        // Selection sort with one transposition per misplaced slot is optimal.
        let mut work = sigma.clone();
        let mut moves = 0;
        for i in 0..work.len() {
            if work[i] != i {
                let j = work.iter().position(|&x| x == i).unwrap();
                work.swap(i, j);
                moves += 1;
            }
        }
        prop_assert_eq!(transposition_distance(&sigma, &id).unwrap(), moves);
    }

    #[test]
    fn bubble_layers_are_separable(sigma in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
        let id: Vec<usize> = (0..sigma.len()).collect();
        let d = bubble_decomposition(&sigma, &id).unwrap();
        prop_assert_eq!(d.swaps.len() as u64, inversions(&sigma));
        prop_assert!(d.within_bound);
        for layer in &d.layers {
            prop_assert!(is_linearly_separable(layer));
        }
    }
}

#[test]
fn hadamard_columns_are_orthogonal() {
    for k in 0..=6 {
        let h = sylvester_hadamard(1 << k).unwrap();
        assert!(columns_orthogonal(&h));
        let s = h.len() as i64;
        for a in 0..h.len() {
            for b in 0..h.len() {
                let dot: i64 = (0..h.len()).map(|r| i64::from(h[r][a]) * i64::from(h[r][b])).sum();
                assert_eq!(dot, if a == b { s } else { 0 });
            }
        }
    }
}
