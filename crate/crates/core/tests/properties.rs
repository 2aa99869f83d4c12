//! Property-based invariants of the scan, permutation and rank machinery.

mod common;

use proptest::prelude::*;

use subscan_core::calibrate::exceedance_count;
use subscan_core::rng::substream;
use subscan_core::scan::scan_exact_capped;
use subscan_core::{
    rank_transform, sample_permutation, scan_exact, scan_hillclimb, sum_statistic, DataMatrix,
    PermutationScheme, SubmatrixIndex,
};

fn small_matrix() -> impl Strategy<Value = DataMatrix> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(rows, cols)| {
        prop::collection::vec(-100.0f64..100.0, rows * cols)
            .prop_map(move |values| DataMatrix::new(rows, cols, values).unwrap())
    })
}

/// A matrix plus a feasible block size.
fn matrix_with_block() -> impl Strategy<Value = (DataMatrix, usize, usize)> {
    small_matrix().prop_flat_map(|x| {
        let (rows, cols) = (x.rows(), x.cols());
        (Just(x), 1..=rows, 1..=cols)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_matches_naive_oracle(x in small_matrix()) {
        let naive = common::naive_sum(&x);
        let fast = sum_statistic(&x);
        prop_assert!((naive - fast).abs() <= 1e-12 * (1.0 + naive.abs()));
    }

    #[test]
    fn exact_scan_dominates_any_submatrix(
        (x, m, n) in matrix_with_block(),
        pick_seed in any::<u64>(),
    ) {
        let exact = scan_exact(&x, m, n).unwrap();
        // a random feasible index pair can never beat the maximum
        let mut rng = substream(pick_seed, &[]);
        let rows = rand::seq::index::sample(&mut rng, x.rows(), m).into_vec();
        let cols = rand::seq::index::sample(&mut rng, x.cols(), n).into_vec();
        let mut rows = rows; rows.sort_unstable();
        let mut cols = cols; cols.sort_unstable();
        let candidate = SubmatrixIndex::new(rows, cols).unwrap();
        prop_assert!(candidate.fits(&x));
        let sum = x.block_sum(candidate.rows(), candidate.cols());
        prop_assert!(sum <= exact.value + 1e-9 * (1.0 + exact.value.abs()));
        // and the reported value recomputes from the argmax
        let recomputed = x.block_sum(exact.argmax.rows(), exact.argmax.cols());
        prop_assert!((exact.value - recomputed).abs() <= 1e-9 * (1.0 + recomputed.abs()));
    }

    #[test]
    fn hillclimb_never_beats_exact(
        (x, m, n) in matrix_with_block(),
        seed in any::<u64>(),
    ) {
        let exact = scan_exact(&x, m, n).unwrap();
        let climbed = scan_hillclimb(&x, m, n, 4, seed).unwrap();
        prop_assert!(climbed.value <= exact.value + 1e-9 * (1.0 + exact.value.abs()));
    }

    #[test]
    fn scan_is_equivariant_under_relabeling(
        (x, m, n) in matrix_with_block(),
        seed in any::<u64>(),
    ) {
        let mut rng = substream(seed, &[]);
        let mut row_map: Vec<usize> = (0..x.rows()).collect();
        let mut col_map: Vec<usize> = (0..x.cols()).collect();
        rand::seq::SliceRandom::shuffle(&mut row_map[..], &mut rng);
        rand::seq::SliceRandom::shuffle(&mut col_map[..], &mut rng);
        let mut values = Vec::with_capacity(x.rows() * x.cols());
        for &src_row in &row_map {
            for &src_col in &col_map {
                values.push(x.get(src_row, src_col));
            }
        }
        let relabeled = DataMatrix::new(x.rows(), x.cols(), values).unwrap();

        let original = scan_exact(&x, m, n).unwrap();
        let shuffled = scan_exact(&relabeled, m, n).unwrap();
        prop_assert!((original.value - shuffled.value).abs()
            <= 1e-9 * (1.0 + original.value.abs()));
        // the relabeled argmax must map back onto an equally good block
        let back_rows: Vec<usize> =
            shuffled.argmax.rows().iter().map(|&i| row_map[i]).collect();
        let back_cols: Vec<usize> =
            shuffled.argmax.cols().iter().map(|&j| col_map[j]).collect();
        let mapped = x.block_sum(&back_rows, &back_cols);
        prop_assert!((mapped - original.value).abs() <= 1e-9 * (1.0 + original.value.abs()));
    }

    #[test]
    fn uni_permutations_compose_within_rows(
        rows in 1usize..=4,
        cols in 1usize..=4,
        seed in any::<u64>(),
    ) {
        // canonical matrix with distinct entries: closure of the group shows
        // up as preserved row multisets after composition
        let values: Vec<f64> = (0..rows * cols).map(|v| v as f64).collect();
        let x = DataMatrix::new(rows, cols, values).unwrap();
        let mut rng = substream(seed, &[]);
        let a = sample_permutation(PermutationScheme::Unidimensional, rows, cols, &mut rng);
        let b = sample_permutation(PermutationScheme::Unidimensional, rows, cols, &mut rng);
        let composed = a.compose(&b);
        let direct = composed.apply(&x);
        let stepwise = a.apply(&b.apply(&x));
        prop_assert_eq!(&direct, &stepwise);
        for i in 0..rows {
            let mut orig: Vec<f64> = x.row(i).to_vec();
            let mut perm: Vec<f64> = direct.row(i).to_vec();
            orig.sort_by(f64::total_cmp);
            perm.sort_by(f64::total_cmp);
            prop_assert_eq!(orig, perm);
        }
    }

    #[test]
    fn sampled_permutations_preserve_multisets(
        x in small_matrix(),
        seed in any::<u64>(),
    ) {
        let mut rng = substream(seed, &[]);
        let bi = sample_permutation(PermutationScheme::Bidimensional, x.rows(), x.cols(), &mut rng);
        let y = bi.apply(&x);
        let mut all_x: Vec<f64> = x.values().to_vec();
        let mut all_y: Vec<f64> = y.values().to_vec();
        all_x.sort_by(f64::total_cmp);
        all_y.sort_by(f64::total_cmp);
        prop_assert_eq!(all_x, all_y);
    }

    #[test]
    fn ranks_are_invariant_under_monotone_transforms(
        x in small_matrix(),
        seed in any::<u64>(),
    ) {
        let grown = DataMatrix::new(
            x.rows(),
            x.cols(),
            x.values().iter().map(|v| (v * 0.01).exp()).collect(),
        ).unwrap();
        for scheme in PermutationScheme::ALL {
            prop_assert_eq!(
                rank_transform(&x, scheme, seed),
                rank_transform(&grown, scheme, seed)
            );
        }
    }

    #[test]
    fn uni_rank_rows_have_fixed_sum(x in small_matrix(), seed in any::<u64>()) {
        let ranks = rank_transform(&x, PermutationScheme::Unidimensional, seed);
        let cols = x.cols() as u32;
        for i in 0..x.rows() {
            let sum: u32 = (0..x.cols()).map(|j| ranks.get(i, j)).sum();
            prop_assert_eq!(sum, cols * (cols + 1) / 2);
        }
    }

    #[test]
    fn exceedance_count_is_monotone(
        draws in prop::collection::vec(-50.0f64..50.0, 1..40),
        lo in -60.0f64..60.0,
        bump in 0.0f64..20.0,
    ) {
        let c_lo = exceedance_count(lo, &draws);
        let c_hi = exceedance_count(lo + bump, &draws);
        prop_assert!(c_hi <= c_lo);
        prop_assert!(c_lo <= draws.len());
    }

    #[test]
    fn enumeration_cap_is_enforced(
        (x, m, n) in matrix_with_block(),
    ) {
        // a cap of zero always rejects, regardless of the instance
        let err = scan_exact_capped(&x, m, n, 0).unwrap_err();
        prop_assert!(matches!(err, subscan_core::Error::EnumerationTooLarge(_)));
    }
}
