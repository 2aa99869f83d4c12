use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use subscan_core::{
    build_null_table, generate_matrix, permutation_pvalue_mc, rank_transform, scan_exact,
    scan_hillclimb, Estimator, Family, NullTableKey, PermutationScheme, ScanStatistic, StatMethod,
};

fn bench_scan(c: &mut Criterion) {
    let desk = generate_matrix(60, 40, None, Family::Normal, 1).unwrap();
    c.bench_function("hillclimb_60x40_8x6_r10", |b| {
        b.iter(|| scan_hillclimb(black_box(&desk), 8, 6, 10, 42).unwrap())
    });

    let small = generate_matrix(12, 10, None, Family::Normal, 2).unwrap();
    c.bench_function("exact_12x10_3x3", |b| {
        b.iter(|| scan_exact(black_box(&small), 3, 3).unwrap())
    });
}

fn bench_calibration(c: &mut Criterion) {
    let x = generate_matrix(20, 15, None, Family::Normal, 3).unwrap();
    let stat = ScanStatistic::new(4, 3, StatMethod::HillClimb { restarts: 10 });
    c.bench_function("perm_bi_pvalue_20x15_B99", |b| {
        b.iter(|| {
            permutation_pvalue_mc(
                black_box(&x),
                PermutationScheme::Bidimensional,
                99,
                7,
                &stat,
                Estimator::McAddOne,
            )
            .unwrap()
        })
    });

    c.bench_function("rank_transform_60x40_bi", |b| {
        let big = generate_matrix(60, 40, None, Family::Normal, 4).unwrap();
        b.iter(|| rank_transform(black_box(&big), PermutationScheme::Bidimensional, 5))
    });

    c.bench_function("null_table_20x15_4x3_B50", |b| {
        let key = NullTableKey {
            rows: 20,
            cols: 15,
            m: 4,
            n: 3,
            scheme: PermutationScheme::Unidimensional,
            draws: 50,
            method: StatMethod::HillClimb { restarts: 10 },
            seed: 9,
        };
        b.iter(|| build_null_table(black_box(&key)).unwrap())
    });
}

criterion_group!(benches, bench_scan, bench_calibration);
criterion_main!(benches);
