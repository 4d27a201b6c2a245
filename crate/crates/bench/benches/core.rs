use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use num_bigint::BigUint;
use rand::Rng;

use nlpuf_core::crossbar::CrossbarArray;
use nlpuf_core::device::ProcessVariation;
use nlpuf_core::metrics;
use nlpuf_core::puf::{respond_bit, ChallengeSpace, FreeLinePolicy};
use nlpuf_core::rng::substream;
use nlpuf_core::tuning::{generate_target_distribution, program_array, TuningPolicy};

fn tuned_10x10() -> CrossbarArray {
    let process = ProcessVariation::default();
    let mut rng = substream(77, "bench-fab", 0);
    let mut array = CrossbarArray::sample(1, 10, 10, false, &process, &mut rng).unwrap();
    let dist = generate_target_distribution(
        array.line_map(),
        20e-6,
        6e-6,
        0.02,
        1e-6,
        200e-6,
        &mut substream(77, "bench-targets", 0),
    )
    .unwrap();
    program_array(&mut array, &dist, &TuningPolicy::default(), &mut substream(77, "bench-tune", 0))
        .unwrap();
    array
}

fn bench_respond(c: &mut Criterion) {
    let array = tuned_10x10();
    let space = ChallengeSpace::new(10, 10, 5, 2, FreeLinePolicy::Configurable).unwrap();
    let mut rng = substream(77, "bench-ranks", 0);
    let challenges: Vec<_> = (0..64)
        .map(|_| {
            space
                .challenge_from_rank(&BigUint::from(rng.random_range(0..92_897_280u64)))
                .unwrap()
        })
        .collect();
    let mut idx = 0;
    c.bench_function("respond_bit_600mv", |b| {
        b.iter(|| {
            idx = (idx + 1) % challenges.len();
            respond_bit(&array, black_box(&challenges[idx]), 0.6, None).unwrap()
        })
    });
}

fn bench_unrank(c: &mut Criterion) {
    let space = ChallengeSpace::new(10, 10, 5, 2, FreeLinePolicy::Configurable).unwrap();
    let mut rng = substream(77, "bench-unrank", 0);
    c.bench_function("challenge_from_rank_10x10", |b| {
        b.iter(|| {
            let rank = BigUint::from(rng.random_range(0..92_897_280u64));
            space.challenge_from_rank(black_box(&rank)).unwrap()
        })
    });
}

fn bench_program(c: &mut Criterion) {
    let process = ProcessVariation::default();
    c.bench_function("program_10x10", |b| {
        b.iter(|| {
            let mut rng = substream(78, "bench-fab", 0);
            let mut array = CrossbarArray::sample(1, 10, 10, false, &process, &mut rng).unwrap();
            let dist = generate_target_distribution(
                array.line_map(),
                20e-6,
                6e-6,
                0.02,
                1e-6,
                200e-6,
                &mut substream(78, "bench-targets", 0),
            )
            .unwrap();
            program_array(
                &mut array,
                &dist,
                &TuningPolicy::default(),
                &mut substream(78, "bench-tune", 0),
            )
            .unwrap()
        })
    });
}

fn bench_diffuseness(c: &mut Criterion) {
    let mut rng = substream(77, "bench-keys", 0);
    let keys: Vec<u64> = (0..6000).map(|_| rng.random()).collect();
    c.bench_function("diffuseness_6000_keys", |b| {
        b.iter(|| metrics::diffuseness(black_box(&keys)).unwrap())
    });
}

criterion_group!(benches, bench_respond, bench_unrank, bench_program, bench_diffuseness);
criterion_main!(benches);
