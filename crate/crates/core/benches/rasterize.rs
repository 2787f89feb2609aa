use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use evbc::histogram::{downsample_histogram, rasterize_events};
use evbc::{Event, Polarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn events(n: usize) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| {
            Event::cd(
                i as u64,
                rng.random_range(0..1280),
                rng.random_range(0..720),
                Polarity::from_bit(rng.random_bool(0.5)),
            )
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("rasterize");
    for n in [10_000usize, 1_000_000] {
        let evs = events(n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("1280x720", n), &evs, |b, evs| {
            b.iter(|| rasterize_events(black_box(evs), 1280, 720, true).unwrap())
        });
    }
    let h = rasterize_events(&events(100_000), 1280, 720, true).unwrap();
    g.bench_function("downsample_x4", |b| {
        b.iter(|| downsample_histogram(black_box(&h), 4).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
