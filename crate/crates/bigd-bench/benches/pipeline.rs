use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use bigd::descriptor::extract_dense;
use bigd::encoding::{fv_encode, vlad_encode, FvScaling};
use bigd::gradients::{integrate, sobel};
use bigd_bench::{fitted_codebook, fitted_gmm, random_image, reference_descriptors, reference_pattern};

fn bench_channel_maps(c: &mut Criterion) {
    let img = random_image(200, 200, 1);
    c.bench_function("sobel_integrate_200x200", |b| {
        b.iter(|| integrate(&sobel(black_box(&img))))
    });
}

fn bench_dense_extraction(c: &mut Criterion) {
    let img = random_image(200, 200, 1);
    let pattern = reference_pattern();
    c.bench_function("extract_dense_200x200_step2", |b| {
        b.iter(|| extract_dense(black_box(&img), &pattern, 2, "bench").unwrap())
    });
}

fn bench_encoders(c: &mut Criterion) {
    let set = reference_descriptors();
    let cb = fitted_codebook(&set, 128);
    c.bench_function("vlad_encode_8649x80_k128", |b| {
        b.iter(|| vlad_encode(&cb, black_box(&set)).unwrap())
    });

    let gmm = fitted_gmm(&set, 32);
    let mut group = c.benchmark_group("fisher");
    group.sample_size(10);
    group.bench_function("fv_encode_8649x80_k32", |b| {
        b.iter(|| fv_encode(&gmm, black_box(&set), FvScaling::Improved).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_channel_maps,
    bench_dense_extraction,
    bench_encoders
);
criterion_main!(benches);
