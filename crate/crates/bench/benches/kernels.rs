use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dualcascade::cascade::{loss_and_gradients, reconstruct};
use dualcascade::fourier::fft2c;
use dualcascade::layers::{conv2d_forward, Conv2d};
use dualcascade::training::initial_params;
use dualcascade::{CascadeConfig, RealTensor};
use dualcascade_bench::default_sample;

fn fft(c: &mut Criterion) {
    let s = default_sample(64, 4);
    c.bench_function("fft2c 4x64x64", |b| b.iter(|| fft2c(black_box(&s.k_sparse))));
}

fn conv(c: &mut Criterion) {
    let x = RealTensor::zeros(&[32, 64, 64]);
    let w = Conv2d::zeros(32, 32, 3);
    c.bench_function("conv2d 32->32 3x3 64x64", |b| {
        b.iter(|| conv2d_forward(black_box(&x), &w, None).unwrap())
    });
}

fn cascade(c: &mut Criterion) {
    let s = default_sample(64, 4);
    let cfg = CascadeConfig::for_coils(4);
    let p = initial_params(&cfg, 17).unwrap();
    let mut g = c.benchmark_group("cascade");
    g.sample_size(10);
    g.bench_function("reconstruct N=2", |b| b.iter(|| reconstruct(black_box(&s), &p, &cfg).unwrap()));
    g.bench_function("loss and gradients N=2", |b| {
        b.iter(|| loss_and_gradients(black_box(&s), &p, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, fft, conv, cascade);
criterion_main!(benches);
