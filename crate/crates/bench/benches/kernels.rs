use criterion::{criterion_group, criterion_main, Criterion};
use diffdc_bench::{network, sample};
use diffdc_core::forward::MeasurementOp;
use diffdc_core::numerics::{dft2_centered, gaussian_image, RandomSource};
use diffdc_core::sampler::reverse_step;
use diffdc_core::schedule::ScheduleParams;
use diffdc_core::NoisePredictor;
use std::hint::black_box;

fn dft(c: &mut Criterion) {
    let img = sample(1).truth.to_complex();
    c.bench_function("dft2_centered 64x64", |b| {
        b.iter(|| dft2_centered(black_box(&img)).unwrap())
    });
}

fn conv_forward(c: &mut Criterion) {
    let s = sample(2);
    let net = network(3);
    let y = gaussian_image(&mut RandomSource::new(4), 64, 64);
    c.bench_function("denoiser forward 64x64", |b| {
        b.iter(|| {
            net.predict_noise(black_box(&s.condition), black_box(&y), 0.5)
                .unwrap()
        })
    });
}

fn sampler_step(c: &mut Criterion) {
    let s = sample(5);
    let net = network(6);
    let schedule = ScheduleParams::rescaled(200).build().unwrap();
    let op = MeasurementOp::new(s.measurement.mask().clone());
    let mut rng = RandomSource::new(7);
    let y = gaussian_image(&mut rng, 64, 64);
    let z = gaussian_image(&mut rng, 64, 64);
    c.bench_function("reverse step + correction 64x64", |b| {
        b.iter(|| {
            let next = reverse_step(&net, &s.condition, black_box(&y), 100, &schedule, &z).unwrap();
            op.dc_update(&next, &s.measurement, 1.0).unwrap()
        })
    });
}

criterion_group!(benches, dft, conv_forward, sampler_step);
criterion_main!(benches);
