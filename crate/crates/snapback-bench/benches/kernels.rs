use criterion::{black_box, criterion_group, criterion_main, Criterion};
use snapback_core::metrics::{psnr, ssim, PerceptualProvider, SurrogateProvider};
use snapback_core::reconstruct::{mock_reconstruct, DegradationProfile};
use snapback_core::synth::gen_image;

fn bench_metrics(c: &mut Criterion) {
    let a = gen_image(1);
    let b = mock_reconstruct(&a, 0.6, 7, DegradationProfile::Abrupt).unwrap();

    c.bench_function("ssim_512", |bench| {
        bench.iter(|| ssim(black_box(&a), black_box(&b)).unwrap())
    });
    c.bench_function("psnr_512", |bench| {
        bench.iter(|| psnr(black_box(&a), black_box(&b)).unwrap())
    });
    c.bench_function("surrogate_lpips_512", |bench| {
        bench.iter(|| SurrogateProvider.distance(black_box(&a), black_box(&b)).unwrap())
    });
}

fn bench_reconstruction(c: &mut Criterion) {
    let img = gen_image(2);
    c.bench_function("mock_reconstruct_s0.9", |bench| {
        bench.iter(|| mock_reconstruct(black_box(&img), 0.9, 3, DegradationProfile::Smooth).unwrap())
    });
    c.bench_function("gaussian_blur_sigma1.2", |bench| {
        bench.iter(|| black_box(&img).gaussian_blur(1.2))
    });
}

criterion_group!(benches, bench_metrics, bench_reconstruction);
criterion_main!(benches);
