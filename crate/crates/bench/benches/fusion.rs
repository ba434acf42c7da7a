use criterion::{criterion_group, criterion_main, Criterion};

use synfocus_core::filter::{gaussian_blur, sobel_gradient};
use synfocus_core::mwgf::{mwgf_fuse, FusionConfig};
use synfocus_core::poisson::reconstruct_from_gradients;
use synfocus_core::synth::{defocus_render, make_scene, SceneKind};

fn bench_pipeline(c: &mut Criterion) {
    let scene = make_scene(SceneKind::TwoPlane, 256, 256, 1).unwrap();
    let near = defocus_render(&scene, 0.0, 120.0).unwrap();
    let far = defocus_render(&scene, 100.0, 120.0).unwrap();
    let cfg = FusionConfig::default();

    c.bench_function("gaussian_blur_256_sigma11", |b| {
        b.iter(|| gaussian_blur(&scene.gt, 11.0).unwrap())
    });

    c.bench_function("sobel_256", |b| b.iter(|| sobel_gradient(&scene.gt)));

    c.bench_function("poisson_reconstruct_128", |b| {
        let small = make_scene(SceneKind::TwoPlane, 128, 128, 2).unwrap();
        let g = sobel_gradient(&small.gt);
        b.iter(|| reconstruct_from_gradients(&g, small.gt.mean()).unwrap())
    });

    c.bench_function("mwgf_fuse_256", |b| {
        b.iter(|| mwgf_fuse(&[near.clone(), far.clone()], &cfg).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_pipeline
}
criterion_main!(benches);
