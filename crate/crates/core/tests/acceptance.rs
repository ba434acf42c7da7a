//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines for passing criteria too.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synfocus_core::baselines::{
    baseline_fuse, fsd_pyramid, fsd_reconstruct, haar_forward, haar_inverse, laplacian_pyramid,
    laplacian_reconstruct, BaselineMethod, BaselineSpec,
};
use synfocus_core::compare::{compare_methods, COMPARISON_METHODS};
use synfocus_core::filter::sobel_gradient;
use synfocus_core::metrics::{metric_report, mse, MetricReport};
use synfocus_core::morph::{connected_components, dilate, erode, morph_close};
use synfocus_core::mwgf::{mwgf_fuse, FusionConfig, UNKNOWN};
use synfocus_core::poisson::reconstruct_from_gradients;
use synfocus_core::stack::{load_volume, map_projection, save_volume_raw, Volume};
use synfocus_core::synth::{
    defocus_render, dof_curve, in_focus_support, make_scene, AcquisitionSpec, DofFuse, Scene,
    SceneKind,
};
use synfocus_core::{BitMask, ImageF};

struct Criterion {
    number: u32,
    name: &'static str,
}

impl Criterion {
    fn pass(&self, detail: String) {
        println!("criterion {} ({}): PASS — {}", self.number, self.name, detail);
    }

    fn check(&self, ok: bool, detail: String) {
        if ok {
            self.pass(detail);
        } else {
            println!("criterion {} ({}): FAIL — {}", self.number, self.name, detail);
            panic!("criterion {} ({}) failed: {}", self.number, self.name, detail);
        }
    }
}

fn render_pair(scene: &Scene, foci: [f64; 2], dof: f64) -> (ImageF, ImageF) {
    (
        defocus_render(scene, foci[0], dof).unwrap(),
        defocus_render(scene, foci[1], dof).unwrap(),
    )
}

fn criterion1_pair() -> (Scene, ImageF, ImageF) {
    let scene = make_scene(SceneKind::Clocks, 512, 512, 20_260_826).unwrap();
    let (a, b) = render_pair(&scene, [0.0, 100.0], 120.0);
    (scene, a, b)
}

#[test]
fn criterion_1_metric_dominance_and_runtime() {
    let c = Criterion { number: 1, name: "fused-image metric dominance" };
    let (_, a, b) = criterion1_pair();

    let start = Instant::now();
    let fused = mwgf_fuse(&[a.clone(), b.clone()], &FusionConfig::default()).unwrap().fused;
    let elapsed = start.elapsed();

    let ra = metric_report(&a, None).unwrap();
    let rb = metric_report(&b, None).unwrap();
    let rf = metric_report(&fused, None).unwrap();
    let dominates = rf.dominates(&ra) && rf.dominates(&rb);
    c.check(
        dominates && elapsed.as_secs_f64() < 5.0,
        format!(
            "fused {:?} vs sources {:?} / {:?}; 512x512 fuse took {:.2} s (limit 5 s)",
            fmt4(&rf),
            fmt4(&ra),
            fmt4(&rb),
            elapsed.as_secs_f64()
        ),
    );
}

fn fmt4(r: &MetricReport) -> [f64; 4] {
    [r.entropy, r.average_gradient, r.std_dev, r.edge_strength]
}

#[test]
fn criterion_2_reference_proximity_informational() {
    let c = Criterion { number: 2, name: "reference proximity, informational" };
    // The canonical public clock pair is not bundled, so the published
    // per-source reference numbers cannot be checked directly; report our
    // synthetic stand-in next to them. Non-gating by definition.
    let (_, a, b) = criterion1_pair();
    let ra = metric_report(&a, None).unwrap();
    let rb = metric_report(&b, None).unwrap();
    let reference = [[7.3141, 2.0756, 51.8651], [7.3706, 2.4499, 51.6847]];
    c.pass(format!(
        "canonical pair unavailable; synthetic sources [entropy, avg-grad, std]: \
         {:?} and {:?} vs published {:?} (reported, not gated)",
        [ra.entropy, ra.average_gradient, ra.std_dev],
        [rb.entropy, rb.average_gradient, rb.std_dev],
        reference
    ));
}

#[test]
fn criterion_3_dof_doubling() {
    let c = Criterion { number: 3, name: "depth-of-field doubling" };
    let start = Instant::now();
    let scene = make_scene(SceneKind::TwoPlane, 512, 512, 33).unwrap();
    let probes = scene.distinct_depths();
    let config = FusionConfig::default();
    let single = AcquisitionSpec { focus_z_um: 0.0, dof_um: 120.0 };
    let pair = [single, AcquisitionSpec { focus_z_um: 100.0, dof_um: 120.0 }];

    let single_curve = dof_curve(&scene, &[single], DofFuse::None, &probes, &config).unwrap();
    let fused_curve = dof_curve(&scene, &pair, DofFuse::Mwgf, &probes, &config).unwrap();
    let s_single = in_focus_support(&single_curve);
    let s_fused = in_focus_support(&fused_curve);
    let ratio = s_fused as f64 / s_single as f64;
    let elapsed = start.elapsed();

    c.check(
        (1.5..=2.5).contains(&ratio) && elapsed.as_secs_f64() < 60.0,
        format!(
            "support {} -> {} (ratio {:.2}, target 2.0 +/- 25%); took {:.1} s (limit 60 s)",
            s_single,
            s_fused,
            ratio,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_fusion_beats_sources() {
    let c = Criterion { number: 4, name: "fusion beats both sources in MSE" };
    let config = FusionConfig::default();
    let mut passed = 0;
    let total = 20;
    for i in 0..total {
        let kind = if i % 2 == 0 { SceneKind::TwoPlane } else { SceneKind::Vessels };
        let foci = if i % 2 == 0 { [0.0, 100.0] } else { [50.0, 150.0] };
        let scene = make_scene(kind, 128, 128, 400 + i).unwrap();
        let (a, b) = render_pair(&scene, foci, 120.0);
        let fused = mwgf_fuse(&[a.clone(), b.clone()], &config).unwrap().fused;
        let e_f = mse(&fused, &scene.gt).unwrap();
        let e_a = mse(&a, &scene.gt).unwrap();
        let e_b = mse(&b, &scene.gt).unwrap();
        if e_f < e_a.min(e_b) {
            passed += 1;
        }
    }
    c.check(passed == total, format!("{passed}/{total} seeded pairs improved on both sources"));
}

#[test]
fn criterion_5_invariant_suite() {
    let c = Criterion { number: 5, name: "fusion invariants over random configs" };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_unity = 0.0f64;
    let mut worst_idem = 0.0f64;
    for i in 0..50 {
        let band_radius = 2 + rng.gen_range(0..7);
        let close_radius = rng.gen_range(1..6);
        let sigma_small = 0.5 + rng.gen::<f64>() * 1.5;
        let config = FusionConfig {
            sigma_large: sigma_small + 4.0 + rng.gen::<f64>() * 8.0,
            sigma_small,
            close_radius,
            band_radius,
            ..FusionConfig::default()
        };
        let kind = if i % 2 == 0 { SceneKind::TwoPlane } else { SceneKind::Vessels };
        let w = 4 * band_radius.max(16) + rng.gen_range(0..40);
        let h = 4 * band_radius.max(16) + rng.gen_range(0..40);
        let scene = make_scene(kind, w.max(64), h.max(64), 700 + i).unwrap();
        let (a, b) = render_pair(&scene, [0.0, 100.0], 120.0);
        let result = mwgf_fuse(&[a.clone(), b.clone()], &config).unwrap();

        worst_unity = worst_unity.max(result.weights.max_unity_deviation());
        assert!(
            result.trimap.labels().iter().all(|&l| l == UNKNOWN || (l as usize) < 2),
            "trimap must classify every pixel"
        );
        for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
            let f = result.fused.data()[i];
            assert!(
                f >= x.min(y) - 1e-9 && f <= x.max(y) + 1e-9,
                "pixel-domain fusion must stay inside the source hull"
            );
        }

        let same = mwgf_fuse(&[a.clone(), a.clone()], &config).unwrap().fused;
        let dev = same
            .data()
            .iter()
            .zip(a.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst_idem = worst_idem.max(dev);
    }
    c.check(
        worst_unity < 1e-6 && worst_idem < 1e-6,
        format!(
            "50 configs: max partition-of-unity deviation {worst_unity:.2e}, \
             max idempotence deviation {worst_idem:.2e} (limits 1e-6)"
        ),
    );
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BitMask {
    BitMask::new(w, h, (0..w * h).map(|_| rng.gen::<f64>() < p).collect()).unwrap()
}

/// Independent component labelling: repeated BFS flood fill, labels in
/// raster order of first encounter (the same canonical order the library
/// promises, so label maps must match exactly).
fn flood_fill_labels(mask: &BitMask) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    for start in 0..w * h {
        if !mask.get(start % w, start / w) || labels[start] != 0 {
            continue;
        }
        next += 1;
        let mut queue = std::collections::VecDeque::from([start]);
        labels[start] = next;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.get(nx as usize, ny as usize) && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

fn smooth_test_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageF {
    let p: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * std::f64::consts::TAU).collect();
    let a: Vec<f64> = (0..2).map(|_| 0.08 + 0.1 * rng.gen::<f64>()).collect();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 / w as f64 * std::f64::consts::PI;
            let v = y as f64 / h as f64 * std::f64::consts::PI;
            data.push(
                0.5 + a[0] * (u + p[0]).cos() * (v + p[1]).cos()
                    + a[1] * (u + p[2]).sin() * (v + p[3]).sin(),
            );
        }
    }
    ImageF::new(w, h, data).unwrap()
}

#[test]
fn criterion_6_oracle_equivalences() {
    let c = Criterion { number: 6, name: "oracle equivalences" };
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    for i in 0..200 {
        let mask = random_mask(&mut rng, 32, 32, 0.2 + 0.6 * (i as f64 / 200.0));
        let ours = connected_components(&mask);
        let oracle = flood_fill_labels(&mask);
        assert_eq!(ours.labels(), &oracle[..], "component labelling mismatch");
    }

    let mut worst_rmse = 0.0f64;
    for _ in 0..10 {
        let w = 48 + rng.gen_range(0..24);
        let h = 44 + rng.gen_range(0..24);
        let img = smooth_test_image(&mut rng, w, h);
        let g = sobel_gradient(&img);
        let back = reconstruct_from_gradients(&g, img.mean()).unwrap();
        let rmse = (img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (w * h) as f64)
            .sqrt();
        worst_rmse = worst_rmse.max(rmse);
    }

    for i in 0..100 {
        let mask = random_mask(&mut rng, 32, 32, 0.35);
        let r = 1 + i % 3;
        let closed = morph_close(&mask, r);
        assert!(mask.subset_of(&closed), "closing must be extensive");
        assert_eq!(morph_close(&closed, r), closed, "closing must be idempotent");
        assert!(mask.subset_of(&dilate(&mask, r)), "dilation must be extensive");
        assert!(erode(&mask, r).subset_of(&mask), "erosion must be anti-extensive");
    }

    c.check(
        worst_rmse < 1e-3,
        format!(
            "200 labelling matches, 100 morphology invariants, \
             worst gradient round-trip RMSE {worst_rmse:.2e} (limit 1e-3)"
        ),
    );
}

#[test]
fn criterion_7_baseline_sanity() {
    let c = Criterion { number: 7, name: "baseline sanity" };
    let scene = make_scene(SceneKind::Vessels, 96, 96, 77).unwrap();
    let (a, b) = render_pair(&scene, [50.0, 150.0], 120.0);

    let max_abs_diff = |x: &ImageF, y: &ImageF| {
        x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    };

    let methods = [
        BaselineMethod::Average,
        BaselineMethod::Lap,
        BaselineMethod::Dwt,
        BaselineMethod::Pca,
        BaselineMethod::Gra,
        BaselineMethod::Fsd,
    ];
    for method in methods {
        let same = baseline_fuse(&a, &a, &BaselineSpec::new(method)).unwrap();
        assert!(
            max_abs_diff(&same, &a) < 1e-6,
            "{} must be idempotent on identical inputs",
            method.name()
        );
    }
    let same = mwgf_fuse(&[a.clone(), a.clone()], &FusionConfig::default()).unwrap().fused;
    assert!(max_abs_diff(&same, &a) < 1e-6, "mwgf must be idempotent");

    let (details, coarse) = laplacian_pyramid(&a, 3);
    assert!(max_abs_diff(&laplacian_reconstruct(&details, &coarse), &a) < 1e-6);
    let (details, coarse) = fsd_pyramid(&a, 3);
    assert!(max_abs_diff(&fsd_reconstruct(&details, &coarse), &a) < 1e-6);
    assert!(max_abs_diff(&haar_inverse(&haar_forward(&a, 3), 3), &a) < 1e-6);

    let report = compare_methods(&a, &b, &scene.gt, &FusionConfig::default()).unwrap();
    let names: Vec<&str> = report.methods.iter().map(|m| m.method.as_str()).collect();
    assert_eq!(names, COMPARISON_METHODS, "compare must emit the six-method table");

    let (_, ca, cb) = criterion1_pair();
    let avg = baseline_fuse(&ca, &cb, &BaselineSpec::new(BaselineMethod::Average)).unwrap();
    let r_avg = metric_report(&avg, None).unwrap();
    let r_mwgf = metric_report(
        &mwgf_fuse(&[ca, cb], &FusionConfig::default()).unwrap().fused,
        None,
    )
    .unwrap();
    let not_worse = r_mwgf.entropy >= r_avg.entropy
        && r_mwgf.average_gradient >= r_avg.average_gradient
        && r_mwgf.std_dev >= r_avg.std_dev
        && r_mwgf.edge_strength >= r_avg.edge_strength;
    c.check(
        not_worse,
        format!(
            "idempotence, perfect reconstruction, six-method table; \
             mwgf {:?} vs average {:?} on the criterion-1 pair",
            fmt4(&r_mwgf),
            fmt4(&r_avg)
        ),
    );
}

#[test]
fn criterion_8_map_properties() {
    let c = Criterion { number: 8, name: "projection properties" };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let nx = 2 + rng.gen_range(0..63);
        let ny = 2 + rng.gen_range(0..63);
        let nz = 1 + rng.gen_range(0..32);
        // f32-representable amplitudes so the raw block stores them exactly
        let amps: Vec<f64> = (0..nx * ny * nz).map(|_| rng.gen::<f32>() as f64).collect();
        let vol = Volume::new(nx, ny, nz, 5.0, amps.clone()).unwrap();
        let (map, depth) = map_projection(&vol);
        for y in 0..ny {
            for x in 0..nx {
                let column: Vec<f64> = (0..nz).map(|z| vol.at(x, y, z)).collect();
                let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(map.at(x, y), max, "projection must equal the column max");
                assert_eq!(column[depth.get(x, y) as usize], max);
            }
        }

        // reverse the slice order: the projection image must not change
        let mut rev = Vec::with_capacity(amps.len());
        for z in (0..nz).rev() {
            rev.extend_from_slice(&amps[nx * ny * z..nx * ny * (z + 1)]);
        }
        let vol_rev = Volume::new(nx, ny, nz, 5.0, rev).unwrap();
        let (map_rev, _) = map_projection(&vol_rev);
        assert_eq!(map.data(), map_rev.data(), "projection must be z-permutation invariant");
    }

    let dir = tempfile::tempdir().unwrap();
    let amps: Vec<f64> = (0..16 * 12 * 8).map(|_| rng.gen::<f32>() as f64).collect();
    let vol = Volume::new(16, 12, 8, 4.0, amps).unwrap();
    let path = dir.path().join("stack.json");
    save_volume_raw(&vol, 30.0, &path, "stack.raw").unwrap();
    let (back, manifest) = load_volume(&path).unwrap();
    assert_eq!(manifest.focal_depth_um, 30.0);
    assert_eq!(back.amplitudes(), vol.amplitudes(), "raw round trip must be bit-exact");

    c.pass("50 volumes: max dominance and z-permutation invariance; raw round trip bit-exact"
        .to_string());
}
