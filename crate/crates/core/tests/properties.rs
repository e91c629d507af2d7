mod common;

use blindspot::align::{fit_alignment, residual_sum, DepthDomain, LandmarkSample};
use blindspot::eval::masked_metrics;
use blindspot::geometry::{forward_warp, relative_pose, CameraIntrinsics, PoseSE3};
use blindspot::losses::{bce_loss, kd_loss, pairwise_similarity, FeatureGrid};
use blindspot::pipeline::{aggregate_window, generate_frame, remove_small_components, traversable, visibility_mask, PipelineParams};
use blindspot::raster::{BinaryMask, DepthMap, Raster};
use blindspot::synthworld::{arc_trajectory, label_config, labels, BoxClass, SceneBox, SynthScene};
use nalgebra::{Point2, Point3, Rotation3, Vector3};
use proptest::prelude::*;

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    // A per-mask density so sparse and dense inputs both occur.
    (proptest::collection::vec(0.0f64..1.0, w * h), 0.0f64..1.0)
        .prop_map(move |(xs, density)| Raster::from_vec(w, h, xs.into_iter().map(|x| x < density).collect()).unwrap())
}

fn pose_strategy() -> impl Strategy<Value = PoseSE3> {
    (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-2.0f64..2.0)).prop_map(|(axis, t)| {
        let r = Rotation3::from_scaled_axis(Vector3::from(axis));
        PoseSE3::new(*r.matrix(), Vector3::from(t)).unwrap()
    })
}

fn small_k() -> CameraIntrinsics {
    CameraIntrinsics::new(40.0, 40.0, 31.5, 23.5, 64, 48).unwrap()
}

fn scene_strategy() -> impl Strategy<Value = SynthScene> {
    (
        (9.0f64..14.0, -3.0f64..3.0),
        (0.3f64..2.0, 0.5f64..3.0, 0.4f64..3.0),
        // At most 4.4 m of travel keeps the camera short of the box.
        0.0f64..2.0,
        -0.15f64..0.15,
    )
        .prop_map(|((x, y), (dx, dy, dz), speed, yaw)| {
            let b = SceneBox::on_ground(0.0, x, y, Vector3::new(dx, dy, dz), BoxClass::Vehicle).unwrap();
            let traj = arc_trajectory(Point3::new(0.0, 0.0, 1.6), 0.0, speed, yaw, 5.0, 12);
            SynthScene::new(small_k(), 5.0, 0.0, vec![b], traj).unwrap()
        })
}

fn params(window: usize) -> PipelineParams {
    PipelineParams {
        min_area: 4,
        ..PipelineParams::default()
    }
    .with_window(window)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn blind_spots_lie_in_surface_and_off_visible_road(scene in scene_strategy(), window in 1usize..8) {
        let seq = scene.render_sequence().unwrap();
        let r = generate_frame(&seq, 0, &params(window)).unwrap();
        let road = traversable(&seq.frames[0].semantic, &seq.labels).unwrap();
        prop_assert!(!r.omega.and(&road).unwrap().any());
        prop_assert!(r.omega.is_subset_of(&r.aggregated_surface));
        for (u, v, &s) in r.aggregated_surface.enumerate() {
            prop_assert_eq!(s, *r.support_count.get(u, v) >= 1);
            prop_assert!(*r.support_count.get(u, v) as usize <= window);
        }
        prop_assert_eq!(r.aggregated_depth.validity(), &r.aggregated_surface);
    }

    #[test]
    fn aggregated_surface_grows_with_window(scene in scene_strategy(), a in 1usize..6, extra in 1usize..5) {
        let seq = scene.render_sequence().unwrap();
        let small = aggregate_window(&seq, 0, a).unwrap();
        let large = aggregate_window(&seq, 0, a + extra).unwrap();
        prop_assert!(small.surface.is_subset_of(&large.surface));
    }

    #[test]
    fn oracle_tframe_is_nested_and_inside_truth(scene in scene_strategy(), a in 1usize..6, extra in 1usize..5) {
        let small = scene.oracle_blind_spots(0, a).unwrap();
        let large = scene.oracle_blind_spots(0, a + extra).unwrap();
        prop_assert!(small.tframe_blind.is_subset_of(&large.tframe_blind));
        prop_assert!(large.tframe_blind.is_subset_of(&large.true_blind));
        prop_assert!(!large.tframe_blind.and(&large.road_visible).unwrap().any());
    }

    #[test]
    fn visibility_keeps_sky_and_grows_with_distance(scene in scene_strategy(), l in 1.0f64..40.0, extra in 0.0f64..40.0) {
        let f = scene.render(0).unwrap();
        let cfg = label_config();
        let near = visibility_mask(&f.semantic, &f.depth, &scene.intrinsics, &cfg, l).unwrap();
        let far = visibility_mask(&f.semantic, &f.depth, &scene.intrinsics, &cfg, l + extra).unwrap();
        prop_assert!(near.is_subset_of(&far));
        for (u, v, &id) in f.semantic.enumerate() {
            if id == labels::SKY {
                prop_assert!(*near.get(u, v));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn component_filter_properties(mask in mask_strategy(24, 18), a in 1usize..40, b in 1usize..40) {
        let (lo, hi) = (a.min(b), a.max(b));
        let out = remove_small_components(&mask, lo);
        prop_assert!(out.is_subset_of(&mask));
        prop_assert_eq!(&remove_small_components(&out, lo), &out);
        prop_assert!(remove_small_components(&mask, hi).is_subset_of(&out));
        prop_assert_eq!(&out, &common::reference_component_filter(&mask, lo));
    }

    #[test]
    fn project_inverts_backproject(u in -50.0f64..100.0, v in -50.0f64..100.0, d in 0.01f64..500.0) {
        let k = small_k();
        let p = k.backproject(Point2::new(u, v), d).unwrap();
        let proj = k.project(&p).unwrap();
        prop_assert!((proj.pixel.x - u).abs() < 1e-9 && (proj.pixel.y - v).abs() < 1e-9);
        prop_assert!((proj.depth - d).abs() < 1e-9 * d.max(1.0));
    }

    #[test]
    fn relative_poses_are_mutual_inverses(a in pose_strategy(), b in pose_strategy()) {
        let round = relative_pose(&a, &b).compose(&relative_pose(&b, &a));
        prop_assert!(round.max_abs_diff(&PoseSE3::identity()) < 1e-9);
        let p = Point3::new(0.3, -1.2, 4.0);
        let direct = b.inverse().transform_point(&a.transform_point(&p));
        prop_assert!((relative_pose(&a, &b).transform_point(&p) - direct).norm() < 1e-9);
    }

    #[test]
    fn warp_depth_is_valid_exactly_on_mask(mask in mask_strategy(16, 12), rel in pose_strategy(), d in 0.5f64..20.0) {
        let k = CameraIntrinsics::new(12.0, 12.0, 7.5, 5.5, 16, 12).unwrap();
        let depth = DepthMap::from_values(Raster::filled(16, 12, d));
        let (m, z) = forward_warp(&mask, &depth, &rel, &k).unwrap();
        prop_assert_eq!(z.validity(), &m);
        let (same, _) = forward_warp(&mask, &depth, &PoseSE3::identity(), &k).unwrap();
        prop_assert!(mask.is_subset_of(&same));
    }

    #[test]
    fn ols_is_a_least_squares_minimum(
        pts in proptest::collection::vec((1.0f64..80.0, -1.0f64..1.0), 3..40),
        scale in 0.1f64..5.0, shift in -0.5f64..0.5, ds in -1e-3f64..1e-3, db in -1e-3f64..1e-3,
    ) {
        let samples: Vec<LandmarkSample> = pts
            .iter()
            .enumerate()
            .map(|(i, &(d, noise))| LandmarkSample::new(0, Point2::new(0.0, 0.0), d, i as f64 * 0.37 + scale * noise + shift).unwrap())
            .collect();
        for domain in [DepthDomain::InverseDepth, DepthDomain::Depth] {
            let fit = fit_alignment(&samples, domain).unwrap();
            let best = residual_sum(&samples, domain, fit.scale, fit.shift);
            let other = residual_sum(&samples, domain, fit.scale + ds, fit.shift + db);
            prop_assert!(best <= other * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        pts in proptest::collection::vec((1.0f64..80.0, 0.0f64..10.0), 3..40), a in 0.01f64..100.0, b in -50.0f64..50.0,
    ) {
        let mk = |f: &dyn Fn(f64) -> f64| -> Vec<LandmarkSample> {
            pts.iter().map(|&(d, m)| LandmarkSample::new(0, Point2::new(0.0, 0.0), d, f(m)).unwrap()).collect()
        };
        let base = fit_alignment(&mk(&|m| m), DepthDomain::InverseDepth);
        let moved = fit_alignment(&mk(&|m| a * m + b), DepthDomain::InverseDepth);
        if let (Ok(x), Ok(y)) = (base, moved) {
            prop_assert!((x.pearson_r - y.pearson_r).abs() < 1e-6);
        }
    }

    #[test]
    fn kd_loss_is_nonnegative_symmetric_and_scale_invariant(
        t in proptest::collection::vec(-2.0f64..2.0, 36), s in proptest::collection::vec(-2.0f64..2.0, 36),
        factors in proptest::collection::vec(0.1f64..10.0, 12),
    ) {
        let a_t = pairwise_similarity(&FeatureGrid::new(4, 3, 3, t.clone()).unwrap()).matrix;
        let a_s = pairwise_similarity(&FeatureGrid::new(4, 3, 3, s).unwrap()).matrix;
        let l = kd_loss(&a_t, &a_s).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l, kd_loss(&a_s, &a_t).unwrap());
        let scaled: Vec<f64> = t.iter().enumerate().map(|(i, x)| x * factors[i / 3]).collect();
        let a_scaled = pairwise_similarity(&FeatureGrid::new(4, 3, 3, scaled).unwrap()).matrix;
        prop_assert!(kd_loss(&a_t, &a_scaled).unwrap() < 1e-20);
    }

    #[test]
    fn bce_decreases_along_negative_gradient(
        omega in mask_strategy(6, 5), vis in mask_strategy(6, 5),
        b in proptest::collection::vec(0.05f64..0.95, 30),
    ) {
        let mut vis = vis;
        vis.set(2, 2, true);
        let b = Raster::from_vec(6, 5, b).unwrap();
        let out = bce_loss(&omega, &b, &vis, 1e-7).unwrap();
        let step = 1e-4;
        let moved = Raster::from_vec(6, 5, b.iter().zip(out.grad.iter()).map(|(x, g)| x - step * g).collect()).unwrap();
        let after = bce_loss(&omega, &moved, &vis, 1e-7).unwrap();
        prop_assert!(after.loss < out.loss);
        for (u, v, &g) in out.grad.enumerate() {
            if !*vis.get(u, v) {
                prop_assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn metrics_count_only_inside_visibility(
        pred in mask_strategy(12, 10), gt in mask_strategy(12, 10), vis in mask_strategy(12, 10),
        noise in mask_strategy(12, 10),
    ) {
        let mut vis = vis;
        vis.set(0, 0, true);
        let r = masked_metrics(&pred, &gt, &vis).unwrap();
        prop_assert_eq!(r.tp + r.fn_, gt.and(&vis).unwrap().count_ones() as u64);
        prop_assert_eq!(r.counted(), vis.count_ones() as u64);
        let outside = noise.and_not(&vis).unwrap();
        let flip = |m: &BinaryMask| Raster::from_fn(12, 10, |u, v| *m.get(u, v) ^ *outside.get(u, v));
        prop_assert_eq!(r, masked_metrics(&flip(&pred), &flip(&gt), &vis).unwrap());
        let own = masked_metrics(&pred, &pred, &vis).unwrap();
        if pred.and(&vis).unwrap().any() {
            prop_assert_eq!(own.iou(), Some(1.0));
        }
    }
}
