use proptest::prelude::*;

use vpk::geom::{axis_angle, Vec3};
use vpk::heatmap::{
    decode_argmax, decode_soft, gaussian_peak, ladder_targets, synth_target, SupervisionLadder,
    DEFAULT_SOFT_WINDOW,
};
use vpk::metrics::{pcp3d, procrustes_align, reconstruction_error, SimilarityTransform};
use vpk::skeleton::{
    back_project, make_toy_skeleton, project_pose, sample_pose, BBox, Camera, Pose3D,
};
use vpk::voxelgrid::{metric_to_voxel, voxel_to_metric, VoxelCoord, VoxelGrid, SUPPORTED_DEPTHS};

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (Vec3(a) - Vec3(b)).norm()
}

fn sse(a: &Pose3D, b: &Pose3D, off: Vec3) -> f64 {
    a.coords
        .iter()
        .zip(&b.coords)
        .map(|(p, q)| (Vec3(*p) - off - Vec3(*q)).norm().powi(2))
        .sum()
}

fn grid_strategy() -> impl Strategy<Value = VoxelGrid> {
    (
        1usize..40,
        1usize..40,
        prop::sample::select(SUPPORTED_DEPTHS.to_vec()),
        -300.0..600.0f64,
        -300.0..600.0f64,
        10.0..800.0f64,
        10.0..800.0f64,
        100.0..2000.0f64,
        1500.0..8000.0f64,
    )
        .prop_map(|(w, h, d, x, y, bw, bh, zr, zc)| VoxelGrid {
            w,
            h,
            d,
            bbox: BBox { x, y, w: bw, h: bh },
            z_half_range: zr,
            z_center: zc,
        })
}

fn cube(n: usize) -> VoxelGrid {
    VoxelGrid {
        w: n,
        h: n,
        d: n,
        bbox: BBox {
            x: 0.0,
            y: 0.0,
            w: n as f64,
            h: n as f64,
        },
        z_half_range: 1000.0,
        z_center: 4000.0,
    }
}

fn similarity() -> impl Strategy<Value = SimilarityTransform> {
    (
        0.3..3.0f64,
        prop::array::uniform3(-1.0..1.0f64),
        -3.1..3.1f64,
        prop::array::uniform3(-2000.0..2000.0f64),
    )
        .prop_filter("axis must not vanish", |(_, a, _, _)| {
            Vec3(*a).norm() > 1e-3
        })
        .prop_map(|(scale, axis, angle, translation)| SimilarityTransform {
            scale,
            rotation: axis_angle(Vec3(axis).normalized(), angle),
            translation,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sampled_poses_keep_limb_lengths(seed in any::<u64>()) {
        let sk = make_toy_skeleton();
        let pose = sample_pose(&sk, seed).unwrap();
        for (j, parent) in sk.parent.iter().enumerate() {
            if let Some(p) = *parent {
                let len = dist(pose.coords[j], pose.coords[p]);
                prop_assert!((len - sk.limb_length[j]).abs() <= 1e-9 * sk.limb_length[j]);
            }
        }
    }

    #[test]
    fn left_right_swap_is_an_involution(seed in any::<u64>()) {
        let sk = make_toy_skeleton();
        let pose = sample_pose(&sk, seed).unwrap();
        prop_assert_eq!(pose.swap_left_right(&sk).swap_left_right(&sk), pose);
    }

    #[test]
    fn back_projection_inverts_projection(seed in any::<u64>(), focal in 300.0..3000.0f64) {
        let sk = make_toy_skeleton();
        let cam = Camera { focal, cx: 320.0, cy: 240.0 };
        let pose = sample_pose(&sk, seed).unwrap();
        let p2 = project_pose(&pose, &cam).unwrap();
        for (uv, p) in p2.coords.iter().zip(&pose.coords) {
            let q = back_project(uv[0], uv[1], p[2], &cam).unwrap();
            prop_assert!(dist(*p, q) <= 1e-6);
        }
    }

    #[test]
    fn voxel_transforms_round_trip(
        grid in grid_strategy(),
        u in -400.0..900.0f64,
        v in -400.0..900.0f64,
        dz in -1.0..1.0f64,
    ) {
        let z = grid.z_center + dz * grid.z_half_range;
        let (back, bz) = voxel_to_metric(&grid, metric_to_voxel(&grid, [u, v], z));
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        prop_assert!(rel(back[0], u) <= 1e-9 && rel(back[1], v) <= 1e-9 && rel(bz, z) <= 1e-9);
    }

    #[test]
    fn voxel_transform_is_affine(
        grid in grid_strategy(),
        a in prop::array::uniform3(-500.0..500.0f64),
        b in prop::array::uniform3(-500.0..500.0f64),
    ) {
        let base = [200.0, 150.0, grid.z_center];
        let at = |p: [f64; 3]| metric_to_voxel(&grid, [p[0], p[1]], p[2]);
        let add = |p: [f64; 3], q: [f64; 3]| [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
        let (o, ea, eb, eab) = (at(base), at(add(base, a)), at(add(base, b)), at(add(add(base, a), b)));
        for (x0, xa, xb, xab) in [
            (o.i, ea.i, eb.i, eab.i),
            (o.j, ea.j, eb.j, eab.j),
            (o.k, ea.k, eb.k, eab.k),
        ] {
            let lhs = xab - x0;
            let rhs = (xa - x0) + (xb - x0);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn targets_stay_within_peak_and_decode_back(
        c in prop::array::uniform3(8.0..24.0f64),
        sigma in 1.0..3.0f64,
    ) {
        let grid = cube(32);
        let vc = VoxelCoord::new(c[0], c[1], c[2]);
        let vol = synth_target(&grid, &[vc], 1, sigma).unwrap();
        let peak = gaussian_peak(sigma);
        prop_assert!(vol.data.iter().all(|&x| (0.0..=peak + 1e-12).contains(&x)));
        prop_assert!(decode_argmax(&vol)[0].max_axis_distance(&vc) <= 0.5);
    }

    #[test]
    fn channel_isolation(
        joints in prop::collection::vec(prop::array::uniform3(1.0..15.0f64), 3),
        moved in 0usize..3,
        shift in prop::array::uniform3(-3.0..3.0f64),
    ) {
        let grid = cube(16);
        let vox: Vec<VoxelCoord> = joints.iter().map(|c| VoxelCoord::new(c[0], c[1], c[2])).collect();
        let mut other = vox.clone();
        let m = &mut other[moved];
        *m = VoxelCoord::new(m.i + shift[0], m.j + shift[1], m.k + shift[2]).clamped(&grid);
        let a = synth_target(&grid, &vox, 3, 2.0).unwrap();
        let b = synth_target(&grid, &other, 3, 2.0).unwrap();
        for j in 0..3 {
            if j != moved {
                prop_assert_eq!(a.joint_block(j), b.joint_block(j));
            }
        }
    }

    #[test]
    fn ladder_stages_decode_to_scaled_depth(
        c in prop::array::uniform3(0.0..16.0f64),
        ladder in prop::sample::select(vec![vec![1, 16], vec![2, 16], vec![1, 2, 16], vec![4, 8, 16]]),
    ) {
        let grid = cube(16);
        let vc = VoxelCoord::new(c[0], c[1], c[2]);
        let ladder = SupervisionLadder::new(ladder).unwrap();
        let stages = ladder_targets(&grid, &[vc], 1, &ladder, 2.0).unwrap();
        for (vol, &ds) in stages.iter().zip(ladder.depths()) {
            let got = decode_argmax(vol)[0];
            let scale = 16.0 / ds as f64;
            prop_assert!((got.k * scale - vc.k).abs() <= 0.5 * scale + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soft_decoding_is_subvoxel_accurate(c in prop::array::uniform3(16.0..48.0f64)) {
        let vc = VoxelCoord::new(c[0], c[1], c[2]);
        let vol = synth_target(&cube(64), &[vc], 1, 2.0).unwrap();
        prop_assert!(decode_soft(&vol, DEFAULT_SOFT_WINDOW)[0].max_axis_distance(&vc) <= 0.05);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reconstruction_error_ignores_similarities(seed in any::<u64>(), t in similarity()) {
        let sk = make_toy_skeleton();
        let gt = sample_pose(&sk, seed).unwrap();
        prop_assert!(reconstruction_error(&t.apply_pose(&gt), &gt).unwrap() <= 1e-6);
    }

    #[test]
    fn alignment_never_raises_squared_residual(
        seed in any::<u64>(),
        other in any::<u64>(),
        t in prop::option::of(similarity()),
    ) {
        let sk = make_toy_skeleton();
        let gt = sample_pose(&sk, seed).unwrap();
        let mut pred = sample_pose(&sk, other).unwrap();
        if let Some(t) = t {
            pred = t.apply_pose(&pred);
        }
        let (_, aligned) = procrustes_align(&pred, &gt).unwrap();
        let r = sk.root_index;
        let off = Vec3(pred.coords[r]) - Vec3(gt.coords[r]);
        prop_assert!(sse(&aligned, &gt, Vec3([0.0; 3])) <= sse(&pred, &gt, off) * (1.0 + 1e-12));
    }

    #[test]
    fn pcp_is_monotone_in_threshold(
        seed in any::<u64>(),
        noise in prop::collection::vec(prop::array::uniform3(-150.0..150.0f64), 12),
        lo in 0.05..1.0f64,
        step in 0.0..1.0f64,
    ) {
        let sk = make_toy_skeleton();
        let gt = sample_pose(&sk, seed).unwrap();
        let pred = Pose3D::new(
            gt.coords.iter().zip(&noise).map(|(p, n)| (Vec3(*p) + Vec3(*n)).into()).collect(),
        );
        let a = pcp3d(&pred, &gt, &sk, lo, sk.chest()).unwrap();
        let b = pcp3d(&pred, &gt, &sk, lo + step, sk.chest()).unwrap();
        prop_assert!(a.part_correct.iter().zip(&b.part_correct).all(|(&x, &y)| !x || y));
    }
}
