use std::ffi::{CStr, CString};
use std::ptr;

use vpk_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let n = unsafe { vpk_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, vpk_last_error_length());
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn toy() -> *mut VpkSkeleton {
    let mut sk = ptr::null_mut();
    assert_eq!(unsafe { vpk_skeleton_toy(&mut sk) }, VpkStatus::Ok);
    sk
}

const CAM: VpkCamera = VpkCamera {
    focal: 1000.0,
    cx: 320.0,
    cy: 240.0,
};

fn pose_and_grid(sk: *const VpkSkeleton, seed: u64, size: usize) -> (Vec<f64>, Vec<f64>, VpkGrid) {
    let mut xyz = vec![0.0; 36];
    let mut uv = vec![0.0; 24];
    let mut bbox = VpkBBox {
        x: 0.0,
        y: 0.0,
        w: 0.0,
        h: 0.0,
    };
    unsafe {
        assert_eq!(
            vpk_sample_pose(sk, seed, xyz.as_mut_ptr(), 12),
            VpkStatus::Ok
        );
        assert_eq!(
            vpk_project_pose(xyz.as_ptr(), 12, &CAM, uv.as_mut_ptr(), &mut bbox),
            VpkStatus::Ok
        );
    }
    let grid = VpkGrid {
        w: size,
        h: size,
        d: size,
        bbox,
        z_half_range: 1000.0,
        z_center: xyz[2],
    };
    (xyz, uv, grid)
}

#[test]
fn synth_decode_round_trip_through_the_abi() {
    let sk = toy();
    let (xyz, uv, grid) = pose_and_grid(sk, 11, 64);
    let mut ijk = vec![0.0; 36];
    for j in 0..12 {
        let st = unsafe {
            vpk_metric_to_voxel(
                &grid,
                uv[2 * j],
                uv[2 * j + 1],
                xyz[3 * j + 2],
                ijk[3 * j..].as_mut_ptr(),
            )
        };
        assert_eq!(st, VpkStatus::Ok);
    }
    let mut vol = ptr::null_mut();
    assert_eq!(
        unsafe { vpk_volume_synth(&grid, ijk.as_ptr(), 12, 2.0, &mut vol) },
        VpkStatus::Ok
    );

    let mut shape = [0usize; 4];
    assert_eq!(
        unsafe { vpk_volume_shape(vol, shape.as_mut_ptr()) },
        VpkStatus::Ok
    );
    assert_eq!(shape, [64, 64, 64, 12]);
    let mut len = 0;
    let data = unsafe { vpk_volume_data(vol, &mut len) };
    assert_eq!(len, 64 * 64 * 64 * 12);
    assert!(!data.is_null());

    let mut hard = vec![0.0; 36];
    let mut soft = vec![0.0; 36];
    unsafe {
        assert_eq!(vpk_decode_argmax(vol, hard.as_mut_ptr(), 12), VpkStatus::Ok);
        assert_eq!(
            vpk_decode_soft(vol, 5, soft.as_mut_ptr(), 12),
            VpkStatus::Ok
        );
    }
    for c in 0..36 {
        assert!((hard[c] - ijk[c]).abs() <= 0.5);
        assert!((soft[c] - ijk[c]).abs() <= 0.05);
    }

    // Lifting the decoded root lands on the sampled root.
    let mut root = [0.0; 3];
    unsafe {
        assert_eq!(
            vpk_lift_to_3d(&grid, &CAM, ijk[0], ijk[1], ijk[2], root.as_mut_ptr()),
            VpkStatus::Ok
        )
    };
    for a in 0..3 {
        assert!((root[a] - xyz[a]).abs() < 1e-6);
    }
    let mut uvz = [0.0; 3];
    unsafe {
        assert_eq!(
            vpk_voxel_to_metric(&grid, ijk[0], ijk[1], ijk[2], uvz.as_mut_ptr()),
            VpkStatus::Ok
        )
    };
    assert!((uvz[0] - uv[0]).abs() < 1e-9 && (uvz[2] - xyz[2]).abs() < 1e-9);

    unsafe {
        vpk_volume_free(vol);
        vpk_skeleton_free(sk);
    }
}

#[test]
fn volume_files_round_trip() {
    let sk = toy();
    let (_, _, grid) = pose_and_grid(sk, 2, 8);
    let ijk = [4.0, 4.0, 4.0];
    let mut vol = ptr::null_mut();
    assert_eq!(
        unsafe { vpk_volume_synth(&grid, ijk.as_ptr(), 1, 2.0, &mut vol) },
        VpkStatus::Ok
    );
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("v.vol").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { vpk_volume_write(vol, path.as_ptr()) },
        VpkStatus::Ok
    );
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { vpk_volume_read(path.as_ptr(), &mut back) },
        VpkStatus::Ok
    );
    let (mut a, mut b) = (0, 0);
    let (pa, pb) = unsafe { (vpk_volume_data(vol, &mut a), vpk_volume_data(back, &mut b)) };
    assert_eq!(a, b);
    let (sa, sb) = unsafe {
        (
            std::slice::from_raw_parts(pa, a),
            std::slice::from_raw_parts(pb, b),
        )
    };
    // Files store f32.
    assert!(sa.iter().zip(sb).all(|(x, y)| (*x as f32) as f64 == *y));

    let missing = CString::new(dir.path().join("none.vol").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(
        unsafe { vpk_volume_read(missing.as_ptr(), &mut none) },
        VpkStatus::Io
    );
    assert!(none.is_null());
    unsafe {
        vpk_volume_free(vol);
        vpk_volume_free(back);
        vpk_skeleton_free(sk);
    }
}

#[test]
fn metrics_through_the_abi() {
    let sk = toy();
    let (gt, uv, _) = pose_and_grid(sk, 4, 16);
    // Scaled and shifted copy: zero after similarity alignment, nonzero after root alignment.
    let pred: Vec<f64> = gt
        .iter()
        .enumerate()
        .map(|(i, v)| 1.2 * v + [10.0, -5.0, 30.0][i % 3])
        .collect();
    let (mut m, mut r, mut pcp) = (0.0, 1.0, 0.0);
    let mut parts = vec![7u8; 11];
    let mut n_parts = 0;
    unsafe {
        assert_eq!(
            vpk_mpjpe(pred.as_ptr(), gt.as_ptr(), 12, 0, &mut m),
            VpkStatus::Ok
        );
        assert_eq!(
            vpk_reconstruction_error(pred.as_ptr(), gt.as_ptr(), 12, &mut r),
            VpkStatus::Ok
        );
        assert_eq!(vpk_skeleton_part_count(sk, &mut n_parts), VpkStatus::Ok);
        assert_eq!(
            vpk_pcp3d(
                sk,
                gt.as_ptr(),
                gt.as_ptr(),
                12,
                0.5,
                &mut pcp,
                parts.as_mut_ptr()
            ),
            VpkStatus::Ok
        );
    }
    assert!(m > 10.0 && r < 1e-6, "{m} {r}");
    assert_eq!(pcp, 1.0);
    assert!(parts[..n_parts].iter().all(|&p| p == 1));
    assert!(parts[n_parts..].iter().all(|&p| p == 7));

    let mut root_idx = 99;
    unsafe { assert_eq!(vpk_skeleton_root_index(sk, &mut root_idx), VpkStatus::Ok) };
    let rel: Vec<f64> = (0..12)
        .map(|j| gt[3 * j + 2] - gt[3 * root_idx + 2])
        .collect();
    let mut z = 0.0;
    unsafe {
        assert_eq!(
            vpk_estimate_root_depth(sk, uv.as_ptr(), rel.as_ptr(), 12, &CAM, &mut z),
            VpkStatus::Ok
        )
    };
    assert!((z - gt[3 * root_idx + 2]).abs() < 25.0);
    unsafe { vpk_skeleton_free(sk) };
}

#[test]
fn errors_map_to_codes_and_messages() {
    let sk = toy();
    let mut n = 0;
    unsafe {
        assert_eq!(
            vpk_skeleton_joint_count(ptr::null(), &mut n),
            VpkStatus::NullPointer
        );
        assert!(last_error().contains("skeleton"));

        let mut out = [0.0; 9];
        assert_eq!(
            vpk_sample_pose(sk, 0, out.as_mut_ptr(), 3),
            VpkStatus::ShapeMismatch
        );
        assert!(last_error().starts_with("ShapeMismatch"));

        let behind = [0.0, 0.0, -5.0];
        let mut uv = [0.0; 2];
        let mut bbox = VpkBBox {
            x: 0.0,
            y: 0.0,
            w: 0.0,
            h: 0.0,
        };
        assert_eq!(
            vpk_project_pose(behind.as_ptr(), 1, &CAM, uv.as_mut_ptr(), &mut bbox),
            VpkStatus::NonPositiveDepth
        );

        let square = VpkBBox {
            x: 0.0,
            y: 0.0,
            w: 100.0,
            h: 100.0,
        };
        let bad_grid = VpkGrid {
            w: 8,
            h: 8,
            d: 8,
            bbox: square,
            z_half_range: -1.0,
            z_center: 3000.0,
        };
        let mut ijk = [0.0; 3];
        assert_eq!(
            vpk_metric_to_voxel(&bad_grid, 0.0, 0.0, 3000.0, ijk.as_mut_ptr()),
            VpkStatus::ConfigError
        );

        let gt = [0.0; 6];
        let mut r = 0.0;
        assert_eq!(
            vpk_reconstruction_error(gt.as_ptr(), gt.as_ptr(), 2, &mut r),
            VpkStatus::DegenerateConfiguration
        );

        let bad = CString::new("{\"n_joints\": 2}").unwrap();
        let mut parsed = ptr::null_mut();
        assert_eq!(
            vpk_skeleton_from_json(bad.as_ptr(), &mut parsed),
            VpkStatus::Json
        );
        assert!(parsed.is_null());

        // Truncated copies stay NUL-terminated and report the full length.
        let mut small = [1 as std::ffi::c_char; 4];
        let full = vpk_last_error_message(small.as_mut_ptr(), small.len());
        assert!(full > 3);
        assert_eq!(small[3], 0);
        assert_eq!(
            CStr::from_ptr(vpk_status_name(VpkStatus::ZeroLengthPart))
                .to_str()
                .unwrap(),
            "ZeroLengthPart"
        );
        vpk_skeleton_free(sk);
        vpk_skeleton_free(ptr::null_mut());
        vpk_volume_free(ptr::null_mut());
    }
}

#[test]
fn skeleton_json_round_trip() {
    let json =
        CString::new(serde_json::to_string(&vpk::skeleton::make_toy_skeleton()).unwrap()).unwrap();
    let mut sk = ptr::null_mut();
    assert_eq!(
        unsafe { vpk_skeleton_from_json(json.as_ptr(), &mut sk) },
        VpkStatus::Ok
    );
    let mut n = 0;
    assert_eq!(
        unsafe { vpk_skeleton_joint_count(sk, &mut n) },
        VpkStatus::Ok
    );
    assert_eq!(n, 12);
    unsafe { vpk_skeleton_free(sk) };
}
