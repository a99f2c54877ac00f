//! C ABI over `vpk`.
//!
//! Every fallible function returns a [`VpkStatus`]. On failure a message is kept
//! per thread and can be copied out with [`vpk_last_error_message`]. Handles are
//! opaque and owned by the caller, who releases them with the matching `_free`.
//! Point arrays are flat `double` buffers of `n * 3` (or `n * 2`) values.
//!
//! # Safety
//!
//! Pointers must be null or valid for the documented length. Handles must come
//! from this library and must not be used after being freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vpk::heatmap::{self, HeatmapVolume};
use vpk::metrics;
use vpk::skeleton::{self, Camera, Pose2D, Pose3D, Skeleton};
use vpk::voxelgrid::{self, DepthSearch, VoxelCoord, VoxelGrid};
use vpk::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VpkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonPositiveDepth = 4,
    DegenerateInput = 5,
    DegenerateConfiguration = 6,
    ZeroLengthPart = 7,
    ConfigError = 8,
    NonFiniteLoss = 9,
    InvalidSkeleton = 10,
    Format = 11,
    Io = 12,
    Json = 13,
    Panic = 14,
}

/// Pinhole intrinsics in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpkCamera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpkBBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// A voxel grid bound to one sample: image box plus a depth slab centered on the root.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpkGrid {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    pub bbox: VpkBBox,
    pub z_half_range: f64,
    pub z_center: f64,
}

/// Opaque skeleton handle.
pub struct VpkSkeleton(Skeleton);

/// Opaque heatmap volume handle.
pub struct VpkVolume(HeatmapVolume);

struct Failure(VpkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ShapeMismatch(_) => VpkStatus::ShapeMismatch,
            Error::NonPositiveDepth { .. } => VpkStatus::NonPositiveDepth,
            Error::DegenerateInput(_) => VpkStatus::DegenerateInput,
            Error::DegenerateConfiguration(_) => VpkStatus::DegenerateConfiguration,
            Error::ZeroLengthPart(..) => VpkStatus::ZeroLengthPart,
            Error::Config(_) => VpkStatus::ConfigError,
            Error::NonFiniteLoss { .. } => VpkStatus::NonFiniteLoss,
            Error::InvalidSkeleton(_) => VpkStatus::InvalidSkeleton,
            Error::Format(_) => VpkStatus::Format,
            Error::Io(_) => VpkStatus::Io,
            Error::Json(_) => VpkStatus::Json,
        };
        Failure(status, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type FfiResult<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> VpkStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(VpkStatus::Panic, format!("Panic: {msg}")))
    });
    match outcome {
        Ok(()) => VpkStatus::Ok,
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(
        VpkStatus::NullPointer,
        format!("NullPointer: {what} is null"),
    )
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            VpkStatus::InvalidArgument,
            format!("InvalidArgument: {what} is not UTF-8"),
        )
    })
}

unsafe fn pose(p: *const f64, n: usize, what: &str) -> FfiResult<Pose3D> {
    let flat = slice(p, 3 * n, what)?;
    Ok(Pose3D::new(
        flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    ))
}

fn camera(c: &VpkCamera) -> Camera {
    Camera {
        focal: c.focal,
        cx: c.cx,
        cy: c.cy,
    }
}

fn grid(g: &VpkGrid) -> FfiResult<VoxelGrid> {
    let grid = VoxelGrid {
        w: g.w,
        h: g.h,
        d: g.d,
        bbox: skeleton::BBox {
            x: g.bbox.x,
            y: g.bbox.y,
            w: g.bbox.w,
            h: g.bbox.h,
        },
        z_half_range: g.z_half_range,
        z_center: g.z_center,
    };
    grid.validate()?;
    Ok(grid)
}

fn check_joints(expected: usize, got: usize, what: &str) -> FfiResult<()> {
    if expected != got {
        return Err(
            Error::ShapeMismatch(format!("{what}: expected {expected} joints, got {got}")).into(),
        );
    }
    Ok(())
}

/// Static name of a status code, e.g. `"ShapeMismatch"`.
#[no_mangle]
pub extern "C" fn vpk_status_name(status: VpkStatus) -> *const c_char {
    let s: &'static CStr = match status {
        VpkStatus::Ok => c"Ok",
        VpkStatus::NullPointer => c"NullPointer",
        VpkStatus::InvalidArgument => c"InvalidArgument",
        VpkStatus::ShapeMismatch => c"ShapeMismatch",
        VpkStatus::NonPositiveDepth => c"NonPositiveDepth",
        VpkStatus::DegenerateInput => c"DegenerateInput",
        VpkStatus::DegenerateConfiguration => c"DegenerateConfiguration",
        VpkStatus::ZeroLengthPart => c"ZeroLengthPart",
        VpkStatus::ConfigError => c"ConfigError",
        VpkStatus::NonFiniteLoss => c"NonFiniteLoss",
        VpkStatus::InvalidSkeleton => c"InvalidSkeleton",
        VpkStatus::Format => c"Format",
        VpkStatus::Io => c"Io",
        VpkStatus::Json => c"Json",
        VpkStatus::Panic => c"Panic",
    };
    s.as_ptr()
}

/// Byte length of the calling thread's last error message, without the terminator.
#[no_mangle]
pub extern "C" fn vpk_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (truncated, always NUL-terminated when
/// `cap > 0`) and returns its full length.
#[no_mangle]
pub unsafe extern "C" fn vpk_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// The built-in 12-joint skeleton.
#[no_mangle]
pub unsafe extern "C" fn vpk_skeleton_toy(out: *mut *mut VpkSkeleton) -> VpkStatus {
    guard(|| {
        let sk = Box::into_raw(Box::new(VpkSkeleton(skeleton::make_toy_skeleton())));
        write_out(out, sk, "out")
    })
}

/// Parses and validates a skeleton from its JSON form.
#[no_mangle]
pub unsafe extern "C" fn vpk_skeleton_from_json(
    json: *const c_char,
    out: *mut *mut VpkSkeleton,
) -> VpkStatus {
    guard(|| {
        let sk: Skeleton = serde_json::from_str(c_str(json, "json")?).map_err(Error::from)?;
        sk.validate()?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, Box::into_raw(Box::new(VpkSkeleton(sk))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn vpk_skeleton_free(sk: *mut VpkSkeleton) {
    if !sk.is_null() {
        drop(Box::from_raw(sk));
    }
}

#[no_mangle]
pub unsafe extern "C" fn vpk_skeleton_joint_count(
    sk: *const VpkSkeleton,
    out: *mut usize,
) -> VpkStatus {
    guard(|| write_out(out, reference(sk, "skeleton")?.0.n_joints, "out"))
}

#[no_mangle]
pub unsafe extern "C" fn vpk_skeleton_root_index(
    sk: *const VpkSkeleton,
    out: *mut usize,
) -> VpkStatus {
    guard(|| write_out(out, reference(sk, "skeleton")?.0.root_index, "out"))
}

/// Number of parts scored by [`vpk_pcp3d`].
#[no_mangle]
pub unsafe extern "C" fn vpk_skeleton_part_count(
    sk: *const VpkSkeleton,
    out: *mut usize,
) -> VpkStatus {
    guard(|| write_out(out, reference(sk, "skeleton")?.0.parts.len(), "out"))
}

/// Samples a random pose (camera frame, mm) into `out_xyz[n * 3]`.
#[no_mangle]
pub unsafe extern "C" fn vpk_sample_pose(
    sk: *const VpkSkeleton,
    seed: u64,
    out_xyz: *mut f64,
    n: usize,
) -> VpkStatus {
    guard(|| {
        let sk = &reference(sk, "skeleton")?.0;
        check_joints(sk.n_joints, n, "output buffer")?;
        let out = slice_mut(out_xyz, 3 * n, "out_xyz")?;
        let p = skeleton::sample_pose(sk, seed)?;
        for (dst, src) in out.chunks_exact_mut(3).zip(&p.coords) {
            dst.copy_from_slice(src);
        }
        Ok(())
    })
}

/// Projects `xyz[n * 3]` into `out_uv[n * 2]` and writes the padded joint box.
#[no_mangle]
pub unsafe extern "C" fn vpk_project_pose(
    xyz: *const f64,
    n: usize,
    cam: *const VpkCamera,
    out_uv: *mut f64,
    out_bbox: *mut VpkBBox,
) -> VpkStatus {
    guard(|| {
        let p = pose(xyz, n, "xyz")?;
        let cam = camera(reference(cam, "camera")?);
        let out = slice_mut(out_uv, 2 * n, "out_uv")?;
        if out_bbox.is_null() {
            return Err(null("out_bbox"));
        }
        let p2 = skeleton::project_pose(&p, &cam)?;
        for (dst, src) in out.chunks_exact_mut(2).zip(&p2.coords) {
            dst.copy_from_slice(src);
        }
        let b = p2.bbox;
        write_out(
            out_bbox,
            VpkBBox {
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
            },
            "out_bbox",
        )
    })
}

/// Pixel position and depth to continuous voxel coordinates `out_ijk[3]`.
#[no_mangle]
pub unsafe extern "C" fn vpk_metric_to_voxel(
    g: *const VpkGrid,
    u: f64,
    v: f64,
    z: f64,
    out_ijk: *mut f64,
) -> VpkStatus {
    guard(|| {
        let g = grid(reference(g, "grid")?)?;
        let out = slice_mut(out_ijk, 3, "out_ijk")?;
        let c = voxelgrid::metric_to_voxel(&g, [u, v], z);
        out.copy_from_slice(&[c.i, c.j, c.k]);
        Ok(())
    })
}

/// Inverse of [`vpk_metric_to_voxel`]: writes `(u, v, z)` to `out_uvz[3]`.
#[no_mangle]
pub unsafe extern "C" fn vpk_voxel_to_metric(
    g: *const VpkGrid,
    i: f64,
    j: f64,
    k: f64,
    out_uvz: *mut f64,
) -> VpkStatus {
    guard(|| {
        let g = grid(reference(g, "grid")?)?;
        let out = slice_mut(out_uvz, 3, "out_uvz")?;
        let ([u, v], z) = voxelgrid::voxel_to_metric(&g, VoxelCoord::new(i, j, k));
        out.copy_from_slice(&[u, v, z]);
        Ok(())
    })
}

/// Voxel coordinates to a camera-frame point `out_xyz[3]` in mm.
#[no_mangle]
pub unsafe extern "C" fn vpk_lift_to_3d(
    g: *const VpkGrid,
    cam: *const VpkCamera,
    i: f64,
    j: f64,
    k: f64,
    out_xyz: *mut f64,
) -> VpkStatus {
    guard(|| {
        let g = grid(reference(g, "grid")?)?;
        let cam = camera(reference(cam, "camera")?);
        let out = slice_mut(out_xyz, 3, "out_xyz")?;
        out.copy_from_slice(&voxelgrid::lift_to_3d(&g, VoxelCoord::new(i, j, k), &cam)?);
        Ok(())
    })
}

/// Root depth from image points `uv[n * 2]` and root-relative depths `rel_z[n]`,
/// matched against the skeleton's total limb length.
#[no_mangle]
pub unsafe extern "C" fn vpk_estimate_root_depth(
    sk: *const VpkSkeleton,
    uv: *const f64,
    rel_z: *const f64,
    n: usize,
    cam: *const VpkCamera,
    out_z: *mut f64,
) -> VpkStatus {
    guard(|| {
        let sk = &reference(sk, "skeleton")?.0;
        let uv = slice(uv, 2 * n, "uv")?;
        let rel_z = slice(rel_z, n, "rel_z")?;
        let cam = camera(reference(cam, "camera")?);
        let coords: Vec<[f64; 2]> = uv.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let p2 = Pose2D {
            bbox: skeleton::BBox::around(&coords, skeleton::BBOX_MARGIN),
            coords,
        };
        let z = voxelgrid::estimate_root_depth(&p2, rel_z, sk, &cam, DepthSearch::default())?;
        write_out(out_z, z, "out_z")
    })
}

/// Gaussian target volume for `n` joints at voxel coordinates `ijk[n * 3]`.
#[no_mangle]
pub unsafe extern "C" fn vpk_volume_synth(
    g: *const VpkGrid,
    ijk: *const f64,
    n: usize,
    sigma: f64,
    out: *mut *mut VpkVolume,
) -> VpkStatus {
    guard(|| {
        let g = grid(reference(g, "grid")?)?;
        let vox: Vec<VoxelCoord> = slice(ijk, 3 * n, "ijk")?
            .chunks_exact(3)
            .map(|c| VoxelCoord::new(c[0], c[1], c[2]))
            .collect();
        if out.is_null() {
            return Err(null("out"));
        }
        let vol = heatmap::synth_target(&g, &vox, n, sigma)?;
        write_out(out, Box::into_raw(Box::new(VpkVolume(vol))), "out")
    })
}

/// Reads a volume file.
#[no_mangle]
pub unsafe extern "C" fn vpk_volume_read(
    path: *const c_char,
    out: *mut *mut VpkVolume,
) -> VpkStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let vol = heatmap::read_volume(BufReader::new(File::open(path)?))?;
        write_out(out, Box::into_raw(Box::new(VpkVolume(vol))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn vpk_volume_write(vol: *const VpkVolume, path: *const c_char) -> VpkStatus {
    guard(|| {
        let vol = &reference(vol, "volume")?.0;
        let mut w = BufWriter::new(File::create(c_str(path, "path")?)?);
        heatmap::write_volume(&mut w, vol)?;
        w.flush()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vpk_volume_free(vol: *mut VpkVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Writes `(w, h, d, n_joints)` to `out_whdn[4]`.
#[no_mangle]
pub unsafe extern "C" fn vpk_volume_shape(
    vol: *const VpkVolume,
    out_whdn: *mut usize,
) -> VpkStatus {
    guard(|| {
        let v = &reference(vol, "volume")?.0;
        slice_mut(out_whdn, 4, "out_whdn")?.copy_from_slice(&[v.w, v.h, v.d, v.n]);
        Ok(())
    })
}

/// Borrowed view of the values, laid out `((joint * d + k) * h + j) * w + i`.
/// Valid until the handle is freed. Returns null for a null handle.
#[no_mangle]
pub unsafe extern "C" fn vpk_volume_data(vol: *const VpkVolume, out_len: *mut usize) -> *const f64 {
    match vol.as_ref() {
        None => std::ptr::null(),
        Some(v) => {
            if !out_len.is_null() {
                *out_len = v.0.data.len();
            }
            v.0.data.as_ptr()
        }
    }
}

unsafe fn decode(
    vol: *const VpkVolume,
    out_ijk: *mut f64,
    n: usize,
    soft: Option<usize>,
) -> VpkStatus {
    guard(|| {
        let v = &reference(vol, "volume")?.0;
        check_joints(v.n, n, "output buffer")?;
        let out = slice_mut(out_ijk, 3 * n, "out_ijk")?;
        let coords = match soft {
            Some(window) => heatmap::decode_soft(v, window),
            None => heatmap::decode_argmax(v),
        };
        for (dst, c) in out.chunks_exact_mut(3).zip(coords) {
            dst.copy_from_slice(&[c.i, c.j, c.k]);
        }
        Ok(())
    })
}

/// Center of the maximal voxel per joint, into `out_ijk[n * 3]`.
#[no_mangle]
pub unsafe extern "C" fn vpk_decode_argmax(
    vol: *const VpkVolume,
    out_ijk: *mut f64,
    n: usize,
) -> VpkStatus {
    decode(vol, out_ijk, n, None)
}

/// Local expectation around the argmax within `window` voxels per axis.
#[no_mangle]
pub unsafe extern "C" fn vpk_decode_soft(
    vol: *const VpkVolume,
    window: usize,
    out_ijk: *mut f64,
    n: usize,
) -> VpkStatus {
    decode(vol, out_ijk, n, Some(window))
}

/// Mean per-joint error (mm) after aligning joint `root`.
#[no_mangle]
pub unsafe extern "C" fn vpk_mpjpe(
    pred: *const f64,
    gt: *const f64,
    n: usize,
    root: usize,
    out: *mut f64,
) -> VpkStatus {
    guard(|| {
        let e = metrics::mpjpe(&pose(pred, n, "pred")?, &pose(gt, n, "gt")?, root)?;
        write_out(out, e, "out")
    })
}

/// Mean per-joint error (mm) after the best similarity alignment.
#[no_mangle]
pub unsafe extern "C" fn vpk_reconstruction_error(
    pred: *const f64,
    gt: *const f64,
    n: usize,
    out: *mut f64,
) -> VpkStatus {
    guard(|| {
        let e = metrics::reconstruction_error(&pose(pred, n, "pred")?, &pose(gt, n, "gt")?)?;
        write_out(out, e, "out")
    })
}

/// Fraction of correct parts after aligning the chest joint. When non-null,
/// `out_parts` receives one 0/1 flag per skeleton part.
#[no_mangle]
pub unsafe extern "C" fn vpk_pcp3d(
    sk: *const VpkSkeleton,
    pred: *const f64,
    gt: *const f64,
    n: usize,
    threshold_fraction: f64,
    out_overall: *mut f64,
    out_parts: *mut u8,
) -> VpkStatus {
    guard(|| {
        let sk = &reference(sk, "skeleton")?.0;
        check_joints(sk.n_joints, n, "poses")?;
        let r = metrics::pcp3d(
            &pose(pred, n, "pred")?,
            &pose(gt, n, "gt")?,
            sk,
            threshold_fraction,
            sk.chest(),
        )?;
        if !out_parts.is_null() {
            for (dst, &ok) in slice_mut(out_parts, r.part_correct.len(), "out_parts")?
                .iter_mut()
                .zip(&r.part_correct)
            {
                *dst = ok as u8;
            }
        }
        write_out(out_overall, r.overall(), "out_overall")
    })
}
