//! The discretized volume around the subject and the transforms between image/metric
//! coordinates and continuous voxel coordinates.
//!
//! Axis conventions: `i` follows image u (width), `j` follows image v (height),
//! `k` grows with depth away from the camera. Voxel `(a, b, c)` covers the half-open
//! cube `[a, a+1) x [b, b+1) x [c, c+1)`, so voxel centers sit at half-integers.
//! The depth window is `z_center ± z_half_range`, where `z_center` is the depth of
//! the root joint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{back_project, BBox, Camera, Pose2D, Skeleton};

/// Depth resolutions allowed as supervision targets.
pub const SUPPORTED_DEPTHS: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Per-experiment grid settings; the box and root depth are supplied per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    #[serde(rename = "z_half_range_mm")]
    pub z_half_range: f64,
    #[serde(rename = "z_min_mm")]
    pub z_min: f64,
    #[serde(rename = "z_max_mm")]
    pub z_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            w: 16,
            h: 16,
            d: 16,
            z_half_range: 1000.0,
            z_min: 500.0,
            z_max: 10000.0,
        }
    }
}

impl GridSpec {
    pub fn cube(n: usize) -> Self {
        GridSpec {
            w: n,
            h: n,
            d: n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.d == 0 {
            return Err(Error::Config("grid dimensions must be at least 1".into()));
        }
        if !SUPPORTED_DEPTHS.contains(&self.d) {
            return Err(Error::Config(format!(
                "grid depth {} is not one of {:?}",
                self.d, SUPPORTED_DEPTHS
            )));
        }
        if !(self.z_half_range > 0.0) {
            return Err(Error::Config("z_half_range_mm must be positive".into()));
        }
        if !(self.z_min > 0.0 && self.z_max > self.z_min) {
            return Err(Error::Config("need 0 < z_min_mm < z_max_mm".into()));
        }
        Ok(())
    }

    pub fn bind(&self, bbox: BBox, z_center: f64) -> VoxelGrid {
        VoxelGrid {
            w: self.w,
            h: self.h,
            d: self.d,
            bbox,
            z_half_range: self.z_half_range,
            z_center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    pub bbox: BBox,
    pub z_half_range: f64,
    pub z_center: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub i: f64,
    pub j: f64,
    pub k: f64,
}

impl VoxelCoord {
    pub fn new(i: f64, j: f64, k: f64) -> Self {
        VoxelCoord { i, j, k }
    }

    pub fn is_inside(&self, grid: &VoxelGrid) -> bool {
        (0.0..=grid.w as f64).contains(&self.i)
            && (0.0..=grid.h as f64).contains(&self.j)
            && (0.0..=grid.d as f64).contains(&self.k)
    }

    /// Clamps to the grid's closed extent.
    pub fn clamped(&self, grid: &VoxelGrid) -> VoxelCoord {
        VoxelCoord {
            i: self.i.clamp(0.0, grid.w as f64),
            j: self.j.clamp(0.0, grid.h as f64),
            k: self.k.clamp(0.0, grid.d as f64),
        }
    }

    pub fn max_axis_distance(&self, o: &VoxelCoord) -> f64 {
        (self.i - o.i)
            .abs()
            .max((self.j - o.j).abs())
            .max((self.k - o.k).abs())
    }
}

impl VoxelGrid {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.d == 0 {
            return Err(Error::Config("grid dimensions must be at least 1".into()));
        }
        self.bbox.validate()?;
        if !(self.z_half_range > 0.0) {
            return Err(Error::Config("z_half_range must be positive".into()));
        }
        Ok(())
    }

    /// Same box and depth window with a different depth resolution.
    pub fn with_depth(&self, d: usize) -> VoxelGrid {
        VoxelGrid { d, ..*self }
    }

    pub fn z_low(&self) -> f64 {
        self.z_center - self.z_half_range
    }
}

pub fn metric_to_voxel(grid: &VoxelGrid, joint_px: [f64; 2], joint_z: f64) -> VoxelCoord {
    VoxelCoord {
        i: (joint_px[0] - grid.bbox.x) / grid.bbox.w * grid.w as f64,
        j: (joint_px[1] - grid.bbox.y) / grid.bbox.h * grid.h as f64,
        k: (joint_z - grid.z_low()) / (2.0 * grid.z_half_range) * grid.d as f64,
    }
}

pub fn voxel_to_metric(grid: &VoxelGrid, vc: VoxelCoord) -> ([f64; 2], f64) {
    let u = grid.bbox.x + vc.i / grid.w as f64 * grid.bbox.w;
    let v = grid.bbox.y + vc.j / grid.h as f64 * grid.bbox.h;
    let z = grid.z_low() + vc.k / grid.d as f64 * (2.0 * grid.z_half_range);
    ([u, v], z)
}

/// Decoded voxel coordinate to camera-frame millimetres.
pub fn lift_to_3d(grid: &VoxelGrid, vc: VoxelCoord, camera: &Camera) -> Result<[f64; 3]> {
    let (uv, z) = voxel_to_metric(grid, vc);
    back_project(uv[0], uv[1], z, camera)
}

/// Bounds for the root-depth search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSearch {
    pub z_min: f64,
    pub z_max: f64,
    pub resolution: f64,
}

impl Default for DepthSearch {
    fn default() -> Self {
        DepthSearch {
            z_min: 500.0,
            z_max: 10000.0,
            resolution: 1.0,
        }
    }
}

impl From<&GridSpec> for DepthSearch {
    fn from(g: &GridSpec) -> Self {
        DepthSearch {
            z_min: g.z_min,
            z_max: g.z_max,
            ..Default::default()
        }
    }
}

/// Squared mismatch between the total reconstructed limb length at root depth
/// `z_center` and the skeleton's reference total.
pub fn root_depth_objective(
    pose_px: &Pose2D,
    rel_z: &[f64],
    skeleton: &Skeleton,
    camera: &Camera,
    z_center: f64,
) -> f64 {
    let lift = |j: usize| {
        let z = z_center + rel_z[j];
        let [u, v] = pose_px.coords[j];
        [
            (u - camera.cx) * z / camera.focal,
            (v - camera.cy) * z / camera.focal,
            z,
        ]
    };
    let mut total = 0.0;
    for j in 0..skeleton.n_joints {
        if let Some(p) = skeleton.parent[j] {
            let (a, b) = (lift(j), lift(p));
            total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        }
    }
    (total - skeleton.total_limb_length()).powi(2)
}

/// Root depth whose lifted skeleton best matches the reference total limb length,
/// found by golden-section search.
pub fn estimate_root_depth(
    pose_px: &Pose2D,
    decoded_rel_z: &[f64],
    skeleton: &Skeleton,
    camera: &Camera,
    search: DepthSearch,
) -> Result<f64> {
    let n = skeleton.n_joints;
    if pose_px.coords.len() != n || decoded_rel_z.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "root depth estimation needs {n} joints, got {} image points and {} depths",
            pose_px.coords.len(),
            decoded_rel_z.len()
        )));
    }
    if !skeleton.parent.iter().any(Option::is_some) {
        return Err(Error::DegenerateInput("skeleton has no limbs".into()));
    }
    let first = pose_px.coords[0];
    if pose_px.coords.iter().all(|c| *c == first) {
        return Err(Error::DegenerateInput(
            "all joints project to the same image point".into(),
        ));
    }

    // Every joint must stay in front of the camera.
    let min_rel = decoded_rel_z.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = search.z_min.max(search.resolution - min_rel);
    let mut hi = search.z_max;
    if !(hi > lo) {
        return Err(Error::DegenerateInput(format!(
            "empty depth search interval [{lo}, {hi}]"
        )));
    }

    let f = |z: f64| root_depth_objective(pose_px, decoded_rel_z, skeleton, camera, z);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > search.resolution {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}
