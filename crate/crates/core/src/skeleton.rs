//! Joint sets, kinematic trees, metric poses and the procedural pose sampler
//! that feeds the synthetic benchmark.
//!
//! Coordinates are camera-frame millimetres: x to the right, y down, z away
//! from the camera. Image coordinates follow the same orientation (u right,
//! v down).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};

/// Kinematic tree plus the metadata the metrics and augmentation need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub n_joints: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub joint_names: Vec<String>,
    /// `None` marks the root.
    pub parent: Vec<Option<usize>>,
    /// Length of the limb ending at each joint; the root entry is 0.
    #[serde(rename = "limb_length_mm")]
    pub limb_length: Vec<f64>,
    pub root_index: usize,
    /// (proximal, distal) joint pairs scored by PCP.
    pub parts: Vec<(usize, usize)>,
    /// Group label per part, e.g. "upper_arms".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub part_groups: Vec<String>,
    pub left_right_pairs: Vec<(usize, usize)>,
    /// Joint aligned before scoring PCP ("center of the chest").
    #[serde(default)]
    pub chest_index: Option<usize>,
    /// Unit rest direction of each limb in its parent's frame; the root entry is unused.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rest_direction: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub coords: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub coords: Vec<[f64; 2]>,
    pub bbox: BBox,
}

/// Pinhole intrinsics: focal length in pixels, principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            focal: 1000.0,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

/// Fraction of the tight joint box added on every side of the bounding box.
pub const BBOX_MARGIN: f64 = 0.15;

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x && u <= self.x + self.w && v >= self.y && v <= self.y + self.h
    }

    /// Tight box around `pts`, grown by `margin` of its size on each side.
    pub fn around(pts: &[[f64; 2]], margin: f64) -> BBox {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let (w, h) = (x1 - x0, y1 - y0);
        BBox {
            x: x0 - margin * w,
            y: y0 - margin * h,
            w: w * (1.0 + 2.0 * margin),
            h: h * (1.0 + 2.0 * margin),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.h > 0.0) || !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "bounding box must have positive width and height, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

impl Pose3D {
    pub fn new(coords: Vec<[f64; 3]>) -> Self {
        Pose3D { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Coordinates relative to joint `root`.
    pub fn relative_to(&self, root: usize) -> Pose3D {
        let r = self.coords[root];
        Pose3D {
            coords: self
                .coords
                .iter()
                .map(|c| [c[0] - r[0], c[1] - r[1], c[2] - r[2]])
                .collect(),
        }
    }

    /// Relabels joints through the skeleton's left/right permutation. Geometry is untouched,
    /// so applying it twice is exactly the identity.
    pub fn swap_left_right(&self, skeleton: &Skeleton) -> Pose3D {
        let map = skeleton.left_right_map();
        Pose3D {
            coords: map.iter().map(|&src| self.coords[src]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().flatten().all(|v| v.is_finite())
    }
}

impl Skeleton {
    pub fn left_right_map(&self) -> Vec<usize> {
        let mut map: Vec<usize> = (0..self.n_joints).collect();
        for &(a, b) in &self.left_right_pairs {
            map[a] = b;
            map[b] = a;
        }
        map
    }

    pub fn total_limb_length(&self) -> f64 {
        self.limb_length.iter().sum()
    }

    pub fn chest(&self) -> usize {
        self.chest_index.unwrap_or(self.root_index)
    }

    /// Joints ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n_joints;
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        placed[self.root_index] = true;
        order.push(self.root_index);
        while order.len() < n {
            let before = order.len();
            for j in 0..n {
                if !placed[j] {
                    if let Some(p) = self.parent[j] {
                        if placed[p] {
                            placed[j] = true;
                            order.push(j);
                        }
                    }
                }
            }
            if order.len() == before {
                return Err(Error::InvalidSkeleton(
                    "parent relation has a cycle or does not reach the root".into(),
                ));
            }
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints;
        if n == 0 {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if self.parent.len() != n || self.limb_length.len() != n {
            return Err(Error::InvalidSkeleton(
                "parent and limb_length must have one entry per joint".into(),
            ));
        }
        if self.root_index >= n || self.parent[self.root_index].is_some() {
            return Err(Error::InvalidSkeleton(
                "root_index must name a joint without parent".into(),
            ));
        }
        for (j, p) in self.parent.iter().enumerate() {
            match p {
                None if j != self.root_index => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} has no parent but is not the root"
                    )))
                }
                Some(p) if *p >= n => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} has out-of-range parent {p}"
                    )))
                }
                _ => {}
            }
            if j != self.root_index && !(self.limb_length[j] > 0.0) {
                return Err(Error::InvalidSkeleton(format!(
                    "limb ending at joint {j} must have positive length"
                )));
            }
        }
        self.topological_order()?;
        let mut seen = vec![false; n];
        for &(a, b) in &self.left_right_pairs {
            if a >= n || b >= n || a == b || seen[a] || seen[b] {
                return Err(Error::InvalidSkeleton(format!(
                    "left/right pair ({a}, {b}) is not a disjoint pair of joints"
                )));
            }
            seen[a] = true;
            seen[b] = true;
        }
        for &(a, b) in &self.parts {
            if a >= n || b >= n {
                return Err(Error::InvalidSkeleton(format!(
                    "part ({a}, {b}) references a missing joint"
                )));
            }
        }
        if !self.part_groups.is_empty() && self.part_groups.len() != self.parts.len() {
            return Err(Error::InvalidSkeleton(
                "part_groups must label every part".into(),
            ));
        }
        if !self.rest_direction.is_empty() && self.rest_direction.len() != n {
            return Err(Error::InvalidSkeleton(
                "rest_direction must have one entry per joint".into(),
            ));
        }
        if let Some(c) = self.chest_index {
            if c >= n {
                return Err(Error::InvalidSkeleton("chest_index out of range".into()));
            }
        }
        Ok(())
    }

    pub fn check_pose(&self, pose: &Pose3D) -> Result<()> {
        if pose.len() != self.n_joints {
            return Err(Error::ShapeMismatch(format!(
                "pose has {} joints, skeleton has {}",
                pose.len(),
                self.n_joints
            )));
        }
        Ok(())
    }
}

pub mod joints {
    pub const PELVIS: usize = 0;
    pub const SPINE: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const L_ELBOW: usize = 4;
    pub const L_WRIST: usize = 5;
    pub const R_ELBOW: usize = 6;
    pub const R_WRIST: usize = 7;
    pub const L_KNEE: usize = 8;
    pub const L_ANKLE: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const R_ANKLE: usize = 11;
}

/// Fixed 12-joint body: pelvis root, spine/neck/head chain, two 2-segment
/// arms hanging off the neck and two 2-segment legs off the pelvis.
/// Limb lengths sum to 1700 mm.
pub fn make_toy_skeleton() -> Skeleton {
    use joints::*;
    let names = [
        "pelvis", "spine", "neck", "head", "l_elbow", "l_wrist", "r_elbow", "r_wrist", "l_knee",
        "l_ankle", "r_knee", "r_ankle",
    ];
    let parent = vec![
        None,
        Some(PELVIS),
        Some(SPINE),
        Some(NECK),
        Some(NECK),
        Some(L_ELBOW),
        Some(NECK),
        Some(R_ELBOW),
        Some(PELVIS),
        Some(L_KNEE),
        Some(PELVIS),
        Some(R_KNEE),
    ];
    let limb_length = vec![
        0.0, 100.0, 150.0, 100.0, 150.0, 125.0, 150.0, 125.0, 210.0, 190.0, 210.0, 190.0,
    ];
    // Person faces the camera, so their left side is image right (+x).
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rest_direction = vec![
        [0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, -1.0, 0.0],
        [s, s, 0.0],
        [0.0, 1.0, 0.0],
        [-s, s, 0.0],
        [0.0, 1.0, 0.0],
        [0.242535625036333, 0.9701425001453319, 0.0],
        [0.0, 1.0, 0.0],
        [-0.242535625036333, 0.9701425001453319, 0.0],
        [0.0, 1.0, 0.0],
    ];
    Skeleton {
        n_joints: 12,
        joint_names: names.iter().map(|s| s.to_string()).collect(),
        parent,
        limb_length,
        root_index: PELVIS,
        parts: vec![
            (NECK, L_ELBOW),
            (NECK, R_ELBOW),
            (L_ELBOW, L_WRIST),
            (R_ELBOW, R_WRIST),
            (PELVIS, L_KNEE),
            (PELVIS, R_KNEE),
            (L_KNEE, L_ANKLE),
            (R_KNEE, R_ANKLE),
        ],
        part_groups: [
            "upper_arms",
            "upper_arms",
            "lower_arms",
            "lower_arms",
            "upper_legs",
            "upper_legs",
            "lower_legs",
            "lower_legs",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        left_right_pairs: vec![
            (L_ELBOW, R_ELBOW),
            (L_WRIST, R_WRIST),
            (L_KNEE, R_KNEE),
            (L_ANKLE, R_ANKLE),
        ],
        chest_index: Some(NECK),
        rest_direction,
    }
}

/// Per-joint rotation ranges in degrees, about the (x, y, z) axes of the parent frame.
pub type AngleRange = [[f64; 2]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSamplerConfig {
    /// Depth of the root joint in front of the camera.
    pub camera_distance_mm: f64,
    /// Uniform jitter of the root position, half-width per axis.
    pub root_jitter_mm: [f64; 3],
    /// Global body rotation ranges.
    pub global_deg: AngleRange,
    /// Local rotation range of each joint's limb. The root entry is unused.
    /// Ranges are given for the left side (or midline); right-side joints
    /// mirror them.
    pub joint_deg: Vec<AngleRange>,
}

impl PoseSamplerConfig {
    pub fn toy_default() -> Self {
        let mid_spine = [[-20.0, 40.0], [-20.0, 20.0], [-15.0, 15.0]];
        let mid_neck = [[-15.0, 30.0], [-20.0, 20.0], [-10.0, 10.0]];
        let head = [[-30.0, 30.0], [-30.0, 30.0], [-25.0, 25.0]];
        let shoulder = [[-30.0, 30.0], [-60.0, 60.0], [-60.0, 75.0]];
        let elbow = [[-10.0, 10.0], [-20.0, 20.0], [0.0, 130.0]];
        let hip = [[-80.0, 30.0], [-20.0, 20.0], [-10.0, 35.0]];
        let knee = [[0.0, 120.0], [-5.0, 5.0], [-5.0, 5.0]];
        let zero = [[0.0, 0.0]; 3];
        PoseSamplerConfig {
            camera_distance_mm: 3000.0,
            root_jitter_mm: [250.0, 150.0, 300.0],
            global_deg: [[-15.0, 15.0], [-90.0, 90.0], [-10.0, 10.0]],
            joint_deg: vec![
                zero, mid_spine, mid_neck, head, shoulder, elbow, shoulder, elbow, hip, knee, hip,
                knee,
            ],
        }
    }
}

fn sample_rotation(rng: &mut ChaCha8Rng, range: &AngleRange, mirror: bool) -> Mat3 {
    let mut a = [0.0; 3];
    for (axis, r) in range.iter().enumerate() {
        a[axis] = if r[1] > r[0] {
            rng.gen_range(r[0]..=r[1]).to_radians()
        } else {
            r[0].to_radians()
        };
    }
    if mirror {
        // Reflecting x maps Ry(c) -> Ry(-c) and Rz(a) -> Rz(-a).
        a[1] = -a[1];
        a[2] = -a[2];
    }
    geom::rot_z(a[2])
        .mul(&geom::rot_x(a[0]))
        .mul(&geom::rot_y(a[1]))
}

/// Forward-kinematics pose with angles drawn from the default ranges.
pub fn sample_pose(skeleton: &Skeleton, rng_seed: u64) -> Result<Pose3D> {
    sample_pose_with(skeleton, &PoseSamplerConfig::toy_default(), rng_seed)
}

pub fn sample_pose_with(
    skeleton: &Skeleton,
    config: &PoseSamplerConfig,
    rng_seed: u64,
) -> Result<Pose3D> {
    skeleton.validate()?;
    let n = skeleton.n_joints;
    if skeleton.rest_direction.len() != n || config.joint_deg.len() != n {
        return Err(Error::InvalidSkeleton(
            "pose sampling needs a rest direction and an angle range for every joint".into(),
        ));
    }
    let order = skeleton.topological_order()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    // A joint is on the right side when it is the second member of a pair.
    let mut mirrored = vec![false; n];
    for &(_, b) in &skeleton.left_right_pairs {
        mirrored[b] = true;
    }

    let mut world_rot = vec![Mat3::identity(); n];
    let mut pos = vec![[0.0; 3]; n];
    let root = skeleton.root_index;
    world_rot[root] = sample_rotation(&mut rng, &config.global_deg, false);
    let mut root_pos = [0.0, 0.0, config.camera_distance_mm];
    for (axis, half) in config.root_jitter_mm.iter().enumerate() {
        if *half > 0.0 {
            root_pos[axis] += rng.gen_range(-half..=*half);
        }
    }
    pos[root] = root_pos;

    for &j in order.iter().skip(1) {
        let p = skeleton.parent[j].expect("non-root joint has a parent");
        let local = sample_rotation(&mut rng, &config.joint_deg[j], mirrored[j]);
        world_rot[j] = world_rot[p].mul(&local);
        let dir = Vec3::from(skeleton.rest_direction[j]).normalized();
        let limb = world_rot[j].apply(dir).scale(skeleton.limb_length[j]);
        pos[j] = (Vec3::from(pos[p]) + limb).into();
    }
    Ok(Pose3D { coords: pos })
}

/// Pinhole projection; the box is the tight joint box grown by [`BBOX_MARGIN`] per side.
pub fn project_pose(pose: &Pose3D, camera: &Camera) -> Result<Pose2D> {
    let mut coords = Vec::with_capacity(pose.len());
    for (j, c) in pose.coords.iter().enumerate() {
        if !(c[2] > 0.0) {
            return Err(Error::NonPositiveDepth { joint: j, z: c[2] });
        }
        coords.push([
            camera.focal * c[0] / c[2] + camera.cx,
            camera.focal * c[1] / c[2] + camera.cy,
        ]);
    }
    let mut bbox = BBox::around(&coords, BBOX_MARGIN);
    // A single joint (or a perfectly aligned set) still needs a usable box.
    if bbox.w <= 0.0 {
        bbox.x -= 0.5;
        bbox.w = 1.0;
    }
    if bbox.h <= 0.0 {
        bbox.y -= 0.5;
        bbox.h = 1.0;
    }
    Ok(Pose2D { coords, bbox })
}

/// Inverse pinhole at a known depth.
pub fn back_project(u: f64, v: f64, z: f64, camera: &Camera) -> Result<[f64; 3]> {
    if !(z > 0.0) {
        return Err(Error::NonPositiveDepth { joint: 0, z });
    }
    Ok([
        (u - camera.cx) * z / camera.focal,
        (v - camera.cy) * z / camera.focal,
        z,
    ])
}
