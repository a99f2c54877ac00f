use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::AugmentConfig;
use super::render::render;
use crate::error::{Error, Result};
use crate::heatmap::{ladder_targets, HeatmapVolume, SupervisionLadder};
use crate::skeleton::{project_pose, sample_pose, BBox, Camera, Pose2D, Pose3D, Skeleton};
use crate::voxelgrid::{metric_to_voxel, GridSpec, VoxelCoord, VoxelGrid};

/// Camera, grid and image size shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub camera: Camera,
    pub grid: GridSpec,
    pub image_size: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            camera: Camera::default(),
            grid: GridSpec::default(),
            image_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub pose: Pose3D,
    pub pose2d: Pose2D,
    pub grid: VoxelGrid,
    pub noise_seed: u64,
    /// Row-major `image_size x image_size` crop of `pose2d.bbox`.
    pub image: Vec<f32>,
}

impl Sample {
    /// Projects `pose`, binds the grid to its box and root depth, and renders the input.
    pub fn new(
        id: u64,
        pose: Pose3D,
        noise_seed: u64,
        skeleton: &Skeleton,
        spec: &DataSpec,
    ) -> Result<Self> {
        let pose2d = project_pose(&pose, &spec.camera)?;
        Self::with_projection(id, pose, pose2d, noise_seed, skeleton, spec)
    }

    fn with_projection(
        id: u64,
        pose: Pose3D,
        pose2d: Pose2D,
        noise_seed: u64,
        skeleton: &Skeleton,
        spec: &DataSpec,
    ) -> Result<Self> {
        skeleton.check_pose(&pose)?;
        let root_z = pose.coords[skeleton.root_index][2];
        let grid = spec.grid.bind(pose2d.bbox, root_z);
        grid.validate()?;
        let rel_z: Vec<f64> = pose.coords.iter().map(|c| c[2] - root_z).collect();
        let image = render(&pose2d, &rel_z, skeleton, spec.image_size, noise_seed);
        Ok(Sample {
            id,
            pose,
            pose2d,
            grid,
            noise_seed,
            image,
        })
    }

    pub fn voxel_pose(&self) -> Vec<VoxelCoord> {
        self.pose2d
            .coords
            .iter()
            .zip(&self.pose.coords)
            .map(|(&px, c)| metric_to_voxel(&self.grid, px, c[2]))
            .collect()
    }

    /// Per-stage volumetric targets, synthesized from the pose.
    pub fn targets(&self, ladder: &SupervisionLadder, sigma: f64) -> Result<Vec<HeatmapVolume>> {
        let n = self.pose.len();
        ladder_targets(&self.grid, &self.voxel_pose(), n, ladder, sigma)
    }

    /// Root-relative coordinates in metres, flattened joint-major.
    pub fn coord_target(&self, root: usize) -> Vec<f64> {
        self.pose
            .relative_to(root)
            .coords
            .iter()
            .flat_map(|c| c.map(|v| v / 1000.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Train ids are `0..n_train` and test ids follow them. Each split draws its pose
/// and noise seeds from its own stream of the master seed.
pub fn make_dataset(
    skeleton: &Skeleton,
    n_train: usize,
    n_test: usize,
    seed: u64,
    spec: &DataSpec,
) -> Result<Dataset> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("dataset sizes must be positive".into()));
    }
    let split = |stream: u64, first_id: u64, n: usize| -> Result<Vec<Sample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        (0..n as u64)
            .map(|i| {
                let pose_seed: u64 = rng.gen();
                let noise_seed: u64 = rng.gen();
                let pose = sample_pose(skeleton, pose_seed)?;
                Sample::new(first_id + i, pose, noise_seed, skeleton, spec)
            })
            .collect()
    };
    Ok(Dataset {
        train: split(1, 0, n_train)?,
        test: split(2, n_train as u64, n_test)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotate_deg: f64,
    pub scale: f64,
    pub flip: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            rotate_deg: 0.0,
            scale: 1.0,
            flip: false,
        }
    }

    pub fn sample<R: Rng>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let rotate_deg = if cfg.rotate_deg > 0.0 {
            rng.gen_range(-cfg.rotate_deg..=cfg.rotate_deg)
        } else {
            0.0
        };
        let scale = if cfg.scale[1] > cfg.scale[0] {
            rng.gen_range(cfg.scale[0]..=cfg.scale[1])
        } else {
            cfg.scale[0]
        };
        let flip = cfg.flip && rng.gen_bool(0.5);
        AugmentParams {
            rotate_deg,
            scale,
            flip,
        }
    }
}

/// Mirrors the pose through the camera's vertical plane (`x -> -x`) and swaps
/// left/right labels so the anatomy stays consistent. Exactly self-inverse.
pub fn flip_pose(pose: &Pose3D, skeleton: &Skeleton) -> Pose3D {
    let mirrored = Pose3D::new(pose.coords.iter().map(|c| [-c[0], c[1], c[2]]).collect());
    mirrored.swap_left_right(skeleton)
}

/// Rotates the pose about the camera's z axis through the root joint.
pub fn rotate_pose(pose: &Pose3D, root: usize, degrees: f64) -> Pose3D {
    let (s, c) = degrees.to_radians().sin_cos();
    let r = pose.coords[root];
    Pose3D::new(
        pose.coords
            .iter()
            .map(|p| {
                let (dx, dy) = (p[0] - r[0], p[1] - r[1]);
                [r[0] + c * dx - s * dy, r[1] + s * dx + c * dy, p[2]]
            })
            .collect(),
    )
}

/// Scales the box about its center, never below the smallest factor that keeps every
/// joint inside.
pub fn scale_bbox(pose2d: &Pose2D, scale: f64) -> BBox {
    let b = pose2d.bbox;
    let (cx, cy) = b.center();
    let needed = pose2d.coords.iter().fold(0.0f64, |m, p| {
        m.max(2.0 * (p[0] - cx).abs() / b.w)
            .max(2.0 * (p[1] - cy).abs() / b.h)
    });
    let s = scale.max(needed * (1.0 + 1e-9));
    BBox {
        x: cx - 0.5 * s * b.w,
        y: cy - 0.5 * s * b.h,
        w: s * b.w,
        h: s * b.h,
    }
}

/// Applies flip, in-plane rotation and box scaling, then re-renders the input and
/// rebinds the grid. Targets follow from the new pose and grid; nothing is resampled.
pub fn apply_augmentation(
    sample: &Sample,
    params: &AugmentParams,
    skeleton: &Skeleton,
    spec: &DataSpec,
) -> Result<Sample> {
    if *params == AugmentParams::identity() {
        return Ok(sample.clone());
    }
    let mut pose = sample.pose.clone();
    if params.flip {
        pose = flip_pose(&pose, skeleton);
    }
    if params.rotate_deg != 0.0 {
        pose = rotate_pose(&pose, skeleton.root_index, params.rotate_deg);
    }
    let mut pose2d = if params.flip || params.rotate_deg != 0.0 {
        project_pose(&pose, &spec.camera)?
    } else {
        sample.pose2d.clone()
    };
    if params.scale != 1.0 {
        pose2d.bbox = scale_bbox(&pose2d, params.scale);
    }
    Sample::with_projection(sample.id, pose, pose2d, sample.noise_seed, skeleton, spec)
}

pub fn augment<R: Rng>(
    sample: &Sample,
    cfg: &AugmentConfig,
    rng: &mut R,
    skeleton: &Skeleton,
    spec: &DataSpec,
) -> Result<Sample> {
    let params = AugmentParams::sample(cfg, rng);
    apply_augmentation(sample, &params, skeleton, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::{decode_argmax, DEFAULT_SIGMA};
    use crate::skeleton::make_toy_skeleton;
    use proptest::prelude::*;

    fn small() -> (Skeleton, DataSpec, Dataset) {
        let sk = make_toy_skeleton();
        let spec = DataSpec::default();
        let ds = make_dataset(&sk, 20, 10, 5, &spec).unwrap();
        (sk, spec, ds)
    }

    fn limb_lengths(pose: &Pose3D, sk: &Skeleton) -> Vec<f64> {
        (0..sk.n_joints)
            .filter_map(|j| sk.parent[j].map(|p| (j, p)))
            .map(|(j, p)| {
                let (a, b) = (pose.coords[j], pose.coords[p]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .collect()
    }

    #[test]
    fn dataset_is_deterministic_with_disjoint_splits() {
        let (sk, spec, a) = small();
        let b = make_dataset(&sk, 20, 10, 5, &spec).unwrap();
        assert_eq!(a, b);
        let train: std::collections::BTreeSet<u64> = a.train.iter().map(|s| s.id).collect();
        assert!(a.test.iter().all(|s| !train.contains(&s.id)));
        let seeds: std::collections::BTreeSet<u64> = a.train.iter().map(|s| s.noise_seed).collect();
        assert!(a.test.iter().all(|s| !seeds.contains(&s.noise_seed)));
        assert!(make_dataset(&sk, 0, 10, 5, &spec).is_err());
    }

    #[test]
    fn every_target_decodes_back_to_its_pose() {
        let (_, _, ds) = small();
        let ladder: SupervisionLadder = "1,16".parse().unwrap();
        for s in ds.train.iter().chain(&ds.test) {
            let targets = s.targets(&ladder, DEFAULT_SIGMA).unwrap();
            let truth = s.voxel_pose();
            for (t, d) in decode_argmax(targets.last().unwrap()).iter().zip(&truth) {
                assert!(t.max_axis_distance(d) <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn identity_augmentation_is_a_no_op() {
        let (sk, spec, ds) = small();
        let s = &ds.train[3];
        assert_eq!(
            &apply_augmentation(s, &AugmentParams::identity(), &sk, &spec).unwrap(),
            s
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            &augment(s, &AugmentConfig::none(), &mut rng, &sk, &spec).unwrap(),
            s
        );
    }

    #[test]
    fn flip_twice_restores_the_pose() {
        let (sk, spec, ds) = small();
        for s in &ds.train {
            assert_eq!(flip_pose(&flip_pose(&s.pose, &sk), &sk), s.pose);
            let p = AugmentParams {
                flip: true,
                ..AugmentParams::identity()
            };
            let twice = apply_augmentation(
                &apply_augmentation(s, &p, &sk, &spec).unwrap(),
                &p,
                &sk,
                &spec,
            )
            .unwrap();
            assert_eq!(twice.pose, s.pose);
            assert_eq!(twice.image, s.image);
        }
    }

    #[test]
    fn scale_keeps_joints_inside() {
        let (_, _, ds) = small();
        for s in &ds.train {
            let b = scale_bbox(&s.pose2d, 0.5);
            assert!(s.pose2d.coords.iter().all(|p| b.contains(p[0], p[1])));
            let b = scale_bbox(&s.pose2d, 1.25);
            assert!((b.w - 1.25 * s.pose2d.bbox.w).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn augmentation_preserves_limbs_and_target_validity(
            idx in 0usize..20, rot in -30.0f64..30.0, scale in 0.75f64..1.25, flip: bool
        ) {
            let (sk, spec, ds) = small();
            let s = &ds.train[idx];
            let a = apply_augmentation(s, &AugmentParams { rotate_deg: rot, scale, flip }, &sk, &spec).unwrap();
            for (x, y) in limb_lengths(&a.pose, &sk).iter().zip(limb_lengths(&s.pose, &sk)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let vox = a.voxel_pose();
            prop_assert!(vox.iter().all(|v| v.is_inside(&a.grid)));
            let ladder: SupervisionLadder = "16".parse().unwrap();
            let t = a.targets(&ladder, DEFAULT_SIGMA).unwrap();
            for (d, v) in decode_argmax(&t[0]).iter().zip(&vox) {
                prop_assert!(d.max_axis_distance(v) <= 0.5 + 1e-12);
            }
        }
    }
}
