//! Volumetric Gaussian targets, the coarse-to-fine supervision ladder, decoding and
//! the two training losses.
//!
//! A [`HeatmapVolume`] stores `n` joint volumes of size `w x h x d` packed into
//! `d * n` channels: joint `n` owns channels `[n*d, (n+1)*d)` and channel
//! `n*d + k` is depth slice `k`. In memory the layout is channel-major
//! (`[c][j][i]`), which matches the network's NCHW output for one sample.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::voxelgrid::{VoxelCoord, VoxelGrid, SUPPORTED_DEPTHS};

/// Gaussian width in voxels used for every target.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Target values below this are stored as exact zero.
pub const TRUNCATION: f64 = 1e-8;

/// Half-width (voxels) of the soft-decode window.
pub const DEFAULT_SOFT_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapVolume {
    pub w: usize,
    pub h: usize,
    pub d: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl HeatmapVolume {
    pub fn zeros(w: usize, h: usize, d: usize, n: usize) -> Self {
        HeatmapVolume {
            w,
            h,
            d,
            n,
            data: vec![0.0; w * h * d * n],
        }
    }

    pub fn from_data(w: usize, h: usize, d: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != w * h * d * n {
            return Err(shape_mismatch(format!(
                "volume {w}x{h}x({d}*{n}) needs {} values, got {}",
                w * h * d * n,
                data.len()
            )));
        }
        Ok(HeatmapVolume { w, h, d, n, data })
    }

    pub fn channels(&self) -> usize {
        self.d * self.n
    }

    #[inline]
    pub fn index(&self, joint: usize, i: usize, j: usize, k: usize) -> usize {
        ((joint * self.d + k) * self.h + j) * self.w + i
    }

    pub fn get(&self, joint: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(joint, i, j, k)]
    }

    pub fn set(&mut self, joint: usize, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(joint, i, j, k);
        self.data[idx] = v;
    }

    /// Values of one joint's channel block.
    pub fn joint_block(&self, joint: usize) -> &[f64] {
        let len = self.w * self.h * self.d;
        &self.data[joint * len..(joint + 1) * len]
    }

    pub fn same_shape(&self, other: &HeatmapVolume) -> bool {
        (self.w, self.h, self.d, self.n) == (other.w, other.h, other.d, other.n)
    }

    pub fn check_grid(&self, grid: &VoxelGrid) -> Result<()> {
        if (self.w, self.h, self.d) != (grid.w, grid.h, grid.d) {
            return Err(shape_mismatch(format!(
                "volume is {}x{}x{} but grid is {}x{}x{}",
                self.w, self.h, self.d, grid.w, grid.h, grid.d
            )));
        }
        Ok(())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Depth resolutions supervising successive stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SupervisionLadder(Vec<usize>);

impl SupervisionLadder {
    pub fn new(depths: Vec<usize>) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::Config("ladder needs at least one stage".into()));
        }
        for &d in &depths {
            if !SUPPORTED_DEPTHS.contains(&d) {
                return Err(Error::Config(format!(
                    "ladder depth {d} is not one of {SUPPORTED_DEPTHS:?}"
                )));
            }
        }
        if depths.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!(
                "ladder {depths:?} must be nondecreasing"
            )));
        }
        Ok(SupervisionLadder(depths))
    }

    pub fn depths(&self) -> &[usize] {
        &self.0
    }

    pub fn stages(&self) -> usize {
        self.0.len()
    }

    pub fn final_depth(&self) -> usize {
        *self.0.last().expect("ladder is nonempty")
    }
}

impl TryFrom<Vec<usize>> for SupervisionLadder {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        SupervisionLadder::new(v)
    }
}

impl From<SupervisionLadder> for Vec<usize> {
    fn from(l: SupervisionLadder) -> Self {
        l.0
    }
}

impl std::str::FromStr for SupervisionLadder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let depths = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad ladder entry '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        SupervisionLadder::new(depths)
    }
}

/// Peak height of a target Gaussian. The 2D normalizer is used for volumes too.
pub fn gaussian_peak(sigma: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * sigma * sigma)
}

fn axis_profile(len: usize, center: f64, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|a| {
            let t = a as f64 + 0.5 - center;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Gaussian targets for every joint, evaluated at voxel centers. A grid of depth 1
/// yields plain 2D heatmaps.
pub fn synth_target(
    grid: &VoxelGrid,
    pose_vox: &[VoxelCoord],
    n_joints: usize,
    sigma: f64,
) -> Result<HeatmapVolume> {
    if pose_vox.len() != n_joints {
        return Err(shape_mismatch(format!(
            "target needs {n_joints} joints, pose has {}",
            pose_vox.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let (w, h, d) = (grid.w, grid.h, grid.d);
    let mut vol = HeatmapVolume::zeros(w, h, d, n_joints);
    let peak = gaussian_peak(sigma);
    let plane = w * h;
    for (n, vc) in pose_vox.iter().enumerate() {
        let gx = axis_profile(w, vc.i, sigma);
        let gy = axis_profile(h, vc.j, sigma);
        let gz = if d == 1 {
            vec![1.0]
        } else {
            axis_profile(d, vc.k, sigma)
        };
        let block = &mut vol.data[n * d * plane..(n + 1) * d * plane];
        for (k, zk) in gz.iter().enumerate() {
            for (j, yj) in gy.iter().enumerate() {
                let row = &mut block[(k * h + j) * w..(k * h + j + 1) * w];
                for (cell, xi) in row.iter_mut().zip(&gx) {
                    let v = peak * xi * yj * zk;
                    *cell = if v < TRUNCATION { 0.0 } else { v };
                }
            }
        }
    }
    Ok(vol)
}

/// Per-stage targets: each stage is synthesized directly at its own depth
/// resolution, with the joint's `k` rescaled from the full-resolution grid.
pub fn ladder_targets(
    grid: &VoxelGrid,
    pose_vox: &[VoxelCoord],
    n_joints: usize,
    ladder: &SupervisionLadder,
    sigma: f64,
) -> Result<Vec<HeatmapVolume>> {
    ladder
        .depths()
        .iter()
        .map(|&ds| {
            let stage_grid = grid.with_depth(ds);
            let ratio = ds as f64 / grid.d as f64;
            let scaled: Vec<VoxelCoord> = pose_vox
                .iter()
                .map(|v| VoxelCoord::new(v.i, v.j, v.k * ratio))
                .collect();
            synth_target(&stage_grid, &scaled, n_joints, sigma)
        })
        .collect()
}

/// Hard argmax per joint; returns voxel centers. Ties go to the lowest (k, j, i).
pub fn decode_argmax(vol: &HeatmapVolume) -> Vec<VoxelCoord> {
    (0..vol.n).map(|n| argmax_joint(vol, n).1).collect()
}

fn argmax_joint(vol: &HeatmapVolume, n: usize) -> ([usize; 3], VoxelCoord) {
    let block = vol.joint_block(n);
    // Channel-major storage already iterates in (k, j, i) order.
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (idx, &v) in block.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = idx;
        }
    }
    let i = best % vol.w;
    let j = (best / vol.w) % vol.h;
    let k = best / (vol.w * vol.h);
    (
        [i, j, k],
        VoxelCoord::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5),
    )
}

/// Expected voxel center under the (non-negative part of the) volume inside a
/// cube of half-width `window` around the hard argmax.
pub fn decode_soft(vol: &HeatmapVolume, window: usize) -> Vec<VoxelCoord> {
    let window = window.max(1) as isize;
    (0..vol.n)
        .map(|n| {
            let ([ai, aj, ak], hard) = argmax_joint(vol, n);
            let range = |c: usize, len: usize| {
                let lo = (c as isize - window).max(0) as usize;
                let hi = ((c as isize + window) as usize).min(len - 1);
                lo..=hi
            };
            // Offsets are taken relative to the argmax so a point mass decodes exactly.
            let (mut m, mut si, mut sj, mut sk) = (0.0, 0.0, 0.0, 0.0);
            for k in range(ak, vol.d) {
                for j in range(aj, vol.h) {
                    for i in range(ai, vol.w) {
                        let v = vol.get(n, i, j, k).max(0.0);
                        m += v;
                        si += v * (i as f64 - ai as f64);
                        sj += v * (j as f64 - aj as f64);
                        sk += v * (k as f64 - ak as f64);
                    }
                }
            }
            if m < 1e-12 {
                hard
            } else {
                VoxelCoord::new(hard.i + si / m, hard.j + sj / m, hard.k + sk / m)
            }
        })
        .collect()
}

/// Sum of squared differences over every joint and voxel.
pub fn loss_volume(pred: &HeatmapVolume, target: &HeatmapVolume) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(shape_mismatch(format!(
            "prediction {}x{}x({}*{}) vs target {}x{}x({}*{})",
            pred.w, pred.h, pred.d, pred.n, target.w, target.h, target.d, target.n
        )));
    }
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

/// [`loss_volume`] averaged over a batch of (prediction, target) pairs.
pub fn loss_volume_batch(pairs: &[(HeatmapVolume, HeatmapVolume)]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, t) in pairs {
        total += loss_volume(p, t)?;
    }
    Ok(total / pairs.len() as f64)
}

pub fn loss_volume_grad(pred: &HeatmapVolume, target: &HeatmapVolume) -> Result<Vec<f64>> {
    if !pred.same_shape(target) {
        return Err(shape_mismatch("prediction and target shapes differ"));
    }
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| 2.0 * (p - t))
        .collect())
}

/// Sum over joints of squared Euclidean distance between root-relative coordinates.
pub fn loss_coords(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(shape_mismatch(format!(
            "{} predicted joints vs {} groundtruth joints",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (0..3).map(|a| (p[a] - g[a]).powi(2)).sum::<f64>())
        .sum())
}

pub fn loss_coords_grad(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    if pred.len() != gt.len() {
        return Err(shape_mismatch("joint counts differ"));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            [
                2.0 * (p[0] - g[0]),
                2.0 * (p[1] - g[1]),
                2.0 * (p[2] - g[2]),
            ]
        })
        .collect())
}

pub const VOLUME_MAGIC: &[u8; 4] = b"VOLH";
pub const VOLUME_VERSION: u32 = 1;

/// Writes the 24-byte header followed by little-endian f32 values ordered
/// row `j`, then column `i`, then packed channel.
pub fn write_volume<W: Write>(mut out: W, vol: &HeatmapVolume) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 4 * vol.data.len());
    buf.extend_from_slice(VOLUME_MAGIC);
    for v in [
        VOLUME_VERSION,
        vol.w as u32,
        vol.h as u32,
        vol.d as u32,
        vol.n as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let plane = vol.w * vol.h;
    let channels = vol.channels();
    for j in 0..vol.h {
        for i in 0..vol.w {
            for c in 0..channels {
                let v = vol.data[c * plane + j * vol.w + i] as f32;
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_volume<R: Read>(mut input: R) -> Result<HeatmapVolume> {
    let mut header = [0u8; 24];
    input.read_exact(&mut header)?;
    if &header[0..4] != VOLUME_MAGIC {
        return Err(Error::Format("not a volume file (bad magic)".into()));
    }
    let field = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let version = field(4) as u32;
    if version != VOLUME_VERSION {
        return Err(Error::Format(format!(
            "unsupported volume version {version}"
        )));
    }
    let (w, h, d, n) = (field(8), field(12), field(16), field(20));
    let count = w
        .checked_mul(h)
        .and_then(|x| x.checked_mul(d))
        .and_then(|x| x.checked_mul(n))
        .ok_or_else(|| Error::Format("volume dimensions overflow".into()))?;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != 4 * count {
        return Err(Error::Format(format!(
            "volume payload has {} bytes, expected {}",
            raw.len(),
            4 * count
        )));
    }
    let mut vol = HeatmapVolume::zeros(w, h, d, n);
    let plane = w * h;
    let channels = d * n;
    let mut values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64);
    for j in 0..h {
        for i in 0..w {
            for c in 0..channels {
                vol.data[c * plane + j * w + i] = values.next().expect("length checked");
            }
        }
    }
    Ok(vol)
}
