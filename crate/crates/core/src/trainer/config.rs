use serde::{Deserialize, Serialize};

use crate::autonet::{Architecture, HeadInit, NetConfig};
use crate::error::{Error, Result};
use crate::heatmap::{SupervisionLadder, DEFAULT_SIGMA};
use crate::skeleton::Camera;
use crate::voxelgrid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmsPropConfig {
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            decay: 0.99,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    /// Rotations are drawn uniformly from `[-rotate_deg, rotate_deg]`.
    pub rotate_deg: f64,
    pub scale: [f64; 2],
    pub flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotate_deg: 30.0,
            scale: [0.75, 1.25],
            flip: true,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            rotate_deg: 0.0,
            scale: [1.0, 1.0],
            flip: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    Volumetric,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    Argmax,
    #[default]
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSize {
    pub input_size: usize,
    pub width: usize,
    pub stem_channels: usize,
    pub hourglass_depth: usize,
    pub head_init: HeadInit,
}

impl Default for NetworkSize {
    fn default() -> Self {
        NetworkSize {
            input_size: 64,
            width: 32,
            stem_channels: 16,
            hourglass_depth: 2,
            head_init: HeadInit::Zero,
        }
    }
}

/// Everything that determines a training run. Serialized as the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: RmsPropConfig,
    pub augmentation: AugmentConfig,
    pub model: Model,
    /// Per-stage depth resolutions; its last entry must equal `grid.d`.
    pub ladder: SupervisionLadder,
    pub fuse_features: bool,
    pub grid: GridSpec,
    pub network: NetworkSize,
    pub sigma: f64,
    pub decoder: Decoder,
    pub data_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub camera: Camera,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            steps: 1500,
            batch_size: 4,
            learning_rate: 2.5e-4,
            optimizer: RmsPropConfig::default(),
            augmentation: AugmentConfig::default(),
            model: Model::Volumetric,
            ladder: SupervisionLadder::new(vec![16]).expect("valid ladder"),
            fuse_features: true,
            grid: GridSpec::cube(16),
            network: NetworkSize::default(),
            sigma: DEFAULT_SIGMA,
            decoder: Decoder::Soft,
            data_seed: 7,
            n_train: 2000,
            n_test: 200,
            camera: Camera::default(),
        }
    }
}

impl TrainConfig {
    pub fn coordinate() -> Self {
        TrainConfig {
            model: Model::Coordinate,
            ..Default::default()
        }
    }

    pub fn volumetric(ladder: &[usize], fuse_features: bool) -> Result<Self> {
        let ladder = SupervisionLadder::new(ladder.to_vec())?;
        let mut grid = GridSpec::cube(16);
        grid.d = ladder.final_depth();
        Ok(TrainConfig {
            ladder,
            fuse_features,
            grid,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return fail("steps must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.decay) || !(o.epsilon > 0.0) {
            return fail("rmsprop needs 0 <= decay < 1 and epsilon > 0".into());
        }
        let a = &self.augmentation;
        if !(a.scale[0] > 0.0 && a.scale[1] >= a.scale[0]) {
            return fail(format!(
                "augmentation scale range {:?} must be positive and ordered",
                a.scale
            ));
        }
        if !(a.rotate_deg >= 0.0 && a.rotate_deg <= 180.0) {
            return fail("rotate_deg must lie in [0, 180]".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return fail("dataset sizes must be positive".into());
        }
        if !(self.sigma > 0.0) {
            return fail("sigma must be positive".into());
        }
        self.grid.validate()?;
        if self.model == Model::Volumetric && self.ladder.final_depth() != self.grid.d {
            return fail(format!(
                "ladder ends at depth {} but the grid has depth {}",
                self.ladder.final_depth(),
                self.grid.d
            ));
        }
        let net = self.net_config(1);
        net.validate()?;
        net.check_grid(self.grid.w, self.grid.h)
    }

    pub fn architecture(&self) -> Architecture {
        match self.model {
            Model::Coordinate => Architecture::CoordRegression,
            Model::Volumetric => Architecture::volumetric(self.ladder.clone(), self.fuse_features),
        }
    }

    pub fn net_config(&self, n_joints: usize) -> NetConfig {
        NetConfig {
            n_joints,
            input_size: self.network.input_size,
            output_size: self.grid.w,
            width: self.network.width,
            stem_channels: self.network.stem_channels,
            hourglass_depth: self.network.hourglass_depth,
            architecture: self.architecture(),
            head_init: self.network.head_init,
        }
    }

    pub fn label(&self) -> String {
        self.architecture().label()
    }
}
