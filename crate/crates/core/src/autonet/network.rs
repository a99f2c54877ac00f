//! Stacked hourglass-lite networks: coordinate regression, naive stacking,
//! coarse-to-fine with feature fusion, and the decoupled variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::heatmap::SupervisionLadder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// One hourglass, global pooling and a fully connected head emitting `3N` values.
    CoordRegression,
    /// One hourglass per ladder stage, each with a `ladder[s] * N` channel head.
    /// Without feature fusion, later stages see only the previous stage's heatmaps.
    Stacked {
        ladder: SupervisionLadder,
        fuse_features: bool,
    },
}

impl Architecture {
    pub fn volumetric(ladder: SupervisionLadder, fuse_features: bool) -> Self {
        Architecture::Stacked {
            ladder,
            fuse_features,
        }
    }

    pub fn ladder(&self) -> Option<&SupervisionLadder> {
        match self {
            Architecture::CoordRegression => None,
            Architecture::Stacked { ladder, .. } => Some(ladder),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Architecture::CoordRegression => "coord".into(),
            Architecture::Stacked {
                ladder,
                fuse_features,
            } => {
                let l: Vec<String> = ladder.depths().iter().map(|d| d.to_string()).collect();
                format!(
                    "{}({})",
                    if *fuse_features {
                        "stacked"
                    } else {
                        "decoupled"
                    },
                    l.join(",")
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    #[default]
    Glorot,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n_joints: usize,
    /// Side of the square single-channel input image.
    pub input_size: usize,
    /// Side of the square output map; must equal the grid's w and h.
    pub output_size: usize,
    pub width: usize,
    pub stem_channels: usize,
    pub hourglass_depth: usize,
    pub architecture: Architecture,
    #[serde(default)]
    pub head_init: HeadInit,
}

impl NetConfig {
    pub fn new(n_joints: usize, architecture: Architecture) -> Self {
        NetConfig {
            n_joints,
            input_size: 64,
            output_size: 16,
            width: 32,
            stem_channels: 16,
            hourglass_depth: 2,
            architecture,
            head_init: HeadInit::Glorot,
        }
    }

    /// Output channels of each stage head.
    pub fn head_channels(&self) -> Vec<usize> {
        match &self.architecture {
            Architecture::CoordRegression => vec![3 * self.n_joints],
            Architecture::Stacked { ladder, .. } => {
                ladder.depths().iter().map(|d| d * self.n_joints).collect()
            }
        }
    }

    fn stem_pools(&self) -> Result<usize> {
        if self.output_size == 0 || !self.input_size.is_multiple_of(self.output_size) {
            return Err(Error::Config(format!(
                "input size {} is not a multiple of output size {}",
                self.input_size, self.output_size
            )));
        }
        let ratio = self.input_size / self.output_size;
        if !ratio.is_power_of_two() {
            return Err(Error::Config(format!(
                "input/output ratio {ratio} is not a power of two"
            )));
        }
        Ok(ratio.trailing_zeros() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints == 0 || self.width == 0 || self.stem_channels == 0 {
            return Err(Error::Config(
                "joint count and channel widths must be positive".into(),
            ));
        }
        self.stem_pools()?;
        if self.hourglass_depth == 0 || !self.output_size.is_multiple_of(1 << self.hourglass_depth)
        {
            return Err(Error::Config(format!(
                "output size {} cannot be halved {} times",
                self.output_size, self.hourglass_depth
            )));
        }
        Ok(())
    }

    /// Checks that the network output covers a `w x h` grid.
    pub fn check_grid(&self, w: usize, h: usize) -> Result<()> {
        if w != self.output_size || h != self.output_size {
            return Err(Error::Config(format!(
                "grid is {w}x{h} but the network emits {0}x{0} maps",
                self.output_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Hourglass {
    up: Conv,
    low1: Conv,
    inner: Inner,
    low3: Conv,
}

#[derive(Debug, Clone)]
enum Inner {
    Nested(Box<Hourglass>),
    Bottom(Conv),
}

#[derive(Debug, Clone)]
struct Stage {
    hourglass: Hourglass,
    features: Conv,
    head: Conv,
    /// 1x1 conv mapping heatmaps back to feature width; absent on the last stage.
    remap: Option<Conv>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub config: NetConfig,
    pub params: ParamStore<T>,
    stem: Vec<Conv>,
    stages: Vec<Stage>,
    coord_head: Option<(ParamId, ParamId)>,
}

/// Per-stage head outputs recorded on a tape: `(batch, channels, size, size)`
/// for volumetric stages, `(batch, 3N)` for coordinate regression.
#[derive(Debug, Clone)]
pub struct StageOutputs {
    pub stages: Vec<Var>,
}

impl StageOutputs {
    pub fn last(&self) -> Var {
        *self.stages.last().expect("at least one stage")
    }
}

struct Builder<'a> {
    store: ParamStore<f64>,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, zero: bool) -> Conv {
        let fan_in = (cin * k * k) as f64;
        let fan_out = (cout * k * k) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let data = (0..cout * cin * k * k)
            .map(|_| {
                if zero {
                    0.0
                } else {
                    self.rng.gen_range(-limit..=limit)
                }
            })
            .collect();
        let w = self.store.add(
            format!("{name}.w"),
            Tensor {
                shape: vec![cout, cin, k, k],
                data,
            },
        );
        let b = self
            .store
            .add(format!("{name}.b"), Tensor::zeros(vec![cout]));
        Conv { w, b }
    }

    fn hourglass(&mut self, name: &str, width: usize, depth: usize) -> Hourglass {
        let up = self.conv(&format!("{name}.up"), width, width, 3, false);
        let low1 = self.conv(&format!("{name}.low1"), width, width, 3, false);
        let inner = if depth > 1 {
            Inner::Nested(Box::new(self.hourglass(
                &format!("{name}.inner"),
                width,
                depth - 1,
            )))
        } else {
            Inner::Bottom(self.conv(&format!("{name}.bottom"), width, width, 3, false))
        };
        let low3 = self.conv(&format!("{name}.low3"), width, width, 3, false);
        Hourglass {
            up,
            low1,
            inner,
            low3,
        }
    }
}

impl<T: Real> Network<T> {
    /// Builds and initializes a network. Initialization draws in `f64` so the
    /// same seed yields the same starting point in every precision.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let pools = config.stem_pools()?;
        let zero_head = config.head_init == HeadInit::Zero;

        let mut stem = vec![b.conv("stem.0", 1, config.stem_channels, 3, false)];
        let mut cin = config.stem_channels;
        for p in 0..pools.max(1) {
            stem.push(b.conv(&format!("stem.{}", p + 1), cin, config.width, 3, false));
            cin = config.width;
        }

        let heads = config.head_channels();
        let mut stages = Vec::with_capacity(heads.len());
        for (s, &hc) in heads.iter().enumerate() {
            let name = format!("stage{s}");
            let hourglass =
                b.hourglass(&format!("{name}.hg"), config.width, config.hourglass_depth);
            let features = b.conv(
                &format!("{name}.features"),
                config.width,
                config.width,
                1,
                false,
            );
            let head = match config.architecture {
                Architecture::CoordRegression => features,
                Architecture::Stacked { .. } => {
                    b.conv(&format!("{name}.head"), config.width, hc, 1, zero_head)
                }
            };
            let remap = (s + 1 < heads.len())
                .then(|| b.conv(&format!("{name}.remap"), hc, config.width, 1, false));
            stages.push(Stage {
                hourglass,
                features,
                head,
                remap,
            });
        }

        let coord_head = match config.architecture {
            Architecture::CoordRegression => {
                let out = 3 * config.n_joints;
                let limit = (6.0 / (config.width + out) as f64).sqrt();
                let data = (0..out * config.width)
                    .map(|_| {
                        if zero_head {
                            0.0
                        } else {
                            b.rng.gen_range(-limit..=limit)
                        }
                    })
                    .collect();
                let w = b.store.add(
                    "coord.w",
                    Tensor {
                        shape: vec![out, config.width],
                        data,
                    },
                );
                let bias = b.store.add("coord.b", Tensor::zeros(vec![out]));
                Some((w, bias))
            }
            Architecture::Stacked { .. } => None,
        };

        let params = b.store.cast();
        Ok(Network {
            config,
            params,
            stem,
            stages,
            coord_head,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    fn conv(&self, tape: &mut Tape<T>, x: Var, c: Conv) -> Result<Var> {
        let w = tape.param(&self.params, c.w);
        let b = tape.param(&self.params, c.b);
        tape.conv2d(x, w, b)
    }

    fn conv_relu(&self, tape: &mut Tape<T>, x: Var, c: Conv) -> Result<Var> {
        let y = self.conv(tape, x, c)?;
        Ok(tape.relu(y))
    }

    fn hourglass(&self, tape: &mut Tape<T>, x: Var, hg: &Hourglass) -> Result<Var> {
        let up = self.conv_relu(tape, x, hg.up)?;
        let low = tape.max_pool2(x)?;
        let low1 = self.conv_relu(tape, low, hg.low1)?;
        let low2 = match &hg.inner {
            Inner::Nested(inner) => self.hourglass(tape, low1, inner)?,
            Inner::Bottom(c) => self.conv_relu(tape, low1, *c)?,
        };
        let low3 = self.conv_relu(tape, low2, hg.low3)?;
        let up2 = tape.upsample2(low3)?;
        tape.add(up, up2)
    }

    pub fn forward(&self, tape: &mut Tape<T>, input: Tensor<T>) -> Result<StageOutputs> {
        self.forward_with(tape, input, false)
    }

    /// Forward pass. With `ablate_image_features`, the image-derived features
    /// handed from one stage to the next are multiplied by zero, leaving only the
    /// remapped heatmaps.
    pub fn forward_with(
        &self,
        tape: &mut Tape<T>,
        input: Tensor<T>,
        ablate_image_features: bool,
    ) -> Result<StageOutputs> {
        let s = self.config.input_size;
        if input.shape.len() != 4
            || input.shape[1] != 1
            || input.shape[2] != s
            || input.shape[3] != s
        {
            return Err(Error::ShapeMismatch(format!(
                "network expects (batch, 1, {s}, {s}) input, got {:?}",
                input.shape
            )));
        }
        let batch = input.shape[0];
        let mut x = tape.input(input);
        x = self.conv_relu(tape, x, self.stem[0])?;
        let pools = self.config.stem_pools()?;
        for (p, c) in self.stem.iter().skip(1).enumerate() {
            if p < pools {
                x = tape.max_pool2(x)?;
            }
            x = self.conv_relu(tape, x, *c)?;
        }

        let fuse = matches!(
            self.config.architecture,
            Architecture::Stacked {
                fuse_features: true,
                ..
            }
        );
        let mut outputs = Vec::with_capacity(self.stages.len());
        let mut stage_input = x;
        for stage in &self.stages {
            let hg = self.hourglass(tape, stage_input, &stage.hourglass)?;
            let feats = self.conv_relu(tape, hg, stage.features)?;
            if let Some((w, b)) = self.coord_head {
                let pooled = tape.global_avg_pool(feats)?;
                let w = tape.param(&self.params, w);
                let b = tape.param(&self.params, b);
                let out = tape.linear(pooled, w, b)?;
                outputs.push(out);
                break;
            }
            let head = self.conv(tape, feats, stage.head)?;
            outputs.push(head);
            if let Some(remap) = stage.remap {
                let mapped = self.conv(tape, head, remap)?;
                stage_input = if fuse {
                    let (pre, f) = if ablate_image_features {
                        (tape.scale(stage_input, T::ZERO), tape.scale(feats, T::ZERO))
                    } else {
                        (stage_input, feats)
                    };
                    let sum = tape.add(pre, f)?;
                    tape.add(sum, mapped)?
                } else {
                    mapped
                };
            }
        }
        debug_assert!(outputs.iter().all(|&o| tape.shape(o)[0] == batch));
        Ok(StageOutputs { stages: outputs })
    }

    /// Sum over stages of the squared error against flattened per-stage targets,
    /// divided by the batch size.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        outputs: &StageOutputs,
        targets: Vec<Vec<T>>,
    ) -> Result<Var> {
        if targets.len() != outputs.stages.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} stage targets for {} stages",
                targets.len(),
                outputs.stages.len()
            )));
        }
        let batch = tape.shape(outputs.stages[0])[0];
        let inv = T::from_f64(1.0 / batch as f64);
        let mut terms = Vec::with_capacity(targets.len());
        for (&out, t) in outputs.stages.iter().zip(targets) {
            terms.push(tape.sse(out, t, inv)?);
        }
        Ok(tape.sum_scalars(&terms))
    }

    /// Copies parameters into a network of another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.cast(),
            stem: self.stem.clone(),
            stages: self.stages.clone(),
            coord_head: self.coord_head,
        }
    }
}
