use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Decoder, Model, TrainConfig};
use super::data::{augment, make_dataset, DataSpec, Dataset, Sample};
use super::optim::{rmsprop_step, RmsPropState};
use crate::autonet::{Network, Tape, Tensor};
use crate::error::{Error, Result};
use crate::heatmap::{decode_argmax, decode_soft, HeatmapVolume, DEFAULT_SOFT_WINDOW};
use crate::metrics::{MetricAccumulator, MetricSummary};
use crate::skeleton::{make_toy_skeleton, Pose3D, Skeleton};
use crate::voxelgrid::lift_to_3d;

const EVAL_BATCH: usize = 16;

/// Result of one training run, serialized as the experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: TrainConfig,
    /// Training loss after every step.
    pub loss_curve: Vec<f64>,
    pub test_mpjpe_mm: f64,
    pub test_recon_err_mm: f64,
    pub test_pcp: BTreeMap<String, f64>,
    /// Wall-clock seconds, only when timing was requested; reports stay byte-stable otherwise.
    pub runtime_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub timing: bool,
}

pub fn data_spec(cfg: &TrainConfig) -> DataSpec {
    DataSpec {
        camera: cfg.camera,
        grid: cfg.grid,
        image_size: cfg.network.input_size,
    }
}

pub fn dataset_for(cfg: &TrainConfig, skeleton: &Skeleton) -> Result<Dataset> {
    make_dataset(
        skeleton,
        cfg.n_train,
        cfg.n_test,
        cfg.data_seed,
        &data_spec(cfg),
    )
}

fn input_batch(samples: &[&Sample], size: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(samples.len() * size * size);
    for s in samples {
        data.extend_from_slice(&s.image);
    }
    Tensor::new(vec![samples.len(), 1, size, size], data)
}

fn batch_targets(
    samples: &[&Sample],
    cfg: &TrainConfig,
    skeleton: &Skeleton,
) -> Result<Vec<Vec<f32>>> {
    match cfg.model {
        Model::Coordinate => Ok(vec![samples
            .iter()
            .flat_map(|s| s.coord_target(skeleton.root_index))
            .map(|v| v as f32)
            .collect()]),
        Model::Volumetric => {
            let mut stages: Vec<Vec<f32>> = vec![Vec::new(); cfg.ladder.stages()];
            for s in samples {
                for (dst, t) in stages.iter_mut().zip(s.targets(&cfg.ladder, cfg.sigma)?) {
                    dst.extend(t.data.iter().map(|&v| v as f32));
                }
            }
            Ok(stages)
        }
    }
}

/// Trains a freshly initialized network on `data.train`; returns it with the
/// per-step loss.
pub fn train(
    cfg: &TrainConfig,
    skeleton: &Skeleton,
    data: &Dataset,
) -> Result<(Network<f32>, Vec<f64>)> {
    cfg.validate()?;
    let mut net: Network<f32> = Network::new(cfg.net_config(skeleton.n_joints), cfg.seed)?;
    let mut state = RmsPropState::new(&net.params, cfg.optimizer);
    let spec = data_spec(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<Sample> = (0..cfg.batch_size)
            .map(|_| {
                let s = &data.train[rng.gen_range(0..data.train.len())];
                augment(s, &cfg.augmentation, &mut rng, skeleton, &spec)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Sample> = batch.iter().collect();
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, input_batch(&refs, spec.image_size)?)?;
        let loss = net.loss(&mut tape, &out, batch_targets(&refs, cfg, skeleton)?)?;
        let value = tape.scalar(loss) as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("{} loss is {value}", cfg.label()),
            });
        }
        tape.backward(loss);
        let grads = tape.param_grads(&net.params);
        rmsprop_step(&mut net.params, &grads, &mut state, cfg.learning_rate)?;
        curve.push(value);
    }
    Ok((net, curve))
}

/// Predicted camera-frame poses. Volumetric outputs are decoded and lifted with
/// each sample's own box and root depth; coordinate outputs are placed at the
/// true root.
pub fn predict(
    net: &Network<f32>,
    cfg: &TrainConfig,
    skeleton: &Skeleton,
    samples: &[Sample],
) -> Result<Vec<Pose3D>> {
    let n = skeleton.n_joints;
    let mut poses = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, input_batch(&refs, cfg.network.input_size)?)?;
        let values = &tape.value(out.last()).data;
        let per = values.len() / chunk.len();
        for (b, s) in chunk.iter().enumerate() {
            let v = &values[b * per..(b + 1) * per];
            let pose = match cfg.model {
                Model::Coordinate => {
                    let r = s.pose.coords[skeleton.root_index];
                    Pose3D::new(
                        (0..n)
                            .map(|j| std::array::from_fn(|a| r[a] + 1000.0 * v[3 * j + a] as f64))
                            .collect(),
                    )
                }
                Model::Volumetric => {
                    let g = s.grid;
                    let vol = HeatmapVolume::from_data(
                        g.w,
                        g.h,
                        g.d,
                        n,
                        v.iter().map(|&x| x as f64).collect(),
                    )?;
                    let vox = match cfg.decoder {
                        Decoder::Argmax => decode_argmax(&vol),
                        Decoder::Soft => decode_soft(&vol, DEFAULT_SOFT_WINDOW),
                    };
                    Pose3D::new(
                        vox.iter()
                            .map(|&vc| lift_to_3d(&g, vc, &cfg.camera))
                            .collect::<Result<_>>()?,
                    )
                }
            };
            poses.push(pose);
        }
    }
    Ok(poses)
}

pub fn evaluate(
    net: &Network<f32>,
    cfg: &TrainConfig,
    skeleton: &Skeleton,
    samples: &[Sample],
) -> Result<MetricSummary> {
    let mut acc = MetricAccumulator::default();
    for (pred, s) in predict(net, cfg, skeleton, samples)?.iter().zip(samples) {
        acc.add(pred, &s.pose, skeleton)?;
    }
    Ok(acc.summary())
}

pub fn run_experiment(cfg: &TrainConfig) -> Result<Report> {
    run_experiment_with(cfg, RunOptions::default())
}

pub fn run_experiment_with(cfg: &TrainConfig, opts: RunOptions) -> Result<Report> {
    train_and_evaluate(cfg, opts).map(|(_, r)| r)
}

/// Builds the dataset, trains, and scores the held-out split.
pub fn train_and_evaluate(cfg: &TrainConfig, opts: RunOptions) -> Result<(Network<f32>, Report)> {
    let start = Instant::now();
    cfg.validate()?;
    let skeleton = make_toy_skeleton();
    let data = dataset_for(cfg, &skeleton)?;
    let (net, loss_curve) = train(cfg, &skeleton, &data)?;
    let summary = evaluate(&net, cfg, &skeleton, &data.test)?;
    log::info!(
        "{} seed {}: test MPJPE {:.2} mm after {} steps",
        cfg.label(),
        cfg.seed,
        summary.mpjpe_mm,
        cfg.steps
    );
    let report = Report {
        config: cfg.clone(),
        loss_curve,
        test_mpjpe_mm: summary.mpjpe_mm,
        test_recon_err_mm: summary.recon_err_mm,
        test_pcp: summary.pcp,
        runtime_s: opts.timing.then(|| start.elapsed().as_secs_f64()),
    };
    Ok((net, report))
}

/// Mean of `curve[end - window..end]`.
pub fn smoothed_loss(curve: &[f64], end: usize, window: usize) -> f64 {
    let lo = end.saturating_sub(window);
    let s = &curve[lo..end];
    s.iter().sum::<f64>() / s.len() as f64
}

/// Window over which [`loss_trend`] smooths.
pub const TREND_WINDOW: usize = 50;

/// Smoothed loss at the last step divided by smoothed loss at step 50; `None` for
/// runs too short to have two disjoint windows.
pub fn loss_trend(curve: &[f64]) -> Option<f64> {
    (curve.len() >= 2 * TREND_WINDOW).then(|| {
        smoothed_loss(curve, curve.len(), TREND_WINDOW)
            / smoothed_loss(curve, TREND_WINDOW, TREND_WINDOW)
    })
}
