//! Synthetic data, augmentation, optimization and the experiment runner.

mod ablation;
mod config;
mod data;
mod experiment;
mod optim;
pub mod render;

pub use ablation::{run_ablation, AblationReport, Comparison, Suite};
pub use config::{AugmentConfig, Decoder, Model, NetworkSize, RmsPropConfig, TrainConfig};
pub use data::{
    apply_augmentation, augment, flip_pose, make_dataset, rotate_pose, scale_bbox, AugmentParams,
    DataSpec, Dataset, Sample,
};
pub use experiment::{
    data_spec, dataset_for, evaluate, loss_trend, predict, run_experiment, run_experiment_with,
    smoothed_loss, train, train_and_evaluate, Report, RunOptions, TREND_WINDOW,
};
pub use optim::{rmsprop_step, RmsPropState};
