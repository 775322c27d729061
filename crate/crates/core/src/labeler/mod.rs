//! Sentence-level dialogue-act labeling with a linear-chain CRF.

mod baseline;
pub mod crf;
mod emissions;
mod evaluate;
mod features;
mod model;
mod train;

pub use baseline::{train_baseline, BaselineConfig, BaselineModel};
pub use emissions::{import_emissions, EmissionHeader, EmissionRow, EmissionTable};
pub use evaluate::{evaluate, evaluate_pairs, Evaluation, LabelScores};
pub use features::{featurize, featurize_window, tokenize, FeatureConfig, FeatureVector, FEATURE_SEED};
pub use model::{build_instances, SequenceModel, WindowInstance};
pub use train::{
    accumulate_gradient, accuracy, log_likelihood, objective, objective_and_gradient, train_crf,
    train_from, EpochStats, Gradient, TrainConfig, TrainReport,
};
