//! Marginalized-corruption ("dropout") training of linear SVMs and logistic
//! regression by iteratively re-weighted least squares.
//!
//! The pipeline is: parse a [`Dataset`], pick a [`NoiseSpec`], and fit a
//! [`Trainer`]. Each IRLS iteration computes closed-form re-weights from the
//! first two moments of the corrupted margin ([`augmentation`]) and then
//! solves an expected weighted least-squares problem ([`wls`]).

pub mod augmentation;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod noise;
pub mod synth;
pub mod trainers;
pub mod wls;

pub use augmentation::{ExampleMoments, DEFAULT_FLOOR};
pub use data::{
    augment_with_offset, parse_svmlight, parse_svmlight_multiclass, read_svmlight_file,
    read_svmlight_multiclass_file, write_svmlight, write_svmlight_multiclass, AugmentedView,
    Dataset, MulticlassDataset, SparseVector,
};
pub use error::{Error, Result};
pub use eval::{
    cross_validate, delete_features, evaluate, evaluate_multiclass, nightmare_curve, CvOutcome,
    DeletionSchedule, EvalResult, GridSpec, NightmareEntry, NightmarePoint,
};
pub use model::ModelParams;
pub use noise::{CorruptionMoments, NoiseSpec};
pub use trainers::{
    train_dropout_logistic, train_dropout_svm, train_explicit_corruption, train_mcf_quadratic,
    train_one_vs_all, HingeConfig, IrlsState, LogisticConfig, McfConfig, McfVariant, OvaModel,
    TrainReport, Trainer,
};
pub use wls::{MStepSolver, WlsProblem};
