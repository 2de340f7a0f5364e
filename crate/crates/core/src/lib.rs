//! Gait classification with layer-wise relevance propagation.
//!
//! Trains small dense and convolutional networks and one-vs-rest linear
//! SVMs on multichannel gait curves, decomposes their class scores into
//! per-input relevance, and evaluates robustness to input perturbation and
//! the consistency of relevance across trials.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod lrp;
pub mod model_file;
pub mod network;
pub mod pipeline;
pub mod reliability;
pub mod rng;
pub mod robustness;
pub mod stats;
pub mod svm;
pub mod viz;

pub use classifier::Classifier;
pub use dataset::{Dataset, FeatureSet, GaitSample, SplitPlan, SplitRound};
pub use error::{Error, Result};
pub use lrp::{batch_explain, explain, Explain, LrpConfig, RelevanceMap, Target};
pub use model_file::AnyModel;
pub use network::{Architecture, ModelSpec, TrainConfig, TrainedModel};
pub use reliability::{coefficient_of_variation, reliability_report, ReliabilityReport};
pub use robustness::{aopc, perturb_step, run_perturbation, NoiseKind, Ordering, PerturbationConfig, PerturbationReport};
pub use stats::MeanStd;
pub use svm::{svm_train, SvmConfig, SvmModel};
