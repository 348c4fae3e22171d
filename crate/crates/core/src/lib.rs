//! Hyperspectral pixel classification with class-based marginalized
//! denoising autoencoders, mixed-pixel augmentation, a softmax MLP and
//! per-class hole filling.
//!
//! The modules mirror the pipeline stages:
//!
//! - [`datacube`]: cube/label model, portable file format, normalization,
//!   stratified splitting and synthetic scenes.
//! - [`mdae`]: closed-form single-layer MDAE training and scoring.
//! - [`augment`]: linear mixtures of training spectra across classes.
//! - [`features`]: classifier input assembly.
//! - [`classifier`]: rectifier MLP trained by SGD with momentum.
//! - [`postproc`]: hole filling and class-map images.
//! - [`harness`]: experiment and ablation drivers.

pub mod augment;
pub mod classifier;
pub mod datacube;
pub mod error;
pub mod features;
pub mod harness;
pub mod mdae;
pub mod postproc;

pub use augment::{AugmentedSample, MixParams};
pub use classifier::{MlpNetwork, MlpTopology, SgdHyper};
pub use datacube::{HsiCube, LabelMap, NormStats, SceneSpec, SplitAssignment, SplitFractions};
pub use error::{ErrorKind, HsiError, Result};
pub use features::FeatureConfig;
pub use harness::{ExperimentConfig, ResultRecord, TrainedPipeline};
pub use mdae::{MdaeModel, MdaeParams};
pub use postproc::{ClassMap, Mask};
