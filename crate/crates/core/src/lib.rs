//! Dual-stream independence decoupling for true-emotion recognition from
//! masked-expression embeddings.
//!
//! A shared adapter maps backbone embeddings to masked-expression features,
//! which two parallel branches turn into true-emotion and disguised-emotion
//! features. Training minimizes `L_T + β·L_D + α·L_HSIC`, where the HSIC term
//! pushes the two branches' normalized features towards independence.
//!
//! | module | contents |
//! |--------|----------|
//! | [`kernels`] | RBF / linear kernels, gradients, L2 normalization |
//! | [`independence`] | per-sample and classical HSIC losses, permutation test |
//! | [`netcore`] | adapters, the dual-stream model, `DSM1` checkpoints |
//! | [`objective`] | cross-entropy and the weighted total loss |
//! | [`trainer`] | Adam, early stopping, leave-one-subject-out runs |
//! | [`dataio`] | `DSE1` embedding files, CSV import, synthetic data |
//! | [`metrics`] | accuracy, macro-F1, confusion matrices, pooling |

pub mod dataio;
pub mod error;
pub mod independence;
pub mod kernels;
pub mod matrix;
pub mod metrics;
pub mod netcore;
pub mod objective;
pub mod trainer;

pub use dataio::{Dataset, EmbeddingRecord, FrameType, SynthConfig};
pub use error::{DsidError, Result};
pub use independence::{FeaturePair, HsicMode};
pub use kernels::{KernelConfig, KernelKind};
pub use matrix::Matrix;
pub use metrics::{ConfusionMatrix, PooledScore, Score, TaskOutcome};
pub use netcore::{DsidModel, ModelDims, Topology};
pub use objective::{Bandwidth, ObjectiveConfig};
pub use trainer::{FoldResult, LosoRun, Monitor, Task, TrainConfig, Variant};
