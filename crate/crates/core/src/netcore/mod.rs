//! The dual-stream network: a shared masked-expression adapter feeding a
//! true-emotion branch and a disguised-emotion branch, each ending in a linear
//! classifier head. Forward and backward passes are written out per layer.

mod adapter;
mod checkpoint;
mod model;

pub use adapter::{
    init_bound, AdapterBlock, BatchNorm, BlockGrads, BlockTrace, Linear, LinearGrads, BN_EPS,
    BN_MOMENTUM,
};
pub use checkpoint::{
    decode_model, encode_model, load_model, save_model, CheckpointError, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use model::{
    Adapter, DropoutRngs, DsidModel, ForwardMode, ForwardOutput, ForwardTrace, ModelDims,
    ParamGrads, ParamKind, Topology, NUM_CLASSES,
};
pub(crate) use model::stream;
