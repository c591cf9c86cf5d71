//! Feed-forward layer stack: shapes, parameters, forward/backward passes and
//! the on-disk model format.

pub mod activation;
pub mod batch;
pub mod final_map;
mod kernels;
pub mod model;
pub mod persist;
pub mod spec;

pub use activation::{sigmoid, ActivationKind, LEAKY_SLOPE};
pub use batch::Batch;
pub use final_map::{apply_final_map, argmax, class_probabilities, predict_from_logits, softmax};
pub use kernels::{BN_EPS, BN_MOMENTUM};
pub use model::{Forward, ForwardCache, Gradients, Layer, Mode, Network, Param, ParamId, ParamName, RunningStats};
pub use persist::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use spec::{FinalMap, LayerSpec, ModelSpec};
