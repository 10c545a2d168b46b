//! Declarative network graphs: layer records, the line-oriented text format,
//! parameter storage, forward/backward execution and receptive-field
//! analysis.

mod exec;
mod field;
mod layer;
mod parse;
mod weights;

pub use exec::{backward, forward, forward_single, Activations, Gradients, Inputs, Mode};
pub use field::{infer_shapes, layer_fields, receptive_field, FeatureShape, LayerField, ReceptiveField};
pub use layer::{LayerKind, LayerSpec, NetworkSpec};
pub use parse::parse_spec;
pub use weights::{ConvWeights, WeightStore, DEFAULT_INIT_SIGMA};
