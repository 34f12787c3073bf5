//! Dense tensor primitives, reverse-mode gradients, MLPs, running
//! normalizers, Adam and checkpoints. Everything is `f64`.

mod adam;
mod checkpoint;
mod mlp;
mod normalizer;
mod ops;
mod params;
mod tape;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use mlp::{Mlp, Part};
pub use normalizer::{Normalizer, STD_FLOOR};
pub use ops::{Eval, Index, Ops, Val, LAYER_NORM_EPS};
pub use params::{ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
