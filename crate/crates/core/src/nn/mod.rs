//! Decoder head: a small fully-connected network with hand-written reverse
//! mode, the relative-L2 loss and Adam.

mod adam;
mod loss;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use loss::{l2_regularization, relative_l2_element, relative_l2_loss, REL_L2_EPS};
pub use mlp::{Activation, ForwardCache, Mlp, MlpConfig, OutputActivation, EXP_CLAMP, LEAKY_SLOPE};
