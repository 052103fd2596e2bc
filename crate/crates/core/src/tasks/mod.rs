//! Fitting experiments: environment-map compression and a synthetic
//! spatio-directional field, with their metrics.

pub mod envmap;
pub mod field;
pub mod metrics;
pub mod sampling;
pub mod train;

pub use envmap::{envmap_lookup, EnvMap, Procedural};
pub use field::{synthetic_field, FieldLobe, SyntheticField5D};
pub use metrics::{memory_footprint, polar_ratio, ErrorMetrics};
pub use sampling::{fibonacci_sphere, sample_uniform_sphere};
pub use train::{
    evaluate_joint, fit, latitude_error_profile, predict_envmap, train_envmap, train_joint, DirectionSplit,
    EncoderSpec, TrainConfig, TrainReport,
};
