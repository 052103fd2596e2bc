//! File formats: HDR inputs, model checkpoints, result tables and loss logs.

pub mod checkpoint;
pub mod hdr;
pub mod results;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use hdr::{decode_hdr, load_hdr, write_pfm};
pub use results::{write_loss_log_file, write_results_csv};
