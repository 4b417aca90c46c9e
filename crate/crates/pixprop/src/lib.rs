//! Pixel-wise object proposal generation with scale-aware fusion.
//!
//! Every cell of a small fully-convolutional network's output grid regresses
//! one bounding box. Two localizers specialize on large and small objects, a
//! third network scores per-cell objectness and apparent size, and the size
//! score fuses the two localizers' boxes per cell. Running the same nets on
//! an enlarged copy of the image and pooling both scales widens the size
//! range the system covers; SLIC superpixels optionally snap each box to
//! region boundaries before ranked non-maximum suppression.
//!
//! The crate is organized as a library with one thin CLI binary. The fastest
//! way to see each capability is the `examples/` directory:
//!
//! ```text
//! cargo run --release --example generate_dataset
//! cargo run --release --example gradient_check
//! cargo run --release --example train_localizers
//! cargo run --release --example propose
//! cargo run --release --example superpixels
//! cargo run --release --example evaluate
//! cargo run --release --example ablation
//! ```
//!
//! Module map:
//!
//! - [`geometry`]: normalized boxes, IoU, clipping, NMS, proposal CSV
//! - [`gridcodec`]: grid <-> box coordinate codec and training targets
//! - [`losses`]: masked L2 localization loss and two-branch confidence loss
//! - [`convnet`]: manual f64 conv nets — forward, backward, SGD, checkpoints
//! - [`scalefusion`]: per-cell fusion of the two localizers, image enlargement
//! - [`superpix`]: SLIC superpixels and box refinement (shrink / expand)
//! - [`pipeline`]: decode, multi-scale merge, refine, rank, suppress
//! - [`synthdata`]: deterministic synthetic scenes with exact ground truth
//! - [`evalkit`]: recall / average-recall / average-best-overlap reports
//! - [`config`] + [`commands`]: run configuration and the five CLI commands

pub mod commands;
pub mod config;
pub mod convnet;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod gridcodec;
pub mod losses;
pub mod pipeline;
pub mod rng;
pub mod scalefusion;
pub mod superpix;
pub mod synthdata;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
