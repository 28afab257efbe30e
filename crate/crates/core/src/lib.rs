//! Gradient-free training of dense feed-forward networks by two-extreme-point
//! coordinate search, with an SGD baseline and MNIST-format data handling.
//!
//! The crate is organised around four pieces:
//!
//! - [`cs`] — the bundled two-extreme-point coordinate search optimizer over an
//!   arbitrary black-box fitness function with per-variable box constraints.
//! - [`net`] — a minimal dense network (ReLU hidden layers, softmax output,
//!   categorical cross-entropy) with a deterministic flat parameter layout,
//!   back-propagation, and a plain SGD trainer.
//! - [`data`] — IDX (MNIST-format) loading, seeded subsetting, and the three
//!   fold-feeding schemes used to serve training data to the fitness function.
//! - [`metrics`] — accuracy, confusion matrix, and macro precision/recall.
//!
//! Everything is double precision and deterministic: all randomness flows
//! through seeded ChaCha generators, so a `(config, seed)` pair pins every
//! result bit-for-bit.

pub mod cs;
pub mod data;
pub mod metrics;
pub mod net;
pub mod record;

pub use record::{EvalMetrics, RunRecord};
