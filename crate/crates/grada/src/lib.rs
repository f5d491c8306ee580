//! Domain-adversarial training at desk scale: a multi-domain classifier
//! whose feature extractor is pushed toward domain-invariant features by
//! a domain discriminator behind a gradient-reversal operator, with a
//! sigmoid λ ramp weighting the domain loss and scheduled per-sample
//! clamping keeping it stable.
//!
//! Everything runs on a small tape-based reverse-mode autodiff core over
//! dense f64 tensors; gradients are verifiable against central finite
//! differences, and whole runs are reproducible bit-for-bit from one
//! 64-bit seed.
//!
//! ```
//! use grada::autodiff::Tape;
//! use grada::tensor::Tensor;
//!
//! // The gradient-reversal operator: identity forward, −1 backward.
//! let mut tape = Tape::new();
//! let x = tape.param("x", Tensor::new(vec![1, 1], vec![3.0]).unwrap());
//! let r = tape.grad_reverse(x);
//! let square = tape.matmul(r, r).unwrap();
//! let loss = tape.sum(square);
//! assert_eq!(tape.value(loss).item().unwrap(), 9.0);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get("x").unwrap().data(), &[-6.0]); // d/dx x² = 6, reversed
//! ```
//!
//! # Modules
//!
//! - [`tensor`], [`autodiff`] — dense f64 tensors and the Wengert tape
//!   (matmul, 3×3 conv, 2×2 maxpool, leaky ReLU, concat, log-softmax,
//!   masked per-sample NLL, clamping, gradient reversal).
//! - [`model`] — the three-part architecture: conv feature extractor with
//!   multi-tap dense-and-concat latent, label predictor, domain
//!   classifier behind the reversal operator.
//! - [`schedule`] — the λ factor function and scheduled domain-loss
//!   clamping.
//! - [`data`] — synthetic multi-domain datasets with controlled
//!   appearance shifts, the preprocessing chain, stratified splits, and
//!   the balanced aggregated-batch sampler.
//! - [`train`] — baseline / fine-tune / domain-adaptation protocols,
//!   evaluation, the loss ledger, and a domain probe for measuring
//!   feature invariance.
//! - [`projection`] — 2-D principal-direction export of the latent space.
//! - [`checkpoint`], [`format`] — versioned named-tensor container used
//!   for checkpoints and dataset storage.
//! - [`cli`] — the `grada` binary: `gen-data`, `train`, `eval`,
//!   `project`, `schedule`.
//!
//! # Examples
//!
//! One runnable example per capability, under `examples/`:
//!
//! ```bash
//! cargo run --example gradient_check       # autodiff vs finite differences
//! cargo run --example gradient_reversal    # the reversal operator itself
//! cargo run --example lambda_schedule      # λ ramp and clamping
//! cargo run --example generate_data        # synthetic domains + sampler
//! cargo run --example train_baseline       # source-only training, transfer gap
//! cargo run --example finetune_forgetting  # catastrophic forgetting
//! cargo run --example train_da             # full adversarial protocol
//! cargo run --example project_latent       # latent-space CSV export
//! ```

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod format;
pub mod model;
pub mod projection;
pub mod schedule;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
