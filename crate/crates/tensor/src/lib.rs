//! Dense tensors with a define-by-run, reverse-mode automatic
//! differentiation tape.
//!
//! Values are stored as `f64`. Every forward kernel checks its inputs for
//! non-finite values and records an exact vector-Jacobian product when any
//! input requires a gradient. A [`Tape`] lives for one forward pass and is
//! consumed by [`Tape::backward`].
//!
//! ```
//! use tsood_tensor::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

mod backward;
pub mod check;
pub mod error;
mod linalg;
pub mod ops;
pub mod suite;
pub mod tape;
pub mod tensor;

pub use check::{finite_difference_check, finite_difference_report, FdReport};
pub use error::{Result, TensorError};
pub use ops::{logsumexp_slice, sigmoid, softmax_in_place, BatchNormMode, BatchStats, Padding};
pub use suite::{kernel_gradient_suite, KernelCheck};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
