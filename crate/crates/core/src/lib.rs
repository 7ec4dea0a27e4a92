//! Path signatures and the tools built on them: truncated tensor algebra,
//! stream augmentations, signature kernels, the log-ODE method,
//! expected-signature features and variance-norm conformance scoring.

pub mod cli;
pub mod conformance;
pub mod distribution;
pub mod error;
pub mod io;
pub mod kernel;
pub mod logode;
pub mod parallel;
pub mod signature;
pub mod stream;
pub mod tensor;

pub use error::{Result, SigError};
pub use parallel::Exec;
pub use signature::{log_signature, signature, SignatureResult};
pub use stream::Stream;
pub use tensor::{TruncatedTensor, Word};
