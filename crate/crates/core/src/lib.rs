//! Online unsupervised cross-domain adaptation over a labeled source stream
//! and an unlabeled target stream, with self-evolving adversarial networks.

pub mod config;
pub mod drift;
pub mod error;
pub mod evolving;
pub mod io;
pub mod net;
pub mod stream;
pub mod tensor;
pub mod verify;

pub use error::{AcdcError, Result};
