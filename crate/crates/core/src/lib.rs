//! Koopman-operator Rademacher complexity bounds for deep networks.
//!
//! The crate evaluates operator-theoretic generalization bounds for dense,
//! invertible, rank-deficient and convolutional networks, checks every
//! ingredient numerically with Monte-Carlo oracles, and trains small models
//! with the bound used as a regularizer.
//!
//! ```
//! use koopman_bounds::activation::koopman_norm_tanh;
//! use koopman_bounds::linalg::DomainBox;
//!
//! let b = koopman_norm_tanh(&DomainBox::symmetric(1, 1.0).unwrap());
//! assert!((b.value - 1f64.cosh()).abs() < 1e-12);
//! ```

pub mod activation;
pub mod bounds;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod network;
pub mod rng;
pub mod suite;
pub mod train;

pub use error::{Error, Result};
