//! Consistency verification for single-output wildfire detection networks.
//!
//! A network is *consistent* on a scene when planting the wildfire signal at
//! a higher intensity never lowers its score. This crate checks that
//! property exactly for one signal/background pair ([`pwl`]), soundly over
//! boxes of signals and backgrounds ([`boxes`]), and answers generic
//! precondition/postcondition queries written in a small text format
//! ([`lang`]).
//!
//! ```
//! use flarecheck::{network::toy_network, Tensor};
//!
//! let net = toy_network();
//! assert_eq!(net.eval_logit(&Tensor::vector(vec![1.0, 3.0]).unwrap()).unwrap(), 65.0);
//! ```

pub mod boxes;
mod error;
pub mod lang;
pub mod network;
pub mod planting;
pub mod pwl;
mod tensor;

pub use crate::error::{Error, Result, ShapeError};
pub use crate::tensor::Tensor;
