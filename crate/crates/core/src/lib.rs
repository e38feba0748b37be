//! Spiking neural networks with single-sample, source-free test-time
//! adaptation by spike-count consistency across augmented views.
//!
//! The engine ([`snn`]) and the adaptation objective ([`adapt`]) are generic
//! over the scalar type; the aliases below fix it to `f64`, which is what the
//! trainer and experiment harness use.

pub mod adapt;
pub mod augment;
mod error;
pub mod harness;
mod image;
pub mod rng;
pub mod scalar;
pub mod snn;
pub mod trainer;

pub use error::{Error, Result};
pub use image::Image;

pub type Network = snn::NetworkParams<f64>;
pub type Record = snn::ForwardRecord<f64>;
pub type LifConfig = snn::LifNeuronConfig<f64>;
pub type Grads = snn::Gradients<f64>;
pub type Features = adapt::FeatureMap<f64>;
pub type Distribution = adapt::ChannelDistribution<f64>;


