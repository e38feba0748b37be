//! Spiking network engine: LIF neurons, layers, forward simulation,
//! surrogate-gradient backward pass, rate coding and checkpoints.

mod backward;
mod checkpoint;
mod encode;
mod forward;
mod layers;
mod lif;
mod network;
mod spikes;

pub use backward::{apply_sgd, backward, sgd_update, Gradients, OutputGrad};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use encode::{poisson_encode, Encoded};
pub use forward::{argmax, forward, ForwardRecord, Tape};
pub use layers::{ConvLayer, DenseLayer, Layer, LayerGrad, PoolLayer, Shape3};
pub use lif::{lif_step, surrogate_gate, LifNeuronConfig, LifState, ResetMode};
pub use network::{select_alignment_layer, ArchConfig, NetworkParams};
pub use spikes::SpikeTrain;
