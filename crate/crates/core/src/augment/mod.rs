//! Augmented views for adaptation and noise corruptions for shifted test sets.

mod augmix;
mod corrupt;
mod ops;

pub use augmix::{augmix_sample, make_batch, AugmentPolicy, MAX_STRENGTH};
pub use corrupt::{corrupt, CorruptionKind, GAUSSIAN_SIGMA, IMPULSE_FRACTION, SHOT_LAMBDA};
pub use ops::{
    apply, OpParams, Operator, MAX_ENHANCE, MAX_POSTERIZE_DROP, MAX_ROTATE_DEG, MAX_SHEAR, MAX_TRANSLATE_FRAC,
};
