//! Leaky integrate-and-fire dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::scalar::Scalar;

/// What happens to the membrane potential after a spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResetMode {
    /// `u ← u − u_th`
    #[default]
    SubtractThreshold,
    /// `u ← 0`
    ToZero,
}

/// Neuron parameters shared by every spiking layer of a network.
///
/// The leak factor `1 − 1/τ_m` is always derived from `tau_m` on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifNeuronConfig<S> {
    tau_m: S,
    u_th: S,
    resistance: S,
    reset_mode: ResetMode,
}

impl<S: Scalar> LifNeuronConfig<S> {
    pub fn new(tau_m: S, u_th: S) -> Result<Self> {
        Self::with_options(tau_m, u_th, S::one(), ResetMode::SubtractThreshold)
    }

    pub fn with_options(tau_m: S, u_th: S, resistance: S, reset_mode: ResetMode) -> Result<Self> {
        if !(tau_m >= S::one()) {
            return config_err(format!("tau_m must be >= 1, got {tau_m:?}"));
        }
        if !(u_th > S::zero()) {
            return config_err(format!("u_th must be > 0, got {u_th:?}"));
        }
        if !(resistance > S::zero()) {
            return config_err(format!("resistance must be > 0, got {resistance:?}"));
        }
        Ok(Self { tau_m, u_th, resistance, reset_mode })
    }

    pub fn tau_m(&self) -> S {
        self.tau_m
    }

    pub fn u_th(&self) -> S {
        self.u_th
    }

    pub fn resistance(&self) -> S {
        self.resistance
    }

    pub fn reset_mode(&self) -> ResetMode {
        self.reset_mode
    }

    /// `1 − 1/τ_m`
    pub fn leak_factor(&self) -> S {
        S::one() - S::one() / self.tau_m
    }

    /// `R/τ_m`, the weight of the input current in one step.
    pub fn input_gain(&self) -> S {
        self.resistance / self.tau_m
    }

    /// Pre-reset potential after one step of leaky integration.
    #[inline]
    pub(crate) fn integrate(&self, previous: S, current: S) -> S {
        self.leak_factor() * previous + self.input_gain() * current
    }

    /// Potential stored after a spike at `pre_reset`.
    #[inline]
    pub(crate) fn reset(&self, pre_reset: S) -> S {
        match self.reset_mode {
            ResetMode::SubtractThreshold => pre_reset - self.u_th,
            ResetMode::ToZero => S::zero(),
        }
    }

    /// `∂u/∂h`: how the post-reset potential responds to the pre-reset one,
    /// with the spike differentiated through [`surrogate_gate`].
    #[inline]
    pub(crate) fn reset_jacobian(&self, pre_reset: S) -> S {
        let gate = surrogate_gate(pre_reset, self);
        match self.reset_mode {
            ResetMode::SubtractThreshold => S::one() - self.u_th * gate,
            ResetMode::ToZero => {
                let fired = if pre_reset >= self.u_th { S::one() } else { S::zero() };
                (S::one() - fired) - pre_reset * gate
            }
        }
    }
}

impl Default for LifNeuronConfig<f64> {
    fn default() -> Self {
        Self::new(2.0, 1.0).expect("valid defaults")
    }
}

impl Default for LifNeuronConfig<f32> {
    fn default() -> Self {
        Self::new(2.0, 1.0).expect("valid defaults")
    }
}

/// Membrane potentials of one layer at a given time index.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState<S> {
    pub potentials: Vec<S>,
    pub time_index: usize,
}

impl<S: Scalar> LifState<S> {
    pub fn zeros(neurons: usize) -> Self {
        Self { potentials: vec![S::zero(); neurons], time_index: 0 }
    }

    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }
}

/// Shifted-Heaviside surrogate derivative `∂o/∂U`: 1 at or above threshold.
#[inline]
pub fn surrogate_gate<S: Scalar>(potential: S, config: &LifNeuronConfig<S>) -> S {
    if potential >= config.u_th {
        S::one()
    } else {
        S::zero()
    }
}

/// One discrete LIF step. Returns the next state and the emitted spikes.
pub fn lif_step<S: Scalar>(
    state: &LifState<S>,
    input_current: &[S],
    config: &LifNeuronConfig<S>,
) -> Result<(LifState<S>, Vec<bool>)> {
    if input_current.len() != state.len() {
        return shape_err(format!(
            "input current has {} entries but the layer has {} neurons",
            input_current.len(),
            state.len()
        ));
    }
    let mut potentials = Vec::with_capacity(state.len());
    let mut spikes = Vec::with_capacity(state.len());
    for (&u, &i) in state.potentials.iter().zip(input_current) {
        let h = config.integrate(u, i);
        let fired = h >= config.u_th;
        spikes.push(fired);
        potentials.push(if fired { config.reset(h) } else { h });
    }
    Ok((LifState { potentials, time_index: state.time_index + 1 }, spikes))
}
