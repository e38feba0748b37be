use crate::error::{shape_err, Result};

/// Binary spikes over `time_steps` steps, stored step-major.
///
/// `shape` is the per-step layout, `[C, H, W]` for maps or `[N]` for dense
/// layers. Binarity is carried by the element type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    time_steps: usize,
    shape: Vec<usize>,
    spikes: Vec<bool>,
}

impl SpikeTrain {
    pub fn new(time_steps: usize, shape: Vec<usize>, spikes: Vec<bool>) -> Result<Self> {
        if time_steps == 0 {
            return shape_err("a spike train needs at least one time step");
        }
        let per_step: usize = shape.iter().product();
        if spikes.len() != time_steps * per_step {
            return shape_err(format!(
                "{} spikes do not fill {time_steps} steps of shape {shape:?}",
                spikes.len()
            ));
        }
        Ok(Self { time_steps, shape, spikes })
    }

    pub fn zeros(time_steps: usize, shape: Vec<usize>) -> Result<Self> {
        let n = time_steps * shape.iter().product::<usize>();
        Self::new(time_steps, shape, vec![false; n])
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Neurons per time step.
    pub fn step_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn step(&self, t: usize) -> &[bool] {
        let n = self.step_len();
        &self.spikes[t * n..(t + 1) * n]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.spikes
    }

    /// Spike totals per neuron, summed over time.
    pub fn counts(&self) -> Vec<u32> {
        let n = self.step_len();
        let mut counts = vec![0u32; n];
        for t in 0..self.time_steps {
            for (c, &s) in counts.iter_mut().zip(self.step(t)) {
                *c += u32::from(s);
            }
        }
        counts
    }

    pub fn total(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }
}
