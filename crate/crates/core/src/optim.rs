//! SGD with momentum and weight decay under a linear-warmup + cosine-decay
//! learning-rate schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, Layer, ModelGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerHyper {
    pub peak_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    /// Whether biases are decayed too. Off by default.
    #[serde(default)]
    pub decay_biases: bool,
}

impl OptimizerHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Parameter(format!("peak_lr {} must be >= 0", self.peak_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Parameter(format!(
                "weight_decay {} must be >= 0",
                self.weight_decay
            )));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::Parameter(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

/// Learning rate at `step` (0-based).
pub fn lr_at(step: usize, hyper: &OptimizerHyper) -> Result<f64> {
    if step > hyper.total_steps {
        return Err(Error::Parameter(format!(
            "step {step} beyond total_steps {}",
            hyper.total_steps
        )));
    }
    let w = hyper.warmup_steps;
    if step < w {
        return Ok(hyper.peak_lr * (step + 1) as f64 / w as f64);
    }
    let span = (hyper.total_steps - w) as f64;
    let progress = (step - w) as f64 / span;
    Ok(hyper.peak_lr * 0.5 * (1.0 + (PI * progress).cos()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    buffers: Vec<Layer<F>>,
    step_count: usize,
    hyper: OptimizerHyper,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(model: &EncoderModel<F>, hyper: OptimizerHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            buffers: model
                .layers()
                .map(|l| Layer::zeros(l.inputs(), l.outputs()))
                .collect(),
            step_count: 0,
            hyper,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn hyper(&self) -> &OptimizerHyper {
        &self.hyper
    }

    pub fn buffers(&self) -> &[Layer<F>] {
        &self.buffers
    }

    /// Resumes the schedule at `step_count` with fresh momentum buffers.
    pub fn with_step_count(mut self, step_count: usize) -> Self {
        self.step_count = step_count;
        self
    }
}

/// One update: `buf = momentum * buf + grad + wd * param`, then
/// `param -= lr_at(step) * buf`.
pub fn sgd_step<F: Scalar>(
    model: &mut EncoderModel<F>,
    grads: &ModelGrads<F>,
    state: &mut OptimizerState<F>,
) -> Result<()> {
    if !model.same_shape(grads) || state.buffers.len() != grads.layers().count() {
        return Err(Error::Shape("gradient layout does not match the model".into()));
    }
    let lr = F::of(lr_at(state.step_count, &state.hyper)?);
    let mu = F::of(state.hyper.momentum);
    let wd = F::of(state.hyper.weight_decay);
    let bias_wd = if state.hyper.decay_biases { wd } else { F::zero() };
    for ((param, grad), buf) in model
        .layers_mut()
        .zip(grads.layers())
        .zip(state.buffers.iter_mut())
    {
        ndarray::Zip::from(&mut buf.weight)
            .and(&grad.weight)
            .and(&param.weight)
            .for_each(|b, &g, &p| *b = mu * *b + g + wd * p);
        ndarray::Zip::from(&mut buf.bias)
            .and(&grad.bias)
            .and(&param.bias)
            .for_each(|b, &g, &p| *b = mu * *b + g + bias_wd * p);
        param.weight.scaled_add(-lr, &buf.weight);
        param.bias.scaled_add(-lr, &buf.bias);
    }
    state.step_count += 1;
    Ok(())
}
