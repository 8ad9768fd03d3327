//! Shared data carriers: traces, spike trains, and model parameters.
//!
//! All sample vectors are `f64` with an attached frame interval in seconds.
//! Constructors validate the invariants (finiteness, nonnegativity for spike
//! trains) so downstream code can assume them.

use crate::error::{Error, Result};

/// Observed fluorescence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FluorescenceTrace {
    values: Vec<f64>,
    dt: f64,
}

/// Latent relative calcium concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalciumTrace {
    values: Vec<f64>,
    dt: f64,
}

/// Spike counts (simulated) or nonnegative spike intensities (inferred).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    values: Vec<f64>,
    dt: f64,
}

fn check_series(values: &[f64], dt: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Degenerate("empty series".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!(
            "frame interval must be positive and finite, got {dt}"
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value at index {i}")));
    }
    Ok(())
}

macro_rules! series_accessors {
    () => {
        /// Sample values, one per frame.
        pub fn values(&self) -> &[f64] {
            &self.values
        }

        /// Frame interval in seconds.
        pub fn dt(&self) -> f64 {
            self.dt
        }

        /// Number of frames.
        pub fn len(&self) -> usize {
            self.values.len()
        }

        pub fn is_empty(&self) -> bool {
            self.values.is_empty()
        }

        /// Consumes the series, returning the raw sample vector.
        pub fn into_values(self) -> Vec<f64> {
            self.values
        }
    };
}

impl FluorescenceTrace {
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        check_series(&values, dt)?;
        Ok(Self { values, dt })
    }

    series_accessors!();
}

impl CalciumTrace {
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        check_series(&values, dt)?;
        Ok(Self { values, dt })
    }

    series_accessors!();
}

impl SpikeTrain {
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        check_series(&values, dt)?;
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "negative spike value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self { values, dt })
    }

    series_accessors!();
}

/// Model parameters θ = {α, β, σ, γ, λ} together with the frame interval Δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Fluorescence scale α.
    pub alpha: f64,
    /// Fluorescence offset β.
    pub beta: f64,
    /// Observation noise standard deviation σ.
    pub sigma: f64,
    /// Per-frame calcium decay factor γ.
    pub gamma: f64,
    /// Expected firing rate λ in Hz.
    pub lambda_rate: f64,
    /// Frame interval Δ in seconds.
    pub dt: f64,
}

impl ModelParams {
    /// Checks the solver-facing invariants: σ > 0, γ ∈ (0, 1), λ > 0, Δ > 0.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.lambda_rate > 0.0 && self.lambda_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda_rate must be positive, got {}",
                self.lambda_rate
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::Domain("alpha and beta must be finite".into()));
        }
        Ok(())
    }

    /// Expected spike count per frame, λΔ.
    pub fn rate_per_bin(&self) -> f64 {
        self.lambda_rate * self.dt
    }
}

/// Output of a full inference run.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    /// The preprocessed trace the solver actually operated on.
    pub trace: FluorescenceTrace,
    /// Inferred spike train, scaled so its maximum is 1 when nonzero.
    pub spikes: SpikeTrain,
    /// Inferred calcium trace.
    pub calcium: CalciumTrace,
    /// Final model parameters.
    pub params: ModelParams,
    /// Objective after the initial solve and after each refinement round.
    pub objective_trajectory: Vec<f64>,
    /// False when a barrier solve could not accept a single Newton step.
    pub converged: bool,
    /// Refinement rounds performed (Newton sweeps for the quadratic filter).
    pub iterations: usize,
}
