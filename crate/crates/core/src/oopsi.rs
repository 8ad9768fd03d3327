//! Interior-point MAP spike inference.
//!
//! The spike train prior is an exponential (sparse) relaxation of the
//! Poisson prior, and the nonnegativity constraint on n = MC is replaced
//! by a log barrier. For each barrier weight z in a geometric schedule the
//! solver minimizes
//!
//! ```text
//! L(C) = ||F - αC - β||² / (2σ²) + λΔ·Σ(MC)_t - z·Σ ln (MC)_t
//! ```
//!
//! by damped Newton steps: solve H d = g with the tridiagonal Hessian,
//! cap the step at 99% of the distance to the feasible boundary, then
//! backtrack until the objective decreases. The objective is strictly
//! convex, so the minimizer is global. Parameters can optionally be
//! re-estimated from the solution and the solve repeated.

use crate::error::{Error, Result};
use crate::linalg::{assemble_hessian, DiffOperator, Tridiag};
use crate::model::filter_calcium_raw;
use crate::preprocess::{detrend, init_params, normalize, SIGMA_FLOOR};
use crate::types::{CalciumTrace, FluorescenceTrace, InferenceResult, ModelParams, SpikeTrain};

/// Placeholder written over n_0 after convergence: the first difference
/// entry equals C_0 and is not an observable spike, but the train must stay
/// strictly positive.
pub const FIRST_BIN_EPSILON: f64 = 1e-10;

/// Knobs for the barrier solver and the outer refinement loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Outer parameter-refinement rounds after the initial solve.
    pub iter_max: usize,
    /// Relative objective-change tolerance for the refinement loop.
    pub ltol: f64,
    /// Absolute repeat-objective tolerance (cycle detection).
    pub gtol: f64,
    /// First barrier weight.
    pub z_init: f64,
    /// The schedule stops once z is no longer above this.
    pub z_min: f64,
    /// Geometric factor between consecutive barrier weights.
    pub z_factor: f64,
    /// Step-size divisor for the backtracking line search.
    pub linesearch_shrink: f64,
    /// The line search gives up below this step size.
    pub s_min: f64,
    /// Newton loop exits once the step direction norm drops below this.
    pub d_norm_tol: f64,
    /// Newton loop exits once the accepted step size drops below this.
    pub s_tol: f64,
    /// A trial step is accepted when it lowers the objective to within this
    /// slack of the current value.
    pub armijo_slack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            iter_max: 1,
            ltol: 1e-4,
            gtol: 1e-4,
            z_init: 1.0,
            z_min: 1e-13,
            z_factor: 10.0,
            linesearch_shrink: 5.0,
            s_min: 1e-20,
            d_norm_tol: 5e-2,
            s_tol: 1e-3,
            armijo_slack: 1e-7,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("ltol", self.ltol),
            ("gtol", self.gtol),
            ("z_init", self.z_init),
            ("z_min", self.z_min),
            ("s_min", self.s_min),
            ("d_norm_tol", self.d_norm_tol),
            ("s_tol", self.s_tol),
            ("armijo_slack", self.armijo_slack),
        ];
        for (field, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if self.z_min >= self.z_init {
            return Err(Error::InvalidConfig {
                field: "z_min",
                reason: format!("must be below z_init {}, got {}", self.z_init, self.z_min),
            });
        }
        if !(self.z_factor > 1.0 && self.z_factor.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "z_factor",
                reason: format!("must exceed 1, got {}", self.z_factor),
            });
        }
        if !(self.linesearch_shrink > 1.0 && self.linesearch_shrink.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "linesearch_shrink",
                reason: format!("must exceed 1, got {}", self.linesearch_shrink),
            });
        }
        Ok(())
    }
}

/// Barrier objective L(C); returns +∞ when any entry of MC is nonpositive,
/// which the line search treats as a rejected trial.
pub fn posterior_value(calcium: &[f64], trace: &[f64], params: &ModelParams, z: f64) -> f64 {
    assert_eq!(calcium.len(), trace.len(), "trace/calcium length mismatch");
    let rate_bin = params.rate_per_bin();
    let inv_two_var = 1.0 / (2.0 * params.sigma * params.sigma);
    let mut residual = 0.0;
    let mut prior = 0.0;
    let mut barrier = 0.0;
    let mut prev = 0.0;
    for (t, (&c, &f)) in calcium.iter().zip(trace).enumerate() {
        let r = f - params.alpha * c - params.beta;
        residual += r * r;
        let n = if t == 0 { c } else { c - params.gamma * prev };
        if n <= 0.0 {
            return f64::INFINITY;
        }
        prior += n;
        barrier += n.ln();
        prev = c;
    }
    inv_two_var * residual + rate_bin * prior - z * barrier
}

/// Gradient of the barrier objective,
/// g = −(α/σ²)(F − αC − β) + Mᵀ(λΔ·1) − z·Mᵀ(MC)⁻¹.
///
/// The calcium iterate must be strictly feasible (all entries of MC
/// positive); infeasible input yields non-finite entries.
pub fn gradient(
    calcium: &[f64],
    trace: &[f64],
    params: &ModelParams,
    z: f64,
) -> Result<Vec<f64>> {
    if calcium.len() != trace.len() {
        return Err(Error::SizeMismatch {
            expected: trace.len(),
            actual: calcium.len(),
        });
    }
    let op = DiffOperator::new(params.gamma, calcium.len());
    let n = op.apply(calcium)?;
    let inv_n: Vec<f64> = n.iter().map(|v| 1.0 / v).collect();
    let mt_inv_n = op.apply_transpose(&inv_n)?;
    let rate_bin = params.rate_per_bin();
    let scale = params.alpha / (params.sigma * params.sigma);
    let last = calcium.len() - 1;
    let g = calcium
        .iter()
        .zip(trace)
        .enumerate()
        .map(|(t, (&c, &f))| {
            // (Mᵀ1)_t is 1 − γ except at the final row
            let mt_one = if t < last { 1.0 - params.gamma } else { 1.0 };
            -scale * (f - params.alpha * c - params.beta) + rate_bin * mt_one - z * mt_inv_n[t]
        })
        .collect();
    Ok(g)
}

/// Hessian of the barrier objective,
/// H = (α²/σ²)·I + z·Mᵀ·diag((MC)⁻²)·M, assembled tridiagonally.
pub fn hessian(calcium: &[f64], params: &ModelParams, z: f64) -> Result<Tridiag> {
    let op = DiffOperator::new(params.gamma, calcium.len());
    let n = op.apply(calcium)?;
    let weights: Vec<f64> = n.iter().map(|v| z / (v * v)).collect();
    let diag_add = params.alpha * params.alpha / (params.sigma * params.sigma);
    assemble_hessian(&op, &weights, diag_add)
}

/// One accepted line-search step, reported to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    /// Barrier weight at the time of the step.
    pub z: f64,
    /// Accepted step size.
    pub step: f64,
    /// Objective before the step.
    pub objective_before: f64,
    /// Objective after the step.
    pub objective_after: f64,
    /// min(MC) at the accepted iterate.
    pub min_spike: f64,
}

/// Result of a single barrier solve at fixed parameters.
#[derive(Debug, Clone)]
pub struct MapEstimate {
    /// n = MC at the solution, with n_0 replaced by [`FIRST_BIN_EPSILON`].
    /// Not peak-normalized; [`run`] normalizes at the very end.
    pub spikes: SpikeTrain,
    pub calcium: CalciumTrace,
    /// Final objective at the smallest barrier weight.
    pub objective: f64,
    /// Whether any Newton step was accepted across the whole schedule.
    pub accepted_step: bool,
}

/// MAP solve at fixed parameters over the full barrier schedule.
pub fn map_estimate(
    trace: &FluorescenceTrace,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<MapEstimate> {
    map_estimate_observed(trace, params, opts, |_| {})
}

/// Same as [`map_estimate`], invoking `on_accept` after every accepted
/// line-search step. Used by the monotonicity and feasibility tests.
pub fn map_estimate_observed(
    trace: &FluorescenceTrace,
    params: &ModelParams,
    opts: &SolverOptions,
    mut on_accept: impl FnMut(&StepRecord),
) -> Result<MapEstimate> {
    params.validate()?;
    opts.validate()?;
    let t_len = trace.len();
    if t_len < 2 {
        return Err(Error::Domain(format!(
            "inference needs at least two frames, got {t_len}"
        )));
    }
    let f = trace.values();
    let op = DiffOperator::new(params.gamma, t_len);

    // Start from the constant train n = 0.01·1; its filter response keeps
    // the initial iterate strictly interior with MC = 0.01 everywhere.
    let mut calcium = filter_calcium_raw(&vec![0.01; t_len], params.gamma);
    let mut accepted_any = false;
    let mut objective = f64::INFINITY;

    let mut z = opts.z_init;
    while z > opts.z_min {
        let mut l_z = posterior_value(&calcium, f, params, z);
        if !l_z.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is {l_z} at barrier weight {z:e}"
            )));
        }
        let mut s = 1.0;
        let mut d_norm = f64::INFINITY;
        while s > opts.s_tol && d_norm > opts.d_norm_tol {
            let g = gradient(&calcium, f, params, z)?;
            let h = hessian(&calcium, params, z)?;
            let d = h.solve(&g)?;
            d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();

            // Fraction-to-boundary cap: the update C ← C − s·d moves the
            // train to n − s·Md, so entries with (Md)_t > 0 shrink toward
            // the boundary. Stop at 99% of the first crossing; if nothing
            // shrinks, start from a full step.
            let n = op.apply(&calcium)?;
            let md = op.apply(&d)?;
            s = 1.0f64;
            for (nt, mdt) in n.iter().zip(&md) {
                if *mdt > 0.0 {
                    s = s.min(0.99 * nt / mdt);
                }
            }

            // Backtracking: infeasible trials evaluate to +∞ and shrink s.
            let mut accepted = false;
            while s >= opts.s_min {
                let trial: Vec<f64> = calcium
                    .iter()
                    .zip(&d)
                    .map(|(&c, &dt)| c - s * dt)
                    .collect();
                let l_trial = posterior_value(&trial, f, params, z);
                let improved = l_trial < l_z + opts.armijo_slack;
                s /= opts.linesearch_shrink;
                if improved {
                    if !l_trial.is_finite() {
                        return Err(Error::Numerical(format!(
                            "objective is {l_trial} after an accepted step at z={z:e}"
                        )));
                    }
                    let n_trial = op.apply(&trial)?;
                    let min_spike = n_trial.iter().cloned().fold(f64::INFINITY, f64::min);
                    on_accept(&StepRecord {
                        z,
                        step: s * opts.linesearch_shrink,
                        objective_before: l_z,
                        objective_after: l_trial,
                        min_spike,
                    });
                    calcium = trial;
                    l_z = l_trial;
                    accepted = true;
                    accepted_any = true;
                    break;
                }
            }
            if !accepted {
                // no usable step at this barrier weight; move down the schedule
                break;
            }
        }
        objective = l_z;
        z /= opts.z_factor;
    }

    let mut spikes = op.apply(&calcium)?;
    spikes[0] = FIRST_BIN_EPSILON;
    let spikes = SpikeTrain::new(spikes, trace.dt())
        .map_err(|e| Error::Numerical(format!("solver produced an invalid spike train: {e}")))?;
    let calcium = CalciumTrace::new(calcium, trace.dt())
        .map_err(|e| Error::Numerical(format!("solver produced an invalid calcium trace: {e}")))?;
    if !objective.is_finite() {
        return Err(Error::Numerical(format!(
            "final objective is {objective}"
        )));
    }
    Ok(MapEstimate {
        spikes,
        calcium,
        objective,
        accepted_step: accepted_any,
    })
}

/// Closed-form parameter refresh given an inferred solution:
/// α = 1, β = mean(F − C), σ = rms residual (floored), λ = T/(Δ·Σn).
pub fn update_params(
    spikes: &SpikeTrain,
    calcium: &CalciumTrace,
    trace: &FluorescenceTrace,
    params: &ModelParams,
) -> Result<ModelParams> {
    let t_len = trace.len();
    for len in [spikes.len(), calcium.len()] {
        if len != t_len {
            return Err(Error::SizeMismatch {
                expected: t_len,
                actual: len,
            });
        }
    }
    let spike_sum: f64 = spikes.values().iter().sum();
    if !(spike_sum > 0.0) {
        return Err(Error::Degenerate(
            "spike train sums to zero; the rate update is undefined".into(),
        ));
    }
    let (beta, sigma) = residual_moments(calcium.values(), trace.values());
    Ok(ModelParams {
        alpha: 1.0,
        beta,
        sigma,
        gamma: params.gamma,
        lambda_rate: t_len as f64 / (params.dt * spike_sum),
        dt: params.dt,
    })
}

/// β = mean(F − C) and the floored rms of F − C − β.
fn residual_moments(calcium: &[f64], trace: &[f64]) -> (f64, f64) {
    let t_len = trace.len() as f64;
    let beta = trace
        .iter()
        .zip(calcium)
        .map(|(f, c)| f - c)
        .sum::<f64>()
        / t_len;
    let ss: f64 = trace
        .iter()
        .zip(calcium)
        .map(|(f, c)| {
            let r = f - c - beta;
            r * r
        })
        .sum();
    (beta, (ss / t_len).sqrt().max(SIGMA_FLOOR))
}

/// Full pipeline: preprocess, solve, then up to `iter_max` rounds of
/// parameter refresh and re-solve, stopping early when the objective change
/// falls below `ltol` relative or repeats a previous value within `gtol`.
/// The returned spike train is scaled so its maximum is 1.
pub fn run(trace: &FluorescenceTrace, opts: &SolverOptions) -> Result<InferenceResult> {
    opts.validate()?;
    let pre = normalize(&detrend(trace)?)?;
    let mut params = init_params(&pre)?;
    let mut est = map_estimate(&pre, &params, opts)?;
    let mut converged = est.accepted_step;
    let mut trajectory = vec![est.objective];
    let mut iterations = 0;

    for round in 1..=opts.iter_max {
        params = match update_params(&est.spikes, &est.calcium, &pre, &params) {
            Ok(p) => p,
            Err(Error::Degenerate(_)) => {
                // all-zero train: refresh the closed-form parameters and
                // keep the previous rate
                let (beta, sigma) = residual_moments(est.calcium.values(), pre.values());
                ModelParams {
                    alpha: 1.0,
                    beta,
                    sigma,
                    ..params
                }
            }
            Err(e) => return Err(e),
        };
        est = map_estimate(&pre, &params, opts)?;
        converged = converged && est.accepted_step;
        iterations = round;
        let objective = est.objective;
        let previous = *trajectory.last().expect("non-empty trajectory");
        let repeats = trajectory
            .iter()
            .any(|&seen| (seen - objective).abs() < opts.gtol);
        trajectory.push(objective);
        let diff = objective - previous;
        let rel = if diff == 0.0 {
            0.0
        } else {
            (diff / objective).abs()
        };
        if rel < opts.ltol || repeats {
            break;
        }
    }

    let mut spikes = est.spikes.into_values();
    let peak = spikes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak > 0.0 {
        for v in &mut spikes {
            *v /= peak;
        }
    }
    Ok(InferenceResult {
        trace: pre,
        spikes: SpikeTrain::new(spikes, trace.dt())?,
        calcium: est.calcium,
        params,
        objective_trajectory: trajectory,
        converged,
        iterations,
    })
}
