//! Generative model for synthetic traces: Poisson spikes filtered through
//! first-order calcium kinetics and observed through a linear Gaussian
//! channel,
//!
//! ```text
//! n_t ~ Poisson(λΔ)
//! C_t = γ C_{t-1} + n_t,        γ = 1 - Δ/τ
//! F_t = α C_t + β + e_t,        e_t ~ N(0, σ²)
//! ```
//!
//! Every operation is a pure function of its inputs; the seed fully
//! determines the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::types::{CalciumTrace, FluorescenceTrace, SpikeTrain};

/// Configuration for the synthetic trace generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Number of frames T.
    pub frames: usize,
    /// Frame interval Δ in seconds.
    pub dt: f64,
    /// Expected firing rate λ in Hz.
    pub rate: f64,
    /// Calcium decay time constant τ in seconds; must exceed `dt`.
    pub tau: f64,
    /// Fluorescence scale α.
    pub alpha: f64,
    /// Fluorescence offset β.
    pub beta: f64,
    /// Observation noise standard deviation σ.
    pub sigma: f64,
    /// RNG seed.
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidConfig {
                field: "frames",
                reason: format!("must be at least 2, got {}", self.frames),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "rate",
                reason: format!("must be nonnegative, got {}", self.rate),
            });
        }
        if !(self.tau > self.dt) {
            return Err(Error::InvalidConfig {
                field: "tau",
                reason: format!(
                    "must exceed the frame interval {} so the decay factor stays in (0,1), got {}",
                    self.dt, self.tau
                ),
            });
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "sigma",
                reason: format!("must be nonnegative, got {}", self.sigma),
            });
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "alpha",
                reason: "alpha and beta must be finite".into(),
            });
        }
        Ok(())
    }

    /// Per-frame decay factor γ = 1 − Δ/τ.
    pub fn gamma(&self) -> f64 {
        1.0 - self.dt / self.tau
    }
}

/// Draws an i.i.d. Poisson(λΔ) spike count for every frame.
pub fn sample_spikes(cfg: &SimConfig) -> Result<SpikeTrain> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_spikes_with(cfg, &mut rng)
}

fn sample_spikes_with<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<SpikeTrain> {
    let mean = cfg.rate * cfg.dt;
    let values = if mean == 0.0 {
        vec![0.0; cfg.frames]
    } else {
        let poisson = Poisson::new(mean).map_err(|e| Error::InvalidConfig {
            field: "rate",
            reason: e.to_string(),
        })?;
        (0..cfg.frames).map(|_| poisson.sample(rng)).collect()
    };
    SpikeTrain::new(values, cfg.dt)
}

/// Runs the AR(1) calcium recursion C_t = γ C_{t-1} + n_t with zero initial
/// state, so C_0 = n_0.
pub fn filter_calcium(spikes: &SpikeTrain, gamma: f64) -> Result<CalciumTrace> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!(
            "decay factor must lie in [0, 1), got {gamma}"
        )));
    }
    CalciumTrace::new(filter_calcium_raw(spikes.values(), gamma), spikes.dt())
}

pub(crate) fn filter_calcium_raw(spikes: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(spikes.len());
    let mut prev = 0.0;
    for &n in spikes {
        prev = gamma * prev + n;
        out.push(prev);
    }
    out
}

/// Observes a calcium trace through the linear Gaussian channel
/// F_t = α C_t + β + e_t.
pub fn observe_fluorescence(
    calcium: &CalciumTrace,
    alpha: f64,
    beta: f64,
    sigma: f64,
    seed: u64,
) -> Result<FluorescenceTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    observe_with(calcium, alpha, beta, sigma, &mut rng)
}

fn observe_with<R: Rng>(
    calcium: &CalciumTrace,
    alpha: f64,
    beta: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<FluorescenceTrace> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "noise standard deviation must be nonnegative, got {sigma}"
        )));
    }
    let values: Vec<f64> = if sigma == 0.0 {
        calcium.values().iter().map(|&c| alpha * c + beta).collect()
    } else {
        let noise = Normal::new(0.0, sigma)
            .map_err(|e| Error::Domain(format!("invalid noise scale: {e}")))?;
        calcium
            .values()
            .iter()
            .map(|&c| alpha * c + beta + noise.sample(rng))
            .collect()
    };
    FluorescenceTrace::new(values, calcium.dt())
}

/// Generates a full synthetic triple (spikes, calcium, fluorescence).
///
/// A single ChaCha stream seeded from `cfg.seed` drives both the spike draw
/// and the observation noise, so one seed reproduces the whole triple.
pub fn simulate(cfg: &SimConfig) -> Result<(SpikeTrain, CalciumTrace, FluorescenceTrace)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spikes = sample_spikes_with(cfg, &mut rng)?;
    let calcium = filter_calcium(&spikes, cfg.gamma())?;
    let trace = observe_with(&calcium, cfg.alpha, cfg.beta, cfg.sigma, &mut rng)?;
    Ok((spikes, calcium, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SimConfig {
        SimConfig {
            frames: 2000,
            dt: 0.02,
            rate: 0.1,
            tau: 1.5,
            alpha: 1.0,
            beta: 0.0,
            sigma: 0.2,
            seed: 7,
        }
    }

    #[test]
    fn zero_rate_gives_all_zero_train() {
        let c = SimConfig {
            rate: 0.0,
            ..cfg()
        };
        let spikes = sample_spikes(&c).unwrap();
        assert!(spikes.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_mean_matches_rate_per_bin() {
        // mean count per bin ≈ λΔ = 0.002, within 3 Poisson standard errors
        let spikes = sample_spikes(&cfg()).unwrap();
        let t = spikes.len() as f64;
        let mean = spikes.values().iter().sum::<f64>() / t;
        let expected = 0.1 * 0.02;
        let se = (expected / t).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn spike_sampling_is_deterministic_per_seed() {
        let a = sample_spikes(&cfg()).unwrap();
        let b = sample_spikes(&cfg()).unwrap();
        assert_eq!(a, b);
        let c = sample_spikes(&SimConfig { seed: 8, ..cfg() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spike_mean_large_sample() {
        // 10^6 bins at λΔ = 0.5, within 4 standard errors
        let c = SimConfig {
            frames: 1_000_000,
            dt: 0.01,
            rate: 50.0,
            tau: 1.5,
            seed: 3,
            ..cfg()
        };
        let spikes = sample_spikes(&c).unwrap();
        let t = spikes.len() as f64;
        let mean = spikes.values().iter().sum::<f64>() / t;
        let se = (0.5f64 / t).sqrt();
        assert!((mean - 0.5).abs() <= 4.0 * se, "mean {mean}");
    }

    #[test]
    fn filter_impulse_response_is_geometric() {
        let mut n = vec![0.0; 6];
        n[0] = 1.0;
        let spikes = SpikeTrain::new(n, 0.02).unwrap();
        let c = filter_calcium(&spikes, 0.5).unwrap();
        let expect = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];
        for (got, want) in c.values().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn filter_gamma_zero_is_identity() {
        let spikes = SpikeTrain::new(vec![0.0, 2.0, 1.0, 0.0, 3.0], 0.02).unwrap();
        let c = filter_calcium(&spikes, 0.0).unwrap();
        assert_eq!(c.values(), spikes.values());
    }

    #[test]
    fn filter_matches_superposition_oracle() {
        // independent oracle: C_t = Σ_{k<=t} γ^(t-k) n_k evaluated directly
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let gamma = 0.9;
        let spikes = SpikeTrain::new(n.clone(), 0.02).unwrap();
        let c = filter_calcium(&spikes, gamma).unwrap();
        for t in 0..n.len() {
            let oracle: f64 = (0..=t).map(|k| gamma.powi((t - k) as i32) * n[k]).sum();
            assert!(
                (c.values()[t] - oracle).abs() < 1e-12,
                "t={t}: {} vs {oracle}",
                c.values()[t]
            );
        }
    }

    #[test]
    fn filter_rejects_bad_gamma() {
        let spikes = SpikeTrain::new(vec![1.0, 0.0], 0.02).unwrap();
        assert!(filter_calcium(&spikes, 1.0).is_err());
        assert!(filter_calcium(&spikes, -0.1).is_err());
    }

    #[test]
    fn observe_noiseless_is_affine() {
        let c = CalciumTrace::new(vec![0.0, 1.0, 2.0], 0.02).unwrap();
        let f = observe_fluorescence(&c, 2.0, 0.5, 0.0, 1).unwrap();
        assert_eq!(f.values(), &[0.5, 2.5, 4.5]);
    }

    #[test]
    fn observe_noise_scale_is_calibrated() {
        let c = CalciumTrace::new(vec![0.0; 100_000], 0.02).unwrap();
        let f = observe_fluorescence(&c, 1.0, 0.0, 0.2, 42).unwrap();
        let t = f.len() as f64;
        let mean = f.values().iter().sum::<f64>() / t;
        let var = f.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        let std = var.sqrt();
        assert!((std - 0.2).abs() < 0.002, "std {std}");
    }

    #[test]
    fn observe_is_deterministic_per_seed() {
        let c = CalciumTrace::new(vec![0.0, 1.0, 0.5], 0.02).unwrap();
        let a = observe_fluorescence(&c, 1.0, 0.0, 0.3, 5).unwrap();
        let b = observe_fluorescence(&c, 1.0, 0.0, 0.3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observe_rejects_negative_sigma() {
        let c = CalciumTrace::new(vec![0.0], 0.02).unwrap();
        assert!(observe_fluorescence(&c, 1.0, 0.0, -0.1, 0).is_err());
    }

    #[test]
    fn simulate_reference_config() {
        let (spikes, calcium, trace) = simulate(&cfg()).unwrap();
        assert_eq!(spikes.len(), 2000);
        assert_eq!(calcium.len(), 2000);
        assert_eq!(trace.len(), 2000);
        assert!(spikes.values().iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn simulate_silent_noiseless_is_constant_offset() {
        let c = SimConfig {
            rate: 0.0,
            sigma: 0.0,
            beta: 0.7,
            ..cfg()
        };
        let (_, _, trace) = simulate(&c).unwrap();
        assert!(trace.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn simulate_is_reproducible() {
        let (n1, c1, f1) = simulate(&cfg()).unwrap();
        let (n2, c2, f2) = simulate(&cfg()).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(c1, c2);
        assert_eq!(f1, f2);
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = SimConfig {
            tau: 0.01,
            ..cfg()
        };
        let err = simulate(&bad).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }
}
