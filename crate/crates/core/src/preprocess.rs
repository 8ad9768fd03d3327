//! Trace conditioning and parameter initialization: linear detrending,
//! min-max normalization, robust noise scale via the median absolute
//! deviation, and assembly of the initial parameter set.

use crate::error::{Error, Result};
use crate::types::{FluorescenceTrace, ModelParams};

/// Consistency factor making the MAD estimate the standard deviation of a
/// normal distribution.
pub const MAD_SCALE: f64 = 1.4826;

/// Lower bound applied to re-estimated noise scales; σ² divides the
/// gradient and Hessian, so a perfect fit must not produce σ = 0.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Removes the least-squares straight-line fit over frame index, leaving a
/// zero-mean, zero-slope residual.
pub fn detrend(trace: &FluorescenceTrace) -> Result<FluorescenceTrace> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "detrend needs at least two frames, got {n}"
        )));
    }
    let values = trace.values();
    let t_mean = (n as f64 - 1.0) / 2.0;
    let f_mean = values.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, &f) in values.iter().enumerate() {
        let x = t as f64 - t_mean;
        sxx += x * x;
        sxy += x * (f - f_mean);
    }
    let slope = sxy / sxx;
    let intercept = f_mean - slope * t_mean;
    let detrended = values
        .iter()
        .enumerate()
        .map(|(t, &f)| f - intercept - slope * t as f64)
        .collect();
    FluorescenceTrace::new(detrended, trace.dt())
}

/// Affinely maps the trace onto [0, 1].
pub fn normalize(trace: &FluorescenceTrace) -> Result<FluorescenceTrace> {
    let values = trace.values();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Degenerate(
            "constant trace cannot be normalized".into(),
        ));
    }
    let span = max - min;
    let scaled = values.iter().map(|&v| (v - min) / span).collect();
    FluorescenceTrace::new(scaled, trace.dt())
}

/// Robust noise scale: median(|F − median(F)|) × 1.4826.
pub fn mad_sigma(trace: &FluorescenceTrace) -> f64 {
    let center = median(trace.values());
    let devs: Vec<f64> = trace.values().iter().map(|&v| (v - center).abs()).collect();
    median(&devs) * MAD_SCALE
}

/// Initial parameter set for a detrended, normalized trace:
/// α = 1, β = median(F), σ = MAD-based scale, γ = 1 − Δ (one-second decay
/// prior), λ = 1 Hz.
pub fn init_params(trace: &FluorescenceTrace) -> Result<ModelParams> {
    let dt = trace.dt();
    if dt >= 1.0 {
        return Err(Error::Domain(format!(
            "frame interval {dt} s must be below 1 s for the default decay prior"
        )));
    }
    Ok(ModelParams {
        alpha: 1.0,
        beta: median(trace.values()),
        sigma: mad_sigma(trace).max(SIGMA_FLOOR),
        gamma: 1.0 - dt,
        lambda_rate: 1.0,
        dt,
    })
}

/// Median with the mean-of-central-pair convention for even lengths.
pub(crate) fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn trace(values: Vec<f64>) -> FluorescenceTrace {
        FluorescenceTrace::new(values, 0.02).unwrap()
    }

    #[test]
    fn detrend_removes_exact_line() {
        let f = trace((0..200).map(|t| 3.0 + 0.25 * t as f64).collect());
        let d = detrend(&f).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn detrend_removes_constant() {
        let f = trace(vec![4.2; 100]);
        let d = detrend(&f).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn detrend_matches_normal_equations_oracle() {
        // independent oracle: solve the 2x2 normal equations
        //   [T    Σt ] [a]   [ΣF ]
        //   [Σt   Σt²] [b] = [ΣtF]
        // by Cramer's rule and subtract a + b·t directly.
        let n = 1000usize;
        let f: Vec<f64> = (0..n)
            .map(|t| {
                let x = t as f64;
                1.5 - 0.01 * x + (0.05 * x).sin()
            })
            .collect();
        let tf = trace(f.clone());
        let d = detrend(&tf).unwrap();

        let tn = n as f64;
        let st: f64 = (0..n).map(|t| t as f64).sum();
        let stt: f64 = (0..n).map(|t| (t as f64) * (t as f64)).sum();
        let sf: f64 = f.iter().sum();
        let stf: f64 = f.iter().enumerate().map(|(t, &v)| t as f64 * v).sum();
        let det = tn * stt - st * st;
        let a = (sf * stt - st * stf) / det;
        let b = (tn * stf - st * sf) / det;
        for t in 0..n {
            let oracle = f[t] - a - b * t as f64;
            assert!(
                (d.values()[t] - oracle).abs() < 1e-9,
                "t={t}: {} vs {oracle}",
                d.values()[t]
            );
        }
    }

    #[test]
    fn detrend_rejects_short_input() {
        assert!(detrend(&trace(vec![1.0])).is_err());
    }

    #[test]
    fn normalize_maps_to_unit_interval() {
        let f = trace(vec![0.0, 5.0, 10.0]);
        let n = normalize(&f).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_preserves_rank_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 7.0 - 3.0).collect();
        let n = normalize(&trace(f.clone())).unwrap();
        let min = n.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = n.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
        let mut order_raw: Vec<usize> = (0..f.len()).collect();
        order_raw.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        let mut order_scaled: Vec<usize> = (0..f.len()).collect();
        order_scaled.sort_by(|&a, &b| n.values()[a].total_cmp(&n.values()[b]));
        assert_eq!(order_raw, order_scaled);
    }

    #[test]
    fn normalize_rejects_constant() {
        assert!(matches!(
            normalize(&trace(vec![2.0; 10])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mad_zero_spread() {
        assert_eq!(mad_sigma(&trace(vec![1.0, 1.0, 1.0])), 0.0);
    }

    #[test]
    fn mad_hand_case() {
        // median 1.5, deviations [1.5, 0.5, 0.5, 98.5], MAD 1.0
        let got = mad_sigma(&trace(vec![0.0, 1.0, 2.0, 100.0]));
        assert!((got - MAD_SCALE).abs() < 1e-12, "{got}");
    }

    #[test]
    fn mad_recovers_gaussian_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let f: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let got = mad_sigma(&trace(f));
        assert!((got - 0.3).abs() / 0.3 < 0.05, "{got}");
    }

    #[test]
    fn init_params_reference_values() {
        // median 0.4 by construction; Δ = 0.02 → γ = 0.98
        let f = trace(vec![0.0, 0.2, 0.4, 0.8, 1.0]);
        let p = init_params(&f).unwrap();
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.beta, 0.4);
        assert!((p.gamma - 0.98).abs() < 1e-15);
        assert_eq!(p.lambda_rate, 1.0);
        assert_eq!(p.dt, 0.02);
        assert_eq!(p.sigma, mad_sigma(&f).max(SIGMA_FLOOR));
    }

    #[test]
    fn init_params_symmetric_median() {
        let f = trace(vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert_eq!(init_params(&f).unwrap().beta, 0.5);
    }

    #[test]
    fn init_params_rejects_slow_frame_rate() {
        let f = FluorescenceTrace::new(vec![0.0, 1.0], 1.0).unwrap();
        assert!(init_params(&f).is_err());
    }

    proptest! {
        #[test]
        fn detrend_is_idempotent(values in proptest::collection::vec(-100.0f64..100.0, 3..64)) {
            let once = detrend(&trace(values)).unwrap();
            let twice = detrend(&once).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn normalize_is_idempotent(values in proptest::collection::vec(-100.0f64..100.0, 2..64)) {
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(max - min > 1e-6);
            let once = normalize(&trace(values)).unwrap();
            let twice = normalize(&once).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn mad_is_translation_invariant_and_scales(
            values in proptest::collection::vec(-50.0f64..50.0, 1..64),
            shift in -10.0f64..10.0,
            scale in 0.1f64..10.0,
        ) {
            let base = mad_sigma(&trace(values.clone()));
            let shifted = mad_sigma(&trace(values.iter().map(|v| v + shift).collect()));
            let scaled = mad_sigma(&trace(values.iter().map(|v| v * scale).collect()));
            prop_assert!((shifted - base).abs() <= 1e-9 * (1.0 + base.abs()));
            prop_assert!((scaled - scale * base).abs() <= 1e-9 * (1.0 + (scale * base).abs()));
        }
    }
}
