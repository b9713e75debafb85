//! Distribution-fit and convergence diagnostics for the experiment commands.
//!
//! Acceptance thresholds are stated directly as Kolmogorov-Smirnov distance
//! bounds calibrated to the sample sizes in play; no p-values, so fixed-seed
//! runs reproduce bit for bit.

use crate::error::{Error, Result};

/// Count, moments, and the sorted sample (kept for KS evaluation).
#[derive(Clone, Debug)]
pub struct EmpiricalSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
    sorted: Vec<f64>,
}

impl EmpiricalSummary {
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample value".into()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std_err = (variance / n).sqrt();
        Ok(Self {
            count: samples.len(),
            mean,
            variance,
            std_err,
            sorted: samples,
        })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        ks_sorted(&self.sorted, cdf)
    }
}

/// Sup-norm distance between the empirical CDF of `sample` and `cdf`,
/// evaluating both one-sided gaps at every sample point.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ks_sorted(&sorted, cdf))
}

fn ks_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    sup
}

/// `F(x) = 1 - e^{-lambda x}`, the exponential law with mean `1/lambda`.
pub fn exp_cdf(lambda: f64) -> Result<impl Fn(f64) -> f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "exponential rate must be positive, got {lambda}"
        )));
    }
    Ok(move |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-lambda * x).exp()
        }
    })
}

/// `G(x) = 1 - e^{-lambda x}(1 + lambda x)`: the CDF with density
/// `lambda^2 x e^{-lambda x}`, i.e. Gamma(shape 2, rate lambda), mean
/// `2/lambda`.
pub fn gamma2_cdf(lambda: f64) -> Result<impl Fn(f64) -> f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "gamma rate must be positive, got {lambda}"
        )));
    }
    Ok(move |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-lambda * x).exp() * (1.0 + lambda * x)
        }
    })
}

#[derive(Clone, Copy, Debug)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Ordinary least squares of `log y` against `n` for a positive series.
pub fn decay_fit(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "decay fit needs at least two points".into(),
        ));
    }
    if points.iter().any(|&(_, y)| y <= 0.0) {
        return Err(Error::InvalidInput(
            "decay fit needs strictly positive values".into(),
        ));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|&(x, _)| x).sum();
    let sy: f64 = points.iter().map(|&(_, y)| y.ln()).sum();
    let sxx: f64 = points.iter().map(|&(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|&(x, y)| x * y.ln()).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::InvalidInput(
            "decay fit needs at least two distinct abscissae".into(),
        ));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = (points
        .iter()
        .map(|&(x, y)| {
            let r = y.ln() - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        slope,
        intercept,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn quantile_sample_has_small_distance() {
        let lambda = 4.0;
        let cdf = exp_cdf(lambda).unwrap();
        let n = 1000usize;
        // Points at the i/(n+1) quantiles of the target law.
        let sample: Vec<f64> = (1..=n)
            .map(|i| -(1.0 - i as f64 / (n + 1) as f64).ln() / lambda)
            .collect();
        let d = ks_distance(&sample, cdf).unwrap();
        assert!(d < 2.0 / n as f64, "distance {d}");
    }

    #[test]
    fn single_point_at_median_has_distance_half() {
        let cdf = exp_cdf(1.0).unwrap();
        let median = std::f64::consts::LN_2;
        let d = ks_distance(&[median], cdf).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wrong_law_is_detected() {
        // Analytic sup-distance between Exp(rate 4) and Gamma(2, rate 4)
        // CDFs is t*e^{-t} maximized at t = 1, i.e. 1/e ~ 0.3679; a scan
        // serves as the oracle.
        let lambda = 4.0;
        let exp = exp_cdf(lambda).unwrap();
        let gamma = gamma2_cdf(lambda).unwrap();
        let mut analytic_sup: f64 = 0.0;
        let mut x = 0.0;
        while x < 5.0 {
            analytic_sup = analytic_sup.max((exp(x) - gamma(x)).abs());
            x += 1e-4;
        }
        assert!((analytic_sup - (-1.0f64).exp()).abs() < 1e-3);

        // 5000 exponential draws tested against the gamma CDF must sit far
        // from it.
        let mut rng = SplitMix64::new(12);
        let sample: Vec<f64> = (0..5000)
            .map(|_| -(1.0 - rng.next_f64()).ln() / lambda)
            .collect();
        let d = ks_distance(&sample, gamma).unwrap();
        assert!(d > 0.1, "distance {d}");
        assert!((d - analytic_sup).abs() < 0.05, "distance {d}");
    }

    #[test]
    fn gamma2_cdf_hand_values() {
        let g = gamma2_cdf(4.0).unwrap();
        assert_eq!(g(0.0), 0.0);
        assert!((g(1e6) - 1.0).abs() < 1e-12);
        assert!((g(0.5) - (1.0 - 3.0 * (-2.0f64).exp())).abs() < 1e-12);
        // Mean of the density is 2/lambda: check by numeric quadrature of
        // the survival function.
        let mut mean = 0.0;
        let dx = 1e-4;
        let mut x = 0.0;
        while x < 20.0 {
            mean += (1.0 - g(x)) * dx;
            x += dx;
        }
        assert!((mean - 0.5).abs() < 1e-3);
    }

    #[test]
    fn cdf_constructors_reject_bad_rate() {
        assert!(exp_cdf(0.0).is_err());
        assert!(gamma2_cdf(-1.0).is_err());
    }

    #[test]
    fn ks_distance_is_bounded_and_relabel_invariant() {
        let mut rng = SplitMix64::new(77);
        let sample: Vec<f64> = (0..500).map(|_| rng.next_f64() * 3.0).collect();
        let cdf = exp_cdf(2.0).unwrap();
        let d = ks_distance(&sample, &cdf).unwrap();
        assert!((0.0..=1.0).contains(&d));

        // Apply the strictly monotone map x -> x^3 + x to both sides.
        let relabel = |x: f64| x * x * x + x;
        let inverse_cdf = move |y: f64| {
            // Invert the relabeling numerically for the composed cdf.
            let mut lo = 0.0;
            let mut hi = 40.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if relabel(mid) < y {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cdf(0.5 * (lo + hi))
        };
        let mapped: Vec<f64> = sample.iter().map(|&x| relabel(x)).collect();
        let d2 = ks_distance(&mapped, inverse_cdf).unwrap();
        assert!((d - d2).abs() < 1e-6, "{d} vs {d2}");
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(matches!(
            ks_distance(&[], |_| 0.0),
            Err(Error::EmptySample)
        ));
        assert!(EmpiricalSummary::from_samples(vec![]).is_err());
    }

    #[test]
    fn summary_moments() {
        let s = EmpiricalSummary::from_samples(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.count, 3);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.variance - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.sorted(), &[1.0, 2.0, 3.0]);
        assert!(s.sorted().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn decay_fit_recovers_exact_exponential() {
        let pts: Vec<(f64, f64)> = (0..20).map(|n| (n as f64, (-0.3 * n as f64).exp())).collect();
        let fit = decay_fit(&pts).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn decay_fit_constant_series_has_zero_slope() {
        let pts: Vec<(f64, f64)> = (0..10).map(|n| (n as f64, 2.5)).collect();
        let fit = decay_fit(&pts).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn decay_fit_with_noise_stays_close() {
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                (n as f64, (-0.3 * n as f64).exp() * (1.0 + 0.01 * sign))
            })
            .collect();
        let fit = decay_fit(&pts).unwrap();
        assert!((fit.slope + 0.3).abs() < 0.01, "slope {}", fit.slope);
    }

    #[test]
    fn decay_fit_rejects_nonpositive() {
        assert!(decay_fit(&[(0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(decay_fit(&[(0.0, 1.0)]).is_err());
    }
}
