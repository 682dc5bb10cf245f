//! Logistic regression by iteratively reweighted least squares, with Wald
//! inference and Bonferroni adjustment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    /// Stop when the largest coefficient change falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// A non-converged fit with any |coefficient| above this is flagged as
    /// separated.
    pub separation_threshold: f64,
    pub max_halvings: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            tolerance: 1e-8,
            max_iterations: 100,
            separation_threshold: 15.0,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub p_adjusted: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted step, starting from zero coefficients.
    pub trace: Vec<f64>,
    pub family_size: usize,
    pub alpha: f64,
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut xw = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let p = sigmoid(*e);
        let w = p * (1.0 - p);
        xw.row_mut(i).scale_mut(w);
    }
    x.transpose() * xw
}

/// Maximum-likelihood fit. Newton steps that lower the likelihood are
/// halved until they do not. Standard errors come from the inverse
/// information at the final estimate; intervals are at 95% until
/// [`LogitFit::adjust`] widens them.
pub fn fit_logistic_irls(
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &IrlsOptions,
) -> Result<LogitFit, StatsError> {
    let (n, k) = x.shape();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if y.len() != n {
        return Err(StatsError::Shape {
            rows: n,
            outcomes: y.len(),
        });
    }
    let positives = y.iter().filter(|v| **v > 0.5).count();
    if positives == 0 || positives == n {
        return Err(StatsError::SingleClass { positives, n });
    }

    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let eta = x * &beta;
        let resid =
            DVector::from_iterator(n, eta.iter().zip(yv.iter()).map(|(e, yi)| yi - sigmoid(*e)));
        let grad = x.transpose() * resid;
        let info = information(x, &beta);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match info.lu().solve(&grad) {
                Some(s) => s,
                // weights underflow once fitted probabilities saturate
                None => break,
            },
        };
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(x, y, &candidate);
        let mut halvings = 0;
        while cand_ll < ll && halvings < opts.max_halvings {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = log_likelihood(x, y, &candidate);
            halvings += 1;
        }
        if cand_ll < ll {
            // no ascent direction left at machine precision
            converged = step.amax() * scale < opts.tolerance.sqrt();
            break;
        }
        let change = (&candidate - &beta).amax();
        beta = candidate;
        ll = cand_ll;
        trace.push(ll);
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }

    let separated = !converged && beta.amax() > opts.separation_threshold;
    if separated {
        log::warn!(
            "logistic fit did not converge and has |coefficient| > {}; likely separation",
            opts.separation_threshold
        );
    }
    let cov = information(x, &beta).try_inverse();
    if cov.is_none() && !separated {
        return Err(StatsError::Singular);
    }
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let standard_errors: Vec<f64> = (0..k)
        .map(|j| {
            cov.as_ref()
                .map_or(f64::INFINITY, |c| c[(j, j)].max(0.0).sqrt())
        })
        .collect();
    let z_values: Vec<f64> = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(b, s)| b / s)
        .collect();
    let normal = Normal::standard();
    let p_values = z_values
        .iter()
        .map(|z| (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0))
        .collect();
    let mut fit = LogitFit {
        coefficients,
        standard_errors,
        z_values,
        p_values,
        p_adjusted: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        converged,
        separated,
        iterations,
        log_likelihood: ll,
        trace,
        family_size: 1,
        alpha: 0.05,
    };
    fit.adjust(1, 0.05)?;
    Ok(fit)
}

impl LogitFit {
    /// Recomputes adjusted p-values and intervals for a family of `m` tests.
    pub fn adjust(&mut self, m: usize, alpha: f64) -> Result<(), StatsError> {
        self.p_adjusted = bonferroni(&self.p_values, m)?;
        let z = bonferroni_z(alpha, m)?;
        self.ci_low = self
            .coefficients
            .iter()
            .zip(&self.standard_errors)
            .map(|(b, s)| b - z * s)
            .collect();
        self.ci_high = self
            .coefficients
            .iter()
            .zip(&self.standard_errors)
            .map(|(b, s)| b + z * s)
            .collect();
        self.family_size = m;
        self.alpha = alpha;
        Ok(())
    }
}

/// `min(1, m * p)` for each p.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if m == 0 {
        return Err(StatsError::FamilySize);
    }
    Ok(p_values.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

/// Two-sided critical value for simultaneous `1 - alpha` coverage over `m` intervals.
pub fn bonferroni_z(alpha: f64, m: usize) -> Result<f64, StatsError> {
    if m == 0 {
        return Err(StatsError::FamilySize);
    }
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * m as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn with_intercept(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), 2, |r, c| if c == 0 { 1.0 } else { xs[r] })
    }

    fn synthetic(seed: u64, n: usize, b0: f64, b1: f64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ys = xs
            .iter()
            .map(|x| rng.random_bool(sigmoid(b0 + b1 * x)) as u8 as f64)
            .collect();
        (xs, ys)
    }

    #[test]
    fn symmetric_design_gives_zero_slope() {
        let xs = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
        let ys = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let fit = fit_logistic_irls(&with_intercept(&xs), &ys, &IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[1].abs() < 1e-8);
        assert!(fit.coefficients[0].abs() < 1e-8);
    }

    #[test]
    fn intercept_only_closed_form() {
        for (k, n) in [(3usize, 10usize), (7, 40), (1, 9)] {
            let y: Vec<f64> = (0..n).map(|i| (i < k) as u8 as f64).collect();
            let x = DMatrix::from_element(n, 1, 1.0);
            let fit = fit_logistic_irls(&x, &y, &IrlsOptions::default()).unwrap();
            let want = (k as f64 / (n - k) as f64).ln();
            assert!((fit.coefficients[0] - want).abs() < 1e-8);
            // Wald SE of a logit proportion
            let se = (1.0 / k as f64 + 1.0 / (n - k) as f64).sqrt();
            assert!((fit.standard_errors[0] - se).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_grid_search() {
        let (xs, ys) = synthetic(11, 40, -0.4, 1.1);
        let x = with_intercept(&xs);
        let fit = fit_logistic_irls(&x, &ys, &IrlsOptions::default()).unwrap();
        let ll = |a: f64, b: f64| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| {
                    let e = a + b * x;
                    y * e - (1.0 + e.exp()).ln()
                })
                .sum()
        };
        // coarse pass, then step 1e-3 around the best coarse point
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in -80..=80 {
            for j in -80..=80 {
                let (a, b) = (i as f64 * 0.05, j as f64 * 0.05);
                let v = ll(a, b);
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        let (ca, cb) = (best.1, best.2);
        for i in -100..=100 {
            for j in -100..=100 {
                let (a, b) = (ca + i as f64 * 1e-3, cb + j as f64 * 1e-3);
                let v = ll(a, b);
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        assert!((fit.coefficients[0] - best.1).abs() < 2e-3);
        assert!((fit.coefficients[1] - best.2).abs() < 2e-3);
    }

    #[test]
    fn separation_is_flagged() {
        let xs = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let ys = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let fit = fit_logistic_irls(&with_intercept(&xs), &ys, &IrlsOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.separated);
        assert!(fit.coefficients[1] > 15.0);
    }

    #[test]
    fn single_class() {
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(
            fit_logistic_irls(&x, &[1.0, 1.0, 1.0], &IrlsOptions::default()),
            Err(StatsError::SingleClass { .. })
        ));
    }

    #[test]
    fn bonferroni_rules() {
        assert_eq!(bonferroni(&[0.01, 0.3], 1).unwrap(), vec![0.01, 0.3]);
        assert!((bonferroni(&[0.01], 10).unwrap()[0] - 0.10).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.2], 10).unwrap(), vec![1.0]);
        assert_eq!(bonferroni(&[0.2], 0), Err(StatsError::FamilySize));
        assert!((bonferroni_z(0.05, 1).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(bonferroni_z(0.05, 20).unwrap() > bonferroni_z(0.05, 2).unwrap());
    }

    #[test]
    fn intervals_bracket_and_widen() {
        let (xs, ys) = synthetic(3, 200, 0.2, -0.8);
        let mut fit =
            fit_logistic_irls(&with_intercept(&xs), &ys, &IrlsOptions::default()).unwrap();
        let narrow = fit.ci_high[1] - fit.ci_low[1];
        fit.adjust(24, 0.05).unwrap();
        assert!(fit.ci_high[1] - fit.ci_low[1] > narrow);
        for j in 0..2 {
            assert!(fit.ci_low[j] <= fit.coefficients[j] && fit.coefficients[j] <= fit.ci_high[j]);
            assert!((fit.p_adjusted[j] - (24.0 * fit.p_values[j]).min(1.0)).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn likelihood_never_decreases(seed in any::<u64>(), b1 in -3.0f64..3.0) {
            let (xs, ys) = synthetic(seed, 60, 0.1, b1);
            prop_assume!(ys.iter().any(|y| *y > 0.5) && ys.iter().any(|y| *y < 0.5));
            let fit = fit_logistic_irls(&with_intercept(&xs), &ys, &IrlsOptions::default()).unwrap();
            for w in fit.trace.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn scaling_equivariance(seed in any::<u64>(), c in 0.2f64..5.0) {
            let (xs, ys) = synthetic(seed, 80, -0.3, 0.7);
            prop_assume!(ys.iter().any(|y| *y > 0.5) && ys.iter().any(|y| *y < 0.5));
            let opts = IrlsOptions::default();
            let a = fit_logistic_irls(&with_intercept(&xs), &ys, &opts).unwrap();
            prop_assume!(a.converged);
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let b = fit_logistic_irls(&with_intercept(&scaled), &ys, &opts).unwrap();
            prop_assert!((b.coefficients[1] - a.coefficients[1] / c).abs() < 1e-6);
            prop_assert!((b.coefficients[0] - a.coefficients[0]).abs() < 1e-6);
            for (x, s) in xs.iter().zip(&scaled) {
                let pa = sigmoid(a.coefficients[0] + a.coefficients[1] * x);
                let pb = sigmoid(b.coefficients[0] + b.coefficients[1] * s);
                prop_assert!((pa - pb).abs() < 1e-8);
            }
        }
    }
}
