//! Posterior estimates, decay and power-law fits, and finite-difference error budgets.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beta posterior of a Bernoulli rate under a uniform prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub a: f64,
    pub b: f64,
}

impl BetaPosterior {
    pub fn from_counts(n: u64, k: u64) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidInput(format!("{k} successes out of {n} trials")));
        }
        Ok(BetaPosterior { a: 1.0 + k as f64, b: 1.0 + (n - k) as f64 })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn std(&self) -> f64 {
        let s = self.a + self.b;
        (self.a * self.b / (s * s * (s + 1.0))).sqrt()
    }
}

/// Posterior after `n` samples with mean `mu0`.
pub fn beta_posterior(n: u64, mu0: f64) -> Result<BetaPosterior> {
    if !(0.0..=1.0).contains(&mu0) {
        return Err(Error::InvalidInput(format!("sample mean {mu0} outside [0, 1]")));
    }
    let k = n as f64 * mu0;
    Ok(BetaPosterior { a: 1.0 + k, b: 1.0 + n as f64 - k })
}

/// Two-point correlator 1 − 2μ and its standard deviation.
pub fn observable_estimate(p: &BetaPosterior) -> (f64, f64) {
    (1.0 - 2.0 * p.mean(), 2.0 * p.std())
}

/// Result of fitting A e^{−t/T} + B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub decay_time: f64,
    /// Zero when the fit has no offset.
    pub offset: f64,
    /// Covariance of (A, T[, B]) with absolute sigmas.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    /// Weighted residuals (y − f)/σ.
    pub residuals: Vec<f64>,
}

impl DecayFit {
    pub fn decay_time_std(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
}

fn fit_err(message: impl Into<String>, residuals: Vec<f64>) -> Error {
    Error::Fit { message: message.into(), residuals }
}

/// Weighted linear regression y = c + m x; returns (c, m, var_m) with absolute weights 1/σ².
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let m = sxy / sxx;
    Some((my - m * mx, m, 1.0 / sxx, mx))
}

/// Weighted nonlinear least squares for `(t, value, sigma)` points.
pub fn fit_exponential(points: &[(f64, f64, f64)], with_offset: bool) -> Result<DecayFit> {
    let need = if with_offset { 4 } else { 3 };
    if points.len() < need {
        return Err(fit_err(format!("{} points, need {need}", points.len()), vec![]));
    }
    if points.iter().any(|p| !(p.2 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidInput("points need finite t, value and sigma > 0".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let b0 = if with_offset {
        let tail = (sorted.len() / 10).max(1);
        sorted[sorted.len() - tail..].iter().map(|p| p.1).sum::<f64>() / tail as f64
    } else {
        0.0
    };
    // log-linear start on points that stay above the offset
    let (mut lx, mut ly, mut lw) = (vec![], vec![], vec![]);
    for p in &sorted {
        let v = p.1 - b0;
        if v > 0.0 {
            lx.push(p.0);
            ly.push(v.ln());
            lw.push((v / p.2).powi(2));
        }
    }
    let (c, m) = match weighted_line(&lx, &ly, &lw) {
        Some((c, m, _, _)) if m < 0.0 => (c, m),
        _ => {
            let span = sorted.last().unwrap().0 - sorted[0].0;
            (sorted[0].1.abs().max(1e-12).ln(), -1.0 / span.max(1e-300))
        }
    };
    // parameters: amplitude, rate k = 1/T, offset
    let np = if with_offset { 3 } else { 2 };
    let mut theta = DVector::from_vec(if with_offset { vec![c.exp(), -m, b0] } else { vec![c.exp(), -m] });
    let n = points.len();
    let eval = |th: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, np);
        for (i, &(t, y, s)) in points.iter().enumerate() {
            let e = (-th[1] * t).exp();
            let f = th[0] * e + if with_offset { th[2] } else { 0.0 };
            r[i] = (y - f) / s;
            j[(i, 0)] = e / s;
            j[(i, 1)] = -th[0] * t * e / s;
            if with_offset {
                j[(i, 2)] = 1.0 / s;
            }
        }
        (r, j)
    };
    let mut lambda = 1e-3;
    let (mut r, mut jac) = eval(&theta);
    let mut cost = r.norm_squared();
    let mut converged = false;
    for _ in 0..500 {
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut a = jtj.clone();
        for k in 0..np {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = a.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial = &theta + &step;
        let (r2, j2) = eval(&trial);
        let c2 = r2.norm_squared();
        if c2.is_finite() && c2 <= cost {
            let small = step.iter().zip(trial.iter()).all(|(d, v)| d.abs() <= 1e-13 * v.abs().max(1e-300));
            let flat = cost - c2 <= 1e-15 * cost.max(1e-300);
            theta = trial;
            r = r2;
            jac = j2;
            cost = c2;
            lambda = (lambda * 0.3).max(1e-12);
            if small || (flat && cost < f64::INFINITY && step.norm() <= 1e-9 * theta.norm()) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left: at a minimum to machine precision
                converged = true;
                break;
            }
        }
    }
    let residuals: Vec<f64> = r.iter().copied().collect();
    if !converged {
        return Err(fit_err("Levenberg-Marquardt did not converge", residuals));
    }
    if !(theta[1] > 0.0) {
        return Err(fit_err(format!("fitted rate {} is not positive", theta[1]), residuals));
    }
    let cov_k = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| fit_err("singular normal matrix", residuals.clone()))?;
    // transform rate covariance to T = 1/k
    let mut g = DMatrix::<f64>::identity(np, np);
    g[(1, 1)] = -1.0 / (theta[1] * theta[1]);
    let cov = &g * cov_k * g.transpose();
    Ok(DecayFit {
        amplitude: theta[0],
        decay_time: 1.0 / theta[1],
        offset: if with_offset { theta[2] } else { 0.0 },
        covariance: (0..np).map(|i| (0..np).map(|k| cov[(i, k)]).collect()).collect(),
        chi2: cost,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub gamma: f64,
    pub gamma_std: f64,
    pub prefactor: f64,
    pub points_used: usize,
}

/// Slope of ln ε against ln |α|² for points at `alpha_sq >= min_alpha_sq`.
/// With `sigmas`, points are weighted by (ε/σ)² and the slope error uses
/// the given σ; otherwise the error comes from the scatter.
pub fn fit_power_law(points: &[(f64, f64)], sigmas: Option<&[f64]>, min_alpha_sq: f64) -> Result<PowerLawFit> {
    if let Some(s) = sigmas {
        if s.len() != points.len() {
            return Err(Error::InvalidInput("sigma count does not match points".into()));
        }
    }
    let (mut x, mut y, mut w) = (vec![], vec![], vec![]);
    for (i, &(a, e)) in points.iter().enumerate() {
        if a < min_alpha_sq {
            continue;
        }
        if !(a > 0.0 && e > 0.0) {
            return Err(Error::Domain(format!("power-law fit needs positive values, got ({a}, {e})")));
        }
        x.push(a.ln());
        y.push(e.ln());
        w.push(match sigmas {
            Some(s) if s[i] > 0.0 => (e / s[i]).powi(2),
            Some(_) => return Err(Error::InvalidInput("sigmas must be > 0".into())),
            None => 1.0,
        });
    }
    if x.len() < 3 {
        return Err(fit_err(format!("{} points with alpha_sq >= {min_alpha_sq}, need 3", x.len()), vec![]));
    }
    let (c, m, var_m, _) =
        weighted_line(&x, &y, &w).ok_or_else(|| fit_err("all photon numbers identical", vec![]))?;
    let gamma_std = if sigmas.is_some() {
        var_m.sqrt()
    } else {
        let rss: f64 = x.iter().zip(&y).map(|(x, y)| (y - c - m * x).powi(2)).sum();
        (var_m * rss / (x.len() as f64 - 2.0)).sqrt()
    };
    Ok(PowerLawFit { gamma: m, gamma_std, prefactor: c.exp(), points_used: x.len() })
}

/// A value with its standard error (0 for deterministic evaluations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub label: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub contributions: Vec<Contribution>,
    pub nominal: Estimate,
}

impl Budget {
    pub fn total(&self) -> f64 {
        self.contributions.iter().map(|c| c.value).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetOptions {
    /// Step h = fraction · aᵢ on each side of aᵢ/2.
    pub step_fraction: f64,
    /// Required ratio of the finite difference to its standard error.
    pub noise_factor: f64,
}

impl Default for BudgetOptions {
    fn default() -> Self {
        BudgetOptions { step_fraction: 0.25, noise_factor: 5.0 }
    }
}

/// aᵢ ∂ε/∂xᵢ at x = a/2 by central differences.
pub fn error_budget<F>(eps_fn: F, labels: &[String], nominal: &[f64], opts: &BudgetOptions) -> Result<Budget>
where
    F: Fn(&[f64]) -> Result<Estimate> + Sync,
{
    if labels.len() != nominal.len() {
        return Err(Error::InvalidInput("one label per mechanism required".into()));
    }
    if !(opts.step_fraction > 0.0 && opts.step_fraction <= 0.5) {
        return Err(Error::InvalidInput("step fraction must be in (0, 0.5]".into()));
    }
    if nominal.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::InvalidInput("nominal mechanism strengths must be >= 0".into()));
    }
    let half: Vec<f64> = nominal.iter().map(|a| a / 2.0).collect();
    let mut points = vec![nominal.to_vec()];
    for (i, &a) in nominal.iter().enumerate() {
        for s in [1.0, -1.0] {
            let mut x = half.clone();
            x[i] += s * opts.step_fraction * a;
            points.push(x);
        }
    }
    let vals = points.par_iter().map(|x| eps_fn(x)).collect::<Result<Vec<_>>>()?;
    let mut contributions = Vec::with_capacity(nominal.len());
    for (i, &a) in nominal.iter().enumerate() {
        let (p, m) = (vals[1 + 2 * i], vals[2 + 2 * i]);
        if a == 0.0 {
            contributions.push(Contribution { label: labels[i].clone(), value: 0.0, sigma: 0.0 });
            continue;
        }
        let diff = p.value - m.value;
        let se = (p.sigma * p.sigma + m.sigma * m.sigma).sqrt();
        if se > 0.0 && diff.abs() < opts.noise_factor * se {
            return Err(Error::InvalidInput(format!(
                "budget step for '{}' is below the noise floor: difference {diff:.3e}, standard error {se:.3e}",
                labels[i]
            )));
        }
        let scale = 1.0 / (2.0 * opts.step_fraction);
        contributions.push(Contribution { label: labels[i].clone(), value: diff * scale, sigma: se * scale });
    }
    Ok(Budget { contributions, nominal: vals[0] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn beta_examples() {
        let p = beta_posterior(0, 0.3).unwrap();
        assert_eq!((p.a, p.b), (1.0, 1.0));
        assert_eq!(p.mean(), 0.5);
        let p = beta_posterior(100, 0.1).unwrap();
        assert_relative_eq!(p.a, 11.0, max_relative = 1e-12);
        assert_relative_eq!(p.b, 91.0, max_relative = 1e-12);
        assert_relative_eq!(p.mean(), 11.0 / 102.0, max_relative = 1e-12);
        assert!(beta_posterior(10, 1.5).is_err());
        assert_eq!(BetaPosterior::from_counts(100, 10).unwrap(), p);
    }

    #[test]
    fn beta_std_matches_sampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dist = rand_distr::Beta::new(11.0, 91.0).unwrap();
        let n = 400_000;
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let p = beta_posterior(100, 0.1).unwrap();
        assert_relative_eq!(p.std(), sd, max_relative = 0.01);
    }

    #[test]
    fn observable_examples() {
        let p = BetaPosterior { a: 50.0, b: 50.0 };
        assert_relative_eq!(observable_estimate(&p).0, 0.0);
        // the mean of Beta(1, b) tends to 0 for large b
        let p = BetaPosterior::from_counts(1_000_000_000, 0).unwrap();
        assert!((observable_estimate(&p).0 - 1.0).abs() < 1e-8);
        let p = BetaPosterior::from_counts(1000, 150).unwrap();
        let (v, s) = observable_estimate(&p);
        assert_relative_eq!(v, 1.0 - 2.0 * 151.0 / 1002.0, max_relative = 1e-12);
        assert_relative_eq!(s, 2.0 * p.std());
    }

    fn synth(a: f64, t: f64, b: f64) -> Vec<(f64, f64, f64)> {
        (0..12).map(|i| {
            let x = i as f64 * 10.0;
            (x, a * (-x / t).exp() + b, 0.01)
        }).collect()
    }

    #[test]
    fn noiseless_decay_recovered() {
        let f = fit_exponential(&synth(0.9, 50.0, 0.0), false).unwrap();
        assert_relative_eq!(f.decay_time, 50.0, max_relative = 1e-8);
        assert_relative_eq!(f.amplitude, 0.9, max_relative = 1e-8);
        assert_eq!(f.offset, 0.0);
        assert_eq!(f.covariance.len(), 2);
    }

    #[test]
    fn offset_recovered_and_bias_without_it() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let mut pts = synth(0.9, 50.0, 0.03);
        for p in pts.iter_mut() {
            p.1 += noise.sample(&mut rng);
            p.2 = 0.002;
        }
        let f = fit_exponential(&pts, true).unwrap();
        assert!((f.offset - 0.03).abs() < 4.0 * f.covariance[2][2].sqrt(), "{f:?}");
        assert!((f.decay_time - 50.0).abs() < 4.0 * f.decay_time_std());
        let g = fit_exponential(&pts, false).unwrap();
        assert!(g.decay_time > f.decay_time);
    }

    #[test]
    fn fit_needs_points() {
        assert!(matches!(fit_exponential(&synth(1.0, 5.0, 0.0)[..2], false), Err(Error::Fit { .. })));
        assert!(fit_exponential(&synth(1.0, 5.0, 0.0)[..3], true).is_err());
        let mut bad = synth(1.0, 5.0, 0.0);
        bad[0].2 = 0.0;
        assert!(fit_exponential(&bad, false).is_err());
    }

    #[test]
    fn power_law_examples() {
        let pts: Vec<(f64, f64)> = [1.5, 2.0, 3.0, 4.0].iter().map(|&a: &f64| (a, 1e-4 * a.powi(3))).collect();
        let f = fit_power_law(&pts, None, 1.5).unwrap();
        assert_relative_eq!(f.gamma, 3.0, max_relative = 1e-10);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, 7.0 * p.1)).collect();
        let g = fit_power_law(&scaled, None, 1.5).unwrap();
        assert_relative_eq!(f.gamma, g.gamma, max_relative = 1e-10);
        assert!(fit_power_law(&pts[..3], None, 2.0).is_err());
        let sig: Vec<f64> = pts.iter().map(|p| 0.1 * p.1).collect();
        let h = fit_power_law(&pts, Some(&sig), 1.0).unwrap();
        assert_relative_eq!(h.gamma, 3.0, max_relative = 1e-10);
        assert!(h.gamma_std > 0.0);
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn linear_budget_is_exact() {
        let c = [2.0, 0.5, 3.0];
        let a = [0.01, 0.04, 0.002];
        let f = |x: &[f64]| Ok(Estimate::exact(x.iter().zip(&c).map(|(x, c)| x * c).sum()));
        let b = error_budget(f, &labels(3), &a, &BudgetOptions::default()).unwrap();
        for i in 0..3 {
            assert_relative_eq!(b.contributions[i].value, c[i] * a[i], max_relative = 1e-10);
        }
        assert_relative_eq!(b.total(), b.nominal.value, max_relative = 1e-12);
    }

    #[test]
    fn noisy_budget_rejected() {
        let f = |x: &[f64]| Ok(Estimate { value: x[0] * 1e-3, sigma: 1e-4 });
        assert!(error_budget(f, &labels(1), &[0.01], &BudgetOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_budget_sums_to_total(
            q in proptest::collection::vec(-1.0f64..1.0, 9),
            l in proptest::collection::vec(-1.0f64..1.0, 3),
            a in proptest::collection::vec(0.0f64..0.1, 3),
        ) {
            let f = |x: &[f64]| {
                let mut v = 0.0;
                for i in 0..3 {
                    v += l[i] * x[i];
                    for j in 0..3 {
                        v += q[3 * i + j] * x[i] * x[j];
                    }
                }
                Ok(Estimate::exact(v))
            };
            let b = error_budget(f, &labels(3), &a, &BudgetOptions::default()).unwrap();
            prop_assert!((b.total() - b.nominal.value).abs() <= 1e-12);
        }

        #[test]
        fn budget_invariant_under_permutation(a in proptest::collection::vec(0.001f64..0.1, 3)) {
            let f = |x: &[f64]| Ok(Estimate::exact(x[0] * x[1] + 2.0 * x[2] * x[2] + x[0]));
            let b = error_budget(f, &labels(3), &a, &BudgetOptions::default()).unwrap();
            // same function with coordinates reversed
            let g = |x: &[f64]| Ok(Estimate::exact(x[2] * x[1] + 2.0 * x[0] * x[0] + x[2]));
            let ar = [a[2], a[1], a[0]];
            let c = error_budget(g, &labels(3), &ar, &BudgetOptions::default()).unwrap();
            for i in 0..3 {
                prop_assert!((b.contributions[i].value - c.contributions[2 - i].value).abs() <= 1e-14);
            }
        }

        #[test]
        fn decay_fit_scale_equivariant(t in 5.0f64..200.0, c in 0.1f64..10.0) {
            let pts: Vec<(f64, f64, f64)> = (0..10).map(|i| {
                let x = i as f64 * t / 4.0;
                (x, 0.8 * (-x / t).exp(), 0.01)
            }).collect();
            let f = fit_exponential(&pts, false).unwrap();
            let scaled: Vec<(f64, f64, f64)> = pts.iter().map(|p| (p.0 * c, p.1, p.2)).collect();
            let g = fit_exponential(&scaled, false).unwrap();
            prop_assert!((g.decay_time / f.decay_time - c).abs() <= 1e-7 * c);
        }
    }
}
