//! Small statistics toolkit: moments, Kolmogorov–Smirnov tests, chi-square
//! contingency tests and ordinary least squares with confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::Error;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_err(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Value at the given quantile using the lower empirical rule.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[i]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, en: f64) -> f64 {
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, Error> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test needs two non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    Ok(TestResult { statistic: d, p_value: ks_p(d, en) })
}

pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult, Error> {
    if a.is_empty() {
        return Err(Error::InsufficientData("KS test needs a non-empty sample".into()));
    }
    let mut x = a.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(TestResult { statistic: d, p_value: ks_p(d, n.sqrt()) })
}

/// Pearson chi-square test of independence on a contingency table. Empty
/// rows and columns are dropped.
pub fn chi_square_independence(table: &[Vec<f64>]) -> Result<TestResult, Error> {
    let rows: Vec<&Vec<f64>> = table.iter().filter(|r| r.iter().sum::<f64>() > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("empty contingency table".into()));
    }
    let ncol = rows[0].len();
    let cols: Vec<usize> = (0..ncol).filter(|&c| rows.iter().map(|r| r[c]).sum::<f64>() > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::InsufficientData("contingency table needs two non-empty rows and columns".into()));
    }
    let total: f64 = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    let row_sums: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = cols.iter().map(|&c| rows.iter().map(|r| r[c]).sum()).collect();
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let e = row_sums[i] * col_sums[j] / total;
            stat += (r[c] - e) * (r[c] - e) / e;
        }
    }
    let dof = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TestResult { statistic: stat, p_value: chi.sf(stat) })
}

/// Goodness-of-fit chi-square on observed and expected counts.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], fitted_params: usize) -> Result<TestResult, Error> {
    if observed.len() != expected.len() || observed.len() < fitted_params + 2 {
        return Err(Error::InsufficientData("not enough categories for a chi-square fit".into()));
    }
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (observed.len() - 1 - fitted_params) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TestResult { statistic: stat, p_value: chi.sf(stat) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
    pub n: usize,
}

impl OlsFit {
    /// Two-sided confidence interval for the slope.
    pub fn slope_ci(&self, level: f64) -> (f64, f64) {
        let dof = (self.n as f64 - 2.0).max(1.0);
        let t = StudentsT::new(0.0, 1.0, dof).expect("valid dof").inverse_cdf(0.5 + level / 2.0);
        (self.slope - t * self.slope_se, self.slope + t * self.slope_se)
    }
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit, Error> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::InsufficientData(format!("regression needs at least 3 points, got {n}")));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("regressor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = (sse / (n as f64 - 2.0) / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(OlsFit { slope, intercept, slope_se, r2, n })
}

/// Empirical survival P(X > t) of a sorted sample.
pub fn survival_sorted(sorted: &[f64], t: f64) -> f64 {
    let above = sorted.len() - sorted.partition_point(|v| *v <= t);
    above as f64 / sorted.len() as f64
}
