//! Reward ratio, violation ratios, and related summaries of a policy.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub reference_j_r: f64,
    pub reference_j_c: Vec<f64>,
    /// `J_r / J_r(π_o)`; `None` when the reference reward is zero.
    pub rr: Option<f64>,
    /// `max_i J_{c_i} / d_i`.
    pub mvr: f64,
    /// `max_i J_{c_i} / J_{c_i}(π_o)`; `None` when a reference cost is zero.
    pub mrvr: Option<f64>,
}

impl MetricsReport {
    pub fn rr(&self) -> Result<f64> {
        self.rr.ok_or_else(|| Error::UndefinedMetric {
            metric: "rr",
            reason: "reference reward is zero".into(),
        })
    }

    pub fn mrvr(&self) -> Result<f64> {
        self.mrvr.ok_or_else(|| Error::UndefinedMetric {
            metric: "mrvr",
            reason: "a reference cost is zero".into(),
        })
    }
}

pub fn compute_metrics(j_r: f64, j_c: &[f64], reference_j_r: f64, reference_j_c: &[f64], thresholds: &[f64]) -> Result<MetricsReport> {
    if j_c.len() != thresholds.len() || reference_j_c.len() != thresholds.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} constraint values", thresholds.len()),
            got: format!("{} and {}", j_c.len(), reference_j_c.len()),
        });
    }
    if let Some(i) = thresholds.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::UndefinedMetric {
            metric: "mvr",
            reason: format!("threshold {i} is {}", thresholds[i]),
        });
    }
    if !reference_j_r.is_finite() || reference_j_c.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("reference", "values must be finite"));
    }
    let max_ratio = |den: &[f64]| j_c.iter().zip(den).map(|(j, d)| j / d).fold(f64::NEG_INFINITY, f64::max);
    let mvr = if j_c.is_empty() { 0.0 } else { max_ratio(thresholds) };
    let mrvr = if reference_j_c.contains(&0.0) {
        None
    } else if j_c.is_empty() {
        Some(0.0)
    } else {
        Some(max_ratio(reference_j_c))
    };
    Ok(MetricsReport {
        j_r,
        j_c: j_c.to_vec(),
        thresholds: thresholds.to_vec(),
        reference_j_r,
        reference_j_c: reference_j_c.to_vec(),
        rr: (reference_j_r != 0.0).then(|| j_r / reference_j_r),
        mvr,
        mrvr,
    })
}

/// `max_i (J_{c_i} - d_i)_+`.
pub fn max_violation(j_c: &[f64], thresholds: &[f64]) -> f64 {
    j_c.iter().zip(thresholds).map(|(j, d)| (j - d).max(0.0)).fold(0.0, f64::max)
}

/// Sample mean and standard error of the mean (`None` below two samples).
pub fn mean_and_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_policy_scores_one() {
        let m = compute_metrics(2.0, &[0.5, 0.7], 2.0, &[0.5, 0.7], &[1.0, 1.0]).unwrap();
        assert_eq!(m.rr, Some(1.0));
        assert_eq!(m.mrvr, Some(1.0));
    }

    #[test]
    fn zero_costs_zero_mvr() {
        let m = compute_metrics(1.0, &[0.0, 0.0], 1.0, &[0.5, 0.5], &[0.3, 0.4]).unwrap();
        assert_eq!(m.mvr, 0.0);
    }

    #[test]
    fn mvr_arithmetic() {
        let m = compute_metrics(1.0, &[2.0, 1.0], 1.0, &[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.mvr, 2.0);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(
            compute_metrics(1.0, &[1.0], 1.0, &[1.0], &[0.0]),
            Err(Error::UndefinedMetric { metric: "mvr", .. })
        ));
        let m = compute_metrics(1.0, &[1.0], 0.0, &[0.0], &[1.0]).unwrap();
        assert!(m.rr().is_err());
        assert!(m.mrvr().is_err());
    }

    #[test]
    fn violation_and_se() {
        assert_eq!(max_violation(&[0.5, 1.5], &[1.0, 1.0]), 0.5);
        assert_eq!(max_violation(&[0.5], &[1.0]), 0.0);
        assert_eq!(mean_and_se(&[3.0]), (3.0, None));
        assert_eq!(mean_and_se(&[2.0, 2.0, 2.0]), (2.0, Some(0.0)));
    }
}
