//! Precision-recall curves, average precision and the log-alpha slope fit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

/// One point per distinct score, thresholds descending. Tied scores enter
/// the prediction set together.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PRPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PRPoint {
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
            threshold,
        });
    }
    Ok(points)
}

/// Average precision: `sum_k (R_k - R_{k-1}) P_k` with `R_0 = 0`.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let curve = pr_curve(scores, labels)?;
    let mut prev = 0.0;
    let mut area = 0.0;
    for p in &curve {
        area += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    Ok(area)
}

/// Ordinary least-squares line of a metric against `log(alpha_test)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

/// Base of the logarithm applied to `alpha_test`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            LogBase::E => "e",
            LogBase::Two => "2",
            LogBase::Ten => "10",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" => Ok(LogBase::E),
            "2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::InvalidArgument(format!(
                "log base must be e, 2 or 10, got {other:?}"
            ))),
        }
    }
}

/// Fits `metric = intercept + slope * ln(alpha)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    fit_slope_with_base(points, LogBase::E)
}

pub fn fit_slope_with_base(points: &[(f64, f64)], base: LogBase) -> Result<SlopeFit> {
    if points
        .iter()
        .any(|&(a, m)| !(a > 0.0 && a.is_finite()) || !m.is_finite())
    {
        return Err(Error::InvalidArgument(
            "alpha values must be positive and metrics finite".into(),
        ));
    }
    let first = match points.first() {
        Some(p) => p.0,
        None => return Err(Error::DegenerateSlope),
    };
    if points.iter().all(|&(a, _)| a == first) {
        return Err(Error::DegenerateSlope);
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(a, _)| base.log(a)).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = points.iter().map(|&(_, m)| m).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, &(_, y)) in xs.iter().zip(points) {
        sxy += (x - x_mean) * (y - y_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: y_mean - slope * x_mean,
        n_points: points.len(),
    })
}
