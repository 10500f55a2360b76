//! L2-regularized logistic regression with optional provenance columns and
//! backdoor-adjusted prediction.
//!
//! The adjusted model appends a two-column one-hot encoding of the source to
//! every row, with the active column carrying the value `v`. Its linear
//! predictor for source `c` is
//!
//! ```text
//! logit P(y = 1 | x, z = c) = beta0 + beta1 . x + v * beta2[c]
//! ```
//!
//! and the adjusted score marginalizes the source out with the training
//! source frequencies: `P(y = 1 | x) = sum_c P(y = 1 | x, z = c) P(z = c)`.
//!
//! Parameters are laid out as `[beta0, beta1..., beta2[0], beta2[1]]` wherever
//! a flat vector is used.

mod solver;

use std::fmt::Write as _;
use std::str::FromStr;

pub use solver::{minimize, Minimum, SolverOptions};

use crate::corpus::Features;
use crate::error::{Error, Result};

/// Solver and regularization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LRConfig {
    /// Inverse regularization strength; the penalty is `|beta|^2 / (2 C)`.
    pub c: f64,
    /// Magnitude of the active provenance column.
    pub v: f64,
    /// Convergence threshold on the gradient sup-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LRConfig {
    fn default() -> Self {
        LRConfig {
            c: 1.0,
            v: 10.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl LRConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "v must be non-negative, got {}",
                self.v
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Rows of a design matrix over a fixed number of feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    dim: usize,
    rows: Vec<Features>,
}

impl DesignMatrix {
    pub fn new(dim: usize, rows: Vec<Features>) -> Result<Self> {
        for row in &rows {
            row.check_dim(dim)?;
        }
        Ok(DesignMatrix { dim, rows })
    }

    pub fn dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        Self::new(dim, rows.into_iter().map(Features::Dense).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Features] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLR {
    pub beta0: f64,
    pub beta1: Vec<f64>,
    /// Provenance weights; empty for unadjusted models.
    pub beta2: Vec<f64>,
    pub v: f64,
    /// Training source frequencies `(P(z=0), P(z=1))`; `None` for unadjusted
    /// models.
    pub pz: Option<[f64; 2]>,
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: FittedLR,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// The penalized negative log-likelihood over a fixed data set.
///
/// Losses and residuals are written so that flipping every label maps the
/// objective at `theta` onto the objective at `-theta` bit for bit.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    design: &'a DesignMatrix,
    y: &'a [u8],
    z: Option<&'a [u8]>,
    v: f64,
    c: f64,
}

impl<'a> Problem<'a> {
    pub fn new(
        design: &'a DesignMatrix,
        y: &'a [u8],
        z: Option<&'a [u8]>,
        v: f64,
        c: f64,
    ) -> Result<Self> {
        if y.len() != design.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                got: y.len(),
            });
        }
        if y.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if let Some(z) = z {
            if z.len() != design.len() {
                return Err(Error::DimensionMismatch {
                    expected: design.len(),
                    got: z.len(),
                });
            }
            if z.iter().any(|&s| s > 1) {
                return Err(Error::InvalidArgument("provenance must be 0 or 1".into()));
            }
        }
        Ok(Problem { design, y, z, v, c })
    }

    pub fn n_params(&self) -> usize {
        1 + self.design.dim + if self.z.is_some() { 2 } else { 0 }
    }

    fn logit(&self, theta: &[f64], i: usize) -> f64 {
        let d = self.design.dim;
        let mut t = theta[0] + self.design.rows[i].dot(&theta[1..=d]);
        if let Some(z) = self.z {
            t += self.v * theta[1 + d + z[i] as usize];
        }
        t
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        theta[1..].iter().map(|b| b * b).sum::<f64>() / (2.0 * self.c)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let loss: f64 = (0..self.design.len())
            .map(|i| {
                let t = self.logit(theta, i);
                if self.y[i] == 1 {
                    softplus(-t)
                } else {
                    softplus(t)
                }
            })
            .sum();
        loss + self.penalty(theta)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = self.design.dim;
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for i in 0..self.design.len() {
            let t = self.logit(theta, i);
            let r = if self.y[i] == 1 {
                loss += softplus(-t);
                -sigmoid(-t)
            } else {
                loss += softplus(t);
                sigmoid(t)
            };
            grad[0] += r;
            self.design.rows[i].add_scaled_to(r, &mut grad[1..=d]);
            if let Some(z) = self.z {
                grad[1 + d + z[i] as usize] += r * self.v;
            }
        }
        for (g, b) in grad[1..].iter_mut().zip(&theta[1..]) {
            *g += b / self.c;
        }
        (loss + self.penalty(theta), grad)
    }
}

fn check_fit_inputs(design: &DesignMatrix, y: &[u8]) -> Result<()> {
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::SingleClass);
    }
    for row in design.rows() {
        row.check_dim(design.dim())?;
    }
    Ok(())
}

/// Fits from the origin.
pub fn fit(design: &DesignMatrix, y: &[u8], z: Option<&[u8]>, cfg: &LRConfig) -> Result<FitResult> {
    let n_params = 1 + design.dim() + if z.is_some() { 2 } else { 0 };
    fit_from(design, y, z, cfg, vec![0.0; n_params])
}

/// Fits from an explicit starting parameter vector.
pub fn fit_from(
    design: &DesignMatrix,
    y: &[u8],
    z: Option<&[u8]>,
    cfg: &LRConfig,
    start: Vec<f64>,
) -> Result<FitResult> {
    cfg.validate()?;
    let problem = Problem::new(design, y, z, cfg.v, cfg.c)?;
    check_fit_inputs(design, y)?;
    if start.len() != problem.n_params() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_params(),
            got: start.len(),
        });
    }
    let opts = SolverOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        memory: 10,
    };
    let min = minimize(start, |th| problem.value_and_gradient(th), opts);
    if !min.converged {
        log::debug!(
            "logistic fit stopped after {} iterations, gradient sup-norm {:e}",
            min.iterations,
            min.gradient_norm
        );
    }
    let pz = z.map(estimate_pz).transpose()?;
    Ok(FitResult {
        model: FittedLR::from_parameters(&min.x, design.dim(), cfg.v, pz)?,
        converged: min.converged,
        iterations: min.iterations,
        gradient_norm: min.gradient_norm,
        objective: min.value,
    })
}

/// Empirical `(P(z=0), P(z=1))`.
pub fn estimate_pz(z: &[u8]) -> Result<[f64; 2]> {
    if z.is_empty() {
        return Err(Error::Empty("provenance column"));
    }
    let ones = z.iter().filter(|&&s| s == 1).count() as f64;
    let n = z.len() as f64;
    Ok([(n - ones) / n, ones / n])
}

/// Penalized negative log-likelihood of `model` on the given data.
pub fn objective(
    model: &FittedLR,
    design: &DesignMatrix,
    y: &[u8],
    z: Option<&[u8]>,
    cfg: &LRConfig,
) -> Result<f64> {
    if model.beta1.len() != design.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.beta1.len(),
            got: design.dim(),
        });
    }
    let z = match (model.is_adjusted(), z) {
        (true, Some(z)) => Some(z),
        (true, None) => {
            return Err(Error::InvalidArgument(
                "adjusted model needs a provenance column".into(),
            ))
        }
        (false, _) => None,
    };
    let problem = Problem::new(design, y, z, model.v, cfg.c)?;
    Ok(problem.value(&model.parameters()))
}

impl FittedLR {
    pub fn from_parameters(
        theta: &[f64],
        dim: usize,
        v: f64,
        pz: Option<[f64; 2]>,
    ) -> Result<Self> {
        let adjusted = match theta.len().checked_sub(1 + dim) {
            Some(0) => false,
            Some(2) => true,
            _ => {
                return Err(Error::DimensionMismatch {
                    expected: 1 + dim,
                    got: theta.len(),
                })
            }
        };
        Ok(FittedLR {
            beta0: theta[0],
            beta1: theta[1..=dim].to_vec(),
            beta2: if adjusted {
                theta[1 + dim..].to_vec()
            } else {
                Vec::new()
            },
            v,
            pz: if adjusted { pz } else { None },
        })
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(1 + self.beta1.len() + self.beta2.len());
        theta.push(self.beta0);
        theta.extend_from_slice(&self.beta1);
        theta.extend_from_slice(&self.beta2);
        theta
    }

    pub fn is_adjusted(&self) -> bool {
        self.beta2.len() == 2
    }

    fn feature_logit(&self, x: &Features) -> Result<f64> {
        x.check_dim(self.beta1.len())?;
        Ok(self.beta0 + x.dot(&self.beta1))
    }

    /// `P(y = 1 | x, z = c)`. Unadjusted models ignore `c`.
    pub fn predict_conditional(&self, x: &Features, c: u8) -> Result<f64> {
        if c > 1 {
            return Err(Error::InvalidArgument(format!(
                "provenance must be 0 or 1, got {c}"
            )));
        }
        let mut t = self.feature_logit(x)?;
        if self.is_adjusted() {
            t += self.v * self.beta2[c as usize];
        }
        Ok(sigmoid(t))
    }

    /// `sum_c P(y = 1 | x, z = c) P(z = c)`. The record's own source is never
    /// consulted.
    pub fn predict_backdoor(&self, x: &Features) -> Result<f64> {
        let pz = match (self.is_adjusted(), self.pz) {
            (true, Some(pz)) => pz,
            _ => return Err(Error::NotAdjusted),
        };
        let base = self.feature_logit(x)?;
        Ok((0..2)
            .map(|c| sigmoid(base + self.v * self.beta2[c]) * pz[c])
            .sum())
    }

    /// Backdoor prediction for adjusted models, plain prediction otherwise.
    pub fn score(&self, x: &Features) -> Result<f64> {
        if self.is_adjusted() {
            self.predict_backdoor(x)
        } else {
            self.predict_conditional(x, 0)
        }
    }

    /// Line-oriented text form with keys `beta0`, `beta1`, `beta2`, `v`, `pz`.
    /// Numbers use the shortest decimal that parses back to the same value.
    pub fn to_text(&self) -> String {
        fn line(out: &mut String, key: &str, values: &[f64]) {
            out.push_str(key);
            for v in values {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        }
        let mut out = String::new();
        line(&mut out, "beta0", &[self.beta0]);
        line(&mut out, "beta1", &self.beta1);
        line(&mut out, "beta2", &self.beta2);
        line(&mut out, "v", &[self.v]);
        line(&mut out, "pz", self.pz.as_ref().map_or(&[][..], |p| &p[..]));
        out
    }
}

impl FromStr for FittedLR {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields: [Option<Vec<f64>>; 5] = Default::default();
        const KEYS: [&str; 5] = ["beta0", "beta1", "beta2", "v", "pz"];
        for (i, line) in s.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("unknown key {key:?}"),
                })?;
            let values = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        message: format!("{p:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            fields[slot] = Some(values);
        }
        let mut take = |i: usize| {
            fields[i].take().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing key {:?}", KEYS[i]),
            })
        };
        let beta0 = take(0)?;
        let beta1 = take(1)?;
        let beta2 = take(2)?;
        let v = take(3)?;
        let pz = take(4)?;
        let scalar = |v: Vec<f64>, key: &str| match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Parse {
                line: 0,
                message: format!("{key} must hold one value"),
            }),
        };
        if !(beta2.is_empty() || beta2.len() == 2) {
            return Err(Error::Parse {
                line: 0,
                message: "beta2 must hold zero or two values".into(),
            });
        }
        let pz = match pz.as_slice() {
            [] => None,
            [a, b] => Some([*a, *b]),
            _ => {
                return Err(Error::Parse {
                    line: 0,
                    message: "pz must hold zero or two values".into(),
                })
            }
        };
        Ok(FittedLR {
            beta0: scalar(beta0, "beta0")?,
            beta1,
            beta2,
            v: scalar(v, "v")?,
            pz,
        })
    }
}
