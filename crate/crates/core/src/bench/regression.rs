//! Logistic regression fitted by iteratively reweighted least squares, with
//! Wald standard errors, p-values and 95% intervals.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use super::Observation;

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
const WALD_Z: f64 = 1.96;
/// Coefficients beyond this magnitude on the logit scale mean the likelihood
/// has no finite maximum along that direction.
const DIVERGENCE_BOUND: f64 = 15.0;

pub const INTERCEPT: &str = "(Intercept)";
pub const STATIC: &str = "Static";
pub const REPETITION: &str = "Repetition";

pub fn tool_column(tool: &str) -> String {
    format!("Tool[{tool}]")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    /// `Detected ~ Tool + Static + Repetition`
    Full,
    /// `Detected ~ Tool`
    ToolOnly,
    /// `Detected ~ 1`
    InterceptOnly,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formula::Full => "Detected ~ Tool + Static + Repetition",
            Formula::ToolOnly => "Detected ~ Tool",
            Formula::InterceptOnly => "Detected ~ 1",
        })
    }
}

impl FromStr for Formula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Formula::Full),
            "tool" => Ok(Formula::ToolOnly),
            "intercept" => Ok(Formula::InterceptOnly),
            _ => Err(format!("unknown formula `{s}`; expected full, tool or intercept")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("no observations")]
    Empty,
    #[error("perfect separation: estimates for {} diverge; no finite fit exists", columns.join(", "))]
    Separation { columns: Vec<String> },
    #[error("singular design: {} collinear with earlier columns", columns.join(", "))]
    Singular { columns: Vec<String> },
    #[error("design has {rows} rows but {outcomes} outcomes")]
    Shape { rows: usize, outcomes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub formula: String,
    /// Tool level absorbed into the intercept, if the formula has a tool term.
    pub reference_tool: Option<String>,
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub iterations: usize,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_likelihood(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Columns (by index) that are linear combinations of earlier ones, found by
/// Gram-Schmidt on the design's columns in order.
fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).clone_owned();
        let scale = col.norm().max(1.0);
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        let norm = r.norm();
        if norm <= 1e-9 * scale {
            dependent.push(j);
        } else {
            basis.push(r / norm);
        }
    }
    dependent
}

fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    x.transpose() * xw
}

/// Fit `y ~ x` where `x` already contains any intercept column.
pub fn fit_design(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<RegressionFit, RegressionError> {
    let n = x.nrows();
    if n == 0 {
        return Err(RegressionError::Empty);
    }
    if y.len() != n {
        return Err(RegressionError::Shape { rows: n, outcomes: y.len() });
    }
    let dependent = collinear_columns(x);
    if !dependent.is_empty() {
        return Err(RegressionError::Singular { columns: dependent.into_iter().map(|j| names[j].clone()).collect() });
    }
    let y = DVector::from_column_slice(y);
    let all_same = y.iter().all(|v| *v == y[0]);
    if all_same {
        return Err(RegressionError::Separation { columns: names.to_vec() });
    }

    let k = x.ncols();
    let mut beta = DVector::zeros(k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        let eta = x * &beta;
        let p = eta.map(sigmoid);
        let gradient = x.transpose() * (&y - &p);
        if gradient.norm() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let w = p.map(|pi| pi * (1.0 - pi));
        let hessian = weighted_gram(x, &w);
        let Some(chol) = hessian.cholesky() else {
            // information matrix degenerates only when fitted probabilities hit 0/1
            break;
        };
        beta += chol.solve(&gradient);
        iterations += 1;
    }

    let eta = x * &beta;
    let loglik = log_likelihood(&eta, &y);
    let diverging: Vec<String> =
        (0..k).filter(|j| beta[*j].abs() > DIVERGENCE_BOUND).map(|j| names[j].clone()).collect();
    if !converged || !diverging.is_empty() || loglik > -1e-6 {
        let columns = if diverging.is_empty() { names.to_vec() } else { diverging };
        log::warn!("logistic fit: separation detected in {}", columns.join(", "));
        return Err(RegressionError::Separation { columns });
    }

    let p = eta.map(sigmoid);
    let w = p.map(|pi| pi * (1.0 - pi));
    let covariance = weighted_gram(x, &w)
        .try_inverse()
        .ok_or_else(|| RegressionError::Singular { columns: names.to_vec() })?;
    let coefficients = (0..k)
        .map(|j| {
            let se = covariance[(j, j)].sqrt();
            let z = beta[j] / se;
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                std_error: se,
                z,
                p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
                ci_low: beta[j] - WALD_Z * se,
                ci_high: beta[j] + WALD_Z * se,
            }
        })
        .collect();
    Ok(RegressionFit {
        formula: String::new(),
        reference_tool: None,
        coefficients,
        log_likelihood: loglik,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        n_obs: n,
        iterations,
    })
}

/// Fit `formula` over the observations. Tools are encoded as indicator
/// columns against the alphabetically first tool; `Static` is 0/1 and
/// `Repetition` is numeric.
pub fn fit_logistic(observations: &[Observation], formula: Formula) -> Result<RegressionFit, RegressionError> {
    if observations.is_empty() {
        return Err(RegressionError::Empty);
    }
    let tools: Vec<&str> = observations.iter().map(|o| o.tool.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let with_tools = matches!(formula, Formula::Full | Formula::ToolOnly);
    let mut names = vec![INTERCEPT.to_owned()];
    if with_tools {
        names.extend(tools.iter().skip(1).map(|t| tool_column(t)));
    }
    if formula == Formula::Full {
        names.push(STATIC.to_owned());
        names.push(REPETITION.to_owned());
    }
    let x = DMatrix::from_fn(observations.len(), names.len(), |i, j| {
        let o = &observations[i];
        let name = names[j].as_str();
        match name {
            INTERCEPT => 1.0,
            STATIC => f64::from(u8::from(o.static_enabled)),
            REPETITION => f64::from(o.repetition),
            _ => f64::from(u8::from(name == tool_column(&o.tool))),
        }
    });
    let y: Vec<f64> = observations.iter().map(|o| f64::from(u8::from(o.detected))).collect();
    let mut fit = fit_design(&x, &y, &names)?;
    fit.formula = formula.to_string();
    fit.reference_tool = with_tools.then(|| tools[0].to_owned());
    Ok(fit)
}
