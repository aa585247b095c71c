use serde::{Deserialize, Serialize};

use super::WeightedData;
use crate::error::{Error, Result};
use crate::representation::BinaryInstance;
use crate::sampling::PerturbationSet;

/// Relative pivot size below which the normal equations count as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub ridge_lambda: f64,
}

impl LinearSurrogate {
    pub fn predict(&self, zprime: &BinaryInstance) -> Result<f64> {
        if zprime.len() != self.coefficients.len() {
            return Err(Error::dim(format!(
                "linear model expects {} features, got {}",
                self.coefficients.len(),
                zprime.len()
            )));
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(zprime.bits())
                .filter(|(_, &b)| b)
                .map(|(c, _)| c)
                .sum::<f64>())
    }
}

pub fn fit_linear(z: &PerturbationSet, ridge_lambda: f64) -> Result<LinearSurrogate> {
    fit_linear_on(&WeightedData::from_set(z)?, ridge_lambda)
}

/// Weighted ridge regression with an unpenalised intercept.
///
/// Minimises `sum w_i (y_i - b0 - b.z_i)^2 + lambda |b|^2` with the weights
/// rescaled to sum to one, by Cholesky factorisation of the normal equations.
pub fn fit_linear_on(data: &WeightedData<'_>, ridge_lambda: f64) -> Result<LinearSurrogate> {
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::config(format!(
            "ridge lambda must be finite and >= 0, got {ridge_lambda}"
        )));
    }
    let data = data.normalized();
    let p = data.num_features + 1;
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    let mut active = Vec::with_capacity(p);
    for ((row, &y), &w) in data.rows.iter().zip(&data.targets).zip(&data.weights) {
        active.clear();
        active.push(0);
        active.extend(
            row.iter()
                .enumerate()
                .filter(|(_, &bit)| bit)
                .map(|(k, _)| k + 1),
        );
        for &i in &active {
            b[i] += w * y;
            for &j in &active {
                a[i * p + j] += w;
            }
        }
    }
    for k in 1..p {
        a[k * p + k] += ridge_lambda;
    }
    let solution = cholesky_solve(a, b, p).ok_or_else(|| {
        Error::Surrogate(
            "normal equations are singular (some feature is constant or collinear); set ridge lambda > 0".into(),
        )
    })?;
    Ok(LinearSurrogate {
        intercept: solution[0],
        coefficients: solution[1..].to_vec(),
        ridge_lambda,
    })
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, `n x n`).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let diag = a[j * n + j];
        let pivot = diag - (0..j).map(|k| a[j * n + k].powi(2)).sum::<f64>();
        if !(pivot > PIVOT_TOLERANCE * diag.abs().max(f64::MIN_POSITIVE)) {
            return None;
        }
        let l_jj = pivot.sqrt();
        a[j * n + j] = l_jj;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>();
            a[i * n + j] = s / l_jj;
        }
    }
    // forward: L y = b
    for i in 0..n {
        let s = b[i] - (0..i).map(|k| a[i * n + k] * b[k]).sum::<f64>();
        b[i] = s / a[i * n + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let s = b[i] - (i + 1..n).map(|k| a[k * n + i] * b[k]).sum::<f64>();
        b[i] = s / a[i * n + i];
    }
    Some(b)
}
