//! Reference forecasters on real-valued series: random walk with drift and
//! VAR(1) by least squares.
//!
//! Series are `T x n` row-major (`series[t][i]`). For direction comparison the
//! baselines are fit on the per-bar moves `d = close - open`, so a forecast's
//! sign is directly comparable with a direction label. Prediction ties map to
//! up (1).

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub values: Vec<f64>,
    pub directions: Vec<u8>,
}

fn up_if_nonnegative(x: f64) -> u8 {
    u8::from(x >= 0.0)
}

fn check_series(series: &[Vec<f64>]) -> Result<usize> {
    let n = series.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Dimension("series has no columns".into()));
    }
    if let Some((t, row)) = series.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Dimension(format!(
            "row {t} has {} columns, expected {n}",
            row.len()
        )));
    }
    if series.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    Ok(n)
}

fn check_input(len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::Dimension(format!("input has {len} entries, model has {n}")));
    }
    Ok(())
}

/// `y[t+1] = y[t] + drift + e[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RwModel {
    pub drift: Vec<f64>,
}

/// Drift = mean first difference per column (the Gaussian MLE).
pub fn fit_rw(series: &[Vec<f64>]) -> Result<RwModel> {
    if series.len() < 2 {
        return Err(Error::Domain(format!(
            "random walk needs at least 2 rows, got {}",
            series.len()
        )));
    }
    let n = check_series(series)?;
    let steps = (series.len() - 1) as f64;
    let drift = (0..n)
        .map(|i| (series[series.len() - 1][i] - series[0][i]) / steps)
        .collect();
    Ok(RwModel { drift })
}

/// Forecast `y + drift`; the direction is the sign of the drift, i.e. of the
/// forecast change.
pub fn predict_rw(model: &RwModel, y: &[f64]) -> Result<Forecast> {
    check_input(y.len(), model.drift.len())?;
    Ok(Forecast {
        values: y.iter().zip(&model.drift).map(|(y, d)| y + d).collect(),
        directions: model.drift.iter().map(|&d| up_if_nonnegative(d)).collect(),
    })
}

/// `y[t] = c + a1 y[t-1] + e[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub c: Vec<f64>,
    /// Row `i` holds the coefficients of equation `i`.
    pub a1: Vec<Vec<f64>>,
    /// Whether the regressors were rank-deficient and the ridge fallback was used.
    pub regularized: bool,
}

impl VarModel {
    pub fn n(&self) -> usize {
        self.c.len()
    }
}

/// Regressor matrix `[1, y[t-1]]` and targets `y[t]` for `t = 1..T`.
fn var_design(series: &[Vec<f64>], n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows = series.len() - 1;
    let x = DMatrix::from_fn(rows, n + 1, |r, c| if c == 0 { 1.0 } else { series[r][c - 1] });
    let y = DMatrix::from_fn(rows, n, |r, c| series[r + 1][c]);
    (x, y)
}

/// Per-equation ordinary least squares.
///
/// A rank-deficient regressor matrix (e.g. collinear series) is solved with a
/// ridge penalty of `1e-8 * trace(X'X) / (n + 1)`; if even that system cannot
/// be solved the fit fails.
pub fn fit_var1(series: &[Vec<f64>]) -> Result<VarModel> {
    let n = check_series(series)?;
    if series.len() < n + 2 {
        return Err(Error::Domain(format!(
            "VAR(1) on {n} series needs at least {} rows, got {}",
            n + 2,
            series.len()
        )));
    }
    let (x, y) = var_design(series, n);
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let full_rank = svd.rank(tol) == n + 1;

    let coef = if full_rank {
        svd.solve(&y, tol).map_err(|e| Error::Fit(e.to_string()))?
    } else {
        let xtx = x.transpose() * &x;
        let lambda = 1e-8 * xtx.trace() / (n + 1) as f64;
        let gram = &xtx + DMatrix::identity(n + 1, n + 1) * lambda;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Fit("regularized normal equations are not positive definite".into()))?;
        chol.solve(&(x.transpose() * &y))
    };
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("least squares produced non-finite coefficients".into()));
    }
    // coef is (n + 1) x n: row 0 intercepts, row 1 + j the coefficient on y_j
    Ok(VarModel {
        c: (0..n).map(|i| coef[(0, i)]).collect(),
        a1: (0..n)
            .map(|i| (0..n).map(|j| coef[(j + 1, i)]).collect())
            .collect(),
        regularized: !full_rank,
    })
}

/// Forecast `c + a1 y_prev`; the direction is the sign of the forecast itself
/// (the reference level of a move series is 0).
pub fn predict_var1(model: &VarModel, y_prev: &[f64]) -> Result<Forecast> {
    check_input(y_prev.len(), model.n())?;
    let values: Vec<f64> = model
        .c
        .iter()
        .zip(&model.a1)
        .map(|(c, row)| c + row.iter().zip(y_prev).map(|(a, y)| a * y).sum::<f64>())
        .collect();
    Ok(Forecast {
        directions: values.iter().map(|&v| up_if_nonnegative(v)).collect(),
        values,
    })
}

pub fn rw_to_csv(model: &RwModel) -> String {
    let mut out = String::from("series,drift\n");
    for (i, d) in model.drift.iter().enumerate() {
        let _ = writeln!(out, "{i},{d}");
    }
    out
}

/// One row per equation: `series,c,a_0..a_{n-1}`.
pub fn var_to_csv(model: &VarModel) -> String {
    let mut out = String::from("series,c");
    for j in 0..model.n() {
        let _ = write!(out, ",a_{j}");
    }
    out.push('\n');
    for (i, (c, row)) in model.c.iter().zip(&model.a1).enumerate() {
        let _ = write!(out, "{i},{c}");
        for a in row {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    out
}
