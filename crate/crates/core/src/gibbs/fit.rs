use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `y = c sqrt(t)` through the origin.
    Sqrt,
    /// `y = a + c t`.
    Linear,
    /// `y = a t^b`, fitted on `log y` against `log t`.
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub coefficient: f64,
    pub coefficient_stderr: f64,
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares in the model's transformed coordinates. `R^2` is always
/// measured against the centred total sum of squares of the fitted response.
pub fn exponent_fit(points: &[(f64, f64)], model: FitModel) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::invalid(format!("fit needs at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite { context: "fit input".into() });
    }
    match model {
        FitModel::Sqrt => {
            let xs: Vec<f64> = points.iter().map(|(t, _)| t.max(0.0).sqrt()).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            if sxx <= 0.0 {
                return Err(Error::invalid("degenerate design: all t = 0"));
            }
            let c = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
            let res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c * x).powi(2)).sum();
            let se = (res / (points.len() - 1) as f64 / sxx).sqrt();
            Ok(FitResult {
                model,
                coefficient: c,
                coefficient_stderr: se,
                exponent: 0.5,
                exponent_stderr: 0.0,
                intercept: 0.0,
                r2: r_squared(&ys, res),
            })
        }
        FitModel::Linear => {
            let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            let (a, c, se_c, res) = ols(&xs, &ys)?;
            Ok(FitResult {
                model,
                coefficient: c,
                coefficient_stderr: se_c,
                exponent: 1.0,
                exponent_stderr: 0.0,
                intercept: a,
                r2: r_squared(&ys, res),
            })
        }
        FitModel::Power => {
            if points.iter().any(|&(t, y)| t <= 0.0 || y <= 0.0) {
                return Err(Error::invalid("power fit needs positive t and y"));
            }
            let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
            let (a, b, se_b, res) = ols(&xs, &ys)?;
            Ok(FitResult {
                model,
                coefficient: a.exp(),
                coefficient_stderr: f64::NAN,
                exponent: b,
                exponent_stderr: se_b,
                intercept: a,
                r2: r_squared(&ys, res),
            })
        }
    }
}

fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::invalid("degenerate design: all abscissae equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let a = my - slope * mx;
    let res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - slope * x).powi(2)).sum();
    let se = (res / (n - 2.0) / sxx).sqrt();
    Ok((a, slope, se, res))
}

fn r_squared(ys: &[f64], res: f64) -> f64 {
    let n = ys.len() as f64;
    let my = ys.iter().sum::<f64>() / n;
    let tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if tot == 0.0 {
        if res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - res / tot
    }
}
