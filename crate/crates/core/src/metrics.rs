//! Error metrics and ordinary least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            expected: format!("{a} values"),
            actual: format!("{b} values"),
        });
    }
    if a == 0 {
        return Err(Error::EmptyDataset("metric over zero values".into()));
    }
    Ok(())
}

pub fn mean_absolute_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn mean_squared_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// All `x` equal: the slope is undefined.
    ConstantX,
    /// All `y` equal: `SS_tot = 0`, R² is undefined.
    ConstantY,
}

/// Least-squares fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `1 - SS_res / SS_tot`; `None` when degenerate.
    pub r_squared: Option<f64>,
    pub degenerate: Option<Degeneracy>,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<RegressionResult> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Degenerate("regression needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    if x.iter().all(|&v| v == x[0]) {
        return Ok(RegressionResult {
            slope: None,
            intercept: None,
            r_squared: None,
            degenerate: Some(Degeneracy::ConstantX),
        });
    }
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if y.iter().all(|&v| v == y[0]) {
        return Ok(RegressionResult {
            slope: Some(slope),
            intercept: Some(intercept),
            r_squared: None,
            degenerate: Some(Degeneracy::ConstantY),
        });
    }
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let r = b - (slope * a + intercept);
        ss_res += r * r;
        ss_tot += (b - my) * (b - my);
    }
    Ok(RegressionResult {
        slope: Some(slope),
        intercept: Some(intercept),
        r_squared: Some(1.0 - ss_res / ss_tot),
        degenerate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mean_absolute_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mean_absolute_error(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(mean_absolute_error(&[], &[]).is_err());
        assert!(mean_absolute_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn perfect_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = linear_regression(&x, &y).unwrap();
        assert!((r.slope.unwrap() - 2.0).abs() < 1e-12);
        assert!((r.intercept.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_y_is_flagged() {
        let r = linear_regression(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
        assert_eq!(r.degenerate, Some(Degeneracy::ConstantY));
        assert_eq!(r.r_squared, None);
    }

    #[test]
    fn constant_x_is_flagged() {
        let r = linear_regression(&[2.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.degenerate, Some(Degeneracy::ConstantX));
        assert_eq!(r.slope, None);
    }

    #[test]
    fn hand_solved_normal_equations() {
        // x=[0,1,2], y=[0,1,1]: slope 1/2, intercept 1/6, R^2 = 3/4
        let r = linear_regression(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((r.slope.unwrap() - 0.5).abs() < 1e-12);
        assert!((r.intercept.unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert!((r.r_squared.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_rejected() {
        assert!(linear_regression(&[1.0], &[1.0]).is_err());
    }
}
