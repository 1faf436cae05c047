//! Polynomial least squares with coefficient of determination.

use ndarray::{Array1, Array2};
use ndarray_linalg::LeastSquaresSvd;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyFit {
    /// Highest power first: `y = c[0] x^d + ... + c[d]`.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * x + c)
    }
}

pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= degree {
        return Err(Error::Underdetermined { points: distinct.len(), params: degree + 1 });
    }
    let a = Array2::from_shape_fn((x.len(), degree + 1), |(i, j)| x[i].powi((degree - j) as i32));
    let b = Array1::from(y.to_vec());
    let sol = a.least_squares(&b).map_err(|e| Error::Backend(e.to_string()))?;
    let coefficients = sol.solution.to_vec();
    let fit = PolyFit { coefficients, r_squared: 0.0 };
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - fit.eval(xi)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PolyFit { r_squared, ..fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic_recovered() {
        let x: Vec<f64> = (0..7).map(|i| 20.0 + 10.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.067 * v * v - 1.881 * v + 22.62).collect();
        let f = polyfit(&x, &y, 2).unwrap();
        assert!((f.coefficients[0] - 0.067).abs() < 1e-9);
        assert!((f.coefficients[1] + 1.881).abs() < 1e-7);
        assert!((f.eval(80.0) - 300.94).abs() < 1e-6);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_rejected() {
        assert!(matches!(polyfit(&[3.0, 3.0, 3.0, 3.0], &[1.0, 2.0, 3.0, 4.0], 2), Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn r_squared_of_noisy_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.1, 1.9, 3.0];
        let f = polyfit(&x, &y, 1).unwrap();
        // hand-computed: slope 0.98, intercept 0.03, ss_res = 0.018, ss_tot = 4.82
        assert!((f.coefficients[0] - 0.98).abs() < 1e-12);
        assert!((f.coefficients[1] - 0.03).abs() < 1e-12);
        assert!((f.r_squared - (1.0 - 0.018 / 4.82)).abs() < 1e-12);
    }
}
