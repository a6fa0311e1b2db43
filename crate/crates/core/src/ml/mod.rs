//! Learning kernels: boosted trees and a small 1D convolutional network.

pub mod convnet;
pub mod gbdt;

pub use convnet::{
    fit_convnet, grad_check, Activation, ConvArch, ConvNet1D, ConvSpec, Dataset3, DenseSpec, TrainConfig,
};
pub use gbdt::{fit_gbdt, predict_gbdt, GbdtConfig, GbdtModel, GbdtTrainer, Loss, TreeNode};

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |r| self.row(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.99);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_shape_checked() {
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        let m = Matrix::new(2, 3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(m.row(1), [3.0, 4.0, 5.0]);
        assert_eq!(m.rows_iter().count(), 2);
    }
}
