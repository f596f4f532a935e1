use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Mean squared errors over the pose vector `(x, y, sin α, cos α)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean over all four components.
    pub global: f64,
    /// Mean over `(x, y)`.
    pub position: f64,
    /// Mean over `(sin α, cos α)`.
    pub orientation: f64,
}

/// Loss of a single prediction and its gradient with respect to the
/// prediction (of the global MSE).
pub fn pose_loss(pred: &[f64; 4], target: &[f64; 4]) -> (LossBreakdown, [f64; 4]) {
    let diff: [f64; 4] = std::array::from_fn(|i| pred[i] - target[i]);
    let sq: [f64; 4] = diff.map(|d| d * d);
    (
        LossBreakdown {
            global: sq.iter().sum::<f64>() / 4.0,
            position: (sq[0] + sq[1]) / 2.0,
            orientation: (sq[2] + sq[3]) / 2.0,
        },
        diff.map(|d| d / 2.0),
    )
}

/// Batch loss averaged over rows of `B × 4` matrices, with the gradient of
/// the global MSE.
pub fn batch_loss(pred: &Matrix, target: &Matrix) -> Result<(LossBreakdown, Matrix)> {
    if pred.shape() != target.shape() || pred.cols() != 4 {
        return Err(Error::Shape(format!(
            "loss over {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let b = pred.rows().max(1) as f64;
    let mut total = LossBreakdown::default();
    let mut grad = Matrix::zeros(pred.rows(), 4);
    for i in 0..pred.rows() {
        let p: [f64; 4] = pred.row(i).try_into().expect("4 columns");
        let t: [f64; 4] = target.row(i).try_into().expect("4 columns");
        let (l, g) = pose_loss(&p, &t);
        total.global += l.global;
        total.position += l.position;
        total.orientation += l.orientation;
        for (dst, v) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = v / b;
        }
    }
    total.global /= b;
    total.position /= b;
    total.orientation /= b;
    Ok((total, grad))
}
