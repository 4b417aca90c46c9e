//! Training losses with analytic gradients.
//!
//! Both losses are plain **sums** over cells (no averaging); whatever
//! normalization a configuration wants is folded into the learning rate.
//! Gradients returned here are with respect to the quantities passed in:
//! absolute coordinate predictions for the localization loss, foreground /
//! large-size probabilities for the confidence loss.

use crate::gridcodec::{GridMode, PredictionGrid};
use crate::{Error, Result};
use ndarray::{Array2, Array3};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;

/// Value and gradient of the masked localization loss.
#[derive(Debug, Clone)]
pub struct LocLoss {
    pub value: f64,
    /// d(loss)/d(pred), same `[4, h, w]` shape as the prediction grid.
    pub gradient: Array3<f64>,
}

/// Masked squared-error localization loss:
/// `sum_i mask_i * ||pred_i - target_i||^2` over cells, with gradient
/// `2 * mask_i * (pred_i - target_i)`.
///
/// The same function serves all three localizer flavors — the mask decides
/// which cells count (all foreground, large-only, or small-only).
pub fn loc_loss(
    pred: &PredictionGrid,
    target: &PredictionGrid,
    mask: &Array2<f64>,
) -> Result<LocLoss> {
    if pred.mode() != GridMode::Absolute || target.mode() != GridMode::Absolute {
        return Err(Error::ShapeMismatch(
            "localization loss wants absolute-mode grids".into(),
        ));
    }
    if pred.geometry() != target.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "prediction geometry {:?} vs target geometry {:?}",
            pred.geometry(),
            target.geometry()
        )));
    }
    let (gh, gw) = (pred.geometry().grid_h, pred.geometry().grid_w);
    if mask.dim() != (gh, gw) {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs grid {}x{}",
            mask.dim(),
            gh,
            gw
        )));
    }

    let p = pred.values();
    let t = target.values();
    let mut gradient = Array3::zeros((4, gh, gw));
    let mut value = 0.0;
    for r in 0..gh {
        for c in 0..gw {
            let m = mask[[r, c]];
            if m == 0.0 {
                continue;
            }
            for ch in 0..4 {
                let d = p[[ch, r, c]] - t[[ch, r, c]];
                value += m * d * d;
                gradient[[ch, r, c]] = 2.0 * m * d;
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    Ok(LocLoss { value, gradient })
}

/// Value and gradients of the two-branch confidence loss.
#[derive(Debug, Clone)]
pub struct ConfidenceLoss {
    pub value: f64,
    /// d(loss)/d(p) per cell — foreground-probability branch.
    pub grad_p: Array2<f64>,
    /// d(loss)/d(z) per cell — large-size-probability branch.
    pub grad_z: Array2<f64>,
}

/// Negated two-task log-likelihood over the grid:
///
/// ```text
/// L = - sum_i [ p*_i ln p_i + (1 - p*_i) ln (1 - p_i) ]
///     - sum_i w_i p*_i [ z*_i ln z_i + (1 - z*_i) ln (1 - z_i) ]
/// ```
///
/// The objectness branch covers every cell; the size branch only counts
/// foreground cells and is additionally weighted by `size_weights` (the
/// seeded per-instance balancing from target extraction). Probabilities are
/// clamped away from 0/1 before the logs, and the gradients are evaluated at
/// the clamped values.
pub fn confidence_loss(
    p: &Array2<f64>,
    z: &Array2<f64>,
    fg: &Array2<f64>,
    large: &Array2<f64>,
    size_weights: &Array2<f64>,
) -> Result<ConfidenceLoss> {
    let dim = p.dim();
    for (name, a) in [("z", z), ("fg", fg), ("large", large), ("size_weights", size_weights)] {
        if a.dim() != dim {
            return Err(Error::ShapeMismatch(format!(
                "confidence loss: `{name}` is {:?}, `p` is {:?}",
                a.dim(),
                dim
            )));
        }
    }

    let clamp = |v: f64| v.clamp(EPS, 1.0 - EPS);
    let mut value = 0.0;
    let mut grad_p = Array2::zeros(dim);
    let mut grad_z = Array2::zeros(dim);
    for r in 0..dim.0 {
        for c in 0..dim.1 {
            let pc = clamp(p[[r, c]]);
            let ps = fg[[r, c]];
            value -= ps * pc.ln() + (1.0 - ps) * (1.0 - pc).ln();
            grad_p[[r, c]] = -(ps / pc - (1.0 - ps) / (1.0 - pc));

            let w = size_weights[[r, c]] * ps;
            if w != 0.0 {
                let zc = clamp(z[[r, c]]);
                let zs = large[[r, c]];
                value -= w * (zs * zc.ln() + (1.0 - zs) * (1.0 - zc).ln());
                grad_z[[r, c]] = -w * (zs / zc - (1.0 - zs) / (1.0 - zc));
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    Ok(ConfidenceLoss {
        value,
        grad_p,
        grad_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridcodec::GridGeometry;
    use rand::Rng;

    fn grid_from(vals: Array3<f64>) -> PredictionGrid {
        let (_, gh, gw) = vals.dim();
        let g = GridGeometry::new(gw * 4, gh * 4, gw, gh).unwrap();
        PredictionGrid::from_values(g, GridMode::Absolute, vals).unwrap()
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let vals = Array3::from_shape_fn((4, 3, 3), |(c, r, k)| (c + r + k) as f64 * 0.05);
        let mask = Array2::ones((3, 3));
        let l = loc_loss(&grid_from(vals.clone()), &grid_from(vals), &mask).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_cell_hand_value() {
        let mut pred = Array3::zeros((4, 1, 1));
        pred[[0, 0, 0]] = 0.1;
        let target = Array3::zeros((4, 1, 1));
        let mask = Array2::ones((1, 1));
        let l = loc_loss(&grid_from(pred), &grid_from(target), &mask).unwrap();
        assert!((l.value - 0.01).abs() < 1e-15);
        assert!((l.gradient[[0, 0, 0]] - 0.2).abs() < 1e-15);
        // masked-out cells contribute nothing
        let mut pred2 = Array3::zeros((4, 1, 1));
        pred2[[0, 0, 0]] = 5.0;
        let l2 = loc_loss(&grid_from(pred2), &grid_from(Array3::zeros((4, 1, 1))), &Array2::zeros((1, 1))).unwrap();
        assert_eq!(l2.value, 0.0);
    }

    #[test]
    fn confidence_hand_value_two_ln_two() {
        // one foreground cell of a large instance, both probabilities 0.5
        let p = Array2::from_elem((1, 1), 0.5);
        let z = Array2::from_elem((1, 1), 0.5);
        let fg = Array2::ones((1, 1));
        let large = Array2::ones((1, 1));
        let w = Array2::ones((1, 1));
        let l = confidence_loss(&p, &z, &fg, &large, &w).unwrap();
        assert!((l.value - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clamping_keeps_extreme_probabilities_finite() {
        let p = Array2::from_elem((1, 2), 0.0); // would be ln(0) unclamped
        let z = Array2::from_elem((1, 2), 1.0);
        let fg = Array2::ones((1, 2));
        let large = Array2::zeros((1, 2));
        let w = Array2::ones((1, 2));
        let l = confidence_loss(&p, &z, &fg, &large, &w).unwrap();
        assert!(l.value.is_finite());
        assert!(l.grad_p.iter().all(|g| g.is_finite()));
        assert!(l.grad_z.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn size_branch_ignores_background_cells() {
        let p = Array2::from_elem((2, 2), 0.3);
        let mut z = Array2::from_elem((2, 2), 0.9);
        z[[0, 0]] = 0.1;
        let mut fg = Array2::zeros((2, 2));
        fg[[1, 1]] = 1.0;
        let large = Array2::ones((2, 2));
        let w = Array2::ones((2, 2));
        let l = confidence_loss(&p, &z, &fg, &large, &w).unwrap();
        assert_eq!(l.grad_z[[0, 0]], 0.0, "background z gets no gradient");
        assert_ne!(l.grad_z[[1, 1]], 0.0);
    }

    /// Central finite differences over every input entry. Probabilities are
    /// drawn well inside (0, 1) so the clamp never bites inside the stencil.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng::derived_rng(42, crate::rng::Domain::WeightInit, 0);
        let h = 1e-6;

        for _ in 0..5 {
            // localization
            let pred = Array3::from_shape_fn((4, 3, 4), |_| rng.gen_range(-0.5..1.5));
            let target = Array3::from_shape_fn((4, 3, 4), |_| rng.gen_range(0.0..1.0));
            let mask = Array2::from_shape_fn((3, 4), |_| rng.gen_range(0..2) as f64);
            let base = loc_loss(&grid_from(pred.clone()), &grid_from(target.clone()), &mask).unwrap();
            for ch in 0..4 {
                for r in 0..3 {
                    for c in 0..4 {
                        let mut plus = pred.clone();
                        plus[[ch, r, c]] += h;
                        let mut minus = pred.clone();
                        minus[[ch, r, c]] -= h;
                        let lp = loc_loss(&grid_from(plus), &grid_from(target.clone()), &mask).unwrap().value;
                        let lm = loc_loss(&grid_from(minus), &grid_from(target.clone()), &mask).unwrap().value;
                        let fd = (lp - lm) / (2.0 * h);
                        let an = base.gradient[[ch, r, c]];
                        assert!(
                            (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8) < 1e-4,
                            "loc grad mismatch: analytic {an}, fd {fd}"
                        );
                    }
                }
            }

            // confidence
            let p = Array2::from_shape_fn((3, 3), |_| rng.gen_range(0.05..0.95));
            let z = Array2::from_shape_fn((3, 3), |_| rng.gen_range(0.05..0.95));
            let fg = Array2::from_shape_fn((3, 3), |_| rng.gen_range(0..2) as f64);
            let large = Array2::from_shape_fn((3, 3), |_| rng.gen_range(0..2) as f64);
            let w = Array2::from_shape_fn((3, 3), |_| rng.gen_range(0..2) as f64);
            let base = confidence_loss(&p, &z, &fg, &large, &w).unwrap();
            for r in 0..3 {
                for c in 0..3 {
                    for (which, arr, an) in [("p", &p, base.grad_p[[r, c]]), ("z", &z, base.grad_z[[r, c]])] {
                        let mut plus = arr.clone();
                        plus[[r, c]] += h;
                        let mut minus = arr.clone();
                        minus[[r, c]] -= h;
                        let (lp, lm) = if which == "p" {
                            (
                                confidence_loss(&plus, &z, &fg, &large, &w).unwrap().value,
                                confidence_loss(&minus, &z, &fg, &large, &w).unwrap().value,
                            )
                        } else {
                            (
                                confidence_loss(&p, &plus, &fg, &large, &w).unwrap().value,
                                confidence_loss(&p, &minus, &fg, &large, &w).unwrap().value,
                            )
                        };
                        let fd = (lp - lm) / (2.0 * h);
                        assert!(
                            (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8) < 1e-4,
                            "confidence grad_{which} mismatch at ({r},{c}): analytic {an}, fd {fd}"
                        );
                    }
                }
            }
        }
    }
}
