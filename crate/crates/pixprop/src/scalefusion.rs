//! Scale handling: fusing the two specialist localizers under the
//! size-confidence map, and bilinear image enlargement for the second
//! inference scale.
//!
//! Fusion is per cell and per channel: with size confidence `z` (the
//! probability the cell belongs to a large instance), the fused coordinate
//! is `z * large + (1 - z) * small`. The arithmetic result is clamped to
//! the interval spanned by the two inputs, which makes convexity exact in
//! floating point; at `z = 0` and `z = 1` the result is bit-identical to
//! the corresponding specialist.
//!
//! Enlargement uses half-pixel-centered bilinear sampling, so an enlarged
//! image covers exactly the same field of view: normalized coordinates on
//! the enlarged image mean the same thing as on the original, and boxes
//! predicted there need no coordinate mapping back — only a scale tag.

use crate::gridcodec::{GridMode, PredictionGrid};
use crate::{Error, Result};
use ndarray::{Array2, Array3};

/// Blend two absolute-coordinate grids under a per-cell confidence map.
pub fn fuse(
    large: &PredictionGrid,
    small: &PredictionGrid,
    z: &Array2<f64>,
) -> Result<PredictionGrid> {
    if large.mode() != GridMode::Absolute || small.mode() != GridMode::Absolute {
        return Err(Error::ShapeMismatch("fusion wants absolute-mode grids".into()));
    }
    if large.geometry() != small.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "fusion geometries differ: {:?} vs {:?}",
            large.geometry(),
            small.geometry()
        )));
    }
    let g = large.geometry();
    if z.dim() != (g.grid_h, g.grid_w) {
        return Err(Error::ShapeMismatch(format!(
            "confidence map {:?} vs grid {}x{}",
            z.dim(),
            g.grid_h,
            g.grid_w
        )));
    }
    if let Some(&bad) = z.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
        return Err(Error::ShapeMismatch(format!(
            "confidence {bad} outside [0, 1]"
        )));
    }
    let (lv, sv) = (large.values(), small.values());
    let mut out = lv.clone();
    for ch in 0..4 {
        for r in 0..g.grid_h {
            for c in 0..g.grid_w {
                let (a, b) = (lv[[ch, r, c]], sv[[ch, r, c]]);
                let zc = z[[r, c]];
                let blended = zc * a + (1.0 - zc) * b;
                out[[ch, r, c]] = blended.clamp(a.min(b), a.max(b));
            }
        }
    }
    PredictionGrid::from_values(g, GridMode::Absolute, out)
}

/// Upsample an image by an integer factor with half-pixel-centered
/// bilinear interpolation (output pixel `j` samples input coordinate
/// `(j + 0.5) / f - 0.5`, edges clamped).
pub fn enlarge_image(image: &Array3<f64>, factor: usize) -> Result<Array3<f64>> {
    if factor == 0 {
        return Err(Error::BadEnlargementFactor(factor as f64));
    }
    let (c, h, w) = image.dim();
    if factor == 1 {
        return Ok(image.clone());
    }
    let (oh, ow) = (h * factor, w * factor);
    let f = factor as f64;

    // per-axis sample positions: (floor index, ceil index, ceil weight)
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|j| {
                let x = ((j as f64 + 0.5) / f - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, x - lo as f64)
            })
            .collect()
    };
    let xs = axis(ow, w);
    let ys = axis(oh, h);

    let mut out = Array3::zeros((c, oh, ow));
    for ch in 0..c {
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                let top = image[[ch, y0, x0]] * (1.0 - wx) + image[[ch, y0, x1]] * wx;
                let bot = image[[ch, y1, x0]] * (1.0 - wx) + image[[ch, y1, x1]] * wx;
                out[[ch, oy, ox]] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    Ok(out)
}
