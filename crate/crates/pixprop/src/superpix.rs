//! Superpixel segmentation (SLIC) and superpixel-guided box refinement.
//!
//! SLIC here: seeds on a regular grid (perturbed to the lowest-gradient
//! spot in a 3x3 neighborhood), then iterated local k-means where each
//! center only competes for pixels within a `2S x 2S` window and the
//! distance is `sqrt(d_color^2 + (d_xy / S)^2 * m^2)` with compactness
//! `m`. Color distances use the native 8-bit scale (0..255) — with
//! normalized colors the spatial term would drown the color term at the
//! usual compactness values. A final connectivity pass merges small
//! orphaned components into an adjacent segment and compacts label ids,
//! so every returned label is one 4-connected region.
//!
//! Refinement snaps a box to superpixel support: segments entirely inside
//! the box vote for a tighter box (their joint bounding box), and segments
//! merely straddling the border vote for a larger one (the joint box of
//! everything the box touches). The expanded box always contains the
//! initial one.

use crate::geometry::NormalizedBox;
use crate::{Error, Result};
use ndarray::{Array2, Array3};

// ----- SLIC -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SlicParams {
    /// Requested segment count; the seeding grid rounds it to `nx * ny`.
    pub segments: usize,
    /// Compactness `m`: larger values weight spatial proximity more.
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            segments: 64,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// The usual segment-count choice: one segment per 64 pixels.
pub fn default_segment_count(n_pixels: usize) -> usize {
    (n_pixels / 64).max(2)
}

#[derive(Debug, Clone, Copy)]
struct Center {
    color: [f64; 3],
    x: f64,
    y: f64,
}

/// Squared color gradient at an interior pixel (0..255 scale).
fn gradient(colors: &[[f64; 3]], w: usize, x: usize, y: usize) -> f64 {
    let at = |xx: usize, yy: usize| colors[yy * w + xx];
    let (l, r) = (at(x - 1, y), at(x + 1, y));
    let (u, d) = (at(x, y - 1), at(x, y + 1));
    (0..3)
        .map(|c| {
            let gx = r[c] - l[c];
            let gy = d[c] - u[c];
            gx * gx + gy * gy
        })
        .sum()
}

/// Segment an RGB `[3, h, w]` image in `[0, 1]` into superpixels.
/// Deterministic; labels are compact ids `0..n`, each one 4-connected.
pub fn slic(image: &Array3<f64>, params: &SlicParams) -> Result<Array2<u32>> {
    let (c, h, w) = image.dim();
    if c != 3 {
        return Err(Error::ShapeMismatch(format!("SLIC wants RGB, got {c} channels")));
    }
    let n = w * h;
    if params.segments == 0 || params.iterations == 0 || !(params.compactness > 0.0) {
        return Err(Error::Config("SLIC needs segments >= 1, iterations >= 1, compactness > 0".into()));
    }
    if params.segments > n {
        return Err(Error::TooManySegments {
            k: params.segments,
            n,
        });
    }

    // colors on the 8-bit scale, row-major
    let mut colors = vec![[0.0f64; 3]; n];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                colors[y * w + x][ch] = image[[ch, y, x]] * 255.0;
            }
        }
    }

    // seeding grid: ny from the nominal spacing, nx to reach the request;
    // ties break toward more columns so two segments on a square image sit
    // side by side
    let k = params.segments;
    let s_nominal = (n as f64 / k as f64).sqrt();
    let ny = ((h as f64 / s_nominal).round() as usize).clamp(1, h);
    let nx = ((k + ny - 1) / ny).clamp(1, w);
    let s = (n as f64 / (nx * ny) as f64).sqrt().max(1.0);

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f64 + 0.5) * w as f64 / nx as f64;
            let cy = (j as f64 + 0.5) * h as f64 / ny as f64;
            let mut px = (cx.floor() as usize).min(w - 1);
            let mut py = (cy.floor() as usize).min(h - 1);
            if w > 2 && h > 2 {
                px = px.clamp(1, w - 2);
                py = py.clamp(1, h - 2);
                let (mut bx, mut by, mut bg) = (px, py, f64::INFINITY);
                for yy in py - 1..=py + 1 {
                    for xx in px - 1..=px + 1 {
                        if xx == 0 || yy == 0 || xx == w - 1 || yy == h - 1 {
                            continue;
                        }
                        let g = gradient(&colors, w, xx, yy);
                        if g < bg {
                            bg = g;
                            bx = xx;
                            by = yy;
                        }
                    }
                }
                px = bx;
                py = by;
            }
            centers.push(Center {
                color: colors[py * w + px],
                x: px as f64 + 0.5,
                y: py as f64 + 0.5,
            });
        }
    }

    let m2_over_s2 = (params.compactness * params.compactness) / (s * s);
    let mut labels = vec![u32::MAX; n];
    let mut dists = vec![f64::INFINITY; n];
    for _ in 0..params.iterations {
        labels.fill(u32::MAX);
        dists.fill(f64::INFINITY);
        for (ci, center) in centers.iter().enumerate() {
            let x_lo = ((center.x - s).floor().max(0.0)) as usize;
            let x_hi = ((center.x + s).ceil() as usize).min(w - 1);
            let y_lo = ((center.y - s).floor().max(0.0)) as usize;
            let y_hi = ((center.y + s).ceil() as usize).min(h - 1);
            for y in y_lo..=y_hi {
                let dy = y as f64 + 0.5 - center.y;
                for x in x_lo..=x_hi {
                    let idx = y * w + x;
                    let col = colors[idx];
                    let dc2 = (0..3)
                        .map(|ch| {
                            let d = col[ch] - center.color[ch];
                            d * d
                        })
                        .sum::<f64>();
                    let dx = x as f64 + 0.5 - center.x;
                    let d2 = dc2 + (dx * dx + dy * dy) * m2_over_s2;
                    if d2 < dists[idx] {
                        dists[idx] = d2;
                        labels[idx] = ci as u32;
                    }
                }
            }
        }
        // safety net: a pixel outside every window joins the nearest center
        for idx in 0..n {
            if labels[idx] != u32::MAX {
                continue;
            }
            let (x, y) = (idx % w, idx / w);
            let col = colors[idx];
            let mut best = (f64::INFINITY, 0u32);
            for (ci, center) in centers.iter().enumerate() {
                let dc2 = (0..3)
                    .map(|ch| {
                        let d = col[ch] - center.color[ch];
                        d * d
                    })
                    .sum::<f64>();
                let dx = x as f64 + 0.5 - center.x;
                let dy = y as f64 + 0.5 - center.y;
                let d2 = dc2 + (dx * dx + dy * dy) * m2_over_s2;
                if d2 < best.0 {
                    best = (d2, ci as u32);
                }
            }
            labels[idx] = best.1;
        }
        // recompute centers as the mean of their pixels
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for idx in 0..n {
            let l = labels[idx] as usize;
            let (x, y) = (idx % w, idx / w);
            let a = &mut sums[l];
            for ch in 0..3 {
                a[ch] += colors[idx][ch];
            }
            a[3] += x as f64 + 0.5;
            a[4] += y as f64 + 0.5;
            a[5] += 1.0;
        }
        for (center, a) in centers.iter_mut().zip(&sums) {
            if a[5] > 0.0 {
                *center = Center {
                    color: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    x: a[3] / a[5],
                    y: a[4] / a[5],
                };
            }
        }
    }

    Ok(enforce_connectivity(&labels, w, h, centers.len()))
}

/// Flood-fill relabeling: every 4-connected component gets its own compact
/// id, except components much smaller than the nominal segment size, which
/// merge into the adjacent component already labeled before them.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, k: usize) -> Array2<u32> {
    let n = w * h;
    let min_size = (n / k.max(1) / 4).max(1);
    let mut out = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..n {
        if out[start] != u32::MAX {
            continue;
        }
        let old = labels[start];
        // the previously labeled neighbor (left, else up) of the component's
        // first pixel in scan order, if any
        let (sx, sy) = (start % w, start / w);
        let adjacent = if sx > 0 && out[start - 1] != u32::MAX {
            Some(out[start - 1])
        } else if sy > 0 && out[start - w] != u32::MAX {
            Some(out[start - w])
        } else {
            None
        };

        component.clear();
        stack.push(start);
        out[start] = next;
        while let Some(idx) = stack.pop() {
            component.push(idx);
            let (x, y) = (idx % w, idx / w);
            let mut try_push = |nidx: usize| {
                if out[nidx] == u32::MAX && labels[nidx] == old {
                    out[nidx] = next;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                try_push(idx - 1);
            }
            if x + 1 < w {
                try_push(idx + 1);
            }
            if y > 0 {
                try_push(idx - w);
            }
            if y + 1 < h {
                try_push(idx + w);
            }
        }
        match adjacent {
            Some(a) if component.len() < min_size => {
                for &idx in &component {
                    out[idx] = a;
                }
            }
            _ => next += 1,
        }
    }
    Array2::from_shape_vec((h, w), out).expect("label buffer matches image")
}

// ----- segmentation quality ---------------------------------------------------

/// Fraction of ground-truth boundary pixels that have a predicted boundary
/// pixel within `tol` (Chebyshev distance). A pixel is a boundary pixel if
/// any 4-neighbor has a different label.
pub fn boundary_recall(pred: &Array2<u32>, truth: &Array2<u32>, tol: usize) -> f64 {
    assert_eq!(pred.dim(), truth.dim(), "segmentations must align");
    let (h, w) = pred.dim();
    let boundary = |m: &Array2<u32>| -> Array2<bool> {
        Array2::from_shape_fn((h, w), |(y, x)| {
            (x + 1 < w && m[[y, x]] != m[[y, x + 1]])
                || (x > 0 && m[[y, x]] != m[[y, x - 1]])
                || (y + 1 < h && m[[y, x]] != m[[y + 1, x]])
                || (y > 0 && m[[y, x]] != m[[y - 1, x]])
        })
    };
    let pb = boundary(pred);
    let tb = boundary(truth);
    let mut hits = 0usize;
    let mut total = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !tb[[y, x]] {
                continue;
            }
            total += 1;
            let y_lo = y.saturating_sub(tol);
            let x_lo = x.saturating_sub(tol);
            let found = (y_lo..=(y + tol).min(h - 1))
                .any(|yy| (x_lo..=(x + tol).min(w - 1)).any(|xx| pb[[yy, xx]]));
            if found {
                hits += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

// ----- refinement --------------------------------------------------------------

/// A label map with per-segment totals and tight pixel bounds, ready to
/// refine many boxes.
#[derive(Debug, Clone)]
pub struct Superpixels {
    labels: Array2<u32>,
    count: Vec<u32>,
    /// Tight pixel bbox per segment: (x0, y0, x1, y1), inclusive.
    bounds: Vec<(usize, usize, usize, usize)>,
}

impl Superpixels {
    pub fn new(labels: Array2<u32>) -> Result<Self> {
        let (h, w) = labels.dim();
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        if max + 1 > w * h {
            return Err(Error::TooManySegments { k: max + 1, n: w * h });
        }
        let mut count = vec![0u32; max + 1];
        let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); max + 1];
        for ((y, x), &l) in labels.indexed_iter() {
            let l = l as usize;
            count[l] += 1;
            let b = &mut bounds[l];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        Ok(Superpixels { labels, count, bounds })
    }

    pub fn labels(&self) -> &Array2<u32> {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.count.len()
    }

    /// Label map as a 16-bit mask (for PGM dumps).
    pub fn to_mask16(&self) -> Result<Array2<u16>> {
        if self.count.len() > u16::MAX as usize + 1 {
            return Err(Error::TooManySegments {
                k: self.count.len(),
                n: u16::MAX as usize + 1,
            });
        }
        Ok(self.labels.mapv(|v| v as u16))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedBoxes {
    /// Joint bounds of the segments entirely inside the box (the box
    /// itself if there is no such segment).
    pub shrunk: NormalizedBox,
    /// Joint bounds of every segment the box touches; contains the box.
    pub expanded: NormalizedBox,
}

/// Snap a box to the superpixel support it covers.
pub fn refine_box(sp: &Superpixels, bbox: &NormalizedBox) -> Result<RefinedBoxes> {
    let (h, w) = sp.labels.dim();
    let (wf, hf) = (w as f64, h as f64);
    let x0 = ((bbox.x_min() * wf).floor() as usize).min(w - 1);
    let y0 = ((bbox.y_min() * hf).floor() as usize).min(h - 1);
    let x1 = (((bbox.x_max() * wf).ceil() as usize).saturating_sub(1)).clamp(x0, w - 1);
    let y1 = (((bbox.y_max() * hf).ceil() as usize).saturating_sub(1)).clamp(y0, h - 1);

    // single pass over the box region: per-label inside counts and the
    // joint bounds of the inside pixels
    let mut inside = vec![0u32; sp.count.len()];
    let mut region_bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); sp.count.len()];
    for y in y0..=y1 {
        for x in x0..=x1 {
            let l = sp.labels[[y, x]] as usize;
            inside[l] += 1;
            let b = &mut region_bounds[l];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
    }

    let mut shrunk: Option<(usize, usize, usize, usize)> = None;
    let mut expanded: Option<(usize, usize, usize, usize)> = None;
    let join = |acc: &mut Option<(usize, usize, usize, usize)>, b: (usize, usize, usize, usize)| {
        *acc = Some(match *acc {
            None => b,
            Some(a) => (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
        });
    };
    for l in 0..sp.count.len() {
        if inside[l] == 0 {
            continue;
        }
        if inside[l] == sp.count[l] {
            join(&mut shrunk, region_bounds[l]);
        }
        join(&mut expanded, sp.bounds[l]);
    }

    let to_box = |b: (usize, usize, usize, usize)| {
        NormalizedBox::new(
            b.0 as f64 / wf,
            b.1 as f64 / hf,
            (b.2 + 1) as f64 / wf,
            (b.3 + 1) as f64 / hf,
        )
    };
    Ok(RefinedBoxes {
        shrunk: match shrunk {
            Some(b) => to_box(b)?,
            None => *bbox,
        },
        expanded: match expanded {
            Some(b) => {
                // segment union covers the box raster, but the raster was
                // clipped to the image; keep the guarantee exact anyway
                let e = to_box(b)?;
                NormalizedBox::new(
                    e.x_min().min(bbox.x_min()),
                    e.y_min().min(bbox.y_min()),
                    e.x_max().max(bbox.x_max()),
                    e.y_max().max(bbox.y_max()),
                )?
            }
            None => *bbox,
        },
    })
}
