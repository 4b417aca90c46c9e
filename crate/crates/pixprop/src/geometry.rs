//! Normalized boxes, IoU, ranked non-maximum suppression, proposal CSV.
//!
//! Boxes live in image-normalized coordinates so nothing downstream ever
//! cares about pixel dimensions: `(x_min, y_min, x_max, y_max)` with every
//! component in `[0, 1]`. Proposals carry a provenance tag (which scale and
//! refinement variant produced them, and from which grid cell) that doubles
//! as the deterministic tie-breaker wherever scores collide.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Axis-aligned box in normalized coordinates, `0 <= min <= max <= 1`
/// in both axes. Construction enforces the invariant; [`clip`] repairs
/// arbitrary raw predictions into one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl NormalizedBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let raw = [x_min, y_min, x_max, y_max];
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteBox(raw));
        }
        let ok = (0.0..=1.0).contains(&x_min)
            && (0.0..=1.0).contains(&y_min)
            && x_min <= x_max
            && x_max <= 1.0
            && y_min <= y_max
            && y_max <= 1.0;
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "box {raw:?} violates 0 <= min <= max <= 1"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Area as a fraction of the image, in `[0, 1]`.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Intersection over union.
///
/// Degenerate (zero-area) boxes have IoU 0 with everything, including
/// themselves; they can never suppress or be suppressed, but they rank like
/// any other proposal.
///
/// ```
/// use pixprop::geometry::{iou, NormalizedBox};
/// let a = NormalizedBox::new(0.0, 0.0, 0.5, 0.5).unwrap();
/// let b = NormalizedBox::new(0.25, 0.25, 0.75, 0.75).unwrap();
/// assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
/// assert_eq!(iou(&a, &a), 1.0);
/// ```
pub fn iou(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    let aa = a.area();
    let ab = b.area();
    if aa == 0.0 || ab == 0.0 {
        return 0.0;
    }
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (aa + ab - inter)
}

/// Repair a raw 4-tuple into a valid box: clamp every coordinate to
/// `[0, 1]`, then collapse any inverted axis to its midpoint (a raw
/// prediction with `x_min > x_max` becomes a zero-width box at the center
/// of the two values). Non-finite input is an error, never a silent fix.
pub fn clip(raw: [f64; 4]) -> Result<NormalizedBox> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteBox(raw));
    }
    let c = |v: f64| v.clamp(0.0, 1.0);
    let (mut x0, mut y0, mut x1, mut y1) = (c(raw[0]), c(raw[1]), c(raw[2]), c(raw[3]));
    if x0 > x1 {
        let m = 0.5 * (x0 + x1);
        x0 = m;
        x1 = m;
    }
    if y0 > y1 {
        let m = 0.5 * (y0 + y1);
        y0 = m;
        y1 = m;
    }
    NormalizedBox::new(x0, y0, x1, y1)
}

/// Which pass of the pipeline produced a proposal. `Original` sorts before
/// `Enlarged` so the tie-break prefers the unscaled pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scale {
    Original,
    Enlarged,
}

/// Refinement variant; `Initial` is the raw decoded box, the other two come
/// from superpixel refinement. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Initial,
    Shrunk,
    Expanded,
}

/// Provenance tag; its derived `Ord` is the crate-wide deterministic
/// tie-break for equal scores (scale, then variant, then grid cell index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Provenance {
    pub scale: Scale,
    pub variant: Variant,
    /// Row-major cell index in the grid that decoded this box.
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: NormalizedBox,
    /// Objectness in `[0, 1]` from the confidence network.
    pub score: f64,
    pub provenance: Provenance,
}

/// Sort proposals into ranking order: descending score, ties broken by
/// provenance. Total and deterministic (scores compare via `total_cmp`).
pub fn sort_for_ranking(proposals: &mut [Proposal]) {
    proposals.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.provenance.cmp(&b.provenance))
    });
}

/// Greedy non-maximum suppression at `threshold`.
///
/// Proposals are visited in ranking order; a candidate is dropped when its
/// IoU with an already-kept proposal is **strictly above** the threshold,
/// so a pair at exactly the threshold coexists. Output stays in ranking
/// order.
pub fn nms(mut proposals: Vec<Proposal>, threshold: f64) -> Vec<Proposal> {
    debug_assert!((0.0..=1.0).contains(&threshold));
    sort_for_ranking(&mut proposals);
    let mut kept: Vec<Proposal> = Vec::new();
    'cand: for p in proposals {
        for k in &kept {
            if iou(&k.bbox, &p.bbox) > threshold {
                continue 'cand;
            }
        }
        kept.push(p);
    }
    kept
}

// ----- proposal CSV ---------------------------------------------------------

/// Header of the proposal CSV.
pub const PROPOSAL_CSV_HEADER: &str = "image_id,x_min,y_min,x_max,y_max,score";

/// Render proposals as CSV text. `per_image` must be sorted by image id and
/// each list already in ranking order (the pipeline emits both); values are
/// printed with exactly six decimals so identical runs give identical bytes.
pub fn proposals_to_csv(per_image: &[(u64, Vec<Proposal>)]) -> String {
    let mut out = String::new();
    out.push_str(PROPOSAL_CSV_HEADER);
    out.push('\n');
    for (image_id, proposals) in per_image {
        for p in proposals {
            let b = p.bbox;
            let _ = writeln!(
                out,
                "{image_id},{:.6},{:.6},{:.6},{:.6},{:.6}",
                b.x_min, b.y_min, b.x_max, b.y_max, p.score
            );
        }
    }
    out
}

/// Parse the proposal CSV back into per-image ranked `(box, score)` lists.
/// Row order within an image is preserved (it is the ranking).
pub fn parse_proposals_csv(text: &str) -> Result<BTreeMap<u64, Vec<(NormalizedBox, f64)>>> {
    let bad = |line: usize, msg: &str| {
        Err(Error::Parse {
            path: "<proposal csv>".into(),
            msg: format!("line {}: {msg}", line + 1),
        })
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PROPOSAL_CSV_HEADER => {}
        _ => return bad(0, "missing proposal CSV header"),
    }
    let mut map: BTreeMap<u64, Vec<(NormalizedBox, f64)>> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return bad(i, "expected 6 fields");
        }
        let id: u64 = match fields[0].trim().parse() {
            Ok(v) => v,
            Err(_) => return bad(i, "bad image id"),
        };
        let mut vals = [0.0f64; 5];
        for (j, f) in fields[1..].iter().enumerate() {
            match f.trim().parse() {
                Ok(v) => vals[j] = v,
                Err(_) => return bad(i, "bad numeric field"),
            }
        }
        let bbox = NormalizedBox::new(vals[0], vals[1], vals[2], vals[3])?;
        map.entry(id).or_default().push((bbox, vals[4]));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> NormalizedBox {
        NormalizedBox::new(x0, y0, x1, y1).unwrap()
    }

    fn prop(b: NormalizedBox, score: f64, scale: Scale, variant: Variant, cell: usize) -> Proposal {
        Proposal {
            bbox: b,
            score,
            provenance: Provenance {
                scale,
                variant,
                cell,
            },
        }
    }

    /// Counting oracle for IoU: sample the unit square on a fine grid and
    /// count points falling in each box / both boxes.
    fn iou_by_rasterization(a: &NormalizedBox, b: &NormalizedBox, n: usize) -> f64 {
        let inside = |bb: &NormalizedBox, x: f64, y: f64| {
            x >= bb.x_min() && x < bb.x_max() && y >= bb.y_min() && y < bb.y_max()
        };
        let (mut ca, mut cb, mut ci) = (0u64, 0u64, 0u64);
        for r in 0..n {
            let y = (r as f64 + 0.5) / n as f64;
            for c in 0..n {
                let x = (c as f64 + 0.5) / n as f64;
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                ca += ia as u64;
                cb += ib as u64;
                ci += (ia && ib) as u64;
            }
        }
        let union = ca + cb - ci;
        if union == 0 {
            0.0
        } else {
            ci as f64 / union as f64
        }
    }

    #[test]
    fn quarter_overlap_is_one_seventh() {
        let a = bx(0.0, 0.0, 0.5, 0.5);
        let b = bx(0.25, 0.25, 0.75, 0.75);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        // independent counting oracle on a 4000x4000 grid
        assert!((iou(&a, &b) - iou_by_rasterization(&a, &b, 4000)).abs() < 1e-3);
    }

    #[test]
    fn identical_disjoint_and_degenerate() {
        let a = bx(0.1, 0.1, 0.4, 0.4);
        assert_eq!(iou(&a, &a), 1.0);
        let far = bx(0.6, 0.6, 0.9, 0.9);
        assert_eq!(iou(&a, &far), 0.0);
        let point = bx(0.3, 0.3, 0.3, 0.3);
        assert_eq!(iou(&point, &point), 0.0, "zero-area boxes match nothing");
        assert_eq!(iou(&point, &a), 0.0);
    }

    #[test]
    fn clip_collapses_inverted_axes_to_midpoint() {
        let b = clip([0.6, 0.1, 0.4, 0.9]).unwrap();
        assert_eq!(b.as_array(), [0.5, 0.1, 0.5, 0.9]);
        let c = clip([-0.2, 1.5, 0.4, 1.7]).unwrap();
        assert_eq!(c.as_array(), [0.0, 1.0, 0.4, 1.0]);
        assert!(clip([f64::NAN, 0.0, 1.0, 1.0]).is_err());
        assert!(clip([0.0, f64::INFINITY, 1.0, 1.0]).is_err());
    }

    #[test]
    fn nms_suppresses_strictly_above_threshold() {
        let a = bx(0.0, 0.0, 0.5, 0.5);
        let kept = nms(
            vec![
                prop(a, 0.9, Scale::Original, Variant::Initial, 0),
                prop(a, 0.8, Scale::Original, Variant::Initial, 1),
            ],
            0.8,
        );
        assert_eq!(kept.len(), 1, "identical boxes: lower score suppressed");
        assert_eq!(kept[0].score, 0.9);

        // Two side-by-side boxes sharing exactly half their union: IoU = 1/3,
        // exactly at the threshold -> both kept (suppression is strict).
        let l = bx(0.0, 0.0, 0.4, 0.4);
        let r = bx(0.2, 0.0, 0.6, 0.4);
        assert!((iou(&l, &r) - 1.0 / 3.0).abs() < 1e-12);
        let kept = nms(
            vec![
                prop(l, 0.9, Scale::Original, Variant::Initial, 0),
                prop(r, 0.7, Scale::Original, Variant::Initial, 1),
            ],
            1.0 / 3.0,
        );
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn ranking_breaks_ties_by_provenance() {
        let a = bx(0.0, 0.0, 0.1, 0.1);
        let b = bx(0.5, 0.5, 0.6, 0.6);
        let c = bx(0.0, 0.5, 0.1, 0.6);
        let mut v = vec![
            prop(a, 0.5, Scale::Enlarged, Variant::Initial, 0),
            prop(b, 0.5, Scale::Original, Variant::Expanded, 2),
            prop(c, 0.5, Scale::Original, Variant::Initial, 9),
        ];
        sort_for_ranking(&mut v);
        let tags: Vec<_> = v
            .iter()
            .map(|p| (p.provenance.scale, p.provenance.variant, p.provenance.cell))
            .collect();
        assert_eq!(
            tags,
            vec![
                (Scale::Original, Variant::Initial, 9),
                (Scale::Original, Variant::Expanded, 2),
                (Scale::Enlarged, Variant::Initial, 0),
            ]
        );
    }

    #[test]
    fn csv_round_trip_and_fixed_format() {
        let rows = vec![(
            3u64,
            vec![
                prop(bx(0.0, 0.25, 0.5, 1.0), 0.875, Scale::Original, Variant::Initial, 0),
                prop(bx(0.1, 0.1, 0.2, 0.2), 0.25, Scale::Original, Variant::Initial, 1),
            ],
        )];
        let text = proposals_to_csv(&rows);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "3,0.000000,0.250000,0.500000,1.000000,0.875000"
        );
        let parsed = parse_proposals_csv(&text).unwrap();
        assert_eq!(parsed[&3].len(), 2);
        assert_eq!(parsed[&3][0].1, 0.875);
        assert_eq!(parsed[&3][1].0.as_array(), [0.1, 0.1, 0.2, 0.2]);
        assert!(parse_proposals_csv("nope\n1,2,3").is_err());
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(
            ax in 0.0f64..1.0, ay in 0.0f64..1.0, aw in 0.0f64..1.0, ah in 0.0f64..1.0,
            bx_ in 0.0f64..1.0, by in 0.0f64..1.0, bw in 0.0f64..1.0, bh in 0.0f64..1.0,
        ) {
            let a = clip([ax, ay, ax + aw, ay + ah]).unwrap();
            let b = clip([bx_, by, bx_ + bw, by + bh]).unwrap();
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn clip_is_idempotent(a in 0.0f64..1.0, b in 0.0f64..1.0, c in -2.0f64..2.0, d in -2.0f64..2.0) {
            let once = clip([a, b, c, d]).unwrap();
            let twice = clip(once.as_array()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn nms_output_is_subset_and_stable(
            seeds in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.01f64..0.6, 0.01f64..0.6, 0.0f64..1.0), 1..40),
            threshold in 0.0f64..1.0,
        ) {
            let props: Vec<Proposal> = seeds.iter().enumerate().map(|(i, &(x, y, w, h, s))| {
                // quantize scores so ties actually happen
                let score = (s * 8.0).round() / 8.0;
                prop(clip([x, y, x + w, y + h]).unwrap(), score, Scale::Original, Variant::Initial, i)
            }).collect();
            let kept = nms(props.clone(), threshold);
            prop_assert!(kept.iter().all(|k| props.contains(k)));
            // suppression is idempotent: survivors survive a second pass
            let again = nms(kept.clone(), threshold);
            prop_assert_eq!(again, kept);
        }
    }
}
