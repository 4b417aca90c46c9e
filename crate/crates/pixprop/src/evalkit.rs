//! Proposal-quality metrics: recall at IoU thresholds, average recall,
//! average best overlap, and per-area-bin ABO.
//!
//! All aggregates pool instances across the whole dataset (they are not
//! means of per-scene values). For a prefix budget `n`, each instance's
//! best overlap (BO) is its highest IoU with the first `n` proposals of
//! its scene, taken in the order given — rank order as the pipeline wrote
//! it. Recall at `(iou, n)` is the fraction of instances with BO at or
//! above the threshold; average recall (AR) averages recall over the IoU
//! grid 0.50, 0.55, …, 0.95; ABO averages BO itself.

use crate::geometry::{iou, NormalizedBox};
use crate::synthdata::InstanceRecord;
use crate::{Error, Result};

/// The IoU grid that average recall integrates over.
pub const AR_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// One scene's evaluation input: ground truth plus ranked proposals.
#[derive(Debug, Clone)]
pub struct EvalScene {
    pub instances: Vec<InstanceRecord>,
    /// Proposal boxes in ranking order (scores already folded into the order).
    pub proposals: Vec<NormalizedBox>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Proposal budgets, ascending.
    pub n_values: Vec<usize>,
    /// IoU thresholds for the recall table.
    pub iou_thresholds: Vec<f64>,
    /// Ascending upper bounds of the area bins; a final open bin catches
    /// everything larger.
    pub area_edges: Vec<u64>,
    /// Budget at which the per-area-bin ABO is computed.
    pub area_bin_n: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_values: vec![10, 100, 1000],
            iou_thresholds: vec![0.5, 0.7, 0.8],
            area_edges: vec![31, 256],
            area_bin_n: 1000,
        }
    }
}

impl EvalOptions {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("eval options: {m}")));
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_values must be non-empty and strictly ascending");
        }
        if self.n_values[0] == 0 {
            return bad("budgets must be positive");
        }
        if self.iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("iou thresholds must be in [0, 1]");
        }
        if self.area_edges.windows(2).any(|w| w[0] >= w[1]) {
            return bad("area_edges must be strictly ascending");
        }
        if self.area_bin_n == 0 {
            return bad("area_bin_n must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaBin {
    /// Exclusive lower bound (0 for the first bin).
    pub lo: u64,
    /// Inclusive upper bound; `None` for the open last bin.
    pub hi: Option<u64>,
    pub instances: usize,
    pub abo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(n, iou, recall)` for every budget and threshold.
    pub recall: Vec<(usize, f64, f64)>,
    /// `(n, average recall)` per budget.
    pub ar: Vec<(usize, f64)>,
    /// `(n, average best overlap)` per budget.
    pub abo: Vec<(usize, f64)>,
    /// Per-area-bin ABO at budget `area_bin_n`.
    pub area_abo: Vec<AreaBin>,
    pub total_instances: usize,
}

/// Fraction of best overlaps at or above a threshold.
pub fn recall_at(best_overlaps: &[f64], iou_threshold: f64) -> f64 {
    if best_overlaps.is_empty() {
        return 0.0;
    }
    let hits = best_overlaps.iter().filter(|&&b| b >= iou_threshold).count();
    hits as f64 / best_overlaps.len() as f64
}

/// Mean recall over the standard IoU grid.
pub fn average_recall(best_overlaps: &[f64]) -> f64 {
    AR_THRESHOLDS.iter().map(|&t| recall_at(best_overlaps, t)).sum::<f64>()
        / AR_THRESHOLDS.len() as f64
}

pub fn average_best_overlap(best_overlaps: &[f64]) -> f64 {
    if best_overlaps.is_empty() {
        return 0.0;
    }
    best_overlaps.iter().sum::<f64>() / best_overlaps.len() as f64
}

/// Each instance's best IoU against the first `n` proposals.
pub fn best_overlaps(instances: &[InstanceRecord], proposals: &[NormalizedBox], n: usize) -> Vec<f64> {
    instances
        .iter()
        .map(|inst| {
            proposals
                .iter()
                .take(n)
                .map(|p| iou(&inst.bbox, p))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Evaluate ranked proposals against ground truth, pooling instances over
/// all scenes. Errors if the dataset holds no instances at all.
pub fn evaluate(scenes: &[EvalScene], opts: &EvalOptions) -> Result<EvalReport> {
    opts.validate()?;
    let total: usize = scenes.iter().map(|s| s.instances.len()).sum();
    if total == 0 {
        return Err(Error::Config("nothing to evaluate: no ground-truth instances".into()));
    }

    // pooled best overlaps per budget, built incrementally per scene:
    // extend the proposal scan between consecutive budgets instead of
    // rescanning the prefix
    let mut pooled: Vec<Vec<f64>> = vec![Vec::with_capacity(total); opts.n_values.len()];
    let mut pooled_areas: Vec<u64> = Vec::with_capacity(total);
    let area_bin_idx = opts.n_values.iter().position(|&n| n == opts.area_bin_n);
    let mut area_bos: Vec<f64> = Vec::with_capacity(total);

    for scene in scenes {
        if scene.instances.is_empty() {
            continue;
        }
        let mut best = vec![0.0f64; scene.instances.len()];
        let mut scanned = 0usize;
        let mut at_budget: Vec<Vec<f64>> = Vec::with_capacity(opts.n_values.len());
        for &n in &opts.n_values {
            let upto = n.min(scene.proposals.len());
            for p in &scene.proposals[scanned..upto] {
                for (bi, inst) in scene.instances.iter().enumerate() {
                    let v = iou(&inst.bbox, p);
                    if v > best[bi] {
                        best[bi] = v;
                    }
                }
            }
            scanned = scanned.max(upto);
            at_budget.push(best.clone());
        }
        // the area table may use a budget outside n_values
        let bo_for_areas = match area_bin_idx {
            Some(i) => at_budget[i].clone(),
            None => best_overlaps(&scene.instances, &scene.proposals, opts.area_bin_n),
        };
        for (i, bos) in at_budget.into_iter().enumerate() {
            pooled[i].extend(bos);
        }
        area_bos.extend(bo_for_areas);
        pooled_areas.extend(scene.instances.iter().map(|inst| inst.area));
    }

    let mut recall = Vec::new();
    let mut ar = Vec::new();
    let mut abo = Vec::new();
    for (i, &n) in opts.n_values.iter().enumerate() {
        for &t in &opts.iou_thresholds {
            recall.push((n, t, recall_at(&pooled[i], t)));
        }
        ar.push((n, average_recall(&pooled[i])));
        abo.push((n, average_best_overlap(&pooled[i])));
    }

    let n_bins = opts.area_edges.len() + 1;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&a, &bo) in pooled_areas.iter().zip(&area_bos) {
        let bin = opts.area_edges.iter().position(|&e| a <= e).unwrap_or(opts.area_edges.len());
        sums[bin] += bo;
        counts[bin] += 1;
    }
    let area_abo = (0..n_bins)
        .map(|b| AreaBin {
            lo: if b == 0 { 0 } else { opts.area_edges[b - 1] },
            hi: opts.area_edges.get(b).copied(),
            instances: counts[b],
            abo: if counts[b] > 0 { sums[b] / counts[b] as f64 } else { 0.0 },
        })
        .collect();

    Ok(EvalReport {
        recall,
        ar,
        abo,
        area_abo,
        total_instances: total,
    })
}

// ----- report CSVs -------------------------------------------------------------

pub fn recall_csv(report: &EvalReport) -> String {
    let mut out = String::from("n,iou,recall\n");
    for &(n, t, r) in &report.recall {
        out.push_str(&format!("{n},{t:.2},{r:.6}\n"));
    }
    out
}

pub fn ar_csv(report: &EvalReport) -> String {
    let mut out = String::from("n,ar\n");
    for &(n, v) in &report.ar {
        out.push_str(&format!("{n},{v:.6}\n"));
    }
    out
}

pub fn abo_csv(report: &EvalReport) -> String {
    let mut out = String::from("n,abo\n");
    for &(n, v) in &report.abo {
        out.push_str(&format!("{n},{v:.6}\n"));
    }
    out
}

/// Per-area-bin ABO; empty bins are omitted and the open bin's upper bound
/// prints as `inf`.
pub fn area_abo_csv(report: &EvalReport) -> String {
    let mut out = String::from("area_lo,area_hi,abo\n");
    for bin in &report.area_abo {
        if bin.instances == 0 {
            continue;
        }
        let hi = match bin.hi {
            Some(h) => h.to_string(),
            None => "inf".to_string(),
        };
        out.push_str(&format!("{},{hi},{:.6}\n", bin.lo, bin.abo));
    }
    out
}
