//! End-to-end proposal pipeline: per-scale decode, confidence-weighted
//! fusion, multi-scale pooling, superpixel refinement, ranking, and
//! non-maximum suppression.
//!
//! For each inference scale (the original image, plus a bilinear
//! enlargement when multi-scale is on) the pipeline runs the localizers
//! and the confidence net, fuses the two specialists' grids under the
//! size-confidence map, decodes every cell into a clipped box scored by
//! objectness, and keeps the top candidates per scale. Boxes are
//! normalized, and enlargement preserves the field of view, so enlarged-
//! scale boxes need no coordinate mapping — only their provenance tag
//! differs. Refinement then segments the original image once and adds a
//! shrunk and an expanded variant per kept candidate. Everything is
//! pooled, rank-ordered (score descending, provenance as the
//! deterministic tie-break), and filtered by greedy NMS.
//!
//! The pipeline draws no randomness: identical inputs give bit-identical
//! proposals regardless of worker count or invocation order.

use crate::convnet::{
    center_image, forward, ModelState, NetworkSpec, HEAD_BOX, HEAD_OBJECTNESS, HEAD_SIZE,
};
use crate::geometry::{clip, nms, sort_for_ranking, Proposal, Provenance, Scale, Variant};
use crate::gridcodec::PredictionGrid;
use crate::scalefusion::{enlarge_image, fuse};
use crate::superpix::{default_segment_count, refine_box, slic, SlicParams, Superpixels};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

// ----- configuration -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Initial candidates kept per scale (by rank) before refinement.
    pub top_k_per_scale: usize,
    /// Greedy NMS keeps a candidate unless IoU with a kept box is
    /// strictly above this.
    pub nms_threshold: f64,
    /// Integer upsampling factor for the second scale.
    pub enlargement_factor: usize,
    /// Run the enlarged scale at all.
    pub multi_scale: bool,
    /// Add superpixel-refined variants of every kept candidate.
    pub refine: bool,
    /// Superpixel count for refinement; 0 picks one segment per 64 pixels.
    pub slic_segments: usize,
    pub slic_compactness: f64,
    pub slic_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            top_k_per_scale: 2000,
            nms_threshold: 0.8,
            enlargement_factor: 2,
            multi_scale: true,
            refine: true,
            slic_segments: 0,
            slic_compactness: 10.0,
            slic_iterations: 10,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pipeline config: {m}")));
        if self.top_k_per_scale == 0 {
            return bad("top_k_per_scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            return bad("nms_threshold must be in [0, 1]");
        }
        if self.multi_scale && self.enlargement_factor < 2 {
            return Err(Error::BadEnlargementFactor(self.enlargement_factor as f64));
        }
        if self.refine && (self.slic_iterations == 0 || !(self.slic_compactness > 0.0)) {
            return bad("refinement needs slic_iterations >= 1 and slic_compactness > 0");
        }
        Ok(())
    }

    fn slic_params(&self, n_pixels: usize) -> SlicParams {
        SlicParams {
            segments: if self.slic_segments == 0 {
                default_segment_count(n_pixels)
            } else {
                self.slic_segments
            },
            compactness: self.slic_compactness,
            iterations: self.slic_iterations,
        }
    }
}

// ----- networks ------------------------------------------------------------------

/// The localizer side of the pipeline: either the two scale specialists
/// fused under the size confidence, or one all-sizes net (the ablation
/// baseline, which ignores the size branch).
pub enum Localizers {
    Fused {
        large: (NetworkSpec, ModelState),
        small: (NetworkSpec, ModelState),
    },
    Single((NetworkSpec, ModelState)),
}

/// Everything the pipeline needs to run.
pub struct PipelineNets {
    pub localizers: Localizers,
    pub confidence: (NetworkSpec, ModelState),
}

// ----- inference ------------------------------------------------------------------

/// Decode one scale of one image into clipped, scored, rank-ordered
/// candidates, truncated to the per-scale budget.
fn decode_scale(
    image: &Array3<f64>,
    scale: Scale,
    nets: &PipelineNets,
    config: &PipelineConfig,
) -> Result<Vec<Proposal>> {
    let centered = center_image(image);
    let conf = forward(&nets.confidence.1, &nets.confidence.0, &centered)?;
    let objectness = conf.positive_prob(HEAD_OBJECTNESS)?;

    let fused: PredictionGrid = match &nets.localizers {
        Localizers::Fused { large, small } => {
            let z = conf.positive_prob(HEAD_SIZE)?;
            let lp = forward(&large.1, &large.0, &centered)?;
            let sp = forward(&small.1, &small.0, &centered)?;
            fuse(lp.boxes(HEAD_BOX)?, sp.boxes(HEAD_BOX)?, &z)?
        }
        Localizers::Single((spec, state)) => forward(state, spec, &centered)?.boxes(HEAD_BOX)?.clone(),
    };
    let g = fused.geometry();
    if objectness.dim() != (g.grid_h, g.grid_w) {
        return Err(Error::ShapeMismatch(format!(
            "confidence grid {:?} vs localizer grid {}x{}",
            objectness.dim(),
            g.grid_h,
            g.grid_w
        )));
    }

    let mut candidates = Vec::with_capacity(g.grid_h * g.grid_w);
    for r in 0..g.grid_h {
        for c in 0..g.grid_w {
            let bbox = clip(fused.cell(r, c))?;
            candidates.push(Proposal {
                bbox,
                score: objectness[[r, c]],
                provenance: Provenance {
                    scale,
                    variant: Variant::Initial,
                    cell: g.cell_index(r, c),
                },
            });
        }
    }
    sort_for_ranking(&mut candidates);
    candidates.truncate(config.top_k_per_scale);
    Ok(candidates)
}

/// Superpixels of the original image, as refinement uses them.
pub fn segment_for_refinement(image: &Array3<f64>, config: &PipelineConfig) -> Result<Superpixels> {
    let (_, h, w) = image.dim();
    let labels = slic(image, &config.slic_params(w * h))?;
    Superpixels::new(labels)
}

/// Run the full pipeline on one raw `[0, 1]` RGB image.
pub fn propose(
    image: &Array3<f64>,
    nets: &PipelineNets,
    config: &PipelineConfig,
) -> Result<Vec<Proposal>> {
    config.validate()?;
    let mut pool = decode_scale(image, Scale::Original, nets, config)?;
    if config.multi_scale {
        let enlarged = enlarge_image(image, config.enlargement_factor)?;
        pool.extend(decode_scale(&enlarged, Scale::Enlarged, nets, config)?);
    }

    if config.refine {
        let sp = segment_for_refinement(image, config)?;
        let mut refined = Vec::with_capacity(2 * pool.len());
        for p in &pool {
            let r = refine_box(&sp, &p.bbox)?;
            for (variant, bbox) in [(Variant::Shrunk, r.shrunk), (Variant::Expanded, r.expanded)] {
                refined.push(Proposal {
                    bbox,
                    score: p.score,
                    provenance: Provenance {
                        variant,
                        ..p.provenance
                    },
                });
            }
        }
        pool.extend(refined);
    }

    Ok(nms(pool, config.nms_threshold))
}

/// Objectness heat map of the original scale (handy for inspection).
pub fn objectness_map(image: &Array3<f64>, nets: &PipelineNets) -> Result<Array2<f64>> {
    let pass = forward(&nets.confidence.1, &nets.confidence.0, &center_image(image))?;
    pass.positive_prob(HEAD_OBJECTNESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{confidence_spec, default_trunk, init, localizer_spec};
    use crate::geometry::iou;
    use crate::synthdata::{generate_scene, SceneConfig};

    fn random_nets(seed: u64) -> PipelineNets {
        let large_spec = localizer_spec("large", default_trunk());
        let small_spec = localizer_spec("small", default_trunk());
        let conf_spec = confidence_spec(default_trunk(), 32);
        let large = init(&large_spec, seed).unwrap();
        let small = init(&small_spec, seed).unwrap();
        let conf = init(&conf_spec, seed).unwrap();
        PipelineNets {
            localizers: Localizers::Fused {
                large: (large_spec, large),
                small: (small_spec, small),
            },
            confidence: (conf_spec, conf),
        }
    }

    fn scene_image() -> Array3<f64> {
        generate_scene(&SceneConfig::default(), 77, 0).unwrap().image
    }

    #[test]
    fn pipeline_is_deterministic_and_rank_ordered() {
        let nets = random_nets(5);
        let img = scene_image();
        let cfg = PipelineConfig::default();
        let a = propose(&img, &nets, &cfg).unwrap();
        let b = propose(&img, &nets, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        for w in a.windows(2) {
            assert!(w[0].score >= w[1].score, "scores must be non-increasing");
        }
        for p in &a {
            let bb = p.bbox.as_array();
            assert!(bb.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn nms_filter_holds_on_the_output() {
        let nets = random_nets(6);
        let img = scene_image();
        let cfg = PipelineConfig {
            nms_threshold: 0.5,
            ..PipelineConfig::default()
        };
        let out = propose(&img, &nets, &cfg).unwrap();
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                assert!(
                    iou(&out[i].bbox, &out[j].bbox) <= 0.5 + 1e-12,
                    "kept pair above the NMS threshold"
                );
            }
        }
    }

    #[test]
    fn scales_and_variants_show_up_in_provenance() {
        let nets = random_nets(7);
        let img = scene_image();
        let cfg = PipelineConfig {
            nms_threshold: 1.0, // keep everything: provenance census
            ..PipelineConfig::default()
        };
        let out = propose(&img, &nets, &cfg).unwrap();
        let has = |f: &dyn Fn(&Proposal) -> bool| out.iter().any(|p| f(p));
        assert!(has(&|p| p.provenance.scale == Scale::Original));
        assert!(has(&|p| p.provenance.scale == Scale::Enlarged));
        assert!(has(&|p| p.provenance.variant == Variant::Shrunk));
        assert!(has(&|p| p.provenance.variant == Variant::Expanded));
        // original 16x16 grid + enlarged 32x32 grid, each tripled by
        // refinement, all kept at threshold 1.0
        assert_eq!(out.len(), 3 * (256 + 1024));

        let single = propose(
            &img,
            &nets,
            &PipelineConfig {
                multi_scale: false,
                refine: false,
                nms_threshold: 1.0,
                ..PipelineConfig::default()
            },
        )
        .unwrap();
        assert_eq!(single.len(), 256);
        assert!(single.iter().all(|p| p.provenance.scale == Scale::Original
            && p.provenance.variant == Variant::Initial));
    }

    #[test]
    fn per_scale_budget_truncates_before_refinement() {
        let nets = random_nets(8);
        let img = scene_image();
        let cfg = PipelineConfig {
            top_k_per_scale: 10,
            nms_threshold: 1.0,
            ..PipelineConfig::default()
        };
        let out = propose(&img, &nets, &cfg).unwrap();
        assert_eq!(out.len(), 2 * 10 * 3);
    }

    #[test]
    fn single_localizer_bank_runs_without_fusion() {
        let spec = localizer_spec("all", default_trunk());
        let state = init(&spec, 9).unwrap();
        let conf_spec = confidence_spec(default_trunk(), 32);
        let conf = init(&conf_spec, 9).unwrap();
        let nets = PipelineNets {
            localizers: Localizers::Single((spec, state)),
            confidence: (conf_spec, conf),
        };
        let out = propose(
            &scene_image(),
            &nets,
            &PipelineConfig {
                multi_scale: false,
                refine: false,
                ..PipelineConfig::default()
            },
        )
        .unwrap();
        assert!(!out.is_empty());
    }

    #[test]
    fn config_validation_catches_nonsense() {
        let img = scene_image();
        let nets = random_nets(10);
        let bad = PipelineConfig {
            nms_threshold: 1.5,
            ..PipelineConfig::default()
        };
        assert!(propose(&img, &nets, &bad).is_err());
        let bad = PipelineConfig {
            enlargement_factor: 1,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            propose(&img, &nets, &bad),
            Err(Error::BadEnlargementFactor(_))
        ));
    }
}
