//! Run the full proposal pipeline on one scene and inspect the output.
//!
//! ```sh
//! cargo run --example propose
//! ```
//!
//! Trains quickly on a small set, then walks one held-out scene through
//! the whole chain — confidence forward pass, fused scale-specialist
//! localizers, a second enlarged scale, superpixel refinement, ranking
//! and non-maximum suppression — and prints the top proposals next to
//! the ground truth with their best IoU.

use pixprop::commands::{
    build_samples, train_confidence_from_scratch, train_localizer_from_scratch, LARGE_NET,
    SMALL_NET,
};
use pixprop::config::RunConfig;
use pixprop::convnet::train::LocalizerKind;
use pixprop::convnet::{default_trunk, localizer_spec};
use pixprop::geometry::iou;
use pixprop::pipeline::{propose, Localizers, PipelineNets};
use pixprop::synthdata::generate_scenes;

fn main() -> pixprop::Result<()> {
    let mut config = RunConfig::default();
    config.seed = 33;
    config.scene.width = 48;
    config.scene.height = 48;
    config.scene.area_max = 100.0;
    config.train.epochs = 10;
    config.train.batch_size = 4;
    config.pipeline.top_k_per_scale = 300;

    let scenes = generate_scenes(&config.scene, config.seed, 13)?;
    let (held_out, train_scenes) = scenes.split_first().expect("non-empty");
    let probe = localizer_spec(LARGE_NET, default_trunk());
    let samples = build_samples(train_scenes, &probe, &config)?;
    println!("training on {} scenes ...", samples.len());

    let (large_spec, large, _) =
        train_localizer_from_scratch(LARGE_NET, LocalizerKind::Large, &samples, &config, false)?;
    let (small_spec, small, _) =
        train_localizer_from_scratch(SMALL_NET, LocalizerKind::Small, &samples, &config, false)?;
    let (conf_spec, conf, _) = train_confidence_from_scratch(&samples, &config, false)?;
    let nets = PipelineNets {
        localizers: Localizers::Fused {
            large: (large_spec, large),
            small: (small_spec, small),
        },
        confidence: (conf_spec, conf),
    };

    let proposals = propose(&held_out.image, &nets, &config.pipeline)?;
    println!(
        "held-out scene: {} instances, {} proposals after NMS\n",
        held_out.instances.len(),
        proposals.len()
    );

    println!("top 10 by score:");
    println!("{:>4} {:>7}  {:<28} {:>8}  provenance", "rank", "score", "box", "best IoU");
    for (rank, p) in proposals.iter().take(10).enumerate() {
        let best = held_out
            .boxes()
            .iter()
            .map(|t| iou(&p.bbox, t))
            .fold(0.0_f64, f64::max);
        let b = p.bbox.as_array().map(|v| (v * 100.0).round() / 100.0);
        println!(
            "{:>4} {:>7.4}  {:<28} {:>8.3}  {:?}/{:?}",
            rank, p.score, format!("{b:?}"), best, p.provenance.scale, p.provenance.variant
        );
    }

    // how well is each true object covered anywhere in the pool?
    println!("\ncoverage of ground truth (best IoU over all proposals):");
    for inst in &held_out.instances {
        let best = proposals
            .iter()
            .map(|p| iou(&p.bbox, &inst.bbox))
            .fold(0.0_f64, f64::max);
        println!("  instance {} (area {:>4}): {best:.3}", inst.id, inst.area);
    }
    Ok(())
}
