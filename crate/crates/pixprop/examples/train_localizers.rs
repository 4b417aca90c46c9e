//! Train the three networks on a handful of scenes and watch the losses.
//!
//! ```sh
//! cargo run --example train_localizers
//! ```
//!
//! Generates a tiny training set, builds per-cell targets, then trains
//! the large-object localizer, the small-object localizer and the
//! confidence net from scratch for a few epochs each. Checkpoints land
//! in `runs/example_models` and reload bit-for-bit.

use pixprop::commands::{
    build_samples, checkpoint_rel_path, train_confidence_from_scratch,
    train_localizer_from_scratch, LARGE_NET, SMALL_NET,
};
use pixprop::config::RunConfig;
use pixprop::convnet::train::LocalizerKind;
use pixprop::convnet::{default_trunk, load_checkpoint, localizer_spec, save_checkpoint};
use pixprop::synthdata::generate_scenes;
use std::path::Path;

fn main() -> pixprop::Result<()> {
    let mut config = RunConfig::default();
    config.seed = 21;
    config.scene.width = 48;
    config.scene.height = 48;
    config.scene.area_max = 100.0;
    config.train.epochs = 6;
    config.train.batch_size = 4;

    let scenes = generate_scenes(&config.scene, config.seed, 12)?;
    let probe = localizer_spec(LARGE_NET, default_trunk());
    let samples = build_samples(&scenes, &probe, &config)?;
    println!("{} scenes -> {} samples\n", scenes.len(), samples.len());

    let show = |name: &str, history: &[f64]| {
        let first = history.first().copied().unwrap_or(0.0);
        let last = history.last().copied().unwrap_or(0.0);
        println!("{name:<12} loss {first:>10.4} -> {last:>10.4} over {} epochs", history.len());
    };

    let (large_spec, large, h) =
        train_localizer_from_scratch(LARGE_NET, LocalizerKind::Large, &samples, &config, false)?;
    show(LARGE_NET, &h);
    let (_, _, h) =
        train_localizer_from_scratch(SMALL_NET, LocalizerKind::Small, &samples, &config, false)?;
    show(SMALL_NET, &h);
    let (_, _, h) = train_confidence_from_scratch(&samples, &config, false)?;
    show("confidence", &h);

    let out = Path::new("runs/example_models");
    std::fs::create_dir_all(out).map_err(|e| pixprop::Error::io(out, e))?;
    let ckpt = out.join(checkpoint_rel_path(LARGE_NET));
    save_checkpoint(&large, &large_spec, &ckpt)?;
    let reloaded = load_checkpoint(&ckpt, &large_spec)?;
    assert_eq!(reloaded, large, "checkpoint round-trips exactly");
    println!("\ncheckpoint round-trip OK: {}", ckpt.display());
    Ok(())
}
