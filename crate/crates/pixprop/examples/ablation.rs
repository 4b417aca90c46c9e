//! Compare the four accumulative pipeline variants on one small run.
//!
//! ```sh
//! cargo run --example ablation
//! ```
//!
//! Variants build on each other: a single all-sizes localizer at one
//! scale, then size-confidence fusion of the two specialists, then the
//! second enlarged scale, then superpixel refinement. The table shows
//! average best overlap and recall improving (or not) step by step.

use pixprop::commands::{
    ablation_eval_opts, build_samples, run_ablation, train_ablation_nets, LARGE_NET,
};
use pixprop::config::RunConfig;
use pixprop::convnet::{default_trunk, localizer_spec};
use pixprop::synthdata::generate_scenes;

fn main() -> pixprop::Result<()> {
    let mut config = RunConfig::default();
    config.seed = 9;
    config.scene.width = 48;
    config.scene.height = 48;
    config.scene.area_max = 100.0;
    config.train.epochs = 8;
    config.train.batch_size = 4;
    config.pipeline.top_k_per_scale = 300;
    config.eval.n_values = vec![10, 100, 1000];
    config.eval.area_bin_n = 1000;

    let train_scenes = generate_scenes(&config.scene, config.seed, 12)?;
    let eval_scenes = generate_scenes(&config.scene, config.seed + 1, 6)?;

    let probe = localizer_spec(LARGE_NET, default_trunk());
    let samples = build_samples(&train_scenes, &probe, &config)?;
    println!("training 4 nets on {} scenes ...", samples.len());
    let nets = train_ablation_nets(&samples, &config, false)?;

    let opts = ablation_eval_opts(&config, config.scene.width, config.scene.height);
    let rows = run_ablation(&nets, &eval_scenes, &config, &opts)?;

    println!("\n{:<14} {:>6} {:<12} {:>9}", "variant", "n", "metric", "value");
    for (variant, n, metric, value) in &rows {
        if metric == "abo" || metric == "recall_0.50" {
            println!("{variant:<14} {n:>6} {metric:<12} {value:>9.4}");
        }
    }
    Ok(())
}
