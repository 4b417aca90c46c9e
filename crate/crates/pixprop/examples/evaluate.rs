//! Drive the whole command chain in-process: gen, train, infer, eval.
//!
//! ```sh
//! cargo run --example evaluate
//! ```
//!
//! Exactly what the CLI does, minus the flags: every step writes its
//! outputs plus a manifest, every later step verifies the manifests of
//! its inputs, and the final report lands as CSV files under
//! `runs/example_eval/report`.

use pixprop::commands::{cmd_eval, cmd_gen, cmd_infer, cmd_train, paths_under};
use pixprop::config::RunConfig;
use std::path::Path;

fn main() -> pixprop::Result<()> {
    let base = Path::new("runs/example_eval");
    let mut config = RunConfig::default();
    config.seed = 42;
    config.gen.count = 16;
    config.scene.width = 48;
    config.scene.height = 48;
    config.scene.area_max = 100.0;
    config.train.epochs = 8;
    config.train.batch_size = 4;
    config.pipeline.top_k_per_scale = 300;
    config.eval.n_values = vec![10, 100, 1000];
    config.paths = paths_under(base);

    // train and eval sets drawn from disjoint seeds
    cmd_gen(&config, &config.paths.dataset.clone())?;
    let mut eval_gen = config.clone();
    eval_gen.seed = 43;
    eval_gen.gen.count = 8;
    cmd_gen(&eval_gen, &config.paths.eval_dataset.clone())?;

    cmd_train(&config, &config.paths.models.clone())?;
    cmd_infer(&config, &config.paths.proposals.clone())?;

    let report_dir = base.join("report");
    cmd_eval(&config, &report_dir)?;

    println!("\n--- recall.csv ---");
    let recall = std::fs::read_to_string(report_dir.join("recall.csv"))
        .map_err(|e| pixprop::Error::io(&report_dir, e))?;
    print!("{recall}");
    println!("--- ar.csv ---");
    let ar = std::fs::read_to_string(report_dir.join("ar.csv"))
        .map_err(|e| pixprop::Error::io(&report_dir, e))?;
    print!("{ar}");
    Ok(())
}
