//! The five operator commands: `gen`, `train`, `infer`, `eval`, `ablate`.
//!
//! Each command is a plain function over a resolved [`RunConfig`] plus an
//! output directory, so they are callable from tests and examples exactly
//! as the binary calls them. Inputs are read through their manifests
//! ([`Manifest::load_verified`]), so a command refuses to run on artifacts
//! whose content hashes no longer match. Outputs are written together
//! with a fresh manifest, closing the provenance chain from dataset to
//! report.
//!
//! Commands draw all randomness through the derived-stream scheme and
//! reduce parallel work in deterministic order, so reruns with the same
//! config and seed produce byte-identical artifacts at any worker count.

use crate::config::{
    area_threshold, config_sha256, Manifest, PathsConfig, RunConfig, MANIFEST_NAME,
};
use crate::convnet::train::{
    train_confidence, train_localizer, LocalizerKind, TrainOptions, TrainSample,
};
use crate::convnet::{
    confidence_spec, default_trunk, init, load_checkpoint, localizer_spec, save_checkpoint,
    ModelState, NetworkSpec, Schedule,
};
use crate::evalkit::{evaluate, EvalOptions, EvalReport, EvalScene};
use crate::geometry::{proposals_to_csv, parse_proposals_csv, NormalizedBox, Proposal};
use crate::gridcodec::targets_from_instances;
use crate::pipeline::{propose, Localizers, PipelineConfig, PipelineNets};
use crate::synthdata::{
    generate_scene, load_dataset, parse_instances_csv, write_dataset, Scene, INSTANCES_REL_PATH,
};
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const LARGE_NET: &str = "large";
pub const SMALL_NET: &str = "small";
pub const ALL_SIZES_NET: &str = "all_sizes";

pub fn checkpoint_rel_path(net: &str) -> String {
    format!("{net}.ckpt")
}

pub const LOSS_HISTORY_REL_PATH: &str = "loss_history.csv";
pub const PROPOSALS_REL_PATH: &str = "proposals.csv";
pub const ABLATION_REL_PATH: &str = "ablation.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(root: &Path, rel: &str, text: &str) -> Result<()> {
    let path = root.join(rel);
    std::fs::write(&path, text.as_bytes()).map_err(|e| Error::io(&path, e))
}

/// Run a closure inside a rayon pool of the requested width (0 = one
/// worker per core). Worker count affects wall time only, never output.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(), // pool creation only fails on exotic configs; run inline
    }
}

// ----- gen -----------------------------------------------------------------------

/// Generate the configured number of scenes into `out`.
pub fn cmd_gen(config: &RunConfig, out: &Path) -> Result<()> {
    config.scene.validate()?;
    ensure_dir(out)?;
    let scenes: Vec<Scene> = (0..config.gen.count as u64)
        .into_par_iter()
        .map(|i| generate_scene(&config.scene, config.seed, i))
        .collect::<Result<Vec<_>>>()?;
    let files = write_dataset(out, &scenes)?;

    let mut manifest = Manifest::new("dataset", config.seed, config_sha256(config));
    for rel in &files {
        manifest.record_file(out, rel.to_str().expect("utf-8 path"))?;
    }
    let skipped: usize = scenes.iter().map(|s| s.skipped).sum();
    manifest.notes.insert("scenes".into(), scenes.len().to_string());
    manifest
        .notes
        .insert("skipped_placements".into(), skipped.to_string());
    manifest.write(out)?;
    println!(
        "[gen] wrote {} scenes to {} ({skipped} skipped placements)",
        scenes.len(),
        out.display()
    );
    Ok(())
}

// ----- train ---------------------------------------------------------------------

/// Turn dataset scenes into training samples for networks whose output
/// grid matches `spec` at each scene's size.
pub fn build_samples(scenes: &[Scene], spec: &NetworkSpec, config: &RunConfig) -> Result<Vec<TrainSample>> {
    scenes
        .iter()
        .map(|s| {
            let (_, h, w) = s.image.dim();
            let geometry = spec.output_geometry(w, h)?;
            let threshold = area_threshold(config.train.area_threshold_fraction, w, h);
            let targets = targets_from_instances(
                &s.mask,
                &s.boxes(),
                &s.areas(),
                geometry,
                threshold,
                config.seed,
                s.id,
            )?;
            Ok(TrainSample {
                image: s.image.clone(),
                targets,
            })
        })
        .collect()
}

fn schedule(config: &RunConfig, lr: f64) -> Schedule {
    Schedule {
        lr_trunk: lr,
        lr_heads: lr,
        decay_factor: config.train.decay_factor,
        decay_epochs: config.train.decay_epochs,
    }
}

fn train_opts(config: &RunConfig, lr: f64) -> TrainOptions {
    TrainOptions {
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        seed: config.seed,
        schedule: schedule(config, lr),
    }
}

/// Train one localizer from scratch and return it with its loss history.
pub fn train_localizer_from_scratch(
    name: &str,
    kind: LocalizerKind,
    samples: &[TrainSample],
    config: &RunConfig,
    verbose: bool,
) -> Result<(NetworkSpec, ModelState, Vec<f64>)> {
    let spec = localizer_spec(name, default_trunk());
    let mut state = init(&spec, config.seed)?;
    let history = train_localizer(
        &spec,
        &mut state,
        kind,
        samples,
        &train_opts(config, config.train.lr_localizer),
        |epoch, loss| {
            if verbose {
                println!("[train] {name} epoch {epoch} loss {loss:.6}");
            }
        },
    )?;
    Ok((spec, state, history))
}

/// Train the confidence net from scratch.
pub fn train_confidence_from_scratch(
    samples: &[TrainSample],
    config: &RunConfig,
    verbose: bool,
) -> Result<(NetworkSpec, ModelState, Vec<f64>)> {
    let spec = confidence_spec(default_trunk(), config.train.confidence_hidden);
    let mut state = init(&spec, config.seed)?;
    let history = train_confidence(
        &spec,
        &mut state,
        samples,
        &train_opts(config, config.train.lr_confidence),
        |epoch, loss| {
            if verbose {
                println!("[train] confidence epoch {epoch} loss {loss:.6}");
            }
        },
    )?;
    Ok((spec, state, history))
}

fn loss_history_csv(histories: &[(&str, &[f64])]) -> String {
    let mut out = String::from("net,epoch,loss\n");
    for (net, hist) in histories {
        for (epoch, loss) in hist.iter().enumerate() {
            out.push_str(&format!("{net},{epoch},{loss:.6}\n"));
        }
    }
    out
}

/// Train the two scale specialists and the confidence net on the dataset
/// at `paths.dataset`; write three checkpoints plus the loss history.
pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<()> {
    let dataset_dir = &config.paths.dataset;
    Manifest::load_verified(dataset_dir, "dataset")?;
    let scenes = load_dataset(dataset_dir)?;
    if scenes.is_empty() {
        return Err(Error::Config(format!(
            "dataset {} holds no scenes",
            dataset_dir.display()
        )));
    }
    ensure_dir(out)?;

    // all three nets share one trunk architecture, so one sample build works
    let probe_spec = localizer_spec(LARGE_NET, default_trunk());
    let samples = build_samples(&scenes, &probe_spec, config)?;

    let (large_spec, large, large_hist) =
        train_localizer_from_scratch(LARGE_NET, LocalizerKind::Large, &samples, config, true)?;
    let (small_spec, small, small_hist) =
        train_localizer_from_scratch(SMALL_NET, LocalizerKind::Small, &samples, config, true)?;
    let (conf_spec, conf, conf_hist) = train_confidence_from_scratch(&samples, config, true)?;

    save_checkpoint(&large, &large_spec, &out.join(checkpoint_rel_path(LARGE_NET)))?;
    save_checkpoint(&small, &small_spec, &out.join(checkpoint_rel_path(SMALL_NET)))?;
    save_checkpoint(&conf, &conf_spec, &out.join(checkpoint_rel_path("confidence")))?;
    write_text(
        out,
        LOSS_HISTORY_REL_PATH,
        &loss_history_csv(&[
            (LARGE_NET, &large_hist),
            (SMALL_NET, &small_hist),
            ("confidence", &conf_hist),
        ]),
    )?;

    let mut manifest = Manifest::new("models", config.seed, config_sha256(config));
    for net in [LARGE_NET, SMALL_NET, "confidence"] {
        manifest.record_file(out, &checkpoint_rel_path(net))?;
    }
    manifest.record_file(out, LOSS_HISTORY_REL_PATH)?;
    manifest.record_input("dataset", dataset_dir)?;
    manifest.notes.insert("large_spec".into(), large_spec.sha256_hex());
    manifest.notes.insert("small_spec".into(), small_spec.sha256_hex());
    manifest.notes.insert("confidence_spec".into(), conf_spec.sha256_hex());
    manifest.write(out)?;
    println!("[train] wrote 3 checkpoints to {}", out.display());
    Ok(())
}

// ----- infer ---------------------------------------------------------------------

/// Load the fused-specialist pipeline nets from a `train` output.
pub fn load_pipeline_nets(models_dir: &Path, config: &RunConfig) -> Result<PipelineNets> {
    Manifest::load_verified(models_dir, "models")?;
    let large_spec = localizer_spec(LARGE_NET, default_trunk());
    let small_spec = localizer_spec(SMALL_NET, default_trunk());
    let conf_spec = confidence_spec(default_trunk(), config.train.confidence_hidden);
    let large = load_checkpoint(&models_dir.join(checkpoint_rel_path(LARGE_NET)), &large_spec)?;
    let small = load_checkpoint(&models_dir.join(checkpoint_rel_path(SMALL_NET)), &small_spec)?;
    let conf = load_checkpoint(&models_dir.join(checkpoint_rel_path("confidence")), &conf_spec)?;
    Ok(PipelineNets {
        localizers: Localizers::Fused {
            large: (large_spec, large),
            small: (small_spec, small),
        },
        confidence: (conf_spec, conf),
    })
}

/// Run the pipeline over every scene of a dataset, in scene order.
pub fn propose_dataset(
    scenes: &[Scene],
    nets: &PipelineNets,
    pipeline: &PipelineConfig,
) -> Result<Vec<(u64, Vec<Proposal>)>> {
    scenes
        .par_iter()
        .map(|s| Ok((s.id, propose(&s.image, nets, pipeline)?)))
        .collect()
}

/// Propose on the dataset at `paths.eval_dataset` with the models at
/// `paths.models`; write one ranked proposals CSV.
pub fn cmd_infer(config: &RunConfig, out: &Path) -> Result<()> {
    config.pipeline.validate()?;
    let dataset_dir = &config.paths.eval_dataset;
    Manifest::load_verified(dataset_dir, "dataset")?;
    let scenes = load_dataset(dataset_dir)?;
    let nets = load_pipeline_nets(&config.paths.models, config)?;
    ensure_dir(out)?;

    let proposals = propose_dataset(&scenes, &nets, &config.pipeline)?;
    let n_total: usize = proposals.iter().map(|(_, p)| p.len()).sum();
    write_text(out, PROPOSALS_REL_PATH, &proposals_to_csv(&proposals))?;

    let mut manifest = Manifest::new("proposals", config.seed, config_sha256(config));
    manifest.record_file(out, PROPOSALS_REL_PATH)?;
    manifest.record_input("dataset", dataset_dir)?;
    manifest.record_input("models", &config.paths.models)?;
    manifest.write(out)?;
    println!(
        "[infer] wrote {n_total} proposals for {} scenes to {}",
        scenes.len(),
        out.display()
    );
    Ok(())
}

// ----- eval ----------------------------------------------------------------------

/// Pair ground truth with ranked proposals, scene by scene.
pub fn pair_for_eval(
    instances: Vec<(u64, Vec<crate::synthdata::InstanceRecord>)>,
    mut proposals: BTreeMap<u64, Vec<(NormalizedBox, f64)>>,
    proposals_path: &Path,
) -> Result<Vec<EvalScene>> {
    instances
        .into_iter()
        .map(|(scene_id, inst)| {
            let props = proposals.remove(&scene_id).ok_or_else(|| Error::StaleArtifact {
                path: proposals_path.to_path_buf(),
                msg: format!("no proposals for scene {scene_id}"),
            })?;
            Ok(EvalScene {
                instances: inst,
                proposals: props.into_iter().map(|(b, _)| b).collect(),
            })
        })
        .collect()
}

fn write_report(report: &EvalReport, out: &Path) -> Result<Vec<&'static str>> {
    use crate::evalkit::{abo_csv, ar_csv, area_abo_csv, recall_csv};
    ensure_dir(out)?;
    let files = [
        ("recall.csv", recall_csv(report)),
        ("ar.csv", ar_csv(report)),
        ("abo.csv", abo_csv(report)),
        ("area_abo.csv", area_abo_csv(report)),
    ];
    for (rel, text) in &files {
        write_text(out, rel, text)?;
    }
    Ok(files.map(|(rel, _)| rel).to_vec())
}

/// Score the proposals at `paths.proposals` against the ground truth of
/// `paths.eval_dataset`; write the metric CSVs.
pub fn cmd_eval(config: &RunConfig, out: &Path) -> Result<()> {
    let dataset_dir = &config.paths.eval_dataset;
    let proposals_dir = &config.paths.proposals;
    Manifest::load_verified(dataset_dir, "dataset")?;
    Manifest::load_verified(proposals_dir, "proposals")?;

    let csv_path = dataset_dir.join(INSTANCES_REL_PATH);
    let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let instances = parse_instances_csv(&text, &csv_path)?;

    let proposals_path = proposals_dir.join(PROPOSALS_REL_PATH);
    let ptext = std::fs::read_to_string(&proposals_path).map_err(|e| Error::io(&proposals_path, e))?;
    let proposals = parse_proposals_csv(&ptext)?;

    let scenes = pair_for_eval(instances, proposals, &proposals_path)?;
    let report = evaluate(&scenes, &config.eval)?;
    let files = write_report(&report, out)?;

    let mut manifest = Manifest::new("report", config.seed, config_sha256(config));
    for rel in files {
        manifest.record_file(out, rel)?;
    }
    manifest.record_input("dataset", dataset_dir)?;
    manifest.record_input("proposals", proposals_dir)?;
    manifest
        .notes
        .insert("instances".into(), report.total_instances.to_string());
    manifest.write(out)?;
    for &(n, v) in &report.abo {
        println!("[eval] abo@{n} = {v:.4}");
    }
    println!("[eval] wrote report to {}", out.display());
    Ok(())
}

// ----- ablate --------------------------------------------------------------------

/// The four accumulative pipeline variants, in order.
pub const ABLATION_VARIANTS: [&str; 4] = ["single_scale", "scale_fusion", "multi_scale", "refined"];

/// Everything one ablation run trains once and reuses across variants.
pub struct AblationNets {
    pub all_sizes: (NetworkSpec, ModelState),
    pub large: (NetworkSpec, ModelState),
    pub small: (NetworkSpec, ModelState),
    pub confidence: (NetworkSpec, ModelState),
}

/// Train the four networks an ablation needs (one all-sizes baseline
/// localizer, the two specialists, the confidence net).
pub fn train_ablation_nets(samples: &[TrainSample], config: &RunConfig, verbose: bool) -> Result<AblationNets> {
    let (all_spec, all, _) =
        train_localizer_from_scratch(ALL_SIZES_NET, LocalizerKind::AllSizes, samples, config, verbose)?;
    let (large_spec, large, _) =
        train_localizer_from_scratch(LARGE_NET, LocalizerKind::Large, samples, config, verbose)?;
    let (small_spec, small, _) =
        train_localizer_from_scratch(SMALL_NET, LocalizerKind::Small, samples, config, verbose)?;
    let (conf_spec, conf, _) = train_confidence_from_scratch(samples, config, verbose)?;
    Ok(AblationNets {
        all_sizes: (all_spec, all),
        large: (large_spec, large),
        small: (small_spec, small),
        confidence: (conf_spec, conf),
    })
}

fn variant_nets(nets: &AblationNets, variant: &str) -> PipelineNets {
    let localizers = match variant {
        "single_scale" => Localizers::Single(nets.all_sizes.clone()),
        _ => Localizers::Fused {
            large: nets.large.clone(),
            small: nets.small.clone(),
        },
    };
    PipelineNets {
        localizers,
        confidence: nets.confidence.clone(),
    }
}

fn variant_pipeline(base: &PipelineConfig, variant: &str) -> PipelineConfig {
    let mut p = *base;
    match variant {
        "single_scale" | "scale_fusion" => {
            p.multi_scale = false;
            p.refine = false;
        }
        "multi_scale" => {
            p.multi_scale = true;
            p.refine = false;
        }
        _ => {
            p.multi_scale = true;
            p.refine = true;
        }
    }
    p
}

/// Metrics of one variant at every budget: rows `(n, metric, value)`.
pub fn variant_metrics(
    report: &EvalReport,
    opts: &EvalOptions,
) -> Vec<(usize, String, f64)> {
    let mut rows = Vec::new();
    for &n in &opts.n_values {
        for &(rn, iou, r) in &report.recall {
            if rn == n {
                rows.push((n, format!("recall_{iou:.2}"), r));
            }
        }
        for &(an, v) in &report.ar {
            if an == n {
                rows.push((n, "ar".to_string(), v));
            }
        }
        for &(an, v) in &report.abo {
            if an == n {
                rows.push((n, "abo".to_string(), v));
            }
        }
    }
    // area-binned ABO at the area budget: first bin is the small side
    if let Some(first) = report.area_abo.first() {
        rows.push((opts.area_bin_n, "abo_small".to_string(), first.abo));
    }
    if let Some(last) = report.area_abo.last() {
        rows.push((opts.area_bin_n, "abo_large".to_string(), last.abo));
    }
    rows
}

/// One full ablation pass: evaluate the four variants with shared nets.
/// Returns `(variant, n, metric, value)` rows in a fixed order.
pub fn run_ablation(
    nets: &AblationNets,
    eval_scenes: &[Scene],
    config: &RunConfig,
    eval_opts: &EvalOptions,
) -> Result<Vec<(String, usize, String, f64)>> {
    let mut rows = Vec::new();
    for variant in ABLATION_VARIANTS {
        let vnets = variant_nets(nets, variant);
        let vpipe = variant_pipeline(&config.pipeline, variant);
        let proposals = propose_dataset(eval_scenes, &vnets, &vpipe)?;
        let scenes: Vec<EvalScene> = eval_scenes
            .iter()
            .zip(&proposals)
            .map(|(s, (_, props))| EvalScene {
                instances: s.instances.clone(),
                proposals: props.iter().map(|p| p.bbox).collect(),
            })
            .collect();
        let report = evaluate(&scenes, eval_opts)?;
        for (n, metric, value) in variant_metrics(&report, eval_opts) {
            rows.push((variant.to_string(), n, metric, value));
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[(String, usize, String, f64)]) -> String {
    let mut out = String::from("variant,n,metric,value\n");
    for (variant, n, metric, value) in rows {
        out.push_str(&format!("{variant},{n},{metric},{value:.6}\n"));
    }
    out
}

/// Eval options for an ablation: the configured grid, with the area split
/// pinned to the small/large threshold of the evaluated scenes.
pub fn ablation_eval_opts(config: &RunConfig, scene_w: usize, scene_h: usize) -> EvalOptions {
    EvalOptions {
        area_edges: vec![area_threshold(
            config.train.area_threshold_fraction,
            scene_w,
            scene_h,
        )],
        ..config.eval.clone()
    }
}

/// Train on `paths.dataset`, evaluate the four accumulative variants on
/// `paths.eval_dataset`, and write the consolidated comparison CSV.
pub fn cmd_ablate(config: &RunConfig, out: &Path) -> Result<()> {
    config.pipeline.validate()?;
    let train_dir = &config.paths.dataset;
    let eval_dir = &config.paths.eval_dataset;
    Manifest::load_verified(train_dir, "dataset")?;
    Manifest::load_verified(eval_dir, "dataset")?;
    let train_scenes = load_dataset(train_dir)?;
    let eval_scenes = load_dataset(eval_dir)?;
    if train_scenes.is_empty() || eval_scenes.is_empty() {
        return Err(Error::Config("ablation needs non-empty datasets".into()));
    }
    ensure_dir(out)?;

    let probe_spec = localizer_spec(LARGE_NET, default_trunk());
    let samples = build_samples(&train_scenes, &probe_spec, config)?;
    let nets = train_ablation_nets(&samples, config, true)?;

    let (_, h, w) = eval_scenes[0].image.dim();
    let eval_opts = ablation_eval_opts(config, w, h);
    let rows = run_ablation(&nets, &eval_scenes, config, &eval_opts)?;
    write_text(out, ABLATION_REL_PATH, &ablation_csv(&rows))?;

    let mut manifest = Manifest::new("ablation", config.seed, config_sha256(config));
    manifest.record_file(out, ABLATION_REL_PATH)?;
    manifest.record_input("dataset", train_dir)?;
    manifest.record_input("eval_dataset", eval_dir)?;
    manifest.write(out)?;
    for (variant, n, metric, value) in &rows {
        if metric == "abo" || metric == "abo_small" {
            println!("[ablate] {variant} {metric}@{n} = {value:.4}");
        }
    }
    println!("[ablate] wrote {}", out.join(ABLATION_REL_PATH).display());
    Ok(())
}

/// Resolve the output directory for a command: `--out` flag, else config.
pub fn resolve_out(config: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| config.out.clone())
}

/// Sanity used by tests: a directory is a finished artifact of `kind`.
pub fn is_artifact(dir: &Path, kind: &str) -> bool {
    dir.join(MANIFEST_NAME).exists() && Manifest::load_verified(dir, kind).is_ok()
}

/// Convenience for tests and examples: default paths rooted at `base`.
pub fn paths_under(base: &Path) -> PathsConfig {
    PathsConfig {
        dataset: base.join("dataset"),
        eval_dataset: base.join("eval_dataset"),
        models: base.join("models"),
        proposals: base.join("proposals"),
    }
}
