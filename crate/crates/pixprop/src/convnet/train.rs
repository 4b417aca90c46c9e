//! SGD training loops for the localizers and the confidence net.
//!
//! Each epoch shuffles the sample order with its own derived RNG stream,
//! walks the samples in batches, computes per-sample gradients in parallel
//! (collected in order, then reduced sequentially, so results do not depend
//! on the worker count), averages them over the batch, and takes one SGD
//! step per batch at the learning rate of the current epoch.

use super::{
    backward, center_image, forward, name_stream, positive_prob_grad, sgd_step, Gradients,
    ModelState, NetworkSpec, Schedule, HEAD_BOX, HEAD_OBJECTNESS, HEAD_SIZE,
};
use crate::gridcodec::TargetBundle;
use crate::losses::{confidence_loss, loc_loss};
use crate::rng::{derived_rng, Domain};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// One training scene: the raw `[0, 1]` image and its grid targets.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Array3<f64>,
    pub targets: TargetBundle,
}

/// Which cells a localizer regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalizerKind {
    /// Every foreground cell (single-net baseline).
    AllSizes,
    /// Foreground cells of above-threshold instances only.
    Large,
    /// Foreground cells of at-or-below-threshold instances only.
    Small,
}

impl LocalizerKind {
    pub fn mask(&self, t: &TargetBundle) -> Array2<f64> {
        match self {
            LocalizerKind::AllSizes => t.fg.clone(),
            LocalizerKind::Large => t.large_mask(),
            LocalizerKind::Small => t.small_mask(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for the epoch shuffles (weights carry their own init seed).
    pub seed: u64,
    pub schedule: Schedule,
}

/// Shared epoch/batch driver. `sample_grad` maps one sample to its loss and
/// parameter gradients under the current weights.
fn run_epochs<F>(
    spec: &NetworkSpec,
    state: &mut ModelState,
    samples: &[TrainSample],
    opts: &TrainOptions,
    sample_grad: F,
    mut progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>>
where
    F: Fn(&ModelState, &TrainSample) -> Result<(f64, Gradients)> + Sync,
{
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "no training samples for network `{}`",
            spec.name
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut history = Vec::with_capacity(opts.epochs);
    let end_epoch = state.epoch + opts.epochs;
    while state.epoch < end_epoch {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let stream = name_stream(&format!("{}/epoch{epoch}", spec.name));
        let mut rng = derived_rng(opts.seed, Domain::EpochShuffle, stream);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let per_sample: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| sample_grad(state, &samples[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut total = Gradients::zeros_like(state);
            for (loss, g) in &per_sample {
                epoch_loss += loss;
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            sgd_step(state, spec, &total, &opts.schedule)?;
        }
        let mean = epoch_loss / samples.len() as f64;
        if !mean.is_finite() || mean > 1e12 {
            return Err(Error::Diverged {
                net: spec.name.clone(),
                epoch,
                msg: format!("epoch mean loss {mean:.3e}"),
            });
        }
        history.push(mean);
        state.epoch += 1;
        progress(epoch, mean);
    }
    Ok(history)
}

/// Train a localizer on the cells selected by `kind`. Returns the
/// per-epoch mean sample loss; `state.epoch` advances by `opts.epochs`.
pub fn train_localizer(
    spec: &NetworkSpec,
    state: &mut ModelState,
    kind: LocalizerKind,
    samples: &[TrainSample],
    opts: &TrainOptions,
    progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    run_epochs(
        spec,
        state,
        samples,
        opts,
        |st, sample| {
            let pass = forward(st, spec, &center_image(&sample.image))?;
            let pred = pass.boxes(HEAD_BOX)?;
            let mask = kind.mask(&sample.targets);
            let loss = loc_loss(pred, &sample.targets.coords, &mask)?;
            let mut head_grads = BTreeMap::new();
            head_grads.insert(HEAD_BOX.to_string(), loss.gradient);
            let grads = backward(st, spec, &pass, &head_grads)?;
            Ok((loss.value, grads))
        },
        progress,
    )
}

/// Train the two-branch confidence net (objectness on every cell, size on
/// the weighted foreground cells).
pub fn train_confidence(
    spec: &NetworkSpec,
    state: &mut ModelState,
    samples: &[TrainSample],
    opts: &TrainOptions,
    progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    run_epochs(
        spec,
        state,
        samples,
        opts,
        |st, sample| {
            let pass = forward(st, spec, &center_image(&sample.image))?;
            let p = pass.positive_prob(HEAD_OBJECTNESS)?;
            let z = pass.positive_prob(HEAD_SIZE)?;
            let t = &sample.targets;
            let loss = confidence_loss(&p, &z, &t.fg, &t.large, &t.size_weights)?;
            let mut head_grads = BTreeMap::new();
            head_grads.insert(HEAD_OBJECTNESS.to_string(), positive_prob_grad(&loss.grad_p));
            head_grads.insert(HEAD_SIZE.to_string(), positive_prob_grad(&loss.grad_z));
            let grads = backward(st, spec, &pass, &head_grads)?;
            Ok((loss.value, grads))
        },
        progress,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{confidence_spec, default_trunk, init, localizer_spec};
    use crate::geometry::NormalizedBox;
    use crate::gridcodec::{targets_from_instances, GridGeometry};
    use ndarray::Array2 as A2;

    /// A 32x32 scene with one bright instance on a dark ground, plus exact
    /// grid targets derived from its mask.
    fn toy_samples(n: usize) -> Vec<TrainSample> {
        let g = GridGeometry::new(32, 32, 8, 8).unwrap();
        (0..n)
            .map(|i| {
                // axis-aligned rectangle, shifted a little per sample
                let x0 = 6 + 2 * (i % 3);
                let y0 = 8 + 2 * (i % 2);
                let (w, h) = (12usize, 10usize);
                let mut mask = A2::<u16>::zeros((32, 32));
                let mut image = Array3::from_elem((3, 32, 32), 0.2);
                for y in y0..y0 + h {
                    for x in x0..x0 + w {
                        mask[[y, x]] = 1;
                        image[[0, y, x]] = 0.9;
                        image[[1, y, x]] = 0.6;
                    }
                }
                let b = NormalizedBox::new(
                    x0 as f64 / 32.0,
                    y0 as f64 / 32.0,
                    (x0 + w) as f64 / 32.0,
                    (y0 + h) as f64 / 32.0,
                )
                .unwrap();
                let targets =
                    targets_from_instances(&mask, &[b], &[(w * h) as u64], g, 60, 1, i as u64)
                        .unwrap();
                TrainSample { image, targets }
            })
            .collect()
    }

    fn quick_opts(epochs: usize, lr: f64) -> TrainOptions {
        TrainOptions {
            epochs,
            batch_size: 2,
            seed: 5,
            schedule: Schedule {
                lr_trunk: lr,
                lr_heads: lr,
                decay_factor: 0.1,
                decay_epochs: 1000,
            },
        }
    }

    #[test]
    fn localizer_overfits_a_tiny_set() {
        let spec = localizer_spec("large", default_trunk());
        let mut state = init(&spec, 11).unwrap();
        let samples = toy_samples(4);
        let history = train_localizer(
            &spec,
            &mut state,
            LocalizerKind::AllSizes,
            &samples,
            &quick_opts(30, 2e-4),
            |_, _| {},
        )
        .unwrap();
        assert_eq!(history.len(), 30);
        assert_eq!(state.epoch, 30);
        let (first, last) = (history[0], *history.last().unwrap());
        assert!(
            last < 0.5 * first,
            "loss should at least halve: {first} -> {last}"
        );
    }

    #[test]
    fn confidence_loss_decreases() {
        let spec = confidence_spec(default_trunk(), 32);
        let mut state = init(&spec, 12).unwrap();
        let samples = toy_samples(4);
        let history =
            train_confidence(&spec, &mut state, &samples, &quick_opts(80, 3e-4), |_, _| {})
                .unwrap();
        let (first, last) = (history[0], *history.last().unwrap());
        assert!(last < 0.5 * first, "loss should drop: {first} -> {last}");
    }

    /// Manual throughput probe (`cargo test -- --ignored bench_ --nocapture`):
    /// prints per-scene forward+backward time for a localizer and the
    /// confidence net at 64x64, the number that sizes training runs.
    #[test]
    #[ignore]
    fn bench_forward_backward_64() {
        use std::time::Instant;
        let img = Array3::from_elem((3, 64, 64), 0.4);
        let centered = center_image(&img);

        let spec = localizer_spec("large", default_trunk());
        let state = init(&spec, 1).unwrap();
        let t = Instant::now();
        let reps = 20;
        for _ in 0..reps {
            let pass = forward(&state, &spec, &centered).unwrap();
            let mut hg = BTreeMap::new();
            hg.insert(HEAD_BOX.to_string(), Array3::from_elem((4, 16, 16), 0.01));
            backward(&state, &spec, &pass, &hg).unwrap();
        }
        println!("localizer fwd+bwd: {:.2} ms/scene", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

        let cspec = confidence_spec(default_trunk(), 32);
        let cstate = init(&cspec, 1).unwrap();
        let t = Instant::now();
        for _ in 0..reps {
            let pass = forward(&cstate, &cspec, &centered).unwrap();
            let mut hg = BTreeMap::new();
            hg.insert(HEAD_OBJECTNESS.to_string(), Array3::from_elem((2, 16, 16), 0.01));
            hg.insert(HEAD_SIZE.to_string(), Array3::from_elem((2, 16, 16), 0.01));
            backward(&cstate, &cspec, &pass, &hg).unwrap();
        }
        println!("confidence fwd+bwd: {:.2} ms/scene", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

        let t = Instant::now();
        for _ in 0..reps {
            forward(&state, &spec, &centered).unwrap();
        }
        println!("localizer fwd only: {:.2} ms/scene", t.elapsed().as_secs_f64() * 1e3 / reps as f64);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let spec = localizer_spec("small", default_trunk());
        let samples = toy_samples(3);
        let run = || {
            let mut state = init(&spec, 21).unwrap();
            train_localizer(
                &spec,
                &mut state,
                LocalizerKind::AllSizes,
                &samples,
                &quick_opts(5, 1e-4),
                |_, _| {},
            )
            .unwrap();
            state
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
