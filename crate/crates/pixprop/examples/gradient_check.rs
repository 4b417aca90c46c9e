//! Validate the hand-written backward passes against finite differences.
//!
//! ```sh
//! cargo run --example gradient_check
//! ```
//!
//! Builds a miniature localizer and a miniature confidence net, picks a
//! handful of parameters spread over every layer, and compares the
//! analytic gradient of the real training losses with a central
//! difference. Agreement to ~1e-6 relative error means the chain rule
//! bookkeeping through convolution, rectifier, softmax and the decoding
//! step is right.

use ndarray::{Array2, Array3};
use pixprop::convnet::{
    backward, center_image, confidence_spec, forward, init, localizer_spec, positive_prob_grad,
    LayerSpec, ModelState, NetworkSpec, HEAD_BOX, HEAD_OBJECTNESS, HEAD_SIZE,
};
use pixprop::gridcodec::{GridGeometry, GridMode, PredictionGrid, TargetBundle};
use pixprop::losses::{confidence_loss, loc_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn tiny_trunk() -> Vec<LayerSpec> {
    use pixprop::convnet::Activation::*;
    let conv = |out, kernel, stride, padding, dilation, activation| LayerSpec {
        out_channels: out,
        kernel,
        stride,
        padding,
        dilation,
        activation,
    };
    vec![conv(4, 3, 2, 1, 1, Rectifier), conv(6, 3, 1, 2, 2, Rectifier)]
}

/// Loss of a localizer forward pass under a fixed target bundle.
fn localizer_loss(
    spec: &NetworkSpec,
    state: &ModelState,
    image: &Array3<f64>,
    targets: &TargetBundle,
) -> f64 {
    let pass = forward(state, spec, &center_image(image)).unwrap();
    let pred = pass.boxes(HEAD_BOX).unwrap();
    loc_loss(pred, &targets.coords, &targets.fg).unwrap().value
}

fn confidence_total_loss(
    spec: &NetworkSpec,
    state: &ModelState,
    image: &Array3<f64>,
    targets: &TargetBundle,
) -> f64 {
    let pass = forward(state, spec, &center_image(image)).unwrap();
    let p = pass.positive_prob(HEAD_OBJECTNESS).unwrap();
    let z = pass.positive_prob(HEAD_SIZE).unwrap();
    confidence_loss(&p, &z, &targets.fg, &targets.large, &targets.size_weights)
        .unwrap()
        .value
}

fn random_targets(geometry: GridGeometry, rng: &mut impl Rng) -> TargetBundle {
    let (gw, gh) = (geometry.grid_w, geometry.grid_h);
    let mut values = ndarray::Array3::zeros((4, gh, gw));
    values.mapv_inplace(|_: f64| rng.gen_range(0.0..1.0));
    let coords = PredictionGrid::from_values(geometry, GridMode::Absolute, values).unwrap();
    let mut fg = Array2::zeros((gh, gw));
    fg.mapv_inplace(|_: f64| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let mut large = Array2::zeros((gh, gw));
    large.mapv_inplace(|_: f64| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let size_weights = fg.mapv(|m| if m > 0.0 { rng.gen_range(0.1..1.0) } else { 0.0 });
    TargetBundle {
        coords,
        fg,
        large,
        size_weights,
    }
}

/// Central finite difference on one scalar parameter.
fn numeric_grad(
    loss: &dyn Fn(&ModelState) -> f64,
    state: &ModelState,
    layer: usize,
    index: usize,
) -> f64 {
    let eps = 1e-5;
    let mut plus = state.clone();
    plus.layers[layer].w.as_slice_mut().unwrap()[index] += eps;
    let mut minus = state.clone();
    minus.layers[layer].w.as_slice_mut().unwrap()[index] -= eps;
    (loss(&plus) - loss(&minus)) / (2.0 * eps)
}

fn check(
    label: &str,
    spec: &NetworkSpec,
    state: &ModelState,
    grads: &pixprop::convnet::Gradients,
    loss: &dyn Fn(&ModelState) -> f64,
    rng: &mut impl Rng,
) {
    println!("{label}:");
    let mut worst: f64 = 0.0;
    for layer in 0..state.layers.len() {
        let n = state.layers[layer].w.len();
        let index = rng.gen_range(0..n);
        let analytic = grads.layers[layer].w.as_slice().unwrap()[index];
        let numeric = numeric_grad(loss, state, layer, index);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
        println!(
            "  layer {layer} w[{index:>4}]  analytic {analytic:+.8e}  numeric {numeric:+.8e}  rel {rel:.2e}"
        );
    }
    assert!(worst < 1e-5, "{label}: worst relative error {worst:.2e}");
    println!("  -> agree (worst rel err {worst:.2e})\n");
    let _ = spec;
}

fn main() -> pixprop::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut image = Array3::zeros((3, 16, 16));
    image.mapv_inplace(|_: f64| rng.gen_range(0.0..1.0));

    // localizer: masked squared-error box loss through offset decoding
    let spec = localizer_spec("demo", tiny_trunk());
    let state = init(&spec, 1)?;
    let geometry = spec.output_geometry(16, 16)?;
    let targets = random_targets(geometry, &mut rng);

    let pass = forward(&state, &spec, &center_image(&image))?;
    let pred = pass.boxes(HEAD_BOX).unwrap();
    let loss = loc_loss(pred, &targets.coords, &targets.fg)?;
    let grads = backward(
        &state,
        &spec,
        &pass,
        &BTreeMap::from([(HEAD_BOX.to_string(), loss.gradient.clone())]),
    )?;
    let t = targets.clone();
    let f = move |s: &ModelState| localizer_loss(&localizer_spec("demo", tiny_trunk()), s, &image, &t);
    check("localizer / box loss", &spec, &state, &grads, &f, &mut rng);

    // confidence net: two-branch weighted cross-entropy through softmax
    let mut rng2 = ChaCha8Rng::seed_from_u64(8);
    let mut image2 = Array3::zeros((3, 16, 16));
    image2.mapv_inplace(|_: f64| rng2.gen_range(0.0..1.0));
    let cspec = confidence_spec(tiny_trunk(), 5);
    let cstate = init(&cspec, 2)?;
    let cgeom = cspec.output_geometry(16, 16)?;
    let ctargets = random_targets(cgeom, &mut rng2);

    let cpass = forward(&cstate, &cspec, &center_image(&image2))?;
    let p = cpass.positive_prob(HEAD_OBJECTNESS).unwrap();
    let z = cpass.positive_prob(HEAD_SIZE).unwrap();
    let closs = confidence_loss(&p, &z, &ctargets.fg, &ctargets.large, &ctargets.size_weights)?;
    let cgrads = backward(
        &cstate,
        &cspec,
        &cpass,
        &BTreeMap::from([
            (HEAD_OBJECTNESS.to_string(), positive_prob_grad(&closs.grad_p)),
            (HEAD_SIZE.to_string(), positive_prob_grad(&closs.grad_z)),
        ]),
    )?;
    let ct = ctargets.clone();
    let cf = move |s: &ModelState| {
        confidence_total_loss(&confidence_spec(tiny_trunk(), 5), s, &image2, &ct)
    };
    check("confidence / two-branch loss", &cspec, &cstate, &cgrads, &cf, &mut rng2);

    println!("all analytic gradients match finite differences");
    Ok(())
}
