//! Small fully-convolutional networks with hand-written forward and
//! backward passes.
//!
//! Three independent nets share one trunk architecture (four 3x3 convs,
//! overall stride 4, dilation on the last layer): two localizers whose
//! single linear head emits four offset channels — decoded to absolute
//! boxes by summing the coordinate basis — and a confidence net whose two
//! branches (objectness, apparent size) each end in a per-cell two-way
//! softmax. Everything is f64; training is plain SGD with a stepped
//! learning-rate decay.
//!
//! Initialization: trunk weights are fan-in-scaled Gaussians (the trunk
//! trains from scratch and has to propagate signal through four layers),
//! head weights use a fixed 0.01 standard deviation, and all biases start
//! at zero.

pub mod ops;
pub mod train;

use crate::gridcodec::{make_coord_basis, offsets_to_absolute, GridGeometry, GridMode, PredictionGrid};
use crate::rng::{derived_rng, Domain};
use crate::{Error, Result};
use ndarray::{Array1, Array2, Array3, Array4};
use ops::{
    channel_softmax_backward, channel_softmax_forward, conv2d_backward, conv2d_forward,
    conv_out_len, relu_backward, relu_forward, ConvGeom,
};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

// ----- specs ----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Rectifier,
    Linear,
}

/// One convolution layer (square kernel, zero padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub activation: Activation,
}

/// What a head's final channels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Four offset channels, decoded to absolute box coordinates by adding
    /// the coordinate basis.
    BoxOffsets,
    /// Per-cell softmax over the final channels (two for yes/no branches).
    ChannelSoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub kind: HeadKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub in_channels: usize,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

pub const HEAD_BOX: &str = "box";
pub const HEAD_OBJECTNESS: &str = "objectness";
pub const HEAD_SIZE: &str = "size";

fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize, dilation: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        out_channels,
        kernel,
        stride,
        padding,
        dilation,
        activation,
    }
}

/// The shared trunk: channels 16/32/32/64, strides 2/2/1/1 (overall output
/// stride 4), dilation 2 on the last layer to widen the receptive field.
pub fn default_trunk() -> Vec<LayerSpec> {
    vec![
        conv(16, 3, 2, 1, 1, Activation::Rectifier),
        conv(32, 3, 2, 1, 1, Activation::Rectifier),
        conv(32, 3, 1, 1, 1, Activation::Rectifier),
        conv(64, 3, 1, 2, 2, Activation::Rectifier),
    ]
}

/// A localizer: trunk plus a single linear 1x1x4 offset head.
pub fn localizer_spec(name: &str, trunk: Vec<LayerSpec>) -> NetworkSpec {
    NetworkSpec {
        name: name.to_string(),
        in_channels: 3,
        trunk,
        heads: vec![HeadSpec {
            name: HEAD_BOX.to_string(),
            layers: vec![conv(4, 1, 1, 0, 1, Activation::Linear)],
            kind: HeadKind::BoxOffsets,
        }],
    }
}

/// The confidence net: trunk bifurcating into an objectness branch and an
/// apparent-size branch, each `3x3xhidden` + `1x1x2` with per-cell softmax.
pub fn confidence_spec(trunk: Vec<LayerSpec>, hidden: usize) -> NetworkSpec {
    let branch = |name: &str| HeadSpec {
        name: name.to_string(),
        layers: vec![
            conv(hidden, 3, 1, 1, 1, Activation::Rectifier),
            conv(2, 1, 1, 0, 1, Activation::Linear),
        ],
        kind: HeadKind::ChannelSoftmax,
    };
    NetworkSpec {
        name: "confidence".to_string(),
        in_channels: 3,
        trunk,
        heads: vec![branch(HEAD_OBJECTNESS), branch(HEAD_SIZE)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Trunk,
    Head,
}

struct PlannedLayer {
    spec: LayerSpec,
    in_channels: usize,
    group: Group,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.in_channels == 0 || self.trunk.is_empty() || self.heads.is_empty() {
            return bad(format!("network `{}` is structurally empty", self.name));
        }
        for l in self.trunk.iter().chain(self.heads.iter().flat_map(|h| &h.layers)) {
            if l.out_channels == 0 || l.kernel == 0 || l.stride == 0 || l.dilation == 0 {
                return bad(format!("network `{}` has a degenerate layer {l:?}", self.name));
            }
        }
        for h in &self.heads {
            let last = match h.layers.last() {
                Some(l) => l,
                None => return bad(format!("head `{}` has no layers", h.name)),
            };
            match h.kind {
                HeadKind::BoxOffsets if last.out_channels != 4 => {
                    return bad(format!("box head `{}` must end with 4 channels", h.name))
                }
                HeadKind::ChannelSoftmax if last.out_channels < 2 => {
                    return bad(format!("softmax head `{}` needs >= 2 channels", h.name))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn plan(&self) -> Vec<PlannedLayer> {
        let mut out = Vec::new();
        let mut ch = self.in_channels;
        for l in &self.trunk {
            out.push(PlannedLayer {
                spec: *l,
                in_channels: ch,
                group: Group::Trunk,
            });
            ch = l.out_channels;
        }
        let trunk_ch = ch;
        for h in &self.heads {
            let mut ch = trunk_ch;
            for l in &h.layers {
                out.push(PlannedLayer {
                    spec: *l,
                    in_channels: ch,
                    group: Group::Head,
                });
                ch = l.out_channels;
            }
        }
        out
    }

    /// Canonical content hash of the architecture, used by checkpoints and
    /// run manifests.
    pub fn sha256_hex(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex_string(&h.finalize())
    }

    /// Output grid geometry for an input of the given pixel size.
    pub fn output_geometry(&self, image_w: usize, image_h: usize) -> Result<GridGeometry> {
        let (mut w, mut h) = (image_w, image_h);
        for l in &self.trunk {
            let g = ConvGeom {
                stride: l.stride,
                padding: l.padding,
                dilation: l.dilation,
            };
            match (conv_out_len(w, l.kernel, g), conv_out_len(h, l.kernel, g)) {
                (Some(nw), Some(nh)) if nw > 0 && nh > 0 => {
                    w = nw;
                    h = nh;
                }
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "image {image_w}x{image_h} too small for network `{}`",
                        self.name
                    )))
                }
            }
        }
        GridGeometry::new(image_w, image_h, w, h)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Stable per-network RNG stream id derived from the name.
fn name_stream(name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

// ----- parameters -----------------------------------------------------------

/// Weights and bias of one layer; doubles as that layer's gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
}

/// All parameters of one network plus its optimizer bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<LayerParams>,
    /// Completed training epochs; drives the learning-rate schedule.
    pub epoch: usize,
    /// Seed the weights were initialized from (recorded in checkpoints).
    pub seed: u64,
}

impl ModelState {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Per-layer parameter gradients, aligned with `ModelState::layers`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        Gradients {
            layers: state
                .layers
                .iter()
                .map(|l| LayerParams {
                    w: Array4::zeros(l.w.dim()),
                    b: Array1::zeros(l.b.dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.w *= factor;
            l.b *= factor;
        }
    }
}

/// Zero-mean Gaussian init, deterministic in `(seed, spec.name)`: trunk
/// layers use std `sqrt(2 / fan_in)`, head layers a fixed std of 0.01, and
/// every bias starts at exactly 0.
pub fn init(spec: &NetworkSpec, seed: u64) -> Result<ModelState> {
    spec.validate()?;
    let mut rng = derived_rng(seed, Domain::WeightInit, name_stream(&spec.name));
    let mut layers = Vec::new();
    for p in spec.plan() {
        let fan_in = (p.in_channels * p.spec.kernel * p.spec.kernel) as f64;
        let std = match p.group {
            Group::Trunk => (2.0 / fan_in).sqrt(),
            Group::Head => 0.01,
        };
        let normal = Normal::new(0.0, std).expect("positive std");
        let w = Array4::from_shape_fn(
            (p.spec.out_channels, p.in_channels, p.spec.kernel, p.spec.kernel),
            |_| normal.sample(&mut rng),
        );
        let b = Array1::zeros(p.spec.out_channels);
        layers.push(LayerParams { w, b });
    }
    Ok(ModelState {
        layers,
        epoch: 0,
        seed,
    })
}

fn check_state(spec: &NetworkSpec, state: &ModelState) -> Result<()> {
    let plan = spec.plan();
    if plan.len() != state.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "network `{}` has {} layers, state has {}",
            spec.name,
            plan.len(),
            state.layers.len()
        )));
    }
    for (i, (p, l)) in plan.iter().zip(&state.layers).enumerate() {
        let expect = (p.spec.out_channels, p.in_channels, p.spec.kernel, p.spec.kernel);
        if l.w.dim() != expect || l.b.dim() != p.spec.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "network `{}` layer {i}: state {:?}, spec wants {:?}",
                spec.name,
                l.w.dim(),
                expect
            )));
        }
    }
    Ok(())
}

// ----- forward / backward ---------------------------------------------------

/// Output of one head after forward.
#[derive(Debug, Clone)]
pub enum HeadValue {
    /// Absolute-coordinate prediction grid (box heads).
    Boxes(PredictionGrid),
    /// Per-cell channel probabilities (softmax heads), `[C, h, w]`.
    Probs(Array3<f64>),
}

/// Everything forward produced, plus the activation cache backward needs.
pub struct ForwardPass {
    pub outputs: BTreeMap<String, HeadValue>,
    pub geometry: GridGeometry,
    cache: Cache,
}

struct Cache {
    spec_hash: String,
    input: Array3<f64>,
    /// Post-activation output of every trunk layer.
    trunk: Vec<Array3<f64>>,
    /// Per head: post-activation outputs of its layers, then probabilities
    /// for softmax heads.
    heads: Vec<HeadCache>,
}

struct HeadCache {
    acts: Vec<Array3<f64>>,
    probs: Option<Array3<f64>>,
}

impl ForwardPass {
    pub fn boxes(&self, head: &str) -> Result<&PredictionGrid> {
        match self.outputs.get(head) {
            Some(HeadValue::Boxes(g)) => Ok(g),
            _ => Err(Error::ShapeMismatch(format!("no box head `{head}`"))),
        }
    }

    /// Channel-1 probability map of a two-way softmax head (the "yes"
    /// class: foreground for objectness, large for size).
    pub fn positive_prob(&self, head: &str) -> Result<Array2<f64>> {
        match self.outputs.get(head) {
            Some(HeadValue::Probs(p)) => {
                Ok(p.index_axis(ndarray::Axis(0), 1).to_owned())
            }
            _ => Err(Error::ShapeMismatch(format!("no softmax head `{head}`"))),
        }
    }
}

/// Shift a raw `[0, 1]` image to zero-centered network input. Training and
/// inference both apply this exactly once, right before `forward`.
pub fn center_image(image: &Array3<f64>) -> Array3<f64> {
    image - 0.5
}

fn layer_geom(l: &LayerSpec) -> ConvGeom {
    ConvGeom {
        stride: l.stride,
        padding: l.padding,
        dilation: l.dilation,
    }
}

/// Run the network on one (already centered) image, caching activations for
/// [`backward`].
pub fn forward(state: &ModelState, spec: &NetworkSpec, input: &Array3<f64>) -> Result<ForwardPass> {
    spec.validate()?;
    check_state(spec, state)?;
    let (c, ih, iw) = input.dim();
    if c != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "network `{}` wants {} input channels, image has {c}",
            spec.name, spec.in_channels
        )));
    }
    let geometry = spec.output_geometry(iw, ih)?;

    let mut layer_idx = 0;
    let mut x = input.clone();
    let mut trunk_acts = Vec::with_capacity(spec.trunk.len());
    for l in &spec.trunk {
        let mut y = conv2d_forward(&x, &state.layers[layer_idx].w, &state.layers[layer_idx].b, layer_geom(l));
        if l.activation == Activation::Rectifier {
            relu_forward(&mut y);
        }
        trunk_acts.push(y.clone());
        x = y;
        layer_idx += 1;
    }
    let trunk_out = trunk_acts.last().expect("nonempty trunk");
    let (_, gh, gw) = trunk_out.dim();
    debug_assert_eq!((gh, gw), (geometry.grid_h, geometry.grid_w));

    let mut outputs = BTreeMap::new();
    let mut head_caches = Vec::with_capacity(spec.heads.len());
    for h in &spec.heads {
        let mut x = trunk_out.clone();
        let mut acts = Vec::with_capacity(h.layers.len());
        for l in &h.layers {
            let mut y = conv2d_forward(&x, &state.layers[layer_idx].w, &state.layers[layer_idx].b, layer_geom(l));
            if l.activation == Activation::Rectifier {
                relu_forward(&mut y);
            }
            acts.push(y.clone());
            x = y;
            layer_idx += 1;
        }
        let (_, hh, hw) = x.dim();
        if (hh, hw) != (gh, gw) {
            return Err(Error::ShapeMismatch(format!(
                "head `{}` changed grid size {gh}x{gw} -> {hh}x{hw}",
                h.name
            )));
        }
        let mut probs_cache = None;
        let value = match h.kind {
            HeadKind::BoxOffsets => {
                let offsets = PredictionGrid::from_values(geometry, GridMode::Offsets, x)?;
                let basis = make_coord_basis(geometry);
                HeadValue::Boxes(offsets_to_absolute(&offsets, &basis)?)
            }
            HeadKind::ChannelSoftmax => {
                let probs = channel_softmax_forward(&x);
                probs_cache = Some(probs.clone());
                HeadValue::Probs(probs)
            }
        };
        outputs.insert(h.name.clone(), value);
        head_caches.push(HeadCache {
            acts,
            probs: probs_cache,
        });
    }

    Ok(ForwardPass {
        outputs,
        geometry,
        cache: Cache {
            spec_hash: spec.sha256_hex(),
            input: input.clone(),
            trunk: trunk_acts,
            heads: head_caches,
        },
    })
}

/// Wrap a channel-1 probability gradient as the full `[2, h, w]` gradient a
/// two-way softmax head expects (channel 0 receives none directly).
pub fn positive_prob_grad(grad: &Array2<f64>) -> Array3<f64> {
    let (h, w) = grad.dim();
    let mut out = Array3::zeros((2, h, w));
    out.index_axis_mut(ndarray::Axis(0), 1).assign(grad);
    out
}

/// Backpropagate head-output gradients to every parameter.
///
/// `head_grads` maps head names to gradients with respect to that head's
/// *output* — absolute coordinates for box heads (the basis sum has unit
/// jacobian, so this equals the offset gradient), probabilities for softmax
/// heads. Heads absent from the map contribute nothing. The pass must come
/// from a `forward` with the same spec, otherwise the cache is stale and an
/// error is returned.
pub fn backward(
    state: &ModelState,
    spec: &NetworkSpec,
    pass: &ForwardPass,
    head_grads: &BTreeMap<String, Array3<f64>>,
) -> Result<Gradients> {
    check_state(spec, state)?;
    if pass.cache.spec_hash != spec.sha256_hex() {
        return Err(Error::ShapeMismatch(format!(
            "stale forward cache: not produced by network `{}`",
            spec.name
        )));
    }

    let trunk_len = spec.trunk.len();
    let mut grads = Gradients::zeros_like(state);
    let trunk_out = pass.cache.trunk.last().unwrap();
    let mut d_trunk_out: Array3<f64> = Array3::zeros(trunk_out.dim());

    let mut layer_base = trunk_len;
    for (hi, h) in spec.heads.iter().enumerate() {
        let hc = &pass.cache.heads[hi];
        if let Some(grad) = head_grads.get(&h.name) {
            let last = hc.acts.last().expect("head has layers");
            let mut d: Array3<f64> = match h.kind {
                HeadKind::BoxOffsets => {
                    if grad.dim() != last.dim() {
                        return Err(Error::ShapeMismatch(format!(
                            "gradient for head `{}` is {:?}, output is {:?}",
                            h.name,
                            grad.dim(),
                            last.dim()
                        )));
                    }
                    grad.clone()
                }
                HeadKind::ChannelSoftmax => {
                    let probs = hc.probs.as_ref().expect("softmax cache");
                    if grad.dim() != probs.dim() {
                        return Err(Error::ShapeMismatch(format!(
                            "gradient for head `{}` is {:?}, output is {:?}",
                            h.name,
                            grad.dim(),
                            probs.dim()
                        )));
                    }
                    channel_softmax_backward(probs, grad)
                }
            };
            for (li, l) in h.layers.iter().enumerate().rev() {
                if l.activation == Activation::Rectifier {
                    relu_backward(&hc.acts[li], &mut d);
                }
                let input = if li == 0 { trunk_out } else { &hc.acts[li - 1] };
                let idx = layer_base + li;
                let (d_in, d_w, d_b) = conv2d_backward(input, &state.layers[idx].w, &d, layer_geom(l));
                grads.layers[idx].w = d_w;
                grads.layers[idx].b = d_b;
                d = d_in;
            }
            d_trunk_out += &d;
        }
        layer_base += h.layers.len();
    }

    let mut d = d_trunk_out;
    for (li, l) in spec.trunk.iter().enumerate().rev() {
        if l.activation == Activation::Rectifier {
            relu_backward(&pass.cache.trunk[li], &mut d);
        }
        let input = if li == 0 { &pass.cache.input } else { &pass.cache.trunk[li - 1] };
        let (d_in, d_w, d_b) = conv2d_backward(input, &state.layers[li].w, &d, layer_geom(l));
        grads.layers[li].w = d_w;
        grads.layers[li].b = d_b;
        d = d_in;
    }
    Ok(grads)
}

// ----- SGD ------------------------------------------------------------------

/// Learning-rate schedule: per-group base rates decayed by a fixed factor
/// every `decay_epochs` epochs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Schedule {
    pub lr_trunk: f64,
    pub lr_heads: f64,
    pub decay_factor: f64,
    pub decay_epochs: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            lr_trunk: 0.01,
            lr_heads: 0.01,
            decay_factor: 0.1,
            decay_epochs: 20,
        }
    }
}

impl Schedule {
    /// Effective rate for a group at a (zero-based) epoch; with defaults the
    /// base 0.01 becomes 0.001 from epoch 20 on.
    pub fn effective(&self, group: Group, epoch: usize) -> f64 {
        let base = match group {
            Group::Trunk => self.lr_trunk,
            Group::Head => self.lr_heads,
        };
        if self.decay_epochs == 0 {
            return base;
        }
        base * self.decay_factor.powi((epoch / self.decay_epochs) as i32)
    }
}

/// One SGD step `w -= lr * g` with the group rate at `state.epoch`.
/// Non-finite gradients abort with a divergence error instead of poisoning
/// the weights.
pub fn sgd_step(
    state: &mut ModelState,
    spec: &NetworkSpec,
    grads: &Gradients,
    schedule: &Schedule,
) -> Result<()> {
    check_state(spec, state)?;
    if grads.layers.len() != state.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient layers for {} parameter layers",
            grads.layers.len(),
            state.layers.len()
        )));
    }
    for g in &grads.layers {
        if g.w.iter().chain(g.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                net: spec.name.clone(),
                epoch: state.epoch,
                msg: "non-finite gradient".into(),
            });
        }
    }
    let plan = spec.plan();
    for ((l, g), p) in state.layers.iter_mut().zip(&grads.layers).zip(&plan) {
        let lr = schedule.effective(p.group, state.epoch);
        l.w.scaled_add(-lr, &g.w);
        l.b.scaled_add(-lr, &g.b);
    }
    Ok(())
}

// ----- checkpoints ----------------------------------------------------------

const CHECKPOINT_MAGIC: &str = "pixprop-checkpoint v1";

/// Write `state` as a checkpoint: a text header (name, spec hash, shapes,
/// seed, epoch) followed by the raw little-endian f64 parameters in layer
/// order, weights before bias.
pub fn save_checkpoint(state: &ModelState, spec: &NetworkSpec, path: &Path) -> Result<()> {
    check_state(spec, state)?;
    let mut header = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(header, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(header, "name: {}", spec.name);
    let _ = writeln!(header, "spec: {}", spec.sha256_hex());
    let _ = writeln!(header, "seed: {}", state.seed);
    let _ = writeln!(header, "epoch: {}", state.epoch);
    let _ = writeln!(header, "layers: {}", state.layers.len());
    for (i, l) in state.layers.iter().enumerate() {
        let (oc, ic, kh, kw) = l.w.dim();
        let _ = writeln!(header, "layer {i}: w {oc} {ic} {kh} {kw} b {}", l.b.len());
    }
    let _ = writeln!(header, "data:");

    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    for l in &state.layers {
        for v in l.w.iter().chain(l.b.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load a checkpoint, verifying it was written for exactly this spec.
pub fn load_checkpoint(path: &Path, spec: &NetworkSpec) -> Result<ModelState> {
    let err = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let marker = b"data:\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| err("missing data marker".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| err("header is not UTF-8".into()))?;
    let body = &bytes[split + marker.len()..];

    let mut fields = BTreeMap::new();
    let mut lines = header.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(err("not a checkpoint file".into()));
    }
    for line in lines {
        if let Some((k, v)) = line.split_once(": ") {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| err(format!("missing field `{k}`")));
    if get("name")? != &spec.name {
        return Err(err(format!(
            "checkpoint is for network `{}`, expected `{}`",
            get("name")?,
            spec.name
        )));
    }
    if get("spec")? != &spec.sha256_hex() {
        return Err(err("architecture hash mismatch (stale checkpoint?)".into()));
    }
    let seed: u64 = get("seed")?.parse().map_err(|_| err("bad seed".into()))?;
    let epoch: usize = get("epoch")?.parse().map_err(|_| err("bad epoch".into()))?;

    let plan = spec.plan();
    let mut layers = Vec::with_capacity(plan.len());
    let mut off = 0usize;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let need = n * 8;
        if off + need > body.len() {
            return Err(err("truncated parameter data".into()));
        }
        let vals = body[off..off + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += need;
        Ok(vals)
    };
    for p in &plan {
        let wdim = (p.spec.out_channels, p.in_channels, p.spec.kernel, p.spec.kernel);
        let wn = wdim.0 * wdim.1 * wdim.2 * wdim.3;
        let w = Array4::from_shape_vec(wdim, take(wn)?).expect("shape math");
        let b = Array1::from_vec(take(p.spec.out_channels)?);
        layers.push(LayerParams { w, b });
    }
    if off != body.len() {
        return Err(err("trailing bytes after parameters".into()));
    }
    Ok(ModelState {
        layers,
        epoch,
        seed,
    })
}
