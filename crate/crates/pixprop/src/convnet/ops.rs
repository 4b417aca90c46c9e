//! Low-level layer kernels: 2-D convolution (stride / zero-padding /
//! dilation), rectifier, and per-cell channel softmax — each with its
//! backward pass. Everything is `f64`, channels-first `[C, H, W]`, and
//! written as plain loops over precomputed valid ranges so the hot paths
//! stay branch-free; weights are `[OC, IC, K, K]`.

use ndarray::{Array1, Array3, Array4};

/// Stride / padding / dilation of one convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

/// Output length of a convolution along one axis, or `None` when the input
/// is too small for even one application of the kernel.
pub fn conv_out_len(input: usize, kernel: usize, g: ConvGeom) -> Option<usize> {
    let span = g.dilation * (kernel - 1) + 1;
    let padded = input + 2 * g.padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / g.stride + 1)
}

/// Valid output range `lo..hi` along one axis for kernel offset `off =
/// k * dilation - padding`, i.e. the outputs whose input index
/// `o * stride + off` falls inside `0..input`.
fn valid_range(out_len: usize, input: usize, stride: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 {
        ((-off) as usize).div_ceil(stride)
    } else {
        0
    };
    // largest o with o*stride + off <= input - 1
    let max_in = input as isize - 1 - off;
    if max_in < 0 {
        return (0, 0);
    }
    let hi = (max_in as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Convolution forward. `input` is `[IC, H, W]`, `w` is `[OC, IC, K, K]`,
/// output `[OC, OH, OW]` with zero padding outside the input.
pub fn conv2d_forward(
    input: &Array3<f64>,
    w: &Array4<f64>,
    b: &Array1<f64>,
    g: ConvGeom,
) -> Array3<f64> {
    let (ic_n, ih, iw) = input.dim();
    let (oc_n, wic, k, _) = w.dim();
    debug_assert_eq!(ic_n, wic);
    let oh = conv_out_len(ih, k, g).expect("input taller than kernel span");
    let ow = conv_out_len(iw, k, g).expect("input wider than kernel span");

    let mut out = Array3::zeros((oc_n, oh, ow));
    let inp = input.as_slice().expect("contiguous input");
    let ws = w.as_slice().expect("contiguous weights");
    let os = out.as_slice_mut().expect("contiguous output");

    for oc in 0..oc_n {
        let bias = b[oc];
        let out_base = oc * oh * ow;
        os[out_base..out_base + oh * ow].fill(bias);
        for ic in 0..ic_n {
            let in_base = ic * ih * iw;
            for ky in 0..k {
                let off_y = (ky * g.dilation) as isize - g.padding as isize;
                let (oy_lo, oy_hi) = valid_range(oh, ih, g.stride, off_y);
                for kx in 0..k {
                    let off_x = (kx * g.dilation) as isize - g.padding as isize;
                    let (ox_lo, ox_hi) = valid_range(ow, iw, g.stride, off_x);
                    let wv = ws[((oc * ic_n + ic) * k + ky) * k + kx];
                    if wv == 0.0 && (ox_lo >= ox_hi || oy_lo >= oy_hi) {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * g.stride) as isize + off_y;
                        let in_row = in_base + iy as usize * iw;
                        let out_row = out_base + oy * ow;
                        for ox in ox_lo..ox_hi {
                            let ix = (ox * g.stride) as isize + off_x;
                            os[out_row + ox] += wv * inp[in_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution: `(d_input, d_weights, d_bias)` given the
/// upstream gradient `d_out` and the forward-time `input`.
pub fn conv2d_backward(
    input: &Array3<f64>,
    w: &Array4<f64>,
    d_out: &Array3<f64>,
    g: ConvGeom,
) -> (Array3<f64>, Array4<f64>, Array1<f64>) {
    let (ic_n, ih, iw) = input.dim();
    let (oc_n, _, k, _) = w.dim();
    let (_, oh, ow) = d_out.dim();

    let mut d_input = Array3::zeros((ic_n, ih, iw));
    let mut d_w = Array4::zeros(w.dim());
    let mut d_b = Array1::zeros(oc_n);

    let inp = input.as_slice().unwrap();
    let ws = w.as_slice().unwrap();
    let dos = d_out.as_slice().unwrap();
    let dis = d_input.as_slice_mut().unwrap();
    let dws = d_w.as_slice_mut().unwrap();

    for oc in 0..oc_n {
        let out_base = oc * oh * ow;
        d_b[oc] = dos[out_base..out_base + oh * ow].iter().sum();
        for ic in 0..ic_n {
            let in_base = ic * ih * iw;
            for ky in 0..k {
                let off_y = (ky * g.dilation) as isize - g.padding as isize;
                let (oy_lo, oy_hi) = valid_range(oh, ih, g.stride, off_y);
                for kx in 0..k {
                    let off_x = (kx * g.dilation) as isize - g.padding as isize;
                    let (ox_lo, ox_hi) = valid_range(ow, iw, g.stride, off_x);
                    let widx = ((oc * ic_n + ic) * k + ky) * k + kx;
                    let wv = ws[widx];
                    let mut wacc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = ((oy * g.stride) as isize + off_y) as usize;
                        let in_row = in_base + iy * iw;
                        let out_row = out_base + oy * ow;
                        for ox in ox_lo..ox_hi {
                            let ix = ((ox * g.stride) as isize + off_x) as usize;
                            let go = dos[out_row + ox];
                            wacc += go * inp[in_row + ix];
                            dis[in_row + ix] += wv * go;
                        }
                    }
                    dws[widx] = wacc;
                }
            }
        }
    }
    (d_input, d_w, d_b)
}

/// Rectifier forward, `max(0, x)` element-wise.
pub fn relu_forward(x: &mut Array3<f64>) {
    x.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Rectifier backward from the forward **output** (`y > 0` iff the unit was
/// active; ties at exactly 0 pass no gradient).
pub fn relu_backward(y: &Array3<f64>, d_y: &mut Array3<f64>) {
    for (dv, &yv) in d_y.iter_mut().zip(y.iter()) {
        if yv <= 0.0 {
            *dv = 0.0;
        }
    }
}

/// Per-cell softmax over the channel axis of `[C, H, W]` logits, with the
/// usual max-shift for stability. Every cell's channels sum to 1.
pub fn channel_softmax_forward(logits: &Array3<f64>) -> Array3<f64> {
    let (cn, h, w) = logits.dim();
    let mut out = Array3::zeros((cn, h, w));
    for r in 0..h {
        for c in 0..w {
            let mut m = f64::NEG_INFINITY;
            for ch in 0..cn {
                m = m.max(logits[[ch, r, c]]);
            }
            let mut denom = 0.0;
            for ch in 0..cn {
                let e = (logits[[ch, r, c]] - m).exp();
                out[[ch, r, c]] = e;
                denom += e;
            }
            for ch in 0..cn {
                out[[ch, r, c]] /= denom;
            }
        }
    }
    out
}

/// Softmax backward: given forward-time probabilities and the gradient with
/// respect to them, return the gradient with respect to the logits,
/// `dl_j = p_j * (dp_j - sum_k dp_k p_k)` per cell.
pub fn channel_softmax_backward(probs: &Array3<f64>, d_probs: &Array3<f64>) -> Array3<f64> {
    let (cn, h, w) = probs.dim();
    let mut out = Array3::zeros((cn, h, w));
    for r in 0..h {
        for c in 0..w {
            let mut dot = 0.0;
            for ch in 0..cn {
                dot += d_probs[[ch, r, c]] * probs[[ch, r, c]];
            }
            for ch in 0..cn {
                out[[ch, r, c]] = probs[[ch, r, c]] * (d_probs[[ch, r, c]] - dot);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derived_rng, Domain};
    use rand::Rng;

    fn geom(stride: usize, padding: usize, dilation: usize) -> ConvGeom {
        ConvGeom {
            stride,
            padding,
            dilation,
        }
    }

    /// Textbook reference convolution: quadruple loop straight off the
    /// definition, no range precomputation.
    fn conv_reference(
        input: &Array3<f64>,
        w: &Array4<f64>,
        b: &Array1<f64>,
        g: ConvGeom,
    ) -> Array3<f64> {
        let (ic_n, ih, iw) = input.dim();
        let (oc_n, _, k, _) = w.dim();
        let oh = conv_out_len(ih, k, g).unwrap();
        let ow = conv_out_len(iw, k, g).unwrap();
        let mut out = Array3::zeros((oc_n, oh, ow));
        for oc in 0..oc_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..ic_n {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky * g.dilation) as isize
                                    - g.padding as isize;
                                let ix = (ox * g.stride + kx * g.dilation) as isize
                                    - g.padding as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < ih && (ix as usize) < iw {
                                    acc += w[[oc, ic, ky, kx]] * input[[ic, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                    out[[oc, oy, ox]] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_reference_across_geometries() {
        let mut rng = derived_rng(3, Domain::WeightInit, 99);
        for &(s, p, d, k, ih, iw) in &[
            (1usize, 0usize, 1usize, 1usize, 5usize, 7usize),
            (1, 1, 1, 3, 8, 8),
            (2, 1, 1, 3, 9, 12),
            (1, 2, 2, 3, 8, 10),
            (2, 2, 2, 3, 13, 13),
        ] {
            let input = Array3::from_shape_fn((3, ih, iw), |_| rng.gen_range(-1.0..1.0));
            let w = Array4::from_shape_fn((4, 3, k, k), |_| rng.gen_range(-0.5..0.5));
            let b = Array1::from_shape_fn(4, |_| rng.gen_range(-0.5..0.5));
            let fast = conv2d_forward(&input, &w, &b, geom(s, p, d));
            let slow = conv_reference(&input, &w, &b, geom(s, p, d));
            assert_eq!(fast.dim(), slow.dim());
            for (a, r) in fast.iter().zip(slow.iter()) {
                assert!((a - r).abs() < 1e-12, "stride {s} pad {p} dil {d}");
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = derived_rng(4, Domain::WeightInit, 100);
        let g = geom(2, 1, 2);
        let input = Array3::from_shape_fn((2, 9, 9), |_| rng.gen_range(-1.0..1.0));
        let w = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.gen_range(-0.5..0.5));
        let b = Array1::from_shape_fn(3, |_| rng.gen_range(-0.5..0.5));
        let out = conv2d_forward(&input, &w, &b, g);
        // scalar objective: weighted sum of outputs with fixed coefficients
        let coeff = Array3::from_shape_fn(out.dim(), |_| rng.gen_range(-1.0..1.0));
        let (d_in, d_w, d_b) = conv2d_backward(&input, &w, &coeff, g);

        let h = 1e-6;
        let f = |inp: &Array3<f64>, ww: &Array4<f64>, bb: &Array1<f64>| {
            (&conv2d_forward(inp, ww, bb, g) * &coeff).sum()
        };
        let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);

        for idx in [(0usize, 2usize, 3usize), (1, 0, 0), (1, 8, 8)] {
            let mut ip = input.clone();
            ip[idx] += h;
            let mut im = input.clone();
            im[idx] -= h;
            let fd = (f(&ip, &w, &b) - f(&im, &w, &b)) / (2.0 * h);
            assert!(rel(d_in[idx], fd) < 1e-5, "d_input at {idx:?}");
        }
        for idx in [(0usize, 0usize, 0usize, 0usize), (2, 1, 2, 2), (1, 1, 1, 0)] {
            let mut wp = w.clone();
            wp[idx] += h;
            let mut wm = w.clone();
            wm[idx] -= h;
            let fd = (f(&input, &wp, &b) - f(&input, &wm, &b)) / (2.0 * h);
            assert!(rel(d_w[idx], fd) < 1e-5, "d_w at {idx:?}");
        }
        for i in 0..3 {
            let mut bp = b.clone();
            bp[i] += h;
            let mut bm = b.clone();
            bm[i] -= h;
            let fd = (f(&input, &w, &bp) - f(&input, &w, &bm)) / (2.0 * h);
            assert!(rel(d_b[i], fd) < 1e-5, "d_b at {i}");
        }
    }

    #[test]
    fn softmax_normalizes_and_backprop_matches_fd() {
        let mut rng = derived_rng(5, Domain::WeightInit, 101);
        let logits = Array3::from_shape_fn((2, 3, 3), |_| rng.gen_range(-3.0..3.0));
        let probs = channel_softmax_forward(&logits);
        for r in 0..3 {
            for c in 0..3 {
                let s = probs[[0, r, c]] + probs[[1, r, c]];
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let coeff = Array3::from_shape_fn((2, 3, 3), |_| rng.gen_range(-1.0..1.0));
        let d_logits = channel_softmax_backward(&probs, &coeff);
        let h = 1e-6;
        for idx in [(0usize, 0usize, 0usize), (1, 2, 1), (0, 1, 2)] {
            let mut lp = logits.clone();
            lp[idx] += h;
            let mut lm = logits.clone();
            lm[idx] -= h;
            let fp = (&channel_softmax_forward(&lp) * &coeff).sum();
            let fm = (&channel_softmax_forward(&lm) * &coeff).sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!((d_logits[idx] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn relu_gates_gradient_by_activation() {
        let mut x = Array3::from_shape_vec((1, 1, 4), vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        relu_forward(&mut x);
        assert_eq!(x.as_slice().unwrap(), &[0.0, 0.0, 0.5, 2.0]);
        let mut dy = Array3::from_elem((1, 1, 4), 1.0);
        relu_backward(&x, &mut dy);
        assert_eq!(dy.as_slice().unwrap(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
