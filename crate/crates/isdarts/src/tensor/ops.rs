//! Primitive differentiable operations.
//!
//! Each function validates shapes, computes the forward result with plain
//! loops, pushes the output into the tape arena, and records the op entry
//! needed for the backward rule. Spatial ops expect rank-4 `(B, C, H, W)`
//! inputs; `linear` works on rank-2 `(N, F)`.

use crate::error::{Error, Result};
use crate::tensor::tape::{ConvCfg, PoolCfg};
use crate::tensor::{Element, Tape, TapeOp, ValueId};

fn expect_rank(tape: &Tape<impl Element>, id: ValueId, rank: usize, what: &str) -> Result<()> {
    let shape = tape.shape(id);
    if shape.len() != rank {
        return Err(Error::Dimension(format!(
            "{what} expects rank-{rank} input, got shape {shape:?}"
        )));
    }
    Ok(())
}

/// 2-D convolution, no bias. `w` has shape `(Cout, Cin/groups, KH, KW)`.
pub fn conv2d<E: Element>(
    tape: &mut Tape<E>,
    x: ValueId,
    w: ValueId,
    cfg: ConvCfg,
) -> Result<ValueId> {
    expect_rank(tape, x, 4, "conv2d")?;
    expect_rank(tape, w, 4, "conv2d weight")?;
    let xs = tape.shape(x).to_vec();
    let ws = tape.shape(w).to_vec();
    let (b, cin, h, win) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, cinpg, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if cfg.groups == 0 || cfg.stride == 0 || cfg.dilation == 0 {
        return Err(Error::Dimension("conv2d stride/dilation/groups must be positive".into()));
    }
    if cin % cfg.groups != 0 || cout % cfg.groups != 0 || cinpg != cin / cfg.groups {
        return Err(Error::Dimension(format!(
            "conv2d group mismatch: input channels {cin}, weight {ws:?}, groups {}",
            cfg.groups
        )));
    }
    let eff_kh = cfg.dilation * (kh - 1) + 1;
    let eff_kw = cfg.dilation * (kw - 1) + 1;
    if h + 2 * cfg.padding < eff_kh || win + 2 * cfg.padding < eff_kw {
        return Err(Error::Dimension(format!(
            "conv2d kernel {kh}x{kw} (dilation {}) does not fit input {h}x{win} with padding {}",
            cfg.dilation, cfg.padding
        )));
    }
    let oh = (h + 2 * cfg.padding - eff_kh) / cfg.stride + 1;
    let ow = (win + 2 * cfg.padding - eff_kw) / cfg.stride + 1;
    let ocpg = cout / cfg.groups;

    let xv = tape.value(x).to_vec();
    let wv = tape.value(w).to_vec();
    let mut out = vec![E::zero(); b * cout * oh * ow];
    for bi in 0..b {
        for oc in 0..cout {
            let g = oc / ocpg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = E::zero();
                    for icl in 0..cinpg {
                        let ic = g * cinpg + icl;
                        for ky in 0..kh {
                            let iy = (oy * cfg.stride + ky * cfg.dilation) as isize
                                - cfg.padding as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * cfg.stride + kx * cfg.dilation) as isize
                                    - cfg.padding as isize;
                                if ix < 0 || ix as usize >= win {
                                    continue;
                                }
                                acc += wv[((oc * cinpg + icl) * kh + ky) * kw + kx]
                                    * xv[((bi * cin + ic) * h + iy as usize) * win + ix as usize];
                            }
                        }
                    }
                    out[((bi * cout + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    let out_id = tape.push(vec![b, cout, oh, ow], out);
    tape.record(TapeOp::Conv2d { x, w, out: out_id, cfg });
    Ok(out_id)
}

/// Fully connected layer: `out = x · wᵀ + b` with `x (N, F)`, `w (K, F)`.
pub fn linear<E: Element>(
    tape: &mut Tape<E>,
    x: ValueId,
    w: ValueId,
    b: ValueId,
) -> Result<ValueId> {
    expect_rank(tape, x, 2, "linear")?;
    expect_rank(tape, w, 2, "linear weight")?;
    let xs = tape.shape(x).to_vec();
    let ws = tape.shape(w).to_vec();
    let (n, f) = (xs[0], xs[1]);
    let (k, fw) = (ws[0], ws[1]);
    if f != fw || tape.shape(b) != [k] {
        return Err(Error::Dimension(format!(
            "linear shape mismatch: x {xs:?}, w {ws:?}, b {:?}",
            tape.shape(b)
        )));
    }
    let xv = tape.value(x).to_vec();
    let wv = tape.value(w).to_vec();
    let bv = tape.value(b).to_vec();
    let mut out = vec![E::zero(); n * k];
    for i in 0..n {
        for j in 0..k {
            let mut acc = bv[j];
            for l in 0..f {
                acc += xv[i * f + l] * wv[j * f + l];
            }
            out[i * k + j] = acc;
        }
    }
    let out_id = tape.push(vec![n, k], out);
    tape.record(TapeOp::Linear { x, w, b, out: out_id });
    Ok(out_id)
}

pub fn relu<E: Element>(tape: &mut Tape<E>, x: ValueId) -> ValueId {
    let shape = tape.shape(x).to_vec();
    let out: Vec<E> = tape.value(x).iter().map(|v| v.max(E::zero())).collect();
    let out_id = tape.push(shape, out);
    tape.record(TapeOp::Relu { x, out: out_id });
    out_id
}

/// Batch normalisation without affine parameters.
///
/// In training mode the batch statistics (population variance over
/// `B·H·W` entries per channel) normalise the input and are returned so the
/// caller can fold them into running estimates. In eval mode the provided
/// running statistics normalise instead and the return is `None`.
pub fn batch_norm<E: Element>(
    tape: &mut Tape<E>,
    x: ValueId,
    running_mean: &[E],
    running_var: &[E],
    train: bool,
    eps: f64,
) -> Result<(ValueId, Option<(Vec<E>, Vec<E>)>)> {
    expect_rank(tape, x, 4, "batch_norm")?;
    let xs = tape.shape(x).to_vec();
    let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::Dimension(format!(
            "batch_norm running stats have {} channels, input has {c}",
            running_mean.len()
        )));
    }
    let per_channel = b * h * w;
    let xv = tape.value(x).to_vec();
    let eps = E::lit(eps);

    let (mean, var) = if train {
        let n = E::lit(per_channel as f64);
        let mut mean = vec![E::zero(); c];
        let mut var = vec![E::zero(); c];
        for ci in 0..c {
            let mut s = E::zero();
            for bi in 0..b {
                for p in 0..h * w {
                    s += xv[(bi * c + ci) * h * w + p];
                }
            }
            mean[ci] = s / n;
            let mut v = E::zero();
            for bi in 0..b {
                for p in 0..h * w {
                    let d = xv[(bi * c + ci) * h * w + p] - mean[ci];
                    v += d * d;
                }
            }
            var[ci] = v / n;
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let inv_std: Vec<E> = var.iter().map(|v| E::one() / (*v + eps).sqrt()).collect();
    let mut out = vec![E::zero(); xv.len()];
    for bi in 0..b {
        for ci in 0..c {
            for p in 0..h * w {
                let idx = (bi * c + ci) * h * w + p;
                out[idx] = (xv[idx] - mean[ci]) * inv_std[ci];
            }
        }
    }
    let out_id = tape.push(xs, out);
    tape.record(TapeOp::BatchNorm {
        x,
        out: out_id,
        mean: mean.clone(),
        inv_std,
        train,
    });
    Ok((out_id, if train { Some((mean, var)) } else { None }))
}

/// Average pooling with zero padding; the divisor is always `kernel²`.
pub fn avg_pool<E: Element>(tape: &mut Tape<E>, x: ValueId, cfg: PoolCfg) -> Result<ValueId> {
    expect_rank(tape, x, 4, "avg_pool")?;
    let xs = tape.shape(x).to_vec();
    let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    if cfg.stride == 0 || cfg.kernel == 0 {
        return Err(Error::Dimension("avg_pool kernel/stride must be positive".into()));
    }
    if h + 2 * cfg.padding < cfg.kernel || w + 2 * cfg.padding < cfg.kernel {
        return Err(Error::Dimension(format!(
            "avg_pool kernel {} does not fit input {h}x{w} with padding {}",
            cfg.kernel, cfg.padding
        )));
    }
    let oh = (h + 2 * cfg.padding - cfg.kernel) / cfg.stride + 1;
    let ow = (w + 2 * cfg.padding - cfg.kernel) / cfg.stride + 1;
    let area = E::lit((cfg.kernel * cfg.kernel) as f64);
    let xv = tape.value(x).to_vec();
    let mut out = vec![E::zero(); b * c * oh * ow];
    for bi in 0..b {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = E::zero();
                    for ky in 0..cfg.kernel {
                        let iy = (oy * cfg.stride + ky) as isize - cfg.padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..cfg.kernel {
                            let ix = (ox * cfg.stride + kx) as isize - cfg.padding as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            acc += xv[((bi * c + ci) * h + iy as usize) * w + ix as usize];
                        }
                    }
                    out[((bi * c + ci) * oh + oy) * ow + ox] = acc / area;
                }
            }
        }
    }
    let out_id = tape.push(vec![b, c, oh, ow], out);
    tape.record(TapeOp::AvgPool { x, out: out_id, cfg });
    Ok(out_id)
}

/// Max pooling; padded positions never win (they count as `-inf`). Ties go
/// to the first window position in scan order.
pub fn max_pool<E: Element>(tape: &mut Tape<E>, x: ValueId, cfg: PoolCfg) -> Result<ValueId> {
    expect_rank(tape, x, 4, "max_pool")?;
    let xs = tape.shape(x).to_vec();
    let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    if cfg.stride == 0 || cfg.kernel == 0 {
        return Err(Error::Dimension("max_pool kernel/stride must be positive".into()));
    }
    if h + 2 * cfg.padding < cfg.kernel || w + 2 * cfg.padding < cfg.kernel {
        return Err(Error::Dimension(format!(
            "max_pool kernel {} does not fit input {h}x{w} with padding {}",
            cfg.kernel, cfg.padding
        )));
    }
    let oh = (h + 2 * cfg.padding - cfg.kernel) / cfg.stride + 1;
    let ow = (w + 2 * cfg.padding - cfg.kernel) / cfg.stride + 1;
    let xv = tape.value(x).to_vec();
    let mut out = vec![E::zero(); b * c * oh * ow];
    let mut argmax = vec![0usize; b * c * oh * ow];
    for bi in 0..b {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = E::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for ky in 0..cfg.kernel {
                        let iy = (oy * cfg.stride + ky) as isize - cfg.padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..cfg.kernel {
                            let ix = (ox * cfg.stride + kx) as isize - cfg.padding as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let idx = ((bi * c + ci) * h + iy as usize) * w + ix as usize;
                            if xv[idx] > best {
                                best = xv[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((bi * c + ci) * oh + oy) * ow + ox;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    let out_id = tape.push(vec![b, c, oh, ow], out);
    tape.record(TapeOp::MaxPool { x, out: out_id, argmax });
    Ok(out_id)
}

/// Spatial mean: `(B, C, H, W)` → `(B, C)`.
pub fn global_avg_pool<E: Element>(tape: &mut Tape<E>, x: ValueId) -> Result<ValueId> {
    expect_rank(tape, x, 4, "global_avg_pool")?;
    let xs = tape.shape(x).to_vec();
    let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let area = E::lit((h * w) as f64);
    let xv = tape.value(x).to_vec();
    let mut out = vec![E::zero(); b * c];
    for bi in 0..b {
        for ci in 0..c {
            let mut s = E::zero();
            for p in 0..h * w {
                s += xv[(bi * c + ci) * h * w + p];
            }
            out[bi * c + ci] = s / area;
        }
    }
    let out_id = tape.push(vec![b, c], out);
    tape.record(TapeOp::GlobalAvgPool { x, out: out_id });
    Ok(out_id)
}

/// Elementwise sum of one or more same-shape values.
pub fn sum_all<E: Element>(tape: &mut Tape<E>, inputs: &[ValueId]) -> Result<ValueId> {
    let Some(&first) = inputs.first() else {
        return Err(Error::Dimension("sum_all needs at least one input".into()));
    };
    let shape = tape.shape(first).to_vec();
    for &inp in &inputs[1..] {
        if tape.shape(inp) != shape.as_slice() {
            return Err(Error::Dimension(format!(
                "sum_all shape mismatch: {:?} vs {:?}",
                shape,
                tape.shape(inp)
            )));
        }
    }
    let mut out = tape.value(first).to_vec();
    for &inp in &inputs[1..] {
        for (acc, v) in out.iter_mut().zip(tape.value(inp)) {
            *acc += *v;
        }
    }
    let out_id = tape.push(shape, out);
    tape.record(TapeOp::Sum { inputs: inputs.to_vec(), out: out_id });
    Ok(out_id)
}

/// Multiply a value by one element of a rank-1 value: `out = s[index] · x`.
pub fn scale_by_elem<E: Element>(
    tape: &mut Tape<E>,
    x: ValueId,
    s: ValueId,
    index: usize,
) -> Result<ValueId> {
    expect_rank(tape, s, 1, "scale_by_elem weights")?;
    if index >= tape.shape(s)[0] {
        return Err(Error::Dimension(format!(
            "scale_by_elem index {index} out of range for weight vector of length {}",
            tape.shape(s)[0]
        )));
    }
    let shape = tape.shape(x).to_vec();
    let sv = tape.value(s)[index];
    let out: Vec<E> = tape.value(x).iter().map(|v| *v * sv).collect();
    let out_id = tape.push(shape, out);
    tape.record(TapeOp::ScaleByElem { x, s, index, out: out_id });
    Ok(out_id)
}

/// Multiply a value by a constant.
pub fn scale<E: Element>(tape: &mut Tape<E>, x: ValueId, factor: E) -> ValueId {
    let shape = tape.shape(x).to_vec();
    let out: Vec<E> = tape.value(x).iter().map(|v| *v * factor).collect();
    let out_id = tape.push(shape, out);
    tape.record(TapeOp::Scale { x, factor, out: out_id });
    out_id
}

/// Numerically stable softmax over a rank-1 value.
pub fn softmax_vec<E: Element>(tape: &mut Tape<E>, x: ValueId) -> Result<ValueId> {
    expect_rank(tape, x, 1, "softmax_vec")?;
    let xv = tape.value(x).to_vec();
    let max = xv.iter().cloned().fold(E::neg_infinity(), E::max);
    let exps: Vec<E> = xv.iter().map(|v| (*v - max).exp()).collect();
    let denom: E = exps.iter().cloned().sum();
    let out: Vec<E> = exps.iter().map(|e| *e / denom).collect();
    let out_id = tape.push(vec![xv.len()], out);
    tape.record(TapeOp::SoftmaxVec { x, out: out_id });
    Ok(out_id)
}

/// Mean softmax cross-entropy over rows: logits `(N, K)`, one label per row.
pub fn softmax_cross_entropy<E: Element>(
    tape: &mut Tape<E>,
    logits: ValueId,
    labels: &[usize],
) -> Result<ValueId> {
    expect_rank(tape, logits, 2, "softmax_cross_entropy")?;
    let ls = tape.shape(logits).to_vec();
    let (n, k) = (ls[0], ls[1]);
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "softmax_cross_entropy got {} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Dimension(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let lv = tape.value(logits).to_vec();
    let mut total = E::zero();
    for i in 0..n {
        let row = &lv[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
        let lse: E = row.iter().map(|v| (*v - max).exp()).sum::<E>().ln() + max;
        total += lse - row[labels[i]];
    }
    let loss = total / E::lit(n as f64);
    let out_id = tape.push(vec![], vec![loss]);
    tape.record(TapeOp::CrossEntropy { logits, labels: labels.to_vec(), out: out_id });
    Ok(out_id)
}

/// Scalar readout: dot product of a value with a constant weight vector of
/// the same length (any rank).
pub fn weighted_sum<E: Element>(tape: &mut Tape<E>, x: ValueId, weights: &[E]) -> Result<ValueId> {
    if weights.len() != tape.value(x).len() {
        return Err(Error::Dimension(format!(
            "weighted_sum got {} weights for {} elements",
            weights.len(),
            tape.value(x).len()
        )));
    }
    let total: E = tape.value(x).iter().zip(weights).map(|(v, w)| *v * *w).sum();
    let out_id = tape.push(vec![], vec![total]);
    tape.record(TapeOp::DotConst { x, weights: weights.to_vec(), out: out_id });
    Ok(out_id)
}

/// Concatenate rank-4 values along the channel axis.
pub fn concat_channels<E: Element>(tape: &mut Tape<E>, inputs: &[ValueId]) -> Result<ValueId> {
    let Some(&first) = inputs.first() else {
        return Err(Error::Dimension("concat_channels needs at least one input".into()));
    };
    expect_rank(tape, first, 4, "concat_channels")?;
    let fs = tape.shape(first).to_vec();
    let (b, h, w) = (fs[0], fs[2], fs[3]);
    let mut ctot = 0usize;
    for &inp in inputs {
        expect_rank(tape, inp, 4, "concat_channels")?;
        let s = tape.shape(inp);
        if s[0] != b || s[2] != h || s[3] != w {
            return Err(Error::Dimension(format!(
                "concat_channels spatial/batch mismatch: {fs:?} vs {s:?}"
            )));
        }
        ctot += s[1];
    }
    let plane = h * w;
    let mut out = vec![E::zero(); b * ctot * plane];
    let mut offset = 0usize;
    for &inp in inputs {
        let ci = tape.shape(inp)[1];
        let v = tape.value(inp).to_vec();
        for bi in 0..b {
            for c in 0..ci {
                let dst = ((bi * ctot + offset + c) * plane)..((bi * ctot + offset + c + 1) * plane);
                let src = ((bi * ci + c) * plane)..((bi * ci + c + 1) * plane);
                out[dst].copy_from_slice(&v[src]);
            }
        }
        offset += ci;
    }
    let out_id = tape.push(vec![b, ctot, h, w], out);
    tape.record(TapeOp::ConcatChannels { inputs: inputs.to_vec(), out: out_id });
    Ok(out_id)
}
