use super::{Axis, Dims4, ParamTensor, Tensor4};
use crate::error::{Error, Result};

fn check_shape(op: &'static str, p: &ParamTensor, expected: &[usize]) -> Result<()> {
    if p.shape() != expected {
        return Err(Error::shape(
            op,
            format!("parameter {:?}", p.shape()),
            format!("expected {expected:?}"),
        ));
    }
    Ok(())
}

fn check_fc(x: Dims4, w: &ParamTensor, b: &ParamTensor) -> Result<usize> {
    let [c_in, c_out] = match w.shape() {
        &[i, o] => [i, o],
        s => {
            return Err(Error::shape(
                "fc_channel",
                format!("weight {s:?}"),
                "rank-2 weight",
            ))
        }
    };
    if x.c != c_in {
        return Err(Error::shape(
            "fc_channel",
            format!("input {x}"),
            format!("weight [{c_in}, {c_out}]"),
        ));
    }
    check_shape("fc_channel", b, &[c_out])?;
    Ok(c_out)
}

/// Dot product with four independent accumulators so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Channel-wise fully connected layer: `y_j = sum_i x_i * W[i, j] + b_j` at
/// every (t, h, w) position.
pub fn fc_channel(x: &Tensor4, w: &ParamTensor, b: &ParamTensor) -> Result<Tensor4> {
    let c_out = check_fc(x.dims(), w, b)?;
    let d = x.dims();
    let mut y = Tensor4::zeros(d.with_channels(c_out));
    for j in 0..c_out {
        let yj = y.channel_mut(j);
        yj.fill(b.value[j]);
        for i in 0..d.c {
            let wij = w.value[i * c_out + j];
            if wij == 0.0 {
                continue;
            }
            for (yv, xv) in yj.iter_mut().zip(x.channel(i)) {
                *yv += wij * xv;
            }
        }
    }
    Ok(y)
}

/// Input gradient of [`fc_channel`] without touching parameter gradients.
pub fn fc_channel_input_grad(w: &ParamTensor, grad_y: &Tensor4) -> Result<Tensor4> {
    let (c_in, c_out) = match w.shape() {
        &[i, o] => (i, o),
        s => {
            return Err(Error::shape(
                "fc_channel_backward",
                format!("weight {s:?}"),
                "rank-2 weight",
            ))
        }
    };
    if grad_y.channels() != c_out {
        return Err(Error::shape(
            "fc_channel_backward",
            format!("grad {}", grad_y.dims()),
            format!("weight [{c_in}, {c_out}]"),
        ));
    }
    let mut gx = Tensor4::zeros(grad_y.dims().with_channels(c_in));
    for i in 0..c_in {
        let gxi = gx.channel_mut(i);
        for j in 0..c_out {
            let wij = w.value[i * c_out + j];
            for (g, gy) in gxi.iter_mut().zip(grad_y.channel(j)) {
                *g += wij * gy;
            }
        }
    }
    Ok(gx)
}

/// Backward of [`fc_channel`]: accumulates into `w.grad` and `b.grad` and
/// returns the input gradient.
pub fn fc_channel_backward(
    x: &Tensor4,
    w: &mut ParamTensor,
    b: &mut ParamTensor,
    grad_y: &Tensor4,
) -> Result<Tensor4> {
    let c_out = check_fc(x.dims(), w, b)?;
    if grad_y.dims() != x.dims().with_channels(c_out) {
        return Err(Error::shape(
            "fc_channel_backward",
            grad_y.dims(),
            x.dims().with_channels(c_out),
        ));
    }
    for j in 0..c_out {
        let gy = grad_y.channel(j);
        b.grad[j] += gy.iter().sum::<f64>();
        for i in 0..x.channels() {
            let s = dot(x.channel(i), gy);
            w.grad[i * c_out + j] += s;
        }
    }
    fc_channel_input_grad(w, grad_y)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf) Gaussian-error linear unit.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

pub fn activation(x: &Tensor4) -> Tensor4 {
    x.map(gelu_scalar)
}

pub fn activation_backward(x: &Tensor4, grad_y: &Tensor4) -> Result<Tensor4> {
    if x.dims() != grad_y.dims() {
        return Err(Error::shape("activation_backward", x.dims(), grad_y.dims()));
    }
    let mut g = grad_y.clone();
    for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
        *gv *= gelu_grad_scalar(*xv);
    }
    Ok(g)
}

fn check_axis_params(x: Dims4, kernel: &ParamTensor, bias: &ParamTensor) -> Result<()> {
    check_shape("conv_axis_depthwise", kernel, &[x.c, 3])?;
    check_shape("conv_axis_depthwise", bias, &[x.c])
}

/// Output and input spans of one tap within an `(len, inner)` block: output
/// row `l` reads input row `l + tap - 1`.
fn tap_spans(tap: usize, len: usize, inner: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let lo = 1usize.saturating_sub(tap);
    let hi = (len + 1).saturating_sub(tap).min(len);
    if lo >= hi {
        return (0..0, 0..0);
    }
    let shift = |l: usize| (l + tap - 1) * inner;
    (lo * inner..hi * inner, shift(lo)..shift(hi))
}

/// Per-channel width-3 convolution (cross-correlation) along `axis` with zero
/// "same" padding. Output dims equal input dims.
pub fn conv_axis_depthwise(
    x: &Tensor4,
    axis: Axis,
    kernel: &ParamTensor,
    bias: &ParamTensor,
) -> Result<Tensor4> {
    let d = x.dims();
    check_axis_params(d, kernel, bias)?;
    let (outer, len, inner) = axis.layout(d);
    let mut y = Tensor4::zeros(d);
    for c in 0..d.c {
        let k = &kernel.value[c * 3..c * 3 + 3];
        let xc = x.channel(c);
        let yc = y.channel_mut(c);
        yc.fill(bias.value[c]);
        for o in 0..outer {
            let block = o * len * inner..(o + 1) * len * inner;
            let (xb, yb) = (&xc[block.clone()], &mut yc[block]);
            for (tap, &kv) in k.iter().enumerate() {
                let (dst, src) = tap_spans(tap, len, inner);
                for (yv, xv) in yb[dst].iter_mut().zip(&xb[src]) {
                    *yv += kv * xv;
                }
            }
        }
    }
    Ok(y)
}

pub fn conv_axis_depthwise_backward(
    x: &Tensor4,
    axis: Axis,
    kernel: &mut ParamTensor,
    bias: &mut ParamTensor,
    grad_y: &Tensor4,
) -> Result<Tensor4> {
    let d = x.dims();
    check_axis_params(d, kernel, bias)?;
    if grad_y.dims() != d {
        return Err(Error::shape("conv_axis_depthwise_backward", grad_y.dims(), d));
    }
    let (outer, len, inner) = axis.layout(d);
    let mut gx = Tensor4::zeros(d);
    for c in 0..d.c {
        let xc = x.channel(c);
        let gyc = grad_y.channel(c);
        bias.grad[c] += gyc.iter().sum::<f64>();
        let mut kgrad = [0.0; 3];
        let k = [
            kernel.value[c * 3],
            kernel.value[c * 3 + 1],
            kernel.value[c * 3 + 2],
        ];
        let gxc = gx.channel_mut(c);
        for o in 0..outer {
            let block = o * len * inner..(o + 1) * len * inner;
            let (xb, gyb, gxb) = (&xc[block.clone()], &gyc[block.clone()], &mut gxc[block]);
            for tap in 0..3 {
                let (dst, src) = tap_spans(tap, len, inner);
                let mut acc = 0.0;
                for ((g, xv), gxv) in gyb[dst].iter().zip(&xb[src.clone()]).zip(&mut gxb[src]) {
                    acc += g * xv;
                    *gxv += k[tap] * g;
                }
                kgrad[tap] += acc;
            }
        }
        for tap in 0..3 {
            kernel.grad[c * 3 + tap] += kgrad[tap];
        }
    }
    Ok(gx)
}

/// Shape of a grouped temporal kernel: `[channels, channels / groups, k]`.
pub fn dwconv_kernel_shape(channels: usize, k: usize, groups: usize) -> Result<[usize; 3]> {
    if groups == 0 || channels % groups != 0 {
        return Err(Error::Config(format!(
            "channel count {channels} is not divisible by group count {groups}"
        )));
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!("temporal kernel length {k} must be odd")));
    }
    Ok([channels, channels / groups, k])
}

fn check_dwconv(
    d: Dims4,
    kernel: &ParamTensor,
    bias: &ParamTensor,
    k: usize,
    groups: usize,
) -> Result<usize> {
    let shape = dwconv_kernel_shape(d.c, k, groups)?;
    check_shape("dwconv_temporal", kernel, &shape)?;
    check_shape("dwconv_temporal", bias, &[d.c])?;
    Ok(shape[1])
}

/// Grouped 1-D convolution along time with kernel length `k` (odd), `groups`
/// channel groups and zero padding `(k - 1) / 2`. With `groups == C` it is a
/// true depthwise convolution.
pub fn dwconv_temporal(
    x: &Tensor4,
    kernel: &ParamTensor,
    bias: &ParamTensor,
    k: usize,
    groups: usize,
) -> Result<Tensor4> {
    let d = x.dims();
    let per_group = check_dwconv(d, kernel, bias, k, groups)?;
    let half = (k - 1) / 2;
    let hw = d.h * d.w;
    let mut y = Tensor4::zeros(d);
    for o in 0..d.c {
        let g = o / per_group;
        let yo = y.channel_mut(o);
        yo.fill(bias.value[o]);
        for j in 0..per_group {
            let xi = x.channel(g * per_group + j);
            let taps = &kernel.value[(o * per_group + j) * k..(o * per_group + j + 1) * k];
            for t in 0..d.t {
                for (tap, &kv) in taps.iter().enumerate() {
                    let Some(src_t) = (t + tap).checked_sub(half).filter(|&s| s < d.t) else {
                        continue;
                    };
                    let dst = &mut yo[t * hw..(t + 1) * hw];
                    let src = &xi[src_t * hw..(src_t + 1) * hw];
                    for (a, b) in dst.iter_mut().zip(src) {
                        *a += kv * b;
                    }
                }
            }
        }
    }
    Ok(y)
}

pub fn dwconv_temporal_backward(
    x: &Tensor4,
    kernel: &mut ParamTensor,
    bias: &mut ParamTensor,
    k: usize,
    groups: usize,
    grad_y: &Tensor4,
) -> Result<Tensor4> {
    let d = x.dims();
    let per_group = check_dwconv(d, kernel, bias, k, groups)?;
    if grad_y.dims() != d {
        return Err(Error::shape("dwconv_temporal_backward", grad_y.dims(), d));
    }
    let half = (k - 1) / 2;
    let hw = d.h * d.w;
    let mut gx = Tensor4::zeros(d);
    for o in 0..d.c {
        let g = o / per_group;
        let gyo = grad_y.channel(o);
        bias.grad[o] += gyo.iter().sum::<f64>();
        for j in 0..per_group {
            let i = g * per_group + j;
            let woff = (o * per_group + j) * k;
            for t in 0..d.t {
                let gdst = &gyo[t * hw..(t + 1) * hw];
                for tap in 0..k {
                    let Some(src_t) = (t + tap).checked_sub(half).filter(|&s| s < d.t) else {
                        continue;
                    };
                    let kv = kernel.value[woff + tap];
                    let xsrc = &x.channel(i)[src_t * hw..(src_t + 1) * hw];
                    kernel.grad[woff + tap] += dot(gdst, xsrc);
                    let gsrc = &mut gx.channel_mut(i)[src_t * hw..(src_t + 1) * hw];
                    for (a, b) in gsrc.iter_mut().zip(gdst) {
                        *a += kv * b;
                    }
                }
            }
        }
    }
    Ok(gx)
}

/// Number of channels routed to the first half of a split: `round(alpha * channels)`,
/// rounding halves up.
pub fn routed_channels(alpha: f64, channels: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "split ratio {alpha} is outside [0, 1]"
        )));
    }
    let n = (alpha * channels as f64 + 0.5).floor() as usize;
    Ok(n.min(channels))
}

/// Splits at ratio `alpha`; the first part has `round(alpha * C)` channels.
pub fn split_channels(x: &Tensor4, alpha: f64) -> Result<(Tensor4, Tensor4)> {
    let c1 = routed_channels(alpha, x.channels())?;
    Ok(split_at(x, c1))
}

pub fn split_at(x: &Tensor4, c1: usize) -> (Tensor4, Tensor4) {
    let d = x.dims();
    assert!(c1 <= d.c, "split point {c1} beyond {} channels", d.c);
    let cut = c1 * d.plane();
    let first = Tensor4 {
        dims: d.with_channels(c1),
        data: x.data()[..cut].to_vec(),
    };
    let second = Tensor4 {
        dims: d.with_channels(d.c - c1),
        data: x.data()[cut..].to_vec(),
    };
    (first, second)
}

pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    let (da, db) = (a.dims(), b.dims());
    if !da.same_extent(&db) {
        return Err(Error::shape("concat_channels", da, db));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Ok(Tensor4 {
        dims: da.with_channels(da.c + db.c),
        data,
    })
}

pub fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    if a.dims() != b.dims() {
        return Err(Error::shape("add", a.dims(), b.dims()));
    }
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// `beta * x` for a scalar parameter `beta`.
pub fn scale(x: &Tensor4, beta: &ParamTensor) -> Result<Tensor4> {
    check_shape("scale", beta, &[1])?;
    let b = beta.value[0];
    Ok(x.map(|v| b * v))
}

pub fn scale_backward(x: &Tensor4, beta: &mut ParamTensor, grad_y: &Tensor4) -> Result<Tensor4> {
    check_shape("scale", beta, &[1])?;
    if x.dims() != grad_y.dims() {
        return Err(Error::shape("scale_backward", x.dims(), grad_y.dims()));
    }
    beta.grad[0] += x.dot(grad_y);
    let b = beta.value[0];
    Ok(grad_y.map(|g| b * g))
}
