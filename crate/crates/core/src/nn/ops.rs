//! Forward and backward kernels. Each backward takes the upstream gradient
//! with the forward output's shape.

use std::cell::RefCell;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lowest and highest prediction fed to the logarithms of the BCE loss.
pub const BCE_CLAMP: f64 = 1e-7;

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Run `f` on a per-thread buffer of at least `len` values. Contents are
/// stale; callers overwrite what they read.
fn with_scratch<T>(len: usize, f: impl FnOnce(&mut [f64]) -> T) -> T {
    SCRATCH.with(|cell| {
        let mut buf = cell.borrow_mut();
        if buf.len() < len {
            buf.resize(len, 0.0);
        }
        f(&mut buf[..len])
    })
}

/// Output pixels per im2col band; keeps the unfolded block cache resident.
const BAND_PIXELS: usize = 1024;

fn band_rows(h: usize, w: usize) -> usize {
    (BAND_PIXELS / w.max(1)).clamp(1, h.max(1))
}

/// Unfold output rows `y0..y1` of one C×H×W sample into a
/// (C·k·k)×((y1−y0)·W) matrix, zero padded.
#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, y0: usize, y1: usize, col: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let bw = (y1 - y0) * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * bw;
                let dst = &mut col[row..row + bw];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                for y in y0..y1 {
                    let sy = y as isize + dy;
                    let out = &mut dst[(y - y0) * w..(y - y0 + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let lo = (-dx).max(0) as usize;
                    let hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    out[..lo.min(w)].fill(0.0);
                    if hi > lo {
                        let s0 = (lo as isize + dx) as usize;
                        out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                    if hi < w {
                        out[hi.max(lo)..].fill(0.0);
                    }
                }
            }
        }
    }
}

/// Last index reached by an m×n matrix with the given strides, plus one.
fn extent(m: usize, n: usize, (rs, cs): (isize, isize)) -> usize {
    if m == 0 || n == 0 {
        0
    } else {
        ((m - 1) as isize * rs + (n - 1) as isize * cs) as usize + 1
    }
}

/// `c[m×n] = alpha·a[m×k]·b[k×n] + beta·c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (isize, isize),
) {
    assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
    assert!(a.len() >= extent(m, k, (rsa, csa)) && b.len() >= extent(k, n, (rsb, csb)));
    assert!(c.len() >= extent(m, n, (rsc, csc)));
    // SAFETY: the asserts above bound every index reachable through the
    // non-negative strides by the slice lengths.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

fn check_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<usize> {
    let [cout, cin, kh, kw] = w.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!("conv kernel must be odd and square, got {kh}x{kw}")));
    }
    if cin != x.c() {
        return Err(Error::Shape(format!(
            "conv expects {cin} input channels, input has {}",
            x.c()
        )));
    }
    if b.shape() != [1, cout, 1, 1] {
        return Err(Error::Shape(format!("conv bias {:?} != [1,{cout},1,1]", b.shape())));
    }
    Ok(kh)
}

/// Same-size cross-correlation with zero padding `k/2`, plus bias.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let k = check_conv(x, w, b)?;
    let [n, cin, h, wd] = x.shape();
    let cout = w.shape()[0];
    let hw = h * wd;
    let ck = cin * k * k;
    let mut y = Tensor::zeros([n, cout, h, wd]);
    let band = band_rows(h, wd);
    with_scratch(ck * band * wd, |col| {
        for s in 0..n {
            let out = y.sample_mut(s);
            for (co, bias) in b.data().iter().enumerate() {
                out[co * hw..(co + 1) * hw].fill(*bias);
            }
            for y0 in (0..h).step_by(band) {
                let y1 = (y0 + band).min(h);
                let bw = (y1 - y0) * wd;
                im2col(x.sample(s), cin, h, wd, k, y0, y1, col);
                let c = &mut out[y0 * wd..];
                gemm(cout, ck, bw, w.data(), (ck as isize, 1), col, (bw as isize, 1), 1.0, c, (hw as isize, 1));
            }
        }
    });
    Ok(y)
}

pub struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn conv2d_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<ConvGrads> {
    let (dx, dw, db) = conv2d_backward_with(x, w, dy, true)?;
    Ok(ConvGrads {
        dx: dx.expect("requested"),
        dw,
        db,
    })
}

/// Weight and bias gradients, plus the input gradient when `need_dx`.
///
/// The input gradient is the same-size correlation of `dy` with the kernel
/// flipped spatially and its channel axes swapped.
pub(crate) fn conv2d_backward_with(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    need_dx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let [n, cin, h, wd] = x.shape();
    let [cout, _, k, _] = w.shape();
    if dy.shape() != [n, cout, h, wd] {
        return Err(Error::Shape(format!("conv upstream grad {:?}", dy.shape())));
    }
    let hw = h * wd;
    let ck = cin * k * k;
    let kk = k * k;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros([1, cout, 1, 1]);
    let band = band_rows(h, wd);
    with_scratch(ck * band * wd, |col| {
        for s in 0..n {
            let g = dy.sample(s);
            for (co, d) in db.data_mut().iter_mut().enumerate() {
                *d += g[co * hw..(co + 1) * hw].iter().sum::<f64>();
            }
            for y0 in (0..h).step_by(band) {
                let y1 = (y0 + band).min(h);
                let bw = (y1 - y0) * wd;
                im2col(x.sample(s), cin, h, wd, k, y0, y1, col);
                // dW += dY · colᵀ over the band
                let a = &g[y0 * wd..];
                gemm(cout, bw, ck, a, (hw as isize, 1), col, (1, bw as isize), 1.0, dw.data_mut(), (ck as isize, 1));
            }
        }
    });
    if !need_dx {
        return Ok((None, dw, db));
    }
    let mut wt = vec![0.0; cin * cout * kk];
    for (co, filt) in w.data().chunks_exact(cin * kk).enumerate() {
        for (ci, ker) in filt.chunks_exact(kk).enumerate() {
            let dst = &mut wt[(ci * cout + co) * kk..(ci * cout + co + 1) * kk];
            for (d, v) in dst.iter_mut().zip(ker.iter().rev()) {
                *d = *v;
            }
        }
    }
    let mut dx = Tensor::zeros(x.shape());
    let ok = cout * kk;
    with_scratch(ok * band * wd, |col| {
        for s in 0..n {
            let out = dx.sample_mut(s);
            for y0 in (0..h).step_by(band) {
                let y1 = (y0 + band).min(h);
                let bw = (y1 - y0) * wd;
                im2col(dy.sample(s), cout, h, wd, k, y0, y1, col);
                let c = &mut out[y0 * wd..];
                gemm(cin, ok, bw, &wt, (ok as isize, 1), col, (bw as isize, 1), 0.0, c, (hw as isize, 1));
            }
        }
    });
    Ok((Some(dx), dw, db))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient passes where the forward output was positive.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data_mut()
        .iter_mut()
        .zip(y.data())
        .for_each(|(d, &o)| if o <= 0.0 { *d = 0.0 });
    dx
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        *v = if *v >= 0.0 {
            1.0 / (1.0 + (-*v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        }
    });
    y
}

pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data_mut()
        .iter_mut()
        .zip(y.data())
        .for_each(|(d, &s)| *d *= s * (1.0 - s));
    dx
}

/// 2×2 stride-2 max pooling; also returns the flat argmax per output.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("maxpool2 needs even dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let mut arg = Vec::with_capacity(y.len());
    let src = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for i in [i0 + 1, i0 + w, i0 + w + 1] {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                y.data_mut()[arg.len()] = src[best];
                arg.push(best);
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2_backward(x_shape: [usize; 4], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(x_shape);
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] += g;
    }
    dx
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let src = x.data();
    let dst = y.data_mut();
    for plane in 0..n * c {
        for oy in 0..oh {
            let srow = &src[plane * h * w + (oy / 2) * w..][..w];
            let drow = &mut dst[plane * oh * ow + oy * ow..][..ow];
            for (ox, d) in drow.iter_mut().enumerate() {
                *d = srow[ox / 2];
            }
        }
    }
    y
}

/// Sums each 2×2 block of the upstream gradient.
pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let [n, c, oh, ow] = dy.shape();
    let (h, w) = (oh / 2, ow / 2);
    let mut dx = Tensor::zeros([n, c, h, w]);
    let src = dy.data();
    let dst = dx.data_mut();
    for plane in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                dst[plane * h * w + (oy / 2) * w + ox / 2] += src[plane * oh * ow + oy * ow + ox];
            }
        }
    }
    dx
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::Shape(format!("concat {:?} with {:?}", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        data.extend_from_slice(a.sample(s));
        data.extend_from_slice(b.sample(s));
    }
    Tensor::new([n, ca + cb, h, w], data)
}

/// Inverse of [`concat_channels`]: first `ca` channels, then the rest.
pub fn split_channels(x: &Tensor, ca: usize) -> Result<(Tensor, Tensor)> {
    let [n, c, h, w] = x.shape();
    if ca > c {
        return Err(Error::Shape(format!("split at {ca} of {c} channels")));
    }
    let cut = ca * h * w;
    let mut a = Vec::with_capacity(n * cut);
    let mut b = Vec::with_capacity(x.len() - n * cut);
    for s in 0..n {
        let (l, r) = x.sample(s).split_at(cut);
        a.extend_from_slice(l);
        b.extend_from_slice(r);
    }
    Ok((Tensor::new([n, ca, h, w], a)?, Tensor::new([n, c - ca, h, w], b)?))
}

/// Mean positive-weighted binary cross entropy and its gradient w.r.t. `pred`.
pub fn bce_loss(pred: &Tensor, target: &Tensor, weight_pos: f64) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("bce {:?} vs {:?}", pred.shape(), target.shape())));
    }
    if target.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::InvalidParam("bce target outside {0,1}".into()));
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let clamped = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let inside = clamped == p;
        if t == 1.0 {
            loss -= weight_pos * clamped.ln();
            if inside {
                *g = -weight_pos / (clamped * n);
            }
        } else {
            loss -= (1.0 - clamped).ln();
            if inside {
                *g = 1.0 / ((1.0 - clamped) * n);
            }
        }
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("bce_loss".into()));
    }
    Ok((loss, grad))
}
