//! Differentiable operations. Forward functions build graph nodes;
//! `backward_step` dispatches the matching gradient rule.
//!
//! Convolution inner loops run over contiguous output rows so the compiler
//! can vectorize them; the input gradient is only computed when the input
//! actually requires it (it never does during ordinary training, where the
//! pseudo-image is a constant).

use super::real::Real;
use super::tensor::{check_finite, numel, Op, Tensor};
use super::NnError;

fn mismatch(op: &'static str, expected: String, actual: String) -> NnError {
    NnError::ShapeMismatch {
        op,
        expected,
        actual,
    }
}

/// Dot product with eight independent partial sums; a fixed summation order
/// that the compiler can keep vectorized (a plain reduction cannot be,
/// because float addition is not reassociable).
#[inline]
fn dot_lanes<T: Real>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::ZERO; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            lanes[l] += xa[l] * xb[l];
        }
    }
    let mut acc = T::ZERO;
    for l in lanes {
        acc += l;
    }
    for (ra, rb) in ca.remainder().iter().zip(cb.remainder()) {
        acc += *ra * *rb;
    }
    acc
}

/// Even/odd phase split of every row of a [C, H, W] volume: with stride 2,
/// each kernel tap reads one phase contiguously instead of gathering.
struct PhaseSplit<T> {
    even: Vec<T>,
    odd: Vec<T>,
    w_even: usize,
    w_odd: usize,
}

fn deinterleave<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> PhaseSplit<T> {
    let w_even = w.div_ceil(2);
    let w_odd = w / 2;
    let mut even = vec![T::ZERO; c * h * w_even];
    let mut odd = vec![T::ZERO; c * h * w_odd];
    for row in 0..c * h {
        let src = &x[row * w..(row + 1) * w];
        let e = &mut even[row * w_even..(row + 1) * w_even];
        for (i, v) in e.iter_mut().enumerate() {
            *v = src[2 * i];
        }
        let o = &mut odd[row * w_odd..(row + 1) * w_odd];
        for (i, v) in o.iter_mut().enumerate() {
            *v = src[2 * i + 1];
        }
    }
    PhaseSplit {
        even,
        odd,
        w_even,
        w_odd,
    }
}

impl<T: Real> PhaseSplit<T> {
    /// Contiguous phase slice equivalent to `x[row][ox*2 + k - pad]` for
    /// `ox in [ox_lo, ox_hi)`.
    fn tap_slice(&self, row: usize, k: usize, pad: usize, ox_lo: usize, ox_hi: usize) -> &[T] {
        let t = k as isize - pad as isize;
        let r = t.rem_euclid(2);
        let q = (t - r) / 2;
        let start = (ox_lo as isize + q) as usize;
        let n = ox_hi - ox_lo;
        if r == 0 {
            &self.even[row * self.w_even + start..row * self.w_even + start + n]
        } else {
            &self.odd[row * self.w_odd + start..row * self.w_odd + start + n]
        }
    }
}

/// Valid output range [lo, hi) along one axis so that `o*stride + k - pad`
/// stays inside [0, in_len).
fn conv_range(stride: usize, pad: usize, k: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let max_i = in_len as isize - 1 - k as isize + pad as isize;
    if max_i < 0 {
        return (0, 0);
    }
    let hi = ((max_i as usize) / stride + 1).min(out_len);
    (lo, hi.max(lo))
}

/// 2D cross-correlation: `x` is [C_in, H, W], `weight` [C_out, C_in, KH, KW],
/// `bias` [C_out]. Output spatial size is `floor((H + 2*pad - KH)/stride) + 1`.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    let xs = x.shape();
    let ws = weight.shape();
    let bs = bias.shape();
    if xs.len() != 3 || ws.len() != 4 || bs.len() != 1 {
        return Err(mismatch(
            "conv2d",
            "x [C,H,W], weight [O,C,KH,KW], bias [O]".into(),
            format!("x {xs:?}, weight {ws:?}, bias {bs:?}"),
        ));
    }
    if !(stride == 1 || stride == 2) {
        return Err(mismatch("conv2d", "stride in {1,2}".into(), format!("{stride}")));
    }
    let (c_in, h, w) = (xs[0], xs[1], xs[2]);
    let (c_out, kc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if kc != c_in || bs[0] != c_out {
        return Err(mismatch(
            "conv2d",
            format!("weight [*, {c_in}, *, *] and bias [{c_out}]"),
            format!("weight {ws:?}, bias {bs:?}"),
        ));
    }
    let oh = (h + 2 * pad).checked_sub(kh).map(|v| v / stride + 1);
    let ow = (w + 2 * pad).checked_sub(kw).map(|v| v / stride + 1);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(mismatch(
            "conv2d",
            "kernel no larger than padded input".into(),
            format!("input {h}x{w}, pad {pad}, kernel {kh}x{kw}"),
        ));
    };

    let xd = x.data();
    let wd = weight.data();
    let bd = bias.data();
    let phases = (stride == 2).then(|| deinterleave(&xd, c_in, h, w));
    let mut out = vec![T::ZERO; c_out * oh * ow];
    // Row-accumulator order: each output row is produced in one pass while
    // the contributing input rows stay hot in cache.
    for co in 0..c_out {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        let b = bd[co];
        for oy in 0..oh {
            let orow = &mut plane[oy * ow..(oy + 1) * ow];
            orow.iter_mut().for_each(|v| *v = b);
            for ci in 0..c_in {
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let wrow = &wd[((co * c_in + ci) * kh + ky) * kw..][..kw];
                    for (kx, wv) in wrow.iter().enumerate() {
                        let wv = *wv;
                        let (ox_lo, ox_hi) = conv_range(stride, pad, kx, w, ow);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let irow = match &phases {
                            None => {
                                let ix0 = ox_lo + kx - pad;
                                &xd[ci * h * w + iy * w + ix0..][..ox_hi - ox_lo]
                            }
                            Some(ph) => ph.tap_slice(ci * h + iy, kx, pad, ox_lo, ox_hi),
                        };
                        for (o, i) in orow[ox_lo..ox_hi].iter_mut().zip(irow) {
                            *o += wv * *i;
                        }
                    }
                }
            }
        }
    }
    check_finite("conv2d", &out)?;
    drop(xd);
    drop(wd);
    drop(bd);
    Ok(Tensor::from_op(
        vec![c_out, oh, ow],
        out,
        vec![x.clone(), weight.clone(), bias.clone()],
        Op::Conv2d { stride, pad },
    ))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let out: Vec<T> = x.data().iter().map(|v| v.maximum(T::ZERO)).collect();
    check_finite("relu", &out)?;
    Ok(Tensor::from_op(x.shape(), out, vec![x.clone()], Op::Relu))
}

/// Nearest-neighbor doubling of the two trailing spatial dims of [C, H, W].
pub fn upsample_nearest2x<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(mismatch("upsample_nearest2x", "[C,H,W]".into(), format!("{s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = vec![T::ZERO; c * oh * ow];
    for ci in 0..c {
        for y in 0..h {
            let irow = &xd[(ci * h + y) * w..(ci * h + y + 1) * w];
            for dy in 0..2 {
                let orow = &mut out[(ci * oh + 2 * y + dy) * ow..(ci * oh + 2 * y + dy + 1) * ow];
                for (xi, v) in irow.iter().enumerate() {
                    orow[2 * xi] = *v;
                    orow[2 * xi + 1] = *v;
                }
            }
        }
    }
    drop(xd);
    Ok(Tensor::from_op(
        vec![c, oh, ow],
        out,
        vec![x.clone()],
        Op::Upsample2x,
    ))
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    same_shape("add", a, b)?;
    let out: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x + *y).collect();
    check_finite("add", &out)?;
    Ok(Tensor::from_op(a.shape(), out, vec![a.clone(), b.clone()], Op::Add))
}

pub fn sub<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    same_shape("sub", a, b)?;
    let out: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x - *y).collect();
    check_finite("sub", &out)?;
    Ok(Tensor::from_op(a.shape(), out, vec![a.clone(), b.clone()], Op::Sub))
}

/// Reads `c_len` channels starting at `c0` from a [C, H, W] feature map at
/// each (row, col) anchor; output is [n_anchors, c_len].
pub fn gather_pixels<T: Real>(
    x: &Tensor<T>,
    anchors: &[(usize, usize)],
    c0: usize,
    c_len: usize,
) -> Result<Tensor<T>, NnError> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(mismatch("gather_pixels", "[C,H,W]".into(), format!("{s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if c0 + c_len > c {
        return Err(mismatch(
            "gather_pixels",
            format!("channels within 0..{c}"),
            format!("{c0}..{}", c0 + c_len),
        ));
    }
    for &(r, cc) in anchors {
        if r >= h || cc >= w {
            return Err(mismatch(
                "gather_pixels",
                format!("anchor within {h}x{w}"),
                format!("({r}, {cc})"),
            ));
        }
    }
    let xd = x.data();
    let mut out = vec![T::ZERO; anchors.len() * c_len];
    for (i, &(r, cc)) in anchors.iter().enumerate() {
        for j in 0..c_len {
            out[i * c_len + j] = xd[(c0 + j) * h * w + r * w + cc];
        }
    }
    drop(xd);
    Ok(Tensor::from_op(
        vec![anchors.len(), c_len],
        out,
        vec![x.clone()],
        Op::GatherPixels {
            anchors: anchors.to_vec(),
            c0,
            c_len,
        },
    ))
}

/// Selects rows of a [n, m] matrix; indices may repeat.
pub fn gather_rows<T: Real>(x: &Tensor<T>, idx: &[usize]) -> Result<Tensor<T>, NnError> {
    let s = x.shape();
    if s.len() != 2 {
        return Err(mismatch("gather_rows", "[n,m]".into(), format!("{s:?}")));
    }
    let (n, m) = (s[0], s[1]);
    if let Some(bad) = idx.iter().find(|i| **i >= n) {
        return Err(mismatch("gather_rows", format!("row < {n}"), format!("{bad}")));
    }
    let xd = x.data();
    let mut out = vec![T::ZERO; idx.len() * m];
    for (i, &r) in idx.iter().enumerate() {
        out[i * m..(i + 1) * m].copy_from_slice(&xd[r * m..(r + 1) * m]);
    }
    drop(xd);
    Ok(Tensor::from_op(
        vec![idx.len(), m],
        out,
        vec![x.clone()],
        Op::GatherRows { idx: idx.to_vec() },
    ))
}

/// Euclidean norm of each row of [n, m]; the gradient at an all-zero row is
/// defined as zero.
pub fn row_norm<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let s = x.shape();
    if s.len() != 2 {
        return Err(mismatch("row_norm", "[n,m]".into(), format!("{s:?}")));
    }
    let (n, m) = (s[0], s[1]);
    let xd = x.data();
    let mut out = vec![T::ZERO; n];
    for i in 0..n {
        let row = &xd[i * m..(i + 1) * m];
        out[i] = dot_lanes(row, row).sqrt();
    }
    drop(xd);
    Ok(Tensor::from_op(vec![n], out, vec![x.clone()], Op::RowNorm))
}

/// Elementwise `a * x + b`.
pub fn affine<T: Real>(x: &Tensor<T>, a: T, b: T) -> Result<Tensor<T>, NnError> {
    let out: Vec<T> = x.data().iter().map(|v| a * *v + b).collect();
    check_finite("affine", &out)?;
    Ok(Tensor::from_op(x.shape(), out, vec![x.clone()], Op::Affine { a }))
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let out: Vec<T> = x
        .data()
        .iter()
        .map(|v| T::ONE / (T::ONE + (-*v).exp()))
        .collect();
    check_finite("sigmoid", &out)?;
    Ok(Tensor::from_op(x.shape(), out, vec![x.clone()], Op::Sigmoid))
}

pub fn sum<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let mut acc = T::ZERO;
    for v in x.data().iter() {
        acc += *v;
    }
    check_finite("sum", &[acc])?;
    Ok(Tensor::from_op(vec![1], vec![acc], vec![x.clone()], Op::Sum))
}

pub fn mean<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let n = x.len();
    if n == 0 {
        return Err(mismatch("mean", "nonempty tensor".into(), "0 elements".into()));
    }
    let mut acc = T::ZERO;
    for v in x.data().iter() {
        acc += *v;
    }
    let out = acc / T::from_f64(n as f64);
    check_finite("mean", &[out])?;
    Ok(Tensor::from_op(vec![1], vec![out], vec![x.clone()], Op::Mean))
}

/// `scale * sum over (i, j, k) of k * s[i] * s[j]` for a vector `s`.
pub fn pair_weighted<T: Real>(
    s: &Tensor<T>,
    pairs: &[(usize, usize, T)],
    scale: T,
) -> Result<Tensor<T>, NnError> {
    let shape = s.shape();
    if shape.len() != 1 {
        return Err(mismatch("pair_weighted", "[n]".into(), format!("{shape:?}")));
    }
    let n = shape[0];
    if let Some((i, j, _)) = pairs.iter().find(|(i, j, _)| *i >= n || *j >= n) {
        return Err(mismatch(
            "pair_weighted",
            format!("indices < {n}"),
            format!("({i}, {j})"),
        ));
    }
    let sd = s.data();
    let mut acc = T::ZERO;
    for (i, j, k) in pairs {
        acc += *k * sd[*i] * sd[*j];
    }
    let out = scale * acc;
    check_finite("pair_weighted", &[out])?;
    drop(sd);
    Ok(Tensor::from_op(
        vec![1],
        vec![out],
        vec![s.clone()],
        Op::PairWeighted {
            pairs: pairs.to_vec(),
            scale,
        },
    ))
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Applies the gradient rule of one node, accumulating into its parents.
pub(super) fn backward_step<T: Real>(t: &Tensor<T>) -> Result<(), NnError> {
    let node = t.inner.borrow();
    let Some(grad) = node.grad.as_ref() else {
        // Not on any path that influenced the loss.
        return Ok(());
    };
    match &node.op {
        Op::Leaf => {}
        Op::Conv2d { stride, pad } => {
            conv2d_backward(grad, &node.shape, &node.parents, *stride, *pad);
        }
        Op::Relu => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let xd = x.data();
                let dx: Vec<T> = xd
                    .iter()
                    .zip(grad)
                    .map(|(v, g)| if *v > T::ZERO { *g } else { T::ZERO })
                    .collect();
                drop(xd);
                x.accumulate_grad_owned(dx);
            }
        }
        Op::Upsample2x => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let s = x.shape();
                let (c, h, w) = (s[0], s[1], s[2]);
                let (oh, ow) = (2 * h, 2 * w);
                let mut dx = vec![T::ZERO; c * h * w];
                for ci in 0..c {
                    for y in 0..oh {
                        let grow = &grad[(ci * oh + y) * ow..(ci * oh + y + 1) * ow];
                        let drow = &mut dx[(ci * h + y / 2) * w..(ci * h + y / 2 + 1) * w];
                        for (xi, g) in grow.iter().enumerate() {
                            drow[xi / 2] += *g;
                        }
                    }
                }
                x.accumulate_grad_owned(dx);
            }
        }
        Op::Add => {
            for p in &node.parents {
                if p.requires_grad() {
                    p.accumulate_grad(grad);
                }
            }
        }
        Op::Sub => {
            let (a, b) = (&node.parents[0], &node.parents[1]);
            if a.requires_grad() {
                a.accumulate_grad(grad);
            }
            if b.requires_grad() {
                let neg: Vec<T> = grad.iter().map(|g| -*g).collect();
                b.accumulate_grad(&neg);
            }
        }
        Op::GatherPixels { anchors, c0, c_len } => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let s = x.shape();
                let (h, w) = (s[1], s[2]);
                let mut dx = vec![T::ZERO; numel(&s)];
                for (i, &(r, cc)) in anchors.iter().enumerate() {
                    for j in 0..*c_len {
                        dx[(c0 + j) * h * w + r * w + cc] += grad[i * c_len + j];
                    }
                }
                x.accumulate_grad_owned(dx);
            }
        }
        Op::GatherRows { idx } => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let s = x.shape();
                let m = s[1];
                let mut dx = vec![T::ZERO; numel(&s)];
                for (i, &r) in idx.iter().enumerate() {
                    for j in 0..m {
                        dx[r * m + j] += grad[i * m + j];
                    }
                }
                x.accumulate_grad(&dx);
            }
        }
        Op::RowNorm => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let s = x.shape();
                let m = s[1];
                let xd = x.data();
                let norms = &node.data;
                let mut dx = vec![T::ZERO; numel(&s)];
                for (i, norm) in norms.iter().enumerate() {
                    if *norm > T::ZERO {
                        let scale = grad[i] / *norm;
                        for j in 0..m {
                            dx[i * m + j] = scale * xd[i * m + j];
                        }
                    }
                }
                drop(xd);
                x.accumulate_grad(&dx);
            }
        }
        Op::Affine { a } => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let dx: Vec<T> = grad.iter().map(|g| *a * *g).collect();
                x.accumulate_grad(&dx);
            }
        }
        Op::Sigmoid => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let dx: Vec<T> = node
                    .data
                    .iter()
                    .zip(grad)
                    .map(|(y, g)| *g * *y * (T::ONE - *y))
                    .collect();
                x.accumulate_grad(&dx);
            }
        }
        Op::Sum => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let dx = vec![grad[0]; x.len()];
                x.accumulate_grad(&dx);
            }
        }
        Op::Mean => {
            let x = &node.parents[0];
            if x.requires_grad() {
                let g = grad[0] / T::from_f64(x.len() as f64);
                let dx = vec![g; x.len()];
                x.accumulate_grad(&dx);
            }
        }
        Op::PairWeighted { pairs, scale } => {
            let s = &node.parents[0];
            if s.requires_grad() {
                let sd = s.data();
                let mut ds = vec![T::ZERO; sd.len()];
                let g = grad[0] * *scale;
                for (i, j, k) in pairs {
                    ds[*i] += g * *k * sd[*j];
                    ds[*j] += g * *k * sd[*i];
                }
                drop(sd);
                s.accumulate_grad(&ds);
            }
        }
    }
    Ok(())
}

fn conv2d_backward<T: Real>(
    grad: &[T],
    out_shape: &[usize],
    parents: &[Tensor<T>],
    stride: usize,
    pad: usize,
) {
    let (x, weight, bias) = (&parents[0], &parents[1], &parents[2]);
    let xs = x.shape();
    let ws = weight.shape();
    let (c_in, h, w) = (xs[0], xs[1], xs[2]);
    let (c_out, _, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let (oh, ow) = (out_shape[1], out_shape[2]);

    if bias.requires_grad() {
        let mut db = vec![T::ZERO; c_out];
        for (co, slot) in db.iter_mut().enumerate() {
            let mut acc = T::ZERO;
            for g in &grad[co * oh * ow..(co + 1) * oh * ow] {
                acc += *g;
            }
            *slot = acc;
        }
        bias.accumulate_grad(&db);
    }

    let want_dw = weight.requires_grad();
    let want_dx = x.requires_grad();
    if !want_dw && !want_dx {
        return;
    }
    let xd = x.data();
    let wd = weight.data();
    let mut dw = if want_dw {
        vec![T::ZERO; wd.len()]
    } else {
        Vec::new()
    };
    let mut dx = if want_dx {
        vec![T::ZERO; xd.len()]
    } else {
        Vec::new()
    };
    // Weight gradient: stream each output-grad row once, accumulating all
    // (ci, ky, kx) taps for that channel into a small local buffer.
    if want_dw {
        let phases = (stride == 2).then(|| deinterleave(&xd, c_in, h, w));
        let taps = c_in * kh * kw;
        for co in 0..c_out {
            let gplane = &grad[co * oh * ow..(co + 1) * oh * ow];
            let local = &mut dw[co * taps..(co + 1) * taps];
            for oy in 0..oh {
                let grow_full = &gplane[oy * ow..(oy + 1) * ow];
                for ci in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for kx in 0..kw {
                            let (ox_lo, ox_hi) = conv_range(stride, pad, kx, w, ow);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            let xs = match &phases {
                                None => {
                                    let ix0 = ox_lo + kx - pad;
                                    &xd[ci * h * w + iy * w + ix0..][..ox_hi - ox_lo]
                                }
                                Some(ph) => ph.tap_slice(ci * h + iy, kx, pad, ox_lo, ox_hi),
                            };
                            local[(ci * kh + ky) * kw + kx] +=
                                dot_lanes(&grow_full[ox_lo..ox_hi], xs);
                        }
                    }
                }
            }
        }
    }

    // Input gradient. Stride 1 produces each dx row in one pass; stride 2
    // accumulates into even/odd phase buffers (contiguous writes) and
    // interleaves them at the end.
    if want_dx {
        if stride == 1 {
            for ci in 0..c_in {
                let dplane = &mut dx[ci * h * w..(ci + 1) * h * w];
                for iy in 0..h {
                    let drow = &mut dplane[iy * w..(iy + 1) * w];
                    for co in 0..c_out {
                        let gplane = &grad[co * oh * ow..(co + 1) * oh * ow];
                        for ky in 0..kh {
                            // oy + ky - pad = iy
                            let oy = iy as isize + pad as isize - ky as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let grow_full = &gplane[oy as usize * ow..(oy as usize + 1) * ow];
                            let wbase = ((co * c_in + ci) * kh + ky) * kw;
                            for kx in 0..kw {
                                let wv = wd[wbase + kx];
                                let (ox_lo, ox_hi) = conv_range(1, pad, kx, w, ow);
                                if ox_lo >= ox_hi {
                                    continue;
                                }
                                let ix0 = ox_lo + kx - pad;
                                let ds = &mut drow[ix0..ix0 + (ox_hi - ox_lo)];
                                for (d, g) in ds.iter_mut().zip(&grow_full[ox_lo..ox_hi]) {
                                    *d += wv * *g;
                                }
                            }
                        }
                    }
                }
            }
        } else {
            let w_even = w.div_ceil(2);
            let w_odd = w / 2;
            let mut de = vec![T::ZERO; c_in * h * w_even];
            let mut dodd = vec![T::ZERO; c_in * h * w_odd];
            for co in 0..c_out {
                let gplane = &grad[co * oh * ow..(co + 1) * oh * ow];
                for oy in 0..oh {
                    let grow_full = &gplane[oy * ow..(oy + 1) * ow];
                    for ci in 0..c_in {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            let wbase = ((co * c_in + ci) * kh + ky) * kw;
                            for kx in 0..kw {
                                let wv = wd[wbase + kx];
                                let (ox_lo, ox_hi) = conv_range(stride, pad, kx, w, ow);
                                if ox_lo >= ox_hi {
                                    continue;
                                }
                                let t = kx as isize - pad as isize;
                                let r = t.rem_euclid(2);
                                let q = (t - r) / 2;
                                let start = (ox_lo as isize + q) as usize;
                                let n = ox_hi - ox_lo;
                                let row = ci * h + iy;
                                let ds = if r == 0 {
                                    &mut de[row * w_even + start..row * w_even + start + n]
                                } else {
                                    &mut dodd[row * w_odd + start..row * w_odd + start + n]
                                };
                                for (d, g) in ds.iter_mut().zip(&grow_full[ox_lo..ox_hi]) {
                                    *d += wv * *g;
                                }
                            }
                        }
                    }
                }
            }
            for row in 0..c_in * h {
                let dst = &mut dx[row * w..(row + 1) * w];
                let e = &de[row * w_even..(row + 1) * w_even];
                let o = &dodd[row * w_odd..(row + 1) * w_odd];
                for (i, v) in e.iter().enumerate() {
                    dst[2 * i] = *v;
                }
                for (i, v) in o.iter().enumerate() {
                    dst[2 * i + 1] = *v;
                }
            }
        }
    }
    drop(xd);
    drop(wd);
    if want_dw {
        weight.accumulate_grad_owned(dw);
    }
    if want_dx {
        x.accumulate_grad_owned(dx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn p(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::param(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_1x1() {
        let x = t(&[1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let w = t(&[1, 1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn conv_all_ones_counts_receptive_field() {
        let x = t(&[1, 5, 5], &[1.0; 25]);
        let w = t(&[1, 1, 3, 3], &[1.0; 9]);
        let b = t(&[1], &[0.0]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), vec![1, 3, 3]);
        assert!(y.to_vec().iter().all(|v| *v == 9.0));
    }

    #[test]
    fn conv_stride2_shape() {
        let x = t(&[2, 8, 10], &vec![0.5; 160]);
        let w = t(&[3, 2, 3, 3], &vec![0.1; 54]);
        let b = t(&[3], &[0.0; 3]);
        let y = conv2d(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), vec![3, 4, 5]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = t(&[2, 4, 4], &vec![0.0; 32]);
        let w = t(&[1, 3, 3, 3], &vec![0.0; 27]);
        let b = t(&[1], &[0.0]);
        assert!(matches!(
            conv2d(&x, &w, &b, 1, 1),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn relu_clamps() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn upsample_replicates_and_backward_sums() {
        let x = p(&[1, 1, 1], &[7.0]);
        let y = upsample_nearest2x(&x).unwrap();
        assert_eq!(y.to_vec(), vec![7.0; 4]);
        let s = sum(&y).unwrap();
        s.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0]);
    }

    #[test]
    fn add_and_sub_backward() {
        let a = p(&[2], &[1.0, 2.0]);
        let b = p(&[2], &[3.0, 4.0]);
        let y = sub(&add(&a, &b).unwrap(), &b).unwrap();
        let s = sum(&y).unwrap();
        s.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 1.0]);
        assert_eq!(b.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn diamond_graph_accumulates_once() {
        // y = sum(add(x, x)) must give dy/dx = 2, not 4.
        let x = p(&[2], &[1.0, 1.0]);
        let s = sum(&add(&x, &x).unwrap()).unwrap();
        s.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn gather_pixels_reads_channels_at_anchor() {
        // Channel c holds constant value c.
        let mut data = vec![0.0; 4 * 2 * 3];
        for c in 0..4 {
            for i in 0..6 {
                data[c * 6 + i] = c as f64;
            }
        }
        let x = t(&[4, 2, 3], &data);
        let e = gather_pixels(&x, &[(0, 0), (1, 2)], 2, 2).unwrap();
        assert_eq!(e.to_vec(), vec![2.0, 3.0, 2.0, 3.0]);
    }

    #[test]
    fn row_norm_345() {
        let x = t(&[1, 2], &[3.0, 4.0]);
        assert_eq!(row_norm(&x).unwrap().to_vec(), vec![5.0]);
    }

    #[test]
    fn row_norm_zero_row_has_zero_grad() {
        let x = p(&[2, 2], &[0.0, 0.0, 3.0, 4.0]);
        let n = row_norm(&x).unwrap();
        let s = sum(&n).unwrap();
        s.backward().unwrap();
        let g = x.grad().unwrap();
        let want = [0.0, 0.0, 0.6, 0.8];
        assert!(g.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn sigmoid_midpoint() {
        let x = t(&[1], &[0.0]);
        assert_eq!(sigmoid(&x).unwrap().to_vec(), vec![0.5]);
    }

    #[test]
    fn pair_weighted_value_and_grad() {
        let s = p(&[3], &[1.0, 2.0, 3.0]);
        // 0.5 * (2 * s0 * s1 + 1 * s1 * s2) = 0.5 * (4 + 6) = 5
        let y = pair_weighted(&s, &[(0, 1, 2.0), (1, 2, 1.0)], 0.5).unwrap();
        assert_eq!(y.item().unwrap(), 5.0);
        y.backward().unwrap();
        // ds0 = .5*2*s1 = 2; ds1 = .5*(2*s0 + 1*s2) = 2.5; ds2 = .5*s1 = 1
        assert_eq!(s.grad().unwrap(), vec![2.0, 2.5, 1.0]);
    }

    #[test]
    fn mean_of_empty_rejected() {
        let x = t(&[0], &[]);
        assert!(mean(&x).is_err());
    }

    #[test]
    fn grad_free_graph_keeps_no_parents() {
        let x = t(&[2], &[1.0, 2.0]);
        let y = relu(&x).unwrap();
        assert!(!y.requires_grad());
        assert!(y.backward().is_ok());
        assert!(y.grad().is_none());
    }

    #[cfg(debug_assertions)]
    #[test]
    fn non_finite_detected_in_debug() {
        let x = t(&[1], &[1.0e308]);
        let y = add(&x, &x);
        assert!(matches!(y, Err(NnError::NonFinite { .. })));
    }
}
