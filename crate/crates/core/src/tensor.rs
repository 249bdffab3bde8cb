//! Dense row-major `f64` tensors and the convolution arithmetic the
//! generator networks are built from.
//!
//! Images use HWC order. Convolution weights are laid out `k × k × Cin × Cout`
//! for both the forward and the transposed convolution, so the innermost loop
//! always runs over contiguous output channels. All convolution entry points
//! accept either a single `H × W × C` image or a batch `B × H × W × C`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::kernels::{self, gemm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(shape_err(
                "tensor",
                format!("zero-sized dimension in {shape:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} holds {n} elements, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Element at a multi-index (row-major).
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {i} out of bounds for dim {d}");
            acc * d + i
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(shape_err(
                "dot",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Sample `i` of a batched tensor, with the leading dimension dropped.
    pub fn sample(&self, i: usize) -> Tensor {
        let per = self.len() / self.shape[0];
        Tensor {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * per..(i + 1) * per].to_vec(),
        }
    }

    /// Gather samples along the leading dimension.
    pub fn gather(&self, rows: &[usize]) -> Tensor {
        let per = self.len() / self.shape[0];
        let mut data = Vec::with_capacity(per * rows.len());
        for &r in rows {
            data.extend_from_slice(&self.data[r * per..(r + 1) * per]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Tensor { shape, data }
    }

    /// Stack equally shaped tensors along a new leading dimension.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| shape_err("stack", "no tensors to stack"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(shape_err(
                    "stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }
}

/// Square convolution geometry shared by the forward and transposed layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            dilation: 1,
            padding: 0,
        }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(shape_err(
                op,
                format!("kernel, stride and dilation must be positive: {self:?}"),
            ));
        }
        Ok(())
    }

    fn span(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    /// Output side of a forward convolution, or `None` if it would be < 1.
    pub fn conv_out(&self, side: usize) -> Option<usize> {
        let padded = side + 2 * self.padding;
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 || padded < self.span() {
            return None;
        }
        Some((padded - self.span()) / self.stride + 1)
    }

    /// Output side of a transposed convolution, or `None` if it would be < 1.
    pub fn tconv_out(&self, side: usize) -> Option<usize> {
        if side == 0 || self.kernel == 0 || self.stride == 0 || self.dilation == 0 {
            return None;
        }
        let full = (side - 1) * self.stride + self.span();
        (full > 2 * self.padding).then(|| full - 2 * self.padding)
    }
}

/// Batched view of an image tensor: (batch, height, width, channels).
fn image_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((1, h, w, c)),
        [b, h, w, c] => Ok((b, h, w, c)),
        _ => Err(shape_err(
            op,
            format!("input must be H×W×C or B×H×W×C, got {:?}", t.shape()),
        )),
    }
}

fn out_shape(input: &Tensor, b: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
    if input.rank() == 3 {
        vec![h, w, c]
    } else {
        vec![b, h, w, c]
    }
}

fn check_params(
    op: &'static str,
    cin: usize,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<usize> {
    spec.validate(op)?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != spec.kernel || ws[1] != spec.kernel {
        return Err(shape_err(
            op,
            format!(
                "weights must be {k}×{k}×Cin×Cout, got {ws:?}",
                k = spec.kernel
            ),
        ));
    }
    if ws[2] != cin {
        return Err(shape_err(
            op,
            format!("input channels {cin} do not match weight Cin {}", ws[2]),
        ));
    }
    let cout = ws[3];
    if bias.shape() != [cout] {
        return Err(shape_err(
            op,
            format!("bias must have shape [{cout}], got {:?}", bias.shape()),
        ));
    }
    Ok(cout)
}

/// Forward 2D cross-correlation with stride, dilation and zero padding.
///
/// Each output element accumulates `input · weight` in (ky, kx, ci) order and
/// adds the bias last.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (b, h, w, cin) = image_dims("conv2d", input)?;
    let cout = check_params("conv2d", cin, weights, bias, spec)?;
    let oh = spec
        .conv_out(h)
        .ok_or_else(|| shape_err("conv2d", format!("height {h} too small for {spec:?}")))?;
    let ow = spec
        .conv_out(w)
        .ok_or_else(|| shape_err("conv2d", format!("width {w} too small for {spec:?}")))?;
    let map = PixelMap::conv(spec, h, w, oh, ow);
    let mut out = vec![0.0; b * oh * ow * cout];
    for (n0, nb) in map.chunks(b, cin) {
        let patches = map.unfold(
            &input.data()[n0 * h * w * cin..][..nb * h * w * cin],
            nb,
            cin,
        );
        let y = &mut out[n0 * oh * ow * cout..][..nb * oh * ow * cout];
        gemm(
            nb * oh * ow,
            cout,
            map.taps * cin,
            &patches,
            weights.data(),
            y,
        );
    }
    add_bias(&mut out, bias.data());
    Tensor::new(&out_shape(input, b, oh, ow, cout), out)
}

/// Gradients of a forward convolution.
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    let (gx, weights, bias) = conv_grads(false, input, weights, grad_out, spec, true)?;
    Ok(ConvGrads {
        input: gx.expect("input gradient requested"),
        weights,
        bias,
    })
}

/// Shared backward pass of `conv2d` (`transposed == false`) and `tconv2d`.
/// The input gradient is skipped unless `want_input`.
pub(crate) fn conv_grads(
    transposed: bool,
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let op = if transposed {
        "tconv2d_backward"
    } else {
        "conv2d_backward"
    };
    let (b, h, w, cin) = image_dims(op, input)?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != spec.kernel || ws[1] != spec.kernel || ws[2] != cin {
        return Err(shape_err(op, format!("weights {ws:?}")));
    }
    let cout = ws[3];
    let (gb, oh, ow, gc) = image_dims(op, grad_out)?;
    let side = |n| {
        if transposed {
            spec.tconv_out(n)
        } else {
            spec.conv_out(n)
        }
    };
    if gb != b || Some(oh) != side(h) || Some(ow) != side(w) || gc != cout {
        return Err(shape_err(
            op,
            format!(
                "grad {:?} incompatible with input {:?}",
                grad_out.shape(),
                input.shape()
            ),
        ));
    }
    let wd = weights.data();
    let taps = spec.kernel * spec.kernel;
    let mut gbias = vec![0.0; cout];
    add_bias_grad(&mut gbias, grad_out.data());
    let mut gx = want_input.then(|| vec![0.0; b * h * w * cin]);
    let x = input.data();
    let g = grad_out.data();
    let (in_sz, out_sz) = (h * w * cin, oh * ow * cout);
    let gw = if transposed {
        // Rows are input pixels; each gathers the output gradient under its taps.
        let map = PixelMap::tconv(spec, h, w, oh, ow);
        let wt_t = permute_taps(wd, taps, cin, cout, true);
        let mut gwt = vec![0.0; cin * taps * cout];
        for (n0, nb) in map.chunks(b, cout) {
            let gz = map.unfold(&g[n0 * out_sz..][..nb * out_sz], nb, cout);
            let xs = &x[n0 * in_sz..][..nb * in_sz];
            let xt = kernels::transpose(xs, nb * h * w, cin);
            gemm(cin, taps * cout, nb * h * w, &xt, &gz, &mut gwt);
            if let Some(gx) = gx.as_mut() {
                gemm(
                    nb * h * w,
                    cin,
                    taps * cout,
                    &gz,
                    &wt_t,
                    &mut gx[n0 * in_sz..][..nb * in_sz],
                );
            }
        }
        let mut gw = vec![0.0; wd.len()];
        for ci in 0..cin {
            for t in 0..taps {
                for co in 0..cout {
                    gw[(t * cin + ci) * cout + co] = gwt[(ci * taps + t) * cout + co];
                }
            }
        }
        gw
    } else {
        let map = PixelMap::conv(spec, h, w, oh, ow);
        let w_t = kernels::transpose(wd, taps * cin, cout);
        let mut gwt = vec![0.0; cout * taps * cin];
        for (n0, nb) in map.chunks(b, cin) {
            let patches = map.unfold(&x[n0 * in_sz..][..nb * in_sz], nb, cin);
            let gs = &g[n0 * out_sz..][..nb * out_sz];
            let gt = kernels::transpose(gs, nb * oh * ow, cout);
            gemm(cout, taps * cin, nb * oh * ow, &gt, &patches, &mut gwt);
            if let Some(gx) = gx.as_mut() {
                let mut gp = vec![0.0; nb * oh * ow * taps * cin];
                gemm(nb * oh * ow, taps * cin, cout, gs, &w_t, &mut gp);
                map.fold(&gp, nb, cin, &mut gx[n0 * in_sz..][..nb * in_sz]);
            }
        }
        kernels::transpose(&gwt, cout, taps * cin)
    };
    let gx = gx.map(|v| Tensor::new(input.shape(), v)).transpose()?;
    Ok((gx, Tensor::new(ws, gw)?, Tensor::new(&[cout], gbias)?))
}

/// Transposed (fractionally strided) convolution: every input pixel scatters
/// `value · kernel` onto the output grid at `stride` spacing.
pub fn tconv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (b, h, w, cin) = image_dims("tconv2d", input)?;
    let cout = check_params("tconv2d", cin, weights, bias, spec)?;
    let oh = spec
        .tconv_out(h)
        .ok_or_else(|| shape_err("tconv2d", format!("height {h} invalid for {spec:?}")))?;
    let ow = spec
        .tconv_out(w)
        .ok_or_else(|| shape_err("tconv2d", format!("width {w} invalid for {spec:?}")))?;
    let map = PixelMap::tconv(spec, h, w, oh, ow);
    let taps = spec.kernel * spec.kernel;
    let wt = permute_taps(weights.data(), taps, cin, cout, false);
    let mut out = vec![0.0; b * oh * ow * cout];
    for (n0, nb) in map.chunks(b, cout) {
        let mut z = vec![0.0; nb * h * w * taps * cout];
        gemm(
            nb * h * w,
            taps * cout,
            cin,
            &input.data()[n0 * h * w * cin..][..nb * h * w * cin],
            &wt,
            &mut z,
        );
        map.fold(
            &z,
            nb,
            cout,
            &mut out[n0 * oh * ow * cout..][..nb * oh * ow * cout],
        );
    }
    add_bias(&mut out, bias.data());
    Tensor::new(&out_shape(input, b, oh, ow, cout), out)
}

pub fn tconv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    let (gx, weights, bias) = conv_grads(true, input, weights, grad_out, spec, true)?;
    Ok(ConvGrads {
        input: gx.expect("input gradient requested"),
        weights,
        bias,
    })
}

/// Sparse pixel correspondence of a convolution: for every row pixel and
/// kernel tap, the source pixel it touches, or `src_px` when the tap falls
/// outside the source grid.
///
/// For a forward convolution rows are output pixels and sources are input
/// pixels; for a transposed convolution it is the other way round, so both
/// reduce to a gather (`unfold`) and its adjoint scatter (`fold`) around a
/// GEMM with the channels contiguous.
struct PixelMap {
    rows: usize,
    taps: usize,
    src_px: usize,
    idx: Vec<u32>,
}

/// Upper bound on lowered matrix elements held at once.
const LOWERED_BUDGET: usize = 1 << 15;

impl PixelMap {
    fn conv(spec: &ConvSpec, h: usize, w: usize, oh: usize, ow: usize) -> Self {
        let (k, s, d, p) = (
            spec.kernel,
            spec.stride,
            spec.dilation,
            spec.padding as isize,
        );
        let mut idx = Vec::with_capacity(oh * ow * k * k);
        for q in 0..oh * ow {
            for t in 0..k * k {
                let iy = ((q / ow) * s + (t / k) * d) as isize - p;
                let ix = ((q % ow) * s + (t % k) * d) as isize - p;
                let inside = (0..h as isize).contains(&iy) && (0..w as isize).contains(&ix);
                idx.push(if inside {
                    (iy * w as isize + ix) as u32
                } else {
                    (h * w) as u32
                });
            }
        }
        Self {
            rows: oh * ow,
            taps: k * k,
            src_px: h * w,
            idx,
        }
    }

    /// Input pixel `i` with tap `t` lands on output `i·s + t·d − p`.
    fn tconv(spec: &ConvSpec, h: usize, w: usize, oh: usize, ow: usize) -> Self {
        let (k, s, d, p) = (
            spec.kernel,
            spec.stride,
            spec.dilation,
            spec.padding as isize,
        );
        let mut idx = Vec::with_capacity(h * w * k * k);
        for q in 0..h * w {
            for t in 0..k * k {
                let oy = ((q / w) * s + (t / k) * d) as isize - p;
                let ox = ((q % w) * s + (t % k) * d) as isize - p;
                let inside = (0..oh as isize).contains(&oy) && (0..ow as isize).contains(&ox);
                idx.push(if inside {
                    (oy * ow as isize + ox) as u32
                } else {
                    (oh * ow) as u32
                });
            }
        }
        Self {
            rows: h * w,
            taps: k * k,
            src_px: oh * ow,
            idx,
        }
    }

    /// `(first sample, count)` batches keeping a lowered matrix of
    /// `rows × taps·c` per sample within budget.
    fn chunks(&self, batch: usize, c: usize) -> impl Iterator<Item = (usize, usize)> {
        let per = (self.rows * self.taps * c).max(1);
        let step = (LOWERED_BUDGET / per).clamp(1, batch.max(1));
        (0..batch)
            .step_by(step)
            .map(move |n0| (n0, step.min(batch - n0)))
    }

    /// Gather `nb` samples of `src_px × c` into `nb·rows × taps·c`.
    fn unfold(&self, src: &[f64], nb: usize, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; nb * self.rows * self.taps * c];
        let row_len = self.taps * c;
        for n in 0..nb {
            let s = &src[n * self.src_px * c..][..self.src_px * c];
            let o = &mut out[n * self.rows * row_len..][..self.rows * row_len];
            for (&p, dst) in self.idx.iter().zip(o.chunks_exact_mut(c)) {
                if (p as usize) < self.src_px {
                    dst.copy_from_slice(&s[p as usize * c..][..c]);
                }
            }
        }
        out
    }

    /// Adjoint of `unfold`: scatter-add `nb·rows × taps·c` into `dst`.
    fn fold(&self, m: &[f64], nb: usize, c: usize, dst: &mut [f64]) {
        let row_len = self.taps * c;
        for n in 0..nb {
            let d = &mut dst[n * self.src_px * c..][..self.src_px * c];
            let mm = &m[n * self.rows * row_len..][..self.rows * row_len];
            for (&p, v) in self.idx.iter().zip(mm.chunks_exact(c)) {
                if (p as usize) < self.src_px {
                    for (a, &b) in d[p as usize * c..][..c].iter_mut().zip(v) {
                        *a += b;
                    }
                }
            }
        }
    }
}

/// Reorder `taps × cin × cout` weights to `cin × taps·cout`, or with
/// `transpose_out` to `taps·cout × cin`.
fn permute_taps(w: &[f64], taps: usize, cin: usize, cout: usize, transpose_out: bool) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for t in 0..taps {
        for ci in 0..cin {
            for co in 0..cout {
                let v = w[(t * cin + ci) * cout + co];
                if transpose_out {
                    out[(t * cout + co) * cin + ci] = v;
                } else {
                    out[ci * taps * cout + t * cout + co] = v;
                }
            }
        }
    }
    out
}

fn add_bias(out: &mut [f64], bias: &[f64]) {
    for px in out.chunks_exact_mut(bias.len()) {
        for (a, &b) in px.iter_mut().zip(bias) {
            *a += b;
        }
    }
}

fn add_bias_grad(gbias: &mut [f64], grad: &[f64]) {
    for px in grad.chunks_exact(gbias.len()) {
        for (a, &v) in gbias.iter_mut().zip(px) {
            *a += v;
        }
    }
}

/// Same data under a new shape.
pub fn reshape(input: &Tensor, new_shape: &[usize]) -> Result<Tensor> {
    let n: usize = new_shape.iter().product();
    if n != input.len() || new_shape.contains(&0) {
        return Err(shape_err(
            "reshape",
            format!(
                "cannot view {} elements {:?} as {new_shape:?} ({n} elements)",
                input.len(),
                input.shape()
            ),
        ));
    }
    Ok(Tensor {
        shape: new_shape.to_vec(),
        data: input.data.clone(),
    })
}

/// Concatenate along the last axis. All leading dimensions must agree.
pub fn concat_last(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| shape_err("concat", "nothing to concatenate"))?;
    let lead = &first.shape()[..first.rank() - 1];
    for t in parts {
        if t.rank() != first.rank() || &t.shape()[..t.rank() - 1] != lead {
            return Err(shape_err(
                "concat",
                format!(
                    "leading dims {:?} do not match {:?}",
                    &t.shape()[..t.rank().saturating_sub(1)],
                    lead
                ),
            ));
        }
    }
    let rows: usize = lead.iter().product();
    let widths: Vec<usize> = parts.iter().map(|t| *t.shape().last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (t, &cw) in parts.iter().zip(&widths) {
            data.extend_from_slice(&t.data()[r * cw..(r + 1) * cw]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(&shape, data)
}

/// Split the last axis into consecutive pieces of the given widths.
pub fn split_last(input: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let c = *input
        .shape()
        .last()
        .ok_or_else(|| shape_err("split", "scalar"))?;
    if widths.iter().sum::<usize>() != c {
        return Err(shape_err(
            "split",
            format!("widths {widths:?} do not sum to {c}"),
        ));
    }
    let lead = &input.shape()[..input.rank() - 1];
    let rows: usize = lead.iter().product();
    let mut outs: Vec<Vec<f64>> = widths
        .iter()
        .map(|w| Vec::with_capacity(rows * w))
        .collect();
    for r in 0..rows {
        let mut off = r * c;
        for (o, &w) in outs.iter_mut().zip(widths) {
            o.extend_from_slice(&input.data()[off..off + w]);
            off += w;
        }
    }
    outs.into_iter()
        .zip(widths)
        .map(|(d, &w)| {
            let mut shape = lead.to_vec();
            shape.push(w);
            Tensor::new(&shape, d)
        })
        .collect()
}

/// Channel concatenation of two `H × W × C` maps: `a`'s channels first.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 3 || b.rank() != 3 {
        return Err(shape_err(
            "concat_channels",
            format!(
                "expected H×W×C maps, got {:?} and {:?}",
                a.shape(),
                b.shape()
            ),
        ));
    }
    if a.shape()[..2] != b.shape()[..2] {
        let dim = if a.shape()[0] != b.shape()[0] {
            "height"
        } else {
            "width"
        };
        return Err(shape_err(
            "concat_channels",
            format!("{dim} differs: {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    concat_last(&[a, b])
}

/// Channels `start..end` of an `H × W × C` map.
pub fn slice_channels(input: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let c = *input.shape().last().unwrap_or(&0);
    if input.rank() != 3 || start >= end || end > c {
        return Err(shape_err(
            "slice_channels",
            format!("range {start}..{end} invalid for {:?}", input.shape()),
        ));
    }
    let (h, w) = (input.shape()[0], input.shape()[1]);
    let mut data = Vec::with_capacity(h * w * (end - start));
    for px in input.data().chunks_exact(c) {
        data.extend_from_slice(&px[start..end]);
    }
    Tensor::new(&[h, w, end - start], data)
}

impl From<Tensor> for Vec<f64> {
    fn from(t: Tensor) -> Self {
        t.data
    }
}

impl std::ops::Index<usize> for Tensor {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}
