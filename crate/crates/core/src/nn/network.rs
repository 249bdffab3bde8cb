//! Instantiated layer graphs: parameter store, forward pass with a recorded
//! trace, and reverse-mode gradients over that trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ActivationKind, LayerKind, LayerSpec, NetworkSpec};
use crate::error::{shape_err, Error, Result};
use crate::kernels;
use crate::tensor::{self, ConvSpec, Tensor};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active (masks drawn from `seed`), batch-norm on batch statistics.
    Train {
        seed: u64,
    },
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Input(usize),
    Node(usize),
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    layer: LayerSpec,
    sources: Vec<Source>,
    in_shapes: Vec<Vec<usize>>,
    out_shape: Vec<usize>,
    params: std::ops::Range<usize>,
    buffers: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    nodes: Vec<Node>,
    output: usize,
    params: Vec<f64>,
    buffers: Vec<f64>,
    fault: Option<LayerKind>,
}

enum Cache {
    None,
    Mask(Vec<f64>),
    Norm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

/// Values recorded by a forward pass, consumed by [`Network::backward`].
pub struct Trace {
    mode: Mode,
    inputs: Vec<Tensor>,
    values: Vec<Tensor>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self, network: &Network) -> &Tensor {
        &self.values[network.output]
    }
}

/// Gradient of a scalar loss w.r.t. every trainable parameter (same layout
/// as [`Network::params`]) and optionally w.r.t. the flat network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Option<Tensor>,
}

fn per_sample(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn batched(b: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len() + 1);
    s.push(b);
    s.extend_from_slice(shape);
    s
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-a..a);
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Network {
    /// Resolve and shape-check `spec`, then initialize parameters from `seed`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::resolve(spec)?;
        net.init(seed);
        Ok(net)
    }

    fn resolve(spec: &NetworkSpec) -> Result<Self> {
        if spec.inputs.is_empty() {
            return Err(Error::Config("network has no inputs".into()));
        }
        let mut names: Vec<(&str, Source, Vec<usize>)> = Vec::new();
        for (i, input) in spec.inputs.iter().enumerate() {
            if input.shape.is_empty() || input.shape.contains(&0) {
                return Err(Error::Config(format!(
                    "input {} has invalid shape {:?}",
                    input.name, input.shape
                )));
            }
            names.push((&input.name, Source::Input(i), input.shape.clone()));
        }
        let mut nodes = Vec::with_capacity(spec.nodes.len());
        let (mut n_params, mut n_buffers) = (0usize, 0usize);
        for (index, ns) in spec.nodes.iter().enumerate() {
            let fail = |detail: String| Error::Compose {
                index,
                layer: format!("{} {:?}", ns.name, ns.layer.kind()),
                detail,
            };
            if names.iter().any(|(n, _, _)| *n == ns.name) {
                return Err(fail(format!("duplicate name {}", ns.name)));
            }
            let mut sources = Vec::new();
            let mut in_shapes = Vec::new();
            for src in &ns.inputs {
                let (_, s, shape) = names
                    .iter()
                    .find(|(n, _, _)| n == src)
                    .ok_or_else(|| fail(format!("unknown input {src}")))?;
                sources.push(*s);
                in_shapes.push(shape.clone());
            }
            let single = || -> Result<&Vec<usize>> {
                match in_shapes.as_slice() {
                    [s] => Ok(s),
                    _ => Err(fail(format!("expects one input, got {}", in_shapes.len()))),
                }
            };
            let (out_shape, p, bufs) = match &ns.layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let s = single()?;
                    if s != &vec![*inputs] {
                        return Err(fail(format!("expects [{inputs}], receives {s:?}")));
                    }
                    if *outputs == 0 {
                        return Err(fail("zero outputs".into()));
                    }
                    (vec![*outputs], inputs * outputs + outputs, 0)
                }
                LayerSpec::Conv2D { conv, channels } | LayerSpec::TConv2D { conv, channels } => {
                    let s = single()?;
                    let &[h, w, c] = s.as_slice() else {
                        return Err(fail(format!("expects H×W×C, receives {s:?}")));
                    };
                    let transposed = matches!(ns.layer, LayerSpec::TConv2D { .. });
                    let side = |x: usize| {
                        if transposed {
                            conv.tconv_out(x)
                        } else {
                            conv.conv_out(x)
                        }
                    };
                    let (Some(oh), Some(ow)) = (side(h), side(w)) else {
                        return Err(fail(format!("{conv:?} yields no output for {s:?}")));
                    };
                    if *channels == 0 {
                        return Err(fail("zero channels".into()));
                    }
                    let k = conv.kernel;
                    (vec![oh, ow, *channels], k * k * c * channels + channels, 0)
                }
                LayerSpec::Reshape { shape } => {
                    let s = single()?;
                    if per_sample(shape) != per_sample(s) || shape.contains(&0) {
                        return Err(fail(format!("cannot reshape {s:?} to {shape:?}")));
                    }
                    (shape.clone(), 0, 0)
                }
                LayerSpec::Concat => {
                    let first = in_shapes
                        .first()
                        .ok_or_else(|| fail("concat without inputs".into()))?;
                    let lead = &first[..first.len() - 1];
                    let mut last = 0;
                    for s in &in_shapes {
                        if s.len() != first.len() || &s[..s.len() - 1] != lead {
                            return Err(fail(format!("cannot concatenate {s:?} with {first:?}")));
                        }
                        last += s[s.len() - 1];
                    }
                    let mut out = lead.to_vec();
                    out.push(last);
                    (out, 0, 0)
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(fail(format!("dropout rate {rate} outside [0,1)")));
                    }
                    (single()?.clone(), 0, 0)
                }
                LayerSpec::BatchNorm => {
                    let s = single()?.clone();
                    let c = *s.last().unwrap();
                    (s, 2 * c, 2 * c)
                }
                LayerSpec::Activation { .. } => (single()?.clone(), 0, 0),
            };
            nodes.push(Node {
                name: ns.name.clone(),
                layer: ns.layer.clone(),
                sources,
                in_shapes,
                out_shape: out_shape.clone(),
                params: n_params..n_params + p,
                buffers: n_buffers..n_buffers + bufs,
            });
            n_params += p;
            n_buffers += bufs;
            names.push((&ns.name, Source::Node(index), out_shape));
        }
        let output = match names.iter().find(|(n, _, _)| *n == spec.output) {
            Some((_, Source::Node(i), _)) => *i,
            _ => {
                return Err(Error::Config(format!(
                    "output {} is not a layer node",
                    spec.output
                )))
            }
        };
        Ok(Self {
            spec: spec.clone(),
            nodes,
            output,
            params: vec![0.0; n_params],
            buffers: vec![0.0; n_buffers],
            fault: None,
        })
    }

    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for node in &self.nodes {
            let p = &mut self.params[node.params.clone()];
            match &node.layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let (w, b) = p.split_at_mut(inputs * outputs);
                    glorot(&mut rng, *inputs, *outputs, w);
                    b.fill(0.0);
                }
                LayerSpec::Conv2D { conv, channels } | LayerSpec::TConv2D { conv, channels } => {
                    let cin = node.in_shapes[0][2];
                    let kk = conv.kernel * conv.kernel;
                    let (w, b) = p.split_at_mut(kk * cin * channels);
                    glorot(&mut rng, kk * cin, kk * channels, w);
                    b.fill(0.0);
                }
                LayerSpec::BatchNorm => {
                    let c = p.len() / 2;
                    p[..c].fill(1.0);
                    p[c..].fill(0.0);
                    let buf = &mut self.buffers[node.buffers.clone()];
                    buf[..c].fill(0.0);
                    buf[c..].fill(1.0);
                }
                _ => {}
            }
        }
    }

    /// Rebuild a network from a spec and stored state.
    pub fn from_parts(spec: &NetworkSpec, params: Vec<f64>, buffers: Vec<f64>) -> Result<Self> {
        let mut net = Self::resolve(spec)?;
        if params.len() != net.params.len() || buffers.len() != net.buffers.len() {
            return Err(Error::Config(format!(
                "stored state has {} params / {} buffers, spec needs {} / {}",
                params.len(),
                buffers.len(),
                net.params.len(),
                net.buffers.len()
            )));
        }
        net.params = params;
        net.buffers = buffers;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    pub fn set_state(&mut self, params: &[f64], buffers: &[f64]) {
        self.params.copy_from_slice(params);
        self.buffers.copy_from_slice(buffers);
    }

    /// Total trainable scalars: weights, biases, batch-norm scale and shift.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Trainable scalars per node, in graph order.
    pub fn param_breakdown(&self) -> Vec<(String, LayerKind, usize)> {
        self.nodes
            .iter()
            .map(|n| (n.name.clone(), n.layer.kind(), n.params.len()))
            .collect()
    }

    /// Parameter ranges owned by layers of the given kind.
    pub fn param_ranges(&self, kind: LayerKind) -> Vec<std::ops::Range<usize>> {
        self.nodes
            .iter()
            .filter(|n| n.layer.kind() == kind && !n.params.is_empty())
            .map(|n| n.params.clone())
            .collect()
    }

    pub fn input_size(&self) -> usize {
        self.spec.input_size()
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.nodes[self.output].out_shape
    }

    /// Per-sample output shape of every node, by name.
    pub fn node_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.nodes
            .iter()
            .map(|n| (n.name.clone(), n.out_shape.clone()))
            .collect()
    }

    /// Flip the sign of the weight gradient of every layer of `kind`.
    /// Used to verify that the gradient checker localizes faults.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: Option<LayerKind>) {
        self.fault = kind;
    }

    pub fn forward(&self, batch: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut trace = self.forward_trace(batch, mode)?;
        Ok(trace.values.swap_remove(self.output))
    }

    /// Batches of at most `chunk` samples through an eval-mode forward, stacked.
    pub fn predict(&self, batch: &Tensor, chunk: usize) -> Result<Tensor> {
        let n = batch.shape()[0];
        let mut data = Vec::with_capacity(n * per_sample(self.output_shape()));
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let out = self.forward(&batch.gather(&rows), Mode::Eval)?;
            data.extend_from_slice(out.data());
            start = end;
        }
        Tensor::new(&batched(n, self.output_shape()), data)
    }

    fn split_inputs(&self, batch: &Tensor) -> Result<Vec<Tensor>> {
        let b = *batch
            .shape()
            .first()
            .ok_or_else(|| shape_err("forward", "batch must have a leading dimension"))?;
        let d = self.input_size();
        if batch.len() != b * d {
            return Err(shape_err(
                "forward",
                format!(
                    "batch {:?} does not carry {d} input values per sample",
                    batch.shape()
                ),
            ));
        }
        if self.spec.inputs.len() == 1 {
            return Ok(vec![tensor::reshape(
                batch,
                &batched(b, &self.spec.inputs[0].shape),
            )?]);
        }
        let flat = tensor::reshape(batch, &[b, d])?;
        let widths: Vec<usize> = self
            .spec
            .inputs
            .iter()
            .map(|i| per_sample(&i.shape))
            .collect();
        tensor::split_last(&flat, &widths)?
            .into_iter()
            .zip(&self.spec.inputs)
            .map(|(t, spec)| tensor::reshape(&t, &batched(b, &spec.shape)))
            .collect()
    }

    pub fn forward_trace(&self, batch: &Tensor, mode: Mode) -> Result<Trace> {
        let inputs = self.split_inputs(batch)?;
        let b = batch.shape()[0];
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let get = |s: &Source| -> &Tensor {
                match *s {
                    Source::Input(i) => &inputs[i],
                    Source::Node(i) => &values[i],
                }
            };
            let x = get(&node.sources[0]);
            let p = &self.params[node.params.clone()];
            let (y, cache) = match &node.layer {
                LayerSpec::Dense {
                    inputs: fin,
                    outputs,
                } => (dense_forward(x, p, *fin, *outputs)?, Cache::None),
                LayerSpec::Conv2D { conv, channels } => {
                    let (w, bias) = conv_params(p, conv, node.in_shapes[0][2], *channels)?;
                    (tensor::conv2d(x, &w, &bias, conv)?, Cache::None)
                }
                LayerSpec::TConv2D { conv, channels } => {
                    let (w, bias) = conv_params(p, conv, node.in_shapes[0][2], *channels)?;
                    (tensor::tconv2d(x, &w, &bias, conv)?, Cache::None)
                }
                LayerSpec::Reshape { shape } => {
                    (tensor::reshape(x, &batched(b, shape))?, Cache::None)
                }
                LayerSpec::Concat => {
                    let parts: Vec<&Tensor> = node.sources.iter().map(get).collect();
                    (tensor::concat_last(&parts)?, Cache::None)
                }
                LayerSpec::Dropout { rate } => match mode {
                    Mode::Train { seed } if *rate > 0.0 => {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx as u64));
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| {
                                if rng.random::<f64>() < *rate {
                                    0.0
                                } else {
                                    keep
                                }
                            })
                            .collect();
                        let y = Tensor::from_fn(x.shape(), |i| x[i] * mask[i]);
                        (y, Cache::Mask(mask))
                    }
                    _ => (x.clone(), Cache::None),
                },
                LayerSpec::BatchNorm => {
                    batch_norm_forward(x, p, &self.buffers[node.buffers.clone()], mode)
                }
                LayerSpec::Activation { kind } => (activate(x, *kind), Cache::None),
            };
            values.push(y);
            caches.push(cache);
        }
        Ok(Trace {
            mode,
            inputs,
            values,
            caches,
        })
    }

    /// Fold the batch statistics of a training-mode trace into the running
    /// batch-norm statistics.
    pub fn update_running_stats(&mut self, trace: &Trace) {
        for (node, cache) in self.nodes.iter().zip(&trace.caches) {
            if let Cache::Norm { mean, var, .. } = cache {
                let buf = &mut self.buffers[node.buffers.clone()];
                let c = mean.len();
                for i in 0..c {
                    buf[i] = BN_MOMENTUM * buf[i] + (1.0 - BN_MOMENTUM) * mean[i];
                    buf[c + i] = BN_MOMENTUM * buf[c + i] + (1.0 - BN_MOMENTUM) * var[i];
                }
            }
        }
    }

    /// Reverse pass from `grad_output` (d loss / d output) through `trace`.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &Tensor,
        want_input: bool,
    ) -> Result<Gradients> {
        let out = &trace.values[self.output];
        if grad_output.shape() != out.shape() {
            return Err(shape_err(
                "backward",
                format!("grad {:?} vs output {:?}", grad_output.shape(), out.shape()),
            ));
        }
        let b = out.shape()[0];
        let mut node_grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut input_grads: Vec<Option<Tensor>> = vec![None; trace.inputs.len()];
        node_grads[self.output] = Some(grad_output.clone());
        let mut gparams = vec![0.0; self.params.len()];

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let value_of = |s: &Source| -> &Tensor {
                match *s {
                    Source::Input(i) => &trace.inputs[i],
                    Source::Node(i) => &trace.values[i],
                }
            };
            let needs = |s: &Source| want_input || matches!(s, Source::Node(_));
            let x = value_of(&node.sources[0]);
            let p = &self.params[node.params.clone()];
            let gp = &mut gparams[node.params.clone()];
            let flip = self.fault == Some(node.layer.kind());
            let mut upstream: Vec<Option<Tensor>> = Vec::new();
            match &node.layer {
                LayerSpec::Dense {
                    inputs: fin,
                    outputs,
                } => {
                    let gx = dense_backward(x, p, &g, *fin, *outputs, gp, needs(&node.sources[0]))?;
                    if flip {
                        gp[..fin * outputs].iter_mut().for_each(|v| *v = -*v);
                    }
                    upstream.push(gx);
                }
                LayerSpec::Conv2D { conv, channels } | LayerSpec::TConv2D { conv, channels } => {
                    let (w, _) = conv_params(p, conv, node.in_shapes[0][2], *channels)?;
                    let transposed = matches!(node.layer, LayerSpec::TConv2D { .. });
                    let (gx, gw, gb) =
                        tensor::conv_grads(transposed, x, &w, &g, conv, needs(&node.sources[0]))?;
                    let nw = w.len();
                    gp[..nw].copy_from_slice(gw.data());
                    gp[nw..].copy_from_slice(gb.data());
                    if flip {
                        gp[..nw].iter_mut().for_each(|v| *v = -*v);
                    }
                    upstream.push(gx);
                }
                LayerSpec::Reshape { .. } => {
                    upstream.push(Some(tensor::reshape(&g, x.shape())?));
                }
                LayerSpec::Concat => {
                    let widths: Vec<usize> =
                        node.in_shapes.iter().map(|s| *s.last().unwrap()).collect();
                    upstream.extend(tensor::split_last(&g, &widths)?.into_iter().map(Some));
                }
                LayerSpec::Dropout { .. } => match &trace.caches[idx] {
                    Cache::Mask(mask) => {
                        upstream.push(Some(Tensor::from_fn(g.shape(), |i| g[i] * mask[i])))
                    }
                    _ => upstream.push(Some(g)),
                },
                LayerSpec::BatchNorm => {
                    let buf = &self.buffers[node.buffers.clone()];
                    upstream.push(Some(batch_norm_backward(
                        &g,
                        p,
                        buf,
                        &trace.caches[idx],
                        trace.mode,
                        x,
                        gp,
                    )));
                    if flip {
                        let c = p.len() / 2;
                        gp[..c].iter_mut().for_each(|v| *v = -*v);
                    }
                }
                LayerSpec::Activation { kind } => {
                    let y = &trace.values[idx];
                    upstream.push(Some(activation_backward(x, y, &g, *kind)));
                }
            }
            for (src, grad) in node.sources.iter().zip(upstream) {
                let Some(grad) = grad else { continue };
                if !needs(src) {
                    continue;
                }
                let slot = match *src {
                    Source::Input(i) => &mut input_grads[i],
                    Source::Node(i) => &mut node_grads[i],
                };
                match slot {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .for_each(|(a, v)| *a += v),
                    None => *slot = Some(grad),
                }
            }
        }

        let input = if want_input {
            let d = self.input_size();
            let parts: Vec<Tensor> = input_grads
                .into_iter()
                .zip(&trace.inputs)
                .map(|(g, x)| {
                    let g = g.unwrap_or_else(|| Tensor::zeros(x.shape()));
                    let n = g.len() / b;
                    tensor::reshape(&g, &[b, n])
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Tensor> = parts.iter().collect();
            let flat = tensor::concat_last(&refs)?;
            debug_assert_eq!(flat.len(), b * d);
            Some(flat)
        } else {
            None
        };
        Ok(Gradients {
            params: gparams,
            input,
        })
    }
}

fn conv_params(p: &[f64], conv: &ConvSpec, cin: usize, cout: usize) -> Result<(Tensor, Tensor)> {
    let k = conv.kernel;
    let nw = k * k * cin * cout;
    Ok((
        Tensor::new(&[k, k, cin, cout], p[..nw].to_vec())?,
        Tensor::new(&[cout], p[nw..].to_vec())?,
    ))
}

/// `y = x · W + b` with `W` stored `inputs × outputs`.
fn dense_forward(x: &Tensor, p: &[f64], fin: usize, fout: usize) -> Result<Tensor> {
    let b = x.shape()[0];
    if x.len() != b * fin {
        return Err(shape_err(
            "dense",
            format!("{:?} vs {fin} inputs", x.shape()),
        ));
    }
    let (w, bias) = p.split_at(fin * fout);
    let mut out = vec![0.0; b * fout];
    kernels::gemm(b, fout, fin, x.data(), w, &mut out);
    for yrow in out.chunks_exact_mut(fout) {
        for (y, &bv) in yrow.iter_mut().zip(bias) {
            *y += bv;
        }
    }
    Tensor::new(&[b, fout], out)
}

fn dense_backward(
    x: &Tensor,
    p: &[f64],
    g: &Tensor,
    fin: usize,
    fout: usize,
    gp: &mut [f64],
    want_input: bool,
) -> Result<Option<Tensor>> {
    let b = x.shape()[0];
    let (w, _) = p.split_at(fin * fout);
    let (gw, gb) = gp.split_at_mut(fin * fout);
    for grow in g.data().chunks_exact(fout) {
        for (a, &v) in gb.iter_mut().zip(grow) {
            *a += v;
        }
    }
    let xt = kernels::transpose(x.data(), b, fin);
    kernels::gemm(fin, fout, b, &xt, g.data(), gw);
    if !want_input {
        return Ok(None);
    }
    let mut gx = vec![0.0; b * fin];
    for (grow, gxrow) in g.data().chunks_exact(fout).zip(gx.chunks_exact_mut(fin)) {
        for (i, v) in gxrow.iter_mut().enumerate() {
            *v = kernels::dot(&w[i * fout..(i + 1) * fout], grow);
        }
    }
    Ok(Some(Tensor::new(x.shape(), gx)?))
}

fn batch_norm_forward(x: &Tensor, p: &[f64], buf: &[f64], mode: Mode) -> (Tensor, Cache) {
    let c = p.len() / 2;
    let (gamma, beta) = p.split_at(c);
    let rows = x.len() / c;
    match mode {
        Mode::Eval => {
            let (rm, rv) = buf.split_at(c);
            let inv: Vec<f64> = rv.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            let y = Tensor::from_fn(x.shape(), |i| {
                let ch = i % c;
                gamma[ch] * (x[i] - rm[ch]) * inv[ch] + beta[ch]
            });
            (y, Cache::None)
        }
        Mode::Train { .. } => {
            let mut mean = vec![0.0; c];
            for row in x.data().chunks_exact(c) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; c];
            for row in x.data().chunks_exact(c) {
                for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            let xhat: Vec<f64> = (0..x.len())
                .map(|i| (x[i] - mean[i % c]) * inv_std[i % c])
                .collect();
            let y = Tensor::from_fn(x.shape(), |i| gamma[i % c] * xhat[i] + beta[i % c]);
            (
                y,
                Cache::Norm {
                    xhat,
                    inv_std,
                    mean,
                    var,
                },
            )
        }
    }
}

fn batch_norm_backward(
    g: &Tensor,
    p: &[f64],
    buf: &[f64],
    cache: &Cache,
    mode: Mode,
    x: &Tensor,
    gp: &mut [f64],
) -> Tensor {
    let c = p.len() / 2;
    let gamma = &p[..c];
    let (ggamma, gbeta) = gp.split_at_mut(c);
    match (mode, cache) {
        (Mode::Train { .. }, Cache::Norm { xhat, inv_std, .. }) => {
            let rows = (g.len() / c) as f64;
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for i in 0..g.len() {
                let ch = i % c;
                sum_g[ch] += g[i];
                sum_gx[ch] += g[i] * xhat[i];
            }
            for ch in 0..c {
                ggamma[ch] += sum_gx[ch];
                gbeta[ch] += sum_g[ch];
            }
            Tensor::from_fn(g.shape(), |i| {
                let ch = i % c;
                gamma[ch] * inv_std[ch] / rows * (rows * g[i] - sum_g[ch] - xhat[i] * sum_gx[ch])
            })
        }
        _ => {
            let (rm, rv) = buf.split_at(c);
            let inv: Vec<f64> = rv.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            for i in 0..g.len() {
                let ch = i % c;
                ggamma[ch] += g[i] * (x[i] - rm[ch]) * inv[ch];
                gbeta[ch] += g[i];
            }
            Tensor::from_fn(g.shape(), |i| g[i] * gamma[i % c] * inv[i % c])
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn activate(x: &Tensor, kind: ActivationKind) -> Tensor {
    match kind {
        ActivationKind::Relu => x.map(|v| v.max(0.0)),
        ActivationKind::Sigmoid => x.map(sigmoid),
        ActivationKind::Linear => x.clone(),
    }
}

fn activation_backward(x: &Tensor, y: &Tensor, g: &Tensor, kind: ActivationKind) -> Tensor {
    match kind {
        ActivationKind::Relu => Tensor::from_fn(g.shape(), |i| if x[i] > 0.0 { g[i] } else { 0.0 }),
        ActivationKind::Sigmoid => Tensor::from_fn(g.shape(), |i| g[i] * y[i] * (1.0 - y[i])),
        ActivationKind::Linear => g.clone(),
    }
}
