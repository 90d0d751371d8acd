//! Feed-forward image classifiers with hand-written backpropagation.
//!
//! Activations of spatial layers are stored channel-major (`C x N x H x W`)
//! so that a convolution over a whole mini-batch is a single GEMM against an
//! im2col matrix and batch-norm statistics are contiguous per channel.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::head::HeadLayout;
use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// How batch-norm layers normalize during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnMode {
    /// Running statistics; nothing is updated.
    #[default]
    Eval,
    /// Mini-batch statistics; running statistics can be committed afterwards.
    Batch,
}

/// One layer. Parameter fields are positions in the network's
/// [`ParamStore`]; batch-norm running statistics live in the buffer store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv3x3 {
        weight: usize,
        bias: Option<usize>,
        cin: usize,
        cout: usize,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        mean: usize,
        var: usize,
        channels: usize,
    },
    Relu,
    /// 2x2 max pooling with stride 2.
    MaxPool2,
    Flatten,
    /// Mean over each channel's spatial positions, producing a flat output.
    GlobalAvgPool,
    Linear {
        weight: usize,
        bias: usize,
        din: usize,
        dout: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Spatial { c: usize, n: usize, h: usize, w: usize },
    Flat { n: usize, d: usize },
}

enum Cache<F> {
    Conv { col: Option<Vec<F>>, n: usize, h: usize, w: usize },
    Bn { xhat: Vec<F>, inv_std: Vec<F>, batch: bool },
    Relu { positive: Vec<bool> },
    Pool { argmax: Vec<u32>, input: Layout },
    Flatten { input: Layout },
    Linear { input: Vec<F>, n: usize },
}

/// Output of [`Network::forward`].
pub struct ForwardPass<F> {
    pub n: usize,
    /// Row-major `n x num_classes`.
    pub logits: Vec<F>,
    /// Input of the classification head, row-major `n x feature_dim`.
    pub features: Vec<F>,
    caches: Vec<Cache<F>>,
    bn_stats: Vec<(usize, usize, Vec<F>, Vec<F>)>,
}

impl<F: Real> ForwardPass<F> {
    pub fn logit_row(&self, i: usize, num_classes: usize) -> &[F] {
        &self.logits[i * num_classes..(i + 1) * num_classes]
    }

    pub fn is_recorded(&self) -> bool {
        !self.caches.is_empty()
    }
}

/// A classifier whose final layer is a fully-connected head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F = f32> {
    arch: String,
    input: [usize; 3],
    num_classes: usize,
    layers: Vec<Layer>,
    params: ParamStore<F>,
    buffers: ParamStore<F>,
    pub head: HeadLayout,
    pub seed: u64,
    pub meta: BTreeMap<String, String>,
}

impl<F: Real> Network<F> {
    pub fn arch(&self) -> &str {
        &self.arch
    }

    /// `[channels, height, width]` of one input image.
    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn buffers(&self) -> &ParamStore<F> {
        &self.buffers
    }

    pub fn param_data_mut(&mut self, idx: usize) -> &mut [F] {
        self.params.tensor_mut(idx)
    }

    /// Replaces all parameters and buffers; names and shapes must match.
    pub fn load_state(&mut self, params: ParamStore<F>, buffers: ParamStore<F>) -> Result<()> {
        if !self.params.same_layout(&params) {
            return Err(Error::CheckpointFormat(format!(
                "parameter layout does not match architecture `{}`",
                self.arch
            )));
        }
        if !self.buffers.same_layout(&buffers) {
            return Err(Error::CheckpointFormat(format!(
                "buffer layout does not match architecture `{}`",
                self.arch
            )));
        }
        self.params = params;
        self.buffers = buffers;
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Linear { din, .. }) => *din,
            _ => 0,
        }
    }

    /// Positions of the head's weight (`num_classes x feature_dim`) and bias.
    pub fn head_indices(&self) -> (usize, usize) {
        match self.layers.last() {
            Some(Layer::Linear { weight, bias, .. }) => (*weight, *bias),
            _ => unreachable!("networks are built with a linear head"),
        }
    }

    pub fn cast<G: Real>(&self) -> Network<G> {
        Network {
            arch: self.arch.clone(),
            input: self.input,
            num_classes: self.num_classes,
            layers: self.layers.clone(),
            params: self.params.cast(),
            buffers: self.buffers.cast(),
            head: self.head.clone(),
            seed: self.seed,
            meta: self.meta.clone(),
        }
    }

    /// Runs `n` images (NCHW, row-major) through the network.
    ///
    /// With `record` set the pass keeps what [`Network::backward`] needs.
    pub fn forward(&self, images: &[F], n: usize, bn: BnMode, record: bool) -> Result<ForwardPass<F>> {
        let [c, h, w] = self.input;
        if n == 0 {
            return Err(Error::InputShape("empty input batch".into()));
        }
        if images.len() != n * c * h * w {
            return Err(Error::InputShape(format!(
                "expected {n} images of shape {:?} ({} values), got {} values",
                self.input,
                n * c * h * w,
                images.len()
            )));
        }
        let hw = h * w;
        let mut data = vec![F::ZERO; images.len()];
        for b in 0..n {
            for ci in 0..c {
                data[(ci * n + b) * hw..][..hw].copy_from_slice(&images[(b * c + ci) * hw..][..hw]);
            }
        }
        let mut layout = Layout::Spatial { c, n, h, w };
        let mut caches = Vec::new();
        let mut bn_stats = Vec::new();
        let mut features = Vec::new();
        let last = self.layers.len() - 1;

        for (li, layer) in self.layers.iter().enumerate() {
            if li == last {
                features = data.clone();
            }
            let (out, out_layout, cache) = match *layer {
                Layer::Conv3x3 { weight, bias, cin, cout } => {
                    let Layout::Spatial { c, n, h, w } = layout else {
                        return Err(layout_error("conv", layout));
                    };
                    debug_assert_eq!(c, cin);
                    let col = im2col(&data, cin, n, h, w);
                    let cols = n * h * w;
                    let mut out = vec![F::ZERO; cout * cols];
                    if let Some(bias) = bias {
                        let b = self.params.tensor(bias).data();
                        for co in 0..cout {
                            out[co * cols..(co + 1) * cols].fill(b[co]);
                        }
                    }
                    let k = cin * 9;
                    gemm(
                        cout,
                        k,
                        cols,
                        F::ONE,
                        (self.params.tensor(weight).data(), k, 1),
                        (&col, cols, 1),
                        F::ONE,
                        &mut out,
                        cols,
                        1,
                    );
                    (
                        out,
                        Layout::Spatial { c: cout, n, h, w },
                        Cache::Conv {
                            col: record.then_some(col),
                            n,
                            h,
                            w,
                        },
                    )
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    mean,
                    var,
                    channels,
                } => {
                    let Layout::Spatial { n, h, w, .. } = layout else {
                        return Err(layout_error("batch-norm", layout));
                    };
                    let m = n * h * w;
                    let g = self.params.tensor(gamma).data();
                    let bt = self.params.tensor(beta).data();
                    let mut out = vec![F::ZERO; data.len()];
                    let mut xhat = if record { vec![F::ZERO; data.len()] } else { Vec::new() };
                    let mut inv_std = vec![F::ZERO; channels];
                    let mut batch_mean = Vec::new();
                    let mut batch_var = Vec::new();
                    for ch in 0..channels {
                        let xs = &data[ch * m..(ch + 1) * m];
                        let (mu, var_c) = match bn {
                            BnMode::Batch => {
                                let mu = xs.iter().map(|v| v.to_f64()).sum::<f64>() / m as f64;
                                let var_c = xs.iter().map(|v| (v.to_f64() - mu).powi(2)).sum::<f64>()
                                    / m as f64;
                                batch_mean.push(F::from_f64(mu));
                                let unbiased = if m > 1 { var_c * m as f64 / (m - 1) as f64 } else { var_c };
                                batch_var.push(F::from_f64(unbiased));
                                (F::from_f64(mu), F::from_f64(var_c))
                            }
                            BnMode::Eval => (
                                self.buffers.tensor(mean).data()[ch],
                                self.buffers.tensor(var).data()[ch],
                            ),
                        };
                        let inv = F::ONE / (var_c + F::from_f64(BN_EPS)).sqrt();
                        inv_std[ch] = inv;
                        let ys = &mut out[ch * m..(ch + 1) * m];
                        for (j, (&x, y)) in xs.iter().zip(ys.iter_mut()).enumerate() {
                            let xh = (x - mu) * inv;
                            *y = g[ch] * xh + bt[ch];
                            if record {
                                xhat[ch * m + j] = xh;
                            }
                        }
                    }
                    if bn == BnMode::Batch {
                        bn_stats.push((mean, var, batch_mean, batch_var));
                    }
                    (
                        out,
                        layout,
                        Cache::Bn {
                            xhat,
                            inv_std,
                            batch: bn == BnMode::Batch,
                        },
                    )
                }
                Layer::Relu => {
                    let mut positive = if record { Vec::with_capacity(data.len()) } else { Vec::new() };
                    let mut out = data;
                    for v in out.iter_mut() {
                        let keep = *v > F::ZERO;
                        if !keep {
                            *v = F::ZERO;
                        }
                        if record {
                            positive.push(keep);
                        }
                    }
                    (out, layout, Cache::Relu { positive })
                }
                Layer::MaxPool2 => {
                    let Layout::Spatial { c, n, h, w } = layout else {
                        return Err(layout_error("max-pool", layout));
                    };
                    let (oh, ow) = (h / 2, w / 2);
                    let mut out = vec![F::ZERO; c * n * oh * ow];
                    let mut argmax = vec![0u32; out.len()];
                    for plane in 0..c * n {
                        let base = plane * h * w;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = base + 2 * oy * w + 2 * ox;
                                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                                    if data[idx] > data[best] {
                                        best = idx;
                                    }
                                }
                                let o = (plane * oh + oy) * ow + ox;
                                out[o] = data[best];
                                argmax[o] = best as u32;
                            }
                        }
                    }
                    (
                        out,
                        Layout::Spatial { c, n, h: oh, w: ow },
                        Cache::Pool { argmax, input: layout },
                    )
                }
                Layer::Flatten => {
                    let Layout::Spatial { c, n, h, w } = layout else {
                        return Err(layout_error("flatten", layout));
                    };
                    let hw = h * w;
                    let d = c * hw;
                    let mut out = vec![F::ZERO; n * d];
                    for ci in 0..c {
                        for b in 0..n {
                            out[b * d + ci * hw..][..hw].copy_from_slice(&data[(ci * n + b) * hw..][..hw]);
                        }
                    }
                    (out, Layout::Flat { n, d }, Cache::Flatten { input: layout })
                }
                Layer::GlobalAvgPool => {
                    let Layout::Spatial { c, n, h, w } = layout else {
                        return Err(layout_error("global-average-pool", layout));
                    };
                    let hw = h * w;
                    let scale = F::from_f64(1.0 / hw as f64);
                    let mut out = vec![F::ZERO; n * c];
                    for ci in 0..c {
                        for b in 0..n {
                            let sum = data[(ci * n + b) * hw..][..hw].iter().fold(F::ZERO, |a, &v| a + v);
                            out[b * c + ci] = sum * scale;
                        }
                    }
                    (out, Layout::Flat { n, d: c }, Cache::Flatten { input: layout })
                }
                Layer::Linear { weight, bias, din, dout } => {
                    let Layout::Flat { n, d } = layout else {
                        return Err(layout_error("linear", layout));
                    };
                    debug_assert_eq!(d, din);
                    let b = self.params.tensor(bias).data();
                    let mut out = Vec::with_capacity(n * dout);
                    for _ in 0..n {
                        out.extend_from_slice(b);
                    }
                    gemm(
                        n,
                        din,
                        dout,
                        F::ONE,
                        (&data, din, 1),
                        (self.params.tensor(weight).data(), 1, din),
                        F::ONE,
                        &mut out,
                        dout,
                        1,
                    );
                    let input = if record { std::mem::take(&mut data) } else { Vec::new() };
                    (out, Layout::Flat { n, d: dout }, Cache::Linear { input, n })
                }
            };
            if record {
                caches.push(cache);
            }
            data = out;
            layout = out_layout;
        }

        Ok(ForwardPass {
            n,
            logits: data,
            features,
            caches,
            bn_stats,
        })
    }

    /// Gradients of `sum_i <dlogits_i, logits_i>` with respect to every
    /// parameter. `dlogits` is row-major `n x num_classes`.
    pub fn backward(&self, pass: &ForwardPass<F>, dlogits: &[F]) -> Result<Grads<F>> {
        if !pass.is_recorded() {
            return Err(Error::InputShape("forward pass was not recorded".into()));
        }
        if dlogits.len() != pass.n * self.num_classes {
            return Err(Error::InputShape(format!(
                "logit gradient has {} values, expected {}",
                dlogits.len(),
                pass.n * self.num_classes
            )));
        }
        let mut grads = Grads::zeros_for(&self.params);
        let mut dy = dlogits.to_vec();

        for (li, (layer, cache)) in self.layers.iter().zip(&pass.caches).enumerate().rev() {
            let need_dx = li > 0;
            dy = match (*layer, cache) {
                (Layer::Conv3x3 { weight, bias, cin, cout }, Cache::Conv { col, n, h, w }) => {
                    let cols = n * h * w;
                    let k = cin * 9;
                    if let Some(bias) = bias {
                        let db = grads.tensors[bias].data_mut();
                        for co in 0..cout {
                            let mut s = 0.0;
                            for v in &dy[co * cols..(co + 1) * cols] {
                                s += v.to_f64();
                            }
                            db[co] += F::from_f64(s);
                        }
                    }
                    let col = col.as_ref().expect("recorded pass keeps im2col");
                    gemm(
                        cout,
                        cols,
                        k,
                        F::ONE,
                        (&dy, cols, 1),
                        (col, 1, cols),
                        F::ONE,
                        grads.tensors[weight].data_mut(),
                        k,
                        1,
                    );
                    if !need_dx {
                        break;
                    }
                    let mut dcol = vec![F::ZERO; k * cols];
                    gemm(
                        k,
                        cout,
                        cols,
                        F::ONE,
                        (self.params.tensor(weight).data(), 1, k),
                        (&dy, cols, 1),
                        F::ZERO,
                        &mut dcol,
                        cols,
                        1,
                    );
                    col2im(&dcol, cin, *n, *h, *w)
                }
                (Layer::BatchNorm { gamma, beta, channels, .. }, Cache::Bn { xhat, inv_std, batch }) => {
                    let m = dy.len() / channels;
                    let g = self.params.tensor(gamma).data();
                    let mut dx = vec![F::ZERO; dy.len()];
                    for ch in 0..channels {
                        let dys = &dy[ch * m..(ch + 1) * m];
                        let xh = &xhat[ch * m..(ch + 1) * m];
                        let mut sum_dy = 0.0f64;
                        let mut sum_dy_xhat = 0.0f64;
                        for (d, x) in dys.iter().zip(xh) {
                            sum_dy += d.to_f64();
                            sum_dy_xhat += d.to_f64() * x.to_f64();
                        }
                        grads.tensors[gamma].data_mut()[ch] += F::from_f64(sum_dy_xhat);
                        grads.tensors[beta].data_mut()[ch] += F::from_f64(sum_dy);
                        if !need_dx {
                            continue;
                        }
                        let scale = g[ch] * inv_std[ch];
                        let out = &mut dx[ch * m..(ch + 1) * m];
                        if *batch {
                            let mean_dy = F::from_f64(sum_dy / m as f64);
                            let mean_dy_xhat = F::from_f64(sum_dy_xhat / m as f64);
                            for ((o, &d), &x) in out.iter_mut().zip(dys).zip(xh) {
                                *o = scale * (d - mean_dy - x * mean_dy_xhat);
                            }
                        } else {
                            for (o, &d) in out.iter_mut().zip(dys) {
                                *o = scale * d;
                            }
                        }
                    }
                    if !need_dx {
                        break;
                    }
                    dx
                }
                (Layer::Relu, Cache::Relu { positive }) => {
                    for (d, &p) in dy.iter_mut().zip(positive) {
                        if !p {
                            *d = F::ZERO;
                        }
                    }
                    dy
                }
                (Layer::MaxPool2, Cache::Pool { argmax, input }) => {
                    let Layout::Spatial { c, n, h, w } = *input else { unreachable!() };
                    let mut dx = vec![F::ZERO; c * n * h * w];
                    for (&src, &d) in argmax.iter().zip(&dy) {
                        dx[src as usize] += d;
                    }
                    dx
                }
                (Layer::Flatten, Cache::Flatten { input }) => {
                    let Layout::Spatial { c, n, h, w } = *input else { unreachable!() };
                    let hw = h * w;
                    let d = c * hw;
                    let mut dx = vec![F::ZERO; dy.len()];
                    for ci in 0..c {
                        for b in 0..n {
                            dx[(ci * n + b) * hw..][..hw].copy_from_slice(&dy[b * d + ci * hw..][..hw]);
                        }
                    }
                    dx
                }
                (Layer::GlobalAvgPool, Cache::Flatten { input }) => {
                    let Layout::Spatial { c, n, h, w } = *input else { unreachable!() };
                    let hw = h * w;
                    let scale = F::from_f64(1.0 / hw as f64);
                    let mut dx = vec![F::ZERO; c * n * hw];
                    for ci in 0..c {
                        for b in 0..n {
                            dx[(ci * n + b) * hw..][..hw].fill(dy[b * c + ci] * scale);
                        }
                    }
                    dx
                }
                (Layer::Linear { weight, bias, din, dout }, Cache::Linear { input, n }) => {
                    let db = grads.tensors[bias].data_mut();
                    for row in dy.chunks_exact(dout) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    gemm(
                        dout,
                        *n,
                        din,
                        F::ONE,
                        (&dy, 1, dout),
                        (input, din, 1),
                        F::ONE,
                        grads.tensors[weight].data_mut(),
                        din,
                        1,
                    );
                    if !need_dx {
                        break;
                    }
                    let mut dx = vec![F::ZERO; n * din];
                    gemm(
                        *n,
                        dout,
                        din,
                        F::ONE,
                        (&dy, dout, 1),
                        (self.params.tensor(weight).data(), din, 1),
                        F::ZERO,
                        &mut dx,
                        din,
                        1,
                    );
                    dx
                }
                _ => unreachable!("cache does not match layer"),
            };
        }
        Ok(grads)
    }

    /// Folds the mini-batch statistics of a [`BnMode::Batch`] pass into the
    /// running statistics.
    pub fn commit_bn_stats(&mut self, pass: &ForwardPass<F>) {
        let mom = F::from_f64(BN_MOMENTUM);
        for (mean_idx, var_idx, mean, var) in &pass.bn_stats {
            for (r, &b) in self.buffers.tensor_mut(*mean_idx).iter_mut().zip(mean) {
                *r = (F::ONE - mom) * *r + mom * b;
            }
            for (r, &b) in self.buffers.tensor_mut(*var_idx).iter_mut().zip(var) {
                *r = (F::ONE - mom) * *r + mom * b;
            }
        }
    }

    /// Logits for `n` images, evaluated in chunks without recording.
    pub fn logits(&self, images: &[F], n: usize) -> Result<Vec<F>> {
        Ok(self.evaluate_chunked(images, n)?.0)
    }

    /// `(logits, features)` for `n` images using running statistics.
    pub fn evaluate_chunked(&self, images: &[F], n: usize) -> Result<(Vec<F>, Vec<F>)> {
        const CHUNK: usize = 128;
        let len = self.input_len();
        if images.len() != n * len {
            return Err(Error::InputShape(format!(
                "expected {} values for {n} images, got {}",
                n * len,
                images.len()
            )));
        }
        let mut logits = Vec::with_capacity(n * self.num_classes);
        let mut features = Vec::with_capacity(n * self.feature_dim());
        let mut start = 0;
        while start < n {
            let m = CHUNK.min(n - start);
            let pass = self.forward(&images[start * len..(start + m) * len], m, BnMode::Eval, false)?;
            logits.extend_from_slice(&pass.logits);
            features.extend_from_slice(&pass.features);
            start += m;
        }
        Ok((logits, features))
    }

    /// Predicted class per image, honoring the head layout.
    pub fn predict(&self, images: &[F], n: usize) -> Result<Vec<usize>> {
        let logits = self.logits(images, n)?;
        Ok(logits
            .chunks_exact(self.num_classes)
            .map(|row| self.head.predict(row))
            .collect())
    }
}

fn layout_error(what: &str, layout: Layout) -> Error {
    Error::InputShape(format!("{what} layer cannot consume activation layout {layout:?}"))
}

fn im2col<F: Real>(x: &[F], cin: usize, n: usize, h: usize, w: usize) -> Vec<F> {
    let hw = h * w;
    let cols = n * hw;
    let mut col = vec![F::ZERO; cin * 9 * cols];
    for ci in 0..cin {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ci * 9 + ky * 3 + kx) * cols;
                let (x0, x1) = kx_range(kx, w);
                for b in 0..n {
                    let src = &x[(ci * n + b) * hw..][..hw];
                    let dst = &mut col[row + b * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..][..w];
                        let drow = &mut dst[y * w..][..w];
                        drow[x0..x1].copy_from_slice(&srow[x0 + kx - 1..x1 + kx - 1]);
                    }
                }
            }
        }
    }
    col
}

fn col2im<F: Real>(dcol: &[F], cin: usize, n: usize, h: usize, w: usize) -> Vec<F> {
    let hw = h * w;
    let cols = n * hw;
    let mut dx = vec![F::ZERO; cin * cols];
    for ci in 0..cin {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ci * 9 + ky * 3 + kx) * cols;
                let (x0, x1) = kx_range(kx, w);
                for b in 0..n {
                    let src = &dcol[row + b * hw..][..hw];
                    let dst = &mut dx[(ci * n + b) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[y * w..][..w];
                        let drow = &mut dst[sy as usize * w..][..w];
                        for xx in x0..x1 {
                            drow[xx + kx - 1] += srow[xx];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Output columns whose source column `x + kx - 1` is inside the image.
fn kx_range(kx: usize, w: usize) -> (usize, usize) {
    match kx {
        0 => (1, w),
        1 => (0, w),
        _ => (0, w - 1),
    }
}

/// Incremental constructor used by the architecture registry and tests.
///
/// Weights use Kaiming-normal initialization from a seeded ChaCha stream;
/// biases start at zero and batch-norm at the identity.
pub struct NetworkBuilder {
    arch: String,
    input: [usize; 3],
    seed: u64,
    rng: ChaCha8Rng,
    layers: Vec<Layer>,
    params: ParamStore<f32>,
    buffers: ParamStore<f32>,
    shape: Layout,
}

impl NetworkBuilder {
    pub fn new(arch: impl Into<String>, input: [usize; 3], seed: u64) -> Self {
        NetworkBuilder {
            arch: arch.into(),
            input,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            layers: Vec::new(),
            params: ParamStore::new(),
            buffers: ParamStore::new(),
            shape: Layout::Spatial {
                c: input[0],
                n: 0,
                h: input[1],
                w: input[2],
            },
        }
    }

    fn kaiming(&mut self, shape: &[usize], fan_in: usize) -> Tensor<f32> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let len = shape.iter().product();
        let data = (0..len).map(|_| normal.sample(&mut self.rng) as f32).collect();
        Tensor::from_vec(shape, data)
    }

    fn add_param(&mut self, name: String, t: Tensor<f32>) -> usize {
        self.params.insert(name, t).expect("unique layer names")
    }

    pub fn conv(self, name: &str, cout: usize) -> Self {
        self.conv_layer(name, cout, true)
    }

    /// Convolution without a bias, for use in front of batch norm.
    pub fn conv_unbiased(self, name: &str, cout: usize) -> Self {
        self.conv_layer(name, cout, false)
    }

    fn conv_layer(mut self, name: &str, cout: usize, with_bias: bool) -> Self {
        let Layout::Spatial { c, n, h, w } = self.shape else {
            panic!("conv `{name}` after flatten");
        };
        let wt = self.kaiming(&[cout, c, 3, 3], c * 9);
        let weight = self.add_param(format!("{name}.weight"), wt);
        let bias = with_bias.then(|| self.add_param(format!("{name}.bias"), Tensor::zeros(&[cout])));
        self.layers.push(Layer::Conv3x3 {
            weight,
            bias,
            cin: c,
            cout,
        });
        self.shape = Layout::Spatial { c: cout, n, h, w };
        self
    }

    pub fn batch_norm(mut self, name: &str) -> Self {
        let Layout::Spatial { c, .. } = self.shape else {
            panic!("batch-norm `{name}` requires a spatial input");
        };
        let gamma = self.add_param(format!("{name}.weight"), Tensor::filled(&[c], 1.0));
        let beta = self.add_param(format!("{name}.bias"), Tensor::zeros(&[c]));
        let mean = self
            .buffers
            .insert(format!("{name}.running_mean"), Tensor::zeros(&[c]))
            .expect("unique layer names");
        let var = self
            .buffers
            .insert(format!("{name}.running_var"), Tensor::filled(&[c], 1.0))
            .expect("unique layer names");
        self.layers.push(Layer::BatchNorm {
            gamma,
            beta,
            mean,
            var,
            channels: c,
        });
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn max_pool(mut self) -> Self {
        let Layout::Spatial { c, n, h, w } = self.shape else {
            panic!("max-pool requires a spatial input");
        };
        assert!(h % 2 == 0 && w % 2 == 0, "max-pool needs even spatial size, got {h}x{w}");
        self.layers.push(Layer::MaxPool2);
        self.shape = Layout::Spatial { c, n, h: h / 2, w: w / 2 };
        self
    }

    pub fn flatten(mut self) -> Self {
        let Layout::Spatial { c, n, h, w } = self.shape else {
            panic!("flatten applied twice");
        };
        self.layers.push(Layer::Flatten);
        self.shape = Layout::Flat { n, d: c * h * w };
        self
    }

    pub fn global_avg_pool(mut self) -> Self {
        let Layout::Spatial { c, n, .. } = self.shape else {
            panic!("global-average-pool requires a spatial input");
        };
        self.layers.push(Layer::GlobalAvgPool);
        self.shape = Layout::Flat { n, d: c };
        self
    }

    pub fn linear(mut self, name: &str, dout: usize) -> Self {
        let Layout::Flat { n, d } = self.shape else {
            panic!("linear `{name}` requires a flattened input");
        };
        let wt = self.kaiming(&[dout, d], d);
        let weight = self.add_param(format!("{name}.weight"), wt);
        let bias = self.add_param(format!("{name}.bias"), Tensor::zeros(&[dout]));
        self.layers.push(Layer::Linear {
            weight,
            bias,
            din: d,
            dout,
        });
        self.shape = Layout::Flat { n, d: dout };
        self
    }

    /// Appends the classification head and finishes the network.
    pub fn head(self, num_classes: usize) -> Network<f32> {
        let b = self.linear("head", num_classes);
        Network {
            arch: b.arch,
            input: b.input,
            num_classes,
            layers: b.layers,
            params: b.params,
            buffers: b.buffers,
            head: HeadLayout::default(),
            seed: b.seed,
            meta: BTreeMap::new(),
        }
    }
}

impl<F: Real> Network<F> {
    /// Reassembles a network from stored parts, checking that every layer
    /// agrees with the tensors it references.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        arch: String,
        input: [usize; 3],
        num_classes: usize,
        layers: Vec<Layer>,
        params: ParamStore<F>,
        buffers: ParamStore<F>,
        head: HeadLayout,
        seed: u64,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::CheckpointFormat(msg));
        let plen = |i: usize| (i < params.len()).then(|| params.tensor(i).len());
        let blen = |i: usize| (i < buffers.len()).then(|| buffers.tensor(i).len());
        for layer in &layers {
            let ok = match *layer {
                Layer::Conv3x3 { weight, bias, cin, cout } => {
                    plen(weight) == Some(cout * cin * 9) && bias.map_or(true, |b| plen(b) == Some(cout))
                }
                Layer::BatchNorm {
                    gamma,
                    beta,
                    mean,
                    var,
                    channels,
                } => {
                    plen(gamma) == Some(channels)
                        && plen(beta) == Some(channels)
                        && blen(mean) == Some(channels)
                        && blen(var) == Some(channels)
                }
                Layer::Linear { weight, bias, din, dout } => {
                    plen(weight) == Some(din * dout) && plen(bias) == Some(dout)
                }
                Layer::Relu | Layer::MaxPool2 | Layer::Flatten | Layer::GlobalAvgPool => true,
            };
            if !ok {
                return bad(format!("layer {layer:?} disagrees with stored tensors"));
            }
        }
        match layers.last() {
            Some(Layer::Linear { dout, .. }) if *dout == num_classes => {}
            _ => return bad("network must end in a linear head over all classes".into()),
        }
        if head.deleted.iter().chain(head.merged_slot.iter()).any(|&c| c >= num_classes) {
            return bad("head layout references a class outside the label set".into());
        }
        let net = Network {
            arch,
            input,
            num_classes,
            layers,
            params,
            buffers,
            head,
            seed,
            meta,
        };
        // A dry run catches layer sequences whose activation layouts do not chain.
        let probe = vec![F::ZERO; net.input_len()];
        net.forward(&probe, 1, BnMode::Eval, false)
            .map_err(|e| Error::CheckpointFormat(format!("layer sequence is inconsistent: {e}")))?;
        Ok(net)
    }
}
