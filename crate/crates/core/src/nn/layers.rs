//! Forward and backward passes. Every reduction runs in a fixed documented
//! order, since approximate LNS addition is not associative.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LnsError, Result};
use crate::nn::arith::Arith;
use crate::nn::spec::LayerSpec;
use crate::nn::tensor::Tensor;

/// A trainable tensor and the gradient from the last backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Copy> Param<S> {
    fn new(value: Tensor<S>, zero: S) -> Self {
        let grad = Tensor::filled(value.shape().to_vec(), zero);
        Param { value, grad }
    }
}

fn kaiming<A: Arith>(
    a: &A,
    shape: Vec<usize>,
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<A::Scalar>> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| a.from_f64(rng.random_range(-bound..bound)))
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(shape, data)
}

fn missing_cache() -> LnsError {
    LnsError::Shape("backward called without a training forward pass".into())
}

fn expect_row(x: &[usize], want: &[usize], what: &str) -> Result<()> {
    if x.len() < 2 || &x[1..] != want {
        return Err(LnsError::Shape(format!(
            "{what} expects [B, {want:?}], got {x:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Dense<S> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
    cache: Option<(Vec<usize>, Tensor<S>)>,
}

impl<S: Copy> Dense<S> {
    /// `y[b, o] = (sum_i W[o, i] * x[b, i]) + bias[o]`, summed in `i` order.
    pub fn forward<A: Arith<Scalar = S>>(
        &mut self,
        a: &A,
        x: Tensor<S>,
        train: bool,
    ) -> Result<Tensor<S>> {
        if x.row_len() != self.inputs || x.shape().len() < 2 {
            return Err(LnsError::Shape(format!(
                "dense expects {} inputs per sample, got {:?}",
                self.inputs,
                x.shape()
            )));
        }
        let bsz = x.batch();
        let (ni, no) = (self.inputs, self.outputs);
        let w = self.weight.value.data();
        let xd = x.data();
        let mut out = Vec::with_capacity(bsz * no);
        for b in 0..bsz {
            let row = &xd[b * ni..(b + 1) * ni];
            for o in 0..no {
                let wr = &w[o * ni..(o + 1) * ni];
                let mut acc = a.zero();
                for i in 0..ni {
                    acc = a.add(acc, a.mul(wr[i], row[i]));
                }
                if let Some(bias) = &self.bias {
                    acc = a.add(acc, bias.value.data()[o]);
                }
                out.push(acc);
            }
        }
        if train {
            let shape = x.shape().to_vec();
            self.cache = Some((shape, x.reshape(vec![bsz, ni])?));
        }
        Tensor::new(vec![bsz, no], out)
    }

    /// Gradients: `dW[o, i]` and `db[o]` sum over the batch in order;
    /// `dx[b, i]` sums over outputs in order.
    pub fn backward<A: Arith<Scalar = S>>(&mut self, a: &A, g: Tensor<S>) -> Result<Tensor<S>> {
        let (shape, x) = self.cache.take().ok_or_else(missing_cache)?;
        let bsz = x.batch();
        if g.shape() != [bsz, self.outputs] {
            return Err(LnsError::Shape(format!("dense grad shape {:?}", g.shape())));
        }
        let (ni, no) = (self.inputs, self.outputs);
        let (xd, gd) = (x.data(), g.data());
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        for o in 0..no {
            for i in 0..ni {
                let mut acc = a.zero();
                for b in 0..bsz {
                    acc = a.add(acc, a.mul(gd[b * no + o], xd[b * ni + i]));
                }
                gw[o * ni + i] = acc;
            }
        }
        if let Some(bias) = &mut self.bias {
            let gb = bias.grad.data_mut();
            for (o, slot) in gb.iter_mut().enumerate() {
                *slot = a.sum((0..bsz).map(|b| gd[b * no + o]));
            }
        }
        let mut dx = Vec::with_capacity(bsz * ni);
        for b in 0..bsz {
            for i in 0..ni {
                let mut acc = a.zero();
                for o in 0..no {
                    acc = a.add(acc, a.mul(w[o * ni + i], gd[b * no + o]));
                }
                dx.push(acc);
            }
        }
        Tensor::new(shape, dx)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_ch, in_ch, kernel, kernel]`
    pub weight: Param<S>,
    cache: Option<Tensor<S>>,
}

impl<S: Copy> Conv2d<S> {
    fn out_dim(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Input row for output row `o` and kernel row `k`, if not in padding.
    #[inline]
    fn src(&self, o: usize, k: usize, n: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.pad)
            .filter(|&i| i < n)
    }

    /// Each output element sums over `(ky, kx, in_ch)` in that order;
    /// padding positions are skipped.
    pub fn forward<A: Arith<Scalar = S>>(
        &mut self,
        a: &A,
        x: Tensor<S>,
        train: bool,
    ) -> Result<Tensor<S>> {
        let s = x.shape().to_vec();
        if s.len() != 4
            || s[1] != self.in_ch
            || s[2] + 2 * self.pad < self.kernel
            || s[3] + 2 * self.pad < self.kernel
        {
            return Err(LnsError::Shape(format!("conv2d input {s:?}")));
        }
        let (bsz, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let k = self.kernel;
        let wt = self.weight.value.data();
        let xd = x.data();
        let mut out = Vec::with_capacity(bsz * self.out_ch * ho * wo);
        for b in 0..bsz {
            for o in 0..self.out_ch {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = a.zero();
                        for ky in 0..k {
                            let Some(iy) = self.src(oy, ky, h) else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ix) = self.src(ox, kx, w) else {
                                    continue;
                                };
                                for ci in 0..c {
                                    let wv = wt[((o * c + ci) * k + ky) * k + kx];
                                    let xv = xd[((b * c + ci) * h + iy) * w + ix];
                                    acc = a.add(acc, a.mul(wv, xv));
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        if train {
            self.cache = Some(x);
        }
        Tensor::new(vec![bsz, self.out_ch, ho, wo], out)
    }

    /// `dx` sums over `(out_ch, ky, kx)`; `dW` sums over `(batch, oy, ox)`.
    pub fn backward<A: Arith<Scalar = S>>(&mut self, a: &A, g: Tensor<S>) -> Result<Tensor<S>> {
        let x = self.cache.take().ok_or_else(missing_cache)?;
        let s = x.shape().to_vec();
        let (bsz, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        if g.shape() != [bsz, self.out_ch, ho, wo] {
            return Err(LnsError::Shape(format!(
                "conv2d grad shape {:?}",
                g.shape()
            )));
        }
        let k = self.kernel;
        let (xd, gd) = (x.data(), g.data());
        let gidx =
            |b: usize, o: usize, oy: usize, ox: usize| ((b * self.out_ch + o) * ho + oy) * wo + ox;

        let mut gw = vec![a.zero(); self.weight.value.len()];
        for o in 0..self.out_ch {
            for ci in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = a.zero();
                        for b in 0..bsz {
                            for oy in 0..ho {
                                let Some(iy) = self.src(oy, ky, h) else {
                                    continue;
                                };
                                for ox in 0..wo {
                                    let Some(ix) = self.src(ox, kx, w) else {
                                        continue;
                                    };
                                    let xv = xd[((b * c + ci) * h + iy) * w + ix];
                                    acc = a.add(acc, a.mul(gd[gidx(b, o, oy, ox)], xv));
                                }
                            }
                        }
                        gw[((o * c + ci) * k + ky) * k + kx] = acc;
                    }
                }
            }
        }
        self.weight.grad.data_mut().copy_from_slice(&gw);

        let wt = self.weight.value.data();
        let mut dx = Vec::with_capacity(xd.len());
        for b in 0..bsz {
            for ci in 0..c {
                for iy in 0..h {
                    for ix in 0..w {
                        let mut acc = a.zero();
                        for o in 0..self.out_ch {
                            for ky in 0..k {
                                let Some(oy) = self.dst(iy, ky, ho) else {
                                    continue;
                                };
                                for kx in 0..k {
                                    let Some(ox) = self.dst(ix, kx, wo) else {
                                        continue;
                                    };
                                    let wv = wt[((o * c + ci) * k + ky) * k + kx];
                                    acc = a.add(acc, a.mul(wv, gd[gidx(b, o, oy, ox)]));
                                }
                            }
                        }
                        dx.push(acc);
                    }
                }
            }
        }
        Tensor::new(s, dx)
    }

    /// Output row fed by input row `i` through kernel row `k`.
    #[inline]
    fn dst(&self, i: usize, k: usize, n_out: usize) -> Option<usize> {
        let t = (i + self.pad).checked_sub(k)?;
        (t % self.stride == 0 && t / self.stride < n_out).then_some(t / self.stride)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    /// Sign test only: negative values become zero.
    pub fn forward<A: Arith>(
        &mut self,
        a: &A,
        x: Tensor<A::Scalar>,
        train: bool,
    ) -> Result<Tensor<A::Scalar>> {
        let mask: Vec<bool> = x.data().iter().map(|&v| a.is_positive(v)).collect();
        let zero = a.zero();
        let mut y = x;
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            if !m {
                *v = zero;
            }
        }
        if train {
            self.mask = Some(mask);
        }
        Ok(y)
    }

    pub fn backward<A: Arith>(&mut self, a: &A, g: Tensor<A::Scalar>) -> Result<Tensor<A::Scalar>> {
        let mask = self.mask.take().ok_or_else(missing_cache)?;
        if mask.len() != g.len() {
            return Err(LnsError::Shape("relu grad length".into()));
        }
        let zero = a.zero();
        let mut g = g;
        for (v, m) in g.data_mut().iter_mut().zip(mask) {
            if !m {
                *v = zero;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool {
    /// Window maximum by comparison; ties go to the lowest flat index.
    pub fn forward<A: Arith>(
        &mut self,
        a: &A,
        x: Tensor<A::Scalar>,
        train: bool,
    ) -> Result<Tensor<A::Scalar>> {
        let s = x.shape().to_vec();
        if s.len() != 4 || s[2] < self.kernel || s[3] < self.kernel {
            return Err(LnsError::Shape(format!("max_pool input {s:?}")));
        }
        let (bsz, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (k, st) = (self.kernel, self.stride);
        let (ho, wo) = ((h - k) / st + 1, (w - k) / st + 1);
        let xd = x.data();
        let mut out = Vec::with_capacity(bsz * c * ho * wo);
        let mut arg = Vec::with_capacity(out.capacity());
        for plane in 0..bsz * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * st * w + ox * st;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = base + (oy * st + ky) * w + ox * st + kx;
                            if a.cmp(xd[idx], xd[best]) == std::cmp::Ordering::Greater {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    arg.push(best);
                }
            }
        }
        if train {
            self.cache = Some((s.clone(), arg));
        }
        Tensor::new(vec![bsz, c, ho, wo], out)
    }

    /// Scatters each output gradient to its argmax, in output order.
    pub fn backward<A: Arith>(&mut self, a: &A, g: Tensor<A::Scalar>) -> Result<Tensor<A::Scalar>> {
        let (shape, arg) = self.cache.take().ok_or_else(missing_cache)?;
        if arg.len() != g.len() {
            return Err(LnsError::Shape("max_pool grad length".into()));
        }
        let mut dx = Tensor::filled(shape, a.zero());
        let d = dx.data_mut();
        for (&i, &v) in arg.iter().zip(g.data()) {
            d[i] = a.add(d[i], v);
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
struct BnCache<S> {
    xhat: Vec<S>,
    inv_std: Vec<S>,
}

/// Batch normalization over `[B, C]` or `[B, C, H, W]`.
///
/// Statistics for channel `c` run over `(batch, spatial)` in that order and
/// divide by the element count, which must be a power of two so the LNS
/// division is exact.
#[derive(Debug, Clone)]
pub struct BatchNorm<S> {
    pub features: usize,
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    epsilon: S,
    momentum: S,
    keep: S,
    cache: Option<BnCache<S>>,
}

pub const BN_MOMENTUM: f64 = 0.1;

impl<S: Copy> BatchNorm<S> {
    fn layout(&self, s: &[usize]) -> Result<(usize, usize)> {
        if !(s.len() == 2 || s.len() == 4) || s[1] != self.features {
            return Err(LnsError::Shape(format!("batch_norm input {s:?}")));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    fn channel_count(bsz: usize, spatial: usize) -> Result<usize> {
        let n = bsz * spatial;
        if !n.is_power_of_two() {
            return Err(LnsError::Shape(format!(
                "batch_norm needs a power-of-two element count per feature, got {n}"
            )));
        }
        Ok(n)
    }

    pub fn forward<A: Arith<Scalar = S>>(
        &mut self,
        a: &A,
        x: Tensor<S>,
        train: bool,
    ) -> Result<Tensor<S>> {
        let (bsz, sp) = self.layout(x.shape())?;
        let c = self.features;
        let at = |b: usize, ch: usize, j: usize| (b * c + ch) * sp + j;
        let xd = x.data();
        let mut y = vec![a.zero(); xd.len()];
        if !train {
            for ch in 0..c {
                let var = a.add(self.running_var.data()[ch], self.epsilon);
                let inv = a.div(a.one(), a.sqrt(var)?)?;
                let mean = self.running_mean.data()[ch];
                for b in 0..bsz {
                    for j in 0..sp {
                        let i = at(b, ch, j);
                        let xhat = a.mul(a.sub(xd[i], mean), inv);
                        y[i] = a.add(
                            a.mul(self.gamma.value.data()[ch], xhat),
                            self.beta.value.data()[ch],
                        );
                    }
                }
            }
            return Tensor::new(x.shape().to_vec(), y);
        }
        let n = a.from_f64(Self::channel_count(bsz, sp)? as f64)?;
        let mut xhat_all = vec![a.zero(); xd.len()];
        let mut inv_all = Vec::with_capacity(c);
        for ch in 0..c {
            let idx = || (0..bsz).flat_map(move |b| (0..sp).map(move |j| at(b, ch, j)));
            let mean = a.div(a.sum(idx().map(|i| xd[i])), n)?;
            let centered: Vec<(usize, S)> = idx().map(|i| (i, a.sub(xd[i], mean))).collect();
            let var = a.div(a.sum(centered.iter().map(|&(_, v)| a.mul(v, v))), n)?;
            let inv = a.div(a.one(), a.sqrt(a.add(var, self.epsilon))?)?;
            let (gamma, beta) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for (i, v) in centered {
                let xhat = a.mul(v, inv);
                xhat_all[i] = xhat;
                y[i] = a.add(a.mul(gamma, xhat), beta);
            }
            inv_all.push(inv);
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = a.add(a.mul(self.keep, *rm), a.mul(self.momentum, mean));
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = a.add(a.mul(self.keep, *rv), a.mul(self.momentum, var));
        }
        self.cache = Some(BnCache {
            xhat: xhat_all,
            inv_std: inv_all,
        });
        Tensor::new(x.shape().to_vec(), y)
    }

    /// `dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))`.
    pub fn backward<A: Arith<Scalar = S>>(&mut self, a: &A, g: Tensor<S>) -> Result<Tensor<S>> {
        let cache = self.cache.take().ok_or_else(missing_cache)?;
        let (bsz, sp) = self.layout(g.shape())?;
        if g.len() != cache.xhat.len() {
            return Err(LnsError::Shape("batch_norm grad length".into()));
        }
        let c = self.features;
        let n = a.from_f64(Self::channel_count(bsz, sp)? as f64)?;
        let gd = g.data();
        let mut dx = vec![a.zero(); gd.len()];
        for ch in 0..c {
            let idx: Vec<usize> = (0..bsz)
                .flat_map(|b| (0..sp).map(move |j| (b * c + ch) * sp + j))
                .collect();
            let gamma = self.gamma.value.data()[ch];
            self.gamma.grad.data_mut()[ch] =
                a.sum(idx.iter().map(|&i| a.mul(gd[i], cache.xhat[i])));
            self.beta.grad.data_mut()[ch] = a.sum(idx.iter().map(|&i| gd[i]));
            let dxhat: Vec<S> = idx.iter().map(|&i| a.mul(gd[i], gamma)).collect();
            let m1 = a.div(a.sum(dxhat.iter().copied()), n)?;
            let m2 = a.div(
                a.sum(
                    idx.iter()
                        .zip(&dxhat)
                        .map(|(&i, &d)| a.mul(d, cache.xhat[i])),
                ),
                n,
            )?;
            let inv = cache.inv_std[ch];
            for (&i, &d) in idx.iter().zip(&dxhat) {
                let t = a.sub(a.sub(d, m1), a.mul(cache.xhat[i], m2));
                dx[i] = a.mul(inv, t);
            }
        }
        Tensor::new(g.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone)]
pub struct SoftmaxXent<S> {
    pub classes: usize,
    probs: Option<Tensor<S>>,
}

impl<S: Copy> SoftmaxXent<S> {
    pub fn forward<A: Arith<Scalar = S>>(
        &mut self,
        a: &A,
        x: Tensor<S>,
        train: bool,
    ) -> Result<Tensor<S>> {
        expect_row(x.shape(), &[self.classes], "softmax_xent")?;
        let mut p = Vec::with_capacity(x.len());
        for row in x.data().chunks(self.classes) {
            p.extend(a.softmax(row));
        }
        let probs = Tensor::new(x.shape().to_vec(), p)?;
        if train {
            self.probs = Some(probs.clone());
        }
        Ok(probs)
    }

    /// `(p - onehot(label)) / B`, the gradient of the mean cross-entropy.
    pub fn backward<A: Arith<Scalar = S>>(&mut self, a: &A, labels: &[usize]) -> Result<Tensor<S>> {
        let p = self.probs.take().ok_or_else(missing_cache)?;
        let bsz = p.batch();
        if labels.len() != bsz {
            return Err(LnsError::Shape(format!(
                "{} labels for batch of {bsz}",
                labels.len()
            )));
        }
        let n = a.from_f64(bsz as f64)?;
        let minus_one = a.neg(a.one());
        let mut g = Vec::with_capacity(p.len());
        for (row, &label) in p.data().chunks(self.classes).zip(labels) {
            if label >= self.classes {
                return Err(LnsError::Shape(format!(
                    "label {label} out of {} classes",
                    self.classes
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                let d = if j == label { a.add(v, minus_one) } else { v };
                g.push(a.div(d, n)?);
            }
        }
        Tensor::new(p.shape().to_vec(), g)
    }
}

/// A built layer with its parameters and caches.
#[derive(Debug, Clone)]
pub enum Layer<S> {
    Dense(Dense<S>),
    Conv2d(Conv2d<S>),
    Relu(Relu),
    MaxPool(MaxPool),
    BatchNorm(BatchNorm<S>),
    SoftmaxXent(SoftmaxXent<S>),
}

impl<S: Copy> Layer<S> {
    /// Builds a layer, drawing initial weights from `rng` (Kaiming-uniform,
    /// row-major, biases zero).
    pub fn build<A: Arith<Scalar = S>>(
        spec: &LayerSpec,
        a: &A,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(match *spec {
            LayerSpec::Dense {
                inputs,
                outputs,
                bias,
            } => Layer::Dense(Dense {
                inputs,
                outputs,
                weight: Param::new(kaiming(a, vec![outputs, inputs], inputs, rng)?, a.zero()),
                bias: bias.then(|| Param::new(Tensor::filled(vec![outputs], a.zero()), a.zero())),
                cache: None,
            }),
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => Layer::Conv2d(Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
                weight: Param::new(
                    kaiming(
                        a,
                        vec![out_ch, in_ch, kernel, kernel],
                        in_ch * kernel * kernel,
                        rng,
                    )?,
                    a.zero(),
                ),
                cache: None,
            }),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::MaxPool { kernel, stride } => Layer::MaxPool(MaxPool {
                kernel,
                stride,
                cache: None,
            }),
            LayerSpec::BatchNorm { features, epsilon } => {
                let eps = epsilon.unwrap_or_else(|| a.bn_epsilon());
                Layer::BatchNorm(BatchNorm {
                    features,
                    gamma: Param::new(Tensor::filled(vec![features], a.one()), a.zero()),
                    beta: Param::new(Tensor::filled(vec![features], a.zero()), a.zero()),
                    running_mean: Tensor::filled(vec![features], a.zero()),
                    running_var: Tensor::filled(vec![features], a.one()),
                    epsilon: a.from_f64(eps)?,
                    momentum: a.from_f64(BN_MOMENTUM)?,
                    keep: a.from_f64(1.0 - BN_MOMENTUM)?,
                    cache: None,
                })
            }
            LayerSpec::SoftmaxXent { classes } => Layer::SoftmaxXent(SoftmaxXent {
                classes,
                probs: None,
            }),
        })
    }

    pub fn forward<A: Arith<Scalar = S>>(
        &mut self,
        a: &A,
        x: Tensor<S>,
        train: bool,
    ) -> Result<Tensor<S>> {
        match self {
            Layer::Dense(l) => l.forward(a, x, train),
            Layer::Conv2d(l) => l.forward(a, x, train),
            Layer::Relu(l) => l.forward(a, x, train),
            Layer::MaxPool(l) => l.forward(a, x, train),
            Layer::BatchNorm(l) => l.forward(a, x, train),
            Layer::SoftmaxXent(l) => l.forward(a, x, train),
        }
    }

    /// Backward for every layer but the loss head.
    pub fn backward<A: Arith<Scalar = S>>(&mut self, a: &A, g: Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Dense(l) => l.backward(a, g),
            Layer::Conv2d(l) => l.backward(a, g),
            Layer::Relu(l) => l.backward(a, g),
            Layer::MaxPool(l) => l.backward(a, g),
            Layer::BatchNorm(l) => l.backward(a, g),
            Layer::SoftmaxXent(_) => {
                Err(LnsError::Shape("softmax_xent backward needs labels".into()))
            }
        }
    }

    /// Trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        match self {
            Layer::Dense(l) => {
                let mut v = vec![&mut l.weight];
                if let Some(b) = &mut l.bias {
                    v.push(b);
                }
                v
            }
            Layer::Conv2d(l) => vec![&mut l.weight],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Every stored tensor (parameters, then running statistics).
    pub fn state(&self) -> Vec<&Tensor<S>> {
        match self {
            Layer::Dense(l) => {
                let mut v = vec![&l.weight.value];
                if let Some(b) = &l.bias {
                    v.push(&b.value);
                }
                v
            }
            Layer::Conv2d(l) => vec![&l.weight.value],
            Layer::BatchNorm(l) => vec![
                &l.gamma.value,
                &l.beta.value,
                &l.running_mean,
                &l.running_var,
            ],
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Layer::Dense(l) => {
                let mut v = vec![&mut l.weight.value];
                if let Some(b) = &mut l.bias {
                    v.push(&mut b.value);
                }
                v
            }
            Layer::Conv2d(l) => vec![&mut l.weight.value],
            Layer::BatchNorm(l) => vec![
                &mut l.gamma.value,
                &mut l.beta.value,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            _ => Vec::new(),
        }
    }
}
