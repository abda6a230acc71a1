//! Finite-difference checks of the LNS backward passes.
//!
//! A layer is built twice from the same values: once over [`LnsArith`] with
//! exact corrections and once over the double-precision mirror. Inputs and
//! parameters are drawn at random and rounded to the LNS grid first, so both
//! copies see identical numbers. The LNS analytic gradients are compared with
//! central differences of the mirror's forward pass.
//!
//! The scalar objective is `sum(r * y)` for a fixed random `r`, or the mean
//! cross-entropy for the softmax head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LnsError, Result};
use crate::format::LnsFormat;
use crate::nn::{Arith, Layer, LayerSpec, LnsArith, Tensor};
use crate::reference::F64Arith;

/// Central-difference step.
const STEP: f64 = 1e-5;

/// Norm-wise relative errors for one random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub input: f64,
    /// One entry per trainable parameter tensor.
    pub params: Vec<f64>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.params.iter().copied().fold(self.input, f64::max)
    }
}

/// `||a - b|| / ||b||`, or the absolute error when `b` is all zeros.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm > 1e-12 {
        diff / norm
    } else {
        diff
    }
}

fn draw(rng: &mut ChaCha8Rng, n: usize, a: &LnsArith) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            a.from_f64(x).map(|v| a.to_f64(v))
        })
        .collect()
}

fn set_params<A: Arith>(layer: &mut Layer<A::Scalar>, a: &A, values: &[Vec<f64>]) -> Result<()> {
    for (p, v) in layer.params_mut().into_iter().zip(values) {
        for (slot, &x) in p.value.data_mut().iter_mut().zip(v) {
            *slot = a.from_f64(x)?;
        }
    }
    Ok(())
}

struct Objective {
    weights: Vec<f64>,
    labels: Vec<usize>,
}

fn float_loss(
    layer: &Layer<f64>,
    a: &F64Arith,
    shape: &[usize],
    x: &[f64],
    obj: &Objective,
) -> Result<f64> {
    let mut l = layer.clone();
    let y = l.forward(a, Tensor::new(shape.to_vec(), x.to_vec())?, true)?;
    if let Layer::SoftmaxXent(_) = layer {
        let c = y.row_len();
        let total: f64 = y
            .data()
            .chunks(c)
            .zip(&obj.labels)
            .map(|(row, &k)| -row[k].ln())
            .sum();
        return Ok(total / obj.labels.len() as f64);
    }
    Ok(y.data().iter().zip(&obj.weights).map(|(p, q)| p * q).sum())
}

/// Runs one instance for `spec` on inputs of `shape` (batch first).
pub fn check_layer(
    spec: &LayerSpec,
    shape: &[usize],
    fmt: &LnsFormat,
    seed: u64,
) -> Result<GradCheck> {
    let lns = LnsArith::exact(fmt)?;
    let flt = F64Arith::mirroring(fmt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut init = ChaCha8Rng::seed_from_u64(seed);
    let mut ll = Layer::build(spec, &lns, &mut init)?;
    let mut fl = Layer::build(spec, &flt, &mut init)?;
    let param_values: Vec<Vec<f64>> = ll
        .params_mut()
        .iter()
        .map(|p| draw(&mut rng, p.value.len(), &lns))
        .collect::<Result<_>>()?;
    set_params(&mut ll, &lns, &param_values)?;
    set_params(&mut fl, &flt, &param_values)?;

    let n: usize = shape.iter().product();
    let x = draw(&mut rng, n, &lns)?;
    let xl = Tensor::new(
        shape.to_vec(),
        x.iter().map(|&v| lns.from_f64(v)).collect::<Result<_>>()?,
    )?;
    let y = ll.forward(&lns, xl, true)?;

    let is_head = matches!(ll, Layer::SoftmaxXent(_));
    let batch = shape[0];
    let obj = Objective {
        weights: if is_head {
            Vec::new()
        } else {
            draw(&mut rng, y.len(), &lns)?
        },
        labels: if is_head {
            (0..batch)
                .map(|_| rng.random_range(0..y.row_len()))
                .collect()
        } else {
            Vec::new()
        },
    };

    let dx = match &mut ll {
        Layer::SoftmaxXent(head) => head.backward(&lns, &obj.labels)?,
        other => {
            let g = Tensor::new(
                y.shape().to_vec(),
                obj.weights
                    .iter()
                    .map(|&v| lns.from_f64(v))
                    .collect::<Result<_>>()?,
            )?;
            other.backward(&lns, g)?
        }
    };
    let dx: Vec<f64> = dx.data().iter().map(|&v| lns.to_f64(v)).collect();
    let dparams: Vec<Vec<f64>> = ll
        .params_mut()
        .iter()
        .map(|p| p.grad.data().iter().map(|&v| lns.to_f64(v)).collect())
        .collect();

    // finite differences on the mirror
    let mut fd_x = vec![0.0; n];
    let mut xp = x.clone();
    for i in 0..n {
        let v = xp[i];
        xp[i] = v + STEP;
        let up = float_loss(&fl, &flt, shape, &xp, &obj)?;
        xp[i] = v - STEP;
        let down = float_loss(&fl, &flt, shape, &xp, &obj)?;
        xp[i] = v;
        fd_x[i] = (up - down) / (2.0 * STEP);
    }
    let mut params = Vec::with_capacity(param_values.len());
    for (pi, values) in param_values.iter().enumerate() {
        let mut fd = vec![0.0; values.len()];
        for (j, slot) in fd.iter_mut().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut l = fl.clone();
                let mut ps = l.params_mut();
                let p = ps
                    .get_mut(pi)
                    .ok_or_else(|| LnsError::Shape("parameter index".into()))?;
                p.value.data_mut()[j] = values[j] + delta;
                float_loss(&l, &flt, shape, &x, &obj)
            };
            *slot = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
        }
        params.push(relative_error(&dparams[pi], &fd));
    }
    Ok(GradCheck {
        input: relative_error(&dx, &fd_x),
        params,
    })
}

/// The small instances the acceptance checks use: one per layer type, with
/// the input shape (batch first).
pub fn standard_cases() -> Vec<(&'static str, LayerSpec, Vec<usize>)> {
    vec![
        (
            "dense",
            LayerSpec::Dense {
                inputs: 5,
                outputs: 3,
                bias: true,
            },
            vec![4, 5],
        ),
        (
            "conv2d",
            LayerSpec::Conv2d {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            vec![2, 2, 5, 5],
        ),
        ("relu", LayerSpec::Relu, vec![4, 6]),
        (
            "max_pool",
            LayerSpec::MaxPool {
                kernel: 2,
                stride: 2,
            },
            vec![2, 2, 4, 4],
        ),
        (
            "batch_norm",
            LayerSpec::BatchNorm {
                features: 3,
                epsilon: None,
            },
            vec![8, 3],
        ),
        (
            "softmax_xent",
            LayerSpec::SoftmaxXent { classes: 4 },
            vec![4, 4],
        ),
    ]
}
