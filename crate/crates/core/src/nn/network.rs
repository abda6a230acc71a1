use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LnsError, Result};
use crate::nn::arith::Arith;
use crate::nn::layers::{Layer, Param};
use crate::nn::optim::{sgd_step, OptimizerState, SgdConfig};
use crate::nn::spec::NetworkSpec;
use crate::nn::tensor::Tensor;

/// A network built from a [`NetworkSpec`] over one arithmetic backend.
#[derive(Debug, Clone)]
pub struct Network<A: Arith> {
    arith: A,
    spec: NetworkSpec,
    layers: Vec<Layer<A::Scalar>>,
}

impl<A: Arith> Network<A> {
    /// Validates shapes and initializes weights from `spec.init_seed`. The
    /// draws are real-valued, so every backend starts from the same weights
    /// up to its own rounding.
    pub fn new(spec: NetworkSpec, arith: A) -> Result<Self> {
        spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let layers = spec
            .layers
            .iter()
            .map(|l| Layer::build(l, &arith, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            arith,
            spec,
            layers,
        })
    }

    pub fn arith(&self) -> &A {
        &self.arith
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<A::Scalar>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<A::Scalar>] {
        &mut self.layers
    }

    /// Batch tensor from real features laid out sample after sample.
    pub fn input(&self, features: &[f64], batch: usize) -> Result<Tensor<A::Scalar>> {
        let mut shape = vec![batch];
        shape.extend(&self.spec.input_shape);
        let data = features
            .iter()
            .map(|&x| self.arith.from_f64(x))
            .collect::<Result<Vec<_>>>()?;
        Tensor::new(shape, data)
    }

    /// Class probabilities. `train` selects batch statistics and keeps the
    /// caches backward needs.
    pub fn forward(&mut self, x: Tensor<A::Scalar>, train: bool) -> Result<Tensor<A::Scalar>> {
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(&self.arith, h, train)?;
        }
        Ok(h)
    }

    /// Backpropagates the mean cross-entropy of the last training forward
    /// pass, filling every parameter gradient. Returns the input gradient.
    pub fn backward(&mut self, labels: &[usize]) -> Result<Tensor<A::Scalar>> {
        let (head, body) = self
            .layers
            .split_last_mut()
            .ok_or_else(|| LnsError::Shape("empty network".into()))?;
        let Layer::SoftmaxXent(head) = head else {
            return Err(LnsError::Shape("last layer must be softmax_xent".into()));
        };
        let mut g = head.backward(&self.arith, labels)?;
        for layer in body.iter_mut().rev() {
            g = layer.backward(&self.arith, g)?;
        }
        Ok(g)
    }

    /// Trainable parameters, layer by layer.
    pub fn params_mut(&mut self) -> Vec<&mut Param<A::Scalar>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    /// Fresh optimizer state for this network's parameters.
    pub fn optimizer(
        &mut self,
        config: SgdConfig,
        steps_per_epoch: usize,
    ) -> Result<OptimizerState<A::Scalar>> {
        let params: Vec<_> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        OptimizerState::new(&self.arith, config, &params, steps_per_epoch)
    }

    /// Applies one SGD update from the stored gradients.
    pub fn sgd_step(&mut self, opt: &mut OptimizerState<A::Scalar>, step: u64) -> Result<f64> {
        let mut params: Vec<_> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        sgd_step(&self.arith, &mut params, opt, step)
    }

    /// Everything a checkpoint stores, layer by layer.
    pub fn state(&self) -> Vec<&Tensor<A::Scalar>> {
        self.layers.iter().flat_map(|l| l.state()).collect()
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<A::Scalar>> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }

    /// State read back as reals.
    pub fn export_f64(&self) -> Vec<Vec<f64>> {
        self.state()
            .into_iter()
            .map(|t| t.data().iter().map(|&v| self.arith.to_f64(v)).collect())
            .collect()
    }

    /// Overwrites the state from reals (rounded by this backend).
    pub fn import_f64(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let arith = &self.arith;
        let state = self
            .layers
            .iter_mut()
            .flat_map(|l| l.state_mut())
            .collect::<Vec<_>>();
        if state.len() != values.len() {
            return Err(LnsError::Shape(format!(
                "{} state tensors, got {}",
                state.len(),
                values.len()
            )));
        }
        for (t, v) in state.into_iter().zip(values) {
            if t.len() != v.len() {
                return Err(LnsError::Shape("state tensor length".into()));
            }
            for (slot, &x) in t.data_mut().iter_mut().zip(v) {
                *slot = arith.from_f64(x)?;
            }
        }
        Ok(())
    }
}
