use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{forward_macs, Layers, LayersMut, ModelParams};
use super::scalar::Scalar;
use super::spec::SearchSpaceSpec;
use super::tensor::Tensor;
use crate::assignments::LayerAssignment;
use crate::error::Result;

/// Anything that can run a forward pass: a network or a supernet view.
pub trait Model<T: Scalar> {
    fn spec(&self) -> &SearchSpaceSpec;
    fn layers(&self) -> Layers<'_, T>;

    /// Inference-mode logits, shape `(batch, num_classes)`.
    fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.layers().forward(x, false)?.0)
    }

    fn digest(&self) -> [u8; 32] {
        self.layers().digest()
    }
}

/// A model whose selected parameters can be updated.
pub trait TrainableModel<T: Scalar>: Model<T> {
    fn layers_mut(&mut self) -> LayersMut<'_, T>;
}

/// Stand-alone network `N(w, A)` for one layer assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: SearchSpaceSpec,
    assignment: LayerAssignment,
    pub(crate) params: ModelParams<T>,
}

impl<T: Scalar> Network<T> {
    /// Freshly initialised network; parameters depend only on `(spec, a, seed)`.
    pub fn build(spec: &SearchSpaceSpec, a: &LayerAssignment, seed: u64) -> Result<Self> {
        spec.validate()?;
        spec.check_assignment(a)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(spec, a.groups(), &mut rng);
        Ok(Network {
            spec: spec.clone(),
            assignment: a.clone(),
            params,
        })
    }

    pub(crate) fn from_parts(spec: SearchSpaceSpec, assignment: LayerAssignment, params: ModelParams<T>) -> Self {
        debug_assert_eq!(params.group_sizes(), assignment.groups());
        Network {
            spec,
            assignment,
            params,
        }
    }

    pub fn assignment(&self) -> &LayerAssignment {
        &self.assignment
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().parameter_count()
    }

    /// Conv and FC multiply-accumulates per sample.
    pub fn macs(&self) -> u64 {
        forward_macs(&self.spec, self.assignment.groups())
    }
}

impl<T: Scalar> Model<T> for Network<T> {
    fn spec(&self) -> &SearchSpaceSpec {
        &self.spec
    }

    fn layers(&self) -> Layers<'_, T> {
        self.params.layers(&self.spec, self.assignment.groups())
    }
}

impl<T: Scalar> TrainableModel<T> for Network<T> {
    fn layers_mut(&mut self) -> LayersMut<'_, T> {
        self.params.layers_mut(&self.spec, self.assignment.groups())
    }
}

/// Build a network; see [`Network::build`].
pub fn build_network<T: Scalar>(spec: &SearchSpaceSpec, a: &LayerAssignment, seed: u64) -> Result<Network<T>> {
    Network::build(spec, a, seed)
}
