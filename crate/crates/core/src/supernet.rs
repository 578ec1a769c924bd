//! Weight-sharing supernet over every assignment within the group capacities.
//!
//! Group `i` owns `c_i` cell slots. A sub-network with `a_i` layers in group
//! `i` runs the stem, slots `1..=a_i` of each group, and the classifier, so
//! every assignment reuses the slots of any assignment it inherits from.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignments::LayerAssignment;
use crate::error::{LasError, Result};
use crate::harness::data::Dataset;
use crate::nn::checkpoint::{self, CheckpointKind};
use crate::nn::model::{cell_digest, Layers, LayersMut, ModelParams};
use crate::nn::train::{self, BatchStream};
use crate::nn::{Model, Network, Scalar, SearchSpaceSpec, TrainConfig, TrainSummary, TrainableModel};

/// The shared parameter set `w_one-shot`.
#[derive(Clone, Debug, PartialEq)]
pub struct Supernet<T> {
    spec: SearchSpaceSpec,
    params: ModelParams<T>,
}

/// Deterministically initialise all `c_i` slots of every group.
pub fn init_supernet<T: Scalar>(spec: &SearchSpaceSpec, seed: u64) -> Result<Supernet<T>> {
    Supernet::new(spec, seed)
}

impl<T: Scalar> Supernet<T> {
    pub fn new(spec: &SearchSpaceSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(spec, &spec.group_capacity, &mut rng);
        Ok(Supernet {
            spec: spec.clone(),
            params,
        })
    }

    pub fn spec(&self) -> &SearchSpaceSpec {
        &self.spec
    }

    pub fn capacity(&self) -> &[usize] {
        &self.spec.group_capacity
    }

    /// The deepest sub-network, `[c_1, .., c_n]`.
    pub fn full_assignment(&self) -> LayerAssignment {
        self.spec.capacity_assignment()
    }

    /// Number of cell slots across all groups.
    pub fn slot_count(&self) -> usize {
        self.params.groups.iter().map(Vec::len).sum()
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    fn check(&self, a: &LayerAssignment) -> Result<()> {
        self.spec.check_assignment(a)
    }

    /// Read-only sub-network for `a`.
    pub fn view(&self, a: &LayerAssignment) -> Result<SubnetworkView<'_, T>> {
        self.check(a)?;
        Ok(SubnetworkView {
            supernet: self,
            assignment: a.clone(),
        })
    }

    /// Trainable sub-network for `a`; updates land in the shared slots.
    pub fn view_mut(&mut self, a: &LayerAssignment) -> Result<SubnetworkViewMut<'_, T>> {
        self.check(a)?;
        Ok(SubnetworkViewMut {
            supernet: self,
            assignment: a.clone(),
        })
    }

    /// Copy the slots `a` selects into an independent stand-alone network.
    pub fn extract(&self, a: &LayerAssignment) -> Result<Network<T>> {
        self.check(a)?;
        let params = ModelParams {
            stem: self.params.stem.clone(),
            groups: self
                .params
                .groups
                .iter()
                .zip(a.groups())
                .map(|(g, &k)| g[..k].to_vec())
                .collect(),
            classifier: self.params.classifier.clone(),
        };
        Ok(Network::from_parts(self.spec.clone(), a.clone(), params))
    }

    /// Digest of slot `slot` (0-based) in `group`.
    pub fn slot_digest(&self, group: usize, slot: usize) -> [u8; 32] {
        cell_digest(&self.params.groups[group][slot])
    }

    /// Digests of every slot, grouped.
    pub fn slot_digests(&self) -> Vec<Vec<[u8; 32]>> {
        self.params
            .groups
            .iter()
            .map(|g| g.iter().map(cell_digest).collect())
            .collect()
    }

    /// Digest over all parameters and running statistics.
    pub fn digest(&self) -> [u8; 32] {
        self.params.layers(&self.spec, &self.spec.group_capacity).digest()
    }

    /// Train the full-capacity sub-network with `cfg` as given.
    pub fn warmup(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<TrainSummary> {
        let full = self.full_assignment();
        if cfg.epochs == 0 {
            return Ok(TrainSummary {
                epoch_losses: Vec::new(),
                steps: 0,
                val_accuracy: None,
            });
        }
        let mut view = self.view_mut(&full)?;
        train::train(&mut view, data, None, cfg)
    }

    /// One search step of training: per batch, a step on the deepest
    /// sub-network followed by one step on each candidate, all on the same
    /// batch. The learning rate decays linearly from `cfg.base_lr` to zero
    /// over `cfg.epochs`. A candidate that produces a non-finite loss is
    /// dropped from the rest of the step and reported.
    pub fn train_candidates_interleaved(
        &mut self,
        candidates: &[LayerAssignment],
        data: &Dataset,
        cfg: &TrainConfig,
        stream: &mut BatchStream,
    ) -> Result<InterleavedSummary> {
        cfg.validate()?;
        for c in candidates {
            self.check(c)?;
        }
        let full = self.full_assignment();
        let total = cfg.epochs * stream.batches_per_epoch();
        let mut summary = InterleavedSummary {
            optimizer_steps: 0,
            deepest_losses: Vec::with_capacity(cfg.epochs),
            candidate_losses: vec![Vec::with_capacity(cfg.epochs); candidates.len()],
            failed: Vec::new(),
        };
        let mut alive = vec![true; candidates.len()];
        let mut iter = 0;
        for epoch in 0..cfg.epochs {
            let batches = stream.epoch();
            let nb = batches.len() as f64;
            let mut deep_sum = 0.0;
            let mut cand_sum = vec![0.0; candidates.len()];
            for (b, idx) in batches.into_iter().enumerate() {
                let (x, labels) = data.batch_augmented::<T, _>(&idx, cfg.hflip, cfg.pad_crop, stream.rng());
                let lr = train::LrSchedule::LinearDecay.lr(cfg.base_lr, epoch, iter, total);
                iter += 1;
                let mut deepest = self.view_mut(&full)?;
                deep_sum += train::train_step(&mut deepest, &x, &labels, lr, cfg).map_err(|e| match e {
                    LasError::NonFinite { .. } => LasError::Diverged {
                        epoch,
                        step: b,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                summary.optimizer_steps += 1;
                for (i, cand) in candidates.iter().enumerate() {
                    if !alive[i] {
                        continue;
                    }
                    let mut view = self.view_mut(cand)?;
                    match train::train_step(&mut view, &x, &labels, lr, cfg) {
                        Ok(loss) => {
                            cand_sum[i] += loss;
                            summary.optimizer_steps += 1;
                        }
                        Err(LasError::NonFinite { layer }) => {
                            warn!("candidate {cand} diverged at epoch {epoch}, batch {b} ({layer})");
                            alive[i] = false;
                            summary.failed.push(CandidateFailure {
                                assignment: cand.clone(),
                                epoch,
                                batch: b,
                                reason: format!("non-finite values in {layer}"),
                            });
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            summary.deepest_losses.push(deep_sum / nb);
            for (l, s) in summary.candidate_losses.iter_mut().zip(cand_sum) {
                l.push(s / nb);
            }
        }
        Ok(summary)
    }

    pub fn recalc_bn(&mut self, a: &LayerAssignment, calib: &Dataset, batch_size: usize) -> Result<()> {
        let mut view = self.view_mut(a)?;
        train::recalc_bn(&mut view, calib, batch_size)
    }
}

impl Supernet<f32> {
    /// `LASN` container with the supernet flag and slot layout table.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let full = self.full_assignment();
        checkpoint::encode(
            CheckpointKind::Supernet,
            &self.spec,
            &full,
            &self.params.layers(&self.spec, full.groups()),
        )
    }

    pub fn from_checkpoint(bytes: &[u8], spec: &SearchSpaceSpec) -> Result<Self> {
        let (layout, params) = checkpoint::decode(bytes, CheckpointKind::Supernet, spec)?;
        if layout.groups() != spec.group_capacity.as_slice() {
            return Err(LasError::format(format!(
                "checkpoint slot layout {layout} does not match capacity {:?}",
                spec.group_capacity
            )));
        }
        Ok(Supernet {
            spec: spec.clone(),
            params,
        })
    }
}

/// Candidate dropped from a search step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub assignment: LayerAssignment,
    pub epoch: usize,
    pub batch: usize,
    pub reason: String,
}

/// Bookkeeping of one interleaved training phase.
#[derive(Clone, Debug, PartialEq)]
pub struct InterleavedSummary {
    pub optimizer_steps: usize,
    pub deepest_losses: Vec<f64>,
    pub candidate_losses: Vec<Vec<f64>>,
    pub failed: Vec<CandidateFailure>,
}

/// Sub-network `N(w_one-shot, A)` borrowed from a supernet.
pub struct SubnetworkView<'a, T> {
    supernet: &'a Supernet<T>,
    assignment: LayerAssignment,
}

impl<T> SubnetworkView<'_, T> {
    pub fn assignment(&self) -> &LayerAssignment {
        &self.assignment
    }
}

impl<T: Scalar> Model<T> for SubnetworkView<'_, T> {
    fn spec(&self) -> &SearchSpaceSpec {
        &self.supernet.spec
    }

    fn layers(&self) -> Layers<'_, T> {
        self.supernet
            .params
            .layers(&self.supernet.spec, self.assignment.groups())
    }
}

pub struct SubnetworkViewMut<'a, T> {
    supernet: &'a mut Supernet<T>,
    assignment: LayerAssignment,
}

impl<T> SubnetworkViewMut<'_, T> {
    pub fn assignment(&self) -> &LayerAssignment {
        &self.assignment
    }
}

impl<T: Scalar> Model<T> for SubnetworkViewMut<'_, T> {
    fn spec(&self) -> &SearchSpaceSpec {
        &self.supernet.spec
    }

    fn layers(&self) -> Layers<'_, T> {
        self.supernet
            .params
            .layers(&self.supernet.spec, self.assignment.groups())
    }
}

impl<T: Scalar> TrainableModel<T> for SubnetworkViewMut<'_, T> {
    fn layers_mut(&mut self) -> LayersMut<'_, T> {
        let Supernet { spec, params } = &mut *self.supernet;
        params.layers_mut(spec, self.assignment.groups())
    }
}

/// Mean absolute difference between stand-alone and one-shot accuracies.
pub fn accuracy_gap(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(LasError::domain("accuracy gap needs at least one pair"));
    }
    for &(s, o) in pairs {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&o) {
            return Err(LasError::domain(format!("accuracies ({s}, {o}) outside [0, 1]")));
        }
    }
    let total: f64 = pairs.iter().map(|(s, o)| (s - o).abs()).sum();
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_hand_arithmetic() {
        assert_eq!(accuracy_gap(&[(0.70, 0.70)]).unwrap(), 0.0);
        let g = accuracy_gap(&[(0.70, 0.68), (0.60, 0.63)]).unwrap();
        assert!((g - 0.025).abs() < 1e-12);
        assert!(accuracy_gap(&[]).is_err());
        assert!(accuracy_gap(&[(1.2, 0.5)]).is_err());
    }

    #[test]
    fn slot_layout() {
        let spec = SearchSpaceSpec::plain(vec![4, 8, 16], [3, 8, 8], 4, 8);
        let sn = Supernet::<f32>::new(&spec, 1).unwrap();
        assert_eq!(sn.capacity(), &[6, 6, 6]);
        assert_eq!(sn.slot_count(), 18);
        assert!(sn.params().stem.is_none());
        assert_eq!(sn.params().classifier.len(), 2);
        let bad: LayerAssignment = "7-1-1".parse().unwrap();
        assert!(sn.view(&bad).is_err());
    }
}
