//! Inherited-sampling layer assignment search.
//!
//! Starting from the all-ones assignment, each step trains the `n` one-hot
//! increments of the current winner inside the supernet, re-calibrates and
//! evaluates them, and keeps the best. After `m_t - n` steps the winners form
//! an inherited chain covering every depth from `n` to `m_t`.

use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignments::{seed_assignment, successors, AssignmentChain, LayerAssignment};
use crate::error::{LasError, Result};
use crate::harness::data::{CalibSpec, DatasetSplit};
use crate::nn::{evaluate, BatchStream, LrSchedule, SearchSpaceSpec, TrainConfig};
use crate::supernet::{CandidateFailure, Supernet};

pub const TRACE_VERSION: u32 = 1;

fn default_calib_size() -> usize {
    1000
}
fn default_batch_size() -> usize {
    64
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_bn_momentum() -> f64 {
    0.1
}
fn default_eval_batch_size() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub spec: SearchSpaceSpec,
    /// Epochs of interleaved training per depth step (`K`).
    pub step_epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    /// Peak learning rate of each step; half of `base_lr` when absent.
    #[serde(default)]
    pub search_lr: Option<f64>,
    #[serde(default = "default_calib_size")]
    pub calib_size: usize,
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "default_eval_batch_size")]
    pub eval_batch_size: usize,
}

impl SearchConfig {
    pub fn new(spec: SearchSpaceSpec, step_epochs: usize, warmup_epochs: usize, base_lr: f64, seed: u64) -> Self {
        SearchConfig {
            spec,
            step_epochs,
            warmup_epochs,
            base_lr,
            search_lr: None,
            calib_size: default_calib_size(),
            seed,
            batch_size: default_batch_size(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            bn_momentum: default_bn_momentum(),
            eval_batch_size: default_eval_batch_size(),
        }
    }

    pub fn search_lr(&self) -> f64 {
        self.search_lr.unwrap_or(self.base_lr / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.step_epochs == 0 {
            return Err(LasError::Config("step_epochs must be >= 1".into()));
        }
        let lr = self.search_lr();
        if lr.is_nan() || lr <= 0.0 || !lr.is_finite() {
            return Err(LasError::Config(format!("search_lr must be > 0, got {lr}")));
        }
        self.warmup_train_config().validate()?;
        self.step_train_config().validate()
    }

    /// Warm-up of the deepest sub-network at the constant base rate.
    pub fn warmup_train_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.base_lr,
            lr_schedule: LrSchedule::Constant,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.warmup_epochs,
            rng_seed: self.seed ^ 0x3A2F_0001,
            bn_momentum: self.bn_momentum,
            hflip: false,
            pad_crop: 0,
        }
    }

    /// One depth step: linear decay from `search_lr` over `step_epochs`.
    pub fn step_train_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.search_lr(),
            lr_schedule: LrSchedule::LinearDecay,
            epochs: self.step_epochs,
            rng_seed: self.seed ^ 0x3A2F_0002,
            ..self.warmup_train_config()
        }
    }

    pub fn calib_spec(&self) -> CalibSpec {
        CalibSpec {
            size: self.calib_size,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub assignment: LayerAssignment,
    pub val_acc: f64,
}

/// What an evaluator reports for one depth step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Surviving candidates in input order.
    pub scores: Vec<CandidateScore>,
    pub failures: Vec<CandidateFailure>,
    pub lr_used: f64,
    pub epochs: usize,
}

/// Trains and scores the candidates of each step.
pub trait CandidateEvaluator {
    fn warmup(&mut self) -> Result<()> {
        Ok(())
    }

    fn evaluate_step(&mut self, candidates: &[LayerAssignment]) -> Result<StepOutcome>;

    /// Whether step wall-clock time is meaningful. Untimed evaluators get
    /// `wall_clock_s = 0` so their traces are reproducible byte for byte.
    fn timed(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Depth of the candidates (and of the winner).
    pub depth: usize,
    pub parent: LayerAssignment,
    pub candidates: Vec<CandidateScore>,
    pub winner: LayerAssignment,
    pub lr_used: f64,
    pub epochs: usize,
    pub wall_clock_s: f64,
    #[serde(default)]
    pub failures: Vec<CandidateFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub trace_version: u32,
    pub config_digest: String,
    pub groups: usize,
    pub target_depth: usize,
    pub steps: Vec<StepRecord>,
    pub chain: AssignmentChain,
    /// Candidate trainings performed.
    pub budget: usize,
    /// Set when the search stopped early.
    #[serde(default)]
    pub error: Option<String>,
}

impl SearchTrace {
    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.chain.last().depth() == self.target_depth
    }

    /// Winner at `depth`, if the search reached it.
    pub fn winner_at(&self, depth: usize) -> Option<&LayerAssignment> {
        self.chain.at_depth(depth)
    }

    /// Winner sequence and accuracies, without timings.
    pub fn fingerprint(&self) -> Vec<(String, Vec<(String, u64)>)> {
        self.steps
            .iter()
            .map(|s| {
                (
                    s.winner.to_string(),
                    s.candidates
                        .iter()
                        .map(|c| (c.assignment.to_string(), c.val_acc.to_bits()))
                        .collect(),
                )
            })
            .collect()
    }
}

/// Highest accuracy; ties go to the lexicographically smallest assignment.
pub fn select_top1(candidates: &[CandidateScore]) -> Result<&CandidateScore> {
    let mut best: Option<&CandidateScore> = None;
    for c in candidates {
        if !c.val_acc.is_finite() {
            return Err(LasError::domain(format!("non-finite accuracy for {}", c.assignment)));
        }
        best = match best {
            None => Some(c),
            Some(b) if c.val_acc > b.val_acc || (c.val_acc == b.val_acc && c.assignment < b.assignment) => Some(c),
            keep => keep,
        };
    }
    best.ok_or_else(|| LasError::domain("top-1 of an empty candidate list"))
}

/// Candidate trainings a complete search performs: `n (m_t - n)`.
pub fn search_budget(groups: usize, target_depth: usize) -> usize {
    groups * target_depth.saturating_sub(groups)
}

fn is_divergence(e: &LasError) -> bool {
    matches!(e, LasError::Diverged { .. } | LasError::NonFinite { .. })
}

/// Run the search loop against any evaluator. Divergence of the shared
/// training stops the search and is recorded in the returned trace.
pub fn run_search_with<E: CandidateEvaluator + ?Sized>(cfg: &SearchConfig, evaluator: &mut E) -> Result<SearchTrace> {
    cfg.validate()?;
    let n = cfg.spec.groups;
    let target = cfg.spec.target_depth;
    let seed = seed_assignment(n)?;
    let mut trace = SearchTrace {
        trace_version: TRACE_VERSION,
        config_digest: hex::encode(cfg.digest()),
        groups: n,
        target_depth: target,
        steps: Vec::with_capacity(target - n),
        chain: AssignmentChain::new(vec![seed.clone()])?,
        budget: 0,
        error: None,
    };
    if target == n {
        return Ok(trace);
    }
    if let Err(e) = evaluator.warmup() {
        if is_divergence(&e) {
            trace.error = Some(format!("warm-up: {e}"));
            return Ok(trace);
        }
        return Err(e);
    }
    let mut winner = seed;
    for depth in n + 1..=target {
        let started = Instant::now();
        let candidates = successors(&winner);
        let outcome = match evaluator.evaluate_step(&candidates) {
            Ok(o) => o,
            Err(e) if is_divergence(&e) => {
                trace.error = Some(format!("depth {depth}: {e}"));
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        trace.budget += candidates.len();
        for f in &outcome.failures {
            warn!("depth {depth}: dropped candidate {} ({})", f.assignment, f.reason);
        }
        if outcome.scores.is_empty() {
            trace.error = Some(format!("depth {depth}: every candidate failed"));
            return Ok(trace);
        }
        let best = select_top1(&outcome.scores)?.assignment.clone();
        info!("depth {depth}: winner {best}");
        trace.chain.push(best.clone())?;
        trace.steps.push(StepRecord {
            depth,
            parent: winner,
            candidates: outcome.scores,
            winner: best.clone(),
            lr_used: outcome.lr_used,
            epochs: outcome.epochs,
            wall_clock_s: if evaluator.timed() { started.elapsed().as_secs_f64() } else { 0.0 },
            failures: outcome.failures,
        });
        winner = best;
    }
    Ok(trace)
}

/// Candidates trained inside a weight-sharing supernet.
pub struct SupernetEvaluator<'a> {
    cfg: SearchConfig,
    data: &'a DatasetSplit,
    supernet: Supernet<f32>,
    stream: BatchStream,
}

impl<'a> SupernetEvaluator<'a> {
    pub fn new(cfg: &SearchConfig, data: &'a DatasetSplit) -> Result<Self> {
        cfg.validate()?;
        let spec = &cfg.spec;
        let need = spec.target_depth - spec.groups + 1;
        if spec.group_capacity.iter().any(|&c| c < need) {
            return Err(LasError::Config(format!(
                "group capacity {:?} cannot hold every chain to depth {} (need {need} per group)",
                spec.group_capacity, spec.target_depth
            )));
        }
        if data.train.shape() != spec.input_shape {
            return Err(LasError::shape(format!(
                "data shape {:?} does not match input shape {:?}",
                data.train.shape(),
                spec.input_shape
            )));
        }
        data.validate(spec.num_classes)?;
        if data.val.is_empty() || data.calib.is_empty() {
            return Err(LasError::domain("search needs non-empty validation and calibration sets"));
        }
        let supernet = Supernet::new(spec, cfg.seed)?;
        let step = cfg.step_train_config();
        Ok(SupernetEvaluator {
            cfg: cfg.clone(),
            data,
            supernet,
            stream: BatchStream::new(step.rng_seed, data.train.len(), step.batch_size),
        })
    }

    pub fn supernet(&self) -> &Supernet<f32> {
        &self.supernet
    }
}

impl CandidateEvaluator for SupernetEvaluator<'_> {
    fn warmup(&mut self) -> Result<()> {
        self.supernet.warmup(&self.data.train, &self.cfg.warmup_train_config())?;
        Ok(())
    }

    fn evaluate_step(&mut self, candidates: &[LayerAssignment]) -> Result<StepOutcome> {
        let step = self.cfg.step_train_config();
        let summary = self
            .supernet
            .train_candidates_interleaved(candidates, &self.data.train, &step, &mut self.stream)?;
        let mut scores = Vec::with_capacity(candidates.len());
        for c in candidates {
            if summary.failed.iter().any(|f| &f.assignment == c) {
                continue;
            }
            // Each candidate gets its own statistics right before evaluation,
            // since shared slots also hold shared BN state.
            self.supernet.recalc_bn(c, &self.data.calib, self.cfg.eval_batch_size)?;
            let acc = evaluate(&self.supernet.view(c)?, &self.data.val, self.cfg.eval_batch_size)?;
            scores.push(CandidateScore {
                assignment: c.clone(),
                val_acc: acc,
            });
        }
        Ok(StepOutcome {
            scores,
            failures: summary.failed,
            lr_used: step.base_lr,
            epochs: step.epochs,
        })
    }
}

/// Full search over the supernet: warm-up, then one step per depth.
pub fn run_search(cfg: &SearchConfig, data: &DatasetSplit) -> Result<SearchTrace> {
    let mut ev = SupernetEvaluator::new(cfg, data)?;
    run_search_with(cfg, &mut ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(s: &str, acc: f64) -> CandidateScore {
        CandidateScore {
            assignment: s.parse().unwrap(),
            val_acc: acc,
        }
    }

    #[test]
    fn top1_picks_the_best() {
        let c = [score("2-1-1", 0.40), score("1-2-1", 0.45), score("1-1-2", 0.43)];
        assert_eq!(select_top1(&c).unwrap().assignment.to_string(), "1-2-1");
    }

    #[test]
    fn top1_breaks_ties_lexicographically() {
        let c = [score("2-1-1", 0.5), score("1-2-1", 0.5)];
        assert_eq!(select_top1(&c).unwrap().assignment.to_string(), "1-2-1");
        assert!(select_top1(&[]).is_err());
    }

    #[test]
    fn top1_among_successors_of_2_1_2() {
        let c = [score("3-1-2", 72.51), score("2-2-2", 72.41), score("2-1-3", 72.06)];
        assert_eq!(select_top1(&c).unwrap().assignment.to_string(), "3-1-2");
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(search_budget(3, 8), 15);
        assert_eq!(search_budget(3, 3), 0);
    }

    #[test]
    fn config_defaults_and_validation() {
        let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
        let mut cfg = SearchConfig::new(spec, 2, 1, 0.1, 0);
        assert_eq!(cfg.search_lr(), 0.05);
        assert_eq!(cfg.step_train_config().lr_schedule, LrSchedule::LinearDecay);
        cfg.validate().unwrap();
        cfg.step_epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.step_epochs = 1;
        cfg.search_lr = Some(0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
        let cfg = SearchConfig::new(spec, 2, 1, 0.1, 0);
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["stepepochs"] = 3.into();
        assert!(serde_json::from_value::<SearchConfig>(v).is_err());
    }
}
