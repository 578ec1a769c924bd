//! Synthetic assignment -> accuracy functions for exercising the search
//! without training networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignments::{enumerate_assignments, seed_assignment, successors, LayerAssignment};
use crate::error::{LasError, Result};
use crate::search::{select_top1, CandidateEvaluator, CandidateScore, StepOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandscapeKind {
    /// Separable concave utilities: every per-depth argmax inherits from the
    /// previous one.
    Planted,
    /// Independent pseudo-random value per assignment.
    Random,
    /// Planted, plus a bonus on one assignment that is not a successor of the
    /// previous depth's best.
    Adversarial,
    /// The same value everywhere.
    Constant,
}

impl std::str::FromStr for LandscapeKind {
    type Err = LasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted" => Ok(LandscapeKind::Planted),
            "random" => Ok(LandscapeKind::Random),
            "adversarial" => Ok(LandscapeKind::Adversarial),
            "constant" => Ok(LandscapeKind::Constant),
            other => Err(LasError::Config(format!("unknown surrogate landscape {other:?}"))),
        }
    }
}

/// Per-group utility of the `j`-th extra layer: `base * ratio^(j-1)`.
#[derive(Clone, Debug, PartialEq)]
struct Utility {
    base: f64,
    ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateLandscape {
    kind: LandscapeKind,
    seed: u64,
    groups: usize,
    utilities: Vec<Utility>,
    bonus: Option<(LayerAssignment, f64)>,
}

/// Monotone map from utility score to an accuracy in `(0.2, 0.9)`.
fn squash(score: f64) -> f64 {
    0.2 + 0.7 * (1.0 - (-score).exp())
}

impl SurrogateLandscape {
    fn utilities(groups: usize, seed: u64) -> Vec<Utility> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1A4D);
        (0..groups)
            .map(|_| Utility {
                base: rng.gen_range(0.05..0.5),
                ratio: rng.gen_range(0.5..0.9),
            })
            .collect()
    }

    pub fn planted(groups: usize, seed: u64) -> Result<Self> {
        if groups == 0 {
            return Err(LasError::domain("landscape needs at least one group"));
        }
        Ok(SurrogateLandscape {
            kind: LandscapeKind::Planted,
            seed,
            groups,
            utilities: Self::utilities(groups, seed),
            bonus: None,
        })
    }

    pub fn random(groups: usize, seed: u64) -> Result<Self> {
        let mut l = Self::planted(groups, seed)?;
        l.kind = LandscapeKind::Random;
        Ok(l)
    }

    pub fn constant(groups: usize) -> Result<Self> {
        let mut l = Self::planted(groups, 0)?;
        l.kind = LandscapeKind::Constant;
        Ok(l)
    }

    /// Planted landscape whose best assignment at depth `n + 2` is replaced
    /// by one that is not a successor of the best at depth `n + 1`.
    pub fn adversarial(groups: usize, seed: u64) -> Result<Self> {
        if groups < 2 {
            return Err(LasError::domain("an adversarial landscape needs at least two groups"));
        }
        let planted = Self::planted(groups, seed)?;
        let depth = groups + 2;
        let prev = planted.argmax(depth - 1)?;
        let succ = successors(&prev);
        let all = enumerate_assignments(depth, groups)?;
        let target = all
            .iter()
            .find(|a| !succ.contains(a))
            .expect("some depth n+2 assignment is not a successor")
            .clone();
        let best = all.iter().map(|a| planted.score(a)).fold(f64::MIN, f64::max);
        let bonus = best - planted.score(&target) + 0.25;
        Ok(SurrogateLandscape {
            kind: LandscapeKind::Adversarial,
            bonus: Some((target, bonus)),
            ..planted
        })
    }

    pub fn new(kind: LandscapeKind, groups: usize, seed: u64) -> Result<Self> {
        match kind {
            LandscapeKind::Planted => Self::planted(groups, seed),
            LandscapeKind::Random => Self::random(groups, seed),
            LandscapeKind::Adversarial => Self::adversarial(groups, seed),
            LandscapeKind::Constant => Self::constant(groups),
        }
    }

    pub fn kind(&self) -> LandscapeKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// The assignment carrying the adversarial bonus.
    pub fn planted_trap(&self) -> Option<&LayerAssignment> {
        self.bonus.as_ref().map(|(a, _)| a)
    }

    fn score(&self, a: &LayerAssignment) -> f64 {
        let mut s = 0.0;
        for (u, &k) in self.utilities.iter().zip(a.groups()) {
            // Sum of the first k - 1 terms of a geometric series.
            let extra = (k - 1) as i32;
            s += u.base * (1.0 - u.ratio.powi(extra)) / (1.0 - u.ratio);
        }
        if let Some((t, b)) = &self.bonus {
            if t == a {
                s += b;
            }
        }
        s
    }

    /// Pseudo-accuracy in `[0, 1]`.
    pub fn accuracy(&self, a: &LayerAssignment) -> Result<f64> {
        if a.len() != self.groups {
            return Err(LasError::domain(format!(
                "assignment {a} has {} groups, landscape has {}",
                a.len(),
                self.groups
            )));
        }
        Ok(match self.kind {
            LandscapeKind::Planted | LandscapeKind::Adversarial => squash(self.score(a)),
            LandscapeKind::Random => {
                let h = Sha256::digest(format!("{}/{a}", self.seed).as_bytes());
                let u = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64;
                0.1 + 0.8 * u
            }
            LandscapeKind::Constant => 0.5,
        })
    }

    /// Brute-force best assignment at `depth`.
    pub fn argmax(&self, depth: usize) -> Result<LayerAssignment> {
        let scores = enumerate_assignments(depth, self.groups)?
            .into_iter()
            .map(|a| {
                let val_acc = self.accuracy(&a)?;
                Ok(CandidateScore { assignment: a, val_acc })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(select_top1(&scores)?.assignment.clone())
    }

    /// Brute-force best assignment at every depth from `n` to `hi`.
    pub fn argmax_chain(&self, hi: usize) -> Result<Vec<LayerAssignment>> {
        let mut out = vec![seed_assignment(self.groups)?];
        for d in self.groups + 1..=hi {
            out.push(self.argmax(d)?);
        }
        Ok(out)
    }
}

/// Evaluator that looks candidates up in a landscape instead of training.
pub struct SurrogateEvaluator<'a> {
    landscape: &'a SurrogateLandscape,
    lookups: usize,
}

impl SurrogateEvaluator<'_> {
    pub fn lookups(&self) -> usize {
        self.lookups
    }
}

pub fn surrogate_search_adapter(landscape: &SurrogateLandscape) -> SurrogateEvaluator<'_> {
    SurrogateEvaluator { landscape, lookups: 0 }
}

impl CandidateEvaluator for SurrogateEvaluator<'_> {
    fn evaluate_step(&mut self, candidates: &[LayerAssignment]) -> Result<StepOutcome> {
        let scores = candidates
            .iter()
            .map(|a| {
                self.lookups += 1;
                Ok(CandidateScore {
                    assignment: a.clone(),
                    val_acc: self.landscape.accuracy(a)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StepOutcome {
            scores,
            failures: Vec::new(),
            lr_used: 0.0,
            epochs: 0,
        })
    }

    fn timed(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignments::is_inherited_chain;

    #[test]
    fn planted_argmax_chain_is_inherited() {
        for seed in 0..20 {
            let l = SurrogateLandscape::planted(3, seed).unwrap();
            assert!(is_inherited_chain(&l.argmax_chain(15).unwrap()));
        }
    }

    #[test]
    fn adversarial_breaks_inheritance_once_at_n_plus_2() {
        for seed in 0..20 {
            let l = SurrogateLandscape::adversarial(3, seed).unwrap();
            let chain = l.argmax_chain(8).unwrap();
            assert!(!chain[2].is_successor_of(&chain[1]));
            assert_eq!(Some(&chain[2]), l.planted_trap());
        }
    }

    #[test]
    fn random_landscape_is_deterministic_and_bounded() {
        let l = SurrogateLandscape::random(3, 4).unwrap();
        let a: LayerAssignment = "2-3-1".parse().unwrap();
        let v = l.accuracy(&a).unwrap();
        assert_eq!(v, SurrogateLandscape::random(3, 4).unwrap().accuracy(&a).unwrap());
        assert!((0.0..=1.0).contains(&v));
        assert!(l.accuracy(&"1-1".parse().unwrap()).is_err());
    }
}
