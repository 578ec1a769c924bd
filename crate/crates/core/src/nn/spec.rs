use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignments::LayerAssignment;
use crate::error::{LasError, Result};

/// Cell template stacked inside every group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// 3x3 conv + BN + ReLU; each group ends with a 2x2 max-pool.
    Plain,
    /// Two 3x3 convs with an identity shortcut; groups after the first
    /// downsample with a stride-2 transition cell.
    Residual,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Plain => "plain",
            CellKind::Residual => "residual",
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = LasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(CellKind::Plain),
            "residual" => Ok(CellKind::Residual),
            other => Err(LasError::format(format!("unknown network family {other:?}"))),
        }
    }
}

/// The universe of networks a search ranges over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceSpec {
    /// Number of resolution groups `n`.
    pub groups: usize,
    /// Output channels of each group.
    pub channel_plan: Vec<usize>,
    /// `(channels, height, width)` of one input sample.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub cell_kind: CellKind,
    /// Widths of the fully connected head; the last entry is `num_classes`.
    pub classifier_plan: Vec<usize>,
    /// Maximum layers per group `c_i`.
    pub group_capacity: Vec<usize>,
    /// Target depth `m_t` of the search.
    pub target_depth: usize,
    /// Allow channel plans that do not double from group to group.
    #[serde(default)]
    pub free_channel_plan: bool,
}

impl SearchSpaceSpec {
    /// Plain family with a hidden FC layer of width 64 and capacity `m_t - n + 1`.
    pub fn plain(
        channel_plan: Vec<usize>,
        input_shape: [usize; 3],
        num_classes: usize,
        target_depth: usize,
    ) -> Self {
        let n = channel_plan.len();
        SearchSpaceSpec {
            groups: n,
            channel_plan,
            input_shape,
            num_classes,
            cell_kind: CellKind::Plain,
            classifier_plan: vec![64, num_classes],
            group_capacity: vec![default_capacity(target_depth, n); n],
            target_depth,
            free_channel_plan: false,
        }
    }

    /// Residual family: stem conv, basic blocks, global average pool, one FC layer.
    pub fn residual(
        channel_plan: Vec<usize>,
        input_shape: [usize; 3],
        num_classes: usize,
        target_depth: usize,
    ) -> Self {
        let n = channel_plan.len();
        SearchSpaceSpec {
            groups: n,
            channel_plan,
            input_shape,
            num_classes,
            cell_kind: CellKind::Residual,
            classifier_plan: vec![num_classes],
            group_capacity: vec![default_capacity(target_depth, n); n],
            target_depth,
            free_channel_plan: false,
        }
    }

    pub fn with_kind(&self, kind: CellKind) -> Self {
        let mut s = match kind {
            CellKind::Plain => SearchSpaceSpec::plain(
                self.channel_plan.clone(),
                self.input_shape,
                self.num_classes,
                self.target_depth,
            ),
            CellKind::Residual => SearchSpaceSpec::residual(
                self.channel_plan.clone(),
                self.input_shape,
                self.num_classes,
                self.target_depth,
            ),
        };
        if kind == self.cell_kind {
            s.classifier_plan = self.classifier_plan.clone();
        }
        s.group_capacity = self.group_capacity.clone();
        s.free_channel_plan = self.free_channel_plan;
        s
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.groups;
        let bad = |msg: String| Err(LasError::Config(msg));
        if n == 0 {
            return bad("search space needs at least one group".into());
        }
        if self.channel_plan.len() != n || self.group_capacity.len() != n {
            return bad(format!(
                "channel_plan ({}) and group_capacity ({}) must both have {n} entries",
                self.channel_plan.len(),
                self.group_capacity.len()
            ));
        }
        if self.channel_plan.contains(&0) || self.input_shape.contains(&0) {
            return bad("channel counts and input dimensions must be positive".into());
        }
        if !self.free_channel_plan
            && self.channel_plan.windows(2).any(|w| w[1] != 2 * w[0])
        {
            return bad(format!(
                "channel plan {:?} does not double between groups",
                self.channel_plan
            ));
        }
        if self.group_capacity.contains(&0) {
            return bad("every group capacity must be >= 1".into());
        }
        if self.num_classes < 2 {
            return bad("need at least two classes".into());
        }
        if self.classifier_plan.last() != Some(&self.num_classes) || self.classifier_plan.contains(&0) {
            return bad(format!(
                "classifier plan {:?} must be positive and end with num_classes = {}",
                self.classifier_plan, self.num_classes
            ));
        }
        if self.target_depth < n {
            return bad(format!("target depth {} < group count {n}", self.target_depth));
        }
        let downsamples = match self.cell_kind {
            CellKind::Plain => n,
            CellKind::Residual => n - 1,
        };
        let factor = 1usize << downsamples;
        let [_, h, w] = self.input_shape;
        if h % factor != 0 || w % factor != 0 {
            return bad(format!(
                "input {h}x{w} is not divisible by {factor} ({downsamples} halvings)"
            ));
        }
        Ok(())
    }

    /// Depth `m_s` of the full-capacity sub-network.
    pub fn supernet_depth(&self) -> usize {
        self.group_capacity.iter().sum()
    }

    /// The full-capacity assignment `[c_1, .., c_n]`.
    pub fn capacity_assignment(&self) -> LayerAssignment {
        LayerAssignment::new(self.group_capacity.clone()).expect("capacities are validated >= 1")
    }

    pub fn check_assignment(&self, a: &LayerAssignment) -> Result<()> {
        if a.len() != self.groups {
            return Err(LasError::domain(format!(
                "assignment {a} has {} groups, search space has {}",
                a.len(),
                self.groups
            )));
        }
        if !a.fits(&self.group_capacity) {
            return Err(LasError::domain(format!(
                "assignment {a} exceeds group capacity {:?}",
                self.group_capacity
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("spec serialises");
        Sha256::digest(&bytes).into()
    }
}

/// Largest group size reachable along any inherited chain ending at depth `m_t`.
pub fn default_capacity(target_depth: usize, groups: usize) -> usize {
    target_depth.saturating_sub(groups) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_follows_target_depth() {
        let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
        assert_eq!(spec.group_capacity, vec![6, 6, 6]);
        assert_eq!(spec.supernet_depth(), 18);
        spec.validate().unwrap();
    }

    #[test]
    fn rejects_non_doubling_plan() {
        let mut spec = SearchSpaceSpec::plain(vec![8, 12, 32], [3, 32, 32], 8, 8);
        assert!(spec.validate().is_err());
        spec.free_channel_plan = true;
        spec.validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_input() {
        let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 12, 12], 8, 8);
        assert!(spec.validate().is_err());
        let spec = SearchSpaceSpec::residual(vec![8, 16, 32], [3, 12, 12], 8, 8);
        spec.validate().unwrap();
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
        let mut v = serde_json::to_value(&spec).unwrap();
        v["chanel_plan"] = serde_json::json!([1]);
        assert!(serde_json::from_value::<SearchSpaceSpec>(v).is_err());
    }
}
