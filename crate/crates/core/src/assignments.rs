//! Layer assignments: how many layers each resolution group receives.
//!
//! An assignment `[a_1, .., a_n]` with every `a_i >= 1` describes a network of
//! depth `sum(a_i)` split into `n` groups. This module counts and enumerates
//! them and generates the one-hot increments used by inherited sampling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LasError, Result};

/// Largest depth for which counts are computed exactly.
pub const MAX_DEPTH: usize = 64;

/// Per-group layer counts. Immutable once constructed; every entry is >= 1.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerAssignment(Vec<usize>);

impl LayerAssignment {
    pub fn new(groups: Vec<usize>) -> Result<Self> {
        if groups.is_empty() {
            return Err(LasError::domain("assignment needs at least one group"));
        }
        if let Some(pos) = groups.iter().position(|&a| a == 0) {
            return Err(LasError::domain(format!(
                "group {} has zero layers; every group needs at least one",
                pos + 1
            )));
        }
        Ok(LayerAssignment(groups))
    }

    pub fn groups(&self) -> &[usize] {
        &self.0
    }

    /// Number of groups `n`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of layers `m`.
    pub fn depth(&self) -> usize {
        self.0.iter().sum()
    }

    /// Copy of `self` with one extra layer in `group`.
    pub fn incremented(&self, group: usize) -> LayerAssignment {
        let mut g = self.0.clone();
        g[group] += 1;
        LayerAssignment(g)
    }

    /// True when `self` equals `prev` plus a single one-hot increment.
    pub fn is_successor_of(&self, prev: &LayerAssignment) -> bool {
        if self.len() != prev.len() {
            return false;
        }
        let mut bumped = 0;
        for (&a, &b) in self.0.iter().zip(prev.0.iter()) {
            if a == b + 1 {
                bumped += 1;
            } else if a != b {
                return false;
            }
        }
        bumped == 1
    }

    /// Whether every group fits within the given per-group capacity.
    pub fn fits(&self, capacity: &[usize]) -> bool {
        self.len() == capacity.len() && self.0.iter().zip(capacity).all(|(a, c)| a <= c)
    }
}

impl fmt::Display for LayerAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for LayerAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

impl FromStr for LayerAssignment {
    type Err = LasError;

    fn from_str(s: &str) -> Result<Self> {
        let groups = s
            .trim()
            .split('-')
            .map(|part| {
                part.parse::<usize>()
                    .map_err(|_| LasError::format(format!("bad layer assignment {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LayerAssignment::new(groups)
    }
}

impl Serialize for LayerAssignment {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerAssignment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Assignments of strictly increasing depth, each a one-hot increment of the
/// previous one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentChain(Vec<LayerAssignment>);

impl AssignmentChain {
    pub fn new(entries: Vec<LayerAssignment>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LasError::domain("empty assignment chain"));
        }
        if !is_inherited_chain(&entries) {
            return Err(LasError::domain(
                "chain entries are not successive one-hot increments",
            ));
        }
        Ok(AssignmentChain(entries))
    }

    pub fn entries(&self) -> &[LayerAssignment] {
        &self.0
    }

    pub fn last(&self) -> &LayerAssignment {
        self.0.last().expect("chain is non-empty")
    }

    pub fn at_depth(&self, depth: usize) -> Option<&LayerAssignment> {
        self.0.iter().find(|a| a.depth() == depth)
    }

    /// Append a successor of the current last entry.
    pub fn push(&mut self, next: LayerAssignment) -> Result<()> {
        if !next.is_successor_of(self.last()) {
            return Err(LasError::domain(format!(
                "{next} is not a successor of {}",
                self.last()
            )));
        }
        self.0.push(next);
        Ok(())
    }
}

impl fmt::Display for AssignmentChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Binomial coefficient `C(n, k)` from Pascal's rule, exact for `n <= 64`.
fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut row = vec![0u64; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] += row[j - 1];
        }
    }
    row[k]
}

fn check_depth(m: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(LasError::domain("group count must be >= 1"));
    }
    if m < n {
        return Err(LasError::domain(format!(
            "no valid assignment: depth {m} < group count {n}"
        )));
    }
    if m > MAX_DEPTH {
        return Err(LasError::domain(format!(
            "depth {m} exceeds the exact-count limit {MAX_DEPTH}"
        )));
    }
    Ok(())
}

/// Number of assignments of depth `m` into `n` groups: `(m-1)! / ((n-1)! (m-n)!)`.
pub fn count_assignments(m: usize, n: usize) -> Result<u64> {
    check_depth(m, n)?;
    Ok(binomial(m - 1, n - 1))
}

/// Number of assignments over every depth in `m_lo..=m_hi`.
pub fn count_range(n: usize, m_lo: usize, m_hi: usize) -> Result<u64> {
    check_depth(m_lo, n)?;
    if m_hi < m_lo {
        return Err(LasError::domain(format!(
            "empty depth range {m_lo}..{m_hi}"
        )));
    }
    check_depth(m_hi, n)?;
    (m_lo..=m_hi).try_fold(0u64, |acc, m| Ok(acc + count_assignments(m, n)?))
}

/// All assignments of depth `m` into `n` groups, lexicographically ascending.
pub fn enumerate_assignments(m: usize, n: usize) -> Result<Vec<LayerAssignment>> {
    check_depth(m, n)?;
    let mut out = Vec::with_capacity(count_assignments(m, n)? as usize);
    let mut prefix = Vec::with_capacity(n);
    fill_compositions(m, n, &mut prefix, &mut out);
    Ok(out)
}

fn fill_compositions(
    remaining: usize,
    parts: usize,
    prefix: &mut Vec<usize>,
    out: &mut Vec<LayerAssignment>,
) {
    if parts == 1 {
        prefix.push(remaining);
        out.push(LayerAssignment(prefix.clone()));
        prefix.pop();
        return;
    }
    // Leave at least one layer for each later group.
    for first in 1..=remaining - (parts - 1) {
        prefix.push(first);
        fill_compositions(remaining - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// The `n` one-hot increments of `a`, ordered by group index.
pub fn successors(a: &LayerAssignment) -> Vec<LayerAssignment> {
    (0..a.len()).map(|i| a.incremented(i)).collect()
}

/// The unique depth-`n` assignment `[1; n]`.
pub fn seed_assignment(n: usize) -> Result<LayerAssignment> {
    if n == 0 {
        return Err(LasError::domain("group count must be >= 1"));
    }
    Ok(LayerAssignment(vec![1; n]))
}

/// True iff each consecutive pair differs by a single +1 in one group.
pub fn is_inherited_chain(chain: &[LayerAssignment]) -> bool {
    chain.windows(2).all(|w| w[1].is_successor_of(&w[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn la(s: &str) -> LayerAssignment {
        s.parse().unwrap()
    }

    #[test]
    fn counts_match_small_cases() {
        assert_eq!(count_assignments(4, 4).unwrap(), 1);
        assert_eq!(count_assignments(11, 3).unwrap(), 45);
        assert_eq!(count_assignments(5, 3).unwrap(), 6);
        assert!(count_assignments(2, 3).is_err());
        assert!(count_assignments(65, 3).is_err());
        assert_eq!(count_assignments(64, 32).unwrap(), binomial(63, 31));
    }

    #[test]
    fn range_counts() {
        assert_eq!(count_range(3, 4, 15).unwrap(), 454);
        assert_eq!(count_range(3, 3, 3).unwrap(), 1);
        assert_eq!(count_range(2, 2, 4).unwrap(), 6);
        assert!(count_range(3, 2, 8).is_err());
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let four = enumerate_assignments(4, 3).unwrap();
        assert_eq!(four, vec![la("1-1-2"), la("1-2-1"), la("2-1-1")]);

        let five = enumerate_assignments(5, 3).unwrap();
        assert_eq!(five.len(), 6);
        assert_eq!(five.first().unwrap(), &la("1-1-3"));
        assert_eq!(five.last().unwrap(), &la("3-1-1"));

        let eleven = enumerate_assignments(11, 3).unwrap();
        assert_eq!(eleven.len(), 45);
        assert!(eleven.contains(&la("3-2-6")));
        assert!(eleven.contains(&la("2-4-5")));
        assert!(eleven.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn successors_bump_each_group() {
        assert_eq!(
            successors(&la("1-1-1")),
            vec![la("2-1-1"), la("1-2-1"), la("1-1-2")]
        );
        assert!(successors(&la("2-1-2")).contains(&la("3-1-2")));
        assert!(successors(&la("2-5-7")).contains(&la("2-5-8")));
    }

    #[test]
    fn seed_is_all_ones() {
        assert_eq!(seed_assignment(3).unwrap(), la("1-1-1"));
        assert_eq!(seed_assignment(4).unwrap(), la("1-1-1-1"));
        assert_eq!(seed_assignment(1).unwrap(), la("1"));
        assert!(seed_assignment(0).is_err());
    }

    #[test]
    fn table_chains() {
        let searched: Vec<_> = [
            "2-1-1", "2-1-2", "3-1-2", "3-2-2", "3-2-3", "4-2-3", "5-2-3", "5-3-3", "6-3-3",
            "7-3-3", "7-4-3", "8-4-3",
        ]
        .iter()
        .map(|s| la(s))
        .collect();
        assert!(is_inherited_chain(&searched));

        let best: Vec<_> = ["3-2-2", "4-2-2", "3-4-2", "5-3-2"]
            .iter()
            .map(|s| la(s))
            .collect();
        assert!(!is_inherited_chain(&best));
        assert!(is_inherited_chain(&[la("1-2-3")]));
    }

    #[test]
    fn construction_rejects_zero_groups() {
        assert!(LayerAssignment::new(vec![1, 0, 2]).is_err());
        assert!(LayerAssignment::new(vec![]).is_err());
        assert!("1--2".parse::<LayerAssignment>().is_err());
        assert!("3-x".parse::<LayerAssignment>().is_err());
        assert_eq!(la("3-4-6-3").to_string(), "3-4-6-3");
    }

    #[test]
    fn chain_push_enforces_increment() {
        let mut chain = AssignmentChain::new(vec![la("1-1-1")]).unwrap();
        chain.push(la("1-2-1")).unwrap();
        assert!(chain.push(la("1-2-3")).is_err());
        assert_eq!(chain.at_depth(4), Some(&la("1-2-1")));
        assert!(AssignmentChain::new(vec![la("1-1-1"), la("1-1-1")]).is_err());
    }
}
