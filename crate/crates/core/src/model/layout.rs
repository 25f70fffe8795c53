use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal-strip branch structure of the part encoders.
///
/// Each entry of `branches` is a strip count. A branch with one strip yields a
/// single global vector; a branch with `n > 1` strips yields one global and
/// `n` local vectors. Parts are ordered branch-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartLayout {
    pub branches: Vec<usize>,
    pub per_part_dim: usize,
}

impl Default for PartLayout {
    fn default() -> Self {
        PartLayout {
            branches: vec![1, 2, 3],
            per_part_dim: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartKind {
    Global,
    Local(usize),
}

/// Position of one part vector inside the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartSlot {
    pub branch: usize,
    pub strips: usize,
    pub kind: PartKind,
}

impl PartLayout {
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() || self.branches.contains(&0) || self.per_part_dim == 0 {
            return Err(Error::Config(format!("invalid part layout {self:?}")));
        }
        Ok(())
    }

    pub fn parts_in_branch(strips: usize) -> usize {
        if strips > 1 {
            1 + strips
        } else {
            1
        }
    }

    /// K, the number of part vectors.
    pub fn num_parts(&self) -> usize {
        self.branches.iter().map(|&n| Self::parts_in_branch(n)).sum()
    }

    /// K·p, the length of the concatenated feature.
    pub fn total_dim(&self) -> usize {
        self.num_parts() * self.per_part_dim
    }

    pub fn slots(&self) -> Vec<PartSlot> {
        let mut out = Vec::with_capacity(self.num_parts());
        for (branch, &strips) in self.branches.iter().enumerate() {
            out.push(PartSlot {
                branch,
                strips,
                kind: PartKind::Global,
            });
            if strips > 1 {
                out.extend((0..strips).map(|i| PartSlot {
                    branch,
                    strips,
                    kind: PartKind::Local(i),
                }));
            }
        }
        out
    }

    /// Least common multiple of the strip counts.
    pub fn strip_granularity(&self) -> usize {
        fn gcd(a: usize, b: usize) -> usize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.branches
            .iter()
            .fold(1, |acc, &n| acc / gcd(acc, n) * n)
    }
}

/// How strips are cut when the map height is not a multiple of the strip count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StripPolicy {
    /// Equal, disjoint strips; indivisible heights are a configuration error.
    #[default]
    Exact,
    /// Adaptive-pooling windows `[floor(i·H/n), ceil((i+1)·H/n))`, which may overlap.
    Adaptive,
}

/// Row windows `(start, len)` of each strip.
pub fn strip_windows(height: usize, strips: usize, policy: StripPolicy) -> Result<Vec<(usize, usize)>> {
    if strips == 0 || height < strips {
        return Err(Error::Config(format!(
            "cannot cut {strips} strips from a map of height {height}"
        )));
    }
    match policy {
        StripPolicy::Exact => {
            if height % strips != 0 {
                return Err(Error::Config(format!(
                    "feature map height {height} is not divisible by {strips} strips"
                )));
            }
            let h = height / strips;
            Ok((0..strips).map(|i| (i * h, h)).collect())
        }
        StripPolicy::Adaptive => Ok((0..strips)
            .map(|i| {
                let start = i * height / strips;
                let end = ((i + 1) * height).div_ceil(strips);
                (start, end - start)
            })
            .collect()),
    }
}
