use serde::{Deserialize, Serialize};

use super::FiniteMetricSpace;
use crate::error::{Error, Result};

/// A maximal ν-discrete subset: members are pairwise at distance ≥ ν and
/// every other point lies within distance < ν of some member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub spacing: f64,
    /// Members in selection order.
    pub members: Vec<usize>,
    /// Largest distance from any point to its nearest member.
    pub cover_radius: f64,
}

impl Net {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index (into `members`) of the member nearest to `x`; ties go to the
    /// earlier member.
    pub fn nearest_member(&self, space: &FiniteMetricSpace, x: usize) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (pos, &m) in self.members.iter().enumerate() {
            let d = space.dist(m, x);
            if d < best_d {
                best = pos;
                best_d = d;
            }
        }
        best
    }
}

/// Farthest-point-first net: start at `start`, then repeatedly add the point
/// farthest from the current members while that distance is ≥ ν. Ties go to
/// the lowest index.
pub fn greedy_net(space: &FiniteMetricSpace, nu: f64, start: usize) -> Result<Net> {
    if !(nu > 0.0) {
        return Err(Error::NonPositiveSpacing(nu));
    }
    let n = space.len();
    if start >= n {
        return Err(Error::IndexOutOfRange {
            index: start,
            len: n,
        });
    }
    let mut members = vec![start];
    let mut to_net: Vec<f64> = (0..n).map(|x| space.dist(start, x)).collect();
    loop {
        let (far, far_d) =
            to_net
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| {
                    if d > bd {
                        (i, d)
                    } else {
                        (bi, bd)
                    }
                });
        if far_d < nu {
            return Ok(Net {
                spacing: nu,
                members,
                cover_radius: far_d.max(0.0),
            });
        }
        members.push(far);
        for (x, slot) in to_net.iter_mut().enumerate() {
            let d = space.dist(far, x);
            if d < *slot {
                *slot = d;
            }
        }
    }
}

/// Complete farthest-point-first ordering of a space from `start`, with the
/// distance of each point to its predecessors at insertion time (infinite for
/// the first point). Radii are nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FarthestFirst {
    pub order: Vec<usize>,
    pub radii: Vec<f64>,
}

impl FarthestFirst {
    /// Size of the greedy ν-net, i.e. the prefix with radius ≥ ν.
    pub fn count_at(&self, nu: f64) -> usize {
        self.radii.partition_point(|&r| r >= nu)
    }
}

/// Farthest-first traversal of the whole space; ties go to the lowest index.
pub fn farthest_first(space: &FiniteMetricSpace, start: usize) -> FarthestFirst {
    let n = space.len();
    let mut order = vec![start];
    let mut radii = vec![f64::INFINITY];
    let mut to_set: Vec<f64> = (0..n).map(|x| space.dist(start, x)).collect();
    let mut taken = vec![false; n];
    taken[start] = true;
    for _ in 1..n {
        let (far, far_d) = to_set.iter().enumerate().filter(|(i, _)| !taken[*i]).fold(
            (usize::MAX, f64::NEG_INFINITY),
            |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) },
        );
        taken[far] = true;
        order.push(far);
        radii.push(far_d);
        for (x, slot) in to_set.iter_mut().enumerate() {
            let d = space.dist(far, x);
            if d < *slot {
                *slot = d;
            }
        }
    }
    FarthestFirst { order, radii }
}
