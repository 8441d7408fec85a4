use serde::{Deserialize, Serialize};

use super::{farthest_first, greedy_net, FiniteMetricSpace};
use crate::error::{Error, Result};

/// Largest space on which the exact packing search is allowed.
pub const EXACT_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackingMode {
    Greedy,
    Exact,
}

/// Packing count at one scale.
///
/// In greedy mode `count` is the size of a maximal ν-discrete set, which
/// satisfies `β_{2ν} ≤ count ≤ β_ν`; in exact mode `count = β_ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingCount {
    pub nu: f64,
    pub count: usize,
    pub exact: bool,
}

/// Number of ν-discrete points (pairwise distance ≥ ν) in `space`.
pub fn packing_count(
    space: &FiniteMetricSpace,
    nu: f64,
    mode: PackingMode,
) -> Result<PackingCount> {
    packing_count_from(space, nu, mode, 0)
}

fn packing_count_from(
    space: &FiniteMetricSpace,
    nu: f64,
    mode: PackingMode,
    start: usize,
) -> Result<PackingCount> {
    match mode {
        PackingMode::Greedy => {
            let net = greedy_net(space, nu, start)?;
            Ok(PackingCount {
                nu,
                count: net.len(),
                exact: false,
            })
        }
        PackingMode::Exact => {
            if !(nu > 0.0) {
                return Err(Error::NonPositiveSpacing(nu));
            }
            Ok(PackingCount {
                nu,
                count: exact_packing(space, nu)?,
                exact: true,
            })
        }
    }
}

/// β_ν by maximum independent set on the graph joining pairs closer than ν.
pub fn exact_packing(space: &FiniteMetricSpace, nu: f64) -> Result<usize> {
    let n = space.len();
    if n > EXACT_CAP {
        return Err(Error::ExactTooLarge { n, cap: EXACT_CAP });
    }
    let mut conflict = vec![0u32; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && space.dist(i, j) < nu {
                conflict[i] |= 1 << j;
            }
        }
    }
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut best = 0;
    max_independent(&conflict, all, 0, &mut best);
    Ok(best as usize)
}

/// Branch and bound on the lowest candidate vertex: either take it (and drop
/// its neighbours) or drop it.
fn max_independent(conflict: &[u32], candidates: u32, size: u32, best: &mut u32) {
    if candidates == 0 {
        *best = (*best).max(size);
        return;
    }
    if size + candidates.count_ones() <= *best {
        return;
    }
    let v = candidates.trailing_zeros() as usize;
    let rest = candidates & !(1 << v);
    max_independent(conflict, rest & !conflict[v], size + 1, best);
    if conflict[v] & rest != 0 {
        max_independent(conflict, rest, size, best);
    }
}

/// Packing counts over a scale grid together with
/// `v_m = max over the grid of ν^m · β̂_ν` and a packing-slope dimension estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingProfile {
    pub grid: Vec<f64>,
    pub counts: Vec<usize>,
    pub exact: Vec<bool>,
    pub m: f64,
    pub v_m: f64,
    /// Scale at which `v_m` is attained.
    pub v_m_scale: f64,
    /// Least-squares slope of `log β̂` against `log(1/ν)` inside `window`;
    /// `None` when fewer than two grid points fall in the window.
    pub dimension_estimate: Option<f64>,
    pub window: (f64, f64),
    pub seed_point: usize,
}

/// `count` log-spaced scales from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || count == 0 {
        return Err(Error::DegenerateGrid { lo, hi, count });
    }
    if count == 1 || hi == lo {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// Default grid: 24 log-spaced values between twice the mesh and the diameter.
pub fn default_grid(space: &FiniteMetricSpace) -> Result<Vec<f64>> {
    log_grid(2.0 * space.resolution(), space.diameter(), 24)
}

/// Default slope window: twice the mesh up to half the diameter.
pub fn default_window(space: &FiniteMetricSpace) -> (f64, f64) {
    (2.0 * space.resolution(), 0.5 * space.diameter())
}

/// Greedy packing profile seeded at point 0.
pub fn packing_profile(
    space: &FiniteMetricSpace,
    m: f64,
    grid: &[f64],
    window: Option<(f64, f64)>,
) -> Result<PackingProfile> {
    if grid.is_empty() || grid.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateGrid {
            lo: grid.first().copied().unwrap_or(0.0),
            hi: grid.last().copied().unwrap_or(0.0),
            count: grid.len(),
        });
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::UnsortedGrid);
    }
    let seed_point = 0;
    // One farthest-first traversal serves every scale: the greedy net at ν is
    // the prefix whose insertion radii are ≥ ν, and the radii never increase.
    let traversal = farthest_first(space, seed_point);
    let counts: Vec<usize> = grid.iter().map(|&nu| traversal.count_at(nu)).collect();
    let (v_m, v_m_scale) = grid
        .iter()
        .zip(&counts)
        .map(|(&nu, &c)| (nu.powf(m) * c as f64, nu))
        .fold((f64::NEG_INFINITY, grid[0]), |acc, x| {
            if x.0 > acc.0 {
                x
            } else {
                acc
            }
        });
    let window = window.unwrap_or_else(|| default_window(space));
    let dimension_estimate = packing_slope(grid, &counts, window);
    Ok(PackingProfile {
        grid: grid.to_vec(),
        exact: vec![false; counts.len()],
        counts,
        m,
        v_m,
        v_m_scale,
        dimension_estimate,
        window,
        seed_point,
    })
}

/// Least-squares slope of `log count` against `log(1/ν)` over grid points in
/// the closed window.
pub fn packing_slope(grid: &[f64], counts: &[usize], window: (f64, f64)) -> Option<f64> {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(counts)
        .filter(|(&nu, &c)| nu >= window.0 && nu <= window.1 && c > 0)
        .map(|(&nu, &c)| (-nu.ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
