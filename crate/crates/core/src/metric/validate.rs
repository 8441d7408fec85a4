use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FiniteMetricSpace;
use crate::error::Error;

/// Worst violation of `d(i,j) ≤ d(i,k) + d(k,j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleDefect {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub tol_tri: f64,
    /// Pairs `(i, j)` with `d(i,j) ≠ d(j,i)`.
    pub symmetry_violations: Vec<(usize, usize)>,
    /// Indices with a nonzero diagonal entry.
    pub diagonal_violations: Vec<usize>,
    /// Distinct indices at distance zero (candidates for deduplication).
    pub coincident_pairs: Vec<(usize, usize)>,
    pub worst_triangle: Option<TriangleDefect>,
    pub accepted: bool,
}

impl ValidationReport {
    pub fn worst_defect(&self) -> f64 {
        self.worst_triangle.map_or(0.0, |t| t.amount)
    }
}

/// Cheap structural checks on a full table; `None` when the table is usable.
pub(crate) fn check_shape(n: usize, table: &[f64], sym_tol: f64) -> Option<Error> {
    for i in 0..n {
        let d = table[i * n + i];
        if d != 0.0 {
            return Some(Error::NonzeroDiagonal { index: i, value: d });
        }
        for j in i + 1..n {
            let (a, b) = (table[i * n + j], table[j * n + i]);
            if !a.is_finite() || a < 0.0 {
                return Some(Error::InvalidDistance { i, j, value: a });
            }
            if (a - b).abs() > sym_tol {
                return Some(Error::Asymmetric {
                    i,
                    j,
                    forward: a,
                    backward: b,
                });
            }
        }
    }
    None
}

/// Full metric-axiom check of a raw row-major table.
pub fn validate_table(n: usize, table: &[f64], tol_tri: f64) -> ValidationReport {
    let mut symmetry_violations = Vec::new();
    let mut diagonal_violations = Vec::new();
    for i in 0..n {
        if table[i * n + i] != 0.0 {
            diagonal_violations.push(i);
        }
        for j in i + 1..n {
            if table[i * n + j] != table[j * n + i] {
                symmetry_violations.push((i, j));
            }
        }
    }
    let d = |i: usize, j: usize| table[i * n + j];
    let (coincident_pairs, worst_triangle) = scan(n, &d);
    let accepted = symmetry_violations.is_empty()
        && diagonal_violations.is_empty()
        && worst_triangle.is_none_or(|t| t.amount <= tol_tri)
        && (0..n * n).all(|p| table[p].is_finite() && table[p] >= 0.0);
    ValidationReport {
        n,
        tol_tri,
        symmetry_violations,
        diagonal_violations,
        coincident_pairs,
        worst_triangle,
        accepted,
    }
}

/// Metric-axiom check of a constructed space (symmetry and diagonal hold by
/// construction, so only the triangle inequality can fail).
pub fn validate(space: &FiniteMetricSpace, tol_tri: f64) -> ValidationReport {
    let n = space.len();
    let d = |i: usize, j: usize| space.dist(i, j);
    let (coincident_pairs, worst_triangle) = scan(n, &d);
    let accepted = worst_triangle.is_none_or(|t| t.amount <= tol_tri);
    ValidationReport {
        n,
        tol_tri,
        symmetry_violations: Vec::new(),
        diagonal_violations: Vec::new(),
        coincident_pairs,
        worst_triangle,
        accepted,
    }
}

/// Default triangle tolerance: `1e-9 · diameter`.
pub fn default_tol_tri(space: &FiniteMetricSpace) -> f64 {
    1e-9 * space.diameter().max(f64::MIN_POSITIVE)
}

fn scan<D>(n: usize, d: &D) -> (Vec<(usize, usize)>, Option<TriangleDefect>)
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    let coincident: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| d(i, j) == 0.0)
        .collect();
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<TriangleDefect> = None;
            for j in i + 1..n {
                let dij = d(i, j);
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let excess = dij - (d(i, k) + d(k, j));
                    if excess > 0.0 && best.is_none_or(|b| excess > b.amount) {
                        best = Some(TriangleDefect {
                            i,
                            j,
                            k,
                            amount: excess,
                        });
                    }
                }
            }
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(if y.amount > x.amount { y } else { x }),
                (x, None) => x,
                (None, y) => y,
            },
        );
    (coincident, worst)
}
