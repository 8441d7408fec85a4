use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FiniteMetricSpace;
use crate::error::{Error, Result};

/// A pair of cross-maps between `M` and `X` with their measured quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// `forward[x]` is the image in `X` of the point `x` of `M`.
    pub forward: Vec<usize>,
    /// `backward[a]` is the chosen lift in `M` of the point `a` of `X`.
    pub backward: Vec<usize>,
    /// Largest `| |xy|_M − |f x f y|_X |` over pairs, either direction.
    pub distortion: f64,
    /// Largest distance from a point of `X` to the forward image.
    pub forward_cover_defect: f64,
    /// Largest distance from a point of `M` to the backward image.
    pub backward_cover_defect: f64,
    /// Pair realizing the distortion.
    pub worst_pair: Option<WorstPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstPair {
    pub side: Side,
    pub i: usize,
    pub j: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub mu: f64,
    pub distortion: f64,
    pub forward_cover_defect: f64,
    pub backward_cover_defect: f64,
    pub worst_pair: Option<WorstPair>,
    pub is_approximation: bool,
}

fn worst_distortion<F>(n: usize, side: Side, f: F) -> Option<WorstPair>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<WorstPair> = None;
            for j in i + 1..n {
                let d = f(i, j);
                if d > 0.0 && best.is_none_or(|b| d > b.amount) {
                    best = Some(WorstPair {
                        side,
                        i,
                        j,
                        amount: d,
                    });
                }
            }
            best
        })
        .reduce(|| None, pick_worse)
}

fn pick_worse(a: Option<WorstPair>, b: Option<WorstPair>) -> Option<WorstPair> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.amount > x.amount { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn cover_defect(space: &FiniteMetricSpace, image: &[usize]) -> f64 {
    let mut marks = vec![false; space.len()];
    for &i in image {
        marks[i] = true;
    }
    let members: Vec<usize> = (0..space.len()).filter(|&i| marks[i]).collect();
    (0..space.len())
        .into_par_iter()
        .map(|x| space.dist_to_set(x, &members))
        .reduce(|| 0.0, f64::max)
}

impl Correspondence {
    /// Measures a pair of maps exhaustively over all pairs of both spaces.
    pub fn new(
        m: &FiniteMetricSpace,
        x: &FiniteMetricSpace,
        forward: Vec<usize>,
        backward: Vec<usize>,
    ) -> Result<Self> {
        if forward.len() != m.len() {
            return Err(Error::MapLength {
                what: "forward",
                expected: m.len(),
                found: forward.len(),
            });
        }
        if backward.len() != x.len() {
            return Err(Error::MapLength {
                what: "backward",
                expected: x.len(),
                found: backward.len(),
            });
        }
        if let Some(&bad) = forward.iter().find(|&&a| a >= x.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: x.len(),
            });
        }
        if let Some(&bad) = backward.iter().find(|&&a| a >= m.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: m.len(),
            });
        }
        let fw = worst_distortion(m.len(), Side::Forward, |i, j| {
            (m.dist(i, j) - x.dist(forward[i], forward[j])).abs()
        });
        let bw = worst_distortion(x.len(), Side::Backward, |a, b| {
            (x.dist(a, b) - m.dist(backward[a], backward[b])).abs()
        });
        let worst_pair = pick_worse(fw, bw);
        Ok(Correspondence {
            distortion: worst_pair.map_or(0.0, |w| w.amount),
            forward_cover_defect: cover_defect(x, &forward),
            backward_cover_defect: cover_defect(m, &backward),
            forward,
            backward,
            worst_pair,
        })
    }

    /// Identity correspondence of a space with itself.
    pub fn identity(space: &FiniteMetricSpace) -> Self {
        let id: Vec<usize> = (0..space.len()).collect();
        Correspondence {
            forward: id.clone(),
            backward: id,
            distortion: 0.0,
            forward_cover_defect: 0.0,
            backward_cover_defect: 0.0,
            worst_pair: None,
        }
    }

    /// `max(distortion, both cover defects)`; the correspondence is a
    /// μ-approximation for every μ above this value.
    pub fn mu_hat(&self) -> f64 {
        self.distortion
            .max(self.forward_cover_defect)
            .max(self.backward_cover_defect)
    }

    pub fn check(&self, mu: f64) -> CorrespondenceReport {
        CorrespondenceReport {
            mu,
            distortion: self.distortion,
            forward_cover_defect: self.forward_cover_defect,
            backward_cover_defect: self.backward_cover_defect,
            worst_pair: self.worst_pair,
            is_approximation: self.mu_hat() < mu,
        }
    }

    /// Chosen lift in `M` of the point `a` of `X`.
    pub fn lift(&self, a: usize) -> usize {
        self.backward[a]
    }

    pub fn project(&self, x: usize) -> usize {
        self.forward[x]
    }
}
