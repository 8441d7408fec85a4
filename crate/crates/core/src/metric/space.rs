use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default cap on the number of points a product space may have.
pub const DEFAULT_PRODUCT_CAP: usize = 10_000;

/// Immutable finite metric space stored as a condensed upper-triangular
/// distance table.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    n: usize,
    // Row-major strict upper triangle: (i, j) with i < j.
    upper: Vec<f64>,
    labels: Option<Vec<String>>,
    resolution: f64,
    diameter: f64,
}

#[inline]
fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl FiniteMetricSpace {
    /// Builds a space from a distance function evaluated on `i < j`.
    ///
    /// Only the upper triangle is queried, so symmetry holds by construction.
    pub fn from_fn<F>(n: usize, dist: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        let upper: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let dist = &dist;
                (i + 1..n).map(move |j| dist(i, j))
            })
            .collect();
        if let Some(pos) = upper.iter().position(|d| !d.is_finite() || *d < 0.0) {
            let (i, j) = Self::pair_of(n, pos);
            return Err(Error::InvalidDistance {
                i,
                j,
                value: upper[pos],
            });
        }
        Ok(Self::from_parts(n, upper, None))
    }

    /// Builds a space from a full row-major `n × n` table.
    ///
    /// The table must have a zero diagonal and be symmetric up to `sym_tol`;
    /// the upper triangle is kept. Use [`crate::metric::validate`] for the
    /// full metric-axiom check, including the triangle inequality.
    pub fn from_table(n: usize, table: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        if table.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                found: table.len(),
            });
        }
        let report = super::validate::check_shape(n, table, 0.0);
        if let Some(err) = report {
            return Err(err);
        }
        let mut upper = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            upper.extend_from_slice(&table[i * n + i + 1..(i + 1) * n]);
        }
        Ok(Self::from_parts(n, upper, None))
    }

    fn from_parts(n: usize, upper: Vec<f64>, labels: Option<Vec<String>>) -> Self {
        let mut space = FiniteMetricSpace {
            n,
            upper,
            labels,
            resolution: 0.0,
            diameter: 0.0,
        };
        space.diameter = space.upper.iter().copied().fold(0.0, f64::max);
        space.resolution = space.compute_resolution();
        space
    }

    fn compute_resolution(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                (0..self.n)
                    .filter(|&j| j != i)
                    .map(|j| self.dist(i, j))
                    .filter(|&d| d > 0.0)
                    .fold(f64::INFINITY, f64::min)
            })
            .filter(|d| d.is_finite())
            .reduce(|| 0.0, f64::max)
    }

    fn pair_of(n: usize, pos: usize) -> (usize, usize) {
        let mut i = 0;
        let mut start = 0;
        loop {
            let row = n - i - 1;
            if pos < start + row {
                return (i, i + 1 + pos - start);
            }
            start += row;
            i += 1;
        }
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.upper[condensed_index(self.n, j, i)],
        }
    }

    /// Distance from `i` to the nearest member of `set` (infinite if empty).
    pub fn dist_to_set(&self, i: usize, set: &[usize]) -> f64 {
        set.iter()
            .map(|&j| self.dist(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Sample mesh: the largest nearest-neighbour distance over all points.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::LabelCount {
                expected: self.n,
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Full row-major table.
    pub fn to_table(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = self.dist(i, j);
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.dist(i, j)).collect()
    }

    /// Points of the closed ball `B̄(center, radius)`, in index order.
    pub fn closed_ball(&self, center: usize, radius: f64) -> Vec<usize> {
        (0..self.n)
            .filter(|&x| self.dist(center, x) <= radius)
            .collect()
    }

    /// Points of the open ball `B(center, radius)`, in index order.
    pub fn open_ball(&self, center: usize, radius: f64) -> Vec<usize> {
        (0..self.n)
            .filter(|&x| self.dist(center, x) < radius)
            .collect()
    }

    /// Subspace on the given points (in the given order).
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        if let Some(&bad) = subset.iter().find(|&&x| x >= self.n) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.n,
            });
        }
        let m = subset.len();
        let mut upper = Vec::with_capacity(m * (m - 1) / 2);
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                upper.push(self.dist(i, j));
            }
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| subset.iter().map(|&i| l[i].clone()).collect());
        Ok(Self::from_parts(m, upper, labels))
    }

    /// All distances multiplied by `lambda`.
    pub fn scale(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NonPositiveScale(lambda));
        }
        let upper = self.upper.iter().map(|d| d * lambda).collect();
        Ok(Self::from_parts(self.n, upper, self.labels.clone()))
    }

    /// ℓ²-product metric; point `(i, j)` gets index `i * other.len() + j`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.product_with_cap(other, DEFAULT_PRODUCT_CAP)
    }

    pub fn product_with_cap(&self, other: &Self, cap: usize) -> Result<Self> {
        let (n1, n2) = (self.n, other.n);
        let total = n1.checked_mul(n2).unwrap_or(usize::MAX);
        if total > cap {
            return Err(Error::ProductTooLarge { size: total, cap });
        }
        let mut space = Self::from_fn(total, |p, q| {
            let (i1, j1) = (p / n2, p % n2);
            let (i2, j2) = (q / n2, q % n2);
            self.dist(i1, i2).hypot(other.dist(j1, j2))
        })?;
        if let (Some(l1), Some(l2)) = (&self.labels, &other.labels) {
            let labels = (0..total)
                .map(|p| format!("({},{})", l1[p / n2], l2[p % n2]))
                .collect();
            space.labels = Some(labels);
        }
        Ok(space)
    }
}
