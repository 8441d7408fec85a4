//! Synthetic sample spaces with known geometry.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{FiniteMetricSpace, DEFAULT_PRODUCT_CAP};

/// Description of a generated space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    /// `n` evenly spaced points on the round circle of radius `radius`, arc metric.
    Circle { n: usize, radius: f64 },
    /// Points on the round 2-sphere of radius `radius`, great-circle metric.
    /// Fibonacci lattice unless a seed asks for uniform random samples.
    Sphere2 {
        n: usize,
        radius: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `n1 × n2` grid on the flat torus `R² / (Z b1 + Z b2)`.
    FlatTorus {
        n1: usize,
        n2: usize,
        basis: [[f64; 2]; 2],
    },
    /// ℓ²-product; point `(i, j)` has index `i · |fiber| + j`.
    Product {
        base: Box<SpaceSpec>,
        fiber: Box<SpaceSpec>,
    },
    /// Uniform points in the cube `[0, extent]^dim`, Euclidean metric.
    EuclideanCloud {
        n: usize,
        dim: usize,
        extent: f64,
        seed: u64,
    },
    /// Uniform points in `[0, extent]^dim` with shortest-path distances in
    /// the symmetrized k-nearest-neighbour graph.
    GraphGeodesicCloud {
        n: usize,
        dim: usize,
        extent: f64,
        neighbors: usize,
        seed: u64,
    },
}

/// A generated space with its product structure, when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub space: FiniteMetricSpace,
    /// For products: base-factor index of every point.
    pub base_index: Option<Vec<usize>>,
    /// For products: fiber-factor index of every point.
    pub fiber_index: Option<Vec<usize>>,
}

impl Generated {
    fn plain(space: FiniteMetricSpace) -> Self {
        Generated {
            space,
            base_index: None,
            fiber_index: None,
        }
    }
}

fn need(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    need(v > 0.0 && v.is_finite(), || {
        format!("{name} must be positive and finite, got {v}")
    })
}

fn count(name: &str, n: usize) -> Result<()> {
    need(n >= 2, || format!("{name} must be at least 2, got {n}"))
}

impl SpaceSpec {
    pub fn generate(&self) -> Result<Generated> {
        match self {
            SpaceSpec::Circle { n, radius } => circle(*n, *radius).map(Generated::plain),
            SpaceSpec::Sphere2 { n, radius, seed } => {
                sphere2(*n, *radius, *seed).map(Generated::plain)
            }
            SpaceSpec::FlatTorus { n1, n2, basis } => {
                flat_torus(*n1, *n2, *basis).map(Generated::plain)
            }
            SpaceSpec::Product { base, fiber } => {
                let b = base.generate()?.space;
                let f = fiber.generate()?.space;
                product(&b, &f)
            }
            SpaceSpec::EuclideanCloud {
                n,
                dim,
                extent,
                seed,
            } => {
                count("n", *n)?;
                positive("extent", *extent)?;
                need(*dim >= 1, || "dim must be at least 1".into())?;
                euclidean_points(&uniform_cube(*n, *dim, *extent, *seed)).map(Generated::plain)
            }
            SpaceSpec::GraphGeodesicCloud {
                n,
                dim,
                extent,
                neighbors,
                seed,
            } => {
                count("n", *n)?;
                positive("extent", *extent)?;
                need(*dim >= 1, || "dim must be at least 1".into())?;
                graph_geodesic_cloud(&uniform_cube(*n, *dim, *extent, *seed), *neighbors)
                    .map(Generated::plain)
            }
        }
    }

    /// The same space sampled twice as densely along its base. Products
    /// double the base factor only; tori double both grid directions.
    pub fn doubled(&self) -> SpaceSpec {
        let mut s = self.clone();
        match &mut s {
            SpaceSpec::Circle { n, .. }
            | SpaceSpec::Sphere2 { n, .. }
            | SpaceSpec::EuclideanCloud { n, .. }
            | SpaceSpec::GraphGeodesicCloud { n, .. } => *n *= 2,
            SpaceSpec::FlatTorus { n1, n2, .. } => {
                *n1 *= 2;
                *n2 *= 2;
            }
            SpaceSpec::Product { base, .. } => *base = Box::new(base.doubled()),
        }
        s
    }
}

pub fn circle(n: usize, radius: f64) -> Result<FiniteMetricSpace> {
    count("n", n)?;
    positive("radius", radius)?;
    let step = 2.0 * PI / n as f64;
    FiniteMetricSpace::from_fn(n, |i, j| {
        let k = j - i;
        k.min(n - k) as f64 * step * radius
    })
}

fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

fn random_sphere(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..=1.0);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let rho = (1.0 - z * z).max(0.0).sqrt();
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

pub fn sphere2(n: usize, radius: f64, seed: Option<u64>) -> Result<FiniteMetricSpace> {
    count("n", n)?;
    positive("radius", radius)?;
    let pts = match seed {
        Some(s) => random_sphere(n, s),
        None => fibonacci_sphere(n),
    };
    FiniteMetricSpace::from_fn(n, |i, j| {
        let (u, v) = (pts[i], pts[j]);
        let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        radius * sin.atan2(dot)
    })
}

pub fn flat_torus(n1: usize, n2: usize, basis: [[f64; 2]; 2]) -> Result<FiniteMetricSpace> {
    count("n1", n1)?;
    count("n2", n2)?;
    let [b1, b2] = basis;
    let det = b1[0] * b2[1] - b1[1] * b2[0];
    need(det.abs() > 0.0 && det.is_finite(), || {
        "lattice basis is degenerate".into()
    })?;
    let n = n1 * n2;
    FiniteMetricSpace::from_fn(n, |p, q| {
        // difference in lattice coordinates, reduced to [-1/2, 1/2]
        let mut s = (p / n2) as f64 / n1 as f64 - (q / n2) as f64 / n1 as f64;
        let mut t = (p % n2) as f64 / n2 as f64 - (q % n2) as f64 / n2 as f64;
        s -= s.round();
        t -= t.round();
        let mut best = f64::INFINITY;
        for k1 in -1..=1 {
            for k2 in -1..=1 {
                let (a, b) = (s + k1 as f64, t + k2 as f64);
                let x = a * b1[0] + b * b2[0];
                let y = a * b1[1] + b * b2[1];
                best = best.min(x.hypot(y));
            }
        }
        best
    })
}

/// Product of two spaces with the factor index of every point.
pub fn product(base: &FiniteMetricSpace, fiber: &FiniteMetricSpace) -> Result<Generated> {
    product_with_cap(base, fiber, DEFAULT_PRODUCT_CAP)
}

pub fn product_with_cap(
    base: &FiniteMetricSpace,
    fiber: &FiniteMetricSpace,
    cap: usize,
) -> Result<Generated> {
    let space = base.product_with_cap(fiber, cap)?;
    let nf = fiber.len();
    Ok(Generated {
        base_index: Some((0..space.len()).map(|p| p / nf).collect()),
        fiber_index: Some((0..space.len()).map(|p| p % nf).collect()),
        space,
    })
}

fn uniform_cube(n: usize, dim: usize, extent: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..extent)).collect())
        .collect()
}

fn euclid(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distances between the given coordinate vectors.
pub fn euclidean_points(points: &[Vec<f64>]) -> Result<FiniteMetricSpace> {
    if let Some(d) = points.first().map(Vec::len) {
        need(points.iter().all(|p| p.len() == d), || {
            "points have different dimensions".into()
        })?;
    }
    FiniteMetricSpace::from_fn(points.len(), |i, j| euclid(&points[i], &points[j]))
}

/// Shortest-path distances in the symmetrized k-nearest-neighbour graph of
/// the given points, edges weighted by Euclidean length.
pub fn graph_geodesic_cloud(points: &[Vec<f64>], neighbors: usize) -> Result<FiniteMetricSpace> {
    let n = points.len();
    need(neighbors >= 1 && neighbors < n, || {
        format!("neighbors must lie in 1..{n}, got {neighbors}")
    })?;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (euclid(&points[i], &points[j]), j))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in &near[..neighbors] {
            adj[i].push((j, d));
            adj[j].push((i, d));
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| shortest_paths(&adj, s))
        .collect();
    if let Some(j) = rows[0].iter().position(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "neighbour graph is disconnected (point {j} unreachable from 0); raise `neighbors`"
        )));
    }
    FiniteMetricSpace::from_fn(n, |i, j| rows[i][j].min(rows[j][i]))
}

fn shortest_paths(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    // total order on nonnegative floats through their bit patterns
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((bits, u))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    dist
}
