//! Fibers of a glued map and the measurements taken on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glue::GluedMap;
use crate::metric::{
    default_grid, default_window, intrinsic_metric, packing_profile, FiniteMetricSpace,
    IntrinsicMetric, PackingProfile,
};
use crate::model_geom::Curvature;
use crate::strainers::find_strainer;

/// `{x ∈ M : |f(x) base| ≤ τ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub base: usize,
    pub tau: f64,
    /// Members in index order.
    pub members: Vec<usize>,
}

impl Fiber {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn as_space(&self, m: &FiniteMetricSpace) -> Result<FiniteMetricSpace> {
        m.restrict(&self.members)
    }
}

/// Default fiber tolerance: twice the mesh of `X`.
pub fn default_tau(x: &FiniteMetricSpace) -> f64 {
    2.0 * x.resolution()
}

pub fn extract_fiber(
    map: &GluedMap,
    x: &FiniteMetricSpace,
    base: usize,
    tau: f64,
) -> Result<Fiber> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fiber tolerance must be nonnegative, got {tau}"
        )));
    }
    if base >= x.len() {
        return Err(Error::IndexOutOfRange {
            index: base,
            len: x.len(),
        });
    }
    let members: Vec<usize> = map
        .assignment
        .iter()
        .enumerate()
        .filter(|&(_, &f)| x.dist(f, base) <= tau)
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        let nearest = map
            .assignment
            .iter()
            .map(|&f| x.dist(f, base))
            .fold(f64::INFINITY, f64::min);
        return Err(Error::EmptyFiber { base, nearest });
    }
    Ok(Fiber { base, tau, members })
}

pub fn fiber_diameter(m: &FiniteMetricSpace, fiber: &Fiber) -> Result<f64> {
    if fiber.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mem = &fiber.members;
    Ok((0..mem.len())
        .into_par_iter()
        .map(|i| {
            mem[i + 1..]
                .iter()
                .map(|&b| m.dist(mem[i], b))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// Largest ratio of intrinsic to ambient distance over fiber pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum IntrinsicRatio {
    Connected {
        ratio: f64,
        link_radius: f64,
        worst_pair: Option<(usize, usize)>,
    },
    Disconnected {
        link_radius: f64,
        components: Vec<Vec<usize>>,
    },
}

impl IntrinsicRatio {
    pub fn ratio(&self) -> Option<f64> {
        match self {
            IntrinsicRatio::Connected { ratio, .. } => Some(*ratio),
            IntrinsicRatio::Disconnected { .. } => None,
        }
    }

    pub fn link_radius(&self) -> f64 {
        match self {
            IntrinsicRatio::Connected { link_radius, .. }
            | IntrinsicRatio::Disconnected { link_radius, .. } => *link_radius,
        }
    }
}

/// Default link radius: three times the mesh of the fiber subspace.
pub fn default_link_radius(m: &FiniteMetricSpace, fiber: &Fiber) -> Result<f64> {
    Ok(3.0 * fiber.as_space(m)?.resolution())
}

pub fn intrinsic_ratio(
    m: &FiniteMetricSpace,
    fiber: &Fiber,
    h: Option<f64>,
) -> Result<IntrinsicRatio> {
    if fiber.is_empty() {
        return Err(Error::EmptySubset);
    }
    let h = match h {
        Some(h) => h,
        None => default_link_radius(m, fiber)?,
    };
    if fiber.len() == 1 {
        return Ok(IntrinsicRatio::Connected {
            ratio: 1.0,
            link_radius: h,
            worst_pair: None,
        });
    }
    match intrinsic_metric(m, &fiber.members, h)? {
        IntrinsicMetric::Disconnected {
            link_radius,
            components,
        } => Ok(IntrinsicRatio::Disconnected {
            link_radius,
            components,
        }),
        IntrinsicMetric::Connected {
            subset,
            link_radius,
            table,
        } => {
            let k = subset.len();
            let mut ratio = 1.0f64;
            let mut worst = None;
            for a in 0..k {
                for b in a + 1..k {
                    let d = m.dist(subset[a], subset[b]);
                    if d > 0.0 {
                        let q = table[a * k + b] / d;
                        if q > ratio {
                            ratio = q;
                            worst = Some((subset[a], subset[b]));
                        }
                    }
                }
            }
            Ok(IntrinsicRatio::Connected {
                ratio,
                link_radius,
                worst_pair: worst,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberPacking {
    pub profile: PackingProfile,
    /// `v_m` of the fiber.
    pub volume_estimate: f64,
    pub diameter: f64,
    pub c_acc: f64,
    /// `v_m > 0`.
    pub positive: bool,
    /// `v_m ≤ C_acc · diameter^m`.
    pub within_upper_bound: bool,
}

/// Packing profile of the fiber at exponent `m_exp`. The grid defaults to 24
/// log-spaced scales from twice the fiber mesh to its diameter.
pub fn fiber_packing(
    m: &FiniteMetricSpace,
    fiber: &Fiber,
    m_exp: f64,
    grid: Option<&[f64]>,
    c_acc: f64,
) -> Result<FiberPacking> {
    if !(m_exp >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exponent must be nonnegative, got {m_exp}"
        )));
    }
    let space = fiber.as_space(m)?;
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(&space)?,
    };
    let profile = packing_profile(&space, m_exp, &grid, Some(default_window(&space)))?;
    let diameter = space.diameter();
    let v = profile.v_m;
    Ok(FiberPacking {
        volume_estimate: v,
        positive: v > 0.0,
        within_upper_bound: v <= c_acc * diameter.powf(m_exp),
        diameter,
        c_acc,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRatio {
    /// `v_m(F_q) / v_m(F_p)`.
    pub ratio: f64,
    pub p: FiberPacking,
    pub q: FiberPacking,
}

/// Ratio of fiber volume estimates over `q` and `p` on a common grid (by
/// default the grid of `F_p`).
#[allow(clippy::too_many_arguments)]
pub fn volume_continuity(
    map: &GluedMap,
    m: &FiniteMetricSpace,
    x: &FiniteMetricSpace,
    p: usize,
    q: usize,
    m_exp: f64,
    tau: f64,
    grid: Option<&[f64]>,
) -> Result<VolumeRatio> {
    let fp = extract_fiber(map, x, p, tau)?;
    let fq = extract_fiber(map, x, q, tau)?;
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(&fp.as_space(m)?)?,
    };
    let vp = fiber_packing(m, &fp, m_exp, Some(&grid), f64::INFINITY)?;
    let vq = fiber_packing(m, &fq, m_exp, Some(&grid), f64::INFINITY)?;
    Ok(VolumeRatio {
        ratio: vq.volume_estimate / vp.volume_estimate,
        p: vp,
        q: vq,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainedSubset {
    /// Fraction of fiber members with a strainer inside the fiber; a lower
    /// bound for the true fraction since the search is greedy.
    pub fraction: f64,
    pub members: Vec<usize>,
    pub m: usize,
    pub theta: f64,
    pub rho: f64,
}

/// Fiber members carrying an (m,θ)-strainer of length ≥ ρ whose points all
/// lie in the fiber.
pub fn strained_subset(
    space_m: &FiniteMetricSpace,
    kappa: Curvature,
    fiber: &Fiber,
    m: usize,
    theta: f64,
    rho: f64,
) -> Result<StrainedSubset> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "strainer size m must be at least 1".into(),
        ));
    }
    if fiber.is_empty() {
        return Err(Error::EmptySubset);
    }
    let members: Vec<usize> = fiber
        .members
        .par_iter()
        .filter(|&&x| find_strainer(space_m, kappa, x, m, theta, rho, Some(&fiber.members)).is_ok())
        .copied()
        .collect();
    Ok(StrainedSubset {
        fraction: members.len() as f64 / fiber.len() as f64,
        members,
        m,
        theta,
        rho,
    })
}

/// Settings of a full fiber report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberOptions {
    pub tau: f64,
    pub m_exp: f64,
    /// Intrinsic-metric link radius; three fiber meshes when absent.
    pub link_radius: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub c_acc: f64,
    /// Strained-subset settings; skipped when `strain_m` is 0.
    pub strain_m: usize,
    pub theta: f64,
    /// Strainer length; a quarter of the fiber diameter when absent.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub base: usize,
    pub tau: f64,
    pub size: usize,
    pub members: Vec<usize>,
    pub diameter: f64,
    pub intrinsic: IntrinsicRatio,
    pub packing: FiberPacking,
    pub volume_estimate: f64,
    pub dimension_estimate: Option<f64>,
    pub strained: Option<StrainedSubset>,
}

pub fn fiber_report(
    map: &GluedMap,
    m: &FiniteMetricSpace,
    x: &FiniteMetricSpace,
    base: usize,
    opts: &FiberOptions,
) -> Result<FiberReport> {
    let fiber = extract_fiber(map, x, base, opts.tau)?;
    let diameter = fiber_diameter(m, &fiber)?;
    let intrinsic = intrinsic_ratio(m, &fiber, opts.link_radius)?;
    let packing = fiber_packing(m, &fiber, opts.m_exp, opts.grid.as_deref(), opts.c_acc)?;
    let strained = if opts.strain_m > 0 {
        let rho = opts.rho.unwrap_or(0.25 * diameter);
        Some(strained_subset(
            m,
            map.kappa,
            &fiber,
            opts.strain_m,
            opts.theta,
            rho,
        )?)
    } else {
        None
    };
    Ok(FiberReport {
        base,
        tau: opts.tau,
        size: fiber.len(),
        diameter,
        volume_estimate: packing.volume_estimate,
        dimension_estimate: packing.profile.dimension_estimate,
        members: fiber.members,
        intrinsic,
        packing,
        strained,
    })
}
