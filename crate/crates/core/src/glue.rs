//! Construction of a map `f: M → X` from a correspondence by blending
//! distance-coordinate charts over a net of `X`, and the residual reports
//! measured on the result.
//!
//! Net points `p_1, p_2, …` (farthest-first order) each carry a chart
//! `φ_j = (|a_1^j ·|, …)` on `X` and its lift `φ̂_j = (|â_1^j ·|, …)` on `M`.
//! Stage `j` reassigns every `x` with `|p̂_j x| < 2r`: inside `r` it inverts
//! `φ̂_j(x)`, in the annulus it inverts the blend
//! `(1 − χ)·φ_j(f_{j−1}(x)) + χ·φ̂_j(x)` with `χ = χ(|p̂_j x| / r)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{greedy_net, Correspondence, FiniteMetricSpace, Net};
use crate::model_geom::{tilde_angle, Curvature};
use crate::strainers::{
    chart_eval, chart_inverse_among, find_strainer, place_anchor, DistanceChart, Strainer,
};

/// Cutoff: 1 on `[0, 1]`, `1 − s²(3 − 2s)` with `s = t − 1` on `(1, 2)`, 0 from 2 on.
pub fn chi(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let s = t - 1.0;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// Pointwise `(1 − w)·prev + w·hat`.
pub fn blend_local(prev: &[Vec<f64>], hat: &[Vec<f64>], weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    if prev.len() != hat.len() {
        return Err(Error::LengthMismatch(prev.len(), hat.len()));
    }
    if prev.len() != weights.len() {
        return Err(Error::LengthMismatch(prev.len(), weights.len()));
    }
    prev.iter()
        .zip(hat)
        .zip(weights)
        .map(|((u, v), &w)| {
            if u.len() != v.len() {
                return Err(Error::LengthMismatch(u.len(), v.len()));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter(format!(
                    "blend weight {w} outside [0, 1]"
                )));
            }
            Ok(blend(u, v, w))
        })
        .collect()
}

fn blend(prev: &[f64], hat: &[f64], w: f64) -> Vec<f64> {
    prev.iter()
        .zip(hat)
        .map(|(a, b)| (1.0 - w) * a + w * b)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendConfig {
    pub ell: f64,
    pub delta: f64,
    #[serde(default)]
    pub net_seed: usize,
    /// Radial window of anchor placement; defaults to the mesh of `X`.
    #[serde(default)]
    pub tol_radial: Option<f64>,
    /// Largest geodesic excess of a placed anchor; defaults to twice the mesh of `X`.
    #[serde(default)]
    pub tol_excess: Option<f64>,
    /// Largest accepted chart-inverse residual; defaults to `r/4`.
    #[serde(default)]
    pub residual_threshold: Option<f64>,
    /// Radius of the chart-inverse search ball around `p_j`; defaults to
    /// `min(10r, ℓδ)`, the part of `B(p_j, 10r)` on which `φ_j` is a chart.
    #[serde(default)]
    pub search_radius: Option<f64>,
}

impl BlendConfig {
    pub fn new(ell: f64, delta: f64) -> Self {
        BlendConfig {
            ell,
            delta,
            net_seed: 0,
            tol_radial: None,
            tol_excess: None,
            residual_threshold: None,
            search_radius: None,
        }
    }

    /// Blend radius `r = ℓδ²`.
    pub fn r(&self) -> f64 {
        self.ell * self.delta * self.delta
    }

    pub fn search_radius(&self) -> f64 {
        self.search_radius
            .unwrap_or_else(|| (10.0 * self.r()).min(self.ell * self.delta))
    }

    pub fn residual_threshold(&self) -> f64 {
        self.residual_threshold.unwrap_or(0.25 * self.r())
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.ell) || !ok(self.delta) {
            return Err(Error::InvalidParameter(format!(
                "ell and delta must be positive (ell={}, delta={})",
                self.ell, self.delta
            )));
        }
        for (name, v) in [
            ("tol_radial", self.tol_radial),
            ("tol_excess", self.tol_excess),
            ("residual_threshold", self.residual_threshold),
            ("search_radius", self.search_radius),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be nonnegative, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Chart data attached to one net point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetChart {
    pub net_point: usize,
    pub strainer: Strainer,
    /// `a_i^j`: placed anchors defining `φ_j`.
    pub anchors: Vec<usize>,
    /// `b_i^j`: placed opposite anchors.
    pub opposite: Vec<usize>,
    /// Lift `p̂_j` of the net point.
    pub lifted_base: usize,
    /// Lifts `â_i^j` defining `φ̂_j`.
    pub lifted_anchors: Vec<usize>,
}

impl NetChart {
    pub fn chart(&self, kappa: Curvature, ell: f64, delta: f64) -> DistanceChart {
        DistanceChart::new(self.net_point, self.anchors.clone(), kappa, ell, delta)
    }

    pub fn lifted_chart(&self, kappa: Curvature, ell: f64, delta: f64) -> DistanceChart {
        DistanceChart::new(
            self.lifted_base,
            self.lifted_anchors.clone(),
            kappa,
            ell,
            delta,
        )
    }
}

/// Per-point record of the blending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Last stage that assigned the point (`N_x`), or the chart used by the
    /// fallback.
    pub stage: Vec<Option<usize>>,
    /// Cutoff weight at that stage.
    pub weight: Vec<f64>,
    /// Largest chart-inverse residual met by the point.
    pub residual: Vec<f64>,
    /// Points reached by no stage and assigned through the nearest lifted
    /// net point's chart.
    pub fallback: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub r: f64,
    pub search_radius: f64,
    pub residual_threshold: f64,
    pub net_size: usize,
    pub single_chart: bool,
    pub fallback_count: usize,
    pub max_residual: f64,
    pub mu_hat: f64,
    pub mesh_x: f64,
    /// `max_x |f(x), forward(x)|`.
    pub closeness: f64,
    /// `closeness / μ̂`; absent when μ̂ = 0.
    pub c_run: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluedMap {
    pub kappa: Curvature,
    pub k: usize,
    pub config: BlendConfig,
    pub net: Net,
    pub charts: Vec<NetChart>,
    /// `assignment[x] = f(x)`.
    pub assignment: Vec<usize>,
    pub diagnostics: Diagnostics,
    pub summary: BuildSummary,
}

impl GluedMap {
    pub fn eval(&self, x: usize) -> usize {
        self.assignment[x]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Builds the chart of a net point: a strainer of length ≥ ℓ, then anchors
/// placed at distance ℓδ towards each strainer point, then their lifts.
fn net_chart(
    x: &FiniteMetricSpace,
    corr: &Correspondence,
    kappa: Curvature,
    k: usize,
    config: &BlendConfig,
    j: usize,
    p: usize,
) -> Result<NetChart> {
    let mesh = x.resolution();
    let tol_radial = config.tol_radial.unwrap_or(mesh);
    let tol_excess = config.tol_excess.unwrap_or(2.0 * mesh);
    let strainer = find_strainer(x, kappa, p, k, config.delta, config.ell, None)?;
    let d = config.ell * config.delta;
    let place = |target: usize| {
        place_anchor(x, p, target, d, tol_radial, tol_excess).ok_or(Error::AnchorPlacementFailed {
            net_index: j,
            base: p,
            target,
            distance: d,
        })
    };
    let mut anchors = Vec::with_capacity(k);
    let mut opposite = Vec::with_capacity(k);
    for &(alpha, beta) in &strainer.pairs {
        anchors.push(place(alpha)?);
        opposite.push(place(beta)?);
    }
    let lifted_anchors = anchors.iter().map(|&a| corr.lift(a)).collect();
    Ok(NetChart {
        net_point: p,
        strainer,
        anchors,
        opposite,
        lifted_base: corr.lift(p),
        lifted_anchors,
    })
}

/// Runs the construction. `corr` maps `M → X` (forward) and `X → M` (backward).
pub fn build_submersion(
    m: &FiniteMetricSpace,
    x: &FiniteMetricSpace,
    corr: &Correspondence,
    kappa: Curvature,
    k: usize,
    config: &BlendConfig,
) -> Result<GluedMap> {
    config.validate()?;
    if corr.forward.len() != m.len() || corr.backward.len() != x.len() {
        return Err(Error::MapLength {
            what: "correspondence",
            expected: m.len(),
            found: corr.forward.len(),
        });
    }
    if config.net_seed >= x.len() {
        return Err(Error::IndexOutOfRange {
            index: config.net_seed,
            len: x.len(),
        });
    }
    let r = config.r();
    let search_radius = config.search_radius();
    let threshold = config.residual_threshold();
    let mu_hat = corr.mu_hat();
    let mesh_x = x.resolution();
    let mut warnings = Vec::new();
    if mu_hat > 0.25 * r {
        warnings.push(format!(
            "correspondence quality {mu_hat:.4e} exceeds r/4 = {:.4e}",
            0.25 * r
        ));
    }
    if mesh_x > 0.25 * r {
        warnings.push(format!(
            "mesh of X {mesh_x:.4e} exceeds r/4 = {:.4e}",
            0.25 * r
        ));
    }

    let net = greedy_net(x, 0.5 * r, config.net_seed)?;
    if net.len() == 1 {
        warnings.push("single-chart regime: the net has one point".into());
    }
    let charts: Vec<NetChart> = net
        .members
        .iter()
        .enumerate()
        .map(|(j, &p)| net_chart(x, corr, kappa, k, config, j, p))
        .collect::<Result<_>>()?;
    let phi: Vec<DistanceChart> = charts
        .iter()
        .map(|c| c.chart(kappa, config.ell, config.delta))
        .collect();
    let phi_hat: Vec<DistanceChart> = charts
        .iter()
        .map(|c| c.lifted_chart(kappa, config.ell, config.delta))
        .collect();
    let balls: Vec<Vec<usize>> = net
        .members
        .iter()
        .map(|&p| x.closed_ball(p, search_radius))
        .collect();

    let n = m.len();
    let mut current: Vec<Option<usize>> = vec![None; n];
    let mut stage = vec![None; n];
    let mut weight = vec![0.0; n];
    let mut residual = vec![0.0f64; n];

    for (j, chart) in charts.iter().enumerate() {
        let hat_base = chart.lifted_base;
        let updates: Vec<(usize, usize, f64, f64)> = (0..n)
            .into_par_iter()
            .filter_map(|pt| {
                let t = m.dist(hat_base, pt) / r;
                let w = chi(t);
                let target = if t < 1.0 {
                    chart_eval(m, &phi_hat[j], pt)
                } else if t < 2.0 {
                    let prev = current[pt]?;
                    blend(
                        &chart_eval(x, &phi[j], prev),
                        &chart_eval(m, &phi_hat[j], pt),
                        w,
                    )
                } else {
                    return None;
                };
                let (y, res) = chart_inverse_among(x, &phi[j], &target, &balls[j]);
                Some((pt, y, w, res))
            })
            .collect();
        for (pt, y, w, res) in updates {
            if res > threshold {
                return Err(Error::InversionResidualExceeded {
                    point: pt,
                    stage: j,
                    residual: res,
                    threshold,
                });
            }
            current[pt] = Some(y);
            stage[pt] = Some(j);
            weight[pt] = w;
            residual[pt] = residual[pt].max(res);
        }
    }

    let mut fallback = vec![false; n];
    let lifted_bases: Vec<usize> = charts.iter().map(|c| c.lifted_base).collect();
    for pt in 0..n {
        if current[pt].is_some() {
            continue;
        }
        let j = (0..charts.len())
            .min_by(|&a, &b| {
                m.dist(lifted_bases[a], pt)
                    .total_cmp(&m.dist(lifted_bases[b], pt))
            })
            .expect("net is nonempty");
        let target = chart_eval(m, &phi_hat[j], pt);
        let (y, res) = chart_inverse_among(x, &phi[j], &target, &balls[j]);
        if res > threshold {
            return Err(Error::InversionResidualExceeded {
                point: pt,
                stage: j,
                residual: res,
                threshold,
            });
        }
        current[pt] = Some(y);
        stage[pt] = Some(j);
        weight[pt] = chi(m.dist(lifted_bases[j], pt) / r);
        residual[pt] = residual[pt].max(res);
        fallback[pt] = true;
    }
    let fallback_count = fallback.iter().filter(|&&b| b).count();
    if fallback_count > 0 {
        warnings.push(format!(
            "{fallback_count} points of M lie in no blend region"
        ));
    }

    let assignment: Vec<usize> = current.into_iter().map(|c| c.expect("assigned")).collect();
    let closeness = assignment
        .iter()
        .zip(&corr.forward)
        .map(|(&f, &g)| x.dist(f, g))
        .fold(0.0, f64::max);
    let summary = BuildSummary {
        r,
        search_radius,
        residual_threshold: threshold,
        net_size: net.len(),
        single_chart: net.len() == 1,
        fallback_count,
        max_residual: residual.iter().copied().fold(0.0, f64::max),
        mu_hat,
        mesh_x,
        closeness,
        c_run: (mu_hat > 0.0).then(|| closeness / mu_hat),
        warnings,
    };
    Ok(GluedMap {
        kappa,
        k,
        config: config.clone(),
        net,
        charts,
        assignment,
        diagnostics: Diagnostics {
            stage,
            weight,
            residual,
            fallback,
        },
        summary,
    })
}

/// Anchored chart at `p`: a (k,δ)-strainer of length ≥ ℓ with anchors placed
/// at distance ℓδ, lifted through `corr`. Returns `(φ on X, φ̂ on M)`.
#[allow(clippy::too_many_arguments)]
pub fn anchored_charts(
    x: &FiniteMetricSpace,
    corr: &Correspondence,
    kappa: Curvature,
    k: usize,
    config: &BlendConfig,
    p: usize,
) -> Result<(DistanceChart, DistanceChart)> {
    let c = net_chart(x, corr, kappa, k, config, usize::MAX, p)?;
    Ok((
        c.chart(kappa, config.ell, config.delta),
        c.lifted_chart(kappa, config.ell, config.delta),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

/// Quantiles of a per-pair quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub pairs: usize,
    pub eligible_pairs: usize,
    pub sampled: bool,
    pub max: f64,
    pub p95: f64,
    pub median: f64,
    /// Largest values, worst first.
    pub worst: Vec<PairWitness>,
    pub min_sep: f64,
    pub max_sep: Option<f64>,
    pub pair_budget: usize,
    pub seed: u64,
    pub notes: Vec<String>,
}

/// Number of witnesses kept in a report.
pub const WITNESS_COUNT: usize = 5;

/// Nearest-rank quantile of sorted data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn subsample<T: Copy>(items: Vec<T>, budget: usize, seed: u64) -> (Vec<T>, bool) {
    if items.len() <= budget {
        return (items, false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, items.len(), budget).into_vec();
    picks.sort_unstable();
    (picks.into_iter().map(|i| items[i]).collect(), true)
}

fn summarize(
    mut values: Vec<PairWitness>,
    eligible: usize,
    sampled: bool,
    min_sep: f64,
    max_sep: Option<f64>,
    pair_budget: usize,
    seed: u64,
    notes: Vec<String>,
) -> ResidualReport {
    let mut sorted: Vec<f64> = values.iter().map(|w| w.value).collect();
    sorted.sort_by(f64::total_cmp);
    values.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then((a.x, a.y).cmp(&(b.x, b.y)))
    });
    values.truncate(WITNESS_COUNT);
    ResidualReport {
        pairs: sorted.len(),
        eligible_pairs: eligible,
        sampled,
        max: sorted.last().copied().unwrap_or(f64::NAN),
        p95: nearest_rank(&sorted, 0.95),
        median: nearest_rank(&sorted, 0.5),
        worst: values,
        min_sep,
        max_sep,
        pair_budget,
        seed,
        notes,
    }
}

/// Measures `‖(φ(f x) − φ(f y)) − (φ̂(x) − φ̂(y))‖ / |xy|` over pairs of
/// `B(p̂, ℓδ²)` at separation ≥ `min_sep`, where `p̂` is the base of `phi_hat`.
#[allow(clippy::too_many_arguments)]
pub fn eqcon_report(
    map: &GluedMap,
    m: &FiniteMetricSpace,
    x: &FiniteMetricSpace,
    phi: &DistanceChart,
    phi_hat: &DistanceChart,
    min_sep: f64,
    pair_budget: usize,
    seed: u64,
) -> Result<ResidualReport> {
    if phi.k() != phi_hat.k() {
        return Err(Error::LengthMismatch(phi.k(), phi_hat.k()));
    }
    let radius = phi.ell * phi.delta * phi.delta;
    let region = m.open_ball(phi_hat.base, radius);
    if region.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let mut eligible = Vec::new();
    for (i, &a) in region.iter().enumerate() {
        for &b in &region[i + 1..] {
            if m.dist(a, b) >= min_sep && m.dist(a, b) > 0.0 {
                eligible.push((a, b));
            }
        }
    }
    let total = eligible.len();
    if total == 0 {
        return Err(Error::TooFewPoints);
    }
    let (pairs, sampled) = subsample(eligible, pair_budget, seed);
    let values: Vec<PairWitness> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let fa = chart_eval(x, phi, map.eval(a));
            let fb = chart_eval(x, phi, map.eval(b));
            let ha = chart_eval(m, phi_hat, a);
            let hb = chart_eval(m, phi_hat, b);
            let s: f64 = (0..phi.k())
                .map(|i| ((fa[i] - fb[i]) - (ha[i] - hb[i])).powi(2))
                .sum();
            PairWitness {
                x: a,
                y: b,
                value: s.sqrt() / m.dist(a, b),
            }
        })
        .collect();
    Ok(summarize(
        values,
        total,
        sampled,
        min_sep,
        None,
        pair_budget,
        seed,
        Vec::new(),
    ))
}

/// Points of `M` over each point of `X` at tolerance τ: `{z: |f(z) a| ≤ τ}`.
pub fn preimages(map: &GluedMap, x: &FiniteMetricSpace, tau: f64) -> Vec<Vec<usize>> {
    (0..x.len())
        .into_par_iter()
        .map(|a| {
            map.assignment
                .iter()
                .enumerate()
                .filter(|&(_, &fz)| x.dist(fz, a) <= tau)
                .map(|(z, _)| z)
                .collect()
        })
        .collect()
}

/// Per pair `(x, y)` with `min_sep ≤ |xy| ≤ max_sep`:
/// `| |f x f y| / |xy| − sin(min over z in the fiber of f(x), z ≠ x, of ∠̃ y x z) |`.
///
/// Comparison angles stand in for true angles, so the defect may be
/// overstated. A fiber `{x}` contributes `sin = 1`; undefined angles count
/// as 0.
#[allow(clippy::too_many_arguments)]
pub fn submersion_defect_report(
    map: &GluedMap,
    m: &FiniteMetricSpace,
    x: &FiniteMetricSpace,
    tau: f64,
    min_sep: f64,
    max_sep: f64,
    pair_budget: usize,
    seed: u64,
) -> Result<ResidualReport> {
    if m.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let fibers = preimages(map, x, tau);
    let eligible: Vec<(usize, usize)> = (0..m.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            (a + 1..m.len())
                .filter(move |&b| {
                    let d = m.dist(a, b);
                    d >= min_sep && d <= max_sep && d > 0.0
                })
                .map(move |b| (a, b))
        })
        .collect();
    let total = eligible.len();
    if total == 0 {
        return Err(Error::TooFewPoints);
    }
    let (pairs, sampled) = subsample(eligible, pair_budget, seed);
    let kappa = map.kappa;
    let values: Vec<Option<PairWitness>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let fiber = &fibers[map.eval(a)];
            if fiber.is_empty() {
                return None;
            }
            let direction = if fiber.iter().all(|&z| z == a) {
                1.0
            } else {
                fiber
                    .iter()
                    .filter(|&&z| z != a)
                    .map(|&z| tilde_angle(m, kappa, a, b, z).unwrap_or(0.0))
                    .fold(f64::INFINITY, f64::min)
                    .sin()
            };
            let ratio = x.dist(map.eval(a), map.eval(b)) / m.dist(a, b);
            Some(PairWitness {
                x: a,
                y: b,
                value: (ratio - direction).abs(),
            })
        })
        .collect();
    let skipped: Vec<usize> = pairs
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(p, _)| p.0)
        .collect();
    let mut notes =
        vec!["comparison angles replace true angles; the defect may be overstated".to_string()];
    if let Some(&w) = skipped.first() {
        notes.push(format!(
            "{} pairs skipped for empty fibers, first at point {w}",
            skipped.len()
        ));
    }
    let values: Vec<PairWitness> = values.into_iter().flatten().collect();
    Ok(summarize(
        values,
        total,
        sampled,
        min_sep,
        Some(max_sep),
        pair_budget,
        seed,
        notes,
    ))
}
