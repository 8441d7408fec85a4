//! Strainers, the distance coordinates they induce, and empirical
//! regularity certificates for such coordinates.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;
use crate::model_geom::{tilde_angle, Curvature};

/// Slack added to the certified δ so that it passes the strict inequalities.
pub const CERTIFY_SLACK: f64 = 1e-12;

/// Smallest openness step, in sample meshes.
pub const OPENNESS_MIN_STEPS: f64 = 4.0;

/// Margins closer than this are treated as ties in the search.
const TIE_TOL: f64 = 1e-12;

/// A (k,δ)-strainer at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strainer {
    pub base: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Smallest δ for which every strainer inequality holds.
    pub delta: f64,
    /// `min_i min(|a_i p|, |b_i p|)`.
    pub length: f64,
    pub kappa: Curvature,
}

impl Strainer {
    pub fn k(&self) -> usize {
        self.pairs.len()
    }
}

/// Outcome of [`check_strainer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainerCheck {
    pub passed: bool,
    /// Smallest margin over all inequalities; `-inf` on degenerate input.
    pub min_margin: f64,
    /// Human-readable name of the constraint attaining `min_margin`.
    pub binding: String,
    /// Smallest δ that passes (`inf` when some angle is undefined).
    pub certified_delta: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Copy)]
enum Constraint {
    Pair(usize),
    Cross(usize, char, usize, char),
}

impl Constraint {
    fn describe(self) -> String {
        match self {
            Constraint::Pair(i) => format!("angle a{i} p b{i}"),
            Constraint::Cross(i, s, j, t) => format!("angle {s}{i} p {t}{j}"),
        }
    }
}

fn angle(space: &FiniteMetricSpace, kappa: Curvature, p: usize, q: usize, r: usize) -> Option<f64> {
    if q == p || r == p || q == r {
        return None;
    }
    tilde_angle(space, kappa, p, q, r)
}

/// Margin of the within-pair inequality ∠̃ a p b > π − δ.
fn pair_margin(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    pair: (usize, usize),
    delta: f64,
) -> f64 {
    angle(space, kappa, p, pair.0, pair.1).map_or(f64::NEG_INFINITY, |t| t - (PI - delta))
}

/// Smallest margin of the cross inequalities ∠̃ > π/2 − δ between two pairs.
fn cross_margin(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    u: (usize, usize),
    v: (usize, usize),
    delta: f64,
) -> f64 {
    [(u.0, v.0), (u.0, v.1), (u.1, v.0), (u.1, v.1)]
        .into_iter()
        .map(|(x, y)| {
            angle(space, kappa, p, x, y).map_or(f64::NEG_INFINITY, |t| t - (FRAC_PI_2 - delta))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Evaluates every strainer inequality at `p`.
pub fn check_strainer(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    pairs: &[(usize, usize)],
    delta: f64,
) -> StrainerCheck {
    let mut min_margin = f64::INFINITY;
    let mut binding = String::from("none");
    let mut needed: f64 = 0.0;
    let mut record = |c: Constraint, angle: Option<f64>, target: f64| {
        let margin = angle.map_or(f64::NEG_INFINITY, |t| t - (target - delta));
        needed = needed.max(angle.map_or(f64::INFINITY, |t| target - t));
        if margin < min_margin {
            min_margin = margin;
            binding = c.describe();
        }
    };
    for (i, &(a, b)) in pairs.iter().enumerate() {
        record(Constraint::Pair(i), angle(space, kappa, p, a, b), PI);
        for (j, &(c, d)) in pairs.iter().enumerate().skip(i + 1) {
            for (x, s, y, t) in [
                (a, 'a', c, 'a'),
                (a, 'a', d, 'b'),
                (b, 'b', c, 'a'),
                (b, 'b', d, 'b'),
            ] {
                record(
                    Constraint::Cross(i, s, j, t),
                    angle(space, kappa, p, x, y),
                    FRAC_PI_2,
                );
            }
        }
    }
    let length = pairs
        .iter()
        .map(|&(a, b)| space.dist(p, a).min(space.dist(p, b)))
        .fold(f64::INFINITY, f64::min);
    if pairs.is_empty() {
        min_margin = f64::NEG_INFINITY;
        binding = "no pairs".into();
    }
    StrainerCheck {
        passed: min_margin > 0.0 && length > 0.0,
        min_margin,
        binding,
        certified_delta: if needed.is_finite() {
            needed.max(0.0) + CERTIFY_SLACK
        } else {
            f64::INFINITY
        },
        length,
    }
}

/// Greedy strainer search with one repair sweep.
///
/// Pair 1 maximizes its own margin; every later pair maximizes the smallest
/// of its own margin and its cross margins against the pairs already chosen.
/// The repair sweep then re-chooses each pair with the others held fixed.
/// `pool` defaults to all points at distance ≥ `min_length` from `p`.
pub fn find_strainer(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    k: usize,
    delta: f64,
    min_length: f64,
    pool: Option<&[usize]>,
) -> Result<Strainer> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "strainer size k must be at least 1".into(),
        ));
    }
    if p >= space.len() {
        return Err(Error::IndexOutOfRange {
            index: p,
            len: space.len(),
        });
    }
    let pool: Vec<usize> = match pool {
        Some(list) => {
            let mut v: Vec<usize> = list
                .iter()
                .copied()
                .filter(|&x| x != p && space.dist(p, x) >= min_length)
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => (0..space.len())
            .filter(|&x| x != p && space.dist(p, x) >= min_length)
            .collect(),
    };
    let not_found = |best_margin: f64, binding: String| Error::StrainerNotFound {
        point: p,
        k,
        best_margin,
        binding,
    };
    if pool.len() < 2 {
        return Err(not_found(
            f64::NEG_INFINITY,
            format!("only {} candidate points", pool.len()),
        ));
    }

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(k);
    for _ in 0..k {
        let (pair, _) = best_pair(space, kappa, p, &pool, &pairs, delta);
        pairs.push(pair);
    }
    for i in 0..k {
        let others: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &q)| q)
            .collect();
        let current = score(space, kappa, p, pairs[i], &others, delta);
        let (pair, s) = best_pair(space, kappa, p, &pool, &others, delta);
        if s > current + TIE_TOL {
            pairs[i] = pair;
        }
    }
    let check = check_strainer(space, kappa, p, &pairs, delta);
    if check.passed {
        Ok(Strainer {
            base: p,
            pairs,
            delta: check.certified_delta,
            length: check.length,
            kappa,
        })
    } else {
        Err(not_found(check.min_margin, check.binding))
    }
}

fn score(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    pair: (usize, usize),
    others: &[(usize, usize)],
    delta: f64,
) -> f64 {
    others
        .iter()
        .map(|&o| cross_margin(space, kappa, p, pair, o, delta))
        .fold(pair_margin(space, kappa, p, pair, delta), f64::min)
}

/// Best unordered pool pair against the fixed `others`; ties (within
/// [`TIE_TOL`]) go to the lexicographically lowest pair.
fn best_pair(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    p: usize,
    pool: &[usize],
    others: &[(usize, usize)],
    delta: f64,
) -> ((usize, usize), f64) {
    let per_row: Vec<((usize, usize), f64)> = (0..pool.len() - 1)
        .into_par_iter()
        .map(|ia| {
            let a = pool[ia];
            let mut best = ((a, pool[ia + 1]), f64::NEG_INFINITY);
            for &b in &pool[ia + 1..] {
                let s = score(space, kappa, p, (a, b), others, delta);
                if s > best.1 + TIE_TOL || best.1 == f64::NEG_INFINITY && s > best.1 {
                    best = ((a, b), s);
                }
            }
            best
        })
        .collect();
    let mut best = per_row[0];
    for &cand in &per_row[1..] {
        if cand.1 > best.1 + TIE_TOL || best.1 == f64::NEG_INFINITY && cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Sample `z` with `| |pz| − d | ≤ tol_radial` minimizing the excess
/// `|pz| + |zα| − |pα|`, provided the excess is at most `tol_excess`.
/// Ties go to the lowest index.
pub fn place_anchor(
    space: &FiniteMetricSpace,
    p: usize,
    alpha: usize,
    d: f64,
    tol_radial: f64,
    tol_excess: f64,
) -> Option<usize> {
    let pa = space.dist(p, alpha);
    let mut best: Option<(usize, f64)> = None;
    for z in 0..space.len() {
        let pz = space.dist(p, z);
        if (pz - d).abs() > tol_radial {
            continue;
        }
        let excess = pz + space.dist(z, alpha) - pa;
        if excess <= tol_excess && best.is_none_or(|(_, e)| excess < e) {
            best = Some((z, excess));
        }
    }
    best.map(|(z, _)| z)
}

/// Distance coordinate `x ↦ (|a_1 x|, …, |a_k x|)` around a base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceChart {
    pub base: usize,
    pub anchors: Vec<usize>,
    pub kappa: Curvature,
    pub ell: f64,
    pub delta: f64,
    pub domain_radius: f64,
}

impl DistanceChart {
    /// Chart with working ball of radius ℓδ.
    pub fn new(base: usize, anchors: Vec<usize>, kappa: Curvature, ell: f64, delta: f64) -> Self {
        DistanceChart {
            base,
            anchors,
            kappa,
            ell,
            delta,
            domain_radius: ell * delta,
        }
    }

    pub fn k(&self) -> usize {
        self.anchors.len()
    }

    /// Points of the working ball (closed).
    pub fn domain(&self, space: &FiniteMetricSpace) -> Vec<usize> {
        space.closed_ball(self.base, self.domain_radius)
    }
}

pub fn chart_eval(space: &FiniteMetricSpace, chart: &DistanceChart, x: usize) -> Vec<f64> {
    chart.anchors.iter().map(|&a| space.dist(a, x)).collect()
}

fn norm_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Point of `candidates` whose chart value is nearest to `v`, with the
/// residual `‖chart(x) − v‖`. Ties go to the first candidate.
pub fn chart_inverse_among(
    space: &FiniteMetricSpace,
    chart: &DistanceChart,
    v: &[f64],
    candidates: &[usize],
) -> (usize, f64) {
    let mut best = (candidates[0], f64::INFINITY);
    let mut value = vec![0.0; chart.k()];
    for &x in candidates {
        for (slot, &a) in value.iter_mut().zip(&chart.anchors) {
            *slot = space.dist(a, x);
        }
        let r = norm_diff(&value, v);
        if r < best.1 {
            best = (x, r);
        }
    }
    best
}

/// Nearest-image inversion over the closed ball `B̄(center, radius)`.
pub fn chart_inverse(
    space: &FiniteMetricSpace,
    chart: &DistanceChart,
    v: &[f64],
    center: usize,
    radius: f64,
) -> (usize, f64) {
    let ball = space.closed_ball(center, radius);
    chart_inverse_among(space, chart, v, &ball)
}

/// Sampled pairs: every pair when there are at most `budget`, otherwise a
/// seeded uniform sample of `budget` distinct pairs.
pub(crate) fn sample_pairs(
    points: &[usize],
    budget: usize,
    seed: u64,
) -> (Vec<(usize, usize)>, bool) {
    let m = points.len();
    let total = m * m.saturating_sub(1) / 2;
    if total <= budget {
        let mut out = Vec::with_capacity(total);
        for a in 0..m {
            for b in a + 1..m {
                out.push((points[a], points[b]));
            }
        }
        return (out, false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, total, budget).into_vec();
    picks.sort_unstable();
    let mut out = Vec::with_capacity(budget);
    // walk the condensed layout once to decode the sorted picks
    let (mut a, mut start) = (0usize, 0usize);
    for k in picks {
        while k >= start + (m - a - 1) {
            start += m - a - 1;
            a += 1;
        }
        out.push((points[a], points[a + 1 + k - start]));
    }
    (out, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpennessWitness {
    pub source: usize,
    pub step: f64,
    pub target: Vec<f64>,
    pub nearest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartQualityReport {
    pub bilipschitz_low: f64,
    pub bilipschitz_high: f64,
    pub openness_defect: f64,
    pub openness_witness: Option<OpennessWitness>,
    pub pairs_used: usize,
    pub pair_budget: usize,
    pub sampled: bool,
    pub targets_used: usize,
    pub center: usize,
    pub radius: f64,
}

/// Empirical bi-Lipschitz bounds and openness defect of a chart on its ball.
///
/// Openness targets are `chart(x) + s·u` for sampled domain points `x`,
/// random unit vectors `u` and `s = (radius − |base x|)/2`; points with
/// `s` below [`OPENNESS_MIN_STEPS`] sample meshes are skipped, since a
/// target can always miss the sample by up to half a mesh. The defect of a target is the
/// smallest achievable `‖chart(y) − target‖` over the ball, divided by `s`.
pub fn chart_quality(
    space: &FiniteMetricSpace,
    chart: &DistanceChart,
    pair_budget: usize,
    seed: u64,
) -> Result<ChartQualityReport> {
    let domain = chart.domain(space);
    if domain.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let values: Vec<Vec<f64>> = domain
        .iter()
        .map(|&x| chart_eval(space, chart, x))
        .collect();
    let pos = |x: usize| domain.binary_search(&x).expect("domain point");
    let (pairs, sampled) = sample_pairs(&domain, pair_budget, seed);
    let (mut low, mut high) = (f64::INFINITY, 0.0f64);
    let mut used = 0;
    for &(x, y) in &pairs {
        let d = space.dist(x, y);
        if d <= 0.0 {
            continue;
        }
        let ratio = norm_diff(&values[pos(x)], &values[pos(y)]) / d;
        low = low.min(ratio);
        high = high.max(ratio);
        used += 1;
    }
    if used == 0 {
        return Err(Error::TooFewPoints);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mesh = space.resolution();
    let sources: Vec<usize> = if domain.len() > pair_budget.max(1) {
        let mut s: Vec<usize> = sample(&mut rng, domain.len(), pair_budget.max(1)).into_vec();
        s.sort_unstable();
        s
    } else {
        (0..domain.len()).collect()
    };
    let mut openness = 0.0f64;
    let mut witness = None;
    let mut targets = 0;
    for ix in sources {
        let x = domain[ix];
        let step = 0.5 * (chart.domain_radius - space.dist(chart.base, x));
        if step < OPENNESS_MIN_STEPS * mesh || step <= 0.0 {
            continue;
        }
        let u = random_unit(&mut rng, chart.k());
        let target: Vec<f64> = values[ix]
            .iter()
            .zip(&u)
            .map(|(c, d)| c + step * d)
            .collect();
        let (nearest, gap) = values
            .iter()
            .enumerate()
            .map(|(iy, val)| (iy, norm_diff(val, &target)))
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        targets += 1;
        let defect = gap / step;
        if witness.is_none() || defect > openness {
            openness = defect;
            witness = Some(OpennessWitness {
                source: x,
                step,
                target,
                nearest: domain[nearest],
            });
        }
    }
    Ok(ChartQualityReport {
        bilipschitz_low: low,
        bilipschitz_high: high,
        openness_defect: openness,
        openness_witness: witness,
        pairs_used: used,
        pair_budget,
        sampled,
        targets_used: targets,
        center: chart.base,
        radius: chart.domain_radius,
    })
}

fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        // Box–Muller normals give a uniform direction after normalizing.
        let v: Vec<f64> = (0..k)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityDefect {
    /// Largest `‖(f(x) − f(y)) − (g(x) − g(y))‖ / |xy|` over scanned pairs.
    pub defect: f64,
    pub witness: Option<(usize, usize)>,
    pub pairs_used: usize,
    /// True when a budgeted sample replaced the full pair scan.
    pub sampled: bool,
}

/// Almost-regularity defect of `f` against the chart `g` on `region`.
///
/// `f_values` is indexed by point index of `space`. With `pair_budget`
/// `None` every region pair is scanned.
pub fn almost_regular_defect(
    space: &FiniteMetricSpace,
    f_values: &[Vec<f64>],
    g: &DistanceChart,
    region: &[usize],
    pair_budget: Option<usize>,
    seed: u64,
) -> Result<RegularityDefect> {
    if f_values.len() != space.len() {
        return Err(Error::MapLength {
            what: "f_values",
            expected: space.len(),
            found: f_values.len(),
        });
    }
    if let Some(bad) = f_values.iter().find(|v| v.len() != g.k()) {
        return Err(Error::LengthMismatch(bad.len(), g.k()));
    }
    let (pairs, sampled) = sample_pairs(region, pair_budget.unwrap_or(usize::MAX), seed);
    let best = pairs
        .par_iter()
        .filter_map(|&(x, y)| {
            let d = space.dist(x, y);
            if d <= 0.0 {
                return None;
            }
            let s: f64 = (0..g.k())
                .map(|i| {
                    let a = g.anchors[i];
                    let diff =
                        (f_values[x][i] - f_values[y][i]) - (space.dist(a, x) - space.dist(a, y));
                    diff * diff
                })
                .sum();
            Some((s.sqrt() / d, x, y))
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || b.0 == a.0 && (b.1, b.2) < (a.1, a.2) {
                b
            } else {
                a
            }
        });
    let used = pairs
        .iter()
        .filter(|&&(x, y)| space.dist(x, y) > 0.0)
        .count();
    Ok(RegularityDefect {
        defect: best.map_or(0.0, |b| b.0),
        witness: best.map(|b| (b.1, b.2)),
        pairs_used: used,
        sampled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoncriticalReport {
    pub passed: bool,
    pub min_margin: f64,
    pub binding: String,
    pub regularity: RegularityDefect,
}

/// Checks that `f` is (ε,δ,ρ)-noncritical at `p` with reference chart
/// `g = (|a_1 ·|, …, |a_k ·|)` and witness direction `w`:
/// (1) regularity defect of `f` against `g` on `B(p,ρ)` below δ;
/// (2) `|a_i p| > ρ` and `∠̃ a_i p a_j > π/2 − δ` for `i ≠ j`;
/// (3) `|wp| > ρ` and `∠̃ a_i p w > π/2 + ε` for all `i`.
#[allow(clippy::too_many_arguments)]
pub fn noncritical_check(
    space: &FiniteMetricSpace,
    kappa: Curvature,
    f_values: &[Vec<f64>],
    p: usize,
    anchors: &[usize],
    w: usize,
    epsilon: f64,
    delta: f64,
    rho: f64,
    pair_budget: Option<usize>,
) -> Result<NoncriticalReport> {
    let g = DistanceChart {
        base: p,
        anchors: anchors.to_vec(),
        kappa,
        ell: rho,
        delta,
        domain_radius: rho,
    };
    let region = space.open_ball(p, rho);
    let regularity = almost_regular_defect(space, f_values, &g, &region, pair_budget, 0)?;
    let mut min_margin = delta - regularity.defect;
    let mut binding = String::from("regularity defect on B(p, rho)");
    let mut note = |m: f64, what: String| {
        if m < min_margin {
            min_margin = m;
            binding = what;
        }
    };
    for (i, &a) in anchors.iter().enumerate() {
        note(space.dist(a, p) - rho, format!("|a{i} p| > rho"));
        for (j, &b) in anchors.iter().enumerate().skip(i + 1) {
            let m =
                angle(space, kappa, p, a, b).map_or(f64::NEG_INFINITY, |t| t - (FRAC_PI_2 - delta));
            note(m, format!("angle a{i} p a{j}"));
        }
    }
    note(space.dist(w, p) - rho, "|w p| > rho".into());
    for (i, &a) in anchors.iter().enumerate() {
        let m =
            angle(space, kappa, p, a, w).map_or(f64::NEG_INFINITY, |t| t - (FRAC_PI_2 + epsilon));
        note(m, format!("angle a{i} p w"));
    }
    Ok(NoncriticalReport {
        passed: min_margin > 0.0,
        min_margin,
        binding,
        regularity,
    })
}
