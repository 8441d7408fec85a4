//! Acceptance run: one line per criterion, then the exact-fiber diagnostics.
//! Exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use collapse_lab::experiment::farthest_from_net;
use collapse_lab::fiber::{
    default_link_radius, extract_fiber, fiber_diameter, fiber_packing, intrinsic_ratio,
    strained_subset, volume_continuity, IntrinsicRatio,
};
use collapse_lab::generators::{circle, euclidean_points, product};
use collapse_lab::glue::{anchored_charts, build_submersion, eqcon_report, BlendConfig, GluedMap};
use collapse_lab::metric::{packing_profile, Correspondence, FiniteMetricSpace};
use collapse_lab::model_geom::{comparison_angle, TriangleSides};
use collapse_lab::Curvature;

const EPS: f64 = 0.005;
const FIBER_BASES: usize = 10;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn report(
    lines: &mut Vec<Line>,
    id: usize,
    name: &'static str,
    clock: Instant,
    passed: bool,
    detail: String,
) {
    let seconds = clock.elapsed().as_secs_f64();
    println!(
        "criterion {id:>2} [{}] {name}: {detail} ({seconds:.2} s)",
        if passed { "PASS" } else { "FAIL" }
    );
    lines.push(Line {
        id,
        name,
        passed,
        detail,
        seconds,
    });
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

// Embedded triangles. Each returns (|pq|, |pr|, |qr|, angle at p).

fn dot3(u: [f64; 3], v: [f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

fn cross3(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn norm3(u: [f64; 3]) -> f64 {
    dot3(u, u).sqrt()
}

fn angle3(u: [f64; 3], v: [f64; 3]) -> f64 {
    norm3(cross3(u, v)).atan2(dot3(u, v))
}

fn plane_triangle(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut pt = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0];
    let (p, q, r) = (pt(), pt(), pt());
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], 0.0];
    let (pq, pr, qr) = (sub(q, p), sub(r, p), sub(r, q));
    [norm3(pq), norm3(pr), norm3(qr), angle3(pq, pr)]
}

fn sphere_triangle(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut pt = || {
        let theta: f64 = rng.gen_range(0.0..1.2);
        let phi: f64 = rng.gen_range(0.0..2.0 * PI);
        [
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        ]
    };
    let (p, q, r) = (pt(), pt(), pt());
    let tangent = |x: [f64; 3]| {
        let c = dot3(p, x);
        [x[0] - c * p[0], x[1] - c * p[1], x[2] - c * p[2]]
    };
    [
        angle3(p, q),
        angle3(p, r),
        angle3(q, r),
        angle3(tangent(q), tangent(r)),
    ]
}

fn minkowski(u: [f64; 3], v: [f64; 3]) -> f64 {
    -u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

fn hyperbolic_triangle(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut pt = || {
        let (u, v): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        [(1.0 + u * u + v * v).sqrt(), u, v]
    };
    let (p, q, r) = (pt(), pt(), pt());
    let dist = |a: [f64; 3], b: [f64; 3]| {
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        2.0 * (0.5 * minkowski(d, d).max(0.0).sqrt()).asinh()
    };
    // tangent vectors at p, written in an orthonormal frame of T_p
    let tangent = |x: [f64; 3]| {
        let c = minkowski(p, x);
        [x[0] + c * p[0], x[1] + c * p[1], x[2] + c * p[2]]
    };
    let e1 = {
        let t = tangent([0.0, 1.0, 0.0]);
        let n = minkowski(t, t).sqrt();
        [t[0] / n, t[1] / n, t[2] / n]
    };
    let e2 = {
        let t = tangent([0.0, 0.0, 1.0]);
        let c = minkowski(t, e1);
        let t = [t[0] - c * e1[0], t[1] - c * e1[1], t[2] - c * e1[2]];
        let n = minkowski(t, t).sqrt();
        [t[0] / n, t[1] / n, t[2] / n]
    };
    let frame = |t: [f64; 3]| [minkowski(t, e1), minkowski(t, e2), 0.0];
    [
        dist(p, q),
        dist(p, r),
        dist(q, r),
        angle3(frame(tangent(q)), frame(tangent(r))),
    ]
}

fn criterion_1(lines: &mut Vec<Line>) {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut skipped = 0;
    type Gen = fn(&mut ChaCha8Rng) -> [f64; 4];
    let models: [(f64, Gen); 3] = [
        (0.0, plane_triangle),
        (1.0, sphere_triangle),
        (-1.0, hyperbolic_triangle),
    ];
    for (kappa, make) in models {
        let mut done = 0;
        while done < 1000 {
            let [a, b, c, angle] = make(&mut rng);
            // the embedded angle itself loses digits on slivers
            if a.min(b).min(c) < 0.05 || angle < 0.01 || angle > PI - 0.01 {
                skipped += 1;
                continue;
            }
            done += 1;
            count += 1;
            match comparison_angle(Curvature::new(kappa), TriangleSides::new(a, b, c)) {
                Some(t) => worst = worst.max((t - angle).abs()),
                None => worst = f64::INFINITY,
            }
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    report(
        lines,
        1,
        "model-geometry oracle",
        clock,
        worst <= 1e-9 && seconds < 1.0,
        format!("max |angle error| {worst:.2e} over {count} triangles ({skipped} slivers redrawn), tol 1e-9, limit 1 s"),
    );
}

/// Largest ν-discrete subset by plain backtracking over all subsets.
fn brute_force_beta(space: &FiniteMetricSpace, nu: f64) -> usize {
    fn go(
        space: &FiniteMetricSpace,
        nu: f64,
        next: usize,
        chosen: &mut Vec<usize>,
        best: &mut usize,
    ) {
        *best = (*best).max(chosen.len());
        for i in next..space.len() {
            if chosen.len() + (space.len() - i) <= *best {
                return;
            }
            if chosen.iter().all(|&c| space.dist(c, i) >= nu) {
                chosen.push(i);
                go(space, nu, i + 1, chosen, best);
                chosen.pop();
            }
        }
    }
    let mut best = 0;
    go(space, nu, 0, &mut Vec::new(), &mut best);
    best
}

fn criterion_2(lines: &mut Vec<Line>) {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut checks = 0;
    for _ in 0..50 {
        let n = rng.gen_range(4..=20);
        let dim = rng.gen_range(1..=3);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let s = euclidean_points(&pts).unwrap();
        // scales straddling every pairwise distance
        let mut grid: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .flat_map(|(i, j)| {
                let d = s.dist(i, j);
                [0.5 * d, d, 0.999 * d]
            })
            .filter(|&v| v > 0.0)
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let profile = packing_profile(&s, 1.0, &grid, None).unwrap();
        for (&nu, &greedy) in grid.iter().zip(&profile.counts) {
            checks += 1;
            if !(brute_force_beta(&s, 2.0 * nu) <= greedy && greedy <= brute_force_beta(&s, nu)) {
                violations += 1;
            }
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    report(
        lines,
        2,
        "packing bracket",
        clock,
        violations == 0 && seconds < 30.0,
        format!("{violations} violations of β(2ν) ≤ β̂(ν) ≤ β(ν) over {checks} (space, ν) checks, limit 30 s"),
    );
}

fn criterion_3(lines: &mut Vec<Line>) {
    let clock = Instant::now();
    let c = circle(600, 1.0).unwrap();
    let corr = Correspondence::identity(&c);
    let map = build_submersion(
        &c,
        &c,
        &corr,
        Curvature::FLAT,
        1,
        &BlendConfig::new(1.0, 0.3),
    )
    .unwrap();
    let bound = 1.0 * 0.3 * 0.3;
    let moved = (0..c.len())
        .map(|x| c.dist(map.eval(x), x))
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in 0..c.len() {
        for y in x + 1..c.len() {
            let d = c.dist(x, y);
            if (0.1..=1.0).contains(&d) {
                let q = c.dist(map.eval(x), map.eval(y)) / d;
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    report(
        lines,
        3,
        "identity reconstruction",
        clock,
        moved <= bound && lo >= 0.85 && hi <= 1.15 && seconds < 60.0,
        format!("max d(f x, x) {moved:.4} (≤ {bound:.4}); pair ratio in [{lo:.4}, {hi:.4}] (band [0.85, 1.15]), limit 60 s"),
    );
}

struct Collapse {
    m: FiniteMetricSpace,
    x: FiniteMetricSpace,
    corr: Correspondence,
    map: GluedMap,
    config: BlendConfig,
}

fn collapse(nb: usize, nf: usize) -> Collapse {
    let x = circle(nb, 1.0).unwrap();
    let g = product(&x, &circle(nf, EPS).unwrap()).unwrap();
    let forward = g.base_index.unwrap();
    let backward: Vec<usize> = (0..nb).map(|a| a * nf).collect();
    let corr = Correspondence::new(&g.space, &x, forward, backward).unwrap();
    let config = BlendConfig::new(1.0, 0.4);
    let map = build_submersion(&g.space, &x, &corr, Curvature::FLAT, 1, &config).unwrap();
    Collapse {
        m: g.space,
        x,
        corr,
        map,
        config,
    }
}

fn criterion_4(lines: &mut Vec<Line>) -> Collapse {
    let clock = Instant::now();
    let run = collapse(200, 20);
    let closeness = (0..run.m.len())
        .map(|z| run.x.dist(run.map.eval(z), run.corr.forward[z]))
        .fold(0.0, f64::max);
    let mu = run.corr.mu_hat();
    let seconds = clock.elapsed().as_secs_f64();
    let rss = peak_rss_bytes();
    let rss_ok = rss.is_none_or(|b| b < 1 << 30);
    report(
        lines,
        4,
        "product collapse end-to-end",
        clock,
        closeness <= 0.1 && mu <= PI * EPS + 1e-12 && seconds < 300.0 && rss_ok,
        format!(
            "max d_X(f x, proj x) {closeness:.4} (≤ 0.1); μ̂ {mu:.5} (≤ {:.5}); r = {:.3}; peak RSS {}, limits 300 s / 1 GiB",
            PI * EPS,
            run.config.r(),
            rss.map_or("unavailable".into(), |b| format!("{:.0} MiB", b as f64 / (1 << 20) as f64)),
        ),
    );
    run
}

/// Independent recomputation of the eqcon residuals over every eligible pair.
fn residual_quantiles(run: &Collapse, base: usize) -> (usize, f64, f64) {
    let (phi, phi_hat) =
        anchored_charts(&run.x, &run.corr, run.map.kappa, 1, &run.config, base).unwrap();
    let r = run.config.r();
    let min_sep = 5.0 * run.m.resolution();
    let region: Vec<usize> = (0..run.m.len())
        .filter(|&z| run.m.dist(phi_hat.base, z) < r)
        .collect();
    let mut values = Vec::new();
    for (i, &a) in region.iter().enumerate() {
        for &b in &region[i + 1..] {
            let d = run.m.dist(a, b);
            if d < min_sep || d == 0.0 {
                continue;
            }
            let (fa, fb) = (run.map.eval(a), run.map.eval(b));
            let s: f64 = phi
                .anchors
                .iter()
                .zip(&phi_hat.anchors)
                .map(|(&u, &v)| {
                    let lhs = run.x.dist(u, fa) - run.x.dist(u, fb);
                    let rhs = run.m.dist(v, a) - run.m.dist(v, b);
                    (lhs - rhs).powi(2)
                })
                .sum();
            values.push(s.sqrt() / d);
        }
    }
    values.sort_by(f64::total_cmp);
    let rank =
        |q: f64| values[((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1];
    (values.len(), rank(0.5), rank(0.95))
}

fn criterion_5(lines: &mut Vec<Line>, run: &Collapse) -> f64 {
    let clock = Instant::now();
    let base = farthest_from_net(&run.map, &run.x);
    let (phi, phi_hat) =
        anchored_charts(&run.x, &run.corr, run.map.kappa, 1, &run.config, base).unwrap();
    let rep = eqcon_report(
        &run.map,
        &run.m,
        &run.x,
        &phi,
        &phi_hat,
        5.0 * run.m.resolution(),
        1_000_000,
        5,
    )
    .unwrap();
    let (pairs, median, p95) = residual_quantiles(run, base);
    let agree = pairs == rep.pairs && median == rep.median && p95 == rep.p95;
    report(
        lines,
        5,
        "chart-compatibility residual",
        clock,
        p95 <= 0.3 && median <= 0.15 && agree,
        format!(
            "p95 {p95:.5} (≤ 0.3), median {median:.5} (≤ 0.15) over {pairs} pairs at base {base}; library report {}",
            if agree { "agrees" } else { "disagrees" }
        ),
    );
    median
}

struct FiberStats {
    empty: usize,
    disconnected: usize,
    max_diameter: f64,
    max_ratio: Option<f64>,
    dims: Vec<Option<f64>>,
    volumes: Vec<f64>,
    upper_ok: bool,
    c_acc_used: f64,
    ratio_band: (f64, f64),
    strained: (f64, f64),
}

fn fiber_stats(run: &Collapse, tau: f64) -> FiberStats {
    let bases: Vec<usize> = (0..FIBER_BASES)
        .map(|i| i * run.x.len() / FIBER_BASES)
        .collect();
    let mut st = FiberStats {
        empty: 0,
        disconnected: 0,
        max_diameter: 0.0,
        max_ratio: Some(1.0),
        dims: Vec::new(),
        volumes: Vec::new(),
        upper_ok: true,
        c_acc_used: 0.0,
        ratio_band: (f64::NAN, f64::NAN),
        strained: (f64::NAN, f64::NAN),
    };
    for &b in &bases {
        let Ok(f) = extract_fiber(&run.map, &run.x, b, tau) else {
            st.empty += 1;
            continue;
        };
        let diam = fiber_diameter(&run.m, &f).unwrap();
        st.max_diameter = st.max_diameter.max(diam);
        let h = default_link_radius(&run.m, &f).unwrap();
        match intrinsic_ratio(&run.m, &f, Some(h)).unwrap() {
            IntrinsicRatio::Connected { ratio, .. } => {
                st.max_ratio = st.max_ratio.map(|m| m.max(ratio))
            }
            IntrinsicRatio::Disconnected { .. } => {
                st.disconnected += 1;
                st.max_ratio = None;
            }
        }
        match fiber_packing(&run.m, &f, 1.0, None, 5.0) {
            Ok(pk) => {
                st.dims.push(pk.profile.dimension_estimate);
                st.volumes.push(pk.volume_estimate);
                st.upper_ok &= pk.within_upper_bound;
                st.c_acc_used = st.c_acc_used.max(pk.volume_estimate / diam);
            }
            Err(_) => {
                st.dims.push(None);
                st.upper_ok = false;
            }
        }
    }
    if st.empty == 0 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &bases {
            for &q in &bases {
                if p != q {
                    let r = volume_continuity(&run.map, &run.m, &run.x, p, q, 1.0, tau, None)
                        .unwrap()
                        .ratio;
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
        }
        st.ratio_band = (lo, hi);
        let f = extract_fiber(&run.map, &run.x, bases[0], tau).unwrap();
        let rho = 0.25 * fiber_diameter(&run.m, &f).unwrap();
        let one = strained_subset(&run.m, run.map.kappa, &f, 1, 0.3, rho)
            .unwrap()
            .fraction;
        let two = strained_subset(&run.m, run.map.kappa, &f, 2, 0.3, rho)
            .unwrap()
            .fraction;
        st.strained = (one, two);
    }
    st
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |v| format!("{v:.4}"))
}

fn dim_range(dims: &[Option<f64>]) -> Option<(f64, f64)> {
    let vals: Option<Vec<f64>> = dims.iter().copied().collect();
    let vals = vals.filter(|v| !v.is_empty())?;
    Some((
        vals.iter().copied().fold(f64::INFINITY, f64::min),
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}

fn fiber_criteria(lines: &mut Vec<Line>, run: &Collapse) {
    let clock = Instant::now();
    let tau = 2.0 * run.x.resolution();
    let st = fiber_stats(run, tau);
    let ratio_ok = st.max_ratio.is_some_and(|r| r <= 1.2);
    report(
        lines,
        6,
        "fiber geometry",
        clock,
        st.empty == 0 && st.max_diameter <= 0.1 && ratio_ok && st.disconnected == 0,
        format!(
            "τ = {tau:.4}: {} empty, max diameter {:.4} (≤ 0.1), max intrinsic ratio {} (≤ 1.2), {} disconnected",
            st.empty,
            st.max_diameter,
            fmt_opt(st.max_ratio),
            st.disconnected
        ),
    );
    summarize_volume(lines, &st, Instant::now(), "");
}

fn summarize_volume(lines: &mut Vec<Line>, st: &FiberStats, clock: Instant, tag: &str) {
    let target = 2.0 * PI * EPS;
    let dims = dim_range(&st.dims);
    let vlo = st.volumes.iter().copied().fold(f64::INFINITY, f64::min);
    let vhi = st.volumes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dim_ok = dims.is_some_and(|(a, b)| a >= 0.7 && b <= 1.3);
    let vol_ok = !st.volumes.is_empty() && vlo >= 0.5 * target && vhi <= 1.3 * target;
    let detail7 = format!(
        "{tag}dimension estimates in {} (band [0.7, 1.3]); v_1 in [{vlo:.4}, {vhi:.4}] (band [{:.4}, {:.4}]); v_1/diam ≤ {:.3} (C_acc = 5)",
        dims.map_or("none".into(), |(a, b)| format!("[{a:.3}, {b:.3}]")),
        0.5 * target,
        1.3 * target,
        st.c_acc_used
    );
    let (rlo, rhi) = st.ratio_band;
    let detail8 = format!("{tag}pairwise v_1 ratios in [{rlo:.4}, {rhi:.4}] (band [0.75, 1.33])");
    let (one, two) = st.strained;
    let detail9 = format!(
        "{tag}strained fraction m=1: {one:.3} (≥ 0.8), m=2: {two:.3} (≤ 0.1), θ = 0.3, ρ = diam/4"
    );
    let ok7 = dim_ok && vol_ok && st.upper_ok;
    let ok8 = rlo >= 0.75 && rhi <= 1.33;
    let ok9 = one >= 0.8 && two <= 0.1;
    if tag.is_empty() {
        report(lines, 7, "fiber dimension and volume", clock, ok7, detail7);
        report(lines, 8, "volume continuity", clock, ok8, detail8);
        report(lines, 9, "strained subset", clock, ok9, detail9);
    } else {
        let mark = |b: bool| if b { "pass" } else { "fail" };
        println!(
            "  info 6 ({}): {} empty, max diameter {:.4}, max intrinsic ratio {}, {} disconnected",
            mark(
                st.empty == 0
                    && st.max_diameter <= 0.1
                    && st.max_ratio.is_some_and(|r| r <= 1.2)
                    && st.disconnected == 0
            ),
            st.empty,
            st.max_diameter,
            fmt_opt(st.max_ratio),
            st.disconnected
        );
        println!("  info 7 ({}): {detail7}", mark(ok7));
        println!("  info 8 ({}): {detail8}", mark(ok8));
        println!("  info 9 ({}): {detail9}", mark(ok9));
    }
}

fn criterion_10(lines: &mut Vec<Line>, run: &Collapse) {
    let clock = Instant::now();
    let again = collapse(200, 20);
    let (a, b) = (run.map.to_json().unwrap(), again.map.to_json().unwrap());
    report(
        lines,
        10,
        "determinism",
        clock,
        a == b,
        format!(
            "glued-map JSON {} ({} bytes)",
            if a == b { "byte-identical" } else { "differs" },
            a.len()
        ),
    );
}

fn criterion_11(lines: &mut Vec<Line>, coarse_median: f64) {
    let clock = Instant::now();
    let fine = collapse(400, 20);
    let base = farthest_from_net(&fine.map, &fine.x);
    let (pairs, median, _) = residual_quantiles(&fine, base);
    report(
        lines,
        11,
        "refinement trend",
        clock,
        median <= coarse_median,
        format!(
            "median {median:.7} at |M| = {}, |X| = {} ({pairs} pairs) vs {coarse_median:.7} at |M| = 4000, |X| = 200",
            fine.m.len(),
            fine.x.len()
        ),
    );
}

fn main() {
    let mut lines = Vec::new();
    criterion_1(&mut lines);
    criterion_2(&mut lines);
    criterion_3(&mut lines);
    let run = criterion_4(&mut lines);
    let median = criterion_5(&mut lines, &run);
    fiber_criteria(&mut lines, &run);
    criterion_10(&mut lines, &run);
    criterion_11(&mut lines, median);

    println!("exact fibers (τ = 0), for comparison with criteria 6-9:");
    let exact = fiber_stats(&run, 0.0);
    summarize_volume(&mut lines, &exact, Instant::now(), "τ = 0: ");

    lines.sort_by_key(|l| l.id);
    let failed: Vec<&Line> = lines.iter().filter(|l| !l.passed).collect();
    let total: f64 = lines.iter().map(|l| l.seconds).sum();
    println!(
        "acceptance: {} of {} criteria passed in {total:.1} s",
        lines.len() - failed.len(),
        lines.len()
    );
    if !failed.is_empty() {
        for l in &failed {
            println!("  failed {}: {} ({})", l.id, l.name, l.detail);
        }
        std::process::exit(1);
    }
}
