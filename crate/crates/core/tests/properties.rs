use std::f64::consts::PI;

use proptest::prelude::*;

use collapse_lab::fiber::{extract_fiber, fiber_packing, intrinsic_ratio, Fiber};
use collapse_lab::generators::{circle, product, SpaceSpec};
use collapse_lab::glue::{build_submersion, chi, BlendConfig};
use collapse_lab::metric::io::{read_text, write_binary, write_text};
use collapse_lab::metric::{
    exact_packing, intrinsic_metric, packing_count, validate, Correspondence, FiniteMetricSpace,
    IntrinsicMetric, PackingMode,
};
use collapse_lab::strainers::{
    almost_regular_defect, chart_eval, chart_inverse, check_strainer, find_strainer, DistanceChart,
};
use collapse_lab::Curvature;

fn cloud(n: usize, dim: usize, seed: u64) -> FiniteMetricSpace {
    SpaceSpec::EuclideanCloud {
        n,
        dim,
        extent: 1.0,
        seed,
    }
    .generate()
    .unwrap()
    .space
}

fn collapse(
    nb: usize,
    nf: usize,
    eps: f64,
) -> (FiniteMetricSpace, FiniteMetricSpace, Correspondence) {
    let base = circle(nb, 1.0).unwrap();
    let g = product(&base, &circle(nf, eps).unwrap()).unwrap();
    let forward = g.base_index.unwrap();
    let backward: Vec<usize> = (0..nb).map(|a| a * nf).collect();
    let corr = Correspondence::new(&g.space, &base, forward, backward).unwrap();
    (g.space, base, corr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_packing_is_bracketed(n in 3usize..16, seed in 0u64..1000, nu in 0.05f64..0.8) {
        let s = cloud(n, 2, seed);
        let greedy = packing_count(&s, nu, PackingMode::Greedy).unwrap().count;
        prop_assert!(exact_packing(&s, 2.0 * nu).unwrap() <= greedy);
        prop_assert!(greedy <= exact_packing(&s, nu).unwrap());
    }

    #[test]
    fn greedy_packing_is_monotone(n in 3usize..40, seed in 0u64..1000, a in 0.02f64..1.0, b in 0.02f64..1.0) {
        let s = cloud(n, 3, seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c_lo = packing_count(&s, lo, PackingMode::Greedy).unwrap().count;
        let c_hi = packing_count(&s, hi, PackingMode::Greedy).unwrap().count;
        prop_assert!(c_lo >= c_hi);
    }

    #[test]
    fn intrinsic_dominates_ambient(n in 3usize..30, seed in 0u64..1000, h in 0.1f64..1.5) {
        let s = cloud(n, 2, seed);
        let subset: Vec<usize> = (0..n).collect();
        if let IntrinsicMetric::Connected { table, .. } = intrinsic_metric(&s, &subset, h).unwrap() {
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(table[i * n + j] >= s.dist(i, j) - 1e-12);
                }
            }
        }
        match intrinsic_metric(&s, &subset, s.diameter()).unwrap() {
            IntrinsicMetric::Connected { table, .. } => {
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!((table[i * n + j] - s.dist(i, j)).abs() < 1e-12);
                    }
                }
            }
            IntrinsicMetric::Disconnected { .. } => prop_assert!(false, "complete graph reported disconnected"),
        }
    }

    #[test]
    fn constructions_keep_metric_axioms(n in 3usize..20, m in 2usize..8, seed in 0u64..1000, lambda in 0.1f64..10.0) {
        let s = cloud(n, 2, seed);
        let t = circle(m, 0.3).unwrap();
        let keep: Vec<usize> = (0..n).step_by(2).collect();
        for space in [s.restrict(&keep).unwrap(), s.product(&t).unwrap(), s.scale(lambda).unwrap()] {
            prop_assert!(validate(&space, 1e-9 * space.diameter()).accepted);
        }
    }

    #[test]
    fn strainer_search_agrees_with_check(p in 0usize..120, delta in 0.15f64..0.6) {
        let s = circle(120, 1.0).unwrap();
        let st = find_strainer(&s, Curvature::FLAT, p, 1, delta, 0.5, None).unwrap();
        let check = check_strainer(&s, Curvature::FLAT, p, &st.pairs, delta);
        prop_assert!(check.passed);
        let star = check.certified_delta;
        prop_assert!(check_strainer(&s, Curvature::FLAT, p, &st.pairs, star).passed);
        if star > 1e-6 {
            prop_assert!(!check_strainer(&s, Curvature::FLAT, p, &st.pairs, star - 1e-6).passed);
        }
    }

    #[test]
    fn charts_are_lipschitz(n in 5usize..40, seed in 0u64..1000, k in 1usize..4) {
        let s = cloud(n, 3, seed);
        let anchors: Vec<usize> = (1..=k).collect();
        let chart = DistanceChart::new(0, anchors, Curvature::FLAT, 1.0, 0.5);
        for x in 0..n {
            for y in 0..n {
                let u = chart_eval(&s, &chart, x);
                let v = chart_eval(&s, &chart, y);
                for i in 0..k {
                    prop_assert!((u[i] - v[i]).abs() <= s.dist(x, y) + 1e-12);
                }
                let norm: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(norm <= (k as f64).sqrt() * s.dist(x, y) + 1e-12);
            }
        }
    }

    #[test]
    fn chart_inverse_recovers_images(n in 5usize..40, seed in 0u64..1000, x in 0usize..40, radius in 0.1f64..2.0) {
        let s = cloud(n, 2, seed);
        let x = x % n;
        let chart = DistanceChart::new(0, vec![1, 2], Curvature::FLAT, 1.0, 0.5);
        if s.dist(0, x) <= radius {
            let v = chart_eval(&s, &chart, x);
            let (y, res) = chart_inverse(&s, &chart, &v, 0, radius);
            prop_assert_eq!(res, 0.0);
            prop_assert_eq!(chart_eval(&s, &chart, y), v);
        }
    }

    #[test]
    fn regularity_defect_ignores_constant_shift(seed in 0u64..1000, c0 in -5.0f64..5.0, c1 in -5.0f64..5.0) {
        let s = cloud(30, 2, seed);
        let g = DistanceChart::new(0, vec![1, 2], Curvature::FLAT, 1.0, 0.5);
        let f: Vec<Vec<f64>> = (0..30).map(|x| vec![s.dist(3, x), 0.5 * s.dist(4, x)]).collect();
        let shifted: Vec<Vec<f64>> = f.iter().map(|v| vec![v[0] + c0, v[1] + c1]).collect();
        let region: Vec<usize> = (0..30).collect();
        let a = almost_regular_defect(&s, &f, &g, &region, None, 0).unwrap().defect;
        let b = almost_regular_defect(&s, &shifted, &g, &region, None, 0).unwrap().defect;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn fiber_tolerance_is_monotone(p in 0usize..60, t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
        let (m, x, corr) = collapse(60, 6, 0.02);
        let map = build_submersion(&m, &x, &corr, Curvature::FLAT, 1, &BlendConfig::new(1.0, 0.4)).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if let Ok(small) = extract_fiber(&map, &x, p, lo) {
            let big = extract_fiber(&map, &x, p, hi).unwrap();
            prop_assert!(small.members.iter().all(|z| big.members.contains(z)));
        }
    }

    #[test]
    fn intrinsic_ratio_at_least_one(n in 3usize..30, seed in 0u64..1000, h in 0.2f64..2.0) {
        let s = cloud(n, 2, seed);
        let fiber = Fiber { base: 0, tau: 0.0, members: (0..n).collect() };
        if let Some(r) = intrinsic_ratio(&s, &fiber, Some(h)).unwrap().ratio() {
            prop_assert!(r >= 1.0);
        }
    }

    #[test]
    fn volume_monotone_under_subset(n in 4usize..40, seed in 0u64..1000, mask in any::<u64>(), m in 0.0f64..3.0) {
        let s = cloud(n, 2, seed);
        let all = Fiber { base: 0, tau: 0.0, members: (0..n).collect() };
        let mut part: Vec<usize> = (0..n).filter(|i| mask >> (i % 64) & 1 == 1).collect();
        if part.is_empty() {
            part.push(0);
        }
        let sub = Fiber { base: 0, tau: 0.0, members: part };
        let grid = [0.05, 0.1, 0.2, 0.4, 0.8];
        let v_all = fiber_packing(&s, &all, m, Some(&grid), 5.0).unwrap().volume_estimate;
        let v_sub = fiber_packing(&s, &sub, m, Some(&grid), 5.0).unwrap().volume_estimate;
        // greedy v_m is not monotone under subsets; exact packing numbers are,
        // and they bound both greedy estimates
        let exact_bound = grid
            .iter()
            .map(|&nu| nu.powf(m) * packing_count(&s, nu, PackingMode::Exact).map_or(n, |c| c.count) as f64)
            .fold(0.0, f64::max);
        prop_assert!(v_sub <= exact_bound + 1e-12);
        prop_assert!(v_all <= exact_bound + 1e-12);
        if n <= 24 {
            let restricted = s.restrict(&sub.members).unwrap();
            for &nu in &grid {
                prop_assert!(exact_packing(&restricted, nu).unwrap() <= exact_packing(&s, nu).unwrap());
            }
        }
    }

    #[test]
    fn blend_is_local(delta in 0.3f64..0.45, net_seed in 0usize..60) {
        let (m, x, corr) = collapse(60, 6, 0.01);
        let mut cfg = BlendConfig::new(1.0, delta);
        cfg.net_seed = net_seed;
        let map = build_submersion(&m, &x, &corr, Curvature::FLAT, 1, &cfg).unwrap();
        let r = map.summary.r;
        for pt in 0..m.len() {
            let j = map.diagnostics.stage[pt].unwrap();
            let chart = &map.charts[j];
            prop_assert!(x.dist(map.eval(pt), chart.net_point) <= map.summary.search_radius);
            prop_assert!(x.dist(map.eval(pt), chart.net_point) <= 10.0 * r);
            let t = m.dist(chart.lifted_base, pt) / r;
            prop_assert_eq!(map.diagnostics.weight[pt], chi(t));
            if !map.diagnostics.fallback[pt] {
                prop_assert!(t < 2.0);
            }
        }
        prop_assert!(map.summary.c_run.is_none_or(|c| c <= 10.0));
    }

    #[test]
    fn generators_validate(n in 2usize..40, radius in 0.1f64..5.0, seed in 0u64..100, dim in 1usize..4) {
        let specs = [
            SpaceSpec::Circle { n, radius },
            SpaceSpec::Sphere2 { n, radius, seed: None },
            SpaceSpec::Sphere2 { n, radius, seed: Some(seed) },
            SpaceSpec::FlatTorus { n1: 2 + n % 7, n2: 2 + n % 5, basis: [[radius, 0.0], [0.3 * radius, radius]] },
            SpaceSpec::EuclideanCloud { n, dim, extent: radius, seed },
            SpaceSpec::GraphGeodesicCloud { n: n + 10, dim, extent: radius, neighbors: n + 9, seed },
        ];
        for spec in specs {
            let s = spec.generate().unwrap().space;
            prop_assert!(validate(&s, 1e-9 * s.diameter()).accepted, "{spec:?}");
        }
    }

    #[test]
    fn binary_files_are_deterministic(n in 2usize..30, seed in 0u64..100) {
        let spec = SpaceSpec::Sphere2 { n, radius: 1.0, seed: Some(seed) };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_binary(&spec.generate().unwrap().space, &mut a).unwrap();
        write_binary(&spec.generate().unwrap().space, &mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip_is_exact(n in 2usize..20, seed in 0u64..100) {
        let s = cloud(n, 3, seed);
        let mut buf = Vec::new();
        write_text(&s, &mut buf).unwrap();
        let back = read_text(&buf[..]).unwrap();
        prop_assert_eq!(back.to_table(), s.to_table());
    }
}

#[test]
fn product_projection_distortion_is_fiber_diameter() {
    for (nb, nf, eps) in [(30, 8, 0.05), (50, 20, 0.005), (24, 6, 0.2)] {
        let (_, _, corr) = collapse(nb, nf, eps);
        assert!(
            corr.distortion <= PI * eps + 1e-12,
            "{nb} {nf} {eps}: {}",
            corr.distortion
        );
    }
}
