//! End-to-end experiments: generate `M` and `X`, glue the map, measure it
//! and its fibers, and collect everything into one JSON report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{
    default_tau, extract_fiber, fiber_packing, fiber_report, strained_subset, FiberOptions,
    FiberReport,
};
use crate::generators::SpaceSpec;
use crate::glue::{
    anchored_charts, build_submersion, eqcon_report, submersion_defect_report, BlendConfig,
    BuildSummary, GluedMap, ResidualReport,
};
use crate::metric::{default_grid, Correspondence, CorrespondenceReport, FiniteMetricSpace};
use crate::model_geom::Curvature;

pub const SCHEMA: &str = "collapse-lab/1";

/// How points of `M` and `X` are matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrespondenceSpec {
    /// `M = X`.
    Identity,
    /// `M` is a product whose base factor is `X`; project onto the base and
    /// lift to the first point of each column.
    Projection,
    /// JSON file `{"forward": [...], "backward": [...]}`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub pair_budget: usize,
    /// Smallest pair separation, in meshes of `M`.
    pub min_sep_meshes: f64,
    /// Base point in `X` of the eqcon chart; the point farthest from the net
    /// when absent.
    pub eqcon_base: Option<usize>,
    /// Fiber tolerance of the submersion defect scan.
    pub defect_tau: f64,
    /// Largest pair separation of the defect scan; `r` when absent.
    pub defect_max_sep: Option<f64>,
    /// Separation window of the pair-distortion check.
    pub distortion_window: [f64; 2],
    /// Build twice and compare the map JSON.
    pub repeat_build: bool,
    /// Rerun build and eqcon with doubled sample counts.
    pub refinement: bool,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            pair_budget: 100_000,
            min_sep_meshes: 5.0,
            eqcon_base: None,
            defect_tau: 0.0,
            defect_max_sep: None,
            distortion_window: [0.1, 1.0],
            repeat_build: false,
            refinement: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSettings {
    /// Number of evenly spread base points; 0 skips the fiber stage.
    pub count: usize,
    /// Fiber tolerance; twice the mesh of `X` when absent.
    pub tau: Option<f64>,
    /// Expected fiber dimension `n − k`.
    pub dim: usize,
    pub link_radius: Option<f64>,
    pub c_acc: f64,
    pub theta: f64,
    /// Strainer length; a quarter of the fiber diameter when absent.
    pub rho: Option<f64>,
    /// Base point of the strained-subset check; the first sampled base when absent.
    pub strained_base: Option<usize>,
}

impl Default for FiberSettings {
    fn default() -> Self {
        FiberSettings {
            count: 10,
            tau: None,
            dim: 1,
            link_radius: None,
            c_acc: 5.0,
            theta: 0.3,
            rho: None,
            strained_base: None,
        }
    }
}

/// Pass/fail thresholds; absent ones are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Bound on `max_x d_X(f(x), corr(x))`.
    pub closeness: Option<f64>,
    /// Band for `|f x f y| / |xy|` over the distortion window.
    pub pair_distortion: Option<[f64; 2]>,
    pub eqcon_p95: Option<f64>,
    pub eqcon_median: Option<f64>,
    pub fiber_diameter: Option<f64>,
    pub intrinsic_ratio: Option<f64>,
    pub dimension: Option<[f64; 2]>,
    pub fiber_volume: Option<[f64; 2]>,
    pub volume_ratio: Option<[f64; 2]>,
    /// Lower bound on the strained fraction at `m = dim`.
    pub strained_low: Option<f64>,
    /// Upper bound on the strained fraction at `m = dim + 1`.
    pub strained_high: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<PathBuf>,
    pub map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kappa: f64,
    pub k: usize,
    pub m: SpaceSpec,
    pub x: SpaceSpec,
    pub correspondence: CorrespondenceSpec,
    pub blend: BlendConfig,
    #[serde(default)]
    pub reports: ReportSettings,
    #[serde(default)]
    pub fibers: FiberSettings,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if self.k == 0 {
            return bad("k");
        }
        if self.reports.pair_budget == 0 {
            return bad("reports.pair_budget");
        }
        if !(self.reports.min_sep_meshes >= 0.0) || !(self.reports.defect_tau >= 0.0) {
            return Err(Error::Config(
                "separations and tolerances must be nonnegative".into(),
            ));
        }
        if !(self.fibers.c_acc > 0.0) || !(self.fibers.theta > 0.0) {
            return bad("fibers.c_acc and fibers.theta");
        }
        let t = &self.thresholds;
        let singles = [
            t.closeness,
            t.eqcon_p95,
            t.eqcon_median,
            t.fiber_diameter,
            t.intrinsic_ratio,
            t.strained_low,
            t.strained_high,
        ];
        let bands = [
            t.pair_distortion,
            t.dimension,
            t.fiber_volume,
            t.volume_ratio,
            Some(self.reports.distortion_window),
        ];
        if singles.iter().flatten().any(|v| !(*v > 0.0))
            || bands
                .iter()
                .flatten()
                .any(|[lo, hi]| !(*lo > 0.0 && lo <= hi))
        {
            return Err(Error::Config(
                "thresholds must be positive and bands ordered".into(),
            ));
        }
        Ok(())
    }
}

/// Generated spaces and their correspondence.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub m: FiniteMetricSpace,
    pub x: FiniteMetricSpace,
    pub corr: Correspondence,
}

#[derive(Debug, Deserialize)]
struct CorrespondenceFile {
    forward: Vec<usize>,
    backward: Vec<usize>,
}

pub fn prepare(
    m_spec: &SpaceSpec,
    x_spec: &SpaceSpec,
    corr: &CorrespondenceSpec,
) -> Result<Prepared> {
    let gm = m_spec.generate()?;
    let x = x_spec.generate()?.space;
    let m = gm.space;
    let corr = match corr {
        CorrespondenceSpec::Identity => {
            if m != x {
                return Err(Error::Config("identity correspondence needs M = X".into()));
            }
            Correspondence::identity(&m)
        }
        CorrespondenceSpec::Projection => {
            let base = gm.base_index.ok_or_else(|| {
                Error::Config("projection correspondence needs a product M".into())
            })?;
            let mut backward = vec![usize::MAX; x.len()];
            for (z, &a) in base.iter().enumerate().rev() {
                if a >= x.len() {
                    return Err(Error::Config(format!(
                        "base factor of M has more points than X ({})",
                        x.len()
                    )));
                }
                backward[a] = z;
            }
            if backward.contains(&usize::MAX) {
                return Err(Error::Config(
                    "base factor of M has fewer points than X".into(),
                ));
            }
            Correspondence::new(&m, &x, base, backward)?
        }
        CorrespondenceSpec::File { path } => {
            let f: CorrespondenceFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            Correspondence::new(&m, &x, f.forward, f.backward)?
        }
    };
    Ok(Prepared { m, x, corr })
}

/// Point of `X` farthest from the net of the map; ties go to the lowest index.
pub fn farthest_from_net(map: &GluedMap, x: &FiniteMetricSpace) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..x.len() {
        let d = x.dist_to_set(a, &map.net.members);
        if d > best.1 {
            best = (a, d);
        }
    }
    best.0
}

/// `n` base points spread evenly over the index range of `X`.
pub fn spread_bases(x: &FiniteMetricSpace, n: usize) -> Vec<usize> {
    let len = x.len();
    let n = n.min(len);
    (0..n).map(|i| i * len / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub passed: bool,
    pub observed: Option<f64>,
    pub threshold: String,
}

impl Flag {
    fn at_most(observed: Option<f64>, bound: f64) -> Self {
        Flag {
            passed: observed.is_some_and(|v| v <= bound),
            observed,
            threshold: format!("<= {bound}"),
        }
    }

    fn at_least(observed: Option<f64>, bound: f64) -> Self {
        Flag {
            passed: observed.is_some_and(|v| v >= bound),
            observed,
            threshold: format!(">= {bound}"),
        }
    }

    fn within(lo_obs: Option<f64>, hi_obs: Option<f64>, [lo, hi]: [f64; 2]) -> Self {
        let passed = matches!((lo_obs, hi_obs), (Some(a), Some(b)) if a >= lo && b <= hi);
        Flag {
            passed,
            observed: if passed {
                hi_obs
            } else {
                worst_of(lo_obs, hi_obs, lo, hi)
            },
            threshold: format!("in [{lo}, {hi}]"),
        }
    }
}

fn worst_of(lo_obs: Option<f64>, hi_obs: Option<f64>, lo: f64, hi: f64) -> Option<f64> {
    match (lo_obs, hi_obs) {
        (Some(a), _) if a < lo => Some(a),
        (_, Some(b)) if b > hi => Some(b),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub summary: BuildSummary,
    pub correspondence: CorrespondenceReport,
    pub n_m: usize,
    pub n_x: usize,
    pub mesh_m: f64,
    /// Range of `|f x f y| / |xy|` over the distortion window.
    pub pair_ratio: Option<[f64; 2]>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqconSection {
    pub base: usize,
    pub lifted_base: usize,
    pub report: ResidualReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberEntry {
    pub base: usize,
    pub report: Option<FiberReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainedSection {
    pub base: usize,
    pub rho: f64,
    pub theta: f64,
    /// Strained fraction at `m = dim`.
    pub low: f64,
    /// Strained fraction at `m = dim + 1`.
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuitySection {
    /// Common scale grid of every fiber profile.
    pub grid: Vec<f64>,
    pub bases: Vec<usize>,
    pub volumes: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSection {
    pub n_m: usize,
    pub n_x: usize,
    pub median: f64,
    pub p95: f64,
    pub base_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub config_echo: ExperimentConfig,
    pub build_diagnostics: Option<BuildDiagnostics>,
    pub eqcon: Option<EqconSection>,
    pub submersion_defect: Option<ResidualReport>,
    pub fibers: Vec<FiberEntry>,
    pub fiber_tau: Option<f64>,
    pub volume_continuity: Option<ContinuitySection>,
    pub strained: Option<StrainedSection>,
    pub refinement: Option<RefinementSection>,
    pub pass_flags: BTreeMap<String, Flag>,
    pub failures: Vec<StageFailure>,
    pub all_passed: bool,
}

impl ReportDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub struct Outcome {
    pub report: ReportDocument,
    pub map: Option<GluedMap>,
    pub prepared: Option<Prepared>,
}

fn pair_ratio_range(
    m: &FiniteMetricSpace,
    x: &FiniteMetricSpace,
    map: &GluedMap,
    [lo, hi]: [f64; 2],
) -> Option<[f64; 2]> {
    let n = m.len();
    let (a, b) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = (f64::INFINITY, f64::NEG_INFINITY);
            for j in i + 1..n {
                let d = m.dist(i, j);
                if d >= lo && d <= hi {
                    let q = x.dist(map.eval(i), map.eval(j)) / d;
                    r = (r.0.min(q), r.1.max(q));
                }
            }
            r
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |u, v| (u.0.min(v.0), u.1.max(v.1)),
        );
    (a <= b).then_some([a, b])
}

fn run_eqcon(cfg: &ExperimentConfig, p: &Prepared, map: &GluedMap) -> Result<EqconSection> {
    let base = match cfg.reports.eqcon_base {
        Some(b) if b >= p.x.len() => {
            return Err(Error::IndexOutOfRange {
                index: b,
                len: p.x.len(),
            })
        }
        Some(b) => b,
        None => farthest_from_net(map, &p.x),
    };
    let (phi, phi_hat) = anchored_charts(&p.x, &p.corr, map.kappa, map.k, &map.config, base)?;
    let min_sep = cfg.reports.min_sep_meshes * p.m.resolution();
    let report = eqcon_report(
        map,
        &p.m,
        &p.x,
        &phi,
        &phi_hat,
        min_sep,
        cfg.reports.pair_budget,
        cfg.seed,
    )?;
    Ok(EqconSection {
        base,
        lifted_base: phi_hat.base,
        report,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Outcome {
    let mut doc = ReportDocument {
        schema: SCHEMA.into(),
        config_echo: cfg.clone(),
        build_diagnostics: None,
        eqcon: None,
        submersion_defect: None,
        fibers: Vec::new(),
        fiber_tau: None,
        volume_continuity: None,
        strained: None,
        refinement: None,
        pass_flags: BTreeMap::new(),
        failures: Vec::new(),
        all_passed: false,
    };
    let fail = |doc: &mut ReportDocument, stage: &str, e: Error| {
        doc.failures.push(StageFailure {
            stage: stage.into(),
            message: e.to_string(),
        })
    };
    if let Err(e) = cfg.validate() {
        fail(&mut doc, "config", e);
        return Outcome {
            report: doc,
            map: None,
            prepared: None,
        };
    }
    let prepared = match prepare(&cfg.m, &cfg.x, &cfg.correspondence) {
        Ok(p) => p,
        Err(e) => {
            fail(&mut doc, "prepare", e);
            return Outcome {
                report: doc,
                map: None,
                prepared: None,
            };
        }
    };
    let kappa = Curvature::new(cfg.kappa);
    let (m, x) = (&prepared.m, &prepared.x);
    let t = &cfg.thresholds;

    let clock = Instant::now();
    let map = match build_submersion(m, x, &prepared.corr, kappa, cfg.k, &cfg.blend) {
        Ok(map) => map,
        Err(e) => {
            fail(&mut doc, "build", e);
            return Outcome {
                report: doc,
                map: None,
                prepared: Some(prepared),
            };
        }
    };
    let seconds = clock.elapsed().as_secs_f64();
    let pair_ratio = t
        .pair_distortion
        .and_then(|_| pair_ratio_range(m, x, &map, cfg.reports.distortion_window));
    doc.build_diagnostics = Some(BuildDiagnostics {
        summary: map.summary.clone(),
        correspondence: prepared.corr.check(prepared.corr.mu_hat()),
        n_m: m.len(),
        n_x: x.len(),
        mesh_m: m.resolution(),
        pair_ratio,
        seconds,
    });
    let mut flags = BTreeMap::new();
    if let Some(c) = t.closeness {
        flags.insert(
            "closeness".into(),
            Flag::at_most(Some(map.summary.closeness), c),
        );
    }
    if let Some(band) = t.pair_distortion {
        flags.insert(
            "pair_distortion".into(),
            Flag::within(pair_ratio.map(|r| r[0]), pair_ratio.map(|r| r[1]), band),
        );
    }

    if cfg.reports.repeat_build {
        let same = build_submersion(m, x, &prepared.corr, kappa, cfg.k, &cfg.blend)
            .and_then(|again| Ok(again.to_json()? == map.to_json()?));
        match same {
            Ok(same) => {
                flags.insert(
                    "determinism".into(),
                    Flag {
                        passed: same,
                        observed: None,
                        threshold: "identical map JSON".into(),
                    },
                );
            }
            Err(e) => fail(&mut doc, "repeat_build", e),
        }
    }

    match run_eqcon(cfg, &prepared, &map) {
        Ok(sec) => {
            if let Some(b) = t.eqcon_p95 {
                flags.insert("eqcon_p95".into(), Flag::at_most(Some(sec.report.p95), b));
            }
            if let Some(b) = t.eqcon_median {
                flags.insert(
                    "eqcon_median".into(),
                    Flag::at_most(Some(sec.report.median), b),
                );
            }
            doc.eqcon = Some(sec);
        }
        Err(e) => {
            fail(&mut doc, "eqcon", e);
            for (key, b) in [("eqcon_p95", t.eqcon_p95), ("eqcon_median", t.eqcon_median)] {
                if let Some(b) = b {
                    flags.insert(key.into(), Flag::at_most(None, b));
                }
            }
        }
    }

    let max_sep = cfg.reports.defect_max_sep.unwrap_or(map.summary.r);
    let min_sep = cfg.reports.min_sep_meshes * m.resolution();
    match submersion_defect_report(
        &map,
        m,
        x,
        cfg.reports.defect_tau,
        min_sep,
        max_sep,
        cfg.reports.pair_budget,
        cfg.seed,
    ) {
        Ok(r) => doc.submersion_defect = Some(r),
        Err(e) => fail(&mut doc, "submersion_defect", e),
    }

    if cfg.fibers.count > 0 {
        fiber_stage(cfg, &prepared, &map, kappa, &mut doc, &mut flags);
    }

    if cfg.reports.refinement {
        let base_median = doc.eqcon.as_ref().map(|e| e.report.median);
        match refinement_stage(cfg, kappa) {
            Ok(sec) => {
                let passed = base_median.is_some_and(|b| sec.median <= b);
                flags.insert(
                    "refinement".into(),
                    Flag {
                        passed,
                        observed: Some(sec.median),
                        threshold: format!("<= {}", sec.base_median),
                    },
                );
                doc.refinement = Some(sec);
            }
            Err(e) => {
                fail(&mut doc, "refinement", e);
                flags.insert(
                    "refinement".into(),
                    Flag {
                        passed: false,
                        observed: None,
                        threshold: "<= base median".into(),
                    },
                );
            }
        }
    }

    doc.all_passed = doc.failures.is_empty() && flags.values().all(|f| f.passed);
    doc.pass_flags = flags;
    Outcome {
        report: doc,
        map: Some(map),
        prepared: Some(prepared),
    }
}

fn fiber_stage(
    cfg: &ExperimentConfig,
    p: &Prepared,
    map: &GluedMap,
    kappa: Curvature,
    doc: &mut ReportDocument,
    flags: &mut BTreeMap<String, Flag>,
) {
    let (m, x) = (&p.m, &p.x);
    let fs = &cfg.fibers;
    let t = &cfg.thresholds;
    let tau = fs.tau.unwrap_or_else(|| default_tau(x));
    doc.fiber_tau = Some(tau);
    let bases = spread_bases(x, fs.count);
    let opts = FiberOptions {
        tau,
        m_exp: fs.dim as f64,
        link_radius: fs.link_radius,
        grid: None,
        c_acc: fs.c_acc,
        strain_m: 0,
        theta: fs.theta,
        rho: fs.rho,
    };
    doc.fibers = bases
        .par_iter()
        .map(|&b| match fiber_report(map, m, x, b, &opts) {
            Ok(r) => FiberEntry {
                base: b,
                report: Some(r),
                error: None,
            },
            Err(e) => FiberEntry {
                base: b,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let ok: Vec<&FiberReport> = doc
        .fibers
        .iter()
        .filter_map(|f| f.report.as_ref())
        .collect();
    let all = ok.len() == doc.fibers.len();
    let empties = doc
        .fibers
        .iter()
        .filter(|f| {
            f.error
                .as_deref()
                .is_some_and(|e| e.starts_with("empty fiber"))
        })
        .count();
    flags.insert(
        "fibers_nonempty".into(),
        Flag {
            passed: empties == 0,
            observed: Some(empties as f64),
            threshold: "0 empty fibers".into(),
        },
    );
    let fold = |f: &dyn Fn(&FiberReport) -> Option<f64>, hi: bool| -> Option<f64> {
        if !all {
            return None;
        }
        let mut acc = if hi { f64::NEG_INFINITY } else { f64::INFINITY };
        for r in &ok {
            let v = f(r)?;
            acc = if hi { acc.max(v) } else { acc.min(v) };
        }
        Some(acc)
    };
    let disconnected = ok.iter().filter(|r| r.intrinsic.ratio().is_none()).count();
    flags.insert(
        "fibers_connected".into(),
        Flag {
            passed: all && disconnected == 0,
            observed: Some(disconnected as f64),
            threshold: "0 disconnected fibers".into(),
        },
    );
    if let Some(b) = t.fiber_diameter {
        flags.insert(
            "fiber_diameter".into(),
            Flag::at_most(fold(&|r| Some(r.diameter), true), b),
        );
    }
    if let Some(b) = t.intrinsic_ratio {
        flags.insert(
            "intrinsic_ratio".into(),
            Flag::at_most(fold(&|r| r.intrinsic.ratio(), true), b),
        );
    }
    if let Some(band) = t.dimension {
        flags.insert(
            "dimension".into(),
            Flag::within(
                fold(&|r| r.dimension_estimate, false),
                fold(&|r| r.dimension_estimate, true),
                band,
            ),
        );
    }
    if let Some(band) = t.fiber_volume {
        flags.insert(
            "fiber_volume".into(),
            Flag::within(
                fold(&|r| Some(r.volume_estimate), false),
                fold(&|r| Some(r.volume_estimate), true),
                band,
            ),
        );
    }
    let excess = fold(
        &|r| Some(r.volume_estimate / (fs.c_acc * r.diameter.powf(fs.dim as f64))),
        true,
    );
    flags.insert(
        "volume_upper_bound".into(),
        Flag {
            passed: all && ok.iter().all(|r| r.packing.within_upper_bound),
            observed: excess,
            threshold: format!("v <= {} * diam^{}", fs.c_acc, fs.dim),
        },
    );

    if let Some(band) = t.volume_ratio {
        match continuity(p, map, tau, fs.dim as f64, &bases) {
            Ok(sec) => {
                flags.insert(
                    "volume_ratio".into(),
                    Flag::within(Some(sec.min_ratio), Some(sec.max_ratio), band),
                );
                doc.volume_continuity = Some(sec);
            }
            Err(e) => {
                doc.failures.push(StageFailure {
                    stage: "volume_continuity".into(),
                    message: e.to_string(),
                });
                flags.insert("volume_ratio".into(), Flag::within(None, None, band));
            }
        }
    }

    if t.strained_low.is_some() || t.strained_high.is_some() {
        let base = fs.strained_base.unwrap_or(bases[0]);
        let sec = extract_fiber(map, x, base, tau).and_then(|f| {
            let diam = crate::fiber::fiber_diameter(m, &f)?;
            let rho = fs.rho.unwrap_or(0.25 * diam);
            let low = strained_subset(m, kappa, &f, fs.dim.max(1), fs.theta, rho)?.fraction;
            let high = strained_subset(m, kappa, &f, fs.dim + 1, fs.theta, rho)?.fraction;
            Ok(StrainedSection {
                base,
                rho,
                theta: fs.theta,
                low,
                high,
            })
        });
        let (low, high) = match sec {
            Ok(s) => {
                let v = (Some(s.low), Some(s.high));
                doc.strained = Some(s);
                v
            }
            Err(e) => {
                doc.failures.push(StageFailure {
                    stage: "strained_subset".into(),
                    message: e.to_string(),
                });
                (None, None)
            }
        };
        if let Some(b) = t.strained_low {
            flags.insert("strained_low".into(), Flag::at_least(low, b));
        }
        if let Some(b) = t.strained_high {
            flags.insert("strained_high".into(), Flag::at_most(high, b));
        }
    }
}

fn continuity(
    p: &Prepared,
    map: &GluedMap,
    tau: f64,
    m_exp: f64,
    bases: &[usize],
) -> Result<ContinuitySection> {
    let fibers = bases
        .iter()
        .map(|&b| extract_fiber(map, &p.x, b, tau))
        .collect::<Result<Vec<_>>>()?;
    let grid = default_grid(&fibers[0].as_space(&p.m)?)?;
    let volumes = fibers
        .par_iter()
        .map(|f| {
            fiber_packing(&p.m, f, m_exp, Some(&grid), f64::INFINITY).map(|pk| pk.volume_estimate)
        })
        .collect::<Result<Vec<_>>>()?;
    let lo = volumes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = volumes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ContinuitySection {
        grid,
        bases: bases.to_vec(),
        min_ratio: lo / hi,
        max_ratio: hi / lo,
        volumes,
    })
}

fn refinement_stage(cfg: &ExperimentConfig, kappa: Curvature) -> Result<RefinementSection> {
    let fine = prepare(&cfg.m.doubled(), &cfg.x.doubled(), &cfg.correspondence)?;
    let map = build_submersion(&fine.m, &fine.x, &fine.corr, kappa, cfg.k, &cfg.blend)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.reports.eqcon_base = None;
    let sec = run_eqcon(&fine_cfg, &fine, &map)?;
    let coarse = prepare(&cfg.m, &cfg.x, &cfg.correspondence)?;
    let coarse_map =
        build_submersion(&coarse.m, &coarse.x, &coarse.corr, kappa, cfg.k, &cfg.blend)?;
    let base = run_eqcon(cfg, &coarse, &coarse_map)?;
    Ok(RefinementSection {
        n_m: fine.m.len(),
        n_x: fine.x.len(),
        median: sec.report.median,
        p95: sec.report.p95,
        base_median: base.report.median,
    })
}
