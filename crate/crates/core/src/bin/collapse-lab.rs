use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use collapse_lab::experiment::{prepare, run_experiment, ExperimentConfig};
use collapse_lab::fiber::{default_tau, fiber_report, FiberOptions};
use collapse_lab::generators::SpaceSpec;
use collapse_lab::glue::{build_submersion, GluedMap};
use collapse_lab::metric::io::{load_space, save_space, MatrixFormat};
use collapse_lab::metric::{default_tol_tri, greedy_net, validate};
use collapse_lab::strainers::{check_strainer, find_strainer};
use collapse_lab::{Curvature, Error, FiniteMetricSpace};

#[derive(Parser)]
#[command(
    name = "collapse-lab",
    version,
    about = "Glued submersions of sampled collapsing spaces"
)]
struct Cli {
    /// Lower curvature bound; overrides the config value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    kappa: Option<f64>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent (matrices need a file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Distance-matrix format; guessed from the file extension when absent.
    #[arg(long, global = true, value_enum)]
    format: Option<MatrixFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a space from a JSON or TOML spec and write its distance matrix.
    Gen {
        spec: PathBuf,
        /// Also write product annotations (base and fiber index) as JSON.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Check the metric axioms of a distance matrix.
    Validate {
        space: PathBuf,
        /// Triangle tolerance; 1e-9 times the diameter when absent.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Greedy farthest-first ν-net.
    Net {
        space: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Search for a (k,δ)-strainer at a point.
    Strainer {
        space: PathBuf,
        #[arg(long)]
        point: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
        /// Smallest accepted strainer length.
        #[arg(long, default_value_t = 0.0)]
        length: f64,
    },
    /// Build the glued map of an experiment config.
    Build { config: PathBuf },
    /// Fiber reports of a built map over the given base points.
    Fiber {
        config: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long = "base", required = true)]
        bases: Vec<usize>,
        /// Fiber tolerance; twice the mesh of X when absent.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Run a full experiment and report every threshold check.
    Check { config: PathBuf },
}

enum Failure {
    /// Input fails a check: exit 1.
    Invalid(String),
    /// Bad arguments or unreadable input: exit 2.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::InvalidParameter(_)
            | Error::IndexOutOfRange { .. } => Failure::Usage(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(Error::from)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn format_for(cli: &Cli, path: &Path) -> MatrixFormat {
    cli.format.unwrap_or_else(|| MatrixFormat::from_path(path))
}

fn load(cli: &Cli, path: &Path) -> Result<FiniteMetricSpace, Failure> {
    Ok(load_space(path, format_for(cli, path))?)
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(k) = cli.kappa {
        cfg.kappa = k;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn read_spec(path: &Path) -> Result<SpaceSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text).map_err(Error::from)?)
    } else {
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("spec: {e}")))
    }
}

fn run(cli: &Cli) -> Outcome {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Gen { spec, annotations } => {
            let out = out.ok_or_else(|| Failure::Usage("gen needs --out".into()))?;
            let g = read_spec(spec)?.generate()?;
            save_space(&g.space, out, format_for(cli, out))?;
            if let Some(path) = annotations {
                #[derive(Serialize)]
                struct Annotations<'a> {
                    base_index: &'a Option<Vec<usize>>,
                    fiber_index: &'a Option<Vec<usize>>,
                }
                emit(
                    &Annotations {
                        base_index: &g.base_index,
                        fiber_index: &g.fiber_index,
                    },
                    Some(path),
                )?;
            }
            eprintln!("wrote {} points to {}", g.space.len(), out.display());
            Ok(true)
        }
        Command::Validate { space, tol } => {
            let s = load(cli, space)?;
            let report = validate(&s, tol.unwrap_or_else(|| default_tol_tri(&s)));
            emit(&report, out)?;
            if !report.accepted {
                eprintln!(
                    "not a metric: worst triangle defect {:.3e}",
                    report.worst_defect()
                );
            }
            Ok(report.accepted)
        }
        Command::Net { space, nu, start } => {
            let s = load(cli, space)?;
            emit(&greedy_net(&s, *nu, *start)?, out)?;
            Ok(true)
        }
        Command::Strainer {
            space,
            point,
            k,
            delta,
            length,
        } => {
            let s = load(cli, space)?;
            let kappa = Curvature::new(cli.kappa.unwrap_or(0.0));
            match find_strainer(&s, kappa, *point, *k, *delta, *length, None) {
                Ok(st) => {
                    let check = check_strainer(&s, kappa, *point, &st.pairs, *delta);
                    #[derive(Serialize)]
                    struct Found<'a> {
                        strainer: &'a collapse_lab::strainers::Strainer,
                        check: collapse_lab::strainers::StrainerCheck,
                    }
                    emit(
                        &Found {
                            strainer: &st,
                            check,
                        },
                        out,
                    )?;
                    Ok(true)
                }
                Err(e @ Error::StrainerNotFound { .. }) => {
                    eprintln!("{e}");
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Build { config } => {
            let cfg = load_config(cli, config)?;
            let p = prepare(&cfg.m, &cfg.x, &cfg.correspondence)?;
            let map = build_submersion(
                &p.m,
                &p.x,
                &p.corr,
                Curvature::new(cfg.kappa),
                cfg.k,
                &cfg.blend,
            )?;
            for w in &map.summary.warnings {
                eprintln!("warning: {w}");
            }
            let text = map.to_json()?;
            match out.or(cfg.output.map.as_deref()) {
                Some(path) => std::fs::write(path, text).map_err(Error::from)?,
                None => println!("{text}"),
            }
            Ok(true)
        }
        Command::Fiber {
            config,
            map,
            bases,
            tau,
        } => {
            let cfg = load_config(cli, config)?;
            let p = prepare(&cfg.m, &cfg.x, &cfg.correspondence)?;
            let map = GluedMap::from_json(&std::fs::read_to_string(map).map_err(Error::from)?)?;
            if map.assignment.len() != p.m.len() {
                return Err(Failure::Usage(format!(
                    "map has {} points but the config generates {}",
                    map.assignment.len(),
                    p.m.len()
                )));
            }
            let opts = FiberOptions {
                tau: tau.or(cfg.fibers.tau).unwrap_or_else(|| default_tau(&p.x)),
                m_exp: cfg.fibers.dim as f64,
                link_radius: cfg.fibers.link_radius,
                grid: None,
                c_acc: cfg.fibers.c_acc,
                strain_m: cfg.fibers.dim,
                theta: cfg.fibers.theta,
                rho: cfg.fibers.rho,
            };
            let reports = bases
                .iter()
                .map(|&b| fiber_report(&map, &p.m, &p.x, b, &opts))
                .collect::<collapse_lab::Result<Vec<_>>>()?;
            emit(&reports, out)?;
            Ok(true)
        }
        Command::Check { config } => {
            let cfg = load_config(cli, config)?;
            let outcome = run_experiment(&cfg);
            let doc = &outcome.report;
            for (name, flag) in &doc.pass_flags {
                let observed = flag.observed.map_or("-".to_string(), |v| format!("{v:.4}"));
                eprintln!(
                    "{} {name}: {observed} ({})",
                    if flag.passed { "PASS" } else { "FAIL" },
                    flag.threshold
                );
            }
            for f in &doc.failures {
                eprintln!("stage {} failed: {}", f.stage, f.message);
            }
            emit(doc, out.or(cfg.output.report.as_deref()))?;
            if let (Some(path), Some(map)) = (&cfg.output.map, &outcome.map) {
                std::fs::write(path, map.to_json()?).map_err(Error::from)?;
            }
            Ok(doc.all_passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
