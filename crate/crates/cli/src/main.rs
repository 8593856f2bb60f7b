//! `gk` - evaluate and solve extremal generalized Kähler structures on
//! toric manifolds from the command line.

mod inputs;
mod output;

use clap::{Args, Parser, Subcommand};
use gktoric::curvature;
use gktoric::extremal::{self, ProbeConfig, StabilityVerdict};
use gktoric::mabuchi;
use gktoric::polytope::quadrature;
use gktoric::potential::admissibility_check;
use gktoric::solver::{self, SolveOptions};
use inputs::InputError;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_OTHER: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_DELZANT: u8 = 3;
const EXIT_INADMISSIBLE: u8 = 4;
const EXIT_NO_CONVERGENCE: u8 = 5;

#[derive(Parser)]
#[command(name = "gk", about = "toric generalized Kähler toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// polytope: built-in name (segment, square, simplex, trapezoid,
    /// hirzebruch2) or a JSON file path
    polytope: String,
    /// antisymmetric B matrix: "zero", inline JSON, or a file
    #[arg(long = "B", default_value = "zero")]
    b: String,
    /// antisymmetric A matrix (frame/crosscheck paths only)
    #[arg(long = "A", default_value = "zero")]
    a: String,
    /// output directory for reports
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// RNG seed for sampled checks
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// interior quadrature level
    #[arg(long, default_value_t = 5)]
    quad_level: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Run Delzant validation and report diagnostics
    Validate(CommonOpts),
    /// Compute the extremal affine function from the exact moment system
    Lext(CommonOpts),
    /// Sample the generalized scalar curvature on an interior grid
    Gscal {
        #[command(flatten)]
        common: CommonOpts,
        /// potential: "guillemin" or a checkpoint file
        #[arg(long, default_value = "guillemin")]
        potential: String,
        /// grid points per axis
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Evaluate relative K-stability crease probes
    Stability {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 2)]
        max_direction: i64,
        #[arg(long, default_value_t = 15)]
        offsets: usize,
        /// test-injection override for the affine function, as JSON
        /// [c0, g1, ..., gn] with rational strings
        #[arg(long)]
        ell_override: Option<String>,
    },
    /// Evaluate the Mabuchi energy breakdown of a potential
    Mabuchi {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "guillemin")]
        potential: String,
        #[arg(long, default_value = "guillemin")]
        reference: String,
    },
    /// Scan the energy along the linear geodesic between two potentials
    Geodesic {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 11)]
        samples: usize,
    },
    /// Solve the extremal equation at the given B
    Solve {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 8)]
        degree: u32,
        /// ceiling for automatic degree escalation
        #[arg(long, default_value_t = 12)]
        degree_cap: u32,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// warm-start checkpoint
        #[arg(long)]
        warm: Option<String>,
    },
    /// Continuation over a grid of Poisson scales t * B
    Continue {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 8)]
        degree: u32,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// comma-separated t grid, increasing from 0
        #[arg(long, default_value = "0,0.05,0.1,0.15,0.2")]
        t_grid: String,
    },
    /// Cross-validate the curvature against the independent route and run
    /// the algebraic identity suite at sampled points
    Crosscheck {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "guillemin")]
        potential: String,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1e-3)]
        stencil: f64,
    },
}

#[derive(Serialize, Clone)]
struct RunManifest {
    command: String,
    inputs: Vec<String>,
    options: BTreeMap<String, String>,
    out_dir: String,
    seed: u64,
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    manifest: RunManifest,
    #[serde(flatten)]
    body: T,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("GK_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.1);
            ExitCode::from(e.0)
        }
    }
}

type Failure = (u8, String);

fn input_err(e: InputError) -> Failure {
    match e {
        InputError::Parse(m) => (EXIT_BAD_INPUT, m),
        InputError::Validation(m) => (EXIT_DELZANT, m),
        InputError::Io(m) => (EXIT_BAD_INPUT, m),
    }
}

fn lib_err(e: gktoric::Error) -> Failure {
    use gktoric::Error::*;
    match &e {
        InvalidPolytope(_) => (EXIT_DELZANT, e.to_string()),
        Inadmissible(_) => (EXIT_INADMISSIBLE, e.to_string()),
        NotConverged(_) | LineSearchFailed(_) => (EXIT_NO_CONVERGENCE, e.to_string()),
        InvalidInput(_) => (EXIT_BAD_INPUT, e.to_string()),
        _ => (EXIT_OTHER, e.to_string()),
    }
}

fn manifest(command: &str, common: &CommonOpts, extra: &[(&str, String)]) -> RunManifest {
    let mut options = BTreeMap::new();
    options.insert("B".to_string(), common.b.clone());
    options.insert("A".to_string(), common.a.clone());
    options.insert("quad_level".to_string(), common.quad_level.to_string());
    for (k, v) in extra {
        options.insert((*k).to_string(), v.clone());
    }
    RunManifest {
        command: command.to_string(),
        inputs: vec![common.polytope.clone()],
        options,
        out_dir: common.out.display().to_string(),
        seed: common.seed,
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Validate(common) => {
            let spec = inputs::load_spec(&common.polytope).map_err(input_err)?;
            let report = gktoric::polytope::validate_delzant(&spec);
            let ok = report.ok;
            let body = Report { manifest: manifest("validate", &common, &[]), body: report };
            let path = output::write_report(&common.out, "validate.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!("validate: {} -> {}", if ok { "ok" } else { "FAILED" }, path.display());
            Ok(if ok { EXIT_OK } else { EXIT_DELZANT })
        }
        Command::Lext(common) => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let ell = extremal::extremal_affine(&poly).map_err(lib_err)?;
            #[derive(Serialize)]
            struct LextBody {
                l_ext: LextJson,
                average_gscal: f64,
            }
            #[derive(Serialize)]
            struct LextJson {
                constant: f64,
                gradient: Vec<f64>,
                constant_exact: String,
                gradient_exact: Vec<String>,
            }
            let body = LextBody {
                l_ext: LextJson {
                    constant: gktoric::exact::q_to_f64(&ell.constant),
                    gradient: ell.gradient.iter().map(gktoric::exact::q_to_f64).collect(),
                    constant_exact: gktoric::exact::rational::format_rational(&ell.constant),
                    gradient_exact: ell
                        .gradient
                        .iter()
                        .map(gktoric::exact::rational::format_rational)
                        .collect(),
                },
                average_gscal: poly.average_gscal_f64(),
            };
            let body = Report { manifest: manifest("lext", &common, &[]), body };
            let path = output::write_report(&common.out, "lext.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!("lext -> {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Gscal { common, potential, grid } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let b = inputs::parse_matrix(&common.b, poly.dim()).map_err(input_err)?;
            let a = inputs::parse_matrix(&common.a, poly.dim()).map_err(input_err)?;
            let datum = inputs::datum_from(&a, &b).map_err(input_err)?;
            let u = inputs::load_potential(&potential, &poly).map_err(input_err)?;
            let pts = quadrature::interior_grid(&poly, grid, 0.01 * poly.diameter().max(1.0));
            let (rows, summary) = curvature::gscal_field(&u, &datum, &pts).map_err(lib_err)?;
            let n = poly.dim();
            let header = (0..n)
                .map(|i| format!("x{}", i + 1))
                .chain(["kappa".to_string(), "min_eig_margin".to_string()])
                .collect::<Vec<_>>()
                .join(",");
            let csv_rows: Vec<String> = rows
                .iter()
                .map(|r| {
                    r.point
                        .iter()
                        .map(|v| output::fmt_f(*v))
                        .chain([output::fmt_f(r.kappa), output::fmt_f(r.min_eig_margin)])
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            let csv = output::write_csv(&common.out, "gscal.csv", &header, &csv_rows)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            let body = Report {
                manifest: manifest("gscal", &common, &[("grid", grid.to_string()), ("potential", potential.clone())]),
                body: summary,
            };
            let path = output::write_report(&common.out, "gscal.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!("gscal -> {} and {}", path.display(), csv.display());
            Ok(EXIT_OK)
        }
        Command::Stability { common, max_direction, offsets, ell_override } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let cfg = ProbeConfig {
                max_direction,
                offsets_per_direction: offsets,
                basepoint: None,
            };
            let over = match &ell_override {
                None => None,
                Some(text) => {
                    let parts: Vec<String> = serde_json::from_str(text)
                        .map_err(|e| (EXIT_BAD_INPUT, format!("ell-override: {e}")))?;
                    if parts.len() != poly.dim() + 1 {
                        return Err((EXIT_BAD_INPUT, "ell-override needs n+1 entries".into()));
                    }
                    let vals: Option<Vec<_>> = parts
                        .iter()
                        .map(|s| gktoric::exact::rational::parse_rational(s))
                        .collect();
                    let vals = vals.ok_or((EXIT_BAD_INPUT, "bad rational in ell-override".to_string()))?;
                    Some(gktoric::AffineFunction {
                        constant: vals[0].clone(),
                        gradient: vals[1..].to_vec(),
                    })
                }
            };
            let report = extremal::stability_probe(&poly, &cfg, over).map_err(lib_err)?;
            let verdict = report.verdict;
            let ell = extremal::extremal_affine(&poly).map_err(lib_err)?;
            #[derive(Serialize)]
            struct StabilityBody {
                l_ext: Vec<String>,
                #[serde(flatten)]
                report: extremal::StabilityReport,
            }
            let body = Report {
                manifest: manifest(
                    "stability",
                    &common,
                    &[
                        ("max_direction", max_direction.to_string()),
                        ("offsets", offsets.to_string()),
                    ],
                ),
                body: StabilityBody {
                    l_ext: std::iter::once(&ell.constant)
                        .chain(ell.gradient.iter())
                        .map(gktoric::exact::rational::format_rational)
                        .collect(),
                    report,
                },
            };
            let path = output::write_report(&common.out, "stability.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!(
                "stability: {:?} -> {}",
                verdict,
                path.display()
            );
            let _ = matches!(verdict, StabilityVerdict::NoViolationFound);
            Ok(EXIT_OK)
        }
        Command::Mabuchi { common, potential, reference } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let b = inputs::parse_matrix(&common.b, poly.dim()).map_err(input_err)?;
            let datum = inputs::datum_from(&nalgebra::DMatrix::zeros(poly.dim(), poly.dim()), &b)
                .map_err(input_err)?;
            let u = inputs::load_potential(&potential, &poly).map_err(input_err)?;
            let u_ref = inputs::load_potential(&reference, &poly).map_err(input_err)?;
            let quad = quadrature::interior_rule(&poly, common.quad_level).map_err(lib_err)?;
            let breakdown = mabuchi::mabuchi_energy(&u, &datum, &u_ref, &quad).map_err(lib_err)?;
            let body = Report {
                manifest: manifest(
                    "mabuchi",
                    &common,
                    &[("potential", potential.clone()), ("reference", reference.clone())],
                ),
                body: breakdown,
            };
            let path = output::write_report(&common.out, "mabuchi.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!("mabuchi -> {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Geodesic { common, from, to, samples } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let b = inputs::parse_matrix(&common.b, poly.dim()).map_err(input_err)?;
            let datum = inputs::datum_from(&nalgebra::DMatrix::zeros(poly.dim(), poly.dim()), &b)
                .map_err(input_err)?;
            let ua = inputs::load_potential(&from, &poly).map_err(input_err)?;
            let ub = inputs::load_potential(&to, &poly).map_err(input_err)?;
            let u_ref = gktoric::potential::SymplecticPotential::guillemin(poly.clone());
            let quad = quadrature::interior_rule(&poly, common.quad_level).map_err(lib_err)?;
            let rows =
                mabuchi::convexity_scan(&ua, &ub, &datum, &u_ref, samples, &quad).map_err(lib_err)?;
            let csv_rows: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{}",
                        output::fmt_f(r.t),
                        output::fmt_f(r.energy),
                        output::fmt_f(r.pairing),
                        r.second_difference.map(output::fmt_f).unwrap_or_default()
                    )
                })
                .collect();
            let csv = output::write_csv(&common.out, "geodesic.csv", "t,M,dM_pairing,d2M", &csv_rows)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            #[derive(Serialize)]
            struct GeodesicBody {
                rows: Vec<mabuchi::ScanRow>,
                min_second_difference: f64,
            }
            let min_d2 = rows
                .iter()
                .filter_map(|r| r.second_difference)
                .fold(f64::INFINITY, f64::min);
            let body = Report {
                manifest: manifest(
                    "geodesic",
                    &common,
                    &[("from", from.clone()), ("to", to.clone()), ("samples", samples.to_string())],
                ),
                body: GeodesicBody { rows, min_second_difference: min_d2 },
            };
            let path = output::write_report(&common.out, "geodesic.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!("geodesic -> {} and {}", path.display(), csv.display());
            Ok(EXIT_OK)
        }
        Command::Solve { common, degree, degree_cap, tol, warm } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let b = inputs::parse_matrix(&common.b, poly.dim()).map_err(input_err)?;
            let opts = SolveOptions {
                degree,
                degree_cap: degree_cap.max(degree),
                quad_level: common.quad_level,
                residual_target: tol,
                ..Default::default()
            };
            let warm_potential = match &warm {
                Some(w) => Some(inputs::load_potential(w, &poly).map_err(input_err)?),
                None => None,
            };
            let report = solver::solve_extremal_from(&poly, &b, &opts, warm_potential.as_ref())
                .map_err(lib_err)?;
            let converged = report.converged;
            let cp_path = output::write_report(&common.out, "potential.json", &report.potential)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            let body = Report {
                manifest: manifest(
                    "solve",
                    &common,
                    &[("degree", degree.to_string()), ("tol", tol.to_string())],
                ),
                body: report,
            };
            let path = output::write_report(&common.out, "solve.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!(
                "solve: {} -> {} (checkpoint {})",
                if converged { "converged" } else { "NOT CONVERGED" },
                path.display(),
                cp_path.display()
            );
            Ok(if converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
        }
        Command::Continue { common, degree, tol, t_grid } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let b = inputs::parse_matrix(&common.b, poly.dim()).map_err(input_err)?;
            let steps: Vec<f64> = t_grid
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| (EXIT_BAD_INPUT, format!("t-grid: {e}")))?;
            let opts = SolveOptions {
                degree,
                quad_level: common.quad_level,
                residual_target: tol,
                continuation_steps: steps,
                ..Default::default()
            };
            let outcome = solver::continuation(&poly, &b, &opts).map_err(lib_err)?;
            let invariance = solver::lext_invariance_check(&poly, &outcome.reports).map_err(lib_err)?;
            let all_converged = outcome.ceiling.is_none()
                && outcome.reports.iter().all(|r| r.converged);
            #[derive(Serialize)]
            struct ContinueBody {
                outcome: solver::ContinuationOutcome,
                invariance: solver::InvarianceReport,
            }
            let body = Report {
                manifest: manifest(
                    "continue",
                    &common,
                    &[
                        ("degree", degree.to_string()),
                        ("tol", tol.to_string()),
                        ("t_grid", t_grid.clone()),
                    ],
                ),
                body: ContinueBody { outcome, invariance },
            };
            let path = output::write_report(&common.out, "continue.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!(
                "continue: {} -> {}",
                if all_converged { "all converged" } else { "TRUNCATED" },
                path.display()
            );
            Ok(if all_converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
        }
        Command::Crosscheck { common, potential, points, stencil } => {
            let poly = inputs::load_polytope(&common.polytope).map_err(input_err)?;
            let b = inputs::parse_matrix(&common.b, poly.dim()).map_err(input_err)?;
            let a = inputs::parse_matrix(&common.a, poly.dim()).map_err(input_err)?;
            let datum = inputs::datum_from(&a, &b).map_err(input_err)?;
            let u = inputs::load_potential(&potential, &poly).map_err(input_err)?;
            let quad = quadrature::interior_rule(&poly, common.quad_level).map_err(lib_err)?;
            let adm = admissibility_check(&u, &datum, &quad).map_err(lib_err)?;
            if !adm.admissible {
                return Err((
                    EXIT_INADMISSIBLE,
                    format!("potential inadmissible (margin {:.3e})", adm.min_margin),
                ));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(common.seed);
            let bb = poly.bounding_box();
            let margin = 0.05 * poly.diameter().max(1.0);
            let mut rows = Vec::new();
            let mut degenerate = 0usize;
            let mut max_rel: f64 = 0.0;
            let mut identity_max: f64 = 0.0;
            let mut tries = 0;
            while rows.len() < points && tries < points * 200 {
                tries += 1;
                let x: Vec<f64> = bb
                    .iter()
                    .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                    .collect();
                if poly.interior_margin(&x) < margin {
                    continue;
                }
                match curvature::gscal_crosscheck(&u, &datum, &x, stencil) {
                    Ok(c) => {
                        max_rel = max_rel.max(c.rel_err);
                        let frame = curvature::bihermitian_frame(&u, &datum, &x).map_err(lib_err)?;
                        let suite = curvature::identity_suite(&frame, 20, common.seed);
                        identity_max = identity_max.max(suite.max_residual);
                        rows.push((x, c));
                    }
                    Err(gktoric::Error::DegeneratePoisson) => degenerate += 1,
                    Err(e) => return Err(lib_err(e)),
                }
            }
            #[derive(Serialize)]
            struct CrossBody {
                samples: Vec<CrossRow>,
                degenerate_skipped: usize,
                max_rel_err: f64,
                identity_suite_max_residual: f64,
                admissibility_margin: f64,
            }
            #[derive(Serialize)]
            struct CrossRow {
                point: Vec<f64>,
                kappa_abreu: f64,
                kappa_phi: f64,
                rel_err: f64,
            }
            let body = Report {
                manifest: manifest(
                    "crosscheck",
                    &common,
                    &[
                        ("points", points.to_string()),
                        ("stencil", stencil.to_string()),
                        ("potential", potential.clone()),
                    ],
                ),
                body: CrossBody {
                    samples: rows
                        .into_iter()
                        .map(|(point, c)| CrossRow {
                            point,
                            kappa_abreu: c.kappa_abreu,
                            kappa_phi: c.kappa_phi,
                            rel_err: c.rel_err,
                        })
                        .collect(),
                    degenerate_skipped: degenerate,
                    max_rel_err: max_rel,
                    identity_suite_max_residual: identity_max,
                    admissibility_margin: adm.min_margin,
                },
            };
            let path = output::write_report(&common.out, "crosscheck.json", &body)
                .map_err(|e| (EXIT_OTHER, e.to_string()))?;
            println!(
                "crosscheck: max rel err {max_rel:.3e}, identities {identity_max:.3e} -> {}",
                path.display()
            );
            Ok(EXIT_OK)
        }
    }
}
