//! driftlab command-line front end.
//!
//! Exit codes: 0 success, 2 invalid usage or config, 3 numerical
//! failure (the report embeds the error).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use driftlab::capacity::{
    parabolicity_by_capacity, solve_capacitor, TOL_CAP_REL,
};
use driftlab::config::{
    parse_initial_guess, parse_nonlinearity, parse_region, parse_tolerances, space_from_text,
};
use driftlab::io::{load_field, save_field, write_csv};
use driftlab::profile::{chain_inequality, gradient_energy_samples, growth_diagnostic, solve_profile};
use driftlab::report::Report;
use driftlab::rigidity::{splitting_audit, AuditOptions, ToleranceSet, Verdict};
use driftlab::solve::{
    drifted_front_shift, energy, fiber_average, newton_solve, tilted_cubic, InitialGuess,
    SolverOptions,
};
use driftlab::stability::{
    integral_inequality_gap, kernel_shifted_nonlinearity, min_eigenpair, picone_gap, rigidity_gap,
    SpectralReport,
};
use driftlab::{boundary_area, Error, ModelSpace, Nonlinearity, Region, ScalarField, SpaceConfig};

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Numerical laboratory for semilinear drift-Laplacian problems on weighted model manifolds")]
struct Cli {
    /// Output directory for reports and tables.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized trials.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance override file for audit verdicts.
    #[arg(long, global = true)]
    tols: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolveArgs {
    /// Space config file (key = value grammar).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "allen-cahn")]
    nl: String,
    #[arg(long, default_value = "tanh")]
    init: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Pin the central-slice mean (translation fixing).
    #[arg(long, default_value_t = false)]
    pin: bool,
}

#[derive(Args)]
struct StabilityArgs {
    /// Solution field table (with its .space.json sidecar).
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, default_value = "allen-cahn")]
    nl: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Identity to verify: picone | lemma32 | lemma34.
    lemma: String,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, default_value = "allen-cahn")]
    nl: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    solution: PathBuf,
    /// Stability report directory or report.json written by `stability`.
    #[arg(long)]
    spectral: PathBuf,
    #[arg(long, default_value = "allen-cahn")]
    nl: String,
    #[arg(long, default_value_t = 9)]
    levels: usize,
    #[arg(long, default_value_t = 8)]
    seeds: usize,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    config: PathBuf,
    /// Compact set, e.g. ball:r=1.
    #[arg(long = "K")]
    k: String,
    /// Enclosing open set, e.g. ball:r=8.
    #[arg(long)]
    omega: String,
}

#[derive(Args)]
struct ParabolicityArgs {
    /// capacity | growth.
    #[arg(long)]
    method: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    rmax: f64,
    /// Lower integration limit of the growth criterion.
    #[arg(long, default_value_t = 1.0)]
    rmin: f64,
    /// Compact set for the capacity method.
    #[arg(long = "K", default_value = "ball:r=1")]
    k: String,
    /// Exhaustion radii for the capacity method.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, default_value = "allen-cahn")]
    nl: String,
    #[arg(long, default_value_t = 0.0)]
    k: f64,
    #[arg(long = "T", default_value_t = 12.0)]
    extent: f64,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Boundary values `lo,hi`; defaults to the double-well tails.
    #[arg(long)]
    bv: Option<String>,
    /// Pin y(0) to this value.
    #[arg(long)]
    pin: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct GrowthArgs {
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
}

#[derive(Args)]
struct DemoArgs {
    /// Space config override (defaults to the ℝ×S¹ reference cylinder,
    /// T = 12, h = 0.02, fiber 1.28).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Density slope of the drifted stage.
    #[arg(long, default_value_t = 0.3)]
    drift: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve Δ_f u + g(u) = 0 on a configured space.
    Solve(SolveArgs),
    /// Smallest eigenpair of the stability operator of a solution.
    Stability(StabilityArgs),
    /// Randomized verification of the Picone / integral / rigidity
    /// inequalities.
    Verify(VerifyArgs),
    /// Level-set, flow, and splitting audit of a solution.
    SplitReport(SplitArgs),
    /// Solve one f-harmonic capacitor pair.
    Capacity(CapacityArgs),
    /// Parabolicity verdict by capacity decay or volume growth.
    Parabolicity(ParabolicityArgs),
    /// Solve the reduced profile ODE -y'' + k y' = g(y).
    Profile(ProfileArgs),
    /// Growth diagnostic of ∫_{B_R} |∇u|² dVol_f.
    Growth(GrowthArgs),
    /// Full splitting pipeline on the reference cylinder.
    Theorem12Demo(DemoArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config { .. }
                | Error::FieldFile(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::RegionOutsideDomain
                | Error::SphereOutsideDomain
                | Error::InsufficientRange
                | Error::InvalidCapacitorPair => ExitCode::from(2),
                _ => {
                    // Numerical failure: leave a report with the error.
                    let report = Report::new("error", None, json!({}), json!({}))
                        .with_error(err.to_string());
                    let _ = report.write(&cli.out);
                    ExitCode::from(3)
                }
            }
        }
    }
}

fn load_space(path: &Path) -> Result<Arc<ModelSpace>, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(Arc::new(space_from_text(&text)?))
}

fn load_tols(cli: &Cli) -> Result<ToleranceSet, Error> {
    match &cli.tols {
        Some(path) => parse_tolerances(&std::fs::read_to_string(path)?),
        None => Ok(ToleranceSet::default()),
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Solve(args) => cmd_solve(cli, args),
        Command::Stability(args) => cmd_stability(cli, args),
        Command::Verify(args) => cmd_verify(cli, args),
        Command::SplitReport(args) => cmd_split(cli, args),
        Command::Capacity(args) => cmd_capacity(cli, args),
        Command::Parabolicity(args) => cmd_parabolicity(cli, args),
        Command::Profile(args) => cmd_profile(cli, args),
        Command::Growth(args) => cmd_growth(cli, args),
        Command::Theorem12Demo(args) => cmd_demo(cli, args),
    }
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> Result<ExitCode, Error> {
    let space = load_space(&args.config)?;
    let nl = parse_nonlinearity(&args.nl)?;
    let init = parse_initial_guess(&args.init)?;
    let u0 = init.build(&space);
    let options = SolverOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        pin_center: args.pin || matches!(init, InitialGuess::Tanh | InitialGuess::TanhShift(_)),
        ..Default::default()
    };
    let outcome = newton_solve(&space, &nl, &u0, &options)?;
    save_field(&cli.out.join("solution.csv"), &outcome.u)?;
    let e = energy(&outcome.u, &nl, &Region::FullDomain)?;
    let params = json!({
        "nl": args.nl, "init": init.describe(), "tol": args.tol,
        "pin": options.pin_center, "seed": cli.seed,
    });
    let payload = json!({
        "converged": outcome.converged,
        "residual_norm": outcome.residual_norm,
        "iterations": outcome.iterations,
        "energy": e,
        "residual_history": outcome.residual_history,
        "solution_file": "solution.csv",
    });
    let mut report = Report::new("solve", Some(space.config.clone()), params, payload);
    if !outcome.converged {
        report = report.with_error(format!(
            "newton did not converge: residual {:.3e}",
            outcome.residual_norm
        ));
        report.write(&cli.out)?;
        return Ok(ExitCode::from(3));
    }
    report.write(&cli.out)?;
    println!("solve: converged in {} iterations, residual {:.3e}", outcome.iterations, outcome.residual_norm);
    Ok(ExitCode::SUCCESS)
}

fn cmd_stability(cli: &Cli, args: &StabilityArgs) -> Result<ExitCode, Error> {
    let u = load_field(&args.solution)?;
    let nl = parse_nonlinearity(&args.nl)?;
    let spectral = min_eigenpair(&u, &nl, args.tol)?;
    save_field(&cli.out.join("eigenfield.csv"), &spectral.eigenfield)?;
    let summary = spectral.summary(Some("eigenfield.csv".into()));
    let report = Report::new(
        "stability",
        Some(u.space().config.clone()),
        json!({"nl": args.nl, "tol": args.tol}),
        serde_json::to_value(&summary)?,
    );
    report.write(&cli.out)?;
    println!(
        "stability: lambda_min = {:.6e}, {:?}, stable = {}",
        spectral.lambda_min, spectral.positivity, spectral.stable
    );
    Ok(ExitCode::SUCCESS)
}

fn compact_random_fields(
    space: &Arc<ModelSpace>,
    trials: usize,
    seed: u64,
) -> Vec<ScalarField> {
    use rand_like::*;
    // Deterministic xorshift-free generator built on the report seed; the
    // core crate re-exports nothing random, so roll splitmix64 here.
    mod rand_like {
        pub struct SplitMix(pub u64);
        impl SplitMix {
            pub fn next_f64(&mut self) -> f64 {
                self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
                let mut z = self.0;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
                z = z ^ (z >> 31);
                (z >> 11) as f64 / (1u64 << 53) as f64
            }
        }
    }
    let mut rng = SplitMix(seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493));
    (0..trials)
        .map(|_| {
            let mut values: Vec<f64> = (0..space.num_nodes())
                .map(|_| rng.next_f64() - 0.5)
                .collect();
            for p in 0..space.num_nodes() {
                if space.grid.on_truncation_boundary(p) {
                    values[p] = 0.0;
                }
            }
            ScalarField::new(space.clone(), values).expect("finite")
        })
        .collect()
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<ExitCode, Error> {
    let u = load_field(&args.solution)?;
    let space = u.space().clone();
    let nl = parse_nonlinearity(&args.nl)?;
    let spectral = min_eigenpair(&u, &nl, 1e-10)?;
    let shifted = kernel_shifted_nonlinearity(&nl, &spectral);
    let w = spectral.eigenfield.clone();
    let fields = compact_random_fields(&space, args.trials, cli.seed);
    let mut gaps = Vec::with_capacity(args.trials);
    let mut pass = true;
    let h_axis = space.grid.spacing[0];
    for h in &fields {
        let (gap, scale, tol) = match args.lemma.as_str() {
            "picone" => {
                let r = picone_gap(&u, &shifted, &w, h)?;
                let scale = r.lhs.abs().max(r.rhs.abs()).max(1e-30);
                (r.gap, scale, 1e-8)
            }
            "lemma32" => {
                let r = integral_inequality_gap(&u, &shifted, &w, h)?;
                let scale = r.lhs.abs().max(r.rhs.abs()).max(1e-30);
                // Equality case up to the O(h²) Bochner discretization.
                (r.gap, scale, 50.0 * h_axis * h_axis)
            }
            "lemma34" => {
                let r = rigidity_gap(&u, &nl, &spectral, h)?;
                let scale = r.lhs.abs().max(r.rhs.abs()).max(1e-30);
                // One-sided: rhs dominates lhs.
                let gap = r.rhs - r.lhs;
                pass &= gap >= -1e-8 * scale;
                gaps.push(gap / scale);
                continue;
            }
            other => return Err(Error::config("lemma", format!("unknown identity `{other}`"))),
        };
        pass &= gap.abs() <= tol * scale || gap >= -tol * scale;
        gaps.push(gap / scale);
    }
    let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    let payload = json!({
        "lemma": args.lemma,
        "trials": args.trials,
        "relative_gap_min": min,
        "relative_gap_mean": mean,
        "relative_gap_max": max,
        "lambda_min": spectral.lambda_min,
        "pass": pass,
    });
    let report = Report::new(
        "verify",
        Some(space.config.clone()),
        json!({"nl": args.nl, "seed": cli.seed, "trials": args.trials}),
        payload,
    );
    report.write(&cli.out)?;
    println!(
        "verify {}: relative gap in [{:.3e}, {:.3e}], pass = {pass}",
        args.lemma, min, max
    );
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn load_spectral(path: &Path, base: &Arc<ModelSpace>) -> Result<SpectralReport, Error> {
    let report_path = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&report_path)?;
    let report: Report = serde_json::from_str(&text)?;
    let summary: driftlab::stability::SpectralSummary =
        serde_json::from_value(report.payload.clone())?;
    let field_rel = summary
        .eigenfield_file
        .ok_or_else(|| Error::FieldFile("spectral report lacks eigenfield_file".into()))?;
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let eigenfield = load_field(&dir.join(field_rel))?;
    if eigenfield.space().config != base.config {
        return Err(Error::SpaceMismatch);
    }
    let eigenfield = ScalarField::new(base.clone(), eigenfield.values().to_vec())?;
    Ok(SpectralReport {
        lambda_min: summary.lambda_min,
        eigenfield,
        positivity: summary.positivity,
        stable: summary.stable,
        tol: summary.tol,
        tol_stab: summary.tol_stab,
        residual: summary.residual,
        iterations: summary.iterations,
    })
}

fn cmd_split(cli: &Cli, args: &SplitArgs) -> Result<ExitCode, Error> {
    let u = load_field(&args.solution)?;
    let space = u.space().clone();
    let nl = parse_nonlinearity(&args.nl)?;
    let spectral = load_spectral(&args.spectral, &space)?;
    let tols = load_tols(cli)?;
    let options = AuditOptions {
        levels: args.levels,
        seeds: args.seeds,
        ..Default::default()
    };
    let split = splitting_audit(&u, &nl, &spectral, &tols, &options)?;
    let level_rows: Vec<Vec<String>> = split
        .levels
        .iter()
        .map(|l| {
            vec![
                l.level.to_string(),
                l.points.to_string(),
                l.grad_mean.to_string(),
                l.grad_scatter.to_string(),
                l.umbilicity_max.to_string(),
                l.curvature_margin_min.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cli.out.join("levels.csv"),
        &["level", "points", "grad_mean", "grad_scatter", "umbilicity_max", "curvature_margin_min"],
        &level_rows,
    )?;
    let seed_rows: Vec<Vec<String>> = split
        .flow_seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                s.start_level.to_string(),
                s.arrival_level.to_string(),
                s.transport_error.to_string(),
                s.geodesic_residual.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cli.out.join("trajectories.csv"),
        &["seed", "start_level", "arrival_level", "transport_error", "geodesic_residual"],
        &seed_rows,
    )?;
    let verdicts = split.verdicts.clone();
    let report = Report::new(
        "split-report",
        Some(space.config.clone()),
        json!({"nl": args.nl, "levels": args.levels, "seeds": args.seeds, "tols": tols}),
        serde_json::to_value(&split)?,
    )
    .with_verdicts(verdicts);
    report.write(&cli.out)?;
    for v in &report.verdicts {
        println!(
            "{}: {} ({:.3e} vs {:.3e})",
            v.name,
            if v.pass { "pass" } else { "FAIL" },
            v.statistic,
            v.threshold
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_capacity(cli: &Cli, args: &CapacityArgs) -> Result<ExitCode, Error> {
    let space = load_space(&args.config)?;
    let k_region = parse_region(&args.k, &space)?;
    let omega = parse_region(&args.omega, &space)?;
    let capacitor = solve_capacitor(&space, &k_region, &omega)?;
    save_field(&cli.out.join("phi.csv"), &capacitor.phi)?;
    let min = capacitor.phi.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = capacitor.phi.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let payload = json!({
        "energy": capacitor.energy,
        "free_nodes": capacitor.free_nodes,
        "cg_iterations": capacitor.cg_iterations,
        "phi_min": min,
        "phi_max": max,
        "phi_file": "phi.csv",
    });
    let report = Report::new(
        "capacity",
        Some(space.config.clone()),
        json!({"K": args.k, "omega": args.omega}),
        payload,
    );
    report.write(&cli.out)?;
    println!("capacity: energy = {:.6e}", capacitor.energy);
    Ok(ExitCode::SUCCESS)
}

fn cmd_parabolicity(cli: &Cli, args: &ParabolicityArgs) -> Result<ExitCode, Error> {
    let space = load_space(&args.config)?;
    let verdict = match args.method.as_str() {
        "growth" => {
            let v = driftlab::capacity::parabolicity_by_growth_from(&space, args.rmin, args.rmax)?;
            // Integrand table for plotting.
            let table = space.ball_volume_table(&space.center());
            let mut rows = Vec::new();
            let steps = 64;
            for i in 0..=steps {
                let r = 1.0 + (args.rmax - 1.0) * i as f64 / steps as f64;
                if r >= space.axis_extent() - 2.0 * space.grid.spacing[0] {
                    break;
                }
                let l = boundary_area(&space, r).unwrap_or(f64::NAN);
                let vol = table.volume(r);
                rows.push(vec![
                    r.to_string(),
                    l.to_string(),
                    vol.to_string(),
                    (1.0 / l).to_string(),
                    (r / vol).to_string(),
                ]);
            }
            write_csv(
                &cli.out.join("integrands.csv"),
                &["r", "boundary_L", "volume_V", "inv_L", "r_over_V"],
                &rows,
            )?;
            v
        }
        "capacity" => {
            let k_region = parse_region(&args.k, &space)?;
            let radii = args.radii.clone().unwrap_or_else(|| {
                let mut r = Vec::new();
                let mut x = 2.0;
                while x < space.axis_extent() {
                    r.push(x);
                    x *= 2.0;
                }
                r
            });
            let exhaustion = driftlab::Exhaustion::balls(&space, &radii);
            let v = parabolicity_by_capacity(&space, &k_region, &exhaustion, TOL_CAP_REL)?;
            if let driftlab::capacity::ParabolicityEvidence::Capacity { sequence } = &v.evidence {
                let rows: Vec<Vec<String>> = sequence
                    .energies
                    .iter()
                    .zip(&radii)
                    .map(|(e, r)| vec![r.to_string(), e.to_string()])
                    .collect();
                write_csv(&cli.out.join("sequence.csv"), &["radius", "energy"], &rows)?;
            }
            v
        }
        other => return Err(Error::config("method", format!("unknown method `{other}`"))),
    };
    let report = Report::new(
        "parabolicity",
        Some(space.config.clone()),
        json!({"method": args.method, "rmax": args.rmax, "rmin": args.rmin}),
        serde_json::to_value(&verdict)?,
    );
    report.write(&cli.out)?;
    println!("parabolicity ({}): {:?}", args.method, verdict.verdict);
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(cli: &Cli, args: &ProfileArgs) -> Result<ExitCode, Error> {
    let nl = parse_nonlinearity(&args.nl)?;
    let boundary = match &args.bv {
        Some(spec) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::config("bv", "expected `lo,hi`"));
            }
            (
                parts[0].trim().parse::<f64>().map_err(|_| Error::config("bv", "bad number"))?,
                parts[1].trim().parse::<f64>().map_err(|_| Error::config("bv", "bad number"))?,
            )
        }
        None => {
            let tail = (args.extent / 2f64.sqrt()).tanh();
            (-tail, tail)
        }
    };
    let sol = solve_profile(&nl, args.k, boundary, args.extent, args.h, args.tol, args.pin)?;
    let rows: Vec<Vec<String>> = sol
        .t
        .iter()
        .zip(sol.y.iter().zip(&sol.y_prime))
        .map(|(t, (y, yp))| vec![t.to_string(), y.to_string(), yp.to_string()])
        .collect();
    write_csv(&cli.out.join("profile.csv"), &["t", "y", "y_prime"], &rows)?;
    let payload = json!({
        "k": sol.k,
        "ode_residual_max": sol.ode_residual_max,
        "monotone": sol.monotone,
        "nodes": sol.y.len(),
        "profile_file": "profile.csv",
    });
    let report = Report::new(
        "profile",
        None,
        json!({"nl": args.nl, "k": args.k, "T": args.extent, "h": args.h, "tol": args.tol}),
        payload,
    );
    report.write(&cli.out)?;
    println!(
        "profile: residual {:.3e}, monotone = {}",
        sol.ode_residual_max, sol.monotone
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_growth(cli: &Cli, args: &GrowthArgs) -> Result<ExitCode, Error> {
    let u = load_field(&args.solution)?;
    let samples = gradient_energy_samples(&u, &args.radii);
    let diag = growth_diagnostic(&samples)?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|(r, q)| vec![r.to_string(), q.to_string()])
        .collect();
    write_csv(&cli.out.join("samples.csv"), &["R", "Q"], &rows)?;
    let chain = if u.space().ndim() >= 2 {
        let feasible: Vec<f64> = args
            .radii
            .iter()
            .cloned()
            .filter(|r| r * 2f64.sqrt() <= u.space().axis_extent())
            .collect();
        if feasible.is_empty() {
            None
        } else {
            Some(chain_inequality(&u, &feasible)?)
        }
    } else {
        None
    };
    let payload = json!({
        "diagnostic": diag,
        "chain": chain,
    });
    let report = Report::new(
        "growth",
        Some(u.space().config.clone()),
        json!({"radii": args.radii}),
        payload,
    );
    report.write(&cli.out)?;
    println!(
        "growth: fitted R^{:.3} (log R)^{:.3}, small-o = {}",
        diag.exponent_p, diag.exponent_q, diag.small_o_flag
    );
    Ok(ExitCode::SUCCESS)
}

fn anchor_config() -> SpaceConfig {
    SpaceConfig::cylinder(12.0, 0.02, vec![1.28], 0.02, driftlab::DensityPreset::Zero)
}

fn cmd_demo(cli: &Cli, args: &DemoArgs) -> Result<ExitCode, Error> {
    let config = match &args.config {
        Some(path) => driftlab::config::parse_space_config(&std::fs::read_to_string(path)?)?,
        None => anchor_config(),
    };
    let tols = load_tols(cli)?;
    let space = Arc::new(ModelSpace::from_config(config.clone())?);
    let nl = Nonlinearity::AllenCahn;

    // Solve the Allen-Cahn problem from the tanh preset.
    let outcome = newton_solve(
        &space,
        &nl,
        &InitialGuess::Tanh.build(&space),
        &SolverOptions {
            tol: 1e-10,
            pin_center: true,
            ..Default::default()
        },
    )?;
    if !outcome.converged {
        let report = Report::new("theorem12-demo", Some(config), json!({}), json!({}))
            .with_error("solver did not converge".into());
        report.write(&cli.out)?;
        return Ok(ExitCode::from(3));
    }
    let u = outcome.u;
    save_field(&cli.out.join("solution.csv"), &u)?;
    let mut sup_error = 0.0f64;
    for p in 0..space.num_nodes() {
        let t = space.grid.coords(p)[0];
        sup_error = sup_error.max((u.get(p) - (t / 2f64.sqrt()).tanh()).abs());
    }

    // Stability.
    let spectral = min_eigenpair(&u, &nl, 1e-10)?;
    save_field(&cli.out.join("eigenfield.csv"), &spectral.eigenfield)?;

    // Splitting audit.
    let split = splitting_audit(&u, &nl, &spectral, &tols, &AuditOptions::default())?;

    // Profile cross-check against the fiber average.
    let avg = fiber_average(&u);
    let nn = avg.len();
    let profile = solve_profile(
        &nl,
        split.k_mean,
        (avg[0], avg[nn - 1]),
        space.axis_extent(),
        space.grid.spacing[0],
        1e-9,
        Some(avg[nn / 2]),
    )?;
    let profile_sup = avg
        .iter()
        .zip(&profile.y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // Growth diagnostic: eight geometric radii above 1 spanning at
    // least two doublings, capped so the chain estimate stays inside
    // the truncation.
    let radii: Vec<f64> = {
        let r_min = 1.05f64.max(space.axis_extent() / 12.0);
        let r_max = space.axis_extent() / 2f64.sqrt() * (1.0 - 1e-9);
        let ratio = (r_max / r_min).powf(1.0 / 7.0);
        (0..8).map(|k| r_min * ratio.powi(k)).collect()
    };
    let samples = gradient_energy_samples(&u, &radii);
    let diag = growth_diagnostic(&samples)?;
    let chain = chain_inequality(&u, &radii)?;
    let chain_holds = chain.iter().all(|c| c.holds);

    // Drifted stage: the tilted cubic carries the exact drifted front.
    let drift = args.drift;
    let drifted_config = SpaceConfig {
        density: driftlab::DensityPreset::LinearSlope(drift),
        ..config.clone()
    };
    let drifted_space = Arc::new(ModelSpace::from_config(drifted_config)?);
    let drifted_nl = tilted_cubic(drift);
    let shift = drifted_front_shift(drift, drifted_space.axis_extent());
    let drifted = newton_solve(
        &drifted_space,
        &drifted_nl,
        &InitialGuess::TanhShift(shift).build(&drifted_space),
        &SolverOptions {
            tol: 1e-3,
            pin_center: true,
            ..Default::default()
        },
    )?;
    let drifted_spectral = min_eigenpair(&drifted.u, &drifted_nl, 1e-9)?;
    let drifted_split = splitting_audit(
        &drifted.u,
        &drifted_nl,
        &drifted_spectral,
        &ToleranceSet {
            // The pinned station carries the O(h²) translation force.
            ode_residual: tols.ode_residual.max(1e-3),
            ..tols.clone()
        },
        &AuditOptions::default(),
    )?;
    let drifted_avg = fiber_average(&drifted.u);
    let dn = drifted_avg.len();
    let drifted_profile = solve_profile(
        &drifted_nl,
        drift,
        (drifted_avg[0], drifted_avg[dn - 1]),
        drifted_space.axis_extent(),
        drifted_space.grid.spacing[0],
        1e-8,
        Some(drifted_avg[dn / 2]),
    )?;
    let drifted_sup = drifted_avg
        .iter()
        .zip(&drifted_profile.y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    let mut verdicts = vec![
        Verdict {
            name: "solution_matches_heteroclinic".into(),
            statistic: sup_error,
            threshold: 1e-4,
            pass: sup_error <= 1e-4,
        },
        Verdict {
            name: "lambda_min_near_zero".into(),
            statistic: spectral.lambda_min,
            threshold: 1e-3,
            pass: spectral.lambda_min.abs() <= 1e-3,
        },
        Verdict {
            name: "ground_state_positive".into(),
            statistic: if spectral.positivity == driftlab::stability::Positivity::StrictlyPositive
            {
                1.0
            } else {
                0.0
            },
            threshold: 1.0,
            pass: spectral.positivity == driftlab::stability::Positivity::StrictlyPositive,
        },
        Verdict {
            name: "profile_cross_check".into(),
            statistic: profile_sup,
            threshold: 1e-4,
            pass: profile_sup <= 1e-4,
        },
        Verdict {
            name: "gradient_energy_small_o".into(),
            statistic: diag.exponent_p,
            threshold: 2.0,
            pass: diag.small_o_flag,
        },
        Verdict {
            name: "chain_inequality".into(),
            statistic: if chain_holds { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass: chain_holds,
        },
        Verdict {
            name: "drifted_k_estimate".into(),
            statistic: drifted_split.k_mean,
            threshold: 1e-3,
            pass: (drifted_split.k_mean - drift).abs() <= 1e-3,
        },
        Verdict {
            name: "drifted_profile_cross_check".into(),
            statistic: drifted_sup,
            threshold: 1e-4,
            pass: drifted_sup <= 1e-4,
        },
    ];
    verdicts.extend(split.verdicts.clone());

    let payload = json!({
        "solve": {
            "residual_norm": outcome.residual_norm,
            "iterations": outcome.iterations,
            "sup_error_vs_heteroclinic": sup_error,
        },
        "spectral": spectral.summary(Some("eigenfield.csv".into())),
        "splitting": split,
        "profile_cross_check_sup": profile_sup,
        "growth": diag,
        "chain": chain,
        "drifted": {
            "k": drift,
            "residual_norm": drifted.residual_norm,
            "k_mean": drifted_split.k_mean,
            "k_stdev": drifted_split.k_stdev,
            "profile_sup": drifted_sup,
            "ode_residual": drifted_split.ode_residual_max,
        },
    });
    let report = Report::new(
        "theorem12-demo",
        Some(config),
        json!({"seed": cli.seed, "drift": drift}),
        payload,
    )
    .with_verdicts(verdicts);
    report.write(&cli.out)?;
    let all = report.all_pass();
    for v in &report.verdicts {
        println!(
            "{}: {} ({:.3e} vs {:.3e})",
            v.name,
            if v.pass { "pass" } else { "FAIL" },
            v.statistic,
            v.threshold
        );
    }
    println!("theorem12-demo: {}", if all { "all verdicts pass" } else { "VERDICTS FAILED" });
    Ok(ExitCode::SUCCESS)
}
