//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line through the harness. The reference scenario (Allen-Cahn on
//! ℝ×S¹, T = 12, h = 0.02, fiber 1.28) is solved once and shared.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use driftlab::capacity::{
    capacity_limit, parabolicity_by_capacity, parabolicity_by_growth, solve_capacitor,
    Parabolicity, TOL_CAP_REL,
};
use driftlab::field::masked_max_abs;
use driftlab::profile::{
    cutoff_energy, growth_diagnostic, log_cutoff, log_cutoff_gradient_sq, solve_profile,
};
use driftlab::rigidity::{
    kato_decomposition_field, sample_level_set, splitting_audit, AuditOptions, SplittingReport,
    ToleranceSet,
};
use driftlab::solve::{
    drifted_front_shift, fiber_average, newton_solve, tilted_cubic, InitialGuess, SolverOptions,
};
use driftlab::stability::{
    kernel_shifted_nonlinearity, min_eigenpair, picone_gap, Positivity, SpectralReport,
};
use driftlab::{
    bochner_residual, drift_laplacian, weighted_dirichlet, weighted_inner, DensityPreset,
    Exhaustion, ModelSpace, Nonlinearity, Region, ScalarField, SpaceConfig,
};

const ANCHOR_T: f64 = 12.0;
const ANCHOR_H: f64 = 0.02;
const ANCHOR_FIBER: f64 = 1.28;

struct Anchor {
    space: Arc<ModelSpace>,
    u: ScalarField,
    spectral: SpectralReport,
    split: SplittingReport,
}

fn anchor() -> &'static Anchor {
    static ANCHOR: OnceLock<Anchor> = OnceLock::new();
    ANCHOR.get_or_init(|| {
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::cylinder(
                ANCHOR_T,
                ANCHOR_H,
                vec![ANCHOR_FIBER],
                ANCHOR_H,
                DensityPreset::Zero,
            ))
            .unwrap(),
        );
        let out = newton_solve(
            &space,
            &Nonlinearity::AllenCahn,
            &InitialGuess::Tanh.build(&space),
            &SolverOptions {
                tol: 1e-10,
                pin_center: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.converged, "anchor solve failed: {:?}", out.residual_history);
        let spectral = min_eigenpair(&out.u, &Nonlinearity::AllenCahn, 1e-10).unwrap();
        let split = splitting_audit(
            &out.u,
            &Nonlinearity::AllenCahn,
            &spectral,
            &ToleranceSet::default(),
            &AuditOptions::default(),
        )
        .unwrap();
        Anchor {
            space,
            u: out.u,
            spectral,
            split,
        }
    })
}

struct Drifted {
    space: Arc<ModelSpace>,
    u: ScalarField,
    split: SplittingReport,
}

fn drifted() -> &'static Drifted {
    static DRIFTED: OnceLock<Drifted> = OnceLock::new();
    DRIFTED.get_or_init(|| {
        let k = 0.3;
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::cylinder(
                ANCHOR_T,
                ANCHOR_H,
                vec![ANCHOR_FIBER],
                ANCHOR_H,
                DensityPreset::LinearSlope(k),
            ))
            .unwrap(),
        );
        let nl = tilted_cubic(k);
        let out = newton_solve(
            &space,
            &nl,
            &InitialGuess::TanhShift(drifted_front_shift(k, ANCHOR_T)).build(&space),
            &SolverOptions {
                tol: 1e-3,
                pin_center: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.converged, "drifted solve failed: {:?}", out.residual_history);
        let spectral = min_eigenpair(&out.u, &nl, 1e-9).unwrap();
        let split = splitting_audit(
            &out.u,
            &nl,
            &spectral,
            &ToleranceSet::default(),
            &AuditOptions::default(),
        )
        .unwrap();
        Drifted {
            space,
            u: out.u,
            split,
        }
    })
}

fn compact_random(space: &Arc<ModelSpace>, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut values: Vec<f64> = (0..space.num_nodes())
        .map(|_| rng.random::<f64>() - 0.5)
        .collect();
    for p in 0..space.num_nodes() {
        if space.grid.on_truncation_boundary(p) {
            values[p] = 0.0;
        }
    }
    ScalarField::new(space.clone(), values).unwrap()
}

fn family_spaces() -> Vec<Arc<ModelSpace>> {
    vec![
        Arc::new(
            ModelSpace::from_config(SpaceConfig::line(4.0, 0.05, DensityPreset::Gaussian))
                .unwrap(),
        ),
        Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 2.0, 0.1)).unwrap()),
        Arc::new(
            ModelSpace::from_config(SpaceConfig::cylinder(
                2.0,
                0.1,
                vec![1.0],
                0.1,
                DensityPreset::LinearSlope(0.4),
            ))
            .unwrap(),
        ),
        Arc::new(
            ModelSpace::from_config(SpaceConfig {
                family: driftlab::Family::WarpedProduct,
                dimension: 2,
                axis_extent: 2.0,
                spacing: vec![0.1, 0.1],
                fiber_lengths: vec![1.0],
                density: DensityPreset::Gaussian,
                warp_lambda: vec![0.2, 0.1],
            })
            .unwrap(),
        ),
    ]
}

#[test]
fn criterion_01_summation_by_parts_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for space in family_spaces() {
        for _ in 0..100 {
            let u = ScalarField::new(
                space.clone(),
                (0..space.num_nodes())
                    .map(|_| rng.random::<f64>() - 0.5)
                    .collect(),
            )
            .unwrap();
            let h = compact_random(&space, &mut rng);
            let lhs = weighted_dirichlet(&h, &u).unwrap();
            let rhs = -weighted_inner(&h, &drift_laplacian(&u)).unwrap();
            // Relative to the form's Cauchy-Schwarz magnitude: random
            // fields cancel the signed value itself by orders of
            // magnitude, which would measure summation order rather
            // than the adjoint construction.
            let scale = (weighted_dirichlet(&h, &h).unwrap()
                * weighted_dirichlet(&u, &u).unwrap())
            .sqrt()
            .max(lhs.abs())
            .max(1e-30);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * scale,
                "family {:?}: relative defect {}",
                space.config.family,
                (lhs - rhs).abs() / scale
            );
        }
    }
    println!("criterion 1 pass: summation by parts exact to 1e-12 on all four families");
}

#[test]
fn criterion_02_bochner_residual_convergence() {
    for density in [DensityPreset::Zero, DensityPreset::LinearSlope(0.3)] {
        let mut errs = Vec::new();
        for cells in [48usize, 96] {
            let h = 2.0 * std::f64::consts::PI / cells as f64;
            let config = SpaceConfig {
                density: density.clone(),
                ..SpaceConfig::flat_box(2, std::f64::consts::PI, h)
            };
            let space = Arc::new(ModelSpace::from_config(config).unwrap());
            let u = ScalarField::from_fn(space.clone(), |c| c[0].sin() * c[1].sin());
            errs.push(masked_max_abs(&bochner_residual(&u)));
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.2..=4.8).contains(&ratio),
            "density {density:?}: errors {errs:?}, ratio {ratio}"
        );
    }
    println!("criterion 2 pass: Bochner residual refines at ratio 4 ± 0.8 for f in {{0, linear}}");
}

#[test]
fn criterion_03_kato_identity() {
    // Order on the analytic field.
    let mut errs = Vec::new();
    for h in [0.05, 0.025] {
        let space = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 2.0, h)).unwrap());
        let u = ScalarField::from_fn(space.clone(), |c| c[0] + 0.2 * c[1].sin());
        let field = kato_decomposition_field(&u, 0);
        let mut max_err = 0.0f64;
        for p in 0..space.num_nodes() {
            if space.grid.is_interior(p, 2) {
                if let Some(d) = &field[p] {
                    max_err = max_err.max(d.error.abs());
                }
            }
        }
        errs.push(max_err);
    }
    let order = (errs[0] / errs[1]).log2();
    assert!(order >= 1.9, "errors {errs:?}, order {order}");

    // Both sides collapse on the cylinder profile.
    let lab = anchor();
    let field = kato_decomposition_field(&lab.u, 0);
    for d in field.into_iter().flatten() {
        assert!(d.lhs.abs() <= 1e-6, "lhs {}", d.lhs);
        assert!(d.rhs.abs() <= 1e-6, "rhs {}", d.rhs);
    }
    println!("criterion 3 pass: Kato order {order:.2} >= 1.9; cylinder sides <= 1e-6");
}

#[test]
fn criterion_04_picone_gaps() {
    let lab = anchor();
    let shifted = kernel_shifted_nonlinearity(&Nonlinearity::AllenCahn, &lab.spectral);
    let w = lab.spectral.eigenfield.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..200 {
        let h = compact_random(&lab.space, &mut rng);
        let report = picone_gap(&lab.u, &shifted, &w, &h).unwrap();
        let scale = report.lhs.abs().max(report.rhs.abs()).max(1e-30);
        assert!(
            report.gap.abs() <= 1e-8 * scale,
            "equality-case gap {} at scale {scale}",
            report.gap
        );
    }
    // Strict supersolution: the positive kernel plus a constant against
    // the potential lowered enough to keep a uniform margin.
    let wmax = lab.spectral.eigenfield.max_abs();
    let w_super = lab.spectral.eigenfield.map(|v| v / wmax + 0.1);
    let weakened = shifted.shifted(-0.3);
    for _ in 0..200 {
        let h = compact_random(&lab.space, &mut rng);
        let report = picone_gap(&lab.u, &weakened, &w_super, &h).unwrap();
        assert!(report.supersolution_defect <= 1e-9);
        let scale = report.lhs.abs().max(report.rhs.abs()).max(1e-30);
        assert!(
            report.gap >= -1e-8 * scale,
            "supersolution gap {}",
            report.gap
        );
    }
    println!("criterion 4 pass: picone |gap| <= 1e-8 scale (kernel), gap >= -1e-8 scale (supersolution), 200 trials each");
}

#[test]
fn criterion_05_theorem_1_2_anchor() {
    let lab = anchor();
    let mut sup = 0.0f64;
    for p in 0..lab.space.num_nodes() {
        let t = lab.space.grid.coords(p)[0];
        sup = sup.max((lab.u.get(p) - (t / 2f64.sqrt()).tanh()).abs());
    }
    assert!(sup <= 1e-4, "sup error vs heteroclinic {sup}");
    assert!(
        lab.spectral.lambda_min.abs() <= 1e-3,
        "lambda_min {}",
        lab.spectral.lambda_min
    );
    assert_eq!(lab.spectral.positivity, Positivity::StrictlyPositive);
    assert!(
        lab.split.fiber_dependence <= 1e-8,
        "fiber dependence {}",
        lab.split.fiber_dependence
    );
    assert!(
        lab.split.ratio_constancy <= 1e-6,
        "ratio constancy {}",
        lab.split.ratio_constancy
    );
    assert!(
        lab.split.umbilicity_defect_max <= 1e-4,
        "umbilicity {}",
        lab.split.umbilicity_defect_max
    );
    assert!(
        lab.split.lambda_abs_max <= 1e-4,
        "lambda field {}",
        lab.split.lambda_abs_max
    );
    assert!(lab.split.k_mean.abs() <= 1e-4, "k estimate {}", lab.split.k_mean);
    assert!(
        lab.split.ode_residual_max <= 1e-3,
        "ODE residual {}",
        lab.split.ode_residual_max
    );
    println!(
        "criterion 5 pass: sup {sup:.2e}, lambda {:.2e}, ratio {:.2e}, ODE {:.2e}",
        lab.spectral.lambda_min, lab.split.ratio_constancy, lab.split.ode_residual_max
    );
}

#[test]
fn criterion_06_drifted_variant() {
    let lab = drifted();
    assert!(
        (lab.split.k_mean - 0.3).abs() <= 1e-3,
        "k estimate {}",
        lab.split.k_mean
    );
    let avg = fiber_average(&lab.u);
    let n = avg.len();
    let profile = solve_profile(
        &tilted_cubic(0.3),
        0.3,
        (avg[0], avg[n - 1]),
        ANCHOR_T,
        ANCHOR_H,
        1e-8,
        Some(avg[n / 2]),
    )
    .unwrap();
    let sup = avg
        .iter()
        .zip(&profile.y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(sup <= 1e-4, "PDE/profile sup difference {sup}");
    let _ = &lab.space;
    println!(
        "criterion 6 pass: k = {:.6} (target 0.3), profile agreement {sup:.2e}",
        lab.split.k_mean
    );
}

#[test]
fn criterion_07_capacity() {
    // Annulus energies against 2π/log R.
    let space = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 34.0, 0.125)).unwrap());
    let k = Region::ball_at_center(&space, 1.0);
    for r in [8.0, 16.0, 32.0] {
        let cap = solve_capacitor(&space, &k, &Region::ball_at_center(&space, r)).unwrap();
        let exact = 2.0 * std::f64::consts::PI / r.ln();
        assert!(
            (cap.energy - exact).abs() / exact <= 0.05,
            "R = {r}: {} vs {exact}",
            cap.energy
        );
    }

    // Domain monotonicity over 50 randomized nested pairs.
    let small = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 4.0, 0.2)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..50 {
        let rk: f64 = 0.4 + 0.6 * rng.random::<f64>();
        let r1: f64 = rk + 0.4 + rng.random::<f64>();
        let r2: f64 = (r1 + 0.2 + rng.random::<f64>()).min(3.6);
        let kk = Region::ball_at_center(&small, rk);
        let e1 = solve_capacitor(&small, &kk, &Region::ball_at_center(&small, r1))
            .unwrap()
            .energy;
        let e2 = solve_capacitor(&small, &kk, &Region::ball_at_center(&small, r2))
            .unwrap()
            .energy;
        assert!(e1 >= e2 - 1e-9 * e1.max(1.0), "monotonicity: {e1} < {e2}");
    }

    // Exhaustion independence.
    let box17 = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 17.0, 0.25)).unwrap());
    let kb = Region::ball_at_center(&box17, 1.0);
    let a = capacity_limit(
        &box17,
        &kb,
        &Exhaustion::balls(&box17, &[2.0, 4.0, 8.0, 16.0]),
        TOL_CAP_REL,
    )
    .unwrap();
    let b = capacity_limit(
        &box17,
        &kb,
        &Exhaustion::balls(&box17, &[2.5, 5.0, 10.0]),
        TOL_CAP_REL,
    )
    .unwrap();
    assert!(
        (a.limit_estimate - b.limit_estimate).abs() <= 2.0 * TOL_CAP_REL * a.energies[0],
        "exhaustion limits {} vs {}",
        a.limit_estimate,
        b.limit_estimate
    );

    // Parabolicity verdicts per family.
    let gauss = Arc::new(
        ModelSpace::from_config(SpaceConfig::line(8.0, 0.02, DensityPreset::Gaussian)).unwrap(),
    );
    let vg_cap = parabolicity_by_capacity(
        &gauss,
        &Region::ball_at_center(&gauss, 1.0),
        &Exhaustion::balls(&gauss, &[2.0, 3.5, 5.0, 7.0]),
        TOL_CAP_REL,
    )
    .unwrap();
    assert_eq!(vg_cap.verdict, Parabolicity::Parabolic);
    let vg_growth = parabolicity_by_growth(&gauss, 7.0).unwrap();
    assert_eq!(vg_growth.verdict, Parabolicity::Parabolic);

    let flat2 = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 12.0, 0.25)).unwrap());
    assert_eq!(
        parabolicity_by_growth(&flat2, 10.0).unwrap().verdict,
        Parabolicity::Parabolic
    );
    let flat3 = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(3, 9.0, 0.25)).unwrap());
    assert_eq!(
        parabolicity_by_growth(&flat3, 8.0).unwrap().verdict,
        Parabolicity::Inconclusive
    );
    println!(
        "criterion 7 pass: annulus within 5%, monotone over 50 pairs, exhaustion-independent; \
         verdicts: gaussian line Parabolic, flat 2D Parabolic, flat 3D Inconclusive"
    );
}

#[test]
fn criterion_08_cutoff_machinery() {
    for radius in [2.0, 9.0, 144.0] {
        assert_eq!(log_cutoff(radius, radius.sqrt()).unwrap(), 1.0);
        assert_eq!(log_cutoff(radius, radius).unwrap(), 0.0);
        assert!(log_cutoff_gradient_sq(radius, radius.sqrt() * 0.99).unwrap() == 0.0);
    }

    // Bounded-energy field: the annulus energy decays along doubling R.
    let lab = anchor();
    let mut values = Vec::new();
    for radius in [3.0, 6.0, 12.0] {
        values.push(cutoff_energy(&lab.u, radius).unwrap());
    }
    assert!(
        values[1] < values[0] && values[2] < values[1],
        "not decreasing: {values:?}"
    );
    assert!(
        values[2] <= 0.25 * values[0],
        "tail too heavy: {values:?}"
    );

    // |∇u| = r in flat 2D grows too fast: the annulus energy stays up.
    let space = Arc::new(ModelSpace::from_config(SpaceConfig::flat_box(2, 16.0, 0.1)).unwrap());
    let quad = ScalarField::from_fn(space.clone(), |c| 0.5 * (c[0] * c[0] + c[1] * c[1]));
    let e0 = cutoff_energy(&quad, 4.0).unwrap();
    let e1 = cutoff_energy(&quad, 8.0).unwrap();
    let e2 = cutoff_energy(&quad, 16.0).unwrap();
    assert!(e2 >= 0.1 * e0, "negative control collapsed: {e0} {e1} {e2}");
    println!(
        "criterion 8 pass: knots exact; bounded field {values:?} decays; |∇u| = r control stays at {:.2}x",
        e2 / e0
    );
}

#[test]
fn criterion_09_negative_controls() {
    // Perturbed non-solution fails at least one splitting verdict.
    let space = Arc::new(
        ModelSpace::from_config(SpaceConfig::cylinder(
            8.0,
            0.05,
            vec![0.8],
            0.05,
            DensityPreset::Zero,
        ))
        .unwrap(),
    );
    let out = newton_solve(
        &space,
        &Nonlinearity::AllenCahn,
        &InitialGuess::Tanh.build(&space),
        &SolverOptions {
            tol: 1e-10,
            pin_center: true,
            ..Default::default()
        },
    )
    .unwrap();
    let fake = ScalarField::new(
        space.clone(),
        (0..space.num_nodes())
            .map(|p| {
                let c = space.grid.coords(p);
                out.u.get(p) + 0.3 * (c[1] * 2.0 * std::f64::consts::PI / 0.8).sin()
            })
            .collect(),
    )
    .unwrap();
    let spectral = min_eigenpair(&fake, &Nonlinearity::AllenCahn, 1e-8).unwrap();
    let report = splitting_audit(
        &fake,
        &Nonlinearity::AllenCahn,
        &spectral,
        &ToleranceSet::default(),
        &AuditOptions::default(),
    )
    .unwrap();
    let failed: Vec<&str> = report
        .verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| v.name.as_str())
        .collect();
    assert!(!failed.is_empty(), "perturbed field passed every verdict");

    // Concave density violates the curvature condition.
    let concave = Arc::new(
        ModelSpace::from_config(SpaceConfig::cylinder(
            6.0,
            0.05,
            vec![0.8],
            0.05,
            DensityPreset::Polynomial(vec![0.0, 0.0, -1.0]),
        ))
        .unwrap(),
    );
    let profile_field =
        ScalarField::from_fn(concave.clone(), |c| (c[0] / 2f64.sqrt()).tanh());
    let sample = sample_level_set(&profile_field, 0.0, 0).unwrap();
    let margin = driftlab::rigidity::curvature_condition(&concave, &sample).margin_min;
    assert!(margin < 0.0, "margin {margin}");

    // Q(R) = R² log R is not small-o.
    let radii: Vec<f64> = (1..=8).map(|k| 2f64.powi(k)).collect();
    let synthetic: Vec<(f64, f64)> = radii.iter().map(|&r| (r, r * r * r.ln())).collect();
    let diag = growth_diagnostic(&synthetic).unwrap();
    assert!(!diag.small_o_flag);
    println!(
        "criterion 9 pass: perturbed field fails {failed:?}; concave margin {margin:.2}; R²logR flagged non-small-o"
    );
}

#[test]
fn criterion_10_cli_determinism() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_driftlab");
    let dir = std::env::temp_dir().join("driftlab-acceptance-determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("space.cfg");
    std::fs::write(
        &config,
        "family = cylinder\nn = 2\nT = 6\nh = 0.05\nfiber_lengths = 0.8\ndensity = zero\n",
    )
    .unwrap();

    let run = |label: &str| -> Vec<(String, Vec<u8>)> {
        let out = dir.join(label);
        let solve_dir = out.join("solve");
        let status = Command::new(bin)
            .args(["--out", solve_dir.to_str().unwrap(), "solve", "--config"])
            .arg(&config)
            .args(["--nl", "allen-cahn", "--init", "tanh", "--tol", "1e-10"])
            .status()
            .unwrap();
        assert!(status.success());
        let solution = solve_dir.join("solution.csv");
        let verify_dir = out.join("verify");
        let status = Command::new(bin)
            .args([
                "--out",
                verify_dir.to_str().unwrap(),
                "--seed",
                "7",
                "verify",
                "picone",
                "--solution",
            ])
            .arg(&solution)
            .args(["--trials", "50"])
            .status()
            .unwrap();
        assert!(status.success());
        let profile_dir = out.join("profile");
        let status = Command::new(bin)
            .args([
                "--out",
                profile_dir.to_str().unwrap(),
                "profile",
                "--nl",
                "allen-cahn",
                "--T",
                "8",
                "--h",
                "0.01",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        [
            ("solve/solution.csv", solve_dir.join("solution.csv")),
            ("solve/report.json", solve_dir.join("report.json")),
            ("verify/report.json", verify_dir.join("report.json")),
            ("profile/report.json", profile_dir.join("report.json")),
            ("profile/profile.csv", profile_dir.join("profile.csv")),
        ]
        .into_iter()
        .map(|(name, path)| (name.to_string(), std::fs::read(path).unwrap()))
        .collect()
    };

    let first = run("a");
    let second = run("b");
    for ((name, bytes_a), (_, bytes_b)) in first.iter().zip(second.iter()) {
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
    println!("criterion 10 pass: repeated CLI runs byte-reproduce reports and tables");
}
