//! The semilinear problem `Δ_f u + g(u) = 0`: residual, energy, and a
//! damped Newton solver built on the adjoint-pair calculus.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{drift_laplacian, weighted_dirichlet_masked, KahanSum, ScalarField};
use crate::linalg::{minres, LinearOp};
use crate::nonlin::Nonlinearity;
use crate::space::{ModelSpace, Region};

/// Initial-guess presets; every report records which one was used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialGuess {
    /// tanh(t) in the axis coordinate.
    Tanh,
    /// tanh(t - c): a front parked at c. On drifted densities the
    /// stationary front sits at a nonzero shift (kT/(2√2) to leading
    /// order for f = kt).
    TanhShift(f64),
    Constant(f64),
    Random { seed: u64, amplitude: f64 },
}

impl InitialGuess {
    pub fn build(&self, space: &Arc<ModelSpace>) -> ScalarField {
        match self {
            InitialGuess::Tanh => ScalarField::from_fn(space.clone(), |c| c[0].tanh()),
            InitialGuess::TanhShift(shift) => {
                let shift = *shift;
                ScalarField::from_fn(space.clone(), move |c| (c[0] - shift).tanh())
            }
            InitialGuess::Constant(c) => ScalarField::constant(space.clone(), *c),
            InitialGuess::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let values = (0..space.num_nodes())
                    .map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                ScalarField::new(space.clone(), values).expect("finite random field")
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InitialGuess::Tanh => "tanh".into(),
            InitialGuess::TanhShift(c) => format!("tanh:{c}"),
            InitialGuess::Constant(c) => format!("const:{c}"),
            InitialGuess::Random { seed, amplitude } => format!("random:{seed},{amplitude}"),
        }
    }
}

/// The tilted cubic `g(s) = (1 - s²)(s + k/√2)`: the drifted analogue of
/// the double well, whose front `tanh(t/√2)` solves `-y'' + k y' = g(y)`
/// exactly. A balanced well admits no drifted front (multiply the ODE by
/// y' and integrate: k∫y'² must equal G(y(T)) - G(y(-T))).
pub fn tilted_cubic(k: f64) -> Nonlinearity {
    let b = k / 2f64.sqrt();
    Nonlinearity::Polynomial(vec![b, 1.0, -b, -1.0])
}

/// Leading-order interface position of the drifted front on `[-T, T]`
/// with Neumann truncation and density slope k.
pub fn drifted_front_shift(k: f64, extent: f64) -> f64 {
    k * extent / (2.0 * 2f64.sqrt())
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Convergence threshold on ‖Δ_f u + g(u)‖_∞.
    pub tol: f64,
    pub max_iter: usize,
    /// Freezes the weighted mean of u over the central axis slice; removes
    /// the translation degeneracy of axis-symmetric heteroclinics.
    pub pin_center: bool,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 50,
            pin_center: false,
            max_backtracks: 30,
        }
    }
}

/// Outcome of a Newton solve.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub u: ScalarField,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

/// Pointwise residual `Δ_f u + g(u)`.
pub fn pde_residual(u: &ScalarField, nl: &Nonlinearity) -> ScalarField {
    let lap = drift_laplacian(u);
    let values = lap
        .values()
        .iter()
        .zip(u.values())
        .map(|(&l, &v)| l + nl.g(v))
        .collect();
    ScalarField::masked(u.space().clone(), values)
}

/// Energy `E_f(u) = ½ ∫ |∇u|² dVol_f - ∫ G(u) dVol_f` over a region;
/// the Dirichlet part counts edges with both endpoints inside.
pub fn energy(u: &ScalarField, nl: &Nonlinearity, region: &Region) -> Result<f64> {
    let space = u.space();
    region.validate(space)?;
    let mut mask = vec![false; space.num_nodes()];
    for p in region.nodes(space) {
        mask[p] = true;
    }
    let dirichlet = weighted_dirichlet_masked(u, u, &mask)?;
    let mut potential = KahanSum::default();
    for p in 0..space.num_nodes() {
        if mask[p] {
            potential.add(nl.g_integral(u.get(p)) * space.measure(p));
        }
    }
    Ok(0.5 * dirichlet - potential.value())
}

struct JacobianOp<'a> {
    space: &'a ModelSpace,
    /// μ·g'(u) per node.
    mass_gp: Vec<f64>,
    /// Bordering column for the pinning constraint (empty when unpinned).
    pin: Vec<f64>,
}

impl LinearOp for JacobianOp<'_> {
    fn dim(&self) -> usize {
        self.space.num_nodes() + usize::from(!self.pin.is_empty())
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.space.num_nodes();
        self.space.stencil().apply_s(&x[..n], &mut out[..n]);
        for p in 0..n {
            out[p] += self.mass_gp[p] * x[p];
        }
        if !self.pin.is_empty() {
            let m = x[n];
            let mut cdot = 0.0;
            for p in 0..n {
                out[p] += m * self.pin[p];
                cdot += self.pin[p] * x[p];
            }
            out[n] = cdot;
        }
    }
}

fn residual_values(space: &ModelSpace, u: &[f64], nl: &Nonlinearity, out: &mut [f64]) {
    space.stencil().apply_s(u, out);
    let mu = space.measures();
    for p in 0..u.len() {
        out[p] = out[p] / mu[p] + nl.g(u[p]);
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Damped Newton iteration on `F(u) = Δ_f u + g(u)`. The Jacobian
/// `Δ_f + g'(u)` is applied in its symmetric measure-weighted form and
/// inverted with MINRES; steps backtrack on ‖F‖_∞ with factor ½.
pub fn newton_solve(
    space: &Arc<ModelSpace>,
    nl: &Nonlinearity,
    u0: &ScalarField,
    options: &SolverOptions,
) -> Result<SolveOutcome> {
    if !(options.tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    nl.validate()?;
    let n = space.num_nodes();
    let mut u = u0.values().to_vec();
    let mut f = vec![0.0; n];
    residual_values(space, &u, nl, &mut f);
    let mut fnorm = inf_norm(&f);
    let mut history = vec![fnorm];

    let pin = if options.pin_center {
        let mid = (space.grid.shape[0] - 1) / 2;
        let mut c = vec![0.0; n];
        for p in 0..n {
            if space.grid.axis_index(p) == mid {
                c[p] = space.measure(p);
            }
        }
        c
    } else {
        Vec::new()
    };
    let dim = n + usize::from(!pin.is_empty());
    let minres_cap = 60 * (n as f64).sqrt() as usize + 400;
    // Watchdog: a stiff step may have to pass through larger ‖F‖∞ before
    // the quadratic phase; allow a few full-step excursions when
    // backtracking finds no monotone progress.
    let mut watchdog = 3usize;

    for it in 1..=options.max_iter {
        if fnorm <= options.tol {
            return Ok(SolveOutcome {
                u: ScalarField::new(space.clone(), u)?,
                residual_norm: fnorm,
                iterations: it - 1,
                converged: true,
                residual_history: history,
            });
        }
        let mass_gp: Vec<f64> = (0..n)
            .map(|p| space.measure(p) * nl.g_prime(u[p]))
            .collect();
        let op = JacobianOp {
            space,
            mass_gp,
            pin: pin.clone(),
        };
        let mut rhs = vec![0.0; dim];
        for p in 0..n {
            rhs[p] = -space.measure(p) * f[p];
        }
        let mut delta = vec![0.0; dim];
        let eta = (0.1 * fnorm).clamp(1e-12, 1e-3);
        match minres(&op, &rhs, &mut delta, eta, minres_cap) {
            Ok(_) => {}
            Err(Error::LinearSolveStagnation { residual, .. }) if residual < 0.5 => {
                // Partial progress from an ill-conditioned step still gives
                // a usable inexact-Newton direction.
            }
            Err(Error::LinearSolveStagnation { .. }) | Err(Error::DegenerateLinearization) => {
                return Err(Error::DegenerateLinearization);
            }
            Err(e) => return Err(e),
        }

        let mut step = 1.0;
        let mut trial = vec![0.0; n];
        let mut ftrial = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..=options.max_backtracks {
            for p in 0..n {
                trial[p] = u[p] + step * delta[p];
            }
            residual_values(space, &trial, nl, &mut ftrial);
            let fnew = inf_norm(&ftrial);
            if fnew < fnorm && fnew.is_finite() {
                u.copy_from_slice(&trial);
                f.copy_from_slice(&ftrial);
                fnorm = fnew;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if watchdog > 0 && fnorm > options.tol {
                watchdog -= 1;
                for p in 0..n {
                    trial[p] = u[p] + delta[p];
                }
                residual_values(space, &trial, nl, &mut ftrial);
                let fnew = inf_norm(&ftrial);
                if fnew.is_finite() {
                    u.copy_from_slice(&trial);
                    f.copy_from_slice(&ftrial);
                    fnorm = fnew;
                    history.push(fnorm);
                    continue;
                }
            }
            history.push(fnorm);
            return Ok(SolveOutcome {
                u: ScalarField::new(space.clone(), u)?,
                residual_norm: fnorm,
                iterations: it,
                converged: false,
                residual_history: history,
            });
        }
        history.push(fnorm);
    }
    let converged = fnorm <= options.tol;
    Ok(SolveOutcome {
        u: ScalarField::new(space.clone(), u)?,
        residual_norm: fnorm,
        iterations: options.max_iter,
        converged,
        residual_history: history,
    })
}

/// Mean of the field over fiber directions, per axis index. On a
/// one-dimensional space this is the field itself.
pub fn fiber_average(u: &ScalarField) -> Vec<f64> {
    let space = u.space();
    let axis_nodes = space.grid.shape[0];
    let mut sums = vec![0.0; axis_nodes];
    let mut counts = vec![0usize; axis_nodes];
    for p in 0..space.num_nodes() {
        let i = space.grid.axis_index(p);
        sums[i] += u.get(p);
        counts[i] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| s / c as f64)
        .collect()
}

/// Max over axis slices of the standard deviation of the field across
/// the fiber; zero for fiber-independent fields.
pub fn fiber_dependence(u: &ScalarField) -> f64 {
    let space = u.space();
    let axis_nodes = space.grid.shape[0];
    let mean = fiber_average(u);
    let mut devsq = vec![0.0; axis_nodes];
    let mut counts = vec![0usize; axis_nodes];
    for p in 0..space.num_nodes() {
        let i = space.grid.axis_index(p);
        let d = u.get(p) - mean[i];
        devsq[i] += d * d;
        counts[i] += 1;
    }
    devsq
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (s / c as f64).sqrt())
        .fold(0.0f64, f64::max)
}
