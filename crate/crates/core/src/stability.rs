//! The stability quadratic form Q(h) = ∫|∇h|² - ∫g'(u)h² dVol_f, the
//! operator J_f = -Δ_f - g'(u), its smallest eigenpair, the positive
//! ground-state certificate, and the Picone / integral-inequality gaps.
//!
//! Where a positive field w appears inside a quadratic weight, its edge
//! value is taken as the product of the endpoint values. With that
//! convention the pointwise identity behind the Picone inequality is
//! exact on the mesh, so the gap collapses to `-⟨J_f w, h²/w⟩_f` and an
//! exact discrete kernel field drives it to rounding level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    drift_laplacian, hessian, node_gradient, same_space, weighted_dirichlet, KahanSum,
    ScalarField,
};
use crate::linalg::{conjugate_gradient, LinearOp};
use crate::nonlin::Nonlinearity;
use crate::space::ModelSpace;

/// Relative floor defining the strict-positivity precondition on w.
pub const EPS_W_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positivity {
    StrictlyPositive,
    SignChanging,
}

/// Smallest eigenpair of J_f together with the stability verdict.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub lambda_min: f64,
    /// Unit weighted-norm eigenfield, sign-normalized to be positive at
    /// its node of maximal magnitude.
    pub eigenfield: ScalarField,
    pub positivity: Positivity,
    pub stable: bool,
    /// Tolerance the eigen residual was driven below.
    pub tol: f64,
    /// Stability threshold used for the verdict: 1e-6·‖g'(u)‖_∞.
    pub tol_stab: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Serializable header of a [`SpectralReport`] (the eigenfield itself is
/// stored as a field table).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_min: f64,
    pub positivity: Positivity,
    pub stable: bool,
    pub tol: f64,
    pub tol_stab: f64,
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenfield_file: Option<String>,
}

impl SpectralReport {
    pub fn summary(&self, eigenfield_file: Option<String>) -> SpectralSummary {
        SpectralSummary {
            lambda_min: self.lambda_min,
            positivity: self.positivity,
            stable: self.stable,
            tol: self.tol,
            tol_stab: self.tol_stab,
            residual: self.residual,
            iterations: self.iterations,
            eigenfield_file,
        }
    }
}

fn require_compact_support(h: &ScalarField) -> Result<()> {
    if h.is_compactly_supported() {
        Ok(())
    } else {
        Err(Error::NotCompactlySupported)
    }
}

/// Second-variation quadratic form Q(h) = ⟨∇h, ∇h⟩_f - ⟨g'(u)h, h⟩_f.
pub fn stability_form(u: &ScalarField, nl: &Nonlinearity, h: &ScalarField) -> Result<f64> {
    same_space(u, h)?;
    require_compact_support(h)?;
    let dirichlet = weighted_dirichlet(h, h)?;
    let space = u.space();
    let mut pot = KahanSum::default();
    for p in 0..space.num_nodes() {
        let hp = h.get(p);
        pot.add(nl.g_prime(u.get(p)) * hp * hp * space.measure(p));
    }
    Ok(dirichlet - pot.value())
}

struct ShiftedOp<'a> {
    space: &'a ModelSpace,
    /// μ·(g'(u) + σ) per node.
    mass_pot: Vec<f64>,
}

impl LinearOp for ShiftedOp<'_> {
    fn dim(&self) -> usize {
        self.space.num_nodes()
    }
    /// (A - σM) x = -S x - μ(g'(u) + σ) x, positive definite for σ below
    /// the smallest eigenvalue.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.space.stencil().apply_s(x, out);
        for p in 0..x.len() {
            out[p] = -out[p] - self.mass_pot[p] * x[p];
        }
    }
}

/// Smallest eigenpair of the generalized symmetric problem
/// `J_f φ = λ M φ` via shifted inverse iteration with a deterministic
/// start. The shift sits strictly below the spectrum, so the inner
/// solves are definite.
pub fn min_eigenpair(u: &ScalarField, nl: &Nonlinearity, tol: f64) -> Result<SpectralReport> {
    let space = u.space().clone();
    let n = space.num_nodes();
    let potential: Vec<f64> = u.values().iter().map(|&v| nl.g_prime(v)).collect();
    let gmax = potential.iter().fold(0.0f64, |a, &b| a.max(b));
    let gabs = potential.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    // λ_min(J_f) ≥ -max g'(u) since -Δ_f is nonnegative.
    let sigma = -gmax - 1.0;
    let mu = space.measures();
    let op = ShiftedOp {
        space: &space,
        mass_pot: (0..n).map(|p| mu[p] * (potential[p] + sigma)).collect(),
    };
    let diag: Vec<f64> = {
        // Diagonal of the shifted matrix for Jacobi preconditioning.
        let mut row_sums = vec![0.0; n];
        space.stencil().for_each_edge(|p, q, _d, c| {
            row_sums[p] += c;
            row_sums[q] += c;
        });
        (0..n)
            .map(|p| row_sums[p] - mu[p] * (potential[p] + sigma))
            .collect()
    };

    let mnorm = |x: &[f64]| -> f64 {
        let mut acc = 0.0;
        for p in 0..n {
            acc += mu[p] * x[p] * x[p];
        }
        acc.sqrt()
    };

    let mut phi = vec![1.0; n];
    let s = mnorm(&phi);
    phi.iter_mut().for_each(|v| *v /= s);
    let mut next = phi.clone();
    let mut a_phi = vec![0.0; n];
    let mut lambda = 0.0;
    let mut history = Vec::new();
    let cg_cap = 40 * (n as f64).sqrt() as usize + 300;

    for it in 1..=500 {
        // Rayleigh quotient and residual of the current iterate.
        space.stencil().apply_s(&phi, &mut a_phi);
        for p in 0..n {
            a_phi[p] = -a_phi[p] - mu[p] * potential[p] * phi[p];
        }
        lambda = phi.iter().zip(&a_phi).map(|(a, b)| a * b).sum::<f64>();
        let mut res_sq = 0.0;
        for p in 0..n {
            let r = a_phi[p] - lambda * mu[p] * phi[p];
            res_sq += r * r / mu[p];
        }
        let res = res_sq.sqrt();
        history.push(res);
        if res <= tol * (lambda.abs() + 1.0) {
            return finish_eigen(&space, phi, lambda, res, it, tol, gabs);
        }
        if history.len() > 40 {
            let old = history[history.len() - 41];
            if res > 0.999 * old {
                return Err(Error::EigenStagnation { history });
            }
        }
        // Inverse iteration step: (A - σM) next = M φ, warm-started.
        let rhs: Vec<f64> = (0..n).map(|p| mu[p] * phi[p]).collect();
        let scale = 1.0 / (lambda - sigma).max(1e-6);
        for p in 0..n {
            next[p] = phi[p] * scale;
        }
        let inner_tol = (0.05 * res / (lambda.abs() + 1.0)).clamp(1e-14, 1e-3);
        match conjugate_gradient(&op, &rhs, &mut next, Some(&diag), inner_tol, cg_cap) {
            Ok(_) => {}
            Err(Error::LinearSolveStagnation { .. }) => {
                return Err(Error::EigenStagnation { history });
            }
            Err(e) => return Err(e),
        }
        let s = mnorm(&next);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::EigenStagnation { history });
        }
        for p in 0..n {
            phi[p] = next[p] / s;
        }
    }
    let res = history.last().copied().unwrap_or(f64::NAN);
    if res <= tol * (lambda.abs() + 1.0) {
        finish_eigen(&space, phi, lambda, res, 500, tol, gabs)
    } else {
        Err(Error::EigenStagnation { history })
    }
}

fn finish_eigen(
    space: &std::sync::Arc<ModelSpace>,
    mut phi: Vec<f64>,
    lambda: f64,
    residual: f64,
    iterations: usize,
    tol: f64,
    gabs: f64,
) -> Result<SpectralReport> {
    // Sign convention: positive at the node of maximal magnitude.
    let mut imax = 0;
    for p in 0..phi.len() {
        if phi[p].abs() > phi[imax].abs() {
            imax = p;
        }
    }
    if phi[imax] < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
    let min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let positivity = if min > 0.0 {
        Positivity::StrictlyPositive
    } else {
        Positivity::SignChanging
    };
    let tol_stab = (1e-6 * gabs).max(1e-12);
    Ok(SpectralReport {
        lambda_min: lambda,
        eigenfield: ScalarField::new(space.clone(), phi)?,
        positivity,
        stable: lambda >= -tol_stab,
        tol,
        tol_stab,
        residual,
        iterations,
    })
}

/// Both sides of the Picone inequality together with the supersolution
/// defect of w.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiconeGapReport {
    /// ∫ w² |∇(h/w)|² dVol_f (edge values of w² as endpoint products).
    pub lhs: f64,
    /// ∫ |∇h|² - ∫ g'(u) h² dVol_f.
    pub rhs: f64,
    pub gap: f64,
    /// max over nodes of (Δ_f w + g'(u) w)₊ / w.
    pub supersolution_defect: f64,
}

fn check_positive(w: &ScalarField) -> Result<()> {
    let max = w.max_abs();
    let min = w.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= EPS_W_REL * max {
        return Err(Error::NotUniformlyPositive);
    }
    Ok(())
}

/// Picone gap `rhs - lhs`; nonnegative when w is a supersolution of the
/// linearized equation, zero to rounding when w is an exact discrete
/// kernel field.
pub fn picone_gap(
    u: &ScalarField,
    nl: &Nonlinearity,
    w: &ScalarField,
    h: &ScalarField,
) -> Result<PiconeGapReport> {
    same_space(u, w)?;
    same_space(u, h)?;
    check_positive(w)?;
    require_compact_support(h)?;
    let space = u.space();
    let mut lhs = KahanSum::default();
    space.stencil().for_each_edge(|p, q, _d, c| {
        let quotient_diff = h.get(q) / w.get(q) - h.get(p) / w.get(p);
        lhs.add(c * w.get(p) * w.get(q) * quotient_diff * quotient_diff);
    });
    let rhs = stability_form(u, nl, h)?;
    let lw = drift_laplacian(w);
    let mut defect = 0.0f64;
    for p in 0..space.num_nodes() {
        let ell = lw.get(p) + nl.g_prime(u.get(p)) * w.get(p);
        defect = defect.max(ell.max(0.0) / w.get(p));
    }
    let lhs = lhs.value();
    Ok(PiconeGapReport {
        lhs,
        rhs,
        gap: rhs - lhs,
        supersolution_defect: defect,
    })
}

/// Both sides of the second-order integral inequality obtained by
/// feeding `h|∇u|` through the Picone bound and the Bochner identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegralGapReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Gap `rhs - lhs` of
/// `∫[|∇²u|² + Ric_f(∇u,∇u)]h² - ∫h²|∇|∇u||²  ≤  ∫|∇h|²|∇u|² - ∫w²|∇(h|∇u|/w)|²`.
pub fn integral_inequality_gap(
    u: &ScalarField,
    _nl: &Nonlinearity,
    w: &ScalarField,
    h: &ScalarField,
) -> Result<IntegralGapReport> {
    same_space(u, w)?;
    same_space(u, h)?;
    check_positive(w)?;
    require_compact_support(h)?;
    let space = u.space();
    let du = node_gradient(u);
    let m = du.norms();
    let dm = node_gradient(&m);
    let hess = hessian(u);
    let dh = node_gradient(h);

    let mut lhs = KahanSum::default();
    let mut rhs_grad = KahanSum::default();
    for p in 0..space.num_nodes() {
        let hp = h.get(p);
        let mup = space.measure(p);
        let gu = m.get(p);
        rhs_grad.add(mup * dh.norm_at(p).powi(2) * gu * gu);
        if hp == 0.0 || !hess.is_valid(p) {
            continue;
        }
        let hsq = hess.norm_sq(p).expect("valid");
        let ric = space.ricci_quadratic(p, &du.raised_at(p));
        let grad_m = dm.norm_at(p);
        lhs.add(mup * hp * hp * (hsq + ric - grad_m * grad_m));
    }

    // z = h|∇u|/w with the endpoint-product convention for w².
    let mut picone_term = KahanSum::default();
    space.stencil().for_each_edge(|p, q, _d, c| {
        let zp = h.get(p) * m.get(p) / w.get(p);
        let zq = h.get(q) * m.get(q) / w.get(q);
        let diff = zq - zp;
        picone_term.add(c * w.get(p) * w.get(q) * diff * diff);
    });
    let lhs = lhs.value();
    let rhs = rhs_grad.value() - picone_term.value();
    Ok(IntegralGapReport {
        lhs,
        rhs,
        gap: rhs - lhs,
    })
}

/// Statistics of a masked node field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl FieldStats {
    pub fn from_values(values: impl Iterator<Item = f64>) -> FieldStats {
        let mut count = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            count += 1;
            let d = v - mean;
            mean += d / count as f64;
            m2 += d * (v - mean);
            min = min.min(v);
            max = max.max(v);
        }
        if count == 0 {
            return FieldStats {
                mean: f64::NAN,
                stdev: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
                count: 0,
            };
        }
        FieldStats {
            mean,
            stdev: (m2 / count as f64).sqrt(),
            min,
            max,
            count,
        }
    }
}

/// Output of the rigidity-gap inequality (the ground-state form of the
/// stability estimate): lhs ≤ rhs with the ratio field |∇u|/w attached.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityGapReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Stats of |∇u|/w over regular nodes (empty when none are regular).
    pub ratio: FieldStats,
}

/// Evaluates `∫(|∇²u|² - |∇|∇u||² + Ric_f(∇u,∇u)) h² ≤ 2 ∫|∇h|² |∇u|²`
/// with w the positive ground state from a spectral report.
pub fn rigidity_gap(
    u: &ScalarField,
    _nl: &Nonlinearity,
    spectral: &SpectralReport,
    h: &ScalarField,
) -> Result<RigidityGapReport> {
    same_space(u, h)?;
    same_space(u, &spectral.eigenfield)?;
    if spectral.positivity != Positivity::StrictlyPositive {
        return Err(Error::StabilityEquivalenceUnavailable);
    }
    require_compact_support(h)?;
    let space = u.space();
    let du = node_gradient(u);
    let m = du.norms();
    let dm = node_gradient(&m);
    let hess = hessian(u);
    let dh = node_gradient(h);
    let mut lhs = KahanSum::default();
    let mut rhs = KahanSum::default();
    for p in 0..space.num_nodes() {
        let hp = h.get(p);
        let mup = space.measure(p);
        let gu = m.get(p);
        rhs.add(2.0 * mup * dh.norm_at(p).powi(2) * gu * gu);
        if hp == 0.0 || !hess.is_valid(p) {
            continue;
        }
        let hsq = hess.norm_sq(p).expect("valid");
        let ric = space.ricci_quadratic(p, &du.raised_at(p));
        let grad_m = dm.norm_at(p);
        lhs.add(mup * hp * hp * (hsq - grad_m * grad_m + ric));
    }
    // Ratio over the regular nodes the test function actually sees; the
    // near-boundary tail, where both fields decay together, would
    // otherwise dominate the scatter with its O(1) relative noise.
    let eps_reg = 1e-6 * m.max_abs();
    let w = &spectral.eigenfield;
    let ratio = FieldStats::from_values((0..space.num_nodes()).filter_map(|p| {
        (m.get(p) >= eps_reg && eps_reg > 0.0 && h.get(p) != 0.0).then(|| m.get(p) / w.get(p))
    }));
    Ok(RigidityGapReport {
        lhs: lhs.value(),
        rhs: rhs.value(),
        ratio,
    })
}

/// Builds the exact-kernel certificate from a spectral report: the
/// nonlinearity shifted by λ_min, under which the eigenfield solves
/// `Δ_f w + g̃'(u) w = 0` to the eigen-residual.
pub fn kernel_shifted_nonlinearity(nl: &Nonlinearity, spectral: &SpectralReport) -> Nonlinearity {
    nl.shifted(spectral.lambda_min)
}
