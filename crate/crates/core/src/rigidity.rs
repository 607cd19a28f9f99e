//! Level-set geometry and the splitting audit.
//!
//! The operations here turn the rigidity conclusions into measurable
//! statistics: the Kato decomposition at regular points, umbilicity of
//! level sets, the curvature-condition margin, the λ field and the
//! Lie-derivative identity of the warped metric, the unit-gradient flow
//! with its geodesic/transport checks, and the aggregate splitting
//! report with one verdict per conclusion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{hessian, node_gradient, NodeVectorField, ScalarField, SymmetricTensorField};
use crate::nonlin::Nonlinearity;
use crate::profile::{ode_residual, ProfileSolution};
use crate::solve::{fiber_average, fiber_dependence};
use crate::space::ModelSpace;
use crate::stability::{FieldStats, Positivity, SpectralReport};

/// Relative floor on |∇u| defining "regular point".
pub const EPS_REG_REL: f64 = 1e-6;

/// Audit tolerances; every verdict names the threshold that decided it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToleranceSet {
    pub levelset_constancy: f64,
    pub umbilicity: f64,
    pub curvature_margin: f64,
    pub lambda: f64,
    pub lie_residual: f64,
    pub warp_error: f64,
    pub fiber_dependence: f64,
    pub k_stdev: f64,
    pub ode_residual: f64,
    pub ratio_constancy: f64,
    pub geodesic_residual: f64,
    pub transport_error: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        ToleranceSet {
            levelset_constancy: 1e-6,
            umbilicity: 1e-4,
            curvature_margin: 1e-8,
            lambda: 1e-4,
            lie_residual: 1e-4,
            warp_error: 1e-3,
            fiber_dependence: 1e-8,
            k_stdev: 1e-3,
            ode_residual: 1e-3,
            ratio_constancy: 1e-6,
            geodesic_residual: 1e-3,
            transport_error: 2e-2,
        }
    }
}

impl ToleranceSet {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "levelset_constancy" => self.levelset_constancy = value,
            "umbilicity" => self.umbilicity = value,
            "curvature_margin" => self.curvature_margin = value,
            "lambda" => self.lambda = value,
            "lie_residual" => self.lie_residual = value,
            "warp_error" => self.warp_error = value,
            "fiber_dependence" => self.fiber_dependence = value,
            "k_stdev" => self.k_stdev = value,
            "ode_residual" => self.ode_residual = value,
            "ratio_constancy" => self.ratio_constancy = value,
            "geodesic_residual" => self.geodesic_residual = value,
            "transport_error" => self.transport_error = value,
            _ => return Err(Error::config(key, "unknown tolerance")),
        }
        Ok(())
    }
}

/// One sampled point of a level set with its extrinsic data.
#[derive(Clone, Debug)]
pub struct LevelSetPoint {
    pub coords: Vec<f64>,
    /// Interpolation weight along the crossing edge.
    pub weight: f64,
    /// Contravariant unit normal.
    pub normal: Vec<f64>,
    pub grad_norm: f64,
    /// Second fundamental form on the tangent frame, (n-1)×(n-1).
    pub second_fundamental: Vec<Vec<f64>>,
    pub mean_curvature: f64,
    /// |∇ᵀ|∇u|| at the point.
    pub tangential_grad_norm: f64,
    /// Ric_f(∇u, ∇u) at the point.
    pub ricci_quadratic: f64,
}

impl LevelSetPoint {
    pub fn shape_norm_sq(&self) -> f64 {
        self.second_fundamental
            .iter()
            .flatten()
            .map(|&a| a * a)
            .sum()
    }
}

/// All regular crossings of one level.
#[derive(Clone, Debug)]
pub struct LevelSetSample {
    pub level: f64,
    pub points: Vec<LevelSetPoint>,
}

fn interp(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x + theta * (y - x))
        .collect()
}

/// Inverse-metric diagonal at an off-node axis coordinate.
fn inv_metric_at(space: &ModelSpace, t: f64, dir: usize) -> f64 {
    if dir == 0 || space.config.family != crate::space::Family::WarpedProduct {
        1.0
    } else {
        let w = space.warp_at(t);
        1.0 / (w * w)
    }
}

fn metric_norm_sq_at(space: &ModelSpace, t: f64, covariant: &[f64]) -> f64 {
    covariant
        .iter()
        .enumerate()
        .map(|(d, &c)| inv_metric_at(space, t, d) * c * c)
        .sum()
}

/// Orthonormal tangent frame against the unit normal, built by
/// Gram-Schmidt over the coordinate basis in a seeded deterministic
/// order. Returns contravariant frame vectors.
fn tangent_frame(
    space: &ModelSpace,
    t: f64,
    normal: &[f64],
    frame_seed: u64,
) -> Vec<Vec<f64>> {
    let n = normal.len();
    let mut order: Vec<usize> = (0..n).collect();
    if frame_seed != 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
        order.shuffle(&mut rng);
    }
    let g = |d: usize| 1.0 / inv_metric_at(space, t, d);
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        (0..n).map(|d| g(d) * a[d] * b[d]).sum()
    };
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for &d in &order {
        if frame.len() == n - 1 {
            break;
        }
        let mut v = vec![0.0; n];
        v[d] = 1.0;
        let nv = inner(&v, normal);
        for i in 0..n {
            v[i] -= nv * normal[i];
        }
        for e in &frame {
            let c = inner(&v, e);
            for i in 0..n {
                v[i] -= c * e[i];
            }
        }
        let norm = inner(&v, &v).sqrt();
        if norm > 1e-10 {
            for x in &mut v {
                *x /= norm;
            }
            frame.push(v);
        }
    }
    frame
}

struct PointData<'a> {
    space: &'a ModelSpace,
    du: NodeVectorField,
    m: ScalarField,
    dm: NodeVectorField,
    hess: SymmetricTensorField,
}

impl<'a> PointData<'a> {
    fn build(u: &ScalarField) -> PointData<'_> {
        let du = node_gradient(u);
        let m = du.norms();
        let dm = node_gradient(&m);
        PointData {
            space: u.space(),
            du,
            m: m.clone(),
            dm,
            hess: hessian(u),
        }
    }

    fn eps_reg(&self) -> f64 {
        EPS_REG_REL * self.m.max_abs()
    }

    /// Extrinsic data at an interpolated point on the edge (p, q).
    fn point(
        &self,
        p: usize,
        q: usize,
        theta: f64,
        frame_seed: u64,
    ) -> Option<LevelSetPoint> {
        let space = self.space;
        let n = space.ndim();
        if !self.hess.is_valid(p) || !self.hess.is_valid(q) {
            return None;
        }
        let coords = interp(&space.grid.coords(p), &space.grid.coords(q), theta);
        let t = coords[0];
        // Covariant gradient components at the point.
        let du: Vec<f64> = (0..n)
            .map(|d| {
                let a = self.du.component(d)[p];
                let b = self.du.component(d)[q];
                a + theta * (b - a)
            })
            .collect();
        let grad_norm = metric_norm_sq_at(space, t, &du).sqrt();
        if grad_norm < self.eps_reg() {
            return None;
        }
        // Contravariant unit normal.
        let normal: Vec<f64> = (0..n)
            .map(|d| inv_metric_at(space, t, d) * du[d] / grad_norm)
            .collect();
        let frame = tangent_frame(space, t, &normal, frame_seed);
        if frame.len() != n - 1 {
            return None;
        }
        // Interpolated covariant Hessian.
        let mut hess_pt = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let a = self.hess.entry(p, i, j).ok()?;
                let b = self.hess.entry(q, i, j).ok()?;
                hess_pt[i][j] = a + theta * (b - a);
            }
        }
        let hess_quad = |x: &[f64], y: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += hess_pt[i][j] * x[i] * y[j];
                }
            }
            acc
        };
        let mut second = vec![vec![0.0; n - 1]; n - 1];
        let mut mean = 0.0;
        for (i, ei) in frame.iter().enumerate() {
            for (j, ej) in frame.iter().enumerate() {
                let a = -hess_quad(ei, ej) / grad_norm;
                second[i][j] = a;
                if i == j {
                    mean += a;
                }
            }
        }
        // Tangential part of ∇|∇u| from the node field.
        let dm: Vec<f64> = (0..n)
            .map(|d| {
                let a = self.dm.component(d)[p];
                let b = self.dm.component(d)[q];
                a + theta * (b - a)
            })
            .collect();
        let dm_sq = metric_norm_sq_at(space, t, &dm);
        let dm_normal: f64 = (0..n).map(|d| dm[d] * normal[d]).sum();
        let tangential = (dm_sq - dm_normal * dm_normal).max(0.0).sqrt();
        // Ric_f(∇u, ∇u) with the contravariant gradient.
        let raised: Vec<f64> = (0..n)
            .map(|d| inv_metric_at(space, t, d) * du[d])
            .collect();
        // Closed-form curvature is a function of the axis coordinate; use
        // the nearest node for the lookup and the exact t elsewhere.
        let ricci = ricci_at(space, t, &raised);
        Some(LevelSetPoint {
            coords,
            weight: theta,
            normal,
            grad_norm,
            second_fundamental: second,
            mean_curvature: mean,
            tangential_grad_norm: tangential,
            ricci_quadratic: ricci,
        })
    }
}

/// Ric_f(v, v) at an arbitrary axis coordinate (closed form per family).
fn ricci_at(space: &ModelSpace, t: f64, v: &[f64]) -> f64 {
    use crate::space::Family;
    let fpp = space.density.fpp.eval(t);
    match space.config.family {
        Family::WeightedLine | Family::FlatBox | Family::Cylinder => fpp * v[0] * v[0],
        Family::WarpedProduct => {
            let lam = space.warp_lambda.eval(t);
            let lamp = space.warp_lambda.derivative().eval(t);
            let fp = space.density.fp.eval(t);
            let w = space.warp_at(t);
            let w2 = w * w;
            let m = (space.ndim() - 1) as f64;
            let rtt = -m * (lam * lam - lamp) + fpp;
            let raa = -w2 * (m * lam * lam - lamp) - lam * w2 * fp;
            let fiber_sq: f64 = v[1..].iter().map(|&c| c * c).sum();
            rtt * v[0] * v[0] + raa * fiber_sq
        }
    }
}

/// Samples the level set {u = level} by linear interpolation along grid
/// edges, keeping regular points whose Hessian stencil is interior.
pub fn sample_level_set(
    u: &ScalarField,
    level: f64,
    frame_seed: u64,
) -> Result<LevelSetSample> {
    let data = PointData::build(u);
    let space = u.space();
    let mut points = Vec::new();
    space.stencil().for_each_edge(|p, q, _d, _c| {
        let a = u.get(p) - level;
        let b = u.get(q) - level;
        if a == 0.0 && b == 0.0 {
            return;
        }
        if a * b <= 0.0 && a != b {
            let theta = a / (a - b);
            if let Some(pt) = data.point(p, q, theta, frame_seed) {
                points.push(pt);
            }
        }
    });
    if points.is_empty() {
        return Err(Error::EmptyLevelSample);
    }
    Ok(LevelSetSample { level, points })
}

/// Levels at equally spaced quantiles of the field's range.
pub fn quantile_levels(u: &ScalarField, count: usize) -> Vec<f64> {
    let min = u.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = u.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (1..=count)
        .map(|i| min + (max - min) * i as f64 / (count + 1) as f64)
        .collect()
}

/// Both routes of the pointwise Kato decomposition at a regular interior
/// node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KatoDecomposition {
    /// |∇²u|² - |∇²u(·,ν)|² (the proof's realization of |∇|∇u||²).
    pub lhs: f64,
    /// |∇u|²|A|² + |∇ᵀ|∇u||² from the level-set frame and the node
    /// field |∇u|.
    pub rhs: f64,
    pub error: f64,
}

/// Kato identity `|∇²u|² - |∇|∇u||² = |∇u|²|A_t|² + |∇ᵀ|∇u||²`,
/// evaluated through two independent discrete routes. For sweeps over
/// many nodes use [`kato_decomposition_field`], which differentiates the
/// field once.
pub fn kato_decomposition(u: &ScalarField, node: usize, frame_seed: u64) -> Result<KatoDecomposition> {
    let data = PointData::build(u);
    kato_at(u, &data, node, frame_seed)
}

/// Kato decomposition at every node: `None` at boundary or critical
/// nodes.
pub fn kato_decomposition_field(
    u: &ScalarField,
    frame_seed: u64,
) -> Vec<Option<KatoDecomposition>> {
    let data = PointData::build(u);
    (0..u.space().num_nodes())
        .map(|p| kato_at(u, &data, p, frame_seed).ok())
        .collect()
}

fn kato_at(
    u: &ScalarField,
    data: &PointData<'_>,
    node: usize,
    frame_seed: u64,
) -> Result<KatoDecomposition> {
    let space = u.space();
    if !data.hess.is_valid(node) {
        return Err(Error::BoundaryHessian);
    }
    let m = data.m.get(node);
    if m < data.eps_reg() || data.eps_reg() == 0.0 {
        return Err(Error::CriticalPoint);
    }
    let n = space.ndim();
    let t = space.axis_coord(node);
    let normal: Vec<f64> = (0..n)
        .map(|d| space.inv_metric(node, d) * data.du.component(d)[node] / m)
        .collect();
    // lhs: full Hessian norm minus the norm of its ν-contraction (the
    // identity ∇²u(ν,·) = ∇|∇u| from the level-set computation).
    let hsq = data.hess.norm_sq(node)?;
    let contraction = data.hess.contract(node, &normal)?;
    let contraction_sq = metric_norm_sq_at(space, t, &contraction);
    let lhs = hsq - contraction_sq;
    // rhs: level-set frame route with the independently differenced
    // |∇u| node field.
    let frame = tangent_frame(space, t, &normal, frame_seed);
    if frame.len() != n - 1 {
        return Err(Error::CriticalPoint);
    }
    let mut shape_sq = 0.0;
    for ei in &frame {
        for ej in &frame {
            let mut acc = 0.0;
            for i in 0..n {
                acc += contract_row(&data.hess, node, i, ei) * ej[i];
            }
            let a = -acc / m;
            shape_sq += a * a;
        }
    }
    let dm: Vec<f64> = (0..n).map(|d| data.dm.component(d)[node]).collect();
    let dm_sq = metric_norm_sq_at(space, t, &dm);
    let dm_normal: f64 = (0..n).map(|d| dm[d] * normal[d]).sum();
    let tangential_sq = (dm_sq - dm_normal * dm_normal).max(0.0);
    let rhs = m * m * shape_sq + tangential_sq;
    Ok(KatoDecomposition {
        lhs,
        rhs,
        error: lhs - rhs,
    })
}

fn contract_row(hess: &SymmetricTensorField, node: usize, i: usize, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        acc += hess.entry(node, i, j).expect("validity checked") * vj;
    }
    acc
}

/// Max over sample points of `|A_t|² - H_t²/(n-1)`; zero exactly when
/// every point is umbilical, and identically zero for n = 2.
pub fn umbilicity_defect(space: &ModelSpace, sample: &LevelSetSample) -> Result<f64> {
    if sample.points.is_empty() {
        return Err(Error::EmptyLevelSample);
    }
    let m = (space.ndim() - 1) as f64;
    Ok(sample
        .points
        .iter()
        .map(|pt| pt.shape_norm_sq() - pt.mean_curvature * pt.mean_curvature / m)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Margin of the curvature hypothesis
/// `Ric_f(∇u,∇u) ≥ -H_t²/(n-1)|∇u|²` over the sample; the hypothesis
/// holds at tolerance when the minimum is ≥ -tol.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureMargin {
    pub margin_min: f64,
}

pub fn curvature_condition(space: &ModelSpace, sample: &LevelSetSample) -> CurvatureMargin {
    let m = (space.ndim() - 1) as f64;
    let margin_min = sample
        .points
        .iter()
        .map(|pt| {
            pt.ricci_quadratic
                + pt.mean_curvature * pt.mean_curvature / m * pt.grad_norm * pt.grad_norm
        })
        .fold(f64::INFINITY, f64::min);
    CurvatureMargin { margin_min }
}

/// λ = -div(∇u/|∇u|)/(n-1) at regular interior nodes; NaN elsewhere.
pub fn lambda_field(u: &ScalarField) -> ScalarField {
    let space = u.space().clone();
    let du = node_gradient(u);
    let m = du.norms();
    let eps = EPS_REG_REL * m.max_abs();
    let n = space.ndim();
    let len = space.num_nodes();
    // Contravariant ν scaled by √G for the divergence.
    let mut flux = vec![vec![f64::NAN; len]; n];
    for p in 0..len {
        if m.get(p) < eps || eps == 0.0 {
            continue;
        }
        let sqrt_g = space.sqrt_g_at_index(space.grid.axis_index(p));
        for d in 0..n {
            flux[d][p] = sqrt_g * space.inv_metric(p, d) * du.component(d)[p] / m.get(p);
        }
    }
    let values = (0..len)
        .map(|p| {
            // Two cells clear of the truncation: the flux stencil must
            // not see one-sided node gradients.
            if !space.grid.is_interior(p, 2) || !flux[0][p].is_finite() {
                return f64::NAN;
            }
            let mut div = 0.0;
            for d in 0..n {
                let fp = space.grid.neighbor(p, d, 1).expect("interior");
                let fm = space.grid.neighbor(p, d, -1).expect("interior");
                let a = flux[d][fp];
                let b = flux[d][fm];
                if !a.is_finite() || !b.is_finite() {
                    return f64::NAN;
                }
                div += (a - b) / (2.0 * space.grid.spacing[d]);
            }
            let sqrt_g = space.sqrt_g_at_index(space.grid.axis_index(p));
            -div / sqrt_g / (n as f64 - 1.0)
        })
        .collect();
    ScalarField::masked(space, values)
}

/// Max residual of `(L_ν g)(X, Y) = -2λ(⟨X,Y⟩ - ν♭⊗ν♭)` over coordinate
/// directions at audited nodes.
pub fn lie_derivative_residual(u: &ScalarField) -> f64 {
    let space = u.space();
    let du = node_gradient(u);
    let m = du.norms();
    let eps = EPS_REG_REL * m.max_abs();
    let n = space.ndim();
    let len = space.num_nodes();
    let lambda = lambda_field(u);
    // Contravariant unit normal components.
    let mut nu = vec![vec![f64::NAN; len]; n];
    for p in 0..len {
        if m.get(p) >= eps && eps > 0.0 {
            for d in 0..n {
                nu[d][p] = space.inv_metric(p, d) * du.component(d)[p] / m.get(p);
            }
        }
    }
    let mut residual = 0.0f64;
    for p in 0..len {
        if !space.grid.is_interior(p, 2) || !lambda.get(p).is_finite() {
            continue;
        }
        let mut ok = true;
        let mut dnu = vec![vec![0.0; n]; n]; // ∂_i ν^k
        for d in 0..n {
            let fp = space.grid.neighbor(p, d, 1).expect("interior");
            let fm = space.grid.neighbor(p, d, -1).expect("interior");
            for k in 0..n {
                let a = nu[k][fp];
                let b = nu[k][fm];
                if !a.is_finite() || !b.is_finite() {
                    ok = false;
                    break;
                }
                dnu[d][k] = (a - b) / (2.0 * space.grid.spacing[d]);
            }
            if !ok {
                break;
            }
        }
        if !ok {
            continue;
        }
        let t = space.axis_coord(p);
        let lam_decl = space.warp_lambda.eval(t);
        let w = space.warp_at(t);
        let g_diag: Vec<f64> = (0..n).map(|d| space.metric(p, d)).collect();
        // ∂_t g_dd = -2 λ_decl w² on fiber directions of a warped product.
        let dg_dt: Vec<f64> = (0..n)
            .map(|d| if d == 0 { 0.0 } else { -2.0 * lam_decl * w * w })
            .collect();
        let lam = lambda.get(p);
        for i in 0..n {
            for j in 0..n {
                let mut lie = g_diag[j] * dnu[i][j] + g_diag[i] * dnu[j][i];
                if i == j {
                    lie += nu[0][p] * dg_dt[i];
                }
                let nu_cov_i = g_diag[i] * nu[i][p];
                let nu_cov_j = g_diag[j] * nu[j][p];
                let metric_ij = if i == j { g_diag[i] } else { 0.0 };
                let target = -2.0 * lam * (metric_ij - nu_cov_i * nu_cov_j);
                residual = residual.max((lie - target).abs());
            }
        }
    }
    residual
}

/// Monotone piecewise-linear profile of |∇u| against u, from binning
/// over regular nodes. The within-bin scatter is the constancy
/// diagnostic for "|∇u| is a function of u".
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaProfile {
    pub u_centers: Vec<f64>,
    pub m_means: Vec<f64>,
    /// Max over bins of stdev/mean of |∇u| within the bin.
    pub scatter: f64,
}

impl BetaProfile {
    pub fn fit(u: &ScalarField, bins: usize) -> Result<BetaProfile> {
        let du = node_gradient(u);
        let m = du.norms();
        let eps = EPS_REG_REL * m.max_abs();
        let min = u.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = u.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::EmptyLevelSample);
        }
        let width = (max - min) / bins as f64;
        let mut sums = vec![0.0; bins];
        let mut sq = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for p in 0..u.values().len() {
            let g = m.get(p);
            if g < eps || eps == 0.0 {
                continue;
            }
            let b = (((u.get(p) - min) / width) as usize).min(bins - 1);
            sums[b] += g;
            sq[b] += g * g;
            counts[b] += 1;
        }
        let mut u_centers = Vec::new();
        let mut m_means = Vec::new();
        let mut scatter = 0.0f64;
        for b in 0..bins {
            if counts[b] == 0 {
                continue;
            }
            let mean = sums[b] / counts[b] as f64;
            let var = (sq[b] / counts[b] as f64 - mean * mean).max(0.0);
            u_centers.push(min + (b as f64 + 0.5) * width);
            m_means.push(mean);
            if mean > 0.0 {
                scatter = scatter.max(var.sqrt() / mean);
            }
        }
        if u_centers.len() < 2 {
            return Err(Error::EmptyLevelSample);
        }
        Ok(BetaProfile {
            u_centers,
            m_means,
            scatter,
        })
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let n = self.u_centers.len();
        if xi <= self.u_centers[0] {
            return self.m_means[0];
        }
        if xi >= self.u_centers[n - 1] {
            return self.m_means[n - 1];
        }
        let idx = self.u_centers.partition_point(|&c| c < xi);
        let (x0, x1) = (self.u_centers[idx - 1], self.u_centers[idx]);
        let (y0, y1) = (self.m_means[idx - 1], self.m_means[idx]);
        y0 + (y1 - y0) * (xi - x0) / (x1 - x0)
    }

    /// ∫ dξ/β(ξ) by fine trapezoid quadrature on the fitted profile.
    pub fn transport_time(&self, from: f64, to: f64) -> f64 {
        let steps = 2000;
        let h = (to - from) / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let xi = from + i as f64 * h;
            let beta = self.eval(xi).max(1e-300);
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += w / beta;
        }
        acc * h
    }
}

/// Trajectory log of one seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedLog {
    pub start: Vec<f64>,
    pub start_level: f64,
    pub arrival_level: f64,
    pub transport_error: f64,
    pub geodesic_residual: f64,
}

/// Result of integrating the unit-gradient flow from seed points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowAudit {
    pub geodesic_residual_max: f64,
    pub transport_error_max: f64,
    /// Max spread of arrival u-values across seeds started on a common
    /// level.
    pub arrival_spread: f64,
    pub seeds: Vec<SeedLog>,
}

/// Integrates Φ_s along ν with fixed-step RK4, checking the geodesic
/// residual |∇_γ' γ'| and the transport identity
/// `s = ∫ dξ/β(ξ)` against the fitted β profile.
pub fn flow_audit(
    u: &ScalarField,
    seeds: &[Vec<f64>],
    t_span: f64,
) -> Result<FlowAudit> {
    let space = u.space().clone();
    let du = node_gradient(u);
    let m = du.norms();
    let eps = EPS_REG_REL * m.max_abs();
    let n = space.ndim();
    let h_min = space.grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let dt = 0.5 * h_min;
    let steps = (t_span / dt).ceil() as usize;
    let beta = BetaProfile::fit(u, 64)?;

    // Multilinear interpolation over the grid.
    let sample_scalar = |field: &dyn Fn(usize) -> f64, coords: &[f64]| -> Option<f64> {
        let g = &space.grid;
        let mut base = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for d in 0..n {
            let x = (coords[d] - g.origin[d]) / g.spacing[d];
            let shape = g.shape[d] as isize;
            let mut i0 = x.floor() as isize;
            let mut f = x - i0 as f64;
            if g.periodic[d] {
                i0 = i0.rem_euclid(shape);
            } else {
                if i0 < 0 || i0 >= shape - 1 {
                    if i0 == shape - 1 && f < 1e-9 {
                        i0 = shape - 2;
                        f = 1.0;
                    } else {
                        return None;
                    }
                }
            }
            base.push(i0 as usize);
            frac.push(f);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut idx = 0usize;
            let mut w = 1.0;
            for d in 0..n {
                let bit = (corner >> d) & 1;
                let i = if bit == 1 {
                    (base[d] + 1) % space.grid.shape[d]
                } else {
                    base[d]
                };
                idx += i * space.grid.strides()[d];
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            acc += w * field(idx);
        }
        Some(acc)
    };

    let velocity = |coords: &[f64], seed: usize| -> Result<Vec<f64>> {
        let mval = sample_scalar(&|p| m.get(p), coords).ok_or(Error::FlowLeftDomain { seed })?;
        if mval < eps || eps == 0.0 {
            return Err(Error::FlowLeftRegular { seed });
        }
        let t = coords[0];
        let mut v = Vec::with_capacity(n);
        for d in 0..n {
            let c = sample_scalar(&|p| du.component(d)[p], coords)
                .ok_or(Error::FlowLeftDomain { seed })?;
            v.push(inv_metric_at(&space, t, d) * c);
        }
        // Normalize to unit metric length.
        let norm = (0..n)
            .map(|d| v[d] * v[d] / inv_metric_at(&space, t, d))
            .sum::<f64>()
            .sqrt();
        Ok(v.into_iter().map(|c| c / norm).collect())
    };

    let mut geo_max = 0.0f64;
    let mut transport_max = 0.0f64;
    let mut arrivals = Vec::with_capacity(seeds.len());
    let mut logs = Vec::with_capacity(seeds.len());
    for (si, seed) in seeds.iter().enumerate() {
        let mut x = seed.clone();
        let u0 = sample_scalar(&|p| u.get(p), &x).ok_or(Error::FlowLeftDomain { seed: si })?;
        let mut velocities: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for _ in 0..steps {
            let k1 = velocity(&x, si)?;
            let x2: Vec<f64> = (0..n).map(|d| x[d] + 0.5 * dt * k1[d]).collect();
            let k2 = velocity(&x2, si)?;
            let x3: Vec<f64> = (0..n).map(|d| x[d] + 0.5 * dt * k2[d]).collect();
            let k3 = velocity(&x3, si)?;
            let x4: Vec<f64> = (0..n).map(|d| x[d] + dt * k3[d]).collect();
            let k4 = velocity(&x4, si)?;
            velocities.push((x.clone(), k1.clone()));
            for d in 0..n {
                x[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
            }
        }
        let u1 = sample_scalar(&|p| u.get(p), &x).ok_or(Error::FlowLeftDomain { seed: si })?;
        arrivals.push(u1);
        // Geodesic residual from centered differences of the velocity
        // samples plus the connection quadratic.
        let mut geo_seed = 0.0f64;
        for w in velocities.windows(3).step_by(4) {
            let (_, ref vm) = w[0];
            let (ref x0, ref v0) = w[1];
            let (_, ref vp) = w[2];
            let mut acc = vec![0.0; n];
            for d in 0..n {
                acc[d] = (vp[d] - vm[d]) / (2.0 * dt);
            }
            let gamma = space.christoffel_quadratic(x0[0], v0);
            let mut norm_sq = 0.0;
            for d in 0..n {
                let a = acc[d] + gamma[d];
                norm_sq += a * a / inv_metric_at(&space, x0[0], d);
            }
            geo_seed = geo_seed.max(norm_sq.sqrt());
        }
        geo_max = geo_max.max(geo_seed);
        let predicted = beta.transport_time(u0, u1);
        let transport_error = (t_span - predicted).abs();
        transport_max = transport_max.max(transport_error);
        logs.push(SeedLog {
            start: seed.clone(),
            start_level: u0,
            arrival_level: u1,
            transport_error,
            geodesic_residual: geo_seed,
        });
    }
    let spread = arrivals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - arrivals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(FlowAudit {
        geodesic_residual_max: geo_max,
        transport_error_max: transport_max,
        arrival_spread: spread,
        seeds: logs,
    })
}

/// One named verdict of the splitting audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn verdict(name: &str, statistic: f64, threshold: f64, upper: bool) -> Verdict {
    Verdict {
        name: name.into(),
        statistic,
        threshold,
        pass: if upper {
            statistic <= threshold
        } else {
            statistic >= threshold
        },
    }
}

/// Per-level statistics recorded by the audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelStat {
    pub level: f64,
    pub points: usize,
    pub grad_mean: f64,
    pub grad_scatter: f64,
    pub umbilicity_max: f64,
    pub curvature_margin_min: f64,
}

/// Aggregate splitting audit per the warped-product reconstruction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingReport {
    pub truncation: f64,
    pub min_gradient: f64,
    pub levelset_constancy: f64,
    pub umbilicity_defect_max: f64,
    pub curvature_margin_min: f64,
    pub lambda_mean: f64,
    pub lambda_abs_max: f64,
    /// |∇u| against the kernel certificate (derivative of the
    /// fiber-averaged profile): the discrete realization of |∇u| = c·w.
    pub ratio_constancy: f64,
    pub ratio_mean: f64,
    /// Same ratio against the spectral eigenfield, reported for
    /// transparency (carries the O(h²) eigen bias).
    pub ratio_spectral: FieldStats,
    pub fiber_dependence: f64,
    pub k_mean: f64,
    pub k_stdev: f64,
    pub ode_residual_max: f64,
    pub warp_error_max: f64,
    pub beta_scatter: f64,
    pub geodesic_residual_max: f64,
    pub transport_error_max: f64,
    pub lie_residual_max: f64,
    pub levels: Vec<LevelStat>,
    pub flow_seeds: Vec<SeedLog>,
    pub verdicts: Vec<Verdict>,
}

impl SplittingReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Options steering the audit sampling.
#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub levels: usize,
    pub seeds: usize,
    pub flow_span: f64,
    pub frame_seed: u64,
    pub beta_bins: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            levels: 9,
            seeds: 8,
            flow_span: 1.0,
            frame_seed: 0,
            beta_bins: 64,
        }
    }
}

/// Runs every level-set, spectral-ratio, flow, and profile statistic and
/// issues one verdict per splitting conclusion.
pub fn splitting_audit(
    u: &ScalarField,
    nl: &Nonlinearity,
    spectral: &SpectralReport,
    tols: &ToleranceSet,
    options: &AuditOptions,
) -> Result<SplittingReport> {
    let space = u.space();
    if space.ndim() < 2 {
        return Err(Error::config("space", "splitting audits need n >= 2"));
    }
    if spectral.positivity != Positivity::StrictlyPositive {
        return Err(Error::StabilityEquivalenceUnavailable);
    }
    let du = node_gradient(u);
    let m = du.norms();
    let eps = EPS_REG_REL * m.max_abs();

    let min_gradient = (0..space.num_nodes())
        .filter(|&p| space.grid.is_interior(p, 1))
        .map(|p| m.get(p))
        .fold(f64::INFINITY, f64::min);

    // Level-set statistics.
    let mut levelset_constancy = 0.0f64;
    let mut umbilicity_max = f64::NEG_INFINITY;
    let mut curvature_min = f64::INFINITY;
    let mut level_stats = Vec::new();
    for level in quantile_levels(u, options.levels) {
        let sample = sample_level_set(u, level, options.frame_seed)?;
        let stats = FieldStats::from_values(sample.points.iter().map(|pt| pt.grad_norm));
        let scatter = if stats.mean.abs() > 0.0 {
            stats.stdev / stats.mean.abs()
        } else {
            f64::INFINITY
        };
        levelset_constancy = levelset_constancy.max(scatter);
        let defect = umbilicity_defect(space, &sample)?;
        let margin = curvature_condition(space, &sample).margin_min;
        umbilicity_max = umbilicity_max.max(defect);
        curvature_min = curvature_min.min(margin);
        level_stats.push(LevelStat {
            level,
            points: sample.points.len(),
            grad_mean: stats.mean,
            grad_scatter: scatter,
            umbilicity_max: defect,
            curvature_margin_min: margin,
        });
    }

    // λ field and the warp reconstruction.
    let lambda = lambda_field(u);
    let lambda_stats = FieldStats::from_values(
        lambda.values().iter().cloned().filter(|v| v.is_finite()),
    );
    let lambda_abs_max = lambda
        .values()
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let warp_error_max = warp_reconstruction_error(u, &lambda);

    // Kernel-certificate ratio: |∇u| against the derivative of the
    // fiber-averaged profile.
    let avg = fiber_average(u);
    let h0 = space.grid.spacing[0];
    let mut cert = vec![0.0; avg.len()];
    let nn = avg.len();
    cert[0] = (avg[1] - avg[0]) / h0;
    cert[nn - 1] = (avg[nn - 1] - avg[nn - 2]) / h0;
    for j in 1..nn - 1 {
        cert[j] = (avg[j + 1] - avg[j - 1]) / (2.0 * h0);
    }
    let ratio = FieldStats::from_values((0..space.num_nodes()).filter_map(|p| {
        let g = m.get(p);
        let w = cert[space.grid.axis_index(p)].abs();
        (g >= eps && eps > 0.0 && w > 0.0).then(|| g / w)
    }));
    let ratio_constancy = if ratio.count > 0 && ratio.mean.abs() > 0.0 {
        ratio.stdev / ratio.mean.abs()
    } else {
        f64::INFINITY
    };
    let ratio_spectral = FieldStats::from_values((0..space.num_nodes()).filter_map(|p| {
        let g = m.get(p);
        (g >= eps && eps > 0.0).then(|| g / spectral.eigenfield.get(p))
    }));

    // Drift component along the unit normal.
    let mut k_values = Vec::new();
    for p in 0..space.num_nodes() {
        let g = m.get(p);
        if g < eps || eps == 0.0 {
            continue;
        }
        let grad_f = space.grad_f(p);
        // ⟨∇f, ν⟩ with both vectors contravariant.
        let inner: f64 = (0..space.ndim())
            .map(|d| grad_f[d] * space.metric(p, d) * space.inv_metric(p, d) * du.component(d)[p])
            .sum::<f64>()
            / g;
        k_values.push(inner);
    }
    let k_stats = FieldStats::from_values(k_values.into_iter());

    // Reduced ODE residual of the fiber-averaged profile at k̂.
    let t_values: Vec<f64> = (0..nn)
        .map(|j| -space.axis_extent() + j as f64 * h0)
        .collect();
    let profile = ProfileSolution {
        t: t_values,
        y: avg.clone(),
        y_prime: cert.clone(),
        k: k_stats.mean,
        ode_residual_max: 0.0,
        monotone: cert.iter().all(|&v| v > 0.0),
    };
    let ode_res = ode_residual(&profile, nl)?;

    let beta = BetaProfile::fit(u, options.beta_bins)?;

    // Flow audit from seeds on the central level set.
    let mid_level = {
        let min = u.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = u.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (min + max)
    };
    let sample = sample_level_set(u, mid_level, options.frame_seed)?;
    let stride = (sample.points.len() / options.seeds.max(1)).max(1);
    let seeds: Vec<Vec<f64>> = sample
        .points
        .iter()
        .step_by(stride)
        .take(options.seeds)
        .map(|pt| pt.coords.clone())
        .collect();
    let flow = flow_audit(u, &seeds, options.flow_span)?;

    let fiber_dep = fiber_dependence(u);
    let lie = lie_derivative_residual(u);

    let verdicts = vec![
        verdict("no_critical_points", min_gradient, 0.0, false),
        verdict(
            "gradient_constant_on_level_sets",
            levelset_constancy,
            tols.levelset_constancy,
            true,
        ),
        verdict("totally_umbilical", umbilicity_max, tols.umbilicity, true),
        verdict(
            "curvature_condition",
            curvature_min,
            -tols.curvature_margin,
            false,
        ),
        verdict("lambda_vanishes", lambda_abs_max, tols.lambda, true),
        verdict("lie_derivative_warped", lie, tols.lie_residual, true),
        verdict("warp_reconstruction", warp_error_max, tols.warp_error, true),
        verdict(
            "fiber_independent",
            fiber_dep,
            tols.fiber_dependence,
            true,
        ),
        verdict("drift_constant", k_stats.stdev, tols.k_stdev, true),
        verdict("profile_ode", ode_res, tols.ode_residual, true),
        verdict(
            "gradient_is_ground_state",
            ratio_constancy,
            tols.ratio_constancy,
            true,
        ),
        verdict(
            "geodesic_flow",
            flow.geodesic_residual_max,
            tols.geodesic_residual,
            true,
        ),
        verdict(
            "level_transport",
            flow.transport_error_max,
            tols.transport_error,
            true,
        ),
    ];

    Ok(SplittingReport {
        truncation: space.axis_extent(),
        min_gradient,
        levelset_constancy,
        umbilicity_defect_max: umbilicity_max,
        curvature_margin_min: curvature_min,
        lambda_mean: lambda_stats.mean,
        lambda_abs_max,
        ratio_constancy,
        ratio_mean: ratio.mean,
        ratio_spectral,
        fiber_dependence: fiber_dep,
        k_mean: k_stats.mean,
        k_stdev: k_stats.stdev,
        ode_residual_max: ode_res,
        warp_error_max,
        beta_scatter: beta.scatter,
        geodesic_residual_max: flow.geodesic_residual_max,
        transport_error_max: flow.transport_error_max,
        lie_residual_max: lie,
        levels: level_stats,
        flow_seeds: flow.seeds,
        verdicts,
    })
}

/// Max relative mismatch between exp(-2∫λ̄) reconstructed from the
/// fiber-averaged λ field and the declared fiber scaling of the space.
fn warp_reconstruction_error(u: &ScalarField, lambda: &ScalarField) -> f64 {
    let space = u.space();
    let axis_nodes = space.grid.shape[0];
    let h = space.grid.spacing[0];
    let mut sums = vec![0.0; axis_nodes];
    let mut counts = vec![0usize; axis_nodes];
    for p in 0..space.num_nodes() {
        let v = lambda.get(p);
        if v.is_finite() {
            let i = space.grid.axis_index(p);
            sums[i] += v;
            counts[i] += 1;
        }
    }
    // Average λ per slice where sampled; carry zero where the mask is
    // empty (tails).
    let lam_bar: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    // Trapezoid ∫₀ᵗ λ̄ from the axis midpoint.
    let mid = (axis_nodes - 1) / 2;
    let mut integral = vec![0.0; axis_nodes];
    for j in mid + 1..axis_nodes {
        integral[j] = integral[j - 1] + 0.5 * h * (lam_bar[j - 1] + lam_bar[j]);
    }
    for j in (0..mid).rev() {
        integral[j] = integral[j + 1] - 0.5 * h * (lam_bar[j] + lam_bar[j + 1]);
    }
    let mut err = 0.0f64;
    for j in 0..axis_nodes {
        let reconstructed = (-2.0 * integral[j]).exp();
        let w = space.warp_at_index(j);
        let declared = w * w;
        err = err.max((reconstructed - declared).abs() / declared);
    }
    err
}
