//! Discrete weighted vector calculus.
//!
//! The gradient lives on staggered edges; the weighted divergence is
//! constructed as its exact negative adjoint under the weighted inner
//! product `⟨a, b⟩_f = Σ a b e^{-f} √G ∏ wᵢhᵢ`. The drift Laplacian
//! `Δ_f = e^f div(e^{-f} ∇·)` therefore satisfies summation by parts to
//! rounding, which turns the integral identities the stability theory
//! rests on into machine-precision statements. Pointwise it agrees with
//! `Δu - ⟨∇f, ∇u⟩` to O(h²).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::space::ModelSpace;

const NO_NEIGHBOR: u32 = u32::MAX;

/// Compensated (Kahan) accumulator; keeps the fixed deterministic
/// reduction order while suppressing cancellation noise in the long sums.
#[derive(Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum
    }
}

/// Precomputed stencil data: neighbor tables plus the edge coefficients
/// `c_e = κ_avg ∏_{j≠d}(w_j h_j) / h_d` of the weighted Dirichlet form.
#[derive(Debug)]
pub struct DriftStencil {
    ndim: usize,
    nplus: Vec<Vec<u32>>,
    nminus: Vec<Vec<u32>>,
    cplus: Vec<Vec<f64>>,
    cminus: Vec<Vec<f64>>,
}

impl DriftStencil {
    pub(crate) fn build(space: &ModelSpace) -> DriftStencil {
        let g = &space.grid;
        let n = g.ndim();
        let len = g.len();
        let mut nplus = vec![vec![NO_NEIGHBOR; len]; n];
        let mut nminus = vec![vec![NO_NEIGHBOR; len]; n];
        let mut cplus = vec![vec![0.0; len]; n];
        let mut cminus = vec![vec![0.0; len]; n];
        for d in 0..n {
            for p in 0..len {
                if let Some(q) = g.neighbor(p, d, 1) {
                    nplus[d][p] = q as u32;
                    // Transverse dual measure with trapezoid half weights.
                    let mut meas = 1.0;
                    for j in 0..n {
                        if j == d {
                            continue;
                        }
                        let i = g.coord_index(p, j);
                        let mut w = g.spacing[j];
                        if !g.periodic[j] && (i == 0 || i + 1 == g.shape[j]) {
                            w *= 0.5;
                        }
                        meas *= w;
                    }
                    let kappa = 0.5 * (space.kappa(p, d) + space.kappa(q, d));
                    cplus[d][p] = kappa * meas / g.spacing[d];
                }
                if let Some(q) = g.neighbor(p, d, -1) {
                    nminus[d][p] = q as u32;
                }
            }
            for p in 0..len {
                let q = nminus[d][p];
                if q != NO_NEIGHBOR {
                    cminus[d][p] = cplus[d][q as usize];
                }
            }
        }
        DriftStencil {
            ndim: n,
            nplus,
            nminus,
            cplus,
            cminus,
        }
    }

    /// Symmetric stencil apply: `out_p = Σ_e c_e (u_q - u_p)` over edges
    /// incident to p. This is `M·Δ_f u` (negative semidefinite).
    pub(crate) fn apply_s(&self, u: &[f64], out: &mut [f64]) {
        for p in 0..u.len() {
            let mut acc = 0.0;
            for d in 0..self.ndim {
                let qp = self.nplus[d][p];
                if qp != NO_NEIGHBOR {
                    acc += self.cplus[d][p] * (u[qp as usize] - u[p]);
                }
                let qm = self.nminus[d][p];
                if qm != NO_NEIGHBOR {
                    acc += self.cminus[d][p] * (u[qm as usize] - u[p]);
                }
            }
            out[p] = acc;
        }
    }

    /// Visits every edge once: `visit(p, q, dir, c_e)` with q the +dir
    /// neighbor of p.
    pub(crate) fn for_each_edge(&self, mut visit: impl FnMut(usize, usize, usize, f64)) {
        for d in 0..self.ndim {
            let np = &self.nplus[d];
            let cp = &self.cplus[d];
            for p in 0..np.len() {
                let q = np[p];
                if q != NO_NEIGHBOR {
                    visit(p, q as usize, d, cp[p]);
                }
            }
        }
    }
}

/// Node-sampled scalar field on a model space.
#[derive(Clone, Debug)]
pub struct ScalarField {
    space: Arc<ModelSpace>,
    values: Vec<f64>,
}

impl ScalarField {
    /// Builds a field, checking shape and finiteness.
    pub fn new(space: Arc<ModelSpace>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != space.num_nodes() {
            return Err(Error::SpaceMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::FieldFile("non-finite field value".into()));
        }
        Ok(ScalarField { space, values })
    }

    /// Builds a field that may carry NaN mask entries (diagnostic outputs).
    pub fn masked(space: Arc<ModelSpace>, values: Vec<f64>) -> ScalarField {
        assert_eq!(values.len(), space.num_nodes());
        ScalarField { space, values }
    }

    pub fn constant(space: Arc<ModelSpace>, c: f64) -> ScalarField {
        let n = space.num_nodes();
        ScalarField {
            space,
            values: vec![c; n],
        }
    }

    pub fn from_fn(space: Arc<ModelSpace>, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..space.num_nodes())
            .map(|p| f(&space.grid.coords(p)))
            .collect();
        ScalarField { space, values }
    }

    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            space: self.space.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// True when the field vanishes on every truncation-boundary node.
    pub fn is_compactly_supported(&self) -> bool {
        (0..self.values.len())
            .all(|p| !self.space.grid.on_truncation_boundary(p) || self.values[p] == 0.0)
    }
}

pub(crate) fn same_space(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if Arc::ptr_eq(a.space(), b.space()) || a.space().config == b.space().config {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

/// Edge-staggered vector field: component d lives on the edge from p to
/// its +d neighbor and is stored at index p (zero where the edge is
/// absent). Components are coordinate partials (covariant).
#[derive(Clone, Debug)]
pub struct VectorField {
    space: Arc<ModelSpace>,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn component(&self, dir: usize) -> &[f64] {
        &self.comps[dir]
    }

    /// Averages the staggered components to nodes; one-sided at the
    /// truncation boundary.
    pub fn at_nodes(&self) -> NodeVectorField {
        let g = &self.space.grid;
        let n = g.ndim();
        let len = g.len();
        let mut comps = vec![vec![0.0; len]; n];
        for d in 0..n {
            for p in 0..len {
                let here = edge_exists(&self.space, p, d).then(|| self.comps[d][p]);
                let back = g
                    .neighbor(p, d, -1)
                    .filter(|&q| edge_exists(&self.space, q, d))
                    .map(|q| self.comps[d][q]);
                comps[d][p] = match (here, back) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => 0.0,
                };
            }
        }
        NodeVectorField {
            space: self.space.clone(),
            comps,
        }
    }
}

#[inline]
pub(crate) fn edge_exists(space: &ModelSpace, p: usize, d: usize) -> bool {
    space.grid.periodic[d] || space.grid.coord_index(p, d) + 1 < space.grid.shape[d]
}

/// Node-sampled vector field (covariant coordinate partials).
#[derive(Clone, Debug)]
pub struct NodeVectorField {
    space: Arc<ModelSpace>,
    comps: Vec<Vec<f64>>,
}

impl NodeVectorField {
    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn component(&self, dir: usize) -> &[f64] {
        &self.comps[dir]
    }

    pub fn ndim(&self) -> usize {
        self.comps.len()
    }

    /// Covariant components at a node.
    pub fn at(&self, node: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[node]).collect()
    }

    /// Contravariant components (index raised with the diagonal metric).
    pub fn raised_at(&self, node: usize) -> Vec<f64> {
        (0..self.ndim())
            .map(|d| self.space.inv_metric(node, d) * self.comps[d][node])
            .collect()
    }

    /// Metric norm |v| at a node.
    #[inline]
    pub fn norm_at(&self, node: usize) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.comps.len() {
            let c = self.comps[d][node];
            acc += self.space.inv_metric(node, d) * c * c;
        }
        acc.sqrt()
    }

    /// Metric inner product with another covariant vector at a node.
    pub fn inner_at(&self, node: usize, other: &[f64]) -> f64 {
        (0..self.ndim())
            .map(|d| self.space.inv_metric(node, d) * self.comps[d][node] * other[d])
            .sum()
    }

    /// Node field of metric norms.
    pub fn norms(&self) -> ScalarField {
        let values = (0..self.space.num_nodes())
            .map(|p| self.norm_at(p))
            .collect();
        ScalarField {
            space: self.space.clone(),
            values,
        }
    }
}

/// Node-sampled symmetric tensor field; entries valid at interior nodes
/// only (one cell clear of every truncation boundary).
#[derive(Clone, Debug)]
pub struct SymmetricTensorField {
    space: Arc<ModelSpace>,
    /// Upper triangle, row-major: (0,0), (0,1), ..., (1,1), ...
    entries: Vec<Vec<f64>>,
    valid: Vec<bool>,
}

impl SymmetricTensorField {
    fn pair_index(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    }

    pub fn is_valid(&self, node: usize) -> bool {
        self.valid[node]
    }

    /// Entry (i, j); errors at boundary nodes where the stencil is
    /// undefined.
    pub fn entry(&self, node: usize, i: usize, j: usize) -> Result<f64> {
        if !self.valid[node] {
            return Err(Error::BoundaryHessian);
        }
        let n = self.space.ndim();
        Ok(self.entries[Self::pair_index(n, i, j)][node])
    }

    /// Full matrix at a valid node.
    pub fn matrix(&self, node: usize) -> Result<Vec<Vec<f64>>> {
        if !self.valid[node] {
            return Err(Error::BoundaryHessian);
        }
        let n = self.space.ndim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = self.entries[Self::pair_index(n, i, j)][node];
            }
        }
        Ok(m)
    }

    /// Metric Frobenius norm squared |S|² = g^{ik} g^{jl} S_ij S_kl.
    pub fn norm_sq(&self, node: usize) -> Result<f64> {
        if !self.valid[node] {
            return Err(Error::BoundaryHessian);
        }
        let n = self.space.ndim();
        let mut acc = 0.0;
        for i in 0..n {
            let ai = self.space.inv_metric(node, i);
            for j in 0..n {
                let aj = self.space.inv_metric(node, j);
                let s = self.entries[Self::pair_index(n, i, j)][node];
                acc += ai * aj * s * s;
            }
        }
        Ok(acc)
    }

    /// Contraction S(·, v) for covariant output; `v` contravariant.
    pub fn contract(&self, node: usize, v: &[f64]) -> Result<Vec<f64>> {
        if !self.valid[node] {
            return Err(Error::BoundaryHessian);
        }
        let n = self.space.ndim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.entries[Self::pair_index(n, i, j)][node] * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }
}

/// Staggered centered-difference gradient; periodic wrap on periodic
/// directions, no edge past the truncation boundary. Exact for affine
/// fields at interior edges.
pub fn gradient(u: &ScalarField) -> VectorField {
    let space = u.space().clone();
    let g = &space.grid;
    let n = g.ndim();
    let len = g.len();
    let mut comps = vec![vec![0.0; len]; n];
    for d in 0..n {
        let h = g.spacing[d];
        for p in 0..len {
            if edge_exists(&space, p, d) {
                let q = g.neighbor(p, d, 1).expect("edge checked");
                comps[d][p] = (u.values[q] - u.values[p]) / h;
            }
        }
    }
    VectorField { space, comps }
}

/// Node-sampled gradient (edge averages; one-sided at the boundary).
pub fn node_gradient(u: &ScalarField) -> NodeVectorField {
    gradient(u).at_nodes()
}

/// Drift Laplacian `Δ_f u = e^f div(e^{-f} ∇u)` realized as the exact
/// negative adjoint of the gradient under the weighted inner product.
pub fn drift_laplacian(u: &ScalarField) -> ScalarField {
    let space = u.space().clone();
    let mut out = vec![0.0; u.values.len()];
    space.stencil().apply_s(&u.values, &mut out);
    let mu = space.measures();
    for (o, &m) in out.iter_mut().zip(mu) {
        *o /= m;
    }
    ScalarField { space, values: out }
}

/// Covariant Hessian at interior nodes: centered second differences on
/// the diagonal, centered cross differences off it, plus the closed-form
/// connection correction (zero on flat families).
pub fn hessian(u: &ScalarField) -> SymmetricTensorField {
    let space = u.space().clone();
    let g = &space.grid;
    let n = g.ndim();
    let len = g.len();
    let npairs = n * (n + 1) / 2;
    let mut entries = vec![vec![0.0; len]; npairs];
    let mut valid = vec![false; len];
    let du = node_gradient(u);
    for p in 0..len {
        if !g.is_interior(p, 1) {
            continue;
        }
        valid[p] = true;
        let partials = du.at(p);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    let hp = g.neighbor(p, i, 1).expect("interior");
                    let hm = g.neighbor(p, i, -1).expect("interior");
                    (u.values[hp] - 2.0 * u.values[p] + u.values[hm])
                        / (g.spacing[i] * g.spacing[i])
                } else {
                    let pp = g
                        .neighbor(p, i, 1)
                        .and_then(|q| g.neighbor(q, j, 1))
                        .expect("interior");
                    let pm = g
                        .neighbor(p, i, 1)
                        .and_then(|q| g.neighbor(q, j, -1))
                        .expect("interior");
                    let mp = g
                        .neighbor(p, i, -1)
                        .and_then(|q| g.neighbor(q, j, 1))
                        .expect("interior");
                    let mm = g
                        .neighbor(p, i, -1)
                        .and_then(|q| g.neighbor(q, j, -1))
                        .expect("interior");
                    (u.values[pp] - u.values[pm] - u.values[mp] + u.values[mm])
                        / (4.0 * g.spacing[i] * g.spacing[j])
                };
                entries[k][p] = v + space.hessian_correction(p, i, j, &partials);
                k += 1;
            }
        }
    }
    SymmetricTensorField {
        space,
        entries,
        valid,
    }
}

/// Weighted inner product ⟨u, v⟩_f.
pub fn weighted_inner(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    same_space(u, v)?;
    let mu = u.space().measures();
    let mut acc = KahanSum::default();
    for p in 0..u.values.len() {
        acc.add(u.values[p] * v.values[p] * mu[p]);
    }
    Ok(acc.value())
}

/// Weighted Dirichlet form ⟨∇u, ∇v⟩_f with edge-averaged weights.
pub fn weighted_dirichlet(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    same_space(u, v)?;
    let mut acc = KahanSum::default();
    u.space().stencil().for_each_edge(|p, q, _d, c| {
        acc.add(c * (u.values[q] - u.values[p]) * (v.values[q] - v.values[p]));
    });
    Ok(acc.value())
}

/// Dirichlet form restricted to edges with both endpoints in the region
/// mask.
pub(crate) fn weighted_dirichlet_masked(
    u: &ScalarField,
    v: &ScalarField,
    mask: &[bool],
) -> Result<f64> {
    same_space(u, v)?;
    let mut acc = KahanSum::default();
    u.space().stencil().for_each_edge(|p, q, _d, c| {
        if mask[p] && mask[q] {
            acc.add(c * (u.values[q] - u.values[p]) * (v.values[q] - v.values[p]));
        }
    });
    Ok(acc.value())
}

/// Pointwise residual of the weighted Bochner identity
/// `½ Δ_f |∇u|² = |∇²u|² + ⟨∇u, ∇(Δ_f u)⟩ + Ric_f(∇u, ∇u)`,
/// masked (NaN) within three cells of a truncation boundary where the
/// composed stencils see the Neumann closure.
pub fn bochner_residual(u: &ScalarField) -> ScalarField {
    let space = u.space().clone();
    let du = node_gradient(u);
    let gsq_values: Vec<f64> = (0..space.num_nodes())
        .map(|p| {
            let n = du.norm_at(p);
            n * n
        })
        .collect();
    let gsq = ScalarField {
        space: space.clone(),
        values: gsq_values,
    };
    let lap_gsq = drift_laplacian(&gsq);
    let lap_u = drift_laplacian(u);
    let dlap = node_gradient(&lap_u);
    let hess = hessian(u);
    let values = (0..space.num_nodes())
        .map(|p| {
            if !space.grid.is_interior(p, 3) {
                return f64::NAN;
            }
            let lhs = 0.5 * lap_gsq.values[p];
            let hsq = hess.norm_sq(p).expect("interior");
            let cross = du.inner_at(p, &dlap.at(p));
            let ric = space.ricci_quadratic(p, &du.raised_at(p));
            lhs - (hsq + cross + ric)
        })
        .collect();
    ScalarField::masked(space, values)
}

/// Max |value| over unmasked entries.
pub fn masked_max_abs(field: &ScalarField) -> f64 {
    field
        .values()
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, &b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{DensityPreset, SpaceConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn torus_2d(cells: usize) -> Arc<ModelSpace> {
        // Fully periodic square of side 2π, built as a cylinder would be
        // but with the axis replaced by a periodic fiber is not available;
        // use a cylinder with a long axis for non-periodic tests instead.
        let config = SpaceConfig::cylinder(
            PI,
            2.0 * PI / cells as f64,
            vec![2.0 * PI],
            2.0 * PI / cells as f64,
            DensityPreset::Zero,
        );
        Arc::new(ModelSpace::from_config(config).unwrap())
    }

    fn periodic_fiber_field(space: &Arc<ModelSpace>, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_fn(space.clone(), |c| f(c[1]))
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let space = torus_2d(16);
        let u = ScalarField::constant(space, 3.25);
        let g = gradient(&u);
        assert!(g.component(0).iter().all(|&v| v == 0.0));
        assert!(g.component(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_exact_for_affine() {
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::line(2.0, 0.1, DensityPreset::Zero)).unwrap(),
        );
        let u = ScalarField::from_fn(space.clone(), |c| 2.0 * c[0] + 1.0);
        let g = gradient(&u);
        for p in 0..space.num_nodes() {
            if edge_exists(&space, p, 0) {
                assert!((g.component(0)[p] - 2.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradient_second_order_on_sine() {
        let mut errs = Vec::new();
        for cells in [32usize, 64] {
            let space = torus_2d(cells);
            let u = periodic_fiber_field(&space, |y| y.sin());
            let g = gradient(&u).at_nodes();
            let mut err = 0.0f64;
            for p in 0..space.num_nodes() {
                let y = space.grid.coords(p)[1];
                err = err.max((g.component(1)[p] - y.cos()).abs());
            }
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.2..4.8).contains(&ratio),
            "errors {errs:?}, ratio {ratio}"
        );
    }

    #[test]
    fn drift_laplacian_zero_on_constants() {
        let space = torus_2d(12);
        let u = ScalarField::constant(space, -4.0);
        let lap = drift_laplacian(&u);
        assert!(lap.values().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn drift_laplacian_sine_fourier_symbol() {
        // On the discrete periodic direction the stencil has symbol
        // -(2/h²)(1 - cos kh) = -k² + O(h²).
        let space = torus_2d(64);
        let u = periodic_fiber_field(&space, |y| y.sin());
        let lap = drift_laplacian(&u);
        let h: f64 = 2.0 * PI / 64.0;
        let symbol = -2.0 / (h * h) * (1.0 - h.cos());
        for p in 0..space.num_nodes() {
            if !space.grid.is_interior(p, 1) {
                continue;
            }
            let y = space.grid.coords(p)[1];
            assert!(
                (lap.get(p) - symbol * y.sin()).abs() < 1e-10,
                "symbol mismatch"
            );
            assert!((lap.get(p) + y.sin()).abs() < 2e-3);
        }
    }

    #[test]
    fn drift_laplacian_with_linear_density_1d() {
        // f(x) = x, u = x²: Δ_f u = 2 - 2x.
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::line(
                2.0,
                0.01,
                DensityPreset::LinearSlope(1.0),
            ))
            .unwrap(),
        );
        let u = ScalarField::from_fn(space.clone(), |c| c[0] * c[0]);
        let lap = drift_laplacian(&u);
        for p in 0..space.num_nodes() {
            if !space.grid.is_interior(p, 1) {
                continue;
            }
            let x = space.grid.coords(p)[0];
            assert!(
                (lap.get(p) - (2.0 - 2.0 * x)).abs() < 5e-4,
                "x = {x}: {}",
                lap.get(p)
            );
        }
    }

    #[test]
    fn summation_by_parts_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::cylinder(
                2.0,
                0.125,
                vec![1.0],
                0.125,
                DensityPreset::Gaussian,
            ))
            .unwrap(),
        );
        for _ in 0..20 {
            let u = ScalarField::new(
                space.clone(),
                (0..space.num_nodes())
                    .map(|_| rng.random::<f64>() - 0.5)
                    .collect(),
            )
            .unwrap();
            let mut hv: Vec<f64> = (0..space.num_nodes())
                .map(|_| rng.random::<f64>() - 0.5)
                .collect();
            for p in 0..space.num_nodes() {
                if space.grid.on_truncation_boundary(p) {
                    hv[p] = 0.0;
                }
            }
            let h = ScalarField::new(space.clone(), hv).unwrap();
            let lhs = weighted_dirichlet(&h, &u).unwrap();
            let rhs = -weighted_inner(&h, &drift_laplacian(&u)).unwrap();
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                (lhs - rhs).abs() / scale < 1e-12,
                "lhs {lhs} rhs {rhs} rel {}",
                (lhs - rhs).abs() / scale
            );
        }
    }

    #[test]
    fn plain_laplacian_recovered_when_density_vanishes() {
        let space = torus_2d(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = ScalarField::new(
            space.clone(),
            (0..space.num_nodes()).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
        let lap = drift_laplacian(&u);
        let g = &space.grid;
        for p in 0..space.num_nodes() {
            if !g.is_interior(p, 1) {
                continue;
            }
            let mut plain = 0.0;
            for d in 0..2 {
                let a = g.neighbor(p, d, 1).unwrap();
                let b = g.neighbor(p, d, -1).unwrap();
                plain += (u.get(a) - 2.0 * u.get(p) + u.get(b)) / (g.spacing[d] * g.spacing[d]);
            }
            assert!((lap.get(p) - plain).abs() <= 1e-12 * plain.abs().max(1.0));
        }
    }

    #[test]
    fn operators_are_linear() {
        let space = torus_2d(12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| {
            ScalarField::new(
                space.clone(),
                (0..space.num_nodes()).map(|_| rng.random::<f64>()).collect(),
            )
            .unwrap()
        };
        let u = mk(&mut rng);
        let v = mk(&mut rng);
        let (a, b) = (1.7, -0.3);
        let combo = ScalarField::new(
            space.clone(),
            u.values()
                .iter()
                .zip(v.values())
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        )
        .unwrap();
        let lap_combo = drift_laplacian(&combo);
        let lap_u = drift_laplacian(&u);
        let lap_v = drift_laplacian(&v);
        for p in 0..space.num_nodes() {
            let expect = a * lap_u.get(p) + b * lap_v.get(p);
            assert!((lap_combo.get(p) - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn hessian_exact_cases() {
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::flat_box(2, 2.0, 0.1)).unwrap(),
        );
        let affine = ScalarField::from_fn(space.clone(), |c| 1.0 + 2.0 * c[0] - 3.0 * c[1]);
        let h = hessian(&affine);
        let quad = ScalarField::from_fn(space.clone(), |c| 0.5 * c[0] * c[0]);
        let hq = hessian(&quad);
        let bilinear = ScalarField::from_fn(space.clone(), |c| c[0] * c[1]);
        let hb = hessian(&bilinear);
        for p in 0..space.num_nodes() {
            if !h.is_valid(p) {
                continue;
            }
            for (i, j) in [(0, 0), (0, 1), (1, 1)] {
                assert!(h.entry(p, i, j).unwrap().abs() < 1e-12);
            }
            assert!((hq.entry(p, 0, 0).unwrap() - 1.0).abs() < 1e-12);
            assert!(hq.entry(p, 1, 1).unwrap().abs() < 1e-12);
            assert!((hb.entry(p, 0, 1).unwrap() - 1.0).abs() < 1e-12);
            assert!(hb.entry(p, 0, 0).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_boundary_request_errors() {
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::line(1.0, 0.25, DensityPreset::Zero)).unwrap(),
        );
        let u = ScalarField::from_fn(space.clone(), |c| c[0]);
        let h = hessian(&u);
        assert!(matches!(h.entry(0, 0, 0), Err(Error::BoundaryHessian)));
    }

    #[test]
    fn weighted_inner_of_ones_is_volume() {
        let space = torus_2d(14);
        let one = ScalarField::constant(space.clone(), 1.0);
        let ip = weighted_inner(&one, &one).unwrap();
        let vol =
            crate::space::weighted_volume(&space, &crate::space::Region::FullDomain).unwrap();
        assert!((ip - vol).abs() < 1e-12 * vol);
    }

    #[test]
    fn dirichlet_form_nonnegative_on_random_fields() {
        let space = torus_2d(10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let u = ScalarField::new(
                space.clone(),
                (0..space.num_nodes())
                    .map(|_| rng.random::<f64>() - 0.5)
                    .collect(),
            )
            .unwrap();
            assert!(weighted_dirichlet(&u, &u).unwrap() >= 0.0);
        }
    }

    #[test]
    fn dirichlet_of_sine_on_circle() {
        // ∫ cos² over one period of length 2π equals π per unit of the
        // transverse direction; our cylinder has axis extent 2π as well.
        let space = torus_2d(128);
        let u = periodic_fiber_field(&space, |y| y.sin());
        let d = weighted_dirichlet(&u, &u).unwrap();
        let expected = PI * 2.0 * PI; // π times axis length 2π
        assert!((d - expected).abs() / expected < 1e-3, "d = {d}");
    }

    #[test]
    fn bochner_residual_zero_for_affine() {
        let space = Arc::new(
            ModelSpace::from_config(SpaceConfig::flat_box(2, 2.0, 0.1)).unwrap(),
        );
        let u = ScalarField::from_fn(space.clone(), |c| 0.3 * c[0] - 0.7 * c[1]);
        let r = bochner_residual(&u);
        assert!(masked_max_abs(&r) < 1e-12);
    }

    #[test]
    fn bochner_residual_second_order_flat() {
        let mut errs = Vec::new();
        for cells in [24usize, 48] {
            let h = PI / cells as f64;
            let space = Arc::new(
                ModelSpace::from_config(SpaceConfig::flat_box(2, PI, h)).unwrap(),
            );
            let u = ScalarField::from_fn(space.clone(), |c| c[0].sin() * c[1].sin());
            errs.push(masked_max_abs(&bochner_residual(&u)));
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.2..4.8).contains(&ratio),
            "errors {errs:?}, ratio {ratio}"
        );
    }

    #[test]
    fn hessian_and_laplacian_refine_at_second_order() {
        let mut hess_errs = Vec::new();
        let mut lap_errs = Vec::new();
        for h in [0.1, 0.05] {
            let space = Arc::new(
                ModelSpace::from_config(SpaceConfig::flat_box(2, 2.0, h)).unwrap(),
            );
            let u = ScalarField::from_fn(space.clone(), |c| (1.3 * c[0]).sin() * (0.7 * c[1]).cos());
            let hess = hessian(&u);
            let lap = drift_laplacian(&u);
            let mut he = 0.0f64;
            let mut le = 0.0f64;
            for p in 0..space.num_nodes() {
                if !space.grid.is_interior(p, 2) {
                    continue;
                }
                let c = space.grid.coords(p);
                let (sx, cx) = (1.3 * c[0]).sin_cos();
                let (sy, cy) = (0.7 * c[1]).sin_cos();
                let exact = [
                    [-1.69 * sx * cy, -0.91 * cx * sy],
                    [-0.91 * cx * sy, -0.49 * sx * cy],
                ];
                for i in 0..2 {
                    for j in 0..2 {
                        he = he.max((hess.entry(p, i, j).unwrap() - exact[i][j]).abs());
                    }
                }
                le = le.max((lap.get(p) - (exact[0][0] + exact[1][1])).abs());
            }
            hess_errs.push(he);
            lap_errs.push(le);
        }
        let hess_order = (hess_errs[0] / hess_errs[1]).log2();
        let lap_order = (lap_errs[0] / lap_errs[1]).log2();
        assert!(hess_order >= 1.9, "hessian errors {hess_errs:?}, order {hess_order}");
        assert!(lap_order >= 1.9, "laplacian errors {lap_errs:?}, order {lap_order}");
    }

    #[test]
    fn bochner_residual_second_order_with_density() {
        // u = x², f(x) = x in 1D; Ric_f = f'' = 0.
        let mut errs = Vec::new();
        for h in [0.02, 0.01] {
            let space = Arc::new(
                ModelSpace::from_config(SpaceConfig::line(
                    2.0,
                    h,
                    DensityPreset::LinearSlope(1.0),
                ))
                .unwrap(),
            );
            let u = ScalarField::from_fn(space.clone(), |c| c[0] * c[0]);
            errs.push(masked_max_abs(&bochner_residual(&u)));
        }
        assert!(errs[1] < 0.6 * errs[0], "errors {errs:?}");
        assert!(errs[1] < 1e-3);
    }
}
