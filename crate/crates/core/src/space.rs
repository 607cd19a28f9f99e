//! Discretized weighted model manifolds.
//!
//! A [`ModelSpace`] is a uniform tensor grid carrying a diagonal metric, a
//! smooth density `f` (so the measure is `e^{-f} dVol`), and closed-form
//! curvature data. Four families are supported: the weighted line, flat
//! boxes, flat cylinders (one truncated axis times periodic flat fibers),
//! and warped products (axis times periodic fiber scaled by
//! `exp(-∫ λ)`). The unbounded axis is truncated to `[-T, T]`; every
//! report records `T`.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DriftStencil;

/// Model family of a space. Curvature and metric data are closed-form per
/// family; flat families have vanishing Riemannian curvature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    WeightedLine,
    FlatBox,
    Cylinder,
    WarpedProduct,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::WeightedLine => "weighted_line",
            Family::FlatBox => "flat_box",
            Family::Cylinder => "cylinder",
            Family::WarpedProduct => "warped_product",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "weighted_line" => Some(Family::WeightedLine),
            "flat_box" => Some(Family::FlatBox),
            "cylinder" => Some(Family::Cylinder),
            "warped_product" => Some(Family::WarpedProduct),
            _ => None,
        }
    }
}

/// Dense polynomial in one variable, lowest coefficient first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn zero() -> Poly {
        Poly(Vec::new())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0[1..]
                .iter()
                .enumerate()
                .map(|(k, &c)| c * (k + 1) as f64)
                .collect(),
        )
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Poly {
        if self.0.is_empty() {
            return Poly::zero();
        }
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(0.0);
        for (k, &c) in self.0.iter().enumerate() {
            out.push(c / (k + 1) as f64);
        }
        Poly(out)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

/// Density preset: the closed-form `f` as a polynomial in the axis
/// coordinate `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DensityPreset {
    Zero,
    Gaussian,
    LinearSlope(f64),
    Polynomial(Vec<f64>),
}

impl DensityPreset {
    pub fn poly(&self) -> Poly {
        match self {
            DensityPreset::Zero => Poly::zero(),
            DensityPreset::Gaussian => Poly(vec![0.0, 0.0, 0.5]),
            DensityPreset::LinearSlope(k) => Poly(vec![0.0, *k]),
            DensityPreset::Polynomial(c) => Poly(c.clone()),
        }
    }
}

/// Closed-form density data `f`, `f'`, `f''` (functions of the axis
/// coordinate) together with node samples. The constructor cross-checks
/// the sampled gradient against centered differences of the sampled `f`.
#[derive(Clone, Debug)]
pub struct DensitySpec {
    pub preset: DensityPreset,
    pub f: Poly,
    pub fp: Poly,
    pub fpp: Poly,
}

impl DensitySpec {
    pub fn new(preset: DensityPreset) -> DensitySpec {
        let f = preset.poly();
        let fp = f.derivative();
        let fpp = fp.derivative();
        DensitySpec { preset, f, fp, fpp }
    }
}

/// Serializable description of a space; the single source of truth for
/// construction, report headers, and field-file sidecars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub family: Family,
    pub dimension: usize,
    /// Axis truncation: the axis covers `[-T, T]`.
    pub axis_extent: f64,
    /// Grid spacing per direction.
    pub spacing: Vec<f64>,
    /// Fiber circumferences for periodic directions (cylinder / warped).
    pub fiber_lengths: Vec<f64>,
    pub density: DensityPreset,
    /// Coefficients of the warp rate λ(t); empty means no warping.
    pub warp_lambda: Vec<f64>,
}

impl SpaceConfig {
    pub fn line(extent: f64, h: f64, density: DensityPreset) -> SpaceConfig {
        SpaceConfig {
            family: Family::WeightedLine,
            dimension: 1,
            axis_extent: extent,
            spacing: vec![h],
            fiber_lengths: vec![],
            density,
            warp_lambda: vec![],
        }
    }

    pub fn flat_box(dimension: usize, extent: f64, h: f64) -> SpaceConfig {
        SpaceConfig {
            family: Family::FlatBox,
            dimension,
            axis_extent: extent,
            spacing: vec![h; dimension],
            fiber_lengths: vec![],
            density: DensityPreset::Zero,
            warp_lambda: vec![],
        }
    }

    pub fn cylinder(
        extent: f64,
        axis_h: f64,
        fiber_lengths: Vec<f64>,
        fiber_h: f64,
        density: DensityPreset,
    ) -> SpaceConfig {
        let dim = 1 + fiber_lengths.len();
        let mut spacing = vec![axis_h];
        spacing.extend(std::iter::repeat(fiber_h).take(fiber_lengths.len()));
        SpaceConfig {
            family: Family::Cylinder,
            dimension: dim,
            axis_extent: extent,
            spacing,
            fiber_lengths,
            density,
            warp_lambda: vec![],
        }
    }
}

/// Uniform tensor-product grid. Direction 0 is the truncated axis for the
/// line/cylinder/warped families; periodic directions store one node per
/// cell (no duplicated seam).
#[derive(Clone, Debug)]
pub struct Grid {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub periodic: Vec<bool>,
    pub origin: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    fn new(shape: Vec<usize>, spacing: Vec<f64>, periodic: Vec<bool>, origin: Vec<f64>) -> Grid {
        let n = shape.len();
        let mut strides = vec![0usize; n];
        let mut acc = 1usize;
        for d in (0..n).rev() {
            strides[d] = acc;
            acc *= shape[d];
        }
        Grid {
            shape,
            spacing,
            periodic,
            origin,
            strides,
            len: acc,
        }
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    #[inline]
    pub fn coord_index(&self, node: usize, dir: usize) -> usize {
        (node / self.strides[dir]) % self.shape[dir]
    }

    #[inline]
    pub fn axis_index(&self, node: usize) -> usize {
        node / self.strides[0]
    }

    pub fn decode(&self, node: usize) -> Vec<usize> {
        (0..self.ndim()).map(|d| self.coord_index(node, d)).collect()
    }

    pub fn encode(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.ndim())
            .map(|d| self.origin[d] + self.coord_index(node, d) as f64 * self.spacing[d])
            .collect()
    }

    /// Neighbor of `node` one step along `dir` (`step` is +1 or -1);
    /// `None` past a non-periodic boundary.
    #[inline]
    pub fn neighbor(&self, node: usize, dir: usize, step: isize) -> Option<usize> {
        let i = self.coord_index(node, dir) as isize + step;
        let m = self.shape[dir] as isize;
        let j = if self.periodic[dir] {
            i.rem_euclid(m)
        } else if i < 0 || i >= m {
            return None;
        } else {
            i
        };
        let delta = (j - (self.coord_index(node, dir) as isize)) * self.strides[dir] as isize;
        Some((node as isize + delta) as usize)
    }

    /// True when the node touches a non-periodic boundary in any direction.
    pub fn on_truncation_boundary(&self, node: usize) -> bool {
        (0..self.ndim()).any(|d| {
            !self.periodic[d] && {
                let i = self.coord_index(node, d);
                i == 0 || i + 1 == self.shape[d]
            }
        })
    }

    /// True when the node is at least `margin` cells away from every
    /// non-periodic boundary.
    pub fn is_interior(&self, node: usize, margin: usize) -> bool {
        (0..self.ndim()).all(|d| {
            self.periodic[d] || {
                let i = self.coord_index(node, d);
                i >= margin && i + margin < self.shape[d]
            }
        })
    }
}

/// A discretized weighted model manifold: grid, diagonal metric, density
/// samples, nodal measures, and closed-form curvature. Immutable after
/// construction and safe to share across threads.
#[derive(Debug)]
pub struct ModelSpace {
    pub config: SpaceConfig,
    pub grid: Grid,
    pub density: DensitySpec,
    /// λ(t) and Λ(t) = ∫₀ᵗ λ for the warped family (zero otherwise).
    pub warp_lambda: Poly,
    warp_int: Poly,
    /// Per-axis-index samples.
    f_ax: Vec<f64>,
    warp_ax: Vec<f64>,
    sqrt_g_ax: Vec<f64>,
    /// Weighted nodal measure `e^{-f} √G ∏ wᵢ hᵢ` with trapezoid half
    /// weights at truncation boundaries.
    node_measure: Vec<f64>,
    stencil: OnceLock<DriftStencil>,
}

impl ModelSpace {
    pub fn from_config(config: SpaceConfig) -> Result<ModelSpace> {
        validate_config(&config)?;
        let n = config.dimension;
        let mut shape = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        let mut periodic = Vec::with_capacity(n);
        for d in 0..n {
            let h = config.spacing[d];
            if is_periodic_dir(&config, d) {
                let len = config.fiber_lengths[d - 1];
                let cells = (len / h).round() as usize;
                if cells < 3 || (cells as f64 * h - len).abs() > 1e-9 * len.max(1.0) {
                    return Err(Error::config(
                        format!("fiber_lengths[{}]", d - 1),
                        "periodic direction needs an integer cell count (>= 3)",
                    ));
                }
                shape.push(cells);
                origin.push(0.0);
                periodic.push(true);
            } else {
                let t = config.axis_extent;
                let cells = (2.0 * t / h).round() as usize;
                if cells < 2 || (cells as f64 * h - 2.0 * t).abs() > 1e-9 * t.max(1.0) {
                    return Err(Error::config(
                        "h",
                        "axis extent must be an integer number of cells (>= 2)",
                    ));
                }
                shape.push(cells + 1);
                origin.push(-t);
                periodic.push(false);
            }
        }
        let grid = Grid::new(shape, config.spacing.clone(), periodic, origin);
        let density = DensitySpec::new(config.density.clone());
        let warp_lambda = if config.family == Family::WarpedProduct {
            Poly(config.warp_lambda.clone())
        } else {
            Poly::zero()
        };
        let warp_int = warp_lambda.antiderivative();

        let axis_nodes = grid.shape[0];
        let m = (n - 1) as i32;
        let mut f_ax = Vec::with_capacity(axis_nodes);
        let mut warp_ax = Vec::with_capacity(axis_nodes);
        let mut sqrt_g_ax = Vec::with_capacity(axis_nodes);
        for i in 0..axis_nodes {
            let t = grid.origin[0] + i as f64 * grid.spacing[0];
            let f = density.f.eval(t);
            let w = (-warp_int.eval(t)).exp();
            f_ax.push(f);
            warp_ax.push(w);
            sqrt_g_ax.push(w.powi(m));
        }

        let mut space = ModelSpace {
            config,
            grid,
            density,
            warp_lambda,
            warp_int,
            f_ax,
            warp_ax,
            sqrt_g_ax,
            node_measure: Vec::new(),
            stencil: OnceLock::new(),
        };
        space.node_measure = space.build_node_measure()?;
        space.self_check_density()?;
        Ok(space)
    }

    fn build_node_measure(&self) -> Result<Vec<f64>> {
        let g = &self.grid;
        let base: f64 = g.spacing.iter().product();
        let mut out = Vec::with_capacity(g.len());
        for p in 0..g.len() {
            let i0 = g.axis_index(p);
            let mut w = base * (-self.f_ax[i0]).exp() * self.sqrt_g_ax[i0];
            for d in 0..g.ndim() {
                if !g.periodic[d] {
                    let i = g.coord_index(p, d);
                    if i == 0 || i + 1 == g.shape[d] {
                        w *= 0.5;
                    }
                }
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::config("density", "non-positive weighted cell volume"));
            }
            out.push(w);
        }
        Ok(out)
    }

    /// Constructor self-check: the closed-form f' must match centered
    /// differences of the sampled f to O(h²).
    fn self_check_density(&self) -> Result<()> {
        let h = self.grid.spacing[0];
        let n = self.f_ax.len();
        let fppp_bound = self
            .density
            .fpp
            .derivative()
            .0
            .iter()
            .map(|c| c.abs())
            .sum::<f64>()
            * self.config.axis_extent.max(1.0).powi(3);
        let tol = h * h * (fppp_bound + 1.0);
        for i in 1..n.saturating_sub(1) {
            let t = self.grid.origin[0] + i as f64 * h;
            let fd = (self.f_ax[i + 1] - self.f_ax[i - 1]) / (2.0 * h);
            if (fd - self.density.fp.eval(t)).abs() > tol {
                return Err(Error::config(
                    "density",
                    "sampled gradient disagrees with centered differences of f",
                ));
            }
        }
        Ok(())
    }

    pub fn ndim(&self) -> usize {
        self.grid.ndim()
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn axis_extent(&self) -> f64 {
        self.config.axis_extent
    }

    /// Weighted nodal measure μ_f(p).
    #[inline]
    pub fn measure(&self, node: usize) -> f64 {
        self.node_measure[node]
    }

    pub fn measures(&self) -> &[f64] {
        &self.node_measure
    }

    pub fn density_at_node(&self, node: usize) -> f64 {
        self.f_ax[self.grid.axis_index(node)]
    }

    /// Closed-form ∇f at a node, as contravariant components. Only the
    /// axis component is nonzero since f = f(t).
    pub fn grad_f(&self, node: usize) -> Vec<f64> {
        let t = self.axis_coord(node);
        let mut v = vec![0.0; self.ndim()];
        v[0] = self.density.fp.eval(t);
        v
    }

    pub fn axis_coord(&self, node: usize) -> f64 {
        self.grid.origin[0] + self.grid.axis_index(node) as f64 * self.grid.spacing[0]
    }

    pub fn warp_at_index(&self, axis_index: usize) -> f64 {
        self.warp_ax[axis_index]
    }

    pub fn warp_at(&self, t: f64) -> f64 {
        (-self.warp_int.eval(t)).exp()
    }

    pub fn sqrt_g_at_index(&self, axis_index: usize) -> f64 {
        self.sqrt_g_ax[axis_index]
    }

    /// Inverse-metric diagonal entry a_d = 1/g_dd at a node.
    #[inline]
    pub fn inv_metric(&self, node: usize, dir: usize) -> f64 {
        if dir == 0 || self.config.family != Family::WarpedProduct {
            1.0
        } else {
            let w = self.warp_ax[self.grid.axis_index(node)];
            1.0 / (w * w)
        }
    }

    /// Metric diagonal entry g_dd at a node.
    #[inline]
    pub fn metric(&self, node: usize, dir: usize) -> f64 {
        1.0 / self.inv_metric(node, dir)
    }

    /// Edge conductivity density κ_d = a_d e^{-f} √G at a node; edge
    /// coefficients average this between the two endpoints.
    #[inline]
    pub fn kappa(&self, node: usize, dir: usize) -> f64 {
        let i0 = self.grid.axis_index(node);
        (-self.f_ax[i0]).exp() * self.sqrt_g_ax[i0] * self.inv_metric(node, dir)
    }

    /// Bakry-Émery Ricci quadratic form Ric_f(v, v) for a contravariant
    /// vector v at a node, from the family's closed-form curvature.
    pub fn ricci_quadratic(&self, node: usize, v: &[f64]) -> f64 {
        let t = self.axis_coord(node);
        let fpp = self.density.fpp.eval(t);
        match self.config.family {
            Family::WeightedLine | Family::FlatBox | Family::Cylinder => fpp * v[0] * v[0],
            Family::WarpedProduct => {
                let lam = self.warp_lambda.eval(t);
                let lamp = self.warp_lambda.derivative().eval(t);
                let fp = self.density.fp.eval(t);
                let w = self.warp_at(t);
                let w2 = w * w;
                let m = (self.ndim() - 1) as f64;
                // Ric_tt = -m(λ² - λ'); Ric_aa = -w²(mλ² - λ'); Hess f adds
                // f'' on the axis and -λ w² f' on the fiber diagonal.
                let rtt = -m * (lam * lam - lamp) + fpp;
                let raa = -w2 * (m * lam * lam - lamp) - lam * w2 * fp;
                let fiber_sq: f64 = v[1..].iter().map(|&c| c * c).sum();
                rtt * v[0] * v[0] + raa * fiber_sq
            }
        }
    }

    /// Covariant-Hessian correction `-Γ^k_{ij} ∂_k u` for entry (i, j),
    /// given the coordinate partials `du`. Zero on flat families.
    pub fn hessian_correction(&self, node: usize, i: usize, j: usize, du: &[f64]) -> f64 {
        if self.config.family != Family::WarpedProduct {
            return 0.0;
        }
        let t = self.axis_coord(node);
        let lam = self.warp_lambda.eval(t);
        if i == 0 && j == 0 {
            0.0
        } else if i == 0 || j == 0 {
            // -Γ^a_{tb} ∂_a u with Γ^a_{tb} = -λ δ^a_b
            let a = if i == 0 { j } else { i };
            lam * du[a]
        } else if i == j {
            // -Γ^t_{aa} ∂_t u with Γ^t_{aa} = -λ w²
            let w = self.warp_at(t);
            lam * w * w * du[0]
        } else {
            0.0
        }
    }

    /// Geodesic acceleration correction Γ^k_{ij} v^i v^j (contravariant).
    pub fn christoffel_quadratic(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        if self.config.family != Family::WarpedProduct {
            return out;
        }
        let lam = self.warp_lambda.eval(t);
        let w = self.warp_at(t);
        let fiber_sq: f64 = v[1..].iter().map(|&c| c * c).sum();
        out[0] = -lam * w * w * fiber_sq;
        for a in 1..v.len() {
            out[a] = -2.0 * lam * v[0] * v[a];
        }
        out
    }

    /// Geodesic distance between coordinate points: axis distance combined
    /// with flat-torus fiber distance. Exact on product families; on
    /// warped products this is the product-formula proxy.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.ndim() {
            let mut delta = (a[d] - b[d]).abs();
            if self.grid.periodic[d] {
                let len = self.grid.shape[d] as f64 * self.grid.spacing[d];
                delta = delta.min(len - delta);
            }
            acc += delta * delta;
        }
        acc.sqrt()
    }

    /// Coordinates of the grid center (the implicit origin p₀).
    pub fn center(&self) -> Vec<f64> {
        (0..self.ndim())
            .map(|d| {
                if self.grid.periodic[d] {
                    0.0
                } else {
                    0.0 // axis midpoint of [-T, T]
                }
            })
            .collect()
    }

    /// Node distances from a point, sorted ascending, with prefix sums of
    /// the weighted measure. Supports O(log N) ball volumes.
    pub fn ball_volume_table(&self, center: &[f64]) -> BallVolumeTable {
        let mut pairs: Vec<(f64, f64)> = (0..self.num_nodes())
            .map(|p| {
                (
                    self.distance(&self.grid.coords(p), center),
                    self.node_measure[p],
                )
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut dist = Vec::with_capacity(pairs.len());
        let mut cum = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (d, w) in pairs {
            acc += w;
            dist.push(d);
            cum.push(acc);
        }
        BallVolumeTable { dist, cum }
    }

    pub(crate) fn stencil(&self) -> &DriftStencil {
        self.stencil.get_or_init(|| DriftStencil::build(self))
    }
}

fn is_periodic_dir(config: &SpaceConfig, d: usize) -> bool {
    matches!(config.family, Family::Cylinder | Family::WarpedProduct) && d > 0
}

fn validate_config(config: &SpaceConfig) -> Result<()> {
    let n = config.dimension;
    if n == 0 {
        return Err(Error::config("n", "dimension must be >= 1"));
    }
    match config.family {
        Family::WeightedLine => {
            if n != 1 {
                return Err(Error::config("n", "weighted_line is one-dimensional"));
            }
        }
        Family::Cylinder | Family::WarpedProduct => {
            if n < 2 {
                return Err(Error::config("n", "cylinder families need n >= 2"));
            }
            if config.fiber_lengths.len() != n - 1 {
                return Err(Error::config(
                    "fiber_lengths",
                    format!("expected {} fiber lengths", n - 1),
                ));
            }
            for (i, &len) in config.fiber_lengths.iter().enumerate() {
                if !(len > 0.0) {
                    return Err(Error::config(
                        format!("fiber_lengths[{i}]"),
                        "must be positive",
                    ));
                }
            }
        }
        Family::FlatBox => {
            if !config.fiber_lengths.is_empty() {
                return Err(Error::config(
                    "fiber_lengths",
                    "flat_box has no periodic fibers",
                ));
            }
        }
    }
    if config.family == Family::WarpedProduct && config.warp_lambda.is_empty() {
        return Err(Error::config("warp_lambda", "warped_product needs λ coefficients"));
    }
    if config.family != Family::WarpedProduct && !config.warp_lambda.is_empty() {
        return Err(Error::config("warp_lambda", "only warped_product takes λ"));
    }
    if !(config.axis_extent > 0.0) {
        return Err(Error::config("T", "axis extent must be positive"));
    }
    if config.spacing.len() != n {
        return Err(Error::config("h", format!("expected {n} spacings")));
    }
    for (i, &h) in config.spacing.iter().enumerate() {
        if !(h > 0.0) {
            return Err(Error::config(format!("h[{i}]"), "spacing must be positive"));
        }
    }
    Ok(())
}

/// Sorted distance/cumulative-measure table for fast ball volumes.
pub struct BallVolumeTable {
    dist: Vec<f64>,
    cum: Vec<f64>,
}

impl BallVolumeTable {
    /// Weighted volume of the closed ball of radius `r`.
    pub fn volume(&self, r: f64) -> f64 {
        let idx = self.dist.partition_point(|&d| d <= r);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }
}

/// Node region on a model space.
#[derive(Clone, Debug)]
pub enum Region {
    FullDomain,
    /// Geodesic ball; `center` in coordinates.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned coordinate box `[lo, hi]` per direction.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    NodeSet(BTreeSet<usize>),
}

impl Region {
    pub fn ball_at_center(space: &ModelSpace, radius: f64) -> Region {
        Region::Ball {
            center: space.center(),
            radius,
        }
    }

    pub fn contains(&self, space: &ModelSpace, node: usize) -> bool {
        match self {
            Region::FullDomain => true,
            Region::Ball { center, radius } => {
                space.distance(&space.grid.coords(node), center) <= *radius
            }
            Region::Box { lo, hi } => {
                let c = space.grid.coords(node);
                c.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .all(|(&x, (&l, &h))| x >= l - 1e-12 && x <= h + 1e-12)
            }
            Region::NodeSet(set) => set.contains(&node),
        }
    }

    /// Nodes of the region in ascending index order (the fixed reduction
    /// order used throughout).
    pub fn nodes(&self, space: &ModelSpace) -> Vec<usize> {
        match self {
            Region::NodeSet(set) => set.iter().copied().collect(),
            _ => (0..space.num_nodes())
                .filter(|&p| self.contains(space, p))
                .collect(),
        }
    }

    /// Nodes of the open interior: balls and boxes exclude their metric
    /// boundary (capacitor domains are open sets).
    pub fn interior_nodes(&self, space: &ModelSpace) -> Vec<usize> {
        match self {
            Region::Ball { center, radius } => (0..space.num_nodes())
                .filter(|&p| space.distance(&space.grid.coords(p), center) < radius - 1e-12)
                .collect(),
            Region::Box { lo, hi } => (0..space.num_nodes())
                .filter(|&p| {
                    let c = space.grid.coords(p);
                    c.iter()
                        .zip(lo.iter().zip(hi.iter()))
                        .all(|(&x, (&l, &h))| x > l + 1e-12 && x < h - 1e-12)
                })
                .collect(),
            _ => self.nodes(space),
        }
    }

    /// Validates that the region stays inside the truncated domain.
    pub fn validate(&self, space: &ModelSpace) -> Result<()> {
        let t = space.axis_extent();
        match self {
            Region::FullDomain => Ok(()),
            Region::Ball { center, radius } => {
                for d in 0..space.ndim() {
                    if !space.grid.periodic[d]
                        && (center[d] - radius < -t - 1e-12 || center[d] + radius > t + 1e-12)
                    {
                        return Err(Error::RegionOutsideDomain);
                    }
                }
                Ok(())
            }
            Region::Box { lo, hi } => {
                for d in 0..space.ndim() {
                    if !space.grid.periodic[d] && (lo[d] < -t - 1e-12 || hi[d] > t + 1e-12) {
                        return Err(Error::RegionOutsideDomain);
                    }
                }
                Ok(())
            }
            Region::NodeSet(set) => {
                if set.iter().any(|&p| p >= space.num_nodes()) {
                    return Err(Error::RegionOutsideDomain);
                }
                Ok(())
            }
        }
    }
}

/// Nested family of regions exhausting the (truncated) space.
#[derive(Clone, Debug)]
pub struct Exhaustion {
    pub regions: Vec<Region>,
}

impl Exhaustion {
    /// Concentric balls of the given radii about the grid center.
    pub fn balls(space: &ModelSpace, radii: &[f64]) -> Exhaustion {
        Exhaustion {
            regions: radii
                .iter()
                .map(|&r| Region::ball_at_center(space, r))
                .collect(),
        }
    }

    /// Checks strict nesting and that every element stays clear of the
    /// truncation boundary.
    pub fn validate(&self, space: &ModelSpace) -> Result<Vec<Vec<usize>>> {
        let mut sets = Vec::with_capacity(self.regions.len());
        for (j, region) in self.regions.iter().enumerate() {
            region.validate(space)?;
            let nodes = region.nodes(space);
            if nodes.iter().any(|&p| space.grid.on_truncation_boundary(p)) {
                return Err(Error::NonNestedExhaustion(j));
            }
            if let Some(prev) = sets.last() {
                let prev: &Vec<usize> = prev;
                let set: BTreeSet<usize> = nodes.iter().copied().collect();
                if !prev.iter().all(|p| set.contains(p)) || prev.len() >= nodes.len() {
                    return Err(Error::NonNestedExhaustion(j));
                }
            }
            sets.push(nodes);
        }
        Ok(sets)
    }
}

/// Weighted volume of a region: Σ e^{-f} √G ∏ wᵢ hᵢ over its nodes.
/// Additive over disjoint regions; an empty region has volume zero.
pub fn weighted_volume(space: &ModelSpace, region: &Region) -> Result<f64> {
    region.validate(space)?;
    let mut acc = 0.0;
    for p in region.nodes(space) {
        acc += space.measure(p);
    }
    Ok(acc)
}

/// Weighted boundary measure L(r) of the geodesic sphere about the grid
/// center, as a shell difference quotient of the ball volume.
pub fn boundary_area(space: &ModelSpace, r: f64) -> Result<f64> {
    let t = space.axis_extent();
    // A shell 1.5 cells thick keeps the sampling radii clear of the node
    // distances themselves, which the volume function jumps at.
    let delta = 1.5
        * space
            .grid
            .spacing
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
    if !(r > 0.0) || r >= t || r + delta > t + 1e-12 {
        return Err(Error::SphereOutsideDomain);
    }
    let table = space.ball_volume_table(&space.center());
    let outer = table.volume(r + delta);
    let inner = table.volume((r - delta).max(0.0));
    Ok((outer - inner) / (2.0 * delta))
}
