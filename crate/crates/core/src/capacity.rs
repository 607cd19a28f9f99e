//! f-capacity via discrete f-harmonic capacitors, exhaustion limits, and
//! parabolicity verdicts by capacity decay or by volume growth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{weighted_dirichlet, ScalarField};
use crate::linalg::{conjugate_gradient, LinearOp};
use crate::space::{Exhaustion, ModelSpace, Region};

/// A solved f-harmonic capacitor pair (K, Ω): φ = 1 on K, φ = 0 outside
/// Ω, Δ_f φ = 0 in between.
#[derive(Clone, Debug)]
pub struct Capacitor {
    pub phi: ScalarField,
    pub energy: f64,
    pub free_nodes: usize,
    pub cg_iterations: usize,
}

struct SubgraphOp {
    diag: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
}

impl LinearOp for SubgraphOp {
    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.diag[i] * x[i];
        }
        for &(i, j, c) in &self.edges {
            out[i as usize] -= c * x[j as usize];
            out[j as usize] -= c * x[i as usize];
        }
    }
}

/// Solves the discrete Dirichlet problem of the capacitor pair. The free
/// system is the symmetric positive-definite restriction of the weighted
/// graph Laplacian, solved with Jacobi-preconditioned CG; the discrete
/// maximum principle keeps 0 ≤ φ ≤ 1.
pub fn solve_capacitor(
    space: &std::sync::Arc<ModelSpace>,
    k_region: &Region,
    omega: &Region,
) -> Result<Capacitor> {
    k_region.validate(space)?;
    omega.validate(space)?;
    let n = space.num_nodes();
    let mut in_k = vec![false; n];
    for p in k_region.nodes(space) {
        in_k[p] = true;
    }
    // Ω is an open set: its metric boundary carries the zero data.
    let mut in_omega = vec![false; n];
    for p in omega.interior_nodes(space) {
        in_omega[p] = true;
    }
    if in_k.iter().zip(&in_omega).any(|(&k, &o)| k && !o) {
        return Err(Error::InvalidCapacitorPair);
    }
    if !in_k.iter().any(|&k| k) || in_omega.iter().all(|&o| o) {
        return Err(Error::InvalidCapacitorPair);
    }
    // Free unknowns: Ω \ K.
    let mut index = vec![u32::MAX; n];
    let mut free = Vec::new();
    for p in 0..n {
        if in_omega[p] && !in_k[p] {
            index[p] = free.len() as u32;
            free.push(p);
        }
    }
    let mut diag = vec![0.0; free.len()];
    let mut edges = Vec::new();
    let mut rhs = vec![0.0; free.len()];
    space.stencil().for_each_edge(|p, q, _d, c| {
        let (ip, iq) = (index[p], index[q]);
        match (ip != u32::MAX, iq != u32::MAX) {
            (true, true) => {
                diag[ip as usize] += c;
                diag[iq as usize] += c;
                edges.push((ip, iq, c));
            }
            (true, false) => {
                diag[ip as usize] += c;
                if in_k[q] {
                    rhs[ip as usize] += c;
                }
            }
            (false, true) => {
                diag[iq as usize] += c;
                if in_k[p] {
                    rhs[iq as usize] += c;
                }
            }
            (false, false) => {}
        }
    });
    let op = SubgraphOp { diag, edges };
    let mut x = vec![0.0; free.len()];
    let cap = 30 * (free.len() as f64).sqrt() as usize + 200;
    let stats = conjugate_gradient(&op, &rhs, &mut x, Some(&op.diag), 1e-12, cap)?;
    let mut values = vec![0.0; n];
    for p in 0..n {
        if in_k[p] {
            values[p] = 1.0;
        }
    }
    for (i, &p) in free.iter().enumerate() {
        values[p] = x[i];
    }
    let phi = ScalarField::new(space.clone(), values)?;
    let energy = weighted_dirichlet(&phi, &phi)?;
    Ok(Capacitor {
        phi,
        energy,
        free_nodes: free.len(),
        cg_iterations: stats.iterations,
    })
}

/// Energy sequence along an exhaustion with a harmonic-tail limit
/// estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacitySequence {
    pub energies: Vec<f64>,
    /// Least-squares extrapolation of `c_j = L + A/j` over the tail,
    /// clamped at zero.
    pub limit_estimate: f64,
    /// True when the limit estimate falls below `tol_cap` relative to
    /// the first term.
    pub converged_to_zero: bool,
    pub tol_cap: f64,
}

/// Relative tolerance declaring a capacity sequence to have converged to
/// zero.
pub const TOL_CAP_REL: f64 = 1e-3;

/// Capacitor energies along an exhaustion, with the extrapolated limit.
pub fn capacity_limit(
    space: &std::sync::Arc<ModelSpace>,
    k_region: &Region,
    exhaustion: &Exhaustion,
    tol_cap: f64,
) -> Result<CapacitySequence> {
    exhaustion.validate(space)?;
    if exhaustion.regions.is_empty() {
        return Err(Error::NonNestedExhaustion(0));
    }
    let mut energies = Vec::with_capacity(exhaustion.regions.len());
    for omega in &exhaustion.regions {
        energies.push(solve_capacitor(space, k_region, omega)?.energy);
    }
    let limit_estimate = harmonic_tail_limit(&energies);
    let first = energies[0].max(1e-300);
    Ok(CapacitySequence {
        converged_to_zero: limit_estimate <= tol_cap * first,
        energies,
        limit_estimate,
        tol_cap,
    })
}

/// Extrapolates the limit of a nonincreasing capacity sequence.
///
/// Two decay models are tried. When the reciprocals 1/c_j are affine in
/// the exhaustion index (the signature of log-capacitor decay,
/// c_j ≈ a/(j·b + δ)), the limit is zero. Otherwise c_j = L + A/j is
/// fitted over the tail and max(L, 0) returned.
fn harmonic_tail_limit(energies: &[f64]) -> f64 {
    let n = energies.len();
    if n == 1 {
        return energies[0];
    }
    let start = n.saturating_sub(4);
    let tail = &energies[start..];
    if tail.len() >= 3 && tail.iter().all(|&c| c > 0.0) {
        let inv: Vec<f64> = tail.iter().map(|&c| 1.0 / c).collect();
        let diffs: Vec<f64> = inv.windows(2).map(|w| w[1] - w[0]).collect();
        let max_diff = diffs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let max_curv = diffs
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        if diffs.iter().all(|&d| d > 0.0) && max_curv <= 0.25 * max_diff {
            return 0.0;
        }
    }
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, &c) in energies.iter().enumerate().skip(start) {
        let x = 1.0 / (j + 1) as f64;
        sx += x;
        sy += c;
        sxx += x * x;
        sxy += x * c;
        m += 1.0;
    }
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return energies[n - 1];
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    intercept.max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParabolicityMethod {
    CapacityLimit,
    GrowthCriterion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parabolicity {
    Parabolic,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ParabolicityEvidence {
    Capacity {
        sequence: CapacitySequence,
    },
    Growth {
        r_min: f64,
        r_max: f64,
        integral_inv_boundary: f64,
        integral_r_over_volume: f64,
        boundary_growth_exponent: f64,
        volume_growth_exponent: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParabolicityVerdict {
    pub method: ParabolicityMethod,
    pub verdict: Parabolicity,
    pub evidence: ParabolicityEvidence,
}

/// Parabolicity by vanishing capacity (the capacity sequence and its
/// extrapolated limit are attached as evidence).
pub fn parabolicity_by_capacity(
    space: &std::sync::Arc<ModelSpace>,
    k_region: &Region,
    exhaustion: &Exhaustion,
    tol_cap: f64,
) -> Result<ParabolicityVerdict> {
    let sequence = capacity_limit(space, k_region, exhaustion, tol_cap)?;
    let verdict = if sequence.converged_to_zero {
        Parabolicity::Parabolic
    } else {
        Parabolicity::Inconclusive
    };
    Ok(ParabolicityVerdict {
        method: ParabolicityMethod::CapacityLimit,
        verdict,
        evidence: ParabolicityEvidence::Capacity { sequence },
    })
}

/// Exponent margin: a boundary-measure growth fit at or below r^{1.05}
/// (volume at or below r^{2.05}) counts the corresponding integral as
/// divergent. Finite ranges cannot certify divergence; the fit is the
/// declared proxy and is reported with the verdict.
pub const GROWTH_EXPONENT_MARGIN: f64 = 0.05;

/// Parabolicity by the volume-growth criterion: divergence of
/// `∫ dr/L(r)` or `∫ r dr/V(r)`, detected by a log-log tail fit. This
/// criterion is sufficient only, so the verdict is never "not
/// parabolic". The integrals start at 1.
pub fn parabolicity_by_growth(
    space: &std::sync::Arc<ModelSpace>,
    r_max: f64,
) -> Result<ParabolicityVerdict> {
    parabolicity_by_growth_from(space, 1.0, r_max)
}

/// [`parabolicity_by_growth`] with an explicit lower integration limit
/// (the origin-sensitivity knob).
pub fn parabolicity_by_growth_from(
    space: &std::sync::Arc<ModelSpace>,
    r_min: f64,
    r_max: f64,
) -> Result<ParabolicityVerdict> {
    if !(r_min > 0.0) || r_max < r_min + 1.0 || r_max < 2.0 {
        return Err(Error::InsufficientRange);
    }
    if r_max > space.axis_extent() {
        return Err(Error::SphereOutsideDomain);
    }
    let h_max = space.grid.spacing.iter().cloned().fold(0.0f64, f64::max);
    let r_lo = r_min;
    let r_hi = (r_max).min(space.axis_extent() - 2.0 * h_max);
    if r_hi <= r_lo {
        return Err(Error::InsufficientRange);
    }
    let table = space.ball_volume_table(&space.center());
    let delta = 1.5 * h_max;
    let boundary = |r: f64| (table.volume(r + delta) - table.volume((r - delta).max(0.0))) / (2.0 * delta);

    let steps = 200usize;
    let dr = (r_hi - r_lo) / steps as f64;
    let mut int_inv_l = 0.0;
    let mut int_r_over_v = 0.0;
    let mut lnr = Vec::with_capacity(steps + 1);
    let mut lnl = Vec::with_capacity(steps + 1);
    let mut lnv = Vec::with_capacity(steps + 1);
    let fit_lo = (r_hi / 10.0).max(r_lo);
    for i in 0..=steps {
        let r = r_lo + i as f64 * dr;
        let l = boundary(r).max(1e-300);
        let v = table.volume(r).max(1e-300);
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        int_inv_l += w * dr / l;
        int_r_over_v += w * dr * r / v;
        if r >= fit_lo {
            lnr.push(r.ln());
            lnl.push(l.ln());
            lnv.push(v.ln());
        }
    }
    let alpha = slope(&lnr, &lnl);
    let beta = slope(&lnr, &lnv);
    let divergent =
        alpha <= 1.0 + GROWTH_EXPONENT_MARGIN || beta <= 2.0 + GROWTH_EXPONENT_MARGIN;
    Ok(ParabolicityVerdict {
        method: ParabolicityMethod::GrowthCriterion,
        verdict: if divergent {
            Parabolicity::Parabolic
        } else {
            Parabolicity::Inconclusive
        },
        evidence: ParabolicityEvidence::Growth {
            r_min: r_lo,
            r_max: r_hi,
            integral_inv_boundary: int_inv_l,
            integral_r_over_volume: int_r_over_v,
            boundary_growth_exponent: alpha,
            volume_growth_exponent: beta,
        },
    })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    }
}
