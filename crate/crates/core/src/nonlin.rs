//! Nonlinearity triples (g, g', G) with G(t) = ∫₀ᵗ g.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Poly;

/// The nonlinearity family of the semilinear problem `Δ_f u + g(u) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Nonlinearity {
    /// g(t) = (1 - t²) t, the Allen-Cahn double well.
    AllenCahn,
    /// g(t) = μ t.
    Linear(f64),
    /// g given by polynomial coefficients, lowest first.
    Polynomial(Vec<f64>),
    Zero,
}

impl Nonlinearity {
    pub fn g(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn => (1.0 - t * t) * t,
            Nonlinearity::Linear(mu) => mu * t,
            Nonlinearity::Polynomial(c) => Poly(c.clone()).eval(t),
            Nonlinearity::Zero => 0.0,
        }
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn => 1.0 - 3.0 * t * t,
            Nonlinearity::Linear(mu) => *mu,
            Nonlinearity::Polynomial(c) => Poly(c.clone()).derivative().eval(t),
            Nonlinearity::Zero => 0.0,
        }
    }

    /// G(t) = ∫₀ᵗ g(s) ds; G(0) = 0 by construction.
    pub fn g_integral(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn => 0.5 * t * t - 0.25 * t * t * t * t,
            Nonlinearity::Linear(mu) => 0.5 * mu * t * t,
            Nonlinearity::Polynomial(c) => Poly(c.clone()).antiderivative().eval(t),
            Nonlinearity::Zero => 0.0,
        }
    }

    /// Shifts the linearization by a constant: returns the family with
    /// g̃(t) = g(t) + shift·t, so g̃' = g' + shift. Used to turn a
    /// near-kernel eigenfield into an exact discrete kernel field.
    pub fn shifted(&self, shift: f64) -> Nonlinearity {
        let base = match self {
            Nonlinearity::AllenCahn => vec![0.0, 1.0, 0.0, -1.0],
            Nonlinearity::Linear(mu) => vec![0.0, *mu],
            Nonlinearity::Polynomial(c) => c.clone(),
            Nonlinearity::Zero => vec![],
        };
        let mut c = base;
        if c.len() < 2 {
            c.resize(2, 0.0);
        }
        c[1] += shift;
        Nonlinearity::Polynomial(c)
    }

    /// Constructor self-check: finite differences of g must match g', and
    /// of G must match g, to O(δ²) on a probe grid.
    pub fn validate(&self) -> Result<()> {
        let delta = 1e-4;
        let probes: Vec<f64> = (-10..=10).map(|k| 0.17 * k as f64).collect();
        // Bound the third-derivative scale from the probe values themselves.
        let scale = probes
            .iter()
            .map(|&t| self.g(t).abs().max(self.g_prime(t).abs()))
            .fold(1.0f64, f64::max);
        let tol = 1e-5 * scale.max(1.0);
        for &t in &probes {
            let fd = (self.g(t + delta) - self.g(t - delta)) / (2.0 * delta);
            if (fd - self.g_prime(t)).abs() > tol {
                return Err(Error::config("nonlinearity", "g' disagrees with dg/dt"));
            }
            let fd_int = (self.g_integral(t + delta) - self.g_integral(t - delta)) / (2.0 * delta);
            if (fd_int - self.g(t)).abs() > tol {
                return Err(Error::config("nonlinearity", "G' disagrees with g"));
            }
        }
        if self.g_integral(0.0) != 0.0 {
            return Err(Error::config("nonlinearity", "G(0) must vanish"));
        }
        Ok(())
    }
}
