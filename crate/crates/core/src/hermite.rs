//! Gaussian-weighted spectral tools for `𝓛 = Δ − y/2·∇ + 1`: eigenfunctions,
//! quadrature, the cutoff χ, and the mode decomposition of Q.
//!
//! Grid functions live on sorted nodes. For `dim == 1` the nodes cover a
//! symmetric interval; for `dim > 1` they are radii starting at 0 and every
//! object is assumed radial.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use serde::{Deserialize, Serialize};

use crate::profiles::SimParams;
use crate::{Error, Result};

/// Half-width beyond which ρ is negligible at the 1e−10 level.
pub const RHO_SUPPORT: f64 = 12.0;

/// Node count of the Gauss–Hermite reference rule.
pub const GH_NODES: usize = 200;

/// `h_n(y) = Σ n!/(i!(n−2i)!) (−1)^i y^{n−2i}`.
pub fn hermite_poly(n: usize, y: f64) -> f64 {
    let mut sum = 0.0;
    // n!/(i!(n−2i)!) built incrementally to stay exact for moderate n.
    let mut coef = 1.0;
    for i in 0..=n / 2 {
        if i > 0 {
            let k = (n - 2 * i + 2) as f64 * (n - 2 * i + 1) as f64;
            coef *= -k / i as f64;
        }
        sum += coef * y.powi((n - 2 * i) as i32);
    }
    sum
}

/// `‖h_n‖²_ρ = 2ⁿ n!`.
pub fn hermite_norm_sq(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * 2.0 * k as f64)
}

/// `ρ(y) = (4π)^{−N/2} e^{−|y|²/4}`.
pub fn rho_weight(y_norm: f64, dim: usize) -> f64 {
    (4.0 * PI).powf(-(dim as f64) / 2.0) * (-0.25 * y_norm * y_norm).exp()
}

/// Surface area of the unit sphere in ℝᴺ.
pub fn sphere_area(dim: usize) -> f64 {
    // 2π^{N/2}/Γ(N/2) via Γ(k+1) = kΓ(k).
    let half = dim as f64 / 2.0;
    let mut g = if dim % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut k = if dim % 2 == 0 { 1.0 } else { 0.5 };
    while k < half {
        g *= k;
        k += 1.0;
    }
    2.0 * PI.powf(half) / g
}

/// Trapezoid weights for `∫ f ρ dy` on the given nodes, including the
/// radial surface factor when `dim > 1`.
pub fn rho_weights(y: &[f64], dim: usize) -> Vec<f64> {
    let n = y.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (y[i + 1] - y[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    let area = if dim > 1 { sphere_area(dim) } else { 1.0 };
    for (wi, &yi) in w.iter_mut().zip(y) {
        let jac = if dim > 1 { area * yi.abs().powi(dim as i32 - 1) } else { 1.0 };
        *wi *= jac * rho_weight(yi, dim);
    }
    // In 2D the integrand r·f(r) has a nonzero slope at r = 0; the
    // Euler–Maclaurin end correction restores fourth order.
    if dim == 2 && n > 1 && y[0] == 0.0 {
        let h = y[1] - y[0];
        w[0] += h * h / 12.0 * area * rho_weight(0.0, dim);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProduct {
    pub value: f64,
    /// Bound on the truncated Gaussian tail.
    pub tol_estimate: f64,
    /// Set when the grid is too short or too coarse for 1e−10 accuracy.
    pub warning: bool,
}

/// Composite-trapezoid approximation of `∫ f g ρ dy`.
pub fn inner_rho(y: &[f64], f: &[f64], g: &[f64], dim: usize) -> InnerProduct {
    let w = rho_weights(y, dim);
    let value = w.iter().zip(f).zip(g).map(|((w, f), g)| w * f * g).sum();
    let reach = if dim > 1 {
        *y.last().unwrap_or(&0.0)
    } else {
        y.first().map_or(0.0, |a| a.abs()).min(y.last().map_or(0.0, |b| b.abs()))
    };
    let max_h = y.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    let edge = |i: usize| (f[i] * g[i]).abs();
    let tail_scale = if y.is_empty() { 0.0 } else { edge(0).max(edge(y.len() - 1)) };
    let x = (reach / 2.0).max(1e-300);
    let tail = (-x * x).exp() / (x * PI.sqrt());
    InnerProduct {
        value,
        tol_estimate: tail * tail_scale.max(1.0),
        warning: reach < RHO_SUPPORT || max_h > 0.5,
    }
}

/// C^∞ bump: 1 on [0,1], 0 on [2,∞), glued with `e^{−1/t}`.
pub fn chi0(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = f(2.0 - r);
    let b = f(r - 1.0);
    a / (a + b)
}

/// `χ(y,s) = χ₀(|y|/(K₀√s))`.
pub fn chi_cutoff(y_norm: f64, s: f64, k0: f64) -> f64 {
    chi0(y_norm / (k0 * s.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDecomposition {
    pub s: f64,
    pub q0: f64,
    pub q1: Vec<f64>,
    /// Row-major N×N.
    pub q2: Vec<Vec<f64>>,
    pub q_minus: Vec<f64>,
    pub q_perp: Vec<f64>,
    pub q_e: Vec<f64>,
    /// Radial (or 1D) component of `(∇Q)_⊥`; empty if no gradient was supplied.
    pub grad_q_perp: Vec<f64>,
}

impl ModeDecomposition {
    /// Value of `q0 + q1·y + yᵀq2y − 2tr q2` at a node.
    pub fn low_modes_at(&self, y: f64, dim: usize) -> f64 {
        if dim == 1 {
            self.q0 + self.q1[0] * y + self.q2[0][0] * (y * y - 2.0)
        } else {
            self.q0 + self.q2[0][0] * (y * y - 2.0 * dim as f64)
        }
    }

    /// `q0 + q1·y + yᵀq2y − 2tr q2 + q_minus + q_e`.
    pub fn reconstruct(&self, y: &[f64], dim: usize) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &yi)| self.low_modes_at(yi, dim) + self.q_minus[i] + self.q_e[i])
            .collect()
    }
}

fn check_coverage(y: &[f64], s: f64, p: &SimParams) -> Result<()> {
    let need = (2.0 * p.k0 * s.sqrt()).max(RHO_SUPPORT);
    let (lo, hi) = (y.first().copied().unwrap_or(0.0), y.last().copied().unwrap_or(0.0));
    let ok = if p.dim > 1 { lo <= 0.0 && hi >= need } else { lo <= -need && hi >= need };
    if ok {
        Ok(())
    } else {
        Err(Error::InsufficientGrid(format!(
            "nodes span [{lo}, {hi}], need |y| <= {need}"
        )))
    }
}

/// Splits Q into its χ-localised modes and the outer part.
pub fn decompose(y: &[f64], q: &[f64], s: f64, p: &SimParams) -> Result<ModeDecomposition> {
    check_coverage(y, s, p)?;
    let n = p.dim;
    let w = rho_weights(y, n);
    let chi: Vec<f64> = y.iter().map(|v| chi_cutoff(v.abs(), s, p.k0)).collect();
    let qb: Vec<f64> = q.iter().zip(&chi).map(|(q, c)| q * c).collect();
    let q_e: Vec<f64> = q.iter().zip(&chi).map(|(q, c)| q * (1.0 - c)).collect();
    let int = |f: &dyn Fn(usize) -> f64| -> f64 { (0..y.len()).map(|i| w[i] * f(i)).sum() };

    let q0 = int(&|i| qb[i]);
    let mut q1 = vec![0.0; n];
    let mut q2 = vec![vec![0.0; n]; n];
    if n == 1 {
        q1[0] = int(&|i| qb[i] * y[i]) / 2.0;
        q2[0][0] = int(&|i| qb[i] * (y[i] * y[i] / 8.0 - 0.25));
    } else {
        let d = int(&|i| qb[i] * (y[i] * y[i] / (8.0 * n as f64) - 0.25));
        for (k, row) in q2.iter_mut().enumerate() {
            row[k] = d;
        }
    }
    let mut md = ModeDecomposition {
        s,
        q0,
        q1,
        q2,
        q_minus: Vec::new(),
        q_perp: Vec::new(),
        q_e,
        grad_q_perp: Vec::new(),
    };
    md.q_minus = y
        .iter()
        .zip(&qb)
        .map(|(&yi, &b)| b - md.low_modes_at(yi, n))
        .collect();
    md.q_perp = y
        .iter()
        .zip(&qb)
        .map(|(&yi, &b)| b - md.q0 - if n == 1 { md.q1[0] * yi } else { 0.0 })
        .collect();
    Ok(md)
}

/// `P_⊥(χ∇Q)`: the localised gradient minus its degree-0 and degree-1 parts.
pub fn grad_perp(y: &[f64], grad_q: &[f64], s: f64, p: &SimParams) -> Result<Vec<f64>> {
    check_coverage(y, s, p)?;
    let n = p.dim;
    let w = rho_weights(y, n);
    let g: Vec<f64> = y
        .iter()
        .zip(grad_q)
        .map(|(v, g)| g * chi_cutoff(v.abs(), s, p.k0))
        .collect();
    if n == 1 {
        let p0: f64 = (0..y.len()).map(|i| w[i] * g[i]).sum();
        let p1: f64 = (0..y.len()).map(|i| w[i] * g[i] * y[i]).sum::<f64>() / 2.0;
        Ok(y.iter().zip(&g).map(|(&yi, &gi)| gi - p0 - p1 * yi).collect())
    } else {
        // Radial field g(r) e_r: the degree-0 part vanishes and the degree-1
        // part is c·y with c = ∫ g r ρ / (2N).
        let c: f64 = (0..y.len()).map(|i| w[i] * g[i] * y[i]).sum::<f64>() / (2.0 * n as f64);
        Ok(y.iter().zip(&g).map(|(&r, &gi)| gi - c * r).collect())
    }
}

/// Largest discrepancy between trapezoid and Gauss–Hermite values of
/// `⟨h_n, h_m⟩_ρ`, `n, m ≤ max_n`, on the given 1D nodes.
pub fn gauss_hermite_check(y: &[f64], max_n: usize) -> f64 {
    let gh = GaussHermite::new(NonZeroUsize::new(GH_NODES).expect("nonzero"));
    let mut worst: f64 = 0.0;
    for n in 0..=max_n {
        let fn_: Vec<f64> = y.iter().map(|&v| hermite_poly(n, v)).collect();
        for m in 0..=max_n {
            let fm: Vec<f64> = y.iter().map(|&v| hermite_poly(m, v)).collect();
            let trap = inner_rho(y, &fn_, &fm, 1).value;
            // y = 2u maps ρ dy to e^{−u²} du/√π.
            let reference =
                gh.integrate(|u| hermite_poly(n, 2.0 * u) * hermite_poly(m, 2.0 * u)) / PI.sqrt();
            worst = worst.max((trap - reference).abs() / reference.abs().max(1.0));
        }
    }
    worst
}
