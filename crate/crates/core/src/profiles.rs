//! Closed-form profiles and the maps between physical, similarity and
//! window variables.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower end of the θ bracket used by [`t_of_x`].
pub const THETA_MIN: f64 = 1e-300;

/// Relative tolerance for closed-form root solves.
pub const ROOT_RTOL: f64 = 1e-12;

/// Model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub alpha: f64,
    /// Space dimension N. N > 1 is handled radially.
    pub dim: usize,
    /// Blowup time T.
    pub t_blow: f64,
    pub s0: f64,
    pub k0: f64,
    /// Trap amplitude A.
    pub a_amp: f64,
    pub eps0: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub eta0: f64,
    pub c0: f64,
    pub c0_prime: f64,
    /// Far-field constant a of `−ln(1 + a|x|²)`.
    pub a_far: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        let mut p = SimParams {
            alpha: 1.0,
            dim: 1,
            t_blow: 1.0,
            s0: 10.0,
            k0: 5.0,
            a_amp: 20.0,
            eps0: 0.5,
            alpha0: 0.25,
            delta0: 0.0,
            eta0: 0.25,
            c0: 50.0,
            c0_prime: 2.0,
            a_far: 1.0,
        };
        p.delta0 = p.default_delta0();
        p
    }
}

impl SimParams {
    /// `0.2·|Û(1)|`, the default window tolerance.
    pub fn default_delta0(&self) -> f64 {
        0.2 * hat_u(1.0, self).abs()
    }

    /// `4 + 4α`.
    pub fn kappa(&self) -> f64 {
        4.0 + 4.0 * self.alpha
    }

    /// `T − t₀ = e^{−s₀}`.
    pub fn t0(&self) -> f64 {
        self.t_blow - (-self.s0).exp()
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: &str) -> Result<()> {
            Err(Error::InvalidParam { name, reason: reason.to_string() })
        }
        let finite = [
            self.alpha, self.t_blow, self.s0, self.k0, self.a_amp, self.eps0, self.alpha0,
            self.delta0, self.eta0, self.c0, self.c0_prime, self.a_far,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        if self.alpha <= -1.0 {
            return bad("alpha", "must satisfy alpha > -1");
        }
        if self.dim == 0 {
            return bad("dim", "must be a positive integer");
        }
        if self.t_blow <= 0.0 {
            return bad("T", "must be > 0");
        }
        if self.s0 < 1.0 {
            return bad("s0", "must be >= 1");
        }
        if self.k0 < 1.0 {
            return bad("K0", "must be >= 1");
        }
        if self.a_amp < 1.0 {
            return bad("A", "must be >= 1");
        }
        for (name, v) in [
            ("eps0", self.eps0),
            ("alpha0", self.alpha0),
            ("delta0", self.delta0),
            ("C0", self.c0),
            ("C0prime", self.c0_prime),
            ("a", self.a_far),
        ] {
            if v <= 0.0 {
                return bad(name, "must be > 0");
            }
        }
        if self.eta0 < 0.0 {
            return bad("eta0", "must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalField {
    pub x_nodes: Vec<f64>,
    pub u_values: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityField {
    pub y_nodes: Vec<f64>,
    pub w_values: Vec<f64>,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowField {
    pub x0: f64,
    pub xi_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub tau: f64,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > -1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha = {alpha} must exceed -1")))
    }
}

/// `Φ_α(z) = −ln(1 + z²/(4+4α))`.
pub fn phi_alpha(z_norm: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(-(z_norm * z_norm / (4.0 + 4.0 * alpha)).ln_1p())
}

/// Radial derivative `Φ_α'(z)`.
pub fn phi_alpha_prime(z_norm: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let k = 4.0 + 4.0 * alpha;
    Ok(-2.0 * z_norm / (k + z_norm * z_norm))
}

/// `ψ_α(y,s) = e^{N/((2+2α)s)} e^{Φ_α(|y|/√s)}`.
pub fn psi_alpha(y_norm: f64, s: f64, p: &SimParams) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::Domain(format!("psi_alpha needs s > 0, got {s}")));
    }
    check_alpha(p.alpha)?;
    Ok(psi_unchecked(y_norm, s, p))
}

#[inline]
pub(crate) fn psi_unchecked(y_norm: f64, s: f64, p: &SimParams) -> f64 {
    let e = (p.dim as f64 / ((2.0 + 2.0 * p.alpha) * s)).exp();
    e / (1.0 + y_norm * y_norm / (p.kappa() * s))
}

pub fn to_similarity(phys: &PhysicalField, p: &SimParams, a: f64) -> Result<SimilarityField> {
    let left = p.t_blow - phys.t;
    if left <= 0.0 {
        return Err(Error::Domain(format!("t = {} is not before T = {}", phys.t, p.t_blow)));
    }
    let sq = left.sqrt();
    let ln = left.ln();
    Ok(SimilarityField {
        y_nodes: phys.x_nodes.iter().map(|x| (x - a) / sq).collect(),
        w_values: phys.u_values.iter().map(|u| u + ln).collect(),
        s: -ln,
    })
}

pub fn from_similarity(sim: &SimilarityField, p: &SimParams, a: f64) -> PhysicalField {
    let left = (-sim.s).exp();
    let sq = left.sqrt();
    PhysicalField {
        x_nodes: sim.y_nodes.iter().map(|y| a + y * sq).collect(),
        u_values: sim.w_values.iter().map(|w| w + sim.s).collect(),
        t: p.t_blow - left,
    }
}

/// `Q = e^W − ψ_α`, node by node.
pub fn q_from_w(sim: &SimilarityField, p: &SimParams) -> Vec<f64> {
    sim.y_nodes
        .iter()
        .zip(&sim.w_values)
        .map(|(y, w)| w.exp() - psi_unchecked(y.abs(), sim.s, p))
        .collect()
}

/// `Û(τ) = −ln((1 − τ) + (K₀²/16)/(4+4α))`.
pub fn hat_u(tau: f64, p: &SimParams) -> f64 {
    -((1.0 - tau) + p.k0 * p.k0 / 16.0 / p.kappa()).ln()
}

/// Solves `|x| = (K₀/4)√(θ|ln θ|)` for `θ ∈ (THETA_MIN, e⁻¹)`.
/// Returns `(t(x), θ(x))`.
pub fn t_of_x(x_norm: f64, p: &SimParams) -> Result<(f64, f64)> {
    if !(x_norm > 0.0) {
        return Err(Error::Domain(format!("t_of_x needs |x| > 0, got {x_norm}")));
    }
    let g = |ln_th: f64| {
        let th = ln_th.exp();
        0.25 * p.k0 * (th * -ln_th).sqrt()
    };
    let (mut lo, mut hi) = (THETA_MIN.ln(), -1.0_f64);
    if x_norm >= g(hi) {
        return Err(Error::OutOfRange(format!(
            "|x| = {x_norm} needs theta >= 1/e (limit {})",
            g(hi)
        )));
    }
    if x_norm <= g(lo) {
        return Err(Error::OutOfRange(format!("|x| = {x_norm} below theta_min")));
    }
    // Bisection on ln θ; an absolute width δ in ln θ is a relative width δ in θ.
    while hi - lo > ROOT_RTOL * 0.5 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < x_norm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = (0.5 * (lo + hi)).exp();
    Ok((p.t_blow - theta, theta))
}

/// `ln((8+8α)|ln x|/x²)`.
pub fn final_profile(x_norm: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(x_norm > 0.0 && x_norm < 1.0) {
        return Err(Error::Domain(format!("final profile needs 0 < |x| < 1, got {x_norm}")));
    }
    Ok(((8.0 + 8.0 * alpha) * x_norm.ln().abs() / (x_norm * x_norm)).ln())
}
