//! Finite-dimensional dynamics: the (W₀, W₂) centre system, the w₁
//! profile correction, and residuals of the linearised mode ODEs.

use ode_solvers::{Dopri5, OutputType, System, Vector1, Vector2};
use serde::{Deserialize, Serialize};

use crate::hermite::ModeDecomposition;
use crate::profiles::{phi_alpha, phi_alpha_prime, SimParams};
use crate::{Error, Result};

pub const MODE_RTOL: f64 = 1e-10;
pub const MODE_ATOL: f64 = 1e-16;

/// |W₀| beyond which a trajectory is declared divergent.
pub const DIVERGENCE_LEVEL: f64 = 1e3;

/// `(W₀', W₂')` with the cubic remainder dropped.
pub fn rhs_w0w2(w0: f64, w2: f64, p: &SimParams) -> (f64, f64) {
    let n = p.dim as f64;
    (
        w0 + 0.5 * w0 * w0 + n * (4.0 + 8.0 * p.alpha) * w2 * w2,
        w0 * w2 + (4.0 + 4.0 * p.alpha) * w2 * w2,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrajectory {
    pub s_values: Vec<f64>,
    pub w0_values: Vec<f64>,
    pub w2_values: Vec<f64>,
    pub diverged: bool,
    pub steps: usize,
}

struct ModeSystem {
    p: SimParams,
    diverged: bool,
}

impl System<f64, Vector2<f64>> for ModeSystem {
    fn system(&self, _s: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let (a, b) = rhs_w0w2(y[0], y[1], &self.p);
        dy[0] = a;
        dy[1] = b;
    }

    fn solout(&mut self, _s: f64, y: &Vector2<f64>, _dy: &Vector2<f64>) -> bool {
        if !(y[0].abs() < DIVERGENCE_LEVEL) {
            self.diverged = true;
        }
        self.diverged
    }
}

/// Dormand–Prince 5(4) integration of the centre system, recorded at every
/// accepted step.
pub fn integrate_modes(
    w0_init: f64,
    w2_init: f64,
    s0: f64,
    s_end: f64,
    p: &SimParams,
) -> Result<ModeTrajectory> {
    integrate_modes_with(w0_init, w2_init, s0, s_end, p, MODE_RTOL)
}

pub fn integrate_modes_with(
    w0_init: f64,
    w2_init: f64,
    s0: f64,
    s_end: f64,
    p: &SimParams,
    rtol: f64,
) -> Result<ModeTrajectory> {
    if s0 < 1.0 {
        return Err(Error::Domain(format!("integrate_modes needs s0 >= 1, got {s0}")));
    }
    if !(s_end > s0) {
        return Err(Error::Domain(format!("s_end = {s_end} must exceed s0 = {s0}")));
    }
    let sys = ModeSystem { p: *p, diverged: false };
    let mut solver =
        Dopri5::new(sys, s0, s_end, 0.0, Vector2::new(w0_init, w2_init), rtol, MODE_ATOL);
    solver.set_output(OutputType::Sparse);
    let stats = solver.integrate();
    let steps = stats.map(|s| s.accepted_steps as usize).unwrap_or(0);
    let (xs, ys) = solver.results().get();
    let mut traj = ModeTrajectory {
        s_values: Vec::with_capacity(xs.len()),
        w0_values: Vec::with_capacity(xs.len()),
        w2_values: Vec::with_capacity(xs.len()),
        diverged: false,
        steps,
    };
    for (s, y) in xs.iter().zip(ys) {
        if traj.s_values.last().is_some_and(|last| *s <= *last) {
            continue;
        }
        if !(y[0].abs() < DIVERGENCE_LEVEL) {
            traj.diverged = true;
            break;
        }
        traj.s_values.push(*s);
        traj.w0_values.push(y[0]);
        traj.w2_values.push(y[1]);
    }
    if traj.s_values.last().is_none_or(|s| *s < s_end - 1e-9 * s_end) {
        traj.diverged = true;
    }
    Ok(traj)
}

/// The bounded solution through `W₂(s0) = w2_init`.
///
/// W₀ is unstable forward in s, so an arbitrary `W₀(s0)` escapes. Backward
/// integration from `s_end` contracts W₀ onto the centre manifold; the
/// unknown `W₂(s_end)` is found by bisection so that the backward run lands
/// on `w2_init`. The returned trajectory is ordered by increasing s.
pub fn centre_manifold_trajectory(
    w2_init: f64,
    s0: f64,
    s_end: f64,
    p: &SimParams,
) -> Result<ModeTrajectory> {
    if !(w2_init < 0.0) {
        return Err(Error::Domain("centre trajectory needs W2(s0) < 0".into()));
    }
    let backward = |w2_end: f64| -> Result<ModeTrajectory> {
        let sys = ModeSystem { p: *p, diverged: false };
        let mut solver =
            Dopri5::new(sys, s_end, s0, 0.0, Vector2::new(0.0, w2_end), MODE_RTOL, MODE_ATOL);
        solver.set_output(OutputType::Sparse);
        let stats = solver
            .integrate()
            .map_err(|e| Error::Domain(format!("backward integration failed: {e}")))?;
        let (xs, ys) = solver.results().get();
        let mut tr = ModeTrajectory {
            s_values: Vec::new(),
            w0_values: Vec::new(),
            w2_values: Vec::new(),
            diverged: false,
            steps: stats.accepted_steps as usize,
        };
        for (x, y) in xs.iter().zip(ys).rev() {
            if tr.s_values.last().is_some_and(|last| *x <= *last) {
                continue;
            }
            tr.s_values.push(*x);
            tr.w0_values.push(y[0]);
            tr.w2_values.push(y[1]);
        }
        Ok(tr)
    };
    // W₂(s0) is increasing in W₂(s_end) on the negative branch.
    let (mut lo, mut hi) = (w2_init, 0.0);
    let mut best = backward(lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let tr = backward(mid)?;
        let w2_start = tr.w2_values[0];
        if w2_start < w2_init {
            lo = mid;
        } else {
            hi = mid;
        }
        best = tr;
        if (hi - lo).abs() <= 1e-15 * lo.abs() {
            break;
        }
    }
    Ok(best)
}

/// `c₀ = 1/(4+4α)`.
fn c0(p: &SimParams) -> f64 {
    1.0 / p.kappa()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Profile {
    pub z: Vec<f64>,
    pub w1: Vec<f64>,
    pub dw1: Vec<f64>,
}

/// Writing `w₁ = w₁(0) + z²v` removes the regular singular point at z = 0:
/// `v' = −2c₀zv/D − 2c₀²z/D²`, `D = 1 + c₀z²`.
struct W1System {
    c0: f64,
}

impl W1System {
    fn dv(&self, z: f64, v: f64) -> f64 {
        let c = self.c0;
        let d = 1.0 + c * z * z;
        -2.0 * c * z * v / d - 2.0 * c * c * z / (d * d)
    }
}

impl System<f64, Vector1<f64>> for W1System {
    fn system(&self, z: f64, y: &Vector1<f64>, dy: &mut Vector1<f64>) {
        dy[0] = self.dv(z, y[0]);
    }
}

/// Integrates the w₁ equation outward from z = 0 with `w₁(0) = N/(2+2α)`.
/// The free z² coefficient of the regular solution is `a2`; steps never
/// exceed `dz`.
pub fn solve_w1_radial(z_max: f64, dz: f64, a2: f64, p: &SimParams) -> Result<W1Profile> {
    if !(z_max > 0.0) || !(dz > 0.0) {
        return Err(Error::Domain("solve_w1_radial needs z_max > 0 and dz > 0".into()));
    }
    let w10 = p.dim as f64 / (2.0 + 2.0 * p.alpha);
    let sys = W1System { c0: c0(p) };
    let c = sys.c0;
    let mut solver = Dopri5::from_param(
        sys,
        0.0,
        z_max,
        0.0,
        Vector1::new(a2),
        1e-13,
        1e-15,
        0.9,
        0.04,
        0.2,
        10.0,
        dz,
        0.0,
        1_000_000,
        1000,
        OutputType::Sparse,
    );
    solver
        .integrate()
        .map_err(|e| Error::Domain(format!("w1 integration failed: {e}")))?;
    let (zs, vs) = solver.results().get();
    let helper = W1System { c0: c };
    let mut out = W1Profile { z: Vec::new(), w1: Vec::new(), dw1: Vec::new() };
    for (z, v) in zs.iter().zip(vs) {
        if out.z.last().is_some_and(|last| *z <= *last) {
            continue;
        }
        let v = v[0];
        out.z.push(*z);
        out.w1.push(w10 + z * z * v);
        out.dw1.push(2.0 * z * v + z * z * helper.dv(*z, v));
    }
    Ok(out)
}

/// `F(z) = z/2·w₁' − e^{w₀}w₁ − z/2·w₀' − Δw₀ − α|w₀'|²` with `w₀ = Φ_α`.
pub fn w1_residual(z: f64, w1: f64, dw1: f64, p: &SimParams) -> Result<f64> {
    let a = p.alpha;
    let w0 = phi_alpha(z, a)?;
    let d0 = phi_alpha_prime(z, a)?;
    let k = p.kappa();
    let n = p.dim as f64;
    // Φ'' = −2(k − z²)/(k + z²)²; the radial term (N−1)Φ'/z is regular at 0.
    let d2 = -2.0 * (k - z * z) / ((k + z * z) * (k + z * z));
    let radial = if z > 0.0 { (n - 1.0) * d0 / z } else { (n - 1.0) * d2 };
    let lap = d2 + radial;
    Ok(0.5 * z * dw1 - w0.exp() * w1 - 0.5 * z * d0 - lap - a * d0 * d0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOdeReport {
    pub s: Vec<f64>,
    /// `s²|Q₀' − Q₀|`.
    pub r0: Vec<f64>,
    /// `s²|Q₁' − Q₁/2|` (max over components).
    pub r1: Vec<f64>,
    /// `s³|Q₂' + 2Q₂/s|/A` (max over entries).
    pub r2: Vec<f64>,
    pub sup0: f64,
    pub sup1: f64,
    pub sup2: f64,
}

/// Residuals of the linearised mode ODEs along a snapshot series, with
/// centred differences in s.
pub fn check_mode_odes(modes: &[ModeDecomposition], p: &SimParams) -> Result<ModeOdeReport> {
    if modes.len() < 3 {
        return Err(Error::TooFewSnapshots { need: 3, got: modes.len() });
    }
    let mut rep = ModeOdeReport {
        s: Vec::new(),
        r0: Vec::new(),
        r1: Vec::new(),
        r2: Vec::new(),
        sup0: 0.0,
        sup1: 0.0,
        sup2: 0.0,
    };
    for w in modes.windows(3) {
        let (a, m, b) = (&w[0], &w[1], &w[2]);
        let (h1, h2) = (m.s - a.s, b.s - m.s);
        // Three-point derivative on a possibly uneven stencil.
        let d = |fa: f64, fm: f64, fb: f64| {
            (-h2 / (h1 * (h1 + h2))) * fa
                + ((h2 - h1) / (h1 * h2)) * fm
                + (h1 / (h2 * (h1 + h2))) * fb
        };
        let s = m.s;
        let r0 = s * s * (d(a.q0, m.q0, b.q0) - m.q0).abs();
        let r1 = (0..m.q1.len())
            .map(|i| s * s * (d(a.q1[i], m.q1[i], b.q1[i]) - 0.5 * m.q1[i]).abs())
            .fold(0.0, f64::max);
        let mut r2: f64 = 0.0;
        for i in 0..m.q2.len() {
            for j in 0..m.q2.len() {
                let dq = d(a.q2[i][j], m.q2[i][j], b.q2[i][j]);
                r2 = r2.max(s * s * s * (dq + 2.0 * m.q2[i][j] / s).abs() / p.a_amp);
            }
        }
        rep.s.push(s);
        rep.r0.push(r0);
        rep.r1.push(r1);
        rep.r2.push(r2);
    }
    rep.sup0 = rep.r0.iter().cloned().fold(0.0, f64::max);
    rep.sup1 = rep.r1.iter().cloned().fold(0.0, f64::max);
    rep.sup2 = rep.r2.iter().cloned().fold(0.0, f64::max);
    Ok(rep)
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, dim: usize) -> SimParams {
        SimParams { alpha, dim, ..SimParams::default() }
    }

    #[test]
    fn rhs_examples() {
        let p = params(0.0, 1);
        assert_eq!(rhs_w0w2(0.0, 0.0, &p), (0.0, 0.0));
        let (a, b) = rhs_w0w2(0.0, -0.025, &p);
        assert!((a - 0.0025).abs() < 1e-16 && (b - 0.0025).abs() < 1e-16);
        let q = params(1.5, 2);
        let w2 = 0.3;
        let (a, b) = rhs_w0w2(0.0, w2, &q);
        assert!((a - 2.0 * 16.0 * w2 * w2).abs() < 1e-14);
        assert!((b - 10.0 * w2 * w2).abs() < 1e-14);
    }

    #[test]
    fn zero_w0_start_leaves_the_centre_manifold() {
        for alpha in [0.0, 1.0] {
            let p = params(alpha, 1);
            let tr = integrate_modes(0.0, -1.0 / (p.kappa() * 10.0), 10.0, 1e4, &p).unwrap();
            assert!(tr.diverged);
            assert!(*tr.s_values.last().unwrap() < 40.0);
        }
    }

    #[test]
    fn centre_trajectory_has_the_formal_asymptotics() {
        for alpha in [0.0, 1.0] {
            let p = params(alpha, 1);
            let k = p.kappa();
            let tr = centre_manifold_trajectory(-1.0 / (k * 10.0), 10.0, 1e4, &p).unwrap();
            assert!((tr.w2_values[0] * k * 10.0 + 1.0).abs() < 1e-9);
            let (s, w2) = (*tr.s_values.last().unwrap(), *tr.w2_values.last().unwrap());
            assert!((s * w2 * k + 1.0).abs() < 0.02, "{}", s * w2 * k + 1.0);
            let scaled: Vec<f64> = tr
                .s_values
                .iter()
                .zip(&tr.w0_values)
                .filter(|(s, _)| **s >= 100.0)
                .map(|(s, w)| s * s * w.abs())
                .collect();
            let first = scaled[0];
            assert!(scaled.iter().all(|v| *v <= first * 1.05));
        }
    }

    #[test]
    fn unstable_direction_diverges() {
        let p = params(1.0, 1);
        let tr = integrate_modes(1.0, 0.0, 10.0, 100.0, &p).unwrap();
        assert!(tr.diverged);
    }

    #[test]
    fn integrator_order_on_logistic_case() {
        // α = −1/2 decouples W₀: W₀' = W₀(1 + W₀/2), solved in closed form.
        let p = params(-0.5, 1);
        let exact = |s: f64| {
            let k = -(2.0 / 3.0) * (s - 10.0).exp();
            k / (1.0 - k / 2.0)
        };
        let mut pts = Vec::new();
        for rtol in [1e-5, 1e-7, 1e-9] {
            let tr = integrate_modes_with(-0.5, 0.0, 10.0, 20.0, &p, rtol).unwrap();
            let err = tr
                .s_values
                .iter()
                .zip(&tr.w0_values)
                .map(|(s, w)| (w - exact(*s)).abs())
                .fold(0.0, f64::max);
            pts.push((tr.steps as f64, err));
        }
        let order = log_log_slope(
            &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        );
        assert!(-order >= 4.0, "observed order {}", -order);
    }

    /// Closed form of the regular solution with zero z² coefficient.
    fn w1_exact(z: f64, p: &SimParams) -> f64 {
        let c = 1.0 / p.kappa();
        let d = 1.0 + c * z * z;
        p.dim as f64 / (2.0 + 2.0 * p.alpha) - c * z * z * d.ln() / d
    }

    #[test]
    fn w1_matches_closed_form_and_equation() {
        for (alpha, dim) in [(0.0, 1), (1.0, 1), (0.5, 3), (-0.5, 2)] {
            let p = params(alpha, dim);
            let prof = solve_w1_radial(50.0, 0.01, 0.0, &p).unwrap();
            assert_eq!(prof.w1[0], dim as f64 / (2.0 + 2.0 * alpha));
            for i in 0..prof.z.len() {
                let z = prof.z[i];
                assert!((prof.w1[i] - w1_exact(z, &p)).abs() < 1e-9, "z {z}");
                let r = w1_residual(z, prof.w1[i], prof.dw1[i], &p).unwrap();
                assert!(r.abs() < 1e-8, "alpha {alpha} z {z} r {r}");
            }
        }
        let p = params(0.0, 1);
        assert_eq!(solve_w1_radial(1.0, 0.1, 0.0, &p).unwrap().w1[0], 0.5);
    }

    #[test]
    fn w1_residual_detects_wrong_start() {
        let p = params(0.0, 1);
        assert!(w1_residual(0.0, 0.4, 0.0, &p).unwrap().abs() > 0.05);
    }

    fn synthetic(s: f64, q0: f64, q2: f64) -> ModeDecomposition {
        ModeDecomposition {
            s,
            q0,
            q1: vec![0.0],
            q2: vec![vec![q2]],
            q_minus: vec![],
            q_perp: vec![],
            q_e: vec![],
            grad_q_perp: vec![],
        }
    }

    #[test]
    fn mode_ode_residuals_vanish_on_exact_solutions() {
        let p = SimParams::default();
        let modes: Vec<_> = (0..50)
            .map(|i| {
                let s = 10.0 + 0.01 * i as f64;
                synthetic(s, 1e-3 * (s - 10.0).exp(), 0.5 / (s * s))
            })
            .collect();
        let rep = check_mode_odes(&modes, &p).unwrap();
        assert!(rep.sup0 < 1e-3, "{}", rep.sup0);
        assert!(rep.sup2 < 1e-4, "{}", rep.sup2);
        assert!(check_mode_odes(&modes[..2], &p).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
