//! PDE engine in physical variables on a log-refined grid.
//!
//! Time is tracked as the remaining time `θ = T − t` so that runs reaching
//! `θ ~ 1e−10` keep full relative precision.

use serde::{Deserialize, Serialize};

use crate::initial_data::{build_initial_u, InitialDataSpec};
use crate::linalg::solve_tridiagonal;
use crate::profiles::{psi_alpha, t_of_x, PhysicalField, SimParams, WindowField};
use crate::{Error, Result};

/// Nodes of a physical grid: the full symmetric line for `dim == 1`, radii
/// `[0, x_max]` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysGrid {
    pub nodes: Vec<f64>,
    pub dim: usize,
}

impl PhysGrid {
    /// Spacing `clamp(x(r−1), h_min, h_far)` with `r = 10^{1/per_decade}`,
    /// marched out from 0 to `x_max`.
    pub fn log_refined(
        h_min: f64,
        per_decade: f64,
        h_far: f64,
        x_max: f64,
        dim: usize,
    ) -> Result<Self> {
        if !(h_min > 0.0 && h_far >= h_min && x_max > h_far && per_decade > 0.0) || dim == 0 {
            return Err(Error::Domain("invalid log grid parameters".into()));
        }
        let q = 10f64.powf(1.0 / per_decade) - 1.0;
        let mut half = vec![0.0];
        let mut x = 0.0f64;
        while x < x_max {
            let h = (x * q).clamp(h_min, h_far);
            x = if x + h > x_max - 0.5 * h { x_max } else { x + h };
            half.push(x);
        }
        Ok(Self::from_half(half, dim))
    }

    /// Uniform spacing `h` on `[−x_max, x_max]` (or `[0, x_max]`).
    pub fn uniform(x_max: f64, h: f64, dim: usize) -> Result<Self> {
        if !(x_max > 0.0 && h > 0.0) || dim == 0 {
            return Err(Error::Domain("invalid uniform grid parameters".into()));
        }
        let n = (x_max / h).round() as usize;
        if n < 4 {
            return Err(Error::InsufficientGrid(format!("{n} cells")));
        }
        Ok(Self::from_half((0..=n).map(|k| k as f64 * h).collect(), dim))
    }

    /// Default grid: `h_min = 1e−8`, 200 nodes per decade, `h_far = 0.01`,
    /// `x_max = 4`.
    pub fn default_for(dim: usize) -> Self {
        Self::log_refined(1e-8, 200.0, 0.01, 4.0, dim).expect("valid defaults")
    }

    fn from_half(half: Vec<f64>, dim: usize) -> Self {
        if dim > 1 {
            return PhysGrid { nodes: half, dim };
        }
        let mut nodes: Vec<f64> = half.iter().skip(1).rev().map(|x| -x).collect();
        nodes.extend(half);
        PhysGrid { nodes, dim }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node at `x = 0`.
    pub fn origin(&self) -> usize {
        if self.dim > 1 {
            0
        } else {
            self.len() / 2
        }
    }

    /// Three-point coefficients `(c₋, c₀, c₊)` for the first and second
    /// derivative at interior node `i`.
    fn coeffs(&self, i: usize) -> ([f64; 3], [f64; 3]) {
        let x = &self.nodes;
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        let d1 = [-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))];
        let d2 = [2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))];
        (d1, d2)
    }

    /// `∂_x f`, second order inside, one-sided at the ends, zero at the
    /// radial origin.
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let x = &self.nodes;
        (0..n)
            .map(|i| {
                if i == 0 {
                    if self.dim > 1 {
                        0.0
                    } else {
                        (f[1] - f[0]) / (x[1] - x[0])
                    }
                } else if i + 1 == n {
                    (f[i] - f[i - 1]) / (x[i] - x[i - 1])
                } else {
                    let (d1, _) = self.coeffs(i);
                    d1[0] * f[i - 1] + d1[1] * f[i] + d1[2] * f[i + 1]
                }
            })
            .collect()
    }

    /// Tridiagonal rows `(a, b, c)` of the Laplacian; far boundary rows are zero.
    fn laplacian_rows(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let radial = self.dim > 1;
        for i in 0..n {
            if i + 1 == n || (i == 0 && !radial) {
                continue;
            }
            if i == 0 {
                let h = self.nodes[1];
                let k = 2.0 * self.dim as f64 / (h * h);
                b[0] = -k;
                c[0] = k;
                continue;
            }
            let (d1, d2) = self.coeffs(i);
            a[i] = d2[0];
            b[i] = d2[1];
            c[i] = d2[2];
            if radial {
                let k = (self.dim - 1) as f64 / self.nodes[i];
                a[i] += k * d1[0];
                b[i] += k * d1[1];
                c[i] += k * d1[2];
            }
        }
        (a, b, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysScheme {
    /// Crank–Nicolson diffusion with a Heun predictor–corrector for the
    /// explicit terms.
    CrankNicolson,
    /// L-stable second-order IMEX Runge–Kutta (Ascher–Ruuth–Spiteri 2-2-2).
    Ars222,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarBoundary {
    /// Slope of `−ln(1 + a x²)` imposed at the end nodes through a mirrored
    /// ghost node.
    Robin,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysConfig {
    pub dt_base: f64,
    /// Step bound `cfl / max e^U`.
    pub cfl: f64,
    pub scheme: PhysScheme,
    pub boundary: FarBoundary,
    /// Stop when `max U > −ln(θ_end) + blowup_margin`.
    pub blowup_margin: f64,
    /// Keep every step as a frame.
    pub store_frames: bool,
    pub reaction: bool,
    pub max_steps: usize,
}

impl Default for PhysConfig {
    fn default() -> Self {
        PhysConfig {
            dt_base: 1e-3,
            cfl: 0.02,
            scheme: PhysScheme::Ars222,
            boundary: FarBoundary::Robin,
            blowup_margin: 10.0,
            store_frames: true,
            reaction: true,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Remaining time `T − t`.
    pub theta: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Reached,
    BlowupApproach,
    Callback,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysTrajectory {
    pub grid: PhysGrid,
    pub t_blow: f64,
    /// Frames ordered by decreasing θ; always holds the first and last state.
    pub frames: Vec<Frame>,
    pub stop: StopReason,
    pub steps: usize,
}

impl PhysTrajectory {
    pub fn last(&self) -> &Frame {
        self.frames.last().expect("at least one frame")
    }

    pub fn field(&self, k: usize) -> PhysicalField {
        PhysicalField {
            x_nodes: self.grid.nodes.clone(),
            u_values: self.frames[k].u.clone(),
            t: self.t_blow - self.frames[k].theta,
        }
    }

    /// `U(0, t) + ln(T − t)` per frame, as `(θ, value)`.
    pub fn rate_band(&self) -> Vec<(f64, f64)> {
        let o = self.grid.origin();
        self.frames.iter().map(|f| (f.theta, f.u[o] + f.theta.ln())).collect()
    }
}

struct Stepper<'a> {
    grid: &'a PhysGrid,
    cfg: PhysConfig,
    alpha: f64,
    lap: (Vec<f64>, Vec<f64>, Vec<f64>),
    /// Inhomogeneous part of the Laplacian from the far condition.
    src: Vec<f64>,
    /// Prescribed slope at the first and last node.
    slopes: (f64, f64),
}

impl<'a> Stepper<'a> {
    /// Far condition through a mirrored ghost node at each end, so the
    /// slope is imposed at the boundary node itself.
    fn new(grid: &'a PhysGrid, cfg: PhysConfig, p: &SimParams) -> Self {
        let x = &grid.nodes;
        let n = x.len();
        let slope = |x: f64| match cfg.boundary {
            FarBoundary::Neumann => 0.0,
            FarBoundary::Robin => -2.0 * p.a_far * x / (1.0 + p.a_far * x * x),
        };
        let (mut a, mut b, c) = grid.laplacian_rows();
        let mut c = c;
        let mut src = vec![0.0; n];
        let last = n - 1;
        let h = x[last] - x[last - 1];
        let g_hi = slope(x[last]);
        a[last] = 2.0 / (h * h);
        b[last] = -2.0 / (h * h);
        src[last] = 2.0 * g_hi / h + (grid.dim as f64 - 1.0) * g_hi / x[last];
        let mut g_lo = 0.0;
        if grid.dim == 1 {
            let h = x[1] - x[0];
            g_lo = slope(x[0]);
            b[0] = -2.0 / (h * h);
            c[0] = 2.0 / (h * h);
            src[0] = -2.0 * g_lo / h;
        }
        Stepper { grid, cfg, alpha: p.alpha, lap: (a, b, c), src, slopes: (g_lo, g_hi) }
    }

    fn apply_lap(&self, u: &[f64]) -> Vec<f64> {
        let (a, b, c) = &self.lap;
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut v = b[i] * u[i] + self.src[i];
                if i > 0 {
                    v += a[i] * u[i - 1];
                }
                if i + 1 < n {
                    v += c[i] * u[i + 1];
                }
                v
            })
            .collect()
    }

    fn forcing(&self, u: &[f64]) -> Vec<f64> {
        if !self.cfg.reaction {
            return vec![0.0; u.len()];
        }
        let mut g = self.grid.gradient(u);
        let n = g.len();
        g[n - 1] = self.slopes.1;
        if self.grid.dim == 1 {
            g[0] = self.slopes.0;
        }
        u.iter().zip(&g).map(|(u, g)| self.alpha * g * g + u.exp()).collect()
    }

    /// Solves `(I − k·Δ)v = rhs`.
    fn solve(&self, k: f64, rhs: &mut [f64]) -> Vec<f64> {
        let (la, lb, lc) = &self.lap;
        let a: Vec<f64> = la.iter().map(|v| -k * v).collect();
        let b: Vec<f64> = lb.iter().map(|v| 1.0 - k * v).collect();
        let c: Vec<f64> = lc.iter().map(|v| -k * v).collect();
        for (r, s) in rhs.iter_mut().zip(&self.src) {
            *r += k * s;
        }
        solve_tridiagonal(&a, &b, &c, rhs)
    }

    fn advance(&self, u: &[f64], dt: f64) -> Vec<f64> {
        let n = u.len();
        let f0 = self.forcing(u);
        match self.cfg.scheme {
            PhysScheme::CrankNicolson => {
                let lu = self.apply_lap(u);
                let base: Vec<f64> = (0..n).map(|i| u[i] + 0.5 * dt * lu[i]).collect();
                let mut rhs: Vec<f64> = (0..n).map(|i| base[i] + dt * f0[i]).collect();
                let pred = self.solve(0.5 * dt, &mut rhs);
                let f1 = self.forcing(&pred);
                let mut rhs: Vec<f64> =
                    (0..n).map(|i| base[i] + 0.5 * dt * (f0[i] + f1[i])).collect();
                self.solve(0.5 * dt, &mut rhs)
            }
            PhysScheme::Ars222 => {
                let g = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
                let d = 1.0 - 1.0 / (2.0 * g);
                let mut rhs: Vec<f64> = (0..n).map(|i| u[i] + g * dt * f0[i]).collect();
                let u2 = self.solve(g * dt, &mut rhs);
                let f2 = self.forcing(&u2);
                let l2 = self.apply_lap(&u2);
                let mut rhs: Vec<f64> = (0..n)
                    .map(|i| u[i] + dt * (d * f0[i] + (1.0 - d) * f2[i] + (1.0 - g) * l2[i]))
                    .collect();
                self.solve(g * dt, &mut rhs)
            }
        }
    }
}

/// Evolves until the remaining time reaches `theta_end`.
/// `on_step(θ, u)` returns `false` to stop early.
pub fn evolve_physical_until<F>(
    init: &PhysicalField,
    grid: &PhysGrid,
    theta_end: f64,
    p: &SimParams,
    cfg: &PhysConfig,
    mut on_step: F,
) -> Result<PhysTrajectory>
where
    F: FnMut(f64, &[f64]) -> bool,
{
    p.validate()?;
    if init.x_nodes.len() != grid.len()
        || init.x_nodes.iter().zip(&grid.nodes).any(|(a, b)| a != b)
    {
        return Err(Error::InsufficientGrid("initial field is not on the grid".into()));
    }
    let theta0 = p.t_blow - init.t;
    if !(theta_end > 0.0 && theta_end < theta0) {
        return Err(Error::Domain(format!(
            "need 0 < T − t_end = {theta_end} < T − t = {theta0}"
        )));
    }
    if init.u_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure { s: -theta0.ln() });
    }
    let st = Stepper::new(grid, *cfg, p);
    let guard = -theta_end.ln() + cfg.blowup_margin;
    let mut theta = theta0;
    let mut u = init.u_values.clone();
    let mut frames = vec![Frame { theta, u: u.clone() }];
    let mut steps = 0;
    let mut stop = StopReason::Reached;
    while theta > theta_end {
        if steps >= cfg.max_steps {
            stop = StopReason::MaxSteps;
            break;
        }
        let max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_u > guard {
            stop = StopReason::BlowupApproach;
            break;
        }
        let mut dt = cfg.dt_base.min(cfg.cfl / max_u.exp());
        if theta - dt <= theta_end * (1.0 + 1e-12) {
            dt = theta - theta_end;
        }
        u = st.advance(&u, dt);
        steps += 1;
        theta = if dt == theta - theta_end { theta_end } else { theta - dt };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { s: -theta.ln() });
        }
        let go_on = on_step(theta, &u);
        if cfg.store_frames || theta <= theta_end || !go_on {
            frames.push(Frame { theta, u: u.clone() });
        }
        if !go_on {
            stop = StopReason::Callback;
            break;
        }
    }
    if frames.last().map(|f| f.theta) != Some(theta) {
        frames.push(Frame { theta, u });
    }
    Ok(PhysTrajectory { grid: grid.clone(), t_blow: p.t_blow, frames, stop, steps })
}

pub fn evolve_physical(
    init: &PhysicalField,
    grid: &PhysGrid,
    t_end: f64,
    p: &SimParams,
    cfg: &PhysConfig,
) -> Result<PhysTrajectory> {
    if !(t_end < p.t_blow) {
        return Err(Error::Domain(format!("t_end = {t_end} must precede T = {}", p.t_blow)));
    }
    evolve_physical_until(init, grid, p.t_blow - t_end, p, cfg, |_, _| true)
}

/// Value, first and second derivative of the 4-point Lagrange interpolant
/// of `f` at `x`.
pub fn interp_cubic(nodes: &[f64], f: &[f64], x: f64) -> Option<(f64, f64, f64)> {
    let n = nodes.len();
    if n < 4 || x < nodes[0] || x > nodes[n - 1] {
        return None;
    }
    let j = nodes.partition_point(|v| *v <= x).clamp(2, n - 2);
    let idx = [j - 2, j - 1, j, j + 1];
    let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (a, &ia) in idx.iter().enumerate() {
        let xa = nodes[ia];
        let others: Vec<f64> =
            idx.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, &ib)| nodes[ib]).collect();
        let denom: f64 = others.iter().map(|xb| xa - xb).product();
        let t: Vec<f64> = others.iter().map(|xb| x - xb).collect();
        v += f[ia] * t[0] * t[1] * t[2] / denom;
        d1 += f[ia] * (t[1] * t[2] + t[0] * t[2] + t[0] * t[1]) / denom;
        d2 += f[ia] * 2.0 * (t[0] + t[1] + t[2]) / denom;
    }
    Some((v, d1, d2))
}

/// `(U, U_x, U_xx)` at `(x, θ)`: cubic in space, linear in time.
fn sample(traj: &PhysTrajectory, x: f64, theta: f64) -> Result<(f64, f64, f64)> {
    let fr = &traj.frames;
    let (first, last) = (fr[0].theta, fr[fr.len() - 1].theta);
    let theta = if (theta - first).abs() <= 1e-12 * first {
        first
    } else if (theta - last).abs() <= 1e-12 * last {
        last
    } else {
        theta
    };
    if !(theta <= first && theta >= last) {
        return Err(Error::Coverage(format!("θ = {theta} outside [{last}, {first}]")));
    }
    // Frames are ordered by decreasing θ.
    let k = fr.partition_point(|f| f.theta > theta);
    let nodes = &traj.grid.nodes;
    let at = |k: usize| {
        interp_cubic(nodes, &fr[k].u, x)
            .ok_or_else(|| Error::Coverage(format!("x = {x} outside the grid")))
    };
    if k == 0 || fr[k].theta == theta {
        return at(k.min(fr.len() - 1));
    }
    let (a, b) = (at(k - 1)?, at(k)?);
    let w = (fr[k - 1].theta - theta) / (fr[k - 1].theta - fr[k].theta);
    Ok((
        a.0 + w * (b.0 - a.0),
        a.1 + w * (b.1 - a.1),
        a.2 + w * (b.2 - a.2),
    ))
}

/// `τ` at which the trajectory starts, for anchor `x0`.
pub fn tau_start(traj: &PhysTrajectory, x0: f64, p: &SimParams) -> Result<f64> {
    let (_, th) = t_of_x(x0.abs(), p)?;
    Ok((1.0 - traj.frames[0].theta / th).max(0.0))
}

/// Last `τ` covered by the trajectory, for anchor `x0`.
pub fn tau_end(traj: &PhysTrajectory, x0: f64, p: &SimParams) -> Result<f64> {
    let (_, th) = t_of_x(x0.abs(), p)?;
    Ok(1.0 - traj.last().theta / th)
}

/// `𝒰(x0, ξ, τ) = ln θ(x0) + U(x0 + ξ√θ(x0), t(x0) + τθ(x0))` with its ξ
/// derivatives, for each requested τ.
pub fn window_extract(
    traj: &PhysTrajectory,
    x0: f64,
    p: &SimParams,
    taus: &[f64],
    xi_nodes: &[f64],
) -> Result<Vec<WindowField>> {
    let (_, th) = t_of_x(x0.abs(), p)?;
    let sq = th.sqrt();
    let ln_th = th.ln();
    taus.iter()
        .map(|&tau| {
            if !(tau < 1.0) {
                return Err(Error::Coverage(format!("τ = {tau} must be below 1")));
            }
            let theta = th * (1.0 - tau);
            let mut w = WindowField {
                x0,
                xi_nodes: xi_nodes.to_vec(),
                values: Vec::with_capacity(xi_nodes.len()),
                grad: Vec::with_capacity(xi_nodes.len()),
                hess: Vec::with_capacity(xi_nodes.len()),
                tau,
            };
            for &xi in xi_nodes {
                let (u, ux, uxx) = sample(traj, x0 + xi * sq, theta)?;
                w.values.push(ln_th + u);
                w.grad.push(sq * ux);
                w.hess.push(th * uxx);
            }
            Ok(w)
        })
        .collect()
}

/// The τ values of the stored frames inside `[tau_start, tau_end]`.
pub fn frame_taus(traj: &PhysTrajectory, x0: f64, p: &SimParams) -> Result<Vec<f64>> {
    let (_, th) = t_of_x(x0.abs(), p)?;
    Ok(traj
        .frames
        .iter()
        .filter(|f| f.theta <= th)
        .map(|f| 1.0 - f.theta / th)
        .collect())
}

/// `sup (1−τ)e^𝒰 + √(1−τ)|∇_ξ𝒰|` over the window nodes with `|ξ| ≤ 1`.
pub fn no_blowup_monitor(series: &[WindowField]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for w in series {
        let a = 1.0 - w.tau;
        for i in 0..w.xi_nodes.len() {
            if w.xi_nodes[i].abs() <= 1.0 {
                worst = worst.max(a * w.values[i].exp() + a.sqrt() * w.grad[i].abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalProfile {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub theta_last: f64,
    /// `sup_{|x| ≥ r} |U(t_last) − U(t_prev)|` with `T − t_prev = 10(T − t_last)`.
    pub cauchy_diff: f64,
    /// `sup_{|x| ≥ r} |U(t_last) − U(t_first)|`.
    pub drift_from_start: f64,
}

/// Last frame restricted to `|x| ≥ r_min`.
pub fn final_profile_extract(traj: &PhysTrajectory, r_min: f64) -> Result<FinalProfile> {
    let last = traj.last();
    if last.theta > 1e-5 * traj.t_blow {
        return Err(Error::Coverage(format!(
            "T − t_last = {} exceeds 1e-5·T",
            last.theta
        )));
    }
    let prev_theta = (10.0 * last.theta).min(traj.frames[0].theta);
    let k = traj.frames.partition_point(|f| f.theta > prev_theta).min(traj.frames.len() - 1);
    let prev = &traj.frames[k];
    let first = &traj.frames[0];
    let du = traj.grid.gradient(&last.u);
    let mut out = FinalProfile {
        x: Vec::new(),
        u: Vec::new(),
        du: Vec::new(),
        theta_last: last.theta,
        cauchy_diff: 0.0,
        drift_from_start: 0.0,
    };
    for (i, &x) in traj.grid.nodes.iter().enumerate() {
        if x.abs() < r_min || x == 0.0 {
            continue;
        }
        out.x.push(x);
        out.u.push(last.u[i]);
        out.du.push(du[i]);
        out.cauchy_diff = out.cauchy_diff.max((last.u[i] - prev.u[i]).abs());
        out.drift_from_start = out.drift_from_start.max((last.u[i] - first.u[i]).abs());
    }
    Ok(out)
}

/// `e^{U(0,t) + ln(T−t)} − ψ_α(0, s)` with `s = −ln(T−t)`.
pub fn centre_deviation(u0: f64, theta: f64, p: &SimParams) -> Result<f64> {
    Ok((u0 + theta.ln()).exp() - psi_alpha(0.0, -theta.ln(), p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysShot {
    pub d0: f64,
    pub stop: StopReason,
    /// `s = −ln(T−t)` of the last step.
    pub s_reached: f64,
    /// Centre deviation at the last step.
    pub deviation: f64,
}

/// Runs the initial datum for `(d₀, d₁)` until `T − t = theta_end` or until
/// the centre deviation leaves `[−q_exit, q_exit]`.
pub fn shoot_physical(
    d0: f64,
    d1: &[f64],
    grid: &PhysGrid,
    theta_end: f64,
    q_exit: f64,
    p: &SimParams,
    cfg: &PhysConfig,
) -> Result<PhysShot> {
    let mut spec = InitialDataSpec::new(d0, 0.0, *p);
    spec.d1 = d1.to_vec();
    let init = build_initial_u(&spec, &grid.nodes)?;
    let o = grid.origin();
    let mut last = (p.s0, 0.0);
    let mut err = None;
    let cfg = PhysConfig { store_frames: false, ..*cfg };
    let tr = evolve_physical_until(&init, grid, theta_end, p, &cfg, |th, u| {
        match centre_deviation(u[o], th, p) {
            Ok(q) => {
                last = (-th.ln(), q);
                q.abs() < q_exit
            }
            Err(e) => {
                err = Some(e);
                false
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(PhysShot { d0, stop: tr.stop, s_reached: last.0, deviation: last.1 })
}

/// Sign bisection of `d₀` in `bracket` on the centre deviation at the end of
/// each run. Returns the final midpoint and every shot taken.
#[allow(clippy::too_many_arguments)]
pub fn refine_physical_d0(
    d1: &[f64],
    bracket: [f64; 2],
    grid: &PhysGrid,
    theta_end: f64,
    q_exit: f64,
    iterations: usize,
    p: &SimParams,
    cfg: &PhysConfig,
) -> Result<(f64, Vec<PhysShot>)> {
    let shot = |d0| shoot_physical(d0, d1, grid, theta_end, q_exit, p, cfg);
    let (a, b) = (shot(bracket[0])?, shot(bracket[1])?);
    if a.deviation.signum() == b.deviation.signum() {
        return Err(Error::RefinementFailed {
            depth: 0,
            detail: format!(
                "centre deviation has sign {} at both ends of [{}, {}]",
                a.deviation.signum(),
                bracket[0],
                bracket[1]
            ),
        });
    }
    let (mut lo, mut hi) = if a.deviation < 0.0 { (bracket[0], bracket[1]) } else { (bracket[1], bracket[0]) };
    let mut shots = vec![a, b];
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let s = shot(mid)?;
        shots.push(s);
        if s.deviation < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), shots))
}
