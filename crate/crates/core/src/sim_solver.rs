//! PDE engine in similarity variables.
//!
//! Evolves `∂_sW = ΔW − y/2·∇W + α|∇W|² + e^W − 1` (or the equivalent
//! equation for `Q = e^W − ψ_α`) on a truncated uniform grid. For `dim == 1`
//! the grid is symmetric about 0; for `dim > 1` it is a radial grid `r ≥ 0`.
//!
//! The linear part `Δ − y/2·∇` is treated by Crank–Nicolson with a banded
//! LU solve, the drift is upwinded at second order, and the explicit terms
//! are advanced with a Heun predictor–corrector so the scheme is second
//! order in s.

use serde::{Deserialize, Serialize};

use crate::hermite::{decompose, grad_perp, ModeDecomposition};
use crate::linalg::{BandLu, BandMatrix};
use crate::profiles::{psi_unchecked, SimParams, SimilarityField};
use crate::{Error, Result};

/// Default blowup guard on `max W`.
pub const BLOWUP_GUARD: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SemiImplicitCn,
    ExplicitRk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    WEquation,
    QEquation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Half-width (or radius) of the grid.
    pub y_max: f64,
    pub dy: f64,
    /// Base step in s.
    pub ds: f64,
    pub cfl_safety: f64,
    pub scheme: Scheme,
    pub formulation: Formulation,
    pub blowup_guard: f64,
    /// `false` drops every nonlinear and zeroth-order term, leaving the
    /// drift-diffusion part only.
    pub reaction: bool,
}

impl SolverConfig {
    /// Defaults sized for a run ending at `s_end`.
    pub fn for_run(p: &SimParams, s_end: f64) -> Self {
        SolverConfig {
            y_max: default_y_max(p, s_end),
            dy: 0.05,
            ds: 0.02,
            cfl_safety: 0.5,
            scheme: Scheme::SemiImplicitCn,
            formulation: Formulation::WEquation,
            blowup_guard: BLOWUP_GUARD,
            reaction: true,
        }
    }

    pub fn validate(&self, p: &SimParams, s_end: f64) -> Result<()> {
        let need = default_y_max(p, s_end);
        if self.y_max < need * (1.0 - 1e-12) {
            return Err(Error::InvalidParam {
                name: "y_max",
                reason: format!("{} is below 2.2·K0·sqrt(s_end) = {need}", self.y_max),
            });
        }
        if !(self.dy > 0.0 && self.dy <= 0.05 + 1e-15) {
            return Err(Error::InvalidParam { name: "dy", reason: "must lie in (0, 0.05]".into() });
        }
        if !(self.ds > 0.0) {
            return Err(Error::InvalidParam { name: "ds", reason: "must be > 0".into() });
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParam {
                name: "cfl_safety",
                reason: "must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// `1.1 · 2K₀√s_end`.
pub fn default_y_max(p: &SimParams, s_end: f64) -> f64 {
    1.1 * 2.0 * p.k0 * s_end.sqrt()
}

/// Uniform grid: symmetric in 1D, radial for `dim > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    pub y: Vec<f64>,
    pub h: f64,
    pub dim: usize,
}

impl SimGrid {
    pub fn new(y_max: f64, dy: f64, dim: usize) -> Result<Self> {
        if !(y_max > 0.0 && dy > 0.0) || dim == 0 {
            return Err(Error::Domain("grid needs y_max > 0, dy > 0, dim >= 1".into()));
        }
        let half = (y_max / dy - 1e-9).ceil() as i64;
        if half < 4 {
            return Err(Error::InsufficientGrid(format!("only {half} cells per side")));
        }
        let y = if dim == 1 {
            (-half..=half).map(|i| i as f64 * dy).collect()
        } else {
            (0..=half).map(|i| i as f64 * dy).collect()
        };
        Ok(SimGrid { y, h: dy, dim })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn radial(&self) -> bool {
        self.dim > 1
    }

    /// Indices whose rows are boundary rows.
    fn is_boundary(&self, i: usize) -> bool {
        i + 1 == self.len() || (!self.radial() && i == 0)
    }

    /// Coefficients of `Δ − y/2·∇` at node `i`. Boundary rows use one-sided
    /// stencils.
    fn stencil(&self, i: usize) -> Vec<(usize, f64)> {
        let h = self.h;
        let h2 = h * h;
        let n = self.len();
        let y = self.y[i];
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(6);
        let mut push = |j: usize, c: f64| {
            if let Some(e) = out.iter_mut().find(|e| e.0 == j) {
                e.1 += c;
            } else {
                out.push((j, c));
            }
        };
        if self.radial() && i == 0 {
            let k = 2.0 * self.dim as f64 / h2;
            push(0, -k);
            push(1, k);
            return out;
        }
        // Index of a neighbour, reflecting through r = 0 on radial grids.
        let at = |k: i64| -> usize {
            if k < 0 {
                (-k) as usize
            } else {
                k as usize
            }
        };
        let ii = i as i64;
        if i + 1 == n {
            // One-sided second-order Laplacian pointing inward.
            for (off, c) in [(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)] {
                push(at(ii + off), c / h2);
            }
        } else if i == 0 {
            for (off, c) in [(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)] {
                push(at(ii + off), c / h2);
            }
        } else {
            push(i - 1, 1.0 / h2);
            push(i, -2.0 / h2);
            push(i + 1, 1.0 / h2);
        }
        if self.radial() {
            let k = (self.dim - 1) as f64 / y;
            if i + 1 == n {
                push(i, k * 1.5 / h);
                push(i - 1, -k * 2.0 / h);
                push(i - 2, k * 0.5 / h);
            } else {
                push(i + 1, k * 0.5 / h);
                push(i - 1, -k * 0.5 / h);
            }
        }
        // Drift −(y/2)∂_y, second-order upwind for outward characteristics.
        let v = -0.5 * y;
        if y > 0.0 {
            push(i, v * 1.5 / h);
            push(at(ii - 1), -v * 2.0 / h);
            push(at(ii - 2), v * 0.5 / h);
        } else if y < 0.0 {
            push(i, -v * 1.5 / h);
            push(i + 1, v * 2.0 / h);
            push(i + 2, -v * 0.5 / h);
        }
        out
    }

    /// Band matrix of `Δ − y/2·∇` for interior rows; boundary rows hold the
    /// extrapolation `f_b − 2f_{b∓1} + f_{b∓2}`.
    fn operator_matrix(&self) -> BandMatrix {
        let n = self.len();
        let mut m = BandMatrix::zeros(n, 2, 2);
        for i in 0..n {
            if self.is_boundary(i) {
                continue;
            }
            for (j, c) in self.stencil(i) {
                m.add(i, j, c);
            }
        }
        m
    }

    /// Second-order gradient: centred inside, one-sided at the ends, zero at
    /// the radial origin.
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let h = self.h;
        (0..n)
            .map(|i| {
                if i == 0 {
                    if self.radial() {
                        0.0
                    } else {
                        (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
                    }
                } else if i + 1 == n {
                    (3.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]) / (2.0 * h)
                } else {
                    (f[i + 1] - f[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    fn extrapolate_boundary(&self, f: &mut [f64]) {
        let n = self.len();
        f[n - 1] = 2.0 * f[n - 2] - f[n - 3];
        if !self.radial() {
            f[0] = 2.0 * f[1] - f[2];
        }
    }
}

/// `𝓛f = Δf − y/2·∇f + f` on the grid, with one-sided stencils at the
/// boundary.
pub fn apply_l(grid: &SimGrid, f: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| f[i] + grid.stencil(i).iter().map(|(j, c)| c * f[*j]).sum::<f64>())
        .collect()
}

/// `V(y,s) = 2(ψ_α(y,s) − 1)`.
pub fn potential_v(y_norm: f64, s: f64, p: &SimParams) -> f64 {
    2.0 * (psi_unchecked(y_norm, s, p) - 1.0)
}

/// ψ_α together with its analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    pub psi: f64,
    pub ds: f64,
    /// Derivative along y (signed in 1D, radial otherwise).
    pub dy: f64,
    pub lap: f64,
}

/// `y` is the signed coordinate in 1D or the radius.
pub fn psi_derivatives(y: f64, s: f64, p: &SimParams) -> PsiDerivatives {
    let n = p.dim as f64;
    let k = p.kappa();
    let e = (n / ((2.0 + 2.0 * p.alpha) * s)).exp();
    let r2 = y * y;
    let d = 1.0 + r2 / (k * s);
    let psi = e / d;
    PsiDerivatives {
        psi,
        ds: -n / ((2.0 + 2.0 * p.alpha) * s * s) * psi + psi * (r2 / (k * s * s)) / d,
        dy: -2.0 * e * y / (k * s * d * d),
        lap: -2.0 * e * n / (k * s * d * d) + 8.0 * e * r2 / (k * k * s * s * d * d * d),
    }
}

/// `G(Q) = (α−1)[|∇Q + ∇ψ|²/(Q + ψ) − |∇ψ|²/ψ]` for radial or 1D fields,
/// where `grad_q` and `y` are the components along the same axis.
pub fn nonlinear_g(q: f64, grad_q: f64, y: f64, s: f64, p: &SimParams) -> Result<f64> {
    let d = psi_derivatives(y, s, p);
    let z = q + d.psi;
    if !(z > 0.0) {
        return Err(Error::Singularity { y, s });
    }
    let g = grad_q + d.dy;
    Ok((p.alpha - 1.0) * (g * g / z - d.dy * d.dy / d.psi))
}

/// `R = −∂_sψ + Δψ − y/2·∇ψ + ψ² − ψ + (α−1)|∇ψ|²/ψ`.
pub fn residual_r(y: f64, s: f64, p: &SimParams) -> f64 {
    let d = psi_derivatives(y, s, p);
    -d.ds + d.lap - 0.5 * y * d.dy + d.psi * d.psi - d.psi
        + (p.alpha - 1.0) * d.dy * d.dy / d.psi
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub s: f64,
    pub w: Vec<f64>,
    pub modes: ModeDecomposition,
    pub sup_w: f64,
    pub sup_q: f64,
    /// `sup_y |e^W − e^{Φ_α(y/√s)}|`.
    pub profile_err: f64,
    /// `sup_y |∂_y e^W − ∂_y e^{Φ_α(y/√s)}|`.
    pub profile_grad_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub y: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SimilarityField,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Owns a grid, its operator and a cached factorisation.
pub struct SimSolver {
    grid: SimGrid,
    cfg: SolverConfig,
    p: SimParams,
    a: BandMatrix,
    cache: Option<(f64, BandLu)>,
}

impl SimSolver {
    pub fn new(cfg: SolverConfig, p: SimParams) -> Result<Self> {
        p.validate()?;
        let grid = SimGrid::new(cfg.y_max, cfg.dy, p.dim)?;
        let a = grid.operator_matrix();
        Ok(SimSolver { grid, cfg, p, a, cache: None })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    /// Maps a field onto the solver's internal unknown (W or Q).
    fn to_state(&self, w: &[f64], s: f64) -> Vec<f64> {
        match self.cfg.formulation {
            Formulation::WEquation => w.to_vec(),
            Formulation::QEquation => self
                .grid
                .y
                .iter()
                .zip(w)
                .map(|(y, w)| w.exp() - psi_unchecked(y.abs(), s, &self.p))
                .collect(),
        }
    }

    fn to_w(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
        match self.cfg.formulation {
            Formulation::WEquation => Ok(u.to_vec()),
            Formulation::QEquation => self
                .grid
                .y
                .iter()
                .zip(u)
                .map(|(&y, q)| {
                    let z = q + psi_unchecked(y.abs(), s, &self.p);
                    if z > 0.0 {
                        Ok(z.ln())
                    } else {
                        Err(Error::Singularity { y, s })
                    }
                })
                .collect(),
        }
    }

    /// Explicit part of the right-hand side.
    fn forcing(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if !self.cfg.reaction {
            return Ok(vec![0.0; n]);
        }
        let g = self.grid.gradient(u);
        let p = &self.p;
        match self.cfg.formulation {
            Formulation::WEquation => {
                Ok((0..n).map(|i| p.alpha * g[i] * g[i] + u[i].exp() - 1.0).collect())
            }
            Formulation::QEquation => (0..n)
                .map(|i| {
                    let y = self.grid.y[i];
                    let q = u[i];
                    let psi = psi_unchecked(y.abs(), s, p);
                    let v = 2.0 * (psi - 1.0);
                    Ok(q + v * q + q * q + nonlinear_g(q, g[i], y, s, p)? + residual_r(y, s, p))
                })
                .collect(),
        }
    }

    fn max_exp_w(&self, u: &[f64], s: f64) -> f64 {
        match self.cfg.formulation {
            Formulation::WEquation => u.iter().fold(0.0f64, |m, w| m.max(w.exp())),
            Formulation::QEquation => self
                .grid
                .y
                .iter()
                .zip(u)
                .fold(0.0f64, |m, (y, q)| m.max(q + psi_unchecked(y.abs(), s, &self.p))),
        }
    }

    /// Largest admissible step at the current state.
    fn dt_limit(&self, u: &[f64], s: f64) -> f64 {
        let mut dt = self.cfg.ds.min(self.cfg.cfl_safety / self.max_exp_w(u, s).max(1e-300));
        if self.cfg.scheme == Scheme::ExplicitRk2 {
            let h = self.grid.h;
            let ymax = self.grid.y.last().copied().unwrap_or(0.0).abs();
            let rate = 2.0 * self.p.dim as f64 / (h * h) + 0.75 * ymax / h;
            dt = dt.min(self.cfg.cfl_safety / rate);
        }
        dt
    }

    fn factor_for(&mut self, dt: f64) -> Result<f64> {
        if let Some((cached, _)) = &self.cache {
            if (cached - dt).abs() <= 1e-12 * dt {
                return Ok(*cached);
            }
        }
        let n = self.grid.len();
        let mut m = BandMatrix::zeros(n, 2, 2);
        for i in 0..n {
            if self.grid.is_boundary(i) {
                let (a, b) = if i == 0 { (1, 2) } else { (i - 1, i - 2) };
                m.set(i, i, 1.0);
                m.set(i, a, -2.0);
                m.set(i, b, 1.0);
                continue;
            }
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = -0.5 * dt * self.a.get(i, j) + if i == j { 1.0 } else { 0.0 };
                if v != 0.0 {
                    m.set(i, j, v);
                }
            }
        }
        let lu = m.factor().ok_or(Error::NumericalFailure { s: f64::NAN })?;
        self.cache = Some((dt, lu));
        Ok(dt)
    }

    /// Advances `u` from `s` by `dt`; returns the new state.
    fn advance(&mut self, u: &[f64], s: f64, dt: f64) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let f0 = self.forcing(u, s)?;
        let out = match self.cfg.scheme {
            Scheme::SemiImplicitCn => {
                let au = self.a.mul_vec(u);
                let base: Vec<f64> = (0..n).map(|i| u[i] + 0.5 * dt * au[i]).collect();
                let mut rhs: Vec<f64> = (0..n).map(|i| base[i] + dt * f0[i]).collect();
                self.zero_boundary(&mut rhs);
                let lu = &self.cache.as_ref().expect("factorised").1;
                let pred = lu.solve(&rhs);
                let f1 = self.forcing(&pred, s + dt)?;
                let mut rhs: Vec<f64> =
                    (0..n).map(|i| base[i] + 0.5 * dt * (f0[i] + f1[i])).collect();
                self.zero_boundary(&mut rhs);
                let lu = &self.cache.as_ref().expect("factorised").1;
                lu.solve(&rhs)
            }
            Scheme::ExplicitRk2 => {
                let au = self.a.mul_vec(u);
                let k0: Vec<f64> = (0..n).map(|i| au[i] + f0[i]).collect();
                let mut pred: Vec<f64> = (0..n).map(|i| u[i] + dt * k0[i]).collect();
                self.grid.extrapolate_boundary(&mut pred);
                let ap = self.a.mul_vec(&pred);
                let f1 = self.forcing(&pred, s + dt)?;
                let mut next: Vec<f64> =
                    (0..n).map(|i| u[i] + 0.5 * dt * (k0[i] + ap[i] + f1[i])).collect();
                self.grid.extrapolate_boundary(&mut next);
                next
            }
        };
        Ok(out)
    }

    fn zero_boundary(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[n - 1] = 0.0;
        if !self.grid.radial() {
            rhs[0] = 0.0;
        }
    }

    fn check_state(&self, u: &[f64], s: f64) -> Result<()> {
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { s });
        }
        let w = self.to_w(u, s)?;
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > self.cfg.blowup_guard {
            return Err(Error::Blowup { s, max });
        }
        Ok(())
    }

    fn check_field(&self, state: &SimilarityField) -> Result<()> {
        if state.y_nodes.len() != self.grid.len()
            || state.y_nodes.iter().zip(&self.grid.y).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::InsufficientGrid("field is not on the solver grid".into()));
        }
        Ok(())
    }

    /// One step of size `min(ds, cfl/max e^W)`.
    pub fn step(&mut self, state: &SimilarityField) -> Result<SimilarityField> {
        self.check_field(state)?;
        let u = self.to_state(&state.w_values, state.s);
        self.check_state(&u, state.s)?;
        let mut dt = self.dt_limit(&u, state.s);
        if self.cfg.scheme == Scheme::SemiImplicitCn {
            dt = self.factor_for(dt)?;
        }
        let next = self.advance(&u, state.s, dt)?;
        let s = state.s + dt;
        self.check_state(&next, s)?;
        Ok(SimilarityField { y_nodes: self.grid.y.clone(), w_values: self.to_w(&next, s)?, s })
    }

    fn snapshot(&self, u: &[f64], s: f64) -> Result<Snapshot> {
        let p = &self.p;
        let y = &self.grid.y;
        let w = self.to_w(u, s)?;
        let q: Vec<f64> =
            y.iter().zip(&w).map(|(y, w)| w.exp() - psi_unchecked(y.abs(), s, p)).collect();
        let gw = self.grid.gradient(&w);
        let gq: Vec<f64> = (0..y.len())
            .map(|i| w[i].exp() * gw[i] - psi_derivatives(y[i], s, p).dy)
            .collect();
        let mut modes = decompose(y, &q, s, p)?;
        modes.grad_q_perp = grad_perp(y, &gq, s, p)?;
        let sq = s.sqrt();
        let k = p.kappa();
        let mut profile_err: f64 = 0.0;
        let mut profile_grad_err: f64 = 0.0;
        for i in 0..y.len() {
            let d = 1.0 + y[i] * y[i] / (k * s);
            let e_phi = 1.0 / d;
            // ∂_y e^{Φ(y/√s)} = e^Φ Φ'(y/√s)/√s.
            let de_phi = e_phi * (-2.0 * (y[i] / sq) / (k + y[i] * y[i] / s)) / sq;
            let ew = w[i].exp();
            profile_err = profile_err.max((ew - e_phi).abs());
            profile_grad_err = profile_grad_err.max((ew * gw[i] - de_phi).abs());
        }
        Ok(Snapshot {
            s,
            sup_w: w.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            sup_q: q.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            w,
            modes,
            profile_err,
            profile_grad_err,
        })
    }

    /// Evolves to `s_end`, emitting a snapshot at `init.s + k·snapshot_every`
    /// and at `s_end`. `on_snapshot` returns `false` to stop early.
    pub fn evolve_until<F>(
        &mut self,
        init: &SimilarityField,
        s_end: f64,
        snapshot_every: f64,
        mut on_snapshot: F,
    ) -> Result<Trajectory>
    where
        F: FnMut(&Snapshot) -> bool,
    {
        if !(init.s < s_end) {
            return Err(Error::Domain(format!("start s = {} is not before {s_end}", init.s)));
        }
        if !(snapshot_every > 0.0) {
            return Err(Error::InvalidParam { name: "snapshot_every", reason: "must be > 0".into() });
        }
        self.cfg.validate(&self.p, s_end)?;
        self.check_field(init)?;
        let s_start = init.s;
        let mut s = s_start;
        let mut u = self.to_state(&init.w_values, s);
        self.check_state(&u, s)?;
        let mut snapshots = Vec::new();
        let mut steps = 0usize;
        let first = self.snapshot(&u, s)?;
        let mut go_on = on_snapshot(&first);
        snapshots.push(first);
        let mut k = 1usize;
        while go_on && s < s_end {
            let target = (s_start + k as f64 * snapshot_every).min(s_end);
            k += 1;
            while s < target {
                let rem = target - s;
                let lim = self.dt_limit(&u, s);
                let mut dt = if rem <= lim * (1.0 + 1e-9) {
                    rem
                } else {
                    rem / (rem / lim).ceil()
                };
                if self.cfg.scheme == Scheme::SemiImplicitCn {
                    dt = self.factor_for(dt)?;
                }
                u = self.advance(&u, s, dt)?;
                steps += 1;
                s = if (target - (s + dt)).abs() <= 1e-12 * target.abs() { target } else { s + dt };
                self.check_state(&u, s)?;
            }
            let snap = self.snapshot(&u, s)?;
            go_on = on_snapshot(&snap);
            snapshots.push(snap);
        }
        let final_state =
            SimilarityField { y_nodes: self.grid.y.clone(), w_values: self.to_w(&u, s)?, s };
        Ok(Trajectory { y: self.grid.y.clone(), snapshots, final_state, steps, stopped_early: !go_on && s < s_end })
    }
}

/// One step with a fresh solver.
pub fn step(state: &SimilarityField, cfg: &SolverConfig, p: &SimParams) -> Result<SimilarityField> {
    SimSolver::new(*cfg, *p)?.step(state)
}

/// Full run with snapshots every `snapshot_every`.
pub fn evolve(
    init: &SimilarityField,
    s_end: f64,
    cfg: &SolverConfig,
    p: &SimParams,
    snapshot_every: f64,
) -> Result<Trajectory> {
    SimSolver::new(*cfg, *p)?.evolve_until(init, s_end, snapshot_every, |_| true)
}

/// `ln ψ_α(·, s)` on the grid of `cfg`.
pub fn psi_field(cfg: &SolverConfig, p: &SimParams, s: f64) -> Result<SimilarityField> {
    let grid = SimGrid::new(cfg.y_max, cfg.dy, p.dim)?;
    let w = grid.y.iter().map(|y| psi_unchecked(y.abs(), s, p).ln()).collect();
    Ok(SimilarityField { y_nodes: grid.y, w_values: w, s })
}
