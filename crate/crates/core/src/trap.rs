//! Membership tests for the shrinking set: spectral bounds near the blowup
//! point, window bounds in the intermediate region and drift bounds far out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hermite::ModeDecomposition;
use crate::phys_solver::{window_extract, PhysGrid, PhysTrajectory};
use crate::profiles::{hat_u, t_of_x, PhysicalField, SimParams};
use crate::{Error, Result};

/// Constraint identifiers, ordered as they are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    Q0,
    Q1,
    Q2,
    Qminus,
    #[serde(rename = "gradQperp")]
    GradQperp,
    Qe,
    #[serde(rename = "D2_value")]
    D2Value,
    #[serde(rename = "D2_grad")]
    D2Grad,
    #[serde(rename = "D2_hess")]
    D2Hess,
    #[serde(rename = "D3_value")]
    D3Value,
    #[serde(rename = "D3_grad")]
    D3Grad,
}

impl Constraint {
    pub const ALL: [Constraint; 11] = [
        Constraint::Q0,
        Constraint::Q1,
        Constraint::Q2,
        Constraint::Qminus,
        Constraint::GradQperp,
        Constraint::Qe,
        Constraint::D2Value,
        Constraint::D2Grad,
        Constraint::D2Hess,
        Constraint::D3Value,
        Constraint::D3Grad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Q0 => "Q0",
            Constraint::Q1 => "Q1",
            Constraint::Q2 => "Q2",
            Constraint::Qminus => "Qminus",
            Constraint::GradQperp => "gradQperp",
            Constraint::Qe => "Qe",
            Constraint::D2Value => "D2_value",
            Constraint::D2Grad => "D2_grad",
            Constraint::D2Hess => "D2_hess",
            Constraint::D3Value => "D3_value",
            Constraint::D3Grad => "D3_grad",
        }
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Signed slack per checked constraint (positive = satisfied), with the
/// bound each slack was measured against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub in_set: bool,
    pub first_violation: Option<Constraint>,
    pub margins: BTreeMap<Constraint, f64>,
    pub bounds: BTreeMap<Constraint, f64>,
}

impl TrapReport {
    fn from_pairs(items: impl IntoIterator<Item = (Constraint, f64, f64)>) -> Self {
        let mut r = TrapReport::default();
        for (c, margin, bound) in items {
            r.margins.insert(c, margin);
            r.bounds.insert(c, bound);
        }
        r.finish()
    }

    fn finish(mut self) -> Self {
        self.first_violation =
            self.margins.iter().find(|(_, m)| !(**m >= 0.0)).map(|(c, _)| *c);
        self.in_set = self.first_violation.is_none();
        self
    }

    /// Union of two partial reports; entries of `other` win on overlap.
    pub fn merge(mut self, other: TrapReport) -> Self {
        self.margins.extend(other.margins);
        self.bounds.extend(other.bounds);
        self.finish()
    }

    pub fn margin(&self, c: Constraint) -> Option<f64> {
        self.margins.get(&c).copied()
    }

    /// `|value| / bound` for a checked constraint.
    pub fn utilisation(&self, c: Constraint) -> Option<f64> {
        Some(1.0 - self.margins.get(&c)? / self.bounds.get(&c)?)
    }
}

fn sup_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Spectral bounds. `y` are the nodes `md` was computed on.
pub fn check_d1(md: &ModeDecomposition, y: &[f64], s: f64, p: &SimParams) -> TrapReport {
    let a = p.a_amp;
    let s2 = s * s;
    let b01 = a / s2;
    let b2 = a * a * s.ln() / s2;
    let be = a * a / s.sqrt();
    let ymax = 2.0 * p.k0 * s.sqrt();
    let weighted = |f: &[f64]| {
        y.iter()
            .zip(f)
            .filter(|(y, _)| y.abs() <= ymax)
            .map(|(y, v)| v.abs() / (1.0 + y.abs().powi(3)))
            .fold(0.0, f64::max)
    };
    let mut items = vec![
        (Constraint::Q0, b01 - md.q0.abs(), b01),
        (Constraint::Q1, b01 - sup_abs(md.q1.iter().copied()), b01),
        (Constraint::Q2, b2 - sup_abs(md.q2.iter().flatten().copied()), b2),
        (Constraint::Qminus, b01 - weighted(&md.q_minus), b01),
    ];
    if !md.grad_q_perp.is_empty() {
        items.push((Constraint::GradQperp, b01 - weighted(&md.grad_q_perp), b01));
    }
    items.push((Constraint::Qe, be - sup_abs(md.q_e.iter().copied()), be));
    TrapReport::from_pairs(items)
}

/// Box test for `(q0, q1) ∈ [−A/s², A/s²]^{N+1}`; margins per component.
pub fn in_hat_va(q0: f64, q1: &[f64], s: f64, a: f64) -> (bool, Vec<f64>) {
    let b = a / (s * s);
    let margins: Vec<f64> =
        std::iter::once(q0).chain(q1.iter().copied()).map(|q| b - q.abs()).collect();
    (margins.iter().all(|m| *m >= 0.0), margins)
}

/// Default number of anchors for the window check.
pub const D2_X_SAMPLES: usize = 24;
/// Default number of window points per anchor.
pub const D2_XI_SAMPLES: usize = 16;

/// Anchors `x` log-uniform in `[(K₀/4)√(θ|ln θ|), ε₀]` with `θ = T − t`;
/// in 1D they alternate in sign.
pub fn d2_anchors(theta: f64, p: &SimParams, count: usize) -> Result<Vec<f64>> {
    if !(theta > 0.0 && theta < (-1.0f64).exp()) {
        return Err(Error::Domain(format!("window check needs 0 < T − t < 1/e, got {theta}")));
    }
    let lo = 0.25 * p.k0 * (theta * theta.ln().abs()).sqrt();
    if !(lo < p.eps0) {
        return Err(Error::Domain(format!("empty window range [{lo}, {}]", p.eps0)));
    }
    let (l0, l1) = (lo.ln(), p.eps0.ln());
    Ok((0..count)
        .map(|k| {
            let x = (l0 + (l1 - l0) * (k as f64 + 0.5) / count as f64).exp();
            if p.dim == 1 && k % 2 == 1 {
                -x
            } else {
                x
            }
        })
        .collect())
}

/// Stratified points in `[−r, r]`.
pub fn d2_xi_nodes(r: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| r * (2.0 * (j as f64 + 0.5) / count as f64 - 1.0)).collect()
}

/// Window bounds at the frame time `T − θ`, worst over sampled anchors.
pub fn check_d2(
    traj: &PhysTrajectory,
    theta: f64,
    p: &SimParams,
    x_samples: usize,
    xi_samples: usize,
) -> Result<TrapReport> {
    let mut worst = [f64::INFINITY; 3];
    let mut bound_at = [p.delta0, f64::NAN, p.c0_prime];
    for x0 in d2_anchors(theta, p, x_samples)? {
        let (_, th) = t_of_x(x0.abs(), p)?;
        let ln_th = th.ln().abs();
        let tau = 1.0 - theta / th;
        let xi = d2_xi_nodes(p.alpha0 * ln_th.sqrt(), xi_samples);
        let w = window_extract(traj, x0, p, &[tau], &xi)?.remove(0);
        let uh = hat_u(tau, p);
        let gb = p.c0 / ln_th.sqrt();
        let m = [
            p.delta0 - sup_abs(w.values.iter().map(|v| v - uh)),
            gb - sup_abs(w.grad.iter().copied()),
            p.c0_prime - sup_abs(w.hess.iter().copied()),
        ];
        if m[1] < worst[1] {
            bound_at[1] = gb;
        }
        for k in 0..3 {
            worst[k] = worst[k].min(m[k]);
        }
    }
    Ok(TrapReport::from_pairs([
        (Constraint::D2Value, worst[0], bound_at[0]),
        (Constraint::D2Grad, worst[1], bound_at[1]),
        (Constraint::D2Hess, worst[2], bound_at[2]),
    ]))
}

/// Drift of value and gradient over `|x| ≥ ε₀/4` against `η₀`.
pub fn check_d3(u_t: &PhysicalField, u_t0: &PhysicalField, p: &SimParams) -> Result<TrapReport> {
    if u_t.x_nodes != u_t0.x_nodes {
        return Err(Error::InsufficientGrid("fields are on different grids".into()));
    }
    let g = PhysGrid { nodes: u_t.x_nodes.clone(), dim: p.dim };
    let (d, d0) = (g.gradient(&u_t.u_values), g.gradient(&u_t0.u_values));
    let r = 0.25 * p.eps0;
    let far = |i: &usize| u_t.x_nodes[*i].abs() >= r;
    let n = u_t.x_nodes.len();
    let dv = sup_abs((0..n).filter(far).map(|i| u_t.u_values[i] - u_t0.u_values[i]));
    let dg = sup_abs((0..n).filter(far).map(|i| d[i] - d0[i]));
    Ok(TrapReport::from_pairs([
        (Constraint::D3Value, p.eta0 - dv, p.eta0),
        (Constraint::D3Grad, p.eta0 - dg, p.eta0),
    ]))
}

/// Whatever is available of the state at one time.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrapState<'a> {
    /// Modes, their nodes, and `s`.
    pub d1: Option<(&'a ModeDecomposition, &'a [f64], f64)>,
    /// Physical trajectory and `θ = T − t`.
    pub d2: Option<(&'a PhysTrajectory, f64)>,
    /// `U(t)` and `U(t₀)`.
    pub d3: Option<(&'a PhysicalField, &'a PhysicalField)>,
}

pub fn check_all(state: &TrapState<'_>, p: &SimParams) -> Result<TrapReport> {
    let mut r = TrapReport::default().finish();
    if let Some((md, y, s)) = state.d1 {
        r = r.merge(check_d1(md, y, s, p));
    }
    if let Some((traj, theta)) = state.d2 {
        r = r.merge(check_d2(traj, theta, p, D2_X_SAMPLES, D2_XI_SAMPLES)?);
    }
    if let Some((u, u0)) = state.d3 {
        r = r.merge(check_d3(u, u0, p)?);
    }
    Ok(r)
}
