//! Shooting over the expanding directions `(d₀, d₁)`: exit classification,
//! the exit-sign map with its boundary winding, and sign-enclosure
//! refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::initial_data::{initial_similarity, InitialDataSpec};
use crate::profiles::SimParams;
use crate::sim_solver::{SimSolver, Snapshot, SolverConfig};
use crate::trap::{check_d1, Constraint, TrapReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Exited,
    Reached,
    SolverFailure,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootOutcome {
    pub d0: f64,
    pub d1: Vec<f64>,
    pub kind: OutcomeKind,
    /// Interpolated exit time; `∞` (JSON `null`) when the run reached `s_end`.
    #[serde(with = "inf_as_null")]
    pub exit_s: f64,
    pub exit_constraint: Option<Constraint>,
    /// Signs of `(Q₀, Q₁…)` at the exit snapshot; `0` when the scaled mode
    /// is below `SIGN_TOL`.
    pub exit_sign: Vec<i8>,
    /// `(Q₀, Q₁…)·s²/A` at the exit snapshot.
    pub exit_modes: Vec<f64>,
    /// `ω·dQ/ds` of the exiting mode across the exit, for `Q0`/`Q1` exits.
    pub exit_rate: Option<f64>,
    /// Largest `|value|/bound` over the non-`(Q0, Q1)` constraints along the
    /// trapped part of the run.
    pub max_other_utilisation: f64,
    pub failure: Option<String>,
}

impl ShootOutcome {
    /// Exit time, or `s_end` for runs that stayed trapped.
    pub fn reach(&self, s_end: f64) -> f64 {
        if self.exit_s.is_finite() {
            self.exit_s
        } else {
            s_end
        }
    }

    /// Sign of the given expanding component at exit; `0` for runs that
    /// stayed trapped or a vanishing component.
    pub fn sign_of(&self, component: usize) -> i8 {
        self.exit_sign.get(component).copied().unwrap_or(0)
    }

    /// Transversality test `ω·Q′(s*) > 0` for `Q0`/`Q1` exits.
    pub fn transversal(&self) -> Option<bool> {
        self.exit_rate.map(|r| r > 0.0)
    }
}

/// Settings shared by every shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootConfig {
    pub s_end: f64,
    pub snapshot_every: f64,
    pub solver: SolverConfig,
}

impl ShootConfig {
    pub fn for_run(p: &SimParams, s_end: f64) -> Self {
        ShootConfig { s_end, snapshot_every: 0.1, solver: SolverConfig::for_run(p, s_end) }
    }
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Scaled modes below this are roundoff of a symmetric run.
pub const SIGN_TOL: f64 = 1e-10;

fn sgn_tol(v: f64) -> i8 {
    if v.abs() < SIGN_TOL {
        0
    } else {
        sgn(v)
    }
}

fn expanding(s: &Snapshot) -> Vec<f64> {
    std::iter::once(s.modes.q0).chain(s.modes.q1.iter().copied()).collect()
}

/// Builds the data for `(d₀, d₁)`, evolves it and reports the first exit
/// from the spectral box.
pub fn shoot(d0: f64, d1: &[f64], p: &SimParams, cfg: &ShootConfig) -> Result<ShootOutcome> {
    p.validate()?;
    if d1.len() != p.dim {
        return Err(Error::InvalidParam { name: "d1", reason: format!("needs {} entries", p.dim) });
    }
    let mut spec = InitialDataSpec::new(d0, 0.0, *p);
    spec.d1 = d1.to_vec();
    spec.validate()?;
    let mut solver = SimSolver::new(cfg.solver, *p)?;
    let y = solver.grid().y.clone();
    let init = initial_similarity(&spec, &y)?;

    let mut out = ShootOutcome {
        d0,
        d1: d1.to_vec(),
        kind: OutcomeKind::Reached,
        exit_s: f64::INFINITY,
        exit_constraint: None,
        exit_sign: Vec::new(),
        exit_modes: Vec::new(),
        exit_rate: None,
        max_other_utilisation: 0.0,
        failure: None,
    };
    let mut prev: Option<(f64, Vec<f64>, TrapReport)> = None;
    let mut last_s = init.s;
    let run = solver.evolve_until(&init, cfg.s_end, cfg.snapshot_every, |snap| {
        last_s = snap.s;
        let rep = check_d1(&snap.modes, &y, snap.s, p);
        let modes = expanding(snap);
        if rep.in_set {
            for (c, _) in rep.margins.iter() {
                if !matches!(c, Constraint::Q0 | Constraint::Q1) {
                    let u = rep.utilisation(*c).unwrap_or(0.0);
                    out.max_other_utilisation = out.max_other_utilisation.max(u);
                }
            }
            prev = Some((snap.s, modes, rep));
            return true;
        }
        out.kind = OutcomeKind::Exited;
        let scale = snap.s * snap.s / p.a_amp;
        out.exit_modes = modes.iter().map(|v| v * scale).collect();
        out.exit_sign = out.exit_modes.iter().map(|v| sgn_tol(*v)).collect();
        match &prev {
            None => {
                out.exit_s = snap.s;
                out.exit_constraint = rep.first_violation;
            }
            Some((s_prev, m_prev, r_prev)) => {
                // Earliest linearly interpolated crossing among the violated
                // constraints; ties keep the listed order.
                let mut best: Option<(f64, Constraint)> = None;
                for (c, m) in rep.margins.iter().filter(|(_, m)| !(**m >= 0.0)) {
                    let m0 = r_prev.margin(*c).unwrap_or(0.0);
                    let f = if m.is_finite() && m0 > *m { m0 / (m0 - m) } else { 1.0 };
                    let s_star = s_prev + f.clamp(0.0, 1.0) * (snap.s - s_prev);
                    if best.is_none_or(|(b, _)| s_star < b) {
                        best = Some((s_star, *c));
                    }
                }
                let (s_star, c) = best.expect("a violated constraint");
                out.exit_s = s_star;
                out.exit_constraint = Some(c);
                let comp = match c {
                    Constraint::Q0 => Some(0),
                    Constraint::Q1 => {
                        // The component with the smallest margin.
                        let b = p.a_amp / (snap.s * snap.s);
                        (1..modes.len()).min_by(|&i, &j| {
                            (b - modes[i].abs()).total_cmp(&(b - modes[j].abs()))
                        })
                    }
                    _ => None,
                };
                if let Some(k) = comp {
                    let rate = (modes[k] - m_prev[k]) / (snap.s - s_prev);
                    out.exit_rate = Some(f64::from(sgn(modes[k])) * rate);
                }
            }
        }
        false
    });
    if let Err(e) = run {
        match e {
            Error::Blowup { .. } | Error::NumericalFailure { .. } | Error::Singularity { .. } => {
                out.kind = OutcomeKind::SolverFailure;
                out.exit_s = last_s;
                out.failure = Some(e.to_string());
            }
            other => return Err(other),
        }
    }
    Ok(out)
}

/// Outcomes on a uniform grid over `[−2, 2]^{N+1}` (N = 1) or `[−2, 2]`
/// in `d₀` (radial), with the boundary winding of the exit map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitMap {
    pub grid_res: usize,
    pub d0_values: Vec<f64>,
    /// Single `0.0` in the radial case.
    pub d1_values: Vec<f64>,
    /// Row-major: `outcomes[j·grid_res + i]` has `d₀ = d0_values[i]`,
    /// `d₁ = d1_values[j]`.
    pub outcomes: Vec<ShootOutcome>,
    /// Winding number of `(Q₀, Q₁)` at exit along the boundary, traversed
    /// counter-clockwise in the `(d₀, d₁)` plane; 0 in the radial case.
    pub winding: i64,
}

impl ExitMap {
    pub fn at(&self, i: usize, j: usize) -> &ShootOutcome {
        &self.outcomes[j * self.d0_values.len() + i]
    }
}

/// Winding of a closed loop of planar vectors around the origin.
pub fn winding_number(loop_: &[[f64; 2]]) -> i64 {
    let n = loop_.len();
    let mut total = 0.0;
    for k in 0..n {
        let a = loop_[k];
        let b = loop_[(k + 1) % n];
        let mut d = b[1].atan2(b[0]) - a[1].atan2(a[0]);
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        total += d;
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn classify_exit_map(grid_res: usize, p: &SimParams, cfg: &ShootConfig) -> Result<ExitMap> {
    if grid_res < 2 {
        return Err(Error::InvalidParam { name: "grid_res", reason: "must be >= 2".into() });
    }
    let d0_values = linspace(-2.0, 2.0, grid_res);
    let d1_values = if p.dim == 1 { linspace(-2.0, 2.0, grid_res) } else { vec![0.0] };
    let points: Vec<(f64, f64)> =
        d1_values.iter().flat_map(|&b| d0_values.iter().map(move |&a| (a, b))).collect();
    let outcomes: Vec<ShootOutcome> = points
        .par_iter()
        .map(|&(a, b)| {
            let d1 = if p.dim == 1 { vec![b] } else { vec![0.0; p.dim] };
            shoot(a, &d1, p, cfg)
        })
        .collect::<Result<_>>()?;
    let mut map = ExitMap { grid_res, d0_values, d1_values, outcomes, winding: 0 };
    if p.dim == 1 {
        let n = grid_res;
        let mut idx: Vec<(usize, usize)> = (0..n).map(|i| (i, 0)).collect();
        idx.extend((1..n).map(|j| (n - 1, j)));
        idx.extend((0..n - 1).rev().map(|i| (i, n - 1)));
        idx.extend((1..n - 1).rev().map(|j| (0, j)));
        let loop_: Vec<[f64; 2]> = idx
            .iter()
            .map(|&(i, j)| {
                let m = &map.at(i, j).exit_modes;
                if m.len() >= 2 {
                    [m[0], m[1]]
                } else {
                    [0.0, 0.0]
                }
            })
            .collect();
        map.winding = winding_number(&loop_);
    }
    Ok(map)
}

/// A parameter rectangle `[d0_lo, d0_hi] × [d1_lo, d1_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub d0: [f64; 2],
    pub d1: [f64; 2],
}

impl Cell {
    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.d0[0] + self.d0[1]), 0.5 * (self.d1[0] + self.d1[1]))
    }
}

/// The grid cell whose four corners show all four `(Q₀, Q₁)` exit-sign
/// patterns (radial: a sign change in `d₀`), preferring the largest mean
/// exit time.
pub fn best_cell(map: &ExitMap, s_end: f64) -> Option<Cell> {
    let n0 = map.d0_values.len();
    if map.d1_values.len() == 1 {
        return (0..n0 - 1)
            .filter(|&i| map.at(i, 0).sign_of(0) * map.at(i + 1, 0).sign_of(0) <= 0)
            .max_by(|&a, &b| {
                let f = |i: usize| map.at(i, 0).reach(s_end) + map.at(i + 1, 0).reach(s_end);
                f(a).total_cmp(&f(b))
            })
            .map(|i| Cell { d0: [map.d0_values[i], map.d0_values[i + 1]], d1: [0.0, 0.0] });
    }
    let n1 = map.d1_values.len();
    let mut best: Option<(f64, Cell)> = None;
    for j in 0..n1 - 1 {
        for i in 0..n0 - 1 {
            let c = [map.at(i, j), map.at(i + 1, j), map.at(i, j + 1), map.at(i + 1, j + 1)];
            // A zero component lies on the sign boundary and counts as both.
            let mut seen = [false; 4];
            for o in &c {
                let opts = |v: i8| match v {
                    0 => vec![false, true],
                    v => vec![v > 0],
                };
                for a in opts(o.sign_of(0)) {
                    for b in opts(o.sign_of(1)) {
                        seen[usize::from(a) + 2 * usize::from(b)] = true;
                    }
                }
            }
            if !seen.iter().all(|v| *v) {
                continue;
            }
            let mean = c.iter().map(|o| o.reach(s_end)).sum::<f64>() / 4.0;
            if best.is_none_or(|(m, _)| mean > m) {
                let cell = Cell {
                    d0: [map.d0_values[i], map.d0_values[i + 1]],
                    d1: [map.d1_values[j], map.d1_values[j + 1]],
                };
                best = Some((mean, cell));
            }
        }
    }
    best.map(|(_, c)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineLevel {
    pub depth: usize,
    pub cell: Cell,
    pub center_exit_s: f64,
    /// Best reach among the shots of this level that lie in `cell`.
    pub best_exit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub d0: f64,
    pub d1: Vec<f64>,
    /// Reach of the returned parameters (`s_end` if trapped throughout).
    pub exit_s: f64,
    pub outcome: ShootOutcome,
    pub levels: Vec<RefineLevel>,
}

impl Refinement {
    /// Best reach per level is nondecreasing.
    pub fn monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].best_exit_s >= w[0].best_exit_s)
    }
}

/// Alternating-coordinate sign bisection, starting from `cell`.
///
/// Each level halves the `d₀` or the `d₁` interval in turn (only `d₀` in
/// the radial case), keeping the half whose ends give opposite exit signs
/// of the matching component, evaluated with the other coordinate at its
/// centre value. A coordinate whose sign vanishes at an evaluated point is
/// fixed there and later levels go to the other one.
pub fn refine(cell: Cell, depth: usize, p: &SimParams, cfg: &ShootConfig) -> Result<Refinement> {
    let two_d = p.dim == 1;
    let d1_of = |b: f64| if two_d { vec![b] } else { vec![0.0; p.dim] };
    let mut cell = cell;
    let (c0, c1) = cell.center();
    let mut best = shoot(c0, &d1_of(c1), p, cfg)?;
    let mut levels = vec![RefineLevel {
        depth: 0,
        cell,
        center_exit_s: best.reach(cfg.s_end),
        best_exit_s: best.reach(cfg.s_end),
    }];
    let mut collapsed = [false, !two_d];
    let mut turn = 0usize;
    for k in 1..=depth {
        if collapsed[0] && collapsed[1] {
            break;
        }
        let mut coord = turn % 2;
        if collapsed[coord] {
            coord = 1 - coord;
        }
        turn += 1;
        let (c0, c1) = cell.center();
        let (lo, hi) = if coord == 0 { (cell.d0[0], cell.d0[1]) } else { (cell.d1[0], cell.d1[1]) };
        let mid = 0.5 * (lo + hi);
        let at = |v: f64| if coord == 0 { (v, c1) } else { (c0, v) };
        let shots: Vec<ShootOutcome> = [lo, mid, hi]
            .par_iter()
            .map(|&v| {
                let (a, b) = at(v);
                shoot(a, &d1_of(b), p, cfg)
            })
            .collect::<Result<_>>()?;
        let (sl, sm, sh) = (shots[0].sign_of(coord), shots[1].sign_of(coord), shots[2].sign_of(coord));
        if sl != 0 && sl == sh {
            return Err(Error::RefinementFailed {
                depth: k,
                detail: format!(
                    "no sign change of component {coord} on [{lo}, {hi}] (sign {sl}; exits {:?}, {:?})",
                    shots[0].exit_constraint, shots[2].exit_constraint
                ),
            });
        }
        // A zero sign marks the root itself; the coordinate is then fixed.
        let (keep_lo, keep_hi) = if sl == 0 {
            (lo, lo)
        } else if sh == 0 {
            (hi, hi)
        } else if sm == 0 {
            (mid, mid)
        } else if sm == sl {
            (mid, hi)
        } else {
            (lo, mid)
        };
        collapsed[coord] = keep_lo == keep_hi;
        if coord == 0 {
            cell.d0 = [keep_lo, keep_hi];
        } else {
            cell.d1 = [keep_lo, keep_hi];
        }
        let (n0, n1) = cell.center();
        let center = shoot(n0, &d1_of(n1), p, cfg)?;
        let inside: Vec<&ShootOutcome> = shots
            .iter()
            .chain(std::iter::once(&center))
            .filter(|o| {
                o.d0 >= cell.d0[0] && o.d0 <= cell.d0[1] && (!two_d || (o.d1[0] >= cell.d1[0] && o.d1[0] <= cell.d1[1]))
            })
            .collect();
        let lvl_best = inside.iter().map(|o| o.reach(cfg.s_end)).fold(f64::NEG_INFINITY, f64::max);
        if let Some(o) = inside.iter().max_by(|a, b| a.reach(cfg.s_end).total_cmp(&b.reach(cfg.s_end))) {
            if o.reach(cfg.s_end) >= best.reach(cfg.s_end) {
                best = (*o).clone();
            }
        }
        levels.push(RefineLevel {
            depth: k,
            cell,
            center_exit_s: center.reach(cfg.s_end),
            best_exit_s: lvl_best.max(levels.last().map_or(f64::NEG_INFINITY, |l| l.best_exit_s)),
        });
    }
    Ok(Refinement {
        d0: best.d0,
        d1: best.d1.clone(),
        exit_s: best.reach(cfg.s_end),
        outcome: best,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::initial_data::{mode_map, InitialQ};

    fn setup(s_end: f64) -> (SimParams, ShootConfig) {
        let p = SimParams::default();
        (p, ShootConfig::for_run(&p, s_end))
    }

    #[test]
    fn large_d0_exits_through_q0_with_its_sign() {
        let (p, cfg) = setup(20.0);
        for d0 in [2.0, -2.0] {
            let o = shoot(d0, &[0.0], &p, &cfg).unwrap();
            assert_eq!(o.kind, OutcomeKind::Exited);
            assert_eq!(o.exit_constraint, Some(Constraint::Q0));
            assert_eq!(o.sign_of(0), if d0 > 0.0 { 1 } else { -1 });
            assert!(o.exit_s - p.s0 < 3.0);
        }
    }

    #[test]
    fn boundary_data_exit_at_the_start() {
        let (p, cfg) = setup(20.0);
        let y = SimSolver::new(cfg.solver, p).unwrap().grid().y.clone();
        let map = mode_map(&p, &y, InitialQ::Transformed).unwrap();
        let b = p.a_amp / (p.s0 * p.s0);
        let (d0, d1) = map.invert(b, 0.0).unwrap();
        let o = shoot(d0, &[d1], &p, &cfg).unwrap();
        assert_eq!(o.exit_constraint, Some(Constraint::Q0));
        assert!(o.exit_s - p.s0 <= cfg.snapshot_every, "{}", o.exit_s);
    }

    #[test]
    fn opposite_d0_give_opposite_signs() {
        let (p, cfg) = setup(20.0);
        for d0 in [0.5, 1.0] {
            let a = shoot(d0, &[0.0], &p, &cfg).unwrap();
            let b = shoot(-d0, &[0.0], &p, &cfg).unwrap();
            assert_eq!(a.sign_of(0), -b.sign_of(0));
        }
    }

    #[test]
    fn q0_exits_are_transversal() {
        let (p, cfg) = setup(20.0);
        for (d0, d1) in [(0.25, 0.0), (-0.5, 0.25), (0.1, -0.1), (-0.2, 0.0)] {
            let o = shoot(d0, &[d1], &p, &cfg).unwrap();
            assert!(matches!(o.exit_constraint, Some(Constraint::Q0 | Constraint::Q1)), "{o:?}");
            assert_eq!(o.transversal(), Some(true), "{o:?}");
        }
    }

    #[test]
    fn exit_is_stable_under_step_halving() {
        let (p, cfg) = setup(20.0);
        let mut fine = cfg;
        fine.solver.ds *= 0.5;
        for d0 in [0.25, -0.5] {
            let a = shoot(d0, &[0.0], &p, &cfg).unwrap();
            let b = shoot(d0, &[0.0], &p, &fine).unwrap();
            assert_eq!(a.exit_constraint, b.exit_constraint);
            assert!((a.exit_s - b.exit_s).abs() <= 2.0 * cfg.solver.ds);
        }
    }

    #[test]
    fn refinement_improves_and_fails_without_enclosure() {
        let (p, cfg) = setup(20.0);
        let cell = Cell { d0: [-0.25, 0.0], d1: [-0.25, 0.0] };
        let r0 = refine(cell, 0, &p, &cfg).unwrap();
        assert_eq!((r0.d0, r0.d1[0]), cell.center());
        let r = refine(cell, 6, &p, &cfg).unwrap();
        assert!(r.monotone());
        assert!(r.exit_s > r0.exit_s);
        assert_eq!(r.levels.len(), 7);
        let bad = Cell { d0: [1.0, 2.0], d1: [1.0, 2.0] };
        assert!(matches!(refine(bad, 2, &p, &cfg), Err(Error::RefinementFailed { depth: 1, .. })));
    }

    #[test]
    fn radial_map_is_one_dimensional() {
        let p = SimParams { dim: 3, ..SimParams::default() };
        let cfg = ShootConfig::for_run(&p, 16.0);
        let map = classify_exit_map(5, &p, &cfg).unwrap();
        assert_eq!(map.outcomes.len(), 5);
        assert_eq!(map.winding, 0);
        assert_eq!(map.at(0, 0).sign_of(0), -1);
        assert_eq!(map.at(4, 0).sign_of(0), 1);
        assert!(best_cell(&map, cfg.s_end).is_some());
        assert!(shoot(0.0, &[0.0], &p, &cfg).is_err());
    }

    #[test]
    fn winding_of_simple_loops() {
        let circle: Vec<[f64; 2]> = (0..16)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 16.0;
                [a.cos(), a.sin()]
            })
            .collect();
        assert_eq!(winding_number(&circle), 1);
        let rev: Vec<[f64; 2]> = circle.iter().rev().copied().collect();
        assert_eq!(winding_number(&rev), -1);
        let off: Vec<[f64; 2]> = circle.iter().map(|v| [v[0] + 3.0, v[1]]).collect();
        assert_eq!(winding_number(&off), 0);
    }

    #[test]
    fn infinite_exit_round_trips_as_null() {
        let o = ShootOutcome {
            d0: 0.0,
            d1: vec![0.0],
            kind: OutcomeKind::Reached,
            exit_s: f64::INFINITY,
            exit_constraint: None,
            exit_sign: vec![],
            exit_modes: vec![],
            exit_rate: None,
            max_other_utilisation: 0.0,
            failure: None,
        };
        let j = serde_json::to_string(&o).unwrap();
        assert!(j.contains("\"exit_s\":null"));
        let back: ShootOutcome = serde_json::from_str(&j).unwrap();
        assert_eq!(back, o);
        assert_eq!(o.reach(30.0), 30.0);
        assert_eq!(o.transversal(), None);
        assert_eq!(o.sign_of(0), 0);
    }
}
