//! Command dispatch.

use std::fs;
use std::path::Path;
use std::time::Instant;

use blowup_core::initial_data::{build_initial_u, initial_similarity, InitialDataSpec};
use blowup_core::phys_solver::{
    evolve_physical, final_profile_extract, interp_cubic, PhysGrid, PhysTrajectory, StopReason,
};
use blowup_core::profiles::final_profile;
use blowup_core::reduced_ode::{check_mode_odes, integrate_modes, log_log_slope};
use blowup_core::shooting::{best_cell, classify_exit_map, refine, shoot, ShootConfig};
use blowup_core::sim_solver::{residual_r, SimSolver, Snapshot, Trajectory};
use blowup_core::trap::{check_d1, Constraint};
use blowup_core::Error;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::output::{write_json, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_TRAP: i32 = 4;

/// What a command produced, before the summary is written.
struct Done {
    code: i32,
    result: Value,
}

fn fail(e: Error) -> (i32, String) {
    let code = match e {
        Error::InvalidParam { .. } | Error::Domain(_) | Error::OutOfRange(_) => EXIT_INVALID,
        _ => EXIT_SOLVER,
    };
    (code, e.to_string())
}

fn io_fail(e: std::io::Error) -> (i32, String) {
    (EXIT_SOLVER, format!("i/o: {e}"))
}

fn spec(cfg: &RunConfig) -> InitialDataSpec {
    let mut s = InitialDataSpec::new(cfg.d0, 0.0, cfg.params());
    s.d1 = cfg.d1_vec();
    s
}

/// Similarity run from the constructed data. With `enforce_trap` it stops at
/// the first snapshot outside the spectral box and reports that exit.
fn sim_run(cfg: &RunConfig, enforce_trap: bool) -> Result<(Trajectory, Option<(f64, Constraint)>), Error> {
    let p = cfg.params();
    let mut solver = SimSolver::new(cfg.solver(), p)?;
    let y = solver.grid().y.clone();
    let init = initial_similarity(&spec(cfg), &y)?;
    let mut exit = None;
    let tr = solver.evolve_until(&init, cfg.s_end, cfg.snapshot_every, |snap| {
        if !enforce_trap {
            return true;
        }
        let rep = check_d1(&snap.modes, &y, snap.s, &p);
        if rep.in_set {
            return true;
        }
        exit = rep.first_violation.map(|c| (snap.s, c));
        false
    })?;
    Ok((tr, exit))
}

fn phys_run(cfg: &RunConfig) -> Result<PhysTrajectory, Error> {
    let p = cfg.params();
    let grid = PhysGrid::default_for(p.dim);
    let init = build_initial_u(&spec(cfg), &grid.nodes)?;
    evolve_physical(&init, &grid, p.t_blow - cfg.theta_end, &p, &cfg.phys())
}

fn mode_header(n: usize) -> Vec<String> {
    let mut h = vec!["Q0".to_string()];
    h.extend((1..=n).map(|i| format!("Q1_{i}")));
    for i in 1..=n {
        h.extend((1..=n).map(|j| format!("Q2_{i}{j}")));
    }
    h
}

fn mode_row(s: &Snapshot) -> Vec<f64> {
    let m = &s.modes;
    let mut r = vec![m.q0];
    r.extend(&m.q1);
    for row in &m.q2 {
        r.extend(row);
    }
    r
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let (tr, exit) = sim_run(cfg, cfg.enforce_trap).map_err(fail)?;
    let mut header: Vec<String> =
        ["s", "sup_w", "sup_q", "profile_err", "profile_grad_err"].map(String::from).to_vec();
    header.extend(mode_header(cfg.dim));
    let mut t = Table::new(header);
    for s in &tr.snapshots {
        let mut r = vec![s.s, s.sup_w, s.sup_q, s.profile_err, s.profile_grad_err];
        r.extend(mode_row(s));
        t.push(r);
    }
    t.write(&out.join("snapshots.csv")).map_err(io_fail)?;
    let mut w = Table::new(["y", "w"]);
    for (y, v) in tr.final_state.y_nodes.iter().zip(&tr.final_state.w_values) {
        w.push(vec![*y, *v]);
    }
    w.write(&out.join("final_w.csv")).map_err(io_fail)?;
    let result = json!({
        "s_reached": tr.final_state.s,
        "steps": tr.steps,
        "snapshots": tr.snapshots.len(),
        "trap_exit": exit.map(|(s, c)| json!({"s": s, "constraint": c})),
    });
    Ok(Done { code: if exit.is_some() { EXIT_TRAP } else { EXIT_OK }, result })
}

fn stop_code(t: &PhysTrajectory) -> i32 {
    if t.stop == StopReason::Reached {
        EXIT_OK
    } else {
        EXIT_SOLVER
    }
}

fn simulate_physical(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let tr = phys_run(cfg).map_err(fail)?;
    let band = tr.rate_band();
    let mut t = Table::new(["theta", "u0_plus_ln_theta"]);
    for (th, v) in &band {
        t.push(vec![*th, *v]);
    }
    t.write(&out.join("rate_band.csv")).map_err(io_fail)?;
    let mut u = Table::new(["x", "u"]);
    for (x, v) in tr.grid.nodes.iter().zip(&tr.last().u) {
        u.push(vec![*x, *v]);
    }
    u.write(&out.join("final_u.csv")).map_err(io_fail)?;
    let vals = band.iter().map(|b| b.1);
    let lo = vals.clone().fold(f64::INFINITY, f64::min);
    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
    let result = json!({
        "stop": tr.stop,
        "steps": tr.steps,
        "frames": tr.frames.len(),
        "theta_last": tr.last().theta,
        "rate_band": [lo, hi],
    });
    Ok(Done { code: stop_code(&tr), result })
}

fn shoot_cmd(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let sc = ShootConfig { s_end: cfg.s_end, snapshot_every: cfg.snapshot_every, solver: cfg.solver() };
    let o = shoot(cfg.d0, &cfg.d1_vec(), &cfg.params(), &sc).map_err(fail)?;
    write_json(&out.join("outcome.json"), &o).map_err(io_fail)?;
    let result = serde_json::to_value(&o).map_err(|e| (EXIT_SOLVER, e.to_string()))?;
    Ok(Done { code: EXIT_OK, result })
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let p = cfg.params();
    let sc = ShootConfig { s_end: cfg.s_end, snapshot_every: cfg.snapshot_every, solver: cfg.solver() };
    let map = classify_exit_map(cfg.grid_res, &p, &sc).map_err(fail)?;
    write_json(&out.join("sweep.json"), &json!({"outcomes": map.outcomes, "winding": map.winding}))
        .map_err(io_fail)?;
    let mut result = json!({"winding": map.winding, "shots": map.outcomes.len()});
    if cfg.refine_depth > 0 {
        let cell = best_cell(&map, cfg.s_end)
            .ok_or((EXIT_SOLVER, "no cell of the sweep encloses opposite exit signs".to_string()))?;
        let r = refine(cell, cfg.refine_depth, &p, &sc).map_err(fail)?;
        write_json(&out.join("refinement.json"), &r).map_err(io_fail)?;
        result["refinement"] = json!({"d0": r.d0, "d1": r.d1, "exit_s": r.exit_s});
    }
    Ok(Done { code: EXIT_OK, result })
}

fn modes(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let (tr, _) = sim_run(cfg, false).map_err(fail)?;
    let mut header = vec!["s".to_string()];
    header.extend(mode_header(cfg.dim));
    let mut t = Table::new(header);
    for s in &tr.snapshots {
        let mut r = vec![s.s];
        r.extend(mode_row(s));
        t.push(r);
    }
    t.write(&out.join("modes.csv")).map_err(io_fail)?;
    let md: Vec<_> = tr.snapshots.iter().map(|s| s.modes.clone()).collect();
    let rep = check_mode_odes(&md, &cfg.params()).map_err(fail)?;
    let mut r = Table::new(["s", "r0", "r1", "r2"]);
    for i in 0..rep.s.len() {
        r.push(vec![rep.s[i], rep.r0[i], rep.r1[i], rep.r2[i]]);
    }
    r.write(&out.join("mode_residuals.csv")).map_err(io_fail)?;
    let result = json!({"sup_r0": rep.sup0, "sup_r1": rep.sup1, "sup_r2": rep.sup2});
    Ok(Done { code: EXIT_OK, result })
}

fn residual(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let p = cfg.params();
    let n = cfg.residual_samples - 1;
    let mut t = Table::new(["s", "sup_abs_r", "s_times_sup_abs_r"]);
    for &s in &cfg.residual_s {
        let ymax = 30.0 * s.sqrt();
        let sup = (0..=n).map(|k| residual_r(ymax * k as f64 / n as f64, s, &p).abs()).fold(0.0, f64::max);
        t.push(vec![s, sup, s * sup]);
    }
    t.write(&out.join("residual.csv")).map_err(io_fail)?;
    Ok(Done { code: EXIT_OK, result: json!({"rows": t.len()}) })
}

fn verify_profile(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let (tr, _) = sim_run(cfg, false).map_err(fail)?;
    let from = cfg.fit_from();
    let mut t = Table::new(["s", "sup_err_value", "sup_err_grad", "fitted_slope"]);
    let (mut s, mut e, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for snap in &tr.snapshots {
        let slope = if snap.s >= from - 1e-9 {
            s.push(snap.s);
            e.push(snap.profile_err);
            g.push(snap.profile_grad_err);
            if s.len() >= 3 {
                log_log_slope(&s, &e)
            } else {
                f64::NAN
            }
        } else {
            f64::NAN
        };
        t.push(vec![snap.s, snap.profile_err, snap.profile_grad_err, slope]);
    }
    t.write(&out.join("verify_profile.csv")).map_err(io_fail)?;
    let fit = |v: &[f64]| if s.len() >= 3 { Some(log_log_slope(&s, v)) } else { None };
    let result = json!({"fit_from": from, "slope_value": fit(&e), "slope_grad": fit(&g)});
    Ok(Done { code: EXIT_OK, result })
}

fn final_profile_cmd(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let tr = phys_run(cfg).map_err(fail)?;
    if tr.stop != StopReason::Reached {
        return Err((EXIT_SOLVER, format!("physical run stopped early: {:?}", tr.stop)));
    }
    let fp = final_profile_extract(&tr, cfg.r_min).map_err(fail)?;
    let mut t = Table::new(["x", "u", "du", "profile", "err"]);
    for i in 0..fp.x.len() {
        let prof = final_profile(fp.x[i].abs(), cfg.alpha).unwrap_or(f64::NAN);
        t.push(vec![fp.x[i], fp.u[i], fp.du[i], prof, fp.u[i] - prof]);
    }
    t.write(&out.join("final_profile.csv")).map_err(io_fail)?;
    let last = &tr.last().u;
    let sup_err = (0..=40)
        .map(|k| 10f64.powf(-2.0 + k as f64 / 40.0))
        .filter_map(|x| {
            let (u, _, _) = interp_cubic(&tr.grid.nodes, last, x)?;
            Some((u - final_profile(x, cfg.alpha).ok()?).abs())
        })
        .fold(0.0, f64::max);
    let result = json!({
        "theta_last": fp.theta_last,
        "cauchy_diff": fp.cauchy_diff,
        "drift_from_start": fp.drift_from_start,
        "sup_err_1e-2_1e-1": sup_err,
    });
    Ok(Done { code: EXIT_OK, result })
}

fn ode(cfg: &RunConfig, out: &Path) -> Result<Done, (i32, String)> {
    let p = cfg.params();
    let tr = integrate_modes(cfg.w0_init, cfg.w2_init(), cfg.s0, cfg.ode_s_end, &p).map_err(fail)?;
    let mut t = Table::new(["s", "W0", "W2", "s*W2"]);
    for i in 0..tr.s_values.len() {
        let (s, w2) = (tr.s_values[i], tr.w2_values[i]);
        t.push(vec![s, tr.w0_values[i], w2, s * w2]);
    }
    t.write(&out.join("ode.csv")).map_err(io_fail)?;
    let result = json!({
        "diverged": tr.diverged,
        "s_last": tr.s_values.last(),
        "steps": tr.steps,
    });
    Ok(Done { code: EXIT_OK, result })
}

/// Runs `cfg.command`, writes its data files and `summary.json` into
/// `cfg.output_dir`, and returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    if let Err(e) = cfg.validate() {
        log::error!("{e}");
        return EXIT_INVALID;
    }
    let out = cfg.output_dir.as_path();
    if let Err(e) = fs::create_dir_all(out) {
        log::error!("cannot create {}: {e}", out.display());
        return EXIT_SOLVER;
    }
    log::info!("{} -> {}", cfg.command.name(), out.display());
    let start = Instant::now();
    let done = match cfg.command {
        Command::Simulate => simulate(cfg, out),
        Command::SimulatePhysical => simulate_physical(cfg, out),
        Command::Shoot => shoot_cmd(cfg, out),
        Command::Sweep => sweep(cfg, out),
        Command::Modes => modes(cfg, out),
        Command::Residual => residual(cfg, out),
        Command::VerifyProfile => verify_profile(cfg, out),
        Command::FinalProfile => final_profile_cmd(cfg, out),
        Command::Ode => ode(cfg, out),
    };
    let (code, result, error) = match done {
        Ok(d) => (d.code, d.result, None),
        Err((code, msg)) => {
            log::error!("{msg}");
            (code, Value::Null, Some(msg))
        }
    };
    let summary = json!({
        "command": cfg.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "exit_code": code,
        "error": error,
        "result": result,
        "wall_clock_s": start.elapsed().as_secs_f64(),
    });
    if let Err(e) = write_json(&out.join("summary.json"), &summary) {
        log::error!("cannot write summary: {e}");
        return EXIT_SOLVER;
    }
    log::info!("exit code {code}");
    code
}
