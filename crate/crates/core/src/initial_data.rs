//! The two-parameter family of initial data and its mode map.

use serde::{Deserialize, Serialize};

use crate::hermite::{chi0, chi_cutoff, decompose, grad_perp, ModeDecomposition};
use crate::profiles::{final_profile, psi_unchecked, to_similarity, PhysicalField, SimParams, SimilarityField};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub d0: f64,
    /// Length N; only the first entry is used (1D), radial runs need zeros.
    pub d1: Vec<f64>,
    pub params: SimParams,
    pub blend_lo: f64,
    pub blend_hi: f64,
}

impl InitialDataSpec {
    pub fn new(d0: f64, d1: f64, params: SimParams) -> Self {
        let mut v = vec![0.0; params.dim];
        v[0] = d1;
        InitialDataSpec { d0, d1: v, params, blend_lo: 0.2, blend_hi: 1.0 }
    }

    /// `t₀ = T − e^{−s₀}`.
    pub fn t0(&self) -> f64 {
        self.params.t0()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.d1.len() != self.params.dim {
            return Err(Error::InvalidParam { name: "d1", reason: "length must equal N".into() });
        }
        if self.params.dim > 1 && self.d1.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParam {
                name: "d1",
                reason: "radial runs need d1 = 0".into(),
            });
        }
        if !(0.0 < self.blend_lo && self.blend_lo < self.blend_hi && self.blend_hi <= 1.0) {
            return Err(Error::InvalidParam {
                name: "blend",
                reason: "need 0 < blend_lo < blend_hi <= 1".into(),
            });
        }
        Ok(())
    }
}

fn smoothstep(t: f64) -> (f64, f64) {
    let t = t.clamp(0.0, 1.0);
    (t * t * t * (10.0 + t * (-15.0 + 6.0 * t)), 30.0 * t * t * (1.0 - t) * (1.0 - t))
}

/// Inner branch below `blend_lo`, `−ln(1 + a x²)` above `blend_hi`, quintic
/// smoothstep in between.
pub fn u_hat_star(x_norm: f64, spec: &InitialDataSpec) -> Result<f64> {
    if !(x_norm > 0.0) {
        return Err(Error::Domain(format!("u_hat_star needs |x| > 0, got {x_norm}")));
    }
    let a = spec.params.a_far;
    let outer = -(a * x_norm * x_norm).ln_1p();
    if x_norm >= spec.blend_hi {
        return Ok(outer);
    }
    let inner = final_profile(x_norm, spec.params.alpha)?;
    if x_norm <= spec.blend_lo {
        return Ok(inner);
    }
    let (w, _) = smoothstep((x_norm - spec.blend_lo) / (spec.blend_hi - spec.blend_lo));
    Ok((1.0 - w) * inner + w * outer)
}

/// `χ₁(x,t₀) = χ₀(|x|/(|ln(T−t₀)|√(T−t₀)))`.
pub fn chi_1(x_norm: f64, t0: f64, p: &SimParams) -> f64 {
    let left = p.t_blow - t0;
    chi0(x_norm / (left.ln().abs() * left.sqrt()))
}

/// Evaluates the initial datum on physical nodes (signed in 1D, radii
/// otherwise).
pub fn build_initial_u(spec: &InitialDataSpec, x_nodes: &[f64]) -> Result<PhysicalField> {
    spec.validate()?;
    let p = &spec.params;
    let t0 = spec.t0();
    let s0 = p.s0;
    let scale = (0.5 * s0).exp();
    let amp = p.a_amp / (s0 * s0);
    let mut u = Vec::with_capacity(x_nodes.len());
    for (node, &x) in x_nodes.iter().enumerate() {
        let r = x.abs();
        let c1 = chi_1(r, t0, p);
        let mut v = 0.0;
        if c1 < 1.0 {
            v += (1.0 - c1) * u_hat_star(r, spec)?;
        }
        if c1 > 0.0 {
            let y = x * scale;
            let pert = amp * (spec.d0 + spec.d1[0] * y) * chi_cutoff(16.0 * y.abs(), s0, p.k0);
            let arg = pert + psi_unchecked(y.abs(), s0, p);
            if !(arg > 0.0) {
                return Err(Error::Construction { node, x, arg });
            }
            v += (s0 + arg.ln()) * c1;
        }
        u.push(v);
    }
    Ok(PhysicalField { x_nodes: x_nodes.to_vec(), u_values: u, t: t0 })
}

/// The initial datum in similarity variables, built on `x = y e^{−s₀/2}`.
pub fn initial_similarity(spec: &InitialDataSpec, y_nodes: &[f64]) -> Result<SimilarityField> {
    let k = (-0.5 * spec.params.s0).exp();
    let x: Vec<f64> = y_nodes.iter().map(|y| y * k).collect();
    let mut sim = to_similarity(&build_initial_u(spec, &x)?, &spec.params, 0.0)?;
    // Keep the exact solver nodes rather than the round-tripped ones.
    sim.y_nodes = y_nodes.to_vec();
    sim.s = spec.params.s0;
    Ok(sim)
}

/// `Q̄(y) = (A/s₀²)(d₀ + d₁·y) χ(16y, s₀) e^{χ₁(x,t₀)}` with `x = y e^{−s₀/2}`.
pub fn build_initial_q(spec: &InitialDataSpec, y_nodes: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    let p = &spec.params;
    let s0 = p.s0;
    let amp = p.a_amp / (s0 * s0);
    let t0 = spec.t0();
    let k = (-0.5 * s0).exp();
    Ok(y_nodes
        .iter()
        .map(|&y| {
            amp * (spec.d0 + spec.d1[0] * y)
                * chi_cutoff(16.0 * y.abs(), s0, p.k0)
                * chi_1((y * k).abs(), t0, p).exp()
        })
        .collect())
}

/// `Q` of the transformed datum, `e^W − ψ_α(·, s₀)`.
pub fn transformed_initial_q(spec: &InitialDataSpec, y_nodes: &[f64]) -> Result<Vec<f64>> {
    let sim = initial_similarity(spec, y_nodes)?;
    Ok(crate::profiles::q_from_w(&sim, &spec.params))
}

/// The map `(d₀, d₁) ↦ (Q̄₀, Q̄₁)`, affine: `offset + matrix·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMap {
    pub offset: [f64; 2],
    /// Row-major, rows (Q̄₀, Q̄₁), columns (d₀, d₁).
    pub matrix: [[f64; 2]; 2],
}

impl ModeMap {
    pub fn apply(&self, d0: f64, d1: f64) -> [f64; 2] {
        [
            self.offset[0] + self.matrix[0][0] * d0 + self.matrix[0][1] * d1,
            self.offset[1] + self.matrix[1][0] * d0 + self.matrix[1][1] * d1,
        ]
    }

    pub fn determinant(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }

    /// 2-norm condition number of the linear part.
    pub fn condition_number(&self) -> f64 {
        let [[a, b], [c, d]] = self.matrix;
        let t = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
        ((t + disc) / (t - disc)).sqrt()
    }

    /// Preimage of `(q0, q1)`.
    pub fn invert(&self, q0: f64, q1: f64) -> Option<(f64, f64)> {
        let det = self.determinant();
        if det == 0.0 {
            return None;
        }
        let (r0, r1) = (q0 - self.offset[0], q1 - self.offset[1]);
        let [[a, b], [c, d]] = self.matrix;
        Some(((d * r0 - b * r1) / det, (a * r1 - c * r0) / det))
    }
}

/// Which version of `Q(s₀)` to project.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialQ {
    /// The literal `Q̄` formula.
    Literal,
    /// `e^W − ψ` of the transformed physical datum.
    Transformed,
}

pub fn initial_q(spec: &InitialDataSpec, y: &[f64], which: InitialQ) -> Result<Vec<f64>> {
    match which {
        InitialQ::Literal => build_initial_q(spec, y),
        InitialQ::Transformed => transformed_initial_q(spec, y),
    }
}

/// Measures the mode map from three evaluations.
pub fn mode_map(params: &SimParams, y: &[f64], which: InitialQ) -> Result<ModeMap> {
    let s0 = params.s0;
    let modes = |d0: f64, d1: f64| -> Result<[f64; 2]> {
        let spec = InitialDataSpec::new(d0, d1, *params);
        let md = decompose(y, &initial_q(&spec, y, which)?, s0, params)?;
        Ok([md.q0, md.q1[0]])
    };
    let o = modes(0.0, 0.0)?;
    let e0 = modes(1.0, 0.0)?;
    let e1 = if params.dim == 1 { modes(0.0, 1.0)? } else { o };
    Ok(ModeMap {
        offset: o,
        matrix: [[e0[0] - o[0], e1[0] - o[0]], [e0[1] - o[1], e1[1] - o[1]]],
    })
}

/// Decomposition of `Q(s₀)` including `(∇Q)_⊥`.
pub fn initial_modes(spec: &InitialDataSpec, y: &[f64], which: InitialQ) -> Result<ModeDecomposition> {
    let p = &spec.params;
    let q = initial_q(spec, y, which)?;
    let mut md = decompose(y, &q, p.s0, p)?;
    let h = y[1] - y[0];
    let n = y.len();
    let g: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                if p.dim > 1 {
                    0.0
                } else {
                    (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * h)
                }
            } else if i + 1 == n {
                (3.0 * q[i] - 4.0 * q[i - 1] + q[i - 2]) / (2.0 * h)
            } else {
                (q[i + 1] - q[i - 1]) / (2.0 * h)
            }
        })
        .collect();
    md.grad_q_perp = grad_perp(y, &g, p.s0, p)?;
    Ok(md)
}

/// The strict initial bounds on the non-expanding components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialBounds {
    /// `|Q̄₀ − A d₀/s₀²|` and `|Q̄₁ − A d₁/s₀²|`.
    pub map_defect: [f64; 2],
    pub q2_max: f64,
    pub q2_bound: f64,
    /// `sup |Q̄₋|/(1+|y|³)` against `1/s₀²`.
    pub q_minus_weighted: f64,
    pub grad_perp_weighted: f64,
    pub weighted_bound: f64,
    pub q_e_sup: f64,
}

impl InitialBounds {
    pub fn strict(&self) -> bool {
        self.q2_max < self.q2_bound
            && self.q_minus_weighted < self.weighted_bound
            && self.grad_perp_weighted < self.weighted_bound
    }
}

pub fn initial_bounds(spec: &InitialDataSpec, y: &[f64], which: InitialQ) -> Result<InitialBounds> {
    let p = &spec.params;
    let s0 = p.s0;
    let md = initial_modes(spec, y, which)?;
    let amp = p.a_amp / (s0 * s0);
    let reach = 2.0 * p.k0 * s0.sqrt();
    let weighted = |f: &[f64]| {
        y.iter()
            .zip(f)
            .filter(|(y, _)| y.abs() <= reach)
            .map(|(y, v)| v.abs() / (1.0 + y.abs().powi(3)))
            .fold(0.0, f64::max)
    };
    Ok(InitialBounds {
        map_defect: [(md.q0 - amp * spec.d0).abs(), (md.q1[0] - amp * spec.d1[0]).abs()],
        q2_max: md.q2.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())),
        q2_bound: s0.ln() / (s0 * s0),
        q_minus_weighted: weighted(&md.q_minus),
        grad_perp_weighted: weighted(&md.grad_q_perp),
        weighted_bound: 1.0 / (s0 * s0),
        q_e_sup: md.q_e.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim_solver::SimGrid;
    use proptest::prelude::*;

    fn spec(alpha: f64) -> InitialDataSpec {
        InitialDataSpec::new(0.0, 0.0, SimParams { alpha, ..SimParams::default() })
    }

    fn grid() -> Vec<f64> {
        SimGrid::new(40.0, 0.05, 1).unwrap().y
    }

    #[test]
    fn u_hat_star_examples() {
        let s = spec(0.0);
        let v = u_hat_star(0.05, &s).unwrap();
        assert!((v - (8.0 * 0.05f64.ln().abs() / 0.0025).ln()).abs() < 1e-12);
        assert!((v - 9.168).abs() < 1e-3);
        assert!((u_hat_star(2.0, &s).unwrap() + 5.0f64.ln()).abs() < 1e-14);
        assert!(u_hat_star(0.0, &s).is_err());
    }

    #[test]
    fn u_hat_star_blend_is_c1() {
        let s = spec(1.0);
        for x in [s.blend_lo, s.blend_hi - 1e-7] {
            let e = 1e-7;
            let left = u_hat_star(x - e, &s).unwrap();
            let mid = u_hat_star(x, &s).unwrap();
            let right = u_hat_star(x + e, &s).unwrap();
            assert!((left - mid).abs() < 1e-5 && (right - mid).abs() < 1e-5);
        }
        // Slopes across the joins, from matched one-sided differences.
        let lo = s.blend_lo;
        let d = |a: f64, b: f64| (u_hat_star(b, &s).unwrap() - u_hat_star(a, &s).unwrap()) / (b - a);
        for x in [lo, s.blend_hi] {
            let h = 1e-7;
            assert!((d(x - 2.0 * h, x - h) - d(x + h, x + 2.0 * h)).abs() < 1e-4, "{x}");
        }
        // Exactly at the inner join the blended value equals the inner formula.
        let inner = final_profile(lo, 1.0).unwrap();
        assert!((u_hat_star(lo, &s).unwrap() - inner).abs() < 1e-10);
        assert!((u_hat_star(s.blend_hi, &s).unwrap() + 2.0f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn chi_1_plateau_and_support() {
        let p = SimParams::default();
        let t0 = p.t0();
        let l = p.s0 * (-p.s0 / 2.0).exp();
        assert_eq!(chi_1(0.5 * l, t0, &p), 1.0);
        assert_eq!(chi_1(2.5 * l, t0, &p), 0.0);
        let mut last = 1.0;
        for k in 0..200 {
            let v = chi_1(l * (1.0 + k as f64 / 200.0), t0, &p);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn physical_datum_examples() {
        for alpha in [0.0, 1.0] {
            let s = spec(alpha);
            let p = s.params;
            let x = vec![-3.0, -1.0, 0.0, 1.0, 1.5];
            let u = build_initial_u(&s, &x).unwrap();
            for (xi, ui) in x.iter().zip(&u.u_values) {
                if xi.abs() >= 1.0 {
                    assert!((ui + (1.0 + xi * xi).ln()).abs() < 1e-14);
                }
            }
            let want = p.s0 + 1.0 / ((2.0 + 2.0 * alpha) * p.s0);
            assert!((u.u_values[2] - want).abs() < 1e-13);
            assert_eq!(u.t, p.t0());
        }
    }

    #[test]
    fn construction_error_names_the_node() {
        let mut s = spec(1.0);
        s.d0 = -1e4;
        let err = build_initial_u(&s, &[0.3, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Construction { node: 1, .. }), "{err:?}");
    }

    #[test]
    fn zero_parameters_give_zero_literal_q() {
        let q = build_initial_q(&spec(1.0), &grid()).unwrap();
        assert!(q.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn literal_and_transformed_q_differ_by_the_exponential_factor() {
        // Where χ₁ ≡ 1 the transform gives the perturbation without e^{χ₁}.
        let mut s = spec(1.0);
        s.d0 = 0.7;
        s.d1 = vec![-0.3];
        let y = grid();
        let lit = build_initial_q(&s, &y).unwrap();
        let tr = transformed_initial_q(&s, &y).unwrap();
        for i in 0..y.len() {
            if y[i].abs() <= s.params.s0 {
                assert!((lit[i] - std::f64::consts::E * tr[i]).abs() < 1e-8, "{}", y[i]);
            }
        }
    }

    #[test]
    fn mode_map_is_affine_and_invertible() {
        let y = grid();
        let p = SimParams::default();
        for which in [InitialQ::Literal, InitialQ::Transformed] {
            let m = mode_map(&p, &y, which).unwrap();
            assert!(m.determinant().abs() > 0.0);
            assert!(m.condition_number().is_finite());
            let s = InitialDataSpec::new(1.3, -0.4, p);
            let md = decompose(&y, &initial_q(&s, &y, which).unwrap(), p.s0, &p).unwrap();
            let pred = m.apply(1.3, -0.4);
            assert!((pred[0] - md.q0).abs() < 1e-12 && (pred[1] - md.q1[0]).abs() < 1e-12);
            let (d0, d1) = m.invert(md.q0, md.q1[0]).unwrap();
            assert!((d0 - 1.3).abs() < 1e-9 && (d1 + 0.4).abs() < 1e-9);
            // Odd and even parts decouple.
            assert!(m.matrix[0][1].abs() < 1e-14 && m.matrix[1][0].abs() < 1e-14);
        }
    }

    #[test]
    fn literal_q_has_no_outer_part() {
        let y = grid();
        let mut s = spec(1.0);
        s.d0 = 1.0;
        let b = initial_bounds(&s, &y, InitialQ::Literal).unwrap();
        assert_eq!(b.q_e_sup, 0.0);
    }

    /// Simpson rule for `∫ f(y) χ(16y, s₀) ρ(y) dy` over the cutoff support.
    fn cutoff_moment(p: &SimParams, f: impl Fn(f64) -> f64) -> f64 {
        let reach = p.k0 * p.s0.sqrt() / 8.0;
        let n = 20_000;
        let h = 2.0 * reach / n as f64;
        (0..=n)
            .map(|k| {
                let y = -reach + k as f64 * h;
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * f(y) * chi_cutoff(16.0 * y.abs(), p.s0, p.k0) * crate::hermite::rho_weight(y.abs(), 1)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn mode_map_coefficients_match_cutoff_moments() {
        let y = grid();
        let p = SimParams::default();
        let amp = p.a_amp / (p.s0 * p.s0);
        let m0 = cutoff_moment(&p, |_| 1.0);
        let m1 = cutoff_moment(&p, |y| y * y) / 2.0;
        let tr = mode_map(&p, &y, InitialQ::Transformed).unwrap();
        assert!((tr.matrix[0][0] / amp - m0).abs() < 1e-6, "{} {m0}", tr.matrix[0][0] / amp);
        assert!((tr.matrix[1][1] / amp - m1).abs() < 1e-6);
        let lit = mode_map(&p, &y, InitialQ::Literal).unwrap();
        let e = std::f64::consts::E;
        assert!((lit.matrix[0][0] / amp - e * m0).abs() < 1e-6);
        assert!((lit.matrix[1][1] / amp - e * m1).abs() < 1e-6);
        // The cutoff χ(16y, s₀) keeps |y| ≲ 2, so neither is the identity here.
        assert!(m0 < 0.75 && m1 < 0.25);
    }

    proptest! {
        #[test]
        fn u_hat_star_is_finite(x in 1e-8f64..10.0, alpha in -0.5f64..3.0) {
            let s = spec(alpha);
            prop_assert!(u_hat_star(x, &s).unwrap().is_finite());
        }

        #[test]
        fn transform_is_linear_in_parameters(d0 in -2.0f64..2.0, d1 in -2.0f64..2.0) {
            let y: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.05).collect();
            let p = SimParams::default();
            let base = transformed_initial_q(&InitialDataSpec::new(0.0, 0.0, p), &y).unwrap();
            let q = transformed_initial_q(&InitialDataSpec::new(d0, d1, p), &y).unwrap();
            let amp = p.a_amp / (p.s0 * p.s0);
            for i in 0..y.len() {
                let want = amp * (d0 + d1 * y[i]) * chi_cutoff(16.0 * y[i].abs(), p.s0, p.k0);
                prop_assert!((q[i] - base[i] - want).abs() < 1e-12);
            }
        }
    }
}
