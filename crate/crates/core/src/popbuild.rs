//! Single-level reformulation: KKT conditions of the inner control problem
//! and the resulting polynomial optimization problem in y = [x; z; u; ζ].

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{structure, Result};
use crate::model::{
    lie_derivatives, pop_space, radii_at, BoundSet, CbfCandidate, ControlSet, SystemModel, CONTROL, DUAL, LIFT,
    PARAM, STATE,
};
use crate::polyalg::{Polynomial, VariableSpace};

/// KKT conditions of max_u L_g b·u s.t. c_i(u) ≤ 0.
#[derive(Clone, Debug)]
pub struct KktSystem {
    /// −L_g b_j + Σ_i ζ_i ∂c_i/∂u_j, one per control coordinate.
    pub stationarity: Vec<Polynomial>,
    /// ζ_i c_i(u).
    pub complementarity: Vec<Polynomial>,
    /// −c_i(u) ≥ 0.
    pub primal: Vec<Polynomial>,
    /// ζ_i ≥ 0.
    pub dual: Vec<Polynomial>,
}

/// Builds the KKT rows in `space`, which must contain the `u` and `zeta`
/// blocks and every variable of `lgb`.
pub fn kkt_system(cs: &ControlSet, lgb: &[Polynomial], space: &Arc<VariableSpace>) -> Result<KktSystem> {
    let m = cs.dim();
    if lgb.len() != m {
        return structure(format!("L_g b has {} entries, control has {m}", lgb.len()));
    }
    let l = cs.len();
    if space.block_range(CONTROL).map(|r| r.len()) != Some(m) || space.block_range(DUAL).map(|r| r.len()) != Some(l) {
        return structure("space lacks matching control or multiplier blocks");
    }
    let c: Vec<Polynomial> = cs.constraints.iter().map(|c| c.embed(space)).collect::<Result<_>>()?;
    let zeta: Vec<Polynomial> = (0..l)
        .map(|i| Ok(Polynomial::var(space, space.var(DUAL, i)?)))
        .collect::<Result<_>>()?;
    let mut stationarity = Vec::with_capacity(m);
    for (j, lj) in lgb.iter().enumerate() {
        let uj = space.var(CONTROL, j)?;
        let mut row = -lj.embed(space)?;
        for (ci, zi) in c.iter().zip(&zeta) {
            row = &row + &(zi * &ci.differentiate(uj));
        }
        stationarity.push(row);
    }
    let complementarity = c.iter().zip(&zeta).map(|(ci, zi)| zi * ci).collect();
    let primal = c.iter().map(|ci| -ci).collect();
    Ok(KktSystem {
        stationarity,
        complementarity,
        primal,
        dual: zeta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "theta", rename_all = "snake_case")]
pub enum PopMode {
    Fixed(Vec<f64>),
    Symbolic,
}

#[derive(Clone, Debug)]
pub struct Labeled {
    pub label: String,
    pub poly: Polynomial,
}

/// min ϕ(y) s.t. h_i(y) = 0, s_i(y) ≥ 0.
#[derive(Clone, Debug)]
pub struct StandardPop {
    pub space: Arc<VariableSpace>,
    pub objective: Polynomial,
    pub equalities: Vec<Labeled>,
    pub inequalities: Vec<Labeled>,
    pub mode: PopMode,
    /// Typical magnitude of each scalar, used to rescale before relaxing.
    pub scale: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopOptions {
    pub dual_bound: bool,
    pub aggregate_ball: bool,
}

impl Default for PopOptions {
    fn default() -> Self {
        PopOptions {
            dual_bound: true,
            aggregate_ball: false,
        }
    }
}

impl StandardPop {
    pub fn nvars(&self) -> usize {
        self.space.nvars()
    }

    pub fn max_degree(&self) -> usize {
        self.equalities
            .iter()
            .chain(&self.inequalities)
            .map(|c| c.poly.degree())
            .chain(std::iter::once(self.objective.degree()))
            .max()
            .unwrap_or(0)
    }

    /// Plain POP with unit scaling.
    pub fn new(
        space: &Arc<VariableSpace>,
        objective: Polynomial,
        equalities: Vec<Polynomial>,
        inequalities: Vec<Polynomial>,
    ) -> Result<Self> {
        let lab = |v: Vec<Polynomial>, p: &str| -> Result<Vec<Labeled>> {
            v.into_iter()
                .enumerate()
                .map(|(i, q)| {
                    Ok(Labeled {
                        label: format!("{p}{}", i + 1),
                        poly: q.embed(space)?,
                    })
                })
                .collect()
        };
        Ok(StandardPop {
            space: space.clone(),
            objective: objective.embed(space)?,
            equalities: lab(equalities, "h")?,
            inequalities: lab(inequalities, "s")?,
            mode: PopMode::Fixed(Vec::new()),
            scale: vec![1.0; space.nvars()],
        })
    }

    /// Largest violation of the constraints at `y`.
    pub fn violation(&self, y: &[f64]) -> f64 {
        let eq = self.equalities.iter().map(|c| c.poly.eval_dense(y).abs());
        let ineq = self.inequalities.iter().map(|c| (-c.poly.eval_dense(y)).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }

    /// Fixes the parameter block of a symbolic POP, dropping the parameter
    /// set rows.
    pub fn fix_theta(&self, theta: &[f64]) -> Result<StandardPop> {
        if self.mode != PopMode::Symbolic {
            return structure("POP is not parameterized");
        }
        let names: Vec<(String, usize)> = self
            .space
            .blocks()
            .iter()
            .filter(|b| b.name != PARAM)
            .map(|b| (b.name.clone(), b.dim))
            .collect();
        let target = VariableSpace::new(&names)?;
        let fix = |p: &Polynomial| p.fix_block(PARAM, theta)?.embed(&target);
        let keep = |v: &[Labeled]| -> Result<Vec<Labeled>> {
            v.iter()
                .filter(|c| !c.label.starts_with("theta"))
                .map(|c| {
                    Ok(Labeled {
                        label: c.label.clone(),
                        poly: fix(&c.poly)?,
                    })
                })
                .collect()
        };
        let prange = self.space.block_range(PARAM).unwrap_or(0..0);
        let scale = (0..self.nvars()).filter(|i| !prange.contains(i)).map(|i| self.scale[i]).collect();
        Ok(StandardPop {
            space: target.clone(),
            objective: fix(&self.objective)?,
            equalities: keep(&self.equalities)?,
            inequalities: keep(&self.inequalities)?,
            mode: PopMode::Fixed(theta.to_vec()),
            scale,
        })
    }

    /// Structured text dump.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        match &self.mode {
            PopMode::Fixed(t) => {
                let _ = writeln!(s, "mode fixed {t:?}");
            }
            PopMode::Symbolic => {
                let _ = writeln!(s, "mode symbolic");
            }
        }
        let _ = writeln!(s, "variables {}", self.space.scalar_names().join(" "));
        let _ = writeln!(s, "scale {:?}", self.scale);
        let _ = writeln!(s, "objective {}", self.objective);
        for c in &self.equalities {
            let _ = writeln!(s, "eq {} {}", c.label, c.poly);
        }
        for c in &self.inequalities {
            let _ = writeln!(s, "ineq {} {}", c.label, c.poly);
        }
        s
    }
}

/// Builds the verification POP; `theta = None` keeps θ symbolic and
/// appends the parameter set constraints.
pub fn build_verification_pop(
    model: &SystemModel,
    cbf: &CbfCandidate,
    theta: Option<&[f64]>,
    bounds: &BoundSet,
    opts: PopOptions,
) -> Result<StandardPop> {
    if let Some(t) = theta {
        if t.len() != cbf.k() {
            return structure(format!("θ has {} entries, parameter set has {}", t.len(), cbf.k()));
        }
    }
    if cbf.n() != model.n() {
        return structure("barrier and dynamics disagree on the state dimension");
    }
    let space = pop_space(model, cbf, true);
    let lie = lie_derivatives(model, cbf)?;
    let v = |name: &str, i: usize| -> Result<Polynomial> { Ok(Polynomial::var(&space, space.var(name, i)?)) };

    let mut objective = lie.lfb.embed(&space)?;
    for (j, lj) in lie.lgb.iter().enumerate() {
        objective = &objective + &(&lj.embed(&space)? * &v(CONTROL, j)?);
    }
    let mut eqs = Vec::new();
    if model.has_uncertainty() {
        let z = v(LIFT, 0)?;
        objective = &objective - &(&z * model.m_eps);
        let mut lift = z.pow(2);
        for lj in lie.ljb.as_ref().expect("uncertain model has J") {
            lift = &lift - &lj.embed(&space)?.pow(2);
        }
        eqs.push(Labeled {
            label: "lift".into(),
            poly: lift,
        });
    }
    eqs.push(Labeled {
        label: "boundary".into(),
        poly: cbf.b.embed(&space)?,
    });
    let kkt = kkt_system(&model.control, &lie.lgb, &space)?;
    let num = |v: Vec<Polynomial>, p: &str| -> Vec<Labeled> {
        let single = v.len() == 1;
        v.into_iter()
            .enumerate()
            .map(|(i, poly)| Labeled {
                label: if single { p.to_string() } else { format!("{p}{}", i + 1) },
                poly,
            })
            .collect()
    };
    eqs.extend(num(kkt.stationarity, "stationarity"));
    eqs.extend(num(kkt.complementarity, "complementarity"));
    let mut ineqs = num(kkt.primal, "control");
    ineqs.extend(num(kkt.dual, "multiplier"));
    for row in &bounds.rows {
        if !opts.dual_bound && row.label.starts_with("dual") {
            continue;
        }
        ineqs.push(Labeled {
            label: format!("bound_{}", row.label),
            poly: row.poly.clone(),
        });
    }
    if opts.aggregate_ball {
        let mut ball = Polynomial::constant(&space, bounds.radii.ball());
        let prange = space.block_range(PARAM).unwrap_or(0..0);
        for i in (0..space.nvars()).filter(|i| !prange.contains(i)) {
            ball = &ball - &Polynomial::var(&space, i).pow(2);
        }
        ineqs.push(Labeled {
            label: "bound_ball".into(),
            poly: ball,
        });
    }
    for (i, g) in cbf.theta.constraints(&space)?.into_iter().enumerate() {
        ineqs.push(Labeled {
            label: format!("theta{}", i + 1),
            poly: g,
        });
    }

    let radii = match theta {
        Some(t) => radii_at(model, cbf, bounds, t),
        None => bounds.radii,
    };
    let (tlo, thi) = cbf.theta.bounds();
    let floor = |r: f64| if r > 1e-8 { r } else { 1.0 };
    let scale: Vec<f64> = (0..space.nvars())
        .map(|i| match space.block_of(i) {
            STATE => floor(radii.x),
            LIFT => floor(radii.z),
            CONTROL => floor(radii.u),
            DUAL => floor(radii.zeta),
            _ => {
                let k = i - space.block_range(PARAM).map(|r| r.start).unwrap_or(0);
                floor(tlo[k].abs().max(thi[k].abs()))
            }
        })
        .collect();

    let sym = StandardPop {
        space,
        objective,
        equalities: eqs,
        inequalities: ineqs,
        mode: PopMode::Symbolic,
        scale,
    };
    match theta {
        Some(t) => sym.fix_theta(t),
        None => Ok(sym),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{circular_cbf, elliptical_cbf, vanderpol};
    use crate::model::{inner_solution, variable_bounds};

    #[test]
    fn kkt_box_example() {
        let cs = ControlSet::box_set(&[5.0]).unwrap();
        let sp = VariableSpace::new(&[("x", 2), ("u", 1), ("zeta", 1)]).unwrap();
        let lgb = Polynomial::parse(&sp, "-2*x1*x2").unwrap();
        let k = kkt_system(&cs, &[lgb], &sp).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        assert!(k.stationarity[0].max_coeff_diff(&p("2*x1*x2 + 2*zeta*u")) < 1e-15);
        assert!(k.complementarity[0].max_coeff_diff(&p("zeta*u^2 - 25*zeta")) < 1e-15);
        assert!(k.primal[0].max_coeff_diff(&p("25 - u^2")) < 1e-15);
        assert_eq!(k.dual[0], p("zeta"));
    }

    #[test]
    fn kkt_ellipsoid_example() {
        let cs = ControlSet::ellipsoid(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sp = VariableSpace::new(&[("u", 2), ("zeta", 1)]).unwrap();
        let lgb = [Polynomial::constant(&sp, 1.0), Polynomial::zero(&sp)];
        let k = kkt_system(&cs, &lgb, &sp).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        assert!(k.stationarity[0].max_coeff_diff(&p("-1 + 2*zeta*u1")) < 1e-15);
        assert!(k.stationarity[1].max_coeff_diff(&p("2*zeta*u2")) < 1e-15);
        assert_eq!(k.complementarity.len(), 1);
        assert_eq!(k.primal.len() + k.dual.len(), 2);
    }

    #[test]
    fn clean_pop_layout() {
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        let b = variable_bounds(&m, &c, None).unwrap();
        let pop = build_verification_pop(&m, &c, Some(&[0.1]), &b, PopOptions::default()).unwrap();
        assert_eq!(pop.space.scalar_names(), &["x1", "x2", "u", "zeta"]);
        let labels: Vec<&str> = pop.equalities.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["boundary", "stationarity", "complementarity"]);
        let labels: Vec<&str> = pop.inequalities.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["control", "multiplier", "bound_state", "bound_dual1"]);
        assert_eq!(pop.max_degree(), 4);
        assert!(pop.dump().contains("variables x1 x2 u zeta\n"));
    }

    #[test]
    fn feasibility_witness() {
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        let b = variable_bounds(&m, &c, None).unwrap();
        let pop = build_verification_pop(&m, &c, Some(&[1.1]), &b, PopOptions::default()).unwrap();
        // L_g b = 0 on the x1 axis: any admissible u with ζ = 0
        for u in [-5.0, -1.0, 0.0, 3.0] {
            let y = [1.1f64.sqrt(), 0.0, u, 0.0];
            assert!(pop.violation(&y) < 1e-9);
            assert!(pop.objective.eval_dense(&y).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_matches_closed_form() {
        let m = vanderpol(true).unwrap();
        let c = circular_cbf().unwrap();
        let b = variable_bounds(&m, &c, None).unwrap();
        for k in 0..40 {
            let theta = 0.05 * k as f64 + 0.01;
            let a = 1.3 * k as f64;
            let x = [theta.sqrt() * a.cos(), theta.sqrt() * a.sin()];
            let s = inner_solution(&m, &c, &x, &[theta]).unwrap();
            let pop = build_verification_pop(&m, &c, Some(&[theta]), &b, PopOptions::default()).unwrap();
            let y = [x[0], x[1], s.z.unwrap(), s.u[0], s.zeta[0]];
            assert!(pop.violation(&y) < 1e-9, "violation {}", pop.violation(&y));
            assert!((pop.objective.eval_dense(&y) - s.value).abs() < 1e-9);
        }
    }

    #[test]
    fn mode_consistency() {
        let m = vanderpol(true).unwrap();
        let c = elliptical_cbf().unwrap();
        let b = variable_bounds(&m, &c, None).unwrap();
        let sym = build_verification_pop(&m, &c, None, &b, PopOptions::default()).unwrap();
        assert_eq!(sym.space.scalar_names(), &["x1", "x2", "z", "u", "zeta", "t1", "t2", "t3"]);
        assert!(sym.inequalities.iter().any(|c| c.label.starts_with("theta")));
        let theta = [0.4, 0.6, 0.1];
        let a = sym.fix_theta(&theta).unwrap();
        let f = build_verification_pop(&m, &c, Some(&theta), &b, PopOptions::default()).unwrap();
        assert_eq!(a.objective, f.objective);
        assert_eq!(a.equalities.len(), f.equalities.len());
        assert_eq!(a.inequalities.len(), f.inequalities.len());
        for (p, q) in a.equalities.iter().chain(&a.inequalities).zip(f.equalities.iter().chain(&f.inequalities)) {
            assert_eq!(p.label, q.label);
            assert_eq!(p.poly, q.poly);
        }
    }

    #[test]
    fn clean_model_has_no_lift() {
        let m = vanderpol(false).unwrap();
        let c = elliptical_cbf().unwrap();
        let b = variable_bounds(&m, &c, None).unwrap();
        let sym = build_verification_pop(&m, &c, None, &b, PopOptions::default()).unwrap();
        assert!(!sym.space.has_block(LIFT) || sym.space.block_range(LIFT).unwrap().is_empty());
        assert!(sym.equalities.iter().all(|c| c.label != "lift"));
        let no_dual = build_verification_pop(&m, &c, None, &b, PopOptions { dual_bound: false, aggregate_ball: true }).unwrap();
        assert!(no_dual.inequalities.iter().all(|c| !c.label.starts_with("bound_dual")));
        assert!(no_dual.inequalities.iter().any(|c| c.label == "bound_ball"));
    }
}
