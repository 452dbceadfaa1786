//! Built-in scenarios: typed parameters with defaults, and runners producing a
//! residual report plus artifacts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::suites::{self, cartan};
use super::{Bound, CliError, ResidualReport};
use crate::dynamics::{double_duality, duality_run, rigid_body_pendulum, CollectiveSpace, DualityReport, Inertia, SigmaOperator};
use crate::extension::{check_alpha_condition, Cocycle};
use crate::groups::DoubleGroup;
use crate::hamspaces::MomentumTag;
use crate::liecore::{Factor, Vector};
use crate::loopx::{
    enlarged_flow, torus_basis, wznw_flow, FourierLoop, LoopFlowOptions, LoopGroupPath, MonodromicPhase,
};

pub const RIGID: &str = "rigidbody-pendulum";
pub const SU2: &str = "lu-weinstein-su2";
pub const STRING: &str = "monodromic-string";

pub const BUILTINS: [(&str, &str); 3] = [
    (RIGID, "rigid body on T*SE(2) and the pendulum driven by one curve"),
    (SU2, "T*AN(2) and T*SU(2) on the Lu-Weinstein double, alpha-shifted momentum"),
    (STRING, "loop-group chiral flow, monodromy invariants and the enlarged torus flow"),
];

fn err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigidTolerances {
    pub pendulum_ode: f64,
    pub duality: f64,
    pub casimir: f64,
    pub energy: f64,
}

impl Default for RigidTolerances {
    fn default() -> Self {
        RigidTolerances { pendulum_ode: 1e-4, duality: 1e-6, casimir: 1e-8, energy: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigidParams {
    pub inertia: Inertia,
    pub theta0: f64,
    pub p0: f64,
    pub r: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    pub tolerances: RigidTolerances,
}

impl Default for RigidParams {
    fn default() -> Self {
        RigidParams {
            inertia: Inertia::default(),
            theta0: 0.7,
            p0: 0.3,
            r: 1.0,
            t: 5.0,
            dt: 1e-3,
            tolerances: RigidTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Swap,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorParams {
    pub kind: OperatorKind,
    /// Size of the random symmetric perturbation; ignored for `swap`.
    pub scale: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        OperatorParams { kind: OperatorKind::Swap, scale: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Su2Tolerances {
    pub duality: f64,
    pub energy: f64,
    pub equivariance: f64,
    pub poisson: f64,
    /// Lower bound on the Poisson residual when alpha violates the condition.
    pub poisson_fail: f64,
}

impl Default for Su2Tolerances {
    fn default() -> Self {
        Su2Tolerances { duality: 1e-5, energy: 1e-7, equivariance: 1e-9, poisson: 1e-8, poisson_fail: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Su2Params {
    /// `alpha` in `su(2)` coordinates.
    pub alpha: [f64; 3],
    pub l0_scale: f64,
    pub operator: OperatorParams,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    /// Random points for the equivariance scan.
    pub samples: usize,
    pub tolerances: Su2Tolerances,
}

impl Default for Su2Params {
    fn default() -> Self {
        Su2Params {
            alpha: [0.7, 0.0, 0.0],
            l0_scale: 0.5,
            operator: OperatorParams::default(),
            t: 1.0,
            dt: 1e-3,
            samples: 100,
            tolerances: Su2Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StringTolerances {
    pub gamma: f64,
    pub monodromy: f64,
    pub eigen_drift: f64,
    pub energy: f64,
    pub lagrangian: f64,
    pub alpha_drift: f64,
    pub mu_drift: f64,
    pub equivariance: f64,
    /// Lower bound on `|lambda(T) - lambda(0)|`.
    pub lambda_change: f64,
}

impl Default for StringTolerances {
    fn default() -> Self {
        StringTolerances {
            gamma: 1e-12,
            monodromy: 1e-8,
            eigen_drift: 1e-5,
            energy: 1e-7,
            lagrangian: 1e-8,
            alpha_drift: 1e-12,
            mu_drift: 1e-5,
            equivariance: 1e-8,
            lambda_change: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StringParams {
    /// Collocation points on the circle.
    #[serde(rename = "P")]
    pub p: usize,
    /// Fourier band of the initial loop.
    #[serde(rename = "N_max")]
    pub n_max: usize,
    /// Coefficient of the Cartan generator in `alpha`.
    pub alpha: f64,
    pub k: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    pub loop_scale: f64,
    pub operator_scale: f64,
    pub lagrangian_samples: usize,
    pub tolerances: StringTolerances,
}

impl Default for StringParams {
    fn default() -> Self {
        StringParams {
            p: 64,
            n_max: 8,
            alpha: 0.6,
            k: 1.0,
            t: 1.0,
            dt: 0.01,
            loop_scale: 0.15,
            operator_scale: 0.3,
            lagrangian_samples: 50,
            tolerances: StringTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Rigid(RigidParams),
    Su2(Su2Params),
    String(StringParams),
}

impl Params {
    pub fn to_value(&self) -> Value {
        match self {
            Params::Rigid(p) => serde_json::to_value(p),
            Params::Su2(p) => serde_json::to_value(p),
            Params::String(p) => serde_json::to_value(p),
        }
        .expect("params serialize")
    }

    pub fn has_duality(&self) -> bool {
        !matches!(self, Params::String(_))
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

fn time_grid(t: f64, dt: f64) -> Result<(), String> {
    positive("T", t)?;
    positive("dt", dt)?;
    if dt > t {
        return Err(format!("dt = {dt} exceeds T = {t}"));
    }
    Ok(())
}

fn validate(p: &Params) -> Result<(), String> {
    match p {
        Params::Rigid(r) => {
            let i = r.inertia;
            if !(i.i1 > 0.0 && i.i1 < i.i2 && i.i2 < i.i3) {
                return Err(format!("inertia needs 0 < i1 < i2 < i3, got {i:?}"));
            }
            positive("r", r.r)?;
            time_grid(r.t, r.dt)?;
            let t = r.tolerances;
            for (n, v) in [("pendulum_ode", t.pendulum_ode), ("duality", t.duality), ("casimir", t.casimir), ("energy", t.energy)] {
                positive(n, v)?;
            }
        }
        Params::Su2(s) => {
            if s.alpha.iter().any(|a| !a.is_finite()) {
                return Err("alpha must be finite".into());
            }
            positive("l0_scale", s.l0_scale)?;
            positive("operator.scale", s.operator.scale)?;
            time_grid(s.t, s.dt)?;
            if s.samples == 0 {
                return Err("samples must be at least 1".into());
            }
        }
        Params::String(s) => {
            if s.n_max == 0 {
                return Err("N_max must be at least 1".into());
            }
            if s.p < 4 * s.n_max {
                return Err(format!("P = {} is below 4 N_max = {}", s.p, 4 * s.n_max));
            }
            if !s.alpha.is_finite() {
                return Err("alpha must be finite".into());
            }
            positive("k", s.k)?;
            positive("loop_scale", s.loop_scale)?;
            positive("operator_scale", s.operator_scale)?;
            time_grid(s.t, s.dt)?;
            if s.lagrangian_samples == 0 {
                return Err("lagrangian_samples must be at least 1".into());
            }
        }
    }
    Ok(())
}

/// Typed parameters of a built-in base from a JSON object; missing keys take defaults.
pub fn parse_params(base: &str, map: &Map<String, Value>) -> Result<Params, String> {
    let v = Value::Object(map.clone());
    let p = match base {
        RIGID => Params::Rigid(serde_json::from_value(v).map_err(|e| e.to_string())?),
        SU2 => Params::Su2(serde_json::from_value(v).map_err(|e| e.to_string())?),
        STRING => Params::String(serde_json::from_value(v).map_err(|e| e.to_string())?),
        other => return Err(format!("unknown base scenario {other:?}")),
    };
    validate(&p)?;
    Ok(p)
}

/// Report, named artifacts, and the duality report when one was produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: ResidualReport,
    pub artifacts: Vec<(String, String)>,
    pub duality: Option<DualityReport>,
}

pub fn run(name: &str, params: &Params, seed: u64) -> Result<Outcome, CliError> {
    match params {
        Params::Rigid(p) => run_rigid(name, p),
        Params::Su2(p) => run_su2(name, p, seed),
        Params::String(p) => run_string(name, p, seed),
    }
}

/// Worst `|theta'' - f(theta)|` by central differences on a uniform grid.
pub fn pendulum_ode_residual(inertia: &Inertia, r: f64, theta: &[f64], dt: f64) -> f64 {
    theta
        .windows(3)
        .map(|w| ((w[2] - 2.0 * w[1] + w[0]) / (dt * dt) - inertia.pendulum_acceleration(r, w[1])).abs())
        .fold(0.0, f64::max)
}

fn run_rigid(name: &str, p: &RigidParams) -> Result<Outcome, CliError> {
    let sc = rigid_body_pendulum(p.inertia, p.theta0, p.p0, p.r);
    let run = duality_run(name, &sc.body, &sc.body0, &sc.pendulum, &sc.pendulum0, &sc.h, p.t, p.dt).map_err(err)?;
    let tol = p.tolerances;
    let theta: Vec<f64> = run.collective_b.states.iter().map(|s| s[0]).collect();
    let k0 = p.inertia.casimir(&run.curve.states[0].xi);
    let casimir = run.curve.states.iter().map(|s| (p.inertia.casimir(&s.xi) - k0).abs()).fold(0.0, f64::max);

    let mut rep = ResidualReport::new(name);
    rep.check("pendulum_ode_residual", pendulum_ode_residual(&p.inertia, p.r, &theta, p.dt), Bound::Max(tol.pendulum_ode));
    rep.check("residual_A", run.report.residual_a, Bound::Max(tol.duality));
    rep.check("residual_B", run.report.residual_b, Bound::Max(tol.duality));
    rep.check("momentum_drift", run.report.momentum_drift, Bound::Max(tol.duality));
    rep.check("casimir_drift", casimir, Bound::Max(tol.casimir));
    rep.check("energy_drift", run.report.energy_drift, Bound::Max(tol.energy));

    let xi_labels: Vec<String> = (0..3).map(|i| format!("xi{i}")).collect();
    let artifacts = vec![
        ("curve.csv".to_string(), run.curve.to_csv(&xi_labels, |s| s.xi.iter().cloned().collect())),
        ("rigid_body.csv".to_string(), run.collective_a.to_csv(&sc.body.coord_labels(), |s| sc.body.coords(s))),
        ("rigid_body_direct.csv".to_string(), run.direct_a.to_csv(&sc.body.coord_labels(), |s| sc.body.coords(s))),
        ("pendulum.csv".to_string(), run.collective_b.to_csv(&sc.pendulum.coord_labels(), |s| sc.pendulum.coords(s))),
        ("pendulum_direct.csv".to_string(), run.direct_b.to_csv(&sc.pendulum.coord_labels(), |s| sc.pendulum.coords(s))),
    ];
    Ok(Outcome { report: rep.finish(), artifacts, duality: Some(run.report) })
}

fn run_su2(name: &str, p: &Su2Params, seed: u64) -> Result<Outcome, CliError> {
    let dg = DoubleGroup::lu_weinstein();
    let alpha = Vector::from_row_slice(&p.alpha);
    let tol = p.tolerances;
    let (holds, _) = check_alpha_condition(&alpha, dg.algebra()).map_err(err)?;
    let poisson = suites::poisson_mu_tilde(&alpha, 3, seed)?;
    let mut rep = ResidualReport::new(name);

    if !holds {
        // Negative control: the shifted momentum must fail to be Poisson.
        rep.expected_fail = true;
        rep.check("poisson_residual", poisson.worst, Bound::Min(tol.poisson_fail));
        rep.check("condition_rejected", if poisson.condition_holds { 0.0 } else { 1.0 }, Bound::Min(0.5));
        return Ok(Outcome { report: rep.finish(), artifacts: vec![], duality: None });
    }

    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let l0 = dg.group().random(&mut r, p.l0_scale);
    let e = match p.operator.kind {
        OperatorKind::Swap => SigmaOperator::swap(dg.algebra()),
        OperatorKind::Random => SigmaOperator::random(dg.algebra(), &mut r, p.operator.scale).map_err(err)?,
    };
    let sc = double_duality(dg.clone(), Cocycle::Zero, &alpha, &l0, &e).map_err(err)?;
    let run = duality_run(name, &sc.a, &sc.p0a, &sc.b, &sc.p0b, &sc.h, p.t, p.dt).map_err(err)?;
    rep.check("residual_A", run.report.residual_a, Bound::Max(tol.duality));
    rep.check("residual_B", run.report.residual_b, Bound::Max(tol.duality));
    rep.check("momentum_drift", run.report.momentum_drift, Bound::Max(tol.duality));
    rep.check("energy_drift", run.report.energy_drift, Bound::Max(tol.energy));
    let eq = suites::equivariance_worst(MomentumTag::MuTildePhi, &alpha, p.samples, seed)?;
    rep.check("equivariance_mu_tilde", eq, Bound::Max(tol.equivariance));
    rep.check("poisson_residual", poisson.worst, Bound::Max(tol.poisson));

    let xi_labels: Vec<String> = (0..6).map(|i| format!("xi{i}")).collect();
    let artifacts = vec![
        ("curve.csv".to_string(), run.curve.to_csv(&xi_labels, |s| s.xi.iter().cloned().collect())),
        ("cotangent_n.csv".to_string(), run.collective_a.to_csv(&sc.a.coord_labels(), |s| sc.a.coords(s))),
        ("cotangent_n_direct.csv".to_string(), run.direct_a.to_csv(&sc.a.coord_labels(), |s| sc.a.coords(s))),
        ("cotangent_nstar.csv".to_string(), run.collective_b.to_csv(&sc.b.coord_labels(), |s| sc.b.coords(s))),
        ("cotangent_nstar_direct.csv".to_string(), run.direct_b.to_csv(&sc.b.coord_labels(), |s| sc.b.coords(s))),
    ];
    Ok(Outcome { report: rep.finish(), artifacts, duality: Some(run.report) })
}

fn run_string(name: &str, p: &StringParams, seed: u64) -> Result<Outcome, CliError> {
    let dg = DoubleGroup::lu_weinstein();
    let d = dg.algebra();
    let tol = p.tolerances;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ResidualReport::new(name);

    let g = suites::gamma_residuals(10, p.n_max, p.k, seed)?;
    rep.check("gamma_antisymmetry", g.antisymmetry, Bound::Max(tol.gamma));
    rep.check("gamma_cocycle", g.cocycle, Bound::Max(tol.gamma));
    rep.check("gamma_cos_sin", g.cos_sin, Bound::Max(tol.gamma));
    rep.check("constant_monodromy", suites::constant_monodromy_error(p.alpha, p.p)?, Bound::Max(tol.monodromy));

    let e = SigmaOperator::random(d, &mut r, p.operator_scale).map_err(err)?;
    let x = FourierLoop::random(d.dim(), p.n_max, &mut r, p.loop_scale);
    let l0 = LoopGroupPath::exp_loop(dg.group(), &x, p.p).map_err(err)?;
    let alpha = FourierLoop::constant(&d.embed(&cartan(p.alpha), Factor::NStar));
    let opts = LoopFlowOptions { t: p.t, dt: p.dt, k: p.k, band: p.n_max };
    let flow = wznw_flow(&dg, &e, &alpha, &l0, &opts).map_err(err)?;
    rep.check("eigen_drift", flow.eigen_drift(), Bound::Max(tol.eigen_drift));
    rep.check("energy_drift", flow.energy_drift(), Bound::Max(tol.energy));
    if let Some(worst) = flow.aliasing.iter().map(|a| a.1).reduce(f64::max) {
        rep.warnings.push(format!(
            "chiral flow: spectral tail above 2 N_max exceeded 1e-8 at {} of {} steps (max {worst:.3e}); raise P",
            flow.aliasing.len(),
            flow.times.len()
        ));
    }

    let (space, subst) = suites::lagrangian_residuals(p.lagrangian_samples, p.p, p.alpha, p.k, seed)?;
    rep.check("lagrangian_space", space, Bound::Max(tol.lagrangian));
    rep.check("lagrangian_substitution", subst, Bound::Max(tol.lagrangian));

    let band = p.n_max.min(4);
    let y = FourierLoop::random(dg.n(), band, &mut r, 0.3).map(&d.projector(Factor::NStar).columns(dg.n(), dg.n()).into_owned()).map_err(err)?;
    let state0 = MonodromicPhase {
        gtilde: LoopGroupPath::exp_loop(dg.group(), &y, p.p).map_err(err)?,
        z: FourierLoop::random(dg.n(), band, &mut r, 0.2).samples(p.p),
        alpha: cartan(p.alpha),
        lambda: Vector::zeros(1),
    };
    let torus = torus_basis(&dg);
    let enl = enlarged_flow(&dg, &e, &torus, &state0, &opts).map_err(err)?;
    let lambda_change = (&enl.states.last().expect("flows record the initial state").lambda - &state0.lambda).amax();
    rep.check("alpha_drift", enl.alpha_drift, Bound::Max(tol.alpha_drift));
    rep.check("mu_drift", enl.mu_drift, Bound::Max(tol.mu_drift));
    rep.check("enlarged_equivariance", enl.equivariance, Bound::Max(tol.equivariance));
    rep.check("lambda_change", lambda_change, Bound::Min(tol.lambda_change));
    if !enl.aliasing.is_empty() {
        rep.warnings.push(format!("enlarged flow: spectral tail exceeded 1e-8 at {} steps", enl.aliasing.len()));
    }

    let mut flow_csv = String::from("t,energy,eigen_drift\n");
    for (i, t) in flow.times.iter().enumerate() {
        let drift = crate::loopx::spectrum_drift(&flow.spectra[i], &flow.spectra[0]);
        flow_csv.push_str(&format!("{t},{},{drift}\n", flow.energies[i]));
    }
    let mut enl_csv = String::from("t,energy,lambda\n");
    for (i, t) in enl.times.iter().enumerate() {
        enl_csv.push_str(&format!("{t},{},{}\n", enl.energies[i], enl.states[i].lambda[0]));
    }
    let artifacts = vec![
        ("initial_loop_spectrum.csv".to_string(), x.to_csv()),
        ("chiral_flow.csv".to_string(), flow_csv),
        ("final_path.json".to_string(), flow.last().to_json()),
        ("enlarged_flow.csv".to_string(), enl_csv),
    ];
    Ok(Outcome { report: rep.finish(), artifacts, duality: None })
}
