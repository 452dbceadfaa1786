//! Acceptance harness: one PASS/FAIL line per criterion. Tolerances are pinned
//! here and never read from scenario configs.

use std::time::{Duration, Instant};

use orbidual::cli::scenarios::{self, OperatorKind, OperatorParams, Params, RigidParams, StringParams, Su2Params};
use orbidual::cli::suites::{self, cartan, root};
use orbidual::cli::ResidualReport;
use orbidual::dynamics::Inertia;
use orbidual::hamspaces::MomentumTag;

const SEED: u64 = 20261015;

struct Criterion {
    id: u32,
    title: &'static str,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Criterion { id, title, checks: vec![] }
    }

    fn below(&mut self, name: &str, v: f64, tol: f64) {
        self.checks.push((format!("{name}={v:.3e} < {tol:e}"), v.is_finite() && v < tol));
    }

    fn above(&mut self, name: &str, v: f64, tol: f64) {
        self.checks.push((format!("{name}={v:.3e} > {tol:e}"), v.is_finite() && v > tol));
    }

    fn holds(&mut self, name: &str, ok: bool) {
        self.checks.push((name.to_string(), ok));
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.checks.push((format!("{what}: {e}"), false));
    }

    fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }

    fn print(&self) {
        let status = if self.pass() { "PASS" } else { "FAIL" };
        let detail: Vec<&str> = self.checks.iter().map(|c| c.0.as_str()).collect();
        println!("{status} {:>2} {}: {}", self.id, self.title, detail.join("; "));
    }
}

fn metric(r: &ResidualReport, name: &str) -> f64 {
    r.metrics.get(name).copied().unwrap_or(f64::NAN)
}

fn rigid() -> (Result<ResidualReport, String>, Duration) {
    let params = Params::Rigid(RigidParams {
        inertia: Inertia { i1: 1.0, i2: 2.0, i3: 3.0 },
        t: 5.0,
        dt: 1e-3,
        ..RigidParams::default()
    });
    let start = Instant::now();
    let out = scenarios::run(scenarios::RIGID, &params, SEED).map(|o| o.report).map_err(|e| e.to_string());
    (out, start.elapsed())
}

fn su2(kind: OperatorKind) -> Result<ResidualReport, String> {
    let params = Params::Su2(Su2Params {
        alpha: [0.7, 0.0, 0.0],
        operator: OperatorParams { kind, scale: 0.3 },
        t: 1.0,
        dt: 1e-3,
        ..Su2Params::default()
    });
    scenarios::run(scenarios::SU2, &params, SEED).map(|o| o.report).map_err(|e| e.to_string())
}

fn string() -> Result<ResidualReport, String> {
    let params = Params::String(StringParams {
        p: 64,
        n_max: 8,
        alpha: 0.6,
        k: 1.0,
        t: 1.0,
        dt: 0.01,
        lagrangian_samples: 50,
        ..StringParams::default()
    });
    scenarios::run(scenarios::STRING, &params, SEED).map(|o| o.report).map_err(|e| e.to_string())
}

fn main() {
    let mut all = vec![];
    let (rigid_report, rigid_time) = rigid();
    let su2_swap = su2(OperatorKind::Swap);
    let su2_random = su2(OperatorKind::Random);
    let string_report = string();

    let mut c = Criterion::new(1, "rigid body and pendulum from one curve");
    match &rigid_report {
        Ok(r) => {
            c.below("pendulum_ode", metric(r, "pendulum_ode_residual"), 1e-4);
            c.below("residual_A", metric(r, "residual_A"), 1e-6);
            c.below("residual_B", metric(r, "residual_B"), 1e-6);
            c.below("runtime_s", rigid_time.as_secs_f64(), 10.0);
        }
        Err(e) => c.error("rigid run", e),
    }
    all.push(c);

    let mut c = Criterion::new(2, "conservation");
    match suites::casimir_drift(Inertia { i1: 1.0, i2: 2.0, i3: 3.0 }, &cartan(0.8).add_scalar(0.1), 5.0, 1e-3) {
        Ok(v) => c.below("casimir_flow", v, 1e-8),
        Err(e) => c.error("casimir flow", e),
    }
    for (name, rep) in [("rigid", &rigid_report), ("su2_swap", &su2_swap), ("su2_random", &su2_random), ("string", &string_report)] {
        match rep {
            Ok(r) => {
                if name == "rigid" {
                    c.below("casimir_rigid", metric(r, "casimir_drift"), 1e-8);
                }
                c.below(&format!("energy_{name}"), metric(r, "energy_drift"), 1e-7);
            }
            Err(e) => c.error(name, e),
        }
    }
    all.push(c);

    let mut c = Criterion::new(3, "momentum map equivariance");
    for (name, tag, a) in [
        ("mu00", MomentumTag::Mu00, 0.0),
        ("mu0alpha", MomentumTag::Mu0Alpha, 0.7),
        ("mutildephi", MomentumTag::MuTildePhi, 0.7),
        ("JhatR", MomentumTag::JHatR, 0.0),
    ] {
        match suites::equivariance_worst(tag, &cartan(a), 100, SEED) {
            Ok(v) => c.below(name, v, 1e-9),
            Err(e) => c.error(name, e),
        }
    }
    all.push(c);

    let mut c = Criterion::new(4, "Poisson property iff the alpha condition");
    match (suites::poisson_mu_tilde(&cartan(0.7), 5, SEED), suites::poisson_mu_tilde(&root(0.6), 5, SEED)) {
        (Ok(t), Ok(u)) => {
            c.below("torus", t.worst, 1e-8);
            c.above("root", u.worst, 1e-3);
            c.holds("checker accepts torus", t.condition_holds);
            c.holds("checker rejects root", !u.condition_holds);
        }
        (Err(e), _) | (_, Err(e)) => c.error("poisson scan", e),
    }
    all.push(c);

    let mut c = Criterion::new(5, "shift isomorphism");
    match suites::shift_residuals(100, SEED) {
        Ok((b, kk)) => {
            c.below("intertwining", b, 1e-10);
            c.below("kk_pairing", kk, 1e-9);
        }
        Err(e) => c.error("shift", e),
    }
    all.push(c);

    let mut c = Criterion::new(6, "sigma-model operator and Legendre transforms");
    match suites::involution_residuals(100, SEED) {
        Ok(r) => {
            c.below("E^2-Id", r.involution, 1e-12);
            c.below("self_adjoint", r.self_adjoint, 1e-12);
            c.below("blocks", r.blocks, 1e-10);
        }
        Err(e) => c.error("operators", e),
    }
    match suites::legendre_worst(20, SEED) {
        Ok(v) => c.below("legendre", v, 1e-10),
        Err(e) => c.error("legendre", e),
    }
    all.push(c);

    let mut c = Criterion::new(7, "loop cocycle");
    match suites::gamma_residuals(50, 8, 1.0, SEED) {
        Ok(g) => {
            c.below("antisymmetry", g.antisymmetry, 1e-12);
            c.below("cocycle", g.cocycle, 1e-12);
            c.below("cos_sin", g.cos_sin, 1e-12);
        }
        Err(e) => c.error("gamma", e),
    }
    all.push(c);

    let mut c = Criterion::new(8, "monodromy");
    match suites::constant_monodromy_error(0.6, 64) {
        Ok(v) => c.below("constant_alpha", v, 1e-8),
        Err(e) => c.error("constant monodromy", e),
    }
    match &string_report {
        Ok(r) => c.below("eigen_drift", metric(r, "eigen_drift"), 1e-5),
        Err(e) => c.error("string run", e),
    }
    all.push(c);

    let mut c = Criterion::new(9, "duality on the su(2) double");
    for (name, rep) in [("swap", &su2_swap), ("random", &su2_random)] {
        match rep {
            Ok(r) => {
                c.below(&format!("{name}_A"), metric(r, "residual_A"), 1e-5);
                c.below(&format!("{name}_B"), metric(r, "residual_B"), 1e-5);
            }
            Err(e) => c.error(name, e),
        }
    }
    all.push(c);

    let mut c = Criterion::new(10, "Lagrangian equivalence");
    match suites::lagrangian_residuals(50, 64, 0.6, 1.0, SEED) {
        Ok((space, subst)) => {
            c.below("space_vs_body", space, 1e-8);
            c.below("substitution", subst, 1e-8);
        }
        Err(e) => c.error("lagrangian", e),
    }
    all.push(c);

    let mut c = Criterion::new(11, "enlarged torus flow");
    match &string_report {
        Ok(r) => {
            c.holds(&format!("alpha_drift={:e} == 0", metric(r, "alpha_drift")), metric(r, "alpha_drift") == 0.0);
            c.above("lambda_change", metric(r, "lambda_change"), 1e-6);
            c.below("mu_drift", metric(r, "mu_drift"), 1e-5);
        }
        Err(e) => c.error("string run", e),
    }
    all.push(c);

    for c in &all {
        c.print();
    }
    let failed = all.iter().filter(|c| !c.pass()).count();
    println!("{} of {} criteria pass", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
