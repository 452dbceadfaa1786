//! Invariant evaluators shared by `check` and the acceptance harness. Every
//! evaluator is deterministic in its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bound, CliError};
use crate::dynamics::{
    dual_sigma_blocks, legendre_residual, lie_poisson_flow, sigma_blocks, Inertia, LagrangianFamily, LagrangianModel,
    SigmaModel, SigmaOperator, WznwFormulation, WznwHamiltonian,
};
use crate::extension::{
    chat_consistency_residual, check_alpha_condition, cocycle_identity_residual, extended_coadjoint, kk_form,
    lie_poisson_bracket, minus_alpha, orbit_generator, shift_iso, Cocycle, ExtendedDual, Observable, ShiftedCocycle,
};
use crate::groups::{DoubleGroup, Order};
use crate::hamspaces::{HamiltonianSpace, MomentumTag, PhasePoint, SpaceKind};
use crate::liecore::{builtin, Factor, LieAlgebra, Matrix, Vector};
use crate::loopx::{
    gamma_cocycle, loop_alpha_condition, loop_bracket, monodromic_lagrangian, monodromy, FourierLoop, LoopGroupPath,
    LoopVelocityState, TruncationPolicy,
};

pub const SUITES: [&str; 6] = ["liecore", "groups", "extension", "hamspaces", "dynamics", "loopx"];

/// One line of the residual matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub bound: Bound,
}

impl Row {
    pub fn pass(&self) -> bool {
        self.bound.holds(self.value)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rvec(r: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
    Vector::from_fn(n, |_, _| r.random_range(-s..s))
}

fn rsym(r: &mut ChaCha8Rng, n: usize, s: f64) -> Matrix {
    let m = Matrix::from_fn(n, n, |_, _| r.random_range(-s..s));
    (&m + m.transpose()) * 0.5
}

fn err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

/// `t` direction of the torus in `n*` coordinates.
pub fn cartan(a: f64) -> Vector {
    Vector::from_vec(vec![a, 0.0, 0.0])
}

/// Root direction `u` in `n*` coordinates.
pub fn root(a: f64) -> Vector {
    Vector::from_vec(vec![0.0, a, 0.0])
}

fn coboundary(dg: &DoubleGroup, r: &mut ChaCha8Rng) -> Cocycle {
    Cocycle::Coboundary(rvec(r, dg.algebra().dim(), 0.5))
}

// ---------------------------------------------------------------------------
// Evaluators
// ---------------------------------------------------------------------------

/// Antisymmetry, Jacobi and invariance residuals of the built-in algebras.
/// `corrupt` perturbs one structure constant of the su(2) double first.
pub fn algebra_residuals(corrupt: bool) -> Vec<(String, f64)> {
    let mut lw = builtin::lu_weinstein_su2().total().clone();
    if corrupt {
        let v = lw.constant(0, 1, 1);
        lw.corrupt_constant(0, 1, 1, v + 0.5);
        lw.corrupt_constant(1, 0, 1, -(v + 0.5));
    }
    let mut out = vec![];
    let named: [(&str, LieAlgebra); 3] =
        [("se2", builtin::se2()), ("lu_weinstein_su2", lw), ("abelian_double", builtin::abelian_double(2).total().clone())];
    for (name, alg) in named {
        out.push((format!("{name} antisymmetry"), alg.antisymmetry_residual()));
        out.push((format!("{name} jacobi"), alg.jacobi_residual()));
        if alg.pairing().is_some() {
            out.push((format!("{name} invariance"), alg.invariance_residual()));
        }
    }
    out.push(("lu_weinstein_su2 isotropy".into(), builtin::lu_weinstein_su2().isotropy_residual()));
    out
}

/// Worst `|mu(l.p) - Ad-hat*_{l^{-1}} mu(p)|` over random `(l, p)` for the
/// space carrying `tag` on the su(2) double; `alpha` is in `n*` coordinates
/// and ignored by the chiral space.
pub fn equivariance_worst(tag: MomentumTag, alpha: &Vector, samples: usize, seed: u64) -> Result<f64, CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let space = match tag {
        MomentumTag::Mu00 | MomentumTag::Mu0Alpha | MomentumTag::MuAlphaAlpha => {
            HamiltonianSpace::cotangent_n(dg.clone(), Cocycle::Zero, alpha, tag)
        }
        MomentumTag::MuTildePhi | MomentumTag::MuTildeAlpha => {
            HamiltonianSpace::cotangent_nstar(dg.clone(), Cocycle::Zero, alpha, tag)
        }
        MomentumTag::JHatR => {
            let base = coboundary(&dg, &mut r);
            HamiltonianSpace::chiral(dg.clone(), base, rvec(&mut r, 6, 1.0))
        }
    }
    .map_err(err)?;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let base = match space.kind() {
            SpaceKind::CotangentN => dg.random_factor(&mut r, Factor::N, 0.8),
            SpaceKind::CotangentNstar => dg.random_factor(&mut r, Factor::NStar, 0.8),
            SpaceKind::ChiralH => dg.group().random(&mut r, 0.8),
        };
        let p = PhasePoint::new(base, rvec(&mut r, space.block().len(), 1.0));
        let l = dg.group().random(&mut r, 0.7);
        worst = worst.max(space.equivariance_residual(&l, &p).map_err(err)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonOutcome {
    /// Worst Poisson-map residual over linear basis pairs and sample points.
    pub worst: f64,
    pub condition_holds: bool,
    pub condition_residual: f64,
}

/// Poisson-map test of `mu~^phi` on `T*N*` for `alpha` in `n*` coordinates,
/// at the identity and at `points - 1` random points.
pub fn poisson_mu_tilde(alpha: &Vector, points: usize, seed: u64) -> Result<PoissonOutcome, CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let (condition_holds, condition_residual) = check_alpha_condition(alpha, dg.algebra()).map_err(err)?;
    let s = HamiltonianSpace::cotangent_nstar(dg.clone(), Cocycle::Zero, alpha, MomentumTag::MuTildePhi).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..points.max(1) {
        let p = if i == 0 {
            PhasePoint::new(dg.identity(), Vector::zeros(3))
        } else {
            PhasePoint::new(dg.random_factor(&mut r, Factor::NStar, 0.8), rvec(&mut r, 3, 1.0))
        };
        worst = worst.max(s.poisson_basis_scan(&p).map_err(err)?.0);
    }
    Ok(PoissonOutcome { worst, condition_holds, condition_residual })
}

/// `(intertwining, kk)` residuals of the shift map `phi(eta, 1) = (eta + alpha, 1)`
/// from the `c_{-alpha}` bracket to the base bracket.
pub fn shift_residuals(samples: usize, seed: u64) -> Result<(f64, f64), CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let d = dg.algebra();
    let alg = d.total();
    let (mut bracket, mut kk): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let base = coboundary(&dg, &mut r);
        let alpha_h = rvec(&mut r, 6, 1.0);
        let shift = d.to_dual(&alpha_h);
        let c0 = ShiftedCocycle::unshifted(base.clone(), 6);
        let cm = minus_alpha(base, d, &alpha_h);
        let f = Observable::quadratic(rsym(&mut r, 6, 1.0));
        let g = Observable::quadratic(rsym(&mut r, 6, 1.0));
        let eta = ExtendedDual::unit(rvec(&mut r, 6, 1.0));
        let lhs = lie_poisson_bracket(&cm, alg, &f.shifted(&shift), &g.shifted(&shift), &eta).map_err(err)?;
        let rhs = lie_poisson_bracket(&c0, alg, &f, &g, &shift_iso(&eta, &shift).map_err(err)?).map_err(err)?;
        bracket = bracket.max((lhs - rhs).abs());

        let l = dg.group().random(&mut r, 0.7);
        let p = extended_coadjoint(&cm, dg.group(), &l, &ExtendedDual::unit(Vector::zeros(6)));
        let q = shift_iso(&p, &shift).map_err(err)?;
        let (x, y) = (rvec(&mut r, 6, 1.0), rvec(&mut r, 6, 1.0));
        kk = kk.max((kk_form(&cm, alg, &p, &x, &y) - kk_form(&c0, alg, &q, &x, &y)).abs());
        let gen = orbit_generator(&cm, alg, &x, &p) - orbit_generator(&c0, alg, &x, &q);
        kk = kk.max(gen.amax());
    }
    Ok((bracket, kk))
}

/// Cocycle identity and `c_hat` consistency for random coboundaries and their `-alpha` shifts.
pub fn cocycle_residuals(samples: usize, seed: u64) -> Result<(f64, f64), CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let (mut ident, mut chat): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let base = coboundary(&dg, &mut r);
        let alpha_h = dg.algebra().embed(&rvec(&mut r, 3, 1.0), Factor::NStar);
        let c = minus_alpha(base, dg.algebra(), &alpha_h);
        let (l, k) = (dg.group().random(&mut r, 0.7), dg.group().random(&mut r, 0.7));
        ident = ident.max(cocycle_identity_residual(&c, dg.group(), &l, &k));
        chat = chat.max(chat_consistency_residual(&c, dg.group()));
    }
    Ok((ident, chat))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvolutionResiduals {
    pub involution: f64,
    pub self_adjoint: f64,
    /// Worst of symmetry, antisymmetry, reassembly, block relations and the
    /// sigma-Lagrangian identity, over both splittings.
    pub blocks: f64,
}

pub fn involution_residuals(samples: usize, seed: u64) -> Result<InvolutionResiduals, CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let d = dg.algebra();
    let mut out = InvolutionResiduals { involution: 0.0, self_adjoint: 0.0, blocks: 0.0 };
    for _ in 0..samples {
        let e = SigmaOperator::random(d, &mut r, 0.5).map_err(err)?;
        out.involution = out.involution.max(e.involution_residual());
        out.self_adjoint = out.self_adjoint.max(e.self_adjoint_residual(d));
        let g = dg.random_factor(&mut r, Factor::N, 0.6);
        let ht = dg.random_factor(&mut r, Factor::NStar, 0.6);
        for b in [sigma_blocks(&e, &dg, &g).map_err(err)?, dual_sigma_blocks(&e, &dg, &ht).map_err(err)?] {
            let (qd, qp) = (rvec(&mut r, 3, 1.0), rvec(&mut r, 3, 1.0));
            let worst = [
                b.symmetry_residual(),
                b.antisymmetry_residual(),
                b.reassembly_residual(),
                b.block_relation_residual(),
                b.master_identity_residual(&qd, &qp),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            out.blocks = out.blocks.max(worst);
        }
    }
    Ok(out)
}

/// Worst Legendre round-trip and `L = <p, v> - H` residual over every family.
pub fn legendre_worst(samples: usize, seed: u64) -> Result<f64, CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let d = dg.algebra().clone();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let e = SigmaOperator::random(&d, &mut r, 0.4).map_err(err)?;
        let base = coboundary(&dg, &mut r);
        let sigma = SigmaModel::new(dg.clone(), e, base.clone(), &cartan(0.7)).map_err(err)?;
        let g = dg.random_factor(&mut r, Factor::N, 0.7);
        let ht = dg.random_factor(&mut r, Factor::NStar, 0.7);
        let v = rvec(&mut r, 3, 1.0);
        let lambda = sigma.fiber_n(&g, &v, true).map_err(err)?;
        worst = worst.max((sigma.velocity_n(&g, &lambda, true) - &v).amax());
        let x = sigma.fiber_nstar(&ht, &v).map_err(err)?;
        worst = worst.max((sigma.velocity_nstar(&ht, &x) - &v).amax());
        let model = LagrangianModel::Sigma(sigma);
        for (f, at) in
            [(LagrangianFamily::Lsigma0, &g), (LagrangianFamily::LsigmaAlpha, &g), (LagrangianFamily::LtildeAlpha, &ht)]
        {
            worst = worst.max(legendre_residual(f, &model, at, &v).map_err(err)?);
        }
        for (f, form) in
            [(LagrangianFamily::Lc0, WznwFormulation::ZeroShift), (LagrangianFamily::LcMinusAlpha, WznwFormulation::MinusAlpha)]
        {
            let l2 = d.psi() * rsym(&mut r, 6, 0.5);
            let l3 = d.psi() * (rsym(&mut r, 6, 0.5) + Matrix::identity(6, 6) * 2.0);
            let w = WznwHamiltonian::new(dg.clone(), base.clone(), l2, l3, &cartan(0.7), form).map_err(err)?;
            let l = dg.group().random(&mut r, 0.6);
            let u = rvec(&mut r, 6, 1.0);
            let eta = w.fiber(&l, &u).map_err(err)?;
            worst = worst.max((w.velocity(&l, &eta).map_err(err)? - &u).amax());
            worst = worst.max(legendre_residual(f, &LagrangianModel::Wznw(w), &l, &u).map_err(err)?);
        }
    }
    Ok(worst)
}

/// Drift of `K(beta)` along the se(2) flow of the rigid-body Hamiltonian.
pub fn casimir_drift(inertia: Inertia, beta0: &Vector, t_end: f64, dt: f64) -> Result<f64, CliError> {
    let group = inertia.group();
    let c = ShiftedCocycle::unshifted(Cocycle::Zero, 3);
    let xi0 = ExtendedDual::unit(beta0.clone());
    let traj = lie_poisson_flow(&inertia.hamiltonian(), &c, group.algebra(), &xi0, t_end, dt).map_err(err)?;
    let k0 = inertia.casimir(beta0);
    Ok(traj.states.iter().map(|s| (inertia.casimir(&s.xi) - k0).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaResiduals {
    pub antisymmetry: f64,
    pub cocycle: f64,
    /// `|Gamma_k(A cos, B sin) - (k/2)(A, B)|`.
    pub cos_sin: f64,
}

/// Loop-cocycle identities in exact truncation with `n_max`; operands have band `n_max / 2`.
pub fn gamma_residuals(samples: usize, n_max: usize, k: f64, seed: u64) -> Result<GammaResiduals, CliError> {
    let mut r = rng(seed);
    let d = builtin::lu_weinstein_su2();
    let policy = TruncationPolicy::exact(n_max);
    let band = (n_max / 2).max(1);
    let mut out = GammaResiduals { antisymmetry: 0.0, cocycle: 0.0, cos_sin: 0.0 };
    for _ in 0..samples {
        let x = FourierLoop::random(6, band, &mut r, 1.0);
        let y = FourierLoop::random(6, band, &mut r, 1.0);
        let z = FourierLoop::random(6, band, &mut r, 1.0);
        out.antisymmetry = out.antisymmetry.max((gamma_cocycle(&d, k, &x, &y) + gamma_cocycle(&d, k, &y, &x)).abs());
        let br = |a: &FourierLoop, b: &FourierLoop| loop_bracket(d.total(), a, b, policy).map_err(err);
        let cyc = gamma_cocycle(&d, k, &br(&x, &y)?, &z) + gamma_cocycle(&d, k, &br(&y, &z)?, &x) + gamma_cocycle(&d, k, &br(&z, &x)?, &y);
        out.cocycle = out.cocycle.max(cyc.abs());
        let (a, b) = (rvec(&mut r, 6, 1.0), rvec(&mut r, 6, 1.0));
        let zero = Vector::zeros(6);
        let ac = FourierLoop::cos_sin(1, &a, &zero).map_err(err)?;
        let bs = FourierLoop::cos_sin(1, &zero, &b).map_err(err)?;
        out.cos_sin = out.cos_sin.max((gamma_cocycle(&d, k, &ac, &bs) - 0.5 * k * d.pair(&a, &b)).abs());
    }
    Ok(out)
}

/// `|M~ - exp(2 pi alpha)|` for constant `alpha = a t`.
pub fn constant_monodromy_error(a: f64, p: usize) -> Result<f64, CliError> {
    let dg = DoubleGroup::lu_weinstein();
    let alpha_h = dg.algebra().embed(&cartan(a), Factor::NStar);
    let hol = monodromy(dg.group(), &FourierLoop::constant(&alpha_h), p).map_err(err)?;
    Ok(hol.monodromy().dist(&dg.group().exp(&(alpha_h * (2.0 * std::f64::consts::PI)))))
}

/// Loop condition on collocation points: `(verdict for t, verdict for a root)`.
pub fn loop_condition_verdicts(p: usize) -> Result<(bool, bool), CliError> {
    let d = builtin::lu_weinstein_su2();
    let t = FourierLoop::constant(&d.embed(&cartan(0.4), Factor::NStar));
    let u = FourierLoop::constant(&d.embed(&root(0.4), Factor::NStar));
    Ok((loop_alpha_condition(&d, &t, p).map_err(err)?.0, loop_alpha_condition(&d, &u, p).map_err(err)?.0))
}

/// Random state of `T(L N*)`: `g~ = exp(Y)` with `Y` a real `n*` loop.
pub fn random_loop_state(dg: &DoubleGroup, r: &mut ChaCha8Rng, p: usize, band: usize, alpha: &Vector) -> Result<LoopVelocityState, CliError> {
    let inc = dg.algebra().projector(Factor::NStar).columns(dg.n(), dg.n()).into_owned();
    let y = FourierLoop::random(dg.n(), band, r, 0.6).map(&inc).map_err(err)?;
    Ok(LoopVelocityState {
        gtilde: LoopGroupPath::exp_loop(dg.group(), &y, p).map_err(err)?,
        u: (0..p).map(|_| rvec(r, dg.n(), 1.0)).collect(),
        alpha: alpha.clone(),
    })
}

/// `(space vs body, substituted vs body)` worst gaps of the monodromic Lagrangian.
pub fn lagrangian_residuals(states: usize, p: usize, alpha: f64, k: f64, seed: u64) -> Result<(f64, f64), CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let e = SigmaOperator::random(dg.algebra(), &mut r, 0.4).map_err(err)?;
    let (mut space, mut subst): (f64, f64) = (0.0, 0.0);
    for _ in 0..states {
        let st = random_loop_state(&dg, &mut r, p, 3, &cartan(alpha))?;
        let lag = monodromic_lagrangian(&dg, &e, &st, k).map_err(err)?;
        space = space.max((lag.space - lag.body).abs());
        subst = subst.max((lag.substituted - lag.body).abs());
    }
    Ok((space, subst))
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

fn row(suite: &'static str, name: &str, value: f64, bound: Bound) -> Row {
    Row { suite, name: name.to_string(), value, bound }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn groups_rows(seed: u64) -> Result<Vec<Row>, CliError> {
    let mut r = rng(seed);
    let dg = DoubleGroup::lu_weinstein();
    let h = dg.group();
    let (mut member, mut factor, mut hom, mut split): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..20 {
        let (g, k) = (h.random(&mut r, 0.8), h.random(&mut r, 0.8));
        member = member.max(h.membership_residual(&g));
        for order in [Order::NFirst, Order::NStarFirst] {
            let f = dg.factorize(&g, order).map_err(err)?;
            factor = factor.max(f.residual);
            split = split.max(dg.factor_residual(&f.g, Factor::N)).max(dg.factor_residual(&f.htilde, Factor::NStar));
        }
        hom = hom.max((h.ad_matrix(&g.mul(&k)) - h.ad_matrix(&g) * h.ad_matrix(&k)).amax());
    }
    Ok(vec![
        row("groups", "exp membership", member, Bound::Max(1e-10)),
        row("groups", "factorization residual", factor, Bound::Max(1e-10)),
        row("groups", "factor membership", split, Bound::Max(1e-10)),
        row("groups", "Ad homomorphism", hom, Bound::Max(1e-10)),
    ])
}

fn extension_rows(seed: u64) -> Result<Vec<Row>, CliError> {
    let (ident, chat) = cocycle_residuals(20, seed)?;
    let (bracket, kk) = shift_residuals(100, seed)?;
    let d = builtin::lu_weinstein_su2();
    let (t_ok, t_res) = check_alpha_condition(&cartan(0.7), &d).map_err(err)?;
    let (u_ok, u_res) = check_alpha_condition(&root(0.7), &d).map_err(err)?;
    Ok(vec![
        row("extension", "cocycle identity", ident, Bound::Max(1e-10)),
        row("extension", "c_hat consistency", chat, Bound::Max(1e-6)),
        row("extension", "shift bracket intertwining", bracket, Bound::Max(1e-10)),
        row("extension", "shift KK pairing", kk, Bound::Max(1e-9)),
        row("extension", "condition accepts torus", flag(t_ok) - t_res, Bound::Min(0.5)),
        row("extension", "condition rejects root", flag(!u_ok) * u_res, Bound::Min(1e-3)),
    ])
}

fn hamspaces_rows(seed: u64) -> Result<Vec<Row>, CliError> {
    let mut rows = vec![];
    for (name, tag, a) in [
        ("equivariance mu00", MomentumTag::Mu00, 0.0),
        ("equivariance mu0alpha", MomentumTag::Mu0Alpha, 0.7),
        ("equivariance mutildephi", MomentumTag::MuTildePhi, 0.7),
        ("equivariance JhatR", MomentumTag::JHatR, 0.0),
    ] {
        rows.push(row("hamspaces", name, equivariance_worst(tag, &cartan(a), 100, seed)?, Bound::Max(1e-9)));
    }
    let good = poisson_mu_tilde(&cartan(0.7), 3, seed)?;
    let bad = poisson_mu_tilde(&root(0.6), 3, seed)?;
    rows.push(row("hamspaces", "poisson mutildephi torus", good.worst, Bound::Max(1e-8)));
    rows.push(row("hamspaces", "poisson mutildephi root", bad.worst, Bound::Min(1e-3)));
    rows.push(row(
        "hamspaces",
        "checker agrees",
        flag(good.condition_holds && !bad.condition_holds),
        Bound::Min(0.5),
    ));
    Ok(rows)
}

fn dynamics_rows(seed: u64) -> Result<Vec<Row>, CliError> {
    let inv = involution_residuals(100, seed)?;
    Ok(vec![
        row("dynamics", "casimir drift", casimir_drift(Inertia::default(), &Vector::from_vec(vec![0.8, -0.3, 0.5]), 5.0, 1e-3)?, Bound::Max(1e-8)),
        row("dynamics", "E^2 = Id", inv.involution, Bound::Max(1e-12)),
        row("dynamics", "E self-adjoint", inv.self_adjoint, Bound::Max(1e-12)),
        row("dynamics", "blocks and reassembly", inv.blocks, Bound::Max(1e-10)),
        row("dynamics", "legendre round trip", legendre_worst(10, seed)?, Bound::Max(1e-10)),
    ])
}

fn loopx_rows(seed: u64) -> Result<Vec<Row>, CliError> {
    let g = gamma_residuals(10, 8, 1.0, seed)?;
    let (space, subst) = lagrangian_residuals(10, 32, 0.8, 1.0, seed)?;
    let (t_ok, u_ok) = loop_condition_verdicts(16)?;
    Ok(vec![
        row("loopx", "gamma antisymmetry", g.antisymmetry, Bound::Max(1e-12)),
        row("loopx", "gamma cocycle identity", g.cocycle, Bound::Max(1e-12)),
        row("loopx", "gamma cos/sin pairing", g.cos_sin, Bound::Max(1e-12)),
        row("loopx", "constant monodromy", constant_monodromy_error(0.6, 64)?, Bound::Max(1e-8)),
        row("loopx", "lagrangian space form", space, Bound::Max(1e-8)),
        row("loopx", "lagrangian substitution", subst, Bound::Max(1e-8)),
        row("loopx", "loop condition verdicts", flag(t_ok && !u_ok), Bound::Min(0.5)),
    ])
}

/// Runs one named suite.
pub fn run_suite(name: &str, seed: u64, corrupt: bool) -> Result<Vec<Row>, CliError> {
    match name {
        "liecore" => Ok(algebra_residuals(corrupt)
            .into_iter()
            .map(|(n, v)| Row { suite: "liecore", name: n, value: v, bound: Bound::Max(1e-12) })
            .collect()),
        "groups" => groups_rows(seed),
        "extension" => extension_rows(seed),
        "hamspaces" => hamspaces_rows(seed),
        "dynamics" => dynamics_rows(seed),
        "loopx" => loopx_rows(seed),
        other => Err(CliError::Usage(format!("unknown suite {other:?}; expected one of {}", SUITES.join(", ")))),
    }
}
