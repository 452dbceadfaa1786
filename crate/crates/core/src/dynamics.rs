//! Collective dynamics: Lie-Poisson flows on `h*_{c,theta}`, reconstruction of
//! the group curve, collective and direct trajectories, the duality engine, and
//! the sigma-model operator and Lagrangian toolkit.
//!
//! Integrators: RK4 for the dual flow, right-trivialized RKMK4 for `g(t)` and
//! left-trivialized RKMK4 in the body chart for direct integration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::extension::{
    minus_alpha, orbit_generator, Cocycle, ExtError, ExtendedDual, Observable, ShiftedCocycle,
};
use crate::groups::{c, unit, CMatrix, DoubleGroup, GroupElement, GroupError, MatrixGroup, Membership};
use crate::hamspaces::{hamiltonian_vector, jacobian, HamError, HamiltonianSpace, PhasePoint, PhaseSpace};
use crate::liecore::{DoubleLieAlgebra, Factor, LieAlgebra, LieError, Matrix, Vector};

/// Group-membership drift that triggers a projection back onto the group.
pub const MEMBERSHIP_DRIFT: f64 = 1e-6;
/// Largest allowed distance between the initial momenta of a duality run.
pub const MOMENTUM_MATCH_TOL: f64 = 1e-8;
/// Symmetry, self-adjointness and involution tolerance for operator data.
pub const OPERATOR_TOL: f64 = 1e-12;
/// Largest condition number accepted for an inverted block.
pub const MAX_CONDITION: f64 = 1e12;
/// Conditioning bound of the random involution generator.
pub const RANDOM_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynError {
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error(transparent)]
    Ext(#[from] ExtError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("flow blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("group curve left the group at t = {t} (residual {residual:e} after projection)")]
    Membership { t: f64, residual: f64 },
    #[error("initial momenta differ by {dist:e}: A = {a:?}, B = {b:?}")]
    Precondition { a: Vec<f64>, b: Vec<f64>, dist: f64 },
    #[error("momentum targets of the two spaces differ")]
    TargetMismatch,
    #[error("matrix is not symmetric (residual {0:e})")]
    NotSymmetric(f64),
    #[error("operator is not self-adjoint (residual {0:e})")]
    NotSelfAdjoint(f64),
    #[error("operator is not involutive (residual {0:e})")]
    NotInvolutive(f64),
    #[error("singular block at {at} (condition number {cond:e})")]
    SingularBlock { at: String, cond: f64 },
    #[error("family {0:?} does not match the supplied model")]
    FamilyMismatch(LagrangianFamily),
}

fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn asym(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}

fn finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Splits `[0, T]` into `n` equal steps with `T / n` as close to `dt` as possible.
fn grid(t_end: f64, dt: f64) -> Result<(usize, f64), DynError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynError::Grid(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(DynError::Grid(format!("T must be non-negative, got {t_end}")));
    }
    let n = (t_end / dt).round() as usize;
    if n == 0 {
        return Ok((0, dt));
    }
    Ok((n, t_end / n as f64))
}

// ---------------------------------------------------------------------------
// Collective Hamiltonians and trajectories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum HamiltonianForm {
    Quadratic(Matrix),
    Custom,
}

/// A function `h` on the extended dual with its Legendre transform `L_h`.
#[derive(Debug, Clone)]
pub struct CollectiveHamiltonian {
    h: Observable,
    form: HamiltonianForm,
    scale: f64,
}

impl CollectiveHamiltonian {
    /// `h(xi) = <xi, Q xi> / 2`.
    pub fn quadratic(q: Matrix) -> Result<Self, DynError> {
        let r = asym(&q);
        if r > OPERATOR_TOL {
            return Err(DynError::NotSymmetric(r));
        }
        Ok(CollectiveHamiltonian { h: Observable::quadratic(q.clone()), form: HamiltonianForm::Quadratic(q), scale: 1.0 })
    }

    pub fn custom(h: Observable) -> Self {
        CollectiveHamiltonian { h, form: HamiltonianForm::Custom, scale: 1.0 }
    }

    pub fn zero(dim: usize) -> Self {
        Self::quadratic(Matrix::zeros(dim, dim)).expect("zero matrix is symmetric")
    }

    pub fn form(&self) -> &HamiltonianForm {
        &self.form
    }

    pub fn value(&self, xi: &Vector) -> f64 {
        self.scale * self.h.value(xi)
    }

    /// `L_h(xi)` in `h` coordinates.
    pub fn legendre(&self, xi: &Vector) -> Result<Vector, DynError> {
        Ok(self.h.gradient(xi)? * self.scale)
    }

    /// `-h`, used for anti-Poisson momentum maps.
    pub fn reversed(&self) -> Self {
        CollectiveHamiltonian { scale: -self.scale, ..self.clone() }
    }
}

/// Sampled trajectory on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    /// `g(t)` with `g(0) = e`, when reconstructed.
    pub group_curve: Option<Vec<GroupElement>>,
    /// Number of projections back onto the group.
    pub renormalizations: usize,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("trajectories hold the initial state")
    }

    /// CSV with header `t,<state labels>,<group matrix entries>`.
    pub fn to_csv<F: Fn(&S) -> Vec<f64>>(&self, labels: &[String], coords: F) -> String {
        let mut header = vec!["t".to_string()];
        header.extend(labels.iter().cloned());
        if let Some(g) = self.group_curve.as_ref().and_then(|g| g.first()) {
            for i in 0..g.size() {
                for j in 0..g.size() {
                    header.push(format!("g{i}{j}_re"));
                    header.push(format!("g{i}{j}_im"));
                }
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for (k, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![*t];
            row.extend(coords(s));
            if let Some(g) = &self.group_curve {
                row.extend(g[k].flatten());
            }
            out.push_str(&row.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

fn lp_field(
    h: &CollectiveHamiltonian,
    c: &ShiftedCocycle,
    alg: &LieAlgebra,
    b: f64,
    xi: &Vector,
) -> Result<Vector, DynError> {
    Ok(orbit_generator(c, alg, &h.legendre(xi)?, &ExtendedDual::new(xi.clone(), b)))
}

/// RK4 stage values `Y1..Y4` and the next state.
fn lp_stages(
    h: &CollectiveHamiltonian,
    c: &ShiftedCocycle,
    alg: &LieAlgebra,
    b: f64,
    xi: &Vector,
    dt: f64,
) -> Result<([Vector; 4], Vector), DynError> {
    let y1 = xi.clone();
    let k1 = lp_field(h, c, alg, b, &y1)?;
    let y2 = xi + &k1 * (dt / 2.0);
    let k2 = lp_field(h, c, alg, b, &y2)?;
    let y3 = xi + &k2 * (dt / 2.0);
    let k3 = lp_field(h, c, alg, b, &y3)?;
    let y4 = xi + &k3 * dt;
    let k4 = lp_field(h, c, alg, b, &y4)?;
    let next = xi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    Ok(([y1, y2, y3, y4], next))
}

/// RK4 on `xi' = -ad*_{L_h(xi)} xi - b c_hat_theta(L_h(xi))` at fixed `b`.
pub fn lie_poisson_flow(
    h: &CollectiveHamiltonian,
    c: &ShiftedCocycle,
    alg: &LieAlgebra,
    xi0: &ExtendedDual,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory<ExtendedDual>, DynError> {
    if xi0.xi.len() != alg.dim() {
        return Err(LieError::Dimension { expected: alg.dim(), got: xi0.xi.len() }.into());
    }
    let (n, dt) = grid(t_end, dt)?;
    let mut times = vec![0.0];
    let mut states = vec![xi0.clone()];
    let mut xi = xi0.xi.clone();
    for k in 0..n {
        let (_, next) = lp_stages(h, c, alg, xi0.b, &xi, dt)?;
        let t = (k + 1) as f64 * dt;
        if !finite(&next) {
            return Err(DynError::BlowUp { t });
        }
        xi = next;
        times.push(t);
        states.push(ExtendedDual::new(xi.clone(), xi0.b));
    }
    Ok(Trajectory { times, states, group_curve: None, renormalizations: 0 })
}

/// `dexp^{-1}_theta(a)` truncated after the fourth-order term.
pub(crate) fn dexpinv(alg: &LieAlgebra, theta: &Vector, a: &Vector) -> Vector {
    let b1 = alg.br(theta, a);
    let b2 = alg.br(theta, &b1);
    a - b1 * 0.5 + b2 / 12.0
}

/// Nearest group element for the memberships that admit a cheap projection.
fn project_to_group(membership: Membership, m: &CMatrix) -> Option<CMatrix> {
    match membership {
        Membership::SL2C => {
            let root = m.determinant().sqrt();
            Some(m / root)
        }
        Membership::Se2Weighted { a, b } => {
            let w = (a * b).sqrt();
            let cs = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
            let sn = 0.5 * (m[(1, 0)].re * w / b - m[(0, 1)].re * w / a);
            let phi = sn.atan2(cs);
            let (s, co) = phi.sin_cos();
            let mut out = CMatrix::identity(3, 3);
            out[(0, 0)] = c(co, 0.0);
            out[(1, 1)] = c(co, 0.0);
            out[(0, 1)] = c(-a * s / w, 0.0);
            out[(1, 0)] = c(b * s / w, 0.0);
            out[(0, 2)] = c(m[(0, 2)].re, 0.0);
            out[(1, 2)] = c(m[(1, 2)].re, 0.0);
            Some(out)
        }
        _ => None,
    }
}

/// Fills `group_curve` with `g' g^{-1} = L_h(xi(t))`, `g(0) = e`, by RKMK4 steps
/// `g_{k+1} = exp(Theta_k) g_k` using the RK4 stages of the dual flow.
pub fn reconstruct_group_curve(
    h: &CollectiveHamiltonian,
    c: &ShiftedCocycle,
    group: &MatrixGroup,
    traj: &Trajectory<ExtendedDual>,
) -> Result<Trajectory<ExtendedDual>, DynError> {
    let alg = group.algebra();
    let mut g = group.identity();
    let mut curve = vec![g.clone()];
    let mut renorm = 0;
    for k in 0..traj.len().saturating_sub(1) {
        let dt = traj.times[k + 1] - traj.times[k];
        let p = &traj.states[k];
        let (ys, _) = lp_stages(h, c, alg, p.b, &p.xi, dt)?;
        let a: Vec<Vector> = ys.iter().map(|y| h.legendre(y)).collect::<Result<_, _>>()?;
        let k1 = a[0].clone();
        let k2 = dexpinv(alg, &(&k1 * (dt / 2.0)), &a[1]);
        let k3 = dexpinv(alg, &(&k2 * (dt / 2.0)), &a[2]);
        let k4 = dexpinv(alg, &(&k3 * dt), &a[3]);
        let theta = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        g = group.exp(&theta).mul(&g);
        let t = traj.times[k + 1];
        if g.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DynError::BlowUp { t });
        }
        let drift = group.membership_residual(&g);
        if drift > MEMBERSHIP_DRIFT {
            let projected = project_to_group(group.membership(), g.matrix());
            let residual = projected.as_ref().map_or(drift, |m| group.membership().residual(m));
            match projected {
                Some(m) if residual <= MEMBERSHIP_DRIFT => {
                    g = GroupElement::from_matrix(m);
                    renorm += 1;
                }
                _ => return Err(DynError::Membership { t, residual }),
            }
        }
        curve.push(g.clone());
    }
    Ok(Trajectory {
        times: traj.times.clone(),
        states: traj.states.clone(),
        group_curve: Some(curve),
        renormalizations: renorm,
    })
}

// ---------------------------------------------------------------------------
// Spaces carrying a momentum map
// ---------------------------------------------------------------------------

/// A phase space with an H-action and an equivariant momentum map into `h*_{c,theta}`.
pub trait CollectiveSpace: PhaseSpace {
    fn group(&self) -> &MatrixGroup;

    fn target_cocycle(&self) -> ShiftedCocycle;

    fn act(&self, l: &GroupElement, p: &Self::Point) -> Result<Self::Point, HamError>;

    fn momentum(&self, p: &Self::Point) -> Result<ExtendedDual, HamError>;

    /// `-1` when the momentum map is anti-Poisson.
    fn orientation(&self) -> f64 {
        1.0
    }

    fn point_dist(&self, p: &Self::Point, q: &Self::Point) -> f64;

    /// Representative of `next` closest to `prev` (used to unwrap angles).
    fn align(&self, _prev: &Self::Point, next: Self::Point) -> Self::Point {
        next
    }

    fn coord_labels(&self) -> Vec<String>;

    fn coords(&self, p: &Self::Point) -> Vec<f64>;
}

fn matrix_labels(size: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..size {
        for j in 0..size {
            out.push(format!("l{i}{j}_re"));
            out.push(format!("l{i}{j}_im"));
        }
    }
    out
}

fn phase_point_labels(size: usize, fiber: usize) -> Vec<String> {
    let mut out = matrix_labels(size);
    out.extend((0..fiber).map(|i| format!("fiber{i}")));
    out
}

fn phase_point_coords(p: &PhasePoint) -> Vec<f64> {
    let mut out = p.base.flatten();
    out.extend(p.fiber.iter());
    out
}

impl CollectiveSpace for HamiltonianSpace {
    fn group(&self) -> &MatrixGroup {
        HamiltonianSpace::group(self)
    }

    fn target_cocycle(&self) -> ShiftedCocycle {
        HamiltonianSpace::target_cocycle(self)
    }

    fn act(&self, l: &GroupElement, p: &PhasePoint) -> Result<PhasePoint, HamError> {
        HamiltonianSpace::act(self, l, p)
    }

    fn momentum(&self, p: &PhasePoint) -> Result<ExtendedDual, HamError> {
        HamiltonianSpace::momentum(self, p)
    }

    fn orientation(&self) -> f64 {
        HamiltonianSpace::orientation(self)
    }

    fn point_dist(&self, p: &PhasePoint, q: &PhasePoint) -> f64 {
        p.dist(q)
    }

    fn coord_labels(&self) -> Vec<String> {
        phase_point_labels(HamiltonianSpace::group(self).matrix_size(), self.tangent_dim() / 2)
    }

    fn coords(&self, p: &PhasePoint) -> Vec<f64> {
        phase_point_coords(p)
    }
}

/// `T*G` in left trivialization `(g, mu)` with the cotangent lift of left
/// multiplication; its momentum is the spatial momentum `Ad*_{g^{-1}} mu`.
#[derive(Debug, Clone)]
pub struct RigidBody {
    group: MatrixGroup,
}

impl RigidBody {
    pub fn new(group: MatrixGroup) -> Self {
        RigidBody { group }
    }
}

impl PhaseSpace for RigidBody {
    type Point = PhasePoint;

    fn tangent_dim(&self) -> usize {
        2 * self.group.dim()
    }

    fn omega_matrix(&self, p: &PhasePoint) -> Matrix {
        let k = self.group.dim();
        let alg = self.group.algebra();
        let top = Matrix::from_fn(k, k, |i, j| p.fiber.dot(&alg.br(&unit(k, i), &unit(k, j))));
        let mut omega = Matrix::zeros(2 * k, 2 * k);
        omega.view_mut((0, 0), (k, k)).copy_from(&top);
        omega.view_mut((0, k), (k, k)).fill_with_identity();
        omega.view_mut((k, 0), (k, k)).copy_from(&(-Matrix::identity(k, k)));
        omega
    }

    fn retract(&self, p: &PhasePoint, v: &Vector) -> PhasePoint {
        let k = self.group.dim();
        PhasePoint::new(p.base.mul(&self.group.exp(&v.rows(0, k).into_owned())), &p.fiber + v.rows(k, k))
    }

    fn tangent_bracket(&self, v: &Vector, w: &Vector) -> Vector {
        let k = self.group.dim();
        let b = self.group.algebra().br(&v.rows(0, k).into_owned(), &w.rows(0, k).into_owned());
        let mut out = Vector::zeros(2 * k);
        out.rows_mut(0, k).copy_from(&b);
        out
    }
}

impl CollectiveSpace for RigidBody {
    fn group(&self) -> &MatrixGroup {
        &self.group
    }

    fn target_cocycle(&self) -> ShiftedCocycle {
        ShiftedCocycle::unshifted(Cocycle::Zero, self.group.dim())
    }

    fn act(&self, l: &GroupElement, p: &PhasePoint) -> Result<PhasePoint, HamError> {
        Ok(PhasePoint::new(l.mul(&p.base), p.fiber.clone()))
    }

    fn momentum(&self, p: &PhasePoint) -> Result<ExtendedDual, HamError> {
        if p.fiber.len() != self.group.dim() {
            return Err(LieError::Dimension { expected: self.group.dim(), got: p.fiber.len() }.into());
        }
        Ok(ExtendedDual::unit(self.group.coadjoint_inv(&p.base, &p.fiber)))
    }

    fn point_dist(&self, p: &PhasePoint, q: &PhasePoint) -> f64 {
        p.dist(q)
    }

    fn coord_labels(&self) -> Vec<String> {
        phase_point_labels(self.group.matrix_size(), self.group.dim())
    }

    fn coords(&self, p: &PhasePoint) -> Vec<f64> {
        phase_point_coords(p)
    }
}

/// The pendulum `T*S^1 = {(theta, p)}` with `k1 k2` times the standard form and
/// momentum `(k1 r cos theta, k2 r sin theta, p)` into weighted `se(2)*`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    group: MatrixGroup,
    k1: f64,
    k2: f64,
    r: f64,
}

impl Pendulum {
    pub fn new(group: MatrixGroup, k1: f64, k2: f64, r: f64) -> Self {
        Pendulum { group, k1, k2, r }
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn embed(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![self.k1 * self.r * x[0].cos(), self.k2 * self.r * x[0].sin(), x[1]])
    }

    /// Inverse of [`Pendulum::embed`] on its image.
    pub fn chart(&self, beta: &Vector) -> Vector {
        Vector::from_vec(vec![(beta[1] / self.k2).atan2(beta[0] / self.k1), beta[2]])
    }
}

impl PhaseSpace for Pendulum {
    type Point = Vector;

    fn tangent_dim(&self) -> usize {
        2
    }

    fn omega_matrix(&self, _p: &Vector) -> Matrix {
        let k = self.k1 * self.k2;
        Matrix::from_row_slice(2, 2, &[0.0, k, -k, 0.0])
    }

    fn retract(&self, p: &Vector, v: &Vector) -> Vector {
        p + v
    }

    fn tangent_bracket(&self, _v: &Vector, _w: &Vector) -> Vector {
        Vector::zeros(2)
    }
}

impl CollectiveSpace for Pendulum {
    fn group(&self) -> &MatrixGroup {
        &self.group
    }

    fn target_cocycle(&self) -> ShiftedCocycle {
        ShiftedCocycle::unshifted(Cocycle::Zero, self.group.dim())
    }

    fn act(&self, l: &GroupElement, p: &Vector) -> Result<Vector, HamError> {
        let beta = self.group.coadjoint_inv(l, &self.embed(p));
        Ok(self.align(p, self.chart(&beta)))
    }

    fn momentum(&self, p: &Vector) -> Result<ExtendedDual, HamError> {
        if p.len() != 2 {
            return Err(LieError::Dimension { expected: 2, got: p.len() }.into());
        }
        Ok(ExtendedDual::unit(self.embed(p)))
    }

    fn point_dist(&self, p: &Vector, q: &Vector) -> f64 {
        (p - q).amax()
    }

    fn align(&self, prev: &Vector, mut next: Vector) -> Vector {
        let tau = std::f64::consts::TAU;
        next[0] -= tau * ((next[0] - prev[0]) / tau).round();
        next
    }

    fn coord_labels(&self) -> Vec<String> {
        vec!["theta".into(), "p".into()]
    }

    fn coords(&self, p: &Vector) -> Vec<f64> {
        p.iter().cloned().collect()
    }
}

// ---------------------------------------------------------------------------
// Collective and direct trajectories
// ---------------------------------------------------------------------------

/// Dual flow from `xi0` together with its reconstructed group curve.
pub fn collective_curve(
    h: &CollectiveHamiltonian,
    c: &ShiftedCocycle,
    group: &MatrixGroup,
    xi0: &ExtendedDual,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory<ExtendedDual>, DynError> {
    let flow = lie_poisson_flow(h, c, group.algebra(), xi0, t_end, dt)?;
    reconstruct_group_curve(h, c, group, &flow)
}

fn effective<S: CollectiveSpace>(space: &S, h: &CollectiveHamiltonian) -> CollectiveHamiltonian {
    if space.orientation() < 0.0 {
        h.reversed()
    } else {
        h.clone()
    }
}

fn orbit_points<S: CollectiveSpace>(
    space: &S,
    p0: &S::Point,
    curve: &Trajectory<ExtendedDual>,
) -> Result<Trajectory<S::Point>, DynError> {
    let gs = curve.group_curve.as_ref().expect("curve is reconstructed");
    let mut states: Vec<S::Point> = Vec::with_capacity(gs.len());
    let id = space.group().identity();
    for g in gs {
        // The identity acts trivially; skipping it keeps static runs bit-exact.
        let q = if g.matrix() == id.matrix() { p0.clone() } else { space.act(g, p0)? };
        let q = match states.last() {
            Some(prev) => space.align(prev, q),
            None => q,
        };
        states.push(q);
    }
    Ok(Trajectory {
        times: curve.times.clone(),
        states,
        group_curve: curve.group_curve.clone(),
        renormalizations: curve.renormalizations,
    })
}

/// `p(t) = g(t) . p0` with `g` reconstructed from the dual flow through `momentum(p0)`.
pub fn collective_trajectory<S: CollectiveSpace>(
    space: &S,
    p0: &S::Point,
    h: &CollectiveHamiltonian,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory<S::Point>, DynError> {
    let eff = effective(space, h);
    let xi0 = space.momentum(p0)?;
    let curve = collective_curve(&eff, &space.target_cocycle(), space.group(), &xi0, t_end, dt)?;
    orbit_points(space, p0, &curve)
}

/// Body differential of `h o momentum`, with the momentum Jacobian from the
/// five-point stencil.
pub fn collective_differential<'a, S: CollectiveSpace>(
    space: &'a S,
    h: &'a CollectiveHamiltonian,
) -> impl Fn(&S::Point) -> Result<Vector, DynError> + 'a {
    move |p| {
        let mu = space.momentum(p)?;
        let grad = h.legendre(&mu.xi)?;
        let nan = Vector::from_element(mu.xi.len(), f64::NAN);
        let jac = jacobian(space, p, |q| space.momentum(q).map(|m| m.xi).unwrap_or_else(|_| nan.clone()));
        Ok(jac.transpose() * grad)
    }
}

fn body_dexpinv<S: PhaseSpace>(space: &S, v: &Vector, w: &Vector) -> Vector {
    let b1 = space.tangent_bracket(v, w);
    let b2 = space.tangent_bracket(v, &b1);
    w + b1 * 0.5 + b2 / 12.0
}

/// Integrates the Hamiltonian vector field of `dH` directly: left-trivialized
/// RKMK4 in the body chart, with `V` from the pointwise solve `Omega^T V = dH`.
pub fn direct_trajectory<S, F>(space: &S, p0: &S::Point, dh: F, t_end: f64, dt: f64) -> Result<Trajectory<S::Point>, DynError>
where
    S: PhaseSpace,
    F: Fn(&S::Point) -> Result<Vector, DynError>,
{
    let (n, dt) = grid(t_end, dt)?;
    let field = |q: &S::Point, t: f64| -> Result<Vector, DynError> {
        let v = hamiltonian_vector(space, q, &dh(q)?)?;
        if finite(&v) {
            Ok(v)
        } else {
            Err(DynError::BlowUp { t })
        }
    };
    let mut times = vec![0.0];
    let mut states = vec![p0.clone()];
    let mut p = p0.clone();
    for k in 0..n {
        let t = k as f64 * dt;
        let k1 = field(&p, t)?;
        let v2 = &k1 * (dt / 2.0);
        let k2 = body_dexpinv(space, &v2, &field(&space.retract(&p, &v2), t)?);
        let v3 = &k2 * (dt / 2.0);
        let k3 = body_dexpinv(space, &v3, &field(&space.retract(&p, &v3), t)?);
        let v4 = &k3 * dt;
        let k4 = body_dexpinv(space, &v4, &field(&space.retract(&p, &v4), t)?);
        let v = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !finite(&v) {
            return Err(DynError::BlowUp { t: t + dt });
        }
        p = space.retract(&p, &v);
        times.push((k + 1) as f64 * dt);
        states.push(p.clone());
    }
    Ok(Trajectory { times, states, group_curve: None, renormalizations: 0 })
}

/// Fiber rate of the chiral equations of motion in closed form:
/// `ad*_u (eta - C_theta(l^{-1})) - c_hat_theta(u) - (l dH)` with `u` the fiber
/// part of `dh` and `l dH` its base part.
pub fn chiral_fiber_rate(space: &HamiltonianSpace, p: &PhasePoint, dh: &Vector) -> Result<Vector, DynError> {
    let k = p.fiber.len();
    if dh.len() != 2 * k {
        return Err(LieError::Dimension { expected: 2 * k, got: dh.len() }.into());
    }
    let h = HamiltonianSpace::group(space);
    let alg = h.algebra();
    let c = HamiltonianSpace::target_cocycle(space);
    let u = dh.rows(k, k).into_owned();
    let shifted = &p.fiber - c.eval(h, &p.base.inverse());
    Ok(alg.ad_star(&u, &shifted)? - c.chat(alg) * &u - dh.rows(0, k))
}

/// Duality run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub scenario: String,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    #[serde(rename = "residual_A")]
    pub residual_a: f64,
    #[serde(rename = "residual_B")]
    pub residual_b: f64,
    pub momentum_drift: f64,
    pub energy_drift: f64,
}

/// Trajectories of a duality run.
#[derive(Debug, Clone)]
pub struct DualityRun<A, B> {
    pub report: DualityReport,
    /// Shared `xi(t)` and `g(t)`.
    pub curve: Trajectory<ExtendedDual>,
    pub collective_a: Trajectory<A>,
    pub collective_b: Trajectory<B>,
    pub direct_a: Trajectory<A>,
    pub direct_b: Trajectory<B>,
}

fn sup_dist<S: CollectiveSpace>(space: &S, x: &Trajectory<S::Point>, y: &Trajectory<S::Point>) -> f64 {
    x.states.iter().zip(&y.states).map(|(p, q)| space.point_dist(p, q)).fold(0.0, f64::max)
}

fn momentum_drift<S: CollectiveSpace>(
    space: &S,
    traj: &Trajectory<S::Point>,
    curve: &Trajectory<ExtendedDual>,
) -> Result<f64, DynError> {
    let mut worst: f64 = 0.0;
    for (p, xi) in traj.states.iter().zip(&curve.states) {
        worst = worst.max(space.momentum(p)?.dist(xi));
    }
    Ok(worst)
}

/// Drives two dual spaces with one group curve and checks each against its own
/// direct integration.
#[allow(clippy::too_many_arguments)]
pub fn duality_run<A: CollectiveSpace, B: CollectiveSpace>(
    scenario: &str,
    a: &A,
    p0a: &A::Point,
    b: &B,
    p0b: &B::Point,
    h: &CollectiveHamiltonian,
    t_end: f64,
    dt: f64,
) -> Result<DualityRun<A::Point, B::Point>, DynError> {
    let (mu_a, mu_b) = (a.momentum(p0a)?, b.momentum(p0b)?);
    let dist = mu_a.dist(&mu_b);
    if !(dist < MOMENTUM_MATCH_TOL) {
        return Err(DynError::Precondition { a: mu_a.xi.iter().cloned().collect(), b: mu_b.xi.iter().cloned().collect(), dist });
    }
    if a.target_cocycle() != b.target_cocycle() || a.orientation() != b.orientation() {
        return Err(DynError::TargetMismatch);
    }
    let eff = effective(a, h);
    let curve = collective_curve(&eff, &a.target_cocycle(), a.group(), &mu_a, t_end, dt)?;
    let collective_a = orbit_points(a, p0a, &curve)?;
    let collective_b = orbit_points(b, p0b, &curve)?;
    let direct_a = direct_trajectory(a, p0a, collective_differential(a, h), t_end, dt)?;
    let direct_b = direct_trajectory(b, p0b, collective_differential(b, h), t_end, dt)?;
    let e0 = h.value(&mu_a.xi);
    let energy_drift = curve.states.iter().map(|s| (h.value(&s.xi) - e0).abs()).fold(0.0, f64::max);
    let report = DualityReport {
        scenario: scenario.to_string(),
        t_end,
        dt,
        residual_a: sup_dist(a, &collective_a, &direct_a),
        residual_b: sup_dist(b, &collective_b, &direct_b),
        momentum_drift: momentum_drift(a, &collective_a, &curve)?.max(momentum_drift(b, &collective_b, &curve)?),
        energy_drift,
    };
    Ok(DualityRun { report, curve, collective_a, collective_b, direct_a, direct_b })
}

// ---------------------------------------------------------------------------
// Shipped scenarios
// ---------------------------------------------------------------------------

/// Principal moments of inertia with `I1 < I2 < I3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inertia {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Default for Inertia {
    fn default() -> Self {
        Inertia { i1: 1.0, i2: 2.0, i3: 3.0 }
    }
}

impl Inertia {
    pub fn a(&self) -> f64 {
        1.0 / self.i1 - 1.0 / self.i3
    }

    pub fn b(&self) -> f64 {
        1.0 / self.i2 - 1.0 / self.i3
    }

    /// `c = 1 / a`.
    pub fn c(&self) -> f64 {
        1.0 / self.a()
    }

    /// `n2 = c (1/I1 - 1/I2)`.
    pub fn n2(&self) -> f64 {
        self.c() * (1.0 / self.i1 - 1.0 / self.i2)
    }

    pub fn k1(&self) -> f64 {
        (1.0 / self.a()).sqrt()
    }

    pub fn k2(&self) -> f64 {
        (1.0 / self.b()).sqrt()
    }

    /// Casimir `K(beta) = (a beta1^2 + b beta2^2) / 2`.
    pub fn casimir(&self, beta: &Vector) -> f64 {
        0.5 * (self.a() * beta[0] * beta[0] + self.b() * beta[1] * beta[1])
    }

    pub fn group(&self) -> MatrixGroup {
        crate::groups::se2_weighted_group(self.a(), self.b())
    }

    /// `h(beta) = <beta, N beta> / 2` with `N = diag(0, n2, 1)`.
    pub fn hamiltonian(&self) -> CollectiveHamiltonian {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, self.n2(), 1.0]));
        CollectiveHamiltonian::quadratic(q).expect("diagonal matrix is symmetric")
    }

    /// Right-hand side of `theta'' = -K (1/I1 - 1/I2) sin 2 theta` at `K = r^2 / 2`.
    pub fn pendulum_acceleration(&self, r: f64, theta: f64) -> f64 {
        -0.5 * r * r * (1.0 / self.i1 - 1.0 / self.i2) * (2.0 * theta).sin()
    }
}

/// Rigid body on `T*SE(2)` and the pendulum sharing the momentum `beta0`.
#[derive(Debug, Clone)]
pub struct RigidBodyScenario {
    pub inertia: Inertia,
    pub body: RigidBody,
    pub pendulum: Pendulum,
    pub body0: PhasePoint,
    pub pendulum0: Vector,
    pub h: CollectiveHamiltonian,
}

/// Pendulum starts at `(theta0, p0)` on the Casimir level `K = r^2 / 2`; the
/// rigid body starts at `(e, beta0)` with the same momentum.
pub fn rigid_body_pendulum(inertia: Inertia, theta0: f64, p0: f64, r: f64) -> RigidBodyScenario {
    let group = inertia.group();
    let pendulum = Pendulum::new(group.clone(), inertia.k1(), inertia.k2(), r);
    let pendulum0 = Vector::from_vec(vec![theta0, p0]);
    let beta0 = pendulum.embed(&pendulum0);
    let body0 = PhasePoint::new(group.identity(), beta0);
    RigidBodyScenario { inertia, body: RigidBody::new(group), pendulum, body0, pendulum0, h: inertia.hamiltonian() }
}

/// `T*N` with `mu_{0,0}` and `T*N*` with `mu~^phi` on a double, started from
/// `l0 . (e, alpha)` and `l0 . (e, 0)`.
#[derive(Debug, Clone)]
pub struct DoubleScenario {
    pub a: HamiltonianSpace,
    pub b: HamiltonianSpace,
    pub p0a: PhasePoint,
    pub p0b: PhasePoint,
    pub h: CollectiveHamiltonian,
}

/// `alpha` is given in `n*` coordinates and must satisfy the alpha condition.
pub fn double_duality(
    double: DoubleGroup,
    base: Cocycle,
    alpha: &Vector,
    l0: &GroupElement,
    e: &SigmaOperator,
) -> Result<DoubleScenario, DynError> {
    use crate::hamspaces::MomentumTag;
    let n = double.n();
    let a = HamiltonianSpace::cotangent_n(double.clone(), base.clone(), alpha, MomentumTag::Mu00)?;
    let b = HamiltonianSpace::cotangent_nstar(double.clone(), base, alpha, MomentumTag::MuTildePhi)?;
    let id = double.identity();
    let alpha_n = double.algebra().restrict(b.alpha(), Factor::NStar);
    let p0a = a.act(l0, &PhasePoint::new(id.clone(), alpha_n))?;
    let p0b = b.act(l0, &PhasePoint::new(id, Vector::zeros(n)))?;
    let h = e.hamiltonian(double.algebra())?;
    Ok(DoubleScenario { a, b, p0a, p0b, h })
}

// ---------------------------------------------------------------------------
// Sigma-model operator and blocks
// ---------------------------------------------------------------------------

/// A self-adjoint involution `E` of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaOperator {
    e: Matrix,
}

impl SigmaOperator {
    pub fn new(d: &DoubleLieAlgebra, e: Matrix) -> Result<Self, DynError> {
        if e.nrows() != d.dim() || e.ncols() != d.dim() {
            return Err(LieError::Dimension { expected: d.dim(), got: e.nrows() }.into());
        }
        let op = SigmaOperator { e };
        let sa = op.self_adjoint_residual(d);
        if sa > OPERATOR_TOL {
            return Err(DynError::NotSelfAdjoint(sa));
        }
        let inv = op.involution_residual();
        if inv > OPERATOR_TOL {
            return Err(DynError::NotInvolutive(inv));
        }
        Ok(op)
    }

    /// `E(X, xi) = (psi_bar xi, psi X)`.
    pub fn swap(d: &DoubleLieAlgebra) -> Self {
        SigmaOperator { e: d.psi().clone() }
    }

    /// `E = psi exp(X)` with `X = [[A, B], [-B, -A]]`, `A` symmetric and `B`
    /// antisymmetric; equivalently `E = S diag(I, -I) S^{-1}` with `S` orthogonal
    /// for the pairing. Entries of `A`, `B` are uniform in `[-scale, scale]`.
    pub fn random<R: Rng>(d: &DoubleLieAlgebra, rng: &mut R, scale: f64) -> Result<Self, DynError> {
        let n = d.n();
        loop {
            let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-scale..=scale));
            a = (&a + a.transpose()) * 0.5;
            let mut b = Matrix::from_fn(n, n, |_, _| rng.random_range(-scale..=scale));
            b = (&b - b.transpose()) * 0.5;
            let mut x = Matrix::zeros(2 * n, 2 * n);
            x.view_mut((0, 0), (n, n)).copy_from(&a);
            x.view_mut((0, n), (n, n)).copy_from(&b);
            x.view_mut((n, 0), (n, n)).copy_from(&(-&b));
            x.view_mut((n, n), (n, n)).copy_from(&(-&a));
            let eig = x.symmetric_eigen();
            let w = Matrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
            let mut g = &eig.eigenvectors * w * eig.eigenvectors.transpose();
            g = (&g + g.transpose()) * 0.5;
            if condition_number(&g) > RANDOM_CONDITION {
                continue;
            }
            return SigmaOperator::new(d, d.psi() * g);
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.e
    }

    /// `|psi E - (psi E)^T|_inf`, zero when `(EX, Y) = (X, EY)`.
    pub fn self_adjoint_residual(&self, d: &DoubleLieAlgebra) -> f64 {
        asym(&(d.psi() * &self.e))
    }

    pub fn involution_residual(&self) -> f64 {
        (&self.e * &self.e - Matrix::identity(self.e.nrows(), self.e.ncols())).amax()
    }

    /// `h(xi) = (psi_bar xi, E psi_bar xi) / 2`.
    pub fn hamiltonian(&self, d: &DoubleLieAlgebra) -> Result<CollectiveHamiltonian, DynError> {
        let pb = d.psi_bar();
        let q = pb.transpose() * d.psi() * &self.e * pb;
        CollectiveHamiltonian::quadratic((&q + q.transpose()) * 0.5)
    }

    /// `E_l = Ad_{l^{-1}} E Ad_l`.
    pub fn conjugate(&self, h: &MatrixGroup, l: &GroupElement) -> Matrix {
        h.ad_matrix(&l.inverse()) * &self.e * h.ad_matrix(l)
    }
}

/// Blocks of `E_g` with respect to a splitting `h = V + V~`, coordinates ordered
/// `(V, V~)`: `G = (Pi_V E_g Pi_V~)^{-1}` and `B = -G Pi_V E_g Pi_V`.
#[derive(Debug, Clone)]
pub struct SigmaBlocks {
    /// `E_g` in the `(V, V~)` ordering.
    pub e_g: Matrix,
    pub g_op: Matrix,
    pub b_op: Matrix,
    pub g_inv: Matrix,
    pub condition: f64,
}

impl SigmaBlocks {
    fn from_ordered(e_g: Matrix, at: &GroupElement) -> Result<Self, DynError> {
        let n = e_g.nrows() / 2;
        let top_right = e_g.view((0, n), (n, n)).into_owned();
        let cond = condition_number(&top_right);
        if !(cond < MAX_CONDITION) {
            return Err(DynError::SingularBlock { at: format!("{:?}", at.flatten()), cond });
        }
        let g_op = top_right.clone().try_inverse().ok_or(DynError::SingularBlock {
            at: format!("{:?}", at.flatten()),
            cond,
        })?;
        let b_op = -(&g_op * e_g.view((0, 0), (n, n)));
        Ok(SigmaBlocks { e_g, g_op, b_op, g_inv: top_right, condition: cond })
    }

    pub fn n(&self) -> usize {
        self.g_op.nrows()
    }

    /// `[[-G^{-1} B, G^{-1}], [G - B G^{-1} B, B G^{-1}]]`.
    pub fn reassemble(&self) -> Matrix {
        let n = self.n();
        let (g, b, gi) = (&self.g_op, &self.b_op, &self.g_inv);
        let mut out = Matrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&(-(gi * b)));
        out.view_mut((0, n), (n, n)).copy_from(gi);
        out.view_mut((n, 0), (n, n)).copy_from(&(g - b * gi * b));
        out.view_mut((n, n), (n, n)).copy_from(&(b * gi));
        out
    }

    pub fn reassembly_residual(&self) -> f64 {
        (self.reassemble() - &self.e_g).amax()
    }

    /// `|G - G^T|_inf`.
    pub fn symmetry_residual(&self) -> f64 {
        asym(&self.g_op)
    }

    /// `|B + B^T|_inf`.
    pub fn antisymmetry_residual(&self) -> f64 {
        (&self.b_op + self.b_op.transpose()).amax()
    }

    /// Worst of the two lower-block relations `rho_V~ E rho_V~ = -G^{-1} B` and
    /// `rho_V E rho_V~ = G - B G^{-1} B`, read off the diagonal and lower-left blocks.
    pub fn block_relation_residual(&self) -> f64 {
        let n = self.n();
        let r = self.reassemble();
        let d1 = (r.view((0, 0), (n, n)) - self.e_g.view((0, 0), (n, n))).amax();
        let d2 = (r.view((n, 0), (n, n)) - self.e_g.view((n, 0), (n, n))).amax();
        d1.max(d2)
    }

    /// `(1/2)<q' - q_, (G + B)(q' + q_)>` for velocity `qdot` and offset `q_`.
    pub fn sigma_lagrangian(&self, qdot: &Vector, qprime: &Vector) -> f64 {
        0.5 * (qdot - qprime).dot(&((&self.g_op + &self.b_op) * (qdot + qprime)))
    }

    /// `|(1/2)<qdot - q', (G+B)(qdot + q')> - <p, qdot> + (1/2)(z, E_g z)|` with
    /// `p = G qdot + B q'` and `z = (q', p)`.
    pub fn master_identity_residual(&self, qdot: &Vector, qprime: &Vector) -> f64 {
        let n = self.n();
        let p = &self.g_op * qdot + &self.b_op * qprime;
        let mut z = Vector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(qprime);
        z.rows_mut(n, n).copy_from(&p);
        let pair = |x: &Vector, y: &Vector| x.rows(0, n).dot(&y.rows(n, n)) + x.rows(n, n).dot(&y.rows(0, n));
        let rhs = p.dot(qdot) - 0.5 * pair(&z, &(&self.e_g * &z));
        (self.sigma_lagrangian(qdot, qprime) - rhs).abs()
    }
}

/// Blocks of `E_g` in the `n + n*` splitting.
pub fn sigma_blocks(e: &SigmaOperator, dg: &DoubleGroup, g: &GroupElement) -> Result<SigmaBlocks, DynError> {
    SigmaBlocks::from_ordered(e.conjugate(dg.group(), g), g)
}

/// Blocks of `E_h~` in the dual splitting `n* + n`.
pub fn dual_sigma_blocks(e: &SigmaOperator, dg: &DoubleGroup, htilde: &GroupElement) -> Result<SigmaBlocks, DynError> {
    let swap = dg.algebra().psi();
    SigmaBlocks::from_ordered(swap * e.conjugate(dg.group(), htilde) * swap, htilde)
}

// ---------------------------------------------------------------------------
// Lagrangians
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagrangianFamily {
    /// Chiral WZNW model on `omega_{c,0}`.
    Lc0,
    /// Chiral WZNW model on `omega_{c,-alpha}`.
    LcMinusAlpha,
    /// Sigma model on `T*N` from `h o mu_{0,0}`.
    Lsigma0,
    /// Sigma model on `T*N` from `h o phi o mu_{0,alpha}`.
    LsigmaAlpha,
    /// Dual sigma model on `T*N*` from `h o mu~^phi`.
    LtildeAlpha,
}

/// Sigma-model data: the double, `E`, the base cocycle and `alpha` (in `h`
/// coordinates, supported in `n*`).
#[derive(Debug, Clone)]
pub struct SigmaModel {
    double: DoubleGroup,
    e: SigmaOperator,
    base: Cocycle,
    alpha: Vector,
}

impl SigmaModel {
    pub fn new(double: DoubleGroup, e: SigmaOperator, base: Cocycle, alpha: &Vector) -> Result<Self, DynError> {
        let alpha = crate::extension::alpha_in_h(double.algebra(), alpha)?;
        Ok(SigmaModel { double, e, base, alpha })
    }

    pub fn operator(&self) -> &SigmaOperator {
        &self.e
    }

    /// `psi_bar C(l^{-1})` in `h`.
    fn offset(&self, l: &GroupElement) -> Vector {
        let d = self.double.algebra();
        d.to_algebra(&self.base.eval(self.double.group(), &l.inverse()))
    }

    /// `W = lambda (+ alpha) - psi_bar C(g^{-1})`, so that `H = (W, E_g W) / 2`.
    fn w_n(&self, g: &GroupElement, lambda: &Vector, with_alpha: bool) -> Vector {
        let d = self.double.algebra();
        let mut w = d.embed(lambda, Factor::NStar) - self.offset(g);
        if with_alpha {
            w += &self.alpha;
        }
        w
    }

    /// `Pi_n psi_bar C(g^{-1})`, the offset entering the sigma Lagrangians.
    pub fn q_prime(&self, g: &GroupElement) -> Vector {
        self.double.algebra().restrict(&self.offset(g), Factor::N)
    }

    pub fn hamiltonian_n(&self, g: &GroupElement, lambda: &Vector, with_alpha: bool) -> f64 {
        let d = self.double.algebra();
        let w = self.w_n(g, lambda, with_alpha);
        0.5 * d.pair(&w, &(self.e.conjugate(self.double.group(), g) * &w))
    }

    /// Body velocity `g^{-1} g' = Pi_n E_g W`.
    pub fn velocity_n(&self, g: &GroupElement, lambda: &Vector, with_alpha: bool) -> Vector {
        let d = self.double.algebra();
        let w = self.w_n(g, lambda, with_alpha);
        d.restrict(&(self.e.conjugate(self.double.group(), g) * w), Factor::N)
    }

    /// Closed form `G^{-1} B q' + G^{-1} (lambda + alpha - r)`, where `r` is the
    /// `n*` part of `psi_bar C(g^{-1})` (zero for compatible cocycles).
    pub fn velocity_n_closed(&self, g: &GroupElement, lambda: &Vector, with_alpha: bool) -> Result<Vector, DynError> {
        let blocks = sigma_blocks(&self.e, &self.double, g)?;
        let p = self.momentum_n(g, lambda, with_alpha);
        Ok(&blocks.g_inv * (&blocks.b_op * self.q_prime(g) + p))
    }

    fn momentum_n(&self, g: &GroupElement, lambda: &Vector, with_alpha: bool) -> Vector {
        self.double.algebra().restrict(&self.w_n(g, lambda, with_alpha), Factor::NStar)
    }

    /// Inverse Legendre map `lambda = G v - B q' (- alpha) + r`.
    pub fn fiber_n(&self, g: &GroupElement, v: &Vector, with_alpha: bool) -> Result<Vector, DynError> {
        let d = self.double.algebra();
        let blocks = sigma_blocks(&self.e, &self.double, g)?;
        let mut lambda = &blocks.g_op * v - &blocks.b_op * self.q_prime(g) + d.restrict(&self.offset(g), Factor::NStar);
        if with_alpha {
            lambda -= d.restrict(&self.alpha, Factor::NStar);
        }
        Ok(lambda)
    }

    /// `(1/2)<(G + B)(v - q'), v + q'> (- <v, alpha>) + <r, v>`.
    pub fn lagrangian_n(&self, g: &GroupElement, v: &Vector, with_alpha: bool) -> Result<f64, DynError> {
        let d = self.double.algebra();
        let blocks = sigma_blocks(&self.e, &self.double, g)?;
        let q = self.q_prime(g);
        let mut l = 0.5 * (v + &q).dot(&((&blocks.g_op + &blocks.b_op) * (v - &q)));
        l += d.restrict(&self.offset(g), Factor::NStar).dot(v);
        if with_alpha {
            l -= d.restrict(&self.alpha, Factor::NStar).dot(v);
        }
        Ok(l)
    }

    /// `W~ = X + alpha - psi_bar C(h~^{-1})`.
    fn w_nstar(&self, ht: &GroupElement, x: &Vector) -> Vector {
        self.double.algebra().embed(x, Factor::N) + &self.alpha - self.offset(ht)
    }

    /// `Pi_n* psi_bar C(h~^{-1})`.
    pub fn q_prime_dual(&self, ht: &GroupElement) -> Vector {
        self.double.algebra().restrict(&self.offset(ht), Factor::NStar)
    }

    pub fn hamiltonian_nstar(&self, ht: &GroupElement, x: &Vector) -> f64 {
        let d = self.double.algebra();
        let w = self.w_nstar(ht, x);
        0.5 * d.pair(&w, &(self.e.conjugate(self.double.group(), ht) * &w))
    }

    /// Body velocity `h~^{-1} h~' = Pi_n* E_h~ W~`.
    pub fn velocity_nstar(&self, ht: &GroupElement, x: &Vector) -> Vector {
        let d = self.double.algebra();
        d.restrict(&(self.e.conjugate(self.double.group(), ht) * self.w_nstar(ht, x)), Factor::NStar)
    }

    /// `X = G~ u + B~ (alpha - q~') + r~`, `r~` the `n` part of `psi_bar C(h~^{-1})`.
    pub fn fiber_nstar(&self, ht: &GroupElement, u: &Vector) -> Result<Vector, DynError> {
        let d = self.double.algebra();
        let blocks = dual_sigma_blocks(&self.e, &self.double, ht)?;
        let shift = d.restrict(&self.alpha, Factor::NStar) - self.q_prime_dual(ht);
        Ok(&blocks.g_op * u + &blocks.b_op * shift + d.restrict(&self.offset(ht), Factor::N))
    }

    /// `(1/2)(u + q~' - alpha, (G~ + B~)(u - q~' + alpha)) + <r~, u>`.
    pub fn lagrangian_nstar(&self, ht: &GroupElement, u: &Vector) -> Result<f64, DynError> {
        let d = self.double.algebra();
        let blocks = dual_sigma_blocks(&self.e, &self.double, ht)?;
        let shift = d.restrict(&self.alpha, Factor::NStar) - self.q_prime_dual(ht);
        let l = 0.5 * (u - &shift).dot(&((&blocks.g_op + &blocks.b_op) * (u + &shift)));
        Ok(l + d.restrict(&self.offset(ht), Factor::N).dot(u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WznwFormulation {
    /// `(H x h*, omega_{c,0})` with `Phi = C_{-alpha}(l) + alpha`.
    ZeroShift,
    /// `(H x h*, omega_{c,-alpha})` with `Phi = C_{-alpha}(l)`.
    MinusAlpha,
}

/// Quadratic chiral Hamiltonian
/// `H = (xi, L3* xi)/2 + (xi, L2* Phi) - (Phi, L2* Phi)/2`, `xi = Ad*_{l^{-1}} eta`.
/// `L2`, `L3` act on `h` and are self-adjoint for `( , )_h`; `L* = psi L psi_bar`.
#[derive(Debug, Clone)]
pub struct WznwHamiltonian {
    double: DoubleGroup,
    base: Cocycle,
    l2: Matrix,
    l3: Matrix,
    l3_inv: Matrix,
    alpha: Vector,
    formulation: WznwFormulation,
    condition: f64,
}

impl WznwHamiltonian {
    pub fn new(
        double: DoubleGroup,
        base: Cocycle,
        l2: Matrix,
        l3: Matrix,
        alpha: &Vector,
        formulation: WznwFormulation,
    ) -> Result<Self, DynError> {
        let d = double.algebra();
        for m in [&l2, &l3] {
            if m.nrows() != d.dim() || m.ncols() != d.dim() {
                return Err(LieError::Dimension { expected: d.dim(), got: m.nrows() }.into());
            }
            let r = asym(&(d.psi() * m));
            if r > OPERATOR_TOL {
                return Err(DynError::NotSelfAdjoint(r));
            }
        }
        let condition = condition_number(&l3);
        let l3_inv = if condition < MAX_CONDITION { l3.clone().try_inverse() } else { None }
            .ok_or(DynError::SingularBlock { at: "L3".into(), cond: condition })?;
        let alpha = crate::extension::alpha_in_h(d, alpha)?;
        Ok(WznwHamiltonian { double, base, l2, l3, l3_inv, alpha, formulation, condition })
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn formulation(&self) -> WznwFormulation {
        self.formulation
    }

    /// The chiral space carrying this Hamiltonian.
    pub fn chiral_space(&self) -> Result<HamiltonianSpace, DynError> {
        let theta = match self.formulation {
            WznwFormulation::ZeroShift => Vector::zeros(self.double.algebra().dim()),
            WznwFormulation::MinusAlpha => -self.double.algebra().to_dual(&self.alpha),
        };
        Ok(HamiltonianSpace::chiral(self.double.clone(), self.base.clone(), theta)?)
    }

    /// `psi_bar Phi(l)` in `h`.
    fn phi(&self, l: &GroupElement) -> Vector {
        let d = self.double.algebra();
        let c = minus_alpha(self.base.clone(), d, &self.alpha).eval(self.double.group(), l);
        let z = d.to_algebra(&c);
        match self.formulation {
            WznwFormulation::ZeroShift => z + &self.alpha,
            WznwFormulation::MinusAlpha => z,
        }
    }

    fn xi_bar(&self, l: &GroupElement, eta: &Vector) -> Vector {
        self.double.algebra().to_algebra(&self.double.group().coadjoint_inv(l, eta))
    }

    pub fn hamiltonian(&self, l: &GroupElement, eta: &Vector) -> f64 {
        let d = self.double.algebra();
        let z = self.xi_bar(l, eta);
        let f = self.phi(l);
        0.5 * d.pair(&z, &(&self.l3 * &z)) + d.pair(&z, &(&self.l2 * &f)) - 0.5 * d.pair(&f, &(&self.l2 * &f))
    }

    /// Right velocity `l' l^{-1} = L3 xi_bar + L2 Phi_bar`.
    fn right_velocity(&self, l: &GroupElement, eta: &Vector) -> Vector {
        &self.l3 * self.xi_bar(l, eta) + &self.l2 * self.phi(l)
    }

    /// Body velocity `l^{-1} l' = dH/d eta`.
    pub fn velocity(&self, l: &GroupElement, eta: &Vector) -> Result<Vector, DynError> {
        Ok(self.double.group().adjoint(&l.inverse(), &self.right_velocity(l, eta))?)
    }

    /// Inverse Legendre map from the body velocity.
    pub fn fiber(&self, l: &GroupElement, u: &Vector) -> Result<Vector, DynError> {
        let h = self.double.group();
        let w = h.adjoint(l, u)?;
        let z = &self.l3_inv * (w - &self.l2 * self.phi(l));
        Ok(h.ad_matrix(l).transpose() * self.double.algebra().to_dual(&z))
    }

    /// `(L3^{-1} w, w)/2 - (L3^{-1} L2 Phi, w) + (Phi, (L2 + L2 L3^{-1} L2) Phi)/2`
    /// with `w = l' l^{-1}` and the body velocity `u` as input.
    pub fn lagrangian(&self, l: &GroupElement, u: &Vector) -> Result<f64, DynError> {
        let d = self.double.algebra();
        let w = self.double.group().adjoint(l, u)?;
        let f = self.phi(l);
        let li = &self.l3_inv;
        Ok(0.5 * d.pair(&(li * &w), &w) - d.pair(&(li * &self.l2 * &f), &w)
            + 0.5 * d.pair(&f, &((&self.l2 + &self.l2 * li * &self.l2) * &f)))
    }
}

/// Model data for [`lagrangian_eval`].
#[derive(Debug, Clone)]
pub enum LagrangianModel {
    Sigma(SigmaModel),
    Wznw(WznwHamiltonian),
}

fn check_family(family: LagrangianFamily, model: &LagrangianModel) -> Result<(), DynError> {
    use LagrangianFamily as F;
    let ok = match model {
        LagrangianModel::Sigma(_) => matches!(family, F::Lsigma0 | F::LsigmaAlpha | F::LtildeAlpha),
        LagrangianModel::Wznw(w) => matches!(
            (family, w.formulation),
            (F::Lc0, WznwFormulation::ZeroShift) | (F::LcMinusAlpha, WznwFormulation::MinusAlpha)
        ),
    };
    if ok {
        Ok(())
    } else {
        Err(DynError::FamilyMismatch(family))
    }
}

/// Lagrangian at `(base, velocity)`, with `velocity` the body velocity `l^{-1} l'`.
pub fn lagrangian_eval(
    family: LagrangianFamily,
    model: &LagrangianModel,
    base: &GroupElement,
    velocity: &Vector,
) -> Result<f64, DynError> {
    check_family(family, model)?;
    match (model, family) {
        (LagrangianModel::Wznw(w), _) => w.lagrangian(base, velocity),
        (LagrangianModel::Sigma(s), LagrangianFamily::Lsigma0) => s.lagrangian_n(base, velocity, false),
        (LagrangianModel::Sigma(s), LagrangianFamily::LsigmaAlpha) => s.lagrangian_n(base, velocity, true),
        (LagrangianModel::Sigma(s), _) => s.lagrangian_nstar(base, velocity),
    }
}

/// Fiber point reached by the inverse Legendre map.
pub fn legendre_fiber(
    family: LagrangianFamily,
    model: &LagrangianModel,
    base: &GroupElement,
    velocity: &Vector,
) -> Result<Vector, DynError> {
    check_family(family, model)?;
    match (model, family) {
        (LagrangianModel::Wznw(w), _) => w.fiber(base, velocity),
        (LagrangianModel::Sigma(s), LagrangianFamily::Lsigma0) => s.fiber_n(base, velocity, false),
        (LagrangianModel::Sigma(s), LagrangianFamily::LsigmaAlpha) => s.fiber_n(base, velocity, true),
        (LagrangianModel::Sigma(s), _) => s.fiber_nstar(base, velocity),
    }
}

/// Hamiltonian of the family at `(base, fiber)`.
pub fn family_hamiltonian(
    family: LagrangianFamily,
    model: &LagrangianModel,
    base: &GroupElement,
    fiber: &Vector,
) -> Result<f64, DynError> {
    check_family(family, model)?;
    Ok(match (model, family) {
        (LagrangianModel::Wznw(w), _) => w.hamiltonian(base, fiber),
        (LagrangianModel::Sigma(s), LagrangianFamily::Lsigma0) => s.hamiltonian_n(base, fiber, false),
        (LagrangianModel::Sigma(s), LagrangianFamily::LsigmaAlpha) => s.hamiltonian_n(base, fiber, true),
        (LagrangianModel::Sigma(s), _) => s.hamiltonian_nstar(base, fiber),
    })
}

/// `|L(v) - (<fiber(v), v> - H(fiber(v)))|`.
pub fn legendre_residual(
    family: LagrangianFamily,
    model: &LagrangianModel,
    base: &GroupElement,
    velocity: &Vector,
) -> Result<f64, DynError> {
    let fiber = legendre_fiber(family, model, base, velocity)?;
    let l = lagrangian_eval(family, model, base, velocity)?;
    let h = family_hamiltonian(family, model, base, &fiber)?;
    Ok((l - (fiber.dot(velocity) - h)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::extended_coadjoint;
    use crate::hamspaces::{differential, MomentumTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn rvec(r: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
        Vector::from_fn(n, |_, _| r.random_range(-s..s))
    }

    fn rsym(r: &mut ChaCha8Rng, n: usize, s: f64) -> Matrix {
        let m = Matrix::from_fn(n, n, |_, _| r.random_range(-s..s));
        (&m + m.transpose()) * 0.5
    }

    fn cartan() -> Vector {
        Vector::from_vec(vec![0.7, 0.0, 0.0])
    }

    /// Coboundary of `psi(t)` with `t` Cartan in `n*`; compatible with both factors.
    fn cartan_coboundary(dg: &DoubleGroup) -> Cocycle {
        let d = dg.algebra();
        Cocycle::Coboundary(d.to_dual(&d.embed(&Vector::from_vec(vec![0.4, 0.0, 0.0]), Factor::NStar)))
    }

    #[test]
    fn quadratic_form_must_be_symmetric() {
        let mut q = Matrix::identity(3, 3);
        q[(0, 1)] = 1e-9;
        assert!(matches!(CollectiveHamiltonian::quadratic(q), Err(DynError::NotSymmetric(_))));
    }

    #[test]
    fn grid_validation() {
        let h = CollectiveHamiltonian::zero(3);
        let c = ShiftedCocycle::unshifted(Cocycle::Zero, 3);
        let alg = crate::liecore::builtin::se2();
        let xi = ExtendedDual::unit(Vector::zeros(3));
        assert!(matches!(lie_poisson_flow(&h, &c, &alg, &xi, 1.0, 0.0), Err(DynError::Grid(_))));
        assert!(matches!(lie_poisson_flow(&h, &c, &alg, &xi, -1.0, 0.1), Err(DynError::Grid(_))));
        let t = lie_poisson_flow(&h, &c, &alg, &xi, 1.0, 0.3).unwrap();
        assert_eq!(t.len(), 4);
        assert!((t.times[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_is_a_blow_up() {
        let h = CollectiveHamiltonian::custom(Observable::with_gradient(|_| 0.0, |x: &Vector| x * f64::NAN));
        let c = ShiftedCocycle::unshifted(Cocycle::Zero, 3);
        let alg = crate::liecore::builtin::se2();
        let xi = ExtendedDual::unit(Vector::from_vec(vec![1.0, 0.0, 0.0]));
        assert!(matches!(lie_poisson_flow(&h, &c, &alg, &xi, 1.0, 0.1), Err(DynError::BlowUp { .. })));
    }

    #[test]
    fn zero_hamiltonian_is_static() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let s = HamiltonianSpace::cotangent_n(dg.clone(), Cocycle::Zero, &Vector::zeros(3), MomentumTag::Mu00).unwrap();
        let p0 = PhasePoint::new(dg.random_factor(&mut r, Factor::N, 0.5), rvec(&mut r, 3, 1.0));
        let h = CollectiveHamiltonian::zero(6);
        let col = collective_trajectory(&s, &p0, &h, 0.2, 0.01).unwrap();
        for (g, p) in col.group_curve.as_ref().unwrap().iter().zip(&col.states) {
            assert!(g.dist(&dg.identity()) < 1e-15);
            assert!(p.dist(&p0) < 1e-12);
        }
        let dir = direct_trajectory(&s, &p0, collective_differential(&s, &h), 0.2, 0.01).unwrap();
        assert!(dir.last().dist(&p0) < 1e-12);
    }

    #[test]
    fn constant_legendre_transform_gives_one_parameter_subgroup() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let x = rvec(&mut r, 6, 1.0);
        let h = CollectiveHamiltonian::custom(Observable::linear(x.clone()));
        let c = ShiftedCocycle::unshifted(Cocycle::Zero, 6);
        let xi0 = ExtendedDual::unit(rvec(&mut r, 6, 1.0));
        let curve = collective_curve(&h, &c, dg.group(), &xi0, 1.0, 1e-2).unwrap();
        for (t, g) in curve.times.iter().zip(curve.group_curve.as_ref().unwrap()) {
            assert!(g.dist(&dg.group().exp(&(&x * *t))) < 1e-8);
        }
    }

    #[test]
    fn energy_conservation_and_fourth_order_drift() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let alg = dg.group().algebra();
        let h = CollectiveHamiltonian::quadratic(rsym(&mut r, 6, 1.0)).unwrap();
        let c = ShiftedCocycle::unshifted(cartan_coboundary(&dg), 6);
        let xi0 = ExtendedDual::unit(rvec(&mut r, 6, 1.0));
        let drift = |dt: f64| {
            let t = lie_poisson_flow(&h, &c, alg, &xi0, 1.0, dt).unwrap();
            (h.value(&t.last().xi) - h.value(&xi0.xi)).abs()
        };
        assert!(drift(1e-3) < 1e-8);
        let ratio = drift(0.1) / drift(0.05);
        assert!(ratio > 10.0, "ratio {ratio}");
    }

    #[test]
    fn se2_casimir_is_conserved() {
        let inertia = Inertia::default();
        let group = inertia.group();
        let h = inertia.hamiltonian();
        let c = ShiftedCocycle::unshifted(Cocycle::Zero, 3);
        let xi0 = ExtendedDual::unit(Vector::from_vec(vec![0.8, -0.3, 0.5]));
        let t = lie_poisson_flow(&h, &c, group.algebra(), &xi0, 5.0, 1e-3).unwrap();
        let k0 = inertia.casimir(&xi0.xi);
        let worst = t.states.iter().map(|s| (inertia.casimir(&s.xi) - k0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn reconstruction_transports_the_initial_momentum() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let h = CollectiveHamiltonian::quadratic(rsym(&mut r, 6, 0.5)).unwrap();
        let c = ShiftedCocycle::new(cartan_coboundary(&dg), rvec(&mut r, 6, 0.3));
        let xi0 = ExtendedDual::unit(rvec(&mut r, 6, 1.0));
        let curve = collective_curve(&h, &c, dg.group(), &xi0, 1.0, 1e-3).unwrap();
        let gs = curve.group_curve.as_ref().unwrap();
        assert!(gs[0].dist(&dg.identity()) == 0.0);
        for (g, xi) in gs.iter().zip(&curve.states).step_by(50) {
            assert!(extended_coadjoint(&c, dg.group(), g, &xi0).dist(xi) < 1e-6);
            assert!(dg.group().membership_residual(g) < 1e-8);
        }
    }

    #[test]
    fn rigid_body_and_pendulum_share_one_curve() {
        let sc = rigid_body_pendulum(Inertia::default(), 0.7, 0.3, 1.0);
        let dt = 1e-3;
        let run = duality_run("rigid", &sc.body, &sc.body0, &sc.pendulum, &sc.pendulum0, &sc.h, 1.0, dt).unwrap();
        assert!(run.report.residual_a < 1e-6, "{:?}", run.report);
        assert!(run.report.residual_b < 1e-6, "{:?}", run.report);
        assert!(run.report.momentum_drift < 1e-6);
        assert!(run.report.energy_drift < 1e-9);
        let th: Vec<f64> = run.collective_b.states.iter().map(|x| x[0]).collect();
        let mut worst: f64 = 0.0;
        for k in 1..th.len() - 1 {
            let acc = (th[k + 1] - 2.0 * th[k] + th[k - 1]) / (dt * dt);
            worst = worst.max((acc - sc.inertia.pendulum_acceleration(1.0, th[k])).abs());
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn pendulum_map_is_poisson_and_equivariant() {
        let mut r = rng();
        let sc = rigid_body_pendulum(Inertia::default(), 0.2, 0.1, 1.3);
        let pend = &sc.pendulum;
        let x = Vector::from_vec(vec![0.4, -0.2]);
        let l = pend.group().random(&mut r, 0.7);
        let lhs = pend.momentum(&pend.act(&l, &x).unwrap()).unwrap();
        let rhs = extended_coadjoint(&pend.target_cocycle(), pend.group(), &l, &pend.momentum(&x).unwrap());
        assert!(lhs.dist(&rhs) < 1e-12);
        // {beta3, beta1} = b beta2 and {beta3, beta2} = -a beta1 on the pendulum.
        let jac = jacobian(pend, &x, |q| pend.embed(q));
        let br = |i: usize, j: usize| {
            let vi = hamiltonian_vector(pend, &x, &jac.row(i).transpose()).unwrap();
            let vj = hamiltonian_vector(pend, &x, &jac.row(j).transpose()).unwrap();
            vi.dot(&(pend.omega_matrix(&x) * vj))
        };
        let beta = pend.embed(&x);
        assert!((br(2, 0) - sc.inertia.b() * beta[1]).abs() < 1e-9);
        assert!((br(2, 1) + sc.inertia.a() * beta[0]).abs() < 1e-9);
    }

    #[test]
    fn double_duality_matches_direct_integration() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let e = SigmaOperator::swap(dg.algebra());
        let l0 = dg.group().random(&mut r, 0.5);
        let sc = double_duality(dg, Cocycle::Zero, &cartan(), &l0, &e).unwrap();
        let run = duality_run("su2", &sc.a, &sc.p0a, &sc.b, &sc.p0b, &sc.h, 0.3, 1e-3).unwrap();
        assert!(run.report.residual_a < 1e-5, "{:?}", run.report);
        assert!(run.report.residual_b < 1e-5, "{:?}", run.report);
        assert!(run.report.momentum_drift < 1e-6);
        let json = serde_json::to_value(&run.report).unwrap();
        for key in ["scenario", "T", "dt", "residual_A", "residual_B", "momentum_drift", "energy_drift"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn duality_rejects_incompatible_momenta() {
        let sc = rigid_body_pendulum(Inertia::default(), 0.7, 0.3, 1.0);
        let other = Vector::from_vec(vec![0.1, 0.3]);
        let err = duality_run("x", &sc.body, &sc.body0, &sc.pendulum, &other, &sc.h, 0.1, 1e-2).unwrap_err();
        assert!(matches!(err, DynError::Precondition { .. }));
        let h0 = CollectiveHamiltonian::zero(3);
        let run = duality_run("x", &sc.body, &sc.body0, &sc.pendulum, &sc.pendulum0, &h0, 0.1, 1e-2).unwrap();
        assert_eq!(run.report.residual_a, 0.0);
        assert_eq!(run.report.residual_b, 0.0);
    }

    #[test]
    fn chiral_collective_flow_uses_the_reversed_hamiltonian() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let s = HamiltonianSpace::chiral(dg.clone(), cartan_coboundary(&dg), rvec(&mut r, 6, 0.5)).unwrap();
        let p0 = PhasePoint::new(dg.group().random(&mut r, 0.5), rvec(&mut r, 6, 1.0));
        let h = CollectiveHamiltonian::quadratic(rsym(&mut r, 6, 0.5)).unwrap();
        let col = collective_trajectory(&s, &p0, &h, 0.2, 1e-3).unwrap();
        let dir = direct_trajectory(&s, &p0, collective_differential(&s, &h), 0.2, 1e-3).unwrap();
        let worst = col.states.iter().zip(&dir.states).map(|(a, b)| a.dist(b)).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    fn random_self_adjoint(d: &DoubleLieAlgebra, r: &mut ChaCha8Rng, shift: f64) -> Matrix {
        let n = d.dim();
        d.psi() * (rsym(r, n, 0.5) + Matrix::identity(n, n) * shift)
    }

    fn wznw(formulation: WznwFormulation, r: &mut ChaCha8Rng) -> WznwHamiltonian {
        let dg = DoubleGroup::lu_weinstein();
        let d = dg.algebra().clone();
        let base = cartan_coboundary(&dg);
        let l2 = random_self_adjoint(&d, r, 0.0);
        let l3 = random_self_adjoint(&d, r, 2.0);
        WznwHamiltonian::new(dg, base, l2, l3, &cartan(), formulation).unwrap()
    }

    #[test]
    fn chiral_equations_of_motion_closed_form() {
        let mut r = rng();
        for f in [WznwFormulation::ZeroShift, WznwFormulation::MinusAlpha] {
            let w = wznw(f, &mut r);
            let s = w.chiral_space().unwrap();
            let p = PhasePoint::new(s.group().random(&mut r, 0.6), rvec(&mut r, 6, 1.0));
            let dh = differential(&s, &p, |q| w.hamiltonian(&q.base, &q.fiber));
            let v = hamiltonian_vector(&s, &p, &dh).unwrap();
            let u = w.velocity(&p.base, &p.fiber).unwrap();
            assert!((v.rows(0, 6) - &u).amax() < 1e-6);
            let rate = chiral_fiber_rate(&s, &p, &dh).unwrap();
            assert!((v.rows(6, 6) - rate).amax() < 1e-6);
        }
    }

    #[test]
    fn sigma_body_velocity_matches_closed_forms() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let d = dg.algebra().clone();
        let e = SigmaOperator::random(&d, &mut r, 0.4).unwrap();
        let base = cartan_coboundary(&dg);
        let model = SigmaModel::new(dg.clone(), e.clone(), base.clone(), &cartan()).unwrap();
        let h = e.hamiltonian(&d).unwrap();
        let alpha_dual = d.to_dual(&d.embed(&cartan(), Factor::NStar));
        let cases = [(MomentumTag::Mu00, false), (MomentumTag::Mu0Alpha, true)];
        for (tag, with_alpha) in cases {
            let s = HamiltonianSpace::cotangent_n(dg.clone(), base.clone(), &cartan(), tag).unwrap();
            let p = PhasePoint::new(dg.random_factor(&mut r, Factor::N, 0.6), rvec(&mut r, 3, 1.0));
            let shift = if with_alpha { alpha_dual.clone() } else { Vector::zeros(6) };
            let ham = |q: &PhasePoint| h.value(&(s.momentum(q).unwrap().xi + &shift));
            assert!((ham(&p) - model.hamiltonian_n(&p.base, &p.fiber, with_alpha)).abs() < 1e-10);
            let v = hamiltonian_vector(&s, &p, &differential(&s, &p, ham)).unwrap();
            let closed = model.velocity_n_closed(&p.base, &p.fiber, with_alpha).unwrap();
            assert!((v.rows(0, 3) - &closed).amax() < 1e-6);
            assert!((model.velocity_n(&p.base, &p.fiber, with_alpha) - closed).amax() < 1e-10);
        }
        let s = HamiltonianSpace::cotangent_nstar(dg.clone(), base, &cartan(), MomentumTag::MuTildePhi).unwrap();
        let p = PhasePoint::new(dg.random_factor(&mut r, Factor::NStar, 0.6), rvec(&mut r, 3, 1.0));
        let ham = |q: &PhasePoint| h.value(&s.momentum(q).unwrap().xi);
        assert!((ham(&p) - model.hamiltonian_nstar(&p.base, &p.fiber)).abs() < 1e-10);
        let v = hamiltonian_vector(&s, &p, &differential(&s, &p, ham)).unwrap();
        assert!((v.rows(0, 3) - model.velocity_nstar(&p.base, &p.fiber)).amax() < 1e-6);
    }

    #[test]
    fn swap_operator_blocks_at_identity() {
        let dg = DoubleGroup::lu_weinstein();
        let e = SigmaOperator::swap(dg.algebra());
        let b = sigma_blocks(&e, &dg, &dg.identity()).unwrap();
        assert!((&b.g_op - Matrix::identity(3, 3)).amax() < 1e-15);
        assert!(b.b_op.amax() < 1e-15);
        let h = e.hamiltonian(dg.algebra()).unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!((h.value(&x) - 0.5 * x.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn abelian_double_blocks_are_constant() {
        let mut r = rng();
        let dg = DoubleGroup::abelian(2);
        let e = SigmaOperator::random(dg.algebra(), &mut r, 0.5).unwrap();
        let g = dg.random_factor(&mut r, Factor::N, 1.0);
        let b = sigma_blocks(&e, &dg, &g).unwrap();
        assert!((&b.e_g - e.matrix()).amax() < 1e-14);
    }

    #[test]
    fn random_involutions_and_block_identities() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let d = dg.algebra();
        for _ in 0..100 {
            let e = SigmaOperator::random(d, &mut r, 0.5).unwrap();
            assert!(e.self_adjoint_residual(d) < 1e-12);
            assert!(e.involution_residual() < 1e-12);
            let g = dg.random_factor(&mut r, Factor::N, 0.6);
            let ht = dg.random_factor(&mut r, Factor::NStar, 0.6);
            for b in [sigma_blocks(&e, &dg, &g).unwrap(), dual_sigma_blocks(&e, &dg, &ht).unwrap()] {
                let scale = 1.0 + b.e_g.amax();
                assert!(b.symmetry_residual() < 1e-10 * scale);
                assert!(b.antisymmetry_residual() < 1e-10 * scale);
                assert!(b.reassembly_residual() < 1e-10 * scale);
                assert!(b.block_relation_residual() < 1e-10 * scale);
                let (qd, qp) = (rvec(&mut r, 3, 1.0), rvec(&mut r, 3, 1.0));
                assert!(b.master_identity_residual(&qd, &qp) < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn sigma_operator_validation() {
        let d = crate::liecore::builtin::lu_weinstein_su2();
        assert!(matches!(SigmaOperator::new(&d, Matrix::identity(6, 6) * 2.0), Err(DynError::NotInvolutive(_))));
        let mut m = d.psi().clone();
        m[(0, 1)] = 0.1;
        assert!(SigmaOperator::new(&d, m).is_err());
    }

    #[test]
    fn zero_velocity_sigma_lagrangian_is_the_potential() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let e = SigmaOperator::random(dg.algebra(), &mut r, 0.4).unwrap();
        let model = SigmaModel::new(dg.clone(), e.clone(), cartan_coboundary(&dg), &Vector::zeros(3)).unwrap();
        let g = dg.random_factor(&mut r, Factor::N, 0.7);
        let q = model.q_prime(&g);
        assert!(q.amax() > 1e-3);
        let blocks = sigma_blocks(&e, &dg, &g).unwrap();
        let l = model.lagrangian_n(&g, &Vector::zeros(3), false).unwrap();
        assert!((l + 0.5 * q.dot(&(&blocks.g_op * &q))).abs() < 1e-12);
    }

    #[test]
    fn legendre_round_trips() {
        let mut r = rng();
        let dg = DoubleGroup::lu_weinstein();
        let e = SigmaOperator::random(dg.algebra(), &mut r, 0.4).unwrap();
        let sigma = LagrangianModel::Sigma(SigmaModel::new(dg.clone(), e, cartan_coboundary(&dg), &cartan()).unwrap());
        for _ in 0..10 {
            let g = dg.random_factor(&mut r, Factor::N, 0.7);
            let ht = dg.random_factor(&mut r, Factor::NStar, 0.7);
            let v = rvec(&mut r, 3, 1.0);
            for (f, base) in [
                (LagrangianFamily::Lsigma0, &g),
                (LagrangianFamily::LsigmaAlpha, &g),
                (LagrangianFamily::LtildeAlpha, &ht),
            ] {
                assert!(legendre_residual(f, &sigma, base, &v).unwrap() < 1e-10);
            }
            if let LagrangianModel::Sigma(s) = &sigma {
                let lambda = s.fiber_n(&g, &v, true).unwrap();
                assert!((s.velocity_n(&g, &lambda, true) - &v).amax() < 1e-10);
                let x = s.fiber_nstar(&ht, &v).unwrap();
                assert!((s.velocity_nstar(&ht, &x) - &v).amax() < 1e-10);
            }
        }
        for (f, form) in [(LagrangianFamily::Lc0, WznwFormulation::ZeroShift), (LagrangianFamily::LcMinusAlpha, WznwFormulation::MinusAlpha)] {
            let w = wznw(form, &mut r);
            let l = w.chiral_space().unwrap().group().random(&mut r, 0.6);
            let u = rvec(&mut r, 6, 1.0);
            let eta = w.fiber(&l, &u).unwrap();
            assert!((w.velocity(&l, &eta).unwrap() - &u).amax() < 1e-10);
            let model = LagrangianModel::Wznw(w);
            assert!(legendre_residual(f, &model, &l, &u).unwrap() < 1e-10);
        }
    }

    #[test]
    fn family_must_match_model() {
        let mut r = rng();
        let w = LagrangianModel::Wznw(wznw(WznwFormulation::ZeroShift, &mut r));
        let l = DoubleGroup::lu_weinstein().identity();
        let v = Vector::zeros(6);
        assert!(matches!(lagrangian_eval(LagrangianFamily::LcMinusAlpha, &w, &l, &v), Err(DynError::FamilyMismatch(_))));
        assert!(matches!(lagrangian_eval(LagrangianFamily::Lsigma0, &w, &l, &v), Err(DynError::FamilyMismatch(_))));
    }

    #[test]
    fn singular_l3_is_rejected() {
        let dg = DoubleGroup::lu_weinstein();
        let z = Matrix::zeros(6, 6);
        let err = WznwHamiltonian::new(dg, Cocycle::Zero, z.clone(), z, &Vector::zeros(3), WznwFormulation::ZeroShift);
        assert!(matches!(err, Err(DynError::SingularBlock { .. })));
    }

    #[test]
    fn csv_layout() {
        let sc = rigid_body_pendulum(Inertia::default(), 0.7, 0.3, 1.0);
        let t = collective_trajectory(&sc.pendulum, &sc.pendulum0, &sc.h, 0.02, 0.01).unwrap();
        let csv = t.to_csv(&sc.pendulum.coord_labels(), |x| sc.pendulum.coords(x));
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,theta,p,g00_re,g00_im"));
        assert_eq!(header.split(',').count(), 3 + 18);
        assert_eq!(lines.count(), 3);
    }
}
