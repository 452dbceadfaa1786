//! Hamiltonian H-spaces over a double group: `T*N`, `T*N*` and the chiral space
//! `H x h*`, with their twisted actions and momentum maps.
//!
//! Points are stored as `(base, fiber)` and tangents in body coordinates
//! `(u, f)`, where the base moves as `l exp(s u)` and the fiber as `fiber + s f`.
//! Hamiltonian vector fields solve `i_V omega = dH` and `{F, G} = omega(V_F, V_G)`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::extension::{
    check_alpha_condition, extended_coadjoint, minus_alpha, orbit_generator, Cocycle, ExtError, ExtendedDual,
    Observable, ShiftedCocycle,
};
use crate::groups::{unit, DoubleGroup, GroupElement, GroupError, MatrixGroup, Order};
use crate::liecore::{Factor, LieError, Matrix, Vector};

/// Step of the five-point derivative stencil.
pub const STENCIL_STEP: f64 = 1e-3;
/// Tolerance for fibers that must stay in their factor.
pub const FIBER_TOL: f64 = 1e-8;
/// Singular-value threshold for stabilizer null spaces.
pub const NULL_TOL: f64 = 1e-10;
/// Orbit-distance certificate.
pub const ORBIT_TOL: f64 = 1e-6;
pub const ORBIT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HamError {
    #[error(transparent)]
    Ext(#[from] ExtError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("undefined combination: {0}")]
    Combination(String),
    #[error("alpha condition violated (residual {0:e})")]
    AlphaCondition(f64),
    #[error("cocycle not compatible with the factorization (residual {0:e})")]
    Incompatible(f64),
    #[error("symplectic matrix is singular")]
    Singular,
}

/// A finite-dimensional symplectic manifold with a retraction chart.
pub trait PhaseSpace {
    type Point: Clone;

    fn tangent_dim(&self) -> usize;

    /// `Omega_ij = omega(e_i, e_j)` at `p`.
    fn omega_matrix(&self, p: &Self::Point) -> Matrix;

    /// Moves `p` along the left-invariant extension of `v` for unit time.
    fn retract(&self, p: &Self::Point, v: &Vector) -> Self::Point;

    /// Lie bracket of the left-invariant extensions of `v` and `w`.
    fn tangent_bracket(&self, v: &Vector, w: &Vector) -> Vector;

    fn symplectic_eval(&self, p: &Self::Point, v: &Vector, w: &Vector) -> Result<f64, HamError> {
        let n = self.tangent_dim();
        for t in [v, w] {
            if t.len() != n {
                return Err(LieError::Dimension { expected: n, got: t.len() }.into());
            }
        }
        Ok(v.dot(&(self.omega_matrix(p) * w)))
    }
}

fn stencil<F: Fn(f64) -> Vector>(f: F) -> Vector {
    let h = STENCIL_STEP;
    (f(-2.0 * h) - f(-h) * 8.0 + f(h) * 8.0 - f(2.0 * h)) / (12.0 * h)
}

/// Derivative of `f` along `v` at `p`.
pub fn directional_derivative<S: PhaseSpace, F: Fn(&S::Point) -> f64>(space: &S, p: &S::Point, v: &Vector, f: F) -> f64 {
    stencil(|s| Vector::from_element(1, f(&space.retract(p, &(v * s)))))[0]
}

/// Jacobian of a vector-valued function in body coordinates.
pub fn jacobian<S: PhaseSpace, F: Fn(&S::Point) -> Vector>(space: &S, p: &S::Point, f: F) -> Matrix {
    let n = space.tangent_dim();
    let cols: Vec<Vector> = (0..n).map(|j| stencil(|s| f(&space.retract(p, &(unit(n, j) * s))))).collect();
    Matrix::from_columns(&cols)
}

pub fn differential<S: PhaseSpace, F: Fn(&S::Point) -> f64>(space: &S, p: &S::Point, f: F) -> Vector {
    let n = space.tangent_dim();
    Vector::from_fn(n, |j, _| directional_derivative(space, p, &unit(n, j), &f))
}

/// Solves `Omega^T V = dh`.
pub fn hamiltonian_vector<S: PhaseSpace>(space: &S, p: &S::Point, dh: &Vector) -> Result<Vector, HamError> {
    space.omega_matrix(p).transpose().lu().solve(dh).ok_or(HamError::Singular)
}

/// `{F, G}(p) = omega(V_F, V_G)` from the differentials of `F` and `G`.
pub fn space_bracket<S: PhaseSpace>(space: &S, p: &S::Point, df: &Vector, dg: &Vector) -> Result<f64, HamError> {
    let vf = hamiltonian_vector(space, p, df)?;
    let vg = hamiltonian_vector(space, p, dg)?;
    Ok(vf.dot(&(space.omega_matrix(p) * vg)))
}

/// `d omega(X, Y, Z)` on left-invariant extensions of three tangents.
pub fn closedness_residual<S: PhaseSpace>(space: &S, p: &S::Point, x: &Vector, y: &Vector, z: &Vector) -> f64 {
    let w = |q: &S::Point, a: &Vector, b: &Vector| a.dot(&(space.omega_matrix(q) * b));
    let at = |a: &Vector, b: &Vector| w(p, a, b);
    let term = |dir: &Vector, a: &Vector, b: &Vector| directional_derivative(space, p, dir, |q| w(q, a, b));
    (term(x, y, z) - term(y, x, z) + term(z, x, y) - at(&space.tangent_bracket(x, y), z)
        + at(&space.tangent_bracket(x, z), y)
        - at(&space.tangent_bracket(y, z), x))
    .abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    CotangentN,
    CotangentNstar,
    ChiralH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symplectic {
    Canonical,
    /// Bracket term uses `eta + alpha`.
    AlphaShifted,
    /// `omega_o - c_theta(Ad_l u1, Ad_l u2)`.
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionTag {
    DHat0,
    DHatAlpha,
    BHat,
    RightInvariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumTag {
    Mu00,
    Mu0Alpha,
    MuAlphaAlpha,
    MuTildePhi,
    MuTildeAlpha,
    JHatR,
}

#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub base: GroupElement,
    pub fiber: Vector,
}

impl PhasePoint {
    pub fn new(base: GroupElement, fiber: Vector) -> Self {
        PhasePoint { base, fiber }
    }

    pub fn dist(&self, other: &PhasePoint) -> f64 {
        self.base.dist(&other.base).max((&self.fiber - &other.fiber).amax())
    }
}

/// One of the shipped Hamiltonian H-spaces.
#[derive(Debug, Clone)]
pub struct HamiltonianSpace {
    kind: SpaceKind,
    double: DoubleGroup,
    base: Cocycle,
    alpha: Vector,
    theta: Vector,
    symplectic: Symplectic,
    action: ActionTag,
    momentum: MomentumTag,
}

impl HamiltonianSpace {
    /// Validates the tag combination. `alpha` is given in `n*` or `h` coordinates;
    /// `theta` (dual coordinates) is used by the chiral space only.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: SpaceKind,
        double: DoubleGroup,
        base: Cocycle,
        alpha: &Vector,
        theta: Option<Vector>,
        symplectic: Symplectic,
        action: ActionTag,
        momentum: MomentumTag,
    ) -> Result<Self, HamError> {
        use ActionTag as A;
        use MomentumTag as M;
        use SpaceKind as K;
        use Symplectic as S;
        let ok = matches!(
            (kind, symplectic, action, momentum),
            (K::CotangentN, S::Canonical, A::DHat0, M::Mu00)
                | (K::CotangentN, S::Canonical, A::DHatAlpha, M::Mu0Alpha)
                | (K::CotangentN, S::AlphaShifted, A::DHatAlpha, M::MuAlphaAlpha)
                | (K::CotangentNstar, S::Canonical, A::BHat, M::MuTildePhi)
                | (K::CotangentNstar, S::Canonical, A::BHat, M::MuTildeAlpha)
                | (K::ChiralH, S::Extended, A::RightInvariant, M::JHatR)
        );
        if !ok {
            return Err(HamError::Combination(format!("{kind:?}/{symplectic:?}/{action:?}/{momentum:?}")));
        }
        let d = double.algebra();
        let alpha = crate::extension::alpha_in_h(d, alpha)?;
        let theta = theta.unwrap_or_else(|| Vector::zeros(d.dim()));
        if theta.len() != d.dim() {
            return Err(LieError::Dimension { expected: d.dim(), got: theta.len() }.into());
        }
        Ok(HamiltonianSpace { kind, double, base, alpha, theta, symplectic, action, momentum })
    }

    /// `T*N` with the tag's natural symplectic form and action.
    pub fn cotangent_n(double: DoubleGroup, base: Cocycle, alpha: &Vector, momentum: MomentumTag) -> Result<Self, HamError> {
        let (s, a) = match momentum {
            MomentumTag::Mu00 => (Symplectic::Canonical, ActionTag::DHat0),
            MomentumTag::Mu0Alpha => (Symplectic::Canonical, ActionTag::DHatAlpha),
            _ => (Symplectic::AlphaShifted, ActionTag::DHatAlpha),
        };
        Self::new(SpaceKind::CotangentN, double, base, alpha, None, s, a, momentum)
    }

    pub fn cotangent_nstar(double: DoubleGroup, base: Cocycle, alpha: &Vector, momentum: MomentumTag) -> Result<Self, HamError> {
        Self::new(SpaceKind::CotangentNstar, double, base, alpha, None, Symplectic::Canonical, ActionTag::BHat, momentum)
    }

    pub fn chiral(double: DoubleGroup, base: Cocycle, theta: Vector) -> Result<Self, HamError> {
        let zero = Vector::zeros(double.n());
        Self::new(
            SpaceKind::ChiralH,
            double,
            base,
            &zero,
            Some(theta),
            Symplectic::Extended,
            ActionTag::RightInvariant,
            MomentumTag::JHatR,
        )
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn double(&self) -> &DoubleGroup {
        &self.double
    }

    pub fn group(&self) -> &MatrixGroup {
        self.double.group()
    }

    /// `alpha` in `h` coordinates.
    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn momentum_tag(&self) -> MomentumTag {
        self.momentum
    }

    /// Coordinates of the base algebra inside `h`.
    pub fn block(&self) -> Range<usize> {
        let d = self.double.algebra();
        match self.kind {
            SpaceKind::CotangentN => d.factor_range(Factor::N),
            SpaceKind::CotangentNstar => d.factor_range(Factor::NStar),
            SpaceKind::ChiralH => 0..d.dim(),
        }
    }

    fn block_dim(&self) -> usize {
        self.block().len()
    }

    fn lift(&self, u: &Vector) -> Vector {
        let mut x = Vector::zeros(self.double.algebra().dim());
        x.rows_mut(self.block().start, u.len()).copy_from(u);
        x
    }

    fn lower(&self, x: &Vector) -> Vector {
        let r = self.block();
        x.rows(r.start, r.len()).into_owned()
    }

    /// Cocycle of the momentum target `h*_{c,theta}`.
    pub fn target_cocycle(&self) -> ShiftedCocycle {
        let d = self.double.algebra();
        match self.momentum {
            MomentumTag::Mu00 | MomentumTag::MuTildePhi => ShiftedCocycle::unshifted(self.base.clone(), d.dim()),
            MomentumTag::Mu0Alpha | MomentumTag::MuAlphaAlpha | MomentumTag::MuTildeAlpha => {
                minus_alpha(self.base.clone(), d, &self.alpha)
            }
            MomentumTag::JHatR => ShiftedCocycle::new(self.base.clone(), self.theta.clone()),
        }
    }

    fn check_point(&self, p: &PhasePoint) -> Result<(), HamError> {
        let k = self.block_dim();
        if p.fiber.len() != k {
            return Err(LieError::Dimension { expected: k, got: p.fiber.len() }.into());
        }
        if p.base.size() != self.group().matrix_size() {
            return Err(GroupError::Size { expected: self.group().matrix_size(), got: p.base.size() }.into());
        }
        Ok(())
    }

    /// The twisted H-action.
    pub fn act(&self, l: &GroupElement, p: &PhasePoint) -> Result<PhasePoint, HamError> {
        self.check_point(p)?;
        let d = self.double.algebra();
        let h = self.group();
        match self.action {
            ActionTag::DHat0 | ActionTag::DHatAlpha => {
                if self.action == ActionTag::DHatAlpha && self.symplectic == Symplectic::Canonical {
                    let (ok, r) = check_alpha_condition(&self.alpha, d)?;
                    if !ok {
                        return Err(HamError::AlphaCondition(r));
                    }
                }
                let c = self.target_cocycle();
                let f = self.double.factorize(&l.mul(&p.base), Order::NFirst)?;
                let z = h.adjoint(&f.htilde, &d.embed(&p.fiber, Factor::NStar))? + d.to_algebra(&c.eval(h, &f.htilde));
                let off = d.project(&z, Factor::N)?.amax();
                if off > FIBER_TOL {
                    return Err(HamError::Incompatible(off));
                }
                Ok(PhasePoint::new(f.g, d.restrict(&z, Factor::NStar)))
            }
            ActionTag::BHat => {
                let (ok, r) = check_alpha_condition(&self.alpha, d)?;
                if !ok {
                    return Err(HamError::AlphaCondition(r));
                }
                let c = minus_alpha(self.base.clone(), d, &self.alpha);
                let outer = self.double.factorize(l, Order::NStarFirst)?;
                let inner = self.double.factorize(&outer.g.mul(&p.base), Order::NStarFirst)?;
                let a_h = &inner.g;
                let z = h.adjoint(a_h, &d.embed(&p.fiber, Factor::N))? + d.to_algebra(&c.eval(h, a_h));
                let off = d.project(&z, Factor::NStar)?.amax();
                if off > FIBER_TOL {
                    return Err(HamError::Incompatible(off));
                }
                Ok(PhasePoint::new(outer.htilde.mul(&inner.htilde), d.restrict(&z, Factor::N)))
            }
            ActionTag::RightInvariant => Ok(PhasePoint::new(p.base.mul(&l.inverse()), h.coadjoint_inv(l, &p.fiber))),
        }
    }

    pub fn momentum(&self, p: &PhasePoint) -> Result<ExtendedDual, HamError> {
        self.check_point(p)?;
        Ok(self.momentum_unchecked(p))
    }

    fn momentum_unchecked(&self, p: &PhasePoint) -> ExtendedDual {
        let d = self.double.algebra();
        let h = self.group();
        let c = self.target_cocycle();
        match self.momentum {
            MomentumTag::Mu00 | MomentumTag::Mu0Alpha | MomentumTag::MuAlphaAlpha => {
                let seed = ExtendedDual::unit(d.to_dual(&d.embed(&p.fiber, Factor::NStar)));
                extended_coadjoint(&c, h, &p.base, &seed)
            }
            MomentumTag::MuTildePhi => {
                let seed = ExtendedDual::unit(d.to_dual(&(d.embed(&p.fiber, Factor::N) + &self.alpha)));
                extended_coadjoint(&c, h, &p.base, &seed)
            }
            MomentumTag::MuTildeAlpha => {
                let seed = ExtendedDual::unit(d.to_dual(&d.embed(&p.fiber, Factor::N)));
                extended_coadjoint(&c, h, &p.base, &seed)
            }
            MomentumTag::JHatR => {
                let shift = h.ad_matrix(&p.base).transpose() * c.eval(h, &p.base);
                ExtendedDual::unit(&p.fiber - shift)
            }
        }
    }

    /// `+1` when `mu` is a Poisson map into `h*_{c,theta}`, `-1` when it is
    /// anti-Poisson. `J^R` generates right translations, so it reverses the bracket.
    pub fn orientation(&self) -> f64 {
        match self.momentum {
            MomentumTag::JHatR => -1.0,
            _ => 1.0,
        }
    }

    /// `|mu(l . p) - Ad^*_{l^{-1}} mu(p)|_inf`.
    pub fn equivariance_residual(&self, l: &GroupElement, p: &PhasePoint) -> Result<f64, HamError> {
        let lhs = self.momentum(&self.act(l, p)?)?;
        let rhs = extended_coadjoint(&self.target_cocycle(), self.group(), l, &self.momentum(p)?);
        Ok(lhs.dist(&rhs))
    }

    /// Body-coordinate tangent of a curve through `p` at `s = 0`.
    pub fn curve_tangent<F>(&self, p: &PhasePoint, curve: F) -> Result<Vector, HamError>
    where
        F: Fn(f64) -> Result<PhasePoint, HamError>,
    {
        let h = STENCIL_STEP;
        let linv = p.base.inverse();
        let pts: Vec<PhasePoint> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&k| curve(k * h)).collect::<Result<_, _>>()?;
        let rel = |q: &PhasePoint| linv.mul(&q.base).matrix().clone();
        let dm = (rel(&pts[0]) - rel(&pts[1]) * crate::groups::c(8.0, 0.0) + rel(&pts[2]) * crate::groups::c(8.0, 0.0)
            - rel(&pts[3]))
            / crate::groups::c(12.0 * h, 0.0);
        let (u, _) = self.group().pullback_with_residual(&dm);
        let df = (&pts[0].fiber - &pts[1].fiber * 8.0 + &pts[2].fiber * 8.0 - &pts[3].fiber) / (12.0 * h);
        let mut v = Vector::zeros(2 * self.block_dim());
        v.rows_mut(0, self.block_dim()).copy_from(&self.lower(&u));
        v.rows_mut(self.block_dim(), self.block_dim()).copy_from(&df);
        Ok(v)
    }

    /// Infinitesimal generator `Z_M(p)` of the action.
    pub fn generator(&self, z: &Vector, p: &PhasePoint) -> Result<Vector, HamError> {
        let h = self.group();
        self.curve_tangent(p, |s| self.act(&h.exp(&(z * s)), p))
    }

    /// `|i_{Z_M} omega - orientation d<mu, Z>|_inf`, zero for a momentum map.
    pub fn momentum_residual(&self, z: &Vector, p: &PhasePoint) -> Result<f64, HamError> {
        let zm = self.generator(z, p)?;
        let lhs = self.omega_matrix(p).transpose() * zm;
        let dmu = jacobian(self, p, |q| self.momentum_unchecked(q).xi);
        let rhs = dmu.transpose() * z * self.orientation();
        Ok((lhs - rhs).amax())
    }

    /// `|{F o mu, G o mu}(p) - orientation {F, G}(mu(p))|`.
    pub fn poisson_map_residual(&self, p: &PhasePoint, f: &Observable, g: &Observable) -> Result<f64, HamError> {
        self.check_point(p)?;
        let mu = self.momentum_unchecked(p);
        let dmu = jacobian(self, p, |q| self.momentum_unchecked(q).xi);
        let df = dmu.transpose() * f.gradient(&mu.xi)?;
        let dg = dmu.transpose() * g.gradient(&mu.xi)?;
        let lhs = space_bracket(self, p, &df, &dg)?;
        let c = self.target_cocycle();
        let rhs = self.orientation() * crate::extension::lie_poisson_bracket(&c, self.group().algebra(), f, g, &mu)?;
        Ok((lhs - rhs).abs())
    }

    /// Worst Poisson-map residual over pairs of linear basis observables, with the pair.
    pub fn poisson_basis_scan(&self, p: &PhasePoint) -> Result<(f64, usize, usize), HamError> {
        let n = self.double.algebra().dim();
        let mut worst = (0.0, 0, 0);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = self.poisson_map_residual(
                    p,
                    &Observable::linear(unit(n, i)),
                    &Observable::linear(unit(n, j)),
                )?;
                if r > worst.0 {
                    worst = (r, i, j);
                }
            }
        }
        Ok(worst)
    }

    /// Distance from `mu(p)` to the orbit of `anchor` in the momentum target.
    pub fn dualizable_residual(&self, p: &PhasePoint, anchor: &ExtendedDual) -> Result<OrbitSearch, HamError> {
        let target = self.momentum(p)?;
        let h = self.group();
        let mut rng = ChaCha8Rng::seed_from_u64(0x0d0a);
        let mut starts = vec![h.identity(), p.base.clone(), p.base.inverse()];
        starts.extend((0..4).map(|_| h.random(&mut rng, 1.0)));
        Ok(orbit_distance(&self.target_cocycle(), h, anchor, &target, &starts))
    }

    /// Basis of the Lie algebra of the stabilizer of `anchor` (columns).
    pub fn stabilizer_basis(&self, anchor: &ExtendedDual) -> Matrix {
        stabilizer_basis(&self.target_cocycle(), self.group().algebra(), anchor)
    }

    /// Worst `|omega(Z_M, v)|` for `Z = Ad_l Z0`, `Z0` in the stabilizer of `anchor`,
    /// and `v` tangent to the preimage of the orbit through `mu(p) = Ad^*_{l^{-1}} anchor`.
    pub fn null_direction_residual(&self, p: &PhasePoint, l: &GroupElement, anchor: &ExtendedDual) -> Result<f64, HamError> {
        let h = self.group();
        let n = h.dim();
        let stab = self.stabilizer_basis(anchor);
        let omega = self.omega_matrix(p);
        let mut tangents: Vec<Vector> = Vec::new();
        for j in 0..n {
            tangents.push(self.generator(&unit(n, j), p)?);
        }
        let dmu = jacobian(self, p, |q| self.momentum_unchecked(q).xi);
        let ker = null_space(&dmu, 1e-7);
        tangents.extend(ker.column_iter().map(|c| c.into_owned()));
        let mut worst: f64 = 0.0;
        for z0 in stab.column_iter() {
            let z = h.adjoint(l, &z0.into_owned())?;
            let zm = self.generator(&z, p)?;
            for v in &tangents {
                worst = worst.max(zm.dot(&(&omega * v)).abs());
            }
        }
        Ok(worst)
    }
}

impl PhaseSpace for HamiltonianSpace {
    type Point = PhasePoint;

    fn tangent_dim(&self) -> usize {
        2 * self.block_dim()
    }

    fn omega_matrix(&self, p: &PhasePoint) -> Matrix {
        let k = self.block_dim();
        let d = self.double.algebra();
        let alg = self.group().algebra();
        let shifted = match self.symplectic {
            Symplectic::AlphaShifted => &p.fiber + d.restrict(&self.alpha, Factor::NStar),
            _ => p.fiber.clone(),
        };
        let mut top = Matrix::from_fn(k, k, |i, j| {
            let b = alg.br(&self.lift(&unit(k, i)), &self.lift(&unit(k, j)));
            shifted.dot(&self.lower(&b))
        });
        if self.symplectic == Symplectic::Extended {
            let m = self.group().ad_matrix(&p.base);
            let chat = ShiftedCocycle::new(self.base.clone(), self.theta.clone()).chat(alg);
            top -= (m.transpose() * chat * m).transpose();
        }
        let mut omega = Matrix::zeros(2 * k, 2 * k);
        omega.view_mut((0, 0), (k, k)).copy_from(&top);
        omega.view_mut((0, k), (k, k)).fill_with_identity();
        omega.view_mut((k, 0), (k, k)).copy_from(&(-Matrix::identity(k, k)));
        omega
    }

    fn retract(&self, p: &PhasePoint, v: &Vector) -> PhasePoint {
        let k = self.block_dim();
        let u = v.rows(0, k).into_owned();
        let f = v.rows(k, k);
        PhasePoint::new(p.base.mul(&self.group().exp(&self.lift(&u))), &p.fiber + f)
    }

    fn tangent_bracket(&self, v: &Vector, w: &Vector) -> Vector {
        let k = self.block_dim();
        let alg = self.group().algebra();
        let b = alg.br(&self.lift(&v.rows(0, k).into_owned()), &self.lift(&w.rows(0, k).into_owned()));
        let mut out = Vector::zeros(2 * k);
        out.rows_mut(0, k).copy_from(&self.lower(&b));
        out
    }
}

/// Null space of `m` (columns), by SVD with relative threshold `tol`.
pub fn null_space(m: &Matrix, tol: f64) -> Matrix {
    let n = m.ncols();
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<Vector> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs().sqrt() <= tol * scale.sqrt())
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Kernel of `X -> orbit generator of X at anchor`, threshold [`NULL_TOL`].
pub fn stabilizer_basis(c: &ShiftedCocycle, alg: &crate::liecore::LieAlgebra, anchor: &ExtendedDual) -> Matrix {
    let n = alg.dim();
    let cols: Vec<Vector> = (0..n).map(|j| orbit_generator(c, alg, &unit(n, j), anchor)).collect();
    let m = Matrix::from_columns(&cols);
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let scale = svd.singular_values.amax().max(1.0);
    let keep: Vec<Vector> = (0..n)
        .filter(|&i| i >= svd.singular_values.len() || svd.singular_values[i] <= NULL_TOL * scale)
        .map(|i| vt.row(i).transpose())
        .collect();
    if keep.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&keep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitStatus {
    Member,
    NotMember,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct OrbitSearch {
    pub residual: f64,
    pub status: OrbitStatus,
    /// Best `l` found, with `Ad^*_{l^{-1}} anchor` closest to the target.
    pub witness: GroupElement,
}

/// Gauss-Newton descent of `|Ad^*_{l^{-1}} anchor - target|` over `l`, from each start.
pub fn orbit_distance(
    c: &ShiftedCocycle,
    h: &MatrixGroup,
    anchor: &ExtendedDual,
    target: &ExtendedDual,
    starts: &[GroupElement],
) -> OrbitSearch {
    if (anchor.b - target.b).abs() > 0.0 {
        return OrbitSearch {
            residual: (anchor.b - target.b).abs(),
            status: OrbitStatus::NotMember,
            witness: h.identity(),
        };
    }
    let alg = h.algebra();
    let n = alg.dim();
    let resid = |l: &GroupElement| &extended_coadjoint(c, h, l, anchor).xi - &target.xi;
    let mut best = (f64::INFINITY, h.identity());
    let mut all_stationary = true;
    for start in starts {
        let mut l = start.clone();
        let mut r = resid(&l);
        let mut stationary = false;
        for _ in 0..ORBIT_ITERATIONS {
            if r.norm() < 1e-13 {
                stationary = true;
                break;
            }
            let q = ExtendedDual::new(&r + &target.xi, anchor.b);
            let cols: Vec<Vector> = (0..n).map(|j| orbit_generator(c, alg, &unit(n, j), &q)).collect();
            let jac = Matrix::from_columns(&cols);
            if (jac.transpose() * &r).norm() < 1e-12 * (1.0 + r.norm()) {
                stationary = true;
                break;
            }
            let step = match jac.clone().pseudo_inverse(1e-12) {
                Ok(p) => -(p * &r),
                Err(_) => break,
            };
            let mut s = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let cand = h.exp(&(&step * s)).mul(&l);
                let rc = resid(&cand);
                if rc.norm() < r.norm() {
                    l = cand;
                    r = rc;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            if !moved {
                stationary = true;
                break;
            }
        }
        let norm = r.norm();
        if norm < best.0 {
            best = (norm, l);
        }
        if norm < ORBIT_TOL {
            return OrbitSearch { residual: norm, status: OrbitStatus::Member, witness: best.1 };
        }
        all_stationary &= stationary;
    }
    let status = if all_stationary { OrbitStatus::NotMember } else { OrbitStatus::Inconclusive };
    OrbitSearch { residual: best.0, status, witness: best.1 }
}

/// Which reduced orbit map: `(C_{-alpha}(l) + alpha, 1)` or `(C_{-alpha}(l), 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedFormulation {
    Zero,
    MinusAlpha,
}

/// The orbit maps `H/H_alpha -> h*_{c,theta}` with `H` acting by left multiplication.
#[derive(Debug, Clone)]
pub struct ReducedOrbit {
    double: DoubleGroup,
    base: Cocycle,
    alpha: Vector,
    formulation: ReducedFormulation,
}

impl ReducedOrbit {
    pub fn new(double: DoubleGroup, base: Cocycle, alpha: &Vector, formulation: ReducedFormulation) -> Result<Self, HamError> {
        let alpha = crate::extension::alpha_in_h(double.algebra(), alpha)?;
        Ok(ReducedOrbit { double, base, alpha, formulation })
    }

    pub fn target_cocycle(&self) -> ShiftedCocycle {
        let d = self.double.algebra();
        match self.formulation {
            ReducedFormulation::Zero => ShiftedCocycle::unshifted(self.base.clone(), d.dim()),
            ReducedFormulation::MinusAlpha => minus_alpha(self.base.clone(), d, &self.alpha),
        }
    }

    pub fn anchor(&self) -> ExtendedDual {
        let d = self.double.algebra();
        match self.formulation {
            ReducedFormulation::Zero => ExtendedDual::unit(d.to_dual(&self.alpha)),
            ReducedFormulation::MinusAlpha => ExtendedDual::unit(Vector::zeros(d.dim())),
        }
    }

    pub fn momentum(&self, l: &GroupElement) -> ExtendedDual {
        extended_coadjoint(&self.target_cocycle(), self.double.group(), l, &self.anchor())
    }

    pub fn act(&self, k: &GroupElement, l: &GroupElement) -> GroupElement {
        k.mul(l)
    }

    pub fn equivariance_residual(&self, k: &GroupElement, l: &GroupElement) -> f64 {
        let c = self.target_cocycle();
        let rhs = extended_coadjoint(&c, self.double.group(), k, &self.momentum(l));
        self.momentum(&self.act(k, l)).dist(&rhs)
    }

    /// `Lie(H_alpha)` as columns.
    pub fn stabilizer_basis(&self) -> Matrix {
        stabilizer_basis(&self.target_cocycle(), self.double.group().algebra(), &self.anchor())
    }
}

/// Predicted Poisson defect of the `mu~^phi` map at `(e, 0)` on linear observables
/// `<A,->`, `<B,->`: `-<alpha, [Pi_n A, Pi_n B]>`.
pub fn mu_tilde_defect(double: &DoubleGroup, alpha_h: &Vector, a: &Vector, b: &Vector) -> Result<f64, HamError> {
    let d = double.algebra();
    let an = d.project(a, Factor::N)?;
    let bn = d.project(b, Factor::N)?;
    Ok(-d.pair(alpha_h, &d.total().br(&an, &bn)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn rvec(r: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
        Vector::from_fn(n, |_, _| r.random_range(-s..s))
    }

    fn cartan() -> Vector {
        Vector::from_vec(vec![0.7, 0.0, 0.0])
    }

    fn root() -> Vector {
        Vector::from_vec(vec![0.0, 0.6, 0.0])
    }

    fn spaces() -> Vec<HamiltonianSpace> {
        let dg = DoubleGroup::lu_weinstein;
        let z = Vector::zeros(3);
        let mut r = rng();
        vec![
            HamiltonianSpace::cotangent_n(dg(), Cocycle::Zero, &z, MomentumTag::Mu00).unwrap(),
            HamiltonianSpace::cotangent_n(dg(), Cocycle::Zero, &cartan(), MomentumTag::Mu0Alpha).unwrap(),
            HamiltonianSpace::cotangent_n(dg(), Cocycle::Zero, &root(), MomentumTag::MuAlphaAlpha).unwrap(),
            HamiltonianSpace::cotangent_nstar(dg(), Cocycle::Zero, &cartan(), MomentumTag::MuTildePhi).unwrap(),
            HamiltonianSpace::cotangent_nstar(dg(), Cocycle::Zero, &cartan(), MomentumTag::MuTildeAlpha).unwrap(),
            HamiltonianSpace::chiral(dg(), Cocycle::Coboundary(rvec(&mut r, 6, 1.0)), rvec(&mut r, 6, 1.0)).unwrap(),
        ]
    }

    fn random_point(s: &HamiltonianSpace, r: &mut ChaCha8Rng) -> PhasePoint {
        let dg = s.double();
        let base = match s.kind() {
            SpaceKind::CotangentN => dg.random_factor(r, Factor::N, 0.8),
            SpaceKind::CotangentNstar => dg.random_factor(r, Factor::NStar, 0.8),
            SpaceKind::ChiralH => dg.group().random(r, 0.8),
        };
        let k = s.block().len();
        PhasePoint::new(base, rvec(r, k, 1.0))
    }

    #[test]
    fn rejects_undefined_combinations() {
        let z = Vector::zeros(3);
        let e = HamiltonianSpace::new(
            SpaceKind::CotangentN,
            DoubleGroup::lu_weinstein(),
            Cocycle::Zero,
            &z,
            None,
            Symplectic::Canonical,
            ActionTag::BHat,
            MomentumTag::Mu00,
        );
        assert!(matches!(e, Err(HamError::Combination(_))));
    }

    #[test]
    fn symplectic_form_is_antisymmetric_and_closed() {
        let mut r = rng();
        for s in spaces() {
            let p = random_point(&s, &mut r);
            let n = s.tangent_dim();
            let (x, y, z) = (rvec(&mut r, n, 1.0), rvec(&mut r, n, 1.0), rvec(&mut r, n, 1.0));
            assert!(s.symplectic_eval(&p, &x, &x).unwrap().abs() < 1e-12);
            let sym = s.symplectic_eval(&p, &x, &y).unwrap() + s.symplectic_eval(&p, &y, &x).unwrap();
            assert!(sym.abs() < 1e-12);
            let mut fx = Vector::zeros(n);
            let mut fy = Vector::zeros(n);
            fx[n - 1] = 1.0;
            fy[n / 2] = 1.0;
            assert!(s.symplectic_eval(&p, &fx, &fy).unwrap().abs() < 1e-15);
            assert!(closedness_residual(&s, &p, &x, &y, &z) < 1e-6, "{:?}", s.kind());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = &spaces()[0];
        let p = PhasePoint::new(s.double().identity(), Vector::zeros(3));
        assert!(s.symplectic_eval(&p, &Vector::zeros(5), &Vector::zeros(6)).is_err());
    }

    #[test]
    fn identity_acts_trivially() {
        let mut r = rng();
        for s in spaces() {
            let p = random_point(&s, &mut r);
            assert!(s.act(&s.double().identity(), &p).unwrap().dist(&p) < 1e-10);
        }
    }

    #[test]
    fn pure_nstar_element_moves_only_the_base() {
        let mut r = rng();
        let s = &spaces()[3];
        let p = random_point(s, &mut r);
        let bt = s.double().random_factor(&mut r, Factor::NStar, 1.0);
        let q = s.act(&bt, &p).unwrap();
        assert!(q.base.dist(&bt.mul(&p.base)) < 1e-10);
        assert!((q.fiber - &p.fiber).amax() < 1e-10);
    }

    #[test]
    fn action_law_and_equivariance() {
        let mut r = rng();
        for s in spaces() {
            for _ in 0..20 {
                let p = random_point(&s, &mut r);
                let (l1, l2) = (s.group().random(&mut r, 0.7), s.group().random(&mut r, 0.7));
                let lhs = s.act(&l1.mul(&l2), &p).unwrap();
                let rhs = s.act(&l1, &s.act(&l2, &p).unwrap()).unwrap();
                assert!(lhs.dist(&rhs) < 1e-8, "{:?}", s.momentum_tag());
                assert!(s.equivariance_residual(&l1, &p).unwrap() < 1e-9, "{:?}", s.momentum_tag());
            }
        }
    }

    #[test]
    fn momentum_trivial_values() {
        let d = crate::liecore::builtin::lu_weinstein_su2();
        let s = &spaces()[0];
        let lam = Vector::from_vec(vec![0.1, 0.2, 0.3]);
        let mu = s.momentum(&PhasePoint::new(s.double().identity(), lam.clone())).unwrap();
        assert!((mu.xi - d.to_dual(&d.embed(&lam, Factor::NStar))).amax() < 1e-15 && mu.b == 1.0);
        let t = &spaces()[3];
        let mu = t.momentum(&PhasePoint::new(t.double().identity(), Vector::zeros(3))).unwrap();
        assert!((mu.xi - d.to_dual(t.alpha())).amax() < 1e-15);
        let c = &spaces()[5];
        let eta = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mu = c.momentum(&PhasePoint::new(c.double().identity(), eta.clone())).unwrap();
        assert!((mu.xi - eta).amax() < 1e-14);
    }

    #[test]
    fn momentum_maps_generate_the_action() {
        let mut r = rng();
        for s in spaces() {
            let p = random_point(&s, &mut r);
            let z = rvec(&mut r, 6, 1.0);
            assert!(s.momentum_residual(&z, &p).unwrap() < 1e-8, "{:?}", s.momentum_tag());
        }
    }

    #[test]
    fn poisson_map_for_admissible_alpha() {
        let mut r = rng();
        for s in spaces() {
            let p = random_point(&s, &mut r);
            let (worst, _, _) = s.poisson_basis_scan(&p).unwrap();
            assert!(worst < 1e-8, "{:?} {worst:e}", s.momentum_tag());
        }
    }

    #[test]
    fn mu_tilde_fails_for_root_alpha_with_predicted_defect() {
        let s = HamiltonianSpace::cotangent_nstar(DoubleGroup::lu_weinstein(), Cocycle::Zero, &root(), MomentumTag::MuTildePhi)
            .unwrap();
        let p = PhasePoint::new(s.double().identity(), Vector::zeros(3));
        let (worst, _, _) = s.poisson_basis_scan(&p).unwrap();
        assert!(worst > 1e-3);
        let (a, b) = (unit(6, 0), unit(6, 1));
        let fa = Observable::linear(a.clone());
        let fb = Observable::linear(b.clone());
        let res = s.poisson_map_residual(&p, &fa, &fb).unwrap();
        let predicted = mu_tilde_defect(s.double(), s.alpha(), &a, &b).unwrap();
        assert!((res - predicted.abs()).abs() < 1e-8, "{res} vs {predicted}");
    }

    #[test]
    fn dualizable_membership() {
        let mut r = rng();
        let s = HamiltonianSpace::cotangent_n(DoubleGroup::lu_weinstein(), Cocycle::Zero, &Vector::zeros(3), MomentumTag::Mu00)
            .unwrap();
        let d = s.double().algebra().clone();
        let a = cartan();
        let anchor = ExtendedDual::unit(d.to_dual(&d.embed(&a, Factor::NStar)));
        let p0 = PhasePoint::new(s.double().identity(), a.clone());
        let at = s.dualizable_residual(&p0, &anchor).unwrap();
        assert_eq!(at.status, OrbitStatus::Member);
        assert!(at.residual < 1e-12);
        for _ in 0..5 {
            let l = s.group().random(&mut r, 0.8);
            let p = s.act(&l, &p0).unwrap();
            let res = s.dualizable_residual(&p, &anchor).unwrap();
            assert_eq!(res.status, OrbitStatus::Member, "{}", res.residual);
        }
        // Scaling the fiber changes the Casimir tr(Z^2), so the point leaves the orbit.
        let off = PhasePoint::new(s.double().identity(), &a * 1.5);
        let res = s.dualizable_residual(&off, &anchor).unwrap();
        assert_ne!(res.status, OrbitStatus::Member);
        assert!(res.residual > 1e-2);
    }

    #[test]
    fn null_directions_in_the_preimage() {
        let mut r = rng();
        let s = HamiltonianSpace::cotangent_n(DoubleGroup::lu_weinstein(), Cocycle::Zero, &cartan(), MomentumTag::Mu0Alpha)
            .unwrap();
        let anchor = ExtendedDual::unit(Vector::zeros(6));
        assert!(s.stabilizer_basis(&anchor).ncols() >= 1);
        let p0 = PhasePoint::new(s.double().identity(), Vector::zeros(3));
        for _ in 0..3 {
            let l = s.group().random(&mut r, 0.6);
            let p = s.act(&l, &p0).unwrap();
            assert!(s.null_direction_residual(&p, &l, &anchor).unwrap() < 1e-8);
        }
    }

    #[test]
    fn bhat_rejects_root_alpha() {
        let s = HamiltonianSpace::cotangent_nstar(DoubleGroup::lu_weinstein(), Cocycle::Zero, &root(), MomentumTag::MuTildeAlpha)
            .unwrap();
        let p = PhasePoint::new(s.double().identity(), Vector::zeros(3));
        assert!(matches!(s.act(&s.double().identity(), &p), Err(HamError::AlphaCondition(_))));
    }

    #[test]
    fn reduced_orbit_maps() {
        let mut r = rng();
        for f in [ReducedFormulation::Zero, ReducedFormulation::MinusAlpha] {
            let o = ReducedOrbit::new(DoubleGroup::lu_weinstein(), Cocycle::Zero, &cartan(), f).unwrap();
            assert!(o.momentum(&o.double.identity()).dist(&o.anchor()) < 1e-15);
            let (k, l) = (o.double.group().random(&mut r, 1.0), o.double.group().random(&mut r, 1.0));
            assert!(o.equivariance_residual(&k, &l) < 1e-9);
            assert_eq!(o.stabilizer_basis().ncols(), 2);
        }
    }
}
