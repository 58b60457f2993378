# fieldtheory/services/reduction.py
"""
Gauge action on boundary fields, the moment map J(a, p) = -d_a* p and
tangent-level checks of the reduction picture.

What it does
- gauge_transform: a -> g^-1 a g + g^-1 dg (dg by central differences of the
  matrix entries), a0 / Lam / Lam0 in the adjoint representation, p / beta
  in the coadjoint one, frames by e -> e g.
- hamiltonian_action_check: dJ_xi = omega(xi_M, .) by finite differences.
- coisotropy_check: T^omega inside T via principal angles.
- isotropy_check: boundary form on solution variations of the abelian
  topological theory, with gauge directions projected out.
- gauge_fix_temporal: one-shot rotation removing a0.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import linalg

from fieldtheory.errors import FieldShapeError, RankAmbiguityError
from fieldtheory.services.algebra import (
    MinkowskiMetric, bracket, build_algebra, coadjoint, exp_element, from_matrix, group_adjoint,
)
from fieldtheory.services.dynamics import YangMillsBoundarySystem, action_ym, evolve
from fieldtheory.services.fields import BulkField, zero_state, field_shapes
from fieldtheory.services.mesh import (
    assemble_operator, build_mesh, d_a, d_a_star, gradient, pairing, partial_k,
)

logger = logging.getLogger(__name__)


@dataclass
class ReductionConfig:
    fd_step: float = 1e-6
    rank_tol: float = 1e-8
    angle_tol: float = 1e-8
    group_tol: float = 1e-10


CFG = ReductionConfig()


# ------------------------------------------------------------------
# Gauge elements
# ------------------------------------------------------------------

@dataclass(eq=False)
class GaugeElement:
    matrices: np.ndarray               # (*S, r, r)
    generator: np.ndarray = None       # (*S, n) with g = exp(generator), when known
    is_identity: bool = False

    @classmethod
    def identity(cls, mesh, spec) -> "GaugeElement":
        r = spec.rep_dim
        mats = np.broadcast_to(np.eye(r), mesh.shape + (r, r)).copy()
        return cls(mats, np.zeros(mesh.shape + (spec.dim,)), True)

    @classmethod
    def from_generator(cls, spec, xi) -> "GaugeElement":
        xi = np.asarray(xi, dtype=float)
        return cls(exp_element(spec, xi), xi.copy())

    @classmethod
    def constant(cls, mesh, spec, xi) -> "GaugeElement":
        xi = np.broadcast_to(np.asarray(xi, dtype=float), mesh.shape + (spec.dim,))
        return cls.from_generator(spec, xi)

    def compose(self, other: "GaugeElement", spec=None) -> "GaugeElement":
        """Pointwise product self * other."""
        gen = None
        if spec is not None and spec.kind == "abelian" and self.generator is not None and other.generator is not None:
            gen = self.generator + other.generator
        return GaugeElement(self.matrices @ other.matrices, gen, self.is_identity and other.is_identity)

    def inverse(self) -> "GaugeElement":
        gen = None if self.generator is None else -self.generator
        return GaugeElement(np.linalg.inv(self.matrices), gen, self.is_identity)

    def check(self, spec, cfg: ReductionConfig = CFG) -> float:
        """Defect of g^T eta g = eta for so(1,d); invertibility otherwise."""
        det = np.linalg.det(self.matrices)
        if np.any(np.abs(det) < 1e-12):
            raise FieldShapeError("gauge element is not invertible at some site")
        if spec.kind != "so":
            return 0.0
        eta = MinkowskiMetric(spec.rep_dim).matrix
        defect = float(np.max(np.abs(np.swapaxes(self.matrices, -1, -2) @ eta @ self.matrices - eta)))
        if defect > cfg.group_tol:
            raise FieldShapeError(f"gauge element leaves the Lorentz group (defect {defect:.3e})")
        return defect


def _act(M, f) -> np.ndarray:
    """Apply per-site matrices M (*S, n, n) to the algebra index of f (*S, ..., n)."""
    f = np.asarray(f, dtype=float)
    extra = f.ndim - M.ndim + 1
    M = M.reshape(M.shape[:-2] + (1,) * extra + M.shape[-2:])
    return np.squeeze(M @ f[..., None], axis=-1)


def coadjoint_matrix(spec, R) -> np.ndarray:
    """C = K^-1 R^-T K, the representation momenta transform in."""
    return spec.pairing_inverse @ np.swapaxes(np.linalg.inv(R), -1, -2) @ spec.pairing


def connection_shift(mesh, spec, g: GaugeElement) -> np.ndarray:
    """g^-1 d_k g in algebra coordinates, shape (*S, d, n)."""
    if spec.kind == "abelian" and g.generator is not None:
        return gradient(mesh, g.generator)
    g_inv = np.linalg.inv(g.matrices)
    parts = [from_matrix(spec, g_inv @ partial_k(mesh, g.matrices, k)) for k in range(mesh.d)]
    return np.stack(parts, axis=-2)


def gauge_transform(g: GaugeElement, state):
    """Gauge-transformed copy of a boundary state."""
    mesh, spec = state.mesh, state.spec
    if g.matrices.shape != mesh.shape + (spec.rep_dim, spec.rep_dim):
        raise FieldShapeError(f"gauge element of shape {g.matrices.shape} does not match the mesh")
    if g.is_identity:
        return state.copy()
    R = group_adjoint(spec, g.matrices)
    C = coadjoint_matrix(spec, R)
    changes = {
        "a": _act(R, state.a) + connection_shift(mesh, spec, g),
        "a0": _act(R, state.a0),
        "Lam": _act(R, state.Lam),
        "Lam0": _act(R, state.Lam0),
        "p": _act(C, state.p),
        "beta": _act(C, state.beta),
    }
    if spec.kind == "so":
        E = state.vierbein() @ g.matrices
        changes["e0"] = E[..., 0, :]
        changes["e"] = E[..., 1:, :]
    return state.replace(**changes)


def gauge_transform_bulk(mesh, spec, g: GaugeElement, chi: BulkField) -> BulkField:
    """Time-independent gauge transformation applied to every collar slice."""
    R = group_adjoint(spec, g.matrices)
    C = coadjoint_matrix(spec, R)
    A = np.stack([_act(R, A_i) for A_i in chi.A])
    A[..., 1:, :] += connection_shift(mesh, spec, g)[None]
    P = np.stack([_act(C, P_i) for P_i in chi.P])
    return BulkField(A, P)


def action_gauge_defect(mesh, spec, chi: BulkField, g: GaugeElement, lam: float = 0.0) -> float:
    moved = gauge_transform_bulk(mesh, spec, g, chi)
    return abs(action_ym(mesh, spec, moved.A, moved.P, lam).total - action_ym(mesh, spec, chi.A, chi.P, lam).total)


def _smooth_collar_fields(mesh, spec):
    x = mesh.grid()[..., 0]
    m, n = mesh.d + 1, spec.dim
    A = np.zeros((mesh.n_t,) + mesh.shape + (m, n))
    P = np.zeros((mesh.n_t,) + mesh.shape + (m, m, n))
    for i in range(mesh.n_t):
        for mu in range(m):
            for a in range(n):
                A[i, ..., mu, a] = 0.4 * (1 + 0.1 * i) * np.sin(2 * np.pi * x + 0.7 * mu + 1.3 * a)
        for mu in range(m):
            for nu in range(mu + 1, m):
                for a in range(n):
                    value = 0.5 * np.cos(2 * np.pi * x + 0.4 * mu + 0.9 * nu + 0.5 * a + 0.2 * i)
                    P[i, ..., mu, nu, a] = value
                    P[i, ..., nu, mu, a] = -value
    xi = np.stack([0.7 * np.sin(2 * np.pi * x + 0.6 * a + 0.3) for a in range(n)], axis=-1)
    return BulkField(A, P), GaugeElement.from_generator(spec, xi)


@dataclass
class RefinementStudy:
    sites: list
    spacings: list
    defects: list
    order: float


def gauge_defect_order(site_counts=(8, 16, 32), kind: str = "su2", n_t: int = 4, dt: float = 0.01) -> RefinementStudy:
    """Action defect under a smooth, spatially varying gauge map on refined d = 1 meshes."""
    spec = build_algebra(kind, 1)
    hs, defects = [], []
    for sites in site_counts:
        mesh = build_mesh([sites], 1.0, n_t=n_t, dt=dt)
        chi, g = _smooth_collar_fields(mesh, spec)
        hs.append(mesh.h[0])
        defects.append(action_gauge_defect(mesh, spec, chi, g))
    order = float(np.polyfit(np.log(hs), np.log(defects), 1)[0])
    logger.info(f"gauge defect order {order:.3f} over sites {list(site_counts)}")
    return RefinementStudy(list(site_counts), hs, defects, order)


# ------------------------------------------------------------------
# Moment map and the Hamiltonian property
# ------------------------------------------------------------------

def moment_map(mesh, spec, a, p) -> np.ndarray:
    return -d_a_star(mesh, spec, a, p)


def infinitesimal_gauge_action(mesh, spec, a, p, xi):
    """xi_M = (d_a xi, -ad*_xi p)."""
    xi = np.asarray(xi, dtype=float)
    return d_a(mesh, spec, a, xi), -coadjoint(spec, xi[..., None, :], p)


def boundary_symplectic_form(mesh, spec, v1, v2) -> float:
    """omega((da1, dp1), (da2, dp2)) = <dp2, da1> - <dp1, da2>."""
    (da1, dp1), (da2, dp2) = v1, v2
    return pairing(mesh, spec, dp2, da1) - pairing(mesh, spec, dp1, da2)


@dataclass
class HamiltonianActionReport:
    max_gap: float
    max_relative_gap: float
    samples: int


def hamiltonian_action_check(mesh, spec, a, p, xi, fd_step: float = 1e-6, n_directions: int = 5,
                             seed: int = 0) -> HamiltonianActionReport:
    """Compare dJ_xi along random (da, dp) with omega(xi_M, (da, dp))."""
    rng = np.random.default_rng(seed)
    xi_m = infinitesimal_gauge_action(mesh, spec, a, p, xi)

    def j_xi(a_, p_):
        return pairing(mesh, spec, moment_map(mesh, spec, a_, p_), xi)

    gaps, rels = [], []
    for _ in range(n_directions):
        da = rng.standard_normal(np.shape(a))
        dp = rng.standard_normal(np.shape(p))
        lhs = (j_xi(a + fd_step * da, p + fd_step * dp) - j_xi(a - fd_step * da, p - fd_step * dp)) / (2 * fd_step)
        rhs = boundary_symplectic_form(mesh, spec, xi_m, (da, dp))
        gaps.append(abs(lhs - rhs))
        rels.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return HamiltonianActionReport(max(gaps), max(rels) if any(gaps) else 0.0, n_directions)


# ------------------------------------------------------------------
# Gauss law and (co)isotropy
# ------------------------------------------------------------------

def gauss_operator(mesh, spec, a) -> np.ndarray:
    """Dense matrix of p -> d_a* p for fixed a."""
    shape = mesh.shape + (mesh.d, spec.dim)
    return assemble_operator(lambda p: d_a_star(mesh, spec, a, p), shape)


def gauss_projection(mesh, spec, a, p) -> np.ndarray:
    """Minimum-norm correction of p onto ker d_a*."""
    D = gauss_operator(mesh, spec, a)
    p = np.asarray(p, dtype=float)
    correction = np.linalg.lstsq(D, D @ p.reshape(-1), rcond=None)[0]
    return p - correction.reshape(p.shape)


def boundary_omega_matrix(mesh, spec) -> np.ndarray:
    """Omega on packed (a, p) with omega(v1, v2) = v1^T Omega v2."""
    W = np.kron(np.eye(mesh.n_sites * mesh.d), mesh.cell_volume * spec.pairing)
    zero = np.zeros_like(W)
    return np.block([[zero, W], [-W, zero]])


def gauss_constraint_system(mesh, spec, a, p):
    """(constraint function on packed (a, p), Omega, packed point)."""
    shape = mesh.shape + (mesh.d, spec.dim)
    size = int(np.prod(shape))

    def constraints(x):
        return d_a_star(mesh, spec, x[:size].reshape(shape), x[size:].reshape(shape)).reshape(-1)
    point = np.concatenate([np.asarray(a, dtype=float).reshape(-1), np.asarray(p, dtype=float).reshape(-1)])
    return constraints, boundary_omega_matrix(mesh, spec), point


@dataclass
class CoisotropyReport:
    coisotropic: bool
    ambient_dim: int
    tangent_dim: int
    orthogonal_dim: int
    max_angle: float
    constraint_value: float

    def report_lines(self) -> list:
        return [
            f"ambient dimension: {self.ambient_dim}",
            f"tangent dimension: {self.tangent_dim}",
            f"omega-orthogonal dimension: {self.orthogonal_dim}",
            f"max principal angle: {self.max_angle:.3e}",
            f"coisotropic: {self.coisotropic}",
        ]


def _jacobian(fn, x, step):
    cols = []
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = step
        cols.append((np.atleast_1d(fn(x + shift)) - np.atleast_1d(fn(x - shift))) / (2 * step))
    return np.array(cols).T


def coisotropy_check(constraints, omega, point, tol: float = 1e-8, rank_tol: float = None,
                     jacobian=None, cfg: ReductionConfig = CFG) -> CoisotropyReport:
    """
    Is the zero set of `constraints` coisotropic at `point`?

    constraints: x -> vector; omega: (n, n) matrix or x -> matrix.
    """
    rank_tol = cfg.rank_tol if rank_tol is None else rank_tol
    x = np.asarray(point, dtype=float)
    value = float(np.max(np.abs(np.atleast_1d(constraints(x))), initial=0.0))
    om = np.asarray(omega(x) if callable(omega) else omega, dtype=float)
    J = np.atleast_2d(jacobian if jacobian is not None else _jacobian(constraints, x, cfg.fd_step))

    _, s, vt = np.linalg.svd(J, full_matrices=True)
    threshold = rank_tol * (s[0] if s.size and s[0] > 0 else 1.0)
    for sv in s:
        if threshold / 10 < sv < threshold * 10:
            logger.error(f"ambiguous rank: singular value {sv:.3e} near threshold {threshold:.3e}")
            raise RankAmbiguityError(sv, threshold)
    rank = int(np.sum(s > threshold))
    T = vt[rank:].T
    if T.shape[1] == 0:
        orth = np.eye(x.size)
    else:
        orth = linalg.null_space(T.T @ om, rcond=rank_tol)

    if orth.shape[1] == 0:
        coisotropic, max_angle = True, 0.0
    elif orth.shape[1] > T.shape[1] or T.shape[1] == 0:
        coisotropic, max_angle = False, float(np.pi / 2)
    else:
        max_angle = float(np.max(linalg.subspace_angles(orth, T)))
        coisotropic = max_angle < tol
    return CoisotropyReport(coisotropic, x.size, T.shape[1], orth.shape[1], max_angle, value)


@dataclass
class IsotropyReport:
    max_omega: float
    raw_max_omega: float
    samples: int
    values: np.ndarray = field(repr=False, default=None)


def _random_divergence_free(rng, mesh, spec):
    p = rng.standard_normal(mesh.shape + (mesh.d, spec.dim))
    return gauss_projection(mesh, spec, np.zeros_like(p), p)


def isotropy_check(mesh, spec=None, n_samples: int = 10, seed: int = 0, include_gauge: bool = True) -> IsotropyReport:
    """
    Boundary form on pairs of solution variations of the abelian topological
    theory over the whole collar. Both ends of the slab count as boundary:
    omega_boundary = omega(t = 0) - omega(t = -epsilon).
    """
    spec = spec or build_algebra("abelian", 1)
    if spec.kind != "abelian":
        raise FieldShapeError("isotropy_check needs an abelian algebra (linear solution space)")
    if n_samples < 2:
        raise FieldShapeError("isotropy_check needs at least two samples")
    rng = np.random.default_rng(seed)
    shapes = field_shapes(mesh, spec)
    system = YangMillsBoundarySystem(0.0)
    base = zero_state(mesh, spec)
    zero_a = np.zeros(shapes["a"])

    variations = []
    for i in range(n_samples):
        if include_gauge and i == n_samples - 1:
            chi = rng.standard_normal(shapes["a0"])
            start = base.replace(a=gradient(mesh, chi))
        else:
            chi = rng.standard_normal(shapes["a0"])
            const = rng.standard_normal((mesh.d, spec.dim))
            beta = rng.standard_normal(shapes["beta"])
            start = base.replace(
                a=gradient(mesh, chi) + const,
                p=_random_divergence_free(rng, mesh, spec),
                a0=rng.standard_normal(shapes["a0"]),
                beta=0.5 * (beta - np.swapaxes(beta, -2, -3)),
            )
        end = evolve(start, mesh.n_t, mesh.dt, system=system)[-1].state
        variations.append(((start.a, start.p), (end.a, end.p)))

    D = assemble_operator(lambda xi: d_a(mesh, spec, zero_a, xi), shapes["a0"])

    def quotient(v):
        da, dp = v
        exact = D @ np.linalg.lstsq(D, da.reshape(-1), rcond=None)[0]
        return da - exact.reshape(da.shape), dp

    n = len(variations)
    raw = np.zeros((n, n))
    projected = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            (s_i, e_i), (s_j, e_j) = variations[i], variations[j]
            raw[i, j] = (boundary_symplectic_form(mesh, spec, e_i, e_j)
                         - boundary_symplectic_form(mesh, spec, s_i, s_j))
            projected[i, j] = (boundary_symplectic_form(mesh, spec, quotient(e_i), quotient(e_j))
                               - boundary_symplectic_form(mesh, spec, quotient(s_i), quotient(s_j)))
    raw = raw - raw.T
    projected = projected - projected.T
    return IsotropyReport(float(np.max(np.abs(projected))), float(np.max(np.abs(raw))), n, projected)


def gauge_fix_temporal(state, duration: float = None):
    """Rotate by g = exp(-duration a0) and drop a0; duration defaults to the collar depth."""
    if not np.any(state.a0):
        return state.copy()
    duration = state.mesh.epsilon if duration is None else float(duration)
    g = GaugeElement.from_generator(state.spec, -duration * state.a0)
    fixed = gauge_transform(g, state)
    return fixed.replace(a0=np.zeros_like(state.a0))


def equivariance_defect(mesh, spec, a, p, xi, zeta) -> float:
    """|omega(xi_M, zeta_M) + <J, [xi, zeta]>|; vanishes identically for abelian algebras."""
    lhs = boundary_symplectic_form(
        mesh, spec,
        infinitesimal_gauge_action(mesh, spec, a, p, xi),
        infinitesimal_gauge_action(mesh, spec, a, p, zeta),
    )
    rhs = pairing(mesh, spec, moment_map(mesh, spec, a, p), bracket(spec, xi, zeta))
    return abs(lhs + rhs)
