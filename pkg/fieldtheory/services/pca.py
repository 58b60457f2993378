# fieldtheory/services/pca.py
"""
Presymplectic constraint algorithm and the Palatini constraint set.

What it does
- Runs the Gotay recursion M0 > M1 > ... on finite-dimensional
  presymplectic systems (Omega(x), H(x)): at every level the new constraints
  are dH(Z) for Z in the Omega-orthogonal of the current tangent space, and
  the sample point is pulled onto the new zero set by Gauss-Newton.
- Evaluates the six Palatini constraints of a boundary state, projects a
  state onto their joint zero set, and exposes the Palatini boundary theory
  itself as a presymplectic system.
- Checks Lagrange-multiplier criticality of the extended action by finite
  differences, block by block.

How to use
- pca_run(free_particle_system(), np.zeros(2)) for the catalogued models.
- project_constraints(state) after an evolution step.
- Rank decisions use singular values relative to the largest one
  (cfg.rank_tol), never absolute thresholds.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import linalg

from fieldtheory.errors import PCAError, ProjectionError
from fieldtheory.services.algebra import MinkowskiMetric
from fieldtheory.services.dynamics import (
    curvature, evolution_rhs, extended_action, palatini_split, boundary_hamiltonian,
)
from fieldtheory.services.fields import palatini_bivector, check_vierbein
from fieldtheory.services.mesh import d_a_star, field_norm

logger = logging.getLogger(__name__)


@dataclass
class PCAConfig:
    rank_tol: float = 1e-8          # relative singular value cut
    fd_step: float = 1e-6           # Jacobians of constraints and gradients
    gradient_tol: float = 1e-6      # "has a component in T"
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    consistency_tol: float = 1e-8


CFG = PCAConfig()


@dataclass
class ProjectionConfig:
    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 0.5
    min_step: float = 1e-4
    fd_step: float = 1e-6


PROJECTION_CFG = ProjectionConfig()


# ------------------------------------------------------------------
# Linear algebra helpers
# ------------------------------------------------------------------

def kernel(omega, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal columns spanning ker(omega); cut at tol * sigma_max."""
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    return linalg.null_space(omega, rcond=tol)


def jacobian_fd(fn, x, step: float = 1e-6, columns=None) -> np.ndarray:
    """Central-difference Jacobian of a vector (or scalar) function."""
    x = np.asarray(x, dtype=float)
    columns = range(x.size) if columns is None else columns
    cols = []
    for i in columns:
        shift = np.zeros_like(x)
        shift[i] = step
        hi = np.atleast_1d(np.asarray(fn(x + shift), dtype=float)).reshape(-1)
        lo = np.atleast_1d(np.asarray(fn(x - shift), dtype=float)).reshape(-1)
        cols.append((hi - lo) / (2 * step))
    return np.array(cols).T


def gradient_fd(fn, x, step: float = 1e-6) -> np.ndarray:
    return jacobian_fd(fn, x, step)[0]


@dataclass
class PresymplecticSystem:
    n: int
    omega: object                  # x -> (n, n) skew matrix
    hamiltonian: object            # x -> float
    gradient: object = None        # x -> (n,) ; finite differences when missing
    name: str = "system"

    def grad(self, x, cfg: PCAConfig = CFG) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return gradient_fd(self.hamiltonian, x, cfg.fd_step)

    def skew_defect(self, x) -> float:
        om = self.omega(x)
        return float(np.max(np.abs(om + om.T), initial=0.0))


@dataclass
class PCAStep:
    new_constraints: list
    dependent: list
    kernel_dim: int


@dataclass
class PCALevel:
    dimension: int
    constraint_count: int
    point: np.ndarray


@dataclass
class PCAResult:
    levels: list
    stabilized: bool
    final_kernel_dim: int
    initial_dimension: int
    constraints: list = field(default_factory=list, repr=False)

    @property
    def level_count(self) -> int:
        return len(self.levels)

    def report_lines(self) -> list:
        lines = [f"M0: dimension {self.initial_dimension}"]
        for i, level in enumerate(self.levels, start=1):
            lines.append(f"M{i}: dimension {level.dimension}, constraints {level.constraint_count}")
        lines.append(f"stabilized: {self.stabilized}")
        lines.append(f"final kernel dimension: {self.final_kernel_dim}")
        return lines


def _constraint_values(constraints, x) -> np.ndarray:
    return np.array([float(c(x)) for c in constraints])


def _constraint_jacobian(constraints, x, cfg: PCAConfig) -> np.ndarray:
    if not constraints:
        return np.zeros((0, np.size(x)))
    return jacobian_fd(lambda y: _constraint_values(constraints, y), x, cfg.fd_step)


def _tangent_basis(constraints, x, cfg: PCAConfig) -> np.ndarray:
    n = np.size(x)
    if not constraints:
        return np.eye(n)
    return linalg.null_space(_constraint_jacobian(constraints, x, cfg), rcond=cfg.rank_tol)


def _rank(matrix, cfg: PCAConfig) -> int:
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(s > cfg.rank_tol * s[0])) if s[0] > 0 else 0


def _kernel_dim(matrix, scale, cfg: PCAConfig) -> int:
    """Null directions of a square matrix, cut at rank_tol relative to the ambient scale."""
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(s <= cfg.rank_tol * max(scale, 1e-300)))


def _candidate(system, z, cfg):
    z = z.copy()

    def constraint(y):
        return float(z @ system.grad(y, cfg))
    return constraint


def pca_step(system: PresymplecticSystem, point, constraints, level: int = 1, cfg: PCAConfig = CFG) -> PCAStep:
    """
    One Gotay level at a point of the current constraint set.

    Candidates are c_Z(x) = Z . dH(x) with Z frozen at the point, for a basis
    of the Omega-orthogonal of the current tangent space. A candidate whose
    gradient has a component along the tangent space is a new constraint;
    the others must vanish once the point sits on the new zero set.
    """
    x = np.asarray(point, dtype=float)
    values = _constraint_values(constraints, x)
    if values.size and np.max(np.abs(values)) > cfg.consistency_tol:
        raise PCAError(level, f"point violates current constraints (max {np.max(np.abs(values)):.3e})")

    T = _tangent_basis(constraints, x, cfg)
    om = np.asarray(system.omega(x), dtype=float)
    if T.shape[1] == 0:
        return PCAStep([], [], 0)
    orth = linalg.null_space(T.T @ om, rcond=cfg.rank_tol)

    new, dependent = [], []
    for col in range(orth.shape[1]):
        c = _candidate(system, orth[:, col], cfg)
        grad_c = gradient_fd(c, x, cfg.fd_step)
        along = T.T @ grad_c if T.shape[1] else np.zeros(0)
        if np.linalg.norm(along) > cfg.gradient_tol:
            new.append(c)
            # restrict T to the part orthogonal to the new gradient
            T = T @ linalg.null_space(along[None, :], rcond=cfg.rank_tol)
        else:
            dependent.append(c)
    logger.debug(f"level {level}: kernel {orth.shape[1]}, new constraints {len(new)}")
    return PCAStep(new, dependent, orth.shape[1])


def newton_project(constraints, x, level: int = 0, cfg: PCAConfig = CFG) -> np.ndarray:
    """Gauss-Newton with minimum-norm steps onto the zero set of constraints."""
    x = np.asarray(x, dtype=float).copy()
    for it in range(cfg.newton_max_iter):
        values = _constraint_values(constraints, x)
        if values.size == 0 or np.max(np.abs(values)) < cfg.newton_tol:
            return x
        J = _constraint_jacobian(constraints, x, cfg)
        dx = np.linalg.lstsq(J, -values, rcond=None)[0]
        x = x + dx
        if not np.all(np.isfinite(x)):
            break
    values = _constraint_values(constraints, x)
    if values.size and np.all(np.isfinite(values)) and np.max(np.abs(values)) < cfg.newton_tol:
        return x
    logger.error(f"Newton projection failed at level {level}")
    raise PCAError(level, "Newton projection onto the constraint set did not converge")


def pca_run(system: PresymplecticSystem, seed, max_levels: int = 10, tol: float = None,
            initial_constraints=(), cfg: PCAConfig = CFG) -> PCAResult:
    """Iterate pca_step until no new constraint appears or max_levels is hit."""
    if tol is not None:
        cfg = PCAConfig(**{**cfg.__dict__, "newton_tol": tol})
    x = np.asarray(seed, dtype=float)
    if not np.all(np.isfinite(x)):
        raise PCAError(0, "seed point is not finite")
    constraints = list(initial_constraints)
    if constraints:
        x = newton_project(constraints, x, 0, cfg)
    initial_dimension = system.n - _rank(_constraint_jacobian(constraints, x, cfg), cfg)

    levels, stabilized = [], False
    for level in range(1, max_levels + 1):
        step = pca_step(system, x, constraints, level, cfg)
        if not step.new_constraints:
            _check_dependent(step.dependent, x, level, cfg)
            stabilized = True
            break
        constraints.extend(step.new_constraints)
        x = newton_project(constraints, x, level, cfg)
        _check_dependent(step.dependent, x, level, cfg)
        dim = system.n - _rank(_constraint_jacobian(constraints, x, cfg), cfg)
        levels.append(PCALevel(dimension=dim, constraint_count=len(constraints), point=x.copy()))
        logger.info(f"{system.name}: M{level} has dimension {dim}")

    T = _tangent_basis(constraints, x, cfg)
    om = np.asarray(system.omega(x), dtype=float)
    final_kernel_dim = _kernel_dim(T.T @ om @ T, np.linalg.norm(om, 2), cfg) if T.shape[1] else 0
    return PCAResult(levels, stabilized, final_kernel_dim, initial_dimension, constraints)


def _check_dependent(dependent, x, level, cfg):
    for c in dependent:
        value = c(x)
        if abs(value) > cfg.consistency_tol:
            logger.error(f"inconsistent dependent constraint at level {level}: {value:.3e}")
            raise PCAError(level, f"inconsistent system: dependent constraint evaluates to {value:.3e}")


# ------------------------------------------------------------------
# Catalogued finite-dimensional systems
# ------------------------------------------------------------------

def canonical_omega(n_pairs: int, extra: int = 0) -> np.ndarray:
    """Omega with omega(v1, v2) = v1^T Omega v2 = sum dq_i ^ dp_i; layout (q1, p1, q2, p2, ..., extras)."""
    n = 2 * n_pairs + extra
    om = np.zeros((n, n))
    for i in range(n_pairs):
        om[2 * i, 2 * i + 1] = 1.0
        om[2 * i + 1, 2 * i] = -1.0
    return om


def free_particle_system() -> PresymplecticSystem:
    om = canonical_omega(1)
    return PresymplecticSystem(
        n=2, omega=lambda x: om, name="free-particle",
        hamiltonian=lambda x: 0.5 * x[1] ** 2,
        gradient=lambda x: np.array([0.0, x[1]]),
    )


def regular_model_system() -> PresymplecticSystem:
    """(q, p, beta), H = p^2/2 + beta^2/2 + beta q; beta spans ker Omega."""
    om = canonical_omega(1, extra=1)
    return PresymplecticSystem(
        n=3, omega=lambda x: om, name="regular",
        hamiltonian=lambda x: 0.5 * x[1] ** 2 + 0.5 * x[2] ** 2 + x[2] * x[0],
        gradient=lambda x: np.array([x[2], x[1], x[2] + x[0]]),
    )


def two_level_model_system() -> PresymplecticSystem:
    """(q, p, r, s, beta), Omega = dq^dp + dr^ds, H = beta q + p s."""
    om = canonical_omega(2, extra=1)
    return PresymplecticSystem(
        n=5, omega=lambda x: om, name="two-level",
        hamiltonian=lambda x: x[4] * x[0] + x[1] * x[3],
        gradient=lambda x: np.array([x[4], x[3], 0.0, x[1], x[0]]),
    )


CATALOGUE = {
    "free-particle": free_particle_system,
    "regular": regular_model_system,
    "two-level": two_level_model_system,
}


# ------------------------------------------------------------------
# Palatini constraints
# ------------------------------------------------------------------

def torsion_gradient(state) -> np.ndarray:
    """
    Exact gradient in E of the vierbein part of H (per site, without the
    cell volume): f = sum_{mu nu} <W^{mu nu}, P(E)^{mu nu}> with
    W_k0 = -Lam0_k, W_0k = Lam0_k, W_kj = -Lam_kj / 2.
    """
    spec = state.spec
    E = state.vierbein()
    m = E.shape[-1]
    det = check_vierbein(E)
    W = np.zeros(state.mesh.shape + (m, m, spec.dim))
    W[..., 1:, 0, :] = -state.Lam0
    W[..., 0, 1:, :] = state.Lam0
    W[..., 1:, 1:, :] = -0.5 * state.Lam
    KW = W @ spec.pairing
    eta = MinkowskiMetric(m).diagonal
    C = np.zeros(state.mesh.shape + (m, m, m, m))
    for c, (i, j) in enumerate(spec.index_pairs):
        C[..., i, j] = KW[..., c] * eta[i] * eta[j]
        C[..., j, i] = -C[..., i, j]
    q = 0.5 * np.einsum("...mnij,...mi,...nj->...", C, E, E)
    dq = np.einsum("...rnlj,...nj->...rl", C, E)
    inv_t = np.swapaxes(np.linalg.inv(E), -1, -2)
    return det[..., None, None] * (q[..., None, None] * inv_t + dq)


def palatini_residuals(state) -> dict:
    """The six constraint fields defining the Palatini constraint set."""
    mesh, spec = state.mesh, state.spec
    pk0, pkj = palatini_split(state)
    torsion = torsion_gradient(state)
    return {
        "gauss": d_a_star(mesh, spec, state.a, state.p),
        "flatness": curvature(mesh, spec, state.a) - state.Lam,
        "beta": state.beta - pkj,
        "p": state.p - pk0,
        "torsion0": torsion[..., 0, :],
        "torsion1": torsion[..., 1:, :],
    }


def residual_norms(state) -> dict:
    return {name: field_norm(state.mesh, value) for name, value in palatini_residuals(state).items()}


def constraint_norm(state) -> float:
    return float(np.sqrt(sum(v ** 2 for v in residual_norms(state).values())))


def _residual_vector(state) -> np.ndarray:
    res = palatini_residuals(state)
    return np.sqrt(state.mesh.cell_volume) * np.concatenate([v.reshape(-1) for v in res.values()])


def palatini_gradient(state) -> np.ndarray:
    """Gradient of H in the packed state coordinates, block by block."""
    mesh, spec = state.mesh, state.spec
    vol, K = mesh.cell_volume, spec.pairing
    iu = np.triu_indices(mesh.d, k=1)
    a_dot, p_dot = evolution_rhs(state)
    pk0, pkj = palatini_split(state)
    F = curvature(mesh, spec, state.a)
    torsion = torsion_gradient(state)
    blocks = [
        vol * p_dot @ K,
        vol * d_a_star(mesh, spec, state.a, state.p) @ K,
        -vol * a_dot @ K,
        -vol * (F - state.Lam)[..., iu[0], iu[1], :] @ K,
        vol * (state.beta - pkj)[..., iu[0], iu[1], :] @ K,
        2 * vol * (state.p - pk0) @ K,
        vol * torsion[..., 1:, :],
        vol * torsion[..., 0, :],
    ]
    return np.concatenate([b.reshape(-1) for b in blocks])


def boundary_omega(state) -> np.ndarray:
    """Omega on packed coordinates: omega(v1, v2) = <dp2, da1> - <dp1, da2>."""
    slices = state.block_slices()
    n = state.size
    W = np.kron(np.eye(state.a.size // state.spec.dim), state.mesh.cell_volume * state.spec.pairing)
    om = np.zeros((n, n))
    om[slices["a"], slices["p"]] = W
    om[slices["p"], slices["a"]] = -W
    return om


def palatini_presymplectic_system(state) -> PresymplecticSystem:
    om = boundary_omega(state)
    return PresymplecticSystem(
        n=state.size,
        omega=lambda x: om,
        hamiltonian=lambda x: boundary_hamiltonian(state.with_vector(x)),
        gradient=lambda x: palatini_gradient(state.with_vector(x)),
        name="palatini",
    )


def first_level_values(state, cfg: PCAConfig = CFG) -> np.ndarray:
    """dH(Z) for an orthonormal basis Z of ker Omega at the state."""
    system = palatini_presymplectic_system(state)
    x = state.to_vector()
    Z = kernel(system.omega(x), cfg.rank_tol)
    return Z.T @ system.grad(x, cfg)


# fields each residual reads
RESIDUAL_FIELDS = {
    "gauss": ("a", "p"),
    "flatness": ("a", "Lam"),
    "beta": ("beta", "e", "e0"),
    "p": ("p", "e", "e0"),
    "torsion0": ("Lam", "Lam0", "e", "e0"),
    "torsion1": ("Lam", "Lam0", "e", "e0"),
}


def _untouched_fields(state, tol) -> tuple:
    """Fields no satisfied residual reads, in packing order."""
    frozen = set()
    for name, value in residual_norms(state).items():
        if value < tol:
            frozen.update(RESIDUAL_FIELDS[name])
    return tuple(name for name in state.block_slices() if name not in frozen)


def _gauss_newton(state, columns, tol, max_iter, cfg, stop_on_stall=False):
    x = state.to_vector()

    def residual(y):
        return _residual_vector(state.with_vector(y))

    r = residual(x)
    norm = float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        J = jacobian_fd(residual, x, cfg.fd_step, columns=columns)
        dx = np.zeros_like(x)
        dx[columns] = np.linalg.lstsq(J, -r, rcond=None)[0]
        step = 1.0
        while True:
            trial = x + step * dx
            r_trial = residual(trial)
            trial_norm = float(np.linalg.norm(r_trial))
            if trial_norm < norm or step <= cfg.min_step:
                break
            step *= cfg.damping
            logger.info(f"projection iteration {it}: damping step to {step:g}")
        if stop_on_stall and trial_norm >= norm:
            raise ProjectionError(it, norm)
        x, r, norm = trial, r_trial, trial_norm
        logger.debug(f"projection iteration {it}: residual {norm:.3e}")
        if norm < tol:
            return state.with_vector(x)
    raise ProjectionError(max_iter, norm)


def project_constraints(state, tol: float = None, max_iter: int = None, free=None,
                        cfg: ProjectionConfig = PROJECTION_CFG):
    """
    Gauss-Newton projection onto the joint zero set of the six residuals.

    Params
    - free: optional iterable of field names allowed to move. By default the
      fields read by residuals already below tol are held fixed first, so
      those residuals come back bit-identical. If the remaining fields stall,
      every field moves and satisfied residuals may pick up round-off of
      order tol.

    Returns the projected state; raises ProjectionError after max_iter.
    """
    tol = cfg.tol if tol is None else tol
    max_iter = cfg.max_iter if max_iter is None else max_iter
    if np.linalg.norm(_residual_vector(state)) < tol:
        return state
    slices = state.block_slices()
    everything = np.arange(state.to_vector().size)

    def columns_of(names):
        return np.concatenate([everything[slices[name]] for name in names])

    attempts = []
    if free is not None:
        attempts.append((columns_of(free), False))
    else:
        untouched = _untouched_fields(state, tol)
        if untouched and len(untouched) < len(slices):
            attempts.append((columns_of(untouched), True))
        attempts.append((everything, False))

    for columns, restricted in attempts:
        try:
            return _gauss_newton(state, columns, tol, max_iter, cfg, stop_on_stall=restricted)
        except ProjectionError as exc:
            if not restricted:
                logger.error(f"constraint projection stalled at residual {exc.residual:.3e}")
                raise
            logger.info(f"projection with satisfied residuals frozen stalled at {exc.residual:.3e}; moving all fields")


# ------------------------------------------------------------------
# Lagrange multiplier criticality
# ------------------------------------------------------------------

@dataclass
class LagrangeReport:
    block_norms: dict
    critical: bool
    constraint_residual: float
    multiplier_identity: float = 0.0

    def report_lines(self) -> list:
        lines = [f"{name}: {value:.3e}" for name, value in self.block_norms.items()]
        lines.append(f"constraint residual: {self.constraint_residual:.3e}")
        lines.append(f"critical: {self.critical}")
        return lines


def lagrange_gradient_blocks(fn, blocks: dict, steps, masks=None) -> dict:
    """
    Central-difference gradient of fn(**blocks) with respect to every entry
    of every block. steps may be a float or a per-block dict; masks restrict
    which entries are differentiated (others come back as zero).
    """
    masks = masks or {}
    grads = {}
    for name, value in blocks.items():
        value = np.asarray(value, dtype=float)
        step = steps[name] if isinstance(steps, dict) else steps
        mask = masks.get(name)
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        active = np.arange(flat.size) if mask is None else np.flatnonzero(np.broadcast_to(mask, value.shape))
        for i in active:
            plus = flat.copy()
            minus = flat.copy()
            plus[i] += step
            minus[i] -= step
            hi = fn(**{**blocks, name: plus.reshape(value.shape)})
            lo = fn(**{**blocks, name: minus.reshape(value.shape)})
            grad.reshape(-1)[i] = (hi - lo) / (2 * step)
        grads[name] = grad
    return grads


def lagrange_criticality_check(mesh, spec, A, P, Lam, E, tol: float = 1e-8, fd_step: float = 1e-5) -> LagrangeReport:
    """
    Finite-difference gradient blocks of the extended action in (A, P, Lam, E).

    The A block is taken over interior time slices; the first and last slices
    carry the collar's boundary terms. The action is affine in Lam, so that
    block uses a unit step.
    """
    def action(A, P, Lam, E):
        return extended_action(mesh, spec, A, P, Lam, E).total

    interior = np.zeros(np.shape(A), dtype=bool)
    interior[1:-1] = True
    grads = lagrange_gradient_blocks(
        action, {"A": A, "P": P, "Lam": Lam, "E": E},
        steps={"A": fd_step, "P": fd_step, "Lam": 1.0, "E": fd_step},
        masks={"A": interior},
    )
    norms = {name: float(np.linalg.norm(g)) for name, g in grads.items()}
    defect = np.asarray(P) - palatini_bivector(spec, E)
    expected = 0.5 * mesh.dt * mesh.cell_volume * defect @ spec.pairing
    return LagrangeReport(
        block_norms=norms,
        critical=all(v < tol for v in norms.values()),
        constraint_residual=float(np.max(np.abs(defect), initial=0.0)),
        multiplier_identity=float(np.max(np.abs(grads["Lam"] - expected), initial=0.0)),
    )


def flat_vacuum_bulk(mesh, spec):
    """(A, P, Lam, E) with A = 0, identity frames, P = P(E), Lam = 0 on every slice."""
    m = mesh.d + 1
    E = np.broadcast_to(np.eye(m), (mesh.n_t,) + mesh.shape + (m, m)).copy()
    P = palatini_bivector(spec, E)
    A = np.zeros((mesh.n_t,) + mesh.shape + (m, spec.dim))
    return A, P, np.zeros_like(P), E


def surrogate_function(x, lam, e) -> float:
    """F(x) + <lam, x - Phi(e)> with F = |x|^2 and Phi(e) = (e, e^2)."""
    x = np.asarray(x, dtype=float)
    phi = np.array([float(np.squeeze(e)), float(np.squeeze(e)) ** 2])
    return float(x @ x + np.asarray(lam, dtype=float) @ (x - phi))


def lagrange_surrogate_check(x=(0.0, 0.0), lam=(0.0, 0.0), e=0.0, tol: float = 1e-10,
                             fd_step: float = 1e-5) -> LagrangeReport:
    blocks = {"x": np.asarray(x, dtype=float), "lam": np.asarray(lam, dtype=float), "e": np.atleast_1d(float(e))}
    grads = lagrange_gradient_blocks(surrogate_function, blocks, fd_step)
    norms = {name: float(np.linalg.norm(g)) for name, g in grads.items()}
    phi = np.array([blocks["e"][0], blocks["e"][0] ** 2])
    return LagrangeReport(
        block_norms=norms,
        critical=all(v < tol for v in norms.values()),
        constraint_residual=float(np.max(np.abs(blocks["x"] - phi))),
    )
