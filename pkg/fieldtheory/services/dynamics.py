# fieldtheory/services/dynamics.py
"""
Actions, Hamiltonians and boundary evolution.

What it does
- Bulk side: curvature, the Yang-Mills Hamiltonian H_lambda, the discrete
  collar action (topological at lambda = 0), the Palatini and extended
  actions, the Euler-Lagrange one-form and the fundamental-formula check
  dS(U) = EL(U) + <p, dphi>|_{t=0}.
- Boundary side: two boundary systems (Palatini, Yang-Mills with coupling
  lambda) exposing hamiltonian / rhs / residuals, and an RK4 integrator that
  records H and the six constraint norms after every step.

Sign convention
- The boundary Lagrangian is <p, a_dot> + H, so a_dot = -dH/dp and
  p_dot = +dH/da. With this orientation the Palatini Hamiltonian yields
  a_dot = d_a a0 - 2 Lam0 and p_dot = d_a*(beta) + [p, a0].
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from fieldtheory.errors import DivergenceError, FieldShapeError
from fieldtheory.services.algebra import MinkowskiMetric, bracket, coadjoint, pair
from fieldtheory.services.fields import BulkField, palatini_bivector
from fieldtheory.services.mesh import (
    d_a, d_a_star, field_norm, integrate, pairing, partial_k,
)

logger = logging.getLogger(__name__)

RESIDUAL_NAMES = ("gauss", "flatness", "beta", "p", "torsion0", "torsion1")


@dataclass
class DynamicsConfig:
    divergence_bound: float = 1e6
    fd_step: float = 1e-5          # directional derivative of the action


CFG = DynamicsConfig()


# ------------------------------------------------------------------
# Curvature and bulk Hamiltonian
# ------------------------------------------------------------------

def curvature(mesh, spec, a) -> np.ndarray:
    """F_kj = d_k a_j - d_j a_k + [a_k, a_j], shape (*S, d, d, n)."""
    a = np.asarray(a, dtype=float)
    grads = np.stack([partial_k(mesh, a, k) for k in range(mesh.d)], axis=-3)  # [k, j] = d_k a_j
    return grads - np.swapaxes(grads, -2, -3) + bracket(spec, a[..., :, None, :], a[..., None, :, :])


def _eta_weights(m: int) -> np.ndarray:
    eta = MinkowskiMetric(m).diagonal
    return np.outer(eta, eta)


def bulk_hamiltonian(spec, A, P, lam: float) -> np.ndarray:
    """
    H = 1/2 sum_{mu nu} <P^{mu nu}, [A_mu, A_nu]> + lam/4 sum eta eta <P^{mu nu}, P^{mu nu}>.

    A: (..., m, n), P: (..., m, m, n). Returns the per-site value.
    """
    if lam < 0:
        raise FieldShapeError(f"lambda must be >= 0, got {lam}")
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    comm = bracket(spec, A[..., :, None, :], A[..., None, :, :])
    value = 0.5 * pair(spec, P, comm).sum(axis=(-1, -2))
    if lam:
        weights = _eta_weights(P.shape[-2])
        value = value + 0.25 * lam * np.sum(weights * pair(spec, P, P), axis=(-1, -2))
    return value


def spacetime_gradient(mesh, A) -> np.ndarray:
    """G[..., mu, nu, :] = d_mu A_nu; backward difference in t, zero on the first slice."""
    A = np.asarray(A, dtype=float)
    time = np.zeros_like(A)
    time[1:] = (A[1:] - A[:-1]) / mesh.dt
    parts = [time] + [partial_k(mesh, A, k, lead=1) for k in range(mesh.d)]
    return np.stack(parts, axis=-3)


@dataclass
class ActionValue:
    total: float
    per_slice: np.ndarray

    def __float__(self):
        return float(self.total)


def _action_from_density(mesh, density) -> ActionValue:
    per_slice = integrate(mesh, density, lead=1)
    return ActionValue(total=float(np.sum(per_slice) * mesh.dt), per_slice=per_slice)


def _check_bulk(mesh, spec, chi: BulkField):
    m = mesh.d + 1
    expected = (mesh.n_t,) + mesh.shape + (m, spec.dim)
    if chi.A.shape != expected:
        raise FieldShapeError(f"bulk field A has shape {chi.A.shape}, expected {expected}")


def action_ym(mesh, spec, A, P, lam: float = 0.0) -> ActionValue:
    """S = -sum dt vol [sum <P^{mu nu}, d_mu A_nu> + H_lam]."""
    chi = BulkField(A, P)
    _check_bulk(mesh, spec, chi)
    G = spacetime_gradient(mesh, chi.A)
    density = -(pair(spec, chi.P, G).sum(axis=(-1, -2)) + bulk_hamiltonian(spec, chi.A, chi.P, lam))
    return _action_from_density(mesh, density)


def palatini_action(mesh, spec, A, E) -> ActionValue:
    """Topological action restricted to P = P(E)."""
    return action_ym(mesh, spec, A, palatini_bivector(spec, E), 0.0)


def constraint_density(spec, P, Lam, E) -> np.ndarray:
    """1/2 sum_{mu nu} <Lam^{mu nu}, P^{mu nu} - P(E)^{mu nu}> per site."""
    return 0.5 * pair(spec, Lam, np.asarray(P) - palatini_bivector(spec, E)).sum(axis=(-1, -2))


def extended_action(mesh, spec, A, P, Lam, E) -> ActionValue:
    base = action_ym(mesh, spec, A, P, 0.0)
    extra = _action_from_density(mesh, constraint_density(spec, P, Lam, E))
    return ActionValue(total=base.total + extra.total, per_slice=base.per_slice + extra.per_slice)


# ------------------------------------------------------------------
# Euler-Lagrange one-form and the fundamental formula
# ------------------------------------------------------------------

def el_oneform(mesh, spec, chi: BulkField, U: BulkField, lam: float = 0.0) -> float:
    """
    EL(U) for the discrete action: the variation of S along U minus the
    boundary pairing at the t = 0 slice.
    """
    _check_bulk(mesh, spec, chi)
    A, P = chi.A, chi.P
    m = mesh.d + 1
    weight = mesh.dt * mesh.cell_volume

    # P-block: dS/dP^{mu nu} = -(G_{mu nu} + 1/2 [A_mu, A_nu] + lam/2 eta eta P^{mu nu})
    G = spacetime_gradient(mesh, A)
    comm = bracket(spec, A[..., :, None, :], A[..., None, :, :])
    dP = G + 0.5 * comm
    if lam:
        dP = dP + 0.5 * lam * _eta_weights(m)[:, :, None] * P
    el_p = -weight * float(np.sum(pair(spec, U.P, dP)))

    # A-block: time term with the t = 0 end removed, spatial divergence, bracket term
    p0 = P[..., 0, :, :]  # P^{0 nu}
    n_t = mesh.n_t
    time = np.zeros_like(A)
    time[1:n_t - 1] += p0[1:n_t - 1]
    time[:n_t - 1] -= p0[1:n_t]
    time /= mesh.dt
    div = sum(partial_k(mesh, P[..., k + 1, :, :], k, lead=1) for k in range(mesh.d))
    coupling = coadjoint(spec, A[..., None, :, :], P).sum(axis=-2)  # B_nu = sum_mu ad*_{A_mu} P^{nu mu}
    el_a = -weight * float(np.sum(pair(spec, U.A, time - div + coupling)))
    return el_a + el_p


def boundary_term(mesh, spec, chi: BulkField, U: BulkField) -> float:
    """<p, delta phi> at t = 0 with p^k = P^{k0}."""
    return pairing(mesh, spec, chi.P[-1][..., 1:, 0, :], U.A[-1][..., 1:, :])


@dataclass
class FundamentalCheck:
    lhs: float
    rhs: float
    gap: float
    el: float
    boundary: float

    @property
    def relative_gap(self) -> float:
        return self.gap / max(abs(self.lhs), 1e-300)


def fundamental_check(mesh, spec, chi: BulkField, U: BulkField, lam: float = 0.0,
                      cfg: DynamicsConfig = CFG) -> FundamentalCheck:
    """Central-difference dS(U) against EL(U) + boundary term, with U normalized."""
    scale = U.norm()
    if scale == 0:
        return FundamentalCheck(0.0, 0.0, 0.0, 0.0, 0.0)
    U = U.scaled(1.0 / scale)
    step = cfg.fd_step
    plus = chi.shifted(U, step)
    minus = chi.shifted(U, -step)
    lhs = (action_ym(mesh, spec, plus.A, plus.P, lam).total - action_ym(mesh, spec, minus.A, minus.P, lam).total) / (2 * step)
    el = el_oneform(mesh, spec, chi, U, lam)
    bnd = boundary_term(mesh, spec, chi, U)
    rhs = el + bnd
    logger.debug(f"fundamental formula: lhs={lhs:.6e} el={el:.6e} boundary={bnd:.6e}")
    return FundamentalCheck(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs), el=el, boundary=bnd)


# ------------------------------------------------------------------
# Boundary systems
# ------------------------------------------------------------------

def beta_divergence(mesh, spec, a, beta) -> np.ndarray:
    """Column-wise d_a*: out[..., j, :] = d_a*(beta[..., :, j, :])."""
    cols = [d_a_star(mesh, spec, a, beta[..., :, j, :]) for j in range(mesh.d)]
    return np.stack(cols, axis=-2)


def _momentum_flow(state) -> np.ndarray:
    mesh, spec = state.mesh, state.spec
    return beta_divergence(mesh, spec, state.a, state.beta) - coadjoint(spec, state.a0[..., None, :], state.p)


def _bivector_pairing(mesh, spec, x, y) -> float:
    return 0.5 * pairing(mesh, spec, x, y)


def palatini_split(state):
    """(P_k0(E), P_kj(E)) for the state's vierbein."""
    biv = palatini_bivector(state.spec, state.vierbein())
    return biv[..., 1:, 0, :], biv[..., 1:, 1:, :]


def boundary_hamiltonian(state) -> float:
    """
    H = <p, -d_a a0 + 2 Lam0> - 1/2 <beta, F - Lam> + <Lam0, -2 P_k0(E)> - 1/2 <Lam, P_kj(E)>.
    """
    mesh, spec = state.mesh, state.spec
    pk0, pkj = palatini_split(state)
    F = curvature(mesh, spec, state.a)
    t1 = pairing(mesh, spec, state.p, -d_a(mesh, spec, state.a, state.a0) + 2 * state.Lam0)
    t2 = -_bivector_pairing(mesh, spec, state.beta, F - state.Lam)
    t3 = pairing(mesh, spec, state.Lam0, -2 * pk0)
    t4 = -_bivector_pairing(mesh, spec, state.Lam, pkj)
    return t1 + t2 + t3 + t4


def evolution_rhs(state):
    """(a_dot, p_dot) = (d_a a0 - 2 Lam0, d_a*beta + [p, a0])."""
    a_dot = d_a(state.mesh, state.spec, state.a, state.a0) - 2 * state.Lam0
    return a_dot, _momentum_flow(state)


def ym_boundary_hamiltonian(state, lam: float) -> float:
    """H_lam = <p, -d_a a0> - 1/2 <beta, F> + lam/2 (<p, p> - 1/2 <beta, beta>)."""
    if lam < 0:
        raise FieldShapeError(f"lambda must be >= 0, got {lam}")
    mesh, spec = state.mesh, state.spec
    F = curvature(mesh, spec, state.a)
    value = pairing(mesh, spec, state.p, -d_a(mesh, spec, state.a, state.a0))
    value -= _bivector_pairing(mesh, spec, state.beta, F)
    value += 0.5 * lam * (pairing(mesh, spec, state.p, state.p) - _bivector_pairing(mesh, spec, state.beta, state.beta))
    return value


def ym_evolution_rhs(state, lam: float):
    a_dot = d_a(state.mesh, state.spec, state.a, state.a0) - lam * state.p
    return a_dot, _momentum_flow(state)


def lambda_limit_residuals(state, lam: float) -> dict:
    """Full curvature of the lambda-flow connection and the Gauss law."""
    mesh, spec = state.mesh, state.spec
    F = curvature(mesh, spec, state.a)
    # the temporal curvature F_0k = a_dot - d_a a0 equals -lam p along the flow
    flat = np.sqrt(field_norm(mesh, F) ** 2 + (lam * field_norm(mesh, state.p)) ** 2)
    gauss = field_norm(mesh, d_a_star(mesh, spec, state.a, state.p))
    return {"flatness": float(flat), "gauss": float(gauss)}


class PalatiniBoundarySystem:
    name = "palatini"

    def hamiltonian(self, state) -> float:
        return boundary_hamiltonian(state)

    def rhs(self, state):
        return evolution_rhs(state)

    def residuals(self, state) -> dict:
        from fieldtheory.services.pca import palatini_residuals
        res = palatini_residuals(state)
        return {name: field_norm(state.mesh, res[name]) for name in RESIDUAL_NAMES}


class YangMillsBoundarySystem:
    name = "yang-mills"

    def __init__(self, lam: float = 0.0):
        if lam < 0:
            raise FieldShapeError(f"lambda must be >= 0, got {lam}")
        self.lam = float(lam)

    def hamiltonian(self, state) -> float:
        return ym_boundary_hamiltonian(state, self.lam)

    def rhs(self, state):
        return ym_evolution_rhs(state, self.lam)

    def residuals(self, state) -> dict:
        mesh, spec = state.mesh, state.spec
        F = curvature(mesh, spec, state.a)
        out = dict.fromkeys(RESIDUAL_NAMES, 0.0)
        out["gauss"] = field_norm(mesh, d_a_star(mesh, spec, state.a, state.p))
        out["flatness"] = field_norm(mesh, F + self.lam * state.beta)
        return out


# ------------------------------------------------------------------
# Integrator
# ------------------------------------------------------------------

@dataclass
class EvolutionRecord:
    step: int
    t: float
    state: object
    hamiltonian: float
    constraint_residuals: dict
    norms: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "t": self.t,
            "H": self.hamiltonian,
            "residuals": dict(self.constraint_residuals),
            "norms": dict(self.norms),
        }


def _record(system, state, step, t) -> EvolutionRecord:
    norms = {"a": field_norm(state.mesh, state.a), "p": field_norm(state.mesh, state.p)}
    return EvolutionRecord(
        step=step,
        t=float(t),
        state=state,
        hamiltonian=float(system.hamiltonian(state)),
        constraint_residuals={k: float(v) for k, v in system.residuals(state).items()},
        norms=norms,
    )


def _rk4_step(system, state, dt):
    def shifted(da, dp, s):
        return state.replace(a=state.a + s * da, p=state.p + s * dp)

    k1 = system.rhs(state)
    k2 = system.rhs(shifted(*k1, dt / 2))
    k3 = system.rhs(shifted(*k2, dt / 2))
    k4 = system.rhs(shifted(*k3, dt))
    a = state.a + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    p = state.p + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return state.replace(a=a, p=p)


def evolve(state, n_steps: int, dt: float, projection: bool = False, system=None,
           cfg: DynamicsConfig = CFG) -> list:
    """
    RK4 in (a, p) with the remaining fields held fixed.

    Returns n_steps + 1 records (the initial state included). With projection
    on, each new state is pulled back onto the Palatini constraint set before
    it is recorded.
    """
    if not dt > 0:
        raise FieldShapeError(f"dt must be positive, got {dt}")
    system = system or PalatiniBoundarySystem()
    project = None
    if projection:
        from fieldtheory.services.pca import project_constraints
        project = project_constraints

    records = [_record(system, state, 0, 0.0)]
    for step in range(1, int(n_steps) + 1):
        state = _rk4_step(system, state, dt)
        worst = max(np.max(np.abs(state.a), initial=0.0), np.max(np.abs(state.p), initial=0.0))
        if not np.isfinite(worst) or worst > cfg.divergence_bound:
            logger.error(f"{system.name} evolution diverged at step {step}")
            raise DivergenceError(step, worst)
        if project is not None:
            state = project(state)
        records.append(_record(system, state, step, step * dt))
        logger.debug(f"step {step}: H={records[-1].hamiltonian:.6e}")
    return records
