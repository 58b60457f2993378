# fieldtheory/services/fields.py
"""
Field containers for the collar and its boundary.

BulkField
- A: (n_t, *S, m, n)  connection components A^a_mu, mu = 0..d
- P: (n_t, *S, m, m, n)  momenta P_a^{mu nu}, skew in (mu, nu)

BoundaryState (all lattice fields on the boundary torus)
- a: (*S, d, n)      a0: (*S, n)
- p: (*S, d, n)      beta, Lam: (*S, d, d, n) skew in (k, j)
- Lam0: (*S, d, n)
- e: (*S, d, m)      e0: (*S, m)   rows of the vierbein E^mu_I

Spatial index k corresponds to spacetime index mu = k + 1; the full vierbein
stacks e0 on top of e. Momenta in so(1,d) carry the algebra coordinate of the
bivector whose internal indices are raised with eta.
"""

from dataclasses import dataclass, replace
import logging

import numpy as np

from fieldtheory.errors import FieldShapeError, SingularVierbeinError
from fieldtheory.services.algebra import MinkowskiMetric

logger = logging.getLogger(__name__)

STATE_FIELDS = ("a", "a0", "p", "beta", "Lam", "Lam0", "e", "e0")
SKEW_FIELDS = ("beta", "Lam")


@dataclass
class FieldsConfig:
    singular_tol: float = 1e-12       # |det E| below this is singular
    min_random_det: float = 0.1       # rejection bound for random vierbeins
    max_redraws: int = 100


CFG = FieldsConfig()


def _skew_pairs(d: int):
    return np.triu_indices(d, k=1)


def field_shapes(mesh, spec) -> dict:
    S, d, n, m = mesh.shape, mesh.d, spec.dim, mesh.d + 1
    return {
        "a": S + (d, n),
        "a0": S + (n,),
        "p": S + (d, n),
        "beta": S + (d, d, n),
        "Lam": S + (d, d, n),
        "Lam0": S + (d, n),
        "e": S + (d, m),
        "e0": S + (m,),
    }


@dataclass(eq=False)
class BoundaryState:
    mesh: object
    spec: object
    a: np.ndarray
    a0: np.ndarray
    p: np.ndarray
    beta: np.ndarray
    Lam: np.ndarray
    Lam0: np.ndarray
    e: np.ndarray
    e0: np.ndarray

    def __post_init__(self):
        shapes = field_shapes(self.mesh, self.spec)
        for name in STATE_FIELDS:
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != shapes[name]:
                raise FieldShapeError(f"field {name} has shape {value.shape}, expected {shapes[name]}")
            setattr(self, name, value)

    # -- vierbein -------------------------------------------------------
    def vierbein(self) -> np.ndarray:
        """Full (*S, m, m) frame, row 0 = e0."""
        return np.concatenate([self.e0[..., None, :], self.e], axis=-2)

    def with_vierbein(self, E) -> "BoundaryState":
        E = np.asarray(E, dtype=float)
        return self.replace(e0=E[..., 0, :], e=E[..., 1:, :])

    # -- copying ----------------------------------------------------------
    def replace(self, **changes) -> "BoundaryState":
        return replace(self, **changes)

    def copy(self) -> "BoundaryState":
        return self.replace(**{name: getattr(self, name).copy() for name in STATE_FIELDS})

    # -- invariants -------------------------------------------------------
    def invariant_residuals(self) -> dict:
        out = {}
        for name in SKEW_FIELDS:
            value = getattr(self, name)
            out[f"{name}_skew"] = float(np.max(np.abs(value + np.swapaxes(value, -2, -3)), initial=0.0))
        out["min_abs_det"] = float(np.min(np.abs(np.linalg.det(self.vierbein()))))
        return out

    def check_invariants(self, tol: float = 1e-12, cfg: FieldsConfig = CFG) -> dict:
        res = self.invariant_residuals()
        for name in SKEW_FIELDS:
            if res[f"{name}_skew"] > tol:
                raise FieldShapeError(f"{name} is not skew in its spatial indices (defect {res[name + '_skew']:.3e})")
        check_vierbein(self.vierbein(), cfg)
        return res

    # -- packing of independent components --------------------------------
    def _parts(self):
        iu = _skew_pairs(self.mesh.d)
        return [
            self.a, self.a0, self.p,
            self.beta[..., iu[0], iu[1], :], self.Lam[..., iu[0], iu[1], :],
            self.Lam0, self.e, self.e0,
        ]

    def block_slices(self) -> dict:
        """Name -> slice of the packed vector."""
        out, start = {}, 0
        for name, part in zip(STATE_FIELDS, self._parts()):
            out[name] = slice(start, start + part.size)
            start += part.size
        return out

    def to_vector(self) -> np.ndarray:
        return np.concatenate([part.reshape(-1) for part in self._parts()])

    def with_vector(self, vec) -> "BoundaryState":
        vec = np.asarray(vec, dtype=float)
        shapes = field_shapes(self.mesh, self.spec)
        slices = self.block_slices()
        if vec.shape != (sum(s.stop - s.start for s in slices.values()),):
            raise FieldShapeError(f"packed vector of length {vec.shape} does not match the state layout")
        iu = _skew_pairs(self.mesh.d)
        values = {}
        for name in STATE_FIELDS:
            chunk = vec[slices[name]]
            if name in SKEW_FIELDS:
                full = np.zeros(shapes[name])
                packed = chunk.reshape(self.mesh.shape + (len(iu[0]), self.spec.dim))
                full[..., iu[0], iu[1], :] = packed
                full[..., iu[1], iu[0], :] = -packed
                values[name] = full
            else:
                values[name] = chunk.reshape(shapes[name]).copy()
        return self.replace(**values)

    @property
    def size(self) -> int:
        return int(self.to_vector().size)

    # -- serialization ----------------------------------------------------
    def snapshot(self) -> dict:
        """Flat arrays with a shape header; layout is site-major, then mu/k, then algebra index."""
        return {
            "header": {
                "mesh": self.mesh.describe(),
                "algebra": {"kind": self.spec.kind, "dim": self.spec.dim},
                "layout": "site-major, then mu/k, then algebra index",
                "shapes": {name: list(getattr(self, name).shape) for name in STATE_FIELDS},
            },
            "data": {name: getattr(self, name).reshape(-1).tolist() for name in STATE_FIELDS},
        }


def state_from_snapshot(mesh, spec, snapshot: dict) -> BoundaryState:
    shapes = snapshot["header"]["shapes"]
    values = {name: np.array(snapshot["data"][name], dtype=float).reshape(shapes[name]) for name in STATE_FIELDS}
    return BoundaryState(mesh, spec, **values)


@dataclass(eq=False)
class BulkField:
    A: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if self.A.ndim < 3 or self.P.shape[:-2] != self.A.shape[:-1] or self.P.shape[-1] != self.A.shape[-1]:
            raise FieldShapeError(f"bulk shapes A{self.A.shape} and P{self.P.shape} are inconsistent")

    @property
    def n_t(self) -> int:
        return self.A.shape[0]

    def shifted(self, U: "BulkField", s: float) -> "BulkField":
        return BulkField(self.A + s * U.A, self.P + s * U.P)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.A ** 2) + np.sum(self.P ** 2)))

    def scaled(self, s: float) -> "BulkField":
        return BulkField(s * self.A, s * self.P)

    def skew_defect(self) -> float:
        return float(np.max(np.abs(self.P + np.swapaxes(self.P, -2, -3)), initial=0.0))


@dataclass(frozen=True)
class BoundaryRestriction:
    phi: np.ndarray   # (*S, m, n)
    p: np.ndarray     # (*S, d, n)
    beta: np.ndarray  # (*S, d, d, n)


def restrict_to_boundary(chi: BulkField) -> BoundaryRestriction:
    """t = 0 slice: phi = A, p^k = P^{k0}, beta^{kj} = P^{kj}."""
    if chi.n_t == 0:
        raise FieldShapeError("bulk field has no t = 0 slice")
    P = chi.P[-1]
    return BoundaryRestriction(phi=chi.A[-1].copy(), p=P[..., 1:, 0, :].copy(), beta=P[..., 1:, 1:, :].copy())


# ------------------------------------------------------------------
# Vierbein maps
# ------------------------------------------------------------------

def vierbein_determinant(E) -> np.ndarray:
    return np.linalg.det(np.asarray(E, dtype=float))


def check_vierbein(E, cfg: FieldsConfig = CFG) -> np.ndarray:
    det = vierbein_determinant(E)
    bad = np.abs(det) < cfg.singular_tol
    if np.any(bad):
        site = np.argwhere(bad)[0]
        logger.error(f"singular vierbein at site {tuple(site)}")
        raise SingularVierbeinError(site, det[tuple(site)])
    return det


def palatini_map(E, cfg: FieldsConfig = CFG) -> np.ndarray:
    """
    P^{mu nu}_{IJ} = det(E) (E^mu_I E^nu_J - E^nu_I E^mu_J) / 2.

    Returns shape (..., m, m, m, m) indexed [mu, nu, I, J].
    """
    E = np.asarray(E, dtype=float)
    det = check_vierbein(E, cfg)
    outer = np.einsum("...mi,...nj->...mnij", E, E)
    return det[..., None, None, None, None] * 0.5 * (outer - np.swapaxes(outer, -3, -4))


def palatini_bivector(spec, E, cfg: FieldsConfig = CFG) -> np.ndarray:
    """palatini_map in so(1,d) algebra coordinates, shape (..., m, m, n)."""
    E = np.asarray(E, dtype=float)
    m = E.shape[-1]
    if spec.kind != "so" or spec.rep_dim != m:
        raise FieldShapeError(f"Palatini momenta need so(1,{m - 1}), got {spec.kind} of dim {spec.dim}")
    raw = palatini_map(E, cfg)
    eta = MinkowskiMetric(m).diagonal
    comps = [eta[i] * eta[j] * raw[..., i, j] for i, j in spec.index_pairs]
    return np.stack(comps, axis=-1)


def metric_from_vierbein(E) -> np.ndarray:
    """g = E^-T eta E^-1 per site."""
    E = np.asarray(E, dtype=float)
    check_vierbein(E)
    inv = np.linalg.inv(E)
    eta = MinkowskiMetric(E.shape[-1]).matrix
    return np.swapaxes(inv, -1, -2) @ eta @ inv


# ------------------------------------------------------------------
# Canonical states
# ------------------------------------------------------------------

def zero_state(mesh, spec) -> BoundaryState:
    shapes = field_shapes(mesh, spec)
    values = {name: np.zeros(shape) for name, shape in shapes.items()}
    identity = np.broadcast_to(np.eye(mesh.d + 1), mesh.shape + (mesh.d + 1, mesh.d + 1))
    values["e0"] = identity[..., 0, :].copy()
    values["e"] = identity[..., 1:, :].copy()
    return BoundaryState(mesh, spec, **values)


def flat_vacuum(mesh, spec) -> BoundaryState:
    """a = 0, identity frame, p = P_k0(E), beta = P_kj(E), no multipliers."""
    state = zero_state(mesh, spec)
    if spec.kind != "so" or spec.rep_dim != mesh.d + 1:
        raise FieldShapeError(f"flat vacuum needs so(1,{mesh.d}), got {spec.kind}")
    biv = palatini_bivector(spec, state.vierbein())
    return state.replace(p=biv[..., 1:, 0, :].copy(), beta=biv[..., 1:, 1:, :].copy())


def _random_skew(rng, shape):
    raw = rng.standard_normal(shape)
    return 0.5 * (raw - np.swapaxes(raw, -2, -3))


def _random_vierbein(rng, shape_sites, m, amplitude, cfg: FieldsConfig):
    E = np.broadcast_to(np.eye(m), shape_sites + (m, m)) + amplitude * rng.standard_normal(shape_sites + (m, m))
    for attempt in range(cfg.max_redraws):
        bad = np.linalg.det(E) < cfg.min_random_det
        if not np.any(bad):
            return E
        logger.info(f"redrawing {int(bad.sum())} vierbein site(s), attempt {attempt + 1}")
        E[bad] = np.eye(m) + amplitude * rng.standard_normal((int(bad.sum()), m, m))
    raise SingularVierbeinError(np.argwhere(np.linalg.det(E) < cfg.min_random_det)[0], np.min(np.linalg.det(E)))


def random_state(seed, mesh, spec, amplitude: float = 0.1, cfg: FieldsConfig = CFG) -> BoundaryState:
    """Deterministic pseudo-random state honoring every skew invariant."""
    if amplitude < 0:
        raise FieldShapeError(f"amplitude must be >= 0, got {amplitude}")
    rng = np.random.default_rng(seed)
    shapes = field_shapes(mesh, spec)
    values = {}
    for name in ("a", "a0", "p", "Lam0"):
        values[name] = amplitude * rng.standard_normal(shapes[name])
    for name in SKEW_FIELDS:
        values[name] = amplitude * _random_skew(rng, shapes[name])
    E = _random_vierbein(rng, mesh.shape, mesh.d + 1, amplitude, cfg)
    values["e0"] = E[..., 0, :].copy()
    values["e"] = E[..., 1:, :].copy()
    return BoundaryState(mesh, spec, **values)


def random_bulk_field(seed, mesh, spec, amplitude: float = 1.0) -> BulkField:
    rng = np.random.default_rng(seed)
    m = mesh.d + 1
    A = amplitude * rng.standard_normal((mesh.n_t,) + mesh.shape + (m, spec.dim))
    P = amplitude * _random_skew(rng, (mesh.n_t,) + mesh.shape + (m, m, spec.dim))
    return BulkField(A, P)


def zero_bulk_field(mesh, spec) -> BulkField:
    m = mesh.d + 1
    return BulkField(
        np.zeros((mesh.n_t,) + mesh.shape + (m, spec.dim)),
        np.zeros((mesh.n_t,) + mesh.shape + (m, m, spec.dim)),
    )
