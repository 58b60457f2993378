# fieldtheory/services/algebra.py
"""
Lie algebra data used for every internal index in the lab.

What it does
- Builds the three supported algebras (abelian(n), su2, so(1,d)) from a
  matrix representation: structure constants come from commutators, the
  pairing is the trace form tr(ad_a ad_b) without any rescaling.
- Substitutes the identity pairing when the trace form is degenerate
  (abelian algebras, so(1,1)).
- Offers brackets, the pairing, index raising/lowering, the coadjoint action
  and the matrix helpers (exp, adjoint action) the gauge code needs.

How to use
- spec = build_algebra("so", d=3); bracket(spec, x, y); pair(spec, x, y).
- Algebra vectors always keep the algebra index on the LAST axis, so every
  helper broadcasts over lattice sites and tensor indices in front of it.
"""

from dataclasses import dataclass, field
import json
import logging

import numpy as np
from scipy import linalg

from fieldtheory.errors import AlgebraError

logger = logging.getLogger(__name__)

SUPPORTED_KINDS = ("abelian", "su2", "so")


@dataclass
class AlgebraConfig:
    # Residual bound for Jacobi, ad-invariance and inverse checks
    validation_tol: float = 1e-10
    # Below this smallest |eigenvalue| the trace form counts as degenerate
    degeneracy_tol: float = 1e-12


CFG = AlgebraConfig()


@dataclass(frozen=True)
class MinkowskiMetric:
    """eta = diag(-1, +1, ..., +1) on m = 1 + d internal directions."""
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise AlgebraError(f"Minkowski metric needs m >= 2, got {self.m}")

    @property
    def d(self) -> int:
        return self.m - 1

    @property
    def diagonal(self) -> np.ndarray:
        diag = np.ones(self.m)
        diag[0] = -1.0
        return diag

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)

    def signature(self):
        return (1, self.d)


@dataclass(eq=False)
class LieAlgebraSpec:
    kind: str
    dim: int
    structure: np.ndarray          # structure[a, b, c] = eps^a_bc
    pairing: np.ndarray            # <xi_a, xi_b>
    pairing_inverse: np.ndarray
    generators: np.ndarray         # (dim, r, r) matrix representation
    labels: list = field(default_factory=list)
    index_pairs: list = field(default_factory=list)  # so(1,d): (I, J) per basis vector
    degenerate_killing: bool = False

    @property
    def rep_dim(self) -> int:
        return self.generators.shape[-1]

    @property
    def metric(self):
        if self.kind != "so":
            return None
        return MinkowskiMetric(self.rep_dim)

    def __repr__(self):
        return f"LieAlgebraSpec(kind={self.kind!r}, dim={self.dim})"


# ------------------------------------------------------------------
# Construction
# ------------------------------------------------------------------

def _abelian_generators(n: int):
    gens = np.zeros((n, n, n))
    for i in range(n):
        gens[i, i, i] = 1.0
    return gens, [f"x{i}" for i in range(n)], []


def _su2_generators():
    # real form: (L_a)_bc = -eps_abc, so [L_1, L_2] = L_3
    eps = np.zeros((3, 3, 3))
    for (i, j, k), sign in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1,
                            (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        eps[i, j, k] = sign
    return -eps, ["L1", "L2", "L3"], []


def _lorentz_generators(d: int):
    m = d + 1
    eta = MinkowskiMetric(m).matrix
    gens, labels, pairs = [], [], []
    for i in range(m):
        for j in range(i + 1, m):
            e_ij = np.zeros((m, m))
            e_ij[i, j] = 1.0
            gens.append((e_ij - e_ij.T) @ eta)
            labels.append(f"M{i}{j}")
            pairs.append((i, j))
    return np.array(gens), labels, pairs


def _structure_from_generators(gens: np.ndarray) -> np.ndarray:
    n = gens.shape[0]
    flat = gens.reshape(n, -1)
    pinv = np.linalg.pinv(flat)
    structure = np.zeros((n, n, n))
    for b in range(n):
        for c in range(n):
            comm = gens[b] @ gens[c] - gens[c] @ gens[b]
            structure[:, b, c] = comm.reshape(-1) @ pinv
    structure[np.abs(structure) < 1e-14] = 0.0
    return structure


def killing_form(structure: np.ndarray) -> np.ndarray:
    """K_ab = tr(ad_a ad_b) with (ad_a)_xy = eps^x_ay."""
    return np.einsum("xay,ybx->ab", structure, structure)


def algebra_residuals(spec: LieAlgebraSpec) -> dict:
    """Max-abs residuals of antisymmetry, Jacobi, pairing invariance and the pairing inverse."""
    eps = spec.structure
    antisym = np.max(np.abs(eps + np.transpose(eps, (0, 2, 1))), initial=0.0)
    jacobi = np.max(np.abs(
        np.einsum("ebc,aed->abcd", eps, eps)
        + np.einsum("ecd,aeb->abcd", eps, eps)
        + np.einsum("edb,aec->abcd", eps, eps)
    ), initial=0.0)
    invariance = np.max(np.abs(
        np.einsum("eab,ec->abc", eps, spec.pairing)
        + np.einsum("be,eac->abc", spec.pairing, eps)
    ), initial=0.0)
    inverse = np.max(np.abs(spec.pairing @ spec.pairing_inverse - np.eye(spec.dim)))
    return {"antisymmetry": float(antisym), "jacobi": float(jacobi), "invariance": float(invariance), "inverse": float(inverse)}


def _validate(spec: LieAlgebraSpec, cfg: AlgebraConfig):
    checks = algebra_residuals(spec)
    for name, value in checks.items():
        if value > cfg.validation_tol:
            logger.error(f"{spec.kind} algebra failed {name} check: residual {value:.3e}")
            raise AlgebraError(f"{spec.kind}: {name} residual {value:.3e} exceeds {cfg.validation_tol:.1e}")
    return checks


def build_algebra(kind: str, d: int = 1, cfg: AlgebraConfig = CFG) -> LieAlgebraSpec:
    """
    Build and validate an algebra.

    Params
    - kind: "abelian" (d is the dimension n), "su2" (d ignored) or "so" (so(1,d)).
    - d: integer >= 1.

    Returns
    - LieAlgebraSpec with structure constants, pairing and its inverse.
    """
    kind = str(kind).lower()
    if kind not in SUPPORTED_KINDS:
        raise AlgebraError(f"unsupported algebra kind {kind!r}; expected one of {', '.join(SUPPORTED_KINDS)}")
    if int(d) < 1:
        raise AlgebraError(f"algebra parameter d must be >= 1, got {d}")
    d = int(d)

    if kind == "abelian":
        gens, labels, pairs = _abelian_generators(d)
    elif kind == "su2":
        gens, labels, pairs = _su2_generators()
    else:
        gens, labels, pairs = _lorentz_generators(d)

    structure = _structure_from_generators(gens)
    pairing = killing_form(structure)
    degenerate = bool(np.min(np.abs(np.linalg.eigvalsh(pairing))) < cfg.degeneracy_tol)
    if degenerate:
        logger.info(f"trace form of {kind}({d}) is degenerate; using the identity pairing instead")
        pairing = np.eye(gens.shape[0])

    spec = LieAlgebraSpec(
        kind=kind,
        dim=gens.shape[0],
        structure=structure,
        pairing=pairing,
        pairing_inverse=np.linalg.inv(pairing),
        generators=gens,
        labels=labels,
        index_pairs=pairs,
        degenerate_killing=degenerate,
    )
    _validate(spec, cfg)
    return spec


# ------------------------------------------------------------------
# Algebra operations (algebra index last, everything else broadcasts)
# ------------------------------------------------------------------

def _check_dim(spec: LieAlgebraSpec, *arrays):
    for arr in arrays:
        if np.shape(arr)[-1:] != (spec.dim,):
            raise AlgebraError(f"expected algebra index of length {spec.dim}, got shape {np.shape(arr)}")


def bracket(spec: LieAlgebraSpec, x, y) -> np.ndarray:
    _check_dim(spec, x, y)
    return np.einsum("abc,...b,...c->...a", spec.structure, x, y)


def pair(spec: LieAlgebraSpec, x, y) -> np.ndarray:
    _check_dim(spec, x, y)
    return np.einsum("...a,ab,...b->...", x, spec.pairing, y)


def _contract(matrix: np.ndarray, t, axis: int) -> np.ndarray:
    t = np.moveaxis(np.asarray(t, dtype=float), axis, -1)
    if t.shape[-1] != matrix.shape[0]:
        raise AlgebraError(f"index of length {t.shape[-1]} does not match algebra dimension {matrix.shape[0]}")
    return np.moveaxis(t @ matrix.T, -1, axis)


def lower_index(spec: LieAlgebraSpec, t, axis: int = -1) -> np.ndarray:
    return _contract(spec.pairing, t, axis)


def raise_index(spec: LieAlgebraSpec, t, axis: int = -1) -> np.ndarray:
    return _contract(spec.pairing_inverse, t, axis)


def adjoint_matrix(spec: LieAlgebraSpec, x) -> np.ndarray:
    """(ad_x)_ac = eps^a_bc x^b, batched over leading axes."""
    _check_dim(spec, x)
    return np.einsum("abc,...b->...ac", spec.structure, x)


def coadjoint(spec: LieAlgebraSpec, x, p) -> np.ndarray:
    """
    ad*_x p in algebra coordinates, fixed by <ad*_x p, z> = -<p, [x, z]>.

    For an ad-invariant pairing this coincides with [x, p].
    """
    _check_dim(spec, x, p)
    lowered = p @ spec.pairing  # pairing is symmetric
    ad_t_p = np.einsum("abc,...b,...a->...c", spec.structure, x, lowered)
    return -(ad_t_p @ spec.pairing_inverse)


# ------------------------------------------------------------------
# Matrix representation helpers
# ------------------------------------------------------------------

def to_matrix(spec: LieAlgebraSpec, x) -> np.ndarray:
    _check_dim(spec, x)
    return np.einsum("...a,aij->...ij", x, spec.generators)


def from_matrix(spec: LieAlgebraSpec, mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    r = spec.rep_dim
    if mat.shape[-2:] != (r, r):
        raise AlgebraError(f"expected {r}x{r} matrices, got shape {mat.shape}")
    pinv = np.linalg.pinv(spec.generators.reshape(spec.dim, -1))
    return mat.reshape(mat.shape[:-2] + (r * r,)) @ pinv


def exp_element(spec: LieAlgebraSpec, x) -> np.ndarray:
    return linalg.expm(to_matrix(spec, x))


def group_adjoint(spec: LieAlgebraSpec, g) -> np.ndarray:
    """R with R[:, b] = coordinates of g^-1 T_b g, batched over sites."""
    g = np.asarray(g, dtype=float)
    g_inv = np.linalg.inv(g)
    conj = np.einsum("...ij,bjk,...kl->...bil", g_inv, spec.generators, g)
    return np.swapaxes(from_matrix(spec, conj), -1, -2)


# ------------------------------------------------------------------
# Golden-file serialization
# ------------------------------------------------------------------

def dump_algebra(spec: LieAlgebraSpec) -> str:
    payload = {
        "kind": spec.kind,
        "dim": spec.dim,
        "labels": list(spec.labels),
        "index_pairs": [list(p) for p in spec.index_pairs],
        "degenerate_killing": spec.degenerate_killing,
        "structure": spec.structure.tolist(),
        "pairing": spec.pairing.tolist(),
        "generators": spec.generators.tolist(),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_algebra(text: str, cfg: AlgebraConfig = CFG) -> LieAlgebraSpec:
    try:
        data = json.loads(text)
        pairing = np.array(data["pairing"], dtype=float)
        spec = LieAlgebraSpec(
            kind=data["kind"],
            dim=int(data["dim"]),
            structure=np.array(data["structure"], dtype=float),
            pairing=pairing,
            pairing_inverse=np.linalg.inv(pairing),
            generators=np.array(data["generators"], dtype=float),
            labels=list(data.get("labels", [])),
            index_pairs=[tuple(p) for p in data.get("index_pairs", [])],
            degenerate_killing=bool(data.get("degenerate_killing", False)),
        )
    except (KeyError, TypeError, ValueError, np.linalg.LinAlgError) as exc:
        raise AlgebraError(f"malformed algebra file: {exc}") from exc
    _validate(spec, cfg)
    return spec
