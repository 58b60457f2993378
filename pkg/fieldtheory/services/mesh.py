# fieldtheory/services/mesh.py
"""
Collar mesh: a periodic d-torus of lattice sites for the boundary plus a
uniform time axis for the collar (-epsilon, 0].

Array layout
- Lattice fields have the spatial sites as their first d axes (after any
  "lead" axes such as the time slice), tensor indices next and the algebra
  index last.
- Spatial derivatives are periodic central differences; d_a_star is built
  as the exact adjoint of d_a for the K-weighted lattice pairing, so the
  identity <p, d_a xi> = -<d_a* p, xi> holds to rounding.
"""

from dataclasses import dataclass
from functools import cached_property
import logging
import math

import numpy as np

from fieldtheory.errors import MeshError, FieldShapeError
from fieldtheory.services.algebra import bracket, coadjoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CollarMesh:
    sites_per_dim: tuple
    h: tuple
    n_t: int
    dt: float

    def __post_init__(self):
        if len(self.sites_per_dim) == 0 or len(self.sites_per_dim) != len(self.h):
            raise MeshError("sites_per_dim and h must be non-empty and of equal length")
        if any(int(n) < 3 for n in self.sites_per_dim):
            raise MeshError(f"every dimension needs at least 3 sites, got {tuple(self.sites_per_dim)}")
        if any(float(x) <= 0 for x in self.h):
            raise MeshError(f"spacings must be positive, got {tuple(self.h)}")
        if int(self.n_t) < 2:
            raise MeshError(f"the collar needs at least 2 time slices, got {self.n_t}")
        if not float(self.dt) > 0:
            raise MeshError(f"dt must be positive, got {self.dt}")

    @property
    def d(self) -> int:
        return len(self.sites_per_dim)

    @property
    def shape(self) -> tuple:
        return tuple(int(n) for n in self.sites_per_dim)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return self.cell_volume * self.n_sites

    @property
    def epsilon(self) -> float:
        return self.n_t * self.dt

    @cached_property
    def times(self) -> np.ndarray:
        # last slice sits on the boundary t = 0
        return -self.epsilon + (np.arange(self.n_t) + 1) * self.dt

    @cached_property
    def coordinates(self) -> tuple:
        return tuple(np.arange(n) * h for n, h in zip(self.shape, self.h))

    def grid(self) -> np.ndarray:
        """Site coordinates, shape (*shape, d)."""
        mesh = np.meshgrid(*self.coordinates, indexing="ij")
        return np.stack(mesh, axis=-1)

    def describe(self) -> dict:
        return {
            "d": self.d,
            "sites": list(self.shape),
            "h": [float(x) for x in self.h],
            "n_t": int(self.n_t),
            "dt": float(self.dt),
            "epsilon": float(self.epsilon),
        }


def build_mesh(sites, length=1.0, n_t: int = 8, dt=None) -> CollarMesh:
    """
    Params
    - sites: int or list of ints, sites per spatial dimension
    - length: float or list, torus side lengths
    - n_t: number of collar time slices
    - dt: time step, defaults to min(h) / 4
    """
    sites = [int(sites)] if np.isscalar(sites) else [int(s) for s in sites]
    lengths = [float(length)] * len(sites) if np.isscalar(length) else [float(x) for x in length]
    if len(lengths) != len(sites):
        raise MeshError(f"got {len(lengths)} lengths for {len(sites)} dimensions")
    if any(n <= 0 for n in sites) or any(not math.isfinite(x) or x <= 0 for x in lengths):
        raise MeshError(f"invalid mesh description sites={sites} length={lengths}")
    h = tuple(x / n for x, n in zip(lengths, sites))
    if dt is None:
        dt = min(h) / 4.0
    return CollarMesh(tuple(sites), h, int(n_t), float(dt))


def _spatial_axis(mesh: CollarMesh, k: int, lead: int) -> int:
    if not 0 <= k < mesh.d:
        raise MeshError(f"spatial axis {k} out of range for d={mesh.d}")
    return lead + k


def _check_sites(mesh: CollarMesh, f, lead: int):
    if np.shape(f)[lead:lead + mesh.d] != mesh.shape:
        raise FieldShapeError(f"field of shape {np.shape(f)} does not live on sites {mesh.shape}")


def partial_k(mesh: CollarMesh, f, k: int, lead: int = 0) -> np.ndarray:
    """Periodic central difference along spatial axis k."""
    axis = _spatial_axis(mesh, k, lead)
    _check_sites(mesh, f, lead)
    f = np.asarray(f, dtype=float)
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * mesh.h[k])


def gradient(mesh: CollarMesh, f, lead: int = 0) -> np.ndarray:
    """Stack of partial_k along a new axis placed right after the sites."""
    axis = lead + mesh.d
    return np.stack([partial_k(mesh, f, k, lead) for k in range(mesh.d)], axis=axis)


def d_a(mesh: CollarMesh, spec, a, xi) -> np.ndarray:
    """(d_a xi)_k = partial_k xi + [a_k, xi]; a has shape (*S, d, n), xi (*S, n)."""
    a = np.asarray(a, dtype=float)
    if a.shape != mesh.shape + (mesh.d, spec.dim) or np.shape(xi) != mesh.shape + (spec.dim,):
        raise FieldShapeError(f"d_a: shapes {a.shape} and {np.shape(xi)} do not match the mesh")
    out = gradient(mesh, xi)
    return out + bracket(spec, a, np.asarray(xi)[..., None, :])


def d_a_star(mesh: CollarMesh, spec, a, p) -> np.ndarray:
    """
    Sum_k (partial_k p_k + ad*_{a_k} p_k).

    This is the transpose of d_a for the lattice pairing with the opposite
    sign, i.e. <p, d_a xi> + <d_a* p, xi> = 0 exactly.
    """
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    expected = mesh.shape + (mesh.d, spec.dim)
    if a.shape != expected or p.shape != expected:
        raise FieldShapeError(f"d_a_star: shapes {a.shape} and {p.shape} do not match {expected}")
    out = np.zeros(mesh.shape + (spec.dim,))
    for k in range(mesh.d):
        out += partial_k(mesh, p[..., k, :], k)
    out += coadjoint(spec, a, p).sum(axis=-2)
    return out


def integrate(mesh: CollarMesh, f, lead: int = 0) -> np.ndarray:
    """Sum over sites (fixed C order) times the cell volume."""
    _check_sites(mesh, f, lead)
    f = np.asarray(f, dtype=float)
    axes = tuple(range(lead, lead + mesh.d))
    return f.sum(axis=axes) * mesh.cell_volume


def pairing(mesh: CollarMesh, spec, p, q) -> float:
    """
    Integrated K-pairing of two fields of identical shape (*S, ..., n).
    All non-site indices are summed; bivector callers divide by 2 themselves.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise FieldShapeError(f"pairing: shapes {p.shape} and {q.shape} differ")
    _check_sites(mesh, p, 0)
    if p.shape[-1] != spec.dim:
        raise FieldShapeError(f"pairing: last axis {p.shape[-1]} is not the algebra dimension {spec.dim}")
    return float(np.sum(p * (q @ spec.pairing)) * mesh.cell_volume)


def field_norm(mesh: CollarMesh, f) -> float:
    """Euclidean lattice L2 norm sqrt(vol * sum f^2) over all components."""
    f = np.asarray(f, dtype=float)
    return float(np.sqrt(mesh.cell_volume * np.sum(f * f)))


def assemble_operator(fn, in_shape) -> np.ndarray:
    """Dense matrix of a linear map by applying it to unit vectors."""
    size = int(np.prod(in_shape))
    columns = []
    for i in range(size):
        unit = np.zeros(size)
        unit[i] = 1.0
        columns.append(np.asarray(fn(unit.reshape(in_shape)), dtype=float).reshape(-1))
    return np.array(columns).T
