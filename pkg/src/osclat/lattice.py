"""Site geometry: finite lattices, distance-decay weights, and derived constants.

A lattice is a finite ordered set of sites with a metric, normally induced by
an embedding into R^ell.  Decay functions weight interactions by distance and
carry the two summability constants used by every bound downstream: the row-sum
norm and the convolution self-bound.  Both are computed exactly on the finite
truncation at hand, so they are truncation-dependent estimates of their
infinite-volume counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised for ill-posed geometric inputs (empty site sets, bad parameters)."""


@dataclass(frozen=True)
class Lattice:
    """Finite set of sites 0..n-1 with a symmetric metric.

    ``coords`` is the embedding used to derive the metric (``None`` when the
    lattice was built from an explicit distance matrix).  ``dist`` is the full
    pairwise distance matrix; all geometric operations read from it.
    """

    coords: np.ndarray | None
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise GeometryError("distance matrix must be square")
        if not np.allclose(np.diag(d), 0.0):
            raise GeometryError("metric must vanish on the diagonal")
        if not np.allclose(d, d.T):
            raise GeometryError("metric must be symmetric")
        if np.any(d < 0):
            raise GeometryError("metric must be nonnegative")
        object.__setattr__(self, "dist", d)

    @property
    def n_sites(self) -> int:
        return self.dist.shape[0]

    @property
    def sites(self) -> tuple:
        return tuple(range(self.n_sites))

    @property
    def embedding_dim(self) -> int:
        return 1 if self.coords is None else self.coords.shape[1]

    def distance(self, x: int, y: int) -> float:
        return float(self.dist[x, y])


def chain(n: int, spacing: float = 1.0) -> Lattice:
    """1D chain of n sites embedded in Z*spacing."""
    if n < 1:
        raise GeometryError("chain needs at least one site")
    coords = spacing * np.arange(n, dtype=float)[:, None]
    return from_points(coords)


def grid2d(nx: int, ny: int, spacing: float = 1.0) -> Lattice:
    """2D rectangular grid, sites ordered row-major."""
    if nx < 1 or ny < 1:
        raise GeometryError("grid needs at least one site per axis")
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    coords = spacing * np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
    return from_points(coords)


def from_points(coords: np.ndarray) -> Lattice:
    """Lattice from an explicit coordinate list with the Euclidean metric."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.ndim != 2:
        raise GeometryError("coords must be an (n, ell) array")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    return Lattice(coords=coords, dist=dist)


def from_metric(n: int, metric) -> Lattice:
    """Lattice of n sites from a pointwise metric callable, tabulated once.

    Symmetry and vanishing diagonal are checked on the table; the triangle
    inequality is the caller's responsibility.
    """
    if n < 1:
        raise GeometryError("need at least one site")
    dist = np.array([[float(metric(x, y)) for y in range(n)] for x in range(n)])
    return Lattice(coords=None, dist=dist)


@dataclass(frozen=True)
class DecayFunction:
    """Non-increasing distance weight with F(0) = 1 and values in (0, 1].

    The base profile is either a power law (1 + r)^(-exponent) or a tabulated
    non-increasing curve; an optional exponential factor exp(-rate * r)
    multiplies either base.  Sharpening the exponential factor is how the
    light-cone optimization reweights interactions.
    """

    exponent: float = 0.0
    rate: float = 0.0
    table: tuple | None = None  # (radii tuple, values tuple), both increasing r

    def __post_init__(self):
        if self.exponent < 0 or self.rate < 0:
            raise GeometryError("decay parameters must be nonnegative")
        if self.table is not None:
            radii = np.asarray(self.table[0], dtype=float)
            vals = np.asarray(self.table[1], dtype=float)
            if radii.ndim != 1 or radii.shape != vals.shape:
                raise GeometryError("table needs matching 1D radii and values")
            if radii[0] != 0.0 or vals[0] != 1.0:
                raise GeometryError("tabulated decay must start at F(0) = 1")
            if np.any(np.diff(radii) <= 0):
                raise GeometryError("table radii must be strictly increasing")
            if np.any(np.diff(vals) > 0) or np.any(vals <= 0):
                raise GeometryError("table values must be positive and non-increasing")

    @property
    def family(self) -> str:
        if self.table is not None:
            return "tabulated"
        return "power" if self.rate == 0.0 else "exp-power"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise GeometryError("distances must be nonnegative")
        if self.table is not None:
            radii = np.asarray(self.table[0])
            vals = np.asarray(self.table[1])
            base = np.interp(r, radii, vals)
        else:
            base = (1.0 + r) ** (-self.exponent)
        out = base * np.exp(-self.rate * r)
        return out if out.ndim else float(out)


def power_decay(exponent: float) -> DecayFunction:
    return DecayFunction(exponent=exponent)


def exp_power_decay(exponent: float, rate: float) -> DecayFunction:
    return DecayFunction(exponent=exponent, rate=rate)


def tabulated_decay(radii, values) -> DecayFunction:
    return DecayFunction(table=(tuple(float(r) for r in radii), tuple(float(v) for v in values)))


def weight_decay(decay: DecayFunction, mu: float) -> DecayFunction:
    """Sharpen a decay function by the factor exp(-mu * r).

    Composing two sharpenings adds their rates; the convolution constant can
    only shrink because the extra factor is submultiplicative along triangles.
    """
    if mu <= 0:
        raise GeometryError("mu must be positive")
    return DecayFunction(exponent=decay.exponent, rate=decay.rate + mu, table=decay.table)


def _check_sites(lat: Lattice, sites, name: str = "site set") -> np.ndarray:
    idx = np.asarray(tuple(sites), dtype=int)
    if idx.size == 0:
        raise GeometryError(f"{name} must be nonempty")
    if np.any(idx < 0) or np.any(idx >= lat.n_sites):
        raise GeometryError(f"{name} contains sites outside the lattice")
    if len(set(idx.tolist())) != idx.size:
        raise GeometryError(f"{name} contains duplicate sites")
    return idx


def decay_norm(lat: Lattice, decay: DecayFunction, sites) -> float:
    """Largest row sum of F(d(x, y)) over the truncation: sup_y sum_x."""
    idx = _check_sites(lat, sites)
    w = decay(lat.dist[np.ix_(idx, idx)])
    return float(np.max(np.sum(w, axis=0)))


def convolution_constant(lat: Lattice, decay: DecayFunction, sites) -> float:
    """Tightest C with sum_z F(d(x,z)) F(d(z,y)) <= C * F(d(x,y)) on the truncation."""
    idx = _check_sites(lat, sites)
    w = decay(lat.dist[np.ix_(idx, idx)])
    conv = w @ w
    return float(np.max(conv / w))


def interaction_weight(lat: Lattice, decay: DecayFunction, X, Y) -> float:
    """Total decay weight between two site sets: sum over X x Y of F(d(x,y))."""
    xi = _check_sites(lat, X, "X")
    yi = _check_sites(lat, Y, "Y")
    return float(np.sum(decay(lat.dist[np.ix_(xi, yi)])))


def set_distance(lat: Lattice, X, Y) -> float:
    """Minimum metric distance between two site sets."""
    xi = _check_sites(lat, X, "X")
    yi = _check_sites(lat, Y, "Y")
    return float(np.min(lat.dist[np.ix_(xi, yi)]))


def ball(lat: Lattice, center: int, radius: float) -> tuple:
    """Sites within metric distance ``radius`` of ``center``, in site order."""
    if not 0 <= center < lat.n_sites:
        raise GeometryError("center outside the lattice")
    return tuple(int(i) for i in np.nonzero(lat.dist[center] <= radius)[0])
