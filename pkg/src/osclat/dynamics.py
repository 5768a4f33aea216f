"""Time evolution of the lattice flow and its sensitivity blocks.

`integrate_flow` advances Hamilton's equations with a fixed-step RK4 (default)
or kick-drift-kick leapfrog.  `integrate_variational` co-advances, for every
site k and every seed site j, the four d x d sensitivity blocks

    qq = dq_k(t)/dq_j(0)   qp = dq_k(t)/dp_j(0)
    pq = dp_k(t)/dq_j(0)   pp = dp_k(t)/dp_j(0)

along the trajectory, with the potential curvature refreshed at every
integrator stage.  `harmonic_flow` is the exact single-site rotation used by
interaction-picture constructions; it carries no stepping error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import LatticeModel, ModelError, PhaseState
from .potentials import FAMILIES

_FAMILY_CODE = {name: code for code, name in enumerate(FAMILIES)}

DEFAULT_ENERGY_TOL = {"rk4": 1e-6, "leapfrog": 1e-3}


class IntegrationError(RuntimeError):
    """Raised when an integration produces non-finite state or breaks its energy budget."""


@dataclass(frozen=True)
class CompiledSystem:
    """Flat-array view of a model restricted to a volume, kernel-ready."""

    sites: tuple
    dim: int
    masses: np.ndarray
    stiffness: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_kind: np.ndarray
    pair_amp: np.ndarray
    pair_rad: np.ndarray


def compile_system(model: LatticeModel, sites) -> CompiledSystem:
    sites = tuple(int(s) for s in sites)
    if any(s < 0 or s >= model.n_sites for s in sites):
        raise ModelError("volume contains sites outside the model's lattice")
    local = {s: r for r, s in enumerate(sites)}
    idx = np.asarray(sites)
    pi, pj, kind, amp, rad = [], [], [], [], []
    for (i, j) in model.pairs_within(sites):
        if i == j:
            continue
        pot = model.potentials[(i, j)]
        pi.append(local[i])
        pj.append(local[j])
        kind.append(_FAMILY_CODE[pot.family])
        amp.append(pot.amplitude)
        rad.append(pot.radius)
    return CompiledSystem(
        sites=sites,
        dim=model.dim,
        masses=model.masses[idx].copy(),
        stiffness=model.force_constants[idx].copy(),
        pair_i=np.asarray(pi, dtype=np.int64),
        pair_j=np.asarray(pj, dtype=np.int64),
        pair_kind=np.asarray(kind, dtype=np.int64),
        pair_amp=np.asarray(amp, dtype=float),
        pair_rad=np.asarray(rad, dtype=float),
    )


@dataclass(frozen=True)
class Trajectory:
    sites: tuple
    times: np.ndarray
    p: np.ndarray  # (n_nodes, n, d)
    q: np.ndarray
    energy: np.ndarray
    integrator: str
    step: float

    @property
    def n_nodes(self) -> int:
        return self.times.shape[0]

    @property
    def energy_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / max(1.0, abs(e0)))

    def state_at(self, node: int) -> PhaseState:
        return PhaseState(self.sites, self.p[node], self.q[node])

    @property
    def final_state(self) -> PhaseState:
        return self.state_at(-1)


@dataclass(frozen=True)
class SensitivityBlocks:
    """The four block families on the (volume x seeds) pair grid.

    Arrays have shape (n_nodes, n_sites, n_seeds, d, d); entry [t, k, j]
    is the derivative of the site-k quantity at node t with respect to the
    seed-site-j initial datum.
    """

    sites: tuple
    seeds: tuple
    times: np.ndarray
    qq: np.ndarray
    pq: np.ndarray
    qp: np.ndarray
    pp: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.qq.shape[3]

    def family(self, kind: str) -> np.ndarray:
        try:
            return getattr(self, kind)
        except AttributeError:
            raise KeyError(f"unknown block kind {kind!r}") from None

    def block(self, kind: str, site: int, seed: int, node: int = -1) -> np.ndarray:
        k = self.sites.index(site)
        j = self.seeds.index(seed)
        return self.family(kind)[node, k, j]

    @property
    def is_full_grid(self) -> bool:
        return self.seeds == self.sites


def _plan_steps(T: float, h: float, store_every: int, n_steps: int | None = None):
    if h <= 0:
        raise IntegrationError("step size must be positive")
    if store_every < 1:
        raise IntegrationError("store_every must be at least 1")
    if T == 0:
        return 0, 0.0  # identity flow: a single node at t = 0
    if n_steps is None:
        n_steps = max(1, int(round(abs(T) / h)))
        n_steps = ((n_steps + store_every - 1) // store_every) * store_every
    elif n_steps < 1 or n_steps % store_every:
        raise IntegrationError("explicit n_steps must be a positive multiple of store_every")
    return n_steps, T / n_steps


def _energies(system: CompiledSystem, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    kin = 0.5 * np.sum(np.sum(P * P, axis=2) / system.masses, axis=1)
    pot = 0.5 * np.sum(system.stiffness * np.sum(Q * Q, axis=2), axis=1)
    if system.pair_i.size:
        diff = Q[:, system.pair_i, :] - Q[:, system.pair_j, :]  # (nodes, pairs, d)
        rho = np.sum(diff * diff, axis=2)
        for e in range(system.pair_i.size):
            vals = np.array(
                [
                    _kernels._profile_scalar(int(system.pair_kind[e]), float(system.pair_rad[e]), float(r))[0]
                    for r in rho[:, e]
                ]
            )
            pot = pot + system.pair_amp[e] * vals
    return kin + pot


def _check_finite(P, Q, what: str):
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise IntegrationError(f"{what} produced non-finite state (step size too large?)")


def integrate_flow(
    model: LatticeModel,
    s0: PhaseState,
    T: float,
    h: float = 1e-3,
    integrator: str = "rk4",
    store_every: int = 1,
    energy_tol: float | None = None,
    n_steps: int | None = None,
) -> Trajectory:
    """Advance the full flow from s0 by time T (negative T runs backward)."""
    if integrator not in ("rk4", "leapfrog"):
        raise IntegrationError(f"unknown integrator {integrator!r}")
    system = compile_system(model, s0.sites)
    n_steps, step = _plan_steps(T, h, store_every, n_steps)
    kernel = _kernels.flow_rk4 if integrator == "rk4" else _kernels.flow_leapfrog
    P, Q = kernel(
        s0.p, s0.q, system.masses, system.stiffness,
        system.pair_i, system.pair_j, system.pair_kind, system.pair_amp, system.pair_rad,
        step, n_steps, store_every,
    )
    _check_finite(P, Q, "flow integration")
    times = step * store_every * np.arange(P.shape[0])
    energy = _energies(system, P, Q)
    traj = Trajectory(s0.sites, times, P, Q, energy, integrator, step)
    tol = DEFAULT_ENERGY_TOL[integrator] if energy_tol is None else energy_tol
    if traj.energy_drift > tol:
        raise IntegrationError(
            f"energy drift {traj.energy_drift:.3e} exceeds tolerance {tol:.3e}"
        )
    return traj


def integrate_variational(
    model: LatticeModel,
    s0: PhaseState,
    seeds,
    T: float,
    h: float = 1e-3,
    store_every: int = 1,
    energy_tol: float | None = None,
    n_steps: int | None = None,
):
    """Co-advance flow and sensitivity blocks for all (site, seed) pairs.

    Initial data: qq and pp start as identity on diagonal (site == seed)
    pairs, pq and qp start at zero.
    """
    seeds = tuple(int(s) for s in seeds)
    if not set(seeds) <= set(s0.sites):
        raise ModelError("seeds must lie inside the state's volume")
    system = compile_system(model, s0.sites)
    n, d = s0.p.shape
    nJ = len(seeds)
    local = {s: r for r, s in enumerate(s0.sites)}
    qq0 = np.zeros((n, nJ, d, d))
    pp0 = np.zeros((n, nJ, d, d))
    for j_, seed in enumerate(seeds):
        qq0[local[seed], j_] = np.eye(d)
        pp0[local[seed], j_] = np.eye(d)
    pq0 = np.zeros_like(qq0)
    qp0 = np.zeros_like(qq0)
    n_steps, step = _plan_steps(T, h, store_every, n_steps)
    P, Q, QQ, PQ, QP, PP = _kernels.var_rk4(
        s0.p, s0.q, qq0, pq0, qp0, pp0,
        system.masses, system.stiffness,
        system.pair_i, system.pair_j, system.pair_kind, system.pair_amp, system.pair_rad,
        step, n_steps, store_every,
    )
    _check_finite(P, Q, "variational integration")
    if not all(np.all(np.isfinite(A)) for A in (QQ, PQ, QP, PP)):
        raise IntegrationError("variational integration produced non-finite blocks")
    times = step * store_every * np.arange(P.shape[0])
    energy = _energies(system, P, Q)
    traj = Trajectory(s0.sites, times, P, Q, energy, "rk4", step)
    tol = DEFAULT_ENERGY_TOL["rk4"] if energy_tol is None else energy_tol
    if traj.energy_drift > tol:
        raise IntegrationError(
            f"energy drift {traj.energy_drift:.3e} exceeds tolerance {tol:.3e}"
        )
    blocks = SensitivityBlocks(s0.sites, seeds, times, QQ, PQ, QP, PP)
    return traj, blocks


def harmonic_flow(model: LatticeModel, s0: PhaseState, t: float) -> PhaseState:
    """Exact interaction-free evolution: independent rotation at every site."""
    idx = np.asarray(s0.sites)
    m = model.masses[idx]
    nu = model.force_constants[idx]
    if np.any(nu <= 0) or np.any(m <= 0):
        raise ModelError("harmonic flow needs positive masses and stiffness")
    omega = np.sqrt(nu / m)
    c = np.cos(omega * t)[:, None]
    s = np.sin(omega * t)[:, None]
    momega = (m * omega)[:, None]
    q = c * s0.q + s * s0.p / momega
    p = -momega * s * s0.q + c * s0.p
    return PhaseState(s0.sites, p, q)


def assemble_jacobian(blocks: SensitivityBlocks, node: int = -1) -> np.ndarray:
    """Full flow Jacobian in the (momentum block, position block) ordering."""
    if not blocks.is_full_grid:
        raise IntegrationError("full Jacobian requires seeds covering the whole volume")
    n = len(blocks.sites)
    d = blocks.dim
    nd = n * d
    M = np.empty((2 * nd, 2 * nd))
    # (n, nJ, d, d) -> (n*d, nJ*d) with row (k, a), column (j, b)
    def flat(A):
        return A[node].transpose(0, 2, 1, 3).reshape(nd, nd)

    M[:nd, :nd] = flat(blocks.pp)
    M[:nd, nd:] = flat(blocks.pq)
    M[nd:, :nd] = flat(blocks.qp)
    M[nd:, nd:] = flat(blocks.qq)
    return M


def symplectic_defect(blocks: SensitivityBlocks, node: int = -1) -> float:
    """Max-norm violation of the canonical-form invariance of the Jacobian."""
    M = assemble_jacobian(blocks, node)
    nd = M.shape[0] // 2
    omega = np.zeros_like(M)
    omega[:nd, nd:] = np.eye(nd)
    omega[nd:, :nd] = -np.eye(nd)
    return float(np.max(np.abs(M.T @ omega @ M - omega)))


def jacobian_determinant(blocks: SensitivityBlocks, node: int = -1) -> float:
    return float(np.linalg.det(assemble_jacobian(blocks, node)))


def trajectory_rows(traj: Trajectory):
    """Flat (t, site, component, value) rows for CSV dumps."""
    rows = []
    d = traj.p.shape[2]
    for node, t in enumerate(traj.times):
        for r, site in enumerate(traj.sites):
            for c in range(d):
                rows.append((float(t), site, f"p{c}", float(traj.p[node, r, c])))
                rows.append((float(t), site, f"q{c}", float(traj.q[node, r, c])))
    return rows


def block_rows(blocks: SensitivityBlocks):
    """Flat (t, site, component, value) rows; component names carry seed and indices."""
    rows = []
    d = blocks.dim
    for node, t in enumerate(blocks.times):
        for r, site in enumerate(blocks.sites):
            for j_, seed in enumerate(blocks.seeds):
                for kind in ("qq", "pq", "qp", "pp"):
                    M = blocks.family(kind)[node, r, j_]
                    for a in range(d):
                        for b in range(d):
                            rows.append(
                                (float(t), site, f"{kind}[{seed}]{a}{b}", float(M[a, b]))
                            )
    return rows
