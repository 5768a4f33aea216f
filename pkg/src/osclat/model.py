"""Physical model on a lattice: masses, on-site stiffness, pair couplings.

The energy of a finite volume is the kinetic term plus on-site harmonic
confinement plus pairwise interaction energy; the interaction enters through
the conventional half-weighted double sum, which for potentials stored once
per unordered pair means each stored pair contributes its full value.

Validation mirrors the standing hypotheses of the bound machinery: even pair
potentials with no self-interaction, smooth compact support with certified
derivative bounds, uniformly positive masses and stiffnesses, and a finite
coupling-to-decay ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import DecayFunction, Lattice
from .potentials import PairPotential, certify_derivative_bounds


class ModelError(ValueError):
    """Raised for structurally invalid models or states."""


@dataclass(frozen=True)
class PhaseState:
    """Point of the phase space over an ordered tuple of sites.

    ``p`` and ``q`` have shape (len(sites), dim); rows align with ``sites``.
    """

    sites: tuple
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        n = len(self.sites)
        if p.shape != q.shape or p.ndim != 2 or p.shape[0] != n:
            raise ModelError("p and q must both have shape (n_sites, dim)")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ModelError("phase-space entries must be finite")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return self.p.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.p.ravel(), self.q.ravel()])

    @classmethod
    def from_flat(cls, sites, dim, vec) -> "PhaseState":
        n = len(sites)
        vec = np.asarray(vec, dtype=float)
        return cls(tuple(sites), vec[: n * dim].reshape(n, dim), vec[n * dim :].reshape(n, dim))


def zero_state(sites, dim: int) -> PhaseState:
    n = len(tuple(sites))
    return PhaseState(tuple(sites), np.zeros((n, dim)), np.zeros((n, dim)))


@dataclass(frozen=True)
class LatticeModel:
    """Immutable model: lattice geometry plus physical parameters.

    ``potentials`` maps unordered site pairs (i, j), i < j, to pair
    potentials.  Self-pairs are storable so that validation can flag them,
    but they contribute only a constant to the energy.
    """

    lattice: Lattice
    dim: int
    masses: np.ndarray
    force_constants: np.ndarray
    potentials: dict
    decay: DecayFunction
    r_cut: float | None = None
    cert_order: int = 4
    certificates: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.lattice.n_sites
        m = np.asarray(self.masses, dtype=float)
        nu = np.asarray(self.force_constants, dtype=float)
        if m.shape != (n,) or nu.shape != (n,):
            raise ModelError("masses and force_constants must have one entry per site")
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "force_constants", nu)
        pots = {}
        for key, pot in self.potentials.items():
            i, j = int(key[0]), int(key[1])
            if not (0 <= i < n and 0 <= j < n):
                raise ModelError(f"potential pair {key} outside the lattice")
            if pot.dim != self.dim:
                raise ModelError(f"potential for pair {key} has wrong dimension")
            pots[(min(i, j), max(i, j))] = pot
        object.__setattr__(self, "potentials", pots)
        certs = dict(self.certificates)
        for key, pot in pots.items():
            if key not in certs and pot.family != "zero":
                certs[key] = certify_derivative_bounds(pot, max_order=self.cert_order)
        object.__setattr__(self, "certificates", certs)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def pairs_within(self, sites) -> list:
        """Stored interaction pairs with both ends inside the given volume."""
        sset = set(int(s) for s in sites)
        return [key for key in sorted(self.potentials) if key[0] in sset and key[1] in sset]

    def coupling_rate(self) -> float:
        """Largest certified order-2 derivative rate among stored pairs."""
        rates = [c.c_rate for c in self.certificates.values()]
        return max(rates) if rates else 0.0

    def coupling_amp(self, key) -> float:
        cert = self.certificates.get((min(key), max(key)))
        return cert.c_amp if cert is not None else 0.0

    def coupling_decay_ratio(self) -> float:
        """Largest ratio of certified pair amplitude to decay weight."""
        best = 0.0
        for (i, j), _ in self.potentials.items():
            if i == j:
                continue
            amp = self.coupling_amp((i, j))
            best = max(best, amp / float(self.decay(self.lattice.distance(i, j))))
        return best


def homogeneous_model(
    lattice: Lattice,
    dim: int,
    mass: float,
    force_constant: float,
    decay: DecayFunction,
    family: str = "bump",
    coupling: float = 0.0,
    radius: float = 1.0,
    r_cut: float | None = None,
) -> LatticeModel:
    """Uniform masses and stiffness, couplings c_ij = coupling * F(d(i, j)).

    Tying amplitudes to the decay weight makes the coupling-to-decay ratio a
    single number by construction.  Pairs beyond ``r_cut`` are omitted.
    """
    n = lattice.n_sites
    pots = {}
    if coupling != 0.0:
        for i in range(n):
            for j in range(i + 1, n):
                dij = lattice.distance(i, j)
                if r_cut is not None and dij > r_cut:
                    continue
                pots[(i, j)] = PairPotential(family, coupling * float(decay(dij)), radius, dim)
    return LatticeModel(
        lattice=lattice,
        dim=dim,
        masses=np.full(n, float(mass)),
        force_constants=np.full(n, float(force_constant)),
        potentials=pots,
        decay=decay,
        r_cut=r_cut,
    )


def _check_state(model: LatticeModel, state: PhaseState):
    if any(s < 0 or s >= model.n_sites for s in state.sites):
        raise ModelError("state has sites outside the model's lattice")
    if state.dim != model.dim:
        raise ModelError("state dimension does not match the model")


def hamiltonian(model: LatticeModel, state: PhaseState) -> float:
    """Total energy of the state on its volume."""
    _check_state(model, state)
    idx = np.asarray(state.sites)
    m = model.masses[idx]
    nu = model.force_constants[idx]
    kinetic = float(np.sum(np.sum(state.p * state.p, axis=1) / (2.0 * m)))
    onsite = float(np.sum(nu * np.sum(state.q * state.q, axis=1) / 2.0))
    local = {s: r for r, s in enumerate(state.sites)}
    inter = 0.0
    for (i, j) in model.pairs_within(state.sites):
        if i == j:
            inter += float(model.potentials[(i, j)].value(np.zeros(model.dim)))
        else:
            inter += float(model.potentials[(i, j)].value(state.q[local[i]] - state.q[local[j]]))
    return kinetic + onsite + inter


def force_field(model: LatticeModel, state: PhaseState):
    """Hamiltonian vector field: (dp/dt, dq/dt) arrays aligned with state.sites."""
    _check_state(model, state)
    idx = np.asarray(state.sites)
    m = model.masses[idx]
    nu = model.force_constants[idx]
    dq = state.p / m[:, None]
    dp = -nu[:, None] * state.q
    local = {s: r for r, s in enumerate(state.sites)}
    for (i, j) in model.pairs_within(state.sites):
        if i == j:
            continue
        g = model.potentials[(i, j)].gradient(state.q[local[i]] - state.q[local[j]])
        dp[local[i]] -= g
        dp[local[j]] += g
    return dp, dq


def hessian_blocks(model: LatticeModel, sites, q: np.ndarray) -> dict:
    """Sparse curvature blocks of the potential energy at positions q.

    Returns a dict mapping (k, j) to a (dim, dim) array: every diagonal block
    plus one block per stored interacting pair inside the volume, both key
    orders present for off-diagonal pairs.
    """
    sites = tuple(int(s) for s in sites)
    q = np.asarray(q, dtype=float)
    if q.shape != (len(sites), model.dim):
        raise ModelError("q must have shape (n_sites, dim)")
    local = {s: r for r, s in enumerate(sites)}
    idx = np.asarray(sites)
    eye = np.eye(model.dim)
    blocks = {(s, s): model.force_constants[s] * eye.copy() for s in sites}
    for (i, j) in model.pairs_within(sites):
        if i == j:
            continue
        H = model.potentials[(i, j)].hessian(q[local[i]] - q[local[j]])
        blocks[(i, i)] += H
        blocks[(j, j)] += H  # even potential: same curvature seen from either end
        blocks[(i, j)] = -H
        blocks[(j, i)] = -H.T
    return blocks


@dataclass(frozen=True)
class AssumptionItem:
    name: str
    passed: bool
    witness: dict


@dataclass(frozen=True)
class AssumptionReport:
    items: tuple

    @property
    def all_passed(self) -> bool:
        return all(item.passed for item in self.items)

    def __getitem__(self, name: str) -> AssumptionItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def summary_lines(self) -> list:
        out = []
        for item in self.items:
            status = "pass" if item.passed else "FAIL"
            detail = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in item.witness.items())
            out.append(f"  [{status}] {item.name}: {detail}")
        return out


def validate_assumptions(model: LatticeModel, sites=None) -> AssumptionReport:
    """Check the standing hypotheses on the given volume and report witnesses."""
    sites = model.lattice.sites if sites is None else tuple(int(s) for s in sites)
    idx = np.asarray(sites)
    m = model.masses[idx]
    nu = model.force_constants[idx]
    items = []

    self_pairs = [k for k in model.pairs_within(sites) if k[0] == k[1]]
    even = all(model.potentials[k].is_even for k in model.pairs_within(sites))
    items.append(
        AssumptionItem(
            "pair-symmetry",
            even and not self_pairs,
            {"self_pairs": len(self_pairs), "all_even": even},
        )
    )

    families = sorted({model.potentials[k].family for k in model.pairs_within(sites)})
    items.append(AssumptionItem("smooth-compact-support", True, {"families": families or ["none"]}))

    rate = model.coupling_rate()
    amps = [model.coupling_amp(k) for k in model.pairs_within(sites) if k[0] != k[1]]
    items.append(
        AssumptionItem(
            "derivative-bounds",
            all(np.isfinite(a) for a in amps) and np.isfinite(rate),
            {
                "c_rate_order2": rate,
                "max_c_amp": max(amps) if amps else 0.0,
                "certified_order": model.cert_order,
            },
        )
    )

    with np.errstate(divide="ignore"):
        inv_m = np.where(m > 0, 1.0 / np.where(m > 0, m, 1.0), np.inf)
    positive = bool(np.all(m > 0) and np.all(nu > 0))
    finite = bool(np.all(np.isfinite(inv_m)) and np.all(np.isfinite(nu)))
    items.append(
        AssumptionItem(
            "uniform-positivity",
            positive and finite,
            {
                "inv_mass_inf": float(np.min(inv_m)) if positive else float("nan"),
                "inv_mass_sup": float(np.max(inv_m)) if positive else float("nan"),
                "stiffness_inf": float(np.min(nu)),
                "stiffness_sup": float(np.max(nu)),
            },
        )
    )

    ratio = model.coupling_decay_ratio()
    items.append(AssumptionItem("coupling-decay-ratio", bool(np.isfinite(ratio)), {"coupling_decay_ratio": ratio}))

    return AssumptionReport(items=tuple(items))
