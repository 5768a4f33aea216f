"""Constants and envelopes on the bound side of the propagation estimates.

Everything here is a pure function of previously certified quantities.  The
master constant combines the mass/stiffness suprema, the certified derivative
rate of the pair potentials, the coupling-to-decay ratio, and the two decay
summability constants:

    c0 = sup(1/m) * max(sup(nu) + d * rate^2 * ratio * normF,
                        d * rate^2 * ratio * convF,
                        1)

Per-order Dyson bounds for the four sensitivity families sum to hyperbolic
closed forms; sqrt(c0) sets the time scale.  The exponentially reweighted
variant replaces the coupling ratio and row-sum norm by their sharpened
versions (the convolution constant never grows under sharpening, so it is
kept), which trades a larger time constant for exponential spatial decay and
yields the light-cone form of the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import convolution_constant, decay_norm, set_distance, weight_decay
from .model import LatticeModel, validate_assumptions

BLOCK_KINDS = ("qq", "pq", "qp", "pp")


class BoundsError(ValueError):
    """Raised when bound constants are requested for an invalid model."""


@dataclass(frozen=True)
class BoundConstants:
    """Ingredients and value of the master propagation constant."""

    inv_mass_sup: float
    stiffness_sup: float
    dim: int
    deriv_rate: float          # certified order-2 derivative rate of the potentials
    coupling_decay_ratio: float            # coupling amplitude / decay weight, worst pair
    decay_norm: float          # row-sum norm of the decay on the volume
    conv_constant: float       # convolution self-bound of the decay on the volume
    mu: float = 0.0            # exponential reweighting rate (0 = unweighted)
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def interaction_strength(self) -> float:
        return self.dim * self.deriv_rate**2 * self.coupling_decay_ratio

    @property
    def c0(self) -> float:
        branch_row = self.stiffness_sup + self.interaction_strength * self.decay_norm
        branch_conv = self.interaction_strength * self.conv_constant
        return self.inv_mass_sup * max(branch_row, branch_conv, 1.0)

    @property
    def sqrt_c0(self) -> float:
        return math.sqrt(self.c0)

    def as_dict(self) -> dict:
        return {
            "inv_mass_sup": self.inv_mass_sup,
            "stiffness_sup": self.stiffness_sup,
            "dim": self.dim,
            "deriv_rate": self.deriv_rate,
            "coupling_decay_ratio": self.coupling_decay_ratio,
            "decay_norm": self.decay_norm,
            "conv_constant": self.conv_constant,
            "mu": self.mu,
            "c0": self.c0,
        }


def compute_constants(model: LatticeModel, sites=None) -> BoundConstants:
    """Assemble the master constant on the given volume.

    Refuses models that fail validation; the report rides on the exception.
    """
    sites = model.lattice.sites if sites is None else tuple(int(s) for s in sites)
    report = validate_assumptions(model, sites)
    if not report.all_passed:
        failing = [item.name for item in report.items if not item.passed]
        exc = BoundsError(f"model fails validation: {', '.join(failing)}")
        exc.report = report
        raise exc
    idx = np.asarray(sites)
    inv_mass = float(np.max(1.0 / model.masses[idx]))
    stiff = float(np.max(model.force_constants[idx]))
    ratio = model.coupling_decay_ratio()
    bc = BoundConstants(
        inv_mass_sup=inv_mass,
        stiffness_sup=stiff,
        dim=model.dim,
        deriv_rate=model.coupling_rate(),
        coupling_decay_ratio=ratio,
        decay_norm=decay_norm(model.lattice, model.decay, sites),
        conv_constant=convolution_constant(model.lattice, model.decay, sites),
        provenance={
            "volume": list(sites),
            "decay_family": model.decay.family,
            "deriv_rate_order": 2,
            "cert_max_order": model.cert_order,
        },
    )
    return bc


def with_mu(bc: BoundConstants, model: LatticeModel, sites, mu: float) -> BoundConstants:
    """Reweighted constants: sharpened coupling ratio and row-sum norm.

    The convolution constant is carried over unchanged (sharpening cannot
    increase it), so the reweighted value is a valid, tighter-geometry master
    constant.
    """
    if mu <= 0:
        raise BoundsError("mu must be positive")
    sites = tuple(int(s) for s in sites)
    sharpened = weight_decay(model.decay, mu)
    ratio_mu = 0.0
    for (i, j) in model.pairs_within(sites):
        if i == j:
            continue
        amp = model.coupling_amp((i, j))
        ratio_mu = max(ratio_mu, amp / float(sharpened(model.lattice.distance(i, j))))
    return BoundConstants(
        inv_mass_sup=bc.inv_mass_sup,
        stiffness_sup=bc.stiffness_sup,
        dim=bc.dim,
        deriv_rate=bc.deriv_rate,
        coupling_decay_ratio=ratio_mu,
        decay_norm=decay_norm(model.lattice, sharpened, sites),
        conv_constant=bc.conv_constant,
        mu=mu,
        provenance=dict(bc.provenance, mu=mu),
    )


def dyson_partial_sums(c0: float, f_value: float, t: float, n_terms: int, kind: str) -> np.ndarray:
    """Partial sums S_1..S_N of the per-order bounds for one block family.

    Terms (each multiplied by the spatial weight ``f_value``):

        qq, pp : (c0 t^2)^n / (2n)!          n = 1..N
        pq     : c0^n |t|^(2n-1) / (2n-1)!   n = 1..N
        qp     : c0^(n-1) |t|^(2n-1) / (2n-1)!   n = 1..N

    The qp family starts one power of c0 lower because its leading bound is
    |t| itself; including it makes the sums converge to the closed forms.
    """
    if kind not in BLOCK_KINDS:
        raise BoundsError(f"unknown block kind {kind!r}")
    if n_terms < 1:
        raise BoundsError("need at least one term")
    if not 0.0 <= f_value <= 1.0 + 1e-12:
        raise BoundsError("spatial weight must lie in [0, 1]")
    at = abs(t)
    x = c0 * at * at
    terms = np.empty(n_terms)
    if kind in ("qq", "pp"):
        term = x / 2.0
        for n in range(1, n_terms + 1):
            terms[n - 1] = term
            term *= x / ((2 * n + 1) * (2 * n + 2))
    else:
        term = c0 * at if kind == "pq" else at
        for n in range(1, n_terms + 1):
            terms[n - 1] = term
            term *= x / ((2 * n) * (2 * n + 1))
    return f_value * np.cumsum(terms)


def jacobian_envelope(c0: float, f_value: float, t: float, kind: str) -> float:
    """Closed-form envelope for one block family at time t."""
    if kind not in BLOCK_KINDS:
        raise BoundsError(f"unknown block kind {kind!r}")
    root = math.sqrt(c0)
    x = root * abs(t)
    if kind in ("qq", "pp"):
        return f_value * 2.0 * math.sinh(0.5 * x) ** 2  # cosh(x) - 1, stable for small x
    if kind == "pq":
        return f_value * root * math.sinh(x)
    return f_value * math.sinh(x) / root


@dataclass(frozen=True)
class BracketBound:
    """The two right-hand-side forms of the bracket inequality."""

    sinh_form: float
    exp_form: float

    def __post_init__(self):
        if self.sinh_form > self.exp_form * (1.0 + 1e-12):
            raise BoundsError("hyperbolic form exceeded its exponential majorant")


def lr_rhs(bc: BoundConstants, f_c1: float, g_c1: float, weight: float, t: float) -> BracketBound:
    """Right-hand side of the evolved-bracket inequality.

    ``weight`` is the total decay weight between the two supports.  The
    hyperbolic form is primary; the exponential form is its looser majorant
    (sinh x <= e^x - 1).
    """
    if f_c1 < 0 or g_c1 < 0 or weight < 0:
        raise BoundsError("norms and weights must be nonnegative")
    root = bc.sqrt_c0
    x = root * abs(t)
    pre = 4.0 * f_c1 * g_c1 * root * weight
    return BracketBound(sinh_form=pre * math.sinh(x), exp_form=pre * math.expm1(x))


def light_cone_form(prefactor: float, mu: float, c_mu: float, dist: float, t: float) -> float:
    """Light-cone form: prefactor * exp(-mu (dist - sqrt(c_mu) |t| / mu)).

    Aggressive reweighting can push the exponent past the floating range;
    such a bound is valid but useless, so it saturates to infinity.
    """
    arg = -mu * dist + math.sqrt(c_mu) * abs(t)
    if arg >= 700.0:
        return math.inf
    return prefactor * math.exp(arg)


@dataclass(frozen=True)
class LightConeEntry:
    mu: float
    c_mu: float
    prefactor: float
    velocity: float
    bound: float


@dataclass(frozen=True)
class LightConeResult:
    entries: tuple
    best: LightConeEntry


def default_mu_grid(n: int = 16) -> np.ndarray:
    return np.geomspace(1e-2, 1e1, n)


def light_cone_bound(
    bc: BoundConstants,
    model: LatticeModel,
    sites,
    f_c1: float,
    g_c1: float,
    X,
    Y,
    t: float,
    mu_grid=None,
) -> LightConeResult:
    """Best exponentially decaying bound over a grid of reweighting rates.

    The prefactor is assembled explicitly as
    2 * |f|_C1 * |g|_C1 * sqrt(c_mu) * min(|X|, |Y|) * normF, the constant
    the chain of estimates produces once sinh is absorbed into half the
    exponential.  Reports the implied propagation velocity sqrt(c_mu)/mu
    per grid point.
    """
    mu_grid = default_mu_grid() if mu_grid is None else np.asarray(mu_grid, dtype=float)
    if mu_grid.size == 0:
        raise BoundsError("mu grid must be nonempty")
    dist = set_distance(model.lattice, X, Y)
    if dist <= 0:
        raise BoundsError("supports must be spatially separated")
    size_factor = min(len(tuple(X)), len(tuple(Y)))
    entries = []
    for mu in mu_grid:
        bmu = with_mu(bc, model, sites, float(mu))
        pre = 2.0 * f_c1 * g_c1 * bmu.sqrt_c0 * size_factor * bc.decay_norm
        entries.append(
            LightConeEntry(
                mu=float(mu),
                c_mu=bmu.c0,
                prefactor=pre,
                velocity=bmu.sqrt_c0 / float(mu),
                bound=light_cone_form(pre, float(mu), bmu.c0, dist, t),
            )
        )
    best = min(entries, key=lambda e: e.bound)
    return LightConeResult(entries=tuple(entries), best=best)
