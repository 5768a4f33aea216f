"""Experiment configuration: schema, validation, and object construction.

Configs are nested-mapping YAML documents with a ``schema_version`` field.
Validation walks the whole document and reports every violation with a
path-qualified message rather than stopping at the first.  Positivity of
masses and stiffnesses and existence of every referenced site are enforced
at parse time; experiment-specific preconditions (disjoint supports for the
bracket experiment) are also caught here so a bad run never starts.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import lattice as lat
from . import observables as obs
from .model import LatticeModel, homogeneous_model
from .potentials import FAMILIES

SCHEMA_VERSION = 1

PRESETS = ("harmonic-1site", "chain-8", "grid-5x5", "amorphous-32")


class ConfigError(ValueError):
    """Carries the full list of validation problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class ExperimentConfig:
    raw: dict
    path: str

    lattice: lat.Lattice = field(init=False)
    decay: lat.DecayFunction = field(init=False)
    model: LatticeModel = field(init=False)
    observable_f: object = field(init=False, default=None)
    observable_g: object = field(init=False, default=None)

    @property
    def dynamics(self) -> dict:
        return self.raw["dynamics"]

    @property
    def sampler_spec(self) -> obs.SamplerSpec:
        s = self.raw["sampler"]
        return obs.SamplerSpec(
            n_points=s["n_points"], radius=s["radius"],
            seed=s["seed"], refine_evals=s["refine_evals"],
        )

    def sampler_with(self, n_points=None, seed=None, refine_evals=None) -> obs.SamplerSpec:
        base = self.sampler_spec
        return obs.SamplerSpec(
            n_points=base.n_points if n_points is None else n_points,
            radius=base.radius,
            seed=base.seed if seed is None else seed,
            refine_evals=base.refine_evals if refine_evals is None else refine_evals,
        )

    def experiment(self, name: str) -> dict:
        return self.raw.get("experiments", {}).get(name, {})

    @property
    def lhs_scale(self) -> float:
        return float(self.raw.get("debug", {}).get("lhs_scale", 1.0))


_DEFAULTS = {
    "lattice": {"family": "chain", "n": 1, "spacing": 1.0},
    "decay": {"family": "power", "exponent": None, "rate": 0.0},
    "model": {
        "dim": 1,
        "mass": 1.0,
        "force_constant": 1.0,
        "potential": {"family": "bump", "coupling": 0.0, "radius": 1.0, "r_cut": None},
    },
    "dynamics": {"integrator": "rk4", "h": 1e-3, "t_max": 2.0, "n_times": 21},
    "sampler": {"n_points": 256, "radius": 5.0, "seed": 20250801, "refine_evals": 120},
}


def _merge_defaults(raw: dict) -> dict:
    out = dict(raw)
    for section, defaults in _DEFAULTS.items():
        have = dict(raw.get(section) or {})
        for key, value in defaults.items():
            if isinstance(value, dict):
                sub = dict(have.get(key) or {})
                for k2, v2 in value.items():
                    sub.setdefault(k2, v2)
                have[key] = sub
            else:
                have.setdefault(key, value)
        out[section] = have
    return out


def _require_number(cfg, path, problems, positive=False, nonnegative=False):
    node = cfg
    for part in path.split(".")[:-1]:
        node = node.get(part, {})
    key = path.split(".")[-1]
    val = node.get(key)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        problems.append(f"{path}: expected a number, got {val!r}")
        return None
    if positive and val <= 0:
        problems.append(f"{path}: must be > 0, got {val}")
        return None
    if nonnegative and val < 0:
        problems.append(f"{path}: must be >= 0, got {val}")
        return None
    return val


def _site_list(value, n_sites, where, problems):
    if not isinstance(value, (list, tuple)) or not value:
        problems.append(f"{where}: expected a nonempty list of site indices")
        return None
    sites = []
    for i, v in enumerate(value):
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < n_sites:
            problems.append(f"{where}[{i}]: site {v!r} does not exist (lattice has {n_sites} sites)")
            return None
        sites.append(v)
    if len(set(sites)) != len(sites):
        problems.append(f"{where}: duplicate sites")
        return None
    return tuple(sites)


def _build_lattice(cfg, problems):
    lt = cfg["lattice"]
    family = lt.get("family")
    spacing = _require_number(cfg, "lattice.spacing", problems, positive=True) or 1.0
    if family == "chain":
        n = lt.get("n")
        if not isinstance(n, int) or n < 1:
            problems.append("lattice.n: chain needs a positive integer site count")
            return None
        return lat.chain(n, spacing=spacing)
    if family == "grid":
        nx, ny = lt.get("nx"), lt.get("ny")
        if not (isinstance(nx, int) and isinstance(ny, int) and nx >= 1 and ny >= 1):
            problems.append("lattice.nx/ny: grid needs positive integer extents")
            return None
        return lat.grid2d(nx, ny, spacing=spacing)
    if family == "points":
        coords = lt.get("coords")
        if coords is None and "random" in lt:
            rnd = lt["random"]
            rng = np.random.default_rng(rnd.get("seed", 0))
            n = rnd.get("n", 0)
            box = rnd.get("box", 1.0)
            ell = rnd.get("ell", 2)
            if not isinstance(n, int) or n < 1:
                problems.append("lattice.random.n: needs a positive integer site count")
                return None
            coords = (rng.uniform(0.0, box, size=(n, ell))).tolist()
        if not isinstance(coords, list) or not coords:
            problems.append("lattice.coords: point lattice needs explicit coordinates")
            return None
        return lat.from_points(np.asarray(coords, dtype=float))
    problems.append(f"lattice.family: unknown family {family!r}")
    return None


def _build_decay(cfg, lattice_obj, problems):
    dc = cfg["decay"]
    exponent = dc.get("exponent")
    if exponent is None:
        # summable default: one more than the embedding dimension
        exponent = float(lattice_obj.embedding_dim + 1) if lattice_obj else 2.0
    rate = dc.get("rate", 0.0)
    if not isinstance(exponent, (int, float)) or exponent < 0:
        problems.append(f"decay.exponent: must be a nonnegative number, got {exponent!r}")
        return None
    if not isinstance(rate, (int, float)) or rate < 0:
        problems.append(f"decay.rate: must be a nonnegative number, got {rate!r}")
        return None
    if dc.get("family", "power") not in ("power", "exp-power"):
        problems.append(f"decay.family: unknown family {dc.get('family')!r}")
        return None
    return lat.DecayFunction(exponent=float(exponent), rate=float(rate))


def _per_site(value, n, where, problems, positive=True):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        arr = np.full(n, float(value))
    elif isinstance(value, list) and len(value) == n:
        arr = np.asarray(value, dtype=float)
    else:
        problems.append(f"{where}: expected a number or a list of {n} numbers")
        return None
    if positive:
        bad = np.nonzero(arr <= 0)[0]
        if bad.size:
            problems.append(f"{where}[{bad[0]}]: must be > 0, got {arr[bad[0]]}")
            return None
    return arr


def _build_model(cfg, lattice_obj, decay, problems):
    md = cfg["model"]
    dim = md.get("dim")
    if not isinstance(dim, int) or dim < 1:
        problems.append(f"model.dim: must be a positive integer, got {dim!r}")
        return None
    n = lattice_obj.n_sites
    masses = _per_site(md.get("mass"), n, "model.mass", problems)
    nus = _per_site(md.get("force_constant"), n, "model.force_constant", problems)
    pot = md["potential"]
    family = pot.get("family")
    if family not in FAMILIES:
        problems.append(f"model.potential.family: unknown family {family!r}")
        return None
    coupling = pot.get("coupling", 0.0)
    if not isinstance(coupling, (int, float)):
        problems.append(f"model.potential.coupling: expected a number, got {coupling!r}")
        return None
    radius = _require_number(cfg, "model.potential.radius", problems, positive=True)
    r_cut = pot.get("r_cut")
    if r_cut is not None and (not isinstance(r_cut, (int, float)) or r_cut <= 0):
        problems.append(f"model.potential.r_cut: must be > 0 or null, got {r_cut!r}")
        return None
    if masses is None or nus is None or radius is None:
        return None
    uniform = float(np.max(masses)) == float(np.min(masses)) and float(np.max(nus)) == float(np.min(nus))
    model = homogeneous_model(
        lattice_obj, dim, float(masses[0]) if uniform else 1.0,
        float(nus[0]) if uniform else 1.0, decay,
        family=family, coupling=float(coupling), radius=float(radius),
        r_cut=None if r_cut is None else float(r_cut),
    )
    if not uniform:
        model = LatticeModel(
            lattice=lattice_obj, dim=dim, masses=masses, force_constants=nus,
            potentials=model.potentials, decay=decay,
            r_cut=None if r_cut is None else float(r_cut),
            certificates=model.certificates,
        )
    return model


def _build_observable(spec, name, model, problems):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        problems.append(f"observables.{name}: expected a mapping")
        return None
    kind = spec.get("kind")
    n = model.lattice.n_sites
    where = f"observables.{name}"
    try:
        if kind == "gaussian-levee":
            support = _site_list(spec.get("support"), n, f"{where}.support", problems)
            width = spec.get("width", 1.0)
            if support is None:
                return None
            if not isinstance(width, (int, float)) or width <= 0:
                problems.append(f"{where}.width: must be > 0, got {width!r}")
                return None
            shape = (len(support), model.dim)
            cp = np.asarray(spec.get("center_p", np.zeros(shape)), dtype=float)
            cq = np.asarray(spec.get("center_q", np.zeros(shape)), dtype=float)
            return obs.GaussianLevee(support, model.dim, cp, cq, float(width))
        if kind == "resolvent":
            support = _site_list(spec.get("support"), n, f"{where}.support", problems)
            if support is None:
                return None
            lam = spec.get("lam")
            part = spec.get("part", "im")
            dp = np.asarray(spec.get("direction_p", np.zeros((len(support), model.dim))), dtype=float)
            dq_default = np.zeros((len(support), model.dim))
            dq_default[0, 0] = 1.0
            dq = np.asarray(spec.get("direction_q", dq_default), dtype=float)
            return obs.resolvent_observable(support, model.dim, dp, dq, lam, part)
        if kind == "coordinate-window":
            site = spec.get("site")
            sites = _site_list([site], n, f"{where}.site", problems)
            if sites is None:
                return None
            return obs.coordinate_window(
                site, model.dim, component=spec.get("component", 0),
                momentum=bool(spec.get("momentum", False)),
                center=spec.get("center", 0.0), width=spec.get("width", 1.0),
            )
    except (obs.ObservableError, TypeError, ValueError) as err:
        problems.append(f"{where}: {err}")
        return None
    problems.append(f"{where}.kind: unknown kind {kind!r}")
    return None


def preset_path(name: str) -> Path:
    ref = importlib.resources.files("osclat") / "configs" / f"{name}.yaml"
    return Path(str(ref))


def parse_config(path) -> ExperimentConfig:
    """Load, validate, and build a configuration; collects all violations."""
    if isinstance(path, str) and path in PRESETS:
        path = preset_path(path)
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ConfigError([f"not well-formed YAML: {err}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])
    problems = []
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    cfg = _merge_defaults(raw)

    lattice_obj = _build_lattice(cfg, problems)
    decay = _build_decay(cfg, lattice_obj, problems) if lattice_obj else None
    model = _build_model(cfg, lattice_obj, decay, problems) if decay else None

    _require_number(cfg, "dynamics.h", problems, positive=True)
    _require_number(cfg, "dynamics.t_max", problems, positive=True)
    n_times = cfg["dynamics"].get("n_times")
    if not isinstance(n_times, int) or n_times < 3 or n_times % 2 == 0:
        problems.append(f"dynamics.n_times: must be an odd integer >= 3, got {n_times!r}")
    if cfg["dynamics"].get("integrator") not in ("rk4", "leapfrog"):
        problems.append(f"dynamics.integrator: unknown integrator {cfg['dynamics'].get('integrator')!r}")
    for key, kwargs in (
        ("sampler.n_points", {"positive": True}),
        ("sampler.radius", {"positive": True}),
        ("sampler.refine_evals", {"nonnegative": True}),
    ):
        _require_number(cfg, key, problems, **kwargs)
    if not isinstance(cfg["sampler"].get("seed"), int):
        problems.append(f"sampler.seed: must be an integer, got {cfg['sampler'].get('seed')!r}")

    config = ExperimentConfig(raw=cfg, path=str(path))
    if model is not None:
        config.lattice = lattice_obj
        config.decay = decay
        config.model = model
        ob = cfg.get("observables") or {}
        config.observable_f = _build_observable(ob.get("f"), "f", model, problems)
        config.observable_g = _build_observable(ob.get("g"), "g", model, problems)
        if config.observable_f is not None and config.observable_g is not None:
            if set(config.observable_f.support) & set(config.observable_g.support):
                problems.append(
                    "observables: supports of f and g overlap; the bracket "
                    "experiment requires spatially separated supports"
                )
        exps = cfg.get("experiments") or {}
        if "envelope" in exps:
            pairs = exps["envelope"].get("pairs")
            if not isinstance(pairs, list) or not pairs:
                problems.append("experiments.envelope.pairs: expected a nonempty list of [site, seed] pairs")
            else:
                for i, pair in enumerate(pairs):
                    where = f"experiments.envelope.pairs[{i}]"
                    if not isinstance(pair, list) or len(pair) != 2:
                        problems.append(f"{where}: expected [site, seed]")
                        continue
                    if any(not isinstance(v, int) or isinstance(v, bool)
                           or not 0 <= v < lattice_obj.n_sites for v in pair):
                        problems.append(f"{where}: site does not exist "
                                        f"(lattice has {lattice_obj.n_sites} sites)")
                    elif pair[0] == pair[1]:
                        problems.append(f"{where}: pair must be off-diagonal")
        if "converge" in exps:
            center = exps["converge"].get("center", 0)
            _site_list([center], lattice_obj.n_sites, "experiments.converge.center", problems)
            radii = exps["converge"].get("radii")
            if not isinstance(radii, list) or len(radii) < 2 or any(
                not isinstance(r, (int, float)) or r <= 0 for r in radii
            ) or any(b <= a for a, b in zip(radii, radii[1:])):
                problems.append("experiments.converge.radii: expected a strictly increasing list of positive radii")

    if problems:
        raise ConfigError(problems)
    return config
