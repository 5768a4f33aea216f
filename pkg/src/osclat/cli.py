"""Command-line entry point: config in, reports and curves out.

Subcommands
    validate        parse the config, check model hypotheses, print constants
    lr              evolved-bracket inequality experiment
    envelope        sensitivity-block envelope domination experiment
    converge        nested-volume convergence plus reconstruction identity
    dump-constants  write every bound ingredient for external re-evaluation

Reports are JSON (schema-versioned, no timestamps: byte-identical for a
fixed config and seed); curves are CSV.  Run metadata (timestamp, backend,
versions) goes to a separate metadata.json.  Exit status is 0 exactly when
every verdict of the invoked subcommand passes.

Flags may be overridden from the environment with the OSCLAT_ prefix
(OSCLAT_SEED, OSCLAT_WORKERS, OSCLAT_OUT) for CI pipelines.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, bounds, dynamics, experiments, lattice
from ._kernels import backend
from .config import PRESETS, ConfigError, parse_config
from .model import validate_assumptions


def _env_override(args):
    if args.seed is None and "OSCLAT_SEED" in os.environ:
        args.seed = int(os.environ["OSCLAT_SEED"])
    if args.workers is None and "OSCLAT_WORKERS" in os.environ:
        args.workers = int(os.environ["OSCLAT_WORKERS"])
    if args.out is None and "OSCLAT_OUT" in os.environ:
        args.out = os.environ["OSCLAT_OUT"]
    if args.out is None:
        args.out = "out"
    if args.workers is None:
        args.workers = os.cpu_count() or 1
    return args


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_metadata(out: Path, cfg, args):
    _write_json(
        out / "metadata.json",
        {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "package_version": __version__,
            "kernel_backend": backend(),
            "config_path": cfg.path,
            "workers": args.workers,
            "seed_override": args.seed,
        },
    )


def _print_constants(bc: bounds.BoundConstants):
    d = bc.as_dict()
    print("bound constants:")
    for key in ("inv_mass_sup", "stiffness_sup", "dim", "deriv_rate", "coupling_decay_ratio",
                "decay_norm", "conv_constant", "c0"):
        print(f"  {key:>14} = {d[key]:.10g}")


def _dump_reference(cfg, args, out: Path):
    """Reference trajectory and block dump from the first sampled state."""
    from .experiments import sample_states

    model = cfg.model
    volume = model.lattice.sites
    spec = cfg.sampler_with(n_points=1, seed=args.seed)
    state = sample_states(volume, model.dim, spec)[0]
    dy = cfg.dynamics
    seeds = cfg.observable_g.support if cfg.observable_g is not None else (volume[0],)
    traj, blocks = dynamics.integrate_variational(
        model, state, seeds, dy["t_max"], h=dy["h"],
        store_every=max(1, int(round(dy["t_max"] / dy["h"] / 50))),
    )
    _write_csv(out / "trajectory.csv", ("t", "site", "component", "value"),
               dynamics.trajectory_rows(traj))
    _write_csv(out / "jacobian.csv", ("t", "site", "component", "value"),
               dynamics.block_rows(blocks))


def cmd_validate(cfg, args, out: Path) -> int:
    report = validate_assumptions(cfg.model)
    print(f"config: {cfg.path}")
    print("assumption report:")
    for line in report.summary_lines():
        print(line)
    if not report.all_passed:
        print("verdict: FAIL")
        return 1
    bc = bounds.compute_constants(cfg.model)
    _print_constants(bc)
    print("verdict: pass")
    return 0


def cmd_dump_constants(cfg, args, out: Path) -> int:
    bc = bounds.compute_constants(cfg.model)
    dy = cfg.dynamics
    payload = {
        "schema_version": 1,
        "constants": bc.as_dict(),
        "times": experiments.symmetric_grid(dy["t_max"], dy["n_times"]).tolist(),
    }
    if cfg.observable_f is not None and cfg.observable_g is not None:
        payload["norm_f"] = cfg.observable_f.c1_norm
        payload["norm_g"] = cfg.observable_g.c1_norm
        payload["weight"] = lattice.interaction_weight(
            cfg.lattice, cfg.model.decay, cfg.observable_f.support, cfg.observable_g.support
        )
    _write_json(out / "constants.json", payload)
    _write_metadata(out, cfg, args)
    _print_constants(bc)
    print(f"wrote {out / 'constants.json'}")
    return 0


def cmd_lr(cfg, args, out: Path) -> int:
    if cfg.observable_f is None or cfg.observable_g is None:
        raise ConfigError(["observables.f and observables.g are required for the lr experiment"])
    dy = cfg.dynamics
    ex = cfg.experiment("lr")
    spec = cfg.sampler_with(n_points=ex.get("n_points"), seed=args.seed,
                            refine_evals=ex.get("refine_evals"))
    report = experiments.run_lr_experiment(
        cfg.model, cfg.lattice.sites, cfg.observable_f, cfg.observable_g,
        dy["t_max"], dy["n_times"], spec, h=dy["h"], workers=args.workers,
        lhs_scale=cfg.lhs_scale,
    )
    _write_json(out / "lr_report.json", report.as_dict())
    _write_csv(out / "lr_curves.csv",
               ("t", "lhs_measured", "rhs_sinh", "rhs_exp", "rhs_corollary_best_mu"),
               report.curve_rows())
    _write_metadata(out, cfg, args)
    if args.dump:
        _dump_reference(cfg, args, out)
    bc = report.constants
    print(f"bracket inequality on {cfg.path}")
    print(f"  supports: f on {list(report.support_f)}, g on {list(report.support_g)}"
          f" (distance {report.distance:g})")
    print(f"  c0 = {bc['c0']:.6g}, weight D = {report.weight:.6g},"
          f" |f|_C1 = {report.norm_f:.6g}, |g|_C1 = {report.norm_g:.6g}")
    print(f"  max measured lhs = {float(np.max(report.lhs)):.6g}")
    print(f"  worst margin (rhs_sinh - lhs) = {float(np.min(report.margins)):.6g}")
    print(f"  onset time = {report.onset:g}")
    print(f"  verdict: {'pass' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_envelope(cfg, args, out: Path) -> int:
    ex = cfg.experiment("envelope")
    if not ex:
        raise ConfigError(["experiments.envelope section is required for the envelope experiment"])
    spec = cfg.sampler_with(n_points=ex.get("n_points"), seed=args.seed,
                            refine_evals=ex.get("refine_evals", 0))
    report = experiments.run_envelope_check(
        cfg.model, cfg.lattice.sites, ex["pairs"], ex.get("t_max", cfg.dynamics["t_max"]),
        ex.get("n_times", 10), spec, h=cfg.dynamics["h"], workers=args.workers,
    )
    _write_json(out / "envelope_report.json", report.as_dict())
    _write_csv(out / "envelope_curves.csv",
               ("t", "site", "seed", "kind", "measured", "envelope"),
               report.curve_rows())
    _write_metadata(out, cfg, args)
    print(f"envelope domination on {cfg.path}")
    print(f"  pairs: {[list(p) for p in report.pairs]}")
    print(f"  violations: {report.violations}")
    for kind, margin in report.worst_margin_by_kind.items():
        print(f"  worst margin {kind}: {margin:.6g}")
    print(f"  verdict: {'pass' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_converge(cfg, args, out: Path) -> int:
    ex = cfg.experiment("converge")
    rc = cfg.experiment("reconstruct")
    if not ex and not rc:
        raise ConfigError(["experiments.converge or experiments.reconstruct section is required"])
    status = 0
    if ex:
        center = ex.get("center", 0)
        volumes = [lattice.ball(cfg.lattice, center, r) for r in ex["radii"]]
        spec = cfg.sampler_with(n_points=ex.get("n_points"), seed=args.seed,
                                refine_evals=ex.get("refine_evals", 0))
        f = cfg.observable_f
        report = experiments.run_convergence_experiment(
            cfg.model, volumes, f, ex.get("t_max", 1.0), ex.get("n_times", 5),
            spec, h=cfg.dynamics["h"], workers=args.workers,
        )
        _write_json(out / "convergence_report.json", report.as_dict())
        _write_csv(out / "convergence_curves.csv",
                   ("pair", "t", "sampled_diff", "tail_proxy", "bound"),
                   report.curve_rows())
        print(f"volume convergence on {cfg.path}")
        print(f"  radii -> volume sizes: {[len(v) for v in report.volumes]}")
        print(f"  max diffs per shell: {[f'{d:.3e}' for d in report.max_diffs]}")
        print(f"  strictly decreasing: {report.strictly_decreasing},"
              f" below bound: {report.below_bound}")
        print(f"  verdict: {'pass' if report.passed else 'FAIL'}")
        status |= 0 if report.passed else 1
    if rc:
        spec = cfg.sampler_with(n_points=rc.get("n_points"), seed=args.seed, refine_evals=0)
        rep = experiments.run_interaction_picture_check(
            cfg.model, cfg.lattice.sites, cfg.observable_f, rc.get("t_values", [0.5, 1.0]),
            spec, h=cfg.dynamics["h"], workers=args.workers,
            tolerance=rc.get("tolerance", 1e-6),
        )
        _write_json(out / "reconstruction_report.json", rep.as_dict())
        print("reconstruction identity:")
        print(f"  max discrepancy: {float(np.max(rep.discrepancy)):.3e}"
              f" (tolerance {rep.tolerance:g})")
        print(f"  verdict: {'pass' if rep.passed else 'FAIL'}")
        status |= 0 if rep.passed else 1
    _write_metadata(out, cfg, args)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osclat",
        description="Oscillator-lattice propagation and convergence experiments.",
    )
    parser.add_argument("command",
                        choices=("validate", "lr", "envelope", "converge", "dump-constants"))
    parser.add_argument("--config", required=True,
                        help=f"config file path or preset name ({', '.join(PRESETS)})")
    parser.add_argument("--out", default=None, help="output directory (default: out)")
    parser.add_argument("--seed", type=int, default=None, help="override the sampler seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: available parallelism)")
    parser.add_argument("--dump", action="store_true",
                        help="dump a reference trajectory and its blocks as CSV")
    return parser


_COMMANDS = {
    "validate": cmd_validate,
    "lr": cmd_lr,
    "envelope": cmd_envelope,
    "converge": cmd_converge,
    "dump-constants": cmd_dump_constants,
}


def main(argv=None) -> int:
    args = _env_override(build_parser().parse_args(argv))
    try:
        cfg = parse_config(args.config)
        return _COMMANDS[args.command](cfg, args, Path(args.out))
    except ConfigError as err:
        print(err, file=sys.stderr)
        return 2
    except (experiments.ExperimentError, bounds.BoundsError, dynamics.IntegrationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
