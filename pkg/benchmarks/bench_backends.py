#!/usr/bin/env python3
"""Time the integration kernels under the compiled and fallback backends.

Runs the flow and flow-plus-blocks drivers on a few chain sizes in fresh
subprocesses (backend selection happens at import time), checks that the two
backends agree numerically, and prints a timing table.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from osclat import lattice as lat
from osclat import dynamics as dyn
from osclat._kernels import backend
from osclat.model import PhaseState, homogeneous_model

n, repeats = int(sys.argv[1]), int(sys.argv[2])
model = homogeneous_model(
    lat.chain(n), 1, 1.0, 1.0, lat.power_decay(2.0),
    family="bump", coupling=0.8, radius=1.5, r_cut=2.0,
)
rng = np.random.default_rng(0)
s0 = PhaseState(model.lattice.sites,
                rng.normal(scale=0.4, size=(n, 1)),
                rng.normal(scale=0.4, size=(n, 1)))

# warm-up triggers compilation on the jitted path
dyn.integrate_flow(model, s0, 0.01, h=1e-3)
dyn.integrate_variational(model, s0, s0.sites[:1], 0.01, h=1e-3)

t0 = time.perf_counter()
for _ in range(repeats):
    traj = dyn.integrate_flow(model, s0, 2.0, h=1e-3, store_every=2000)
flow_s = (time.perf_counter() - t0) / repeats

t0 = time.perf_counter()
for _ in range(repeats):
    traj2, blocks = dyn.integrate_variational(model, s0, s0.sites, 2.0, h=1e-3,
                                              store_every=2000)
var_s = (time.perf_counter() - t0) / repeats

print(json.dumps({
    "backend": backend(),
    "flow_s": flow_s,
    "var_s": var_s,
    "checksum_q": float(np.sum(traj.q[-1])),
    "checksum_qq": float(np.sum(blocks.qq[-1])),
}))
"""


def run_case(n_sites, repeats, disable_numba):
    env = dict(os.environ)
    env["OSCLAT_DISABLE_NUMBA"] = "1" if disable_numba else ""
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(n_sites), str(repeats)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.splitlines()[-1])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"{'sites':>6} {'kernel':>18} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>9}")
    for n in (4, 8, 16, 32):
        fast = run_case(n, args.repeats, disable_numba=False)
        slow = run_case(n, args.repeats, disable_numba=True)
        for key, label in (("flow_s", "flow rk4"), ("var_s", "flow+blocks rk4")):
            ratio = slow[key] / fast[key]
            print(f"{n:>6} {label:>18} {fast[key] * 1e3:>12.2f} {slow[key] * 1e3:>12.2f} {ratio:>8.1f}x")
        for check in ("checksum_q", "checksum_qq"):
            rel = abs(fast[check] - slow[check]) / max(1.0, abs(fast[check]))
            if rel > 1e-12:
                print(f"  WARNING: backend mismatch on {check}: {rel:.2e}")
    print(f"(averaged over {args.repeats} runs; T=2, h=1e-3, full seed set for blocks)")


if __name__ == "__main__":
    main()
