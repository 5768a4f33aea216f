"""Acceptance suite: one test per criterion, each printing its measured line.

Run with ``pytest -v -rA tests/test_acceptance.py`` to see every criterion's
measured values alongside its pass/fail status.
"""

import math
import time

import numpy as np
import pytest

from osclat import bounds as bnd
from osclat import dynamics as dyn
from osclat import experiments as exp
from osclat import lattice as lat
from osclat import observables as obs
from osclat.config import parse_config
from osclat.model import PhaseState, homogeneous_model
from oracles import brute_convolution_constant, brute_decay_norm

F2 = lat.power_decay(2.0)


@pytest.fixture(scope="module")
def chain8():
    return parse_config("chain-8")


@pytest.fixture(scope="module")
def chain8_state(chain8):
    sites = chain8.model.lattice.sites
    spec = obs.SamplerSpec(n_points=1, radius=5.0, seed=101, refine_evals=0)
    return exp.sample_states(sites, 1, spec)[0]


def report(criterion, status, detail):
    print(f"[criterion {criterion}] {status}: {detail}")


def test_criterion_1_jacobian_oracle_equivalence(chain8, chain8_state):
    """Stored sensitivity blocks vs central differences of the flow.

    Tolerance 1e-4 relative with a 1e-8 absolute floor: the differencing
    oracle itself carries ~1e-9 noise (eps = 1e-5 at double precision), so
    entries below the floor are compared absolutely.
    """
    started = time.monotonic()
    model = chain8.model
    sites = model.lattice.sites
    h, eps = 1e-3, 1e-5
    state = chain8_state
    _, blocks = dyn.integrate_variational(model, state, sites, 2.0, h=h, store_every=500)
    nodes = {1: 0.5, 2: 1.0, 4: 2.0}
    worst = 0.0
    n = len(sites)
    for j in range(n):
        for momentum in (False, True):
            up = state.flat().copy()
            dn = state.flat().copy()
            off = j if momentum else n + j
            up[off] += eps
            dn[off] -= eps
            tp = dyn.integrate_flow(model, PhaseState.from_flat(sites, 1, up), 2.0, h=h, store_every=500)
            tm = dyn.integrate_flow(model, PhaseState.from_flat(sites, 1, dn), 2.0, h=h, store_every=500)
            for node in nodes:
                dq = (tp.q[node] - tm.q[node]) / (2 * eps)
                dp = (tp.p[node] - tm.p[node]) / (2 * eps)
                qfam = blocks.qp if momentum else blocks.qq
                pfam = blocks.pp if momentum else blocks.pq
                for k in range(n):
                    for got, want in ((qfam[node, k, j, 0, 0], dq[k, 0]),
                                      (pfam[node, k, j, 0, 0], dp[k, 0])):
                        excess = abs(got - want) - (1e-4 * abs(want) + 1e-8)
                        worst = max(worst, excess)
    elapsed = time.monotonic() - started
    report(1, "PASS" if worst <= 0 and elapsed <= 60 else "FAIL",
           f"worst tolerance excess {worst:.3e}, runtime {elapsed:.1f}s (limit 60s)")
    assert worst <= 0.0
    assert elapsed <= 60.0


def test_criterion_2_envelope_domination(chain8):
    """All off-diagonal block norms below their closed-form envelopes."""
    started = time.monotonic()
    model = chain8.model
    sites = model.lattice.sites
    pairs = [(j, k) for j in sites for k in sites if j != k]
    spec = obs.SamplerSpec(n_points=512, radius=5.0, seed=20250801, refine_evals=0)
    rep = exp.run_envelope_check(model, sites, pairs, 2.0, 10, spec, h=1e-3, workers=4)
    elapsed = time.monotonic() - started
    worst = min(rep.worst_margin_by_kind.values())
    report(2, "PASS" if rep.violations == 0 and elapsed <= 300 else "FAIL",
           f"{rep.violations} violations over {len(pairs)} pairs x 4 kinds x 11 times, "
           f"worst margin {worst:.3e}, runtime {elapsed:.1f}s (limit 300s)")
    assert rep.violations == 0
    assert elapsed <= 300.0


def test_criterion_3_bracket_inequality(chain8):
    """Sampled bracket supremum below the hyperbolic bound on [-2, 2]."""
    started = time.monotonic()
    rep = exp.run_lr_experiment(
        chain8.model, chain8.model.lattice.sites,
        chain8.observable_f, chain8.observable_g,
        2.0, 21, chain8.sampler_spec, h=1e-3, workers=4,
    )
    elapsed = time.monotonic() - started
    mid = len(rep.times) // 2
    ok = rep.passed and rep.lhs[mid] <= 1e-12 and elapsed <= 600
    report(3, "PASS" if ok else "FAIL",
           f"margins >= 0 at all 21 times: {rep.passed}, lhs(0) = {rep.lhs[mid]:.1e}, "
           f"max lhs {np.max(rep.lhs):.3e}, runtime {elapsed:.1f}s (limit 600s)")
    assert rep.times[mid] == 0.0
    assert rep.lhs[mid] <= 1e-12
    assert rep.passed
    assert elapsed <= 600.0


def test_criterion_4_onset_monotonicity(chain8):
    """First-response time grows with the separation of the supports."""
    model = chain8.model
    f = chain8.observable_f
    onsets = {}
    for y in (3, 5, 7):
        g = obs.gaussian_levee((y,), 1, width=1.0)
        rep = exp.run_lr_experiment(
            model, model.lattice.sites, f, g, 3.0, 61,
            obs.SamplerSpec(n_points=64, radius=5.0, seed=20250801, refine_evals=0),
            h=1e-3, workers=4,
        )
        onsets[y - 1] = rep.onset
    values = [onsets[d] for d in sorted(onsets)]
    ok = all(b >= a for a, b in zip(values, values[1:]))
    report(4, "PASS" if ok else "FAIL",
           "onsets by distance: " + ", ".join(f"d={d}: t={onsets[d]:.2f}" for d in sorted(onsets)))
    assert ok


@pytest.fixture(scope="module")
def convergence_setup():
    chain = lat.chain(17)
    model = homogeneous_model(chain, 1, 1.0, 1.0, F2, family="bump",
                              coupling=2.0, radius=1.5, r_cut=2.0)
    f = obs.gaussian_levee((0,), 1, width=1.0)
    volumes = [lat.ball(chain, 0, r) for r in (2, 4, 8, 16)]
    return chain, model, f, volumes


def test_criterion_5_volume_convergence(convergence_setup):
    """Nested-volume differences strictly decreasing and below the tail bound."""
    chain, model, f, volumes = convergence_setup
    spec = obs.SamplerSpec(n_points=64, radius=3.0, seed=20250801, refine_evals=0)
    rep = exp.run_convergence_experiment(model, volumes, f, 1.0, 5, spec, h=1e-3, workers=4)
    control_model = homogeneous_model(chain, 1, 1.0, 1.0, F2)
    control = exp.run_convergence_experiment(control_model, volumes, f, 1.0, 5, spec, h=1e-3)
    ok = (rep.strictly_decreasing and rep.below_bound
          and float(np.max(control.diffs)) <= 1e-12)
    report(5, "PASS" if ok else "FAIL",
           f"shell sups {[f'{d:.2e}' for d in rep.max_diffs]} strictly decreasing: "
           f"{rep.strictly_decreasing}, below 10x tail bound: {rep.below_bound}, "
           f"interaction-free control max {float(np.max(control.diffs)):.1e}")
    assert rep.strictly_decreasing
    assert rep.below_bound
    assert float(np.max(control.diffs)) <= 1e-12


def test_criterion_6_reconstruction_identity(chain8):
    """Interaction-picture reconstruction discrepancy at 128 sampled states."""
    rep = exp.run_interaction_picture_check(
        chain8.model, chain8.model.lattice.sites, chain8.observable_f,
        (0.5, 1.0),
        obs.SamplerSpec(n_points=128, radius=5.0, seed=20250801, refine_evals=0),
        h=1e-3, workers=4, tolerance=1e-6,
    )
    worst = float(np.max(rep.discrepancy))
    report(6, "PASS" if rep.passed else "FAIL",
           f"max discrepancy {worst:.2e} at t in (0.5, 1.0), tolerance 1e-6")
    assert rep.passed


def test_criterion_7_series_consistency():
    """Order-40 partial sums reach the closed forms to 1e-12 relative."""
    worst = 0.0
    cases = [(1.0, 5.0), (4.0, 2.5), (0.25, 10.0), (6.25, 2.0), (2.0, 0.7), (25.0, 1.0)]
    for c0, t in cases:
        assert math.sqrt(c0) * abs(t) <= 5.0 + 1e-12
        for kind in bnd.BLOCK_KINDS:
            env = bnd.jacobian_envelope(c0, 1.0, t, kind)
            s40 = bnd.dyson_partial_sums(c0, 1.0, t, 40, kind)[-1]
            worst = max(worst, abs(s40 - env) / env)
    report(7, "PASS" if worst <= 1e-12 else "FAIL",
           f"worst relative gap |S40 - closed|/closed = {worst:.2e} over "
           f"{len(cases)} (c0, t) cases x 4 families")
    assert worst <= 1e-12


def test_criterion_8_structural_numerics(chain8, chain8_state):
    """Energy drift, canonical-form defect, and unit Jacobian determinant."""
    model = chain8.model
    long_traj = dyn.integrate_flow(model, chain8_state, 10.0, h=1e-3, store_every=100)
    drift = long_traj.energy_drift
    _, blocks = dyn.integrate_variational(model, chain8_state, model.lattice.sites,
                                          2.0, h=1e-3, store_every=2000)
    defect = dyn.symplectic_defect(blocks)
    det_gap = abs(dyn.jacobian_determinant(blocks) - 1.0)
    ok = drift <= 1e-6 and defect <= 1e-6 and det_gap <= 1e-6
    report(8, "PASS" if ok else "FAIL",
           f"energy drift {drift:.2e} (<= 1e-6), canonical defect {defect:.2e} "
           f"(<= 1e-6), |det - 1| {det_gap:.2e} (<= 1e-6)")
    assert drift <= 1e-6
    assert defect <= 1e-6
    assert det_gap <= 1e-6


def test_criterion_9a_decay_norm_hand_checks():
    """Row-sum norm values against the plain-loop oracle."""
    c5 = lat.chain(5)
    got_center = lat.decay_norm(c5, lat.exp_power_decay(0.0, math.log(2.0)), c5.sites)
    oracle = brute_decay_norm(lambda a, b: abs(a - b),
                              lambda r: 2.0 ** (-r), range(5))
    c2 = lat.chain(2)
    got_two = lat.decay_norm(c2, lat.exp_power_decay(0.0, math.log(2.0)), c2.sites)
    got_one = lat.decay_norm(c5, lat.exp_power_decay(0.0, math.log(2.0)), (0,))
    ok = (got_center == pytest.approx(oracle) and got_center == pytest.approx(2.5)
          and got_two == pytest.approx(1.5) and got_one == pytest.approx(1.0))
    report("9a", "PASS" if ok else "FAIL",
           f"row-sum norms: center-of-five {got_center} (oracle {oracle}), "
           f"two-site {got_two}, single {got_one}")
    assert got_center == pytest.approx(2.5)
    assert got_center == pytest.approx(oracle, rel=1e-14)
    assert got_two == pytest.approx(1.5)
    assert got_one == pytest.approx(1.0)


@pytest.mark.xfail(
    strict=True,
    reason="stated 5% stability is arithmetically unattainable for (1+r)^-2: "
    "the worst-pair convolution ratio converges O(1/N) toward 2 pi^2 / 3 - 2 "
    "~= 4.580 and moves 11.7% between these truncations; see decisions ledger",
)
def test_criterion_9b_convolution_truncation_stability():
    """Convolution constant drift under doubling, at the stated 5% tolerance."""
    F = lat.power_decay(2.0)
    c9 = lat.chain(9)    # sites 0..8: chain of length 8
    c17 = lat.chain(17)  # sites 0..16: chain of length 16
    v9 = lat.convolution_constant(c9, F, c9.sites)
    v17 = lat.convolution_constant(c17, F, c17.sites)
    assert v9 == pytest.approx(
        brute_convolution_constant(lambda a, b: abs(a - b), F, range(9)), rel=1e-13
    )
    drift = abs(v17 - v9) / v9
    report("9b", "PASS" if drift <= 0.05 else "FAIL (expected, spec defect)",
           f"convolution constant {v9:.4f} -> {v17:.4f}, drift {drift:.2%} vs stated 5%")
    assert drift <= 0.05
