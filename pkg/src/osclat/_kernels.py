"""Hot integration kernels: numba-compiled loops with a pure-numpy fallback.

The fixed-step integrators below advance the Hamiltonian flow and, in the
variational variant, co-advance the four sensitivity block families
(dq/dq0, dp/dq0, dq/dp0, dp/dp0) driven by the curvature of the potential
energy refreshed at every stage.

Backend selection happens at import time: the numba path is used when numba
imports cleanly and the environment variable OSCLAT_DISABLE_NUMBA is unset
(or falsy).  Both backends implement the same stepping arithmetic and agree
to floating round-off; ``backend()`` reports which one is active.

The compiled path works on one flat state vector per system, laid out as

    [ p (n*d) | q (n*d) | qq | pq | qp | pp ]    (blocks n*nJ*d*d each)

which keeps every jitted function small; the public wrappers accept and
return shaped arrays.  Pair data is passed as flat arrays (local site
indices, an integer family code, amplitude, support radius).  Family codes:
0 zero, 1 bump, 2 smoothed cosine window.
"""

from __future__ import annotations

import math
import os

import numpy as np

_E = 2.718281828459045


def _numba_enabled() -> bool:
    flag = os.environ.get("OSCLAT_DISABLE_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_enabled()


def backend() -> str:
    return "numba" if USING_NUMBA else "numpy"


def _profile_scalar(kind, R, rho):
    """Radial profile P(rho) and derivatives for one pair; scalar arithmetic."""
    if kind == 0:
        return 0.0, 0.0, 0.0
    R2 = R * R
    s = 1.0 - rho / R2
    if s <= 0.0:
        return 0.0, 0.0, 0.0
    B = math.exp(-1.0 / s)
    dB = -B / (R2 * s * s)
    d2B = B * (1.0 - 2.0 * s) / (R2 * R2 * s * s * s * s)
    if kind == 1:
        return B, dB, d2B
    a = math.pi / (2.0 * R)
    z = 2.0 * a * math.sqrt(rho)
    if z < 1e-4:
        phi = 1.0 - z * z / 6.0
        psi = -1.0 / 3.0 + z * z / 30.0
    else:
        phi = math.sin(z) / z
        psi = (z * math.cos(z) - math.sin(z)) / (z * z * z)
    G = 0.5 * (1.0 + math.cos(z))
    dG = -(a * a) * phi
    d2G = -2.0 * a**4 * psi
    P = _E * G * B
    dP = _E * (dG * B + G * dB)
    d2P = _E * (d2G * B + 2.0 * dG * dB + G * d2B)
    return P, dP, d2P


def _rhs_flow_flat(y, dy, m, nu, pi, pj, kind, amp, rad, n, d):
    """Hamiltonian vector field on the flat layout [p | q]."""
    nd = n * d
    for k in range(n):
        for c in range(d):
            dy[nd + k * d + c] = y[k * d + c] / m[k]          # dq = p/m
            dy[k * d + c] = -nu[k] * y[nd + k * d + c]        # dp = -nu q
    for e in range(pi.shape[0]):
        i = pi[e]
        j = pj[e]
        rho = 0.0
        for c in range(d):
            diff = y[nd + i * d + c] - y[nd + j * d + c]
            rho += diff * diff
        _, dP, _ = _profile_scalar(kind[e], rad[e], rho)
        if dP != 0.0:
            for c in range(d):
                g = 2.0 * amp[e] * dP * (y[nd + i * d + c] - y[nd + j * d + c])
                dy[i * d + c] -= g
                dy[j * d + c] += g


def _rhs_var_flat(y, dy, m, nu, pi, pj, kind, amp, rad, n, d, nJ):
    """Flow field plus sensitivity-block field on the flat layout."""
    _rhs_flow_flat(y, dy, m, nu, pi, pj, kind, amp, rad, n, d)
    nd = n * d
    blk = n * nJ * d * d
    oqq = 2 * nd
    opq = oqq + blk
    oqp = opq + blk
    opp = oqp + blk
    for k in range(n):
        inv_m = 1.0 / m[k]
        nuk = nu[k]
        base = k * nJ * d * d
        for r in range(nJ * d * d):
            dy[oqq + base + r] = y[opq + base + r] * inv_m   # d(qq) = pq/m
            dy[oqp + base + r] = y[opp + base + r] * inv_m   # d(qp) = pp/m
            dy[opq + base + r] = -nuk * y[oqq + base + r]    # d(pq) = -nu qq - ...
            dy[opp + base + r] = -nuk * y[oqp + base + r]    # d(pp) = -nu qp - ...
    for e in range(pi.shape[0]):
        i = pi[e]
        j = pj[e]
        rho = 0.0
        for c in range(d):
            diff = y[nd + i * d + c] - y[nd + j * d + c]
            rho += diff * diff
        _, dP, d2P = _profile_scalar(kind[e], rad[e], rho)
        if dP == 0.0 and d2P == 0.0:
            continue
        # curvature block H = 2c dP I + 4c d2P x x^T at x = q_i - q_j;
        # the pair drives d(pq)_k -= H ((qq)_k - (qq)_other) and likewise qp.
        for a in range(d):
            xa = y[nd + i * d + a] - y[nd + j * d + a]
            for b in range(d):
                xb = y[nd + i * d + b] - y[nd + j * d + b]
                hab = 4.0 * amp[e] * d2P * xa * xb
                if a == b:
                    hab += 2.0 * amp[e] * dP
                if hab == 0.0:
                    continue
                for j_ in range(nJ):
                    ia = ((i * nJ + j_) * d + a) * d
                    ib = ((i * nJ + j_) * d + b) * d
                    jb = ((j * nJ + j_) * d + b) * d
                    ja = ((j * nJ + j_) * d + a) * d
                    for col in range(d):
                        gq = hab * (y[oqq + ib + col] - y[oqq + jb + col])
                        gz = hab * (y[oqp + ib + col] - y[oqp + jb + col])
                        dy[opq + ia + col] -= gq
                        dy[opq + ja + col] += gq
                        dy[opp + ia + col] -= gz
                        dy[opp + ja + col] += gz


def _drive_rk4_flow(y0, m, nu, pi, pj, kind, amp, rad, n, d, step, n_steps, store_every):
    L = y0.size
    out = np.empty((n_steps // store_every + 1, L))
    y = y0.copy()
    out[0] = y
    k1 = np.empty(L); k2 = np.empty(L); k3 = np.empty(L); k4 = np.empty(L)
    tmp = np.empty(L)
    node = 1
    for it in range(1, n_steps + 1):
        _rhs_flow_flat(y, k1, m, nu, pi, pj, kind, amp, rad, n, d)
        for r in range(L):
            tmp[r] = y[r] + 0.5 * step * k1[r]
        _rhs_flow_flat(tmp, k2, m, nu, pi, pj, kind, amp, rad, n, d)
        for r in range(L):
            tmp[r] = y[r] + 0.5 * step * k2[r]
        _rhs_flow_flat(tmp, k3, m, nu, pi, pj, kind, amp, rad, n, d)
        for r in range(L):
            tmp[r] = y[r] + step * k3[r]
        _rhs_flow_flat(tmp, k4, m, nu, pi, pj, kind, amp, rad, n, d)
        for r in range(L):
            y[r] += (step / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
        if it % store_every == 0:
            out[node] = y
            node += 1
    return out


def _drive_rk4_var(y0, m, nu, pi, pj, kind, amp, rad, n, d, nJ, step, n_steps, store_every):
    L = y0.size
    out = np.empty((n_steps // store_every + 1, L))
    y = y0.copy()
    out[0] = y
    k1 = np.empty(L); k2 = np.empty(L); k3 = np.empty(L); k4 = np.empty(L)
    tmp = np.empty(L)
    node = 1
    for it in range(1, n_steps + 1):
        _rhs_var_flat(y, k1, m, nu, pi, pj, kind, amp, rad, n, d, nJ)
        for r in range(L):
            tmp[r] = y[r] + 0.5 * step * k1[r]
        _rhs_var_flat(tmp, k2, m, nu, pi, pj, kind, amp, rad, n, d, nJ)
        for r in range(L):
            tmp[r] = y[r] + 0.5 * step * k2[r]
        _rhs_var_flat(tmp, k3, m, nu, pi, pj, kind, amp, rad, n, d, nJ)
        for r in range(L):
            tmp[r] = y[r] + step * k3[r]
        _rhs_var_flat(tmp, k4, m, nu, pi, pj, kind, amp, rad, n, d, nJ)
        for r in range(L):
            y[r] += (step / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
        if it % store_every == 0:
            out[node] = y
            node += 1
    return out


def _drive_leapfrog(y0, m, nu, pi, pj, kind, amp, rad, n, d, step, n_steps, store_every):
    L = y0.size
    nd = n * d
    out = np.empty((n_steps // store_every + 1, L))
    y = y0.copy()
    out[0] = y
    f = np.empty(L)
    node = 1
    for it in range(1, n_steps + 1):
        _rhs_flow_flat(y, f, m, nu, pi, pj, kind, amp, rad, n, d)
        for k in range(n):
            for c in range(d):
                y[k * d + c] += 0.5 * step * f[k * d + c]
        for k in range(n):
            for c in range(d):
                y[nd + k * d + c] += step * y[k * d + c] / m[k]
        _rhs_flow_flat(y, f, m, nu, pi, pj, kind, amp, rad, n, d)
        for k in range(n):
            for c in range(d):
                y[k * d + c] += 0.5 * step * f[k * d + c]
        if it % store_every == 0:
            out[node] = y
            node += 1
    return out


if USING_NUMBA:
    from numba import njit

    _profile_scalar = njit(cache=True, nogil=True)(_profile_scalar)
    _rhs_flow_flat = njit(cache=True, nogil=True)(_rhs_flow_flat)
    _rhs_var_flat = njit(cache=True, nogil=True)(_rhs_var_flat)
    _drive_rk4_flow = njit(cache=True, nogil=True)(_drive_rk4_flow)
    _drive_rk4_var = njit(cache=True, nogil=True)(_drive_rk4_var)
    _drive_leapfrog = njit(cache=True, nogil=True)(_drive_leapfrog)


def _pack_flow(p0, q0):
    return np.concatenate([p0.ravel(), q0.ravel()])


def _unpack_nodes(out, n, d):
    nd = n * d
    n_nodes = out.shape[0]
    P = out[:, :nd].reshape(n_nodes, n, d).copy()
    Q = out[:, nd : 2 * nd].reshape(n_nodes, n, d).copy()
    return P, Q


def flow_rk4(p0, q0, m, nu, pi, pj, kind, amp, rad, step, n_steps, store_every):
    n, d = p0.shape
    if USING_NUMBA:
        out = _drive_rk4_flow(_pack_flow(p0, q0), m, nu, pi, pj, kind, amp, rad,
                              n, d, step, n_steps, store_every)
        return _unpack_nodes(out, n, d)
    from . import _kernels_np
    return _kernels_np.flow_rk4(p0, q0, m, nu, pi, pj, kind, amp, rad, step, n_steps, store_every)


def flow_leapfrog(p0, q0, m, nu, pi, pj, kind, amp, rad, step, n_steps, store_every):
    n, d = p0.shape
    if USING_NUMBA:
        out = _drive_leapfrog(_pack_flow(p0, q0), m, nu, pi, pj, kind, amp, rad,
                              n, d, step, n_steps, store_every)
        return _unpack_nodes(out, n, d)
    from . import _kernels_np
    return _kernels_np.flow_leapfrog(p0, q0, m, nu, pi, pj, kind, amp, rad, step, n_steps, store_every)


def var_rk4(p0, q0, qq0, pq0, qp0, pp0, m, nu, pi, pj, kind, amp, rad,
            step, n_steps, store_every):
    n, d = p0.shape
    nJ = qq0.shape[1]
    if USING_NUMBA:
        y0 = np.concatenate([p0.ravel(), q0.ravel(), qq0.ravel(), pq0.ravel(),
                             qp0.ravel(), pp0.ravel()])
        out = _drive_rk4_var(y0, m, nu, pi, pj, kind, amp, rad,
                             n, d, nJ, step, n_steps, store_every)
        P, Q = _unpack_nodes(out, n, d)
        n_nodes = out.shape[0]
        nd = n * d
        blk = n * nJ * d * d
        bshape = (n_nodes, n, nJ, d, d)
        QQ = out[:, 2 * nd : 2 * nd + blk].reshape(bshape).copy()
        PQ = out[:, 2 * nd + blk : 2 * nd + 2 * blk].reshape(bshape).copy()
        QP = out[:, 2 * nd + 2 * blk : 2 * nd + 3 * blk].reshape(bshape).copy()
        PP = out[:, 2 * nd + 3 * blk :].reshape(bshape).copy()
        return P, Q, QQ, PQ, QP, PP
    from . import _kernels_np
    return _kernels_np.var_rk4(p0, q0, qq0, pq0, qp0, pp0, m, nu, pi, pj, kind, amp, rad,
                               step, n_steps, store_every)
