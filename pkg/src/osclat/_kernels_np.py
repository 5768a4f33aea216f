"""Vectorized numpy fallback for the integration kernels.

Same signatures and stepping arithmetic as the compiled path in _kernels;
selected when numba is unavailable or disabled via OSCLAT_DISABLE_NUMBA.
Divergent trajectories are allowed to overflow silently here; the drivers'
callers check finiteness and report the failure.
"""

from __future__ import annotations

import functools
import math

import numpy as np


def _overflow_tolerant(fn):
    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)

    return wrapped


def _profiles(kind, rad, rho):
    """Per-pair radial profile derivatives (dP, d2P), vectorized over pairs."""
    rho = np.asarray(rho, dtype=float)
    dP = np.zeros_like(rho)
    d2P = np.zeros_like(rho)
    R2 = rad * rad
    s = 1.0 - rho / R2
    inside = (s > 0.0) & (kind != 0)
    if not np.any(inside):
        return dP, d2P
    si = s[inside]
    R2i = R2[inside]
    B = np.exp(-1.0 / si)
    dB = -B / (R2i * si * si)
    d2B = B * (1.0 - 2.0 * si) / (R2i * R2i * si**4)
    ki = kind[inside]
    dPi = np.where(ki == 1, dB, 0.0)
    d2Pi = np.where(ki == 1, d2B, 0.0)
    cos_sel = ki == 2
    if np.any(cos_sel):
        Ri = rad[inside][cos_sel]
        a = math.pi / (2.0 * Ri)
        z = 2.0 * a * np.sqrt(rho[inside][cos_sel])
        phi = np.sinc(z / np.pi)
        small = z < 1e-4
        psi = np.empty_like(z)
        psi[small] = -1.0 / 3.0 + z[small] ** 2 / 30.0
        zb = z[~small]
        psi[~small] = (zb * np.cos(zb) - np.sin(zb)) / zb**3
        G = 0.5 * (1.0 + np.cos(z))
        dG = -(a * a) * phi
        d2G = -2.0 * a**4 * psi
        Bc = B[cos_sel]
        dBc = dB[cos_sel]
        d2Bc = d2B[cos_sel]
        dPi[cos_sel] = math.e * (dG * Bc + G * dBc)
        d2Pi[cos_sel] = math.e * (d2G * Bc + 2.0 * dG * dBc + G * d2Bc)
    dP[inside] = dPi
    d2P[inside] = d2Pi
    return dP, d2P


def _rhs_flow(p, q, m, nu, pi, pj, kind, amp, rad):
    dq = p / m[:, None]
    dp = -nu[:, None] * q
    if pi.size:
        diff = q[pi] - q[pj]
        rho = np.sum(diff * diff, axis=1)
        dP, _ = _profiles(kind, rad, rho)
        g = (2.0 * amp * dP)[:, None] * diff
        np.subtract.at(dp, pi, g)
        np.add.at(dp, pj, g)
    return dp, dq


def _rhs_var(p, q, bqq, bpq, bqp, bpp, m, nu, pi, pj, kind, amp, rad):
    dp, dq = _rhs_flow(p, q, m, nu, pi, pj, kind, amp, rad)
    dqq = bpq / m[:, None, None, None]
    dqp = bpp / m[:, None, None, None]
    dpq = -nu[:, None, None, None] * bqq
    dpp = -nu[:, None, None, None] * bqp
    if pi.size:
        diff = q[pi] - q[pj]
        rho = np.sum(diff * diff, axis=1)
        dP, d2P = _profiles(kind, rad, rho)
        d = q.shape[1]
        eye = np.eye(d)
        H = (2.0 * amp * dP)[:, None, None] * eye + (4.0 * amp * d2P)[:, None, None] * (
            diff[:, :, None] * diff[:, None, :]
        )
        for e in range(pi.shape[0]):
            i, j = pi[e], pj[e]
            He = H[e]
            gq = np.einsum("ab,jbc->jac", He, bqq[i] - bqq[j])
            gz = np.einsum("ab,jbc->jac", He, bqp[i] - bqp[j])
            dpq[i] -= gq
            dpq[j] += gq
            dpp[i] -= gz
            dpp[j] += gz
    return dp, dq, dqq, dpq, dqp, dpp


@_overflow_tolerant
def flow_rk4(p0, q0, m, nu, pi, pj, kind, amp, rad, step, n_steps, store_every):
    n, d = p0.shape
    n_nodes = n_steps // store_every + 1
    P = np.empty((n_nodes, n, d))
    Q = np.empty((n_nodes, n, d))
    p, q = p0.copy(), q0.copy()
    P[0], Q[0] = p, q
    node = 1
    for it in range(1, n_steps + 1):
        k1p, k1q = _rhs_flow(p, q, m, nu, pi, pj, kind, amp, rad)
        k2p, k2q = _rhs_flow(p + 0.5 * step * k1p, q + 0.5 * step * k1q, m, nu, pi, pj, kind, amp, rad)
        k3p, k3q = _rhs_flow(p + 0.5 * step * k2p, q + 0.5 * step * k2q, m, nu, pi, pj, kind, amp, rad)
        k4p, k4q = _rhs_flow(p + step * k3p, q + step * k3q, m, nu, pi, pj, kind, amp, rad)
        p = p + (step / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q = q + (step / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if it % store_every == 0:
            P[node], Q[node] = p, q
            node += 1
    return P, Q


@_overflow_tolerant
def flow_leapfrog(p0, q0, m, nu, pi, pj, kind, amp, rad, step, n_steps, store_every):
    n, d = p0.shape
    n_nodes = n_steps // store_every + 1
    P = np.empty((n_nodes, n, d))
    Q = np.empty((n_nodes, n, d))
    p, q = p0.copy(), q0.copy()
    P[0], Q[0] = p, q
    node = 1
    for it in range(1, n_steps + 1):
        fp, _ = _rhs_flow(p, q, m, nu, pi, pj, kind, amp, rad)
        p = p + 0.5 * step * fp
        q = q + step * p / m[:, None]
        fp, _ = _rhs_flow(p, q, m, nu, pi, pj, kind, amp, rad)
        p = p + 0.5 * step * fp
        if it % store_every == 0:
            P[node], Q[node] = p, q
            node += 1
    return P, Q


@_overflow_tolerant
def var_rk4(p0, q0, qq0, pq0, qp0, pp0, m, nu, pi, pj, kind, amp, rad,
            step, n_steps, store_every):
    n, d = p0.shape
    nJ = qq0.shape[1]
    n_nodes = n_steps // store_every + 1
    P = np.empty((n_nodes, n, d))
    Q = np.empty((n_nodes, n, d))
    QQ = np.empty((n_nodes, n, nJ, d, d))
    PQ = np.empty((n_nodes, n, nJ, d, d))
    QP = np.empty((n_nodes, n, nJ, d, d))
    PP = np.empty((n_nodes, n, nJ, d, d))
    p, q = p0.copy(), q0.copy()
    qq, pq, qp, pp = qq0.copy(), pq0.copy(), qp0.copy(), pp0.copy()
    P[0], Q[0] = p, q
    QQ[0], PQ[0], QP[0], PP[0] = qq, pq, qp, pp
    node = 1
    for it in range(1, n_steps + 1):
        k1 = _rhs_var(p, q, qq, pq, qp, pp, m, nu, pi, pj, kind, amp, rad)
        k2 = _rhs_var(p + 0.5 * step * k1[0], q + 0.5 * step * k1[1],
                      qq + 0.5 * step * k1[2], pq + 0.5 * step * k1[3],
                      qp + 0.5 * step * k1[4], pp + 0.5 * step * k1[5],
                      m, nu, pi, pj, kind, amp, rad)
        k3 = _rhs_var(p + 0.5 * step * k2[0], q + 0.5 * step * k2[1],
                      qq + 0.5 * step * k2[2], pq + 0.5 * step * k2[3],
                      qp + 0.5 * step * k2[4], pp + 0.5 * step * k2[5],
                      m, nu, pi, pj, kind, amp, rad)
        k4 = _rhs_var(p + step * k3[0], q + step * k3[1],
                      qq + step * k3[2], pq + step * k3[3],
                      qp + step * k3[4], pp + step * k3[5],
                      m, nu, pi, pj, kind, amp, rad)
        p = p + (step / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        q = q + (step / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        qq = qq + (step / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        pq = pq + (step / 6.0) * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        qp = qp + (step / 6.0) * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        pp = pp + (step / 6.0) * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
        if it % store_every == 0:
            P[node], Q[node] = p, q
            QQ[node], PQ[node], QP[node], PP[node] = qq, pq, qp, pp
            node += 1
    return P, Q, QQ, PQ, QP, PP
