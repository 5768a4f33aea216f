"""Desk-scale laboratory for interacting harmonic-oscillator lattices.

Simulates Hamiltonian dynamics on finite site sets, co-integrates the
sensitivity (Jacobian) blocks of the flow, and checks the measured propagation
of disturbances against closed-form hyperbolic envelopes, together with the
convergence of finite-volume dynamics under nested truncations.
"""

__version__ = "0.1.0"
