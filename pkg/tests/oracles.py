"""Independent reference computations used by the tests.

Nothing here calls the simulator or the closed-form statistics; the burst
oracle enumerates every outcome of the generative model explicitly.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def pulse(theta, phi):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * np.exp(-1j * phi) * s], [-1j * np.exp(1j * phi) * s, c]])


def basis_pulse(label, x_phase=math.pi / 2):
    if label == "Z":
        return 0.0, 0.0
    return math.pi / 2, x_phase + (math.pi / 2 if label == "Y" else 0.0)


def p_r2_after_pulse(amps, theta, phi):
    """|<r2| U(theta, phi)^dagger |psi>|^2."""
    if theta == 0:
        return abs(amps[1]) ** 2
    v = pulse(theta, phi).conj().T @ np.asarray(amps, dtype=complex)
    return abs(v[1]) ** 2


def jitter_average(fn, sigma, order=80):
    """E[fn(delta)] for delta ~ N(0, sigma^2) by Gauss-Hermite quadrature."""
    if sigma == 0:
        return fn(0.0)
    x, w = np.polynomial.hermite.hermgauss(order)
    return float(sum(wi * fn(math.sqrt(2) * sigma * xi) for xi, wi in zip(x, w)) / math.sqrt(math.pi))


def blocked_probability(amps, label, fidelity, jitter, x_phase=math.pi / 2):
    theta, phi = basis_pulse(label, x_phase)
    p_r2 = jitter_average(lambda d: p_r2_after_pulse(amps, theta, phi + d), jitter if theta else 0.0)
    q = (1 - fidelity) * theta / math.pi
    return p_r2 * (1 - q) + (1 - p_r2) * q


def burst_distribution(amps, label, n, p_click, s_surv, p_dark, eta_prep, fidelity,
                       jitter=0.0, dark_mode="per_trial"):
    """Exact distribution of the total photon number by full enumeration."""
    p_block = blocked_probability(amps, label, fidelity, jitter)
    dist = np.zeros(2 * n + 2)

    def bern(bit, p):
        return p if bit else 1 - p

    dark_patterns = [(b,) for b in (0, 1)] if dark_mode == "per_trial" else list(itertools.product((0, 1), repeat=n))
    for prep_ok in (0, 1):
        w_prep = bern(prep_ok, eta_prep)
        for blocked in (0, 1):
            w_block = bern(blocked, p_block) if prep_ok else (1.0 if blocked == 0 else 0.0)
            for surv in itertools.product((0, 1), repeat=n):
                w_surv = math.prod(bern(b, s_surv) for b in surv)
                if blocked:
                    alive = list(itertools.accumulate(surv, lambda a, b: a and b))
                else:
                    alive = [0] * n
                for clicks in itertools.product((0, 1), repeat=n):
                    w_click = math.prod(bern(c, p_click) for c in clicks)
                    signal = sum(c for c, a in zip(clicks, alive) if not a)
                    for dark in dark_patterns:
                        w_dark = math.prod(bern(d, p_dark) for d in dark)
                        w = w_prep * w_block * w_surv * w_click * w_dark
                        if w:
                            dist[signal + sum(dark)] += w
    return dist


def summary(dist):
    n = np.arange(len(dist))
    return float(n @ dist), float(dist[0])
