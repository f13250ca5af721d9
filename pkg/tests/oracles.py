"""Independent reference computations used by the tests.

Nothing here imports the package's own formulas: geometry is rebuilt from
explicit rotations, Bessel values come from mpmath, error rates from the
textbook Q-function expressions.
"""

import math

import mpmath
import numpy as np
from scipy.stats import norm


def element_distances(r, azimuth, elevation, rt, rr, nt, nr, tx_angle0=0.0, rx_angle0=0.0):
    """Distances by placing both rings in 3-D.

    The receive ring sits in z = 0. The transmitter frame is the receive
    frame turned by R = Rz(-φ) Ry(α); its centre is R (0, 0, r) and element
    n is at R (R_t cos ψ_n, R_t sin ψ_n, r).
    """
    psi = 2 * np.pi * np.arange(nt) / nt + tx_angle0
    theta = 2 * np.pi * np.arange(nr) / nr + rx_angle0
    local = np.stack([rt * np.cos(psi), rt * np.sin(psi), np.full(nt, r)], axis=1)
    txp = local @ (_rz(-azimuth) @ _ry(elevation)).T
    rxp = np.stack([rr * np.cos(theta), rr * np.sin(theta), np.zeros(nr)], axis=1)
    return np.linalg.norm(rxp[:, None, :] - txp[None, :, :], axis=-1)


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def besselj(order, x):
    return float(mpmath.besselj(order, x))


def q(x):
    return norm.sf(x)


def ber_16qam(esn0):
    """Gray 16-QAM bit error rate over AWGN, Es/N0 linear."""
    x = np.sqrt(esn0 / 5.0)
    return 0.75 * q(x) + 0.5 * q(3 * x) - 0.25 * q(5 * x)


def ber_4qam(esn0):
    return q(np.sqrt(esn0))
