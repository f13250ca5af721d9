"""Free-space LoS channel: element-domain matrices and mode-domain forms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import (
    check_complex_array,
    check_strictly_increasing,
    uniform_spacing,
)
from .geometry import (
    DEFAULT_GUARD,
    ArrayConfig,
    FarFieldGuard,
    LinkPose,
    UccaConfig,
    distance_matrix,
    farfield_distance_matrix,
)

# i**t for t = 0..3, indexed by t % 4; avoids complex pow phase drift
I_POWERS = (1.0 + 0j, 1j, -1.0 + 0j, -1j)


def i_power(t):
    return np.asarray(I_POWERS)[np.mod(np.asarray(t, dtype=int), 4)]


@dataclass(frozen=True)
class CarrierGrid:
    """Subcarrier wavenumbers k_p in rad/m."""

    wavenumbers: tuple
    require_uniform: bool = False

    def __post_init__(self):
        k = check_strictly_increasing(self.wavenumbers, "wavenumbers")
        if np.any(k <= 0):
            raise ValueError("wavenumbers must be positive")
        object.__setattr__(self, "wavenumbers", tuple(float(v) for v in k))
        if self.require_uniform and len(k) > 1 and self.spacing is None:
            raise ValueError("wavenumbers are not uniformly spaced")

    @classmethod
    def uniform(cls, first, count, spacing=1.0):
        return cls(tuple(first + spacing * np.arange(count)), require_uniform=True)

    @property
    def k(self) -> np.ndarray:
        return np.asarray(self.wavenumbers)

    @property
    def spacing(self):
        return uniform_spacing(self.wavenumbers)

    def __len__(self):
        return len(self.wavenumbers)


@dataclass(frozen=True)
class ModeSet:
    """Ordered OAM mode numbers; ``element_count`` enforces |ℓ| < N/2."""

    modes: tuple
    element_count: int | None = None

    def __post_init__(self):
        ell = check_strictly_increasing(self.modes, "modes", integer=True)
        object.__setattr__(self, "modes", tuple(int(v) for v in ell))
        if self.element_count is not None:
            self.check(self.element_count)

    @classmethod
    def contiguous(cls, first, count, element_count=None):
        return cls(tuple(range(first, first + count)), element_count)

    def check(self, element_count):
        bad = [m for m in self.modes if 2 * abs(m) >= element_count]
        if bad:
            raise ValueError(
                f"modes {bad} violate |l| < N/2 for N={element_count}: "
                "at most N OAM modes can be resolved by an N-element ring"
            )
        return self

    @property
    def ell(self) -> np.ndarray:
        return np.asarray(self.modes)

    @property
    def spacing(self):
        return uniform_spacing(self.modes)

    def __len__(self):
        return len(self.modes)


def _as_modes(modes) -> np.ndarray:
    if isinstance(modes, ModeSet):
        return modes.ell
    return check_strictly_increasing(modes, "modes", integer=True)


def coeff(k, d, beta=1.0):
    """h(k, d) = β / (2 k d) · exp(-i k d)."""
    k = np.asarray(k, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(k <= 0) or np.any(d <= 0):
        raise ValueError("k and d must be positive")
    out = beta / (2.0 * k * d) * np.exp(-1j * k * d)
    return out[()] if out.ndim == 0 else out


def build_channel(k, pose: LinkPose, tx: ArrayConfig, rx: ArrayConfig, beta=1.0,
                  mode="exact", guard: FarFieldGuard = DEFAULT_GUARD) -> np.ndarray:
    """N_r x N_t channel at wavenumber ``k``; entry (m, n) links tx n to rx m."""
    if mode == "exact":
        return coeff(k, distance_matrix(pose, tx, rx), beta)
    if mode == "farfield":
        d = farfield_distance_matrix(pose, tx, rx, guard)
        return beta / (2.0 * k * pose.distance) * np.exp(-1j * k * d)
    raise ValueError(f"mode must be 'exact' or 'farfield', got {mode!r}")


def build_ucca_channel(k, pose: LinkPose, tx: UccaConfig, rx: UccaConfig, beta=1.0) -> np.ndarray:
    """Block channel; block (m, n) joins transmit ring n to receive ring m."""
    if not isinstance(tx, UccaConfig) or not isinstance(rx, UccaConfig):
        raise TypeError("tx and rx must be UccaConfig")
    if tx.ring_count != rx.ring_count or tx.element_count != rx.element_count:
        raise ValueError("transmit and receive UCCAs must have matching ring and element counts")
    return np.block(
        [[build_channel(k, pose, t, r, beta) for t in tx.rings] for r in rx.rings]
    )


@dataclass(frozen=True)
class ChannelTensor:
    """Per-subcarrier channel matrices, shape (P, M, M), plus metadata."""

    matrices: np.ndarray
    grid: CarrierGrid
    pose: LinkPose
    tx: object
    rx: object
    beta: complex = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrices.setflags(write=False)

    def __len__(self):
        return self.matrices.shape[0]

    def to_csv(self, directory, stem="channel"):
        """One file per subcarrier with columns row, col, re, im."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for p, (k, h) in enumerate(zip(self.grid.wavenumbers, self.matrices)):
            path = directory / f"{stem}_p{p:03d}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["row", "col", "re", "im"])
                for (m, n), v in np.ndenumerate(h):
                    writer.writerow([m + 1, n + 1, repr(float(v.real)), repr(float(v.imag))])
            paths.append(path)
        return paths


def channel_tensor(grid: CarrierGrid, pose, tx, rx, beta=1.0, mode="exact") -> ChannelTensor:
    if isinstance(tx, UccaConfig):
        mats = [build_ucca_channel(k, pose, tx, rx, beta) for k in grid.wavenumbers]
    else:
        mats = [build_channel(k, pose, tx, rx, beta, mode) for k in grid.wavenumbers]
    return ChannelTensor(np.stack(mats), grid, pose, tx, rx, beta, {"mode": mode})


def mode_matrix(element_count: int, modes, initial_angle=0.0) -> np.ndarray:
    """Unitary partial DFT: row u = exp(-i ℓ_u ψ_n) / √N at element angles ψ_n."""
    ell = _as_modes(modes)
    psi = 2 * np.pi * np.arange(element_count) / element_count + initial_angle
    return np.exp(-1j * np.outer(ell, psi)) / math.sqrt(element_count)


def effective_oam_channel(H, tx_modes, rx_modes=None, steering=None,
                          tx_angle=0.0, rx_angle=0.0) -> np.ndarray:
    """Mode-domain channel (F_rx ⊙ B) H F_tx^H.

    ``H`` may be a single (N, N) matrix or a stack (P, N, N); ``steering`` is
    then (N,) or (P, N) unit phasors applied per receive element.
    """
    H = np.asarray(H)
    n_rx, n_tx = H.shape[-2:]
    rx_modes = tx_modes if rx_modes is None else rx_modes
    f_rx = mode_matrix(n_rx, rx_modes, rx_angle)
    f_tx = mode_matrix(n_tx, tx_modes, tx_angle)
    if steering is None:
        left = f_rx
    else:
        steering = np.asarray(steering)
        if steering.shape[-1] != n_rx:
            raise ValueError(f"steering length {steering.shape[-1]} != {n_rx} receive elements")
        left = f_rx * steering[..., None, :]
    return left @ H @ f_tx.conj().T


def taylor_order(mode, element_count):
    """τ = min(|ℓ|, N - |ℓ|)."""
    a = np.abs(np.asarray(mode, dtype=int))
    return np.minimum(a, element_count - a)


def diagonal_gain_closed_form(mode, k, r, rt, rr, element_count, beta=1.0, *,
                              azimuth=0.0, reference="completed_square"):
    """Leading-order diagonal gain of the steered mode-domain channel.

    ζ = η(k) N² / 2^τ · i^τ / τ! · S^τ with S = k R_t R_r / r and
    η(k) = β / (2 k r N) · exp(-i k d₀).

    ``reference`` picks the phase distance d₀: ``"center"`` uses d₀ = r,
    ``"completed_square"`` uses d₀ = √(r² + R_t² + R_r²), the constant term
    of the completed-square distance expansion, which leaves only the
    genuine Taylor remainder in the error. A nonzero ``azimuth`` applies the
    residual mode rotation exp(iℓφ) left by the steering phase.
    """
    tau = taylor_order(mode, element_count)
    k = np.asarray(k, dtype=float)
    if reference == "center":
        d0 = r
    elif reference == "completed_square":
        d0 = math.sqrt(r * r + rt * rt + rr * rr)
    else:
        raise ValueError("reference must be 'center' or 'completed_square'")
    eta = beta / (2.0 * k * r * element_count) * np.exp(-1j * k * d0)
    s = k * rt * rr / r
    fact = np.vectorize(math.factorial, otypes=[float])(tau)
    zeta = eta * element_count**2 / 2.0**tau * i_power(tau) / fact * s**tau
    if azimuth:
        zeta = zeta * np.exp(1j * np.asarray(mode) * azimuth)
    return zeta[()] if np.ndim(zeta) == 0 else zeta
