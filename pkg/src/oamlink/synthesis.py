"""Baseband multi-mode OAM synthesis, training frames and field phase maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_complex_array, check_positive
from .channel import ModeSet, _as_modes, mode_matrix
from .geometry import ArrayConfig


def dft_mode_matrix(element_count: int, modes) -> np.ndarray:
    """U x N unitary partial DFT for the given modes (rows orthonormal)."""
    check_positive(element_count, "element_count", integer=True)
    ell = _as_modes(modes)
    ModeSet(tuple(ell), element_count)
    return mode_matrix(element_count, ell)


def synthesize(symbols, F) -> np.ndarray:
    """Element feeds F^H s. ``symbols`` is (U,) or (U, ...) with trailing batch axes."""
    F = np.asarray(F)
    s = check_complex_array(symbols, "symbols")
    if s.shape[0] != F.shape[0]:
        raise ValueError(f"{s.shape[0]} symbols for a {F.shape[0]}-mode matrix")
    return np.tensordot(F.conj().T, s, axes=(1, 0))


def feed_from_symbols(config: ArrayConfig, modes, symbols) -> np.ndarray:
    """Per-element excitation A_n e^{iφ'_n} = Σ_u e^{iℓ_u φ_n} s_u (no 1/√N)."""
    ell = _as_modes(modes)
    s = check_complex_array(symbols, "symbols", ndim=1, shape=(len(ell),))
    phi = config.element_angles()
    return np.exp(1j * np.outer(phi, ell)) @ s


@dataclass(frozen=True)
class TrainingFrame:
    """Ũ sequential single-mode slots on each of P̃ subcarriers.

    Attributes:
        modes: training modes (length Ũ); slot t excites modes[t] only.
        wavenumbers: training subcarriers (length P̃).
        pilots: (Ũ, P̃) pilot values s'(ℓ_u, k_p).
        feeds: (P̃, N, Ũ) element feeds, column t = F^H S'(k_p) e_t.
    """

    modes: tuple
    wavenumbers: tuple
    pilots: np.ndarray
    feeds: np.ndarray

    @property
    def slot_count(self) -> int:
        return self.pilots.size

    def matrix(self, p) -> np.ndarray:
        """Diagonal training matrix S'(k_p)."""
        return np.diag(self.pilots[:, p])


def training_sequence(modes, wavenumbers, pilots=None, element_count=None) -> TrainingFrame:
    ell = _as_modes(modes)
    k = np.asarray(getattr(wavenumbers, "wavenumbers", wavenumbers), dtype=float)
    if element_count is None:
        raise ValueError("element_count is required")
    F = dft_mode_matrix(element_count, ell)
    if pilots is None:
        pilots = np.ones((len(ell), len(k)), complex)
    pilots = check_complex_array(
        np.broadcast_to(pilots, (len(ell), len(k))), "pilots", allow_zero=True
    )
    if np.any(np.abs(pilots) == 0):
        raise ValueError("pilot values must be nonzero")
    feeds = F.conj().T[None, :, :] * pilots.T[:, None, :]
    return TrainingFrame(tuple(int(v) for v in ell), tuple(k), pilots.copy(), feeds)


@dataclass(frozen=True)
class PlaneGrid:
    """Square observation plane parallel to the array at height ``distance``."""

    distance: float
    extent: float
    resolution: int = 256

    def __post_init__(self):
        check_positive(self.distance, "distance")
        check_positive(self.extent, "extent")
        check_positive(self.resolution, "resolution", integer=True)

    def axes(self):
        v = np.linspace(-self.extent, self.extent, self.resolution)
        return v, v


def _field(config: ArrayConfig, feed, k, points):
    pos = config.positions()
    d = np.linalg.norm(points[..., None, :] - pos, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.exp(1j * k * d) / d
    out = terms @ feed
    out[np.any(d == 0, axis=-1)] = np.nan
    return out


def field_on_plane(config: ArrayConfig, feed, k, plane: PlaneGrid) -> np.ndarray:
    """Complex scalar field Σ_n feed_n e^{ik|p - r_n|}/|p - r_n| on the plane."""
    feed = check_complex_array(feed, "feed", ndim=1, shape=(config.element_count,))
    x, y = plane.axes()
    X, Y = np.meshgrid(x, y, indexing="xy")
    pts = np.stack([X, Y, np.full_like(X, plane.distance)], axis=-1)
    return _field(config, feed, k, pts)


def field_phase_map(config: ArrayConfig, feed, k, plane: PlaneGrid) -> np.ndarray:
    """Phase raster in [-π, π); NaN marks excluded points (coincident with an element)."""
    f = field_on_plane(config, feed, k, plane)
    phase = np.angle(f)
    phase = np.where(phase >= np.pi, phase - 2 * np.pi, phase)
    return phase


def field_on_circle(config: ArrayConfig, feed, k, distance, radius, samples=720):
    """Field sampled on a boresight-centred circle at height ``distance``."""
    feed = check_complex_array(feed, "feed", ndim=1, shape=(config.element_count,))
    psi = 2 * np.pi * np.arange(samples) / samples
    pts = np.stack(
        [radius * np.cos(psi), radius * np.sin(psi), np.full(samples, float(distance))], axis=-1
    )
    return psi, _field(config, feed, k, pts)


def winding_number(phases) -> int:
    """Accumulated phase / 2π along a closed, ordered loop of phase samples.

    Wrapped steps around a closed loop always sum to a multiple of 2π, so the
    quotient is rounded away from floating-point dust.
    """
    p = np.asarray(phases, dtype=float)
    steps = np.angle(np.exp(1j * np.diff(np.append(p, p[0]))))
    return int(np.rint(steps.sum() / (2 * np.pi)))


def sample_raster_on_circle(raster, plane: PlaneGrid, radius, samples=720):
    """Nearest-pixel samples of ``raster`` along a centred circle, in angular order."""
    x, _ = plane.axes()
    step = x[1] - x[0]
    psi = 2 * np.pi * np.arange(samples) / samples
    col = np.rint((radius * np.cos(psi) - x[0]) / step).astype(int)
    row = np.rint((radius * np.sin(psi) - x[0]) / step).astype(int)
    if col.min() < 0 or row.min() < 0 or max(col.max(), row.max()) >= len(x):
        raise ValueError("circle leaves the raster")
    return psi, np.asarray(raster)[row, col]


def angular_harmonics(phases, count=2):
    """Strongest angular harmonics of exp(i·phase) along a circle.

    Returns harmonic orders sorted by decreasing magnitude. For a two-mode
    superposition the gap between the two strongest orders equals |ℓ₁ - ℓ₂|,
    which is the number of interference arms in the phase pattern.
    """
    p = np.asarray(phases, dtype=float)
    spec = np.fft.fft(np.exp(1j * p)) / p.size
    orders = np.fft.fftfreq(p.size, d=1.0 / p.size).astype(int)
    mag = np.abs(spec)
    idx = np.lexsort((np.abs(orders), -np.round(mag, 12)))
    return orders[idx[:count]], mag[idx[:count]]


def interference_arm_count(phases) -> int:
    top, _ = angular_harmonics(phases, 2)
    return int(abs(top[0] - top[1]))


def pgm_bytes(raster, lo=-np.pi, hi=np.pi) -> bytes:
    """Binary 8-bit portable graymap; NaN pixels map to 0."""
    a = np.asarray(raster, dtype=float)
    scaled = np.clip((a - lo) / (hi - lo), 0.0, 1.0) * 255.0
    img = np.where(np.isnan(a), 0, np.rint(scaled)).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return header + img.tobytes()


def write_raster(raster, path, fmt="csv"):
    """Write a phase raster as a CSV grid or an 8-bit PGM."""
    from pathlib import Path

    path = Path(path)
    if fmt == "pgm":
        path.write_bytes(pgm_bytes(raster))
    elif fmt == "csv":
        rows = [",".join("nan" if math.isnan(v) else repr(float(v)) for v in row) for row in raster]
        path.write_text("\n".join(rows) + "\n")
    else:
        raise ValueError("fmt must be 'csv' or 'pgm'")
    return path
