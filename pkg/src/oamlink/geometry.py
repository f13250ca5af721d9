"""UCA / UCCA layouts and the misaligned two-array link geometry.

Conventions
-----------
The receive ring lies in the z = 0 plane of its own frame, element ``m`` at
``R_r (cos θ_m, sin θ_m, 0)``. The transmit ring is centred at distance ``r``
along the transmit boresight; its frame is the receive frame rotated by
``Rz(-φ) @ Ry(α)``, so a positive azimuth turns the transmitter clockwise when
viewed from +z. Elevation tips the boresight towards +x. With this
convention the closed-form distance below is an exact Euclidean norm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    FarFieldError,
    GeometryError,
    check_finite,
    check_positive,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ArrayConfig:
    """One uniform circular ring.

    Attributes:
        element_count: number of elements N.
        radius: ring radius in metres.
        initial_angle: angle of element 1, reduced to [0, 2π).
    """

    element_count: int
    radius: float
    initial_angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "element_count", check_positive(self.element_count, "element_count", integer=True)
        )
        object.__setattr__(self, "radius", check_positive(self.radius, "radius"))
        a0 = check_finite(self.initial_angle, "initial_angle") % TWO_PI
        object.__setattr__(self, "initial_angle", 0.0 if a0 >= TWO_PI else a0)

    def element_angles(self) -> np.ndarray:
        n = np.arange(self.element_count)
        return np.mod(TWO_PI * n / self.element_count + self.initial_angle, TWO_PI)

    def positions(self) -> np.ndarray:
        """Element coordinates (N, 3) in the ring's own frame."""
        a = self.element_angles()
        return self.radius * np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=1)


@dataclass(frozen=True)
class UccaConfig:
    """Concentric rings sharing one element count, radii strictly increasing."""

    rings: tuple

    def __post_init__(self):
        rings = tuple(self.rings)
        if not rings:
            raise ValueError("a UCCA needs at least one ring")
        if not all(isinstance(ring, ArrayConfig) for ring in rings):
            raise TypeError("rings must be ArrayConfig instances")
        counts = {ring.element_count for ring in rings}
        if len(counts) != 1:
            raise ValueError(f"all rings must share element_count, got {sorted(counts)}")
        radii = [ring.radius for ring in rings]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"ring radii must be strictly increasing, got {radii}")
        object.__setattr__(self, "rings", rings)

    @classmethod
    def from_radii(cls, element_count, radii, initial_angle=0.0):
        return cls(tuple(ArrayConfig(element_count, r, initial_angle) for r in radii))

    @property
    def ring_count(self) -> int:
        return len(self.rings)

    @property
    def element_count(self) -> int:
        return self.rings[0].element_count

    @property
    def radii(self) -> np.ndarray:
        return np.array([ring.radius for ring in self.rings])


@dataclass(frozen=True)
class LinkPose:
    """Relative placement: distance r (m), azimuth φ and elevation α (rad)."""

    distance: float
    azimuth: float = 0.0
    elevation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "distance", check_positive(self.distance, "distance"))
        for name in ("azimuth", "elevation"):
            value = check_finite(getattr(self, name), name)
            if not -np.pi / 2 < value < np.pi / 2:
                raise ValueError(f"{name} must lie in (-pi/2, pi/2), got {value!r}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_degrees(cls, distance, azimuth_deg=0.0, elevation_deg=0.0):
        return cls(distance, math.radians(azimuth_deg), math.radians(elevation_deg))

    @property
    def tilt(self) -> float:
        return tilt_angle(self)


def element_angle(config: ArrayConfig, index: int) -> float:
    """Angle of the 1-based element ``index`` of ``config``."""
    if isinstance(index, bool) or int(index) != index:
        raise TypeError(f"index must be an integer, got {index!r}")
    if not 1 <= index <= config.element_count:
        raise IndexError(f"element index {index} outside 1..{config.element_count}")
    angle = (TWO_PI * (index - 1) / config.element_count + config.initial_angle) % TWO_PI
    return 0.0 if angle >= TWO_PI else angle


def tilt_angle(pose: LinkPose) -> float:
    """γ = arccos(cos α cos φ), in [0, π]."""
    c = math.cos(pose.elevation) * math.cos(pose.azimuth)
    return math.acos(min(1.0, max(-1.0, c)))


def azimuth_from_tilt(gamma, elevation):
    """Inverse of :func:`tilt_angle`; returns |φ| (clipped to the valid domain)."""
    ratio = np.cos(gamma) / np.cos(elevation)
    return np.arccos(np.clip(ratio, -1.0, 1.0))


def _radicand(r, phi, alpha, rt, rr, tx_angle, rx_angle):
    gamma = np.arccos(np.clip(np.cos(alpha) * np.cos(phi), -1.0, 1.0))
    cp, sp = np.cos(tx_angle), np.sin(tx_angle)
    ct, st = np.cos(rx_angle), np.sin(rx_angle)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cf, sf = np.cos(phi), np.sin(phi)
    return (
        rt**2 + rr**2 + r**2
        - 2 * r * rr * ct * cf * sa
        - 2 * rt * rr * (cp * ct * np.cos(gamma) + sp * st * cf)
        - 2 * rt * rr * (sp * ct * sf - cp * st * sf * ca)
        + 2 * r * rr * st * sf * sa
    )


def distance_matrix(pose: LinkPose, tx: ArrayConfig, rx: ArrayConfig) -> np.ndarray:
    """Exact element-to-element distances, rows = receive m, cols = transmit n."""
    rad = _radicand(
        pose.distance,
        pose.azimuth,
        pose.elevation,
        tx.radius,
        rx.radius,
        tx.element_angles()[None, :],
        rx.element_angles()[:, None],
    )
    if np.any(rad <= 0):
        raise GeometryError("non-positive squared distance; arrays overlap")
    return np.sqrt(rad)


def pairwise_distance(pose: LinkPose, tx: ArrayConfig, rx: ArrayConfig, m: int, n: int) -> float:
    """Exact distance from transmit element ``n`` to receive element ``m`` (1-based)."""
    rad = _radicand(
        pose.distance,
        pose.azimuth,
        pose.elevation,
        tx.radius,
        rx.radius,
        element_angle(tx, n),
        element_angle(rx, m),
    )
    if rad <= 0:
        raise GeometryError("non-positive squared distance; arrays overlap")
    return float(math.sqrt(rad))


@dataclass(frozen=True)
class FarFieldGuard:
    """Validity guard r > ratio * max(R_t, R_r) for far-field formulas."""

    ratio: float = 10.0
    on_violation: str = field(default="raise")

    def check(self, pose: LinkPose, *radii: float):
        if self.on_violation not in ("raise", "warn", "ignore"):
            raise ValueError("on_violation must be 'raise', 'warn' or 'ignore'")
        limit = self.ratio * max(radii)
        if pose.distance > limit:
            return
        msg = f"far-field guard violated: r={pose.distance:g} <= {self.ratio:g} * max radius"
        if self.on_violation == "raise":
            raise FarFieldError(msg)
        if self.on_violation == "warn":
            warnings.warn(msg, RuntimeWarning, stacklevel=3)


DEFAULT_GUARD = FarFieldGuard()


def _farfield(r, phi, alpha, rt, rr, tx_angle, rx_angle):
    gamma = np.arccos(np.clip(np.cos(alpha) * np.cos(phi), -1.0, 1.0))
    cp, sp = np.cos(tx_angle), np.sin(tx_angle)
    ct, st = np.cos(rx_angle), np.sin(rx_angle)
    sa, ca = np.sin(alpha), np.cos(alpha)
    cf, sf = np.cos(phi), np.sin(phi)
    s = rt * rr / r
    return (
        r
        - s * (cp * ct * np.cos(gamma) + sp * st * cf)
        - s * (sp * ct * sf - cp * st * sf * ca)
        - rr * (ct * cf * sa - st * sf * sa)
    )


def farfield_distance_matrix(pose, tx, rx, guard: FarFieldGuard = DEFAULT_GUARD) -> np.ndarray:
    """Four-term far-field expansion of the distances (rows m, cols n)."""
    guard.check(pose, tx.radius, rx.radius)
    return _farfield(
        pose.distance,
        pose.azimuth,
        pose.elevation,
        tx.radius,
        rx.radius,
        tx.element_angles()[None, :],
        rx.element_angles()[:, None],
    )


def pairwise_distance_farfield(pose, tx, rx, m, n, guard: FarFieldGuard = DEFAULT_GUARD) -> float:
    guard.check(pose, tx.radius, rx.radius)
    return float(
        _farfield(
            pose.distance,
            pose.azimuth,
            pose.elevation,
            tx.radius,
            rx.radius,
            element_angle(tx, n),
            element_angle(rx, m),
        )
    )


def main_lobe_check(pose: LinkPose, tx: ArrayConfig, modes, wavenumbers) -> dict:
    """Report where the receiver sits on each mode's J_ℓ(k R_t sin α) main lobe.

    The receiver is inside the main lobe of mode ℓ when k R_t sin α does not
    exceed the first maximum of J_|ℓ| for any subcarrier (J_0 is taken to its
    first zero instead).
    """
    from scipy.special import jnp_zeros, jn_zeros

    x = np.asarray(wavenumbers, float) * tx.radius * abs(math.sin(pose.elevation))
    report = {}
    for ell in modes:
        a = abs(int(ell))
        edge = float(jn_zeros(0, 1)[0]) if a == 0 else float(jnp_zeros(a, 1)[0])
        report[int(ell)] = bool(np.all(x <= edge))
    return report
