"""Beam steering, despiralization and closed-form amplitude detection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.exceptions import NotFittedError

from ._validation import ConditioningError, check_complex_array
from .channel import (
    _as_modes,
    build_channel,
    diagonal_gain_closed_form,
    effective_oam_channel,
    mode_matrix,
    taylor_order,
)
from .geometry import ArrayConfig, LinkPose, UccaConfig


def steering_vector(pose: LinkPose, rx: ArrayConfig, k) -> np.ndarray:
    """Unit phasors e^{iW_m}, W_m = k R_r (sin θ sin φ sin α - cos θ cos φ sin α).

    Scalar ``k`` gives shape (N,); an array of wavenumbers gives (P, N).
    """
    theta = rx.element_angles()
    sa = math.sin(pose.elevation)
    geo = rx.radius * (np.sin(theta) * math.sin(pose.azimuth) * sa
                       - np.cos(theta) * math.cos(pose.azimuth) * sa)
    k = np.asarray(k, dtype=float)
    return np.exp(1j * np.multiply.outer(k, geo))


def _check_gains(zeta, modes, reference_gain, min_relative_gain):
    bad = np.abs(zeta) < min_relative_gain * np.abs(reference_gain)
    if np.any(bad):
        culprits = sorted({int(m) for m in np.asarray(modes)[np.nonzero(bad)[-1]]})
        raise ConditioningError(f"closed-form gain underflows for modes {culprits}", culprits)


def amplitude_gains(pose: LinkPose, modes, k, rt, rr, element_count, beta=1.0, *,
                    reference="completed_square", compensate_rotation=True,
                    min_relative_gain=1e-12) -> np.ndarray:
    """Per-mode closed-form gains ζ(ℓ_u, k_p) from a (possibly estimated) pose, shape (P, U)."""
    ell = _as_modes(modes)
    k = np.atleast_1d(np.asarray(k, float))
    az = pose.azimuth if compensate_rotation else 0.0
    zeta = diagonal_gain_closed_form(ell[None, :], k[:, None], pose.distance, rt, rr,
                                     element_count, beta, azimuth=az, reference=reference)
    zero = diagonal_gain_closed_form(0, k[:, None], pose.distance, rt, rr, element_count, beta,
                                     reference=reference)
    _check_gains(zeta, ell, zero, min_relative_gain)
    return zeta


def amplitude_matrix(pose: LinkPose, modes, k, rt, rr, element_count, beta=1.0, **kw) -> np.ndarray:
    """Diagonal Γ(k_p) for scalar ``k`` (U, U), or a stack (P, U, U)."""
    zeta = amplitude_gains(pose, modes, k, rt, rr, element_count, beta, **kw)
    out = zeta[..., :, None] * np.eye(zeta.shape[-1])
    return out[0] if np.ndim(k) == 0 else out


@dataclass(frozen=True)
class DetectionSet:
    """Per-subcarrier steering (P, N), mode matrix (U, N) and gains (P, U)."""

    steering: np.ndarray
    F: np.ndarray
    gains: np.ndarray
    modes: tuple
    wavenumbers: tuple

    def front_end(self) -> np.ndarray:
        """F_U ⊙ B(k_p), shape (P, U, N)."""
        return self.F[None, :, :] * self.steering[:, None, :]


def detection_set(pose: LinkPose, tx: ArrayConfig, rx: ArrayConfig, modes, wavenumbers,
                  beta=1.0, gain="closed_form", reference="completed_square",
                  compensate_rotation=True, min_relative_gain=1e-12) -> DetectionSet:
    """Build the detector from a pose estimate.

    ``gain="model"`` replaces the closed form by the exact steered diagonal of
    the channel synthesized at the estimated pose.
    """
    ell = _as_modes(modes)
    k = np.asarray(wavenumbers, float)
    steer = steering_vector(pose, rx, k)
    F = mode_matrix(rx.element_count, ell, rx.initial_angle)
    if gain == "closed_form":
        zeta = amplitude_gains(pose, ell, k, tx.radius, rx.radius, tx.element_count, beta,
                               reference=reference, compensate_rotation=compensate_rotation,
                               min_relative_gain=min_relative_gain)
    elif gain == "model":
        H = np.stack([build_channel(kk, pose, tx, rx, beta) for kk in k])
        eff = effective_oam_channel(H, ell, steering=steer, tx_angle=tx.initial_angle,
                                    rx_angle=rx.initial_angle)
        zeta = np.diagonal(eff, axis1=-2, axis2=-1).copy()
        _check_gains(zeta, ell, np.max(np.abs(zeta), axis=-1, keepdims=True), min_relative_gain)
    else:
        raise ValueError("gain must be 'closed_form' or 'model'")
    return DetectionSet(steer, F, zeta, tuple(int(v) for v in ell), tuple(float(v) for v in k))


def detect(received, det: DetectionSet) -> np.ndarray:
    """x = Γ⁻¹ (F_U ⊙ B) y per subcarrier. ``received`` is (P, N) or (P, N, T)."""
    y = check_complex_array(received, "received")
    P, N = det.steering.shape
    if y.shape[:2] != (P, N):
        raise ValueError(f"received has shape {y.shape}, expected ({P}, {N}, ...)")
    squeeze = y.ndim == 2
    if squeeze:
        y = y[..., None]
    z = det.front_end() @ y
    if np.any(det.gains == 0):
        raise ConditioningError("zero gain in detection set")
    x = z / det.gains[..., None]
    return x[..., 0] if squeeze else x


@dataclass(frozen=True)
class UccaDetectionSet:
    """Ring-wise steering (P, R, N), mode matrix (U, N) and per-mode ring systems.

    ``gains[p, u]`` is the R x R matrix [ζ_{m,n}(ℓ_u, k_p)] (receive ring m,
    transmit ring n); ``inverse`` holds its inverse.
    """

    steering: np.ndarray
    F: np.ndarray
    gains: np.ndarray
    inverse: np.ndarray
    modes: tuple
    wavenumbers: tuple

    @property
    def ring_count(self):
        return self.steering.shape[1]

    def block_gain(self, p) -> np.ndarray:
        """Dense Γ̄(k_p) of size (R U) x (R U), ring-major ordering."""
        R, U = self.ring_count, len(self.modes)
        out = np.zeros((R * U, R * U), complex)
        for u in range(U):
            out[u::U, u::U] = self.gains[p, u]
        return out


def ucca_detection_set(pose: LinkPose, tx: UccaConfig, rx: UccaConfig, modes, wavenumbers,
                       beta=1.0, gain="closed_form", reference="completed_square",
                       compensate_rotation=True, cond_limit=1e12) -> UccaDetectionSet:
    """Block detector: Γ̄ splits into one R x R system per mode and subcarrier."""
    if tx.ring_count != rx.ring_count or tx.element_count != rx.element_count:
        raise ValueError("transmit and receive UCCAs must match in ring and element count")
    ell = _as_modes(modes)
    k = np.asarray(wavenumbers, float)
    n = tx.element_count
    steer = np.stack([steering_vector(pose, ring, k) for ring in rx.rings], axis=1)
    F = mode_matrix(n, ell)
    R, U, P = tx.ring_count, len(ell), len(k)
    G = np.empty((P, U, R, R), complex)
    az = pose.azimuth if compensate_rotation else 0.0
    for m, rring in enumerate(rx.rings):
        for j, tring in enumerate(tx.rings):
            if gain == "closed_form":
                G[:, :, m, j] = diagonal_gain_closed_form(
                    ell[None, :], k[:, None], pose.distance, tring.radius, rring.radius, n, beta,
                    azimuth=az, reference=reference)
            elif gain == "model":
                H = np.stack([build_channel(kk, pose, tring, rring, beta) for kk in k])
                eff = effective_oam_channel(H, ell, steering=steer[:, m])
                G[:, :, m, j] = np.diagonal(eff, axis1=-2, axis2=-1)
            else:
                raise ValueError("gain must be 'closed_form' or 'model'")
    cond = np.linalg.cond(G)
    bad = ~np.isfinite(cond) | (cond > cond_limit)
    if np.any(bad):
        culprits = sorted({int(ell[u]) for u in np.nonzero(bad)[1]})
        raise ConditioningError(
            f"per-mode ring matrices are singular or ill-conditioned for modes {culprits}", culprits
        )
    return UccaDetectionSet(steer, F, G, np.linalg.inv(G), tuple(int(v) for v in ell),
                            tuple(float(v) for v in k))


def detect_ucca(received, det: UccaDetectionSet) -> np.ndarray:
    """Ring-wise steering and despiralization, then per-mode ring inversion.

    ``received`` is (P, R N) or (P, R N, T); output is (P, R, U[, T]).
    """
    y = check_complex_array(received, "received")
    P, R, N = det.steering.shape
    if y.shape[:2] != (P, R * N):
        raise ValueError(f"received has shape {y.shape}, expected ({P}, {R * N}, ...)")
    squeeze = y.ndim == 2
    if squeeze:
        y = y[..., None]
    y = y.reshape(P, R, N, -1)
    front = det.F[None, None, :, :] * det.steering[:, :, None, :]  # (P, R, U, N)
    z = front @ y  # (P, R, U, T)
    x = np.einsum("purs,psut->prut", det.inverse, z)
    return x[..., 0] if squeeze else x


class OamReceiver(TransformerMixin, BaseEstimator):
    """Pose-aware OAM detector with the fit / transform / predict protocol.

    ``fit`` either takes a known ``pose`` or estimates one from training data
    ``X`` with ``estimator`` (a :class:`~oamlink.estimation.PoseEstimator`),
    then builds the detection set. ``transform`` maps received element
    samples (P, N, T) to detected mode symbols (P, U, T); ``predict`` returns
    hard constellation indices when ``qam_order`` is set.
    """

    def __init__(self, tx=None, rx=None, modes=(-2, -1, 0, 1, 2), wavenumbers=tuple(range(47, 55)),
                 estimator=None, beta=1.0, gain="closed_form", reference="completed_square",
                 compensate_rotation=True, qam_order=None):
        self.tx = tx
        self.rx = rx
        self.modes = modes
        self.wavenumbers = wavenumbers
        self.estimator = estimator
        self.beta = beta
        self.gain = gain
        self.reference = reference
        self.compensate_rotation = compensate_rotation
        self.qam_order = qam_order

    def fit(self, X=None, y=None, pose=None):
        if pose is None:
            if X is None or self.estimator is None:
                raise ValueError("fit needs either a pose or training data plus an estimator")
            self.estimator_ = clone(self.estimator).fit(X)
            pose = self.estimator_.pose_
        self.pose_ = pose
        self.detection_ = detection_set(pose, self.tx, self.rx, self.modes, self.wavenumbers,
                                        self.beta, self.gain, self.reference,
                                        self.compensate_rotation)
        return self

    def _check_fitted(self):
        if not hasattr(self, "detection_"):
            raise NotFittedError("OamReceiver is not fitted yet")

    def transform(self, X):
        self._check_fitted()
        return detect(X, self.detection_)

    def predict(self, X):
        from .metrics import QamConstellation

        if self.qam_order is None:
            raise ValueError("predict needs qam_order")
        return QamConstellation(self.qam_order).nearest(self.transform(X))
