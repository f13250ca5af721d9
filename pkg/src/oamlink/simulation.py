"""Monte-Carlo scenarios: estimator sweeps, BER, spectral efficiency, phase maps.

Every trial draws from its own ``SeedSequence(seed, spawn_key=(sweep, point,
trial))`` so results are identical whatever the worker count or schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ._validation import EstimationError
from .channel import build_channel, build_ucca_channel, mode_matrix
from .estimation import DEFAULT_SEARCH, estimate_pose, signal_model
from .geometry import ArrayConfig, LinkPose, UccaConfig, tilt_angle
from .metrics import (
    OverheadModel,
    QamConstellation,
    add_awgn,
    binomial_ci,
    mimo_capacity,
    noise_variance,
    sinr,
    sinr_ucca,
    spectral_efficiency,
    spectral_efficiency_ucca,
)
from .receiver import detect, detection_set, ucca_detection_set
from .synthesis import (
    PlaneGrid,
    feed_from_symbols,
    field_phase_map,
    interference_arm_count,
    sample_raster_on_circle,
    winding_number,
)

LAMBDA1 = 2 * math.pi / 47.0
PAPER_RADIUS = 15 * LAMBDA1


class Row(NamedTuple):
    sweep: str
    x: object
    metric: str
    value: float
    ci_low: float = math.nan
    ci_high: float = math.nan


def trial_seed(seed, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(v) for v in key))


def parallel_map(fn, tasks, workers=1):
    """Ordered map over ``tasks``, in-process or on a process pool."""
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def training_observation(pose, tx, rx, modes, wavenumbers, snr_db, rng, pilots=None, beta=1.0):
    """Combined training signals (Ũ, P̃) plus AWGN at the requested SNR.

    The SNR is taken at the combined level: noise variance equals the mean
    |x'|² divided by the linear SNR.
    """
    x = signal_model(pose, tx, rx, modes, wavenumbers, pilots, beta)
    if snr_db is None or math.isinf(snr_db):
        return x
    nv = noise_variance(np.mean(np.abs(x) ** 2), snr_db)
    return add_awgn(x, nv, rng)


# ---------------------------------------------------------------- estimation


@dataclass(frozen=True)
class EstimationTask:
    pose: LinkPose
    tx: ArrayConfig
    rx: ArrayConfig
    modes: tuple
    wavenumbers: tuple
    snr_db: float
    prior: tuple
    seed: np.random.SeedSequence
    beta: float = 1.0
    search: object = DEFAULT_SEARCH


def run_estimation_task(task: EstimationTask) -> np.ndarray:
    """[r̂, γ̂, α̂, φ̂, failed]; a failed trial reports NaNs."""
    rng = np.random.default_rng(task.seed)
    x = training_observation(task.pose, task.tx, task.rx, task.modes, task.wavenumbers,
                             task.snr_db, rng, beta=task.beta)
    try:
        est = estimate_pose(x, task.tx, task.rx, task.modes, task.wavenumbers, task.prior,
                            beta=task.beta, spec=task.search, keep_candidates=False)
    except EstimationError:
        return np.array([np.nan] * 4 + [1.0])
    return np.append(est.as_array(), 0.0)


def _mean_ci(samples, floor=0.0):
    """Mean with a 95% normal CI; the low end is clipped at ``floor`` (metrics are nonnegative)."""
    s = np.asarray(samples, float)
    m = float(np.mean(s))
    if s.size < 2:
        return m, math.nan, math.nan
    half = 1.96 * float(np.std(s, ddof=1)) / math.sqrt(s.size)
    lo = m - half if floor is None else max(m - half, floor)
    return m, lo, m + half


PARAMETERS = ("r", "gamma", "alpha", "phi")


def estimation_rows(sweep, x, results, pose: LinkPose, medians=False):
    """NMSE rows (mean ± 95% normal CI) for r̂, γ̂, α̂, φ̂ and the failure rate."""
    res = np.asarray(results, float)
    ok = res[:, 4] == 0
    truth = np.array([pose.distance, tilt_angle(pose), pose.elevation, abs(pose.azimuth)])
    rows = []
    good = res[ok, :4]
    for j, name in enumerate(PARAMETERS):
        if good.size == 0:
            rows.append(Row(sweep, x, f"nmse_{name}", math.nan))
            continue
        rel = ((good[:, j] - truth[j]) / truth[j]) ** 2
        rows.append(Row(sweep, x, f"nmse_{name}", *_mean_ci(rel)))
    if medians and good.size:
        scale = (1.0, 180 / math.pi, 180 / math.pi, 180 / math.pi)
        units = ("m", "deg", "deg", "deg")
        for j, name in enumerate(PARAMETERS):
            v = good[:, j] * scale[j]
            lo, hi = np.quantile(v, [0.25, 0.75])
            rows.append(Row(sweep, x, f"median_{name}_{units[j]}", float(np.median(v)),
                            float(lo), float(hi)))
    lo, hi = binomial_ci(int((~ok).sum()), len(res))
    rows.append(Row(sweep, x, "failure_rate", float((~ok).mean()), lo, hi))
    return rows


def estimation_sweep(points, trials, seed, sweep_id, workers=1):
    """``points`` is a list of (x, EstimationTask template); returns {x: results}."""
    tasks = []
    for i, (_, tmpl) in enumerate(points):
        tasks += [replace(tmpl, seed=trial_seed(seed, sweep_id, i, t)) for t in range(trials)]
    flat = parallel_map(run_estimation_task, tasks, workers)
    out = {}
    for i, (x, _) in enumerate(points):
        out[x] = np.stack(flat[i * trials:(i + 1) * trials])
    return out


# ---------------------------------------------------------------- UCA link


RECEIVERS = ("aligned", "true", "estimated", "unsteered")


@dataclass(frozen=True)
class LinkScenario:
    """One UCA link at one SNR.

    ``receiver`` selects the channel and detector:
    ``aligned``: aligned channel (α = φ = 0), amplitude detection;
    ``true``: misaligned channel, steering and gains from the true pose;
    ``estimated``: misaligned channel, pose estimated from a fresh training
    frame at the same SNR each trial;
    ``unsteered``: misaligned channel, amplitude detection without steering.
    """

    tx: ArrayConfig
    rx: ArrayConfig
    pose: LinkPose
    modes: tuple
    wavenumbers: tuple
    snr_db: float
    receiver: str = "estimated"
    training_modes: tuple = (-4, -3, -2, -1, 0, 1, 2, 3)
    training_wavenumbers: tuple = tuple(range(47, 55))
    prior: tuple | None = None
    qam_order: int = 16
    beta: float = 1.0
    gain: str = "closed_form"

    def __post_init__(self):
        if self.receiver not in RECEIVERS:
            raise ValueError(f"receiver must be one of {RECEIVERS}")

    @property
    def channel_pose(self) -> LinkPose:
        if self.receiver == "aligned":
            return LinkPose(self.pose.distance, 0.0, 0.0)
        return self.pose

    def channels(self) -> np.ndarray:
        pose = self.channel_pose
        return np.stack([build_channel(k, pose, self.tx, self.rx, self.beta)
                         for k in self.wavenumbers])

    def noise_var(self, H) -> float:
        """Per-element noise so mean received element power / noise = SNR."""
        F = mode_matrix(self.tx.element_count, self.modes, self.tx.initial_angle)
        S = H @ F.conj().T
        return noise_variance(np.mean(np.sum(np.abs(S) ** 2, axis=-1)), self.snr_db)

    def detector_pose(self, rng) -> tuple[LinkPose, bool]:
        if self.receiver == "aligned":
            return self.channel_pose, True
        if self.receiver == "true":
            return self.pose, True
        if self.receiver == "unsteered":
            return LinkPose(self.pose.distance, 0.0, 0.0), True
        prior = self.prior or (self.pose.distance - 3.0, self.pose.distance + 3.0)
        x = training_observation(self.pose, self.tx, self.rx, self.training_modes,
                                 self.training_wavenumbers, self.snr_db, rng, beta=self.beta)
        try:
            est = estimate_pose(x, self.tx, self.rx, self.training_modes,
                                self.training_wavenumbers, prior, beta=self.beta,
                                keep_candidates=False)
            return est.as_pose(), True
        except EstimationError:
            # fall back to the prior centre with no steering
            return LinkPose(0.5 * (prior[0] + prior[1]), 0.0, 0.0), False

    def detection(self, rng):
        pose, ok = self.detector_pose(rng)
        det = detection_set(pose, self.tx, self.rx, self.modes, self.wavenumbers, self.beta,
                            gain=self.gain)
        return det, ok

    def run_trial(self, rng, symbols):
        """Bit errors and bits for ``symbols`` data symbols (rounded up to full frames)."""
        train_rng, rng = rng.spawn(2)
        H = self.channels()
        nv = self.noise_var(H)
        det, _ = self.detection(train_rng)
        qam = QamConstellation(self.qam_order)
        P, U = len(self.wavenumbers), len(self.modes)
        T = max(1, math.ceil(symbols / (P * U)))
        bits = rng.integers(0, 2, size=P * U * T * qam.bits_per_symbol, dtype=np.uint8)
        s = qam.modulate(bits).reshape(P, U, T)
        F = mode_matrix(self.tx.element_count, self.modes, self.tx.initial_angle)
        y = add_awgn(H @ (F.conj().T @ s), nv, rng)
        x = detect(y, det)
        errors = int(np.count_nonzero(qam.demodulate(x) != bits))
        return errors, bits.size

    def sinr_table(self, rng) -> np.ndarray:
        """(P, U) SINR of one trial (one pose estimate)."""
        H = self.channels()
        nv = self.noise_var(H)
        det, _ = self.detection(rng)
        F = mode_matrix(self.tx.element_count, self.modes, self.tx.initial_angle)
        eff = det.front_end() @ H @ F.conj().T
        return sinr(eff, det.gains, nv)


@dataclass(frozen=True)
class BerTask:
    scenario: LinkScenario
    symbols: int
    seed: np.random.SeedSequence


def run_ber_task(task: BerTask):
    return task.scenario.run_trial(np.random.default_rng(task.seed), task.symbols)


def ber_rows(sweep, x, counts):
    errors = sum(int(e) for e, _ in counts)
    bits = sum(int(b) for _, b in counts)
    lo, hi = binomial_ci(errors, bits)
    return [Row(sweep, x, "ber", errors / bits, lo, hi), Row(sweep, x, "bits", float(bits))]


@dataclass(frozen=True)
class SeTask:
    scenario: object
    overhead: OverheadModel
    seed: np.random.SeedSequence
    cap_db: float = 30.0


def run_se_task(task: SeTask) -> float:
    rng = np.random.default_rng(task.seed)
    table = task.scenario.sinr_table(rng)
    if table.ndim == 3:
        return spectral_efficiency_ucca(table, task.overhead, task.cap_db)
    return spectral_efficiency(table, task.overhead, task.cap_db)


# ---------------------------------------------------------------- UCCA link


@dataclass(frozen=True)
class UccaScenario:
    """UCCA OAM-MIMO link; the innermost ring pair carries the training frame."""

    tx: UccaConfig
    rx: UccaConfig
    pose: LinkPose
    modes: tuple
    wavenumbers: tuple
    snr_db: float
    receiver: str = "estimated"
    training_modes: tuple = (-2, -1, 0, 1)
    training_wavenumbers: tuple = tuple(range(47, 55))
    prior: tuple | None = None
    beta: float = 1.0
    gain: str = "model"

    @property
    def channel_pose(self):
        if self.receiver == "aligned":
            return LinkPose(self.pose.distance, 0.0, 0.0)
        return self.pose

    def channels(self):
        pose = self.channel_pose
        return np.stack([build_ucca_channel(k, pose, self.tx, self.rx, self.beta)
                         for k in self.wavenumbers])

    def transmit_matrix(self):
        """Block-diagonal F_U^H per ring: (R N) x (R U), ring-major."""
        R, N, U = self.tx.ring_count, self.tx.element_count, len(self.modes)
        F = mode_matrix(N, self.modes)
        T = np.zeros((R * N, R * U), complex)
        for n in range(R):
            T[n * N:(n + 1) * N, n * U:(n + 1) * U] = F.conj().T
        return T

    def noise_var(self, H) -> float:
        S = H @ self.transmit_matrix()
        return noise_variance(np.mean(np.sum(np.abs(S) ** 2, axis=-1)), self.snr_db)

    def detector_pose(self, rng):
        if self.receiver in ("aligned", "true"):
            return self.channel_pose
        if self.receiver == "unsteered":
            return LinkPose(self.pose.distance, 0.0, 0.0)
        prior = self.prior or (self.pose.distance - 3.0, self.pose.distance + 3.0)
        t, r = self.tx.rings[0], self.rx.rings[0]
        x = training_observation(self.pose, t, r, self.training_modes,
                                 self.training_wavenumbers, self.snr_db, rng, beta=self.beta)
        try:
            est = estimate_pose(x, t, r, self.training_modes, self.training_wavenumbers, prior,
                                beta=self.beta, keep_candidates=False)
            return est.as_pose()
        except EstimationError:
            return LinkPose(0.5 * (prior[0] + prior[1]), 0.0, 0.0)

    def effective(self, H, det):
        """Ring-major steered mode-domain channel (P, R U, R U)."""
        R, N, U = self.tx.ring_count, self.tx.element_count, len(self.modes)
        front = det.F[None, None] * det.steering[:, :, None, :]  # (P, R, U, N)
        left = np.zeros((H.shape[0], R * U, R * N), complex)
        for m in range(R):
            left[:, m * U:(m + 1) * U, m * N:(m + 1) * N] = front[:, m]
        return left @ H @ self.transmit_matrix()

    def sinr_table(self, rng) -> np.ndarray:
        """(P, R, U) SINR of one trial."""
        H = self.channels()
        nv = self.noise_var(H)
        det = ucca_detection_set(self.detector_pose(rng), self.tx, self.rx, self.modes,
                                 self.wavenumbers, self.beta, gain=self.gain)
        eff = self.effective(H, det)
        G = np.stack([det.block_gain(p) for p in range(len(self.wavenumbers))])
        R, U = self.tx.ring_count, len(self.modes)
        return sinr_ucca(eff, G, nv).reshape(len(self.wavenumbers), R, U)

    def mimo_baseline(self, pilots=None, coherence=256) -> float:
        """Equal-power MIMO-OFDM rate on the same channel after R·N pilots per subcarrier."""
        H = self.channels()
        pilots = self.tx.element_count * self.tx.ring_count if pilots is None else pilots
        R, U = self.tx.ring_count, len(self.modes)
        return mimo_capacity(H, R * U, self.noise_var(H), pilots, coherence)


# ---------------------------------------------------------------- phase maps


@dataclass(frozen=True)
class PhaseMapCase:
    modes: tuple
    element_count: int = 8
    radius: float = 0.66
    wavenumber: float = 2 * math.pi
    plane_distance: float = 2.0
    extent: float = 2.0
    resolution: int = 256
    probe_radii: tuple = field(default=(0.5, 0.8, 1.1))

    def raster(self) -> np.ndarray:
        cfg = ArrayConfig(self.element_count, self.radius)
        feed = feed_from_symbols(cfg, self.modes, np.ones(len(self.modes)))
        plane = PlaneGrid(self.plane_distance, self.extent, self.resolution)
        return field_phase_map(cfg, feed, self.wavenumber, plane)

    def analyse(self, raster):
        """(winding numbers, arm counts) measured on the raster along the probe circles."""
        plane = PlaneGrid(self.plane_distance, self.extent, self.resolution)
        winds, arms = [], []
        for rad in self.probe_radii:
            _, samples = sample_raster_on_circle(raster, plane, rad)
            winds.append(winding_number(samples))
            arms.append(interference_arm_count(samples))
        return winds, arms
