"""Modulation, noise and figures of merit: NMSE, SINR, spectral efficiency, BER."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc
from scipy.stats import binomtest


class QamConstellation:
    """Square Gray-mapped M-QAM with unit average energy.

    Each symbol carries log2(M) bits; the first half select the in-phase
    level and the second half the quadrature level, each Gray coded.
    """

    def __init__(self, order: int = 16):
        if order not in (4, 16, 64, 256):
            raise ValueError(f"unsupported QAM order {order!r}; use 4, 16, 64 or 256")
        self.order = order
        self.bits_per_symbol = int(math.log2(order))
        self.levels = int(math.isqrt(order))
        self._half = self.bits_per_symbol // 2
        self.scale = math.sqrt(2.0 * (order - 1) / 3.0)
        idx = np.arange(self.levels)
        # gray codeword -> level index
        self._gray_to_level = np.empty(self.levels, int)
        self._gray_to_level[idx ^ (idx >> 1)] = idx
        self._level_to_gray = idx ^ (idx >> 1)

    def points(self) -> np.ndarray:
        """All M points indexed by their bit label read as an integer."""
        labels = np.arange(self.order)
        return self._label_to_symbol(labels)

    def _label_to_symbol(self, labels):
        labels = np.asarray(labels)
        gi = labels >> self._half
        gq = labels & ((1 << self._half) - 1)
        li, lq = self._gray_to_level[gi], self._gray_to_level[gq]
        return ((2 * li - (self.levels - 1)) + 1j * (2 * lq - (self.levels - 1))) / self.scale

    def _bits_to_labels(self, bits):
        b = np.asarray(bits).astype(np.int64).reshape(-1, self.bits_per_symbol)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return b @ weights

    def _labels_to_bits(self, labels):
        labels = np.asarray(labels).reshape(-1)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((labels[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)

    def modulate(self, bits) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.size % self.bits_per_symbol:
            raise ValueError(f"bit count {bits.size} is not a multiple of {self.bits_per_symbol}")
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("bits must be 0 or 1")
        return self._label_to_symbol(self._bits_to_labels(bits))

    def _axis_level(self, v):
        lvl = np.rint((v * self.scale + (self.levels - 1)) / 2.0)
        return np.clip(lvl, 0, self.levels - 1).astype(np.int64)

    def nearest(self, symbols) -> np.ndarray:
        """Hard-decision labels (integers) of the nearest points."""
        s = np.asarray(symbols)
        li, lq = self._axis_level(s.real), self._axis_level(s.imag)
        return (self._level_to_gray[li] << self._half) | self._level_to_gray[lq]

    def demodulate(self, symbols) -> np.ndarray:
        return self._labels_to_bits(self.nearest(symbols))


def qam_modulate(bits, order=16):
    return QamConstellation(order).modulate(bits)


def qam_demodulate(symbols, order=16):
    return QamConstellation(order).demodulate(symbols)


def awgn_ber_qam(order, esn0_db):
    """Exact Gray-coded square M-QAM bit error rate over AWGN (Es/N0 in dB)."""
    esn0 = 10.0 ** (np.asarray(esn0_db, float) / 10.0)
    sqrt_m = int(math.isqrt(order))
    nbits = int(math.log2(sqrt_m))
    arg = np.sqrt(3.0 * esn0 / (2.0 * (order - 1)))
    total = np.zeros_like(esn0)
    for kb in range(1, nbits + 1):
        acc = np.zeros_like(esn0)
        for i in range(int((1 - 2.0**-kb) * sqrt_m)):
            w = (-1) ** math.floor(i * 2 ** (kb - 1) / sqrt_m) * (
                2 ** (kb - 1) - math.floor(i * 2 ** (kb - 1) / sqrt_m + 0.5))
            acc += w * erfc((2 * i + 1) * arg)
        total += acc / sqrt_m
    return total / nbits


def add_awgn(signal, noise_var, rng):
    """Circular complex Gaussian noise of variance ``noise_var`` per sample."""
    s = np.asarray(signal)
    n = rng.standard_normal(s.shape + (2,)) @ np.array([1.0, 1j])
    return s + math.sqrt(noise_var / 2.0) * n


def noise_variance(signal_power, snr_db):
    """Noise variance giving the requested SNR for a mean per-sample signal power."""
    return float(signal_power) / 10.0 ** (snr_db / 10.0)


def nmse(estimates, truth) -> float:
    """Sample mean of ((x̂ - x) / x)²."""
    truth = np.asarray(truth, float)
    if np.any(truth == 0):
        raise ValueError("truth must be nonzero")
    e = np.asarray(estimates, float)
    return float(np.mean(((e - truth) / truth) ** 2))


def sinr(effective, gains, noise_var, symbol_energy=1.0, floor=1e-24) -> np.ndarray:
    """Per-mode SINR of amplitude detection.

    ``effective`` is the exact steered mode-domain channel (..., U, U) and
    ``gains`` the detector model ζ (..., U). The self residual is h'(u,u) - ζ
    and the cross terms are the off-diagonal entries. Leakage powers below
    ``floor`` times the signal power count as zero, so a noiseless,
    interference-free link returns +inf.
    """
    h = np.asarray(effective, complex)
    z = np.asarray(gains, complex)
    leak = h.copy()
    idx = np.arange(h.shape[-1])
    leak[..., idx, idx] = np.diagonal(h, axis1=-2, axis2=-1) - z
    sig = np.abs(z) ** 2 * symbol_energy
    pw = np.abs(leak) ** 2
    pw = np.where(pw < floor * sig[..., :, None], 0.0, pw)
    den = pw.sum(axis=-1) * symbol_energy + noise_var
    with np.errstate(divide="ignore"):
        return np.where(den > 0, sig / np.where(den > 0, den, 1.0), np.inf)


def sinr_ucca(effective, block_gain, noise_var, symbol_energy=1.0) -> np.ndarray:
    """Per-(ring, mode) SINR of the block detector, ring-major order.

    R^I = (Γ̄⁻¹H' - I) E (Γ̄⁻¹H' - I)^H and R^z = σ² Γ̄⁻¹ Γ̄^{-H}; entry
    κ = (ring - 1) U + u.
    """
    h = np.asarray(effective, complex)
    g = np.asarray(block_gain, complex)
    ginv = np.linalg.inv(g)
    a = ginv @ h - np.eye(h.shape[-1])
    ri = np.einsum("...ij,...ij->...i", a, a.conj()).real * symbol_energy
    rz = noise_var * np.einsum("...ij,...ij->...i", ginv, ginv.conj()).real
    den = ri + rz
    with np.errstate(divide="ignore"):
        return np.where(den > 0, symbol_energy / np.where(den > 0, den, 1.0), np.inf)


@dataclass(frozen=True)
class OverheadModel:
    """Coherence length T_c, training length T_p (symbols), P data and P̃ training subcarriers."""

    coherence: int = 256
    training: int = 8
    subcarriers: int = 64
    training_subcarriers: int = 8

    def __post_init__(self):
        if min(self.coherence, self.subcarriers) <= 0 or min(self.training, self.training_subcarriers) < 0:
            raise ValueError("overhead parameters must be positive")
        if self.training * self.training_subcarriers > self.coherence * self.subcarriers:
            raise ValueError("training overhead exceeds the coherence budget")

    @property
    def factor(self) -> float:
        return 1.0 - self.training * self.training_subcarriers / (self.coherence * self.subcarriers)


def _log_rate(table, cap_db):
    t = np.asarray(table, float)
    t = np.where(np.isposinf(t), 10.0 ** (cap_db / 10.0), t)
    return np.log2(1.0 + t)


def spectral_efficiency(sinr_table, overhead: OverheadModel, cap_db=30.0) -> float:
    """(1 - T_p P̃ / (T_c P)) · (1/P) Σ_p Σ_u log2(1 + SINR); table is (P, U)."""
    rate = _log_rate(sinr_table, cap_db)
    return overhead.factor * float(rate.sum()) / rate.shape[0]


def spectral_efficiency_ucca(sinr_table, overhead: OverheadModel, cap_db=30.0) -> float:
    """Two-term form: ring 1 pays the training overhead, rings 2.. do not. Table is (P, R, U)."""
    rate = _log_rate(sinr_table, cap_db)
    P = rate.shape[0]
    return overhead.factor * float(rate[:, 0].sum()) / P + float(rate[:, 1:].sum()) / P


def mimo_capacity(channels, total_power, noise_var, pilots, coherence) -> float:
    """Equal-power MIMO-OFDM rate with ideal CSI after ``pilots`` training symbols.

    (1 - pilots / T_c) · (1/P) Σ_p log2 det(I + (P_tx / N_t) H H^H / σ²).
    """
    H = np.asarray(channels, complex)
    if pilots > coherence:
        raise ValueError("pilot count exceeds the coherence length")
    nt = H.shape[-1]
    gram = H @ np.swapaxes(H.conj(), -1, -2) * (total_power / nt / noise_var)
    _, logdet = np.linalg.slogdet(np.eye(H.shape[-2]) + gram)
    return (1.0 - pilots / coherence) * float(np.mean(logdet)) / math.log(2.0)


@dataclass(frozen=True)
class BerResult:
    ber: float
    ci_low: float
    ci_high: float
    errors: int
    bits: int


def binomial_ci(errors, bits, level=0.95):
    ci = binomtest(int(errors), int(bits)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def ber_monte_carlo(scenario, trials, symbols_per_trial, rng=None, seed=None) -> BerResult:
    """End-to-end BER; ``scenario.run_trial(rng, n)`` returns (bit errors, bits).

    Every trial draws from its own child stream of ``seed`` so results do not
    depend on how trials are scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if rng is not None:
        streams = rng.spawn(trials)
    else:
        streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]
    errors = bits = 0
    for stream in streams:
        e, b = scenario.run_trial(stream, symbols_per_trial)
        errors += int(e)
        bits += int(b)
    lo, hi = binomial_ci(errors, bits)
    return BerResult(errors / bits, lo, hi, errors, bits)
