import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamlink.metrics import (
    OverheadModel,
    QamConstellation,
    add_awgn,
    awgn_ber_qam,
    ber_monte_carlo,
    binomial_ci,
    mimo_capacity,
    nmse,
    noise_variance,
    qam_demodulate,
    qam_modulate,
    sinr,
    sinr_ucca,
    spectral_efficiency,
    spectral_efficiency_ucca,
)

from oracles import ber_16qam, ber_4qam, q


@pytest.mark.parametrize("order", [4, 16, 64, 256])
def test_qam_unit_energy_and_gray(order):
    qam = QamConstellation(order)
    pts = qam.points()
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)
    # nearest neighbours differ in exactly one bit
    dmin = np.min(np.abs(pts[:, None] - pts[None, :]) + 10 * np.eye(order))
    for a in range(order):
        near = np.flatnonzero(np.abs(np.abs(pts - pts[a]) - dmin) < 1e-9)
        for b in near:
            assert bin(a ^ b).count("1") == 1


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([4, 16, 64]), st.integers(0, 2**32 - 1))
def test_qam_roundtrip(order, seed):
    r = np.random.default_rng(seed)
    bits = r.integers(0, 2, size=int(math.log2(order)) * 37, dtype=np.uint8)
    assert np.array_equal(qam_demodulate(qam_modulate(bits, order), order), bits)


def test_qam_rejects_bad_input():
    with pytest.raises(ValueError):
        QamConstellation(8)
    with pytest.raises(ValueError):
        qam_modulate([1, 0, 1], 16)
    with pytest.raises(ValueError):
        qam_modulate([2, 0, 1, 0], 16)


@pytest.mark.parametrize("db", [0.0, 6.0, 12.0, 18.0])
def test_awgn_ber_formula_matches_q_function(db):
    esn0 = 10 ** (db / 10)
    assert awgn_ber_qam(16, db) == pytest.approx(ber_16qam(esn0), rel=1e-10)
    assert awgn_ber_qam(4, db) == pytest.approx(ber_4qam(esn0), rel=1e-10)


def test_64qam_high_snr_asymptote():
    esn0 = 10 ** 2.4
    approx = 4 / 6 * (1 - 1 / 8) * q(math.sqrt(3 * esn0 / 63))
    assert awgn_ber_qam(64, 24.0) == pytest.approx(approx, rel=0.02)


def test_monte_carlo_ber_matches_theory():
    class Awgn:
        qam = QamConstellation(16)

        def run_trial(self, rng, n):
            bits = rng.integers(0, 2, size=4 * n, dtype=np.uint8)
            y = add_awgn(self.qam.modulate(bits), noise_variance(1.0, 10.0), rng)
            return int(np.count_nonzero(self.qam.demodulate(y) != bits)), bits.size

    res = ber_monte_carlo(Awgn(), trials=10, symbols_per_trial=20000, seed=3)
    assert res.ci_low <= ber_16qam(10.0) <= res.ci_high
    again = ber_monte_carlo(Awgn(), trials=10, symbols_per_trial=20000, seed=3)
    assert again == res
    with pytest.raises(ValueError):
        ber_monte_carlo(Awgn(), 0, 10, seed=1)


def test_awgn_variance(rng):
    n = add_awgn(np.zeros(200000), 0.5, rng)
    assert np.var(n) == pytest.approx(0.5, rel=0.02)
    assert abs(np.mean(n.real * n.imag)) < 0.01


def test_binomial_ci_contains_estimate():
    lo, hi = binomial_ci(10, 1000)
    assert lo < 0.01 < hi
    assert binomial_ci(0, 100)[0] == 0.0


def test_nmse():
    assert nmse([1.1, 0.9], [1.0, 1.0]) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        nmse([1.0], [0.0])


def test_sinr_interference_free_is_infinite_without_noise():
    h = np.diag([1.0, 2.0]).astype(complex)
    assert np.all(np.isinf(sinr(h, np.diag(h), 0.0)))
    assert np.allclose(sinr(h, np.diag(h), 0.5), [2.0, 8.0])


def test_sinr_counts_leakage_and_gain_error():
    h = np.array([[1.0, 0.1], [0.2, 1.0]], complex)
    z = np.array([0.9, 1.0])
    s = sinr(h, z, 0.01)
    assert s[0] == pytest.approx(0.81 / (0.01 + 0.01 + 0.01))
    assert s[1] == pytest.approx(1.0 / (0.04 + 0.01))


def test_sinr_ucca_identity_gain():
    h = np.eye(4, dtype=complex)
    assert np.allclose(sinr_ucca(h, h, 0.1), 10.0)
    g = 2 * np.eye(4)
    assert np.allclose(sinr_ucca(2 * h, g, 0.1), 40.0)


def test_overhead_model():
    assert OverheadModel(256, 8, 64, 8).factor == pytest.approx(1 - 64 / 16384)
    with pytest.raises(ValueError):
        OverheadModel(4, 8, 1, 8)
    with pytest.raises(ValueError):
        OverheadModel(0, 1, 1, 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_lower_overhead_never_lowers_se(t1, t2, seed):
    table = np.random.default_rng(seed).exponential(10.0, size=(8, 5))
    lo, hi = sorted((t1, t2))
    a = spectral_efficiency(table, OverheadModel(256, lo, 8, 8))
    b = spectral_efficiency(table, OverheadModel(256, hi, 8, 8))
    assert a >= b


def test_se_values_and_cap():
    table = np.full((4, 2), 3.0)
    assert spectral_efficiency(table, OverheadModel(256, 0, 4, 4)) == pytest.approx(4.0)
    inf = np.full((1, 1), np.inf)
    assert spectral_efficiency(inf, OverheadModel(1, 0, 1, 1), cap_db=30) == pytest.approx(math.log2(1001))
    t3 = np.full((2, 3, 2), 3.0)
    ov = OverheadModel(256, 8, 2, 2)
    expected = ov.factor * 2 * 2 + 2 * 2 * 2
    assert spectral_efficiency_ucca(t3, ov) == pytest.approx(expected)


def test_mimo_capacity_identity():
    H = np.stack([np.eye(4, dtype=complex)] * 3)
    c = mimo_capacity(H, total_power=4.0, noise_var=1.0, pilots=0, coherence=10)
    assert c == pytest.approx(4.0)
    assert mimo_capacity(H, 4.0, 1.0, 5, 10) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        mimo_capacity(H, 4.0, 1.0, 11, 10)
