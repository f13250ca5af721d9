import math

import numpy as np
import pytest

from oamlink import ArrayConfig, LinkPose, UccaConfig
from oamlink.experiments import _fmt, read_csv, write_csv
from oamlink.metrics import OverheadModel
from oamlink.simulation import (
    PAPER_RADIUS,
    EstimationTask,
    LinkScenario,
    PhaseMapCase,
    Row,
    SeTask,
    UccaScenario,
    _mean_ci,
    estimation_rows,
    estimation_sweep,
    parallel_map,
    run_estimation_task,
    run_se_task,
    training_observation,
    trial_seed,
)

from conftest import TRAINING_MODES, WAVENUMBERS

UCA = ArrayConfig(9, PAPER_RADIUS)
FAR = LinkPose.from_degrees(600, 7, 7)


def test_trial_seed_streams_are_independent_and_stable():
    a = np.random.default_rng(trial_seed(1, 0, 2, 3)).random(3)
    b = np.random.default_rng(trial_seed(1, 0, 2, 3)).random(3)
    c = np.random.default_rng(trial_seed(1, 0, 2, 4)).random(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def _square(v):
    return v * v


def test_parallel_map_preserves_order():
    assert parallel_map(_square, range(20), workers=2) == [v * v for v in range(20)]
    assert parallel_map(_square, [3], workers=4) == [9]


def test_training_observation_snr(rng):
    pose = LinkPose.from_degrees(40, 7, 7)
    clean = training_observation(pose, UCA, UCA, TRAINING_MODES, WAVENUMBERS, None, rng)
    noisy = np.stack([training_observation(pose, UCA, UCA, TRAINING_MODES, WAVENUMBERS, 10.0, rng)
                      for _ in range(400)])
    ratio = np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noisy - clean) ** 2)
    assert 10 * math.log10(ratio) == pytest.approx(10.0, abs=0.3)


def test_estimation_task_and_rows():
    pose = LinkPose.from_degrees(40, 7, 7)
    base = EstimationTask(pose, UCA, UCA, TRAINING_MODES, WAVENUMBERS, 30.0, (37, 43), None)
    res = estimation_sweep([(30, base)], trials=4, seed=2, sweep_id=0)
    assert res[30].shape == (4, 5) and np.all(res[30][:, 4] == 0)
    again = run_estimation_task(EstimationTask(pose, UCA, UCA, TRAINING_MODES, WAVENUMBERS, 30.0,
                                               (37, 43), trial_seed(2, 0, 0, 1)))
    assert np.array_equal(again, res[30][1])
    rows = estimation_rows("snr_db", 30, res[30], pose, medians=True)
    metrics = [r.metric for r in rows]
    assert metrics[:4] == ["nmse_r", "nmse_gamma", "nmse_alpha", "nmse_phi"]
    assert "median_phi_deg" in metrics and metrics[-1] == "failure_rate"
    assert all(r.ci_low >= 0 for r in rows if r.metric.startswith("nmse"))


def test_failed_trials_are_counted():
    pose = LinkPose.from_degrees(40, 7, 7)
    res = np.array([[40, 0.1, 0.1, 0.1, 0], [np.nan] * 4 + [1]])
    rows = estimation_rows("x", 1, res, pose)
    assert rows[-1].value == 0.5


def test_mean_ci():
    m, lo, hi = _mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0 and lo < 2 < hi
    assert math.isnan(_mean_ci([1.0])[1])
    assert _mean_ci([0.0, 0.0, 10.0])[1] == 0.0


def test_link_scenario_receivers(rng):
    with pytest.raises(ValueError):
        LinkScenario(UCA, UCA, FAR, (0,), WAVENUMBERS, 20.0, receiver="oracle")
    kw = dict(training_modes=TRAINING_MODES, training_wavenumbers=WAVENUMBERS, prior=(597, 603))
    aligned = LinkScenario(UCA, UCA, FAR, (-2, -1, 0, 1, 2), WAVENUMBERS, 60.0, "aligned", **kw)
    assert aligned.channel_pose.azimuth == 0.0
    e, b = aligned.run_trial(rng, 400)
    assert b == 8 * 5 * 10 * 4 and e == 0
    est = LinkScenario(UCA, UCA, FAR, (-2, -1, 0, 1, 2), WAVENUMBERS, 40.0, "estimated", **kw)
    pose, ok = est.detector_pose(np.random.default_rng(0))
    assert ok and pose.distance == pytest.approx(600, abs=0.05)
    unsteered = LinkScenario(UCA, UCA, FAR, (-2, -1, 0, 1, 2), WAVENUMBERS, 40.0, "unsteered", **kw)
    true = LinkScenario(UCA, UCA, FAR, (-2, -1, 0, 1, 2), WAVENUMBERS, 40.0, "true", **kw)
    assert np.mean(true.sinr_table(rng)) > 10 * np.mean(unsteered.sinr_table(rng))


def test_noise_calibration_matches_snr():
    sc = LinkScenario(UCA, UCA, FAR, (-2, -1, 0, 1, 2), WAVENUMBERS, 20.0, "aligned")
    H = sc.channels()
    from oamlink.channel import mode_matrix

    S = H @ mode_matrix(9, sc.modes).conj().T
    assert np.mean(np.sum(np.abs(S) ** 2, -1)) / sc.noise_var(H) == pytest.approx(100.0)


def test_se_task_runs():
    sc = LinkScenario(UCA, UCA, FAR, (-2, -1, 0, 1, 2), WAVENUMBERS, 20.0, "aligned")
    se = run_se_task(SeTask(sc, OverheadModel(256, 8, 8, 8), trial_seed(0, 1)))
    assert 0 < se < 5 * math.log2(1 + 1000)


def test_ucca_scenario_shapes():
    u = UccaConfig.from_radii(16, [PAPER_RADIUS, 2 * PAPER_RADIUS])
    sc = UccaScenario(u, u, LinkPose.from_degrees(40, 7, 7), (-2, 0, 2), WAVENUMBERS[:2], 20.0,
                      "aligned", training_modes=TRAINING_MODES, training_wavenumbers=WAVENUMBERS)
    tab = sc.sinr_table(np.random.default_rng(0))
    assert tab.shape == (2, 2, 3) and np.all(tab > 0)
    assert sc.transmit_matrix().shape == (32, 6)
    assert sc.mimo_baseline(pilots=32) > 0


def test_phase_map_case():
    case = PhaseMapCase((2,), resolution=128)
    winds, arms = case.analyse(case.raster())
    assert winds == [2, 2, 2]


def test_csv_formatting(tmp_path):
    assert _fmt(3.0) == "3" and _fmt(0.1) == "0.1" and _fmt(float("nan")) == "nan"
    assert _fmt(np.int64(4)) == "4" and _fmt(True) == "1" and _fmt("a,b") == "a,b"
    p = write_csv([Row("s", "1,2", "m", 0.25)], tmp_path / "t.csv")
    assert p.read_bytes() == b'sweep,x,metric,value,ci_low,ci_high\r\ns,"1,2",m,0.25,nan,nan\r\n'
    assert read_csv(p)[0]["x"] == "1,2"
