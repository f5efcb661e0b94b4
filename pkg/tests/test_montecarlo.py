import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigidloc.config import ExperimentConfig
from rigidloc.geometry import elementary_rotation, rotation_exp
from rigidloc.montecarlo import (
    bias_rotation,
    bias_standard_error,
    crb_table,
    csv_header,
    format_csv,
    mae_rotation,
    rmse_positions,
    rmse_rotation,
    rmse_translation,
    run_experiment,
    trial_anchors,
)

from conftest import random_rotation

PLANAR = tuple((x, y, 0.0) for x, y in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (2, 2), (3, 0), (0, 3), (3, 3)])


def test_rmse_examples():
    Q = rotation_exp([0.1, 0.2, 0.3])
    assert rmse_rotation([Q, Q], Q) == 0.0
    E = np.zeros((3, 3))
    E[0, 0] = 2.0
    assert rmse_rotation([Q + E], Q) == pytest.approx(2.0)
    E2 = np.zeros((3, 3))
    E2[1, 2] = math.sqrt(7)
    assert rmse_rotation([Q + E / 2, Q + E2], Q) == pytest.approx(2.0)


def test_rmse_translation_and_positions():
    t = np.array([1.0, 2.0, 3.0])
    assert rmse_translation([t + [3, 4, 0], t - [0, 0, 5]], t) == pytest.approx(5.0)
    S = np.zeros((3, 4))
    assert rmse_positions([S + 1.0], S) == pytest.approx(math.sqrt(12))


def test_mae_examples():
    Q = random_rotation(np.random.default_rng(0))
    assert mae_rotation([Q], Q) == pytest.approx(0.0, abs=1e-3)
    turned = Q @ elementary_rotation(2, np.pi / 2)
    # Diagonal of Q^T Qhat is (0, 0, 1): arccos sum is pi per trial.
    assert mae_rotation([turned, turned], Q) == pytest.approx(math.sqrt(math.pi))


def test_mae_normalises_columns():
    Q = random_rotation(np.random.default_rng(1))
    scaled = Q * np.array([2.0, 0.5, 3.0])
    # arccos near 1 followed by a square root turns round-off into ~eps**0.25.
    assert mae_rotation([scaled], Q) == pytest.approx(0.0, abs=1e-3)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_mae_bounded(seed):
    rng = np.random.default_rng(seed)
    Q = random_rotation(rng)
    trials = [random_rotation(rng) * rng.choice([-1, 1]) for _ in range(5)]
    assert 0 <= mae_rotation(trials, Q) <= math.sqrt(3 * math.pi)


def test_bias_examples():
    rng = np.random.default_rng(2)
    Q = random_rotation(rng)
    E = rng.standard_normal((3, 3))
    assert bias_rotation([Q, Q], Q) == 0.0
    assert bias_rotation([Q + E, Q - E], Q) == pytest.approx(0.0, abs=1e-14)
    R = rotation_exp([0.0, 0.0, 0.2])
    assert bias_rotation([np.eye(3), R], np.eye(3)) == pytest.approx(0.5 * np.linalg.norm(R - np.eye(3)))


def test_bias_standard_error():
    assert math.isnan(bias_standard_error([np.eye(3)]))
    rng = np.random.default_rng(3)
    X = rng.standard_normal((4000, 3, 3))
    assert bias_standard_error(X) == pytest.approx(math.sqrt(9 / 4000), rel=0.05)


def test_noiseless_single_trial():
    rows = run_experiment(ExperimentConfig(trials=1, zeta_db=(300.0,)))
    for mm in rows[0].methods.values():
        assert mm.rmse_q < 1e-6 and mm.rmse_t < 1e-6 and mm.rmse_s < 1e-6
        assert mm.failures == 0
    assert rows[0].classical_rmse_s < 1e-6


def test_deterministic_and_parallel_identical():
    cfg = ExperimentConfig(trials=12, zeta_db=(40.0, 80.0), seed=5)
    a = format_csv(run_experiment(cfg), cfg.estimators)
    b = format_csv(run_experiment(cfg), cfg.estimators)
    c = format_csv(run_experiment(cfg.with_overrides(workers=2)), cfg.estimators)
    assert a == b == c


def test_sweep_composition_does_not_change_rows():
    cfg = ExperimentConfig(trials=8, zeta_db=(50.0, 70.0), seed=6)
    joint = run_experiment(cfg)
    alone = run_experiment(cfg.with_overrides(zeta_db=(70.0,)))
    assert format_csv(joint[1:], cfg.estimators).splitlines()[1] == format_csv(alone, cfg.estimators).splitlines()[1]


def test_fixed_anchor_mode():
    cfg = ExperimentConfig(fixed_anchors=True, seed=7)
    assert np.array_equal(trial_anchors(cfg, 0), trial_anchors(cfg, 5))
    cfg = cfg.with_overrides(fixed_anchors=False)
    assert not np.array_equal(trial_anchors(cfg, 0), trial_anchors(cfg, 5))
    pts = ((0, 0, 0), (500, 0, 0), (0, 500, 0), (0, 0, 500))
    assert np.array_equal(trial_anchors(ExperimentConfig(anchor_points=pts), 3), np.array(pts, float).T)


def test_failures_are_counted_and_excluded():
    cfg = ExperimentConfig(trials=5, zeta_db=(80.0,), topology_points=PLANAR)
    row = run_experiment(cfg)[0]
    assert row.methods["ls"].failures == 5
    assert math.isnan(row.methods["ls"].rmse_q)
    text = format_csv([row], cfg.estimators)
    header, values = text.splitlines()
    cells = dict(zip(header.split(","), values.split(",")))
    assert cells["ls_rmse_q"] == "nan"
    assert cells["ls_failures"] == "5"


def test_csv_layout():
    cfg = ExperimentConfig(trials=3, zeta_db=(60.0, 80.0))
    rows = run_experiment(cfg)
    lines = format_csv(rows, cfg.estimators).splitlines()
    header = lines[0].split(",")
    assert header == csv_header(cfg.estimators)
    assert header[0] == "zeta_db" and "ouc_tls_rmse_q" in header and "rcrb_q" in header and "rcrb_t" in header
    assert len(lines) == 3
    for line in lines[1:]:
        for cell in line.split(","):
            assert cell == "nan" or math.isfinite(float(cell))
    assert lines[1].split(",")[0] == f"{60.0:.17e}"


def test_crb_table_matches_sweep():
    cfg = ExperimentConfig(trials=6, zeta_db=(60.0, 90.0), seed=8)
    rows = run_experiment(cfg)
    table = crb_table(cfg)
    for row, entry in zip(rows, table):
        assert row.rcrb_q == entry["rcrb_q"] and row.rcrb_t == entry["rcrb_t"]


def test_rmse_monotone_in_reference_range():
    cfg = ExperimentConfig(trials=300, zeta_db=tuple(range(20, 101, 10)), seed=9, estimators=("ouc-ls",))
    rmse = [row.methods["ouc-ls"].rmse_q for row in run_experiment(cfg)]
    for lo, hi in zip(rmse, rmse[1:]):
        assert hi <= lo * 1.05


@pytest.fixture(scope="module")
def high_snr_rows():
    cfg = ExperimentConfig(trials=500, zeta_db=(60.0, 80.0, 100.0), seed=10, fixed_anchors=True)
    return run_experiment(cfg)


def test_ouc_not_worse_than_suc_at_high_snr(high_snr_rows):
    for row in high_snr_rows:
        assert row.methods["ouc-ls"].rmse_q <= row.methods["suc-ls"].rmse_q * 1.05


def test_unconstrained_ls_tracks_its_bound(high_snr_rows):
    for row in high_snr_rows:
        assert row.methods["ls"].rmse_q == pytest.approx(row.rcrb_q_unc, rel=0.1)


def test_ta_localization_beats_classical(high_snr_rows):
    for row in high_snr_rows:
        assert row.methods["ouc-ls"].rmse_s < row.classical_rmse_s


def test_metrics_nonnegative(high_snr_rows):
    for row in high_snr_rows:
        for mm in row.methods.values():
            for value in (mm.rmse_q, mm.mae_q, mm.bias_q, mm.rmse_t, mm.rmse_s):
                assert value >= 0
