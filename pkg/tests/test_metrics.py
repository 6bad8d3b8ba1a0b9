import numpy as np
import pytest

from ccpstress.contagion import ContagionTrajectory
from ccpstress.metrics import (
    aggregate,
    residual_default_fund,
    residual_equity,
    vulnerability_report,
)

from _builders import snapshot


def _traj(rows):
    h = np.array(rows, dtype=float)
    n = len(h) - 1
    return ContagionTrajectory(h, np.ones(h.shape[1], dtype=int), np.zeros(max(n - 1, 0)),
                               np.zeros(max(n - 1, 0)), n, True)


@pytest.fixture
def snap():
    return snapshot(np.array([100.0, 100.0]), a_int=np.array([50.0, 0.0]),
                    ue=np.array([3.0, 5.0]), df=10.0)


def test_residual_equity_hand_example(snap):
    tr = _traj([[0, 0], [0.1, 0.05], [0.5, 0.25]])
    assert residual_equity(tr, snap, 1) == 1.0
    assert residual_equity(tr, snap, 2) == pytest.approx(1 - 60 / 185, abs=1e-15)


def test_residual_default_fund(snap):
    tr = _traj([[0, 0], [0.1, 0.0], [1.0, 0.2], [1.0, 1.0]])
    assert residual_default_fund(tr, snap, 1) == 1.0
    assert residual_default_fund(tr, snap, 2) == pytest.approx(0.7)
    assert residual_default_fund(tr, snap, 3) == pytest.approx(0.2)
    # past the stop the stationary state is reused
    assert residual_default_fund(tr, snap, 9) == pytest.approx(0.2)


def test_exhausted_and_negative_fund():
    s = snapshot(np.ones(2), ue=np.array([4.0, 6.0]), df=10.0)
    tr = _traj([[0, 0], [1.0, 1.0]])
    assert residual_default_fund(tr, s, 1) == 0.0
    s2 = snapshot(np.ones(2), ue=np.array([5.9, 5.9]), df=10.0)
    rep = vulnerability_report(tr, s2, 3)
    np.testing.assert_allclose(rep.r_df, -0.18)
    np.testing.assert_array_equal(rep.r_df_clamped, 0.0)


def test_report_series_and_triplets(snap):
    tr = _traj([[0, 0], [0.1, 0.05], [0.5, 0.25], [1.0, 0.3]])
    rep = vulnerability_report(tr, snap, 5)
    assert rep.max_round == 5
    np.testing.assert_array_equal(rep.h1, [0.1, 0.05])
    np.testing.assert_array_equal(rep.h2, [0.5, 0.25])
    np.testing.assert_array_equal(rep.hstar, [1.0, 0.3])
    np.testing.assert_array_equal(rep.leverage, [0.5, 0.0])
    assert rep.r_re[0] == 1.0
    assert np.all(np.diff(rep.r_re) <= 0) and np.all(np.diff(rep.r_df) <= 0)
    assert [list(d) for d in rep.defaulted] == [[], [], [0], [0], [0]]
    np.testing.assert_allclose(rep.total_vulnerability, [0.15, 0.75, 1.3, 1.3, 1.3])
    np.testing.assert_array_equal(rep.order, [0, 1])


def test_aggregate_is_mean_of_reports(snap):
    reps = [vulnerability_report(_traj([[0, 0], [a, b], [2 * a, 2 * b]]), snap, 3)
            for a, b in [(0.1, 0.2), (0.3, 0.1), (0.2, 0.4)]]
    agg = aggregate(reps, snap.ids)
    np.testing.assert_allclose(agg.h2, np.mean([r.h2 for r in reps], axis=0))
    np.testing.assert_allclose(agg.r_re, np.mean([r.r_re for r in reps], axis=0))
    np.testing.assert_allclose(agg.h1_se, np.std([r.h1 for r in reps], axis=0, ddof=1) / np.sqrt(3))
    assert agg.ensemble_size == 3
    assert agg.at_round("r_re", 2) == agg.r_re[1]


def test_no_equity_left_after_shock():
    s = snapshot(np.ones(2))
    tr = _traj([[0, 0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        residual_equity(tr, s, 1)
    assert np.isnan(vulnerability_report(tr, s).r_re).all()
