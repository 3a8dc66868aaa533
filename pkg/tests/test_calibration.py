import math

import numpy as np
import pytest

from spikedvfs.benchmarks import build_async, build_bursting
from spikedvfs.dvfs import (
    CalibrationError,
    CalibrationTarget,
    calibrate_costs,
    derive_worstcase_thresholds,
)
from spikedvfs.engine import WorkloadCosts
from spikedvfs.harness import DEFAULT_COSTS

CAPS = (125_000.0, 333_000.0)


def grid_feasible(fanouts, n_neur, c_other, targets, c_neur, c_syn, c_pre):
    """Vectorised check of the threshold conditions over a cost grid."""
    g = np.concatenate([[0.0], np.cumsum(np.sort(fanouts)[::-1])])
    ok = np.ones(np.broadcast(c_neur, c_syn, c_pre).shape, dtype=bool)
    for cap, th in zip(CAPS, targets):
        def worst(l):
            return n_neur * c_neur + c_other + c_syn * g[l] + c_pre * l
        ok &= (worst(th - 1) < cap) & (worst(th) >= cap)
    return ok


def test_default_costs_reproduce_bursting_and_async():
    b, a = build_bursting(), build_async()
    assert derive_worstcase_thresholds(b.fanouts(0), DEFAULT_COSTS, 250, CAPS) == (47, 214)
    got = derive_worstcase_thresholds(a.fanouts(0), DEFAULT_COSTS, 250, CAPS)
    assert all(abs(x - y) <= 2 for x, y in zip(got, (47, 229)))


def test_calibration_recovers_default_costs_on_benchmarks():
    b, a = build_bursting(), build_async()
    res = calibrate_costs(
        [CalibrationTarget("bursting", b.fanouts(0), 250, CAPS, (47, 214), True),
         CalibrationTarget("async", a.fanouts(0), 250, CAPS, (47, 229), False)],
        c_other=DEFAULT_COSTS.c_other, c_est=DEFAULT_COSTS.c_est, fit_workloads=[(80, 4000, 50, CAPS[0])],
    )
    assert res.costs == DEFAULT_COSTS
    assert res.achieved["bursting"] == (47, 214)
    assert res.exact and res.margin > 0 and res.resolution == 0.5


def test_integer_grid_oracle_agrees_with_default_costs():
    """Brute-force grid search: the calibrated point is feasible, and so is a whole region."""
    b = build_bursting()
    f = b.fanouts(0)
    c_neur, c_syn, c_pre = np.meshgrid(np.arange(200, 301), np.arange(10, 21, 0.5), np.arange(700, 901),
                                       indexing="ij")
    ok = grid_feasible(f, 250, DEFAULT_COSTS.c_other, (47, 214), c_neur, c_syn, c_pre)
    assert ok.sum() > 0
    i = (int(DEFAULT_COSTS.c_neur) - 200, int((DEFAULT_COSTS.c_syn - 10) / 0.5), int(DEFAULT_COSTS.c_pre_spike) - 700)
    assert ok[i]
    # every grid point flagged feasible really reproduces the thresholds
    idx = np.argwhere(ok)[:: max(1, ok.sum() // 25)]
    for n, s, p in idx:
        costs = WorkloadCosts(c_neur[n, s, p], c_syn[n, s, p], c_pre[n, s, p], DEFAULT_COSTS.c_other)
        assert derive_worstcase_thresholds(f, costs, 250, CAPS) == (47, 214)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_round_trip_on_synthetic_networks(seed):
    rng = np.random.default_rng(seed)
    truth = WorkloadCosts(c_neur=float(rng.integers(100, 300)), c_syn=float(rng.integers(5, 30)),
                          c_pre_spike=float(rng.integers(200, 1200)), c_other=1500.0)
    targets = []
    for i in range(3):
        f = rng.integers(1, 120, size=400)
        th = derive_worstcase_thresholds(f, truth, 250, CAPS)
        targets.append(CalibrationTarget(f"net{i}", f, 250, CAPS, th, True))
    res = calibrate_costs(targets, c_other=truth.c_other)
    for t in targets:
        assert res.achieved[t.name] == t.l_th
    assert res.exact


def test_infinite_target_threshold():
    f = np.full(50, 10)
    truth = WorkloadCosts(100, 10, 100, 0)
    th = derive_worstcase_thresholds(f, truth, 250, CAPS)
    assert th[1] == math.inf
    f2 = np.full(300, 40)
    th2 = derive_worstcase_thresholds(f2, truth, 250, CAPS)
    res = calibrate_costs([CalibrationTarget("a", f, 250, CAPS, th, True),
                           CalibrationTarget("b", f2, 250, CAPS, th2, True)])
    assert res.achieved["a"] == th and res.achieved["b"] == th2


def test_soft_targets_report_residuals():
    f = np.full(400, 20)
    t1 = CalibrationTarget("hard", f, 250, CAPS, (50, 200), True)
    t2 = CalibrationTarget("soft", f, 250, CAPS, (60, 150), False)  # contradicts the hard one
    res = calibrate_costs([t1, t2])
    assert res.achieved["hard"] == (50, 200)
    assert any(r != 0 for r in res.residuals["soft"])
    assert res.notes and "soft" in res.notes[0]


def test_infeasible_exact_targets():
    f = np.full(400, 20)
    with pytest.raises(CalibrationError):
        calibrate_costs([CalibrationTarget("a", f, 250, CAPS, (50, 200), True),
                         CalibrationTarget("b", f, 250, CAPS, (60, 150), True)])


def test_needs_two_targets():
    with pytest.raises(CalibrationError):
        calibrate_costs([CalibrationTarget("a", np.full(10, 5), 250, CAPS, (5, 9), True)])


def test_threshold_beyond_input_count():
    with pytest.raises(CalibrationError):
        calibrate_costs([CalibrationTarget("a", np.full(10, 5), 250, CAPS, (5, 11), True),
                         CalibrationTarget("b", np.full(10, 5), 250, CAPS, (5, 9), True)])
