import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedvfs.dvfs import PL1, PL3, dfs_sublevel
from spikedvfs.energy import (
    TABLE_I,
    EnergyReport,
    FitError,
    PlPower,
    PowerModelParams,
    average_power,
    cycle_energy,
    decompose_power,
    default_params,
    dfs_baseline_power,
    fit_vdd_squared,
    interpolate_pl_power,
    params_for_levels,
    reports_to_csv,
)

PARAMS = default_params()
NAMES = ("PL1", "PL2", "PL3")


def test_table_values_and_monotonicity():
    assert PARAMS["PL1"] == PlPower(8.94, 14.92, 1000.0, 2.19, 730.0, 0.45)
    assert PARAMS["PL3"].p_bl == 71.17
    PARAMS.check_monotone(NAMES)
    with pytest.raises(ValueError):
        PARAMS.check_monotone(("PL3", "PL1"))
    assert PARAMS.core_share == 0.25


def test_invalid_power_values():
    with pytest.raises(ValueError):
        PlPower(10, 5, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        PlPower(1, 2, -1, 0, 0, 0)


def test_params_round_trip_and_unknown_level():
    assert PowerModelParams.from_dict(PARAMS.to_dict()) == PARAMS
    with pytest.raises(KeyError):
        PARAMS["PL9"]


def test_pure_baseline_cycle():
    e = cycle_energy("PL1", 0.0, 0, 0, PARAMS, 1.0, neuron_enabled=False, synapse_enabled=False)
    assert e.total == pytest.approx(14_920.0)  # 14.92 uJ


def test_pl1_full_cycle_example():
    e = cycle_energy("PL1", 1.0, 1000, 3030, PARAMS, 1.0)
    # 14.92 + 1.0 + 2.19 + 0.73 + 0.45 * 3.03 uJ
    assert e.total == pytest.approx(20_203.5)
    assert e.total == e.baseline_active + e.baseline_idle + e.neuron + e.synapse


def test_idle_after_processing():
    e = cycle_energy("PL3", 0.25, 0, 0, PARAMS, 1.0, idle_level="PL1", share=0.25)
    assert e.baseline_active == pytest.approx(0.25 * 71.17 * 0.25 * 1000)
    assert e.baseline_idle == pytest.approx(0.25 * 14.92 * 0.75 * 1000)


def test_overrun_has_no_idle_and_negative_time_rejected():
    e = cycle_energy("PL1", 1.3, 0, 0, PARAMS)
    assert e.baseline_idle == 0
    with pytest.raises(ValueError):
        cycle_energy("PL1", -0.1, 0, 0, PARAMS)


def test_unknown_pl():
    with pytest.raises(KeyError):
        cycle_energy("PLX", 0.1, 0, 0, PARAMS)


@settings(max_examples=50)
@given(st.sampled_from(NAMES), st.floats(0, 1), st.integers(0, 2000), st.integers(0, 100_000))
def test_finite_differences(pl, t_sp, n_neur, n_syn):
    base = cycle_energy(pl, t_sp, n_neur, n_syn, PARAMS, share=0.25)
    d_syn = cycle_energy(pl, t_sp, n_neur, n_syn + 1, PARAMS, share=0.25).total - base.total
    d_neur = cycle_energy(pl, t_sp, n_neur + 1, n_syn, PARAMS, share=0.25).total - base.total
    assert d_syn == pytest.approx(PARAMS[pl].e_syn, rel=1e-6, abs=1e-6)
    assert d_neur == pytest.approx(PARAMS[pl].e_neur, rel=1e-6, abs=1e-6)
    doubled = cycle_energy(pl, t_sp, n_neur, 2 * n_syn, PARAMS, share=0.25).synapse - base.synapse
    assert doubled == pytest.approx(PARAMS[pl].e_syn * n_syn)


@given(st.floats(0, 1), st.integers(0, 2000), st.integers(0, 100_000))
def test_energy_non_decreasing_in_pl(t_sp, n_neur, n_syn):
    totals = [cycle_energy(pl, t_sp, n_neur, n_syn, PARAMS).total for pl in NAMES]
    assert totals == sorted(totals)


def test_average_power():
    assert average_power([5000.0] * 7) == pytest.approx(5.0)
    assert average_power([5000.0] * 7, t_sys=2.0) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        average_power([])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=500))
def test_energy_conservation_identity(energies):
    p = average_power(energies, 1.0)
    assert p * len(energies) * 1000.0 == pytest.approx(math.fsum(energies), rel=1e-15, abs=1e-9)


def test_vdd_squared_fit_e_syn():
    e_norm, res = fit_vdd_squared([0.45, 0.65, 0.90], [0.7, 0.85, 1.0])
    # exact least-squares solution, computed with rational arithmetic
    assert e_norm == pytest.approx(0.9024001816008541, rel=1e-12)
    assert res == pytest.approx([-0.017386468923514434, 0.0030525095486416635, 0.002666868445393435], rel=1e-9)
    assert np.max(np.abs(res)) < 0.05


def test_vdd_squared_fit_e_neur():
    e_norm, res = fit_vdd_squared([2.19, 2.88, 3.96], [0.7, 0.85, 1.0])
    assert e_norm == pytest.approx(4.037157237255132, rel=1e-12)
    assert np.max(np.abs(res)) == pytest.approx(0.09670911129908018, rel=1e-9)


def test_vdd_squared_single_point_and_degenerate():
    e_norm, res = fit_vdd_squared([1.49], [1.0])
    assert e_norm == 1.49 and res.tolist() == [0.0]
    with pytest.raises(FitError):
        fit_vdd_squared([1.0, 2.0], [0.9, 0.9])
    with pytest.raises(FitError):
        fit_vdd_squared([], [])


def test_dfs_baseline_power():
    p1 = TABLE_I[PL1]
    assert dfs_baseline_power(p1, 125e6, 125e6) == pytest.approx(14.92)
    assert dfs_baseline_power(p1, 125e6, 10e6) == pytest.approx(9.4184)
    assert dfs_baseline_power(p1, 125e6, 0.0) == pytest.approx(8.94)
    with pytest.raises(ValueError):
        dfs_baseline_power(p1, 125e6, 200e6)


def test_params_for_dfs_and_interpolated_levels():
    dfs = dfs_sublevel(PL1, 10e6)
    params = params_for_levels((PL1, PL3, dfs))
    assert params[dfs.name].p_bl == pytest.approx(9.4184)
    assert params[dfs.name].e_syn == params["PL1"].e_syn
    # measured points reproduce themselves exactly
    for pl, p in TABLE_I.items():
        assert interpolate_pl_power(pl.voltage, pl.frequency_hz) == p
    mid = interpolate_pl_power(0.8, 300e6)
    assert TABLE_I[PL1].e_syn < mid.e_syn < TABLE_I[PL3].e_syn
    assert mid.p_bl_leak <= mid.p_bl


def test_decompose_identical_runs_give_zero():
    runs = [np.full(10, 1234.5)] * 4
    rep = decompose_power(*runs)
    assert (rep.baseline, rep.neuron, rep.synapse) == (0.0, 0.0, 0.0)


def test_decompose_closure():
    rng = np.random.default_rng(0)
    p0, p1, p2, p3 = (rng.uniform(0, 1e4, 50) for _ in range(4))
    rep = decompose_power(p0, p1, p2, p3, syn_events=500, infrastructure=48.2)
    assert rep.pe == pytest.approx(average_power(p0) - average_power(p3), rel=1e-12)
    assert rep.syn_events_per_s == pytest.approx(10_000)
    with pytest.raises(ValueError):
        decompose_power(p0, p1, p2, p3[:-1])


def test_report_rows_and_csv():
    rep = EnergyReport("x", baseline=10.0, neuron=2.0, synapse=1.0, syn_events_per_s=1e6, infrastructure=48.2)
    assert rep.pe == 13.0 and rep.total == pytest.approx(61.2)
    assert rep.e_per_syn_event_pe == pytest.approx(13.0)
    assert rep.e_per_syn_event_total == pytest.approx(61.2)
    csv = reports_to_csv([rep]).splitlines()
    assert csv[0] == "metric,x"
    assert [line.split(",")[0] for line in csv[1:]] == [title for title, _ in EnergyReport.ROWS]
    assert EnergyReport("y", 1, 1, 1, 0).e_per_syn_event_pe == math.inf
