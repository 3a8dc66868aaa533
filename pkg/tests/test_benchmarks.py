import math

import numpy as np
import pytest

from spikedvfs.benchmarks import (
    NetworkSpec,
    build_async,
    build_bursting,
    build_local,
    build_synfire,
)
from spikedvfs.synapse import EXCITATORY, INHIBITORY, decode_words


def test_local_topology(local_net):
    assert local_net.synapses_per_core().tolist() == [6400] * 4
    for core in range(4):
        assert local_net.fanouts(core).tolist() == [80] * 80
    assert len(local_net.forced_every_step) == 4 * 50
    assert set(local_net.routing_table()[0]) == {0}


def test_local_event_rate(local_net):
    per_step = sum(80 for _ in local_net.forced_every_step)
    assert per_step == 16_000
    assert build_local(firing_fraction=0.0).forced_every_step == []
    with pytest.raises(ValueError):
        build_local(firing_fraction=1.5)


def test_synfire_counts(synfire_net):
    net = synfire_net
    assert net.synapses_per_core().tolist() == [20_000] * 4
    npc = 250
    for g in range(4):
        e = np.arange(g * npc, g * npc + 200)
        i = np.arange(g * npc + 200, (g + 1) * npc)
        for post in (e[0], e[-1], i[0]):
            incoming = net.source[net.target == post]
            from_e = np.isin(incoming % npc, np.arange(200))
            expected_e = 60
            assert from_e.sum() == expected_e
            assert np.all(incoming[from_e] // npc == (g - 1) % 4)
            if post in e:
                assert (~from_e).sum() == 25
                assert np.all(incoming[~from_e] // npc == g)
            else:
                assert (~from_e).sum() == 0
    # rows onto core 1: E of group 0 (60/target over 250 targets) and I of group 1 (25/target over 200 E)
    counts = np.bincount(net.source[net.core_of(net.target) == 1], minlength=net.n_sources)
    assert counts[:200].mean() == pytest.approx(75.0)
    assert counts[450:500].mean() == pytest.approx(100.0)
    assert net.fanouts(1).mean() == pytest.approx(80.0)


def test_synfire_delays_and_types(synfire_net):
    rows = synfire_net.row_table(0)
    w, t, ty, d = decode_words(rows.words)
    # stored delay is the end-to-end delay minus the FIFO step
    assert set(d[ty == EXCITATORY].tolist()) == {9}
    assert set(d[ty == INHIBITORY].tolist()) == {7}


def test_synfire_stimulus(synfire_net):
    forced = synfire_net.forced_spikes
    assert len(forced) == 400
    times = np.array([t for t, _ in forced], dtype=float)
    senders = {s for _, s in forced}
    assert senders <= set(range(750, 950))  # E neurons of the last group
    assert np.std(times) == pytest.approx(2.4, abs=0.35)
    with pytest.raises(ValueError):
        build_synfire(groups=1)


def binomial_within_3_sigma(count, n, p):
    mean, sd = n * p, math.sqrt(n * p * (1 - p))
    return abs(count - mean) <= 3 * sd


@pytest.mark.parametrize("p_rec, builder", [(0.08, build_bursting), (0.02, build_async)])
def test_random_topology_statistics(p_rec, builder):
    net = builder()
    n = 1000
    rec = (net.source < n) & (net.source != net.target)
    for core in range(4):
        on_core = net.core_of(net.target) == core
        assert binomial_within_3_sigma((rec & on_core).sum(), 250 * 999, p_rec)
        bg = (net.source >= n) & on_core
        assert binomial_within_3_sigma(bg.sum(), 250 * 200, 0.1)
    assert not np.any((net.source == net.target) & (net.syn_type == EXCITATORY))


def test_table_ii_sizes(bursting_net, async_net):
    b = bursting_net.synapses_per_core()
    a = async_net.synapses_per_core()
    assert np.all(np.abs(b - 25_000) < 0.03 * 25_000)
    assert np.all(np.abs(a - 10_000) < 0.03 * 10_000)
    assert bursting_net.fanouts(0).mean() == pytest.approx(21, abs=1)
    assert async_net.fanouts(0).mean() == pytest.approx(8, abs=1)


def test_sfa_self_synapses(bursting_net, async_net):
    selfs = (bursting_net.source == bursting_net.target)
    assert selfs.sum() == 1000
    assert np.all(bursting_net.syn_type[selfs] == INHIBITORY)
    assert bursting_net.params.sfa and not async_net.params.sfa
    assert not np.any(async_net.source == async_net.target)


def test_zero_recurrent_probability():
    net = build_async(p_rec=0.0)
    assert np.all(net.source >= 1000)


def test_fanout_bookkeeping_matches_row_tables(bursting_net):
    for core in range(4):
        rows = bursting_net.row_table(core)
        assert sorted(rows.fanouts().tolist()) == sorted(bursting_net.fanouts(core).tolist())


def test_determinism_and_seed_dependence():
    a, b = build_bursting(seed=3), build_bursting(seed=3)
    assert a.to_json() == b.to_json()
    assert build_bursting(seed=4).to_json() != a.to_json()
    assert build_synfire(seed=1).to_json() == build_synfire(seed=1).to_json()


def test_background_spikes_are_seeded(bursting_net):
    bg = bursting_net.background
    m = bg.spike_matrix(2000)
    assert np.array_equal(m, bg.spike_matrix(2000))
    assert m.mean() == pytest.approx(0.02, abs=0.002)


def test_json_round_trip(tmp_path, synfire_net):
    path = tmp_path / "net.json"
    synfire_net.save(path)
    back = NetworkSpec.load(path)
    assert back.to_json() == synfire_net.to_json()
    d = synfire_net.to_dict()
    d["schema_version"] = 99
    with pytest.raises(ValueError):
        NetworkSpec.from_dict(d)


def test_invalid_connections():
    with pytest.raises(ValueError):
        NetworkSpec("x", 2, 1, [0], [1], [1], [0], [17], build_local().params, 1.0, 0)
    with pytest.raises(ValueError):
        NetworkSpec("x", 2, 1, [0], [5], [1], [0], [1], build_local().params, 1.0, 0)
