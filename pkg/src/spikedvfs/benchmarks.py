"""Deterministic construction of the benchmark networks on 4 cores.

Neuron ``i`` lives on core ``i // neurons_per_core``. Sources with ids at or
above ``n_neurons`` are external: Poisson background neurons whose spikes are
pre-generated and read from memory rather than routed.

Connection delays are end-to-end delays in timesteps (1..16). The spike FIFO
accounts for one timestep, so the synapse word stores ``delay - 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import NeuronParams
from .synapse import EXCITATORY, INHIBITORY, RowTable, encode_words

SCHEMA_VERSION = 1


@dataclass
class Background:
    """Poisson background population, pre-generated from ``seed``."""

    first_id: int
    n_sources: int
    rate_hz: float
    seed: int

    def spike_matrix(self, k_max: int, t_sys_ms: float = 1.0) -> np.ndarray:
        """Boolean (k_max, n_sources) spike matrix; at most one spike per step."""
        rng = np.random.Generator(np.random.Philox(key=[self.seed, 0xB6]))
        p = min(1.0, self.rate_hz * t_sys_ms * 1e-3)
        return rng.random((k_max, self.n_sources)) < p


@dataclass
class NetworkSpec:
    name: str
    neurons_per_core: int
    n_cores: int
    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray
    syn_type: np.ndarray
    delay: np.ndarray
    params: NeuronParams
    weight_scale: float
    seed: int
    background: Background | None = None
    forced_spikes: list[tuple[int, int]] = field(default_factory=list)
    forced_every_step: list[int] = field(default_factory=list)
    count_thresholds: tuple[float, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=np.int64)
        self.target = np.asarray(self.target, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.int64)
        self.syn_type = np.asarray(self.syn_type, dtype=np.int64)
        self.delay = np.asarray(self.delay, dtype=np.int64)
        n = self.source.size
        if not all(a.size == n for a in (self.target, self.weight, self.syn_type, self.delay)):
            raise ValueError("connection arrays differ in length")
        if n and (self.delay.min() < 1 or self.delay.max() > 16):
            raise ValueError("delays must lie in 1..16 timesteps")
        if n and (self.target.min() < 0 or self.target.max() >= self.n_neurons):
            raise ValueError("connection target outside the network")

    @property
    def n_neurons(self) -> int:
        return self.neurons_per_core * self.n_cores

    @property
    def n_sources(self) -> int:
        extra = self.background.n_sources if self.background else 0
        return self.n_neurons + extra

    def core_of(self, neuron):
        return np.asarray(neuron) // self.neurons_per_core

    def row_table(self, core: int) -> RowTable:
        mask = self.core_of(self.target) == core
        words = encode_words(
            self.weight[mask],
            self.target[mask] % self.neurons_per_core,
            self.syn_type[mask],
            self.delay[mask] - 1,
        )
        return RowTable(self.source[mask], words, self.n_sources)

    def synapses_per_core(self) -> np.ndarray:
        return np.bincount(self.core_of(self.target), minlength=self.n_cores)

    def fanouts(self, core: int) -> np.ndarray:
        """Fan-outs of every input source of ``core`` (construction-time counts)."""
        mask = self.core_of(self.target) == core
        counts = np.bincount(self.source[mask], minlength=self.n_sources)
        return counts[counts > 0]

    def routing_table(self) -> dict[int, tuple[int, ...]]:
        """Multicast routes: network neuron -> cores holding any of its targets."""
        cores = self.core_of(self.target)
        pairs = np.unique(np.stack([self.source, cores], axis=1), axis=0) if self.source.size else np.zeros((0, 2), int)
        routes: dict[int, list[int]] = {}
        for s, c in pairs:
            if s < self.n_neurons:
                routes.setdefault(int(s), []).append(int(c))
        return {s: tuple(c) for s, c in routes.items()}

    # --- serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "neurons_per_core": self.neurons_per_core,
            "n_cores": self.n_cores,
            "seed": self.seed,
            "weight_scale": self.weight_scale,
            "params": self.params.to_dict(),
            "connections": {
                "source": self.source.tolist(),
                "target": self.target.tolist(),
                "weight": self.weight.tolist(),
                "type": self.syn_type.tolist(),
                "delay": self.delay.tolist(),
            },
            "background": None if self.background is None else {
                "first_id": self.background.first_id,
                "n_sources": self.background.n_sources,
                "rate_hz": self.background.rate_hz,
                "seed": self.background.seed,
            },
            "forced_spikes": [list(x) for x in self.forced_spikes],
            "forced_every_step": list(self.forced_every_step),
            "count_thresholds": None if self.count_thresholds is None else list(self.count_thresholds),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported network schema version {d.get('schema_version')}")
        c = d["connections"]
        bg = d.get("background")
        ct = d.get("count_thresholds")
        return cls(
            name=d["name"],
            neurons_per_core=d["neurons_per_core"],
            n_cores=d["n_cores"],
            source=c["source"],
            target=c["target"],
            weight=c["weight"],
            syn_type=c["type"],
            delay=c["delay"],
            params=NeuronParams.from_dict(d["params"]),
            weight_scale=d["weight_scale"],
            seed=d["seed"],
            background=Background(**bg) if bg else None,
            forced_spikes=[tuple(x) for x in d.get("forced_spikes", [])],
            forced_every_step=list(d.get("forced_every_step", [])),
            count_thresholds=tuple(float(x) for x in ct) if ct is not None else None,
            meta=d.get("meta", {}),
        )

    @classmethod
    def load(cls, path: str | Path) -> "NetworkSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _weight_int(value: float, scale: float) -> int:
    w = int(round(value / scale))
    if not 0 <= w <= 0xFFFF:
        raise ValueError(f"weight {value} does not fit 16 bits at scale {scale}")
    return w


# default weight resolution: conductance units (relative to leak) per LSB
WEIGHT_SCALE = 1.0 / 4096


def build_local(neurons_per_core: int = 80, firing_fraction: float = 0.625, n_firing: int | None = None,
                n_cores: int = 4, seed: int = 0) -> NetworkSpec:
    """All-to-all connectivity within each core, none between cores.

    ``n_firing`` (default ``round(firing_fraction * neurons_per_core)``)
    neurons per core are forced to fire every timestep; weights are zero so
    nothing else fires.
    """
    if not 0.0 <= firing_fraction <= 1.0:
        raise ValueError("firing_fraction must lie in [0, 1]")
    if n_firing is None:
        n_firing = int(round(firing_fraction * neurons_per_core))
    src, tgt = [], []
    for c in range(n_cores):
        ids = np.arange(c * neurons_per_core, (c + 1) * neurons_per_core)
        s, t = np.meshgrid(ids, ids, indexing="ij")
        src.append(s.ravel())
        tgt.append(t.ravel())
    src = np.concatenate(src)
    tgt = np.concatenate(tgt)
    forced = [c * neurons_per_core + i for c in range(n_cores) for i in range(n_firing)]
    return NetworkSpec(
        name="local",
        neurons_per_core=neurons_per_core,
        n_cores=n_cores,
        source=src,
        target=tgt,
        weight=np.zeros(src.size, dtype=np.int64),
        syn_type=np.full(src.size, EXCITATORY),
        delay=np.ones(src.size, dtype=np.int64),
        params=NeuronParams(),
        weight_scale=WEIGHT_SCALE,
        seed=seed,
        forced_every_step=forced,
        meta={"n_firing_per_core": n_firing},
    )


SYNFIRE_PARAMS = NeuronParams(
    tau_m=10.0, e_leak=-70.0, v_thresh=-55.0, v_reset=-70.0, t_ref=2,
    e_exc=0.0, e_inh=-75.0, tau_exc=1.5, tau_inh=10.0,
    noise_mean=5.0, noise_std=4.0,
)


def build_synfire(groups: int = 4, e_per_group: int = 200, i_per_group: int = 50, seed: int = 0, *,
                  k_ee: int = 60, k_ei: int = 60, k_ie: int = 25,
                  w_ee: float = 0.05, w_ei: float = 0.05, w_ie: float = 0.5,
                  delay_between: int = 10, delay_within: int = 8,
                  packet_spikes: int = 400, packet_sigma_ms: float = 2.4, packet_time_ms: float = 20.0,
                  params: NeuronParams = SYNFIRE_PARAMS) -> NetworkSpec:
    """Synfire chain with feed-forward inhibition, one group per core.

    E(g-1) -> E(g) and E(g-1) -> I(g) with ``k_ee``/``k_ei`` presynaptic
    partners per target, I(g) -> E(g) with ``k_ie``; the last group feeds the
    first. The stimulus packet is sent by the E neurons of the last group
    (on the last core) into group 0.
    """
    if groups < 2:
        raise ValueError("a synfire chain needs at least 2 groups")
    npc = e_per_group + i_per_group
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x5F]))
    src, tgt, w, typ, dly = [], [], [], [], []

    def e_ids(g):
        return g * npc + np.arange(e_per_group)

    def i_ids(g):
        return g * npc + e_per_group + np.arange(i_per_group)

    def connect(pre, post, k, weight, t, d):
        for p in post:
            chosen = rng.choice(pre, size=k, replace=False)
            src.append(np.sort(chosen))
            tgt.append(np.full(k, p))
            w.append(np.full(k, _weight_int(weight, WEIGHT_SCALE)))
            typ.append(np.full(k, t))
            dly.append(np.full(k, d))

    for g in range(groups):
        prev = (g - 1) % groups
        connect(e_ids(prev), e_ids(g), k_ee, w_ee, EXCITATORY, delay_between)
        connect(e_ids(prev), i_ids(g), k_ei, w_ei, EXCITATORY, delay_between)
        connect(i_ids(g), e_ids(g), k_ie, w_ie, INHIBITORY, delay_within)

    # Gaussian pulse packet, spikes assigned round-robin in time order so one
    # source never repeats within a step
    times = np.sort(np.round(rng.normal(packet_time_ms, packet_sigma_ms, packet_spikes)).astype(int))
    times = np.maximum(times, 0)
    senders = e_ids(groups - 1)
    forced = sorted({(int(t), int(senders[i % e_per_group])) for i, t in enumerate(times)})

    return NetworkSpec(
        name="synfire",
        neurons_per_core=npc,
        n_cores=groups,
        source=np.concatenate(src),
        target=np.concatenate(tgt),
        weight=np.concatenate(w),
        syn_type=np.concatenate(typ),
        delay=np.concatenate(dly),
        params=params,
        weight_scale=WEIGHT_SCALE,
        seed=seed,
        forced_spikes=forced,
        count_thresholds=(20.0, 100.0),
        meta={"groups": groups, "e_per_group": e_per_group, "i_per_group": i_per_group,
              "packet_spikes": packet_spikes, "packet_sigma_ms": packet_sigma_ms},
    )


BURSTING_PARAMS = NeuronParams(
    tau_m=20.0, e_leak=-70.0, v_thresh=-55.0, v_reset=-65.0, t_ref=4,
    e_exc=0.0, e_inh=-80.0, tau_exc=3.0, tau_inh=6.0,
    sfa=True, e_adapt=-80.0, tau_adapt=150.0,
    noise_mean=0.0, noise_std=1.0,
)

ASYNC_PARAMS = NeuronParams(
    tau_m=20.0, e_leak=-70.0, v_thresh=-55.0, v_reset=-65.0, t_ref=4,
    e_exc=0.0, e_inh=-80.0, tau_exc=3.0, tau_inh=6.0,
    sfa=False, noise_mean=0.0, noise_std=1.0,
)


def build_bursting(n: int = 1000, p_rec: float = 0.08, sfa: bool = True, seed: int = 0, *,
                   n_cores: int = 4, n_background: int = 200, p_ext: float = 0.1,
                   background_rate_hz: float = 20.0, w_rec: float = 0.03, w_bg: float = 0.15,
                   w_sfa: float = 0.06, delay_range: tuple[int, int] = (1, 4),
                   params: NeuronParams | None = None, name: str | None = None) -> NetworkSpec:
    """Sparse random excitatory network with optional self-inhibition (SFA).

    Recurrent synapses are drawn i.i.d. with probability ``p_rec`` (no
    autapses); with ``sfa`` every neuron also inhibits itself. A Poisson
    background population connects with probability ``p_ext``.
    """
    if n % n_cores:
        raise ValueError("neuron count must divide evenly over the cores")
    if params is None:
        params = BURSTING_PARAMS if sfa else ASYNC_PARAMS
    if params.sfa != sfa:
        params = NeuronParams.from_dict({**params.to_dict(), "sfa": sfa})
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xB0]))
    lo, hi = delay_range

    bg_conn = rng.random((n_background, n)) < p_ext
    bg_src, bg_tgt = np.nonzero(bg_conn)
    rec = rng.random((n, n)) < p_rec
    np.fill_diagonal(rec, False)
    rec_src, rec_tgt = np.nonzero(rec)
    rec_delay = rng.integers(lo, hi + 1, size=rec_src.size)

    src = [rec_src, bg_src + n]
    tgt = [rec_tgt, bg_tgt]
    w = [np.full(rec_src.size, _weight_int(w_rec, WEIGHT_SCALE)),
         np.full(bg_src.size, _weight_int(w_bg, WEIGHT_SCALE))]
    typ = [np.full(rec_src.size, EXCITATORY), np.full(bg_src.size, EXCITATORY)]
    dly = [rec_delay, np.ones(bg_src.size, dtype=np.int64)]
    if sfa:
        ids = np.arange(n)
        src.append(ids)
        tgt.append(ids)
        w.append(np.full(n, _weight_int(w_sfa, WEIGHT_SCALE)))
        typ.append(np.full(n, INHIBITORY))
        dly.append(np.ones(n, dtype=np.int64))

    return NetworkSpec(
        name=name or ("bursting" if sfa else "async"),
        neurons_per_core=n // n_cores,
        n_cores=n_cores,
        source=np.concatenate(src),
        target=np.concatenate(tgt),
        weight=np.concatenate(w),
        syn_type=np.concatenate(typ),
        delay=np.concatenate(dly),
        params=params,
        weight_scale=WEIGHT_SCALE,
        seed=seed,
        background=Background(n, n_background, background_rate_hz, seed),
        meta={"p_rec": p_rec, "p_ext": p_ext, "sfa": sfa},
    )


def build_async(n: int = 1000, p_rec: float = 0.02, seed: int = 0, **kwargs) -> NetworkSpec:
    """The bursting topology without SFA at a lower recurrent probability."""
    return build_bursting(n=n, p_rec=p_rec, sfa=False, seed=seed, **kwargs)


BUILDERS = {
    "local": build_local,
    "synfire": build_synfire,
    "bursting": build_bursting,
    "async": build_async,
}
