"""Per-core spiking network execution with clock-cycle accounting.

Each :class:`Core` holds the neuron state of one processing element, its
16-slot input ring buffers, the hardware spike FIFO and the synapse row table.
Neural dynamics are computed in float64 regardless of the performance level;
the PL only changes timing and energy, never results.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .synapse import EXCITATORY, RowTable, decode_words

log = logging.getLogger(__name__)

RING_SLOTS = 16
# per-slot accumulator width; sums saturate instead of wrapping
ACCUMULATOR_MAX = (1 << 32) - 1


class RoutingConfigurationError(KeyError):
    """A spike arrived for a source without a synapse row on this core."""


class NetworkConstructionError(ValueError):
    """A synapse row points at a neuron that does not exist on the core."""


class NumericalIntegrationError(FloatingPointError):
    """Neuron state became non-finite."""


@dataclass(frozen=True)
class WorkloadCosts:
    """Clock-cycle costs of the per-timestep work on one core."""

    c_neur: float
    c_syn: float
    c_pre_spike: float
    c_other: float = 0.0
    c_est: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadCosts":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class NeuronParams:
    """Conductance-based LIF parameters (mV, ms; conductances relative to leak).

    When ``sfa`` is set, inhibitory synaptic input drives the slow adaptation
    conductance instead of the fast inhibitory one: the only inhibitory
    synapses of an SFA network are the self-synapses.
    """

    tau_m: float = 20.0
    e_leak: float = -70.0
    v_thresh: float = -55.0
    v_reset: float = -70.0
    t_ref: int = 2
    e_exc: float = 0.0
    e_inh: float = -80.0
    tau_exc: float = 2.0
    tau_inh: float = 6.0
    sfa: bool = False
    e_adapt: float = -80.0
    tau_adapt: float = 150.0
    noise_mean: float = 0.0
    noise_std: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NeuronParams":
        return cls(**d)


@dataclass
class NeuronState:
    """Vectorised state of all neurons on a core."""

    v: np.ndarray
    g_exc: np.ndarray
    g_inh: np.ndarray
    g_adapt: np.ndarray
    refractory: np.ndarray

    @classmethod
    def at_rest(cls, n: int, params: NeuronParams) -> "NeuronState":
        return cls(
            v=np.full(n, params.e_leak, dtype=np.float64),
            g_exc=np.zeros(n),
            g_inh=np.zeros(n),
            g_adapt=np.zeros(n),
            refractory=np.zeros(n, dtype=np.int64),
        )


@dataclass
class Stimulus:
    """External drive for one timestep: current (mV) and held conductance."""

    current: np.ndarray | float = 0.0
    g_exc: np.ndarray | float = 0.0


class RingBuffer:
    """16 timestep slots of excitatory/inhibitory input per neuron."""

    def __init__(self, n_neurons: int):
        self.exc = np.zeros((RING_SLOTS, n_neurons), dtype=np.int64)
        self.inh = np.zeros((RING_SLOTS, n_neurons), dtype=np.int64)
        self.cursor = 0
        self.inserted = 0
        self.consumed = 0
        self.saturated = 0

    def add(self, targets, types, delays, weights) -> None:
        if len(weights) == 0:
            return
        slots = (self.cursor + np.asarray(delays)) % RING_SLOTS
        types = np.asarray(types)
        weights = np.asarray(weights, dtype=np.int64)
        self.inserted += int(weights.sum())
        exc = types == EXCITATORY
        for buf, mask in ((self.exc, exc), (self.inh, ~exc)):
            if mask.any():
                np.add.at(buf, (slots[mask], np.asarray(targets)[mask]), weights[mask])
                over = buf > ACCUMULATOR_MAX
                if over.any():
                    lost = int((buf[over] - ACCUMULATOR_MAX).sum())
                    self.saturated += lost
                    log.warning("ring buffer accumulator saturated, %d weight units dropped", lost)
                    buf[over] = ACCUMULATOR_MAX

    def consume(self) -> tuple[np.ndarray, np.ndarray]:
        """Pop the current slot (zeroing it) and advance the cursor."""
        exc = self.exc[self.cursor].copy()
        inh = self.inh[self.cursor].copy()
        self.exc[self.cursor] = 0
        self.inh[self.cursor] = 0
        self.consumed += int(exc.sum() + inh.sum())
        self.cursor = (self.cursor + 1) % RING_SLOTS
        return exc, inh

    def pending(self) -> int:
        return int(self.exc.sum() + self.inh.sum())


class SpikeFifo:
    """Hardware spike FIFO; entries become visible one cycle after arrival."""

    def __init__(self):
        self._queue: deque[tuple[int, int]] = deque()

    def push(self, source: int, arrival_cycle: int) -> None:
        self._queue.append((source, arrival_cycle))

    def push_many(self, sources, arrival_cycle: int) -> None:
        self._queue.extend((int(s), arrival_cycle) for s in sources)

    def drain(self, cycle: int) -> list[tuple[int, int]]:
        """Remove and return every entry that arrived before ``cycle``."""
        out = []
        while self._queue and self._queue[0][1] < cycle:
            out.append(self._queue.popleft())
        return out

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class Core:
    """State of one processing element."""

    core_id: int
    n_neurons: int
    params: NeuronParams
    rows: RowTable
    costs: WorkloadCosts
    weight_scale: float = 1.0 / 1024
    noise_seed: int = 0
    state: NeuronState = field(init=False)
    ring: RingBuffer = field(init=False)
    fifo: SpikeFifo = field(init=False)

    def __post_init__(self):
        self.state = NeuronState.at_rest(self.n_neurons, self.params)
        self.ring = RingBuffer(self.n_neurons)
        self.fifo = SpikeFifo()
        # counter-based stream per (seed, core): noise is independent of PL and policy
        self._noise = np.random.Generator(np.random.Philox(key=[self.noise_seed, self.core_id]))
        p = self.params
        self._decay_exc = math.exp(-1.0 / p.tau_exc)
        self._decay_inh = math.exp(-1.0 / p.tau_inh)
        self._decay_adapt = math.exp(-1.0 / p.tau_adapt)
        # mean of exp(-t/tau) over one 1 ms step
        self._mean_exc = p.tau_exc * (1.0 - self._decay_exc)
        self._mean_inh = p.tau_inh * (1.0 - self._decay_inh)
        self._mean_adapt = p.tau_adapt * (1.0 - self._decay_adapt)


def process_spike_event(core: Core, source_neuron: int) -> float:
    """Apply one synapse row to the ring buffer; return cycles consumed."""
    if not core.rows.has_entry(source_neuron):
        raise RoutingConfigurationError(
            f"core {core.core_id} has no synapse row for source {source_neuron}"
        )
    row = core.rows.row(source_neuron)
    _apply_words(core, row.words)
    return core.costs.c_pre_spike + row.fanout * core.costs.c_syn


def process_spikes(core: Core, sources) -> tuple[float, int]:
    """Batched :func:`process_spike_event`; returns ``(cycles, synaptic_events)``."""
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size == 0:
        return 0.0, 0
    known = core.rows.has_entries(sources)
    if not known.all():
        bad = int(sources[~known][0])
        raise RoutingConfigurationError(f"core {core.core_id} has no synapse row for source {bad}")
    words = core.rows.gather(sources)
    _apply_words(core, words)
    n_syn = int(words.size)
    return sources.size * core.costs.c_pre_spike + n_syn * core.costs.c_syn, n_syn


def _apply_words(core: Core, words: np.ndarray) -> None:
    if words.size == 0:
        return
    weights, targets, types, delays = decode_words(words)
    if targets.max() >= core.n_neurons:
        raise NetworkConstructionError(
            f"synapse target {int(targets.max())} >= {core.n_neurons} neurons on core {core.core_id}"
        )
    core.ring.add(targets, types, delays, weights)


def update_neurons(core: Core, external_stimulus: Stimulus | None = None) -> tuple[np.ndarray, float]:
    """Advance every neuron on ``core`` by one timestep.

    Conductances decay exactly; the membrane is integrated exactly for the
    step-averaged conductances (piecewise-constant drive). Returns the ids of
    neurons that fired and the cycles spent.
    """
    p, s = core.params, core.state
    exc_w, inh_w = core.ring.consume()
    scale = core.weight_scale
    g_exc = s.g_exc + exc_w * scale
    if p.sfa:
        g_inh = s.g_inh
        g_adapt = s.g_adapt + inh_w * scale
    else:
        g_inh = s.g_inh + inh_w * scale
        g_adapt = s.g_adapt

    ge = g_exc * core._mean_exc
    gi = g_inh * core._mean_inh
    ga = g_adapt * core._mean_adapt
    current = np.zeros(core.n_neurons)
    if p.noise_std > 0 or p.noise_mean != 0:
        current += p.noise_mean + p.noise_std * core._noise.standard_normal(core.n_neurons)
    if external_stimulus is not None:
        current += external_stimulus.current
        ge = ge + external_stimulus.g_exc

    g_tot = 1.0 + ge + gi + ga
    v_inf = (p.e_leak + current + ge * p.e_exc + gi * p.e_inh + ga * p.e_adapt) / g_tot
    v_new = v_inf + (s.v - v_inf) * np.exp(-g_tot / p.tau_m)

    refractory = s.refractory > 0
    v_new[refractory] = p.v_reset
    fired = ~refractory & (v_new >= p.v_thresh)
    v_new[fired] = p.v_reset

    s.refractory = np.where(refractory, s.refractory - 1, 0)
    s.refractory[fired] = p.t_ref
    s.v = v_new
    s.g_exc = g_exc * core._decay_exc
    s.g_inh = g_inh * core._decay_inh
    s.g_adapt = g_adapt * core._decay_adapt

    if not (np.isfinite(s.v).all() and np.isfinite(s.g_exc).all()
            and np.isfinite(s.g_inh).all() and np.isfinite(s.g_adapt).all()):
        raise NumericalIntegrationError(f"non-finite neuron state on core {core.core_id}")
    return np.flatnonzero(fired), core.n_neurons * core.costs.c_neur
