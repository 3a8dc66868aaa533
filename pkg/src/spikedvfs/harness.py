"""Chip-level timestep loop, policy accounting and reports.

A run has two stages. :func:`simulate` advances the network and logs, per
core and timestep, what was received and processed. :func:`account` then
applies a PL policy and the energy model to that log. Neural dynamics do not
depend on the PL, so several policies or PL sets can be evaluated on one
activity trace with identical spike histories.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .benchmarks import NetworkSpec
from .dvfs import (
    PL_SETS,
    PerformanceLevel,
    TransitionConfig,
    derive_worstcase_thresholds,
    dfs_sublevel,
    select_pl_by_count,
    select_pl_exact,
    transition_latency,
    validate_pl_set,
)
from .energy import (
    EnergyReport,
    PowerModelParams,
    average_power,
    cycle_energy,
    decompose_power,
    params_for_levels,
)
from .engine import Core, WorkloadCosts, process_spikes, update_neurons

# calibrated against the worst-case thresholds of the bursting and async
# networks (seed 0); see tests/test_calibration.py
DEFAULT_COSTS = WorkloadCosts(c_neur=247.0, c_syn=15.5, c_pre_spike=818.5, c_other=2000.0, c_est=10.0)

MODES = ("full", "no_spikes", "empty_handlers", "cores_off")


@dataclass
class SimConfig:
    k_max: int = 1000
    t_sys_ms: float = 1.0
    policy: str = "count"  # "count" | "exact" | "fixed:<PL name>"
    pl_set: str = "3PL"
    dfs_idle_hz: float | None = None
    seed: int = 0
    costs: WorkloadCosts = DEFAULT_COSTS
    power: PowerModelParams | None = None
    thresholds: tuple[float, ...] | None = None
    background_in_count: bool = True
    background_costs_cycles: bool = True
    charge_transition_latency: bool = False
    transition: TransitionConfig = field(default_factory=TransitionConfig)
    infrastructure_mw: float = 48.2
    levels_override: tuple[PerformanceLevel, ...] | None = None

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        parse_policy(self.policy)
        levels = self.levels()
        validate_pl_set(levels)
        if not any(pl.voltage == 1.0 and pl.frequency_hz == 500e6 for pl in levels):
            raise ValueError("every PL set must contain the 500 MHz / 1.0 V peak level")
        if self.power is None:
            self.power = params_for_levels(levels)

    def full_levels(self) -> tuple[PerformanceLevel, ...]:
        if self.levels_override is not None:
            return tuple(pl for pl in self.levels_override if pl.kind == "full")
        try:
            return PL_SETS[self.pl_set]
        except KeyError:
            raise ValueError(f"unknown PL set {self.pl_set!r}; choose from {sorted(PL_SETS)}") from None

    def levels(self) -> tuple[PerformanceLevel, ...]:
        full = self.full_levels()
        if self.dfs_idle_hz:
            return full + (dfs_sublevel(full[0], self.dfs_idle_hz),)
        return full

    def to_dict(self) -> dict:
        return {
            "k_max": self.k_max,
            "t_sys_ms": self.t_sys_ms,
            "policy": self.policy,
            "pl_set": self.pl_set,
            "dfs_idle_hz": self.dfs_idle_hz,
            "seed": self.seed,
            "costs": self.costs.to_dict(),
            "power": self.power.to_dict(),
            "thresholds": None if self.thresholds is None else [None if math.isinf(x) else x for x in self.thresholds],
            "background_in_count": self.background_in_count,
            "background_costs_cycles": self.background_costs_cycles,
            "charge_transition_latency": self.charge_transition_latency,
            "transition": asdict(self.transition),
            "infrastructure_mw": self.infrastructure_mw,
            "levels_override": None if self.levels_override is None else [pl.to_dict() for pl in self.levels_override],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "costs" in d:
            d["costs"] = WorkloadCosts.from_dict(d["costs"])
        if d.get("power") is not None:
            d["power"] = PowerModelParams.from_dict(d["power"])
        if d.get("thresholds") is not None:
            d["thresholds"] = tuple(math.inf if x is None else float(x) for x in d["thresholds"])
        if "transition" in d:
            d["transition"] = TransitionConfig(**d["transition"])
        if d.get("levels_override") is not None:
            d["levels_override"] = tuple(PerformanceLevel.from_dict(x) for x in d["levels_override"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def parse_policy(policy: str) -> tuple[str, str | None]:
    if policy in ("count", "exact"):
        return policy, None
    if policy.startswith("fixed:") and len(policy) > 6:
        return "fixed", policy[6:]
    raise ValueError(f"unknown policy {policy!r}; use count, exact or fixed:<PL>")


# --- stage 1: dynamics -------------------------------------------------------------


@dataclass
class ActivityTrace:
    """Per (timestep, core) counts of the work done, plus the spike raster."""

    network: str
    n_cores: int
    neurons_per_core: int
    l_fifo: np.ndarray  # spikes drained from the FIFO
    l_bg: np.ndarray  # background spikes read from memory
    syn_fifo: np.ndarray  # synaptic events from FIFO spikes
    syn_bg: np.ndarray
    sent: np.ndarray  # spikes emitted by the core
    raster: np.ndarray  # (n, 2): time step, neuron id
    stimulus: np.ndarray  # (n, 2): injected spikes, time step and sender
    events: list | None = None  # per step: list over cores of (fifo sources, arrival steps)
    emitted: list | None = None  # per step: array of routed source ids
    ring_conservation: list | None = None  # per core: (inserted, consumed, pending, saturated)
    send_spikes: bool = True

    @property
    def k_max(self) -> int:
        return self.l_fifo.shape[0]


def simulate(network: NetworkSpec, k_max: int, seed: int = 0, *, send_spikes: bool = True,
             background: bool = True, keep_events: bool = False,
             costs: WorkloadCosts = DEFAULT_COSTS) -> ActivityTrace:
    """Run the network dynamics for ``k_max`` timesteps.

    Per step and core: drain spikes received in the previous step, apply
    their rows and any background spikes to the ring buffers, update the
    neurons, then route the emitted spikes to the FIFOs of every target core.
    """
    n_cores, npc = network.n_cores, network.neurons_per_core
    cores = [
        Core(c, npc, network.params, network.row_table(c), costs, network.weight_scale, noise_seed=seed)
        for c in range(n_cores)
    ]
    route_mask = np.zeros((network.n_neurons, n_cores), dtype=bool)
    for s, dests in network.routing_table().items():
        route_mask[s, list(dests)] = True

    bg = network.background if background else None
    bg_spikes = bg.spike_matrix(k_max) if bg else None

    forced_at: dict[int, list[int]] = {}
    for t, s in network.forced_spikes:
        forced_at.setdefault(int(t), []).append(int(s))
    every = np.asarray(sorted(network.forced_every_step), dtype=np.int64)

    shape = (k_max, n_cores)
    l_fifo = np.zeros(shape, dtype=np.int64)
    l_bg = np.zeros(shape, dtype=np.int64)
    syn_fifo = np.zeros(shape, dtype=np.int64)
    syn_bg = np.zeros(shape, dtype=np.int64)
    sent = np.zeros(shape, dtype=np.int64)
    raster, stim = [], []
    events = [] if keep_events else None
    emitted_log = [] if keep_events else None

    for k in range(k_max):
        step_events = []
        fired_all = []
        bg_now = np.flatnonzero(bg_spikes[k]) + bg.first_id if bg is not None else None
        for core in cores:
            c = core.core_id
            entries = core.fifo.drain(k)
            src = np.fromiter((e[0] for e in entries), dtype=np.int64, count=len(entries))
            _, n_syn = process_spikes(core, src)
            l_fifo[k, c], syn_fifo[k, c] = src.size, n_syn
            if keep_events:
                step_events.append((src, np.fromiter((e[1] for e in entries), dtype=np.int64, count=len(entries))))
            if bg_now is not None and bg_now.size:
                mine = bg_now[core.rows.has_entries(bg_now)]
                _, n_bg_syn = process_spikes(core, mine)
                l_bg[k, c], syn_bg[k, c] = mine.size, n_bg_syn
            fired, _ = update_neurons(core)
            fired_all.append(fired + c * npc)
        natural = np.concatenate(fired_all)
        if natural.size:
            raster.append(np.stack([np.full(natural.size, k), natural], axis=1))
        injected = []
        if k in forced_at:
            injected.extend(forced_at[k])
        if every.size:
            injected.extend(every.tolist())
        if injected:
            inj = np.asarray(sorted(set(injected)), dtype=np.int64)
            stim.append(np.stack([np.full(inj.size, k), inj], axis=1))
            out = np.union1d(natural, inj)
        else:
            out = np.unique(natural)
        sent[k] = np.bincount(out // npc, minlength=n_cores)
        if keep_events:
            emitted_log.append(out if send_spikes else np.zeros(0, dtype=np.int64))
        if send_spikes and out.size:
            for dest in range(n_cores):
                targets = out[route_mask[out, dest]]
                if targets.size:
                    cores[dest].fifo.push_many(targets, k)
        if keep_events:
            events.append(step_events)

    def stack(chunks):
        return np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)

    return ActivityTrace(
        network=network.name,
        n_cores=n_cores,
        neurons_per_core=npc,
        l_fifo=l_fifo,
        l_bg=l_bg,
        syn_fifo=syn_fifo,
        syn_bg=syn_bg,
        sent=sent,
        raster=stack(raster),
        stimulus=stack(stim),
        events=events,
        emitted=emitted_log,
        ring_conservation=[
            (c.ring.inserted, c.ring.consumed, c.ring.pending(), c.ring.saturated) for c in cores
        ],
        send_spikes=send_spikes,
    )


# --- stage 2: policy and energy accounting -------------------------------------------


@dataclass(frozen=True)
class CycleRecord:
    core: int
    k: int
    l: int
    l_background: int
    c_estimated: float
    c_executed: float
    pl: str
    t_sp: float
    deadline_violation: bool
    rt_risk: bool
    n_syn: int
    spikes_sent: int
    e_baseline_active: float
    e_baseline_idle: float
    e_neuron: float
    e_synapse: float
    e_total: float


RECORD_FIELDS = tuple(CycleRecord.__dataclass_fields__)


@dataclass
class Schedule:
    """PL and t_sp per (timestep, core), recorded from a run."""

    pl: np.ndarray  # object array of level names
    t_sp: np.ndarray


@dataclass
class RunResult:
    raster: np.ndarray
    records: list[CycleRecord]
    report: EnergyReport
    trace: ActivityTrace
    thresholds: dict[int, tuple[float, ...]]
    schedule: Schedule

    def cycle_energies(self) -> np.ndarray:
        """Chip-level energy (nJ) per timestep."""
        k = self.trace.k_max
        out = np.zeros(k)
        for r in self.records:
            out[r.k] += r.e_total
        return out


def core_thresholds(network: NetworkSpec, config: SimConfig) -> dict[int, tuple[float, ...]]:
    """Spike-count thresholds each core uses under the count policy."""
    levels = config.full_levels()
    if config.thresholds is not None:
        th = tuple(config.thresholds)
        return {c: th for c in range(network.n_cores)}
    if network.count_thresholds is not None and config.pl_set == "3PL" and config.levels_override is None:
        return {c: tuple(network.count_thresholds) for c in range(network.n_cores)}
    caps = [pl.capacity(config.t_sys_ms) for pl in levels[:-1]]
    return {
        c: derive_worstcase_thresholds(network.fanouts(c), config.costs, network.neurons_per_core, caps)
        for c in range(network.n_cores)
    }


def account(trace: ActivityTrace, network: NetworkSpec, config: SimConfig, *, mode: str = "full",
            imposed: Schedule | None = None,
            thresholds: dict[int, tuple[float, ...]] | None = None) -> RunResult:
    """Apply the PL policy and energy model to a simulated activity trace.

    ``mode`` selects the reduced software variants used for differential
    power measurement; those require ``imposed``, the PL schedule of the
    full run. ``thresholds`` overrides the per-core count thresholds.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode != "full" and imposed is None:
        raise ValueError("reduced runs need the PL schedule of the full run")
    costs, params = config.costs, config.power
    levels = config.full_levels()
    by_name = {pl.name: pl for pl in config.levels()}
    c_th = [pl.capacity(config.t_sys_ms) for pl in levels]
    kind, fixed_name = parse_policy(config.policy)
    if kind == "fixed":
        if fixed_name not in by_name:
            raise ValueError(f"policy names PL {fixed_name!r} outside the PL set")
        idle_name = fixed_name
    elif config.dfs_idle_hz:
        idle_name = config.levels()[-1].name
    else:
        idle_name = levels[0].name
    if thresholds is None:
        thresholds = core_thresholds(network, config)
    npc, n_cores = trace.neurons_per_core, trace.n_cores
    t_sys = config.t_sys_ms
    share = params.core_share
    bg_cycles = 1 if config.background_costs_cycles else 0
    bg_count = 1 if config.background_in_count else 0
    neuron_on = mode in ("full", "no_spikes")
    synapse_on = mode == "full"

    records = []
    sched_pl = np.empty((trace.k_max, n_cores), dtype=object)
    sched_t = np.zeros((trace.k_max, n_cores))
    for k in range(trace.k_max):
        for c in range(n_cores):
            l, lb = int(trace.l_fifo[k, c]), int(trace.l_bg[k, c])
            n_syn = int(trace.syn_fifo[k, c] + bg_cycles * trace.syn_bg[k, c])
            c_work = (npc * costs.c_neur + costs.c_other
                      + (l + bg_cycles * lb) * costs.c_pre_spike + n_syn * costs.c_syn)
            overhead = l * costs.c_est if kind == "exact" else 0.0
            c_exec = c_work + overhead
            if kind == "exact":
                pl_name = levels[select_pl_exact(c_exec, c_th) - 1].name
            elif kind == "count":
                pl_name = levels[select_pl_by_count(l + bg_count * lb, thresholds[c]) - 1].name
            else:
                pl_name = fixed_name
            pl = by_name[pl_name]
            t_sp = c_exec / pl.frequency_hz * 1e3
            if config.charge_transition_latency and pl_name != idle_name:
                lat = (transition_latency(by_name[idle_name], pl, config.transition)
                       + transition_latency(pl, by_name[idle_name], config.transition))
                t_sp += lat * 1e-6
            if mode != "full":
                pl_name = imposed.pl[k, c]
                t_sp = float(imposed.t_sp[k, c])
            sched_pl[k, c], sched_t[k, c] = pl_name, t_sp
            if mode == "cores_off":
                e = None
            else:
                e = cycle_energy(pl_name, t_sp, npc if neuron_on else 0, n_syn if synapse_on else 0,
                                 params, t_sys, idle_name, share=share,
                                 neuron_enabled=neuron_on, synapse_enabled=synapse_on)
            records.append(CycleRecord(
                core=c, k=k, l=l, l_background=lb,
                c_estimated=c_work, c_executed=c_exec, pl=pl_name, t_sp=t_sp,
                deadline_violation=t_sp > t_sys, rt_risk=c_exec > c_th[-1],
                n_syn=n_syn if synapse_on else 0, spikes_sent=int(trace.sent[k, c]),
                e_baseline_active=e.baseline_active if e else 0.0,
                e_baseline_idle=e.baseline_idle if e else 0.0,
                e_neuron=e.neuron if e else 0.0,
                e_synapse=e.synapse if e else 0.0,
                e_total=e.total if e else 0.0,
            ))
    report = summarize(records, trace.k_max, t_sys, config.infrastructure_mw,
                       label=f"{network.name}:{config.policy}:{config.pl_set}", idle_name=idle_name)
    return RunResult(trace.raster, records, report, trace, thresholds, Schedule(sched_pl, sched_t))


def summarize(records: Sequence[CycleRecord], k_max: int, t_sys: float, infrastructure: float,
              label: str = "", idle_name: str | None = None) -> EnergyReport:
    per_cycle = np.zeros((4, k_max))
    time_at: dict[str, float] = {}
    n_cores = len({r.core for r in records}) or 1
    syn = 0
    for r in records:
        per_cycle[0, r.k] += r.e_baseline_active + r.e_baseline_idle
        per_cycle[1, r.k] += r.e_neuron
        per_cycle[2, r.k] += r.e_synapse
        syn += r.n_syn
        time_at[r.pl] = time_at.get(r.pl, 0.0) + min(r.t_sp, t_sys)
        if idle_name is not None:
            time_at[idle_name] = time_at.get(idle_name, 0.0) + max(0.0, t_sys - r.t_sp)
    total_time = k_max * t_sys * n_cores
    return EnergyReport(
        label=label,
        baseline=average_power(per_cycle[0], t_sys),
        neuron=average_power(per_cycle[1], t_sys),
        synapse=average_power(per_cycle[2], t_sys),
        syn_events_per_s=syn / (k_max * t_sys * 1e-3),
        infrastructure=infrastructure,
        duration_ms=k_max * t_sys,
        pl_time_fraction={k: v / total_time for k, v in sorted(time_at.items())},
    )


def run(network: NetworkSpec, config: SimConfig, *, keep_events: bool = False) -> RunResult:
    trace = simulate(network, config.k_max, config.seed, keep_events=keep_events, costs=config.costs)
    return account(trace, network, config)


def run_decomposition(network: NetworkSpec, config: SimConfig, full: RunResult | None = None
                      ) -> tuple[EnergyReport, dict[str, RunResult]]:
    """Four-run differential power measurement.

    The reduced runs replay the PL schedule (level and active time per core
    and timestep) of the full run.
    """
    if full is None:
        full = run(network, config)
    quiet = simulate(network, config.k_max, config.seed, send_spikes=False, background=False,
                     costs=config.costs)
    runs = {"full": full}
    for mode in MODES[1:]:
        runs[mode] = account(quiet, network, config, mode=mode, imposed=full.schedule)
    report = decompose_power(
        *(runs[m].cycle_energies() for m in MODES),
        t_sys=config.t_sys_ms,
        syn_events=sum(r.n_syn for r in full.records),
        infrastructure=config.infrastructure_mw,
        label=full.report.label,
    )
    report.pl_time_fraction = full.report.pl_time_fraction
    return report, runs


# --- histograms and exploration --------------------------------------------------------


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: dict[str, np.ndarray]


def pl_time_histogram(records: Sequence[CycleRecord], bin_width: float = 0.05) -> Histogram:
    """Cycles per (PL, t_sp bin)."""
    if not records:
        raise ValueError("no cycle records")
    t = np.array([r.t_sp for r in records])
    n_bins = max(1, int(math.floor(t.max() / bin_width)) + 1)
    edges = np.arange(n_bins + 1) * bin_width
    idx = np.minimum((t / bin_width).astype(np.int64), n_bins - 1)
    counts: dict[str, np.ndarray] = {}
    for r, i in zip(records, idx):
        counts.setdefault(r.pl, np.zeros(n_bins, dtype=np.int64))[i] += 1
    return Histogram(edges, dict(sorted(counts.items())))


@dataclass(frozen=True)
class Variant:
    name: str
    pl_set: str
    dfs_hz: float | None = None
    policy: str = "count"


DEFAULT_VARIANTS = (
    Variant("1PL", "1PL"),
    Variant("2PL", "2PL"),
    Variant("3PL", "3PL"),
    Variant("3PL+DFS10MHz", "3PL", dfs_hz=10e6),
)

VARIANTS = {v.name: v for v in DEFAULT_VARIANTS + (Variant("4PL", "4PL"), Variant("1PL+DFS10MHz", "1PL", 10e6))}


@dataclass
class ExplorationRow:
    variant: str
    levels: str
    thresholds: str
    baseline: float
    neuron: float
    synapse: float
    pe: float
    reduction_pct: float


def explore_architectures(network: NetworkSpec, base_config: SimConfig, variants: Sequence[Variant] = DEFAULT_VARIANTS,
                          trace: ActivityTrace | None = None, workers: int = 1) -> list[ExplorationRow]:
    """PE power per PL-set variant, relative to running everything at 1.0 V / 500 MHz.

    Count thresholds are re-derived from each variant's capacities. All
    variants share one activity trace; with ``workers > 1`` they are
    accounted in parallel threads (rows keep the input order).
    """
    if not variants:
        raise ValueError("no variants to explore")
    if trace is None:
        trace = simulate(network, base_config.k_max, base_config.seed, costs=base_config.costs)
    common = dict(k_max=base_config.k_max, t_sys_ms=base_config.t_sys_ms, seed=base_config.seed,
                  costs=base_config.costs, background_in_count=base_config.background_in_count,
                  background_costs_cycles=base_config.background_costs_cycles,
                  infrastructure_mw=base_config.infrastructure_mw)
    ref = account(trace, network, SimConfig(policy="fixed:PL3", pl_set="1PL", **common)).report

    def one(v: Variant) -> ExplorationRow:
        cfg = SimConfig(policy=v.policy, pl_set=v.pl_set, dfs_idle_hz=v.dfs_hz, **common)
        # thresholds follow the variant's capacities, never the network's legacy values
        caps = [pl.capacity(cfg.t_sys_ms) for pl in cfg.full_levels()[:-1]]
        th = {c: derive_worstcase_thresholds(network.fanouts(c), cfg.costs, network.neurons_per_core, caps)
              for c in range(network.n_cores)}
        rep = account(trace, network, cfg, thresholds=th).report
        return ExplorationRow(
            variant=v.name,
            levels=" ".join(f"{pl.voltage:.2f}V/{pl.frequency_hz / 1e6:g}MHz" for pl in cfg.levels()),
            thresholds=";".join(",".join("inf" if math.isinf(x) else str(int(x)) for x in th[c])
                                for c in sorted(th)),
            baseline=rep.baseline,
            neuron=rep.neuron,
            synapse=rep.synapse,
            pe=rep.pe,
            reduction_pct=100.0 * (1.0 - rep.pe / ref.pe),
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, variants))
    return [one(v) for v in variants]


# --- CSV output ----------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool) or isinstance(x, np.bool_):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def raster_csv(raster: np.ndarray, t_sys_ms: float = 1.0) -> str:
    buf = io.StringIO()
    buf.write("time_ms,neuron_id\n")
    for k, n in raster:
        buf.write(f"{repr(float(k * t_sys_ms))},{int(n)}\n")
    return buf.getvalue()


def records_csv(records: Sequence[CycleRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])
    return buf.getvalue()


def histogram_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pl", "t_sp_lo_ms", "t_sp_hi_ms", "cycles"])
    for pl, counts in hist.counts.items():
        for i, n in enumerate(counts):
            w.writerow([pl, repr(float(hist.bin_edges[i])), repr(float(hist.bin_edges[i + 1])), int(n)])
    return buf.getvalue()


def exploration_csv(rows: Sequence[ExplorationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(ExplorationRow.__dataclass_fields__)
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, n)) for n in names])
    return buf.getvalue()
