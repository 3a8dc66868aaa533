"""PE power and energy model.

Units: power in mW, time in ms, energy in nJ (1 mW x 1 ms = 1000 nJ).

The measured parameters are chip aggregates over the 4 PEs of the test chip.
A single core is charged ``1/n_pes`` of every baseline power and offset
energy; the per-neuron and per-event energies apply per unit of work.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .dvfs import PL1, PL2, PL3, PerformanceLevel

NJ_PER_MW_MS = 1000.0


@dataclass(frozen=True)
class PlPower:
    p_bl_leak: float  # mW
    p_bl: float  # mW
    e_neur0: float  # nJ per timestep
    e_neur: float  # nJ per neuron
    e_syn0: float  # nJ per timestep
    e_syn: float  # nJ per synaptic event

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v >= 0:
                raise ValueError(f"{k} must be >= 0")
        if self.p_bl_leak > self.p_bl:
            raise ValueError("leakage power exceeds baseline power")


# measured on the 28 nm test chip, 4-PE aggregate
TABLE_I: dict[PerformanceLevel, PlPower] = {
    PL1: PlPower(8.94, 14.92, 1000.0, 2.19, 730.0, 0.45),
    PL2: PlPower(20.03, 37.44, 1410.0, 2.88, 990.0, 0.65),
    PL3: PlPower(28.53, 71.17, 1540.0, 3.96, 1490.0, 0.90),
}


@dataclass
class PowerModelParams:
    """Power parameters keyed by performance-level name."""

    levels: dict[str, PlPower]
    n_pes: int = 4
    scope: str = "chip"  # "chip": values are n_pes aggregates; "pe": per core

    def __getitem__(self, name: str) -> PlPower:
        try:
            return self.levels[name]
        except KeyError:
            raise KeyError(f"no power parameters for performance level {name!r}") from None

    @property
    def core_share(self) -> float:
        return 1.0 / self.n_pes if self.scope == "chip" else 1.0

    def check_monotone(self, order: Sequence[str]) -> None:
        series = [self[n] for n in order]
        for field_name in PlPower.__dataclass_fields__:
            vals = [getattr(p, field_name) for p in series]
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{field_name} decreases with PL index")

    def to_dict(self) -> dict:
        return {"n_pes": self.n_pes, "scope": self.scope,
                "levels": {k: asdict(v) for k, v in self.levels.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "PowerModelParams":
        return cls({k: PlPower(**v) for k, v in d["levels"].items()}, d.get("n_pes", 4), d.get("scope", "chip"))


def _quadratic_in_v(points: list[tuple[float, float]], v: float) -> float:
    xs, ys = zip(*points)
    coef = np.polyfit(xs, ys, deg=min(2, len(xs) - 1))
    return float(np.polyval(coef, v))


def interpolate_pl_power(voltage: float, frequency_hz: float,
                         table: dict[PerformanceLevel, PlPower] = TABLE_I) -> PlPower:
    """Parameters of an unmeasured (V, f) point.

    Leakage and the per-task energies follow a quadratic through the measured
    points in V; the dynamic part of the baseline is k(V) * V^2 * f with k(V)
    interpolated the same way.
    """
    for pl, p in table.items():
        if math.isclose(pl.voltage, voltage) and math.isclose(pl.frequency_hz, frequency_hz):
            return p
    meas = sorted(table.items(), key=lambda kv: kv[0].voltage)

    def q(attr):
        return max(0.0, _quadratic_in_v([(pl.voltage, getattr(p, attr)) for pl, p in meas], voltage))

    k = _quadratic_in_v(
        [(pl.voltage, (p.p_bl - p.p_bl_leak) / (pl.voltage ** 2 * pl.frequency_hz)) for pl, p in meas],
        voltage,
    )
    leak = q("p_bl_leak")
    return PlPower(leak, leak + max(k, 0.0) * voltage ** 2 * frequency_hz,
                   q("e_neur0"), q("e_neur"), q("e_syn0"), q("e_syn"))


def dfs_baseline_power(parent: PlPower, parent_frequency_hz: float, dfs_frequency_hz: float) -> float:
    """Baseline power on the parent's rail at a reduced clock (mW).

    Leakage stays; the dynamic part scales linearly with frequency.
    """
    if dfs_frequency_hz > parent_frequency_hz:
        raise ValueError("DFS frequency must not exceed the parent frequency")
    return parent.p_bl_leak + (parent.p_bl - parent.p_bl_leak) * (dfs_frequency_hz / parent_frequency_hz)


def params_for_levels(levels: Sequence[PerformanceLevel], table: dict[PerformanceLevel, PlPower] = TABLE_I,
                      n_pes: int = 4) -> PowerModelParams:
    """Power parameters for an arbitrary PL set, DFS sublevels included."""
    out: dict[str, PlPower] = {}
    full = {pl.name: pl for pl in levels if pl.kind == "full"}
    for pl in full.values():
        out[pl.name] = interpolate_pl_power(pl.voltage, pl.frequency_hz, table)
    for pl in levels:
        if pl.kind == "dfs":
            parent = full[pl.parent]
            pp = out[parent.name]
            p_bl = dfs_baseline_power(pp, parent.frequency_hz, pl.frequency_hz)
            out[pl.name] = replace(pp, p_bl=p_bl)
    return PowerModelParams(out, n_pes=n_pes)


def default_params() -> PowerModelParams:
    return params_for_levels((PL1, PL2, PL3))


@dataclass(frozen=True)
class CycleEnergy:
    baseline_active: float
    baseline_idle: float
    neuron: float
    synapse: float
    total: float
    t_sp: float
    pl_used: str
    n_syn: int


def cycle_energy(pl: str, t_sp: float, n_neur: int, n_syn: int, params: PowerModelParams,
                 t_sys: float = 1.0, idle_level: str = "PL1", *, share: float = 1.0,
                 neuron_enabled: bool = True, synapse_enabled: bool = True) -> CycleEnergy:
    """Energy (nJ) of one timestep at level ``pl`` followed by idling.

    ``share`` scales baseline powers and offset energies; pass
    ``params.core_share`` to charge a single core.
    """
    if t_sp < 0:
        raise ValueError("t_sp must be >= 0")
    active, idle = params[pl], params[idle_level]
    base_active = share * active.p_bl * t_sp * NJ_PER_MW_MS
    base_idle = share * idle.p_bl * max(0.0, t_sys - t_sp) * NJ_PER_MW_MS
    neuron = share * active.e_neur0 + active.e_neur * n_neur if neuron_enabled else 0.0
    synapse = share * active.e_syn0 + active.e_syn * n_syn if synapse_enabled else 0.0
    total = base_active + base_idle + neuron + synapse
    return CycleEnergy(base_active, base_idle, neuron, synapse, total, t_sp, pl, n_syn)


def average_power(cycle_energies: Sequence[float], t_sys: float = 1.0) -> float:
    """Mean power (mW) over a run from per-timestep energies (nJ)."""
    if len(cycle_energies) == 0:
        raise ValueError("average power of an empty run")
    return math.fsum(cycle_energies) / (len(cycle_energies) * t_sys * NJ_PER_MW_MS)


class FitError(ValueError):
    pass


def fit_vdd_squared(values: Sequence[float], voltages: Sequence[float]) -> tuple[float, np.ndarray]:
    """Least-squares ``E = e_norm * V^2``; returns e_norm and relative residuals."""
    e = np.asarray(values, dtype=float)
    v = np.asarray(voltages, dtype=float)
    if e.size == 0 or e.shape != v.shape:
        raise FitError("need matching, non-empty value and voltage lists")
    if e.size > 1 and np.all(v == v[0]):
        raise FitError("all voltages equal; V^2 law is not identifiable")
    v2 = v * v
    e_norm = float(np.dot(e, v2) / np.dot(v2, v2))
    return e_norm, (e_norm * v2 - e) / e


@dataclass
class EnergyReport:
    """Run-average power decomposition, laid out like the benchmark table."""

    label: str
    baseline: float
    neuron: float
    synapse: float
    syn_events_per_s: float
    infrastructure: float = 48.2
    duration_ms: float = 0.0
    pl_time_fraction: dict[str, float] = field(default_factory=dict)

    @property
    def pe(self) -> float:
        return self.baseline + self.neuron + self.synapse

    @property
    def total(self) -> float:
        return self.pe + self.infrastructure

    @property
    def e_per_syn_event_total(self) -> float:
        """nJ per synaptic event from total power."""
        return self.total * 1e6 / self.syn_events_per_s if self.syn_events_per_s else math.inf

    @property
    def e_per_syn_event_pe(self) -> float:
        return self.pe * 1e6 / self.syn_events_per_s if self.syn_events_per_s else math.inf

    ROWS = (
        ("total [mW]", "total"),
        ("infrastructure [mW]", "infrastructure"),
        ("baseline [mW]", "baseline"),
        ("neuron [mW]", "neuron"),
        ("synapse [mW]", "synapse"),
        ("PE [mW]", "pe"),
        ("SynEvents/s", "syn_events_per_s"),
        ("E/SynEvent [nJ]", "e_per_syn_event_total"),
        ("E/SynEvent (PE only) [nJ]", "e_per_syn_event_pe"),
    )

    def to_dict(self) -> dict:
        d = {"label": self.label, "duration_ms": self.duration_ms}
        d.update({attr: getattr(self, attr) for _, attr in self.ROWS})
        d["pl_time_fraction"] = dict(self.pl_time_fraction)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def reports_to_csv(reports: Sequence[EnergyReport]) -> str:
    """One column per report, one row per table line."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric"] + [r.label for r in reports])
    for title, attr in EnergyReport.ROWS:
        w.writerow([title] + [repr(float(getattr(r, attr))) for r in reports])
    return buf.getvalue()


def decompose_power(run_with_full_sw: Sequence[float], run_without_spikes: Sequence[float],
                    run_empty_handlers: Sequence[float], run_cores_off: Sequence[float],
                    t_sys: float = 1.0, syn_events: int = 0, infrastructure: float = 48.2,
                    label: str = "") -> EnergyReport:
    """Differential power split from four runs' per-timestep PE energies (nJ).

    synapse = P0 - P1, neuron = P1 - P2, baseline = P2 - P3.
    """
    runs = [run_with_full_sw, run_without_spikes, run_empty_handlers, run_cores_off]
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"runs differ in length: {[len(r) for r in runs]}")
    p0, p1, p2, p3 = (average_power(r, t_sys) for r in runs)
    n = lengths.pop()
    return EnergyReport(
        label=label,
        baseline=p2 - p3,
        neuron=p1 - p2,
        synapse=p0 - p1,
        syn_events_per_s=syn_events / (n * t_sys * 1e-3),
        infrastructure=infrastructure,
        duration_ms=n * t_sys,
    )
