"""Workload estimation, performance-level selection and cost calibration.

Performance levels are numbered from 1 (slowest). ``c_th`` holds the compute
capacity of each level in clock cycles per timestep; ``l_th`` holds the
spike-count boundaries of the count-based selector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .engine import RoutingConfigurationError, WorkloadCosts
from .synapse import RowTable

INF = math.inf


@dataclass(frozen=True)
class PerformanceLevel:
    """A (supply voltage, clock frequency) operating point of a PE.

    ``kind`` is ``"full"`` for a level with its own supply rail or ``"dfs"``
    for a reduced-frequency idle setting on the rail of ``parent``.
    """

    name: str
    voltage: float
    frequency_hz: float
    kind: str = "full"
    parent: str | None = None

    def capacity(self, t_sys_ms: float = 1.0) -> float:
        """Clock cycles available in one timestep."""
        return self.frequency_hz * t_sys_ms * 1e-3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PerformanceLevel":
        return cls(**d)


PL1 = PerformanceLevel("PL1", 0.70, 125e6)
PL2 = PerformanceLevel("PL2", 0.85, 333e6)
PL3 = PerformanceLevel("PL3", 1.00, 500e6)

# named PL sets used by runs and architecture exploration
PL_SETS: dict[str, tuple[PerformanceLevel, ...]] = {
    "1PL": (PL3,),
    "2PL": (PL1, PL3),
    "3PL": (PL1, PL2, PL3),
    "4PL": (
        PerformanceLevel("PL1", 0.70, 125e6),
        PerformanceLevel("PL2", 0.80, 300e6),
        PerformanceLevel("PL3", 0.90, 400e6),
        PerformanceLevel("PL4", 1.00, 500e6),
    ),
}


def dfs_sublevel(parent: PerformanceLevel, frequency_hz: float) -> PerformanceLevel:
    if not frequency_hz < parent.frequency_hz:
        raise ValueError("a DFS sublevel must run slower than its parent level")
    return PerformanceLevel(
        f"{parent.name}-DFS{frequency_hz / 1e6:g}MHz",
        parent.voltage,
        frequency_hz,
        kind="dfs",
        parent=parent.name,
    )


def validate_pl_set(levels: Sequence[PerformanceLevel]) -> None:
    full = [pl for pl in levels if pl.kind == "full"]
    if not full:
        raise ValueError("PL set has no full performance level")
    for a, b in zip(full, full[1:]):
        if not (b.voltage > a.voltage and b.frequency_hz > a.frequency_hz):
            raise ValueError(f"{b.name} must have higher voltage and frequency than {a.name}")
    names = {pl.name: pl for pl in full}
    for pl in levels:
        if pl.kind == "dfs":
            parent = names.get(pl.parent)
            if parent is None or parent.voltage != pl.voltage or pl.frequency_hz >= parent.frequency_hz:
                raise ValueError(f"DFS level {pl.name} does not match a parent rail")


@dataclass(frozen=True)
class PlThresholds:
    c_th: tuple[float, ...]
    l_th: tuple[float, ...] = ()

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.c_th, self.c_th[1:])):
            raise ValueError("c_th must be strictly increasing")
        if any(b < a for a, b in zip(self.l_th, self.l_th[1:])):
            raise ValueError("l_th must be non-decreasing")

    @classmethod
    def for_levels(cls, levels: Sequence[PerformanceLevel], t_sys_ms: float = 1.0, l_th=()) -> "PlThresholds":
        return cls(tuple(pl.capacity(t_sys_ms) for pl in levels if pl.kind == "full"), tuple(l_th))


@dataclass(frozen=True)
class WorkloadEstimate:
    c: float
    estimation_overhead: float
    n_spikes: int
    n_syn: int


def estimate_workload_exact(fifo: Iterable[int], row_table: RowTable, costs: WorkloadCosts,
                            n_neur: int) -> WorkloadEstimate:
    """Total cycles for this timestep from the queued spikes' fan-outs."""
    sources = np.fromiter((int(s) for s in fifo), dtype=np.int64)
    known = row_table.has_entries(sources)
    if not known.all():
        raise RoutingConfigurationError(f"no synapse row for source {int(sources[~known][0])}")
    l = int(sources.size)
    n_syn = int(row_table.length[sources].sum()) if l else 0
    c = n_neur * costs.c_neur + n_syn * costs.c_syn + l * costs.c_pre_spike + costs.c_other
    return WorkloadEstimate(c, l * costs.c_est, l, n_syn)


def select_pl_exact(c: float, c_th: Sequence[float]) -> int:
    """Lowest level whose capacity exceeds ``c``; the top level otherwise."""
    for i, cap in enumerate(c_th[:-1]):
        if c < cap:
            return i + 1
    return len(c_th)


def select_pl_by_count(l: int, l_th: Sequence[float]) -> int:
    """Level chosen from the number of received spikes alone."""
    if l < 0:
        raise ValueError("spike count must be >= 0")
    return 1 + sum(1 for th in l_th if th <= l)


def worst_case_workload(fanouts: Sequence[int], costs: WorkloadCosts, n_neur: int) -> np.ndarray:
    """Worst-case cycles for l = 0..len(fanouts) received spikes.

    The worst case for l spikes is the l inputs with the largest fan-out.
    """
    g = np.sort(np.asarray(fanouts, dtype=np.float64))[::-1]
    base = n_neur * costs.c_neur + costs.c_other
    out = np.empty(g.size + 1)
    out[0] = base
    np.cumsum(g * costs.c_syn + costs.c_pre_spike, out=out[1:])
    out[1:] += base
    return out


def derive_worstcase_thresholds(fanouts: Sequence[int], costs: WorkloadCosts, n_neur: int,
                                capacities: Sequence[float]) -> tuple[float, ...]:
    """First spike count whose worst-case workload reaches each capacity.

    ``inf`` means the capacity is never reached by any set of inputs.
    """
    worst = worst_case_workload(fanouts, costs, n_neur)
    out = []
    for cap in capacities:
        hit = np.flatnonzero(worst >= cap)
        out.append(float(hit[0]) if hit.size else INF)
    return tuple(out)


@dataclass(frozen=True)
class TransitionConfig:
    """Power-management-controller event timing for a PL change (ns)."""

    ref_clock_period_ns: float = 10.0
    clock_disable_ns: float = 10.0
    supply_select_ns: float = 10.0
    precharge_ns: float = 60.0
    frequency_select_ns: float = 10.0
    clock_enable_ns: float = 10.0
    power_up_precharge_ns: float = 960.0
    precharge_switches: int = 31

    @property
    def supply_change_latency(self) -> float:
        return (self.clock_disable_ns + self.supply_select_ns + self.precharge_ns
                + self.frequency_select_ns + self.clock_enable_ns)

    @property
    def power_up_latency(self) -> float:
        return (self.clock_disable_ns + self.supply_select_ns + self.power_up_precharge_ns
                + self.frequency_select_ns + self.clock_enable_ns)

    @property
    def frequency_change_latency(self) -> float:
        return self.frequency_select_ns + self.clock_enable_ns


def transition_latency(from_pl: PerformanceLevel | None, to_pl: PerformanceLevel,
                       config: TransitionConfig = TransitionConfig()) -> float:
    """Latency in ns; ``from_pl=None`` means power-up from shut-off."""
    if from_pl is None:
        return config.power_up_latency
    if from_pl == to_pl:
        return 0.0
    if from_pl.voltage == to_pl.voltage:
        return config.frequency_change_latency
    return config.supply_change_latency


# --- calibration ---------------------------------------------------------------


class CalibrationError(ValueError):
    pass


@dataclass
class CalibrationTarget:
    """One core's fan-outs with the spike-count thresholds it should produce."""

    name: str
    fanouts: np.ndarray
    n_neur: int
    capacities: tuple[float, ...]
    l_th: tuple[float, ...]
    exact: bool = True


@dataclass
class CalibrationResult:
    costs: WorkloadCosts
    achieved: dict[str, tuple[float, ...]]
    residuals: dict[str, tuple[float, ...]]
    margin: float
    resolution: float  # grid the costs were rounded to; 0 for the raw LP optimum
    notes: list[str] = field(default_factory=list)

    @property
    def exact(self) -> bool:
        return all(all(r == 0 for r in res) for res in self.residuals.values())


def _constraint_rows(target: CalibrationTarget, c_other: float, margin_cycles: float):
    """Linear rows ``a @ (c_neur, c_syn, c_pre) <= b`` for one target.

    Returned as (a, b, kind) with kind 'lo' (must stay below capacity) or
    'hi' (must reach capacity); the caller adds slack/margin columns.
    """
    g = np.sort(np.asarray(target.fanouts, dtype=np.float64))[::-1]
    csum = np.concatenate([[0.0], np.cumsum(g)])
    rows = []
    for cap, th in zip(target.capacities, target.l_th):
        if th == INF:
            l = g.size
            rows.append((np.array([target.n_neur, csum[l], l]), cap - c_other - margin_cycles, "lo"))
            continue
        th = int(th)
        if th > g.size:
            raise CalibrationError(f"{target.name}: threshold {th} exceeds {g.size} inputs")
        if th > 0:
            l = th - 1
            rows.append((np.array([target.n_neur, csum[l], l]), cap - c_other - margin_cycles, "lo"))
        # worst(th) >= cap  <=>  -worst(th) <= -cap
        rows.append((-np.array([target.n_neur, csum[th], th]), -(cap - c_other), "hi"))
    return rows


def calibrate_costs(targets: Sequence[CalibrationTarget], c_other: float = 0.0, c_est: float = 0.0,
                    fit_workloads: Sequence[tuple[int, float, int, float]] = (),
                    prefer_round: bool = True, min_cost: float = 1.0) -> CalibrationResult:
    """Find (c_neur, c_syn, c_pre_spike) reproducing the target thresholds.

    Targets with ``exact=True`` are hard constraints; the others are met as
    closely as possible (minimum total slack) and their residuals reported.
    ``fit_workloads`` adds ``(n_neur, n_syn, n_spikes, capacity)`` workloads
    that must stay below ``capacity``. Among feasible solutions the one with
    the largest distance (in cycles) to every threshold boundary is chosen.
    """
    exact_t = [t for t in targets if t.exact]
    if len(targets) < 2:
        raise CalibrationError("calibration needs at least two (network, thresholds) targets")
    rows = []  # (a, b, soft)
    for t in targets:
        for a, b, _ in _constraint_rows(t, c_other, 1.0):
            rows.append((a, b, not t.exact))
    for n_neur, n_syn, n_spikes, cap in fit_workloads:
        rows.append((np.array([n_neur, n_syn, n_spikes], dtype=float), cap - c_other, False))

    n_soft = sum(1 for *_, soft in rows if soft)
    # phase 1: variables (c_neur, c_syn, c_pre, slack...) minimise total slack
    A, b = [], []
    k = 0
    for a, rhs, soft in rows:
        slack = np.zeros(n_soft)
        if soft:
            slack[k] = -1.0
            k += 1
        A.append(np.concatenate([a, slack]))
        b.append(rhs)
    A = np.array(A)
    b = np.array(b)
    scale = np.abs(A).max(axis=1, keepdims=True)
    cost1 = np.concatenate([np.zeros(3), np.ones(n_soft)])
    bounds = [(min_cost, None)] * 3 + [(0, None)] * n_soft
    res1 = linprog(cost1, A_ub=A / scale, b_ub=b / scale.ravel(), bounds=bounds, method="highs")
    if res1.status != 0:
        raise CalibrationError(
            "exact targets are infeasible: " + ", ".join(t.name for t in exact_t) + f" ({res1.message})"
        )
    slack_total = float(res1.fun)

    # phase 2: fix slack budget, maximise the margin t to every boundary of exact rows
    A2, b2 = [], []
    for (a, rhs, soft), row in zip(rows, A):
        A2.append(np.concatenate([row, [0.0 if soft else 1.0]]))
        b2.append(rhs)
    A2.append(np.concatenate([np.zeros(3), np.ones(n_soft), [0.0]]))
    b2.append(slack_total * (1 + 1e-9) + 1e-6)
    A2 = np.array(A2)
    b2 = np.array(b2)
    scale2 = np.abs(A2[:, :3]).max(axis=1, keepdims=True)
    scale2[scale2 == 0] = 1.0
    cost2 = np.concatenate([np.zeros(3 + n_soft), [-1.0]])
    res2 = linprog(cost2, A_ub=A2 / scale2, b_ub=b2 / scale2.ravel(),
                   bounds=bounds + [(0, None)], method="highs")
    x = res2.x[:3] if res2.status == 0 else res1.x[:3]

    def evaluate(xv):
        costs = WorkloadCosts(float(xv[0]), float(xv[1]), float(xv[2]), c_other, c_est)
        achieved, residuals = {}, {}
        for t in targets:
            got = derive_worstcase_thresholds(t.fanouts, costs, t.n_neur, t.capacities)
            achieved[t.name] = got
            residuals[t.name] = tuple(
                0.0 if g == w else (g - w if math.isfinite(g) and math.isfinite(w) else INF)
                for g, w in zip(got, t.l_th)
            )
        fits = all(n * xv[0] + c_other + s * xv[1] + l * xv[2] < cap for n, s, l, cap in fit_workloads)
        return costs, achieved, residuals, fits

    def margin_of(xv):
        m = INF
        for t in exact_t:
            for a, rhs, _ in _constraint_rows(t, c_other, 0.0):
                m = min(m, rhs - float(a @ xv))
        return m

    def score(xv):
        _, _, residuals, fits = evaluate(xv)
        ok_exact = all(all(r == 0 for r in residuals[t.name]) for t in exact_t)
        soft = sum(abs(r) for t in targets if not t.exact for r in residuals[t.name])
        return ok_exact and fits, soft, margin_of(xv)

    best_x, resolution = np.asarray(x, dtype=float), 0.0
    if prefer_round:
        ok0, soft0, _ = score(best_x)
        # coarsest grid on which a rounded neighbour still satisfies every hard constraint
        for step in (1.0, 0.5, 0.1, 0.01):
            candidates = []
            base = np.round(x / step) * step
            for d in itertools.product(range(-2, 3), repeat=3):
                xi = np.round(np.maximum(base + step * np.array(d), min_cost), 6)
                ok, soft, m = score(xi)
                if ok:
                    candidates.append((soft, -m, tuple(xi)))
            if candidates:
                candidates.sort()
                soft_i, _, xi = candidates[0]
                if not ok0 or soft_i <= soft0:
                    best_x, resolution = np.array(xi), step
                    break

    costs, achieved, residuals, _ = evaluate(best_x)
    result = CalibrationResult(costs, achieved, residuals, margin_of(best_x), resolution)
    if not all(all(r == 0 for r in residuals[t.name]) for t in exact_t):
        raise CalibrationError(f"calibration could not reproduce exact targets: {residuals}")
    for t in targets:
        if not t.exact and any(r != 0 for r in residuals[t.name]):
            result.notes.append(f"{t.name}: residual {residuals[t.name]}")
    return result
