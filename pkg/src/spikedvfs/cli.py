"""Command-line entry point.

Exit codes: 0 ok, 1 usage error, 2 configuration error, 3 runtime error.
Every command that writes files also writes ``manifest.json`` listing the
resolved configuration, seeds and a sha256 of each emitted file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .benchmarks import BUILDERS, build_async, build_bursting
from .config import ConfigError, load_run_config, parse_run_config
from .dvfs import PL_SETS, CalibrationError, CalibrationTarget, calibrate_costs
from .energy import reports_to_csv
from .harness import (
    DEFAULT_COSTS,
    VARIANTS,
    exploration_csv,
    explore_architectures,
    histogram_csv,
    parse_policy,
    pl_time_histogram,
    raster_csv,
    records_csv,
    run,
    run_decomposition,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST_VERSION = 1

log = logging.getLogger("spikedvfs")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _policy(value: str) -> str:
    try:
        parse_policy(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return value


def _pl_set(value: str) -> str:
    if value not in PL_SETS:
        raise argparse.ArgumentTypeError(f"unknown PL set {value!r}; choose from {sorted(PL_SETS)}")
    return value


def _variants(value: str) -> list[str]:
    names = [v.strip() for v in value.split(",") if v.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty variant list")
    bad = [v for v in names if v not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variants {bad}; choose from {sorted(VARIANTS)}")
    return names


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    run_id: str
    seeds: dict
    out_dir: str
    resolved: dict
    files: dict[str, str] = field(default_factory=dict)

    def add(self, out: Path, name: str, text: str) -> None:
        data = text.encode()
        (out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def write(self, out: Path) -> None:
        d = {"manifest_version": MANIFEST_VERSION, "tool_version": __version__, **self.__dict__}
        (out / "manifest.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def _run_id(command: str, resolved: dict) -> str:
    blob = json.dumps({"command": command, **resolved}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _prepare(args, command: str, **overrides):
    cfg = getattr(args, "run_config", None) or load_run_config(args.config)
    sim = cfg.sim_with(**overrides)
    net = cfg.build_network()
    resolved = {"network": cfg.network, "network_sha256": hashlib.sha256(net.to_json().encode()).hexdigest(),
                "sim": sim.to_dict()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command, str(args.config), _run_id(command, resolved),
                           {"sim": sim.seed, "network": net.seed}, str(out), resolved)
    return cfg, sim, net, out, manifest


def cmd_generate(args) -> int:
    params = {"seed": args.seed}
    net = BUILDERS[args.network](**params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save(out)
    print(f"wrote {out} ({net.source.size} synapses, {net.n_neurons} neurons)")
    return EXIT_OK


def cmd_run(args) -> int:
    _, sim, net, out, manifest = _prepare(args, "run", policy=args.policy, pl_set=args.pl_set,
                                          seed=args.seed, k_max=args.k_max)
    result = run(net, sim)
    manifest.resolved["bin_width"] = args.bin_width
    manifest.run_id = _run_id("run", manifest.resolved)
    manifest.add(out, "raster.csv", raster_csv(result.raster, sim.t_sys_ms))
    manifest.add(out, "cycles.csv", records_csv(result.records))
    manifest.add(out, "histogram.csv", histogram_csv(pl_time_histogram(result.records, args.bin_width)))
    manifest.add(out, "energy.csv", reports_to_csv([result.report]))
    manifest.add(out, "energy.json", result.report.to_json() + "\n")
    manifest.write(out)
    rep = result.report
    violations = sum(r.deadline_violation for r in result.records)
    print(f"{rep.label}: PE {rep.pe:.2f} mW (baseline {rep.baseline:.2f}, neuron {rep.neuron:.2f}, "
          f"synapse {rep.synapse:.2f}), deadline violations {violations}")
    return EXIT_OK


def cmd_explore(args) -> int:
    cfg, sim, net, out, manifest = _prepare(args, "explore", seed=args.seed, k_max=args.k_max)
    if args.variants is not None:
        cfg.variants = args.variants
    variants = cfg.variant_objects()
    if not variants:
        raise ConfigError("empty variant list")
    manifest.resolved["variants"] = [v.name for v in variants]
    manifest.run_id = _run_id("explore", manifest.resolved)
    rows = explore_architectures(net, sim, variants, workers=args.workers)
    manifest.add(out, "exploration.csv", exploration_csv(rows))
    manifest.write(out)
    for r in rows:
        print(f"{r.variant:>14}: PE {r.pe:6.2f} mW, reduction {r.reduction_pct:5.1f} %")
    return EXIT_OK


def cmd_decompose(args) -> int:
    _, sim, net, out, manifest = _prepare(args, "decompose", policy=args.policy, seed=args.seed,
                                          k_max=args.k_max)
    report, _ = run_decomposition(net, sim)
    manifest.add(out, "decomposition.csv", reports_to_csv([report]))
    manifest.add(out, "decomposition.json", report.to_json() + "\n")
    manifest.write(out)
    print(f"{report.label}: PE {report.pe:.2f} mW, E/SynEvent (PE) {report.e_per_syn_event_pe:.3f} nJ")
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-run a recorded command from its manifest alone."""
    try:
        m = json.loads(Path(args.manifest).read_text())
        resolved, command = m["resolved"], m["command"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"unreadable manifest {args.manifest}: {exc}") from None
    if command not in ("run", "explore", "decompose"):
        raise ConfigError(f"cannot replay command {command!r}")
    cfg = parse_run_config({"network": resolved["network"], "sim": resolved["sim"],
                            "variants": resolved.get("variants", [])}, Path(m.get("config_path") or ".").parent)
    ns = argparse.Namespace(config=m.get("config_path"), run_config=cfg, out=args.out, seed=None, k_max=None,
                            policy=None, pl_set=None, bin_width=resolved.get("bin_width", 0.05), variants=None, workers=1)
    rc = COMMANDS[command](ns)
    if rc == EXIT_OK and args.check:
        out = Path(args.out)
        for name, digest in m["files"].items():
            got = hashlib.sha256((out / name).read_bytes()).hexdigest()
            if got != digest:
                print(f"replay mismatch: {name}", file=sys.stderr)
                return EXIT_RUNTIME
        print(f"replay matches {len(m['files'])} files")
    return rc


def cmd_calibrate(args) -> int:
    caps = (125000.0, 333000.0)
    bursting, async_ = build_bursting(seed=args.seed), build_async(seed=args.seed)
    targets = [
        CalibrationTarget("bursting", bursting.fanouts(args.core), bursting.neurons_per_core, caps, (47, 214), True),
        CalibrationTarget("async", async_.fanouts(args.core), async_.neurons_per_core, caps, (47, 229), False),
    ]
    result = calibrate_costs(targets, c_other=args.c_other, c_est=args.c_est,
                             fit_workloads=[(80, 80 * 50, 50, caps[0])])
    payload = {"costs": result.costs.to_dict(),
               "achieved": {k: list(v) for k, v in result.achieved.items()},
               "margin_cycles": result.margin, "resolution": result.resolution, "notes": result.notes}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "explore": cmd_explore, "decompose": cmd_decompose}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spikedvfs", description="Spiking-network simulator with per-core DVFS energy accounting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="build a benchmark network and save it as JSON")
    g.add_argument("network", choices=sorted(BUILDERS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    def common(sp, policy=True):
        sp.add_argument("config", help="run configuration JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--k-max", type=int, dest="k_max")
        sp.add_argument("--out", required=True, help="output directory")
        if policy:
            sp.add_argument("--policy", type=_policy, help="count, exact or fixed:<PL>")

    r = sub.add_parser("run", help="simulate and write raster, cycle records, histogram and energy report")
    common(r)
    r.add_argument("--pl-set", type=_pl_set, dest="pl_set")
    r.add_argument("--bin-width", type=float, default=0.05, dest="bin_width")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("explore", help="compare PL-set variants against fixed peak operation")
    common(e, policy=False)
    e.add_argument("--variants", type=_variants, help="comma-separated, e.g. 1PL,2PL,3PL,3PL+DFS10MHz")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_explore)

    d = sub.add_parser("decompose", help="four-run differential power decomposition")
    common(d)
    d.set_defaults(func=cmd_decompose)

    rp = sub.add_parser("replay", help="re-run a command from its manifest.json")
    rp.add_argument("manifest")
    rp.add_argument("--out", required=True)
    rp.add_argument("--check", action="store_true", help="compare output hashes with the manifest")
    rp.set_defaults(func=cmd_replay)

    c = sub.add_parser("calibrate", help="fit clock-cycle costs to the benchmark thresholds")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--core", type=int, default=0)
    c.add_argument("--c-other", type=float, default=DEFAULT_COSTS.c_other, dest="c_other")
    c.add_argument("--c-est", type=float, default=DEFAULT_COSTS.c_est, dest="c_est")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
