"""Run-configuration files.

A run config is a JSON object::

    {
      "schema_version": 1,
      "network": {"builder": "synfire", "params": {"seed": 0}},
      "sim": {"k_max": 10000, "policy": "count", "pl_set": "3PL", ...},
      "variants": ["1PL", "2PL", "3PL", "3PL+DFS10MHz"]
    }

``network`` either names a builder (with keyword parameters) or gives a
``path`` to a saved network JSON, resolved relative to the config file.
``sim`` holds any :class:`~spikedvfs.harness.SimConfig` field; omitted fields
take their defaults. ``variants`` is only read by ``explore``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .benchmarks import BUILDERS, NetworkSpec
from .harness import VARIANTS, SimConfig, Variant

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """The run configuration is missing, malformed or inconsistent."""


@dataclass
class RunConfig:
    network: dict
    sim: SimConfig
    sim_raw: dict = field(default_factory=dict)
    variants: list[str] = field(default_factory=list)
    base_dir: Path = Path(".")

    def build_network(self) -> NetworkSpec:
        net = self.network
        try:
            if "path" in net:
                return NetworkSpec.load(self.base_dir / net["path"])
            builder = BUILDERS[net["builder"]]
            return builder(**net.get("params", {}))
        except KeyError as exc:
            raise ConfigError(f"unknown network builder or missing key: {exc}") from None
        except (OSError, TypeError, ValueError) as exc:
            raise ConfigError(f"cannot build network: {exc}") from None

    def sim_with(self, **overrides) -> SimConfig:
        """The sim block with command-line overrides applied (None = keep)."""
        raw = dict(self.sim_raw)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SimConfig.from_dict(raw)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid sim settings: {exc}") from None

    def variant_objects(self) -> list[Variant]:
        try:
            return [VARIANTS[v] for v in self.variants]
        except KeyError as exc:
            raise ConfigError(f"unknown variant {exc}; choose from {sorted(VARIANTS)}") from None

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "network": self.network,
            "sim": self.sim.to_dict(),
            "variants": list(self.variants),
        }


def parse_run_config(d: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    version = d.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema version {version}")
    unknown = set(d) - {"schema_version", "network", "sim", "variants"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    net = d.get("network")
    if not isinstance(net, dict) or not ({"builder", "path"} & set(net)):
        raise ConfigError("config needs a network with a 'builder' or 'path'")
    raw = d.get("sim", {})
    if not isinstance(raw, dict):
        raise ConfigError("sim must be a JSON object")
    try:
        sim = SimConfig.from_dict(raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid sim block: {exc}") from None
    variants = d.get("variants", ["1PL", "2PL", "3PL", "3PL+DFS10MHz"])
    if not isinstance(variants, list):
        raise ConfigError("variants must be a list")
    return RunConfig(net, sim, dict(raw), list(variants), base_dir)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_run_config(data, path.parent)
