"""Experiment configuration files (TOML, or YAML by extension)."""

from __future__ import annotations

import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional

import yaml

from gordinlab.core.catalog import ExperimentCatalog
from gordinlab.core.errors import ConfigError, DomainError
from gordinlab.core.maps import BUILTIN_OBSERVABLES, MapDescriptor

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"experiment", "master_seed", "output_dir", "map", "observable", "params"}
MAP_KEYS = {"kind", "gamma", "fiber_contraction", "fiber_rate"}
OBSERVABLE_KEYS = {"name"}
MAX_SEED = 2**64


def _positive_int(minimum: int) -> Callable[[object], Optional[str]]:
    def check(value: object) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            return f"must be an integer >= {minimum}"
        return None

    return check


def _power_of_two(value: object) -> Optional[str]:
    problem = _positive_int(2)(value)
    if problem:
        return problem
    if value & (value - 1):
        return "must be a power of two"
    return None


def _real_in(low: float, high: float, closed_low: bool = False) -> Callable[[object], Optional[str]]:
    def check(value: object) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return "must be a number"
        ok_low = value >= low if closed_low else value > low
        if not (ok_low and value <= high):
            left = "[" if closed_low else "("
            return f"must lie in {left}{low}, {high}]"
        return None

    return check


def _one_of(*choices: str) -> Callable[[object], Optional[str]]:
    def check(value: object) -> Optional[str]:
        if value not in choices:
            return f"must be one of {', '.join(choices)}"
        return None

    return check


def _boolean(value: object) -> Optional[str]:
    return None if isinstance(value, bool) else "must be true or false"


PARAM_RULES: Dict[str, Callable[[object], Optional[str]]] = {
    "n": _positive_int(1),
    "replicas": _positive_int(2),
    "J": _positive_int(1),
    "k": _positive_int(1),
    "ell": _positive_int(1),
    "epsilon": _real_in(0.0, 0.1),
    "grid_n": _power_of_two,
    "samples_per_cell": _positive_int(32),
    "n_max": _positive_int(8),
    "K": _real_in(0.0, 16.0),
    "burn_in": _positive_int(0),
    "chains": _positive_int(2),
    "chain_length": _positive_int(16),
    "n_fine": _positive_int(1),
    "points": _positive_int(1),
    "t_end": _real_in(0.0, 100.0),
    "nu_low": _real_in(0.0, 1.0, closed_low=True),
    "nu_high": _real_in(0.0, 1.0),
    "degeneracy_tol": _real_in(0.0, 1.0),
    "model": _one_of("proposition", "identity", "linear", "constant_drift"),
    "convention": _one_of("proposition", "literal_half"),
    "method": _one_of("exact_quadrature", "binned"),
    "dump_operator": _boolean,
    "repetitions": _positive_int(1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    map: MapDescriptor
    observable: str
    params: Dict[str, object]
    master_seed: int = 0
    output_dir: Path = Path("results")
    raw: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def experiment_id(self) -> str:
        """Hash of everything that determines the numeric payload."""
        return hashlib.sha256(canonical_json(self.echo()).encode("utf-8")).hexdigest()[:16]

    def echo(self) -> Dict[str, object]:
        return {
            "experiment": self.experiment,
            "master_seed": self.master_seed,
            "map": {
                "kind": self.map.kind.value,
                "gamma": self.map.gamma,
                "fiber_contraction": self.map.fiber_contraction,
                "fiber_rate": self.map.fiber_rate,
            },
            "observable": {"name": self.observable},
            "params": dict(sorted(self.params.items())),
        }

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[Path] = None) -> "ExperimentConfig":
        if seed is not None:
            _check_seed(seed)
        return ExperimentConfig(
            experiment=self.experiment,
            map=self.map,
            observable=self.observable,
            params=self.params,
            master_seed=self.master_seed if seed is None else seed,
            output_dir=self.output_dir if output_dir is None else Path(output_dir),
            raw=self.raw,
        )


def canonical_json(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _check_seed(seed: object) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not (0 <= seed < MAX_SEED):
        raise ConfigError(f"master_seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def _reject_unknown(section: str, keys, allowed) -> None:
    unknown = sorted(set(keys) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def read_config_file(path: Path) -> Dict[str, object]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        if path.suffix in (".yaml", ".yml"):
            raw = yaml.safe_load(text)
        else:
            raw = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path.name}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path.name}: expected a table of settings")
    return raw


def parse_config(raw: Dict[str, object], catalog: Optional[ExperimentCatalog] = None) -> ExperimentConfig:
    catalog = catalog or ExperimentCatalog()
    _reject_unknown("config", raw.keys(), TOP_LEVEL_KEYS)
    name = raw.get("experiment")
    if not isinstance(name, str):
        raise ConfigError("missing or invalid 'experiment'")
    experiment = catalog.get(name)

    map_raw = raw.get("map", {"kind": "doubling"})
    if not isinstance(map_raw, dict):
        raise ConfigError("'map' must be a table")
    _reject_unknown("map", map_raw.keys(), MAP_KEYS)
    try:
        desc = MapDescriptor(
            kind=map_raw.get("kind", "doubling"),
            gamma=float(map_raw.get("gamma", 0.0)),
            fiber_contraction=float(map_raw.get("fiber_contraction", 0.5)),
            fiber_rate=str(map_raw.get("fiber_rate", "geometric")),
        )
    except (DomainError, ValueError, TypeError) as e:
        raise ConfigError(f"map: {e}") from e

    obs_raw = raw.get("observable", {"name": "x_centered"})
    if not isinstance(obs_raw, dict):
        raise ConfigError("'observable' must be a table")
    _reject_unknown("observable", obs_raw.keys(), OBSERVABLE_KEYS)
    observable = obs_raw.get("name", "x_centered")
    if observable not in BUILTIN_OBSERVABLES:
        raise ConfigError(f"observable: unknown name {observable!r}")

    user_params = raw.get("params", {})
    if not isinstance(user_params, dict):
        raise ConfigError("'params' must be a table")
    allowed = set(experiment.parameters) | set(experiment.defaults)
    _reject_unknown(f"params of {name}", user_params.keys(), allowed)
    params = {**experiment.defaults, **user_params}
    for key, value in params.items():
        rule = PARAM_RULES.get(key)
        if rule is None:
            raise ConfigError(f"params: no range rule for {key!r}")
        problem = rule(value)
        if problem:
            raise ConfigError(f"params.{key} {problem}, got {value!r}")
    if "nu_low" in params and "nu_high" in params and params["nu_low"] >= params["nu_high"]:
        raise ConfigError("params.nu_low must be below params.nu_high")

    return ExperimentConfig(
        experiment=name,
        map=desc,
        observable=observable,
        params=params,
        master_seed=_check_seed(raw.get("master_seed", 0)),
        output_dir=Path(str(raw.get("output_dir", "results"))),
        raw=dict(raw),
    )


def load_config(path: Path, catalog: Optional[ExperimentCatalog] = None) -> ExperimentConfig:
    cfg = parse_config(read_config_file(path), catalog)
    logger.info("loaded %s config from %s (id %s)", cfg.experiment, path, cfg.experiment_id)
    return cfg
