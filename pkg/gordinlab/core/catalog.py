from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from gordinlab.core.errors import ConfigError


@dataclass(frozen=True)
class Experiment:
    key: str
    name: str
    title: str
    anchor: str
    parameters: List[str]
    defaults: Dict[str, object] = field(default_factory=dict)


class ExperimentCatalog:
    def __init__(self, base_dir: Optional[Path] = None) -> None:
        self._base_dir = base_dir or Path(__file__).resolve().parent.parent / "data" / "experiments"
        self._experiments = self._load_experiments()

    def all(self) -> List[Experiment]:
        return list(self._experiments.values())

    def names(self) -> List[str]:
        return [e.name for e in self._experiments.values()]

    def get(self, name: str) -> Experiment:
        for experiment in self._experiments.values():
            if experiment.name == name:
                return experiment
        raise ConfigError(f"unknown experiment {name!r}; run 'list' for the catalog")

    def render(self) -> str:
        lines = []
        for e in self._experiments.values():
            lines.append(f"{e.name:<18} {e.title}")
            lines.append(f"{'':<18} verifies: {e.anchor}")
            lines.append(f"{'':<18} parameters: {', '.join(e.parameters)}")
        return "\n".join(lines)

    def _load_experiments(self) -> Dict[str, Experiment]:
        base_dir = self._base_dir
        if not base_dir.exists():
            raise FileNotFoundError(f"Experiments directory not found: {base_dir}")

        experiments: Dict[str, Experiment] = {}

        def _sort_key(p: Path) -> tuple[int, str]:
            m = re.match(r"^experiment(\d+)$", p.stem)
            if m:
                return (int(m.group(1)), p.stem)
            return (10**9, p.stem)

        for path in sorted(base_dir.glob("experiment*.yaml"), key=_sort_key):
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
            if not raw or not isinstance(raw, dict):
                raise ValueError(f"{path.name}: expected YAML with 'name', 'title', 'anchor' and 'parameters'")
            name = raw.get("name")
            title = raw.get("title")
            anchor = raw.get("anchor")
            if not name or not isinstance(name, str):
                raise ValueError(f"{path.name}: missing or invalid 'name'")
            if not title or not isinstance(title, str):
                raise ValueError(f"{path.name}: missing or invalid 'title'")
            if not anchor or not isinstance(anchor, str):
                raise ValueError(f"{path.name}: missing or invalid 'anchor'")
            params = raw.get("parameters")
            if isinstance(params, str):
                params = [p.strip() for p in params.split(",")]
            if not params or not isinstance(params, list):
                raise ValueError(f"{path.name}: 'parameters' must list at least one entry")
            defaults = raw.get("defaults") or {}
            if not isinstance(defaults, dict):
                raise ValueError(f"{path.name}: 'defaults' must be a mapping")
            experiments[path.stem] = Experiment(
                key=path.stem,
                name=name.strip(),
                title=title.strip(),
                anchor=anchor.strip(),
                parameters=[str(p).strip() for p in params if str(p).strip()],
                defaults=dict(defaults),
            )

        if not experiments:
            raise ValueError("No experiment files (experiment*.yaml) found in data/experiments")
        return experiments
