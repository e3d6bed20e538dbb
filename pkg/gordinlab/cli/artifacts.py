from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from gordinlab.core.errors import ConfigError

logger = logging.getLogger(__name__)


def to_jsonable(value: object) -> object:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if np.isfinite(f) else str(f)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def _cell(value: object) -> object:
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


class ArtifactWriter:
    """Writes one run's files under ``<output_dir>/<experiment_id>/``.

    CSV files open with ``# key=value`` provenance lines; only deterministic
    values belong there so identical configs give byte-identical files.
    """

    def __init__(self, output_dir: Path, experiment_id: str, provenance: Optional[Dict[str, object]] = None) -> None:
        self.output_dir = Path(output_dir)
        self.root = self.output_dir / experiment_id
        self.root.mkdir(parents=True, exist_ok=True)
        self.provenance = dict(provenance or {})
        self.written: List[Path] = []

    def _target(self, name: str) -> Path:
        if Path(name).name != name or name in ("", ".", ".."):
            raise ConfigError(f"artifact name {name!r} must be a plain file name")
        return self.root / name

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
        path = self._target(name)
        with path.open("w", newline="", encoding="utf-8") as f:
            for key, value in self.provenance.items():
                f.write(f"# {key}={value}\n")
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return self._record(path)

    def json(self, name: str, payload: object) -> Path:
        path = self._target(name)
        path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True), encoding="utf-8")
        return self._record(path)

    def binary(self, name: str, write: Callable[[Path], None]) -> Path:
        path = self._target(name)
        write(path)
        return self._record(path)

    def relative(self) -> List[str]:
        return [str(p.relative_to(self.output_dir)) for p in self.written]

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.debug("wrote %s", path)
        return path


def component_header(prefix: str, d: int) -> List[str]:
    return [f"{prefix}{a}" for a in range(d)]


def matrix_header(prefix: str, d: int) -> List[str]:
    return [f"{prefix}{a}{b}" for a in range(d) for b in range(d)]
