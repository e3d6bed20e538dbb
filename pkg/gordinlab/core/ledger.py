from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

logger = logging.getLogger(__name__)


@dataclass
class LedgerEntry:
    experiment_id: str
    experiment: str
    config: Dict[str, object]
    verdicts: List[Dict[str, object]] = field(default_factory=list)
    passed: bool = False
    wall_clock: float = 0.0
    started_at: str = ""
    artifacts: List[str] = field(default_factory=list)


class ResultsLedger:
    """Record of experiment runs, persisted as ``<output_dir>/ledger.json``.

    Runs are only ever appended; re-running a config adds a new entry under the
    same experiment id. An unreadable ledger is renamed to ``ledger.json.corrupt``
    (numbered if that exists) and a fresh one is started. Read and write errors
    propagate."""

    FILE_NAME = "ledger.json"

    def __init__(self, output_dir: Path) -> None:
        self._file_path = Path(output_dir) / self.FILE_NAME
        self._file_path.parent.mkdir(parents=True, exist_ok=True)
        self._entries = self._load()

    @property
    def path(self) -> Path:
        return self._file_path

    def entries(self, experiment_id: str | None = None) -> List[LedgerEntry]:
        if experiment_id is None:
            return list(self._entries)
        return [e for e in self._entries if e.experiment_id == experiment_id]

    def append(self, entry: LedgerEntry) -> None:
        self._entries.append(entry)
        self._save()

    def _load(self) -> List[LedgerEntry]:
        if not self._file_path.exists():
            return []
        raw = self._file_path.read_bytes()
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            moved = self._move_aside()
            logger.warning("Could not load ledger from %s: %s; moved it to %s", self._file_path, e, moved)
            return []

        entries: List[LedgerEntry] = []
        for value in payload.get("runs", []) if isinstance(payload, dict) else []:
            if not isinstance(value, dict):
                continue
            entries.append(
                LedgerEntry(
                    experiment_id=str(value.get("experiment_id", "")),
                    experiment=str(value.get("experiment", "")),
                    config=dict(value.get("config", {})),
                    verdicts=list(value.get("verdicts", [])),
                    passed=bool(value.get("passed", False)),
                    wall_clock=float(value.get("wall_clock", 0.0)),
                    started_at=str(value.get("started_at", "")),
                    artifacts=[str(a) for a in value.get("artifacts", [])],
                )
            )
        return entries

    def _save(self) -> None:
        self._file_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"runs": [asdict(e) for e in self._entries]}
        try:
            self._file_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        except OSError as e:
            logger.error("Could not save ledger to %s: %s", self._file_path, e)
            raise

    def _move_aside(self) -> Path:
        target = self._file_path.with_name(self.FILE_NAME + ".corrupt")
        index = 1
        while target.exists():
            target = self._file_path.with_name(f"{self.FILE_NAME}.corrupt.{index}")
            index += 1
        self._file_path.replace(target)
        return target
