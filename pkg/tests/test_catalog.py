"""Tests for gordinlab.core.catalog – YAML-based experiment catalog."""

from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from gordinlab.core.catalog import Experiment, ExperimentCatalog
from gordinlab.core.errors import ConfigError


EXPERIMENT_NAMES = [
    "diagnose-gordin",
    "decompose",
    "wip",
    "iterated-wip",
    "sigma",
    "homogenise",
    "inequality-suite",
    "robustness",
]


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture()
def experiments_dir(tmp_path: Path) -> Path:
    d = tmp_path / "data" / "experiments"
    d.mkdir(parents=True)
    return d


def _write_yaml(directory: Path, name: str, data: dict) -> None:
    (directory / f"{name}.yaml").write_text(yaml.dump(data, allow_unicode=True), encoding="utf-8")


def _entry(name: str, **extra) -> dict:
    data = {"name": name, "title": f"{name} title", "anchor": f"{name} anchor", "parameters": ["n"]}
    data.update(extra)
    return data


# ---------------------------------------------------------------------------
# Happy path
# ---------------------------------------------------------------------------

class TestCatalogHappy:
    def test_loads_single(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha"))
        catalog = ExperimentCatalog(experiments_dir)
        assert catalog.names() == ["alpha"]
        e = catalog.get("alpha")
        assert isinstance(e, Experiment)
        assert e.key == "experiment0"
        assert e.parameters == ["n"]
        assert e.defaults == {}

    def test_numeric_sort_order(self, experiments_dir: Path):
        for i in (10, 2, 0, 1):
            _write_yaml(experiments_dir, f"experiment{i}", _entry(f"e{i}"))
        assert ExperimentCatalog(experiments_dir).names() == ["e0", "e1", "e2", "e10"]

    def test_parameters_as_string(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha", parameters="n, replicas , J"))
        assert ExperimentCatalog(experiments_dir).get("alpha").parameters == ["n", "replicas", "J"]

    def test_defaults(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha", defaults={"n": 10, "burn_in": 5}))
        assert ExperimentCatalog(experiments_dir).get("alpha").defaults == {"n": 10, "burn_in": 5}

    def test_render(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha"))
        text = ExperimentCatalog(experiments_dir).render()
        assert "alpha" in text
        assert "verifies: alpha anchor" in text
        assert "parameters: n" in text


# ---------------------------------------------------------------------------
# Error cases
# ---------------------------------------------------------------------------

class TestCatalogErrors:
    def test_missing_directory(self, tmp_path: Path):
        with pytest.raises(FileNotFoundError):
            ExperimentCatalog(tmp_path / "nope")

    def test_empty_directory(self, experiments_dir: Path):
        with pytest.raises(ValueError, match="No experiment files"):
            ExperimentCatalog(experiments_dir)

    def test_not_a_mapping(self, experiments_dir: Path):
        (experiments_dir / "experiment0.yaml").write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected YAML"):
            ExperimentCatalog(experiments_dir)

    @pytest.mark.parametrize("field", ["name", "title", "anchor"])
    def test_missing_field(self, experiments_dir: Path, field: str):
        data = _entry("alpha")
        del data[field]
        _write_yaml(experiments_dir, "experiment0", data)
        with pytest.raises(ValueError, match=f"experiment0.yaml: missing or invalid '{field}'"):
            ExperimentCatalog(experiments_dir)

    def test_empty_parameters(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha", parameters=[]))
        with pytest.raises(ValueError, match="parameters"):
            ExperimentCatalog(experiments_dir)

    def test_defaults_not_mapping(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha", defaults=[1, 2]))
        with pytest.raises(ValueError, match="defaults"):
            ExperimentCatalog(experiments_dir)

    def test_unknown_name(self, experiments_dir: Path):
        _write_yaml(experiments_dir, "experiment0", _entry("alpha"))
        with pytest.raises(ConfigError, match="unknown experiment 'beta'"):
            ExperimentCatalog(experiments_dir).get("beta")


# ---------------------------------------------------------------------------
# Bundled catalog
# ---------------------------------------------------------------------------

class TestBundledCatalog:
    def test_eight_experiments_in_order(self):
        assert ExperimentCatalog().names() == EXPERIMENT_NAMES

    def test_every_entry_has_anchor_and_parameters(self):
        for e in ExperimentCatalog().all():
            assert e.anchor
            assert e.parameters
