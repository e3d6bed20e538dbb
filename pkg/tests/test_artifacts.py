"""Tests for gordinlab.cli.artifacts – CSV/JSON artifact files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from gordinlab.cli.artifacts import ArtifactWriter, component_header, matrix_header, to_jsonable
from gordinlab.core.errors import ConfigError


@pytest.fixture()
def writer(tmp_path: Path) -> ArtifactWriter:
    return ArtifactWriter(tmp_path, "abc123", provenance={"experiment": "sigma", "master_seed": 5})


class TestJsonable:
    def test_numpy_values(self):
        out = to_jsonable({"a": np.array([[1.0, 2.0]]), "b": np.int64(3), "c": np.bool_(True)})
        assert out == {"a": [[1.0, 2.0]], "b": 3, "c": True}

    def test_non_finite(self):
        assert to_jsonable([float("inf"), np.float64("nan")]) == ["inf", "nan"]

    def test_paths_and_keys(self):
        assert to_jsonable({1: Path("x/y")}) == {"1": "x/y"}


class TestArtifactWriter:
    def test_csv_provenance_and_rows(self, writer: ArtifactWriter):
        path = writer.csv("values.csv", ["lag", "C00"], [(0, np.float64(0.25)), (1, 0.1)])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == ["# experiment=sigma", "# master_seed=5", "lag,C00", "0,0.25", "1,0.1"]

    def test_json_sorted(self, writer: ArtifactWriter):
        path = writer.json("report.json", {"b": 1, "a": np.array([0.5])})
        text = path.read_text(encoding="utf-8")
        assert json.loads(text) == {"a": [0.5], "b": 1}
        assert text.index('"a"') < text.index('"b"')

    def test_binary(self, writer: ArtifactWriter):
        path = writer.binary("blob.bin", lambda p: p.write_bytes(b"\x00\x01"))
        assert path.read_bytes() == b"\x00\x01"

    def test_relative(self, writer: ArtifactWriter):
        writer.json("a.json", {})
        writer.csv("b.csv", ["x"], [])
        assert writer.relative() == ["abc123/a.json", "abc123/b.csv"]

    @pytest.mark.parametrize("name", ["../escape.csv", "sub/dir.csv", "", ".."])
    def test_rejects_non_plain_names(self, writer: ArtifactWriter, name: str):
        with pytest.raises(ConfigError):
            writer.csv(name, ["x"], [])


def test_headers():
    assert component_header("W", 2) == ["W0", "W1"]
    assert matrix_header("WW", 2) == ["WW00", "WW01", "WW10", "WW11"]
