"""Tests for the shared config and file helpers"""

import json

import pytest

from config_loader import (
    LayeredConfig,
    get_env,
    load_env,
    load_config_file,
    merge_configs,
    parse_key_value,
    validate_config,
)
from utils import atomic_write_text, format_float, save_json


def test_parse_key_value():
    text = """
    # run file
    n = 16
    output-dir = out   # trailing comment
    ra = 0, 10
    """
    assert parse_key_value(text) == {"n": "16", "output_dir": "out", "ra": "0, 10"}


def test_parse_key_value_rejects_bare_words():
    with pytest.raises(ValueError, match="Line 2"):
        parse_key_value("n = 4\nsolve\n")


def test_load_config_file_by_suffix(tmp_path):
    as_json = tmp_path / "run.json"
    as_json.write_text(json.dumps({"n": 8, "ra": [1, 2]}))
    as_text = tmp_path / "run.cfg"
    as_text.write_text("n = 8\n")
    assert load_config_file(as_json) == {"n": 8, "ra": [1, 2]}
    assert load_config_file(as_text) == {"n": "8"}


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "absent.cfg")


def test_json_must_be_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        load_config_file(path)


def test_merge_skips_none():
    merged = merge_configs({"n": 4, "nested": {"a": 1}}, {"n": None, "nested": {"b": 2}, "ra": 3})
    assert merged == {"n": 4, "nested": {"a": 1, "b": 2}, "ra": 3}


def test_validate_config_collects_messages():
    schema = {"type": "object", "properties": {"n": {"type": "integer", "minimum": 2}}}
    validate_config({"n": 3}, schema)
    with pytest.raises(ValueError, match="n: 1 is less than the minimum of 2"):
        validate_config({"n": 1}, schema)


def test_layered_precedence(tmp_path, monkeypatch):
    path = tmp_path / "run.cfg"
    path.write_text("n = 64\n")
    monkeypatch.setenv("FEM_N", "16")
    monkeypatch.setenv("FEM_EPSILON", "1e-6")
    layered = LayeredConfig({"n": 8, "epsilon": 1e-8, "workers": 1}, path)
    assert layered.get("n") == "64"
    assert layered.get("epsilon") == "1e-6"
    assert layered.get("workers") == 1
    assert layered.get("missing", "fallback") == "fallback"
    assert layered.as_dict() == {"n": "64", "epsilon": "1e-6", "workers": 1}


def test_atomic_write_replaces(tmp_path):
    path = tmp_path / "sub" / "out.txt"
    atomic_write_text(path, "first")
    atomic_write_text(path, "second")
    assert path.read_text() == "second"
    assert [p.name for p in path.parent.iterdir()] == ["out.txt"]


def test_json_helpers(tmp_path):
    path = tmp_path / "data.json"
    save_json({"rate": 1.0}, path)
    assert json.loads(path.read_text()) == {"rate": 1.0}


def test_format_float_round_trips():
    value = 0.1 + 0.2
    assert float(format_float(value)) == value


def test_get_env_prefix(monkeypatch):
    monkeypatch.setenv("FEM_MAX_ITERATIONS", "7")
    assert get_env("max_iterations") == "7"
    assert get_env("max_iterations", prefix="OTHER_") is None


def test_load_env_file_does_not_override(tmp_path, monkeypatch):
    env_file = tmp_path / ".env"
    env_file.write_text("FEM_N=12\nFEM_RA=3\n", encoding="utf-8")
    monkeypatch.setenv("FEM_N", "20")
    monkeypatch.setenv("FEM_RA", "0")
    monkeypatch.delenv("FEM_RA")
    assert load_env(env_file)
    assert get_env("n") == "20"
    assert get_env("ra") == "3"
