import json

import pytest

from recipe_rl.config import ConfigError, data_path, dump_kv, load_kv, parse_kv, read_json, write_json


def test_parse_kv_with_comments_and_blank_lines():
    text = "# header\n\nR = 8.314  # J/(mol K)\nk_0=7\n"
    assert parse_kv(text) == {"R": 8.314, "k_0": 7.0}


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("R 8.314", "expected 'name = value'"),
        ("R = 1\nR = 2", "duplicate"),
        ("R = abc", "not a number"),
        ("2x = 1", "invalid key"),
    ],
)
def test_parse_kv_rejects_malformed(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_kv(text, source="f.txt")


def test_dump_then_parse_roundtrip():
    values = {"a": 0.1, "b": -3e-7, "c": 12345.678}
    assert parse_kv(dump_kv(values, header="unit test")) == values


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(ConfigError, match="nope.txt"):
        load_kv(tmp_path / "nope.txt")


def test_shipped_data_files_parse():
    for name in ("reactor_params.txt", "initial_conditions.txt", "cascade.txt", "expert_boxes.txt", "baseline_recipe.txt"):
        assert load_kv(data_path(name))


def test_json_helpers(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [1.5]})
    assert read_json(tmp_path / "a.json") == {"a": [1.5], "b": 1}
    assert list(json.loads((tmp_path / "a.json").read_text())) == ["a", "b"]
    (tmp_path / "bad.json").write_text("{oops")
    with pytest.raises(ConfigError):
        read_json(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        read_json(tmp_path / "missing.json")
