import pytest

from smokeseg.config import dump_config, parse_config_text, resolve
from smokeseg.errors import ConfigError


def test_parse_values_and_comments():
    text = "# a config\nseed=7\nmodel = VC-TrUNet-()  # flagship\n\nout=runs/x\n"
    values = parse_config_text(text)
    assert values == {"seed": "7", "model": "VC-TrUNet-()", "out": "runs/x"}


def test_parse_rejects_garbage_and_duplicates():
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        parse_config_text("a=1\na=2\n")
    with pytest.raises(ConfigError):
        parse_config_text("=value\n")


def test_resolve_merges_with_flag_priority():
    allowed = {"seed": (int, 0), "out": (str, None)}
    resolved = resolve({"seed": "3", "out": "from_file"}, {"seed": 9}, allowed)
    assert resolved == {"seed": 9, "out": "from_file"}


def test_resolve_defaults_and_unknown_keys():
    allowed = {"seed": (int, 42)}
    assert resolve({}, {}, allowed) == {"seed": 42}
    with pytest.raises(ConfigError):
        resolve({"sede": "1"}, {}, allowed)
    with pytest.raises(ConfigError):
        resolve({"seed": "not-a-number"}, {}, allowed)


def test_dump_sorted_roundtrip():
    values = {"b": 2, "a": "x"}
    text = dump_config(values)
    assert text == "a=x\nb=2\n"
    assert parse_config_text(text) == {"a": "x", "b": "2"}
