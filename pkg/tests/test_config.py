import pytest

from hangstring.config import KIND_PARAMS, load_config, parse_config
from hangstring.errors import ConfigError

BASE = """
kind = "compat_check"
seed = 3
[mesh]
n = 64
[data]
generator = "chain_mode"
"""


def test_defaults_filled():
    cfg = parse_config(BASE)
    assert cfg.params == KIND_PARAMS["compat_check"]
    assert cfg.mesh.n == 64 and cfg.mesh.grading == 1.0
    resolved = cfg.resolved()
    assert resolved["kind"] == "compat_check" and "source" not in resolved


@pytest.mark.parametrize("text,msg", [
    ('kind = "nope"', "kind must be"),
    ("typo = 1\n" + BASE, "unknown top-level"),
    (BASE + "[physics]\ngravity = [0, 1]\n", "unknown key"),
    (BASE + "[params]\nbogus = 1\n", "unknown key(s) in [params]"),
    ('kind = "eigenmode"\n', "needs a [time]"),
    (BASE.replace("n = 64", "n = 2"), "mesh.n"),
    (BASE + "[time]\nT = 1.0\ndt = 2.0\n", "dt must not exceed"),
    (BASE + "[params]\ntol = -1.0\n", "positive"),
    (BASE + '[physics]\nbackground = "/no/such/file.csv"\n', "not found"),
    ('kind = "epsilon_sweep"\n[time]\nT=1.0\ndt=0.1\n[params]\neps_list = [0.1, 0.2]\n', "strictly decreasing"),
    ("kind = = 1", "<string>"),
])
def test_errors(text, msg):
    with pytest.raises(ConfigError, match=msg.replace("[", r"\[").replace("]", r"\]").replace("(", r"\(").replace(")", r"\)")):
        parse_config(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
