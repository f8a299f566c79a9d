import pytest
from hypothesis import given, settings, strategies as st

from driftwalk.config import KINDS, SCHEMA, ExperimentConfig, config_hash, parse_config, render
from driftwalk.exceptions import ConfigParseError

BASIC = """\
# comment
[experiment]
kind = returns
seed = 7

[chain]
increments = -2, 1
x0 = 20
horizon = 5000
"""


def test_parse_basic():
    cfg = parse_config(BASIC)
    assert cfg.kind == "returns" and cfg.seed == 7 and cfg.out == "out"
    assert cfg.get("chain", "increments") == (-2.0, 1.0)
    assert cfg.get("chain", "horizon") == 5000
    assert cfg.get("chain", "floor", 0.0) == 0.0
    with pytest.raises(KeyError):
        cfg.get("chain", "nonsense")


def test_missing_seed_names_key():
    with pytest.raises(ConfigParseError, match="seed") as exc:
        parse_config("[experiment]\nkind = returns\n")
    assert exc.value.key == "seed"


@pytest.mark.parametrize("text, line, key", [
    ("[experiment]\nkind = returns\nseed = 1\nwobble = 3\n", 4, "wobble"),
    ("[experiment]\nkind = returns\nseed = x\n", 3, "seed"),
    ("[experiment]\nkind = returns\nseed = 1\n[chain]\nx0 = 1\nx0 = 2\n", 6, "x0"),
    ("seed = 1\n", 1, "seed"),
    ("[experiment]\nKind = returns\n", 2, "Kind"),
    ("[experiment]\nkind = nope\nseed = 1\n", 2, "kind"),
])
def test_errors_carry_line_and_key(text, line, key):
    with pytest.raises(ConfigParseError) as exc:
        parse_config(text)
    assert exc.value.line == line and exc.value.key == key
    assert str(exc.value).startswith(f"line {line}: ")


def test_unknown_section_and_garbage():
    with pytest.raises(ConfigParseError, match="unknown section"):
        parse_config("[physics]\n")
    with pytest.raises(ConfigParseError, match="expected 'key = value'"):
        parse_config("[experiment]\njust words\n")


def test_missing_file_is_an_error(tmp_path):
    text = "[experiment]\nkind = lyapunov\nseed = 1\n[measure]\nname = file\nfile = nope.csv\n"
    with pytest.raises(ConfigParseError, match="file not found") as exc:
        parse_config(text, base_dir=str(tmp_path))
    assert exc.value.key == "file" and exc.value.line == 6
    (tmp_path / "nope.csv").write_text("1,0\n0,1\nweight=1\n")
    cfg = parse_config(text, base_dir=str(tmp_path))
    assert cfg.path("measure", "file") == str(tmp_path / "nope.csv")


def test_overrides():
    cfg = parse_config("[experiment]\nkind = returns\n", overrides={"seed": 3, "out": "x"})
    assert cfg.seed == 3 and cfg.out == "x"


def test_hash_ignores_out_but_not_values():
    a = parse_config(BASIC)
    assert config_hash(a) == config_hash(a.with_overrides(out="elsewhere"))
    assert config_hash(a) != config_hash(a.with_overrides(seed=8))
    assert len(config_hash(a)) == 16


def _value(kind):
    return {
        "str": st.sampled_from(["walk", "sl2", "elementary", "file", "a-b_1"]),
        "path": st.sampled_from(["standard", "generic"]),
        "int": st.integers(0, 10**9),
        "float": st.floats(allow_nan=False, allow_infinity=False),
        "bool": st.booleans(),
        "floats": st.lists(st.floats(allow_nan=False), min_size=1, max_size=4).map(tuple),
        "ints": st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=4).map(tuple),
    }[kind]


keys = [(s, k, t) for s, ks in SCHEMA.items() if s != "experiment" for k, t in ks.items()]


@st.composite
def configs(draw):
    chosen = draw(st.lists(st.sampled_from(keys), unique=True, max_size=8))
    values = {(s, k): draw(_value(t)) for s, k, t in chosen}
    return ExperimentConfig(draw(st.sampled_from(KINDS)), draw(st.integers(0, 2**63)),
                            draw(st.sampled_from(["out", "runs/a"])), values)


@settings(max_examples=200)
@given(configs())
def test_render_parse_round_trip(cfg):
    assert parse_config(render(cfg), check_files=False) == cfg
