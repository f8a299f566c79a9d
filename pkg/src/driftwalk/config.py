"""Experiment configuration: ``[section]`` headers and ``key = value`` lines.

Keys are snake-case and must appear in :data:`SCHEMA`; anything else is an
error that names the offending line and key.  ``render`` writes a canonical
form, so ``parse_config(render(c)) == c``, and the config hash is the
SHA-256 of that canonical form without the output directory.
"""

import hashlib
import os
import re
from dataclasses import dataclass, field

from .exceptions import ConfigParseError

KINDS = (
    "simulate",
    "returns",
    "mass-profile",
    "occupation",
    "sd-check",
    "counterexample-mass",
    "counterexample-empirical",
    "lyapunov",
    "drift-eval",
    "drift-check",
    "equidistribute",
)

# section -> key -> value type
SCHEMA = {
    "experiment": {"kind": "str", "seed": "int", "out": "str"},
    "chain": {
        "model": "str",
        "increments": "floats",
        "probs": "floats",
        "floor": "float",
        "x0": "float",
        "r0": "float",
        "lambda1": "float",
        "probes": "floats",
        "z0_values": "floats",
        "z0_weights": "floats",
        "z1_values": "floats",
        "z1_weights": "floats",
        "horizon": "int",
        "slack": "float",
        "confidence": "float",
        "epsilon": "float",
    },
    "schedule": {
        "jumps": "ints",
        "levels": "int",
        "checkpoint_trials": "int",
        "r": "float",
        "epsilon": "float",
        "horizon": "int",
    },
    "measure": {
        "name": "str",
        "d": "int",
        "file": "path",
        "basis": "str",
        "a": "float",
        "a0": "float",
        "exponents": "floats",
        "lyapunov_steps": "int",
        "lyapunov_trials": "int",
        "lam": "float",
        "lambda1": "float",
        "r": "float",
        "n": "int",
        "calibrate": "bool",
    },
    "grid": {
        "n": "ints",
        "r": "floats",
        "trials": "int",
        "steps": "int",
        "count": "int",
        "samples": "int",
        "radius": "float",
        "tolerance": "float",
        "epsilon": "float",
        "threshold": "float",
    },
}

REQUIRED = (("experiment", "kind"), ("experiment", "seed"))
_KEY = re.compile(r"^[a-z][a-z0-9_]*$")
_SECTION = re.compile(r"^\[([a-z][a-z0-9_]*)\]$")
_PATH_KEYWORDS = {"standard", "generic"}


def _parse_value(kind, text):
    text = text.strip()
    if kind == "str" or kind == "path":
        if not text:
            raise ValueError("empty value")
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind in ("floats", "ints"):
        parts = [p.strip() for p in text.split(",")]
        if not all(parts):
            raise ValueError("empty list entry")
        conv = int if kind == "ints" else float
        return tuple(conv(p) for p in parts)
    raise AssertionError(kind)


def _render_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_render_value(x) for x in v)
    return str(v)


@dataclass
class ExperimentConfig:
    """Parsed configuration.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    seed : int
    out : str
        Output directory (excluded from the hash).
    values : dict
        ``(section, key) -> value`` for every other key that was set.
    base_dir : str
        Directory that relative file paths are resolved against.
    """

    kind: str
    seed: int
    out: str = "out"
    values: dict = field(default_factory=dict)
    base_dir: str = field(default=".", compare=False)

    def get(self, section, key, default=None):
        if (section, key) not in _known():
            raise KeyError(f"{section}.{key} is not a config key")
        return self.values.get((section, key), default)

    def path(self, section, key, default=None):
        """A file-valued key resolved against ``base_dir``."""
        v = self.get(section, key, default)
        if v is None or v in _PATH_KEYWORDS:
            return v
        return v if os.path.isabs(v) else os.path.join(self.base_dir, v)

    def with_overrides(self, seed=None, out=None):
        return ExperimentConfig(self.kind, self.seed if seed is None else int(seed),
                                self.out if out is None else out, dict(self.values), self.base_dir)

    @property
    def hash(self):
        return config_hash(self)


def _known():
    return {(s, k) for s, keys in SCHEMA.items() for k in keys}


def parse_config(text, base_dir=".", overrides=None, check_files=True):
    """Parse config text; ``overrides`` maps ``experiment`` keys to values applied before validation."""
    section = None
    seen = {}
    lines = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section [{section}]", line=no)
            continue
        if line.startswith("["):
            raise ConfigParseError(f"malformed section header {line!r}", line=no)
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', found {line!r}", line=no)
        key, value = (p.strip() for p in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigParseError(f"key {key!r} is not snake-case", line=no, key=key)
        if section is None:
            raise ConfigParseError(f"key {key!r} appears before any [section]", line=no, key=key)
        if key not in SCHEMA[section]:
            raise ConfigParseError(f"unknown key {key!r} in [{section}]", line=no, key=key)
        if (section, key) in seen:
            raise ConfigParseError(f"duplicate key {key!r} in [{section}]", line=no, key=key)
        try:
            seen[(section, key)] = _parse_value(SCHEMA[section][key], value)
        except ValueError as exc:
            raise ConfigParseError(f"bad value for {key!r}: {exc}", line=no, key=key) from None
        lines[(section, key)] = no
    for k, v in (overrides or {}).items():
        if v is not None:
            seen[("experiment", k)] = v
    for sec, key in REQUIRED:
        if (sec, key) not in seen:
            raise ConfigParseError(f"missing required key {key!r} in [{sec}]", key=key)
    kind = seen.pop(("experiment", "kind"))
    if kind not in KINDS:
        raise ConfigParseError(f"unknown experiment kind {kind!r}", line=lines.get(("experiment", "kind")),
                               key="kind")
    seed = seen.pop(("experiment", "seed"))
    if seed < 0:
        raise ConfigParseError("seed must be non-negative", line=lines.get(("experiment", "seed")), key="seed")
    out = seen.pop(("experiment", "out"), "out")
    cfg = ExperimentConfig(kind, seed, out, seen, base_dir)
    if check_files:
        for (sec, key), kind_ in ((k, SCHEMA[k[0]][k[1]]) for k in seen):
            if kind_ == "path" or (sec, key) == ("measure", "basis"):
                p = cfg.path(sec, key)
                if p not in _PATH_KEYWORDS and not os.path.exists(p):
                    raise ConfigParseError(f"file not found: {p}", line=lines.get((sec, key)), key=key)
    return cfg


def load_config(path, overrides=None):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)


def render(cfg, include_out=True):
    """Canonical text form: sections in schema order, keys sorted."""
    head = {"kind": cfg.kind, "seed": cfg.seed}
    if include_out:
        head["out"] = cfg.out
    blocks = ["[experiment]\n" + "".join(f"{k} = {_render_value(v)}\n" for k, v in sorted(head.items()))]
    for sec in SCHEMA:
        if sec == "experiment":
            continue
        items = sorted((k, v) for (s, k), v in cfg.values.items() if s == sec)
        if items:
            blocks.append(f"[{sec}]\n" + "".join(f"{k} = {_render_value(v)}\n" for k, v in items))
    return "\n".join(blocks)


def config_hash(cfg):
    """First 16 hex digits of the SHA-256 of the canonical form without ``out``."""
    return hashlib.sha256(render(cfg, include_out=False).encode()).hexdigest()[:16]
