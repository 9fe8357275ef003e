"""Run configuration: flat ``section.key = value`` text or JSON.

Values are JSON literals (numbers, lists, ``true``/``false``, quoted strings);
an unquoted word is read as a string, so ``set.pattern = periodic`` works.
Lines starting with ``#`` are comments. A JSON file with the same sections as
nested objects is accepted interchangeably.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict[str, dict] = {
    "symbol": {
        "dimension": 1,
        "degree": 2,
        "coefficients": [[[2], 1.0, 0.0]],
        "s": 1.0,
        "b": [],
        "c": None,
        "omega": None,
    },
    "grid": {"n": 256, "ell": 32.0, "p": 2.0},
    "set": {"pattern": "periodic", "period": 1.0, "rho": 0.3, "cube": 1.0, "seed": 0, "path": None},
    "run": {
        "T": None,
        "r": 2.0,
        "alpha": 0.5,
        "periods": 10,
        "n_t": 64,
        "trials": 200,
        "lambda": None,
        "delta": None,
        "seed": 0,
        "t_samples": None,
        "M": 1.0,
        "cost_bound": None,
        "x0": "bump",
    },
    "regime": {
        "d0": None, "d1": None, "d2": None, "d3": None,
        "gamma1": None, "gamma2": None, "gamma3": None,
        "M": 1.0, "omega": 0.0, "norm_C": 1.0, "delta": 0.5,
        "T_hint": None, "lambda_hint": None, "case": None,
    },
    "system": {"A": None, "B": None, "n": 4, "m": 2, "seed": 0, "C": [1.0], "alpha": None, "n_dirs": 200},
}


@dataclass
class RunConfig:
    """Resolved configuration with per-key source line numbers."""

    sections: dict[str, dict] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    lines: dict[str, int] = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def where(self, key: str) -> str:
        line = self.lines.get(key)
        origin = self.source or "<config>"
        return f"{origin}:{line}: {key}" if line else f"{key}"

    def fail(self, key: str, message: str):
        raise ConfigError(f"{self.where(key)}: {message}")

    def set(self, key: str, value, line: int | None = None):
        section, _, name = key.partition(".")
        if section not in self.sections or not name:
            raise ConfigError(f"{(self.source or '<config>')}:{line}: unknown key {key!r}")
        if name not in self.sections[section]:
            raise ConfigError(f"{(self.source or '<config>')}:{line}: unknown key {key!r}")
        self.sections[section][name] = value
        if line is not None:
            self.lines[key] = line

    def to_json(self) -> str:
        return json.dumps(self.sections, sort_keys=True, separators=(",", ":"))


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if text and all(ch.isalnum() or ch in "_-./" for ch in text):
            return text
        raise


def parse_text(text: str, source: str | None = None) -> RunConfig:
    cfg = RunConfig(source=source)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source or '<config>'}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        try:
            parsed = _parse_value(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source or '<config>'}:{lineno}: {key}: malformed value ({exc.msg})") from None
        cfg.set(key, parsed, lineno)
    return cfg


def parse_json(text: str, source: str | None = None) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source or '<config>'}:{exc.lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source or '<config>'}: top level must be an object")
    cfg = RunConfig(source=source)
    for section, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{source or '<config>'}: section {section!r} must be an object")
        for name, value in body.items():
            cfg.set(f"{section}.{name}", value)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return parse_json(text, source=str(path))
    return parse_text(text, source=str(path))
