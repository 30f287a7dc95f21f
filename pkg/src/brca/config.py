"""Run configuration: flat dotted ``key = value`` text.

Grammar, one entry per line::

    # comment
    seed = 7
    model.grid.m = 8
    model.operator.kind = random_iid
    command.n_list = [400, 1600, 3200]
    output.dir = "reports"

Keys are dotted identifiers.  Values are read as JSON when possible
(numbers, ``true``/``false``, quoted strings, lists) and otherwise kept as the
raw text.  A key may appear only once per file.  Top-level keys are ``seed``
and ``threads``; everything else lives under ``model.``, ``command.`` or
``output.``.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .models import MODEL_DEFAULTS

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
SECTIONS = ("model", "command", "output")
TOP_LEVEL = ("seed", "threads")
OUTPUT_DEFAULTS = {"dir": "brca_out", "formats": ["json", "csv"]}
SEED_ENV = "BRCA_SEED"


def parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY.match(key):
            raise ConfigError(f"{source}:{lineno}: malformed key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value.strip())
    return out


def _check_key(key: str):
    if not _KEY.match(key):
        raise ConfigError(f"malformed key {key!r}")
    head, _, rest = key.partition(".")
    if not rest:
        if key not in TOP_LEVEL:
            raise ConfigError(f"{key}: unknown top-level key (expected one of {', '.join(TOP_LEVEL)})")
        return
    if head not in SECTIONS:
        raise ConfigError(f"{key}: unknown section {head!r} (expected one of {', '.join(SECTIONS)})")
    if head == "model" and rest not in MODEL_DEFAULTS:
        raise ConfigError(f"{key}: unknown model key")
    if head == "output" and rest not in OUTPUT_DEFAULTS:
        raise ConfigError(f"{key}: unknown output key (expected dir or formats)")


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    command: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))
    seed: int = 0
    threads: int | None = None

    def set(self, key: str, value):
        _check_key(key)
        head, _, rest = key.partition(".")
        if not rest:
            if key == "seed":
                self.seed = _as_seed(value, key)
            else:
                if value is not None and (not isinstance(value, int) or value < 1):
                    raise ConfigError(f"threads: must be a positive integer, got {value!r}")
                self.threads = value
            return
        getattr(self, head)[rest] = value

    def flat(self) -> dict:
        """Effective configuration as sorted flat keys."""
        d = {"seed": self.seed}
        if self.threads is not None:
            d["threads"] = self.threads
        for sec in SECTIONS:
            for k, v in getattr(self, sec).items():
                d[f"{sec}.{k}"] = v
        return dict(sorted(d.items()))

    @property
    def formats(self) -> list:
        f = self.output.get("formats", OUTPUT_DEFAULTS["formats"])
        if isinstance(f, str):
            f = [x.strip() for x in f.split(",") if x.strip()]
        bad = [x for x in f if x not in ("json", "csv")]
        if bad:
            raise ConfigError(f"output.formats: unknown format(s) {bad} (choose json, csv)")
        return list(f)


def _as_seed(value, key="seed") -> int:
    if isinstance(value, str):
        try:
            value = int(value, 0)
        except ValueError:
            raise ConfigError(f"{key}: seed must be an integer, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
        raise ConfigError(f"{key}: seed must be a 64-bit nonnegative integer, got {value!r}")
    return value


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    """Config file, then ``BRCA_SEED``, then ``overrides`` (``(key, value)`` pairs)."""
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        for k, v in parse_text(text, str(path)).items():
            cfg.set(k, v)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg.seed = _as_seed(env[SEED_ENV], SEED_ENV)
    for k, v in overrides:
        cfg.set(k, v)
    return cfg


def parse_override(text: str):
    """``key=value`` from the command line."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, _, value = text.partition("=")
    return key.strip(), parse_value(value.strip())
