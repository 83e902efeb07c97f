"""Flat ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key has a default taken
from the library's config dataclasses; unknown keys are an error, and
:meth:`RunConfig.dumps` writes every key back in canonical order.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .codec import CodecConfig
from .detector import DetectorConfig
from .quant import QuantizerSpec

_OPTIONAL = {("detector", "distance"): int, ("detector", "width"): float}


def _defaults():
    sections = {
        "detector": {f.name: getattr(DetectorConfig(), f.name) for f in dataclasses.fields(DetectorConfig)},
        "codec": {f.name: getattr(CodecConfig(), f.name) for f in dataclasses.fields(CodecConfig)
                  if f.name != "quantizer"},
        "quantizer": {f.name: getattr(QuantizerSpec(), f.name) for f in dataclasses.fields(QuantizerSpec)},
        "training": {"detector_steps": 200, "codec_steps": 500},
        "eval": {"top_k": 50, "stoi": True},
    }
    return sections


DEFAULTS = _defaults()


class ConfigError(ValueError):
    pass


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _parse(section, key, text, default):
    text = text.strip()
    if (section, key) in _OPTIONAL:
        return None if text.lower() == "none" else _OPTIONAL[(section, key)](text)
    if isinstance(default, bool):
        if text.lower() not in ("true", "false"):
            raise ConfigError(f"{section}.{key}: expected true/false, got {text!r}")
        return text.lower() == "true"
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(v) for v in text.split(",") if v.strip())
    return type(default)(text)


class RunConfig:
    def __init__(self, values=None):
        self.values = {s: dict(kv) for s, kv in DEFAULTS.items()}
        for (section, key), value in (values or {}).items():
            self.set(section, key, value)

    def set(self, section, key, value):
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        self.values[section][key] = value

    def get(self, section, key):
        return self.values[section][key]

    @classmethod
    def parse(cls, text, origin="<config>"):
        cfg = cls()
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            name, eq, value = line.partition("=")
            section, dot, key = name.strip().partition(".")
            if not eq or not dot:
                raise ConfigError(f"{origin}:{n}: expected 'section.key = value', got {raw!r}")
            if section not in DEFAULTS or key not in DEFAULTS[section]:
                raise ConfigError(f"{origin}:{n}: unknown config key {section}.{key}")
            try:
                cfg.set(section, key, _parse(section, key, value, DEFAULTS[section][key]))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{origin}:{n}: bad value for {section}.{key}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config not found: {path}")
        return cls.parse(path.read_text(), str(path))

    def dumps(self):
        return "".join(f"{s}.{k} = {_fmt(v)}\n" for s, kv in self.values.items() for k, v in kv.items())

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def detector_config(self):
        return DetectorConfig(**self.values["detector"])

    def quantizer_spec(self):
        return QuantizerSpec(**self.values["quantizer"])

    def codec_config(self):
        return CodecConfig(quantizer=self.quantizer_spec(), **self.values["codec"])
