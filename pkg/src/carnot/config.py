"""Experiment configuration: one JSON document, overridable from the command line."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .groups import NAMED_GROUPS
from .modulus import parse_rhs

COMMANDS = ("group-check", "taylor", "solve", "lemmas", "cascade", "schauder", "report")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    group: str = "h1"
    rhs: str = "holder:0.5"
    n: int = 33
    kmax: int = 5
    seed: int = 42
    trials: int = 1000
    degree: int = 2
    mode: str = "manufactured"
    out: str = "runs/out"
    inputs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.group not in NAMED_GROUPS:
            raise ConfigError(f"unknown group {self.group!r}; choose from {sorted(NAMED_GROUPS)}")
        try:
            parse_rhs(self.rhs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("n", "kmax", "seed", "trials", "degree"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be an integer")
        if self.n < 9:
            raise ConfigError("n must be at least 9")
        if self.kmax < 0 or self.trials < 1 or self.degree < 0:
            raise ConfigError("kmax, trials and degree must be nonnegative (trials positive)")
        if self.mode not in ("manufactured", "solved"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inputs"] = list(self.inputs)
        return d

    def digest(self) -> str:
        """Hash of everything except the output location."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def build_config(command: str, document: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge a JSON document with command-line overrides (which win)."""
    known = {f.name for f in fields(ExperimentConfig)} - {"command"}
    document = dict(document or {})
    named = document.pop("command", command)
    if named != command:
        raise ConfigError(f"config is for {named!r}, not {command!r}")
    merged: dict = {}
    for source in document, (overrides or {}):
        unknown = set(source) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        merged.update({k: v for k, v in source.items() if v is not None})
    merged["command"] = command
    if "inputs" in merged:
        merged["inputs"] = tuple(merged["inputs"])
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_document(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc
