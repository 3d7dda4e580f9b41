"""Experiment configuration: typed model, flat text format, env overrides.

Config files are flat `key = value` lines (comments with '#').  List
values are comma-separated; per-check envelope constants use dotted keys
like `envelope.4.6 = 50`.  Unknown keys are rejected.  Environment
variables prefixed SHORTINT_ override file values; explicit CLI overrides
win over both.
"""
from __future__ import annotations

import hashlib
import json
import os
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import UsageError

EXPERIMENTS = (
    "sieve",
    "scan",
    "variance",
    "exceptional",
    "asymptotics",
    "halasz",
    "dirichlet",
    "ramare",
    "threshold",
)


def _int_like(v):
    if isinstance(v, str):
        f = float(v)
        if f != int(f):
            raise ValueError(f"{v!r} is not an integer")
        return int(f)
    if isinstance(v, float):
        if v != int(v):
            raise ValueError(f"{v!r} is not an integer")
        return int(v)
    return v


class ExperimentConfig(BaseModel):
    """One experiment run.  Field applicability varies per experiment;
    runners validate their own requirements and reject missing ones."""

    model_config = ConfigDict(extra="forbid")

    experiment: Literal[
        "sieve",
        "scan",
        "variance",
        "exceptional",
        "asymptotics",
        "halasz",
        "dirichlet",
        "ramare",
        "threshold",
    ]
    X: int | None = Field(default=None, ge=1)
    k: int = Field(default=2, ge=1, le=8)
    spec_name: str | None = None
    h_grid: list[int] = Field(default_factory=list)
    eps: float = Field(default=0.5, gt=0)
    eps0: float | None = None
    eps_prime: float | None = Field(default=None, gt=0)
    alpha: float = Field(default=1.0, gt=0, le=1.0)
    delta: float | None = Field(default=None, gt=0, lt=1)
    eta: float = Field(default=0.5, gt=0)
    t0_mode: str = "auto"
    exponents: list[float] = Field(default_factory=list)
    t_values: list[float] = Field(default_factory=list)
    t_max: float | None = Field(default=None, gt=0)
    quad_step: float | None = Field(default=None, gt=0)
    window: list[float] | None = None
    gamma: float | None = Field(default=None, gt=0)
    P: float | None = Field(default=None, ge=2)
    Q: float | None = Field(default=None, ge=2)
    H: float | None = Field(default=None, ge=1)
    Y1: int | None = Field(default=None, ge=2)
    Y2: int | None = Field(default=None, ge=2)
    seed: int = 1
    envelopes: dict[str, float] = Field(default_factory=dict)
    cache_dir: str | None = None
    out_dir: str = "out"
    threads: int = Field(default=1, ge=1, le=64)
    segment_size: int = Field(default=1 << 22, ge=1 << 12, le=1 << 26)

    _coerce_ints = field_validator("X", "Y1", "Y2", "seed", "threads", "segment_size", mode="before")(
        classmethod(lambda cls, v: _int_like(v) if v is not None else None)
    )

    @field_validator("h_grid", mode="before")
    @classmethod
    def _hg(cls, v):
        if isinstance(v, list):
            return [_int_like(x) for x in v]
        return v

    @field_validator("t0_mode")
    @classmethod
    def _t0_mode(cls, v: str) -> str:
        if v in ("auto", "zero"):
            return v
        if v.startswith("fixed:"):
            try:
                float(v.split(":", 1)[1])
            except ValueError as exc:
                raise ValueError(f"bad t0_mode {v!r}") from exc
            return v
        raise ValueError(f"t0_mode must be auto, zero, or fixed:<t> (got {v!r})")

    def t0_fixed(self) -> float | None:
        if self.t0_mode.startswith("fixed:"):
            return float(self.t0_mode.split(":", 1)[1])
        return None

    def envelope(self, tag: str, default: float) -> float:
        return self.envelopes.get(tag, default)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


_LIST_FIELDS = {"h_grid", "exponents", "t_values", "window"}


def parse_flat_config(text: str) -> dict:
    """Parse `key = value` lines into a raw dict (values still strings)."""
    raw: dict = {}
    envelopes: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise UsageError(f"config line {lineno}: empty key or value")
        if key.startswith("envelope."):
            try:
                envelopes[key[len("envelope.") :]] = float(value)
            except ValueError as exc:
                raise UsageError(f"config line {lineno}: bad envelope value") from exc
            continue
        if key in raw:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        if key in _LIST_FIELDS:
            raw[key] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            raw[key] = value
    if envelopes:
        raw["envelopes"] = envelopes
    return raw


def apply_env_overrides(raw: dict, environ=None) -> dict:
    """Overlay SHORTINT_<FIELD> environment variables onto a raw dict."""
    env = os.environ if environ is None else environ
    out = dict(raw)
    for field_name in ExperimentConfig.model_fields:
        if field_name == "envelopes":
            continue
        key = f"SHORTINT_{field_name.upper()}"
        if key in env:
            value = env[key]
            if field_name in _LIST_FIELDS:
                out[field_name] = [v.strip() for v in value.split(",") if v.strip()]
            else:
                out[field_name] = value
    return out


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a raw dict; pydantic errors become usage errors."""
    try:
        return ExperimentConfig(**raw)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )
        raise UsageError(f"invalid config: {details}") from exc


def load_config(path: str, overrides: dict | None = None, environ=None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = parse_flat_config(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    raw = apply_env_overrides(raw, environ)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(raw)
