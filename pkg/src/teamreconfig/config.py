"""Flat ``key = value`` experiment configuration.

Unknown keys are rejected. List values are comma-separated; box corners are
three comma-separated numbers. ``c_min``/``c_max`` default to ``d_s``/``d_mc``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .core import GeometryParams
from .formation import AnnealParams


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # geometry
    d_s: float = 0.5
    d_mc: float = 1.0
    c_min: float | None = None
    c_max: float | None = None
    ne: int = 2
    box_min: tuple[float, float, float] = (-2.0, -2.0, 0.0)
    box_max: tuple[float, float, float] = (2.0, 2.0, 2.0)
    threshold: int = 1
    max_escalations: int = 3
    # annealing
    steps: int = 20_000
    t_start: float = 1.0
    t_end: float = 1e-8
    h_start: float = 1.0
    h_end: float = 1e3
    delta_max: float | None = None
    max_restarts: int = 5
    acceptance: str = "metropolis"
    # scenario
    n: int = 7
    r: int = 3
    # random-edge comparison
    n_min: int = 3
    n_max: int = 30
    r_min: int = 3
    r_max: int = 20
    p_r: list[float] = field(default_factory=lambda: [20.0, 50.0, 80.0])
    trials: int = 200
    bins: int = 50
    # hindsight comparison
    hindsight_n: list[int] = field(default_factory=lambda: [5, 10, 20])
    hindsight_r: int = 6
    hindsight_trials: int = 30
    # run control
    seed: int = 0
    out: str = "out"
    workers: int = 1

    def validate(self) -> None:
        try:
            self.geometry()
            self.anneal()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.bins < 1:
            raise ConfigError("bins must be at least 1")
        if self.trials < 0 or self.hindsight_trials < 0:
            raise ConfigError("trial counts must be nonnegative")
        if not 2 <= self.n_min <= self.n_max or not 1 <= self.r_min <= self.r_max:
            raise ConfigError("invalid n/r ranges")
        if self.n < 2 or self.r < 1 or self.threshold < 1:
            raise ConfigError("scenario needs n >= 2, r >= 1, threshold >= 1")
        if any(not 0 < p <= 100 for p in self.p_r):
            raise ConfigError("p_r values must lie in (0, 100]")
        if self.workers < 1 or self.max_escalations < 0 or self.seed < 0:
            raise ConfigError("workers >= 1, max_escalations >= 0 and seed >= 0 required")

    def geometry(self) -> GeometryParams:
        return GeometryParams(
            d_s=self.d_s,
            d_mc=self.d_mc,
            c_min=self.d_s if self.c_min is None else self.c_min,
            c_max=self.d_mc if self.c_max is None else self.c_max,
            ne=self.ne,
            box_min=self.box_min,
            box_max=self.box_max,
        )

    def anneal(self, seed: int | None = None) -> AnnealParams:
        return AnnealParams(
            steps=self.steps,
            t_start=self.t_start,
            t_end=self.t_end,
            h_start=self.h_start,
            h_end=self.h_end,
            delta_max=self.delta_max,
            max_restarts=self.max_restarts,
            seed=self.seed if seed is None else seed,
            acceptance=self.acceptance,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = str(_FIELDS[key].type)
    raw = raw.strip()
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    if key in ("box_min", "box_max"):
        vals = tuple(float(v) for v in raw.split(","))
        if len(vals) != 3:
            raise ValueError("expected three comma-separated numbers")
        return vals
    if kind.startswith("list[float]"):
        return [float(v) for v in raw.split(",") if v.strip()]
    if kind.startswith("list[int]"):
        return [int(v) for v in raw.split(",") if v.strip()]
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        try:
            setattr(cfg, key, _convert(key, raw))
        except ValueError as exc:
            raise ConfigError(f"line {no}: bad value for {key}: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
        cfg.validate()
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, (list, tuple)):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif v is None:
            v = "none"
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"
