"""Experiment configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..seeding import check_seed, derive, make_rng


@dataclass
class ExperimentConfig:
    name: str = "all"
    n: list = field(default_factory=lambda: [10_000])
    lam: float = 0.0
    k: list = field(default_factory=lambda: [1, 5, 20])  # offsets above J
    seed: int = 2024
    replicas: int = 200
    dt: float = 1e-4
    horizon: float = 10.0
    out: str = "reports"
    workers: int = 1
    walks: int = 50
    eps: float = 0.05
    t0: float = 0.2
    window: list | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n = [int(v) for v in np.atleast_1d(self.n)]
        self.k = [int(v) for v in np.atleast_1d(self.k)]
        check_seed(self.seed)
        if self.replicas < 1:
            raise ValueError("replicas must be positive")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")

    def stream(self, *labels: int) -> int:
        """Per-purpose seed: ``splitmix64`` chained over the labels."""
        return derive(self.seed, *labels)

    def xi(self, count: int = 256) -> np.ndarray:
        """Leaf variates shared by every skeleton built in one experiment."""
        return make_rng(self.stream(0x5E1E)).random(count)

    def fit_window(self, n: int) -> tuple[float, float]:
        if self.window is not None:
            return float(self.window[0]), float(self.window[1])
        if n == 100_000:
            return 1e2, 1e4
        return float(n) ** 0.3, float(n) ** 0.6

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = d.get("config", d)
        names = {f.name for f in fields(cls)}
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
