"""Registration settings. Published hyperparameters are the defaults; the rest are tagged as assumed."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from typing import Dict, Sequence, Tuple, Union

from registration_loss import LossWeights
from spatial_transform import DEFAULT_SIGMA_MM, DEFAULT_STEPS

DEFAULT_LEVELS: Tuple[Tuple[int, int, int], ...] = ((6, 6, 6), (12, 12, 12))
DEFAULT_ITERATIONS = 60
DEFAULT_FD_EPSILON = 0.1
DEFAULT_INITIAL_STEP = 0.5
DEFAULT_STEP_GROWTH = 1.5
DEFAULT_MAX_HALVINGS = 8
DEFAULT_TOLERANCE = 1e-9
DEFAULT_THREADS = int(os.environ.get("DTIREG_THREADS", "1"))

# Values stated in the source method; everything else is a local choice.
PUBLISHED_FIELDS = frozenset({"alpha", "beta", "lam", "steps", "sigma_mm"})

LevelSpec = Union[int, Sequence[int]]


def _as_triple(level: LevelSpec) -> Tuple[int, int, int]:
    triple = (level, level, level) if isinstance(level, int) else tuple(int(v) for v in level)
    if len(triple) != 3 or min(triple) < 2:
        raise ValueError(f"control grid level must have >= 2 points on each of 3 axes, got {level}")
    return triple  # type: ignore[return-value]


@dataclass(frozen=True)
class RegistrationConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    steps: int = DEFAULT_STEPS
    sigma_mm: float = DEFAULT_SIGMA_MM
    levels: Tuple[Tuple[int, int, int], ...] = DEFAULT_LEVELS
    iterations: int = DEFAULT_ITERATIONS
    initial_step: float = DEFAULT_INITIAL_STEP
    step_growth: float = DEFAULT_STEP_GROWTH
    max_halvings: int = DEFAULT_MAX_HALVINGS
    tolerance: float = DEFAULT_TOLERANCE
    fd_epsilon: float = DEFAULT_FD_EPSILON
    strict_folds: bool = True
    seed: int = 0
    threads: int = DEFAULT_THREADS
    deterministic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(_as_triple(level) for level in self.levels))
        if not self.levels:
            raise ValueError("at least one control grid level is required")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.sigma_mm <= 0:
            raise ValueError(f"sigma_mm must be > 0, got {self.sigma_mm}")
        if self.fd_epsilon <= 0:
            raise ValueError(f"fd_epsilon must be > 0, got {self.fd_epsilon}")
        if self.iterations < 0 or self.max_halvings < 0:
            raise ValueError("iterations and max_halvings must be >= 0")
        if self.initial_step <= 0 or self.step_growth < 1.0:
            raise ValueError("initial_step must be > 0 and step_growth >= 1")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    @property
    def workers(self) -> int:
        return 1 if self.deterministic else self.threads

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "alpha": self.weights.alpha,
            "beta": self.weights.beta,
            "lam": self.weights.lam,
        }
        for f in fields(self):
            if f.name == "weights":
                continue
            value = getattr(self, f.name)
            if f.name == "levels":
                value = ",".join("x".join(str(n) for n in level) for level in value)
            out[f.name] = value
        return out

    def provenance(self) -> Dict[str, str]:
        return {name: ("published" if name in PUBLISHED_FIELDS else "assumed") for name in self.as_dict()}
